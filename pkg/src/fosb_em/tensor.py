"""Second-moment tensor equations and the sparse combination technique.

A moment block ``Sigma`` at level pair ``(l1, l2)`` solves
``Z_l1 Sigma Z_l2^H = C`` with ``C = sum_r w_r g_r^(l1) (g_r^(l2))^H``.
Two solvers are provided: GMRES on the vectorised unknown (the Kronecker
operator is never formed) and, for low-rank data, the exact factored form
``Sigma = sum_r w_r (Z_l1^-1 g_r)(Z_l2^-1 g_r)^H`` which only needs
ordinary solves. Blocks are recombined in far-field space.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .geometry import KITE_FIELD, SurfaceMesh
from .solve import SolverError, gmres
from .spaces import ScalarSurfaceField, normal_component

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# index sets


@dataclass(frozen=True)
class IndexSets:
    L0: int
    L: int
    plus: tuple
    minus: tuple
    hermitian: bool = False

    def blocks(self):
        """``(l1, l2, sign, multiplicity)`` for every block to be solved."""
        out = []
        for sign, members in ((1, self.plus), (-1, self.minus)):
            for l1, l2 in members:
                if self.hermitian:
                    if l1 < l2:
                        continue
                    out.append((l1, l2, sign, 1 if l1 == l2 else 2))
                else:
                    out.append((l1, l2, sign, 1))
        return out


def build_index_sets(L0: int, L: int, hermitian: bool = False) -> IndexSets:
    if not (0 <= L0 <= L):
        raise ValueError(f"need 0 <= L0 <= L, got L0={L0}, L={L}")

    def diag(s):
        return tuple((l1, s - l1) for l1 in range(L0, L + 1) if L0 <= s - l1 <= L)

    return IndexSets(L0, L, diag(L + L0), diag(L + L0 - 1), hermitian)


# ---------------------------------------------------------------------------
# covariance factorisation

# Fichera spline bumps: half periods of sin stretched over supports of
# length 0.5/(q+1), q ordered (2, 4, 6, 6, 4, 2), centres spread evenly so
# every support lies inside [0, 0.5].
FICHERA_Q = (2, 4, 6, 6, 4, 2)


def _bump_supports():
    out = []
    for i, q in enumerate(FICHERA_Q):
        ell = 0.5 / (q + 1)
        c = ell / 2 + i / 5 * (0.5 - ell)
        out.append((c - ell / 2, ell))
    return out


def fichera_bump(i: int, x: np.ndarray) -> np.ndarray:
    a, ell = _bump_supports()[i]
    s = (np.asarray(x, dtype=float) - a) / ell
    return np.where((s >= 0) & (s <= 1), np.abs(np.sin(np.pi * s)), 0.0)


def on_fichera_top(x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    return np.abs(np.asarray(x)[..., 2] - 0.5) < tol


@dataclass
class CovarianceFactorization:
    """``M2[v_n](x1, x2) = sum_r w_r phi_r(x1) phi_r(x2)``.

    ``phis[r](mesh)`` returns the vertex values of ``phi_r``.
    """

    weights: np.ndarray
    phis: list
    name: str = "custom"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.phis),):
            raise ValueError("one weight per factor")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    @property
    def rank(self) -> int:
        return len(self.phis)

    def fields(self, mesh: SurfaceMesh) -> list:
        return [ScalarSurfaceField(mesh, np.asarray(phi(mesh), dtype=float)) for phi in self.phis]

    def kernel(self, mesh: SurfaceMesh) -> np.ndarray:
        """Vertex matrix of the covariance kernel."""
        Phi = np.stack([f.values for f in self.fields(mesh)])
        return (Phi * self.weights[:, None]).T @ Phi


def _kite_phi(mesh):
    return normal_component(mesh, KITE_FIELD).values


def _fichera_phi(i, j):
    def phi(mesh):
        v = mesh.vertices
        return np.where(on_fichera_top(v), fichera_bump(i, v[:, 0]) * fichera_bump(j, v[:, 1]), 0.0)

    return phi


def factorize_covariance(model: Union[str, Sequence]) -> CovarianceFactorization:
    """Named models ``kite-rank1`` and ``fichera-splines`` or a list of ``(w, phi)``."""
    if isinstance(model, str):
        if model == "kite-rank1":
            return CovarianceFactorization(np.array([1.0 / 3.0]), [_kite_phi], model)
        if model == "fichera-splines":
            phis = [_fichera_phi(i, j) for i in range(6) for j in range(6)]
            return CovarianceFactorization(np.full(36, 1.0 / 3.0), phis, model)
        raise ValueError(f"unknown covariance model {model!r}")
    pairs = list(model)
    return CovarianceFactorization([w for w, _ in pairs], [p for _, p in pairs])


# ---------------------------------------------------------------------------
# moment blocks


@dataclass
class MomentBlock:
    """``Sigma`` at ``(l1, l2)``, stored densely or as weighted factors ``U diag(w) V^H``."""

    l1: int
    l2: int
    sign: int = 1
    iterations: int = 0
    sigma: Optional[np.ndarray] = None
    U: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    multiplicity: int = 1
    seconds: float = 0.0

    @property
    def shape(self):
        if self.sigma is not None:
            return self.sigma.shape
        return (self.U.shape[0], self.V.shape[0])

    def dense(self) -> np.ndarray:
        if self.sigma is not None:
            return self.sigma
        return (self.U * self.w) @ self.V.conj().T

    def observe(self, P1: np.ndarray, P2: np.ndarray) -> np.ndarray:
        """``P1 Sigma P2^H`` without forming ``Sigma`` when factored."""
        if self.sigma is not None:
            return P1 @ self.sigma @ P2.conj().T
        A = P1 @ self.U
        B = P2 @ self.V
        return (A * self.w) @ B.conj().T


def assemble_moment_rhs(weights, g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """``C = sum_r w_r g1_r g2_r^H`` with ``g1 (R, N1)``, ``g2 (R, N2)``."""
    g1 = np.atleast_2d(g1)
    g2 = np.atleast_2d(g2)
    w = np.asarray(weights, dtype=float)
    return (g1.T * w) @ g2.conj()


def _as_apply(Z) -> Callable:
    if callable(Z):
        return Z
    Z = np.asarray(Z)
    return lambda v: Z @ v


def _as_apply_h(Z) -> Callable:
    if callable(Z):
        raise TypeError("vectorised moment solves need matrices for the right factor")
    ZH = np.asarray(Z).conj().T
    return lambda X: X @ ZH


def solve_moment_block(Z1, Z2, C: np.ndarray, tol: float = 1e-8, max_iter: int = 2000,
                       restart: Optional[int] = None, l1: int = 0, l2: int = 0, sign: int = 1) -> MomentBlock:
    """GMRES on ``X -> Z1 X Z2^H`` acting on the vectorised unknown."""
    A1 = _as_apply(Z1)
    Z2H = np.asarray(Z2).conj().T

    def apply(X):
        return A1(X) @ Z2H

    X, it, res = gmres(apply, np.asarray(C, dtype=complex), tol=tol, max_iter=max_iter, restart=restart)
    return MomentBlock(l1, l2, sign, it, sigma=X)


def solve_moment_block_factored(solve1: Callable, solve2: Callable, weights, g1, g2,
                                l1: int = 0, l2: int = 0, sign: int = 1) -> MomentBlock:
    """Exact factored solution for ``C = sum_r w_r g1_r g2_r^H``.

    ``solve_l(B)`` must return ``(Z_l^-1 B, iterations)`` for columns ``B``.
    The recorded iteration count is the largest over the factor solves.
    """
    U, it1 = solve1(np.atleast_2d(g1).T)
    V, it2 = (U, it1) if solve2 is solve1 and g2 is g1 else solve2(np.atleast_2d(g2).T)
    return MomentBlock(l1, l2, sign, max(it1, it2), U=U, V=V, w=np.asarray(weights, dtype=float))


def solve_full_tensor(Z, C: np.ndarray, tol: float = 1e-8, max_iter: int = 2000, level: int = 0,
                      restart: Optional[int] = None) -> MomentBlock:
    return solve_moment_block(Z, Z, C, tol, max_iter, restart, level, level)


# ---------------------------------------------------------------------------
# recombination and accounting


@dataclass
class ObservableCovariance:
    """Covariance of the far-field derivative over ``(angle, component)``."""

    matrix: np.ndarray
    clamped: float = 0.0

    @property
    def variances(self) -> np.ndarray:
        """Per-angle variances, shape ``(n_angles, 3)``, tiny negatives clamped to zero."""
        d = self.matrix.diagonal().real
        return np.maximum(d, 0.0).reshape(-1, 3)

    def hermitian_defect(self) -> float:
        M = self.matrix
        return float(np.linalg.norm(M - M.conj().T) / max(np.linalg.norm(M), 1e-300))


def combine_ct(blocks: Sequence[MomentBlock], P: dict, t: float = 1.0,
               sets: Optional[IndexSets] = None) -> ObservableCovariance:
    """Signed sum of ``P_l1 Sigma P_l2^H``; Hermitian representatives add their adjoint."""
    if sets is not None:
        need = {(l1, l2) for l1, l2, _, _ in sets.blocks()}
        have = {(b.l1, b.l2) for b in blocks}
        missing = need - have
        if missing:
            raise ValueError(f"missing moment blocks {sorted(missing)}")
    M = None
    for b in blocks:
        O = b.observe(P[b.l1], P[b.l2])
        if b.multiplicity == 2:
            O = O + O.conj().T
        M = b.sign * O if M is None else M + b.sign * O
    M = M * t**2
    M = 0.5 * (M + M.conj().T)
    d = M.diagonal().real
    scale = max(float(np.abs(d).max()), 1e-300)
    clamped = float(max(0.0, -d.min())) / scale
    if clamped > 0:
        log.info("negative variance diagonal clamped (relative %.2e)", clamped)
    return ObservableCovariance(M, clamped)


def efficiency_metrics(N: Sequence[int], sets: IndexSets, hermitian: Optional[bool] = None) -> dict:
    """Dof accounting of the combination technique (exact integers)."""
    N = [int(n) for n in N]
    if any(n <= 0 for n in N):
        raise ValueError("dof counts must be positive")
    herm = sets.hermitian if hermitian is None else hermitian
    offset = sets.L0 if len(N) == sets.L - sets.L0 + 1 else 0

    def n(l):
        return N[l - offset]

    full = n(sets.L) ** 2
    all_blocks = [(l1, l2) for l1, l2 in sets.plus + sets.minus]
    solved = [(l1, l2) for l1, l2 in all_blocks if not herm or l1 >= l2]
    sizes = {(l1, l2): n(l1) * n(l2) for l1, l2 in solved}
    N_hat = sum(sizes.values())
    N_hat_all = sum(n(l1) * n(l2) for l1, l2 in all_blocks)
    N_max = max(sizes.values())
    return {
        "blocks": sizes,
        "full": full,
        "N_hat": N_hat,
        "N_hat_all": N_hat_all,
        "N_hat_max": N_max,
        "efficiency": full / N_hat,
        "efficiency_max": full / N_max,
    }
