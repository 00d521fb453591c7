"""Deterministic scattering solves: PEC (EFIE) and dielectric (PMCHWT).

The dielectric problem is solved for the total exterior Cauchy data
``xi = (gamma_D E, gamma_N E)`` from ``(A_0 + A^_1) xi = xi_inc``; this is
equivalent to the scattered-field form because ``(1/2 - A_0) xi_inc = 0``.
Far fields use ``E_sc = -H_0(j) - E_0(m)``, where the incident part radiates
nothing outside.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .geometry import SurfaceMesh
from .operators import (
    DEFAULT_QUADRATURE,
    MediumParameters,
    QuadratureOptions,
    assemble_boundary_operators,
    far_field_matrix,
    plane_directions,
    potential_fields,
)
from .quadrature import dunavant
from .spaces import DivConformingSpace, build_space

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """GMRES did not reach the tolerance; carries the best iterate."""

    def __init__(self, msg, x=None, iterations=0, residuals=None):
        super().__init__(msg)
        self.x = x
        self.iterations = iterations
        self.residuals = residuals if residuals is not None else []


@dataclass(frozen=True)
class PlaneWave:
    """``E_inc(x) = p exp(ik d.x)`` with unit ``d`` and ``p`` orthogonal to ``d``."""

    direction: np.ndarray
    polarization: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        d = d / np.linalg.norm(d)
        p = np.asarray(self.polarization, dtype=complex)
        if abs(np.dot(p, d)) > 1e-12 * max(1.0, np.linalg.norm(p)):
            raise ValueError("polarization must be orthogonal to the direction; use PlaneWave.projected")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "polarization", p)

    @classmethod
    def projected(cls, direction, polarization) -> "PlaneWave":
        """Remove the component of ``p`` along ``d`` (logged when nonzero)."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        p = np.asarray(polarization, dtype=complex)
        along = np.dot(p, d)
        if abs(along) > 1e-14:
            log.info("polarization projected orthogonal to d: removed component %s", along)
        return cls(d, p - along * d)

    def E(self, x, k):
        ph = np.exp(1j * k * (np.asarray(x) @ self.direction))
        return ph[..., None] * self.polarization

    def H(self, x, k):
        """Scaled magnetic field ``curl E / (ik) = d x p exp(ik d.x)``."""
        ph = np.exp(1j * k * (np.asarray(x) @ self.direction))
        return ph[..., None] * np.cross(self.direction, self.polarization)


@dataclass
class TraceSolution:
    """Boundary coefficients: ``j`` (PEC current or ``gamma_D`` trace) and ``m``."""

    space: DivConformingSpace
    j: np.ndarray
    m: Optional[np.ndarray] = None
    iterations: int = 0
    residuals: list = field(default_factory=list)

    @property
    def is_dielectric(self) -> bool:
        return self.m is not None

    @property
    def vector(self) -> np.ndarray:
        return self.j if self.m is None else np.concatenate([self.j, self.m])


@dataclass
class FarFieldSample:
    angles: np.ndarray
    F: np.ndarray  # (n, 3) complex

    @property
    def components(self):
        return self.F


# ---------------------------------------------------------------------------
# GMRES


def gmres(apply: Callable[[np.ndarray], np.ndarray], rhs: np.ndarray, tol: float = 1e-8,
          max_iter: int = 1000, restart: Optional[int] = None, x0=None):
    """Unpreconditioned GMRES with reorthogonalised Gram-Schmidt and Givens rotations.

    Returns ``(x, iterations, residuals)`` where ``residuals`` are relative
    residual norms ``|b - A x| / |b|`` (starting with the initial one).
    Raises :class:`SolverError` if ``max_iter`` is reached.
    """
    b = np.asarray(rhs, dtype=complex)
    shape = b.shape
    b = b.ravel()
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=complex).ravel().copy()
    if bnorm == 0.0:
        return x.reshape(shape), 0, [0.0]

    def A(v):
        # copy: the result is orthogonalised in place and may alias the input
        return np.array(apply(v.reshape(shape)), dtype=complex).ravel()

    m = max_iter if restart is None else restart
    total = 0
    r = b - A(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    residuals = [beta / bnorm]
    while True:
        if residuals[-1] <= tol:
            return x.reshape(shape), total, residuals
        V = np.empty((m + 1, b.size), complex)
        H = np.zeros((m + 1, m), complex)
        cs = np.zeros(m, complex)
        sn = np.zeros(m, complex)
        g = np.zeros(m + 1, complex)
        g[0] = beta
        V[0] = r / beta
        j_used = 0
        for j in range(m):
            w = A(V[j])
            # classical Gram-Schmidt applied twice: as stable as the modified
            # variant but runs as matrix-vector products
            Vj = V[: j + 1]
            for _ in range(2):
                h = np.conj(Vj @ np.conj(w))
                w -= h @ Vj
                H[: j + 1, j] += h
            H[j + 1, j] = np.linalg.norm(w)
            if H[j + 1, j] != 0:
                V[j + 1] = w / H[j + 1, j]
            # Givens rotations Q = [[conj(c), conj(s)], [-s, c]]
            for i in range(j):
                t = np.conj(cs[i]) * H[i, j] + np.conj(sn[i]) * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            den = np.hypot(abs(H[j, j]), abs(H[j + 1, j]))
            if den == 0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j] = H[j, j] / den
                sn[j] = H[j + 1, j] / den
            H[j, j] = den
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = np.conj(cs[j]) * g[j]
            total += 1
            j_used = j + 1
            residuals.append(abs(g[j + 1]) / bnorm)
            if residuals[-1] <= tol or total >= max_iter or H[j, j] == 0:
                break
        y = np.linalg.solve(np.triu(H[:j_used, :j_used]), g[:j_used]) if j_used else np.zeros(0)
        x = x + V[:j_used].T @ y
        if residuals[-1] <= tol:
            return x.reshape(shape), total, residuals
        if total >= max_iter:
            raise SolverError(
                f"GMRES reached {total} iterations with residual {residuals[-1]:.3e} > {tol:g}",
                x.reshape(shape), total, residuals,
            )
        r = b - A(x)
        beta = np.linalg.norm(r)
        residuals[-1] = beta / bnorm


# ---------------------------------------------------------------------------
# levels and systems


class Level:
    """One mesh level with its space, medium and lazily assembled operators."""

    def __init__(self, mesh: SurfaceMesh, params: MediumParameters, problem: str = "de",
                 quad: QuadratureOptions = DEFAULT_QUADRATURE, index: Optional[int] = None,
                 linear_solver: str = "gmres"):
        if problem not in ("pec", "de"):
            raise ValueError("problem must be 'pec' or 'de'")
        if linear_solver not in ("gmres", "direct"):
            raise ValueError("linear_solver must be 'gmres' or 'direct'")
        self.linear_solver = linear_solver
        self.mesh = mesh
        self.space = build_space(mesh)
        self.params = params
        self.problem = problem
        self.quad = quad
        self.index = index
        self._ffm = {}

    @property
    def N(self) -> int:
        return self.space.N

    @property
    def size(self) -> int:
        return self.N if self.problem == "pec" else 2 * self.N

    @cached_property
    def ops(self) -> dict:
        p = self.params
        if self.problem == "pec":
            return assemble_boundary_operators(self.space, [p.k0], mfio=False, quad=self.quad, level=self.index)
        ks = [p.k0] if p.k1 == p.k0 else [p.k0, p.k1]
        return assemble_boundary_operators(self.space, ks, quad=self.quad, level=self.index)

    def op(self, kind: str, k: float) -> np.ndarray:
        return self.ops[kind, float(k)].matrix

    def exterior_interior(self):
        p = self.params
        T0, K0 = self.op("efio", p.k0), self.op("mfio", p.k0)
        T1, K1 = self.op("efio", p.k1), self.op("mfio", p.k1)
        return T0, K0, T1, K1

    @cached_property
    def system(self) -> np.ndarray:
        """Galerkin matrix of the EFIE or of ``A_0 + A^_1``."""
        if self.problem == "pec":
            return self.op("efio", self.params.k0)
        T0, K0, T1, K1 = self.exterior_interior()
        eta = self.params.eta
        Ks = K0 + K1
        return np.block([[Ks, T0 + eta * T1], [-(T0 + T1 / eta), Ks]])

    @cached_property
    def _interior_scaled(self) -> np.ndarray:
        _, _, T1, K1 = self.exterior_interior()
        eta = self.params.eta
        return np.block([[K1, eta * T1], [-T1 / eta, K1]])

    def interior_scaled(self) -> np.ndarray:
        """Galerkin matrix of ``A^_1``."""
        return self._interior_scaled

    @cached_property
    def lu(self):
        return lu_factor(self.system)

    def solve(self, rhs: np.ndarray, tol: float, max_iter: int = 3000):
        """Solve with the level's system; multiple right-hand sides go in columns."""
        if self.linear_solver == "direct":
            x = lu_solve(self.lu, rhs)
            res = np.linalg.norm(self.system @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
            return x, 0, [float(res)]
        Z = self.system
        return gmres(lambda v: Z @ v, rhs, tol=tol, max_iter=max_iter)

    def far_field_map(self, theta: np.ndarray) -> np.ndarray:
        """Matrix mapping the unknown vector to ``F`` flattened as ``(3 n_angles)``."""
        key = np.asarray(theta).tobytes()
        if key not in self._ffm:
            k0 = self.params.k0
            d = plane_directions(theta)
            PE = far_field_matrix(self.space, k0, d, "electric")
            if self.problem == "pec":
                P = -PE
            else:
                PH = far_field_matrix(self.space, k0, d, "magnetic")
                P = np.hstack([-PH, -PE])
            self._ffm = {key: P}
        return self._ffm[key]

    def far_field(self, x: np.ndarray, theta: np.ndarray) -> FarFieldSample:
        return FarFieldSample(np.asarray(theta), (self.far_field_map(theta) @ x).reshape(-1, 3))


def assemble_excitation(space: DivConformingSpace, wave: PlaneWave, k: float, problem: str = "pec"):
    """Right-hand side ``<xi_inc, f_m>x``: ``-int E_inc.f_m`` (and ``-int H_inc.f_m``)."""
    rule = dunavant(5)
    x = space.points(rule)
    w = space.weights(rule)
    vals = space.local_values(rule)
    bE = -space.scatter(np.einsum("tq,tqd,tqid->ti", w, wave.E(x, k), vals))
    if problem == "pec":
        return bE
    bH = -space.scatter(np.einsum("tq,tqd,tqid->ti", w, wave.H(x, k), vals))
    return np.concatenate([bE, bH])


def solve_efie(level: Level, wave: PlaneWave, tol: float = 1e-8, max_iter: int = 3000) -> TraceSolution:
    if level.problem != "pec":
        raise ValueError("solve_efie needs a PEC level")
    b = assemble_excitation(level.space, wave, level.params.k0, "pec")
    x, it, res = level.solve(b, tol, max_iter)
    return TraceSolution(level.space, x, None, it, res)


def solve_pmchwt(level: Level, wave: PlaneWave, tol: float = 1e-8, max_iter: int = 3000) -> TraceSolution:
    if level.problem != "de":
        raise ValueError("solve_pmchwt needs a dielectric level")
    b = assemble_excitation(level.space, wave, level.params.k0, "de")
    x, it, res = level.solve(b, tol, max_iter)
    N = level.N
    return TraceSolution(level.space, x[:N], x[N:], it, res)


def solve(level: Level, wave: PlaneWave, tol: float = 1e-8, max_iter: int = 3000) -> TraceSolution:
    return (solve_efie if level.problem == "pec" else solve_pmchwt)(level, wave, tol, max_iter)


RCS_FLOOR = -300.0


def rcs(F, reference=1.0, return_flags: bool = False):
    """Per component radar cross section ``10 log10(4 pi |F|^2 / |F_inc|^2)`` in dB.

    Zero values (or a zero reference) are clamped to ``RCS_FLOOR`` and flagged.
    """
    F = F.F if isinstance(F, FarFieldSample) else np.asarray(F)
    ref = np.broadcast_to(np.abs(np.asarray(reference, dtype=complex)), F.shape[:1])[:, None] if np.ndim(F) == 2 else abs(reference)
    num = 4.0 * np.pi * np.abs(F) ** 2
    den = np.asarray(ref, dtype=float) ** 2
    ok = (num > 0) & (den > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(ok, 10.0 * np.log10(np.where(ok, num, 1.0) / np.where(den > 0, den, 1.0)), RCS_FLOOR)
    val = np.maximum(val, RCS_FLOOR)
    return (val, ~ok) if return_flags else val


def evaluate_field(points: np.ndarray, sol: TraceSolution, params: MediumParameters,
                   wave: Optional[PlaneWave] = None, total: bool = True, min_distance: Optional[float] = None):
    """Exterior field from the representation formula.

    PEC: ``E = E_inc - E_0(j)``. Dielectric with total traces:
    ``E = E_inc - H_0(j) - E_0(m)``, since the incident traces radiate
    nothing outside. Returns ``(E, too_close_flags)``.
    """
    from .operators import distance_to_surface

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    k0 = params.k0
    Ej, Hj = potential_fields(sol.space, sol.j, k0, pts)
    if sol.is_dielectric:
        Em, _ = potential_fields(sol.space, sol.m, k0, pts)
        E = -Hj - Em
    else:
        E = -Ej
    if total and wave is not None:
        E = E + wave.E(pts, k0)
    h = float(sol.space.mesh.circumdiameters.max()) if min_distance is None else min_distance
    flags = distance_to_surface(sol.space, pts) < h
    return E, flags

