"""Galerkin boundary integral operators, potentials and far-field maps.

Conventions: time dependence ``exp(-i w t)``, ``G(r) = exp(ikr) / (4 pi r)``,
``E_k v = ik int v G - (1/ik) grad int div v G`` and ``H_k v = curl int v G``.
Galerkin matrices are formed with the twisted pairing
``<u, v>x = int u . (n x v)``, rows indexing test functions:

* ``T[m, n] = <T_k f_n, f_m>x = -(ik int int f_m.f_n G + (1/ik) int int div f_m div f_n G)``
* ``K[m, n] = <K_k f_n, f_m>x = -int f_m . H_k f_n`` (principal value)

Both matrices are complex symmetric on a single space.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .quadrature import coincident_rule, dunavant, edge_rule, vertex_rule
from .spaces import DivConformingSpace, identity_matrix


class AssemblyError(RuntimeError):
    """Raised when an assembled matrix contains non-finite entries."""


@dataclass(frozen=True)
class MediumParameters:
    k0: float
    eps_r: float = 1.0
    mu_r: float = 1.0
    frequency: Optional[float] = None

    def __post_init__(self):
        if not (self.k0 > 0 and self.eps_r > 0 and self.mu_r > 0):
            raise ValueError("k0, eps_r and mu_r must be positive")

    @property
    def k1(self) -> float:
        return self.k0 * np.sqrt(self.eps_r * self.mu_r)

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.mu_r / self.eps_r))

    @property
    def wavelength(self) -> float:
        return 2.0 * np.pi / self.k0

    @property
    def S_hat(self) -> tuple[float, float]:
        return (self.eps_r**-0.5, self.mu_r**-0.5)


@dataclass(frozen=True)
class QuadratureOptions:
    far_degree: int = 2
    near_degree: int = 4
    separation: float = 2.0
    singular_order: int = 5


DEFAULT_QUADRATURE = QuadratureOptions()


@dataclass(eq=False)
class OperatorBlock:
    matrix: np.ndarray
    kind: str  # identity | efio | mfio
    k: Optional[float] = None
    test_level: Optional[int] = None
    trial_level: Optional[int] = None

    @property
    def shape(self):
        return self.matrix.shape

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def _rule_points(space: DivConformingSpace, degree: int):
    rule = dunavant(degree) if degree in (1, 2, 4, 5) else None
    if rule is None:
        from .quadrature import collapsed_gauss

        rule = collapsed_gauss(max(2, (degree + 2) // 2))
    return np.ascontiguousarray(space.points(rule)), np.ascontiguousarray(space.weights(rule))


def assemble_boundary_operators(
    space: DivConformingSpace,
    ks: Sequence[float],
    *,
    efio: bool = True,
    mfio: bool = True,
    quad: QuadratureOptions = DEFAULT_QUADRATURE,
    level: Optional[int] = None,
) -> dict:
    """Assemble ``T_k`` and/or ``K_k`` for several wavenumbers in one sweep.

    Returns a dict keyed by ``("efio", k)`` / ``("mfio", k)``.
    """
    ks = np.asarray(ks, dtype=float)
    if np.any(ks <= 0):
        raise ValueError("wavenumbers must be positive")
    m = space.mesh
    corners = np.ascontiguousarray(m.corners)
    diam = np.max(
        np.linalg.norm(corners[:, [1, 2, 0]] - corners, axis=2), axis=1
    )
    pf, wf = _rule_points(space, quad.far_degree)
    pn, wn = _rule_points(space, quad.near_degree)
    c, e, v = (r(quad.singular_order) for r in (coincident_rule, edge_rule, vertex_rule))
    T, K = kernels.assemble(
        corners, np.ascontiguousarray(m.triangles), np.ascontiguousarray(m.areas),
        np.ascontiguousarray(m.centroids), diam, np.ascontiguousarray(space.coef),
        np.ascontiguousarray(space.tri_dof), space.N, ks,
        pf, wf, pn, wn, float(quad.separation),
        c.pts, c.weights, e.pts, e.weights, v.pts, v.weights, bool(efio), bool(mfio),
    )
    out = {}
    for i, k in enumerate(ks):
        if efio:
            out["efio", float(k)] = _checked(OperatorBlock(T[i], "efio", float(k), level, level))
        if mfio:
            out["mfio", float(k)] = _checked(OperatorBlock(K[i], "mfio", float(k), level, level))
    return out


def _checked(block: OperatorBlock) -> OperatorBlock:
    bad = ~np.isfinite(block.matrix)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise AssemblyError(f"non-finite {block.kind} entry at ({i}, {j})")
    return block


def _same_space(test, trial):
    if test is not trial and test.mesh is not trial.mesh:
        raise ValueError("cross-mesh operator blocks are not supported; assemble on a single level")


def assemble_identity(space: DivConformingSpace, level: Optional[int] = None) -> OperatorBlock:
    return OperatorBlock(identity_matrix(space), "identity", None, level, level)


def assemble_efio(test_space, trial_space, k: float, quad: QuadratureOptions = DEFAULT_QUADRATURE) -> OperatorBlock:
    _same_space(test_space, trial_space)
    return assemble_boundary_operators(test_space, [k], mfio=False, quad=quad)["efio", float(k)]


def assemble_mfio(test_space, trial_space, k: float, quad: QuadratureOptions = DEFAULT_QUADRATURE) -> OperatorBlock:
    _same_space(test_space, trial_space)
    return assemble_boundary_operators(test_space, [k], efio=False, quad=quad)["mfio", float(k)]


@dataclass(eq=False)
class MultitraceOperator:
    """2x2 block operator ``[[K, a T], [-T / a, K]]`` acting on ``(j, m)``."""

    T: np.ndarray
    K: np.ndarray
    eta: float = 1.0
    k: Optional[float] = None

    @property
    def blocks(self):
        return ((self.K, self.eta * self.T), (-self.T / self.eta, self.K))

    def matrix(self) -> np.ndarray:
        return np.block([list(r) for r in self.blocks])

    def apply(self, x: np.ndarray) -> np.ndarray:
        n = self.T.shape[1]
        j, m = x[:n], x[n:]
        return np.concatenate(
            [self.K @ j + self.eta * (self.T @ m), -(self.T @ j) / self.eta + self.K @ m]
        )


def assemble_multitrace(
    space: DivConformingSpace,
    k: float,
    params: Optional[MediumParameters] = None,
    scaled: bool = False,
    ops: Optional[dict] = None,
    quad: QuadratureOptions = DEFAULT_QUADRATURE,
) -> MultitraceOperator:
    """``A_k`` or, with ``scaled``, ``A^_k`` using ``eta`` from ``params``."""
    if ops is None:
        ops = assemble_boundary_operators(space, [k], quad=quad)
    eta = params.eta if (scaled and params is not None) else 1.0
    return MultitraceOperator(ops["efio", float(k)].matrix, ops["mfio", float(k)].matrix, eta, k)


def block_identity(space: DivConformingSpace) -> np.ndarray:
    """Identity in the twisted pairing on the pair space (block diagonal)."""
    M = identity_matrix(space)
    Z = np.zeros_like(M)
    return np.block([[M, Z], [Z, M]])


# ---------------------------------------------------------------------------
# far field and potentials


def plane_angles(n: int) -> np.ndarray:
    """Observation angles ``2 pi i / n`` in the ``z = 0`` plane."""
    return 2.0 * np.pi * np.arange(n) / n


def plane_directions(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=-1)


def _radiation_integrals(space: DivConformingSpace, k: float, dirs: np.ndarray, degree: int = 5):
    """``int f_n(y) exp(-ik d.y) dy`` for all directions: ``(nd, 3, N)``."""
    rule = dunavant(degree)
    x = space.points(rule)  # (nt, nq, 3)
    w = space.weights(rule)
    vals = space.local_values(rule)  # (nt, nq, 3, 3)
    out = np.zeros((dirs.shape[0], 3, space.N), complex)
    for s in range(0, dirs.shape[0], 64):
        d = dirs[s : s + 64]
        ph = np.exp(-1j * k * np.einsum("ad,tqd->atq", d, x)) * w[None]
        loc = np.einsum("atq,tqid->adti", ph, vals)  # (na, 3, nt, 3)
        blk = np.zeros((d.shape[0], 3, space.N), complex)
        for i in range(3):
            np.add.at(blk, (slice(None), slice(None), space.tri_dof[:, i]), loc[:, :, :, i])
        out[s : s + 64] = blk
    return out


def far_field_matrix(space: DivConformingSpace, k: float, directions, potential: str = "electric") -> np.ndarray:
    """Far-field pattern of ``E_k`` (``"electric"``) or ``H_k`` (``"magnetic"``).

    Rows are ordered ``3 * angle + component``; ``E ~ exp(ik|x|)/(4 pi |x|) F``.
    """
    d = np.asarray(directions, dtype=float)
    if d.ndim == 1 and d.size != 3:
        d = plane_directions(d)
    d = np.atleast_2d(d)
    if not np.allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12):
        raise ValueError("directions must be unit vectors")
    J = _radiation_integrals(space, k, d)
    if potential == "electric":
        F = 1j * k * (J - d[:, :, None] * np.einsum("ad,adn->an", d, J)[:, None, :])
    elif potential == "magnetic":
        F = 1j * k * np.cross(d[:, :, None], J, axisa=1, axisb=1, axisc=1)
    else:
        raise ValueError(f"unknown potential {potential!r}")
    return F.reshape(-1, space.N)


def potential_fields(space: DivConformingSpace, coeffs: np.ndarray, k: float, points: np.ndarray, degree: int = 5):
    """``(E_k u)(x)`` and ``(H_k u)(x)`` at points off the surface."""
    rule = dunavant(degree)
    y = space.points(rule).reshape(-1, 3)
    w = space.weights(rule).ravel()
    u = space.evaluate(coeffs, rule).reshape(-1, 3)
    divu = np.repeat(np.einsum("ti,ti->t", np.asarray(coeffs)[space.tri_dof], space.div_local), rule.size)
    pts = np.atleast_2d(points)
    E = np.zeros(pts.shape, complex)
    H = np.zeros(pts.shape, complex)
    for s in range(0, len(pts), 32):
        d = pts[s : s + 32, None, :] - y[None]
        R = np.linalg.norm(d, axis=-1)
        G = np.exp(1j * k * R) / (4 * np.pi * R) * w
        g = G * (1j * k - 1.0 / R) / R
        E[s : s + 32] = 1j * k * np.einsum("pq,qd->pd", G, u) - np.einsum("pq,q,pqd->pd", g, divu, d) / (1j * k)
        H[s : s + 32] = np.einsum("pq,pqd->pd", g, np.cross(d, u[None]))
    return E, H


def distance_to_surface(space: DivConformingSpace, points: np.ndarray) -> np.ndarray:
    """Crude distance estimate (to vertices and centroids)."""
    m = space.mesh
    cloud = np.concatenate([m.vertices, m.centroids])
    pts = np.atleast_2d(points)
    return np.array([np.min(np.linalg.norm(cloud - p, axis=1)) for p in pts])


# ---------------------------------------------------------------------------
# binary dump (test fixtures only)

_KINDS = {"identity": 0, "efio": 1, "mfio": 2}


def dump_block(block: OperatorBlock, path) -> None:
    a = np.asarray(block.matrix, dtype=np.complex64)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sidqq", b"OPBK", _KINDS[block.kind], block.k or 0.0, *a.shape))
        fh.write(np.ascontiguousarray(a).tobytes())


def load_block(path) -> OperatorBlock:
    with open(path, "rb") as fh:
        magic, kind, k, r, c = struct.unpack("<4sidqq", fh.read(struct.calcsize("<4sidqq")))
        if magic != b"OPBK":
            raise ValueError("not an operator block dump")
        a = np.frombuffer(fh.read(), dtype=np.complex64).reshape(r, c)
    name = {v: key for key, v in _KINDS.items()}[kind]
    return OperatorBlock(a.astype(complex), name, k or None)
