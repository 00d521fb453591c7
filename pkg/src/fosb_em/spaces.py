"""Lowest order div-conforming (RWG) spaces and surface differential operators.

On triangle ``t`` the basis function of the edge opposite local vertex ``i``
is ``s * l / (2 A) * (x - P_i)`` with sign ``s = +1`` on the plus triangle
and ``-1`` on the minus triangle, so its flux across the edge is one.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .geometry import MeshError, SurfaceMesh
from .quadrature import TriangleRule, dunavant, gauss_legendre01


@dataclass(frozen=True, eq=False)
class DivConformingSpace:
    mesh: SurfaceMesh
    edges: np.ndarray  # (N, 2) sorted vertex pairs
    plus: np.ndarray  # (N,) plus triangle
    minus: np.ndarray  # (N,) minus triangle
    lengths: np.ndarray  # (N,)
    tri_dof: np.ndarray  # (nt, 3) dof of the edge opposite local vertex i
    tri_sign: np.ndarray  # (nt, 3) +1 / -1

    @property
    def N(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def tri_len(self) -> np.ndarray:
        return self.lengths[self.tri_dof]

    @cached_property
    def coef(self) -> np.ndarray:
        """Per-triangle factors ``s l / (2A)``, shape ``(nt, 3)``."""
        return self.tri_sign * self.tri_len / (2.0 * self.mesh.areas[:, None])

    @cached_property
    def div_local(self) -> np.ndarray:
        """Surface divergence of each local basis function, ``(nt, 3)``."""
        return 2.0 * self.coef

    def points(self, rule: TriangleRule) -> np.ndarray:
        """Physical quadrature points ``(nt, nq, 3)``."""
        return np.einsum("qk,tkd->tqd", rule.bary, self.mesh.corners)

    def weights(self, rule: TriangleRule) -> np.ndarray:
        """Physical quadrature weights ``(nt, nq)``."""
        return self.mesh.areas[:, None] * rule.weights[None, :]

    def local_values(self, rule: TriangleRule) -> np.ndarray:
        """Local basis values ``(nt, nq, 3 local, 3 xyz)``."""
        x = self.points(rule)
        rel = x[:, :, None, :] - self.mesh.corners[:, None, :, :]
        return self.coef[:, None, :, None] * rel

    def evaluate(self, coeffs: np.ndarray, rule: TriangleRule) -> np.ndarray:
        """Field values ``(nt, nq, 3)`` of an expansion (complex allowed)."""
        c = np.asarray(coeffs)[self.tri_dof]  # (nt, 3)
        return np.einsum("tqid,ti->tqd", self.local_values(rule), c)

    def scatter(self, local: np.ndarray) -> np.ndarray:
        """Sum per-(triangle, local function) contributions into a dof vector."""
        out = np.zeros(self.N, dtype=np.result_type(local, float))
        np.add.at(out, self.tri_dof.ravel(), local.reshape(-1))
        return out


def build_space(mesh: SurfaceMesh) -> DivConformingSpace:
    """RWG space with dofs numbered by sorted (min, max) edge vertices."""
    tri = mesh.triangles
    nt = tri.shape[0]
    # directed edge opposite local vertex i runs tri[i+1] -> tri[i+2]
    a = tri[:, [1, 2, 0]].ravel()
    b = tri[:, [2, 0, 1]].ravel()
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keys = np.stack([lo, hi], axis=1)
    edges, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if np.any(counts != 2):
        raise MeshError("non-manifold edge: every edge must belong to exactly two triangles")
    forward = a < b  # traversed min -> max: plus triangle
    N = edges.shape[0]
    tri_idx = np.repeat(np.arange(nt), 3)
    plus = np.full(N, -1)
    minus = np.full(N, -1)
    plus[inv[forward]] = tri_idx[forward]
    minus[inv[~forward]] = tri_idx[~forward]
    if np.any(plus < 0) or np.any(minus < 0):
        raise MeshError("inconsistent orientation: edge traversed twice in the same direction")
    v = mesh.vertices
    lengths = np.linalg.norm(v[edges[:, 1]] - v[edges[:, 0]], axis=1)
    tri_dof = inv.reshape(nt, 3)
    tri_sign = np.where(forward, 1.0, -1.0).reshape(nt, 3)
    return DivConformingSpace(mesh, edges, plus, minus, lengths, tri_dof, tri_sign)


def pairing_matrix(space: DivConformingSpace) -> np.ndarray:
    """``B[i, j] = int f_i . (n x f_j)`` (exact, closed form per triangle)."""
    m = space.mesh
    P = m.corners
    c = space.coef
    cen = m.centroids
    n = m.normals
    # int (x - P_a) . (n x (x - P_b)) = A (cen - P_a) . (n x (P_a - P_b))
    ra = cen[:, None, :] - P  # (nt, 3, 3)
    diff = P[:, :, None, :] - P[:, None, :, :]  # P_a - P_b, (nt, a, b, 3)
    nx = np.cross(n[:, None, None, :], diff)
    loc = np.einsum("tad,tabd->tab", ra, nx) * m.areas[:, None, None]
    loc *= c[:, :, None] * c[:, None, :]
    B = np.zeros((space.N, space.N))
    rows = np.repeat(space.tri_dof[:, :, None], 3, axis=2)
    cols = np.repeat(space.tri_dof[:, None, :], 3, axis=1)
    np.add.at(B, (rows.ravel(), cols.ravel()), loc.ravel())
    return B


def identity_matrix(space: DivConformingSpace) -> np.ndarray:
    """Galerkin matrix of the identity in the twisted pairing: ``M[m, n] = <f_n, f_m>x``."""
    return pairing_matrix(space).T.copy()


def mass_matrix(space: DivConformingSpace) -> np.ndarray:
    """Plain ``L2`` Gram matrix ``int f_i . f_j`` (used for diagnostics)."""
    rule = dunavant(2)
    vals = space.local_values(rule)
    w = space.weights(rule)
    loc = np.einsum("tq,tqad,tqbd->tab", w, vals, vals)
    G = np.zeros((space.N, space.N))
    rows = np.repeat(space.tri_dof[:, :, None], 3, axis=2)
    cols = np.repeat(space.tri_dof[:, None, :], 3, axis=1)
    np.add.at(G, (rows.ravel(), cols.ravel()), loc.ravel())
    return G


# ---------------------------------------------------------------------------
# scalar fields


@dataclass(frozen=True, eq=False)
class ScalarSurfaceField:
    """Continuous piecewise linear field given by its vertex values."""

    mesh: SurfaceMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.mesh.nv,):
            raise ValueError("one value per vertex expected")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    def evaluate(self, rule: TriangleRule) -> np.ndarray:
        return np.einsum("qk,tk->tq", rule.bary, self.values[self.mesh.triangles])

    def __mul__(self, other):
        if isinstance(other, ScalarSurfaceField):
            return ScalarSurfaceField(self.mesh, self.values * other.values)
        return ScalarSurfaceField(self.mesh, self.values * other)

    __rmul__ = __mul__


def barycentric_gradients(mesh: SurfaceMesh) -> np.ndarray:
    """``grad lambda_i`` per triangle, shape ``(nt, 3, 3)``."""
    P = mesh.corners
    n = mesh.normals
    opp = P[:, [2, 0, 1], :] - P[:, [1, 2, 0], :]
    return np.cross(n[:, None, :], opp) / (2.0 * mesh.areas[:, None, None])


def surface_gradient(field: ScalarSurfaceField) -> np.ndarray:
    """Elementwise surface gradient ``(nt, 3)`` of the linear interpolant."""
    g = barycentric_gradients(field.mesh)
    return np.einsum("tk,tkd->td", field.values[field.mesh.triangles], g)


def surface_divergence(coeffs: np.ndarray, space: DivConformingSpace) -> np.ndarray:
    """Piecewise constant surface divergence of an RWG expansion."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (space.N,):
        raise ValueError(f"expected {space.N} coefficients, got {coeffs.shape}")
    return np.einsum("ti,ti->t", coeffs[space.tri_dof], space.div_local)


def vertex_average(mesh: SurfaceMesh, per_triangle: np.ndarray) -> ScalarSurfaceField:
    """Area weighted average of piecewise constant data onto the vertices."""
    num = np.zeros(mesh.nv, dtype=np.result_type(per_triangle, float))
    den = np.zeros(mesh.nv)
    for i in range(3):
        np.add.at(num, mesh.triangles[:, i], per_triangle * mesh.areas)
        np.add.at(den, mesh.triangles[:, i], mesh.areas)
    return ScalarSurfaceField(mesh, num / den)


def normal_component(mesh: SurfaceMesh, field: Callable[[np.ndarray], np.ndarray]) -> ScalarSurfaceField:
    """Vertex values of ``v . n`` with area weighted vertex normals."""
    v = field(mesh.vertices)
    return ScalarSurfaceField(mesh, np.einsum("id,id->i", v, mesh.vertex_normals))


def curl_of_scalar_coeffs(space: DivConformingSpace, field: ScalarSurfaceField) -> np.ndarray:
    """RWG coefficients of ``grad_G(phi) x n``, which lies exactly in the space."""
    e = space.edges
    phi = field.values
    # the plus triangle runs the edge min -> max, so its outward normal is
    # t x n and the flux of grad(phi) x n is the derivative along t
    return (phi[e[:, 1]] - phi[e[:, 0]]) / space.lengths


def flux_interpolant(
    space: DivConformingSpace,
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray],
    npts: int = 2,
) -> np.ndarray:
    """RWG interpolant by averaged edge fluxes.

    ``evaluator(tri_indices, bary)`` must return field vectors
    ``(len(tri_indices), nb, 3)`` at barycentric points ``bary (nb, 3)`` of
    the listed triangles. The coefficient of each edge is the mean normal
    component along the edge (Gauss points), averaged over both sides.
    """
    m = space.mesh
    s, w = gauss_legendre01(npts)
    out = np.zeros(space.N, dtype=complex)
    for side, tris, sgn in ((0, space.plus, 1.0), (1, space.minus, -1.0)):
        loc = np.argmax(space.tri_dof[tris] == np.arange(space.N)[:, None], axis=1)
        # barycentric coordinates of edge points: opposite vertex weight 0
        b = np.zeros((space.N, npts, 3))
        i1 = (loc + 1) % 3
        i2 = (loc + 2) % 3
        rows = np.arange(space.N)[:, None]
        b[rows, np.arange(npts)[None, :], i1[:, None]] = 1.0 - s[None, :]
        b[rows, np.arange(npts)[None, :], i2[:, None]] = s[None, :]
        P = m.corners[tris]
        opp = P[np.arange(space.N), loc]
        mid = 0.5 * (P[np.arange(space.N), i1] + P[np.arange(space.N), i2])
        t = P[np.arange(space.N), i2] - P[np.arange(space.N), i1]
        t /= np.linalg.norm(t, axis=1)[:, None]
        nu = mid - opp
        nu -= np.einsum("ed,ed->e", nu, t)[:, None] * t
        nu /= np.linalg.norm(nu, axis=1)[:, None]  # outward from this triangle
        vals = _eval_edge(evaluator, tris, b)
        flux = np.einsum("eqd,ed,q->e", vals, nu, w)
        out += 0.5 * sgn * flux
    return out


def _eval_edge(evaluator, tris, b):
    # evaluators take one shared barycentric rule; group edges by the rule
    out = None
    keys = {}
    for e in range(b.shape[0]):
        keys.setdefault(b[e].tobytes(), []).append(e)
    for idx in keys.values():
        idx = np.asarray(idx)
        vals = evaluator(tris[idx], b[idx[0]])
        if out is None:
            out = np.zeros((b.shape[0],) + vals.shape[1:], dtype=complex)
        out[idx] = vals
    return out
