"""Quadrature rules on triangles and the singular rules for touching pairs.

Triangle rules are given in barycentric form with weights summing to one,
so integrating over a physical triangle means multiplying by its area.

Touching pairs use the Sauter-Schwab regularising transforms on the
reference triangle ``{0 <= x2 <= x1 <= 1}``, whose vertices are (0,0),
(1,0), (1,1). A physical triangle ``(P0, P1, P2)`` is reached through
``P0 + x1 (P1 - P0) + x2 (P2 - P1)`` with Jacobian ``2 * area``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class TriangleRule:
    bary: np.ndarray  # (nq, 3)
    weights: np.ndarray  # (nq,), sum to 1

    @property
    def size(self) -> int:
        return self.weights.size


def _sym_rule(groups):
    pts, wts = [], []
    for a, w in groups:
        if a is None:
            pts.append((1 / 3, 1 / 3, 1 / 3))
            wts.append(w)
            continue
        b = 1.0 - 2.0 * a
        for p in ((a, a, b), (a, b, a), (b, a, a)):
            pts.append(p)
            wts.append(w)
    return TriangleRule(np.array(pts), np.array(wts))


@lru_cache(maxsize=None)
def dunavant(degree: int) -> TriangleRule:
    """Symmetric rules of polynomial degree 1, 2, 4 or 5 (1, 3, 6, 7 points)."""
    if degree == 1:
        return _sym_rule([(None, 1.0)])
    if degree == 2:
        return _sym_rule([(1 / 6, 1 / 3)])
    if degree == 4:
        return _sym_rule(
            [
                (0.445948490915965, 0.223381589678011),
                (0.091576213509771, 0.109951743655322),
            ]
        )
    if degree == 5:
        return _sym_rule(
            [
                (None, 0.225),
                (0.470142064105115, 0.132394152788506),
                (0.101286507323456, 0.125939180544827),
            ]
        )
    raise ValueError(f"no symmetric rule of degree {degree}")


def gauss_legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def collapsed_gauss(n: int) -> TriangleRule:
    """Duffy-collapsed tensor Gauss rule with n*n points, exact to degree 2n-1."""
    s, ws = gauss_legendre01(n)
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(ws, ws, indexing="ij")
    # (u, v) in the square -> (1-u, u(1-v), uv) barycentric
    l1 = u * (1.0 - v)
    l2 = u * v
    bary = np.stack([1.0 - u, l1, l2], axis=-1).reshape(-1, 3)
    w = (2.0 * wu * wv * u).ravel()
    return TriangleRule(bary, w)


@dataclass(frozen=True)
class SingularRule:
    """Point pairs on the reference triangle with weights (reference measure)."""

    pts: np.ndarray  # (np, 4): x1, x2, y1, y2
    weights: np.ndarray  # (np,)


def _cube(n):
    s, w = gauss_legendre01(n)
    g = np.stack(np.meshgrid(s, s, s, s, indexing="ij"), axis=-1).reshape(-1, 4)
    wg = np.einsum("i,j,k,l->ijkl", w, w, w, w).ravel()
    return g[:, 0], g[:, 1], g[:, 2], g[:, 3], wg


@lru_cache(maxsize=None)
def coincident_rule(n: int = 5) -> SingularRule:
    xi, e1, e2, e3, w = _cube(n)
    jac = w * xi**3 * e1**2 * e2
    a = (xi, xi * (1 - e1 + e1 * e2), xi * (1 - e1 * e2 * e3), xi * (1 - e1))
    b = (xi, xi * e1 * (1 - e2 + e2 * e3), xi * (1 - e1 * e2), xi * e1 * (1 - e2))
    c = (xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3), xi, xi * e1 * (1 - e2))
    regions = []
    for r in (a, b, c):
        regions.append(np.stack(r, axis=-1))
        regions.append(np.stack((r[2], r[3], r[0], r[1]), axis=-1))
    return SingularRule(np.concatenate(regions), np.tile(jac, 6))


@lru_cache(maxsize=None)
def edge_rule(n: int = 5) -> SingularRule:
    """Shared edge mapped to ``x2 = y2 = 0`` with identical parametrisation."""
    xi, e1, e2, e3, w = _cube(n)
    w1 = w * xi**3 * e1**2
    w2 = w1 * e2
    regs = [
        ((xi, xi * e1 * e3, xi * (1 - e1 * e2), xi * e1 * (1 - e2)), w1),
        ((xi, xi * e1, xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), w2),
        ((xi * (1 - e1 * e2), xi * e1 * (1 - e2), xi, xi * e1 * e2 * e3), w2),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3), xi, xi * e1), w2),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3), xi, xi * e1 * e2), w2),
    ]
    pts = np.concatenate([np.stack(r, axis=-1) for r, _ in regs])
    wts = np.concatenate([ww for _, ww in regs])
    return SingularRule(pts, wts)


@lru_cache(maxsize=None)
def vertex_rule(n: int = 5) -> SingularRule:
    """Shared vertex mapped to the origin of both reference triangles."""
    xi, e1, e2, e3, w = _cube(n)
    wt = w * xi**3 * e2
    r1 = np.stack((xi, xi * e1, xi * e2, xi * e2 * e3), axis=-1)
    r2 = np.stack((xi * e2, xi * e2 * e3, xi, xi * e1), axis=-1)
    return SingularRule(np.concatenate([r1, r2]), np.concatenate([wt, wt]))
