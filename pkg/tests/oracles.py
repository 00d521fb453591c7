"""Independent reference computations used by the tests.

Nothing here calls the library's assembly kernels: the static part of
the Helmholtz kernel is integrated in closed form over each source
triangle and the remainder by brute-force quadrature on uniformly
subdivided triangles.
"""
from __future__ import annotations

import numpy as np

# Dunavant degree-5 rule, barycentric points and weights summing to 1.
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def subdivide(P: np.ndarray, levels: int) -> np.ndarray:
    """Uniform red refinement of one triangle ``(3, 3)``: ``(4**levels, 3, 3)``."""
    tris = P[None]
    for _ in range(levels):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        tris = np.concatenate([
            np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
            np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1),
        ])
    return tris


def triangle_rule(P: np.ndarray, levels: int):
    """Composite degree-5 rule on ``P``: points ``(n, 3)`` and weights ``(n,)``."""
    sub = subdivide(P, levels)
    area = 0.5 * np.linalg.norm(np.cross(sub[:, 1] - sub[:, 0], sub[:, 2] - sub[:, 0]), axis=1)
    pts = np.einsum("qk,tkd->tqd", _BARY, sub).reshape(-1, 3)
    w = (area[:, None] * _W[None]).ravel()
    return pts, w


def static_potentials(x: np.ndarray, P: np.ndarray):
    """``int_T 1/|x-y| dy`` and ``int_T (y - rho)/|x-y| dy`` in closed form.

    ``rho`` is the projection of ``x`` onto the plane of ``T``. Uses the
    classical edge-sum formulas for flat triangles.
    """
    x = np.atleast_2d(x)
    n = np.cross(P[1] - P[0], P[2] - P[0])
    n /= np.linalg.norm(n)
    w = (x - P[0]) @ n
    rho = x - w[:, None] * n
    aw = np.abs(w)
    I0 = np.zeros(len(x))
    Iv = np.zeros((len(x), 3))
    for i in range(3):
        pm, pp = P[i], P[(i + 1) % 3]
        l = (pp - pm) / np.linalg.norm(pp - pm)
        u = np.cross(l, n)
        lp = (pp - rho) @ l
        lm = (pm - rho) @ l
        t0 = (pm - rho) @ u
        R0sq = t0**2 + w**2
        Rp = np.linalg.norm(x - pp, axis=1)
        Rm = np.linalg.norm(x - pm, axis=1)
        lg = np.log((Rp + lp) / (Rm + lm))
        I0 += t0 * lg - aw * (np.arctan2(t0 * lp, R0sq + aw * Rp) - np.arctan2(t0 * lm, R0sq + aw * Rm))
        Iv += 0.5 * np.outer(R0sq * lg + lp * Rp - lm * Rm, u)
    return I0, Iv


def _local(space, dof):
    """``(triangle, corners, coefficient, opposite corner, divergence)`` for both supports."""
    out = []
    for tri in (space.plus[dof], space.minus[dof]):
        i = int(np.flatnonzero(space.tri_dof[tri] == dof)[0])
        P = space.mesh.corners[tri]
        c = space.coef[tri, i]
        out.append((P, c, P[i], 2.0 * c))
    return out


def efio_entry(space, m: int, n: int, k: float, levels: int = 3) -> complex:
    """``-(ik int int f_m.f_n G + (1/ik) int int div f_m div f_n G)`` for any pair of dofs.

    The ``1/(4 pi R)`` part of ``G`` is integrated exactly over the source
    triangle; ``(exp(ikR) - 1)/(4 pi R)`` is bounded and integrated with
    composite rules on both triangles.
    """
    ik = 1j * k
    total = 0.0 + 0.0j
    for Px, cm, Pa, dm in _local(space, m):
        x, wx = triangle_rule(Px, levels)
        fm = cm * (x - Pa)
        for Py, cn, Pb, dn in _local(space, n):
            I0, Iv = static_potentials(x, Py)
            ny = np.cross(Py[1] - Py[0], Py[2] - Py[0])
            ny /= np.linalg.norm(ny)
            rho = x - ((x - Py[0]) @ ny)[:, None] * ny
            fn_pot = cn * ((rho - Pb) * I0[:, None] + Iv)  # int f_n(y)/R dy
            static = (ik * np.einsum("xd,xd->x", fm, fn_pot) + dm * dn * I0 / ik) / (4 * np.pi)
            y, wy = triangle_rule(Py, levels)
            R = np.linalg.norm(x[:, None, :] - y[None], axis=-1)
            smooth = np.where(R > 0, np.expm1(ik * R) / np.where(R > 0, R, 1.0), ik) / (4 * np.pi)
            fn = cn * (y - Pb)
            dyn = ik * np.einsum("x,y,xy,xd,yd->", wx, wy, smooth, fm, fn) + dm * dn / ik * (wx @ smooth @ wy)
            total += wx @ static + dyn
    return -total


def regular_entry(space, m: int, n: int, k: float, kind: str, levels: int = 2) -> complex:
    """Brute-force entry of ``T`` (``"efio"``) or ``K`` (``"mfio"``) for disjoint supports."""
    ik = 1j * k
    total = 0.0 + 0.0j
    for Px, cm, Pa, dm in _local(space, m):
        x, wx = triangle_rule(Px, levels)
        fm = cm * (x - Pa)
        for Py, cn, Pb, dn in _local(space, n):
            y, wy = triangle_rule(Py, levels)
            fn = cn * (y - Pb)
            d = x[:, None, :] - y[None]
            R = np.linalg.norm(d, axis=-1)
            G = np.exp(ik * R) / (4 * np.pi * R)
            if kind == "efio":
                total += ik * np.einsum("x,y,xy,xd,yd->", wx, wy, G, fm, fn)
                total += dm * dn / ik * (wx @ G @ wy)
            else:
                g = G * (ik - 1.0 / R) / R
                total += np.einsum("x,y,xy,xd,xyd->", wx, wy, g, fm, np.cross(d, fn[None]))
    return -total


def kron_solve(Z1: np.ndarray, Z2: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Solve ``Z1 X Z2^H = C`` through the explicit Kronecker matrix (row-major vec)."""
    A = np.kron(Z1, Z2.conj())
    return np.linalg.solve(A, C.reshape(-1)).reshape(C.shape)
