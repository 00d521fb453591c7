"""Shape derivatives of the scattered field and the first-order approximation.

For a boundary velocity with normal component ``v_n`` the shape derivative
of the total exterior traces solves the nominal system with a right-hand
side built from the nominal solution:

* PEC: ``T_k dj' = g`` with ``g = grad(v_n E_n) x n - ik v_n gamma_T H``.
* DE:  ``(A_0 + A^_1) dxi' = (1/2 - A^_1) q`` where ``q`` is the jump of the
  shape derivative across the interface,
  ``q_D = grad(v_n (1 - 1/eps_r) E_n) x n - ik0 (1 - mu_r) v_n (n x m)`` and
  ``q_N = grad(v_n (1 - 1/mu_r) H_n) x n + ik0 (1 - eps_r) v_n (n x j)``.

``E_n`` and ``H_n`` come from surface divergences of the solved traces,
so no near-field evaluation is needed. The far field derivative is the
nominal far-field map applied to the derivative traces.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import PerturbationField
from .operators import MediumParameters
from .quadrature import dunavant
from .solve import FarFieldSample, Level, TraceSolution
from .spaces import (
    DivConformingSpace,
    ScalarSurfaceField,
    curl_of_scalar_coeffs,
    flux_interpolant,
    normal_component,
    surface_divergence,
    vertex_average,
)

_RULE = dunavant(4)


@dataclass
class SdIngredients:
    """Normal fields and tangential magnetic fields of a nominal solution.

    ``E_n``/``H_n`` are exterior values at the vertices; the interior values
    follow from continuity of the normal flux densities. ``gamma_TH`` holds
    ``n x j`` (PEC) or ``n x m`` (DE) at triangle centroids.
    """

    sol: TraceSolution
    E_n: ScalarSurfaceField
    gamma_TH: np.ndarray
    H_n: Optional[ScalarSurfaceField] = None
    E_n_interior: Optional[ScalarSurfaceField] = None
    H_n_interior: Optional[ScalarSurfaceField] = None
    gamma_TH_interior: Optional[np.ndarray] = None


def _centroid_values(space: DivConformingSpace, coeffs) -> np.ndarray:
    return space.evaluate(coeffs, dunavant(1))[:, 0]


def compute_ingredients(sol: TraceSolution, params: MediumParameters) -> SdIngredients:
    space = sol.space
    mesh = space.mesh
    ik = 1j * params.k0
    n = mesh.normals
    if not sol.is_dielectric:
        # div(H x n) = n . curl H = -ik E_n
        En = vertex_average(mesh, -surface_divergence(sol.j, space) / ik)
        gTH = np.cross(n, _centroid_values(space, sol.j))
        return SdIngredients(sol, En, gTH)
    En = vertex_average(mesh, -surface_divergence(sol.m, space) / ik)
    # div(E x n) = n . curl E = ik H_n
    Hn = vertex_average(mesh, surface_divergence(sol.j, space) / ik)
    gTH = np.cross(n, _centroid_values(space, sol.m))
    return SdIngredients(
        sol, En, gTH, Hn,
        E_n_interior=En * (1.0 / params.eps_r),
        H_n_interior=Hn * (1.0 / params.mu_r),
        gamma_TH_interior=gTH,
    )


def normal_velocity(mesh, field: PerturbationField) -> ScalarSurfaceField:
    """``v_n`` at the vertices, interpolated piecewise linearly."""
    return normal_component(mesh, field)


def _phi_div(space: DivConformingSpace, phi: ScalarSurfaceField) -> np.ndarray:
    """``int phi div f_m`` for a piecewise linear ``phi``."""
    mean = phi.values[space.mesh.triangles].mean(axis=1) * space.mesh.areas
    return space.scatter(space.div_local * mean[:, None])


def _vn_dot(space: DivConformingSpace, v_n: ScalarSurfaceField, coeffs) -> np.ndarray:
    """``int v_n u . f_m`` for an RWG expansion ``u``."""
    w = space.weights(_RULE)
    vn = v_n.evaluate(_RULE)
    u = space.evaluate(coeffs, _RULE)
    return space.scatter(np.einsum("tq,tq,tqd,tqid->ti", w, vn, u, space.local_values(_RULE)))


def sd_rhs_pec(ing: SdIngredients, v_n: ScalarSurfaceField, k: float) -> np.ndarray:
    """Galerkin right-hand side ``<g, f_m>x`` of the PEC shape derivative."""
    space = ing.sol.space
    g1 = _phi_div(space, v_n * ing.E_n)
    g2 = -1j * k * _vn_dot(space, v_n, ing.sol.j)
    return g1 + g2


def _rwg_at(space: DivConformingSpace, coeffs, tris, bary):
    P = space.mesh.corners[tris]
    x = np.einsum("bk,tkd->tbd", bary, P)
    c = coeffs[space.tri_dof[tris]] * space.coef[tris]
    return np.einsum("ti,tbid->tbd", c, x[:, :, None, :] - P[:, None, :, :])


def _jump_interpolant(space, phi, v_n, coeffs, scale):
    """RWG coefficients of ``grad(phi) x n + scale v_n (n x u)``."""
    mesh = space.mesh

    def ev(tris, bary):
        u = _rwg_at(space, coeffs, tris, bary)
        vn = np.einsum("bk,tk->tb", bary, v_n.values[mesh.triangles[tris]])
        return scale * vn[..., None] * np.cross(mesh.normals[tris][:, None, :], u)

    return curl_of_scalar_coeffs(space, phi) + flux_interpolant(space, ev)


def sd_jump(ing: SdIngredients, v_n: ScalarSurfaceField, params: MediumParameters):
    """Direct pairings ``<q, f_m>x`` and RWG coefficients of ``q`` (each stacked D, N)."""
    sol = ing.sol
    space = sol.space
    ik0 = 1j * params.k0
    er, mr = params.eps_r, params.mu_r
    phiD = v_n * ing.E_n * (1.0 - 1.0 / er)
    phiN = v_n * ing.H_n * (1.0 - 1.0 / mr)
    sD = -ik0 * (1.0 - mr)
    sN = ik0 * (1.0 - er)
    pD = _phi_div(space, phiD) + sD * _vn_dot(space, v_n, sol.m)
    pN = _phi_div(space, phiN) + sN * _vn_dot(space, v_n, sol.j)
    cD = _jump_interpolant(space, phiD, v_n, sol.m, sD)
    cN = _jump_interpolant(space, phiN, v_n, sol.j, sN)
    return np.concatenate([pD, pN]), np.concatenate([cD, cN])


def sd_rhs_de(ing: SdIngredients, v_n: ScalarSurfaceField, params: MediumParameters,
              level: Level) -> np.ndarray:
    """Galerkin right-hand side ``<(1/2 - A^_1) q, f_m>x`` of the dielectric shape derivative."""
    if not ing.sol.is_dielectric:
        raise ValueError("dielectric ingredients required")
    pair, coeffs = sd_jump(ing, v_n, params)
    return 0.5 * pair - level.interior_scaled() @ coeffs


def sd_rhs(level: Level, ing: SdIngredients, v_n: ScalarSurfaceField) -> np.ndarray:
    if level.problem == "pec":
        return sd_rhs_pec(ing, v_n, level.params.k0)
    return sd_rhs_de(ing, v_n, level.params, level)


def solve_sd(level: Level, rhs: np.ndarray, tol: float = 1e-8, max_iter: int = 3000) -> TraceSolution:
    x, it, res = level.solve(rhs, tol, max_iter)
    if level.problem == "pec":
        return TraceSolution(level.space, x, None, it, res)
    return TraceSolution(level.space, x[: level.N], x[level.N :], it, res)


def shape_derivative(level: Level, sol: TraceSolution, field: PerturbationField,
                     tol: float = 1e-8, max_iter: int = 3000) -> TraceSolution:
    """Nominal solution plus velocity field to derivative traces."""
    ing = compute_ingredients(sol, level.params)
    v_n = normal_velocity(level.mesh, field)
    return solve_sd(level, sd_rhs(level, ing, v_n), tol, max_iter)


def foa_far_field(F: FarFieldSample, F_prime: FarFieldSample, t: float) -> FarFieldSample:
    """First-order approximation ``F + t F'``."""
    a, b = np.asarray(F.angles), np.asarray(F_prime.angles)
    if a.shape != b.shape or not np.allclose(a, b) or F.F.shape != F_prime.F.shape:
        raise ValueError("far-field samples are on different grids")
    return FarFieldSample(a, F.F + t * F_prime.F)
