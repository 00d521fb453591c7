import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import kron_solve

from fosb_em.geometry import KITE_FIELD, generate_fichera, generate_kite
from fosb_em.operators import MediumParameters
from fosb_em.shapederiv import compute_ingredients, sd_rhs
from fosb_em.solve import Level, solve
from fosb_em.spaces import ScalarSurfaceField, normal_component
from fosb_em.tensor import (
    MomentBlock,
    assemble_moment_rhs,
    build_index_sets,
    combine_ct,
    efficiency_metrics,
    factorize_covariance,
    on_fichera_top,
    solve_full_tensor,
    solve_moment_block,
    solve_moment_block_factored,
)

TOL = 1e-8


def well_conditioned(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return np.eye(n) * 3 * np.sqrt(n) + A


# index sets ----------------------------------------------------------------


def test_hermitian_representatives_of_three_levels():
    s = build_index_sets(0, 2, hermitian=True)
    assert [(l1, l2) for l1, l2, sign, _ in s.blocks() if sign > 0] == [(1, 1), (2, 0)]
    assert [(l1, l2) for l1, l2, sign, _ in s.blocks() if sign < 0] == [(1, 0)]
    mult = {(l1, l2): m for l1, l2, _, m in s.blocks()}
    assert mult == {(1, 1): 1, (2, 0): 2, (1, 0): 2}


def test_single_level_is_full_tensor():
    s = build_index_sets(3, 3)
    assert s.plus == ((3, 3),) and s.minus == ()


def test_two_to_five():
    s = build_index_sets(2, 5)
    assert set(s.plus) == {(2, 5), (3, 4), (4, 3), (5, 2)}
    assert set(s.minus) == {(2, 4), (3, 3), (4, 2)}


@given(st.integers(0, 6), st.integers(0, 6))
def test_index_set_sizes(L0, d):
    s = build_index_sets(L0, L0 + d)
    assert len(s.plus) == d + 1 and len(s.minus) == d
    assert all(L0 <= l <= L0 + d for pair in s.plus + s.minus for l in pair)


def test_index_set_bounds():
    with pytest.raises(ValueError):
        build_index_sets(3, 2)
    with pytest.raises(ValueError):
        build_index_sets(-1, 2)


# covariance ----------------------------------------------------------------


def test_kite_rank_one_factor():
    mesh = generate_kite(0.4)
    fac = factorize_covariance("kite-rank1")
    assert fac.rank == 1 and fac.weights[0] == pytest.approx(1 / 3)
    phi = normal_component(mesh, KITE_FIELD).values
    np.testing.assert_allclose(np.diag(fac.kernel(mesh)), phi**2 / 3, rtol=1e-14)


@pytest.fixture(scope="module")
def fichera():
    return generate_fichera(0.1)


def test_fichera_kernel_lives_on_top_face(fichera):
    fac = factorize_covariance("fichera-splines")
    assert fac.rank == 36 and np.allclose(fac.weights, 1 / 3)
    K = fac.kernel(fichera)
    off = ~on_fichera_top(fichera.vertices)
    assert not np.any(K[off]) and not np.any(K[:, off])
    assert np.abs(K).max() > 0


def test_kernel_psd(fichera):
    K = factorize_covariance("fichera-splines").kernel(fichera)
    ev = np.linalg.eigvalsh(K)
    assert ev.min() >= -1e-12 * ev.max()


def test_covariance_errors():
    with pytest.raises(ValueError):
        factorize_covariance("gaussian")
    with pytest.raises(ValueError):
        factorize_covariance([(-1.0, lambda m: np.zeros(m.nv))])


def test_custom_covariance(ico):
    fac = factorize_covariance([(0.5, lambda m: m.vertices[:, 0]), (2.0, lambda m: np.ones(m.nv))])
    K = fac.kernel(ico)
    x = ico.vertices[:, 0]
    np.testing.assert_allclose(K, 0.5 * np.outer(x, x) + 2.0)


# moment right-hand side ------------------------------------------------------


@pytest.fixture(scope="module")
def pec_small(sphere2, canonical_wave):
    lv = Level(sphere2, MediumParameters(3.0), "pec", linear_solver="direct")
    return lv, compute_ingredients(solve(lv, canonical_wave), lv.params)


def test_rank_one_rhs(pec_small, rng):
    lv, ing = pec_small
    g = sd_rhs(lv, ing, normal_component(lv.mesh, KITE_FIELD))
    C = assemble_moment_rhs([1 / 3], g[None], g[None])
    s = np.linalg.svd(C, compute_uv=False)
    assert s[1] <= 1e-12 * s[0]
    np.testing.assert_allclose(C, C.conj().T, atol=1e-14 * s[0])
    assert np.linalg.eigvalsh(C).min() >= -1e-12 * s[0]


def test_rhs_matches_four_term_expansion(pec_small, rng):
    # split v_n = mu (phi_a + phi_b) and expand E[g g^H] into its four cross terms
    lv, ing = pec_small
    phi = normal_component(lv.mesh, KITE_FIELD).values
    cut = rng.standard_normal(lv.mesh.nv)
    ga = sd_rhs(lv, ing, ScalarSurfaceField(lv.mesh, cut))
    gb = sd_rhs(lv, ing, ScalarSurfaceField(lv.mesh, phi - cut))
    m2 = 1 / 3
    four = m2 * (np.outer(ga, ga.conj()) + np.outer(ga, gb.conj()) + np.outer(gb, ga.conj()) + np.outer(gb, gb.conj()))
    g = sd_rhs(lv, ing, ScalarSurfaceField(lv.mesh, phi))
    C = assemble_moment_rhs([m2], g[None], g[None])
    np.testing.assert_allclose(C, four, rtol=0, atol=1e-10 * np.abs(C).max())


# moment solves -----------------------------------------------------------------


def test_identity_operator_returns_rhs(rng):
    C = rng.standard_normal((7, 7)) + 1j * rng.standard_normal((7, 7))
    b = solve_moment_block(np.eye(7), np.eye(7), C, tol=TOL)
    np.testing.assert_allclose(b.sigma, C, rtol=1e-12)


def test_rank_one_exactness(ico, canonical_wave):
    lv = Level(ico, MediumParameters(3.0), "pec", linear_solver="direct")
    ing = compute_ingredients(solve(lv, canonical_wave), lv.params)
    Z = lv.system
    g = sd_rhs(lv, ing, normal_component(lv.mesh, KITE_FIELD))
    b = solve_full_tensor(Z, np.outer(g, g.conj()), tol=TOL)
    u = np.linalg.solve(Z, g)
    ref = np.outer(u, u.conj())
    assert np.linalg.norm(b.sigma - ref) <= 10 * TOL * np.linalg.norm(ref)


def test_kronecker_brute_force(rng):
    Z1, Z2 = well_conditioned(rng, 20), well_conditioned(rng, 20)
    C = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
    ref = kron_solve(Z1, Z2, C)
    b = solve_moment_block(Z1, Z2, C, tol=TOL)
    assert np.linalg.norm(b.sigma - ref) <= 10 * TOL * np.linalg.norm(ref)


def test_rectangular_blocks_and_adjoint_symmetry(rng):
    Z1, Z2 = well_conditioned(rng, 9), well_conditioned(rng, 14)
    g1, g2 = rng.standard_normal((3, 9)) + 1j, rng.standard_normal((3, 14)) - 1j
    w = [0.2, 0.5, 1.0]
    s12 = solve_moment_block(Z1, Z2, assemble_moment_rhs(w, g1, g2), tol=1e-11).sigma
    s21 = solve_moment_block(Z2, Z1, assemble_moment_rhs(w, g2, g1), tol=1e-11).sigma
    assert s12.shape == (9, 14)
    np.testing.assert_allclose(s12, s21.conj().T, atol=1e-9 * np.abs(s12).max())


def test_factored_agrees_with_vectorised(rng):
    Z1, Z2 = well_conditioned(rng, 12), well_conditioned(rng, 8)
    g1, g2 = rng.standard_normal((2, 12)) + 0.5j, rng.standard_normal((2, 8))
    w = np.array([1 / 3, 0.7])

    def direct(Z):
        return lambda B: (np.linalg.solve(Z, B), 0)

    fb = solve_moment_block_factored(direct(Z1), direct(Z2), w, g1, g2)
    vb = solve_moment_block(Z1, Z2, assemble_moment_rhs(w, g1, g2), tol=1e-12)
    np.testing.assert_allclose(fb.dense(), vb.sigma, atol=1e-9 * np.abs(vb.sigma).max())
    P1, P2 = rng.standard_normal((5, 12)), rng.standard_normal((4, 8))
    np.testing.assert_allclose(fb.observe(P1, P2), P1 @ vb.sigma @ P2.T, atol=1e-9 * np.abs(vb.sigma).max())


def test_callable_right_factor_rejected():
    from fosb_em.tensor import _as_apply_h

    with pytest.raises(TypeError):
        _as_apply_h(lambda v: v)


# combination ----------------------------------------------------------------


@pytest.mark.parametrize("hermitian", [False, True])
def test_equal_levels_telescope(rng, hermitian):
    n = 10
    Z = well_conditioned(rng, n)
    g = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
    C = assemble_moment_rhs([0.4, 1.0], g, g)
    sigma = solve_full_tensor(Z, C, tol=1e-12).sigma
    Pm = rng.standard_normal((3 * 4, n)) + 1j * rng.standard_normal((3 * 4, n))
    sets = build_index_sets(0, 3, hermitian)
    blocks = [MomentBlock(l1, l2, s, sigma=sigma, multiplicity=m) for l1, l2, s, m in sets.blocks()]
    P = {l: Pm for l in range(4)}
    ct = combine_ct(blocks, P, 0.5, sets)
    ref = 0.25 * Pm @ sigma @ Pm.conj().T
    np.testing.assert_allclose(ct.matrix, ref, atol=1e-10 * np.abs(ref).max())
    assert ct.hermitian_defect() <= 1e-14
    assert ct.variances.shape == (4, 3) and np.all(ct.variances >= 0)


def test_missing_block(rng):
    sets = build_index_sets(0, 2, hermitian=True)
    blocks = [MomentBlock(2, 0, 1, sigma=np.eye(3), multiplicity=2)]
    with pytest.raises(ValueError, match="missing"):
        combine_ct(blocks, {l: np.eye(3) for l in range(3)}, 1.0, sets)


def test_multilevel_ct_is_hermitian(rng):
    sizes = [4, 7, 11]
    Z = {l: well_conditioned(rng, n) for l, n in enumerate(sizes)}
    g = {l: rng.standard_normal((1, n)) + 1j for l, n in enumerate(sizes)}
    P = {l: rng.standard_normal((6, n)) for l, n in enumerate(sizes)}
    sets = build_index_sets(0, 2, hermitian=True)
    blocks = []
    for l1, l2, s, m in sets.blocks():
        b = solve_moment_block(Z[l1], Z[l2], assemble_moment_rhs([1 / 3], g[l1], g[l2]), tol=1e-11, l1=l1, l2=l2, sign=s)
        b.multiplicity = m
        blocks.append(b)
    ct = combine_ct(blocks, P, 1.0, sets)
    assert ct.hermitian_defect() <= 1e-14
    assert np.all(np.isreal(np.diag(ct.matrix)))


# accounting ---------------------------------------------------------------


def test_fichera_efficiency_numbers():
    m = efficiency_metrics([270, 792, 3204], build_index_sets(0, 2, hermitian=True))
    assert m["blocks"] == {(2, 0): 865_080, (1, 1): 627_264, (1, 0): 213_840}
    assert m["full"] == 10_265_616
    assert m["N_hat"] == 1_706_184
    assert m["N_hat_max"] == 865_080
    assert m["efficiency"] == pytest.approx(10_265_616 / 1_706_184, rel=1e-15)
    assert round(m["efficiency"], 2) == 6.02
    # the published figure divides the rounded full size 1.00e7
    assert round(1.00e7 / m["N_hat"], 3) == 5.861


def test_single_level_efficiency():
    m = efficiency_metrics([500], build_index_sets(0, 0))
    assert m["efficiency"] == 1 and m["efficiency_max"] == 1


def test_efficiency_rejects_bad_counts():
    with pytest.raises(ValueError):
        efficiency_metrics([0, 10], build_index_sets(0, 1))
