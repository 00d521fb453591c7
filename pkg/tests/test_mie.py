import numpy as np
import pytest

from fosb_em.mie import (
    MieConfig,
    MieConvergenceError,
    amplitude_functions,
    extinction_cross_section,
    mie_coefficients,
    mie_far_field,
    mie_field,
    scattering_cross_section,
)
from fosb_em.operators import plane_angles
from fosb_em.solve import PlaneWave, rcs

MU = np.array([1.0, 0.5, 0.0, -0.3, -1.0])

# Frozen from an independent Mie code (miepython 3.3, 'wiscombe' normalisation,
# i.e. the raw Bohren-Huffman S1, S2). That code uses exp(+i w t); the
# library uses exp(-i w t), hence the complex conjugate below.
REF = {
    (2.1, 3.0): (
        [6.755307689543209 + 4.9341038729937825j, 1.5749776882267825 + 0.3434073001094128j,
         -0.9301683942568879 - 0.5812666464783411j, -1.2791490851142244 - 0.3632769472568153j,
         0.8471014255549896 + 0.0883334288629967j],
        [6.755307689543209 + 4.9341038729937825j, 2.076309333805876 - 0.5581901088963268j,
         -0.0756959169047244 - 0.8486552145625856j, -0.5882795373142199 - 0.3240061034036906j,
         -0.8471014255549896 - 0.0883334288629967j],
    ),
    (1.9, 5.0): (
        [24.45165112840695 + 5.412725000740891j, -3.7253963018565974 - 0.7945853195357727j,
         1.5944685731411232 - 0.0313895755770351j, 1.4855535802081299 - 0.8496324265275037j,
         1.4479096113606882 - 0.2186144634067562j],
        [24.45165112840695 + 5.412725000740891j, -3.2885540671278966 - 0.7095382293752045j,
         0.8504103747657448 + 1.2362710315148204j, 1.0227553509042209 - 0.9543941592835292j,
         -1.4479096113606882 + 0.2186144634067562j],
    ),
}
QEXT_21_3 = 3.002358973130315  # same source


@pytest.mark.parametrize("eps, x", list(REF))
def test_amplitude_functions_vs_frozen_reference(eps, x):
    S1, S2 = amplitude_functions(MieConfig(x, eps_r=eps), MU)
    r1, r2 = REF[eps, x]
    np.testing.assert_allclose(S1, np.conj(r1), rtol=1e-9)
    np.testing.assert_allclose(S2, np.conj(r2), rtol=1e-9)


def test_extinction_efficiency_vs_frozen_reference():
    cfg = MieConfig(3.0, eps_r=2.1)
    assert extinction_cross_section(cfg) / np.pi == pytest.approx(QEXT_21_3, rel=1e-10)


@pytest.mark.parametrize("cfg", [MieConfig(3.0, eps_r=2.1), MieConfig(5.0, eps_r=1.9), MieConfig(3.0, pec=True)])
def test_lossless_energy_balance_and_optical_theorem(cfg):
    # no absorption: extinction equals scattering; extinction also follows from the forward amplitude
    ext = extinction_cross_section(cfg)
    assert ext > 0
    assert ext == pytest.approx(scattering_cross_section(cfg), rel=1e-8)
    w = PlaneWave([1.0, 0, 0], [0, 0, 1.0])
    F = mie_far_field(cfg, w, np.array([0.0])).F[0]
    assert (F @ np.conj(w.polarization)).imag / cfg.k0 == pytest.approx(ext, rel=1e-8)


def test_truncation_self_consistency(canonical_wave):
    th = plane_angles(360)
    base = MieConfig(3.0, eps_r=2.1)
    a = mie_far_field(base, canonical_wave, th).F
    b = mie_far_field(MieConfig(3.0, eps_r=2.1, n_max=base.terms() + 10), canonical_wave, th).F
    assert np.abs(a - b).max() <= 1e-10 * np.abs(a).max()


def test_unconverged_series_raises():
    with pytest.raises(MieConvergenceError):
        mie_coefficients(MieConfig(3.0, eps_r=2.1, n_max=4))


def test_no_contrast_no_field(canonical_wave):
    F = mie_far_field(MieConfig(3.0), canonical_wave, plane_angles(50)).F
    assert np.abs(F).max() < 1e-15


def test_canonical_configuration_symmetry(canonical_wave):
    th = plane_angles(1800)
    R = rcs(mie_far_field(MieConfig(3.0, eps_r=2.1), canonical_wave, th).F[:, 2])
    np.testing.assert_allclose(R[1:], R[1:][::-1], atol=1e-9)


def test_rotated_configuration(canonical_wave):
    rot = np.linalg.qr(np.random.default_rng(3).standard_normal((3, 3)))[0]
    cfg = MieConfig(3.0, eps_r=2.1)
    dirs = np.random.default_rng(4).standard_normal((20, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    F = mie_far_field(cfg, canonical_wave, dirs).F
    w = PlaneWave(rot @ canonical_wave.direction, rot @ canonical_wave.polarization)
    Fr = mie_far_field(cfg, w, dirs @ rot.T).F
    np.testing.assert_allclose(Fr, F @ rot.T, atol=1e-10)


def test_field_expansion_limits(canonical_wave):
    cfg = MieConfig(3.0, eps_r=2.1)
    pts = np.array([[1.5, 0.2, -0.4], [-2.0, 1.0, 0.5]])
    # zero contrast: total field is the incident wave
    np.testing.assert_allclose(mie_field(MieConfig(3.0), canonical_wave, pts), canonical_wave.E(pts, 3.0), atol=1e-14)
    # PEC: tangential total field vanishes on the sphere
    on = np.array([[0.6, 0.0, 0.8], [-0.48, 0.6, 0.64]]) * (1 + 1e-13)
    E = mie_field(MieConfig(3.0, pec=True), canonical_wave, on)
    n = on / np.linalg.norm(on, axis=1)[:, None]
    assert np.abs(np.cross(n, E)).max() < 1e-9
    # far away the scattered field follows the far-field pattern
    xhat = np.array([[np.cos(0.8), np.sin(0.8), 0.0]])
    R = 200.0
    Es = mie_field(cfg, canonical_wave, R * xhat, scattered_only=True)[0]
    F = mie_far_field(cfg, canonical_wave, np.array([0.8])).F[0]
    ff = np.exp(3j * R) / (4 * np.pi * R) * F
    assert np.linalg.norm(Es - ff) <= 2e-2 * np.linalg.norm(ff)
    with pytest.raises(ValueError):
        mie_field(cfg, canonical_wave, np.array([[0.1, 0, 0]]))


def test_invalid_config():
    with pytest.raises(ValueError):
        MieConfig(-1.0)
    with pytest.raises(ValueError):
        MieConfig(1.0, eps_r=-2.0)
