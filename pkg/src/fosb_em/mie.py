"""Mie series for plane-wave scattering by a homogeneous or PEC sphere.

Far fields follow the library convention ``E_sc ~ exp(ik|x|)/(4 pi |x|) F``
with time dependence ``exp(-i w t)``. The series uses the Bohren-Huffman
amplitude functions ``S1, S2``; spherical Bessel functions come from scipy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import spherical_jn, spherical_yn

from .solve import FarFieldSample, PlaneWave


class MieConvergenceError(RuntimeError):
    """The truncated series has not decayed at its last terms."""


@dataclass(frozen=True)
class MieConfig:
    k0: float
    radius: float = 1.0
    eps_r: float = 1.0
    mu_r: float = 1.0
    pec: bool = False
    n_max: Optional[int] = None

    def __post_init__(self):
        if self.k0 <= 0 or self.radius <= 0:
            raise ValueError("k0 and radius must be positive")
        if not self.pec and (self.eps_r <= 0 or self.mu_r <= 0):
            raise ValueError("eps_r and mu_r must be positive")

    @property
    def size_parameter(self) -> float:
        return self.k0 * self.radius

    def terms(self) -> int:
        if self.n_max is not None:
            return self.n_max
        x = self.size_parameter
        m = 1.0 if self.pec else np.sqrt(self.eps_r * self.mu_r)
        return int(np.ceil(max(x, m * x) + 4.05 * max(x, m * x) ** (1 / 3) + 10))


def _riccati(n, z):
    """``j_n(z)``, ``[z j_n(z)]'``, ``h_n(z)``, ``[z h_n(z)]'``."""
    j = spherical_jn(n, z)
    jd = spherical_jn(n, z, derivative=True)
    y = spherical_yn(n, z)
    yd = spherical_yn(n, z, derivative=True)
    h = j + 1j * y
    hd = jd + 1j * yd
    return j, j + z * jd, h, h + z * hd


def mie_coefficients(cfg: MieConfig):
    """Scattering coefficients ``(a_n, b_n)`` for ``n = 1..n_max``."""
    n = np.arange(1, cfg.terms() + 1)
    x = cfg.size_parameter
    jx, psi_x, hx, xi_x = _riccati(n, x)
    if cfg.pec:
        return _checked(psi_x / xi_x, jx / hx)
    m = np.sqrt(cfg.eps_r * cfg.mu_r)
    mu = cfg.mu_r
    jm, psi_m, _, _ = _riccati(n, m * x)
    a = (m**2 * jm * psi_x - mu * jx * psi_m) / (m**2 * jm * xi_x - mu * hx * psi_m)
    b = (mu * jm * psi_x - jx * psi_m) / (mu * jm * xi_x - hx * psi_m)
    return _checked(a, b)


def _checked(a, b, rtol: float = 1e-12):
    mag = np.abs(a) + np.abs(b)
    if not np.all(np.isfinite(mag)) or mag[-3:].max() > rtol * mag.max():
        raise MieConvergenceError(
            f"Mie series not converged with {mag.size} terms (last term {mag[-1]:.2e}); increase n_max"
        )
    return a, b


def _angular(n_max: int, mu: np.ndarray):
    """``pi_n`` and ``tau_n`` for ``n = 1..n_max`` at ``cos(theta) = mu``."""
    pi = np.zeros((n_max + 1,) + mu.shape)
    tau = np.zeros_like(pi)
    pi[1] = 1.0
    tau[1] = mu
    for n in range(2, n_max + 1):
        pi[n] = (2 * n - 1) / (n - 1) * mu * pi[n - 1] - n / (n - 1) * pi[n - 2]
        tau[n] = n * mu * pi[n] - (n + 1) * pi[n - 1]
    return pi[1:], tau[1:]


def amplitude_functions(cfg: MieConfig, cos_theta: np.ndarray):
    a, b = mie_coefficients(cfg)
    n = np.arange(1, a.size + 1)
    pi, tau = _angular(a.size, np.asarray(cos_theta, dtype=float))
    c = ((2 * n + 1) / (n * (n + 1)))[:, None]
    S1 = np.sum(c * (a[:, None] * pi + b[:, None] * tau), axis=0)
    S2 = np.sum(c * (a[:, None] * tau + b[:, None] * pi), axis=0)
    return S1, S2


def _real_polarization_far_field(cfg, d, e, dirs):
    ez = d
    ex = e / np.linalg.norm(e)
    ey = np.cross(ez, ex)
    ct = np.clip(dirs @ ez, -1.0, 1.0)
    st = np.sqrt(1.0 - ct**2)
    phi = np.arctan2(dirs @ ey, dirs @ ex)
    S1, S2 = amplitude_functions(cfg, ct)
    cp, sp = np.cos(phi), np.sin(phi)
    e_th = (ct * cp)[:, None] * ex + (ct * sp)[:, None] * ey - st[:, None] * ez
    e_ph = -sp[:, None] * ex + cp[:, None] * ey
    amp = 4.0 * np.pi / (-1j * cfg.k0)
    return amp * ((cp * S2)[:, None] * e_th - (sp * S1)[:, None] * e_ph) * np.linalg.norm(e)


def mie_far_field(cfg: MieConfig, wave: PlaneWave, theta) -> FarFieldSample:
    """Far-field pattern at plane angles ``theta`` (or explicit unit directions)."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 2:
        dirs = theta
    else:
        dirs = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=-1)
    d = wave.direction
    F = np.zeros(dirs.shape, complex)
    for part, scale in ((wave.polarization.real, 1.0), (wave.polarization.imag, 1j)):
        if np.linalg.norm(part) > 0:
            F += scale * _real_polarization_far_field(cfg, d, part, dirs)
    return FarFieldSample(theta, F)


def extinction_cross_section(cfg: MieConfig) -> float:
    a, b = mie_coefficients(cfg)
    n = np.arange(1, a.size + 1)
    return float(2 * np.pi / cfg.k0**2 * np.sum((2 * n + 1) * (a + b).real))


def scattering_cross_section(cfg: MieConfig) -> float:
    a, b = mie_coefficients(cfg)
    n = np.arange(1, a.size + 1)
    return float(2 * np.pi / cfg.k0**2 * np.sum((2 * n + 1) * (abs(a) ** 2 + abs(b) ** 2)))


def mie_field(cfg: MieConfig, wave: PlaneWave, points, scattered_only: bool = False) -> np.ndarray:
    """Exterior electric field from the vector spherical wave expansion.

    The scattered part uses the Bohren-Huffman expansion of an
    ``x``-polarised wave travelling along ``z`` in a local frame aligned with
    ``(p, d x p, d)``; the incident part is added in closed form.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros(pts.shape, complex)
    for part, scale in ((wave.polarization.real, 1.0), (wave.polarization.imag, 1j)):
        if np.linalg.norm(part) > 0:
            out += scale * np.linalg.norm(part) * _scattered_real_pol(cfg, wave.direction, part, pts)
    if not scattered_only:
        out += wave.E(pts, cfg.k0)
    return out


def _scattered_real_pol(cfg, d, e, pts):
    ex = e / np.linalg.norm(e)
    ez = d
    ey = np.cross(ez, ex)
    loc = np.stack([pts @ ex, pts @ ey, pts @ ez], axis=-1)
    r = np.linalg.norm(loc, axis=1)
    if np.any(r < cfg.radius * (1 - 1e-12)):
        raise ValueError("mie_field evaluates the exterior only")
    ct = loc[:, 2] / r
    st = np.sqrt(np.clip(1 - ct**2, 0, None))
    phi = np.arctan2(loc[:, 1], loc[:, 0])
    cp, sp = np.cos(phi), np.sin(phi)
    a, b = mie_coefficients(cfg)
    nmax = a.size
    n = np.arange(1, nmax + 1)[:, None]
    pi, tau = _angular(nmax, ct)
    rho = cfg.k0 * r
    En = (1j**n) * (2 * n + 1) / (n * (n + 1))
    Er = np.zeros(len(r), complex)
    Et = np.zeros(len(r), complex)
    Ep = np.zeros(len(r), complex)
    _, _, z, dz = _riccati(n, rho[None, :])
    cM, cN = -b[:, None], 1j * a[:, None]
    # M_o1n and N_e1n with outgoing radial functions
    M_t = cp * pi * z
    M_p = -sp * tau * z
    N_r = cp * n * (n + 1) * st * pi * z / rho
    N_t = cp * tau * dz / rho
    N_p = -sp * pi * dz / rho
    Er += np.sum(En * cN * N_r, axis=0)
    Et += np.sum(En * (cM * M_t + cN * N_t), axis=0)
    Ep += np.sum(En * (cM * M_p + cN * N_p), axis=0)
    er = loc / r[:, None]
    et = np.stack([ct * cp, ct * sp, -st], axis=-1)
    ep = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    Eloc = Er[:, None] * er + Et[:, None] * et + Ep[:, None] * ep
    return Eloc[:, :1] * ex + Eloc[:, 1:2] * ey + Eloc[:, 2:] * ez
