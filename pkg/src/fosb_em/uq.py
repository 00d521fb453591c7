"""Monte Carlo reference and comparison metrics for shape uncertainty.

Each Monte Carlo draw gets its own random stream spawned from
``SeedSequence(seed)``, so estimates do not depend on the worker count or
on the order in which draws finish.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import KITE_FIELD, PerturbationField, SurfaceMesh, perturb_mesh
from .operators import DEFAULT_QUADRATURE, MediumParameters, QuadratureOptions
from .solve import Level, PlaneWave, SolverError, rcs, solve
from .tensor import fichera_bump, on_fichera_top

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RandomModel:
    """Named random velocity field with amplitude ``t``."""

    name: str
    t: float = 1.0

    def __post_init__(self):
        if self.name not in ("kite-rank1", "fichera-splines"):
            raise ValueError(f"unknown random model {self.name!r}")

    @property
    def n_params(self) -> int:
        return 1 if self.name == "kite-rank1" else 36

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, self.n_params)

    def field(self, mu: np.ndarray) -> PerturbationField:
        mu = np.asarray(mu, dtype=float)
        if self.name == "kite-rank1":
            return PerturbationField(lambda x: mu[0] * KITE_FIELD(x), name="kite-sample")
        C = mu.reshape(6, 6)

        def f(x):
            bx = np.stack([fichera_bump(i, x[..., 0]) for i in range(6)], axis=-1)
            by = np.stack([fichera_bump(j, x[..., 1]) for j in range(6)], axis=-1)
            vz = np.einsum("...i,ij,...j->...", bx, C, by)
            return np.stack([np.zeros_like(vz), np.zeros_like(vz), vz], axis=-1)

        return PerturbationField(f, name="fichera-sample", support=on_fichera_top)

    def sample(self, rng: np.random.Generator) -> PerturbationField:
        return self.field(self.draw(rng))


@dataclass
class McEstimate:
    theta: np.ndarray
    mean_F: np.ndarray  # (n_angles, 3)
    var_F: np.ndarray  # E|F - E F|^2 per component, unbiased
    mean_rcs: np.ndarray
    var_rcs: np.ndarray
    M: int
    seed: int
    samples: Optional[np.ndarray] = None  # (M, n_angles, 3)


def _one_draw(args):
    i, model, mesh, params, wave, theta, problem, quad, tol, linear_solver, child = args
    rng = np.random.default_rng(child)
    v = model.sample(rng)
    try:
        mt = perturb_mesh(mesh, v, model.t)
        lv = Level(mt, params, problem, quad, linear_solver=linear_solver)
        sol = solve(lv, wave, tol)
    except SolverError as e:
        raise SolverError(f"Monte Carlo draw {i} failed: {e}", e.x, e.iterations, e.residuals) from e
    except Exception as e:
        raise RuntimeError(f"Monte Carlo draw {i} failed: {e}") from e
    return lv.far_field(sol.vector, theta).F


def mc_run(model: RandomModel, mesh: SurfaceMesh, params: MediumParameters, wave: PlaneWave,
           theta: np.ndarray, runs: int, seed: int, problem: str = "de",
           quad: QuadratureOptions = DEFAULT_QUADRATURE, tol: float = 1e-6,
           linear_solver: str = "direct", workers: int = 1, keep_samples: bool = False) -> McEstimate:
    if runs < 2:
        raise ValueError("at least two Monte Carlo runs are needed")
    children = np.random.SeedSequence(seed).spawn(runs)
    jobs = [(i, model, mesh, params, wave, theta, problem, quad, tol, linear_solver, children[i])
            for i in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            out = list(ex.map(_one_draw, jobs))
    else:
        out = [_one_draw(j) for j in jobs]
    S = np.stack(out)
    R = rcs(S.reshape(-1, 3)).reshape(S.shape)
    # shifted two-pass variance: identical draws give exactly zero
    D = S - S[0]
    dm = D.mean(axis=0)
    mean = S[0] + dm
    var = np.sum(np.abs(D - dm) ** 2, axis=0) / (runs - 1)
    return McEstimate(np.asarray(theta), mean, var, R.mean(axis=0), R.var(axis=0, ddof=1), runs, seed,
                      S if keep_samples else None)


def variance_bands(F: np.ndarray, V: np.ndarray, t: Optional[float] = None) -> dict:
    """RCS curve and the band at amplitudes ``|F_c| -/+ 2 sigma_c``.

    With ``t`` the variance is taken as ``t^2 V`` (first-order model).
    """
    F = np.asarray(F)
    V = np.asarray(V, dtype=float)
    if np.any(V < 0):
        raise ValueError("variances must be non-negative")
    sigma = np.sqrt(V if t is None else t**2 * V)
    amp = np.abs(F)
    return {
        "rcs": rcs(amp),
        "lower": rcs(np.maximum(amp - 2 * sigma, 0.0)),
        "upper": rcs(amp + 2 * sigma),
        "sigma": sigma,
    }


def compare_variances(a: np.ndarray, b: np.ndarray, theta: Optional[np.ndarray] = None) -> float:
    """Relative ``L2`` difference ``|a - b| / |b|`` by the trapezoidal rule on the angle grid."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("variance curves are on different grids")
    if theta is None:
        theta = np.linspace(0.0, 2 * np.pi, a.shape[0], endpoint=False)
    theta = np.asarray(theta)
    if theta.shape[0] != a.shape[0]:
        raise ValueError("angle grid does not match the curves")
    num = np.trapezoid((a - b) ** 2, theta, axis=0)
    den = np.sum(np.trapezoid(b**2, theta, axis=0))
    num = np.sum(num)
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return float(np.sqrt(num / den))
