"""Surface meshes, scatterer generators and boundary perturbations."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np


class MeshError(ValueError):
    """Raised for invalid or degenerate surface meshes."""


AREA_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Closed, outward oriented triangulation.

    ``vertices`` is ``(nv, 3)`` float, ``triangles`` is ``(nt, 3)`` int with
    counter-clockwise ordering seen from outside.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    name: str = "mesh"

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("vertices must be (nv, 3) and triangles (nt, 3)")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def nv(self) -> int:
        return self.vertices.shape[0]

    @property
    def nt(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def corners(self) -> np.ndarray:
        """Triangle corner coordinates, ``(nt, 3, 3)``."""
        return self.vertices[self.triangles]

    @cached_property
    def _cross(self) -> np.ndarray:
        c = self.corners
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        a2 = 2.0 * self.areas
        with np.errstate(invalid="ignore", divide="ignore"):
            return self._cross / a2[:, None]

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges sorted by (min vertex, max vertex)."""
        e = np.sort(self.triangles[:, [1, 2, 2, 0, 0, 1]].reshape(-1, 3, 2), axis=2)
        return np.unique(e.reshape(-1, 2), axis=0)

    @cached_property
    def circumdiameters(self) -> np.ndarray:
        c = self.corners
        a = np.linalg.norm(c[:, 1] - c[:, 2], axis=1)
        b = np.linalg.norm(c[:, 2] - c[:, 0], axis=1)
        d = np.linalg.norm(c[:, 0] - c[:, 1], axis=1)
        return a * b * d / (2.0 * self.areas)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def volume(self) -> float:
        c = self.corners
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area weighted average of adjacent triangle normals, normalised."""
        acc = np.zeros((self.nv, 3))
        for i in range(3):
            np.add.at(acc, self.triangles[:, i], self._cross)
        return acc / np.linalg.norm(acc, axis=1)[:, None]

    def euler_characteristic(self) -> int:
        return self.nv - len(self.edges) + self.nt

    def validate(self) -> "SurfaceMesh":
        """Check closedness, orientation and non-degeneracy; return self."""
        if self.nt == 0:
            raise MeshError("empty mesh")
        small = np.flatnonzero(self.areas <= AREA_TOL)
        if small.size:
            raise MeshError(f"{small.size} degenerate triangles, first {small[0]}")
        directed = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        und = np.sort(directed, axis=1)
        key, counts = np.unique(und, axis=0, return_counts=True)
        if np.any(counts != 2):
            raise MeshError("mesh is not a closed 2-manifold (edge not shared by exactly 2 triangles)")
        d_key, d_counts = np.unique(directed, axis=0, return_counts=True)
        if np.any(d_counts != 1):
            raise MeshError("inconsistent triangle orientation")
        if self.volume <= 0:
            raise MeshError("normals point inwards (negative enclosed volume)")
        return self


def mesh_width(mesh: SurfaceMesh) -> float:
    """Largest triangle circumdiameter."""
    return float(mesh.circumdiameters.max())


def precision(h: float, k0: float) -> float:
    """Points per wavelength ``lambda / h``."""
    if h <= 0 or k0 <= 0:
        raise ValueError("h and k0 must be positive")
    return 2.0 * np.pi / (h * k0)


def _merge(points: np.ndarray, tris: np.ndarray, decimals: int = 9):
    key = np.round(points, decimals) + 0.0  # drop negative zeros
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    # keep the first original coordinate of each class for exactness
    first = np.full(len(uniq), -1)
    first[inv[::-1]] = np.arange(len(points))[::-1]
    return points[first], inv[tris]


_PHI = (1.0 + 5.0**0.5) / 2.0
_ICO_V = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ],
    dtype=float,
)
_ICO_T = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
)


def _subdivided_triangle(nu: int):
    """Barycentric grid points and local triangles of a face split ``nu`` times."""
    idx = {}
    pts = []
    for i in range(nu + 1):
        for j in range(nu + 1 - i):
            idx[i, j] = len(pts)
            pts.append((nu - i - j, i, j))
    tri = []
    for i in range(nu):
        for j in range(nu - i):
            tri.append((idx[i, j], idx[i + 1, j], idx[i, j + 1]))
            if i + j < nu - 1:
                tri.append((idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]))
    return np.array(pts, dtype=float) / nu, np.array(tri)


def geodesic_sphere(frequency: int, radius: float = 1.0) -> SurfaceMesh:
    """Icosahedral geodesic sphere with ``20 * frequency**2`` triangles."""
    if frequency < 1:
        raise ValueError("frequency must be >= 1")
    bary, loc = _subdivided_triangle(frequency)
    v0 = _ICO_V / np.linalg.norm(_ICO_V[0])
    pts = np.einsum("pk,fkd->fpd", bary, v0[_ICO_T]).reshape(-1, 3)
    tris = (loc[None, :, :] + bary.shape[0] * np.arange(20)[:, None, None]).reshape(-1, 3)
    pts = pts / np.linalg.norm(pts, axis=1)[:, None]
    v, t = _merge(pts, tris)
    v = radius * v / np.linalg.norm(v, axis=1)[:, None]
    return SurfaceMesh(v, t, name=f"sphere-nu{frequency}").validate()


def generate_sphere(refinement: int) -> SurfaceMesh:
    """Unit sphere from ``refinement`` uniform bisections of the icosahedron."""
    if refinement < 0:
        raise ValueError("refinement must be >= 0")
    return geodesic_sphere(2**refinement)


def _smallest_frequency(build: Callable[[int], SurfaceMesh], target_h: float, nu_max: int = 400):
    if not target_h > 0 or not np.isfinite(target_h):
        raise ValueError(f"invalid target_h {target_h}")
    lo = 1
    m = build(lo)
    if mesh_width(m) <= target_h:
        return m
    hi = 2
    while True:
        m = build(hi)
        if mesh_width(m) <= target_h:
            break
        lo = hi
        hi *= 2
        if hi > nu_max:
            raise ValueError(f"target_h {target_h} too small")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        mm = build(mid)
        if mesh_width(mm) <= target_h:
            hi, m = mid, mm
        else:
            lo = mid
    return m


def sphere_for_width(target_h: float, radius: float = 1.0) -> SurfaceMesh:
    """Coarsest geodesic sphere whose mesh width does not exceed ``target_h``."""
    return _smallest_frequency(lambda nu: geodesic_sphere(nu, radius), target_h)


# Kite body: image of the unit sphere under a polynomial diffeomorphism whose
# equatorial cross-section is the classical kite curve
# (cos s + 0.65 cos 2s - 0.65, 1.5 sin s). KITE_SCALE shrinks it uniformly
# (see the decisions ledger for the choice).
KITE_SCALE = 0.36


def kite_map(p: np.ndarray, scale: float = KITE_SCALE) -> np.ndarray:
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return scale * np.stack([x - 1.3 * y * y, 1.5 * y, z], axis=-1)


def generate_kite(target_h: float, scale: float = KITE_SCALE) -> SurfaceMesh:
    """Kite body meshed so that its width is at most ``target_h``."""

    def build(nu):
        s = geodesic_sphere(nu)
        return SurfaceMesh(kite_map(s.vertices, scale), s.triangles, name=f"kite-nu{nu}")

    return _smallest_frequency(build, target_h).validate()


def _grid_square(origin, u, v, n):
    """Right triangles on the square origin + [0,1]u + [0,1]v, normal u x v."""
    s = np.linspace(0.0, 1.0, n + 1)
    a, b = np.meshgrid(s, s, indexing="ij")
    pts = origin + a.reshape(-1, 1) * u + b.reshape(-1, 1) * v
    tris = []
    for i in range(n):
        for j in range(n):
            p00 = i * (n + 1) + j
            p10 = p00 + (n + 1)
            p01 = p00 + 1
            p11 = p10 + 1
            tris.append((p00, p10, p11))
            tris.append((p00, p11, p01))
    return pts, np.array(tris)


def fichera_quads():
    """Unit squares (origin, u, v) of side 0.5 bounding [-.5,.5]^3 minus [-.5,0]^3."""
    h = 0.5
    quads = []
    cells = [(i, j, k) for i in range(2) for j in range(2) for k in range(2) if (i, j, k) != (0, 0, 0)]
    occupied = set(cells)
    axes = np.eye(3)
    for c in cells:
        lo = np.array(c, dtype=float) * h - 0.5
        for ax in range(3):
            for side in (0, 1):
                nb = list(c)
                nb[ax] += 1 if side else -1
                if tuple(nb) in occupied:
                    continue
                u, v = axes[(ax + 1) % 3] * h, axes[(ax + 2) % 3] * h
                origin = lo + axes[ax] * h * side
                if side == 0:  # outward normal is -axis: swap to flip orientation
                    u, v = v, u
                quads.append((origin, u, v))
    return quads


def generate_fichera(target_h: float) -> SurfaceMesh:
    """Fichera cube ``[-0.5, 0.5]^3`` minus the octant ``[-0.5, 0]^3``.

    Every square of side 0.5 is split into ``n x n`` cells of two right
    triangles with ``n`` the smallest integer giving width ``<= target_h``.
    """
    if not target_h > 0:
        raise ValueError(f"invalid target_h {target_h}")
    n = max(1, int(np.ceil(0.5 * np.sqrt(2.0) / target_h - 1e-12)))
    pts, tris, off = [], [], 0
    for origin, u, v in fichera_quads():
        p, t = _grid_square(origin, u, v, n)
        pts.append(p)
        tris.append(t + off)
        off += len(p)
    v, t = _merge(np.concatenate(pts), np.concatenate(tris))
    v = np.round(v * 2 * n) / (2 * n)  # snap to the exact grid
    return SurfaceMesh(v, t, name=f"fichera-n{n}").validate()


# ----------------------------------------------------------------------------
# perturbations


@dataclass(frozen=True)
class PerturbationField:
    """Velocity field ``x -> v(x)`` on the nominal surface."""

    func: Callable[[np.ndarray], np.ndarray]
    name: str = "field"
    support: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(self.func(x), dtype=float)
        if self.support is not None:
            v = np.where(self.support(x)[..., None], v, 0.0)
        return v


def _kite_velocity(x: np.ndarray) -> np.ndarray:
    th = np.arctan2(x[..., 1], x[..., 0])
    z2 = x[..., 2] ** 2
    return np.stack(
        [(z2 - 1.0) * (np.cos(th) - 1.0), 0.25 * np.sin(th) * (1.0 - z2), np.zeros_like(z2)],
        axis=-1,
    )


KITE_FIELD = PerturbationField(_kite_velocity, name="kite")


class TranslationField(PerturbationField):
    def __init__(self, tau: Sequence[float]):
        tau = np.asarray(tau, dtype=float)
        super().__init__(lambda x: np.broadcast_to(tau, np.shape(x)).copy(), name="translation")


def perturb_mesh(mesh: SurfaceMesh, v, t: float, *, min_area: float = AREA_TOL) -> SurfaceMesh:
    """Move vertices to ``x + t v(x)``; ``v`` is a field or a ``(nv, 3)`` array."""
    disp = v(mesh.vertices) if callable(v) else np.asarray(v, dtype=float)
    if disp.shape != mesh.vertices.shape:
        raise MeshError("displacement must have one vector per vertex")
    out = SurfaceMesh(mesh.vertices + t * disp, mesh.triangles, name=f"{mesh.name}+t{t:g}")
    bad = np.flatnonzero(out.areas <= min_area)
    if bad.size:
        raise MeshError(f"perturbation with t={t} degenerates {bad.size} triangles (first {bad[0]})")
    return out


# ----------------------------------------------------------------------------
# levels


@dataclass
class LevelHierarchy:
    meshes: list
    widths: list = field(default_factory=list)
    L0: int = 0
    q: float = 2.0

    def __post_init__(self):
        if not self.widths:
            self.widths = [mesh_width(m) for m in self.meshes]
        if any(b >= a for a, b in zip(self.widths, self.widths[1:])):
            raise MeshError("mesh widths must decrease strictly with the level")

    @property
    def L(self) -> int:
        return self.L0 + len(self.meshes) - 1

    def __getitem__(self, level: int) -> SurfaceMesh:
        return self.meshes[level - self.L0]


def build_hierarchy(shape: str, k0: float, precisions: Sequence[float], L0: int = 0) -> LevelHierarchy:
    """Meshes with ``lambda / r`` widths for each precision ``r``."""
    lam = 2.0 * np.pi / k0
    gen = {"sphere": sphere_for_width, "kite": generate_kite, "fichera": generate_fichera}[shape]
    meshes = [gen(lam / r) for r in precisions]
    widths = [mesh_width(m) for m in meshes]
    q = float(np.exp(-np.polyfit(np.arange(len(widths)), np.log(widths), 1)[0])) if len(widths) > 1 else 2.0
    return LevelHierarchy(meshes, widths, L0=L0, q=q)


# ----------------------------------------------------------------------------
# EMESH files


def write_emesh(mesh: SurfaceMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write("EMESH 1\n")
        fh.write(f"{mesh.nv} {mesh.nt}\n")
        for p in mesh.vertices:
            fh.write(" ".join(repr(float(c)) for c in p) + "\n")
        for t in mesh.triangles:
            fh.write(f"{t[0]} {t[1]} {t[2]}\n")


def read_emesh(path) -> SurfaceMesh:
    with open(path) as fh:
        lines = [ln for ln in (l.strip() for l in fh) if ln and not ln.startswith("#")]
    if not lines or lines[0].split() != ["EMESH", "1"]:
        raise MeshError("missing 'EMESH 1' header")
    try:
        nv, nt = (int(s) for s in lines[1].split())
        v = np.array([[float(s) for s in ln.split()] for ln in lines[2 : 2 + nv]])
        t = np.array([[int(s) for s in ln.split()] for ln in lines[2 + nv : 2 + nv + nt]])
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed EMESH file: {exc}") from exc
    if v.shape != (nv, 3) or t.shape != (nt, 3):
        raise MeshError("EMESH counts do not match the data")
    return SurfaceMesh(v, t, name=str(path)).validate()
