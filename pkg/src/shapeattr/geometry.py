"""Parameterized deformations of the unit ball used as probing stimuli."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, PreconditionViolation
from .noise import NoiseField, fbm_many

FAMILIES = ("LpLow", "LpHigh", "Noise", "Oval", "Octahedron", "Sphere", "Cube")
SWEEP_FAMILIES = ("LpLow", "LpHigh", "Noise", "Oval")
_ALIASES = {"Octahedron": ("LpLow", 1.0), "Sphere": ("LpLow", 2.0), "Cube": ("LpHigh", 100.0)}
# Oval runs from the sphere (1) down to the thin rod (1/10)
_RANGES = {"LpLow": (1.0, 2.0), "LpHigh": (2.0, 100.0), "Noise": (0.0, 0.5), "Oval": (1.0, 0.1)}
MAX_SUBDIVISION = 8


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    normals: np.ndarray  # (V, 3), unit
    faces: np.ndarray  # (F, 3) int64

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.normals = np.asarray(self.normals, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def validate(self):
        """Raise ``PreconditionViolation`` unless the mesh invariants hold."""
        v, n, f = self.vertices, self.normals, self.faces
        if v.ndim != 2 or v.shape[1] != 3 or n.shape != v.shape:
            raise PreconditionViolation("vertices and normals must both be (V, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise PreconditionViolation("faces must be (F, 3)")
        if len(v) < 4 or len(f) < 4:
            raise PreconditionViolation("a mesh needs at least 4 vertices and 4 faces")
        if f.min() < 0 or f.max() >= len(v):
            raise PreconditionViolation("face index out of range")
        if np.abs(np.linalg.norm(n, axis=1) - 1.0).max() > 1e-9:
            raise PreconditionViolation("normals must be unit length")
        if not np.isfinite(v).all():
            raise PreconditionViolation("non-finite vertex")
        return self

    def face_normals(self):
        v = self.vertices
        f = self.faces
        c = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return c / np.linalg.norm(c, axis=1, keepdims=True)

    def radii(self):
        return np.linalg.norm(self.vertices, axis=1)

    def write_obj(self, path):
        """Write ASCII OBJ with v/vn/f records and 1-based indices."""
        with open(path, "w") as fh:
            fh.write(f"# {self.n_vertices} vertices, {self.n_faces} faces\n")
            for x, y, z in self.vertices:
                fh.write(f"v {x:.10g} {y:.10g} {z:.10g}\n")
            for x, y, z in self.normals:
                fh.write(f"vn {x:.10g} {y:.10g} {z:.10g}\n")
            for a, b, c in self.faces + 1:
                fh.write(f"f {a}//{a} {b}//{b} {c}//{c}\n")


def read_obj(path):
    """Read the subset of OBJ written by :meth:`TriangleMesh.write_obj`."""
    verts, norms, faces = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(t) for t in parts[1:4]])
            elif parts[0] == "vn":
                norms.append([float(t) for t in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(t.split("/")[0]) - 1 for t in parts[1:4]])
    verts = np.array(verts)
    faces = np.array(faces, dtype=np.int64)
    if len(norms) != len(verts):
        return TriangleMesh(verts, vertex_normals(verts, faces), faces)
    norms = np.array(norms)
    return TriangleMesh(verts, norms / np.linalg.norm(norms, axis=1, keepdims=True), faces)


@dataclass(frozen=True)
class StimulusSpec:
    family: str
    p: float
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown stimulus family {self.family!r}")
        if self.family in _ALIASES:
            return
        lo, hi = sorted(_RANGES[self.family])
        if not lo - 1e-12 <= self.p <= hi + 1e-12:
            raise InvalidArgument(f"{self.family} requires p in [{lo}, {hi}], got {self.p}")

    def canonical(self):
        """Resolve the Octahedron/Sphere/Cube aliases to (family, p)."""
        if self.family in _ALIASES:
            return _ALIASES[self.family]
        return self.family, float(self.p)


def _icosahedron():
    t = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _subdivide(v, f):
    # one midpoint vertex per undirected edge, keyed by sorted endpoints
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges.sort(axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mid = v[uniq[:, 0]] + v[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    nf = len(f)
    m01 = inv[:nf] + len(v)
    m12 = inv[nf : 2 * nf] + len(v)
    m20 = inv[2 * nf :] + len(v)
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    faces = np.concatenate(
        [
            np.stack([a, m01, m20], axis=1),
            np.stack([b, m12, m01], axis=1),
            np.stack([c, m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return np.concatenate([v, mid]), faces


def vertex_normals(vertices, faces):
    """Area-weighted average of incident face normals, normalized."""
    v = vertices
    cross = np.cross(v[faces[:, 1]] - v[faces[:, 0]], v[faces[:, 2]] - v[faces[:, 0]])
    acc = np.zeros_like(v)
    for k in range(3):
        np.add.at(acc, faces[:, k], cross)
    return acc / np.linalg.norm(acc, axis=1, keepdims=True)


_SPHERE_CACHE = {}


def unit_sphere_mesh(subdivision_level):
    """Icosphere with ``10 * 4**level + 2`` vertices on the unit sphere."""
    if int(subdivision_level) != subdivision_level or not 0 <= subdivision_level <= MAX_SUBDIVISION:
        raise InvalidArgument(f"subdivision_level must be an integer in [0, {MAX_SUBDIVISION}]")
    level = int(subdivision_level)
    if level not in _SPHERE_CACHE:
        v, f = _icosahedron()
        for _ in range(level):
            v, f = _subdivide(v, f)
        v.setflags(write=False)
        f.setflags(write=False)
        _SPHERE_CACHE[level] = (v, f)
    v, f = _SPHERE_CACHE[level]
    # on the unit sphere the outward normal is the position itself
    return TriangleMesh(v.copy(), v.copy(), f.copy())


def _require_unit(mesh):
    r = np.linalg.norm(mesh.vertices, axis=1)
    if np.abs(r - 1.0).max() > 1e-9:
        raise PreconditionViolation("input vertices must lie on the unit sphere")


def lp_norm(v, p):
    """Row-wise L_p norm, scaled by the max component so large ``p`` cannot overflow."""
    a = np.abs(np.asarray(v, dtype=np.float64))
    m = a.max(axis=-1)
    safe = np.where(m > 0, m, 1.0)
    return m * np.sum((a / safe[..., None]) ** p, axis=-1) ** (1.0 / p)


def deform_lp(mesh, p):
    """Radially rescale each vertex onto the L_p unit ball."""
    if not p >= 1:
        raise InvalidArgument(f"p must be >= 1, got {p}")
    _require_unit(mesh)
    v = mesh.vertices / lp_norm(mesh.vertices, p)[:, None]
    return TriangleMesh(v, vertex_normals(v, mesh.faces), mesh.faces.copy())


def deform_noise(mesh, magnitude, noise):
    """Scale each radius by ``1 + magnitude * fbm(v)``."""
    if not 0 <= magnitude <= 0.5:
        raise InvalidArgument(f"noise magnitude must be in [0, 0.5], got {magnitude}")
    _require_unit(mesh)
    n = fbm_many(mesh.vertices, noise)
    v = mesh.vertices * (1.0 + magnitude * n)[:, None]
    if magnitude == 0:
        return TriangleMesh(v, mesh.normals.copy(), mesh.faces.copy())
    return TriangleMesh(v, vertex_normals(v, mesh.faces), mesh.faces.copy())


def deform_oval(mesh, factor):
    """Scale X and Z by ``factor`` and leave Y alone."""
    if not 0.1 - 1e-12 <= factor <= 1.0 + 1e-12:
        raise InvalidArgument(f"oval factor must be in [0.1, 1], got {factor}")
    v = mesh.vertices * np.array([factor, 1.0, factor])
    if factor == 1:
        return TriangleMesh(v, mesh.normals.copy(), mesh.faces.copy())
    return TriangleMesh(v, vertex_normals(v, mesh.faces), mesh.faces.copy())


def parameter_sweep(family, count, seed=0):
    """Evenly spaced stimuli covering a family's parameter range, endpoints included.

    LpHigh is spaced logarithmically; the other families linearly.  Oval
    runs from 1 down to 0.1.
    """
    if family not in _RANGES:
        raise InvalidArgument(f"no sweep defined for family {family!r}")
    if int(count) != count or count < 2:
        raise InvalidArgument("sweep count must be an integer >= 2")
    lo, hi = _RANGES[family]
    if family == "LpHigh":
        ps = np.geomspace(lo, hi, int(count))
    else:
        ps = np.linspace(lo, hi, int(count))
    ps[0], ps[-1] = lo, hi
    return [StimulusSpec(family, float(p), seed) for p in ps]


def build_stimulus(spec, subdivision_level=5, noise=None):
    """Generate the mesh described by ``spec``.

    ``noise`` overrides the fBm parameters for the Noise family; its seed is
    replaced by ``spec.seed`` so the pattern is fixed per stimulus seed.
    """
    family, p = spec.canonical()
    base = unit_sphere_mesh(subdivision_level)
    if family in ("LpLow", "LpHigh"):
        return deform_lp(base, p)
    if family == "Noise":
        nf = noise or NoiseField()
        nf = NoiseField(nf.octaves, nf.lacunarity, nf.gain, int(spec.seed), nf.frequency)
        return deform_noise(base, p, nf)
    return deform_oval(base, p)


def normal_spread(mesh):
    """Per-face largest angle (radians) between the face's three vertex normals."""
    n = mesh.normals[mesh.faces]
    d01 = np.einsum("ij,ij->i", n[:, 0], n[:, 1])
    d12 = np.einsum("ij,ij->i", n[:, 1], n[:, 2])
    d20 = np.einsum("ij,ij->i", n[:, 2], n[:, 0])
    return np.arccos(np.clip(np.minimum(np.minimum(d01, d12), d20), -1.0, 1.0))


def flatness(mesh, tolerance_deg=1.0):
    """Fraction of faces whose vertex normals spread by less than ``tolerance_deg``.

    A linear average of ``1 - spread`` is not usable as a planarity proxy:
    the total normal turning is roughly conserved, so sharpening edges
    cancels the flattening faces.
    """
    return float(np.mean(normal_spread(mesh) < np.radians(tolerance_deg)))
