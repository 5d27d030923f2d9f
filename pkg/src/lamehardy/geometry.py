"""Quadrature on closed spheres/ellipsoids and on balls.

Surfaces for m=3 come from icosahedral subdivision with one node per facet;
for m=4 from a Gauss-Legendre x uniform product rule on S^3.  Ellipsoids are
linear images of the sphere rule, with the surface element rescaled exactly.
Volumes use polar coordinates about a pole inside the ball, which keeps
weakly singular integrands centred at the pole well resolved.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError

MAX_LEVEL = {3: 6, 4: 3}
MAX_RESOLUTION = 64


@dataclass(frozen=True)
class SurfaceMesh:
    m: int
    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    tangent_frames: np.ndarray  # (N, m-1, m)
    h: float
    descriptor: dict = field(compare=False)

    def __post_init__(self):
        for arr in (self.nodes, self.normals, self.weights, self.tangent_frames):
            arr.setflags(write=False)

    @property
    def size(self):
        return self.nodes.shape[0]

    @property
    def area(self):
        return float(self.weights.sum())

    @property
    def center(self):
        return np.asarray(self.descriptor["center"], dtype=float)

    @property
    def radii(self):
        return np.asarray(self.descriptor["radii"], dtype=float)

    def tree(self):
        return _tree_for(self)

    def contains(self, x):
        """Analytic insideness test from the shape descriptor."""
        x = np.asarray(x, dtype=float)
        q = ((x - self.center) / self.radii) ** 2
        return q.sum(axis=-1) < 1.0

    def distance_to_nodes(self, x):
        d, _ = self.tree().query(np.atleast_2d(np.asarray(x, dtype=float)))
        return d

    def to_json(self):
        return {
            "descriptor": dict(self.descriptor),
            "nodes": self.nodes.tolist(),
            "normals": self.normals.tolist(),
            "weights": self.weights.tolist(),
        }


_TREES = {}


def _tree_for(mesh):
    key = id(mesh)
    hit = _TREES.get(key)
    if hit is None or hit[0] is not mesh:
        hit = (mesh, cKDTree(mesh.nodes))
        _TREES[key] = hit
    return hit[1]


@dataclass(frozen=True)
class VolumeGrid:
    m: int
    points: np.ndarray
    weights: np.ndarray
    pole: np.ndarray
    cell_size: float
    descriptor: dict = field(compare=False)

    def __post_init__(self):
        for arr in (self.points, self.weights, self.pole):
            arr.setflags(write=False)

    @property
    def volume(self):
        return float(self.weights.sum())


# -- icosphere ----------------------------------------------------------------

def _icosahedron():
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return verts, faces


@lru_cache(maxsize=None)
def icosphere(level):
    """Vertices on the unit sphere and triangles of the subdivided icosahedron."""
    verts, faces = _icosahedron()
    verts = list(verts)
    for _ in range(level):
        cache = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            idx = cache.get(key)
            if idx is None:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                idx = cache[key] = len(verts) - 1
            return idx

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.array(new_faces)
    V = np.array(verts)
    F = np.asarray(faces)
    V.setflags(write=False)
    F.setflags(write=False)
    return V, F


def _spherical_triangle_area(a, b, c):
    # Van Oosterom-Strackee solid angle
    num = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(num, den)


def _unit_sphere_rule_3(level):
    V, F = icosphere(level)
    a, b, c = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    cen = (a + b + c) / 3.0
    u = cen / np.linalg.norm(cen, axis=1)[:, None]
    return u, _spherical_triangle_area(a, b, c)


def _unit_sphere_rule_4(level):
    n = 3 * 2 ** level
    xg, wg = np.polynomial.legendre.leggauss(n)
    ang = 0.5 * np.pi * (xg + 1.0)
    wang = 0.5 * np.pi * wg
    nphi = 2 * n
    phi = (np.arange(nphi) + 0.5) * 2.0 * np.pi / nphi
    psi, th, ph = np.meshgrid(ang, ang, phi, indexing="ij")
    wpsi, wth, _ = np.meshgrid(wang, wang, phi, indexing="ij")
    s1, s2 = np.sin(psi), np.sin(th)
    u = np.stack([np.cos(psi), s1 * np.cos(th), s1 * s2 * np.cos(ph), s1 * s2 * np.sin(ph)], axis=-1)
    w = wpsi * wth * (2.0 * np.pi / nphi) * s1 ** 2 * s2
    return u.reshape(-1, 4), w.reshape(-1)


def unit_sphere_rule(m, level):
    """Directions and weights of the closed-surface rule on the unit sphere S^{m-1}."""
    if m == 3:
        return _unit_sphere_rule_3(level)
    if m == 4:
        return _unit_sphere_rule_4(level)
    raise DomainError(f"surfaces are only built for m in (3, 4), got m={m}")


def _frames(normals):
    """Orthonormal tangent bases via a Householder reflector per node."""
    N, m = normals.shape
    k = np.argmax(np.abs(normals), axis=1)
    s = np.sign(normals[np.arange(N), k])
    v = normals.copy()
    v[np.arange(N), k] += s
    H = np.eye(m)[None] - 2.0 * v[:, :, None] * v[:, None, :] / np.einsum("ni,ni->n", v, v)[:, None, None]
    # column k of H is -s*n; the others span the tangent space
    cols = np.array([[j for j in range(m) if j != kk] for kk in k])
    return np.take_along_axis(H.transpose(0, 2, 1), cols[:, :, None], axis=1)


def _check_level(m, level):
    if m not in MAX_LEVEL:
        raise DomainError(f"surfaces are only built for m in (3, 4), got m={m}")
    if not 0 <= level <= MAX_LEVEL[m]:
        raise DomainError(f"level {level} outside 0..{MAX_LEVEL[m]} for m={m}")


def build_ellipsoid_surface(m, level, radii, center=None):
    """Closed ellipsoid ``sum(((y - c)/r)^2) = 1`` discretized as the image of the sphere rule."""
    _check_level(m, level)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (m,)).copy()
    if np.any(radii <= 0):
        raise DomainError("radii must be positive")
    center = np.zeros(m) if center is None else np.asarray(center, dtype=float)
    if center.shape != (m,):
        raise DomainError(f"center must have {m} coordinates")
    u, w = unit_sphere_rule(m, level)
    nodes = center + u * radii
    g = u / radii
    gn = np.linalg.norm(g, axis=1)
    normals = g / gn[:, None]
    weights = w * np.prod(radii) * gn
    h = float(np.mean(weights) ** (1.0 / (m - 1)))
    shape = "sphere" if np.all(radii == radii[0]) else "ellipsoid"
    descriptor = {
        "shape": shape, "m": m, "level": int(level),
        "center": center.tolist(), "radii": radii.tolist(),
    }
    return SurfaceMesh(m, nodes, normals, weights, _frames(normals), h, descriptor)


def build_sphere_surface(m, level, radius=1.0, center=None):
    if radius <= 0:
        raise DomainError("radius must be positive")
    return build_ellipsoid_surface(m, level, [radius] * max(int(m), 1), center)


def mesh_from_descriptor(desc):
    try:
        m = int(desc["m"])
        level = int(desc["level"])
        radii = desc.get("radii")
        if radii is None:
            radii = [float(desc["radius"])] * m
        center = desc.get("center")
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed mesh descriptor: {desc!r}") from exc
    if desc.get("shape", "sphere") not in ("sphere", "ellipsoid"):
        raise DomainError(f"unsupported shape {desc.get('shape')!r}")
    return build_ellipsoid_surface(m, level, radii, center)


def tangent_frame(mesh, q):
    if not 0 <= q < mesh.size:
        raise DomainError(f"node index {q} out of range 0..{mesh.size - 1}")
    return mesh.tangent_frames[q]


def probe_pair(mesh, q, delta):
    """Points ``y_q - delta n_q`` (inside) and ``y_q + delta n_q`` (outside)."""
    if not delta > 0:
        raise DomainError(f"probe offset must be positive, got {delta}")
    if not 0 <= q < mesh.size:
        raise DomainError(f"node index {q} out of range")
    y, n = mesh.nodes[q], mesh.normals[q]
    x_plus, x_minus = y - delta * n, y + delta * n
    if not mesh.contains(x_plus):
        raise DomainError(f"inside probe at offset {delta} leaves the domain")
    return x_plus, x_minus


def build_ball_volume(m, resolution=16, radius=1.0, center=None, pole=None):
    """Polar quadrature of the ball ``|y - center| < radius`` about ``pole``.

    Radial Gauss-Legendre on ``(0, T(u))`` along each direction ``u`` of an
    angular rule, with ``T(u)`` the exact exit distance; weights carry the
    Jacobian ``t^(m-1)``.  ``pole`` defaults to the centre.
    """
    if m not in (3, 4):
        raise DomainError(f"volume grids are only built for m in (3, 4), got m={m}")
    if not 2 <= resolution <= MAX_RESOLUTION:
        raise DomainError(f"resolution {resolution} outside 2..{MAX_RESOLUTION}")
    center = np.zeros(m) if center is None else np.asarray(center, dtype=float)
    pole = center.copy() if pole is None else np.asarray(pole, dtype=float)
    off = pole - center
    if np.dot(off, off) >= radius ** 2:
        raise DomainError("pole must lie strictly inside the ball")

    if m == 3:
        xg, wg = np.polynomial.legendre.leggauss(resolution)
        th = np.arccos(-xg)
        nphi = 2 * resolution
        phi = (np.arange(nphi) + 0.5) * 2.0 * np.pi / nphi
        T, P = np.meshgrid(th, phi, indexing="ij")
        u = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1).reshape(-1, 3)
        wu = np.outer(wg, np.full(nphi, 2.0 * np.pi / nphi)).reshape(-1)
    else:
        level = max(0, int(np.ceil(np.log2(resolution / 3.0))))
        u, wu = _unit_sphere_rule_4(level)

    b = u @ off
    tmax = -b + np.sqrt(b * b - (np.dot(off, off) - radius ** 2))
    xr, wr = np.polynomial.legendre.leggauss(resolution)
    s = 0.5 * (xr + 1.0)
    t = tmax[:, None] * s[None, :]
    w = wu[:, None] * (0.5 * wr[None, :] * tmax[:, None]) * t ** (m - 1)
    pts = pole + t[:, :, None] * u[:, None, :]
    cell = float(radius * np.pi / resolution)
    descriptor = {"shape": "ball", "m": m, "resolution": int(resolution),
                  "center": center.tolist(), "radius": float(radius), "pole": pole.tolist()}
    return VolumeGrid(m, pts.reshape(-1, m), w.reshape(-1), pole, cell, descriptor)


def surface_patch_rule(mesh, q, rho, n_radial=8):
    """Polar product rule on the surface patch around nodes ``q``.

    The patch is the part of the ellipsoid lying over the tangent ball
    ``|t| < rho`` at each node, parametrized as a graph over the tangent
    space.  Returns ``(points, normals, weights, s)`` with shapes
    ``(Q, K, m)``, ``(Q, K, m)``, ``(Q, K)`` and ``(K,)``; ``s`` is the
    tangent radius of each rule point.  The radial Jacobian ``s^(m-2)`` and
    the graph area factor are folded into the weights.
    """
    m = mesh.m
    q = np.atleast_1d(q)
    xg, wg = np.polynomial.legendre.leggauss(n_radial)
    s = 0.5 * rho * (xg + 1.0)
    ws = 0.5 * rho * wg
    if m == 3:
        na = 4 * n_radial
        th = 2.0 * np.pi * np.arange(na) / na
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        wa = np.full(na, 2.0 * np.pi / na)
    else:
        dirs, wa = _unit_sphere_rule_3(1)
    tl = (s[:, None, None] * dirs[None]).reshape(-1, m - 1)
    wk = (ws[:, None] * s[:, None] ** (m - 2) * wa[None]).reshape(-1)
    sk = np.repeat(s, len(wa))

    c, r = mesh.center, mesh.radii
    x, nx = mesh.nodes[q], mesh.normals[q]
    p = x[:, None, :] + np.einsum("kj,qjm->qkm", tl, mesh.tangent_frames[q]) - c
    A = np.sum((nx / r) ** 2, axis=-1)[:, None]
    B = 2.0 * np.einsum("qkm,qm->qk", p / r ** 2, nx)
    C = np.sum((p / r) ** 2, axis=-1) - 1.0
    disc = B * B - 4.0 * A * C
    if np.any(disc < 0):
        raise DomainError(f"patch radius {rho:.3g} exceeds the graph neighbourhood of the surface")
    qq = -0.5 * (B + np.copysign(np.sqrt(disc), B))
    r1 = qq / A
    r2 = np.divide(C, qq, out=np.zeros_like(C), where=qq != 0)
    sig = np.where(np.abs(r1) < np.abs(r2), r1, r2)
    y = p + c + sig[..., None] * nx[:, None, :]
    g = (y - c) / r ** 2
    ny = g / np.linalg.norm(g, axis=-1, keepdims=True)
    jac = 1.0 / np.abs(np.einsum("qkm,qm->qk", ny, nx))
    return y, ny, wk[None, :] * jac, sk


def graph_radius(mesh):
    """A tangent radius within which every surface patch is a well-behaved graph."""
    r = mesh.radii
    return 0.5 * float(r.min() ** 2 / r.max())
