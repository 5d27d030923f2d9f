"""Boundary integral operators for the Lame-Navier system on closed surfaces.

Every operator here is a quadrature over the nodes of a :class:`SurfaceMesh`.
Kernels only depend on the displacement ``d = y - x`` through ``E0(d) = s0 d``,
``E1(d)`` and their target derivatives, so each sum factors into scalar
moments ``sum_y w k(x, y) F(y)`` (``k`` a radial factor times a monomial in
``d``) applied to per-node source fields ``F``.  The moments are formed as one
matrix product per block of targets; the Clifford products are applied
afterwards per target.

On the surface the strongly singular integrals are regularized by
subtracting the first order Taylor polynomial of the jet at the target and
dropping the target's own quadrature cell.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from . import clifford as cl
from .errors import ConditioningError, DegeneracyError, DomainError, NearSingularError
from .geometry import SurfaceMesh, graph_radius, mesh_from_descriptor, surface_patch_rule
from .kernels import surface_area_unit_sphere

_BLOCK_FLOATS = 4_000_000


def worker_count():
    try:
        return max(1, int(os.environ.get("LAMEHARDY_THREADS", "1")))
    except ValueError:
        return 1


# -- jets ---------------------------------------------------------------------

@dataclass(frozen=True)
class LipschitzJet:
    """First order Whitney data ``{f0, f1..fm}`` sampled at the mesh nodes.

    ``f0`` has shape ``(N, 2**m)``; ``grad`` has shape ``(N, m, 2**m)`` with
    ``grad[:, j-1]`` the sampled ``f^j``.
    """

    mesh: SurfaceMesh
    f0: np.ndarray
    grad: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        m, N, n = self.mesh.m, self.mesh.size, 1 << self.mesh.m
        if self.f0.shape != (N, n) or self.grad.shape != (N, m, n):
            raise DomainError(
                f"jet arrays {self.f0.shape}, {self.grad.shape} do not match mesh ({N} nodes, m={m})")
        if not 0 < self.alpha <= 1:
            raise DomainError(f"Hoelder exponent must lie in (0, 1], got {self.alpha}")

    @property
    def m(self):
        return self.mesh.m

    @classmethod
    def zeros(cls, mesh, alpha=1.0):
        n = 1 << mesh.m
        return cls(mesh, np.zeros((mesh.size, n)), np.zeros((mesh.size, mesh.m, n)), alpha)

    @classmethod
    def from_field(cls, fld, mesh, alpha=1.0):
        """Trace and gradient trace of a smooth field (PolyField or KernelSolution)."""
        from .poly import PolyField, gradient
        if isinstance(fld, PolyField):
            if fld.m != mesh.m:
                raise DomainError(f"field has m={fld.m}, mesh has m={mesh.m}")
            f0 = fld.evaluate_many(mesh.nodes)
            grad = np.stack([g.evaluate_many(mesh.nodes) for g in gradient(fld)], axis=1)
        else:
            f0 = fld.values(mesh.nodes)
            grad = fld.derivatives(mesh.nodes)
        return cls(mesh, f0, grad, alpha)

    def _like(self, f0, grad):
        return LipschitzJet(self.mesh, f0, grad, self.alpha)

    def __add__(self, other):
        return self._like(self.f0 + other.f0, self.grad + other.grad)

    def __sub__(self, other):
        return self._like(self.f0 - other.f0, self.grad - other.grad)

    def __neg__(self):
        return self._like(-self.f0, -self.grad)

    def scale(self, s):
        return self._like(self.f0 * s, self.grad * s)

    def norm(self):
        """Discrete L2 norm over the surface of all ``m+1`` components."""
        w = self.mesh.weights
        sq = np.einsum("na,na->n", self.f0, self.f0) + np.einsum("nja,nja->n", self.grad, self.grad)
        return float(np.sqrt(w @ sq))

    def to_json(self):
        return {
            "m": self.m,
            "alpha": float(self.alpha),
            "mesh": dict(self.mesh.descriptor),
            "f0": [{"m": self.m, "coeffs": row.tolist()} for row in self.f0],
            "grad": [[{"m": self.m, "coeffs": g.tolist()} for g in node] for node in self.grad],
        }

    @classmethod
    def from_json(cls, obj, mesh=None):
        try:
            m = int(obj["m"])
            alpha = float(obj.get("alpha", 1.0))
            if mesh is None:
                mesh = mesh_from_descriptor(obj["mesh"])
            f0 = np.array([cl.Multivector.from_json(v).coeffs for v in obj["f0"]])
            grad = np.array([[cl.Multivector.from_json(v).coeffs for v in node] for node in obj["grad"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed jet JSON: {exc}") from exc
        if m != mesh.m:
            raise DomainError(f"jet has m={m}, mesh has m={mesh.m}")
        n = 1 << m
        if f0.ndim != 2 or f0.shape[1] != n:
            raise DomainError("jet f0 entries have the wrong length")
        if grad.ndim != 3 or grad.shape[1:] != (m, n):
            raise DomainError("jet grad entries have the wrong shape")
        return cls(mesh, f0, grad, alpha)


@dataclass(frozen=True)
class JetOperatorResult:
    jet: LipschitzJet
    diagnostics: dict = field(default_factory=dict)


# -- Clifford helpers on (..., 2**m) arrays -------------------------------------

def _sum_e_left(X, m):
    """``sum_j e_j X[..., j, :]``."""
    return sum(cl.left_basis(j + 1, X[..., j, :], m) for j in range(m))


def _sum_e_right(X, m):
    """``sum_j X[..., j, :] e_j``."""
    return sum(cl.right_basis(X[..., j, :], j + 1, m) for j in range(m))


def _sandwich_sum(X, m):
    """``sum_j e_j X e_j``."""
    return sum(cl.right_basis(cl.left_basis(j + 1, X, m), j + 1, m) for j in range(m))


def M_traces(jet, p):
    """``a sum f^j e_j + b sum e_j f^j`` at every node."""
    m = jet.m
    return float(p.a) * _sum_e_right(jet.grad, m) + float(p.b) * _sum_e_left(jet.grad, m)


def Mbar_traces(jet, p):
    """``a sum e_j f^j + b sum f^j e_j`` at every node."""
    m = jet.m
    return float(p.a) * _sum_e_left(jet.grad, m) + float(p.b) * _sum_e_right(jet.grad, m)


def jet_M_trace(jet, q, p):
    return cl.Multivector(jet.m, M_traces(jet, p)[q])


def jet_Mbar_trace(jet, q, p):
    return cl.Multivector(jet.m, Mbar_traces(jet, p)[q])


# -- moment engine --------------------------------------------------------------

def _monomials(m, order):
    return list(combinations_with_replacement(range(m), order))


def _kernel_values(d, r2, w, kernels, m):
    """Weighted kernel values ``w k(d)``, shape ``(X, P, Y)`` for ``d`` of shape ``(X, Y, m)``."""
    sig = surface_area_unit_sphere(m)
    need = {k[0] for k in kernels}
    radial = {}
    if need & {"s0", "s0r2"}:
        radial["s0"] = -w * r2 ** (-m / 2.0) / sig
    if "s0r2" in need:
        radial["s0r2"] = radial["s0"] / r2
    if "e1" in need:
        radial["e1"] = w * r2 ** (-(m - 2) / 2.0) / ((m - 2) * sig)
    C = np.empty((d.shape[0], len(kernels), d.shape[1]))
    for i, (rad, idx) in enumerate(kernels):
        c = radial[rad]
        for k in idx:
            c = c * d[:, :, k]
        C[:, i, :] = c
    return C


class _Moments:
    """``sum_y w_y k(x, y) F(y)`` for a family of kernels ``k``.

    A kernel is ``(radial, idx)`` with radial one of ``"s0"`` (``-1/(sigma r^m)``),
    ``"e1"`` (``E1``) or ``"s0r2"`` (``s0 / r^2``) and ``idx`` a sorted tuple of
    coordinate indices whose displacement components multiply the radial part.
    """

    def __init__(self, mesh, targets, fields, kernels, self_index=None):
        self.mesh = mesh
        self.m = mesh.m
        self.kernels = list(kernels)
        self.lookup = {k: i for i, k in enumerate(self.kernels)}
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        fields = np.asarray(fields, dtype=float)
        nx, ny = targets.shape[0], mesh.size
        P = len(self.kernels)
        block = max(1, _BLOCK_FLOATS // max(1, P * ny))
        starts = list(range(0, nx, block))
        out = np.empty((nx, P, fields.shape[1]))

        def run(s):
            e = min(nx, s + block)
            sl = None if self_index is None else self_index[s:e]
            out[s:e] = self._block(targets[s:e], fields, sl)

        workers = worker_count()
        if workers > 1 and len(starts) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(run, starts))
        else:
            for s in starts:
                run(s)
        self.values = out

    def _block(self, X, fields, self_index):
        mesh = self.mesh
        d = mesh.nodes[None, :, :] - X[:, None, :]
        r2 = np.einsum("xyi,xyi->xy", d, d)
        w = np.broadcast_to(mesh.weights, r2.shape).copy()
        if self_index is not None:
            rows = np.arange(X.shape[0])
            w[rows, self_index] = 0.0
            r2[rows, self_index] = 1.0
        return np.matmul(_kernel_values(d, r2, w, self.kernels, self.m), fields)

    def get(self, radial, idx, cols):
        key = (radial, tuple(sorted(idx)))
        return self.values[:, self.lookup[key], cols]


class _Fields:
    """Column layout of stacked source fields."""

    def __init__(self):
        self.blocks = []
        self.slices = {}
        self.width = 0

    def add(self, name, arr):
        arr = np.asarray(arr, dtype=float)
        arr = arr.reshape(arr.shape[0], -1)
        self.slices[name] = slice(self.width, self.width + arr.shape[1])
        self.width += arr.shape[1]
        self.blocks.append(arr)

    def matrix(self):
        return np.concatenate(self.blocks, axis=1)


# -- near-field correction ----------------------------------------------------------

_CUTOFF_POWER = 4


def _cutoff(u):
    return np.clip(1.0 - u * u, 0.0, None) ** _CUTOFF_POWER


class _LocalCorrection:
    """Near-field correction of normal-weighted moments at surface nodes.

    For each kernel ``k`` and target node ``x`` this stores

        ``int chi k(y-x) n(y) dy - sum_{y != x} w_y chi k(y-x) n(y)``

    with ``chi`` a smooth cutoff in the tangent radius around ``x``.  The
    integral is taken with a polar rule on the surface patch, whose radial
    Jacobian absorbs the singularity.  Contracting these numbers with a local
    Taylor model of a density makes the node rule exact for that model close
    to the target, which is where the self-cell exclusion loses accuracy.
    """

    def __init__(self, mesh, q, kernels, rho=None):
        m = mesh.m
        self.m = m
        self.kernels = list(kernels)
        self.lookup = {k: i for i, k in enumerate(self.kernels)}
        # a patch size tied to the geometry rather than to h: the rule error
        # on the cut-off annulus then shrinks under refinement
        rho = graph_radius(mesh) if rho is None else rho
        self.rho = rho
        q = np.atleast_1d(q)
        X, nx = mesh.nodes[q], mesh.normals[q]
        near = mesh.tree().query_ball_point(X, 1.5 * rho)
        kmax = max(len(v) for v in near)
        idx = np.tile(q[:, None], (1, kmax))
        for row, v in enumerate(near):
            idx[row, :len(v)] = v
        P = len(self.kernels)
        out = np.empty((len(q), P, m))
        block = max(1, _BLOCK_FLOATS // (P * (kmax + 64 * m * m)))
        for s in range(0, len(q), block):
            sl = slice(s, min(len(q), s + block))
            y, ny, wy, sk = surface_patch_rule(mesh, q[sl], rho)
            d = y - X[sl, None, :]
            r2 = np.einsum("qki,qki->qk", d, d)
            C = _kernel_values(d, r2, wy * _cutoff(sk / rho)[None, :], self.kernels, m)
            exact = np.einsum("qpk,qkm->qpm", C, ny)

            nb = idx[sl]
            d = mesh.nodes[nb] - X[sl, None, :]
            dn = np.einsum("qki,qi->qk", d, nx[sl])
            t = d - dn[..., None] * nx[sl, None, :]
            w = mesh.weights[nb] * _cutoff(np.linalg.norm(t, axis=-1) / rho)
            w[nb == q[sl, None]] = 0.0
            r2 = np.einsum("qki,qki->qk", d, d)
            r2[w == 0.0] = 1.0
            C = _kernel_values(d, r2, w, self.kernels, m)
            out[sl] = exact - np.einsum("qpk,qkm->qpm", C, mesh.normals[nb])
        self.delta = out

    def get(self, radial, idx):
        """Correction of ``sum w k n`` as a vector multivector, ``(Q, 2**m)``."""
        return cl.embed_vectors(self.delta[:, self.lookup[(radial, tuple(sorted(idx)))], :], self.m)


def _tangential_gradient(mesh, F, q):
    """Tangential part of the ambient gradient of node data ``F``: ``(Q, m, width)``."""
    T = tangential_derivatives(mesh, F)
    return np.einsum("nkj,nkw->njw", mesh.tangent_frames[q], T[q])


# -- off-surface transforms -----------------------------------------------------

def _guard(mesh, targets, tol=None):
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if targets.shape[-1] != mesh.m:
        raise DomainError(f"target points need {mesh.m} coordinates")
    tol = 0.5 * mesh.h if tol is None else tol
    dist = mesh.distance_to_nodes(targets)
    bad = np.nonzero(dist < tol)[0]
    if bad.size:
        raise NearSingularError(
            f"target {int(bad[0])} lies {dist[bad[0]]:.3g} from the surface nodes (< {tol:.3g})")
    return targets


def _as_samples(mesh, samples):
    arr = np.asarray(samples, dtype=float)
    n = 1 << mesh.m
    if arr.shape != (mesh.size, n):
        raise DomainError(f"samples must have shape {(mesh.size, n)}, got {arr.shape}")
    return arr


def _single(targets, out):
    if np.asarray(targets).ndim == 1:
        return cl.Multivector(out.shape[-1].bit_length() - 1, out[0])
    return out


def _normals_mv(mesh):
    return cl.embed_vectors(mesh.normals, mesh.m)


def _check_side(side):
    if side not in ("left", "right"):
        raise DomainError(f"side must be 'left' or 'right', got {side!r}")


def _first_moment_vec(mom, cols, m):
    """``sum_i e_i mom[s0 d_i]`` (left) as needed for ``E0(d) G``."""
    return np.stack([mom.get("s0", (i,), cols) for i in range(m)], axis=1)


def cauchy_monogenic(mesh, samples, x, side="left"):
    """``int E0(y-x) n(y) f(y) dy`` (left) or ``int f(y) n(y) E0(y-x) dy`` (right)."""
    _check_side(side)
    m = mesh.m
    g = _as_samples(mesh, samples)
    X = _guard(mesh, x)
    nm = _normals_mv(mesh)
    src = cl.mv_product(nm, g, m) if side == "left" else cl.mv_product(g, nm, m)
    mom = _Moments(mesh, X, src, [("s0", (i,)) for i in range(m)])
    T = np.stack([mom.get("s0", (i,), slice(None)) for i in range(m)], axis=1)
    out = _sum_e_left(T, m) if side == "left" else _sum_e_right(T, m)
    return _single(x, out)


def cauchy_harmonic(mesh, samples, x, side="left"):
    """``-int E1(y-x) n(y) f(y) dy`` (left) or ``-int f(y) n(y) E1(y-x) dy`` (right)."""
    _check_side(side)
    m = mesh.m
    g = _as_samples(mesh, samples)
    X = _guard(mesh, x)
    nm = _normals_mv(mesh)
    src = cl.mv_product(nm, g, m) if side == "left" else cl.mv_product(g, nm, m)
    mom = _Moments(mesh, X, src, [("e1", ())])
    return _single(x, -mom.get("e1", (), slice(None)))


def _infra_from_moments(mom, m, cols):
    quad = sum(cl.right_basis(cl.left_basis(i + 1, mom.get("s0", (i, k), cols), m), k + 1, m)
               for i in range(m) for k in range(m))
    return 0.5 * (quad + _sandwich_sum(mom.get("e1", (), cols), m))


def _infra_kernels(m):
    return [("s0", idx) for idx in _monomials(m, 2)] + [("e1", ())]


def cauchy_infra(mesh, samples, x, side="right"):
    """Cauchy transform of ``D(.)D``.

    right: ``1/2 (int E0 f n (y-x) dy + sum_j e_j (int E1 f n dy) e_j)``;
    left: the same with ``n f`` in place of ``f n``.
    """
    _check_side(side)
    m = mesh.m
    g = _as_samples(mesh, samples)
    X = _guard(mesh, x)
    nm = _normals_mv(mesh)
    src = cl.mv_product(g, nm, m) if side == "right" else cl.mv_product(nm, g, m)
    mom = _Moments(mesh, X, src, _infra_kernels(m))
    return _single(x, _infra_from_moments(mom, m, slice(None)))


def cauchy_lame(mesh, samples, x, p, side="left"):
    """``-c_I C_I + c_H C_H`` with matching sides."""
    ci, ch = float(p.c_infra), float(p.c_harmonic)
    out = -ci * _arr(cauchy_infra(mesh, samples, np.atleast_2d(x), side)) \
        + ch * _arr(cauchy_harmonic(mesh, samples, np.atleast_2d(x), side))
    return _single(x, out)


def _arr(v):
    return v.coeffs[None] if isinstance(v, cl.Multivector) else v


def lame_cauchy_integral(jet, p, x):
    """Cauchy-type integral of a jet, evaluated off the surface.

    ``int E0 n f0 - c_H int E1 n (M f) - c_I/2 (int E0 (Mbar f) n (y-x)
    + sum_j e_j int E1 (Mbar f) n e_j)``, with ``M f``, ``Mbar f`` the traces
    built from the gradient data.
    """
    mesh = jet.mesh
    m = mesh.m
    X = _guard(mesh, x)
    nm = _normals_mv(mesh)
    flds = _Fields()
    flds.add("nf", cl.mv_product(nm, jet.f0, m))
    flds.add("nM", cl.mv_product(nm, M_traces(jet, p), m))
    flds.add("Mn", cl.mv_product(Mbar_traces(jet, p), nm, m))
    kernels = [("s0", (i,)) for i in range(m)] + _infra_kernels(m)
    mom = _Moments(mesh, X, flds.matrix(), kernels)
    sl = flds.slices
    cauchy = _sum_e_left(_first_moment_vec(mom, sl["nf"], m), m)
    harm = -mom.get("e1", (), sl["nM"])
    infra = _infra_from_moments(mom, m, sl["Mn"])
    out = cauchy + float(p.c_harmonic) * harm - float(p.c_infra) * infra
    return _single(x, out)


_RICHARDSON = {0: (1.0,), 1: (2.0, -1.0), 2: (3.0, -3.0, 1.0)}


def jump_estimate(jet, p, q, delta, order=1):
    """Estimate of ``[C f]^+ - [C f]^-`` at nodes ``q`` from normal probe pairs.

    The pair difference at offset ``delta`` carries an analytic bias of order
    ``delta``.  ``order`` = 1 or 2 combines pair differences at ``delta``,
    ``2 delta`` (and ``3 delta``) so that the first ``order`` Taylor terms in
    the offset cancel; ``order=0`` returns the raw difference.
    """
    from .geometry import probe_pair
    if order not in _RICHARDSON:
        raise DomainError(f"extrapolation order must be 0, 1 or 2, got {order}")
    q = np.atleast_1d(q)
    mesh = jet.mesh

    def diff(dl):
        pts = [probe_pair(mesh, int(k), dl) for k in q]
        inner = np.array([a for a, _ in pts])
        outer = np.array([b for _, b in pts])
        both = lame_cauchy_integral(jet, p, np.concatenate([inner, outer]))
        return both[: len(q)] - both[len(q):]

    return sum(c * diff((k + 1) * delta) for k, c in enumerate(_RICHARDSON[order]))


def half_value(mesh, q=None, corrected=True):
    """``int E0(y-x) n(y) dy`` at surface nodes as a principal value; ``(len(q), 2**m)``.

    The node rule drops the target cell; with ``corrected`` the near field
    is replaced by a polar patch integral, which is symmetric about the
    target and so resolves the odd leading part of the kernel.
    """
    m = mesh.m
    q = np.arange(mesh.size) if q is None else np.atleast_1d(q)
    nm = _normals_mv(mesh)
    kernels = [("s0", (i,)) for i in range(m)]
    mom = _Moments(mesh, mesh.nodes[q], nm, kernels, self_index=q)
    T = _first_moment_vec(mom, slice(None), m)
    if corrected:
        corr = _LocalCorrection(mesh, q, kernels)
        T = T + np.stack([corr.get("s0", (i,)) for i in range(m)], axis=1)
    return _sum_e_left(T, m)


def cauchy_principal_value(mesh, samples, corrected=True):
    """``p.v. int E0(y-x) n(y) g(y) dy`` at every node.

    Written as ``int E0 n (g(y) - g(x)) dy + g(x)/2``: the first integral is
    weakly singular and is summed with the target cell dropped (plus the
    near-field correction of a linear model of ``g`` when ``corrected``).
    """
    m = mesh.m
    g = _as_samples(mesh, samples)
    q = np.arange(mesh.size)
    nm = _normals_mv(mesh)
    flds = _Fields()
    flds.add("n", mesh.normals)
    flds.add("ng", cl.mv_product(nm, g, m))
    kernels = [("s0", (i,)) for i in range(m)]
    mom = _Moments(mesh, mesh.nodes, flds.matrix(), kernels, self_index=q)
    sn, sg = flds.slices["n"], flds.slices["ng"]
    T = []
    if corrected:
        corr = _LocalCorrection(mesh, q, [("s0", idx) for idx in _monomials(m, 2)])
        G = _tangential_gradient(mesh, g, q)
    for i in range(m):
        t = mom.get("s0", (i,), sg) - cl.mv_product(cl.embed_vectors(mom.get("s0", (i,), sn), m), g, m)
        if corrected:
            for a in range(m):
                t = t + cl.mv_product(corr.get("s0", (i, a)), G[:, a], m)
        T.append(t)
    return _sum_e_left(np.stack(T, axis=1), m) + 0.5 * g


# -- singular operator ----------------------------------------------------------

def _sl_kernels(m):
    ks = [("e1", ()), ("s0", ())]
    ks += [("s0", idx) for idx in _monomials(m, 1)]
    ks += [("s0", idx) for idx in _monomials(m, 2)]
    ks += [("s0r2", idx) for idx in _monomials(m, 2)]
    ks += [("s0r2", idx) for idx in _monomials(m, 3)]
    return ks


def _sl_correction_kernels(m):
    # each regularized density vanishes to first or second order at the
    # target, which adds one or two displacement factors to the kernels above
    ks = [("e1", idx) for idx in _monomials(m, 1)]
    ks += [("s0", idx) for idx in _monomials(m, 2) + _monomials(m, 3)]
    ks += [("s0r2", idx) for idx in _monomials(m, 4)]
    return ks


def _vec(mom, radial, idx, cols, m):
    """Moment of the normal field (stored as m coordinates) embedded as a vector."""
    return cl.embed_vectors(mom.get(radial, idx, cols), m)


def singular_SL_batch(jets, p, nodes=None, corrected=True):
    """Apply the singular operator to several jets on the same mesh.

    Returns a list of ``(f0, grad)`` arrays restricted to ``nodes`` (default all).
    With ``corrected`` the near field of every regularized density is
    modelled by its local Taylor polynomial (quadratic for the remainder,
    linear for the trace differences, coefficients from tangential fits) and
    integrated with :class:`_LocalCorrection`.
    """
    mesh = jets[0].mesh
    for j in jets:
        if j.mesh is not mesh:
            raise DomainError("all jets in a batch must share one mesh")
    m = mesh.m
    q = np.arange(mesh.size) if nodes is None else np.atleast_1d(nodes)
    nm = _normals_mv(mesh)
    ci, ch = float(p.c_infra), float(p.c_harmonic)

    flds = _Fields()
    flds.add("n", mesh.normals)
    traces = []
    for k, jet in enumerate(jets):
        Mt, Mb = M_traces(jet, p), Mbar_traces(jet, p)
        traces.append((Mt, Mb))
        flds.add(("nf", k), cl.mv_product(nm, jet.f0, m))
        flds.add(("nM", k), cl.mv_product(nm, Mt, m))
        flds.add(("Mn", k), cl.mv_product(Mb, nm, m))
    mom = _Moments(mesh, mesh.nodes[q], flds.matrix(), _sl_kernels(m), self_index=q)
    sn = flds.slices["n"]
    corr = _LocalCorrection(mesh, q, _sl_correction_kernels(m)) if corrected else None
    n = 1 << m

    def V(radial, idx):
        return _vec(mom, radial, idx, sn, m)

    def mul(a, b):
        return cl.mv_product(a, b, m)

    def L(i, A):
        return cl.left_basis(i + 1, A, m)

    def R(A, i):
        return cl.right_basis(A, i + 1, m)

    rng = range(m)
    results = []
    for k, jet in enumerate(jets):
        f0x, gx = jet.f0[q], jet.grad[q]
        Mtx, Mbx = traces[k][0][q], traces[k][1][q]
        snf, snM, sMn = flds.slices[("nf", k)], flds.slices[("nM", k)], flds.slices[("Mn", k)]

        if corr is not None:
            G = _tangential_gradient(
                mesh, np.concatenate([jet.grad.reshape(mesh.size, m * n), traces[k][0], traces[k][1]], axis=1), q)
            Hs = G[:, :, : m * n].reshape(len(q), m, m, n)   # [.., a, b] = d_a f^b
            GM, GB = G[:, :, m * n: m * n + n], G[:, :, m * n + n:]

        def nR(radial, idx):
            # sum w k(x,y) n(y) R_x(y)
            out = mom.get(radial, idx, snf) - mul(V(radial, idx), f0x)
            for c in rng:
                out = out - mul(V(radial, tuple(idx) + (c,)), gx[:, c])
            if corr is not None:
                for a in rng:
                    for b in rng:
                        out = out + 0.5 * mul(corr.get(radial, tuple(idx) + (a, b)), Hs[:, a, b])
            return out

        def MbRn(radial, idx):
            # sum w k(x,y) (Mbar R_x)(y) n(y)
            out = mom.get(radial, idx, sMn) - mul(Mbx, V(radial, idx))
            if corr is not None:
                for a in rng:
                    out = out + mul(GB[:, a], corr.get(radial, tuple(idx) + (a,)))
            return out

        def nMR(radial, idx):
            # sum w k(x,y) n(y) (M f(y) - M f(x))
            out = mom.get(radial, idx, snM) - mul(V(radial, idx), Mtx)
            if corr is not None:
                for a in rng:
                    out = out + mul(corr.get(radial, tuple(idx) + (a,)), GM[:, a])
            return out

        # value component
        T1 = 2.0 * sum(L(i, nR("s0", (i,))) for i in rng)
        T2 = -2.0 * ch * nMR("e1", ())
        T3 = -ci * sum(R(L(i, MbRn("s0", (i, c))), c) for i in rng for c in rng)
        T4 = -ci * _sandwich_sum(MbRn("e1", ()), m)
        s0_out = f0x + T1 + T2 + T3 + T4

        Y1 = [MbRn("s0", (c,)) for c in rng]
        X0 = nR("s0", ())
        grads = []
        for j in rng:
            U1 = 2.0 * (-L(j, X0) + m * sum(L(i, nR("s0r2", (i, j))) for i in rng))
            U2 = 2.0 * ch * nMR("s0", (j,))
            U3 = -ci * (-L(j, sum(R(Y1[c], c) for c in rng))
                        + m * sum(R(L(i, MbRn("s0r2", (i, j, c))), c) for i in rng for c in rng))
            U4 = ci * _sandwich_sum(Y1[j], m)
            U5 = ci * sum(R(L(i, Y1[i]), j) for i in rng)
            grads.append(gx[:, j] + U1 + U2 + U3 + U4 + U5)
        results.append((s0_out, np.stack(grads, axis=1)))
    return results


def singular_SL(jet, p):
    """The singular operator on a jet; returns all ``m+1`` components as a new jet."""
    f0, grad = singular_SL_batch([jet], p)[0]
    return JetOperatorResult(LipschitzJet(jet.mesh, f0, grad, jet.alpha),
                             {"nodes": jet.mesh.size, "h": jet.mesh.h})


def hardy_projections(jet, p, image=None):
    """``P+ = (I + S)/2`` and ``P- = (I - S)/2``; ``image`` may supply a precomputed ``S f``."""
    S = singular_SL(jet, p).jet if image is None else image
    plus = (jet + S).scale(0.5)
    minus = (jet - S).scale(0.5)
    return plus, minus


def involution_residual(jets, p):
    """``|S S f - f| / |f|`` for each jet."""
    first = singular_SL_batch(jets, p)
    once = [LipschitzJet(j.mesh, f0, g, j.alpha) for j, (f0, g) in zip(jets, first)]
    second = singular_SL_batch(once, p)
    out = []
    for j, (f0, g) in zip(jets, second):
        twice = LipschitzJet(j.mesh, f0, g, j.alpha)
        out.append((twice - j).norm() / j.norm())
    return out, once


# -- jet recovery -----------------------------------------------------------------

def _local_fit_matrix(t):
    """Design matrix of a quadratic in tangent coordinates (no constant term)."""
    k = t.shape[-1]
    cols = [t[..., i] for i in range(k)]
    cols += [t[..., i] * t[..., j] for i in range(k) for j in range(i, k)]
    return np.stack(cols, axis=-1)


_FITS = {}


def _fit_operator(mesh, neighbours=None):
    """Neighbour lists and the weighted least-squares solve of the local fit.

    Icosphere nodes use their nearest neighbours.  The product grid on S^3
    crowds nodes along a few circles, where nearest neighbours can all sit
    on one curve, so there every node inside a ball of a few ``h`` is used.
    """
    key = (id(mesh), neighbours)
    hit = _FITS.get(key)
    if hit is not None and hit[0] is mesh:
        return hit[1]
    m = mesh.m
    k = m - 1
    nunk = k + k * (k + 1) // 2
    N = mesh.size
    if m == 3 or neighbours is not None:
        count = 2 * nunk if neighbours is None else neighbours
        _, idx = mesh.tree().query(mesh.nodes, count + 1)
        idx = idx[:, 1:]
        mask = np.ones(idx.shape, dtype=bool)
    else:
        near = mesh.tree().query_ball_point(mesh.nodes, 2.5 * mesh.h)
        _, knn = mesh.tree().query(mesh.nodes, 3 * nunk + 1)
        lists = [sorted((set(v) | set(kn.tolist())) - {i}) for i, (v, kn) in enumerate(zip(near, knn))]
        width = max(len(v) for v in lists)
        idx = np.tile(np.arange(N)[:, None], (1, width))
        mask = np.zeros((N, width), dtype=bool)
        for i, v in enumerate(lists):
            idx[i, :len(v)] = v
            mask[i, :len(v)] = True
    d = mesh.nodes[idx] - mesh.nodes[:, None, :]
    t = np.einsum("nkm,nsm->nsk", mesh.tangent_frames, d)
    r2 = np.einsum("nsi,nsi->ns", d, d)
    sw = np.where(mask, 1.0 / np.sqrt(np.where(mask, r2, 1.0)), 0.0)
    # pseudo-inverse guards against rank deficient neighbourhoods
    pinv = np.linalg.pinv(_local_fit_matrix(t) * sw[..., None], rcond=1e-10)[:, :k, :]
    op = (idx, sw, pinv)
    _FITS.clear()
    _FITS[key] = (mesh, op)
    return op


def tangential_derivatives(mesh, f0, neighbours=None):
    """Derivatives of ``f0`` along each tangent frame vector, ``(N, m-1, width)``.

    Weighted least squares (weights ``1/r^2``) over nearby nodes, fitting a
    quadratic in the local tangent coordinates so that surface curvature does
    not leak into the slope.
    """
    f0 = np.asarray(f0, dtype=float)
    idx, sw, pinv = _fit_operator(mesh, neighbours)
    rhs = (f0[idx] - f0[:, None, :]) * sw[..., None]
    return pinv @ rhs


def recovery_matrix(mesh, c1, c2, nodes=None):
    """Per-node linear system for the unknown gradient data ``(f^1..f^m)``.

    Rows: ``(m-1)`` tangential constraints (one block of ``2**m`` each) and the
    trace relation ``c1 sum f^j e_j + c2 sum e_j f^j``.
    """
    m = mesh.m
    n = 1 << m
    q = np.arange(mesh.size) if nodes is None else np.atleast_1d(nodes)
    frames = mesh.tangent_frames[q]
    eye = np.eye(n)
    Rm = np.stack([cl.right_basis(eye, j + 1, m).T for j in range(m)])  # A -> A e_j
    Lm = np.stack([cl.left_basis(j + 1, eye, m).T for j in range(m)])   # A -> e_j A
    top = np.einsum("nkj,ab->nkajb", frames, eye).reshape(len(q), (m - 1) * n, m * n)
    trace = (c1 * Rm + c2 * Lm).transpose(1, 0, 2).reshape(n, m * n)
    bottom = np.broadcast_to(trace, (len(q), n, m * n))
    return np.concatenate([top, bottom], axis=1)


def recover_jet(f0, M_trace, c1, c2, mesh, cond_limit=1e10):
    """Gradient data determined by ``f0`` and ``c1 sum f^j e_j + c2 sum e_j f^j``.

    Returns ``(N, m, 2**m)``.  Raises :class:`DegeneracyError` for ``c1 = +-c2``
    and :class:`ConditioningError` when a local system is rank deficient.
    """
    if np.isclose(abs(c1), abs(c2), rtol=1e-12, atol=1e-15):
        raise DegeneracyError(
            f"c1={c1} and c2={c2} satisfy c1 = +-c2; the trace relation does not determine the jet")
    m = mesh.m
    n = 1 << m
    f0 = np.asarray(f0, dtype=float)
    Mt = np.asarray(M_trace, dtype=float)
    if f0.shape != (mesh.size, n) or Mt.shape != (mesh.size, n):
        raise DomainError("f0 and M_trace must have shape (N, 2**m)")
    if np.any(f0):
        tang = tangential_derivatives(mesh, f0)
    else:
        tang = np.zeros((mesh.size, m - 1, n))
    A = recovery_matrix(mesh, c1, c2)
    sv = np.linalg.svd(A, compute_uv=False)
    cond = sv[:, 0] / np.maximum(sv[:, -1], 1e-300)
    bad = np.nonzero(cond > cond_limit)[0]
    if bad.size:
        raise ConditioningError(f"local recovery system singular at node {int(bad[0])}", node=int(bad[0]))
    rhs = np.concatenate([tang.reshape(mesh.size, -1), Mt], axis=1)
    sol = np.linalg.solve(A, rhs[..., None])[..., 0]
    return sol.reshape(mesh.size, m, n)


# -- Whitney data ---------------------------------------------------------------

def whitney_residuals(jet, pairs):
    """``|f0(x) - f0(y) - sum_j f^j(y)(x_j - y_j)|`` and ``|x - y|`` for index pairs ``(x, y)``."""
    pairs = np.asarray(pairs, dtype=int)
    a, b = pairs[:, 0], pairs[:, 1]
    dx = jet.mesh.nodes[a] - jet.mesh.nodes[b]
    res = jet.f0[a] - jet.f0[b] - np.einsum("nja,nj->na", jet.grad[b], dx)
    return np.linalg.norm(dx, axis=1), np.linalg.norm(res, axis=1)


def sample_pairs(mesh, count, rmin, rmax, seed=0):
    """Random node pairs with separations spread log-uniformly over ``[rmin, rmax]``."""
    rng = np.random.default_rng(seed)
    tree = mesh.tree()
    out = []
    tries = 0
    while len(out) < count and tries < 50 * count:
        tries += 1
        a = int(rng.integers(mesh.size))
        target = np.exp(rng.uniform(np.log(rmin), np.log(rmax)))
        cand = tree.query_ball_point(mesh.nodes[a], target * 1.15)
        cand = [c for c in cand if c != a]
        if not cand:
            continue
        dist = np.linalg.norm(mesh.nodes[cand] - mesh.nodes[a], axis=1)
        ok = [c for c, dd in zip(cand, dist) if dd >= target / 1.15]
        if ok:
            out.append((a, ok[int(rng.integers(len(ok)))]))
    return np.array(out, dtype=int).reshape(-1, 2)


def whitney_constant(jet, rmax=None, count=400, seed=0):
    """Largest sampled ratio of the Whitney remainder to ``|x-y|^(1+alpha)``."""
    mesh = jet.mesh
    rmax = 8 * mesh.h if rmax is None else rmax
    pairs = sample_pairs(mesh, count, 0.5 * mesh.h, rmax, seed)
    if len(pairs) == 0:
        return 0.0
    r, res = whitney_residuals(jet, pairs)
    return float(np.max(res / r ** (1.0 + jet.alpha)))
