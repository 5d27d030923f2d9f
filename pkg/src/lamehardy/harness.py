"""Verification suites, convergence studies and the Hardy decomposition driver.

Every suite returns a :class:`SuiteReport` whose checks carry an explicit
tolerance.  Reports serialize deterministically: keys are sorted, floats are
rounded to ten significant digits and wall-clock times are left out unless
asked for, so repeated runs with one configuration give identical bytes.
"""

import csv
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import clifford as cl
from .boundary import (
    LipschitzJet,
    M_traces,
    half_value,
    hardy_projections,
    jump_estimate,
    lame_cauchy_integral,
    recover_jet,
    sample_pairs,
    singular_SL,
    singular_SL_batch,
    whitney_residuals,
)
from .errors import ConfigError, DegeneracyError, DomainError, LameHardyError
from .geometry import MAX_LEVEL, build_ball_volume, build_sphere_surface, mesh_from_descriptor
from .kernels import E0_jacobian, E0_values, E1_gradient, E1_values, surface_area_unit_sphere
from .poly import LameParams, PolyField, make_test_solution, random_poly
from .volume import borel_pompeiu_residual, exterior_representation_residual

SUITES = ("algebra", "kernels", "cauchy", "borel_pompeiu", "involution", "hardy", "recovery", "holder")
CONVERGE_SUITES = ("involution", "hardy", "cauchy", "half_value", "jump", "borel_pompeiu")
CATALOGUE = ("constant", "coordinate", "monogenic_linear", "universal_quadratic")

# the singular operator forms dense N x N moment blocks; beyond these levels
# a run stops being desk scale
SL_MAX_LEVEL = {3: 5, 4: 2}
DEFAULT_RESOLUTION = 16

_SURFACE_SUITES = ("cauchy", "borel_pompeiu", "involution", "hardy", "recovery", "holder")
_SL_SUITES = ("involution", "hardy", "holder")


# -- configuration and reports -----------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    m: int = 3
    mu: float = 1.0
    lam: float = 1.0
    level: int = 3
    alpha: float = 1.0
    seed: int = 42
    out: Optional[str] = None

    def __post_init__(self):
        if int(self.m) != self.m or not 1 <= self.m <= cl.MAX_DIM:
            raise ConfigError(f"m must be an integer in 1..{cl.MAX_DIM}, got {self.m}")
        if int(self.level) != self.level or self.level < 0:
            raise ConfigError(f"level must be a non-negative integer, got {self.level}")
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        # raises ConfigError for inadmissible pairs
        LameParams(self.mu, self.lam)

    @property
    def params(self):
        return LameParams(float(self.mu), float(self.lam))

    def parameters(self):
        return {"m": int(self.m), "mu": float(self.mu), "lambda": float(self.lam),
                "level": int(self.level), "alpha": float(self.alpha), "seed": int(self.seed)}


def _check_surface_config(cfg, suite, level=None):
    level = cfg.level if level is None else level
    if cfg.m not in MAX_LEVEL:
        raise ConfigError(f"suite {suite!r} needs m in (3, 4), got m={cfg.m}")
    if level > MAX_LEVEL[cfg.m]:
        raise ConfigError(f"level {level} exceeds the maximum {MAX_LEVEL[cfg.m]} for m={cfg.m}")
    if suite in _SL_SUITES and level > SL_MAX_LEVEL[cfg.m]:
        raise ConfigError(f"suite {suite!r} supports level <= {SL_MAX_LEVEL[cfg.m]} for m={cfg.m}")


@dataclass
class SuiteReport:
    suite: str
    parameters: dict
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    exponents: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def add(self, name, residual, tolerance, started=None):
        residual = float(residual)
        ok = bool(np.isfinite(residual) and residual <= tolerance)
        self.checks.append({"name": name, "residual": residual, "tolerance": float(tolerance), "pass": ok})
        if started is not None:
            self.timings[name] = time.perf_counter() - started
        return ok

    @property
    def passed(self):
        return bool(self.checks) and all(c["pass"] for c in self.checks)

    def to_json(self, timings=False):
        out = {
            "suite": self.suite,
            "parameters": self.parameters,
            "checks": self.checks,
            "tables": self.tables,
            "exponents": self.exponents,
            "info": self.info,
            "pass": self.passed,
        }
        if timings:
            out["timings"] = self.timings
        return _clean(out)

    def dumps(self, timings=False):
        return dumps(self.to_json(timings))

    def summary_lines(self):
        for c in self.checks:
            flag = "PASS" if c["pass"] else "FAIL"
            yield f"{flag} {self.suite}/{c['name']}: {c['residual']:.3e} (tol {c['tolerance']:.1e})"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.10g}")
    return obj


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


# -- regression ------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentFit:
    slope: float
    r2: float
    count: int
    warning: Optional[str] = None


def fit_exponent(pairs, min_pairs=20, min_decades=1.0):
    """Least-squares slope of ``log(residual)`` against ``log(separation)``.

    Needs at least ``min_pairs`` pairs with positive entries whose
    separations span ``min_decades`` decades.
    """
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    r, e = arr[:, 0], arr[:, 1]
    keep = (r > 0) & (e > 0) & np.isfinite(r) & np.isfinite(e)
    r, e = r[keep], e[keep]
    if len(r) < min_pairs:
        raise DomainError(f"need at least {min_pairs} pairs with positive entries, got {len(r)}")
    spread = math.log10(r.max() / r.min())
    if spread < min_decades - 1e-12:
        raise DomainError(f"separations span {spread:.2f} decades; need {min_decades}")
    x, y = np.log(r), np.log(e)
    slope, icpt = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (slope * x + icpt)) ** 2))
    warning = None
    if ss_tot <= 1e-24 * max(1.0, float(np.sum(y * y))):
        warning = "residuals are constant; the exponent carries no information"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
        r2 = 0.0
        slope = 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return ExponentFit(float(slope), float(r2), int(len(r)), warning)


# -- algebra -----------------------------------------------------------------------

def oracle_blade_product(a, b):
    """Sign and mask of ``e_A e_B`` by sorting the generator word explicitly."""
    word = [i for i in range(a.bit_length()) if a >> i & 1] + [i for i in range(b.bit_length()) if b >> i & 1]
    sign = 1
    # bubble sort, one sign flip per transposition of distinct generators
    for end in range(len(word) - 1, 0, -1):
        for k in range(end):
            if word[k] > word[k + 1]:
                word[k], word[k + 1] = word[k + 1], word[k]
                sign = -sign
    out = []
    for g in word:
        if out and out[-1] == g:
            out.pop()
            sign = -sign          # e_i e_i = -1
        else:
            out.append(g)
    return sign, sum(1 << g for g in out)


def blade_mismatches(m):
    n = 1 << m
    bad = 0
    for a in range(n):
        for b in range(n):
            if cl.blade_product(a, b, m) != oracle_blade_product(a, b):
                bad += 1
    return bad


def norm_violations(m, count, rng):
    n = 1 << m
    A = rng.standard_normal((count, n))
    B = rng.standard_normal((count, n))
    lhs = cl.mv_norm(cl.mv_product(A, B, m), m)
    rhs = 2.0 ** (m / 2.0) * cl.mv_norm(A, m) * cl.mv_norm(B, m)
    return int(np.sum(lhs > rhs * (1 + 1e-12))), float(np.max(lhs / rhs))


def _suite_algebra(cfg, rep):
    m = cfg.m
    rng = np.random.default_rng(cfg.seed)
    n = 1 << m
    t = time.perf_counter()
    rep.add("blade_product_vs_oracle", blade_mismatches(m), 0, t)
    t = time.perf_counter()
    bad, worst = norm_violations(m, 10_000, rng)
    rep.info["norm_max_ratio"] = worst
    rep.add("norm_bound_violations", bad, 0, t)

    A, B, C = (rng.standard_normal((200, n)) for _ in range(3))
    t = time.perf_counter()
    ab = cl.mv_product(A, B, m)
    lhs = cl.mv_conjugate(ab, m)
    rhs = cl.mv_product(cl.mv_conjugate(B, m), cl.mv_conjugate(A, m), m)
    rep.add("conjugation_reverses_products", np.max(np.abs(lhs - rhs)) / np.max(np.abs(lhs)), 1e-12, t)
    t = time.perf_counter()
    left = cl.mv_product(ab, C, m)
    right = cl.mv_product(A, cl.mv_product(B, C, m), m)
    rep.add("associativity", np.max(np.abs(left - right)) / np.max(np.abs(left)), 1e-12, t)
    t = time.perf_counter()
    x = rng.standard_normal((200, m))
    X = cl.embed_vectors(x, m)
    sq = cl.mv_product(X, X, m)
    target = np.zeros_like(sq)
    target[:, 0] = -np.sum(x * x, axis=1)
    rep.add("vector_square", np.max(np.abs(sq - target)) / np.max(np.abs(target)), 1e-12, t)
    t = time.perf_counter()
    nrm2 = cl.mv_product(X, cl.mv_conjugate(X, m), m)
    target[:, 0] = np.sum(x * x, axis=1)
    rep.add("vector_norm_via_conjugate", np.max(np.abs(nrm2 - target)) / np.max(np.abs(target)), 1e-12, t)


# -- kernels -----------------------------------------------------------------------

def _random_points(rng, count, m, rmin, rmax):
    u = rng.standard_normal((count, m))
    u /= np.linalg.norm(u, axis=1)[:, None]
    return u * rng.uniform(rmin, rmax, count)[:, None]


def _suite_kernels(cfg, rep):
    m = cfg.m
    if m < 3:
        raise ConfigError(f"kernels need m >= 3, got m={m}")
    rng = np.random.default_rng(cfg.seed)
    x = _random_points(rng, 100, m, 0.3, 3.0)

    t = time.perf_counter()
    g = E1_gradient(x, m)
    e0 = E0_values(x, m)
    rep.add("dirac_E1_equals_E0", np.max(np.linalg.norm(g - e0, axis=1) / np.linalg.norm(e0, axis=1)), 1e-10, t)

    t = time.perf_counter()
    J = E0_jacobian(x, m)
    # D E0 = sum_j e_j d_j E0: scalar part -tr J, bivector parts from the antisymmetric part
    tr = np.abs(np.trace(J, axis1=-2, axis2=-1))
    anti = np.max(np.abs(J - np.swapaxes(J, -1, -2)), axis=(-2, -1))
    scale = np.max(np.abs(J), axis=(-2, -1))
    rep.add("E0_is_monogenic", np.max(np.maximum(tr, anti) / scale), 1e-10, t)

    t = time.perf_counter()
    xs = _random_points(rng, 100, m, 0.9, 1.1)
    step = 1e-5
    worst = 0.0
    for k in range(m):
        dx = np.zeros(m)
        dx[k] = step
        fd1 = (E1_values(xs + dx, m) - E1_values(xs - dx, m)) / (2 * step)
        fd0 = (E0_values(xs + dx, m) - E0_values(xs - dx, m)) / (2 * step)
        an1 = E1_gradient(xs, m)[:, k]
        an0 = E0_jacobian(xs, m)[:, :, k]
        worst = max(worst, np.max(np.abs(fd1 - an1) / np.linalg.norm(E1_gradient(xs, m), axis=1)))
        worst = max(worst, np.max(np.linalg.norm(fd0 - an0, axis=1)
                                  / np.linalg.norm(E0_jacobian(xs, m), axis=(1, 2))))
    rep.add("finite_difference_derivatives", worst, 1e-6, t)

    t = time.perf_counter()
    exact = 2.0 * math.pi ** (m / 2) / math.gamma(m / 2)
    known = {3: 4 * math.pi, 4: 2 * math.pi ** 2}
    ref = known.get(m, exact)
    rep.add("sphere_area_constant", abs(surface_area_unit_sphere(m) - ref) / ref, 1e-14, t)


# -- boundary suites -------------------------------------------------------------

def jump_offset(mesh):
    """Probe offset: ``4h``, shrunk on coarse meshes so the deepest probe stays inside."""
    return min(4.0 * mesh.h, 0.3 * float(mesh.radii.min()))


def reproduction_errors(mesh, p, kind, inner, outer):
    """Relative interior error and scaled exterior magnitude of the Cauchy integral."""
    fld = make_test_solution(kind, mesh.m)
    jet = LipschitzJet.from_field(fld, mesh)
    vin = lame_cauchy_integral(jet, p, inner)
    exact = fld.evaluate_many(inner)
    scale = np.max(np.linalg.norm(exact, axis=1))
    rel = np.max(np.linalg.norm(vin - exact, axis=1)) / scale
    vout = lame_cauchy_integral(jet, p, outer)
    return float(rel), float(np.max(np.linalg.norm(vout, axis=1)) / scale)


def half_value_error(mesh):
    hv = half_value(mesh)
    hv[:, 0] -= 0.5
    return float(np.max(np.linalg.norm(hv, axis=1)))


def jump_errors(mesh, p, kind, nodes, order=2):
    jet = LipschitzJet.from_field(make_test_solution(kind, mesh.m), mesh)
    ref = jet.f0[nodes]
    delta = jump_offset(mesh)
    out = {}
    for o in (0, order):
        est = jump_estimate(jet, p, nodes, delta, order=o)
        out[o] = float(np.linalg.norm(est - ref) / np.linalg.norm(ref))
    return out


def _suite_cauchy(cfg, rep):
    m, p = cfg.m, cfg.params
    rng = np.random.default_rng(cfg.seed)
    mesh = build_sphere_surface(m, cfg.level)
    inner = _random_points(rng, 10, m, 0.0, 0.7)
    outer = _random_points(rng, 10, m, 1.3, 2.0)
    for kind in CATALOGUE:
        t = time.perf_counter()
        rel, ext = reproduction_errors(mesh, p, kind, inner, outer)
        rep.add(f"reproduction_{kind}", rel, 1e-2, t)
        rep.add(f"exterior_vanishes_{kind}", ext, 1e-2)

    hv_level = min(cfg.level, SL_MAX_LEVEL[m])
    t = time.perf_counter()
    hv_mesh = mesh if hv_level == cfg.level else build_sphere_surface(m, hv_level)
    rep.add(f"half_value_level{hv_level}", half_value_error(hv_mesh), 1e-1, t)

    nodes = np.sort(rng.choice(mesh.size, size=min(40, mesh.size), replace=False))
    for kind in CATALOGUE:
        t = time.perf_counter()
        errs = jump_errors(mesh, p, kind, nodes)
        rep.info[f"jump_raw_{kind}"] = errs[0]
        rep.add(f"jump_{kind}", errs[2], 1e-1, t)
    rep.info["jump_offset"] = jump_offset(mesh)


def _interior_points(rng, count, m, radius=0.6):
    return _random_points(rng, count, m, 0.05, radius)


def _suite_borel_pompeiu(cfg, rep):
    m, p = cfg.m, cfg.params
    rng = np.random.default_rng(cfg.seed)
    surf = build_sphere_surface(m, cfg.level)
    quad = PolyField.monomial((2,) + (0,) * (m - 1), m)

    t = time.perf_counter()
    worst = 0.0
    for x in _interior_points(rng, 5, m):
        vol = build_ball_volume(m, DEFAULT_RESOLUTION, pole=x)
        worst = max(worst, borel_pompeiu_residual(quad, p, surf, vol, x).norm())
    rep.add("x1_squared_interior", worst, 5e-2, t)

    t = time.perf_counter()
    worst = 0.0
    for k in range(5):
        f = random_poly(m, 1 + k % 3, cfg.seed + k)
        x = _interior_points(rng, 1, m)[0]
        vol = build_ball_volume(m, DEFAULT_RESOLUTION, pole=x)
        fx = max(f.evaluate_at(x).norm(), 1.0)
        worst = max(worst, borel_pompeiu_residual(f, p, surf, vol, x).norm() / fx)
    rep.add("random_polynomials_interior", worst, 5e-2, t)

    t = time.perf_counter()
    vol = build_ball_volume(m, DEFAULT_RESOLUTION)
    worst = max(borel_pompeiu_residual(quad, p, surf, vol, x).norm()
                for x in _random_points(rng, 3, m, 1.5, 2.5))
    rep.add("x1_squared_exterior", worst, 5e-2, t)

    t = time.perf_counter()
    c = 0.2 * _random_points(rng, 1, m, 0.5, 1.0)[0]
    near = [exterior_representation_residual("translated_cauchy_kernel_marker", p, surf, x, center=c).norm()
            for x in _random_points(rng, 3, m, 1.5, 3.0)]
    rep.add("exterior_kernel_solution", max(near), 5e-2, t)
    e15 = exterior_representation_residual("translated_cauchy_kernel_marker", p, surf,
                                           np.eye(m)[0] * 1.5, center=c).norm()
    e10 = exterior_representation_residual("translated_cauchy_kernel_marker", p, surf,
                                           np.eye(m)[0] * 10.0, center=c).norm()
    rep.info["exterior_kernel_far_over_near"] = e10 / e15 if e15 > 0 else 0.0
    rep.add("exterior_far_field_smaller", e10 / e15 if e15 > 0 else 0.0, 1.0)
    t = time.perf_counter()
    worst = max(exterior_representation_residual("constant", p, surf, x).norm()
                for x in _random_points(rng, 3, m, 1.5, 3.0))
    rep.add("exterior_constant", worst, 1e-2, t)


def smooth_jets(mesh, seed, count=5):
    """Seeded smooth test jets: low-degree random polynomials and one exterior kernel solution."""
    m = mesh.m
    jets = [LipschitzJet.from_field(random_poly(m, 2 + k % 2, seed + k), mesh) for k in range(count - 1)]
    rng = np.random.default_rng(seed)
    c = 0.25 * _random_points(rng, 1, m, 0.2, 1.0)[0]
    jets.append(LipschitzJet.from_field(make_test_solution("translated_cauchy_kernel_marker", m, center=c), mesh))
    return jets


def involution_errors(mesh, p, seed, count=5):
    jets = smooth_jets(mesh, seed, count)
    once = singular_SL_batch(jets, p)
    once = [LipschitzJet(mesh, f0, g, j.alpha) for j, (f0, g) in zip(jets, once)]
    twice = singular_SL_batch(once, p)
    return [(LipschitzJet(mesh, f0, g, j.alpha) - j).norm() / j.norm() for j, (f0, g) in zip(jets, twice)]


def _suite_involution(cfg, rep):
    mesh = build_sphere_surface(cfg.m, cfg.level)
    t = time.perf_counter()
    errs = involution_errors(mesh, cfg.params, cfg.seed)
    for k, e in enumerate(errs):
        rep.add(f"involution_jet{k}", e, 5e-2)
    rep.timings["involution_total"] = time.perf_counter() - t


def hardy_errors(mesh, p, seed):
    """Wrong-side energy fractions of catalogued interior and exterior jets."""
    m = mesh.m
    out = {}
    jets = {kind: LipschitzJet.from_field(make_test_solution(kind, m), mesh) for kind in CATALOGUE}
    rng = np.random.default_rng(seed)
    c = mesh.center + 0.2 * _random_points(rng, 1, m, 0.5, 1.0)[0]
    jets["exterior_kernel"] = LipschitzJet.from_field(
        make_test_solution("translated_cauchy_kernel_marker", m, center=c), mesh)
    names = list(jets)
    images = singular_SL_batch([jets[k] for k in names], p)
    for name, (f0, g) in zip(names, images):
        jet = jets[name]
        plus, minus = hardy_projections(jet, p, image=LipschitzJet(mesh, f0, g, jet.alpha))
        wrong = plus if name == "exterior_kernel" else minus
        out[name] = (wrong.norm() / jet.norm(), plus, minus)
    return out


def _suite_hardy(cfg, rep):
    mesh = build_sphere_surface(cfg.m, cfg.level)
    p = cfg.params
    t = time.perf_counter()
    res = hardy_errors(mesh, p, cfg.seed)
    for name, (frac, plus, minus) in res.items():
        side = "plus" if name == "exterior_kernel" else "minus"
        rep.add(f"{side}_part_small_{name}", frac, 5e-2)
    rep.timings["hardy_catalogue"] = time.perf_counter() - t

    t = time.perf_counter()
    jet = smooth_jets(mesh, cfg.seed, 2)[0]
    plus, minus = hardy_projections(jet, p)
    rep.add("projections_sum_to_identity", (plus + minus - jet).norm() / jet.norm(), 1e-12)
    # P+ P- f = (f - S S f) / 4
    minus_of_plus = hardy_projections(plus, p)[1]
    rep.add("projections_annihilate", minus_of_plus.norm() / jet.norm(), 5e-2, t)


def recovery_errors(mesh, p, seed):
    m = mesh.m
    fields = {kind: make_test_solution(kind, m) for kind in ("coordinate", "monogenic_linear", "universal_quadratic")}
    fields["random_poly"] = random_poly(m, 3, seed)
    c1, c2 = float(p.a), float(p.b)
    out = {}
    for name, fld in fields.items():
        jet = LipschitzJet.from_field(fld, mesh)
        grad = recover_jet(jet.f0, M_traces(jet, p), c1, c2, mesh)
        w = mesh.weights
        num = np.sqrt(w @ np.sum((grad - jet.grad) ** 2, axis=(1, 2)))
        den = np.sqrt(w @ np.sum(jet.grad ** 2, axis=(1, 2)))
        out[name] = float(num / den)
    return out


def degeneracy_raises(mesh, c1, c2):
    n = 1 << mesh.m
    try:
        recover_jet(np.zeros((mesh.size, n)), np.zeros((mesh.size, n)), c1, c2, mesh)
    except DegeneracyError:
        return True
    return False


def _suite_recovery(cfg, rep):
    mesh = build_sphere_surface(cfg.m, cfg.level)
    t = time.perf_counter()
    for name, err in recovery_errors(mesh, cfg.params, cfg.seed).items():
        rep.add(f"planted_gradient_{name}", err, 5e-2)
    rep.timings["recovery_planted"] = time.perf_counter() - t
    rep.add("degenerate_c1_equals_c2", 0.0 if degeneracy_raises(mesh, 1.0, 1.0) else 1.0, 0.0)
    rep.add("degenerate_c1_equals_minus_c2", 0.0 if degeneracy_raises(mesh, 1.0, -1.0) else 1.0, 0.0)


def holder_fit(jet, seed, count=400):
    """Whitney-quotient regression on node pairs from ``2h`` (or less) out to ``20h``."""
    mesh = jet.mesh
    rmax = min(20.0 * mesh.h, float(mesh.radii.min()))
    rmin = min(2.0 * mesh.h, rmax / 10.0)
    pairs = sample_pairs(mesh, count, rmin, rmax, seed)
    r, res = whitney_residuals(jet, pairs)
    return fit_exponent(np.column_stack([r, res]))


def _suite_holder(cfg, rep):
    mesh = build_sphere_surface(cfg.m, cfg.level)
    p = cfg.params
    jets = [LipschitzJet(mesh, j.f0, j.grad, cfg.alpha) for j in smooth_jets(mesh, cfg.seed, 4)[:3]]
    images = singular_SL_batch(jets, p)
    target = 1.0 + cfg.alpha - 0.2
    for k, (f0, g) in enumerate(images):
        t = time.perf_counter()
        fit = holder_fit(LipschitzJet(mesh, f0, g, cfg.alpha), cfg.seed + k)
        rep.exponents[f"image_jet{k}"] = {"slope": fit.slope, "r2": fit.r2, "pairs": fit.count}
        # residuals are shortfalls below the required exponent and R^2
        rep.add(f"exponent_jet{k}", max(0.0, target - fit.slope), 0.0, t)
        rep.add(f"fit_quality_jet{k}", max(0.0, 0.9 - fit.r2), 0.0)


_RUNNERS = {
    "algebra": _suite_algebra,
    "kernels": _suite_kernels,
    "cauchy": _suite_cauchy,
    "borel_pompeiu": _suite_borel_pompeiu,
    "involution": _suite_involution,
    "hardy": _suite_hardy,
    "recovery": _suite_recovery,
    "holder": _suite_holder,
}


def run_suite(cfg: RunConfig, suite):
    """Run one verification suite; writes ``cfg.out`` when set."""
    if suite not in _RUNNERS:
        raise ConfigError(f"unknown suite {suite!r}; expected one of {SUITES}")
    if suite in _SURFACE_SUITES:
        _check_surface_config(cfg, suite)
    rep = SuiteReport(suite, cfg.parameters())
    _RUNNERS[suite](cfg, rep)
    if cfg.out:
        write_json(cfg.out, rep.to_json())
    return rep


# -- convergence studies ---------------------------------------------------------

def _level_residuals(suite, cfg, level):
    m, p = cfg.m, cfg.params
    mesh = build_sphere_surface(m, level)
    rng = np.random.default_rng(cfg.seed)
    if suite == "involution":
        errs = involution_errors(mesh, p, cfg.seed)
        return mesh, {f"jet{k}": e for k, e in enumerate(errs)}
    if suite == "hardy":
        return mesh, {k: v[0] for k, v in hardy_errors(mesh, p, cfg.seed).items()}
    if suite == "half_value":
        return mesh, {"half_value": half_value_error(mesh)}
    if suite == "cauchy":
        inner = _random_points(rng, 10, m, 0.0, 0.7)
        outer = _random_points(rng, 10, m, 1.3, 2.0)
        return mesh, {kind: reproduction_errors(mesh, p, kind, inner, outer)[0] for kind in CATALOGUE}
    if suite == "jump":
        nodes = np.sort(rng.choice(mesh.size, size=min(40, mesh.size), replace=False))
        return mesh, {kind: jump_errors(mesh, p, kind, nodes)[2] for kind in CATALOGUE}
    if suite == "borel_pompeiu":
        quad = PolyField.monomial((2,) + (0,) * (m - 1), m)
        x = _interior_points(rng, 1, m)[0]
        res = 2 ** (level + 1)
        vol = build_ball_volume(m, res, pole=x)
        return mesh, {"x1_squared": borel_pompeiu_residual(quad, p, mesh, vol, x).norm()}
    raise ConfigError(f"unknown convergence suite {suite!r}; expected one of {CONVERGE_SUITES}")


def converge(cfg: RunConfig, suite, levels, csv_path=None):
    """Residuals of ``suite`` over refinement ``levels``.

    Returns a :class:`SuiteReport` whose checks state that the worst residual
    decreases strictly from each level to the next.
    """
    if suite not in CONVERGE_SUITES:
        raise ConfigError(f"unknown convergence suite {suite!r}; expected one of {CONVERGE_SUITES}")
    levels = [int(v) for v in levels]
    if len(levels) < 2 or sorted(set(levels)) != levels:
        raise ConfigError(f"levels must be at least two strictly increasing integers, got {levels}")
    kind = "involution" if suite in ("involution", "hardy") else "cauchy"
    for level in levels:
        _check_surface_config(cfg, kind, level)
    rep = SuiteReport(f"converge_{suite}", dict(cfg.parameters(), levels=levels))
    rows = []
    for level in levels:
        t = time.perf_counter()
        mesh, res = _level_residuals(suite, cfg, level)
        rep.timings[f"level{level}"] = time.perf_counter() - t
        rows.append({"level": level, "nodes": mesh.size, "h": mesh.h, "max_residual": max(res.values()), **res})
    rep.tables[suite] = {str(r["level"]): r["max_residual"] for r in rows}
    for prev, nxt in zip(rows, rows[1:]):
        # a ratio below one means the residual decreased
        rep.add(f"decrease_level{prev['level']}_to_{nxt['level']}",
                nxt["max_residual"] / prev["max_residual"], 1.0 - 1e-12)
    if csv_path:
        write_csv(csv_path, rows)
    if cfg.out:
        write_json(cfg.out, rep.to_json())
    return rep, rows


def write_csv(path, rows):
    cols = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in rows:
            wr.writerow([f"{r[c]:.10g}" if isinstance(r[c], float) else r[c] for c in cols])


# -- Hardy decomposition -------------------------------------------------------------

def load_jet(path):
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        mesh = mesh_from_descriptor(obj["mesh"])
        return LipschitzJet.from_json(obj, mesh)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, LameHardyError) as exc:
        raise ConfigError(f"cannot read jet file {path}: {exc}") from exc


def save_jet(path, jet):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(jet.to_json(), sort_keys=True) + "\n")


def decompose(cfg: RunConfig, jet_path, out_prefix):
    """Split a jet into its Hardy parts; writes ``<prefix>_plus.json``, ``_minus.json`` and ``_report.json``."""
    jet = load_jet(jet_path)
    desc = jet.mesh.descriptor
    if jet.m != cfg.m or int(desc["level"]) != cfg.level:
        raise ConfigError(
            f"jet mesh (m={jet.m}, level={desc['level']}) does not match the configuration "
            f"(m={cfg.m}, level={cfg.level})")
    _check_surface_config(cfg, "hardy")
    p = cfg.params
    rep = SuiteReport("decompose", dict(cfg.parameters(), mesh=dict(desc)))
    t = time.perf_counter()
    image = singular_SL(jet, p).jet
    plus, minus = hardy_projections(jet, p, image=image)
    nrm = jet.norm()
    scale = nrm if nrm > 0 else 1.0
    rep.add("reconstruction", (plus + minus - jet).norm() / scale, 1e-12, t)
    t = time.perf_counter()
    twice = singular_SL(image, p).jet
    rep.add("involution", (twice - jet).norm() / scale, 5e-2, t)
    rep.info["plus_norm_fraction"] = plus.norm() / scale
    rep.info["minus_norm_fraction"] = minus.norm() / scale
    save_jet(f"{out_prefix}_plus.json", plus)
    save_jet(f"{out_prefix}_minus.json", minus)
    write_json(cfg.out or f"{out_prefix}_report.json", rep.to_json())
    return rep, plus, minus
