"""Exact multivector-valued polynomials and the Dirac-type operators on them.

A :class:`PolyField` maps exponent tuples to coefficient tuples of
:class:`fractions.Fraction` indexed by blade mask.  All calculus here is exact;
this module is the symbolic oracle that every quadrature result is checked
against.  Float evaluation on many points is provided for sampling traces.
"""

import random
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational

import numpy as np

from .clifford import Multivector, grade, sign_table, vector_masks
from .errors import ConfigError, DomainError


def _frac(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    return Fraction(float(x))


def _exact_product(a, b, m):
    """Clifford product of two coefficient tuples of Fractions."""
    signs = sign_table(m)
    n = 1 << m
    out = [Fraction(0)] * n
    for A, ca in enumerate(a):
        if not ca:
            continue
        for B, cb in enumerate(b):
            if cb:
                out[A ^ B] += ca * cb if signs[A, B] > 0 else -(ca * cb)
    return tuple(out)


@lru_cache(maxsize=None)
def _basis_tuple(i, m):
    out = [Fraction(0)] * (1 << m)
    out[1 << (i - 1)] = Fraction(1)
    return tuple(out)


class PolyField:
    """Polynomial in ``x_1..x_m`` with exact R_{0,m} coefficients. Immutable."""

    __slots__ = ("_m", "_terms")

    def __init__(self, m, terms=None):
        self._m = int(m)
        n = 1 << self._m
        clean = {}
        for exps, coeffs in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self._m or min(exps, default=0) < 0:
                raise DomainError(f"bad exponent tuple {exps} for m={self._m}")
            if isinstance(coeffs, Multivector):
                coeffs = coeffs.coeffs
            coeffs = tuple(_frac(c) for c in coeffs)
            if len(coeffs) != n:
                raise DomainError(f"coefficient length {len(coeffs)} != {n}")
            if exps in clean:
                coeffs = tuple(p + q for p, q in zip(clean[exps], coeffs))
            clean[exps] = coeffs
        self._terms = {k: v for k, v in clean.items() if any(v)}

    # -- constructors ---------------------------------------------------------

    @classmethod
    def zero(cls, m):
        return cls(m)

    @classmethod
    def constant(cls, value, m):
        """Constant field; ``value`` is a number, a Multivector or a coefficient sequence."""
        n = 1 << m
        if isinstance(value, Multivector):
            coeffs = value.coeffs
        elif np.isscalar(value) or isinstance(value, Fraction):
            coeffs = [value] + [0] * (n - 1)
        else:
            coeffs = list(value)
        return cls(m, {(0,) * m: coeffs})

    @classmethod
    def monomial(cls, exps, m, blade=0, coeff=1):
        n = 1 << m
        coeffs = [0] * n
        coeffs[blade] = coeff
        return cls(m, {tuple(exps): coeffs})

    @classmethod
    def coordinate(cls, i, m, blade=0):
        """The field ``x_i e_blade``."""
        exps = [0] * m
        exps[i - 1] = 1
        return cls.monomial(exps, m, blade)

    @classmethod
    def position(cls, m):
        """The embedded position vector ``x = sum x_i e_i``."""
        out = cls.zero(m)
        for i in range(1, m + 1):
            out = out + cls.coordinate(i, m, blade=1 << (i - 1))
        return out

    # -- basic protocol -------------------------------------------------------

    @property
    def m(self):
        return self._m

    @property
    def terms(self):
        return dict(self._terms)

    @property
    def degree(self):
        return max((sum(e) for e in self._terms), default=0)

    def is_zero(self):
        return not self._terms

    def __eq__(self, other):
        if not isinstance(other, PolyField):
            return NotImplemented
        return self._m == other._m and self._terms == other._terms

    def __hash__(self):
        return hash((self._m, frozenset(self._terms.items())))

    def _check(self, other):
        if not isinstance(other, PolyField):
            raise DomainError(f"expected PolyField, got {type(other).__name__}")
        if other._m != self._m:
            raise DomainError(f"dimension mismatch: m={self._m} vs m={other._m}")

    def __add__(self, other):
        self._check(other)
        terms = dict(self._terms)
        for k, v in other._terms.items():
            terms[k] = tuple(p + q for p, q in zip(terms[k], v)) if k in terms else v
        return PolyField(self._m, terms)

    def __neg__(self):
        return PolyField(self._m, {k: tuple(-c for c in v) for k, v in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s):
        s = _frac(s)
        return PolyField(self._m, {k: tuple(s * c for c in v) for k, v in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, PolyField):
            return self.product(other)
        if isinstance(other, Multivector):
            return self.right_mul(other)
        return self.scale(other)

    def __rmul__(self, other):
        if isinstance(other, Multivector):
            return self.left_mul(other)
        return self.scale(other)

    def left_mul(self, c):
        """Constant multivector times the field, ``c f``."""
        c = tuple(_frac(x) for x in (c.coeffs if isinstance(c, Multivector) else c))
        return PolyField(self._m, {k: _exact_product(c, v, self._m) for k, v in self._terms.items()})

    def right_mul(self, c):
        """The field times a constant multivector, ``f c``."""
        c = tuple(_frac(x) for x in (c.coeffs if isinstance(c, Multivector) else c))
        return PolyField(self._m, {k: _exact_product(v, c, self._m) for k, v in self._terms.items()})

    def product(self, other):
        self._check(other)
        out = {}
        for ka, va in self._terms.items():
            for kb, vb in other._terms.items():
                k = tuple(p + q for p, q in zip(ka, kb))
                v = _exact_product(va, vb, self._m)
                out[k] = tuple(p + q for p, q in zip(out[k], v)) if k in out else v
        return PolyField(self._m, out)

    def grade_part(self, k):
        n = 1 << self._m
        keep = [grade(A) == k for A in range(n)]
        return PolyField(self._m, {e: tuple(c if keep[A] else Fraction(0) for A, c in enumerate(v))
                                   for e, v in self._terms.items()})

    def is_vector_valued(self):
        n = 1 << self._m
        return all(not c for v in self._terms.values() for A, c in enumerate(v) if grade(A) != 1)

    def component(self, blade):
        """Scalar-valued field holding one blade coefficient."""
        return PolyField(self._m, {e: (v[blade],) + (Fraction(0),) * ((1 << self._m) - 1)
                                   for e, v in self._terms.items()})

    # -- evaluation -----------------------------------------------------------

    def evaluate_exact(self, x):
        x = [_frac(t) for t in x]
        if len(x) != self._m:
            raise DomainError(f"point needs {self._m} coordinates")
        n = 1 << self._m
        acc = [Fraction(0)] * n
        for exps, v in self._terms.items():
            mono = Fraction(1)
            for xi, e in zip(x, exps):
                if e:
                    mono *= xi ** e
            for A in range(n):
                acc[A] += mono * v[A]
        return acc

    def evaluate_at(self, x):
        """Exact rational evaluation, rounded to a float Multivector."""
        return Multivector(self._m, [float(c) for c in self.evaluate_exact(x)])

    def evaluate_many(self, points):
        """Float evaluation at ``(N, m)`` points; returns ``(N, 2**m)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = 1 << self._m
        if not self._terms:
            return np.zeros((pts.shape[0], n))
        exps = np.array(list(self._terms.keys()), dtype=int)
        coef = np.array([[float(c) for c in v] for v in self._terms.values()])
        mono = np.ones((pts.shape[0], exps.shape[0]))
        for i in range(self._m):
            col = exps[:, i]
            if col.any():
                mono *= pts[:, i:i + 1] ** col[None, :]
        return mono @ coef

    def to_json(self):
        return {"m": self._m,
                "terms": [{"exponents": list(k), "coeffs": [str(c) for c in v]}
                          for k, v in sorted(self._terms.items())]}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["m"], {tuple(t["exponents"]): [Fraction(c) for c in t["coeffs"]]
                              for t in obj["terms"]})

    def __repr__(self):
        return f"PolyField(m={self._m}, degree={self.degree}, terms={len(self._terms)})"


# -- calculus -----------------------------------------------------------------

def partial_derivative(f, j):
    if not 1 <= j <= f.m:
        raise DomainError(f"axis {j} out of range 1..{f.m}")
    out = {}
    for exps, v in f.terms.items():
        e = exps[j - 1]
        if e == 0:
            continue
        new = list(exps)
        new[j - 1] -= 1
        out[tuple(new)] = tuple(e * c for c in v)
    return PolyField(f.m, out)


def gradient(f):
    return [partial_derivative(f, j) for j in range(1, f.m + 1)]


def dirac_left(f):
    """``D f = sum_j e_j d_j f``."""
    out = PolyField.zero(f.m)
    for j in range(1, f.m + 1):
        out = out + partial_derivative(f, j).left_mul(_basis_tuple(j, f.m))
    return out


def dirac_right(f):
    """``f D = sum_j (d_j f) e_j``."""
    out = PolyField.zero(f.m)
    for j in range(1, f.m + 1):
        out = out + partial_derivative(f, j).right_mul(_basis_tuple(j, f.m))
    return out


def laplacian(f):
    out = PolyField.zero(f.m)
    for j in range(1, f.m + 1):
        out = out + partial_derivative(partial_derivative(f, j), j)
    return out


# -- Lame parameters ----------------------------------------------------------

@dataclass(frozen=True)
class LameParams:
    """Lame constants; derived coefficients keep the arithmetic type of the inputs.

    ``a = (mu+lam)/2`` and ``b = (3mu+lam)/2`` weight the sandwich and Laplace
    parts of the operator; ``c_infra`` and ``c_harmonic`` are the weights of the
    inframonogenic and harmonic transforms in the Lame-Navier ones.
    """

    mu: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if not self.lam > -Fraction(2, 3) * _frac(self.mu):
            raise ConfigError(f"lambda must exceed -2/3 mu, got lambda={self.lam}, mu={self.mu}")

    @property
    def a(self):
        return (self.mu + self.lam) / 2

    @property
    def b(self):
        return (3 * self.mu + self.lam) / 2

    @property
    def c_infra(self):
        return (self.mu + self.lam) / (2 * self.mu * (2 * self.mu + self.lam))

    @property
    def c_harmonic(self):
        return (3 * self.mu + self.lam) / (2 * self.mu * (2 * self.mu + self.lam))

    def exact(self):
        return LameParams(_frac(self.mu), _frac(self.lam))

    def as_float(self):
        return LameParams(float(self.mu), float(self.lam))

    def to_json(self):
        return {"mu": float(self.mu), "lambda": float(self.lam)}


OPERATORS = ("M", "Mbar", "L", "DD")


def apply_operator(f, which, p):
    """Apply ``M``, ``Mbar``, ``L`` or ``DD`` exactly."""
    p = p.exact()
    a, b = p.a, p.b
    if which == "M":
        return dirac_right(f).scale(a) + dirac_left(f).scale(b)
    if which == "Mbar":
        return dirac_left(f).scale(a) + dirac_right(f).scale(b)
    if which == "L":
        return dirac_right(dirac_left(f)).scale(a) + dirac_left(dirac_left(f)).scale(b)
    if which == "DD":
        return dirac_left(dirac_left(f))
    raise DomainError(f"unknown operator {which!r}; expected one of {OPERATORS}")


def grad_div(u):
    """``grad(div u)`` of a vector field as a vector field."""
    m = u.m
    div = PolyField.zero(m)
    for i in range(1, m + 1):
        div = div + partial_derivative(u.component(1 << (i - 1)), i)
    out = PolyField.zero(m)
    for j in range(1, m + 1):
        out = out + partial_derivative(div, j).left_mul(_basis_tuple(j, m))
    return out


def _clifford_form(u, p):
    return apply_operator(u, "L", p)


def _classical_form(u, p):
    p = p.exact()
    return laplacian(u).scale(p.mu) + grad_div(u).scale(p.mu + p.lam)


@lru_cache(maxsize=None)
def lame_sign():
    """Sign s with ``L u + s (mu Lap u + (mu+lam) grad div u) = 0`` for vector fields.

    Fixed by comparing both forms on ``x_1^2 e_1`` with generic rational
    parameters; every other vector polynomial is then checked by the tests.
    """
    m = 3
    p = LameParams(Fraction(7, 5), Fraction(3, 11))
    u = PolyField.monomial((2, 0, 0), m, blade=1)
    cl = _clifford_form(u, p)
    vc = _classical_form(u, p)
    if cl == -vc:
        return 1
    if cl == vc:
        return -1
    raise AssertionError("Clifford and classical Lame forms are not proportional")


def classical_lame_residual(u, p):
    """``L u + s (mu Lap u + (mu+lam) grad div u)``, identically zero for vector ``u``."""
    if not u.is_vector_valued():
        raise DomainError("classical Lame-Navier form is defined for vector fields only")
    return _clifford_form(u, p) + _classical_form(u, p).scale(lame_sign())


# -- catalogue ----------------------------------------------------------------

@dataclass(frozen=True)
class KernelSolution:
    """The exterior solution ``y -> E0(y - c)`` with closed-form derivatives."""

    center: tuple
    m: int

    def values(self, points):
        from .clifford import embed_vectors
        from .kernels import E0_values
        c = np.asarray(self.center, dtype=float)
        return embed_vectors(E0_values(np.asarray(points) - c, self.m), self.m)

    def derivatives(self, points):
        """``(N, m, 2**m)``: the y-derivatives ``d/dy_j E0(y - c)``."""
        from .clifford import embed_vectors
        from .kernels import E0_jacobian
        c = np.asarray(self.center, dtype=float)
        J = E0_jacobian(np.asarray(points) - c, self.m)
        return embed_vectors(np.swapaxes(J, -1, -2), self.m)


SOLUTION_KINDS = ("constant", "coordinate", "monogenic_linear", "universal_quadratic",
                  "translated_cauchy_kernel_marker", "random_poly")


def random_poly(m, degree, seed, max_terms=None):
    """Generic field with small-integer-over-small-integer coefficients on every blade."""
    rng = random.Random(seed)
    n = 1 << m
    exps = [e for e in _exponents(m, degree)]
    if max_terms is not None and len(exps) > max_terms:
        exps = rng.sample(exps, max_terms)
    terms = {}
    for e in exps:
        terms[e] = [Fraction(rng.randint(-6, 6), rng.randint(1, 4)) for _ in range(n)]
    return PolyField(m, terms)


def _exponents(m, degree):
    if m == 0:
        yield ()
        return
    for first in range(degree + 1):
        for rest in _exponents(m - 1, degree - first):
            yield (first,) + rest


def make_test_solution(kind, m, *, degree=3, seed=1, center=None, value=None):
    """Catalogued fields.

    ``constant``, ``coordinate`` (``x_1``), ``monogenic_linear``
    (``x_1 e_2 + x_2 e_1``) and ``universal_quadratic`` (``x_1^2 - x_2^2``) solve
    the Lame-Navier system for every admissible parameter pair.
    ``translated_cauchy_kernel_marker`` returns a :class:`KernelSolution`
    (exterior solution vanishing at infinity).  ``random_poly`` is a generic
    non-solution.
    """
    if kind == "constant":
        if value is None:
            value = [Fraction(1)] + [Fraction(k % 5 - 2, 3) for k in range(1, 1 << m)]
        return PolyField.constant(value, m)
    if kind == "coordinate":
        return PolyField.coordinate(1, m)
    if kind == "monogenic_linear":
        return PolyField.coordinate(1, m, blade=2) + PolyField.coordinate(2, m, blade=1)
    if kind == "universal_quadratic":
        return PolyField.monomial((2,) + (0,) * (m - 1), m) - PolyField.monomial((0, 2) + (0,) * (m - 2), m)
    if kind == "translated_cauchy_kernel_marker":
        c = tuple(float(t) for t in (np.zeros(m) if center is None else center))
        return KernelSolution(c, m)
    if kind == "random_poly":
        return random_poly(m, degree, seed)
    raise DomainError(f"unknown solution kind {kind!r}; expected one of {SOLUTION_KINDS}")
