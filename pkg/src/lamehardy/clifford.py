"""Dense arithmetic in the real Clifford algebra R_{0,m}.

Basis blades are encoded as bitmasks: bit ``i-1`` set means ``e_i`` is a factor,
mask 0 is the scalar blade.  Generators square to -1 and anticommute.

Two layers live here.  :class:`Multivector` is a small immutable value type
for exact-looking user-level work (JSON, reports, tests).  The array functions
(:func:`mv_product`, :func:`mv_conjugate`, ...) act on float arrays whose last
axis has length ``2**m`` and broadcast over leading axes; the quadrature code
uses those directly.
"""

from functools import lru_cache

import numpy as np

from .errors import DomainError, SingularityError

MIN_DIM = 1
MAX_DIM = 6


def _check_dim(m):
    if not (MIN_DIM <= int(m) <= MAX_DIM) or int(m) != m:
        raise DomainError(f"dimension m={m} outside supported range {MIN_DIM}..{MAX_DIM}")
    return int(m)


def grade(mask):
    return bin(mask).count("1")


def blade_product(a, b, m):
    """Sign and mask of ``e_A e_B``.

    Moving each generator of ``B`` left past the higher generators of ``A``
    costs one swap; each shared generator contracts to -1.
    """
    m = _check_dim(m)
    n = 1 << m
    if not (0 <= a < n and 0 <= b < n):
        raise DomainError(f"blade mask out of range for m={m}: {a}, {b}")
    swaps = 0
    x = a >> 1
    while x:
        swaps += grade(x & b)
        x >>= 1
    swaps += grade(a & b)
    return (-1 if swaps & 1 else 1), a ^ b


@lru_cache(maxsize=None)
def sign_table(m):
    """``S[a, b]`` = sign of ``e_a e_b`` (the result mask is ``a ^ b``)."""
    m = _check_dim(m)
    n = 1 << m
    table = np.empty((n, n), dtype=np.int8)
    for a in range(n):
        for b in range(n):
            table[a, b] = blade_product(a, b, m)[0]
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def _product_plan(m):
    # out[c] = sum_a A[a] * B[a ^ c] * S[a, a ^ c]
    n = 1 << m
    idx = np.arange(n)
    partner = idx[:, None] ^ idx[None, :]
    signs = sign_table(m)[idx[:, None], partner].astype(float)
    partner.setflags(write=False)
    signs.setflags(write=False)
    return partner, signs


@lru_cache(maxsize=None)
def conjugation_signs(m):
    """Per-blade sign of the Clifford conjugation: ``(-1)^(k(k+1)/2)`` for grade k."""
    n = 1 << _check_dim(m)
    out = np.array([(-1.0) ** (grade(A) * (grade(A) + 1) // 2) for A in range(n)])
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def vector_masks(m):
    return tuple(1 << i for i in range(_check_dim(m)))


def dim_from_size(size):
    m = int(size).bit_length() - 1
    if size <= 0 or (1 << m) != size:
        raise DomainError(f"coefficient length {size} is not a power of two")
    return _check_dim(m)


# -- array layer --------------------------------------------------------------

def mv_product(A, B, m):
    """Geometric product of coefficient arrays, broadcasting over leading axes."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = 1 << m
    if A.shape[-1] != n or B.shape[-1] != n:
        raise DomainError(f"expected trailing axis {n}, got {A.shape[-1]} and {B.shape[-1]}")
    partner, signs = _product_plan(m)
    return np.einsum("...a,...ac->...c", A, B[..., partner] * signs)


def mv_conjugate(A, m):
    return np.asarray(A, dtype=float) * conjugation_signs(m)


def embed_vectors(x, m):
    """Coordinates ``(..., m)`` -> grade-1 coefficient arrays ``(..., 2**m)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m:
        raise DomainError(f"expected {m} coordinates, got {x.shape[-1]}")
    out = np.zeros(x.shape[:-1] + (1 << m,))
    out[..., list(vector_masks(m))] = x
    return out


def vector_part(A, m):
    return np.asarray(A)[..., list(vector_masks(m))]


def left_basis(i, A, m):
    """``e_i A`` for the generator index ``i`` in ``1..m``."""
    e = 1 << (i - 1)
    n = 1 << m
    idx = np.arange(n)
    return np.asarray(A)[..., idx ^ e] * sign_table(m)[e, idx ^ e]


def right_basis(A, i, m):
    """``A e_i`` for the generator index ``i`` in ``1..m``."""
    e = 1 << (i - 1)
    n = 1 << m
    idx = np.arange(n)
    return np.asarray(A)[..., idx ^ e] * sign_table(m)[idx ^ e, e]


def mv_norm(A, m):
    """Clifford norm ``sqrt(Sc[a conj(a)])`` over the trailing axis."""
    A = np.asarray(A, dtype=float)
    sc = mv_product(A, mv_conjugate(A, m), m)[..., 0]
    return np.sqrt(np.maximum(sc, 0.0))


# -- value layer --------------------------------------------------------------

class Multivector:
    """Immutable element of R_{0,m} with dense float coefficients."""

    __slots__ = ("_m", "_coeffs")

    def __init__(self, m, coeffs=None):
        m = _check_dim(m)
        n = 1 << m
        if coeffs is None:
            arr = np.zeros(n)
        else:
            arr = np.array(coeffs, dtype=float).reshape(-1)
            if arr.shape[0] != n:
                raise DomainError(f"m={m} needs {n} coefficients, got {arr.shape[0]}")
        arr.setflags(write=False)
        self._m = m
        self._coeffs = arr

    @property
    def m(self):
        return self._m

    @property
    def coeffs(self):
        return self._coeffs

    @classmethod
    def scalar(cls, value, m):
        out = np.zeros(1 << m)
        out[0] = value
        return cls(m, out)

    @classmethod
    def blade(cls, mask, m, value=1.0):
        n = 1 << _check_dim(m)
        if not 0 <= mask < n:
            raise DomainError(f"blade mask {mask} out of range for m={m}")
        out = np.zeros(n)
        out[mask] = value
        return cls(m, out)

    @classmethod
    def basis(cls, i, m):
        """The generator ``e_i``, ``i`` in ``1..m``."""
        if not 1 <= i <= m:
            raise DomainError(f"generator index {i} out of range for m={m}")
        return cls.blade(1 << (i - 1), m)

    def _coerce(self, other):
        if isinstance(other, Multivector):
            if other.m != self.m:
                raise DomainError(f"dimension mismatch: m={self.m} vs m={other.m}")
            return other
        if np.isscalar(other):
            return Multivector.scalar(float(other), self.m)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Multivector(self.m, self._coeffs + other._coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Multivector(self.m, self._coeffs - other._coeffs)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Multivector(self.m, -self._coeffs)

    def __mul__(self, other):
        if np.isscalar(other):
            return Multivector(self.m, self._coeffs * float(other))
        if isinstance(other, Multivector):
            return geometric_product(self, other)
        return NotImplemented

    def __rmul__(self, other):
        if np.isscalar(other):
            return Multivector(self.m, self._coeffs * float(other))
        return NotImplemented

    def __truediv__(self, other):
        if np.isscalar(other):
            return Multivector(self.m, self._coeffs / float(other))
        return NotImplemented

    def __eq__(self, other):
        if not isinstance(other, Multivector):
            return NotImplemented
        return self.m == other.m and bool(np.array_equal(self._coeffs, other._coeffs))

    def __hash__(self):
        return hash((self.m, self._coeffs.tobytes()))

    def allclose(self, other, atol=1e-12, rtol=0.0):
        other = self._coerce(other)
        return bool(np.allclose(self._coeffs, other._coeffs, atol=atol, rtol=rtol))

    def grade_part(self, k):
        keep = np.array([grade(A) == k for A in range(1 << self.m)])
        return Multivector(self.m, np.where(keep, self._coeffs, 0.0))

    def is_vector(self, tol=0.0):
        keep = np.array([grade(A) == 1 for A in range(1 << self.m)])
        return bool(np.all(np.abs(self._coeffs[~keep]) <= tol))

    def vector_coords(self):
        return self._coeffs[list(vector_masks(self.m))].copy()

    def conjugate(self):
        return conjugate(self)

    def scalar_part(self):
        return scalar_part(self)

    def norm(self):
        return clifford_norm(self)

    def to_json(self):
        return {"m": self.m, "coeffs": [float(c) for c in self._coeffs]}

    @classmethod
    def from_json(cls, obj):
        try:
            m = obj["m"]
            coeffs = obj["coeffs"]
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed multivector JSON: {obj!r}") from exc
        return cls(m, coeffs)

    def __repr__(self):
        terms = []
        for A, c in enumerate(self._coeffs):
            if c == 0:
                continue
            name = "1" if A == 0 else "e" + "".join(str(i + 1) for i in range(self.m) if A >> i & 1)
            terms.append(f"{c:+g}*{name}")
        return f"Multivector(m={self.m}, {' '.join(terms) or '0'})"


def geometric_product(a, b):
    if a.m != b.m:
        raise DomainError(f"dimension mismatch: m={a.m} vs m={b.m}")
    return Multivector(a.m, mv_product(a.coeffs, b.coeffs, a.m))


def conjugate(a):
    return Multivector(a.m, mv_conjugate(a.coeffs, a.m))


def scalar_part(a):
    return float(a.coeffs[0])


def clifford_norm(a):
    return float(np.sqrt(max(scalar_part(geometric_product(a, conjugate(a))), 0.0)))


def embed_vector(x):
    x = np.asarray(x, dtype=float)
    return Multivector(len(x), embed_vectors(x, len(x)))


def invert_vector(u, tol=1e-14):
    """Inverse of a nonzero vector: ``u^{-1} = -u / |u|^2``."""
    if not u.is_vector():
        raise DomainError("invert_vector expects a grade-1 multivector")
    nrm2 = float(np.dot(u.coeffs, u.coeffs))
    if nrm2 <= tol * tol:
        raise SingularityError("cannot invert the zero vector")
    return Multivector(u.m, -u.coeffs / nrm2)
