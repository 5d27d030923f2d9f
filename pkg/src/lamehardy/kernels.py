"""Fundamental solutions of D and DD and their first derivatives.

``E1(x) = 1 / ((m-2) sigma_m |x|^(m-2))`` is the Newton kernel and
``E0(x) = D E1(x) = -x / (sigma_m |x|^m)`` the Cauchy kernel.  The array
functions take displacement vectors ``(..., m)`` and return either scalars or
vector coordinates ``(..., m)``; the :class:`Multivector` wrappers are for
single-point use.

Derivative kernels come in two flavours.  ``*_jacobian`` differentiate in the
displacement argument.  ``E0^j(y - x)`` in the boundary operators is the
derivative in the *target* point, ``d/dz_j E(y - z)`` at ``z = x``, which is
minus the displacement derivative.
"""

import math

import numpy as np

from .clifford import Multivector, embed_vectors
from .errors import DomainError, SingularityError


def surface_area_unit_sphere(m):
    if m < 2:
        raise DomainError(f"sigma_m needs m >= 2, got {m}")
    return 2.0 * math.pi ** (m / 2) / math.gamma(m / 2)


def _disp(x, m):
    x = np.asarray(x, dtype=float)
    if m is None:
        m = x.shape[-1]
    if x.shape[-1] != m:
        raise DomainError(f"expected {m} coordinates, got {x.shape[-1]}")
    if m < 3:
        raise DomainError(f"kernels need m >= 3, got {m}")
    r2 = np.einsum("...i,...i->...", x, x)
    if np.any(r2 == 0.0):
        raise SingularityError("kernel evaluated at zero displacement")
    return x, m, r2


def E1_values(x, m=None):
    x, m, r2 = _disp(x, m)
    sig = surface_area_unit_sphere(m)
    return 1.0 / ((m - 2) * sig * r2 ** ((m - 2) / 2))


def E0_values(x, m=None):
    """Vector coordinates of the Cauchy kernel."""
    x, m, r2 = _disp(x, m)
    sig = surface_area_unit_sphere(m)
    return -x / (sig * r2 ** (m / 2))[..., None]


def E1_gradient(x, m=None):
    """Displacement gradient ``dE1/dx_k`` as ``(..., m)``; note it equals E0 coordinatewise."""
    x, m, r2 = _disp(x, m)
    sig = surface_area_unit_sphere(m)
    return -x / (sig * r2 ** (m / 2))[..., None]


def E0_jacobian(x, m=None):
    """``J[..., i, k] = d(E0)_i / dx_k`` in the displacement argument."""
    x, m, r2 = _disp(x, m)
    sig = surface_area_unit_sphere(m)
    s0 = -1.0 / (sig * r2 ** (m / 2))
    eye = np.eye(m)
    outer = x[..., :, None] * x[..., None, :]
    return s0[..., None, None] * (eye - m * outer / r2[..., None, None])


# -- single-point wrappers ----------------------------------------------------

def eval_E1(x, m=None):
    return float(E1_values(x, m))


def eval_E0(x, m=None):
    x = np.asarray(x, dtype=float)
    m = x.shape[-1] if m is None else m
    return Multivector(m, embed_vectors(E0_values(x, m), m))


def eval_E1_grad(x, m=None, j=1):
    """Target-point derivative ``E1^j(x) = d/dz_j E1(x_disp - z)``; equals ``-dE1/dx_j``."""
    g = E1_gradient(x, m)
    if not 1 <= j <= g.shape[-1]:
        raise DomainError(f"axis {j} out of range")
    return float(-g[..., j - 1])


def eval_E0_grad(x, m=None, j=1):
    """Target-point derivative ``E0^j``; equals ``-dE0/dx_j``."""
    J = E0_jacobian(x, m)
    mm = J.shape[-1]
    if not 1 <= j <= mm:
        raise DomainError(f"axis {j} out of range")
    return Multivector(mm, embed_vectors(-J[..., :, j - 1], mm))
