"""Teodorescu transforms on ball grids and the representation-formula residuals.

Volume integrands are always sampled from the exact polynomial oracle, so
the residuals below measure quadrature error only.
"""

from dataclasses import dataclass

import numpy as np

from . import clifford as cl
from .boundary import LipschitzJet, _sandwich_sum, lame_cauchy_integral
from .errors import DomainError, NearSingularError
from .geometry import SurfaceMesh, VolumeGrid
from .kernels import E0_values, E1_values
from .poly import KernelSolution, LameParams, PolyField, apply_operator, make_test_solution


@dataclass(frozen=True)
class VolumeSampleField:
    """Multivector samples ``(n_points, 2**m)`` at the points of a volume grid."""

    grid: VolumeGrid
    values: np.ndarray

    def __post_init__(self):
        n = 1 << self.grid.m
        if self.values.shape != (self.grid.points.shape[0], n):
            raise DomainError(
                f"values of shape {self.values.shape} do not match the grid ({self.grid.points.shape[0]}, {n})")

    @classmethod
    def from_field(cls, fld: PolyField, grid: VolumeGrid):
        if fld.m != grid.m:
            raise DomainError(f"field has m={fld.m}, grid has m={grid.m}")
        return cls(grid, fld.evaluate_many(grid.points))

    @property
    def m(self):
        return self.grid.m


def _targets(grid, x):
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape[-1] != grid.m:
        raise DomainError(f"target points need {grid.m} coordinates")
    for row in X:
        if np.allclose(row, grid.pole, rtol=0.0, atol=1e-14):
            # the polar rule about its own pole absorbs the kernel singularity
            continue
        dist = np.min(np.linalg.norm(grid.points - row, axis=1))
        if dist < grid.cell_size:
            raise NearSingularError(
                f"target {row.tolist()} lies {dist:.3g} from a grid point (< cell size {grid.cell_size:.3g})")
    return X


def _single(x, out, m):
    return cl.Multivector(m, out[0]) if np.asarray(x).ndim == 1 else out


def _th(grid, F, X):
    m = grid.m
    out = np.empty((X.shape[0], F.shape[1]))
    for k, x in enumerate(X):
        d = grid.points - x
        r2 = np.einsum("ni,ni->n", d, d)
        keep = r2 > 0.0
        e1 = np.zeros(len(d))
        e1[keep] = E1_values(d[keep], m)
        out[k] = (grid.weights * e1) @ F
    return out


def _ti(grid, F, X):
    m = grid.m
    out = np.empty((X.shape[0], F.shape[1]))
    for k, x in enumerate(X):
        d = grid.points - x
        r2 = np.einsum("ni,ni->n", d, d)
        keep = r2 > 0.0
        e0 = np.zeros((len(d), 1 << m))
        e0[keep] = cl.embed_vectors(E0_values(d[keep], m), m)
        dv = cl.embed_vectors(d, m)
        first = cl.mv_product(cl.mv_product(e0, F, m), dv, m)
        e1 = np.zeros(len(d))
        e1[keep] = E1_values(d[keep], m)
        second = _sandwich_sum((grid.weights * e1) @ F, m)
        out[k] = -0.5 * (grid.weights @ first + second)
    return out


def teodorescu(values: VolumeSampleField, which, p: LameParams, x):
    """Teodorescu transform of volume samples at ``x``.

    ``H``: ``int E1(y-x) f(y) dy``; ``I``:
    ``-1/2 (int E0(y-x) f(y) (y-x) dy + sum_i e_i (int E1(y-x) f(y) dy) e_i)``;
    ``L``: ``-c_I T_I + c_H T_H``.
    """
    if which not in ("H", "I", "L"):
        raise DomainError(f"unknown transform {which!r}; expected 'H', 'I' or 'L'")
    grid = values.grid
    X = _targets(grid, x)
    F = np.asarray(values.values, dtype=float)
    if which == "H":
        out = _th(grid, F, X)
    elif which == "I":
        out = _ti(grid, F, X)
    else:
        out = -float(p.c_infra) * _ti(grid, F, X) + float(p.c_harmonic) * _th(grid, F, X)
    return _single(x, out, grid.m)


def _point(x, m):
    x = np.asarray(x, dtype=float)
    if x.shape != (m,):
        raise DomainError(f"expected a single point with {m} coordinates")
    return x


def borel_pompeiu_residual(f: PolyField, p: LameParams, surface: SurfaceMesh, volume: VolumeGrid, x):
    """``C f + c_H C_H(M f) - c_I C_I^r(Mbar f) + T_L(L f) - [x inside] f(x)``.

    Boundary traces and volume samples come from the exact field.  Interior
    points must be interior to ``surface``; exterior points give the
    combination that should vanish outside.
    """
    m = surface.m
    x = _point(x, m)
    if f.m != m or volume.m != m:
        raise DomainError("field, surface and volume must share m")
    jet = LipschitzJet.from_field(f, surface)
    boundary = lame_cauchy_integral(jet, p, x)
    Lf = apply_operator(f, "L", p)
    vol = teodorescu(VolumeSampleField.from_field(Lf, volume), "L", p, x)
    out = boundary + vol
    if surface.contains(x):
        out = out - f.evaluate_at(x)
    return out


def exterior_representation_residual(kind, p: LameParams, surface: SurfaceMesh, x, center=None, value=None):
    """``f(x) + C f + c_H C_H(M f) - c_I C_I^r(Mbar f) - f(inf)`` at an exterior ``x``.

    ``kind`` is ``"translated_cauchy_kernel_marker"`` (``f = E0(. - c)``,
    ``f(inf) = 0``) or ``"constant"`` (``f = value``).
    """
    m = surface.m
    x = _point(x, m)
    if surface.contains(x):
        raise DomainError("the exterior representation needs a point outside the surface")
    if kind == "translated_cauchy_kernel_marker":
        c = surface.center if center is None else np.asarray(center, dtype=float)
        if not surface.contains(c):
            raise DomainError("the kernel centre must lie strictly inside the surface")
        fld = make_test_solution(kind, m, center=c)
        fx = cl.Multivector(m, fld.values(x[None])[0])
        f_inf = cl.Multivector(m)
    elif kind == "constant":
        fld = make_test_solution(kind, m, value=value)
        fx = fld.evaluate_at(x)
        f_inf = fx
    else:
        raise DomainError(f"exterior representation supports 'translated_cauchy_kernel_marker' "
                          f"or 'constant', got {kind!r}")
    jet = LipschitzJet.from_field(fld, surface)
    return fx + lame_cauchy_integral(jet, p, x) - f_inf


__all__ = ["VolumeSampleField", "teodorescu", "borel_pompeiu_residual",
           "exterior_representation_residual", "KernelSolution"]
