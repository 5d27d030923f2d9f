"""Clifford-analytic boundary integral toolkit for the Lame-Navier system.

Subpackages are plain modules:

- :mod:`lamehardy.clifford`   dense arithmetic in R_{0,m}
- :mod:`lamehardy.poly`       exact polynomial fields and the Lame operators
- :mod:`lamehardy.geometry`   surface and ball quadrature
- :mod:`lamehardy.kernels`    fundamental solutions
- :mod:`lamehardy.boundary`   Cauchy transforms, the singular operator, jets
- :mod:`lamehardy.volume`     Teodorescu transforms and representation residuals
- :mod:`lamehardy.harness`    verification suites behind the ``lamehardy`` CLI
"""

from .clifford import (
    Multivector,
    blade_product,
    clifford_norm,
    conjugate,
    embed_vector,
    geometric_product,
    invert_vector,
    scalar_part,
)
from .errors import (
    ConditioningError,
    ConfigError,
    DegeneracyError,
    DomainError,
    LameHardyError,
    NearSingularError,
    SingularityError,
)
from .geometry import (
    SurfaceMesh,
    VolumeGrid,
    build_ball_volume,
    build_ellipsoid_surface,
    build_sphere_surface,
    probe_pair,
    tangent_frame,
)
from .kernels import eval_E0, eval_E0_grad, eval_E1, eval_E1_grad, surface_area_unit_sphere
from .poly import LameParams, PolyField, apply_operator, classical_lame_residual, make_test_solution
from .boundary import (
    LipschitzJet,
    cauchy_harmonic,
    cauchy_infra,
    cauchy_lame,
    cauchy_monogenic,
    half_value,
    hardy_projections,
    jump_estimate,
    lame_cauchy_integral,
    recover_jet,
    singular_SL,
)
from .volume import VolumeSampleField, borel_pompeiu_residual, exterior_representation_residual, teodorescu

__version__ = "0.1.0"
