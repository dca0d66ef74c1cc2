"""lhsurf: conformal-factor / mean-curvature surface processing.

A surface patch sampled over a rectangular conformal parameter domain is
represented by two scalar fields, the conformal factor lambda and the
mean curvature H, which determine it up to a rigid motion given boundary
data.  The package extracts that representation, reconstructs surfaces
from it, and fills surface holes by biharmonically inpainting lambda and
H on the parameter domain before reconstructing.
"""

from .errors import (
    AlignmentError,
    ConsistencyWarning,
    CoverageError,
    DomainError,
    FlatteningError,
    FormatError,
    ImmersionError,
    InputError,
    IntegrabilityWarning,
    InvariantError,
    LhsurfError,
    MaskError,
    NumericalError,
    OptionError,
    SearchWarning,
    SizeError,
    SolverError,
    TopologyError,
)
from .geometry import (
    ConformalityReport,
    FirstFundamentalForm,
    LambdaH,
    SurfacePatch,
    check_immersion,
    conformal_factor,
    conformality_residual,
    extract_lambda_h,
    first_fundamental_form,
    gaussian_curvature,
    mean_curvature,
    mu_from_surface,
    surface_normal,
)
from .grid import (
    ComplexField,
    ComplexVec3Field,
    HoleMask,
    ParamGrid,
    ScalarField,
    Vec3Field,
    bilaplacian,
    d_z,
    d_zbar,
    laplacian,
)
from .inpaint import (
    InpaintOptions,
    biharmonic_direct,
    biharmonic_inpaint,
    initial_fill,
    inpaint_surface,
    run_biharmonic_flow,
)
from .parameterize import (
    TriMesh,
    UvChart,
    harmonic_param,
    load_obj,
    optimal_aspect,
    resample_to_grid,
    snap_aspect,
)
from .reconstruct import (
    BoundaryData,
    NaturalFrame,
    codazzi_rhs,
    extract_boundary_data,
    integrate_position,
    reconstruct_surface,
    solve_frame,
    solve_mu,
)
from .synth import SynthSpec, SynthResult, synth
from .validate import RigidMotion, best_rigid_align, convergence_order, field_error

__version__ = "0.1.0"
