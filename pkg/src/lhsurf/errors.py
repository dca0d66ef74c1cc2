"""Exception hierarchy and warning categories.

Three error families map onto the CLI exit codes: input/format problems
(exit 2), numerical/solver failures (exit 3) and violated mathematical
invariants (exit 4).
"""


class LhsurfError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(LhsurfError):
    """Bad files, formats, sizes or options."""

    exit_code = 2


class SizeError(InputError):
    """Grid or field too small for the requested stencil."""


class FormatError(InputError):
    """Malformed or inconsistent file content."""


class MaskError(InputError):
    """Hole mask violates placement rules (empty, or too close to the boundary)."""


class OptionError(InputError):
    """Invalid option value (e.g. time step above the stability bound)."""


class TopologyError(InputError):
    """Mesh is not a disk, not manifold, or corners are badly placed."""


class CoverageError(InputError):
    """Grid nodes fall outside the flattened chart."""


class NumericalError(LhsurfError):
    """Solver failure, divergence or loss of accuracy."""

    exit_code = 3


class SolverError(NumericalError):
    """Linear system could not be solved to the required residual."""


class FlatteningError(NumericalError):
    """Flattening produced flipped triangles."""


class InvariantError(LhsurfError):
    """A documented mathematical invariant does not hold."""

    exit_code = 4


class ImmersionError(InvariantError):
    """Degenerate tangents: the sampled map is not an immersion."""


class DomainError(InvariantError):
    """Field value outside its mathematical domain (e.g. non-positive lambda)."""


class AlignmentError(InvariantError):
    """Point set too degenerate for a unique rigid alignment."""


class ConsistencyWarning(UserWarning):
    """Frame invariants violated beyond tolerance: inputs may not be integrable."""


class IntegrabilityWarning(UserWarning):
    """Prescribed gradient field has non-zero discrete curl."""


class SearchWarning(UserWarning):
    """A 1-D search terminated without bracketing a clear minimum."""
