# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Exception hierarchy for epirelax.

Input errors map to exit code 2 on the command line, numerical failures to exit code 3.
"""


class EpirelaxError(Exception):
    """Base class for all epirelax errors."""

    exit_code = 3


class InputError(EpirelaxError, ValueError):
    """Invalid input: the caller can fix it by changing the data or the configuration."""

    exit_code = 2


class NumericalError(EpirelaxError, ArithmeticError):
    """A numerical procedure could not deliver its contract."""

    exit_code = 3


class ConfigError(InputError):
    """Unreadable or inconsistent configuration."""


# ---------------------------------------------------------------------------
# profile
# ---------------------------------------------------------------------------


class EmptyDomain(InputError):
    """The domain (a, b) does not satisfy a < b."""


class NonMonotoneBreakpoints(InputError):
    """Breakpoints or arc abscissae are not strictly increasing."""


class NegativeHeight(InputError):
    """A film height is negative."""


class NotLowerSemicontinuous(InputError):
    """A point value exceeds the smaller one-sided limit."""


class LimitMismatch(InputError):
    """Stored one-sided limits disagree with the adjacent arc endpoints."""


class WindowOutOfDomain(InputError):
    """A window is empty or not contained in the profile domain."""


class NonPositiveEps(InputError):
    """A cut threshold is not strictly positive."""


# ---------------------------------------------------------------------------
# envelope
# ---------------------------------------------------------------------------


class DegenerateGrid(InputError):
    """The sampling grid has fewer than two points or a non-positive extent."""


class NonPositivePsi(InputError):
    """The surface density is not bounded below by a positive constant."""


class NegativeArgument(InputError):
    """A density argument is negative."""


# ---------------------------------------------------------------------------
# adatom
# ---------------------------------------------------------------------------


class AtomOffGraph(InputError):
    """An atom does not lie on the extended graph."""


class NegativeDensity(InputError):
    """A density value is negative or an atom mass is not positive."""


class EmptyBank(InputError):
    """A test-function bank has no members."""


class NoAdmissibleOffsetFound(NumericalError):
    """Every grid offset tried was degenerate."""


# ---------------------------------------------------------------------------
# elastic
# ---------------------------------------------------------------------------


class InvalidElasticity(InputError):
    """Lamé parameters or mismatch violate positivity."""


class ProfileHasCuts(InputError):
    """The profile has jumps or cuts and cannot be meshed."""


class DegenerateResolution(InputError):
    """Mesh resolution or substrate depth is too small."""


class SizeMismatch(InputError):
    """A field does not match the mesh it is evaluated on."""


class NoDirichletNodes(InputError):
    """The boundary condition fixes no node."""


class SolverDivergence(NumericalError):
    """Conjugate gradients did not reach the requested residual."""


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------


class NonRegularProfile(InputError):
    """A regular configuration was built from a profile with jumps, cuts or atoms."""


class MissingSurfaceDensity(InputError):
    """A surface term was requested without a surface density."""


# ---------------------------------------------------------------------------
# recovery
# ---------------------------------------------------------------------------


class TargetMismatch(InputError):
    """Target area or mass does not match the declared constraint."""


class NegativeEpsilonK(NumericalError):
    """The area-restoring shift of the finite-cut reduction came out negative."""


class StripsOverlap(NumericalError):
    """Cut strips overlap for the requested index."""


class CellMismatch(NumericalError):
    """Target mass in a grid cell has nowhere to go on the approximating graph."""


class BracketNotFound(NumericalError):
    """The wriggle frequency scan found no sign change."""


class ConstraintRepairFailed(NumericalError):
    """An area or length ratio fell outside (0, 1]."""


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------


class BoxTooSmall(InputError):
    """The evaluation box does not contain both graphs."""


class DomainMismatch(InputError):
    """Two profiles live on different domains."""


class EmptySequence(InputError):
    """A sequence to verify has no members."""
