# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Configuration and report models for epirelax."""

import math
from enum import Enum
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Literal, Optional, Tuple


class SegmentTag(str, Enum):
    """Parts of an extended graph.

    Attributes:
        REGULAR: Graph arcs of the profile.
        JUMP: Vertical segments between the one-sided limits at a jump.
        CUT: Vertical segments between the point value and the smaller limit.
    """

    REGULAR = 'regular'
    JUMP = 'jump'
    CUT = 'cut'


class SurfaceDensityKind(str, Enum):
    """Closed forms and tabulated surface densities."""

    CONSTANT = 'constant'
    QUADRATIC = 'quadratic'
    TABLE = 'table'


class BoundaryCondition(str, Enum):
    """Dirichlet sets for the elastic equilibrium.

    Attributes:
        CLAMPED_BOTTOM: Nodes on y = -d are fixed; lateral sides are traction free.
        CLAMPED_BOTTOM_AND_SIDES: Nodes on y = -d, x = a and x = b are fixed.
    """

    CLAMPED_BOTTOM = 'clamped-bottom'
    CLAMPED_BOTTOM_AND_SIDES = 'clamped-bottom-and-sides'


class StageTag(str, Enum):
    """Stages of the recovery pipeline, in execution order."""

    GRID_CONSTANT = 'grid-constant'
    FINITE_CUTS = 'finite-cuts'
    LIPSCHITZ_APPROX = 'lipschitz-approx'
    WRIGGLED = 'wriggled'
    CONSTRAINT_FIXED = 'constraint-fixed'
    PHASE_MIXED = 'phase-mixed'


# ---------------------------------------------------------------------------
# Profile spec files
# ---------------------------------------------------------------------------


class ArcSpec(BaseModel):
    """One polyline arc of a profile spec.

    Attributes:
        x: Strictly increasing abscissae; the first and last are breakpoints.
        y: Heights at the abscissae.
    """

    model_config = ConfigDict(extra='forbid')

    x: List[float] = Field(..., min_length=2, description='Arc abscissae.')
    y: List[float] = Field(..., min_length=2, description='Arc heights.')

    @model_validator(mode='after')
    def validate_lengths(self) -> 'ArcSpec':
        """Validate that x and y have the same number of samples."""
        if len(self.x) != len(self.y):
            raise ValueError(f'arc has {len(self.x)} abscissae but {len(self.y)} heights')
        return self


class NodeSpec(BaseModel):
    """Data at an interior breakpoint.

    Omitted limits are read from the adjacent arcs; an omitted value defaults to the
    smaller limit, which is the lower semi-continuous representative.
    """

    model_config = ConfigDict(extra='forbid')

    x: float
    left: Optional[float] = None
    right: Optional[float] = None
    value: Optional[float] = None


class ProfileSpec(BaseModel):
    """A profile spec file: `domain = [a, b]`, `[[arc]]` tables and `[[node]]` tables."""

    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    domain: Tuple[float, float]
    arcs: List[ArcSpec] = Field(..., alias='arc', min_length=1)
    nodes: List[NodeSpec] = Field(default_factory=list, alias='node')


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------


class SurfaceDensityConfig(BaseModel):
    """Surface density block.

    Attributes:
        kind: Closed form or table.
        c: Value of the constant density.
        alpha: Constant term of the quadratic density alpha + beta s^2.
        beta: Quadratic coefficient.
        table: CSV path with header `s,value`; first row at s = 0.
        tail_slope: Slope used beyond the last table row.
        s_max: Right end of the uniform sampling grid.
        points: Number of grid points.
    """

    model_config = ConfigDict(extra='forbid')

    kind: SurfaceDensityKind
    c: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    table: Optional[str] = None
    tail_slope: Optional[float] = None
    s_max: float = Field(default=64.0, gt=0, description='Right end of the sampling grid.')
    points: int = Field(default=4097, ge=2, description='Number of sampling points.')

    @model_validator(mode='after')
    def validate_parameters(self) -> 'SurfaceDensityConfig':
        """Validate that the parameters required by the kind are present."""
        required = {
            SurfaceDensityKind.CONSTANT: ('c',),
            SurfaceDensityKind.QUADRATIC: ('alpha', 'beta'),
            SurfaceDensityKind.TABLE: ('table', 'tail_slope'),
        }[self.kind]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f'{self.kind.value} surface density requires {", ".join(missing)}')
        return self


class ElasticityConfig(BaseModel):
    """Elasticity block: isotropic tensor, mismatch, substrate depth and mesh resolution."""

    model_config = ConfigDict(extra='forbid')

    lam: float = Field(default=1.0, ge=0, description='First Lamé parameter.')
    mu: float = Field(default=1.0, gt=0, description='Shear modulus.')
    t: float = Field(default=0.0, ge=0, description='Mismatch strain magnitude.')
    depth: Optional[float] = Field(
        default=None, gt=0, description='Substrate depth; defaults to b - a.'
    )
    nx: int = Field(default=16, ge=2, description='Mesh columns.')
    ny: int = Field(default=4, ge=2, description='Mesh layers in the film and in the substrate.')
    bc: BoundaryCondition = BoundaryCondition.CLAMPED_BOTTOM


class DensitySpec(BaseModel):
    """Constant density on the segments selected by tag and optional index."""

    model_config = ConfigDict(extra='forbid')

    tag: SegmentTag
    index: Optional[int] = Field(default=None, ge=0)
    value: float = Field(..., ge=0)


class AtomSpec(BaseModel):
    """A point mass on the extended graph."""

    model_config = ConfigDict(extra='forbid')

    x: float
    y: float
    mass: float = Field(..., gt=0)


class MeasureConfig(BaseModel):
    """Measure block: `[[measure.density]]` and `[[measure.atom]]` tables."""

    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    densities: List[DensitySpec] = Field(default_factory=list, alias='density')
    atoms: List[AtomSpec] = Field(default_factory=list, alias='atom')


class RecoveryConfig(BaseModel):
    """Recovery block: indices, grid cell and verdict tolerances."""

    model_config = ConfigDict(extra='forbid')

    ks: List[int] = Field(..., description='Sequence indices, processed in increasing order.')
    cell: float = Field(default=0.3, gt=0, description='Grid cell size.')
    max_offset_tries: int = Field(default=1000, ge=0)
    max_refinements: int = Field(
        default=3, ge=0, description='Index doublings tried after a cell mismatch.'
    )
    hausdorff_resolution: int = Field(default=256, ge=64)
    limsup_tolerance: float = Field(default=0.05, gt=0)
    liminf_tolerance: float = Field(default=1e-6, ge=0)
    constraint_tolerance: float = Field(default=1e-12, gt=0)
    evaluate_bulk: bool = False
    density_scale: float = Field(
        default=1.0, gt=0, description='Diagnostic multiplier applied to emitted densities.'
    )

    @field_validator('ks')
    @classmethod
    def validate_ks(cls, v: List[int]) -> List[int]:
        """Validate that ks is non-empty and positive, and sort it."""
        if not v:
            raise ValueError('ks must list at least one index')
        if any(k < 1 for k in v):
            raise ValueError('ks must be positive integers')
        return sorted(set(v))


class ExperimentConfig(BaseModel):
    """Top-level experiment configuration (TOML)."""

    model_config = ConfigDict(extra='forbid')

    profile: str = Field(..., description='Path of the profile spec file.')
    output: Optional[str] = Field(default=None, description='Output directory.')
    surface_density: SurfaceDensityConfig
    elasticity: Optional[ElasticityConfig] = None
    measure: MeasureConfig = Field(default_factory=MeasureConfig)
    recovery: Optional[RecoveryConfig] = None


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


class EnergyBreakdown(BaseModel):
    """Contributions to an energy.

    Attributes:
        bulk: Elastic bulk energy (zero when not evaluated).
        surface_regular: Surface energy on graph arcs.
        surface_jump: Surface energy on jump segments.
        surface_cut: Surface energy on cut segments.
        singular_part: Recession coefficient times the atomic mass.
        total: Sum of the parts.
        bulk_evaluated: Whether the bulk term was computed.
    """

    bulk: float = 0.0
    surface_regular: float = 0.0
    surface_jump: float = 0.0
    surface_cut: float = 0.0
    singular_part: float = 0.0
    total: float = 0.0
    bulk_evaluated: bool = False

    @classmethod
    def from_parts(
        cls,
        bulk: float = 0.0,
        surface_regular: float = 0.0,
        surface_jump: float = 0.0,
        surface_cut: float = 0.0,
        singular_part: float = 0.0,
        bulk_evaluated: bool = False,
    ) -> 'EnergyBreakdown':
        """Build a breakdown whose total is the exactly rounded sum of its parts."""
        return cls(
            bulk=bulk,
            surface_regular=surface_regular,
            surface_jump=surface_jump,
            surface_cut=surface_cut,
            singular_part=singular_part,
            total=math.fsum((bulk, surface_regular, surface_jump, surface_cut, singular_part)),
            bulk_evaluated=bulk_evaluated,
        )

    @property
    def surface(self) -> float:
        """Sum of the surface and singular contributions."""
        return math.fsum(
            (self.surface_regular, self.surface_jump, self.surface_cut, self.singular_part)
        )


class StageRow(BaseModel):
    """One row of the per-stage recovery report.

    Length and energy fields serialize under their report column names (`H1_regular`,
    `F_surface`, ...) when dumped by alias.
    """

    k: int
    stage: StageTag
    area: float
    mass: float
    h1_regular: float = Field(..., serialization_alias='H1_regular')
    h1_jump: float = Field(..., serialization_alias='H1_jump')
    h1_cut: float = Field(..., serialization_alias='H1_cut')
    f_surface: Optional[float] = Field(default=None, serialization_alias='F_surface')
    f_bulk: Optional[float] = Field(default=None, serialization_alias='F_bulk')
    g_surface: Optional[float] = Field(default=None, serialization_alias='G_surface')
    hausdorff_gap: float
    weakstar_gap: Optional[float] = None


class ConvergenceRow(BaseModel):
    """Metrics of one sequence member against the limit configuration.

    `g_member` is the relaxed energy of the member itself, which never exceeds its
    unrelaxed energy `f_total`.
    """

    k: int
    hausdorff_complement: float = Field(..., ge=0)
    hausdorff_error_bound: float = Field(..., ge=0)
    l1_subgraph: float = Field(..., ge=0)
    weakstar_gap: float = Field(..., ge=0)
    f_total: float
    g_member: float
    g_limit: float
    mass_error: float = Field(..., ge=0)
    area_error: float = Field(..., ge=0)


class ConvergenceVerdict(BaseModel):
    """Pass/fail flags of a sequence verification.

    Attributes:
        limsup: Final relative energy gap within tolerance with a non-increasing trend.
        liminf: Every member has G <= F up to tolerance, and the shortfall of F below the
            limit energy is within tolerance or shrinks over the last half of the indices.
        constraints: Mass and area errors within tolerance for every member.
        topology: Hausdorff and weak-* gaps trend downwards.
        final_relative_gap: |F - G| / G at the largest index.
        energy_gap_slope: Least-squares slope of log |F - G| over log k.
    """

    limsup: bool
    liminf: bool
    constraints: bool
    topology: bool
    final_relative_gap: float
    energy_gap_slope: float

    @property
    def passed(self) -> bool:
        """Whether every flag passed."""
        return self.limsup and self.liminf and self.constraints and self.topology


class ConvergenceReport(BaseModel):
    """Rows ordered by k plus the verdict."""

    rows: List[ConvergenceRow]
    verdict: ConvergenceVerdict


class EnvelopeSummary(BaseModel):
    """Response model for envelope computations.

    Attributes:
        status: The status of the computation.
        message: A message describing the result.
        s0: Threshold s0; None when it is infinite.
        theta: Recession coefficient.
        psi_tilde_samples: Optional pairs (s, psi_tilde(s)) requested by the caller.
    """

    status: Literal['success', 'error']
    message: str
    s0: Optional[float] = None
    theta: Optional[float] = None
    psi_tilde_samples: Optional[List[Tuple[float, float]]] = None


class EnergyResponse(BaseModel):
    """Response model for energy evaluations."""

    status: Literal['success', 'error']
    message: str
    unrelaxed: Optional[EnergyBreakdown] = None
    relaxed: Optional[EnergyBreakdown] = None


class RecoveryResponse(BaseModel):
    """Response model for recovery runs."""

    status: Literal['success', 'error']
    message: str
    output_dir: Optional[str] = None
    exit_code: int = 0
    verdict: Optional[ConvergenceVerdict] = None
