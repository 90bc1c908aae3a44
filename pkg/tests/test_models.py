# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Tests for the models module of epirelax."""

import pytest
from microsoft.epirelax.models import (
    ArcSpec,
    ConvergenceVerdict,
    EnergyBreakdown,
    EnvelopeSummary,
    ExperimentConfig,
    MeasureConfig,
    ProfileSpec,
    RecoveryConfig,
    RecoveryResponse,
    SegmentTag,
    StageTag,
    SurfaceDensityConfig,
    SurfaceDensityKind,
)
from pydantic import ValidationError


class TestEnums:
    """Tests for the enum types."""

    def test_segment_tag_values(self):
        """Verify all SegmentTag values."""
        assert SegmentTag.REGULAR == 'regular'
        assert SegmentTag.JUMP == 'jump'
        assert SegmentTag.CUT == 'cut'

    def test_surface_density_kind_from_string(self):
        """Verify SurfaceDensityKind can be created from string values."""
        assert SurfaceDensityKind('constant') == SurfaceDensityKind.CONSTANT
        assert SurfaceDensityKind('quadratic') == SurfaceDensityKind.QUADRATIC
        assert SurfaceDensityKind('table') == SurfaceDensityKind.TABLE

    def test_stage_order(self):
        """Verify the stages are listed in execution order."""
        assert [tag.value for tag in StageTag] == [
            'grid-constant',
            'finite-cuts',
            'lipschitz-approx',
            'wriggled',
            'constraint-fixed',
            'phase-mixed',
        ]

    def test_invalid_kind(self):
        """Verify that an invalid string raises ValueError."""
        with pytest.raises(ValueError):
            SurfaceDensityKind('cubic')


class TestProfileSpec:
    """Tests for the profile spec models."""

    def test_aliases(self):
        """Verify that the TOML table names arc and node are accepted."""
        spec = ProfileSpec.model_validate(
            {'domain': [0, 1], 'arc': [{'x': [0, 1], 'y': [1, 1]}], 'node': []}
        )
        assert spec.domain == (0.0, 1.0)
        assert len(spec.arcs) == 1

    def test_arc_length_mismatch(self):
        """Verify that x and y must have the same length."""
        with pytest.raises(ValidationError, match='abscissae'):
            ArcSpec(x=[0.0, 0.5, 1.0], y=[1.0, 1.0])

    def test_arc_needs_two_points(self):
        """Verify that an arc needs two samples."""
        with pytest.raises(ValidationError):
            ArcSpec(x=[0.0], y=[1.0])

    def test_unknown_key(self):
        """Verify that unknown keys are rejected."""
        with pytest.raises(ValidationError):
            ProfileSpec.model_validate({'domain': [0, 1], 'arc': [{'x': [0, 1], 'y': [1, 1]}], 'nodes_': []})


class TestSurfaceDensityConfig:
    """Tests for the surface density block."""

    def test_quadratic(self):
        """Verify a complete quadratic block."""
        config = SurfaceDensityConfig(kind='quadratic', alpha=1.0, beta=1.0)
        assert config.kind is SurfaceDensityKind.QUADRATIC
        assert config.points == 4097

    @pytest.mark.parametrize(
        'fields, missing',
        [
            ({'kind': 'constant'}, 'c'),
            ({'kind': 'quadratic', 'alpha': 1.0}, 'beta'),
            ({'kind': 'table', 'table': 'psi.csv'}, 'tail_slope'),
        ],
    )
    def test_missing_parameters(self, fields, missing):
        """Verify that every kind names its missing parameters."""
        with pytest.raises(ValidationError, match=missing):
            SurfaceDensityConfig(**fields)

    def test_grid_must_have_two_points(self):
        """Verify the sampling grid bounds."""
        with pytest.raises(ValidationError):
            SurfaceDensityConfig(kind='constant', c=1.0, points=1)


class TestRecoveryConfig:
    """Tests for the recovery block."""

    def test_ks_sorted_and_unique(self):
        """Verify that indices are deduplicated and sorted."""
        assert RecoveryConfig(ks=[32, 8, 16, 8]).ks == [8, 16, 32]

    def test_empty_ks(self):
        """Verify that an empty index list is rejected."""
        with pytest.raises(ValidationError, match='at least one'):
            RecoveryConfig(ks=[])

    def test_non_positive_ks(self):
        """Verify that indices must be positive."""
        with pytest.raises(ValidationError, match='positive'):
            RecoveryConfig(ks=[0, 8])

    def test_density_scale_must_be_positive(self):
        """Verify the density scale bound."""
        with pytest.raises(ValidationError):
            RecoveryConfig(ks=[8], density_scale=0.0)


class TestExperimentConfig:
    """Tests for the top-level configuration."""

    def test_minimal(self):
        """Verify the defaults of a minimal configuration."""
        config = ExperimentConfig.model_validate(
            {'profile': 'profile.toml', 'surface_density': {'kind': 'constant', 'c': 1.0}}
        )
        assert config.elasticity is None
        assert config.recovery is None
        assert config.measure == MeasureConfig()

    def test_measure_aliases(self):
        """Verify the density and atom table names."""
        measure = MeasureConfig.model_validate(
            {'density': [{'tag': 'cut', 'value': 2.0}], 'atom': [{'x': 0.5, 'y': 1.0, 'mass': 0.5}]}
        )
        assert measure.densities[0].tag is SegmentTag.CUT
        assert measure.atoms[0].mass == 0.5

    def test_extra_keys_forbidden(self):
        """Verify that misspelt keys are reported."""
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate(
                {'profile': 'p.toml', 'surface_density': {'kind': 'constant', 'c': 1.0}, 'recovry': {}}
            )


class TestReports:
    """Tests for the report and response models."""

    def test_breakdown_total(self):
        """Verify that the total is the sum of the parts."""
        breakdown = EnergyBreakdown.from_parts(bulk=0.5, surface_regular=1.0, surface_cut=2.0, singular_part=0.25)
        assert breakdown.total == 3.75
        assert breakdown.surface == 3.25

    def test_verdict_passed(self):
        """Verify that a verdict passes only when every flag does."""
        flags = dict(limsup=True, liminf=True, constraints=True, topology=True, final_relative_gap=0.0, energy_gap_slope=0.0)
        assert ConvergenceVerdict(**flags).passed
        flags['topology'] = False
        assert not ConvergenceVerdict(**flags).passed

    def test_envelope_summary_error(self):
        """Verify an error response."""
        response = EnvelopeSummary(status='error', message='bad table')
        assert response.s0 is None
        assert response.theta is None

    def test_recovery_response_status(self):
        """Verify that the status is restricted."""
        with pytest.raises(ValidationError):
            RecoveryResponse(status='pending', message='')
