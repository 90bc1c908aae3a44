# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Tests for the energy module of epirelax."""

import math
import numpy as np
import pytest
from microsoft.epirelax.adatom import Atom, uniform_measure
from microsoft.epirelax.elastic import DisplacementField, ElasticityTensor, mesh_film
from microsoft.epirelax.energy import (
    RegularConfiguration,
    surface_energy_relaxed,
    surface_energy_unrelaxed,
    total_energy_F,
    total_energy_G,
)
from microsoft.epirelax.errors import AtomOffGraph, MissingSurfaceDensity, NonRegularProfile
from microsoft.epirelax.models import SegmentTag
from microsoft.epirelax.profile import decompose, polyline_profile


def regular(profile, u: float) -> RegularConfiguration:
    """A regular configuration with constant density u."""
    return RegularConfiguration(profile, uniform_measure(decompose(profile), {SegmentTag.REGULAR: u}))


class TestUnrelaxed:
    """Tests for the unrelaxed energy."""

    def test_constant_density(self, flat_profile, unit_psi):
        """Verify psi = 1 on a flat graph of length 1."""
        assert surface_energy_unrelaxed(regular(flat_profile, 3.0), unit_psi) == 1.0

    def test_sawtooth(self, quadratic_psi):
        """Verify psi(2) times the sawtooth length sqrt(2)."""
        saw = polyline_profile([0.0, 0.25, 0.5, 0.75, 1.0], [0.0, 0.25, 0.0, 0.25, 0.0])
        assert surface_energy_unrelaxed(regular(saw, 2.0), quadratic_psi) == pytest.approx(5.0 * math.sqrt(2.0))

    def test_bulk_term(self, flat_profile, unit_psi):
        """Verify that a zero field without mismatch adds nothing."""
        m = mesh_film(flat_profile, 1.0, 2, 2)
        cfg = RegularConfiguration(
            flat_profile,
            uniform_measure(decompose(flat_profile), {SegmentTag.REGULAR: 0.0}),
            mesh=m,
            displacement=DisplacementField(values=np.zeros_like(m.nodes)),
        )
        F = total_energy_F(cfg, unit_psi, ElasticityTensor())
        assert F.bulk_evaluated
        assert F.total == 1.0
        assert F.singular_part == 0.0

    def test_missing_surface_density(self, flat_profile):
        """Verify that F without a surface density is an error."""
        with pytest.raises(MissingSurfaceDensity):
            total_energy_F(regular(flat_profile, 1.0), None)

    def test_non_regular_profile(self, jump_profile):
        """Verify that regular configurations reject jumps."""
        with pytest.raises(NonRegularProfile):
            regular(jump_profile, 1.0)

    def test_atoms_are_not_regular(self, flat_profile):
        """Verify that regular configurations reject atoms."""
        mu = uniform_measure(decompose(flat_profile), {SegmentTag.REGULAR: 1.0}, [Atom(0.5, 1.0, 1.0)])
        with pytest.raises(NonRegularProfile):
            RegularConfiguration(flat_profile, mu)


class TestRelaxed:
    """Tests for the relaxed energy."""

    def test_needle_counts_cut_twice(self, needle_profile, unit_envelope):
        """Verify H^1 of the graph plus twice the cut length for psi = 1."""
        g = decompose(needle_profile)
        breakdown = surface_energy_relaxed(g, uniform_measure(g, {}), unit_envelope)
        assert breakdown.surface_regular == pytest.approx(1.0, abs=1e-12)
        assert breakdown.surface_cut == pytest.approx(2.0, abs=1e-12)
        assert breakdown.total == pytest.approx(3.0, abs=1e-12)

    def test_atoms_cost_theta(self, flat_profile, quadratic_envelope):
        """Verify that atoms of total mass 3 add theta * 3 = 6."""
        g = decompose(flat_profile)
        mu = uniform_measure(g, {}, [Atom(0.25, 1.0, 1.0), Atom(0.75, 1.0, 2.0)])
        breakdown = surface_energy_relaxed(g, mu, quadratic_envelope)
        assert breakdown.singular_part == pytest.approx(6.0, abs=1e-6)
        assert breakdown.total == pytest.approx(7.0, abs=1e-6)

    def test_atom_off_graph(self, flat_profile, jump_profile, quadratic_envelope):
        """Verify that atoms are located on the graph passed in."""
        mu = uniform_measure(decompose(jump_profile), {}, [Atom(0.5, 1.5, 1.0)])
        with pytest.raises(AtomOffGraph):
            surface_energy_relaxed(decompose(flat_profile), mu, quadratic_envelope)

    def test_equal_below_threshold(self, flat_profile, quadratic_psi, quadratic_envelope):
        """Verify G = F when the density stays below s0."""
        cfg = regular(flat_profile, 0.5)
        F = total_energy_F(cfg, quadratic_psi)
        G = total_energy_G(flat_profile, cfg.measure, envelope=quadratic_envelope)
        assert G.total == pytest.approx(F.total, abs=1e-12)
        assert F.total == 1.25

    def test_relaxed_below_unrelaxed(self, quadratic_psi, quadratic_envelope):
        """Verify G <= F on regular configurations above the threshold."""
        tent = polyline_profile([0.0, 0.4, 1.0], [0.1, 0.7, 0.2])
        for u in (0.0, 0.5, 1.0, 2.0, 5.0):
            cfg = regular(tent, u)
            F = total_energy_F(cfg, quadratic_psi)
            G = total_energy_G(tent, cfg.measure, envelope=quadratic_envelope)
            assert G.total <= F.total + 1e-12

    def test_windows_are_additive(self, needle_profile, unit_psi):
        """Verify that adjacent windows add up to the whole-domain energy."""
        g = decompose(needle_profile)
        mu = uniform_measure(g, {SegmentTag.REGULAR: 0.5, SegmentTag.CUT: 1.0})
        whole = total_energy_G(needle_profile, mu, unit_psi)
        left = total_energy_G(needle_profile, mu, unit_psi, window=(0.0, 0.5))
        right = total_energy_G(needle_profile, mu, unit_psi, window=(0.5, 1.0))
        assert left.total + right.total == pytest.approx(whole.total, abs=1e-12)
        assert left.surface_cut == 0.0

    def test_atom_at_right_end_counts_in_last_window(self, flat_profile, quadratic_psi):
        """Verify that an atom at x = b is charged to the window ending at b and to no other."""
        mu = uniform_measure(decompose(flat_profile), {}, [Atom(1.0, 1.0, 0.4), Atom(0.5, 1.0, 0.2)])
        whole = total_energy_G(flat_profile, mu, quadratic_psi)
        left = total_energy_G(flat_profile, mu, quadratic_psi, window=(0.0, 0.5))
        right = total_energy_G(flat_profile, mu, quadratic_psi, window=(0.5, 1.0))
        assert left.singular_part == 0.0
        assert whole.singular_part == pytest.approx(1.2)
        assert right.singular_part == pytest.approx(whole.singular_part)
        assert left.total + right.total == pytest.approx(whole.total, abs=1e-12)

    def test_bulk_not_evaluated_with_cuts(self, needle_profile, flat_profile, unit_psi):
        """Verify that the bulk term is skipped on profiles with cuts."""
        m = mesh_film(flat_profile, 1.0, 2, 2)
        g = decompose(needle_profile)
        G = total_energy_G(
            needle_profile,
            uniform_measure(g, {}),
            unit_psi,
            C=ElasticityTensor(t=0.1),
            mesh=m,
            displacement=DisplacementField(values=np.zeros_like(m.nodes)),
        )
        assert not G.bulk_evaluated
        assert G.bulk == 0.0

    def test_missing_surface_density(self, flat_profile):
        """Verify that G needs a density or an envelope."""
        mu = uniform_measure(decompose(flat_profile), {})
        with pytest.raises(MissingSurfaceDensity):
            total_energy_G(flat_profile, mu)
