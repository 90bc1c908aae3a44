# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Tests for the envelope module of epirelax."""

import logging
import math
import numpy as np
import pytest
from microsoft.epirelax.envelope import (
    SurfaceDensity,
    convex_envelope,
    psi_c,
    recession_theta,
    subadditive_convex_envelope,
    surface_density_from_config,
)
from microsoft.epirelax.errors import DegenerateGrid, NegativeArgument, NonPositivePsi
from microsoft.epirelax.models import SurfaceDensityConfig


def brute_force_split(env, s: float, n: int = 2001) -> float:
    """min over r + t = s of psi~(r) + psi~(t) on a uniform grid of splits."""
    r = np.linspace(0.0, s, n)
    return float(np.min(env(r) + env(s - r)))


def chord_hull(s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Lower convex hull at every sample by an O(n^2) scan of chords."""
    out = v.copy()
    for i in range(s.size):
        for j in range(i + 1):
            for k in range(i, s.size):
                if k == j:
                    continue
                lam = (s[i] - s[j]) / (s[k] - s[j])
                out[i] = min(out[i], (1 - lam) * v[j] + lam * v[k])
    return out


def random_convex_table(rng: np.random.Generator) -> SurfaceDensity:
    """A positive convex table whose tail slope keeps s0 finite."""
    s = np.linspace(0.0, 8.0, 17)
    slopes = np.sort(rng.uniform(-0.1, 3.0, s.size - 1))
    values = 1.0 + rng.uniform(0.0, 1.0) + np.concatenate([[0.0], np.cumsum(slopes * np.diff(s))])
    tail = max(slopes[-1], values[-1] / s[-1]) + rng.uniform(0.1, 1.0)
    return SurfaceDensity.table(s, values, tail)


class TestSurfaceDensity:
    """Tests for surface density constructors."""

    def test_quadratic_values(self, quadratic_psi):
        """Verify psi(s) = 1 + s^2."""
        np.testing.assert_allclose(quadratic_psi([0.0, 1.0, 3.0]), [1.0, 2.0, 10.0])

    def test_constant_must_be_positive(self):
        """Verify that a zero constant density is rejected."""
        with pytest.raises(NonPositivePsi):
            SurfaceDensity.constant(0.0)

    def test_table_must_start_at_zero(self):
        """Verify that a table must start at s = 0."""
        with pytest.raises(DegenerateGrid):
            SurfaceDensity.table([0.5, 1.0], [1.0, 2.0], 1.0)

    def test_table_must_be_positive(self):
        """Verify that a table with a zero value is rejected."""
        with pytest.raises(NonPositivePsi):
            SurfaceDensity.table([0.0, 1.0], [1.0, 0.0], 1.0)

    def test_from_config(self):
        """Verify that a config block builds the closed form."""
        psi = surface_density_from_config(SurfaceDensityConfig(kind='quadratic', alpha=1, beta=1))
        assert psi.is_closed_form
        assert float(psi(2.0)) == 5.0


class TestQuadraticEnvelope:
    """Tests for the envelope of 1 + s^2."""

    def test_threshold_and_recession(self, quadratic_envelope):
        """Verify s0 = 1 and theta = 2."""
        assert quadratic_envelope.s0 == pytest.approx(1.0, abs=1e-6)
        assert quadratic_envelope.theta == pytest.approx(2.0, abs=1e-6)
        assert recession_theta(quadratic_envelope) == quadratic_envelope.theta

    def test_envelope_values(self, quadratic_envelope):
        """Verify psi~(2) = 4 and psi~ = psi below s0."""
        assert float(quadratic_envelope(2.0)) == pytest.approx(4.0, abs=1e-6)
        assert float(quadratic_envelope(0.5)) == pytest.approx(1.25, abs=1e-12)

    def test_cut_density(self, quadratic_envelope):
        """Verify psi_c(0) = 2, psi_c(2) = 4 and psi_c(6) = 12."""
        values = psi_c(quadratic_envelope, [0.0, 2.0, 6.0])
        np.testing.assert_allclose(values, [2.0, 4.0, 12.0], atol=1e-6)

    def test_cut_density_matches_split_oracle(self, quadratic_envelope):
        """Verify psi_c against a brute-force minimisation over splits."""
        for s in (0.0, 0.7, 2.0, 6.0):
            expected = brute_force_split(quadratic_envelope, s)
            assert float(quadratic_envelope.psi_c(s)) == pytest.approx(expected, abs=1e-6)

    def test_negative_argument(self, quadratic_envelope):
        """Verify that psi~ is undefined for negative densities."""
        with pytest.raises(NegativeArgument):
            quadratic_envelope(-1.0)
        with pytest.raises(NegativeArgument):
            psi_c(quadratic_envelope, -0.5)


class TestDegenerateEnvelopes:
    """Tests for envelopes without a finite threshold."""

    def test_constant_density(self, unit_psi):
        """Verify that a constant density has theta = 0 and no threshold."""
        env = subadditive_convex_envelope(unit_psi)
        assert env.theta == 0.0
        assert math.isinf(env.s0)
        assert float(env.psi_c(0.0)) == 2.0

    def test_nonlinear_tail_is_flagged(self, caplog):
        """Verify that a tail slope below every ratio raises the nonlinear-tail flag."""
        psi = SurfaceDensity.table([0.0, 1.0, 2.0], [1.0, 1.1, 1.3], 0.25)
        with caplog.at_level(logging.WARNING, logger='microsoft.epirelax.envelope'):
            env = subadditive_convex_envelope(psi)
        assert math.isinf(env.s0)
        assert env.theta == 0.25
        assert env.nonlinear_tail
        assert 'nonlinear tail' in env.provenance
        assert 'no finite threshold' in caplog.text

    def test_degenerate_grid(self, quadratic_psi):
        """Verify that a one-point grid is rejected."""
        with pytest.raises(DegenerateGrid):
            convex_envelope(quadratic_psi, s_max=1.0, points=1)


class TestConvexHull:
    """Tests for the lower convex hull."""

    def test_hull_matches_chord_oracle(self):
        """Verify the hull of a double-well table against all chords."""
        psi = SurfaceDensity.table([0.0, 1.0, 2.0, 3.0, 4.0], [2.0, 1.0, 2.0, 1.5, 3.0], 5.0)
        hull = convex_envelope(psi, s_max=4.0, points=33)
        s = np.linspace(0.0, 4.0, 33)
        np.testing.assert_allclose(hull(s), chord_hull(s, psi(s)), atol=1e-12)

    def test_hull_lies_below_psi(self):
        """Verify that the hull never exceeds the density."""
        psi = SurfaceDensity.table([0.0, 1.0, 2.0, 3.0, 4.0], [2.0, 1.0, 2.0, 1.5, 3.0], 5.0)
        env = subadditive_convex_envelope(psi, s_max=4.0, points=33)
        s = np.linspace(0.0, 4.0, 401)
        assert np.all(env.convex(s) <= psi(s) + 1e-12)
        assert np.all(env(s) <= env.convex(s) + 1e-12)


class TestEnvelopeLaws:
    """Convexity and sub-additivity on random convex tables."""

    def test_convex_and_subadditive(self):
        """Verify the envelope laws on randomized tables."""
        rng = np.random.default_rng(20240611)
        for _ in range(100):
            env = subadditive_convex_envelope(random_convex_table(rng))
            a = rng.uniform(0.0, 20.0, 1000)
            b = rng.uniform(0.0, 20.0, 1000)
            lam = rng.uniform(0.0, 1.0, 1000)
            assert np.all(env(a + b) <= env(a) + env(b) + 1e-9)
            mix = lam * a + (1 - lam) * b
            assert np.all(env(mix) <= lam * env(a) + (1 - lam) * env(b) + 1e-9)

    def test_cut_density_recession(self):
        """Verify that psi_c(s) / s tends to theta."""
        rng = np.random.default_rng(7)
        for _ in range(100):
            env = subadditive_convex_envelope(random_convex_table(rng))
            assert abs(float(env.psi_c(1e3)) / 1e3 - env.theta) <= 1e-2 * env.theta + 1e-6
