# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Test fixtures for the epirelax tests."""

import pytest
import tempfile
import textwrap
from microsoft.epirelax.envelope import SurfaceDensity, subadditive_convex_envelope
from microsoft.epirelax.models import NodeSpec
from microsoft.epirelax.profile import Profile, build_profile, polyline_profile
from pathlib import Path
from typing import Callable, Generator


@pytest.fixture
def temp_workspace_dir() -> Generator[str, None, None]:
    """Create a temporary directory for configuration files and outputs."""
    with tempfile.TemporaryDirectory() as temp_dir:
        yield temp_dir


@pytest.fixture
def quadratic_psi() -> SurfaceDensity:
    """Return psi(s) = 1 + s^2, whose envelope has s0 = 1 and theta = 2."""
    return SurfaceDensity.quadratic(1.0, 1.0)


@pytest.fixture
def quadratic_envelope(quadratic_psi):
    """Return the envelope of 1 + s^2."""
    return subadditive_convex_envelope(quadratic_psi)


@pytest.fixture
def unit_psi() -> SurfaceDensity:
    """Return the constant density psi = 1."""
    return SurfaceDensity.constant(1.0)


@pytest.fixture
def unit_envelope(unit_psi):
    """Return the envelope of the constant density 1."""
    return subadditive_convex_envelope(unit_psi)


@pytest.fixture
def flat_profile() -> Profile:
    """Return h = 1 on [0, 1]."""
    return polyline_profile([0.0, 1.0], [1.0, 1.0])


@pytest.fixture
def jump_profile() -> Profile:
    """Return h = 1 on [0, 1/2) and h = 2 on (1/2, 1]."""
    return build_profile((0.0, 1.0), [[[0.0, 1.0], [0.5, 1.0]], [[0.5, 2.0], [1.0, 2.0]]])


@pytest.fixture
def needle_profile() -> Profile:
    """Return h = 1 on [0, 1] with a cut at x = 1/2 down to 0."""
    return build_profile(
        (0.0, 1.0),
        [[[0.0, 1.0], [0.5, 1.0]], [[0.5, 1.0], [1.0, 1.0]]],
        [NodeSpec(x=0.5, value=0.0)],
    )


@pytest.fixture
def write_experiment(temp_workspace_dir) -> Callable[..., Path]:
    """Return a factory writing a profile spec and an experiment config into the workspace."""

    def factory(body: str, profile: str = '') -> Path:
        root = Path(temp_workspace_dir)
        (root / 'profile.toml').write_text(
            textwrap.dedent(profile)
            or textwrap.dedent(
                """\
                domain = [0.0, 1.0]

                [[arc]]
                x = [0.0, 1.0]
                y = [1.0, 1.0]
                """
            ),
            encoding='utf-8',
        )
        path = root / 'experiment.toml'
        path.write_text(textwrap.dedent(body), encoding='utf-8')
        return path

    return factory
