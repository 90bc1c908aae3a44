# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""SVG plots of envelopes, profiles and convergence histories.

Figures are rendered with the Agg backend and a fixed SVG hash salt so repeated runs write
identical files. A description passed to a plot function is stored as the `dc:description`
of the SVG metadata.
"""

import matplotlib


matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from microsoft.epirelax.envelope import EnvelopeTable  # noqa: E402
from microsoft.epirelax.models import ConvergenceReport  # noqa: E402
from microsoft.epirelax.profile import Profile  # noqa: E402
from pathlib import Path  # noqa: E402
from typing import Optional, Sequence, Tuple  # noqa: E402


SVG_HASH_SALT = 'epirelax'


def _save(fig, path: Path, description: Optional[str]) -> None:
    metadata = {'Date': None}
    if description:
        metadata['Description'] = description
    with plt.rc_context({'svg.hashsalt': SVG_HASH_SALT, 'svg.fonttype': 'none'}):
        fig.savefig(path, format='svg', metadata=metadata)
    plt.close(fig)


def plot_envelope(
    env: EnvelopeTable, s: np.ndarray, path: Path, description: Optional[str] = None
) -> None:
    """Plot psi, its convex envelope, psi~ and psi_c on the sample points s."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(s, env.density(s), label='psi')
    ax.plot(s, env.convex(s), label='convex envelope', linestyle='--')
    ax.plot(s, env(s), label='psi~')
    ax.plot(s, env.psi_c(s), label='psi_c', linestyle=':')
    if np.isfinite(env.s0):
        ax.axvline(env.s0, color='grey', linewidth=0.8)
    ax.set_xlabel('s')
    ax.legend()
    _save(fig, path, description)


def plot_profiles(
    profiles: Sequence[Tuple[str, Profile]], path: Path, description: Optional[str] = None
) -> None:
    """Overlay profile outlines, vertical segments included."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, profile in profiles:
        outline = profile.outline()
        ax.plot(outline[:, 0], outline[:, 1], label=label, linewidth=0.8)
    ax.set_xlabel('x')
    ax.set_ylabel('h')
    ax.legend()
    _save(fig, path, description)


def plot_convergence(
    report: ConvergenceReport, path: Path, description: Optional[str] = None
) -> None:
    """Log-log plot of the relative energy gap and the Hausdorff distance against k."""
    ks = np.array([row.k for row in report.rows], dtype=float)
    scale = abs(report.rows[-1].g_limit) or 1.0
    gaps = np.array([abs(row.f_total - row.g_limit) / scale for row in report.rows])
    hausdorff = np.array([row.hausdorff_complement for row in report.rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(ks, np.maximum(gaps, 1e-16), marker='o', label='|F - G| / G')
    ax.loglog(ks, np.maximum(hausdorff, 1e-16), marker='s', label='Hausdorff distance')
    ax.set_xlabel('k')
    ax.legend()
    _save(fig, path, description)
