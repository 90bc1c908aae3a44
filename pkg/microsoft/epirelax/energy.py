# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Unrelaxed and relaxed free energies.

The unrelaxed energy of a regular configuration (h, v, u) is

    F = int_Omega W(E(v) - E0) + int_Gamma psi(u) dH^1,

and the relaxed energy of a general configuration (h, v, mu) is

    G = int_Omega W(E(v) - E0) + int_{Gamma~} psi~(u) dH^1 + int_{Gamma_c} psi_c(u) dH^1
        + theta mu_s(Gamma).

Surface terms are exact for piecewise-constant densities on polylines.
"""

import logging
import math
from dataclasses import dataclass
from microsoft.epirelax.adatom import AdatomMeasure, arclength_at_x, locate_atom
from microsoft.epirelax.elastic import DisplacementField, ElasticityTensor, FilmMesh, elastic_energy
from microsoft.epirelax.envelope import EnvelopeTable, SurfaceDensity, subadditive_convex_envelope
from microsoft.epirelax.errors import MissingSurfaceDensity, NonRegularProfile
from microsoft.epirelax.models import EnergyBreakdown, SegmentTag
from microsoft.epirelax.profile import ExtendedGraph, Profile, check_window, decompose
from typing import Dict, Iterator, List, Optional, Tuple


logger = logging.getLogger(__name__)

Window = Optional[Tuple[float, float]]


@dataclass(frozen=True, eq=False)
class RegularConfiguration:
    """A Lipschitz profile with an atom-free density and an optional displacement.

    Attributes:
        profile: Profile without jumps or cuts.
        measure: Density on the graph of the profile, without atoms.
        mesh: Mesh the displacement lives on.
        displacement: Displacement field for the bulk term.
    """

    profile: Profile
    measure: AdatomMeasure
    mesh: Optional[FilmMesh] = None
    displacement: Optional[DisplacementField] = None

    def __post_init__(self):
        """Reject profiles with jumps or cuts and measures with atoms."""
        if not self.profile.is_lipschitz:
            raise NonRegularProfile('a regular configuration needs a profile without jumps or cuts')
        if self.measure.atoms:
            raise NonRegularProfile('a regular configuration carries no atoms')
        if any(s.is_vertical for s in self.measure.graph.segments):
            raise NonRegularProfile('the measure lives on a graph with vertical segments')

    @property
    def graph(self) -> ExtendedGraph:
        """The graph carrying the density."""
        return self.measure.graph


def _weighted_lengths(mu: AdatomMeasure, window: Window) -> Iterator[Tuple[SegmentTag, float, float]]:
    """Yield (tag, density, length) for every density run, clipped to the window."""
    profile = mu.graph.profile
    bounds = check_window(profile, window) if window is not None else None
    for segment in mu.graph.segments:
        runs = mu.runs(segment.tag, segment.index)
        if bounds is None:
            for run in runs:
                yield segment.tag, run.value, run.stop - run.start
            continue
        x0, x1 = bounds
        if segment.is_vertical:
            if x0 <= segment.points[0, 0] < x1:
                for run in runs:
                    yield segment.tag, run.value, run.stop - run.start
            continue
        t0, t1 = (float(t) for t in arclength_at_x(segment, [x0, x1]))
        for run in runs:
            overlap = min(run.stop, t1) - max(run.start, t0)
            if overlap > 0:
                yield segment.tag, run.value, overlap


def surface_energy_unrelaxed(
    cfg: RegularConfiguration, psi: SurfaceDensity, window: Window = None
) -> float:
    """int_Gamma psi(u) dH^1 for a regular configuration.

    Args:
        cfg: The regular configuration.
        psi: Surface density.
        window: Optional x-interval to restrict the integral to.

    Returns:
        The surface energy.
    """
    terms = [float(psi(u)) * length for _, u, length in _weighted_lengths(cfg.measure, window)]
    return math.fsum(terms)


def surface_energy_relaxed(
    g: ExtendedGraph, mu: AdatomMeasure, env: EnvelopeTable, window: Window = None
) -> EnergyBreakdown:
    """Relaxed surface energy, split by graph part.

    Arcs and jumps integrate psi~(u), cuts integrate psi_c(u) and atoms contribute
    theta times their mass.

    Args:
        g: The extended graph.
        mu: Measure built on g.
        env: Envelope of the surface density.
        window: Optional x-interval; atoms count when x0 <= x < x1, or x0 <= x <= x1
            when the window ends at the right end of the domain.

    Returns:
        A breakdown with bulk zero and not evaluated.

    Raises:
        AtomOffGraph: An atom does not lie on g.
    """
    terms: Dict[SegmentTag, List[float]] = {tag: [] for tag in SegmentTag}
    for tag, u, length in _weighted_lengths(mu, window):
        density = env.psi_c(u) if tag is SegmentTag.CUT else env(u)
        terms[tag].append(float(density) * length)
    atoms = [locate_atom(g, atom).atom for atom in mu.atoms]
    if window is not None:
        x0, x1 = check_window(g.profile, window)
        closed = x1 >= g.profile.b
        atoms = [a for a in atoms if x0 <= a.x < x1 or (closed and a.x == x1)]
    singular = env.theta * math.fsum(a.mass for a in atoms)
    return EnergyBreakdown.from_parts(
        surface_regular=math.fsum(terms[SegmentTag.REGULAR]),
        surface_jump=math.fsum(terms[SegmentTag.JUMP]),
        surface_cut=math.fsum(terms[SegmentTag.CUT]),
        singular_part=singular,
    )


def _bulk(
    mesh: Optional[FilmMesh],
    displacement: Optional[DisplacementField],
    C: Optional[ElasticityTensor],
    window: Window,
) -> Tuple[float, bool]:
    if C is None or mesh is None or displacement is None or window is not None:
        return 0.0, False
    return elastic_energy(mesh, displacement, C), True


def total_energy_F(
    cfg: RegularConfiguration,
    psi: Optional[SurfaceDensity],
    C: Optional[ElasticityTensor] = None,
    window: Window = None,
) -> EnergyBreakdown:
    """Unrelaxed energy of a regular configuration.

    The bulk term is evaluated when C is given and the configuration carries a mesh and
    a displacement, and only over the whole domain.

    Raises:
        MissingSurfaceDensity: psi is None.
    """
    if psi is None:
        raise MissingSurfaceDensity('the unrelaxed energy needs a surface density')
    bulk, evaluated = _bulk(cfg.mesh, cfg.displacement, C, window)
    return EnergyBreakdown.from_parts(
        bulk=bulk,
        surface_regular=surface_energy_unrelaxed(cfg, psi, window),
        bulk_evaluated=evaluated,
    )


def total_energy_G(
    p: Profile,
    mu: AdatomMeasure,
    psi: Optional[SurfaceDensity] = None,
    C: Optional[ElasticityTensor] = None,
    mesh: Optional[FilmMesh] = None,
    displacement: Optional[DisplacementField] = None,
    envelope: Optional[EnvelopeTable] = None,
    window: Window = None,
) -> EnergyBreakdown:
    """Relaxed energy of a profile with an adatom measure.

    The bulk term is evaluated only for Lipschitz profiles with a mesh and a displacement;
    otherwise the breakdown reports it as not evaluated.

    Args:
        p: The profile.
        mu: Measure on the extended graph of p.
        psi: Surface density; its envelope is computed unless given.
        C: Elasticity tensor.
        mesh: Mesh of the film.
        displacement: Displacement on the mesh.
        envelope: Precomputed envelope of psi.
        window: Optional x-interval for the surface terms.

    Raises:
        MissingSurfaceDensity: Neither psi nor an envelope is given.
    """
    if envelope is None:
        if psi is None:
            raise MissingSurfaceDensity('the relaxed energy needs a surface density')
        envelope = subadditive_convex_envelope(psi)
    g = mu.graph if mu.graph.profile is p else decompose(p)
    surface = surface_energy_relaxed(g, mu, envelope, window)
    if p.is_lipschitz:
        bulk, evaluated = _bulk(mesh, displacement, C, window)
    else:
        bulk, evaluated = 0.0, False
        if displacement is not None:
            logger.info('bulk term of G not evaluated: profile has jumps or cuts')
    return EnergyBreakdown.from_parts(
        bulk=bulk,
        surface_regular=surface.surface_regular,
        surface_jump=surface.surface_jump,
        surface_cut=surface.surface_cut,
        singular_part=surface.singular_part,
        bulk_evaluated=evaluated,
    )
