# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Distances between configurations and verification of recovery sequences.

Configurations converge when the complements of their subgraphs converge in Hausdorff
distance and their adatom measures converge weakly-*. The Hausdorff distance is computed on
a point grid over a bounding box; the L1 distance of subgraphs is exact.
"""

import logging
import math
import numpy as np
from dataclasses import dataclass
from microsoft.epirelax.adatom import AdatomMeasure, TestFunctionBank, default_bank, total_mass, weak_star_gap
from microsoft.epirelax.elastic import ElasticityTensor
from microsoft.epirelax.energy import RegularConfiguration, total_energy_F, total_energy_G
from microsoft.epirelax.envelope import EnvelopeTable, SurfaceDensity, subadditive_convex_envelope
from microsoft.epirelax.errors import BoxTooSmall, DomainMismatch, EmptySequence
from microsoft.epirelax.models import ConvergenceReport, ConvergenceRow, ConvergenceVerdict
from microsoft.epirelax.profile import Profile
from scipy.spatial import cKDTree
from typing import List, NamedTuple, Optional, Sequence, Tuple


logger = logging.getLogger(__name__)

Box = Tuple[float, float, float, float]

# Values at or below this are treated as converged when fitting trends
TREND_FLOOR = 1e-12


class HausdorffEstimate(NamedTuple):
    """Grid estimate of a Hausdorff distance with its resolution error bound."""

    value: float
    error_bound: float


def default_box(*profiles: Profile) -> Box:
    """Box over the common domain reaching a margin above every profile."""
    a = min(p.a for p in profiles)
    b = max(p.b for p in profiles)
    top = max(p.max_height for p in profiles)
    margin = 0.25 * max(top, b - a)
    return (a, b, -0.05 * margin, top + margin)


def _complement_points(p: Profile, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Grid points on or above the graph, plus points on its vertical segments."""
    heights = p.evaluate(xs)
    gx, gy = np.meshgrid(xs, ys, indexing='ij')
    inside = gy >= heights[:, None]
    points = [np.column_stack([gx[inside], gy[inside]])]
    for node in p.nodes:
        if node.upper > node.value:
            column = ys[(ys >= node.value) & (ys <= node.upper)]
            column = np.unique(np.concatenate([column, [node.value, node.upper]]))
            points.append(np.column_stack([np.full_like(column, node.x), column]))
    return np.vstack(points)


def hausdorff_complement_distance(
    pA: Profile, pB: Profile, box: Optional[Box] = None, n: int = 256
) -> HausdorffEstimate:
    """Hausdorff distance between the complements of two subgraphs inside a box.

    Args:
        pA: First profile.
        pB: Second profile.
        box: (x0, x1, y0, y1); defaults to `default_box`.
        n: Grid points per axis, at least 64.

    Returns:
        The estimate and its error bound 2 diag(box) / n.

    Raises:
        BoxTooSmall: The box misses a domain or does not reach above both graphs.
    """
    if box is None:
        box = default_box(pA, pB)
    x0, x1, y0, y1 = box
    if n < 64:
        raise BoxTooSmall(f'grid resolution must be at least 64, got {n}')
    for p in (pA, pB):
        if x0 > p.a or x1 < p.b:
            raise BoxTooSmall(f'box x-range ({x0}, {x1}) misses the domain {p.domain}')
        if y1 <= p.max_height:
            raise BoxTooSmall(f'box top {y1} does not clear the graph height {p.max_height}')
    xs = np.linspace(max(x0, max(pA.a, pB.a)), min(x1, min(pA.b, pB.b)), n)
    ys = np.linspace(y0, y1, n)
    A = _complement_points(pA, xs, ys)
    B = _complement_points(pB, xs, ys)
    bound = 2.0 * math.hypot(x1 - x0, y1 - y0) / n
    return HausdorffEstimate(max(_directed(A, B), _directed(B, A)), bound)


def _directed(A: np.ndarray, B: np.ndarray) -> float:
    """sup over A of the distance to B; points shared with B contribute zero."""
    common = {tuple(row) for row in B.tolist()}
    rest = np.array([row for row in A.tolist() if tuple(row) not in common])
    if rest.size == 0:
        return 0.0
    distances, _ = cKDTree(B).query(rest)
    return float(distances.max())


def _piecewise_values(p: Profile, xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Values at the left and right end of each interval [xs[i], xs[i+1]] from its arc."""
    mids = 0.5 * (xs[:-1] + xs[1:])
    index = np.clip(np.searchsorted(p.breakpoints, mids, side='right') - 1, 0, len(p.arcs) - 1)
    left = np.empty_like(mids)
    right = np.empty_like(mids)
    for i, arc in enumerate(p.arcs):
        mask = index == i
        left[mask] = np.interp(xs[:-1][mask], arc[:, 0], arc[:, 1])
        right[mask] = np.interp(xs[1:][mask], arc[:, 0], arc[:, 1])
    return left, right


def l1_subgraph_distance(pA: Profile, pB: Profile) -> float:
    """Exact integral of |h_A - h_B| over the common domain.

    Raises:
        DomainMismatch: The profiles live on different domains.
    """
    if pA.domain != pB.domain:
        raise DomainMismatch(f'domains {pA.domain} and {pB.domain} differ')
    xs = np.unique(np.concatenate([pA.vertices()[:, 0], pB.vertices()[:, 0]]))
    la, ra = _piecewise_values(pA, xs)
    lb, rb = _piecewise_values(pB, xs)
    d0, d1 = la - lb, ra - rb
    dx = np.diff(xs)
    same = d0 * d1 >= 0
    total = np.abs(d0) + np.abs(d1)
    crossing = np.where(total > 0, (d0 * d0 + d1 * d1) / (2 * np.where(total > 0, total, 1.0)), 0.0)
    pieces = np.where(same, 0.5 * np.abs(d0 + d1), crossing) * dx
    return math.fsum(pieces.tolist())


# ---------------------------------------------------------------------------
# sequence verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tolerances:
    """Thresholds of the verdict flags."""

    limsup: float = 0.05
    liminf: float = 1e-6
    constraints: float = 1e-12


def log_slope(ks: Sequence[int], values: Sequence[float], floor: float = TREND_FLOOR) -> float:
    """Least-squares slope of log(max(value, floor)) against log k; zero for one point."""
    if len(ks) < 2:
        return 0.0
    x = np.log(np.asarray(ks, dtype=float))
    y = np.log(np.maximum(np.asarray(values, dtype=float), floor))
    return float(np.polyfit(x, y, 1)[0])


def _trend_ok(ks: Sequence[int], values: Sequence[float], floor: float) -> bool:
    if max(values) <= floor:
        return True
    return log_slope(ks, values, floor) <= 1e-9


def verify_sequence(
    seq: Sequence[RegularConfiguration],
    limit: Tuple[Profile, AdatomMeasure],
    psi: SurfaceDensity,
    C: Optional[ElasticityTensor] = None,
    tolerances: Tolerances = Tolerances(),
    ks: Optional[Sequence[int]] = None,
    m: Optional[float] = None,
    M: Optional[float] = None,
    bank: Optional[TestFunctionBank] = None,
    hausdorff_resolution: int = 256,
    envelope: Optional[EnvelopeTable] = None,
) -> ConvergenceReport:
    """Measure a sequence of regular configurations against a limit configuration.

    When the bulk term of the limit cannot be evaluated, energies are compared through
    their surface parts and `f_total` reports the surface part of F.

    Regular members approach G of the limit from either side: a member may sit below it,
    for example while a ramp replacing a jump is still shorter than the jump it stands
    for. The liminf flag therefore checks G <= F on each member and asks the shortfall
    below the limit to vanish or shrink.

    Args:
        seq: The sequence, ordered by k.
        limit: Limit profile and measure.
        psi: Surface density.
        C: Elasticity tensor for bulk terms.
        tolerances: Verdict thresholds.
        ks: Indices of the members; defaults to 1, 2, ...
        m: Mass constraint; defaults to the mass of the limit measure.
        M: Area constraint; defaults to the area of the limit profile.
        bank: Test functions for weak-* gaps; defaults to `default_bank` over the box.
        hausdorff_resolution: Grid points per axis for Hausdorff estimates.
        envelope: Precomputed envelope of psi.

    Returns:
        Rows ordered by k and the verdict.

    Raises:
        EmptySequence: seq is empty.
    """
    if not seq:
        raise EmptySequence('cannot verify an empty sequence')
    ks = list(ks) if ks is not None else list(range(1, len(seq) + 1))
    limit_profile, limit_measure = limit
    m = total_mass(limit_measure) if m is None else m
    M = limit_profile.area if M is None else M
    envelope = envelope or subadditive_convex_envelope(psi)
    G = total_energy_G(limit_profile, limit_measure, psi, C, envelope=envelope)
    box = default_box(limit_profile, *(cfg.profile for cfg in seq))
    if bank is None:
        bank = default_bank(box, 0.25 * (box[1] - box[0]))

    rows: List[ConvergenceRow] = []
    for k, cfg in zip(ks, seq):
        F = total_energy_F(cfg, psi, C)
        G_member = total_energy_G(
            cfg.profile, cfg.measure, psi, C, cfg.mesh, cfg.displacement, envelope=envelope
        )
        compare_bulk = F.bulk_evaluated and G.bulk_evaluated
        f_value = F.total if compare_bulk else F.total - F.bulk
        g_value = G.total if compare_bulk else G.total - G.bulk
        member_value = G_member.total if compare_bulk else G_member.total - G_member.bulk
        estimate = hausdorff_complement_distance(cfg.profile, limit_profile, box, hausdorff_resolution)
        rows.append(
            ConvergenceRow(
                k=k,
                hausdorff_complement=estimate.value,
                hausdorff_error_bound=estimate.error_bound,
                l1_subgraph=l1_subgraph_distance(cfg.profile, limit_profile),
                weakstar_gap=weak_star_gap(cfg.measure, limit_measure, bank),
                f_total=f_value,
                g_member=member_value,
                g_limit=g_value,
                mass_error=abs(total_mass(cfg.measure) - m),
                area_error=abs(cfg.profile.area - M),
            )
        )
    verdict = _verdict(rows, tolerances, m, M)
    logger.info('verification over k=%s: %s', ks, verdict.model_dump())
    return ConvergenceReport(rows=rows, verdict=verdict)


def _verdict(rows: List[ConvergenceRow], tol: Tolerances, m: float, M: float) -> ConvergenceVerdict:
    ks = [row.k for row in rows]
    g = rows[-1].g_limit
    scale = abs(g) if g else 1.0
    gaps = [abs(row.f_total - row.g_limit) / scale for row in rows]
    half = len(rows) // 2
    tail_ks, tail_gaps = ks[half:], gaps[half:]
    slope = log_slope(tail_ks, tail_gaps)
    limsup = gaps[-1] <= tol.limsup and (max(tail_gaps) <= TREND_FLOOR or slope <= 1e-9)
    tail_shortfalls = [max(row.g_limit - row.f_total, 0.0) for row in rows[half:]]
    liminf = all(row.f_total >= row.g_member - tol.liminf for row in rows) and (
        max(tail_shortfalls) <= tol.liminf
        or (
            tail_shortfalls[-1] <= tol.limsup * scale
            and log_slope(tail_ks, tail_shortfalls, tol.liminf) < -1e-9
        )
    )
    constraints = all(
        row.mass_error <= tol.constraints * max(1.0, abs(m))
        and row.area_error <= tol.constraints * max(1.0, abs(M))
        for row in rows
    )
    floor = max(row.hausdorff_error_bound for row in rows)
    topology = _trend_ok(ks, [row.hausdorff_complement for row in rows], floor) and _trend_ok(
        ks, [row.weakstar_gap for row in rows], TREND_FLOOR
    )
    return ConvergenceVerdict(
        limsup=limsup,
        liminf=liminf,
        constraints=constraints,
        topology=topology,
        final_relative_gap=gaps[-1],
        energy_gap_slope=slope,
    )
