# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Recovery sequences of regular configurations for a target (h, mu, m, M).

For each index k the target is pushed through a chain of stages:

1. grid-constant projection of the measure on an admissible grid;
2. finite-cut reduction: lower the profile by 1/k and restore the area with a shift;
3. Lipschitz approximation: one-sided Yosida-Moreau transforms between cuts, linear
   interpolation down to each cut bottom inside strips of half-width eps0 / k, an area
   shift, and transport of the density cell by cell onto the new graph;
4. wriggling of every run whose density exceeds s0, so that its density drops to s0;
5. constraint repair: rescale heights to the target area and densities run by run so the
   mass is unchanged;
6. phase mixing of densities where psi lies above its convex envelope.

Every emitted configuration is regular and meets both constraints up to rounding.
"""

import logging
import math
import numpy as np
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import combinations
from microsoft.epirelax.adatom import (
    AdatomMeasure,
    DensityPiece,
    DensityRun,
    Grid,
    TestFunctionBank,
    admissible_grid,
    arclength_at_x,
    cell_pieces,
    default_bank,
    density_runs,
    grid_constant_projection,
    measure_from_runs,
    point_at,
    total_mass,
    weak_star_gap,
)
from microsoft.epirelax.convergence import default_box, hausdorff_complement_distance
from microsoft.epirelax.elastic import ElasticityTensor, elastic_energy, equilibrium, mesh_film
from microsoft.epirelax.energy import (
    RegularConfiguration,
    surface_energy_relaxed,
    surface_energy_unrelaxed,
)
from microsoft.epirelax.envelope import EnvelopeTable, SurfaceDensity, subadditive_convex_envelope
from microsoft.epirelax.errors import (
    BracketNotFound,
    CellMismatch,
    ConstraintRepairFailed,
    InputError,
    NegativeArgument,
    NegativeEpsilonK,
    NonRegularProfile,
    StripsOverlap,
    TargetMismatch,
)
from microsoft.epirelax.models import ElasticityConfig, NodeSpec, SegmentTag, StageRow, StageTag
from microsoft.epirelax.profile import ExtendedGraph, Profile, build_profile, decompose, polyline_profile
from typing import Dict, List, Optional, Sequence, Tuple, Union


logger = logging.getLogger(__name__)

# Bisection stops when |f(t) - target| <= WRIGGLE_TOLERANCE * max(1, target)
WRIGGLE_TOLERANCE = 1e-10
SCAN_CAP = 2.0**40
MIN_SAMPLES = 256
SAMPLES_PER_HUMP = 32
MAX_SAMPLES = 2**15
MAX_ESCALATIONS = 30

# Runs are wriggled when their density exceeds s0 by this relative margin
WRIGGLE_MARGIN = 1e-6

# Slack allowed above 1 for the area and length ratios of the constraint repair
RATIO_SLACK = 1e-12

# Relative tolerance on the target mass and area
TARGET_TOLERANCE = 1e-12


def _check_target(actual: float, declared: float, what: str) -> None:
    if abs(actual - declared) > TARGET_TOLERANCE * max(1.0, abs(declared)):
        raise TargetMismatch(f'{what} is {actual!r} but the constraint says {declared!r}')


def _polyline_length(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(np.hypot(np.diff(x), np.diff(y))))


def _clip_polyline(
    x: np.ndarray, y: np.ndarray, x0: float, x1: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Vertices of a polyline restricted to [x0, x1], with interpolated end points."""
    inner = (x > x0) & (x < x1)
    xs = np.concatenate([[x0], x[inner], [x1]])
    return xs, np.interp(xs, x, y)


# ---------------------------------------------------------------------------
# finite cuts
# ---------------------------------------------------------------------------


def _truncate_arc(arc: np.ndarray, delta: float) -> np.ndarray:
    x, y = arc[:, 0], arc[:, 1]
    xs, ys = [x[0]], [y[0]]
    for i in range(len(x) - 1):
        d0, d1 = y[i] - delta, y[i + 1] - delta
        if d0 * d1 < 0:
            xc = x[i] + (x[i + 1] - x[i]) * d0 / (d0 - d1)
            if x[i] < xc < x[i + 1]:
                xs.append(xc)
                ys.append(delta)
        xs.append(x[i + 1])
        ys.append(y[i + 1])
    return np.column_stack([xs, np.maximum(np.asarray(ys) - delta, 0.0)])


def truncated_profile(p: Profile, k: int) -> Profile:
    """min{max{h^- - 1/k, 0}, h}: the profile lowered by 1/k, clipped at zero.

    Cuts shallower than 1/k disappear; deeper cuts keep their bottom.
    """
    if k < 1:
        raise InputError(f'index k must be at least 1, got {k}')
    delta = 1.0 / k
    arcs = [_truncate_arc(arc, delta) for arc in p.arcs]
    nodes = [NodeSpec(x=n.x, value=min(max(n.lower - delta, 0.0), n.value)) for n in p.nodes]
    return build_profile(p.domain, arcs, nodes)


def finite_cut_reduction(p: Profile, k: int, M: float) -> Profile:
    """Reduce a profile to finitely many cuts while keeping its area.

    Args:
        p: Target profile with area M.
        k: Index; cuts shallower than 1/k are removed.
        M: Area constraint.

    Returns:
        truncated_profile(p, k) shifted up by eps_k = (M - its area) / (b - a).

    Raises:
        TargetMismatch: The area of p is not M.
        NegativeEpsilonK: The shift came out negative.
    """
    _check_target(p.area, M, 'profile area')
    g_hat = truncated_profile(p, k)
    eps = (M - g_hat.area) / p.width
    if eps < -TARGET_TOLERANCE * max(1.0, M):
        raise NegativeEpsilonK(f'area shift {eps} is negative at k={k}')
    return g_hat.shifted(max(eps, 0.0))


# ---------------------------------------------------------------------------
# Lipschitz approximation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LipschitzApproximation:
    """A Lipschitz profile with the cut strips it was built with.

    Attributes:
        profile: The approximating profile.
        cuts: Abscissae of the cuts of the approximated profile.
        bottoms: Cut bottom values, one per cut.
        half_width: Strip half-width eps0 / k, zero without cuts.
        k: Index used.
    """

    profile: Profile
    cuts: Tuple[float, ...]
    bottoms: Tuple[float, ...]
    half_width: float
    k: int

    def strip_side(self, x: float) -> Optional[Tuple[str, float]]:
        """('left', c) or ('right', c) when x lies strictly inside a strip around c."""
        w = self.half_width
        for c in self.cuts:
            if c - w < x < c:
                return 'left', c
            if c < x < c + w:
                return 'right', c
        return None


def yosida_moreau(x: np.ndarray, y: np.ndarray, k: float) -> Tuple[np.ndarray, np.ndarray]:
    """Exact transform inf_z {h(z) + k |x - z|} of a polyline.

    Args:
        x: Non-decreasing abscissae; repeated abscissae encode jumps.
        y: Values.
        k: Slope bound.

    Returns:
        Vertices of the transform, strictly increasing in x.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    forward = y.copy()
    for i in range(1, n):
        forward[i] = min(y[i], forward[i - 1] + k * (x[i] - x[i - 1]))
    backward = y.copy()
    for i in range(n - 2, -1, -1):
        backward[i] = min(y[i], backward[i + 1] + k * (x[i + 1] - x[i]))

    X: List[float] = []
    Y: List[float] = []
    for i in range(n - 1):
        x0, x1 = x[i], x[i + 1]
        if x1 <= x0:
            continue
        dx = x1 - x0
        lines = ((y[i], (y[i + 1] - y[i]) / dx), (forward[i], k), (backward[i + 1] + k * dx, -k))
        candidates = {x0, x1}
        for (v1, s1), (v2, s2) in combinations(lines, 2):
            if s1 != s2:
                xc = x0 + (v2 - v1) / (s1 - s2)
                if x0 < xc < x1:
                    candidates.add(xc)
        for xc in sorted(candidates):
            if X and xc <= X[-1]:
                continue
            X.append(xc)
            Y.append(min(v + s * (xc - x0) for v, s in lines))
    return np.asarray(X), np.asarray(Y)


def _vertices_between(p: Profile, lo: float, hi: float) -> np.ndarray:
    arcs = [arc for arc in p.arcs if arc[0, 0] >= lo and arc[-1, 0] <= hi]
    return np.vstack(arcs)


def lipschitz_approximation(p: Profile, k: int) -> LipschitzApproximation:
    """Approximate a profile with finitely many cuts by a Lipschitz profile.

    Between consecutive cuts the profile is replaced by its Yosida-Moreau transform with
    slope k. Around each cut c the transform is replaced on (c - w, c + w), w = eps0 / k,
    by the lines joining the cut bottom (c, h(c)) to the transform at c -/+ w. eps0 is the
    least gap between consecutive cuts and the domain ends. The caller restores the area.

    Raises:
        InputError: k < 1.
        StripsOverlap: Strips of neighbouring cuts overlap.
    """
    if k < 1:
        raise InputError(f'index k must be at least 1, got {k}')
    cut_nodes = [n for n in p.nodes if n.cut_depth > 0]
    cuts = [n.x for n in cut_nodes]
    bottoms = [n.value for n in cut_nodes]
    ends = [p.a] + cuts + [p.b]
    w = 0.0
    if cuts:
        eps0 = float(np.min(np.diff(ends)))
        w = eps0 / k
        for c0, c1 in zip(cuts[:-1], cuts[1:]):
            if 2 * w > (c1 - c0) * (1 + 1e-12):
                raise StripsOverlap(f'strips of half-width {w} around {c0} and {c1} overlap')

    xs: List[float] = []
    ys: List[float] = []

    def push(x: float, y: float) -> None:
        if xs and x <= xs[-1]:
            return
        xs.append(float(x))
        ys.append(float(y))

    for j in range(len(ends) - 1):
        lo, hi = ends[j], ends[j + 1]
        vertices = _vertices_between(p, lo, hi)
        X, Y = yosida_moreau(vertices[:, 0], vertices[:, 1], k)
        core_lo = lo + w if j > 0 else lo
        core_hi = hi - w if j < len(ends) - 2 else hi
        if j > 0:
            push(lo, bottoms[j - 1])
        if core_hi <= core_lo:
            push(core_lo, float(np.interp(core_lo, X, Y)))
        else:
            cx, cy = _clip_polyline(X, Y, core_lo, core_hi)
            for x, y in zip(cx, cy):
                push(x, y)
        if j < len(ends) - 2:
            push(hi, bottoms[j])
    profile = polyline_profile(xs, ys)
    return LipschitzApproximation(profile, tuple(cuts), tuple(bottoms), w, k)


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


def cut_split(u_cut: float, env: EnvelopeTable) -> Tuple[float, float]:
    """Split a cut density into the densities of the two crack faces.

    Since psi~ is convex the midpoint split attains psi_c(u) = psi~(a) + psi~(b).

    Raises:
        NegativeArgument: u_cut < 0.
    """
    if u_cut < 0:
        raise NegativeArgument(f'cut density must be non-negative, got {u_cut}')
    half = 0.5 * u_cut
    return half, half


@dataclass(frozen=True, eq=False)
class TransportedDensity:
    """Density moved onto an approximating graph.

    Attributes:
        measure: The density on the approximating graph, with total mass m.
        correction: Constant r_k added to restore the mass; negative when the mass had
            to be scaled down instead.
    """

    measure: AdatomMeasure
    correction: float


def transport_density(
    target: AdatomMeasure,
    approx: Union[Profile, LipschitzApproximation],
    grid: Grid,
    m: float,
    env: EnvelopeTable,
) -> TransportedDensity:
    """Move a grid-constant density from a target graph onto an approximating graph.

    In every cell the target mass on arcs and jumps is spread over the approximating
    graph outside cut strips. Target cut mass goes to approximating cuts at the same
    abscissa, or else is split with `cut_split` between the left and right strip halves.
    Cells the target misses get density zero. A constant is then added everywhere so
    that the total mass is m.

    Args:
        target: Grid-constant measure on the target graph.
        approx: Approximating profile, with its strips when it came from
            `lipschitz_approximation`.
        grid: Grid admissible for both graphs.
        m: Mass constraint.
        env: Envelope used to split cut densities.

    Returns:
        The transported density and the additive correction.

    Raises:
        CellMismatch: Target mass sits in a cell the approximating graph misses.
    """
    if isinstance(approx, LipschitzApproximation):
        profile, strips = approx.profile, approx
        extra = sorted({x for c in approx.cuts for x in (c - approx.half_width, c, c + approx.half_width)})
    else:
        profile, strips, extra = approx, None, []

    pool: Dict[Tuple[int, int], List[float]] = defaultdict(list)
    cut_mass: Dict[Tuple[Tuple[int, int], float], List[float]] = defaultdict(list)
    cut_length: Dict[Tuple[Tuple[int, int], float], List[float]] = defaultdict(list)
    for segment in target.graph.segments:
        pieces = cell_pieces(segment, grid)
        for t0, t1, cell in zip(pieces.start, pieces.stop, pieces.cells):
            key = (int(cell[0]), int(cell[1]))
            mass = target.segment_mass(segment.tag, segment.index, float(t0), float(t1))
            if segment.tag is SegmentTag.CUT:
                where = (key, float(segment.points[0, 0]))
                cut_mass[where].append(mass)
                cut_length[where].append(float(t1 - t0))
            else:
                pool[key].append(mass)
    for site in target.sites:
        cell = grid.cell_of(np.array([[site.atom.x, site.atom.y]]))[0]
        key = (int(cell[0]), int(cell[1]))
        if site.tag is SegmentTag.CUT:
            x = float(target.graph.segment(site.tag, site.index).points[0, 0])
            cut_mass[(key, x)].append(site.atom.mass)
        else:
            pool[key].append(site.atom.mass)

    graph = decompose(profile)
    placed: List[Tuple[SegmentTag, int, float, float, Tuple[int, int], tuple]] = []
    lengths: Dict[Tuple[Tuple[int, int], tuple], List[float]] = defaultdict(list)
    classes: Dict[Tuple[int, int], set] = defaultdict(set)
    for segment in graph.segments:
        pieces = cell_pieces(segment, grid, extra)
        for t0, t1, cell in zip(pieces.start, pieces.stop, pieces.cells):
            key = (int(cell[0]), int(cell[1]))
            if segment.tag is SegmentTag.CUT:
                cls: tuple = ('cut', float(segment.points[0, 0]))
            else:
                side = None
                if strips is not None and segment.tag is SegmentTag.REGULAR:
                    side = strips.strip_side(float(point_at(segment, [0.5 * (t0 + t1)])[0, 0]))
                cls = side if side is not None else ('rest',)
            placed.append((segment.tag, segment.index, float(t0), float(t1), key, cls))
            lengths[(key, cls)].append(float(t1 - t0))
            classes[key].add(cls)

    density: Dict[Tuple[Tuple[int, int], tuple], float] = defaultdict(float)

    def length_of(key, cls) -> float:
        return math.fsum(lengths.get((key, cls), ()))

    def deposit(key, cls, mass: float) -> None:
        density[(key, cls)] += mass / length_of(key, cls)

    def spread(key, mass: float) -> None:
        if length_of(key, ('rest',)) > 0:
            deposit(key, ('rest',), mass)
            return
        total = math.fsum(length_of(key, cls) for cls in classes.get(key, ()))
        if not total > 0:
            raise CellMismatch(f'target mass {mass:g} in cell {key} but the approximating graph misses it')
        for cls in classes[key]:
            density[(key, cls)] += mass / total

    for (key, x), masses in sorted(cut_mass.items()):
        mass = math.fsum(masses)
        if mass <= 0:
            continue
        if length_of(key, ('cut', x)) > 0:
            deposit(key, ('cut', x), mass)
        elif strips is not None and x in strips.cuts:
            span = math.fsum(cut_length.get((key, x), ()))
            a, b = cut_split(mass / span if span > 0 else 0.0, env)
            share = a / (a + b) if a + b > 0 else 0.5
            left, right = length_of(key, ('left', x)), length_of(key, ('right', x))
            if left > 0 and right > 0:
                deposit(key, ('left', x), mass * share)
                deposit(key, ('right', x), mass * (1.0 - share))
            elif left > 0:
                deposit(key, ('left', x), mass)
            elif right > 0:
                deposit(key, ('right', x), mass)
            else:
                spread(key, mass)
        else:
            spread(key, mass)
    for key, masses in sorted(pool.items()):
        mass = math.fsum(masses)
        if mass > 0:
            spread(key, mass)

    values = np.array([density.get((key, cls), 0.0) for *_, key, cls in placed])
    widths = np.array([t1 - t0 for _, _, t0, t1, _, _ in placed])
    current = math.fsum((values * widths).tolist())
    total_length = math.fsum(widths.tolist())
    correction = (m - current) / total_length
    if correction >= 0:
        values = values + correction
    elif current > 0:
        values = values * (m / current)
    pieces_out = [
        DensityPiece(tag, index, t0, t1, float(v))
        for (tag, index, t0, t1, _, _), v in zip(placed, values)
    ]
    if correction:
        logger.debug('density transport correction r_k=%.3e', correction)
    return TransportedDensity(AdatomMeasure(graph, tuple(pieces_out), ()), correction)


# ---------------------------------------------------------------------------
# wriggling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WriggleParams:
    """Parameters of one wriggled panel.

    Attributes:
        k: Index of the sequence member.
        oscillation: Amplitude index j >= k; the oscillation has amplitude 1/j.
        ramp_width: Width of the trapezoid ramp, min(width / 3, j^(-1/2)).
        frequency: Frequency t solving the length equation.
        target_length: Length the panel must reach.
        achieved_length: Length reached.
        lipschitz_bound: l + t / j + 2 / (j ramp_width) bound on the slope.
    """

    k: int
    oscillation: int
    ramp_width: float
    frequency: float
    target_length: float
    achieved_length: float
    lipschitz_bound: float


def _ramp(x: np.ndarray, p: float, q: float, lam: float) -> np.ndarray:
    return np.clip(np.minimum((x - p) / lam, (q - x) / lam), 0.0, 1.0)


def _wriggle_panel(
    px: np.ndarray, py: np.ndarray, r: float, k: int
) -> Tuple[np.ndarray, np.ndarray, WriggleParams]:
    p, q = float(px[0]), float(px[-1])
    width = q - p
    base = _polyline_length(px, py)
    target = r * base
    ell = float(np.max(np.abs(np.diff(py) / np.diff(px))))

    for escalation in range(MAX_ESCALATIONS + 1):
        j = k * 2**escalation
        lam = min(width / 3.0, j**-0.5)
        corners = np.union1d(px, [p + lam, q - lam])
        start = _polyline_length(corners, np.interp(corners, px, py) + (2.0 / j) * _ramp(corners, p, q, lam))
        if start < base + 0.5 * (target - base):
            break
    else:
        raise BracketNotFound(f'ramp overshoot leaves no room below length {target} on [{p}, {q}]')
    if escalation:
        logger.debug('wriggle amplitude index raised from %d to %d on [%g, %g]', k, j, p, q)

    def samples(t: float) -> np.ndarray:
        humps = math.ceil(t * width / math.pi)
        n = int(min(max(MIN_SAMPLES, SAMPLES_PER_HUMP * humps), MAX_SAMPLES))
        return np.union1d(np.linspace(p, q, n), corners)

    def shape(t: float, xs: np.ndarray) -> np.ndarray:
        return np.interp(xs, px, py) + (2.0 - np.abs(np.sin(t * xs))) / j * _ramp(xs, p, q, lam)

    def length(t: float, xs: np.ndarray) -> float:
        return _polyline_length(xs, shape(t, xs))

    lo, hi = 0.0, max(4.0 * j * ell, math.pi / width)
    while length(hi, samples(hi)) < target:
        lo, hi = hi, 2.0 * hi
        if hi > SCAN_CAP:
            raise BracketNotFound(f'no frequency up to {SCAN_CAP:g} reaches length {target}')
    xs = samples(hi)
    if lo > 0 and length(lo, xs) >= target:
        lo = 0.0

    tolerance = WRIGGLE_TOLERANCE * max(1.0, target)
    best_t, best_f = hi, length(hi, xs)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        value = length(mid, xs)
        if abs(value - target) < abs(best_f - target):
            best_t, best_f = mid, value
        if abs(value - target) <= tolerance or hi - lo <= 1e-16 * hi:
            break
        if value < target:
            lo = mid
        else:
            hi = mid
    params = WriggleParams(
        k=k,
        oscillation=j,
        ramp_width=lam,
        frequency=best_t,
        target_length=target,
        achieved_length=best_f,
        lipschitz_bound=ell + best_t / j + 2.0 / (j * lam),
    )
    return xs, shape(best_t, xs), params


def wriggle_polyline(
    x: np.ndarray, y: np.ndarray, r: float, k: int
) -> Tuple[np.ndarray, np.ndarray, List[WriggleParams]]:
    """Wriggle a polyline so its length grows by the factor r.

    The interval is split into k panels, each wriggled to r times its own length with
    xi = h + (2 - |sin(t x)|) / j * eta, where eta is a trapezoid ramp vanishing at the
    panel ends.

    Raises:
        InputError: r < 1 or k < 1.
        BracketNotFound: No frequency reaches the target length.
    """
    if r < 1 or k < 1:
        raise InputError(f'wriggling needs r >= 1 and k >= 1, got r={r}, k={k}')
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if r == 1:
        return x, y, []
    edges = np.linspace(x[0], x[-1], k + 1)
    out_x, out_y = [x[:1]], [y[:1]]
    params: List[WriggleParams] = []
    for e0, e1 in zip(edges[:-1], edges[1:]):
        px, py = _clip_polyline(x, y, e0, e1)
        wx, wy, panel = _wriggle_panel(px, py, r, k)
        out_x.append(wx[1:])
        out_y.append(wy[1:])
        params.append(panel)
    return np.concatenate(out_x), np.concatenate(out_y), params


def wriggle(h: Profile, r: float, k: int) -> Profile:
    """Lipschitz profile above h, at most 2/k higher, whose graph is r times longer.

    Raises:
        NonRegularProfile: h has jumps or cuts.
    """
    if not h.is_lipschitz:
        raise NonRegularProfile('only Lipschitz profiles can be wriggled')
    if r == 1:
        return h
    line = h.polyline()
    xs, ys, _ = wriggle_polyline(line[:, 0], line[:, 1], r, k)
    return polyline_profile(xs, ys)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RecoveryStage:
    """Output of one stage for one index.

    Attributes:
        k: Requested index.
        tag: Stage.
        profile: Profile after the stage.
        measure: Measure on the profile's extended graph, when the stage carries one.
        bookkeeping: Stage constants such as eps_k, gamma_k, t_k and r_k.
    """

    k: int
    tag: StageTag
    profile: Profile
    measure: Optional[AdatomMeasure]
    bookkeeping: Dict[str, float]


@dataclass(frozen=True, eq=False)
class RecoveryMember:
    """One member of a recovery sequence.

    Attributes:
        k: Requested index.
        k_effective: Index actually used after refinements.
        configuration: The emitted regular configuration.
        stages: Stages in execution order.
        wriggles: Parameters of every wriggled panel.
        rows: Stage report rows.
    """

    k: int
    k_effective: int
    configuration: RegularConfiguration
    stages: Tuple[RecoveryStage, ...]
    wriggles: Tuple[WriggleParams, ...]
    rows: Tuple[StageRow, ...]


@dataclass(frozen=True, eq=False)
class RecoverySequence:
    """Members ordered by k, with the shared grid, envelope and projection."""

    members: Tuple[RecoveryMember, ...]
    grid: Grid
    envelope: EnvelopeTable
    projected: AdatomMeasure
    elasticity: Optional[ElasticityTensor] = None

    @property
    def ks(self) -> List[int]:
        """Requested indices."""
        return [member.k for member in self.members]

    @property
    def configurations(self) -> List[RegularConfiguration]:
        """Emitted configurations ordered by k."""
        return [member.configuration for member in self.members]

    @property
    def rows(self) -> List[StageRow]:
        """Stage report rows ordered by k, then by stage."""
        return [row for member in self.members for row in member.rows]


@dataclass(frozen=True, eq=False)
class _Target:
    profile: Profile
    measure: AdatomMeasure
    projected: AdatomMeasure
    psi: SurfaceDensity
    env: EnvelopeTable
    grid: Grid
    m: float
    M: float
    bank: TestFunctionBank
    density_scale: float
    hausdorff_resolution: int
    elasticity: Optional[ElasticityConfig]
    tensor: Optional[ElasticityTensor]


def _wriggle_stage(
    profile: Profile, measure: AdatomMeasure, env: EnvelopeTable, k: int
) -> Tuple[Profile, AdatomMeasure, List[WriggleParams]]:
    runs = density_runs(measure)
    if not math.isfinite(env.s0):
        return profile, measure, []
    line = profile.polyline()
    xs, ys = line[:, 0], line[:, 1]
    out_x, out_y = [xs[:1]], [ys[:1]]
    params: List[WriggleParams] = []
    wriggled: List[int] = []
    for i, run in enumerate(runs):
        px, py = _clip_polyline(xs, ys, run.x0, run.x1)
        if run.value > env.s0 * (1 + WRIGGLE_MARGIN):
            px, py, panels = wriggle_polyline(px, py, run.value / env.s0, k)
            params.extend(panels)
            wriggled.append(i)
        out_x.append(px[1:])
        out_y.append(py[1:])
    if not wriggled:
        return profile, measure, []
    new_profile = polyline_profile(np.concatenate(out_x), np.concatenate(out_y))
    old_segment = measure.graph.segments[0]
    new_graph = decompose(new_profile)
    new_segment = new_graph.segments[0]
    new_runs = []
    for i, run in enumerate(runs):
        value = run.value
        if i in wriggled:
            old_length = float(np.diff(arclength_at_x(old_segment, [run.x0, run.x1]))[0])
            new_length = float(np.diff(arclength_at_x(new_segment, [run.x0, run.x1]))[0])
            if new_length > 0:
                value = run.value * old_length / new_length
        new_runs.append(DensityRun(run.x0, run.x1, value))
    return new_profile, measure_from_runs(new_graph, new_runs), params


def _constraint_fix(
    profile: Profile, measure: AdatomMeasure, M: float
) -> Tuple[Profile, AdatomMeasure, float, float]:
    gamma = M / profile.area
    if not 0 < gamma <= 1 + RATIO_SLACK:
        raise ConstraintRepairFailed(f'area ratio gamma_k={gamma} outside (0, 1]')
    fixed = profile.scaled(gamma)
    old_graph, new_graph = measure.graph, decompose(fixed)
    old_segment, new_segment = old_graph.segments[0], new_graph.segments[0]
    new_runs = []
    for run in density_runs(measure, merge=False):
        old_length = float(np.diff(arclength_at_x(old_segment, [run.x0, run.x1]))[0])
        new_length = float(np.diff(arclength_at_x(new_segment, [run.x0, run.x1]))[0])
        if not old_length > 0:
            # carries no mass
            new_runs.append(run)
            continue
        ratio = new_length / old_length
        if not 0 < ratio <= 1 + RATIO_SLACK:
            raise ConstraintRepairFailed(f'length ratio {ratio} outside (0, 1] on [{run.x0}, {run.x1}]')
        new_runs.append(run._replace(value=run.value / ratio))
    t_k = new_graph.lengths.total / old_graph.lengths.total
    if not 0 < t_k <= 1 + RATIO_SLACK:
        raise ConstraintRepairFailed(f'length ratio t_k={t_k} outside (0, 1]')
    return fixed, measure_from_runs(new_graph, new_runs), gamma, t_k


def phase_mix(measure: AdatomMeasure, env: EnvelopeTable, k: int) -> Tuple[AdatomMeasure, int]:
    """Replace densities where psi exceeds its convex envelope by fine mixtures.

    A piece of density u with psi(u) > psi^cvx(u) is cut into k blocks along arclength;
    each block carries the neighbouring hull abscissae s_lo < u < s_hi with fractions
    (s_hi - u) / (s_hi - s_lo) and (u - s_lo) / (s_hi - s_lo). The mass is unchanged.

    Returns:
        The mixed measure and the number of pieces mixed.
    """
    if env.density.is_closed_form:
        return measure, 0
    hull = env.hull
    pieces: List[DensityPiece] = []
    mixed = 0
    for piece in measure.pieces:
        u = piece.value
        psi_u = float(env.density(u))
        convex_u = float(env.convex(u))
        i = int(np.searchsorted(hull.s, u, side='right'))
        if psi_u <= convex_u + 1e-12 * max(1.0, psi_u) or i == 0 or i >= hull.s.size:
            pieces.append(piece)
            continue
        s_lo, s_hi = float(hull.s[i - 1]), float(hull.s[i])
        fraction = (s_hi - u) / (s_hi - s_lo)
        block = (piece.stop - piece.start) / k
        for b in range(k):
            t0 = piece.start + b * block
            t1 = piece.stop if b == k - 1 else t0 + block
            tm = t0 + fraction * (t1 - t0)
            pieces.append(piece._replace(start=t0, stop=tm, value=s_lo))
            pieces.append(piece._replace(start=tm, stop=t1, value=s_hi))
        mixed += 1
    if mixed:
        logger.debug('phase mixing applied to %d pieces at k=%d', mixed, k)
    return AdatomMeasure(measure.graph, tuple(p for p in pieces if p.stop > p.start), measure.atoms), mixed


def _stage_row(stage: RecoveryStage, target: _Target, bulk: Optional[float] = None) -> StageRow:
    graph = stage.measure.graph if stage.measure is not None else decompose(stage.profile)
    lengths = graph.lengths
    mass = total_mass(stage.measure) if stage.measure is not None else total_mass(target.projected)
    f_surface = g_surface = weakstar = None
    if stage.measure is not None:
        g_surface = surface_energy_relaxed(graph, stage.measure, target.env).total
        weakstar = weak_star_gap(stage.measure, target.measure, target.bank)
        if stage.profile.is_lipschitz and not stage.measure.atoms and lengths.jump == lengths.cut == 0:
            cfg = RegularConfiguration(stage.profile, stage.measure)
            f_surface = surface_energy_unrelaxed(cfg, target.psi)
    box = default_box(target.profile, stage.profile)
    hausdorff = hausdorff_complement_distance(stage.profile, target.profile, box, target.hausdorff_resolution)
    return StageRow(
        k=stage.k,
        stage=stage.tag,
        area=stage.profile.area,
        mass=mass,
        h1_regular=lengths.regular,
        h1_jump=lengths.jump,
        h1_cut=lengths.cut,
        f_surface=f_surface,
        f_bulk=bulk,
        g_surface=g_surface,
        hausdorff_gap=hausdorff.value,
        weakstar_gap=weakstar,
    )


def _run_stages(k: int, k_eff: int, target: _Target) -> RecoveryMember:
    p, M, m, env = target.profile, target.M, target.m, target.env
    stages: List[RecoveryStage] = [
        RecoveryStage(k, StageTag.GRID_CONSTANT, p, target.projected, {'grid_offset': float(target.grid.tries)})
    ]

    g_hat = truncated_profile(p, k_eff)
    eps_k = (M - g_hat.area) / p.width
    if eps_k < -TARGET_TOLERANCE * max(1.0, M):
        raise NegativeEpsilonK(f'area shift {eps_k} is negative at k={k_eff}')
    reduced = g_hat.shifted(max(eps_k, 0.0))
    stages.append(
        RecoveryStage(k, StageTag.FINITE_CUTS, reduced, None, {'eps_k': eps_k, 'cuts': float(sum(n.cut_depth > 0 for n in reduced.nodes))})
    )

    approx = lipschitz_approximation(reduced, k_eff)
    shift = (M - approx.profile.area) / p.width
    if shift >= 0:
        lifted = approx.profile.shifted(shift)
    else:
        lifted = approx.profile.scaled(M / approx.profile.area)
    approx = replace(approx, profile=lifted)
    transported = transport_density(target.projected, approx, target.grid, m, env)
    stages.append(
        RecoveryStage(
            k,
            StageTag.LIPSCHITZ_APPROX,
            lifted,
            transported.measure,
            {
                'shift': shift,
                'strip_half_width': approx.half_width,
                'r_k': transported.correction,
                'lipschitz_constant': lifted.lipschitz_constant,
            },
        )
    )

    wriggled, wriggled_measure, params = _wriggle_stage(lifted, transported.measure, env, k_eff)
    stages.append(
        RecoveryStage(
            k,
            StageTag.WRIGGLED,
            wriggled,
            wriggled_measure,
            {
                'panels': float(len(params)),
                'lipschitz_bound': max((w.lipschitz_bound for w in params), default=lifted.lipschitz_constant),
            },
        )
    )

    fixed, fixed_measure, gamma, t_k = _constraint_fix(wriggled, wriggled_measure, M)
    stages.append(RecoveryStage(k, StageTag.CONSTRAINT_FIXED, fixed, fixed_measure, {'gamma_k': gamma, 't_k': t_k}))

    final_measure, mixed = phase_mix(fixed_measure, env, k_eff)
    if target.density_scale != 1.0:
        final_measure = final_measure.scaled(target.density_scale)
    stages.append(
        RecoveryStage(k, StageTag.PHASE_MIXED, fixed, final_measure, {'mixed_pieces': float(mixed), 'density_scale': target.density_scale})
    )

    mesh = displacement = None
    bulk = None
    if target.elasticity is not None and target.tensor is not None:
        el = target.elasticity
        mesh = mesh_film(fixed, el.depth or p.width, el.nx, el.ny)
        displacement = equilibrium(mesh, target.tensor, el.bc)
        bulk = elastic_energy(mesh, displacement, target.tensor)
    configuration = RegularConfiguration(fixed, final_measure, mesh, displacement)
    rows = tuple(
        _stage_row(stage, target, bulk if stage.tag is StageTag.PHASE_MIXED else None) for stage in stages
    )
    logger.info('k=%d (effective %d): gamma_k=%.12g t_k=%.12g', k, k_eff, gamma, t_k)
    return RecoveryMember(k, k_eff, configuration, tuple(stages), tuple(params), rows)


def _recover(k: int, target: _Target, max_refinements: int) -> RecoveryMember:
    for attempt in range(max_refinements + 1):
        k_eff = k * 2**attempt
        try:
            return _run_stages(k, k_eff, target)
        except CellMismatch as exc:
            if attempt == max_refinements:
                raise
            logger.debug('cell mismatch at k=%d, retrying with k=%d: %s', k_eff, 2 * k_eff, exc)
    raise AssertionError('unreachable')


def build_recovery_sequence(
    p: Profile,
    mu: AdatomMeasure,
    psi: SurfaceDensity,
    ks: Sequence[int],
    cell: float = 0.3,
    m: Optional[float] = None,
    M: Optional[float] = None,
    *,
    envelope: Optional[EnvelopeTable] = None,
    max_offset_tries: int = 1000,
    max_refinements: int = 3,
    density_scale: float = 1.0,
    hausdorff_resolution: int = 256,
    elasticity: Optional[ElasticityConfig] = None,
    threads: int = 1,
) -> RecoverySequence:
    """Build a recovery sequence of regular configurations for a target.

    Args:
        p: Target profile.
        mu: Target measure on the extended graph of p.
        psi: Surface density.
        ks: Indices; duplicates are dropped and members are ordered by k.
        cell: Grid cell size.
        m: Mass constraint; defaults to the mass of mu.
        M: Area constraint; defaults to the area of p.
        envelope: Precomputed envelope of psi.
        max_offset_tries: Offsets tried for an admissible grid.
        max_refinements: Index doublings tried after a cell mismatch.
        density_scale: Multiplier applied to the emitted densities.
        hausdorff_resolution: Grid points per axis for the stage report.
        elasticity: When given, each member gets an equilibrium displacement.
        threads: Worker threads over k.

    Returns:
        The sequence with per-stage reports.

    Raises:
        InputError: ks is empty.
        TargetMismatch: mu or p violates the declared constraints.
    """
    if not ks:
        raise InputError('a recovery sequence needs at least one index')
    m = total_mass(mu) if m is None else m
    M = p.area if M is None else M
    _check_target(total_mass(mu), m, 'adatom mass')
    _check_target(p.area, M, 'profile area')
    env = envelope or subadditive_convex_envelope(psi)
    graph: ExtendedGraph = mu.graph if mu.graph.profile is p else decompose(p)
    grid = admissible_grid(graph, cell, max_offset_tries, atoms=mu.atoms)
    projected = grid_constant_projection(graph, mu, grid)
    tensor = None
    if elasticity is not None:
        tensor = ElasticityTensor(elasticity.lam, elasticity.mu, elasticity.t)
    target = _Target(
        profile=p,
        measure=mu,
        projected=projected,
        psi=psi,
        env=env,
        grid=grid,
        m=m,
        M=M,
        bank=default_bank(default_box(p), cell),
        density_scale=density_scale,
        hausdorff_resolution=hausdorff_resolution,
        elasticity=elasticity,
        tensor=tensor,
    )
    ordered = sorted(set(ks))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            members = list(pool.map(lambda k: _recover(k, target, max_refinements), ordered))
    else:
        members = [_recover(k, target, max_refinements) for k in ordered]
    return RecoverySequence(tuple(members), grid, env, projected, tensor)
