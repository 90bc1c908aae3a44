# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Adatom measures on extended graphs.

A measure is a density u >= 0, piecewise constant in arclength along each segment of an
extended graph, plus finitely many atoms on the graph. This module builds and validates
measures, projects them to grid-constant densities and measures weak-* gaps against a bank
of test functions.
"""

import logging
import math
import numpy as np
from dataclasses import dataclass, field
from microsoft.epirelax.errors import (
    AtomOffGraph,
    EmptyBank,
    InputError,
    NegativeDensity,
    NoAdmissibleOffsetFound,
)
from microsoft.epirelax.models import AtomSpec, DensitySpec, SegmentTag
from microsoft.epirelax.profile import ExtendedGraph, Segment
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple


logger = logging.getLogger(__name__)

# Distance below which a point counts as lying on the graph
ON_GRAPH_TOLERANCE = 1e-9

# Runs narrower than this fraction of the domain width are absorbed by a neighbour
RUN_TOLERANCE = 1e-12

# Nodes per straight piece in the composite Gauss-Legendre rule
QUADRATURE_NODES = 32

PART_TILDE = 'tilde'
PART_CUT = 'cut'

# Tag order used to break ties when an atom sits on several segments
_TAG_PRIORITY = (SegmentTag.REGULAR, SegmentTag.JUMP, SegmentTag.CUT)


def part_of(tag: SegmentTag) -> str:
    """The graph part a tag belongs to: jumps and arcs form one part, cuts the other."""
    return PART_CUT if tag is SegmentTag.CUT else PART_TILDE


class DensityPiece(NamedTuple):
    """Constant density on the arclength interval [start, stop] of one segment."""

    tag: SegmentTag
    index: int
    start: float
    stop: float
    value: float

    @property
    def mass(self) -> float:
        """Mass carried by the piece."""
        return self.value * (self.stop - self.start)


class Atom(NamedTuple):
    """A point mass at (x, y)."""

    x: float
    y: float
    mass: float


class AtomSite(NamedTuple):
    """Where an atom sits: segment tag, per-tag index and arclength along the segment."""

    atom: Atom
    tag: SegmentTag
    index: int
    t: float


def point_at(segment: Segment, t: np.ndarray) -> np.ndarray:
    """Points at arclengths t along a segment, as an (n, 2) array."""
    c = segment.cumulative
    tt = np.asarray(t, dtype=float)
    return np.column_stack([np.interp(tt, c, segment.points[:, 0]), np.interp(tt, c, segment.points[:, 1])])


def arclength_at_x(segment: Segment, x: np.ndarray) -> np.ndarray:
    """Arclength along a regular segment at abscissae x."""
    return np.interp(np.asarray(x, dtype=float), segment.points[:, 0], segment.cumulative)


def distance_to_segment(segment: Segment, x: float, y: float) -> Tuple[float, float]:
    """Distance from (x, y) to a segment and the arclength of the closest point."""
    p0 = segment.points[:-1]
    d = np.diff(segment.points, axis=0)
    lengths2 = np.einsum('ij,ij->i', d, d)
    lam = np.clip(((x - p0[:, 0]) * d[:, 0] + (y - p0[:, 1]) * d[:, 1]) / lengths2, 0.0, 1.0)
    cx = p0[:, 0] + lam * d[:, 0]
    cy = p0[:, 1] + lam * d[:, 1]
    dist = np.hypot(cx - x, cy - y)
    best = int(np.argmin(dist))
    c = segment.cumulative
    return float(dist[best]), float(c[best] + lam[best] * (c[best + 1] - c[best]))


def locate_atom(graph: ExtendedGraph, atom: Atom) -> AtomSite:
    """Find the segment carrying an atom; arcs win over jumps, jumps over cuts.

    Raises:
        AtomOffGraph: The atom is farther than the tolerance from every segment.
    """
    for tag in _TAG_PRIORITY:
        for segment in graph.of_tag(tag):
            dist, t = distance_to_segment(segment, atom.x, atom.y)
            if dist <= ON_GRAPH_TOLERANCE:
                return AtomSite(atom, tag, segment.index, t)
    raise AtomOffGraph(f'atom at ({atom.x}, {atom.y}) is not on the extended graph')


@dataclass(frozen=True, eq=False)
class AdatomMeasure:
    """mu = u H^1 restricted to the graph, plus atoms.

    Attributes:
        graph: The extended graph carrying the measure.
        pieces: Density pieces, sorted by segment and non-overlapping. Arclength not
            covered by a piece has density zero.
        atoms: The singular part.
        sites: Location of each atom, computed at construction.
    """

    graph: ExtendedGraph
    pieces: Tuple[DensityPiece, ...]
    atoms: Tuple[Atom, ...] = ()
    sites: Tuple[AtomSite, ...] = field(init=False)

    def __post_init__(self):
        """Validate densities and masses and locate the atoms."""
        for piece in self.pieces:
            if not piece.value >= 0:
                raise NegativeDensity(
                    f'density {piece.value} on {piece.tag.value} segment {piece.index} is negative'
                )
        for atom in self.atoms:
            if not atom.mass > 0:
                raise NegativeDensity(f'atom at ({atom.x}, {atom.y}) has mass {atom.mass} <= 0')
        ordered = tuple(sorted(self.pieces, key=lambda p: (_TAG_PRIORITY.index(p.tag), p.index, p.start)))
        object.__setattr__(self, 'pieces', ordered)
        object.__setattr__(self, 'sites', tuple(locate_atom(self.graph, a) for a in self.atoms))

    def runs(self, tag: SegmentTag, index: int) -> List[DensityPiece]:
        """Pieces covering a whole segment in order, gaps filled with density zero."""
        length = self.graph.segment(tag, index).length
        out: List[DensityPiece] = []
        position = 0.0
        for piece in self.pieces:
            if piece.tag is not tag or piece.index != index:
                continue
            if piece.start > position:
                out.append(DensityPiece(tag, index, position, piece.start, 0.0))
            out.append(piece)
            position = piece.stop
        if position < length:
            out.append(DensityPiece(tag, index, position, length, 0.0))
        return out

    def segment_mass(self, tag: SegmentTag, index: int, t0: float, t1: float) -> float:
        """Density mass on the arclength interval [t0, t1] of a segment, atoms excluded."""
        terms = [
            p.value * max(0.0, min(p.stop, t1) - max(p.start, t0))
            for p in self.pieces
            if p.tag is tag and p.index == index
        ]
        return math.fsum(terms)

    def mass_by_part(self) -> Dict[str, float]:
        """Total mass on the jump-and-arc part and on the cut part."""
        terms: Dict[str, List[float]] = {PART_TILDE: [], PART_CUT: []}
        for piece in self.pieces:
            terms[part_of(piece.tag)].append(piece.mass)
        for site in self.sites:
            terms[part_of(site.tag)].append(site.atom.mass)
        return {part: math.fsum(values) for part, values in terms.items()}

    def scaled(self, factor: float) -> 'AdatomMeasure':
        """Multiply every density and atom mass by a positive factor."""
        pieces = tuple(p._replace(value=p.value * factor) for p in self.pieces)
        atoms = tuple(a._replace(mass=a.mass * factor) for a in self.atoms)
        return AdatomMeasure(self.graph, pieces, atoms)


def uniform_measure(
    graph: ExtendedGraph, values: Dict[SegmentTag, float], atoms: Sequence[Atom] = ()
) -> AdatomMeasure:
    """Constant density per tag on every segment of that tag."""
    pieces = [
        DensityPiece(s.tag, s.index, 0.0, s.length, float(values.get(s.tag, 0.0)))
        for s in graph.segments
    ]
    return AdatomMeasure(graph, tuple(pieces), tuple(atoms))


def build_measure(
    graph: ExtendedGraph,
    densities: Sequence[DensitySpec] = (),
    atoms: Sequence[AtomSpec] = (),
) -> AdatomMeasure:
    """Build a measure from tag/index selectors and atom specs.

    A selector without an index covers every segment of its tag. Later selectors
    override earlier ones on the segments they cover.

    Raises:
        InputError: A selector index names no segment.
        NegativeDensity: A negative density or a non-positive atom mass.
        AtomOffGraph: An atom is not on the graph.
    """
    values: Dict[Tuple[SegmentTag, int], float] = {}
    for spec in densities:
        segments = graph.of_tag(spec.tag)
        if spec.index is not None:
            segments = [s for s in segments if s.index == spec.index]
            if not segments:
                raise InputError(f'no {spec.tag.value} segment with index {spec.index}')
        for s in segments:
            values[(s.tag, s.index)] = spec.value
    pieces = tuple(
        DensityPiece(s.tag, s.index, 0.0, s.length, values.get((s.tag, s.index), 0.0))
        for s in graph.segments
    )
    return AdatomMeasure(graph, pieces, tuple(Atom(a.x, a.y, a.mass) for a in atoms))


class DensityRun(NamedTuple):
    """Constant density over the x-interval [x0, x1] of a Lipschitz graph."""

    x0: float
    x1: float
    value: float


def measure_from_runs(graph: ExtendedGraph, runs: Sequence[DensityRun]) -> AdatomMeasure:
    """Build a measure on the graph of a Lipschitz profile from x-interval runs.

    Runs are clipped to the x-range of every arc they overlap.

    Raises:
        InputError: The graph has vertical segments.
    """
    if any(s.is_vertical for s in graph.segments):
        raise InputError('x-interval runs need a graph without jumps or cuts')
    pieces: List[DensityPiece] = []
    for segment in graph.segments:
        lo, hi = float(segment.points[0, 0]), float(segment.points[-1, 0])
        for run in runs:
            x0, x1 = max(run.x0, lo), min(run.x1, hi)
            if x1 > x0:
                t0, t1 = arclength_at_x(segment, [x0, x1])
                pieces.append(DensityPiece(segment.tag, segment.index, float(t0), float(t1), float(run.value)))
    return AdatomMeasure(graph, tuple(pieces), ())


def density_runs(mu: AdatomMeasure, merge: bool = True) -> List[DensityRun]:
    """x-interval runs of a measure on a Lipschitz graph, left to right.

    Runs narrower than RUN_TOLERANCE times the domain width are absorbed by their left
    neighbour, or by the next run at the left end, so every run has positive width and
    consecutive runs share their end points.

    Args:
        mu: Atom-free measure on a graph without vertical segments.
        merge: Join neighbouring runs with equal density.

    Raises:
        InputError: The graph has vertical segments or the measure has atoms.
    """
    if mu.atoms or any(s.is_vertical for s in mu.graph.segments):
        raise InputError('x-interval runs need an atom-free measure on a Lipschitz graph')
    profile = mu.graph.profile
    slack = RUN_TOLERANCE * max(1.0, profile.b - profile.a)
    out: List[DensityRun] = []
    pending: Optional[float] = None
    for segment in mu.graph.segments:
        for piece in mu.runs(segment.tag, segment.index):
            x0, x1 = (float(v) for v in point_at(segment, [piece.start, piece.stop])[:, 0])
            if x1 - x0 <= slack:
                if out:
                    out[-1] = out[-1]._replace(x1=max(out[-1].x1, x1))
                elif pending is None:
                    pending = x0
                continue
            if pending is not None:
                x0, pending = pending, None
            if out:
                x0 = out[-1].x1
            if merge and out and out[-1].value == piece.value:
                out[-1] = out[-1]._replace(x1=x1)
            else:
                out.append(DensityRun(x0, x1, piece.value))
    return out


def total_mass(mu: AdatomMeasure) -> float:
    """Density mass plus atomic mass, as an exactly rounded sum."""
    return math.fsum([p.mass for p in mu.pieces] + [a.mass for a in mu.atoms])


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """A square grid of cell size r translated by an offset.

    Cell (i, j) is [vx + i r, vx + (i + 1) r) x [vy + j r, vy + (j + 1) r).
    """

    r: float
    offset: Tuple[float, float]
    tries: int = 0

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        """Integer cell indices of (n, 2) points."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.floor((p - np.asarray(self.offset)) / self.r).astype(np.int64)

    def on_line(self, value: float, axis: int) -> bool:
        """Whether a coordinate lies on a grid line of the given axis."""
        q = (value - self.offset[axis]) / self.r
        return abs(q - round(q)) * self.r <= ON_GRAPH_TOLERANCE


def _degeneracy(graph: ExtendedGraph, grid: Grid, atoms: Iterable[Atom]) -> Optional[str]:
    for segment in graph.segments:
        if segment.is_vertical:
            if grid.on_line(float(segment.points[0, 0]), 0):
                return f'{segment.tag.value} segment at x={segment.points[0, 0]} lies on a grid line'
            continue
        flat = np.flatnonzero(np.diff(segment.points[:, 1]) == 0)
        for k in flat:
            if grid.on_line(float(segment.points[k, 1]), 1):
                return f'horizontal piece at y={segment.points[k, 1]} lies on a grid line'
    for node in graph.profile.nodes:
        if grid.on_line(node.x, 0):
            return f'breakpoint x={node.x} lies on a grid line'
        # arc ends and jump or cut ends at the breakpoint
        for y in (node.left, node.right, node.value):
            if grid.on_line(y, 1):
                return f'breakpoint ({node.x}, {y}) lies on a grid line'
    for atom in atoms:
        if grid.on_line(atom.x, 0) or grid.on_line(atom.y, 1):
            return f'atom at ({atom.x}, {atom.y}) lies on a grid line'
    return None


def admissible_grid(
    graph: ExtendedGraph, r: float, max_tries: int = 1000, atoms: Sequence[Atom] = ()
) -> Grid:
    """Find a grid that meets the extended graph in finitely many points.

    Offsets k (r / 1009, r / 1013) are tried for k = 0 .. max_tries. An offset is rejected
    when a vertical segment lies on an x-line, a horizontal arc piece lies on a y-line, or
    an interior breakpoint, an end of a jump or cut, or an atom lies on any line.

    Args:
        graph: The extended graph.
        r: Cell size.
        max_tries: Last offset multiplier tried.
        atoms: Atoms that must avoid the grid lines.

    Returns:
        The first admissible grid.

    Raises:
        InputError: r <= 0.
        NoAdmissibleOffsetFound: Every offset tried is degenerate.
    """
    if not r > 0:
        raise InputError(f'grid cell size must be positive, got {r}')
    reason = None
    for k in range(max_tries + 1):
        grid = Grid(r=r, offset=(k * r / 1009.0, k * r / 1013.0), tries=k)
        reason = _degeneracy(graph, grid, atoms)
        if reason is None:
            if k:
                logger.debug('grid offset k=%d accepted for r=%g', k, r)
            return grid
    raise NoAdmissibleOffsetFound(f'no admissible grid offset in {max_tries + 1} tries: {reason}')


class CellPieces(NamedTuple):
    """Arclength sub-intervals of one segment, each inside a single grid cell."""

    start: np.ndarray
    stop: np.ndarray
    cells: np.ndarray


def cell_pieces(segment: Segment, grid: Grid, extra_x: Sequence[float] = ()) -> CellPieces:
    """Split a segment at its grid-line crossings and at extra abscissae.

    Each sub-interval is assigned the cell of its midpoint.
    """
    pts = segment.points
    c = segment.cumulative
    breaks = [c]
    lines_per_axis = []
    for axis in (0, 1):
        v = grid.offset[axis]
        lo, hi = pts[:, axis].min(), pts[:, axis].max()
        lines = v + grid.r * np.arange(math.ceil((lo - v) / grid.r), math.floor((hi - v) / grid.r) + 1)
        if axis == 0 and len(extra_x):
            lines = np.concatenate([lines, np.asarray(extra_x, dtype=float)])
        lines_per_axis.append(lines)
    for axis, lines in enumerate(lines_per_axis):
        if lines.size == 0:
            continue
        c0 = pts[:-1, axis][None, :]
        c1 = pts[1:, axis][None, :]
        level = lines[:, None]
        crossing = (c0 - level) * (c1 - level) < 0
        if crossing.any():
            lam = np.where(crossing, (level - c0) / np.where(c1 != c0, c1 - c0, 1.0), 0.0)
            t = (c[:-1][None, :] + lam * np.diff(c)[None, :])[crossing]
            breaks.append(t)
    t = np.unique(np.concatenate(breaks))
    start, stop = t[:-1], t[1:]
    keep = stop > start
    start, stop = start[keep], stop[keep]
    cells = grid.cell_of(point_at(segment, 0.5 * (start + stop)))
    return CellPieces(start, stop, cells)


def grid_constant_projection(
    graph: ExtendedGraph, mu: AdatomMeasure, grid: Grid
) -> AdatomMeasure:
    """Average a measure over grid cells, separately on the jump-and-arc part and the cuts.

    On each cell Q the new density on the part P is mu(P ∩ Q) / H^1(P ∩ Q), atoms
    included. The result has no atoms and the same mass on each part. A group whose
    density is already constant and holds no atom keeps its value unchanged.

    Args:
        graph: The extended graph carrying mu.
        mu: The measure to project.
        grid: An admissible grid for the graph.

    Returns:
        The grid-constant measure.

    Raises:
        AtomOffGraph: An atom of mu is not on the graph.
    """
    groups: Dict[Tuple[int, int, str], Dict[str, list]] = {}
    split: List[Tuple[Segment, CellPieces]] = []
    for segment in graph.segments:
        pieces = cell_pieces(segment, grid)
        split.append((segment, pieces))
        runs = mu.runs(segment.tag, segment.index)
        for t0, t1, cell in zip(pieces.start, pieces.stop, pieces.cells):
            key = (int(cell[0]), int(cell[1]), part_of(segment.tag))
            group = groups.setdefault(key, {'length': [], 'mass': [], 'values': set()})
            group['length'].append(float(t1 - t0))
            for run in runs:
                overlap = min(run.stop, t1) - max(run.start, t0)
                if overlap > 0:
                    group['mass'].append(run.value * overlap)
                    group['values'].add(run.value)
    sites = mu.sites if mu.graph is graph else tuple(locate_atom(graph, a) for a in mu.atoms)
    for site in sites:
        cell = grid.cell_of(np.array([[site.atom.x, site.atom.y]]))[0]
        key = (int(cell[0]), int(cell[1]), part_of(site.tag))
        if key not in groups:
            raise AtomOffGraph(f'atom at ({site.atom.x}, {site.atom.y}) falls in a cell the graph misses')
        groups[key]['mass'].append(site.atom.mass)
        groups[key]['values'].add(None)

    density: Dict[Tuple[int, int, str], float] = {}
    for key, group in groups.items():
        if len(group['values']) == 1 and None not in group['values']:
            density[key] = next(iter(group['values']))
        else:
            density[key] = math.fsum(group['mass']) / math.fsum(group['length'])

    out: List[DensityPiece] = []
    for segment, pieces in split:
        for t0, t1, cell in zip(pieces.start, pieces.stop, pieces.cells):
            value = density[(int(cell[0]), int(cell[1]), part_of(segment.tag))]
            previous = out[-1] if out else None
            if (
                previous is not None
                and previous.tag is segment.tag
                and previous.index == segment.index
                and previous.value == value
                and previous.stop == t0
            ):
                out[-1] = previous._replace(stop=float(t1))
            else:
                out.append(DensityPiece(segment.tag, segment.index, float(t0), float(t1), value))
    return AdatomMeasure(graph, tuple(out), ())


class CellRow(NamedTuple):
    """One row of the projected-density export."""

    cell_i: int
    cell_j: int
    part: str
    length: float
    density: float


def cell_table(mu: AdatomMeasure, grid: Grid) -> List[CellRow]:
    """Length and mean density of mu per grid cell and part, sorted by cell then part."""
    groups: Dict[Tuple[int, int, str], Tuple[List[float], List[float]]] = {}
    for segment in mu.graph.segments:
        pieces = cell_pieces(segment, grid)
        for t0, t1, cell in zip(pieces.start, pieces.stop, pieces.cells):
            key = (int(cell[0]), int(cell[1]), part_of(segment.tag))
            lengths, masses = groups.setdefault(key, ([], []))
            lengths.append(float(t1 - t0))
            masses.append(mu.segment_mass(segment.tag, segment.index, float(t0), float(t1)))
    for site in mu.sites:
        cell = grid.cell_of(np.array([[site.atom.x, site.atom.y]]))[0]
        groups[(int(cell[0]), int(cell[1]), part_of(site.tag))][1].append(site.atom.mass)
    rows = []
    for (i, j, part), (lengths, masses) in sorted(groups.items()):
        length = math.fsum(lengths)
        rows.append(CellRow(i, j, part, length, math.fsum(masses) / length if length else 0.0))
    return rows


# ---------------------------------------------------------------------------
# weak-* gaps
# ---------------------------------------------------------------------------


TestFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TestFunctionBank:
    """Bounded continuous functions used to witness weak-* convergence.

    Gaps are relative to the bank: two measures agreeing on every member have gap 0.
    """

    __test__ = False

    names: Tuple[str, ...]
    functions: Tuple[TestFunction, ...]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values of every member at (n, 2) points, as a (members, n) array."""
        x, y = points[:, 0], points[:, 1]
        return np.vstack([np.broadcast_to(f(x, y), x.shape) for f in self.functions])


def default_bank(
    box: Tuple[float, float, float, float], r: float, order: int = 1
) -> TestFunctionBank:
    """Moments, box-normalised trigonometric terms and Gaussian bumps.

    Args:
        box: (x0, x1, y0, y1) bounding box of the measures compared.
        r: Width scale; the bumps have standard deviation r / 2.
        order: Highest trigonometric frequency, in multiples of pi.

    Returns:
        The bank {1, x, y, x^2, xy, y^2, sin/cos(n pi x^), sin/cos(n pi y^), 4 bumps}
        with bumps centred in the four quarters of the box.
    """
    x0, x1, y0, y1 = box
    wx = (x1 - x0) or 1.0
    wy = (y1 - y0) or 1.0
    names = ['1', 'x', 'y', 'x^2', 'xy', 'y^2']
    functions: List[TestFunction] = [
        lambda x, y: np.ones_like(x),
        lambda x, y: x,
        lambda x, y: y,
        lambda x, y: x * x,
        lambda x, y: x * y,
        lambda x, y: y * y,
    ]
    for n in range(1, order + 1):
        names += [f'sin({n}pi x^)', f'cos({n}pi x^)', f'sin({n}pi y^)', f'cos({n}pi y^)']
        functions += [
            lambda x, y, n=n: np.sin(n * np.pi * (x - x0) / wx),
            lambda x, y, n=n: np.cos(n * np.pi * (x - x0) / wx),
            lambda x, y, n=n: np.sin(n * np.pi * (y - y0) / wy),
            lambda x, y, n=n: np.cos(n * np.pi * (y - y0) / wy),
        ]
    sigma2 = (r / 2.0) ** 2
    for cx in (x0 + 0.25 * wx, x0 + 0.75 * wx):
        for cy in (y0 + 0.25 * wy, y0 + 0.75 * wy):
            names.append(f'bump({cx:g},{cy:g})')
            functions.append(
                lambda x, y, cx=cx, cy=cy: np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * sigma2))
            )
    return TestFunctionBank(tuple(names), tuple(functions))


def quadrature(mu: AdatomMeasure) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating against mu.

    Each straight piece of constant density gets a Gauss-Legendre rule, exact for
    polynomials up to degree 2 * QUADRATURE_NODES - 1; atoms are nodes weighted by mass.
    """
    xi, wi = np.polynomial.legendre.leggauss(QUADRATURE_NODES)
    points: List[np.ndarray] = []
    weights: List[np.ndarray] = []
    for segment in mu.graph.segments:
        runs = [r for r in mu.runs(segment.tag, segment.index) if r.value > 0]
        if not runs:
            continue
        starts = np.array([r.start for r in runs])
        stops = np.array([r.stop for r in runs])
        values = np.array([r.value for r in runs])
        c = segment.cumulative
        t = np.unique(np.concatenate([c, starts, stops]))
        t0, t1 = t[:-1], t[1:]
        mid = 0.5 * (t0 + t1)
        k = np.searchsorted(starts, mid, side='right') - 1
        inside = (k >= 0) & (mid < stops[np.clip(k, 0, None)])
        t0, t1, v = t0[inside], t1[inside], values[k[inside]]
        if t0.size == 0:
            continue
        half = 0.5 * (t1 - t0)
        nodes = (0.5 * (t0 + t1))[:, None] + half[:, None] * xi[None, :]
        points.append(point_at(segment, nodes.ravel()))
        weights.append((half * v)[:, None] * wi[None, :])
    if mu.atoms:
        points.append(np.array([[a.x, a.y] for a in mu.atoms]))
        weights.append(np.array([a.mass for a in mu.atoms]))
    if not points:
        return np.zeros((0, 2)), np.zeros(0)
    return np.vstack(points), np.concatenate([w.ravel() for w in weights])


def integrate(mu: AdatomMeasure, bank: TestFunctionBank) -> np.ndarray:
    """Integral of every bank member against mu."""
    points, weights = quadrature(mu)
    if weights.size == 0:
        return np.zeros(len(bank.functions))
    return bank.evaluate(points) @ weights


def weak_star_gap(mu1: AdatomMeasure, mu2: AdatomMeasure, bank: TestFunctionBank) -> float:
    """Largest difference of integrals over the bank.

    Raises:
        EmptyBank: The bank has no members.
    """
    if not bank.functions:
        raise EmptyBank('test-function bank is empty')
    return float(np.max(np.abs(integrate(mu1, bank) - integrate(mu2, bank))))
