# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Piecewise-linear BV film profiles and their extended graphs.

A profile h >= 0 on (a, b) is stored as polyline arcs between breakpoints. At each interior
breakpoint the left limit, the right limit and the point value are kept; the point value is
required to be the lower semi-continuous representative, so it never exceeds the smaller
limit. Jumps and vertical cuts can therefore only sit on breakpoints.

The extended graph completes the graph of h with a vertical jump segment between the two
limits and a vertical cut segment from the point value up to the smaller limit.
"""

import logging
import math
import numpy as np
from dataclasses import dataclass, field
from microsoft.epirelax.errors import (
    EmptyDomain,
    LimitMismatch,
    NegativeHeight,
    NonMonotoneBreakpoints,
    NonPositiveEps,
    NotLowerSemicontinuous,
    WindowOutOfDomain,
)
from microsoft.epirelax.models import NodeSpec, ProfileSpec, SegmentTag
from numpy.typing import ArrayLike
from typing import List, NamedTuple, Optional, Sequence, Tuple


logger = logging.getLogger(__name__)

# Relative tolerance for comparing stored limits with arc endpoints
LIMIT_TOLERANCE = 1e-12


def _close(u: float, v: float, scale: float = 1.0) -> bool:
    return abs(u - v) <= LIMIT_TOLERANCE * max(1.0, scale, abs(u), abs(v))


@dataclass(frozen=True)
class Node:
    """Data of a profile at an interior breakpoint.

    Attributes:
        x: Breakpoint abscissa.
        left: Left limit h(x-).
        right: Right limit h(x+).
        value: Point value h(x), at most min(left, right).
    """

    x: float
    left: float
    right: float
    value: float

    @property
    def lower(self) -> float:
        """The smaller one-sided limit h^-(x)."""
        return min(self.left, self.right)

    @property
    def upper(self) -> float:
        """The larger one-sided limit h^+(x)."""
        return max(self.left, self.right)

    @property
    def cut_depth(self) -> float:
        """Length of the vertical cut below the smaller limit."""
        return self.lower - self.value

    @property
    def jump(self) -> float:
        """Length of the vertical jump between the limits."""
        return self.upper - self.lower


@dataclass(frozen=True, eq=False)
class Profile:
    """A validated piecewise-linear BV profile.

    Attributes:
        domain: The interval (a, b).
        breakpoints: a = x_0 < x_1 < ... < x_n = b.
        arcs: One (m, 2) array of (x, y) samples per subinterval, x strictly increasing.
        nodes: Node data for the interior breakpoints x_1 ... x_{n-1}.
    """

    domain: Tuple[float, float]
    breakpoints: np.ndarray
    arcs: Tuple[np.ndarray, ...]
    nodes: Tuple[Node, ...]

    @property
    def a(self) -> float:
        """Left end of the domain."""
        return self.domain[0]

    @property
    def b(self) -> float:
        """Right end of the domain."""
        return self.domain[1]

    @property
    def width(self) -> float:
        """Length b - a of the domain."""
        return self.domain[1] - self.domain[0]

    @property
    def height_scale(self) -> float:
        """Largest stored height, at least one."""
        return max(1.0, max(float(arc[:, 1].max()) for arc in self.arcs))

    @property
    def max_height(self) -> float:
        """Supremum of h, attained on an arc or as a limit."""
        return max(float(arc[:, 1].max()) for arc in self.arcs)

    @property
    def is_lipschitz(self) -> bool:
        """Whether h has neither jumps nor cuts."""
        scale = self.height_scale
        return all(
            _close(n.left, n.right, scale) and _close(n.value, n.lower, scale)
            for n in self.nodes
        )

    @property
    def lipschitz_constant(self) -> float:
        """Largest absolute slope over all arcs; meaningful for Lipschitz profiles."""
        slopes = [np.abs(np.diff(arc[:, 1]) / np.diff(arc[:, 0])).max() for arc in self.arcs]
        return float(max(slopes))

    @property
    def area(self) -> float:
        """Exact integral of h over the domain."""
        return area_above_zero(self)

    def evaluate(self, x: ArrayLike) -> np.ndarray:
        """Evaluate the stored lower semi-continuous representative.

        Args:
            x: Abscissae inside the closed domain.

        Returns:
            Heights with point values at the interior breakpoints.
        """
        xs = np.asarray(x, dtype=float)
        flat = np.atleast_1d(xs).ravel()
        out = np.empty_like(flat)
        index = np.searchsorted(self.breakpoints, flat, side='right') - 1
        index = np.clip(index, 0, len(self.arcs) - 1)
        for i, arc in enumerate(self.arcs):
            mask = index == i
            if mask.any():
                out[mask] = np.interp(flat[mask], arc[:, 0], arc[:, 1])
        for node in self.nodes:
            out[flat == node.x] = node.value
        return out.reshape(xs.shape) if xs.ndim else out[0]

    def vertices(self) -> np.ndarray:
        """All arc vertices, concatenated left to right.

        Interior breakpoints appear twice, once per adjacent arc.
        """
        return np.vstack(self.arcs)

    def polyline(self) -> np.ndarray:
        """Vertices of a continuous profile as one polyline, without duplicate breakpoints."""
        parts = [self.arcs[0]] + [arc[1:] for arc in self.arcs[1:]]
        return np.vstack(parts)

    def outline(self) -> np.ndarray:
        """Path through the extended graph: each arc, then down the cut and up the jump."""
        parts: List[np.ndarray] = []
        for i, arc in enumerate(self.arcs):
            parts.append(arc)
            if i < len(self.nodes):
                node = self.nodes[i]
                parts.append(np.array([[node.x, node.value]]))
        return np.vstack(parts)

    def total_variation(self, pointwise: bool = False) -> float:
        """Total variation of h.

        Args:
            pointwise: Count each cut twice, as the pointwise variation of the stored
                representative does. The essential variation ignores cuts.

        Returns:
            The variation as an exactly rounded sum.
        """
        terms = [float(v) for arc in self.arcs for v in np.abs(np.diff(arc[:, 1]))]
        terms.extend(n.jump for n in self.nodes)
        if pointwise:
            terms.extend(2.0 * n.cut_depth for n in self.nodes)
        return math.fsum(terms)

    def scaled(self, factor: float) -> 'Profile':
        """Multiply every height by a non-negative factor.

        Raises:
            NegativeHeight: The factor makes a height negative.
        """
        return self._mapped(lambda y: factor * y)

    def shifted(self, offset: float) -> 'Profile':
        """Add a constant to every height.

        Raises:
            NegativeHeight: The offset pushes a height below zero.
        """
        return self._mapped(lambda y: y + offset)

    def _mapped(self, fn) -> 'Profile':
        arcs = [np.column_stack([arc[:, 0], fn(arc[:, 1])]) for arc in self.arcs]
        nodes = [
            NodeSpec(x=n.x, left=float(fn(n.left)), right=float(fn(n.right)), value=float(fn(n.value)))
            for n in self.nodes
        ]
        return build_profile(self.domain, arcs, nodes)


class Segment(NamedTuple):
    """A tagged piece of the extended graph.

    Regular segments hold a polyline arc; jump and cut segments hold the two end points
    (x, y_low) and (x, y_high) of a vertical segment.
    """

    tag: SegmentTag
    index: int
    points: np.ndarray

    @property
    def is_vertical(self) -> bool:
        """Whether this is a jump or cut segment."""
        return self.tag is not SegmentTag.REGULAR

    @property
    def length(self) -> float:
        """Exact H^1 length of the segment."""
        d = np.diff(self.points, axis=0)
        return math.fsum(np.hypot(d[:, 0], d[:, 1]).tolist())

    @property
    def cumulative(self) -> np.ndarray:
        """Arclength at each vertex, starting at 0."""
        d = np.diff(self.points, axis=0)
        return np.concatenate([[0.0], np.cumsum(np.hypot(d[:, 0], d[:, 1]))])


class GraphLengths(NamedTuple):
    """H^1 lengths of the parts of an extended graph."""

    regular: float
    jump: float
    cut: float
    total: float


@dataclass(frozen=True, eq=False)
class ExtendedGraph:
    """The extended graph of a profile, split into regular, jump and cut segments.

    Segments are ordered left to right: each arc, followed at its right breakpoint by the
    cut segment and then the jump segment when they are non-empty.
    """

    profile: Profile
    segments: Tuple[Segment, ...]
    lengths: GraphLengths = field(init=False)

    def __post_init__(self):
        """Cache the per-tag lengths."""
        object.__setattr__(self, 'lengths', graph_lengths(self))

    def of_tag(self, tag: SegmentTag) -> List[Segment]:
        """Segments carrying the given tag, in order."""
        return [s for s in self.segments if s.tag is tag]

    def segment(self, tag: SegmentTag, index: int) -> Segment:
        """Look up a segment by tag and per-tag index."""
        for s in self.segments:
            if s.tag is tag and s.index == index:
                return s
        raise KeyError(f'no {tag.value} segment with index {index}')


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def _validated(
    domain: Tuple[float, float], arcs: Tuple[np.ndarray, ...], nodes: Tuple[Node, ...]
) -> Profile:
    breakpoints = np.array([arcs[0][0, 0]] + [arc[-1, 0] for arc in arcs], dtype=float)
    return Profile(domain=domain, breakpoints=breakpoints, arcs=arcs, nodes=nodes)


def build_profile(
    domain: Tuple[float, float],
    arcs: Sequence[ArrayLike],
    nodes: Optional[Sequence[NodeSpec]] = None,
) -> Profile:
    """Build and validate a profile.

    Args:
        domain: The interval (a, b).
        arcs: Polyline samples per subinterval, each an (m, 2) array-like of (x, y) with
            m >= 2. Consecutive arcs share their end abscissa, the first starts at a and the
            last ends at b.
        nodes: Optional node data at interior breakpoints. Omitted limits are taken from
            the arcs and an omitted point value defaults to the smaller limit.

    Returns:
        The validated profile.

    Raises:
        EmptyDomain: a >= b.
        NonMonotoneBreakpoints: Arc abscissae are not strictly increasing or arcs do not
            tile the domain.
        NegativeHeight: A height is negative.
        LimitMismatch: A stored limit disagrees with the adjacent arc endpoint, or a node
            does not sit on an interior breakpoint.
        NotLowerSemicontinuous: A point value exceeds the smaller limit.
    """
    a, b = float(domain[0]), float(domain[1])
    if not a < b:
        raise EmptyDomain(f'domain ({a}, {b}) is empty')
    if not arcs:
        raise NonMonotoneBreakpoints('a profile needs at least one arc')

    checked: List[np.ndarray] = []
    for i, raw in enumerate(arcs):
        arc = np.asarray(raw, dtype=float)
        if arc.ndim != 2 or arc.shape[1] != 2 or arc.shape[0] < 2:
            raise NonMonotoneBreakpoints(f'arc {i} must hold at least two (x, y) samples')
        if np.any(np.diff(arc[:, 0]) <= 0):
            raise NonMonotoneBreakpoints(f'arc {i} abscissae are not strictly increasing')
        if np.any(arc[:, 1] < 0):
            raise NegativeHeight(f'arc {i} has a negative height {arc[:, 1].min()}')
        checked.append(arc)

    if checked[0][0, 0] != a or checked[-1][-1, 0] != b:
        raise NonMonotoneBreakpoints(f'arcs do not start at {a} and end at {b}')
    for i in range(len(checked) - 1):
        if checked[i][-1, 0] != checked[i + 1][0, 0]:
            raise NonMonotoneBreakpoints(
                f'arc {i} ends at {checked[i][-1, 0]} but arc {i + 1} starts at '
                f'{checked[i + 1][0, 0]}'
            )

    scale = max(1.0, max(float(arc[:, 1].max()) for arc in checked))
    interior = [float(arc[-1, 0]) for arc in checked[:-1]]
    given = {}
    for spec in nodes or ():
        matches = [j for j, x in enumerate(interior) if _close(x, spec.x, b - a)]
        if not matches:
            raise LimitMismatch(f'node at x={spec.x} does not sit on an interior breakpoint')
        given[matches[0]] = spec

    built: List[Node] = []
    for j, x in enumerate(interior):
        left = float(checked[j][-1, 1])
        right = float(checked[j + 1][0, 1])
        spec = given.get(j)
        value = min(left, right)
        if spec is not None:
            if spec.left is not None and not _close(spec.left, left, scale):
                raise LimitMismatch(f'left limit {spec.left} at x={x} but the arc ends at {left}')
            if spec.right is not None and not _close(spec.right, right, scale):
                raise LimitMismatch(
                    f'right limit {spec.right} at x={x} but the arc starts at {right}'
                )
            if spec.value is not None:
                value = float(spec.value)
        if value < 0:
            raise NegativeHeight(f'point value {value} at x={x} is negative')
        if value > min(left, right) and not _close(value, min(left, right), scale):
            raise NotLowerSemicontinuous(
                f'point value {value} at x={x} exceeds min(h(x-), h(x+)) = {min(left, right)}'
            )
        built.append(Node(x=x, left=left, right=right, value=min(value, left, right)))

    return _validated((a, b), tuple(checked), tuple(built))


def profile_from_spec(spec: ProfileSpec) -> Profile:
    """Build a profile from a parsed profile spec file."""
    arcs = [np.column_stack([arc.x, arc.y]) for arc in spec.arcs]
    return build_profile(spec.domain, arcs, spec.nodes)


def polyline_profile(
    x: ArrayLike, y: ArrayLike, breaks: Sequence[float] = ()
) -> Profile:
    """Build a continuous profile from one polyline.

    Args:
        x: Strictly increasing abscissae; the first and last are the domain ends.
        y: Heights at x.
        breaks: Abscissae from x at which to split the polyline into separate arcs.

    Returns:
        A Lipschitz profile.
    """
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    pts = np.column_stack([xs, ys])
    cuts = sorted(int(np.flatnonzero(xs == c)[0]) for c in breaks if c in xs[1:-1])
    arcs = []
    start = 0
    for c in cuts + [len(xs) - 1]:
        arcs.append(pts[start : c + 1])
        start = c
    return build_profile((float(xs[0]), float(xs[-1])), arcs)


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


def decompose(p: Profile) -> ExtendedGraph:
    """Split the extended graph of a profile into regular, jump and cut segments.

    Args:
        p: A validated profile.

    Returns:
        The extended graph. Each interior breakpoint contributes a cut segment from the
        point value to the smaller limit and a jump segment from the smaller to the larger
        limit, each only when non-empty.
    """
    segments: List[Segment] = []
    counts = {tag: 0 for tag in SegmentTag}

    def emit(tag: SegmentTag, points: np.ndarray) -> None:
        segments.append(Segment(tag, counts[tag], points))
        counts[tag] += 1

    for i, arc in enumerate(p.arcs):
        emit(SegmentTag.REGULAR, arc)
        if i < len(p.nodes):
            node = p.nodes[i]
            if node.cut_depth > 0:
                emit(SegmentTag.CUT, np.array([[node.x, node.value], [node.x, node.lower]]))
            if node.jump > 0:
                emit(SegmentTag.JUMP, np.array([[node.x, node.lower], [node.x, node.upper]]))
    return ExtendedGraph(profile=p, segments=tuple(segments))


def check_window(p: Profile, window: Tuple[float, float]) -> Tuple[float, float]:
    x0, x1 = float(window[0]), float(window[1])
    if not (p.a <= x0 < x1 <= p.b):
        raise WindowOutOfDomain(f'window ({x0}, {x1}) is not inside the domain {p.domain}')
    return x0, x1


def regular_length_in(points: np.ndarray, x0: float, x1: float) -> float:
    """Length of the part of a graph polyline whose abscissa lies in [x0, x1]."""
    xa, xb = points[:-1, 0], points[1:, 0]
    lengths = np.hypot(xb - xa, points[1:, 1] - points[:-1, 1])
    overlap = np.clip(np.minimum(xb, x1) - np.maximum(xa, x0), 0.0, None)
    return math.fsum((lengths * overlap / (xb - xa)).tolist())


def graph_lengths(
    g: ExtendedGraph, window: Optional[Tuple[float, float]] = None
) -> GraphLengths:
    """Exact H^1 lengths of the parts of an extended graph.

    Args:
        g: The extended graph.
        window: Optional x-interval inside the domain. Vertical segments are counted when
            their abscissa lies in [x0, x1), so adjacent windows partition the graph.

    Returns:
        Regular, jump and cut lengths and their total.

    Raises:
        WindowOutOfDomain: The window is empty or leaves the domain.
    """
    parts = {tag: [] for tag in SegmentTag}
    if window is None:
        for s in g.segments:
            parts[s.tag].append(s.length)
    else:
        x0, x1 = check_window(g.profile, window)
        for s in g.segments:
            if s.is_vertical:
                if x0 <= s.points[0, 0] < x1:
                    parts[s.tag].append(s.length)
            else:
                parts[s.tag].append(regular_length_in(s.points, x0, x1))
    regular = math.fsum(parts[SegmentTag.REGULAR])
    jump = math.fsum(parts[SegmentTag.JUMP])
    cut = math.fsum(parts[SegmentTag.CUT])
    return GraphLengths(regular, jump, cut, math.fsum([regular, jump, cut]))


def area_above_zero(p: Profile) -> float:
    """Area of the subgraph of h above y = 0, as an exact trapezoid sum."""
    terms: List[float] = []
    for arc in p.arcs:
        dx = np.diff(arc[:, 0])
        terms.extend((0.5 * dx * (arc[:-1, 1] + arc[1:, 1])).tolist())
    return math.fsum(terms)


def cuts_exceeding(p: Profile, eps: float) -> List[float]:
    """Breakpoints whose cut is at least eps deep.

    Args:
        p: The profile.
        eps: Positive depth threshold.

    Returns:
        Sorted abscissae x with min(h(x-), h(x+)) - h(x) >= eps.

    Raises:
        NonPositiveEps: eps <= 0.
    """
    if not eps > 0:
        raise NonPositiveEps(f'cut threshold must be positive, got {eps}')
    return [n.x for n in p.nodes if n.cut_depth >= eps]
