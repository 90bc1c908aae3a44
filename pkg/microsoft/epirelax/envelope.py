# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Surface densities and their convex sub-additive envelopes.

For a surface density psi with inf psi > 0 the envelope psi~ is the largest convex and
sub-additive function below psi. It agrees with the convex envelope on [0, s0] and is
linear with slope theta beyond s0, where theta is the slope of the tangent from the
origin. The cut density is psi_c(s) = min{psi~(r) + psi~(t) : r + t = s} = 2 psi~(s / 2).
"""

import logging
import math
import numpy as np
from dataclasses import dataclass
from microsoft.epirelax.errors import DegenerateGrid, NegativeArgument, NonPositivePsi
from microsoft.epirelax.models import SurfaceDensityConfig, SurfaceDensityKind
from numpy.typing import ArrayLike
from typing import List, Optional


logger = logging.getLogger(__name__)

DEFAULT_S_MAX = 64.0
DEFAULT_POINTS = 4097

# Relative slack when comparing ratios psi(s) / s for the smallest minimiser
_RATIO_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class SurfaceDensity:
    """A surface energy density psi(s) of the adatom density s >= 0.

    Use the constructors `constant`, `quadratic` and `table` rather than the fields.

    Attributes:
        kind: Closed form or table.
        c: Value of the constant density.
        alpha: Constant term of alpha + beta s^2.
        beta: Quadratic coefficient.
        table_s: Table abscissae, starting at 0.
        table_values: Table values.
        tail_slope: Slope of the linear extension past the last table row.
    """

    kind: SurfaceDensityKind
    c: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    table_s: Optional[np.ndarray] = None
    table_values: Optional[np.ndarray] = None
    tail_slope: Optional[float] = None

    @classmethod
    def constant(cls, c: float) -> 'SurfaceDensity':
        """psi(s) = c with c > 0."""
        if not c > 0:
            raise NonPositivePsi(f'constant surface density must be positive, got {c}')
        return cls(kind=SurfaceDensityKind.CONSTANT, c=float(c))

    @classmethod
    def quadratic(cls, alpha: float, beta: float) -> 'SurfaceDensity':
        """psi(s) = alpha + beta s^2 with alpha > 0 and beta >= 0."""
        if not alpha > 0:
            raise NonPositivePsi(f'quadratic surface density needs alpha > 0, got {alpha}')
        if beta < 0:
            raise NonPositivePsi(f'quadratic surface density needs beta >= 0, got {beta}')
        return cls(kind=SurfaceDensityKind.QUADRATIC, alpha=float(alpha), beta=float(beta))

    @classmethod
    def table(cls, s: ArrayLike, values: ArrayLike, tail_slope: float) -> 'SurfaceDensity':
        """Piecewise-linear interpolation of samples, extended linearly past the last row.

        Raises:
            DegenerateGrid: Fewer than two rows, a first row not at s = 0, or abscissae
                that are not strictly increasing.
            NonPositivePsi: A non-positive value or a negative tail slope.
        """
        xs = np.asarray(s, dtype=float)
        ys = np.asarray(values, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise DegenerateGrid('a surface density table needs at least two rows')
        if xs[0] != 0.0 or np.any(np.diff(xs) <= 0):
            raise DegenerateGrid('table abscissae must start at 0 and strictly increase')
        if not np.all(np.isfinite(ys)) or ys.min() <= 0:
            raise NonPositivePsi(f'surface density table has minimum {ys.min()} <= 0')
        if tail_slope < 0:
            raise NonPositivePsi(f'a negative tail slope {tail_slope} makes psi eventually negative')
        return cls(
            kind=SurfaceDensityKind.TABLE,
            table_s=xs,
            table_values=ys,
            tail_slope=float(tail_slope),
        )

    @property
    def is_closed_form(self) -> bool:
        """Whether psi is convex in closed form, so its envelope needs no sampling."""
        return self.kind is not SurfaceDensityKind.TABLE

    @property
    def asymptotic_slope(self) -> float:
        """lim psi(s) / s, infinite for a strictly quadratic density."""
        if self.kind is SurfaceDensityKind.CONSTANT:
            return 0.0
        if self.kind is SurfaceDensityKind.QUADRATIC:
            return math.inf if self.beta > 0 else 0.0
        return float(self.tail_slope)

    def __call__(self, s: ArrayLike) -> np.ndarray:
        """Evaluate psi at s >= 0."""
        x = np.asarray(s, dtype=float)
        if self.kind is SurfaceDensityKind.CONSTANT:
            return np.full_like(x, self.c)
        if self.kind is SurfaceDensityKind.QUADRATIC:
            return self.alpha + self.beta * x * x
        last_s, last_v = self.table_s[-1], self.table_values[-1]
        inner = np.interp(x, self.table_s, self.table_values)
        return np.where(x > last_s, last_v + self.tail_slope * (x - last_s), inner)

    def describe(self) -> str:
        """Short human-readable description, used in provenance and logs."""
        if self.kind is SurfaceDensityKind.CONSTANT:
            return f'constant(c={self.c:g})'
        if self.kind is SurfaceDensityKind.QUADRATIC:
            return f'quadratic(alpha={self.alpha:g}, beta={self.beta:g})'
        return f'table(rows={self.table_s.size}, tail_slope={self.tail_slope:g})'


def surface_density_from_config(
    config: SurfaceDensityConfig, table: Optional[np.ndarray] = None
) -> SurfaceDensity:
    """Build a surface density from its configuration block.

    Args:
        config: The validated block.
        table: Loaded (n, 2) rows `s, value` for table densities.
    """
    if config.kind is SurfaceDensityKind.CONSTANT:
        return SurfaceDensity.constant(config.c)
    if config.kind is SurfaceDensityKind.QUADRATIC:
        return SurfaceDensity.quadratic(config.alpha, config.beta)
    if table is None:
        raise DegenerateGrid('table surface density given without table rows')
    return SurfaceDensity.table(table[:, 0], table[:, 1], config.tail_slope)


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """A convex piecewise-linear function on [0, inf).

    Attributes:
        s: Vertex abscissae, starting at 0.
        values: Values at the vertices.
        tail_slope: Slope past the last vertex.
    """

    s: np.ndarray
    values: np.ndarray
    tail_slope: float

    def __call__(self, s: ArrayLike) -> np.ndarray:
        """Evaluate at s >= 0."""
        x = np.asarray(s, dtype=float)
        inner = np.interp(x, self.s, self.values)
        beyond = self.values[-1] + self.tail_slope * (x - self.s[-1])
        return np.where(x > self.s[-1], beyond, inner)

    @property
    def slopes(self) -> np.ndarray:
        """Edge slopes followed by the tail slope."""
        return np.append(np.diff(self.values) / np.diff(self.s), self.tail_slope)

    @property
    def is_affine(self) -> bool:
        """Whether every edge has the same slope as the tail."""
        slopes = self.slopes
        return bool(np.allclose(slopes, slopes[-1], rtol=1e-9, atol=1e-12))


@dataclass(frozen=True, eq=False)
class EnvelopeTable:
    """The convex sub-additive envelope psi~ of a surface density.

    Attributes:
        hull: The convex envelope psi^cvx as computed on the sampling grid.
        s0: Threshold after which psi~ is linear, possibly infinite.
        theta: Recession coefficient lim psi~(s) / s.
        density: The surface density the envelope was computed from.
        grid_step: Step of the uniform sampling grid.
        nonlinear_tail: Set when s0 is infinite but psi^cvx is not affine, in which
            case psi~ is taken to be psi^cvx everywhere.
    """

    hull: PiecewiseLinear
    s0: float
    theta: float
    density: SurfaceDensity
    grid_step: float
    nonlinear_tail: bool = False

    @property
    def provenance(self) -> str:
        """Where the table came from, with the nonlinear-tail flag if raised."""
        text = self.density.describe()
        return f'{text}; nonlinear tail' if self.nonlinear_tail else text

    def convex(self, s: ArrayLike) -> np.ndarray:
        """Evaluate psi^cvx; exact for closed-form densities."""
        if self.density.is_closed_form:
            return self.density(s)
        return self.hull(s)

    def __call__(self, s: ArrayLike) -> np.ndarray:
        """Evaluate psi~ at s >= 0.

        Raises:
            NegativeArgument: Some s < 0.
        """
        x = np.asarray(s, dtype=float)
        if np.any(x < 0):
            raise NegativeArgument(f'psi~ is defined for s >= 0, got {x.min()}')
        phi = self.convex(x)
        if math.isfinite(self.s0):
            phi = np.where(x > self.s0, self.theta * x, phi)
        return phi

    def psi_c(self, s: ArrayLike) -> np.ndarray:
        """Cut density; see `psi_c`."""
        return psi_c(self, s)


def _lower_hull(s: np.ndarray, values: np.ndarray, tail_slope: float) -> PiecewiseLinear:
    # Andrew's monotone chain on points sorted by s; collinear points are dropped.
    hull: List[int] = []
    for i in range(s.size):
        while len(hull) >= 2:
            o, p = hull[-2], hull[-1]
            cross = (s[p] - s[o]) * (values[i] - values[o]) - (values[p] - values[o]) * (s[i] - s[o])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    # The function continues as a ray of slope tail_slope past the last sample.
    while len(hull) >= 2:
        o, p = hull[-2], hull[-1]
        if (values[p] - values[o]) / (s[p] - s[o]) >= tail_slope:
            hull.pop()
        else:
            break
    idx = np.asarray(hull)
    return PiecewiseLinear(s=s[idx].copy(), values=values[idx].copy(), tail_slope=tail_slope)


def _sample_grid(psi: SurfaceDensity, s_max: float, points: int) -> np.ndarray:
    if points < 2 or not s_max > 0 or not math.isfinite(s_max):
        raise DegenerateGrid(f'sampling grid needs >= 2 points on (0, s_max], got {points}, {s_max}')
    grid = np.linspace(0.0, s_max, points)
    if psi.kind is SurfaceDensityKind.TABLE:
        grid = np.union1d(grid, psi.table_s)
    return grid


def convex_envelope(
    psi: SurfaceDensity, s_max: float = DEFAULT_S_MAX, points: int = DEFAULT_POINTS
) -> PiecewiseLinear:
    """Lower convex hull of psi sampled on a uniform grid.

    Table densities are also sampled at their rows, and the hull continues past the last
    sample with the asymptotic slope of psi.

    Args:
        psi: The surface density.
        s_max: Right end of the grid.
        points: Number of grid points.

    Returns:
        The convex piecewise-linear envelope, exact for the samples.

    Raises:
        DegenerateGrid: Fewer than two points or a non-positive extent.
    """
    grid = _sample_grid(psi, s_max, points)
    values = psi(grid)
    if not np.all(np.isfinite(values)):
        raise DegenerateGrid('surface density is not finite on the sampling grid')
    tail = psi.asymptotic_slope
    if not math.isfinite(tail):
        tail = float((values[-1] - values[-2]) / (grid[-1] - grid[-2]))
    return _lower_hull(grid, values, tail)


def subadditive_convex_envelope(
    psi: SurfaceDensity, s_max: float = DEFAULT_S_MAX, points: int = DEFAULT_POINTS
) -> EnvelopeTable:
    """Compute psi~ with its threshold s0 and recession coefficient theta.

    theta is the least ratio psi^cvx(s) / s over hull vertices s > 0, unless the tail
    slope strictly undercuts it, in which case s0 is infinite and theta is the tail slope.
    s0 is the smallest vertex attaining the least ratio. Closed-form densities use the
    exact tangent point instead of the grid.

    Args:
        psi: The surface density.
        s_max: Right end of the sampling grid.
        points: Number of sampling points.

    Returns:
        The envelope table.

    Raises:
        NonPositivePsi: psi is not bounded below by a positive constant on the grid.
        DegenerateGrid: The grid is degenerate.
    """
    grid = _sample_grid(psi, s_max, points)
    if psi(grid).min() <= 0:
        raise NonPositivePsi(f'surface density has minimum {psi(grid).min()} <= 0 on the grid')
    hull = convex_envelope(psi, s_max, points)
    step = s_max / (points - 1)

    if psi.kind is SurfaceDensityKind.CONSTANT or (
        psi.kind is SurfaceDensityKind.QUADRATIC and psi.beta == 0
    ):
        table = EnvelopeTable(hull=hull, s0=math.inf, theta=0.0, density=psi, grid_step=step)
    elif psi.kind is SurfaceDensityKind.QUADRATIC:
        s0 = math.sqrt(psi.alpha / psi.beta)
        theta = 2.0 * math.sqrt(psi.alpha * psi.beta)
        table = EnvelopeTable(hull=hull, s0=s0, theta=theta, density=psi, grid_step=step)
    else:
        positive = hull.s > 0
        s0, theta = math.inf, hull.tail_slope
        if positive.any():
            ratios = hull.values[positive] / hull.s[positive]
            best = float(ratios.min())
            if not hull.tail_slope < best:
                first = int(np.flatnonzero(ratios <= best * (1 + _RATIO_TOLERANCE))[0])
                s0, theta = float(hull.s[positive][first]), best
        nonlinear = math.isinf(s0) and not hull.is_affine
        if nonlinear:
            logger.warning(
                'psi~ has no finite threshold but psi^cvx is not affine; using psi^cvx as psi~'
            )
        table = EnvelopeTable(
            hull=hull, s0=s0, theta=theta, density=psi, grid_step=step, nonlinear_tail=nonlinear
        )
    logger.debug('envelope of %s: s0=%s theta=%s', psi.describe(), table.s0, table.theta)
    return table


def psi_c(env: EnvelopeTable, s: ArrayLike) -> np.ndarray:
    """Cut density psi_c(s) = 2 psi~(s / 2).

    Args:
        env: The envelope table.
        s: Densities s >= 0.

    Returns:
        The cut density, with psi_c(0) = 2 psi~(0).

    Raises:
        NegativeArgument: Some s < 0.
    """
    x = np.asarray(s, dtype=float)
    if np.any(x < 0):
        raise NegativeArgument(f'psi_c is defined for s >= 0, got {x.min()}')
    return 2.0 * env(x / 2.0)


def recession_theta(env: EnvelopeTable) -> float:
    """Recession coefficient theta of psi~, which equals that of psi_c."""
    return env.theta
