# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

"""Linear-elastic bulk energy on film-plus-substrate domains.

The film occupies 0 <= y <= h(x) over a Lipschitz profile and sits on a substrate strip
-d <= y < 0. The mismatch strain is t e1 (x) e1 in the film and zero in the substrate.
Energies use first-order triangles on a terrain-following structured mesh and the
equilibrium displacement is found with preconditioned conjugate gradients.
"""

import logging
import math
import numpy as np
from dataclasses import dataclass
from microsoft.epirelax.errors import (
    DegenerateResolution,
    InvalidElasticity,
    NoDirichletNodes,
    ProfileHasCuts,
    SizeMismatch,
    SolverDivergence,
)
from microsoft.epirelax.models import BoundaryCondition
from microsoft.epirelax.profile import Profile
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, cg
from typing import Dict, List, Optional, Tuple


logger = logging.getLogger(__name__)

# Node flags, combined bitwise
BOTTOM = 1
LATERAL = 2
SURFACE = 4

MIN_TRIANGLE_AREA = 1e-14
CG_RTOL = 1e-11
RESIDUAL_TOLERANCE = 1e-10


@dataclass(frozen=True)
class ElasticityTensor:
    """Isotropic elasticity tensor with a mismatch magnitude.

    Attributes:
        lam: First Lamé parameter, >= 0.
        mu: Shear modulus, > 0.
        t: Mismatch strain magnitude, >= 0.
    """

    lam: float = 1.0
    mu: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        """Validate positivity."""
        if not self.mu > 0:
            raise InvalidElasticity(f'shear modulus must be positive, got {self.mu}')
        if not self.lam >= 0:
            raise InvalidElasticity(f'first Lamé parameter must be non-negative, got {self.lam}')
        if not self.t >= 0:
            raise InvalidElasticity(f'mismatch must be non-negative, got {self.t}')

    @property
    def voigt(self) -> np.ndarray:
        """Stiffness in Voigt notation for (e_xx, e_yy, 2 e_xy)."""
        lam, mu = self.lam, self.mu
        return np.array([[2 * mu + lam, lam, 0.0], [lam, 2 * mu + lam, 0.0], [0.0, 0.0, mu]])

    def density(self, strain: np.ndarray) -> float:
        """W(A) = mu |A_sym|^2 + lam / 2 tr(A)^2 for a 2 x 2 matrix A."""
        a = np.asarray(strain, dtype=float)
        sym = 0.5 * (a + a.T)
        return float(self.mu * np.sum(sym * sym) + 0.5 * self.lam * np.trace(sym) ** 2)


def mismatch_strain(y: float, C: ElasticityTensor) -> np.ndarray:
    """Reference strain t e1 (x) e1 for y >= 0, zero below."""
    e0 = np.zeros((2, 2))
    if y >= 0:
        e0[0, 0] = C.t
    return e0


@dataclass(frozen=True, eq=False)
class FilmMesh:
    """Triangulation of the film and substrate.

    Attributes:
        nodes: (n, 2) node coordinates.
        triangles: (m, 3) counterclockwise node indices.
        flags: Per-node bit flags BOTTOM, LATERAL and SURFACE.
        depth: Substrate depth d.
        nx: Number of columns.
        ny: Layers in the film and in the substrate.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    flags: np.ndarray
    depth: float
    nx: int
    ny: int

    @property
    def areas(self) -> np.ndarray:
        """Triangle areas."""
        p = self.nodes[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    @property
    def centroids(self) -> np.ndarray:
        """Triangle centroids."""
        return self.nodes[self.triangles].mean(axis=1)


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Per-node displacement vectors.

    Attributes:
        values: (n, 2) displacements.
        iterations: Conjugate-gradient iterations used, 0 when not solved.
        residual: Relative residual of the solve.
        bc: Boundary condition the field was solved with.
    """

    values: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    bc: Optional[BoundaryCondition] = None


def mesh_film(p: Profile, d: float, nx: int, ny: int) -> FilmMesh:
    """Build a terrain-following mesh of the film over a Lipschitz profile.

    Columns are uniform; each column has ny substrate intervals on [-d, 0] and ny film
    intervals on [0, h(x)]. Film nodes of a column with h = 0 collapse onto its y = 0 node.
    Quads are split along the shorter diagonal, the bottom-left to top-right one on ties,
    and triangles of area <= 1e-14 are dropped.

    Args:
        p: Lipschitz profile.
        d: Substrate depth.
        nx: Columns.
        ny: Layers in film and substrate.

    Returns:
        The mesh.

    Raises:
        ProfileHasCuts: p has jumps or cuts.
        DegenerateResolution: nx < 2, ny < 2 or d <= 0.
    """
    if not p.is_lipschitz:
        raise ProfileHasCuts('only profiles without jumps or cuts can be meshed')
    if nx < 2 or ny < 2 or not d > 0:
        raise DegenerateResolution(f'mesh needs nx, ny >= 2 and d > 0, got {nx}, {ny}, {d}')

    xs = np.linspace(p.a, p.b, nx + 1)
    hs = p.evaluate(xs)
    levels = 2 * ny + 1
    index = np.empty((nx + 1, levels), dtype=np.int64)
    coords: List[Tuple[float, float]] = []
    flags: List[int] = []
    for i, (x, h) in enumerate(zip(xs, hs)):
        lateral = LATERAL if i in (0, nx) else 0
        for level in range(levels):
            if level <= ny:
                y = -d + d * level / ny
            elif h <= MIN_TRIANGLE_AREA:
                index[i, level] = index[i, ny]
                continue
            else:
                y = h * (level - ny) / ny
            index[i, level] = len(coords)
            coords.append((float(x), float(y)))
            flag = lateral
            if level == 0:
                flag |= BOTTOM
            if level == 2 * ny or (level == ny and h <= MIN_TRIANGLE_AREA):
                flag |= SURFACE
            flags.append(flag)
    nodes = np.array(coords)

    triangles: List[Tuple[int, int, int]] = []
    for i in range(nx):
        for level in range(levels - 1):
            p00, p10 = index[i, level], index[i + 1, level]
            p01, p11 = index[i, level + 1], index[i + 1, level + 1]
            d1 = np.hypot(*(nodes[p11] - nodes[p00]))
            d2 = np.hypot(*(nodes[p01] - nodes[p10]))
            if d1 <= d2 * (1 + 1e-12):
                triangles += [(p00, p10, p11), (p00, p11, p01)]
            else:
                triangles += [(p00, p10, p01), (p10, p11, p01)]
    tri = np.array(triangles, dtype=np.int64)
    pts = nodes[tri]
    signed = 0.5 * (
        (pts[:, 1, 0] - pts[:, 0, 0]) * (pts[:, 2, 1] - pts[:, 0, 1])
        - (pts[:, 2, 0] - pts[:, 0, 0]) * (pts[:, 1, 1] - pts[:, 0, 1])
    )
    tri[signed < 0] = tri[signed < 0][:, [0, 2, 1]]
    tri = tri[np.abs(signed) > MIN_TRIANGLE_AREA]
    logger.debug('meshed film: %d nodes, %d triangles', len(nodes), len(tri))
    return FilmMesh(nodes=nodes, triangles=tri, flags=np.array(flags), depth=float(d), nx=nx, ny=ny)


def _strain_operators(m: FilmMesh) -> Tuple[np.ndarray, np.ndarray]:
    # (triangles, 3, 6) maps element dofs (u1, v1, u2, v2, u3, v3) to Voigt strain.
    p = m.nodes[m.triangles]
    area = m.areas
    b = np.stack([p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], axis=1)
    c = np.stack([p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], axis=1)
    B = np.zeros((len(area), 3, 6))
    B[:, 0, 0::2] = b
    B[:, 1, 1::2] = c
    B[:, 2, 0::2] = c
    B[:, 2, 1::2] = b
    return B / (2.0 * area)[:, None, None], area


def _reference_strains(m: FilmMesh, C: ElasticityTensor) -> np.ndarray:
    e0 = np.zeros((len(m.triangles), 3))
    e0[m.centroids[:, 1] >= 0, 0] = C.t
    return e0


def _element_dofs(m: FilmMesh) -> np.ndarray:
    return np.stack([2 * m.triangles, 2 * m.triangles + 1], axis=2).reshape(-1, 6)


def elastic_energy(m: FilmMesh, v: DisplacementField, C: ElasticityTensor) -> float:
    """Sum over triangles of area * W(E(v) - E0(centroid)).

    Raises:
        SizeMismatch: v does not have one 2-vector per node.
    """
    values = np.asarray(v.values, dtype=float)
    if values.shape != m.nodes.shape:
        raise SizeMismatch(f'displacement has shape {values.shape}, mesh has {m.nodes.shape}')
    if not np.all(np.isfinite(values)):
        raise SizeMismatch('displacement has non-finite entries')
    B, area = _strain_operators(m)
    local = values.ravel()[_element_dofs(m)]
    e = np.einsum('tij,tj->ti', B, local) - _reference_strains(m, C)
    w = 0.5 * np.einsum('ti,ij,tj->t', e, C.voigt, e)
    return math.fsum((area * w).tolist())


def assemble(m: FilmMesh, C: ElasticityTensor) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """Stiffness matrix K and load f with energy(v) = v K v / 2 - f v + const."""
    B, area = _strain_operators(m)
    D = C.voigt
    ke = area[:, None, None] * np.einsum('tki,kl,tlj->tij', B, D, B)
    fe = area[:, None] * np.einsum('tki,kl,tl->ti', B, D, _reference_strains(m, C))
    dofs = _element_dofs(m)
    n = 2 * len(m.nodes)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    K = sparse.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    f = np.bincount(dofs.ravel(), weights=fe.ravel(), minlength=n)
    return K, f


def dirichlet_nodes(m: FilmMesh, bc: BoundaryCondition) -> np.ndarray:
    """Indices of nodes fixed by a boundary condition."""
    mask = BOTTOM if bc is BoundaryCondition.CLAMPED_BOTTOM else BOTTOM | LATERAL
    return np.flatnonzero(m.flags & mask)


def equilibrium(
    m: FilmMesh,
    C: ElasticityTensor,
    bc: BoundaryCondition = BoundaryCondition.CLAMPED_BOTTOM,
) -> DisplacementField:
    """Minimise the elastic energy with v = 0 on the Dirichlet nodes.

    Uses conjugate gradients with a Jacobi preconditioner, then checks the true residual.

    Raises:
        NoDirichletNodes: The boundary condition fixes no node.
        SolverDivergence: The residual exceeds 1e-10 relative after 20 n iterations.
    """
    fixed = dirichlet_nodes(m, bc)
    if fixed.size == 0:
        raise NoDirichletNodes(f'boundary condition {bc.value} fixes no node')
    K, f = assemble(m, C)
    n = K.shape[0]
    free = np.setdiff1d(np.arange(n), np.concatenate([2 * fixed, 2 * fixed + 1]))
    values = np.zeros(n)
    rhs = f[free]
    scale = float(np.linalg.norm(rhs))
    if scale == 0.0:
        return DisplacementField(values=values.reshape(-1, 2), bc=bc)

    A = K[free][:, free]
    inverse_diagonal = 1.0 / A.diagonal()
    M = LinearOperator(A.shape, matvec=lambda r: inverse_diagonal * r, dtype=float)
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    solution, info = cg(A, rhs, rtol=CG_RTOL, atol=0.0, maxiter=20 * len(free), M=M, callback=count)
    residual = float(np.linalg.norm(rhs - A @ solution)) / scale
    if info < 0 or residual > RESIDUAL_TOLERANCE:
        raise SolverDivergence(
            f'conjugate gradients stopped at relative residual {residual:.3e} after {iterations} iterations'
        )
    values[free] = solution
    logger.debug('equilibrium: %d iterations, residual %.3e', iterations, residual)
    return DisplacementField(values=values.reshape(-1, 2), iterations=iterations, residual=residual, bc=bc)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


Table = Tuple[List[str], List[tuple]]


def export_mesh(m: FilmMesh, v: Optional[DisplacementField] = None) -> Dict[str, Table]:
    """Tabulate a mesh, and optionally a displacement, for CSV output.

    Returns:
        Tables keyed 'nodes' (id, x, y, flag), 'triangles' (id, n0, n1, n2) and, when v
        is given, 'displacement' (id, vx, vy).

    Raises:
        SizeMismatch: v does not match the mesh.
    """
    tables: Dict[str, Table] = {
        'nodes': (
            ['id', 'x', 'y', 'flag'],
            [(i, float(x), float(y), int(f)) for i, ((x, y), f) in enumerate(zip(m.nodes, m.flags))],
        ),
        'triangles': (
            ['id', 'n0', 'n1', 'n2'],
            [(i, int(a), int(b), int(c)) for i, (a, b, c) in enumerate(m.triangles)],
        ),
    }
    if v is not None:
        if v.values.shape != m.nodes.shape:
            raise SizeMismatch(f'displacement of shape {v.values.shape} on {len(m.nodes)} nodes')
        tables['displacement'] = (
            ['id', 'vx', 'vy'],
            [(i, float(a), float(b)) for i, (a, b) in enumerate(v.values)],
        )
    return tables
