"""P1 finite element assembly on triangulations.

Element integrals use a six-point interior rule exact to degree 4 and a
three-point Gauss rule on boundary edges exact to degree 5, so every
polynomial integrand appearing in the discrete forms (quadratic convection
terms, cubic and quartic boundary traces) is integrated exactly.  Matrices
are assembled cell-by-cell with vectorized numpy and returned as scipy CSR.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .mesh import BoundaryTag, Mesh
from .sparse import _csr, solve_spd

__all__ = [
    "BoundaryQuadrature",
    "FeField",
    "FieldNorms",
    "NonNestedMeshError",
    "Quadrature",
    "apply_dirichlet",
    "assemble_boundary_mass",
    "assemble_convection_by_gradient",
    "assemble_convection_by_transport",
    "assemble_mass",
    "assemble_stiffness",
    "boundary_cubic_jacobian",
    "boundary_cubic_residual",
    "boundary_load",
    "boundary_quadrature",
    "convection_form",
    "default_quadrature",
    "dirichlet_vertex_indices",
    "discrete_laplacian",
    "elliptic_projection",
    "h1_seminorm",
    "integrate",
    "interpolate",
    "l2_norm",
    "load_vector",
    "norms",
    "prolong",
    "trace_values",
]


class NonNestedMeshError(ValueError):
    """Raised when a field transfer is requested between unrelated meshes."""


@dataclass(frozen=True)
class Quadrature:
    """Interior and edge quadrature rules on reference elements.

    ``interior_points`` holds barycentric coordinates on the reference
    triangle and ``interior_weights`` sums to its measure 1/2.
    ``edge_points`` are parameters on [0, 1] and ``edge_weights`` sums to 1.
    """

    interior_points: np.ndarray
    interior_weights: np.ndarray
    edge_points: np.ndarray
    edge_weights: np.ndarray


def _default_quadrature() -> Quadrature:
    # degree-4 six-point triangle rule (two symmetric orbits)
    a1, b1, w1 = 0.81684757298045851308, 0.09157621350977074346, 0.10995174365532186764
    a2, b2, w2 = 0.10810301816807022736, 0.44594849091596488632, 0.22338158967801146570
    pts = np.array(
        [
            [a1, b1, b1],
            [b1, a1, b1],
            [b1, b1, a1],
            [a2, b2, b2],
            [b2, a2, b2],
            [b2, b2, a2],
        ]
    )
    wts = 0.5 * np.array([w1, w1, w1, w2, w2, w2])
    # degree-5 three-point Gauss rule mapped to [0, 1]
    off = 0.5 * np.sqrt(0.6)
    edge_pts = np.array([0.5 - off, 0.5, 0.5 + off])
    edge_wts = np.array([5.0, 8.0, 5.0]) / 18.0
    return Quadrature(pts, wts, edge_pts, edge_wts)


_QUADRATURE = _default_quadrature()


def default_quadrature() -> Quadrature:
    """The rule pair used by every assembly routine in this module."""
    return _QUADRATURE


@dataclass(frozen=True, eq=False)
class FeField:
    """Nodal P1 field: one value per mesh vertex."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (self.mesh.num_vertices,):
            raise ValueError(
                f"field has {values.shape} values for "
                f"{self.mesh.num_vertices} vertices"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")


class FieldNorms(NamedTuple):
    l2: float
    h1_semi: float
    boundary_l2: float
    boundary_l4: float


def _geometry(mesh: Mesh):
    """Areas and constant basis gradients per triangle.

    Returns (areas, gx, gy) with gx[e, i] the x-derivative of local basis
    function i on element e.
    """
    v = mesh.vertices
    t = mesh.triangles
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    areas = 0.5 * det
    gx = np.stack([p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]], axis=1)
    gy = np.stack([p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]], axis=1)
    return areas, gx / det[:, None], gy / det[:, None]


def _element_triplets(mesh: Mesh, element_matrices: np.ndarray):
    t = mesh.triangles
    nt = t.shape[0]
    rows = np.broadcast_to(t[:, :, None], (nt, 3, 3)).ravel()
    cols = np.broadcast_to(t[:, None, :], (nt, 3, 3)).ravel()
    n = mesh.num_vertices
    return _csr(rows, cols, element_matrices.ravel(), (n, n))


_MASS_PATTERN = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Mass matrix: entries are exact integrals of basis products.

    Each element block is ``area / 12 * [[2, 1, 1], [1, 2, 1], [1, 1, 2]]``.
    """
    areas, _, _ = _geometry(mesh)
    elements = areas[:, None, None] * _MASS_PATTERN[None, :, :]
    return _element_triplets(mesh, elements)


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """Stiffness matrix of gradient inner products; constants span its kernel."""
    areas, gx, gy = _geometry(mesh)
    elements = areas[:, None, None] * (
        gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :]
    )
    return _element_triplets(mesh, elements)


def assemble_convection_by_transport(v: FeField) -> sp.csr_matrix:
    """Matrix of ``integral of v (d/dx1 + d/dx2) phi_j phi_i``.

    The coefficient ``v`` multiplies the transported basis function; the
    integrand is quadratic per element, so the interior rule is exact.
    """
    mesh = v.mesh
    areas, gx, gy = _geometry(mesh)
    lam = _QUADRATURE.interior_points
    wq = _QUADRATURE.interior_weights
    vk = v.values[mesh.triangles]
    vq = vk @ lam.T
    s = gx + gy
    det = 2.0 * areas
    coeff = (vq * wq[None, :]) @ lam
    elements = det[:, None, None] * coeff[:, :, None] * s[:, None, :]
    return _element_triplets(mesh, elements)


def assemble_convection_by_gradient(v: FeField) -> sp.csr_matrix:
    """Matrix of ``integral of (d/dx1 + d/dx2) v phi_j phi_i``.

    The directional derivative of ``v`` is constant per element, so each
    block is that constant times the element mass block.
    """
    mesh = v.mesh
    areas, gx, gy = _geometry(mesh)
    s = gx + gy
    sv = np.sum(v.values[mesh.triangles] * s, axis=1)
    elements = (sv * areas)[:, None, None] * _MASS_PATTERN[None, :, :]
    return _element_triplets(mesh, elements)


def convection_form(v: FeField, w: FeField, z: FeField) -> float:
    """Trilinear convection pairing ``integral of v (dw/dx1 + dw/dx2) z``."""
    if w.mesh is not v.mesh or z.mesh is not v.mesh:
        raise ValueError("convection_form requires fields on one mesh")
    mesh = v.mesh
    areas, gx, gy = _geometry(mesh)
    lam = _QUADRATURE.interior_points
    wq = _QUADRATURE.interior_weights
    tri = mesh.triangles
    vq = v.values[tri] @ lam.T
    zq = z.values[tri] @ lam.T
    sw = np.sum(w.values[tri] * (gx + gy), axis=1)
    per_element = ((vq * zq) @ wq) * sw * (2.0 * areas)
    return float(np.sum(per_element))


def _active_mask(mesh: Mesh, tags) -> np.ndarray:
    if tags is None:
        return np.ones(mesh.num_boundary_edges, dtype=bool)
    if isinstance(tags, BoundaryTag):
        tags = (tags,)
    wanted = {int(t) for t in tags}
    return np.isin(mesh.boundary_tags, sorted(wanted))


@dataclass(frozen=True, eq=False)
class BoundaryQuadrature:
    """Edge quadrature data restricted to a tag subset.

    ``basis`` holds the two endpoint basis functions evaluated at the edge
    quadrature parameters, shape (2, points); ``index`` maps rows back into
    the mesh's full boundary edge list.
    """

    edges: np.ndarray
    lengths: np.ndarray
    normals: np.ndarray
    points: np.ndarray
    basis: np.ndarray
    weights: np.ndarray
    index: np.ndarray


def boundary_quadrature(mesh: Mesh, tags=None) -> BoundaryQuadrature:
    mask = _active_mask(mesh, tags)
    idx = np.flatnonzero(mask)
    edges = mesh.boundary_edges[idx]
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    t = _QUADRATURE.edge_points
    points = a[:, None, :] * (1.0 - t)[None, :, None] + b[:, None, :] * t[None, :, None]
    basis = np.stack([1.0 - t, t], axis=0)
    return BoundaryQuadrature(
        edges=edges,
        lengths=np.linalg.norm(b - a, axis=1),
        normals=mesh.boundary_normals[idx],
        points=points,
        basis=basis,
        weights=_QUADRATURE.edge_weights,
        index=idx,
    )


def trace_values(w: FeField, tags=None) -> np.ndarray:
    """Field values at the edge quadrature points, shape (edges, points)."""
    bq = boundary_quadrature(w.mesh, tags)
    wa = w.values[bq.edges[:, 0]]
    wb = w.values[bq.edges[:, 1]]
    t = _QUADRATURE.edge_points
    return wa[:, None] * (1.0 - t)[None, :] + wb[:, None] * t[None, :]


def _coefficient_at_edge_quadrature(mesh, g, bq: BoundaryQuadrature) -> np.ndarray:
    """Coerce scalar / FeField / callable / array coefficients to (ne, nq)."""
    ne, nq = bq.points.shape[0], bq.points.shape[1]
    if isinstance(g, FeField):
        if g.mesh is not mesh:
            raise ValueError("coefficient field lives on a different mesh")
        wa = g.values[bq.edges[:, 0]]
        wb = g.values[bq.edges[:, 1]]
        t = _QUADRATURE.edge_points
        return wa[:, None] * (1.0 - t)[None, :] + wb[:, None] * t[None, :]
    if callable(g):
        return np.asarray(
            g(bq.points[:, :, 0], bq.points[:, :, 1]), dtype=float
        ) * np.ones((ne, nq))
    arr = np.asarray(g, dtype=float)
    if arr.ndim == 0:
        return np.full((ne, nq), float(arr))
    if arr.shape != (ne, nq):
        raise ValueError(
            f"coefficient array has shape {arr.shape}, expected ({ne}, {nq})"
        )
    return arr


def _edge_triplets(mesh: Mesh, bq: BoundaryQuadrature, blocks: np.ndarray):
    ne = bq.edges.shape[0]
    rows = np.broadcast_to(bq.edges[:, :, None], (ne, 2, 2)).ravel()
    cols = np.broadcast_to(bq.edges[:, None, :], (ne, 2, 2)).ravel()
    n = mesh.num_vertices
    return _csr(rows, cols, blocks.ravel(), (n, n))


def assemble_boundary_mass(mesh: Mesh, g, tags=None) -> sp.csr_matrix:
    """Boundary matrix of ``integral over tagged edges of g phi_j phi_i``.

    The coefficient ``g`` may be a scalar, a nodal field (traced onto the
    edges), a callable of coordinates, or precomputed values of shape
    (active edges, quadrature points).  Evaluation is pointwise at the
    quadrature nodes, so non-smooth coefficients such as absolute values of
    a field are supported without edge splitting.
    """
    bq = boundary_quadrature(mesh, tags)
    if bq.edges.shape[0] == 0:
        n = mesh.num_vertices
        return sp.csr_matrix((n, n))
    gq = _coefficient_at_edge_quadrature(mesh, g, bq)
    wq = bq.weights
    blocks = np.einsum("q,eq,iq,jq->eij", wq, gq, bq.basis, bq.basis)
    blocks *= bq.lengths[:, None, None]
    return _edge_triplets(mesh, bq, blocks)


def boundary_load(mesh: Mesh, g, tags=None) -> np.ndarray:
    """Vector of ``integral over tagged edges of g phi_i``.

    Callables receive ``(x, y, nx, ny)`` so normal-dependent fluxes can be
    expressed directly.
    """
    bq = boundary_quadrature(mesh, tags)
    out = np.zeros(mesh.num_vertices)
    if bq.edges.shape[0] == 0:
        return out
    if callable(g):
        ne, nq = bq.points.shape[0], bq.points.shape[1]
        gq = np.asarray(
            g(
                bq.points[:, :, 0],
                bq.points[:, :, 1],
                np.broadcast_to(bq.normals[:, None, 0], (ne, nq)),
                np.broadcast_to(bq.normals[:, None, 1], (ne, nq)),
            ),
            dtype=float,
        ) * np.ones((ne, nq))
    else:
        gq = _coefficient_at_edge_quadrature(mesh, g, bq)
    contrib = np.einsum("q,eq,iq->ei", bq.weights, gq, bq.basis)
    contrib *= bq.lengths[:, None]
    np.add.at(out, bq.edges[:, 0], contrib[:, 0])
    np.add.at(out, bq.edges[:, 1], contrib[:, 1])
    return out


def boundary_cubic_residual(w: FeField, tags=None) -> np.ndarray:
    """Vector of ``integral over tagged edges of w^3 phi_i`` (exact)."""
    mesh = w.mesh
    bq = boundary_quadrature(mesh, tags)
    out = np.zeros(mesh.num_vertices)
    if bq.edges.shape[0] == 0:
        return out
    tr = trace_values(w, tags)
    contrib = np.einsum("q,eq,iq->ei", bq.weights, tr**3, bq.basis)
    contrib *= bq.lengths[:, None]
    np.add.at(out, bq.edges[:, 0], contrib[:, 0])
    np.add.at(out, bq.edges[:, 1], contrib[:, 1])
    return out


def boundary_cubic_jacobian(w: FeField, tags=None) -> sp.csr_matrix:
    """Derivative of :func:`boundary_cubic_residual`: entries 3 w^2 phi_j phi_i."""
    tr = trace_values(w, tags)
    return assemble_boundary_mass(w.mesh, 3.0 * tr**2, tags)


def load_vector(mesh: Mesh, f) -> np.ndarray:
    """Vector of ``integral of f phi_i`` by the interior rule."""
    areas, _, _ = _geometry(mesh)
    lam = _QUADRATURE.interior_points
    wq = _QUADRATURE.interior_weights
    tri = mesh.triangles
    v = mesh.vertices
    nt, nq = tri.shape[0], lam.shape[0]
    px = v[tri][:, :, 0] @ lam.T
    py = v[tri][:, :, 1] @ lam.T
    if callable(f):
        fq = np.asarray(f(px, py), dtype=float) * np.ones((nt, nq))
    else:
        fq = np.full((nt, nq), float(f))
    contrib = np.einsum("q,eq,qi->ei", wq, fq, lam) * (2.0 * areas)[:, None]
    out = np.zeros(mesh.num_vertices)
    np.add.at(out, tri.ravel(), contrib.ravel())
    return out


def integrate(mesh: Mesh, f) -> float:
    """Integral of a callable (or constant) over the mesh by the interior rule."""
    areas, _, _ = _geometry(mesh)
    lam = _QUADRATURE.interior_points
    wq = _QUADRATURE.interior_weights
    tri = mesh.triangles
    v = mesh.vertices
    nt, nq = tri.shape[0], lam.shape[0]
    if callable(f):
        px = v[tri][:, :, 0] @ lam.T
        py = v[tri][:, :, 1] @ lam.T
        fq = np.asarray(f(px, py), dtype=float) * np.ones((nt, nq))
    else:
        fq = np.full((nt, nq), float(f))
    return float(np.sum((fq @ wq) * 2.0 * areas))


def discrete_laplacian(mesh: Mesh, w: FeField, flux=None) -> FeField:
    """Mass-inverted Laplacian with a prescribed normal flux.

    Returns the nodal field ``d`` solving ``M d = flux load - K w``, the
    variational image of the Laplacian when the normal derivative of ``w``
    equals ``flux`` (zero when omitted).
    """
    if w.mesh is not mesh:
        raise ValueError("field does not live on the given mesh")
    rhs = -(assemble_stiffness(mesh) @ w.values)
    if flux is not None:
        rhs = rhs + boundary_load(mesh, flux)
    d = solve_spd(assemble_mass(mesh), rhs, tol=1e-12)
    return FeField(mesh, d)


def l2_norm(w: FeField) -> float:
    m = assemble_mass(w.mesh)
    return float(np.sqrt(max(w.values @ (m @ w.values), 0.0)))


def h1_seminorm(w: FeField) -> float:
    k = assemble_stiffness(w.mesh)
    return float(np.sqrt(max(w.values @ (k @ w.values), 0.0)))


def boundary_l2_norm(w: FeField, tags=None) -> float:
    bq = boundary_quadrature(w.mesh, tags)
    if bq.edges.shape[0] == 0:
        return 0.0
    tr = trace_values(w, tags)
    val = np.sum((tr**2 @ bq.weights) * bq.lengths)
    return float(np.sqrt(max(val, 0.0)))


def boundary_l4_norm(w: FeField, tags=None) -> float:
    bq = boundary_quadrature(w.mesh, tags)
    if bq.edges.shape[0] == 0:
        return 0.0
    tr = trace_values(w, tags)
    val = np.sum((tr**4 @ bq.weights) * bq.lengths)
    return float(max(val, 0.0) ** 0.25)


def norms(w: FeField, tags=None) -> FieldNorms:
    """L2 norm, H1 seminorm, and boundary L2/L4 norms of a nodal field."""
    return FieldNorms(
        l2=l2_norm(w),
        h1_semi=h1_seminorm(w),
        boundary_l2=boundary_l2_norm(w, tags),
        boundary_l4=boundary_l4_norm(w, tags),
    )


def interpolate(f, mesh: Mesh) -> FeField:
    """Nodal interpolant of a callable (or constant) on the mesh vertices."""
    if callable(f):
        values = np.asarray(
            f(mesh.vertices[:, 0], mesh.vertices[:, 1]), dtype=float
        )
        values = np.broadcast_to(values, (mesh.num_vertices,)).copy()
    else:
        values = np.full(mesh.num_vertices, float(f))
    return FeField(mesh, values)


def prolong(coarse: FeField, fine_mesh: Mesh) -> FeField:
    """Exact transfer of a nodal field onto a refinement descendant.

    Walks the refinement ancestry of ``fine_mesh`` down to the field's mesh
    and averages parent vertex pairs level by level; P1 fields are linear on
    parent edges, so the transfer is exact.  Requesting a transfer onto the
    field's own mesh returns a copy.
    """
    chain = []
    m = fine_mesh
    while m is not coarse.mesh:
        if m.refinement_parent is None:
            raise NonNestedMeshError(
                "target mesh is not a refinement descendant of the field's mesh"
            )
        chain.append(m)
        m = m.refinement_parent.mesh
    values = coarse.values.copy()
    for mesh_level in reversed(chain):
        pairs = mesh_level.refinement_parent.vertex_parents
        values = 0.5 * (values[pairs[:, 0]] + values[pairs[:, 1]])
    return FeField(fine_mesh, values)


def elliptic_projection(mesh: Mesh, f, fx, fy, shift: float = 1.0) -> FeField:
    """Shifted elliptic projection of an analytic function.

    Solves ``(K + shift M) u = b`` with
    ``b_i = integral of grad f . grad phi_i + shift f phi_i``, using the
    supplied first derivatives ``fx, fy``.  With ``shift > 0`` the system is
    positive definite without boundary conditions.
    """
    if shift <= 0.0:
        raise ValueError("projection shift must be positive")
    areas, gx, gy = _geometry(mesh)
    lam = _QUADRATURE.interior_points
    wq = _QUADRATURE.interior_weights
    tri = mesh.triangles
    v = mesh.vertices
    nt, nq = tri.shape[0], lam.shape[0]
    px = v[tri][:, :, 0] @ lam.T
    py = v[tri][:, :, 1] @ lam.T
    ones = np.ones((nt, nq))
    fq = np.asarray(f(px, py), dtype=float) * ones
    fxq = np.asarray(fx(px, py), dtype=float) * ones
    fyq = np.asarray(fy(px, py), dtype=float) * ones
    det = (2.0 * areas)[:, None]
    # gradient part: grad phi_i constant per element
    grad_part = (
        gx * ((fxq * wq[None, :]).sum(axis=1) * 2.0 * areas)[:, None]
        + gy * ((fyq * wq[None, :]).sum(axis=1) * 2.0 * areas)[:, None]
    )
    mass_part = shift * np.einsum("q,eq,qi->ei", wq, fq, lam) * det
    b = np.zeros(mesh.num_vertices)
    np.add.at(b, tri.ravel(), (grad_part + mass_part).ravel())
    a = assemble_stiffness(mesh) + shift * assemble_mass(mesh)
    return FeField(mesh, solve_spd(sp.csr_matrix(a), b, tol=1e-12))


def dirichlet_vertex_indices(mesh: Mesh) -> np.ndarray:
    """Sorted vertex indices lying on DIRICHLET_ZERO edges."""
    mask = mesh.boundary_tags == int(BoundaryTag.DIRICHLET_ZERO)
    return np.unique(mesh.boundary_edges[mask])


def apply_dirichlet(matrix: sp.spmatrix, dofs: np.ndarray) -> sp.csr_matrix:
    """Eliminate rows and columns of constrained dofs, placing unit diagonals."""
    n = matrix.shape[0]
    dofs = np.asarray(dofs, dtype=int)
    if dofs.size == 0:
        return sp.csr_matrix(matrix)
    keep = np.ones(n)
    keep[dofs] = 0.0
    selector = sp.diags(keep)
    pinned = np.zeros(n)
    pinned[dofs] = 1.0
    out = selector @ matrix @ selector + sp.diags(pinned)
    return sp.csr_matrix(out)
