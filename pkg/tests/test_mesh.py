import io

import numpy as np
import pytest

from burgersfb.mesh import (
    BoundaryTag,
    InvalidRegionError,
    build_square_mesh,
    build_unit_square_mesh,
    dump_mesh,
    friedrichs_constant,
    refine_uniform,
    tag_boundary,
    validate_mesh,
)

RIGHT_SIDE = ((1.0, 0.0), (1.0, 1.0))


@pytest.mark.parametrize("n", [1, 2, 3, 4, 8])
def test_counts(n):
    mesh = build_unit_square_mesh(n)
    assert mesh.num_vertices == (n + 1) ** 2
    assert mesh.num_triangles == 2 * n * n
    assert mesh.num_boundary_edges == 4 * n
    assert mesh.h == 1.0 / n


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_area_partition(n):
    mesh = build_unit_square_mesh(n)
    areas = mesh.triangle_areas()
    assert np.all(areas > 0.0)
    assert abs(areas.sum() - 1.0) <= 1e-12


def test_validate_suite_meshes():
    for mesh in (
        build_unit_square_mesh(1),
        build_unit_square_mesh(5),
        refine_uniform(build_unit_square_mesh(3)),
        tag_boundary(build_unit_square_mesh(4), RIGHT_SIDE),
        build_square_mesh(2, origin=(1.0, -0.5), side=2.0),
    ):
        validate_mesh(mesh)


def test_boundary_normals_unit_tangent_orthogonal_outward(unit4):
    mesh = unit4
    for (v0, v1), tri, normal in zip(
        mesh.boundary_edges, mesh.boundary_tri, mesh.boundary_normals
    ):
        a, b = mesh.vertices[v0], mesh.vertices[v1]
        tangent = b - a
        assert abs(normal @ tangent) <= 1e-14
        assert abs(np.linalg.norm(normal) - 1.0) <= 1e-14
        centroid = mesh.vertices[mesh.triangles[tri]].mean(axis=0)
        midpoint = 0.5 * (a + b)
        assert normal @ (midpoint - centroid) > 0.0


def test_refine_matches_direct_build():
    fine = refine_uniform(build_unit_square_mesh(2))
    direct = build_unit_square_mesh(4)
    assert fine.num_vertices == direct.num_vertices
    assert fine.num_triangles == direct.num_triangles
    got = {tuple(v) for v in np.round(fine.vertices, 12)}
    want = {tuple(v) for v in np.round(direct.vertices, 12)}
    assert got == want
    assert abs(fine.triangle_areas().sum() - 1.0) <= 1e-12
    assert fine.h == direct.h


def test_refine_embeds_coarse_vertices_and_midpoints():
    coarse = build_unit_square_mesh(3)
    fine = refine_uniform(coarse)
    nv = coarse.num_vertices
    # coarse vertices come first, bit-identical
    assert np.array_equal(fine.vertices[:nv], coarse.vertices)
    parents = fine.refinement_parent.vertex_parents
    mids = 0.5 * (coarse.vertices[parents[nv:, 0]] + coarse.vertices[parents[nv:, 1]])
    assert np.array_equal(fine.vertices[nv:], mids)
    assert fine.refinement_parent.mesh is coarse


def test_refine_inherits_boundary_tags():
    coarse = tag_boundary(build_unit_square_mesh(2), RIGHT_SIDE)
    fine = refine_uniform(coarse)
    for (v0, v1), tag in zip(fine.boundary_edges, fine.boundary_tags):
        on_right = np.allclose(fine.vertices[[v0, v1], 0], 1.0)
        expected = BoundaryTag.DIRICHLET_ZERO if on_right else BoundaryTag.NEUMANN_CONTROL
        assert tag == expected


def test_tag_boundary_region_variants(unit4):
    untouched = tag_boundary(unit4, None)
    assert np.all(untouched.boundary_tags == BoundaryTag.NEUMANN_CONTROL)

    both = tag_boundary(unit4, [RIGHT_SIDE, ((0.0, 0.0), (0.0, 1.0))])
    dirichlet = both.boundary_tags == BoundaryTag.DIRICHLET_ZERO
    assert dirichlet.sum() == 8  # two sides of n=4


def test_tag_boundary_rejects_unmatched_region(unit4):
    with pytest.raises(InvalidRegionError):
        tag_boundary(unit4, ((0.3, 0.3), (0.7, 0.7)))  # interior diagonal
    with pytest.raises(InvalidRegionError):
        tag_boundary(unit4, ((2.0, 0.0), (2.0, 1.0)))  # off the boundary


def test_friedrichs_constant_values():
    # max over the boundary of max(|x|^2, |x|)
    assert friedrichs_constant(build_unit_square_mesh(4)) == 2.0
    small = build_square_mesh(2, side=0.5)
    assert friedrichs_constant(small) == pytest.approx(np.sqrt(0.5), abs=1e-15)
    shifted = build_square_mesh(2, origin=(1.0, 1.0), side=1.0)
    assert friedrichs_constant(shifted) == 8.0


def test_dump_mesh_format_and_determinism(unit4):
    first = io.StringIO()
    dump_mesh(unit4, first)
    text = first.getvalue()
    lines = text.splitlines()
    assert lines[0] == f"vertices {unit4.num_vertices}"
    assert f"triangles {unit4.num_triangles}" in lines
    assert f"boundary_edges {unit4.num_boundary_edges}" in lines

    second = io.StringIO()
    dump_mesh(unit4, second)
    assert second.getvalue() == text


def test_build_rejects_bad_n():
    with pytest.raises(ValueError):
        build_unit_square_mesh(0)
    with pytest.raises(ValueError):
        build_square_mesh(4, side=-1.0)
