import csv
import json

import numpy as np
import pytest

from fcfv.adapt import (
    HISTORY_FIELDS,
    BisectionMesh,
    adapt_loop,
    error_indicator,
    interpolated_targets,
    refine_triangular_mesh,
    target_size,
    vertex_size_field,
    write_size_field,
)
from fcfv.cases import get_case
from fcfv.generators import generate_structured_mesh
from fcfv.geometry import compute_geometry
from fcfv.mesh import Mesh, MeshError, Tag, neumann_on_plane
from fcfv.poisson import PoissonProblem


@pytest.fixture
def centred_square():
    X = [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]]
    return compute_geometry(Mesh.build(X, ["QUA"], [[0, 1, 2, 3]]))


def test_indicator_zero(centred_square):
    assert error_indicator(centred_square, np.array([[2.0, 0.0, 0.0]]), np.array([2.0]))[0] == 0.0


@pytest.mark.parametrize("delta", [0.3, -1.7])
def test_indicator_constant_offset(centred_square, delta):
    E = error_indicator(centred_square, np.array([[1.0 + delta, 0.0, 0.0]]), np.array([1.0]))
    assert E[0] == pytest.approx(abs(delta), rel=1e-12)


def test_indicator_linear_offset(centred_square):
    E = error_indicator(centred_square, np.array([[0.0, 1.0, 0.0]]), np.array([0.0]))
    assert E[0] == pytest.approx(np.sqrt(1.0 / 12.0), rel=1e-12)


@pytest.mark.parametrize("ct, nsd", [("TRI", 2), ("QUA", 2), ("TET", 3), ("PYR", 3), ("HYBRID", 3)])
def test_indicator_matches_quadrature(ct, nsd, rng):
    from fcfv.errors import LinearField, cell_rms_errors

    g = compute_geometry(generate_structured_mesh(ct, nsd, 2))
    c = rng.normal(size=(len(g.volume), nsd + 1))
    us = rng.normal(size=len(g.volume))
    oracle = cell_rms_errors(g, LinearField(c), lambda x: np.broadcast_to(us[:, None], x.shape[:2]))
    np.testing.assert_allclose(error_indicator(g, c, us), oracle, rtol=1e-12)


def test_indicator_vector_rms(centred_square):
    c = np.array([[[1.3, 0.0, 0.0], [0.0, 0.0, 0.0]]])
    E = error_indicator(centred_square, c, np.array([[1.0, 0.0]]))
    assert E[0] == pytest.approx(np.sqrt(0.09 / 2), rel=1e-12)


def test_target_at_tolerance():
    assert target_size(0.3, 1e-2, 1e-2, 2) == pytest.approx(0.3)


def test_target_exponent_half():
    assert target_size(0.1, 4e-2, 1e-2, 2, cap=10) == pytest.approx(0.05, rel=1e-14)


def test_target_exponent_two_fifths():
    assert target_size(1.0, 1e-2 * 2**2.5, 1e-2, 3, cap=10) == pytest.approx(0.5, rel=1e-14)


def test_target_caps():
    h = np.array([1.0, 1.0, 1.0])
    out = target_size(h, np.array([0.0, 1e-8, 1e4]), 1e-2, 2)
    np.testing.assert_allclose(out, [2.0, 2.0, 0.5])


def test_target_rejects_bad_input():
    with pytest.raises(ValueError):
        target_size(1.0, -1.0, 1e-2, 2)
    with pytest.raises(ValueError):
        target_size(1.0, 1.0, 0.0, 2)


def test_target_clamped_to_minimum():
    assert target_size(1e-6, 1.0, 1e-3, 2, min_size=1e-6) == 1e-6


def _conforming(mesh):
    g = compute_geometry(mesh)
    bc = g.face_centroid[mesh.boundary_faces]
    on_edge = np.isclose(bc, 0.0) | np.isclose(bc, 1.0)
    return bool(on_edge.any(axis=1).all())


def test_uniform_half_target_bisects_twice():
    mesh = generate_structured_mesh("TRI", 2, 4)
    h = compute_geometry(mesh).h
    out = refine_triangular_mesh(mesh, h / 2, interpolate=False)
    assert out.n_cells == 4 * mesh.n_cells
    assert compute_geometry(out).volume.sum() == pytest.approx(1.0)
    assert _conforming(out)


def test_large_target_leaves_mesh_unchanged():
    mesh = generate_structured_mesh("TRI", 2, 4)
    out = refine_triangular_mesh(mesh, 1.01 * compute_geometry(mesh).h)
    np.testing.assert_array_equal(out.vertices, mesh.vertices)
    assert out.n_cells == mesh.n_cells


def test_local_refinement_is_conforming_and_keeps_tags():
    mesh = generate_structured_mesh("TRI", 2, 4).retag(neumann_on_plane(1))
    h = compute_geometry(mesh).h.copy()
    h[:3] /= 8
    out = refine_triangular_mesh(mesh, h)
    assert out.n_cells > mesh.n_cells
    assert _conforming(out)
    g = compute_geometry(out)
    neu = out.face_tags == Tag.NEUMANN
    np.testing.assert_allclose(g.face_centroid[neu, 1], 0.0)
    assert g.face_area[neu].sum() == pytest.approx(1.0)


def test_bisection_requires_triangles():
    with pytest.raises(MeshError):
        BisectionMesh.from_mesh(generate_structured_mesh("QUA", 2, 2))


def _locate(mesh, pts):
    X = mesh.vertices
    T = mesh.cells[:, :3]
    A, B, C = X[T[:, 0]], X[T[:, 1]], X[T[:, 2]]
    v0, v1 = B - A, C - A
    v2 = pts[:, None, :] - A[None]
    d00, d01, d11 = (v0 * v0).sum(-1), (v0 * v1).sum(-1), (v1 * v1).sum(-1)
    d20, d21 = (v2 * v0).sum(-1), (v2 * v1).sum(-1)
    den = d00 * d11 - d01**2
    v = (d11 * d20 - d01 * d21) / den
    w = (d00 * d21 - d01 * d20) / den
    inside = (v > -1e-12) & (w > -1e-12) & (1 - v - w > -1e-12)
    return inside.argmax(axis=1)


def test_adapted_sizes_match_targets():
    case = get_case("gaussian")
    st = adapt_loop(case.problem(1e4), generate_structured_mesh("TRI", 2, 8), 1e-2, max_iter=3)
    target = interpolated_targets(st.mesh, st.h_target)
    new = refine_triangular_mesh(st.mesh, st.h_target)
    g = compute_geometry(new)
    ratio = g.h / target[_locate(st.mesh, g.centroid)]
    assert np.mean((ratio >= 0.5) & (ratio <= 2.0)) >= 0.8


def test_vertex_size_field_of_constant():
    mesh = generate_structured_mesh("QUA", 2, 3)
    np.testing.assert_allclose(vertex_size_field(mesh, np.full(mesh.n_cells, 0.2)), 0.2)


def test_loop_stops_when_tolerance_met():
    mesh = generate_structured_mesh("TRI", 2, 4)
    prob = PoissonProblem(dirichlet=lambda x: np.full(len(x), 2.0), tau=10.0)
    st = adapt_loop(prob, mesh, 1e-2)
    assert st.converged and st.iteration == 1 and st.mesh is mesh


def test_size_field_export_for_quads(tmp_path):
    case = get_case("gaussian")
    mesh = generate_structured_mesh("QUA", 2, 4)
    path = tmp_path / "size.json"
    st = adapt_loop(case.problem(1e4), mesh, 1e-4, size_field_path=path, tag_rule=case.tag_rule)
    assert not st.converged and "size field" in st.stopped
    doc = json.loads(path.read_text())
    assert doc["mesh_checksum"] == mesh.retag(case.tag_rule).checksum()
    assert len(doc["sizes"]) == mesh.n_vertices and min(doc["sizes"]) > 0


def test_history_file(tmp_path):
    case = get_case("gaussian")
    st = adapt_loop(case.problem(1e4), generate_structured_mesh("TRI", 2, 8), 1e-2, max_iter=2, exact=case.u)
    st.write_history(tmp_path / "h.csv")
    rows = list(csv.DictReader(open(tmp_path / "h.csv")))
    assert list(rows[0]) == HISTORY_FIELDS and len(rows) == 2
    assert st.stopped == "max_iter reached"
    assert np.all(st.E >= 0) and np.all(st.h_target > 0)


def test_write_size_field_roundtrip(tmp_path):
    mesh = generate_structured_mesh("TRI", 2, 2)
    doc = write_size_field(tmp_path / "s.json", mesh, np.full(mesh.n_cells, 0.1), 3)
    assert json.loads((tmp_path / "s.json").read_text()) == doc
    assert doc["iteration"] == 3
