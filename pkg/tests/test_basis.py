import numpy as np
import pytest

from fcfv.basis import cell_integrals, evaluate_basis, face_integrals, projection_matrix
from fcfv.generators import generate_structured_mesh
from fcfv.geometry import compute_geometry
from fcfv.mesh import Mesh

from conftest import ALL_FAMILIES


def _face_by_centroid(g, e, point):
    j = np.flatnonzero(np.all(np.isclose(g.cf_centroid[e], point), axis=1) & g.cf_mask[e])
    assert j.size == 1
    return int(j[0])


def test_unit_square_bottom_edge(unit_square):
    g = compute_geometry(unit_square)
    r, _ = face_integrals(unit_square, g)
    j = _face_by_centroid(g, 0, [0.5, 0.0])
    np.testing.assert_allclose(r[0, j], [1.0, 0.0, -0.5], atol=1e-15)


def test_equilateral_edge_measure():
    s3 = np.sqrt(3.0)
    X = np.array([[-0.5, -s3 / 6], [0.5, -s3 / 6], [0.0, s3 / 3]])
    m = Mesh.build(X, ["TRI"], [[0, 1, 2]])
    g = compute_geometry(m)
    r, _ = face_integrals(m, g)
    np.testing.assert_allclose(r[0, :3, 0], 1.0, rtol=1e-14)
    np.testing.assert_allclose(g.centroid[0], 0.0, atol=1e-15)


@pytest.mark.parametrize("ct, nsd", ALL_FAMILIES)
def test_face_centroid_identity(ct, nsd):
    m = generate_structured_mesh(ct, nsd, 2)
    g = compute_geometry(m)
    r, p = face_integrals(m, g)
    np.testing.assert_allclose(r, g.cf_area[..., None] * p, atol=1e-14)


@pytest.mark.parametrize("ct", ["TET", "TRI"])
def test_simplex_first_moments_vanish(ct):
    nsd = 3 if ct == "TET" else 2
    g = compute_geometry(generate_structured_mesh(ct, nsd, 2))
    mom, _ = cell_integrals(g)
    np.testing.assert_allclose(mom[:, 0], g.volume)
    assert np.abs(mom[:, 1:]).max() < 1e-15


def test_unit_cube_constant_source():
    g = compute_geometry(generate_structured_mesh("HEX", 3, 1))
    _, f = cell_integrals(g, lambda x: np.ones(x.shape[:-1]))
    np.testing.assert_allclose(f[0], [1, 0, 0, 0], atol=1e-15)


def test_unit_square_linear_source(unit_square):
    g = compute_geometry(unit_square)
    _, f = cell_integrals(g, lambda x: x[..., 0])
    np.testing.assert_allclose(f[0], [0.5, 1 / 12, 0.0], atol=1e-15)


def test_projection_matrix_structure():
    P = projection_matrix([1.0, 0.0, 0.0], 2)
    np.testing.assert_array_equal(P, [[1, 0, 0, 0, 0, 0], [0, 0, 0, 1, 0, 0]])


def test_projection_of_constant_velocity():
    c = np.array([2.0, -1.0, 0.5])
    coeffs = np.concatenate([[ck, 0, 0, 0] for ck in c])
    P = projection_matrix([1.0, 0.3, -0.2, 0.1], 3)
    np.testing.assert_allclose(P @ coeffs, c)


@pytest.mark.parametrize("ct, nsd", ALL_FAMILIES)
def test_projection_evaluates_linear_field_at_face_centroids(ct, nsd, rng):
    m = generate_structured_mesh(ct, nsd, 2)
    g = compute_geometry(m)
    _, p = face_integrals(m, g)
    a = rng.normal()
    b = rng.normal(size=nsd)
    coeffs = np.concatenate([a + g.centroid @ b[:, None], np.tile(b, (m.n_cells, 1))], axis=1)
    val = np.einsum("efI,eI->ef", p, coeffs)
    exact = a + g.cf_centroid @ b
    assert np.abs(np.where(g.cf_mask, val - exact, 0.0)).max() < 1e-14


def test_velocity_projection_matches_field_values(rng):
    nsd = 2
    A = rng.normal(size=(nsd, nsd))
    c0 = rng.normal(size=nsd)
    xc = np.array([0.3, 0.4])
    xf = np.array([0.8, 0.1])
    coeffs = np.concatenate([[c0[k] + A[k] @ xc, *A[k]] for k in range(nsd)])
    p = evaluate_basis(xf, xc)
    np.testing.assert_allclose(projection_matrix(p, nsd) @ coeffs, c0 + A @ xf, atol=1e-14)


@pytest.mark.parametrize("ct, nsd", ALL_FAMILIES)
def test_quadrature_integrates_linears(ct, nsd, rng):
    g = compute_geometry(generate_structured_mesh(ct, nsd, 2))
    b = rng.normal(size=nsd)
    _, f = cell_integrals(g, lambda x: 1.0 + x @ b)
    exact = g.volume * (1.0 + g.centroid @ b)
    np.testing.assert_allclose(f[:, 0], exact, rtol=1e-13)
