import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from fcfv.cases import get_case
from fcfv.generators import generate_structured_mesh
from fcfv.geometry import compute_geometry
from fcfv.linsys import (
    SingularSystemError,
    SparseSystem,
    compress,
    relative_residual,
    solve,
    solve_cg,
    solve_direct,
    symmetry_error,
)
from fcfv.poisson import assemble_global_poisson


def test_duplicates_summed():
    A = compress([0, 0], [0, 0], [1.0, 1.0], 1)
    assert A.nnz == 1 and A[0, 0] == 2.0


def test_empty():
    A = compress([], [], [], 0)
    assert A.shape == (0, 0)
    assert solve_direct(A, np.zeros(0)).x.size == 0


def test_out_of_range():
    with pytest.raises(IndexError):
        compress([3], [0], [1.0], 3)


def test_random_triplets_match_dense(rng):
    r = rng.integers(0, 50, 400)
    c = rng.integers(0, 50, 400)
    v = rng.normal(size=400)
    dense = np.zeros((50, 50))
    np.add.at(dense, (r, c), v)
    np.testing.assert_allclose(compress(r, c, v, 50).toarray(), dense, atol=1e-14)


def test_identity():
    b = np.arange(5.0)
    np.testing.assert_array_equal(solve_direct(sp.identity(5, format="csr"), b).x, b)


def test_two_by_two():
    x = solve_direct(sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]]), np.array([3.0, 3.0])).x
    np.testing.assert_allclose(x, [1.0, 1.0], rtol=1e-15)


def _poisson_system():
    case = get_case("poisson2d")
    mesh = generate_structured_mesh("QUA", 2, 10).retag(case.tag_rule)
    system, _ = assemble_global_poisson(mesh, compute_geometry(mesh), case.problem(1e2))
    return system


def test_poisson_system_matches_dense_oracle():
    system = _poisson_system()
    assert 150 <= system.n <= 300
    x_dense = np.linalg.solve(system.matrix.toarray(), system.rhs)
    res = solve(system)
    assert res.residual <= 1e-10
    assert np.linalg.norm(res.x - x_dense) <= 1e-10 * np.linalg.norm(x_dense)


def test_cg_matches_direct():
    system = _poisson_system()
    np.testing.assert_allclose(solve(system, "cg").x, solve(system, "direct").x, rtol=1e-8, atol=1e-10)


def test_cg_rejects_indefinite():
    with pytest.raises(SingularSystemError):
        solve_cg(sp.csr_matrix([[1.0, 0.0], [0.0, -1.0]]), np.ones(2))


def test_singular_matrix_raises():
    A = sp.csr_matrix([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(SingularSystemError):
        solve_direct(A, np.array([1.0, 0.0]))


def test_saddle_with_zero_block():
    A = sp.csr_matrix([[2.0, 0.0, 1.0], [0.0, 2.0, 1.0], [1.0, 1.0, 0.0]])
    b = np.array([1.0, 2.0, 0.5])
    res = solve(SparseSystem(A, b))
    np.testing.assert_allclose(A @ res.x, b, atol=1e-14)


def test_symmetry_error():
    assert symmetry_error(sp.csr_matrix([[1.0, 2.0], [2.0, 1.0]])) == 0.0
    assert symmetry_error(sp.csr_matrix([[1.0, 2.0], [0.0, 1.0]])) == pytest.approx(1.0)


def test_unknown_method():
    with pytest.raises(ValueError):
        solve(_poisson_system(), method="magic")


def test_matrix_dump(tmp_path):
    system = _poisson_system()
    path = tmp_path / "K.mtx"
    solve(system, dump=path)
    back = scipy.io.mmread(str(path)).tocsr()
    assert abs(back - system.matrix).max() == 0
    assert relative_residual(system.matrix, solve(system).x, system.rhs) <= 1e-10
