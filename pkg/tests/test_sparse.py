import numpy as np
import pytest

from meshlessem.errors import SolverError
from meshlessem.sparse import (
    SparseMatrix,
    assemble_from_triplets,
    dominant_eigenvalue,
    dump_matrix,
    matvec,
    prepare_solver,
    solve,
    sparsity_percent,
)


def random_sparse(rng, n, m, density):
    k = max(1, int(density * n * m))
    rows = rng.integers(0, n, k)
    cols = rng.integers(0, m, k)
    vals = rng.standard_normal(k)
    return assemble_from_triplets(n, m, np.stack([rows, cols, vals], axis=1))


def test_triplets_identity():
    m = assemble_from_triplets(2, 2, [(0, 0, 1.0), (1, 1, 1.0)])
    assert np.allclose(m.toarray(), np.eye(2))


def test_triplets_duplicates_summed():
    m = assemble_from_triplets(1, 2, [(0, 1, 2.0), (0, 1, 3.0)])
    assert m.toarray()[0, 1] == 5.0
    assert m.nnz == 1


def test_triplets_order_independent():
    t = [(0, 0, 1.0), (2, 1, -4.0), (1, 2, 0.5), (2, 1, 1.0)]
    a = assemble_from_triplets(3, 3, t)
    b = assemble_from_triplets(3, 3, t[::-1])
    assert np.array_equal(a.toarray(), b.toarray())


def test_triplets_against_dense_accumulation():
    rng = np.random.default_rng(11)
    k = 300
    rows = rng.integers(0, 50, k)
    cols = rng.integers(0, 50, k)
    vals = rng.standard_normal(k)
    dense = np.zeros((50, 50))
    for i, j, v in zip(rows, cols, vals):
        dense[i, j] += v
    m = assemble_from_triplets(50, 50, np.stack([rows, cols, vals], axis=1))
    assert np.allclose(m.toarray(), dense, rtol=0, atol=1e-15)


def test_triplets_out_of_range():
    with pytest.raises(ValueError, match="out of range"):
        assemble_from_triplets(2, 2, [(0, 2, 1.0)])


def test_matvec_identity_and_zero():
    ident = assemble_from_triplets(3, 3, [(i, i, 1.0) for i in range(3)])
    v = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(matvec(ident, v), v)
    zero = assemble_from_triplets(3, 3, [])
    assert np.array_equal(matvec(zero, v), np.zeros(3))


def test_matvec_against_dense():
    rng = np.random.default_rng(5)
    m = random_sparse(rng, 100, 100, 0.1)
    v = rng.standard_normal(100)
    ref = m.toarray() @ v
    got = matvec(m, v)
    denom = np.linalg.norm(ref)
    assert np.linalg.norm(got - ref) <= 1e-13 * denom


def test_matvec_dimension_mismatch():
    m = assemble_from_triplets(3, 4, [(0, 0, 1.0)])
    with pytest.raises(ValueError):
        matvec(m, np.zeros(3))


def test_solver_identity_and_diag():
    ident = assemble_from_triplets(2, 2, [(0, 0, 1.0), (1, 1, 1.0)])
    h = prepare_solver(ident)
    rhs = np.array([4.0, -1.0])
    assert np.allclose(solve(h, rhs), rhs)
    diag = assemble_from_triplets(2, 2, [(0, 0, 2.0), (1, 1, 4.0)])
    assert np.allclose(solve(prepare_solver(diag), np.array([2.0, 8.0])), [1.0, 2.0])


def test_solver_zero_rhs():
    diag = assemble_from_triplets(2, 2, [(0, 0, 2.0), (1, 1, 4.0)])
    assert np.array_equal(solve(prepare_solver(diag), np.zeros(2)), np.zeros(2))


def test_singular_matrix_rejected():
    singular = assemble_from_triplets(1, 1, [(0, 0, 0.0)])
    with pytest.raises(SolverError):
        prepare_solver(singular)


def test_sparse_solve_against_dense_oracle():
    rng = np.random.default_rng(17)
    n = 80
    m = random_sparse(rng, n, n, 0.05)
    # make it safely nonsingular and well conditioned
    m = m.plus(assemble_from_triplets(n, n, [(i, i, 10.0) for i in range(n)]))
    rhs = rng.standard_normal(n)
    x = solve(prepare_solver(m), rhs)
    x_ref = np.linalg.solve(m.toarray(), rhs)
    assert np.allclose(x, x_ref, rtol=1e-8, atol=1e-12)


def test_iterative_solver_matches_direct():
    rng = np.random.default_rng(23)
    n = 60
    m = random_sparse(rng, n, n, 0.05).plus(
        assemble_from_triplets(n, n, [(i, i, 10.0) for i in range(n)])
    )
    rhs = rng.standard_normal(n)
    x_dir = solve(prepare_solver(m, "direct"), rhs)
    x_it = solve(prepare_solver(m, "iterative", tol=1e-10), rhs)
    assert np.linalg.norm(matvec(m, x_it) - rhs) <= 1e-10 * np.linalg.norm(rhs)
    assert np.allclose(x_it, x_dir, rtol=1e-7, atol=1e-10)


def test_residual_contract_random_systems():
    rng = np.random.default_rng(99)
    for _ in range(100):
        n = int(rng.integers(5, 40))
        m = random_sparse(rng, n, n, 0.15).plus(
            assemble_from_triplets(n, n, [(i, i, 8.0) for i in range(n)])
        )
        rhs = rng.standard_normal(n)
        x = solve(prepare_solver(m, tol=1e-10), rhs)
        assert np.linalg.norm(matvec(m, x) - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_dominant_eigenvalue_diag():
    m = assemble_from_triplets(3, 3, [(0, 0, 1.0), (1, 1, 2.0), (2, 2, 5.0)])
    assert dominant_eigenvalue(m, tol=1e-10) == pytest.approx(5.0, rel=1e-8)


def test_dominant_eigenvalue_zero_matrix():
    m = assemble_from_triplets(4, 4, [])
    assert dominant_eigenvalue(m) == 0.0


def test_dominant_eigenvalue_negative_dominant():
    m = assemble_from_triplets(2, 2, [(0, 0, -7.0), (1, 1, 3.0)])
    assert dominant_eigenvalue(m, tol=1e-10) == pytest.approx(7.0, rel=1e-8)


def test_dominant_eigenvalue_against_dense_oracle():
    rng = np.random.default_rng(3)
    for n in (20, 80, 150):
        m = random_sparse(rng, n, n, 0.1)
        sym = m.plus(m.transpose())  # real spectrum
        lam = dominant_eigenvalue(sym, tol=1e-12, max_iter=20000, seed=1)
        ref = np.max(np.abs(np.linalg.eigvals(sym.toarray())))
        assert lam == pytest.approx(ref, rel=1e-6)


def test_dominant_eigenvalue_deterministic():
    rng = np.random.default_rng(8)
    m = random_sparse(rng, 40, 40, 0.2)
    sym = m.plus(m.transpose())
    a = dominant_eigenvalue(sym, seed=4)
    b = dominant_eigenvalue(sym, seed=4)
    assert a == b


def test_complex_pair_reports_oscillation():
    # eigenvalues +-2i make the Rayleigh-quotient estimates oscillate
    m = assemble_from_triplets(2, 2, [(0, 1, 4.0), (1, 0, -1.0)])
    with pytest.raises(SolverError, match="complex pair"):
        dominant_eigenvalue(m, tol=1e-12, max_iter=300)


def test_dump_roundtrip(tmp_path):
    m = assemble_from_triplets(3, 3, [(0, 1, 0.5), (2, 2, -1.25)])
    path = tmp_path / "m.txt"
    dump_matrix(m, path)
    rows = [line.split() for line in path.read_text().splitlines()]
    entries = {(int(i), int(j)): float(v) for i, j, v in rows}
    assert entries == {(0, 1): 0.5, (2, 2): -1.25}


def test_sparsity_percent():
    m = assemble_from_triplets(10, 10, [(i, i, 1.0) for i in range(10)])
    assert sparsity_percent(m) == pytest.approx(90.0)
