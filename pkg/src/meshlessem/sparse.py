"""Minimal sparse-matrix layer: assembly, products, solves, dominant eigenvalue.

Storage and factorizations are delegated to scipy.sparse (CSR + SuperLU /
BiCGStab); the power iteration for the dominant eigenvalue is implemented
here directly.  All entry points are deterministic for fixed inputs and seed.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError


class SparseMatrix:
    """Compressed-row sparse matrix (double precision).

    Column indices are sorted and unique per row; explicit zeros are kept so
    the structural pattern mirrors the influence domains that produced it.
    """

    def __init__(self, csr):
        csr = csr.tocsr()
        csr.sort_indices()
        self._csr = csr

    @property
    def nrows(self):
        return self._csr.shape[0]

    @property
    def ncols(self):
        return self._csr.shape[1]

    @property
    def shape(self):
        return self._csr.shape

    @property
    def row_offsets(self):
        return self._csr.indptr

    @property
    def col_indices(self):
        return self._csr.indices

    @property
    def values(self):
        return self._csr.data

    @property
    def nnz(self):
        """Stored (structural) entry count, explicit zeros included."""
        return self._csr.nnz

    def csr(self):
        return self._csr

    def toarray(self):
        return self._csr.toarray()

    def transpose(self):
        return SparseMatrix(self._csr.T.tocsr())

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return SparseMatrix(self._csr @ other._csr)
        return matvec(self, other)

    def scaled(self, alpha):
        out = self._csr.copy()
        out.data *= alpha
        return SparseMatrix(out)

    def plus(self, other, beta=1.0):
        return SparseMatrix((self._csr + beta * other._csr).tocsr())

    def __repr__(self):
        return f"SparseMatrix({self.nrows}x{self.ncols}, nnz={self.nnz})"


def assemble_from_triplets(nrows, ncols, triplets):
    """Build a SparseMatrix from (i, j, value) triplets; duplicates are summed."""
    if len(triplets) == 0:
        return SparseMatrix(sp.csr_matrix((nrows, ncols)))
    arr = np.asarray(triplets, dtype=float)
    rows = arr[:, 0]
    cols = arr[:, 1]
    vals = arr[:, 2]
    bad = (rows < 0) | (rows >= nrows) | (cols < 0) | (cols >= ncols) | (rows != np.round(rows)) | (cols != np.round(cols))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ValueError(f"triplet out of range: ({arr[k, 0]}, {arr[k, 1]}, {arr[k, 2]}) for shape {(nrows, ncols)}")
    coo = sp.coo_matrix((vals, (rows.astype(np.int64), cols.astype(np.int64))), shape=(nrows, ncols))
    csr = coo.tocsr()  # duplicate (i, j) entries are summed here
    csr.sort_indices()
    return SparseMatrix(csr)


def from_rows(nrows, ncols, row_cols, row_vals):
    """Build from per-row column/value arrays (no duplicate handling needed)."""
    lengths = [len(c) for c in row_cols]
    indptr = np.zeros(nrows + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(lengths)
    indices = np.concatenate([np.asarray(c, dtype=np.int64) for c in row_cols]) if indptr[-1] else np.zeros(0, dtype=np.int64)
    data = np.concatenate([np.asarray(v, dtype=float) for v in row_vals]) if indptr[-1] else np.zeros(0)
    csr = sp.csr_matrix((data, indices, indptr), shape=(nrows, ncols))
    csr.sort_indices()
    return SparseMatrix(csr)


def from_csr_parts(nrows, ncols, indptr, indices, data):
    """Build directly from CSR arrays (pattern assumed valid, duplicates none)."""
    csr = sp.csr_matrix((np.asarray(data, dtype=float), indices, indptr), shape=(nrows, ncols))
    csr.sort_indices()
    return SparseMatrix(csr)


def identity(n, scale=1.0):
    return SparseMatrix(sp.identity(n, format="csr") * scale)


def diagonal(values):
    return SparseMatrix(sp.diags(np.asarray(values, dtype=float), format="csr"))


def block_matrix(blocks):
    """Assemble from a 2-D list of SparseMatrix/None blocks."""
    conv = [[b.csr() if isinstance(b, SparseMatrix) else b for b in row] for row in blocks]
    return SparseMatrix(sp.bmat(conv, format="csr"))


def matvec(m, v):
    v = np.asarray(v, dtype=float)
    if v.shape[0] != m.ncols:
        raise ValueError(f"dimension mismatch: matrix {m.shape}, vector {v.shape}")
    return m.csr() @ v


class LinearSolveHandle:
    """Reusable solver bound to one immutable matrix.

    Direct mode factors once (SuperLU); iterative mode runs BiCGStab per
    solve.  Every solve is residual-checked against the handle tolerance.
    """

    def __init__(self, matrix, method="direct", tol=1e-10, max_iter=2000):
        if matrix.nrows != matrix.ncols:
            raise ValueError("solver requires a square matrix")
        if method not in ("direct", "iterative"):
            raise ValueError(f"unknown solve method {method!r}")
        self.matrix = matrix
        self.method = method
        self.tol = tol
        self.max_iter = max_iter
        self._lu = None
        if method == "direct":
            try:
                self._lu = spla.splu(matrix.csr().tocsc())
            except RuntimeError as exc:  # SuperLU reports the pivot in its message
                raise SolverError(f"direct factorization failed: {exc}") from exc

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.matrix.nrows:
            raise ValueError("rhs length does not match matrix size")
        rhs_norm = float(np.linalg.norm(rhs))
        if rhs_norm == 0.0:
            return np.zeros_like(rhs)
        if self.method == "direct":
            x = self._lu.solve(rhs)
            res = rhs - matvec(self.matrix, x)
            if np.linalg.norm(res) > self.tol * rhs_norm:
                x = x + self._lu.solve(res)  # one step of iterative refinement
                res = rhs - matvec(self.matrix, x)
            rnorm = float(np.linalg.norm(res))
            if not np.isfinite(rnorm) or rnorm > self.tol * rhs_norm:
                raise SolverError(f"direct solve residual {rnorm:.3e} exceeds tol*|rhs| = {self.tol * rhs_norm:.3e}")
            return x
        x, info = spla.bicgstab(self.matrix.csr(), rhs, rtol=self.tol * 1e-2, atol=0.0, maxiter=self.max_iter)
        res = float(np.linalg.norm(rhs - matvec(self.matrix, x)))
        if info != 0 or res > self.tol * rhs_norm:
            raise SolverError(f"bicgstab did not converge (info={info}, residual={res:.3e})")
        return x


def prepare_solver(matrix, method="direct", tol=1e-10, max_iter=2000):
    return LinearSolveHandle(matrix, method=method, tol=tol, max_iter=max_iter)


def solve(handle, rhs):
    return handle.solve(rhs)


def dominant_eigenvalue(m, tol=1e-8, max_iter=5000, seed=0, raise_on_failure=True):
    """Magnitude of the dominant eigenvalue by seeded power iteration.

    Convergence is declared when successive Rayleigh-quotient estimates agree
    to ``tol`` relative.  A dominant complex pair makes the estimates
    oscillate; that is reported as an error carrying the recent history.
    """
    if m.nrows != m.ncols:
        raise ValueError("dominant_eigenvalue requires a square matrix")
    if m.nrows == 0:
        raise ValueError("empty matrix")
    csr = m.csr()
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.nrows)
    v /= np.linalg.norm(v)
    lam = np.inf
    history = []
    for _ in range(max_iter):
        w = csr @ v
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0  # v is in the null space and nothing larger exists along the orbit
        v_new = w / norm_w
        lam_new = float(v @ w)  # Rayleigh quotient (v is unit)
        history.append(lam_new)
        if np.isfinite(lam) and abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            return abs(lam_new)
        lam = lam_new
        v = v_new
    if raise_on_failure:
        tail = ", ".join(f"{x:.6e}" for x in history[-6:])
        raise SolverError(
            f"power iteration did not converge in {max_iter} iterations "
            f"(possible dominant complex pair); last estimates: [{tail}]"
        )
    return abs(lam)


def growth_rate_estimate(m, steps=200, seed=0):
    """Geometric growth rate of ||m^k v||, a spectral-radius estimate that
    works even when the dominant eigenvalues are a complex pair."""
    csr = m.csr()
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.nrows)
    v /= np.linalg.norm(v)
    log_growth = 0.0
    for _ in range(steps):
        v = csr @ v
        n = float(np.linalg.norm(v))
        if n == 0.0:
            return 0.0
        log_growth += np.log(n)
        v /= n
    return float(np.exp(log_growth / steps))


def dump_matrix(m, path):
    """Write coordinate-format text: one 'i j value' line per stored entry."""
    csr = m.csr().tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, v in zip(csr.row, csr.col, csr.data):
            fh.write(f"{i} {j} {v:.17g}\n")


def sparsity_percent(m):
    """100 * (1 - nnz/size), counting stored structural entries."""
    total = m.nrows * m.ncols
    return 100.0 * (1.0 - m.nnz / total) if total else 0.0
