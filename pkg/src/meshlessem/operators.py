"""Assembly of the sparse spatial operators.

Explicit TMz: four corrected first-derivative matrices so the field updates
read

    Hx <- Hx - dt * (curl_ez_to_hx @ Ez)          (1/mu) d/dy weights
    Hy <- Hy + dt * (curl_ez_to_hy @ Ez)          (1/mu) d/dx weights
    Ez <- Ez + dt * (curl_hy_to_ez @ Hy - curl_hx_to_ez @ Hx)

Implicit leapfrog-ADI: block operators for

    e_lhs @ E_new = e_rhs @ E_old + e_from_h @ H
    h_lhs @ H_new = h_rhs @ H_old + h_from_e @ E_new

with per-component diagonal blocks carrying the mass term and one implicit
second-derivative direction (pairing x->y, y->z, z->x), and off-diagonal
curl couplings transcribed from the component update equations.  All row
weights annihilate constant fields exactly: first derivatives through the
consistency correction, second derivatives through their difference form.

``sign_mode``:
  * ``standard-plus`` (default) — the exact one-step leapfrog rewriting of
    the two-stage splitting (factorized E operators, preconditioned curl
    coupling, mu-mass H equations); unconditionally stable.
  * ``literal-paper`` — single-direction transcription with the printed
    coefficients (eps mass, dt/mu curl on the H equations); conditionally
    stable, kept for comparison.
"""

from dataclasses import dataclass, field

import numpy as np

from . import sparse
from .cloud import (
    ROLE_E,
    ROLE_H,
    build_consistency_correction,
    ensure_correction_support,
    find_neighbors,
)
from .errors import MeshlessEmError
from .kernels import kernel_second_derivative
from .sparse import SparseMatrix

AXIS_INDEX = {"x": 0, "y": 1, "z": 2}

# curl coupling tables: for each target component, (source component, derivative
# axis, sign) terms of the corresponding update equation
CURL_H_TO_E = {  # dE_k/dt terms from H (Ampere)
    "x": (("z", "y", +1.0), ("y", "z", -1.0)),
    "y": (("x", "z", +1.0), ("z", "x", -1.0)),
    "z": (("y", "x", +1.0), ("x", "y", -1.0)),
}
CURL_E_TO_H = {  # dH_k/dt terms from E (Faraday, negative curl)
    "x": (("y", "z", +1.0), ("z", "y", -1.0)),
    "y": (("z", "x", +1.0), ("x", "z", -1.0)),
    "z": (("x", "y", +1.0), ("y", "x", -1.0)),
}
# implicit second-derivative direction per diagonal block
IMPLICIT_AXIS = {"x": "y", "y": "z", "z": "x"}

TMZ_E_COMPONENTS = ("z",)
TMZ_H_COMPONENTS = ("x", "y")
FULL_COMPONENTS = ("x", "y", "z")


@dataclass
class AssemblyContext:
    """Cloud plus neighbor tables and corrections shared by all assemblers."""

    cloud: object
    spec: object
    tables: dict
    corrections: dict

    def table(self, fixed, nb):
        return self.tables[(fixed, nb)]

    def correction(self, fixed, nb):
        return self.corrections[(fixed, nb)]


def build_context(cloud, spec, same_role=True, auto_support=True):
    """Find neighbors and build corrections once; h is enlarged where the
    cross-role correction would be singular (boundary nodes of tight supports).
    """
    if auto_support:
        cloud = ensure_correction_support(cloud, spec)
    pairs = [(ROLE_E, ROLE_H), (ROLE_H, ROLE_E)]
    if same_role:
        pairs += [(ROLE_E, ROLE_E), (ROLE_H, ROLE_H)]
    tables = {p: find_neighbors(cloud, p[0], p[1], spec.support_factor) for p in pairs}
    corrections = {
        p: build_consistency_correction(cloud, tables[p], spec)
        for p in ((ROLE_E, ROLE_H), (ROLE_H, ROLE_E))
    }
    return AssemblyContext(cloud=cloud, spec=spec, tables=tables, corrections=corrections)


def _check_no_zero_rows(m, what):
    if np.any(np.diff(m.row_offsets) == 0):
        bad = int(np.argmax(np.diff(m.row_offsets) == 0))
        raise MeshlessEmError(f"{what} has an empty row at node {bad}")


def first_derivative_matrix(ctx, fixed, nb, axis, coeff=None):
    """Corrected first-derivative weight matrix for one axis.

    Row i holds coeff[i] * w_ij[axis] at the neighbor columns; rows
    annihilate constants and are exact on linear fields.
    """
    table = ctx.table(fixed, nb)
    corr = ctx.correction(fixed, nb)
    vals = corr.pair_weights[:, axis].copy()
    if coeff is not None:
        vals *= coeff[table.pair_fixed]
    m = sparse.from_csr_parts(table.n_fixed, table.n_neighbor_nodes, table.offsets, table.indices, vals)
    _check_no_zero_rows(m, f"derivative operator {fixed}->{nb} axis {axis}")
    return m


def second_derivative_matrix(ctx, role, axis, coeff=None, laplacian_correction=False):
    """Same-role second-derivative weights in difference form.

    The diagonal absorbs the negated row sum, so constants are annihilated
    exactly.  With ``laplacian_correction`` rows are rescaled to reproduce
    the pure quadratic x_axis^2 exactly as well.
    """
    cloud = ctx.cloud
    table = ctx.table(role, role)
    pos = cloud.positions(role)
    h = cloud.smoothing(role)
    vol = cloud.volumes(role)
    pi = table.pair_fixed
    pj = table.indices
    disp = pos[pi] - pos[pj]
    vals = kernel_second_derivative(disp, h[pi], ctx.spec, axis) * vol[pj]
    row_sums = np.bincount(pi, weights=vals, minlength=table.n_fixed)
    self_pos = np.flatnonzero(pi == pj)
    if self_pos.size != table.n_fixed:
        raise MeshlessEmError("difference form needs the self entry in every same-role row")
    vals[self_pos] -= row_sums
    if laplacian_correction:
        m2 = np.bincount(pi, weights=vals * (pos[pj, axis] - pos[pi, axis]) ** 2, minlength=table.n_fixed)
        scale = np.where(np.abs(m2) > 1e-300, 2.0 / m2, 1.0)
        vals *= scale[pi]
    if coeff is not None:
        vals *= coeff[pi]
    return sparse.from_csr_parts(table.n_fixed, table.n_fixed, table.offsets, table.indices, vals)


@dataclass
class ExplicitOperatorsTMz:
    curl_hy_to_ez: SparseMatrix  # E rows x H cols, (1/eps) d/dx
    curl_hx_to_ez: SparseMatrix  # E rows x H cols, (1/eps) d/dy
    curl_ez_to_hx: SparseMatrix  # H rows x E cols, (1/mu) d/dy
    curl_ez_to_hy: SparseMatrix  # H rows x E cols, (1/mu) d/dx


def assemble_explicit_tmz(ctx):
    cloud = ctx.cloud
    inv_eps = 1.0 / cloud.eps_e
    inv_mu = 1.0 / cloud.mu_h
    return ExplicitOperatorsTMz(
        curl_hy_to_ez=first_derivative_matrix(ctx, ROLE_E, ROLE_H, 0, inv_eps),
        curl_hx_to_ez=first_derivative_matrix(ctx, ROLE_E, ROLE_H, 1, inv_eps),
        curl_ez_to_hx=first_derivative_matrix(ctx, ROLE_H, ROLE_E, 1, inv_mu),
        curl_ez_to_hy=first_derivative_matrix(ctx, ROLE_H, ROLE_E, 0, inv_mu),
    )


@dataclass
class ExplicitOperators3D:
    """Per-axis derivative operators scaled by the material coefficients."""

    d_e: list  # three E-row x H-col matrices, (1/eps) d/dk
    d_h: list  # three H-row x E-col matrices, (1/mu) d/dk


def assemble_explicit_3d(ctx):
    cloud = ctx.cloud
    if cloud.dim != 3:
        raise MeshlessEmError("assemble_explicit_3d needs a 3-D cloud")
    inv_eps = 1.0 / cloud.eps_e
    inv_mu = 1.0 / cloud.mu_h
    d_e = [first_derivative_matrix(ctx, ROLE_E, ROLE_H, k, inv_eps) for k in range(3)]
    d_h = [first_derivative_matrix(ctx, ROLE_H, ROLE_E, k, inv_mu) for k in range(3)]
    return ExplicitOperators3D(d_e=d_e, d_h=d_h)


@dataclass
class ImplicitOperators:
    """Block operators of the leapfrog-ADI update (see module docstring)."""

    e_lhs: SparseMatrix
    e_rhs: SparseMatrix
    e_from_h: SparseMatrix
    h_lhs: SparseMatrix
    h_rhs: SparseMatrix
    h_from_e: SparseMatrix
    dt: float
    sign_mode: str
    e_components: tuple
    h_components: tuple
    n_e: int
    n_h: int

    def diagonal_block(self, which, comp):
        """Extract one diagonal block of e_lhs/h_lhs (reporting helper)."""
        m = self.e_lhs if which == "E" else self.h_lhs
        comps = self.e_components if which == "E" else self.h_components
        n = self.n_e if which == "E" else self.n_h
        k = comps.index(comp)
        return SparseMatrix(m.csr()[k * n:(k + 1) * n, k * n:(k + 1) * n])


def assemble_implicit(ctx, dt, sign_mode="standard-plus", e_components=None,
                      h_components=None, laplacian_correction=False,
                      sigma_e=None, sigma_m=None):
    """Assemble the implicit blocks at a fixed time step.

    ``standard-plus`` builds the exact one-step leapfrog rewriting of the
    two-stage splitting.  Its implicit terms are the PRODUCTS of the two
    staggered cross-role first-derivative operators along the component's
    implicit direction (e.g. (dt/2)^2 P (1/mu) Q with P = d/dx mapping
    H-samples to E-nodes and Q = d/dx mapping E-samples to H-nodes), the
    same operator multiplies both sides, and the curl couplings are plain
    dt-scaled corrected derivatives.  Replacing the product with an
    independently assembled same-role kernel second derivative (the printed
    reading) breaks the exact cancellation the splitting relies on and with
    it the unconditional stability.

    ``literal-paper`` keeps that single-direction kernel-D^2 transcription
    with the printed coefficients (eps mass and dt/mu curl on the H
    equations).

    ``sigma_e``/``sigma_m`` are optional per-node electric/magnetic loss
    profiles (the absorbing rim of implicit runs); they perturb the lhs/rhs
    mass terms antisymmetrically and vanish by default.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if sign_mode not in ("standard-plus", "literal-paper"):
        raise ValueError(f"unknown sign_mode {sign_mode!r}")
    cloud = ctx.cloud
    dim = cloud.dim
    if e_components is None:
        e_components = TMZ_E_COMPONENTS if dim == 2 else FULL_COMPONENTS
    if h_components is None:
        h_components = TMZ_H_COMPONENTS if dim == 2 else FULL_COMPONENTS
    n_e, n_h = cloud.n_e, cloud.n_h
    quarter = (0.5 * dt) ** 2
    loss_e = sigma_e if sigma_e is not None else np.zeros(n_e)
    loss_m = sigma_m if sigma_m is not None else np.zeros(n_h)

    def second_term(role, axis_name, inv_coeff):
        if AXIS_INDEX[axis_name] >= dim:
            return None  # derivative direction absent (e.g. z in TMz)
        return second_derivative_matrix(
            ctx, role, AXIS_INDEX[axis_name], coeff=inv_coeff,
            laplacian_correction=laplacian_correction,
        )

    def blockdiag(blocks):
        grid = [[blocks[i] if i == j else None for j in range(len(blocks))] for i in range(len(blocks))]
        return sparse.block_matrix(grid)

    def coupling(target_comps, source_comps, fixed, nb, table, coeff):
        rows = []
        for tc in target_comps:
            row = []
            for sc in source_comps:
                block = None
                for src, axis, sign in table[tc]:
                    if src == sc and AXIS_INDEX[axis] < dim:
                        block = first_derivative_matrix(ctx, fixed, nb, AXIS_INDEX[axis], coeff).scaled(sign * dt)
                row.append(block)
            rows.append(row)
        return sparse.block_matrix(rows)

    if sign_mode == "standard-plus":
        inv_mu_h = sparse.diagonal(1.0 / cloud.mu_h)
        inv_eps_e = sparse.diagonal(1.0 / cloud.eps_e)

        def cross_product_term(fixed, inv_mid, axis_name):
            if AXIS_INDEX[axis_name] >= dim:
                return None
            axis = AXIS_INDEX[axis_name]
            if fixed == ROLE_E:
                fwd = first_derivative_matrix(ctx, ROLE_E, ROLE_H, axis)
                back = first_derivative_matrix(ctx, ROLE_H, ROLE_E, axis)
            else:
                fwd = first_derivative_matrix(ctx, ROLE_H, ROLE_E, axis)
                back = first_derivative_matrix(ctx, ROLE_E, ROLE_H, axis)
            return (fwd @ inv_mid) @ back

        e_lhs_blocks, e_rhs_blocks = [], []
        for comp in e_components:
            term = cross_product_term(ROLE_E, inv_mu_h, IMPLICIT_AXIS[comp])
            m_plus = sparse.diagonal(cloud.eps_e + 0.5 * dt * loss_e)
            m_minus = sparse.diagonal(cloud.eps_e - 0.5 * dt * loss_e)
            e_lhs_blocks.append(m_plus.plus(term, -quarter) if term is not None else m_plus)
            e_rhs_blocks.append(m_minus.plus(term, -quarter) if term is not None else m_minus)
        h_lhs_blocks, h_rhs_blocks = [], []
        for comp in h_components:
            term = cross_product_term(ROLE_H, inv_eps_e, IMPLICIT_AXIS[comp])
            m_plus = sparse.diagonal(cloud.mu_h + 0.5 * dt * loss_m)
            m_minus = sparse.diagonal(cloud.mu_h - 0.5 * dt * loss_m)
            h_lhs_blocks.append(m_plus.plus(term, -quarter) if term is not None else m_plus)
            h_rhs_blocks.append(m_minus.plus(term, -quarter) if term is not None else m_minus)
        e_from_h = coupling(e_components, h_components, ROLE_E, ROLE_H, CURL_H_TO_E, None)
        h_from_e = coupling(h_components, e_components, ROLE_H, ROLE_E, CURL_E_TO_H, None)
    else:
        inv_mu_e = 1.0 / cloud.mu_e
        inv_mu_h = 1.0 / cloud.mu_h
        e_lhs_blocks, e_rhs_blocks = [], []
        for comp in e_components:
            s2 = second_term(ROLE_E, IMPLICIT_AXIS[comp], inv_mu_e)
            m_plus = sparse.diagonal(cloud.eps_e + 0.5 * dt * loss_e)
            m_minus = sparse.diagonal(cloud.eps_e - 0.5 * dt * loss_e)
            e_lhs_blocks.append(m_plus.plus(s2, -quarter) if s2 is not None else m_plus)
            e_rhs_blocks.append(m_minus.plus(s2, -quarter) if s2 is not None else m_minus)
        h_lhs_blocks, h_rhs_blocks = [], []
        for comp in h_components:
            s2 = second_term(ROLE_H, IMPLICIT_AXIS[comp], inv_mu_h)
            m_plus = sparse.diagonal(cloud.eps_h + 0.5 * dt * loss_m)
            m_minus = sparse.diagonal(cloud.eps_h - 0.5 * dt * loss_m)
            h_lhs_blocks.append(m_plus.plus(s2, -quarter) if s2 is not None else m_plus)
            h_rhs_blocks.append(m_minus.plus(s2, -quarter) if s2 is not None else m_minus)
        e_from_h = coupling(e_components, h_components, ROLE_E, ROLE_H, CURL_H_TO_E, None)
        h_from_e = coupling(h_components, e_components, ROLE_H, ROLE_E, CURL_E_TO_H, inv_mu_h)

    return ImplicitOperators(
        e_lhs=blockdiag(e_lhs_blocks),
        e_rhs=blockdiag(e_rhs_blocks),
        e_from_h=e_from_h,
        h_lhs=blockdiag(h_lhs_blocks),
        h_rhs=blockdiag(h_rhs_blocks),
        h_from_e=h_from_e,
        dt=dt,
        sign_mode=sign_mode,
        e_components=tuple(e_components),
        h_components=tuple(h_components),
        n_e=n_e,
        n_h=n_h,
    )


def curl_curl_operator(ops):
    """Second-order-in-time wave operator G = -(T Z + U V), units 1/s^2."""
    tz = ops.curl_hy_to_ez @ ops.curl_ez_to_hy
    uv = ops.curl_hx_to_ez @ ops.curl_ez_to_hx
    return tz.plus(uv).scaled(-1.0)


@dataclass
class StabilityReport:
    lambda_max: float          # dominant eigenvalue of G [1/s^2]
    dt_bound: float            # 2 / sqrt(lambda_max) [s]
    dt_cfl_grid: float         # dr / (c sqrt(d)) [s]
    dt_cfl_smoothing: float    # min_i h_i / c [s]
    dt_cfl_halfstep: float     # dr / (2 c), the scenario convention [s]
    dt_query: float            # time step the report was asked about [s]
    spectral_radius: float     # growth-rate estimate of the one-step map at dt_query
    explicit_unstable: bool    # dt_query exceeds dt_bound
    interpretation: str = field(default=(
        "bound from the dt-free composite operator G = -(TZ+UV): "
        "leapfrog is stable for dt <= 2/sqrt(lambda_max(G)); the assembled "
        "one-step map at dt_query is cross-checked by its growth rate"
    ))

    def lines(self):
        return [
            f"lambda_max(G)      = {self.lambda_max:.9e} 1/s^2",
            f"dt_bound           = {self.dt_bound:.9e} s",
            f"dt_cfl dr/(c*sqrtd)= {self.dt_cfl_grid:.9e} s",
            f"dt_cfl min(h)/c    = {self.dt_cfl_smoothing:.9e} s",
            f"dt_cfl dr/(2c)     = {self.dt_cfl_halfstep:.9e} s",
            f"dt_query           = {self.dt_query:.9e} s",
            f"one-step growth    = {self.spectral_radius:.9f}",
            f"explicit_unstable  = {self.explicit_unstable}",
            f"note: {self.interpretation}",
        ]


def one_step_map(ops, dt):
    """The explicit update as a single matrix over (Ez, Hx, Hy)."""
    t = ops.curl_hy_to_ez
    u = ops.curl_hx_to_ez
    v = ops.curl_ez_to_hx
    z = ops.curl_ez_to_hy
    g = t @ z
    g2 = u @ v
    n_e = t.nrows
    n_h = v.nrows
    top_left = sparse.identity(n_e).plus(g.plus(g2), dt * dt)
    return sparse.block_matrix([
        [top_left, u.scaled(-dt), t.scaled(dt)],
        [v.scaled(-dt), sparse.identity(n_h), None],
        [z.scaled(dt), None, sparse.identity(n_h)],
    ])


def stability_bound(ops, cloud, dt_query, seed=0, tol=1e-8):
    g = curl_curl_operator(ops)
    lam = sparse.dominant_eigenvalue(g, tol=tol, max_iter=20000, seed=seed)
    if lam <= 0.0:
        raise MeshlessEmError("curl-curl operator has non-positive dominant eigenvalue")
    dt_bound = 2.0 / np.sqrt(lam)
    c = 1.0 / np.sqrt(float(np.min(cloud.eps_e)) * float(np.min(cloud.mu_h)))
    s = one_step_map(ops, dt_query)
    rho = sparse.growth_rate_estimate(s, steps=400, seed=seed)
    return StabilityReport(
        lambda_max=lam,
        dt_bound=float(dt_bound),
        dt_cfl_grid=float(cloud.dr / (c * np.sqrt(cloud.dim))),
        dt_cfl_smoothing=float(min(np.min(cloud.h_e), np.min(cloud.h_h)) / c),
        dt_cfl_halfstep=float(cloud.dr / (2.0 * c)),
        dt_query=float(dt_query),
        spectral_radius=float(rho),
        explicit_unstable=bool(dt_query > dt_bound),
    )
