"""Staggered E/H particle clouds, neighbor search and consistency corrections.

E-nodes sit at cell centers of a reference lattice and H-nodes at cell
corners, so each node of one role is surrounded by nodes of the other; the
layout survives bounded jitter.  Every node carries its own smoothing length
h = alpha * dr, a volume weight and material parameters.

Derivative consistency: raw kernel-gradient sums lose first-order accuracy
wherever the support is truncated (boundaries) or the cloud is irregular.
The correction built here combines Shepard normalization (restores exactness
on constants) with a moment-matrix renormalization (restores exactness on
linear fields); the kernel itself is untouched, only the assembled weights
are multiplied.
"""

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import IsolatedNodeError, MeshlessEmError, SingularCorrectionError
from .constants import EPS0, MU0
from .kernels import kernel_gradient, kernel_value

ROLE_E = "E"
ROLE_H = "H"


@dataclass(frozen=True)
class Material:
    eps: float = EPS0   # permittivity [F/m]
    mu: float = MU0     # permeability [H/m]
    sigma: float = 0.0  # conductivity [S/m]


VACUUM = Material()


@dataclass
class ParticleCloud:
    """Scattered E/H nodes with per-node smoothing lengths and volumes."""

    dim: int
    e_pos: np.ndarray            # (N_E, dim) positions [m]
    h_pos: np.ndarray            # (N_H, dim)
    h_e: np.ndarray              # (N_E,) smoothing lengths [m]
    h_h: np.ndarray              # (N_H,)
    vol_e: np.ndarray            # (N_E,) volumes [m^dim]
    vol_h: np.ndarray            # (N_H,)
    eps_e: np.ndarray            # material sampled at E-nodes
    mu_e: np.ndarray
    sigma_e: np.ndarray
    eps_h: np.ndarray            # material sampled at H-nodes
    mu_h: np.ndarray
    sigma_h: np.ndarray
    dr: float                    # reference spacing [m]
    alpha: float                 # h = alpha * dr
    e_lattice: np.ndarray = None  # integer lattice coordinates (construction metadata)
    h_lattice: np.ndarray = None
    box: tuple = None            # E-domain bounding box (min..., max...), None if not rectangular
    grid_shape: tuple = None     # (nx, ny[, nz]) of the generating lattice, if regular
    r0: float = None             # disc radius for cylinder domains

    @property
    def n_e(self):
        return self.e_pos.shape[0]

    @property
    def n_h(self):
        return self.h_pos.shape[0]

    def positions(self, role):
        return self.e_pos if role == ROLE_E else self.h_pos

    def smoothing(self, role):
        return self.h_e if role == ROLE_E else self.h_h

    def volumes(self, role):
        return self.vol_e if role == ROLE_E else self.vol_h

    def validate(self):
        for name in ("e_pos", "h_pos"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise MeshlessEmError(f"{name} contains non-finite positions")
        if np.any(self.h_e <= 0) or np.any(self.h_h <= 0):
            raise MeshlessEmError("all smoothing lengths must be positive")
        if np.any(self.vol_e <= 0) or np.any(self.vol_h <= 0):
            raise MeshlessEmError("all volumes must be positive")
        if np.any(self.eps_e <= 0) or np.any(self.mu_h <= 0):
            raise MeshlessEmError("material parameters must be positive")
        if np.any(self.sigma_e < 0) or np.any(self.sigma_h < 0):
            raise MeshlessEmError("conductivity must be non-negative")


def _material_arrays(material, n):
    return (
        np.full(n, material.eps),
        np.full(n, material.mu),
        np.full(n, material.sigma),
    )


def build_regular_cloud(nx, ny, dr, alpha, material=VACUUM, support_factor=2.0):
    """Yee-like staggered layout: E at cell centers, H at cell corners."""
    if nx < 2 or ny < 2:
        raise ValueError("need at least 2x2 cells")
    if dr <= 0 or alpha <= 0:
        raise ValueError("dr and alpha must be positive")
    ie, je = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    e_pos = np.stack([(ie.ravel() + 0.5) * dr, (je.ravel() + 0.5) * dr], axis=-1)
    ih, jh = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
    h_pos = np.stack([ih.ravel() * dr, jh.ravel() * dr], axis=-1)
    eps_e, mu_e, sig_e = _material_arrays(material, e_pos.shape[0])
    eps_h, mu_h, sig_h = _material_arrays(material, h_pos.shape[0])
    cloud = ParticleCloud(
        dim=2,
        e_pos=e_pos,
        h_pos=h_pos,
        h_e=np.full(e_pos.shape[0], alpha * dr),
        h_h=np.full(h_pos.shape[0], alpha * dr),
        vol_e=np.full(e_pos.shape[0], dr**2),
        vol_h=np.full(h_pos.shape[0], dr**2),
        eps_e=eps_e, mu_e=mu_e, sigma_e=sig_e,
        eps_h=eps_h, mu_h=mu_h, sigma_h=sig_h,
        dr=dr, alpha=alpha,
        e_lattice=np.stack([ie.ravel(), je.ravel()], axis=-1),
        h_lattice=np.stack([ih.ravel(), jh.ravel()], axis=-1),
        box=(0.0, 0.0, nx * dr, ny * dr),
        grid_shape=(nx, ny),
    )
    validate_staggering(cloud, support_factor)
    return cloud


def build_regular_cloud_3d(nx, ny, nz, dr, alpha, material=VACUUM, support_factor=2.0):
    """3-D analogue of build_regular_cloud (small clouds: property testing only)."""
    if min(nx, ny, nz) < 2:
        raise ValueError("need at least 2x2x2 cells")
    idx = np.stack(np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"), axis=-1).reshape(-1, 3)
    e_pos = (idx + 0.5) * dr
    idxh = np.stack(
        np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1), indexing="ij"), axis=-1
    ).reshape(-1, 3)
    h_pos = idxh * dr
    eps_e, mu_e, sig_e = _material_arrays(material, e_pos.shape[0])
    eps_h, mu_h, sig_h = _material_arrays(material, h_pos.shape[0])
    cloud = ParticleCloud(
        dim=3,
        e_pos=e_pos, h_pos=h_pos,
        h_e=np.full(e_pos.shape[0], alpha * dr),
        h_h=np.full(h_pos.shape[0], alpha * dr),
        vol_e=np.full(e_pos.shape[0], dr**3),
        vol_h=np.full(h_pos.shape[0], dr**3),
        eps_e=eps_e, mu_e=mu_e, sigma_e=sig_e,
        eps_h=eps_h, mu_h=mu_h, sigma_h=sig_h,
        dr=dr, alpha=alpha,
        e_lattice=idx, h_lattice=idxh,
        box=(0.0, 0.0, 0.0, nx * dr, ny * dr, nz * dr),
        grid_shape=(nx, ny, nz),
    )
    validate_staggering(cloud, support_factor)
    return cloud


def build_cylinder_cloud(r0, n_per_side, alpha, material=VACUUM, support_factor=2.0):
    """Disc of radius r0 cut from an n x n covering lattice centered on it."""
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    dr = 2.0 * r0 / n_per_side
    i = np.arange(n_per_side)
    ie, je = np.meshgrid(i, i, indexing="ij")
    e_all = np.stack([-r0 + (ie.ravel() + 0.5) * dr, -r0 + (je.ravel() + 0.5) * dr], axis=-1)
    e_lat = np.stack([ie.ravel(), je.ravel()], axis=-1)
    keep_e = np.linalg.norm(e_all, axis=1) <= r0
    ih, jh = np.meshgrid(np.arange(n_per_side + 1), np.arange(n_per_side + 1), indexing="ij")
    h_all = np.stack([-r0 + ih.ravel() * dr, -r0 + jh.ravel() * dr], axis=-1)
    h_lat = np.stack([ih.ravel(), jh.ravel()], axis=-1)
    keep_h = np.linalg.norm(h_all, axis=1) <= r0 + 0.75 * dr
    e_pos = e_all[keep_e]
    h_pos = h_all[keep_h]
    # drop H-nodes with no E-node in reach (outside corners of the covering grid)
    radius = support_factor * alpha * dr
    d2 = np.sum((h_pos[:, None, :] - e_pos[None, :, :]) ** 2, axis=-1)
    has_e = np.sqrt(d2).min(axis=1) < radius
    h_pos = h_pos[has_e]
    h_lat = h_lat[keep_h][has_e]
    eps_e, mu_e, sig_e = _material_arrays(material, e_pos.shape[0])
    eps_h, mu_h, sig_h = _material_arrays(material, h_pos.shape[0])
    cloud = ParticleCloud(
        dim=2,
        e_pos=e_pos, h_pos=h_pos,
        h_e=np.full(e_pos.shape[0], alpha * dr),
        h_h=np.full(h_pos.shape[0], alpha * dr),
        vol_e=np.full(e_pos.shape[0], dr**2),
        vol_h=np.full(h_pos.shape[0], dr**2),
        eps_e=eps_e, mu_e=mu_e, sigma_e=sig_e,
        eps_h=eps_h, mu_h=mu_h, sigma_h=sig_h,
        dr=dr, alpha=alpha,
        e_lattice=e_lat[keep_e], h_lattice=h_lat,
        box=None,
        grid_shape=(n_per_side, n_per_side),
        r0=r0,
    )
    validate_staggering(cloud, support_factor)
    return cloud


def jitter_cloud(cloud, fraction, seed, freeze_e=None, freeze_h=None):
    """Displace every node by a random vector of magnitude <= fraction * dr.

    Deterministic for a fixed seed.  Frozen nodes (boolean masks) keep their
    regular positions; the staggering invariant is re-verified afterwards.
    """
    if not 0.0 <= fraction < 0.5:
        raise ValueError("jitter fraction must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)

    def displace(pos, freeze):
        n = pos.shape[0]
        dirs = rng.standard_normal((n, cloud.dim))
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        dirs /= norms
        mags = rng.uniform(0.0, fraction * cloud.dr, n)
        disp = dirs * mags[:, None]
        if freeze is not None:
            disp[np.asarray(freeze, dtype=bool)] = 0.0
        return pos + disp

    new = replace(
        cloud,
        e_pos=displace(cloud.e_pos, freeze_e),
        h_pos=displace(cloud.h_pos, freeze_h),
    )
    validate_staggering(new)
    return new


class NeighborTable:
    """Fixed-radius neighbor lists: j is a neighbor of i iff |r_i - r_j| < kappa h_i."""

    def __init__(self, fixed_role, neighbor_role, offsets, indices, n_neighbor_nodes):
        self.fixed_role = fixed_role
        self.neighbor_role = neighbor_role
        self.offsets = offsets          # (N_fixed + 1,)
        self.indices = indices          # flat, sorted within each row
        self.n_neighbor_nodes = n_neighbor_nodes

    @property
    def n_fixed(self):
        return len(self.offsets) - 1

    @property
    def counts(self):
        return np.diff(self.offsets)

    def row(self, i):
        return self.indices[self.offsets[i]:self.offsets[i + 1]]

    @property
    def pair_fixed(self):
        """Row index of every (fixed, neighbor) pair, aligned with .indices."""
        return np.repeat(np.arange(self.n_fixed), self.counts)


def find_neighbors(cloud, fixed_role, neighbor_role, support_factor):
    """Exact fixed-radius search via a uniform cell list.

    Results are identical to a brute-force all-pairs scan; an empty list for
    any fixed node violates the surrounded-by invariant and raises.
    """
    fixed = cloud.positions(fixed_role)
    nb = cloud.positions(neighbor_role)
    radii = support_factor * cloud.smoothing(fixed_role)
    cell = float(np.max(radii))
    dim = cloud.dim
    origin = nb.min(axis=0)
    keys = np.floor((nb - origin) / cell).astype(np.int64)
    buckets = {}
    for idx, key in enumerate(map(tuple, keys)):
        buckets.setdefault(key, []).append(idx)
    buckets = {k: np.asarray(v, dtype=np.int64) for k, v in buckets.items()}
    shifts = np.stack(np.meshgrid(*([[-1, 0, 1]] * dim), indexing="ij"), axis=-1).reshape(-1, dim)

    rows = []
    fixed_keys = np.floor((fixed - origin) / cell).astype(np.int64)
    for i in range(fixed.shape[0]):
        base = fixed_keys[i]
        cand = [buckets.get(tuple(base + s)) for s in shifts]
        cand = [c for c in cand if c is not None]
        if not cand:
            raise IsolatedNodeError(
                f"{fixed_role}-node {i} at {fixed[i]} has no {neighbor_role}-node within {radii[i]:.6g}"
            )
        cand = np.concatenate(cand)
        d = np.linalg.norm(nb[cand] - fixed[i], axis=1)
        sel = cand[d < radii[i]]
        if sel.size == 0:
            raise IsolatedNodeError(
                f"{fixed_role}-node {i} at {fixed[i]} has no {neighbor_role}-node within {radii[i]:.6g}"
            )
        rows.append(np.sort(sel))
    offsets = np.zeros(fixed.shape[0] + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(r) for r in rows])
    indices = np.concatenate(rows)
    return NeighborTable(fixed_role, neighbor_role, offsets, indices, nb.shape[0])


def brute_force_neighbors(cloud, fixed_role, neighbor_role, support_factor):
    """O(N^2) oracle for find_neighbors."""
    fixed = cloud.positions(fixed_role)
    nb = cloud.positions(neighbor_role)
    radii = support_factor * cloud.smoothing(fixed_role)
    rows = []
    for i in range(fixed.shape[0]):
        d = np.linalg.norm(nb - fixed[i], axis=1)
        rows.append(np.flatnonzero(d < radii[i]))
    offsets = np.zeros(fixed.shape[0] + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(r) for r in rows])
    return NeighborTable(fixed_role, neighbor_role, offsets, np.concatenate(rows), nb.shape[0])


def validate_staggering(cloud, support_factor=2.0):
    """Each E-node must see an H-node inside its support and vice versa."""
    find_neighbors(cloud, ROLE_E, ROLE_H, support_factor)
    find_neighbors(cloud, ROLE_H, ROLE_E, support_factor)


def _correction_moments(cloud, table, spec):
    """Shepard sums, gradient defects, zero-sum gradient basis and moment
    matrices for one role pairing (shared by build and support repair)."""
    fixed = cloud.positions(table.fixed_role)
    nb = cloud.positions(table.neighbor_role)
    h = cloud.smoothing(table.fixed_role)
    vol = cloud.volumes(table.neighbor_role)
    pi = table.pair_fixed
    pj = table.indices
    disp = fixed[pi] - nb[pj]
    w = kernel_value(disp, h[pi], spec)
    gw = kernel_gradient(disp, h[pi], spec)
    wdv = w * vol[pj]
    n_fixed = table.n_fixed
    dim = cloud.dim
    ssum = np.bincount(pi, weights=wdv, minlength=n_fixed)
    gdv = gw * vol[pj][:, None]
    defect = np.stack([np.bincount(pi, weights=gdv[:, k], minlength=n_fixed) for k in range(dim)], axis=-1)
    with np.errstate(divide="ignore"):
        shepard = np.where(ssum > 0.0, 1.0 / np.where(ssum > 0.0, ssum, 1.0), np.inf)
    shep_pair = wdv * shepard[pi]
    basis = gdv - defect[pi] * shep_pair[:, None]
    rel = nb[pj] - fixed[pi]
    moment = np.zeros((n_fixed, dim, dim))
    for k in range(dim):
        for m in range(dim):
            moment[:, k, m] = np.bincount(pi, weights=basis[:, k] * rel[:, m], minlength=n_fixed)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(moment)
    cond = np.where(np.isfinite(cond), cond, np.inf)
    return ssum, shepard, defect, basis, moment, cond


def ensure_correction_support(cloud, spec, pairs=None, cond_target=1e8, growth=1.25, max_rounds=16):
    """Enlarge per-node smoothing lengths where the gradient correction would
    be singular (too few or degenerate neighbors, e.g. boundary H-nodes of a
    tight-support lattice).  Returns an updated cloud; interior nodes keep
    h = alpha * dr.
    """
    if pairs is None:
        pairs = ((ROLE_E, ROLE_H), (ROLE_H, ROLE_E))
    out = replace(cloud, h_e=cloud.h_e.copy(), h_h=cloud.h_h.copy())
    need = cloud.dim + 1
    for fixed_role, nb_role in pairs:
        h_arr = out.h_e if fixed_role == ROLE_E else out.h_h
        for _ in range(max_rounds):
            table = find_neighbors(out, fixed_role, nb_role, spec.support_factor)
            _, _, _, _, _, cond = _correction_moments(out, table, spec)
            bad = (table.counts < need) | (cond > cond_target)
            if not np.any(bad):
                break
            h_arr[bad] *= growth
        else:
            raise SingularCorrectionError(
                f"could not regularize correction support for {fixed_role}-nodes "
                f"after {max_rounds} rounds of h enlargement"
            )
    return out


class ConsistencyCorrection:
    """Per-node data restoring first-order accuracy of gradient weights.

    For fixed node i with neighbors j, the corrected weight vector is
    w_ij = L_i (grad W_ij dV_j - n_i shep_ij) where shep_ij are Shepard
    weights (sum to one) and n_i is the raw gradient-sum defect; w annihilates
    constants exactly and reproduces gradients of linear fields exactly.
    ``pair_weights`` caches w for every pair in the generating table.
    """

    def __init__(self, fixed_role, neighbor_role, shepard, matrices, grad_defect, pair_weights, cond):
        self.fixed_role = fixed_role
        self.neighbor_role = neighbor_role
        self.shepard = shepard            # (N,) 1 / sum_j W dV
        self.matrices = matrices          # (N, d, d) gradient-correction L
        self.grad_defect = grad_defect    # (N, d) raw sum of grad W dV
        self.pair_weights = pair_weights  # (P, d) corrected weights, table order
        self.cond = cond                  # (N,) condition numbers seen at build


def build_consistency_correction(cloud, table, spec, cond_limit=1e12):
    """Shepard factors + moment-matrix renormalization for one role pairing."""
    ssum, shepard, defect, basis, moment, cond = _correction_moments(cloud, table, spec)
    if np.any(ssum <= 0.0):
        bad = int(np.argmax(ssum <= 0.0))
        raise SingularCorrectionError(f"zero Shepard sum at {table.fixed_role}-node {bad}")
    if np.any(cond > cond_limit):
        bad = int(np.argmax(cond))
        raise SingularCorrectionError(
            f"moment matrix at {table.fixed_role}-node {bad} is singular "
            f"(condition {cond[bad]:.3e} > {cond_limit:.0e}); consider enlarging h"
        )
    matrices = np.linalg.inv(moment)
    pair_weights = np.einsum("pkm,pm->pk", matrices[table.pair_fixed], basis)
    return ConsistencyCorrection(
        table.fixed_role, table.neighbor_role, shepard, matrices, defect, pair_weights, cond
    )


def apply_gradient(table, corr, values):
    """Corrected gradient estimate at every fixed node from neighbor samples."""
    pi = table.pair_fixed
    contrib = corr.pair_weights * values[table.indices][:, None]
    return np.stack(
        [np.bincount(pi, weights=contrib[:, k], minlength=table.n_fixed) for k in range(corr.pair_weights.shape[1])],
        axis=-1,
    )


def raw_gradient(cloud, table, spec, values):
    """Uncorrected kernel-gradient estimate (for boundary-damage comparisons)."""
    fixed = cloud.positions(table.fixed_role)
    nb = cloud.positions(table.neighbor_role)
    h = cloud.smoothing(table.fixed_role)
    vol = cloud.volumes(table.neighbor_role)
    pi = table.pair_fixed
    pj = table.indices
    gw = kernel_gradient(fixed[pi] - nb[pj], h[pi], spec)
    contrib = gw * (vol[pj] * values[pj])[:, None]
    return np.stack(
        [np.bincount(pi, weights=contrib[:, k], minlength=table.n_fixed) for k in range(cloud.dim)],
        axis=-1,
    )


def compute_volumes(cloud, mode="uniform"):
    """Assign node volumes; returns an updated cloud.

    ``uniform`` assigns dr^dim everywhere.  ``voronoi`` (2-D rectangular
    domains) clips each node's Voronoi cell to the role's bounding box; the
    areas partition the box exactly.
    """
    if mode == "uniform":
        v = cloud.dr ** cloud.dim
        return replace(cloud, vol_e=np.full(cloud.n_e, v), vol_h=np.full(cloud.n_h, v))
    if mode != "voronoi":
        raise ValueError(f"unknown volume mode {mode!r}")
    if cloud.dim != 2:
        raise MeshlessEmError("voronoi volumes implemented for 2-D clouds only")
    if cloud.box is None:
        raise MeshlessEmError("voronoi volumes need a rectangular clipping box; this cloud has none")
    x0, y0, x1, y1 = cloud.box
    half = cloud.dr / 2.0
    vol_e = _clipped_voronoi_areas(cloud.e_pos, (x0, y0, x1, y1))
    vol_h = _clipped_voronoi_areas(cloud.h_pos, (x0 - half, y0 - half, x1 + half, y1 + half))
    return replace(cloud, vol_e=vol_e, vol_h=vol_h)


def _clip_halfplane(poly, a, b, c):
    """Sutherland-Hodgman clip of polygon by a*x + b*y <= c."""
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        fp = a * p[0] + b * p[1] - c
        fq = a * q[0] + b * q[1] - c
        if fp <= 0.0:
            out.append(p)
        if (fp < 0.0 < fq) or (fq < 0.0 < fp):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _polygon_area(poly):
    s = 0.0
    n = len(poly)
    for k in range(n):
        x0p, y0p = poly[k]
        x1p, y1p = poly[(k + 1) % n]
        s += x0p * y1p - x1p * y0p
    return 0.5 * abs(s)


def _clipped_voronoi_areas(points, box):
    from scipy.spatial import cKDTree

    x0, y0, x1, y1 = box
    tree = cKDTree(points)
    diag = float(np.hypot(x1 - x0, y1 - y0))
    areas = np.empty(points.shape[0])
    k_query = min(len(points), 24)
    for i, p in enumerate(points):
        poly = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        # grow the candidate set until the security radius argument closes
        k = k_query
        while True:
            dists, idx = tree.query(p, k=k)
            dists = np.atleast_1d(dists)
            idx = np.atleast_1d(idx)
            mask = idx != i
            dists, idx = dists[mask], idx[mask]
            for j in idx:
                q = points[j]
                mid = 0.5 * (p + q)
                d = q - p
                # half-plane of points nearer to p than to q
                poly = _clip_halfplane(poly, d[0], d[1], d[0] * mid[0] + d[1] * mid[1])
                if not poly:
                    break
            if not poly:
                break
            rmax = max(np.hypot(vx - p[0], vy - p[1]) for vx, vy in poly)
            if (len(idx) and dists[-1] >= 2.0 * rmax) or k >= len(points):
                break
            k = min(len(points), k * 2)
        areas[i] = _polygon_area(poly) if poly else 0.0
    if np.any(areas <= 0.0):
        bad = int(np.argmax(areas <= 0.0))
        raise MeshlessEmError(f"empty clipped Voronoi cell for node {bad}")
    return areas


def min_pair_spacing(cloud, same_role_only=False):
    """Smallest distance between distinct nodes; cross-role pairs included
    unless same_role_only."""
    from scipy.spatial import cKDTree

    def nn(points):
        if points.shape[0] < 2:
            return np.inf
        d, _ = cKDTree(points).query(points, k=2)
        return float(d[:, 1].min())

    best = min(nn(cloud.e_pos), nn(cloud.h_pos))
    if not same_role_only:
        d, _ = cKDTree(cloud.h_pos).query(cloud.e_pos, k=1)
        best = min(best, float(d.min()))
    return best


CSV_HEADER_2D = "role,x,y,h,vol,eps,mu,sigma"
CSV_HEADER_3D = "role,x,y,z,h,vol,eps,mu,sigma"


def dump_cloud(cloud, path_or_buf):
    """Write the cloud as CSV (SI units, full double precision)."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", encoding="utf-8") if own else path_or_buf
    try:
        fh.write(f"# dr={cloud.dr!r} alpha={cloud.alpha!r}\n")
        fh.write((CSV_HEADER_2D if cloud.dim == 2 else CSV_HEADER_3D) + "\n")
        for role in (ROLE_E, ROLE_H):
            pos = cloud.positions(role)
            h = cloud.smoothing(role)
            vol = cloud.volumes(role)
            eps = cloud.eps_e if role == ROLE_E else cloud.eps_h
            mu = cloud.mu_e if role == ROLE_E else cloud.mu_h
            sig = cloud.sigma_e if role == ROLE_E else cloud.sigma_h
            for k in range(pos.shape[0]):
                coords = ",".join(f"{c:.17g}" for c in pos[k])
                fh.write(f"{role},{coords},{h[k]:.17g},{vol[k]:.17g},{eps[k]:.17g},{mu[k]:.17g},{sig[k]:.17g}\n")
    finally:
        if own:
            fh.close()


def load_cloud(path_or_buf):
    """Read a cloud written by dump_cloud."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "r", encoding="utf-8") if own else path_or_buf
    try:
        text = fh.read()
    finally:
        if own:
            fh.close()
    dr = alpha = None
    rows = {ROLE_E: [], ROLE_H: []}
    dim = None
    for line in io.StringIO(text):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if tok.startswith("dr="):
                    dr = float(tok[3:])
                elif tok.startswith("alpha="):
                    alpha = float(tok[6:])
            continue
        if line.startswith("role,"):
            dim = 3 if ",z," in line else 2
            continue
        parts = line.split(",")
        rows[parts[0]].append([float(v) for v in parts[1:]])
    if dim is None or dr is None or alpha is None:
        raise MeshlessEmError("malformed cloud CSV: missing header or metadata")
    e = np.asarray(rows[ROLE_E])
    h = np.asarray(rows[ROLE_H])
    return ParticleCloud(
        dim=dim,
        e_pos=e[:, :dim], h_pos=h[:, :dim],
        h_e=e[:, dim], h_h=h[:, dim],
        vol_e=e[:, dim + 1], vol_h=h[:, dim + 1],
        eps_e=e[:, dim + 2], mu_e=e[:, dim + 3], sigma_e=e[:, dim + 4],
        eps_h=h[:, dim + 2], mu_h=h[:, dim + 3], sigma_h=h[:, dim + 4],
        dr=dr, alpha=alpha,
    )
