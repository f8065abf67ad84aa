"""Scenario execution: setup once, march the temporal loop, emit artifacts.

The pipeline is the same for every solver: build the cloud (jitter keeps the
boundary band regular), resolve the time step from the configured CFL
convention, assemble operators / factor solvers once, then loop.  Snapshots,
probe series, an energy trace and a metrics record are collected in memory
and optionally written to an output directory with deterministic formatting.
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sparse
from .boundaries import (
    HornSpec,
    PecMask,
    PmlSpec,
    SourceSpec,
    SplitFieldPml,
    apply_pec,
    build_horn,
    build_pml_map,
    cylinder_rim_mask,
    evaluate_source,
    locate_source_node,
    locate_source_nodes,
    lossy_rim_profiles,
    rectangle_rim_mask,
)
from .cloud import (
    build_cylinder_cloud,
    build_regular_cloud,
    compute_volumes,
    jitter_cloud,
    min_pair_spacing,
)
from .errors import DivergenceError, MeshlessEmError
from .kernels import KernelSpec
from .operators import (
    assemble_explicit_tmz,
    assemble_implicit,
    build_context,
    stability_bound,
)
from .steppers import FdtdTmz, FieldStateTMz, LafStepper, discrete_energy, step_explicit_tmz

DIVERGENCE_FACTOR = 1e12


@dataclass
class RunArtifact:
    name: str
    solver: str
    dt: float
    dt_cfl: float
    steps: int
    cloud: object
    snapshots: dict           # step -> {"ez": array, ...}
    probe: list               # (step, time_s, value)
    energy: list              # (step, time_s, value)
    max_ez_trace: list
    stability: object = None
    pec: object = None
    source_nodes: object = None
    axis_nodes: object = None
    timings: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    log: list = field(default_factory=list)
    out_dir: object = None


def _kernel_spec(cfg, dim=2):
    d = cfg.discretization
    return KernelSpec(d["kernel"], dim, d["support_factor"])


def build_cloud_for(cfg):
    """Cloud plus freeze masks; jitter keeps the configured boundary band
    regular (PML thickness, PEC rim, horn plates)."""
    dom, dis, bnd = cfg.domain, cfg.discretization, cfg.boundary
    spec = _kernel_spec(cfg)
    if dom["type"] == "rectangle":
        cloud = build_regular_cloud(dom["nx"], dom["ny"], dom["dr"], dis["alpha"],
                                    support_factor=spec.support_factor)
    else:
        cloud = build_cylinder_cloud(dom["r0"], dom["n_per_side"], dis["alpha"],
                                     support_factor=spec.support_factor)
    if dis["volume_mode"] != "uniform":
        cloud = compute_volumes(cloud, dis["volume_mode"])
    if dis["distribution"] == "jittered" and dis["jitter_fraction"] > 0.0:
        freeze_e = freeze_h = None
        if dis["freeze_rim"]:
            freeze_e, freeze_h = _freeze_masks(cloud, cfg)
        cloud = jitter_cloud(cloud, dis["jitter_fraction"], dis["seed"],
                             freeze_e=freeze_e, freeze_h=freeze_h)
    return cloud, spec


def _freeze_masks(cloud, cfg):
    bnd = cfg.boundary
    if cloud.r0 is not None:
        band = cloud.r0 - bnd["pec_rim_width_dr"] * cloud.dr
        return (
            np.linalg.norm(cloud.e_pos, axis=1) >= band,
            np.linalg.norm(cloud.h_pos, axis=1) >= band,
        )
    x0, y0, x1, y1 = cloud.box
    band = bnd["pml_layers"] * cloud.dr if bnd["type"] in ("pml", "pec-geometry") else 1.5 * cloud.dr

    def near_edge(pos):
        return (
            (pos[:, 0] < x0 + band) | (pos[:, 0] > x1 - band)
            | (pos[:, 1] < y0 + band) | (pos[:, 1] > y1 - band)
        )

    freeze_e = near_edge(cloud.e_pos)
    freeze_h = near_edge(cloud.h_pos)
    if bnd["type"] == "pec-geometry":
        pec, _, _ = build_horn(cloud, _horn_spec(cfg))
        plate = np.zeros(cloud.n_e, dtype=bool)
        plate[pec.e_indices] = True
        # freeze plate nodes and everything within one spacing of a plate
        from scipy.spatial import cKDTree

        tree = cKDTree(cloud.e_pos[plate])
        de, _ = tree.query(cloud.e_pos, k=1)
        dh, _ = tree.query(cloud.h_pos, k=1)
        freeze_e |= de <= 1.05 * cloud.dr
        freeze_h |= dh <= 1.05 * cloud.dr
    return freeze_e, freeze_h


def _horn_spec(cfg):
    b = cfg.boundary
    return HornSpec(
        feed_x=b["horn_feed_x"], flare_x=b["horn_flare_x"], mouth_x=b["horn_mouth_x"],
        guide_width=b["horn_guide_width"], mouth_width=b["horn_mouth_width"],
        source_x=b["horn_source_x"],
    )


def _source_spec(cfg):
    s = cfg.source
    return SourceSpec(
        kind=s["kind"], amplitude=s["amplitude"], t0_steps=s["t0_steps"],
        width_sq_steps=s["width_sq_steps"], frequency=s["frequency_hz"],
        location=s["position"],
    )


def resolve_dt(cfg, cloud, spec=None):
    """Reference CFL step per the configured convention, and the actual dt."""
    c = 1.0 / np.sqrt(float(np.min(cloud.eps_e)) * float(np.min(cloud.mu_h)))
    regular_rect = cfg.domain["type"] == "rectangle" and cfg.discretization["distribution"] == "regular"
    spacing = cloud.dr if regular_rect else min_pair_spacing(cloud)
    if cfg.solver["cfl_convention"] == "half-step":
        dt_cfl = spacing / (2.0 * c)
    else:
        dt_cfl = spacing / (c * np.sqrt(cloud.dim))
    policy = cfg.solver["dt_policy"]
    if policy == "cfl-multiple":
        return dt_cfl, cfg.solver["dt_factor"] * dt_cfl
    if policy == "absolute":
        return dt_cfl, cfg.solver["dt_seconds"]
    # auto-stable: explicit eigenvalue bound scaled by the safety factor
    ctx = build_context(cloud, spec)
    ops = assemble_explicit_tmz(ctx)
    rep = stability_bound(ops, cloud, dt_query=dt_cfl)
    return dt_cfl, cfg.solver["safety_factor"] * rep.dt_bound


def _initial_ez(cfg, cloud):
    if cfg.source["initial"] == "cavity-parabola":
        if cloud.r0 is None:
            raise MeshlessEmError("cavity-parabola initial condition needs a cylinder domain")
        r = np.linalg.norm(cloud.e_pos, axis=1)
        return 1.0 - (r / cloud.r0) ** 2
    return np.zeros(cloud.n_e)


def run_scenario(cfg, out_dir=None, want_stability=False, keep_h=False):
    """Execute one scenario; returns the RunArtifact (and writes it if asked)."""
    timings = {}
    log = list(cfg.parse_log)
    t0 = time.perf_counter()
    cloud, spec = build_cloud_for(cfg)
    dt_cfl, dt = resolve_dt(cfg, cloud, spec)
    solver = cfg.solver["type"]
    steps = cfg.solver["steps"]
    name = cfg.output["name"]
    log.append(f"cloud: {cloud.n_e} E-nodes, {cloud.n_h} H-nodes, dr = {cloud.dr!r}")
    log.append(f"dt_cfl = {dt_cfl!r} s ({cfg.solver['cfl_convention']}), dt = {dt!r} s")

    # boundary objects
    pec = None
    source_nodes = None
    axis_nodes = None
    pml_spec = None
    if cfg.boundary["type"] == "pml":
        pml_spec = PmlSpec(cfg.boundary["pml_layers"], cfg.boundary["pml_order"],
                           cfg.boundary["pml_reflection"])
    elif cfg.boundary["type"] == "pec-rim":
        pec = (cylinder_rim_mask(cloud, width=cfg.boundary["pec_rim_width_dr"] * cloud.dr)
               if cloud.r0 is not None else rectangle_rim_mask(cloud))
    elif cfg.boundary["type"] == "pec-geometry":
        pec, src_col, axis_nodes = build_horn(cloud, _horn_spec(cfg))
        source_nodes = src_col
        pml_spec = PmlSpec(cfg.boundary["pml_layers"], cfg.boundary["pml_order"],
                           cfg.boundary["pml_reflection"])

    source = _source_spec(cfg)
    if source.kind != "none" and source_nodes is None:
        source_nodes = locate_source_nodes(cloud, source)
    # the configured amplitude is split across the source nodes
    source_weight = 1.0 / len(source_nodes) if source_nodes is not None and len(source_nodes) else 1.0
    timings["build_s"] = time.perf_counter() - t0

    ez0 = _initial_ez(cfg, cloud)
    if pec is not None:
        apply_pec(ez0, pec)
    scale = max(source.amplitude if source.kind != "none" else 0.0,
                float(np.max(np.abs(ez0))), 1e-300)
    threshold = DIVERGENCE_FACTOR * scale

    snapshot_steps = sorted(set(cfg.output["snapshot_steps"]) | {0, steps})
    snapshots = {}
    probe = []
    energy = []
    max_trace = []
    probe_node = None
    if cfg.output["probe"] != "none":
        probe_node = (source_nodes[0] if cfg.output["probe"] == "source-node" and source_nodes is not None
                      else locate_source_node(cloud, SourceSpec(kind="none", location="center")))
    stability = None

    t1 = time.perf_counter()
    if solver == "fdtd":
        stepper = _make_fdtd(cfg, cloud, dt, pml_spec, pec, ez0)
        get_ez = stepper.ez_flat
        get_energy = lambda: _fdtd_energy(stepper, cloud)
        def advance(n):
            stepper.step(source=(source_nodes, evaluate_source(source, n, dt) * source_weight)
                         if source_nodes is not None else None)
    else:
        ctx = build_context(cloud, spec)
        cloud = ctx.cloud  # h may have been enlarged at deficient boundary nodes
        state = FieldStateTMz(ez0.copy(), np.zeros(cloud.n_h), np.zeros(cloud.n_h), 0, dt,
                              convention="laf" if solver == "laf-spem" else "explicit")
        if solver == "explicit-spem":
            ops = assemble_explicit_tmz(ctx)
            if want_stability:
                stability = stability_bound(ops, cloud, dt_query=dt)
                log.extend(stability.lines())
            pml = SplitFieldPml(cloud, pml_spec, dt) if pml_spec is not None else None
            if pml is not None:
                pml.seed_from(state.ez)
            def advance(n):
                step_explicit_tmz(state, ops, source=(source_nodes, evaluate_source(source, n, dt) * source_weight)
                                  if source_nodes is not None else None, pec=pec, pml=pml)
        else:
            sigma_e = sigma_m = None
            if pml_spec is not None:
                pml_map = build_pml_map(cloud, pml_spec)
                sigma_e, sigma_m = lossy_rim_profiles(cloud, pml_map)
            imp = assemble_implicit(ctx, dt=dt, sign_mode=cfg.solver["sign_mode"],
                                    sigma_e=sigma_e, sigma_m=sigma_m)
            timings["assemble_s"] = time.perf_counter() - t1
            t2 = time.perf_counter()
            lstep = LafStepper(imp)
            timings["factor_s"] = time.perf_counter() - t2
            def advance(n):
                lstep.step(state, source=(source_nodes, evaluate_source(source, n, dt) * source_weight)
                           if source_nodes is not None else None, pec=pec)
        get_ez = lambda: state.ez
        get_energy = lambda: discrete_energy(cloud, state)
    timings.setdefault("assemble_s", time.perf_counter() - t1)

    def capture(step):
        if step in snapshot_steps:
            snap = {"ez": get_ez().copy()}
            if keep_h and solver != "fdtd":
                snap["hx"] = state.hx.copy()
                snap["hy"] = state.hy.copy()
            snapshots[step] = snap
        if probe_node is not None:
            probe.append((step, step * dt, float(get_ez()[probe_node])))
        if cfg.output["energy_trace"]:
            energy.append((step, step * dt, get_energy()))

    t3 = time.perf_counter()
    capture(0)
    for n in range(1, steps + 1):
        advance(n)
        m = float(np.max(np.abs(get_ez())))
        max_trace.append(m)
        if not np.isfinite(m) or m > threshold:
            raise DivergenceError(n, f"|E_z| = {m:.3e} exceeded {threshold:.3e}")
        capture(n)
    timings["step_s"] = time.perf_counter() - t3

    art = RunArtifact(
        name=name, solver=solver, dt=dt, dt_cfl=dt_cfl, steps=steps, cloud=cloud,
        snapshots=snapshots, probe=probe, energy=energy, max_ez_trace=max_trace,
        stability=stability, pec=pec, source_nodes=source_nodes, axis_nodes=axis_nodes,
        timings=timings, log=log, out_dir=out_dir,
    )
    art.metrics = {
        "dt_s": dt,
        "dt_cfl_s": dt_cfl,
        "steps": steps,
        "final_max_abs_ez": max_trace[-1] if max_trace else float(np.max(np.abs(ez0))),
        "peak_max_abs_ez": max(max_trace) if max_trace else float(np.max(np.abs(ez0))),
        "snapshot_steps": snapshot_steps,
    }
    if energy:
        art.metrics["final_energy"] = energy[-1][2]
        art.metrics["peak_energy"] = max(e[2] for e in energy)
    if out_dir is not None:
        write_artifact(art, cfg)
    return art


def _make_fdtd(cfg, cloud, dt, pml_spec, pec, ez0):
    nx, ny = cfg.domain["nx"], cfg.domain["ny"]
    pec_grid = None
    if pec is not None:
        pec_grid = np.zeros(nx * ny, dtype=bool)
        pec_grid[pec.e_indices] = True
        pec_grid = pec_grid.reshape(nx, ny)
    g = FdtdTmz(nx, ny, cloud.dr, dt, float(cloud.eps_e[0]), float(cloud.mu_h[0]),
                pml_spec=pml_spec, pec=pec_grid)
    g.ezx[:] = ez0.reshape(nx, ny)
    return g


def _fdtd_energy(g, cloud):
    cell = g.dr * g.dr
    e = float(np.sum(g.eps * g.ez**2)) * cell
    h = float(np.sum(g.mu * (g.hx**2))) * cell + float(np.sum(g.mu * (g.hy**2))) * cell
    return e + h


def snapshot_lines(art, step):
    """CSV lines for one snapshot (spec format, 17 significant digits)."""
    snap = art.snapshots[step]
    lines = [f"# scenario={art.name} step={step} time_s={step * art.dt:.17g} solver={art.solver}"]
    lines.append("role,x,y,field,value")
    pos = art.cloud.e_pos
    for i, v in enumerate(snap["ez"]):
        lines.append(f"E,{pos[i, 0]:.17g},{pos[i, 1]:.17g},Ez,{v:.17g}")
    if "hx" in snap:
        hp = art.cloud.h_pos
        for i in range(art.cloud.n_h):
            lines.append(f"H,{hp[i, 0]:.17g},{hp[i, 1]:.17g},Hx,{snap['hx'][i]:.17g}")
            lines.append(f"H,{hp[i, 0]:.17g},{hp[i, 1]:.17g},Hy,{snap['hy'][i]:.17g}")
    return lines


def read_snapshot(path):
    """Read back a snapshot CSV into (meta, {field: values})."""
    meta = {}
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, _, v = tok.partition("=")
                        meta[k] = v
                continue
            if not line or line.startswith("role,"):
                continue
            role, x, y, fieldname, value = line.split(",")
            fields.setdefault(fieldname, []).append(float(value))
    return meta, {k: np.asarray(v) for k, v in fields.items()}


def write_artifact(art, cfg):
    out = Path(art.out_dir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    for step in art.snapshots:
        path = out / "snapshots" / f"step_{step:05d}.csv"
        path.write_text("\n".join(snapshot_lines(art, step)) + "\n", encoding="utf-8")
    if art.probe:
        lines = ["step,time_s,value"] + [f"{s},{t:.17g},{v:.17g}" for s, t, v in art.probe]
        (out / "probe.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if art.energy:
        lines = ["step,time_s,value"] + [f"{s},{t:.17g},{v:.17g}" for s, t, v in art.energy]
        (out / "energy.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "metrics.json").write_text(
        json.dumps(art.metrics, sort_keys=True, indent=1, default=float) + "\n", encoding="utf-8"
    )
    if art.stability is not None:
        (out / "stability.txt").write_text("\n".join(art.stability.lines()) + "\n", encoding="utf-8")
    log = list(art.log) + [f"timing {k} = {v:.6f} s" for k, v in art.timings.items()]
    (out / "log.txt").write_text("\n".join(log) + "\n", encoding="utf-8")
