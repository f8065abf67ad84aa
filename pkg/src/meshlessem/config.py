"""Line-oriented scenario configuration.

Format: ``[section]`` headers and ``key = value`` lines, ``#`` comments.
Sections and keys are fixed; unknown keys, duplicates and constraint
violations are rejected with line numbers.  Values use SI units.
"""

from dataclasses import dataclass, field

from .errors import ConfigError

REQUIRED_SECTIONS = ("domain", "discretization", "solver", "boundary", "source", "output")

# per-section key tables: name -> (parser, default); REQUIRED means no default
REQUIRED = object()


def _bool(text):
    if text.lower() in ("true", "yes", "1", "on"):
        return True
    if text.lower() in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _str(text):
    return text


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text
    return parse


def _int_list(text):
    return [int(tok) for tok in text.replace(",", " ").split()]


def _position(text):
    if text == "center":
        return "center"
    toks = text.replace(",", " ").split()
    if len(toks) == 1:
        return int(toks[0])
    if len(toks) == 2:
        return (float(toks[0]), float(toks[1]))
    raise ValueError(f"position must be 'center', a node index or 'x,y': {text!r}")


SCHEMA = {
    "domain": {
        "type": (_choice("rectangle", "cylinder"), REQUIRED),
        "nx": (_int, None),
        "ny": (_int, None),
        "dr": (_float, None),
        "r0": (_float, None),
        "n_per_side": (_int, None),
    },
    "discretization": {
        "distribution": (_choice("regular", "jittered"), "regular"),
        "jitter_fraction": (_float, 0.0),
        "seed": (_int, 0),
        "freeze_rim": (_bool, True),
        "alpha": (_float, 0.7075),
        "kernel": (_choice("cubic-b-spline", "gaussian-truncated"), "cubic-b-spline"),
        "support_factor": (_float, None),
        "volume_mode": (_choice("uniform", "voronoi"), "uniform"),
    },
    "solver": {
        "type": (_choice("explicit-spem", "laf-spem", "fdtd"), REQUIRED),
        "sign_mode": (_choice("standard-plus", "literal-paper"), "standard-plus"),
        "dt_policy": (_choice("cfl-multiple", "absolute", "auto-stable"), "cfl-multiple"),
        "dt_factor": (_float, 1.0),
        "dt_seconds": (_float, None),
        "safety_factor": (_float, 0.9),
        "cfl_convention": (_choice("half-step", "sqrt-d"), "half-step"),
        "steps": (_int, REQUIRED),
    },
    "boundary": {
        "type": (_choice("pml", "pec-rim", "pec-geometry", "none"), REQUIRED),
        "pml_layers": (_int, 10),
        "pml_order": (_float, 3.0),
        "pml_reflection": (_float, 1e-6),
        "pec_rim_width_dr": (_float, 0.5),
        "horn_feed_x": (_float, 0.0375),
        "horn_flare_x": (_float, 0.0875),
        "horn_mouth_x": (_float, 0.1625),
        "horn_guide_width": (_float, 0.025),
        "horn_mouth_width": (_float, 0.1),
        "horn_source_x": (_float, 0.05),
    },
    "source": {
        "kind": (_choice("gaussian-pulse", "sinusoid", "none"), REQUIRED),
        "amplitude": (_float, 1.0),
        "t0_steps": (_float, 20.0),
        "width_sq_steps": (_float, 72.0),
        "frequency_hz": (_float, None),
        "position": (_position, "center"),
        "initial": (_choice("none", "cavity-parabola"), "none"),
    },
    "output": {
        "name": (_str, "scenario"),
        "snapshot_steps": (_int_list, []),
        "probe": (_choice("none", "source-node", "center"), "none"),
        "profile_cut_cells": (_int, None),
        "energy_trace": (_bool, True),
    },
}


@dataclass
class ScenarioConfig:
    domain: dict
    discretization: dict
    solver: dict
    boundary: dict
    source: dict
    output: dict
    parse_log: list = field(default_factory=list)

    def override(self, section, key, value):
        parser, _ = SCHEMA[section][key]
        getattr(self, section)[key] = parser(str(value))


def _validate(cfg):
    dom = cfg.domain
    if dom["type"] == "rectangle":
        for key in ("nx", "ny", "dr"):
            if dom[key] is None:
                raise ConfigError(f"[domain] rectangle needs '{key}'")
        if dom["nx"] < 2 or dom["ny"] < 2:
            raise ConfigError("[domain] nx and ny must be at least 2")
        if dom["dr"] <= 0:
            raise ConfigError("[domain] dr must be positive")
    else:
        for key in ("r0", "n_per_side"):
            if dom[key] is None:
                raise ConfigError(f"[domain] cylinder needs '{key}'")
        if dom["r0"] <= 0 or dom["n_per_side"] < 4:
            raise ConfigError("[domain] cylinder needs r0 > 0 and n_per_side >= 4")
    dis = cfg.discretization
    if not 0.0 <= dis["jitter_fraction"] < 0.5:
        raise ConfigError("[discretization] jitter_fraction must lie in [0, 0.5)")
    if dis["alpha"] <= 0:
        raise ConfigError("[discretization] alpha must be positive")
    if dis["support_factor"] is None:
        dis["support_factor"] = 2.0 if dis["kernel"] == "cubic-b-spline" else 3.0
        cfg.parse_log.append(f"default: support_factor = {dis['support_factor']}")
    sol = cfg.solver
    if sol["steps"] < 0:
        raise ConfigError("[solver] steps must be non-negative")
    if sol["dt_policy"] == "cfl-multiple" and sol["dt_factor"] <= 0:
        raise ConfigError("[solver] dt_factor must be positive")
    if sol["dt_policy"] == "absolute" and (sol["dt_seconds"] is None or sol["dt_seconds"] <= 0):
        raise ConfigError("[solver] absolute dt policy needs dt_seconds > 0")
    src = cfg.source
    if src["kind"] == "sinusoid" and (src["frequency_hz"] is None or src["frequency_hz"] <= 0):
        raise ConfigError("[source] sinusoid needs frequency_hz > 0")
    if src["kind"] == "gaussian-pulse" and (src["t0_steps"] <= 0 or src["width_sq_steps"] <= 0):
        raise ConfigError("[source] gaussian pulse needs positive t0_steps and width_sq_steps")
    bnd = cfg.boundary
    if bnd["type"] == "pml" and cfg.domain["type"] != "rectangle":
        raise ConfigError("[boundary] pml needs a rectangular domain")
    if bnd["type"] == "pec-geometry" and cfg.domain["type"] != "rectangle":
        raise ConfigError("[boundary] pec-geometry needs a rectangular domain")
    if cfg.solver["type"] == "fdtd" and cfg.domain["type"] != "rectangle":
        raise ConfigError("[solver] the fdtd reference runs on rectangular domains only")
    out = cfg.output
    if any(s < 0 for s in out["snapshot_steps"]):
        raise ConfigError("[output] snapshot steps must be non-negative")


def parse_config(text):
    """Parse and fully validate a scenario; defaults are recorded in the
    parse log."""
    sections = {}
    seen_lines = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("malformed section header", line=lineno)
            name = line[1:-1].strip()
            if name not in SCHEMA:
                raise ConfigError(f"unknown section [{name}]", line=lineno)
            if name in sections:
                raise ConfigError(f"duplicate section [{name}]", line=lineno)
            sections[name] = {}
            current = name
            continue
        if current is None:
            raise ConfigError("key outside any section", line=lineno)
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if key not in SCHEMA[current]:
            raise ConfigError(f"unknown key '{key}' in [{current}]", line=lineno)
        if (current, key) in seen_lines:
            raise ConfigError(
                f"duplicate key '{key}' in [{current}] (first set on line {seen_lines[(current, key)]})",
                line=lineno,
            )
        seen_lines[(current, key)] = lineno
        if value == "":
            continue  # explicit blank keeps the default
        parser, _ = SCHEMA[current][key]
        try:
            sections[current][key] = parser(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for '{key}': {exc}", line=lineno) from exc

    missing = [s for s in REQUIRED_SECTIONS if s not in sections]
    if missing:
        raise ConfigError("missing required sections: " + ", ".join(f"[{s}]" for s in missing))

    parse_log = []
    resolved = {}
    for name in REQUIRED_SECTIONS:
        table = SCHEMA[name]
        out = {}
        for key, (parser, default) in table.items():
            if key in sections[name]:
                out[key] = sections[name][key]
            elif default is REQUIRED:
                raise ConfigError(f"[{name}] is missing required key '{key}'")
            else:
                out[key] = default
                if default is not None:
                    parse_log.append(f"default: [{name}] {key} = {default}")
        resolved[name] = out
    cfg = ScenarioConfig(
        domain=resolved["domain"],
        discretization=resolved["discretization"],
        solver=resolved["solver"],
        boundary=resolved["boundary"],
        source=resolved["source"],
        output=resolved["output"],
        parse_log=parse_log,
    )
    _validate(cfg)
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
