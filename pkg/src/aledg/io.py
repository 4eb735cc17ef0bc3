"""Run configuration and output files: fields.csv, indicators.csv, VTK, report.txt."""
from dataclasses import dataclass, fields as dc_fields
import csv
import os
import re

import numpy as np

from .basis import default_penalty
from .estimators import INDICATOR_HEADER, write_indicator_csv
from .scenarios import boundary_layer_scenario, smooth_scenario

SCENARIOS = ("boundary_layer", "smooth")
PROBES = ("coercivity", "inconsistency", "appendix", "apriori")
VARIANTS = {"boundary_layer": ("literal", "stream_function"),
            "smooth": ("absorbed", "static", "layer")}

# per-scenario defaults; the boundary-layer ones are the published experiment
SCENARIO_DEFAULTS = {
    "boundary_layer": dict(variant="literal", n=9, p=1, eps=0.01, dt=2.0 ** -16, steps=12,
                           substeps=2, amplitude=2.0 ** 16, sizes="6,9,18"),
    "smooth": dict(variant="absorbed", n=8, p=1, eps=1e-4, dt=1.0 / 64, steps=16,
                   substeps=2, amplitude=16.0, sizes="4,8,16"),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str = "boundary_layer"
    variant: str = "literal"
    n: int = 9
    p: int = 1
    eps: float = 0.01
    dt: float = 2.0 ** -16
    steps: int = 12
    substeps: int = 2
    theta: int = 1
    alpha: object = "auto"
    gamma0: float = 0.0
    amplitude: float = 2.0 ** 16
    emit: str = "1,final"
    output_dir: str = "output"
    probe: str = "coercivity"
    alpha_factor: float = 2.0
    sizes: str = "6,9,18"
    seed: int = 0
    samples: int = 20

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.variant not in VARIANTS[self.scenario]:
            raise ConfigError(f"variant for {self.scenario} must be one of "
                              f"{VARIANTS[self.scenario]}, got {self.variant!r}")
        if self.probe not in PROBES:
            raise ConfigError(f"probe must be one of {PROBES}, got {self.probe!r}")
        for name in ("n", "p", "steps", "substeps", "samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("eps", "dt", "amplitude", "alpha_factor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.gamma0 < 0:
            raise ConfigError(f"gamma0 must be >= 0, got {self.gamma0}")
        if self.theta not in (-1, 1):
            raise ConfigError(f"theta must be -1 or +1, got {self.theta}")
        if self.alpha != "auto" and not self.alpha > 0:
            raise ConfigError(f"alpha must be positive or 'auto', got {self.alpha}")
        self.emit_steps()
        self.size_list()

    def penalty(self):
        return default_penalty(self.p) if self.alpha == "auto" else float(self.alpha)

    def emit_steps(self):
        """Step numbers to write; ``all`` means every step including 0."""
        if self.emit.strip() == "all":
            return None
        out = set()
        for tok in self.emit.split(","):
            tok = tok.strip()
            if tok == "final":
                out.add(self.steps)
            elif tok.isdigit() and int(tok) <= self.steps:
                out.add(int(tok))
            else:
                raise ConfigError(f"emit entries must be step numbers in [0, steps], 'final' "
                                  f"or 'all', got {tok!r}")
        return tuple(sorted(out))

    def size_list(self):
        try:
            out = [int(s) for s in self.sizes.split(",")]
        except ValueError:
            raise ConfigError(f"sizes must be comma-separated integers, got {self.sizes!r}")
        if not out or min(out) < 1:
            raise ConfigError(f"sizes must be positive, got {self.sizes!r}")
        return out

    def build_scenario(self):
        if self.scenario == "boundary_layer":
            scn = boundary_layer_scenario(self.variant, self.eps, self.amplitude)
        else:
            scn = smooth_scenario(self.variant, self.eps, self.amplitude, self.dt, self.steps)
        scn.dt, scn.steps, scn.substeps = self.dt, self.steps, self.substeps
        return scn.with_gamma0(self.gamma0) if self.gamma0 else scn

    def to_text(self):
        return "".join(f"{f.name}={_format_value(getattr(self, f.name))}\n"
                       for f in dc_fields(self))


_POWER = re.compile(r"^\s*([+-]?\d+(?:\.\d*)?)\s*(?:\^|\*\*)\s*([+-]?\d+)\s*$")
_TYPES = {f.name: f.type for f in dc_fields(RunConfig)}


def _format_value(v):
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def parse_number(text):
    """Float, including ``b^k`` / ``b**k`` power literals (exact for powers of two)."""
    m = _POWER.match(text)
    if m:
        return float(m.group(1)) ** int(m.group(2))
    return float(text)


def _convert(key, text):
    kind = _TYPES[key]
    if key == "alpha":
        return "auto" if text == "auto" else parse_number(text)
    if kind is int or kind == "int":
        v = parse_number(text)
        if v != int(v):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(v)
    if kind is float or kind == "float":
        return parse_number(text)
    return text


def parse_pairs(pairs, source="config"):
    """Convert (line number, key, text) triples into typed values; unknown keys rejected."""
    out = {}
    for lineno, key, text in pairs:
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _convert(key, text)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return out


def read_pairs(text, source="config"):
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs.append((lineno, key.replace("-", "_"), value))
    return pairs


def make_config(values):
    """RunConfig from explicit values; unset keys take the scenario defaults."""
    scenario = values.get("scenario", "boundary_layer")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    merged = dict(SCENARIO_DEFAULTS[scenario])
    merged.update(values)
    return RunConfig(**merged)


def parse_config(text, overrides=None, source="config"):
    values = parse_pairs(read_pairs(text, source), source)
    if overrides:
        values.update(overrides)
    return make_config(values)


# --- outputs ------------------------------------------------------------------------

FIELDS_HEADER = "step,t,element,node,x,y,value\n"


def write_fields_csv(space, snapshots, fh):
    fh.write(FIELDS_HEADER)
    for snap in snapshots:
        xn = space.node_part(snap.state.x)
        for k in range(space.n_elements):
            for i in range(space.m):
                fh.write(f"{snap.step},{snap.t:.17g},{k},{i},{xn[k, i, 0]:.17g},"
                         f"{xn[k, i, 1]:.17g},{snap.coeffs[k, i]:.17g}\n")


def read_fields_csv(path):
    """{step: (t, coefficients (K, m), node positions (K, m, 2))} from fields.csv."""
    rows = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(int(r["step"]), []).append(r)
    out = {}
    for step, rs in rows.items():
        K = max(int(r["element"]) for r in rs) + 1
        m = max(int(r["node"]) for r in rs) + 1
        c = np.zeros((K, m))
        x = np.zeros((K, m, 2))
        for r in rs:
            k, i = int(r["element"]), int(r["node"])
            c[k, i] = float(r["value"])
            x[k, i] = float(r["x"]), float(r["y"])
        out[step] = (float(rs[0]["t"]), c, x)
    return out


def write_vtk(space, snap, fh, title="aledg"):
    """Legacy ASCII unstructured grid: element nodes as points, vertex triangles as cells."""
    K, m = space.n_elements, space.m
    xn = space.node_part(snap.state.x).reshape(-1, 2)
    fh.write("# vtk DataFile Version 3.0\n")
    fh.write(f"{title} step={snap.step} t={snap.t:.17g}\n")
    fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    fh.write(f"POINTS {K * m} double\n")
    for x, y in xn:
        fh.write(f"{x:.17g} {y:.17g} 0\n")
    # the first three Lagrange nodes of every element are its vertices
    fh.write(f"CELLS {K} {4 * K}\n")
    for k in range(K):
        fh.write(f"3 {k * m} {k * m + 1} {k * m + 2}\n")
    fh.write(f"CELL_TYPES {K}\n")
    fh.write("5\n" * K)
    fh.write(f"CELL_DATA {K}\nSCALARS eta_K2 double 1\nLOOKUP_TABLE default\n")
    eta = snap.report.eta_K2 if snap.report is not None else np.full(K, np.nan)
    for v in eta:
        fh.write(f"{v:.17g}\n")
    fh.write(f"POINT_DATA {K * m}\nSCALARS u_h double 1\nLOOKUP_TABLE default\n")
    for v in snap.coeffs.ravel():
        fh.write(f"{v:.17g}\n")


def report_table(snapshots):
    lines = ["step t l2_error energy_error eta_K2_sum eta1_sq eta2_sq eta3_sq"]
    for snap in snapshots:
        r = snap.report
        if r is None:
            lines.append(f"{snap.step} {snap.t:.17g} nan nan nan nan nan nan")
            continue
        vals = [r.norms.get("l2_error", np.nan), r.norms.get("energy_error", np.nan),
                r.eta_total, r.eta1_sq, r.eta2_sq, r.eta3_sq]
        lines.append(f"{snap.step} {snap.t:.17g} " + " ".join(f"{v:.17g}" for v in vals))
    return "\n".join(lines) + "\n"


def _open(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def write_outputs(trajectory, out_dir, header="", extra=""):
    """fields.csv, indicators.csv, one VTK file per snapshot and report.txt.

    ``header`` (e.g. the run configuration) and ``extra`` (tables) go to report.txt.
    Returns the list of written paths.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out_dir}: {exc.strerror}") from exc
    space, snaps = trajectory.space, trajectory.snapshots
    written = []
    path = os.path.join(out_dir, "fields.csv")
    with _open(path) as fh:
        write_fields_csv(space, snaps, fh)
    written.append(path)
    path = os.path.join(out_dir, "indicators.csv")
    with _open(path) as fh:
        fh.write(INDICATOR_HEADER)
        for snap in snaps:
            if snap.report is not None:
                write_indicator_csv(space, snap.report, snap.step, fh)
    written.append(path)
    for snap in snaps:
        path = os.path.join(out_dir, f"snapshot_{snap.step:05d}.vtk")
        with _open(path) as fh:
            write_vtk(space, snap, fh)
        written.append(path)
    path = os.path.join(out_dir, "report.txt")
    with _open(path) as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n\n")
        fh.write(report_table(snaps))
        if extra:
            fh.write("\n" + extra.rstrip("\n") + "\n")
    written.append(path)
    return written
