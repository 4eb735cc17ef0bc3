"""Command line: solve, probe, converge and compare-static-moving.

Exit codes: 0 success, 1 invalid configuration or a failed check, 2 runtime
failure (entanglement, non-SPD mass matrix, non-finite solution, I/O).
"""
import argparse
import logging
import os
import sys

import numpy as np

from . import io as aio
from .flowmap import EntanglementError
from .forms import NonSPDError
from .mesh import build_structured_unit_square
from .probes import (coercivity_probe, compare_static_moving, convergence_study,
                     inconsistency_probe, simulate, theorem_constant_diagnostics,
                     appendix_bound_probe)
from .scenarios import smooth_scenario
from .velocity import VelocityModel

log = logging.getLogger("aledg")

OUTPUT_ENV = "ALEDG_OUTPUT_DIR"


def coercivity_floor(theta, alpha_factor):
    """(floor, strict): NIPG needs >= 0.45; SIPG > 0 below 4 C_T and >= 0.2 from 4 C_T."""
    if theta == -1:
        return 0.45, False
    return (0.2, False) if alpha_factor >= 4.0 else (0.0, True)


def build_parser():
    ap = argparse.ArgumentParser(
        prog="aledg", description="ALE interior-penalty DG solver and verification probes.",
        epilog="Any config key may be overridden as --key=value.")
    ap.add_argument("--config", help="key=value configuration file")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", help="run one scenario and write fields, indicators, VTK, report")
    pr = sub.add_parser("probe", help="run one verification probe")
    pr.add_argument("kind", choices=aio.PROBES)
    sub.add_parser("converge", help="mesh sweep over `sizes` with rate table")
    sub.add_parser("compare-static-moving", help="scenario mesh velocity vs a static mesh")
    return ap


def parse_overrides(extra):
    pairs = []
    for i, arg in enumerate(extra, 1):
        if not arg.startswith("--") or "=" not in arg:
            raise aio.ConfigError(f"argument {arg!r}: overrides must look like --key=value")
        key, value = arg[2:].split("=", 1)
        pairs.append((i, key.replace("-", "_"), value))
    return aio.parse_pairs(pairs, source="argv")


def load_config(args, extra):
    text = ""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise aio.ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
    values = aio.parse_pairs(aio.read_pairs(text, args.config or "config"),
                             args.config or "config")
    if os.environ.get(OUTPUT_ENV):
        values["output_dir"] = os.environ[OUTPUT_ENV]
    values.update(parse_overrides(extra))
    return aio.make_config(values)


def _write_text(cfg, name, text):
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def cmd_solve(cfg, out):
    scn = cfg.build_scenario()
    res = simulate(scn, cfg.n, cfg.p, cfg.theta, cfg.penalty(), emit=cfg.emit_steps(),
                   progress=sys.stderr)
    extra = f"effectivity {res.effectivity:.17g}\nS0 {res.s0:.17g}\n"
    paths = aio.write_outputs(res.trajectory, cfg.output_dir, cfg.to_text(), extra)
    for p in paths:
        out.write(p + "\n")
    return True


def _line(out, name, ok, detail):
    out.write(f"{'PASS' if ok else 'FAIL'} {name} {detail}\n")
    return ok


def probe_coercivity(cfg, out):
    rep = coercivity_probe(cfg.p, cfg.theta, cfg.alpha_factor, eps=cfg.eps, seed=cfg.seed)
    floor, strict = coercivity_floor(cfg.theta, cfg.alpha_factor)
    ok = rep.min_ratio > 0 if strict else rep.min_ratio >= floor
    rel = ">" if strict else ">="
    return _line(out, "coercivity", ok, f"p={cfg.p} theta={cfg.theta} alpha_factor="
                 f"{cfg.alpha_factor:g} fields={rep.ratios.size} min_ratio={rep.min_ratio:.17g} "
                 f"required{rel}{floor:g}")


def probe_inconsistency(cfg, out):
    scn = smooth_scenario("absorbed", cfg.eps)
    rep = inconsistency_probe(scn, cfg.size_list(), cfg.p, alpha=cfg.penalty())
    rates = rep.rates
    for n, v in zip(rep.n, rep.values):
        out.write(f"n={n} defect={v:.17g}\n")
    return _line(out, "inconsistency", bool(np.all(rates >= 0.9)),
                 "rates=" + ",".join(f"{r:.6g}" for r in rates) + " required>=0.9")


def probe_appendix(cfg, out):
    if cfg.scenario != "boundary_layer":
        raise aio.ConfigError("probe appendix needs scenario=boundary_layer")
    mesh_v = cfg.build_scenario().vel.mesh
    samples = appendix_bound_probe(VelocityModel(flow=mesh_v, mesh=mesh_v),
                                   build_structured_unit_square(cfg.n), cfg.dt, cfg.steps,
                                   cfg.substeps, cfg.samples, cfg.seed)
    ok_all = True
    for s in samples:
        for name, m in zip(("L2", "H1", "H2"), s.margins()):
            ok_all &= _line(out, f"appendix-{name}", m >= -1e-12,
                            f"t={s.t:.17g} element={s.element} log_margin={m:.17g}")
    return ok_all


def probe_apriori(cfg, out):
    rep = theorem_constant_diagnostics(cfg.build_scenario(), cfg.n, cfg.p, cfg.theta,
                                       cfg.penalty())
    for t, l, r in zip(rep.times, rep.lhs, rep.rhs):
        out.write(f"t={t:.17g} lhs={l:.17g} rhs={r:.17g}\n")
    return _line(out, "apriori", rep.ok, f"theta={cfg.theta} constant={rep.constant:.17g}")


PROBES = {"coercivity": probe_coercivity, "inconsistency": probe_inconsistency,
          "appendix": probe_appendix, "apriori": probe_apriori}


def cmd_converge(cfg, out):
    tab = convergence_study(cfg.build_scenario(), cfg.size_list(), cfg.p, cfg.theta,
                            cfg.penalty())
    text = tab.format()
    out.write(text)
    _write_text(cfg, "report.txt", cfg.to_text() + "\n" + text)
    return True


def cmd_compare(cfg, out):
    rep = compare_static_moving(cfg.build_scenario(), cfg.n, cfg.p, cfg.theta, cfg.penalty())
    aio.write_outputs(rep.moving.trajectory, os.path.join(cfg.output_dir, "moving"),
                      cfg.to_text())
    aio.write_outputs(rep.static.trajectory, os.path.join(cfg.output_dir, "static"),
                      cfg.to_text())
    lines = [f"l2_moving {rep.l2_moving:.17g}", f"l2_static {rep.l2_static:.17g}",
             f"argmax_moving {rep.argmax_moving} at {rep.centroid_moving[0]:.6g},"
             f"{rep.centroid_moving[1]:.6g} boundary_adjacent={rep.moving_at_boundary}",
             f"argmax_static {rep.argmax_static} at {rep.centroid_static[0]:.6g},"
             f"{rep.centroid_static[1]:.6g} high_speed_band={rep.static_in_band}"]
    text = "\n".join(lines) + "\n"
    out.write(text)
    ok = _line(out, "ordering", rep.ordering_ok, "moving < static")
    ok &= _line(out, "location", rep.location_ok,
                "moving argmax boundary-adjacent, static argmax in high-speed band")
    _write_text(cfg, "compare.txt", text)
    return ok


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    ap = build_parser()
    args, extra = ap.parse_known_args(argv)
    try:
        cfg = load_config(args, extra)
    except aio.ConfigError as exc:
        log.error("%s", exc)
        return 1
    try:
        if args.command == "solve":
            ok = cmd_solve(cfg, out)
        elif args.command == "probe":
            ok = PROBES[args.kind](cfg, out)
        elif args.command == "converge":
            ok = cmd_converge(cfg, out)
        else:
            ok = cmd_compare(cfg, out)
    except aio.ConfigError as exc:
        log.error("%s", exc)
        return 1
    except (EntanglementError, NonSPDError, FloatingPointError, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
