"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (bad flag, config or I/O),
2 numerical failure (solver error or spectral mismatch).
"""

from __future__ import annotations

import argparse
import io
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, replace_fields
from .emit import (
    OutputError,
    TreeDocument,
    emit_events,
    emit_lsystem,
    emit_svg,
    emit_timeseries,
    write_atomic,
)
from .growth import GrowthError, grow, tree_metrics
from .integrator import IntegrationError, integrate
from .kinetics import ParameterError, equilibria, saturation_index
from .spectrum import SpectrumError, verify_spectrum
from .system import EventRecord, crossing_events, make_rhs, saturation_events
from .vladimirov import DiffusionOperator, build_generator

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML configuration file")
    common.add_argument("--seed", type=int, help="RNG seed (growth.seed)")
    common.add_argument("--out", metavar="DIR", help="output directory (output.directory)")
    common.add_argument("--format", metavar="LIST",
                        help="comma-separated subset of csv,json,svg,lsys")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config field, e.g. model.sigma=0.5")

    parser = _Parser(prog="ultracoral", description="p-adic reaction-diffusion coral growth")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, text in [
        ("react", "single-compartment kinetics run"),
        ("simulate", "coupled run at a fixed level (growth.m_max)"),
        ("grow", "full branching simulation"),
        ("matrix", "write the diffusion generator as CSV"),
        ("spectrum", "verify the generator spectrum against the closed form"),
        ("analyze", "equilibria and their stability"),
    ]:
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config, args.overrides)
    updates = {}
    if args.seed is not None:
        updates["growth__seed"] = args.seed
    if args.out is not None:
        updates["output__directory"] = args.out
    if args.format is not None:
        updates["output__formats"] = [f.strip() for f in args.format.split(",") if f.strip()]
    return replace_fields(cfg, **updates) if updates else cfg


def _out(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.output_dir(), name)


def _records(tr, idx_per_event, n, kappa_sp, kinds):
    out = []
    for hit in tr.events:
        comp = int(idx_per_event[hit.event][hit.component])
        y = hit.y
        u, v, w = float(y[comp]), float(y[n + comp]), float(y[2 * n + comp])
        out.append(EventRecord(comp, kinds[hit.event], hit.t, u, v, w,
                               float(saturation_index(u, v, kappa_sp)), hit.degenerate))
    return out


def run_fixed_level(cfg: RunConfig, m: int):
    """Plain coupled integration to ``solver.t_end`` with crossings logged, not acted on."""
    kp = cfg.kinetic_params()
    p = cfg.model.p
    n = p**m
    op = DiffusionOperator(p, m, cfg.model.alpha)
    u, v, w = cfg.initial_vectors(n)
    y0 = np.array(u + v + w, dtype=float)
    idx = np.arange(n)
    cross = crossing_events(idx, n, terminal=False)
    sat = saturation_events(idx, n, kp.kappa_sp, cfg.growth.omega_threshold)
    tr = integrate(make_rhs(kp, op), y0, 0.0, cfg.solver.t_end, cfg.solver_config(), [cross, sat])
    return tr, _records(tr, [idx, idx], n, kp.kappa_sp, ["crossing", "saturation"])


def cmd_react(cfg: RunConfig, stdout) -> int:
    tr, events = run_fixed_level(cfg, 0)
    _write_run(cfg, tr, events, stdout)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, stdout) -> int:
    tr, events = run_fixed_level(cfg, cfg.growth.m_max)
    _write_run(cfg, tr, events, stdout)
    return EXIT_OK


def _write_run(cfg, tr, events, stdout):
    if "csv" in cfg.output.formats:
        write_atomic(_out(cfg, "timeseries.csv"), emit_timeseries(tr.t, tr.y))
        write_atomic(_out(cfg, "events.csv"), emit_events(events))
    print(f"t_end={tr.t_final!r} steps={tr.n_accepted} samples={len(tr.t)}", file=stdout)
    for e in events:
        print(f"{e.kind} branch={e.branch} t={e.time!r} omega={e.omega!r}", file=stdout)


def cmd_grow(cfg: RunConfig, stdout) -> int:
    tree = grow(cfg.growth_config(), cfg.kinetic_params(), cfg.initial_state())
    fmts = cfg.output.formats
    o = cfg.output
    if "json" in fmts:
        write_atomic(_out(cfg, "tree.json"), TreeDocument.from_tree(tree).to_json())
    if "svg" in fmts:
        write_atomic(_out(cfg, "tree.svg"), emit_svg(tree.root, o.svg_angle, o.svg_length_scale))
    if "lsys" in fmts:
        write_atomic(_out(cfg, "tree.lsys"), emit_lsystem(tree.root, o.svg_angle) + "\n")
    if "csv" in fmts:
        for lv in tree.levels:
            write_atomic(_out(cfg, f"events_level{lv.level}.csv"), emit_events(lv.events))
            write_atomic(_out(cfg, f"timeseries_level{lv.level}.csv"), emit_timeseries(lv.t, lv.y))
    mt = tree_metrics(tree)
    print(
        f"levels={tree.final_level + 1} branches={mt.count} leaves={mt.leaf_count} "
        f"lifetime min={mt.min_lifetime!r} max={mt.max_lifetime!r} "
        f"relative_range={mt.relative_range!r}",
        file=stdout,
    )
    return EXIT_OK


def cmd_matrix(cfg: RunConfig, stdout) -> int:
    A = build_generator(cfg.model.p, cfg.growth.m_max, cfg.model.alpha)
    buf = io.StringIO()
    for row in A.entries.tolist():
        buf.write(",".join(map(repr, row)) + "\n")
    write_atomic(_out(cfg, "matrix.csv"), buf.getvalue())
    print(f"wrote {A.size}x{A.size} generator to {_out(cfg, 'matrix.csv')}", file=stdout)
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, stdout) -> int:
    rep = verify_spectrum(cfg.model.p, cfg.growth.m_max, cfg.model.alpha)
    lines = ["eigenvalue,multiplicity,expected,abs_error"]
    for r in rep.rows:
        lines.append(f"{r.eigenvalue!r},{r.multiplicity},{r.expected!r},{r.abs_error!r}")
    text = "\n".join(lines) + "\n"
    write_atomic(_out(cfg, "spectrum.csv"), text)
    stdout.write(text)
    if not rep.ok():
        print(f"spectrum mismatch: max error {rep.max_abs_error!r}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, stdout) -> int:
    eqs = equilibria(cfg.kinetic_params())
    rows = [("u", "v", "lambda1", "lambda2", "classification")]
    for e in eqs:
        rows.append((repr(e.point[0]), repr(e.point[1]), repr(e.eigenvalues[0]),
                     repr(e.eigenvalues[1]), e.classification))
    csv_text = "\n".join(",".join(r) for r in rows) + "\n"
    if "csv" in cfg.output.formats:
        write_atomic(_out(cfg, "equilibria.csv"), csv_text)
    widths = [max(len(r[k]) for r in rows) for k in range(5)]
    for r in rows:
        print("  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip(), file=stdout)
    return EXIT_OK


COMMANDS = {
    "react": cmd_react,
    "simulate": cmd_simulate,
    "grow": cmd_grow,
    "matrix": cmd_matrix,
    "spectrum": cmd_spectrum,
    "analyze": cmd_analyze,
}


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, stdout)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (IntegrationError, GrowthError, SpectrumError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
