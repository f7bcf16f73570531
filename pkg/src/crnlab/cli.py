"""Command-line entry point: ``crnlab <subcommand> ...``.

Exit status is 0 on success, 1 for invalid input and 2 when a run breaks
down numerically.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence, TextIO

import numpy as np

from . import io
from .config import ConfigError, RunConfig, load_config
from .equilibria import (
    Equilibrium,
    NoEquilibriumError,
    all_equilibria,
    boundary_equilibria,
    boundary_growth_rate,
    class_of,
    positive_equilibrium,
)
from .experiments import (
    default_stability_shape,
    project_in_class,
    run_instability_experiment,
    run_stability_experiment,
)
from .fitting import fit_exponential_rate
from .network import NetworkSyntaxError, ReactionNetwork, conservation_basis, format_network, parse_network
from .simulator import FieldSet, SimulationError, simulate

OUT_ENV = "CRNLAB_OUT"
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.12g}"


def _csv(values) -> str:
    return ",".join(_num(float(v)) for v in values)


def table(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    cells = [list(map(str, header))] + [[r if isinstance(r, str) else _num(float(r)) for r in row] for row in rows]
    widths = [max(len(row[j]) for row in cells) for j in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _basis_lines(net: ReactionNetwork) -> list[str]:
    out = []
    for m, row in enumerate(conservation_basis(net), start=1):
        terms = [(f"{c}{n}" if c != 1 else n) for c, n in zip(row, net.names) if c != 0]
        out.append(f"M{m} = " + " + ".join(terms))
    return out


def _growth(net: ReactionNetwork, eq: Equilibrium) -> float:
    return boundary_growth_rate(net, eq) if eq.kind == "boundary" else eq.growth_rate


def resolve_out(cfg_dir: Path, flag: Optional[str]) -> Path:
    """``--out`` wins, then ``$CRNLAB_OUT``, then ``output.dir``."""
    if flag:
        return Path(flag)
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    return cfg_dir


def _write_report(path: Path, items) -> None:
    io.atomic_write(path, "".join(f"{k}={_num(float(v))}\n" for k, v in items))


def _emit_items(items, out: TextIO) -> None:
    print(table(["quantity", "value"], [(k, v) for k, v in items]), file=out)
    for k, v in items:
        print(f"{k}={_num(float(v))}", file=out)


# --------------------------------------------------------------------------
# flows


def flow_parse(net: ReactionNetwork, out: TextIO) -> int:
    print(format_network(net), file=out)
    print("species: " + " ".join(net.names), file=out)
    for n, p in enumerate(net.pairs, start=1):
        print(f"pair {n}: alpha={_csv(p.alpha)} beta={_csv(p.beta)} kf={_num(p.k_fwd)} kr={_num(p.k_bwd)}", file=out)
    if len(net.pairs) == 1:
        s = net.index_sets()
        for label, idx in (("L", s.L), ("R", s.R), ("L0", s.L0), ("R0", s.R0)):
            print(f"{label}: " + " ".join(net.names[i] for i in sorted(idx)), file=out)
        print(f"gamma={_csv(s.gamma)}", file=out)
    for line in _basis_lines(net):
        print(line, file=out)
    return EXIT_OK


def flow_analyze(net: ReactionNetwork, mean: np.ndarray, out: TextIO) -> int:
    cls = class_of(net, mean)
    print(format_network(net), file=out)
    for line in _basis_lines(net):
        print(line, file=out)
    print("totals: " + " ".join(f"M{m}={_num(v)}" for m, v in enumerate(cls.totals, start=1)), file=out)
    eqs = all_equilibria(net, cls)
    rows = [(e.kind, *e.value, _growth(net, e), "yes" if e.degenerate else "no") for e in eqs]
    print(table(["kind", *net.names, "growth", "degenerate"], rows), file=out)
    for e in eqs:
        print(f"equilibrium kind={e.kind} value={_csv(e.value)} growth={_num(_growth(net, e))}", file=out)
    return EXIT_OK


def _reference(cfg: RunConfig) -> Optional[Equilibrium]:
    if cfg.reference == "none":
        return None
    cls = class_of(cfg.network, cfg.initial_mean())
    if cfg.reference == "positive":
        return positive_equilibrium(cfg.network, cls)
    for eq in boundary_equilibria(cfg.network, cls):
        if not eq.degenerate:
            return eq
    raise NoEquilibriumError("class has no nondegenerate boundary equilibrium")


def flow_simulate(cfg: RunConfig, out_dir: Path, figures: bool, out: TextIO) -> int:
    names = list(cfg.network.names)

    def snapshot(i, state):
        io.write_snapshot(state, names, out_dir / f"snapshot_{i:06d}.csv")

    traj = simulate(
        cfg.network,
        cfg.initial_state(),
        cfg.sim,
        reference=_reference(cfg),
        on_snapshot=snapshot if cfg.snapshot_every else None,
        snapshot_every=cfg.snapshot_every,
    )
    diag = traj.diagnostics
    io.write_diagnostics(diag, out_dir / "diagnostics.csv")
    io.write_snapshot(traj.final, names, out_dir / "final.csv")
    drift = np.max(np.abs(diag.totals - diag.totals[0]) / np.maximum(np.abs(diag.totals[0]), 1e-300), axis=0)
    items = [("t_end", diag.t[-1]), ("samples", diag.t.size)]
    items += [(f"final_mean_{n}", v) for n, v in zip(names, diag.mean[-1])]
    items += [(f"drift_{m}", v) for m, v in zip(diag.total_names, drift)]
    _write_report(out_dir / "summary.txt", items)
    if figures:
        from .plotting import plot_diagnostics

        plot_diagnostics(diag, out_dir / "diagnostics.png")
    _emit_items(items, out)
    return EXIT_OK


def _instability_one(cfg: RunConfig, delta: float, theta0: float, out_dir: Path):
    net = cfg.network
    cls = class_of(net, cfg.initial_mean())
    shape = None
    pert = cfg.perturbation_values()
    if pert is not None:
        eq_value = np.zeros(net.n_species)
        shape = FieldSet(cfg.domain, eq_value, pert)
    report = run_instability_experiment(net, cls, shape, delta, theta0, cfg.sim, domain=cfg.domain)
    io.write_diagnostics(report.trajectory.diagnostics, out_dir / "diagnostics.csv")
    _write_report(out_dir / "report.txt", report.items())
    return report


def _plot_instability(report, out_dir: Path) -> None:
    from .plotting import plot_instability

    plot_instability(report, out_dir / "instability.png")


def flow_instability(cfg: RunConfig, deltas: Sequence[float], theta0: float, out_dir: Path,
                     figures: bool, workers: int, out: TextIO) -> int:
    if len(deltas) == 1:
        report = _instability_one(cfg, deltas[0], theta0, out_dir)
        if figures:
            _plot_instability(report, out_dir)
        _emit_items(report.items(), out)
        return EXIT_OK
    dirs = [out_dir / f"delta_{d:.3e}" for d in deltas]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        reports = list(pool.map(lambda a: _instability_one(cfg, a[0], theta0, a[1]), zip(deltas, dirs)))
    if figures:
        for report, d in zip(reports, dirs):
            _plot_instability(report, d)
    keys = [k for k, _ in reports[0].items()]
    print(table(keys, [[v for _, v in r.items()] for r in reports]), file=out)
    for r in reports:
        print(" ".join(f"{k}={_num(float(v))}" for k, v in r.items()), file=out)
    taus = np.array([r.tau0_proxy for r in reports])
    spread = float((taus.max() - taus.min()) / taus.min()) if np.all(np.isfinite(taus)) else math.nan
    print(f"tau0_spread={_num(spread)}", file=out)
    rows = [[f"{k}={_num(float(v))}" for k, v in r.items()] for r in reports]
    io.atomic_write(out_dir / "sweep.txt", "".join(" ".join(row) + "\n" for row in rows) + f"tau0_spread={_num(spread)}\n")
    return EXIT_OK


def flow_stability(cfg: RunConfig, amplitude: float, theta: float, out_dir: Path, figures: bool, out: TextIO) -> int:
    net = cfg.network
    cls = class_of(net, cfg.initial_mean())
    pert = cfg.perturbation_values()
    if pert is None:
        shape = default_stability_shape(net, cfg.domain)
    else:
        shape = FieldSet(cfg.domain, np.zeros(net.n_species), pert)
    shape = project_in_class(net, FieldSet(cfg.domain, shape.base, amplitude * shape.dev))
    report = run_stability_experiment(net, cls, shape, cfg.sim, theta=theta)
    io.write_diagnostics(report.trajectory.diagnostics, out_dir / "diagnostics.csv")
    _write_report(out_dir / "report.txt", report.items())
    if figures:
        from .plotting import plot_stability

        plot_stability(report, out_dir / "stability.png")
    _emit_items(report.items(), out)
    return EXIT_OK


def flow_fit_rate(path: str, column: str, t0: float, t1: float, species: Optional[str], out: TextIO) -> int:
    t, v = io.series_column(path, column, species)
    fit = fit_exponential_rate(t, v, (t0, t1))
    items = [("rate", fit.rate), ("intercept", fit.intercept), ("residual", fit.residual), ("samples", fit.n_samples)]
    for k, val in items:
        print(f"{k}={_num(float(val))}", file=out)
    return EXIT_OK


def dispatch(cfg: RunConfig, command: Optional[str] = None, out_dir: Optional[Path] = None,
             figures: bool = False, stream: Optional[TextIO] = None, **overrides) -> int:
    """Run one flow for ``cfg``; ``command`` defaults to the configured experiment or ``simulate``."""
    out = stream or sys.stdout
    command = command or ("simulate" if cfg.experiment == "none" else cfg.experiment)
    out_dir = Path(out_dir) if out_dir is not None else cfg.output_dir
    return _guarded(lambda: _run_command(cfg, command, out_dir, figures, out, overrides))


def _run_command(cfg, command, out_dir, figures, out, overrides) -> int:
    if command == "parse":
        return flow_parse(cfg.network, out)
    if command == "analyze":
        return flow_analyze(cfg.network, cfg.initial_mean(), out)
    if command == "simulate":
        return flow_simulate(cfg, out_dir, figures, out)
    if command == "instability":
        deltas = overrides.get("deltas") or [cfg.delta]
        theta0 = overrides.get("theta0") or cfg.theta0
        return flow_instability(cfg, deltas, theta0, out_dir, figures, overrides.get("workers", 1), out)
    if command == "stability":
        amplitude = overrides.get("amplitude")
        theta = overrides.get("theta")
        return flow_stability(
            cfg,
            cfg.amplitude if amplitude is None else amplitude,
            cfg.theta if theta is None else theta,
            out_dir,
            figures,
            out,
        )
    raise ValueError(f"unknown command {command!r}")


def _guarded(fn) -> int:
    try:
        return fn()
    except SimulationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, NetworkSyntaxError, NoEquilibriumError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID


# --------------------------------------------------------------------------
# argument handling


def _float_list(text: str) -> list[float]:
    try:
        values = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crnlab", description="Reversible mass-action reaction-diffusion toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def network_args(sp, config_too=True):
        g = sp.add_mutually_exclusive_group(required=not config_too)
        g.add_argument("--network", help="network text, e.g. 'A + 2B <-> B + C'")
        g.add_argument("--network-file", help="file holding network text")
        if config_too:
            g.add_argument("--config", help="run configuration file")

    sp = sub.add_parser("parse", help="parse a network and print its canonical form")
    network_args(sp)

    sp = sub.add_parser("analyze", help="conservation laws and equilibria of a stoichiometric class")
    network_args(sp)
    sp.add_argument("--init", type=_float_list, help="mean concentrations selecting the class, e.g. 2,1,1")

    sp = sub.add_parser("simulate", help="integrate a configured run")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.add_argument("--figures", action="store_true", help="also write PNG figures")

    sp = sub.add_parser("experiment", help="instability or stability experiment")
    esub = sp.add_subparsers(dest="kind", required=True)
    ep = esub.add_parser("instability")
    ep.add_argument("--config", required=True)
    ep.add_argument("--delta", type=_float_list, help="one value or a comma-separated sweep")
    ep.add_argument("--theta0", type=float)
    ep.add_argument("--workers", type=int, default=1, help="threads for a delta sweep")
    ep.add_argument("--out")
    ep.add_argument("--figures", action="store_true")
    ep = esub.add_parser("stability")
    ep.add_argument("--config", required=True)
    ep.add_argument("--amplitude", type=float)
    ep.add_argument("--theta", type=float)
    ep.add_argument("--out")
    ep.add_argument("--figures", action="store_true")

    sp = sub.add_parser("fit-rate", help="exponential rate of a diagnostics column over [t0, t1]")
    sp.add_argument("csv")
    sp.add_argument("column")
    sp.add_argument("t0", type=float)
    sp.add_argument("t1", type=float)
    sp.add_argument("--species")
    return p


def _network_from_args(args) -> tuple[ReactionNetwork, Optional[RunConfig]]:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        return cfg.network, cfg
    if args.network is not None:
        return parse_network(args.network.replace("\\n", "\n")), None
    if args.network_file is not None:
        return parse_network(Path(args.network_file).read_text(encoding="utf-8")), None
    raise ValueError("give --network, --network-file or --config")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out = sys.stdout

    if args.command == "fit-rate":
        return _guarded(lambda: flow_fit_rate(args.csv, args.column, args.t0, args.t1, args.species, out))

    if args.command in ("parse", "analyze"):
        def run():
            net, cfg = _network_from_args(args)
            if args.command == "parse":
                return flow_parse(net, out)
            if args.init is not None:
                mean = np.array(args.init)
                if mean.size != net.n_species:
                    raise ValueError(f"--init needs {net.n_species} values, got {mean.size}")
            elif cfg is not None:
                mean = cfg.initial_mean()
            else:
                raise ValueError("analyze needs --init or --config to select a class")
            return flow_analyze(net, mean, out)

        return _guarded(run)

    loaded: list[RunConfig] = []
    status = _guarded(lambda: loaded.append(load_config(args.config)) or EXIT_OK)
    if status != EXIT_OK:
        return status
    cfg = loaded[0]
    out_dir = resolve_out(cfg.output_dir, args.out)
    if args.command == "simulate":
        return dispatch(cfg, "simulate", out_dir, args.figures, out)
    if args.kind == "instability":
        return dispatch(cfg, "instability", out_dir, args.figures, out,
                        deltas=args.delta, theta0=args.theta0, workers=args.workers)
    return dispatch(cfg, "stability", out_dir, args.figures, out, amplitude=args.amplitude, theta=args.theta)


if __name__ == "__main__":
    sys.exit(main())
