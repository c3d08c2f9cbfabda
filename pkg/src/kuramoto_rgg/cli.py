"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 regime abort.
"""
import argparse
import json
import sys

import numpy as np

from .circle import DomainError
from .energy import energy_report, twisted_ansatz
from .experiments import (CLI_VARIANTS, MODES, CampaignConfig, Cell, _sample_graph,
                          regime_warnings, run_campaign, run_trial)
from .flow import integrate
from .persistence import (RESULT_FILES, ConfigError, OutputExistsError, check_output_dir,
                          config_from_mapping, config_mapping, emit_results, graph_text,
                          trace_text, write_atomic)
from .winding import winding_index

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_REGIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class RegimeAbort(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, campaign=False):
    rep = "append" if campaign else None
    p.add_argument("--config", help="JSON or flat 'key = value' config file; flags override it")
    p.add_argument("--n", type=int, action=rep, help="node count" + (" (repeatable)" if campaign else ""))
    eps = p.add_mutually_exclusive_group()
    eps.add_argument("--eps-power", type=float, help="use eps = scale * n^(-a)")
    eps.add_argument("--eps", type=float, action=rep, help="explicit connection radius"
                     + (" (repeatable)" if campaign else ""))
    p.add_argument("--eps-scale", type=float, help="prefactor of the power rule (default 1)")
    p.add_argument("--q", type=int, action=rep, help="twist" + (" (repeatable)" if campaign else ""))
    p.add_argument("--seed", type=int, help="master seed for campaigns, trial seed otherwise")
    p.add_argument("--variant", choices=sorted(CLI_VARIANTS))
    p.add_argument("--sampling", choices=("fixed_n", "poissonized"))
    p.add_argument("--grad-tol", type=float)
    p.add_argument("--force", action="store_true", help="run even outside the sparse connected regime")


def build_parser():
    p = _Parser(prog="kuramoto-rgg", description="Twisted states of the Kuramoto model on random geometric graphs")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("campaign", help="run a seeded Monte Carlo campaign")
    _common(c, campaign=True)
    c.add_argument("--mode", choices=MODES)
    c.add_argument("--trials", type=int)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--overwrite", action="store_true")
    c.add_argument("--eigenvalue", action="store_true", help="also compute the minimum Hessian eigenvalue")

    t = sub.add_parser("trial", help="flow one sampled graph from the twisted ansatz")
    _common(t)
    t.add_argument("--trace", metavar="CSV", help="write (step, time, energy, grad) rows here")
    t.add_argument("--dump-graph", metavar="FILE", help="write the sampled graph here")
    t.add_argument("--eigenvalue", action="store_true")
    t.add_argument("--overwrite", action="store_true")

    e = sub.add_parser("energy", help="energy of the twisted ansatz on one sampled graph")
    _common(e)

    i = sub.add_parser("index", help="winding index of a phase vector")
    i.add_argument("phases", help="text file of phases in node order, '-' for stdin")

    d = sub.add_parser("dump-graph", help="sample a graph and write its edge list")
    _common(d)
    d.add_argument("--out", required=True, help="output file")
    d.add_argument("--overwrite", action="store_true")
    return p


def resolve_config(args) -> CampaignConfig:
    """Merge the config file (if any) with flag overrides."""
    base = config_mapping(args.config) if getattr(args, "config", None) else {}
    flow = dict(base.pop("flow", {}) or {})
    for key in [k for k in base if k.startswith("flow.")]:
        flow[key[5:]] = base.pop(key)

    def listify(v):
        return v if isinstance(v, list) else [v]

    over = {}
    if getattr(args, "mode", None) is not None:
        over["mode"] = args.mode
    if args.n is not None:
        over["n_values"] = listify(args.n)
    if args.eps is not None:
        over["eps_values"], over["eps_power"] = listify(args.eps), None
    if args.eps_power is not None:
        over["eps_power"], over["eps_values"] = args.eps_power, None
    if args.eps_scale is not None:
        over["eps_scale"] = args.eps_scale
    if args.q is not None:
        over["q_values"] = listify(args.q)
    if getattr(args, "trials", None) is not None:
        over["trials"] = args.trials
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.variant is not None:
        over["variant"] = CLI_VARIANTS[args.variant]
    if args.sampling is not None:
        over["sampling_mode"] = args.sampling
    if args.grad_tol is not None:
        flow["grad_tol"] = args.grad_tol
    if getattr(args, "eigenvalue", False):
        flow["compute_eigenvalue"] = True
    if args.command != "campaign":
        over.setdefault("trials", 1)
    merged = {**base, **over}
    merged["flow"] = flow
    return config_from_mapping(merged, args.config or "<flags>")


def _single_cell(cfg):
    if len(cfg.n_values) != 1 or len(cfg.q_values) != 1:
        raise UsageError("this command takes exactly one --n and one --q")
    eps = cfg.epsilons(cfg.n_values[0])
    if len(eps) != 1:
        raise UsageError("this command takes exactly one --eps")
    return Cell(0, cfg.n_values[0], eps[0], cfg.q_values[0])


def _check_regime(cfg, force):
    warnings = regime_warnings(cfg)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if warnings and not force:
        raise RegimeAbort("parameters leave the sparse connected regime; rerun with --force")


def _cmd_campaign(args, cfg):
    check_output_dir(args.out, RESULT_FILES, args.overwrite)
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    result = run_campaign(cfg, workers=args.workers)
    emit_results(result, args.out, overwrite=args.overwrite)
    for row in result.summary:
        print(json.dumps(row, sort_keys=True))
    return EXIT_OK


def _cmd_trial(args, cfg):
    cell = _single_cell(cfg)
    outs = [x for x in (args.trace, args.dump_graph) if x]
    for path in outs:
        check_output_dir(".", [path], args.overwrite)
    seed = cfg.master_seed
    if args.trace or args.dump_graph:
        g = _sample_graph(cfg, cell, seed)
        if args.dump_graph:
            write_atomic(".", {args.dump_graph: graph_text(g)}, args.overwrite)
        if args.trace:
            rep = integrate(g, twisted_ansatz(g.nodes, cell.q), cfg.flow, trace=True)
            write_atomic(".", {args.trace: trace_text(rep.trace)}, args.overwrite)
    rec = run_trial(cfg, cell, seed)
    print(json.dumps(rec.to_dict(), sort_keys=True))
    return EXIT_OK if rec.error is None else EXIT_RUNTIME


def _cmd_energy(args, cfg):
    cell = _single_cell(cfg)
    g = _sample_graph(cfg, cell, cfg.master_seed)
    rep = energy_report(g, twisted_ansatz(g.nodes, cell.q))
    print(json.dumps({"n": g.n, "epsilon": g.epsilon, "q": cell.q, **rep.to_dict()}, sort_keys=True))
    return EXIT_OK


def _cmd_dump_graph(args, cfg):
    cell = _single_cell(cfg)
    check_output_dir(".", [args.out], args.overwrite)
    g = _sample_graph(cfg, cell, cfg.master_seed)
    write_atomic(".", {args.out: graph_text(g)}, args.overwrite)
    return EXIT_OK


def _cmd_index(args):
    text = sys.stdin.read() if args.phases == "-" else open(args.phases).read()
    try:
        u = np.array(text.split(), dtype=float)
    except ValueError as exc:
        raise UsageError(f"{args.phases}: {exc}") from exc
    print(json.dumps(winding_index(None, u).to_dict(), sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "index":
            return _cmd_index(args)
        try:
            cfg = resolve_config(args)
        except (ConfigError, DomainError, TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
        if args.command == "campaign":
            if args.config is None and args.n is None:
                raise UsageError("campaign needs --n or --config")
        _check_regime(cfg, args.force)
        handler = {"campaign": _cmd_campaign, "trial": _cmd_trial,
                   "energy": _cmd_energy, "dump-graph": _cmd_dump_graph}[args.command]
        return handler(args, cfg)
    except UsageError as exc:
        print(f"kuramoto-rgg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RegimeAbort as exc:
        print(f"kuramoto-rgg: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (OutputExistsError, OSError, RuntimeError, ArithmeticError, ValueError) as exc:
        print(f"kuramoto-rgg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
