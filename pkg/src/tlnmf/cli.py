"""Command-line front end.

Subcommands write CSV files into ``--out``::

    tlnmf gen --dataset gcm --S 100 --out run/
    tlnmf tlnmf --dataset notes --S 1 --out run/
    tlnmf gap --dataset gcm --grid 10,100,1000 --P 20 --out run/
    tlnmf atoms --S 100 --out run/
    tlnmf complexity --dataset gcm --S 100 --out run/
    tlnmf rate --grid 50,100,500 --trials 20 --out run/

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import contextlib
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import io
from .core import ConfigError, NumericalError, SolverConfig
from .datagen import GcmSpec, NotesSpec
from .experiments import (
    DEFAULT_J_GRID,
    DEFAULT_S_GRID,
    cmd_atoms,
    cmd_complexity,
    cmd_gap,
    cmd_rate,
    default_config,
    make_dataset,
)
from .solvers import jdnmf_solve, multi_init, random_init, tlnmf_solve

log = logging.getLogger("tlnmf")

SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)}
SPEC_KEYS = {
    "gcm": {f.name for f in dataclasses.fields(GcmSpec)} - {"S", "seed", "noise_seed"},
    "notes": {f.name for f in dataclasses.fields(NotesSpec)} - {"S", "seed"},
}


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _split_config(args, dataset):
    """SolverConfig and dataset-spec keyword arguments from file and flags."""
    raw = io.parse_config(args.config) if args.config else {}
    unknown = set(raw) - SOLVER_KEYS - set().union(*SPEC_KEYS.values())
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    solver = {k: v for k, v in raw.items() if k in SOLVER_KEYS}
    for key in ("K", "eps0", "J", "J_TL", "J_NMF", "P"):
        value = getattr(args, key, None)
        if value is not None:
            solver[key] = value
    if args.seed is not None:
        solver["seed"] = args.seed
    spec = {k: v for k, v in raw.items() if dataset and k in SPEC_KEYS[dataset]}
    if "freqs" in spec and not isinstance(spec["freqs"], tuple):
        spec["freqs"] = (spec["freqs"],)
    try:
        config = default_config(dataset or "gcm", **solver)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config, spec


@contextlib.contextmanager
def _runner(threads):
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            yield pool.map
    else:
        yield map


def _out(args):
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def run_gen(args):
    _, spec = _split_config(args, args.dataset)
    data, truth = make_dataset(args.dataset, args.S, args.seed or 0, **spec)
    path = io.write_bundle(_out(args), data, truth)
    print(f"wrote {data.S} realization(s) of {data.M}x{data.N} to {path.parent}")


def _load_or_make(args, spec):
    if args.data:
        data, _ = io.read_bundle(args.data)
        return data
    return make_dataset(args.dataset, args.S, args.seed or 0, **spec)[0]


def run_solver(args):
    config, spec = _split_config(args, args.dataset)
    data = _load_or_make(args, spec)
    out = _out(args)
    if args.multi:
        with _runner(args.threads) as runner:
            rep = multi_init(data, config, runner=runner)
        result = rep.best_tlnmf if args.command == "tlnmf" else rep.best_jdnmf
        io.write_rows(out / "finals.csv", rep.all_final_objectives,
                      fields=["method", "init_id", "C", "L", "I"])
    else:
        solve = tlnmf_solve if args.command == "tlnmf" else jdnmf_solve
        result = solve(data, config, random_init(data, config.K, config.seed))
    io.write_result(out, result)
    f = result.final
    print(f"{args.command}: C={f.C:.10g} L={f.L:.10g} I={f.I:.10g}")


def run_gap(args):
    config, spec = _split_config(args, args.dataset)
    out = _out(args)
    with _runner(args.threads) as runner:
        rows, slopes = cmd_gap(args.dataset, args.grid, config, data_seed=args.seed or 0,
                               runner=runner, spec_kw=spec)
    io.write_rows(out / "gap.csv", rows)
    io.write_rows(out / "slopes.csv", sorted(slopes.items()), fields=["quantity", "slope"])
    for r in rows:
        print(f"S={r.S:6d}  I*={r.I_star:.6g}  I.={r.I_dot:.6g}  gap={r.gap:.3g}")
    print(f"slope I*: {slopes['I_star']:.3f}   slope gap: {slopes['gap']:.3f}")


def run_atoms(args):
    config, spec = _split_config(args, "notes")
    out = _out(args)
    with _runner(args.threads) as runner:
        res = cmd_atoms(args.S, config, data_seed=args.seed or 0, runner=runner, **spec)
    io.write_rows(out / "regression.csv", res.rows)
    for method in res.atoms:
        io.write_matrix(out / f"atoms_{method}.csv", res.atoms[method])
        io.write_matrix(out / f"W_{method}.csv", res.factors[method].W)
        io.write_matrix(out / f"H_{method}.csv", res.factors[method].H)
    for r in res.rows:
        print(f"{r.method} #{r.rank}: f={r.f:.2f} Hz  error={r.error:.3f}")


def run_complexity(args):
    config, spec = _split_config(args, args.dataset)
    rows = cmd_complexity(args.dataset, args.S, config, args.grid, data_seed=args.seed or 0,
                          spec_kw=spec)
    io.write_rows(_out(args) / "complexity.csv", rows)
    for r in rows:
        print(f"J={r.J:5d}  C_tlnmf={r.C_tlnmf:.10g}  C_jdnmf={r.C_jdnmf:.10g}")


def run_rate(args):
    rows = cmd_rate(args.M, args.N, args.K_bar, args.grid, args.trials, seed=args.seed or 0, t=args.t)
    io.write_rows(_out(args) / "rate.csv", rows)
    for r in rows:
        print(f"S={r.S:6d}  mean={r.mean_q:.6g}  predicted={r.predicted:.6g}  violations={r.violations}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--config", help="flat key=value file (solver and dataset fields)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker processes for independent runs")
    common.add_argument("-v", "--verbose", action="store_true")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--K", type=int)
    solver.add_argument("--eps0", type=float)
    solver.add_argument("--J", type=int)
    solver.add_argument("--J-TL", dest="J_TL", type=int)
    solver.add_argument("--J-NMF", dest="J_NMF", type=int)
    solver.add_argument("--P", type=int)

    p = argparse.ArgumentParser(prog="tlnmf", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a dataset bundle")
    g.add_argument("--dataset", choices=["gcm", "notes"], default="gcm")
    g.add_argument("--S", type=int, default=1)
    g.set_defaults(func=run_gen)

    for name in ("tlnmf", "jdnmf"):
        s = sub.add_parser(name, parents=[common, solver], help=f"single {name} run")
        s.add_argument("--dataset", choices=["gcm", "notes"], default="gcm")
        s.add_argument("--S", type=int, default=1)
        s.add_argument("--data", help="read realizations from a bundle written by 'gen'")
        s.add_argument("--multi", action="store_true", help="multi-initialization, keep the best")
        s.set_defaults(func=run_solver)

    s = sub.add_parser("gap", parents=[common, solver], help="selected I_S of both solvers over S")
    s.add_argument("--dataset", choices=["gcm", "notes"], default="gcm")
    s.add_argument("--grid", type=_int_list, default=list(DEFAULT_S_GRID))
    s.set_defaults(func=run_gap)

    s = sub.add_parser("atoms", parents=[common, solver], help="top atoms on the notes dataset")
    s.add_argument("--S", type=int, default=100)
    s.set_defaults(func=run_atoms)

    s = sub.add_parser("complexity", parents=[common, solver], help="C_S against matched budgets")
    s.add_argument("--dataset", choices=["gcm", "notes"], default="gcm")
    s.add_argument("--S", type=int, default=100)
    s.add_argument("--grid", type=_int_list, default=list(DEFAULT_J_GRID))
    s.set_defaults(func=run_complexity)

    s = sub.add_parser("rate", parents=[common], help="Q_S at the true transform against prediction")
    s.add_argument("--M", type=int, default=10)
    s.add_argument("--N", type=int, default=50)
    s.add_argument("--K-bar", dest="K_bar", type=int, default=5)
    s.add_argument("--grid", type=_int_list, default=[50, 100, 500])
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--t", type=float, default=3.0)
    s.set_defaults(func=run_rate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        where = f" at iteration {exc.iteration}" if exc.iteration is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
