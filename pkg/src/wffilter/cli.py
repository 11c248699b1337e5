"""Command-line interface.

Subcommands: ``simulate``, ``filter``, ``smooth``, ``loglik``, ``estimate``.
Every flag can also come from a JSON file passed with ``--config`` (keys are
the flag names, with dashes or underscores); flags on the command line win.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .errors import (
    DegenerateMixtureError,
    DegenerateWeightsError,
    DepthError,
    DomainError,
    ImpossibleObservationError,
    NumericalError,
    TruncationError,
    WFFilterError,
)
from .estimation import MLEConfig, estimate_mle
from .filter import log_likelihood, run_filter
from .io import Dataset, fmt, read_dataset, write_csv, write_dataset
from .kernel import DEFAULT_MAX_DEPTH, ModelParams
from .mixture import DEFAULT_PRUNE_EPSILON
from .observation import ObservationModel
from .simulation_oracle import build_grid_model, grid_filter, particle_filter, simulate_dataset
from .smoother import smooth_all

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

# flags that must be set either on the command line or in the config file
_REQUIRED = {"simulate": ("delta", "delta_prime", "n", "dt")}


class UsageError(Exception):
    pass


def _add_channel(p: argparse.ArgumentParser) -> None:
    p.add_argument("--channel", choices=["bernoulli", "binomial", "negbinomial"], help="observation channel")
    p.add_argument("--N", dest="N", type=int, help="binomial size")
    p.add_argument("--m", dest="m", type=int, help="negative-binomial size")


def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, help="mutation rate delta (>= 2)")
    p.add_argument("--delta-prime", dest="delta_prime", type=float, help="mutation rate delta' (>= 2)")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("--depth", type=int, default=DEFAULT_MAX_DEPTH, help="maximum lattice depth")
    p.add_argument("--prune", type=float, default=DEFAULT_PRUNE_EPSILON, help="prune threshold after each transport")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wffilter", description="Exact filtering for the Wright-Fisher diffusion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a dataset (CSV t,x,y plus JSON sidecar)")
    _add_params(p)
    _add_channel(p)
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("--n", type=int, help="number of observations")
    p.add_argument("--dt", type=float, help="time between observations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x0", type=float, help="initial state (default: stationary draw)")
    p.add_argument("--euler-step", dest="euler_step", type=float, help="Euler step (default min(dt/200, 1e-3))")
    p.add_argument("--out", default="-", help="CSV path ('-' for stdout; the sidecar needs a path)")

    for name, text in [
        ("filter", "per-step filter mean/variance CSV and optional trace JSON"),
        ("smooth", "filter and smoothing moments CSV, optional per-step smoothing JSON"),
        ("loglik", "print the exact log-likelihood"),
        ("estimate", "maximum-likelihood estimate of (delta, delta')"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("data", help="dataset CSV (t,y or t,x,y) or JSON array")
        _add_channel(p)
        _add_common(p)
        if name != "estimate":
            _add_params(p)
        if name in ("filter", "smooth"):
            p.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
            p.add_argument("--json", help="write the full trace / smoothing marginals here")
        if name == "filter":
            p.add_argument("--oracle", choices=["grid", "particle"], help="add oracle columns side by side")
            p.add_argument("--cells", type=int, default=400, help="grid oracle cells")
            p.add_argument("--particles", type=int, default=100_000, help="particle oracle size")
            p.add_argument("--seed", type=int, default=0, help="particle oracle seed")
        if name == "estimate":
            p.add_argument("--lower", type=float, default=2.0)
            p.add_argument("--upper", type=float, default=200.0)
            p.add_argument("--restarts", type=int, default=5)
            p.add_argument("--tol", type=float, default=1e-8)
            p.add_argument("--max-iter", dest="max_iter", type=int, default=500)
    return parser


def _parse(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {cfg_path}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("the config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = set(cfg) - set(vars(args))
        if unknown:
            parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        # re-parse with config values as defaults so the command line wins
        subparser = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
        subparser.set_defaults(**cfg)
        args = parser.parse_args(argv)
    missing = [k for k in _REQUIRED.get(args.command, ()) if getattr(args, k) is None]
    if missing:
        parser.error("missing required flags: " + ", ".join("--" + k.replace("_", "-") for k in missing))
    return args


def _channel(args, meta: dict | None) -> ObservationModel:
    side = None
    if meta and "observation_model" in meta:
        side = ObservationModel.from_config(meta["observation_model"])
    if args.channel is None:
        if side is not None:
            return side
        return ObservationModel.bernoulli()
    if args.channel == "binomial" and args.N is None:
        raise UsageError("--channel binomial needs --N")
    if args.channel == "negbinomial" and args.m is None:
        raise UsageError("--channel negbinomial needs --m")
    try:
        om = ObservationModel.from_config({"channel": args.channel, "N": args.N, "m": args.m})
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    if side is not None and side != om:
        print(f"warning: channel {om.to_config()} differs from the dataset sidecar {side.to_config()}", file=sys.stderr)
    return om


def _params(args, meta: dict | None) -> ModelParams:
    d, dp = args.delta, args.delta_prime
    if meta:
        d = meta.get("delta") if d is None else d
        dp = meta.get("delta_prime") if dp is None else dp
    if d is None or dp is None:
        raise UsageError("--delta and --delta-prime are required (no sidecar values found)")
    try:
        return ModelParams(d, dp)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _load(args) -> tuple[Dataset, ObservationModel]:
    try:
        data = read_dataset(args.data)
    except OSError as exc:
        raise DomainError(f"cannot read {args.data}: {exc}") from None
    om = _channel(args, data.meta)
    for k, y in enumerate(data.obs):
        try:
            om.validate(int(y))
        except DomainError as exc:
            raise DomainError(f"row {k + 1}: {exc}") from None
    return data, om


def _gaps(data: Dataset):
    g = data.gaps
    return g if g.size else 1.0


def _open_out(path: str):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def cmd_simulate(args) -> int:
    try:
        params = ModelParams(args.delta, args.delta_prime)
        om = _channel(args, None)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    if args.n < 1 or not args.dt > 0:
        raise UsageError("--n must be positive and --dt positive")
    sim = simulate_dataset(params, args.n, args.dt, om, np.random.default_rng(args.seed), args.x0, args.euler_step)
    meta = {
        "delta": params.delta,
        "delta_prime": params.delta_prime,
        "n": args.n,
        "dt": args.dt,
        "seed": args.seed,
        "x0": args.x0,
        "euler_step": args.euler_step,
        "observation_model": om.to_config(),
    }
    write_dataset(args.out, Dataset(sim.times, sim.obs, sim.states, meta))
    return EXIT_OK


def cmd_filter(args) -> int:
    data, om = _load(args)
    params = _params(args, data.meta)
    trace = run_filter(data.obs, _gaps(data), om, params, prune_epsilon=args.prune, depth=args.depth)
    header = ["step", "t", "y", "mean", "variance", "predictive_prob", "n_components"]
    cols = [
        np.arange(1, len(trace) + 1),
        data.times,
        data.obs,
        trace.filter_means(),
        trace.filter_variances(),
        trace.predictive_probs(),
        [s.n_components for s in trace.steps],
    ]
    if args.oracle == "grid":
        g = data.gaps
        if g.size and not np.allclose(g, g[0], rtol=1e-12, atol=0):
            raise UsageError("the grid oracle needs equally spaced observations")
        res = grid_filter(data.obs, g, om, build_grid_model(params, float(g[0]) if g.size else 1.0, args.cells))
        header += ["grid_mean", "grid_variance"]
        cols += [res.means, res.variances]
    elif args.oracle == "particle":
        res = particle_filter(data.obs, _gaps(data), om, params, args.particles, np.random.default_rng(args.seed))
        header += ["particle_mean", "particle_se"]
        cols += [res.means, res.std_errors]
    out = _open_out(args.out)
    try:
        write_csv(out, header, zip(*cols))
    finally:
        if out is not sys.stdout:
            out.close()
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(trace.to_json())
    return EXIT_OK


def cmd_smooth(args) -> int:
    data, om = _load(args)
    params = _params(args, data.meta)
    trace = run_filter(data.obs, _gaps(data), om, params, prune_epsilon=args.prune, depth=args.depth)
    marginals = smooth_all(trace, depth=args.depth)
    header = ["step", "t", "y", "mean", "variance", "smoothed_mean", "smoothed_variance"]
    rows = zip(
        range(1, len(trace) + 1),
        data.times,
        data.obs,
        trace.filter_means(),
        trace.filter_variances(),
        [m.mean() for m in marginals],
        [m.variance() for m in marginals],
    )
    out = _open_out(args.out)
    try:
        write_csv(out, header, rows)
    finally:
        if out is not sys.stdout:
            out.close()
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(
                {
                    "delta": params.delta,
                    "delta_prime": params.delta_prime,
                    "observation_model": om.to_config(),
                    "marginals": [{"index": l, "components": m.to_dict()["components"]} for l, m in enumerate(marginals, 1)],
                },
                fh,
            )
    return EXIT_OK


def cmd_loglik(args) -> int:
    data, om = _load(args)
    params = _params(args, data.meta)
    ll = log_likelihood(data.obs, _gaps(data), om, params, prune_epsilon=args.prune, depth=args.depth)
    print(fmt(ll))
    return EXIT_OK


def cmd_estimate(args) -> int:
    data, om = _load(args)
    try:
        cfg = MLEConfig(
            lower=args.lower, upper=args.upper, restarts=args.restarts, tol=args.tol,
            max_iter=args.max_iter, prune_epsilon=args.prune, depth=args.depth,
        )
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    res = estimate_mle(data.obs, _gaps(data), om, cfg)
    print(json.dumps(res.to_dict(), indent=2))
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "smooth": cmd_smooth,
    "loglik": cmd_loglik,
    "estimate": cmd_estimate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = _parse(parser, sys.argv[1:] if argv is None else list(argv))
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"wffilter: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DepthError, NumericalError, DegenerateMixtureError, TruncationError, DegenerateWeightsError) as exc:
        print(f"wffilter: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, ImpossibleObservationError, json.JSONDecodeError) as exc:
        print(f"wffilter: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except WFFilterError as exc:
        print(f"wffilter: error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
