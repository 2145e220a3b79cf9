"""Command-line entry point ``advlin``.

    advlin <scenario> --config FILE [--out DIR] [--seed N] [--replicates N]
    advlin rates --mu F --eta F [--p F|inf] [--d N] [--sigma F] [--layout axis|uniform]
                 [--classifier bayes] [--mc N]

Exit status: 0 on success, 2 for invalid input, 3 when a numerical solver fails.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import learn, rates, simulate
from .experiments import SCENARIOS, ConfigError, ExperimentConfig, run
from .geometry import SolverError
from .model import PerturbationBudget, dumps, parse_p
from .rates import RootFindingError

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"advlin: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="advlin", description=__doc__.splitlines()[0])
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--replicates", type=int)
    quick = parser.add_argument_group("one-shot rates query (scenario 'rates' without --config)")
    quick.add_argument("--mu", type=float)
    quick.add_argument("--eta", type=float)
    quick.add_argument("--eta-s", type=float, dest="eta_s")
    quick.add_argument("--p", default="2")
    quick.add_argument("--d", type=int, default=361)
    quick.add_argument("--sigma", type=float, default=1.0)
    quick.add_argument("--layout", choices=("axis", "uniform"), default="axis")
    quick.add_argument("--classifier", choices=("bayes",), default="bayes")
    quick.add_argument("--mc", type=int, default=0, help="report a Monte Carlo estimate over N points instead")
    return parser


def one_shot_rates(args) -> str:
    if args.mu is None or args.eta is None:
        raise ConfigError("one-shot rates needs --mu and --eta (or pass --config)")
    cfg = ExperimentConfig(scenario="rates", mu=[args.mu], d=args.d, sigma=args.sigma,
                           mean_layout=args.layout, eta_a=[args.eta],
                           eta_s=[args.eta if args.eta_s is None else args.eta_s], p=args.p)
    mix = cfg.mixture(args.mu)
    budget = PerturbationBudget.from_eta(mix, cfg.eta_a[0], cfg.eta_s[0], cfg.p)
    clf = learn.bayes_classifier(mix)
    if args.mc:
        seed = args.seed if args.seed is not None else 0
        return dumps(simulate.empirical_rates(clf, mix, budget, args.mc, seed))
    return dumps(rates.rate_report(clf, mix, budget))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.scenario == "rates" and args.config is None:
            parse_p(args.p)
            print(one_shot_rates(args))
            return EXIT_OK
        if args.config is None:
            raise ConfigError(f"scenario {args.scenario!r} needs --config")
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if data.get("scenario", args.scenario) != args.scenario:
            raise ConfigError(f"config is for scenario {data['scenario']!r}, not {args.scenario!r}")
        data["scenario"] = args.scenario
        cfg = ExperimentConfig.from_dict(data)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.replicates is not None:
            overrides["replicates"] = args.replicates
        if overrides:
            cfg = replace(cfg, **overrides)
        for path in run(cfg, args.out):
            print(path)
        return EXIT_OK
    except (SolverError, RootFindingError) as exc:
        print(f"advlin: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"advlin: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
