"""Command-line entry point: ``xlmimo simulate ...``."""

from __future__ import annotations

import argparse
import logging
import sys

from xlmimo.config import PA_METHODS, ConfigError, ScenarioConfig, load_config
from xlmimo.harness import CampaignError, run_campaign, run_sweep, write_results

log = logging.getLogger("xlmimo")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARTIAL = 2


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("K values must be positive integers")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xlmimo", description="XL-MIMO uplink Monte-Carlo simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo campaign")
    sim.add_argument("--config", help="TOML scenario file (defaults used when omitted)")
    sim.add_argument("--pa", default=None, choices=[*PA_METHODS, "all"], help="pilot-assignment method")
    sim.add_argument("--drops", type=int, help="number of statistics drops")
    sim.add_argument("--seed", type=int, help="master seed")
    sim.add_argument("--sweep-k", type=_int_list, help="comma-separated UE counts to sweep")
    sim.add_argument("--out", default="results", help="output directory")
    sim.add_argument("--format", default="both", choices=["csv", "json", "both"])
    sim.add_argument("--K", type=int, help="number of UEs")
    sim.add_argument("--L", type=int, help="number of subarrays")
    sim.add_argument("--tau-p", type=int, help="number of orthogonal pilots")
    sim.add_argument("--realizations", type=int, help="channel realizations per drop")
    sim.add_argument("--workers", type=int, default=1, help="worker processes")
    sim.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def simulate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    cfg = cfg.with_overrides(
        K=args.K,
        L=args.L,
        tau_p=args.tau_p,
        mc_realizations=args.drops,
        master_seed=args.seed,
        realizations_per_drop=args.realizations,
        pa_method=None if args.pa in (None, "all") else args.pa,
    )
    methods = args.pa or cfg.pa_method
    if args.sweep_k:
        result = run_sweep(cfg, args.sweep_k, methods, args.workers)
        campaigns = list(result.values())
    else:
        result = run_campaign(cfg, methods, args.workers)
        campaigns = [result]
    paths = write_results(result, args.out, args.format)
    n_failed = sum(len(c.failures) for c in campaigns)
    n_ok = sum(len(c.drops) for c in campaigns)
    log.info("%d drops succeeded, %d failed; wrote %d files to %s", n_ok, n_failed, len(paths), args.out)
    return EXIT_PARTIAL if n_failed else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose + 1, 2)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(asctime)s %(levelname)s %(message)s")
    try:
        return simulate(args)
    except (ConfigError, CampaignError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
