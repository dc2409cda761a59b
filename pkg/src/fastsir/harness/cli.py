"""Command-line entry point: ``fastsir precalc|run|sweep|verify``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..graph import (Network, generate_m_ary_tree, generate_scale_free, generate_test_graph,
                     load_edge_list)
from .experiments import GridSpec, SweepConfig, precalc_command, sweep
from .verify import SUITES, verify_command


def _network(args) -> tuple[Network, str]:
    if args.network and args.generate:
        raise SystemExit("give either --network or --generate, not both")
    if args.network:
        with open(args.network) as fh:
            return load_edge_list(fh), args.network
    if args.generate:
        kind, *rest = args.generate.split(":")
        nums = [int(x) for x in rest]
        if kind == "tree" and len(nums) == 2:
            net = generate_m_ary_tree(*nums)
        elif kind == "scale-free" and len(nums) in (1, 2):
            net = generate_scale_free(nums[0], seed=nums[1] if len(nums) == 2 else 0)
        elif kind in ("path", "cycle", "star", "complete") and len(nums) == 1:
            net = generate_test_graph(kind, nums[0])
        else:
            raise SystemExit(f"cannot generate {args.generate!r}")
        return net, f"generated {args.generate}"
    raise SystemExit("a network is required: --network PATH or --generate KIND:ARGS")


def _seed_nodes(text: str):
    if text in ("max-degree", "each"):
        return text
    return tuple(int(x) for x in text.split(","))


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("rng seed must fit in 64 unsigned bits")
    return v


def _add_common(sp):
    sp.add_argument("--network", metavar="PATH", help="edge-list file")
    sp.add_argument("--generate", metavar="KIND:ARGS",
                    help="tree:M:DEPTH, scale-free:N[:SEED], path:N, cycle:N, star:N, complete:N")
    sp.add_argument("--reps", type=int, default=2000)
    sp.add_argument("--algorithm", choices=["naive", "fast", "hybrid", "both"], default="both")
    sp.add_argument("--seed-node", type=_seed_nodes, default="max-degree",
                    help="node id(s), comma separated, or 'max-degree' or 'each'")
    sp.add_argument("--rng-seed", type=_u64, default=0)
    sp.add_argument("--dist-cache", metavar="PATH", help="directory of cached CDF tables")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--pilot-reps", type=int, help="pilot size for --algorithm hybrid")
    sp.add_argument("--out", metavar="PATH", help="CSV output (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fastsir", description="SIR epidemics on networks")
    sub = ap.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("precalc", help="build and save a dense CDF table")
    pc.add_argument("--p", type=float, required=True)
    pc.add_argument("--q", type=float, required=True)
    pc.add_argument("--k-max", type=int, required=True)
    pc.add_argument("--precision-bits", type=int)
    pc.add_argument("--out", metavar="PATH", required=True)

    run = sub.add_parser("run", help="one (p, q) cell")
    run.add_argument("--p", type=float, required=True)
    run.add_argument("--q", type=float, required=True)
    _add_common(run)

    sw = sub.add_parser("sweep", help="grid over (p, q)")
    sw.add_argument("--p-grid", type=GridSpec.parse, default=GridSpec(0.1, 1.0, 0.1))
    sw.add_argument("--q-grid", type=GridSpec.parse, default=GridSpec(0.1, 1.0, 0.1))
    _add_common(sw)

    vf = sub.add_parser("verify", help="run a self-check suite")
    vf.add_argument("suite", choices=sorted(SUITES))
    vf.add_argument("--corrupt-cdf", action="store_true", help=argparse.SUPPRESS)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "precalc":
            precalc_command(args.p, args.q, args.k_max, args.out, args.precision_bits)
            return 0
        if args.command == "verify":
            return verify_command(args.suite, corrupt=args.corrupt_cdf)
        net, label = _network(args)
        if args.command == "run":
            p_grid, q_grid = GridSpec.single(args.p), GridSpec.single(args.q)
        else:
            p_grid, q_grid = args.p_grid, args.q_grid
        config = SweepConfig(p_grid, q_grid, args.reps, args.algorithm, args.seed_node,
                             args.rng_seed, args.dist_cache, args.workers, args.pilot_reps)
        if args.out:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            with open(args.out, "w") as fh:
                sweep(net, config, fh, label)
        else:
            sweep(net, config, sys.stdout, label)
        return 0
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"fastsir: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
