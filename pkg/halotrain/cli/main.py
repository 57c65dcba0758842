"""
Command-line driver.

Machine-readable results go to stdout or ``--out``; human-readable
summaries go to stderr. Exit codes: 0 success, 1 usage error, 2 runtime
failure, 3 acceptance failure (oracle deviation or variance bound).
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..data import SbmSpec, generate_sbm, load_dataset, save_dataset
from ..errors import HalotrainError, UsageError, VarianceBoundError
from ..experiments import bench, compare_samplers, p_study
from ..graph import Graph
from ..partition import Assignment, load_assignment, partition_greedy, partition_random, save_assignment
from ..plan import boundary_inner_ratios, build_plan, comm_volume, edge_cut, edgewise_volume, memory_estimate
from ..runtime import compare_to_reference, train, train_reference, write_metrics
from ..types import Precision, SamplerKind, TrainConfig
from ..util import configure_logging, debug_print
from ..variance import random_projection, variance_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_ACCEPTANCE = 3


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def emit_table(frame: pd.DataFrame, out: Optional[str]) -> None:
    frame.to_csv(out if out else sys.stdout, index=False)


def emit_json(payload: dict, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        with open(out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def resolve_assignment(args, graph: Graph) -> Assignment:
    if getattr(args, "assignment", None):
        return load_assignment(args.assignment, graph.num_nodes)
    parts = getattr(args, "parts", None)
    if parts is None:
        raise UsageError("one of --assignment or --parts is required")
    if getattr(args, "method", "greedy") == "random":
        return partition_random(graph, parts, args.seed)
    return partition_greedy(graph, parts, getattr(args, "slack", 0.0), args.seed)


def train_config(args, **overrides) -> TrainConfig:
    values = dict(
        num_layers=args.layers,
        hidden=args.hidden,
        dropout=args.dropout,
        lr=args.lr,
        epochs=args.epochs,
        p=getattr(args, "p", 1.0),
        seed=args.seed,
        precision=Precision(args.precision),
        eval_interval=args.eval_interval,
        sampler=SamplerKind(getattr(args, "sampler", "bns")),
        edge_rate=getattr(args, "edge_rate", None),
        phase_timeout_s=args.timeout,
        record_timings=getattr(args, "timings", False),
        serialize_messages=getattr(args, "serialize", False),
        verify_broadcast=getattr(args, "verify", False),
        log_level=args.log_level,
        show_progress=getattr(args, "progress", False),
    )
    values.update(overrides)
    return TrainConfig(**values)


# Subcommands

def cmd_gen_sbm(args) -> int:
    spec = SbmSpec(blocks=args.blocks, nodes_per_block=args.size, p_in=args.pin, p_out=args.pout,
                   feature_dim=args.dim, mean_scale=args.mean_scale)
    graph = generate_sbm(spec, args.seed)
    save_dataset(graph, args.out)
    debug_print(True, f"wrote {graph} to {args.out}")
    return EXIT_OK


def cmd_partition(args) -> int:
    graph = load_dataset(args.dataset)
    if args.method == "file":
        if not args.file:
            raise UsageError("--method file needs --file")
        assignment = load_assignment(args.file, graph.num_nodes)
    elif args.method == "random":
        assignment = partition_random(graph, args.parts, args.seed)
    else:
        assignment = partition_greedy(graph, args.parts, args.slack, args.seed)
    save_assignment(assignment, args.out)
    plan = build_plan(graph, assignment)
    debug_print(True, f"{assignment}: {comm_volume(plan).total} boundary nodes, "
                      f"edge cut {edge_cut(graph, assignment)}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    graph = load_dataset(args.dataset)
    assignment = load_assignment(args.assignment, graph.num_nodes)
    plan = build_plan(graph, assignment)
    dims = args.dims or [graph.feature_dim, 64, graph.num_classes]
    width = Precision(args.precision).dtype.itemsize
    volume = comm_volume(plan)
    report = {
        "num_parts": plan.num_parts,
        "inner": plan.inner_sizes.tolist(),
        "boundary": plan.boundary_sizes.tolist(),
        "ratios": boundary_inner_ratios(plan).to_dict(),
        "vol_total": volume.total,
        "vol_per_partition": volume.per_partition,
        "vol_edgewise": edgewise_volume(graph, assignment),
        "edge_cut": edge_cut(graph, assignment),
        "dims": dims,
        "memory": {},
    }
    for p in args.p:
        estimate = memory_estimate(plan, dims, p)
        report["memory"][str(p)] = {**estimate.to_dict(), "bytes_max": estimate.max * width}
    emit_json(report, args.out)
    debug_print(True, f"Vol={volume.total} over {plan.num_parts} partitions, "
                      f"straggler {report['ratios']['straggler']}")
    return EXIT_OK


def cmd_train(args) -> int:
    graph = load_dataset(args.dataset)
    assignment = resolve_assignment(args, graph)
    config = train_config(args, num_parts=assignment.num_parts)
    result = train(graph, build_plan(graph, assignment), config)
    if args.metrics:
        write_metrics(result.metrics, args.metrics)
    else:
        for record in result.metrics:
            print(json.dumps(record.to_dict()))
    last = result.metrics[-1]
    debug_print(True, f"final loss {last.loss:.6f}, val {last.val_acc}, test {last.test_acc}, "
                      f"floats/epoch {last.floats_sent}")

    if args.oracle:
        if config.p != 1.0 or config.sampler is not SamplerKind.BNS:
            logger.warning("Oracle comparison with sampling enabled; losses are not expected to match")
        deviation = compare_to_reference(result, train_reference(graph, config))
        debug_print(True, f"max relative loss deviation from single-process reference: {deviation:.3e}")
        if deviation > args.oracle_tol:
            return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_variance(args) -> int:
    graph = load_dataset(args.dataset)
    plan = build_plan(graph, load_assignment(args.assignment, graph.num_nodes))
    W = random_projection(graph.feature_dim, args.hidden, args.seed)
    table = variance_sweep(graph, plan, graph.features, W, args.p_list, args.trials, args.seed)
    emit_table(table, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    graph = load_dataset(args.dataset)
    assignment = resolve_assignment(args, graph)
    config = train_config(args, num_parts=assignment.num_parts)
    emit_table(bench(graph, build_plan(graph, assignment), config, args.p_list), args.out)
    return EXIT_OK


def cmd_compare_samplers(args) -> int:
    graph = load_dataset(args.dataset)
    plan = build_plan(graph, load_assignment(args.assignment, graph.num_nodes))
    table = compare_samplers(graph, plan, args.p, args.epochs, args.seed, args.dim)
    emit_table(table, args.out)
    ordered = bool(np.all(np.diff(table["rows_mean"].to_numpy()) >= 0))
    debug_print(True, f"rows per layer (bns, bes, dropedge): {table['rows_mean'].round(2).tolist()}, "
                      f"ordered={ordered}")
    return EXIT_OK


def cmd_p_study(args) -> int:
    graph = load_dataset(args.dataset)
    assignment = resolve_assignment(args, graph)
    config = train_config(args, num_parts=assignment.num_parts)
    emit_table(p_study(graph, build_plan(graph, assignment), config, args.p_list, args.seeds), args.out)
    return EXIT_OK


# Parser

def add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--layers", type=int, default=2)
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--lr", type=float, default=0.01)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--dropout", type=float, default=0.5)
    parser.add_argument("--precision", choices=[p.value for p in Precision], default=Precision.F64.value)
    parser.add_argument("--eval-interval", type=int, default=1)
    parser.add_argument("--timeout", type=float, default=30.0, help="per-phase watchdog in seconds")


def add_assignment_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--assignment", help="partition file, one id per line")
    group.add_argument("--parts", type=int, help="partition on the fly into this many parts")
    parser.add_argument("--method", choices=["random", "greedy"], default="greedy")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="halotrain", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p = sub.add_parser("gen-sbm", help="generate a stochastic block model dataset")
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--size", type=int, default=500, help="nodes per block")
    p.add_argument("--pin", type=float, default=0.05)
    p.add_argument("--pout", type=float, default=0.005)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--mean-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_sbm)

    p = sub.add_parser("partition", help="assign nodes to partitions")
    p.add_argument("dataset")
    p.add_argument("--method", choices=["random", "greedy", "file"], default="greedy")
    p.add_argument("--parts", type=int, default=2)
    p.add_argument("--file")
    p.add_argument("--slack", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("analyze", help="communication and memory cost report")
    p.add_argument("dataset")
    p.add_argument("--assignment", required=True)
    p.add_argument("--dims", type=int_list)
    p.add_argument("--p", type=float_list, default=[1.0])
    p.add_argument("--precision", choices=[x.value for x in Precision], default=Precision.F32.value)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="partition-parallel training")
    p.add_argument("dataset")
    add_assignment_flags(p)
    add_training_flags(p)
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampler", choices=[s.value for s in SamplerKind], default=SamplerKind.BNS.value)
    p.add_argument("--edge-rate", type=float)
    p.add_argument("--metrics", help="JSONL output path (default: stdout)")
    p.add_argument("--oracle", action="store_true", help="compare against the single-process reference")
    p.add_argument("--oracle-tol", type=float, default=1e-9)
    p.add_argument("--timings", action="store_true", help="record wall-clock phase timings")
    p.add_argument("--serialize", action="store_true", help="encode every message to bytes")
    p.add_argument("--verify", action="store_true", help="recompute and check broadcast selections")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("variance", help="empirical propagation variance against its bound")
    p.add_argument("dataset")
    p.add_argument("--assignment", required=True)
    p.add_argument("--p-list", type=float_list, default=[0.1, 0.5, 1.0])
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("bench", help="per-phase time breakdown per sampling rate")
    p.add_argument("dataset")
    add_assignment_flags(p)
    add_training_flags(p)
    p.add_argument("--p-list", type=float_list, default=[1.0, 0.1, 0.01])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench, epochs=10)

    p = sub.add_parser("compare-samplers", help="node vs edge sampling traffic at matched drop rates")
    p.add_argument("dataset")
    p.add_argument("--assignment", required=True)
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare_samplers)

    p = sub.add_parser("p-study", help="accuracy, traffic and memory across sampling rates")
    p.add_argument("dataset")
    add_assignment_flags(p)
    add_training_flags(p)
    p.add_argument("--p-list", type=float_list, default=[0.0, 0.01, 0.1, 0.5, 1.0])
    p.add_argument("--seeds", type=int_list, default=[0, 1, 2])
    p.add_argument("--seed", type=int, default=0, help="partitioning seed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_p_study)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    configure_logging(args.log_level)

    try:
        return args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except VarianceBoundError as e:
        logger.error(str(e))
        return EXIT_ACCEPTANCE
    except (HalotrainError, ValidationError, ValueError, OSError) as e:
        logger.error(str(e))
        return EXIT_RUNTIME
