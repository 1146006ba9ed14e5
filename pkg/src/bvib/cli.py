"""Command-line front end.

Subcommands: train, test, latency, optimize-lambda, sweep, verify-chain.
Machine-readable artifacts (CSV tables, JSON summaries, JSONL chains,
binary checkpoints) go to the output directory (--output, else the
BVIB_OUTPUT_DIR environment variable, else the working directory); a short
human summary prints to stdout. All file writes are atomic.

Exit codes: 0 success, 2 usage error, 3 bad config, 4 dataset/format error,
5 invalid model or parameters, 6 chain verification failure.
"""

import argparse
import os
import sys

import numpy as np

from . import consensus, simulator, vib
from .channel import derive
from .config import ConfigError, ScenarioConfig, load_config
from .datasets import IdxFormatError
from .latency import DivergentDelayError, collision_probability, expected_total_delay
from .rate_optimizer import OptimizerCoefficients, delay_derivative, optimal_rate

__all__ = ["main", "EXIT_OK", "EXIT_USAGE", "EXIT_CONFIG", "EXIT_DATA", "EXIT_MODEL", "EXIT_CHAIN"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_MODEL = 5
EXIT_CHAIN = 6

OUTPUT_DIR_ENV = "BVIB_OUTPUT_DIR"


def _out_dir(args) -> str:
    directory = args.output or os.environ.get(OUTPUT_DIR_ENV) or "."
    os.makedirs(directory, exist_ok=True)
    return directory


def _load_config_arg(args) -> ScenarioConfig:
    if args.config is None:
        return ScenarioConfig().validate()
    return load_config(args.config)


def _cmd_train(args) -> int:
    config = _load_config_arg(args)
    result = simulator.run_training(config)
    out = _out_dir(args)
    metrics_path = os.path.join(out, "metrics.csv")
    summary_path = os.path.join(out, "summary.json")
    chain_path = os.path.join(out, "chain.jsonl")
    ckpt_path = os.path.join(out, "checkpoint.bin")
    simulator.write_metrics_csv(metrics_path, result.metrics)
    summary = result.summary_dict()
    summary["files"] = {  # siblings of the summary file
        "metrics": "metrics.csv",
        "chain": "chain.jsonl",
        "checkpoint": "checkpoint.bin",
    }
    simulator.write_summary_json(summary_path, summary)
    simulator.atomic_write_text(chain_path, consensus.chain_to_jsonl(result.chain))
    simulator.atomic_write_bytes(
        ckpt_path,
        vib.models_to_bytes(
            result.models.encoders, result.models.decoders, result.models.beta, result.models.mode
        ),
    )
    m = result.metrics
    print(
        f"trained {config.epochs} epochs x {config.batches_per_epoch} batches: "
        f"final izx_upper={m.epoch_izx[-1]:.4f}, izy_lower={m.epoch_izy[-1]:.4f}"
    )
    print(
        f"blocks={m.blocks_committed} aborts={m.aborts} elections={m.elections} "
        f"collisions={m.collisions} drops={m.channel_drops} "
        f"simulated_time={m.total_time:.3f}s"
    )
    print(f"chain digest {result.chain_digest()}")
    print(f"artifacts in {out}")
    return EXIT_OK


def _cmd_test(args) -> int:
    config = _load_config_arg(args)
    encoders, decoders, beta, mode = vib.load_models(args.checkpoint)
    models = simulator.FleetModels(encoders=encoders, decoders=decoders, beta=beta, mode=mode)
    result = simulator.run_test(config, models, epochs=args.epochs)
    out = _out_dir(args)
    metrics_path = os.path.join(out, "test_metrics.csv")
    summary_path = os.path.join(out, "test_summary.json")
    chain_path = os.path.join(out, "test_chain.jsonl")
    simulator.write_metrics_csv(metrics_path, result.metrics)
    summary = result.summary_dict()
    summary["files"] = {"metrics": "test_metrics.csv", "chain": "test_chain.jsonl"}
    simulator.write_summary_json(summary_path, summary)
    simulator.atomic_write_text(chain_path, consensus.chain_to_jsonl(result.chain))
    print(f"mean accuracy over {len(result.metrics.epoch_accuracy)} epochs: "
          f"{result.mean_accuracy:.2f}%")
    print(f"chain digest {result.chain_digest()}")
    print(f"artifacts in {out}")
    return EXIT_OK


def _cmd_latency(args) -> int:
    config = _load_config_arg(args)
    derived = derive(config.channel_params())
    params = config.delay_params(derived.drop_prob)
    total = expected_total_delay(params)
    p_c = collision_probability(
        params.extraction_rate, params.vehicles_per_server, params.collision_spacing
    )
    breakdown = {
        "extraction_delay": 1.0 / params.extraction_rate,
        "encode_delay": params.encode_delay,
        "collision_probability": p_c,
        "drop_probability": params.drop_prob,
        "service_time": params.service_time,
        "election_duration": params.election_duration,
        "expected_total_delay": total,
    }
    for key, value in breakdown.items():
        print(f"{key}: {value!r}")
    if args.json:
        simulator.write_summary_json(args.json, breakdown)
    return EXIT_OK


def _cmd_optimize_lambda(args) -> int:
    rate = optimal_rate(args.vehicles, args.spacing, args.encode_delay)
    b = args.vehicles * (args.vehicles - 1) * args.spacing / 2.0
    coeffs = OptimizerCoefficients(inflation=1.0, collision_coeff=b)
    residual = delay_derivative(rate, coeffs, args.encode_delay, 0.0)
    print(f"optimal extraction rate: {rate!r} events/s")
    print(f"derivative at the optimum: {residual!r} (|.| < 1e-10 expected)")
    if abs(residual) >= 1e-10:
        print("warning: stationarity residual unexpectedly large", file=sys.stderr)
        return EXIT_MODEL
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = _load_config_arg(args)
    if args.axis == "lambda":
        target = optimal_rate(
            max(2, config.vehicles_per_server), config.collision_spacing, config.encode_delay
        )
        grid = list(np.geomspace(target / 10.0, target * 10.0, args.points))
        axis = "extraction_rate"
    elif args.axis == "a":
        grid = list(range(0, (config.servers - 1) // 2 + 1))
        axis = "attack_strength"
    else:  # mn
        grid = [(m, n) for m in (2, 3, 4, 5) for n in (5, 10, 15)]
        axis = "fleet"
    rows = simulator.sweep(config, axis, grid, n_batches=args.simulate)
    lines = []
    if axis == "fleet":
        header = "vehicles_per_server,servers,expected_delay"
    else:
        header = f"{axis},expected_delay"
    if args.simulate:
        header += ",simulated_delay"
    lines.append(header)
    for row in rows:
        if axis == "fleet":
            cells = [str(row["value"][0]), str(row["value"][1])]
        elif axis == "attack_strength":
            cells = [str(int(row["value"]))]
        else:
            cells = [repr(float(row["value"]))]
        cells.append(repr(row["expected_delay"]))
        if args.simulate:
            cells.append(repr(row["simulated_delay"]))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    out_path = args.out or os.path.join(_out_dir(args), f"sweep_{args.axis}.csv")
    simulator.atomic_write_text(out_path, text)
    print(text, end="")
    print(f"wrote {out_path}")
    return EXIT_OK


def _cmd_verify_chain(args) -> int:
    chain = consensus.load_chain(args.chain)
    bad = consensus.verify_chain(chain)
    if bad is None:
        print(f"chain valid: {len(chain)} blocks, digest {consensus.chain_digest(chain)}")
        return EXIT_OK
    print(f"chain INVALID at height {bad}")
    return EXIT_CHAIN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bvib",
        description="Split variational-bottleneck training lab over a lossy consensus network",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML scenario config (defaults when omitted)")
    common.add_argument("-o", "--output", help=f"output directory (or ${OUTPUT_DIR_ENV})")

    sub.add_parser("train", parents=[common], help="run the training pipeline")

    p_test = sub.add_parser("test", parents=[common], help="evaluate a trained checkpoint")
    p_test.add_argument("--checkpoint", required=True, help="checkpoint.bin from a train run")
    p_test.add_argument("--epochs", type=int, default=None, help="test epochs (default: config)")

    p_lat = sub.add_parser("latency", parents=[common], help="analytic delay breakdown")
    p_lat.add_argument("--json", help="also write the breakdown to this JSON file")

    p_opt = sub.add_parser("optimize-lambda", help="closed-form optimal extraction rate")
    p_opt.add_argument("--vehicles", "-m", type=int, required=True, help="vehicles per server")
    p_opt.add_argument("--spacing", type=float, required=True, help="collision spacing (s)")
    p_opt.add_argument("--encode-delay", type=float, required=True, help="encoding delay (s)")

    p_sweep = sub.add_parser("sweep", parents=[common], help="delay sweeps (rate/attack/fleet)")
    p_sweep.add_argument("--axis", choices=("lambda", "a", "mn"), required=True)
    p_sweep.add_argument("--points", type=int, default=25, help="grid size for the rate sweep")
    p_sweep.add_argument(
        "--simulate", type=int, default=0, metavar="N_BATCHES",
        help="add a simulated column measured over this many batches",
    )
    p_sweep.add_argument("--out", help="CSV path (default: sweep_<axis>.csv in the output dir)")

    p_verify = sub.add_parser("verify-chain", help="audit an exported chain file")
    p_verify.add_argument("chain", help="chain.jsonl to verify")
    return parser


_HANDLERS = {
    "train": _cmd_train,
    "test": _cmd_test,
    "latency": _cmd_latency,
    "optimize-lambda": _cmd_optimize_lambda,
    "sweep": _cmd_sweep,
    "verify-chain": _cmd_verify_chain,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IdxFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergentDelayError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
