"""Command-line interface.

Exit codes: 0 success, 2 config error, 3 file error, 4 invalid network,
5 oracle mismatch, 6 simulation error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import ValidationError

from src.codec import accuracy, classify, encode
from src.config import settings
from src.costmodel import latency_model, load_sweep_family, network_area, sweep
from src.errors import BWSNNError, ConfigError, IngestError, NetworkError, OracleMismatch
from src.ingest import (
    check_input_shape,
    ingest_input,
    ingest_labels,
    ingest_weights,
    write_input,
    write_weights,
)
from src.models import EncoderMode, EncoderSpec, ResetMode, RunConfig
from src.netmodel import NetworkGraph, attach_kernels, load_network, ones_kernels, random_kernels, require_valid
from src.oracle import ForwardResult, snn_forward_ref
from src.reports import atomic_write_text, csv_text, dumps_json, results_document, write_json, write_trace_csv
from src.systolic import SimulationResult, run_network
from src.utils.validate_configs import ConfigValidator

logger = logging.getLogger(__name__)


# simulate / check


def _load_graph(config: RunConfig) -> NetworkGraph:
    graph = load_network(config.network, reset_mode=config.reset_mode)
    if config.weights is not None:
        graph = attach_kernels(graph, ingest_weights(config.weights, graph))
    else:
        logger.warning(f"No weight file given; using random kernels (seed {config.seed})")
        graph = random_kernels(graph, np.random.default_rng(config.seed))
    require_valid(graph)
    logger.info(f"Network '{graph.name}' ready: {len(graph)} layer modules")
    return graph


def _compare(result: SimulationResult, ref: ForwardResult) -> Optional[str]:
    """First difference between the simulator and the reference, or None."""
    if not np.array_equal(result.counts, ref.counts):
        return f"counts differ: simulator {result.counts.tolist()}, reference {ref.counts.tolist()}"
    for t, (ours, theirs) in enumerate(zip(result.trace, ref.trace)):
        for l, (a, b) in enumerate(zip(ours, theirs)):
            if not np.array_equal(a, b):
                return f"spike trace differs at step {t}, layer {l}"
    return None


def run_simulation(config: RunConfig) -> dict:
    """Run every requested sample through the simulator (and the reference with `check`)."""
    missing = config.missing_files()
    if missing:
        raise IngestError("; ".join(missing))

    graph = _load_graph(config)
    accum_delay = settings.ACCUM_DELAY if config.accum_delay is None else config.accum_delay

    if config.input is not None:
        images = ingest_input(config.input, config.input_index, config.count)
    else:
        images = np.zeros((config.count,) + graph.input_shape)
    check_input_shape(images, graph.input_shape)
    labels = ingest_labels(config.labels, config.input_index, len(images)) if config.labels else None

    base_spec = config.encoder_spec()
    samples = []
    events = []
    for n, image in enumerate(images):
        index = config.input_index + n
        spec = base_spec.model_copy(update={"seed": (base_spec.seed + n) % 2**64})
        frames = encode(image, spec)
        result = run_network(
            graph,
            frames,
            config.T,
            accum_delay=accum_delay,
            record_trace=config.trace or config.check,
            record_events=config.trace_csv is not None and n == 0,
        )
        sample = {
            "index": index,
            "counts": result.counts.tolist(),
            "class": classify(result.counts),
            "cycle_stats": result.stats.to_dict(),
        }
        if config.check:
            ref = snn_forward_ref(graph, frames, config.T, record_trace=True)
            difference = _compare(result, ref)
            if difference:
                raise OracleMismatch(f"sample {index}: {difference}")
            sample["oracle_class"] = classify(ref.counts)
        if labels is not None:
            sample["label"] = int(labels[n])
        if config.trace:
            sample["trace"] = [[spikes.tolist() for spikes in step] for step in result.trace]
        if result.events is not None:
            events = result.events
        samples.append(sample)

    if config.trace_csv is not None:
        write_trace_csv(config.trace_csv, events)

    body = {
        "network": graph.name,
        "T": config.T,
        "encoder": {"mode": config.encoder_mode.value, "seed": config.seed},
        "reset_mode": graph.layers[0].neuron.reset_mode.value,
        "accum_delay": accum_delay,
        "predicted_latency": latency_model(graph, config.T, accum_delay=accum_delay).to_dict(),
        "samples": samples,
        "oracle": "match" if config.check else "not run",
    }
    if labels is not None:
        body["accuracy"] = {"simulator": accuracy([s["class"] for s in samples], labels)}
        if config.check:
            body["accuracy"]["oracle"] = accuracy([s["oracle_class"] for s in samples], labels)
    if config.check:
        logger.info(f"Oracle check passed on {len(samples)} sample(s)")
    return results_document("simulation", body)


def _run_config(args, check: bool) -> RunConfig:
    fields = {name: getattr(args, name) for name in RunConfig.model_fields if hasattr(args, name)}
    fields["check"] = check or fields.get("check", False)
    try:
        return RunConfig(**fields)
    except ValidationError as e:
        raise ConfigError(f"bad run options: {e}") from e


def _emit(text: str, path: Optional[Path]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)


def cmd_simulate(args, check: bool = False) -> int:
    config = _run_config(args, check)
    results = run_simulation(config)
    if config.output is None:
        _emit(dumps_json(results), None)
        return 0
    write_json(config.output, results)
    for sample in results["samples"]:
        stats = sample["cycle_stats"]
        print(f"sample {sample['index']}: class {sample['class']}, {stats['total_cycles']} cycles")
    if "accuracy" in results:
        print(f"accuracy: {results['accuracy']['simulator']:.4f}")
    print(f"oracle: {results['oracle']}")
    return 0


def cmd_check(args) -> int:
    return cmd_simulate(args, check=True)


# area / sweep


def cmd_area(args) -> int:
    graph = load_network(args.network)
    report = network_area(graph, accum_delay=args.accum_delay)
    if args.normalize is not None:
        report = report.normalized(args.normalize, args.from_node)

    if args.format == "csv":
        _emit(csv_text(report.csv_rows()), args.output)
        return 0
    body = {"network": graph.name, "report": report.to_dict()}
    if args.T is not None:
        body["latency"] = latency_model(graph, args.T, accum_delay=args.accum_delay).to_dict()
    _emit(dumps_json(results_document("area", body)), args.output)
    logger.info(f"Area of '{graph.name}': {report.total_mm2:.4f} mm^2")
    return 0


def cmd_sweep(args) -> int:
    family = load_sweep_family(args.family)
    entries = sweep(family, area_budget=args.budget, workers=args.workers)

    if args.format == "csv":
        rows = [
            {
                "name": e.name,
                "layers": len(e.report.layers),
                "pe_area_um2": e.report.pe_area_um2,
                "buffer_chain_area_um2": e.report.buffer_chain_area_um2,
                "local_buffer_area_um2": e.report.local_buffer_area_um2,
                "bypass_area_um2": e.report.bypass_area_um2,
                "total_um2": e.report.total_um2,
            }
            for e in entries
        ]
        fieldnames = ["name", "layers", "pe_area_um2", "buffer_chain_area_um2",
                      "local_buffer_area_um2", "bypass_area_um2", "total_um2"]
        _emit(csv_text(rows, fieldnames), args.output)
        return 0

    body = {
        "family": family.name,
        "area_budget_um2": args.budget if args.budget is not None else family.area_budget_um2,
        "entries": [
            {"name": e.name, "total_um2": e.report.total_um2, "report": e.report.to_dict()}
            for e in entries
        ],
    }
    _emit(dumps_json(results_document("sweep", body)), args.output)
    return 0


# encode / mkweights / validate


def cmd_encode(args) -> int:
    image = ingest_input(args.input, args.index, 1)[0]
    try:
        spec = EncoderSpec(mode=args.encoder_mode, T=args.T, seed=args.seed)
    except ValidationError as e:
        raise ConfigError(f"bad encoder options: {e}") from e
    frames = encode(image, spec)
    stream = np.stack(frames) if frames else np.zeros((0,) + image.shape, dtype=np.uint8)
    write_input(args.output, stream)
    totals = stream.reshape(len(frames), -1).sum(axis=1).tolist()
    print(f"encoded {spec.T} step(s) of shape {image.shape}; spikes per step: {totals}")
    return 0


def cmd_mkweights(args) -> int:
    graph = load_network(args.network)
    if args.mode == "ones":
        graph = ones_kernels(graph)
    else:
        graph = random_kernels(graph, np.random.default_rng(args.seed))
    require_valid(graph)
    write_weights(args.output, graph)
    return 0


def cmd_validate(args) -> int:
    validator = ConfigValidator(networks_path=args.networks, sweeps_path=args.sweeps)
    report = validator.validate_all()
    validator.print_report(report)
    if report["issues"]:
        return NetworkError.exit_code
    if report["missing"]:
        return IngestError.exit_code
    return 0


# Parser


def _add_run_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--network", type=Path, required=True, help="network config (YAML or JSON)")
    p.add_argument("--weights", type=Path, help="weight file; random kernels from --seed if omitted")
    p.add_argument("--input", type=Path, help="raw input or IDX image file; zero image if omitted")
    p.add_argument("--labels", type=Path, help="IDX label file")
    p.add_argument("--index", type=int, default=0, dest="input_index", help="first sample")
    p.add_argument("--count", type=int, default=1, help="number of samples")
    p.add_argument("-T", "--time-steps", type=int, required=True, dest="T")
    p.add_argument(
        "--encoder", choices=[m.value for m in EncoderMode], default=EncoderMode.DETERMINISTIC.value, dest="encoder_mode"
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reset-mode", choices=[m.value for m in ResetMode], default=None)
    p.add_argument("--accum-delay", type=int, default=None)
    p.add_argument("-o", "--output", type=Path, help="results JSON")
    p.add_argument("--trace-csv", type=Path, help="per-cycle event log of the first sample")
    p.add_argument("--trace", action="store_true", help="include every layer's spike trace")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bwsnn", description="Binary-weight SNN systolic array simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="cycle-accurate simulation")
    _add_run_arguments(p)
    p.add_argument("--check", action="store_true", help="compare against the reference model")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("check", help="simulate and compare against the reference model")
    _add_run_arguments(p)
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("area", help="area report")
    p.add_argument("--network", type=Path, required=True)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--normalize", type=float, default=None, metavar="NODE_NM", help="scale area to this node")
    p.add_argument("--from-node", type=float, default=None, metavar="NODE_NM")
    p.add_argument("-T", "--time-steps", type=int, default=None, dest="T", help="also predict latency")
    p.add_argument("--accum-delay", type=int, default=None)
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(handler=cmd_area)

    p = sub.add_parser("sweep", help="area sweep over a topology family")
    p.add_argument("family", type=Path)
    p.add_argument("--budget", type=float, default=None, help="area budget in um^2")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("encode", help="dump the spike stream of one input")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("-T", "--time-steps", type=int, required=True, dest="T")
    p.add_argument(
        "--encoder", choices=[m.value for m in EncoderMode], default=EncoderMode.DETERMINISTIC.value, dest="encoder_mode"
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(handler=cmd_encode)

    p = sub.add_parser("mkweights", help="write a random or all-ones weight file")
    p.add_argument("--network", type=Path, required=True)
    p.add_argument("--mode", choices=["random", "ones"], default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(handler=cmd_mkweights)

    p = sub.add_parser("validate", help="check every shipped config")
    p.add_argument("--networks", default=None)
    p.add_argument("--sweeps", default=None)
    p.set_defaults(handler=cmd_validate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.LOG_LEVEL,
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.handler(args)
    except BWSNNError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
