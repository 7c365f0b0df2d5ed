"""``evrpn`` command line: simulate, propose, eval, bench.

Exit codes: 0 success, 1 usage error, 2 input or format error, 3 bench
budget miss under ``--strict``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace

from .bench import DEFAULT_BUDGET_US, run_bench, synthetic_chunk
from .cluster import DbscanConfig, ProposalConfig, propose_chunks, read_proposals
from .errors import ConfigError, EvrpnError
from .evaluation import EvalConfig, GroundTruthSet, evaluate
from .events import SensorGeometry
from .ingest import ChunkingConfig, chunk_messages, read_stream, write_stream
from .rasterize import build_frame, to_pgm
from .simulator import SceneSpec, scene_ground_truth, simulate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_BUDGET = 3


class UsageError(Exception):
    pass


class InputError(EvrpnError):
    pass


def _reading(path, fn, *a):
    """Call ``fn(path, *a)``, prefixing library errors with the path."""
    try:
        return fn(path, *a)
    except EvrpnError as exc:
        raise InputError(f"{path}: {exc}") from None


def _u64(text) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


@dataclass(frozen=True)
class RunConfig:
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    dbscan: DbscanConfig = field(default_factory=DbscanConfig)
    erosion_size: int = 3
    erosion_iterations: int = 1
    eval: EvalConfig = field(default_factory=EvalConfig)
    budget_us: int = DEFAULT_BUDGET_US
    repetitions: int = 5
    workers: int = 1
    seed: int | None = None
    paths: dict = field(default_factory=dict)

    @property
    def proposal(self) -> ProposalConfig:
        return ProposalConfig(self.dbscan, self.erosion_size, self.erosion_iterations)

    def to_dict(self):
        return {
            "chunking": asdict(self.chunking),
            "dbscan": asdict(self.dbscan),
            "erosion": {"size": self.erosion_size, "iterations": self.erosion_iterations},
            "eval": asdict(self.eval),
            "bench": {"budget_us": self.budget_us, "repetitions": self.repetitions},
            "workers": self.workers,
            "seed": self.seed,
            "paths": dict(self.paths),
        }

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")

        def section(name, typ):
            values = d.get(name, {})
            known = {f.name for f in fields(typ)}
            unknown = set(values) - known
            if unknown:
                raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
            return typ(**values)

        unknown = set(d) - {"chunking", "dbscan", "erosion", "eval", "bench", "workers", "seed", "paths"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        erosion = d.get("erosion", {})
        bench = d.get("bench", {})
        try:
            return cls(
                chunking=section("chunking", ChunkingConfig),
                dbscan=section("dbscan", DbscanConfig),
                erosion_size=int(erosion.get("size", 3)),
                erosion_iterations=int(erosion.get("iterations", 1)),
                eval=section("eval", EvalConfig),
                budget_us=int(bench.get("budget_us", DEFAULT_BUDGET_US)),
                repetitions=int(bench.get("repetitions", 5)),
                workers=int(d.get("workers", 1)),
                seed=None if d.get("seed") is None else int(d["seed"]),
                paths=dict(d.get("paths", {})),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad config: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(d)


def _effective_config(args) -> RunConfig:
    cfg = _reading(args.config, RunConfig.load) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    if getattr(args, "iou", None) is not None:
        cfg = replace(cfg, eval=replace(cfg.eval, iou_threshold=args.iou))
    if getattr(args, "budget_us", None) is not None:
        cfg = replace(cfg, budget_us=args.budget_us)
    if getattr(args, "reps", None) is not None:
        cfg = replace(cfg, repetitions=args.reps)
    paths = dict(cfg.paths)
    for key in ("input", "out", "gt_out", "dump_frames"):
        value = getattr(args, key, None)
        if value is not None:
            paths[key] = value
    if getattr(args, "gt", None):
        paths["gt"] = list(args.gt)
    if getattr(args, "proposals", None):
        paths["proposals"] = list(args.proposals)
    return replace(cfg, paths=paths)


def _echo(cfg: RunConfig) -> None:
    print("effective config: " + json.dumps(cfg.to_dict(), sort_keys=True), file=sys.stderr)


def _write_text(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_simulate(args, cfg: RunConfig) -> int:
    spec = _reading(args.input, SceneSpec.load)
    if cfg.seed is not None:
        spec = replace(spec, seed=cfg.seed)
    header, messages, _ = simulate(spec)
    gt = scene_ground_truth(spec, cfg.chunking)
    out = args.out or os.path.splitext(args.input)[0] + ".evr"
    gt_out = args.gt_out or os.path.splitext(out)[0] + ".gt.json"
    write_stream(out, header, messages)
    gt.dump(gt_out)
    n = sum(len(m) for m in messages)
    print(f"wrote {n} events in {len(messages)} messages to {out}; ground truth to {gt_out}", file=sys.stderr)
    return EXIT_OK


def _load_chunks(path, cfg: RunConfig):
    header, messages = _reading(path, read_stream)
    return header, chunk_messages(messages, cfg.chunking, header.message_rate_hz)


def cmd_propose(args, cfg: RunConfig) -> int:
    header, chunks = _load_chunks(args.input, cfg)
    sets = propose_chunks(chunks, header.geometry, cfg.proposal, workers=cfg.workers)
    _write_text(args.out, "".join(ps.to_json_line() + "\n" for ps in sets))
    if args.dump_frames:
        os.makedirs(args.dump_frames, exist_ok=True)
        for chunk in chunks:
            frame = build_frame(chunk, header.geometry)
            with open(os.path.join(args.dump_frames, f"chunk_{chunk.chunk_index:05d}.pgm"), "wb") as fh:
                fh.write(to_pgm(frame))
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    if len(args.proposals) != len(args.gt):
        raise UsageError(f"got {len(args.proposals)} proposal files but {len(args.gt)} --gt files")
    videos = [(_reading(p, read_proposals), _reading(g, GroundTruthSet.load)) for p, g in zip(args.proposals, args.gt)]
    report = evaluate(videos, cfg.eval)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(report.format_table())
    if args.out:
        _write_text(args.out, report.to_json() + "\n")
    return EXIT_OK


def cmd_bench(args, cfg: RunConfig) -> int:
    if args.input:
        header, chunks = _load_chunks(args.input, cfg)
        geometry = header.geometry
    else:
        geometry = SensorGeometry()
        seed = cfg.seed or 0
        chunks = [synthetic_chunk(geometry, args.synthetic_events, seed=seed + k, chunk_index=k) for k in range(args.synthetic_chunks)]
    report = run_bench(chunks, geometry, cfg.proposal, cfg.budget_us, cfg.repetitions, workers=cfg.workers)
    print(report.format_table())
    if args.out:
        _write_text(args.out, report.to_json() + "\n")
    if args.strict and not report.passed:
        print(f"error: median per-chunk latency {report.per_chunk_total.median_us:.0f} us exceeds budget", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags take precedence")
    common.add_argument("--seed", type=_u64, help="seed overriding the scene or config seed")
    common.add_argument("--out", help="output path (default: stdout where applicable)")

    parser = _Parser(prog="evrpn", description="Event-camera region proposals.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="render a JSON scene into an EVR1 stream plus ground truth")
    p.add_argument("input", help="scene JSON")
    p.add_argument("--gt-out", help="ground-truth JSON path (default: <out>.gt.json)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("propose", parents=[common], help="write one proposal set per chunk as JSON Lines")
    p.add_argument("input", help="event stream (.evr, or .csv)")
    p.add_argument("--dump-frames", help="directory for per-chunk PGM pseudo-frames")
    p.add_argument("--workers", type=int, help="process pool size")
    p.set_defaults(func=cmd_propose)

    p = sub.add_parser("eval", parents=[common], help="score proposal files against ground truth")
    p.add_argument("proposals", nargs="+", help="proposal JSON Lines, one file per video")
    p.add_argument("--gt", action="append", required=True, help="ground truth JSON, in the same order (repeatable)")
    p.add_argument("--iou", type=float, help="IoU threshold")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="per-stage latency against the real-time budget")
    p.add_argument("input", nargs="?", help="event stream; synthetic 640x480 chunks when omitted")
    p.add_argument("--budget-us", type=int)
    p.add_argument("--reps", type=int, help="measured passes after one warm-up pass")
    p.add_argument("--strict", action="store_true", help="exit 3 when the budget is missed")
    p.add_argument("--workers", type=int, help="also report pooled throughput")
    p.add_argument("--synthetic-chunks", type=int, default=8)
    p.add_argument("--synthetic-events", type=int, default=50_000)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _effective_config(args)
        _echo(cfg)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"error: {name}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EvrpnError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
