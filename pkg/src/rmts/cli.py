"""Operator entry points: offline tracking, evaluation, serving, producing
and benchmarking.

Configuration precedence is defaults < config file < command-line flags; a
config file is plain ``key=value`` lines mirroring the flag names.  Every
command writes a run manifest (JSON) recording the full configuration,
inputs, outputs and timings, so a run can be reproduced bit-identically.

Exit codes: 0 success, 1 input error, 2 protocol or I/O error, 3 internal
invariant failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import statistics
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .errors import InputError, RmtsError
from .io import (
    GmcTable,
    load_bundle,
    parse_mot_labels,
    parse_visdrone_annotations,
    write_results,
)
from .metrics import (
    GROUND_TRUTH,
    MetricsReport,
    aggregate,
    evaluate_all,
    evaluate_per_class,
    format_table,
    to_machine,
)
from .stream import (
    ProducerConfig,
    Server,
    ServerConfig,
    producer_run,
    results_to_outputs,
)
from .tracker import (
    MODE_BOTSORT,
    MODE_BYTE,
    TrackerConfig,
    FrameInput,
    new_state,
    step,
)

log = logging.getLogger("rmts.cli")

_TRACKER_KEYS = {f.name for f in dataclasses.fields(TrackerConfig)}


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{path}: line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(key: str, value: str):
    if key in ("fuse_score_enabled", "class_aware"):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise InputError(f"config {key}: expected a boolean, got {value!r}")
    if key == "mode":
        return value
    if key == "track_buffer":
        return int(value)
    return float(value)


def build_tracker_config(args: argparse.Namespace) -> TrackerConfig:
    cfg = TrackerConfig()
    if getattr(args, "config", None):
        for key, value in _read_config_file(args.config).items():
            if key not in _TRACKER_KEYS:
                raise InputError(f"unknown config key {key!r}")
            setattr(cfg, key, _coerce(key, value))
    overrides = {
        "mode": getattr(args, "tracker", None),
        "tau_high": getattr(args, "tau_high", None),
        "tau_low": getattr(args, "tau_low", None),
        "new_track_threshold": getattr(args, "new_track_threshold", None),
        "first_gate": getattr(args, "first_gate", None),
        "second_gate": getattr(args, "second_gate", None),
        "track_buffer": getattr(args, "track_buffer", None),
        "emb_theta": getattr(args, "emb_theta", None),
        "prox_theta": getattr(args, "prox_theta", None),
        "emb_momentum": getattr(args, "emb_momentum", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "no_fuse_score", False):
        cfg.fuse_score_enabled = False
    if getattr(args, "class_agnostic", False):
        cfg.class_aware = False
    return cfg.validate()


def _manifest(command: str, cfg: Optional[TrackerConfig], inputs: dict, outputs: dict,
              timings: dict) -> dict:
    return {
        "tool": "rmts",
        "version": __version__,
        "command": command,
        "config": dataclasses.asdict(cfg) if cfg is not None else None,
        "seeds": {},
        "inputs": inputs,
        "outputs": outputs,
        "timings": timings,
    }


def _write_manifest(path: Optional[str], manifest: dict, default: str) -> None:
    target = Path(path) if path else Path(default)
    target.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                      encoding="utf-8")


def _add_tracker_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file (flag names as keys)")
    p.add_argument("--tracker", choices=[MODE_BYTE, MODE_BOTSORT],
                   help="association mode (default byte)")
    p.add_argument("--tau-high", type=float, dest="tau_high")
    p.add_argument("--tau-low", type=float, dest="tau_low")
    p.add_argument("--new-track-threshold", type=float, dest="new_track_threshold")
    p.add_argument("--first-gate", type=float, dest="first_gate")
    p.add_argument("--second-gate", type=float, dest="second_gate")
    p.add_argument("--track-buffer", type=int, dest="track_buffer")
    p.add_argument("--emb-theta", type=float, dest="emb_theta")
    p.add_argument("--prox-theta", type=float, dest="prox_theta")
    p.add_argument("--emb-momentum", type=float, dest="emb_momentum")
    p.add_argument("--no-fuse-score", action="store_true",
                   help="disable confidence fusion in the first stage")
    p.add_argument("--class-agnostic", action="store_true",
                   help="associate across categories")


def _run_offline(bundle, cfg: TrackerConfig):
    """Track a bundle frame by frame, timing only the association step."""
    state = new_state(cfg)
    outputs = []
    gmc = bundle.camera_motion
    elapsed = 0.0
    for fno in range(1, bundle.frame_count + 1):
        frame = FrameInput(
            stream_id=1,
            frame_no=fno,
            detections=tuple(bundle.detections.get(fno, ())),
            camera_motion=gmc.get(fno) if isinstance(gmc, GmcTable) else None,
        )
        t0 = time.perf_counter()
        _, out = step(state, frame)
        elapsed += time.perf_counter() - t0
        outputs.append(out)
    return outputs, elapsed


def cmd_track(args: argparse.Namespace) -> int:
    cfg = build_tracker_config(args)
    if cfg.mode == MODE_BOTSORT and not args.gmc:
        log.warning("botsort without a camera-motion file: using identity transforms")
    bundle = load_bundle(args.dets, gmc_path=args.gmc)
    outputs, elapsed = _run_offline(bundle, cfg)
    text = write_results(outputs)
    Path(args.out).write_text(text, encoding="utf-8")
    fps = bundle.frame_count / elapsed if elapsed > 0 else float("inf")
    manifest = _manifest(
        "track",
        cfg,
        {"dets": args.dets, "gmc": args.gmc},
        {"results": args.out},
        {"frames": bundle.frame_count, "association_seconds": elapsed, "fps": fps},
    )
    _write_manifest(args.manifest, manifest, args.out + ".manifest.json")
    print(f"tracked {bundle.frame_count} frames at {fps:.1f} fps (association only)")
    return 0


def _load_labels(path: str, fmt: str, source: str):
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "visdrone":
        return parse_visdrone_annotations(text)
    return parse_mot_labels(
        text, source=source, treat_conf_as_flag=(source == GROUND_TRUTH)
    )


def cmd_eval(args: argparse.Namespace) -> int:
    if len(args.gt) != len(args.res):
        raise InputError("need as many --gt as --res paths")
    reports: list[MetricsReport] = []
    t0 = time.perf_counter()
    for gt_path, res_path in zip(args.gt, args.res):
        gt = _load_labels(gt_path, args.gt_format, GROUND_TRUTH)
        res = _load_labels(res_path, "mot", "result")
        reports.append(
            evaluate_all(gt, res, class_aware=args.class_aware, name=Path(gt_path).stem)
        )
        if args.per_class:
            for cls, rep in evaluate_per_class(gt, res).items():
                reports.append(
                    dataclasses.replace(rep, name=f"{Path(gt_path).stem}/class{cls}")
                )
    rows = list(reports)
    if len(args.gt) > 1:
        rows.append(aggregate([r for r in reports if "/class" not in r.name]))
    print(format_table(rows, percent=not args.unit_scale))
    if args.per_alpha:
        for rep in rows:
            doc = to_machine(rep)
            print(f"\nper-alpha detail for {rep.name or '-'}:")
            for entry in doc["per_alpha"]:
                print(
                    f"  alpha={entry['alpha']:.2f}  DetA={entry['DetA']:.4f}  "
                    f"AssA={entry['AssA']:.4f}  HOTA={entry['HOTA']:.4f}"
                )
    if args.json:
        Path(args.json).write_text(
            json.dumps([to_machine(r) for r in rows], indent=2) + "\n",
            encoding="utf-8",
        )
    manifest = _manifest(
        "eval",
        None,
        {"gt": list(args.gt), "res": list(args.res)},
        {"json": args.json},
        {"seconds": time.perf_counter() - t0},
    )
    if args.manifest:
        _write_manifest(args.manifest, manifest, args.manifest)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    tracker_cfg = build_tracker_config(args)
    cfg = ServerConfig(
        host=args.host,
        port=args.port,
        worker_count=args.workers,
        queue_capacity=args.queue_capacity,
        reorder_window=args.reorder_window,
        checkpoint_interval=args.checkpoint_interval,
        overload_policy=args.overload_policy,
        ckpt_dir=args.ckpt_dir,
        tracker=tracker_cfg,
    )
    server = Server(cfg).start()
    print(f"serving on {server.endpoint} (Ctrl-C to stop)")
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop(flush=True)
        stats = server.stats()
        manifest = _manifest(
            "serve",
            tracker_cfg,
            {"ckpt_dir": args.ckpt_dir},
            {"stats": stats},
            {},
        )
        if args.manifest:
            _write_manifest(args.manifest, manifest, args.manifest)
        print(f"stopped; frames per worker: {stats['frames_per_worker']}")
    return 0


def cmd_produce(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.dets, gmc_path=args.gmc)
    cfg = ProducerConfig(
        stream_id=args.stream_id,
        ack_timeout_ms=args.ack_timeout,
        window=args.window,
        max_connect_attempts=args.connect_attempts,
    )
    t0 = time.perf_counter()
    report = producer_run(bundle, args.endpoint, rate=args.rate, cfg=cfg)
    if args.out:
        outputs = results_to_outputs(report, bundle.frame_count)
        Path(args.out).write_text(write_results(outputs), encoding="utf-8")
    manifest = _manifest(
        "produce",
        None,
        {"dets": args.dets, "gmc": args.gmc, "endpoint": args.endpoint,
         "rate": args.rate, "stream_id": args.stream_id},
        {"results": args.out},
        {
            "seconds": time.perf_counter() - t0,
            "sent": report.sent,
            "retransmitted": report.retransmitted,
            "acked": report.acked,
            "reconnects": report.reconnects,
        },
    )
    if args.manifest or args.out:
        _write_manifest(args.manifest, manifest, (args.out or "produce") + ".manifest.json")
    print(
        f"sent={report.sent} retransmitted={report.retransmitted} "
        f"acked={report.acked} reconnects={report.reconnects} "
        f"wall={report.wall_time:.2f}s"
    )
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = build_tracker_config(args)
    bundle = load_bundle(args.dets)
    if bundle.frame_count == 0 or not bundle.detections:
        raise InputError("nothing to benchmark: the sequence is empty")
    samples = []
    for _ in range(args.repetitions):
        _, elapsed = _run_offline(bundle, cfg)
        samples.append(bundle.frame_count / elapsed if elapsed > 0 else float("inf"))
    med = statistics.median(samples)
    p95 = sorted(samples)[max(0, int(round(0.95 * len(samples))) - 1)]
    print(
        f"frames={bundle.frame_count} reps={args.repetitions} "
        f"median={med:.1f} fps p95={p95:.1f} fps (association only; detection "
        f"time is not included)"
    )
    manifest = _manifest(
        "bench",
        cfg,
        {"dets": args.dets},
        {},
        {"samples_fps": samples, "median_fps": med, "p95_fps": p95},
    )
    if args.manifest:
        _write_manifest(args.manifest, manifest, args.manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmts",
        description="Real-time multi-object tracking for aerial video streams",
    )
    parser.add_argument("--version", action="version", version=f"rmts {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="run a tracker offline over a detection file")
    p.add_argument("dets", help="MOT-format detection file")
    p.add_argument("--gmc", help="camera-motion file")
    p.add_argument("--out", required=True, help="result file to write")
    p.add_argument("--manifest", help="manifest path (default <out>.manifest.json)")
    _add_tracker_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score result files against ground truth")
    p.add_argument("--gt", action="append", required=True, help="ground-truth file")
    p.add_argument("--res", action="append", required=True, help="result file")
    p.add_argument("--gt-format", choices=["mot", "visdrone"], default="mot")
    p.add_argument("--class-aware", action="store_true",
                   help="forbid cross-category matches (needs class ids in results)")
    p.add_argument("--per-class", action="store_true",
                   help="also score every ground-truth category separately")
    p.add_argument("--per-alpha", action="store_true",
                   help="print per-threshold detail")
    p.add_argument("--unit-scale", action="store_true",
                   help="print unit-interval values instead of percentages")
    p.add_argument("--json", help="write machine-readable report here")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the stream-processing server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=4850)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--queue-capacity", type=int, default=256)
    p.add_argument("--reorder-window", type=int, default=64)
    p.add_argument("--checkpoint-interval", type=int, default=100)
    p.add_argument("--overload-policy", choices=["block", "drop_oldest"],
                   default="block")
    p.add_argument("--ckpt-dir", help="directory for checkpoint snapshots")
    p.add_argument("--manifest")
    _add_tracker_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("produce", help="replay a detection file against a server")
    p.add_argument("dets", help="MOT-format detection file")
    p.add_argument("--gmc", help="camera-motion file")
    p.add_argument("--endpoint", required=True, help="host:port of the server")
    p.add_argument("--rate", type=float, default=0.0,
                   help="frames per second (0 = as fast as acknowledged)")
    p.add_argument("--stream-id", type=int, default=1)
    p.add_argument("--window", type=int, default=64)
    p.add_argument("--ack-timeout", type=int, default=500, help="milliseconds")
    p.add_argument("--connect-attempts", type=int, default=20)
    p.add_argument("--out", help="write the returned results here")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_produce)

    p = sub.add_parser("bench", help="measure association throughput")
    p.add_argument("dets", help="MOT-format detection file")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--manifest")
    _add_tracker_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except RmtsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # invariant failure
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
