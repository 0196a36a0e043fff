"""Command-line entry points.

Subcommands: serve, run, watershed, eval, export, protocol-test.
Settings resolve as defaults < config file < flags < environment variables
(ANNOFLOW_HOST, ANNOFLOW_PORT, ANNOFLOW_DATA_ROOT, ANNOFLOW_BACKEND).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .engine import EngineParams, Session, SessionStatus, start_session
from .errors import AnnoflowError
from .geometry import BBox
from .manifest import load_manifest

ENV_PREFIX = "ANNOFLOW_"


def _read_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        values[key.strip().lower()] = value.strip()
    return values


def _setting(name: str, flag_value, config: dict[str, str], default=None):
    env = os.environ.get(ENV_PREFIX + name.upper())
    if env is not None:
        return env
    if flag_value is not None:
        return flag_value
    if name in config:
        return config[name]
    return default


def _load_prompts(path: str) -> list[BBox]:
    data = json.loads(Path(path).read_text())
    return [BBox(int(b[0]), int(b[1]), int(b[2]), int(b[3])) for b in data]


def _engine_params(args) -> EngineParams:
    base = EngineParams().to_dict()
    for key in ("alpha", "beta", "margin_fraction"):
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    if getattr(args, "grid", None):
        nx, _, ny = args.grid.partition("x")
        base["grid_nx"], base["grid_ny"] = int(nx), int(ny or nx)
    if getattr(args, "no_recovery", False):
        base["recovery_enabled"] = False
    if getattr(args, "no_validation", False):
        base["validation_enabled"] = False
    return EngineParams.from_dict(base)


def cmd_serve(args) -> int:
    from .service import ApiConfig, serve

    config_file = _read_config_file(args.config)
    host = _setting("host", args.host, config_file, "127.0.0.1")
    port = int(_setting("port", args.port, config_file, 8765))
    data_root = _setting("data_root", args.data_root, config_file)
    backend = _setting("backend", args.backend, config_file, "threshold")
    if not data_root:
        print("serve: --data-root (or ANNOFLOW_DATA_ROOT) is required", file=sys.stderr)
        return 2
    serve(
        ApiConfig(
            data_root=Path(data_root),
            backend_spec=backend,
            host=host,
            port=port,
            defaults=_engine_params(args),
        )
    )
    return 0


def cmd_run(args) -> int:
    from .service import parse_backend

    manifest = load_manifest(args.manifest)
    backend = parse_backend(args.backend)
    prompts = _load_prompts(args.prompts)
    params = _engine_params(args)
    journal = args.journal or (Path(args.manifest) / "session.journal")
    session = start_session(manifest, params, backend, prompts, journal)
    status = session.run_until_blocked()
    stats = session.stats()
    print(json.dumps(stats, indent=2))
    if args.export_dir:
        export_dir = Path(args.export_dir)
        export_dir.mkdir(parents=True, exist_ok=True)
        (export_dir / "labels.mot.csv").write_text(session.export_mot())
        yolo_dir = export_dir / "yolo"
        yolo_dir.mkdir(exist_ok=True)
        for name, content in session.export_yolo().items():
            (yolo_dir / name).write_text(content)
    if status is SessionStatus.NEEDS_MANUAL:
        conflict = session.pending_conflict
        print(
            f"conflict at frame {conflict.frame_index}: {conflict.verdict.to_dict()}",
            file=sys.stderr,
        )
        return 3
    return 0


def cmd_watershed(args) -> int:
    import numpy as np
    from PIL import Image

    from .watershed import (
        PeakParams,
        heatmap_from_image,
        heatmap_to_instances,
        read_heatmap,
    )

    path = Path(args.input)
    if path.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"):
        heatmap = heatmap_from_image(path)
    else:
        heatmap = read_heatmap(path)
    params = PeakParams(
        expected_count=args.count,
        exclusion_radius=args.radius,
        binarize_threshold=args.threshold,
        clustering=args.clustering,
    )
    instances = heatmap_to_instances(heatmap, params)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    for inst in instances:
        out = prefix.parent / f"{prefix.name}_{inst.instance_id:02d}.png"
        Image.fromarray((inst.mask.pixels * 255).astype(np.uint8), mode="L").save(out)
    print(
        json.dumps(
            {
                "instances": len(instances),
                "areas": [inst.mask.area for inst in instances],
            }
        )
    )
    return 0


def cmd_eval(args) -> int:
    from .tracking import (
        TrackerParams,
        byte_track,
        idf1,
        load_mot_detections,
        load_mot_tracks,
    )

    gt = load_mot_tracks(args.gt)
    if args.track:
        pred = byte_track(load_mot_detections(args.pred), TrackerParams())
    else:
        pred = load_mot_tracks(args.pred)
    report = idf1(gt, pred, iou_gate=args.gate)
    print(f"IDF1 {report.idf1:.4f}")
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return 0


def cmd_export(args) -> int:
    # resuming with no backend is fine: exports never call it
    session = Session.resume(args.journal, backend=None)
    out = Path(args.out)
    if args.format == "mot":
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(session.export_mot())
    elif args.format == "yolo":
        out.mkdir(parents=True, exist_ok=True)
        for name, content in session.export_yolo().items():
            (out / name).write_text(content)
    else:
        print(f"unknown format {args.format}", file=sys.stderr)
        return 2
    print(f"exported {len(session.records)} frames to {out}")
    return 0


def cmd_protocol_test(args) -> int:
    from .backends import HttpBackend, StdioBackend, ThresholdBackend, handle_request
    from .protocol import run_conformance

    if args.http:
        client = HttpBackend(args.http, timeout=args.timeout)
        call = client.call_raw
    elif args.stdio:
        import shlex

        client = StdioBackend(shlex.split(args.stdio), timeout=args.timeout)
        call = client.call_raw
    else:
        backend = ThresholdBackend()
        call = lambda req: handle_request(backend, req)  # noqa: E731

    results = run_conformance(call)
    failed = 0
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
        failed += 0 if ok else 1
    if args.stdio:
        client.close()
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="annoflow")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the annotation service")
    p_serve.add_argument("--host")
    p_serve.add_argument("--port", type=int)
    p_serve.add_argument("--data-root")
    p_serve.add_argument("--backend", help="oracle:DIR | scripted:SCENARIO:DIR | threshold[:T] | http:URL | stdio:CMD")
    p_serve.add_argument("--config", help="key=value config file")
    p_serve.add_argument("--alpha", type=float)
    p_serve.add_argument("--beta", type=float)
    p_serve.add_argument("--margin-fraction", dest="margin_fraction", type=float)
    p_serve.add_argument("--grid", help="NXxNY, e.g. 32x32")
    p_serve.set_defaults(func=cmd_serve)

    p_run = sub.add_parser("run", help="run a session headless")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--backend", required=True)
    p_run.add_argument("--prompts", required=True, help="json file: [[x0,y0,x1,y1], ...]")
    p_run.add_argument("--journal")
    p_run.add_argument("--export-dir")
    p_run.add_argument("--alpha", type=float)
    p_run.add_argument("--beta", type=float)
    p_run.add_argument("--margin-fraction", dest="margin_fraction", type=float)
    p_run.add_argument("--grid")
    p_run.add_argument("--no-recovery", action="store_true")
    p_run.add_argument("--no-validation", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_ws = sub.add_parser("watershed", help="instance segmentation from a logit heatmap")
    p_ws.add_argument("--input", required=True, help=".hmap file or PNG intensity fallback")
    p_ws.add_argument("--count", type=int, required=True)
    p_ws.add_argument("--radius", type=float, required=True)
    p_ws.add_argument("--threshold", type=float, default=0.0)
    p_ws.add_argument("--clustering", choices=["kmeans", "gmm"], default=None)
    p_ws.add_argument("--out-prefix", required=True)
    p_ws.set_defaults(func=cmd_watershed)

    p_eval = sub.add_parser("eval", help="score predictions with IDF1")
    p_eval.add_argument("--gt", required=True)
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--track", action="store_true", help="treat pred as detections and track first")
    p_eval.add_argument("--gate", type=float, default=0.5)
    p_eval.add_argument("--report", help="write a json report here")
    p_eval.set_defaults(func=cmd_eval)

    p_export = sub.add_parser("export", help="export labels from a session journal")
    p_export.add_argument("--journal", required=True)
    p_export.add_argument("--format", choices=["mot", "yolo"], default="mot")
    p_export.add_argument("--out", required=True)
    p_export.set_defaults(func=cmd_export)

    p_pt = sub.add_parser("protocol-test", help="backend protocol conformance")
    p_pt.add_argument("--http", help="http endpoint, e.g. http://127.0.0.1:9000/rpc")
    p_pt.add_argument("--stdio", help="command line of a stdio backend")
    p_pt.add_argument("--timeout", type=float, default=30.0)
    p_pt.set_defaults(func=cmd_protocol_test)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AnnoflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
