"""``lidarseg`` command line: segment, eval, bench, synth."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import bench
from .aggregation import aggregate
from .baselines import dbscan, mean_shift
from .kitti_io import default_config, load_yaml, read_config, read_labels, read_scan, write_labels, write_scan
from .metrics import PanopticEvaluator
from .model import EvaluationError, FormatError, GenerationError, LidarSegError, validate_scan
from .sip import run_sip
from .synth import SceneSpec, generate_scene

SEGMENT_METHODS = ("sip", "sip+ia", "meanshift", "dbscan")


def _pairs(scan_arg: str, labels_arg: str) -> list[tuple[Path, Path]]:
    """(scan, label) paths: two files, or two directories matched by file stem."""
    scan, labels = Path(scan_arg), Path(labels_arg)
    if scan.is_dir() != labels.is_dir():
        raise FormatError("--scan and --labels must both be files or both be directories")
    if not scan.is_dir():
        return [(scan, labels)]
    scans = sorted(scan.glob("*.bin"))
    out = []
    for s in scans:
        lab = labels / f"{s.stem}.label"
        if not lab.exists():
            raise FormatError(f"no label file {lab} for scan {s}")
        out.append((s, lab))
    if not out:
        raise FormatError(f"no .bin scans in {scan}")
    return out


def _threads(value: str | None) -> int:
    if value in (None, "max"):
        return os.cpu_count() or 1
    n = int(value)
    if n < 1:
        raise ValueError(f"--threads must be >= 1 or 'max', got {value}")
    return n


def _segment_one(scan_path, label_path, cfg, args):
    cloud = read_scan(scan_path)
    labels = read_labels(label_path, expected_n=len(cloud))
    report = validate_scan(cloud, labels, cfg)
    notes = [str(issue.kind) + ": " + issue.detail for issue in report.issues]
    timings = {}
    if args.method in ("sip", "sip+ia"):
        result = run_sip(cloud, labels, cfg, shift=not args.no_shift)
        proposals = result.proposals
        timings = dict(result.timings)
        if args.method == "sip+ia":
            proposals, ms = bench.timed(lambda: aggregate(proposals, cloud, cfg))
            timings["aggregate"] = ms
            timings["total"] += ms
    elif args.method == "meanshift":
        proposals, timings["total"] = bench.timed(lambda: mean_shift(cloud, labels, cfg))
    else:
        proposals, timings["total"] = bench.timed(
            lambda: dbscan(cloud, labels, cfg, args.eps, args.min_pts)
        )
    if int(proposals.instance_of_point.max(initial=0)) > 0xFFFF:
        raise FormatError(f"{scan_path}: more than 65535 instances do not fit the label format")
    out = Path(args.out) / f"{scan_path.stem}.label"
    write_labels(labels.with_instances(proposals.instance_of_point), out)
    return scan_path.name, len(proposals), timings, notes


def cmd_segment(args) -> int:
    cfg = read_config(args.config)
    pairs = _pairs(args.scan, args.labels)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=_threads(args.threads)) as pool:
        results = list(pool.map(lambda p: _segment_one(p[0], p[1], cfg, args), pairs))
    for name, count, timings, notes in results:
        for note in notes:
            print(f"warning: {name}: {note}", file=sys.stderr)
        stages = " ".join(f"{k}={v:.1f}ms" for k, v in timings.items())
        print(f"{name}: {count} instances  {stages}")
    return 0


def cmd_eval(args) -> int:
    cfg = read_config(args.config)
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    preds = sorted(pred_dir.glob("*.label")) if pred_dir.is_dir() else [pred_dir]
    if not preds:
        raise FormatError(f"no .label files in {pred_dir}")
    evaluator = PanopticEvaluator(cfg)
    for p in preds:
        g = gt_dir / p.name if gt_dir.is_dir() else gt_dir
        if not g.exists():
            raise FormatError(f"no ground-truth file {g} for prediction {p}")
        pred = read_labels(p)
        gt = read_labels(g, expected_n=len(pred))
        try:
            evaluator.add(pred, gt)
        except EvaluationError as exc:
            raise EvaluationError(f"{p.name}: {exc}") from None
    scores = evaluator.scores()
    print(scores.table())
    report = Path(args.report) if args.report else (pred_dir if pred_dir.is_dir() else pred_dir.parent) / "panoptic_report.json"
    report.write_text(scores.to_json() + "\n", encoding="utf-8")
    print(f"report written to {report}")
    return 0


def _scene_spec(path: str | None, default_points: int | None = None) -> SceneSpec:
    if path is None:
        return SceneSpec() if default_points is None else SceneSpec(thing_points=default_points)
    data = load_yaml(path)
    if not isinstance(data, dict):
        raise GenerationError(f"{path}: scene spec must be a mapping")
    return SceneSpec.from_dict(data.get("scene", data))


def cmd_bench(args) -> int:
    cfg = read_config(args.config) if args.config else default_config()
    spec = _scene_spec(args.suite, default_points=100_000)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    report = bench.run_bench(
        spec, cfg, methods=methods, scenes=args.scenes, repeat=args.repeat, budget_ms=args.budget_ms
    )
    print(report.table())
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def _seed_range(text: str) -> range:
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise ValueError(f"--seeds: expected 'a..b' or an integer, got {text!r}") from None
    if hi < lo:
        raise ValueError(f"--seeds: empty range {text!r}")
    return range(lo, hi + 1)


def cmd_synth(args) -> int:
    spec = _scene_spec(args.spec)
    out = Path(args.out)
    (out / "velodyne").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    seeds = _seed_range(args.seeds)
    for seed in seeds:
        cloud, labels = generate_scene(spec, seed)
        write_scan(cloud, out / "velodyne" / f"{seed:06d}.bin")
        write_labels(labels, out / "labels" / f"{seed:06d}.label")
    print(f"wrote {len(seeds)} scans to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lidarseg", description="LiDAR instance proposals, baselines and panoptic metrics.")
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="cluster thing points into instances and write .label files")
    seg.add_argument("--scan", required=True, help=".bin file or directory of .bin files")
    seg.add_argument("--labels", required=True, help="semantic .label file or directory (matched by stem)")
    seg.add_argument("--config", required=True, help="class config (YAML)")
    seg.add_argument("--out", required=True, help="output directory for predicted .label files")
    seg.add_argument("--method", choices=SEGMENT_METHODS, default="sip")
    seg.add_argument("--no-shift", action="store_true", help="skip bubble shrinking (sip methods only)")
    seg.add_argument("--eps", type=float, default=bench.DBSCAN_EPS, help="DBSCAN radius in meters")
    seg.add_argument("--min-pts", type=int, default=bench.DBSCAN_MIN_PTS, help="DBSCAN core threshold")
    seg.add_argument("--threads", default=None, help="worker threads over scans (integer or 'max', default max)")
    seg.set_defaults(func=cmd_segment)

    ev = sub.add_parser("eval", help="panoptic scores of predicted against ground-truth labels")
    ev.add_argument("--pred", required=True, help="predicted .label file or directory")
    ev.add_argument("--gt", required=True, help="ground-truth .label file or directory")
    ev.add_argument("--config", required=True, help="class config (YAML)")
    ev.add_argument("--report", default=None, help="JSON report path (default: panoptic_report.json next to --pred)")
    ev.set_defaults(func=cmd_eval)

    be = sub.add_parser("bench", help="latency of methods and sampling stages on generated scenes")
    be.add_argument("--suite", default=None, help="scene spec (YAML); default 100k thing points")
    be.add_argument("--repeat", type=int, default=20, help="timed runs per scene and method")
    be.add_argument("--scenes", type=int, default=1, help="number of scenes (seeds 0..n-1)")
    be.add_argument("--methods", default=",".join(bench.DEFAULT_METHODS), help=f"comma list from {','.join(bench.METHODS)}")
    be.add_argument("--config", default=None, help="class config (YAML); default bundled table")
    be.add_argument("--budget-ms", type=float, default=None, help="stop each mean-shift run after this long (reported as a lower bound)")
    be.add_argument("--report", default=None, help="optional JSON report path")
    be.set_defaults(func=cmd_bench)

    sy = sub.add_parser("synth", help="write generated scan/label pairs")
    sy.add_argument("--spec", default=None, help="scene spec (YAML); default built-in spec")
    sy.add_argument("--seeds", required=True, help="seed range a..b (inclusive)")
    sy.add_argument("--out", required=True, help="output directory (velodyne/ and labels/ are created)")
    sy.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LidarSegError, OSError, ValueError) as exc:
        print(f"lidarseg {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
