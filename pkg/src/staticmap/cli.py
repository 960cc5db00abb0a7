"""Command-line entry point: ``staticmap <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on data or parse errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, PipelineConfig, load_config
from .map_builder import build_raw_map
from .metrics import evaluate, legacy_precision_recall, write_eval_report
from .pipeline import analyze_frame, compare_ground_fits, run_scans, write_frame_report
from .scan_io import ParseError, SequenceSource, read_calib_file, read_cloud, write_cloud
from .srt import BinClass
from . import synth

log = logging.getLogger("staticmap")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _frame_range(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A:B, got {text!r}") from None
    if b < a:
        raise argparse.ArgumentTypeError("range end before start")
    return a, b


def _add_sequence_args(p: argparse.ArgumentParser, config: bool = True) -> None:
    p.add_argument("--seq", required=True, type=Path, help="sequence dir (velodyne/, labels/)")
    p.add_argument("--poses", required=True, type=Path, help="KITTI pose file")
    p.add_argument("--range", dest="frame_range", type=_frame_range, help="inclusive frame range A:B")
    p.add_argument("--calib", type=Path, help="KITTI calib.txt whose Tr is applied to every pose")
    if config:
        p.add_argument("--config", type=Path, help="key = value config file")


def _source(args) -> SequenceSource:
    calib = read_calib_file(args.calib) if args.calib else None
    return SequenceSource.from_dir(args.seq, args.poses, args.frame_range, calib)


def _config(args) -> PipelineConfig:
    return load_config(args.config) if getattr(args, "config", None) else PipelineConfig()


def cmd_build_map(args) -> None:
    raw = build_raw_map(_source(args).load())
    write_cloud(raw.cloud, args.out)
    print(f"raw map: {len(raw)} points -> {args.out}")


def cmd_erase(args) -> None:
    cfg = _config(args)
    refined = run_scans(_source(args).load(), cfg, independent_frames=args.independent_frames,
                        threads=args.threads)
    write_cloud(refined.static_cloud, args.out_static, "ascii-ply")
    write_cloud(refined.removed_cloud, args.out_dynamic, "ascii-ply")
    write_frame_report(refined.per_frame, args.report)
    print(f"static: {len(refined.static_ids)} points, removed: {len(refined.removed_ids)} points")


def _load_labels(path: Path, n: int) -> np.ndarray:
    files = sorted(path.glob("*.label")) if path.is_dir() else [path]
    raw = np.concatenate([np.fromfile(f, dtype="<u4") for f in files]) if files else np.zeros(0, "<u4")
    if len(raw) != n:
        raise ParseError(f"{path}: {len(raw)} labels for a map of {n} points")
    return (raw & 0xFFFF).astype(np.uint16)


def cmd_evaluate(args) -> None:
    cfg = _config(args)
    raw = read_cloud(args.raw)
    refined = read_cloud(args.refined)
    if args.labels is not None:
        raw = raw.with_labels(_load_labels(args.labels, len(raw)))
    if raw.labels is None or refined.labels is None:
        raise ParseError("both maps need labels (PLY label property or --labels for the raw map)")
    report = evaluate(raw, refined, args.voxel, cfg.dynamic_classes)
    print(report.table())
    if args.legacy_metrics:
        precision, recall = legacy_precision_recall(raw, refined, args.voxel, cfg.dynamic_classes)
        print(f"legacy (non-primary) precision {100 * precision:.3f} recall {100 * recall:.3f}")
    if args.report:
        write_eval_report(report, args.report)


def cmd_stats(args) -> None:
    cfg = _config(args)
    scans = _source(args).load()
    raw = build_raw_map(scans)
    rows = []
    for query, pose in scans:
        a = analyze_frame(raw, query, pose, cfg)
        dh_q, dh_m = a.query_rpod.delta_h, a.map_rpod.delta_h
        for (r, s), cls in np.ndenumerate(a.srt.classes):
            rows.append([pose.stamp, r + 1, s + 1, BinClass(int(cls)).name, a.srt.ratios[r, s],
                         dh_q[r, s], dh_m[r, s], a.query_rpod.counts[r, s], a.map_rpod.counts[r, s]])
    with open(args.dump_ratios, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stamp", "ring", "sector", "class", "ratio", "dh_query", "dh_map",
                    "n_query", "n_map"])
        for row in rows:
            w.writerow(["" if isinstance(v, float) and np.isnan(v) else v for v in row])
    if args.hist:
        ratios = np.array([row[4] for row in rows if np.isfinite(row[4])])
        counts, edges = np.histogram(np.clip(ratios, 0.0, args.hist_max), bins=args.hist_bins,
                                     range=(0.0, args.hist_max))
        density = counts / max(counts.sum(), 1) / np.diff(edges)
        with open(args.hist, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lo", "hi", "count", "density"])
            for lo, hi, c, d in zip(edges[:-1], edges[1:], counts, density):
                w.writerow([f"{lo:.6g}", f"{hi:.6g}", c, f"{d:.6g}"])
    print(f"{len(rows)} bin rows -> {args.dump_ratios}")


def cmd_synth(args) -> None:
    spec = synth.SCENES[args.scene](args.seed)
    out = synth.write_sequence(synth.generate_sequence(spec), args.out)
    print(f"{spec.frames} frames -> {out}")


def cmd_compare_gpf(args) -> None:
    cfg = _config(args)
    rows = compare_ground_fits(_source(args).load(), cfg)
    fields = ["stamp", "static_total", "dynamic_total", "regional_static_ground",
              "regional_dynamic_ground", "global_static_ground", "global_dynamic_ground"]
    with open(args.report, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            w.writerow([getattr(r, f) for f in fields])
    n = max(len(rows), 1)
    mean = {f: sum(getattr(r, f) for r in rows) / n for f in fields[1:]}
    print(f"{'method':<8} {'E(N_s,g)':>10} {'E(N_d,g)':>10} {'E(^N_s,g)':>10} {'E(^N_d,g)':>10}")
    for name, key in (("global", "global"), ("R-GPF", "regional")):
        print(f"{name:<8} {mean['static_total']:10.2f} {mean['dynamic_total']:10.2f} "
              f"{mean[key + '_static_ground']:10.2f} {mean[key + '_dynamic_ground']:10.2f}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="staticmap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-map", help="accumulate posed scans into a world-frame map")
    _add_sequence_args(p, config=False)
    p.add_argument("--out", required=True, type=Path, help=".ply or .bin output")
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("erase", help="remove dynamic points from the accumulated map")
    _add_sequence_args(p)
    p.add_argument("--out-static", required=True, type=Path)
    p.add_argument("--out-dynamic", required=True, type=Path)
    p.add_argument("--report", required=True, type=Path, help="per-frame CSV report")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    p.add_argument("--independent-frames", action="store_true",
                   help="judge every frame against the raw map and union the removals")
    p.set_defaults(func=cmd_erase)

    p = sub.add_parser("evaluate", help="voxel-wise preservation/rejection rates")
    p.add_argument("--raw", required=True, type=Path)
    p.add_argument("--refined", required=True, type=Path)
    p.add_argument("--labels", type=Path, help=".label file or directory for the raw map")
    p.add_argument("--voxel", type=float, default=0.2)
    p.add_argument("--report", type=Path)
    p.add_argument("--config", type=Path, help="config file (for dynamic_classes)")
    p.add_argument("--legacy-metrics", action="store_true",
                   help="also print voxel removal precision/recall (not a primary metric)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="dump per-bin scan ratios")
    _add_sequence_args(p)
    p.add_argument("--dump-ratios", required=True, type=Path)
    p.add_argument("--hist", type=Path, help="also write a ratio histogram CSV")
    p.add_argument("--hist-bins", type=int, default=50)
    p.add_argument("--hist-max", type=float, default=2.0)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="write a synthetic KITTI-layout sequence")
    p.add_argument("--scene", choices=sorted(synth.SCENES), default="benchmark")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("compare-gpf", help="per-bin vs single-plane ground fitting accounting")
    _add_sequence_args(p)
    p.add_argument("--report", required=True, type=Path)
    p.set_defaults(func=cmd_compare_gpf)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "erase" and args.threads is not None and args.threads < 1:
        print("staticmap erase: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        args.func(args)
    except (ConfigError, ParseError, ValueError, OSError) as exc:
        print(f"staticmap {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
