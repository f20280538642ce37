"""Command-line entry point: fit-court, pipeline, evaluate, synth."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .court import (
    GeometryError,
    fit_homography,
    load_correspondences_csv,
    load_homography_json,
    project_sequence,
    save_homography_json,
    indoor_court,
    outdoor_court,
    reprojection_rmse,
)
from .identity import (
    IdentityError,
    StartContext,
    assign_indoor_attributes,
    first_frame_positions,
    histograms_from_manifest,
    load_crop_manifest,
    assign_outdoor_attributes,
    tracklets_at_first_frame,
)
from .metrics import (
    MetricsError,
    SimilarityParams,
    evaluate_mot_iou,
    evaluate_track_id,
    pdj,
    pdj_auc,
)
from .pipeline import PipelineConfig, PipelineError, run_pipeline
from .synth import (
    ClutterTrack,
    Dropout,
    Fragmentation,
    IdExchange,
    LocNoise,
    ScenarioSpec,
    SynthError,
    camera_homography,
    generate_scenario,
)
from .trackdata import (
    DRONE,
    INDOOR,
    OUTDOOR,
    TrackDataError,
    parse_jersey_csv,
    parse_pose_csv,
    parse_tracking_csv,
    serialize_tracking_csv,
)

_ERRORS = (
    TrackDataError,
    GeometryError,
    PipelineError,
    IdentityError,
    MetricsError,
    SynthError,
    OSError,
)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _court_for_mode(mode: str):
    return outdoor_court() if mode == OUTDOOR else indoor_court()


def cmd_fit_court(args: argparse.Namespace) -> int:
    with open(args.correspondences) as fh:
        corrs = load_correspondences_csv(fh)
    if len(corrs) < 4:
        raise GeometryError(
            f"{args.correspondences}: need at least 4 correspondences, "
            f"got {len(corrs)}"
        )
    h = fit_homography(corrs)
    rmse = reprojection_rmse(h, corrs)
    with open(args.output, "w") as fh:
        save_homography_json(h, fh, rmse=rmse)
    _log(f"fit {len(corrs)} correspondences, reprojection RMSE {rmse:.6g} m")
    return 0


def _build_identity_assigner(args: argparse.Namespace, court):
    mode = args.mode
    if mode == DRONE:
        return None
    if mode == INDOOR:

        def assigner(seq):
            positions = tracklets_at_first_frame(seq)
            return assign_indoor_attributes(positions, court)

        return assigner
    if args.crops is None or args.jerseys is None:
        raise PipelineError(
            "outdoor mode requires --crops and --jerseys"
        )
    with open(args.jerseys) as fh:
        jerseys = parse_jersey_csv(fh)
    with open(args.crops) as fh:
        manifest = load_crop_manifest(fh)
    histograms = histograms_from_manifest(manifest)
    ctx = (
        StartContext.top_checkball(court)
        if args.start == "top_checkball"
        else StartContext.free_throw(court)
    )

    def assigner(seq):
        positions = first_frame_positions(seq)
        return assign_outdoor_attributes(positions, jerseys, histograms, ctx)

    return assigner


def cmd_pipeline(args: argparse.Namespace) -> int:
    with open(args.tracking) as fh:
        seq = parse_tracking_csv(fh, mode=args.mode)
    with open(args.homography) as fh:
        h = load_homography_json(fh)
    if args.config is not None:
        with open(args.config) as fh:
            cfg = PipelineConfig.load(fh)
    else:
        cfg = PipelineConfig()
    if args.t_overlap is not None:
        cfg = PipelineConfig(**{**cfg.to_json(), "t_overlap": args.t_overlap})
    court = _court_for_mode(seq.mode)
    seq = project_sequence(h, seq)
    assigner = _build_identity_assigner(args, court)
    out_path = Path(args.output)
    tmp_path = out_path.with_suffix(out_path.suffix + ".tmp")
    try:
        if args.dump_stages is not None:
            final, stages = run_pipeline(
                seq, court, cfg, identity_assigner=assigner, collect_stages=True
            )
            dump_dir = Path(args.dump_stages)
            dump_dir.mkdir(parents=True, exist_ok=True)
            for i, (name, stage_seq) in enumerate(stages.items()):
                with open(dump_dir / f"{i:02d}_{name}.csv", "w") as fh:
                    serialize_tracking_csv(stage_seq, fh)
        else:
            final = run_pipeline(seq, court, cfg, identity_assigner=assigner)
        with open(tmp_path, "w") as fh:
            serialize_tracking_csv(final, fh)
        os.replace(tmp_path, out_path)
    except Exception:
        tmp_path.unlink(missing_ok=True)
        raise
    _log(
        f"pipeline: {len(seq.detections)} detections in, "
        f"{len(final.detections)} out, {len(final.tracklet_ids())} tracklets"
    )
    return 0


def _sequence_pairs(pred: str, gt: str) -> list[tuple[str, Path, Path]]:
    pred_p, gt_p = Path(pred), Path(gt)
    if pred_p.is_dir() != gt_p.is_dir():
        raise MetricsError("--pred and --gt must both be files or directories")
    if not pred_p.is_dir():
        return [(pred_p.stem, pred_p, gt_p)]
    pairs = []
    for gt_file in sorted(gt_p.glob("*.csv")):
        pred_file = pred_p / gt_file.name
        if not pred_file.exists():
            raise MetricsError(f"no prediction for sequence {gt_file.name}")
        pairs.append((gt_file.stem, pred_file, gt_file))
    if not pairs:
        raise MetricsError(f"no .csv sequences found in {gt}")
    return pairs


def _evaluate_one(item: tuple[str, str, str, str, float]) -> tuple[str, dict]:
    name, pred_path, gt_path, task, tau = item
    params = SimilarityParams(tau=tau)
    if task == "pose":
        with open(pred_path) as fh:
            pred_poses = parse_pose_csv(fh)
        with open(gt_path) as fh:
            gt_poses = parse_pose_csv(fh)
        report = pdj(pred_poses, gt_poses)
        payload = {
            "task": "pose",
            "mean_pdj": report.mean_pdj,
            "per_keypoint": report.per_keypoint,
            "threshold": report.threshold,
            "unpaired": report.unpaired,
            "auc": pdj_auc(pred_poses, gt_poses),
        }
        return name, payload
    with open(pred_path) as fh:
        pred = parse_tracking_csv(fh)
    with open(gt_path) as fh:
        gt = parse_tracking_csv(fh)
    if task == "track-id":
        report = evaluate_track_id(pred, gt, params)
    else:
        report = evaluate_mot_iou(pred, gt, params)
    return name, report.to_dict()


def cmd_evaluate(args: argparse.Namespace) -> int:
    pairs = _sequence_pairs(args.pred, args.gt)
    items = [
        (name, str(pred_path), str(gt_path), args.task, args.tau)
        for name, pred_path, gt_path in pairs
    ]
    if args.jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_evaluate_one, items))
    else:
        results = [_evaluate_one(item) for item in items]

    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload: dict = {
        "tool_version": __version__,
        "task": args.task,
        "tau": args.tau,
        "sequences": {name: rep for name, rep in results},
    }
    if args.task in ("track-id", "mot"):
        prefix = "ti_" if args.task == "track-id" else ""
        keys = [f"{prefix}hota", f"{prefix}deta", f"{prefix}assa"]
        aggregate = {}
        for key in keys:
            vals = np.array([rep[key] for _, rep in results])
            aggregate[key] = {
                "mean": float(vals.mean()),
                "sd": float(vals.std()),
            }
        payload["aggregate"] = aggregate
        with open(out_dir / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sequence"] + keys)
            for name, rep in results:
                writer.writerow([name] + [f"{rep[k]:.6f}" for k in keys])
    else:
        vals = np.array([rep["mean_pdj"] for _, rep in results])
        payload["aggregate"] = {
            "mean_pdj": {"mean": float(vals.mean()), "sd": float(vals.std())}
        }
        with open(out_dir / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sequence", "mean_pdj", "auc"])
            for name, rep in results:
                writer.writerow(
                    [name, f"{rep['mean_pdj']:.6f}", f"{rep['auc']:.6f}"]
                )
    with open(out_dir / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    _log(f"evaluated {len(results)} sequence(s) -> {out_dir}")
    return 0


def _parse_int_pair(text: str, n: int, flag: str) -> tuple[int, ...]:
    parts = text.split(":")
    if len(parts) != n:
        raise SynthError(f"{flag} expects {n} colon-separated values")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise SynthError(f"{flag}: non-integer value in {text!r}") from None


def cmd_synth(args: argparse.Namespace) -> int:
    corruptions = []
    for text in args.fragment or []:
        track, frame = _parse_int_pair(text, 2, "--fragment")
        corruptions.append(Fragmentation(track=track, frame=frame))
    for text in args.exchange or []:
        a, b, frame = _parse_int_pair(text, 3, "--exchange")
        corruptions.append(IdExchange(track_a=a, track_b=b, frame=frame))
    if args.loc_noise is not None:
        corruptions.append(LocNoise(sigma=args.loc_noise))
    if args.dropout is not None:
        corruptions.append(Dropout(rate=args.dropout))
    for text in args.clutter or []:
        zone, _, length = text.partition(":")
        if not length:
            raise SynthError("--clutter expects ZONE:LENGTH")
        corruptions.append(ClutterTrack(zone=zone, length=int(length)))
    spec = ScenarioSpec(
        seed=args.seed,
        n_frames=args.frames,
        court=_court_for_mode(args.mode),
        step_sigma=args.step_sigma,
        corruptions=tuple(corruptions),
        mode=args.mode,
    )
    gt, pred, manifest = generate_scenario(spec)
    out_dir = Path(args.outdir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "gt.csv", "w") as fh:
        serialize_tracking_csv(gt, fh)
    with open(out_dir / "pred.csv", "w") as fh:
        serialize_tracking_csv(pred, fh)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    with open(out_dir / "homography.json", "w") as fh:
        save_homography_json(camera_homography(), fh)
    _log(
        f"scenario seed={args.seed}: {len(gt.detections)} gt detections, "
        f"{len(pred.detections)} pred detections -> {out_dir}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="courttrack",
        description=(
            "Court-localized player tracking pipeline and evaluation toolkit"
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-court", help="fit an image-to-court homography")
    p.add_argument("--correspondences", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_fit_court)

    p = sub.add_parser("pipeline", help="run the tracklet-processing stages")
    p.add_argument("--tracking", required=True)
    p.add_argument("--homography", required=True)
    p.add_argument("--mode", choices=[INDOOR, OUTDOOR, DRONE], default=None)
    p.add_argument("--config", default=None, help="pipeline config JSON")
    p.add_argument("--t-overlap", type=int, default=None)
    p.add_argument("--crops", default=None, help="crop manifest CSV (outdoor)")
    p.add_argument("--jerseys", default=None, help="jersey prediction CSV")
    p.add_argument(
        "--start",
        choices=["top_checkball", "free_throw"],
        default="top_checkball",
    )
    p.add_argument("--output", required=True)
    p.add_argument("--dump-stages", default=None, metavar="DIR")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--task", choices=["track-id", "mot", "pose"], required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--mode", choices=[INDOOR, OUTDOOR, DRONE], default=INDOOR)
    p.add_argument("--step-sigma", type=float, default=0.08)
    p.add_argument("--fragment", action="append", metavar="TRACK:FRAME")
    p.add_argument("--exchange", action="append", metavar="A:B:FRAME")
    p.add_argument("--loc-noise", type=float, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--clutter", action="append", metavar="ZONE:LENGTH")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _ERRORS as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
