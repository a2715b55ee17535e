"""Command-line driver: synth, solve, eval and gradcheck subcommands."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .camera import default_rig
from .kinematics import PoseParams, default_model, forward_kinematics
from .metrics import compute_report
from .objective import SolverConfig, UnsolvableFrameError
from .pipeline import FrameInput, TrackState, cold_start, estimate_frame
from .solver import TERM_MAX_ITERATIONS, solve
from .synth import SynthConfig, sequence_records


class CliError(Exception):
    """Fatal CLI problem; message goes to stderr and exit code is 1."""


def _load_model(args, dataset_dir=None):
    if args.model is not None:
        return dataio.read_hand_model(args.model)
    if dataset_dir is not None:
        candidate = Path(dataset_dir) / dataio.MODEL_FILE
        if candidate.is_file():
            return dataio.read_hand_model(candidate)
    return default_model("left")


def _load_rig(args):
    if args.rig is not None:
        return dataio.read_rig(args.rig)
    return default_rig("stereo")


def _cmd_synth(args):
    model = _load_model(args)
    rig = _load_rig(args)
    config = SynthConfig(
        n_frames=args.frames,
        seed=args.seed,
        pixel_noise_sigma=args.sigma,
        base_confidence=args.base_confidence,
        confidence_decay_px=args.decay,
        dropout_prob=args.dropout,
        max_rotation_deg=args.max_rotation_deg,
    )
    records = sequence_records(model, rig, config)
    dataio.write_dataset(args.output, rig, records, model=model)
    print(f"wrote {len(records)} frames to {args.output} "
          f"({len(rig)} cameras, sigma={args.sigma}px, dropout={args.dropout})")
    return 0


def _select_cameras(rig, records, names):
    if names is None:
        return rig, records
    wanted = [n.strip() for n in names.split(",") if n.strip()]
    by_id = {cam.camera_id: cam for cam in rig}
    missing = [n for n in wanted if n not in by_id]
    if missing:
        raise CliError(f"camera {missing[0]!r} not present in the rig")
    sub_rig = [by_id[n] for n in wanted]
    sub_records = []
    for rec in records:
        keep = {cid: arr for cid, arr in rec.keypoints.items() if cid in wanted}
        if not keep:
            raise CliError(f"frame {rec.frame_id} has no observations for {wanted}")
        sub_records.append(dataio.FrameRecord(
            frame_id=rec.frame_id, hand_id=rec.hand_id,
            handedness=rec.handedness, keypoints=keep, truth=rec.truth))
    return sub_rig, sub_records


def _cmd_solve(args):
    rig, records = dataio.read_dataset(args.input)
    if not records:
        raise CliError(f"no frames found in {args.input}")
    rig, records = _select_cameras(rig, records, args.cameras)
    model = _load_model(args, dataset_dir=args.input)
    config = SolverConfig(
        confidence_threshold=args.threshold,
        max_iterations=args.max_iterations,
    )

    rows = []
    state = TrackState()
    n_failed = 0
    for rec in records:
        frame = FrameInput(frame_id=rec.frame_id, observations=rec.observations())
        if args.cold_start:
            obs = frame.observations[0]
            cam = next(c for c in rig if c.camera_id == obs.camera_id)
            try:
                initial = cold_start(model, cam, obs, config.confidence_threshold)
                result = solve(model, rig, frame.observations, initial, config)
            except UnsolvableFrameError as exc:
                raise CliError(f"frame {rec.frame_id}: {exc}") from exc
        else:
            try:
                result, state = estimate_frame(model, rig, frame, state, config)
            except UnsolvableFrameError as exc:
                raise CliError(f"frame {rec.frame_id}: {exc}") from exc
        if result.termination == "unsolvable":
            n_failed += 1
        rows.append((rec.frame_id, result.pose, result))

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataio.write_poses(out_dir / "poses.txt", rows)
    iters = np.array([r.iterations for _, _, r in rows])
    at_cap = int(sum(r.termination == TERM_MAX_ITERATIONS for _, _, r in rows))
    print(f"solved {len(rows)} frames ({n_failed} unsolvable, {at_cap} hit the "
          f"iteration cap); median iterations {np.median(iters):.0f}")
    print(f"poses written to {out_dir / 'poses.txt'}")
    return 0


def _cmd_eval(args):
    rig, records = dataio.read_dataset(args.input)
    if not records:
        raise CliError(f"no frames found in {args.input}")
    model = _load_model(args, dataset_dir=args.input)
    pose_rows = dataio.read_poses(args.poses)

    truth_by_id = {}
    for rec in records:
        if rec.truth is None:
            raise CliError(f"frame {rec.frame_id} carries no ground truth")
        truth_by_id[rec.frame_id] = rec.truth
    for row in pose_rows:
        if row.frame_id not in truth_by_id:
            raise CliError(f"pose frame_id {row.frame_id} not present in the dataset")
    if len(pose_rows) != len(truth_by_id):
        missing = sorted(set(truth_by_id) - {r.frame_id for r in pose_rows})
        raise CliError(f"dataset frame_id {missing[0]} missing from the poses file")

    frame_ids, est, tru = [], [], []
    for row in pose_rows:
        pose = PoseParams.from_vector(row.pose_vector)
        est.append(forward_kinematics(model, pose).points)
        tru.append(truth_by_id[row.frame_id])
        frame_ids.append(row.frame_id)

    thresholds = np.arange(args.threshold_step_mm, args.max_threshold_mm + 1e-9,
                           args.threshold_step_mm)
    report = compute_report(frame_ids, np.array(est), np.array(tru), thresholds)
    if args.output is not None:
        dataio.write_metrics(args.output, report)

    print(f"frames evaluated      {len(frame_ids)}")
    print(f"mean 3D error         {report.mean_error_mm:.3f} mm")
    print(f"aligned mean error    {report.aligned_mean_error_mm:.3f} mm")
    mae = report.per_axis_mae
    print(f"per-axis MAE (X Y Z)  {mae[0]:.3f} {mae[1]:.3f} {mae[2]:.3f} mm")
    for frac in (0.5, 0.9):
        below = report.thresholds[report.threshold_curve >= frac]
        label = f"{below[0]:.0f} mm" if below.size else f"> {report.thresholds[-1]:.0f} mm"
        print(f"{int(frac * 100)}% of frames within  {label}")
    if args.output is not None:
        print(f"metrics written to {args.output}")
    return 0


def _cmd_gradcheck(args):
    from .gradcheck import gradient_check

    model = _load_model(args)
    rig = _load_rig(args)
    stats = gradient_check(model, rig, n_poses=args.count, seed=args.seed)
    for block, err in stats.items():
        print(f"max relative error, {block:12s} {err:.3e}")
    worst = max(stats.values())
    if worst < args.tol:
        print(f"gradcheck passed ({args.count} poses, tolerance {args.tol:g})")
        return 0
    print(f"gradcheck FAILED: {worst:.3e} >= {args.tol:g}", file=sys.stderr)
    return 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="handik",
        description="3D hand pose recovery from 2D keypoint detections in calibrated views",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic ground-truth dataset")
    synth.add_argument("--output", required=True, help="dataset directory to create")
    synth.add_argument("--model", default=None, help="hand model file (default: built-in)")
    synth.add_argument("--rig", default=None, help="rig file (default: built-in stereo)")
    synth.add_argument("--frames", type=int, default=100)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--sigma", type=float, default=0.0, help="pixel noise sigma")
    synth.add_argument("--dropout", type=float, default=0.0, help="per-joint dropout probability")
    synth.add_argument("--base-confidence", type=float, default=1.0)
    synth.add_argument("--decay", type=float, default=2.0, help="confidence decay per noise px")
    synth.add_argument("--max-rotation-deg", type=float, default=30.0)
    synth.set_defaults(func=_cmd_synth)

    solve_p = sub.add_parser("solve", help="fit poses to a dataset of detections")
    solve_p.add_argument("--input", required=True, help="dataset directory")
    solve_p.add_argument("--output", required=True, help="output directory for poses.txt")
    solve_p.add_argument("--model", default=None,
                         help="hand model file (default: dataset model, then built-in)")
    solve_p.add_argument("--threshold", type=float, default=0.1,
                         help="confidence gate for detections")
    solve_p.add_argument("--max-iterations", type=int, default=50)
    solve_p.add_argument("--cameras", default=None,
                         help="comma-separated camera ids to use (default: all)")
    solve_p.add_argument("--cold-start", action="store_true",
                         help="disable tracking; cold-start every frame")
    solve_p.set_defaults(func=_cmd_solve)

    eval_p = sub.add_parser("eval", help="score solved poses against ground truth")
    eval_p.add_argument("--input", required=True, help="dataset directory with ground truth")
    eval_p.add_argument("--poses", required=True, help="poses.txt from the solve step")
    eval_p.add_argument("--output", default=None, help="metrics file to write")
    eval_p.add_argument("--model", default=None)
    eval_p.add_argument("--max-threshold-mm", type=float, default=50.0)
    eval_p.add_argument("--threshold-step-mm", type=float, default=1.0)
    eval_p.set_defaults(func=_cmd_eval)

    grad = sub.add_parser("gradcheck", help="compare the Jacobian against finite differences")
    grad.add_argument("--count", type=int, default=50, help="number of random poses")
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--tol", type=float, default=1e-5)
    grad.add_argument("--model", default=None)
    grad.add_argument("--rig", default=None)
    grad.set_defaults(func=_cmd_gradcheck)

    return parser


def cli_run(argv=None) -> int:
    """Parse arguments and run one subcommand; returns the exit code."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, dataio.DatasetFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_run())
