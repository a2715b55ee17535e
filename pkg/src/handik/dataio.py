"""File formats: hand models, camera rigs, frame datasets, poses, metrics.

All formats are line-oriented structured text with a leading format tag
(``handmodel/v1``, ``rig/v1``, ``frame/v1``, ``poses/v1``, ``metrics/v1``),
so malformed input can be reported with file and line context.  Angles are
degrees in files and radians in memory; every writer/reader pair round-trips
values exactly (floats are written with ``repr``).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import Camera
from .kinematics import N_KEYPOINTS, HandModel
from .objective import Observation

MODEL_TAG = "handmodel/v1"
RIG_TAG = "rig/v1"
FRAME_TAG = "frame/v1"
POSES_TAG = "poses/v1"
METRICS_TAG = "metrics/v1"

FRAME_DIR = "frames"
RIG_FILE = "rig.txt"
MODEL_FILE = "model.txt"


class DatasetFormatError(ValueError):
    """Malformed input file, with file/line context in the message."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:"
            if line is not None:
                where += f"{line}:"
            where += " "
        super().__init__(where + message)
        self.path = path
        self.line = line


class _Reader:
    """Line reader that skips blanks/comments and tracks line numbers."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            raw = self.path.read_text().splitlines()
        except OSError as exc:
            raise DatasetFormatError(str(exc), path=path) from exc
        self.lines = []
        for i, line in enumerate(raw, start=1):
            stripped = line.strip()
            if stripped and not stripped.startswith("#"):
                self.lines.append((i, stripped))
        self.pos = 0

    def error(self, message, line=None):
        raise DatasetFormatError(message, path=self.path, line=line)

    def exhausted(self):
        return self.pos >= len(self.lines)

    def peek(self):
        if self.exhausted():
            self.error("unexpected end of file")
        return self.lines[self.pos]

    def next(self):
        lineno, text = self.peek()
        self.pos += 1
        return lineno, text

    def expect_tag(self, tag):
        lineno, text = self.next()
        if text != tag:
            self.error(f"expected format tag {tag!r}, found {text!r}", line=lineno)

    def fields(self, key, count=None):
        lineno, text = self.next()
        parts = text.split()
        if parts[0] != key:
            self.error(f"expected {key!r}, found {parts[0]!r}", line=lineno)
        if count is not None and len(parts) - 1 != count:
            self.error(f"{key!r} expects {count} values, found {len(parts) - 1}", line=lineno)
        return lineno, parts[1:]

    def floats(self, key, count):
        lineno, parts = self.fields(key, count)
        try:
            return [float(p) for p in parts]
        except ValueError:
            self.error(f"non-numeric value in {key!r}", line=lineno)

    def row(self, count, what):
        lineno, text = self.next()
        parts = text.split()
        if len(parts) != count:
            self.error(f"{what} row expects {count} values, found {len(parts)}", line=lineno)
        try:
            return [float(p) for p in parts]
        except ValueError:
            self.error(f"non-numeric value in {what} row", line=lineno)


def _fmt(x):
    return repr(float(x))


def _fmt_row(values):
    return " ".join(_fmt(v) for v in values)


# -- hand model ---------------------------------------------------------

def write_hand_model(path, model: HandModel) -> None:
    lines = [MODEL_TAG, f"handedness {model.handedness}", "bones 20"]
    lines.append("# parent child length_mm dir_x dir_y dir_z")
    for b in range(20):
        lines.append(
            f"{model.bone_parent[b]} {model.bone_child[b]} "
            f"{_fmt(model.bone_length[b])} {_fmt_row(model.bone_dir[b])}"
        )
    lines.append("limits_deg 20")
    lines.append("# lo hi, rows per finger: base_flex base_abduct mid_flex tip_flex")
    for row in np.degrees(model.joint_limits):
        lines.append(_fmt_row(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_hand_model(path) -> HandModel:
    r = _Reader(path)
    r.expect_tag(MODEL_TAG)
    _, (handedness,) = r.fields("handedness", 1)
    _, (nbones,) = r.fields("bones", 1)
    if nbones != "20":
        r.error("bone count must be 20")
    parent, child, length, direction = [], [], [], []
    for _ in range(20):
        row = r.row(6, "bone")
        parent.append(int(row[0]))
        child.append(int(row[1]))
        length.append(row[2])
        direction.append(row[3:6])
    _, (nlimits,) = r.fields("limits_deg", 1)
    if nlimits != "20":
        r.error("limit count must be 20")
    limits = [r.row(2, "limit") for _ in range(20)]
    try:
        return HandModel(
            handedness=handedness,
            bone_parent=np.array(parent),
            bone_child=np.array(child),
            bone_length=np.array(length),
            bone_dir=np.array(direction),
            joint_limits=np.radians(limits),
        )
    except ValueError as exc:
        raise DatasetFormatError(str(exc), path=path) from exc


# -- camera rig ---------------------------------------------------------

def write_rig(path, rig: list) -> None:
    lines = [RIG_TAG, f"cameras {len(rig)}"]
    for cam in rig:
        lines.append(f"camera {cam.camera_id}")
        lines.append(f"image_size {cam.image_size[0]} {cam.image_size[1]}")
        lines.append(f"focal {_fmt_row(cam.focal)}")
        lines.append(f"center {_fmt_row(cam.center)}")
        lines.append(f"distortion {_fmt_row(cam.distortion)}")
        lines.append(f"rotation_wxyz {_fmt_row(cam.rotation)}")
        lines.append(f"translation_mm {_fmt_row(cam.translation)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_rig(path) -> list:
    r = _Reader(path)
    r.expect_tag(RIG_TAG)
    lineno, (count,) = r.fields("cameras", 1)
    try:
        count = int(count)
    except ValueError:
        r.error("camera count must be an integer", line=lineno)
    if count < 1:
        r.error("rig must list at least one camera", line=lineno)
    rig = []
    seen = set()
    for _ in range(count):
        lineno, (cam_id,) = r.fields("camera", 1)
        if cam_id in seen:
            r.error(f"duplicate camera id {cam_id!r}", line=lineno)
        seen.add(cam_id)
        size = r.floats("image_size", 2)
        focal = r.floats("focal", 2)
        center = r.floats("center", 2)
        distortion = r.floats("distortion", 5)
        rotation = r.floats("rotation_wxyz", 4)
        translation = r.floats("translation_mm", 3)
        try:
            rig.append(Camera(
                camera_id=cam_id,
                focal=focal,
                center=center,
                distortion=distortion,
                rotation=rotation,
                translation=translation,
                image_size=(int(size[0]), int(size[1])),
            ))
        except ValueError as exc:
            raise DatasetFormatError(str(exc), path=path, line=lineno) from exc
    return rig


# -- frames -------------------------------------------------------------

@dataclass
class FrameRecord:
    """Per-frame keypoint detections for one hand, optionally with ground
    truth 3D keypoints (millimetres)."""

    frame_id: int
    hand_id: str
    handedness: str
    keypoints: dict  # camera_id -> (21, 3) array of (u, v, p)
    truth: np.ndarray | None = None  # (21, 3) mm

    def observations(self) -> list:
        return [
            Observation(joints=arr, hand_id=self.hand_id,
                        handedness=self.handedness, camera_id=cam_id)
            for cam_id, arr in self.keypoints.items()
        ]


def write_frame(path, record: FrameRecord) -> None:
    lines = [
        FRAME_TAG,
        f"frame_id {record.frame_id}",
        f"hand_id {record.hand_id}",
        f"handedness {record.handedness}",
        f"cameras {len(record.keypoints)}",
    ]
    for cam_id, arr in record.keypoints.items():
        lines.append(f"camera {cam_id}")
        for row in arr:
            lines.append(_fmt_row(row))
    if record.truth is not None:
        lines.append("truth_mm")
        for row in record.truth:
            lines.append(_fmt_row(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_frame(path) -> FrameRecord:
    r = _Reader(path)
    r.expect_tag(FRAME_TAG)
    lineno, (frame_id,) = r.fields("frame_id", 1)
    try:
        frame_id = int(frame_id)
    except ValueError:
        r.error("frame_id must be an integer", line=lineno)
    _, (hand_id,) = r.fields("hand_id", 1)
    lineno, (handedness,) = r.fields("handedness", 1)
    if handedness not in ("left", "right"):
        r.error(f"handedness must be 'left' or 'right', found {handedness!r}", line=lineno)
    lineno, (count,) = r.fields("cameras", 1)
    try:
        count = int(count)
    except ValueError:
        r.error("camera count must be an integer", line=lineno)
    keypoints = {}
    for _ in range(count):
        lineno, (cam_id,) = r.fields("camera", 1)
        if cam_id in keypoints:
            r.error(f"duplicate camera {cam_id!r} in frame", line=lineno)
        rows = [r.row(3, "keypoint") for _ in range(N_KEYPOINTS)]
        arr = np.array(rows)
        bad = np.where((arr[:, 2] < 0.0) | (arr[:, 2] > 1.0))[0]
        if bad.size:
            r.error(f"confidence outside [0, 1] for joint {bad[0]} of camera {cam_id!r}",
                    line=lineno)
        keypoints[cam_id] = arr
    truth = None
    if not r.exhausted():
        lineno, text = r.next()
        if text != "truth_mm":
            r.error(f"expected 'truth_mm' or end of file, found {text!r}", line=lineno)
        truth = np.array([r.row(3, "truth") for _ in range(N_KEYPOINTS)])
    if not r.exhausted():
        lineno, text = r.peek()
        r.error(f"trailing content {text!r}", line=lineno)
    return FrameRecord(frame_id=frame_id, hand_id=hand_id, handedness=handedness,
                       keypoints=keypoints, truth=truth)


# -- datasets -----------------------------------------------------------

def write_dataset(path, rig, records, model=None) -> None:
    """Write a dataset directory: rig file, optional model file, one frame
    file per record."""
    root = Path(path)
    (root / FRAME_DIR).mkdir(parents=True, exist_ok=True)
    write_rig(root / RIG_FILE, rig)
    if model is not None:
        write_hand_model(root / MODEL_FILE, model)
    for record in records:
        write_frame(root / FRAME_DIR / f"frame_{record.frame_id:06d}.txt", record)


def read_dataset(path):
    """Read a dataset directory; returns (rig, records sorted by frame_id)."""
    root = Path(path)
    rig_path = root / RIG_FILE
    if not rig_path.is_file():
        raise DatasetFormatError(f"missing rig file {RIG_FILE!r}", path=root)
    rig = read_rig(rig_path)
    known = {cam.camera_id for cam in rig}
    records = []
    frame_dir = root / FRAME_DIR
    frame_paths = sorted(frame_dir.glob("*.txt")) if frame_dir.is_dir() else []
    for frame_path in frame_paths:
        record = read_frame(frame_path)
        unknown = set(record.keypoints) - known
        if unknown:
            raise DatasetFormatError(
                f"unknown camera_id {sorted(unknown)[0]!r}", path=frame_path)
        records.append(record)
    records.sort(key=lambda rec: rec.frame_id)
    return rig, records


# -- solved poses -------------------------------------------------------

_POSE_COLUMNS = (
    "frame_id tx ty tz qw qx qy qz "
    + " ".join(f"a{i:02d}" for i in range(20))
    + " initial_cost final_cost iterations termination"
)


def write_poses(path, rows) -> None:
    """Write per-frame solve outputs.

    ``rows`` is an iterable of (frame_id, PoseParams, SolveResult-like)
    where the third item carries initial_cost, final_cost, iterations and
    termination attributes.
    """
    lines = [POSES_TAG, "# " + _POSE_COLUMNS]
    for frame_id, pose, result in rows:
        vec = pose.as_vector()
        lines.append(
            f"{frame_id} {_fmt_row(vec)} {_fmt(result.initial_cost)} "
            f"{_fmt(result.final_cost)} {result.iterations} {result.termination}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class PoseRow:
    frame_id: int
    pose_vector: np.ndarray  # (27,)
    initial_cost: float
    final_cost: float
    iterations: int
    termination: str


def read_poses(path) -> list:
    r = _Reader(path)
    r.expect_tag(POSES_TAG)
    rows = []
    while not r.exhausted():
        lineno, text = r.next()
        parts = text.split()
        if len(parts) != 32:
            r.error(f"pose row expects 32 fields, found {len(parts)}", line=lineno)
        try:
            rows.append(PoseRow(
                frame_id=int(parts[0]),
                pose_vector=np.array([float(p) for p in parts[1:28]]),
                initial_cost=float(parts[28]),
                final_cost=float(parts[29]),
                iterations=int(parts[30]),
                termination=parts[31],
            ))
        except ValueError:
            r.error("malformed pose row", line=lineno)
    return rows


# -- metrics ------------------------------------------------------------

def write_metrics(path, report) -> None:
    lines = [
        METRICS_TAG,
        f"mean_error_mm {_fmt(report.mean_error_mm)}",
        f"aligned_mean_error_mm {_fmt(report.aligned_mean_error_mm)}",
        f"per_axis_mae_mm {_fmt_row(report.per_axis_mae)}",
        f"threshold_curve {len(report.thresholds)}",
        "# threshold_mm fraction",
    ]
    for t, f in zip(report.thresholds, report.threshold_curve):
        lines.append(f"{_fmt(t)} {_fmt(f)}")
    lines.append(f"frames {len(report.frame_ids)}")
    lines.append("# frame_id error_mm aligned_error_mm")
    for fid, err, aerr in zip(report.frame_ids, report.per_frame_error_mm,
                              report.per_frame_aligned_mm):
        lines.append(f"{fid} {_fmt(err)} {_fmt(aerr)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics(path):
    from .metrics import MetricsReport

    r = _Reader(path)
    r.expect_tag(METRICS_TAG)
    mean_error = r.floats("mean_error_mm", 1)[0]
    aligned = r.floats("aligned_mean_error_mm", 1)[0]
    per_axis = np.array(r.floats("per_axis_mae_mm", 3))
    _, (count,) = r.fields("threshold_curve", 1)
    curve = np.array([r.row(2, "threshold") for _ in range(int(count))])
    _, (nframes,) = r.fields("frames", 1)
    frame_ids, errs, aerrs = [], [], []
    for _ in range(int(nframes)):
        row = r.row(3, "frame metric")
        frame_ids.append(int(row[0]))
        errs.append(row[1])
        aerrs.append(row[2])
    return MetricsReport(
        thresholds=curve[:, 0],
        threshold_curve=curve[:, 1],
        per_axis_mae=per_axis,
        mean_error_mm=mean_error,
        aligned_mean_error_mm=aligned,
        frame_ids=frame_ids,
        per_frame_error_mm=np.array(errs),
        per_frame_aligned_mm=np.array(aerrs),
    )
