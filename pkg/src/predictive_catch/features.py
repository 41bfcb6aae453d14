"""Head-centered sensorimotor features, z-score normalization and blank-onset windows."""
from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

FRAME_RATE = 75.0
FRAME_MS = 1000.0 / FRAME_RATE

# single source of truth for every 8-wide motor block (inputs, targets, outputs)
MOTOR_NAMES = ("gaze_el", "gaze_az", "paddle_x", "paddle_y", "paddle_z",
               "paddle_roll", "paddle_pitch", "paddle_yaw")
OPTICAL_NAMES = ("ball_az", "ball_el", "ball_az_rate", "ball_el_rate",
                 "ball_depth", "ball_depth_rate", "angular_size", "expansion_rate")
FEATURE_NAMES = MOTOR_NAMES + OPTICAL_NAMES
N_MOTOR = len(MOTOR_NAMES)
N_FEATURES = len(FEATURE_NAMES)
SD_FLOOR = 1e-8


class DegenerateGeometryError(ValueError):
    pass


def to_head_frame(points, head_position, head_rotation=None) -> np.ndarray:
    """Express room-frame points in head coordinates.

    `head_rotation` maps head axes to room axes (columns are the head's right,
    up and forward vectors). It may be a single 3x3 matrix or one per frame.
    """
    rel = np.asarray(points, dtype=float) - np.asarray(head_position, dtype=float)
    if head_rotation is None:
        return rel
    rot = np.asarray(head_rotation, dtype=float)
    if rot.ndim == 2:
        return rel @ rot
    return np.einsum("...i,...ij->...j", rel, rot)


def ball_angles(position):
    """Azimuth and elevation (degrees) of a head-frame position.

    Works on a single 3-vector or any ``(..., 3)`` array.
    """
    p = np.asarray(position, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    horiz = np.hypot(x, z)
    if np.any((horiz == 0) & (y == 0)):
        raise DegenerateGeometryError("direction undefined for a point at the head origin")
    az = np.degrees(np.arctan2(x, z))
    el = np.degrees(np.arctan2(y, horiz))
    if p.ndim == 1:
        return float(az), float(el)
    return az, el


def angles_to_position(azimuth, elevation, depth) -> np.ndarray:
    """Inverse of `ball_angles` at a known distance from the head."""
    az, el = np.radians(azimuth), np.radians(elevation)
    return np.stack([depth * np.cos(el) * np.sin(az),
                     depth * np.sin(el),
                     depth * np.cos(el) * np.cos(az)], axis=-1)


def angular_size(ball_radius, depth):
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= ball_radius):
        raise DegenerateGeometryError(f"depth must exceed the ball radius {ball_radius}")
    theta = np.degrees(2.0 * np.arctan(ball_radius / depth))
    return float(theta) if theta.ndim == 0 else theta


def optical_tau(angle: float, expansion_rate: float) -> float | None:
    """Optical angle over its rate of expansion, in seconds; None when the rate is zero."""
    if expansion_rate == 0:
        return None
    return angle / expansion_rate


def backward_rate(values: np.ndarray, frame_rate: float = FRAME_RATE) -> np.ndarray:
    """Per-second backward difference along axis 0; the first frame's rate is 0."""
    values = np.asarray(values, dtype=float)
    rate = np.zeros_like(values)
    rate[1:] = (values[1:] - values[:-1]) * frame_rate
    return rate


def optical_block(ball_head: np.ndarray, ball_radius: float,
                  frame_rate: float = FRAME_RATE) -> np.ndarray:
    az, el = ball_angles(ball_head)
    az, el = np.atleast_1d(az), np.atleast_1d(el)
    depth = np.linalg.norm(ball_head, axis=-1)
    size = np.atleast_1d(angular_size(ball_radius, depth))
    return np.column_stack([
        az, el, backward_rate(az, frame_rate), backward_rate(el, frame_rate),
        depth, backward_rate(depth, frame_rate), size, backward_rate(size, frame_rate),
    ])


def extract_features(trial, ball_radius: float = 0.03) -> np.ndarray:
    """One 16-wide feature row per frame: motor block then optical block."""
    ball_head = to_head_frame(trial.trajectory.position, trial.head_position, trial.head_rotation)
    optical = optical_block(ball_head, ball_radius, trial.trajectory.frame_rate)
    return np.hstack([np.asarray(trial.motor, dtype=float), optical])


@dataclass
class FeaturizedTrial:
    trial_id: int
    subject_id: int
    features: np.ndarray
    blank_onset: int
    n_blank: int


def featurize(trials, ball_radius: float = 0.03) -> list[FeaturizedTrial]:
    return [FeaturizedTrial(t.trial_id, t.subject_id, extract_features(t, ball_radius),
                            t.trajectory.blank_onset, t.trajectory.n_blank)
            for t in trials]


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    sd: np.ndarray
    computed_from: str = "train"
    names: tuple = FEATURE_NAMES

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.sd

    def invert(self, z):
        return np.asarray(z, dtype=float) * self.sd + self.mean

    def apply_motor(self, y):
        return (np.asarray(y, dtype=float) - self.mean[:N_MOTOR]) / self.sd[:N_MOTOR]

    def invert_motor(self, z):
        return np.asarray(z, dtype=float) * self.sd[:N_MOTOR] + self.mean[:N_MOTOR]

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(f"# computed_from={self.computed_from}\n")
            fh.write("feature,mean,sd\n")
            for name, m, s in zip(self.names, self.mean, self.sd):
                fh.write(f"{name},{float(m)!r},{float(s)!r}\n")

    @classmethod
    def load(cls, path) -> "Normalizer":
        names, mean, sd, tag = [], [], [], "train"
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line.startswith("# computed_from="):
                    tag = line.split("=", 1)[1]
                elif line and not line.startswith("#") and line != "feature,mean,sd":
                    name, m, s = line.split(",")
                    names.append(name)
                    mean.append(float(m))
                    sd.append(float(s))
        return cls(np.array(mean), np.array(sd), tag, tuple(names))


def fit_normalizer(frames, computed_from: str = "train") -> Normalizer:
    """Column mean and population sd over stacked frames (sd floored at 1e-8)."""
    if isinstance(frames, np.ndarray):
        x = frames
    else:
        frames = list(frames)
        if not frames:
            raise ValueError("cannot fit a normalizer on no frames")
        x = np.vstack([getattr(f, "features", f) for f in frames])
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] < 2:
        raise ValueError("need at least 2 frames to fit a normalizer")
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    flat = sd < SD_FLOOR
    if flat.any():
        log.warning("constant feature columns %s: sd floored at %g",
                    np.flatnonzero(flat).tolist(), SD_FLOOR)
        sd = np.where(flat, SD_FLOOR, sd)
    names = FEATURE_NAMES if x.shape[1] == N_FEATURES else tuple(f"f{i}" for i in range(x.shape[1]))
    return Normalizer(mean, sd, computed_from, names)


def apply_normalizer(normalizer: Normalizer, frames):
    return normalizer.apply(frames)


def window_length(integration_ms: float, frame_ms: float = FRAME_MS) -> int:
    return max(1, int(round(integration_ms / frame_ms)))


@dataclass
class WindowSample:
    input: np.ndarray
    target: np.ndarray
    trial_id: int
    integration_ms: float
    horizon_ms: float
    partition: str | None = None


@dataclass
class WindowSet:
    """Blank-onset windows for one (integration duration, horizon) pair, stacked.

    ``inputs`` has shape (N, L, 16) and ``targets`` (N, 8). Indexing yields
    `WindowSample` records.
    """
    inputs: np.ndarray
    targets: np.ndarray
    trial_ids: np.ndarray
    integration_ms: float
    horizon_frames: int
    partition: str | None = None

    def __len__(self) -> int:
        return len(self.trial_ids)

    def __getitem__(self, i) -> WindowSample:
        return WindowSample(self.inputs[i], self.targets[i], int(self.trial_ids[i]),
                            self.integration_ms, self.horizon_ms, self.partition)

    @property
    def horizon_ms(self) -> float:
        return self.horizon_frames * FRAME_MS

    @property
    def length(self) -> int:
        return self.inputs.shape[1]


def window_inputs(featurized: Sequence[FeaturizedTrial], integration_ms: float) -> np.ndarray:
    """(N, L, 16) windows whose last row is the blank-onset frame."""
    length = window_length(integration_ms)
    out = np.empty((len(featurized), length, N_FEATURES))
    for i, ft in enumerate(featurized):
        start = ft.blank_onset - length + 1
        if start < 0:
            raise ValueError(f"trial {ft.trial_id}: {integration_ms} ms window needs {length} "
                             f"pre-blank frames, only {ft.blank_onset + 1} available")
        out[i] = ft.features[start:ft.blank_onset + 1]
    return out


def window_targets(featurized: Sequence[FeaturizedTrial], horizon_frames: int) -> np.ndarray:
    out = np.empty((len(featurized), N_MOTOR))
    for i, ft in enumerate(featurized):
        if not 1 <= horizon_frames <= ft.n_blank:
            raise ValueError(f"horizon {horizon_frames} frames falls outside the "
                             f"{ft.n_blank}-frame blank of trial {ft.trial_id}")
        out[i] = ft.features[ft.blank_onset + horizon_frames, :N_MOTOR]
    return out


def window_dataset(featurized: Sequence[FeaturizedTrial], integration_ms: float,
                   horizon_frames: int, normalizer: Normalizer | None = None,
                   partition: str | None = None) -> WindowSet:
    """One sample per trial: the window ending at blank onset and the motor state Δt later."""
    if not 1 <= horizon_frames <= 37:
        raise ValueError(f"horizon must be 1..37 frames, got {horizon_frames}")
    x = window_inputs(featurized, integration_ms)
    y = window_targets(featurized, horizon_frames)
    if normalizer is not None:
        x, y = normalizer.apply(x), normalizer.apply_motor(y)
    ids = np.array([ft.trial_id for ft in featurized], dtype=int)
    return WindowSet(x, y, ids, integration_ms, horizon_frames, partition)


def save_features(path, featurized: Sequence[FeaturizedTrial]) -> None:
    header = ["trial_id", "subject_id", "frame_idx", "blank_onset", "n_blank", *FEATURE_NAMES]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for ft in featurized:
            for k, row in enumerate(ft.features):
                vals = [str(ft.trial_id), str(ft.subject_id), str(k), str(ft.blank_onset),
                        str(ft.n_blank), *(repr(float(v)) for v in row)]
                fh.write(",".join(vals) + "\n")


def load_features(path) -> list[FeaturizedTrial]:
    data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=float, ndmin=2)
    out = []
    if data.size == 0:
        return out
    ids = data[:, 0].astype(int)
    bounds = np.flatnonzero(np.diff(ids)) + 1
    for chunk in np.split(data, bounds):
        out.append(FeaturizedTrial(int(chunk[0, 0]), int(chunk[0, 1]), chunk[:, 5:].copy(),
                                   int(chunk[0, 3]), int(chunk[0, 4])))
    return out
