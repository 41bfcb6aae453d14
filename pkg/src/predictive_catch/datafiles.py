"""Delimited-text persistence for trials, plus manifests and content hashes."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agent import Trial
from .ballistics import Trajectory
from .features import MOTOR_NAMES

TRAJECTORY_COLUMNS = ("trial_id", "frame_idx", "time_ms", "visible", "ball_x", "ball_y", "ball_z",
                      "ball_vx", "ball_vy", "ball_vz", "pre_blank_ms", "post_blank_ms")
AGENT_COLUMNS = ("gaze_az", "gaze_el", "paddle_x", "paddle_y", "paddle_z", "paddle_roll",
                 "paddle_pitch", "paddle_yaw", "subject_id", "caught")
TRIAL_COLUMNS = TRAJECTORY_COLUMNS + AGENT_COLUMNS
# agent columns are written in the order above; the motor block orders gaze_el first
_MOTOR_ORDER = [MOTOR_NAMES.index(n) for n in AGENT_COLUMNS[:8]]


class DataFileError(ValueError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


def trial_rows(trial: Trial) -> Iterable[str]:
    traj = trial.trajectory
    motor = trial.motor[:, _MOTOR_ORDER]
    for k in range(len(traj)):
        vals = [str(traj.trial_id), str(k), _fmt(traj.time_ms[k]), "1" if traj.visible[k] else "0",
                *map(_fmt, traj.position[k]), *map(_fmt, traj.velocity[k]),
                _fmt(traj.pre_blank), _fmt(traj.post_blank),
                *map(_fmt, motor[k]), str(trial.subject_id), "1" if trial.caught else "0"]
        yield ",".join(vals)


def write_trials(path, trials: Sequence[Trial]) -> None:
    path = Path(path)
    try:
        with open(path, "w") as fh:
            fh.write(",".join(TRIAL_COLUMNS) + "\n")
            for t in trials:
                for row in trial_rows(t):
                    fh.write(row + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trials to {path}: {exc.strerror}") from exc


def read_trials(path, head_position=(0.0, 1.6, 0.0), gravity: float = 9.81,
                blank_duration: float = 500.0) -> list[Trial]:
    """Rebuild `Trial` objects from a trial file.

    Launch points are recovered by running the ballistic solution back to
    time zero from the first frame.
    """
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if tuple(header) != TRIAL_COLUMNS:
        raise DataFileError(f"{path}: unexpected header {header[:4]}...")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return []
    col = {name: i for i, name in enumerate(TRIAL_COLUMNS)}
    ids = data[:, col["trial_id"]].astype(int)
    bounds = np.flatnonzero(np.diff(ids)) + 1
    g = np.array([0.0, -gravity, 0.0])
    head = np.asarray(head_position, dtype=float)
    out = []
    for chunk in np.split(data, bounds):
        frames = chunk[:, col["frame_idx"]].astype(int)
        if not np.array_equal(frames, np.arange(len(chunk))):
            raise DataFileError(f"{path}: trial {int(chunk[0, 0])} frames are not contiguous")
        t_ms = chunk[:, col["time_ms"]]
        pos = chunk[:, col["ball_x"]:col["ball_z"] + 1]
        vel = chunk[:, col["ball_vx"]:col["ball_vz"] + 1]
        frame_rate = 1000.0 / (t_ms[1] - t_ms[0]) if len(t_ms) > 1 else 75.0
        t0 = t_ms[0] / 1000.0
        v0 = vel[0] - g * t0
        launch = pos[0] - v0 * t0 - 0.5 * g * t0**2
        traj = Trajectory(
            trial_id=int(chunk[0, 0]), time_ms=t_ms.copy(), position=pos.copy(),
            velocity=vel.copy(), visible=chunk[:, col["visible"]] > 0.5,
            pre_blank=float(chunk[0, col["pre_blank_ms"]]),
            post_blank=float(chunk[0, col["post_blank_ms"]]),
            launch_point=launch, arrival_point=pos[-1].copy(),
            blank_duration=blank_duration, frame_rate=round(frame_rate, 9))
        agent = chunk[:, col["gaze_az"]:col["paddle_yaw"] + 1]
        motor = np.empty_like(agent)
        motor[:, _MOTOR_ORDER] = agent
        out.append(Trial(traj, motor, int(chunk[0, col["subject_id"]]),
                         bool(chunk[0, col["caught"]] > 0.5), head.copy()))
    return out


def git_blob_hash(path) -> str:
    """SHA-1 of a file in git's blob framing, so `git hash-object` agrees."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing manifest {path}")
    return json.loads(path.read_text())
