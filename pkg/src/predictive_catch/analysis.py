"""Error curves, baseline bands, behavioral statistics and the feature-ablation study."""
from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Sequence

import numpy as np

from .features import (FEATURE_NAMES, FRAME_MS, MOTOR_NAMES, N_FEATURES, N_MOTOR, WindowSet,
                       ball_angles)

PADDLE_COMPONENTS = ("paddle_x", "paddle_y", "paddle_z")
GAZE_COMPONENTS = ("gaze_az", "gaze_el")


class UndefinedRatioError(ZeroDivisionError):
    """The ball did not move over the span a behavioral ratio is taken over."""


@dataclass
class ErrorCurve:
    horizon_ms: np.ndarray
    value: np.ndarray
    dispersion: np.ndarray
    label: str
    output_component: str = "aggregate"
    unit: str = ""

    def __post_init__(self):
        self.horizon_ms = np.asarray(self.horizon_ms, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        self.dispersion = np.asarray(self.dispersion, dtype=float)
        if not len(self.horizon_ms) == len(self.value) == len(self.dispersion):
            raise ValueError("horizon_ms, value and dispersion must have equal lengths")
        if np.any(np.diff(self.horizon_ms) <= 0):
            raise ValueError("horizons must be sorted ascending")
        if self.output_component not in MOTOR_NAMES + ("aggregate",):
            raise ValueError(f"unknown output component {self.output_component!r}")

    def at(self, horizon_frames: int) -> float:
        idx = np.flatnonzero(np.isclose(self.horizon_ms, horizon_frames * FRAME_MS))
        if idx.size == 0:
            raise KeyError(f"curve {self.label} has no horizon {horizon_frames}")
        return float(self.value[idx[0]])

    def scaled(self, factor: float, unit: str) -> "ErrorCurve":
        return ErrorCurve(self.horizon_ms, self.value * factor, self.dispersion * factor,
                          self.label, self.output_component, unit)

    def to_text(self) -> str:
        lines = ["horizon_ms,value,dispersion,label,output_component,unit"]
        for h, v, d in zip(self.horizon_ms, self.value, self.dispersion):
            lines.append(f"{float(h)!r},{float(v)!r},{float(d)!r},{self.label},"
                         f"{self.output_component},{self.unit}")
        return "\n".join(lines) + "\n"


def write_curves(path, curves: Sequence[ErrorCurve]) -> None:
    """All curves in one delimited table with a single header."""
    rows = ["horizon_ms,value,dispersion,label,output_component,unit"]
    for c in curves:
        rows.extend(c.to_text().splitlines()[1:])
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def read_curves(path) -> list[ErrorCurve]:
    groups: dict = {}
    with open(path) as fh:
        next(fh)
        for line in fh:
            h, v, d, label, comp, unit = line.rstrip("\n").split(",")
            groups.setdefault((label, comp, unit), []).append((float(h), float(v), float(d)))
    return [ErrorCurve(*np.array(rows).T, label=label, output_component=comp, unit=unit)
            for (label, comp, unit), rows in groups.items()]


def integration_of(predictor) -> float:
    """Integration duration a predictor's windows are built with."""
    spec = getattr(predictor, "spec", None)
    if spec is not None:
        return spec.integration_ms
    return getattr(predictor, "integration_ms", FRAME_MS)


def _windows(predictor, dataset, partition: str, horizon: int) -> WindowSet:
    ws = dataset.windows(partition, integration_of(predictor), horizon)
    if len(ws) == 0:
        raise ValueError(f"the {partition} partition is empty")
    return ws


def _horizons(predictor, horizons):
    hz = tuple(predictor.horizons if horizons is None else horizons)
    if not hz:
        raise ValueError("no horizons to evaluate")
    return tuple(sorted(hz))


def _label(predictor, label):
    return label if label is not None else getattr(predictor, "label", type(predictor).__name__)


def mse_by_distance(predictor, dataset, partition: str = "test", horizons=None,
                    label: str | None = None) -> ErrorCurve:
    """Normalized-space MSE per horizon; dispersion is the sd of per-trial MSE."""
    hz = _horizons(predictor, horizons)
    values, spread = [], []
    for h in hz:
        ws = _windows(predictor, dataset, partition, h)
        per_trial = np.mean((predictor.predict(ws.inputs, h) - ws.targets) ** 2, axis=1)
        values.append(per_trial.mean())
        spread.append(per_trial.std())
    return ErrorCurve(np.array(hz) * FRAME_MS, values, spread, _label(predictor, label))


def component_errors(predictor, dataset, horizon: int, partition: str = "test",
                     physical: bool = True) -> np.ndarray:
    """(N, 8) prediction minus truth, de-normalized when `physical`."""
    ws = _windows(predictor, dataset, partition, horizon)
    pred, truth = predictor.predict(ws.inputs, horizon), ws.targets
    if physical:
        norm = dataset.normalizer
        pred, truth = norm.invert_motor(pred), norm.invert_motor(truth)
    return pred - truth


def rmse_components(predictor, dataset, partition: str = "test", horizons=None,
                    physical: bool = True, label: str | None = None) -> list[ErrorCurve]:
    """Eight per-output RMSE curves (degrees and meters when `physical`).

    Dispersion is the sd across trials of the absolute error.
    """
    hz = _horizons(predictor, horizons)
    errs = np.stack([component_errors(predictor, dataset, h, partition, physical) for h in hz])
    rmse = np.sqrt(np.mean(errs**2, axis=1))
    spread = np.abs(errs).std(axis=1)
    units = _units(physical)
    return [ErrorCurve(np.array(hz) * FRAME_MS, rmse[:, j], spread[:, j], _label(predictor, label),
                       name, units[j]) for j, name in enumerate(MOTOR_NAMES)]


def _units(physical: bool) -> tuple:
    if not physical:
        return ("z",) * N_MOTOR
    return tuple("m" if n in PADDLE_COMPONENTS else "deg" for n in MOTOR_NAMES)


def in_centimeters(curve: ErrorCurve) -> ErrorCurve:
    if curve.unit != "m":
        raise ValueError(f"curve for {curve.output_component} is in {curve.unit!r}, not meters")
    return curve.scaled(100.0, "cm")


def mean_band_curves(mean_predictor, horizons=None, physical: bool = True) -> list[ErrorCurve]:
    """Per-output sd of the training targets around the per-horizon mean."""
    hz = _horizons(mean_predictor, horizons)
    sd = np.array([mean_predictor.sds[h] for h in hz])
    if physical:
        sd = sd * mean_predictor.normalizer.sd[:N_MOTOR]
    units = _units(physical)
    return [ErrorCurve(np.array(hz) * FRAME_MS, sd[:, j], np.zeros(len(hz)), "mean_band", name,
                       units[j]) for j, name in enumerate(MOTOR_NAMES)]


def average_curves(curves: Sequence[ErrorCurve], label: str | None = None) -> ErrorCurve:
    """Pointwise mean of value across curves sharing horizons (e.g. over seeds)."""
    first = curves[0]
    for c in curves[1:]:
        if not np.array_equal(c.horizon_ms, first.horizon_ms):
            raise ValueError("curves do not share horizons")
    values = np.mean([c.value for c in curves], axis=0)
    spread = np.std([c.value for c in curves], axis=0)
    return ErrorCurve(first.horizon_ms, values, spread, label or first.label,
                      first.output_component, first.unit)


# ---------------------------------------------------------------- behavior

def _gaze_and_ball(trial):
    az, el = np.asarray(trial.gaze()).T
    ball_az, ball_el = ball_angles(trial.head_ball())
    return np.column_stack([az, el]), np.column_stack([ball_az, ball_el])


def displacement_ratio(trial) -> float:
    """Gaze angular sweep over the blank divided by the ball's sweep.

    The sweep runs from the last visible frame to the last blank frame.
    """
    gaze, ball = _gaze_and_ball(trial)
    traj = trial.trajectory
    start, end = traj.blank_onset, traj.blank_onset + traj.n_blank
    ball_sweep = np.linalg.norm(ball[end] - ball[start])
    if ball_sweep == 0:
        raise UndefinedRatioError(f"trial {trial.trial_id}: ball did not move during the blank")
    return float(np.linalg.norm(gaze[end] - gaze[start]) / ball_sweep)


def pursuit_gain(trial) -> float:
    """Gaze over ball angular velocity at reappearance (backward differences).

    The gaze velocity is projected onto the ball's direction of motion, so
    noise orthogonal to the ball's path does not bias the gain upward.
    """
    gaze, ball = _gaze_and_ball(trial)
    k = trial.trajectory.reappearance
    if k >= len(ball):
        raise ValueError(f"trial {trial.trial_id} has no frame after the blank")
    vb, vg = ball[k] - ball[k - 1], gaze[k] - gaze[k - 1]
    speed2 = float(vb @ vb)
    if speed2 == 0:
        raise UndefinedRatioError(f"trial {trial.trial_id}: ball is stationary at reappearance")
    return float(vg @ vb / speed2)


def reappearance_speed(trial) -> float:
    """Ball angular speed in deg/s at the first visible frame after the blank."""
    _, ball = _gaze_and_ball(trial)
    k = trial.trajectory.reappearance
    return float(np.linalg.norm(ball[k] - ball[k - 1]) * trial.trajectory.frame_rate)


@dataclass
class BehaviorSummary:
    n_trials: int
    catch_rate: float
    displacement_ratio: tuple
    pursuit_gain: tuple
    reappearance_speed: tuple
    n_undefined: int = 0

    def to_text(self) -> str:
        rows = ["statistic,mean,sd", f"catch_rate,{float(self.catch_rate)!r},"]
        for name in ("displacement_ratio", "pursuit_gain", "reappearance_speed"):
            m, s = getattr(self, name)
            rows.append(f"{name},{float(m)!r},{float(s)!r}")
        rows += [f"n_trials,{self.n_trials},", f"n_undefined,{self.n_undefined},"]
        return "\n".join(rows) + "\n"


def behavior_summary(trials) -> BehaviorSummary:
    """Population means and sds of the behavioral statistics.

    Trials where a ratio is undefined are left out of that ratio's average.
    """
    trials = list(trials)
    if not trials:
        raise ValueError("no trials to summarize")
    disp, gain, undefined = [], [], 0
    for t in trials:
        try:
            disp.append(displacement_ratio(t))
            gain.append(pursuit_gain(t))
        except UndefinedRatioError:
            undefined += 1
    speed = [reappearance_speed(t) for t in trials]
    stats = lambda v: (float(np.mean(v)), float(np.std(v))) if v else (math.nan, math.nan)
    return BehaviorSummary(len(trials), float(np.mean([t.caught for t in trials])),
                           stats(disp), stats(gain), stats(speed), undefined)


# ---------------------------------------------------------------- ablation

def ablate_feature(windows, feature_index: int, normalizer=None):
    """Replace one input feature with its training mean at every timestep.

    Normalized windows (the default) get zeros; pass `normalizer` when the
    windows are in physical units to substitute its stored mean instead.
    Accepts a `WindowSet` or an (N, L, 16) array and returns the same kind.
    """
    if not (isinstance(feature_index, (int, np.integer)) and 0 <= feature_index < N_FEATURES):
        raise ValueError(f"feature_index must be an integer in 0..{N_FEATURES - 1}, "
                         f"got {feature_index!r}")
    fill = 0.0 if normalizer is None else float(normalizer.mean[feature_index])
    x = windows.inputs if isinstance(windows, WindowSet) else np.asarray(windows, dtype=float)
    out = x.copy()
    out[..., feature_index] = fill
    if isinstance(windows, WindowSet):
        return WindowSet(out, windows.targets, windows.trial_ids, windows.integration_ms,
                         windows.horizon_frames, windows.partition)
    return out


@dataclass
class AblationMatrix:
    """Column-max-normalized error increases; rows are inputs, columns outputs."""
    values: np.ndarray
    raw_increase: np.ndarray
    baseline_error: np.ndarray
    integration_ms: float
    horizon_ms: float
    rows: tuple = FEATURE_NAMES
    cols: tuple = MOTOR_NAMES
    label: str = ""

    def __post_init__(self):
        if self.values.shape != (len(self.rows), len(self.cols)):
            raise ValueError(f"ablation matrix must be {len(self.rows)}x{len(self.cols)}")

    def row_mean(self, names: Sequence[str]) -> float:
        idx = [self.rows.index(n) for n in names]
        return float(self.values[idx].mean())

    def to_text(self) -> str:
        lines = [f"# integration_ms={float(self.integration_ms)!r}"
                 f" horizon_ms={float(self.horizon_ms)!r} metric=mae_increase_colmax",
                 "feature," + ",".join(self.cols)]
        for name, row in zip(self.rows, self.values):
            lines.append(name + "," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def normalize_columns(increase: np.ndarray) -> np.ndarray:
    """Floor at 0, then divide each column by its maximum (all-zero columns stay 0)."""
    floored = np.maximum(increase, 0.0)
    peak = floored.max(axis=0)
    return np.divide(floored, peak, out=np.zeros_like(floored), where=peak > 0)


def ablation_increase(predictor, windows: WindowSet, horizon: int):
    """Per-output MAE at baseline, and its (unfloored) increase for each ablated input."""
    base = np.mean(np.abs(predictor.predict(windows.inputs, horizon) - windows.targets), axis=0)
    inc = np.empty((N_FEATURES, N_MOTOR))
    for i in range(N_FEATURES):
        abl = ablate_feature(windows.inputs, i)
        inc[i] = np.mean(np.abs(predictor.predict(abl, horizon) - windows.targets), axis=0) - base
    return base, inc


def ablation_matrix(model, dataset, horizons: Sequence[int], partition: str = "test"
                    ) -> list[AblationMatrix]:
    """One matrix per horizon: mean absolute error increase when each input is mean-substituted."""
    out = []
    for h in horizons:
        if h not in model.horizons:
            raise ValueError(f"model has no subnetwork for horizon {h}")
        ws = _windows(model, dataset, partition, h)
        base, inc = ablation_increase(model, ws, h)
        out.append(AblationMatrix(normalize_columns(inc), inc, base, integration_of(model),
                                  h * FRAME_MS, label=_label(model, None)))
    return out
