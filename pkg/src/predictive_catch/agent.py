"""Synthetic catcher: pursuit gaze and minimum-jerk paddle reaches for blanked flights."""
from __future__ import annotations

from dataclasses import dataclass, replace
import math

import numpy as np

from .ballistics import Trajectory, TrajectoryConfig, sample_trajectory, trial_rng
from .features import MOTOR_NAMES, ball_angles, to_head_frame


class MalformedTrialError(ValueError):
    pass


@dataclass(frozen=True)
class AgentParams:
    """Behavior parameters for one synthetic subject.

    `gaze_lag` is the time constant of the first-order pursuit filter and
    `visual_latency` the delay before a change in ball visibility reaches the
    gaze controller. Gaze noise is an AR(1) process with stationary standard
    deviation `gaze_noise_sd` and lag-one correlation `gaze_noise_corr`.

    `reach_onset` is coupled to time-to-contact: the reach starts that many
    milliseconds before the ball reaches the target plane.
    """
    pursuit_gain_target: float = 0.95
    gaze_lag: float = 40.0
    visual_latency: float = 1000.0 / 75.0
    gaze_noise_sd: float = 0.3
    gaze_noise_corr: float = 0.98
    reach_onset: float = 850.0
    reach_noise_sd: float = 0.10
    rotation_noise_sd: float = 1.0
    roll_per_meter: float = 30.0
    rest_position: tuple = (0.2, -0.6, 0.05)
    paddle_radius: float = 0.15
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("gaze_noise_sd", "reach_noise_sd", "rotation_noise_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.pursuit_gain_target <= 1.2:
            raise ValueError("pursuit_gain_target must lie in (0, 1.2]")
        if self.gaze_lag < 0 or self.visual_latency < 0 or self.reach_onset < 0:
            raise ValueError("lags and onsets must be non-negative")
        if not 0 <= self.gaze_noise_corr < 1:
            raise ValueError("gaze_noise_corr must lie in [0, 1)")
        if self.paddle_radius <= 0:
            raise ValueError("paddle_radius must be positive")

    @classmethod
    def noiseless(cls, **kw) -> "AgentParams":
        base = dict(pursuit_gain_target=1.0, gaze_noise_sd=0.0, reach_noise_sd=0.0,
                    rotation_noise_sd=0.0)
        base.update(kw)
        return cls(**base)


@dataclass
class Trial:
    trajectory: Trajectory
    motor: np.ndarray
    subject_id: int
    caught: bool
    head_position: np.ndarray
    head_rotation: np.ndarray | None = None

    @property
    def trial_id(self) -> int:
        return self.trajectory.trial_id

    def head_ball(self) -> np.ndarray:
        return to_head_frame(self.trajectory.position, self.head_position, self.head_rotation)

    def gaze(self) -> np.ndarray:
        """(n, 2) gaze azimuth and elevation."""
        return self.motor[:, [MOTOR_NAMES.index("gaze_az"), MOTOR_NAMES.index("gaze_el")]]

    def paddle_position(self) -> np.ndarray:
        return self.motor[:, 2:5]


def min_jerk(tau):
    """Fraction of distance covered by a minimum-jerk movement at normalized time tau."""
    tau = np.clip(tau, 0.0, 1.0)
    return tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)


def _ar1_noise(rng, n, sd, corr):
    if sd == 0:
        return np.zeros((n, 2))
    eps = rng.standard_normal((n, 2))
    out = np.empty((n, 2))
    out[0] = sd * eps[0]
    innov = sd * math.sqrt(1.0 - corr**2)
    for k in range(1, n):
        out[k] = corr * out[k - 1] + innov * eps[k]
    return out


def simulate_gaze(trajectory: Trajectory, params: AgentParams, rng: np.random.Generator,
                  head_position=(0.0, 1.6, 0.0), head_rotation=None) -> np.ndarray:
    """(n, 2) gaze azimuth/elevation in degrees.

    While the (latency-delayed) ball is visible gaze chases it through a
    first-order lag; once the blank reaches the controller gaze continues along
    the ball's ballistic path with gain `pursuit_gain_target`.
    """
    n = len(trajectory)
    if n == 0:
        raise MalformedTrialError("empty trajectory")
    ball = np.column_stack(ball_angles(to_head_frame(trajectory.position, head_position,
                                                     head_rotation)))
    dt = 1000.0 / trajectory.frame_rate
    delay = int(round(params.visual_latency / dt))
    alpha = 1.0 if params.gaze_lag == 0 else 1.0 - math.exp(-dt / params.gaze_lag)
    gain = params.pursuit_gain_target
    visible = trajectory.visible

    gaze = np.empty_like(ball)
    gaze[0] = ball[0]
    for k in range(1, n):
        j = k - delay
        if j < 0:
            gaze[k] = gaze[k - 1]
        elif visible[j]:
            gaze[k] = gaze[k - 1] + alpha * (ball[j] - gaze[k - 1])
        else:
            gaze[k] = gaze[k - 1] + gain * (ball[k] - ball[k - 1])
    return gaze + _ar1_noise(rng, n, params.gaze_noise_sd, params.gaze_noise_corr)


def simulate_paddle(trajectory: Trajectory, params: AgentParams, rng: np.random.Generator,
                    head_position=(0.0, 1.6, 0.0), head_rotation=None):
    """Head-frame paddle positions (n, 3) and roll/pitch/yaw in degrees (n, 3).

    The paddle leaves its rest pose `reach_onset` ms before the ball arrives and
    reaches the arrival point, displaced within the target plane by Gaussian
    noise, exactly when the ball does, following a minimum-jerk profile. Its
    normal turns toward the ball's direction from the head in proportion to
    reach progress.
    """
    n = len(trajectory)
    if n == 0:
        raise MalformedTrialError("empty trajectory")
    ball = to_head_frame(trajectory.position, head_position, head_rotation)
    rest = np.asarray(params.rest_position, dtype=float)
    goal = ball[-1].copy()
    goal[:2] += params.reach_noise_sd * rng.standard_normal(2)
    t_end = trajectory.time_ms[-1]
    duration = max(params.reach_onset, 1000.0 / trajectory.frame_rate)
    progress = min_jerk((trajectory.time_ms - (t_end - duration)) / duration)
    position = rest + np.outer(progress, goal - rest)

    az, el = ball_angles(ball)
    rotation = np.column_stack([
        params.roll_per_meter * (position[:, 0] - rest[0]),
        progress * el,
        progress * az,
    ])
    rotation += params.rotation_noise_sd * rng.standard_normal((n, 3))
    return position, rotation


def catch_outcome(trial: Trial, paddle_radius: float) -> bool:
    """Ball center strictly within `paddle_radius` of the paddle center where it crosses the target plane."""
    traj = trial.trajectory
    plane_z = traj.arrival_point[2]
    crossed = np.flatnonzero(traj.position[:, 2] <= plane_z + 1e-9)
    if crossed.size == 0 or len(trial.motor) != len(traj):
        raise MalformedTrialError(f"trial {traj.trial_id} has no target-plane crossing frame")
    k = crossed[0]
    ball = trial.head_ball()[k]
    paddle = trial.paddle_position()[k]
    return bool(math.hypot(ball[0] - paddle[0], ball[1] - paddle[1]) < paddle_radius)


def motor_matrix(gaze: np.ndarray, paddle_pos: np.ndarray, paddle_rot: np.ndarray) -> np.ndarray:
    """Pack behavior into the canonical 8-column motor ordering."""
    return np.column_stack([gaze[:, 1], gaze[:, 0], paddle_pos, paddle_rot])


def simulate_trial(trajectory: Trajectory, params: AgentParams, rng: np.random.Generator,
                   subject_id: int = 0, head_position=(0.0, 1.6, 0.0)) -> Trial:
    head = np.asarray(head_position, dtype=float)
    gaze = simulate_gaze(trajectory, params, rng, head)
    pos, rot = simulate_paddle(trajectory, params, rng, head)
    trial = Trial(trajectory, motor_matrix(gaze, pos, rot), subject_id, False, head)
    trial.caught = catch_outcome(trial, params.paddle_radius)
    return trial


def subject_params(base: AgentParams, subject_id: int, seed: int) -> AgentParams:
    """Per-subject jitter of gain, lag, noise and reach timing around `base`."""
    rng = np.random.default_rng([seed, 1_000_003, subject_id])
    jitter = rng.standard_normal(5)
    gain = float(np.clip(base.pursuit_gain_target + 0.05 * jitter[0], 0.75, 1.15))
    return replace(
        base,
        pursuit_gain_target=gain,
        gaze_lag=base.gaze_lag * math.exp(0.25 * jitter[1]),
        gaze_noise_sd=base.gaze_noise_sd * math.exp(0.2 * jitter[2]),
        reach_noise_sd=base.reach_noise_sd * math.exp(0.2 * jitter[3]),
        reach_onset=max(100.0, base.reach_onset + 40.0 * jitter[4]),
        rng_seed=seed,
    )


def simulate_population(n_subjects: int = 10, trials_per_subject: int = 135, seed: int = 0,
                        config: TrajectoryConfig | None = None,
                        params: AgentParams | None = None,
                        jitter_subjects: bool = True) -> list[Trial]:
    """Trials for `n_subjects` synthetic subjects; trial ids run 0..N-1 subject-major."""
    config = config or TrajectoryConfig(rng_seed=seed)
    params = params or AgentParams(rng_seed=seed)
    trials = []
    for s in range(n_subjects):
        p = subject_params(params, s, seed) if jitter_subjects else params
        for i in range(trials_per_subject):
            trial_id = s * trials_per_subject + i
            traj = sample_trajectory(config, trial_rng(seed, trial_id), trial_id)
            rng = np.random.default_rng([seed, trial_id, 7])
            trials.append(simulate_trial(traj, p, rng, s, config.head_position))
    return trials
