"""Parabolic ball flights with a pre-blank / blank / post-blank visibility schedule.

Room frame: right-handed, X rightward along the launch plane, Y up, Z forward
from the subject toward the launch plane. Frame ``k`` of a flight is sampled at
``(k + 1) / frame_rate`` seconds after launch, so the last frame coincides with
arrival at the target plane.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

FRAME_TOL = 1e-2


def frame_interval_ms(frame_rate: float) -> float:
    return 1000.0 / frame_rate


def ms_to_frames(duration_ms: float, frame_rate: float) -> int:
    """Round a duration to whole frames, ties rounding down (500 ms -> 37 at 75 Hz)."""
    exact = duration_ms * frame_rate / 1000.0
    return int(math.ceil(exact - 0.5 - 1e-9))


def solve_ballistic(launch, target, flight_time: float, gravity) -> np.ndarray:
    """Initial velocity that carries a drag-free ball from `launch` to `target`.

    Parameters
    ----------
    launch, target : array-like, shape (3,)
        Positions in meters.
    flight_time : float
        Seconds between launch and arrival.
    gravity : array-like, shape (3,)
        Acceleration vector in m/s^2, e.g. ``(0, -9.81, 0)``.
    """
    if not flight_time > 0:
        raise ValueError(f"flight_time must be positive, got {flight_time!r}")
    launch = np.asarray(launch, dtype=float)
    target = np.asarray(target, dtype=float)
    gravity = np.asarray(gravity, dtype=float)
    return (target - launch - 0.5 * gravity * flight_time**2) / flight_time


def blanking_schedule(pre_blank: float, blank: float, post_blank: float,
                      frame_rate: float = 75.0) -> np.ndarray:
    """Per-frame visibility flags: True before the blank, False during, True after."""
    for name, value in (("pre_blank", pre_blank), ("blank", blank), ("post_blank", post_blank)):
        if value * frame_rate / 1000.0 < 1.0 - FRAME_TOL:
            raise ValueError(f"{name}={value} ms is shorter than one frame at {frame_rate} Hz")
    total = ms_to_frames(pre_blank + blank + post_blank, frame_rate)
    n_pre = ms_to_frames(pre_blank, frame_rate)
    n_blank = ms_to_frames(blank, frame_rate)
    if total - n_pre - n_blank < 1:
        raise ValueError("post-blank span rounds to zero frames")
    flags = np.ones(total, dtype=bool)
    flags[n_pre:n_pre + n_blank] = False
    return flags


@dataclass(frozen=True)
class TrajectoryConfig:
    launch_plane_width: float = 6.0
    launch_plane_height: float = 1.5
    launch_plane_center_height: float = 0.75
    launch_distance: float = 6.0
    target_plane_side: float = 1.0
    target_center_height: float = 1.1
    target_distance: float = 0.2
    gravity: float = 9.81
    frame_rate: float = 75.0
    pre_blank_options: tuple = (600.0, 800.0, 1000.0)
    blank_duration: float = 500.0
    post_blank_options: tuple = (300.0, 400.0, 500.0)
    ball_radius: float = 0.03
    head_position: tuple = (0.0, 1.6, 0.0)
    rng_seed: int = 0

    def __post_init__(self):
        positive = ("launch_plane_width", "launch_plane_height", "target_plane_side",
                    "frame_rate", "blank_duration", "ball_radius", "gravity")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.launch_distance <= self.target_distance:
            raise ValueError("launch plane must lie beyond the target plane")
        dt = frame_interval_ms(self.frame_rate)
        for d in (*self.pre_blank_options, self.blank_duration, *self.post_blank_options):
            if d < dt * (1.0 - FRAME_TOL):
                raise ValueError(f"duration {d} ms is shorter than one frame")
        if not self.pre_blank_options or not self.post_blank_options:
            raise ValueError("duration option sets must be nonempty")

    @property
    def frame_interval(self) -> float:
        return frame_interval_ms(self.frame_rate)

    @property
    def gravity_vector(self) -> np.ndarray:
        return np.array([0.0, -self.gravity, 0.0])

    @property
    def duration_combinations(self) -> list[tuple[float, float]]:
        return [(p, q) for p in self.pre_blank_options for q in self.post_blank_options]

    @property
    def flight_durations(self) -> list[float]:
        return sorted({p + self.blank_duration + q for p, q in self.duration_combinations})


@dataclass
class Trajectory:
    trial_id: int
    time_ms: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    visible: np.ndarray
    pre_blank: float
    post_blank: float
    launch_point: np.ndarray
    arrival_point: np.ndarray
    blank_duration: float = 500.0
    frame_rate: float = 75.0
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.time_ms)

    @property
    def flight_duration(self) -> float:
        """Nominal flight duration in ms (pre + blank + post)."""
        return self.pre_blank + self.blank_duration + self.post_blank

    @property
    def blank_onset(self) -> int:
        """Index of the last visible frame before the blank."""
        hidden = np.flatnonzero(~self.visible)
        if hidden.size == 0:
            raise ValueError(f"trial {self.trial_id} has no blank span")
        return int(hidden[0]) - 1

    @property
    def n_blank(self) -> int:
        return int(np.count_nonzero(~self.visible))

    @property
    def reappearance(self) -> int:
        """Index of the first visible frame after the blank."""
        return self.blank_onset + self.n_blank + 1


def trajectory_from_states(trial_id, launch, arrival, pre_blank, post_blank,
                           config: TrajectoryConfig) -> Trajectory:
    visible = blanking_schedule(pre_blank, config.blank_duration, post_blank, config.frame_rate)
    n = len(visible)
    flight_time = n / config.frame_rate
    g = config.gravity_vector
    v0 = solve_ballistic(launch, arrival, flight_time, g)
    t = np.arange(1, n + 1) / config.frame_rate
    position = launch + np.outer(t, v0) + 0.5 * np.outer(t**2, g)
    velocity = v0 + np.outer(t, g)
    # pin the last frame to the arrival point to remove rounding drift
    position[-1] = arrival
    return Trajectory(
        trial_id=int(trial_id),
        time_ms=t * 1000.0,
        position=position,
        velocity=velocity,
        visible=visible,
        pre_blank=float(pre_blank),
        post_blank=float(post_blank),
        launch_point=np.asarray(launch, dtype=float),
        arrival_point=np.asarray(arrival, dtype=float),
        blank_duration=config.blank_duration,
        frame_rate=config.frame_rate,
    )


def sample_trajectory(config: TrajectoryConfig, rng: np.random.Generator,
                      trial_id: int = 0) -> Trajectory:
    """Draw one trial: launch and arrival points and a (pre, post) blank timing."""
    half_w = config.launch_plane_width / 2
    half_h = config.launch_plane_height / 2
    launch = np.array([
        rng.uniform(-half_w, half_w),
        rng.uniform(config.launch_plane_center_height - half_h,
                    config.launch_plane_center_height + half_h),
        config.launch_distance,
    ])
    side = config.target_plane_side / 2
    arrival = np.array([
        rng.uniform(-side, side),
        rng.uniform(config.target_center_height - side, config.target_center_height + side),
        config.target_distance,
    ])
    pre = config.pre_blank_options[rng.integers(len(config.pre_blank_options))]
    post = config.post_blank_options[rng.integers(len(config.post_blank_options))]
    return trajectory_from_states(trial_id, launch, arrival, pre, post, config)


def trial_rng(seed: int, trial_id: int) -> np.random.Generator:
    """Independent RNG stream for one trial."""
    return np.random.default_rng([seed, trial_id])


def sample_trajectories(config: TrajectoryConfig, n: int, seed: int | None = None,
                        first_id: int = 0) -> list[Trajectory]:
    seed = config.rng_seed if seed is None else seed
    return [sample_trajectory(config, trial_rng(seed, i), trial_id=i)
            for i in range(first_id, first_id + n)]
