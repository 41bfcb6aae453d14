import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from predictive_catch.ballistics import (TrajectoryConfig, blanking_schedule, ms_to_frames,
                                         sample_trajectories, sample_trajectory, solve_ballistic,
                                         trial_rng)

G = np.array([0.0, -9.81, 0.0])


def verlet_landing(launch, v0, flight_time, gravity, rate_hz=10_000):
    """Independent oracle: step the ball forward at `rate_hz` with velocity Verlet."""
    n = int(np.ceil(flight_time * rate_hz))
    dt = flight_time / n
    p, v = np.array(launch, dtype=float), np.array(v0, dtype=float)
    for _ in range(n):
        p = p + v * dt + 0.5 * gravity * dt * dt
        v = v + gravity * dt
    return p


def test_identity_case_is_at_rest():
    v0 = solve_ballistic([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 1.0, [0.0, 0.0, 0.0])
    assert np.array_equal(v0, np.zeros(3))


def test_lob_matches_closed_form_and_integrator():
    launch, target = np.array([-2.0, 2.0, -8.0]), np.array([0.3, 1.2, 0.0])
    v0 = solve_ballistic(launch, target, 1.4, G)
    np.testing.assert_allclose(v0, [1.642857, 6.295571, 5.714286], atol=1e-6)
    np.testing.assert_allclose(verlet_landing(launch, v0, 1.4, G), target, atol=1e-9)


def test_symmetric_apex_case():
    v0 = solve_ballistic([0.0, 1.0, -8.0], [0.0, 1.0, 0.0], 2.0, G)
    np.testing.assert_allclose(v0, [0.0, 9.81, 4.0], atol=1e-12)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_nonpositive_flight_time_rejected(t):
    with pytest.raises(ValueError):
        solve_ballistic([0, 0, 0], [1, 1, 1], t, G)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6), st.floats(0.1, 3.0))
def test_closed_form_lands_on_target(coords, t):
    launch, target = np.array(coords[:3]), np.array(coords[3:])
    v0 = solve_ballistic(launch, target, t, G)
    landed = launch + v0 * t + 0.5 * G * t * t
    np.testing.assert_allclose(landed, target, atol=1e-9)


def test_schedule_rounds_blank_down():
    flags = blanking_schedule(600, 500, 300)
    assert len(flags) == 105
    runs = [int(flags[:45].sum()), int((~flags).sum()), int(flags[82:].sum())]
    assert runs == [45, 37, 23]
    assert not flags[45:82].any()


def test_schedule_one_frame_each():
    assert blanking_schedule(13.33, 13.33, 13.33).tolist() == [True, False, True]


def test_schedule_long_trial_blank_starts_at_75():
    flags = blanking_schedule(1000, 500, 500)
    assert len(flags) == 150
    assert flags[74] and not flags[75]


def test_schedule_rejects_subframe_duration():
    with pytest.raises(ValueError):
        blanking_schedule(5.0, 500, 300)


def test_ms_to_frames_ties_round_down():
    assert ms_to_frames(500, 75) == 37
    assert ms_to_frames(1600, 75) == 120


def test_config_combinations():
    cfg = TrajectoryConfig()
    assert len(cfg.duration_combinations) == 9
    assert cfg.flight_durations == [1400.0, 1500.0, 1600.0, 1700.0, 1800.0, 1900.0, 2000.0]


def test_config_rejects_bad_geometry():
    with pytest.raises(ValueError):
        TrajectoryConfig(launch_distance=0.1)
    with pytest.raises(ValueError):
        TrajectoryConfig(blank_duration=2.0)


def test_600_500_trial_has_120_frames():
    cfg = TrajectoryConfig(pre_blank_options=(600.0,), post_blank_options=(500.0,))
    traj = sample_trajectory(cfg, trial_rng(0, 0))
    assert len(traj) == 120
    assert traj.flight_duration == 1600.0
    np.testing.assert_allclose(np.diff(traj.time_ms), 1000 / 75, atol=1e-9)


def test_sampler_covers_all_combinations_and_durations():
    cfg = TrajectoryConfig()
    trajs = sample_trajectories(cfg, 500, seed=5)
    assert {(t.pre_blank, t.post_blank) for t in trajs} == set(cfg.duration_combinations)
    assert {t.flight_duration for t in trajs} == set(cfg.flight_durations)


def test_sampler_combination_frequencies_10k():
    cfg = TrajectoryConfig()
    trajs = sample_trajectories(cfg, 10_000, seed=9)
    combos = [(t.pre_blank, t.post_blank) for t in trajs]
    freq = np.array([combos.count(c) for c in cfg.duration_combinations]) / len(combos)
    assert np.all(np.abs(freq - 1 / 9) < 0.02)


def test_trajectory_kinematics():
    cfg = TrajectoryConfig()
    for traj in sample_trajectories(cfg, 20, seed=3):
        np.testing.assert_allclose(traj.position[-1], traj.arrival_point, atol=1e-6)
        # horizontal velocity constant, vertical decreasing at g
        assert np.ptp(traj.velocity[:, 0]) < 1e-9 and np.ptp(traj.velocity[:, 2]) < 1e-9
        t = traj.time_ms / 1000
        dv = traj.velocity[:, 1][:, None] - traj.velocity[:, 1][None, :]
        np.testing.assert_allclose(dv, -9.81 * (t[:, None] - t[None, :]), atol=1e-9)
        flags = traj.visible.astype(int)
        assert np.count_nonzero(np.diff(flags)) == 2 and flags[0] == 1


def test_resolving_from_interior_frame_reproduces_velocity():
    cfg = TrajectoryConfig()
    traj = sample_trajectories(cfg, 1, seed=4)[0]
    t_end = traj.time_ms[-1] / 1000
    for k in (0, 10, len(traj) // 2, len(traj) - 3):
        remaining = t_end - traj.time_ms[k] / 1000
        v = solve_ballistic(traj.position[k], traj.arrival_point, remaining, cfg.gravity_vector)
        np.testing.assert_allclose(v, traj.velocity[k], atol=1e-9)


def test_same_seed_bit_identical():
    cfg = TrajectoryConfig()
    a, b = sample_trajectories(cfg, 5, seed=7), sample_trajectories(cfg, 5, seed=7)
    for x, y in zip(a, b):
        assert np.array_equal(x.position, y.position) and np.array_equal(x.visible, y.visible)


def test_blank_bookkeeping():
    traj = sample_trajectories(TrajectoryConfig(), 1, seed=1)[0]
    assert traj.n_blank == 37
    assert traj.visible[traj.blank_onset] and not traj.visible[traj.blank_onset + 1]
    assert traj.visible[traj.reappearance] and not traj.visible[traj.reappearance - 1]
