import numpy as np
import pytest

from xdistill.embodiment import UNIFIED_DIM, build_embodiment_observation, embed_action
from xdistill.world import (COMMAND_RANGES, Curriculum, CurriculumConfig, GaitState,
                            NonFiniteActionError, SurrogateWorld, WorldConfig, actor_obs_dim,
                            advance_gait_clock, command_ranges, contact_schedule, critic_obs_dim,
                            reset, sample_command)


def quiet(**kw):
    return WorldConfig(noise_std=0.0, resample_interval=0, **kw)


def test_reset_is_deterministic(registry):
    a, b = reset(2, 7, registry), reset(2, 7, registry)
    assert a.equals(b)
    assert a.height[0] == registry[2].nominal_base_height
    assert np.all(a.base_vel == 0) and np.all(a.qd == 0)
    assert np.array_equal(a.q[0], registry[2].to_unified(registry[2].default_pose))


def test_unknown_spec_on_reset(registry):
    with pytest.raises(KeyError):
        reset(17, 0, registry)


def test_trajectories_are_seed_deterministic(registry, rng):
    acts = rng.normal(0, 0.3, (30, 10, UNIFIED_DIM))
    runs = []
    for _ in range(2):
        w = SurrogateWorld.balanced(registry, 10, seed=3)
        w.reset()
        rewards = [w.step(a)[2].total for a in acts]
        runs.append((w.state, np.array(rewards)))
    assert runs[0][0].equals(runs[1][0])
    assert np.array_equal(runs[0][1], runs[1][1])


def test_balanced_allocation_is_round_robin(registry):
    w = SurrogateWorld.balanced(registry, 500)
    counts = np.bincount(w.arrays.ids)
    assert list(counts) == [100] * 5


# ---------------------------------------------------------------- gait clock
def test_gait_clock_arithmetic():
    g = advance_gait_clock(GaitState(np.array(0.0), 0.5, np.array(1.0)), 0.02)
    assert g.phi1 == pytest.approx(0.02)
    g = advance_gait_clock(GaitState(np.array(0.99), 0.5, np.array(2.0)), 0.02)
    assert g.phi1 == pytest.approx(0.03)
    g = GaitState(np.array(0.25), 0.5, np.array(1.0))
    assert g.phi2 == pytest.approx(0.75)
    np.testing.assert_allclose(g.clock(), [1.0, -1.0], atol=1e-12)


def test_gait_clock_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        advance_gait_clock(GaitState(np.array(0.0), 0.5, np.array(1.0)), 0.0)


def test_phase_offset_is_preserved(rng):
    g = GaitState(rng.uniform(0, 1, 50), 0.5, rng.uniform(1, 2.5, 50))
    for _ in range(200):
        g = advance_gait_clock(g, 0.02)
        p = g.phases()
        assert np.all((p >= 0) & (p < 1))
        np.testing.assert_allclose(np.mod(p[:, 1] - p[:, 0], 1.0), 0.5, atol=1e-12)


def test_contact_schedule_plateaus_and_symmetry():
    assert contact_schedule(0.25) == pytest.approx(1.0, abs=1e-4)
    assert contact_schedule(0.75) == pytest.approx(0.0, abs=1e-4)
    for eps in (0.01, 0.02, 0.03, 0.04, 0.05):
        assert contact_schedule(0.5 - eps) + contact_schedule(0.5 + eps) == pytest.approx(1.0, abs=1e-6)


def test_contact_schedule_is_continuous_across_wrap():
    x = np.linspace(0, 1, 100001)
    c = contact_schedule(x)
    assert np.max(np.abs(np.diff(c))) < 1e-2
    assert contact_schedule(1.0 - 1e-9) == pytest.approx(contact_schedule(0.0), abs=1e-6)
    assert np.all((c >= 0) & (c <= 1))


# ---------------------------------------------------------------- curriculum
def test_ranges_at_endpoints_and_midpoint():
    r0, r1 = command_ranges(0.0), command_ranges(1.0)
    for k, (init, fin) in enumerate(COMMAND_RANGES.values()):
        assert tuple(r0[k]) == init and tuple(r1[k]) == fin
    assert tuple(r1[0]) == (-0.6, 1.2) and tuple(r1[2]) == (-1.0, 1.0)
    assert tuple(r0[3]) == tuple(r1[3]) == (-0.3, 0.0)
    np.testing.assert_allclose(command_ranges(0.5)[0], [-0.45, 0.9], atol=1e-12)


def test_samples_stay_inside_ranges(rng):
    for progress in (0.0, 0.3, 1.0):
        r = command_ranges(progress)
        cmds = np.stack([sample_command(progress, rng) for _ in range(2000)])
        assert np.all(cmds[:, :5] >= r[:, 0]) and np.all(cmds[:, :5] <= r[:, 1])
        assert np.all((cmds[:, 5] >= 1.0) & (cmds[:, 5] <= 2.5))


def test_curriculum_advances_and_clears_window():
    c = Curriculum(CurriculumConfig(window=4, threshold=0.3, step=0.05))
    for _ in range(3):
        assert not c.record(0.1)
    assert c.record(0.1)
    assert c.progress == pytest.approx(0.05)
    # the window restarted, so three more good updates are not enough
    for _ in range(3):
        assert not c.record(0.1)
    assert c.record(0.1)
    for _ in range(10):
        assert not c.record(1.0)
    assert c.progress == pytest.approx(0.10)


def test_curriculum_never_exceeds_one():
    c = Curriculum(CurriculumConfig(window=1), progress=0.98)
    for _ in range(5):
        c.record(0.0)
    assert c.progress == 1.0


# ------------------------------------------------------------------ dynamics
def test_pd_matches_closed_form_recursion(registry):
    spec = registry[1]
    cfg = quiet(drag=0.5)
    w = SurrogateWorld(registry, [spec.id], config=cfg)
    w.reset()
    x = np.linspace(-0.2, 0.2, spec.n_dofs)
    u = embed_action(x[None], spec)
    target = spec.default_pose + x
    dt = cfg.dt
    for n_steps in (1, 5, 40):
        w = SurrogateWorld(registry, [spec.id], config=cfg)
        w.reset()
        for _ in range(n_steps):
            w.step(u)
        q = w.state.q[0, list(spec.joint_map)]
        for k in range(spec.n_dofs):
            kp, kd = spec.stiffness[k], spec.damping[k]
            M = np.array([[1 - dt * dt * kp, dt * (1 - dt * kd)], [-dt * kp, 1 - dt * kd]])
            e, _ = np.linalg.matrix_power(M, n_steps) @ np.array([spec.default_pose[k] - target[k], 0.0])
            assert q[k] - target[k] == pytest.approx(e, abs=1e-12)
    # geometric convergence towards the target
    for _ in range(400):
        w.step(u)
    np.testing.assert_allclose(w.state.q[0, list(spec.joint_map)], target, atol=1e-6)


def test_zero_action_keeps_base_at_rest(registry):
    w = SurrogateWorld(registry, [0, 3], config=quiet())
    s0 = w.reset().copy()
    for _ in range(10):
        s, _, _ = w.step(np.zeros((2, UNIFIED_DIM)))
    np.testing.assert_allclose(s.base_pos, s0.base_pos, atol=1e-12)
    np.testing.assert_allclose(s.height, s0.height, atol=1e-12)


def test_speed_is_nonincreasing_under_drag(registry):
    w = SurrogateWorld(registry, [0, 1, 2, 3, 4], config=quiet())
    w.reset()
    w.state.base_vel[:] = np.array([0.8, -0.3, 0.5])
    speeds = []
    for _ in range(50):
        s, _, _ = w.step(np.zeros((5, UNIFIED_DIM)))
        speeds.append(np.linalg.norm(s.base_vel, axis=1))
    assert np.all(np.diff(np.array(speeds), axis=0) <= 0)


def test_unclaimed_slots_are_ignored(registry, rng):
    spec = registry[0]
    a = rng.normal(0, 0.3, (1, UNIFIED_DIM))
    b = a.copy()
    b[0, ~spec.slot_mask] = 5.0
    out = []
    for act in (a, b):
        w = SurrogateWorld(registry, [0], config=quiet())
        w.reset()
        out.append(w.step(act)[0])
    assert out[0].equals(out[1])


def test_nonfinite_action_raises(registry):
    w = SurrogateWorld(registry, [0, 1])
    w.reset()
    a = np.zeros((2, UNIFIED_DIM))
    a[1, 3] = np.nan
    with pytest.raises(NonFiniteActionError, match="env 1 slot 3"):
        w.step(a)


def test_fall_and_horizon_end_episodes(registry):
    cfg = quiet(horizon=15)
    w = SurrogateWorld(registry, [0, 0], config=cfg)
    w.reset()
    w.state.pitch[1] = 0.0
    a = np.zeros((2, UNIFIED_DIM))
    spec = registry[0]
    # drive env 1 hard through its pitch row until it tips over
    pitch_row = spec.to_unified(spec.actuation_matrix[4])
    a[1] = 3.0 * np.sign(pitch_row) * spec.slot_mask
    dones = []
    for _ in range(15):
        s, d, _ = w.step(a)
        dones.append(d.copy())
        if d[1]:
            assert s.fallen[1]
            assert abs(s.pitch[1]) > 1.0 or s.height[1] < 0.4 * spec.nominal_base_height
            break
    assert np.array(dones)[:, 1].any()
    w.reset()
    for t in range(15):
        _, d, _ = w.step(np.zeros((2, UNIFIED_DIM)))
    assert d.all() and np.all(w.state.step == 15)


# -------------------------------------------------------------- observation
def test_observation_shapes_and_padding(registry):
    w = SurrogateWorld.balanced(registry, 5)
    w.reset()
    obs = w.observe()
    assert obs.actor.shape == (5, actor_obs_dim())
    assert obs.critic.shape == (5, critic_obs_dim())
    frame = obs.proprio.shape[1] // 5
    assert np.all(obs.proprio[:, frame:] == 0.0)


def test_critic_carries_own_embodiment_observation(registry):
    w = SurrogateWorld.balanced(registry, 10)
    w.reset()
    oea = w.observe().oea
    for i, e in enumerate(w.arrays.ids):
        assert np.array_equal(oea[i], build_embodiment_observation(registry[int(e)], registry))
    blind = SurrogateWorld.balanced(registry, 10, embodiment_observation=False)
    blind.reset()
    assert np.all(blind.observe().oea == 0.0)


def test_history_shifts_one_frame_per_step(registry, rng):
    w = SurrogateWorld(registry, [2], config=quiet())
    w.reset()
    first = w.observe().proprio.copy()
    w.step(rng.normal(0, 0.2, (1, UNIFIED_DIM)))
    second = w.observe().proprio
    frame = first.shape[1] // 5
    assert np.array_equal(second[:, frame:2 * frame], first[:, :frame])


def test_reward_groups_sum_to_total(registry, rng):
    w = SurrogateWorld.balanced(registry, 10, config=WorldConfig(group_weights=(1.0, 0.5, 2.0)))
    w.reset()
    for _ in range(5):
        _, _, r = w.step(rng.normal(0, 0.3, (10, UNIFIED_DIM)))
    assert np.array_equal(r.total, 1.0 * r.task + 0.5 * r.beh + 2.0 * r.reg)
    assert np.all((r["lin_vel"] > 0) & (r["lin_vel"] <= 2.0))
    assert np.all((r["ang_vel"] > 0) & (r["ang_vel"] <= 2.5))
    for name in ("base_height", "body_pitch", "foot_swing", "joint_torque", "orientation"):
        assert np.all(r[name] <= 0)
