"""Online planner: observations, budget backstop, A2C losses and training."""

import json

import numpy as np
import pytest

from wattcount import (
    AgentPair,
    CountAction,
    CounterModel,
    EnergyLedger,
    EnergyModel,
    SynthPattern,
    TrainConfig,
    TrainingData,
    WindowSpec,
    a2c_train,
    act,
    apply_counter,
    bare_minimum,
    build_observation,
    categorical_policy_loss_grads,
    derive_seed,
    gaussian_policy_loss_grads,
    load_agent_pair,
    normalization_scales,
    prepare_training_data,
    profile_errors,
    resolve_action,
    save_agent_pair,
    save_training_log,
    spawn_rng,
    synth_trace,
    value_loss_grads,
    window_energy,
    window_mean_pairs,
    CountTrace,
    Mlp,
)

SPEC = WindowSpec(tau_seconds=120, horizon_windows=8, alpha=0.95)


@pytest.fixture(scope="module")
def world():
    """Small scene with two counters, profiled, plus labeled training data."""
    pattern = SynthPattern(base_rate=4.0, diurnal_amplitude=2.0, period_windows=8)
    trace = synth_trace(pattern, n_windows=48, spec=SPEC, seed=7, scene_id="unit", fps=1)
    counters = (
        CounterModel("cheap", 0.2, ratio_mean=0.85, ratio_std=0.1),
        CounterModel("gold", 2.0),
    )
    em = EnergyModel(0.05)
    profiles = {}
    for i, c in enumerate(counters):
        observed = apply_counter(trace, c, seed=derive_seed(5, i))
        pairs = window_mean_pairs(trace, observed, SPEC)
        profiles[c.counter_id] = profile_errors(pairs, threshold=0.25, counter_id=c.counter_id)
    data = prepare_training_data(
        trace, [0, 1, 2], budget_j=120.0, counters=counters, em=em,
        profiles=profiles, spec=SPEC, seed=11,
    )
    return trace, counters, em, profiles, data


def fresh_pair(data, seed=301):
    return AgentPair(
        budget_level_j=data.budget_j,
        counter_ids=tuple(c.counter_id for c in data.counters),
        window_frames=120,
        norm_mean_scale=data.mean_scale,
        norm_std_scale=data.std_scale,
        seed=seed,
    )


class TestEnergyLedger:
    def test_charges_accumulate(self):
        led = EnergyLedger(budget_j=100.0)
        led.charge(30.0)
        led.charge(20.0)
        assert led.spent_j == 50.0
        assert led.remaining_j == 50.0

    def test_overdraft_rejected(self):
        led = EnergyLedger(budget_j=10.0)
        with pytest.raises(ValueError, match="ledger overdraft"):
            led.charge(10.1)

    def test_negative_charge_rejected(self):
        led = EnergyLedger(budget_j=10.0)
        with pytest.raises(ValueError, match="negative"):
            led.charge(-1.0)

    def test_exact_spend_down_allowed(self):
        led = EnergyLedger(budget_j=10.0)
        led.charge(10.0)
        assert led.remaining_j == 0.0


class TestBareMinimum:
    COUNTERS = (CounterModel("a", 1.0), CounterModel("b", 4.0))

    def test_hand_value_no_overhead(self):
        em = EnergyModel(2.0)
        # cheapest counter at 30 frames: 30 * (2 + 1) = 90 per window
        assert bare_minimum(10, self.COUNTERS, em) == 900.0

    def test_wake_overhead_counted_once_per_window(self):
        em = EnergyModel(2.0, e_wake_capture=3.0, e_wake_process=4.0)
        assert bare_minimum(2, self.COUNTERS, em) == 2 * 97.0

    def test_zero_windows_free(self):
        assert bare_minimum(0, self.COUNTERS, EnergyModel(1.0)) == 0.0

    def test_negative_windows_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            bare_minimum(-1, self.COUNTERS, EnergyModel(1.0))


class TestBuildObservation:
    def test_cold_start_is_all_zeros(self):
        obs = build_observation([], 0, 48, 1.0, 1.0)
        assert obs.shape == (10,)
        assert np.all(obs == 0.0)

    def test_recent_and_day_back_layout(self):
        stream = [(float(10 * p), float(p)) for p in range(10)]
        obs = build_observation(stream, 9, 8, mean_scale=2.0, std_scale=4.0)
        # slots 0..3 are windows 8,7,6,5; slot 4 is window 9-8=1
        assert obs[0] == 80.0 / 2.0 and obs[1] == 8.0 / 4.0
        assert obs[2] == 70.0 / 2.0 and obs[3] == 7.0 / 4.0
        assert obs[6] == 50.0 / 2.0 and obs[7] == 5.0 / 4.0
        assert obs[8] == 10.0 / 2.0 and obs[9] == 1.0 / 4.0

    def test_partial_history_fills_what_exists(self):
        stream = [(5.0, 1.0), (6.0, 2.0)]
        obs = build_observation(stream, 2, 8, 1.0, 1.0)
        assert obs[0] == 6.0 and obs[2] == 5.0
        assert np.all(obs[4:] == 0.0)  # older windows and day-back missing


class TestAgentPair:
    def test_network_budgets(self, world):
        *_, data = world
        pair = fresh_pair(data)
        for net in (pair.reg_actor, pair.reg_critic, pair.cls_actor, pair.cls_critic):
            assert net.n_params < 5500
        assert pair.reg_actor.n_weight_mults + pair.cls_actor.n_weight_mults <= 10_000

    def test_too_many_counters_blow_the_mult_budget(self):
        with pytest.raises(ValueError, match="multiply-add"):
            AgentPair(100.0, [f"c{i}" for i in range(8)], 120, 1.0, 1.0, seed=0)

    def test_needs_counters(self):
        with pytest.raises(ValueError, match="at least one counter"):
            AgentPair(100.0, [], 120, 1.0, 1.0, seed=0)

    def test_frames_from_raw_clips_and_snaps(self, world):
        *_, data = world
        pair = fresh_pair(data)  # window_frames=120
        assert pair.frames_from_raw(-2.0) == 30
        assert pair.frames_from_raw(5.0) == 120
        assert pair.frames_from_raw(1.0 / 3.0) == 60  # 30 + 30 exactly on grid


class TestResolveAction:
    COUNTERS = (CounterModel("a", 1.0), CounterModel("b", 4.0))
    EM = EnergyModel(1.0)  # a: 2 J/frame, b: 5 J/frame, no overhead

    def make_pair(self):
        return AgentPair(1000.0, ("a", "b"), 120, 1.0, 1.0, seed=9)

    def test_backstop_at_bare_minimum(self):
        pair = self.make_pair()
        ledger = EnergyLedger(600.0)  # exactly 10 windows at the cheap minimum
        action, clamped = resolve_action(pair, 1.0, 1, ledger, 10, self.COUNTERS, self.EM)
        assert action == CountAction("a", 30)
        assert not clamped

    def test_rich_budget_passes_through(self):
        pair = self.make_pair()
        ledger = EnergyLedger(10_000.0)
        action, clamped = resolve_action(pair, 1.0, 1, ledger, 2, self.COUNTERS, self.EM)
        assert action == CountAction("b", 120)
        assert not clamped

    def test_caps_frames_on_requested_counter(self):
        pair = self.make_pair()
        ledger = EnergyLedger(460.0)  # allowance 400 after the next window's floor
        action, clamped = resolve_action(pair, 1.0, 1, ledger, 2, self.COUNTERS, self.EM)
        assert action == CountAction("b", 80)  # floor(400 / 5) = 80, on grid
        assert clamped
        ledger.charge(window_energy(action.n_frames, self.COUNTERS[1], self.EM))
        assert ledger.remaining_j == pytest.approx(60.0)

    def test_downgrades_to_cheap_counter(self):
        pair = self.make_pair()
        ledger = EnergyLedger(200.0)  # allowance 140: under b's minimum of 150
        action, clamped = resolve_action(pair, 1.0, 1, ledger, 2, self.COUNTERS, self.EM)
        assert action == CountAction("a", 70)  # floor(140 / 2) = 70
        assert clamped

    def test_invariant_next_windows_stay_affordable(self):
        pair = self.make_pair()
        rng = spawn_rng(77, 0)
        for _ in range(300):
            wr = int(rng.integers(1, 6))
            floor = bare_minimum(wr, self.COUNTERS, self.EM)
            ledger = EnergyLedger(floor + float(rng.uniform(0.0, 500.0)))
            raw = float(rng.uniform(-0.5, 1.5))
            c_idx = int(rng.integers(0, 2))
            action, _ = resolve_action(pair, raw, c_idx, ledger, wr, self.COUNTERS, self.EM)
            counter = next(c for c in self.COUNTERS if c.counter_id == action.counter_id)
            ledger.charge(window_energy(action.n_frames, counter, self.EM))
            assert ledger.remaining_j >= bare_minimum(wr - 1, self.COUNTERS, self.EM) - 1e-9

    def test_act_is_deterministic(self, world):
        _, counters, em, _, data = world
        pair = fresh_pair(data)
        obs = np.zeros(10)
        ledger = EnergyLedger(data.budget_j)
        first = act(pair, obs, ledger, 8, counters, em)
        second = act(pair, obs, ledger, 8, counters, em)
        assert first == second
        assert first.n_frames >= 30


def fd_gradient(f, x0, eps=1e-6):
    g = np.zeros_like(x0)
    for i in range(x0.size):
        up = x0.copy()
        up[i] += eps
        dn = x0.copy()
        dn[i] -= eps
        g[i] = (f(up) - f(dn)) / (2 * eps)
    return g


def max_rel(a, b):
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float(np.abs(a - b).max() / 1.0) if a.size == 0 else float((np.abs(a - b) / scale).max())


class TestLossGradients:
    def test_gaussian_policy_matches_fd(self):
        actor = Mlp([4, 6, 1], spawn_rng(40, 0))
        rng = spawn_rng(40, 1)
        obs = rng.normal(size=(5, 4))
        raw = rng.normal(size=5)
        adv = rng.normal(size=5)
        coef = 0.01
        log_std0 = -0.7

        _, analytic = gaussian_policy_loss_grads(actor, log_std0, obs, raw, adv, coef)

        def loss(vec):
            actor.set_flat(vec[:-1])
            value, _ = gaussian_policy_loss_grads(actor, float(vec[-1]), obs, raw, adv, coef)
            return value

        x0 = np.concatenate([actor.get_flat(), [log_std0]])
        numeric = fd_gradient(loss, x0)
        actor.set_flat(x0[:-1])
        assert max_rel(analytic, numeric) < 1e-5

    def test_categorical_policy_matches_fd(self):
        actor = Mlp([4, 6, 3], spawn_rng(41, 0))
        rng = spawn_rng(41, 1)
        obs = rng.normal(size=(6, 4))
        idx = rng.integers(0, 3, size=6)
        adv = rng.normal(size=6)
        coef = 0.01

        _, analytic = categorical_policy_loss_grads(actor, obs, idx, adv, coef)

        def loss(vec):
            actor.set_flat(vec)
            value, _ = categorical_policy_loss_grads(actor, obs, idx, adv, coef)
            return value

        numeric = fd_gradient(loss, actor.get_flat().copy())
        assert max_rel(analytic, numeric) < 1e-5

    def test_value_loss_matches_fd(self):
        critic = Mlp([4, 6, 1], spawn_rng(42, 0))
        rng = spawn_rng(42, 1)
        obs = rng.normal(size=(5, 4))
        targets = rng.normal(size=5)

        _, analytic = value_loss_grads(critic, obs, targets)

        def loss(vec):
            critic.set_flat(vec)
            value, _ = value_loss_grads(critic, obs, targets)
            return value

        numeric = fd_gradient(loss, critic.get_flat().copy())
        assert max_rel(analytic, numeric) < 1e-5

    def test_entropy_bonus_pushes_log_std_up(self):
        # zero advantages: the only log_std force left is the entropy term
        actor = Mlp([4, 6, 1], spawn_rng(43, 0))
        obs = spawn_rng(43, 1).normal(size=(5, 4))
        _, grad = gaussian_policy_loss_grads(actor, -1.0, obs, np.zeros(5), np.zeros(5), 0.01)
        assert grad[-1] == pytest.approx(-0.01 * 5)


class TestTrainingData:
    def test_plans_cover_horizons_and_respect_budget(self, world):
        *_, data = world
        assert len(data.horizons) == 3
        for plan in data.plans:
            assert len(plan.actions) == SPEC.horizon_windows
            assert plan.spent_j <= data.budget_j

    def test_preparation_is_deterministic(self, world):
        trace, counters, em, profiles, data = world
        again = prepare_training_data(
            trace, [0, 1, 2], budget_j=120.0, counters=counters, em=em,
            profiles=profiles, spec=SPEC, seed=11,
        )
        assert again.plans == data.plans
        assert again.mean_scale == data.mean_scale

    def test_misaligned_labels_rejected(self, world):
        *_, data = world
        with pytest.raises(ValueError, match="must align"):
            TrainingData(
                budget_j=data.budget_j, horizons=data.horizons, plans=data.plans[:2],
                counters=data.counters, em=data.em, spec=data.spec,
                mean_scale=data.mean_scale, std_scale=data.std_scale,
            )

    def test_needs_three_horizons(self, world):
        *_, data = world
        with pytest.raises(ValueError, match="at least 3"):
            TrainingData(
                budget_j=data.budget_j, horizons=data.horizons[:2], plans=data.plans[:2],
                counters=data.counters, em=data.em, spec=data.spec,
                mean_scale=data.mean_scale, std_scale=data.std_scale,
            )

    def test_normalization_scales_hand_case(self):
        trace = CountTrace("flat", np.full(960, 3, dtype=np.int64))
        mean_scale, std_scale = normalization_scales(trace, [0], SPEC)
        assert mean_scale == 3.0
        assert std_scale == 1e-6  # degenerate stds floor at epsilon


class TestTraining:
    def test_two_runs_identical(self, world):
        *_, data = world
        cfg = TrainConfig(episodes=6)
        pair_a = fresh_pair(data)
        log_a = a2c_train(data, pair_a, cfg, seed=99)
        pair_b = fresh_pair(data)
        log_b = a2c_train(data, pair_b, cfg, seed=99)
        assert log_a == log_b
        assert np.array_equal(pair_a.reg_actor.get_flat(), pair_b.reg_actor.get_flat())
        assert np.array_equal(pair_a.cls_actor.get_flat(), pair_b.cls_actor.get_flat())
        assert pair_a.reg_log_std == pair_b.reg_log_std

    def test_zero_lr_leaves_parameters_alone(self, world):
        *_, data = world
        pair = fresh_pair(data)
        before = [n.get_flat().copy() for n in
                  (pair.reg_actor, pair.reg_critic, pair.cls_actor, pair.cls_critic)]
        a2c_train(data, pair, TrainConfig(episodes=4, lr=0.0), seed=5)
        after = [n.get_flat() for n in
                 (pair.reg_actor, pair.reg_critic, pair.cls_actor, pair.cls_critic)]
        for b, a in zip(before, after):
            assert np.array_equal(b, a)

    def test_log_rows_shape(self, world):
        *_, data = world
        pair = fresh_pair(data)
        rows = a2c_train(data, pair, TrainConfig(episodes=5), seed=3)
        assert [r[0] for r in rows] == [0, 1, 2, 3, 4]
        for _, r_reg, r_cls, entropy in rows:
            assert r_reg <= 0.0  # distance reward is never positive
            assert 0.0 <= r_cls <= 1.0
            assert np.isfinite(entropy)

    def test_rewards_improve_with_training(self, world):
        *_, data = world
        pair = fresh_pair(data, seed=302)
        rows = a2c_train(data, pair, TrainConfig(episodes=300), seed=17)
        reg = np.array([r[1] for r in rows])
        cls = np.array([r[2] for r in rows])
        assert cls[-50:].mean() > cls[:50].mean() + 0.1
        assert reg[-50:].mean() >= reg[:50].mean()

    def test_training_log_round_trip(self, world, tmp_path):
        *_, data = world
        pair = fresh_pair(data)
        rows = a2c_train(data, pair, TrainConfig(episodes=3), seed=2)
        path = tmp_path / "log.csv"
        save_training_log(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "episode,mean_reward_reg,mean_reward_cls,entropy"
        assert len(lines) == 4
        episode, r_reg, *_ = lines[1].split(",")
        assert episode == "0"
        assert float(r_reg) == rows[0][1]


class TestCheckpoints:
    def test_round_trip_exact(self, world, tmp_path):
        *_, data = world
        pair = fresh_pair(data, seed=55)
        a2c_train(data, pair, TrainConfig(episodes=2), seed=1)
        path = tmp_path / "pair.json"
        save_agent_pair(pair, path)
        loaded = load_agent_pair(path)
        assert loaded.budget_level_j == pair.budget_level_j
        assert loaded.counter_ids == pair.counter_ids
        assert loaded.window_frames == pair.window_frames
        assert loaded.norm_mean_scale == pair.norm_mean_scale
        assert loaded.reg_log_std == pair.reg_log_std
        for name in ("reg_actor", "reg_critic", "cls_actor", "cls_critic"):
            assert np.array_equal(getattr(loaded, name).get_flat(), getattr(pair, name).get_flat())

    def test_version_guard(self, world, tmp_path):
        *_, data = world
        pair = fresh_pair(data)
        path = tmp_path / "pair.json"
        save_agent_pair(pair, path)
        doc = json.loads(path.read_text())
        doc["format_version"] = 2
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="unsupported checkpoint version"):
            load_agent_pair(path)
