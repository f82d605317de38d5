"""Online planner: two small policies imitating the offline allocator.

Per discrete budget level there is an agent pair. A regression policy picks
how many frames to sample in the coming window and a classification policy
picks which counter runs them; each has its own critic. Both observe the
same ten numbers: the (mean, std) count results of the four most recent
windows plus the same-time window one day back, normalized by frozen
per-scene scales. Training is advantage actor-critic against labels from
the offline allocator, replaying a few recorded horizons with fresh noise.
A runtime backstop keeps the pair inside the energy budget no matter what
the policies output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtri

from ._rng import derive_seed, keyed_uniforms, spawn_rng
from .ci import sample_stats
from .counters import CounterModel, ErrorProfile, observe_counts
from .fronts import (
    MIN_FRAMES,
    CountAction,
    EnergyModel,
    build_front,
    cheapest_counter,
    snap_to_grid,
    uniform_sample_indices,
    window_energy,
)
from .mlp import Adam, Mlp, log_softmax, softmax
from .oracle import HorizonPlan, plan_horizon
from .traces import CountTrace, WindowSpec

OBS_DIM = 10  # (mean, std) of 4 recent windows + same-time window a day back
RECENT_WINDOWS = 4
HIDDEN = 64
MAX_PARAMS_PER_NET = 5500
MAX_ACTOR_MULTS = 10_000

# stream tags for keyed training randomness
_STREAM_REG_SAMPLE = 10
_STREAM_CLS_SAMPLE = 11
_STREAM_PHASE = 12
_EPISODE_STRIDE = 1 << 16  # keyed index = episode * stride + step


@dataclass
class EnergyLedger:
    """Mutable per-horizon energy account; spending only goes up."""

    budget_j: float
    spent_j: float = 0.0

    @property
    def remaining_j(self) -> float:
        return self.budget_j - self.spent_j

    def charge(self, energy_j: float) -> None:
        if energy_j < 0:
            raise ValueError("cannot charge negative energy")
        if energy_j > self.remaining_j + 1e-9:
            raise ValueError(
                f"ledger overdraft: charge {energy_j:.3f} J > remaining {self.remaining_j:.3f} J"
            )
        self.spent_j += energy_j


def bare_minimum(windows_remaining: int, counters: Sequence[CounterModel], em: EnergyModel) -> float:
    """Energy to finish the horizon at the cheapest counter and minimum frames."""
    if windows_remaining < 0:
        raise ValueError("windows_remaining must be >= 0")
    if windows_remaining == 0:
        return 0.0
    return windows_remaining * window_energy(MIN_FRAMES, cheapest_counter(counters), em)


def build_observation(
    stream: Sequence[Tuple[float, float]],
    position: int,
    horizon_windows: int,
    mean_scale: float,
    std_scale: float,
) -> np.ndarray:
    """Observation for the window at `position` in a continuous run stream.

    stream[p] is the (mean, std) the system measured at window p. Missing
    history (cold start) contributes zeros.
    """
    obs = np.zeros(OBS_DIM)
    lookback = [position - 1 - i for i in range(RECENT_WINDOWS)]
    lookback.append(position - horizon_windows)  # same time one day back
    for slot, p in enumerate(lookback):
        if 0 <= p < len(stream):
            m, s = stream[p]
            obs[2 * slot] = m / mean_scale
            obs[2 * slot + 1] = s / std_scale
    return obs


class AgentPair:
    """Regression + classification policies (with critics) for one budget level."""

    def __init__(
        self,
        budget_level_j: float,
        counter_ids: Sequence[str],
        window_frames: int,
        norm_mean_scale: float,
        norm_std_scale: float,
        seed: int,
        log_std_init: float = -1.0,
    ):
        if not counter_ids:
            raise ValueError("need at least one counter id")
        self.budget_level_j = float(budget_level_j)
        self.counter_ids = tuple(counter_ids)
        self.window_frames = int(window_frames)
        self.norm_mean_scale = float(norm_mean_scale)
        self.norm_std_scale = float(norm_std_scale)
        k = len(self.counter_ids)
        rng = spawn_rng(seed, 4)
        self.reg_actor = Mlp([OBS_DIM, HIDDEN, HIDDEN, 1], rng)
        self.reg_critic = Mlp([OBS_DIM, HIDDEN, HIDDEN, 1], rng)
        self.cls_actor = Mlp([OBS_DIM, HIDDEN, HIDDEN, k], rng)
        self.cls_critic = Mlp([OBS_DIM, HIDDEN, HIDDEN, 1], rng)
        self.reg_log_std = float(log_std_init)
        for net in (self.reg_actor, self.reg_critic, self.cls_actor, self.cls_critic):
            if net.n_params >= MAX_PARAMS_PER_NET:
                raise ValueError(f"network too large: {net.n_params} parameters")
        if self.reg_actor.n_weight_mults + self.cls_actor.n_weight_mults > MAX_ACTOR_MULTS:
            raise ValueError("actor inference exceeds the multiply-add budget")

    def frames_from_raw(self, raw: float) -> int:
        """Map a raw policy output to a grid frame count in the window."""
        clipped = min(max(raw, 0.0), 1.0)
        n = MIN_FRAMES + clipped * (self.window_frames - MIN_FRAMES)
        return snap_to_grid(n, self.window_frames)


def resolve_action(
    pair: AgentPair,
    raw_frames: float,
    counter_idx: int,
    ledger: EnergyLedger,
    windows_remaining: int,
    counters: Sequence[CounterModel],
    em: EnergyModel,
) -> Tuple[CountAction, bool]:
    """Clamp a proposed action into affordability; returns (action, was_clamped).

    The invariant maintained: after paying for the returned action, the
    remaining budget still covers the bare minimum of all later windows.
    """
    by_id = {c.counter_id: c for c in counters}
    cheap = cheapest_counter(counters)
    remaining = ledger.remaining_j
    floor_after = bare_minimum(windows_remaining - 1, counters, em)
    if remaining <= bare_minimum(windows_remaining, counters, em) + 1e-9:
        return CountAction(cheap.counter_id, MIN_FRAMES), False

    proposed_n = pair.frames_from_raw(raw_frames)
    proposed_counter = by_id[pair.counter_ids[counter_idx]]
    allowance = remaining - floor_after

    def max_affordable(counter: CounterModel) -> Optional[int]:
        per_frame = em.e_capture_per_frame + counter.energy_per_frame_j
        n = math.floor((allowance - em.per_window_overhead_j) / per_frame + 1e-9)
        if n < MIN_FRAMES:
            return None
        n = MIN_FRAMES + ((n - MIN_FRAMES) // 10) * 10  # snap down to the grid
        return min(n, pair.window_frames)

    cap = max_affordable(proposed_counter)
    if cap is None:
        # even the minimum action is too dear on this counter; fall back
        fallback_cap = max_affordable(cheap)
        assert fallback_cap is not None  # guaranteed: remaining > bare min
        return CountAction(cheap.counter_id, min(proposed_n, fallback_cap)), True
    if proposed_n > cap:
        return CountAction(proposed_counter.counter_id, cap), True
    return CountAction(proposed_counter.counter_id, proposed_n), False


def act(
    pair: AgentPair,
    obs: np.ndarray,
    ledger: EnergyLedger,
    windows_remaining: int,
    counters: Sequence[CounterModel],
    em: EnergyModel,
) -> CountAction:
    """Deterministic inference: mean frame count, argmax counter, then clamp."""
    raw = float(pair.reg_actor.forward(obs)[0, 0])
    logits = pair.cls_actor.forward(obs)[0]
    counter_idx = int(np.argmax(logits))
    action, _ = resolve_action(pair, raw, counter_idx, ledger, windows_remaining, counters, em)
    return action


# ---------------------------------------------------------------------------
# losses and analytic gradients (checked against finite differences in tests)


def gaussian_policy_loss_grads(
    actor: Mlp,
    log_std: float,
    obs: np.ndarray,
    raw_actions: np.ndarray,
    advantages: np.ndarray,
    entropy_coef: float,
):
    """Advantage-weighted negative log-likelihood with an entropy bonus.

    Returns (loss, flat gradient) where the gradient vector is the actor's
    flat parameters with d(loss)/d(log_std) appended as the final entry.
    """
    mean, acts = actor.forward_cache(obs)
    mean = mean[:, 0]
    sigma = math.exp(log_std)
    z = (raw_actions - mean) / sigma
    logp = -0.5 * z**2 - log_std - 0.5 * math.log(2.0 * math.pi)
    entropy = 0.5 * (1.0 + math.log(2.0 * math.pi)) + log_std
    n = len(raw_actions)
    loss = float(-(advantages * logp).sum() - entropy_coef * n * entropy)
    grad_mean = -(advantages * z / sigma)
    gw, gb = actor.backward(acts, grad_mean[:, None])
    grad_log_std = float(-(advantages * (z**2 - 1.0)).sum() - entropy_coef * n)
    flat = np.concatenate([Mlp.flatten_grads(gw, gb), [grad_log_std]])
    return loss, flat


def categorical_policy_loss_grads(
    actor: Mlp,
    obs: np.ndarray,
    action_idx: np.ndarray,
    advantages: np.ndarray,
    entropy_coef: float,
):
    logits, acts = actor.forward_cache(obs)
    logp = log_softmax(logits)
    p = np.exp(logp)
    rows = np.arange(len(action_idx))
    chosen_logp = logp[rows, action_idx]
    entropy = -(p * logp).sum(axis=1)
    loss = float(-(advantages * chosen_logp).sum() - entropy_coef * entropy.sum())
    onehot = np.zeros_like(p)
    onehot[rows, action_idx] = 1.0
    grad_logits = -advantages[:, None] * (onehot - p)
    grad_logits += entropy_coef * p * (logp + entropy[:, None])
    gw, gb = actor.backward(acts, grad_logits)
    return loss, Mlp.flatten_grads(gw, gb)


def value_loss_grads(critic: Mlp, obs: np.ndarray, targets: np.ndarray):
    v, acts = critic.forward_cache(obs)
    v = v[:, 0]
    diff = v - targets
    loss = float(0.5 * (diff**2).sum())
    gw, gb = critic.backward(acts, diff[:, None])
    return loss, Mlp.flatten_grads(gw, gb)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 2000
    gamma: float = 0.9
    lr: float = 3e-4
    entropy_coef: float = 0.01
    unaffordable_penalty: float = 0.1
    log_std_init: float = -1.0
    log_std_bounds: Tuple[float, float] = (-4.0, 1.0)


@dataclass(frozen=True)
class TrainingData:
    """Recorded horizons with offline-allocator labels for one budget level."""

    budget_j: float
    horizons: tuple  # CountTrace per training horizon
    plans: tuple  # HorizonPlan per horizon, aligned
    counters: tuple
    em: EnergyModel
    spec: WindowSpec
    mean_scale: float
    std_scale: float

    def __post_init__(self):
        if len(self.horizons) != len(self.plans):
            raise ValueError("missing oracle label: horizons and plans must align")
        if len(self.horizons) < 3:
            raise ValueError("need at least 3 training horizons")
        for plan in self.plans:
            if len(plan.actions) != self.spec.horizon_windows:
                raise ValueError("missing oracle label: plan does not cover the horizon")


def normalization_scales(trace: CountTrace, horizon_indices, spec: WindowSpec) -> Tuple[float, float]:
    """Frozen per-scene scales: 95th percentile of window means and stds."""
    means = []
    stds = []
    for h in horizon_indices:
        horizon = trace.horizon_slice(h, spec)
        for w in range(spec.horizon_windows):
            window = horizon.window_slice(w, spec)
            means.append(float(window.mean()))
            stds.append(float(window.std()))
    mean_scale = max(float(np.percentile(means, 95)), 1e-6)
    std_scale = max(float(np.percentile(stds, 95)), 1e-6)
    return mean_scale, std_scale


def prepare_training_data(
    trace: CountTrace,
    horizon_indices: Sequence[int],
    budget_j: float,
    counters: Sequence[CounterModel],
    em: EnergyModel,
    profiles: Dict[str, ErrorProfile],
    spec: WindowSpec,
    seed: int,
    sigma_mode: str = "textbook",
) -> TrainingData:
    """Label training horizons with offline plans at one budget level."""
    horizons = []
    plans = []
    for h in horizon_indices:
        horizon = trace.horizon_slice(h, spec)
        wf = spec.window_frames(trace.fps)
        fronts = []
        for w in range(spec.horizon_windows):
            truth_window = horizon.window_slice(w, spec)
            base = w * wf
            frame_idx = np.arange(base, base + wf, dtype=np.int64)
            observed = {
                c.counter_id: observe_counts(
                    truth_window, frame_idx, c, derive_seed(seed, 30, h, i)
                )
                for i, c in enumerate(counters)
            }
            fronts.append(
                build_front(
                    observed, counters, em, profiles, spec.alpha,
                    window_index=w, sigma_mode=sigma_mode,
                )
            )
        horizons.append(horizon)
        plans.append(plan_horizon(fronts, budget_j))
    mean_scale, std_scale = normalization_scales(trace, horizon_indices, spec)
    return TrainingData(
        budget_j=budget_j,
        horizons=tuple(horizons),
        plans=tuple(plans),
        counters=tuple(counters),
        em=em,
        spec=spec,
        mean_scale=mean_scale,
        std_scale=std_scale,
    )


def _categorical_draw(probs: np.ndarray, u: float) -> int:
    return int(np.searchsorted(np.cumsum(probs), u, side="right").clip(0, len(probs) - 1))


def a2c_train(
    data: TrainingData,
    pair: AgentPair,
    cfg: TrainConfig,
    seed: int,
) -> List[Tuple[int, float, float, float]]:
    """Train the pair in place; returns (episode, reward, reward, entropy) rows.

    One episode replays one training horizon end to end with fresh counter
    and sampling noise; the episode is also the minibatch. All draws are
    keyed by (seed, episode, step), so a rerun reproduces training exactly.
    """
    spec = data.spec
    wf = pair.window_frames
    n_steps = spec.horizon_windows
    if n_steps >= _EPISODE_STRIDE:
        raise ValueError("horizon too long for the keyed index layout")
    counters = list(data.counters)
    by_id = {c.counter_id: c for c in counters}
    id_to_idx = {cid: i for i, cid in enumerate(pair.counter_ids)}

    opt_reg = Adam(pair.reg_actor.n_params + 1, cfg.lr)
    opt_reg_v = Adam(pair.reg_critic.n_params, cfg.lr)
    opt_cls = Adam(pair.cls_actor.n_params, cfg.lr)
    opt_cls_v = Adam(pair.cls_critic.n_params, cfg.lr)

    stream: List[Tuple[float, float]] = []  # measured (mean, std) per executed window
    log_rows: List[Tuple[int, float, float, float]] = []

    for episode in range(cfg.episodes):
        h = episode % len(data.horizons)
        horizon = data.horizons[h]
        plan = data.plans[h]
        ep_seed = derive_seed(seed, 20, episode)
        ledger = EnergyLedger(budget_j=data.budget_j)

        obs_batch = np.zeros((n_steps, OBS_DIM))
        raw_actions = np.zeros(n_steps)
        cls_actions = np.zeros(n_steps, dtype=np.int64)
        rewards_reg = np.zeros(n_steps)
        rewards_cls = np.zeros(n_steps)
        entropies = np.zeros(n_steps)

        for t in range(n_steps):
            key = episode * _EPISODE_STRIDE + t
            position = len(stream)
            obs = build_observation(
                stream, position, spec.horizon_windows, pair.norm_mean_scale, pair.norm_std_scale
            )
            obs_batch[t] = obs

            mean_raw = float(pair.reg_actor.forward(obs)[0, 0])
            sigma = math.exp(pair.reg_log_std)
            u_reg = float(keyed_uniforms(seed, _STREAM_REG_SAMPLE, [key])[0])
            raw = mean_raw + sigma * float(ndtri(u_reg))
            logits = pair.cls_actor.forward(obs)[0]
            probs = softmax(logits)
            u_cls = float(keyed_uniforms(seed, _STREAM_CLS_SAMPLE, [key])[0])
            c_idx = _categorical_draw(probs, u_cls)

            action, clamped = resolve_action(
                pair, raw, c_idx, ledger, n_steps - t, counters, em=data.em
            )
            counter = by_id[action.counter_id]
            ledger.charge(window_energy(action.n_frames, counter, data.em))

            # execute: sample frames, observe them, record the window stats
            phase_u = float(keyed_uniforms(ep_seed, _STREAM_PHASE, [t])[0])
            step = wf / action.n_frames
            idx = uniform_sample_indices(wf, action.n_frames, phase_u * step * (1 - 1e-12))
            truth_window = horizon.window_slice(t, spec)
            frame_idx = t * wf + idx
            observed = observe_counts(
                truth_window[idx], frame_idx, counter, derive_seed(ep_seed, id_to_idx[action.counter_id])
            )
            stats = sample_stats(observed)
            stream.append((stats.mean, stats.std))

            label = plan.actions[t]
            penalty = cfg.unaffordable_penalty if clamped else 0.0
            rewards_reg[t] = -abs(action.n_frames - label.n_frames) / wf - penalty
            rewards_cls[t] = (1.0 if action.counter_id == label.counter_id else 0.0) - penalty

            raw_actions[t] = raw
            cls_actions[t] = c_idx
            cat_entropy = float(-(probs * np.log(probs + 1e-300)).sum())
            gauss_entropy = 0.5 * (1.0 + math.log(2.0 * math.pi)) + pair.reg_log_std
            entropies[t] = 0.5 * (cat_entropy + gauss_entropy)

        # minibatch update: one-step bootstrapped advantages per agent
        v_reg = pair.reg_critic.forward(obs_batch)[:, 0]
        v_cls = pair.cls_critic.forward(obs_batch)[:, 0]
        next_reg = np.append(v_reg[1:], 0.0)
        next_cls = np.append(v_cls[1:], 0.0)
        targets_reg = rewards_reg + cfg.gamma * next_reg
        targets_cls = rewards_cls + cfg.gamma * next_cls
        adv_reg = targets_reg - v_reg
        adv_cls = targets_cls - v_cls

        _, g_reg = gaussian_policy_loss_grads(
            pair.reg_actor, pair.reg_log_std, obs_batch, raw_actions, adv_reg, cfg.entropy_coef
        )
        params = np.concatenate([pair.reg_actor.get_flat(), [pair.reg_log_std]])
        params = opt_reg.step(params, g_reg)
        pair.reg_actor.set_flat(params[:-1])
        lo, hi = cfg.log_std_bounds
        pair.reg_log_std = float(min(max(params[-1], lo), hi))

        _, g_cls = categorical_policy_loss_grads(
            pair.cls_actor, obs_batch, cls_actions, adv_cls, cfg.entropy_coef
        )
        pair.cls_actor.set_flat(opt_cls.step(pair.cls_actor.get_flat(), g_cls))

        _, g_vr = value_loss_grads(pair.reg_critic, obs_batch, targets_reg)
        pair.reg_critic.set_flat(opt_reg_v.step(pair.reg_critic.get_flat(), g_vr))
        _, g_vc = value_loss_grads(pair.cls_critic, obs_batch, targets_cls)
        pair.cls_critic.set_flat(opt_cls_v.step(pair.cls_critic.get_flat(), g_vc))

        log_rows.append(
            (episode, float(rewards_reg.mean()), float(rewards_cls.mean()), float(entropies.mean()))
        )
    return log_rows


def save_training_log(rows, path) -> None:
    lines = ["episode,mean_reward_reg,mean_reward_cls,entropy"]
    for episode, r_reg, r_cls, entropy in rows:
        lines.append(f"{episode},{r_reg!r},{r_cls!r},{entropy!r}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# checkpoints


def save_agent_pair(pair: AgentPair, path) -> None:
    def net(n: Mlp):
        return {"sizes": list(n.sizes), "params": n.get_flat().tolist()}

    payload = {
        "format_version": 1,
        "budget_level_j": pair.budget_level_j,
        "counter_ids": list(pair.counter_ids),
        "window_frames": pair.window_frames,
        "norm_mean_scale": pair.norm_mean_scale,
        "norm_std_scale": pair.norm_std_scale,
        "reg_log_std": pair.reg_log_std,
        "networks": {
            "reg_actor": net(pair.reg_actor),
            "reg_critic": net(pair.reg_critic),
            "cls_actor": net(pair.cls_actor),
            "cls_critic": net(pair.cls_critic),
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_agent_pair(path) -> AgentPair:
    d = json.loads(Path(path).read_text())
    if d.get("format_version") != 1:
        raise ValueError(f"unsupported checkpoint version {d.get('format_version')!r}")
    pair = AgentPair(
        budget_level_j=d["budget_level_j"],
        counter_ids=d["counter_ids"],
        window_frames=d["window_frames"],
        norm_mean_scale=d["norm_mean_scale"],
        norm_std_scale=d["norm_std_scale"],
        seed=0,
        log_std_init=d["reg_log_std"],
    )
    for name, net in (
        ("reg_actor", pair.reg_actor),
        ("reg_critic", pair.reg_critic),
        ("cls_actor", pair.cls_actor),
        ("cls_critic", pair.cls_critic),
    ):
        stored = d["networks"][name]
        if tuple(stored["sizes"]) != net.sizes:
            raise ValueError(f"checkpoint layer sizes for {name} do not match")
        net.set_flat(np.asarray(stored["params"], dtype=np.float64))
    return pair
