"""The attacking agent: observation encoding, epsilon-greedy selection,
reward functions, replay memory, and the one-step bootstrapped Q update.

The same loop drives two agents: the full attacker (11 actions, waiting-time
reward, sybil removal active) and the comparison baseline (actions 0..6,
halted-minus-moving reward, no removal).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import numerics, sybil
from .atsc import Phase, SignalState
from .config import AgentConfig, ControllerConfig, RemovalConfig, SimConfig
from .simcore import (APPROACHES, DemandSchedule, Movement, SimState,
                      accumulated_waiting, attach_demand, build_network,
                      count_vehicles, halted_and_moving, spawn_real_traffic,
                      step, total_current_waiting)

OBS_DIM = 9  # 4 approach counts + 4-way phase one-hot + remaining review time


@dataclass
class Observation:
    counts: tuple[int, int, int, int]   # vehicles per approach E, W, N, S
    phase: Phase
    remaining: float                    # seconds to the next review, in [0, 5]

    def vector(self, count_cap: float, review_interval: float) -> np.ndarray:
        vec = np.empty(OBS_DIM)
        for i, c in enumerate(self.counts):
            vec[i] = min(c, count_cap) / count_cap
        one_hot = np.zeros(len(Phase))
        one_hot[int(self.phase)] = 1.0
        vec[4:8] = one_hot
        vec[8] = self.remaining / review_interval
        return vec


def observe(state: SimState, signal) -> Observation:
    counts = tuple(count_vehicles(state, app) for app in APPROACHES)
    return Observation(counts, signal.current, signal.remaining_review_time())


@dataclass
class RewardSpec:
    gain: float = 1.0
    d: float = 0.2

    def __post_init__(self) -> None:
        if self.gain <= 0 or self.d < 0:
            raise ValueError("gain must be > 0 and d >= 0")


def attack_reward(state: SimState, action: int, spec: RewardSpec) -> float:
    """Congestion payoff minus the broadcast cost of the chosen action."""
    return spec.gain * total_current_waiting(state) - spec.d * action


def baseline_reward(state: SimState, n_injected: int, d: float) -> float:
    """Halted minus moving vehicles on the approaches, minus injection cost."""
    halted, moving = halted_and_moving(state)
    return float(halted - moving) - d * n_injected


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int = 5000):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def push(self, item: Transition) -> None:
        self._items.append(item)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def snapshot_arrays(self) -> dict[str, np.ndarray]:
        n = len(self._items)
        out = {
            "s": np.zeros((n, OBS_DIM)), "a": np.zeros(n, dtype=np.int64),
            "r": np.zeros(n), "s_next": np.zeros((n, OBS_DIM)),
            "done": np.zeros(n, dtype=bool),
        }
        for i, t in enumerate(self._items):
            out["s"][i] = t.s
            out["a"][i] = t.a
            out["r"][i] = t.r
            out["s_next"][i] = t.s_next
            out["done"][i] = t.done
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], capacity: int) -> "ReplayBuffer":
        buf = cls(capacity)
        for i in range(len(arrays["a"])):
            buf.push(Transition(arrays["s"][i].copy(), int(arrays["a"][i]),
                                float(arrays["r"][i]), arrays["s_next"][i].copy(),
                                bool(arrays["done"][i])))
        return buf


def select_action(q_values: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Uniform exploration with probability epsilon, else greedy with ties
    to the lowest index."""
    n = len(q_values)
    if rng.random() < epsilon:
        return int(rng.integers(0, n))
    return int(np.argmax(q_values))


def compute_targets(params: numerics.MlpParams, batch: list[Transition],
                    gamma: float) -> np.ndarray:
    """One-step bootstrapped targets y = r + gamma * max_a' Q(s', a');
    terminal transitions use y = r."""
    s_next = np.stack([t.s_next for t in batch])
    q_next = numerics.forward(params, s_next)
    best = q_next.max(axis=1)
    return np.array([t.r if t.done else t.r + gamma * best[i]
                     for i, t in enumerate(batch)])


def train_step(params: numerics.MlpParams, adam: numerics.AdamState,
               batch: list[Transition], gamma: float,
               target_params: numerics.MlpParams | None = None) -> float:
    """Regress the taken action's Q-value toward its bootstrapped target
    under MAE; one Adam update. Returns the batch loss."""
    y = compute_targets(target_params if target_params is not None else params,
                        batch, gamma)
    s = np.stack([t.s for t in batch])
    actions = np.array([t.a for t in batch])
    out, cache = numerics.forward_cached(params, s)
    picked = out[np.arange(len(batch)), actions]
    loss, grad_flat = numerics.mae_loss(picked, y)
    upstream = np.zeros_like(out)
    upstream[np.arange(len(batch)), actions] = grad_flat
    grads_w, grads_b = numerics.backward(params, cache, upstream)
    numerics.adam_step(params, grads_w, grads_b, adam)
    return loss


@dataclass
class EpisodeMetrics:
    """Per-episode totals plus the per-step log rows the harness exports."""

    episode: int
    total_waiting_time: float = 0.0
    vehicles_injected: int = 0      # sybils actually placed in the network
    skipped_injections: int = 0     # broadcasts wasted on blocked entries
    removals: int = 0
    mean_reward: float = 0.0
    epsilon_end: float = 0.0
    steps: list[dict] = field(default_factory=list)
    movement_wait: list[list[float]] = field(default_factory=list)
    movement_accumulated: list[list[float]] = field(default_factory=list)
    wait_seconds_by_movement: dict[str, float] = field(default_factory=dict)
    vehicles_seen_by_movement: dict[str, int] = field(default_factory=dict)


class Agent:
    """Q-network, optimizer, replay memory and the epsilon schedule."""

    def __init__(self, cfg: AgentConfig, n_actions: int, seed: int):
        self.cfg = cfg
        self.n_actions = n_actions
        self.params = numerics.init_params(OBS_DIM, n_actions, seed=seed)
        self.adam = numerics.AdamState.for_params(self.params, lr=cfg.lr)
        self.buffer = ReplayBuffer(cfg.replay_capacity)
        self.target_params = self.params.copy() if cfg.target_sync > 0 else None
        self._train_calls = 0

    def epsilon(self, episode_index: int) -> float:
        return max(self.cfg.epsilon_end,
                   self.cfg.epsilon_start * self.cfg.epsilon_decay ** episode_index)

    def q_values(self, obs_vec: np.ndarray) -> np.ndarray:
        return numerics.forward(self.params, obs_vec)

    def maybe_train(self, rng: np.random.Generator) -> float | None:
        if len(self.buffer) < max(self.cfg.warmup, self.cfg.batch_size):
            return None
        batch = self.buffer.sample(self.cfg.batch_size, rng)
        loss = train_step(self.params, self.adam, batch, self.cfg.gamma,
                          self.target_params)
        self._train_calls += 1
        if self.target_params is not None and \
                self._train_calls % self.cfg.target_sync == 0:
            self.target_params = self.params.copy()
        return loss


def derive_seed(seed: int, *streams: int) -> int:
    value = seed & 0xFFFFFFFF
    for s in streams:
        value = (value * 1000003 + s + 0x9E3779B9) & 0xFFFFFFFF
    return value


@dataclass
class EpisodeSetup:
    sim_cfg: SimConfig
    controller_cfg: ControllerConfig
    removal_cfg: RemovalConfig
    agent_cfg: AgentConfig
    baseline: bool = False


def run_episode(agent: Agent | None, setup: EpisodeSetup, seed: int,
                episode_index: int, learn: bool = True,
                forced_action: int | None = None) -> EpisodeMetrics:
    """One 1000-step (configurable) episode of the closed loop:
    observe -> act -> inject -> step/tick/remove -> reward -> store -> train.

    ``agent=None`` runs the no-attack loop (action 0 every step).
    ``forced_action`` pins the policy, for calibration and fixtures.
    """
    cfg = setup.agent_cfg
    sim_cfg = setup.sim_cfg
    state = build_network(sim_cfg, seed=derive_seed(seed, 1))
    attach_demand(state, DemandSchedule(sim_cfg.demand, cfg.steps,
                                        derive_seed(seed, 2), dt=sim_cfg.dt))
    signal = SignalState(setup.controller_cfg)
    policy = sybil.RemovalPolicy(setup.removal_cfg.threshold,
                                 enabled=not setup.baseline)
    reward_spec = RewardSpec(cfg.gain, cfg.d_penalty)
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, 3, episode_index)))
    eps = agent.epsilon(episode_index) if (agent is not None and learn) else 0.0

    metrics = EpisodeMetrics(episode=episode_index, epsilon_end=eps)
    wait_by_movement = {m.name: 0.0 for m in Movement}
    seen_by_movement: dict[str, set[int]] = {m.name: set() for m in Movement}
    reward_sum = 0.0

    for t in range(cfg.steps):
        spawn_real_traffic(state)
        obs = observe(state, signal)
        obs_vec = obs.vector(cfg.count_cap, setup.controller_cfg.review_interval)

        if forced_action is not None:
            action = forced_action
        elif agent is None:
            action = 0
        else:
            action = select_action(agent.q_values(obs_vec), eps, rng)

        attempted, skipped = sybil.inject(action, state)
        landed = attempted - skipped
        step(state, signal, sim_cfg.dt)
        removed = sybil.apply_removals(state, policy) if policy.enabled else 0
        signal.tick(state, sim_cfg.dt)

        if setup.baseline:
            reward = baseline_reward(state, landed, cfg.d_penalty)
        else:
            reward = attack_reward(state, action, reward_spec)

        obs_next = observe(state, signal)
        next_vec = obs_next.vector(cfg.count_cap, setup.controller_cfg.review_interval)
        if agent is not None and learn:
            agent.buffer.push(Transition(obs_vec, action, reward / cfg.reward_scale,
                                         next_vec, t == cfg.steps - 1))
            agent.maybe_train(rng)

        total_wait = total_current_waiting(state)
        halted, moving = halted_and_moving(state)
        reward_sum += reward
        metrics.total_waiting_time += total_wait * sim_cfg.dt
        metrics.vehicles_injected += attempted - skipped
        metrics.skipped_injections += skipped
        metrics.removals += removed

        wait_row = []
        acc_row = []
        for m in Movement:
            w = 0.0
            acc = 0.0
            for veh in state.vehicles_on_movement(m):
                w += veh.waiting_time
                acc += accumulated_waiting(veh)
                seen_by_movement[m.name].add(veh.id)
                if veh.waiting_time > 0:
                    wait_by_movement[m.name] += sim_cfg.dt
            wait_row.append(w)
            acc_row.append(acc)
        metrics.movement_wait.append(wait_row)
        metrics.movement_accumulated.append(acc_row)

        metrics.steps.append({
            "step": t, "action": action, "reward": reward, "epsilon": eps,
            "injected": landed, "skipped": skipped, "removed": removed,
            "total_waiting": total_wait, "n_halted": halted, "n_moving": moving,
            "phase": int(signal.current), "yellow": int(signal.in_yellow),
        })

    metrics.mean_reward = reward_sum / cfg.steps
    metrics.wait_seconds_by_movement = wait_by_movement
    metrics.vehicles_seen_by_movement = {
        k: len(v) for k, v in seen_by_movement.items()}
    return metrics
