"""Minimal deep Q-network built on numpy.

A five-hidden-layer perceptron with increasing widths, rectifier units and
three dropout stages, trained by one-step temporal-difference updates
against a periodically synced target copy, with uniform experience replay.
The two reward shapes trade off pure aggregator profit against balancing
profit with the unselected coalitions' direct earnings.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DomainError

DEFAULT_HIDDEN_DIMS = (64, 128, 256, 512, 512)
#: Dropout follows hidden stages 2-4 only.
DROPOUT_STAGES = (1, 2, 3)
DEFAULT_DROPOUT_P = 0.2

#: Hard cap on coalitions under DQN selection: the action space is 2^n.
MAX_DQN_LFES = 14


class QNetwork:
    """Fully-connected Q-value network: input 2n -> five hidden -> 2^n."""

    def __init__(self, input_dim: int, output_dim: int,
                 hidden_dims: Sequence[int] = DEFAULT_HIDDEN_DIMS,
                 dropout_p: float = DEFAULT_DROPOUT_P, seed: int = 0):
        if len(hidden_dims) != 5:
            raise ConfigError("the Q-network uses exactly five hidden layers")
        if any(a > b for a, b in zip(hidden_dims, hidden_dims[1:])):
            raise ConfigError("hidden layer widths must be non-decreasing")
        if not 0.0 <= dropout_p < 1.0:
            raise ConfigError("dropout_p must be in [0, 1)")
        self.layer_dims = (input_dim, *hidden_dims, output_dim)
        self.dropout_p = dropout_p
        rng = np.random.default_rng(seed)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            self.weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self._adam_m = [np.zeros_like(w) for w in self.weights + self.biases]
        self._adam_v = [np.zeros_like(w) for w in self.weights + self.biases]
        self._adam_t = 0

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def copy_weights_from(self, other: "QNetwork") -> None:
        if self.layer_dims != other.layer_dims:
            raise DomainError("network shapes differ")
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def clone(self) -> "QNetwork":
        twin = QNetwork(self.input_dim, self.output_dim, self.layer_dims[1:-1],
                        self.dropout_p, seed=0)
        twin.copy_weights_from(self)
        return twin

    # -- forward / backward -------------------------------------------------

    def _dropout_masks(self, shapes, dropout_seed):
        rng = np.random.default_rng(dropout_seed)
        keep = 1.0 - self.dropout_p
        return {i: (rng.random(shapes[i]) < keep) / keep for i in DROPOUT_STAGES}

    def _forward_cached(self, x: np.ndarray, training: bool, dropout_seed: Optional[int]):
        pre: List[np.ndarray] = []
        post: List[np.ndarray] = [x]
        masks = {}
        if training and self.dropout_p > 0.0:
            shapes = {i: (x.shape[0], self.layer_dims[i + 1]) for i in DROPOUT_STAGES}
            masks = self._dropout_masks(shapes, dropout_seed)
        h = x
        n_hidden = len(self.layer_dims) - 2
        for i in range(n_hidden):
            z = h @ self.weights[i] + self.biases[i]
            pre.append(z)
            h = np.maximum(z, 0.0)
            if i in masks:
                h = h * masks[i]
            post.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        pre.append(out)
        return out, pre, post, masks

    def forward(self, state: np.ndarray, training: bool = False,
                dropout_seed: Optional[int] = None) -> np.ndarray:
        """Q-values for one state or a batch. Deterministic when not training."""
        x = np.asarray(state, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.input_dim:
            raise DomainError(f"state dim {x.shape[1]} != network input {self.input_dim}")
        if not np.all(np.isfinite(x)):
            raise DomainError("state contains non-finite values")
        out, *_ = self._forward_cached(x, training, dropout_seed)
        return out[0] if single else out

    def loss_and_grads(self, states: np.ndarray, actions: np.ndarray,
                       targets: np.ndarray, training: bool = True,
                       dropout_seed: Optional[int] = None):
        """Mean squared TD error on the chosen actions, plus its gradients."""
        x = np.asarray(states, dtype=float)
        out, pre, post, masks = self._forward_cached(x, training, dropout_seed)
        batch = x.shape[0]
        rows = np.arange(batch)
        diff = out[rows, actions] - targets
        loss = float(np.mean(diff ** 2))

        d_out = np.zeros_like(out)
        d_out[rows, actions] = 2.0 * diff / batch
        grads_w = [np.zeros_like(w) for w in self.weights]
        grads_b = [np.zeros_like(b) for b in self.biases]

        delta = d_out
        grads_w[-1] = post[-1].T @ delta
        grads_b[-1] = delta.sum(axis=0)
        n_hidden = len(self.layer_dims) - 2
        for i in range(n_hidden - 1, -1, -1):
            delta = delta @ self.weights[i + 1].T
            if i in masks:
                delta = delta * masks[i]
            delta = delta * (pre[i] > 0.0)
            grads_w[i] = post[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
        return loss, grads_w, grads_b

    def adam_step(self, grads_w, grads_b, lr: float,
                  beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self._adam_t += 1
        t = self._adam_t
        params = self.weights + self.biases
        grads = list(grads_w) + list(grads_b)
        for p, g, m, v in zip(params, grads, self._adam_m, self._adam_v):
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * g * g
            m_hat = m / (1 - beta1 ** t)
            v_hat = v / (1 - beta2 ** t)
            p -= lr * m_hat / (np.sqrt(v_hat) + eps)


class ReplayBuffer:
    """Fixed-capacity FIFO of (state, action, reward, next_state) tuples."""

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ConfigError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: List[Tuple[np.ndarray, int, float, np.ndarray]] = []
        self._write = 0
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self._entries)

    def push(self, state, action: int, reward: float, next_state) -> None:
        entry = (np.asarray(state, float), int(action), float(reward),
                 np.asarray(next_state, float))
        if len(self._entries) < self.capacity:
            self._entries.append(entry)
        else:
            self._entries[self._write] = entry
            self._write = (self._write + 1) % self.capacity

    def sample(self, batch_size: int):
        """Uniform sample without replacement within one batch."""
        idx = self._rng.choice(len(self._entries), size=batch_size, replace=False)
        states = np.stack([self._entries[i][0] for i in idx])
        actions = np.array([self._entries[i][1] for i in idx])
        rewards = np.array([self._entries[i][2] for i in idx])
        next_states = np.stack([self._entries[i][3] for i in idx])
        return states, actions, rewards, next_states


@dataclass(frozen=True)
class RewardSpec:
    """Which reward shape to train on; ``z_norm`` fixes the normalizer of the
    profit reward (None tracks a running mean of recent payments instead)."""

    kind: str = "r1"
    z_norm: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("r1", "r2"):
            raise ConfigError(f"unknown reward kind {self.kind!r}")


def reward_r1(v_grid_agg: float, z: float) -> float:
    """Aggregator profit scaled by a normalizer; unbounded above."""
    if z <= 0:
        raise ConfigError("normalization constant must be positive")
    return v_grid_agg / z


def reward_r2(v_grid_agg: float, v_grid_lfe_unselected: Sequence[float]) -> float:
    """Profit-balance reward in [0, 1]: aggregator take over total take."""
    if v_grid_agg < 0 or any(v < 0 for v in v_grid_lfe_unselected):
        raise DomainError("payments must be non-negative")
    denom = v_grid_agg + float(sum(v_grid_lfe_unselected))
    if denom == 0.0:
        return 0.0
    return v_grid_agg / denom


def train_step(net: QNetwork, buffer: ReplayBuffer, batch_size: int, gamma: float,
               lr: float, target_net: QNetwork,
               dropout_seed: Optional[int] = None) -> Optional[float]:
    """One TD gradient step on a replayed batch; no-op while the buffer is short.

    Returns the batch loss, or None when no step was taken.
    """
    if len(buffer) < batch_size:
        return None
    states, actions, rewards, next_states = buffer.sample(batch_size)
    q_next = target_net.forward(next_states, training=False)
    targets = rewards + gamma * q_next.max(axis=1)
    loss, gw, gb = net.loss_and_grads(states, actions, targets,
                                      training=True, dropout_seed=dropout_seed)
    net.adam_step(gw, gb, lr)
    return loss


@dataclass
class DqnHyperParams:
    hidden_dims: Tuple[int, ...] = DEFAULT_HIDDEN_DIMS
    dropout_p: float = DEFAULT_DROPOUT_P
    gamma: float = 0.9
    lr: float = 1e-4
    batch_size: int = 64
    buffer_capacity: int = 10_000
    target_sync_every: int = 100
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    #: Fraction of the run over which epsilon anneals linearly.
    epsilon_anneal_frac: float = 0.5
    z_window: int = 50


class DqnAgent:
    """Owns the online/target networks, replay buffer and epsilon schedule.

    The agent is driven by the trading-cycle engine: ``choose`` picks an
    action for the current state, ``observe`` stores the settled transition
    and runs one training step.
    """

    def __init__(self, n_lfes: int, reward: RewardSpec, horizon_cycles: int,
                 hp: DqnHyperParams = DqnHyperParams(), seed: int = 0):
        if n_lfes > MAX_DQN_LFES:
            raise ConfigError(
                f"{n_lfes} coalitions would need 2^{n_lfes} actions; "
                f"DQN selection supports at most {MAX_DQN_LFES} - use a "
                f"threshold method for larger fleets")
        if n_lfes < 1:
            raise ConfigError("need at least one coalition")
        self.n_lfes = n_lfes
        self.reward = reward
        self.hp = hp
        self.horizon_cycles = max(1, horizon_cycles)
        self.net = QNetwork(2 * n_lfes, 2 ** n_lfes, hp.hidden_dims, hp.dropout_p, seed=seed)
        self.target_net = self.net.clone()
        self.buffer = ReplayBuffer(hp.buffer_capacity, seed=seed + 1)
        self.rng = np.random.default_rng(seed + 2)
        self.steps = 0
        self._recent_payments: List[float] = []
        self.loss_history: List[float] = []

    def epsilon(self) -> float:
        anneal_steps = self.hp.epsilon_anneal_frac * self.horizon_cycles
        frac = min(1.0, self.steps / anneal_steps) if anneal_steps > 0 else 1.0
        return self.hp.epsilon_start + frac * (self.hp.epsilon_end - self.hp.epsilon_start)

    def z_norm(self) -> float:
        if self.reward.z_norm is not None:
            return self.reward.z_norm
        if not self._recent_payments:
            return 1.0
        return max(float(np.mean(np.abs(self._recent_payments))), 1e-9)

    def compute_reward(self, v_grid_agg: float, v_direct_unselected: Sequence[float]) -> float:
        # The adaptive normalizer tracks payments including the current one,
        # so rewards stay O(1) from the very first cycle.
        if self.reward.z_norm is None:
            self._recent_payments.append(abs(v_grid_agg))
            if len(self._recent_payments) > self.hp.z_window:
                self._recent_payments.pop(0)
        if self.reward.kind == "r1":
            return reward_r1(v_grid_agg, self.z_norm())
        return reward_r2(v_grid_agg, v_direct_unselected)

    def observe(self, state, action: int, reward_value: float, next_state,
                v_grid_agg: float) -> Optional[float]:
        self.buffer.push(state, action, reward_value, next_state)
        loss = train_step(self.net, self.buffer, self.hp.batch_size, self.hp.gamma,
                          self.hp.lr, self.target_net, dropout_seed=self.steps)
        self.steps += 1
        if loss is not None:
            self.loss_history.append(loss)
        if self.steps % self.hp.target_sync_every == 0:
            self.target_net.copy_weights_from(self.net)
        return loss
