"""Observation encoders.

A 147 -> 256 -> 128 fully connected network trained by behavioural
cloning on heuristic self-play, plus a training-free handcrafted encoder
used as a deterministic stand-in in pipeline tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import go_env
from .nn import MomentumSGD, frozen, glorot_uniform, masked_cross_entropy, masked_logits, relu

OBS_DIM = go_env.NUM_POINTS * 3
FEATURE_DIM = 128
HIDDEN_DIM = 256


@dataclass(frozen=True)
class DemoDataset:
    obs: np.ndarray  # (n, 7, 7, 3) float32
    actions: np.ndarray  # (n,) int64
    masks: np.ndarray  # (n, 50) bool
    game_lengths: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.actions)

    def subset(self, n: int) -> "DemoDataset":
        return DemoDataset(self.obs[:n], self.actions[:n], self.masks[:n])


def collect_demos(n_games: int, seed: int) -> DemoDataset:
    """Every (observation, action, legal mask) from heuristic-vs-heuristic games."""
    if n_games < 1:
        raise ValueError("n_games must be >= 1")
    obs, actions, masks, lengths = [], [], [], []

    def record(s, a):
        obs.append(go_env.observe(s))
        actions.append(a)
        masks.append(go_env.legal_mask(s))

    for i in range(n_games):
        final = go_env.play_game(
            go_env.heuristic_opponent, go_env.heuristic_opponent,
            go_env.game_rng(seed, i), on_move=record,
        )
        lengths.append(final.move_count)
    return DemoDataset(
        np.stack(obs), np.asarray(actions, dtype=np.int64), np.stack(masks), tuple(lengths)
    )


@dataclass(frozen=True)
class Encoder:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    head_w: np.ndarray | None = None
    head_b: np.ndarray | None = None
    seed: int = 0
    steps: int = 0
    loss_history: tuple[float, ...] = ()

    @property
    def feature_dim(self) -> int:
        return self.w2.shape[1]

    @property
    def has_head(self) -> bool:
        return self.head_w is not None

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
        if self.has_head:
            out.update(head_w=self.head_w, head_b=self.head_b)
        return out


def init_params(rng: np.random.Generator, hidden: int = HIDDEN_DIM,
                feature_dim: int = FEATURE_DIM) -> dict[str, np.ndarray]:
    n_act = go_env.NUM_ACTIONS
    return {
        "w1": glorot_uniform(rng, OBS_DIM, hidden),
        "b1": np.zeros(hidden),
        "w2": glorot_uniform(rng, hidden, feature_dim),
        "b2": np.zeros(feature_dim),
        "head_w": glorot_uniform(rng, feature_dim, n_act),
        "head_b": np.zeros(n_act),
    }


def loss_and_grads(params, x, masks, actions):
    """Masked cross-entropy of the action head and its parameter gradients."""
    z1 = x @ params["w1"] + params["b1"]
    h1 = relu(z1)
    f = h1 @ params["w2"] + params["b2"]
    hf = relu(f)
    logits = hf @ params["head_w"] + params["head_b"]
    loss, dlogits = masked_cross_entropy(logits, masks, actions)
    dhf = dlogits @ params["head_w"].T
    df = dhf * (f > 0)
    dh1 = df @ params["w2"].T
    dz1 = dh1 * (z1 > 0)
    grads = {
        "head_w": hf.T @ dlogits,
        "head_b": dlogits.sum(0),
        "w2": h1.T @ df,
        "b2": df.sum(0),
        "w1": x.T @ dz1,
        "b1": dz1.sum(0),
    }
    return loss, grads


def train_encoder(
    data: DemoDataset,
    epochs: int,
    lr: float,
    seed: int,
    batch_size: int = 64,
    hidden: int = HIDDEN_DIM,
    feature_dim: int = FEATURE_DIM,
) -> Encoder:
    """Behavioural cloning of the demonstrated actions; returns a frozen encoder.

    SGD with momentum 0.9; the learning rate halves at the midpoint epoch.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    params = init_params(rng, hidden, feature_dim)
    x_all = data.obs.reshape(len(data), -1).astype(np.float64)
    opt = MomentumSGD(params, lr)
    history = []
    steps = 0
    for epoch in range(epochs):
        if epoch == epochs // 2 and epochs > 1:
            opt.lr = lr * 0.5
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            loss, grads = loss_and_grads(params, x_all[idx], data.masks[idx], data.actions[idx])
            opt.step(grads)
            total += loss * len(idx)
            steps += 1
        history.append(total / len(data))
    return Encoder(
        **{k: frozen(v) for k, v in params.items()},
        seed=seed, steps=steps, loss_history=tuple(float(h) for h in history),
    )


def _flat(obs: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float32)
    return obs.reshape(obs.shape[:-3] + (OBS_DIM,))


def encode(e: Encoder, obs: np.ndarray) -> np.ndarray:
    """Feature vector(s) for one observation (7, 7, 3) or a batch (..., 7, 7, 3)."""
    h = relu(_flat(obs) @ e.w1 + e.b1)
    return h @ e.w2 + e.b2


def head_logits(e: Encoder, obs: np.ndarray) -> np.ndarray:
    if not e.has_head:
        raise ValueError("encoder has no action head")
    return relu(encode(e, obs)) @ e.head_w + e.head_b


def greedy_head_action(e: Encoder, s: go_env.BoardState) -> int:
    logits = masked_logits(head_logits(e, go_env.observe(s)), go_env.legal_mask(s))
    return int(np.argmax(logits))


def handcrafted_encode(obs: np.ndarray) -> np.ndarray:
    """Training-free 128-d features from one observation.

    Layout: own and opponent occupancy (49 + 49), row and column sums of
    own-minus-opponent occupancy (7 + 7), own/opponent stone counts (2),
    empty count (1), stones in groups with 1, 2, 3, >=4 liberties for own
    then opponent (8), zero padding to 128.
    """
    obs = np.asarray(obs)
    own = obs[..., 0].astype(np.float32)
    opp = obs[..., 1].astype(np.float32)
    diff = own - opp
    stones = [go_env.EMPTY] * go_env.NUM_POINTS
    for p in np.flatnonzero(own.ravel()):
        stones[p] = go_env.BLACK
    for p in np.flatnonzero(opp.ravel()):
        stones[p] = go_env.WHITE
    hist = np.zeros(8, dtype=np.float32)
    for g in go_env.BoardState(tuple(stones)).groups():
        slot = min(len(g.liberties), 4) - 1
        if slot < 0:
            continue
        hist[slot + (0 if g.color == go_env.BLACK else 4)] += len(g.stones)
    parts = [
        own.ravel(), opp.ravel(), diff.sum(axis=1), diff.sum(axis=0),
        [own.sum(), opp.sum(), obs[..., 2].sum()], hist,
    ]
    feats = np.concatenate([np.asarray(p, dtype=np.float32) for p in parts])
    out = np.zeros(FEATURE_DIM, dtype=np.float32)
    out[:len(feats)] = feats
    return out


def handcrafted_encoder_batch(obs: np.ndarray) -> np.ndarray:
    return np.stack([handcrafted_encode(o) for o in obs])
