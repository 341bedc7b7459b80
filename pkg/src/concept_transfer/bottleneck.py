"""Concept-bottleneck policies.

The policy sees only the concept id of the current state: the id selects a
row of an embedding table, and a one-hidden-layer MLP maps that row to
logits over the 50 actions.  Illegal actions are masked out.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import go_env
from .concepts import ConceptModel, assign, assign_batch
from .encoder import DemoDataset, Encoder, encode, handcrafted_encode, handcrafted_encoder_batch
from .nn import (MomentumSGD, frozen, glorot_uniform, masked_cross_entropy,
                 masked_log_softmax, masked_logits, relu)
from .stats import t_test_one_sample

EMBED_DIM = 64
HIDDEN_DIM = 128
PROVENANCE = ("trained", "transferred", "finetuned", "random")


@dataclass(frozen=True)
class BottleneckPolicy:
    embedding: np.ndarray  # (k, d)
    w1: np.ndarray  # (d, hidden)
    b1: np.ndarray
    w2: np.ndarray  # (hidden, 50)
    b2: np.ndarray
    seed: int = 0
    provenance: str = "trained"
    loss_history: tuple[float, ...] = ()

    def __post_init__(self):
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        for name, t in self.tensors().items():
            if not np.all(np.isfinite(t)):
                raise ValueError(f"non-finite values in {name}")

    @property
    def k(self) -> int:
        return self.embedding.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"embedding": self.embedding, "w1": self.w1, "b1": self.b1,
                "w2": self.w2, "b2": self.b2}

    def params64(self) -> dict[str, np.ndarray]:
        return {k: np.array(v, dtype=np.float64) for k, v in self.tensors().items()}

    @cached_property
    def logit_table(self) -> np.ndarray:
        """Logits for every concept id, shape (k, 50)."""
        return forward(self.params64(), np.arange(self.k))[0]


def forward(params, concepts):
    emb = params["embedding"][concepts]
    z = emb @ params["w1"] + params["b1"]
    h = relu(z)
    return h @ params["w2"] + params["b2"], (emb, z, h)


def backward(params, concepts, cache, dlogits):
    emb, z, h = cache
    dh = dlogits @ params["w2"].T
    dz = dh * (z > 0)
    demb = dz @ params["w1"].T
    g_emb = np.zeros_like(params["embedding"])
    np.add.at(g_emb, concepts, demb)
    return {
        "embedding": g_emb,
        "w1": emb.T @ dz,
        "b1": dz.sum(0),
        "w2": h.T @ dlogits,
        "b2": dlogits.sum(0),
    }


def init_policy_params(rng: np.random.Generator, k: int, embed_dim: int = EMBED_DIM,
                       hidden: int = HIDDEN_DIM) -> dict[str, np.ndarray]:
    n_act = go_env.NUM_ACTIONS
    return {
        "embedding": rng.normal(0.0, 1.0, size=(k, embed_dim)),
        "w1": glorot_uniform(rng, embed_dim, hidden),
        "b1": np.zeros(hidden),
        "w2": glorot_uniform(rng, hidden, n_act),
        "b2": np.zeros(n_act),
    }


def policy_from_params(params, seed: int, provenance: str, loss_history=()) -> BottleneckPolicy:
    return BottleneckPolicy(**{k: frozen(v) for k, v in params.items()}, seed=seed,
                            provenance=provenance, loss_history=tuple(float(h) for h in loss_history))


def random_policy(k: int, seed: int, embed_dim: int = EMBED_DIM,
                  hidden: int = HIDDEN_DIM) -> BottleneckPolicy:
    rng = np.random.Generator(np.random.PCG64(seed))
    return policy_from_params(init_policy_params(rng, k, embed_dim, hidden), seed, "random")


# -------------------------------------------------------------------- agent

@dataclass(frozen=True)
class Agent:
    """Encoder + concept model + bottleneck policy.

    ``encoder`` None means the handcrafted feature map.
    """
    encoder: Encoder | None
    concept_model: ConceptModel
    policy: BottleneckPolicy

    def __post_init__(self):
        if self.concept_model.k != self.policy.k:
            raise ValueError("concept model and policy disagree on k")
        dim = self.encoder.feature_dim if self.encoder is not None else 128
        if dim != self.concept_model.dim:
            raise ValueError("encoder output and centroid dimensions differ")

    @property
    def k(self) -> int:
        return self.policy.k

    def features(self, obs: np.ndarray) -> np.ndarray:
        if self.encoder is None:
            if obs.ndim == 3:
                return handcrafted_encode(obs)
            return handcrafted_encoder_batch(obs)
        return encode(self.encoder, obs)


def concept_of(ag: Agent, s: go_env.BoardState) -> int:
    return assign(ag.concept_model, ag.features(go_env.observe(s)))


def concepts_of(ag: Agent, obs: np.ndarray) -> np.ndarray:
    return assign_batch(ag.concept_model, ag.features(obs))


def choose(policy: BottleneckPolicy, concept: int, mask: np.ndarray, mode: str = "greedy",
           rng: np.random.Generator | None = None) -> int:
    logits = policy.logit_table[concept]
    if mode == "greedy":
        return int(np.argmax(masked_logits(logits, mask)))
    if mode == "sample":
        probs = np.exp(masked_log_softmax(logits, mask))
        return int(rng.choice(go_env.NUM_ACTIONS, p=probs / probs.sum()))
    raise ValueError(f"unknown mode {mode!r}")


def act(ag: Agent, s: go_env.BoardState, mode: str = "greedy",
        rng: np.random.Generator | None = None) -> int:
    """Concept of the state -> embedding -> MLP -> masked argmax or sample."""
    return choose(ag.policy, concept_of(ag, s), go_env.legal_mask(s), mode, rng)


@dataclass(frozen=True)
class AgentPlayer:
    """Adapter giving an agent the ``(state, rng) -> action`` player signature."""
    agent: Agent
    mode: str = "greedy"

    def __call__(self, s: go_env.BoardState, rng: np.random.Generator) -> int:
        return act(self.agent, s, self.mode, rng)


# ----------------------------------------------------------------- training

def bc_loss_and_grads(params, concepts, masks, actions):
    logits, cache = forward(params, concepts)
    loss, dlogits = masked_cross_entropy(logits, masks, actions)
    return loss, backward(params, concepts, cache, dlogits)


def train_bottleneck(
    enc: Encoder | None,
    cm: ConceptModel,
    data: DemoDataset,
    epochs: int,
    lr: float,
    seed: int,
    batch_size: int = 64,
    embed_dim: int = EMBED_DIM,
    hidden: int = HIDDEN_DIM,
) -> BottleneckPolicy:
    """Behavioural cloning on (concept(obs), action) pairs; encoder and
    centroids stay fixed."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    feats = encode(enc, data.obs) if enc is not None else handcrafted_encoder_batch(data.obs)
    concepts = assign_batch(cm, feats)
    return train_bottleneck_on_concepts(concepts, data.masks, data.actions, cm.k, epochs, lr,
                                        seed, batch_size, embed_dim, hidden)


def train_bottleneck_on_concepts(concepts, masks, actions, k, epochs, lr, seed,
                                 batch_size=64, embed_dim=EMBED_DIM, hidden=HIDDEN_DIM):
    rng = np.random.Generator(np.random.PCG64(seed))
    params = init_policy_params(rng, k, embed_dim, hidden)
    opt = MomentumSGD(params, lr)
    history = []
    n = len(actions)
    for epoch in range(epochs):
        if epoch == epochs // 2 and epochs > 1:
            opt.lr = lr * 0.5
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, grads = bc_loss_and_grads(params, concepts[idx], masks[idx], actions[idx])
            opt.step(grads)
            total += loss * len(idx)
        history.append(total / n)
    return policy_from_params(params, seed, "trained", history)


# ---------------------------------------------------------------- REINFORCE

@dataclass
class Episode:
    concepts: list[int] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    ret: float = 0.0


def reinforce_surrogate(params, episodes: list[Episode], baseline: float) -> float:
    """sum_e (G_e - b) / E * sum_t log pi(a_t | c_t); its gradient is the
    policy-gradient estimate."""
    total = 0.0
    for ep in episodes:
        c = np.asarray(ep.concepts)
        logits, _ = forward(params, c)
        logp = masked_log_softmax(logits, np.asarray(ep.masks))
        total += (ep.ret - baseline) * logp[np.arange(len(c)), ep.actions].sum()
    return total / len(episodes)


def reinforce_grads(params, episodes: list[Episode], baseline: float) -> dict[str, np.ndarray]:
    steps = [(c, m, a, (ep.ret - baseline) / len(episodes))
             for ep in episodes for c, m, a in zip(ep.concepts, ep.masks, ep.actions)]
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    if not steps:
        return grads
    c = np.array([s[0] for s in steps])
    masks = np.array([s[1] for s in steps])
    actions = np.array([s[2] for s in steps])
    weights = np.array([s[3] for s in steps])
    logits, cache = forward(params, c)
    probs = np.exp(masked_log_softmax(logits, masks))
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(actions)), actions] = 1.0
    dlogits = weights[:, None] * (onehot - probs)
    return backward(params, c, cache, dlogits)


class _TablePlayer:
    """Samples from a fixed per-concept logit table and records the trajectory."""

    def __init__(self, ag: Agent, table: np.ndarray, episode: Episode):
        self.ag = ag
        self.table = table
        self.episode = episode

    def __call__(self, s, rng):
        c = concept_of(self.ag, s)
        mask = go_env.legal_mask(s)
        probs = np.exp(masked_log_softmax(self.table[c], mask))
        a = int(rng.choice(go_env.NUM_ACTIONS, p=probs / probs.sum()))
        self.episode.concepts.append(c)
        self.episode.masks.append(mask)
        self.episode.actions.append(a)
        return a


def finetune_reinforce(
    ag: Agent,
    generations: int,
    games_per_gen: int,
    lr: float,
    seed: int,
    opponent: go_env.Player = go_env.heuristic_opponent,
    baseline_decay: float = 0.9,
    komi: float = go_env.KOMI,
) -> tuple[BottleneckPolicy, list[float]]:
    """REINFORCE against ``opponent`` with +1/-1 returns and a running-mean
    baseline.  Returns the updated policy and the per-generation win rate
    of the sampled training games."""
    if generations < 1:
        raise ValueError("generations must be >= 1")
    params = ag.policy.params64()
    baseline = 0.0
    curve = []
    for gen in range(generations):
        table = forward(params, np.arange(ag.k))[0]
        episodes = []
        wins = 0
        for g in range(games_per_gen):
            ep = Episode()
            player = _TablePlayer(ag, table, ep)
            color = go_env.BLACK if g % 2 == 0 else go_env.WHITE
            won, _ = play_match(player, opponent, color, go_env.game_rng(seed, gen, g), komi)
            wins += won
            ep.ret = 1.0 if won else -1.0
            episodes.append(ep)
        curve.append(wins / games_per_gen)
        if lr:
            grads = reinforce_grads(params, episodes, baseline)
            for k in params:
                params[k] += lr * grads[k]
        baseline = baseline_decay * baseline + (1 - baseline_decay) * np.mean([e.ret for e in episodes])
    policy = policy_from_params(params, ag.policy.seed, "finetuned")
    return policy, curve


# --------------------------------------------------------------- evaluation

OPPONENTS: dict[str, go_env.Player] = {
    "heuristic": go_env.heuristic_opponent,
    "random": go_env.random_opponent,
}


@dataclass(frozen=True)
class EvaluationReport:
    opponent: str
    base_seed: int
    outcomes: tuple[tuple[int, ...], ...]  # per seed, 1 for a win
    game_lengths: tuple[int, ...]

    @property
    def n_seeds(self) -> int:
        return len(self.outcomes)

    @property
    def n_games(self) -> int:
        return sum(len(o) for o in self.outcomes)

    @property
    def win_rates(self) -> list[float]:
        return [sum(o) / len(o) for o in self.outcomes]

    @property
    def mean(self) -> float:
        return float(np.mean(self.win_rates))

    @property
    def std(self) -> float:
        return float(np.std(self.win_rates, ddof=1)) if self.n_seeds > 1 else 0.0

    @property
    def mean_game_length(self) -> float:
        return float(np.mean(self.game_lengths))

    def t_test(self) -> tuple[float, float]:
        try:
            res = t_test_one_sample(self.win_rates, 0.5)
        except ValueError:
            return math.nan, math.nan
        return res.t, res.p

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "wins", "games", "win_rate"])
        for i, o in enumerate(self.outcomes):
            w.writerow([i, sum(o), len(o), f"{sum(o) / len(o):.6f}"])
        return buf.getvalue()

    def summary(self) -> dict:
        t, p = self.t_test()
        return {
            "opponent": self.opponent, "base_seed": self.base_seed,
            "n_seeds": self.n_seeds, "n_games": self.n_games,
            "win_rates": self.win_rates, "mean": self.mean, "std": self.std,
            "mean_game_length": self.mean_game_length,
            "t": None if math.isnan(t) else t, "p": None if math.isnan(p) else p,
        }


def play_match(player: go_env.Player, opponent: go_env.Player, color: int,
               rng: np.random.Generator, komi: float = go_env.KOMI
               ) -> tuple[bool, go_env.BoardState]:
    """One game with ``player`` holding ``color``; returns (won, final state)."""
    black, white = (player, opponent) if color == go_env.BLACK else (opponent, player)
    final = go_env.play_game(black, white, rng)
    return go_env.score(final, komi)[2] == color, final


def evaluate(
    agent: Agent | go_env.Player,
    opponent: go_env.Player | str,
    n_seeds: int,
    games_per_seed: int,
    base_seed: int,
    komi: float = go_env.KOMI,
) -> EvaluationReport:
    """Greedy play against ``opponent``; colours alternate game by game and
    game (i, g) uses the stream keyed by (base_seed, i, g)."""
    if n_seeds < 1 or games_per_seed < 1:
        raise ValueError("n_seeds and games_per_seed must be >= 1")
    if isinstance(opponent, str):
        tag, opponent = opponent, OPPONENTS[opponent]
    else:
        tag = getattr(opponent, "__name__", type(opponent).__name__)
    player = AgentPlayer(agent) if isinstance(agent, Agent) else agent
    outcomes, lengths = [], []
    for i in range(n_seeds):
        row = []
        for g in range(games_per_seed):
            color = go_env.BLACK if g % 2 == 0 else go_env.WHITE
            won, final = play_match(player, opponent, color, go_env.game_rng(base_seed, i, g), komi)
            row.append(int(won))
            lengths.append(final.move_count)
        outcomes.append(tuple(row))
    return EvaluationReport(tag, base_seed, tuple(outcomes), tuple(lengths))


def with_policy(ag: Agent, policy: BottleneckPolicy) -> Agent:
    return replace(ag, policy=policy)

