"""Concept validation experiments: causal intervention, ablation, K sweep."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import go_env
from .alignment import transfer
from .bottleneck import Agent, AgentPlayer, choose, concept_of, evaluate, play_match
from .config import RunConfig
from .stats import binomial_test

NULL_DRAWS = 10_000


# ------------------------------------------------------------- intervention

@dataclass(frozen=True)
class InterventionRecord:
    board_hash: int
    to_move: int
    true_concept: int
    action: int
    alternatives: tuple[int, ...]
    alternative_actions: tuple[int, ...]

    @property
    def changes(self) -> int:
        return sum(a != self.action for a in self.alternative_actions)


@dataclass(frozen=True)
class InterventionReport:
    n_states: int
    alternatives_per_state: int
    total_interventions: int
    change_count: int
    change_rate: float
    per_state_change_rates: tuple[float, ...]
    median_rate: float
    rate_std: float
    p0: float
    p_value: float
    records: tuple[InterventionRecord, ...] = ()

    def recount(self) -> tuple[int, int]:
        """(change_count, total_interventions) recomputed from the records."""
        return (sum(r.changes for r in self.records),
                sum(len(r.alternatives) for r in self.records))

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in (
            "n_states", "alternatives_per_state", "total_interventions", "change_count",
            "change_rate", "median_rate", "rate_std", "p0", "p_value")}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "board_hash", "true_concept", "action", "alternatives",
                    "alternative_actions", "changes"])
        for i, r in enumerate(self.records):
            w.writerow([i, f"{r.board_hash:016x}", r.true_concept, r.action,
                        " ".join(map(str, r.alternatives)),
                        " ".join(map(str, r.alternative_actions)), r.changes])
        return buf.getvalue()


AlternativesFn = Callable[[int, int, int, np.random.Generator], Sequence[int]]


def uniform_alternatives(true_concept: int, k: int, n: int, rng: np.random.Generator) -> list[int]:
    others = [c for c in range(k) if c != true_concept]
    return [int(c) for c in rng.choice(others, size=n, replace=False)]


def sample_states(ag: Agent, n_states: int, seed: int, opponent=go_env.heuristic_opponent,
                  max_games: int | None = None) -> list[go_env.BoardState]:
    """Distinct agent-to-move states from greedy games against ``opponent``."""
    pool: dict[tuple[int, int], go_env.BoardState] = {}
    player = AgentPlayer(ag)

    def record(s, a):
        if s.to_move == colour:
            pool.setdefault((s.board_hash, s.to_move), s)

    max_games = max_games or 20 * n_states
    g = 0
    while len(pool) < 2 * n_states and g < max_games:
        colour = go_env.BLACK if g % 2 == 0 else go_env.WHITE
        black, white = (player, opponent) if colour == go_env.BLACK else (opponent, player)
        go_env.play_game(black, white, go_env.game_rng(seed, g), on_move=record)
        g += 1
    if len(pool) < n_states:
        raise RuntimeError(f"only {len(pool)} distinct states after {g} games")
    states = list(pool.values())
    rng = go_env.game_rng(seed, -1 % 2**32)
    return [states[i] for i in rng.choice(len(states), size=n_states, replace=False)]


def permutation_null(ag: Agent, states, true_concepts, masks, draws: int,
                     rng: np.random.Generator) -> float:
    """P(action differs) between a uniformly drawn concept and a uniformly
    drawn non-true concept, on uniformly drawn sampled states."""
    k = ag.k
    changed = 0
    for _ in range(draws):
        i = int(rng.integers(len(states)))
        c1 = int(rng.integers(k))
        c2 = int(rng.integers(k - 1))
        if c2 >= true_concepts[i]:
            c2 += 1
        changed += choose(ag.policy, c1, masks[i]) != choose(ag.policy, c2, masks[i])
    return changed / draws


def intervene(
    ag: Agent,
    n_states: int,
    n_alternatives: int,
    seed: int,
    alternatives_fn: AlternativesFn = uniform_alternatives,
    null_draws: int = NULL_DRAWS,
) -> InterventionReport:
    """Override each sampled state's concept with ``n_alternatives`` others
    and count greedy-action changes.  The legal mask is left untouched."""
    if n_alternatives >= ag.k:
        raise ValueError("n_alternatives must be below k")
    if n_alternatives < 1 or n_states < 1:
        raise ValueError("n_states and n_alternatives must be >= 1")
    states = sample_states(ag, n_states, seed)
    rng = go_env.game_rng(seed, 1, 0)
    records = []
    true_concepts, masks = [], []
    for s in states:
        mask = go_env.legal_mask(s)
        c = concept_of(ag, s)
        a0 = choose(ag.policy, c, mask)
        alts = tuple(int(x) for x in alternatives_fn(c, ag.k, n_alternatives, rng))
        acts = tuple(choose(ag.policy, x, mask) for x in alts)
        records.append(InterventionRecord(s.board_hash, s.to_move, c, a0, alts, acts))
        true_concepts.append(c)
        masks.append(mask)
    rates = [r.changes / len(r.alternatives) for r in records]
    changes = sum(r.changes for r in records)
    total = sum(len(r.alternatives) for r in records)
    p0 = permutation_null(ag, states, true_concepts, masks, null_draws, go_env.game_rng(seed, 2, 0))
    # keep the null strictly inside (0, 1) for the binomial test
    p0_test = min(max(p0, 0.5 / null_draws), 1 - 0.5 / null_draws)
    return InterventionReport(
        n_states=len(records),
        alternatives_per_state=n_alternatives,
        total_interventions=total,
        change_count=changes,
        change_rate=changes / total,
        per_state_change_rates=tuple(rates),
        median_rate=float(np.median(rates)),
        rate_std=float(np.std(rates)),
        p0=p0,
        p_value=binomial_test(changes, total, p0_test),
        records=tuple(records),
    )


# ----------------------------------------------------------------- ablation

class AblatedPlayer:
    """Greedy agent that plays a uniform random legal move whenever the
    state's concept is in ``ablated``."""

    def __init__(self, ag: Agent, ablated: Iterable[int], usage: np.ndarray | None = None):
        self.ag = ag
        self.ablated = frozenset(ablated)
        self.usage = usage

    def __call__(self, s: go_env.BoardState, rng: np.random.Generator) -> int:
        c = concept_of(self.ag, s)
        if self.usage is not None:
            self.usage[c] += 1
        if c in self.ablated:
            return go_env.random_opponent(s, rng)
        return choose(self.ag.policy, c, go_env.legal_mask(s))


@dataclass(frozen=True)
class AblationRow:
    concepts: tuple[int, ...]
    frequency: float
    ablated_outcomes: tuple[int, ...]

    @property
    def ablated_win_rate(self) -> float:
        return float(np.mean(self.ablated_outcomes))


@dataclass(frozen=True)
class AblationReport:
    baseline_outcomes: tuple[int, ...]
    rows: tuple[AblationRow, ...]
    seed: int

    @property
    def baseline_win_rate(self) -> float:
        return float(np.mean(self.baseline_outcomes))

    def drop(self, row: AblationRow) -> float:
        return self.baseline_win_rate - row.ablated_win_rate

    def drops(self) -> np.ndarray:
        return np.array([self.drop(r) for r in self.rows])

    def paired_difference(self, a: AblationRow, b: AblationRow) -> tuple[float, float]:
        """Mean and standard error of drop(a) - drop(b) over paired games."""
        d = np.array(b.ablated_outcomes, float) - np.array(a.ablated_outcomes, float)
        return float(d.mean()), float(d.std(ddof=1) / np.sqrt(len(d)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["concept", "frequency", "baseline_win_rate", "ablated_win_rate", "drop"])
        for r in self.rows:
            label = "+".join(map(str, r.concepts))
            w.writerow([label, f"{r.frequency:.6f}", f"{self.baseline_win_rate:.6f}",
                        f"{r.ablated_win_rate:.6f}", f"{self.drop(r):.6f}"])
        return buf.getvalue()

    def summary(self) -> dict:
        drops = self.drops()
        top = int(np.argmax(drops)) if len(drops) else None
        return {
            "seed": self.seed,
            "games": len(self.baseline_outcomes),
            "baseline_win_rate": self.baseline_win_rate,
            "max_drop": float(drops.max()) if len(drops) else None,
            "max_drop_concepts": list(self.rows[top].concepts) if top is not None else None,
            "median_drop": float(np.median(drops)) if len(drops) else None,
        }


def _run_games(player, opponent, games: int, seed: int, komi: float) -> tuple[int, ...]:
    out = []
    for g in range(games):
        colour = go_env.BLACK if g % 2 == 0 else go_env.WHITE
        won, _ = play_match(player, opponent, colour, go_env.game_rng(seed, g), komi)
        out.append(int(won))
    return tuple(out)


def ablate(
    ag: Agent,
    concepts: Iterable[int] | str = "all",
    games_per_concept: int = 500,
    seed: int = 0,
    combined: bool = False,
    opponent: go_env.Player = go_env.heuristic_opponent,
    komi: float = go_env.KOMI,
) -> AblationReport:
    """Win-rate drop when each concept's action is replaced by a random legal move.

    Baseline and ablated runs share game seeds, so drops are paired.
    ``combined`` ablates the whole concept list at once as a single row.
    """
    if games_per_concept < 1:
        raise ValueError("games_per_concept must be >= 1")
    targets = list(range(ag.k)) if concepts == "all" else [int(c) for c in concepts]
    usage = np.zeros(ag.k)
    baseline = _run_games(AblatedPlayer(ag, (), usage), opponent, games_per_concept, seed, komi)
    freq = usage / usage.sum()
    groups = [tuple(targets)] if combined else [(c,) for c in targets]
    rows = []
    for group in groups:
        outcomes = _run_games(AblatedPlayer(ag, group), opponent, games_per_concept, seed, komi)
        rows.append(AblationRow(group, float(freq[list(group)].sum()), outcomes))
    return AblationReport(baseline, tuple(rows), seed)


# ------------------------------------------------------------------ K sweep

@dataclass(frozen=True)
class SweepRow:
    k: int
    direct_win_rate: float
    transfer_win_rate: float


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "direct_win_rate", "transfer_win_rate"])
    for r in rows:
        w.writerow([r.k, f"{r.direct_win_rate:.6f}", f"{r.transfer_win_rate:.6f}"])
    return buf.getvalue()


def k_sweep(k_values: Sequence[int], cfg: RunConfig, seed: int) -> list[SweepRow]:
    """For each k: train agents A and B, evaluate A directly and A -> B
    (Hungarian) against the configured opponent."""
    from .pipeline import build_agent

    if not k_values:
        raise ValueError("k_values must be nonempty")
    rows = []
    for k in k_values:
        a = build_agent(cfg, seed, k=k).agent
        b = build_agent(cfg, seed + 1, k=k, reinforce=False).agent
        direct = evaluate(a, cfg.opponent, cfg.eval_seeds, cfg.eval_games, seed, cfg.komi)
        moved = evaluate(transfer(a, b, "hungarian"), cfg.opponent, cfg.eval_seeds,
                         cfg.eval_games, seed, cfg.komi)
        rows.append(SweepRow(k, direct.mean, moved.mean))
    return rows
