"""End-to-end agent construction: demos -> encoder -> concepts -> policy."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .bottleneck import Agent, finetune_reinforce, train_bottleneck, with_policy
from .concepts import ConceptModel, collect_features, fit_kmeans
from .config import RunConfig
from .encoder import DemoDataset, Encoder, collect_demos, train_encoder

log = logging.getLogger(__name__)

_TAGS = {"demos": 1, "features": 2, "bottleneck": 3, "reinforce": 4}


def derive_seed(seed: int, tag: str) -> int:
    return int(np.random.SeedSequence([seed, _TAGS[tag]]).generate_state(1)[0])


@dataclass(frozen=True)
class BuildResult:
    agent: Agent
    demos: DemoDataset
    features: np.ndarray
    rl_curve: tuple[float, ...] = ()


def scaled(n: int, budget: float, floor: int = 1) -> int:
    return max(floor, int(round(n * budget)))


def build_encoder(cfg: RunConfig, seed: int, budget: float = 1.0) -> tuple[DemoDataset, Encoder]:
    demos = collect_demos(scaled(cfg.demo_games, budget), derive_seed(seed, "demos"))
    # every agent starts from the same encoder initialisation (cfg.encoder_seed);
    # agents differ through their data, shuffling, budgets and later stages
    enc = train_encoder(demos, scaled(cfg.encoder_epochs, budget), cfg.encoder_lr, cfg.encoder_seed)
    return demos, enc


def discover(cfg: RunConfig, enc: Encoder, seed: int, budget: float = 1.0,
             k: int | None = None) -> tuple[np.ndarray, ConceptModel]:
    feats = collect_features(enc, scaled(cfg.feature_games, budget), derive_seed(seed, "features"))
    return feats, fit_kmeans(feats, k or cfg.k, cfg.kmeans_seed)


def build_agent(cfg: RunConfig, seed: int, budget: float = 1.0, k: int | None = None,
                reinforce: bool = True) -> BuildResult:
    """Train one agent at ``budget`` times the configured data/epoch/RL budget."""
    demos, enc = build_encoder(cfg, seed, budget)
    log.info("encoder seed=%d samples=%d final loss=%.4f", seed, len(demos), enc.loss_history[-1])
    feats, cm = discover(cfg, enc, seed, budget, k)
    policy = train_bottleneck(enc, cm, demos, scaled(cfg.bottleneck_epochs, budget),
                              cfg.bottleneck_lr, derive_seed(seed, "bottleneck"),
                              embed_dim=cfg.embed_dim, hidden=cfg.hidden)
    agent = Agent(enc, cm, policy)
    curve: tuple[float, ...] = ()
    generations = scaled(cfg.rl_generations, budget, floor=0) if reinforce else 0
    if generations:
        policy, c = finetune_reinforce(agent, generations, cfg.rl_games, cfg.rl_lr,
                                       derive_seed(seed, "reinforce"), komi=cfg.komi)
        agent = with_policy(agent, policy)
        curve = tuple(c)
        log.info("reinforce seed=%d final win rate=%.3f", seed, float(np.mean(c[-10:])))
    return BuildResult(agent, demos, feats, curve)
