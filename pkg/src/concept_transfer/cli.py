"""Command-line driver.  Every subcommand runs one pipeline stage, writes its
outputs atomically and prints a single JSON line on stdout.

Exit codes: 0 success, 2 missing or corrupt artifact, 3 invalid config or
arguments.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, artifacts
from .alignment import align, transfer
from .artifacts import ArtifactError
from .bottleneck import OPPONENTS, Agent, evaluate, finetune_reinforce, train_bottleneck, with_policy
from .concepts import collect_features, fit_kmeans
from .config import ConfigError, RunConfig, load_config
from .encoder import collect_demos, train_encoder

EXIT_OK, EXIT_ARTIFACT, EXIT_CONFIG = 0, 2, 3
_METHOD_NAMES = {"hungarian": "hungarian", "greedy": "greedy_nn", "greedy_nn": "greedy_nn",
                 "procrustes": "procrustes", "random": "random", "identity": "identity"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _pick(value, default):
    return default if value is None else value


def _concepts_path(path: Path) -> Path:
    """Accept either a concept-model artifact or an agent directory."""
    if artifacts.read_manifest(path)["artifact_kind"] == "agent":
        return path / "concepts"
    return path


def _parts(agent_dir) -> dict:
    agent_dir = Path(agent_dir)
    return {name: agent_dir / name for name in ("encoder", "concepts")
            if (agent_dir / name).is_dir()}


# ----------------------------------------------------------------- commands

def cmd_collect(args, cfg):
    games = _pick(args.games, cfg.demo_games)
    seed = _pick(args.seed, cfg.seed)
    data = collect_demos(games, seed)
    aid = artifacts.save_demos(args.out, data, seed, games)
    return {"artifact_id": aid, "samples": len(data), "games": games}


def cmd_train_encoder(args, cfg):
    data = artifacts.load_demos(args.data)
    epochs = _pick(args.epochs, cfg.encoder_epochs)
    lr = _pick(args.lr, cfg.encoder_lr)
    seed = _pick(args.seed, cfg.encoder_seed)
    enc = train_encoder(data, epochs, lr, seed)
    aid = artifacts.save_encoder(args.out, enc, [artifacts.artifact_id(args.data)],
                                 {"epochs": epochs, "lr": lr})
    return {"artifact_id": aid, "final_loss": enc.loss_history[-1], "steps": enc.steps}


def cmd_discover(args, cfg):
    enc = artifacts.load_encoder(args.encoder)
    games = _pick(args.games, cfg.feature_games)
    k = _pick(args.k, cfg.k)
    seed = _pick(args.seed, cfg.kmeans_seed)
    game_seed = _pick(args.game_seed, cfg.seed)
    feats = collect_features(enc, games, game_seed)
    cm = fit_kmeans(feats, k, seed)
    aid = artifacts.save_concepts(args.out, cm, [artifacts.artifact_id(args.encoder)],
                                  {"games": games, "game_seed": game_seed})
    return {"artifact_id": aid, "k": k, "features": len(feats), "inertia": cm.inertia}


def cmd_train_bottleneck(args, cfg):
    enc = artifacts.load_encoder(args.encoder)
    cm = artifacts.load_concepts(_concepts_path(Path(args.concepts)))
    data = artifacts.load_demos(args.data)
    epochs = _pick(args.epochs, cfg.bottleneck_epochs)
    lr = _pick(args.lr, cfg.bottleneck_lr)
    seed = _pick(args.seed, cfg.seed)
    policy = train_bottleneck(enc, cm, data, epochs, lr, seed,
                              embed_dim=cfg.embed_dim, hidden=cfg.hidden)
    concepts = _concepts_path(Path(args.concepts))
    inputs = [artifacts.artifact_id(p) for p in (args.encoder, concepts, args.data)]
    aid = artifacts.save_agent(args.out, Agent(enc, cm, policy), policy_from=inputs,
                               meta={"epochs": epochs, "lr": lr},
                               copy_parts={"encoder": args.encoder, "concepts": concepts})
    return {"artifact_id": aid, "final_loss": policy.loss_history[-1]}


def cmd_align(args, cfg):
    method = _METHOD_NAMES[args.method]
    if method == "random" and args.seed is None:
        raise ConfigError("random alignment requires --seed")
    src, tgt = _concepts_path(Path(args.source)), _concepts_path(Path(args.target))
    amap = align(artifacts.load_concepts(src), artifacts.load_concepts(tgt), method, args.seed)
    aid = artifacts.save_alignment(args.out, amap,
                                   [artifacts.artifact_id(src), artifacts.artifact_id(tgt)])
    return {"artifact_id": aid, "method": method,
            "mean_matched_similarity": amap.mean_matched_similarity}


def cmd_transfer(args, cfg):
    src = artifacts.load_agent(args.source_agent)
    tgt = artifacts.load_agent(args.target_agent)
    amap = artifacts.load_alignment(args.alignment)
    moved = transfer(src, tgt, amap.method, amap.seed, amap=amap)
    inputs = [artifacts.artifact_id(p) for p in (args.source_agent, args.target_agent, args.alignment)]
    aid = artifacts.save_agent(args.out, moved, policy_from=inputs,
                               meta={"method": amap.method}, copy_parts=_parts(args.target_agent))
    return {"artifact_id": aid, "method": amap.method}


def cmd_evaluate(args, cfg):
    ag = artifacts.load_agent(args.agent)
    opponent = _pick(args.opponent, cfg.opponent)
    seeds = _pick(args.seeds, cfg.eval_seeds)
    games = _pick(args.games, cfg.eval_games)
    base_seed = _pick(args.base_seed, cfg.seed)
    rep = evaluate(ag, opponent, seeds, games, base_seed, cfg.komi)
    summary = rep.summary()
    artifacts.write_report(args.out, rep.to_csv(), summary, "evaluate",
                           [artifacts.artifact_id(args.agent)], {"base_seed": base_seed})
    return summary


def cmd_intervene(args, cfg):
    ag = artifacts.load_agent(args.agent)
    seed = _pick(args.seed, cfg.seed)
    rep = analysis.intervene(ag, args.states, args.alternatives, seed)
    summary = rep.summary()
    artifacts.write_report(args.out, rep.to_csv(), summary, "intervene",
                           [artifacts.artifact_id(args.agent)], {"seed": seed})
    return summary


def cmd_ablate(args, cfg):
    ag = artifacts.load_agent(args.agent)
    seed = _pick(args.seed, cfg.seed)
    if args.concepts == "all":
        targets = "all"
    else:
        try:
            targets = [int(c) for c in args.concepts.split(",")]
        except ValueError:
            raise ConfigError(f"--concepts must be 'all' or a comma list, got {args.concepts!r}") from None
        if any(not 0 <= c < ag.k for c in targets):
            raise ConfigError(f"concept ids must lie in [0, {ag.k})")
    rep = analysis.ablate(ag, targets, args.games, seed, combined=args.combined,
                          opponent=OPPONENTS[cfg.opponent], komi=cfg.komi)
    summary = rep.summary()
    artifacts.write_report(args.out, rep.to_csv(), summary, "ablate",
                           [artifacts.artifact_id(args.agent)], {"seed": seed})
    return summary


def cmd_finetune(args, cfg):
    ag = artifacts.load_agent(args.agent)
    generations = _pick(args.generations, cfg.rl_generations)
    games = _pick(args.games_per_gen, cfg.rl_games)
    lr = _pick(args.lr, cfg.rl_lr)
    seed = _pick(args.seed, cfg.seed)
    policy, curve = finetune_reinforce(ag, generations, games, lr, seed,
                                       OPPONENTS[cfg.opponent], komi=cfg.komi)
    aid = artifacts.save_agent(args.out, with_policy(ag, policy),
                               policy_from=[artifacts.artifact_id(args.agent)],
                               meta={"generations": generations, "games_per_gen": games,
                                     "lr": lr, "seed": seed, "win_rate_curve": curve},
                               copy_parts=_parts(args.agent))
    return {"artifact_id": aid, "final_win_rate": curve[-1], "generations": generations}


def cmd_sweep_k(args, cfg):
    try:
        ks = [int(k) for k in args.k.split(",") if k.strip()]
    except ValueError:
        raise ConfigError(f"--k must be a comma list of integers, got {args.k!r}") from None
    if not ks or any(k < 2 for k in ks):
        raise ConfigError("--k needs at least one value, each >= 2")
    seed = _pick(args.seed, cfg.seed)
    rows = analysis.k_sweep(ks, cfg, seed)
    summary = {"rows": [vars(r) for r in rows]}
    artifacts.write_report(args.out, analysis.sweep_to_csv(rows), summary, "sweep-k",
                           seeds={"seed": seed})
    return summary


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="concept-transfer", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(fn=fn)
        return sp

    sp = cmd("collect", cmd_collect, "heuristic self-play demonstrations")
    sp.add_argument("--games", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = cmd("train-encoder", cmd_train_encoder, "behavioural-cloning encoder")
    sp.add_argument("--data", required=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = cmd("discover", cmd_discover, "k-means concepts over encoder features")
    sp.add_argument("--encoder", required=True)
    sp.add_argument("--games", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--seed", type=int, help="k-means seed")
    sp.add_argument("--game-seed", type=int, help="seed of the feature-collection games")
    sp.add_argument("--out", required=True)

    sp = cmd("train-bottleneck", cmd_train_bottleneck, "concept-bottleneck policy; writes an agent")
    sp.add_argument("--encoder", required=True)
    sp.add_argument("--concepts", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = cmd("align", cmd_align, "pair source concepts with target concepts")
    sp.add_argument("--source", required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--method", required=True, choices=sorted(_METHOD_NAMES))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = cmd("transfer", cmd_transfer, "zero-shot policy transfer")
    sp.add_argument("--source-agent", required=True)
    sp.add_argument("--target-agent", required=True)
    sp.add_argument("--alignment", required=True)
    sp.add_argument("--out", required=True)

    sp = cmd("evaluate", cmd_evaluate, "greedy win rate against a scripted opponent")
    sp.add_argument("--agent", required=True)
    sp.add_argument("--opponent", choices=sorted(OPPONENTS))
    sp.add_argument("--seeds", type=int)
    sp.add_argument("--games", type=int)
    sp.add_argument("--base-seed", type=int)
    sp.add_argument("--out", required=True)

    sp = cmd("intervene", cmd_intervene, "concept-override causal test")
    sp.add_argument("--agent", required=True)
    sp.add_argument("--states", type=int, default=500)
    sp.add_argument("--alternatives", type=int, default=5)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = cmd("ablate", cmd_ablate, "per-concept ablation")
    sp.add_argument("--agent", required=True)
    sp.add_argument("--concepts", default="all")
    sp.add_argument("--games", type=int, default=500)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--combined", action="store_true", help="ablate the listed concepts together")
    sp.add_argument("--out", required=True)

    sp = cmd("finetune", cmd_finetune, "REINFORCE fine-tuning")
    sp.add_argument("--agent", required=True)
    sp.add_argument("--generations", type=int)
    sp.add_argument("--games-per-gen", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = cmd("sweep-k", cmd_sweep_k, "direct and transfer win rate across k")
    sp.add_argument("--k", default="8,16,32,64,128")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    return p


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True, default=float))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        _emit({"status": "error", "exit_code": EXIT_CONFIG, "error": str(exc)})
        return EXIT_CONFIG
    if args.verbose:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                            format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = _config(args)
        result = args.fn(args, cfg)
    except ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        _emit({"command": args.command, "status": "error", "exit_code": EXIT_ARTIFACT,
               "error": str(exc)})
        return EXIT_ARTIFACT
    except (ConfigError, ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        _emit({"command": args.command, "status": "error", "exit_code": EXIT_CONFIG,
               "error": str(exc)})
        return EXIT_CONFIG
    _emit({"command": args.command, "status": "ok", "out": str(args.out), **result})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
