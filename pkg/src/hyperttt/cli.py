"""Command-line entry point: serve, agent, pretrain, experiment."""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path

from .agent import Aborted, Agent, AgentConfig, Listener
from .game import BotKind
from .harness import ExperimentConfig, pretrain_advisor, run_experiment, write_episode_csv
from .policy import HyperParams, QTable
from .service import ServiceConfig, TTTService
from .transfer import TransferConfig
from .transport import HttpTransport, serve

log = logging.getLogger("hyperttt")


def _add_hyper_params(p: argparse.ArgumentParser) -> None:
    d = HyperParams()
    g = p.add_argument_group("learning")
    g.add_argument("--alpha", type=float, default=d.alpha)
    g.add_argument("--gamma", type=float, default=d.gamma)
    g.add_argument("--epsilon-start", type=float, default=d.epsilon_start)
    g.add_argument("--epsilon-decay", type=float, default=d.epsilon_decay)
    g.add_argument("--epsilon-min", type=float, default=d.epsilon_min)
    g.add_argument("--symmetry", action="store_true", help="reduce states by board symmetry")


def _add_transfer(p: argparse.ArgumentParser) -> None:
    d = TransferConfig()
    g = p.add_argument_group("advice")
    g.add_argument("--ask-budget", type=int, default=d.ask_budget)
    g.add_argument("--give-budget", type=int, default=d.give_budget)
    g.add_argument("--threshold", type=float, default=d.score_threshold,
                   help="minimum advisor score to follow advice")
    g.add_argument("--reply-timeout", type=float, default=d.reply_timeout, help="seconds")
    g.add_argument("--max-retries", type=int, default=d.max_retries)


def _hyper_params(a: argparse.Namespace) -> HyperParams:
    return HyperParams(alpha=a.alpha, gamma=a.gamma, epsilon_start=a.epsilon_start,
                       epsilon_decay=a.epsilon_decay, epsilon_min=a.epsilon_min)


def _transfer(a: argparse.Namespace) -> TransferConfig:
    return TransferConfig(ask_budget=a.ask_budget, give_budget=a.give_budget,
                          score_threshold=a.threshold, reply_timeout=a.reply_timeout,
                          max_retries=a.max_retries)


def _host_port(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {value!r}") from None


def _wait_forever(stop: threading.Event, seconds: float | None = None) -> None:
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        stop.wait(seconds)
    except KeyboardInterrupt:
        pass


def cmd_serve(a: argparse.Namespace) -> int:
    config = ServiceConfig(base_path=a.base_path, bot=BotKind(a.bot),
                           agent_moves_first=not a.bot_first, rng_seed=a.seed,
                           export_dir=Path(a.export_dir) if a.export_dir else None)
    svc = TTTService(config)
    handle = serve(svc, a.host, a.port)
    svc.set_public_url(a.public_url or handle.url.rstrip("/"))
    print(f"serving {svc.root}", flush=True)
    _wait_forever(threading.Event())
    handle.close()
    return 0


def cmd_agent(a: argparse.Namespace) -> int:
    policy = None
    if a.checkpoint:
        policy, _ = QTable.load(a.checkpoint)
    listener = None
    if a.listen or a.advisor_url:
        host, port = a.listen if a.listen else ("127.0.0.1", 0)
        listener = Listener(host, port)
        print(f"listening {listener.url}", flush=True)
    config = AgentConfig(
        agent_iri=a.iri, entry_url=a.entry, episodes=a.episodes,
        hyper_params=_hyper_params(a), use_symmetry=a.symmetry, transfer=_transfer(a),
        advisor_iri=a.advisor_iri, advisor_url=a.advisor_url,
        listen_url=listener.url if listener else None, rng_seed=a.seed,
    )
    agent = Agent(config, HttpTransport(), policy=policy)
    if listener is not None:
        listener.attach(agent)
    status = 0
    try:
        try:
            records = agent.run_training()
        except Aborted as exc:
            log.error("%s", exc)
            records, status = exc.records, 2
        if a.csv:
            write_episode_csv(Path(a.csv), records, with_wall=True)
        if a.save_checkpoint:
            agent.policy.save(a.save_checkpoint, config.hyper_params)
        if a.comms:
            agent.comms.export(a.comms)
        wins = sum(r.outcome.value == "Win" for r in records)
        print(f"episodes {len(records)} wins {wins}", flush=True)
        if listener is not None and a.linger != 0:
            _wait_forever(threading.Event(), None if a.linger < 0 else a.linger)
    finally:
        if listener is not None:
            listener.close()
    return status


def _experiment_config(a: argparse.Namespace, mode: str) -> ExperimentConfig:
    seeds = [int(s) for s in a.seeds.split(",")] if a.seeds else list(range(a.repetitions))
    return ExperimentConfig(
        mode=mode, episodes=a.episodes, seeds=seeds,
        advisor_pretrain_episodes=a.pretrain_episodes, reward_window=a.reward_window,
        reward_threshold=a.reward_threshold, eval_gamma=a.eval_gamma, transport=a.transport,
        output_dir=Path(a.output_dir), hyper_params=_hyper_params(a), transfer=_transfer(a),
        bot=BotKind(a.bot), use_symmetry=a.symmetry, advisor_symmetry=a.symmetry,
        advisor_mode=a.advisor_mode, advisor_seed=a.advisor_seed,
        advisor_checkpoint=Path(a.advisor_checkpoint) if a.advisor_checkpoint else None,
        fresh_advisor=a.fresh_advisor,
    )


def cmd_pretrain(a: argparse.Namespace) -> int:
    a.seeds, a.repetitions = "0", 1
    cfg = _experiment_config(a, "transfer")
    print(pretrain_advisor(cfg), flush=True)
    return 0


def cmd_experiment(a: argparse.Namespace) -> int:
    cfg = _experiment_config(a, a.mode)
    result = run_experiment(cfg)
    summary = {arm: stats["mean"] for arm, stats in result["summary"].items()}
    print(json.dumps(summary, indent=2))
    return 0


def _add_experiment_args(p: argparse.ArgumentParser) -> None:
    d = ExperimentConfig()
    p.add_argument("--episodes", type=int, default=d.episodes)
    p.add_argument("--repetitions", type=int, default=len(d.seeds))
    p.add_argument("--seeds", help="comma-separated; overrides --repetitions")
    p.add_argument("--pretrain-episodes", type=int, default=d.advisor_pretrain_episodes)
    p.add_argument("--reward-window", type=int, default=d.reward_window)
    p.add_argument("--reward-threshold", type=float, default=d.reward_threshold)
    p.add_argument("--eval-gamma", type=float, default=d.eval_gamma)
    p.add_argument("--transport", choices=["inProcess", "loopbackHttp"], default=d.transport)
    p.add_argument("--output-dir", default=str(d.output_dir))
    p.add_argument("--bot", choices=[b.value for b in BotKind], default=d.bot.value)
    p.add_argument("--advisor-mode", choices=["frozen", "learning"], default=d.advisor_mode)
    p.add_argument("--advisor-seed", type=int, default=d.advisor_seed)
    p.add_argument("--advisor-checkpoint")
    p.add_argument("--fresh-advisor", action="store_true")
    _add_hyper_params(p)
    _add_transfer(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hyperttt", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the tic-tac-toe service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--public-url", help="externally visible origin, if not host:port")
    p.add_argument("--base-path", default="")
    p.add_argument("--bot", choices=[b.value for b in BotKind], default=BotKind.HEURISTIC.value)
    p.add_argument("--bot-first", action="store_true", help="the bot plays X")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--export-dir", help="write <gameId>.ttl here when a game ends")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("agent", help="run one learning agent")
    p.add_argument("--iri", required=True, help="this agent's IRI")
    p.add_argument("--entry", required=True, help="service entry point URL")
    p.add_argument("--listen", type=_host_port, help="HOST:PORT for advice endpoints")
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--advisor-url", help="advisor's message endpoint; enables asking")
    p.add_argument("--advisor-iri")
    p.add_argument("--checkpoint", help="start from this saved policy")
    p.add_argument("--save-checkpoint", help="save the policy here after training")
    p.add_argument("--csv", help="per-episode records output")
    p.add_argument("--comms", help="export the message log as JSON lines")
    p.add_argument("--linger", type=float, default=0,
                   help="keep serving advice this many seconds after training (-1: forever)")
    _add_hyper_params(p)
    _add_transfer(p)
    p.set_defaults(func=cmd_agent)

    p = sub.add_parser("pretrain", help="train and checkpoint an advisor")
    _add_experiment_args(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("experiment", help="compare solo and advised learning")
    p.add_argument("--mode", choices=["solo", "transfer", "paired"], default="paired")
    _add_experiment_args(p)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
