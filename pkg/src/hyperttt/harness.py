"""Solo-vs-transfer experiments: wiring, metrics and CSV output."""

from __future__ import annotations

import csv
import json
import logging
import statistics
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .agent import Aborted, Agent, AgentConfig, EpisodeRecord, Listener, Outcome
from .game import BotKind
from .policy import HyperParams, QTable, RunState
from .service import ServiceConfig, TTTService
from .transfer import TransferConfig
from .transport import DeferredApp, HttpTransport, InProcessTransport, ServerHandle, serve

log = logging.getLogger(__name__)

EPISODE_COLUMNS = ["index", "outcome", "reward", "steps", "advice_asked", "advice_followed"]
AGENT_CSV_COLUMNS = EPISODE_COLUMNS + ["wall_ms"]
AGGREGATE_COLUMNS = [
    "seed", "arm", "episodes", "undiscounted_return", "discounted_return",
    "episodes_to_threshold", "total_wall_s", "advice_asked", "advice_followed",
]
SUMMARY_COLUMNS = ["arm", "statistic", "undiscounted_return", "discounted_return",
                   "episodes_to_threshold", "reached", "total_wall_s"]

ADVISOR_IRI = "http://agent.zero/"
ADVISEE_IRI = "http://agent.one/"
SOLO_IRI = "http://agent.solo/"


class LaunchFailure(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "paired"  # solo, transfer or paired
    episodes: int = 2000
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    advisor_pretrain_episodes: int = 20_000
    reward_window: int = 100
    reward_threshold: float = 0.6
    eval_gamma: float = 0.9
    transport: str = "inProcess"  # or loopbackHttp
    output_dir: Path = Path("results")
    hyper_params: HyperParams = field(default_factory=HyperParams)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    bot: BotKind = BotKind.HEURISTIC
    use_symmetry: bool = False
    advisor_symmetry: bool = False
    advisor_mode: str = "frozen"  # or learning
    advisor_seed: int = 10_007
    advisor_checkpoint: Path | None = None
    fresh_advisor: bool = False
    write_timings: bool = True

    def __post_init__(self) -> None:
        if self.mode not in ("solo", "transfer", "paired"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.transport not in ("inProcess", "loopbackHttp"):
            raise ValueError(f"unknown transport {self.transport!r}")
        if self.advisor_mode not in ("frozen", "learning"):
            raise ValueError(f"unknown advisor mode {self.advisor_mode!r}")
        if self.reward_window > self.episodes:
            raise ValueError("reward_window cannot exceed episodes")
        self.output_dir = Path(self.output_dir)

    @property
    def repetitions(self) -> int:
        return len(self.seeds)

    def arms(self) -> list[str]:
        return {"solo": ["solo"], "transfer": ["transfer"],
                "paired": ["transfer", "solo"]}[self.mode]


@dataclass
class MetricsSummary:
    episodes: int
    undiscounted_return: float
    discounted_return: float
    episodes_to_threshold: int | None
    total_wall_time: float
    advice_asked: int = 0
    advice_followed: int = 0


def compute_metrics(records: Sequence[EpisodeRecord], window: int = 100,
                    threshold: float = 0.6, eval_gamma: float = 0.9) -> MetricsSummary:
    """Per-arm metrics.

    ``episodes_to_threshold`` is the 1-based count of episodes played when the
    trailing ``window``-episode mean reward first reaches ``threshold``.
    """
    if not records:
        raise ValueError("no episodes to summarise")
    rewards = [r.reward for r in records]
    discounted = sum(r.reward * eval_gamma ** max(r.steps - 1, 0) for r in records)
    reached = None
    running = sum(rewards[:window])
    for end in range(window, len(rewards) + 1):
        if end > window:
            running += rewards[end - 1] - rewards[end - 1 - window]
        # compare with a small tolerance: the running sum accumulates float error
        if running / window >= threshold - 1e-12:
            reached = end
            break
    return MetricsSummary(
        episodes=len(records),
        undiscounted_return=float(sum(rewards)),
        discounted_return=discounted,
        episodes_to_threshold=reached,
        total_wall_time=sum(r.wall_ms for r in records) / 1000.0,
        advice_asked=sum(r.advice_asked for r in records),
        advice_followed=sum(r.advice_followed for r in records),
    )


# -- CSV ----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_episode_csv(path: Path, records: Iterable[EpisodeRecord], with_wall: bool = False) -> None:
    cols = AGENT_CSV_COLUMNS if with_wall else EPISODE_COLUMNS
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            row = [r.index, r.outcome.value, _fmt(r.reward), r.steps, r.advice_asked,
                   r.advice_followed]
            if with_wall:
                row.append(f"{r.wall_ms:.3f}")
            w.writerow(row)


def read_episode_csv(path: Path) -> list[EpisodeRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            EpisodeRecord(int(row["index"]), Outcome(row["outcome"]), float(row["reward"]),
                          int(row["steps"]), int(row["advice_asked"]),
                          int(row["advice_followed"]), float(row.get("wall_ms") or 0.0))
            for row in csv.DictReader(fh)
        ]


def _write_timing_csv(path: Path, records: Iterable[EpisodeRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "wall_ms"])
        for r in records:
            w.writerow([r.index, f"{r.wall_ms:.3f}"])


# -- wiring -------------------------------------------------------------------

class World:
    """One TTT service plus any number of agents on a shared transport."""

    def __init__(self, transport: str = "inProcess"):
        self.kind = transport
        self.transport = InProcessTransport() if transport == "inProcess" else HttpTransport()
        self._service: ServerHandle | None = None
        self._slots: dict[str, DeferredApp] = {}
        self._listeners: dict[str, Listener] = {}

    def add_service(self, config: ServiceConfig) -> TTTService:
        if self.kind == "inProcess":
            config.public_url = "http://ttt.local"
            svc = TTTService(config)
            self.transport.mount(svc.root, svc)
        else:
            svc = TTTService(config)
            self._service = serve(svc)
            svc.set_public_url(self._service.url)
        return svc

    def reserve(self, iri: str) -> str:
        """Endpoint base URL for agent ``iri``, usable before the agent exists."""
        if self.kind == "inProcess":
            self._slots[iri] = DeferredApp()
            self.transport.mount(iri, self._slots[iri])
            return iri
        self._listeners[iri] = Listener()
        return self._listeners[iri].url

    def attach(self, agent: Agent) -> None:
        iri = agent.config.agent_iri
        if self.kind == "inProcess":
            self._slots[iri].app = agent.endpoints()
        else:
            self._listeners[iri].attach(agent)

    def kill_agent(self, iri: str) -> None:
        if self.kind == "inProcess":
            self.transport.unmount(iri)
        else:
            self._listeners.pop(iri).close()

    def close(self) -> None:
        if self._service is not None:
            self._service.close()
            self._service = None
        for listener in self._listeners.values():
            listener.close()
        self._listeners.clear()


def _service_config(cfg: ExperimentConfig, seed: int) -> ServiceConfig:
    return ServiceConfig(bot=cfg.bot, rng_seed=seed, max_sessions=512)


def train_solo(episodes: int, seed: int, hp: HyperParams | None = None,
               bot: BotKind = BotKind.HEURISTIC, transport: str = "inProcess",
               use_symmetry: bool = False, policy: QTable | None = None,
               iri: str = SOLO_IRI) -> tuple[Agent, list[EpisodeRecord]]:
    world = World(transport)
    try:
        svc = world.add_service(ServiceConfig(bot=bot, rng_seed=seed, max_sessions=512))
        agent = Agent(AgentConfig(iri, svc.root, episodes=episodes,
                                  hyper_params=hp or HyperParams(), use_symmetry=use_symmetry,
                                  rng_seed=seed), world.transport, policy=policy)
        return agent, agent.run_training(episodes)
    finally:
        world.close()


def greedy_win_rate(policy: QTable, games: int, seed: int, bot: BotKind = BotKind.RANDOM,
                    use_symmetry: bool = False) -> float:
    """Win rate of pure greedy play with learning stopped (policy untouched)."""
    world = World("inProcess")
    svc = world.add_service(ServiceConfig(bot=bot, rng_seed=seed, max_sessions=512))
    agent = Agent(AgentConfig(SOLO_IRI, svc.root, use_symmetry=use_symmetry, rng_seed=seed),
                  world.transport, policy=policy)
    previous = policy.run_state
    policy.set_run_state(RunState.STOPPED)
    episodes_before = policy.episode_count
    try:
        wins = sum(agent.run_episode(epsilon=0.0).outcome is Outcome.WIN for _ in range(games))
    finally:
        policy.set_run_state(previous)
        policy.episode_count = episodes_before
    return wins / games


def pretrain_advisor(cfg: ExperimentConfig) -> Path:
    """Train (or reuse) the advisor policy checkpoint."""
    path = cfg.advisor_checkpoint or cfg.output_dir / "advisor.qtable"
    path = Path(path)
    if path.exists() and not cfg.fresh_advisor:
        _, header = QTable.load(path)
        if int(header.get("episodes", -1)) == cfg.advisor_pretrain_episodes:
            log.info("reusing advisor checkpoint %s", path)
            return path
    path.parent.mkdir(parents=True, exist_ok=True)
    log.info("pretraining advisor for %d episodes", cfg.advisor_pretrain_episodes)
    try:
        agent, _ = train_solo(cfg.advisor_pretrain_episodes, cfg.advisor_seed, cfg.hyper_params,
                              cfg.bot, cfg.transport, cfg.advisor_symmetry, iri=ADVISOR_IRI)
    except Aborted as exc:
        raise LaunchFailure(f"advisor pretraining aborted: {exc}") from exc
    agent.policy.save(path, cfg.hyper_params, symmetry=int(cfg.advisor_symmetry),
                      seed=cfg.advisor_seed)
    return path


def run_arm(cfg: ExperimentConfig, seed: int, arm: str,
            advisor_checkpoint: Path | None = None,
            kill_advisor_after: int | None = None) -> tuple[list[EpisodeRecord], dict]:
    """Run one arm for one seed. Returns the records and protocol counters."""
    world = World(cfg.transport)
    stop = threading.Event()
    advisor_thread = None
    info: dict = {}
    try:
        svc = world.add_service(_service_config(cfg, seed))
        config = AgentConfig(
            ADVISEE_IRI if arm == "transfer" else SOLO_IRI, svc.root,
            episodes=cfg.episodes, hyper_params=cfg.hyper_params,
            use_symmetry=cfg.use_symmetry, transfer=cfg.transfer, rng_seed=seed,
        )
        advisor = None
        if arm == "transfer":
            if advisor_checkpoint is None:
                raise LaunchFailure("transfer arm needs an advisor checkpoint")
            policy, _ = QTable.load(advisor_checkpoint)
            policy.episode_count = 0
            advisor = Agent(AgentConfig(ADVISOR_IRI, svc.root, hyper_params=cfg.hyper_params,
                                        use_symmetry=cfg.advisor_symmetry, transfer=cfg.transfer,
                                        rng_seed=cfg.advisor_seed + seed),
                            world.transport, policy=policy)
            config.advisor_iri = ADVISOR_IRI
            config.advisor_url = world.reserve(ADVISOR_IRI) + "message"
            world.attach(advisor)
            config.listen_url = world.reserve(ADVISEE_IRI)
            if cfg.advisor_mode == "learning":
                advisor_thread = threading.Thread(
                    target=_train_until, args=(advisor, stop), daemon=True, name="advisor")
                advisor_thread.start()
        agent = Agent(config, world.transport)
        if arm == "transfer":
            world.attach(agent)

        def on_episode(rec: EpisodeRecord) -> None:
            if kill_advisor_after is not None and rec.index + 1 == kill_advisor_after:
                world.kill_agent(ADVISOR_IRI)

        try:
            records = agent.run_training(cfg.episodes, on_episode=on_episode)
        except Aborted as exc:
            records = exc.records
            info["aborted"] = str(exc)
        client = agent.advice_client
        if client is not None:
            info.update(ask_remaining=client.ask.remaining, requests_sent=client.requests_sent,
                        timeouts=client.timeouts, waited_s=client.waited)
        if advisor is not None:
            info.update(give_remaining=advisor.advice_server.give.remaining,
                        served=advisor.advice_server.served)
        info["http_errors"] = dict(agent.http_errors)
        return records, info
    finally:
        stop.set()
        if advisor_thread is not None:
            advisor_thread.join(timeout=10)
        world.close()


def _train_until(agent: Agent, stop: threading.Event) -> None:
    while not stop.is_set():
        try:
            agent.run_training(10, stop=stop)
        except Exception:  # the service may be shutting down under us
            if not stop.is_set():
                log.exception("advisor training failed")
            return


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every arm for every seed, writing CSVs and a manifest.

    Returns ``{"per_seed": {seed: {arm: MetricsSummary}}, "summary": {...}}``.
    """
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in asdict(cfg).items()
                   if k not in ("hyper_params", "transfer", "bot")},
        "hyper_params": asdict(cfg.hyper_params),
        "transfer": asdict(cfg.transfer),
        "bot": cfg.bot.value,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    checkpoint = None
    if "transfer" in cfg.arms():
        checkpoint = pretrain_advisor(cfg)
        manifest["advisor_checkpoint"] = str(checkpoint)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")

    per_seed: dict[int, dict[str, MetricsSummary]] = {}
    protocol: dict[int, dict[str, dict]] = {}
    try:
        for seed in cfg.seeds:
            for arm in cfg.arms():
                records, info = run_arm(cfg, seed, arm, checkpoint)
                write_episode_csv(out / f"seed{seed}_{arm}_episodes.csv", records)
                if cfg.write_timings:
                    _write_timing_csv(out / f"seed{seed}_{arm}_timing.csv", records)
                if "aborted" in info:
                    raise LaunchFailure(f"seed {seed} arm {arm}: {info['aborted']}")
                per_seed.setdefault(seed, {})[arm] = compute_metrics(
                    records, cfg.reward_window, cfg.reward_threshold, cfg.eval_gamma)
                protocol.setdefault(seed, {})[arm] = info
    finally:
        _write_aggregate(out, per_seed)
    summary = _write_summary(out, per_seed, cfg.arms())
    manifest["protocol"] = {str(s): v for s, v in protocol.items()}
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return {"per_seed": per_seed, "summary": summary, "protocol": protocol}


def _write_aggregate(out: Path, per_seed: dict[int, dict[str, MetricsSummary]]) -> None:
    with open(out / "aggregate.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for seed, arms in per_seed.items():
            for arm, m in arms.items():
                w.writerow([seed, arm, m.episodes, _fmt(m.undiscounted_return),
                            _fmt(m.discounted_return),
                            "" if m.episodes_to_threshold is None else m.episodes_to_threshold,
                            f"{m.total_wall_time:.3f}", m.advice_asked, m.advice_followed])


def _write_summary(out: Path, per_seed: dict[int, dict[str, MetricsSummary]],
                   arms: list[str]) -> dict[str, dict[str, dict[str, float]]]:
    summary: dict[str, dict[str, dict[str, float]]] = {}
    rows = []
    for arm in arms:
        ms = [per_seed[s][arm] for s in per_seed if arm in per_seed[s]]
        if not ms:
            continue
        reached = [m.episodes_to_threshold for m in ms if m.episodes_to_threshold is not None]
        cols = {
            "undiscounted_return": [m.undiscounted_return for m in ms],
            "discounted_return": [m.discounted_return for m in ms],
            "episodes_to_threshold": [float(x) for x in reached],
            "total_wall_s": [m.total_wall_time for m in ms],
        }
        stats = {}
        for name, fn in (("mean", statistics.fmean),
                         ("stddev", lambda v: statistics.stdev(v) if len(v) > 1 else 0.0)):
            stats[name] = {k: (fn(v) if v else float("nan")) for k, v in cols.items()}
            stats[name]["reached"] = len(reached)
            rows.append([arm, name, *(f"{stats[name][k]:.6g}" for k in
                                      ("undiscounted_return", "discounted_return",
                                       "episodes_to_threshold")),
                         len(reached), f"{stats[name]['total_wall_s']:.3f}"])
        summary[arm] = stats
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        w.writerows(rows)
    return summary
