"""Game-playing agent.

The agent knows one URL, the API entry point. Everything else (the
registration form, move forms, board and result resources) is discovered
from the links and forms of the representations it receives.
"""

from __future__ import annotations

import enum
import logging
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

from . import hypermedia
from .game import Mark, Square
from .hypermedia import Form, Representation
from .policy import TERMINAL, HyperParams, Policy, QTable, RunState, canonicalize
from .transfer import (AdviceClient, AdviceServer, AgentEndpoints, CommunicationStore,
                       TransferConfig)
from .transport import DeferredApp, Transport, TransportError, serve
from .vocab import WOT, Vocabulary

log = logging.getLogger(__name__)


class ApiUnreachable(ConnectionError):
    pass


class ProtocolViolation(RuntimeError):
    """The service left out an affordance a conforming server must offer."""


class MalformedResult(ValueError):
    pass


class Aborted(RuntimeError):
    def __init__(self, message: str, records: list["EpisodeRecord"]):
        super().__init__(message)
        self.records = records


class Outcome(enum.Enum):
    WIN = "Win"
    LOSS = "Loss"
    DRAW = "Draw"


@dataclass(frozen=True)
class EpisodeRecord:
    index: int
    outcome: Outcome
    reward: float
    steps: int
    advice_asked: int = 0
    advice_followed: int = 0
    wall_ms: float = 0.0


@dataclass
class AgentConfig:
    agent_iri: str
    entry_url: str
    episodes: int = 1000
    hyper_params: HyperParams = field(default_factory=HyperParams)
    use_symmetry: bool = False
    transfer: TransferConfig = field(default_factory=TransferConfig)
    advisor_iri: str | None = None
    advisor_url: str | None = None
    # Base URL of this agent's own /message and /response endpoints.
    listen_url: str | None = None
    rng_seed: int = 0
    advice_margin: float = 0.05
    api_retries: int = 3
    api_backoff: float = 0.05
    episode_retries: int = 3

    @property
    def asks_for_advice(self) -> bool:
        return self.advisor_url is not None


@dataclass(frozen=True)
class Belief:
    kind: str  # formAction, link, boardState, result
    args: tuple
    source_url: str
    received_at: float


class BeliefStore:
    """Game beliefs. Affordances only ever reflect the latest representation."""

    _AFFORDANCES = ("formAction", "link", "boardState")

    def __init__(self) -> None:
        self._beliefs: list[Belief] = []

    def __iter__(self):
        return iter(list(self._beliefs))

    def observe(self, rep: Representation, url: str, board_iri: str) -> None:
        now = time.time()
        kept = [b for b in self._beliefs if b.kind not in self._AFFORDANCES]
        kept += [Belief("formAction", fa, url, now) for fa in
                 ((h, m, tuple(f)) for h, m, f in hypermedia.extract_form_actions(rep))]
        kept += [Belief("link", (l.href, l.method), url, now) for l in rep.links]
        board = rep.get(board_iri)
        if board is not None:
            kept.append(Belief("boardState", (board,), url, now))
        self._beliefs = kept

    def add(self, belief: Belief) -> None:
        self._beliefs.append(belief)

    def of_kind(self, kind: str) -> list[Belief]:
        return [b for b in self._beliefs if b.kind == kind]

    def form_actions(self) -> list[tuple[str, str, tuple[str, ...]]]:
        return [b.args for b in self.of_kind("formAction")]

    def clear(self) -> None:
        self._beliefs = []


def infer_outcome(result_rep: Representation, my_role: str, vocab: Vocabulary) -> Outcome:
    winner = result_rep.get(vocab.ttt("hasResult"))
    if not isinstance(winner, str):
        raise MalformedResult("result representation names no outcome")
    if winner == vocab.ttt("Draw"):
        return Outcome.DRAW
    return Outcome.WIN if winner == my_role else Outcome.LOSS


def infer_reward(result_rep: Representation, my_role: str, hp: HyperParams,
                 vocab: Vocabulary) -> float:
    outcome = infer_outcome(result_rep, my_role, vocab)
    return {Outcome.WIN: hp.reward_win, Outcome.LOSS: hp.reward_loss,
            Outcome.DRAW: hp.reward_draw}[outcome]


class Agent:
    """One learner: a policy, its beliefs, and optional advising links."""

    def __init__(self, config: AgentConfig, transport: Transport, policy: Policy | None = None,
                 vocab: Vocabulary | None = None):
        self.config = config
        self.transport = transport
        self.policy = policy if policy is not None else QTable()
        self.vocab = vocab or Vocabulary()
        self.rng = random.Random(config.rng_seed)
        self.beliefs = BeliefStore()
        self.comms = CommunicationStore()
        self.decay_steps = 0
        self.http_errors: dict[int, int] = {}
        self.on_put: Callable[[str, Representation], None] | None = None

        self.advice_server = AdviceServer(config.agent_iri, self.policy, transport,
                                          config.transfer, config.use_symmetry,
                                          self.vocab, self.comms)
        self.advice_client: AdviceClient | None = None
        if config.asks_for_advice:
            if config.listen_url is None:
                raise ValueError("an advisee needs listen_url for replies")
            self.advice_client = AdviceClient(
                config.agent_iri, config.advisor_iri or config.advisor_url,
                config.advisor_url, config.listen_url.rstrip("/") + "/response",
                transport, config.transfer, self.vocab, self.comms)

    def endpoints(self, dispatch=None) -> AgentEndpoints:
        return AgentEndpoints(self.advice_server, self.advice_client, dispatch)

    @property
    def epsilon(self) -> float:
        return self.config.hyper_params.epsilon(self.decay_steps)

    # -- HTTP ---------------------------------------------------------------

    def _call(self, method: str, url: str, body=None) -> Representation:
        last: Exception | None = None
        for attempt in range(self.config.api_retries + 1):
            if attempt:
                time.sleep(self.config.api_backoff * 2 ** (attempt - 1))
            try:
                resp = self.transport.request(method, url, body)
            except TransportError as exc:
                last = exc
                continue
            if resp.status >= 500:
                last = ApiUnreachable(f"{method} {url} -> {resp.status}")
                continue
            if resp.status >= 400:
                self.http_errors[resp.status] = self.http_errors.get(resp.status, 0) + 1
                raise ProtocolViolation(f"{method} {url} -> {resp.status}: {resp.body[:200]}")
            return hypermedia.parse(resp.body, url)
        raise ApiUnreachable(f"{method} {url} failed: {last}")

    def _submit(self, form: Form) -> Representation:
        # Fill exactly the fields the form asks for; "@id" is who we are.
        known = {"@id": self.config.agent_iri}
        body = {}
        for name in form.fields:
            if name not in known:
                raise ProtocolViolation(f"form asks for unknown field {name!r}")
            body[name] = known[name]
        return self._call(form.method, form.href, body)

    # -- decision making ----------------------------------------------------

    def advice_trigger(self, s: str, legal: list[Square]) -> bool:
        """Ask when the state is unvisited or its best value is near zero."""
        row = self.policy.stored(s)
        known = [row[a] for a in legal if a in row]
        if not known:
            return True
        return abs(max(known)) < self.config.advice_margin

    def _find_register_form(self, rep: Representation) -> Form:
        op = self.vocab.ttt("register")
        for form in rep.forms:
            if form.operation == op:
                return form
        posts = [f for f in rep.forms if f.method == "POST"]
        if len(posts) == 1:
            return posts[0]
        raise ProtocolViolation("entry point offers no registration form")

    def _move_forms(self, rep: Representation) -> dict[Square, Form]:
        moves = {}
        for form in rep.forms:
            if form.operation not in (None, WOT + "writeproperty"):
                continue
            try:
                sq = Square.from_name(form.href.split("?", 1)[0])
            except ValueError:
                continue
            moves[sq] = form
        return moves

    def run_episode(self, epsilon: float | None = None, index: int = 0) -> EpisodeRecord:
        cfg = self.config
        hp = cfg.hyper_params
        t = self.vocab.ttt
        eps = self.epsilon if epsilon is None else epsilon
        started = time.perf_counter()

        entry = self._call("GET", cfg.entry_url)
        rep = self._submit(self._find_register_form(entry))
        my_role = rep.get(t("agentRole"))
        try:
            my_mark = Mark(rep.get(t("agentMark")))
        except ValueError:
            raise ProtocolViolation("registration response names no agent mark") from None

        prev: tuple[str, Square] | None = None
        steps = asked = followed = 0
        try:
            while True:
                self.beliefs.observe(rep, rep.id or "", t("board"))
                moves = self._move_forms(rep)
                if not moves:
                    if rep.get(t("status")) == "InProgress":
                        raise ProtocolViolation("game in progress but no move forms offered")
                    break
                key, to_board = canonicalize(rep.get(t("board")), my_mark, cfg.use_symmetry)
                to_canon = {b: c for c, b in to_board.items()}
                legal = [to_canon[sq] for sq in moves]
                if prev is not None:
                    self.policy.update(prev[0], prev[1], 0.0, key, legal, hp)

                choice: Square | None = None
                client = self.advice_client
                if (client is not None and client.ask.remaining > 0
                        and self.advice_trigger(key, legal)):
                    asked += 1
                    choice = client.request_advice(rep.id, frozenset(moves))
                    if choice is not None:
                        followed += 1
                if choice is None:
                    action = self.policy.select_action(key, legal, eps, self.rng)
                    choice = to_board[action]
                else:
                    action = to_canon[choice]

                form = moves[choice]
                if self.on_put is not None:
                    self.on_put(form.href, rep)
                rep = self._submit(form)
                prev = (key, action)
                steps += 1

            result_url = rep.get(t("result"))
            if not isinstance(result_url, str):
                raise ProtocolViolation("finished board has no result link")
            result = self._call("GET", result_url)
            self.beliefs.add(Belief("result", (result.get(t("hasResult")),), result_url, time.time()))
            outcome = infer_outcome(result, my_role, self.vocab)
            reward = infer_reward(result, my_role, hp, self.vocab)
            if prev is not None:
                self.policy.update(prev[0], prev[1], reward, TERMINAL, (), hp)
        finally:
            self.beliefs.clear()
        self.policy.episode_count += 1
        return EpisodeRecord(index, outcome, reward, steps, asked, followed,
                             (time.perf_counter() - started) * 1000.0)

    def run_training(self, episodes: int | None = None,
                     on_episode: Callable[[EpisodeRecord], None] | None = None,
                     stop: threading.Event | None = None) -> list[EpisodeRecord]:
        """Play ``episodes`` games, decaying epsilon after each.

        An episode that fails with ApiUnreachable is retried after a backoff;
        once retries run out, Aborted carries the records gathered so far.
        """
        n = self.config.episodes if episodes is None else episodes
        records: list[EpisodeRecord] = []
        for i in range(n):
            if stop is not None and stop.is_set():
                break
            for attempt in range(self.config.episode_retries + 1):
                try:
                    rec = self.run_episode(index=i)
                    break
                except ApiUnreachable as exc:
                    log.warning("episode %d attempt %d: %s", i, attempt, exc)
                    if attempt == self.config.episode_retries:
                        raise Aborted(f"API unreachable at episode {i}", records) from exc
                    time.sleep(self.config.api_backoff * 2 ** attempt)
            records.append(rec)
            if self.policy.run_state is not RunState.STOPPED:
                self.decay_steps += 1
            if on_episode is not None:
                on_episode(rec)
        return records


class Listener:
    """HTTP listener for an agent's message endpoints.

    Bound before the agent exists so its URL can go into the agent's config.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0, workers: int = 8):
        self._slot = DeferredApp()
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="advice")
        self._handle = serve(self._slot, host, port)
        self.url = self._handle.url

    def attach(self, agent: Agent) -> None:
        self._slot.app = agent.endpoints(dispatch=self._pool.submit)

    def close(self) -> None:
        self._handle.close()
        self._pool.shutdown(wait=False, cancel_futures=True)
