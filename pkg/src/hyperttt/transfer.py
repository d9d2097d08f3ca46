"""Advisor/advisee action advising over FIPA-ACL style JSON-LD messages.

An advisee POSTs a ``request`` to the advisor's ``/message`` endpoint and
gets a bare 202. The advisor dereferences the board URL named in the
request, looks the state up in its own policy and POSTs an ``inform`` (a
recommended square plus a normalised score) or a ``failure`` to the
request's ``reply-to`` URL, echoing the conversation id.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable
from urllib.parse import urlsplit

from . import hypermedia
from .game import Mark, Square, Status
from .policy import Policy, canonicalize
from .transport import Response, Transport, TransportError
from .vocab import Vocabulary

log = logging.getLogger(__name__)

PERFORMATIVES = ("request", "inform", "failure")
FAILURE_REASONS = ("UnknownState", "BudgetExhausted", "Malformed")


class MalformedMessage(ValueError):
    pass


@dataclass(frozen=True)
class TransferConfig:
    ask_budget: int = 500
    give_budget: int = 500
    score_threshold: float = 0.5
    reply_timeout: float = 0.5
    max_retries: int = 1

    def __post_init__(self) -> None:
        if self.ask_budget < 0 or self.give_budget < 0 or self.max_retries < 0:
            raise ValueError("budgets and retries must be non-negative")
        if not 0 <= self.score_threshold <= 1:
            raise ValueError("score_threshold must be in [0, 1]")


class Budget:
    """Thread-safe countdown that never goes below zero."""

    def __init__(self, initial: int):
        self._remaining = initial
        self.initial = initial
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return self._remaining

    def decrement(self) -> int:
        with self._lock:
            if self._remaining > 0:
                self._remaining -= 1
            return self._remaining

    def try_consume(self) -> bool:
        with self._lock:
            if self._remaining <= 0:
                return False
            self._remaining -= 1
            return True


# -- messages -----------------------------------------------------------------

@dataclass
class AclMessage:
    performative: str
    sender: str
    receiver: str
    conversation_id: str
    ontology: str
    content: dict[str, Any] = field(default_factory=dict)
    reply_to: str | None = None

    def __post_init__(self) -> None:
        if self.performative not in PERFORMATIVES:
            raise MalformedMessage(f"unsupported performative {self.performative!r}")
        if not self.conversation_id:
            raise MalformedMessage("empty conversation id")
        if self.performative == "request" and not self.reply_to:
            raise MalformedMessage("request without reply-to")

    def to_json(self) -> dict:
        body: dict[str, Any] = {"fipa:sender": self.sender, "fipa:receiver": self.receiver}
        if self.reply_to is not None:
            body["fipa:reply-to"] = self.reply_to
        body["fipa:conversation-id"] = self.conversation_id
        body["fipa:ontology"] = self.ontology
        body["fipa:content"] = self.content
        return {f"fipa:{self.performative}": body}

    def serialize(self) -> str:
        return json.dumps(self.to_json(), indent=4, ensure_ascii=False)

    @classmethod
    def from_json(cls, doc: Any) -> "AclMessage":
        if not isinstance(doc, dict):
            raise MalformedMessage("message is not an object")
        envelopes = [k for k in doc if k.startswith("fipa:")]
        if len(envelopes) != 1:
            raise MalformedMessage("expected exactly one fipa:<performative> key")
        key = envelopes[0]
        body = doc[key]
        if not isinstance(body, dict):
            raise MalformedMessage("envelope is not an object")
        try:
            return cls(
                performative=key[len("fipa:"):],
                sender=body["fipa:sender"],
                receiver=body["fipa:receiver"],
                reply_to=body.get("fipa:reply-to"),
                conversation_id=body["fipa:conversation-id"],
                ontology=body["fipa:ontology"],
                content=body.get("fipa:content", {}),
            )
        except KeyError as exc:
            raise MalformedMessage(f"missing {exc.args[0]}") from None

    @classmethod
    def parse(cls, text: str | bytes) -> "AclMessage":
        try:
            doc = json.loads(text)
        except ValueError as exc:
            raise MalformedMessage(f"not JSON: {exc}") from exc
        return cls.from_json(doc)

    def entry(self) -> dict[str, Any]:
        """The content object addressed to a single agent, whichever it is."""
        for value in self.content.values():
            if isinstance(value, dict):
                return value
        return {}


def build_advice_request(sender: str, receiver: str, reply_to: str, state_url: str,
                         conversation_id: str, vocab: Vocabulary) -> AclMessage:
    return AclMessage(
        performative="request",
        sender=sender,
        receiver=receiver,
        reply_to=reply_to,
        conversation_id=conversation_id,
        ontology=vocab.ontology_iri("transfer"),
        content={receiver: {"tf:Query": "tf:Action", "tf:hasState": state_url}},
    )


def _reply(request: AclMessage, performative: str, payload: dict[str, Any]) -> AclMessage:
    return AclMessage(
        performative=performative,
        sender=request.receiver,
        receiver=request.sender,
        conversation_id=request.conversation_id,
        ontology=request.ontology,
        content={request.sender: payload},
    )


def inform(request: AclMessage, square: Square, score: float) -> AclMessage:
    return _reply(request, "inform", {"tf:RecommendedAction": square.name, "tf:hasScore": score})


def failure(request: AclMessage, reason: str) -> AclMessage:
    assert reason in FAILURE_REASONS
    return _reply(request, "failure", {"tf:Reason": f"tf:{reason}"})


@dataclass(frozen=True)
class AdviceReply:
    square: Square | None = None
    score: float | None = None
    reason: str | None = None

    @property
    def recommended(self) -> bool:
        return self.square is not None

    @classmethod
    def from_message(cls, msg: AclMessage) -> "AdviceReply":
        entry = msg.entry()
        if msg.performative == "inform":
            try:
                square = Square.from_name(str(entry["tf:RecommendedAction"]))
                score = float(entry["tf:hasScore"])
            except (KeyError, ValueError, TypeError) as exc:
                raise MalformedMessage(f"bad inform content: {exc}") from None
            if not 0.0 <= score <= 1.0:
                raise MalformedMessage(f"score {score} outside [0, 1]")
            return cls(square=square, score=score)
        if msg.performative == "failure":
            reason = str(entry.get("tf:Reason", "tf:Malformed")).removeprefix("tf:")
            return cls(reason=reason)
        raise MalformedMessage(f"{msg.performative} is not a reply")


class CommunicationStore:
    """Append-only record of every message sent or received."""

    def __init__(self) -> None:
        self._log: list[tuple[float, str, dict]] = []
        self._lock = threading.Lock()

    def append(self, direction: str, msg: AclMessage) -> None:
        with self._lock:
            self._log.append((time.time(), direction, msg.to_json()))

    def __len__(self) -> int:
        return len(self._log)

    def entries(self) -> list[tuple[float, str, dict]]:
        with self._lock:
            return list(self._log)

    def export(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for ts, direction, doc in self.entries():
                fh.write(json.dumps({"time": ts, "direction": direction, "message": doc}) + "\n")


# -- advisor side -------------------------------------------------------------

class AdviceServer:
    """Answers advice requests from a policy, within a give budget."""

    def __init__(self, agent_iri: str, policy: Policy, transport: Transport,
                 cfg: TransferConfig | None = None, use_symmetry: bool = False,
                 vocab: Vocabulary | None = None, comms: CommunicationStore | None = None):
        self.agent_iri = agent_iri
        self.policy = policy
        self.transport = transport
        self.cfg = cfg or TransferConfig()
        self.use_symmetry = use_symmetry
        self.vocab = vocab or Vocabulary()
        self.comms = comms if comms is not None else CommunicationStore()
        self.give = Budget(self.cfg.give_budget)
        self.served = 0
        self._served_lock = threading.Lock()

    def serve(self, msg: AclMessage) -> AclMessage:
        """Build the inform/failure reply for one request (no delivery)."""
        if msg.performative != "request":
            return failure(msg, "Malformed")
        if self.give.remaining <= 0:
            return failure(msg, "BudgetExhausted")
        state_url = msg.entry().get("tf:hasState")
        if not isinstance(state_url, str):
            return failure(msg, "Malformed")
        try:
            resp = self.transport.request("GET", state_url)
            if resp.status != 200:
                return failure(msg, "Malformed")
            rep = hypermedia.parse(resp.body, state_url)
            t = self.vocab.ttt
            board = rep.get(t("board"))
            to_move = Mark(rep.get(t("toMove")))
            status = Status(rep.get(t("status")))
            if not isinstance(board, str) or len(board) != 9 or to_move is Mark.EMPTY:
                raise ValueError("bad board")
        except (TransportError, hypermedia.MalformedDocument, ValueError, TypeError):
            return failure(msg, "Malformed")
        if status is not Status.IN_PROGRESS:
            return failure(msg, "UnknownState")

        key, to_board = canonicalize(board, to_move, self.use_symmetry)
        to_canon = {b: c for c, b in to_board.items()}
        legal = [Square.from_index(i) for i, ch in enumerate(board) if ch == "-"]
        best = self.policy.best_advised_action(key, [to_canon[sq] for sq in legal])
        if best is None:
            return failure(msg, "UnknownState")
        if not self.give.try_consume():
            return failure(msg, "BudgetExhausted")
        with self._served_lock:
            self.served += 1
        action, score = best
        return inform(msg, to_board[action], score)

    def handle_request(self, msg: AclMessage) -> None:
        """Serve and deliver the reply to ``msg.reply_to``."""
        reply = self.serve(msg)
        self.comms.append("out", reply)
        try:
            resp = self.transport.request("POST", msg.reply_to, reply.to_json(),
                                          timeout=self.cfg.reply_timeout * 4)
            if resp.status >= 300:
                log.warning("reply to %s rejected with %s", msg.reply_to, resp.status)
        except TransportError as exc:
            log.warning("could not deliver reply to %s: %s", msg.reply_to, exc)


# -- advisee side -------------------------------------------------------------

class _Pending:
    __slots__ = ("event", "reply")

    def __init__(self) -> None:
        self.event = threading.Event()
        self.reply: AclMessage | None = None


class AdviceClient:
    """Sends advice requests and waits for the asynchronous replies."""

    def __init__(self, agent_iri: str, advisor_iri: str, advisor_url: str, reply_to: str,
                 transport: Transport, cfg: TransferConfig | None = None,
                 vocab: Vocabulary | None = None, comms: CommunicationStore | None = None):
        self.agent_iri = agent_iri
        self.advisor_iri = advisor_iri
        self.advisor_url = advisor_url
        self.reply_to = reply_to
        self.transport = transport
        self.cfg = cfg or TransferConfig()
        self.vocab = vocab or Vocabulary()
        self.comms = comms if comms is not None else CommunicationStore()
        self.ask = Budget(self.cfg.ask_budget)
        self.requests_sent = 0
        self.timeouts = 0
        self.waited = 0.0
        self._pending: dict[str, _Pending] = {}
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        tag = urlsplit(agent_iri).netloc or agent_iri
        self._conv_prefix = f"{tag}-{uuid.uuid4().hex[:12]}"

    def on_reply(self, msg: AclMessage) -> bool:
        """Match a reply to its outstanding request; unknown ids are dropped."""
        with self._lock:
            pending = self._pending.get(msg.conversation_id)
            if pending is None or pending.reply is not None:
                log.info("ignoring reply for unknown conversation %s", msg.conversation_id)
                return False
            pending.reply = msg
        self.comms.append("in", msg)
        pending.event.set()
        return True

    def request_advice(self, state_url: str, legal: set[Square] | frozenset[Square]) -> Square | None:
        """Ask once (plus retries). Every failure path returns None."""
        if self.ask.remaining <= 0:
            return None
        self.ask.decrement()
        conv = f"{self._conv_prefix}-{next(self._ids)}"
        pending = _Pending()
        with self._lock:
            self._pending[conv] = pending
        msg = build_advice_request(self.agent_iri, self.advisor_iri, self.reply_to,
                                   state_url, conv, self.vocab)
        self.comms.append("out", msg)
        start = time.monotonic()
        try:
            for _ in range(self.cfg.max_retries + 1):
                deadline = time.monotonic() + self.cfg.reply_timeout
                try:
                    self.requests_sent += 1
                    resp = self.transport.request("POST", self.advisor_url, msg.to_json(),
                                                  timeout=self.cfg.reply_timeout)
                    if resp.status >= 300:
                        continue
                except TransportError:
                    continue
                if pending.event.wait(max(0.0, deadline - time.monotonic())):
                    break
                self.timeouts += 1
        finally:
            with self._lock:
                self._pending.pop(conv, None)
            self.waited += time.monotonic() - start

        if pending.reply is None:
            return None
        try:
            reply = AdviceReply.from_message(pending.reply)
        except MalformedMessage:
            return None
        if not reply.recommended or reply.score < self.cfg.score_threshold:
            return None
        if reply.square not in legal:
            return None
        return reply.square


class AgentEndpoints:
    """The HTTP face of an agent: ``POST /message`` and ``POST /response``.

    ``dispatch`` decides where advice requests are processed; the default
    runs them inline (deterministic, used in-process), while a served agent
    passes an executor's ``submit`` so the 202 goes back immediately.
    """

    def __init__(self, server: AdviceServer | None, client: AdviceClient | None,
                 dispatch: Callable[[Callable[[], None]], Any] | None = None):
        self.server = server
        self.client = client
        self.dispatch = dispatch or (lambda fn: fn())

    def handle(self, method: str, target: str, body: bytes) -> Response:
        path = urlsplit(target).path.rstrip("/")
        if method != "POST" or not (path.endswith("/message") or path.endswith("/response")):
            return Response.error(404, "not found")
        try:
            msg = AclMessage.parse(body)
        except MalformedMessage as exc:
            return Response.error(400, str(exc))
        if path.endswith("/message"):
            if self.server is None or msg.performative != "request":
                return Response.error(400, "expected a request")
            self.server.comms.append("in", msg)
            self.dispatch(lambda: self.server.handle_request(msg))
            return Response(202, json.dumps({"accepted": msg.conversation_id}), "application/json")
        if self.client is not None:
            self.client.on_reply(msg)
        return Response(200, json.dumps({"ok": True}), "application/json")
