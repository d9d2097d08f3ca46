"""The Tic-Tac-Toe hypermedia API.

Routes, relative to the configured base path::

    GET  /                  entry point (registration form)
    POST /Register          {"@id": agent IRI} -> 201 board representation
    GET  /Board?id=g        board with one PUT form per legal move
    PUT  /SquareRC?id=g     {"@id": agent IRI}; bot replies in the same call
    GET  /Result?id=g       result; also writes <exportDir>/<g>.ttl
    GET  /ontology/{fipa|transfer|ttt}
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
import tempfile
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from . import game
from .game import BotKind, BotStrategy, GameState, Mark, Square, Status
from .hypermedia import JSON_LD, IRI, Form, Link, Representation, serialize
from .rdf import RDF_TYPE, Literal, TripleSet, serialize_turtle
from .transport import Response
from .vocab import DEFAULT_ONTOLOGY_BASE, RDF, WOT, XSD, UnknownOntology, Vocabulary

log = logging.getLogger(__name__)

_SQUARE_ROUTE = re.compile(r"^/Square([1-3])([1-3])$")


@dataclass
class ServiceConfig:
    public_url: str = "http://localhost:8080"
    base_path: str = ""
    bot: BotKind = BotKind.HEURISTIC
    agent_moves_first: bool = True
    export_dir: Path | None = None
    rng_seed: int = 0
    max_sessions: int = 10_000
    ontology_base: str | None = None

    def __post_init__(self) -> None:
        bp = self.base_path.strip("/")
        self.base_path = f"/{bp}" if bp else ""
        self.public_url = self.public_url.rstrip("/")
        if self.export_dir is not None:
            self.export_dir = Path(self.export_dir)

    @property
    def root(self) -> str:
        return f"{self.public_url}{self.base_path}/"


@dataclass
class GameSession:
    game_id: str
    state: GameState
    agent_mark: Mark
    agent_iri: str
    bot: BotStrategy
    graph: TripleSet = field(default_factory=TripleSet)
    created_at: float = field(default_factory=time.time)
    moves_recorded: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def agents_turn(self) -> bool:
        return self.state.status is Status.IN_PROGRESS and self.state.to_move is self.agent_mark


class TTTService:
    """Transport-independent request handler for the game API."""

    def __init__(self, config: ServiceConfig | None = None, vocab: Vocabulary | None = None):
        self.config = config or ServiceConfig()
        self.vocab = vocab or Vocabulary(self.config.ontology_base or DEFAULT_ONTOLOGY_BASE)
        self.context = self.vocab.ttt_context()
        self._sessions: OrderedDict[str, GameSession] = OrderedDict()
        self._registry_lock = threading.Lock()
        self._ids = random.Random(self.config.rng_seed)
        self._games_created = 0
        if self.config.export_dir is not None:
            self.config.export_dir.mkdir(parents=True, exist_ok=True)

    # -- URLs and IRIs ------------------------------------------------------

    @property
    def root(self) -> str:
        return self.config.root

    def set_public_url(self, url: str) -> None:
        """Fix the public origin once the listening socket is known."""
        self.config.public_url = url.rstrip("/")

    def _url(self, resource: str, gid: str | None = None) -> str:
        return f"{self.root}{resource}" + (f"?id={gid}" if gid else "")

    def game_iri(self, gid: str) -> str:
        return f"{self.root}games/{gid}"

    def role_iri(self, gid: str, mark: Mark) -> str:
        return f"{self.game_iri(gid)}/roles/{mark.value}"

    def _square_iri(self, gid: str, sq: Square) -> str:
        return f"{self.game_iri(gid)}/squares/{sq.name}"

    # -- dispatch -----------------------------------------------------------

    def handle(self, method: str, target: str, body: bytes) -> Response:
        parts = urlsplit(target)
        path = parts.path
        bp = self.config.base_path
        if bp:
            if not (path == bp or path.startswith(bp + "/")):
                return Response.error(404, "not found")
            path = path[len(bp):]
        path = path or "/"
        query = parse_qs(parts.query)
        gid = query.get("id", [None])[0]

        if path.startswith("/ontology/"):
            if method != "GET":
                return Response.error(405, "method not allowed")
            try:
                doc = self.vocab.ontology_document(path[len("/ontology/"):])
            except UnknownOntology:
                return Response.error(404, "unknown ontology")
            return Response(200, doc, "text/turtle")

        routes = {
            ("GET", "/"): lambda: self.entry_point(),
            ("POST", "/Register"): lambda: self.register(body),
            ("GET", "/Board"): lambda: self.board(gid),
            ("GET", "/Result"): lambda: self.result(gid),
        }
        m = _SQUARE_ROUTE.match(path)
        if m and method == "PUT":
            return self.move(gid, Square(int(m.group(1)), int(m.group(2))), body)
        handler = routes.get((method, path))
        if handler is None:
            if m or any(p == path for _, p in routes):
                return Response.error(405, "method not allowed")
            return Response.error(404, "not found")
        return handler()

    def _doc(self, rep: Representation, status: int = 200) -> Response:
        return Response(status, serialize(rep, self.vocab), JSON_LD)

    def _session(self, gid: str | None) -> GameSession | None:
        if gid is None:
            return None
        with self._registry_lock:
            return self._sessions.get(gid)

    # -- resources ----------------------------------------------------------

    def entry_point(self) -> Response:
        rep = Representation(self.context, id=self.root)
        rep.links.append(Link(self.root, "GET"))
        rep.forms.append(Form(self._url("Register"), "POST",
                              operation=self.vocab.ttt("register"), fields=("@id",)))
        return self._doc(rep)

    def register(self, body: bytes) -> Response:
        try:
            agent_iri = json.loads(body or b"{}").get("@id")
        except (ValueError, AttributeError):
            agent_iri = None
        if not isinstance(agent_iri, str) or not agent_iri:
            return Response.error(400, "MissingAgentId")

        with self._registry_lock:
            if len(self._sessions) >= self.config.max_sessions and not self._evict_one():
                return Response.error(503, "session capacity reached")
            index = self._games_created
            self._games_created += 1
            gid = f"id{self._ids.getrandbits(48):012x}"
            while gid in self._sessions:
                gid = f"id{self._ids.getrandbits(48):012x}"
            agent_mark = Mark.X if self.config.agent_moves_first else Mark.O
            session = GameSession(
                game_id=gid,
                state=game.new_game(),
                agent_mark=agent_mark,
                agent_iri=agent_iri,
                bot=BotStrategy(self.config.bot, self.config.rng_seed * 1_000_003 + index),
            )
            self._sessions[gid] = session

        with session.lock:
            self._seed_graph(session)
            if not session.agents_turn:
                self._bot_reply(session)
            resp = self._doc(self._board_rep(session), 201)
        resp.headers["Location"] = self._url("Board", gid)
        return resp

    def _evict_one(self) -> bool:
        # Oldest finished session goes first; live games are never evicted.
        for gid, s in self._sessions.items():
            if s.state.status is not Status.IN_PROGRESS:
                del self._sessions[gid]
                return True
        return False

    def board(self, gid: str | None) -> Response:
        session = self._session(gid)
        if session is None:
            return Response.error(404, "UnknownGame")
        with session.lock:
            return self._doc(self._board_rep(session))

    def move(self, gid: str | None, square: Square, body: bytes) -> Response:
        session = self._session(gid)
        if session is None:
            return Response.error(404, "UnknownGame")
        try:
            agent_iri = json.loads(body or b"{}").get("@id")
        except (ValueError, AttributeError):
            agent_iri = None
        if agent_iri != session.agent_iri:
            return Response.error(400, "body must carry the registered agent @id")
        with session.lock:
            if not session.agents_turn:
                return Response.error(409, "IllegalMove: not the agent's turn")
            try:
                self._play(session, square, session.agent_mark)
            except game.IllegalMove as exc:
                return Response.error(409, f"IllegalMove: {exc}")
            if session.state.status is Status.IN_PROGRESS:
                self._bot_reply(session)
            return self._doc(self._board_rep(session))

    def result(self, gid: str | None) -> Response:
        session = self._session(gid)
        if session is None:
            return Response.error(404, "UnknownGame")
        with session.lock:
            if session.state.status is Status.IN_PROGRESS:
                return Response.error(409, "GameInProgress")
            gid = session.game_id
            outcome = self._outcome_iri(session)
            session.graph.add(self.game_iri(gid), self.vocab.ttt("hasResult"), outcome)
            rep = Representation(self.context, id=self._url("Result", gid))
            rep.properties[self.vocab.ttt("gameId")] = gid
            rep.properties[self.vocab.ttt("status")] = session.state.status.value
            rep.properties[self.vocab.ttt("hasResult")] = IRI(outcome)
            rep.links += [Link(self.root), Link(self._url("Board", gid))]
            if self.config.export_dir is not None:
                self._export(session)
            return self._doc(rep)

    # -- internals ----------------------------------------------------------

    def _outcome_iri(self, session: GameSession) -> str:
        winner = session.state.winner
        if winner is None:
            return self.vocab.ttt("Draw")
        return self.role_iri(session.game_id, winner)

    def _board_rep(self, session: GameSession) -> Representation:
        gid = session.game_id
        state = session.state
        t = self.vocab.ttt
        rep = Representation(self.context, id=self._url("Board", gid))
        rep.properties[t("gameId")] = gid
        rep.properties[t("board")] = state.board
        rep.properties[t("toMove")] = state.to_move.value
        rep.properties[t("status")] = state.status.value
        rep.properties[t("agentRole")] = IRI(self.role_iri(gid, session.agent_mark))
        rep.properties[t("agentMark")] = session.agent_mark.value
        rep.links += [Link(self.root), Link(self._url("Board", gid))]
        if state.status is not Status.IN_PROGRESS:
            result_url = self._url("Result", gid)
            rep.properties[t("result")] = IRI(result_url)
            rep.links.append(Link(result_url))
        elif session.agents_turn:
            write = WOT + "writeproperty"
            for sq in sorted(game.legal_moves(state)):
                rep.forms.append(Form(self._url(sq.name, gid), "PUT",
                                      operation=write, fields=("@id",)))
        return rep

    def _seed_graph(self, session: GameSession) -> None:
        g, t, gid = session.graph, self.vocab.ttt, session.game_id
        game_node = self.game_iri(gid)
        g.add(game_node, RDF_TYPE, t("Game"))
        g.add(game_node, t("gameId"), Literal(gid))
        for mark in (Mark.X, Mark.O):
            role = self.role_iri(gid, mark)
            g.add(role, RDF_TYPE, t("PlayerRole"))
            g.add(role, t("hasMark"), Literal(mark.value))
            g.add(game_node, t("hasPlayerRole"), role)
        g.add(self.role_iri(gid, session.agent_mark), t("playedBy"), session.agent_iri)
        for sq in game.SQUARES:
            node = self._square_iri(gid, sq)
            g.add(node, RDF_TYPE, t("Square"))
            g.add(node, t("row"), Literal.of(sq.row))
            g.add(node, t("column"), Literal.of(sq.col))
            g.add(game_node, t("hasSquare"), node)

    def _play(self, session: GameSession, square: Square, mark: Mark) -> None:
        session.state = game.apply_move(session.state, square, mark)
        session.moves_recorded += 1
        g, t, gid = session.graph, self.vocab.ttt, session.game_id
        n = session.moves_recorded
        move = f"{self.game_iri(gid)}/moves/{n}"
        g.add(move, RDF_TYPE, t("Move"))
        g.add(move, t("inSquare"), self._square_iri(gid, square))
        g.add(move, t("moveTakenBy"), self.role_iri(gid, mark))
        g.add(move, t("moveIndex"), Literal.of(n))
        g.add(self.game_iri(gid), t("hasMove"), move)

    def _bot_reply(self, session: GameSession) -> None:
        sq = game.bot_move(session.state, session.bot)
        self._play(session, sq, session.state.to_move)

    def turtle(self, gid: str) -> str:
        session = self._session(gid)
        if session is None:
            raise KeyError(gid)
        return serialize_turtle(session.graph, self.turtle_prefixes())

    def turtle_prefixes(self) -> dict[str, str]:
        return {"ttt": self.vocab.namespaces["ttt"], "rdf": RDF, "xsd": XSD}

    def graph(self, gid: str) -> TripleSet:
        session = self._session(gid)
        if session is None:
            raise KeyError(gid)
        return session.graph

    def _export(self, session: GameSession) -> None:
        assert self.config.export_dir is not None
        text = serialize_turtle(session.graph, self.turtle_prefixes())
        dest = self.config.export_dir / f"{session.game_id}.ttl"
        fd, tmp = tempfile.mkstemp(dir=self.config.export_dir, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, dest)
