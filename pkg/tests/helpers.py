"""Small clients used across tests to drive the service by hand."""

from __future__ import annotations

import json

from hyperttt import hypermedia
from hyperttt.game import Square, winning_squares, Mark
from hyperttt.vocab import Vocabulary

VOCAB = Vocabulary()
T = VOCAB.ttt


def call(transport, method, url, body=None):
    resp = transport.request(method, url, body)
    return resp, (hypermedia.parse(resp.body, url) if resp.status < 400 else None)


def register(transport, entry, agent="http://agent.test/"):
    _, rep = call(transport, "GET", entry)
    form = rep.forms[0]
    resp, board = call(transport, form.method, form.href, {"@id": agent})
    assert resp.status == 201, resp.body
    return board


def move_forms(rep):
    return {Square.from_name(f.href.split("?")[0]): f for f in rep.forms}


def greedy_square(rep) -> Square:
    """Win if possible, else the lowest legal square."""
    cells = [Mark(ch) for ch in rep.get(T("board"))]
    mine = Mark(rep.get(T("agentMark")))
    legal = sorted(move_forms(rep))
    wins = [sq for sq in winning_squares(cells, mine) if sq in legal]
    return wins[0] if wins else legal[0]


def play_game(transport, entry, agent="http://agent.test/", chooser=greedy_square):
    """Play to the end; returns (final board rep, result rep, squares played)."""
    rep = register(transport, entry, agent)
    played = []
    while rep.forms:
        sq = chooser(rep)
        form = move_forms(rep)[sq]
        resp, rep = call(transport, form.method, form.href, {"@id": agent})
        assert resp.status == 200, resp.body
        played.append(sq)
    _, result = call(transport, "GET", rep.get(T("result")))
    return rep, result, played


def body(resp):
    return json.loads(resp.body)
