"""Tic-Tac-Toe rules and the built-in game bot.

Everything here is transport-free and immutable: operations return new
``GameState`` values, so states can be shared between threads freely.
"""

from __future__ import annotations

import enum
import random
import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence


class IllegalMove(Exception):
    """Occupied square, wrong turn, or a finished game."""


class NoMovesAvailable(Exception):
    pass


class Mark(enum.Enum):
    X = "X"
    O = "O"
    EMPTY = "-"

    @property
    def opponent(self) -> "Mark":
        if self is Mark.X:
            return Mark.O
        if self is Mark.O:
            return Mark.X
        raise ValueError("EMPTY has no opponent")


class Status(enum.Enum):
    IN_PROGRESS = "InProgress"
    WON_BY_X = "WonByX"
    WON_BY_O = "WonByO"
    DRAW = "Draw"


_SQUARE_NAME = re.compile(r"Square([1-3])([1-3])$")


class Square(NamedTuple):
    row: int
    col: int

    @property
    def index(self) -> int:
        return (self.row - 1) * 3 + (self.col - 1)

    @property
    def name(self) -> str:
        return f"Square{self.row}{self.col}"

    @classmethod
    def from_index(cls, index: int) -> "Square":
        return SQUARES[index]

    @classmethod
    def from_name(cls, name: str) -> "Square":
        """Parse ``Square12`` (or any string ending in it, e.g. a URL path)."""
        m = _SQUARE_NAME.search(name)
        if m is None:
            raise ValueError(f"not a square name: {name!r}")
        return cls(int(m.group(1)), int(m.group(2)))


SQUARES: tuple[Square, ...] = tuple(Square(r, c) for r in (1, 2, 3) for c in (1, 2, 3))

WIN_LINES: tuple[tuple[int, int, int], ...] = (
    (0, 1, 2), (3, 4, 5), (6, 7, 8),
    (0, 3, 6), (1, 4, 7), (2, 5, 8),
    (0, 4, 8), (2, 4, 6),
)


def line_owner(cells: Sequence[Mark]) -> Mark | None:
    for a, b, c in WIN_LINES:
        m = cells[a]
        if m is not Mark.EMPTY and m is cells[b] and m is cells[c]:
            return m
    return None


def compute_status(cells: Sequence[Mark]) -> Status:
    owner = line_owner(cells)
    if owner is Mark.X:
        return Status.WON_BY_X
    if owner is Mark.O:
        return Status.WON_BY_O
    if Mark.EMPTY not in cells:
        return Status.DRAW
    return Status.IN_PROGRESS


@dataclass(frozen=True)
class GameState:
    cells: tuple[Mark, ...]
    to_move: Mark = Mark.X
    status: Status = Status.IN_PROGRESS
    history: tuple[tuple[Square, Mark], ...] = ()

    def __getitem__(self, square: Square) -> Mark:
        return self.cells[square.index]

    @property
    def board(self) -> str:
        """Row-major 9-character board, e.g. ``"X---O----"``."""
        return "".join(m.value for m in self.cells)

    @property
    def winner(self) -> Mark | None:
        if self.status is Status.WON_BY_X:
            return Mark.X
        if self.status is Status.WON_BY_O:
            return Mark.O
        return None

    @classmethod
    def from_moves(cls, moves: Iterable[Square | tuple[int, int]]) -> "GameState":
        """Replay alternating moves (X first) from an empty board."""
        state = new_game()
        for sq in moves:
            state = apply_move(state, Square(*sq), state.to_move)
        return state

    @classmethod
    def from_board(cls, board: str) -> "GameState":
        """Build a state from a 9-char board string.

        The history is synthesised (X and O moves interleaved in index order),
        so it is only meaningful for cell-level reasoning.
        """
        if len(board) != 9:
            raise ValueError(f"board must have 9 cells, got {len(board)}")
        cells = tuple(Mark(ch) for ch in board)
        xs = [SQUARES[i] for i, m in enumerate(cells) if m is Mark.X]
        os_ = [SQUARES[i] for i, m in enumerate(cells) if m is Mark.O]
        if len(xs) - len(os_) not in (0, 1):
            raise ValueError(f"impossible mark counts in {board!r}")
        history: list[tuple[Square, Mark]] = []
        for i, sq in enumerate(xs):
            history.append((sq, Mark.X))
            if i < len(os_):
                history.append((os_[i], Mark.O))
        to_move = Mark.X if len(xs) == len(os_) else Mark.O
        return cls(cells, to_move, compute_status(cells), tuple(history))


def new_game() -> GameState:
    return GameState(cells=(Mark.EMPTY,) * 9)


def legal_moves(state: GameState) -> frozenset[Square]:
    if state.status is not Status.IN_PROGRESS:
        return frozenset()
    return frozenset(SQUARES[i] for i, m in enumerate(state.cells) if m is Mark.EMPTY)


def apply_move(state: GameState, square: Square, mark: Mark) -> GameState:
    if state.status is not Status.IN_PROGRESS:
        raise IllegalMove(f"game is over ({state.status.value})")
    if mark is not state.to_move:
        raise IllegalMove(f"it is {state.to_move.value}'s turn, not {mark.value}'s")
    if state.cells[square.index] is not Mark.EMPTY:
        raise IllegalMove(f"{square.name} is occupied")
    cells = list(state.cells)
    cells[square.index] = mark
    cells_t = tuple(cells)
    return GameState(
        cells=cells_t,
        to_move=mark.opponent,
        status=compute_status(cells_t),
        history=state.history + ((square, mark),),
    )


class BotKind(enum.Enum):
    RANDOM = "random"
    HEURISTIC = "heuristic"


@dataclass(frozen=True)
class BotStrategy:
    kind: BotKind = BotKind.HEURISTIC
    rng_seed: int = 0


def winning_squares(cells: Sequence[Mark], mark: Mark) -> list[Square]:
    """Empty squares that would complete a line for ``mark``."""
    found = set()
    for line in WIN_LINES:
        vals = [cells[i] for i in line]
        if vals.count(mark) == 2 and vals.count(Mark.EMPTY) == 1:
            found.add(line[vals.index(Mark.EMPTY)])
    return [SQUARES[i] for i in sorted(found)]


def bot_move(state: GameState, strategy: BotStrategy) -> Square:
    if state.status is not Status.IN_PROGRESS:
        raise NoMovesAvailable(state.status.value)
    legal = sorted(legal_moves(state))
    # Seeded from (seed, history) so the choice is a pure function of both.
    rng = random.Random(f"{strategy.rng_seed}:{state.board}:{len(state.history)}")
    if strategy.kind is BotKind.HEURISTIC:
        me = state.to_move
        wins = winning_squares(state.cells, me)
        if wins:
            return rng.choice(wins)
        blocks = winning_squares(state.cells, me.opponent)
        if blocks:
            return rng.choice(blocks)
    return rng.choice(legal)


def reachable_positions() -> dict[str, Status]:
    """Every reachable board string mapped to its status."""
    start = new_game()
    out = {start.board: start.status}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        if state.status is not Status.IN_PROGRESS:
            continue
        for sq in legal_moves(state):
            nxt = apply_move(state, sq, state.to_move)
            if nxt.board not in out:
                out[nxt.board] = nxt.status
                queue.append(nxt)
    return out


def enumerate_reachable_states() -> tuple[int, int]:
    """Count distinct positions reachable from the empty board.

    Returns ``(legal positions, terminal positions)``; the empty board counts.
    """
    positions = reachable_positions()
    terminal = sum(1 for st in positions.values() if st is not Status.IN_PROGRESS)
    return len(positions), terminal
