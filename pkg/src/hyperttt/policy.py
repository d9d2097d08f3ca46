"""Reinforcement learning policies.

:class:`Policy` is the algorithm-neutral surface the agent runtime talks to;
:class:`QTable` implements it with one-step tabular Q-learning. State keys
are 9-character strings over ``M`` (learner), ``T`` (opponent) and ``-``.
"""

from __future__ import annotations

import abc
import bisect
import enum
import math
import random
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .game import SQUARES, GameState, Mark, Square

StateKey = str
TERMINAL = None


class NoLegalActions(ValueError):
    pass


class EmptyPolicy(ValueError):
    pass


class RunState(enum.Enum):
    RUNNING = "running"
    PAUSED = "paused"
    STOPPED = "stopped"


@dataclass(frozen=True)
class HyperParams:
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon_start: float = 0.3
    epsilon_decay: float = 0.999
    epsilon_min: float = 0.01
    reward_win: float = 1.0
    reward_loss: float = -1.0
    reward_draw: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0 < self.epsilon_decay <= 1:
            raise ValueError(f"epsilon_decay must be in (0, 1], got {self.epsilon_decay}")
        if not 0 <= self.epsilon_min <= self.epsilon_start <= 1:
            raise ValueError("need 0 <= epsilon_min <= epsilon_start <= 1")

    def epsilon(self, episodes_done: int) -> float:
        return max(self.epsilon_min, self.epsilon_start * self.epsilon_decay ** episodes_done)


# -- state canonicalisation ---------------------------------------------------

def _dihedral_perms() -> list[tuple[int, ...]]:
    maps = [
        lambda r, c: (r, c),
        lambda r, c: (c, 2 - r),
        lambda r, c: (2 - r, 2 - c),
        lambda r, c: (2 - c, r),
        lambda r, c: (r, 2 - c),
        lambda r, c: (2 - r, c),
        lambda r, c: (c, r),
        lambda r, c: (2 - c, 2 - r),
    ]
    perms = []
    for f in maps:
        # canonical cell i shows board cell perm[i]
        perms.append(tuple(3 * f(i // 3, i % 3)[0] + f(i // 3, i % 3)[1] for i in range(9)))
    return perms


DIHEDRAL = _dihedral_perms()
IDENTITY_MAP: Mapping[Square, Square] = {sq: sq for sq in SQUARES}
_RELABEL = {
    Mark.X: {"X": "M", "O": "T", "-": "-"},
    Mark.O: {"X": "T", "O": "M", "-": "-"},
}
# Symmetry picks the minimum under the alphabet order M < T < -.
_RANK = str.maketrans("MT-", "012")


def _board_string(board: GameState | Sequence[Mark] | str) -> str:
    if isinstance(board, GameState):
        return board.board
    if isinstance(board, str):
        return board
    return "".join(m.value for m in board)


def canonicalize(board: GameState | Sequence[Mark] | str, my_mark: Mark,
                 use_symmetry: bool = False) -> tuple[StateKey, Mapping[Square, Square]]:
    """State key for ``board`` from ``my_mark``'s point of view.

    The returned map takes canonical-space squares to board-space squares
    (identity without symmetry reduction). With symmetry on, the key is the
    lexicographic minimum (ordering M < T < -) over the eight
    rotations/reflections.
    """
    relabel = _RELABEL[my_mark]
    key = "".join(relabel[ch] for ch in _board_string(board))
    if not use_symmetry:
        return key, IDENTITY_MAP
    ranked = key.translate(_RANK)
    best_perm = min(DIHEDRAL, key=lambda perm: "".join(ranked[j] for j in perm))
    best = "".join(key[j] for j in best_perm)
    return best, {SQUARES[i]: SQUARES[best_perm[i]] for i in range(9)}


# -- policies -----------------------------------------------------------------

class Policy(abc.ABC):
    """What the agent runtime needs from a learning algorithm."""

    run_state: RunState = RunState.RUNNING
    episode_count: int = 0

    @abc.abstractmethod
    def select_action(self, s: StateKey, legal: Iterable[Square], epsilon: float,
                      rng: random.Random) -> Square: ...

    @abc.abstractmethod
    def update(self, s: StateKey, a: Square, reward: float, s_next: StateKey | None,
               legal_next: Iterable[Square], hp: HyperParams) -> float: ...

    @abc.abstractmethod
    def stored(self, s: StateKey) -> dict[Square, float]:
        """Action values actually learned for ``s``."""

    @abc.abstractmethod
    def best_advised_action(self, s: StateKey,
                            legal: Iterable[Square]) -> tuple[Square, float] | None: ...

    def set_run_state(self, rs: RunState) -> RunState:
        self.run_state = rs
        return rs


class QTable(Policy):
    """Tabular action values with absent entries reading as 0.

    One writer (the learning loop) and any number of readers may use the
    table at once; a single lock keeps each read or write atomic, and a
    sorted copy of all stored values gives the global min/max in O(1).
    """

    def __init__(self) -> None:
        self._q: dict[StateKey, dict[Square, float]] = {}
        self._sorted: list[float] = []
        self._lock = threading.Lock()
        self.run_state = RunState.RUNNING
        self.episode_count = 0

    def __len__(self) -> int:
        return len(self._sorted)

    def value(self, s: StateKey, a: Square) -> float:
        return self._q.get(s, {}).get(a, 0.0)

    def stored(self, s: StateKey) -> dict[Square, float]:
        with self._lock:
            return dict(self._q.get(s, {}))

    def items(self) -> list[tuple[StateKey, Square, float]]:
        with self._lock:
            return [(s, a, v) for s, row in self._q.items() for a, v in row.items()]

    def set_value(self, s: StateKey, a: Square, v: float) -> None:
        if not math.isfinite(v):
            raise ValueError(f"non-finite Q value {v!r}")
        with self._lock:
            self._set(s, a, v)

    def _set(self, s: StateKey, a: Square, v: float) -> None:
        row = self._q.setdefault(s, {})
        old = row.get(a)
        if old is not None:
            del self._sorted[bisect.bisect_left(self._sorted, old)]
        row[a] = v
        bisect.insort(self._sorted, v)

    def select_action(self, s: StateKey, legal: Iterable[Square], epsilon: float,
                      rng: random.Random) -> Square:
        actions = sorted(legal)
        if not actions:
            raise NoLegalActions(s)
        if rng.random() < epsilon:
            return rng.choice(actions)
        row = self._q.get(s, {})
        best = max(row.get(a, 0.0) for a in actions)
        top = [a for a in actions if row.get(a, 0.0) == best]
        return top[0] if len(top) == 1 else rng.choice(top)

    def update(self, s: StateKey, a: Square, reward: float, s_next: StateKey | None,
               legal_next: Iterable[Square], hp: HyperParams) -> float:
        """One-step Q-learning backup; no-op unless running."""
        with self._lock:
            old = self._q.get(s, {}).get(a, 0.0)
            if self.run_state is not RunState.RUNNING:
                return old
            bootstrap = 0.0
            if s_next is not TERMINAL:
                row = self._q.get(s_next, {})
                nxt = [row.get(b, 0.0) for b in legal_next]
                bootstrap = max(nxt) if nxt else 0.0
            new = old + hp.alpha * (reward + hp.gamma * bootstrap - old)
            self._set(s, a, new)
            return new

    def _score(self, v: float) -> float:
        if not self._sorted:
            raise EmptyPolicy("no stored values")
        lo, hi = self._sorted[0], self._sorted[-1]
        if hi == lo:
            return 0.5
        # absent entries read as 0, which may sit outside the stored range
        return min(1.0, max(0.0, (v - lo) / (hi - lo)))

    def normalized_score(self, s: StateKey, a: Square) -> float:
        """Min-max normalise Q(s, a) over every stored value in the table."""
        with self._lock:
            return self._score(self._q.get(s, {}).get(a, 0.0))

    def best_advised_action(self, s: StateKey,
                            legal: Iterable[Square]) -> tuple[Square, float] | None:
        with self._lock:
            row = self._q.get(s, {})
            known = [(a, row[a]) for a in sorted(legal) if a in row]
            if not known:
                return None
            best = max(known, key=lambda av: av[1])
            return best[0], self._score(best[1])

    def min_max(self) -> tuple[float, float]:
        with self._lock:
            if not self._sorted:
                raise EmptyPolicy("no stored values")
            return self._sorted[0], self._sorted[-1]

    # -- checkpoints -------------------------------------------------------

    def save(self, path: str | Path, hp: HyperParams, **extra: object) -> None:
        """Flat text: ``#`` header lines, then ``statekey RC value`` per entry."""
        header = {**asdict(hp), "episodes": self.episode_count, **extra}
        lines = ["# hyperttt-qtable 1"]
        lines += [f"# {k}={v}" for k, v in header.items()]
        for s, a, v in sorted(self.items()):
            lines.append(f"{s} {a.row}{a.col} {v!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> tuple["QTable", dict[str, str]]:
        q = cls()
        header: dict[str, str] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            if line.startswith("#"):
                k, sep, v = line[1:].strip().partition("=")
                if sep:
                    header[k] = v
                continue
            parts = line.split()
            if len(parts) != 3 or len(parts[0]) != 9 or len(parts[1]) != 2:
                raise ValueError(f"{path}:{lineno}: bad checkpoint line {line!r}")
            q._set(parts[0], Square(int(parts[1][0]), int(parts[1][1])), float(parts[2]))
        q.episode_count = int(header.get("episodes", 0))
        return q, header


def hyperparams_from_header(header: Mapping[str, str]) -> HyperParams:
    fields = HyperParams.__dataclass_fields__
    return HyperParams(**{k: float(v) for k, v in header.items() if k in fields})
