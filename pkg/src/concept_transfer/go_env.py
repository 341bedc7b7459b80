"""Go 7x7 rules engine.

Area (Tromp-Taylor) scoring, single-point ko plus positional superko,
player-relative observation planes and two scripted opponents.

Points are indexed row-major 0..48; action 49 is pass.  States are
immutable; ``apply`` returns a new state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np

SIZE = 7
NUM_POINTS = SIZE * SIZE
PASS = NUM_POINTS
NUM_ACTIONS = NUM_POINTS + 1

EMPTY, BLACK, WHITE = 0, 1, 2
KOMI = 8.5
MAX_MOVES = 500

_CHARS = {EMPTY: ".", BLACK: "X", WHITE: "O"}
_FROM_CHAR = {v: k for k, v in _CHARS.items()}


def _neighbors(p: int) -> tuple[int, ...]:
    r, c = divmod(p, SIZE)
    out = []
    if r > 0:
        out.append(p - SIZE)
    if r < SIZE - 1:
        out.append(p + SIZE)
    if c > 0:
        out.append(p - 1)
    if c < SIZE - 1:
        out.append(p + 1)
    return tuple(out)


NEIGHBORS = tuple(_neighbors(p) for p in range(NUM_POINTS))

# Zobrist keys; index 0 (empty) is all zeros so empty points never contribute.
_zrng = np.random.Generator(np.random.PCG64(0x60B0A7D))
ZOBRIST = tuple(
    (0, int(a), int(b))
    for a, b in _zrng.integers(1, 2**63 - 1, size=(NUM_POINTS, 2), dtype=np.int64)
)
del _zrng


def other(color: int) -> int:
    return BLACK + WHITE - color


def position_hash(stones) -> int:
    h = 0
    for p, v in enumerate(stones):
        if v:
            h ^= ZOBRIST[p][v]
    return h


class IllegalMove(ValueError):
    """Raised by ``apply`` for a rejected action.

    ``reason`` is one of occupied, suicide, ko, superko, terminal.
    """

    def __init__(self, reason: str, action: int):
        super().__init__(f"illegal move {action}: {reason}")
        self.reason = reason
        self.action = action


class GameOver(ValueError):
    pass


class Group(NamedTuple):
    color: int
    stones: tuple[int, ...]
    liberties: frozenset


@dataclass(frozen=True)
class BoardState:
    stones: tuple[int, ...]
    to_move: int = BLACK
    ko_point: int | None = None
    consecutive_passes: int = 0
    move_count: int = 0
    position_history: tuple[int, ...] = ()
    _seen: frozenset = field(default=frozenset(), repr=False, compare=False)

    @property
    def board_hash(self) -> int:
        return self.position_history[-1]

    @property
    def terminal(self) -> bool:
        return self.consecutive_passes >= 2 or self.move_count >= MAX_MOVES

    @cached_property
    def _group_index(self) -> tuple[list[int], list[Group]]:
        stones = self.stones
        gid = [-1] * NUM_POINTS
        groups: list[Group] = []
        for p in range(NUM_POINTS):
            color = stones[p]
            if color == EMPTY or gid[p] >= 0:
                continue
            idx = len(groups)
            members = [p]
            gid[p] = idx
            libs = set()
            i = 0
            while i < len(members):
                for n in NEIGHBORS[members[i]]:
                    v = stones[n]
                    if v == EMPTY:
                        libs.add(n)
                    elif v == color and gid[n] < 0:
                        gid[n] = idx
                        members.append(n)
                i += 1
            groups.append(Group(color, tuple(members), frozenset(libs)))
        return gid, groups

    def groups(self) -> list[Group]:
        return self._group_index[1]

    def group_at(self, p: int) -> Group | None:
        gid, groups = self._group_index
        return groups[gid[p]] if gid[p] >= 0 else None

    @cached_property
    def _legality(self) -> tuple[str | None, ...]:
        return tuple(_move_status(self, p) for p in range(NUM_POINTS))

    def __str__(self) -> str:
        return format_board(self)


def _state(stones, to_move, ko_point, passes, move_count, history, seen) -> BoardState:
    return BoardState(tuple(stones), to_move, ko_point, passes, move_count, history, seen)


def new_game() -> BoardState:
    return _state([EMPTY] * NUM_POINTS, BLACK, None, 0, 0, (0,), frozenset((0,)))


def _move_status(s: BoardState, p: int) -> str | None:
    """Legality of a board move from the cached group table; None when legal."""
    stones = s.stones
    if stones[p] != EMPTY:
        return "occupied"
    color = s.to_move
    gid, groups = s._group_index
    safe = False
    captured: list[int] = []
    seen_groups = set()
    for n in NEIGHBORS[p]:
        v = stones[n]
        if v == EMPTY:
            safe = True
            continue
        g = gid[n]
        if g in seen_groups:
            continue
        seen_groups.add(g)
        libs = groups[g].liberties
        if v == color:
            if len(libs) > 1:
                safe = True
        elif len(libs) == 1:
            captured.extend(groups[g].stones)
    if captured:
        safe = True
    if not safe:
        return "suicide"
    if p == s.ko_point:
        return "ko"
    h = s.board_hash ^ ZOBRIST[p][color]
    opp = other(color)
    for q in captured:
        h ^= ZOBRIST[q][opp]
    if h in s._seen:
        return "superko"
    return None


def move_status(s: BoardState, a: int) -> str | None:
    """Reason code why ``a`` is illegal in ``s``, or None if it is legal."""
    if s.terminal:
        return "terminal"
    if a == PASS:
        return None
    return s._legality[a]


def legal_mask(s: BoardState) -> np.ndarray:
    if s.terminal:
        raise GameOver("game over")
    mask = np.ones(NUM_ACTIONS, dtype=bool)
    mask[:NUM_POINTS] = [r is None for r in s._legality]
    return mask


def legal_board_moves(s: BoardState) -> list[int]:
    return [p for p, r in enumerate(s._legality) if r is None]


def _diagonals(p: int) -> tuple[int, ...]:
    r, c = divmod(p, SIZE)
    return tuple(
        (r + dr) * SIZE + c + dc
        for dr in (-1, 1) for dc in (-1, 1)
        if 0 <= r + dr < SIZE and 0 <= c + dc < SIZE
    )


DIAGONALS = tuple(_diagonals(p) for p in range(NUM_POINTS))


def is_own_eye(s: BoardState, p: int, color: int | None = None) -> bool:
    """True single-point eye of ``color`` (default: the player to move).

    Every orthogonal neighbour is own stone, and the opponent holds no
    diagonal on the edge, at most one in the centre.
    """
    color = s.to_move if color is None else color
    stones = s.stones
    if stones[p] != EMPTY or any(stones[n] != color for n in NEIGHBORS[p]):
        return False
    diag = DIAGONALS[p]
    bad = sum(stones[d] == other(color) for d in diag)
    return bad == 0 if len(diag) < 4 else bad <= 1


def candidate_moves(s: BoardState) -> list[int]:
    """Legal board moves that do not fill one of the mover's own eyes."""
    return [p for p in legal_board_moves(s) if not is_own_eye(s, p)]


def _flood(board: list[int], start: int) -> tuple[list[int], set[int]]:
    color = board[start]
    members = [start]
    seen = {start}
    libs: set[int] = set()
    i = 0
    while i < len(members):
        for n in NEIGHBORS[members[i]]:
            v = board[n]
            if v == EMPTY:
                libs.add(n)
            elif v == color and n not in seen:
                seen.add(n)
                members.append(n)
        i += 1
    return members, libs


def apply(s: BoardState, a: int) -> BoardState:
    if s.terminal:
        raise IllegalMove("terminal", a)
    if not 0 <= a < NUM_ACTIONS:
        raise ValueError(f"action out of range: {a}")
    color = s.to_move
    if a == PASS:
        return _state(s.stones, other(color), None, s.consecutive_passes + 1,
                      s.move_count + 1, s.position_history, s._seen)
    if s.stones[a] != EMPTY:
        raise IllegalMove("occupied", a)
    board = list(s.stones)
    board[a] = color
    opp = other(color)
    captured: list[int] = []
    for n in NEIGHBORS[a]:
        if board[n] == opp:
            members, libs = _flood(board, n)
            if not libs:
                for q in members:
                    board[q] = EMPTY
                captured.extend(members)
    own, own_libs = _flood(board, a)
    if not own_libs:
        raise IllegalMove("suicide", a)
    if a == s.ko_point:
        raise IllegalMove("ko", a)
    h = position_hash(board)
    if h in s._seen:
        raise IllegalMove("superko", a)
    ko = None
    if len(captured) == 1 and len(own) == 1 and own_libs == {captured[0]}:
        ko = captured[0]
    return _state(board, opp, ko, 0, s.move_count + 1,
                  s.position_history + (h,), s._seen | {h})


def score(s: BoardState, komi: float = KOMI) -> tuple[float, float, int]:
    """Area score of a finished game: (black_points, white_points, winner)."""
    if not s.terminal:
        raise GameOver("game not finished")
    black, white = area_counts(s.stones)
    white_total = white + komi
    if black == white_total:
        # only reachable with an integer komi
        return float(black), float(white_total), EMPTY
    return float(black), float(white_total), BLACK if black > white_total else WHITE


def area_counts(stones) -> tuple[int, int]:
    counts = {BLACK: 0, WHITE: 0}
    seen = [False] * NUM_POINTS
    for p in range(NUM_POINTS):
        v = stones[p]
        if v != EMPTY:
            counts[v] += 1
            continue
        if seen[p]:
            continue
        region = [p]
        seen[p] = True
        borders = set()
        i = 0
        while i < len(region):
            for n in NEIGHBORS[region[i]]:
                v = stones[n]
                if v == EMPTY:
                    if not seen[n]:
                        seen[n] = True
                        region.append(n)
                else:
                    borders.add(v)
            i += 1
        if len(borders) == 1:
            counts[borders.pop()] += len(region)
    return counts[BLACK], counts[WHITE]


def observe(s: BoardState) -> np.ndarray:
    """7x7x3 planes: to-move stones, opponent stones, empty points."""
    stones = np.asarray(s.stones, dtype=np.int8).reshape(SIZE, SIZE)
    obs = np.empty((SIZE, SIZE, 3), dtype=np.float32)
    obs[..., 0] = stones == s.to_move
    obs[..., 1] = stones == other(s.to_move)
    obs[..., 2] = stones == EMPTY
    return obs


# ---------------------------------------------------------------- opponents

Player = Callable[[BoardState, np.random.Generator], int]


def heuristic_opponent(s: BoardState, rng: np.random.Generator) -> int:
    """Four-rule scripted player.

    1. capture the largest opponent group in atari;
    2. extend an own group out of atari (only if the extension has two or
       more liberties);
    3. otherwise maximise own liberties gained plus opponent liberties
       removed;
    4. pass only when no candidate board move remains.
    Filling an own true eye is never a candidate.  Ties are broken
    uniformly with ``rng``.
    """
    legal = candidate_moves(s)
    if not legal:
        return PASS
    legal_set = set(legal)
    color = s.to_move
    groups = s.groups()

    captures: dict[int, int] = {}
    for g in groups:
        if g.color != color and len(g.liberties) == 1:
            (lib,) = g.liberties
            if lib in legal_set:
                captures[lib] = captures.get(lib, 0) + len(g.stones)
    if captures:
        best = max(captures.values())
        return _pick(rng, sorted(p for p, n in captures.items() if n == best))

    escapes = set()
    for g in groups:
        if g.color == color and len(g.liberties) == 1:
            (lib,) = g.liberties
            if lib in legal_set and len(_liberties_after(s, lib)[0]) >= 2:
                escapes.add(lib)
    if escapes:
        return _pick(rng, sorted(escapes))

    best_score = None
    best: list[int] = []
    for p in legal:
        libs_after, friend_libs, n_opp = _liberties_after(s, p)
        value = len(libs_after) - friend_libs + n_opp
        if best_score is None or value > best_score:
            best_score, best = value, [p]
        elif value == best_score:
            best.append(p)
    return _pick(rng, best)


def _liberties_after(s: BoardState, p: int) -> tuple[set[int], int, int]:
    """Liberties of the group formed by playing p (captures ignored), the
    summed liberty count of the friendly groups it joins, and the number
    of distinct adjacent opponent groups."""
    color = s.to_move
    gid, groups = s._group_index
    libs = set()
    friend_libs = 0
    opp_groups = set()
    friends = set()
    for n in NEIGHBORS[p]:
        v = s.stones[n]
        if v == EMPTY:
            libs.add(n)
        elif v == color:
            if gid[n] not in friends:
                friends.add(gid[n])
                libs |= groups[gid[n]].liberties
                friend_libs += len(groups[gid[n]].liberties)
        else:
            opp_groups.add(gid[n])
    libs.discard(p)
    return libs, friend_libs, len(opp_groups)


def random_opponent(s: BoardState, rng: np.random.Generator) -> int:
    """Uniform over legal board moves that do not fill an own eye; passes
    only when none exists."""
    legal = candidate_moves(s)
    if not legal:
        return PASS
    return _pick(rng, legal)


def _pick(rng: np.random.Generator, options: list[int]) -> int:
    if len(options) == 1:
        return options[0]
    return options[int(rng.integers(len(options)))]


def play_game(
    black: Player,
    white: Player,
    rng: np.random.Generator,
    on_move: Callable[[BoardState, int], None] | None = None,
    start: BoardState | None = None,
) -> BoardState:
    """Play to the end (two passes or the move cap) and return the final state."""
    s = new_game() if start is None else start
    while not s.terminal:
        player = black if s.to_move == BLACK else white
        a = player(s, rng)
        if on_move is not None:
            on_move(s, a)
        s = apply(s, a)
    return s


def game_rng(*key: int) -> np.random.Generator:
    """Independent random stream for one game, keyed by e.g. (base_seed, game_index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


# ---------------------------------------------------------------- diagrams

def parse_board(text: str) -> BoardState:
    """Build a state from a text diagram.

    Seven rows of seven characters from ``.XO`` (whitespace between
    characters is ignored), followed by a line ``X to move`` or
    ``O to move``.  Lines starting with ``#`` and blank lines are skipped.
    The resulting state has no ko point, no passes, and a history holding
    only the diagram position.
    """
    rows = []
    to_move = None
    for raw in text.strip().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.endswith("to move"):
            who = line.split()[0]
            if who not in ("X", "O"):
                raise ValueError(f"bad to-move line: {raw!r}")
            to_move = _FROM_CHAR[who]
            continue
        row = line.replace(" ", "")
        if len(row) != SIZE or any(ch not in _FROM_CHAR for ch in row):
            raise ValueError(f"bad board row: {raw!r}")
        rows.append(row)
    if len(rows) != SIZE:
        raise ValueError(f"expected {SIZE} rows, got {len(rows)}")
    if to_move is None:
        raise ValueError("missing to-move line")
    stones = [_FROM_CHAR[ch] for row in rows for ch in row]
    h = position_hash(stones)
    return _state(stones, to_move, None, 0, 0, (h,), frozenset((h,)))


def format_board(s: BoardState) -> str:
    rows = ["".join(_CHARS[v] for v in s.stones[r * SIZE:(r + 1) * SIZE]) for r in range(SIZE)]
    rows.append(f"{_CHARS[s.to_move]} to move")
    return "\n".join(rows)


def point(row: int, col: int) -> int:
    return row * SIZE + col
