"""Secret preparation codes and the states they prepare.

Each position of a sequence is fixed by two fair coins. Coin 1 picks the
polarization in path s, coin 2 the sign of the path-s amplitude:

    family 0:  H_H -> A+   H_T -> A-   T_H -> B+   T_T -> B-
    family 1:  H_H -> C+   H_T -> C-   T_H -> D+   T_T -> D-

with ``A`` horizontal, ``B`` vertical, ``C`` at 45 degrees and ``D`` at
135 degrees in path s, always in equal superposition with horizontal in r.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .qstate import StateVector, _frozen, make_state

# Overall sign of the 135-degree polarization vector, |nw> = NW_SIGN * (-|H> + |V>)/sqrt2.
# Flipping it swaps D+ and D- and leaves every probability unchanged.
NW_SIGN = 1

DEFAULT_MIN_DESIGNATED = 8
MAX_GENERATION_ATTEMPTS = 1000


def default_min_designated(N: int) -> int:
    """Designated-position floor for a length-N code.

    About N/4 positions are designated, so the floor is capped there to keep
    generation from spinning on short codes.
    """
    return min(DEFAULT_MIN_DESIGNATED, math.ceil(N / 4))


class CodebookError(ValueError):
    pass


class StoreExhausted(CodebookError):
    """No unused code pair is left."""


class Coin(str, enum.Enum):
    H = "H"
    T = "T"


class CoinPair(NamedTuple):
    c1: Coin
    c2: Coin

    def __str__(self) -> str:
        return f"{self.c1.value}_{self.c2.value}"

    @classmethod
    def parse(cls, text: str) -> "CoinPair":
        a, b = text.replace("_", "")
        return cls(Coin(a), Coin(b))


ALL_COIN_PAIRS: tuple[CoinPair, ...] = tuple(CoinPair(a, b) for a in Coin for b in Coin)


def state_label(family: int, cp: CoinPair) -> str:
    letters = ("AB", "CD")[family]
    letter = letters[0] if cp.c1 is Coin.H else letters[1]
    return letter + ("+" if cp.c2 is Coin.H else "-")


@lru_cache(maxsize=None)
def _state_amps(family: int, cp: CoinPair, nw_sign: int) -> np.ndarray:
    r = 1.0 / math.sqrt(2.0)
    if family == 0:
        s_part = np.array([1.0, 0.0]) if cp.c1 is Coin.H else np.array([0.0, 1.0])
    else:
        s_part = np.array([r, r]) if cp.c1 is Coin.H else nw_sign * np.array([-r, r])
    phase = 1.0 if cp.c2 is Coin.H else -1.0
    return _frozen(np.concatenate([[r, 0.0], phase * r * s_part]))


def prepare_state(family: int, cp: CoinPair) -> StateVector:
    if family not in (0, 1):
        raise CodebookError(f"family must be 0 or 1, got {family!r}")
    return StateVector(_state_amps(family, CoinPair(Coin(cp.c1), Coin(cp.c2)), NW_SIGN))


def alphabet(families: Sequence[int] = (0, 1)) -> list[tuple[str, StateVector]]:
    """Labelled states of the given families, in coin order."""
    return [(state_label(f, cp), prepare_state(f, cp)) for f in families for cp in ALL_COIN_PAIRS]


def alphabet_array(families: Sequence[int] = (0, 1)) -> np.ndarray:
    return np.stack([s.amps for _, s in alphabet(families)])


@dataclass(frozen=True, eq=False)
class SequenceMessage:
    """Photon train in flight: one 4-dim state per position.

    ``tag`` is simulation bookkeeping (pair id, family) and carries no
    physical information.
    """

    states: np.ndarray
    tag: tuple | None = None

    def __post_init__(self) -> None:
        if self.states.ndim != 2 or self.states.shape[1] != 4 or self.states.shape[0] < 1:
            raise CodebookError("sequence must be a non-empty (N, 4) array")
        norms = np.linalg.norm(self.states, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise CodebookError("every position must be normalized")

    @classmethod
    def from_array(cls, states: np.ndarray, tag: tuple | None = None) -> "SequenceMessage":
        return cls(_frozen(states), tag)

    @classmethod
    def from_states(cls, states: Sequence[StateVector], tag: tuple | None = None) -> "SequenceMessage":
        return cls.from_array(np.stack([s.amps for s in states]), tag)

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, i: int) -> StateVector:
        return StateVector(self.states[i])

    def __iter__(self) -> Iterator[StateVector]:
        return (self[i] for i in range(len(self)))

    def replace(self, i: int, state: StateVector) -> "SequenceMessage":
        a = np.array(self.states)
        a[i] = state.amps
        return SequenceMessage.from_array(a, self.tag)

    def retag(self, tag: tuple | None) -> "SequenceMessage":
        return SequenceMessage(self.states, tag)


@dataclass(frozen=True)
class SequenceCode:
    family: int
    tosses: tuple[CoinPair, ...]

    def __post_init__(self) -> None:
        if self.family not in (0, 1):
            raise CodebookError(f"family must be 0 or 1, got {self.family!r}")
        if len(self.tosses) < 1:
            raise CodebookError("a code needs at least one position")

    @property
    def N(self) -> int:
        return len(self.tosses)


@dataclass(frozen=True)
class CodePair:
    id: int
    code0: SequenceCode
    code1: SequenceCode

    def __post_init__(self) -> None:
        if self.id < 0:
            raise CodebookError("pair id must be non-negative")
        if self.code0.family != 0 or self.code1.family != 1:
            raise CodebookError("code0 must be family 0 and code1 family 1")
        if self.code0.N != self.code1.N:
            raise CodebookError("both codes of a pair must have the same length")

    @property
    def N(self) -> int:
        return self.code0.N

    def code(self, bit: int) -> SequenceCode:
        return (self.code0, self.code1)[bit]

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "N": self.N,
            "code0": [[cp.c1.value, cp.c2.value] for cp in self.code0.tosses],
            "code1": [[cp.c1.value, cp.c2.value] for cp in self.code1.tosses],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CodePair":
        try:
            tosses = [tuple(CoinPair(Coin(a), Coin(b)) for a, b in rec[key]) for key in ("code0", "code1")]
            pair = cls(int(rec["id"]), SequenceCode(0, tosses[0]), SequenceCode(1, tosses[1]))
        except (KeyError, TypeError, ValueError) as exc:
            raise CodebookError(f"malformed code record: {exc}") from exc
        if "N" in rec and int(rec["N"]) != pair.N:
            raise CodebookError(f"record N={rec['N']} does not match code length {pair.N}")
        return pair


def prepare_sequence(code: SequenceCode, tag: tuple | None = None) -> SequenceMessage:
    states = np.stack([_state_amps(code.family, cp, NW_SIGN) for cp in code.tosses])
    return SequenceMessage.from_array(states, tag)


def designated_positions(pair: CodePair) -> list[int]:
    """Positions where both codes tossed tails on coin 1 (B or D states)."""
    return [
        i
        for i, (a, b) in enumerate(zip(pair.code0.tosses, pair.code1.tosses))
        if a.c1 is Coin.T and b.c1 is Coin.T
    ]


def _random_tosses(rng: np.random.Generator, n: int) -> tuple[CoinPair, ...]:
    bits = rng.integers(0, 2, size=(n, 2))
    coins = (Coin.H, Coin.T)
    return tuple(CoinPair(coins[a], coins[b]) for a, b in bits)


def generate_code_pair(
    rng: np.random.Generator,
    N: int,
    min_designated: int = DEFAULT_MIN_DESIGNATED,
    pair_id: int = 0,
) -> CodePair:
    """Draw a fresh pair of codes from fair coins.

    Redraws the whole pair until it has at least ``min_designated``
    designated positions.
    """
    if N < 1:
        raise CodebookError("N must be positive")
    if not 0 <= min_designated <= N:
        raise CodebookError(f"min_designated={min_designated} must lie in [0, N={N}]")
    for _ in range(MAX_GENERATION_ATTEMPTS):
        pair = CodePair(pair_id, SequenceCode(0, _random_tosses(rng, N)), SequenceCode(1, _random_tosses(rng, N)))
        if len(designated_positions(pair)) >= min_designated:
            return pair
    raise CodebookError(
        f"no code pair with {min_designated} designated positions in {MAX_GENERATION_ATTEMPTS} attempts (N={N})"
    )


@dataclass
class CodeStore:
    """Pre-shared code pairs; the cursor marks the pair in use."""

    pairs: list[CodePair]
    cursor: int = 0
    _retired: list[int] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if not self.pairs:
            raise CodebookError("code store is empty")
        ids = [p.id for p in self.pairs]
        if len(set(ids)) != len(ids):
            raise CodebookError("pair ids must be unique")

    @classmethod
    def generate(
        cls,
        rng: np.random.Generator,
        size: int,
        N: int,
        min_designated: int = DEFAULT_MIN_DESIGNATED,
    ) -> "CodeStore":
        if size < 1:
            raise CodebookError("store size must be positive")
        return cls([generate_code_pair(rng, N, min_designated, pair_id=i) for i in range(size)])

    @property
    def active(self) -> CodePair:
        if self.cursor >= len(self.pairs):
            raise StoreExhausted("all code pairs have been used")
        return self.pairs[self.cursor]

    @property
    def remaining(self) -> int:
        return len(self.pairs) - self.cursor - 1

    @property
    def retired(self) -> tuple[int, ...]:
        return tuple(self._retired)

    def to_records(self) -> list[dict]:
        return [p.to_record() for p in self.pairs]

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "CodeStore":
        return cls([CodePair.from_record(r) for r in records])


def advance_pair(store: CodeStore) -> CodePair:
    """Retire the active pair and return the next one."""
    if store.cursor + 1 >= len(store.pairs):
        if store.cursor < len(store.pairs):
            store._retired.append(store.pairs[store.cursor].id)
        store.cursor = len(store.pairs)
        raise StoreExhausted("no unused code pair left")
    store._retired.append(store.pairs[store.cursor].id)
    store.cursor += 1
    return store.pairs[store.cursor]
