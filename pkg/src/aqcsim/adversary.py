"""Eavesdropper strategies acting on sequences in flight."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np

from . import _kernels
from .codebook import SequenceMessage, alphabet_array


class AdversaryError(ValueError):
    pass


class Direction(str, enum.Enum):
    ALICE_TO_BOB = "alice->bob"
    BOB_TO_ALICE = "bob->alice"


class Party(str, enum.Enum):
    ALICE = "alice"
    BOB = "bob"


@dataclass(frozen=True)
class Reflected:
    back_to: Party
    seq: SequenceMessage


@dataclass(frozen=True)
class EveRecord:
    direction: Direction
    tag: tuple | None
    action: str
    length: int
    detail: dict[str, Any] = field(default_factory=dict)


class EveLog:
    """Append-only record of everything Eve saw and did."""

    def __init__(self) -> None:
        self._records: list[EveRecord] = []

    def append(self, record: EveRecord) -> None:
        self._records.append(record)

    @property
    def records(self) -> tuple[EveRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def copies_of_latest(self) -> int:
        """How many forward-channel copies Eve saw of the latest forward sequence."""
        fwd = [r for r in self._records if r.direction is Direction.ALICE_TO_BOB]
        if not fwd:
            return 0
        tag = fwd[-1].tag
        if tag is None:
            return 1
        return sum(1 for r in fwd if r.tag == tag)

    def measurements(self) -> list[tuple[int, bool]]:
        """(analyzer index, fired) pairs from every measurement Eve made."""
        out = []
        for r in self._records:
            if "analyzers" in r.detail:
                out.extend(zip(r.detail["analyzers"], r.detail["positive"]))
        return out


class AdversaryStrategy:
    """Base class: subclasses transform sequences on the channels they act on."""

    name: ClassVar[str] = ""
    enumerable: ClassVar[bool] = False

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng if rng is not None else np.random.default_rng()

    def acts_on(self, direction: Direction) -> bool:
        return True

    def params(self) -> dict[str, Any]:
        return {}

    def forward(self, seq: SequenceMessage, direction: Direction, log: EveLog) -> SequenceMessage | Reflected:
        raise NotImplementedError

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


class Passive(AdversaryStrategy):
    name = "passive"
    enumerable = True

    def forward(self, seq, direction, log):
        log.append(EveRecord(direction, seq.tag, "observe", len(seq)))
        return seq


RESEND_ALPHABETS = {"all": (0, 1), "family0": (0,), "family1": (1,)}


class InterceptResendUniform(AdversaryStrategy):
    """Replace every position with an independent uniform draw from an alphabet.

    The default alphabet is all eight states; ``family0`` / ``family1``
    restrict the draw to one family.
    """

    name = "intercept-resend-uniform"
    enumerable = True

    def __init__(self, rng=None, alphabet: str = "all"):
        super().__init__(rng)
        if alphabet not in RESEND_ALPHABETS:
            raise AdversaryError(f"unknown resend alphabet {alphabet!r}; use one of {sorted(RESEND_ALPHABETS)}")
        self.alphabet = alphabet
        self._table = alphabet_array(RESEND_ALPHABETS[alphabet])

    def params(self):
        return {"alphabet": self.alphabet}

    def resend_states(self) -> np.ndarray:
        return self._table

    def forward(self, seq, direction, log):
        picks = self.rng.integers(0, len(self._table), size=len(seq))
        log.append(
            EveRecord(direction, seq.tag, "intercept-resend", len(seq), {"original": seq, "resent": picks.tolist()})
        )
        return SequenceMessage.from_array(self._table[picks], seq.tag)


ANALYZER_CHOICES = {"uniform": None, "A": 0, "C": 1}


class InterceptMeasureResend(AdversaryStrategy):
    """Measure every position with one of Bob's two analyzers and resend the collapsed state."""

    name = "intercept-measure-resend"
    enumerable = True

    def __init__(self, rng=None, analyzer: str = "uniform"):
        super().__init__(rng)
        if analyzer not in ANALYZER_CHOICES:
            raise AdversaryError(f"unknown analyzer policy {analyzer!r}; use one of {sorted(ANALYZER_CHOICES)}")
        self.analyzer = analyzer

    def params(self):
        return {"analyzer": self.analyzer}

    def analyzer_weights(self) -> list[tuple[int, float]]:
        fixed = ANALYZER_CHOICES[self.analyzer]
        return [(0, 0.5), (1, 0.5)] if fixed is None else [(fixed, 1.0)]

    def forward(self, seq, direction, log):
        from .protocol import ANALYZER_MATRICES

        n = len(seq)
        fixed = ANALYZER_CHOICES[self.analyzer]
        if fixed is None:
            analyzers = self.rng.integers(0, 2, size=n).astype(np.intp)
        else:
            analyzers = np.full(n, fixed, dtype=np.intp)
        positive, _, post = _kernels.measure_rows(seq.states, analyzers, ANALYZER_MATRICES, self.rng.random(n))
        log.append(
            EveRecord(
                direction,
                seq.tag,
                "intercept-measure-resend",
                n,
                {"analyzers": analyzers.tolist(), "positive": positive.tolist()},
            )
        )
        return SequenceMessage.from_array(post, seq.tag)


class _Reflect(AdversaryStrategy):
    channel: ClassVar[Direction]
    target: ClassVar[Party]

    def acts_on(self, direction):
        return direction is self.channel

    def forward(self, seq, direction, log):
        if direction is not self.channel:
            raise AdversaryError(f"{self.name} only acts on the {self.channel.value} channel")
        log.append(EveRecord(direction, seq.tag, f"reflect-to-{self.target.value}", len(seq)))
        return Reflected(self.target, seq)


class ReflectToAlice(_Reflect):
    """Send Alice's own sequence straight back to her, untouched."""

    name = "reflect-to-alice"
    channel = Direction.ALICE_TO_BOB
    target = Party.ALICE


class ReflectToBob(_Reflect):
    """Send Bob's echo back to Bob as if it were Alice's next bit."""

    name = "reflect-to-bob"
    channel = Direction.BOB_TO_ALICE
    target = Party.BOB


STRATEGIES: dict[str, type[AdversaryStrategy]] = {
    cls.name: cls for cls in (Passive, InterceptResendUniform, InterceptMeasureResend, ReflectToAlice, ReflectToBob)
}


def make_strategy(name: str, rng: np.random.Generator | None = None, **params) -> AdversaryStrategy:
    try:
        cls = STRATEGIES[name]
    except KeyError:
        raise AdversaryError(f"unknown strategy {name!r}; choose from {sorted(STRATEGIES)}") from None
    try:
        return cls(rng, **params)
    except TypeError as exc:
        raise AdversaryError(f"bad parameters for {name}: {exc}") from None


def eve_forward(
    seq: SequenceMessage, direction: Direction, strategy: AdversaryStrategy, log: EveLog
) -> SequenceMessage | Reflected:
    return strategy.forward(seq, Direction(direction), log)


class GuessMethod(str, enum.Enum):
    SINGLE_COPY_OPTIMAL = "single-copy-optimal"
    RECORDED = "recorded"


@dataclass(frozen=True)
class BitGuess:
    bit: int
    success_bound: float


def eve_guess_bit(log: EveLog, method: GuessMethod, rng: np.random.Generator | None = None) -> BitGuess:
    """Eve's guess of the transmitted bit from what her log holds.

    ``SINGLE_COPY_OPTIMAL`` reports the Helstrom bound for the number of
    copies of the latest sequence Eve intercepted. ``RECORDED`` picks the
    family with the higher likelihood of the logged analyzer outcomes under
    each family's single-position mixture and breaks ties with a coin.
    """
    from .analysis import family_density_matrix, reuse_leakage
    from .protocol import ANALYZER_MATRICES
    from .qstate import helstrom_success

    if len(log) == 0:
        raise AdversaryError("Eve's log is empty")
    rng = rng if rng is not None else np.random.default_rng()
    rho = [family_density_matrix(f).matrix for f in (0, 1)]
    coin = int(rng.integers(0, 2))

    if GuessMethod(method) is GuessMethod.SINGLE_COPY_OPTIMAL:
        k = max(1, log.copies_of_latest())
        if k == 1:
            bound = helstrom_success(family_density_matrix(0), family_density_matrix(1))
        else:
            n = next(r.length for r in reversed(log.records) if r.direction is Direction.ALICE_TO_BOB)
            bound = reuse_leakage(n, k).helstrom_bound
        return BitGuess(coin, bound)

    llr = 0.0
    for analyzer, fired in log.measurements():
        p = [float(np.trace(r @ ANALYZER_MATRICES[analyzer]).real) for r in rho]
        q = p if fired else [1.0 - x for x in p]
        llr += math.log(q[1]) - math.log(q[0])
    if abs(llr) <= 1e-12:
        return BitGuess(coin, 0.5)
    return BitGuess(int(llr > 0), 0.5)


__all__ = [
    "AdversaryError",
    "AdversaryStrategy",
    "BitGuess",
    "Direction",
    "EveLog",
    "EveRecord",
    "GuessMethod",
    "InterceptMeasureResend",
    "InterceptResendUniform",
    "Party",
    "Passive",
    "Reflected",
    "ReflectToAlice",
    "ReflectToBob",
    "STRATEGIES",
    "eve_forward",
    "eve_guess_bit",
    "make_strategy",
]
