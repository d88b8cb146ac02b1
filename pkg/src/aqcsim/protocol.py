"""Alice and Bob for one bit at a time, and the session loop around them.

One round: Alice sends the sequence of the bit's family, Bob identifies it
from the designated positions and checks the rest, then echoes the other
family's sequence (or the same one, for the weaker variant) which Alice
checks state by state. A detected error retires the code pair.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import _kernels
from .codebook import (
    CodePair,
    CodeStore,
    SequenceMessage,
    StoreExhausted,
    advance_pair,
    designated_positions,
    prepare_sequence,
)
from .qstate import projector_pa, projector_pc

if TYPE_CHECKING:
    from .adversary import AdversaryStrategy, EveLog


class ProtocolError(ValueError):
    pass


class SessionAborted(RuntimeError):
    """Raised when a session cannot continue; carries the partial transcript."""

    def __init__(self, reason: str, transcript: "Transcript"):
        super().__init__(reason)
        self.reason = reason
        self.transcript = transcript


class Analyzer(enum.IntEnum):
    A = 0  # 0 degrees on path s
    C = 1  # 45 degrees on path s


ANALYZER_MATRICES = np.stack([projector_pa().matrix, projector_pc().matrix])


def null_expected_analyzer(bit: int) -> Analyzer:
    """Analyzer that never fires on honest designated states of ``bit``'s family."""
    return Analyzer.C if bit == 1 else Analyzer.A


def bit_from_positive(analyzer: Analyzer) -> int:
    # A fires only on D states (family 1), C only on B states (family 0)
    return 1 if analyzer is Analyzer.A else 0


class Mode(str, enum.Enum):
    PAPER_ANALYZER = "paper-analyzer"
    EXPECTED_STATE = "expected-state"


class Echo(str, enum.Enum):
    COMPLEMENTARY = "complementary"
    SAME = "same"


def echo_family(sent_bit: int, echo: Echo) -> int:
    return 1 - sent_bit if echo is Echo.COMPLEMENTARY else sent_bit


@dataclass(frozen=True)
class VerificationPolicy:
    """How Bob checks a sequence after identifying it.

    ``measure_once_per_designated`` keeps designated positions measured
    during identification out of the checks; when false, those positions
    whose honest state survived the measurement are checked again.
    """

    mode: Mode = Mode.PAPER_ANALYZER
    measure_once_per_designated: bool = True


DEFAULT_POLICY = VerificationPolicy()


@dataclass(frozen=True)
class Check:
    position: int
    test: str  # "A", "C" or "expected"
    positive: bool
    error: bool


class BobStatus(str, enum.Enum):
    IDENTIFIED = "identified"
    INCONCLUSIVE = "inconclusive"
    ERROR_DETECTED = "error-detected"


@dataclass(frozen=True)
class BobResult:
    status: BobStatus
    bit: int | None
    consumed: dict[int, tuple[Analyzer, bool]]
    spoiled: frozenset[int]
    checks: tuple[Check, ...] = ()
    error_position: int | None = None
    reply: SequenceMessage | None = None

    def __post_init__(self) -> None:
        if (self.reply is not None) != (self.status is BobStatus.IDENTIFIED):
            raise ProtocolError("Bob replies exactly when he identified the bit without error")


def alice_send_bit(bit: int, pair: CodePair) -> SequenceMessage:
    if bit not in (0, 1):
        raise ProtocolError(f"bit must be 0 or 1, got {bit!r}")
    return prepare_sequence(pair.code(bit), tag=(pair.id, bit))


def bob_process(
    seq: SequenceMessage,
    pair: CodePair,
    policy: VerificationPolicy = DEFAULT_POLICY,
    rng: np.random.Generator | None = None,
    echo: Echo = Echo.COMPLEMENTARY,
) -> BobResult:
    """Identify the bit carried by ``seq`` and check it for tampering.

    Designated positions are measured in random order with a randomly chosen
    analyzer until one fires. Afterwards the remaining positions are
    checked according to ``policy``; the first failing check (in position
    order) is reported.
    """
    if len(seq) != pair.N:
        raise ProtocolError(f"sequence length {len(seq)} does not match code length {pair.N}")
    rng = rng if rng is not None else np.random.default_rng()
    states = np.array(seq.states)
    desig = designated_positions(pair)

    order = rng.permutation(np.array(desig, dtype=np.intp))
    analyzers = rng.integers(0, 2, size=order.size).astype(np.intp)
    uniforms = rng.random(order.size)
    if order.size:
        positive, _, post = _kernels.measure_rows(states[order], analyzers, ANALYZER_MATRICES, uniforms)
        hits = np.flatnonzero(positive)
    else:
        positive = np.zeros(0, dtype=bool)
        hits = np.zeros(0, dtype=np.intp)

    if hits.size == 0:
        consumed = {int(p): (Analyzer(int(a)), False) for p, a in zip(order, analyzers)}
        return BobResult(BobStatus.INCONCLUSIVE, None, consumed, frozenset(consumed))

    j = int(hits[0])
    measured = order[: j + 1]
    states[measured] = post[: j + 1]
    ident = Analyzer(int(analyzers[j]))
    bit = bit_from_positive(ident)
    consumed = {int(order[i]): (Analyzer(int(analyzers[i])), bool(positive[i])) for i in range(j + 1)}
    # the identifying analyzer collapses honest states; the other leaves them intact
    spoiled = frozenset(int(order[i]) for i in range(j + 1) if analyzers[i] == ident)
    excluded = set(consumed) if policy.measure_once_per_designated else set(spoiled)

    if policy.mode is Mode.PAPER_ANALYZER:
        targets = np.array([p for p in desig if p not in excluded], dtype=np.intp)
        an2 = rng.integers(0, 2, size=targets.size).astype(np.intp)
        u2 = rng.random(targets.size)
        if targets.size:
            fired, _, post2 = _kernels.measure_rows(states[targets], an2, ANALYZER_MATRICES, u2)
            states[targets] = post2
        else:
            fired = np.zeros(0, dtype=bool)
        bad = fired & (an2 == null_expected_analyzer(bit))
        checks = tuple(
            Check(int(p), Analyzer(int(a)).name, bool(f), bool(e)) for p, a, f, e in zip(targets, an2, fired, bad)
        )
    else:
        targets = np.array([p for p in range(pair.N) if p not in excluded], dtype=np.intp)
        u2 = rng.random(targets.size)
        if targets.size:
            expected = prepare_sequence(pair.code(bit)).states[targets]
            passed, _, post2 = _kernels.test_rows(expected, states[targets], u2)
            states[targets] = post2
        else:
            passed = np.zeros(0, dtype=bool)
        bad = ~passed
        checks = tuple(Check(int(p), "expected", bool(ok), not ok) for p, ok in zip(targets, passed))

    if bad.any():
        first = int(targets[np.flatnonzero(bad)[0]])
        return BobResult(BobStatus.ERROR_DETECTED, bit, consumed, spoiled, checks, error_position=first)

    reply_bit = echo_family(bit, echo)
    reply = prepare_sequence(pair.code(reply_bit), tag=(pair.id, reply_bit))
    return BobResult(BobStatus.IDENTIFIED, bit, consumed, spoiled, checks, reply=reply)


@dataclass(frozen=True)
class AliceVerdict:
    accepted: bool
    error_position: int | None
    passed: tuple[bool, ...]

    @property
    def n_failed(self) -> int:
        return self.passed.count(False)


def alice_verify_reply(
    reply: SequenceMessage,
    pair: CodePair,
    sent_bit: int,
    rng: np.random.Generator | None = None,
    echo: Echo = Echo.COMPLEMENTARY,
) -> AliceVerdict:
    """Test every position of Bob's echo against the state Alice expects."""
    if len(reply) != pair.N:
        raise ProtocolError(f"reply length {len(reply)} does not match code length {pair.N}")
    rng = rng if rng is not None else np.random.default_rng()
    expected = prepare_sequence(pair.code(echo_family(sent_bit, echo))).states
    passed, _, _ = _kernels.test_rows(expected, reply.states, rng.random(pair.N))
    failed = np.flatnonzero(~passed)
    first = int(failed[0]) if failed.size else None
    return AliceVerdict(first is None, first, tuple(bool(p) for p in passed))


class TrialStatus(str, enum.Enum):
    DELIVERED = "delivered"
    ERROR_DETECTED_BY_BOB = "error-detected-by-bob"
    ERROR_DETECTED_BY_ALICE = "error-detected-by-alice"
    INCONCLUSIVE = "inconclusive"
    # Alice accepted, but Bob did not end up with exactly the bit she sent
    UNDETECTED_FAILURE = "undetected-failure"

    @property
    def error_detected(self) -> bool:
        return self in (TrialStatus.ERROR_DETECTED_BY_BOB, TrialStatus.ERROR_DETECTED_BY_ALICE)

    @property
    def accepted_by_alice(self) -> bool:
        return self in (TrialStatus.DELIVERED, TrialStatus.UNDETECTED_FAILURE)


@dataclass(frozen=True)
class Event:
    who: str
    action: str
    position: int | None = None
    outcome: str | None = None


@dataclass(frozen=True)
class TrialOutcome:
    bit_sent: int
    status: TrialStatus
    pair_id: int
    events: tuple[Event, ...]
    bob: BobResult | None = None
    alice: AliceVerdict | None = None
    bob_bits: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.status is TrialStatus.DELIVERED and self.bob_bits != (self.bit_sent,):
            raise ProtocolError("a delivered trial must leave Bob with exactly the sent bit")


def _bob_events(result: BobResult, events: list[Event]) -> None:
    for pos, (an, fired) in result.consumed.items():
        events.append(Event("bob", f"identify-{an.name}", pos, "positive" if fired else "null"))
    for c in result.checks:
        events.append(Event("bob", f"check-{c.test}", c.position, "error" if c.error else "ok"))
    outcome = result.status.value if result.bit is None else f"{result.status.value}:{result.bit}"
    events.append(Event("bob", "result", result.error_position, outcome))


def run_trial(
    bit: int,
    pair: CodePair,
    adversary: "AdversaryStrategy",
    policy: VerificationPolicy = DEFAULT_POLICY,
    rng: np.random.Generator | None = None,
    echo: Echo = Echo.COMPLEMENTARY,
    log: "EveLog | None" = None,
) -> TrialOutcome:
    """One send / receive / echo / verify round through ``adversary``."""
    from .adversary import Direction, EveLog, Party, Reflected, eve_forward

    rng = rng if rng is not None else np.random.default_rng()
    log = log if log is not None else EveLog()
    events: list[Event] = [Event("alice", "send", None, f"S{bit}")]

    def finish(status, bob=None, alice=None, bob_bits=()):
        if alice is not None:
            events.append(Event("alice", "verify", alice.error_position, "accepted" if alice.accepted else "error"))
        events.append(Event("session", "trial", None, status.value))
        return TrialOutcome(bit, status, pair.id, tuple(events), bob, alice, tuple(bob_bits))

    seq = alice_send_bit(bit, pair)
    fwd = seq
    if adversary.acts_on(Direction.ALICE_TO_BOB):
        fwd = eve_forward(seq, Direction.ALICE_TO_BOB, adversary, log)
        events.append(Event("eve", adversary.name, None, Direction.ALICE_TO_BOB.value))
    if isinstance(fwd, Reflected):
        if fwd.back_to is not Party.ALICE:
            raise ProtocolError("forward-channel reflection must go back to Alice")
        verdict = alice_verify_reply(fwd.seq, pair, bit, rng, echo)
        status = TrialStatus.UNDETECTED_FAILURE if verdict.accepted else TrialStatus.ERROR_DETECTED_BY_ALICE
        return finish(status, alice=verdict)

    bob = bob_process(fwd, pair, policy, rng, echo)
    _bob_events(bob, events)
    if bob.status is BobStatus.INCONCLUSIVE:
        return finish(TrialStatus.INCONCLUSIVE, bob)
    if bob.status is BobStatus.ERROR_DETECTED:
        return finish(TrialStatus.ERROR_DETECTED_BY_BOB, bob)

    bob_bits = [bob.bit]
    ret = bob.reply
    if adversary.acts_on(Direction.BOB_TO_ALICE):
        ret = eve_forward(bob.reply, Direction.BOB_TO_ALICE, adversary, log)
        events.append(Event("eve", adversary.name, None, Direction.BOB_TO_ALICE.value))
    if isinstance(ret, Reflected):
        if ret.back_to is not Party.BOB:
            raise ProtocolError("return-channel reflection must go back to Bob")
        # Bob takes his own echo for Alice's next bit; Eve relays his answer to Alice.
        second = bob_process(ret.seq, pair, policy, rng, echo)
        _bob_events(second, events)
        if second.status is BobStatus.ERROR_DETECTED:
            return finish(TrialStatus.ERROR_DETECTED_BY_BOB, second, bob_bits=bob_bits)
        if second.status is BobStatus.INCONCLUSIVE:
            # Alice never receives an acknowledgment
            return finish(TrialStatus.INCONCLUSIVE, second, bob_bits=bob_bits)
        bob_bits.append(second.bit)
        ret = second.reply

    verdict = alice_verify_reply(ret, pair, bit, rng, echo)
    if not verdict.accepted:
        return finish(TrialStatus.ERROR_DETECTED_BY_ALICE, bob, verdict, bob_bits)
    status = TrialStatus.DELIVERED if bob_bits == [bit] else TrialStatus.UNDETECTED_FAILURE
    return finish(status, bob, verdict, bob_bits)


@dataclass
class Transcript:
    trials: list[TrialOutcome] = field(default_factory=list)
    aborted: bool = False
    abort_reason: str | None = None

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def pair_ids(self) -> list[int]:
        return [t.pair_id for t in self.trials]

    @property
    def accepted_bits(self) -> list[int]:
        """Bits Alice considers delivered, in order."""
        return [t.bit_sent for t in self.trials if t.status.accepted_by_alice]

    @property
    def bob_bits(self) -> list[int]:
        return [b for t in self.trials if t.status.accepted_by_alice for b in t.bob_bits]

    def to_records(self) -> list[dict]:
        out = []
        for i, t in enumerate(self.trials):
            for e in t.events:
                out.append(
                    {
                        "trial": i,
                        "bit": t.bit_sent,
                        "pair_id": t.pair_id,
                        "who": e.who,
                        "action": e.action,
                        "position": e.position,
                        "outcome": e.outcome,
                    }
                )
        if self.aborted:
            out.append({"trial": len(self.trials), "who": "session", "action": "abort", "outcome": self.abort_reason})
        return out


def run_session(
    bits: Sequence[int],
    store: CodeStore,
    adversary: "AdversaryStrategy",
    policy: VerificationPolicy = DEFAULT_POLICY,
    rng: np.random.Generator | None = None,
    max_retries: int = 3,
    echo: Echo = Echo.COMPLEMENTARY,
    max_inconclusive: int = 100,
    log: "EveLog | None" = None,
) -> Transcript:
    """Send ``bits`` one at a time, reusing a pair until an error retires it.

    After a detected error the pair is retired and the same bit is retried,
    at most ``max_retries`` times. Inconclusive rounds retry with the same
    pair, at most ``max_inconclusive`` times per bit. Raises
    :class:`SessionAborted` when either budget or the code store runs out.
    """
    from .adversary import EveLog

    rng = rng if rng is not None else np.random.default_rng()
    log = log if log is not None else EveLog()
    transcript = Transcript()

    def abort(reason):
        transcript.aborted = True
        transcript.abort_reason = reason
        raise SessionAborted(reason, transcript)

    for index, bit in enumerate(bits):
        errors = 0
        inconclusive = 0
        while True:
            try:
                pair = store.active
            except StoreExhausted:
                abort("code store exhausted")
            outcome = run_trial(bit, pair, adversary, policy, rng, echo, log)
            transcript.trials.append(outcome)
            if outcome.status.accepted_by_alice:
                break
            if outcome.status is TrialStatus.INCONCLUSIVE:
                inconclusive += 1
                if inconclusive > max_inconclusive:
                    abort(f"bit {index}: no identification after {max_inconclusive} retries")
                continue
            errors += 1
            try:
                advance_pair(store)
            except StoreExhausted:
                abort(f"bit {index}: code store exhausted after error")
            if errors > max_retries:
                abort(f"bit {index}: error detected {errors} times")
    return transcript
