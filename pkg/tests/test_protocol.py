import numpy as np
import pytest

from aqcsim.adversary import InterceptResendUniform, Passive, ReflectToAlice, ReflectToBob
from aqcsim.codebook import (
    Coin,
    CodePair,
    CodeStore,
    CoinPair,
    SequenceCode,
    designated_positions,
    generate_code_pair,
    prepare_sequence,
)
from aqcsim.protocol import (
    Analyzer,
    BobResult,
    BobStatus,
    Echo,
    Mode,
    ProtocolError,
    SessionAborted,
    TrialStatus,
    VerificationPolicy,
    alice_send_bit,
    alice_verify_reply,
    bit_from_positive,
    bob_process,
    null_expected_analyzer,
    run_session,
    run_trial,
)
from aqcsim.qstate import make_state

from conftest import binomial_within

POLICIES = [
    VerificationPolicy(Mode.PAPER_ANALYZER),
    VerificationPolicy(Mode.EXPECTED_STATE),
    VerificationPolicy(Mode.PAPER_ANALYZER, measure_once_per_designated=False),
    VerificationPolicy(Mode.EXPECTED_STATE, measure_once_per_designated=False),
]


def pair_of(n, seed=0, min_designated=1):
    return generate_code_pair(np.random.default_rng(seed), n, min_designated=min_designated)


def all_heads_pair(n):
    hh = CoinPair(Coin.H, Coin.H)
    return CodePair(0, SequenceCode(0, (hh,) * n), SequenceCode(1, (hh,) * n))


class TestAnalyzerSemantics:
    def test_identification_mapping(self):
        assert bit_from_positive(Analyzer.A) == 1
        assert bit_from_positive(Analyzer.C) == 0

    def test_null_expected(self):
        assert null_expected_analyzer(1) is Analyzer.C
        assert null_expected_analyzer(0) is Analyzer.A


class TestAliceSend:
    @pytest.mark.parametrize("bit", [0, 1])
    def test_uses_matching_code(self, bit):
        pair = pair_of(10)
        seq = alice_send_bit(bit, pair)
        assert np.allclose(seq.states, prepare_sequence(pair.code(bit)).states)
        assert seq.tag == (pair.id, bit)

    def test_repeatable(self):
        pair = pair_of(10)
        assert np.array_equal(alice_send_bit(1, pair).states, alice_send_bit(1, pair).states)

    def test_bad_bit(self):
        with pytest.raises(ProtocolError):
            alice_send_bit(2, pair_of(4))


class TestBobProcess:
    @pytest.mark.parametrize("policy", POLICIES, ids=lambda p: f"{p.mode.value}-{p.measure_once_per_designated}")
    @pytest.mark.parametrize("bit", [0, 1])
    def test_honest_never_errors_and_never_misidentifies(self, policy, bit):
        rng = np.random.default_rng(11)
        pair = pair_of(20, seed=bit, min_designated=6)
        seq = alice_send_bit(bit, pair)
        for _ in range(2000):
            res = bob_process(seq, pair, policy, rng)
            assert res.status is not BobStatus.ERROR_DETECTED
            if res.status is BobStatus.IDENTIFIED:
                assert res.bit == bit
                assert np.allclose(res.reply.states, prepare_sequence(pair.code(1 - bit)).states)

    def test_no_designated_positions_is_inconclusive(self, rng):
        pair = all_heads_pair(5)
        res = bob_process(alice_send_bit(0, pair), pair, rng=rng)
        assert res.status is BobStatus.INCONCLUSIVE and res.reply is None and res.bit is None

    def test_single_designated_position_success_rate(self):
        pair = pair_of(1, seed=4)
        assert designated_positions(pair) == [0]
        rng = np.random.default_rng(21)
        n = 20_000
        hits = sum(bob_process(alice_send_bit(1, pair), pair, rng=rng).status is BobStatus.IDENTIFIED for _ in range(n))
        assert binomial_within(hits, n, 1 / 8)

    def test_inconclusive_rate_matches_designated_count(self):
        pair = pair_of(12, seed=9, min_designated=3)
        d = len(designated_positions(pair))
        rng = np.random.default_rng(2)
        n = 10_000
        misses = sum(bob_process(alice_send_bit(0, pair), pair, rng=rng).status is BobStatus.INCONCLUSIVE for _ in range(n))
        assert binomial_within(misses, n, (7 / 8) ** d)

    def test_spoiled_and_consumed(self, rng):
        pair = pair_of(30, seed=3, min_designated=8)
        desig = set(designated_positions(pair))
        for _ in range(300):
            res = bob_process(alice_send_bit(1, pair), pair, rng=rng)
            if res.status is not BobStatus.IDENTIFIED:
                continue
            assert set(res.consumed) <= desig
            assert res.spoiled <= set(res.consumed)
            # the identifying measurement always spoils its own position
            fired = [p for p, (_, pos) in res.consumed.items() if pos]
            assert len(fired) == 1 and fired[0] in res.spoiled
            checked = {c.position for c in res.checks}
            assert not checked & set(res.consumed)
            assert checked == desig - set(res.consumed)

    def test_remeasure_checks_unspoiled_positions(self, rng):
        pair = pair_of(30, seed=3, min_designated=8)
        policy = VerificationPolicy(Mode.PAPER_ANALYZER, measure_once_per_designated=False)
        desig = set(designated_positions(pair))
        for _ in range(300):
            res = bob_process(alice_send_bit(1, pair), pair, policy, rng)
            if res.status is BobStatus.IDENTIFIED:
                assert {c.position for c in res.checks} == desig - res.spoiled

    def test_expected_state_mode_checks_non_designated(self, rng):
        pair = pair_of(16, seed=5, min_designated=4)
        policy = VerificationPolicy(Mode.EXPECTED_STATE)
        for _ in range(200):
            res = bob_process(alice_send_bit(0, pair), pair, policy, rng)
            if res.status is BobStatus.IDENTIFIED:
                assert {c.position for c in res.checks} == set(range(16)) - set(res.consumed)
                break
        else:
            pytest.fail("never identified")

    def test_length_mismatch(self, rng):
        with pytest.raises(ProtocolError):
            bob_process(alice_send_bit(0, pair_of(4)), pair_of(5), rng=rng)

    def test_reply_invariant(self):
        with pytest.raises(ProtocolError):
            BobResult(BobStatus.INCONCLUSIVE, None, {}, frozenset(), reply=prepare_sequence(pair_of(2).code0))
        with pytest.raises(ProtocolError):
            BobResult(BobStatus.IDENTIFIED, 0, {}, frozenset())

    def test_same_echo_replies_with_received_family(self, rng):
        pair = pair_of(20, seed=1, min_designated=8)
        for _ in range(200):
            res = bob_process(alice_send_bit(0, pair), pair, rng=rng, echo=Echo.SAME)
            if res.status is BobStatus.IDENTIFIED:
                assert np.allclose(res.reply.states, prepare_sequence(pair.code0).states)
                return
        pytest.fail("never identified")


class TestAliceVerify:
    @pytest.mark.parametrize("bit", [0, 1])
    def test_honest_echo_accepted(self, bit, rng):
        pair = pair_of(50)
        reply = prepare_sequence(pair.code(1 - bit))
        for _ in range(100):
            assert alice_verify_reply(reply, pair, bit, rng).accepted

    def test_orthogonal_substitution_detected(self, rng):
        pair = pair_of(10)
        reply = prepare_sequence(pair.code1)
        amps = reply[4].amps.copy()
        amps[2:] *= -1  # the sign partner of every state is orthogonal to it
        tampered = reply.replace(4, make_state(amps))
        for _ in range(100):
            v = alice_verify_reply(tampered, pair, 0, rng)
            assert not v.accepted and v.error_position == 4 and v.n_failed == 1

    def test_reflected_sequence_detection_rate(self):
        # own-sequence reflection: each position fails with 1 - |<psi1|psi0>|^2
        pair = pair_of(400, seed=12)
        s0 = prepare_sequence(pair.code0).states
        s1 = prepare_sequence(pair.code1).states
        p_fail = 1 - np.abs(np.sum(s1.conj() * s0, axis=1)) ** 2
        rng = np.random.default_rng(6)
        fails = np.zeros(400)
        reps = 200
        for _ in range(reps):
            fails += ~np.array(alice_verify_reply(alice_send_bit(0, pair), pair, 0, rng).passed)
        assert binomial_within(int(fails.sum()), 400 * reps, float(p_fail.mean()))

    def test_length_mismatch(self, rng):
        with pytest.raises(ProtocolError):
            alice_verify_reply(prepare_sequence(pair_of(3).code1), pair_of(4), 0, rng)


class TestRunTrial:
    def test_passive_round(self):
        pair = pair_of(100, min_designated=8)
        rng = np.random.default_rng(0)
        statuses = {run_trial(1, pair, Passive(rng), rng=rng).status for _ in range(200)}
        assert statuses <= {TrialStatus.DELIVERED, TrialStatus.INCONCLUSIVE}
        assert TrialStatus.DELIVERED in statuses

    def test_delivered_invariant(self):
        from aqcsim.protocol import TrialOutcome

        with pytest.raises(ProtocolError):
            TrialOutcome(0, TrialStatus.DELIVERED, 0, (), bob_bits=(1,))

    def test_reflect_to_alice_never_reaches_bob(self, rng):
        pair = pair_of(20)
        out = run_trial(0, pair, ReflectToAlice(rng), rng=rng)
        assert out.bob is None and out.alice is not None
        assert out.status in (TrialStatus.ERROR_DETECTED_BY_ALICE, TrialStatus.UNDETECTED_FAILURE)
        assert not any(e.who == "bob" for e in out.events)

    def test_reflect_to_alice_same_echo_always_accepted(self, rng):
        pair = pair_of(20)
        for _ in range(200):
            out = run_trial(1, pair, ReflectToAlice(rng), rng=rng, echo=Echo.SAME)
            assert out.status is TrialStatus.UNDETECTED_FAILURE and out.alice.accepted

    def test_reflect_to_bob_gives_bob_a_wrong_bit(self):
        pair = pair_of(60, min_designated=20)
        rng = np.random.default_rng(4)
        outs = [run_trial(0, pair, ReflectToBob(rng), rng=rng) for _ in range(400)]
        for o in outs:
            assert o.status is not TrialStatus.DELIVERED
            if o.status is TrialStatus.UNDETECTED_FAILURE:
                assert o.bob_bits == (0, 1)
        assert any(o.status is TrialStatus.ERROR_DETECTED_BY_ALICE for o in outs)

    def test_intercept_resend_is_caught(self):
        pair = pair_of(100, min_designated=20)
        rng = np.random.default_rng(1)
        outs = [run_trial(0, pair, InterceptResendUniform(rng), rng=rng) for _ in range(100)]
        assert sum(o.status.error_detected for o in outs) > 90

    def test_events_are_ordered(self, rng):
        pair = pair_of(30, min_designated=10)
        out = run_trial(0, pair, Passive(rng), rng=rng)
        assert out.events[0].who == "alice" and out.events[0].action == "send"
        assert out.events[-1].action == "trial" and out.events[-1].outcome == out.status.value


class TestRunSession:
    def test_passive_eight_bits_one_pair(self):
        rng = np.random.default_rng(0)
        store = CodeStore.generate(rng, 3, 100)
        bits = [1, 0, 1, 1, 0, 0, 1, 0]
        tr = run_session(bits, store, Passive(rng), rng=rng)
        assert tr.accepted_bits == bits and tr.bob_bits == bits
        assert set(tr.pair_ids) == {0} and store.cursor == 0
        assert all(t.status in (TrialStatus.DELIVERED, TrialStatus.INCONCLUSIVE) for t in tr.trials)

    def test_empty_message(self, rng):
        store = CodeStore.generate(rng, 1, 10, min_designated=1)
        tr = run_session([], store, Passive(rng), rng=rng)
        assert len(tr) == 0 and tr.to_records() == []

    def test_intercept_resend_aborts(self):
        rng = np.random.default_rng(3)
        aborted = 0
        for _ in range(20):
            store = CodeStore.generate(rng, 10, 100)
            try:
                run_session([0, 1], store, InterceptResendUniform(rng), rng=rng, max_retries=1)
            except SessionAborted as exc:
                aborted += 1
                assert exc.transcript.aborted and exc.transcript.abort_reason == exc.reason
        assert aborted >= 19

    def test_pair_ids_advance_exactly_after_errors(self):
        rng = np.random.default_rng(8)
        store = CodeStore.generate(rng, 50, 40)
        try:
            tr = run_session([0, 1, 1, 0], store, InterceptResendUniform(rng), rng=rng, max_retries=5)
        except SessionAborted as exc:
            tr = exc.transcript
        ids = tr.pair_ids
        for prev, cur, t in zip(ids, ids[1:], tr.trials):
            assert cur >= prev
            assert (cur > prev) == t.status.error_detected
            if cur > prev:
                assert cur == prev + 1

    def test_store_exhaustion_aborts(self):
        rng = np.random.default_rng(5)
        store = CodeStore.generate(rng, 1, 100)
        with pytest.raises(SessionAborted, match="exhausted"):
            run_session([0], store, InterceptResendUniform(rng), rng=rng, max_retries=3)

    def test_inconclusive_cap(self, rng):
        store = CodeStore([all_heads_pair(4)])
        with pytest.raises(SessionAborted, match="no identification"):
            run_session([1], store, Passive(rng), rng=rng, max_inconclusive=5)

    def test_records(self):
        rng = np.random.default_rng(0)
        store = CodeStore.generate(rng, 2, 20)
        tr = run_session([0, 1], store, Passive(rng), rng=rng)
        recs = tr.to_records()
        assert {r["trial"] for r in recs} == set(range(len(tr)))
        assert all(set(r) == {"trial", "bit", "pair_id", "who", "action", "position", "outcome"} for r in recs)
