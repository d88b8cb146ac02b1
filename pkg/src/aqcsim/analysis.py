"""Exact oracles and Monte Carlo estimates for the protocol's error statistics.

Everything named ``exact_*`` enumerates the finite randomness involved
(honest coins, Eve's choices and Bob's analyzer coin) with exact Born
probabilities. :func:`monte_carlo` runs the protocol itself and is the
independent cross-check.
"""

from __future__ import annotations

import enum
import itertools
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import _kernels
from .adversary import (
    AdversaryStrategy,
    EveLog,
    GuessMethod,
    InterceptMeasureResend,
    InterceptResendUniform,
    Passive,
    RESEND_ALPHABETS,
    eve_guess_bit,
    make_strategy,
)
from .codebook import (
    ALL_COIN_PAIRS,
    Coin,
    CoinPair,
    default_min_designated,
    alphabet_array,
    designated_positions,
    generate_code_pair,
    prepare_state,
)
from .protocol import (
    ANALYZER_MATRICES,
    Analyzer,
    Echo,
    Mode,
    TrialStatus,
    VerificationPolicy,
    echo_family,
    null_expected_analyzer,
    run_trial,
)
from .qstate import DensityMatrix, _clamp_prob, _frozen, mix, trace_distance, trace_distance_matrix

PAPER_RHO = np.diag([2.0, 0.0, 1.0, 1.0]) / 4.0
Z95 = 1.959963984540054
MAX_LEAKAGE_DIM = 4096
GRAM_RANK_TOL = 1e-10


class AnalysisError(ValueError):
    pass


class UnsupportedStrategy(AnalysisError):
    pass


class PositionKind(str, enum.Enum):
    DESIGNATED = "designated"
    NON_DESIGNATED = "non-designated"


def family_density_matrix(family: int) -> DensityMatrix:
    """Uniform mixture of the four states of one family."""
    return mix([(prepare_state(family, cp), 0.25) for cp in ALL_COIN_PAIRS])


def wilson_interval(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return (lo, hi)


# ---------------------------------------------------------------- exact oracles


def _coin_cases(kind: PositionKind) -> list[tuple[CoinPair, CoinPair]]:
    """Equally likely (code0, code1) coin pairs at a position of the given kind."""
    both_tails = lambda a, b: a.c1 is Coin.T and b.c1 is Coin.T  # noqa: E731
    want = PositionKind(kind) is PositionKind.DESIGNATED
    return [(a, b) for a in ALL_COIN_PAIRS for b in ALL_COIN_PAIRS if both_tails(a, b) == want]


def _as_strategy(strategy: AdversaryStrategy | str) -> AdversaryStrategy:
    if isinstance(strategy, str):
        return make_strategy(strategy, np.random.default_rng(0))
    return strategy


def _eve_branches(strategy: AdversaryStrategy, psi: np.ndarray) -> list[tuple[float, np.ndarray]]:
    """Every state Eve may forward for honest input ``psi``, with its probability."""
    if isinstance(strategy, Passive):
        return [(1.0, psi)]
    if isinstance(strategy, InterceptResendUniform):
        table = strategy.resend_states()
        return [(1.0 / len(table), row) for row in table]
    if isinstance(strategy, InterceptMeasureResend):
        out = []
        for analyzer, w in strategy.analyzer_weights():
            P = ANALYZER_MATRICES[analyzer]
            v = P @ psi
            p = float(np.vdot(psi, v).real)
            for prob, branch in ((p, v), (1.0 - p, psi - v)):
                if prob > 1e-12:
                    out.append((w * prob, branch / math.sqrt(prob)))
        return out
    raise UnsupportedStrategy(f"{strategy.name or type(strategy).__name__} has no per-check error model")


def _born(P: np.ndarray, phi: np.ndarray) -> float:
    return _clamp_prob(float(np.vdot(phi, P @ phi).real))


def pass_probability_amps(expected: np.ndarray, phi: np.ndarray) -> float:
    return _clamp_prob(float(abs(np.vdot(expected, phi))) ** 2)


def exact_error_probability(
    strategy: AdversaryStrategy | str,
    policy: VerificationPolicy | Mode | str,
    position_kind: PositionKind | str,
) -> float:
    """Probability that one of Bob's checks flags an error at a position.

    Assumes Bob identified the sent bit. Enumerates the sent bit, both
    codes' coins at the position, Eve's discrete randomness and Bob's
    analyzer coin. The paper-analyzer policy only checks designated
    positions, so its value elsewhere is 0.
    """
    strategy = _as_strategy(strategy)
    mode = policy.mode if isinstance(policy, VerificationPolicy) else Mode(policy)
    kind = PositionKind(position_kind)
    if mode is Mode.PAPER_ANALYZER and kind is PositionKind.NON_DESIGNATED:
        if not strategy.enumerable:
            raise UnsupportedStrategy(f"{strategy.name} has no per-check error model")
        return 0.0

    cases = _coin_cases(kind)
    terms = []
    for bit in (0, 1):
        for cps in cases:
            psi = prepare_state(bit, cps[bit]).amps
            for w, phi in _eve_branches(strategy, psi):
                if mode is Mode.PAPER_ANALYZER:
                    # Bob picks the null-expected analyzer half of the time
                    err = 0.5 * _born(ANALYZER_MATRICES[null_expected_analyzer(bit)], phi)
                else:
                    err = 1.0 - pass_probability_amps(psi, phi)
                terms.append(w * err)
    return math.fsum(terms) / (2 * len(cases))


def reflection_detection_probability(echo: Echo | str = Echo.COMPLEMENTARY) -> float:
    """Per-position probability that Alice catches her own reflected sequence.

    Averages ``1 - |<expected|own>|^2`` over the 16 coin-pair combinations
    of the two codes (and both bits).
    """
    echo = Echo(echo)
    vals = []
    for bit in (0, 1):
        for cps in itertools.product(ALL_COIN_PAIRS, repeat=2):
            own = prepare_state(bit, cps[bit]).amps
            exp_family = echo_family(bit, echo)
            expected = prepare_state(exp_family, cps[exp_family]).amps
            vals.append(1.0 - pass_probability_amps(expected, own))
    return float(np.mean(vals))


def undetected_probability(p_e: float, n_checks: int) -> float:
    """Chance that ``n_checks`` independent checks, each failing w.p. ``p_e``, all pass."""
    if not 0.0 <= p_e <= 1.0:
        raise AnalysisError(f"p_e must lie in [0, 1], got {p_e!r}")
    if n_checks < 0 or int(n_checks) != n_checks:
        raise AnalysisError(f"n_checks must be a non-negative integer, got {n_checks!r}")
    return (1.0 - p_e) ** int(n_checks)


# ---------------------------------------------------------------- reuse leakage


@dataclass(frozen=True)
class LeakageReport:
    N: int
    k: int
    trace_distance: float
    helstrom_bound: float
    method: str
    dim: int


def _family_product_states(family: int, N: int) -> np.ndarray:
    """All 4**N codes of one family as per-site states, shape (4**N, N, 4)."""
    site = np.stack([prepare_state(family, cp).amps for cp in ALL_COIN_PAIRS])
    idx = np.array(list(itertools.product(range(4), repeat=N)), dtype=np.intp)
    return site[idx]


def _check_leakage_scale(N: int, k: int) -> int:
    if not (1 <= N <= 3 and 1 <= k <= 3):
        raise AnalysisError(f"reuse leakage supports 1 <= N, k <= 3, got N={N}, k={k}")
    dim = 4 ** (N * k)
    if dim > MAX_LEAKAGE_DIM:
        raise AnalysisError(f"k-copy space of dimension {dim} exceeds {MAX_LEAKAGE_DIM}")
    return dim


def _leakage_gram(N: int, k: int) -> float:
    # rho0 - rho1 = V W V^dagger shares its non-zero spectrum with R W R^dagger,
    # where G = V^dagger V = U L U^dagger and R = L^1/2 U^dagger restricted to the range of G
    X = np.concatenate([_family_product_states(0, N), _family_product_states(1, N)])
    m = X.shape[0] // 2
    G = _kernels.product_gram(X, X, k)
    lam, U = np.linalg.eigh(0.5 * (G + G.conj().T))
    keep = lam > GRAM_RANK_TOL * lam.max()
    R = np.sqrt(lam[keep])[:, None] * U[:, keep].conj().T
    w = np.concatenate([np.full(m, 1.0 / m), np.full(m, -1.0 / m)])
    M = (R * w) @ R.conj().T
    return trace_distance_matrix(0.5 * (M + M.conj().T))


def k_copy_ensemble(family: int, N: int, k: int) -> DensityMatrix:
    """Eve's state after intercepting ``k`` copies of an unknown length-N sequence."""
    _check_leakage_scale(N, k)
    X = _family_product_states(family, N)
    vecs = []
    for sites in X:
        v = sites[0]
        for s in sites[1:]:
            v = np.kron(v, s)
        full = v
        for _ in range(k - 1):
            full = np.kron(full, v)
        vecs.append(full)
    V = np.stack(vecs, axis=1)
    return DensityMatrix(_frozen((V / V.shape[1]) @ V.conj().T))


def reuse_leakage(N: int, k: int, method: str = "gram") -> LeakageReport:
    """Distinguishability of the two families after ``k`` uses of one code pair.

    ``method="dense"`` builds both ``4**(N*k)``-dimensional ensembles and
    diagonalises their difference; ``"gram"`` works in the span of the
    ``2 * 4**N`` ensemble vectors and gives the same number far faster.
    """
    dim = _check_leakage_scale(N, k)
    if method == "gram":
        td = _leakage_gram(N, k)
    elif method == "dense":
        td = trace_distance(k_copy_ensemble(0, N, k), k_copy_ensemble(1, N, k))
    else:
        raise AnalysisError(f"unknown leakage method {method!r}")
    td = min(1.0, max(0.0, td))
    return LeakageReport(N, k, td, 0.5 * (1.0 + td), method, dim)


# ---------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class DetectionReport:
    strategy: str
    policy: str
    position_kind: str
    per_position_error_prob: float | None
    monte_carlo_estimate: float
    ci95: tuple[float, float]
    n_checks: int
    n_errors: int
    n_trials: int

    @property
    def exact_in_ci(self) -> bool | None:
        if self.per_position_error_prob is None:
            return None
        lo, hi = self.ci95
        return lo <= self.per_position_error_prob <= hi


@dataclass(frozen=True)
class MonteCarloConfig:
    trials: int
    N: int
    strategy: str = "passive"
    strategy_params: dict[str, Any] = field(default_factory=dict)
    policy: VerificationPolicy = VerificationPolicy()
    seed: int = 0
    min_designated: int | None = None
    echo: Echo = Echo.COMPLEMENTARY

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise AnalysisError("trials must be at least 1")
        if self.N < 1:
            raise AnalysisError("N must be positive")
        md = self.effective_min_designated
        if not 0 <= md <= self.N:
            raise AnalysisError(f"min_designated={md} must lie in [0, N={self.N}]")

    @property
    def effective_min_designated(self) -> int:
        return default_min_designated(self.N) if self.min_designated is None else self.min_designated


@dataclass
class _Tally:
    statuses: Counter = field(default_factory=Counter)
    checks: Counter = field(default_factory=Counter)  # (kind, "n"|"err")
    identified: int = 0
    identified_correct: int = 0
    alice_positions: int = 0
    alice_failed: int = 0
    eve_guesses: int = 0
    eve_correct: int = 0
    designated: int = 0

    def merge(self, other: "_Tally") -> None:
        self.statuses.update(other.statuses)
        self.checks.update(other.checks)
        for name in (
            "identified",
            "identified_correct",
            "alice_positions",
            "alice_failed",
            "eve_guesses",
            "eve_correct",
            "designated",
        ):
            setattr(self, name, getattr(self, name) + getattr(other, name))


def trial_rngs(seed: int, trial: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Protocol and adversary generators for one trial, independent of scheduling."""
    ss = np.random.SeedSequence(seed, spawn_key=(trial,))
    proto, eve = ss.spawn(2)
    return np.random.default_rng(proto), np.random.default_rng(eve)


def _run_chunk(cfg: MonteCarloConfig, start: int, stop: int) -> _Tally:
    tally = _Tally()
    md = cfg.effective_min_designated
    for t in range(start, stop):
        rng, eve_rng = trial_rngs(cfg.seed, t)
        pair = generate_code_pair(rng, cfg.N, md, pair_id=t)
        bit = int(rng.integers(0, 2))
        strategy = make_strategy(cfg.strategy, eve_rng, **cfg.strategy_params)
        log = EveLog()
        out = run_trial(bit, pair, strategy, cfg.policy, rng, cfg.echo, log)
        tally.statuses[out.status.value] += 1
        desig = set(designated_positions(pair))
        tally.designated += len(desig)
        bob = out.bob
        if bob is not None and bob.bit is not None:
            tally.identified += 1
            if bob.bit == bit:
                tally.identified_correct += 1
                for c in bob.checks:
                    kind = PositionKind.DESIGNATED if c.position in desig else PositionKind.NON_DESIGNATED
                    tally.checks[(kind.value, "n")] += 1
                    tally.checks[(kind.value, "err")] += int(c.error)
        if out.alice is not None:
            tally.alice_positions += len(out.alice.passed)
            tally.alice_failed += out.alice.n_failed
        tally.eve_guesses += 1
        tally.eve_correct += int(eve_guess_bit(log, GuessMethod.RECORDED, eve_rng).bit == bit)
    return tally


def _chunks(trials: int, workers: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(trials / max(1, workers * 4)))
    return [(s, min(trials, s + size)) for s in range(0, trials, size)]


@dataclass(frozen=True)
class MonteCarloReport:
    config: MonteCarloConfig
    histogram: dict[str, int]
    detection: dict[str, DetectionReport]
    identified: int
    identified_correct: int
    alice_positions: int
    alice_failed: int
    eve_guesses: int
    eve_correct: int
    mean_designated: float

    def rate(self, status: TrialStatus | str) -> float:
        return self.histogram.get(TrialStatus(status).value, 0) / self.config.trials

    @property
    def alice_detection_rate(self) -> float:
        return self.alice_failed / self.alice_positions if self.alice_positions else float("nan")

    @property
    def eve_accuracy(self) -> float:
        return self.eve_correct / self.eve_guesses if self.eve_guesses else float("nan")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["config"]["policy"] = {
            "mode": self.config.policy.mode.value,
            "measure_once_per_designated": self.config.policy.measure_once_per_designated,
        }
        d["config"]["echo"] = self.config.echo.value
        return d


def monte_carlo(cfg: MonteCarloConfig, workers: int = 1) -> MonteCarloReport:
    """Run ``cfg.trials`` independent single-bit rounds of the protocol.

    Trial ``t`` draws from generators seeded by ``(cfg.seed, t)``, so the
    report does not depend on ``workers``.
    """
    chunks = _chunks(cfg.trials, workers)
    total = _Tally()
    if workers <= 1:
        for a, b in chunks:
            total.merge(_run_chunk(cfg, a, b))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_chunk, [cfg] * len(chunks), *zip(*chunks)):
                total.merge(part)

    detection = {}
    probe = make_strategy(cfg.strategy, np.random.default_rng(0), **cfg.strategy_params)
    for kind in PositionKind:
        n = total.checks[(kind.value, "n")]
        err = total.checks[(kind.value, "err")]
        try:
            exact = exact_error_probability(probe, cfg.policy, kind)
        except UnsupportedStrategy:
            exact = None
        detection[kind.value] = DetectionReport(
            strategy=cfg.strategy,
            policy=cfg.policy.mode.value,
            position_kind=kind.value,
            per_position_error_prob=exact,
            monte_carlo_estimate=err / n if n else 0.0,
            ci95=wilson_interval(err, n),
            n_checks=n,
            n_errors=err,
            n_trials=cfg.trials,
        )
    return MonteCarloReport(
        config=cfg,
        histogram={s.value: total.statuses.get(s.value, 0) for s in TrialStatus},
        detection=detection,
        identified=total.identified,
        identified_correct=total.identified_correct,
        alice_positions=total.alice_positions,
        alice_failed=total.alice_failed,
        eve_guesses=total.eve_guesses,
        eve_correct=total.eve_correct,
        mean_designated=total.designated / cfg.trials,
    )


def simulate_checks(
    strategy: str,
    policy: VerificationPolicy | Mode | str,
    n_checks: int,
    trials: int,
    seed: int = 0,
    strategy_params: dict[str, Any] | None = None,
) -> np.ndarray:
    """Error counts of ``trials`` batches of ``n_checks`` designated-position checks.

    A vectorised shortcut around the full protocol: honest B/D states of a
    random bit, Eve's action position by position, then one of Bob's
    checks against the correctly identified family. Returns an integer
    array of length ``trials``.
    """
    mode = policy.mode if isinstance(policy, VerificationPolicy) else Mode(policy)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xC4EC,)))
    strat = make_strategy(strategy, rng, **(strategy_params or {}))
    total = trials * n_checks
    bits = rng.integers(0, 2, size=trials)
    bit_rows = np.repeat(bits, n_checks)
    c2 = rng.integers(0, 2, size=total)
    # designated positions carry B states (bit 0) or D states (bit 1)
    tails = np.stack([[prepare_state(f, CoinPair(Coin.T, c)).amps for c in Coin] for f in (0, 1)])
    honest = tails[bit_rows, c2]

    if isinstance(strat, Passive):
        sent = honest
    elif isinstance(strat, InterceptResendUniform):
        table = alphabet_array(RESEND_ALPHABETS[strat.alphabet])
        sent = table[rng.integers(0, len(table), size=total)]
    elif isinstance(strat, InterceptMeasureResend):
        weights = strat.analyzer_weights()
        choice = rng.integers(0, 2, size=total) if len(weights) == 2 else np.full(total, weights[0][0])
        _, _, sent = _kernels.measure_rows(honest, choice.astype(np.intp), ANALYZER_MATRICES, rng.random(total))
    else:
        raise UnsupportedStrategy(f"{strategy} has no per-check error model")

    if mode is Mode.PAPER_ANALYZER:
        analyzers = rng.integers(0, 2, size=total).astype(np.intp)
        fired, _, _ = _kernels.measure_rows(sent, analyzers, ANALYZER_MATRICES, rng.random(total))
        null_exp = np.where(bit_rows == 1, Analyzer.C, Analyzer.A)
        errors = fired & (analyzers == null_exp)
    else:
        passed, _, _ = _kernels.test_rows(honest, sent, rng.random(total))
        errors = ~passed
    return errors.reshape(trials, n_checks).sum(axis=1)
