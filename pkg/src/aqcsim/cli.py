"""Command-line front end: ``aqcsim {analytics,simulate,sweep,scenario}``.

Exit codes: 0 success, 1 an analytic check failed, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from . import codebook
from .adversary import STRATEGIES, AdversaryError, GuessMethod, EveLog, eve_guess_bit, make_strategy
from .analysis import (
    PAPER_RHO,
    AnalysisError,
    MonteCarloConfig,
    PositionKind,
    exact_error_probability,
    family_density_matrix,
    monte_carlo,
    reflection_detection_probability,
    reuse_leakage,
    simulate_checks,
    trial_rngs,
    undetected_probability,
    wilson_interval,
)
from .codebook import ALL_COIN_PAIRS, Coin, CodeStore, CoinPair, prepare_state
from .protocol import (
    Echo,
    Mode,
    SessionAborted,
    TrialStatus,
    VerificationPolicy,
    run_session,
)
from .qstate import born_probability, helstrom_success, inner, projector_pa, projector_pc, trace_distance

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2
CSV_HEADER = ["kind", "params", "exact", "estimate", "ci95_lo", "ci95_hi", "extra"]
SCENARIOS = ("reflect-to-alice", "reflect-to-bob", "same-sequence-echo")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    N: int = 100
    trials: int = 1000
    strategy: str = "passive"
    strategy_params: dict[str, Any] = field(default_factory=dict)
    policy: str = Mode.PAPER_ANALYZER.value
    measure_once: bool = True
    min_designated: int | None = None
    max_retries: int = 3
    code_store_size: int = 16
    format: str = "jsonl"
    echo: str = Echo.COMPLEMENTARY.value
    workers: int = 1

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        for name in ("seed", "N", "trials", "max_retries", "code_store_size", "workers"):
            need(isinstance(getattr(self, name), int) and not isinstance(getattr(self, name), bool), f"{name} must be an integer")
        need(0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer")
        need(self.N >= 1, "N must be positive")
        need(self.trials >= 1, "trials must be positive")
        need(self.max_retries >= 0, "max_retries must be non-negative")
        need(self.code_store_size >= 1, "code_store_size must be positive")
        need(self.workers >= 1, "workers must be positive")
        need(self.strategy in STRATEGIES, f"strategy must be one of {sorted(STRATEGIES)}")
        need(isinstance(self.strategy_params, dict), "strategy_params must be an object")
        need(self.policy in {m.value for m in Mode}, f"policy must be one of {[m.value for m in Mode]}")
        need(isinstance(self.measure_once, bool), "measure_once must be a boolean")
        need(self.format in ("jsonl", "csv"), "format must be jsonl or csv")
        need(self.echo in {e.value for e in Echo}, f"echo must be one of {[e.value for e in Echo]}")
        if self.min_designated is not None:
            need(isinstance(self.min_designated, int), "min_designated must be an integer")
            need(0 <= self.min_designated <= self.N, "min_designated must lie in [0, N]")
        try:
            make_strategy(self.strategy, None, **self.strategy_params)
        except AdversaryError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def verification_policy(self) -> VerificationPolicy:
        return VerificationPolicy(Mode(self.policy), self.measure_once)

    @property
    def effective_min_designated(self) -> int:
        return codebook.default_min_designated(self.N) if self.min_designated is None else self.min_designated

    def mc_config(self, **overrides) -> MonteCarloConfig:
        base = dict(
            trials=self.trials,
            N=self.N,
            strategy=self.strategy,
            strategy_params=dict(self.strategy_params),
            policy=self.verification_policy,
            seed=self.seed,
            min_designated=self.min_designated,
            echo=Echo(self.echo),
        )
        base.update(overrides)
        return MonteCarloConfig(**base)

    def public(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("format", "workers")}


# ---------------------------------------------------------------- output


def record(kind, params, exact=None, estimate=None, ci95=None, **extra) -> dict:
    rec = {"kind": kind, "params": params, "exact": exact, "estimate": estimate, "ci95": list(ci95) if ci95 else None}
    rec.update(extra)
    return rec


def _clean(x):
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float):
        if math.isnan(x):
            return None
        return x + 0.0  # drop negative zero
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def render(records: Sequence[dict], fmt: str) -> str:
    records = [_clean(r) for r in records]
    if fmt == "jsonl":
        return "".join(json.dumps(r, separators=(", ", ": ")) + "\n" for r in records)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        ci = r.get("ci95") or [None, None]
        extra = {k: v for k, v in r.items() if k not in ("kind", "params", "exact", "estimate", "ci95")}
        row = [r["kind"], json.dumps(r["params"], sort_keys=True), r["exact"], r["estimate"], ci[0], ci[1]]
        row.append(json.dumps(extra, sort_keys=True) if extra else "")
        w.writerow(["" if v is None else (json.dumps(v) if isinstance(v, list) else v) for v in row])
    return buf.getvalue()


def emit(records: Sequence[dict], cfg_format: str, out: str | None, summary: Callable[[], str] | None = None) -> None:
    text = render(records, cfg_format)
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        if summary is not None:
            print(summary())
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- analytics


@dataclass
class Claim:
    kind: str
    params: dict
    target: Any
    value: Any
    tol: float
    relative: bool = False

    @property
    def passed(self) -> bool:
        t = np.asarray(self.target, dtype=float)
        v = np.asarray(self.value, dtype=float)
        scale = np.abs(t) if self.relative else 1.0
        return bool(np.all(np.abs(v - t) <= self.tol * scale))


def analytic_claims() -> list[Claim]:
    pa, pc = projector_pa(), projector_pc()
    st = {codebook.state_label(f, cp): prepare_state(f, cp) for f in (0, 1) for cp in ALL_COIN_PAIRS}
    rho0, rho1 = family_density_matrix(0), family_density_matrix(1)
    claims = [
        Claim("density-matrix", {"family": 0}, PAPER_RHO.tolist(), rho0.matrix.real.round(15).tolist(), 1e-12),
        Claim("density-matrix", {"family": 1}, PAPER_RHO.tolist(), rho1.matrix.real.round(15).tolist(), 1e-12),
        Claim("trace-distance", {"between": "family0,family1"}, 0.0, trace_distance(rho0, rho1), 1e-12),
        Claim("helstrom-single-copy", {}, 0.5, helstrom_success(rho0, rho1), 1e-12),
    ]
    born = [("A", "D+", 0.25), ("A", "D-", 0.25), ("A", "B+", 0.0), ("A", "B-", 0.0),
            ("C", "B+", 0.25), ("C", "B-", 0.25), ("C", "D+", 0.0), ("C", "D-", 0.0),
            ("A", "A+", 0.5), ("C", "C+", 0.5)]  # fmt: skip
    for an, label, target in born:
        p = born_probability(pa if an == "A" else pc, st[label])
        claims.append(Claim("born-probability", {"analyzer": an, "state": label}, target, p, 1e-12))
    for letter in "ABCD":
        claims.append(
            Claim("orthogonal-pair", {"states": f"{letter}+,{letter}-"}, 0.0, abs(inner(st[letter + "+"], st[letter + "-"])), 1e-12)
        )
    ident = np.mean(
        [0.5 * born_probability(pa, prepare_state(1, CoinPair(Coin.T, c))) for c in Coin]
        + [0.5 * born_probability(pc, prepare_state(0, CoinPair(Coin.T, c))) for c in Coin]
    )
    claims.append(Claim("identification-per-measurement", {}, 0.125, float(ident), 1e-12))
    p_e = exact_error_probability("intercept-resend-uniform", Mode.PAPER_ANALYZER, PositionKind.DESIGNATED)
    claims.append(Claim("p_e", {"strategy": "intercept-resend-uniform", "policy": "paper-analyzer"}, 0.125, p_e, 1e-12))
    p_ne = undetected_probability(p_e, 100)
    claims.append(Claim("p_ne", {"p_e": 0.125, "n_checks": 100}, float(Fraction(7, 8) ** 100), p_ne, 1e-10, relative=True))
    claims.append(Claim("p_ne-order-of-magnitude", {"n_checks": 100}, -6, round(math.log10(p_ne)), 0))
    claims.append(Claim("reflection-detection", {"echo": "complementary"}, 0.625, reflection_detection_probability(Echo.COMPLEMENTARY), 1e-12))
    claims.append(Claim("reflection-detection", {"echo": "same"}, 0.0, reflection_detection_probability(Echo.SAME), 1e-12))
    claims.append(Claim("reuse-leakage", {"N": 1, "k": 1}, 0.0, reuse_leakage(1, 1).trace_distance, 1e-12))
    tds = [reuse_leakage(1, k).trace_distance for k in (1, 2, 3)]
    claims.append(Claim("reuse-leakage-increasing", {"N": 1, "k": [1, 2, 3]}, 1.0, float(tds[0] < tds[1] < tds[2]), 0))
    return claims


def _matrix_text(m) -> str:
    return "\n".join("    [" + "  ".join(f"{x + 0.0:5.2f}" for x in row) + " ]" for row in m)


def cmd_analytics(args) -> int:
    saved = codebook.NW_SIGN
    if args.nw_sign is not None:
        codebook.NW_SIGN = args.nw_sign
    try:
        claims = analytic_claims()
    finally:
        codebook.NW_SIGN = saved
    records = [
        record(c.kind, c.params, c.target, c.value, None, tol=c.tol, relative=c.relative, passed=c.passed) for c in claims
    ]
    lines = []
    for c in claims:
        if c.kind == "density-matrix":
            lines.append(f"{'PASS' if c.passed else 'FAIL'}  density matrix of family {c.params['family']} (1/4 diag(2,0,1,1)):")
            lines.append(_matrix_text(c.value))
        else:
            params = " ".join(f"{k}={v}" for k, v in c.params.items())
            lines.append(f"{'PASS' if c.passed else 'FAIL'}  {c.kind} {params}: {c.value!r} (expected {c.target!r}, tol {c.tol:g})")
    n_fail = sum(not c.passed for c in claims)
    lines.append(f"{len(claims) - n_fail}/{len(claims)} analytic checks passed")
    print("\n".join(lines))
    if args.out:
        emit(records, args.format or "jsonl", args.out)
    return EXIT_OK if n_fail == 0 else EXIT_CHECK_FAILED


# ---------------------------------------------------------------- simulate


def _rate_record(kind, params, count, n, exact=None, **extra):
    return record(kind, params, exact, count / n if n else None, wilson_interval(count, n), count=count, n=n, **extra)


def mc_records(rep) -> list[dict]:
    cfg = rep.config
    n = cfg.trials
    recs = [record("config", rep_params(cfg))]
    for status, count in rep.histogram.items():
        recs.append(_rate_record("outcome", {"status": status}, count, n))
    for kind, d in rep.detection.items():
        recs.append(
            record(
                "check-error",
                {"position_kind": kind, "strategy": d.strategy, "policy": d.policy},
                d.per_position_error_prob,
                d.monte_carlo_estimate if d.n_checks else None,
                d.ci95,
                n_checks=d.n_checks,
                n_errors=d.n_errors,
            )
        )
    recs.append(_rate_record("identified", {}, rep.identified, n))
    recs.append(_rate_record("identified-correct", {}, rep.identified_correct, rep.identified))
    recs.append(_rate_record("alice-position-detection", {}, rep.alice_failed, rep.alice_positions))
    recs.append(_rate_record("eve-guess-accuracy", {"method": "recorded"}, rep.eve_correct, rep.eve_guesses, exact=0.5))
    recs.append(record("mean-designated", {}, None, rep.mean_designated))
    return recs


def rep_params(cfg: MonteCarloConfig) -> dict:
    return {
        "trials": cfg.trials,
        "N": cfg.N,
        "strategy": cfg.strategy,
        "strategy_params": cfg.strategy_params,
        "policy": cfg.policy.mode.value,
        "measure_once": cfg.policy.measure_once_per_designated,
        "seed": cfg.seed,
        "min_designated": cfg.effective_min_designated,
        "echo": cfg.echo.value,
    }


def cmd_simulate(cfg: RunConfig, args) -> int:
    rep = monte_carlo(cfg.mc_config(), workers=cfg.workers)

    def summary():
        parts = [f"{k}={v}" for k, v in rep.histogram.items() if v]
        return f"{cfg.trials} trials: " + ", ".join(parts)

    emit(mc_records(rep), cfg.format, args.out, summary)
    return EXIT_OK


# ---------------------------------------------------------------- sweep


def parse_range(text: str) -> list[int]:
    try:
        parts = [int(p) for p in text.split(":")]
    except ValueError:
        raise ConfigError(f"bad range {text!r}; use START:STOP[:STEP] (inclusive)") from None
    if len(parts) == 1:
        parts = [parts[0], parts[0]]
    if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] <= 0):
        raise ConfigError(f"bad range {text!r}; use START:STOP[:STEP] (inclusive)")
    step = parts[2] if len(parts) == 3 else 1
    values = list(range(parts[0], parts[1] + 1, step))
    if not values:
        raise ConfigError(f"range {text!r} is empty")
    return values


def cmd_sweep(cfg: RunConfig, args) -> int:
    values = parse_range(args.range)
    recs = []
    if args.variable == "n_checks":
        strategy = cfg.strategy if cfg.strategy != "passive" or args.p_e is not None else "intercept-resend-uniform"
        if args.p_e is not None:
            p_e = args.p_e
        else:
            p_e = exact_error_probability(make_strategy(strategy, None, **cfg.strategy_params), cfg.policy, PositionKind.DESIGNATED)
        for n in values:
            if n < 0:
                raise ConfigError("n_checks must be non-negative")
            est, ci, zero = None, None, None
            if args.p_e is None:
                errs = simulate_checks(strategy, cfg.policy, n, cfg.trials, seed=cfg.seed + n, strategy_params=cfg.strategy_params)
                zero = int(np.sum(errs == 0))
                est, ci = zero / cfg.trials, wilson_interval(zero, cfg.trials)
            recs.append(
                record("sweep", {"variable": "n_checks", "n_checks": n, "p_e": p_e, "strategy": strategy}, undetected_probability(p_e, n), est, ci, trials=cfg.trials)
            )
    else:
        for v in values:
            N, k = (cfg.N, v) if args.variable == "k" else (v, args.k)
            try:
                gram = reuse_leakage(N, k, "gram")
            except AnalysisError as exc:
                raise ConfigError(str(exc)) from None
            dense = reuse_leakage(N, k, "dense").trace_distance if not args.no_dense else None
            recs.append(
                record("sweep", {"variable": args.variable, "N": N, "k": k}, gram.trace_distance, dense, None, helstrom_bound=gram.helstrom_bound, dim=gram.dim)
            )
    emit(recs, cfg.format, args.out, lambda: f"{len(recs)} sweep rows written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- scenarios


def _reflect_to_alice_records(cfg: RunConfig, echo: Echo) -> list[dict]:
    rep = monte_carlo(cfg.mc_config(strategy="reflect-to-alice", strategy_params={}, echo=echo), workers=cfg.workers)
    n = cfg.trials
    accepted = rep.histogram[TrialStatus.UNDETECTED_FAILURE.value]
    exact_pos = reflection_detection_probability(echo)
    return [
        record("config", rep_params(rep.config)),
        _rate_record("alice-acceptance", {"echo": echo.value}, accepted, n, exact=1.0 if echo is Echo.SAME else None),
        _rate_record("alice-position-detection", {"echo": echo.value}, rep.alice_failed, rep.alice_positions, exact=exact_pos),
        _rate_record("bob-received", {}, rep.identified, n, exact=0.0),
        _rate_record("eve-guess-accuracy", {"method": "recorded"}, rep.eve_correct, rep.eve_guesses, exact=0.5),
    ]


def reflect_to_bob_stats(cfg: RunConfig, n_bits: int = 2) -> dict[str, int]:
    """Run ``cfg.trials`` sessions of ``n_bits`` random bits under the reflect-to-Bob attack."""
    counts = {"sessions": 0, "aborted": 0, "sustained": 0, "alice_errors": 0, "bob_injected": 0, "trials": 0}
    md = cfg.effective_min_designated
    for t in range(cfg.trials):
        rng, eve_rng = trial_rngs(cfg.seed, t)
        store = CodeStore.generate(rng, cfg.code_store_size, cfg.N, md)
        bits = rng.integers(0, 2, size=n_bits).tolist()
        strategy = make_strategy("reflect-to-bob", eve_rng)
        counts["sessions"] += 1
        try:
            tr = run_session(bits, store, strategy, cfg.verification_policy, rng, cfg.max_retries, Echo(cfg.echo))
        except SessionAborted as exc:
            tr = exc.transcript
            counts["aborted"] += 1
        else:
            # both impersonations held: every bit accepted by Alice while Bob took injected bits
            if all(t_.status is TrialStatus.UNDETECTED_FAILURE for t_ in tr.trials if t_.status.accepted_by_alice):
                counts["sustained"] += 1
        counts["trials"] += len(tr.trials)
        counts["alice_errors"] += sum(t_.status is TrialStatus.ERROR_DETECTED_BY_ALICE for t_ in tr.trials)
        counts["bob_injected"] += sum(len(t_.bob_bits) > 1 for t_ in tr.trials)
    return counts


def cmd_scenario(cfg: RunConfig, args) -> int:
    name = args.name
    if name == "same-sequence-echo":
        recs = _reflect_to_alice_records(cfg, Echo.SAME)
    elif name == "reflect-to-alice":
        recs = _reflect_to_alice_records(cfg, Echo(cfg.echo))
    else:
        c = reflect_to_bob_stats(cfg)
        params = {"N": cfg.N, "bits": 2, "max_retries": cfg.max_retries, "seed": cfg.seed}
        recs = [
            record("config", params),
            _rate_record("session-aborted", params, c["aborted"], c["sessions"]),
            _rate_record("impersonation-sustained", params, c["sustained"], c["sessions"]),
            _rate_record("alice-detects-per-trial", params, c["alice_errors"], c["trials"]),
            _rate_record("bob-accepted-injected-bit", params, c["bob_injected"], c["trials"]),
        ]
    emit(recs, cfg.format, args.out, lambda: f"scenario {name}: {len(recs)} records written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON file of run settings; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", dest="N", type=int, help="sequence length N")
    p.add_argument("--trials", type=int)
    p.add_argument("--strategy", help=f"one of {', '.join(sorted(STRATEGIES))}")
    p.add_argument("--strategy-param", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--policy", help="paper-analyzer or expected-state")
    p.add_argument("--remeasure", dest="measure_once", action="store_const", const=False,
                   help="re-check designated positions left intact by identification")  # fmt: skip
    p.add_argument("--min-designated", type=int)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--code-store-size", type=int)
    p.add_argument("--echo", help="complementary or same")
    p.add_argument("--workers", type=int)
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aqcsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytics", help="recompute the closed-form claims and check them")
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.add_argument("--out")
    p.add_argument("--nw-sign", type=int, choices=[1, -1], help=argparse.SUPPRESS)

    p = sub.add_parser("simulate", help="Monte Carlo of single-bit protocol rounds")
    _add_common(p)

    p = sub.add_parser("sweep", help="tabulate p_ne over n_checks or reuse leakage over k or N")
    _add_common(p)
    p.add_argument("--variable", required=True, choices=["n_checks", "k", "N"])
    p.add_argument("--range", required=True, help="START:STOP[:STEP], inclusive")
    p.add_argument("--p-e", type=float, help="fixed per-check error probability (n_checks sweep)")
    p.add_argument("--k", type=int, default=2, help="copies per sequence for the N sweep")
    p.add_argument("--no-dense", action="store_true", help="skip the brute-force leakage column")

    p = sub.add_parser("scenario", help="scripted reflection attacks")
    p.add_argument("name", choices=SCENARIOS)
    _add_common(p)
    return parser


def _parse_param(text: str) -> tuple[str, Any]:
    key, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"strategy parameter {text!r} must look like KEY=VALUE")
    return key, value


def resolve_config(args) -> RunConfig:
    data: dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for name in ("seed", "N", "trials", "strategy", "policy", "measure_once", "min_designated",
                 "max_retries", "code_store_size", "echo", "workers", "format"):  # fmt: skip
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    if args.strategy_param:
        params = dict(data.get("strategy_params", {}))
        params.update(_parse_param(t) for t in args.strategy_param)
        data["strategy_params"] = params
    return RunConfig.from_mapping(data)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "analytics":
            return cmd_analytics(args)
        cfg = resolve_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        if args.command == "sweep":
            return cmd_sweep(cfg, args)
        return cmd_scenario(cfg, args)
    except (ConfigError, AnalysisError, codebook.CodebookError) as exc:
        print(f"aqcsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
