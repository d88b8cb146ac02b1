import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqcsim.qstate import (
    DensityMatrix,
    Projector,
    QStateError,
    Result,
    basis_state,
    born_probability,
    expected_state_test,
    inner,
    make_state,
    measure,
    mix,
    pass_probability,
    projector_onto,
    projector_pa,
    projector_pc,
    pure_density,
    tensor,
    tensor_density,
    trace_distance,
)

from conftest import R, binomial_within

# hand-written amplitudes in the basis (H_r, V_r, H_s, V_s)
A_P = make_state([R, 0, R, 0])
A_M = make_state([R, 0, -R, 0])
B_P = make_state([R, 0, 0, R])
C_P = make_state([R, 0, 0.5, 0.5])
D_P = make_state([R, 0, -0.5, 0.5])

PHASES = [1, -1, 1j, -1j]

components = st.floats(-1, 1, allow_nan=False, allow_infinity=False)


@st.composite
def states(draw, dim=4):
    raw = [complex(draw(components), draw(components)) for _ in range(dim)]
    if sum(abs(z) ** 2 for z in raw) < 1e-6:
        raw[0] = 1.0
    return make_state(raw)


class TestMakeState:
    def test_basis_vector(self):
        s = make_state([1, 0, 0, 0])
        assert np.array_equal(s.amps, [1, 0, 0, 0])

    def test_a_plus(self):
        s = make_state([R, 0, R, 0])
        assert np.allclose(s.amps, [R, 0, R, 0], atol=1e-15)

    def test_normalizes(self):
        assert np.allclose(make_state([2, 0, 0, 0]).amps, [1, 0, 0, 0])

    def test_zero_vector_rejected(self):
        with pytest.raises(QStateError):
            make_state([0, 0, 0, 0])

    def test_non_finite_rejected(self):
        with pytest.raises(QStateError):
            make_state([np.nan, 1, 0, 0])

    def test_amplitudes_are_read_only(self):
        with pytest.raises(ValueError):
            A_P.amps[0] = 0


class TestInner:
    def test_orthogonal_pair(self):
        assert abs(inner(A_P, A_M)) < 1e-15

    def test_a_plus_b_plus_quarter(self):
        # <A+|B+> = (1/sqrt2)(1/sqrt2) from the shared H_r term only
        assert abs(inner(A_P, B_P)) ** 2 == pytest.approx(0.25, abs=1e-15)

    def test_self(self):
        assert inner(C_P, C_P) == pytest.approx(1.0, abs=1e-15)

    def test_conjugate_linear_in_first_argument(self):
        a = make_state([1, 1j, 0, 0])
        b = basis_state(1)
        assert inner(a.with_phase(1j), b) == pytest.approx(-1j * inner(a, b))

    def test_dim_mismatch(self):
        with pytest.raises(QStateError):
            inner(A_P, basis_state(0, 16))


class TestAnalyzers:
    def test_projector_matrices(self):
        assert np.allclose(projector_pa().matrix, np.diag([0, 0, 1, 0]))
        expected = np.zeros((4, 4))
        expected[2:, 2:] = 0.5
        assert np.allclose(projector_pc().matrix, expected)

    @pytest.mark.parametrize(
        "proj, state, p",
        [
            (projector_pa, D_P, 0.25),
            (projector_pa, B_P, 0.0),
            (projector_pa, A_P, 0.5),
            (projector_pc, D_P, 0.0),
            (projector_pc, B_P, 0.25),
            (projector_pc, C_P, 0.5),
        ],
    )
    def test_born_probability(self, proj, state, p):
        assert born_probability(proj(), state) == pytest.approx(p, abs=1e-12)

    def test_invalid_projector_rejected(self):
        with pytest.raises(QStateError):
            Projector(np.array([[1, 1], [0, 1]], dtype=complex))
        with pytest.raises(QStateError):
            Projector(np.diag([2.0, 0.0]).astype(complex))

    @settings(max_examples=100, deadline=None)
    @given(states())
    def test_complement_sums_to_one(self, psi):
        for p in (projector_pa(), projector_pc()):
            assert born_probability(p, psi) + born_probability(p.complement(), psi) == pytest.approx(1, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(states(), st.sampled_from(PHASES))
    def test_global_phase_invariance(self, psi, phase):
        shifted = psi.with_phase(phase)
        for p in (projector_pa(), projector_pc()):
            assert born_probability(p, shifted) == pytest.approx(born_probability(p, psi), abs=1e-12)
        assert pass_probability(A_P, shifted) == pytest.approx(pass_probability(A_P, psi), abs=1e-12)
        assert trace_distance(pure_density(shifted), pure_density(A_P)) == pytest.approx(
            trace_distance(pure_density(psi), pure_density(A_P)), abs=1e-9
        )


class TestMeasure:
    def test_zero_probability_branch_never_taken(self, rng):
        for _ in range(500):
            out = measure(projector_pc(), D_P, rng)
            assert out.result is Result.NULL
            assert out.post_state.equiv(D_P)

    def test_null_on_b_leaves_state(self, rng):
        for _ in range(500):
            out = measure(projector_pa(), B_P, rng)
            assert out.result is Result.NULL and out.post_state.equiv(B_P)

    def test_null_branch_post_state_on_d(self, rng):
        # (1 - P_A)|D+> = (1/sqrt2)|H_r> + (1/2)|V_s>, renormalized
        expected = make_state([R, 0, 0, 0.5])
        nulls = [o for o in (measure(projector_pa(), D_P, rng) for _ in range(200)) if not o.positive]
        assert nulls
        assert all(o.post_state.equiv(expected) for o in nulls)

    def test_positive_branch_post_state(self, rng):
        hits = [o for o in (measure(projector_pa(), D_P, rng) for _ in range(200)) if o.positive]
        assert hits and all(o.post_state.equiv(basis_state(2)) for o in hits)

    def test_frequency_matches_born_rule(self):
        rng = np.random.default_rng(99)
        n = 100_000
        hits = sum(measure(projector_pa(), D_P, rng).positive for _ in range(n))
        assert binomial_within(hits, n, 0.25)

    @settings(max_examples=40, deadline=None)
    @given(states(), st.integers(0, 2**32 - 1))
    def test_post_state_normalized(self, psi, seed):
        out = measure(projector_pc(), psi, np.random.default_rng(seed))
        assert np.linalg.norm(out.post_state.amps) == pytest.approx(1, abs=1e-9)


class TestExpectedStateTest:
    def test_identical_always_passes(self, rng):
        assert all(expected_state_test(A_P, A_P, rng).passed for _ in range(200))

    def test_orthogonal_always_fails(self, rng):
        assert not any(expected_state_test(A_P, A_M, rng).passed for _ in range(200))

    def test_c_plus_against_a_plus(self):
        p = (1 + 1 / math.sqrt(2)) ** 2 / 4
        assert pass_probability(C_P, A_P) == pytest.approx(p, abs=1e-12)
        assert p == pytest.approx(0.7286, abs=1e-4)
        rng = np.random.default_rng(5)
        n = 40_000
        passes = sum(expected_state_test(C_P, A_P, rng).passed for _ in range(n))
        assert binomial_within(passes, n, p)


class TestDensity:
    def test_single_state_is_pure_projector(self):
        rho = mix([(A_P, 1.0)])
        assert np.allclose(rho.matrix @ rho.matrix, rho.matrix)
        assert np.allclose(rho.matrix, projector_onto(A_P).matrix)

    def test_family_zero_mixture(self):
        states0 = [make_state(v) for v in ([R, 0, R, 0], [R, 0, -R, 0], [R, 0, 0, R], [R, 0, 0, -R])]
        rho = mix([(s, 0.25) for s in states0])
        assert np.allclose(rho.matrix, np.diag([2, 0, 1, 1]) / 4, atol=1e-12)

    def test_family_one_mixture_is_the_same(self):
        states1 = [make_state(v) for v in ([R, 0, .5, .5], [R, 0, -.5, -.5], [R, 0, -.5, .5], [R, 0, .5, -.5])]
        rho = mix([(s, 0.25) for s in states1])
        assert np.allclose(rho.matrix, np.diag([2, 0, 1, 1]) / 4, atol=1e-12)

    def test_bad_weights(self):
        with pytest.raises(QStateError):
            mix([(A_P, 0.5)])
        with pytest.raises(QStateError):
            mix([(A_P, 1.5), (B_P, -0.5)])

    def test_invalid_matrices_rejected(self):
        with pytest.raises(QStateError):
            DensityMatrix(np.diag([0.5, 0.6]).astype(complex))
        with pytest.raises(QStateError):
            DensityMatrix(np.diag([1.5, -0.5]).astype(complex))
        with pytest.raises(QStateError):
            DensityMatrix(np.array([[0.5, 1], [0, 0.5]], dtype=complex))


class TestTraceDistance:
    def test_self_zero(self):
        rho = mix([(A_P, 0.3), (D_P, 0.7)])
        assert trace_distance(rho, rho) == pytest.approx(0, abs=1e-15)

    def test_orthogonal_pure_states(self):
        assert trace_distance(pure_density(A_P), pure_density(A_M)) == pytest.approx(1, abs=1e-12)

    def test_pure_state_formula(self):
        # for pure states T = sqrt(1 - |<a|b>|^2)
        t = trace_distance(pure_density(A_P), pure_density(B_P))
        assert t == pytest.approx(math.sqrt(0.75), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(states(), states(), states(), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_triangle_and_symmetry(self, a, b, c, wa, wb, wc):
        ra = mix([(a, wa), (b, 1 - wa)])
        rb = mix([(b, wb), (c, 1 - wb)])
        rc = mix([(c, wc), (a, 1 - wc)])
        ab, bc, ac = trace_distance(ra, rb), trace_distance(rb, rc), trace_distance(ra, rc)
        assert ac <= ab + bc + 1e-9
        assert ab == pytest.approx(trace_distance(rb, ra), abs=1e-12)
        assert 0 <= ab <= 1


class TestTensor:
    def test_basis_product(self):
        t = tensor(basis_state(0), basis_state(0))
        assert t.dim == 16 and t.amps[0] == 1

    def test_norm_and_first_amplitude(self):
        t = tensor(A_P, A_P)
        assert np.linalg.norm(t.amps) == pytest.approx(1)
        assert t.amps[0] == pytest.approx(0.5)

    def test_first_factor_major(self):
        t = tensor(basis_state(1), basis_state(2))
        assert t.amps[1 * 4 + 2] == 1

    def test_overflow_guard(self):
        big = basis_state(0, 1024)
        with pytest.raises(QStateError):
            tensor(big, basis_state(0, 16))
        assert tensor(big, basis_state(0)).dim == 4096

    def test_non_power_of_four(self):
        with pytest.raises(QStateError):
            tensor(basis_state(0, 2), basis_state(0))

    def test_density_tensor_trace(self):
        rho = tensor_density(pure_density(A_P), pure_density(C_P))
        assert np.trace(rho.matrix) == pytest.approx(1)
