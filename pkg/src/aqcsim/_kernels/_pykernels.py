"""Numpy implementations of the batched measurement kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and the same sampling rule, so a seeded run draws identical
outcomes on either backend.
"""

import numpy as np

PROB_EPS = 1e-12


def _clamp(p):
    p = np.where(p < PROB_EPS, 0.0, p)
    return np.where(p > 1.0 - PROB_EPS, 1.0, p)


def _normalize_rows(v):
    norms = np.sqrt(np.einsum("ij,ij->i", v.real, v.real) + np.einsum("ij,ij->i", v.imag, v.imag))
    return v / norms[:, None]


def measure_rows(states, proj_idx, projs, uniforms):
    """Sample a binary projective measurement on each row of ``states``.

    Row ``r`` is measured with ``projs[proj_idx[r]]``; the positive branch is
    taken when ``uniforms[r] < p``. Returns ``(positive, probs, post)``.
    """
    states = np.ascontiguousarray(states, dtype=np.complex128)
    p_rows = projs[proj_idx]
    v = np.einsum("rij,rj->ri", p_rows, states)
    probs = _clamp(np.einsum("ri,ri->r", states.conj(), v).real)
    positive = uniforms < probs
    post = np.where(positive[:, None], v, states - v)
    return positive, probs, _normalize_rows(post)


def test_rows(expected, states, uniforms):
    """Sample the two-outcome test {|e><e|, 1 - |e><e|} row by row.

    Returns ``(passed, probs, post)`` where ``probs`` is the pass probability.
    """
    expected = np.ascontiguousarray(expected, dtype=np.complex128)
    states = np.ascontiguousarray(states, dtype=np.complex128)
    c = np.einsum("ri,ri->r", expected.conj(), states)
    probs = _clamp(c.real**2 + c.imag**2)
    passed = uniforms < probs
    v = expected * c[:, None]
    post = np.where(passed[:, None], v, states - v)
    return passed, probs, _normalize_rows(post)


def overlap_rows(a, b):
    """``|<a_r|b_r>|^2`` for each row pair."""
    c = np.einsum("ri,ri->r", np.conj(a), b)
    return c.real**2 + c.imag**2


def product_gram(x, y, k):
    """Gram matrix of k-fold tensor powers of product states.

    ``x`` has shape (m, n_sites, d) and ``y`` (p, n_sites, d); entry (a, b) is
    ``(prod_i <x[a, i]|y[b, i]>) ** k``.
    """
    site = np.einsum("aij,bij->abi", np.conj(x), y)
    return np.prod(site, axis=2) ** k
