"""Exact compositional kernels and independent checks on them.

``kernel_matrix`` evaluates the skeleton recurrence bottom-up with closed-form
activations. ``enumerate_kernel`` instead walks the sampler's probability
tree (degree, child multiset, base parameter) and averages products of base
features directly; it never calls a base kernel or a closed-form activation,
so agreement between the two is a real test.
"""

import math
from collections import namedtuple
from itertools import combinations_with_replacement

import numpy as np

from .dataio import write_matrix_csv
from .embedding import embed, empirical_kernel
from .exceptions import UnsupportedSpaceError
from .features import build_registry
from .inputs import InputRecord, as_input_batch

ENUM_MASS = 1e-10


def kernel_matrix(skeleton, X, Y=None):
    """Exact kernel between every point of ``X`` and every point of ``Y``."""
    skeleton.require_valid()
    bx = as_input_batch(skeleton, X)
    by = bx if Y is None else as_input_batch(skeleton, Y)
    k = {}
    for v in skeleton.topological_order():
        if skeleton.is_input(v):
            k[v] = skeleton.space(v).kernel(bx.values[v - 1], by.values[v - 1])
        else:
            node = skeleton.node(v)
            rho = sum(k[u] for u in node.inputs) / len(node.inputs)
            k[v] = node.activation(rho)
    return k[skeleton.output]


def _as_record_list(x):
    return [x] if isinstance(x, InputRecord) else [InputRecord(x)]


def exact_kernel(skeleton, x, x_prime):
    """Exact kernel between two records."""
    return float(kernel_matrix(skeleton, _as_record_list(x), _as_record_list(x_prime))[0, 0])


def mc_kernel(skeleton, x, x_prime, q, seed, real_mode=False, real_seed=0, phases="entry"):
    """Monte Carlo estimate from a fresh ``q``-draw registry."""
    reg = build_registry(skeleton, q, seed)
    e = embed(reg, _as_record_list(x), skeleton, real_mode, real_seed, phases)
    f = embed(reg, _as_record_list(x_prime), skeleton, real_mode, real_seed, phases)
    return empirical_kernel(e, f)


Enumerated = namedtuple("Enumerated", ["value", "error_bound"])


def _compositions(k, n):
    """Count vectors of length ``n`` summing to ``k`` with multinomial probs."""
    for combo in combinations_with_replacement(range(n), k):
        counts = np.bincount(combo, minlength=n)
        logp = (math.lgamma(k + 1) - sum(math.lgamma(c + 1) for c in counts)
                - k * math.log(n))
        yield counts, math.exp(logp)


def enumerate_pairs(skeleton, X, Y, degree_cap=30):
    """Tree enumeration for paired rows ``X[i], Y[i]``.

    Returns values and a rigorous bound on the truncation error.
    """
    skeleton.require_valid()
    for v in skeleton.topological_order():
        if skeleton.is_input(v) and not skeleton.space(v).finite:
            raise UnsupportedSpaceError(
                f"input node {v} ({skeleton.space(v).kind}) has a continuous parameter space")
    bx, by = as_input_batch(skeleton, X), as_input_batch(skeleton, Y)
    if len(bx) != len(by):
        raise ValueError("X and Y must have the same number of rows")
    mean, err = {}, {}
    for v in skeleton.topological_order():
        if skeleton.is_input(v):
            space = skeleton.space(v)
            acc = np.zeros(len(bx), dtype=complex)
            for p, prob in space.params():
                acc += prob * space.feature(p, bx.values[v - 1]) * np.conj(space.feature(p, by.values[v - 1]))
            mean[v], err[v] = acc, 0.0
            continue
        node = skeleton.node(v)
        a = node.activation.coeffs
        # smallest L with cumulative mass >= 1 - ENUM_MASS, capped
        L = min(int(np.searchsorted(np.cumsum(a), 1.0 - ENUM_MASS)), degree_cap, len(a) - 1)
        children = [mean[u] for u in node.inputs]
        acc = np.zeros(len(bx), dtype=complex)
        for deg in range(L + 1):
            if a[deg] == 0.0:
                continue
            branch = np.zeros(len(bx), dtype=complex)
            for counts, prob in _compositions(deg, len(children)):
                term = np.full(len(bx), prob, dtype=complex)
                for c, m in zip(counts, children):
                    if c:
                        term *= m ** c
                branch += term
            acc += a[deg] * branch
        # |child expectation| <= 1 (Cauchy-Schwarz on normalized schemes); a
        # child error e propagates with Lipschitz constant sum_l l a_l
        tail = float(a[L + 1:].sum())
        lip = float(np.dot(np.arange(L + 1), a[:L + 1]))
        err[v] = tail + lip * max(err[u] for u in node.inputs)
        mean[v] = acc
    out = skeleton.output
    return mean[out].real, err[out]


def enumerate_kernel(skeleton, x, x_prime, degree_cap=30):
    """Exact expectation of psi(x) conj(psi(x')) by enumeration, with error bound."""
    vals, bound = enumerate_pairs(skeleton, _as_record_list(x), _as_record_list(x_prime), degree_cap)
    return Enumerated(float(vals[0]), bound)


def write_kernel_csv(K, path):
    write_matrix_csv(path, K, [f"x{j}" for j in range(K.shape[1])])
