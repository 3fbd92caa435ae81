"""Evaluating a feature registry on inputs.

Entry ``d`` of a registry with multiplicity ``m_d`` out of ``q`` draws is
weighted by ``sqrt(m_d / q)``; then ``sum_d (m_d / q) psi_d(x) conj(psi_d(x'))``
is exactly the plain average over the ``q`` raw draws.

In real mode each entry also carries a phase shift ``b_d`` in ``{0, pi/2}``,
drawn once per entry from ``real_seed``, and the coordinate becomes
``sqrt(2) * R cos(theta + b)`` where ``psi = R e^{i theta}``.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dataio import write_matrix_csv
from .exceptions import UsageError
from .features import build_registry
from .inputs import InputBatch, InputRecord, as_input_batch
from .random import _key, check_random_state_seed

SQRT2 = np.sqrt(2.0)


def eval_feature(expr, x, skeleton):
    """Value of one feature on one record (1 for the empty expression)."""
    batch = as_input_batch(skeleton, x if isinstance(x, InputBatch) else [InputRecord(x)])
    return complex(feature_columns([expr], skeleton, batch)[0, 0])


def feature_columns(exprs, skeleton, batch):
    """Unweighted complex feature values, shape (N, len(exprs)).

    Each distinct atom is evaluated once (batched per input node); products
    are then formed position by position over the atom lists.
    """
    N = len(batch)
    index, per_node = {}, {}
    atom_ids = []
    for expr in exprs:
        ids = []
        for v, p in expr.atoms:
            k = index.get((v, p))
            if k is None:
                k = index[(v, p)] = len(index)
                per_node.setdefault(v, []).append((k, p))
            ids.append(k)
        atom_ids.append(ids)
    # rows are atoms / features so the gathers below touch contiguous memory
    U = np.empty((len(index), N), dtype=complex)
    for v, items in per_node.items():
        rows = [k for k, _ in items]
        U[rows] = skeleton.space(v).features([p for _, p in items], batch.values[v - 1]).T
    out = np.ones((len(exprs), N), dtype=complex)
    lengths = np.array([len(ids) for ids in atom_ids], dtype=int)
    for j in range(int(lengths.max(initial=0))):
        sel = np.flatnonzero(lengths > j)
        out[sel] *= U[[atom_ids[d][j] for d in sel]]
    return np.ascontiguousarray(out.T)


def phase_shifts(n_entries, real_seed):
    """Per-entry shifts in {0, pi/2}; entry d's shift does not depend on n_entries."""
    gen = np.random.Generator(np.random.Philox(key=_key(real_seed, 0)))
    return np.where(gen.random(n_entries) < 0.5, 0.0, np.pi / 2)


def realify(values, shifts):
    """sqrt(2) R cos(theta + b), computed without trig for b in {0, pi/2}."""
    return np.where(shifts == 0.0, SQRT2 * values.real, -SQRT2 * values.imag)


PHASE_MODES = ("entry", "draw")


def split_phases(mults, real_seed):
    """Per-draw shifts summarized per entry: how many of entry d's draws got b = 0.

    Uses the stream ``(real_seed, 1)``; a Binomial(m_d, 1/2) count is the same
    in law as ``m_d`` independent fair shifts.
    """
    gen = np.random.Generator(np.random.Philox(key=_key(real_seed, 1)))
    return gen.binomial(np.asarray(mults, dtype=np.int64), 0.5)


@dataclass
class Embedding:
    """Embedded batch: ``values`` is (N, D), weights already applied.

    In real mode with ``phases="draw"`` column ``d`` belongs to registry entry
    ``entries[d]``; an entry whose draws received both shifts owns two columns.
    """

    values: np.ndarray
    weights: np.ndarray
    real_mode: bool
    registry: object
    real_seed: int = None
    phase_shifts: np.ndarray = None
    phases: str = None
    entries: np.ndarray = None

    def __len__(self):
        return self.values.shape[0]


def embed(registry, x, skeleton, real_mode=False, real_seed=0, phases="entry"):
    """Embed one record or a batch. Returns an :class:`Embedding` of N rows.

    Real mode draws the shift ``b`` once per registry entry by default
    (``phases="entry"``). With ``phases="draw"`` every raw draw gets its own
    shift and draws are merged by ``(feature, b)``, which keeps the variance
    of the un-merged estimator when some entries carry large multiplicities.
    """
    registry.check_skeleton(skeleton)
    batch = as_input_batch(skeleton, [x] if isinstance(x, InputRecord) else x)
    F = feature_columns(registry.exprs, skeleton, batch)
    w = registry.weights
    if not real_mode:
        return Embedding(F * w, w, False, registry)
    if phases == "entry":
        b = phase_shifts(len(registry), real_seed)
        return Embedding(realify(F * w, b).astype(float), w, True, registry, int(real_seed), b,
                         phases, np.arange(len(registry)))
    if phases != "draw":
        raise UsageError(f"phases must be one of {PHASE_MODES}")
    mults = np.asarray(registry.mults)
    zero = split_phases(mults, real_seed)
    counts = np.stack([zero, mults - zero], axis=1).ravel()
    entries = np.repeat(np.arange(len(registry)), 2)
    b = np.tile([0.0, np.pi / 2], len(registry))
    keep = counts > 0
    counts, entries, b = counts[keep], entries[keep], b[keep]
    w = np.sqrt(counts / registry.draws)
    return Embedding(realify(F[:, entries] * w, b).astype(float), w, True, registry,
                     int(real_seed), b, phases, entries)


def _check_compatible(e, f):
    same = e.registry is f.registry or e.registry == f.registry
    if (not same or e.real_mode != f.real_mode or e.real_seed != f.real_seed
            or e.phases != f.phases):
        raise UsageError("embeddings come from different registries or modes")


def empirical_kernel(e, f):
    """Re <e, f> for single-row embeddings, or the full (N, M) matrix otherwise."""
    _check_compatible(e, f)
    K = np.real(e.values @ np.conj(f.values).T)
    return float(K[0, 0]) if K.shape == (1, 1) else K


def raw_kernel(registry, skeleton, X, Y=None):
    """Average of Re(psi_i(x) conj(psi_i(y))) over the raw, un-merged draws."""
    bx = as_input_batch(skeleton, X)
    by = bx if Y is None else as_input_batch(skeleton, Y)
    draws = registry.expand()
    Fx = feature_columns(draws, skeleton, bx)
    Fy = Fx if Y is None else feature_columns(draws, skeleton, by)
    return np.real(Fx @ np.conj(Fy).T) / registry.draws


def write_embedding_csv(embedding, path):
    if not embedding.real_mode:
        raise UsageError("CSV export expects a real-mode embedding")
    write_matrix_csv(path, embedding.values, [f"f{d}" for d in range(embedding.values.shape[1])])


class SkeletonFeatureMap(TransformerMixin, BaseEstimator):
    """Random feature map for the compositional kernel of a skeleton.

    Parameters
    ----------
    skeleton : Skeleton
        Computation skeleton defining the kernel.
    n_components : int
        Number of feature draws ``q``; the output has one column per
        distinct feature, at most ``q``.
    real : bool
        Emit real features (phase-shift construction) instead of complex.
    random_state : int, Generator, RandomState or None
        Seed for feature sampling; phase shifts use a seed derived from it.
    n_jobs : int
        Worker threads for sampling. Results do not depend on it.
    phases : {"entry", "draw"}
        Real mode only: one phase shift per distinct feature, or one per raw
        draw (merged by shift). ``"draw"`` has lower variance when a few
        features repeat many times, e.g. the constant feature.

    Attributes
    ----------
    registry_ : FeatureRegistry
    n_features_in_ : int
        Width of the flat input layout.
    n_features_out_ : int
    """

    def __init__(self, skeleton, n_components=256, real=True, random_state=None, n_jobs=1,
                 phases="entry"):
        self.skeleton = skeleton
        self.phases = phases
        self.n_components = n_components
        self.real = real
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        self.skeleton.require_valid()
        if X is not None:
            as_input_batch(self.skeleton, X)
        seed = check_random_state_seed(self.random_state)
        self.registry_ = build_registry(self.skeleton, self.n_components, seed, self.n_jobs)
        self.real_seed_ = (seed ^ 0x9E3779B97F4A7C15) & ((1 << 64) - 1)
        self.n_features_in_ = sum(s.n_columns for s in self.skeleton.inputs)
        if self.real and self.phases == "draw":
            zero = split_phases(self.registry_.mults, self.real_seed_)
            mults = np.asarray(self.registry_.mults)
            self.n_features_out_ = int(np.count_nonzero(zero) + np.count_nonzero(mults - zero))
        else:
            self.n_features_out_ = len(self.registry_)
        return self

    def transform(self, X):
        check_is_fitted(self, "registry_")
        return embed(self.registry_, as_input_batch(self.skeleton, X), self.skeleton,
                     real_mode=self.real, real_seed=self.real_seed_, phases=self.phases).values
