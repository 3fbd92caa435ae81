"""Kernel-approximation experiments at desk scale.

Error metrics follow the usual comparison of an empirical kernel against the
exact one: mean absolute, root-mean-squared and maximum differences plus the
Pearson correlation, all over the off-diagonal pairs ``i < j`` of a batch,
pooled across trials.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .embedding import embed, empirical_kernel
from .exceptions import ParameterError
from .features import build_registry
from .inputs import InputBatch, as_input_batch
from .kernel_oracle import kernel_matrix
from .random import derive_seed

CSV_HEADER = ["budget", "trial", "mae", "rmse", "max_err", "pearson"]


@dataclass(frozen=True)
class BudgetRule:
    C: float
    epsilon: float
    delta: float
    q_min: int


def hoeffding_budget(C, epsilon, delta):
    """Smallest q with q >= 2 C^4 ln(2/delta) / epsilon^2."""
    if not C >= 1:
        raise ParameterError("C must be at least 1")
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    q = 2.0 * C**4 * math.log(2.0 / delta) / epsilon**2
    q_min = math.ceil(q)
    # guard against q landing a hair above an integer through rounding
    if q_min - q > 1 - 1e-9:
        q_min -= 1
    return BudgetRule(float(C), float(epsilon), float(delta), int(q_min))


@dataclass
class ApproxReport:
    budget: int
    trials: int
    mae: float
    rmse: float
    max_err: float
    pearson: float
    trial: int = None
    per_trial: list = field(default_factory=list, repr=False)


def error_metrics(k_hat, k):
    """mae, rmse, max_err, pearson for two aligned 1-D arrays."""
    diff = np.abs(np.asarray(k_hat) - np.asarray(k))
    mae = float(diff.mean())
    rmse = float(math.sqrt(np.mean(diff * diff)))
    max_err = float(diff.max())
    if np.std(k_hat) == 0 or np.std(k) == 0:
        pearson = 1.0 if np.allclose(k_hat, k) else 0.0
    else:
        pearson = float(np.corrcoef(k_hat, k)[0, 1])
    return mae, rmse, max_err, pearson


def synth_inputs(skeleton, n, seed, locality=0.0):
    """Draw ``n`` points, one coordinate per input node.

    A Gaussian latent runs along the input nodes as an AR(1) chain with
    coefficient ``locality`` (0 gives independent nodes) and is pushed
    through each space's sampler: circle phases and categories via the
    normal CDF, signs for binary, ``z / sqrt(d)`` for Gaussian inputs and
    ``z / |z|`` for spheres. Marginals are uniform on finite and spherical
    spaces regardless of ``locality``.
    """
    if not 0 <= locality < 1:
        raise ParameterError("locality must lie in [0, 1)")
    gen = np.random.default_rng(derive_seed(seed, 0x5EED))
    values, prev = [], None
    for space in skeleton.inputs:
        shape = (n, space.n_columns)
        eps = gen.standard_normal(shape)
        z = eps if prev is None or prev.shape != shape else (
            locality * prev + math.sqrt(1 - locality**2) * eps)
        prev = z
        kind = space.kind
        if kind == "binary":
            values.append(np.where(z[:, 0] >= 0, 1.0, -1.0))
        elif kind == "circle":
            values.append(np.exp(1j * np.pi * (2 * ndtr(z[:, 0]) - 1)))
        elif kind == "categorical":
            values.append(np.minimum((ndtr(z[:, 0]) * space.n).astype(int), space.n - 1) + 1)
        elif kind == "gaussian":
            values.append(z / math.sqrt(space.d))
        else:
            values.append(z / np.linalg.norm(z, axis=1, keepdims=True))
    return as_input_batch(skeleton, InputBatch(values))


def _offdiag(K):
    iu = np.triu_indices(K.shape[0], k=1)
    return K[iu]


def _trial(skeleton, batch, q, seed, real_mode, phases):
    reg = build_registry(skeleton, q, seed)
    e = embed(reg, batch, skeleton, real_mode, seed, phases)
    return _offdiag(empirical_kernel(e, e))


def run_approx_experiment(skeleton, inputs, budgets, trials, seed, real_mode=False, n_jobs=1,
                          phases="entry"):
    """Pooled :class:`ApproxReport` per budget, with per-trial reports attached.

    Trial ``t`` at budget ``q`` uses registry seed ``derive_seed(seed, q, t)``,
    so results do not depend on ``n_jobs``.
    """
    batch = as_input_batch(skeleton, inputs)
    if len(batch) < 2:
        raise ValueError("need at least two inputs")
    if not budgets or trials < 1:
        raise ValueError("need a nonempty budget list and trials >= 1")
    exact = _offdiag(kernel_matrix(skeleton, batch))
    jobs = [(q, t) for q in budgets for t in range(trials)]

    def run(job):
        q, t = job
        return _trial(skeleton, batch, int(q), derive_seed(seed, q, t), real_mode, phases)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            est = list(pool.map(run, jobs))
    else:
        est = [run(j) for j in jobs]

    reports = []
    for b, q in enumerate(budgets):
        chunk = est[b * trials:(b + 1) * trials]
        per = [ApproxReport(int(q), 1, *error_metrics(k_hat, exact), trial=t)
               for t, k_hat in enumerate(chunk)]
        pooled = ApproxReport(int(q), trials, *error_metrics(np.concatenate(chunk),
                                                             np.tile(exact, trials)))
        pooled.per_trial = per
        reports.append(pooled)
    return reports


def loglog_slope(budgets, values):
    """Least-squares slope of log(values) against log(budgets)."""
    return float(np.polyfit(np.log(budgets), np.log(values), 1)[0])


def coverage_threshold(delta, n_events):
    """delta plus three binomial standard errors."""
    return delta + 3.0 * math.sqrt(delta * (1 - delta) / n_events)


def coverage_check(skeleton, rule, pairs, reps, seed, inputs=None, n_jobs=1):
    """Fraction of (rep, pair) events with |k_hat - k| >= epsilon at q = q_min.

    ``pairs`` input pairs are fixed up front (drawn with :func:`synth_inputs`
    unless ``inputs`` supplies ``2 * pairs`` points); each rep builds an
    independent registry.
    """
    bound = skeleton.feature_bound()
    if bound > rule.C + 1e-12:
        raise ParameterError(f"skeleton feature bound {bound} exceeds rule C={rule.C}")
    batch = synth_inputs(skeleton, 2 * pairs, seed) if inputs is None else as_input_batch(skeleton, inputs)
    X, Y = batch[0:pairs], batch[pairs:2 * pairs]
    exact = np.diag(kernel_matrix(skeleton, X, Y))

    def rep(r):
        reg = build_registry(skeleton, rule.q_min, derive_seed(seed, rule.q_min, r))
        k_hat = np.einsum("ij,ij->i", embed(reg, X, skeleton).values,
                          np.conj(embed(reg, Y, skeleton).values)).real
        return int(np.count_nonzero(np.abs(k_hat - exact) >= rule.epsilon))

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            fails = sum(pool.map(rep, range(reps)))
    else:
        fails = sum(rep(r) for r in range(reps))
    return fails / (pairs * reps)


def _rows(reports):
    for rep in reports:
        for t in rep.per_trial:
            yield [t.budget, t.trial, t.mae, t.rmse, t.max_err, t.pearson]
        yield [rep.budget, "all", rep.mae, rep.rmse, rep.max_err, rep.pearson]


def write_reports_csv(reports, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in _rows(reports):
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def summary_table(reports):
    lines = [f"{'budget':>8} {'trials':>6} {'mae':>10} {'rmse':>10} {'max_err':>10} {'pearson':>8}"]
    for r in reports:
        lines.append(f"{r.budget:>8d} {r.trials:>6d} {r.mae:>10.5f} {r.rmse:>10.5f} "
                     f"{r.max_err:>10.5f} {r.pearson:>8.5f}")
    return "\n".join(lines)
