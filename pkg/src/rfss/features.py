"""Random feature sampling for skeletons and the de-duplicating registry.

A sampled feature is a product of base features. It is stored as a
:class:`FeatureExpr`, a canonically ordered multiset of atoms
``(input_node, base_param)``; the empty multiset is the constant feature 1.
"""

import json
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import StructuralError, UsageError
from .random import RandomStream

REGISTRY_FORMAT = "rfss-registry"
REGISTRY_VERSION = 1


class FeatureExpr:
    """Immutable multiset of atoms with a canonical byte key.

    Atoms are sorted by ``(input_node, encoded param)``; two expressions are
    equal iff their keys are byte-equal.
    """

    __slots__ = ("atoms", "key")

    def __init__(self, atoms, skeleton):
        enc = sorted(((v, skeleton.space(v).encode_param(p), p) for v, p in atoms),
                     key=lambda t: (t[0], t[1]))
        self.atoms = tuple((v, p) for v, _, p in enc)
        self.key = b"".join(v.to_bytes(4, "big") + len(e).to_bytes(2, "big") + e
                            for v, e, _ in enc)

    def __len__(self):
        return len(self.atoms)

    def __eq__(self, other):
        return isinstance(other, FeatureExpr) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"FeatureExpr({list(self.atoms)!r})"

    def nodes(self):
        return {v for v, _ in self.atoms}


def rfss_sample(skeleton, node, rng):
    """Draw one feature rooted at ``node``.

    At an internal node a degree ``l`` is drawn from the activation's
    coefficients and ``l`` children are chosen uniformly from the in-edges;
    at an input node a base parameter is drawn. Uses an explicit stack.
    """
    skeleton.check_node(node)
    n = skeleton.n_inputs
    inputs, internal = skeleton.inputs, skeleton.internal
    atoms = []
    stack = [node]
    while stack:
        v = stack.pop()
        if v <= n:
            atoms.append((v, inputs[v - 1].sample_param(rng)))
        else:
            node = internal[v - n - 1]
            ins = node.inputs
            for _ in range(node.activation.sample_degree(rng)):
                stack.append(ins[rng.integer(len(ins))])
    return FeatureExpr(atoms, skeleton)


@dataclass(frozen=True, eq=False)
class FeatureRegistry:
    """De-duplicated features with multiplicities; ``sum(mults) == draws``."""

    exprs: tuple
    mults: tuple
    draws: int
    master_seed: int
    skeleton_hash: str

    def __len__(self):
        return len(self.exprs)

    @property
    def weights(self):
        return np.sqrt(np.asarray(self.mults, dtype=float) / self.draws)

    def expand(self):
        """Raw draw list (each entry repeated by its multiplicity)."""
        return [e for e, k in zip(self.exprs, self.mults) for _ in range(k)]

    def check_skeleton(self, skeleton):
        if skeleton.digest() != self.skeleton_hash:
            raise UsageError("registry was built for a different skeleton")

    def __eq__(self, other):
        return (isinstance(other, FeatureRegistry) and self.exprs == other.exprs
                and self.mults == other.mults and self.draws == other.draws
                and self.master_seed == other.master_seed
                and self.skeleton_hash == other.skeleton_hash)


def _sample_range(skeleton, master_seed, start, stop):
    rng = RandomStream(master_seed, start)
    out = []
    for i in range(start, stop):
        rng.reset(i)
        out.append(rfss_sample(skeleton, skeleton.output, rng))
    return out


def sample_draws(skeleton, q, master_seed, n_jobs=1):
    """The ``q`` raw draws; draw ``i`` uses stream ``(master_seed, i)``."""
    skeleton.require_valid()
    if n_jobs is None or n_jobs <= 1 or q < 2:
        return _sample_range(skeleton, master_seed, 0, q)
    n_chunks = min(q, 4 * n_jobs)
    bounds = np.linspace(0, q, n_chunks + 1).astype(int)
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        parts = pool.map(lambda ab: _sample_range(skeleton, master_seed, *ab),
                         zip(bounds[:-1], bounds[1:]))
        return [f for part in parts for f in part]


def merge_draws(draws):
    """Merge equal expressions, keeping first-occurrence order."""
    index, exprs, mults = {}, [], []
    for f in draws:
        k = index.get(f)
        if k is None:
            index[f] = len(exprs)
            exprs.append(f)
            mults.append(1)
        else:
            mults[k] += 1
    return exprs, mults


def build_registry(skeleton, q, master_seed, n_jobs=1):
    """Sample ``q`` features from the output node and de-duplicate them."""
    if int(q) != q or q < 1:
        raise ValueError("q must be a positive integer")
    draws = sample_draws(skeleton, int(q), master_seed, n_jobs)
    exprs, mults = merge_draws(draws)
    return FeatureRegistry(tuple(exprs), tuple(mults), int(q), int(master_seed),
                           skeleton.digest())


Cooccurrence = namedtuple("Cooccurrence", ["corr", "degenerate"])


def occurrence_matrix(registry, n_inputs):
    """Boolean (D, n) matrix: does input node i appear in entry d."""
    occ = np.zeros((len(registry), n_inputs), dtype=bool)
    for d, expr in enumerate(registry.exprs):
        for v in expr.nodes():
            occ[d, v - 1] = True
    return occ


def cooccurrence_matrix(registry, n_inputs):
    """Pearson correlation of node-occurrence indicators across draws.

    Draws are weighted by multiplicity. Nodes whose indicator is constant
    get zero rows/columns (diagonal included) and ``degenerate[i] = True``.
    """
    if len(registry) == 0:
        raise ValueError("registry is empty")
    occ = occurrence_matrix(registry, n_inputs).astype(float)
    w = np.asarray(registry.mults, dtype=float)
    p = w @ occ / registry.draws
    joint = (occ * w[:, None]).T @ occ / registry.draws
    cov = joint - np.outer(p, p)
    var = np.diag(cov).copy()
    degenerate = var <= 1e-15
    sd = np.sqrt(np.where(degenerate, 1.0, var))
    corr = cov / np.outer(sd, sd)
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    idx = np.flatnonzero(~degenerate)
    corr[idx, idx] = 1.0
    return Cooccurrence(corr, degenerate)


def sparsity_stats(registry):
    sizes = np.array([len(e) for e in registry.exprs], dtype=float)
    w = np.asarray(registry.mults, dtype=float)
    return {
        "draws": registry.draws,
        "mean_atoms": float(sizes @ w / registry.draws),
        "max_atoms": int(sizes.max()) if sizes.size else 0,
        "distinct_count": len(registry),
        "dedup_ratio": len(registry) / registry.draws,
    }


def atom_counts(registry):
    """Per-draw atom counts (expanded by multiplicity)."""
    return np.repeat([len(e) for e in registry.exprs], registry.mults)


# -- serialization ---------------------------------------------------------

def _param_to_json(p):
    if p is None or isinstance(p, (int, np.integer)):
        return None if p is None else int(p)
    if len(p) == 2 and all(isinstance(t, (int, np.integer)) for t in p):
        return [int(t) for t in p]
    return [float(t).hex() for t in p]


def _param_from_json(p):
    if p is None or isinstance(p, int):
        return p
    if all(isinstance(t, int) for t in p):
        return tuple(p)
    return tuple(float.fromhex(t) for t in p)


def registry_to_json(registry):
    doc = {
        "format": REGISTRY_FORMAT,
        "version": REGISTRY_VERSION,
        "master_seed": registry.master_seed,
        "skeleton_hash": registry.skeleton_hash,
        "draws": registry.draws,
        "entries": [{"atoms": [[v, _param_to_json(p)] for v, p in e.atoms], "mult": k}
                    for e, k in zip(registry.exprs, registry.mults)],
    }
    return json.dumps(doc, separators=(",", ":"), sort_keys=True)


def registry_from_json(text, skeleton):
    doc = json.loads(text)
    if doc.get("format") != REGISTRY_FORMAT or doc.get("version") != REGISTRY_VERSION:
        raise UsageError("not a version-1 registry file")
    if doc["skeleton_hash"] != skeleton.digest():
        raise UsageError("registry was built for a different skeleton")
    exprs, mults = [], []
    for entry in doc["entries"]:
        atoms = [(int(v), _param_from_json(p)) for v, p in entry["atoms"]]
        for v, p in atoms:
            if not skeleton.is_input(v):
                raise StructuralError(f"registry atom references non-input node {v}")
            skeleton.space(v).check_param(p)
        exprs.append(FeatureExpr(atoms, skeleton))
        mults.append(int(entry["mult"]))
    if sum(mults) != doc["draws"]:
        raise UsageError("registry multiplicities do not add up to the draw count")
    return FeatureRegistry(tuple(exprs), tuple(mults), int(doc["draws"]),
                           int(doc["master_seed"]), doc["skeleton_hash"])


def save_registry(registry, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(registry_to_json(registry))
        fh.write("\n")


def load_registry(path, skeleton):
    with open(path, encoding="utf-8") as fh:
        return registry_from_json(fh.read(), skeleton)

