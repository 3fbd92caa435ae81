"""Computation skeletons and conjugate activations.

A skeleton is a DAG whose nodes ``1..n`` are input nodes carrying a base
space and whose nodes ``n+1..m`` are internal nodes carrying a conjugate
activation (a power series with nonnegative coefficients summing to one)
and a list of in-edges. The single sink is the output node.
"""

import bisect
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .base_spaces import BaseSpace, space_from_config
from .exceptions import ParameterError, StructuralError

SUM_TOL = 1e-12
EXP_TAIL = 1e-12
# tolerated drift of an averaged child kernel outside [-1, 1]
RHO_CLAMP = 1e-9


def _clamp_rho(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1.0 + RHO_CLAMP):
        raise ParameterError(f"kernel argument outside [-1, 1]: {rho[np.abs(rho) > 1.0 + RHO_CLAMP].ravel()[:3]}")
    return np.clip(rho, -1.0, 1.0)


class ConjugateActivation:
    """Truncated power series ``sigma(rho) = sum_i a_i rho**i``.

    Use the constructors :meth:`explicit`, :meth:`exp_scaled` and
    :meth:`relu` rather than calling this directly. Coefficients are
    renormalized so they sum to one; ``tail_mass`` records what was cut off
    before renormalization.
    """

    def __init__(self, coeffs, kind="explicit", param=None, tail_mass=0.0):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 1 or coeffs.size == 0:
            raise ParameterError("activation needs a nonempty coefficient vector")
        if np.any(coeffs < 0) or not np.all(np.isfinite(coeffs)):
            raise ParameterError("activation coefficients must be finite and nonnegative")
        total = coeffs.sum()
        if kind == "explicit" and abs(total - 1.0) > SUM_TOL:
            raise ParameterError(f"explicit coefficients must sum to 1, got {total!r}")
        self.coeffs = coeffs / total
        self.coeffs.setflags(write=False)
        self.raw_tail_mass = float(tail_mass)
        # after renormalization nothing is missing
        self.tail_mass = 0.0
        self.kind = kind
        self.param = param
        cdf = np.cumsum(self.coeffs).tolist()
        cdf[-1] = 1.0
        self._cdf = cdf

    @classmethod
    def explicit(cls, coeffs):
        return cls(coeffs, "explicit")

    @classmethod
    def exp_scaled(cls, c=1.0):
        """``exp(c (rho - 1))``, expanded until the tail mass is below 1e-12."""
        if not c >= 0:
            raise ParameterError("exp scale must be nonnegative")
        c = float(c)
        coeffs = [math.exp(-c)]
        # past the mode, stop once terms no longer register in double precision;
        # this keeps both sum a_i and sum i a_i exact to rounding
        while len(coeffs) <= c or coeffs[-1] * len(coeffs) > 1e-20:
            coeffs.append(coeffs[-1] * c / len(coeffs))
            if len(coeffs) > 100_000:
                raise ParameterError("exp scale too large to expand")
        tail = max(0.0, 1.0 - math.fsum(coeffs))
        if tail >= EXP_TAIL:
            raise ParameterError(f"exp series tail {tail} exceeds {EXP_TAIL}")
        return cls(coeffs, "exp", c, tail_mass=tail)

    @classmethod
    def relu(cls, max_degree=256):
        return relu_conjugate_coeffs(max_degree)

    @property
    def max_degree(self):
        return len(self.coeffs) - 1

    def __call__(self, rho):
        """Evaluate, using the closed form when one exists."""
        rho = _clamp_rho(rho)
        if self.kind == "exp":
            return np.exp(self.param * (rho - 1.0))
        if self.kind == "relu":
            return (np.sqrt(np.maximum(1.0 - rho * rho, 0.0)) + (np.pi - np.arccos(rho)) * rho) / np.pi
        return self.series(rho)

    def series(self, rho):
        """Evaluate the (renormalized) truncated series."""
        return np.polynomial.polynomial.polyval(_clamp_rho(rho), self.coeffs)

    def sample_degree(self, rng):
        return bisect.bisect_right(self._cdf, rng.uniform())

    def degrees(self, u):
        """Vectorized inverse-CDF lookup for an array of uniforms."""
        return np.searchsorted(np.asarray(self._cdf), u, side="right")

    def to_config(self):
        if self.kind == "exp":
            return {"kind": "exp", "c": self.param}
        if self.kind == "relu":
            return {"kind": "relu", "max_degree": self.param}
        return {"kind": "explicit", "coeffs": self.coeffs.tolist()}

    def __repr__(self):
        return f"ConjugateActivation({self.to_config()})"

    def __eq__(self, other):
        return isinstance(other, ConjugateActivation) and self.to_config() == other.to_config()

    def __hash__(self):
        return hash(json.dumps(self.to_config(), sort_keys=True))


def relu_conjugate_coeffs(max_degree):
    """Power series of ``(sqrt(1 - rho^2) + (pi - arccos rho) rho) / pi``.

    Writing ``pi - arccos rho = pi/2 + arcsin rho`` gives ``a_0 = 1/pi``,
    ``a_1 = 1/2`` and, for ``k >= 0``,
    ``a_{2k+2} = t_k / ((2k+1)(2k+2) pi)`` with ``t_k = binom(2k, k) / 4**k``.
    Odd coefficients above 1 vanish.
    """
    if int(max_degree) != max_degree or max_degree < 2:
        raise ParameterError("relu conjugate needs max_degree >= 2")
    max_degree = int(max_degree)
    a = np.zeros(max_degree + 1)
    a[0] = 1.0 / math.pi
    a[1] = 0.5
    t, k = 1.0, 0
    while 2 * k + 2 <= max_degree:
        a[2 * k + 2] = t / ((2 * k + 1) * (2 * k + 2) * math.pi)
        t *= (2 * k + 1) / (2 * k + 2)
        k += 1
    return ConjugateActivation(a, "relu", max_degree, tail_mass=1.0 - a.sum())


def activation_from_config(cfg):
    """Accepts parameters inline (``{"kind": "exp", "c": 0.25}``) or under ``params``."""
    kind = cfg.get("kind")
    cfg = {**cfg.get("params", {}), **cfg}
    if kind == "exp":
        return ConjugateActivation.exp_scaled(cfg.get("c", 1.0))
    if kind == "relu":
        return relu_conjugate_coeffs(cfg.get("max_degree", 256))
    if kind == "explicit":
        return ConjugateActivation.explicit(cfg["coeffs"])
    raise ParameterError(f"unknown activation kind {kind!r}")


def sigma_prime_at_one(act):
    """sum_i i * a_i, the expected number of children sampled at a node."""
    return float(np.dot(np.arange(len(act.coeffs)), act.coeffs))


def sample_degree(act, rng):
    return act.sample_degree(rng)


@dataclass(frozen=True)
class InternalNode:
    activation: ConjugateActivation
    inputs: tuple


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Inputs take ids 1..n, internal nodes n+1..m, in the given order."""

    inputs: tuple
    internal: tuple = ()
    output: int = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "internal", tuple(
            n if isinstance(n, InternalNode) else InternalNode(n[0], tuple(n[1]))
            for n in self.internal))
        if self.output is None:
            object.__setattr__(self, "output", self.n_nodes)
        for s in self.inputs:
            if not isinstance(s, BaseSpace):
                raise StructuralError(f"input node space must be a BaseSpace, got {s!r}")

    @property
    def n_inputs(self):
        return len(self.inputs)

    @property
    def n_nodes(self):
        return len(self.inputs) + len(self.internal)

    def is_input(self, v):
        return 1 <= v <= len(self.inputs)

    def space(self, v):
        return self.inputs[v - 1]

    def node(self, v):
        if not self.n_inputs < v <= self.n_nodes:
            raise StructuralError(f"{v} is not an internal node id")
        return self.internal[v - self.n_inputs - 1]

    def in_nodes(self, v):
        return () if self.is_input(v) else self.node(v).inputs

    def check_node(self, v):
        if not isinstance(v, (int, np.integer)) or not 1 <= v <= self.n_nodes:
            raise StructuralError(f"node id {v!r} not in 1..{self.n_nodes}")

    def topological_order(self, root=None):
        """Nodes reachable from ``root`` (default output), children first."""
        root = self.output if root is None else root
        key = ("topo", root)
        if key not in self._cache:
            self.require_valid()
            order, seen = [], set()
            stack = [(root, False)]
            while stack:
                v, done = stack.pop()
                if done:
                    order.append(v)
                    continue
                if v in seen:
                    continue
                seen.add(v)
                stack.append((v, True))
                stack.extend((u, False) for u in reversed(self.in_nodes(v)) if u not in seen)
            self._cache[key] = tuple(order)
        return self._cache[key]

    def require_valid(self):
        if "valid" not in self._cache:
            problems = validate(self)
            if problems:
                raise StructuralError("invalid skeleton: " + "; ".join(problems))
            self._cache["valid"] = True

    def to_config(self):
        n = self.n_inputs
        return {
            "inputs": [{"id": i + 1, "space": s.to_config()} for i, s in enumerate(self.inputs)],
            "internal": [{"id": n + k + 1, "activation": node.activation.to_config(),
                          "in": list(node.inputs)} for k, node in enumerate(self.internal)],
            "output": self.output,
        }

    @classmethod
    def from_config(cls, cfg):
        """Build from the JSON-shaped dict; ids must be dense (1..n, then n+1..m)."""
        try:
            inputs = sorted(cfg["inputs"], key=lambda e: e["id"])
            internal = sorted(cfg.get("internal", []), key=lambda e: e["id"])
            ids = [e["id"] for e in inputs] + [e["id"] for e in internal]
            if ids != list(range(1, len(ids) + 1)):
                raise StructuralError(
                    "node ids must be dense: inputs 1..n followed by internal nodes n+1..m")
            spaces = [space_from_config(e["space"]) for e in inputs]
            nodes = [InternalNode(activation_from_config(e["activation"]),
                                  tuple(int(u) for u in e["in"])) for e in internal]
            return cls(tuple(spaces), tuple(nodes), int(cfg["output"]))
        except (KeyError, TypeError) as exc:
            raise StructuralError(f"malformed skeleton config: missing or bad field {exc}") from exc

    def digest(self):
        """SHA-256 of the canonical config, used to tie registries to skeletons."""
        blob = json.dumps(self.to_config(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def feature_bound(self):
        """Sup of |feature| over all features the sampler can produce."""
        self.require_valid()
        b = {}
        for v in self.topological_order():
            if self.is_input(v):
                b[v] = self.space(v).bound
            else:
                node = self.node(v)
                top = max(b[u] for u in node.inputs)
                deg = int(np.flatnonzero(node.activation.coeffs)[-1])
                b[v] = top ** deg
        return b[self.output]

    def __eq__(self, other):
        return isinstance(other, Skeleton) and self.to_config() == other.to_config()

    def __hash__(self):
        return hash(self.digest())


def validate(skeleton):
    """List every structural violation; an empty list means valid."""
    problems = []
    n, m = skeleton.n_inputs, skeleton.n_nodes
    if n == 0:
        problems.append("skeleton has no input nodes")
    edges = {v: [] for v in range(1, m + 1)}
    for k, node in enumerate(skeleton.internal):
        v = n + k + 1
        if len(node.inputs) == 0:
            problems.append(f"internal node {v} has an empty in-edge list")
        for u in node.inputs:
            if not isinstance(u, (int, np.integer)) or not 1 <= u <= m:
                problems.append(f"node {v} has an in-edge from unknown node {u!r}")
            else:
                edges[u].append(v)
    sinks = [v for v in range(1, m + 1) if not edges[v]]
    if len(sinks) > 1:
        problems.append(f"multiple output nodes (out-degree 0): {sinks}")
    if skeleton.output not in edges:
        problems.append(f"output {skeleton.output!r} is not a node")
    elif edges[skeleton.output]:
        problems.append(f"output {skeleton.output} has outgoing edges")
    elif sinks and skeleton.output not in sinks:
        problems.append(f"output {skeleton.output} is not the sink")

    cycle = _find_cycle(edges)
    if cycle:
        problems.append("cycle: " + " -> ".join(map(str, cycle)))
    elif skeleton.output in edges:
        reach = {skeleton.output}
        stack = [skeleton.output]
        parents = {v: [] for v in edges}
        for u, outs in edges.items():
            for v in outs:
                parents[v].append(u)
        while stack:
            for u in parents[stack.pop()]:
                if u not in reach:
                    reach.add(u)
                    stack.append(u)
        orphans = sorted(set(edges) - reach)
        if orphans:
            problems.append(f"nodes with no path to the output: {orphans}")
    return problems


def _find_cycle(edges):
    color = dict.fromkeys(edges, 0)
    for start in edges:
        if color[start]:
            continue
        path, stack = [], [(start, iter(edges[start]))]
        color[start] = 1
        path.append(start)
        while stack:
            v, it = stack[-1]
            u = next(it, None)
            if u is None:
                color[v] = 2
                stack.pop()
                path.pop()
            elif color[u] == 1:
                return path[path.index(u):] + [u]
            elif color[u] == 0:
                color[u] = 1
                path.append(u)
                stack.append((u, iter(edges[u])))
    return None


def complexity(skeleton, breakdown=False):
    """Expected atom count of a sampled feature.

    ``C = 1`` at input nodes and ``C(v) = sigma_v'(1) * mean_{u in in(v)} C(u)``.
    With ``breakdown=True`` also return the per-node values.
    """
    skeleton.require_valid()
    c = {}
    for v in skeleton.topological_order():
        if skeleton.is_input(v):
            c[v] = 1.0
        else:
            node = skeleton.node(v)
            c[v] = sigma_prime_at_one(node.activation) * sum(c[u] for u in node.inputs) / len(node.inputs)
    return (c[skeleton.output], c) if breakdown else c[skeleton.output]


def shallow(spaces, activation):
    """One internal node fed by every input."""
    spaces = tuple(spaces)
    return Skeleton(spaces, (InternalNode(activation, tuple(range(1, len(spaces) + 1))),))


def layered(spaces, activations, width=None):
    """Fully connected layers; the last activation sits alone at the output.

    ``width`` is the number of nodes in every hidden layer (default: number
    of inputs).
    """
    spaces = tuple(spaces)
    activations = list(activations)
    width = width or len(spaces)
    nodes, prev = [], list(range(1, len(spaces) + 1))
    next_id = len(spaces) + 1
    for depth, act in enumerate(activations):
        w = 1 if depth == len(activations) - 1 else width
        layer = []
        for _ in range(w):
            nodes.append(InternalNode(act, tuple(prev)))
            layer.append(next_id)
            next_id += 1
        prev = layer
    return Skeleton(spaces, tuple(nodes))


def local(spaces, patch, inner, outer):
    """Contiguous patches of ``patch`` inputs, each pooled by ``inner``, then ``outer``."""
    spaces = tuple(spaces)
    n = len(spaces)
    if n % patch:
        raise ParameterError("number of inputs must be a multiple of the patch size")
    nodes = [InternalNode(inner, tuple(range(s + 1, s + patch + 1))) for s in range(0, n, patch)]
    nodes.append(InternalNode(outer, tuple(range(n + 1, n + len(nodes) + 1))))
    return Skeleton(spaces, tuple(nodes))
