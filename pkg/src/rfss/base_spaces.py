"""Base input spaces, their normalized kernels and base random feature schemes.

Each space knows how to draw a parameter from its measure, evaluate the base
feature on a batch of values, and evaluate the exact kernel. Values are
batched as numpy arrays:

=================  ============================  =========================
space              batch of values               parameter
=================  ============================  =========================
Binary             float (N,), entries +-1       ``None``
Circle             complex (N,), modulus 1       ``+1`` or ``-1``
Categorical(n)     int (N,), entries 1..n        int in 1..n
Gaussian(d, a)     float (N, d)                  tuple of d floats
SphereCoordPair    float (N, d), unit rows       ``(j, b)``, j in 1..d
SphereProjection   float (N, d), unit rows       tuple of d floats, unit
=================  ============================  =========================
"""

import math
import struct

import numpy as np

from .exceptions import DomainError, ParameterError

UNIT_TOL = 1e-12


class BaseSpace:
    """Common interface; concrete spaces below."""

    kind = None
    bound = 1.0
    finite = False
    # number of columns in the flat (CSV / ndarray) layout
    n_columns = 1

    def sample_param(self, rng):
        raise NotImplementedError

    def feature(self, param, X):
        raise NotImplementedError

    def features(self, params, X):
        """Columns ``feature(p, X)`` for every ``p`` in ``params``, shape (N, len(params))."""
        if not params:
            return np.ones((len(X), 0), dtype=complex)
        return np.stack([self.feature(p, X) for p in params], axis=1)

    def kernel(self, X, Y):
        raise NotImplementedError

    def params(self):
        """All parameters with their probabilities (finite spaces only)."""
        raise NotImplementedError

    def check_values(self, X):
        raise NotImplementedError

    def from_columns(self, cols):
        """Convert flat-layout columns (N, n_columns) to a value batch."""
        return self.check_values(cols[:, 0])

    def to_columns(self, X):
        return np.asarray(X, dtype=float).reshape(len(X), -1)

    def check_param(self, param):
        pass

    def encode_param(self, param):
        """Canonical byte encoding used for feature de-duplication."""
        raise NotImplementedError

    def to_config(self):
        return {"kind": self.kind, "params": {}}

    def __eq__(self, other):
        return type(self) is type(other) and self.to_config() == other.to_config()

    def __hash__(self):
        return hash(repr(self))

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.to_config()["params"].items())
        return f"{type(self).__name__}({params})"


def _pack_int(v):
    return struct.pack(">q", v)


def _pack_floats(v):
    return struct.pack(f">{len(v)}d", *v)


class Binary(BaseSpace):
    """{-1, +1} with k(x, x') = x x' and the deterministic identity feature."""

    kind = "binary"
    finite = True

    def sample_param(self, rng):
        return None

    def feature(self, param, X):
        return np.asarray(X, dtype=complex)

    def kernel(self, X, Y):
        return np.multiply.outer(np.asarray(X, float), np.asarray(Y, float))

    def params(self):
        return [(None, 1.0)]

    def check_values(self, X):
        X = np.asarray(X, dtype=float).reshape(-1)
        if not np.all((X == 1.0) | (X == -1.0)):
            raise DomainError("binary inputs must be +1 or -1")
        return X

    def check_param(self, param):
        if param is not None:
            raise DomainError("binary space has a single empty parameter")

    def encode_param(self, param):
        return b""


class Circle(BaseSpace):
    """Unit complex numbers with k(z, z') = Re(z conj(z')), feature z**omega."""

    kind = "circle"
    finite = True

    def sample_param(self, rng):
        return 1 if rng.uniform() < 0.5 else -1

    def feature(self, param, X):
        X = np.asarray(X, dtype=complex)
        return X if param == 1 else np.conj(X)

    def kernel(self, X, Y):
        return np.real(np.multiply.outer(np.asarray(X, complex), np.conj(np.asarray(Y, complex))))

    def params(self):
        return [(1, 0.5), (-1, 0.5)]

    def check_values(self, X):
        X = np.asarray(X, dtype=complex).reshape(-1)
        if not np.all(np.abs(np.abs(X) - 1.0) <= UNIT_TOL):
            raise DomainError("circle inputs must have modulus 1")
        return X

    def from_columns(self, cols):
        # phases in radians
        return np.exp(1j * np.asarray(cols[:, 0], dtype=float))

    def to_columns(self, X):
        return np.angle(np.asarray(X, complex)).reshape(-1, 1)

    def check_param(self, param):
        if param not in (1, -1):
            raise DomainError(f"circle parameter must be +1 or -1, got {param!r}")

    def encode_param(self, param):
        return _pack_int(param)


class Categorical(BaseSpace):
    """Categories 1..n with the indicator kernel.

    The feature is ``exp(2 pi i omega x / n)``; averaging over omega uniform
    on 1..n gives exactly 1{x == x'}.
    """

    kind = "categorical"
    finite = True

    def __init__(self, n):
        if int(n) != n or n < 1:
            raise ParameterError(f"categorical size must be a positive integer, got {n!r}")
        self.n = int(n)

    def sample_param(self, rng):
        return rng.integer(self.n) + 1

    def feature(self, param, X):
        X = np.asarray(X)
        # reduce mod n first so the phase argument stays small and exact
        r = (param * X) % self.n
        return np.exp(2j * np.pi * r / self.n)

    def kernel(self, X, Y):
        return np.equal.outer(np.asarray(X), np.asarray(Y)).astype(float)

    def params(self):
        return [(w, 1.0 / self.n) for w in range(1, self.n + 1)]

    def check_values(self, X):
        X = np.asarray(X)
        Xi = np.rint(np.asarray(X, dtype=float)).astype(np.int64).reshape(-1)
        if not np.all((Xi >= 1) & (Xi <= self.n)) or not np.allclose(Xi, np.asarray(X, float).reshape(-1)):
            raise DomainError(f"categorical inputs must be integers in 1..{self.n}")
        return Xi

    def check_param(self, param):
        if not isinstance(param, (int, np.integer)) or not 1 <= param <= self.n:
            raise DomainError(f"categorical parameter must be in 1..{self.n}")

    def encode_param(self, param):
        return _pack_int(param)

    def to_config(self):
        return {"kind": self.kind, "params": {"n": self.n}}


class _VectorSpace(BaseSpace):
    def __init__(self, d):
        if int(d) != d or d < 1:
            raise ParameterError(f"dimension must be a positive integer, got {d!r}")
        self.d = int(d)
        self.n_columns = self.d

    def _as_matrix(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1 and self.d == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise DomainError(f"{self.kind} inputs must have {self.d} coordinates")
        return X

    def from_columns(self, cols):
        return self.check_values(cols)

    def encode_param(self, param):
        return _pack_floats(param)


class Gaussian(_VectorSpace):
    """R^d with the Gaussian kernel exp(-a^2 |x - x'|^2 / 2)."""

    kind = "gaussian"

    def __init__(self, d, a=1.0):
        super().__init__(d)
        if not a > 0:
            raise ParameterError(f"gaussian scale must be positive, got {a!r}")
        self.a = float(a)

    def sample_param(self, rng):
        return tuple(rng.normal(self.d).tolist())

    def feature(self, param, X):
        X = self._as_matrix(X)
        return np.exp(1j * self.a * (X @ np.asarray(param, dtype=float)))

    def features(self, params, X):
        W = np.asarray(params, dtype=float).reshape(len(params), self.d)
        return np.exp(1j * self.a * (self._as_matrix(X) @ W.T))

    def kernel(self, X, Y):
        X, Y = self._as_matrix(X), self._as_matrix(Y)
        sq = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * X @ Y.T
        return np.exp(-0.5 * self.a**2 * np.maximum(sq, 0.0))

    def check_values(self, X):
        X = self._as_matrix(X)
        if not np.all(np.isfinite(X)):
            raise DomainError("gaussian inputs must be finite")
        return X

    def check_param(self, param):
        if len(param) != self.d:
            raise DomainError(f"gaussian parameter must have {self.d} entries")

    def to_config(self):
        return {"kind": self.kind, "params": {"d": self.d, "a": self.a}}


class _Sphere(_VectorSpace):
    def kernel(self, X, Y):
        return self._as_matrix(X) @ self._as_matrix(Y).T

    def check_values(self, X):
        X = self._as_matrix(X)
        if not np.all(np.abs(np.linalg.norm(X, axis=1) - 1.0) <= UNIT_TOL):
            raise DomainError("sphere inputs must have unit norm")
        return X

    def to_config(self):
        return {"kind": self.kind, "params": {"d": self.d}}


class SphereCoordPair(_Sphere):
    """S^{d-1}, d >= 3, with the sqrt(d/2)-bounded coordinate-pair scheme.

    For omega = (j, b) uniform on [d] x {-1, +1} the feature is
    ``sqrt(d/2) * (x_j + i b x_{j+1})`` with ``x_{d+1} := x_1``.
    """

    kind = "sphere_pair"
    finite = True

    def __init__(self, d):
        super().__init__(d)
        if self.d < 3:
            raise ParameterError("coordinate-pair sphere scheme needs d >= 3")
        self.bound = math.sqrt(self.d / 2.0)

    def sample_param(self, rng):
        k = rng.integer(2 * self.d)
        return (k // 2 + 1, 1 if k % 2 == 0 else -1)

    def feature(self, param, X):
        X = self._as_matrix(X)
        j, b = param
        nxt = j % self.d  # 0-based index of x_{j+1}, wrapping to x_1
        return self.bound * (X[:, j - 1] + 1j * b * X[:, nxt])

    def params(self):
        p = 1.0 / (2 * self.d)
        return [((j, b), p) for j in range(1, self.d + 1) for b in (1, -1)]

    def check_param(self, param):
        j, b = param
        if not 1 <= j <= self.d or b not in (1, -1):
            raise DomainError("coordinate-pair parameter must be (j in 1..d, b in {-1, +1})")

    def encode_param(self, param):
        return _pack_int(param[0]) + _pack_int(param[1])


class SphereProjection(_Sphere):
    """S^{d-1} with the real sqrt(d)-bounded scheme sqrt(d) <w, x>, w uniform."""

    kind = "sphere_projection"

    def __init__(self, d):
        super().__init__(d)
        self.bound = math.sqrt(self.d)

    def sample_param(self, rng):
        w = rng.normal(self.d)
        return tuple((w / np.linalg.norm(w)).tolist())

    def feature(self, param, X):
        X = self._as_matrix(X)
        return (self.bound * (X @ np.asarray(param, dtype=float))).astype(complex)

    def features(self, params, X):
        W = np.asarray(params, dtype=float).reshape(len(params), self.d)
        return (self.bound * (self._as_matrix(X) @ W.T)).astype(complex)

    def check_param(self, param):
        if len(param) != self.d or abs(math.sqrt(sum(w * w for w in param)) - 1.0) > UNIT_TOL:
            raise DomainError("projection parameter must be a unit vector of length d")


SPACE_KINDS = {
    "binary": lambda p: Binary(),
    "circle": lambda p: Circle(),
    "categorical": lambda p: Categorical(p["n"]),
    "gaussian": lambda p: Gaussian(p["d"], p.get("a", 1.0)),
    "sphere_pair": lambda p: SphereCoordPair(p["d"]),
    "sphere_projection": lambda p: SphereProjection(p["d"]),
}


def space_from_config(cfg):
    """Build a space from ``{"kind": ..., "params": {...}}``."""
    try:
        factory = SPACE_KINDS[cfg["kind"]]
    except KeyError:
        raise ParameterError(f"unknown base space kind {cfg.get('kind')!r}") from None
    return factory(cfg.get("params", {}))


def sample_base_param(space, rng):
    return space.sample_param(rng)


def eval_base_feature(space, param, x):
    """Base feature psi(param, x) for a single value ``x``."""
    space.check_param(param)
    X = space.check_values(np.asarray(x)[None, ...] if np.ndim(x) else [x])
    return complex(space.feature(param, X)[0])


def base_kernel(space, x, x_prime):
    """Exact normalized kernel between two single values."""
    X = space.check_values(np.asarray(x)[None, ...] if np.ndim(x) else [x])
    Y = space.check_values(np.asarray(x_prime)[None, ...] if np.ndim(x_prime) else [x_prime])
    return float(space.kernel(X, Y)[0, 0])
