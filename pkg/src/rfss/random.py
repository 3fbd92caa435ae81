"""Counter-based random streams.

Every logical sampling task (one feature draw, one trial, ...) gets its own
stream keyed by ``(seed, index)``. The underlying generator is numpy's
Philox, whose 128-bit key holds both numbers, so the stream for draw ``i``
never depends on which worker produced draws ``0..i-1``.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_BUFFER = 16


def _key(seed, index):
    return np.array([int(seed) & _MASK64, int(index) & _MASK64], dtype=np.uint64)


class RandomStream:
    """Scalar-friendly wrapper around a keyed Philox generator.

    Uniforms are pulled from numpy in small blocks to keep per-call overhead
    low; ``reset`` rekeys the stream in place so one object can serve many
    consecutive draws inside a worker.
    """

    def __init__(self, seed, index=0):
        self.seed = int(seed) & _MASK64
        self._bitgen = np.random.Philox(key=_key(seed, index))
        self.generator = np.random.Generator(self._bitgen)
        self.index = int(index)
        self._buf = []

    def reset(self, index):
        """Rekey to stream ``(seed, index)``, discarding buffered values."""
        self._bitgen.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.zeros(4, dtype=np.uint64),
                      "key": _key(self.seed, index)},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        self.index = int(index)
        self._buf = []
        return self

    def uniform(self):
        """One float in [0, 1)."""
        if not self._buf:
            self._buf = self.generator.random(_BUFFER).tolist()
            self._buf.reverse()
        return self._buf.pop()

    def integer(self, n):
        """Uniform integer in ``range(n)``."""
        k = int(self.uniform() * n)
        return k if k < n else n - 1

    def normal(self, size):
        return self.generator.standard_normal(size)


def derive_seed(*parts):
    """Hash integers into one 64-bit seed (order sensitive)."""
    ss = np.random.SeedSequence([int(p) & _MASK64 for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def check_random_state_seed(random_state):
    """Map an sklearn-style ``random_state`` to a 64-bit integer seed."""
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
    if isinstance(random_state, (int, np.integer)):
        return int(random_state) & _MASK64
    if isinstance(random_state, np.random.RandomState):
        return int(random_state.randint(0, 2**63 - 1, dtype=np.int64))
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(0, 2**63 - 1))
    raise ValueError(f"{random_state!r} cannot be used to seed a random stream")
