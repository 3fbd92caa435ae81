"""Input records, batches and validation helpers.

Three input forms are accepted wherever a skeleton consumes data:

* an :class:`InputBatch` (one value array per input node),
* a sequence of :class:`InputRecord` (one coordinate per input node),
* a 2-D real array in the *flat layout*: the columns of each input node in
  node order, where a circle coordinate is one column holding its phase in
  radians and vector spaces take ``d`` columns.

The flat layout is what lets the estimators sit inside sklearn pipelines.
"""

import numpy as np

from .exceptions import DomainError


class InputRecord(tuple):
    """One point of the product space, one coordinate per input node."""

    def __new__(cls, coords):
        return super().__new__(cls, coords)

    def __repr__(self):
        return f"InputRecord({list(self)!r})"


class InputBatch:
    """Per-node value arrays for ``N`` points."""

    def __init__(self, values):
        self.values = tuple(values)
        lengths = {len(v) for v in self.values}
        if len(lengths) > 1:
            raise DomainError(f"input node arrays have different lengths: {sorted(lengths)}")
        self.n_samples = lengths.pop() if lengths else 0

    def __len__(self):
        return self.n_samples

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return InputRecord(v[idx] for v in self.values)
        idx = np.arange(self.n_samples)[idx]
        return InputBatch(v[idx] for v in self.values)

    def records(self):
        return [self[i] for i in range(self.n_samples)]


def flat_width(skeleton):
    return sum(s.n_columns for s in skeleton.inputs)


def batch_from_records(skeleton, records):
    records = list(records)
    for r in records:
        if len(r) != skeleton.n_inputs:
            raise DomainError(f"record has {len(r)} coordinates, skeleton has {skeleton.n_inputs} inputs")
    values = []
    for i, space in enumerate(skeleton.inputs):
        col = [r[i] for r in records]
        if space.n_columns > 1 or space.kind in ("gaussian", "sphere_pair", "sphere_projection"):
            col = np.asarray(col, dtype=float).reshape(len(records), space.d)
        values.append(space.check_values(col))
    return InputBatch(values)


def batch_from_flat(skeleton, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != flat_width(skeleton):
        raise DomainError(f"expected a 2-D array with {flat_width(skeleton)} columns, "
                          f"got shape {X.shape}")
    values, pos = [], 0
    for space in skeleton.inputs:
        values.append(space.from_columns(X[:, pos:pos + space.n_columns]))
        pos += space.n_columns
    return InputBatch(values)


def batch_to_flat(skeleton, batch):
    return np.hstack([s.to_columns(v) for s, v in zip(skeleton.inputs, batch.values)])


def as_input_batch(skeleton, X):
    """Validate ``X`` against the skeleton's input spaces and batch it."""
    if isinstance(X, InputBatch):
        if len(X.values) != skeleton.n_inputs:
            raise DomainError(f"batch has {len(X.values)} nodes, skeleton has {skeleton.n_inputs} inputs")
        return InputBatch(s.check_values(v) for s, v in zip(skeleton.inputs, X.values))
    if isinstance(X, InputRecord):
        return batch_from_records(skeleton, [X])
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], InputRecord):
        return batch_from_records(skeleton, X)
    return batch_from_flat(skeleton, X)
