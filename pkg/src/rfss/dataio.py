"""Config and dataset files.

Datasets are CSV with a header row. Columns are read in the skeleton's flat
layout order (see :mod:`rfss.inputs`); a column named ``label`` is pulled out
as the target wherever it appears.
"""

import csv
import json
import logging

import numpy as np

from .exceptions import DomainError, StructuralError
from .inputs import batch_from_flat, batch_to_flat, flat_width
from .skeleton import Skeleton

log = logging.getLogger(__name__)

SPHERE_WARN = 1e-6
LABEL = "label"


class ConfigParseError(Exception):
    """Config file is unreadable, not JSON, or missing required fields."""


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParseError(f"{path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigParseError(f"{path}: top level must be a JSON object")
    return doc


def load_skeleton(path):
    """Parse a config into a Skeleton; structural checks are left to ``validate``."""
    doc = load_config(path)
    try:
        return Skeleton.from_config(doc)
    except StructuralError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc


def read_dataset(path, skeleton):
    """Return ``(batch, labels or None)``; sphere rows are renormalized."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DomainError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    label_col = header.index(LABEL) if LABEL in header else None
    width = flat_width(skeleton)
    n_feat = len(header) - (label_col is not None)
    if n_feat != width:
        raise DomainError(f"{path} has {n_feat} input columns, skeleton needs {width}")
    keep = [j for j in range(len(header)) if j != label_col]
    try:
        X = np.array([[float(r[j]) for j in keep] for r in body], dtype=float).reshape(len(body), width)
    except (ValueError, IndexError) as exc:
        raise DomainError(f"{path}: bad numeric cell ({exc})") from exc
    labels = None
    if label_col is not None:
        raw = [r[label_col] for r in body]
        try:
            labels = np.array([float(v) for v in raw])
            if np.all(labels == np.round(labels)):
                labels = labels.astype(int)
        except ValueError:
            labels = np.array(raw)
    X = _renormalize_spheres(skeleton, X, path)
    return batch_from_flat(skeleton, X), labels


def _renormalize_spheres(skeleton, X, path):
    pos = 0
    X = X.copy()
    for node, space in enumerate(skeleton.inputs, start=1):
        if space.kind in ("sphere_pair", "sphere_projection"):
            block = X[:, pos:pos + space.d]
            norms = np.linalg.norm(block, axis=1)
            off = np.abs(norms - 1.0) > SPHERE_WARN
            if np.any(off):
                log.warning("%s: %d rows of node %d were off the unit sphere by > %g; renormalized",
                            path, int(off.sum()), node, SPHERE_WARN)
            if np.any(norms == 0):
                raise DomainError(f"{path}: zero vector for sphere node {node}")
            X[:, pos:pos + space.d] = block / norms[:, None]
        pos += space.n_columns
    return X


def column_names(skeleton):
    names = []
    for node, space in enumerate(skeleton.inputs, start=1):
        if space.n_columns == 1:
            names.append(f"x{node}")
        else:
            names.extend(f"x{node}_{k}" for k in range(1, space.n_columns + 1))
    return names


def write_dataset(path, skeleton, batch, labels=None):
    X = batch_to_flat(skeleton, batch)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(column_names(skeleton) + ([LABEL] if labels is not None else []))
        for i, row in enumerate(X.tolist()):
            cells = [repr(v) for v in row]
            if labels is not None:
                v = labels[i]
                cells.append(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v))
            w.writerow(cells)


def write_matrix_csv(path, M, header):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.asarray(M).tolist():
            w.writerow([repr(float(v)) for v in row])
