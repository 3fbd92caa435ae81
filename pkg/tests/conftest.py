import json

import numpy as np
import pytest

from rfss.base_spaces import Binary, Categorical, Circle, SphereCoordPair
from rfss.skeleton import ConjugateActivation, InternalNode, Skeleton, local, shallow


@pytest.fixture
def exp1():
    return ConjugateActivation.exp_scaled(1.0)


@pytest.fixture
def circle4(exp1):
    return shallow([Circle()] * 4, exp1)


def discrete_skeletons():
    """Small skeletons over finite base spaces, used across oracle tests."""
    e1 = ConjugateActivation.exp_scaled(1.0)
    eq = ConjugateActivation.exp_scaled(0.25)
    poly = ConjugateActivation.explicit([0.2, 0.3, 0.5])
    cube = ConjugateActivation.explicit([0.1, 0.0, 0.4, 0.5])
    return {
        "binary2-exp": shallow([Binary(), Binary()], e1),
        "circle4-exp": shallow([Circle()] * 4, e1),
        "mixed-explicit": shallow([Binary(), Circle(), Categorical(5)], poly),
        "sphere-pair": shallow([SphereCoordPair(3), Circle()], eq),
        "two-layer": local([Circle(), Binary(), Categorical(3), Circle()], 2, cube, e1),
        "shared-child": Skeleton((Circle(), Binary()),
                                 (InternalNode(poly, (1, 2)), InternalNode(e1, (3, 1)))),
    }


def write_config(path, skeleton):
    path.write_text(json.dumps(skeleton.to_config()))
    return str(path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_values(space, n, rng):
    """Independent uniform-ish domain points for one base space."""
    kind = space.kind
    if kind == "binary":
        return rng.choice([-1.0, 1.0], n)
    if kind == "circle":
        return np.exp(1j * rng.uniform(-np.pi, np.pi, n))
    if kind == "categorical":
        return rng.integers(1, space.n + 1, n)
    z = rng.standard_normal((n, space.d))
    if kind == "gaussian":
        return z / np.sqrt(space.d)
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def random_batch(skeleton, n, rng):
    from rfss.inputs import InputBatch
    return InputBatch([random_values(s, n, rng) for s in skeleton.inputs])
