import math

import numpy as np
import pytest

from rfss.base_spaces import Binary, Categorical, Circle, Gaussian, SphereCoordPair, SphereProjection
from rfss.exceptions import DomainError, UnsupportedSpaceError
from rfss.inputs import InputRecord
from rfss.kernel_oracle import (enumerate_kernel, enumerate_pairs, exact_kernel, kernel_matrix,
                                mc_kernel, write_kernel_csv)
from rfss.skeleton import ConjugateActivation, Skeleton, layered, relu_conjugate_coeffs, shallow

from conftest import discrete_skeletons, random_batch


def test_self_kernel_is_one(rng):
    sks = dict(discrete_skeletons())
    sks["gauss-relu"] = layered([Gaussian(3), SphereProjection(3)],
                                [relu_conjugate_coeffs(64), ConjugateActivation.exp_scaled(2.0)])
    for sk in sks.values():
        K = kernel_matrix(sk, random_batch(sk, 25, rng))
        assert np.max(np.abs(np.diag(K) - 1)) <= 1e-10
        assert np.max(np.abs(K)) <= 1 + 1e-12


def test_shallow_exp_closed_form(rng):
    c = 0.25
    sk = shallow([Circle()] * 3, ConjugateActivation.exp_scaled(c))
    z = np.exp(1j * rng.uniform(-np.pi, np.pi, 3))
    w = z * np.exp(1j * 0.7)  # every base kernel equals cos(0.7)
    rho = math.cos(0.7)
    assert exact_kernel(sk, InputRecord(z), InputRecord(w)) == pytest.approx(math.exp(c * (rho - 1)), abs=1e-14)


def test_single_input_equals_base_kernel():
    sk = Skeleton((Categorical(4),))
    assert exact_kernel(sk, InputRecord([2]), InputRecord([3])) == 0.0
    sk = Skeleton((Circle(),))
    assert exact_kernel(sk, InputRecord([1j]), InputRecord([np.exp(0.3j)])) == pytest.approx(math.sin(0.3))


def test_arity_mismatch():
    sk = shallow([Circle()] * 3, ConjugateActivation.exp_scaled(1.0))
    with pytest.raises(DomainError):
        exact_kernel(sk, InputRecord([1j]), InputRecord([1j]))


def test_series_and_closed_form_agree():
    act = ConjugateActivation.exp_scaled(0.6)
    rho = np.linspace(-1, 1, 201)
    assert np.max(np.abs(act.series(rho) - act(rho))) <= 1e-10


def test_mc_constant():
    sk = shallow([Circle()], ConjugateActivation.explicit([1.0]))
    assert mc_kernel(sk, InputRecord([1j]), InputRecord([-1j]), 1, 0) == 1.0


def test_mc_binary_exact():
    sk = Skeleton((Binary(),))
    for q in (1, 7, 50):
        assert mc_kernel(sk, InputRecord([1.0]), InputRecord([-1.0]), q, q) == -1.0


def test_mc_shallow_pass_rate(rng):
    sk = shallow([Circle()] * 4, ConjugateActivation.exp_scaled(1.0))
    X, Y = random_batch(sk, 100, rng), random_batch(sk, 100, rng)
    exact = np.diag(kernel_matrix(sk, X, Y))
    ok = [abs(mc_kernel(sk, X[i], Y[i], 4096, 1000 + i) - exact[i]) <= 0.05 for i in range(100)]
    assert np.mean(ok) >= 0.99


@pytest.mark.parametrize("name", list(discrete_skeletons()))
def test_enumeration_matches_recurrence(name, rng):
    sk = discrete_skeletons()[name]
    X, Y = random_batch(sk, 100, rng), random_batch(sk, 100, rng)
    vals, bound = enumerate_pairs(sk, X, Y)
    exact = np.diag(kernel_matrix(sk, X, Y))
    assert np.max(np.abs(vals - exact)) <= 1e-8 + bound


def test_enumeration_binary_exp():
    sk = shallow([Binary(), Binary()], ConjugateActivation.exp_scaled(1.0))
    x, y = InputRecord([1.0, -1.0]), InputRecord([1.0, 1.0])
    res = enumerate_kernel(sk, x, y, degree_cap=30)
    assert abs(res.value - exact_kernel(sk, x, y)) <= 1e-8
    assert res.error_bound < 1e-9


def test_enumeration_base_cases():
    sk = Skeleton((SphereCoordPair(3),))
    x, y = np.array([1.0, 0, 0]), np.array([0.6, 0.8, 0])
    assert enumerate_kernel(sk, InputRecord([x]), InputRecord([y])).value == pytest.approx(0.6, abs=1e-15)
    sk = shallow([Circle(), Binary()], ConjugateActivation.explicit([1.0]))
    r = enumerate_kernel(sk, InputRecord([1j, 1.0]), InputRecord([-1j, -1.0]))
    assert r.value == 1.0 and r.error_bound == 0.0


def test_enumeration_rejects_continuous():
    sk = shallow([Gaussian(2), Circle()], ConjugateActivation.exp_scaled(1.0))
    with pytest.raises(UnsupportedSpaceError):
        enumerate_kernel(sk, InputRecord([np.zeros(2), 1j]), InputRecord([np.zeros(2), 1j]))


def test_enumeration_bound_is_rigorous():
    # a tiny degree cap leaves a large truncation error that the bound must cover
    sk = shallow([Circle(), Circle()], ConjugateActivation.exp_scaled(3.0))
    x, y = InputRecord([1j, 1.0]), InputRecord([1j, 1j])
    for cap in (1, 2, 4, 8):
        r = enumerate_kernel(sk, x, y, degree_cap=cap)
        assert abs(r.value - exact_kernel(sk, x, y)) <= r.error_bound + 1e-15


def test_kernel_csv(tmp_path, rng):
    sk = discrete_skeletons()["circle4-exp"]
    K = kernel_matrix(sk, random_batch(sk, 5, rng))
    write_kernel_csv(K, tmp_path / "k.csv")
    back = np.loadtxt(tmp_path / "k.csv", delimiter=",", skiprows=1)
    assert np.array_equal(back, K)
