import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from rfss.base_spaces import Circle
from rfss.exceptions import ConvergenceError, ParameterError, UsageError
from rfss.learner import (FeatureLinearClassifier, FeatureRidgeRegressor, LinearModel, TrainConfig,
                          auto_lambda, evaluate, load_model, make_teacher, objective,
                          rate_experiment, save_model, train, write_predictions_csv)
from rfss.skeleton import ConjugateActivation, shallow


def data(rng, m=40, D=12):
    X = rng.standard_normal((m, D)) / math.sqrt(D)
    y = X @ rng.standard_normal(D) + 0.1 * rng.standard_normal(m)
    return X, y


def test_heavy_regularization(rng):
    X, y = data(rng)
    model = train(X, y, TrainConfig(lam=1e6))
    assert np.linalg.norm(model.V) <= 1e-3


def test_one_sample_closed_form(rng):
    e = rng.standard_normal(7)
    lam, y = 0.3, 2.5
    model = train(e[None, :], [y], TrainConfig(lam=lam))
    assert np.allclose(model.V[0], y * e / (e @ e + 2 * lam), atol=1e-14)


def test_normal_equations(rng):
    X, y = data(rng)
    lam = 0.01
    V = train(X, y, TrainConfig(lam=lam)).V
    m = len(y)
    lhs = (X.T @ X / m + 2 * lam * np.eye(X.shape[1])) @ V.T
    assert np.allclose(lhs[:, 0], X.T @ y / m, atol=1e-12)


def test_minimizer_beats_zero(rng):
    X, y = data(rng)
    for loss, labels, cls in (("squared", y, False), ("logistic", (y > 0).astype(int), True)):
        model = train(X, labels, TrainConfig(lam=0.01, loss=loss, classification=cls))
        Y = np.eye(2)[labels] if cls else y[:, None]
        zero = np.zeros_like(model.V)
        assert objective(model.V, X, Y, 0.01, loss) <= objective(zero, X, Y, 0.01, loss)


def test_squared_first_order_condition(rng):
    X, y = data(rng)
    lam = 0.05
    V = train(X, y, TrainConfig(lam=lam)).V
    h = 1e-6
    base = objective(V, X, y[:, None], lam, "squared")
    for j in range(3):
        Vp = V.copy()
        Vp[0, j] += h
        # a minimizer's directional derivative is ~0 (second-order change only)
        assert abs(objective(Vp, X, y[:, None], lam, "squared") - base) < 1e-9


def test_logistic_monotone_and_converged(rng):
    X, y = data(rng, m=60)
    labels = np.digitize(y, [-0.3, 0.3])
    model = train(X, labels, TrainConfig(lam=0.01, loss="logistic"))
    h = np.array(model.history)
    assert np.all(np.diff(h) <= 0)
    S = X @ model.V.T
    P = np.exp(S - S.max(axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    G = (P - np.eye(3)[labels]).T @ X / len(X) + 0.02 * model.V
    assert np.linalg.norm(G) <= 1e-8


def test_logistic_convergence_error(rng):
    X, y = data(rng)
    with pytest.raises(ConvergenceError) as info:
        train(X, (y > 0).astype(int), TrainConfig(lam=1e-4, loss="logistic", max_iter=2))
    assert "grad_norm" in info.value.diagnostics


def test_squared_reproducible(rng):
    X, y = data(rng)
    a = train(X, y, TrainConfig(lam=0.1)).V
    b = train(X.copy(), y.copy(), TrainConfig(lam=0.1)).V
    assert np.array_equal(a, b)


def test_auto_lambda_identity():
    for m in (1, 10, 1000):
        for B in (0.5, 1, 3):
            assert abs(auto_lambda(m, B) - math.sqrt(2) / (math.sqrt(m) * B)) <= 1e-12
    cfg = TrainConfig(auto=(2.0, 1.0), C=1.0)
    assert cfg.resolve_lambda(50) == auto_lambda(50, 2.0)
    with pytest.raises(ParameterError):
        TrainConfig(lam=0).resolve_lambda(5)


def test_rejects_complex_and_shape(rng):
    with pytest.raises(UsageError):
        train(np.ones((2, 2), dtype=complex), [1, 2], TrainConfig(lam=1))
    with pytest.raises(UsageError):
        train(np.ones((3, 2)), [1, 2], TrainConfig(lam=1))


def test_evaluate_examples(rng):
    X = rng.standard_normal((5, 3))
    zero = LinearModel(np.zeros((1, 3)), 1.0, "squared")
    assert evaluate(zero, X, np.zeros(5))["loss"] == 0.0
    sep = train(np.array([[1.0, 0.0], [0.0, 1.0]]), ["a", "b"],
                TrainConfig(lam=1e-6, classification=True))
    assert evaluate(sep, np.array([[1.0, 0.0], [0.0, 1.0]]), ["a", "b"])["accuracy"] == 1.0
    with pytest.raises(UsageError):
        evaluate(zero, X[:, :2], np.zeros(5))
    with pytest.raises(UsageError):
        evaluate(zero, X, np.zeros(4))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_evaluate_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    X, y = data(rng, m=15, D=4)
    model = train(X, y, TrainConfig(lam=0.1))
    p = rng.permutation(15)
    assert evaluate(model, X, y)["loss"] == pytest.approx(evaluate(model, X[p], y[p])["loss"], rel=1e-12)


def test_model_round_trip(tmp_path, rng):
    X, y = data(rng)
    model = train(X, (y > 0).astype(int), TrainConfig(lam=0.1, classification=True))
    model.registry_hash, model.real_seed, model.phases = "abc:1:2", 2**63 + 5, "draw"
    save_model(model, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    assert np.array_equal(back.V, model.V) and back.lam == model.lam
    assert np.array_equal(back.classes, model.classes)
    assert (back.registry_hash, back.real_seed, back.phases) == ("abc:1:2", 2**63 + 5, "draw")
    write_predictions_csv(back.predict(X), tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "prediction"


def test_estimators(rng):
    X, y = data(rng, m=80)
    reg = FeatureRidgeRegressor(lam=1e-4).fit(X, y)
    assert reg.score(X, y) > 0.8
    assert clone(reg).get_params() == reg.get_params()
    clf = FeatureLinearClassifier(loss="logistic", lam=1e-3).fit(X, y > 0)
    assert clf.score(X, y > 0) > 0.8
    assert set(clf.classes_) == {False, True}
    auto = FeatureRidgeRegressor(auto_B=1.0).fit(X, y)
    assert auto.model_.lam == pytest.approx(auto_lambda(80, 1.0))


# -- rate experiment ------------------------------------------------------------

@pytest.fixture(scope="module")
def teacher_setup():
    sk = shallow([Circle()] * 4, ConjugateActivation.exp_scaled(1.0))
    return sk, make_teacher(sk, 20, 3)


def test_teacher_norm(teacher_setup):
    sk, t = teacher_setup
    assert t.rkhs_norm == pytest.approx(1.0, abs=1e-12)


def test_train_loss_reaches_floor(teacher_setup):
    sk, t = teacher_setup
    rows = rate_experiment(sk, t, 64, [64, 4096], 2, 5, n_test=64, lam=1e-6)
    big = [r.train_loss for r in rows if r.q == 4096]
    small = [r.train_loss for r in rows if r.q == 64]
    assert np.mean(big) < np.mean(small)
    assert np.mean(big) < 0.02


def test_more_data_does_not_hurt(teacher_setup):
    sk, t = teacher_setup
    loss = {}
    for m in (128, 256):
        rows = rate_experiment(sk, t, m, [256], 6, 13, n_test=256, lam=1e-4)
        loss[m] = np.mean([r.test_loss for r in rows])
    assert loss[256] <= loss[128] * 1.1
