"""Regularized linear learning on top of random-feature embeddings.

The objective is ``(1/m) sum_i loss(V e_i, y_i) + lam * ||V||_F^2`` with

* squared loss ``0.5 * ||yhat - y||^2``: the minimizer solves
  ``(X^T X / m + 2 lam I) V^T = X^T Y / m``;
* logistic (softmax cross-entropy) loss, minimized by gradient descent with
  Barzilai-Borwein steps and Armijo backtracking so the objective never
  increases between iterations.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp, softmax
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .bench import synth_inputs
from .embedding import embed
from .exceptions import ConvergenceError, ParameterError, UsageError
from .features import build_registry
from .kernel_oracle import kernel_matrix
from .random import derive_seed

LOSSES = ("squared", "logistic")


def auto_lambda(m, B, rho=1.0, C=1.0):
    """sqrt(2) rho C / (sqrt(m) B)."""
    if B <= 0 or rho <= 0:
        raise ParameterError("B and rho must be positive")
    return math.sqrt(2.0) * rho * C / (math.sqrt(m) * B)


@dataclass
class TrainConfig:
    """``lam`` or ``auto=(B, rho)`` (with ``C``) fixes the regularization."""

    lam: float = None
    auto: tuple = None
    C: float = 1.0
    loss: str = "squared"
    classification: bool = False
    max_iter: int = 10_000
    tol: float = 1e-8
    seed: int = 0

    def resolve_lambda(self, m):
        lam = auto_lambda(m, *self.auto, C=self.C) if self.auto is not None else self.lam
        if lam is None or not lam > 0:
            raise ParameterError("lambda must be positive")
        return float(lam)


@dataclass
class LinearModel:
    V: np.ndarray
    lam: float
    loss_kind: str
    classes: np.ndarray = None
    registry_hash: str = None
    real_seed: int = 0
    phases: str = "entry"
    history: list = field(default_factory=list, repr=False)

    def decision(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.V.shape[1]:
            raise UsageError(f"expected embeddings with {self.V.shape[1]} columns, got {X.shape}")
        return X @ self.V.T

    def predict(self, X):
        out = self.decision(X)
        if self.classes is not None:
            return self.classes[np.argmax(out, axis=1)]
        return out[:, 0] if out.shape[1] == 1 else out


def _targets(labels, config):
    labels = np.asarray(labels)
    if config.classification or config.loss == "logistic":
        classes, idx = np.unique(labels, return_inverse=True)
        Y = np.zeros((len(labels), len(classes)))
        Y[np.arange(len(labels)), idx] = 1.0
        return Y, classes
    Y = labels.astype(float)
    return (Y[:, None] if Y.ndim == 1 else Y), None


def loss_values(S, Y, loss_kind):
    """Per-row loss for scores ``S`` and targets ``Y`` (one-hot for logistic)."""
    if loss_kind == "squared":
        return 0.5 * np.sum((S - Y) ** 2, axis=1)
    return logsumexp(S, axis=1) - np.sum(S * Y, axis=1)


def objective(V, X, Y, lam, loss_kind):
    return float(np.mean(loss_values(X @ V.T, Y, loss_kind)) + lam * np.sum(V * V))


def _fit_logistic(X, Y, lam, max_iter, tol):
    m = X.shape[0]
    V = np.zeros((Y.shape[1], X.shape[1]))

    def grad(V):
        return (softmax(X @ V.T, axis=1) - Y).T @ X / m + 2.0 * lam * V

    f, g = objective(V, X, Y, lam, "logistic"), grad(V)
    # step bound from the smoothness constant 0.5 ||X||^2 / m + 2 lam
    step = 1.0 / (0.5 * np.linalg.norm(X, 2) ** 2 / m + 2.0 * lam)
    history = [f]
    for it in range(max_iter):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return V, history
        t = step
        while True:
            V_new = V - t * g
            f_new = objective(V_new, X, Y, lam, "logistic")
            if f_new <= f - 1e-4 * t * gnorm**2 or t < 1e-20:
                break
            t *= 0.5
        if f_new > f:
            break
        g_new = grad(V_new)
        s, y = (V_new - V).ravel(), (g_new - g).ravel()
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else step
        V, f, g = V_new, f_new, g_new
        history.append(f)
    raise ConvergenceError(
        f"logistic training stopped after {len(history) - 1} iterations",
        {"objective": f, "grad_norm": float(np.linalg.norm(g)), "iterations": len(history) - 1})


def train(embedded, labels, config):
    """Minimize the regularized objective over ``V``."""
    X = np.asarray(embedded)
    if np.iscomplexobj(X):
        raise UsageError("training expects real-mode embeddings")
    X = X.astype(float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise UsageError("embedded must be a nonempty 2-D matrix")
    if config.loss not in LOSSES:
        raise ParameterError(f"loss must be one of {LOSSES}")
    m, D = X.shape
    Y, classes = _targets(labels, config)
    if Y.shape[0] != m:
        raise UsageError("embedded and labels have different numbers of rows")
    lam = config.resolve_lambda(m)
    if config.loss == "squared":
        A = X.T @ X / m + 2.0 * lam * np.eye(D)
        V = linalg.solve(A, X.T @ Y / m, assume_a="pos").T
        history = []
    else:
        V, history = _fit_logistic(X, Y, lam, config.max_iter, config.tol)
    return LinearModel(V, lam, config.loss, classes, history=history)


def evaluate(model, embedded, labels):
    """Mean loss plus mse (regression) or accuracy (classification)."""
    S = model.decision(embedded)
    labels = np.asarray(labels)
    if len(labels) != S.shape[0]:
        raise UsageError("embedded and labels have different numbers of rows")
    if model.classes is not None:
        idx = np.searchsorted(model.classes, labels)
        idx = np.clip(idx, 0, len(model.classes) - 1)
        known = model.classes[idx] == labels
        Y = np.zeros_like(S)
        Y[np.flatnonzero(known), idx[known]] = 1.0
        pred = model.classes[np.argmax(S, axis=1)]
        return {"loss": float(np.mean(loss_values(S, Y, model.loss_kind))),
                "accuracy": float(np.mean(pred == labels))}
    Y = labels.astype(float)
    Y = Y[:, None] if Y.ndim == 1 else Y
    return {"loss": float(np.mean(loss_values(S, Y, model.loss_kind))),
            "mse": float(np.mean((S - Y) ** 2))}


# -- teacher / rate experiment ------------------------------------------------

@dataclass
class Teacher:
    """f(x) = sum_j coef_j k(x, center_j) for the exact skeleton kernel."""

    skeleton: object
    centers: object
    coef: np.ndarray

    def __call__(self, X):
        return kernel_matrix(self.skeleton, X, self.centers) @ self.coef

    @property
    def rkhs_norm(self):
        K = kernel_matrix(self.skeleton, self.centers)
        return float(math.sqrt(max(self.coef @ K @ self.coef, 0.0)))


def make_teacher(skeleton, n_centers, seed, norm=1.0):
    """Random kernel expansion rescaled to the given RKHS norm."""
    centers = synth_inputs(skeleton, n_centers, derive_seed(seed, 1))
    coef = np.random.default_rng(derive_seed(seed, 2)).standard_normal(n_centers)
    t = Teacher(skeleton, centers, coef)
    t.coef = coef * (norm / t.rkhs_norm)
    return t


@dataclass
class RateRow:
    q: int
    trial: int
    train_loss: float
    test_loss: float
    excess: float


def rate_experiment(skeleton, teacher, m, q_list, trials, seed, n_test=512, lam=None):
    """Held-out error of ridge on q-feature embeddings against the teacher.

    Per trial, train and test points are drawn fresh; labels are the noiseless
    teacher values. ``test_loss`` is the mean absolute deviation from the
    teacher (a 1-Lipschitz loss); ``excess`` subtracts the same quantity for
    exact-kernel ridge at the same ``lam``, which is the q -> infinity limit.
    Training uses squared loss in closed form on real embeddings.
    """
    lam = auto_lambda(m, teacher.rkhs_norm) if lam is None else lam
    rows = []
    for t in range(trials):
        Xtr = synth_inputs(skeleton, m, derive_seed(seed, t, 0))
        Xte = synth_inputs(skeleton, n_test, derive_seed(seed, t, 1))
        ytr, yte = teacher(Xtr), teacher(Xte)
        # exact-kernel ridge: alpha = (K + 2 m lam I)^-1 y
        K = kernel_matrix(skeleton, Xtr)
        alpha = linalg.solve(K + 2.0 * m * lam * np.eye(m), ytr, assume_a="pos")
        limit = float(np.mean(np.abs(kernel_matrix(skeleton, Xte, Xtr) @ alpha - yte)))
        for q in q_list:
            s = derive_seed(seed, t, q)
            reg = build_registry(skeleton, q, s)
            Etr = embed(reg, Xtr, skeleton, True, s).values
            Ete = embed(reg, Xte, skeleton, True, s).values
            model = train(Etr, ytr, TrainConfig(lam=lam))
            tr = float(np.mean(np.abs(model.predict(Etr) - ytr)))
            te = float(np.mean(np.abs(model.predict(Ete) - yte)))
            rows.append(RateRow(int(q), t, tr, te, te - limit))
    return rows


def write_predictions_csv(pred, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        pred = np.asarray(pred)
        if pred.ndim == 1:
            w.writerow(["prediction"])
            w.writerows([[repr(v) if isinstance(v, float) else v] for v in pred.tolist()])
        else:
            w.writerow([f"y{j}" for j in range(pred.shape[1])])
            w.writerows([[repr(v) for v in row] for row in pred.tolist()])


# -- model files --------------------------------------------------------------

MODEL_FORMAT = "rfss-model"


def save_model(model, path):
    np.savez(path, format=MODEL_FORMAT, version=1, V=model.V, lam=model.lam,
             loss_kind=model.loss_kind,
             classes=np.array([]) if model.classes is None else model.classes,
             has_classes=model.classes is not None,
             registry_hash=model.registry_hash or "", real_seed=str(model.real_seed),
             phases=model.phases)


def load_model(path):
    with np.load(path, allow_pickle=False) as z:
        if str(z["format"]) != MODEL_FORMAT or int(z["version"]) != 1:
            raise UsageError("not a version-1 model file")
        return LinearModel(z["V"], float(z["lam"]), str(z["loss_kind"]),
                           z["classes"] if bool(z["has_classes"]) else None,
                           str(z["registry_hash"]) or None, int(str(z["real_seed"])),
                           str(z["phases"]))


# -- sklearn estimators ---------------------------------------------------------

class _FeatureLinearBase(BaseEstimator):
    def __init__(self, lam=1e-3, auto_B=None, rho=1.0, C=1.0, max_iter=10_000, tol=1e-8):
        self.lam = lam
        self.auto_B = auto_B
        self.rho = rho
        self.C = C
        self.max_iter = max_iter
        self.tol = tol

    def _config(self, loss, classification):
        auto = None if self.auto_B is None else (self.auto_B, self.rho)
        return TrainConfig(lam=self.lam, auto=auto, C=self.C, loss=loss,
                           classification=classification, max_iter=self.max_iter, tol=self.tol)


class FeatureRidgeRegressor(RegressorMixin, _FeatureLinearBase):
    """Ridge regression on embedded features with the 2*lam normal equations.

    Use after :class:`~rfss.embedding.SkeletonFeatureMap` in a pipeline.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self.model_ = train(X, y, self._config("squared", False))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(check_array(X))


class FeatureLinearClassifier(ClassifierMixin, _FeatureLinearBase):
    """Linear classifier on embedded features.

    ``loss="squared"`` regresses one-hot targets in closed form;
    ``loss="logistic"`` minimizes softmax cross-entropy.
    """

    def __init__(self, loss="squared", lam=1e-3, auto_B=None, rho=1.0, C=1.0,
                 max_iter=10_000, tol=1e-8):
        super().__init__(lam, auto_B, rho, C, max_iter, tol)
        self.loss = loss

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = unique_labels(y)
        self.model_ = train(X, y, self._config(self.loss, True))
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision(check_array(X))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(check_array(X))
