"""GP classification of the two binary outcomes via Laplace approximation.

Each outcome (tumor control, pneumonitis) gets an independent SE-kernel GP
over the transition-predicted final states.  The latent posterior is
approximated at its mode by damped Newton ascent of the penalized Bernoulli
log-likelihood; hyperparameters maximize the Laplace approximate marginal
with a 1/precision (scale-invariant) prior on the precision.

The predictive variance follows the source formulation, which omits the
usual curvature correction; the corrected variant is available behind a
flag for comparison.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from . import gp
from .errors import ConvergenceError, DoseguideError

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 100
MAX_HALVINGS = 20

OUTCOMES = ("lc", "rp2")


@dataclass(frozen=True)
class LaplaceFit:
    """Mode, curvature, and precision matrix of the latent posterior."""

    latent_mode: np.ndarray
    hessian_diag: np.ndarray  # sigmoid curvature at the mode, in (0, 0.25]
    precision_matrix: np.ndarray  # precision * K^{-1} + diag(hessian_diag)
    objective_value: float
    objective_trajectory: tuple
    iterations: int


def _bernoulli_loglik(h, labels):
    return float(np.sum(labels * log_expit(h) + (1 - labels) * log_expit(-h)))


def laplace_fit(gm: gp.GramMatrix, labels, precision) -> LaplaceFit:
    """Damped Newton ascent to the mode of the penalized log-likelihood.

    Iterates the dual vector a = C^{-1} h (with C the Gram scaled by
    1/precision) so no explicit Gram inverse enters the update; solves go
    through the well-conditioned I + W^1/2 C W^1/2.
    """
    labels = np.asarray(labels, dtype=float)
    if labels.shape != (gm.n,):
        raise DoseguideError("labels must align with the Gram matrix")
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise DoseguideError("labels must be binary")

    C = gm.entries / precision
    h = np.zeros(gm.n)
    dual = np.zeros(gm.n)  # C^{-1} h, maintained alongside h
    psi = _bernoulli_loglik(h, labels)
    trajectory = [psi]
    grad_norm = math.inf
    for iteration in range(1, NEWTON_MAX_ITER + 1):
        prob = expit(h)
        grad = (labels - prob) - dual
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < NEWTON_TOL:
            break
        w = prob * (1.0 - prob)
        w_sqrt = np.sqrt(w)
        B = np.eye(gm.n) + w_sqrt[:, None] * C * w_sqrt[None, :]
        L = np.linalg.cholesky(B)
        b = w * h + (labels - prob)
        tmp = np.linalg.solve(L, w_sqrt * (C @ b))
        dual_newton = b - w_sqrt * np.linalg.solve(L.T, tmp)
        h_newton = C @ dual_newton

        scale = 1.0
        slack = 1e-9 * (1.0 + abs(psi))  # tolerate rounding on the plateau
        for _ in range(MAX_HALVINGS):
            h_cand = h + scale * (h_newton - h)
            dual_cand = dual + scale * (dual_newton - dual)
            psi_new = _bernoulli_loglik(h_cand, labels) - 0.5 * float(
                dual_cand @ h_cand
            )
            if psi_new >= psi - slack:
                break
            scale *= 0.5
        else:
            h_cand, dual_cand, psi_new = h, dual, psi
        h, dual, psi = h_cand, dual_cand, psi_new
        trajectory.append(psi)
    else:
        raise ConvergenceError(grad_norm, NEWTON_MAX_ITER)

    prob = expit(h)
    curvature = prob * (1.0 - prob)
    k_inv = gp.gram_inverse(gm)
    return LaplaceFit(
        latent_mode=h,
        hessian_diag=curvature,
        precision_matrix=precision * 0.5 * (k_inv + k_inv.T)
        + np.diag(curvature),
        objective_value=psi,
        objective_trajectory=tuple(trajectory),
        iterations=iteration,
    )


def laplace_evidence(gm: gp.GramMatrix, fit: LaplaceFit, precision) -> float:
    """Laplace approximate log-marginal plus the log(1/precision) prior."""
    w_sqrt = np.sqrt(fit.hessian_diag)
    B = np.eye(gm.n) + (w_sqrt[:, None] * gm.entries * w_sqrt[None, :]) / precision
    L = np.linalg.cholesky(B)
    half_logdet = float(np.sum(np.log(np.diag(L))))
    return fit.objective_value - half_logdet - math.log(precision)


@dataclass(frozen=True)
class OutcomeClassifier:
    """One fitted Laplace GP classifier."""

    outcome: str
    params: gp.SEKernelParams
    gram: gp.GramMatrix
    training_inputs: np.ndarray
    labels: np.ndarray
    fit: LaplaceFit
    alpha: np.ndarray  # K^{-1} latent_mode
    jitter: float


@dataclass(frozen=True)
class EvaluationModel:
    """The pair of outcome classifiers over predicted final states."""

    classifiers: dict  # "lc" / "rp2" -> OutcomeClassifier
    training_inputs: np.ndarray = field(repr=False)

    def __getitem__(self, outcome):
        return self.classifiers[outcome]


def fit_eval_hyperparams(inputs, labels, grid: gp.GridSpec,
                         jitter=gp.DEFAULT_JITTER) -> gp.SEKernelParams:
    """Grid-search kernel rates and precision for one outcome classifier."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    labels = np.asarray(labels, dtype=float)

    def objective(params):
        gm = gp.gram(inputs, params, jitter)
        try:
            fit = laplace_fit(gm, labels, params.precision)
        except ConvergenceError:
            return -math.inf
        return laplace_evidence(gm, fit, params.precision)

    return gp.search_hyperparams(objective, inputs.shape[1], grid)


def fit_evaluation(inputs, y1, y2, grid: gp.GridSpec,
                   jitter=gp.DEFAULT_JITTER) -> EvaluationModel:
    """Fit both outcome classifiers on the predicted final states."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[0] < 2:
        raise DoseguideError("need at least 2 samples to fit classifiers")
    classifiers = {}
    for outcome, labels in (("lc", y1), ("rp2", y2)):
        labels = np.asarray(labels, dtype=float)
        params = fit_eval_hyperparams(inputs, labels, grid, jitter)
        gm = gp.gram(inputs, params, jitter)
        fit = laplace_fit(gm, labels, params.precision)
        classifiers[outcome] = OutcomeClassifier(
            outcome=outcome,
            params=params,
            gram=gm,
            training_inputs=inputs,
            labels=labels,
            fit=fit,
            alpha=gp.solve(gm, fit.latent_mode),
            jitter=jitter,
        )
    return EvaluationModel(classifiers=classifiers, training_inputs=inputs)


def predict_logit(clf: OutcomeClassifier, s, corrected_variance=False):
    """Latent mean and variance at query state(s).

    Mean is k(s, S)^T K^{-1} H; variance is (k(s,s) - k^T K^{-1} k) /
    precision.  With ``corrected_variance`` the curvature term (W^{-1} added
    to the covariance before inversion) is included instead.
    """
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    queries = np.atleast_2d(s)
    kvec = gp.se_cross(queries, clf.training_inputs, clf.params.rates)  # (B, n)
    mean = kvec @ clf.alpha
    if corrected_variance:
        cov = clf.gram.entries / clf.params.precision
        adjusted = cov + np.diag(1.0 / np.maximum(clf.fit.hessian_diag, 1e-300))
        sol = np.linalg.solve(adjusted, (kvec / clf.params.precision).T)
        explained = np.einsum("bn,nb->b", kvec / clf.params.precision, sol)
        variance = np.maximum(0.0, 1.0 / clf.params.precision - explained)
    else:
        sol = gp.solve(clf.gram, kvec.T)
        explained = np.einsum("bn,nb->b", kvec, sol)
        variance = np.maximum(0.0, 1.0 - explained) / clf.params.precision
    if single:
        return float(mean[0]), float(variance[0])
    return mean, variance


def cross_entropy(probs, labels) -> float:
    """Summed binary cross-entropy with probabilities clamped away from 0/1."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if probs.shape != labels.shape:
        raise DoseguideError("probabilities and labels must be the same length")
    p = np.clip(probs, 1e-12, 1.0 - 1e-12)
    return float(-np.sum(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


@dataclass(frozen=True)
class ClassifierDiagnostics:
    cross_entropy: float
    probabilities: np.ndarray
    baseline_cross_entropy: float
    baseline_probabilities: np.ndarray


def diagnostics(probs, baseline_probs, labels) -> ClassifierDiagnostics:
    return ClassifierDiagnostics(
        cross_entropy=cross_entropy(probs, labels),
        probabilities=np.asarray(probs, dtype=float),
        baseline_cross_entropy=cross_entropy(baseline_probs, labels),
        baseline_probabilities=np.asarray(baseline_probs, dtype=float),
    )


class LogisticBaseline:
    """Ridge-stabilized logistic regression, the uncalibrated point pipeline.

    Deterministic Newton fit; serves as the point-estimate counterpart the
    GP classifiers are compared against in the cross-entropy diagnostics.
    """

    def __init__(self, ridge=1e-4, max_iter=100, tol=1e-10):
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol
        self.coef = None

    def fit(self, X, labels):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        labels = np.asarray(labels, dtype=float)
        Z = np.column_stack([np.ones(X.shape[0]), X])
        beta = np.zeros(Z.shape[1])
        for _ in range(self.max_iter):
            p = expit(Z @ beta)
            grad = Z.T @ (labels - p) - self.ridge * beta
            w = np.maximum(p * (1.0 - p), 1e-12)
            hess = Z.T @ (Z * w[:, None]) + self.ridge * np.eye(Z.shape[1])
            step = np.linalg.solve(hess, grad)
            beta = beta + step
            if np.linalg.norm(step) < self.tol:
                break
        self.coef = beta
        return self

    def predict_proba(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = np.column_stack([np.ones(X.shape[0]), X])
        return expit(Z @ self.coef)
