"""Calibrated transition model: point predictor plus per-dimension GP bias.

The transition from one stage to the next is modeled as the sum of a
black-box point predictor and a zero-mean GP over its residuals, fitted
independently per non-constant state dimension on the pooled stage
transitions.  Kernel inputs are always the joint (state, dose) vector.
Constant-flagged (SNP) dimensions pass through with zero variance.
"""

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import gp
from .cohort import STAGE_COUNT, ScaledCohort
from .errors import CohortValidationError, DoseguideError

INPUT_GUARD = (-0.1, 1.1)


@dataclass(frozen=True)
class PredictorConfig:
    """Configuration of the transition point predictor.

    kind "builtin-mlp": one hidden layer trained by deterministic
    full-batch gradient descent (heavy-ball momentum), seed-controlled.
    kind "external": predictions read verbatim from a file keyed by
    (patient_id, source stage), in original units.
    """

    kind: str = "builtin-mlp"
    hidden: int = 32
    epochs: int = 2000
    learning_rate: float = 0.2
    momentum: float = 0.9
    seed: int = 0
    path: str = None

    def __post_init__(self):
        if self.kind not in ("builtin-mlp", "external"):
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.kind == "external" and not self.path:
            raise ValueError("external predictor needs a file path")

    def to_dict(self):
        return {
            "kind": self.kind,
            "hidden": self.hidden,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "seed": self.seed,
            "path": self.path,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class MlpPredictor:
    """One-hidden-layer tanh regressor, deterministic for a fixed seed."""

    kind = "builtin-mlp"

    def __init__(self, weights, config: PredictorConfig):
        self.weights = weights  # (W1, b1, W2, b2)
        self.config = config

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        W1, b1, W2, b2 = self.weights
        return np.tanh(X @ W1 + b1) @ W2 + b2

    def payload(self):
        return {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "weights": [w.tolist() for w in self.weights],
        }


def _train_mlp(X, Y, config: PredictorConfig):
    rng = np.random.default_rng(config.seed)
    n, d = X.shape
    p = Y.shape[1]
    h = config.hidden
    W1 = rng.normal(0.0, np.sqrt(2.0 / (d + h)), size=(d, h))
    b1 = np.zeros(h)
    W2 = rng.normal(0.0, np.sqrt(2.0 / (h + p)), size=(h, p))
    b2 = np.zeros(p)

    if np.allclose(Y, Y[0], atol=0.0):
        warnings.warn("degenerate transition targets; fitting a constant predictor")
        return MlpPredictor((W1 * 0, b1, W2 * 0, Y[0].copy()), config)

    params = [W1, b1, W2, b2]
    vel = [np.zeros_like(a) for a in params]
    lr, mom = config.learning_rate, config.momentum
    for _ in range(config.epochs):
        H = np.tanh(X @ params[0] + params[1])
        P = H @ params[2] + params[3]
        G = 2.0 * (P - Y) / (n * p)
        grads = (
            X.T @ ((G @ params[2].T) * (1.0 - H * H)),
            ((G @ params[2].T) * (1.0 - H * H)).sum(axis=0),
            H.T @ G,
            G.sum(axis=0),
        )
        for i, g in enumerate(grads):
            vel[i] = mom * vel[i] - lr * g
            params[i] = params[i] + vel[i]
    return MlpPredictor(tuple(params), config)


class ExternalPredictor:
    """Point predictions supplied as a file, extended by nearest neighbor.

    Rows are keyed by (patient_id, source stage t) and give the predicted
    next state for the observed input (s_t, a_t).  Queries that match a
    stored input exactly return the stored row; anything else (for example
    a what-if dose) falls back to the nearest stored input in (s, a) space.
    """

    kind = "external"

    def __init__(self, inputs, predictions, keys, config: PredictorConfig):
        self.inputs = np.asarray(inputs, dtype=float)
        self.predictions = np.asarray(predictions, dtype=float)
        self.keys = list(keys)
        self.config = config

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        d2 = ((X[:, None, :] - self.inputs[None, :, :]) ** 2).sum(axis=-1)
        return self.predictions[np.argmin(d2, axis=1)]

    def payload(self):
        return {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "inputs": self.inputs.tolist(),
            "predictions": self.predictions.tolist(),
            "keys": [[pid, int(t)] for pid, t in self.keys],
        }


def load_external_predictions(text, cohort: ScaledCohort, config: PredictorConfig):
    """Parse an external-predictions CSV (original units) against a cohort.

    Requires one row per (patient, stage 1..T); predicted values are scaled
    with the cohort's metadata so they live in the model's unit interval.
    """
    schema = cohort.schema
    active = schema.active_indices
    columns = ["patient_id", "stage"] + [
        schema.column_for(schema.names[j]) for j in active
    ]
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise CohortValidationError("external predictions file is empty", row=1)
    found = set(c.strip() for c in reader.fieldnames)
    if found != set(columns):
        bad = sorted(found.symmetric_difference(columns))
        raise CohortValidationError(
            "external predictions columns do not match the active variables",
            column=bad[0],
            row=1,
        )
    table = {}
    for line_no, row in enumerate(reader, start=2):
        pid = row["patient_id"].strip()
        try:
            stage = int(row["stage"])
        except ValueError:
            raise CohortValidationError(
                f"stage {row['stage']!r} is not an integer",
                row=line_no,
                column="stage",
            ) from None
        vals = []
        for j in active:
            col = schema.column_for(schema.names[j])
            try:
                vals.append(float(row[col]))
            except (TypeError, ValueError):
                raise CohortValidationError(
                    f"non-numeric value {row[col]!r}", row=line_no, column=col
                ) from None
        table[(pid, stage)] = np.array(vals)

    index = {pid: i for i, pid in enumerate(cohort.patient_ids)}
    inputs, predictions, keys = [], [], []
    for pid, i in index.items():
        for t in range(1, STAGE_COUNT + 1):
            if (pid, t) not in table:
                raise CohortValidationError(
                    f"missing prediction for stage {t}", patient_id=pid
                )
            raw = table[(pid, t)]
            scaled = np.array(
                [
                    cohort.scaling[j].scale(raw[k])
                    for k, j in enumerate(active)
                ]
            )
            inputs.append(
                np.concatenate(
                    [cohort.states[t - 1, i], [cohort.doses_scaled[t - 1, i]]]
                )
            )
            predictions.append(scaled)
            keys.append((pid, t))
    return ExternalPredictor(inputs, predictions, keys, config)


def _pooled_transitions(cohort: ScaledCohort, patient_index=None):
    """Stack (s_t, a_t) -> s_{t+1} pairs over stages 1..T-1."""
    idx = (
        np.arange(cohort.n) if patient_index is None else np.asarray(patient_index)
    )
    X, Y = [], []
    for t in range(STAGE_COUNT - 1):
        X.append(
            np.column_stack([cohort.states[t, idx], cohort.doses_scaled[t, idx]])
        )
        Y.append(cohort.states[t + 1, idx])
    return np.vstack(X), np.vstack(Y)


def fit_point_predictor(cohort: ScaledCohort, config: PredictorConfig,
                        patient_index=None, external_text=None):
    """Train (or load) the point predictor for the pooled stage transitions."""
    if config.kind == "external":
        if external_text is None:
            with open(config.path, encoding="utf-8") as fh:
                external_text = fh.read()
        return load_external_predictions(external_text, cohort, config)
    X, Y = _pooled_transitions(cohort, patient_index)
    active = list(cohort.schema.active_indices)
    return _train_mlp(X, Y[:, active], config)


def restore_predictor(payload):
    config = PredictorConfig.from_dict(payload["config"])
    if payload["kind"] == "builtin-mlp":
        return MlpPredictor(
            tuple(np.array(w) for w in payload["weights"]), config
        )
    return ExternalPredictor(
        np.array(payload["inputs"]),
        np.array(payload["predictions"]),
        [(pid, int(t)) for pid, t in payload["keys"]],
        config,
    )


@dataclass(frozen=True)
class DimensionGP:
    """Bias GP of one output dimension: hyperparameters and cached solves."""

    params: gp.SEKernelParams
    gram: gp.GramMatrix
    residuals: np.ndarray
    alpha: np.ndarray  # K^{-1} residuals


@dataclass(frozen=True)
class StatePrediction:
    """Per-dimension normal prediction of the next state (scaled units)."""

    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True)
class TransitionModel:
    schema: object
    predictor: object
    train_inputs: np.ndarray  # (m, q+1) pooled, scaled
    per_dim: dict  # variable index -> DimensionGP
    jitter: float
    constant_dims: tuple = field(default=())

    @property
    def active_dims(self):
        return tuple(sorted(self.per_dim))


def fit_transition(cohort: ScaledCohort, predictor, search: gp.GridSpec,
                   jitter=gp.DEFAULT_JITTER, patient_index=None) -> TransitionModel:
    """Calibrate the per-dimension bias GPs on point-predictor residuals."""
    X, Y = _pooled_transitions(cohort, patient_index)
    if X.shape[0] < 3:
        raise DoseguideError("need at least 3 pooled transitions")
    active = list(cohort.schema.active_indices)
    eta = predictor.predict(X)
    per_dim = {}
    for k, j in enumerate(active):
        residuals = Y[:, j] - eta[:, k]
        params = gp.search_hyperparams(
            lambda p: gp.log_marginal_likelihood(
                residuals, gp.gram(X, p, jitter), p.precision
            ),
            X.shape[1],
            search,
        )
        gm = gp.gram(X, params, jitter)
        per_dim[j] = DimensionGP(
            params=params,
            gram=gm,
            residuals=residuals,
            alpha=gp.solve(gm, residuals),
        )
    return TransitionModel(
        schema=cohort.schema,
        predictor=predictor,
        train_inputs=X,
        per_dim=per_dim,
        jitter=jitter,
        constant_dims=cohort.schema.constant_indices,
    )


def _check_guard(values, label):
    lo, hi = INPUT_GUARD
    values = np.asarray(values, dtype=float)
    if np.any(values < lo) or np.any(values > hi):
        raise DoseguideError(
            f"{label} outside [{lo}, {hi}]; inputs must be scaled to the unit "
            "interval before prediction"
        )


def predict_next_state_many(model: TransitionModel, s, doses) -> StatePrediction:
    """Predict the next state for one state vector and many scaled doses.

    Returns mean and variance arrays of shape (len(doses), q); constant
    dimensions carry the input value with zero variance.
    """
    s = np.asarray(s, dtype=float)
    doses = np.atleast_1d(np.asarray(doses, dtype=float))
    q = model.schema.q
    if s.shape != (q,):
        raise DoseguideError(f"state vector must have {q} entries")
    active_in = [j for j in range(q) if j not in model.constant_dims]
    _check_guard(s[active_in], "state value")
    _check_guard(doses, "scaled dose")

    B = doses.shape[0]
    queries = np.column_stack([np.tile(s, (B, 1)), doses])
    eta = model.predictor.predict(queries)  # (B, n_active)
    active = list(model.active_dims)

    mean = np.tile(s, (B, 1)).astype(float)
    variance = np.zeros((B, q))
    for k, j in enumerate(active):
        dim = model.per_dim[j]
        kvec = gp.se_cross(queries, model.train_inputs, dim.params.rates)  # (B, m)
        mean[:, j] = eta[:, k] + kvec @ dim.alpha
        explained = np.einsum("bm,mb->b", kvec, gp.solve(dim.gram, kvec.T))
        variance[:, j] = np.maximum(0.0, 1.0 - explained) / dim.params.precision
    return StatePrediction(mean=mean, variance=variance)


def predict_next_state(model: TransitionModel, s, dose_scaled) -> StatePrediction:
    """Predict the final-stage state for one scaled (state, dose) query."""
    batch = predict_next_state_many(model, s, [float(dose_scaled)])
    return StatePrediction(mean=batch.mean[0], variance=batch.variance[0])


# ---------------------------------------------------------------------------
# Cross-validation metrics


def cv_predictions(cohort: ScaledCohort, config: PredictorConfig,
                   search: gp.GridSpec, folds, jitter=gp.DEFAULT_JITTER,
                   external_text=None):
    """Held-out point and calibrated predictions pooled over all folds.

    Returns (dnn, gp_mean, truth) arrays of shape (transitions, active dims),
    stacked over the week-2 and week-4 targets in fold order.
    """
    schema = cohort.schema
    active = list(schema.active_indices)
    all_idx = np.arange(cohort.n)
    dnn_rows, gp_rows, truth_rows = [], [], []
    for fold in folds:
        fold = np.asarray(fold)
        train_idx = np.setdiff1d(all_idx, fold)
        predictor = fit_point_predictor(
            cohort, config, patient_index=train_idx, external_text=external_text
        )
        model = fit_transition(
            cohort, predictor, search, jitter, patient_index=train_idx
        )
        X_test, Y_test = _pooled_transitions(cohort, fold)
        eta = predictor.predict(X_test)
        for row in range(X_test.shape[0]):
            pred = predict_next_state_many(
                model, X_test[row, :-1], [X_test[row, -1]]
            )
            dnn_rows.append(eta[row])
            gp_rows.append(pred.mean[0, active])
            truth_rows.append(Y_test[row, active])
    return np.array(dnn_rows), np.array(gp_rows), np.array(truth_rows)


def cv_mse(cohort: ScaledCohort, config: PredictorConfig, search: gp.GridSpec,
           folds, jitter=gp.DEFAULT_JITTER, external_text=None):
    """Held-out MSE of the point predictor alone and of the calibrated mean.

    Errors are pooled over the week-2 and week-4 targets (both training
    transitions).  Returns a list of rows, one per non-constant variable:
    {"variable", "dnn_mse", "gp_mse"}.
    """
    schema = cohort.schema
    active = list(schema.active_indices)
    dnn, gp_mean, truth = cv_predictions(
        cohort, config, search, folds, jitter, external_text
    )
    rows = []
    for k, j in enumerate(active):
        rows.append(
            {
                "variable": schema.names[j],
                "dnn_mse": float(np.mean((dnn[:, k] - truth[:, k]) ** 2)),
                "gp_mse": float(np.mean((gp_mean[:, k] - truth[:, k]) ** 2)),
            }
        )
    return rows


def relative_improvement(dnn_preds, gp_means, truths):
    """Two readings of per-dimension relative improvement.

    ``verbatim_ri`` is the published ratio sum||gp - dnn||^2 / sum||dnn -
    truth||^2; ``standard_ri`` is (dnn_mse - gp_mse) / dnn_mse.  Zero
    denominators yield None.
    """
    dnn_preds = np.asarray(dnn_preds, dtype=float)
    gp_means = np.asarray(gp_means, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if not (dnn_preds.shape == gp_means.shape == truths.shape):
        raise DoseguideError("prediction arrays must be aligned")
    out = []
    for j in range(dnn_preds.shape[1]):
        adjust = float(np.sum((gp_means[:, j] - dnn_preds[:, j]) ** 2))
        dnn_err = float(np.sum((dnn_preds[:, j] - truths[:, j]) ** 2))
        gp_err = float(np.sum((gp_means[:, j] - truths[:, j]) ** 2))
        verbatim = adjust / dnn_err if dnn_err > 0 else None
        standard = (dnn_err - gp_err) / dnn_err if dnn_err > 0 else None
        out.append({"verbatim_ri": verbatim, "standard_ri": standard})
    return out
