"""Versioned single-file artifacts for trained pipelines.

The container is canonical JSON (sorted keys, shortest round-trip float
encoding) with a SHA-256 content digest, so serialization is deterministic
and restored models reproduce predictions bit-identically.  No binary
sidecars: the artifact stays human-auditable.
"""

import hashlib
import json

import numpy as np

from . import decision, evaluation, gp, transition
from .cohort import VariableScaling, VariableSchema
from .errors import (
    ArtifactDigestError,
    ArtifactTruncatedError,
    ArtifactVersionError,
)
from .pipeline import FORMAT_VERSION, RunConfig, TrainedPipeline


def _canonical(payload) -> bytes:
    return json.dumps(
        payload, sort_keys=True, separators=(",", ":"), allow_nan=False
    ).encode("utf-8")


def _digest(payload) -> str:
    return hashlib.sha256(_canonical(payload)).hexdigest()


def _params_dict(params: gp.SEKernelParams):
    return {"rates": params.rates.tolist(), "precision": float(params.precision)}


def _params_from(d):
    return gp.SEKernelParams(np.array(d["rates"], dtype=float), d["precision"])


def _transition_payload(model: transition.TransitionModel):
    return {
        "predictor": model.predictor.payload(),
        "train_inputs": model.train_inputs.tolist(),
        "jitter": model.jitter,
        "per_dim": {
            str(j): {
                "params": _params_dict(dim.params),
                "residuals": dim.residuals.tolist(),
            }
            for j, dim in model.per_dim.items()
        },
    }


def _transition_from(payload, schema):
    train_inputs = np.array(payload["train_inputs"], dtype=float)
    jitter = float(payload["jitter"])
    per_dim = {}
    for key, entry in payload["per_dim"].items():
        params = _params_from(entry["params"])
        residuals = np.array(entry["residuals"], dtype=float)
        gm = gp.gram(train_inputs, params, jitter)
        per_dim[int(key)] = transition.DimensionGP(
            params=params,
            gram=gm,
            residuals=residuals,
            alpha=gp.solve(gm, residuals),
        )
    return transition.TransitionModel(
        schema=schema,
        predictor=transition.restore_predictor(payload["predictor"]),
        train_inputs=train_inputs,
        per_dim=per_dim,
        jitter=jitter,
        constant_dims=schema.constant_indices,
    )


def _evaluation_payload(model: evaluation.EvaluationModel):
    out = {"training_inputs": model.training_inputs.tolist(), "classifiers": {}}
    for outcome, clf in model.classifiers.items():
        out["classifiers"][outcome] = {
            "params": _params_dict(clf.params),
            "labels": clf.labels.tolist(),
            "latent_mode": clf.fit.latent_mode.tolist(),
            "objective_value": clf.fit.objective_value,
            "iterations": clf.fit.iterations,
            "jitter": clf.jitter,
        }
    return out


def _evaluation_from(payload):
    inputs = np.array(payload["training_inputs"], dtype=float)
    classifiers = {}
    for outcome, entry in payload["classifiers"].items():
        params = _params_from(entry["params"])
        labels = np.array(entry["labels"], dtype=float)
        latent = np.array(entry["latent_mode"], dtype=float)
        jitter = float(entry["jitter"])
        gm = gp.gram(inputs, params, jitter)
        prob = 1.0 / (1.0 + np.exp(-latent))
        curvature = prob * (1.0 - prob)
        k_inv = gp.gram_inverse(gm)
        fit = evaluation.LaplaceFit(
            latent_mode=latent,
            hessian_diag=curvature,
            precision_matrix=params.precision * 0.5 * (k_inv + k_inv.T)
            + np.diag(curvature),
            objective_value=float(entry["objective_value"]),
            objective_trajectory=(float(entry["objective_value"]),),
            iterations=int(entry["iterations"]),
        )
        classifiers[outcome] = evaluation.OutcomeClassifier(
            outcome=outcome,
            params=params,
            gram=gm,
            training_inputs=inputs,
            labels=labels,
            fit=fit,
            alpha=gp.solve(gm, latent),
            jitter=jitter,
        )
    return evaluation.EvaluationModel(classifiers=classifiers, training_inputs=inputs)


def _compensation_payload(model):
    if model is None:
        return None
    return {
        "variable_names": list(model.variable_names),
        "variable_indices": list(model.variable_indices),
        "params": _params_dict(model.params),
        "train_inputs": model.train_inputs.tolist(),
        "train_deltas": model.train_deltas.tolist(),
        "mean_shift": model.mean_shift,
        "jitter": model.jitter,
    }


def _compensation_from(payload):
    if payload is None:
        return None
    params = _params_from(payload["params"])
    X = np.array(payload["train_inputs"], dtype=float)
    deltas = np.array(payload["train_deltas"], dtype=float)
    shift = float(payload["mean_shift"])
    jitter = float(payload["jitter"])
    gm = gp.gram(X, params, jitter)
    return decision.CompensationModel(
        variable_names=tuple(payload["variable_names"]),
        variable_indices=tuple(int(i) for i in payload["variable_indices"]),
        params=params,
        gram=gm,
        train_inputs=X,
        train_deltas=deltas,
        mean_shift=shift,
        alpha=gp.solve(gm, deltas - shift),
        jitter=jitter,
    )


def build_payload(pipeline: TrainedPipeline) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "schema": pipeline.schema.to_dict(),
        "scaling": [s.to_dict() for s in pipeline.scaling],
        "transition": _transition_payload(pipeline.transition_model),
        "evaluation": _evaluation_payload(pipeline.evaluation_model),
        "compensation": _compensation_payload(pipeline.compensation_model),
        "config": pipeline.config.to_dict(),
    }


def serialize(pipeline: TrainedPipeline) -> bytes:
    """Deterministic byte encoding with an embedded content digest."""
    payload = build_payload(pipeline)
    payload["digest"] = _digest(payload)
    return _canonical(payload)


def digest_of(pipeline: TrainedPipeline) -> str:
    return _digest(build_payload(pipeline))


def restore(data: bytes) -> TrainedPipeline:
    """Rebuild a pipeline, verifying format version and content digest."""
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactTruncatedError(f"artifact not parseable: {exc}") from None
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ArtifactTruncatedError("artifact missing format_version")
    version = payload["format_version"]
    if version != FORMAT_VERSION:
        raise ArtifactVersionError(found=version, supported=FORMAT_VERSION)
    stated = payload.pop("digest", None)
    if stated is None:
        raise ArtifactTruncatedError("artifact missing digest")
    computed = _digest(payload)
    if stated != computed:
        raise ArtifactDigestError(stated=stated, computed=computed)

    schema = VariableSchema.from_dict(payload["schema"])
    scaling = tuple(VariableScaling.from_dict(s) for s in payload["scaling"])
    return TrainedPipeline(
        schema=schema,
        scaling=scaling,
        transition_model=_transition_from(payload["transition"], schema),
        evaluation_model=_evaluation_from(payload["evaluation"]),
        compensation_model=_compensation_from(payload["compensation"]),
        config=RunConfig.from_dict(payload["config"]),
    )


def save(pipeline: TrainedPipeline, path):
    data = serialize(pipeline)
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def load(path) -> TrainedPipeline:
    with open(path, "rb") as fh:
        return restore(fh.read())
