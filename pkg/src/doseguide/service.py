"""HTTP JSON facade over the pipeline.

Cohort upload, asynchronous training, what-if dose sweeps, decision
verdicts, and compensation maps.  All request and response payloads use
original clinical units; scaling stays internal.  Inference endpoints are
reproducible: the same request, seed, and model digest produce the same
response body.  No authentication: this is a research tool, run it only
on trusted networks.
"""

import hashlib
import os
import threading
import traceback
from pathlib import Path

from fastapi import FastAPI, File, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import __version__, store
from .cohort import load_cohort_text, scale_unit_interval
from .errors import (
    CohortValidationError,
    DoseguideError,
    InsufficientDataError,
)
from .pipeline import (
    RunConfig,
    TrainedPipeline,
    adjudicate_cohort,
    fit_cohort_compensation,
    train_pipeline,
)

ENV_ARTIFACT_DIR = "DOSEGUIDE_ARTIFACT_DIR"
ENV_DEFAULT_SEED = "DOSEGUIDE_SEED"


class TrainRequest(BaseModel):
    cohort_id: str
    config: dict = {}


class WhatIfBody(BaseModel):
    state: dict
    doses: list[float] | None = None
    dose_grid: dict | None = None
    seed: int | None = None
    n_samples: int | None = None


class DecideBody(BaseModel):
    state: dict
    physician_dose: float
    seed: int | None = None
    n_samples: int | None = None


class _Registry:
    """In-memory cohort and model registries with an artifact directory."""

    def __init__(self, artifact_dir, default_seed):
        self.artifact_dir = Path(artifact_dir)
        self.artifact_dir.mkdir(parents=True, exist_ok=True)
        self.default_seed = default_seed
        self.lock = threading.Lock()
        self.cohorts = {}  # cohort_id -> {"states": str, "outcomes": str, "n": int}
        self.models = {}  # model_id -> {"status", "pipeline", "metrics", ...}
        self.training_cohorts = set()
        self._load_existing()

    def _load_existing(self):
        for path in sorted(self.artifact_dir.glob("*.json")):
            try:
                pipe = store.load(path)
            except DoseguideError:
                continue
            self.models[path.stem] = {
                "status": "done",
                "pipeline": pipe,
                "metrics": None,
                "digest": store.digest_of(pipe),
                "error": None,
                "cohort_id": None,
            }


def _verdict_json(verdict):
    def outcome_json(moments):
        sd = moments.prob_variance ** 0.5
        return {
            "logit_mean": moments.logit_mean,
            "logit_variance": moments.logit_variance,
            "prob_mean": moments.prob_mean,
            "prob_variance": moments.prob_variance,
            "prob_lo": max(0.0, moments.prob_mean - 2.0 * sd),
            "prob_hi": min(1.0, moments.prob_mean + 2.0 * sd),
        }

    return {
        "ai_dose_gy": verdict.ai_dose_gy,
        "physician_dose_gy": verdict.physician_dose_gy,
        "p_value": verdict.p_value,
        "chosen": verdict.chosen,
        "reliability_flag": verdict.reliability_flag,
        "sample_count": verdict.sample_count,
        "seed": verdict.seed,
        "ai_reward": verdict.ai_reward.to_dict(),
        "physician_reward": verdict.physician_reward.to_dict(),
        "ai_outcomes": {
            "lc": outcome_json(verdict.ai_outcomes.lc),
            "rp2": outcome_json(verdict.ai_outcomes.rp2),
        },
        "physician_outcomes": {
            "lc": outcome_json(verdict.physician_outcomes.lc),
            "rp2": outcome_json(verdict.physician_outcomes.rp2),
        },
    }


def create_app(artifact_dir=None, default_seed=None) -> FastAPI:
    artifact_dir = artifact_dir or os.environ.get(ENV_ARTIFACT_DIR, "artifacts")
    if default_seed is None:
        default_seed = int(os.environ.get(ENV_DEFAULT_SEED, "0"))
    registry = _Registry(artifact_dir, default_seed)
    app = FastAPI(title="doseguide", version=__version__)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.registry = registry

    def get_model(model_id, require_done=True):
        entry = registry.models.get(model_id)
        if entry is None:
            raise HTTPException(404, f"unknown model {model_id!r}")
        if require_done and entry["status"] != "done":
            raise HTTPException(409, f"model {model_id!r} is {entry['status']}")
        return entry

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/cohorts")
    async def upload_cohort(states: UploadFile = File(...),
                            outcomes: UploadFile = File(...)):
        states_text = (await states.read()).decode("utf-8")
        outcomes_text = (await outcomes.read()).decode("utf-8")
        try:
            records = load_cohort_text(states_text, outcomes_text)
        except CohortValidationError as exc:
            raise HTTPException(400, {
                "message": str(exc),
                "row": exc.row,
                "column": exc.column,
                "patient_id": exc.patient_id,
            })
        cohort_id = hashlib.sha256(
            (states_text + "\x00" + outcomes_text).encode("utf-8")
        ).hexdigest()[:12]
        with registry.lock:
            registry.cohorts[cohort_id] = {
                "states": states_text,
                "outcomes": outcomes_text,
                "n": len(records),
            }
        return {
            "cohort_id": cohort_id,
            "n": len(records),
            "validation": {
                "patients": len(records),
                "stage_rows": 3 * len(records),
                "status": "accepted",
            },
        }

    def run_training(model_id, cohort_id, config):
        entry = registry.models[model_id]
        try:
            raw = registry.cohorts[cohort_id]
            records = load_cohort_text(raw["states"], raw["outcomes"],
                                       config.schema)
            scaled = scale_unit_interval(records, config.schema)
            pipe, metrics = train_pipeline(scaled, config)
            verdicts = adjudicate_cohort(pipe, scaled, seed=config.seed)
            try:
                pipe = fit_cohort_compensation(pipe, scaled, verdicts)
            except InsufficientDataError:
                pass
            store.save(pipe, registry.artifact_dir / f"{model_id}.json")
            with registry.lock:
                entry.update(
                    status="done",
                    pipeline=pipe,
                    metrics=metrics,
                    digest=store.digest_of(pipe),
                )
        except Exception as exc:  # surfaced through the status endpoint
            with registry.lock:
                entry.update(
                    status="failed",
                    error=f"{type(exc).__name__}: {exc}",
                    trace=traceback.format_exc(),
                )
        finally:
            with registry.lock:
                registry.training_cohorts.discard(cohort_id)

    @app.post("/models/train")
    def train(request: TrainRequest):
        if request.cohort_id not in registry.cohorts:
            raise HTTPException(404, f"unknown cohort {request.cohort_id!r}")
        try:
            config = RunConfig.from_dict(request.config)
        except (KeyError, ValueError, TypeError) as exc:
            raise HTTPException(422, f"bad config: {exc}")
        model_id = hashlib.sha256(
            (request.cohort_id + store._canonical(config.to_dict()).decode())
            .encode("utf-8")
        ).hexdigest()[:12]
        with registry.lock:
            existing = registry.models.get(model_id)
            if existing is not None and existing["status"] in ("done", "running"):
                return {
                    "model_id": model_id,
                    "status": existing["status"],
                    "metrics": existing.get("metrics"),
                    "digest": existing.get("digest"),
                }
            if request.cohort_id in registry.training_cohorts:
                raise HTTPException(
                    409, f"cohort {request.cohort_id!r} already has a "
                    "training job running"
                )
            registry.training_cohorts.add(request.cohort_id)
            registry.models[model_id] = {
                "status": "running",
                "pipeline": None,
                "metrics": None,
                "digest": None,
                "error": None,
                "cohort_id": request.cohort_id,
            }
        thread = threading.Thread(
            target=run_training, args=(model_id, request.cohort_id, config),
            daemon=True,
        )
        thread.start()
        return {"model_id": model_id, "status": "running"}

    @app.get("/models")
    def list_models():
        with registry.lock:
            return [
                {
                    "model_id": mid,
                    "status": entry["status"],
                    "digest": entry["digest"],
                }
                for mid, entry in sorted(registry.models.items())
            ]

    @app.get("/models/{model_id}/status")
    def status(model_id: str):
        entry = get_model(model_id, require_done=False)
        body = {
            "model_id": model_id,
            "status": entry["status"],
            "digest": entry["digest"],
            "metrics": entry["metrics"],
            "error": entry["error"],
        }
        pipe = entry.get("pipeline")
        if pipe is not None:
            lo, hi = pipe.schema.dose_bounds
            body["schema"] = {
                "dose_bounds": [lo, hi],
                "variables": [
                    {
                        "name": s.name,
                        "unit": pipe.schema.units.get(s.name, ""),
                        "min": s.vmin,
                        "max": s.cap,
                        "constant": s.constant,
                    }
                    for s in pipe.scaling
                ],
                "compensation_variables": list(
                    pipe.compensation_model.variable_names
                ) if pipe.compensation_model is not None else None,
            }
        return body

    @app.post("/models/{model_id}/whatif")
    def whatif(model_id: str, body: WhatIfBody):
        entry = get_model(model_id)
        pipe: TrainedPipeline = entry["pipeline"]
        if body.doses is not None:
            doses = body.doses
        elif body.dose_grid is not None:
            g = body.dose_grid
            try:
                from .decision import DoseGrid

                doses = DoseGrid(
                    float(g["min_gy"]), float(g["max_gy"]), float(g["step_gy"])
                ).doses().tolist()
            except (KeyError, ValueError) as exc:
                raise HTTPException(422, f"bad dose grid: {exc}")
        else:
            raise HTTPException(422, "provide doses or dose_grid")
        seed = registry.default_seed if body.seed is None else body.seed
        try:
            results = pipe.whatif(body.state, doses, seed, body.n_samples)
        except DoseguideError as exc:
            raise HTTPException(422, str(exc))
        return {
            "model_id": model_id,
            "model_digest": entry["digest"],
            "seed": seed,
            "units_note": "doses Gy/fraction; probabilities and reward "
            "dimensionless; state inputs in original clinical units",
            "doses_gy": [r["dose_gy"] for r in results],
            "prob_lc": {
                "mean": [r["prob_lc"]["mean"] for r in results],
                "lo": [r["prob_lc"]["lo"] for r in results],
                "hi": [r["prob_lc"]["hi"] for r in results],
            },
            "prob_rp2": {
                "mean": [r["prob_rp2"]["mean"] for r in results],
                "lo": [r["prob_rp2"]["lo"] for r in results],
                "hi": [r["prob_rp2"]["hi"] for r in results],
            },
            "reward": {
                "mean": [r["reward"]["mean"] for r in results],
                "lo": [r["reward"]["lo"] for r in results],
                "hi": [r["reward"]["hi"] for r in results],
            },
            "logit_variance": {
                "lc": [r["logit_variance"]["lc"] for r in results],
                "rp2": [r["logit_variance"]["rp2"] for r in results],
            },
        }

    @app.post("/models/{model_id}/decide")
    def decide(model_id: str, body: DecideBody):
        entry = get_model(model_id)
        pipe: TrainedPipeline = entry["pipeline"]
        seed = registry.default_seed if body.seed is None else body.seed
        try:
            verdict = pipe.decide(body.state, body.physician_dose, seed,
                                  body.n_samples)
        except DoseguideError as exc:
            raise HTTPException(422, str(exc))
        payload = _verdict_json(verdict)
        payload["model_id"] = model_id
        payload["model_digest"] = entry["digest"]
        return payload

    @app.get("/models/{model_id}/compensation-map")
    def compensation(model_id: str, var1: str = None, var2: str = None,
                     resolution: int = 20):
        entry = get_model(model_id)
        pipe: TrainedPipeline = entry["pipeline"]
        try:
            lattice = pipe.compensation_map(resolution, var1, var2)
        except InsufficientDataError as exc:
            raise HTTPException(409, str(exc))
        except DoseguideError as exc:
            raise HTTPException(422, str(exc))
        lattice["model_id"] = model_id
        lattice["model_digest"] = entry["digest"]
        return lattice

    return app


def main(host="127.0.0.1", port=8000, artifact_dir=None, default_seed=None):
    import uvicorn

    uvicorn.run(create_app(artifact_dir, default_seed), host=host, port=port)


if __name__ == "__main__":
    main(host=os.environ.get("DOSEGUIDE_BIND", "127.0.0.1"))
