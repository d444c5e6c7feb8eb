"""End-to-end training and inference orchestration.

Bundles the preprocessing metadata with the calibrated transition model,
the outcome classifiers, and (after adjudication) the dose-compensation
GP, and exposes the inference entry points the CLI and HTTP service share:
what-if dose sweeps, physician-vs-optimizer verdicts, and compensation
lattices.  All public inputs and outputs are in original clinical units;
scaling is internal.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import decision, evaluation, gp, propagation, transition
from .cohort import STAGE_COUNT, ScaledCohort, VariableSchema
from .errors import DoseguideError, InsufficientDataError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """Fully deterministic specification of a training / decision run."""

    seed: int = 0
    folds: int = 5
    mc_samples: int = 1000
    jitter: float = gp.DEFAULT_JITTER
    predictor: transition.PredictorConfig = transition.PredictorConfig()
    transition_grid: gp.GridSpec = gp.GridSpec()
    evaluation_grid: gp.GridSpec = gp.GridSpec()
    compensation_grid: gp.GridSpec = gp.GridSpec()
    dose_grid: decision.DoseGrid = decision.DoseGrid()
    reliability_width: float = decision.RELIABILITY_WIDTH
    compensation_variables: tuple = decision.DEFAULT_COMPENSATION_VARS
    compensation_jitter: float = decision.COMPENSATION_JITTER
    schema: VariableSchema = VariableSchema()

    def to_dict(self):
        return {
            "seed": self.seed,
            "folds": self.folds,
            "mc_samples": self.mc_samples,
            "jitter": self.jitter,
            "predictor": self.predictor.to_dict(),
            "transition_grid": self.transition_grid.to_dict(),
            "evaluation_grid": self.evaluation_grid.to_dict(),
            "compensation_grid": self.compensation_grid.to_dict(),
            "dose_grid": self.dose_grid.to_dict(),
            "reliability_width": self.reliability_width,
            "compensation_variables": list(self.compensation_variables),
            "compensation_jitter": self.compensation_jitter,
            "schema": self.schema.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        base = cls()
        return cls(
            seed=int(d.get("seed", base.seed)),
            folds=int(d.get("folds", base.folds)),
            mc_samples=int(d.get("mc_samples", base.mc_samples)),
            jitter=float(d.get("jitter", base.jitter)),
            predictor=transition.PredictorConfig.from_dict(d["predictor"])
            if "predictor" in d
            else base.predictor,
            transition_grid=gp.GridSpec.from_dict(d["transition_grid"])
            if "transition_grid" in d
            else base.transition_grid,
            evaluation_grid=gp.GridSpec.from_dict(d["evaluation_grid"])
            if "evaluation_grid" in d
            else base.evaluation_grid,
            compensation_grid=gp.GridSpec.from_dict(d["compensation_grid"])
            if "compensation_grid" in d
            else base.compensation_grid,
            dose_grid=decision.DoseGrid.from_dict(d["dose_grid"])
            if "dose_grid" in d
            else base.dose_grid,
            reliability_width=float(
                d.get("reliability_width", base.reliability_width)
            ),
            compensation_variables=tuple(
                d.get("compensation_variables", base.compensation_variables)
            ),
            compensation_jitter=float(
                d.get("compensation_jitter", base.compensation_jitter)
            ),
            schema=VariableSchema.from_dict(d["schema"])
            if "schema" in d
            else base.schema,
        )


def predicted_final_states(model: transition.TransitionModel,
                           cohort: ScaledCohort, calibrated=True):
    """Per-patient predicted mean (and variance) of the post-treatment state.

    With ``calibrated`` false only the point predictor contributes (the
    uncalibrated pipeline); constant dimensions pass through either way.
    """
    t = STAGE_COUNT - 1
    n = cohort.n
    q = cohort.schema.q
    means = np.zeros((n, q))
    variances = np.zeros((n, q))
    active = list(cohort.schema.active_indices)
    for i in range(n):
        s = cohort.states[t, i]
        a = cohort.doses_scaled[t, i]
        if calibrated:
            pred = transition.predict_next_state(model, s, a)
            means[i] = pred.mean
            variances[i] = pred.variance
        else:
            eta = model.predictor.predict(
                np.concatenate([s, [a]])[None, :]
            )[0]
            means[i] = s
            means[i, active] = eta
    return means, variances


@dataclass(frozen=True)
class TrainedPipeline:
    """A complete trained model bundle plus its preprocessing metadata."""

    schema: VariableSchema
    scaling: tuple
    transition_model: transition.TransitionModel
    evaluation_model: evaluation.EvaluationModel
    compensation_model: object  # decision.CompensationModel | None
    config: RunConfig

    def scaling_for(self, name):
        for s in self.scaling:
            if s.name == name:
                return s
        raise DoseguideError(f"unknown variable {name!r}")

    def scale_state(self, raw):
        """Scale a raw state given as a dict of all 12 named values."""
        if isinstance(raw, dict):
            missing = [v for v in self.schema.names if v not in raw]
            if missing:
                raise DoseguideError(f"missing state variables: {missing}")
            unknown = [k for k in raw if k not in self.schema.names]
            if unknown:
                raise DoseguideError(f"unknown state variables: {unknown}")
            raw = np.array([float(raw[v]) for v in self.schema.names])
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (self.schema.q,):
            raise DoseguideError(
                f"state must have {self.schema.q} values, got {raw.shape}"
            )
        return np.array([s.scale(v) for s, v in zip(self.scaling, raw)])

    def check_doses(self, doses_gy):
        lo, hi = self.schema.dose_bounds
        doses_gy = np.atleast_1d(np.asarray(doses_gy, dtype=float))
        bad = doses_gy[(doses_gy < lo) | (doses_gy > hi)]
        if bad.size:
            raise DoseguideError(
                f"dose {bad[0]} Gy/frac outside model bounds [{lo}, {hi}]"
            )
        return doses_gy

    def whatif(self, state_raw, doses_gy, seed, n_samples=None):
        """Outcome probabilities and reward distribution per candidate dose."""
        n_samples = n_samples or self.config.mc_samples
        doses_gy = self.check_doses(doses_gy)
        s = self.scale_state(state_raw)
        curve = decision.dose_response_curve(
            self.transition_model,
            self.evaluation_model,
            s,
            doses_gy,
            self.schema.dose_bounds,
        )
        results = []
        for i, pt in enumerate(curve):
            rewards = propagation.sample_reward(
                pt.outcomes, n_samples, int(seed) + i
            )
            results.append(
                {
                    "dose_gy": pt.dose_gy,
                    "prob_lc": _prob_band(pt.outcomes.lc),
                    "prob_rp2": _prob_band(pt.outcomes.rp2),
                    "logit_variance": {
                        "lc": pt.outcomes.lc.logit_variance,
                        "rp2": pt.outcomes.rp2.logit_variance,
                    },
                    "reward": {
                        "mean": rewards.mean,
                        "lo": rewards.mean - 2.0 * rewards.std,
                        "hi": rewards.mean + 2.0 * rewards.std,
                        "std": rewards.std,
                    },
                }
            )
        return results

    def decide(self, state_raw, physician_dose_gy, seed, n_samples=None):
        """Adjudicate one physician prescription against the optimized dose."""
        n_samples = n_samples or self.config.mc_samples
        self.check_doses([physician_dose_gy])
        s = self.scale_state(state_raw)
        return self.decide_scaled(s, physician_dose_gy, seed, n_samples)

    def decide_scaled(self, s_scaled, physician_dose_gy, seed, n_samples=None):
        n_samples = n_samples or self.config.mc_samples
        return decision.compare_prescriptions(
            self.transition_model,
            self.evaluation_model,
            s_scaled,
            physician_dose_gy,
            self.config.dose_grid,
            n_samples,
            seed,
            self.schema.dose_bounds,
            self.config.reliability_width,
        )

    def compensation_map(self, resolution, var1=None, var2=None):
        model = self.compensation_model
        if model is None:
            raise InsufficientDataError(
                "insufficient AI-superior cases: no compensation model trained"
            )
        names = (var1 or model.variable_names[0], var2 or model.variable_names[1])
        if tuple(names) != tuple(model.variable_names):
            raise DoseguideError(
                f"compensation model was trained on {model.variable_names}, "
                f"not {names}"
            )
        scalings = tuple(self.scaling_for(v) for v in names)
        return decision.compensation_map(model, scalings, resolution)


def _prob_band(moments):
    sd = float(np.sqrt(max(moments.prob_variance, 0.0)))
    return {
        "mean": moments.prob_mean,
        "lo": float(np.clip(moments.prob_mean - 2.0 * sd, 0.0, 1.0)),
        "hi": float(np.clip(moments.prob_mean + 2.0 * sd, 0.0, 1.0)),
    }


def train_pipeline(cohort: ScaledCohort, config: RunConfig,
                   external_text=None, with_metrics=True):
    """Train transition and outcome models; returns (pipeline, metrics)."""
    predictor = transition.fit_point_predictor(
        cohort, config.predictor, external_text=external_text
    )
    trans_model = transition.fit_transition(
        cohort, predictor, config.transition_grid, config.jitter
    )
    final_means, _ = predicted_final_states(trans_model, cohort, calibrated=True)
    eval_model = evaluation.fit_evaluation(
        final_means, cohort.y1, cohort.y2, config.evaluation_grid, config.jitter
    )
    pipeline = TrainedPipeline(
        schema=cohort.schema,
        scaling=cohort.scaling,
        transition_model=trans_model,
        evaluation_model=eval_model,
        compensation_model=None,
        config=config,
    )
    metrics = None
    if with_metrics:
        metrics = compute_metrics(
            pipeline, cohort, external_text=external_text
        )
    return pipeline, metrics


def cross_validated_predictions(cohort: ScaledCohort, config: RunConfig,
                                folds, external_text=None):
    """One fold loop yielding held-out transition and outcome predictions.

    Returns a dict with pooled transition arrays (point, calibrated,
    truth) and per-patient held-out outcome probabilities for both the
    GP pipeline and the uncalibrated point pipeline (logistic baseline
    on uncalibrated state predictions).
    """
    active = list(cohort.schema.active_indices)
    all_idx = np.arange(cohort.n)
    dnn_rows, gp_rows, truth_rows = [], [], []
    gp_probs = {o: np.zeros(cohort.n) for o in evaluation.OUTCOMES}
    base_probs = {o: np.zeros(cohort.n) for o in evaluation.OUTCOMES}
    for fold in folds:
        fold = np.asarray(fold)
        train_idx = np.setdiff1d(all_idx, fold)
        predictor = transition.fit_point_predictor(
            cohort, config.predictor, patient_index=train_idx,
            external_text=external_text,
        )
        model = transition.fit_transition(
            cohort, predictor, config.transition_grid, config.jitter,
            patient_index=train_idx,
        )
        X_test, Y_test = transition._pooled_transitions(cohort, fold)
        eta_test = predictor.predict(X_test)
        for row in range(X_test.shape[0]):
            pred = transition.predict_next_state_many(
                model, X_test[row, :-1], [X_test[row, -1]]
            )
            dnn_rows.append(eta_test[row])
            gp_rows.append(pred.mean[0, active])
            truth_rows.append(Y_test[row, active])

        finals, _ = predicted_final_states(model, cohort, calibrated=True)
        etas, _ = predicted_final_states(model, cohort, calibrated=False)
        eval_model = evaluation.fit_evaluation(
            finals[train_idx], cohort.y1[train_idx], cohort.y2[train_idx],
            config.evaluation_grid, config.jitter,
        )
        for outcome, labels in (("lc", cohort.y1), ("rp2", cohort.y2)):
            mean, _ = evaluation.predict_logit(eval_model[outcome],
                                               finals[fold])
            gp_probs[outcome][fold] = 1.0 / (1.0 + np.exp(-mean))
            baseline = evaluation.LogisticBaseline().fit(
                etas[train_idx], labels[train_idx]
            )
            base_probs[outcome][fold] = baseline.predict_proba(etas[fold])
    return {
        "dnn": np.array(dnn_rows),
        "gp_mean": np.array(gp_rows),
        "truth": np.array(truth_rows),
        "gp_probs": gp_probs,
        "baseline_probs": base_probs,
    }


def compute_metrics(pipeline: TrainedPipeline, cohort: ScaledCohort,
                    external_text=None, include_cv=True):
    """Cross-validated transition MSEs plus outcome cross-entropies.

    The cross-entropy block carries the in-sample pair (the published
    comparison style) and, when cross-validation runs, the held-out pair
    under the keys ``gp_cv`` / ``baseline_cv``.
    """
    from .cohort import split_folds

    config = pipeline.config
    cv_rows = []
    cv_entropy = None
    if include_cv:
        folds = split_folds(cohort, config.folds, config.seed)
        cv = cross_validated_predictions(cohort, config, folds, external_text)
        dnn, gp_means, truths = cv["dnn"], cv["gp_mean"], cv["truth"]
        active = list(cohort.schema.active_indices)
        ri = transition.relative_improvement(dnn, gp_means, truths)
        for k, j in enumerate(active):
            cv_rows.append(
                {
                    "variable": cohort.schema.names[j],
                    "dnn_mse": float(np.mean((dnn[:, k] - truths[:, k]) ** 2)),
                    "gp_mse": float(
                        np.mean((gp_means[:, k] - truths[:, k]) ** 2)
                    ),
                    "verbatim_ri": ri[k]["verbatim_ri"],
                    "standard_ri": ri[k]["standard_ri"],
                }
            )
        cv_entropy = {}
        for outcome, labels in (("lc", cohort.y1), ("rp2", cohort.y2)):
            cv_entropy[outcome] = {
                "gp_cv": evaluation.cross_entropy(cv["gp_probs"][outcome],
                                                  labels),
                "baseline_cv": evaluation.cross_entropy(
                    cv["baseline_probs"][outcome], labels
                ),
            }

    final_means, _ = predicted_final_states(
        pipeline.transition_model, cohort, calibrated=True
    )
    eta_means, _ = predicted_final_states(
        pipeline.transition_model, cohort, calibrated=False
    )
    entropy = {}
    for outcome, labels in (("lc", cohort.y1), ("rp2", cohort.y2)):
        clf = pipeline.evaluation_model[outcome]
        logit_mean, _ = evaluation.predict_logit(clf, final_means)
        gp_probs = 1.0 / (1.0 + np.exp(-logit_mean))
        baseline = evaluation.LogisticBaseline().fit(eta_means, labels)
        diag = evaluation.diagnostics(
            gp_probs, baseline.predict_proba(eta_means), labels
        )
        entropy[outcome] = {
            "gp": diag.cross_entropy,
            "baseline": diag.baseline_cross_entropy,
        }
        if cv_entropy is not None:
            entropy[outcome].update(cv_entropy[outcome])

    hyper = {
        "transition": {
            cohort.schema.names[j]: {
                "rates": dim.params.rates.tolist(),
                "precision": dim.params.precision,
            }
            for j, dim in pipeline.transition_model.per_dim.items()
        },
        "evaluation": {
            outcome: {
                "rates": pipeline.evaluation_model[outcome].params.rates.tolist(),
                "precision": pipeline.evaluation_model[outcome].params.precision,
            }
            for outcome in evaluation.OUTCOMES
        },
    }
    return {"cv_mse": cv_rows, "cross_entropy": entropy, "hyperparameters": hyper}


def adjudicate_cohort(pipeline: TrainedPipeline, cohort: ScaledCohort,
                      seed=None, n_samples=None, patient_index=None,
                      physician_doses=None):
    """Verdicts for every (selected) patient.

    The physician dose defaults to each patient's observed final-stage
    prescription (retrospective review); pass ``physician_doses`` to
    adjudicate an alternative policy.  Per-patient seeds are derived as
    base_seed XOR patient position, so patients are independent and the
    batch is reproducible.
    """
    seed = pipeline.config.seed if seed is None else seed
    n_samples = n_samples or pipeline.config.mc_samples
    idx = np.arange(cohort.n) if patient_index is None else np.asarray(patient_index)
    t = STAGE_COUNT - 1
    verdicts = []
    for pos, i in enumerate(idx):
        dose = (
            float(cohort.doses_gy[t, i])
            if physician_doses is None
            else float(physician_doses[pos])
        )
        verdict = pipeline.decide_scaled(
            cohort.states[t, i], dose, int(seed) ^ int(i), n_samples
        )
        verdicts.append((cohort.patient_ids[i], int(i), verdict))
    return verdicts


def fit_cohort_compensation(pipeline: TrainedPipeline, cohort: ScaledCohort,
                            verdicts):
    """Fit the compensation GP from adjudicated verdicts; None if too few."""
    t = STAGE_COUNT - 1
    states = np.stack([cohort.states[t, i] for _, i, _ in verdicts])
    ai = np.array([v.ai_dose_gy for _, _, v in verdicts])
    phys = np.array([v.physician_dose_gy for _, _, v in verdicts])
    p = np.array([v.p_value for _, _, v in verdicts])
    model = decision.fit_compensation(
        states,
        ai,
        phys,
        p,
        pipeline.schema,
        variable_names=pipeline.config.compensation_variables,
        search=pipeline.config.compensation_grid,
        jitter=pipeline.config.compensation_jitter,
    )
    return replace(pipeline, compensation_model=model)
