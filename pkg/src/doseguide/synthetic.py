"""Seeded synthetic cohorts with known ground truth.

Two benchmark families:

* calibration cohort - the transition truth is a linear map plus a smooth
  per-dimension sinusoidal bias, so an ordinary-least-squares point
  predictor captures exactly the linear part and the GP calibration is
  graded on the remainder.
* decision cohort - outcomes trade tumor control against pneumonitis
  through two dose-sensitive state dimensions, giving every patient a
  known interior optimal dose; the synthetic "physician" systematically
  prescribes below it.

Stage doses are drawn across the full bounds (unlike the clinical
protocol's fixed early doses) so the dose response is identifiable from
the generated transitions.  States are emitted in plausible original
units; truth functions live in the generator's own unit-interval
parameterization, which the pipeline's preprocessing reproduces up to a
per-variable affine map.
"""

from dataclasses import dataclass

import numpy as np

from .cohort import (
    DEFAULT_VARIABLES,
    PatientRecord,
    VariableSchema,
)

# original-unit ranges used to emit clinically plausible numbers
ORIGINAL_RANGES = {
    "il4": (0.0, 18.0),
    "il10": (0.0, 40.0),
    "il5": (0.0, 12.0),
    "ip10": (20.0, 600.0),
    "mtv": (1.0, 250.0),
    "GLSZM_LZLGE": (0.0, 5000.0),
    "GLSZM_ZSV": (0.0, 1.2),
    "Tumor_gEUD": (40.0, 90.0),
    "Lung_gEUD": (2.0, 30.0),
}

ACTIVE = tuple(range(9))
TUMOR = 7  # Tumor_gEUD index
LUNG = 8  # Lung_gEUD index

CALIBRATION = {
    "intercept": 0.25,
    "self": 0.35,
    "mix": 0.10,
    "dose": 0.08,
    "bias_amp": 0.12,
    "lc_logit": (1.0, 3.0),  # slope on (f0 + f1 - 1), sinus amp on f2
    "rp2_logit": (1.0, 3.0),  # slope on (f7 + f8 - 1), sinus amp on f3
}

DECISION = {
    "tumor": (0.12, 0.50, 0.33),  # intercept, self, dose
    "lung": (0.10, 0.45, 0.38),
    "other": (0.28, 0.40, 0.05),
    "lc_logit": (20.0, -9.8),  # slope on tumor final, offset
    "rp2_logit": (9.0, -5.8),  # slope on lung final, offset
    "physician_gap_gy": 0.5,
}


def study_schema():
    """Schema for synthetic studies: no truncation so truth maps survive."""
    return VariableSchema(truncation_quantile=1.0)


def study_run_config(kind, seed):
    """Run configuration (as a config dict) for the benchmark studies.

    Both studies use anisotropic rate search (the relevant inputs are a
    few coordinates out of thirteen) and a classifier grid bounded to
    smooth regimes; the decision study additionally fits the dose
    compensation with a noise nugget appropriate for grid-quantized
    adjudications.
    """
    base = {
        "seed": int(seed),
        "predictor": {
            "kind": "builtin-mlp",
            "hidden": 32,
            "epochs": 2000,
            "learning_rate": 0.2,
            "momentum": 0.9,
            "seed": int(seed),
            "path": None,
        },
        "transition_grid": {
            "rate_grid": list(np.logspace(-2, 2, 7)),
            "precision_grid": list(np.logspace(-1, 2, 7)),
            "anisotropic": True,
            "refine": True,
            "refine_points": 5,
        },
        "evaluation_grid": {
            "rate_grid": list(np.logspace(-2, 2.0 / 3.0, 6)),
            "precision_grid": list(np.logspace(-0.5, 1.5, 5)),
            "anisotropic": True,
            "refine": True,
            "refine_points": 5,
        },
        "schema": study_schema().to_dict(),
    }
    if kind == "calibration":
        base["predictor"] = {
            "kind": "external",
            "hidden": 32,
            "epochs": 2000,
            "learning_rate": 0.2,
            "momentum": 0.9,
            "seed": int(seed),
            "path": "linear_predictions.csv",
        }
    elif kind == "decision":
        base["compensation_jitter"] = 0.05
    else:
        raise ValueError(f"unknown study kind {kind!r}")
    return base


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _dose_unit(dose_gy, bounds):
    lo, hi = bounds
    return (np.asarray(dose_gy, dtype=float) - lo) / (hi - lo)


def _to_original(scaled_states):
    """Map generator-space actives onto original units (SNPs untouched)."""
    out = scaled_states.copy()
    for j, name in enumerate(DEFAULT_VARIABLES[:9]):
        lo, hi = ORIGINAL_RANGES[name]
        out[..., j] = lo + scaled_states[..., j] * (hi - lo)
    return out


# ---------------------------------------------------------------------------
# Calibration study


def calibration_transition(states, dose_unit, phases):
    """Linear map + sinusoidal bias, applied to generator-space states."""
    states = np.asarray(states, dtype=float)
    nxt = states.copy()
    c = CALIBRATION
    for j in ACTIVE:
        partner = (j + 1) % len(ACTIVE)
        nxt[..., j] = (
            c["intercept"]
            + c["self"] * states[..., j]
            + c["mix"] * states[..., partner]
            + c["dose"] * np.asarray(dose_unit)
            + c["bias_amp"] * np.sin(2.0 * np.pi * states[..., j] + phases[j])
        )
    return nxt


def calibration_linear_part(states, dose_unit, phases):
    """The transition with its sinusoidal bias removed (not the OLS fit)."""
    states = np.asarray(states, dtype=float)
    nxt = states.copy()
    c = CALIBRATION
    for j in ACTIVE:
        partner = (j + 1) % len(ACTIVE)
        nxt[..., j] = (
            c["intercept"]
            + c["self"] * states[..., j]
            + c["mix"] * states[..., partner]
            + c["dose"] * np.asarray(dose_unit)
        )
    return nxt


def _calibration_outcome_logits(final_states):
    c = CALIBRATION
    s_lc, a_lc = c["lc_logit"]
    s_rp, a_rp = c["rp2_logit"]
    logit1 = s_lc * (final_states[..., 0] + final_states[..., 1] - 1.0) + (
        a_lc * np.sin(4.0 * np.pi * final_states[..., 2])
    )
    logit2 = s_rp * (final_states[..., TUMOR] + final_states[..., LUNG] - 1.0) - (
        a_rp * np.sin(4.0 * np.pi * final_states[..., 3])
    )
    return logit1, logit2


@dataclass(frozen=True)
class SyntheticStudy:
    kind: str
    records: list
    schema: VariableSchema
    ground_truth: dict


def calibration_cohort(n=80, seed=0) -> SyntheticStudy:
    """Cohort whose transition is linear plus a smooth sinusoidal bias."""
    rng = np.random.default_rng(seed)
    schema = study_schema()
    phases = rng.uniform(0.0, 2.0 * np.pi, len(ACTIVE))
    snps = rng.integers(0, 3, size=(n, 3)).astype(float)

    s1 = np.zeros((n, 12))
    s1[:, :9] = rng.uniform(0.02, 0.98, (n, 9))
    s1[:, 9:] = snps
    doses = rng.uniform(1.6, 4.9, (n, 3))
    bounds = schema.dose_bounds

    s2 = calibration_transition(s1, _dose_unit(doses[:, 0], bounds), phases)
    s2[:, 9:] = snps
    s3 = calibration_transition(s2, _dose_unit(doses[:, 1], bounds), phases)
    s3[:, 9:] = snps
    s4 = calibration_transition(s3, _dose_unit(doses[:, 2], bounds), phases)

    logit1, logit2 = _calibration_outcome_logits(s4)
    y1 = (rng.uniform(size=n) < _sigmoid(logit1)).astype(int)
    y2 = (rng.uniform(size=n) < _sigmoid(logit2)).astype(int)

    records = []
    for i in range(n):
        states = _to_original(np.stack([s1[i], s2[i], s3[i]]))
        records.append(
            PatientRecord(
                patient_id=f"P{i:03d}",
                states=states,
                doses=doses[i].copy(),
                outcomes=(int(y1[i]), int(y2[i])),
            )
        )
    truth = {
        "coefficients": {k: v for k, v in CALIBRATION.items()},
        "phases": phases.tolist(),
        "seed": int(seed),
        "n": int(n),
    }
    return SyntheticStudy("calibration", records, schema, truth)


def linear_predictions_csv(records, schema) -> str:
    """Ordinary-least-squares point predictions, one row per (patient, stage).

    The fit is linear in (state, dose) per active dimension, pooled over the
    observed transitions; stage T rows extrapolate the final unobserved
    state.  Values are in original units, matching the external-predictions
    interface.
    """
    X_rows, Y_rows = [], []
    for r in records:
        for t in range(2):
            X_rows.append(np.concatenate([r.states[t], [r.doses[t]]]))
            Y_rows.append(r.states[t + 1][:9])
    X = np.column_stack([np.ones(len(X_rows)), np.array(X_rows)])
    Y = np.array(Y_rows)
    beta, *_ = np.linalg.lstsq(X, Y, rcond=None)

    lines = ["patient_id,stage," + ",".join(
        schema.column_for(v) for v in schema.active_names
    )]
    for r in records:
        for t in range(3):
            x = np.concatenate([[1.0], r.states[t], [r.doses[t]]])
            pred = x @ beta
            lines.append(
                f"{r.patient_id},{t + 1}," + ",".join(repr(float(v)) for v in pred)
            )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Decision study


def decision_transition(states, dose_unit, coeffs=None):
    c = coeffs or DECISION
    states = np.asarray(states, dtype=float)
    u = np.asarray(dose_unit)
    nxt = states.copy()
    for j in ACTIVE:
        if j == TUMOR:
            b0, b1, b2 = c["tumor"]
        elif j == LUNG:
            b0, b1, b2 = c["lung"]
        else:
            b0, b1, b2 = c["other"]
        nxt[..., j] = b0 + b1 * states[..., j] + b2 * u
    return nxt


def decision_outcome_probs(final_states, coeffs=None):
    c = coeffs or DECISION
    s1, o1 = c["lc_logit"]
    s2, o2 = c["rp2_logit"]
    p_lc = _sigmoid(s1 * np.asarray(final_states)[..., TUMOR] + o1)
    p_rp2 = _sigmoid(s2 * np.asarray(final_states)[..., LUNG] + o2)
    return p_lc, p_rp2


def true_reward_curve(s3, doses_gy, bounds, coeffs=None):
    """Ground-truth reward at each candidate dose for one patient state."""
    from .propagation import reward

    doses_gy = np.atleast_1d(np.asarray(doses_gy, dtype=float))
    u = _dose_unit(doses_gy, bounds)
    final = decision_transition(np.tile(s3, (u.size, 1)), u, coeffs)
    p_lc, p_rp2 = decision_outcome_probs(final, coeffs)
    return reward(p_lc, p_rp2)


def decision_cohort(n=80, seed=0, grid_doses=None) -> SyntheticStudy:
    """Historical cohort with heterogeneous prescriptions plus study truth.

    Training doses span the full bounds (historical practice varies), so
    the dose response of both outcomes is identified.  The ground truth
    additionally records, per patient, the true optimal dose on the grid
    and the study's "physician" prescription ``physician_gap_gy`` below
    it, which the decision study feeds to the adjudicator.
    """
    rng = np.random.default_rng(seed)
    schema = study_schema()
    bounds = schema.dose_bounds
    if grid_doses is None:
        grid_doses = 1.5 + 0.1 * np.arange(36)

    snps = rng.integers(0, 3, size=(n, 3)).astype(float)
    s1 = np.zeros((n, 12))
    s1[:, :9] = rng.uniform(0.05, 0.95, (n, 9))
    s1[:, TUMOR] = rng.uniform(0.35, 0.65, n)
    s1[:, LUNG] = rng.uniform(0.35, 0.65, n)
    s1[:, 9:] = snps

    early = rng.uniform(1.8, 4.2, (n, 2))
    s2 = decision_transition(s1, _dose_unit(early[:, 0], bounds))
    s2[:, 9:] = snps
    s3 = decision_transition(s2, _dose_unit(early[:, 1], bounds))
    s3[:, 9:] = snps

    final_dose = rng.uniform(1.6, 4.4, n)
    s4 = decision_transition(s3, _dose_unit(final_dose, bounds))
    p_lc, p_rp2 = decision_outcome_probs(s4)
    y1 = (rng.uniform(size=n) < p_lc).astype(int)
    y2 = (rng.uniform(size=n) < p_rp2).astype(int)

    optima = np.zeros(n)
    for i in range(n):
        curve = true_reward_curve(s3[i], grid_doses, bounds)
        optima[i] = grid_doses[int(np.argmax(curve))]
    physician = optima - DECISION["physician_gap_gy"]

    records = []
    for i in range(n):
        states = _to_original(np.stack([s1[i], s2[i], s3[i]]))
        doses = np.array([early[i, 0], early[i, 1], final_dose[i]])
        records.append(
            PatientRecord(
                patient_id=f"P{i:03d}",
                states=states,
                doses=doses,
                outcomes=(int(y1[i]), int(y2[i])),
            )
        )
    truth = {
        "coefficients": {k: list(v) if isinstance(v, tuple) else v
                         for k, v in DECISION.items()},
        "optimal_dose_gy": optima.tolist(),
        "physician_dose_gy": physician.tolist(),
        "seed": int(seed),
        "n": int(n),
        "generator_state_stage3": s3.tolist(),
    }
    return SyntheticStudy("decision", records, schema, truth)
