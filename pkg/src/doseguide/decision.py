"""Dose optimization, physician-vs-optimizer adjudication, compensation GP.

The optimizer sweeps a dose grid through the calibrated transition and
outcome models and maximizes the plug-in reward of the probability means.
A one-sided two-sample Welch t-test on Monte-Carlo reward samples decides
whether the optimized dose is credibly better than the physician's; only
patients where it is (p < 0.05) train the dose-compensation GP.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import gp
from .errors import DoseguideError, InsufficientDataError
from .propagation import (
    OutcomeDistribution,
    OutcomeMoments,
    delta_method,
    outcome_distribution,
    propagate,
    reward,
    sample_reward,
)
from .transition import StatePrediction, predict_next_state_many

P_THRESHOLD = 0.05
RELIABILITY_WIDTH = 0.5
COMPENSATION_JITTER = 1e-4
DEFAULT_COMPENSATION_VARS = ("Tumor_gEUD", "Lung_gEUD")


@dataclass(frozen=True)
class DoseGrid:
    """Candidate per-fraction doses in Gy: [min, max] stepped by step."""

    min_gy: float = 1.5
    max_gy: float = 5.0
    step_gy: float = 0.1

    def __post_init__(self):
        if self.min_gy <= 0:
            raise ValueError("dose grid minimum must be positive")
        if self.step_gy <= 0:
            raise ValueError("dose grid step must be positive")
        if self.max_gy < self.min_gy:
            raise ValueError("dose grid max must be >= min")
        if (self.max_gy - self.min_gy) / self.step_gy > 1e4:
            raise ValueError("dose grid has too many points")

    def doses(self):
        count = int(math.floor((self.max_gy - self.min_gy) / self.step_gy + 1e-9))
        return self.min_gy + self.step_gy * np.arange(count + 1)

    def to_dict(self):
        return {"min_gy": self.min_gy, "max_gy": self.max_gy, "step_gy": self.step_gy}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["min_gy"]), float(d["max_gy"]), float(d["step_gy"]))


@dataclass(frozen=True)
class DoseCurvePoint:
    """One grid dose with its propagated outcome moments and reward band."""

    dose_gy: float
    outcomes: OutcomeDistribution
    reward_mean: float
    reward_lo: float
    reward_hi: float


def _clip_unit(v):
    return float(np.clip(v, 0.0, 1.0))


def _interval(m, sd2):
    s = math.sqrt(max(sd2, 0.0))
    return _clip_unit(m - 2.0 * s), _clip_unit(m + 2.0 * s)


def _curve_point(dose_gy, moments_lc, moments_rp2):
    outcomes = OutcomeDistribution(lc=moments_lc, rp2=moments_rp2)
    lc_lo, lc_hi = _interval(moments_lc.prob_mean, moments_lc.prob_variance)
    rp_lo, rp_hi = _interval(moments_rp2.prob_mean, moments_rp2.prob_variance)
    # reward is monotone in each probability, so the +-2sd probability box
    # maps to a reward envelope through its corners
    return DoseCurvePoint(
        dose_gy=float(dose_gy),
        outcomes=outcomes,
        reward_mean=reward(moments_lc.prob_mean, moments_rp2.prob_mean),
        reward_lo=reward(lc_lo, rp_hi),
        reward_hi=reward(lc_hi, rp_lo),
    )


def dose_response_curve(transition_model, eval_model, s_scaled, doses_gy,
                        dose_bounds):
    """Propagated outcome moments and plug-in reward at each dose."""
    doses_gy = np.atleast_1d(np.asarray(doses_gy, dtype=float))
    lo, hi = dose_bounds
    doses_scaled = (doses_gy - lo) / (hi - lo)
    pred = predict_next_state_many(transition_model, s_scaled, doses_scaled)
    logits = propagate(pred, eval_model)
    curve = []
    for i, dose in enumerate(doses_gy):
        per_outcome = {}
        for outcome in ("lc", "rp2"):
            mu, sigma = logits[outcome]
            p, pv = delta_method(float(mu[i]), float(sigma[i]))
            per_outcome[outcome] = OutcomeMoments(
                float(mu[i]), float(sigma[i]), p, pv
            )
        curve.append(_curve_point(dose, per_outcome["lc"], per_outcome["rp2"]))
    return curve


def optimize_dose(transition_model, eval_model, s_scaled, grid: DoseGrid,
                  dose_bounds):
    """Grid-argmax of the plug-in reward; ties resolve to the lowest dose."""
    curve = dose_response_curve(
        transition_model, eval_model, s_scaled, grid.doses(), dose_bounds
    )
    rewards = np.array([pt.reward_mean for pt in curve])
    best = int(np.argmax(rewards))  # first maximum = lowest dose on ties
    return curve[best].dose_gy, curve


def welch_one_sided(a, b):
    """One-sided Welch p-value for H1: mean(a) > mean(b).

    Degenerate samples (both variances zero) give 1.0 when mean(a) <=
    mean(b) and 0.0 otherwise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DoseguideError("need at least 2 samples per group")
    va = float(np.var(a, ddof=1))
    vb = float(np.var(b, ddof=1))
    ma, mb = float(np.mean(a)), float(np.mean(b))
    se2 = va / a.size + vb / b.size
    if se2 == 0.0:
        return 1.0 if ma <= mb else 0.0
    t_stat = (ma - mb) / math.sqrt(se2)
    df = se2**2 / (
        (va / a.size) ** 2 / (a.size - 1) + (vb / b.size) ** 2 / (b.size - 1)
    )
    return float(stats.t.sf(t_stat, df))


@dataclass(frozen=True)
class DecisionVerdict:
    """Adjudication between a physician prescription and the optimized dose."""

    ai_dose_gy: float
    physician_dose_gy: float
    ai_reward: object
    physician_reward: object
    ai_outcomes: OutcomeDistribution
    physician_outcomes: OutcomeDistribution
    p_value: float
    chosen: str  # "AI" | "PHYSICIAN"
    reliability_flag: bool
    sample_count: int
    seed: int


def _interval_width(moments: OutcomeMoments):
    lo, hi = _interval(moments.prob_mean, moments.prob_variance)
    return hi - lo


def compare_prescriptions(transition_model, eval_model, s_scaled,
                          physician_dose_gy, grid: DoseGrid, n_samples, seed,
                          dose_bounds,
                          reliability_width=RELIABILITY_WIDTH) -> DecisionVerdict:
    """Adjudicate the optimized dose against the physician's prescription.

    Both Monte-Carlo reward distributions use the same seed, so identical
    dose choices produce identical samples.  The optimized dose is chosen
    exactly when the one-sided Welch p-value drops below 0.05.
    """
    physician_dose_gy = float(physician_dose_gy)
    if not (grid.min_gy <= physician_dose_gy <= grid.max_gy):
        raise DoseguideError(
            f"physician dose {physician_dose_gy} Gy outside the grid "
            f"[{grid.min_gy}, {grid.max_gy}]"
        )
    ai_dose, _curve = optimize_dose(
        transition_model, eval_model, s_scaled, grid, dose_bounds
    )
    lo, hi = dose_bounds

    def outcomes_at(dose_gy):
        pred = predict_next_state_many(
            transition_model, s_scaled, [(dose_gy - lo) / (hi - lo)]
        )
        return outcome_distribution(
            StatePrediction(mean=pred.mean[0], variance=pred.variance[0]),
            eval_model,
        )

    ai_outcomes = outcomes_at(ai_dose)
    phys_outcomes = outcomes_at(physician_dose_gy)
    ai_rewards = sample_reward(ai_outcomes, n_samples, seed)
    phys_rewards = sample_reward(phys_outcomes, n_samples, seed)
    p_value = welch_one_sided(ai_rewards.samples, phys_rewards.samples)
    unreliable = (
        _interval_width(ai_outcomes.lc) > reliability_width
        or _interval_width(ai_outcomes.rp2) > reliability_width
    )
    return DecisionVerdict(
        ai_dose_gy=float(ai_dose),
        physician_dose_gy=physician_dose_gy,
        ai_reward=ai_rewards,
        physician_reward=phys_rewards,
        ai_outcomes=ai_outcomes,
        physician_outcomes=phys_outcomes,
        p_value=p_value,
        chosen="AI" if p_value < P_THRESHOLD else "PHYSICIAN",
        reliability_flag=bool(unreliable),
        sample_count=int(n_samples),
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# Dose compensation


@dataclass(frozen=True)
class CompensationModel:
    """GP over selected state variables predicting optimizer-minus-physician
    dose, trained only on adjudications that favored the optimizer."""

    variable_names: tuple
    variable_indices: tuple
    params: gp.SEKernelParams
    gram: gp.GramMatrix
    train_inputs: np.ndarray  # (m, len(variable_indices)), scaled units
    train_deltas: np.ndarray  # Gy/fraction
    mean_shift: float
    alpha: np.ndarray
    jitter: float

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        kvec = gp.se_cross(X, self.train_inputs, self.params.rates)
        return self.mean_shift + kvec @ self.alpha


def fit_compensation(states_scaled, ai_doses_gy, physician_doses_gy, p_values,
                     schema, variable_names=DEFAULT_COMPENSATION_VARS,
                     search=None, jitter=COMPENSATION_JITTER) -> CompensationModel:
    """Regress the dose gap on selected variables over AI-superior cases.

    The gap is centered before the GP fit (the constant plays the point-
    estimator role) so predictions revert to the average compensation away
    from data; jitter acts as a noise nugget since adjudicated doses are
    grid-quantized decisions.
    """
    search = search or gp.GridSpec()
    states_scaled = np.atleast_2d(np.asarray(states_scaled, dtype=float))
    ai = np.asarray(ai_doses_gy, dtype=float)
    phys = np.asarray(physician_doses_gy, dtype=float)
    p = np.asarray(p_values, dtype=float)
    keep = p < P_THRESHOLD
    if int(keep.sum()) < 3:
        raise InsufficientDataError(
            f"insufficient AI-superior cases: {int(keep.sum())} with "
            f"p < {P_THRESHOLD}, need at least 3"
        )
    indices = tuple(schema.names.index(v) for v in variable_names)
    X = states_scaled[keep][:, indices]
    deltas = ai[keep] - phys[keep]
    shift = float(np.mean(deltas))
    residuals = deltas - shift
    params = gp.fit_hyperparams(X, residuals, search, jitter)
    gm = gp.gram(X, params, jitter)
    return CompensationModel(
        variable_names=tuple(variable_names),
        variable_indices=indices,
        params=params,
        gram=gm,
        train_inputs=X,
        train_deltas=deltas,
        mean_shift=shift,
        alpha=gp.solve(gm, residuals),
        jitter=jitter,
    )


def compensation_map(model: CompensationModel, scalings, resolution):
    """Lattice of predicted dose compensation over the two variables' ranges.

    Axis values are reported in original units; the lattice spans the
    observed (scaled) training range of each variable.  Training points are
    included as markers.
    """
    if resolution < 2:
        raise DoseguideError("resolution must be at least 2")
    if len(model.variable_names) != 2:
        raise DoseguideError("compensation map needs a 2-variable model")
    s1, s2 = scalings
    x1 = np.linspace(model.train_inputs[:, 0].min(),
                     model.train_inputs[:, 0].max(), resolution)
    x2 = np.linspace(model.train_inputs[:, 1].min(),
                     model.train_inputs[:, 1].max(), resolution)
    g1, g2 = np.meshgrid(x1, x2, indexing="ij")
    queries = np.column_stack([g1.ravel(), g2.ravel()])
    deltas = model.predict(queries).reshape(resolution, resolution)
    markers = [
        {
            "var1": float(s1.inverse(model.train_inputs[i, 0])),
            "var2": float(s2.inverse(model.train_inputs[i, 1])),
            "delta_gy": float(model.train_deltas[i]),
        }
        for i in range(model.train_inputs.shape[0])
    ]
    return {
        "var1": model.variable_names[0],
        "var2": model.variable_names[1],
        "axis1": [float(s1.inverse(v)) for v in x1],
        "axis2": [float(s2.inverse(v)) for v in x2],
        "delta_gy": deltas.tolist(),
        "training_points": markers,
    }
