"""Uncertainty propagation from predicted states to outcome probabilities.

The transition model's per-dimension state variances enter the outcome
classifiers through an error-in-variables kernel whose cross-covariances
are attenuated by the query's input variance.  A first-order (delta
method) pass then maps the latent logit distribution onto the probability
scale, and the scalar reward is sampled by Monte Carlo from the resulting
normals.

The error-in-variables kernel keeps the published attenuation constants
(linear 1/(1+4*rate*var) prefactor, 4*var added to the squared-distance
scale); the square-root prefactor of the textbook derivation is available
behind a flag.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import gp
from .errors import DoseguideError
from .evaluation import OUTCOMES, EvaluationModel
from .transition import StatePrediction

REWARD_WEIGHT = 10.0
REWARD_RP2_SCALE = 0.57
REWARD_OFFSET = 3.281
REWARD_POWER = 8.0


def eiv_kernel(s, s_prime, rates, input_variances, sqrt_prefactor=False) -> float:
    """Error-in-variables SE kernel between an uncertain and a fixed input."""
    s = np.asarray(s, dtype=float)
    s_prime = np.asarray(s_prime, dtype=float)
    rates = np.asarray(rates, dtype=float)
    var = np.asarray(input_variances, dtype=float)
    if np.any(var < 0):
        raise DoseguideError("input variances must be nonnegative")
    atten = 1.0 + 4.0 * rates * var
    prefactor = np.prod(atten ** (-0.5 if sqrt_prefactor else -1.0))
    expo = np.sum((s - s_prime) ** 2 / (1.0 / rates + 4.0 * var))
    return float(prefactor * np.exp(-expo))


def _eiv_cross(query_means, query_vars, anchors, rates, sqrt_prefactor=False):
    """Rows: uncertain queries (B, q); columns: fixed anchor points (m, q)."""
    atten = 1.0 + 4.0 * rates[None, :] * query_vars  # (B, q)
    prefactor = np.prod(atten ** (-0.5 if sqrt_prefactor else -1.0), axis=1)  # (B,)
    scale = 1.0 / rates[None, :] + 4.0 * query_vars  # (B, q)
    d2 = (query_means[:, None, :] - anchors[None, :, :]) ** 2  # (B, m, q)
    expo = (d2 / scale[:, None, :]).sum(axis=-1)
    return prefactor[:, None] * np.exp(-expo)


def _eiv_prior(query_vars, rates, sqrt_prefactor=False):
    atten = 1.0 + 4.0 * rates[None, :] * query_vars
    return np.prod(atten ** (-0.5 if sqrt_prefactor else -1.0), axis=1)


@dataclass(frozen=True)
class OutcomeMoments:
    logit_mean: float
    logit_variance: float
    prob_mean: float
    prob_variance: float


@dataclass(frozen=True)
class OutcomeDistribution:
    """Propagated logit and probability moments for both outcomes."""

    lc: OutcomeMoments
    rp2: OutcomeMoments

    def __getitem__(self, outcome):
        return getattr(self, outcome)


def propagate(state_pred: StatePrediction, eval_model: EvaluationModel,
              sqrt_prefactor=False):
    """Logit mean/variance per outcome under state-input uncertainty.

    Accepts a single state prediction (1-d mean) or a batch (2-d); returns
    {outcome: (mean, variance)} with arrays for batches, floats otherwise.
    """
    mean = np.atleast_2d(np.asarray(state_pred.mean, dtype=float))
    var = np.atleast_2d(np.asarray(state_pred.variance, dtype=float))
    single = np.asarray(state_pred.mean).ndim == 1
    out = {}
    for outcome in OUTCOMES:
        clf = eval_model[outcome]
        rates = clf.params.rates
        kvec = _eiv_cross(mean, var, clf.training_inputs, rates, sqrt_prefactor)
        mu = kvec @ clf.alpha
        prior = _eiv_prior(var, rates, sqrt_prefactor)
        explained = np.einsum("bn,nb->b", kvec, gp.solve(clf.gram, kvec.T))
        sigma = np.maximum(0.0, prior - explained) / clf.params.precision
        if single:
            out[outcome] = (float(mu[0]), float(sigma[0]))
        else:
            out[outcome] = (mu, sigma)
    return out


def delta_method(logit_mean, logit_variance):
    """First-order probability moments of a normal logit."""
    mu = np.asarray(logit_mean, dtype=float)
    sigma = np.asarray(logit_variance, dtype=float)
    if np.any(sigma < 0):
        raise DoseguideError("logit variance must be nonnegative")
    p = expit(mu)
    slope = p * (1.0 - p)
    if mu.ndim == 0:
        return float(p), float(slope**2 * sigma)
    return p, slope**2 * sigma


def outcome_distribution(state_pred: StatePrediction,
                         eval_model: EvaluationModel) -> OutcomeDistribution:
    """Propagate one state prediction to probability moments per outcome."""
    logits = propagate(state_pred, eval_model)
    moments = {}
    for outcome in OUTCOMES:
        mu, sigma = logits[outcome]
        p, pv = delta_method(mu, sigma)
        moments[outcome] = OutcomeMoments(mu, sigma, p, pv)
    return OutcomeDistribution(lc=moments["lc"], rp2=moments["rp2"])


def reward(p_lc, p_rp2, rp2_scale=REWARD_RP2_SCALE, weight=REWARD_WEIGHT,
           offset=REWARD_OFFSET, power=REWARD_POWER):
    """Smoothed trade-off score between tumor control and pneumonitis risk.

    Supremum ``offset`` is attained only at (1, 0); the score decreases as
    control probability drops or pneumonitis probability rises.
    """
    p_lc = np.asarray(p_lc, dtype=float)
    p_rp2 = np.asarray(p_rp2, dtype=float)
    term = (1.0 - p_lc) ** power + (p_rp2 / rp2_scale) ** power
    value = -weight * term ** (1.0 / power) + offset
    if value.ndim == 0:
        return float(value)
    return value


@dataclass(frozen=True)
class RewardDistribution:
    """Monte-Carlo reward samples with recomputable summary moments."""

    samples: np.ndarray
    mean: float
    std: float
    seed: int
    sample_count: int

    def to_dict(self, include_samples=False):
        d = {
            "mean": self.mean,
            "std": self.std,
            "seed": self.seed,
            "sample_count": self.sample_count,
        }
        if include_samples:
            d["samples"] = self.samples.tolist()
        return d


def sample_reward(dist: OutcomeDistribution, n_samples, seed) -> RewardDistribution:
    """Draw probability pairs from their normals, clamp, and score them.

    Draws are independent across outcomes (control first, then pneumonitis)
    and deterministic for a given seed.
    """
    if n_samples < 2:
        raise DoseguideError("need at least 2 Monte-Carlo samples")
    rng = np.random.default_rng(seed)
    p_lc = rng.normal(dist.lc.prob_mean, np.sqrt(dist.lc.prob_variance), n_samples)
    p_rp2 = rng.normal(
        dist.rp2.prob_mean, np.sqrt(dist.rp2.prob_variance), n_samples
    )
    values = reward(np.clip(p_lc, 0.0, 1.0), np.clip(p_rp2, 0.0, 1.0))
    return RewardDistribution(
        samples=values,
        mean=float(np.mean(values)),
        std=float(np.std(values, ddof=1)),
        seed=int(seed),
        sample_count=int(n_samples),
    )
