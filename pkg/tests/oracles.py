"""Independent oracles used by the test suites.

Everything here is deliberately implemented with plain dense linear
algebra and brute-force integration, independent of the library's own
code paths.
"""

import numpy as np


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def lattice_posterior(covariance, labels, half_width=6.0, points=15):
    """Brute-force posterior of a GP classifier on a regular lattice.

    Integrates the un-normalized posterior exp(loglik(h) - 0.5 h^T C^-1 h)
    over [-half_width, half_width]^n and returns (expected sigmoid per
    training point, posterior mean of h).
    """
    labels = np.asarray(labels, dtype=float)
    n = labels.size
    c_inv = np.linalg.inv(covariance)
    axis = np.linspace(-half_width, half_width, points)

    z_total = 0.0
    prob_acc = np.zeros(n)
    mean_acc = np.zeros(n)
    # chunk over the first coordinate to bound memory
    grids = [axis] * (n - 1)
    if n == 1:
        h = axis[:, None]
        logw = _log_weight(h, labels, c_inv)
        w = np.exp(logw - logw.max())
        z_total = w.sum()
        prob_acc = (w[:, None] * sigmoid(h)).sum(axis=0)
        mean_acc = (w[:, None] * h).sum(axis=0)
        return prob_acc / z_total, mean_acc / z_total

    rest = np.stack(
        np.meshgrid(*grids, indexing="ij"), axis=-1
    ).reshape(-1, n - 1)
    max_logw = -np.inf
    chunks = []
    for h0 in axis:
        h = np.column_stack([np.full(rest.shape[0], h0), rest])
        logw = _log_weight(h, labels, c_inv)
        chunks.append(logw.max())
        max_logw = max(max_logw, logw.max())
    for h0 in axis:
        h = np.column_stack([np.full(rest.shape[0], h0), rest])
        logw = _log_weight(h, labels, c_inv)
        w = np.exp(logw - max_logw)
        z_total += w.sum()
        prob_acc += w @ sigmoid(h)
        mean_acc += w @ h
    return prob_acc / z_total, mean_acc / z_total


def _log_weight(h, labels, c_inv):
    loglik = np.where(labels[None, :] == 1.0, -np.logaddexp(0.0, -h),
                      -np.logaddexp(0.0, h)).sum(axis=1)
    quad = 0.5 * np.einsum("bi,ij,bj->b", h, c_inv, h)
    return loglik - quad


def latent_mode_1d_bisection(y, k, lam, lo=-10.0, hi=10.0, tol=1e-12):
    """Solve the n=1 stationarity condition (y - sigmoid(h)) = lam/k * h."""

    def grad(h):
        return (y - sigmoid(h)) - lam * h / k

    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if grad(a) * grad(mid) <= 0:
            b = mid
        else:
            a = mid
        if b - a < tol:
            break
    return 0.5 * (a + b)


def welch_p_oracle(a, b):
    """One-sided Welch p-value through scipy's reference implementation."""
    from scipy import stats

    return stats.ttest_ind(a, b, equal_var=False, alternative="greater").pvalue
