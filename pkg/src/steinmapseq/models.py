"""State-space model abstraction, Gaussian helpers, and angle utilities.

A model bundles the transition density p(x_t | x_{t-1}), the observation
likelihood p(z_t | x_t), their gradients with respect to x_t, and samplers.
All densities are log-domain; -inf is a legal value and propagates through
sums, NaN is a contract violation.

Transition callables take the destination time index because benchmark
dynamics may carry a time-varying drift or a scheduled control input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

_TWO_PI = 2.0 * np.pi
_LOG_TWO_PI = float(np.log(2.0 * np.pi))


class ContractViolationError(ValueError):
    """An input or return value violates a declared model contract."""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite value where one is not allowed."""


@dataclass
class Observation:
    """A measurement vector with its time index and per-component validity.

    Components whose mask entry is False are ignored by every likelihood
    evaluation (dropped sensor channels keep the vector shape fixed).
    """

    values: np.ndarray
    time_index: int
    validity_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if self.time_index < 1:
            raise ContractViolationError("time_index must be >= 1")
        if self.validity_mask is None:
            self.validity_mask = np.ones(self.values.shape, dtype=bool)
        else:
            self.validity_mask = np.asarray(self.validity_mask, dtype=bool)
            if self.validity_mask.shape != self.values.shape:
                raise ContractViolationError("validity_mask shape mismatch")


@dataclass
class ModelSpec:
    """Probabilistic state-space model with analytic score functions.

    Scalar contracts (required):
        transition_logpdf(x_prev, x, t) -> float
        transition_grad(x_prev, x, t) -> (n_x,)     gradient w.r.t. x
        transition_sample(x_prev, t, rng) -> (n_x,)
        likelihood_logpdf(x, z) -> float
        likelihood_grad(x, z) -> (n_x,)

    Vectorized hooks are optional; when absent the module-level batch
    helpers fall back to loops over the scalar contracts.
    """

    state_dim: int
    obs_dim: int
    transition_logpdf: Callable
    transition_grad: Callable
    transition_sample: Callable
    likelihood_logpdf: Callable
    likelihood_grad: Callable
    angular_components: frozenset = frozenset()
    transition_mean: Optional[Callable] = None  # (x_prev, t) -> (n_x,)
    # vectorized hooks
    trans_logpdf_pairs: Optional[Callable] = None   # (Xp (J,n), X (I,n), t) -> (I,J)
    trans_logpdf_rows: Optional[Callable] = None    # (Xp (M,n), X (M,n), t) -> (M,)
    trans_grad_marginal: Optional[Callable] = None  # (Xp (J,n), X (I,n), t) -> (I,n)
    trans_grad_mixture: Optional[Callable] = None   # (Xp (J,n), X (I,n), t) -> (I,n)
    trans_sample_batch: Optional[Callable] = None   # (Xp (I,n), t, rng) -> (I,n)
    lik_logpdf_batch: Optional[Callable] = None     # (X (I,n), z) -> (I,)
    lik_grad_batch: Optional[Callable] = None       # (X (I,n), z) -> (I,n)


def wrap_angle(theta):
    """Wrap an angle (or array of angles) to [-pi, pi)."""
    w = np.mod(theta + np.pi, _TWO_PI) - np.pi
    w = np.where(w >= np.pi, w - _TWO_PI, w)
    if np.ndim(theta) == 0:
        return float(w)
    return w


def gaussian_logpdf(x, mean, cov_diag):
    """Exact log density of a diagonal Gaussian at x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov_diag = np.atleast_1d(np.asarray(cov_diag, dtype=float))
    if np.any(cov_diag <= 0.0):
        raise ContractViolationError("cov_diag entries must be > 0")
    r = x - mean
    return float(-0.5 * np.sum(_LOG_TWO_PI + np.log(cov_diag) + r * r / cov_diag))


def circular_mean(angles, weights=None):
    """Weighted mean direction of angles, in [-pi, pi)."""
    angles = np.asarray(angles, dtype=float)
    if weights is None:
        s, c = np.sin(angles).sum(), np.cos(angles).sum()
    else:
        weights = np.asarray(weights, dtype=float)
        s = float(weights @ np.sin(angles))
        c = float(weights @ np.cos(angles))
    return wrap_angle(float(np.arctan2(s, c)))


def finite_difference_grad(f, x, h):
    """Central-difference gradient of a scalar function of the state.

    h may be a scalar or a per-component vector of step sizes.
    """
    x = np.asarray(x, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        fp, fm = f(xp), f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalError(
                f"function non-finite at finite-difference probe, component {i}")
        grad[i] = (fp - fm) / (2.0 * h[i])
    return grad


def _check_dims(model, x_prev, x, z):
    if np.shape(x_prev) != (model.state_dim,) or np.shape(x) != (model.state_dim,):
        raise ContractViolationError(
            f"state dimension mismatch: expected ({model.state_dim},)")
    if z.values.shape != (model.obs_dim,):
        raise ContractViolationError(
            f"observation dimension mismatch: expected ({model.obs_dim},)")


def log_joint_step(model, x_prev, x, z):
    """log p(z_t, x_t | x_{t-1}) = log p(z_t|x_t) + log p(x_t|x_{t-1})."""
    _check_dims(model, x_prev, x, z)
    lik = model.likelihood_logpdf(x, z)
    trans = model.transition_logpdf(x_prev, x, z.time_index)
    total = lik + trans
    if np.isnan(total):
        raise ContractViolationError("log density returned NaN")
    return float(total)


def grad_log_joint_step(model, x_prev, x, z):
    """Gradient of log p(z_t, x_t | x_{t-1}) with respect to x_t."""
    _check_dims(model, x_prev, x, z)
    g = np.asarray(model.likelihood_grad(x, z), dtype=float) + \
        np.asarray(model.transition_grad(x_prev, x, z.time_index), dtype=float)
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise NumericalError(f"non-finite gradient in component {bad}")
    return g


# ---------------------------------------------------------------------------
# Batch evaluation helpers (use the model's vectorized hooks when present).
# ---------------------------------------------------------------------------

def transition_logpdf_pairs(model, X_prev, X, t):
    """Matrix M[i, j] = log p(x_i | x_prev_j) over two particle sets."""
    if model.trans_logpdf_pairs is not None:
        return model.trans_logpdf_pairs(X_prev, X, t)
    out = np.empty((X.shape[0], X_prev.shape[0]))
    for i, xi in enumerate(X):
        for j, xj in enumerate(X_prev):
            out[i, j] = model.transition_logpdf(xj, xi, t)
    return out


def transition_logpdf_rows(model, X_prev, X, t):
    """Row-aligned log p(x_i | x_prev_i) for paired samples."""
    if model.trans_logpdf_rows is not None:
        return model.trans_logpdf_rows(X_prev, X, t)
    return np.array([model.transition_logpdf(xp, xi, t)
                     for xp, xi in zip(X_prev, X)])


def transition_grad_marginal(model, X_prev, X, t):
    """Mean over ancestors j of the conditional score grad log p(x_i | x_prev_j)."""
    if model.trans_grad_marginal is not None:
        return model.trans_grad_marginal(X_prev, X, t)
    stacked = np.stack([
        [model.transition_grad(xj, xi, t) for xi in X] for xj in X_prev])
    return stacked.mean(axis=0)


def transition_grad_mixture(model, X_prev, X, t):
    """Score of the ancestor-mixture prior (1/J) sum_j p(x | x_prev_j)."""
    if model.trans_grad_mixture is not None:
        return model.trans_grad_mixture(X_prev, X, t)
    lp = transition_logpdf_pairs(model, X_prev, X, t)  # (I, J)
    w = np.exp(lp - lp.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    out = np.zeros_like(np.asarray(X, dtype=float))
    for j, xj in enumerate(X_prev):
        grads = np.stack([model.transition_grad(xj, xi, t) for xi in X])
        out += w[:, j:j + 1] * grads
    return out


def transition_sample_batch(model, X_prev, t, rng):
    if model.trans_sample_batch is not None:
        return model.trans_sample_batch(X_prev, t, rng)
    return np.stack([model.transition_sample(xp, t, rng) for xp in X_prev])


def likelihood_logpdf_batch(model, X, z):
    if model.lik_logpdf_batch is not None:
        return model.lik_logpdf_batch(X, z)
    return np.array([model.likelihood_logpdf(x, z) for x in X])


def likelihood_grad_batch(model, X, z):
    if model.lik_grad_batch is not None:
        return model.lik_grad_batch(X, z)
    return np.stack([model.likelihood_grad(x, z) for x in X])


# ---------------------------------------------------------------------------
# Diagonal-Gaussian transition kit: every benchmark model has a Gaussian
# transition around a (possibly time-varying) mean, so the scalar contracts
# and all vectorized hooks derive from the mean function and the variance.
# ---------------------------------------------------------------------------

def gaussian_transition_kit(mean_fn, var_diag, angular=frozenset()):
    """Build all transition callables from a vectorized mean function.

    mean_fn(X_prev (J, n), t) -> (J, n); var_diag is the diagonal process
    variance. Residuals of angular components are wrapped.
    """
    var = np.atleast_1d(np.asarray(var_diag, dtype=float))
    if np.any(var <= 0.0):
        raise ContractViolationError("process variance entries must be > 0")
    std = np.sqrt(var)
    log_norm = float(-0.5 * np.sum(_LOG_TWO_PI + np.log(var)))
    ang = sorted(angular)

    def _wrap_residual(r):
        if ang:
            r[..., ang] = wrap_angle(r[..., ang])
        return r

    def logpdf(x_prev, x, t):
        m = mean_fn(np.asarray(x_prev, dtype=float)[None, :], t)[0]
        r = _wrap_residual(np.asarray(x, dtype=float) - m)
        return log_norm - 0.5 * float(np.sum(r * r / var))

    def grad(x_prev, x, t):
        m = mean_fn(np.asarray(x_prev, dtype=float)[None, :], t)[0]
        r = _wrap_residual(np.asarray(x, dtype=float) - m)
        return -r / var

    def sample(x_prev, t, rng):
        m = mean_fn(np.asarray(x_prev, dtype=float)[None, :], t)[0]
        x = m + std * rng.standard_normal(m.shape)
        if ang:
            x[ang] = wrap_angle(x[ang])
        return x

    def mean_single(x_prev, t):
        return mean_fn(np.asarray(x_prev, dtype=float)[None, :], t)[0]

    def pairs(X_prev, X, t):
        m = mean_fn(np.asarray(X_prev, dtype=float), t)  # (J, n)
        r = _wrap_residual(np.asarray(X, dtype=float)[:, None, :] - m[None, :, :])
        return log_norm - 0.5 * np.sum(r * r / var, axis=2)

    def rows(X_prev, X, t):
        m = mean_fn(np.asarray(X_prev, dtype=float), t)
        r = _wrap_residual(np.asarray(X, dtype=float) - m)
        return log_norm - 0.5 * np.sum(r * r / var, axis=1)

    def grad_marginal(X_prev, X, t):
        m = mean_fn(np.asarray(X_prev, dtype=float), t)  # (J, n)
        X = np.asarray(X, dtype=float)
        if ang:
            # Wrapping does not commute with averaging, so angular models
            # must average the per-ancestor wrapped residuals.
            r = _wrap_residual(X[:, None, :] - m[None, :, :]).mean(axis=1)
        else:
            r = X - m.mean(axis=0)[None, :]
        return -r / var

    def grad_mixture(X_prev, X, t):
        m = mean_fn(np.asarray(X_prev, dtype=float), t)  # (J, n)
        r = _wrap_residual(np.asarray(X, dtype=float)[:, None, :] - m[None, :, :])
        lp = -0.5 * np.sum(r * r / var, axis=2)  # (I, J), shared norm drops out
        w = np.exp(lp - lp.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        return -np.einsum("ij,ijc->ic", w, r) / var

    def sample_batch(X_prev, t, rng):
        m = mean_fn(np.asarray(X_prev, dtype=float), t)
        x = m + std * rng.standard_normal(m.shape)
        if ang:
            x[:, ang] = wrap_angle(x[:, ang])
        return x

    return dict(
        transition_logpdf=logpdf,
        transition_grad=grad,
        transition_sample=sample,
        transition_mean=mean_single,
        trans_logpdf_pairs=pairs,
        trans_logpdf_rows=rows,
        trans_grad_marginal=grad_marginal,
        trans_grad_mixture=grad_mixture,
        trans_sample_batch=sample_batch,
    )


def gradient_check(model, x_prev, x, z, rtol=1e-5, atol=1e-7):
    """Compare analytic joint score against central differences at one point.

    Returns (ok, err) where err is the relative error against the
    finite-difference gradient (absolute error when the gradient norm is
    below 1e-2).
    """
    x = np.asarray(x, dtype=float)
    h = 1e-6 * (1.0 + np.abs(x))
    analytic = grad_log_joint_step(model, x_prev, x, z)
    fd = finite_difference_grad(
        lambda xx: log_joint_step(model, x_prev, xx, z), x, h)
    err = float(np.linalg.norm(analytic - fd))
    norm = float(np.linalg.norm(fd))
    if norm < 1e-2:
        return err <= atol, err
    rel = err / norm
    return rel <= rtol, rel
