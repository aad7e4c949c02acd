"""Comparison estimators: Kalman-family smoothers/filters and particle methods.

Linearization-based estimators (EKF, EKS, iEKF, iEKS) run on a
DifferentiableModelSpec; particle methods (PF, PF-MAP, PF-MAP-Seq, SPF,
SPF-MAP) run on the plain ModelSpec. PF-MAP-Seq shares the forward
recursion and backtracking of the particle DP decoder.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.special import logsumexp

from .models import (
    ContractViolationError,
    NumericalError,
    circular_mean,
    likelihood_logpdf_batch,
    transition_grad_mixture,
    transition_logpdf_pairs,
    likelihood_grad_batch,
    transition_sample_batch,
    wrap_angle,
)
from .mapseq_dp import ParticleHistory, Trajectory, decode_particle_history
from .svgd import INITIAL_STD, ParticleSet, evolve_particles

log = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e6


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))


@dataclass
class WeightedParticleSet:
    particles: np.ndarray
    log_weights: np.ndarray


@dataclass
class DifferentiableModelSpec:
    """Linearization hooks for the Kalman-family baselines.

    select_hypothesis resolves multi-hypothesis observation models (e.g.
    an association-free landmark mixture) to a single (mean_fn, jac_fn)
    pair given the predicted state and the measurement.
    """

    state_dim: int
    obs_dim: int
    transition_mean: Callable     # (x, t) -> (n,)
    transition_jacobian: Callable  # (x, t) -> (n, n)
    observation_mean: Callable     # (x,) -> (m,)
    observation_jacobian: Callable  # (x,) -> (m, n)
    process_cov: np.ndarray        # diagonal, (n,)
    obs_cov: np.ndarray            # diagonal, (m,)
    angular_components: frozenset = frozenset()
    angular_obs_components: frozenset = frozenset()
    select_hypothesis: Optional[Callable] = None  # (x_pred, z) -> (mean_fn, jac_fn)

    def __post_init__(self):
        self.process_cov = np.atleast_1d(np.asarray(self.process_cov, dtype=float))
        self.obs_cov = np.atleast_1d(np.asarray(self.obs_cov, dtype=float))


@dataclass
class PfOutput:
    """Per-step pre-resampling clouds plus the MMSE trajectory."""

    sets: List[WeightedParticleSet]
    mmse: Trajectory
    x0: np.ndarray
    obs: list
    n_weight_resets: int = 0


@dataclass
class SpfOutput:
    sets: List[ParticleSet]
    mmse: Trajectory
    x0: np.ndarray
    obs: list


def _wrap_state(model, x):
    ang = sorted(model.angular_components)
    if ang:
        x[ang] = wrap_angle(x[ang])
    return x


def _observation_fns(model, x_pred, z):
    if model.select_hypothesis is not None:
        return model.select_hypothesis(x_pred, z)
    return model.observation_mean, model.observation_jacobian


def _solve_innovation_cov(S):
    try:
        return np.linalg.cholesky(S), False
    except np.linalg.LinAlgError:
        log.warning("singular innovation covariance, regularizing with 1e-9*I")
        return np.linalg.cholesky(S + 1e-9 * np.eye(S.shape[0])), True


def _measurement_update(model, m_pred, P_pred, z, n_iter):
    """(Iterated) EKF measurement update, relinearizing n_iter times."""
    idx = np.flatnonzero(z.validity_mask)
    if idx.size == 0:
        return m_pred, P_pred
    mean_fn, jac_fn = _observation_fns(model, m_pred, z)
    R = np.diag(model.obs_cov[idx])
    ang_obs = sorted(model.angular_obs_components)
    x_j = m_pred
    H = K = None
    for _ in range(max(1, n_iter)):
        H_full = np.atleast_2d(jac_fn(x_j))
        H = H_full[idx]
        resid = z.values - np.atleast_1d(mean_fn(x_j))
        if ang_obs:
            resid[ang_obs] = wrap_angle(resid[ang_obs])
        innov = resid[idx] - H @ (m_pred - x_j)
        S = H @ P_pred @ H.T + R
        chol, _ = _solve_innovation_cov(S)
        PHt = P_pred @ H.T
        K = np.linalg.solve(chol.T, np.linalg.solve(chol, PHt.T)).T
        x_j = _wrap_state(model, m_pred + K @ innov)
    IKH = np.eye(model.state_dim) - K @ H
    P = IKH @ P_pred @ IKH.T + K @ R @ K.T
    return x_j, 0.5 * (P + P.T)


def _ekf_pass(model, belief0, obs, n_iter):
    """Forward pass; returns filtered beliefs plus prediction records."""
    Q = np.diag(model.process_cov)
    mean, cov = belief0.mean.copy(), belief0.cov.copy()
    beliefs, preds = [], []
    for z in obs:
        t = z.time_index
        F = np.atleast_2d(model.transition_jacobian(mean, t))
        m_pred = _wrap_state(model, np.atleast_1d(model.transition_mean(mean, t)))
        P_pred = F @ cov @ F.T + Q
        mean, cov = _measurement_update(model, m_pred, P_pred, z, n_iter)
        preds.append((m_pred, P_pred, F))
        beliefs.append(GaussianBelief(mean.copy(), cov.copy()))
    return beliefs, preds


def ekf(model, belief0, obs):
    """Extended Kalman filter; masked observation components are excluded."""
    return _ekf_pass(model, belief0, obs, n_iter=1)[0]


def iekf(model, belief0, obs, n_iter):
    """Iterated EKF: the measurement update relinearizes n_iter times."""
    if n_iter < 1:
        raise ContractViolationError("n_iter must be >= 1")
    return _ekf_pass(model, belief0, obs, n_iter)[0]


def eks(model, belief0, obs):
    """RTS backward pass over the EKF forward pass."""
    beliefs, preds = _ekf_pass(model, belief0, obs, n_iter=1)
    return _rts_backward(model, beliefs, preds)


def _rts_backward(model, beliefs, preds):
    T = len(beliefs)
    out = [None] * T
    out[T - 1] = GaussianBelief(beliefs[T - 1].mean.copy(),
                                beliefs[T - 1].cov.copy())
    ang = sorted(model.angular_components)
    for t in range(T - 2, -1, -1):
        m_pred, P_pred, F = preds[t + 1]
        G = np.linalg.solve(P_pred.T, (beliefs[t].cov @ F.T).T).T
        dm = out[t + 1].mean - m_pred
        if ang:
            dm[ang] = wrap_angle(dm[ang])
        mean = _wrap_state(model, beliefs[t].mean + G @ dm)
        cov = beliefs[t].cov + G @ (out[t + 1].cov - P_pred) @ G.T
        out[t] = GaussianBelief(mean, 0.5 * (cov + cov.T))
    return out


def ieks(model, init_traj, obs, n_iter, belief0=None):
    """Iterated extended smoother: n_iter Gauss-Newton passes, each pass an
    affine RTS smoother linearized about the current nominal trajectory.

    Divergence (state norm above 1e6) flags the returned trajectory rather
    than raising so diverged runs flow into result tables.
    """
    nominal = np.array(init_traj.states if isinstance(init_traj, Trajectory)
                       else init_traj, dtype=float)
    T = len(obs)
    if nominal.shape[0] != T + 1:
        raise ContractViolationError("init_traj must have length T + 1")
    if belief0 is None:
        belief0 = GaussianBelief(nominal[0],
                                 0.01 * np.eye(model.state_dim))
    Q = np.diag(model.process_cov)
    ang = sorted(model.angular_components)
    ang_obs = sorted(model.angular_obs_components)
    diverged = False
    for _ in range(n_iter):
        mean, cov = belief0.mean.copy(), belief0.cov.copy()
        beliefs, preds = [], []
        for t, z in enumerate(obs, start=1):
            xbar_prev, xbar = nominal[t - 1], nominal[t]
            F = np.atleast_2d(model.transition_jacobian(xbar_prev, t))
            dm = mean - xbar_prev
            if ang:
                dm[ang] = wrap_angle(dm[ang])
            m_pred = _wrap_state(
                model,
                np.atleast_1d(model.transition_mean(xbar_prev, t)) + F @ dm)
            P_pred = F @ cov @ F.T + Q
            idx = np.flatnonzero(z.validity_mask)
            if idx.size:
                mean_fn, jac_fn = _observation_fns(model, xbar, z)
                H = np.atleast_2d(jac_fn(xbar))[idx]
                resid = z.values - np.atleast_1d(mean_fn(xbar))
                if ang_obs:
                    resid[ang_obs] = wrap_angle(resid[ang_obs])
                dx = m_pred - xbar
                if ang:
                    dx[ang] = wrap_angle(dx[ang])
                innov = resid[idx] - H @ dx
                R = np.diag(model.obs_cov[idx])
                S = H @ P_pred @ H.T + R
                chol, _ = _solve_innovation_cov(S)
                K = np.linalg.solve(chol.T,
                                    np.linalg.solve(chol, (P_pred @ H.T).T)).T
                mean = _wrap_state(model, m_pred + K @ innov)
                IKH = np.eye(model.state_dim) - K @ H
                cov = IKH @ P_pred @ IKH.T + K @ R @ K.T
                cov = 0.5 * (cov + cov.T)
            else:
                mean, cov = m_pred, P_pred
            preds.append((m_pred, P_pred, F))
            beliefs.append(GaussianBelief(mean.copy(), cov.copy()))
        smoothed = _rts_backward(model, beliefs, preds)
        new_nominal = np.vstack([nominal[0][None, :],
                                 [b.mean for b in smoothed]])
        nominal = new_nominal
        if not np.all(np.isfinite(nominal)) or \
                np.max(np.abs(nominal)) > DIVERGENCE_NORM:
            diverged = True
            break
    return Trajectory(nominal, diverged=diverged)


def stratified_resample(log_weights, rng):
    """Stratified resampling: one uniform per equal-probability stratum."""
    log_weights = np.asarray(log_weights, dtype=float)
    N = log_weights.shape[0]
    lse = logsumexp(log_weights)
    if not np.isfinite(lse):
        raise NumericalError("resampling degeneracy: weights not normalizable")
    w = np.exp(log_weights - lse)
    u = (np.arange(N) + rng.uniform(size=N)) / N
    idx = np.searchsorted(np.cumsum(w), u, side="left")
    return np.minimum(idx, N - 1)


def _point_estimate(model, X, weights=None):
    if weights is None:
        est = X.mean(axis=0)
    else:
        est = weights @ X
    for c in sorted(model.angular_components):
        est[c] = circular_mean(X[:, c], weights)
    return est


def particle_filter(model, x0, obs, num_particles, rng, init_cov_diag=None):
    """Bootstrap particle filter with stratified resampling at every step.

    Returns a PfOutput holding the pre-resampling weighted cloud of every
    step and the weighted-mean (MMSE) trajectory.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.shape[0]
    if init_cov_diag is None:
        X = np.tile(x0, (num_particles, 1))
    else:
        X = x0[None, :] + np.sqrt(np.asarray(init_cov_diag, dtype=float)) * \
            rng.standard_normal((num_particles, n))
        _wrap_cols(model, X)
    sets = []
    states = np.empty((len(obs) + 1, n))
    states[0] = x0
    resets = 0
    for t, z in enumerate(obs, start=1):
        X = transition_sample_batch(model, X, z.time_index, rng)
        logw = likelihood_logpdf_batch(model, X, z)
        lse = logsumexp(logw)
        if not np.isfinite(lse):
            log.warning("weight underflow at t=%d, resetting to uniform",
                        z.time_index)
            resets += 1
            logw = np.full(num_particles, -np.log(num_particles))
        else:
            logw = logw - lse
        sets.append(WeightedParticleSet(X.copy(), logw.copy()))
        states[t] = _point_estimate(model, X, np.exp(logw))
        X = X[stratified_resample(logw, rng)]
    mmse = Trajectory(states)
    return PfOutput(sets, mmse, x0, list(obs), resets)


def _wrap_cols(model, X):
    for c in sorted(model.angular_components):
        X[:, c] = wrap_angle(X[:, c])


def pf_map(pf_output, model):
    """Per-step MAP over the particle cloud: maximize the likelihood times
    the transition mixture over the previous weighted cloud."""
    x0, obs = pf_output.x0, pf_output.obs
    n = x0.shape[0]
    states = np.empty((len(obs) + 1, n))
    states[0] = x0
    prev_X = x0[None, :]
    prev_logw = np.zeros(1)
    for t, (z, wps) in enumerate(zip(obs, pf_output.sets), start=1):
        trans = transition_logpdf_pairs(model, prev_X, wps.particles,
                                        z.time_index)
        mix = logsumexp(trans + prev_logw[None, :], axis=1)
        lik = likelihood_logpdf_batch(model, wps.particles, z)
        states[t] = wps.particles[int(np.argmax(lik + mix))]
        prev_X, prev_logw = wps.particles, wps.log_weights
    return Trajectory(states)


def pf_map_seq(pf_output, model):
    """Viterbi decode over the per-step particle clouds (shared DP path)."""
    sets = [ParticleSet(wps.particles, z.time_index)
            for z, wps in zip(pf_output.obs, pf_output.sets)]
    hist = ParticleHistory(sets, pf_output.x0)
    traj, _ = decode_particle_history(hist, pf_output.obs, model)
    return traj


def stein_particle_filter(model, x0, obs, cfg, rng):
    """Per-step SVGD on the filtering score with an ancestor-mixture prior."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.shape[0]
    states = np.empty((len(obs) + 1, n))
    states[0] = x0
    prev_X = None
    sets = []
    for t, z in enumerate(obs, start=1):
        if prev_X is None:
            ancestors = x0[None, :]
            if cfg.init_policy == "propagate_sample":
                X = transition_sample_batch(
                    model, np.tile(x0, (cfg.num_particles, 1)),
                    z.time_index, rng)
            else:
                X = x0[None, :] + INITIAL_STD * rng.standard_normal(
                    (cfg.num_particles, n))
        else:
            ancestors = prev_X
            if cfg.init_policy == "propagate_sample":
                X = transition_sample_batch(model, prev_X, z.time_index, rng)
            elif cfg.init_policy == "propagate_mean":
                X = np.stack([model.transition_mean(xp, z.time_index)
                              for xp in prev_X])
            else:
                X = prev_X.copy()
        X = np.asarray(X, dtype=float)
        _wrap_cols(model, X)

        def score(Xc, _anc=ancestors, _z=z):
            return likelihood_grad_batch(model, Xc, _z) + \
                transition_grad_mixture(model, _anc, Xc, _z.time_index)

        X = evolve_particles(X, score, cfg, model.angular_components)
        sets.append(ParticleSet(X, z.time_index))
        states[t] = _point_estimate(model, X)
        prev_X = X
    return SpfOutput(sets, Trajectory(states), x0, list(obs))


def spf_map(spf_output, model):
    """PF-MAP scoring over SPF output with uniform previous-step weights."""
    x0, obs = spf_output.x0, spf_output.obs
    n = x0.shape[0]
    states = np.empty((len(obs) + 1, n))
    states[0] = x0
    prev_X = x0[None, :]
    for t, (z, ps) in enumerate(zip(obs, spf_output.sets), start=1):
        trans = transition_logpdf_pairs(model, prev_X, ps.particles,
                                        z.time_index)
        mix = logsumexp(trans, axis=1) - np.log(prev_X.shape[0])
        lik = likelihood_logpdf_batch(model, ps.particles, z)
        states[t] = ps.particles[int(np.argmax(lik + mix))]
        prev_X = ps.particles
    return Trajectory(states)
