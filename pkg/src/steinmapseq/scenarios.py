"""Benchmark scenario generators, model bindings, and RMSE metrics.

Three scenarios:
  a - 1D nonlinear growth dynamics with a squared (sign-ambiguous)
      observation.
  b - SE(2) unicycle with range/bearing measurements from four landmarks
      under unknown data association (equal-weight mixture likelihood).
  c - 2D range-only localization with a zero-velocity motion model and a
      scripted anchor-blocking schedule (masked measurements).

A linear-Gaussian diagnostic model ("lg") backs the closed-form oracle
tests. Generators are pure functions of (seed, horizon): the same seed
reproduces a dataset bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp

from .baselines import DifferentiableModelSpec
from .mapseq_dp import Trajectory
from .models import (
    ContractViolationError,
    ModelSpec,
    Observation,
    gaussian_transition_kit,
    wrap_angle,
)

_LOG_TWO_PI = float(np.log(2.0 * np.pi))

SCENARIO_DEFAULT_HORIZON = {"a": 100, "b": 630, "c": 1145, "lg": 50}


@dataclass
class ScenarioDataset:
    truth: Trajectory
    observations: List[Observation]
    model: ModelSpec
    diff_model: Optional[DifferentiableModelSpec]
    x0: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass
class AnchorMap:
    """Anchor positions plus (anchor_id, start_step, end_step) blocking
    windows; steps are 1-based and inclusive."""

    anchors: np.ndarray
    blocking_schedule: List[tuple] = field(default_factory=list)

    def __post_init__(self):
        self.anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))

    def mask_at(self, t):
        mask = np.ones(self.anchors.shape[0], dtype=bool)
        for aid, start, end in self.blocking_schedule:
            if start <= t <= end:
                mask[aid] = False
        return mask

    def validate(self, horizon):
        for aid, start, end in self.blocking_schedule:
            if not (1 <= start <= end <= horizon):
                raise ContractViolationError(
                    f"blocking window ({aid}, {start}, {end}) outside horizon")
        for t in range(1, horizon + 1):
            if self.mask_at(t).sum() < 2:
                raise ContractViolationError(
                    f"fewer than 2 anchors unblocked at step {t}")


def rmse(est, truth, angular_components=(), components=None):
    """sqrt(mean_t ||e_t||^2) over t = 1..T, wrapping angular differences.

    components restricts the error to a subset of state components (the
    position-only convention of the pose scenario).
    """
    est_states = est.states if isinstance(est, Trajectory) else np.asarray(est)
    truth_states = truth.states if isinstance(truth, Trajectory) else np.asarray(truth)
    if est_states.shape != truth_states.shape:
        raise ContractViolationError("trajectory shapes differ")
    e = est_states[1:] - truth_states[1:]
    ang = sorted(angular_components)
    if ang:
        e[:, ang] = wrap_angle(e[:, ang])
    if components is not None:
        e = e[:, list(components)]
    return float(np.sqrt(np.mean(np.sum(e * e, axis=1))))


# ---------------------------------------------------------------------------
# Scenario A: 1D nonlinear growth model, squared observation.
# ---------------------------------------------------------------------------

A_PROCESS_VAR = 5.0
A_OBS_VAR = 10.0


def _a_transition_mean(X, t):
    x = X[:, 0]
    m = 0.9 * x + 10.0 * x / (1.0 + x * x) + 8.0 * math.cos(1.2 * (t - 1))
    return m[:, None]


def make_scenario_a_model():
    kit = gaussian_transition_kit(_a_transition_mean, [A_PROCESS_VAR])
    log_norm = -0.5 * (_LOG_TWO_PI + math.log(A_OBS_VAR))

    def lik_logpdf_batch(X, z):
        if not z.validity_mask[0]:
            return np.zeros(X.shape[0])
        r = z.values[0] - 0.05 * X[:, 0] ** 2
        return log_norm - 0.5 * r * r / A_OBS_VAR

    def lik_grad_batch(X, z):
        if not z.validity_mask[0]:
            return np.zeros_like(X)
        x = X[:, 0]
        r = z.values[0] - 0.05 * x * x
        return (r / A_OBS_VAR * 0.1 * x)[:, None]

    model = ModelSpec(
        state_dim=1, obs_dim=1,
        likelihood_logpdf=lambda x, z: float(
            lik_logpdf_batch(np.asarray(x, dtype=float)[None, :], z)[0]),
        likelihood_grad=lambda x, z: lik_grad_batch(
            np.asarray(x, dtype=float)[None, :], z)[0],
        lik_logpdf_batch=lik_logpdf_batch,
        lik_grad_batch=lik_grad_batch,
        **kit,
    )

    def trans_jac(x, t):
        xx = x[0] * x[0]
        return np.array([[0.9 + 10.0 * (1.0 - xx) / (1.0 + xx) ** 2]])

    diff = DifferentiableModelSpec(
        state_dim=1, obs_dim=1,
        transition_mean=model.transition_mean,
        transition_jacobian=trans_jac,
        observation_mean=lambda x: np.array([0.05 * x[0] * x[0]]),
        observation_jacobian=lambda x: np.array([[0.1 * x[0]]]),
        process_cov=[A_PROCESS_VAR], obs_cov=[A_OBS_VAR],
    )
    return model, diff


def gen_scenario_a(seed, T=100):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    model, diff = make_scenario_a_model()
    states = np.empty((T + 1, 1))
    states[0, 0] = math.sqrt(A_PROCESS_VAR) * rng.standard_normal()
    obs = []
    for t in range(1, T + 1):
        states[t] = _a_transition_mean(states[t - 1][None, :], t)[0] + \
            math.sqrt(A_PROCESS_VAR) * rng.standard_normal()
        z = 0.05 * states[t, 0] ** 2 + math.sqrt(A_OBS_VAR) * rng.standard_normal()
        obs.append(Observation(np.array([z]), t))
    meta = dict(scenario="a", seed=seed, horizon=T,
                prior_cov_diag=[0.01], rmse_components=None,
                params=dict(process_var=A_PROCESS_VAR, obs_var=A_OBS_VAR))
    return ScenarioDataset(Trajectory(states), obs, model, diff,
                           states[0].copy(), meta)


# ---------------------------------------------------------------------------
# Scenario B: SE(2) unicycle, unknown data association over 4 landmarks.
# ---------------------------------------------------------------------------

B_DT = 0.1
B_PROCESS_VAR = ((0.05 * B_DT) ** 2, (0.05 * B_DT) ** 2, (0.035 * B_DT) ** 2)
B_SIGMA0 = (0.2 ** 2, 0.2 ** 2, 0.035 ** 2)
B_RANGE_VAR = 1.0
B_BEARING_VAR = 0.17 ** 2
B_LANDMARKS = np.array([[5.0, 5.0], [-5.0, 5.0], [-5.0, -5.0], [5.0, -5.0]])


def b_control_schedule(T):
    """Figure-eight controls: constant speed, turn rate flipping sign so the
    vehicle alternates left and right loops."""
    v = np.full(T + 1, 1.0)
    half_loop = 70
    t = np.arange(T + 1)
    omega = np.where(((t - 1) // half_loop) % 2 == 0, 0.9, -0.9)
    return v, omega


def _b_predicted_obs(X, landmarks):
    """Per-landmark predicted ranges and bearings for a particle batch."""
    dx = X[:, None, 0] - landmarks[None, :, 0]
    dy = X[:, None, 1] - landmarks[None, :, 1]
    d = np.sqrt(dx * dx + dy * dy)
    b = np.arctan2(dy, dx)
    return dx, dy, d, b


def make_scenario_b_model(T, landmarks=B_LANDMARKS):
    v, omega = b_control_schedule(T)
    var = np.array(B_PROCESS_VAR)
    L = landmarks.shape[0]
    log_prior_l = -math.log(L)
    log_norm_r = -0.5 * (_LOG_TWO_PI + math.log(B_RANGE_VAR))
    log_norm_b = -0.5 * (_LOG_TWO_PI + math.log(B_BEARING_VAR))

    def mean_fn(X, t):
        theta = X[:, 2] + omega[t] * B_DT
        return np.stack([X[:, 0] + v[t] * B_DT * np.cos(theta),
                         X[:, 1] + v[t] * B_DT * np.sin(theta),
                         theta], axis=1)

    kit = gaussian_transition_kit(mean_fn, var, angular=frozenset({2}))

    def _component_logliks(X, z):
        _, _, d, b = _b_predicted_obs(X, landmarks)
        lp = np.zeros((X.shape[0], L))
        if z.validity_mask[0]:
            rr = z.values[0] - d
            lp += log_norm_r - 0.5 * rr * rr / B_RANGE_VAR
        if z.validity_mask[1]:
            rb = wrap_angle(z.values[1] - b)
            lp += log_norm_b - 0.5 * rb * rb / B_BEARING_VAR
        return lp

    def lik_logpdf_batch(X, z):
        return logsumexp(_component_logliks(X, z), axis=1) + log_prior_l

    def lik_grad_batch(X, z):
        dx, dy, d, b = _b_predicted_obs(X, landmarks)
        lp = _component_logliks(X, z)
        w = np.exp(lp - lp.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        gx = np.zeros((X.shape[0], L))
        gy = np.zeros((X.shape[0], L))
        if z.validity_mask[0]:
            rr = (z.values[0] - d) / B_RANGE_VAR
            gx += rr * dx / d
            gy += rr * dy / d
        if z.validity_mask[1]:
            rb = wrap_angle(z.values[1] - b) / B_BEARING_VAR
            d2 = d * d
            gx += rb * (-dy / d2)
            gy += rb * (dx / d2)
        out = np.zeros_like(X)
        out[:, 0] = (w * gx).sum(axis=1)
        out[:, 1] = (w * gy).sum(axis=1)
        return out

    model = ModelSpec(
        state_dim=3, obs_dim=2,
        likelihood_logpdf=lambda x, z: float(
            lik_logpdf_batch(np.asarray(x, dtype=float)[None, :], z)[0]),
        likelihood_grad=lambda x, z: lik_grad_batch(
            np.asarray(x, dtype=float)[None, :], z)[0],
        lik_logpdf_batch=lik_logpdf_batch,
        lik_grad_batch=lik_grad_batch,
        angular_components=frozenset({2}),
        **kit,
    )

    def trans_jac(x, t):
        theta = x[2] + omega[t] * B_DT
        return np.array([
            [1.0, 0.0, -v[t] * B_DT * math.sin(theta)],
            [0.0, 1.0, v[t] * B_DT * math.cos(theta)],
            [0.0, 0.0, 1.0],
        ])

    def _landmark_obs_fns(l):
        def mean(x):
            dx, dy = x[0] - landmarks[l, 0], x[1] - landmarks[l, 1]
            return np.array([math.hypot(dx, dy), math.atan2(dy, dx)])

        def jac(x):
            dx, dy = x[0] - landmarks[l, 0], x[1] - landmarks[l, 1]
            d2 = dx * dx + dy * dy
            d = math.sqrt(d2)
            return np.array([[dx / d, dy / d, 0.0],
                             [-dy / d2, dx / d2, 0.0]])

        return mean, jac

    obs_fns = [_landmark_obs_fns(l) for l in range(L)]

    def select_hypothesis(x_pred, z):
        lp = _component_logliks(np.asarray(x_pred, dtype=float)[None, :], z)[0]
        return obs_fns[int(np.argmax(lp))]

    diff = DifferentiableModelSpec(
        state_dim=3, obs_dim=2,
        transition_mean=model.transition_mean,
        transition_jacobian=trans_jac,
        observation_mean=obs_fns[0][0],
        observation_jacobian=obs_fns[0][1],
        process_cov=var, obs_cov=[B_RANGE_VAR, B_BEARING_VAR],
        angular_components=frozenset({2}),
        angular_obs_components=frozenset({1}),
        select_hypothesis=select_hypothesis,
    )
    return model, diff


def gen_scenario_b(seed, T=630):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    model, diff = make_scenario_b_model(T)
    landmarks = B_LANDMARKS
    states = np.zeros((T + 1, 3))
    obs = []
    landmark_ids = np.empty(T + 1, dtype=np.int64)
    landmark_ids[0] = -1
    std = np.sqrt(np.array(B_PROCESS_VAR))
    for t in range(1, T + 1):
        m = model.transition_mean(states[t - 1], t)
        states[t] = m + std * rng.standard_normal(3)
        states[t, 2] = wrap_angle(states[t, 2])
        l = int(rng.integers(landmarks.shape[0]))
        landmark_ids[t] = l
        dx, dy = states[t, 0] - landmarks[l, 0], states[t, 1] - landmarks[l, 1]
        zr = math.hypot(dx, dy) + rng.standard_normal()
        zb = wrap_angle(math.atan2(dy, dx) +
                        math.sqrt(B_BEARING_VAR) * rng.standard_normal())
        obs.append(Observation(np.array([zr, zb]), t))
    v, omega = b_control_schedule(T)
    meta = dict(scenario="b", seed=seed, horizon=T,
                prior_cov_diag=list(B_SIGMA0), rmse_components=[0, 1],
                landmarks=landmarks.copy(), controls=(v, omega),
                landmark_ids=landmark_ids,
                params=dict(dt=B_DT, process_var=B_PROCESS_VAR,
                            range_var=B_RANGE_VAR, bearing_var=B_BEARING_VAR))
    return ScenarioDataset(Trajectory(states), obs, model, diff,
                           states[0].copy(), meta)


# ---------------------------------------------------------------------------
# Scenario C: range-only localization, zero-velocity model, blocked anchors.
# ---------------------------------------------------------------------------

C_PROCESS_VAR = ((1.0 * 0.1) ** 2, (1.0 * 0.1) ** 2)
C_RANGE_STD = 0.5
C_ARENA = 8.0
C_BLOCK_DURATIONS = (25, 50, 40, 40, 30, 35)  # steps at 10 Hz


def default_anchor_map(T):
    """Three corner anchors; anchor 0 blocked for six windows whose
    durations match the benchmark blocking periods."""
    anchors = np.array([[0.0, 0.0], [C_ARENA, 0.0], [0.0, C_ARENA]])
    schedule = []
    fractions = (0.12, 0.27, 0.42, 0.57, 0.72, 0.87)
    for frac, dur in zip(fractions, C_BLOCK_DURATIONS):
        start = max(1, int(round(frac * T)))
        end = min(T, start + dur - 1)
        if start <= end:
            schedule.append((0, start, end))
    return AnchorMap(anchors, schedule)


def make_scenario_c_model(anchors):
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    var = np.array(C_PROCESS_VAR)
    obs_var = C_RANGE_STD ** 2
    log_norm = -0.5 * (_LOG_TWO_PI + math.log(obs_var))

    kit = gaussian_transition_kit(lambda X, t: X, var)

    def _ranges(X):
        dx = X[:, None, 0] - anchors[None, :, 0]
        dy = X[:, None, 1] - anchors[None, :, 1]
        d = np.sqrt(dx * dx + dy * dy)
        return dx, dy, d

    def lik_logpdf_batch(X, z):
        _, _, d = _ranges(X)
        mask = z.validity_mask
        r = z.values[None, mask] - d[:, mask]
        return np.sum(log_norm - 0.5 * r * r / obs_var, axis=1)

    def lik_grad_batch(X, z):
        dx, dy, d = _ranges(X)
        mask = z.validity_mask
        r = (z.values[None, mask] - d[:, mask]) / obs_var
        dsafe = np.maximum(d[:, mask], 1e-12)
        out = np.zeros_like(X)
        out[:, 0] = np.sum(r * dx[:, mask] / dsafe, axis=1)
        out[:, 1] = np.sum(r * dy[:, mask] / dsafe, axis=1)
        return out

    model = ModelSpec(
        state_dim=2, obs_dim=anchors.shape[0],
        likelihood_logpdf=lambda x, z: float(
            lik_logpdf_batch(np.asarray(x, dtype=float)[None, :], z)[0]),
        likelihood_grad=lambda x, z: lik_grad_batch(
            np.asarray(x, dtype=float)[None, :], z)[0],
        lik_logpdf_batch=lik_logpdf_batch,
        lik_grad_batch=lik_grad_batch,
        **kit,
    )

    def obs_mean(x):
        return np.sqrt(np.sum((anchors - x[None, :]) ** 2, axis=1))

    def obs_jac(x):
        diff = x[None, :] - anchors
        d = np.maximum(np.sqrt(np.sum(diff * diff, axis=1)), 1e-12)
        return diff / d[:, None]

    diff_model = DifferentiableModelSpec(
        state_dim=2, obs_dim=anchors.shape[0],
        transition_mean=lambda x, t: x.copy(),
        transition_jacobian=lambda x, t: np.eye(2),
        observation_mean=obs_mean,
        observation_jacobian=obs_jac,
        process_cov=var, obs_cov=np.full(anchors.shape[0], obs_var),
    )
    return model, diff_model


def _lissajous_path(T):
    t_sec = np.arange(T + 1) * 0.1
    half = C_ARENA / 2.0
    x = half + 3.0 * np.sin(2.0 * np.pi * t_sec / 60.0 + 0.7)
    y = half + 3.0 * np.sin(2.0 * np.pi * t_sec / 45.0)
    return np.stack([x, y], axis=1)


def gen_scenario_c(seed, T=1145, anchor_map=None):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if anchor_map is None:
        anchor_map = default_anchor_map(T)
    anchor_map.validate(T)
    model, diff = make_scenario_c_model(anchor_map.anchors)
    states = _lissajous_path(T)
    warnings = []
    if np.any(states < 0.0) or np.any(states > C_ARENA):
        warnings.append("reference trajectory leaves the arena")
    obs = []
    blocked_steps = np.zeros(T + 1, dtype=bool)
    for t in range(1, T + 1):
        d = np.sqrt(np.sum((anchor_map.anchors - states[t][None, :]) ** 2,
                           axis=1))
        z = d + C_RANGE_STD * rng.standard_normal(anchor_map.anchors.shape[0])
        mask = anchor_map.mask_at(t)
        blocked_steps[t] = not mask.all()
        obs.append(Observation(z, t, validity_mask=mask))
    meta = dict(scenario="c", seed=seed, horizon=T,
                prior_cov_diag=[0.01, 0.01], rmse_components=None,
                anchor_map=anchor_map, blocked_steps=blocked_steps,
                warnings=warnings,
                params=dict(process_var=C_PROCESS_VAR,
                            range_std=C_RANGE_STD, arena=C_ARENA))
    return ScenarioDataset(Trajectory(states), obs, model, diff,
                           states[0].copy(), meta)


# ---------------------------------------------------------------------------
# Linear-Gaussian diagnostic model (closed-form oracles).
# ---------------------------------------------------------------------------

def make_linear_gaussian_model(a=0.9, q=1.0, c=1.0, r=1.0):
    kit = gaussian_transition_kit(lambda X, t: a * X, [q])
    log_norm = -0.5 * (_LOG_TWO_PI + math.log(r))

    def lik_logpdf_batch(X, z):
        if not z.validity_mask[0]:
            return np.zeros(X.shape[0])
        e = z.values[0] - c * X[:, 0]
        return log_norm - 0.5 * e * e / r

    def lik_grad_batch(X, z):
        if not z.validity_mask[0]:
            return np.zeros_like(X)
        e = z.values[0] - c * X[:, 0]
        return (c * e / r)[:, None]

    model = ModelSpec(
        state_dim=1, obs_dim=1,
        likelihood_logpdf=lambda x, z: float(
            lik_logpdf_batch(np.asarray(x, dtype=float)[None, :], z)[0]),
        likelihood_grad=lambda x, z: lik_grad_batch(
            np.asarray(x, dtype=float)[None, :], z)[0],
        lik_logpdf_batch=lik_logpdf_batch,
        lik_grad_batch=lik_grad_batch,
        **kit,
    )
    diff = DifferentiableModelSpec(
        state_dim=1, obs_dim=1,
        transition_mean=model.transition_mean,
        transition_jacobian=lambda x, t: np.array([[a]]),
        observation_mean=lambda x: np.array([c * x[0]]),
        observation_jacobian=lambda x: np.array([[c]]),
        process_cov=[q], obs_cov=[r],
    )
    return model, diff


def gen_linear_gaussian(seed, T=50, a=0.9, q=1.0, c=1.0, r=1.0):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    model, diff = make_linear_gaussian_model(a, q, c, r)
    states = np.zeros((T + 1, 1))
    obs = []
    for t in range(1, T + 1):
        states[t, 0] = a * states[t - 1, 0] + math.sqrt(q) * rng.standard_normal()
        obs.append(Observation(
            np.array([c * states[t, 0] + math.sqrt(r) * rng.standard_normal()]), t))
    meta = dict(scenario="lg", seed=seed, horizon=T,
                prior_cov_diag=[0.01], rmse_components=None,
                params=dict(a=a, q=q, c=c, r=r))
    return ScenarioDataset(Trajectory(states), obs, model, diff,
                           states[0].copy(), meta)


SCENARIO_GENERATORS = {
    "a": gen_scenario_a,
    "b": gen_scenario_b,
    "c": gen_scenario_c,
    "lg": gen_linear_gaussian,
}


def generate(scenario, seed, T=None):
    if scenario not in SCENARIO_GENERATORS:
        raise ContractViolationError(f"unknown scenario: {scenario}")
    if T is None:
        T = SCENARIO_DEFAULT_HORIZON[scenario]
    return SCENARIO_GENERATORS[scenario](seed, T)
