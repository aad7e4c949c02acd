"""Stein variational particle updates, stationary and sequential.

The stationary update moves a particle set along a kernel-weighted score
direction (attraction) plus a kernel-gradient term (repulsion). The
sequential variants build the per-time-step particle supports used by the
dynamic-programming decoder: at t=1 particles condition on the known
initial state, for t>1 the conditional score is averaged over the previous
particle set.

Every update is synchronous: all kernel and score evaluations use the
pre-update particle positions, and the per-particle reductions are
exactly rounded so results do not depend on particle storage order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _core
from .models import (
    ContractViolationError,
    ModelSpec,
    NumericalError,
    Observation,
    likelihood_grad_batch,
    transition_grad_marginal,
    transition_sample_batch,
    wrap_angle,
)

# Spread (std) of the t=1 particle jitter around the known initial state,
# used by init policies whose t=1 draw would otherwise be degenerate
# (every ancestor is the same known x0).
INITIAL_STD = 0.1


@dataclass
class ParticleSet:
    """Particles for one time step, one particle per row."""

    particles: np.ndarray
    time_index: int

    def __post_init__(self):
        self.particles = np.ascontiguousarray(self.particles, dtype=float)
        if self.particles.ndim != 2 or self.particles.shape[0] < 1:
            raise ContractViolationError("particles must be a non-empty 2-D array")
        if self.time_index < 0:
            raise ContractViolationError("time_index must be >= 0")

    @property
    def num_particles(self):
        return self.particles.shape[0]


@dataclass
class KernelSpec:
    """RBF kernel exp(-||x-y||^2 / h) with a bandwidth policy."""

    kind: str = "rbf"
    bandwidth_policy: str = "median_heuristic"
    bandwidth: Optional[float] = None

    def __post_init__(self):
        if self.kind != "rbf":
            raise ContractViolationError(f"unsupported kernel kind: {self.kind}")
        if self.bandwidth_policy not in ("fixed", "median_heuristic"):
            raise ContractViolationError(
                f"unsupported bandwidth policy: {self.bandwidth_policy}")
        if self.bandwidth_policy == "fixed":
            if self.bandwidth is None or self.bandwidth <= 0.0:
                raise ContractViolationError("fixed bandwidth must be > 0")

    @property
    def fixed_bandwidth(self):
        """Bandwidth for the backend call; -1 selects the median heuristic."""
        return self.bandwidth if self.bandwidth_policy == "fixed" else -1.0


@dataclass
class SvgdConfig:
    num_particles: int
    step_size: float = 0.001
    iterations: int = 1000
    kernel: KernelSpec = field(default_factory=KernelSpec)
    init_policy: str = "propagate_sample"

    def __post_init__(self):
        if self.num_particles < 1:
            raise ContractViolationError("num_particles must be >= 1")
        if self.step_size <= 0.0:
            raise ContractViolationError("step_size must be > 0")
        if self.iterations < 0:
            raise ContractViolationError("iterations must be >= 0")
        if self.init_policy not in ("propagate_sample", "propagate_mean",
                                    "carry_over"):
            raise ContractViolationError(
                f"unknown init_policy: {self.init_policy}")


def rbf_kernel(x, y, h):
    """exp(-||x - y||^2 / h); symmetric, equals 1 iff x == y."""
    if h <= 0.0:
        raise ContractViolationError("bandwidth must be > 0")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return float(np.exp(-np.dot(d, d) / h))


def rbf_kernel_grad(x, y, h):
    """Gradient of the RBF kernel with respect to its second argument."""
    if h <= 0.0:
        raise ContractViolationError("bandwidth must be > 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    d = x - y
    return (2.0 / h) * d * float(np.exp(-np.dot(d, d) / h))


def median_bandwidth(ps):
    """h = med^2 / ln(N+1) from the median pairwise distance (1.0 if degenerate)."""
    X = ps.particles if isinstance(ps, ParticleSet) else np.asarray(ps, dtype=float)
    N = X.shape[0]
    if N < 2:
        return 1.0
    diff = X[:, None, :] - X[None, :, :]
    sq = (diff * diff).sum(axis=2)
    med = float(np.median(np.sqrt(sq[np.triu_indices(N, k=1)])))
    if med == 0.0:
        return 1.0
    return med * med / math.log(N + 1)


def _angular_mask(n, angular_components):
    mask = np.zeros(n, dtype=np.uint8)
    for c in angular_components:
        mask[c] = 1
    return mask


def _validate_scores(S):
    if not np.all(np.isfinite(S)):
        bad = int(np.flatnonzero(~np.isfinite(S).all(axis=1))[0])
        raise NumericalError(f"non-finite score for particle {bad}")


def update_direction(X, scores, kernel=None, angular_components=()):
    """Kernel-weighted update direction for a particle matrix.

    Returns (direction, bandwidth). Scores are the per-particle gradients
    of the target log density, evaluated at the pre-update positions.
    """
    kernel = kernel or KernelSpec()
    X = np.ascontiguousarray(X, dtype=float)
    S = np.ascontiguousarray(scores, dtype=float)
    out = np.empty_like(X)
    mask = _angular_mask(X.shape[1], angular_components)
    h = _core.svgd_direction(X, S, mask, kernel.fixed_bandwidth, out)
    return out, h


def svgd_step(ps, score, cfg, angular_components=()):
    """One synchronous update of every particle by step_size * direction."""
    X = ps.particles
    S = np.ascontiguousarray(np.stack([np.atleast_1d(score(x)) for x in X]),
                             dtype=float)
    _validate_scores(S)
    direction, _ = update_direction(X, S, cfg.kernel, angular_components)
    X_new = X + cfg.step_size * direction
    ang = sorted(angular_components)
    if ang:
        X_new[:, ang] = wrap_angle(X_new[:, ang])
    return ParticleSet(X_new, ps.time_index)


def run_svgd(ps, score, cfg, angular_components=()):
    """cfg.iterations synchronous svgd_step updates."""
    for _ in range(cfg.iterations):
        ps = svgd_step(ps, score, cfg, angular_components)
    return ps


def evolve_particles(X, batch_score, cfg, angular_components=()):
    """Run cfg.iterations synchronous updates with a batched score function."""
    X = np.ascontiguousarray(X, dtype=float)
    out = np.empty_like(X)
    mask = _angular_mask(X.shape[1], angular_components)
    fixed_h = cfg.kernel.fixed_bandwidth
    ang = sorted(angular_components)
    step = cfg.step_size
    for _ in range(cfg.iterations):
        S = np.ascontiguousarray(batch_score(X), dtype=float)
        _validate_scores(S)
        _core.svgd_direction(X, S, mask, fixed_h, out)
        X = X + step * out
        if ang:
            X[:, ang] = wrap_angle(X[:, ang])
    return X


def initial_particle_update(z1, x0, model, cfg, rng):
    """t=1 particle support: initialize per cfg.init_policy from the known
    initial state, then run SVGD on the conditional score
    grad log p(z_1, x | x_0).

    propagate_sample draws from the transition prior p(x_1 | x_0), which
    keeps the starting residuals on the process-noise scale; the other
    policies would collapse every particle onto one point at t=1, so they
    jitter around their target with INITIAL_STD instead.
    """
    x0 = np.asarray(x0, dtype=float)
    t = z1.time_index
    N = cfg.num_particles
    if cfg.init_policy == "propagate_sample":
        X = transition_sample_batch(model, np.tile(x0, (N, 1)), t, rng)
    elif cfg.init_policy == "propagate_mean":
        if model.transition_mean is None:
            raise ContractViolationError(
                "propagate_mean requires the model to define transition_mean")
        X = model.transition_mean(x0, t)[None, :] + \
            INITIAL_STD * rng.standard_normal((N, model.state_dim))
    else:  # carry_over
        X = x0[None, :] + INITIAL_STD * rng.standard_normal(
            (N, model.state_dim))
    X = np.asarray(X, dtype=float)
    ang = sorted(model.angular_components)
    if ang:
        X[:, ang] = wrap_angle(X[:, ang])
    x_prev = np.ascontiguousarray(x0[None, :])

    def score(Xc):
        return likelihood_grad_batch(model, Xc, z1) + \
            transition_grad_marginal(model, x_prev, Xc, t)

    X = evolve_particles(X, score, cfg, model.angular_components)
    return ParticleSet(X, time_index=t)


def sequential_particle_update(prev, z_t, model, cfg, rng):
    """t>1 particle support: initialize from the previous set per the
    configured policy, then run SVGD on the ancestor-averaged conditional
    score (1/N) sum_j grad log p(z_t, x | x_{t-1}^j)."""
    t = z_t.time_index
    if t != prev.time_index + 1:
        raise ContractViolationError(
            f"observation time {t} does not follow particle set time "
            f"{prev.time_index}")
    X_prev = prev.particles

    if cfg.init_policy == "propagate_sample":
        X = transition_sample_batch(model, X_prev, t, rng)
    elif cfg.init_policy == "propagate_mean":
        if model.transition_mean is None:
            raise ContractViolationError(
                "propagate_mean requires the model to define transition_mean")
        X = np.stack([model.transition_mean(xp, t) for xp in X_prev])
    else:  # carry_over
        X = X_prev.copy()
    ang = sorted(model.angular_components)
    if ang:
        X = np.asarray(X, dtype=float)
        X[:, ang] = wrap_angle(X[:, ang])

    def score(Xc):
        return likelihood_grad_batch(model, Xc, z_t) + \
            transition_grad_marginal(model, X_prev, Xc, t)

    X = evolve_particles(X, score, cfg, model.angular_components)
    return ParticleSet(X, time_index=t)
