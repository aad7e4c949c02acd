"""Viterbi-style dynamic programming over per-step particle supports.

The forward recursion accumulates, for every particle at time t, the best
trajectory score reachable through any particle at time t-1 plus a
backpointer; backtracking reconstructs the globally optimal path over the
discrete supports. A brute-force path enumerator serves as the
independent oracle, and a Monte Carlo estimator of the small-variance
ELBO surrogate supports the score-equivalence checks.

Accumulation order is pinned so the DP score and the brute-force score
agree bit-for-bit: each step adds the transition term to the running
score first, then the likelihood term.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .models import (
    ContractViolationError,
    NumericalError,
    likelihood_logpdf_batch,
    log_joint_step,
    transition_logpdf_pairs,
    transition_logpdf_rows,
    wrap_angle,
)
from .svgd import ParticleSet, initial_particle_update, sequential_particle_update

BRUTE_FORCE_PATH_LIMIT = 1_000_000


class DecodeFailureError(RuntimeError):
    """Every admissible path has score -inf; no trajectory can be decoded."""


@dataclass
class ParticleHistory:
    """Per-time-step particle sets for t = 1..T plus the known initial state."""

    sets: List[ParticleSet]
    x0: np.ndarray

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if not self.sets:
            raise ContractViolationError("particle history must be non-empty")
        n = self.sets[0].particles.shape
        for ps in self.sets:
            if ps.particles.shape != n:
                raise ContractViolationError(
                    "all particle sets must share num_particles and state_dim")

    @property
    def horizon(self):
        return len(self.sets)

    @property
    def num_particles(self):
        return self.sets[0].num_particles


@dataclass
class DpTables:
    """Accumulated scores and backpointers; row t-1 holds time step t.

    backpointers[0] is unused. dead lists (t, i) entries whose incoming
    candidates were all -inf (the backpointer is pinned to index 0).
    """

    scores: np.ndarray
    backpointers: np.ndarray
    dead: List[tuple] = field(default_factory=list)


@dataclass
class Trajectory:
    """A time-indexed state sequence for t = 0..T with its accumulated score."""

    states: np.ndarray
    score: float = float("nan")
    diverged: bool = False

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))

    @property
    def horizon(self):
        return self.states.shape[0] - 1


def init_scores(ps1, x0, z1, model):
    """phi_1(i) = log p(z_1, x_1^i | x_0) for every particle."""
    x0 = np.asarray(x0, dtype=float)
    lik = likelihood_logpdf_batch(model, ps1.particles, z1)
    trans = transition_logpdf_pairs(
        model, x0[None, :], ps1.particles, z1.time_index)[:, 0]
    return lik + trans


def forward_step(phi_prev, prev, cur, z_t, model, diagnostics=None):
    """One forward-recursion step; returns (phi_t, psi_t).

    psi_t(i) maximizes transition score + accumulated score over previous
    particles (ties to the lowest index); phi_t(i) adds the likelihood of
    the current observation on top.
    """
    phi_prev = np.asarray(phi_prev, dtype=float)
    if phi_prev.shape[0] != prev.num_particles:
        raise ContractViolationError("phi_prev length must match prev particles")
    M = transition_logpdf_pairs(model, prev.particles, cur.particles,
                                z_t.time_index)
    cand = M + phi_prev[None, :]
    psi = np.argmax(cand, axis=1)
    best = cand[np.arange(cand.shape[0]), psi]
    lik = likelihood_logpdf_batch(model, cur.particles, z_t)
    phi = lik + best
    if diagnostics is not None:
        for i in np.flatnonzero(np.isneginf(best)):
            diagnostics.append((z_t.time_index, int(i)))
    return phi, psi.astype(np.int64)


def backtrack(tables, hist):
    """Trace the optimal path through the backpointer table."""
    T = hist.horizon
    phi_T = tables.scores[T - 1]
    if np.all(np.isneginf(phi_T)):
        raise DecodeFailureError("all final-step scores are -inf")
    idx = np.empty(T, dtype=np.int64)
    idx[T - 1] = int(np.argmax(phi_T))
    for t in range(T - 2, -1, -1):
        idx[t] = tables.backpointers[t + 1, idx[t + 1]]
    states = np.empty((T + 1, hist.x0.shape[0]))
    states[0] = hist.x0
    for t in range(T):
        states[t + 1] = hist.sets[t].particles[idx[t]]
    return Trajectory(states, score=float(phi_T[idx[T - 1]]))


def brute_force_map(hist, obs, model):
    """Exhaustively score every index tuple over the particle supports.

    Ties go to the lexicographically smallest tuple. Refuses when the
    number of paths exceeds BRUTE_FORCE_PATH_LIMIT.
    """
    N = hist.num_particles
    T = hist.horizon
    if N ** T > BRUTE_FORCE_PATH_LIMIT:
        raise ValueError(
            f"brute force refused: {N}^{T} paths exceeds the "
            f"{BRUTE_FORCE_PATH_LIMIT} bound")
    if len(obs) != T:
        raise ContractViolationError("observation count must equal the horizon")

    acc = init_scores(hist.sets[0], hist.x0, obs[0], model)
    for t in range(2, T + 1):
        z = obs[t - 1]
        trans = transition_logpdf_pairs(
            model, hist.sets[t - 2].particles, hist.sets[t - 1].particles,
            z.time_index)
        lik = likelihood_logpdf_batch(model, hist.sets[t - 1].particles, z)
        # acc[j_1 .. j_{t-1}] + trans[j_{t-1} -> j_t] + lik[j_t]
        acc = (acc[..., None] + trans.T) + lik
    flat = int(np.argmax(acc))
    score = float(acc.reshape(-1)[flat])
    if np.isneginf(score):
        raise DecodeFailureError("all path scores are -inf")
    idx = np.unravel_index(flat, acc.shape)
    states = np.empty((T + 1, hist.x0.shape[0]))
    states[0] = hist.x0
    for t in range(T):
        states[t + 1] = hist.sets[t].particles[idx[t]]
    return Trajectory(states, score=score)


def stein_map_seq(model, x0, obs, cfg, rng):
    """Full pipeline: per-step particle updates interleaved with the forward
    recursion, then backtracking.

    Returns (trajectory, particle_history, dp_tables).
    """
    if not obs:
        raise ContractViolationError("observation sequence must be non-empty")
    x0 = np.asarray(x0, dtype=float)
    T = len(obs)
    N = cfg.num_particles

    scores = np.empty((T, N))
    pointers = np.zeros((T, N), dtype=np.int64)
    dead = []

    try:
        ps = initial_particle_update(obs[0], x0, model, cfg, rng)
    except NumericalError as e:
        raise NumericalError(f"SVGD failed at t=1: {e}") from e
    sets = [ps]
    scores[0] = init_scores(ps, x0, obs[0], model)

    for t in range(2, T + 1):
        z = obs[t - 1]
        try:
            ps = sequential_particle_update(sets[-1], z, model, cfg, rng)
        except NumericalError as e:
            raise NumericalError(f"SVGD failed at t={t}: {e}") from e
        phi, psi = forward_step(scores[t - 2], sets[-1], ps, z, model,
                                diagnostics=dead)
        scores[t - 1] = phi
        pointers[t - 1] = psi
        sets.append(ps)

    tables = DpTables(scores, pointers, dead)
    hist = ParticleHistory(sets, x0)
    return backtrack(tables, hist), hist, tables


def decode_particle_history(hist, obs, model):
    """Run the forward recursion and backtracking over a fixed history.

    Shared by the full pipeline and the particle-filter MAP-sequence
    baseline; returns (trajectory, tables).
    """
    T = hist.horizon
    if len(obs) != T:
        raise ContractViolationError("observation count must equal the horizon")
    N = hist.num_particles
    scores = np.empty((T, N))
    pointers = np.zeros((T, N), dtype=np.int64)
    dead = []
    scores[0] = init_scores(hist.sets[0], hist.x0, obs[0], model)
    for t in range(2, T + 1):
        scores[t - 1], pointers[t - 1] = forward_step(
            scores[t - 2], hist.sets[t - 2], hist.sets[t - 1], obs[t - 1],
            model, diagnostics=dead)
    tables = DpTables(scores, pointers, dead)
    return backtrack(tables, hist), tables


def trajectory_score(model, states, obs, prior_logpdf=None):
    """J(s) = sum_t log p(z_t, s_t | s_{t-1}), optionally plus log p(s_0).

    Accumulated in the same order as the forward recursion so the result
    matches decoded scores bit-for-bit on the same path.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    total = 0.0
    for t, z in enumerate(obs, start=1):
        total = total + log_joint_step(model, states[t - 1], states[t], z)
    if prior_logpdf is not None:
        total = total + float(prior_logpdf(states[0][None, :])[0])
    return total


def elbo_epsilon_score(s, obs, model, eps, n_quad, rng, prior_logpdf=None):
    """Monte Carlo estimate of the small-variance ELBO surrogate of a path.

    Each state s_t is jittered by N(0, eps*I); the estimate averages the
    per-draw sums of step log joints (the Gaussian entropy term, constant
    in s, is omitted). With prior_logpdf the E[log p(x_0)] term is included;
    by default it is omitted, matching the decoder's score convention.
    """
    if eps <= 0.0:
        raise ContractViolationError("eps must be > 0")
    states = s.states if isinstance(s, Trajectory) else np.atleast_2d(
        np.asarray(s, dtype=float))
    T = len(obs)
    if states.shape[0] != T + 1:
        raise ContractViolationError("trajectory length must be T + 1")
    draws = states[None, :, :] + np.sqrt(eps) * rng.standard_normal(
        (n_quad, states.shape[0], states.shape[1]))
    ang = sorted(model.angular_components)
    if ang:
        draws[:, :, ang] = wrap_angle(draws[:, :, ang])
    acc = np.zeros(n_quad)
    for t, z in enumerate(obs, start=1):
        acc += likelihood_logpdf_batch(model, draws[:, t, :], z)
        acc += transition_logpdf_rows(model, draws[:, t - 1, :], draws[:, t, :],
                                      z.time_index)
    if prior_logpdf is not None:
        acc += prior_logpdf(draws[:, 0, :])
    return float(acc.mean())


def dump_dp_tables(tables, hist, out_dir):
    """CSV dump of the score/backpointer tables and the particle supports."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "dp_tables.csv"), "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "i", "score", "backpointer"])
        for t in range(tables.scores.shape[0]):
            for i in range(tables.scores.shape[1]):
                w.writerow([t + 1, i, format(tables.scores[t, i], ".17g"),
                            int(tables.backpointers[t, i])])
    n = hist.x0.shape[0]
    with open(os.path.join(out_dir, "particles.csv"), "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "i"] + [f"x{c}" for c in range(n)])
        for t, ps in enumerate(hist.sets, start=1):
            for i, row in enumerate(ps.particles):
                w.writerow([t, i] + [format(v, ".17g") for v in row])
