"""Pure-python/numpy implementation of the SVGD hot kernels.

Mirrors ``_speedups.pyx``: same signatures, same exactly-rounded summation
(via ``math.fsum``), so the assembled direction is independent of particle
storage order on both backends.
"""

import math

import numpy as np

_TWO_PI = 2.0 * np.pi


def _wrap(theta):
    w = np.mod(theta + np.pi, _TWO_PI) - np.pi
    return np.where(w >= np.pi, w - _TWO_PI, w)


def assemble_direction(K, S, diff, repulsion_scale, out):
    """out[i, c] = (1/N) * fsum_k(K[i,k]*S[k,c] + (scale*diff[i,k,c])*K[i,k]).

    The two per-source addends are fused before the exactly-rounded sum,
    mirroring the compiled kernel bit-for-bit.
    """
    N, n = S.shape
    terms = K[:, :, None] * S[None, :, :] + (repulsion_scale * diff) * K[:, :, None]
    for i in range(N):
        for c in range(n):
            out[i, c] = math.fsum(terms[i, :, c].tolist()) / N


def svgd_direction(X, S, angular, fixed_h, out):
    """Fused kernel-weighted update direction; returns the bandwidth used."""
    N, n = X.shape
    diff = X[:, None, :] - X[None, :, :]
    for c in range(n):
        if angular[c]:
            diff[:, :, c] = _wrap(diff[:, :, c])
    sq = (diff * diff).sum(axis=2)

    if fixed_h > 0.0:
        h = fixed_h
    elif N < 2:
        h = 1.0
    else:
        iu = np.triu_indices(N, k=1)
        med = float(np.median(np.sqrt(sq[iu])))
        h = med * med / math.log(N + 1) if med > 0.0 else 1.0

    K = np.exp(-sq / h)
    assemble_direction(K, S, diff, 2.0 / h, out)
    return h
