"""Divided differences of the exponential function.

The reciprocal normalizer of the continuous categorical is the divided
difference of ``exp`` over the nodes ``(eta_1, ..., eta_{K-1}, 0)``, and
its derivatives are divided differences with repeated nodes.  Everything
here works on stacked node sets of shape ``(..., m)`` so that batches of
parameters (regression rows, simulation trials) are evaluated together.

Algorithm
---------
For the upper bidiagonal matrix ``Z`` with the nodes on its diagonal and
ones above it, ``exp(Z)[i, j]`` is the divided difference of ``exp`` over
nodes ``i..j``.  Nodes are shifted by their maximum and sorted, then
scaled by ``2**-s`` until their spread is at most ``TAYLOR_SPREAD``.  The
table of the scaled problem is filled from the series

    exp[w_i, ..., w_j] = exp(w_i) * sum_k h_k(w_i..w_j - w_i) / (j - i + k)!

(``h_k`` the complete homogeneous symmetric polynomial), whose terms are
all nonnegative because ``w_i`` is the smallest node of the cell.  The
table of the original nodes is recovered by ``s`` matrix squarings.  All
entries stay positive, so no step subtracts, and coincident nodes need no
special case.
"""

from __future__ import annotations

import math

import numpy as np

TAYLOR_SPREAD = 1.0
N_TERMS = 20


def _taylor_table(w: np.ndarray) -> np.ndarray:
    """Full divided-difference table for sorted nodes of small spread.

    ``w`` has shape ``(N, m)``; the result has shape ``(N, m, m)`` and is
    upper triangular.
    """
    n, m = w.shape
    inv_fact = np.array([1.0 / math.factorial(k) for k in range(m + N_TERMS + 1)])
    base = np.exp(w)
    table = np.zeros((n, m, m))
    idx = np.arange(m)
    table[:, idx, idx] = base
    # h[:, i, k] holds h_k of the offsets of nodes i..i+L from node i
    h = np.zeros((n, m, N_TERMS + 1))
    h[:, :, 0] = 1.0
    for L in range(1, m):
        width = m - L
        h = h[:, :width]
        d = w[:, L:] - w[:, :width]
        for k in range(1, N_TERMS + 1):
            h[:, :, k] += d * h[:, :, k - 1]
        table[:, idx[:width], idx[:width] + L] = base[:, :width] * (
            h @ inv_fact[L : L + N_TERMS + 1]
        )
    return table


def exp_divdiff_table(nodes) -> np.ndarray:
    """Full table of divided differences of ``exp`` for sorted shifted nodes.

    Returns ``(shift, table)`` with ``table[..., i, j] * exp(shift)`` the
    divided difference over sorted nodes ``i..j``.
    """
    z = np.asarray(nodes, dtype=float)
    if z.ndim == 0 or z.shape[-1] == 0:
        raise ValueError("need at least one node")
    if not np.all(np.isfinite(z)):
        raise ValueError("nodes must be finite")
    lead = z.shape[:-1]
    m = z.shape[-1]
    z2 = z.reshape(-1, m)
    shift = z2.max(axis=1)
    w = np.sort(z2 - shift[:, None], axis=1)
    spread = float((w[:, -1] - w[:, 0]).max()) if w.size else 0.0
    s = max(0, math.ceil(math.log2(spread / TAYLOR_SPREAD))) if spread > TAYLOR_SPREAD else 0
    table = _taylor_table(w / 2.0**s)
    if s:
        order = np.arange(m)
        # exp(x / 2**s) has divided differences scaled by 2**(-s * order)
        table *= 2.0 ** (-s * (order[None, :] - order[:, None]).clip(min=0))
        for _ in range(s):
            table = table @ table
    return shift.reshape(lead), table.reshape(lead + (m, m))


def log_exp_divdiff(nodes) -> np.ndarray:
    """Log of the divided difference of ``exp`` over the last axis of ``nodes``.

    Repeated nodes are allowed and give the confluent limit.  The result is
    finite for finite input since the divided difference of ``exp`` is
    strictly positive.
    """
    shift, table = exp_divdiff_table(nodes)
    return shift + np.log(table[..., 0, -1])


def exp_divdiff(nodes) -> np.ndarray:
    """Divided difference of ``exp``; overflows to ``inf`` like ``exp`` for large nodes."""
    with np.errstate(over="ignore"):
        return np.exp(log_exp_divdiff(nodes))
