"""Rejection samplers for the continuous categorical.

All three samplers propose from independent continuous Bernoulli (CB)
coordinates and differ in what they do with a proposal:

* naive: accept when the ``K-1`` draws (against ``lambda_K``) sum to at most one;
* ordered: draw against the largest ``lambda`` in decreasing order and
  reject as soon as the running sum passes one;
* permutation: sort the proposal into the ordered simplex and accept with
  a probability that corrects for the permutation.

Stream convention
-----------------
Every proposal consumes a fixed block of uniforms from the generator,
``K-1`` for naive/ordered and ``K`` for permutation (the last one decides
acceptance), whether or not early rejection skips part of it.  Blocks are
drawn in chunks whose size depends only on how many samples have been
accepted so far.  Hence the ordered sampler with reordering disabled sees
exactly the naive sampler's stream and returns the same draws, and a fixed
seed always reproduces the same batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import MeanParams, NaturalParams, SimplexPoint, as_natural, full_nodes, log_normalizer_array
from .errors import BudgetExceededError, CCError

DEFAULT_BUDGET = 10**7
MAX_CHUNK = 1 << 16
SERIES_THETA = 2e-6
SAMPLERS = ("naive", "ordered", "permutation")


# --------------------------------------------------------------------------
# continuous Bernoulli primitive
# --------------------------------------------------------------------------


def cb_natural(lam):
    """Natural parameter ``log(lam / (1 - lam))`` of a CB."""
    lam = np.asarray(lam, dtype=float)
    return np.log(lam) - np.log1p(-lam)


def _log_cb_arg(u, theta):
    """``log(1 + u * (exp(theta) - 1))`` without overflow or cancellation."""
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        y = u * np.expm1(np.minimum(theta, 700.0))
        out = np.log1p(y)
        # near 1 + y = 0 the sum (1 - u) + u exp(theta) is exact-ish
        low = y < -0.5
        if np.any(low):
            out = np.where(low, np.log((1.0 - u) + u * np.exp(theta)), out)
        high = theta > 700.0
        if np.any(high):
            out = np.where(high, theta + np.log(u + (1.0 - u) * np.exp(-theta)), out)
    return out


def cb_icdf_theta(u, theta):
    """Inverse CDF of the CB with density proportional to ``exp(theta * x)``."""
    u, theta = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(theta, dtype=float))
    small = np.abs(theta) < SERIES_THETA
    safe = np.where(small, 1.0, theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = _log_cb_arg(u, safe) / safe
    if np.any(small):
        t = theta
        u2, u3 = u * u, u * u * u
        series = (
            u
            + t * (u - u2) / 2.0
            + t * t * (u / 6.0 - u2 / 2.0 + u3 / 3.0)
            + t**3 * (u / 24.0 - 7.0 * u2 / 24.0 + u3 / 2.0 - u2 * u2 / 4.0)
        )
        x = np.where(small, series, x)
    return np.clip(x, 0.0, 1.0)


def cb_icdf_dtheta(u, theta):
    """Derivative of :func:`cb_icdf_theta` in ``theta`` at fixed ``u``."""
    u, theta = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(theta, dtype=float))
    small = np.abs(theta) < 1e-4
    safe = np.where(small, 1.0, theta)
    x = cb_icdf_theta(u, safe)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # d/dtheta log(1 + u(e^theta - 1)) = u / (u + (1 - u) e^-theta)
        dg = u / (u + (1.0 - u) * np.exp(-safe))
        d = (dg - x) / safe
    if np.any(small):
        t = theta
        u2, u3 = u * u, u * u * u
        series = (
            (u - u2) / 2.0
            + 2.0 * t * (u / 6.0 - u2 / 2.0 + u3 / 3.0)
            + 3.0 * t * t * (u / 24.0 - 7.0 * u2 / 24.0 + u3 / 2.0 - u2 * u2 / 4.0)
        )
        d = np.where(small, series, d)
    return d


def cb_inverse_cdf(u, lam):
    """Inverse CDF of ``CB(lam)``, density proportional to ``lam**x (1 - lam)**(1 - x)``."""
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any((u < 0) | (u > 1)) or not np.all(np.isfinite(u)):
        raise CCError("u must lie in [0, 1]")
    if np.any((lam <= 0) | (lam >= 1)) or not np.all(np.isfinite(lam)):
        raise CCError("lam must lie in (0, 1)")
    out = cb_icdf_theta(u, cb_natural(lam))
    return float(out) if out.ndim == 0 else out


def cb_cdf(x, lam):
    """CDF of ``CB(lam)``."""
    x = np.asarray(x, dtype=float)
    theta = cb_natural(lam)
    # expm1 keeps the ratio accurate for small theta; only theta -> 0 needs the limit
    small = np.abs(theta) < 1e-200
    safe = np.where(small, 1.0, theta)
    neg = -np.abs(safe)
    # for theta > 0 use the mirror image 1 - F(1 - x | -theta), which cannot overflow
    xs = np.where(safe > 0, 1.0 - x, x)
    ratio = np.expm1(neg * xs) / np.expm1(neg)
    out = np.where(small, x, np.where(safe > 0, 1.0 - ratio, ratio))
    return float(out) if out.ndim == 0 else out


def log_cb_normalizer(theta):
    """``log(theta / (exp(theta) - 1))``, the log normalizer of a CB, limit 0 at 0."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < 1e-8
    safe = np.where(small, 1.0, theta)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        pos = np.log(np.abs(safe)) - safe - np.log1p(-np.exp(-safe))
        neg = np.log(np.abs(safe)) - np.log1p(-np.exp(safe))
    out = np.where(safe > 0, pos, neg)
    return np.where(small, -theta / 2.0 + theta * theta / 24.0, out)


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleBatch:
    """Accepted draws with the number of proposals each one took.

    ``points`` has shape ``(n, K)``; ``proposals[k]`` counts the proposals
    between the previous acceptance and acceptance ``k`` inclusive.
    """

    points: np.ndarray
    proposals: np.ndarray
    seed: int | None = None
    method: str = ""
    params: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def total_proposals(self) -> int:
        return int(self.proposals.sum())

    @property
    def acceptance_rate(self) -> float:
        return self.n / self.total_proposals

    def simplex_points(self) -> list[SimplexPoint]:
        return [SimplexPoint(p) for p in self.points]


def _generator(rng) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    if rng is None:
        seed = int(np.random.SeedSequence().entropy % 2**64)
    else:
        seed = int(rng)
    return np.random.default_rng(seed), seed


def _run_rejection(propose, width: int, n: int, rng, budget: int, name: str, params) -> tuple:
    """Drive a chunked rejection loop.

    ``propose(U)`` maps a ``(rows, width)`` block of uniforms to
    ``(accepted_mask, points)`` where ``points`` are the accepted rows.
    Returns ``(points, proposals, extras)`` where ``extras`` are the
    accepted uniform rows.
    """
    if n < 1:
        raise CCError("n must be at least 1")
    if budget < 1:
        raise CCError("budget must be at least 1")
    pts, props, uni = [], [], []
    accepted = 0
    proposed = 0
    since_last = 0
    while accepted < n:
        rate = (accepted + 1) / (proposed + 2)
        rows = int(min(MAX_CHUNK, max(64, math.ceil(1.2 * (n - accepted) / rate))))
        U = rng.random((rows, width))
        mask, points = propose(U)
        idx = np.flatnonzero(mask)
        if idx.size:
            gaps = np.diff(np.concatenate([[-1], idx]))
            gaps[0] += since_last
            if np.any(gaps > budget):
                raise BudgetExceededError(name, budget, params, accepted)
            take = min(idx.size, n - accepted)
            pts.append(points[:take])
            props.append(gaps[:take])
            uni.append(U[idx[:take]])
            accepted += take
            since_last = rows - 1 - idx[take - 1]
        else:
            since_last += rows
        proposed += rows
        if since_last > budget and accepted < n:
            raise BudgetExceededError(name, budget, params, accepted)
    return np.concatenate(pts), np.concatenate(props).astype(np.int64), np.concatenate(uni)


# --------------------------------------------------------------------------
# naive / ordered
# --------------------------------------------------------------------------


def _cb_rejection(theta: np.ndarray, order: np.ndarray, ref: int, K: int, early: bool):
    """Proposal step shared by the naive and ordered samplers.

    Column ``j`` of the uniform block drives component ``order[j]`` with CB
    natural parameter ``theta[j]``; component ``ref`` takes the remainder.
    """

    def propose(U):
        rows = U.shape[0]
        x = np.zeros((rows, K - 1))
        c = np.zeros(rows)
        alive = np.ones(rows, dtype=bool)
        for j in range(K - 1):
            if early:
                live = np.flatnonzero(alive)
                xj = cb_icdf_theta(U[live, j], theta[j])
                x[live, j] = xj
                c[live] += xj
                alive[live] = c[live] <= 1.0
            else:
                x[:, j] = cb_icdf_theta(U[:, j], theta[j])
                c += x[:, j]
        mask = alive if early else c <= 1.0
        pts = np.zeros((int(mask.sum()), K))
        pts[:, order] = x[mask]
        pts[:, ref] = np.maximum(1.0 - c[mask], 0.0)
        return mask, pts

    return propose


def sample_naive(eta, n: int, rng=None, budget: int = DEFAULT_BUDGET) -> SampleBatch:
    """Independent CB draws against ``lambda_K``, rejected off the simplex."""
    eta = as_natural(eta)
    K = eta.K
    gen, seed = _generator(rng)
    propose = _cb_rejection(eta.eta, np.arange(K - 1), K - 1, K, early=False)
    pts, props, _ = _run_rejection(propose, K - 1, n, gen, budget, "naive", eta.eta)
    return SampleBatch(pts, props, seed, "naive", eta.eta)


def ordering(eta_full: np.ndarray) -> tuple[int, np.ndarray]:
    """Reference index (largest lambda) and the other indices by decreasing lambda.

    Ties keep their original order.
    """
    perm = np.argsort(-eta_full, kind="stable")
    return int(perm[0]), perm[1:]


def sample_ordered(params, n: int, rng=None, budget: int = DEFAULT_BUDGET, reorder: bool = True) -> SampleBatch:
    """Draw against the largest ``lambda`` in decreasing order with early rejection.

    With ``reorder=False`` the reference is ``lambda_K`` and the order is
    ``1..K-1``, which reproduces :func:`sample_naive` draw for draw.
    """
    eta = as_natural(params)
    K = eta.K
    z = full_nodes(eta.eta)
    if reorder:
        ref, order = ordering(z)
    else:
        ref, order = K - 1, np.arange(K - 1)
    theta = z[order] - z[ref]
    gen, seed = _generator(rng)
    propose = _cb_rejection(theta, order, ref, K, early=True)
    pts, props, _ = _run_rejection(propose, K - 1, n, gen, budget, "ordered", eta.eta)
    return SampleBatch(pts, props, seed, "ordered", eta.eta)


# --------------------------------------------------------------------------
# permutation sampler
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PermutationSetup:
    """Natural parameter of the ordered-simplex problem, ``eta_tilde = B^{-T} eta``.

    ``B`` is the lower-triangular matrix of ones, so ``eta_tilde`` holds
    consecutive differences of ``eta`` and ``B^T eta_tilde`` (suffix sums)
    recovers ``eta``.
    """

    eta_tilde: np.ndarray

    @classmethod
    def from_eta(cls, eta) -> "PermutationSetup":
        eta = np.asarray(as_natural(eta).eta)
        return cls(np.append(eta[:-1] - eta[1:], eta[-1]))

    def to_eta(self) -> np.ndarray:
        return np.cumsum(self.eta_tilde[::-1])[::-1]


def log_kappa(eta_tilde: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Log rejection constant for each sorting permutation (rows of ``sigma``).

    The exponent ``(eta_tilde - P^{-T} eta_tilde) . y`` is linear, so its
    maximum over the ordered simplex sits at one of the vertices
    ``0, e_{K-1}, e_{K-1} + e_{K-2}, ...``: the largest suffix sum (or 0).
    """
    g = eta_tilde - eta_tilde[sigma]
    suffix = np.cumsum(g[..., ::-1], axis=-1)
    return np.maximum(suffix.max(axis=-1), 0.0)


def _permutation_propose(eta_tilde: np.ndarray, K: int, debug: bool):
    def propose(U):
        y_prop = cb_icdf_theta(U[:, : K - 1], eta_tilde)
        sigma = np.argsort(y_prop, axis=1, kind="stable")
        y = np.take_along_axis(y_prop, sigma, axis=1)
        g = eta_tilde - eta_tilde[sigma]
        lk = log_kappa(eta_tilde, sigma)
        log_alpha = np.einsum("ij,ij->i", g, y) - lk
        if debug:
            assert np.all(log_alpha <= 1e-9 * (1.0 + np.abs(lk))), "acceptance probability above 1"
        with np.errstate(divide="ignore"):
            mask = np.log(U[:, K - 1]) < log_alpha
        ya = y[mask]
        # x = B^{-1} y: first differences, then the remainder
        pts = np.empty((ya.shape[0], K))
        pts[:, : K - 1] = np.diff(ya, axis=1, prepend=0.0)
        pts[:, K - 1] = 1.0 - ya[:, -1]
        return mask, np.maximum(pts, 0.0)

    return propose


def sample_permutation(eta, n: int, rng=None, budget: int = DEFAULT_BUDGET, debug: bool = __debug__) -> SampleBatch:
    """Sort a CB proposal into the ordered simplex and correct by rejection."""
    eta = as_natural(eta)
    K = eta.K
    setup = PermutationSetup.from_eta(eta)
    gen, seed = _generator(rng)
    propose = _permutation_propose(setup.eta_tilde, K, debug)
    pts, props, _ = _run_rejection(propose, K, n, gen, budget, "permutation", eta.eta)
    return SampleBatch(pts, props, seed, "permutation", eta.eta)


# --------------------------------------------------------------------------
# reparameterization
# --------------------------------------------------------------------------


def _reparam_lams(lam: MeanParams) -> np.ndarray:
    return lam.lam[:-1] / (lam.lam[:-1] + lam.lam[-1])


def reparam_sample(lam, n: int, rng=None, budget: int = DEFAULT_BUDGET) -> tuple[SampleBatch, np.ndarray]:
    """Naive sampler that also returns the accepted uniforms.

    ``cb_inverse_cdf(u[:, i], lam_i / (lam_i + lam_K))`` reproduces
    ``points[:, i]`` exactly, so gradients of a sample with respect to
    ``lambda`` are the gradients of that map at fixed ``u`` (see
    :func:`reparam_jacobian`).
    """
    if not isinstance(lam, MeanParams):
        lam = MeanParams(lam)
    K = lam.K
    theta = cb_natural(_reparam_lams(lam))
    gen, seed = _generator(rng)
    propose = _cb_rejection(theta, np.arange(K - 1), K - 1, K, early=False)
    pts, props, u = _run_rejection(propose, K - 1, n, gen, budget, "naive", lam.lam)
    return SampleBatch(pts, props, seed, "reparam", lam.lam), u


def reparam_transform(u, lam) -> np.ndarray:
    """Map accepted uniforms to simplex points, ``x_i = F^{-1}(u_i | lambda)``."""
    if not isinstance(lam, MeanParams):
        lam = MeanParams(lam)
    x = cb_icdf_theta(np.asarray(u, dtype=float), cb_natural(_reparam_lams(lam)))
    return np.concatenate([x, 1.0 - x.sum(axis=-1, keepdims=True)], axis=-1)


def reparam_jacobian(u, lam) -> np.ndarray:
    """``d x_i / d lambda_j`` at fixed ``u``; shape ``(..., K-1, K)``.

    ``lambda`` is treated as a free positive vector; the map only depends
    on the ratios ``lambda_i / lambda_K``.
    """
    if not isinstance(lam, MeanParams):
        lam = MeanParams(lam)
    lv = lam.lam
    K = lv.size
    u = np.asarray(u, dtype=float)
    dx_dtheta = cb_icdf_dtheta(u, cb_natural(_reparam_lams(lam)))
    jac = np.zeros(u.shape[:-1] + (K - 1, K))
    i = np.arange(K - 1)
    jac[..., i, i] = dx_dtheta / lv[:-1]
    jac[..., i, K - 1] = -dx_dtheta / lv[-1]
    return jac


# --------------------------------------------------------------------------
# acceptance rates, selection, benchmark
# --------------------------------------------------------------------------


def _acceptance_rate_ref(z: np.ndarray, ref: int) -> float:
    others = np.delete(z, ref) - z[ref]
    return float(np.exp(-log_normalizer_array(others) + log_cb_normalizer(others).sum()))


def naive_acceptance_rate(eta) -> float:
    """``C(eta)^{-1} * prod eta_i / (exp(eta_i) - 1)``: probability a naive proposal lands in the simplex."""
    eta = as_natural(eta)
    return _acceptance_rate_ref(full_nodes(eta.eta), eta.K - 1)


def ordered_acceptance_rate(params) -> float:
    """Same formula with the largest ``lambda`` as reference; never below the naive rate."""
    z = full_nodes(as_natural(params).eta)
    ref, _ = ordering(z)
    return _acceptance_rate_ref(z, ref)


def choose_sampler(params) -> str:
    """``ordered`` when ``max lambda >= 2/K``, otherwise ``permutation``."""
    eta = as_natural(params)
    lam = np.exp(full_nodes(eta.eta) - full_nodes(eta.eta).max())
    lam /= lam.sum()
    return "ordered" if lam.max() >= 2.0 / eta.K else "permutation"


def sample(params, n: int, rng=None, method: str = "auto", budget: int = DEFAULT_BUDGET) -> SampleBatch:
    """Dispatch to one of the samplers by name (``auto`` uses :func:`choose_sampler`)."""
    eta = as_natural(params)
    if method == "auto":
        method = choose_sampler(eta)
    if method == "naive":
        return sample_naive(eta, n, rng, budget)
    if method == "ordered":
        return sample_ordered(eta, n, rng, budget)
    if method == "permutation":
        return sample_permutation(eta, n, rng, budget)
    raise CCError(f"unknown sampler {method!r}")


def dirichlet_log_weights(alpha: float, K: int, rng: np.random.Generator) -> np.ndarray:
    """Log of an unnormalized ``Dirichlet(alpha, ..., alpha)`` draw.

    Uses ``G = G' * U**(1/alpha)`` with ``G' ~ Gamma(alpha + 1)`` so small
    shapes do not underflow to exact zeros.
    """
    g = rng.gamma(alpha + 1.0, size=K)
    u = rng.random(K)
    return np.log(g) + np.log(u) / alpha


@dataclass(frozen=True)
class BenchmarkRow:
    K: int
    sampler: str
    trial: int
    log10_proposals: float
    censored: int

    FIELDS = ("K", "sampler", "trial", "log10_proposals", "censored")

    def as_tuple(self) -> tuple:
        return (self.K, self.sampler, self.trial, self.log10_proposals, self.censored)


def benchmark_samplers(
    prior_concentration: float = 1.0,
    K_list=range(2, 9),
    trials: int = 100,
    rng=None,
    budget: int = 10**5,
    samplers=SAMPLERS,
    uniform: bool = False,
) -> list[BenchmarkRow]:
    """Proposals needed for one acceptance, per trial, sampler and ``K``.

    Each trial draws ``lambda ~ Dirichlet(a/K, ..., a/K)`` with
    ``a = prior_concentration`` (``uniform=True`` fixes ``lambda`` to the
    centroid instead) and runs every sampler on it until its first
    acceptance.  Trials that exhaust ``budget`` are right-censored.
    """
    if trials < 1:
        raise CCError("trials must be at least 1")
    gen, _ = _generator(rng)
    rows = []
    for K in K_list:
        if K < 2:
            raise CCError("K must be at least 2")
        for trial in range(trials):
            if uniform:
                eta = np.zeros(K - 1)
            else:
                logw = dirichlet_log_weights(prior_concentration / K, K, gen)
                eta = logw[:-1] - logw[-1]
            params = NaturalParams(eta)
            for name in samplers:
                stream = np.random.default_rng(gen.integers(2**63))
                try:
                    batch = sample(params, 1, stream, name, budget)
                    count, cens = batch.total_proposals, 0
                except BudgetExceededError:
                    count, cens = budget, 1
                rows.append(BenchmarkRow(K, name, trial, math.log10(count), cens))
    return rows
