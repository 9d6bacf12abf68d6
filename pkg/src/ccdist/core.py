"""The continuous categorical distribution: parameters, normalizer and moments.

A point of the closed simplex is stored with all ``K`` components.  The
density is ``p(x) = C(eta) * exp(eta . x[:K-1])`` with the natural
parameter ``eta_i = log(lambda_i / lambda_K)``; ``1 / C(eta)`` is the
divided difference of ``exp`` over the nodes ``(eta_1, ..., eta_{K-1}, 0)``.

Functions ending in ``_array`` take stacked natural parameters of shape
``(..., K-1)`` and are what the samplers and fitting code use internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .divdiff import exp_divdiff_table, log_exp_divdiff
from .errors import CCError, DimensionError, ModeTieError

SUM_TOL = 1e-9
CLIP_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MeanParams:
    """Strictly positive ``lambda`` summing to one (the identifiable form)."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1 or lam.size < 2:
            raise DimensionError(f"lambda must be a vector with K >= 2 entries, got shape {lam.shape}")
        if not np.all(np.isfinite(lam)):
            raise CCError("lambda must be finite")
        if np.any(lam <= 0):
            raise CCError(f"lambda components must be strictly positive, got {lam.tolist()}")
        total = lam.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise CCError(f"lambda must sum to 1 (got {total!r})")
        object.__setattr__(self, "lam", _frozen(lam / total))

    @property
    def K(self) -> int:
        return self.lam.size


@dataclass(frozen=True)
class NaturalParams:
    """Unconstrained ``eta`` of length ``K - 1``; ``eta_K = 0`` is implicit."""

    eta: np.ndarray

    def __post_init__(self):
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        if eta.ndim != 1 or eta.size < 1:
            raise DimensionError(f"eta must be a nonempty vector, got shape {eta.shape}")
        if not np.all(np.isfinite(eta)):
            raise CCError(f"eta must be finite, got {eta.tolist()}")
        object.__setattr__(self, "eta", _frozen(eta))

    @property
    def K(self) -> int:
        return self.eta.size + 1


@dataclass(frozen=True)
class SimplexPoint:
    """A point of the closed simplex, all ``K`` components stored.

    Components in ``[-1e-12, 0)`` are clipped to zero and a sum within
    ``1e-9`` of one is renormalized; anything worse is rejected.
    """

    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(validate_simplex(self.x)))

    @property
    def K(self) -> int:
        return self.x.size


def validate_simplex(x, sum_tol: float = SUM_TOL, clip_tol: float = CLIP_TOL) -> np.ndarray:
    """Return ``x`` as a clean simplex point (or stack of points along the last axis)."""
    x = np.array(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] < 2:
        raise DimensionError(f"a simplex point needs at least 2 components, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise CCError("simplex point has non-finite components")
    if np.any(x < -clip_tol):
        raise CCError(f"simplex point has negative components: {x.tolist()}")
    x[x < 0] = 0.0
    total = x.sum(axis=-1, keepdims=True)
    if np.any(np.abs(total - 1.0) > sum_tol):
        raise CCError(f"simplex point components must sum to 1 (got {np.ravel(total).tolist()})")
    return x / total


def as_natural(params) -> NaturalParams:
    """Accept either parameterization (or a raw eta vector)."""
    if isinstance(params, NaturalParams):
        return params
    if isinstance(params, MeanParams):
        return mean_to_natural(params)
    return NaturalParams(params)


def mean_to_natural(lam: MeanParams) -> NaturalParams:
    log_lam = np.log(lam.lam)
    return NaturalParams(log_lam[:-1] - log_lam[-1])


def natural_to_mean(eta: NaturalParams) -> MeanParams:
    return MeanParams(softmax_full(eta.eta))


def softmax_full(eta) -> np.ndarray:
    """Softmax of ``(eta, 0)`` along the last axis, overflow safe."""
    z = full_nodes(eta)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def full_nodes(eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    return np.concatenate([eta, np.zeros(eta.shape[:-1] + (1,))], axis=-1)


@dataclass(frozen=True)
class LogNormalizer:
    """``log C(eta)`` together with the centered nodes it was computed from."""

    log_c: float
    nodes: np.ndarray
    center: float

    @property
    def c(self) -> float:
        return float(np.exp(self.log_c))


def log_normalizer_array(eta) -> np.ndarray:
    """``log C`` for stacked natural parameters of shape ``(..., K-1)``."""
    return -log_exp_divdiff(full_nodes(eta))


def log_normalizer(eta: NaturalParams) -> LogNormalizer:
    eta = as_natural(eta)
    nodes = full_nodes(eta.eta)
    center = float(nodes.max())
    return LogNormalizer(
        log_c=float(-log_exp_divdiff(nodes)), nodes=_frozen(nodes - center), center=center
    )


def log_normalizer_lambda(lam: MeanParams) -> float:
    """``log`` of ``1 / integral(prod lambda_i ** x_i)`` over the simplex."""
    return log_normalizer(mean_to_natural(lam)).log_c - float(np.log(lam.lam[-1]))


def _check_point(x, K: int) -> np.ndarray:
    x = x.x if isinstance(x, SimplexPoint) else SimplexPoint(x).x
    if x.size != K:
        raise DimensionError(f"point has {x.size} components but the distribution has K={K}")
    return x


def log_pdf(x, eta) -> float:
    """Log density at a simplex point; finite on the whole closed simplex."""
    eta = as_natural(eta)
    x = _check_point(x, eta.K)
    return log_normalizer(eta).log_c + float(eta.eta @ x[:-1])


def log_pdf_lambda(x, lam: MeanParams) -> float:
    """Log density written with the full ``lambda`` vector; symmetric in the labels."""
    x = _check_point(x, lam.K)
    return log_normalizer_lambda(lam) + float(x @ np.log(lam.lam))


def log_pdf_array(x, eta) -> np.ndarray:
    """Vectorized log density for stacked points ``(..., K)`` and parameters ``(..., K-1)``."""
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return log_normalizer_array(eta) + np.einsum("...i,...i->...", eta, x[..., :-1])


def _with_repeats(z: np.ndarray, extra: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([z] + [e[..., None] for e in extra], axis=-1)


def mean_array(eta) -> np.ndarray:
    """All ``K`` component means for stacked parameters ``(..., K-1)``.

    ``E[x_i]`` is the divided difference with node ``i`` doubled over the
    plain one.  Every component is computed this way (none by subtraction)
    and the vector is then renormalized.
    """
    z = full_nodes(eta)
    K = z.shape[-1]
    log_d = log_exp_divdiff(z)
    zz = np.broadcast_to(z[..., None, :], z.shape[:-1] + (K, K))
    rep = np.concatenate([zz, z[..., :, None]], axis=-1)
    m = np.exp(log_exp_divdiff(rep) - log_d[..., None])
    return m / m.sum(axis=-1, keepdims=True)


def covariance_array(eta) -> np.ndarray:
    """Covariance of the first ``K-1`` components, shape ``(..., K-1, K-1)``."""
    z = full_nodes(eta)
    K = z.shape[-1]
    k = K - 1
    log_d = log_exp_divdiff(z)
    iu, ju = np.triu_indices(k)
    zz = np.broadcast_to(z[..., None, :], z.shape[:-1] + (iu.size, K))
    rep = np.concatenate([zz, z[..., iu, None], z[..., ju, None]], axis=-1)
    second = np.exp(log_exp_divdiff(rep) - log_d[..., None])
    second = np.where(iu == ju, 2.0 * second, second)
    m = mean_array(eta)[..., :k]
    cov = np.empty(z.shape[:-1] + (k, k))
    vals = second - m[..., iu] * m[..., ju]
    cov[..., iu, ju] = vals
    cov[..., ju, iu] = vals
    return cov


def mean(eta) -> np.ndarray:
    """Mean vector with all ``K`` components."""
    return mean_array(as_natural(eta).eta)


def covariance(eta) -> np.ndarray:
    return covariance_array(as_natural(eta).eta)


def _same_k(a: NaturalParams, b) -> None:
    if a.K != (b.K if hasattr(b, "K") else np.size(b) + 1):
        raise DimensionError("parameters have different dimensions")


def kl_divergence(eta_p, eta_q) -> float:
    """``KL(p || q)`` from the normalizers and the mean of ``p``."""
    p, q = as_natural(eta_p), as_natural(eta_q)
    _same_k(p, q)
    diff = p.eta - q.eta
    if not np.any(diff):
        return 0.0
    kl = (
        log_normalizer(p).log_c
        - log_normalizer(q).log_c
        + float(diff @ mean(p)[:-1])
    )
    return max(kl, 0.0)


def log_mgf(eta, t) -> float:
    eta = as_natural(eta)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.shape != eta.eta.shape:
        raise DimensionError(f"t has shape {t.shape}, expected {eta.eta.shape}")
    if not np.all(np.isfinite(t)):
        raise CCError("t must be finite")
    return log_normalizer(eta).log_c - log_normalizer(NaturalParams(eta.eta + t)).log_c


def mgf(eta, t) -> float:
    """``E[exp(t . x[:K-1])] = C(eta) / C(eta + t)``."""
    return float(np.exp(log_mgf(eta, t)))


def mode(lam: MeanParams) -> SimplexPoint:
    """The vertex of the largest ``lambda``; ties raise :class:`ModeTieError`."""
    if not isinstance(lam, MeanParams):
        lam = MeanParams(lam)
    top = lam.lam.max()
    tied = np.flatnonzero(np.isclose(lam.lam, top, rtol=1e-12, atol=0.0))
    if tied.size > 1:
        raise ModeTieError([int(i) + 1 for i in tied])
    vertex = np.zeros(lam.K)
    vertex[tied[0]] = 1.0
    return SimplexPoint(vertex)


__all__ = [
    "MeanParams",
    "NaturalParams",
    "SimplexPoint",
    "LogNormalizer",
    "mean_to_natural",
    "natural_to_mean",
    "log_normalizer",
    "log_normalizer_lambda",
    "log_normalizer_array",
    "log_pdf",
    "log_pdf_lambda",
    "log_pdf_array",
    "mean",
    "mean_array",
    "covariance",
    "covariance_array",
    "kl_divergence",
    "mgf",
    "log_mgf",
    "mode",
    "exp_divdiff_table",
]
