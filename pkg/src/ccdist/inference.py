"""Maximum likelihood, canonical-link regression and the bias simulation.

The log-likelihood of ``n`` points under ``CC(eta)`` is
``n * (log C(eta) + eta . xbar[:K-1])``: concave in ``eta``, with
gradient ``xbar - E[x]`` and Hessian ``-cov``.  Its maximizer therefore
matches the model mean to the sample average whenever that average is in
the interior of the simplex.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    NaturalParams,
    as_natural,
    covariance_array,
    log_normalizer_array,
    mean_array,
    validate_simplex,
)
from .errors import BoundaryError, CCError, DimensionError, NonFiniteLossError
from .samplers import DEFAULT_BUDGET, sample

BOUNDARY_TOL = 1e-12
ARMIJO = 1e-4
MAX_HALVINGS = 60
# below this Newton decrement the objective cannot resolve progress, and the
# iterate is deep in the quadratic region, so the full step is taken as is
QUADRATIC_DECREMENT = 1e-12
MIN_BIAS_TRIALS = 100


@dataclass(frozen=True)
class Dataset:
    """Compositional rows of shape ``(n, K)``, optionally with predictors ``(n, d)``."""

    rows: np.ndarray
    predictors: np.ndarray | None = None

    def __post_init__(self):
        rows = validate_simplex(np.atleast_2d(np.asarray(self.rows, dtype=float)))
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise CCError("a dataset needs at least one row")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        if self.predictors is not None:
            z = np.asarray(self.predictors, dtype=float)
            if z.ndim == 1:
                z = z[:, None]
            if z.ndim != 2 or z.shape[0] != rows.shape[0]:
                raise DimensionError(
                    f"predictors have {z.shape[0] if z.ndim else 0} rows, compositions have {rows.shape[0]}"
                )
            if not np.all(np.isfinite(z)):
                raise CCError("predictors must be finite")
            z = z.copy()
            z.setflags(write=False)
            object.__setattr__(self, "predictors", z)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def K(self) -> int:
        return self.rows.shape[1]

    @property
    def xbar(self) -> np.ndarray:
        return self.rows.mean(axis=0)


@dataclass
class FitReport:
    """Outcome of a fit; ``trace`` holds ``(log_likelihood, grad_norm)`` per iteration."""

    params: object
    log_likelihood: float
    iterations: int
    grad_norm: float
    converged: bool
    trace: list = field(default_factory=list)
    fitted_mean: np.ndarray | None = None
    kind: str = "mle"


def boundary_components(xbar: np.ndarray) -> list[int]:
    return [int(i) for i in np.flatnonzero(xbar < BOUNDARY_TOL)]


def _mle_objective(eta: np.ndarray, xbar: np.ndarray) -> np.ndarray:
    return log_normalizer_array(eta) + np.einsum("...i,...i->...", eta, xbar[..., :-1])


def fit_mle(data, tol: float = 1e-8, max_iter: int = 500) -> FitReport:
    """Newton's method with backtracking on the average log-likelihood.

    Raises :class:`BoundaryError` when the average has a zero component:
    the likelihood then increases without bound towards that face.
    """
    if not isinstance(data, Dataset):
        data = Dataset(data)
    xbar = data.xbar
    zero = boundary_components(xbar)
    if zero:
        raise BoundaryError([i + 1 for i in zero], xbar)
    n, K = data.n, data.K
    eta = np.zeros(K - 1)
    obj = float(_mle_objective(eta, xbar))
    trace = []
    converged = False
    it = 0
    while True:
        resid = xbar - mean_array(eta)
        g = resid[:-1]
        # the last component's residual is minus the sum of the others
        gn = float(np.abs(resid).max())
        trace.append((n * obj, gn))
        if gn <= tol:
            converged = True
            break
        if it >= max_iter:
            break
        step = np.linalg.solve(covariance_array(eta), g)
        slope = float(g @ step)
        if slope <= QUADRATIC_DECREMENT:
            eta = eta + step
            obj = float(_mle_objective(eta, xbar))
            it += 1
            continue
        t = 1.0
        for _ in range(MAX_HALVINGS):
            cand = eta + t * step
            new = float(_mle_objective(cand, xbar))
            if new >= obj + ARMIJO * t * slope:
                break
            # at the optimum the objective stops moving in floating point
            if abs(new - obj) <= 64 * np.finfo(float).eps * max(1.0, abs(obj)) and new >= obj:
                break
            t *= 0.5
        else:
            break
        eta, obj = cand, new
        it += 1
    return FitReport(
        params=NaturalParams(eta),
        log_likelihood=n * obj,
        iterations=it,
        grad_norm=gn,
        converged=converged,
        trace=trace,
        fitted_mean=mean_array(eta),
        kind="mle",
    )


def fit_mle_batch(xbars, tol: float = 1e-10, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`fit_mle` for many averages at once.

    ``xbars`` has shape ``(B, K)`` and must be interior.  Returns the
    natural parameter estimates ``(B, K-1)`` and a convergence mask.
    """
    xbars = np.asarray(xbars, dtype=float)
    B, K = xbars.shape
    eta = np.zeros((B, K - 1))
    obj = _mle_objective(eta, xbars)
    done = np.zeros(B, dtype=bool)
    for _ in range(max_iter):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        e, xb = eta[act], xbars[act]
        resid = xb - mean_array(e)
        g = resid[:, :-1]
        fin = np.abs(resid).max(axis=1) <= tol
        done[act[fin]] = True
        act, e, xb, g = act[~fin], e[~fin], xb[~fin], g[~fin]
        if act.size == 0:
            break
        step = np.linalg.solve(covariance_array(e), g[..., None])[..., 0]
        slope = np.einsum("ij,ij->i", g, step)
        t = np.ones(act.size)
        quad = slope <= QUADRATIC_DECREMENT
        new_eta, new_obj = e.copy(), obj[act].copy()
        if quad.any():
            new_eta[quad] = e[quad] + step[quad]
            new_obj[quad] = _mle_objective(new_eta[quad], xb[quad])
            # one full step from here leaves only roundoff in the gradient
            done[act[quad]] = True
        pending = ~quad
        for _ in range(MAX_HALVINGS):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            cand = e[idx] + t[idx, None] * step[idx]
            val = _mle_objective(cand, xb[idx])
            old = obj[act[idx]]
            ok = (val >= old + ARMIJO * t[idx] * slope[idx]) | (
                (val >= old) & (np.abs(val - old) <= 64 * np.finfo(float).eps * np.maximum(1.0, np.abs(old)))
            )
            new_eta[idx[ok]] = cand[ok]
            new_obj[idx[ok]] = val[ok]
            pending[idx[ok]] = False
            t[idx[~ok]] *= 0.5
        # a failed line search means no further progress is representable
        done[act[pending]] = True
        eta[act] = new_eta
        obj[act] = new_obj
    resid = xbars - mean_array(eta)
    return eta, np.abs(resid).max(axis=1) <= max(tol, 1e-8)


# --------------------------------------------------------------------------
# canonical-link regression
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GlmConfig:
    """Optimizer settings for :func:`glm_fit`.

    ``step_rule`` is ``"bb"`` (Barzilai-Borwein trial step) or ``"armijo"``
    (trial step doubled from the last accepted one); both then backtrack
    until the penalized log-likelihood increases.
    """

    max_iter: int = 500
    tol: float = 1e-6
    l2: float = 0.0
    standardize: bool = True
    step_rule: str = "bb"


@dataclass(frozen=True)
class GlmModel:
    """``eta = W^T z_std + b`` with ``z_std = (z - z_mean) / z_scale``."""

    weights: np.ndarray
    bias: np.ndarray
    l2_coefficient: float = 0.0
    z_mean: np.ndarray | None = None
    z_scale: np.ndarray | None = None

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        b = np.atleast_1d(np.asarray(self.bias, dtype=float))
        if w.shape[1] != b.size:
            raise DimensionError("weights and bias disagree on K - 1")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise CCError("model parameters must be finite")
        if self.l2_coefficient < 0:
            raise CCError("l2 coefficient must be nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    @property
    def K(self) -> int:
        return self.bias.size + 1

    def transform(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z[None, :] if self.d > 1 or z.size == 0 else z[:, None]
        if z.shape[1] != self.d:
            raise DimensionError(f"predictors have {z.shape[1]} columns, model expects {self.d}")
        if self.z_mean is not None:
            z = (z - self.z_mean) / self.z_scale
        return z

    def eta(self, z) -> np.ndarray:
        return self.transform(z) @ self.weights + self.bias

    def raw_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Weights and bias acting on unstandardized predictors."""
        if self.z_mean is None:
            return self.weights, self.bias
        w = self.weights / self.z_scale[:, None]
        return w, self.bias - self.z_mean @ w


def _standardization(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = z.mean(axis=0)
    sd = z.std(axis=0)
    return mu, np.where(sd > 0, sd, 1.0)


def glm_objective(W, b, Z, Y, l2: float = 0.0) -> float:
    """Penalized log-likelihood ``sum_i log p(y_i | W^T z_i + b) - l2 (|W|^2 + |b|^2)``."""
    with np.errstate(over="ignore", invalid="ignore"):
        eta = Z @ W + b
    bad = np.flatnonzero(~np.isfinite(eta).all(axis=1))
    if bad.size:
        raise NonFiniteLossError(int(bad[0]), f"eta = {eta[bad[0]].tolist()}")
    ll = log_normalizer_array(eta) + np.einsum("ij,ij->i", eta, Y[:, :-1])
    bad = np.flatnonzero(~np.isfinite(ll))
    if bad.size:
        raise NonFiniteLossError(int(bad[0]), f"eta = {eta[bad[0]].tolist()}")
    return float(ll.sum() - l2 * (np.sum(W * W) + np.sum(b * b)))


def glm_gradient(W, b, Z, Y, l2: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of :func:`glm_objective`; the per-row score is ``y - E[x]``."""
    eta = Z @ W + b
    score = Y[:, :-1] - mean_array(eta)[:, :-1]
    return Z.T @ score - 2.0 * l2 * W, score.sum(axis=0) - 2.0 * l2 * b


def glm_fit(data: Dataset, config: GlmConfig = GlmConfig()) -> tuple[GlmModel, FitReport]:
    """Fit the canonical-link regression by gradient ascent with backtracking.

    Starts from ``W = 0, b = 0``.  Non-convergence within ``max_iter`` is
    reported through ``FitReport.converged``, not raised.
    """
    if data.predictors is None:
        raise CCError("glm_fit needs predictors")
    Z = data.predictors
    d = Z.shape[1]
    K = data.K
    z_mean = z_scale = None
    if config.standardize:
        z_mean, z_scale = _standardization(Z)
        Z = (Z - z_mean) / z_scale
    Y = data.rows
    l2 = config.l2
    W = np.zeros((d, K - 1))
    b = np.zeros(K - 1)
    obj = glm_objective(W, b, Z, Y, l2)
    gW, gb = glm_gradient(W, b, Z, Y, l2)
    trace = []
    converged = False
    t_prev = 1.0 / Y.shape[0]
    prev = None
    it = 0
    while True:
        gn = float(max(np.abs(gW).max(initial=0.0), np.abs(gb).max()))
        trace.append((obj, gn))
        if gn <= config.tol:
            converged = True
            break
        if it >= config.max_iter:
            break
        g2 = float(np.sum(gW * gW) + np.sum(gb * gb))
        t = 2.0 * t_prev
        if config.step_rule == "bb" and prev is not None:
            sW, sb, yW, yb = prev
            sy = -(np.sum(sW * yW) + np.sum(sb * yb))
            if sy > 0:
                t = (np.sum(sW * sW) + np.sum(sb * sb)) / sy
        for _ in range(MAX_HALVINGS):
            W_new, b_new = W + t * gW, b + t * gb
            new = glm_objective(W_new, b_new, Z, Y, l2)
            if new >= obj + ARMIJO * t * g2:
                break
            if new >= obj and abs(new - obj) <= 64 * np.finfo(float).eps * max(1.0, abs(obj)):
                break
            t *= 0.5
        else:
            break
        gW_new, gb_new = glm_gradient(W_new, b_new, Z, Y, l2)
        prev = (W_new - W, b_new - b, gW_new - gW, gb_new - gb)
        W, b, obj, gW, gb = W_new, b_new, new, gW_new, gb_new
        t_prev = t
        it += 1
    model = GlmModel(W, b, l2, z_mean, z_scale)
    report = FitReport(
        params=model,
        log_likelihood=obj + l2 * (np.sum(W * W) + np.sum(b * b)),
        iterations=it,
        grad_norm=gn,
        converged=converged,
        trace=trace,
        kind="glm",
    )
    return model, report


def glm_predict_arrays(model: GlmModel, predictors) -> tuple[np.ndarray, np.ndarray]:
    eta = model.eta(predictors)
    return eta, mean_array(eta)


def glm_predict(model: GlmModel, predictors) -> list[tuple[NaturalParams, np.ndarray]]:
    """Per row, the natural parameters and the mean composition."""
    eta, means = glm_predict_arrays(model, predictors)
    return [(NaturalParams(e), m) for e, m in zip(eta, means)]


def simulate_glm(n: int, d: int, K: int, rng=None, weight_scale: float = 1.0, method: str = "auto"):
    """Synthetic regression data: ``z ~ N(0, I)``, ``y ~ CC(W^T z + b)``.

    ``W`` and ``b`` have independent ``N(0, weight_scale**2)`` entries.
    Returns ``(Z, Y, W, b)``.
    """
    if n < 1 or d < 1 or K < 2:
        raise CCError("need n >= 1, d >= 1 and K >= 2")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    W = weight_scale * gen.standard_normal((d, K - 1))
    b = weight_scale * gen.standard_normal(K - 1)
    Z = gen.standard_normal((n, d))
    eta = Z @ W + b
    Y = np.vstack([sample(NaturalParams(e), 1, gen, method).points for e in eta])
    return Z, Y, W, b


# --------------------------------------------------------------------------
# bias simulation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BiasRow:
    n: int
    component: int
    bias: float
    se: float
    trials_used: int
    excluded: int

    FIELDS = ("n", "component", "bias", "se", "trials_used", "excluded")

    def as_tuple(self) -> tuple:
        return (self.n, self.component, self.bias, self.se, self.trials_used, self.excluded)


def _uniform_simplex_eta(K: int, rng: np.random.Generator) -> np.ndarray:
    e = rng.standard_exponential(K)
    return np.log(e[:-1]) - np.log(e[-1])


def bias_simulation(
    truth,
    n_range,
    trials: int = 10_000,
    rng=None,
    K: int | None = None,
    block: int = 100,
    method: str = "auto",
    budget: int = DEFAULT_BUDGET,
    exact_fit: bool = True,
) -> list[BiasRow]:
    """Empirical bias of the CC mean estimate.

    For each ``n``, ``trials`` datasets of size ``n`` are drawn from the
    truth, each is fitted by maximum likelihood (the batched Newton solver
    when ``exact_fit``, else the sample average it provably equals), and
    the fitted mean minus the true mean is averaged per component.

    ``truth="uniform"`` redraws ``lambda`` uniformly on the simplex every
    ``block`` trials (``K`` required); errors are always taken against the
    truth that generated the dataset.  Datasets whose average touches the
    boundary are excluded and counted.
    """
    if trials < MIN_BIAS_TRIALS:
        raise CCError(f"trials must be at least {MIN_BIAS_TRIALS}")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    prior = isinstance(truth, str)
    if prior:
        if truth != "uniform":
            raise CCError(f"unknown prior {truth!r}")
        if K is None or K < 2:
            raise CCError("a uniform prior needs K >= 2")
    else:
        fixed = as_natural(truth)
        K = fixed.K
    rows = []
    for n in n_range:
        n = int(n)
        if n < 1:
            raise CCError("sample sizes must be positive")
        errors = []
        excluded = 0
        done = 0
        while done < trials:
            size = min(block if prior else trials, trials - done)
            eta = NaturalParams(_uniform_simplex_eta(K, gen)) if prior else fixed
            true_mean = mean_array(eta.eta)
            stream = np.random.default_rng(gen.integers(2**63))
            pts = sample(eta, size * n, stream, method, budget).points
            xbars = pts.reshape(size, n, K).mean(axis=1)
            ok = xbars.min(axis=1) >= BOUNDARY_TOL
            excluded += int((~ok).sum())
            xbars = xbars[ok]
            if exact_fit and xbars.shape[0]:
                eta_hat, _ = fit_mle_batch(xbars)
                est = mean_array(eta_hat)
            else:
                est = xbars
            errors.append(est - true_mean)
            done += size
        err = np.concatenate(errors)
        used = err.shape[0]
        bias = err.mean(axis=0)
        se = err.std(axis=0, ddof=1) / np.sqrt(used) if used > 1 else np.full(K, np.nan)
        for c in range(K):
            rows.append(BiasRow(n, c + 1, float(bias[c]), float(se[c]), used, excluded))
    return rows


__all__ = [
    "Dataset",
    "FitReport",
    "GlmConfig",
    "GlmModel",
    "BiasRow",
    "fit_mle",
    "fit_mle_batch",
    "glm_fit",
    "glm_objective",
    "glm_gradient",
    "glm_predict",
    "glm_predict_arrays",
    "bias_simulation",
    "simulate_glm",
]
