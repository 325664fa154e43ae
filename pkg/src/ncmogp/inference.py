"""Exact Gaussian-likelihood training and prediction.

Everything goes through a Cholesky factor of ``K + Sigma``; there is no
explicit matrix inverse.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import log, pi

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .dataset import Dataset
from .errors import DataError, NumericalError
from .kernels import KernelParams
from .model import ModelSpec, assemble

__all__ = [
    "Dataset",
    "HyperParams",
    "PredictiveResult",
    "OptimizeResult",
    "jittered_cholesky",
    "noise_diag",
    "log_marginal",
    "grad_log_marginal",
    "log_marginal_and_grad",
    "initial_params",
    "optimize",
    "predict",
    "nmse",
    "nlpd",
]

logger = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-6
LOG_2PI = log(2.0 * pi)


def jittered_cholesky(A: np.ndarray):
    """Lower Cholesky factor of ``A``, adding diagonal jitter only if needed.

    Jitter starts at ``1e-10 * trace(A) / n`` and doubles up to
    ``1e-6 * trace(A) / n``.

    Returns
    -------
    L : ndarray
    jitter : float
        The jitter actually added (0.0 when none was needed).
    """
    n = A.shape[0]
    try:
        return cholesky(A, lower=True, check_finite=True), 0.0
    except (LinAlgError, ValueError):
        pass
    scale = np.trace(A) / n
    if not np.isfinite(scale) or scale <= 0:
        raise NumericalError(
            "covariance has non-positive or non-finite trace", {"mean_diag": float(scale)}
        )
    jitter = JITTER_START * scale
    while jitter <= JITTER_MAX * scale * (1 + 1e-12):
        try:
            L = cholesky(A + jitter * np.eye(n), lower=True)
            logger.debug("cholesky succeeded with jitter %.3e", jitter)
            return L, jitter
        except LinAlgError:
            jitter *= 2.0
    eig = np.linalg.eigvalsh(A)
    raise NumericalError(
        "Cholesky failed after maximum jitter",
        {
            "min_eig": float(eig[0]),
            "max_eig": float(eig[-1]),
            "condition": float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf"),
            "max_jitter": JITTER_MAX * scale,
        },
    )


class HyperParams:
    """Packing map between :class:`KernelParams` and the optimiser's vector.

    Only the blocks the variant uses are packed: ICM drops the smoothing
    length-scales, the dependent GP drops the latent length-scale.
    """

    def __init__(self, spec: ModelSpec, template: KernelParams):
        self.spec = spec
        self.template = template
        K, p, D = template.n_kernels, template.input_dim, template.log_noise_var.shape[0]
        if K != spec.n_kernels or D != spec.n_outputs or p != spec.input_dim:
            raise ValueError("kernel parameters do not match the model spec")
        mask = np.ones(K + K * p + p + D, dtype=bool)
        if spec.variant == "icm":
            mask[K : K + K * p] = False
        if spec.variant == "dgp":
            mask[K + K * p : K + K * p + p] = False
        self.mask = mask
        names = [f"S[{k}]" for k in range(K)]
        names += [f"log_ell[{k},{q}]" for k in range(K) for q in range(p)]
        names += [f"log_ell_u[{q}]" for q in range(p)]
        names += [f"log_noise[{d}]" for d in range(D)]
        self.names = [n for n, m in zip(names, mask) if m]

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def pack(self, params: KernelParams) -> np.ndarray:
        return params.pack()[self.mask]

    def unpack(self, theta) -> KernelParams:
        full = self.template.pack()
        full[self.mask] = np.asarray(theta, dtype=float)
        return self.template.unpack(full)


def noise_diag(outputs, params: KernelParams) -> np.ndarray:
    return params.noise_var[np.asarray(outputs, dtype=np.intp)]


def _resolve(spec, theta, template):
    if isinstance(theta, KernelParams):
        return theta, HyperParams(spec, theta)
    if template is None:
        raise ValueError("a template KernelParams is needed to unpack a raw vector")
    hp = HyperParams(spec, template)
    return hp.unpack(theta), hp


def _factor(dataset, spec, params):
    if len(dataset) == 0:
        raise DataError("dataset has no observations")
    mu, K = assemble(dataset, spec, params)
    Kt = K + np.diag(noise_diag(dataset.outputs, params))
    L, jitter = jittered_cholesky(Kt)
    r = dataset.y - mu
    alpha = cho_solve((L, True), r)
    return mu, L, r, alpha, jitter


def log_marginal(dataset: Dataset, spec: ModelSpec, theta, template=None) -> float:
    """``log N(y | mu, K + Sigma)``.

    ``theta`` is a :class:`KernelParams` or a packed vector (then
    ``template`` supplies the shapes).
    """
    params, _ = _resolve(spec, theta, template)
    _, L, r, alpha, _ = _factor(dataset, spec, params)
    n = r.shape[0]
    return float(-0.5 * r @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)


def log_marginal_and_grad(dataset: Dataset, spec: ModelSpec, theta, template=None):
    """Value and gradient in the packed space of :class:`HyperParams`."""
    params, hp = _resolve(spec, theta, template)
    _, L, r, alpha, _ = _factor(dataset, spec, params)
    n = r.shape[0]
    value = float(-0.5 * r @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)
    Kinv = cho_solve((L, True), np.eye(n))
    W = 0.5 * (np.outer(alpha, alpha) - Kinv)
    engine = spec.engine()
    o = dataset.outputs
    g = engine.vjp(dataset.X, o, W, alpha, params)
    # Sigma only touches the diagonal
    gnoise = np.bincount(o, weights=np.diag(W), minlength=spec.n_outputs) * params.noise_var
    g[-spec.n_outputs :] = gnoise
    return value, g[hp.mask]


def grad_log_marginal(dataset: Dataset, spec: ModelSpec, theta, template=None) -> np.ndarray:
    return log_marginal_and_grad(dataset, spec, theta, template)[1]


def _median_distance(X):
    X = np.asarray(X, dtype=float)
    out = []
    for q in range(X.shape[1]):
        x = X[:, q]
        if x.shape[0] > 2000:
            x = x[np.linspace(0, x.shape[0] - 1, 2000).astype(int)]
        dist = np.abs(x[:, None] - x[None, :])[np.triu_indices(x.shape[0], 1)]
        med = np.median(dist) if dist.size else 1.0
        out.append(med if med > 0 else 1.0)
    return np.array(out)


def initial_params(dataset: Dataset, spec: ModelSpec) -> KernelParams:
    """Data-driven starting point.

    Length-scales are the median pairwise input distance per dimension,
    noise variances ``0.1 var(y_d)``, and sensitivities are scaled so the
    first-order output variance matches ``var(y_d)``.
    """
    D, p, n_sub = spec.n_outputs, spec.input_dim, spec.n_sub
    med = _median_distance(dataset.X)
    var = np.array([np.var(y) if y.size > 1 else 1.0 for y in dataset.targets])
    var = np.where(var > 0, var, 1.0)
    ell = np.tile(med, (spec.n_kernels, 1))
    tmp = KernelParams.create(np.ones(spec.n_kernels), ell, med, 0.1 * var)
    engine = spec.engine()
    unit = engine.base.self_cov(np.arange(spec.n_kernels), tmp)
    S = np.sqrt(np.repeat(var, n_sub) / unit)
    return KernelParams.create(S, ell, med, 0.1 * var)


def _bounds(hp: HyperParams, dataset: Dataset):
    spec = hp.spec
    K, p, D = spec.n_kernels, spec.input_dim, spec.n_outputs
    med = np.log(_median_distance(dataset.X))
    var = np.array([np.var(y) if y.size > 1 else 1.0 for y in dataset.targets])
    var = np.log(np.where(var > 0, var, 1.0))
    b = [(None, None)] * K
    b += [(med[q] - 9.0, med[q] + 9.0) for _ in range(K) for q in range(p)]
    b += [(med[q] - 9.0, med[q] + 9.0) for q in range(p)]
    b += [(var[d] - 18.0, var[d] + 3.0) for d in range(D)]
    return [bb for bb, m in zip(b, hp.mask) if m]


@dataclass
class OptimizeResult:
    params: KernelParams
    theta: np.ndarray
    log_marginal: float
    trace: list = field(default_factory=list)
    restarts: list = field(default_factory=list)


def optimize(
    dataset: Dataset,
    spec: ModelSpec,
    restarts: int = 5,
    seed: int = 0,
    init: KernelParams | None = None,
    maxiter: int = 1000,
    gtol: float = 1e-6,
) -> OptimizeResult:
    """Maximise the log-marginal likelihood with L-BFGS-B over several restarts.

    Restart 0 starts at ``init`` (or :func:`initial_params`); the others
    perturb every log-space parameter with unit-variance Gaussian noise and
    sensitivities by a log-normal factor. Returns the best restart together
    with each restart's ``(objective, gradient norm)`` trace.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if any(s == 0 for s in dataset.sizes):
        empty = [dataset.names[d] for d, s in enumerate(dataset.sizes) if s == 0]
        raise DataError(f"outputs without training data: {empty}")
    base = init.copy() if init is not None else initial_params(dataset, spec)
    hp = HyperParams(spec, base)
    bounds = _bounds(hp, dataset)
    theta0 = hp.pack(base)
    rng = np.random.default_rng(seed)
    K = spec.n_kernels
    log_part = np.ones(theta0.shape[0], dtype=bool)
    log_part[: min(K, log_part.shape[0])] = False

    results, failures = [], []
    for r in range(restarts):
        start = theta0.copy()
        if r > 0:
            noise = rng.standard_normal(start.shape[0])
            start[log_part] += noise[log_part]
            start[~log_part] *= np.exp(noise[~log_part])
        start = np.array(
            [np.clip(v, lo if lo is not None else -np.inf, hi if hi is not None else np.inf)
             for v, (lo, hi) in zip(start, bounds)]
        )
        cache = {}

        def fun(th):
            key = th.tobytes()
            if key not in cache:
                try:
                    v, g = log_marginal_and_grad(dataset, spec, th, base)
                    cache.clear()
                    cache[key] = (-v, -g)
                except (NumericalError, FloatingPointError) as exc:
                    logger.debug("restart %d: numerical failure %s", r, exc)
                    return 1e25, np.zeros_like(th)
            return cache[key]

        trace = []

        def callback(intermediate_result):
            f, g = fun(intermediate_result.x)
            trace.append((float(f), float(np.linalg.norm(g))))

        try:
            with np.errstate(over="ignore", invalid="ignore"):
                f0, g0 = fun(start)
                if f0 >= 1e25:
                    raise NumericalError("objective not finite at the starting point")
                trace.append((float(f0), float(np.linalg.norm(g0))))
                res = minimize(
                    fun,
                    start,
                    jac=True,
                    method="L-BFGS-B",
                    bounds=bounds,
                    callback=callback,
                    options={"maxiter": maxiter, "gtol": gtol, "ftol": 1e-12, "maxcor": 20},
                )
            if not np.isfinite(res.fun) or res.fun >= 1e25:
                raise NumericalError(f"optimiser ended on a failed evaluation: {res.message}")
            results.append((float(res.fun), res.x, trace, str(res.message)))
        except NumericalError as exc:
            failures.append({"restart": r, "error": str(exc), **getattr(exc, "diagnostics", {})})
    if not results:
        raise NumericalError("all restarts failed", {"restarts": failures})
    best = min(range(len(results)), key=lambda i: results[i][0])
    fbest, xbest, trace, _ = results[best]
    return OptimizeResult(
        params=hp.unpack(xbest),
        theta=xbest,
        log_marginal=-fbest,
        trace=trace,
        restarts=[{"objective": f, "message": m} for f, _, _, m in results] + failures,
    )


@dataclass
class PredictiveResult:
    """Predictive mean and variance (noise included) at the test points.

    ``outputs`` gives the output index of each test point; ``cov`` is the
    full predictive covariance when requested.
    """

    mean: np.ndarray
    var: np.ndarray
    outputs: np.ndarray
    cov: np.ndarray | None = None
    n_outputs: int = 1

    def split(self, values=None):
        values = self.mean if values is None else values
        return [values[self.outputs == d] for d in range(self.n_outputs)]

    @property
    def std(self):
        return np.sqrt(self.var)


def _test_points(test, p):
    if isinstance(test, Dataset):
        return test.X, test.outputs
    xs = [np.asarray(x, dtype=float).reshape(-1, p) for x in test]
    sizes = [x.shape[0] for x in xs]
    return np.ascontiguousarray(np.vstack(xs)), np.repeat(np.arange(len(xs)), sizes)


def predict(
    train: Dataset, test, spec: ModelSpec, params: KernelParams, full_cov: bool = False
) -> PredictiveResult:
    """Predictive distribution of noisy outputs at the test inputs.

    The mean is ``mu_* + K_*f (K + Sigma)^-1 (y - mu)``, i.e. the training
    residual is propagated; the covariance is
    ``K_** - K_*f (K + Sigma)^-1 K_f* + Sigma_*``.

    ``test`` is a :class:`Dataset` (targets ignored) or a list of per-output
    input arrays.
    """
    Xs, os_ = _test_points(test, spec.input_dim)
    engine = spec.engine()
    _, L, _, alpha, _ = _factor(train, spec, params)
    Ks = engine.cov(Xs, os_, train.X, train.outputs, params)
    mean = engine.mean(Xs, os_, params) + Ks @ alpha
    V = solve_triangular(L, Ks.T, lower=True)
    noise = noise_diag(os_, params)
    var = engine.cov_diag(Xs, os_, params) - np.sum(V**2, axis=0) + noise
    cov = None
    if full_cov:
        cov = engine.cov(Xs, os_, Xs, os_, params) - V.T @ V + np.diag(noise)
        cov = 0.5 * (cov + cov.T)
    var = np.maximum(var, noise)
    return PredictiveResult(mean, var, os_, cov, spec.n_outputs)


def _per_output(pred: PredictiveResult, truth):
    ys = truth.targets if isinstance(truth, Dataset) else [np.asarray(y, float) for y in truth]
    if len(ys) != pred.n_outputs:
        raise DataError("truth and predictions have different output counts")
    return ys, pred.split(pred.mean), pred.split(pred.var)


def nmse(pred: PredictiveResult, truth) -> np.ndarray:
    """Per-output ``mean((y - mu)**2) / var(y)`` (population variance)."""
    ys, means, _ = _per_output(pred, truth)
    out = []
    for d, (y, m) in enumerate(zip(ys, means)):
        if y.size == 0 or y.shape != m.shape:
            raise DataError(f"output {d}: empty or misaligned test set")
        v = np.var(y)
        if v <= 0:
            raise DataError(f"output {d}: test targets have zero variance; NMSE undefined")
        out.append(np.mean((y - m) ** 2) / v)
    return np.array(out)


def nlpd(pred: PredictiveResult, truth) -> np.ndarray:
    """Per-output mean negative log density under the Gaussian marginals."""
    ys, means, vars_ = _per_output(pred, truth)
    out = []
    for d, (y, m, v) in enumerate(zip(ys, means, vars_)):
        if y.size == 0 or y.shape != m.shape:
            raise DataError(f"output {d}: empty or misaligned test set")
        out.append(np.mean(0.5 * (LOG_2PI + np.log(v)) + (y - m) ** 2 / (2.0 * v)))
    return np.array(out)
