"""Target densities: benchmark models, partial posteriors, tempering.

A :class:`TargetDensity` wraps a pure unnormalised log-density with
dimension checking, NaN guarding, and evaluation accounting. Everything
downstream (chains, weighting, estimators) talks to targets only through
this wrapper, so the ledger sees every evaluation.

Conventions:
  * log densities return ``-inf`` exactly when the point is outside the
    support or the model density is zero there;
  * gradients fall back to central finite differences with step
    ``1e-5 * (1 + |x_j|)``, charged to the target's own counter as
    ``2 * dimension`` evaluations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .errors import GradientError, NumericalError
from .ledger import EvalLedger

_FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, used for supports and uniform initialisation."""

    lows: np.ndarray
    highs: np.ndarray

    @staticmethod
    def of(lows, highs) -> "Box":
        lo = np.atleast_1d(np.asarray(lows, dtype=float))
        hi = np.atleast_1d(np.asarray(highs, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box bounds must satisfy lows < highs componentwise")
        return Box(lo, hi)

    @property
    def dimension(self) -> int:
        return self.lows.size

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lows) and np.all(x <= self.highs))

    def contains_batch(self, X: np.ndarray) -> np.ndarray:
        return np.all((X >= self.lows) & (X <= self.highs), axis=-1)

    def log_volume(self) -> float:
        return float(np.sum(np.log(self.highs - self.lows)))

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        if size is None:
            return rng.uniform(self.lows, self.highs)
        return rng.uniform(self.lows, self.highs, size=(size, self.dimension))


class TargetDensity:
    """Counted view of an unnormalised log-density.

    Parameters
    ----------
    dimension : int
        Length of the state vector.
    logpdf : callable
        Pure function ``x -> float`` returning the unnormalised log
        density (``-inf`` allowed, NaN forbidden).
    batch_logpdf : callable, optional
        Vectorised variant ``(S, dimension) -> (S,)``; defaults to a loop.
    grad : callable, optional
        Analytic gradient of ``logpdf``. When absent, finite differences
        are used and charged as posterior evaluations.
    counter : {"full", "partial"}
        Which ledger counter an evaluation of this target increments.
    partial_index : int, optional
        Subset index for partial targets (required when counter="partial").
    mean, cov, log_z : optional
        Reference moments / log normalising constant when known. Targets
        built from quadrature set these from the oracle.
    """

    def __init__(
        self,
        dimension: int,
        logpdf: Callable[[np.ndarray], float],
        *,
        batch_logpdf: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        grad: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        support: Optional[Box] = None,
        counter: str = "full",
        partial_index: Optional[int] = None,
        ledger: Optional[EvalLedger] = None,
        name: str = "",
        mean=None,
        cov=None,
        log_z: Optional[float] = None,
        init_box: Optional[Box] = None,
    ):
        if counter not in ("full", "partial"):
            raise ValueError(f"unknown counter kind {counter!r}")
        if counter == "partial" and partial_index is None:
            raise ValueError("partial targets need a partial_index")
        self.dimension = int(dimension)
        self._logpdf = logpdf
        self._batch_logpdf = batch_logpdf
        self._grad = grad
        self.support = support
        self.counter = counter
        self.partial_index = partial_index
        self.ledger = ledger if ledger is not None else EvalLedger()
        self.name = name
        self.mean = None if mean is None else np.asarray(mean, dtype=float)
        self.cov = None if cov is None else np.asarray(cov, dtype=float)
        self.log_z = log_z
        self.init_box = init_box

    # -- evaluation ---------------------------------------------------

    def _check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(
                f"point has shape {x.shape}, target expects ({self.dimension},)"
            )
        return x

    def _count(self, n: int, init: bool = False) -> None:
        if init:
            self.ledger.count_init(n)
        elif self.counter == "full":
            self.ledger.count_full(n)
        else:
            self.ledger.count_partial(self.partial_index, n)

    def log_unnorm(self, x, *, init: bool = False) -> float:
        """Evaluate the unnormalised log density at one point (counted)."""
        x = self._check_point(x)
        value = float(self._logpdf(x))
        self._count(1, init=init)
        if np.isnan(value) or value == np.inf:
            raise NumericalError(f"log-density returned {value} at {x!r}")
        return value

    def log_unnorm_batch(self, X) -> np.ndarray:
        """Evaluate at an ``(S, dimension)`` batch of points (counted)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dimension:
            raise ValueError(
                f"batch has shape {X.shape}, target expects (S, {self.dimension})"
            )
        if self._batch_logpdf is not None:
            values = np.asarray(self._batch_logpdf(X), dtype=float)
        else:
            values = np.array([float(self._logpdf(row)) for row in X])
        self._count(X.shape[0])
        if np.isnan(values).any() or np.any(values == np.inf):
            raise NumericalError("log-density batch produced NaN or +inf")
        return values

    def grad_log(self, x) -> np.ndarray:
        """Gradient of the log density; finite-difference fallback."""
        x = self._check_point(x)
        if self._grad is not None:
            g = np.asarray(self._grad(x), dtype=float)
            self.ledger.count_gradient(1)
            if np.isnan(g).any():
                raise NumericalError(f"gradient returned NaN at {x!r}")
            return g
        # central differences: exactly 2 evaluations per coordinate
        g = np.empty(self.dimension)
        for j in range(self.dimension):
            h = _FD_REL_STEP * (1.0 + abs(x[j]))
            xp = x.copy()
            xm = x.copy()
            xp[j] += h
            xm[j] -= h
            fp = float(self._logpdf(xp))
            fm = float(self._logpdf(xm))
            self._count(2)
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise GradientError(
                    f"finite-difference stencil crossed the support boundary at {x!r}"
                )
            g[j] = (fp - fm) / (2.0 * h)
        return g

    def fork(self) -> "TargetDensity":
        """Copy sharing the density functions but with a fresh sub-ledger."""
        return TargetDensity(
            self.dimension,
            self._logpdf,
            batch_logpdf=self._batch_logpdf,
            grad=self._grad,
            support=self.support,
            counter=self.counter,
            partial_index=self.partial_index,
            ledger=EvalLedger(),
            name=self.name,
            mean=self.mean,
            cov=self.cov,
            log_z=self.log_z,
            init_box=self.init_box,
        )


def log_unnorm_density(target: TargetDensity, x) -> float:
    return target.log_unnorm(x)


def grad_log_density(target: TargetDensity, x) -> np.ndarray:
    return target.grad_log(x)


def analytic_moments(target: TargetDensity):
    """Reference (mean, cov) of the target; error when unknown."""
    if target.mean is None or target.cov is None:
        raise ValueError(f"target {target.name!r} has no reference moments")
    return target.mean.copy(), target.cov.copy()


def shifted_copy(target: TargetDensity, log_shift: float) -> TargetDensity:
    """Same target with ``log_shift`` added to the log density.

    Multiplying the unnormalised density by a constant must shift
    ``log Z_hat`` by exactly that amount and leave moment estimates
    untouched; this wrapper exists so that invariance can be exercised.
    """
    base_logpdf = target._logpdf
    base_batch = target._batch_logpdf
    shift = float(log_shift)

    def logpdf(x):
        return base_logpdf(x) + shift

    batch = None
    if base_batch is not None:
        def batch(X):
            return base_batch(X) + shift

    out = TargetDensity(
        target.dimension,
        logpdf,
        batch_logpdf=batch,
        grad=target._grad,
        support=target.support,
        counter=target.counter,
        partial_index=target.partial_index,
        ledger=EvalLedger(),
        name=f"{target.name}+{log_shift:g}",
        mean=target.mean,
        cov=target.cov,
        log_z=None if target.log_z is None else target.log_z + shift,
        init_box=target.init_box,
    )
    return out


# ---------------------------------------------------------------------------
# Gaussian mixtures
# ---------------------------------------------------------------------------


class GaussianMixture:
    """Finite Gaussian mixture with exact moments and gradient."""

    def __init__(self, weights, means, covs, name="mixture"):
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.asarray(means, dtype=float)
        self.covs = np.asarray(covs, dtype=float)
        if not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("mixture weights must sum to one")
        self.name = name
        self.n_components, self.dimension = self.means.shape
        self._chols = np.linalg.cholesky(self.covs)
        # per-component log normalisers: -d/2 log(2 pi) - sum(log diag(L))
        logdets = np.sum(np.log(np.diagonal(self._chols, axis1=1, axis2=2)), axis=1)
        self._log_norms = -0.5 * self.dimension * np.log(2.0 * np.pi) - logdets
        self._log_weights = np.log(self.weights)
        self._precisions = np.linalg.inv(self.covs)
        self._inv_chols = np.linalg.inv(self._chols)

    def component_logpdfs(self, X: np.ndarray) -> np.ndarray:
        """Log density of each component at each row of ``X``: (S, K)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty((X.shape[0], self.n_components))
        # squared distances may overflow to inf at absurd points; that is
        # a zero density, not an error
        with np.errstate(over="ignore"):
            for k in range(self.n_components):
                sol = (X - self.means[k]) @ self._inv_chols[k].T
                out[:, k] = self._log_norms[k] - 0.5 * np.sum(sol * sol, axis=1)
        return out

    @staticmethod
    def _lse_rows(comp: np.ndarray) -> np.ndarray:
        # hot path for chain steps: scipy's logsumexp dispatch overhead
        # dominates on a handful of components
        m = comp.max(axis=1)
        with np.errstate(invalid="ignore"):
            out = m + np.log(np.exp(comp - m[:, None]).sum(axis=1))
        dead = m == -np.inf  # whole row underflowed: density is zero, not NaN
        if dead.any():
            out[dead] = -np.inf
        return out

    def logpdf(self, x) -> float:
        return float(self.logpdf_batch(np.asarray(x, dtype=float)[None, :])[0])

    def logpdf_batch(self, X: np.ndarray) -> np.ndarray:
        comp = self.component_logpdfs(X)
        return self._lse_rows(comp + self._log_weights)

    def grad_logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        comp = self.component_logpdfs(x[None, :])[0] + self._log_weights
        resp = np.exp(comp - comp.max())
        resp /= resp.sum()
        g = np.zeros(self.dimension)
        for k in range(self.n_components):
            g += resp[k] * (self._precisions[k] @ (self.means[k] - x))
        return g

    def moments(self):
        """Exact (mean, cov) of the mixture."""
        m = self.weights @ self.means
        second = np.zeros((self.dimension, self.dimension))
        for k in range(self.n_components):
            second += self.weights[k] * (self.covs[k] + np.outer(self.means[k], self.means[k]))
        return m, second - np.outer(m, m)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        ks = rng.choice(self.n_components, size=size, p=self.weights)
        out = np.empty((size, self.dimension))
        for i, k in enumerate(ks):
            out[i] = self.means[k] + self._chols[k] @ rng.standard_normal(self.dimension)
        return out

    def as_target(self, name=None, init_box=None) -> TargetDensity:
        mean, cov = self.moments()
        return TargetDensity(
            self.dimension,
            self.logpdf,
            batch_logpdf=self.logpdf_batch,
            grad=self.grad_logpdf,
            name=name or self.name,
            mean=mean,
            cov=cov,
            log_z=0.0,  # components are normalised, weights sum to one
            init_box=init_box,
        )


def gaussian_target(mean, cov, name="gaussian") -> TargetDensity:
    """Single normalised Gaussian (known log Z = 0)."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    mix = GaussianMixture([1.0], mean[None, :], cov[None, :, :], name=name)
    return mix.as_target()


def five_mode_mixture() -> TargetDensity:
    """Equally weighted five-component bivariate Gaussian mixture.

    Well separated modes; exact mean [1.6, 1.4] and unit normalisation
    make it the stock check that an estimator finds all of the mass.
    """
    means = np.array(
        [[-10.0, -10.0], [0.0, 16.0], [13.0, 8.0], [-9.0, 7.0], [14.0, -14.0]]
    )
    covs = np.array(
        [
            [[2.0, 0.6], [0.6, 1.0]],
            [[2.0, -0.4], [-0.4, 2.0]],
            [[2.0, 0.8], [0.8, 2.0]],
            [[3.0, 0.0], [0.0, 0.5]],
            [[2.0, -0.1], [-0.1, 2.0]],
        ]
    )
    mix = GaussianMixture(np.full(5, 0.2), means, covs, name="five_mode_mixture")
    return mix.as_target(init_box=Box.of([-4.0, -4.0], [4.0, 4.0]))


def bimodal_gaussian_pair() -> TargetDensity:
    """Two equally weighted Gaussians with strong within-mode correlation."""
    means = np.array([[0.0, 0.0], [-4.0, 4.0]])
    cov = np.array([[4.0, 3.0], [3.0, 4.0]])
    mix = GaussianMixture([0.5, 0.5], means, np.array([cov, cov]), name="bimodal_pair")
    return mix.as_target(init_box=Box.of([-10.0, -10.0], [10.0, 10.0]))


def high_dim_mixture(dimension: int = 10) -> TargetDensity:
    """Three isotropic Gaussians at (-5, 6, 3) per axis, std 8."""
    base = np.array([-5.0, 6.0, 3.0])
    means = np.tile(base[:, None], (1, dimension))
    covs = np.array([64.0 * np.eye(dimension)] * 3)
    mix = GaussianMixture(np.full(3, 1.0 / 3.0), means, covs, name="high_dim_mixture")
    return mix.as_target(
        init_box=Box.of(np.full(dimension, -6.0), np.full(dimension, 6.0))
    )


# ---------------------------------------------------------------------------
# Data-backed models: likelihood/prior pairs with posterior builders
# ---------------------------------------------------------------------------


def partition_data(n_items: int, n_subsets: int) -> list[np.ndarray]:
    """Split ``range(n_items)`` into contiguous blocks with sizes within 1."""
    if not (1 <= n_subsets <= n_items):
        raise ValueError(f"cannot split {n_items} items into {n_subsets} subsets")
    base, extra = divmod(n_items, n_subsets)
    blocks = []
    start = 0
    for i in range(n_subsets):
        size = base + (1 if i < extra else 0)
        blocks.append(np.arange(start, start + size))
        start += size
    return blocks


class DataModel:
    """Likelihood/prior pair over a parameter vector.

    Subclasses implement ``log_likelihood`` (optionally restricted to a
    subset of observations) and ``log_prior``; posterior targets of all
    flavours are assembled here.
    """

    dimension: int
    support: Optional[Box] = None
    init_box: Optional[Box] = None
    name: str = "model"

    def n_observations(self) -> int:
        raise NotImplementedError

    def log_likelihood(self, x: np.ndarray, indices=None) -> float:
        raise NotImplementedError

    def log_likelihood_batch(self, X: np.ndarray, indices=None) -> np.ndarray:
        return np.array([self.log_likelihood(row, indices) for row in X])

    def log_prior(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def log_prior_batch(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.log_prior(row) for row in X])

    def posterior(self, *, mean=None, cov=None, log_z=None) -> TargetDensity:
        def logpdf(x):
            lp = self.log_prior(x)
            if lp == -np.inf:
                return -np.inf
            return self.log_likelihood(x) + lp

        def batch(X):
            lp = self.log_prior_batch(X)
            out = np.full(X.shape[0], -np.inf)
            ok = lp > -np.inf
            if np.any(ok):
                out[ok] = self.log_likelihood_batch(X[ok]) + lp[ok]
            return out

        return TargetDensity(
            self.dimension,
            logpdf,
            batch_logpdf=batch,
            support=self.support,
            name=f"{self.name}:posterior",
            mean=mean,
            cov=cov,
            log_z=log_z,
            init_box=self.init_box or self.support,
        )

    def partial_posterior(self, indices, index: int, n_subsets: int,
                          prior_mode: str = "full") -> TargetDensity:
        """Posterior restricted to a data subset.

        ``prior_mode="full"`` keeps the whole prior in every piece;
        ``"split"`` raises it to the 1/n_subsets power so the pieces
        multiply back to the full posterior.
        """
        if prior_mode not in ("full", "split"):
            raise ValueError(f"unknown prior mode {prior_mode!r}")
        indices = np.asarray(indices, dtype=int)
        scale = 1.0 if prior_mode == "full" else 1.0 / n_subsets

        def logpdf(x):
            lp = self.log_prior(x)
            if lp == -np.inf:
                return -np.inf
            return self.log_likelihood(x, indices) + scale * lp

        def batch(X):
            lp = self.log_prior_batch(X)
            out = np.full(X.shape[0], -np.inf)
            ok = lp > -np.inf
            if np.any(ok):
                out[ok] = self.log_likelihood_batch(X[ok], indices) + scale * lp[ok]
            return out

        return TargetDensity(
            self.dimension,
            logpdf,
            batch_logpdf=batch,
            support=self.support,
            counter="partial",
            partial_index=index,
            name=f"{self.name}:partial[{index}]",
            init_box=self.init_box or self.support,
        )

    def tempered_posterior(self, beta: float) -> TargetDensity:
        """Geometric-path target: likelihood to the power beta, prior kept.

        ``beta == 1`` recovers the posterior, ``beta -> 0`` flattens the
        likelihood away; ``beta > 1`` sharpens it.
        """
        if not beta > 0:
            raise ValueError("tempering exponent must be positive")

        def logpdf(x):
            lp = self.log_prior(x)
            if lp == -np.inf:
                return -np.inf
            return beta * self.log_likelihood(x) + lp

        def batch(X):
            lp = self.log_prior_batch(X)
            out = np.full(X.shape[0], -np.inf)
            ok = lp > -np.inf
            if np.any(ok):
                out[ok] = beta * self.log_likelihood_batch(X[ok]) + lp[ok]
            return out

        return TargetDensity(
            self.dimension,
            logpdf,
            batch_logpdf=batch,
            support=self.support,
            name=f"{self.name}:tempered[{beta:g}]",
            init_box=self.init_box or self.support,
        )

    def partial_posteriors(self, n_subsets: int, prior_mode: str = "full"):
        blocks = partition_data(self.n_observations(), n_subsets)
        return [
            self.partial_posterior(blocks[i], i, n_subsets, prior_mode)
            for i in range(n_subsets)
        ]


def make_tempered(model: DataModel, beta: float) -> TargetDensity:
    return model.tempered_posterior(beta)


# -- damped-oscillation regression ------------------------------------------


def make_regression_dataset(seed: int, n_obs: int = 50, damping: float = 0.1,
                            angular_rate: float = 2.0, noise_std: float = 0.1,
                            t_max: float = 10.0):
    """Noisy samples of a decaying sinusoid on an even time grid."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    t = np.linspace(0.0, t_max, n_obs)
    clean = np.exp(-damping * t) * np.sin(angular_rate * t)
    y = clean + noise_std * rng.standard_normal(n_obs)
    return t, y


class RegressionModel(DataModel):
    """Two-parameter damped oscillator fit with Gaussian noise.

    Parameters are (damping, angular rate) with a uniform box prior.
    The posterior concentrates sharply once a few dozen observations are
    available, which is what makes it a stress test for samplers started
    from the flat prior.
    """

    def __init__(self, t, y, noise_std: float = 0.1,
                 prior_box: Optional[Box] = None, name: str = "oscillation"):
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.noise_std = float(noise_std)
        self.support = prior_box or Box.of([0.0, 0.0], [10.0, 2.0 * np.pi])
        self.init_box = self.support
        self.dimension = 2
        self.name = name
        self._log_norm = -np.log(self.noise_std * np.sqrt(2.0 * np.pi))

    def n_observations(self) -> int:
        return self.t.size

    def _predict(self, damping, rate, t):
        return np.exp(-np.outer(damping, t)) * np.sin(np.outer(rate, t))

    def log_likelihood(self, x, indices=None) -> float:
        return float(self.log_likelihood_batch(np.asarray(x, float)[None, :], indices)[0])

    def log_likelihood_batch(self, X, indices=None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        t = self.t if indices is None else self.t[indices]
        y = self.y if indices is None else self.y[indices]
        pred = self._predict(X[:, 0], X[:, 1], t)
        resid = y[None, :] - pred
        return t.size * self._log_norm - 0.5 * np.sum(
            (resid / self.noise_std) ** 2, axis=1
        )

    def log_prior(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if not self.support.contains(x):
            return -np.inf
        return -self.support.log_volume()

    def log_prior_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], -np.inf)
        out[self.support.contains_batch(X)] = -self.support.log_volume()
        return out


# -- chaotic population map --------------------------------------------------


def make_logistic_map_trajectory(seed: int, length: int = 20,
                                 growth_rate: float = 3.7, capacity: float = 0.4,
                                 log_noise_std: float = 0.01):
    """Simulate the noisy logistic map y' = R y (1 - y/Omega) exp(eps)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    y = np.empty(length)
    y[0] = rng.uniform(0.0, capacity)
    for k in range(length - 1):
        g = growth_rate * y[k] * (1.0 - y[k] / capacity)
        if g <= 0.0:
            raise ValueError("trajectory left the positive-growth region; reseed")
        y[k + 1] = g * np.exp(log_noise_std * rng.standard_normal())
    return y


class LogisticMapModel(DataModel):
    """Growth-rate and capacity inference for a noisy logistic map.

    The transition kernel for one step is
    ``p(y' | y) ∝ |g / y'| exp(-(log(y'/g))^2 / (2 lam^2))`` with
    ``g = R y (1 - y/Omega)``, and zero whenever ``g <= 0``. Small noise
    makes the posterior a needle, which is the point of the benchmark.
    """

    def __init__(self, trajectory, log_noise_std: float,
                 prior_box: Optional[Box] = None, name: str = "logistic_map"):
        self.trajectory = np.asarray(trajectory, dtype=float)
        if np.any(self.trajectory <= 0):
            raise ValueError("trajectory values must be positive")
        self.lam = float(log_noise_std)
        self.support = prior_box or Box.of([0.0, 0.0], [1.0e4, 1.0e4])
        self.init_box = Box.of([1.0, 0.38], [5.0, 1.5])
        self.dimension = 2
        self.name = name
        self._y_from = self.trajectory[:-1]
        self._y_to = self.trajectory[1:]
        self._log_y_to = np.log(self._y_to)
        self._log_norm = -np.log(self.lam * np.sqrt(2.0 * np.pi))

    def n_observations(self) -> int:
        return self._y_from.size

    def log_likelihood(self, x, indices=None) -> float:
        return float(self.log_likelihood_batch(np.asarray(x, float)[None, :], indices)[0])

    def log_likelihood_batch(self, X, indices=None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y0 = self._y_from if indices is None else self._y_from[indices]
        logy1 = self._log_y_to if indices is None else self._log_y_to[indices]
        y1 = self._y_to if indices is None else self._y_to[indices]
        rate = X[:, 0][:, None]
        cap = X[:, 1][:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            g = rate * y0[None, :] * (1.0 - y0[None, :] / cap)
            valid = np.all(g > 0.0, axis=1)
            out = np.full(X.shape[0], -np.inf)
            if np.any(valid):
                gv = g[valid]
                logg = np.log(gv)
                z = (logy1[None, :] - logg) / self.lam
                out[valid] = np.sum(
                    self._log_norm + logg - np.log(y1)[None, :] - 0.5 * z * z,
                    axis=1,
                )
        return out

    def log_prior(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if not self.support.contains(x):
            return -np.inf
        return -self.support.log_volume()

    def log_prior_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], -np.inf)
        out[self.support.contains_batch(X)] = -self.support.log_volume()
        return out


# -- hierarchical basis regression (marginalised coefficients) ---------------


def basis_matrix(times, centers, width: float, kind: str = "gaussian") -> np.ndarray:
    """Design matrix of radial basis functions evaluated at ``times``."""
    times = np.asarray(times, dtype=float)
    centers = np.asarray(centers, dtype=float)
    d = times[:, None] - centers[None, :]
    if kind == "gaussian":
        return np.exp(-(d * d) / (2.0 * width * width))
    if kind == "laplacian":
        return np.exp(-np.abs(d) / width)
    raise ValueError(f"unknown basis kind {kind!r}")


def folded_gaussian_logpdf(v: float, loc: float, scale: float) -> float:
    """Log density of |N(loc, scale^2)| at v >= 0."""
    if v < 0:
        return -np.inf
    a = (v - loc) / scale
    b = (v + loc) / scale
    return float(
        logsumexp([-0.5 * a * a, -0.5 * b * b])
        - np.log(scale)
        - 0.5 * np.log(2.0 * np.pi)
    )


class ConjugateBasisModel(DataModel):
    """Marginal-likelihood model for basis regression hyperparameters.

    Coefficients are integrated out in closed form, leaving the exact
    Gaussian evidence ``y ~ N(0, scale * Psi Psi^T + noise^2 I)`` over
    three positive hyperparameters (coefficient scale, basis width,
    noise std), each with a folded-Gaussian prior.
    """

    PRIORS = {
        "width": (0.0, 100.0),
        "scale": (0.0, 400.0),
        "noise": (1.5, 9.0),
    }

    def __init__(self, times, y, n_basis: int, kind: str = "gaussian",
                 name: str = "basis_evidence"):
        self.times = np.asarray(times, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.n_basis = int(n_basis)
        self.kind = kind
        self.centers = np.linspace(self.times.min(), self.times.max(), self.n_basis)
        self.dimension = 3  # (scale, width, noise)
        self.support = Box.of([0.0, 0.0, 0.0], [np.inf, np.inf, np.inf])
        self.init_box = Box.of([1e-2, 1e-2, 1e-2], [50.0, 20.0, 10.0])
        self.name = name

    def n_observations(self) -> int:
        return self.y.size

    def marginal_log_likelihood(self, scale: float, width: float, noise: float) -> float:
        """Evidence with coefficients integrated out (Cholesky form)."""
        if scale <= 0 or width <= 0 or noise <= 0:
            return -np.inf
        psi = basis_matrix(self.times, self.centers, width, self.kind)
        cov = scale * (psi @ psi.T) + noise * noise * np.eye(self.y.size)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"evidence covariance not SPD: {exc}") from exc
        sol = np.linalg.solve(chol, self.y)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        return float(
            -0.5 * (self.y.size * np.log(2.0 * np.pi) + logdet + sol @ sol)
        )

    def log_likelihood(self, x, indices=None) -> float:
        if indices is not None:
            raise ValueError("evidence model does not factorise over observations")
        return self.marginal_log_likelihood(x[0], x[1], x[2])

    def log_prior(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            return -np.inf
        total = 0.0
        for v, key in zip(x, ("scale", "width", "noise")):
            loc, sc = self.PRIORS[key]
            total += folded_gaussian_logpdf(float(v), loc, sc)
        return total

    def sample_prior(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cols = []
        for key in ("scale", "width", "noise"):
            loc, sc = self.PRIORS[key]
            cols.append(np.abs(loc + sc * rng.standard_normal(size)))
        return np.column_stack(cols)


def make_conjugate_dataset(seed: int, n_obs: int = 12, n_basis: int = 4,
                           kind: str = "gaussian", scale: float = 16.0,
                           width: float = 1.2, noise: float = 0.5,
                           t_max: float = 10.0):
    """Draw observations from the basis model at known hyperparameters."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    times = np.linspace(0.0, t_max, n_obs)
    centers = np.linspace(0.0, t_max, n_basis)
    psi = basis_matrix(times, centers, width, kind)
    cov = scale * (psi @ psi.T) + noise * noise * np.eye(n_obs)
    y = np.linalg.cholesky(cov) @ rng.standard_normal(n_obs)
    return times, y


# ---------------------------------------------------------------------------
# Dataset CSV round-trip (columns: index, t, y)
# ---------------------------------------------------------------------------


def write_dataset_csv(path, t, y) -> None:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "t", "y"])
        for i in range(t.size):
            writer.writerow([i, repr(float(t[i])), repr(float(y[i]))])


def read_dataset_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["index", "t", "y"]:
            raise ValueError(f"{path}: expected header 'index,t,y', got {header}")
        t, y = [], []
        for row in reader:
            if not row:
                continue
            t.append(float(row[1]))
            y.append(float(row[2]))
    return np.asarray(t), np.asarray(y)
