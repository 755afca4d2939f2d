"""Bayesian record forecasting from the tail of the performance distribution.

Performances are mapped to ``x = -ln(D)`` so that better marks are smaller.
The best ``n`` marks (``x <= c``) are modelled as the lower tail of a normal
distribution, the posterior over ``(mu, sigma)`` is sampled with the ensemble
sampler and histogrammed onto a uniform grid, and the grid is used to take
posterior expectations of the record-break probability

    B(a) = 1 - [1 - Phi(a | mu, sigma)] ** (N t_f / t_m),   N = n / Phi(w | mu, sigma)

and of the expected best mark within ``t_f`` years.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from . import sampler as mcmc
from .errors import DegenerateCDF, InsufficientTail, NonMonotoneCDF, RecordBelowThreshold
from .racedata import Dataset

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)
GRID_DMU = 0.005
GRID_DSIGMA = 0.0025
Y_RANGE_MILES = (1250.0, 250.0)


@dataclass(frozen=True)
class PriorBox:
    mu_min: float
    mu_max: float
    sigma_min: float
    sigma_max: float

    def __post_init__(self):
        if not self.mu_min < self.mu_max:
            raise ValueError("mu_min must be below mu_max")
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")

    @classmethod
    def parse(cls, text: str) -> "PriorBox":
        """Parse ``mu_min:mu_max:sigma_min:sigma_max``."""
        parts = text.split(":")
        if len(parts) != 4:
            raise ValueError(f"prior box needs four colon-separated numbers, got {text!r}")
        return cls(*(float(p) for p in parts))

    def contains(self, mu, sigma):
        mu = np.asarray(mu)
        sigma = np.asarray(sigma)
        return (mu >= self.mu_min) & (mu <= self.mu_max) & (sigma >= self.sigma_min) & (sigma <= self.sigma_max)

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.mu_min + self.mu_max), 0.5 * (self.sigma_min + self.sigma_max))

    def as_list(self) -> list[float]:
        return [self.mu_min, self.mu_max, self.sigma_min, self.sigma_max]


MEN_PRIOR = PriorBox(-6.6, -5.9, 0.05, 0.5)
WOMEN_PRIOR = PriorBox(-6.4, -5.7, 0.05, 0.5)
PEDESTRIAN_PRIOR = MEN_PRIOR


@dataclass(frozen=True)
class TailSample:
    x_values: np.ndarray
    c: float
    t_m: float

    def __post_init__(self):
        x = np.sort(np.asarray(self.x_values, dtype=float))
        if x.size == 0:
            raise InsufficientTail(0)
        if np.any(x > self.c):
            raise ValueError("tail values must not exceed the threshold c")
        if self.t_m <= 0:
            raise ValueError("t_m must be positive")
        x.setflags(write=False)
        object.__setattr__(self, "x_values", x)

    @property
    def n(self) -> int:
        return int(self.x_values.size)

    @property
    def worst(self) -> float:
        return float(self.x_values[-1])

    @property
    def d_min_miles(self) -> float:
        return math.exp(-self.c)


def build_tail_sample(ds: Dataset, d_min: float, t_m: float | None = None, min_count: int = 10) -> TailSample:
    """Select performances with ``distance >= d_min`` as ``x = -ln(distance)``."""
    dist = np.array([r.distance_miles for r in ds.records if r.distance_miles >= d_min], dtype=float)
    if dist.size < min_count:
        raise InsufficientTail(int(dist.size), min_count)
    return TailSample(-np.log(dist), -math.log(d_min), ds.t_m if t_m is None else float(t_m))


# Likelihood and posterior --------------------------------------------------

def log_likelihood(x, mu, sigma, c):
    """Log density of a normal truncated to ``x <= c``; ``-inf`` above ``c``."""
    x = np.asarray(x, dtype=float)
    z = (x - mu) / sigma
    val = -0.5 * z * z - np.log(sigma) - LOG_SQRT_2PI - special.log_ndtr((c - mu) / sigma)
    val = np.where(x <= c, val, -np.inf)
    return val[()] if val.ndim == 0 else val


def log_posterior(X: TailSample, mu, sigma, prior: PriorBox):
    """Unnormalised log posterior under uniform priors; ``-inf`` outside the box.

    Uses the sample mean and scatter, so the cost is independent of ``n``.
    Accepts scalars or broadcastable arrays of ``mu`` and ``sigma``.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    inside = prior.contains(mu, sigma)
    n = X.n
    xbar = float(X.x_values.mean())
    scatter = float(np.sum((X.x_values - xbar) ** 2))
    safe_sigma = np.where(inside, sigma, 1.0)
    quad = (scatter + n * (xbar - mu) ** 2) / (2.0 * safe_sigma**2)
    val = -quad - n * (np.log(safe_sigma) + LOG_SQRT_2PI) - n * special.log_ndtr((X.c - mu) / safe_sigma)
    val = np.where(inside, val, -np.inf)
    return val[()] if val.ndim == 0 else val


def posterior_target(X: TailSample, prior: PriorBox):
    """Vectorised ``(m, 2) -> (m,)`` log posterior for the sampler."""

    def target(points: np.ndarray) -> np.ndarray:
        return log_posterior(X, points[:, 0], points[:, 1], prior)

    return target


# Posterior grid ------------------------------------------------------------

def _edges(lo: float, hi: float, step: float) -> np.ndarray:
    n = max(1, int(round((hi - lo) / step)))
    return np.linspace(lo, hi, n + 1)


@dataclass(frozen=True)
class PosteriorGrid:
    mu_edges: np.ndarray
    sigma_edges: np.ndarray
    cell_mass: np.ndarray  # (n_mu, n_sigma), sums to one

    def __post_init__(self):
        mass = np.asarray(self.cell_mass, dtype=float)
        if mass.shape != (len(self.mu_edges) - 1, len(self.sigma_edges) - 1):
            raise ValueError("cell_mass shape does not match the edges")
        if np.any(mass < 0):
            raise ValueError("cell masses must be nonnegative")
        if abs(mass.sum() - 1.0) > 1e-12:
            raise ValueError(f"cell masses sum to {mass.sum()!r}, not 1")
        for arr in (self.mu_edges, self.sigma_edges, mass):
            arr.setflags(write=False)
        object.__setattr__(self, "cell_mass", mass)

    @classmethod
    def from_samples(cls, samples: np.ndarray, prior: PriorBox, dmu: float = GRID_DMU, dsigma: float = GRID_DSIGMA):
        mu_edges = _edges(prior.mu_min, prior.mu_max, dmu)
        sigma_edges = _edges(prior.sigma_min, prior.sigma_max, dsigma)
        samples = np.asarray(samples, dtype=float)
        hist, _, _ = np.histogram2d(samples[:, 0], samples[:, 1], bins=[mu_edges, sigma_edges])
        total = hist.sum()
        if total == 0:
            raise ValueError("no samples fall inside the prior box")
        return cls(mu_edges, sigma_edges, hist / total)

    @classmethod
    def point_mass(cls, mu: float, sigma: float, half_width: float = 1e-3) -> "PosteriorGrid":
        """Single-cell grid centred on ``(mu, sigma)``."""
        return cls(
            np.array([mu - half_width, mu + half_width]),
            np.array([sigma - half_width, sigma + half_width]),
            np.ones((1, 1)),
        )

    @property
    def mu_centers(self) -> np.ndarray:
        return 0.5 * (self.mu_edges[1:] + self.mu_edges[:-1])

    @property
    def sigma_centers(self) -> np.ndarray:
        return 0.5 * (self.sigma_edges[1:] + self.sigma_edges[:-1])

    def occupied(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Centres and masses of the cells with nonzero mass, flattened."""
        i, j = np.nonzero(self.cell_mass)
        return self.mu_centers[i], self.sigma_centers[j], self.cell_mass[i, j]

    def to_dict(self) -> dict:
        return {
            "mu_edges": self.mu_edges.tolist(),
            "sigma_edges": self.sigma_edges.tolist(),
            "cell_mass": self.cell_mass.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorGrid":
        return cls(np.array(d["mu_edges"], dtype=float), np.array(d["sigma_edges"], dtype=float),
                   np.array(d["cell_mass"], dtype=float))


def grid_search_map(X: TailSample, prior: PriorBox, dmu: float = GRID_DMU, dsigma: float = GRID_DSIGMA):
    """Maximise the log posterior over the grid-cell centres; a starting guess for MCMC."""
    mu_e = _edges(prior.mu_min, prior.mu_max, dmu)
    sigma_e = _edges(prior.sigma_min, prior.sigma_max, dsigma)
    mu = 0.5 * (mu_e[1:] + mu_e[:-1])
    sigma = 0.5 * (sigma_e[1:] + sigma_e[:-1])
    M, S = np.meshgrid(mu, sigma, indexing="ij")
    lp = log_posterior(X, M, S, prior)
    i, j = np.unravel_index(int(np.argmax(lp)), lp.shape)
    return float(M[i, j]), float(S[i, j]), lp


def fit_tail(
    X: TailSample,
    prior: PriorBox,
    cfg: mcmc.SamplerConfig,
    init_center: Sequence[float] | None = None,
    init_scale: float = 1e-4,
) -> tuple[mcmc.Chain, PosteriorGrid]:
    """Sample the tail posterior and grid it at (0.005, 0.0025) spacing."""
    if init_center is None:
        mu0, s0, _ = grid_search_map(X, prior)
        init_center = (mu0, s0)
    chain = mcmc.run(
        posterior_target(X, prior), cfg, init_center, init_scale, vectorized=True, param_names=("mu", "sigma")
    )
    return chain, PosteriorGrid.from_samples(chain.samples, prior)


# Record probabilities ------------------------------------------------------

def log_population_size(n, w, mu, sigma):
    return np.log(n) - special.log_ndtr((w - np.asarray(mu)) / np.asarray(sigma))


def population_size(n: int, w: float, mu: float, sigma: float) -> float:
    """Total attempts implied by ``n`` tail marks whose worst is ``w``: ``n / Phi(w)``."""
    if n < 1 or sigma <= 0:
        raise ValueError("need n >= 1 and sigma > 0")
    cdf = float(special.ndtr((w - mu) / sigma))
    if cdf < 1e-300:
        raise DegenerateCDF(f"Phi(w={w} | mu={mu}, sigma={sigma}) = {cdf:.3g}")
    return float(np.exp(log_population_size(n, w, mu, sigma)))


def _break_prob(log_survival, exponent):
    """``1 - exp(exponent * log_survival)`` without cancellation; zero exponent gives 0."""
    log_survival = np.asarray(log_survival, dtype=float)
    exponent = np.asarray(exponent, dtype=float)
    with np.errstate(invalid="ignore"):
        out = -np.expm1(exponent * log_survival)
    return np.where(exponent == 0, 0.0, out)


def best_better_from_cdf(cdf, exponent):
    """B for a given single-attempt probability ``cdf`` of beating the mark."""
    with np.errstate(divide="ignore"):
        log_surv = np.log1p(-np.asarray(cdf, dtype=float))
    return _break_prob(log_surv, exponent)


def prob_best_better(a, mu, sigma, N, t_f: float, t_m: float):
    """Probability that the best of ``N t_f / t_m`` attempts beats ``a``."""
    if t_m <= 0 or t_f < 0:
        raise ValueError("need t_m > 0 and t_f >= 0")
    log_surv = special.log_ndtr(-(np.asarray(a, dtype=float) - mu) / sigma)
    out = _break_prob(log_surv, np.asarray(N, dtype=float) * (t_f / t_m))
    return out[()] if np.ndim(out) == 0 else out


def expected_record_prob(a: float, grid: PosteriorGrid, n: int, w: float, t_f: float, t_m: float) -> float:
    """Posterior expectation of B(a), with the population size recomputed per cell."""
    mu, sigma, mass = grid.occupied()
    pop = np.exp(log_population_size(n, w, mu, sigma))
    b = prob_best_better(a, mu, sigma, pop, t_f, t_m)
    return float(np.sum(np.atleast_1d(b) * mass))


def y_grid(y_range_miles: tuple[float, float] = Y_RANGE_MILES, step_miles: float = 1.0) -> np.ndarray:
    """Candidate best marks in x-space, ascending, at uniform spacing in miles."""
    hi, lo = max(y_range_miles), min(y_range_miles)
    miles = np.arange(hi, lo - 0.5 * step_miles, -step_miles)
    return -np.log(miles)


class _BestCurve:
    """Shared per-cell log-survival table for evaluating the best-mark CDF at many horizons."""

    def __init__(self, grid: PosteriorGrid, n: int, w: float, t_m: float, y: np.ndarray):
        self.mu, self.sigma, self.mass = grid.occupied()
        self.pop = np.exp(log_population_size(n, w, self.mu, self.sigma))
        self.t_m = t_m
        self.y = y
        # (len(y), cells) table of log[1 - Phi(y | mu, sigma)]
        self.log_surv = special.log_ndtr(-(y[:, None] - self.mu[None, :]) / self.sigma[None, :])

    def cdf(self, t_f: float) -> np.ndarray:
        b = _break_prob(self.log_surv, self.pop[None, :] * (t_f / self.t_m))
        return b @ self.mass

    def expected_x(self, t_f: float) -> float:
        p = self.cdf(t_f)
        dp = np.diff(p)
        if np.any(dp < -1e-12):
            warnings.warn(
                f"best-mark CDF decreases by up to {-dp.min():.3g} at t_f={t_f}", NonMonotoneCDF, stacklevel=3
            )
        # forward-difference density, constant on each interval, integrated exactly
        # against y; normalised by the CDF mass that falls inside the y range
        mid = 0.5 * (self.y[1:] + self.y[:-1])
        return float(np.sum(mid * dp) / np.sum(dp))


def expected_best(
    grid: PosteriorGrid,
    n: int,
    w: float,
    t_f: float,
    t_m: float,
    y_range_miles: tuple[float, float] = Y_RANGE_MILES,
    step_miles: float = 1.0,
) -> float:
    """Posterior-expected best mark within ``t_f`` years, in miles."""
    return math.exp(-expected_best_x(grid, n, w, t_f, t_m, y_range_miles, step_miles))


def expected_best_x(grid, n, w, t_f, t_m, y_range_miles=Y_RANGE_MILES, step_miles=1.0) -> float:
    """As :func:`expected_best` but returned in x-space."""
    if t_f <= 0:
        raise ValueError("t_f must be positive")
    return _BestCurve(grid, n, w, t_m, y_grid(y_range_miles, step_miles)).expected_x(t_f)


def expected_best_curve(grid, n, w, t_fs, t_m, y_range_miles=Y_RANGE_MILES, step_miles=1.0) -> np.ndarray:
    """Expected best mark in miles at each horizon in ``t_fs``."""
    curve = _BestCurve(grid, n, w, t_m, y_grid(y_range_miles, step_miles))
    return np.array([math.exp(-curve.expected_x(t)) for t in t_fs])


def breakeven_years(t_fs: Sequence[float], best_miles: Sequence[float], d_rec: float) -> float | None:
    """First horizon where the expected best reaches ``d_rec``, linear in (miles, ln t_f)."""
    t_fs = np.asarray(t_fs, dtype=float)
    best = np.asarray(best_miles, dtype=float)
    above = np.nonzero(best >= d_rec)[0]
    if above.size == 0:
        return None
    i = int(above[0])
    if i == 0:
        return float(t_fs[0])
    l0, l1 = math.log(t_fs[i - 1]), math.log(t_fs[i])
    m0, m1 = best[i - 1], best[i]
    return float(math.exp(l0 + (d_rec - m0) / (m1 - m0) * (l1 - l0)))


# End to end ----------------------------------------------------------------

@dataclass(frozen=True)
class ForecastResult:
    record_miles: float
    record_x: float
    d_min_miles: float
    prior: PriorBox
    t_m: float
    n: int
    worst: float
    horizons: tuple[tuple[float, float], ...]
    expected_best_curve: tuple[tuple[float, float], ...]
    breakeven_years: float | None
    map_estimate: tuple[float, float]
    acceptance_fraction: float
    sampler_metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "record_miles": self.record_miles,
            "d_min_miles": self.d_min_miles,
            "prior_box": asdict(self.prior),
            "t_m": self.t_m,
            "n": self.n,
            "worst_x": self.worst,
            "population_size": "per-cell",
            "horizons": [{"t_f": t, "p_hat": p} for t, p in self.horizons],
            "expected_best": [{"t_f": t, "miles": m} for t, m in self.expected_best_curve],
            "breakeven_years": self.breakeven_years,
            "map_mu": self.map_estimate[0],
            "map_sigma": self.map_estimate[1],
            "acceptance_fraction": self.acceptance_fraction,
            "sampler_metadata": self.sampler_metadata,
        }


def forecast_horizons(n_bins: int = 21, t_min: float = 1.0, t_max: float = 100.0) -> np.ndarray:
    return np.logspace(math.log10(t_min), math.log10(t_max), n_bins)


def forecast_from_grid(
    X: TailSample,
    grid: PosteriorGrid,
    d_rec: float,
    horizons: Sequence[float] = (1.0, 5.0, 10.0),
    y_range_miles: tuple[float, float] = Y_RANGE_MILES,
    step_miles: float = 1.0,
    n_curve_bins: int = 21,
) -> tuple[list[tuple[float, float]], list[tuple[float, float]], float | None]:
    a = -math.log(d_rec)
    probs = [(float(t), expected_record_prob(a, grid, X.n, X.worst, t, X.t_m)) for t in horizons]
    curve = _BestCurve(grid, X.n, X.worst, X.t_m, y_grid(y_range_miles, step_miles))
    t_fs = forecast_horizons(n_curve_bins)
    best = [math.exp(-curve.expected_x(t)) for t in t_fs]
    return probs, list(zip(t_fs.tolist(), best)), breakeven_years(t_fs, best, d_rec)


def forecast(
    ds: Dataset,
    d_min: float,
    d_rec: float,
    prior: PriorBox,
    cfg: mcmc.SamplerConfig,
    horizons: Sequence[float] = (1.0, 5.0, 10.0),
    y_range_miles: tuple[float, float] = Y_RANGE_MILES,
    step_miles: float = 1.0,
    t_m: float | None = None,
) -> ForecastResult:
    if d_rec < d_min:
        raise RecordBelowThreshold(d_rec, d_min)
    X = build_tail_sample(ds, d_min, t_m=t_m)
    chain, grid = fit_tail(X, prior, cfg)
    probs, curve, t_be = forecast_from_grid(X, grid, d_rec, horizons, y_range_miles, step_miles)
    return ForecastResult(
        record_miles=float(d_rec),
        record_x=-math.log(d_rec),
        d_min_miles=float(d_min),
        prior=prior,
        t_m=X.t_m,
        n=X.n,
        worst=X.worst,
        horizons=tuple(probs),
        expected_best_curve=tuple(curve),
        breakeven_years=t_be,
        map_estimate=(float(chain.map_estimate[0]), float(chain.map_estimate[1])),
        acceptance_fraction=chain.acceptance_fraction,
        sampler_metadata=chain.metadata(),
    )


def tail_histogram(X: TailSample, dx: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Counts of tail marks in x-bins of width ``dx`` ending at ``c``."""
    lo = X.c - dx * math.ceil((X.c - X.x_values[0]) / dx + 1e-9)
    edges = np.arange(lo, X.c + 0.5 * dx, dx)
    counts, _ = np.histogram(X.x_values, bins=edges)
    return edges, counts


def tail_model_counts(edges: np.ndarray, mu: float, sigma: float, X: TailSample) -> np.ndarray:
    """Expected counts per x-bin for the truncated normal with ``n`` marks."""
    cdf = special.ndtr((np.asarray(edges) - mu) / sigma)
    return X.n * np.diff(cdf) / special.ndtr((X.c - mu) / sigma)
