"""Synthetic race data and brute-force Monte-Carlo oracles for the tests."""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import special

from .descriptive import YearHistogram, lognormal_bin_model, lognormal_log_params
from .racedata import (
    MAX_SIX_DAY_MILES,
    Completeness,
    Dataset,
    Era,
    Gender,
    PerformanceRecord,
    RaceEvent,
    RaceKind,
    write_results,
)
from .sampler import make_rng


@dataclass(frozen=True)
class SynthSpec:
    """Generating parameters; the tail lives in ``x = -ln(miles)`` space."""

    mu_star: float = -6.35
    sigma_star: float = 0.12
    c: float = -math.log(500.0)
    n: int = 500
    growth: tuple[float, float, float] = (25.0, 0.082, 1981.5)
    years: tuple[int, int] = (1981, 2018)
    seed: int = 0
    gender: str = "M"
    bulk_mean_miles: float = 300.0
    bulk_std_miles: float = 90.0

    def __post_init__(self):
        if self.sigma_star <= 0:
            raise ValueError("sigma_star must be positive")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.years[1] < self.years[0]:
            raise ValueError("years must be ordered")

    @property
    def c_miles(self) -> float:
        return math.exp(-self.c)


def truncated_normal_draws(mu: float, sigma: float, c: float, size, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from N(mu, sigma) restricted to ``x <= c``.

    Works in log-CDF space so extreme truncation points stay accurate;
    ``c = inf`` gives untruncated draws.
    """
    u = rng.random(size)
    log_mass = special.log_ndtr((c - mu) / sigma)
    with np.errstate(divide="ignore"):
        z = special.ndtri_exp(np.log(u) + log_mass)
    return np.minimum(mu + sigma * z, c)


def sample_truncated_normal(spec: SynthSpec) -> np.ndarray:
    return truncated_normal_draws(spec.mu_star, spec.sigma_star, spec.c, spec.n, make_rng(spec.seed))


def truncated_normal_cdf(x, mu: float, sigma: float, c: float):
    """Closed-form CDF of the truncated normal on ``(-inf, c]``."""
    x = np.minimum(np.asarray(x, dtype=float), c)
    return special.ndtr((x - mu) / sigma) / special.ndtr((c - mu) / sigma)


def truncated_normal_mean(mu: float, sigma: float, c: float) -> float:
    alpha = (c - mu) / sigma
    return mu - sigma * math.exp(-0.5 * alpha * alpha - 0.5 * math.log(2 * math.pi) - special.log_ndtr(alpha))


def expected_yearly_counts(spec: SynthSpec) -> YearHistogram:
    """Noise-free counts ``N0 exp[r (year + 0.5 - t0)]``."""
    n0, r, t0 = spec.growth
    years = range(spec.years[0], spec.years[1] + 1)
    return YearHistogram(tuple((y, n0 * math.exp(r * (y + 0.5 - t0))) for y in years))


def _bulk_miles(spec: SynthSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    """Log-normal bulk restricted below the tail threshold (inverse CDF)."""
    m, s = lognormal_log_params(spec.bulk_mean_miles, spec.bulk_std_miles)
    upper = special.ndtr((math.log(spec.c_miles) - m) / s)
    # keep clear of zero so every mark is a valid positive distance
    lower = special.ndtr((math.log(1.0) - m) / s)
    u = lower + rng.random(size) * (upper - lower)
    miles = np.exp(m + s * special.ndtri(u))
    return np.clip(miles, 1.0, np.nextafter(spec.c_miles, 0.0))


def generate_dataset(spec: SynthSpec) -> Dataset:
    """One race per year with Poisson bulk participation plus ``n`` tail marks.

    The bulk sits strictly below ``exp(-c)`` miles, so the tail sample at that
    threshold is exactly the ``n`` truncated-normal draws. Tail marks are
    spread over years in proportion to the expected participation.
    """
    rng = make_rng(spec.seed)
    gender = Gender(spec.gender)
    years = np.arange(spec.years[0], spec.years[1] + 1)
    n0, r, t0 = spec.growth
    expected = n0 * np.exp(r * (years + 0.5 - t0))
    bulk_counts = rng.poisson(expected)

    tail_x = truncated_normal_draws(spec.mu_star, spec.sigma_star, spec.c, spec.n, rng)
    # the record schema caps marks below 1000 mi; redraw the rare excess
    limit = -math.log(MAX_SIX_DAY_MILES)
    for _ in range(100):
        bad = tail_x <= limit
        if not bad.any():
            break
        tail_x[bad] = truncated_normal_draws(spec.mu_star, spec.sigma_star, spec.c, int(bad.sum()), rng)
    tail_x = np.maximum(tail_x, np.nextafter(limit, 0.0))
    tail_years = rng.choice(years, size=spec.n, p=expected / expected.sum())

    era = Era.PEDESTRIANISM if spec.years[1] <= 1888 else Era.MODERN
    races = []
    records = []
    serial = 0
    for year, k in zip(years, bulk_counts):
        race_id = f"SYN{int(year)}"
        races.append(RaceEvent(race_id, f"Synthetic Six Day {int(year)}", "USA",
                               dt.date(int(year), 7, 1), 144.0, RaceKind.SIX_DAY, Completeness.COMPLETE))
        tail_here = np.exp(-tail_x[tail_years == year])
        marks = np.concatenate([_bulk_miles(spec, int(k), rng), tail_here])
        yobs = rng.integers(int(year) - 70, int(year) - 18, size=marks.size)
        for d, yob in zip(marks, yobs):
            serial += 1
            records.append(PerformanceRecord(race_id, f"Athlete {serial:06d}", gender, float(d), int(yob), era))
    return Dataset(tuple(records), tuple(races))


def write_synthetic(spec: SynthSpec, csv_path: str | Path) -> Dataset:
    """Write the dataset as canonical CSV plus a ``.json`` sidecar of the generating parameters."""
    ds = generate_dataset(spec)
    csv_path = Path(csv_path)
    write_results(ds, csv_path)
    sidecar = csv_path.with_suffix(".json")
    payload = {"schema_version": 1, "parameters": asdict(spec), "c_miles": spec.c_miles, "n_records": len(ds)}
    sidecar.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return ds


def lognormal_histogram(mean: float, std: float, norm: float, bin_width: float = 20.0,
                        lo: float = 0.0, hi: float = 1000.0, mode: str = "mass"):
    """Noise-free histogram of ``norm`` log-normal marks as ``(lower_edges, counts)``.

    ``mode="mass"`` integrates the density over each bin (via the CDF);
    ``mode="center"`` uses ``width * pdf(center)``.
    """
    m, s = lognormal_log_params(mean, std)
    edges = np.arange(lo, hi, bin_width)
    if mode == "mass":
        cdf = special.ndtr((np.log(np.append(edges, edges[-1] + bin_width).clip(1e-300)) - m) / s)
        counts = norm * np.diff(cdf)
    else:
        counts = lognormal_bin_model(edges, bin_width, norm, m, s, "center")
    return edges, counts


# Oracles ---------------------------------------------------------------------

def oracle_best_performance(mu: float, sigma: float, c: float, attempts: int, replicates: int,
                            seed: int, chunk: int = 2_000_000) -> tuple[float, float]:
    """Mean and standard error of the best (minimum) ``x`` over ``attempts`` draws."""
    if attempts < 1:
        raise ValueError("attempts must be at least 1")
    rng = make_rng(seed)
    per_chunk = max(1, chunk // attempts)
    best = np.empty(replicates)
    done = 0
    while done < replicates:
        k = min(per_chunk, replicates - done)
        best[done:done + k] = truncated_normal_draws(mu, sigma, c, (k, attempts), rng).min(axis=1)
        done += k
    return float(best.mean()), float(best.std(ddof=1) / math.sqrt(replicates))


def oracle_world_record_prob(posterior_samples: np.ndarray, n: int, w: float, c: float, a: float,
                             t_f: float, t_m: float, replicates: int, seed: int) -> tuple[float, float]:
    """Fraction of simulated futures in which some mark beats ``a``.

    Each future draws ``(mu, sigma)`` from the posterior samples, a Poisson
    number of tail attempts with mean ``Phi(c) n t_f / (Phi(w) t_m)`` and that
    many truncated-normal marks. Returns ``(p, binomial stderr)``.
    """
    rng = make_rng(seed)
    picks = posterior_samples[rng.integers(0, len(posterior_samples), size=replicates)]
    hits = 0
    for mu, sigma in picks:
        lam = n * t_f / t_m * math.exp(special.log_ndtr((c - mu) / sigma) - special.log_ndtr((w - mu) / sigma))
        m = rng.poisson(lam)
        if m and truncated_normal_draws(mu, sigma, c, m, rng).min() < a:
            hits += 1
    p = hits / replicates
    return p, math.sqrt(max(p * (1 - p), 1.0 / replicates) / replicates)
