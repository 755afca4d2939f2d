"""Participation, performance-distribution and record analyses.

All functions are pure over an immutable :class:`~sixday.racedata.Dataset`.
"""

from __future__ import annotations

import datetime as dt
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special, stats

from .errors import DegenerateData, EmptyDataset, InsufficientBins, OutOfRange
from .lm import levenberg_marquardt, numeric_jacobian
from .racedata import (
    AgeBand,
    AgeGroup,
    Dataset,
    Gender,
    GenderCounts,
    age_group_of,
    athlete_key,
    group_by_athlete,
)

EXCEPTIONAL_MEN_MILES = 500.0
EXCEPTIONAL_WOMEN_MILES = 450.0
GROWTH_T0 = 1981.5


@dataclass(frozen=True)
class YearHistogram:
    # counts are integers for observed data; expectation-valued series may be real
    bins: tuple[tuple[int, float], ...]

    def __post_init__(self):
        years = [y for y, _ in self.bins]
        if any(b <= a for a, b in zip(years, years[1:])):
            raise ValueError("years must be strictly increasing")
        if any(c < 0 for _, c in self.bins):
            raise ValueError("counts must be nonnegative")

    @property
    def years(self) -> np.ndarray:
        return np.array([y for y, _ in self.bins], dtype=int)

    @property
    def counts(self) -> np.ndarray:
        return np.array([c for _, c in self.bins], dtype=float)

    def count(self, year: int) -> float:
        return dict(self.bins).get(year, 0)


@dataclass(frozen=True)
class GrowthFit:
    N0: float
    r: float
    t0: float
    stderr_N0: float
    stderr_r: float
    sse: float

    def predict(self, t) -> np.ndarray:
        return self.N0 * np.exp(self.r * (np.asarray(t, dtype=float) - self.t0))


@dataclass(frozen=True)
class DistanceHistogram:
    bin_width: float
    bins: tuple[tuple[float, int], ...]

    @property
    def lower_edges(self) -> np.ndarray:
        return np.array([e for e, _ in self.bins], dtype=float)

    @property
    def counts(self) -> np.ndarray:
        return np.array([c for _, c in self.bins], dtype=float)

    @property
    def centers(self) -> np.ndarray:
        return self.lower_edges + 0.5 * self.bin_width

    @property
    def total(self) -> int:
        return int(sum(c for _, c in self.bins))


@dataclass(frozen=True)
class LogNormalFit:
    arith_mean: float
    arith_std: float
    norm: float
    chi2: float
    dof: int
    p_value: float
    log_mu: float
    log_sigma: float
    stderr_mean: float
    stderr_std: float
    mode: str

    def expected_counts(self, lower_edges, bin_width: float) -> np.ndarray:
        return lognormal_bin_model(
            np.asarray(lower_edges, dtype=float), bin_width, self.norm, self.log_mu, self.log_sigma, self.mode
        )


@dataclass(frozen=True)
class SummaryStats:
    n: int
    median: float
    mean: float
    std: float


@dataclass(frozen=True)
class ProgressionEntry:
    date: dt.date
    athlete_name: str
    distance_miles: float


@dataclass(frozen=True)
class RecordProgression:
    entries: tuple[ProgressionEntry, ...]

    @property
    def distances(self) -> list[float]:
        return [e.distance_miles for e in self.entries]


# Participation -------------------------------------------------------------

def yearly_participation(ds: Dataset) -> YearHistogram:
    """Performances per calendar year, zero-filled across the dataset's span."""
    if not ds.records:
        raise EmptyDataset()
    counts = Counter(ds.year_of(r) for r in ds.records)
    first = min(ds.first_year, min(counts))
    last = max(ds.last_year, max(counts))
    return YearHistogram(tuple((y, counts.get(y, 0)) for y in range(first, last + 1)))


def fit_growth(h: YearHistogram, t0: float = GROWTH_T0) -> GrowthFit:
    """Fit ``N(t) = N0 exp[r (t - t0)]`` to yearly counts at mid-year times."""
    t = h.years.astype(float) + 0.5
    y = h.counts
    if not np.any(y > 0):
        raise DegenerateData("all yearly counts are zero")
    nz = y > 0
    if nz.sum() < 3:
        raise InsufficientBins(f"growth fit needs >= 3 nonzero years, got {int(nz.sum())}")

    # log-linear start on the nonzero years
    slope, intercept = np.polyfit(t[nz] - t0, np.log(y[nz]), 1)
    p0 = np.array([math.exp(intercept), slope])

    def residual(p):
        return y - p[0] * np.exp(p[1] * (t - t0))

    def jacobian(p):
        e = np.exp(p[1] * (t - t0))
        return -np.column_stack([e, p[0] * (t - t0) * e])

    res = levenberg_marquardt(residual, jacobian, p0)
    err = res.stderr
    return GrowthFit(
        N0=float(res.params[0]),
        r=float(res.params[1]),
        t0=t0,
        stderr_N0=float(err[0]),
        stderr_r=float(err[1]),
        sse=res.sse,
    )


# Performance distributions -----------------------------------------------

def _summary(values: Sequence[float]) -> SummaryStats:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise EmptyDataset()
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return SummaryStats(int(arr.size), float(np.median(arr)), float(arr.mean()), std)


def summary_stats(ds: Dataset | Sequence[float]) -> SummaryStats:
    """Sample size, median, mean and sample standard deviation of distances."""
    values = ds.distances() if isinstance(ds, Dataset) else ds
    return _summary(values)


def distance_histogram(ds: Dataset | Sequence[float], bin_width: float = 20.0) -> DistanceHistogram:
    """Left-closed bins anchored at zero; ``d`` lands in ``floor(d / bin_width)``."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    values = np.asarray(ds.distances() if isinstance(ds, Dataset) else ds, dtype=float)
    if values.size == 0:
        raise EmptyDataset()
    idx = np.floor(values / bin_width).astype(int)
    lo, hi = int(idx.min()), int(idx.max())
    counts = np.bincount(idx - lo, minlength=hi - lo + 1)
    return DistanceHistogram(
        float(bin_width),
        tuple((float(k * bin_width), int(c)) for k, c in zip(range(lo, hi + 1), counts)),
    )


def lognormal_arith_moments(log_mu: float, log_sigma: float) -> tuple[float, float]:
    mean = math.exp(log_mu + 0.5 * log_sigma**2)
    std = mean * math.sqrt(math.expm1(log_sigma**2))
    return mean, std


def lognormal_log_params(mean: float, std: float) -> tuple[float, float]:
    """Inverse of :func:`lognormal_arith_moments`."""
    s2 = math.log1p((std / mean) ** 2)
    return math.log(mean) - 0.5 * s2, math.sqrt(s2)


def lognormal_bin_model(lower_edges, bin_width, norm, log_mu, log_sigma, mode="center"):
    """Expected counts per bin for ``norm`` performances.

    ``mode="center"`` evaluates ``norm * width * pdf(center)``; ``mode="mass"``
    integrates the density over each bin.
    """
    lower_edges = np.asarray(lower_edges, dtype=float)
    if mode == "center":
        x = lower_edges + 0.5 * bin_width
        z = (np.log(x) - log_mu) / log_sigma
        pdf = np.exp(-0.5 * z * z) / (x * log_sigma * math.sqrt(2 * math.pi))
        return norm * bin_width * pdf
    if mode == "mass":
        with np.errstate(divide="ignore"):
            lo = special.ndtr((np.log(lower_edges) - log_mu) / log_sigma)
        hi = special.ndtr((np.log(lower_edges + bin_width) - log_mu) / log_sigma)
        return norm * (hi - lo)
    raise ValueError(f"unknown mode {mode!r}")


def fit_lognormal_truncated(h: DistanceHistogram, threshold: float = 240.0, mode: str = "center") -> LogNormalFit:
    """Least-squares log-normal fit to the histogram bins at or above ``threshold``.

    Only nonzero bins enter the fit and the goodness-of-fit statistic, which is
    Pearson's chi-square with ``#bins - 3`` degrees of freedom.
    """
    edges = h.lower_edges
    counts = h.counts
    sel = (edges >= threshold) & (counts > 0)
    if sel.sum() < 4:
        raise InsufficientBins(f"need >= 4 nonzero bins at or above {threshold}, got {int(sel.sum())}")
    e = edges[sel]
    y = counts[sel]
    w = h.bin_width

    logc = np.log(e + 0.5 * w)
    m0 = float(np.average(logc, weights=y))
    s0 = float(np.sqrt(np.average((logc - m0) ** 2, weights=y)))
    s0 = max(s0, 1e-3)
    p0 = np.array([float(y.sum()), m0, math.log(s0)])

    def model(p):
        return lognormal_bin_model(e, w, p[0], p[1], math.exp(p[2]), mode)

    def residual(p):
        return y - model(p)

    res = levenberg_marquardt(residual, numeric_jacobian(residual), p0)
    norm, log_mu, log_log_sigma = res.params
    log_sigma = math.exp(log_log_sigma)
    mean, std = lognormal_arith_moments(log_mu, log_sigma)

    # delta-method errors on the arithmetic moments
    def moments(p):
        return np.array(lognormal_arith_moments(p[1], math.exp(p[2])))

    grad = numeric_jacobian(moments)(res.params)
    mcov = grad @ res.covariance @ grad.T
    mstd = np.sqrt(np.clip(np.diag(mcov), 0.0, None))

    fitted = model(res.params)
    chi2 = float(np.sum((y - fitted) ** 2 / fitted))
    dof = int(sel.sum()) - 3
    return LogNormalFit(
        arith_mean=mean,
        arith_std=std,
        norm=float(norm),
        chi2=chi2,
        dof=dof,
        p_value=float(stats.chi2.sf(chi2, dof)),
        log_mu=float(log_mu),
        log_sigma=float(log_sigma),
        stderr_mean=float(mstd[0]),
        stderr_std=float(mstd[1]),
        mode=mode,
    )


def age_group_table(ds: Dataset) -> dict[AgeGroup, list]:
    """Records grouped by IAU-style age group; records without a known age are skipped."""
    table: dict[AgeGroup, list] = {}
    for gender in Gender:
        for band in AgeBand:
            table[AgeGroup(gender, band)] = []
    for rec in ds.records:
        age = ds.age_of(rec)
        if age is None:
            continue
        try:
            table[age_group_of(rec.gender, age)].append(rec)
        except OutOfRange:
            continue
    return table


# Exceptional performances -------------------------------------------------

def _is_exceptional(rec, threshold_m: float, threshold_w: float) -> bool:
    limit = threshold_m if rec.gender is Gender.M else threshold_w
    return rec.distance_miles >= limit


@dataclass(frozen=True)
class ExceptionalCounts:
    per_year: tuple[tuple[int, int, int], ...]  # (year, men, women)
    totals: GenderCounts
    unique_totals: GenderCounts


def exceptional_counts(
    ds: Dataset, threshold_m: float = EXCEPTIONAL_MEN_MILES, threshold_w: float = EXCEPTIONAL_WOMEN_MILES
) -> ExceptionalCounts:
    hits = [r for r in ds.records if _is_exceptional(r, threshold_m, threshold_w)]
    by_year: dict[int, list[int]] = {}
    if ds.races:
        for y in range(ds.first_year, ds.last_year + 1):
            by_year[y] = [0, 0]
    keys_m: set = set()
    keys_w: set = set()
    for rec in hits:
        slot = by_year.setdefault(ds.year_of(rec), [0, 0])
        if rec.gender is Gender.M:
            slot[0] += 1
            keys_m.add(athlete_key(rec))
        else:
            slot[1] += 1
            keys_w.add(athlete_key(rec))
    n_m = sum(1 for r in hits if r.gender is Gender.M)
    return ExceptionalCounts(
        per_year=tuple((y, m, w) for y, (m, w) in sorted(by_year.items())),
        totals=GenderCounts(len(hits), n_m, len(hits) - n_m),
        unique_totals=GenderCounts(len(keys_m) + len(keys_w), len(keys_m), len(keys_w)),
    )


def exceptional_by_age_group(
    ds: Dataset, threshold_m: float = EXCEPTIONAL_MEN_MILES, threshold_w: float = EXCEPTIONAL_WOMEN_MILES
) -> dict[AgeGroup, tuple[int, int]]:
    """(performances, unique athletes) per age group; an athlete counts once per group."""
    out = {}
    for group, recs in age_group_table(ds).items():
        hits = [r for r in recs if _is_exceptional(r, threshold_m, threshold_w)]
        out[group] = (len(hits), len({athlete_key(r) for r in hits}))
    return out


@dataclass(frozen=True)
class AttemptRow:
    attempt: int
    athletes: GenderCounts     # ever-exceptional athletes with >= attempt races
    exceptional: GenderCounts  # of those, exceptional on this attempt
    repeat_cohort: GenderCounts  # ever-exceptional athletes with >= max(attempt, 2) races

    @property
    def repeat_rate(self) -> float:
        return self.exceptional.total / self.repeat_cohort.total if self.repeat_cohort.total else float("nan")


@dataclass(frozen=True)
class DebutRepeatReport:
    participation_ladder: dict[int, GenderCounts]
    exceptional_ladder: dict[int, GenderCounts]
    debut_exceptional: GenderCounts
    attempts: tuple[AttemptRow, ...]

    @property
    def debut_fraction(self) -> float:
        denom = self.exceptional_ladder[1].total
        return self.debut_exceptional.total / denom if denom else float("nan")


def _counts(flags_by_gender: list[tuple[Gender, bool]]) -> GenderCounts:
    men = sum(1 for g, f in flags_by_gender if f and g is Gender.M)
    women = sum(1 for g, f in flags_by_gender if f and g is Gender.W)
    return GenderCounts(men + women, men, women)


def debut_and_repeat_analysis(
    ds: Dataset,
    threshold_m: float = EXCEPTIONAL_MEN_MILES,
    threshold_w: float = EXCEPTIONAL_WOMEN_MILES,
    ladder: Sequence[int] = (1, 2, 5, 10),
    max_attempt: int = 5,
) -> DebutRepeatReport:
    """Attempt-indexed exceptional rates for athletes who were ever exceptional.

    An athlete's attempts are their races in start-date order.
    """
    careers = []
    for recs in group_by_athlete(ds).values():
        flags = [_is_exceptional(r, threshold_m, threshold_w) for r in recs]
        careers.append((recs[0].gender, len({r.race_id for r in recs}), flags))
    elite = [c for c in careers if any(c[2])]

    part = {k: _counts([(g, n >= k) for g, n, _ in careers]) for k in ladder}
    exc = {k: _counts([(g, n >= k) for g, n, _ in elite]) for k in sorted(set(ladder) | {1})}
    debut = _counts([(g, f[0]) for g, _, f in elite])
    rows = []
    for k in range(1, max_attempt + 1):
        rows.append(AttemptRow(
            attempt=k,
            athletes=_counts([(g, n >= k) for g, n, _ in elite]),
            exceptional=_counts([(g, len(f) >= k and f[k - 1]) for g, n, f in elite if n >= max(k, 2)]),
            repeat_cohort=_counts([(g, n >= max(k, 2)) for g, n, _ in elite]),
        ))
    return DebutRepeatReport(part, exc, debut, tuple(rows))


# Records -------------------------------------------------------------------

def record_progression(ds: Dataset, gender: Gender | str | None = None) -> RecordProgression:
    """Running maximum of distance in start-date order; same-day ties favour the longer mark."""
    gender = Gender(gender) if gender is not None else None
    recs = [r for r in ds.records if gender is None or r.gender is gender]
    if not recs:
        raise EmptyDataset()
    recs.sort(key=lambda r: (ds.date_of(r), -r.distance_miles))
    entries = []
    best = -math.inf
    for r in recs:
        if r.distance_miles > best:
            best = r.distance_miles
            entries.append(ProgressionEntry(ds.date_of(r), r.athlete_name, r.distance_miles))
    return RecordProgression(tuple(entries))
