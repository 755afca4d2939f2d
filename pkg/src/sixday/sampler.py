"""Affine-invariant ensemble MCMC with the stretch move.

The ensemble is split into two halves that are updated alternately; every
walker in the active half is stretched towards or away from a walker drawn
uniformly from the other half. :func:`run` wraps this in a burn-in, a
re-initialisation in a tight ball around the best point seen so far, and a
production phase whose samples are flattened into a :class:`Chain`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AllWalkersInvalid, EmptyChain, NonFiniteLogPost

RNG_ALGORITHM = "numpy.random.PCG64"

LogPost = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class SamplerConfig:
    n_walkers: int = 1000
    n_burn: int = 1000
    n_steps: int = 1000
    stretch_a: float = 2.0
    seed: int = 0
    reinit_scale: float | None = None  # None: reuse the initial ball scale

    def __post_init__(self):
        if self.n_walkers < 4 or self.n_walkers % 2:
            raise ValueError("n_walkers must be even and at least 4")
        if self.stretch_a <= 1.0:
            raise ValueError("stretch_a must exceed 1")
        if self.n_burn < 0 or self.n_steps < 1:
            raise ValueError("n_burn must be >= 0 and n_steps >= 1")

    @classmethod
    def fast(cls, seed: int = 0, **kw) -> "SamplerConfig":
        """Reduced profile for CI and quick looks (100 walkers, 200 + 200 steps)."""
        return cls(n_walkers=100, n_burn=200, n_steps=200, seed=seed, **kw)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def sample_stretch_z(rng: np.random.Generator, a: float, size) -> np.ndarray:
    """Draw from g(z) proportional to 1/sqrt(z) on [1/a, a] by inverting its CDF."""
    u = rng.random(size)
    return ((a - 1.0) * u + 1.0) ** 2 / a


def stretch_propose(walker, complement_draw, z: float, dim: int | None = None):
    """Return ``(proposal, log_hastings)`` for one stretch move."""
    walker = np.asarray(walker, dtype=float)
    complement_draw = np.asarray(complement_draw, dtype=float)
    dim = walker.shape[-1] if dim is None else dim
    proposal = complement_draw + z * (walker - complement_draw)
    return proposal, (dim - 1) * np.log(z)


class _Target:
    """Evaluates the log posterior, rejects NaN/+inf and remembers the best point."""

    def __init__(self, log_post: LogPost, vectorized: bool):
        self.log_post = log_post
        self.vectorized = vectorized
        self.best_params: np.ndarray | None = None
        self.best_value = -math.inf
        self.n_evals = 0

    def __call__(self, points: np.ndarray) -> np.ndarray:
        if self.vectorized:
            values = np.asarray(self.log_post(points), dtype=float).reshape(len(points))
        else:
            values = np.array([float(self.log_post(p)) for p in points])
        self.n_evals += len(points)
        bad = np.isnan(values) | (values == math.inf)
        if bad.any():
            i = int(np.argmax(bad))
            raise NonFiniteLogPost(points[i].tolist(), values[i])
        if len(values):
            i = int(np.argmax(values))
            if values[i] > self.best_value:
                self.best_value = float(values[i])
                self.best_params = points[i].copy()
        return values


@dataclass
class Ensemble:
    walkers: np.ndarray
    log_post: np.ndarray
    step_count: int = 0
    accept_count: int = 0

    @property
    def n_walkers(self) -> int:
        return self.walkers.shape[0]

    @property
    def dim(self) -> int:
        return self.walkers.shape[1]


def advance(
    ensemble: Ensemble,
    target: Callable[[np.ndarray], np.ndarray],
    n_steps: int,
    rng: np.random.Generator,
    a: float = 2.0,
    store: bool = True,
):
    """Run ``n_steps`` red/black stretch updates in place.

    ``target`` maps an ``(m, dim)`` array to ``m`` log-posterior values.
    Returns the visited positions and log posteriors with shape
    ``(n_steps, n_walkers, ...)`` when ``store`` is set.
    """
    W, dim = ensemble.walkers.shape
    half = W // 2
    halves = (np.arange(half), np.arange(half, W))
    chain = np.empty((n_steps, W, dim)) if store else None
    lps = np.empty((n_steps, W)) if store else None
    for step in range(n_steps):
        for active, other in (halves, halves[::-1]):
            z = sample_stretch_z(rng, a, half)
            picks = other[rng.integers(0, len(other), size=half)]
            log_u = np.log(rng.random(half))
            proposal, log_h = stretch_propose(
                ensemble.walkers[active], ensemble.walkers[picks], z[:, None], dim
            )
            new_lp = target(proposal)
            accept = log_u < log_h.ravel() + new_lp - ensemble.log_post[active]
            idx = active[accept]
            ensemble.walkers[idx] = proposal[accept]
            ensemble.log_post[idx] = new_lp[accept]
            ensemble.accept_count += int(accept.sum())
        ensemble.step_count += 1
        if store:
            chain[step] = ensemble.walkers
            lps[step] = ensemble.log_post
    return chain, lps


def _ball(
    target: _Target,
    center: np.ndarray,
    scale,
    n_walkers: int,
    rng: np.random.Generator,
    max_rounds: int = 100,
) -> Ensemble:
    """Gaussian ball around ``center``; walkers with -inf posterior are redrawn."""
    dim = center.size
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (dim,))
    walkers = center + scale * rng.standard_normal((n_walkers, dim))
    lp = target(walkers)
    bad = ~np.isfinite(lp)
    if bad.all():
        raise AllWalkersInvalid(
            f"all {n_walkers} initial walkers around {center.tolist()} have -inf log posterior"
        )
    for _ in range(max_rounds):
        if not bad.any():
            break
        k = int(bad.sum())
        walkers[bad] = center + scale * rng.standard_normal((k, dim))
        lp[bad] = target(walkers[bad])
        bad = ~np.isfinite(lp)
    if bad.any():
        center_lp = target(center[None, :])[0]
        if not np.isfinite(center_lp):
            raise AllWalkersInvalid(f"could not place walkers inside the support around {center.tolist()}")
        walkers[bad] = center
        lp[bad] = center_lp
    return Ensemble(walkers, lp)


@dataclass(frozen=True)
class Chain:
    samples: np.ndarray          # (n_steps * n_walkers, dim), step-major
    log_post: np.ndarray         # (n_steps * n_walkers,)
    map_estimate: np.ndarray
    map_log_post: float
    n_accepted: int
    n_proposed: int
    n_walkers: int
    config: SamplerConfig | None = None
    rng_algorithm: str = RNG_ALGORITHM
    param_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        for arr in (self.samples, self.log_post, self.map_estimate):
            arr.setflags(write=False)

    @property
    def acceptance_fraction(self) -> float:
        return acceptance_fraction(self)

    @property
    def n_steps(self) -> int:
        return self.samples.shape[0] // self.n_walkers if self.n_walkers else 0

    def walker_chains(self) -> np.ndarray:
        """Samples reshaped to ``(n_steps, n_walkers, dim)``."""
        return self.samples.reshape(self.n_steps, self.n_walkers, -1)

    def metadata(self) -> dict:
        names = self.param_names or tuple(f"p{i}" for i in range(self.samples.shape[1]))
        meta = {"rng": self.rng_algorithm, "acceptance_fraction": self.acceptance_fraction}
        if self.config is not None:
            cfg = asdict(self.config)
            meta.update({k: cfg[k] for k in ("seed", "n_walkers", "n_burn", "n_steps", "stretch_a")})
        for name, value in zip(names, self.map_estimate):
            meta[f"map_{name}"] = float(value)
        meta["map_log_post"] = self.map_log_post
        return meta

    def write_csv(self, fh) -> None:
        names = self.param_names or tuple(f"p{i}" for i in range(self.samples.shape[1]))
        fh.write(",".join((*names, "log_post")) + "\n")
        for row, lp in zip(self.samples, self.log_post):
            fh.write(",".join(repr(float(v)) for v in (*row, lp)) + "\n")

    def write_metadata(self, fh) -> None:
        json.dump(self.metadata(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def acceptance_fraction(chain: Chain) -> float:
    """Accepted over proposed moves in the production phase."""
    if chain.n_proposed == 0:
        raise EmptyChain("chain has no production-phase proposals")
    return chain.n_accepted / chain.n_proposed


def run(
    log_post: LogPost,
    cfg: SamplerConfig,
    init_center: Sequence[float],
    init_scale,
    vectorized: bool = False,
    param_names: Sequence[str] = (),
) -> Chain:
    """Burn in, re-centre on the best point, then sample.

    ``log_post`` takes one parameter vector, or an ``(m, dim)`` array when
    ``vectorized`` is set, and returns ``-inf`` outside the support. With
    ``cfg.n_burn == 0`` the production phase starts from the initial ball.
    """
    center = np.asarray(init_center, dtype=float).ravel()
    if np.any(np.asarray(init_scale) <= 0):
        raise ValueError("init_scale must be positive")
    rng = make_rng(cfg.seed)
    target = _Target(log_post, vectorized)

    ens = _ball(target, center, init_scale, cfg.n_walkers, rng)
    if cfg.n_burn > 0:
        advance(ens, target, cfg.n_burn, rng, cfg.stretch_a, store=False)
        scale = init_scale if cfg.reinit_scale is None else cfg.reinit_scale
        ens = _ball(target, target.best_params.copy(), scale, cfg.n_walkers, rng)

    ens.step_count = 0
    ens.accept_count = 0
    chain, lps = advance(ens, target, cfg.n_steps, rng, cfg.stretch_a, store=True)
    return Chain(
        samples=chain.reshape(-1, center.size),
        log_post=lps.reshape(-1),
        map_estimate=target.best_params.copy(),
        map_log_post=target.best_value,
        n_accepted=ens.accept_count,
        n_proposed=ens.step_count * cfg.n_walkers,
        n_walkers=cfg.n_walkers,
        config=cfg,
        param_names=tuple(param_names),
    )
