"""Command-line entry point.

Every subcommand writes one JSON document (default) or one CSV table to
``--output`` or standard output. Diagnostics go to standard error. Exit codes:
0 success, 1 usage error, 2 data or convergence error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import descriptive as de
from . import forecast as fc
from . import synth
from .errors import SixDayError
from .racedata import (
    AgeBand,
    AgeGroup,
    Dataset,
    FileFormat,
    Gender,
    filter_dataset,
    gender_counts,
    parse_results,
    unique_participants,
    write_results,
)
from .sampler import SamplerConfig

SCHEMA_VERSION = 1
logger = logging.getLogger("sixday")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# Options whose values may legitimately start with "-"
_SIGNED_VALUE_OPTIONS = {"--prior", "--mu"}


def _join_signed_values(argv: Sequence[str]) -> list[str]:
    out: list[str] = []
    it = iter(argv)
    for tok in it:
        if tok in _SIGNED_VALUE_OPTIONS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def _age_group(text: str) -> AgeGroup:
    text = text.strip().upper()
    if text[:1] not in ("M", "W", "F"):
        raise argparse.ArgumentTypeError(f"age group must start with M or W: {text!r}")
    gender = Gender.W if text[0] in ("W", "F") else Gender.M
    try:
        return AgeGroup(gender, AgeBand(text[1:]))
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown age band {text[1:]!r}") from None


def _prior(text: str) -> fc.PriorBox:
    try:
        return fc.PriorBox.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from None


def _year_range(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected FIRST:LAST years: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sixday", description="Six-day race analytics and record forecasting.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_cmd(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--input", "-i", required=True, action="append", type=Path,
                       help="results CSV (repeatable; files are concatenated)")
        s.add_argument("--era", choices=["modern", "pedestrian"], default="modern")
        s.add_argument("--output", "-o", type=Path)
        s.add_argument("--format", choices=["json", "csv"], default="json")
        s.add_argument("--gender", choices=["M", "W"])
        s.add_argument("--age-group", type=_age_group, help="e.g. MU23, W23, M35, M80")
        s.add_argument("--min-distance", type=float, help="drop marks below this many miles")
        return s

    data_cmd("ingest", "validate input and re-emit canonical CSV or a JSON summary")

    s = data_cmd("describe", "summary statistics, yearly participation and distance histograms")
    s.add_argument("--bin-width", type=float, default=20.0)
    s.add_argument("--by-age-group", action="store_true")
    s.add_argument("--table", choices=["summary", "participation", "histogram"], default="histogram",
                   help="table emitted with --format csv")

    s = data_cmd("fit-growth", "exponential participation growth fit")
    s.add_argument("--t0", type=float, default=de.GROWTH_T0)

    s = data_cmd("fit-lognormal", "truncated log-normal fit to the distance histogram")
    s.add_argument("--threshold", type=float, default=240.0)
    s.add_argument("--bin-width", type=float, default=20.0)
    s.add_argument("--mode", choices=["center", "mass"], default="center")

    data_cmd("progression", "world-record progression")

    s = data_cmd("exceptional", "exceptional-performance tallies and debut/repeat analysis")
    s.add_argument("--threshold-m", type=float, default=de.EXCEPTIONAL_MEN_MILES)
    s.add_argument("--threshold-w", type=float, default=de.EXCEPTIONAL_WOMEN_MILES)

    def mcmc_opts(s):
        s.add_argument("--dmin", type=float, required=True, help="tail threshold in miles")
        s.add_argument("--prior", type=_prior, default=fc.MEN_PRIOR, help="MU_MIN:MU_MAX:SIGMA_MIN:SIGMA_MAX")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--fast", action="store_true", help="100 walkers, 200 burn-in, 200 steps")
        s.add_argument("--walkers", type=int)
        s.add_argument("--burn", type=int)
        s.add_argument("--steps", type=int)
        s.add_argument("--t-m", type=float, help="override the dataset span in years")

    s = data_cmd("fit-tail", "MCMC fit of the truncated-normal tail")
    mcmc_opts(s)
    s.add_argument("--chain-out", type=Path, help="write chain CSV here plus a .json metadata sidecar")

    s = data_cmd("forecast", "record-break probabilities and expected best marks")
    mcmc_opts(s)
    s.add_argument("--record", type=float, required=True, help="current record in miles")
    s.add_argument("--horizons", type=_floats, default=[1.0, 5.0, 10.0])
    s.add_argument("--y-step", type=float, default=1.0, help="mile spacing of the best-mark grid")
    s.add_argument("--table", choices=["horizons", "expected-best"], default="horizons",
                   help="table emitted with --format csv")

    s = sub.add_parser("synth", help="generate a synthetic dataset (CSV plus JSON sidecar)")
    s.add_argument("--mu", type=float, default=-6.35)
    s.add_argument("--sigma", type=float, default=0.12)
    s.add_argument("--c-miles", type=float, default=500.0)
    s.add_argument("--n", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--years", type=_year_range, default=(1981, 2018))
    s.add_argument("--gender", choices=["M", "W"], default="M")
    s.add_argument("--n0", type=float, default=25.0)
    s.add_argument("--r", type=float, default=0.082)
    s.add_argument("--t0", type=float, default=de.GROWTH_T0)
    s.add_argument("--output", "-o", type=Path)
    return p


# Helpers -------------------------------------------------------------------

def _load(args) -> Dataset:
    fmt = FileFormat.PEDESTRIAN_CSV if args.era == "pedestrian" else FileFormat.MODERN_CSV
    parts = [parse_results(path, fmt) for path in args.input]
    if len(parts) == 1:
        ds = parts[0]
    else:
        races = {}
        for part in parts:
            for race in part.races:
                races.setdefault(race.race_id, race)
        ds = Dataset(tuple(r for part in parts for r in part.records), tuple(races.values()))
    return filter_dataset(ds, gender=args.gender, age_group=args.age_group, min_distance=args.min_distance)


def _emit_json(payload: dict, out) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    out.write(json.dumps(payload, indent=2, sort_keys=True, default=_json_default, allow_nan=False) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "isoformat"):
        return obj.isoformat()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _emit_csv(header: Sequence[str], rows, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_cell(v) for v in row])


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


def _finite(v):
    return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v


def _sampler_config(args) -> SamplerConfig:
    base = SamplerConfig.fast(seed=args.seed) if args.fast else SamplerConfig(seed=args.seed)
    return SamplerConfig(
        n_walkers=args.walkers or base.n_walkers,
        n_burn=base.n_burn if args.burn is None else args.burn,
        n_steps=args.steps or base.n_steps,
        stretch_a=base.stretch_a,
        seed=args.seed,
    )


def _stats_dict(values) -> dict | None:
    if len(values) == 0:
        return None
    return asdict(de.summary_stats(values))


# Subcommands ---------------------------------------------------------------

def cmd_ingest(args, out):
    ds = _load(args)
    if args.format == "csv":
        write_results(ds, out)
        return
    counts = gender_counts(ds.records)
    _emit_json({
        "records": counts._asdict(),
        "unique_participants": unique_participants(ds)._asdict(),
        "men_per_woman": counts.men / counts.women if counts.women else None,
        "races": len(ds.races),
        "first_year": ds.first_year,
        "last_year": ds.last_year,
        "t_m": ds.t_m,
    }, out)


def cmd_describe(args, out):
    ds = _load(args)
    hist_all = de.distance_histogram(ds, args.bin_width)
    men = [r.distance_miles for r in ds.records if r.gender is Gender.M]
    women = [r.distance_miles for r in ds.records if r.gender is Gender.W]
    h_m = dict(de.distance_histogram(men, args.bin_width).bins) if men else {}
    h_w = dict(de.distance_histogram(women, args.bin_width).bins) if women else {}
    hist_rows = [(e, e + args.bin_width, h_m.get(e, 0), h_w.get(e, 0), c) for e, c in hist_all.bins]

    years = de.yearly_participation(ds)
    by_year_m = {}
    by_year_w = {}
    for r in ds.records:
        bucket = by_year_m if r.gender is Gender.M else by_year_w
        bucket[ds.year_of(r)] = bucket.get(ds.year_of(r), 0) + 1
    part_rows = [(y, int(c), by_year_m.get(y, 0), by_year_w.get(y, 0)) for y, c in years.bins]

    summary = {"all": _stats_dict(ds.distances()), "men": _stats_dict(men), "women": _stats_dict(women)}

    if args.format == "csv":
        if args.table == "histogram":
            _emit_csv(("lower_edge", "upper_edge", "men", "women", "total"), hist_rows, out)
        elif args.table == "participation":
            _emit_csv(("year", "total", "men", "women"), part_rows, out)
        else:
            _emit_csv(("group", "n", "median", "mean", "std"),
                      [(k, v["n"], v["median"], v["mean"], v["std"]) for k, v in summary.items() if v], out)
        return

    payload = {
        "records": gender_counts(ds.records)._asdict(),
        "unique_participants": unique_participants(ds)._asdict(),
        "summary": summary,
        "participation": [dict(zip(("year", "total", "men", "women"), r)) for r in part_rows],
        "histogram": {
            "bin_width": args.bin_width,
            "bins": [dict(zip(("lower_edge", "upper_edge", "men", "women", "total"), r)) for r in hist_rows],
        },
    }
    if args.by_age_group:
        groups = []
        for group, recs in de.age_group_table(ds).items():
            vals = [r.distance_miles for r in recs]
            entry = {"group": group.label, "summary": _stats_dict(vals), "histogram": None, "lognormal_fit": None}
            if vals:
                h = de.distance_histogram(vals, args.bin_width)
                entry["histogram"] = [{"lower_edge": e, "count": c} for e, c in h.bins]
                try:
                    entry["lognormal_fit"] = _lognormal_dict(de.fit_lognormal_truncated(h, 240.0))
                except SixDayError as exc:
                    logger.info("no log-normal fit for %s: %s", group.label, exc)
            groups.append(entry)
        payload["age_groups"] = groups
    _emit_json(payload, out)


def _lognormal_dict(fit: de.LogNormalFit) -> dict:
    return {k: _finite(v) for k, v in asdict(fit).items()}


def cmd_fit_growth(args, out):
    ds = _load(args)
    h = de.yearly_participation(ds)
    fit = de.fit_growth(h, args.t0)
    rows = [(y, c, float(fit.predict(y + 0.5))) for y, c in h.bins]
    if args.format == "csv":
        _emit_csv(("year", "count", "model"), rows, out)
        return
    _emit_json({"fit": asdict(fit), "series": [dict(zip(("year", "count", "model"), r)) for r in rows]}, out)


def cmd_fit_lognormal(args, out):
    ds = _load(args)
    h = de.distance_histogram(ds, args.bin_width)
    fit = de.fit_lognormal_truncated(h, args.threshold, args.mode)
    model = fit.expected_counts(h.lower_edges, h.bin_width)
    rows = [(e, c, float(m), e >= args.threshold and c > 0) for (e, c), m in zip(h.bins, model)]
    if args.format == "csv":
        _emit_csv(("lower_edge", "count", "model", "fitted"), [(e, c, m, int(f)) for e, c, m, f in rows], out)
        return
    _emit_json({
        "threshold": args.threshold,
        "bin_width": args.bin_width,
        "fit": _lognormal_dict(fit),
        "bins": [dict(zip(("lower_edge", "count", "model", "fitted"), r)) for r in rows],
    }, out)


def cmd_progression(args, out):
    ds = _load(args)
    genders = [Gender(args.gender)] if args.gender else [g for g in Gender if any(r.gender is g for r in ds.records)]
    rows = []
    for g in genders:
        for e in de.record_progression(ds, g).entries:
            rows.append((g.value, e.date.isoformat(), e.athlete_name, e.distance_miles))
    if not rows:
        de.record_progression(ds)  # raises EmptyDataset
    if args.format == "csv":
        _emit_csv(("gender", "date", "athlete_name", "distance_miles"), rows, out)
        return
    _emit_json({"progression": [dict(zip(("gender", "date", "athlete_name", "distance_miles"), r)) for r in rows]},
               out)


def cmd_exceptional(args, out):
    ds = _load(args)
    ex = de.exceptional_counts(ds, args.threshold_m, args.threshold_w)
    if args.format == "csv":
        _emit_csv(("year", "men", "women"), ex.per_year, out)
        return
    rep = de.debut_and_repeat_analysis(ds, args.threshold_m, args.threshold_w)
    by_age = de.exceptional_by_age_group(ds, args.threshold_m, args.threshold_w)
    _emit_json({
        "thresholds": {"men": args.threshold_m, "women": args.threshold_w},
        "per_year": [{"year": y, "men": m, "women": w} for y, m, w in ex.per_year],
        "totals": ex.totals._asdict(),
        "unique_totals": ex.unique_totals._asdict(),
        "by_age_group": [{"group": g.label, "performances": n, "unique": u} for g, (n, u) in by_age.items()],
        "participation_ladder": {str(k): v._asdict() for k, v in rep.participation_ladder.items()},
        "exceptional_ladder": {str(k): v._asdict() for k, v in rep.exceptional_ladder.items()},
        "debut_exceptional": rep.debut_exceptional._asdict(),
        "debut_fraction": _finite(rep.debut_fraction),
        "attempts": [
            {
                "attempt": row.attempt,
                "athletes": row.athletes._asdict(),
                "exceptional": row.exceptional._asdict(),
                "repeat_cohort": row.repeat_cohort._asdict(),
                "repeat_rate": _finite(row.repeat_rate),
            }
            for row in rep.attempts
        ],
    }, out)


def cmd_fit_tail(args, out):
    ds = _load(args)
    X = fc.build_tail_sample(ds, args.dmin, t_m=args.t_m)
    chain, grid = fc.fit_tail(X, args.prior, _sampler_config(args))
    if args.chain_out:
        with open(args.chain_out, "w", encoding="utf-8") as fh:
            chain.write_csv(fh)
        with open(args.chain_out.with_suffix(".json"), "w", encoding="utf-8") as fh:
            chain.write_metadata(fh)
    if args.format == "csv":
        M, S = np.meshgrid(grid.mu_centers, grid.sigma_centers, indexing="ij")
        rows = zip(M.ravel().tolist(), S.ravel().tolist(), grid.cell_mass.ravel().tolist())
        _emit_csv(("mu", "sigma", "mass"), rows, out)
        return
    mu, sigma = (float(v) for v in chain.map_estimate)
    edges, counts = fc.tail_histogram(X)
    model = fc.tail_model_counts(edges, mu, sigma, X)
    _emit_json({
        "n": X.n,
        "c": X.c,
        "d_min_miles": args.dmin,
        "worst_x": X.worst,
        "t_m": X.t_m,
        "prior_box": asdict(args.prior),
        "map_mu": mu,
        "map_sigma": sigma,
        "population_size_at_map": fc.population_size(X.n, X.worst, mu, sigma),
        "acceptance_fraction": chain.acceptance_fraction,
        "tail_histogram": [
            {"x_lower": float(lo), "x_upper": float(hi), "count": int(c), "map_model": float(m)}
            for lo, hi, c, m in zip(edges[:-1], edges[1:], counts, model)
        ],
        "posterior_grid": grid.to_dict(),
        "sampler_metadata": chain.metadata(),
    }, out)


def cmd_forecast(args, out):
    ds = _load(args)
    res = fc.forecast(ds, args.dmin, args.record, args.prior, _sampler_config(args),
                      horizons=args.horizons, step_miles=args.y_step, t_m=args.t_m)
    if args.format == "csv":
        if args.table == "horizons":
            _emit_csv(("t_f", "p_hat"), res.horizons, out)
        else:
            _emit_csv(("t_f", "miles"), res.expected_best_curve, out)
        return
    _emit_json(res.to_dict(), out)


def cmd_synth(args, out):
    spec = synth.SynthSpec(
        mu_star=args.mu, sigma_star=args.sigma, c=-math.log(args.c_miles), n=args.n,
        growth=(args.n0, args.r, args.t0), years=args.years, seed=args.seed, gender=args.gender,
    )
    if args.output is not None:
        ds = synth.write_synthetic(spec, args.output)
        logger.info("wrote %d records to %s", len(ds), args.output)
    else:
        write_results(synth.generate_dataset(spec), out)


COMMANDS = {
    "ingest": cmd_ingest,
    "describe": cmd_describe,
    "fit-growth": cmd_fit_growth,
    "fit-lognormal": cmd_fit_lognormal,
    "progression": cmd_progression,
    "exceptional": cmd_exceptional,
    "fit-tail": cmd_fit_tail,
    "forecast": cmd_forecast,
    "synth": cmd_synth,
}


def run_cli(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_join_signed_values(argv))
    except UsageError as exc:
        stderr.write(f"{exc}\n")
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1

    handler = logging.StreamHandler(stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(logging.DEBUG if args.verbose else logging.WARNING)

    output = getattr(args, "output", None)
    if args.command == "synth":
        output = None  # synth handles its own files
    buf = io.StringIO()
    try:
        COMMANDS[args.command](args, buf)
    except SixDayError as exc:
        stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 2
    except (OSError, ValueError) as exc:
        stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 2
    text = buf.getvalue()
    if output is not None:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return 0


def main() -> None:
    try:
        code = run_cli()
        sys.stdout.flush()
    except BrokenPipeError:
        # downstream reader (e.g. ``head``) closed early
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = 0
    sys.exit(code)


if __name__ == "__main__":
    main()
