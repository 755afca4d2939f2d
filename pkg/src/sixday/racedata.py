"""Race-result domain types, CSV ingestion, filtering and athlete deduplication.

Distances are held in statute miles throughout. Kilometre input is converted
on read and never written back out.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .errors import DuplicateRaceId, EmptyDataset, MalformedRow, OutOfRange

logger = logging.getLogger(__name__)

MILES_PER_KM = 0.621371192
MAX_SIX_DAY_MILES = 1000.0
SIX_DAY_HOURS = 144.0

MODERN_FIRST_YEAR = 1981
PEDESTRIAN_YEARS = (1874, 1888)

CSV_COLUMNS = (
    "race_id",
    "race_name",
    "country",
    "start_date",
    "duration_hours",
    "kind",
    "completeness",
    "athlete_name",
    "gender",
    "yob",
    "distance",
    "distance_unit",
)


class Gender(str, enum.Enum):
    M = "M"
    W = "W"


class Era(str, enum.Enum):
    MODERN = "Modern"
    PEDESTRIANISM = "Pedestrianism"


class RaceKind(str, enum.Enum):
    SIX_DAY = "SixDay"
    SIX_DAY_SPLIT = "SixDaySplit"
    OTHER = "Other"


class Completeness(str, enum.Enum):
    COMPLETE = "Complete"
    PARTIAL = "Partial"


class FileFormat(str, enum.Enum):
    MODERN_CSV = "ModernCSV"
    PEDESTRIAN_CSV = "PedestrianCSV"


class AgeBand(str, enum.Enum):
    U23 = "U23"
    A23 = "23"
    A35 = "35"
    A40 = "40"
    A45 = "45"
    A50 = "50"
    A55 = "55"
    A60 = "60"
    A65 = "65"
    A70 = "70"
    A75 = "75"
    A80PLUS = "80"

    @property
    def bounds(self) -> tuple[int, int]:
        """Inclusive (low, high) ages covered by the band."""
        if self is AgeBand.U23:
            return (5, 22)
        if self is AgeBand.A23:
            return (23, 34)
        if self is AgeBand.A80PLUS:
            return (80, 100)
        low = int(self.value)
        return (low, low + 4)


@dataclass(frozen=True)
class AgeGroup:
    gender: Gender
    band: AgeBand

    @property
    def label(self) -> str:
        return f"{self.gender.value}{self.band.value}"

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class RaceEvent:
    race_id: str
    name: str
    country: str
    start_date: dt.date
    duration_hours: float
    kind: RaceKind = RaceKind.SIX_DAY
    completeness: Completeness = Completeness.COMPLETE

    def __post_init__(self):
        if self.duration_hours <= 0:
            raise ValueError(f"race {self.race_id}: duration must be positive")
        if self.kind in (RaceKind.SIX_DAY, RaceKind.SIX_DAY_SPLIT) and self.duration_hours < SIX_DAY_HOURS:
            raise ValueError(
                f"race {self.race_id}: six-day kinds need duration >= {SIX_DAY_HOURS} h, "
                f"got {self.duration_hours}"
            )

    @property
    def year(self) -> int:
        return self.start_date.year


@dataclass(frozen=True)
class PerformanceRecord:
    race_id: str
    athlete_name: str
    gender: Gender
    distance_miles: float
    year_of_birth: int | None = None
    era: Era = Era.MODERN

    def __post_init__(self):
        if not 0.0 < self.distance_miles < MAX_SIX_DAY_MILES:
            raise ValueError(
                f"distance {self.distance_miles} mi outside (0, {MAX_SIX_DAY_MILES})"
            )


def _check_era(era: Era, year: int) -> None:
    if era is Era.MODERN and year < MODERN_FIRST_YEAR:
        raise ValueError(f"modern-era race in {year} precedes {MODERN_FIRST_YEAR}")
    if era is Era.PEDESTRIANISM and not PEDESTRIAN_YEARS[0] <= year <= PEDESTRIAN_YEARS[1]:
        raise ValueError(f"pedestrianism-era race in {year} outside {PEDESTRIAN_YEARS}")


@dataclass(frozen=True)
class Dataset:
    """Validated, immutable collection of performances and the races hosting them.

    ``first_year``/``last_year`` come from the race calendar, which filtering
    leaves intact (except for era filters), so a gender subset keeps the span
    of the full dataset.
    """

    records: tuple[PerformanceRecord, ...]
    races: tuple[RaceEvent, ...]
    _race_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "races", tuple(self.races))
        index = {}
        for race in self.races:
            if race.race_id in index and index[race.race_id] != race:
                raise DuplicateRaceId(race.race_id)
            index[race.race_id] = race
        for rec in self.records:
            race = index.get(rec.race_id)
            if race is None:
                raise ValueError(f"record for {rec.athlete_name!r} references unknown race {rec.race_id!r}")
            _check_era(rec.era, race.year)
        object.__setattr__(self, "_race_index", index)

    def __len__(self) -> int:
        return len(self.records)

    def race(self, race_id: str) -> RaceEvent:
        return self._race_index[race_id]

    def year_of(self, rec: PerformanceRecord) -> int:
        return self._race_index[rec.race_id].year

    def date_of(self, rec: PerformanceRecord) -> dt.date:
        return self._race_index[rec.race_id].start_date

    def age_of(self, rec: PerformanceRecord) -> int | None:
        if rec.year_of_birth is None:
            return None
        return self.year_of(rec) - rec.year_of_birth

    @property
    def first_year(self) -> int | None:
        return min((r.year for r in self.races), default=None)

    @property
    def last_year(self) -> int | None:
        return max((r.year for r in self.races), default=None)

    @property
    def t_m(self) -> float:
        """Calendar span in years, floored at one year for single-season data."""
        if not self.races:
            raise EmptyDataset("dataset has no races; span undefined")
        return max(1.0, float(self.last_year - self.first_year))

    def distances(self) -> list[float]:
        return [r.distance_miles for r in self.records]

    def replace_records(self, records: Iterable[PerformanceRecord], races: Iterable[RaceEvent] | None = None) -> "Dataset":
        return Dataset(tuple(records), self.races if races is None else tuple(races))


def age_group_of(gender: Gender | str, age_years: int) -> AgeGroup:
    gender = Gender(gender)
    if not 5 <= age_years <= 100:
        raise OutOfRange(f"age {age_years} outside [5, 100]")
    if age_years < 23:
        band = AgeBand.U23
    elif age_years <= 34:
        band = AgeBand.A23
    elif age_years >= 80:
        band = AgeBand.A80PLUS
    else:
        band = AgeBand(str(age_years - age_years % 5))
    return AgeGroup(gender, band)


# Parsing -----------------------------------------------------------------

_ENUM_ALIASES = {
    "sixday": RaceKind.SIX_DAY,
    "six_day": RaceKind.SIX_DAY,
    "sixdaysplit": RaceKind.SIX_DAY_SPLIT,
    "six_day_split": RaceKind.SIX_DAY_SPLIT,
    "split": RaceKind.SIX_DAY_SPLIT,
    "other": RaceKind.OTHER,
}


def _parse_kind(text: str) -> RaceKind:
    try:
        return _ENUM_ALIASES[text.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown race kind {text!r}") from None


def _parse_completeness(text: str) -> Completeness:
    key = text.strip().lower()
    for c in Completeness:
        if c.value.lower() == key:
            return c
    raise ValueError(f"unknown completeness {text!r}")


def _parse_gender(text: str) -> Gender:
    key = text.strip().upper()
    if key == "F":
        key = "W"
    return Gender(key)


def _to_miles(value: float, unit: str) -> float:
    unit = unit.strip().lower()
    if unit in ("mi", "mile", "miles", ""):
        return value
    if unit in ("km", "kilometre", "kilometer"):
        return value * MILES_PER_KM
    raise ValueError(f"unknown distance unit {unit!r}")


def km_to_miles(km: float) -> float:
    return km * MILES_PER_KM


def miles_to_km(miles: float) -> float:
    return miles / MILES_PER_KM


def parse_results(path: str | Path, format: FileFormat | str = FileFormat.MODERN_CSV) -> Dataset:
    """Read a canonical results CSV into a validated :class:`Dataset`.

    Raises :class:`MalformedRow` on the first bad row, :class:`DuplicateRaceId`
    when a race id is redefined with different metadata and
    :class:`EmptyDataset` when the file holds no performances.
    """
    format = FileFormat(format)
    era = Era.PEDESTRIANISM if format is FileFormat.PEDESTRIAN_CSV else Era.MODERN

    races: dict[str, RaceEvent] = {}
    records: list[PerformanceRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or ())]
        if reader.fieldnames is not None and missing:
            raise MalformedRow(1, f"missing columns {missing}")
        for row in reader:
            line = reader.line_num
            try:
                race = RaceEvent(
                    race_id=row["race_id"].strip(),
                    name=row["race_name"].strip(),
                    country=row["country"].strip(),
                    start_date=dt.date.fromisoformat(row["start_date"].strip()),
                    duration_hours=float(row["duration_hours"]),
                    kind=_parse_kind(row["kind"]),
                    completeness=_parse_completeness(row["completeness"]),
                )
                if not race.race_id:
                    raise ValueError("empty race_id")
                yob_text = (row["yob"] or "").strip()
                rec = PerformanceRecord(
                    race_id=race.race_id,
                    athlete_name=row["athlete_name"].strip(),
                    gender=_parse_gender(row["gender"]),
                    distance_miles=_to_miles(float(row["distance"]), row["distance_unit"] or ""),
                    year_of_birth=int(yob_text) if yob_text else None,
                    era=era,
                )
                _check_era(era, race.year)
            except (ValueError, TypeError, AttributeError, KeyError) as exc:
                raise MalformedRow(line, str(exc)) from exc
            known = races.get(race.race_id)
            if known is None:
                races[race.race_id] = race
            elif known != race:
                raise DuplicateRaceId(race.race_id, line)
            records.append(rec)

    if not records:
        raise EmptyDataset(f"{path}: no valid rows")
    return Dataset(tuple(records), tuple(races.values()))


def _fmt_number(value: float) -> str:
    if float(value).is_integer():
        return str(int(value)) if abs(value) < 1e15 else repr(float(value))
    return repr(float(value))


def write_results(ds: Dataset, path_or_file) -> None:
    """Write ``ds`` as canonical CSV (miles). Accepts a path or an open text file."""
    if hasattr(path_or_file, "write"):
        _write_rows(ds, path_or_file)
        return
    with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
        _write_rows(ds, fh)


def _write_rows(ds: Dataset, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in ds.records:
        race = ds.race(rec.race_id)
        writer.writerow([
            race.race_id,
            race.name,
            race.country,
            race.start_date.isoformat(),
            _fmt_number(race.duration_hours),
            race.kind.value,
            race.completeness.value,
            rec.athlete_name,
            rec.gender.value,
            "" if rec.year_of_birth is None else rec.year_of_birth,
            repr(float(rec.distance_miles)),
            "mi",
        ])


# Filtering and deduplication ---------------------------------------------

def filter_dataset(
    ds: Dataset,
    gender: Gender | str | None = None,
    age_group: AgeGroup | AgeBand | None = None,
    min_distance: float | None = None,
    era: Era | str | None = None,
) -> Dataset:
    """Subset ``ds`` by independent predicates.

    Records without a year of birth are dropped only when an age group is
    requested. The race list is kept whole unless ``era`` is given, in which
    case only races hosting that era's performances survive.
    """
    gender = Gender(gender) if gender is not None else None
    era = Era(era) if era is not None else None
    band = None
    if isinstance(age_group, AgeGroup):
        band = age_group.band
        if gender is not None and gender is not age_group.gender:
            return ds.replace_records(())
        gender = age_group.gender
    elif age_group is not None:
        band = AgeBand(age_group)

    def keep(rec: PerformanceRecord) -> bool:
        if gender is not None and rec.gender is not gender:
            return False
        if era is not None and rec.era is not era:
            return False
        if min_distance is not None and rec.distance_miles < min_distance:
            return False
        if band is not None:
            age = ds.age_of(rec)
            if age is None:
                return False
            try:
                if age_group_of(rec.gender, age).band is not band:
                    return False
            except OutOfRange:
                return False
        return True

    kept = [r for r in ds.records if keep(r)]
    races = ds.races
    if era is not None:
        hosting = {r.race_id for r in ds.records if r.era is era}
        races = tuple(r for r in ds.races if r.race_id in hosting)
    return Dataset(tuple(kept), races)


_WS = re.compile(r"\s+")


def athlete_key(rec: PerformanceRecord) -> tuple[str, int | None]:
    """Deduplication key: normalised name plus year of birth."""
    return (_WS.sub(" ", rec.athlete_name).strip().casefold(), rec.year_of_birth)


class GenderCounts(NamedTuple):
    total: int
    men: int
    women: int


def group_by_athlete(ds: Dataset) -> dict[tuple[str, int | None], list[PerformanceRecord]]:
    """Map each athlete key to that athlete's records in start-date order."""
    groups: dict[tuple[str, int | None], list[PerformanceRecord]] = defaultdict(list)
    seen_in_race: set[tuple] = set()
    for rec in ds.records:
        key = athlete_key(rec)
        if (key, rec.race_id) in seen_in_race:
            logger.warning("athlete key %r appears more than once in race %s", key, rec.race_id)
        seen_in_race.add((key, rec.race_id))
        groups[key].append(rec)
    for recs in groups.values():
        recs.sort(key=lambda r: (ds.date_of(r), r.race_id))
    return dict(groups)


def unique_participants(ds: Dataset) -> GenderCounts:
    men: set = set()
    women: set = set()
    for key, recs in group_by_athlete(ds).items():
        (men if recs[0].gender is Gender.M else women).add(key)
    return GenderCounts(len(men) + len(women), len(men), len(women))


def gender_counts(records: Sequence[PerformanceRecord]) -> GenderCounts:
    men = sum(1 for r in records if r.gender is Gender.M)
    return GenderCounts(len(records), men, len(records) - men)
