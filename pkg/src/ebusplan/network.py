"""Physical bus network, timetable, fleet and scenario data.

The on-disk representation is a directory of UTF-8, comma-separated CSV
files plus one JSON file:

* ``stations.csv``  (id, is_candidate_ocf, is_depot)
* ``trips.csv``     (label, start_station, end_station, depart_min, end_min,
  distance_km)
* ``deadheads.csv`` (from, to, distance_km, time_min) where ``from``/``to``
  are trip labels or the reserved id ``DEPOT``; the distance/time refer to
  the leg between the end station of ``from`` and the start station of
  ``to``
* ``fleet.csv``     (emission_class, age_years, count) for the initial
  combustion fleet
* ``scenario.json`` holding the planning parameters (see
  :class:`ScenarioConfig`)

Times are integer minutes from the start of the operating day; distances
are kilometres; money is euros.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DuplicateTripLabel,
    IncompleteDeadheadMatrix,
    MissingDepot,
    NegativeValue,
    NetworkDataError,
    PowerOutOfRange,
)

DEPOT = "DEPOT"


@dataclass(frozen=True)
class Station:
    id: str
    is_candidate_ocf: bool = False
    is_depot: bool = False


@dataclass(frozen=True)
class Trip:
    """One service trip of the timetable (driving with passengers)."""

    label: str
    start_station: str
    end_station: str
    depart_min: int
    end_min: int
    distance_km: float


@dataclass(frozen=True)
class FleetCohort:
    """Initial combustion buses sharing an emission class and age."""

    emission_class: str
    age_years: int
    count: int


class BusKind(str, Enum):
    ICEB = "iceb"   # internal combustion
    NCB = "ncb"     # battery bus, depot charging only
    OCB = "ocb"     # battery bus, can recharge at station facilities


@dataclass(frozen=True)
class BusType:
    """One purchasable bus type with its cost and technical parameters.

    ``energy_price_per_unit`` and the consumption rates use kWh for battery
    buses and litres of diesel for combustion buses; the operating cost
    formula is identical in both unit systems.
    """

    id: str
    kind: BusKind
    battery_capacity_kwh: float          # 0 for combustion buses
    holding_period_years: int
    purchase_cost: float                 # euros, excl. battery for BEBs
    battery_cost_per_kwh_initial: float  # euros/kWh at period 0, 0 for ICEB
    maintenance_cost_per_km: float
    energy_price_per_unit: float
    consumption_loaded: float            # per km, with passengers
    consumption_empty: float             # per km, deadheading
    emission_class: str | None = None    # combustion buses only

    @property
    def is_battery(self) -> bool:
        return self.kind is not BusKind.ICEB


class DeadheadMatrix:
    """Distance/time lookup between trip ends and trip starts.

    Keys are (from, to) node pairs where a node is a trip label or
    :data:`DEPOT`.  Pairs whose end and start stations coincide are
    implicitly zero; any other missing pair is an error rather than an
    assumed zero, because silent zeros would fabricate feasibility.
    """

    def __init__(self, entries: Mapping[tuple[str, str], tuple[float, float]],
                 end_station: Mapping[str, str], start_station: Mapping[str, str]):
        self._entries = dict(entries)
        self._end_station = dict(end_station)      # node -> station at its end
        self._start_station = dict(start_station)  # node -> station at its start

    def _same_station(self, i: str, j: str) -> bool:
        return self._end_station[i] == self._start_station[j]

    def lookup(self, i: str, j: str) -> tuple[float, float]:
        """Return (distance_km, time_min) for the leg from i to j."""
        entry = self._entries.get((i, j))
        if entry is not None:
            return entry
        if i in self._end_station and j in self._start_station and self._same_station(i, j):
            return (0.0, 0.0)
        raise IncompleteDeadheadMatrix(i, j)

    def distance_km(self, i: str, j: str) -> float:
        return self.lookup(i, j)[0]

    def travel_time_min(self, i: str, j: str) -> float:
        return self.lookup(i, j)[1]

    def entries(self) -> dict[tuple[str, str], tuple[float, float]]:
        return dict(self._entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DeadheadMatrix):
            return NotImplemented
        return (self._entries == other._entries
                and self._end_station == other._end_station
                and self._start_station == other._start_station)


SCENARIOS = ("all", "ic", "nc", "oc")

# Bus kinds purchasable in each scenario.
SCENARIO_KINDS = {
    "all": (BusKind.ICEB, BusKind.NCB, BusKind.OCB),
    "ic": (BusKind.ICEB,),
    "nc": (BusKind.ICEB, BusKind.NCB),
    "oc": (BusKind.ICEB, BusKind.OCB),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """All planning parameters of one scenario cell.

    Defaults follow the published technical and cost data for a German
    urban bus operator; any field can be overridden in ``scenario.json``.
    """

    horizon_years: int = 20
    scenario: str = "all"
    charging_power_kw: float = 350.0
    battery_price_reduction_per_year: float = 0.025   # fraction of price
    discount_rate: float = 0.05
    annual_operating_days: float = 307.0              # workday equivalents
    usable_soc_fraction: float = 0.8
    battery_lifetime_years: int = 6
    bus_lifetime_years: int = 12
    salvage_fraction: float = 0.07                    # of ICEB purchase cost
    ocf_cost_anchor_points: tuple[tuple[float, float], ...] = (
        (50.0, 30_000.0), (150.0, 90_000.0), (350.0, 134_250.0))
    battery_cost_anchor_points: tuple[tuple[float, float], ...] = (
        (50.0, 487.5), (350.0, 780.0))
    ncf_cost: float = 5_000.0
    ncf_power_kw: float = 50.0
    facility_maintenance_fraction: float = 0.01       # per year, of install
    initial_fleet: tuple[FleetCohort, ...] = ()
    depot_coupling_mode: str = "none"                 # "none" | "per_beb"

    # Catalog economics (purchase, maintenance, energy, consumption).
    iceb_purchase_cost: float = 330_000.0
    beb_purchase_cost: float = 350_000.0
    iceb_maintenance_per_km: float = 0.5
    beb_maintenance_per_km: float = 0.44
    diesel_price_per_l: float = 0.97
    electricity_price_per_kwh: float = 0.13
    iceb_consumption_l_per_km: float = 0.61
    beb_consumption_kwh_per_km: float = 2.06
    empty_consumption_factor: float = 0.75
    battery_capacities_kwh: tuple[float, ...] = (100.0, 200.0, 300.0, 400.0)
    iceb_holding_periods: tuple[int, ...] | None = None  # default 1..lifetime

    def __post_init__(self):
        if self.horizon_years < 0:
            raise NetworkDataError("horizon_years must be >= 0")
        if self.scenario not in SCENARIOS:
            raise NetworkDataError(
                f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not (0.0 < self.usable_soc_fraction <= 1.0):
            raise NetworkDataError("usable_soc_fraction must be in (0, 1]")
        if self.discount_rate < 0.0:
            raise NetworkDataError("discount_rate must be >= 0")
        if not (0.0 <= self.battery_price_reduction_per_year < 1.0):
            raise NetworkDataError(
                "battery_price_reduction_per_year must be in [0, 1)")
        if self.annual_operating_days <= 0.0:
            raise NetworkDataError("annual_operating_days must be > 0")
        if self.depot_coupling_mode not in ("none", "per_beb"):
            raise NetworkDataError(
                "depot_coupling_mode must be 'none' or 'per_beb'")
        for anchors, name in ((self.ocf_cost_anchor_points, "ocf_cost_anchor_points"),
                              (self.battery_cost_anchor_points, "battery_cost_anchor_points")):
            powers = [p for p, _ in anchors]
            if len(powers) < 1 or any(b <= a for a, b in zip(powers, powers[1:])):
                raise NetworkDataError(
                    f"{name} must be non-empty and strictly increasing in power")

    @property
    def salvage_value(self) -> float:
        """Uniform sale floor v applied to every bus type, in euros."""
        return self.salvage_fraction * self.iceb_purchase_cost

    def holding_periods(self) -> tuple[int, ...]:
        if self.iceb_holding_periods is not None:
            return self.iceb_holding_periods
        return tuple(range(1, self.bus_lifetime_years + 1))

    def discount(self, period_t: int) -> float:
        return 1.0 / (1.0 + self.discount_rate) ** period_t


@dataclass
class Network:
    """Validated, immutable-by-convention view of one bus network."""

    stations: dict[str, Station]
    trips: dict[str, Trip]
    deadheads: DeadheadMatrix
    depot_id: str
    config: ScenarioConfig

    def candidate_stations(self) -> list[str]:
        return [s.id for s in self.stations.values() if s.is_candidate_ocf]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (self.stations == other.stations and self.trips == other.trips
                and self.deadheads == other.deadheads
                and self.depot_id == other.depot_id
                and self.config == other.config)


# --- cost interpolation and battery prices ---------------------------------

def interpolate_cost(anchor_points: Sequence[tuple[float, float]],
                     power_kw: float) -> float:
    """Piecewise-linear cost interpolation between (power, cost) anchors.

    Exact at every anchor; raises :class:`PowerOutOfRange` outside the
    anchored power range (no extrapolation).
    """
    powers = [p for p, _ in anchor_points]
    if power_kw < powers[0] or power_kw > powers[-1]:
        raise PowerOutOfRange(power_kw, powers[0], powers[-1])
    for (p0, c0), (p1, c1) in zip(anchor_points, anchor_points[1:]):
        if p0 <= power_kw <= p1:
            if power_kw == p0:
                return c0
            if power_kw == p1:
                return c1
            return c0 + (power_kw - p0) / (p1 - p0) * (c1 - c0)
    return anchor_points[-1][1]   # single-anchor list, power == anchor


def battery_price(initial_cost_per_kwh: float, reduction_per_year: float,
                  period_t: int) -> float:
    """Battery price per kWh in period t under geometric annual decay."""
    if period_t < 0:
        raise ValueError("period_t must be >= 0")
    return initial_cost_per_kwh * (1.0 - reduction_per_year) ** period_t


def battery_price_for(config: ScenarioConfig, bus_type: BusType,
                      period_t: int) -> float:
    return battery_price(bus_type.battery_cost_per_kwh_initial,
                         config.battery_price_reduction_per_year, period_t)


# --- bus type catalog -------------------------------------------------------

def build_catalog(config: ScenarioConfig) -> list[BusType]:
    """Derive the bus type catalog from the scenario parameters.

    Combustion classes differ only in holding period (one class per
    allowed holding length); battery types are the cross product of
    charging concept and battery capacity.  Battery cost per kWh is read
    off the anchor curve at the type's charging power: depot power for
    night chargers, the scenario's station power for opportunity chargers.
    """
    types: list[BusType] = []
    empty = config.empty_consumption_factor
    for h in config.holding_periods():
        types.append(BusType(
            id=f"iceb_h{h}",
            kind=BusKind.ICEB,
            battery_capacity_kwh=0.0,
            holding_period_years=h,
            purchase_cost=config.iceb_purchase_cost,
            battery_cost_per_kwh_initial=0.0,
            maintenance_cost_per_km=config.iceb_maintenance_per_km,
            energy_price_per_unit=config.diesel_price_per_l,
            consumption_loaded=config.iceb_consumption_l_per_km,
            consumption_empty=empty * config.iceb_consumption_l_per_km,
            emission_class="EU-VI",
        ))
    ncb_battery_cost = interpolate_cost(
        config.battery_cost_anchor_points, config.ncf_power_kw)
    ocb_battery_cost = interpolate_cost(
        config.battery_cost_anchor_points, config.charging_power_kw)
    for q in config.battery_capacities_kwh:
        common = dict(
            battery_capacity_kwh=q,
            holding_period_years=config.bus_lifetime_years,
            purchase_cost=config.beb_purchase_cost,
            maintenance_cost_per_km=config.beb_maintenance_per_km,
            energy_price_per_unit=config.electricity_price_per_kwh,
            consumption_loaded=config.beb_consumption_kwh_per_km,
            consumption_empty=empty * config.beb_consumption_kwh_per_km,
        )
        types.append(BusType(id=f"ncb_{q:g}", kind=BusKind.NCB,
                             battery_cost_per_kwh_initial=ncb_battery_cost,
                             **common))
        types.append(BusType(id=f"ocb_{q:g}", kind=BusKind.OCB,
                             battery_cost_per_kwh_initial=ocb_battery_cost,
                             **common))
    return types


def purchasable_types(catalog: Iterable[BusType],
                      config: ScenarioConfig) -> list[BusType]:
    kinds = SCENARIO_KINDS[config.scenario]
    return [k for k in catalog if k.kind in kinds]


# --- CSV / JSON loading ------------------------------------------------------

_STATION_COLUMNS = ("id", "is_candidate_ocf", "is_depot")
_TRIP_COLUMNS = ("label", "start_station", "end_station",
                 "depart_min", "end_min", "distance_km")
_DEADHEAD_COLUMNS = ("from", "to", "distance_km", "time_min")
_FLEET_COLUMNS = ("emission_class", "age_years", "count")

_TRUE = {"1", "true", "yes"}
_FALSE = {"0", "false", "no", ""}


def _parse_bool(raw: str, record: str) -> bool:
    v = raw.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise NetworkDataError(f"cannot parse boolean {raw!r} in record {record!r}")


def _read_rows(path: Path, required: Sequence[str]) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise NetworkDataError(
                f"{path.name}: missing required column(s) {missing}")
        unknown = [c for c in header if c not in required]
        if unknown:
            warnings.warn(
                f"{path.name}: ignoring unknown column(s) {unknown}",
                stacklevel=2)
        return [row for row in reader]


def _load_stations(path: Path) -> tuple[dict[str, Station], str]:
    stations: dict[str, Station] = {}
    depot_id = None
    for row in _read_rows(path, _STATION_COLUMNS):
        sid = row["id"].strip()
        if sid in stations:
            raise NetworkDataError(f"duplicate station id {sid!r}")
        st = Station(
            id=sid,
            is_candidate_ocf=_parse_bool(row["is_candidate_ocf"], sid),
            is_depot=_parse_bool(row["is_depot"], sid),
        )
        stations[sid] = st
        if st.is_depot:
            if depot_id is not None:
                raise NetworkDataError(
                    f"more than one depot: {depot_id!r} and {sid!r}")
            depot_id = sid
    if depot_id is None:
        raise MissingDepot("stations.csv declares no depot station")
    return stations, depot_id


def _load_trips(path: Path, stations: Mapping[str, Station]) -> dict[str, Trip]:
    trips: dict[str, Trip] = {}
    for row in _read_rows(path, _TRIP_COLUMNS):
        label = row["label"].strip()
        if label == DEPOT:
            raise NetworkDataError(f"trip label {DEPOT!r} is reserved")
        if label in trips:
            raise DuplicateTripLabel(label)
        distance = float(row["distance_km"])
        if distance < 0:
            raise NegativeValue(label, "distance_km", distance)
        depart, end = int(row["depart_min"]), int(row["end_min"])
        if depart >= end:
            raise NetworkDataError(
                f"trip {label!r}: depart_min {depart} must precede end_min {end}")
        for col in ("start_station", "end_station"):
            if row[col].strip() not in stations:
                raise NetworkDataError(
                    f"trip {label!r}: unknown station {row[col]!r}")
        trips[label] = Trip(
            label=label,
            start_station=row["start_station"].strip(),
            end_station=row["end_station"].strip(),
            depart_min=depart,
            end_min=end,
            distance_km=distance,
        )
    return trips


def _load_deadheads(path: Path, trips: Mapping[str, Trip],
                    depot_station: str) -> DeadheadMatrix:
    end_station = {label: t.end_station for label, t in trips.items()}
    start_station = {label: t.start_station for label, t in trips.items()}
    end_station[DEPOT] = depot_station
    start_station[DEPOT] = depot_station
    entries: dict[tuple[str, str], tuple[float, float]] = {}
    for row in _read_rows(path, _DEADHEAD_COLUMNS):
        i, j = row["from"].strip(), row["to"].strip()
        record = f"{i}->{j}"
        for node in (i, j):
            if node != DEPOT and node not in trips:
                raise NetworkDataError(
                    f"deadheads.csv: unknown trip {node!r} in record {record!r}")
        dist, time = float(row["distance_km"]), float(row["time_min"])
        if dist < 0:
            raise NegativeValue(record, "distance_km", dist)
        if time < 0:
            raise NegativeValue(record, "time_min", time)
        same = end_station[i] == start_station[j]
        if same and (dist != 0.0 or time != 0.0):
            raise NetworkDataError(
                f"deadheads.csv: record {record!r} links the same station "
                f"but is nonzero ({dist} km, {time} min)")
        entries[(i, j)] = (dist, time)
    matrix = DeadheadMatrix(entries, end_station, start_station)
    _check_deadhead_completeness(matrix, trips)
    return matrix


def _check_deadhead_completeness(matrix: DeadheadMatrix,
                                 trips: Mapping[str, Trip]) -> None:
    # The scheduler may consult any pair whose second trip departs no
    # earlier than the first, plus all depot legs; require those upfront.
    labels = list(trips)
    for j in labels:
        matrix.lookup(DEPOT, j)
        matrix.lookup(j, DEPOT)
    for i in labels:
        for j in labels:
            if i != j and trips[i].depart_min <= trips[j].depart_min:
                matrix.lookup(i, j)


def _load_fleet(path: Path, config_lifetime: int) -> tuple[FleetCohort, ...]:
    cohorts = []
    for row in _read_rows(path, _FLEET_COLUMNS):
        record = f"{row['emission_class']}/{row['age_years']}"
        age, count = int(row["age_years"]), int(row["count"])
        if age < 0:
            raise NegativeValue(record, "age_years", age)
        if count < 0:
            raise NegativeValue(record, "count", count)
        if age >= config_lifetime:
            raise NetworkDataError(
                f"fleet.csv: cohort {record!r} is already past the bus "
                f"lifetime of {config_lifetime} years")
        if count:
            cohorts.append(FleetCohort(row["emission_class"].strip(), age, count))
    return tuple(cohorts)


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig)}
_LIST_FIELDS = {"ocf_cost_anchor_points", "battery_cost_anchor_points",
                "battery_capacities_kwh", "iceb_holding_periods"}


def _load_scenario(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise NetworkDataError("scenario.json must hold one JSON object")
    unknown = [k for k in raw if k not in _CONFIG_FIELDS or k == "initial_fleet"]
    if unknown:
        warnings.warn(f"scenario.json: ignoring unknown field(s) {unknown}",
                      stacklevel=2)
    kwargs = {}
    for key, value in raw.items():
        if key in unknown:
            continue
        if key in _LIST_FIELDS and value is not None:
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[key] = value
    return kwargs


def load_network(data_dir: str | Path) -> Network:
    """Load and validate a network directory; all invariants are checked."""
    data_dir = Path(data_dir)
    for name in ("stations.csv", "trips.csv", "deadheads.csv",
                 "fleet.csv", "scenario.json"):
        if not (data_dir / name).exists():
            raise NetworkDataError(f"missing input file {name} in {data_dir}")

    kwargs = _load_scenario(data_dir / "scenario.json")
    stations, depot_id = _load_stations(data_dir / "stations.csv")
    trips = _load_trips(data_dir / "trips.csv", stations)
    matrix = _load_deadheads(data_dir / "deadheads.csv", trips, depot_id)

    lifetime = kwargs.get("bus_lifetime_years",
                          ScenarioConfig.bus_lifetime_years)
    kwargs["initial_fleet"] = _load_fleet(data_dir / "fleet.csv", lifetime)
    config = ScenarioConfig(**kwargs)

    start_of_some_trip = {t.start_station for t in trips.values()}
    for st in stations.values():
        if st.is_candidate_ocf and st.id not in start_of_some_trip:
            raise NetworkDataError(
                f"station {st.id!r} is marked as a charger candidate but "
                f"no trip starts there")

    return Network(stations=stations, trips=trips, deadheads=matrix,
                   depot_id=depot_id, config=config)


def serialize_network(network: Network, data_dir: str | Path) -> None:
    """Write a network back to the CSV/JSON file set it was loaded from."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)

    with open(data_dir / "stations.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_STATION_COLUMNS)
        for s in network.stations.values():
            w.writerow([s.id, int(s.is_candidate_ocf), int(s.is_depot)])

    with open(data_dir / "trips.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_TRIP_COLUMNS)
        for t in network.trips.values():
            w.writerow([t.label, t.start_station, t.end_station,
                        t.depart_min, t.end_min, repr(t.distance_km)])

    with open(data_dir / "deadheads.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_DEADHEAD_COLUMNS)
        for (i, j), (dist, time) in sorted(network.deadheads.entries().items()):
            w.writerow([i, j, repr(dist), repr(time)])

    with open(data_dir / "fleet.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_FLEET_COLUMNS)
        for c in network.config.initial_fleet:
            w.writerow([c.emission_class, c.age_years, c.count])

    cfg = dataclasses.asdict(network.config)
    del cfg["initial_fleet"]
    with open(data_dir / "scenario.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
