"""Assembly of the multi-period transformation MILP in sparse form.

Decision columns per period t in 1..n:

* ``n_kt``, ``p_kt`` - integer fleet stock and purchases per bus type
* ``a_t``            - integer count of depot charging facilities
* ``y_it``           - binary charger indicator per candidate station
* ``x_skt``          - binary assignment of bus type k to sequence s
* ``theta_st``       - continuous capacity delimiter per sequence
* ``q_it``, ``w_it`` - continuous state of charge / recharge per trip

The objective carries the discounted fleet, infrastructure and operating
cash flows, the undiscounted initial fleet value as a constant, and the
end-of-horizon salvage of buses and batteries as negative terms.  Cash
flows of the initial fleet (scheduled retirements and their salvage) are
plan-independent and folded into the objective constant, which keeps the
reported objective equal to the total cost of ownership.

Energy-balance rows use the scenario-level battery-bus consumption rates;
with a single consumption value for all battery types (the default) these
coincide with the type-indexed rates used in the operating cost term.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .costs import InitialFleet, initial_fleet_ledger, residual_value, sale_value
from .energy import consumption_kwh
from .errors import EmptySchedule, ModelBuildError, NoPeriods, NoPurchasableTypes
from .network import (
    DEPOT,
    BusKind,
    BusType,
    Network,
    ScenarioConfig,
    battery_price,
    interpolate_cost,
)
from .scheduling import TripSequence, VehicleSchedule, dwell_minutes

LE, GE, EQ = "L", "G", "E"


@dataclass
class SparseMip:
    """Solver-independent sparse MILP: bounds, rows, objective."""

    col_names: list[str]
    col_lower: np.ndarray
    col_upper: np.ndarray
    col_integer: np.ndarray          # bool per column
    obj: np.ndarray
    obj_constant: float
    row_names: list[str]
    row_senses: list[str]            # 'L' (<=), 'G' (>=), 'E' (=)
    rhs: np.ndarray
    rows: list[list[tuple[int, float]]]

    @property
    def n_cols(self) -> int:
        return len(self.col_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    def dense_matrix(self) -> np.ndarray:
        a = np.zeros((self.n_rows, self.n_cols))
        for r, row in enumerate(self.rows):
            for c, coef in row:
                a[r, c] = coef
        return a

    def row_activity(self, values: np.ndarray, row: int) -> float:
        return sum(coef * values[col] for col, coef in self.rows[row])

    def check(self) -> None:
        for r, row in enumerate(self.rows):
            seen = set()
            for col, coef in row:
                if not (0 <= col < self.n_cols):
                    raise ModelBuildError(
                        f"row {self.row_names[r]} references column {col}")
                if not np.isfinite(coef):
                    raise ModelBuildError(
                        f"row {self.row_names[r]} has non-finite coefficient")
                if col in seen:
                    raise ModelBuildError(
                        f"row {self.row_names[r]} repeats column {col}")
                seen.add(col)


@dataclass
class VariableCatalog:
    """Dense index maps from decision names to column numbers."""

    types: list[BusType]
    periods: int
    sequences: tuple[TripSequence, ...]
    stations: list[str]              # candidate charger locations, in order
    initial_fleet: InitialFleet
    big_m: float
    n_idx: dict = field(default_factory=dict)      # (type_id, t) -> col
    p_idx: dict = field(default_factory=dict)      # (type_id, t) -> col
    a_idx: dict = field(default_factory=dict)      # t -> col
    y_idx: dict = field(default_factory=dict)      # (station, t) -> col
    x_idx: dict = field(default_factory=dict)      # (seq_id, type_id, t) -> col
    theta_idx: dict = field(default_factory=dict)  # (seq_id, t) -> col
    q_idx: dict = field(default_factory=dict)      # (trip_label, t) -> col
    w_idx: dict = field(default_factory=dict)      # (trip_label, t) -> col

    def type_by_id(self, type_id: str) -> BusType:
        for k in self.types:
            if k.id == type_id:
                return k
        raise KeyError(type_id)


_NAME_RE = re.compile(r"[^A-Za-z0-9_.\-]")


def _safe(name: str) -> str:
    return _NAME_RE.sub("_", str(name))


class _Builder:
    def __init__(self):
        self.names: list[str] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.integer: list[bool] = []
        self.obj: list[float] = []
        self.row_names: list[str] = []
        self.row_senses: list[str] = []
        self.rhs: list[float] = []
        self.rows: list[list[tuple[int, float]]] = []
        self._seen_names: set[str] = set()

    def add_col(self, name: str, lo: float, hi: float, is_int: bool) -> int:
        name = _safe(name)
        if name in self._seen_names:
            raise ModelBuildError(f"duplicate column name {name!r}")
        self._seen_names.add(name)
        self.names.append(name)
        self.lower.append(lo)
        self.upper.append(hi)
        self.integer.append(is_int)
        self.obj.append(0.0)
        return len(self.names) - 1

    def add_row(self, name: str, terms: list[tuple[int, float]],
                sense: str, rhs: float) -> None:
        self.row_names.append(_safe(name))
        self.row_senses.append(sense)
        self.rhs.append(rhs)
        self.rows.append([(c, v) for c, v in terms if v != 0.0])


def big_m_value(network: Network, schedule: VehicleSchedule,
                config: ScenarioConfig, catalog: list[BusType]) -> float:
    """Smallest delimiter bound that relaxes the energy rows for non-OCB
    assignments: worst-sequence consumption over the usable fraction plus
    the largest usable capacity."""
    o_p = config.beb_consumption_kwh_per_km
    o_e = config.empty_consumption_factor * o_p
    worst = max((consumption_kwh(network, seq, o_p, o_e)
                 for seq in schedule.sequences), default=0.0)
    q_max = max((k.battery_capacity_kwh for k in catalog if k.is_battery),
                default=0.0)
    return worst / config.usable_soc_fraction + config.usable_soc_fraction * q_max


def build_mip(network: Network, schedule: VehicleSchedule,
              config: ScenarioConfig | None = None,
              catalog: list[BusType] | None = None
              ) -> tuple[SparseMip, VariableCatalog]:
    """Emit the full transformation model for one scenario cell.

    Raises :class:`NoPeriods` for an empty horizon, :class:`EmptySchedule`
    for a schedule without sequences and :class:`NoPurchasableTypes` when
    the scenario filter leaves nothing to buy.
    """
    from .network import build_catalog, purchasable_types

    config = config or network.config
    if config.horizon_years < 1:
        raise NoPeriods("planning horizon has no decision periods")
    if not schedule.sequences:
        raise EmptySchedule("vehicle schedule has no trip sequences")
    catalog = catalog if catalog is not None else build_catalog(config)
    purchasable = {k.id for k in purchasable_types(catalog, config)}
    if not purchasable:
        raise NoPurchasableTypes(
            f"scenario {config.scenario!r} leaves no purchasable bus type")

    n_periods = config.horizon_years
    periods = range(1, n_periods + 1)
    ledger = initial_fleet_ledger(config, catalog)
    stations = network.candidate_stations()
    seqs = schedule.sequences
    fleet_cap = len(seqs)                       # buying more never pays off
    stock_cap = max((ledger.count_alive(t) for t in range(n_periods + 1)),
                    default=0) + fleet_cap * n_periods
    m_big = big_m_value(network, schedule, config, catalog)
    o_p = config.beb_consumption_kwh_per_km
    o_e = config.empty_consumption_factor * o_p
    mu = config.usable_soc_fraction
    r_kw = config.charging_power_kw

    # Per-sequence consumption at each type's own rates (operating costs
    # and the night-charger capacity rows).
    cons = {
        (s.sequence_id, k.id): consumption_kwh(
            network, s, k.consumption_loaded, k.consumption_empty)
        for s in seqs for k in catalog
    }

    b = _Builder()
    cat = VariableCatalog(types=list(catalog), periods=n_periods,
                          sequences=seqs, stations=stations,
                          initial_fleet=ledger, big_m=m_big)

    # --- columns -----------------------------------------------------------
    for k in catalog:
        for t in periods:
            cat.n_idx[(k.id, t)] = b.add_col(f"n_{k.id}_t{t}", 0, stock_cap, True)
    for k in catalog:
        hi_p = fleet_cap if k.id in purchasable else 0
        for t in periods:
            cat.p_idx[(k.id, t)] = b.add_col(f"p_{k.id}_t{t}", 0, hi_p, True)
    for t in periods:
        cat.a_idx[t] = b.add_col(f"a_t{t}", 0, stock_cap, True)
    for sid in stations:
        for t in periods:
            cat.y_idx[(sid, t)] = b.add_col(f"y_{sid}_t{t}", 0, 1, True)
    has_stock = {k.id: (k.id in purchasable
                        or (k.id == ledger.type_id and ledger.cohorts))
                 for k in catalog}
    for s in seqs:
        for k in catalog:
            for t in periods:
                hi_x = 1
                if not has_stock[k.id]:
                    hi_x = 0
                elif (k.kind is BusKind.NCB
                      and cons[(s.sequence_id, k.id)]
                      > mu * k.battery_capacity_kwh):
                    hi_x = 0   # night charger can never run this sequence
                cat.x_idx[(s.sequence_id, k.id, t)] = b.add_col(
                    f"x_s{s.sequence_id}_{k.id}_t{t}", 0, hi_x, True)
    for s in seqs:
        for t in periods:
            cat.theta_idx[(s.sequence_id, t)] = b.add_col(
                f"theta_s{s.sequence_id}_t{t}", 0.0, m_big, False)
    for s in seqs:
        for label in s.trips:
            for t in periods:
                cat.q_idx[(label, t)] = b.add_col(
                    f"q_{label}_t{t}", 0.0, m_big, False)
    for s in seqs:
        for label in s.trips:
            dwell_h = dwell_minutes(network, s, label) / 60.0
            start = network.trips[label].start_station
            chargeable = dwell_h > 0.0 and start in network.stations \
                and network.stations[start].is_candidate_ocf
            hi_w = r_kw * dwell_h if chargeable else 0.0
            for t in periods:
                cat.w_idx[(label, t)] = b.add_col(
                    f"w_{label}_t{t}", 0.0, hi_w, False)

    # --- rows ---------------------------------------------------------------
    # Stock balance: n_kt - n_k,t-1 - p_kt + p_k,t-h = initial-fleet constants.
    for k in catalog:
        for t in periods:
            terms = [(cat.n_idx[(k.id, t)], 1.0), (cat.p_idx[(k.id, t)], -1.0)]
            if t > 1:
                terms.append((cat.n_idx[(k.id, t - 1)], -1.0))
            t_sold = t - k.holding_period_years
            if t_sold >= 1:
                terms.append((cat.p_idx[(k.id, t_sold)], 1.0))
            rhs = 0.0
            if k.id == ledger.type_id:
                rhs += ledger.purchased_at(t) - ledger.sold_at(t)
                if t == 1:
                    rhs += ledger.count_alive(0)
            elif t == 1:
                rhs += 0.0
            b.add_row(f"stock_{k.id}_t{t}", terms, EQ, rhs)

    # Chargers cannot be uninstalled.
    for t in periods:
        terms = [(cat.a_idx[t], 1.0)]
        if t > 1:
            terms.append((cat.a_idx[t - 1], -1.0))
        b.add_row(f"ncf_mono_t{t}", terms, GE, 0.0)
    for sid in stations:
        for t in periods:
            terms = [(cat.y_idx[(sid, t)], 1.0)]
            if t > 1:
                terms.append((cat.y_idx[(sid, t - 1)], -1.0))
            b.add_row(f"ocf_mono_{sid}_t{t}", terms, GE, 0.0)

    # Every sequence is served by exactly one type; stock must cover use.
    for s in seqs:
        for t in periods:
            terms = [(cat.x_idx[(s.sequence_id, k.id, t)], 1.0) for k in catalog]
            b.add_row(f"assign_s{s.sequence_id}_t{t}", terms, EQ, 1.0)
    for k in catalog:
        for t in periods:
            terms = [(cat.n_idx[(k.id, t)], 1.0)]
            terms += [(cat.x_idx[(s.sequence_id, k.id, t)], -1.0) for s in seqs]
            b.add_row(f"cover_{k.id}_t{t}", terms, GE, 0.0)

    # Night chargers must fit the whole sequence in usable capacity.
    for s in seqs:
        for k in catalog:
            if k.kind is not BusKind.NCB:
                continue
            for t in periods:
                b.add_row(
                    f"ncb_cap_s{s.sequence_id}_{k.id}_t{t}",
                    [(cat.x_idx[(s.sequence_id, k.id, t)],
                      cons[(s.sequence_id, k.id)])],
                    LE, mu * k.battery_capacity_kwh)

    # Capacity delimiter binds only for the assigned opportunity charger.
    for s in seqs:
        for k in catalog:
            if k.kind is not BusKind.OCB:
                continue
            for t in periods:
                b.add_row(
                    f"theta_cap_s{s.sequence_id}_{k.id}_t{t}",
                    [(cat.theta_idx[(s.sequence_id, t)], 1.0),
                     (cat.x_idx[(s.sequence_id, k.id, t)], m_big)],
                    LE, mu * k.battery_capacity_kwh + m_big)

    # Energy balance along each sequence.
    for s in seqs:
        first = s.trips[0]
        d_depot = network.deadheads.distance_km(DEPOT, first)
        for t in periods:
            b.add_row(
                f"soc_first_s{s.sequence_id}_t{t}",
                [(cat.q_idx[(first, t)], 1.0),
                 (cat.theta_idx[(s.sequence_id, t)], -1.0)],
                LE, -d_depot * o_e)
        for i, j in s.arcs:
            if i == DEPOT:
                continue
            use = (network.trips[i].distance_km * o_p
                   + network.deadheads.distance_km(i, j) * o_e)
            for t in periods:
                terms = [(cat.q_idx[(i, t)], -1.0), (cat.w_idx[(i, t)], -1.0)]
                if j != DEPOT:
                    terms.insert(0, (cat.q_idx[(j, t)], 1.0))
                b.add_row(f"soc_chain_{i}_{j}_t{t}", terms, LE, -use)

    # Recharged energy is limited by dwell time, power and an installed
    # charger, and by the remaining headroom below the delimiter.
    for s in seqs:
        for label in s.trips:
            start = network.trips[label].start_station
            dwell_h = dwell_minutes(network, s, label) / 60.0
            for t in periods:
                terms = [(cat.w_idx[(label, t)], 1.0)]
                if start in stations and dwell_h > 0.0:
                    terms.append((cat.y_idx[(start, t)], -r_kw * dwell_h))
                b.add_row(f"chg_{label}_t{t}", terms, LE, 0.0)
        for label in s.trips:
            for t in periods:
                b.add_row(
                    f"headroom_{label}_t{t}",
                    [(cat.w_idx[(label, t)], 1.0),
                     (cat.q_idx[(label, t)], 1.0),
                     (cat.theta_idx[(s.sequence_id, t)], -1.0)],
                    LE, 0.0)

    # Optional non-paper coupling of depot chargers to battery-bus stock.
    if config.depot_coupling_mode == "per_beb":
        for t in periods:
            terms = [(cat.a_idx[t], 1.0)]
            terms += [(cat.n_idx[(k.id, t)], -1.0)
                      for k in catalog if k.is_battery]
            b.add_row(f"depot_coupling_t{t}", terms, GE, 0.0)

    _apply_objective(b, cat, network, schedule, config)

    mip = SparseMip(
        col_names=b.names,
        col_lower=np.array(b.lower, dtype=float),
        col_upper=np.array(b.upper, dtype=float),
        col_integer=np.array(b.integer, dtype=bool),
        obj=np.array(b.obj, dtype=float),
        obj_constant=_objective_constant(cat, config),
        row_names=b.row_names,
        row_senses=b.row_senses,
        rhs=np.array(b.rhs, dtype=float),
        rows=b.rows,
    )
    mip.check()
    return mip, cat


def _apply_objective(b: _Builder, cat: VariableCatalog, network: Network,
                     schedule: VehicleSchedule, config: ScenarioConfig) -> None:
    n = cat.periods
    disc = config.discount
    e_q = config.battery_lifetime_years
    e_b = config.bus_lifetime_years
    v_b = config.salvage_value
    eta = config.annual_operating_days
    end = n + 1

    for k in cat.types:
        for t in range(1, n + 1):
            col = cat.p_idx[(k.id, t)]
            coef = k.purchase_cost * disc(t)
            if k.is_battery:
                q_k = k.battery_capacity_kwh
                red = config.battery_price_reduction_per_year
                c0 = k.battery_cost_per_kwh_initial
                coef += battery_price(c0, red, t) * q_k * disc(t)
                t_repl = t + e_q
                if t_repl <= n:
                    coef += battery_price(c0, red, t_repl) * q_k * disc(t_repl)
                # End-of-horizon battery salvage: the battery bought with the
                # bus, and the replacement battery when one was installed.
                if t >= end - e_q:
                    coef -= (battery_price(c0, red, t) * q_k
                             * (1.0 - (end - t) / e_q) * disc(end))
                if t_repl <= n and t_repl >= end - e_q:
                    coef -= (battery_price(c0, red, t_repl) * q_k
                             * (1.0 - (end - t_repl) / e_q) * disc(end))
            t_sale = t + k.holding_period_years
            if t_sale <= n:
                coef -= sale_value(k, config) * disc(t_sale)
            else:
                coef -= residual_value(k.purchase_cost, v_b, end - t,
                                       e_b) * disc(end)
            b.obj[col] += coef

    # Charging infrastructure: install on increments, maintain on stock.
    ocf_install = interpolate_cost(config.ocf_cost_anchor_points,
                                   config.charging_power_kw)
    ocf_maint = config.facility_maintenance_fraction * ocf_install
    ncf_maint = config.facility_maintenance_fraction * config.ncf_cost
    for t in range(1, n + 1):
        b.obj[cat.a_idx[t]] += (config.ncf_cost + ncf_maint) * disc(t)
        if t > 1:
            b.obj[cat.a_idx[t - 1]] -= config.ncf_cost * disc(t)
        for sid in cat.stations:
            b.obj[cat.y_idx[(sid, t)]] += (ocf_install + ocf_maint) * disc(t)
            if t > 1:
                b.obj[cat.y_idx[(sid, t - 1)]] -= ocf_install * disc(t)

    # Operating costs: maintenance plus energy, scaled to annual days.
    for s in schedule.sequences:
        for k in cat.types:
            energy = consumption_kwh(network, s, k.consumption_loaded,
                                     k.consumption_empty)
            per_day = (k.maintenance_cost_per_km * s.total_km
                       + k.energy_price_per_unit * energy)
            for t in range(1, n + 1):
                b.obj[cat.x_idx[(s.sequence_id, k.id, t)]] += \
                    eta * per_day * disc(t)


def _objective_constant(cat: VariableCatalog, config: ScenarioConfig) -> float:
    """Initial fleet value plus its fixed retirement cash flows."""
    ledger = cat.initial_fleet
    n = cat.periods
    const = ledger.initial_value(config)
    for t in range(1, n + 1):
        const -= ledger.sale_revenue_at(t, config) * config.discount(t)
    const -= ledger.final_salvage(n, config) * config.discount(n + 1)
    return const


def iceb_fallback_plan(mip: SparseMip, cat: VariableCatalog, network: Network,
                       config: ScenarioConfig | None = None) -> np.ndarray | None:
    """All-combustion incumbent used to seed branch and bound.

    Assigns every sequence to one combustion class in every period, buys
    whatever stock the retirements leave uncovered, installs nothing, and
    fills the energy columns with the zero-charging cascade (the delimiter
    sits at its upper bound, which the big-M value makes feasible).
    Returns None when the catalog has no combustion class.
    """
    config = config or network.config
    iceb = [k for k in cat.types
            if k.kind is BusKind.ICEB and mip.col_upper[cat.p_idx[(k.id, 1)]] > 0]
    if not iceb:
        return None
    k_star = max(iceb, key=lambda k: k.holding_period_years)
    ledger = cat.initial_fleet
    need = len(cat.sequences)
    values = np.zeros(mip.n_cols)

    alive_new: dict[int, int] = {}    # purchase period -> count
    for t in range(1, cat.periods + 1):
        stock = ledger.count_alive(t) if k_star.id == ledger.type_id else 0
        stock += sum(cnt for tau, cnt in alive_new.items()
                     if tau <= t < tau + k_star.holding_period_years)
        if stock < need:
            alive_new[t] = alive_new.get(t, 0) + (need - stock)
            values[cat.p_idx[(k_star.id, t)]] = alive_new[t]
            stock = need
        values[cat.n_idx[(k_star.id, t)]] = stock
        # Idle stock of other initial-fleet buses still sits in the books.
        if k_star.id != ledger.type_id and ledger.cohorts:
            values[cat.n_idx[(ledger.type_id, t)]] = ledger.count_alive(t)
        for s in cat.sequences:
            values[cat.x_idx[(s.sequence_id, k_star.id, t)]] = 1.0

    o_p = config.beb_consumption_kwh_per_km
    o_e = config.empty_consumption_factor * o_p
    for s in cat.sequences:
        for t in range(1, cat.periods + 1):
            theta = cat.big_m
            values[cat.theta_idx[(s.sequence_id, t)]] = theta
            soc = theta - network.deadheads.distance_km(DEPOT, s.trips[0]) * o_e
            for idx, label in enumerate(s.trips):
                values[cat.q_idx[(label, t)]] = soc
                soc -= network.trips[label].distance_km * o_p
                nxt = s.trips[idx + 1] if idx + 1 < len(s.trips) else DEPOT
                soc -= network.deadheads.distance_km(label, nxt) * o_e
    return values
