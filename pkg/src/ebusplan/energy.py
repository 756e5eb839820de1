"""Battery state-of-charge simulation and a-priori feasibility analysis.

The simulation walks a trip sequence with the greedy policy "charge as
much as time and capacity allow at every equipped station".  Under a pure
capacity cap, charging earlier or more never reduces a later state of
charge, so the greedy trace dominates every admissible charging profile
and its feasibility verdict is exact rather than heuristic.

State of charge is tracked in usable energy terms: the cap is the usable
fraction of the nominal capacity, the bus leaves the depot full, and the
overnight depot charge is assumed sufficient.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NotABev, NotAnNcb
from .network import DEPOT, BusKind, BusType, Network, ScenarioConfig
from .scheduling import TripSequence, VehicleSchedule, dwell_minutes

_SOC_EPS = 1e-9


@dataclass(frozen=True)
class SocStep:
    """Energy bookkeeping for one trip of a sequence (kWh)."""

    trip: str
    soc_before: float       # on arrival at the start station, before charging
    charged: float
    soc_after_trip: float   # after the service leg, before the next deadhead


@dataclass(frozen=True)
class SocTrace:
    steps: tuple[SocStep, ...]
    final_soc: float        # at depot arrival
    feasible: bool


def consumption_kwh(network: Network, seq: TripSequence,
                    loaded_rate: float, empty_rate: float) -> float:
    """Total energy over a sequence at the given per-km rates."""
    return loaded_rate * seq.service_km + empty_rate * seq.deadhead_km


def simulate_sequence(seq: TripSequence, bus_type: BusType,
                      equipped_stations: Iterable[str],
                      charging_power_kw: float, network: Network,
                      config: ScenarioConfig | None = None) -> SocTrace:
    """Greedy SOC trace of a battery bus over one sequence.

    Charging happens at the start station of a trip whenever that station
    is equipped and the inbound arc left positive dwell; the amount is the
    minimum of power times dwell hours and the remaining headroom.
    Feasible means the SOC never drops below zero at any checkpoint,
    including depot arrival.
    """
    if not bus_type.is_battery:
        raise NotABev(f"bus type {bus_type.id!r} has no battery")
    config = config or network.config
    equipped = set(equipped_stations)
    cap = config.usable_soc_fraction * bus_type.battery_capacity_kwh
    o_p = bus_type.consumption_loaded
    o_e = bus_type.consumption_empty
    trips = network.trips
    dh = network.deadheads

    soc = cap - dh.distance_km(DEPOT, seq.trips[0]) * o_e
    feasible = True
    steps = []
    for idx, label in enumerate(seq.trips):
        q_i = soc
        if q_i < -_SOC_EPS:
            feasible = False
        w_i = 0.0
        if trips[label].start_station in equipped:
            dwell_h = dwell_minutes(network, seq, label) / 60.0
            if dwell_h > 0.0:
                w_i = min(charging_power_kw * dwell_h, max(cap - q_i, 0.0))
        soc = q_i + w_i - trips[label].distance_km * o_p
        steps.append(SocStep(trip=label, soc_before=q_i, charged=w_i,
                             soc_after_trip=soc))
        nxt = seq.trips[idx + 1] if idx + 1 < len(seq.trips) else DEPOT
        soc -= dh.distance_km(label, nxt) * o_e
    if soc < -_SOC_EPS:
        feasible = False
    return SocTrace(steps=tuple(steps), final_soc=soc, feasible=feasible)


def ncb_feasible(seq: TripSequence, bus_type: BusType, network: Network,
                 config: ScenarioConfig | None = None) -> bool:
    """True iff the sequence fits in the usable capacity without recharging."""
    if bus_type.kind is not BusKind.NCB:
        raise NotAnNcb(f"bus type {bus_type.id!r} is not a night charger")
    config = config or network.config
    total = consumption_kwh(network, seq, bus_type.consumption_loaded,
                            bus_type.consumption_empty)
    return total <= config.usable_soc_fraction * bus_type.battery_capacity_kwh


def replay_trace_violations(trace: SocTrace, seq: TripSequence,
                            bus_type: BusType, equipped_stations: Iterable[str],
                            charging_power_kw: float, network: Network,
                            tol: float = 1e-9) -> list[str]:
    """Re-check a trace against the raw energy balance inequalities.

    Used by tests to confirm that a feasible greedy trace satisfies the
    same constraints the optimization model imposes.
    """
    config = network.config
    equipped = set(equipped_stations)
    cap = config.usable_soc_fraction * bus_type.battery_capacity_kwh
    o_p, o_e = bus_type.consumption_loaded, bus_type.consumption_empty
    trips, dh = network.trips, network.deadheads
    out = []
    first = seq.trips[0]
    q0_cap = cap - dh.distance_km(DEPOT, first) * o_e
    if trace.steps[0].soc_before > q0_cap + tol:
        out.append(f"initial_soc({first})")
    prev = None
    for step in trace.steps:
        if step.soc_before < -tol:
            out.append(f"soc_negative({step.trip})")
        if step.soc_before + step.charged > cap + tol:
            out.append(f"over_capacity({step.trip})")
        limit = 0.0
        if trips[step.trip].start_station in equipped:
            limit = charging_power_kw * dwell_minutes(network, seq, step.trip) / 60.0
        if step.charged > limit + tol:
            out.append(f"over_charge({step.trip})")
        if prev is not None:
            expected = (prev.soc_before + prev.charged
                        - trips[prev.trip].distance_km * o_p
                        - dh.distance_km(prev.trip, step.trip) * o_e)
            if step.soc_before > expected + tol:
                out.append(f"soc_chain({prev.trip}->{step.trip})")
        prev = step
    if trace.final_soc < -tol:
        out.append("depot_arrival_negative")
    return out


def min_battery_capacity(seq: TripSequence, charging_power_kw: float,
                         network: Network,
                         config: ScenarioConfig | None = None,
                         tol_kwh: float = 0.1) -> float:
    """Smallest nominal capacity that keeps the sequence feasible.

    Assumes the most optimistic infrastructure: a charging facility at
    every candidate station.  Found by binary search; the upper bound
    (total consumption divided by the usable fraction) is always feasible
    because no recharging is then required.
    """
    config = config or network.config
    equipped = network.candidate_stations()
    probe = BusType(
        id="_probe", kind=BusKind.OCB, battery_capacity_kwh=1.0,
        holding_period_years=config.bus_lifetime_years, purchase_cost=0.0,
        battery_cost_per_kwh_initial=0.0, maintenance_cost_per_km=0.0,
        energy_price_per_unit=0.0,
        consumption_loaded=config.beb_consumption_kwh_per_km,
        consumption_empty=(config.empty_consumption_factor
                           * config.beb_consumption_kwh_per_km),
    )

    def feasible(q: float) -> bool:
        bt = dataclasses.replace(probe, battery_capacity_kwh=q)
        return simulate_sequence(seq, bt, equipped, charging_power_kw,
                                 network, config).feasible

    total = consumption_kwh(network, seq, probe.consumption_loaded,
                            probe.consumption_empty)
    if total <= 0.0:
        return 0.0
    hi = total / config.usable_soc_fraction
    lo = 0.0
    while hi - lo > tol_kwh / 2.0:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class FeasibilityRow:
    """Distribution of minimum capacities at one charging power level."""

    power_kw: float
    min_kwh: float
    q1_kwh: float
    median_kwh: float
    q3_kwh: float
    max_kwh: float
    share_pct: float   # share of sequences with min capacity <= q_max


def feasibility_study(schedule: VehicleSchedule, network: Network,
                      power_grid: Sequence[float], q_max_kwh: float,
                      config: ScenarioConfig | None = None) -> list[FeasibilityRow]:
    """Minimum-capacity distribution and feasible fleet share per power level."""
    config = config or network.config
    rows = []
    for r in power_grid:
        caps = np.array([min_battery_capacity(seq, r, network, config)
                         for seq in schedule.sequences])
        share = float(np.mean(caps <= q_max_kwh)) * 100.0 if caps.size else 0.0
        rows.append(FeasibilityRow(
            power_kw=r,
            min_kwh=float(caps.min()) if caps.size else 0.0,
            q1_kwh=float(np.percentile(caps, 25)) if caps.size else 0.0,
            median_kwh=float(np.percentile(caps, 50)) if caps.size else 0.0,
            q3_kwh=float(np.percentile(caps, 75)) if caps.size else 0.0,
            max_kwh=float(caps.max()) if caps.size else 0.0,
            share_pct=share,
        ))
    return rows


def write_feasibility_csv(rows: Sequence[FeasibilityRow], path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["power_kw", "min", "q1", "median", "q3", "max", "share_pct"])
        for r in rows:
            w.writerow([r.power_kw, r.min_kwh, r.q1_kwh, r.median_kwh,
                        r.q3_kwh, r.max_kwh, r.share_pct])
