"""Vehicle schedule construction via concurrent trip assignment.

Trips are processed in order of departure; each trip is appended to an
existing bus whose last trip can reach it in time, or opens a new bus.
Among the feasible buses the one with the shortest deadhead leg wins,
with ties broken by the latest end time of the last operated trip, then
by the least distance covered so far, then by the lowest bus index.

The tie-break order follows the algorithm's prose description (end time
before covered distance).  Executing the published pseudo-code's two
stacked stable sorts literally would invert that nesting; the prose
ordering is used here and the discrepancy is noted.

Each resulting trip sequence is augmented with synthetic depot arcs
(depot to first trip, last trip to depot).  The dwell time ahead of the
first trip is defined as zero: the bus leaves the depot just in time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .network import DEPOT, Network


@dataclass(frozen=True)
class TripSequence:
    """Ordered daily workload of one bus, depot to depot."""

    sequence_id: int
    trips: tuple[str, ...]
    arcs: tuple[tuple[str, str], ...]   # includes both depot arcs
    service_km: float
    deadhead_km: float

    @property
    def total_km(self) -> float:
        return self.service_km + self.deadhead_km


@dataclass(frozen=True)
class VehicleSchedule:
    sequences: tuple[TripSequence, ...]

    def fleet_size(self) -> int:
        return len(self.sequences)

    def trip_labels(self) -> list[str]:
        return [label for seq in self.sequences for label in seq.trips]


def _finish_sequence(seq_id: int, labels: list[str], network: Network) -> TripSequence:
    trips = network.trips
    dh = network.deadheads
    arcs = [(DEPOT, labels[0])]
    arcs += list(zip(labels, labels[1:]))
    arcs.append((labels[-1], DEPOT))
    service_km = sum(trips[l].distance_km for l in labels)
    deadhead_km = sum(dh.distance_km(i, j) for i, j in arcs)
    return TripSequence(sequence_id=seq_id, trips=tuple(labels),
                        arcs=tuple(arcs), service_km=service_km,
                        deadhead_km=deadhead_km)


def build_schedule(network: Network) -> VehicleSchedule:
    """Assign every timetable trip to a bus; deterministic for fixed input."""
    trips = network.trips
    dh = network.deadheads
    order = sorted(trips, key=lambda l: (trips[l].depart_min, l))
    if not order:
        return VehicleSchedule(sequences=())

    buses: list[list[str]] = [[order[0]]]
    covered_km: list[float] = [trips[order[0]].distance_km]

    for j in order[1:]:
        depart_j = trips[j].depart_min
        candidates = []   # (deadhead_min, -end_min(last), covered_km, index)
        for b, seq in enumerate(buses):
            i = seq[-1]
            t_ij = dh.travel_time_min(i, j)
            if trips[i].end_min + t_ij < depart_j:
                candidates.append((t_ij, -trips[i].end_min, covered_km[b], b))
        if candidates:
            _, _, _, b = min(candidates)
            i = buses[b][-1]
            covered_km[b] += dh.distance_km(i, j) + trips[j].distance_km
            buses[b].append(j)
        else:
            buses.append([j])
            covered_km.append(trips[j].distance_km)

    sequences = tuple(_finish_sequence(s, labels, network)
                      for s, labels in enumerate(buses))
    return VehicleSchedule(sequences=sequences)


def dwell_minutes(network: Network, seq: TripSequence, trip_label: str) -> float:
    """Net dwell time before a trip, usable for recharging, in minutes.

    Defined as (gap between the previous trip's end and this trip's
    departure) minus the deadhead travel time.  The first trip of a
    sequence has zero dwell by construction.
    """
    idx = seq.trips.index(trip_label)
    if idx == 0:
        return 0.0
    prev = seq.trips[idx - 1]
    gap = network.trips[trip_label].depart_min - network.trips[prev].end_min
    return gap - network.deadheads.travel_time_min(prev, trip_label)


def validate_schedule(schedule: VehicleSchedule, network: Network) -> list[str]:
    """Check schedule invariants; returns human-readable violations."""
    violations = []
    trips = network.trips
    dh = network.deadheads
    seen: dict[str, int] = {}
    for seq in schedule.sequences:
        if not seq.trips:
            violations.append(f"EmptySequence({seq.sequence_id})")
            continue
        for label in seq.trips:
            if label not in trips:
                violations.append(f"UnknownTrip({label})")
            elif label in seen:
                violations.append(f"DuplicatedTrip({label})")
            else:
                seen[label] = seq.sequence_id
        for i, j in zip(seq.trips, seq.trips[1:]):
            if trips[i].end_min + dh.travel_time_min(i, j) >= trips[j].depart_min:
                violations.append(f"InfeasibleArc({i}->{j})")
        expected = ((DEPOT, seq.trips[0]),) \
            + tuple(zip(seq.trips, seq.trips[1:])) + ((seq.trips[-1], DEPOT),)
        if seq.arcs != expected:
            violations.append(f"MalformedArcs({seq.sequence_id})")
    for label in trips:
        if label not in seen:
            violations.append(f"UncoveredTrip({label})")
    return violations


# --- schedule.json ----------------------------------------------------------

def write_schedule_json(schedule: VehicleSchedule, path: str | Path) -> None:
    payload = [
        {
            "sequence_id": seq.sequence_id,
            "trips": list(seq.trips),
            "arcs": [list(a) for a in seq.arcs],
            "service_km": seq.service_km,
            "deadhead_km": seq.deadhead_km,
        }
        for seq in schedule.sequences
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_schedule_json(path: str | Path) -> VehicleSchedule:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    sequences = tuple(
        TripSequence(
            sequence_id=item["sequence_id"],
            trips=tuple(item["trips"]),
            arcs=tuple((a[0], a[1]) for a in item["arcs"]),
            service_km=float(item["service_km"]),
            deadhead_km=float(item["deadhead_km"]),
        )
        for item in payload
    )
    return VehicleSchedule(sequences=sequences)
