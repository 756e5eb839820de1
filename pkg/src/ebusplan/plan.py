"""Transformation plans: extraction, independent pricing, and auditing.

``price_plan`` recomputes every cost item directly from the decision
values (purchases, chargers, assignments), so a solver's objective can be
audited against an independent tally of the same cash flows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .costs import residual_value, sale_value
from .errors import DimensionMismatch
from .mip import SparseMip, VariableCatalog
from .network import BusKind, Network, ScenarioConfig, battery_price, interpolate_cost
from .energy import consumption_kwh


@dataclass
class ItemizedTco:
    """Cost decomposition of one plan; per-period lists are 1-indexed by
    padding index 0 with zero."""

    initial_fleet_value: float
    bus_purchase: list[float]
    battery_purchase: list[float]
    bus_sales: list[float]
    infra_install: list[float]
    infra_maintenance: list[float]
    operating_maintenance: list[float]
    operating_energy: list[float]
    final_bus_salvage: float
    final_battery_salvage: float
    tco: float

    def as_dict(self) -> dict:
        return {
            "initial_fleet_value": self.initial_fleet_value,
            "bus_purchase": self.bus_purchase,
            "battery_purchase": self.battery_purchase,
            "bus_sales": self.bus_sales,
            "infra_install": self.infra_install,
            "infra_maintenance": self.infra_maintenance,
            "operating_maintenance": self.operating_maintenance,
            "operating_energy": self.operating_energy,
            "final_bus_salvage": self.final_bus_salvage,
            "final_battery_salvage": self.final_battery_salvage,
            "tco": self.tco,
        }


@dataclass
class TransformationPlan:
    """Solved decision values plus the itemized cost report."""

    catalog: VariableCatalog
    values: np.ndarray               # full column vector of the model
    objective: float
    items: ItemizedTco | None = None

    def purchases(self, type_id: str, t: int) -> int:
        return int(round(self.values[self.catalog.p_idx[(type_id, t)]]))

    def stock(self, type_id: str, t: int) -> int:
        return int(round(self.values[self.catalog.n_idx[(type_id, t)]]))

    def ncf_count(self, t: int) -> int:
        return int(round(self.values[self.catalog.a_idx[t]]))

    def ocf_installed(self, station: str, t: int) -> bool:
        return self.values[self.catalog.y_idx[(station, t)]] > 0.5

    def assigned_type(self, seq_id: int, t: int) -> str:
        best, best_val = None, -1.0
        for k in self.catalog.types:
            v = self.values[self.catalog.x_idx[(seq_id, k.id, t)]]
            if v > best_val:
                best, best_val = k.id, v
        return best

    def fleet_composition(self) -> dict[str, list[int]]:
        """Per-type stock per period (index 0 unused)."""
        return {
            k.id: [0] + [self.stock(k.id, t)
                         for t in range(1, self.catalog.periods + 1)]
            for k in self.catalog.types
        }


def price_plan(plan: TransformationPlan, network: Network,
               schedule, config: ScenarioConfig | None = None) -> ItemizedTco:
    """Re-derive the itemized total cost of ownership from raw decisions."""
    config = config or network.config
    cat = plan.catalog
    n = cat.periods
    expected_cols = max(
        max(cat.w_idx.values(), default=0),
        max(cat.theta_idx.values(), default=0)) + 1
    if plan.values.ndim != 1 or plan.values.size < expected_cols:
        raise DimensionMismatch(
            f"plan has {plan.values.size} values, model needs {expected_cols}")

    ledger = cat.initial_fleet
    v_b = config.salvage_value
    e_b = config.bus_lifetime_years
    e_q = config.battery_lifetime_years
    red = config.battery_price_reduction_per_year
    end = n + 1

    zero = [0.0] * (n + 1)
    bus_purchase = zero.copy()
    battery_purchase = zero.copy()
    bus_sales = zero.copy()
    infra_install = zero.copy()
    infra_maint = zero.copy()
    oper_maint = zero.copy()
    oper_energy = zero.copy()
    final_bus = ledger.final_salvage(n, config)
    final_battery = 0.0

    p = {(k.id, t): plan.purchases(k.id, t)
         for k in cat.types for t in range(1, n + 1)}

    for k in cat.types:
        for t in range(1, n + 1):
            count = p[(k.id, t)]
            bus_purchase[t] += k.purchase_cost * count
            if k.is_battery:
                q_k = k.battery_capacity_kwh
                c0 = k.battery_cost_per_kwh_initial
                replaced = p[(k.id, t - e_q)] if t - e_q >= 1 else 0
                battery_purchase[t] += (battery_price(c0, red, t) * q_k
                                        * (count + replaced))
            t_bought = t - k.holding_period_years
            if t_bought >= 1:
                bus_sales[t] += sale_value(k, config) * p[(k.id, t_bought)]
        if k.id == ledger.type_id:
            for t in range(1, n + 1):
                bus_sales[t] += ledger.sale_revenue_at(t, config)
        # End-of-horizon salvage for buses still held.
        for t in range(max(1, end - k.holding_period_years), n + 1):
            count = p[(k.id, t)]
            if count:
                final_bus += residual_value(k.purchase_cost, v_b,
                                            end - t, e_b) * count
        if k.is_battery:
            q_k = k.battery_capacity_kwh
            c0 = k.battery_cost_per_kwh_initial
            for t in range(max(1, end - e_q), n + 1):
                count = p[(k.id, t)]
                replaced = p[(k.id, t - e_q)] if t - e_q >= 1 else 0
                final_battery += (battery_price(c0, red, t) * q_k
                                  * (1.0 - (end - t) / e_q)
                                  * (count + replaced))

    ocf_install_cost = interpolate_cost(config.ocf_cost_anchor_points,
                                        config.charging_power_kw)
    ocf_maint_cost = config.facility_maintenance_fraction * ocf_install_cost
    ncf_maint_cost = config.facility_maintenance_fraction * config.ncf_cost
    for t in range(1, n + 1):
        a_t = plan.ncf_count(t)
        a_prev = plan.ncf_count(t - 1) if t > 1 else 0
        y_t = sum(plan.ocf_installed(sid, t) for sid in cat.stations)
        y_prev = sum(plan.ocf_installed(sid, t - 1)
                     for sid in cat.stations) if t > 1 else 0
        infra_install[t] = (ocf_install_cost * (y_t - y_prev)
                            + config.ncf_cost * (a_t - a_prev))
        infra_maint[t] = ocf_maint_cost * y_t + ncf_maint_cost * a_t

    eta = config.annual_operating_days
    by_id = {k.id: k for k in cat.types}
    for s in cat.sequences:
        for t in range(1, n + 1):
            k = by_id[plan.assigned_type(s.sequence_id, t)]
            energy = consumption_kwh(network, s, k.consumption_loaded,
                                     k.consumption_empty)
            oper_maint[t] += eta * k.maintenance_cost_per_km * s.total_km
            oper_energy[t] += eta * k.energy_price_per_unit * energy

    initial_value = ledger.initial_value(config)
    tco = initial_value
    for t in range(1, n + 1):
        cash = (bus_purchase[t] + battery_purchase[t] - bus_sales[t]
                + infra_install[t] + infra_maint[t]
                + oper_maint[t] + oper_energy[t])
        tco += cash * config.discount(t)
    tco -= (final_bus + final_battery) * config.discount(end)

    return ItemizedTco(
        initial_fleet_value=initial_value,
        bus_purchase=bus_purchase,
        battery_purchase=battery_purchase,
        bus_sales=bus_sales,
        infra_install=infra_install,
        infra_maintenance=infra_maint,
        operating_maintenance=oper_maint,
        operating_energy=oper_energy,
        final_bus_salvage=final_bus,
        final_battery_salvage=final_battery,
        tco=tco,
    )


def validate_plan(plan: TransformationPlan, mip: SparseMip,
                  tol: float = 1e-6) -> list[str]:
    """Evaluate every model row and bound at the plan; list violations."""
    values = plan.values
    if values.size != mip.n_cols:
        raise DimensionMismatch(
            f"plan has {values.size} values, model has {mip.n_cols} columns")
    out = []
    for j in range(mip.n_cols):
        if values[j] < mip.col_lower[j] - tol or values[j] > mip.col_upper[j] + tol:
            out.append(f"bound:{mip.col_names[j]}")
        if mip.col_integer[j] and abs(values[j] - round(values[j])) > tol:
            out.append(f"integrality:{mip.col_names[j]}")
    for r in range(mip.n_rows):
        act = mip.row_activity(values, r)
        sense, rhs = mip.row_senses[r], mip.rhs[r]
        bad = ((sense == "L" and act > rhs + tol)
               or (sense == "G" and act < rhs - tol)
               or (sense == "E" and abs(act - rhs) > tol))
        if bad:
            out.append(f"row:{mip.row_names[r]}")
    return out


# --- plan.json ----------------------------------------------------------------

def plan_to_dict(plan: TransformationPlan) -> dict:
    cat = plan.catalog
    n = cat.periods
    periods = list(range(1, n + 1))
    payload = {
        "periods": n,
        "objective": plan.objective,
        "fleet": {k.id: [plan.stock(k.id, t) for t in periods]
                  for k in cat.types},
        "purchases": {k.id: [plan.purchases(k.id, t) for t in periods]
                      for k in cat.types},
        "ncf": [plan.ncf_count(t) for t in periods],
        "ocf": {sid: [int(plan.ocf_installed(sid, t)) for t in periods]
                for sid in cat.stations},
        "assignment": {str(s.sequence_id):
                       [plan.assigned_type(s.sequence_id, t) for t in periods]
                       for s in cat.sequences},
        "theta": {str(s.sequence_id):
                  [plan.values[cat.theta_idx[(s.sequence_id, t)]]
                   for t in periods]
                  for s in cat.sequences},
        "soc": {label: [[plan.values[cat.q_idx[(label, t)]],
                         plan.values[cat.w_idx[(label, t)]]]
                        for t in periods]
                for s in cat.sequences for label in s.trips},
    }
    if plan.items is not None:
        payload["items"] = plan.items.as_dict()
        payload["tco"] = plan.items.tco
    return payload


def write_plan_json(plan: TransformationPlan, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan_to_dict(plan), fh, indent=2)
        fh.write("\n")


def plan_from_values(cat: VariableCatalog, values: np.ndarray,
                     objective: float) -> TransformationPlan:
    return TransformationPlan(catalog=cat, values=np.asarray(values, dtype=float),
                              objective=objective)
