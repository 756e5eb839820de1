"""Depreciation arithmetic and the initial-fleet purchase ledger.

Buses depreciate linearly from purchase cost to a uniform sale floor over
the economic lifetime.  The initial combustion fleet enters the books as
synthetic purchases at non-positive periods (period 1 minus the cohort's
age) of the full-lifetime combustion class, so the stock balance retires
each cohort exactly when it reaches the lifetime.  Cash flows tied to
those synthetic purchases are plan-independent constants.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ModelBuildError
from .network import BusKind, BusType, FleetCohort, ScenarioConfig


def residual_value(purchase_cost: float, salvage_value: float,
                   age_years: float, lifetime_years: float) -> float:
    """Linear depreciation between purchase cost and the sale floor."""
    return ((purchase_cost - salvage_value)
            * (1.0 - age_years / lifetime_years) + salvage_value)


def sale_value(bus_type: BusType, config: ScenarioConfig) -> float:
    """Revenue when a bus is sold at the end of its holding period."""
    return residual_value(bus_type.purchase_cost, config.salvage_value,
                          bus_type.holding_period_years,
                          config.bus_lifetime_years)


@dataclass(frozen=True)
class InitialFleet:
    """Synthetic purchase ledger for the combustion buses owned at start."""

    cohorts: tuple[FleetCohort, ...]
    type_id: str            # catalog class carrying the cohorts
    lifetime_years: int

    def purchase_period(self, cohort: FleetCohort) -> int:
        return 1 - cohort.age_years

    def sale_period(self, cohort: FleetCohort) -> int:
        return self.purchase_period(cohort) + self.lifetime_years

    def alive(self, cohort: FleetCohort, period_t: int) -> bool:
        return (self.purchase_period(cohort) <= period_t
                < self.sale_period(cohort))

    def count_alive(self, period_t: int) -> int:
        return sum(c.count for c in self.cohorts if self.alive(c, period_t))

    def purchased_at(self, period_t: int) -> int:
        return sum(c.count for c in self.cohorts
                   if self.purchase_period(c) == period_t)

    def sold_at(self, period_t: int) -> int:
        return sum(c.count for c in self.cohorts
                   if self.sale_period(c) == period_t)

    def initial_value(self, config: ScenarioConfig) -> float:
        """Book value of the fleet at the start of the horizon (undiscounted)."""
        return sum(residual_value(config.iceb_purchase_cost,
                                  config.salvage_value, c.age_years,
                                  self.lifetime_years) * c.count
                   for c in self.cohorts)

    def sale_revenue_at(self, period_t: int, config: ScenarioConfig) -> float:
        # A cohort sold within the horizon has reached the full lifetime,
        # so its per-bus revenue is exactly the sale floor.
        return self.sold_at(period_t) * config.salvage_value

    def final_salvage(self, horizon: int, config: ScenarioConfig) -> float:
        """Residual value of cohorts still owned at the end of the horizon."""
        total = 0.0
        for c in self.cohorts:
            if self.sale_period(c) >= horizon + 1:
                total += residual_value(
                    config.iceb_purchase_cost, config.salvage_value,
                    c.age_years + horizon, self.lifetime_years) * c.count
        return total


def initial_fleet_ledger(config: ScenarioConfig,
                         catalog: list[BusType]) -> InitialFleet:
    type_id = f"iceb_h{config.bus_lifetime_years}"
    if config.initial_fleet:
        ids = {k.id for k in catalog if k.kind is BusKind.ICEB}
        if type_id not in ids:
            raise ModelBuildError(
                f"initial fleet needs combustion class {type_id!r} in the "
                f"catalog (holding period = bus lifetime)")
    return InitialFleet(cohorts=config.initial_fleet, type_id=type_id,
                        lifetime_years=config.bus_lifetime_years)
