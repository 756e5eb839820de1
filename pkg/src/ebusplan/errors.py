"""Exception types raised across the planning toolkit.

Every error carries enough context in its message to name the offending
record or argument, so callers can surface it without re-deriving state.
"""


class EbusPlanError(Exception):
    """Base class for all toolkit errors."""


# --- network data loading -------------------------------------------------

class NetworkDataError(EbusPlanError):
    """Base class for input-file validation errors."""


class MissingDepot(NetworkDataError):
    pass


class DuplicateTripLabel(NetworkDataError):
    def __init__(self, label: str):
        super().__init__(f"duplicate trip label {label!r}")
        self.label = label


class IncompleteDeadheadMatrix(NetworkDataError):
    def __init__(self, from_node: str, to_node: str):
        super().__init__(f"no deadhead entry for ({from_node!r}, {to_node!r})")
        self.pair = (from_node, to_node)


class NegativeValue(NetworkDataError):
    def __init__(self, record: str, field: str, value):
        super().__init__(f"negative {field}={value} in record {record!r}")
        self.record = record
        self.field = field
        self.value = value


class PowerOutOfRange(EbusPlanError):
    def __init__(self, power_kw: float, lo: float, hi: float):
        super().__init__(
            f"power {power_kw} kW outside anchor range [{lo}, {hi}] kW")
        self.power_kw = power_kw


# --- energy simulation ----------------------------------------------------

class NotABev(EbusPlanError):
    """Raised when an SOC simulation is asked about a combustion bus."""


class NotAnNcb(EbusPlanError):
    """Raised when the night-charging capacity test gets a non-NCB type."""


# --- model building and pricing -------------------------------------------

class ModelBuildError(EbusPlanError):
    pass


class EmptySchedule(ModelBuildError):
    pass


class NoPeriods(ModelBuildError):
    pass


class NoPurchasableTypes(ModelBuildError):
    pass


class DimensionMismatch(EbusPlanError):
    pass


class InventoryMismatch(EbusPlanError):
    """Plan holds more combustion buses than the cohorts can explain."""


# --- solving ---------------------------------------------------------------

class NoFeasibleSolutionFound(EbusPlanError):
    """Branch-and-bound hit its limits without any incumbent."""


class MpsFormatError(EbusPlanError):
    pass
