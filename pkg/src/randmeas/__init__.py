"""randmeas: randomized-measurement simulation and estimation toolkit."""

__version__ = "0.1.0"

from .pauli import BasisString, PauliString
from .sim import DensityState, HamiltonianSpec, PureState
from .ensembles import EnsembleSpec, LocalUnitarySetting
from .dataset import MeasurementDataset, MeasurementRecord, acquire, read, write
from .shadows import EstimateWithError, ShadowSnapshot

__all__ = [
    "BasisString",
    "PauliString",
    "DensityState",
    "HamiltonianSpec",
    "PureState",
    "EnsembleSpec",
    "LocalUnitarySetting",
    "MeasurementDataset",
    "MeasurementRecord",
    "acquire",
    "read",
    "write",
    "EstimateWithError",
    "ShadowSnapshot",
    "__version__",
]
