from .fields import ArcGrid, ArcState, InitialCondition, NetworkState
from .network_spec import ArcSpec, NetworkSpec, TransmissionMatrix
from .run_store import RunConfig, RunResult, SimConfig, Toggles
