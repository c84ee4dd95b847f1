"""Self-replicating neural cellular automata: simulation, training and lineage analysis."""
__version__ = "0.1.0"

from .grid import Boundary, Grid, new_grid  # noqa: E402
from .rng import RngStream  # noqa: E402
from .rule import UpdateMode, UpdateNetwork, rollout, step  # noqa: E402

__all__ = ["Boundary", "Grid", "new_grid", "RngStream", "UpdateMode", "UpdateNetwork", "rollout", "step",
           "__version__"]
