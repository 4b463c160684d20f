"""gfflab: a desk-scale laboratory for the lattice Gaussian free field.

Covers lattice potential theory (Green functions, equilibrium measures,
capacities), exact GFF sampling with domain-Markov decompositions and
Cameron-Martin tilting, level-set connectivity and the disconnection
event, multi-scale box classification with porous-interface extraction,
solidification probes, and conditional Monte Carlo experiments.
"""

from .green import GreenTable, c_d
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["GreenTable", "c_d", "KERNEL_BACKEND", "__version__"]
