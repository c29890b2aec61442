"""Structure-preserving reduced-order models for KdV-type Hamiltonian PDEs."""
from .diagnostics import ErrorReport, TimingReport, benchmark, compare, eoc, relative_l2
from .integrator import StepFailure, TimeMesh, Trajectory, integrate, kahan_step, modified_hamiltonian
from .models import SkewGradientModel, assemble, exact_two_soliton, initial_condition
from .operators import Grid1D, Grid2D, d3_product, kron_2d, periodic_d1, periodic_d2
from .pod import Basis, SnapshotSet, build_basis, randomized_svd, ric_select
from .rom import ReducedModel, lift, project, reduce, rom_rhs_lifted, rom_rhs_tensorial

__version__ = "0.1.0"
