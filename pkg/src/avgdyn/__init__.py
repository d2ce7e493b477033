"""Community detection with the averaging dynamics on volume-regular graphs."""

from .dynamics import Trajectory, decompose_run, run, run_bip, run_even, run_standard, verify_bounds
from .errors import DisconnectedGraphError, EmptyWindowError, InvariantViolation
from .evaluation import (build_signatures, estimate_epsilon_delta, evaluate, hamming_matrix,
                         mc_projection_floor, mc_sign_separation, threshold_cluster)
from .fileformat import read_graph, write_graph
from .generators import (BlockSpec, generate_bipartite, generate_homogeneous_blocks,
                         generate_regular_clustered, generate_scaled_blocks)
from .graph import (Partition, WeightedGraph, apply_transition, block_volume, is_ordinary_lumpable,
                    is_volume_regular, lumped_matrix, normalize_min_volume, volume)
from .spectral import (SpectralSummary, check_hypotheses, cheeger_floor, chi_basis, decompose,
                       is_clustered_volume_regular, stepwise_flags)

__version__ = "0.1.0"
