"""Sparse support recovery via spike-and-slab belief propagation, with
OMP/Lasso baselines and a Monte-Carlo SER benchmark harness."""

from .baselines import LassoConfig, k_largest_support, lasso, omp
from .bench import (
    ExperimentConfig,
    PointResult,
    SerCurve,
    cross_point,
    curves_from_csv,
    run_point,
    run_sweep,
)
from .bp import (
    BeliefPropagationDecoder,
    BpConfig,
    BpDiagnostics,
    FactorGraph,
    MessageStore,
    build_graph,
    factor_update,
    init_messages,
    run,
    variable_update,
)
from .density import (
    ContinuousDensity,
    DegenerateMessageError,
    Grid,
    SpikedDensity,
    convolve,
    convolve_spiked,
    evaluate_shifted,
    gaussian_on_grid,
    normalize,
    product_spiked,
    reflect,
    spike_and_slab_prior,
    total_variation,
)
from .detector import (
    DetectionResult,
    detect_support,
    detect_support_k,
    hypothesis_test,
    hypothesis_test_integral,
)
from .model import (
    DenseMatrix,
    Measurement,
    SignalSpec,
    SparseBernoulliMatrix,
    SparseSignal,
    StateVector,
    gen_gaussian_matrix,
    gen_signal,
    gen_sparse_matrix,
    measure,
    noise_std_for_snr,
    ser,
    truncated_slab_second_moment,
)
from .oracle import OracleLimit, exact_map_support, exact_support_posterior

__all__ = [name for name in dir() if not name.startswith("_")]
