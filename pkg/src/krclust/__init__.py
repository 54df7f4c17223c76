"""Clustering with centroids aggregated from small protocentroid sets.

Instead of storing one vector per cluster, a model here keeps p ordered sets
of h_1, ..., h_p protocentroids; every combination of one vector per set,
aggregated elementwise (sum or product), is a cluster centroid.  That
represents up to prod(h_q) centroids with only sum(h_q) vectors.
"""

from ._validation import DataFormatError, InsufficientDataError
from .core import (
    Dataset,
    ProtoSets,
    aggregate,
    cell_counts,
    cell_to_flat,
    flat_to_cell,
    materialize_cell,
    materialize_centroids,
    neutral_element,
)
from .krkmeans import (
    FitSummary,
    KhatriRaoKMeans,
    assign,
    fit_khatri_rao,
    handle_empty,
    init_plus_plus,
    init_random,
    load_model,
    save_model,
    update_protosets,
)
from .baselines import (
    LloydKMeans,
    LloydSummary,
    NaiveKhatriRaoKMeans,
    decomposition_residual,
    lloyd_fit,
    naive_decompose,
)
from .metrics import ParamReport, acc, ari, inertia, nmi, param_report, purity
from .design import (
    HadamardFactorization,
    balanced_factor_pair,
    hadamard_reconstruct,
    optimal_num_sets,
    set_count_bounds,
)
from .datagen import (
    BlobSpec,
    KrStructSpec,
    gen_blobs,
    gen_kr_structured,
    read_csv,
    read_ppm,
    standardize,
    write_csv,
    write_ppm,
)
from .federated import CommLedger, FederatedConfig, partition, run_federated

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "ProtoSets",
    "aggregate",
    "neutral_element",
    "cell_to_flat",
    "flat_to_cell",
    "cell_counts",
    "materialize_centroids",
    "materialize_cell",
    "KhatriRaoKMeans",
    "FitSummary",
    "fit_khatri_rao",
    "init_random",
    "init_plus_plus",
    "assign",
    "update_protosets",
    "handle_empty",
    "save_model",
    "load_model",
    "LloydKMeans",
    "LloydSummary",
    "lloyd_fit",
    "NaiveKhatriRaoKMeans",
    "naive_decompose",
    "decomposition_residual",
    "inertia",
    "purity",
    "ari",
    "nmi",
    "acc",
    "param_report",
    "ParamReport",
    "balanced_factor_pair",
    "optimal_num_sets",
    "set_count_bounds",
    "HadamardFactorization",
    "hadamard_reconstruct",
    "BlobSpec",
    "KrStructSpec",
    "gen_blobs",
    "gen_kr_structured",
    "standardize",
    "read_csv",
    "write_csv",
    "read_ppm",
    "write_ppm",
    "FederatedConfig",
    "CommLedger",
    "partition",
    "run_federated",
    "InsufficientDataError",
    "DataFormatError",
    "__version__",
]
