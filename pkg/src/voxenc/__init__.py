"""Voxel-wise encoding models of speech-evoked brain responses.

Modules cover the full analysis chain: binary matrix exchange and
dataset manifests (`dataio`), temporal preparation (`timeseries`),
hand-engineered acoustic/linguistic feature spaces (`acoustic`),
chunked-CV ridge and banded ridge regression (`ridge`), evaluation and
variance partitioning (`varpart`), layer-selectivity PCA (`layersel`),
representation probes (`probing`), and a synthetic-data oracle
(`simulate`).  `cli` ties the stages into runnable commands.
"""

__version__ = "0.1.0"

from .dataio import (  # noqa: F401
    AlignmentTable,
    DatasetManifest,
    FeatureMatrix,
    ResponseMatrix,
    load_manifest,
    read_alignment,
    read_matrix,
    write_matrix,
)
from .timeseries import (  # noqa: F401
    DelayConfig,
    LanczosConfig,
    fir_delays,
    lanczos_resample,
    preprocess_response,
    savgol_detrend,
    trim_edges,
    zscore_columns,
)
from .ridge import (  # noqa: F401
    BandedConfig,
    CvPlan,
    RidgeFit,
    banded_ridge_fit,
    fit_ridge_cv,
    predict,
    sample_chunks,
    svd_ridge_path,
)
from .varpart import (  # noqa: F401
    PartitionResult,
    VoxelScores,
    evaluate,
    partition_two,
    run_varpart,
    signed_square,
    signed_sqrt,
)
from .layersel import (  # noqa: F401
    build_perf_matrix,
    correlate_maps,
    double_center,
    pca_svd,
)
