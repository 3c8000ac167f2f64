"""Large-margin classification between quasi-SVDD hyperdisks (QLMC-HD)."""

__version__ = "0.1.0"

from .classifier import (  # noqa: E402
    LMCHD,
    OAO,
    OAR,
    QLMCHD,
    BinaryModel,
    HyperParams,
    MulticlassModel,
    TrainingError,
    fit_binary,
    fit_lmchd,
    fit_multiclass,
    load_model,
    save_model,
)
from .data import Dataset, DataError, load_dataset  # noqa: E402
from .evaluation import ExperimentConfig, Metrics, repeated_holdout_eval  # noqa: E402
from .hyperdisk import Hyperdisk, OverlapError, build_hyperdisk, closest_pair  # noqa: E402
from .kernels import KernelFamily, KernelSpec, gram, gram_cross, kernel_eval  # noqa: E402
from .qsvdd import QsvddModel, fit_qsvdd, fit_svdd  # noqa: E402
