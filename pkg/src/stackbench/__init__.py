"""stackbench: stacking ensembles, ML cascades, and a simulation benchmark."""

from .core import (
    Dataset,
    FitError,
    InvalidArgumentError,
    InvalidSpecError,
    LoadError,
    MetricReport,
    SeededRng,
    TrainTestSplit,
    UndefinedMetricError,
    accuracy,
    auc,
    confusion_rates,
    split,
    stable_hash,
    stratified_split,
)
from . import learners
from .learners import fit, predict
from .ensembles import (
    CascadeSpec,
    MetaWeights,
    PRESETS,
    SuperlearnerSpec,
    algo_from_doc,
    algo_to_doc,
    fit_any,
    fit_cascade,
    fit_superlearner,
    nnls_solve,
)
from .io import load_model, save_model
from . import simgen
from .simgen import SimCondition, bayes_accuracy, condition_catalog, generate
from . import bench
from .bench import BenchPlan, desk_plan, paper_plan, run, summarize, tune_dnn

__version__ = "1.0.0"
