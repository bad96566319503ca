"""Training-trace recording, compact storage, and interactive inspection."""

from .errors import (
    AlreadyFinalizedError,
    CyclicGraphError,
    DuplicateCategoryError,
    DuplicateStepError,
    EmptyTensorError,
    InsufficientDataError,
    InvariantViolation,
    NotFoundError,
    NotRecordedError,
    SampleNotRetainedError,
    ShapeError,
    TraceError,
    VersionError,
)
from .graph import RawGraph, assign_layers, contract, neighbors, order_layer, transitive_reduction
from .model import (
    FORMAT_VERSION,
    DependencyGraph,
    Mode,
    ModuleTreeNode,
    NodeSpec,
    Note,
    Role,
    RunManifest,
    ScalarPoint,
    SelectorTuple,
    StepRecord,
    TensorRecord,
    TensorStats,
    View,
)
from .query import QueryService
from .schedule import CategoryState, ScheduleRegistry, register_category, should_record
from .server import make_server
from .stats import StatsAccumulator, merge, per_neuron_stats, summarize, zscore
from .store import Diagnostic, RunReader, RunWriter, open_run, validate_run
from .toytrain import ToyModel, backward, backward_all, forward, train_and_record

__version__ = "0.1.0"
