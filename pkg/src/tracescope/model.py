"""Domain types for recorded training traces.

Everything in here is immutable after construction and validates its own
invariants, raising :class:`InvariantViolation` with a message that names
the violated rule.  All other modules build on these types.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping, Union

import numpy as np

from .errors import InvariantViolation

ScalarValue = Union[int, float, str, bool]

# trial ids and run ids become path components of the run directory
_SAFE_ID = re.compile(r"^[A-Za-z0-9_.-]+$")

FORMAT_VERSION = 1


def _require(condition: bool, rule: str) -> None:
    if not condition:
        raise InvariantViolation(rule)


class Role(enum.Enum):
    """What a named tensor is to the network; drives GUI color-coding."""

    INPUT = "input"
    PARAMETER = "parameter"
    CALCULATED = "calculated"
    OUTPUT = "output"
    TARGET = "target"
    LOSS = "loss"


@dataclass(frozen=True, slots=True)
class Mode:
    """Forward values, or the gradient with respect to one specific loss."""

    kind: str
    loss_id: str | None = None

    def __post_init__(self) -> None:
        _require(self.kind in ("forward", "gradient"),
                 f"Mode.kind must be 'forward' or 'gradient', got {self.kind!r}")
        if self.kind == "forward":
            _require(self.loss_id is None, "forward Mode must not carry a loss_id")
        else:
            _require(bool(self.loss_id), "gradient Mode requires a nonempty loss_id")

    @classmethod
    def forward(cls) -> "Mode":
        return cls("forward")

    @classmethod
    def gradient(cls, loss_id: str) -> "Mode":
        return cls("gradient", loss_id)

    @property
    def is_gradient(self) -> bool:
        return self.kind == "gradient"

    def key(self) -> str:
        """Stable string form, usable as a dictionary key."""
        return self.kind if self.loss_id is None else f"gradient:{self.loss_id}"


FORWARD = Mode.forward()


def _float_eq(a: float, b: float) -> bool:
    # NaN-tolerant exact comparison, for round-trip checks
    return a == b or (math.isnan(a) and math.isnan(b))


@dataclass(frozen=True, slots=True, eq=False)
class TensorStats:
    """One-pass summary statistics of a tensor (or one slice of it).

    ``count`` counts every element; the moments (mean, std, ...) are taken
    over finite elements only, with NaN/Inf elements surfaced through the
    dedicated counters.  When no finite element exists the moments are NaN
    and ``l2_norm`` and ``frac_zero`` are 0.
    """

    count: int
    mean: float
    std: float
    abs_mean: float
    min: float
    max: float
    l2_norm: float
    frac_zero: float
    count_nan: int
    count_inf: int

    def __post_init__(self) -> None:
        _require(isinstance(self.count, int) and self.count >= 0,
                 "TensorStats.count must be a nonnegative integer")
        _require(isinstance(self.count_nan, int) and self.count_nan >= 0,
                 "TensorStats.count_nan must be a nonnegative integer")
        _require(isinstance(self.count_inf, int) and self.count_inf >= 0,
                 "TensorStats.count_inf must be a nonnegative integer")
        _require(self.count_nan + self.count_inf <= self.count,
                 "TensorStats.count_nan + count_inf must not exceed count")
        _require(0.0 <= self.frac_zero <= 1.0,
                 "TensorStats.frac_zero must lie in [0, 1]")
        if self.finite_count > 0:
            _require(self.std >= 0.0, "TensorStats.std must be >= 0")
            if self.count_nan == 0 and self.count_inf == 0 and self.count > 0:
                # tiny slack: the running mean may round marginally past the hull
                tol = 1e-9 * (1.0 + max(abs(self.min), abs(self.max)))
                _require(self.min - tol <= self.mean <= self.max + tol,
                         "TensorStats requires min <= mean <= max for finite data")

    @property
    def finite_count(self) -> int:
        return self.count - self.count_nan - self.count_inf

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TensorStats):
            return NotImplemented
        return (self.count == other.count
                and self.count_nan == other.count_nan
                and self.count_inf == other.count_inf
                and _float_eq(self.mean, other.mean)
                and _float_eq(self.std, other.std)
                and _float_eq(self.abs_mean, other.abs_mean)
                and _float_eq(self.min, other.min)
                and _float_eq(self.max, other.max)
                and _float_eq(self.l2_norm, other.l2_norm)
                and _float_eq(self.frac_zero, other.frac_zero))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class TensorRecord:
    """One named tensor at one recorded step in one mode.

    Tensors are normalized to 2-D (batch, features) at recording time;
    batch-less tensors (parameters, scalar losses) use ``batch_size == 1``
    and retain no samples.
    """

    node_id: str
    variant_key: str
    mode: Mode
    batch_size: int
    num_features: int
    aggregate: TensorStats
    per_neuron: tuple[TensorStats, ...]
    samples: np.ndarray = field(default_factory=lambda: np.empty((0, 0), np.float32))
    sample_indices: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        _require(bool(self.node_id), "TensorRecord.node_id must be nonempty")
        _require(bool(self.variant_key), "TensorRecord.variant_key must be nonempty")
        _require(self.batch_size >= 1, "TensorRecord.batch_size must be >= 1")
        _require(self.num_features >= 1, "TensorRecord.num_features must be >= 1")
        object.__setattr__(self, "per_neuron", tuple(self.per_neuron))
        _require(len(self.per_neuron) == self.num_features,
                 "TensorRecord.per_neuron must hold one TensorStats per feature")
        for stats in self.per_neuron:
            _require(stats.count == self.batch_size,
                     "each per_neuron TensorStats must count the full batch")
        _require(self.aggregate.count == self.batch_size * self.num_features,
                 "TensorRecord.aggregate must cover all batch x feature elements")

        samples = np.array(self.samples, dtype=np.float32, order="C", copy=True)
        if samples.size == 0:
            samples = samples.reshape(0, self.num_features)
        _require(samples.ndim == 2 and samples.shape[1] == self.num_features,
                 "TensorRecord.samples rows must have num_features columns")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

        indices = tuple(int(i) for i in self.sample_indices)
        object.__setattr__(self, "sample_indices", indices)
        _require(len(indices) == samples.shape[0],
                 "TensorRecord.sample_indices must match the number of sample rows")
        _require(len(indices) <= self.batch_size,
                 "TensorRecord cannot retain more samples than the batch holds")
        _require(all(0 <= i < self.batch_size for i in indices),
                 "TensorRecord.sample_indices must lie in [0, batch_size)")
        _require(all(a < b for a, b in zip(indices, indices[1:])),
                 "TensorRecord.sample_indices must be strictly increasing")

    def coordinate(self) -> tuple[str, str, str]:
        return (self.node_id, self.variant_key, self.mode.key())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TensorRecord):
            return NotImplemented
        return (self.node_id == other.node_id
                and self.variant_key == other.variant_key
                and self.mode == other.mode
                and self.batch_size == other.batch_size
                and self.num_features == other.num_features
                and self.aggregate == other.aggregate
                and self.per_neuron == other.per_neuron
                and self.sample_indices == other.sample_indices
                and self.samples.shape == other.samples.shape
                and self.samples.tobytes() == other.samples.tobytes())

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, slots=True)
class NodeSpec:
    """Declaration of one named tensor node in the dependency graph."""

    node_id: str
    role: Role
    variant_keys: tuple[str, ...] = ("value",)

    def __post_init__(self) -> None:
        _require(bool(self.node_id), "NodeSpec.node_id must be nonempty")
        _require(isinstance(self.role, Role), "NodeSpec.role must be a Role")
        object.__setattr__(self, "variant_keys", tuple(self.variant_keys))
        _require(len(self.variant_keys) >= 1, "NodeSpec.variant_keys must be nonempty")
        _require(all(bool(k) for k in self.variant_keys),
                 "NodeSpec.variant_keys entries must be nonempty")
        _require(len(set(self.variant_keys)) == len(self.variant_keys),
                 "NodeSpec.variant_keys must be unique within a node")


@dataclass(frozen=True)
class DependencyGraph:
    """Named-tensor nodes with contracted edges and an optional layering.

    The layer map may be empty (contraction output before layout); when
    present it must cover every node, give sources layer 0, and strictly
    increase along every edge.
    """

    nodes: tuple[NodeSpec, ...]
    edges: tuple[tuple[str, str], ...]
    layer: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges",
                           tuple((str(u), str(v)) for u, v in self.edges))
        ids = [n.node_id for n in self.nodes]
        _require(len(set(ids)) == len(ids),
                 "DependencyGraph node_ids must be unique")
        known = set(ids)
        for u, v in self.edges:
            _require(u in known and v in known,
                     f"DependencyGraph edge ({u!r}, {v!r}) references undeclared nodes")
            _require(u != v, "DependencyGraph must not contain self-edges")
        _require(len(set(self.edges)) == len(self.edges),
                 "DependencyGraph edges must be unique")
        self._check_acyclic(known)

        layer = {str(k): int(v) for k, v in dict(self.layer).items()}
        object.__setattr__(self, "layer", MappingProxyType(layer))
        if layer:
            _require(set(layer) == known,
                     "DependencyGraph.layer must cover exactly the declared nodes")
            _require(all(v >= 0 for v in layer.values()),
                     "DependencyGraph.layer values must be nonnegative")
            has_incoming = {v for _, v in self.edges}
            for u, v in self.edges:
                _require(layer[v] >= layer[u] + 1,
                         f"DependencyGraph.layer must increase along edge ({u!r}, {v!r})")
            for node_id in known - has_incoming:
                _require(layer[node_id] == 0,
                         f"DependencyGraph source {node_id!r} must sit on layer 0")

    def _check_acyclic(self, known: set[str]) -> None:
        indegree = {n: 0 for n in known}
        succs: dict[str, list[str]] = {n: [] for n in known}
        for u, v in self.edges:
            indegree[v] += 1
            succs[u].append(v)
        ready = [n for n, d in indegree.items() if d == 0]
        seen = 0
        while ready:
            node = ready.pop()
            seen += 1
            for nxt in succs[node]:
                indegree[nxt] -= 1
                if indegree[nxt] == 0:
                    ready.append(nxt)
        _require(seen == len(known), "DependencyGraph must be acyclic")

    def node(self, node_id: str) -> NodeSpec:
        for spec in self.nodes:
            if spec.node_id == node_id:
                return spec
        raise KeyError(node_id)

    def has_node(self, node_id: str) -> bool:
        return any(n.node_id == node_id for n in self.nodes)

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.node_id for n in self.nodes)


@dataclass(frozen=True)
class StepRecord:
    """Everything recorded at one training step of one trial."""

    step: int
    category: str
    metadata: Mapping[str, ScalarValue]
    records: tuple[TensorRecord, ...]
    trial_id: str

    def __post_init__(self) -> None:
        _require(isinstance(self.step, int) and self.step >= 0,
                 "StepRecord.step must be a nonnegative integer")
        _require(isinstance(self.category, str) and bool(self.category),
                 "StepRecord.category must be a nonempty string")
        _require(isinstance(self.trial_id, str) and bool(_SAFE_ID.match(self.trial_id)),
                 "StepRecord.trial_id must match [A-Za-z0-9_.-]+")
        meta = dict(self.metadata)
        for key, value in meta.items():
            _require(isinstance(key, str) and bool(key),
                     "StepRecord.metadata keys must be nonempty strings")
            _require(isinstance(value, (int, float, str, bool)),
                     f"StepRecord.metadata[{key!r}] must be a scalar or string")
        object.__setattr__(self, "metadata", MappingProxyType(meta))
        object.__setattr__(self, "records", tuple(self.records))
        coords = [r.coordinate() for r in self.records]
        _require(len(set(coords)) == len(coords),
                 "StepRecord records must have unique (node, variant, mode) triples")

    def find(self, node_id: str, variant_key: str, mode: Mode) -> TensorRecord | None:
        want = (node_id, variant_key, mode.key())
        for record in self.records:
            if record.coordinate() == want:
                return record
        return None


@dataclass(frozen=True)
class RunManifest:
    """Identity and closure information for one recorded run."""

    run_id: str
    trial_ids: tuple[str, ...]
    categories: tuple[str, ...]
    losses: tuple[str, ...]
    max_samples: int
    schedule_growth: Fraction
    format_version: int = FORMAT_VERSION

    def __post_init__(self) -> None:
        _require(isinstance(self.run_id, str) and bool(_SAFE_ID.match(self.run_id)),
                 "RunManifest.run_id must match [A-Za-z0-9_.-]+")
        object.__setattr__(self, "trial_ids", tuple(self.trial_ids))
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "losses", tuple(self.losses))
        for trial in self.trial_ids:
            _require(bool(_SAFE_ID.match(trial)),
                     "RunManifest.trial_ids entries must match [A-Za-z0-9_.-]+")
        for name, values in (("trial_ids", self.trial_ids),
                             ("categories", self.categories),
                             ("losses", self.losses)):
            _require(len(set(values)) == len(values),
                     f"RunManifest.{name} must be unique")
        _require(isinstance(self.max_samples, int) and self.max_samples >= 1,
                 "RunManifest.max_samples must be a positive integer")
        growth = self.schedule_growth
        _require(isinstance(growth, Fraction) and growth > 1,
                 "RunManifest.schedule_growth must be a Fraction > 1")
        _require(isinstance(self.format_version, int) and self.format_version >= 1,
                 "RunManifest.format_version must be a positive integer")


@dataclass(frozen=True, slots=True)
class View:
    """Projection of one TensorRecord: aggregate, per-neuron, or one sample."""

    kind: str
    sample_index: int | None = None

    def __post_init__(self) -> None:
        _require(self.kind in ("aggregate", "per_neuron", "sample"),
                 f"View.kind must be aggregate|per_neuron|sample, got {self.kind!r}")
        if self.kind == "sample":
            _require(self.sample_index is not None and self.sample_index >= 0,
                     "sample View requires a nonnegative sample_index")
        else:
            _require(self.sample_index is None,
                     f"{self.kind} View must not carry a sample_index")

    @classmethod
    def aggregate(cls) -> "View":
        return cls("aggregate")

    @classmethod
    def per_neuron(cls) -> "View":
        return cls("per_neuron")

    @classmethod
    def sample(cls, index: int) -> "View":
        return cls("sample", index)


@dataclass(frozen=True, slots=True)
class SelectorTuple:
    """The complete coordinate the GUI manipulates to address one view."""

    trial_id: str
    step: int
    node_id: str
    variant_key: str
    mode: Mode
    view: View
    category_filter: str | None = None
    metadata_filter: tuple[str, ScalarValue] | None = None

    def __post_init__(self) -> None:
        _require(self.step >= 0, "SelectorTuple.step must be nonnegative")
        _require(bool(self.trial_id), "SelectorTuple.trial_id must be nonempty")
        _require(bool(self.node_id), "SelectorTuple.node_id must be nonempty")
        _require(bool(self.variant_key), "SelectorTuple.variant_key must be nonempty")
        if self.metadata_filter is not None:
            key, value = self.metadata_filter
            _require(isinstance(key, str) and bool(key),
                     "SelectorTuple.metadata_filter key must be a nonempty string")
            _require(isinstance(value, (int, float, str, bool)),
                     "SelectorTuple.metadata_filter value must be a scalar or string")
            object.__setattr__(self, "metadata_filter", (key, value))


@dataclass(frozen=True)
class ModuleTreeNode:
    """Hierarchical parameter-count breakdown of the network's modules."""

    name: str
    own_param_count: int
    children: tuple["ModuleTreeNode", ...] = ()

    def __post_init__(self) -> None:
        _require(bool(self.name), "ModuleTreeNode.name must be nonempty")
        _require(isinstance(self.own_param_count, int) and self.own_param_count >= 0,
                 "ModuleTreeNode.own_param_count must be a nonnegative integer")
        object.__setattr__(self, "children", tuple(self.children))

    def total(self) -> int:
        return self.own_param_count + sum(c.total() for c in self.children)


@dataclass(frozen=True, slots=True)
class Note:
    """A timestamped free-text log line."""

    step: int
    text: str

    def __post_init__(self) -> None:
        _require(isinstance(self.step, int) and self.step >= 0,
                 "Note.step must be a nonnegative integer")
        _require(isinstance(self.text, str), "Note.text must be a string")


@dataclass(frozen=True, slots=True)
class ScalarPoint:
    """One point of a named scalar series (loss curves and the like)."""

    series_name: str
    step: int
    value: float

    def __post_init__(self) -> None:
        _require(bool(self.series_name), "ScalarPoint.series_name must be nonempty")
        _require(isinstance(self.step, int) and self.step >= 0,
                 "ScalarPoint.step must be a nonnegative integer")
        _require(isinstance(self.value, (int, float)) and not isinstance(self.value, bool),
                 "ScalarPoint.value must be a real number")
        object.__setattr__(self, "value", float(self.value))
