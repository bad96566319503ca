"""Record named PyTorch tensors and per-loss gradients into a run directory.

Usage pattern, once per training step::

    recorder.start_step(category, metadata)
    ... forward pass ...
    recorder.register_tensor(node_id, role, tensor)     # any number of times
    recorder.register_loss(loss_id, loss_tensor)        # one per loss
    recorder.end_step()                                 # records if scheduled
    ... optimizer step ...
    recorder.finalize()                                 # once, at the end

On steps the schedule skips, ``register_tensor`` drops the reference
immediately; the whole step costs one scheduler check.  On recorded steps,
statistics are computed host-side, up to ``max_samples`` batch rows are
retained, and one backward pass per registered loss captures that loss's
gradient on every registered tensor it touches (gradients it does not
produce are simply not recorded).  With two or more losses, their sum is
recorded under the pseudo-loss id "combined".

The dependency graph is extracted from the autograd graph: unnamed vertices
are the framework's internal ops, named vertices are the registrations.
Tensors outside the autograd graph (inputs that do not require grad) are
still recorded but appear without edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from tracescope import (
    Mode,
    ModuleTreeNode,
    NodeSpec,
    Note,
    RawGraph,
    Role,
    ScalarPoint,
    ScheduleRegistry,
    StepRecord,
    TensorRecord,
    assign_layers,
    contract,
)
from tracescope.errors import TraceError
from tracescope.stats import per_neuron_stats, summarize
from tracescope.store import RunWriter


class UsageError(TraceError):
    """The recorder's step protocol was violated."""


_ROLES = {role.value: role for role in Role}


def _as_role(role: str | Role) -> Role:
    if isinstance(role, Role):
        return role
    try:
        return _ROLES[role]
    except KeyError:
        raise UsageError(f"unknown role {role!r}; one of {sorted(_ROLES)}")


def _to_2d(tensor: torch.Tensor, batched: bool) -> np.ndarray:
    array = tensor.detach().to("cpu", torch.float64).numpy()
    if not batched or array.ndim == 0:
        return array.reshape(1, -1) if array.size else array.reshape(1, 1)
    if array.ndim == 1:
        return array.reshape(1, -1)
    return array.reshape(array.shape[0], -1)


def _build_record(node_id: str, variant_key: str, mode: Mode,
                  values: np.ndarray, max_samples: int) -> TensorRecord:
    b, d = values.shape
    if b > 1:
        keep = min(b, max_samples)
        samples = values[:keep].astype(np.float32)
        indices = tuple(range(keep))
    else:
        samples = np.empty((0, d), np.float32)
        indices = ()
    return TensorRecord(node_id=node_id, variant_key=variant_key, mode=mode,
                        batch_size=b, num_features=d,
                        aggregate=summarize(values),
                        per_neuron=per_neuron_stats(values),
                        samples=samples, sample_indices=indices)


@dataclass
class _Registered:
    node_id: str
    variant_key: str
    role: Role
    tensor: torch.Tensor
    batched: bool


class TraceRecorder:
    """One writer handle per training process; steps are strictly sequential."""

    def __init__(self, out_path: str | Path, run_id: str, *,
                 trial_id: str = "trial_0",
                 growth: float | str = "1.5",
                 max_samples: int = 8,
                 losses: tuple[str, ...] = ()):
        self._writer = RunWriter(out_path, run_id, losses=losses,
                                 max_samples=max_samples, schedule_growth=growth)
        self._trial_id = trial_id
        self._max_samples = max_samples
        self._registry = ScheduleRegistry(growth)
        self._step = -1
        self._in_step = False
        self._recording = False
        self._category = ""
        self._metadata: dict = {}
        self._tensors: list[_Registered] = []
        self._losses: list[tuple[str, torch.Tensor]] = []
        self._specs: dict[str, NodeSpec] = {}
        self._edges: set[tuple[str, str]] = set()
        self._finalized = False

    # -- step protocol -------------------------------------------------------

    def start_step(self, category: str, metadata: dict | None = None,
                   step: int | None = None) -> bool:
        """Open a step; returns whether this one will be recorded."""
        if self._finalized:
            raise UsageError("recorder is finalized")
        if self._in_step:
            raise UsageError("start_step called twice without end_step")
        self._step = self._step + 1 if step is None else step
        self._in_step = True
        self._recording = self._registry.observe(category)
        self._category = category
        self._metadata = dict(metadata or {})
        self._tensors = []
        self._losses = []
        return self._recording

    def register_tensor(self, node_id: str, role: str | Role,
                        tensor: torch.Tensor, variant_key: str = "value",
                        batched: bool | None = None) -> None:
        if not self._in_step:
            raise UsageError("register_tensor outside start_step/end_step")
        if not self._recording:
            return
        resolved = _as_role(role)
        if batched is None:
            batched = resolved is not Role.PARAMETER and tensor.dim() >= 2
        self._tensors.append(_Registered(node_id=node_id, variant_key=variant_key,
                                         role=resolved, tensor=tensor,
                                         batched=batched))

    def register_loss(self, loss_id: str, tensor: torch.Tensor) -> None:
        if not self._in_step:
            raise UsageError("register_loss outside start_step/end_step")
        if not self._recording:
            return
        self._losses.append((loss_id, tensor))

    def add_note(self, text: str) -> None:
        self._writer.add_note(Note(max(self._step, 0), text))

    def add_scalar(self, series: str, value: float) -> None:
        self._writer.add_scalar(ScalarPoint(series, max(self._step, 0), float(value)))

    def end_step(self) -> None:
        if not self._in_step:
            raise UsageError("end_step without start_step")
        self._in_step = False
        if not self._recording:
            return
        self._merge_node_specs()
        self._merge_graph_edges()
        records = self._forward_records()
        records.extend(self._gradient_records())
        self._writer.write_step(StepRecord(step=self._step, category=self._category,
                                           metadata=self._metadata,
                                           records=tuple(records),
                                           trial_id=self._trial_id))
        self._tensors = []
        self._losses = []

    def register_module_tree(self, module: torch.nn.Module,
                             name: str = "model") -> None:
        """Capture the module hierarchy with per-module parameter counts."""
        self._writer.set_network_tree(_module_tree(module, name))

    def finalize(self) -> Path:
        if self._finalized:
            raise UsageError("recorder already finalized")
        self._finalized = True
        if self._specs:
            graph = contract(RawGraph(vertices=frozenset(self._raw_vertices),
                                      edges=tuple(self._raw_edges),
                                      named=self._raw_named),
                             self._specs)
            self._writer.set_graph(assign_layers(graph))
        return self._writer.finalize().parent

    # -- recording internals ---------------------------------------------------

    def _merge_node_specs(self) -> None:
        seen: dict[str, list[str]] = {}
        for reg in self._tensors:
            seen.setdefault(reg.node_id, [])
            if reg.variant_key not in seen[reg.node_id]:
                seen[reg.node_id].append(reg.variant_key)
        for loss_id, _ in self._losses:
            seen.setdefault(f"loss_{loss_id}", ["value"])
        for node_id, variants in seen.items():
            role = next((r.role for r in self._tensors if r.node_id == node_id),
                        Role.LOSS)
            existing = self._specs.get(node_id)
            if existing is None:
                self._specs[node_id] = NodeSpec(node_id, role, tuple(variants))
            else:
                merged = list(existing.variant_keys)
                merged.extend(v for v in variants if v not in merged)
                self._specs[node_id] = NodeSpec(node_id, existing.role,
                                                tuple(merged))

    def _named_autograd_nodes(self) -> dict[object, str]:
        """Map autograd graph nodes to registered node ids."""
        named: dict[object, str] = {}
        leaves: list[tuple[torch.Tensor, str]] = []
        for reg in self._tensors:
            if reg.tensor.grad_fn is not None:
                named[reg.tensor.grad_fn] = reg.node_id
            elif reg.tensor.requires_grad:
                leaves.append((reg.tensor, reg.node_id))
        for loss_id, loss in self._losses:
            if loss.grad_fn is not None:
                named[loss.grad_fn] = f"loss_{loss_id}"
        self._leaf_names = leaves
        return named

    def _merge_graph_edges(self) -> None:
        """Walk the autograd graph of this step and fold it into the run graph.

        Keeps a union across recorded steps; vertex names are opaque per-step,
        so each step contributes its own op vertices while named nodes unify.
        """
        named_fns = self._named_autograd_nodes()
        prefix = f"s{self._step}_"
        vertex_of: dict[int, str] = {}
        raw_named: dict[str, str] = {}
        vertices: set[str] = set()
        edges: set[tuple[str, str]] = set()
        counter = 0

        def vertex(fn) -> str:
            nonlocal counter
            key = id(fn)
            if key not in vertex_of:
                if fn in named_fns:
                    name = f"{prefix}named{counter}"
                    raw_named[name] = named_fns[fn]
                else:
                    leaf = getattr(fn, "variable", None)
                    leaf_name = None
                    if leaf is not None:
                        for tensor, node_id in self._leaf_names:
                            if tensor is leaf:
                                leaf_name = node_id
                                break
                    name = f"{prefix}op{counter}"
                    if leaf_name is not None:
                        raw_named[name] = leaf_name
                counter += 1
                vertex_of[key] = name
                vertices.add(name)
            return vertex_of[key]

        roots = [loss.grad_fn for _, loss in self._losses if loss.grad_fn is not None]
        roots += [reg.tensor.grad_fn for reg in self._tensors
                  if reg.tensor.grad_fn is not None]
        stack = list({id(r): r for r in roots}.values())
        visited: set[int] = set()
        while stack:
            fn = stack.pop()
            if id(fn) in visited:
                continue
            visited.add(id(fn))
            child = vertex(fn)
            for parent_fn, _ in getattr(fn, "next_functions", ()):
                if parent_fn is None:
                    continue
                parent = vertex(parent_fn)
                edges.add((parent, child))
                if id(parent_fn) not in visited:
                    stack.append(parent_fn)

        if not hasattr(self, "_raw_vertices"):
            self._raw_vertices: set[str] = set()
            self._raw_edges: set[tuple[str, str]] = set()
            self._raw_named: dict[str, str] = {}
        self._raw_vertices |= vertices
        self._raw_edges |= edges
        self._raw_named.update(raw_named)

    def _forward_records(self) -> list[TensorRecord]:
        records = []
        seen: set[tuple[str, str]] = set()
        for reg in self._tensors:
            key = (reg.node_id, reg.variant_key)
            if key in seen:
                raise UsageError(f"{reg.node_id}/{reg.variant_key} registered twice "
                                 f"in one step")
            seen.add(key)
            records.append(_build_record(reg.node_id, reg.variant_key,
                                         Mode.forward(), _to_2d(reg.tensor, reg.batched),
                                         self._max_samples))
        for loss_id, loss in self._losses:
            records.append(_build_record(f"loss_{loss_id}", "value", Mode.forward(),
                                         _to_2d(loss, batched=False),
                                         self._max_samples))
        return records

    def _gradient_records(self) -> list[TensorRecord]:
        records: list[TensorRecord] = []
        grad_targets = [reg for reg in self._tensors if reg.tensor.requires_grad]
        if not grad_targets or not self._losses:
            return records
        passes: list[tuple[str, torch.Tensor]] = list(self._losses)
        if len(self._losses) >= 2:
            passes.append(("combined", sum(loss for _, loss in self._losses)))
        for loss_id, loss in passes:
            if loss.grad_fn is None or not torch.isfinite(loss).all():
                # a detached or non-finite loss yields no usable gradients;
                # its forward record already carries the non-finite counters
                continue
            grads = torch.autograd.grad(
                loss, [reg.tensor for reg in grad_targets],
                retain_graph=True, allow_unused=True)
            mode = Mode.gradient(loss_id)
            for reg, grad in zip(grad_targets, grads):
                if grad is None:
                    continue  # this loss does not touch the tensor: not recorded
                records.append(_build_record(reg.node_id, reg.variant_key, mode,
                                             _to_2d(grad, reg.batched),
                                             self._max_samples))
        return records


def _module_tree(module: torch.nn.Module, name: str) -> ModuleTreeNode:
    own = sum(p.numel() for p in module.parameters(recurse=False))
    children = tuple(_module_tree(child, child_name)
                     for child_name, child in module.named_children())
    return ModuleTreeNode(name=name, own_param_count=own, children=children)
