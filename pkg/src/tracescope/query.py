"""Selector-driven queries over stored runs.

A QueryService owns a data root full of run directories, keeps one in-memory
index per run, and answers every question the GUI asks: listings, record
views, z-score outlier traces, gradient balance comparisons, parameter
trees, notes, and scalar series.  All answers are reproducible from the
chunk files alone; caches only speed things up.
"""

from __future__ import annotations

import json
import math
import threading
from collections import OrderedDict
from pathlib import Path
import numpy as np

from . import graph as graphmod
from . import stats as statsmod
from .errors import (
    InsufficientDataError,
    NotFoundError,
    NotRecordedError,
    SampleNotRetainedError,
)
from .model import (
    DependencyGraph,
    Mode,
    ModuleTreeNode,
    ScalarValue,
    SelectorTuple,
    TensorRecord,
    TensorStats,
)
from .store import IndexedRecord, IndexedStep, RunReader, open_run


def stats_to_dict(stats: TensorStats) -> dict:
    return {
        "count": stats.count,
        "mean": stats.mean,
        "std": stats.std,
        "abs_mean": stats.abs_mean,
        "min": stats.min,
        "max": stats.max,
        "l2_norm": stats.l2_norm,
        "frac_zero": stats.frac_zero,
        "count_nan": stats.count_nan,
        "count_inf": stats.count_inf,
    }


def tree_to_dict(tree: ModuleTreeNode) -> dict:
    return {
        "name": tree.name,
        "own_param_count": tree.own_param_count,
        "total_param_count": tree.total(),
        "children": [tree_to_dict(c) for c in tree.children],
    }


class _RunIndex:
    """Immutable lookup structure built once per run load."""

    def __init__(self, reader: RunReader):
        self.steps_by_key: dict[tuple[str, int], IndexedStep] = {}
        self.records: dict[tuple[str, int, str, str, str], IndexedRecord] = {}
        self.trial_steps: dict[str, list[IndexedStep]] = {}
        for entry in reader.steps:
            self.steps_by_key[(entry.trial_id, entry.step)] = entry
            self.trial_steps.setdefault(entry.trial_id, []).append(entry)
            for record in entry.records:
                coord = (entry.trial_id, entry.step, record.node_id,
                         record.variant_key, record.mode.key())
                self.records[coord] = record
        for entries in self.trial_steps.values():
            entries.sort(key=lambda e: e.step)


class RunHandle:
    """One loaded run: reader, index, graph, and auxiliary documents."""

    def __init__(self, path: Path, header_cache_size: int = 64):
        self.path = path
        self.reader = open_run(path, header_cache_size=header_cache_size)
        self.index = _RunIndex(self.reader)
        raw_graph = self.reader.graph()
        self.graph: DependencyGraph | None = raw_graph
        if raw_graph is not None and not raw_graph.layer:
            self.graph = graphmod.assign_layers(raw_graph)
        self._lock = threading.Lock()

    @property
    def manifest(self):
        return self.reader.manifest

    def maybe_refresh(self) -> None:
        """Live runs pick up new chunks; the index swap is atomic for readers."""
        if self.reader.finalized:
            return
        with self._lock:
            self.reader.refresh()
            self.index = _RunIndex(self.reader)

    def node_order_override(self) -> list[str] | None:
        # optional manual display-ordering override dropped next to the run
        override = self.path / "node_order.json"
        if override.exists():
            with open(override) as handle:
                order = json.load(handle)
            if isinstance(order, list):
                return [str(x) for x in order]
        return None


class QueryService:
    """Read-only query engine over all runs under one data root."""

    def __init__(self, data_root: str | Path, header_cache_size: int = 64):
        self.data_root = Path(data_root)
        self.header_cache_size = header_cache_size
        self._handles: OrderedDict[str, RunHandle] = OrderedDict()
        self._lock = threading.Lock()

    # -- run discovery ------------------------------------------------------

    def run_ids(self) -> list[str]:
        if not self.data_root.exists():
            return []
        found = []
        for entry in sorted(self.data_root.iterdir()):
            if entry.is_dir() and (entry / "manifest.json").exists():
                found.append(entry.name)
        return found

    def _handle(self, run_id: str) -> RunHandle:
        with self._lock:
            handle = self._handles.get(run_id)
        if handle is None:
            run_path = self.data_root / run_id
            if not (run_path / "manifest.json").exists():
                raise NotFoundError(f"unknown run {run_id!r}")
            handle = RunHandle(run_path, header_cache_size=self.header_cache_size)
            with self._lock:
                self._handles[run_id] = handle
        handle.maybe_refresh()
        return handle

    # -- listings -----------------------------------------------------------

    def list_runs(self) -> list[dict]:
        out = []
        for run_id in self.run_ids():
            handle = self._handle(run_id)
            manifest = handle.manifest
            out.append({
                "run_id": run_id,
                "trials": list(manifest.trial_ids),
                "categories": list(manifest.categories),
                "losses": list(manifest.losses),
                "finalized": handle.reader.finalized,
                "recorded_steps": len(handle.reader.steps),
            })
        return out

    def get_manifest(self, run_id: str) -> dict:
        handle = self._handle(run_id)
        manifest = handle.manifest
        return {
            "format_version": manifest.format_version,
            "run_id": manifest.run_id,
            "trial_ids": list(manifest.trial_ids),
            "categories": list(manifest.categories),
            "losses": list(manifest.losses),
            "max_samples": manifest.max_samples,
            "schedule_growth": f"{manifest.schedule_growth.numerator}/"
                               f"{manifest.schedule_growth.denominator}",
            "finalized": handle.reader.finalized,
        }

    def get_graph(self, run_id: str, reduced: bool = False) -> dict:
        handle = self._handle(run_id)
        if handle.graph is None:
            raise NotFoundError(f"run {run_id!r} has no dependency graph")
        graph = handle.graph
        if reduced:
            graph = graphmod.transitive_reduction(graph)
        doc = {
            "format_version": handle.manifest.format_version,
            "nodes": [{"node_id": n.node_id, "role": n.role.value,
                       "variant_keys": list(n.variant_keys)}
                      for n in sorted(graph.nodes, key=lambda n: n.node_id)],
            "edges": sorted([list(e) for e in graph.edges]),
            "layers": {k: v for k, v in sorted(graph.layer.items())},
        }
        override = handle.node_order_override()
        if override is not None:
            doc["node_order"] = override
        return doc

    def list_steps(self, run_id: str, trial: str, category: str | None = None,
                   metadata: tuple[str, ScalarValue] | None = None) -> list[int]:
        handle = self._handle(run_id)
        if trial not in handle.manifest.trial_ids and trial not in handle.index.trial_steps:
            raise NotFoundError(f"unknown trial {trial!r} in run {run_id!r}")
        out = []
        for entry in handle.index.trial_steps.get(trial, []):
            if category is not None and entry.category != category:
                continue
            if metadata is not None:
                key, value = metadata
                if key not in entry.metadata or entry.metadata[key] != value:
                    continue
            out.append(entry.step)
        return out

    def selectors(self, run_id: str) -> dict:
        """Every coordinate value a UI selector can take, from data alone."""
        handle = self._handle(run_id)
        metadata_values: dict[str, list] = {}
        for entries in handle.index.trial_steps.values():
            for entry in entries:
                for key, value in entry.metadata.items():
                    bucket = metadata_values.setdefault(key, [])
                    if value not in bucket:
                        bucket.append(value)
        nodes = []
        if handle.graph is not None:
            nodes = [{"node_id": n.node_id, "role": n.role.value,
                      "variant_keys": list(n.variant_keys)}
                     for n in sorted(handle.graph.nodes, key=lambda n: n.node_id)]
        return {
            "trials": list(handle.manifest.trial_ids),
            "categories": list(handle.manifest.categories),
            "losses": list(handle.manifest.losses),
            "nodes": nodes,
            "metadata_keys": {k: sorted(v, key=str) for k, v in sorted(metadata_values.items())},
            "scalar_series": self.list_scalar_series(run_id),
            "max_samples": handle.manifest.max_samples,
        }

    # -- record views -------------------------------------------------------

    def _resolve_step(self, handle: RunHandle, trial: str, step: int) -> IndexedStep:
        if trial not in handle.manifest.trial_ids and trial not in handle.index.trial_steps:
            raise NotFoundError(f"unknown trial {trial!r}")
        entry = handle.index.steps_by_key.get((trial, step))
        if entry is None:
            raise NotFoundError(f"step {step} is not recorded for trial {trial!r}")
        return entry

    def _read(self, handle: RunHandle, indexed: IndexedRecord) -> TensorRecord:
        return handle.reader.read_record(indexed)

    def get_record(self, run_id: str, selector: SelectorTuple) -> dict:
        handle = self._handle(run_id)
        entry = self._resolve_step(handle, selector.trial_id, selector.step)
        if selector.category_filter is not None and entry.category != selector.category_filter:
            raise NotFoundError(
                f"step {selector.step} has category {entry.category!r}, "
                f"not {selector.category_filter!r}")
        if selector.metadata_filter is not None:
            key, value = selector.metadata_filter
            if key not in entry.metadata or entry.metadata[key] != value:
                raise NotFoundError(
                    f"step {selector.step} does not match metadata filter {key}={value!r}")

        if handle.graph is not None:
            if not handle.graph.has_node(selector.node_id):
                raise NotFoundError(f"unknown node {selector.node_id!r}")
            spec = handle.graph.node(selector.node_id)
            if selector.variant_key not in spec.variant_keys:
                raise NotFoundError(
                    f"node {selector.node_id!r} has no variant {selector.variant_key!r}")
        if selector.mode.is_gradient and selector.mode.loss_id not in handle.manifest.losses:
            raise NotFoundError(f"unknown loss {selector.mode.loss_id!r}")

        coord = (selector.trial_id, selector.step, selector.node_id,
                 selector.variant_key, selector.mode.key())
        indexed = handle.index.records.get(coord)
        if indexed is None:
            raise NotRecordedError(
                f"{selector.node_id}/{selector.variant_key} was not recorded in mode "
                f"{selector.mode.key()} at step {selector.step}")
        record = self._read(handle, indexed)

        payload = {
            "run": run_id,
            "trial": selector.trial_id,
            "step": selector.step,
            "category": entry.category,
            "metadata": dict(entry.metadata),
            "node": record.node_id,
            "variant": record.variant_key,
            "mode": record.mode.kind,
            "loss": record.mode.loss_id,
            "shape": {"batch": record.batch_size, "features": record.num_features},
            "retained_samples": list(record.sample_indices),
            "view": selector.view.kind,
        }
        if selector.view.kind == "aggregate":
            payload["stats"] = stats_to_dict(record.aggregate)
        elif selector.view.kind == "per_neuron":
            payload["stats"] = [stats_to_dict(s) for s in record.per_neuron]
        else:
            wanted = selector.view.sample_index
            if wanted not in record.sample_indices:
                raise SampleNotRetainedError(
                    f"sample {wanted} was not retained at step {selector.step}",
                    retained=record.sample_indices)
            row = record.samples[record.sample_indices.index(wanted)]
            z = statsmod.zscore(row, record.per_neuron)
            payload["sample_index"] = wanted
            payload["values"] = [float(x) for x in row]
            payload["zscores"] = [float(x) for x in z]
            payload["degenerate_neurons"] = [int(i) for i in np.flatnonzero(np.isinf(z))]
        return payload

    # -- usecase queries ----------------------------------------------------

    def outlier_trace(self, run_id: str, trial: str, step: int,
                      sample_index: int, z_threshold: float) -> list[dict]:
        """Nodes where one sample deviates from its batch, earliest layer first.

        Only batched forward records are considered; batch-less records
        (parameters, scalar losses) have no meaningful batch statistics.
        """
        handle = self._handle(run_id)
        entry = self._resolve_step(handle, trial, step)
        layers = handle.graph.layer if handle.graph is not None else {}

        retained_anywhere = False
        hits: dict[str, dict] = {}
        for indexed in entry.records:
            if indexed.mode.is_gradient:
                continue
            record = self._read(handle, indexed)
            if record.batch_size <= 1:
                continue
            if sample_index not in record.sample_indices:
                continue
            retained_anywhere = True
            row = record.samples[record.sample_indices.index(sample_index)]
            z = statsmod.zscore(row, record.per_neuron)
            magnitude = np.abs(z)
            if np.all(np.isnan(magnitude)):
                continue
            worst = int(np.nanargmax(magnitude))
            score = float(magnitude[worst])
            if math.isnan(score) or score < z_threshold:
                continue
            best = hits.get(indexed.node_id)
            if best is None or score > best["abs_z"]:
                hits[indexed.node_id] = {
                    "node": indexed.node_id,
                    "variant": indexed.variant_key,
                    "layer": layers.get(indexed.node_id, 0),
                    "neuron": worst,
                    "z": float(z[worst]),
                    "abs_z": score,
                }
        if not retained_anywhere:
            raise SampleNotRetainedError(
                f"sample {sample_index} was not retained by any record at step {step}")
        return sorted(hits.values(), key=lambda h: (h["layer"], h["node"]))

    def gradient_balance(self, run_id: str, trial: str, step: int, node: str,
                         loss: str | None = None) -> dict:
        """Average absolute gradient per successor of ``node``, plus the spread.

        Defaults to the combined-loss gradient when no loss is named; multi-
        variant successors merge their variants' statistics.
        """
        handle = self._handle(run_id)
        entry = self._resolve_step(handle, trial, step)
        if handle.graph is None:
            raise NotFoundError(f"run {run_id!r} has no dependency graph")
        _, succs = graphmod.neighbors(handle.graph, node)

        if loss is None:
            losses = handle.manifest.losses
            loss = "combined" if "combined" in losses else (
                losses[0] if len(losses) == 1 else "combined")
        if loss not in handle.manifest.losses:
            raise NotFoundError(f"unknown loss {loss!r}")
        mode_key = Mode.gradient(loss).key()

        rows = []
        for successor in succs:
            merged: TensorStats | None = None
            for indexed in entry.records:
                if indexed.node_id != successor or indexed.mode.key() != mode_key:
                    continue
                record = self._read(handle, indexed)
                merged = record.aggregate if merged is None else statsmod.merge(
                    merged, record.aggregate)
            if merged is not None:
                rows.append({"node": successor, "abs_mean": merged.abs_mean,
                             "count": merged.count})
        if len(rows) < 2:
            raise InsufficientDataError(
                f"node {node!r} needs >= 2 successors with {loss!r} gradient records "
                f"at step {step}; found {len(rows)}")
        values = [r["abs_mean"] for r in rows]
        low, high = min(values), max(values)
        ratio = math.inf if low == 0 else high / low
        return {"node": node, "loss": loss, "step": step, "successors": rows,
                "max_min_ratio": ratio}

    # -- auxiliary tabs -----------------------------------------------------

    def get_network_tree(self, run_id: str) -> dict:
        handle = self._handle(run_id)
        tree = handle.reader.network_tree()
        if tree is None:
            raise NotFoundError(f"run {run_id!r} has no module tree document")
        return tree_to_dict(tree)

    def get_notes(self, run_id: str, from_step: int | None = None,
                  to_step: int | None = None) -> list[dict]:
        handle = self._handle(run_id)
        notes = [{"step": n.step, "text": n.text} for n in handle.reader.notes()
                 if _in_range(n.step, from_step, to_step)]
        notes.sort(key=lambda n: n["step"])
        return notes

    def list_scalar_series(self, run_id: str) -> list[str]:
        handle = self._handle(run_id)
        return sorted({p.series_name for p in handle.reader.scalars()})

    def get_scalars(self, run_id: str, series: str, from_step: int | None = None,
                    to_step: int | None = None) -> list[dict]:
        handle = self._handle(run_id)
        points = [p for p in handle.reader.scalars() if p.series_name == series]
        if not points:
            raise NotFoundError(f"unknown scalar series {series!r}")
        out = [{"step": p.step, "value": p.value} for p in points
               if _in_range(p.step, from_step, to_step)]
        out.sort(key=lambda p: p["step"])
        return out


def _in_range(step: int, from_step: int | None, to_step: int | None) -> bool:
    if from_step is not None and step < from_step:
        return False
    if to_step is not None and step > to_step:
        return False
    return True
