"""On-disk run directories: compact binary step chunks plus text documents.

Directory layout::

    <run>/
      manifest.json     identity, declared losses, schedule, closure lists
      graph.json        contracted dependency graph (optional until set)
      network.json      module/parameter tree (optional)
      notes.jsonl       one note per line, append-only
      scalars.jsonl     one scalar point per line, append-only
      index.json        written by finalize(); offsets for O(1) record lookup
      chunks/           one binary chunk file per recorded (trial, step)

Chunk byte layout (all little-endian), which together with the directory
layout is the public interchange contract:

    magic            4 bytes  b"CGT1"
    format_version   u32
    trial_id         u32 length + UTF-8 bytes
    category         u32 length + UTF-8 bytes
    step             u64
    metadata_count   u32
      per entry:     key (u32 len + UTF-8), tag u8, value
                     tag 0 = string (u32 len + UTF-8), 1 = f64, 2 = i64,
                     tag 3 = bool (u8)
    string_count     u32      per-chunk string table; chunks relocate freely
      per string:    u32 length + UTF-8 bytes
    record_count     u32
      per record:
        node_ref     u32      index into the string table
        variant_ref  u32
        mode_tag     u8       0 = forward, 1 = gradient
        loss_ref     u32      present only when mode_tag == 1
        batch B      u32
        features D   u32
        aggregate    stats block (80 bytes)
        per_neuron   D consecutive stats blocks
        sample_count u8
        sample_idx   sample_count x u32
        samples      sample_count x D x f32, row-major
    crc32            u32      zlib.crc32 of every preceding byte

Stats block (80 bytes): count u64, then mean, std, abs_mean, min, max,
l2_norm, frac_zero as f64, then count_nan u64, count_inf u64.

Statistics are stored as f64 and sample payloads as f32; both round-trip
bit-exactly.  Chunk sizes without samples are constant in the batch size.
"""

from __future__ import annotations

import json
import math
import os
import struct
import zlib
from collections import OrderedDict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .errors import (
    AlreadyFinalizedError,
    DuplicateStepError,
    InvariantViolation,
    NotFoundError,
    TraceError,
    VersionError,
)
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
    StepRecord,
    TensorRecord,
    TensorStats,
)
from .schedule import growth_fraction

MAGIC = b"CGT1"
MAX_SAMPLES_LIMIT = 255  # sample_count is a u8

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")
_I64 = struct.Struct("<q")
_STATS = struct.Struct("<Q7dQQ")

_META_STR, _META_F64, _META_I64, _META_BOOL = 0, 1, 2, 3


class ChunkError(TraceError):
    """A chunk file is corrupt, truncated, or structurally invalid."""


# ---------------------------------------------------------------------------
# low-level encoding helpers


def _lp_utf8(text: str) -> bytes:
    raw = text.encode("utf-8")
    return _U32.pack(len(raw)) + raw


class _Cursor:
    """Sequential reader over a chunk buffer with bounds checking."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ChunkError("chunk truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def f64(self) -> float:
        return _F64.unpack(self.take(8))[0]

    def i64(self) -> int:
        return _I64.unpack(self.take(8))[0]

    def text(self) -> str:
        n = self.u32()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ChunkError(f"invalid UTF-8 in chunk string: {exc}") from exc


def _pack_stats(stats: TensorStats) -> bytes:
    return _STATS.pack(stats.count, stats.mean, stats.std, stats.abs_mean,
                       stats.min, stats.max, stats.l2_norm, stats.frac_zero,
                       stats.count_nan, stats.count_inf)


def _unpack_stats(raw: bytes) -> TensorStats:
    (count, mean, std, abs_mean, lo, hi, l2, frac,
     count_nan, count_inf) = _STATS.unpack(raw)
    return TensorStats(count=count, mean=mean, std=std, abs_mean=abs_mean,
                       min=lo, max=hi, l2_norm=l2, frac_zero=frac,
                       count_nan=count_nan, count_inf=count_inf)


def _pack_metadata(metadata: Mapping[str, object]) -> bytes:
    parts = [_U32.pack(len(metadata))]
    for key, value in metadata.items():
        parts.append(_lp_utf8(key))
        if isinstance(value, bool):
            parts.append(bytes([_META_BOOL, 1 if value else 0]))
        elif isinstance(value, int):
            parts.append(bytes([_META_I64]) + _I64.pack(value))
        elif isinstance(value, float):
            parts.append(bytes([_META_F64]) + _F64.pack(value))
        else:
            parts.append(bytes([_META_STR]) + _lp_utf8(str(value)))
    return b"".join(parts)


def _read_metadata(cur: _Cursor) -> dict[str, object]:
    out: dict[str, object] = {}
    for _ in range(cur.u32()):
        key = cur.text()
        tag = cur.u8()
        if tag == _META_STR:
            out[key] = cur.text()
        elif tag == _META_F64:
            out[key] = cur.f64()
        elif tag == _META_I64:
            out[key] = cur.i64()
        elif tag == _META_BOOL:
            out[key] = bool(cur.u8())
        else:
            raise ChunkError(f"unknown metadata tag {tag}")
    return out


# ---------------------------------------------------------------------------
# chunk pack / parse


@dataclass(frozen=True)
class RecordRef:
    """Location of one tensor record inside a chunk file."""

    node_id: str
    variant_key: str
    mode: Mode
    offset: int
    length: int


@dataclass(frozen=True)
class ChunkRef:
    """Location and identity of one written step chunk."""

    path: Path
    trial_id: str
    category: str
    step: int
    metadata: Mapping[str, object]
    records: tuple[RecordRef, ...]


def pack_chunk(step_record: StepRecord, format_version: int = FORMAT_VERSION,
               ) -> tuple[bytes, tuple[RecordRef, ...]]:
    """Serialize a StepRecord; also returns per-record offsets for indexing."""
    strings: list[str] = []
    refs: dict[str, int] = {}

    def ref(text: str) -> int:
        if text not in refs:
            refs[text] = len(strings)
            strings.append(text)
        return refs[text]

    body: list[bytes] = []
    record_blobs: list[tuple[TensorRecord, bytes]] = []
    for record in step_record.records:
        parts = [_U32.pack(ref(record.node_id)), _U32.pack(ref(record.variant_key))]
        if record.mode.is_gradient:
            parts.append(bytes([1]))
            parts.append(_U32.pack(ref(record.mode.loss_id)))
        else:
            parts.append(bytes([0]))
        parts.append(_U32.pack(record.batch_size))
        parts.append(_U32.pack(record.num_features))
        parts.append(_pack_stats(record.aggregate))
        parts.extend(_pack_stats(s) for s in record.per_neuron)
        parts.append(bytes([len(record.sample_indices)]))
        if record.sample_indices:
            parts.append(np.asarray(record.sample_indices, dtype="<u4").tobytes())
            parts.append(np.ascontiguousarray(record.samples, dtype="<f4").tobytes())
        record_blobs.append((record, b"".join(parts)))

    header = [
        MAGIC,
        _U32.pack(format_version),
        _lp_utf8(step_record.trial_id),
        _lp_utf8(step_record.category),
        _U64.pack(step_record.step),
        _pack_metadata(step_record.metadata),
        _U32.pack(len(strings)),
    ]
    header.extend(_lp_utf8(s) for s in strings)
    header.append(_U32.pack(len(record_blobs)))
    body = [b"".join(header)]

    offset = len(body[0])
    record_refs = []
    for record, blob in record_blobs:
        record_refs.append(RecordRef(node_id=record.node_id,
                                     variant_key=record.variant_key,
                                     mode=record.mode,
                                     offset=offset, length=len(blob)))
        body.append(blob)
        offset += len(blob)

    payload = b"".join(body)
    return payload + _U32.pack(zlib.crc32(payload)), tuple(record_refs)


@dataclass(frozen=True)
class ChunkHeader:
    trial_id: str
    category: str
    step: int
    metadata: Mapping[str, object]
    strings: tuple[str, ...]
    record_count: int
    records_start: int


def _parse_header(cur: _Cursor) -> ChunkHeader:
    if cur.take(4) != MAGIC:
        raise ChunkError("bad magic; not a trace chunk")
    version = cur.u32()
    if version != FORMAT_VERSION:
        raise VersionError(f"chunk format_version {version} is not supported")
    trial = cur.text()
    category = cur.text()
    step = cur.u64()
    metadata = _read_metadata(cur)
    strings = tuple(cur.text() for _ in range(cur.u32()))
    record_count = cur.u32()
    return ChunkHeader(trial_id=trial, category=category, step=step,
                       metadata=metadata, strings=strings,
                       record_count=record_count, records_start=cur.pos)


def _check_crc(data: bytes) -> None:
    if len(data) < 4:
        raise ChunkError("chunk truncated")
    stored = _U32.unpack(data[-4:])[0]
    if zlib.crc32(data[:-4]) != stored:
        raise ChunkError("chunk checksum mismatch")


def _string_at(strings: tuple[str, ...], index: int) -> str:
    if index >= len(strings):
        raise ChunkError(f"string table reference {index} out of range")
    return strings[index]


def _parse_record(cur: _Cursor, strings: tuple[str, ...]) -> TensorRecord:
    node_id = _string_at(strings, cur.u32())
    variant = _string_at(strings, cur.u32())
    tag = cur.u8()
    if tag == 0:
        mode = Mode.forward()
    elif tag == 1:
        mode = Mode.gradient(_string_at(strings, cur.u32()))
    else:
        raise ChunkError(f"unknown mode tag {tag}")
    batch = cur.u32()
    features = cur.u32()
    aggregate = _unpack_stats(cur.take(_STATS.size))
    blocks = cur.take(_STATS.size * features)
    per_neuron = tuple(
        TensorStats(count=vals[0], mean=vals[1], std=vals[2], abs_mean=vals[3],
                    min=vals[4], max=vals[5], l2_norm=vals[6], frac_zero=vals[7],
                    count_nan=vals[8], count_inf=vals[9])
        for vals in _STATS.iter_unpack(blocks))
    sample_count = cur.u8()
    if sample_count:
        indices = np.frombuffer(cur.take(4 * sample_count), dtype="<u4")
        rows = np.frombuffer(cur.take(4 * sample_count * features), dtype="<f4")
        samples = rows.reshape(sample_count, features)
    else:
        indices = ()
        samples = np.empty((0, features), np.float32)
    return TensorRecord(node_id=node_id, variant_key=variant, mode=mode,
                        batch_size=batch, num_features=features,
                        aggregate=aggregate, per_neuron=per_neuron,
                        samples=samples, sample_indices=tuple(int(i) for i in indices))


def parse_chunk(data: bytes) -> tuple[StepRecord, tuple[RecordRef, ...]]:
    """Full parse of one chunk file's bytes, CRC included."""
    _check_crc(data)
    cur = _Cursor(data[:-4])
    header = _parse_header(cur)
    records = []
    refs = []
    for _ in range(header.record_count):
        start = cur.pos
        try:
            record = _parse_record(cur, header.strings)
        except InvariantViolation as exc:
            raise ChunkError(f"record violates model invariants: {exc}") from exc
        records.append(record)
        refs.append(RecordRef(node_id=record.node_id, variant_key=record.variant_key,
                              mode=record.mode, offset=start, length=cur.pos - start))
    if cur.pos != len(cur.data):
        raise ChunkError("trailing bytes after last record")
    step_record = StepRecord(step=header.step, category=header.category,
                             metadata=dict(header.metadata), records=tuple(records),
                             trial_id=header.trial_id)
    return step_record, tuple(refs)


def read_chunk_header(path: Path) -> ChunkHeader:
    with open(path, "rb") as handle:
        # headers are small; 64 KiB covers any realistic string table
        data = handle.read(65536)
        cur = _Cursor(data)
        try:
            return _parse_header(cur)
        except ChunkError:
            data += handle.read()
            return _parse_header(_Cursor(data))


def read_record_at(path: Path, offset: int, length: int,
                   strings: tuple[str, ...]) -> TensorRecord:
    with open(path, "rb") as handle:
        handle.seek(offset)
        blob = handle.read(length)
    if len(blob) != length:
        raise ChunkError("record extends past end of chunk")
    cur = _Cursor(blob)
    record = _parse_record(cur, strings)
    if cur.pos != length:
        raise ChunkError("record length mismatch")
    return record


# ---------------------------------------------------------------------------
# JSON documents


def canonical_json(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _atomic_write(path: Path, data: str | bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as handle:
        handle.write(data)
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(tmp, path)


def manifest_to_doc(manifest: RunManifest, finalized: bool) -> dict:
    return {
        "format_version": manifest.format_version,
        "run_id": manifest.run_id,
        "trial_ids": list(manifest.trial_ids),
        "categories": list(manifest.categories),
        "losses": list(manifest.losses),
        "max_samples": manifest.max_samples,
        "schedule_growth": f"{manifest.schedule_growth.numerator}/{manifest.schedule_growth.denominator}",
        "finalized": finalized,
    }


def doc_to_manifest(doc: dict) -> tuple[RunManifest, bool]:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"manifest format_version {version!r} is not supported")
    growth = doc["schedule_growth"]
    manifest = RunManifest(
        run_id=doc["run_id"],
        trial_ids=tuple(doc["trial_ids"]),
        categories=tuple(doc["categories"]),
        losses=tuple(doc["losses"]),
        max_samples=int(doc["max_samples"]),
        schedule_growth=Fraction(growth),
        format_version=version,
    )
    return manifest, bool(doc.get("finalized", False))


def graph_to_doc(graph: DependencyGraph) -> dict:
    nodes = sorted(graph.nodes, key=lambda n: n.node_id)
    return {
        "format_version": FORMAT_VERSION,
        "nodes": [{"node_id": n.node_id, "role": n.role.value,
                   "variant_keys": list(n.variant_keys)} for n in nodes],
        "edges": sorted([list(edge) for edge in graph.edges]),
        "layers": {k: v for k, v in sorted(graph.layer.items())},
    }


def doc_to_graph(doc: dict) -> DependencyGraph:
    nodes = tuple(NodeSpec(node_id=n["node_id"], role=Role(n["role"]),
                           variant_keys=tuple(n["variant_keys"]))
                  for n in doc["nodes"])
    edges = tuple((u, v) for u, v in doc["edges"])
    return DependencyGraph(nodes=nodes, edges=edges, layer=doc.get("layers", {}))


def tree_to_doc(tree: ModuleTreeNode) -> dict:
    return {"name": tree.name, "own_param_count": tree.own_param_count,
            "children": [tree_to_doc(c) for c in tree.children]}


def doc_to_tree(doc: dict) -> ModuleTreeNode:
    return ModuleTreeNode(name=doc["name"],
                          own_param_count=int(doc["own_param_count"]),
                          children=tuple(doc_to_tree(c) for c in doc.get("children", ())))


def _encode_scalar_value(value: float) -> object:
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return value


def _decode_scalar_value(value: object) -> float:
    if isinstance(value, str):
        return float(value)
    return float(value)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# writer


class RunWriter:
    """Single writer for one run directory; readers may attach concurrently.

    Chunks are append-only and individually checksummed, so a reader of a
    live (non-finalized) run always sees a consistent prefix.
    """

    def __init__(self, path: str | Path, run_id: str, *,
                 losses: tuple[str, ...] = (),
                 max_samples: int = 8,
                 schedule_growth: float | str | Fraction = "3/2"):
        schedule_growth = growth_fraction(schedule_growth)
        if max_samples > MAX_SAMPLES_LIMIT:
            raise InvariantViolation(
                f"max_samples cannot exceed {MAX_SAMPLES_LIMIT} (stored as u8)")
        self.path = Path(path)
        self.chunk_dir = self.path / "chunks"
        self.chunk_dir.mkdir(parents=True, exist_ok=True)
        self._manifest = RunManifest(run_id=run_id, trial_ids=(), categories=(),
                                     losses=tuple(losses), max_samples=max_samples,
                                     schedule_growth=schedule_growth)
        self._finalized = False
        self._written: dict[tuple[str, int], ChunkRef] = {}
        self._observed_trials: list[str] = []
        self._observed_categories: list[str] = []
        self._observed_losses: list[str] = []
        _atomic_write(self.path / "manifest.json",
                      canonical_json(manifest_to_doc(self._manifest, False)))

    @property
    def manifest(self) -> RunManifest:
        return self._manifest

    def _observe(self, seen: list[str], value: str) -> None:
        if value not in seen:
            seen.append(value)

    def write_step(self, step_record: StepRecord) -> ChunkRef:
        if self._finalized:
            raise AlreadyFinalizedError("run is finalized; no further steps accepted")
        key = (step_record.trial_id, step_record.step)
        if key in self._written:
            raise DuplicateStepError(
                f"step {step_record.step} already written for trial {step_record.trial_id!r}")
        for record in step_record.records:
            if len(record.sample_indices) > self._manifest.max_samples:
                raise InvariantViolation(
                    f"record {record.node_id!r} retains {len(record.sample_indices)} samples; "
                    f"manifest allows at most {self._manifest.max_samples}")

        payload, refs = pack_chunk(step_record)
        name = f"{step_record.trial_id}__{step_record.step:012d}.chunk"
        chunk_path = self.chunk_dir / name
        _atomic_write(chunk_path, payload)

        self._observe(self._observed_trials, step_record.trial_id)
        self._observe(self._observed_categories, step_record.category)
        for record in step_record.records:
            if record.mode.is_gradient:
                self._observe(self._observed_losses, record.mode.loss_id)

        ref = ChunkRef(path=chunk_path, trial_id=step_record.trial_id,
                       category=step_record.category, step=step_record.step,
                       metadata=dict(step_record.metadata), records=refs)
        self._written[key] = ref
        return ref

    def set_graph(self, graph: DependencyGraph) -> None:
        _atomic_write(self.path / "graph.json", canonical_json(graph_to_doc(graph)))

    def set_network_tree(self, tree: ModuleTreeNode) -> None:
        doc = {"format_version": FORMAT_VERSION, "tree": tree_to_doc(tree)}
        _atomic_write(self.path / "network.json", canonical_json(doc))

    def add_note(self, note: Note) -> None:
        line = json.dumps({"step": note.step, "text": note.text}, ensure_ascii=False)
        with open(self.path / "notes.jsonl", "a") as handle:
            handle.write(line + "\n")

    def add_scalar(self, point: ScalarPoint) -> None:
        line = json.dumps({"series": point.series_name, "step": point.step,
                           "value": _encode_scalar_value(point.value)})
        with open(self.path / "scalars.jsonl", "a") as handle:
            handle.write(line + "\n")

    def finalize(self) -> Path:
        """Seal the run: complete the manifest and write the offset index."""
        if self._finalized:
            raise AlreadyFinalizedError("run is already finalized")
        self._finalized = True

        losses = list(self._manifest.losses)
        for loss in self._observed_losses:
            if loss not in losses:
                losses.append(loss)
        self._manifest = RunManifest(
            run_id=self._manifest.run_id,
            trial_ids=tuple(sorted(self._observed_trials)),
            categories=tuple(sorted(self._observed_categories)),
            losses=tuple(losses),
            max_samples=self._manifest.max_samples,
            schedule_growth=self._manifest.schedule_growth,
        )

        steps = []
        for ref in sorted(self._written.values(),
                          key=lambda r: (r.trial_id, r.category, r.step)):
            steps.append({
                "trial": ref.trial_id,
                "category": ref.category,
                "step": ref.step,
                "chunk": ref.path.relative_to(self.path).as_posix(),
                "metadata": dict(ref.metadata),
                "records": [{
                    "node": r.node_id,
                    "variant": r.variant_key,
                    "mode": r.mode.kind,
                    "loss": r.mode.loss_id,
                    "offset": r.offset,
                    "length": r.length,
                } for r in ref.records],
            })
        index_doc = {"format_version": FORMAT_VERSION,
                     "run_id": self._manifest.run_id, "steps": steps}
        index_path = self.path / "index.json"
        _atomic_write(index_path, canonical_json(index_doc))
        _atomic_write(self.path / "manifest.json",
                      canonical_json(manifest_to_doc(self._manifest, True)))
        return index_path


# ---------------------------------------------------------------------------
# reader


@dataclass(frozen=True)
class IndexedRecord:
    chunk: str
    node_id: str
    variant_key: str
    mode: Mode
    offset: int
    length: int


@dataclass(frozen=True)
class IndexedStep:
    trial_id: str
    category: str
    step: int
    chunk: str
    metadata: Mapping[str, object]
    records: tuple[IndexedRecord, ...]


class RunReader:
    """Read access to a run directory, finalized or live.

    Live runs have no index document; the reader scans the chunk directory
    instead and silently skips chunks that fail their checksum, which covers
    a chunk being written concurrently.  Chunk headers (string tables) go
    through a bounded LRU cache; correctness never depends on it.
    """

    def __init__(self, path: str | Path, header_cache_size: int = 64):
        self.path = Path(path)
        manifest_path = self.path / "manifest.json"
        if not manifest_path.exists():
            raise NotFoundError(f"no run manifest at {manifest_path}")
        with open(manifest_path) as handle:
            doc = json.load(handle)
        self.manifest, self.finalized = doc_to_manifest(doc)
        self._header_cache: OrderedDict[str, ChunkHeader] = OrderedDict()
        self._header_cache_size = max(1, header_cache_size)
        self.steps: tuple[IndexedStep, ...] = self._load_index()

    def _load_index(self) -> tuple[IndexedStep, ...]:
        index_path = self.path / "index.json"
        if index_path.exists():
            with open(index_path) as handle:
                doc = json.load(handle)
            if doc.get("format_version") != FORMAT_VERSION:
                raise VersionError(
                    f"index format_version {doc.get('format_version')!r} is not supported")
            steps = []
            for entry in doc["steps"]:
                records = tuple(IndexedRecord(
                    chunk=entry["chunk"], node_id=r["node"], variant_key=r["variant"],
                    mode=Mode.forward() if r["mode"] == "forward" else Mode.gradient(r["loss"]),
                    offset=int(r["offset"]), length=int(r["length"]),
                ) for r in entry["records"])
                steps.append(IndexedStep(trial_id=entry["trial"], category=entry["category"],
                                         step=int(entry["step"]), chunk=entry["chunk"],
                                         metadata=entry.get("metadata", {}), records=records))
            return tuple(steps)
        return self._scan_chunks()

    def _scan_chunks(self) -> tuple[IndexedStep, ...]:
        steps = []
        for chunk_path in sorted(self.chunk_dir.glob("*.chunk")):
            try:
                step_record, refs = parse_chunk(chunk_path.read_bytes())
            except (ChunkError, VersionError):
                continue  # consistent-prefix guarantee: ignore bad tail chunks
            rel = chunk_path.relative_to(self.path).as_posix()
            steps.append(IndexedStep(
                trial_id=step_record.trial_id, category=step_record.category,
                step=step_record.step, chunk=rel, metadata=dict(step_record.metadata),
                records=tuple(IndexedRecord(chunk=rel, node_id=r.node_id,
                                            variant_key=r.variant_key, mode=r.mode,
                                            offset=r.offset, length=r.length)
                              for r in refs)))
        steps.sort(key=lambda s: (s.trial_id, s.category, s.step))
        return tuple(steps)

    @property
    def chunk_dir(self) -> Path:
        return self.path / "chunks"

    def refresh(self) -> None:
        """Re-scan a live run; finalized runs are immutable and skip this."""
        if not self.finalized:
            index_path = self.path / "index.json"
            if index_path.exists():
                with open(self.path / "manifest.json") as handle:
                    self.manifest, self.finalized = doc_to_manifest(json.load(handle))
            self.steps = self._load_index()

    def read_step(self, trial_id: str, step: int) -> StepRecord:
        for entry in self.steps:
            if entry.trial_id == trial_id and entry.step == step:
                record, _ = parse_chunk((self.path / entry.chunk).read_bytes())
                return record
        raise NotFoundError(f"no recorded step {step} for trial {trial_id!r}")

    def _header(self, chunk: str) -> ChunkHeader:
        cached = self._header_cache.get(chunk)
        if cached is not None:
            self._header_cache.move_to_end(chunk)
            return cached
        header = read_chunk_header(self.path / chunk)
        self._header_cache[chunk] = header
        while len(self._header_cache) > self._header_cache_size:
            self._header_cache.popitem(last=False)
        return header

    def read_record(self, indexed: IndexedRecord) -> TensorRecord:
        header = self._header(indexed.chunk)
        return read_record_at(self.path / indexed.chunk, indexed.offset,
                              indexed.length, header.strings)

    def graph(self) -> DependencyGraph | None:
        graph_path = self.path / "graph.json"
        if not graph_path.exists():
            return None
        with open(graph_path) as handle:
            return doc_to_graph(json.load(handle))

    def network_tree(self) -> ModuleTreeNode | None:
        tree_path = self.path / "network.json"
        if not tree_path.exists():
            return None
        with open(tree_path) as handle:
            return doc_to_tree(json.load(handle)["tree"])

    def notes(self) -> list[Note]:
        return [Note(step=entry["step"], text=entry["text"])
                for entry in self._jsonl("notes.jsonl")]

    def scalars(self) -> list[ScalarPoint]:
        return [ScalarPoint(series_name=entry["series"], step=entry["step"],
                            value=_decode_scalar_value(entry["value"]))
                for entry in self._jsonl("scalars.jsonl")]

    def _jsonl(self, name: str) -> Iterator[dict]:
        path = self.path / name
        if not path.exists():
            return
        with open(path) as handle:
            for line in handle:
                line = line.strip()
                if line:
                    yield json.loads(line)


def open_run(path: str | Path, header_cache_size: int = 64) -> RunReader:
    return RunReader(path, header_cache_size=header_cache_size)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    location: str
    message: str

    def to_dict(self) -> dict:
        return {"severity": self.severity, "code": self.code,
                "location": self.location, "message": self.message}


def validate_run(path: str | Path) -> list[Diagnostic]:
    """Structural and semantic validation of a run directory.

    Returns an empty list for a fully valid, finalized run.  Warnings count
    as diagnostics: a clean run has none of either.
    """
    path = Path(path)
    out: list[Diagnostic] = []

    def err(code: str, location: str, message: str) -> None:
        out.append(Diagnostic("error", code, location, message))

    def warn(code: str, location: str, message: str) -> None:
        out.append(Diagnostic("warning", code, location, message))

    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        err("manifest_missing", "manifest.json", "run has no manifest")
        return out
    try:
        with open(manifest_path) as handle:
            manifest, finalized = doc_to_manifest(json.load(handle))
    except VersionError as exc:
        err("version_unsupported", "manifest.json", str(exc))
        return out
    except (KeyError, ValueError, InvariantViolation, TypeError) as exc:
        err("manifest_invalid", "manifest.json", f"cannot parse manifest: {exc}")
        return out

    graph = None
    graph_path = path / "graph.json"
    if graph_path.exists():
        try:
            with open(graph_path) as handle:
                graph = doc_to_graph(json.load(handle))
        except (KeyError, ValueError, InvariantViolation, TypeError) as exc:
            err("graph_invalid", "graph.json", f"cannot parse graph: {exc}")
    else:
        warn("graph_missing", "graph.json", "run has no dependency graph document")

    network_path = path / "network.json"
    if network_path.exists():
        try:
            with open(network_path) as handle:
                doc_to_tree(json.load(handle)["tree"])
        except (KeyError, ValueError, InvariantViolation, TypeError) as exc:
            err("network_invalid", "network.json", f"cannot parse module tree: {exc}")

    for name, code in (("notes.jsonl", "note_invalid"), ("scalars.jsonl", "scalar_invalid")):
        file_path = path / name
        if not file_path.exists():
            continue
        with open(file_path) as handle:
            for lineno, line in enumerate(handle, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                    if name == "notes.jsonl":
                        Note(step=entry["step"], text=entry["text"])
                    else:
                        ScalarPoint(series_name=entry["series"], step=entry["step"],
                                    value=_decode_scalar_value(entry["value"]))
                except (KeyError, ValueError, InvariantViolation, TypeError) as exc:
                    err(code, f"{name}:{lineno}", f"bad line: {exc}")

    # chunks: structural pass, model invariants, closure against the manifest
    chunk_dir = path / "chunks"
    seen_keys: dict[tuple[str, int], str] = {}
    used_losses: set[str] = set()
    feature_widths: dict[tuple[str, str, str, str, str], int] = {}
    parsed: dict[str, tuple[StepRecord, tuple[RecordRef, ...]]] = {}
    chunk_files = sorted(chunk_dir.glob("*.chunk")) if chunk_dir.exists() else []
    for chunk_path in chunk_files:
        rel = chunk_path.relative_to(path).as_posix()
        try:
            step_record, refs = parse_chunk(chunk_path.read_bytes())
        except VersionError as exc:
            err("version_unsupported", rel, str(exc))
            continue
        except ChunkError as exc:
            err("chunk_unreadable", rel, str(exc))
            continue
        except InvariantViolation as exc:
            err("record_invalid", rel, str(exc))
            continue
        parsed[rel] = (step_record, refs)

        key = (step_record.trial_id, step_record.step)
        if key in seen_keys:
            err("duplicate_step", rel,
                f"(trial {key[0]!r}, step {key[1]}) already written in {seen_keys[key]}")
        seen_keys[key] = rel

        if finalized:
            if step_record.trial_id not in manifest.trial_ids:
                err("trial_undeclared", rel,
                    f"trial {step_record.trial_id!r} missing from manifest")
            if step_record.category not in manifest.categories:
                err("category_undeclared", rel,
                    f"category {step_record.category!r} missing from manifest")

        for record in step_record.records:
            loc = f"{rel}:{record.node_id}/{record.variant_key}/{record.mode.key()}"
            if len(record.sample_indices) > manifest.max_samples:
                err("samples_exceed_max", loc,
                    f"{len(record.sample_indices)} samples retained; manifest allows "
                    f"{manifest.max_samples}")
            if record.mode.is_gradient:
                used_losses.add(record.mode.loss_id)
                if record.mode.loss_id not in manifest.losses:
                    err("loss_undeclared", loc,
                        f"gradient loss {record.mode.loss_id!r} missing from manifest")
            if graph is not None:
                if not graph.has_node(record.node_id):
                    err("node_undeclared", loc,
                        f"node {record.node_id!r} missing from dependency graph")
                elif record.variant_key not in graph.node(record.node_id).variant_keys:
                    err("variant_undeclared", loc,
                        f"variant {record.variant_key!r} not declared for node "
                        f"{record.node_id!r}")
            width_key = (step_record.trial_id, step_record.category,
                         record.node_id, record.variant_key, record.mode.key())
            if width_key in feature_widths:
                if feature_widths[width_key] != record.num_features:
                    err("shape_inconsistent", loc,
                        f"feature width {record.num_features} differs from "
                        f"{feature_widths[width_key]} seen earlier for the same "
                        f"(trial, category, node, variant, mode)")
            else:
                feature_widths[width_key] = record.num_features

    for loss in manifest.losses:
        if finalized and loss not in used_losses:
            warn("loss_unused", "manifest.json",
                 f"manifest lists loss {loss!r} but no gradient record uses it")

    # index: completeness and offset fidelity
    index_path = path / "index.json"
    if not index_path.exists():
        err("index_missing", "index.json", "run is not finalized (no index document)")
        return out
    try:
        with open(index_path) as handle:
            index_doc = json.load(handle)
        if index_doc.get("format_version") != FORMAT_VERSION:
            err("version_unsupported", "index.json",
                f"index format_version {index_doc.get('format_version')!r} is not supported")
            return out
    except (ValueError, KeyError) as exc:
        err("index_invalid", "index.json", f"cannot parse index: {exc}")
        return out

    indexed_chunks: set[str] = set()
    prev_step: dict[tuple[str, str], int] = {}
    for entry in index_doc.get("steps", []):
        chunk = entry.get("chunk", "")
        indexed_chunks.add(chunk)
        trial_cat = (entry.get("trial", ""), entry.get("category", ""))
        if trial_cat in prev_step and entry.get("step", 0) <= prev_step[trial_cat]:
            err("index_order", "index.json",
                f"steps not ascending for (trial, category) {trial_cat}")
        prev_step[trial_cat] = entry.get("step", 0)

        if chunk not in parsed:
            err("index_chunk_missing", chunk,
                "index references a chunk that is missing or unreadable")
            continue
        step_record, refs = parsed[chunk]
        actual = {(r.node_id, r.variant_key, r.mode.key(), r.offset, r.length)
                  for r in refs}
        listed = set()
        for r in entry.get("records", []):
            mode = Mode.forward() if r.get("mode") == "forward" else Mode.gradient(r.get("loss") or "?")
            listed.add((r.get("node"), r.get("variant"), mode.key(),
                        int(r.get("offset", -1)), int(r.get("length", -1))))
        if actual != listed:
            err("index_offset_bad", chunk,
                "index record offsets do not match the chunk contents")
        if entry.get("trial") != step_record.trial_id or entry.get("step") != step_record.step \
                or entry.get("category") != step_record.category:
            err("index_offset_bad", chunk, "index step identity does not match chunk")

    for rel in parsed:
        if rel not in indexed_chunks:
            err("chunk_unindexed", rel, "chunk present on disk but absent from index")

    return out
