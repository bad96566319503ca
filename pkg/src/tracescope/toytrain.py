"""Self-contained toy model, manual gradients, and a full recording pipeline.

The task: given a sequence x_0..x_{T-1}, predict the running partial sum at
every position.  Each position feeds one hidden tanh layer with two inputs,
the current value and a carry, and a linear readout produces the prediction:

    u_t = [x_t, c_t]          c_0 = 0, c_t = true partial sum through t-1
    h_t = tanh(u_t @ W1^T + b1)
    y_t = h_t @ W2^T + b2

The carry is teacher-forced from the true partial sums and treated as a
constant by backpropagation (a live feedback of y_{t-1} would contract to a
cyclic node graph, which dependency graphs forbid).  Two losses train it:
``main`` is the MSE on the final sum, ``aux`` the mean MSE over all
intermediate partial sums; ``combined`` is their sum and is what the
optimizer follows.  Everything runs in float64 so finite-difference checks
at 1e-6 are meaningful.

Gradients are recorded per loss and only on tensors that loss actually
touches, so "not recorded" coordinates occur naturally (e.g. the aux loss
never touches the final prediction position, and targets receive no
gradient at all).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvariantViolation, ShapeError
from .graph import RawGraph, assign_layers, contract
from .model import (
    Mode,
    ModuleTreeNode,
    NodeSpec,
    Note,
    Role,
    ScalarPoint,
    StepRecord,
    TensorRecord,
)
from .schedule import ScheduleRegistry
from .stats import per_neuron_stats, summarize
from .store import RunWriter

_MASK = (1 << 64) - 1


class SplitMix64:
    """Deterministic 64-bit shift-multiply generator (SplitMix64 constants).

    Reproducibility holds within this implementation; bit-identical streams
    across languages are a non-goal.
    """

    GAMMA = 0x9E3779B97F4A7C15
    MULT1 = 0xBF58476D1CE4E5B9
    MULT2 = 0x94D049BB133111EB

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + self.GAMMA) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * self.MULT1) & _MASK
        z = ((z ^ (z >> 27)) * self.MULT2) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        # 53 high bits give a double in [0, 1)
        return (self.next_u64() >> 11) / float(1 << 53)

    def uniform_array(self, shape: tuple[int, ...], low: float = 0.0,
                      high: float = 1.0) -> np.ndarray:
        flat = np.array([self.uniform() for _ in range(int(np.prod(shape)))],
                        dtype=np.float64)
        return low + (high - low) * flat.reshape(shape)


@dataclass
class ToyModel:
    """Parameters of the per-position network; float64 throughout."""

    hidden_width: int
    w1: np.ndarray  # (H, 2)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (1, H)
    b2: np.ndarray  # (1,)

    @classmethod
    def initialize(cls, hidden_width: int, rng: SplitMix64,
                   scale: float = 0.5) -> "ToyModel":
        h = hidden_width
        return cls(
            hidden_width=h,
            w1=rng.uniform_array((h, 2), -scale, scale),
            b1=rng.uniform_array((h,), -scale, scale),
            w2=rng.uniform_array((1, h), -scale, scale) / np.sqrt(h),
            b2=rng.uniform_array((1,), -scale, scale),
        )

    def check_finite(self) -> None:
        for name, value in self.params().items():
            if not np.all(np.isfinite(value)):
                raise InvariantViolation(f"parameter {name} became non-finite")

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params().values()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for name, value in self.params().items():
            chunk = flat[offset:offset + value.size].reshape(value.shape)
            setattr(self, name, chunk.copy())
            offset += value.size


@dataclass
class ForwardTrace:
    """All intermediate tensors of one forward pass over a batch."""

    inputs: np.ndarray        # (B, T)
    targets: np.ndarray       # (B, T) running partial sums
    carries: np.ndarray       # (B, T) teacher-forced carry fed at each position
    pre_activations: list[np.ndarray] = field(default_factory=list)  # a_t (B, H)
    hiddens: list[np.ndarray] = field(default_factory=list)          # h_t (B, H)
    predictions: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    loss_main: float = 0.0
    loss_aux: float = 0.0

    @property
    def loss_combined(self) -> float:
        return self.loss_main + self.loss_aux

    @property
    def seq_len(self) -> int:
        return self.inputs.shape[1]


def forward(model: ToyModel, batch: np.ndarray) -> ForwardTrace:
    """Run the model position by position over a (batch, seq_len) input."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ShapeError(f"batch must be (B, T>=2), got shape {x.shape}")
    b, t_len = x.shape
    targets = np.cumsum(x, axis=1)
    carries = np.concatenate([np.zeros((b, 1)), targets[:, :-1]], axis=1)

    trace = ForwardTrace(inputs=x, targets=targets, carries=carries)
    predictions = np.empty((b, t_len))
    for t in range(t_len):
        u = np.stack([x[:, t], carries[:, t]], axis=1)          # (B, 2)
        a = u @ model.w1.T + model.b1                           # (B, H)
        h = np.tanh(a)
        y = h @ model.w2.T + model.b2                           # (B, 1)
        trace.pre_activations.append(a)
        trace.hiddens.append(h)
        predictions[:, t] = y[:, 0]
    trace.predictions = predictions

    residual = predictions - targets
    trace.loss_main = float(np.mean(residual[:, -1] ** 2))
    trace.loss_aux = float(np.mean(residual[:, :-1] ** 2))
    return trace


@dataclass
class GradientSet:
    """Gradients of one loss; position-indexed for per-variant tensors.

    Positions a loss never touches are simply absent, which is what makes
    per-loss "not recorded" coordinates appear downstream.  ``loss_nodes``
    holds the gradient on the loss nodes themselves (1.0 for every term the
    differentiated loss contains).
    """

    loss_id: str
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    inputs: np.ndarray
    hidden: dict[int, np.ndarray]
    prediction: dict[int, np.ndarray]
    loss_nodes: dict[str, float]


def _loss_grad_wrt_predictions(trace: ForwardTrace, loss_id: str) -> tuple[np.ndarray, list[int]]:
    b, t_len = trace.predictions.shape
    residual = trace.predictions - trace.targets
    grad = np.zeros((b, t_len))
    if loss_id == "main":
        grad[:, -1] = 2.0 * residual[:, -1] / b
        touched = [t_len - 1]
    elif loss_id == "aux":
        grad[:, :-1] = 2.0 * residual[:, :-1] / (b * (t_len - 1))
        touched = list(range(t_len - 1))
    elif loss_id == "combined":
        grad[:, -1] = 2.0 * residual[:, -1] / b
        grad[:, :-1] += 2.0 * residual[:, :-1] / (b * (t_len - 1))
        touched = list(range(t_len))
    else:
        raise InvariantViolation(f"unknown loss {loss_id!r}")
    return grad, touched


def backward(model: ToyModel, trace: ForwardTrace, loss_id: str) -> GradientSet:
    """Manual reverse pass for one loss; the carry is a constant."""
    d_pred, touched = _loss_grad_wrt_predictions(trace, loss_id)
    b, t_len = trace.predictions.shape
    loss_nodes = {"combined": {"loss_main": 1.0, "loss_aux": 1.0}}.get(
        loss_id, {f"loss_{loss_id}": 1.0})
    grads = GradientSet(loss_id=loss_id,
                        w1=np.zeros_like(model.w1), b1=np.zeros_like(model.b1),
                        w2=np.zeros_like(model.w2), b2=np.zeros_like(model.b2),
                        inputs=np.zeros_like(trace.inputs),
                        hidden={}, prediction={}, loss_nodes=loss_nodes)
    for t in touched:
        dy = d_pred[:, t]                                       # (B,)
        h = trace.hiddens[t]
        grads.prediction[t] = dy.reshape(b, 1).copy()
        grads.w2 += (dy @ h).reshape(1, -1)
        grads.b2 += np.array([dy.sum()])
        dh = dy[:, None] * model.w2[0][None, :]                 # (B, H)
        grads.hidden[t] = dh
        da = dh * (1.0 - h * h)
        u = np.stack([trace.inputs[:, t], trace.carries[:, t]], axis=1)
        grads.w1 += da.T @ u
        grads.b1 += da.sum(axis=0)
        du = da @ model.w1                                      # (B, 2)
        grads.inputs[:, t] += du[:, 0]
    return grads


def backward_all(model: ToyModel, trace: ForwardTrace,
                 inject_bug: bool = False) -> dict[str, GradientSet]:
    """Gradients for each loss separately plus their sum.

    ``inject_bug`` detaches the aux-loss gradient path: the aux loss value is
    still computed and logged, but no gradient flows from it, so aux-mode
    gradient records disappear and the combined gradient collapses to the
    main one.  The network still learns, just more slowly; this reproduces
    the kind of silent training-speed bug the tool exists to find.
    """
    main = backward(model, trace, "main")
    if inject_bug:
        combined = backward(model, trace, "main")
        combined.loss_id = "combined"
        combined.loss_nodes = {"loss_main": 1.0}
        return {"main": main, "combined": combined}
    return {"main": main,
            "aux": backward(model, trace, "aux"),
            "combined": backward(model, trace, "combined")}


# ---------------------------------------------------------------------------
# named-tensor wiring


def node_specs(max_seq_len: int) -> dict[str, NodeSpec]:
    positions = tuple(f"t{t}" for t in range(max_seq_len))
    sums = tuple(f"partial_sum_t{t}" for t in range(max_seq_len))
    return {
        "input": NodeSpec("input", Role.INPUT),
        "w1": NodeSpec("w1", Role.PARAMETER),
        "b1": NodeSpec("b1", Role.PARAMETER),
        "w2": NodeSpec("w2", Role.PARAMETER),
        "b2": NodeSpec("b2", Role.PARAMETER),
        "helper_partial_sums": NodeSpec("helper_partial_sums", Role.CALCULATED, sums),
        "hidden": NodeSpec("hidden", Role.CALCULATED, positions),
        "prediction": NodeSpec("prediction", Role.OUTPUT, sums),
        "target": NodeSpec("target", Role.TARGET),
        "loss_main": NodeSpec("loss_main", Role.LOSS),
        "loss_aux": NodeSpec("loss_aux", Role.LOSS),
    }


def raw_computation_graph(max_seq_len: int) -> RawGraph:
    """The op-level wiring of one forward pass, ops as unnamed vertices."""
    vertices = {"v_input", "v_w1", "v_b1", "v_w2", "v_b2", "v_target",
                "v_loss_main", "v_loss_aux", "op_cumsum", "op_stack_targets",
                "op_mse_main", "op_mse_aux"}
    named = {"v_input": "input", "v_w1": "w1", "v_b1": "b1", "v_w2": "w2",
             "v_b2": "b2", "v_target": "target", "v_loss_main": "loss_main",
             "v_loss_aux": "loss_aux"}
    edges: list[tuple[str, str]] = [("v_input", "op_cumsum"),
                                    ("op_stack_targets", "v_target"),
                                    ("op_mse_main", "v_loss_main"),
                                    ("op_mse_aux", "v_loss_aux"),
                                    ("v_target", "op_mse_main"),
                                    ("v_target", "op_mse_aux")]
    last = max_seq_len - 1
    for t in range(max_seq_len):
        helper, hidden, pred = f"v_helper_t{t}", f"v_hidden_t{t}", f"v_pred_t{t}"
        concat, affine, tanh_op, readout = (f"op_concat_t{t}", f"op_affine1_t{t}",
                                            f"op_tanh_t{t}", f"op_readout_t{t}")
        vertices.update({helper, hidden, pred, concat, affine, tanh_op, readout})
        named[helper] = "helper_partial_sums"
        named[hidden] = "hidden"
        named[pred] = "prediction"
        edges.append(("op_cumsum", helper))
        edges.append((helper, "op_stack_targets"))
        edges.append(("v_input", concat))
        if t > 0:
            edges.append((f"v_helper_t{t-1}", concat))
        edges.extend([(concat, affine), ("v_w1", affine), ("v_b1", affine),
                      (affine, tanh_op), (tanh_op, hidden),
                      (hidden, readout), ("v_w2", readout), ("v_b2", readout),
                      (readout, pred)])
        edges.append((pred, "op_mse_main" if t == last else "op_mse_aux"))
    return RawGraph(vertices=frozenset(vertices), edges=tuple(edges), named=named)


def dependency_graph(max_seq_len: int):
    return assign_layers(contract(raw_computation_graph(max_seq_len),
                                  node_specs(max_seq_len)))


def module_tree(hidden_width: int) -> ModuleTreeNode:
    h = hidden_width
    return ModuleTreeNode("toy_addition_net", 0, (
        ModuleTreeNode("encoder", 0, (
            ModuleTreeNode("weight", h * 2),
            ModuleTreeNode("bias", h),
        )),
        ModuleTreeNode("readout", 0, (
            ModuleTreeNode("weight", h),
            ModuleTreeNode("bias", 1),
        )),
    ))


# ---------------------------------------------------------------------------
# recording


def _as_2d(value: np.ndarray) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim == 2:
        return arr
    return arr.reshape(arr.shape[0], -1)


def make_record(node_id: str, variant_key: str, mode: Mode, value: np.ndarray,
                max_samples: int, batched: bool = True) -> TensorRecord:
    """Normalize to (batch, features), summarize, and retain leading samples."""
    arr = _as_2d(value)
    if not batched:
        arr = arr.reshape(1, -1)
    b, d = arr.shape
    if b > 1:
        keep = min(b, max_samples)
        samples = arr[:keep].astype(np.float32)
        indices = tuple(range(keep))
    else:
        samples = np.empty((0, d), np.float32)
        indices = ()
    return TensorRecord(node_id=node_id, variant_key=variant_key, mode=mode,
                        batch_size=b, num_features=d,
                        aggregate=summarize(arr), per_neuron=per_neuron_stats(arr),
                        samples=samples, sample_indices=indices)


def step_records(model: ToyModel, trace: ForwardTrace,
                 grads: dict[str, GradientSet], max_samples: int) -> list[TensorRecord]:
    records: list[TensorRecord] = []
    fwd = Mode.forward()

    records.append(make_record("input", "value", fwd, trace.inputs, max_samples))
    for name, value in model.params().items():
        records.append(make_record(name, "value", fwd, value, max_samples, batched=False))
    for t in range(trace.seq_len):
        records.append(make_record("hidden", f"t{t}", fwd, trace.hiddens[t], max_samples))
        records.append(make_record("prediction", f"partial_sum_t{t}", fwd,
                                   trace.predictions[:, t:t + 1], max_samples))
        records.append(make_record("helper_partial_sums", f"partial_sum_t{t}", fwd,
                                   trace.targets[:, t:t + 1], max_samples))
    records.append(make_record("target", "value", fwd, trace.targets, max_samples))
    records.append(make_record("loss_main", "value", fwd,
                               np.array([[trace.loss_main]]), max_samples))
    records.append(make_record("loss_aux", "value", fwd,
                               np.array([[trace.loss_aux]]), max_samples))

    for loss_id, gradient in grads.items():
        mode = Mode.gradient(loss_id)
        records.append(make_record("input", "value", mode, gradient.inputs, max_samples))
        for name in ("w1", "b1", "w2", "b2"):
            records.append(make_record(name, "value", mode, getattr(gradient, name),
                                       max_samples, batched=False))
        for t, grad in sorted(gradient.hidden.items()):
            records.append(make_record("hidden", f"t{t}", mode, grad, max_samples))
        for t, grad in sorted(gradient.prediction.items()):
            records.append(make_record("prediction", f"partial_sum_t{t}", mode,
                                       grad, max_samples))
        for loss_node, value in sorted(gradient.loss_nodes.items()):
            records.append(make_record(loss_node, "value", mode,
                                       np.array([[value]]), max_samples))
    return records


def train_and_record(steps: int, seed: int, out_path: str | Path, *,
                     growth: float | str = "1.5",
                     batch_size: int = 16, hidden_width: int = 16,
                     seq_len: int = 6, long_seq_len: int = 8,
                     max_samples: int = 8, learning_rate: float = 0.08,
                     inject_bug: bool = False,
                     run_id: str = "toy_run", trial_id: str = "trial_0") -> Path:
    """Train the toy model and emit a complete, finalized run directory.

    Every 7th batch uses longer sequences and is categorized "long_sequence"
    so the per-category schedule gets exercised; all other steps are
    "default".  Scalars are logged every step, tensor records only on steps
    the scheduler picks.
    """
    if steps < 1:
        raise InvariantViolation("training needs at least one step")
    out_path = Path(out_path)
    rng = SplitMix64(seed)
    model = ToyModel.initialize(hidden_width, rng)

    losses = ("main", "combined") if inject_bug else ("main", "aux", "combined")
    writer = RunWriter(out_path, run_id, losses=losses,
                       max_samples=max_samples, schedule_growth=growth)
    writer.set_graph(dependency_graph(long_seq_len))
    writer.set_network_tree(module_tree(hidden_width))
    writer.add_note(Note(0, f"training started: steps={steps} seed={seed} "
                            f"growth={growth} inject_bug={inject_bug}"))

    registry = ScheduleRegistry(growth)
    registry.register("default")
    registry.register("long_sequence")

    for step in range(steps):
        long_batch = step % 7 == 6
        category = "long_sequence" if long_batch else "default"
        t_len = long_seq_len if long_batch else seq_len
        batch = rng.uniform_array((batch_size, t_len), -0.5, 0.5)

        trace = forward(model, batch)
        grads = backward_all(model, trace, inject_bug=inject_bug)

        writer.add_scalar(ScalarPoint("loss_main", step, trace.loss_main))
        writer.add_scalar(ScalarPoint("loss_aux", step, trace.loss_aux))
        writer.add_scalar(ScalarPoint("loss_combined", step, trace.loss_combined))

        if registry.observe(category):
            writer.write_step(StepRecord(
                step=step, category=category,
                metadata={"seq_len": t_len, "long_batch": long_batch},
                records=tuple(step_records(model, trace, grads, max_samples)),
                trial_id=trial_id))

        combined = grads["combined"]
        model.w1 -= learning_rate * combined.w1
        model.b1 -= learning_rate * combined.b1
        model.w2 -= learning_rate * combined.w2
        model.b2 -= learning_rate * combined.b2
        model.check_finite()

    writer.add_note(Note(steps - 1, "training finished"))
    writer.finalize()
    return out_path
