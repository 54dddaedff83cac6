"""The Inception + BiLSTM + attention network and its Inception-only baseline.

A model is an ordered list of :class:`LayerSpec` nodes, each naming the
nodes it reads from, plus a parameter store keyed by node name.  The
``ibis`` graph reproduces the reference layer table row for row; the
``inception`` baseline keeps the convolutional trunk and classifies the
globally averaged trunk features directly.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ibis.container import read_container, write_container
from ibis.data import SPLIT_CODES, WINDOW_SHAPE, Dataset, split_dataset
from ibis.errors import ConfigurationError, FormatError, InputError
from ibis.nn import layers as L
from ibis.nn.autograd import Tensor, backward, no_grad, reshape, tape_scope
from ibis.nn.optim import AdamState, adam_step

log = logging.getLogger(__name__)

ARCHITECTURES = ("ibis", "inception")
SUPPORTED_CLASSES = (5, 8)
NORM_VARIANCE_FLOOR = 1e-7
BN_MOMENTUM = 0.99
BN_EPSILON = 1e-3
DROPOUT_RATE = 0.5
LSTM_UNITS = 64
INFER_BATCH = 64

CHECKPOINT_MAGIC = b"IBCK"
CHECKPOINT_VERSION = 1


@dataclass
class LayerSpec:
    name: str
    kind: str
    inputs: tuple[str, ...] = ()
    config: dict = field(default_factory=dict)


@dataclass
class ModelGraph:
    arch: str
    num_classes: int
    seed: int
    layers: list[LayerSpec]
    params: dict[str, dict[str, Tensor]]
    state: dict[str, dict[str, np.ndarray]]
    norm_mean: np.ndarray | None = None
    norm_var: np.ndarray | None = None
    feature_layer: str = "features"

    def parameters(self) -> list[Tensor]:
        return [t for name in sorted(self.params) for _, t in sorted(self.params[name].items())]

    def layer(self, name: str) -> LayerSpec:
        for spec in self.layers:
            if spec.name == name:
                return spec
        raise KeyError(name)

    def count(self, name: str) -> int:
        """Stored parameter count of one node (running statistics included)."""
        n = sum(t.size for t in self.params.get(name, {}).values())
        return n + sum(a.size for a in self.state.get(name, {}).values())

    @property
    def adapted(self) -> bool:
        return self.norm_mean is not None


# ---------------------------------------------------------------------------
# construction


class _Builder:
    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)
        self.layers: list[LayerSpec] = []
        self.params: dict[str, dict[str, Tensor]] = {}
        self.state: dict[str, dict[str, np.ndarray]] = {}
        self.shapes: dict[str, tuple[int, ...]] = {}
        self.last = ""

    def add(self, name, kind, shape, inputs=None, /, **config) -> str:
        inputs = (self.last,) if inputs is None else tuple(inputs)
        self.layers.append(LayerSpec(name, kind, inputs if kind != "input" else (), config))
        self.shapes[name] = tuple(shape)
        self.last = name
        return name

    def _uniform(self, shape, limit):
        return Tensor(self.rng.uniform(-limit, limit, size=shape), requires_grad=True)

    def conv(self, name, filters, kernel, src=None):
        src = src or self.last
        h, w, c = self.shapes[src]
        fan_in = kernel * kernel * c
        self.params[name] = {
            "kernel": self._uniform((kernel, kernel, c, filters), np.sqrt(6.0 / fan_in)),
            "bias": Tensor(np.zeros(filters), requires_grad=True),
        }
        shape = (L.conv_output_size(h, kernel), L.conv_output_size(w, kernel), filters)
        return self.add(name, "conv", shape, [src], filters=filters, kernel=kernel, stride=1)

    def bn(self, name):
        c = self.shapes[self.last][-1]
        self.params[name] = {"gamma": Tensor(np.ones(c), requires_grad=True), "beta": Tensor(np.zeros(c), requires_grad=True)}
        self.state[name] = {"running_mean": np.zeros(c), "running_var": np.ones(c)}
        return self.add(name, "batchnorm", self.shapes[self.last], momentum=BN_MOMENTUM, epsilon=BN_EPSILON)

    def act(self, name, kind):
        return self.add(name, "activation", self.shapes[self.last], kind=kind)

    def conv_block(self, prefix, suffix, filters, kernel, src=None, activate=True):
        self.conv(f"{prefix}_conv{suffix}", filters, kernel, src)
        self.bn(f"{prefix}_bn{suffix}")
        if activate:
            self.act(f"{prefix}_act{suffix}", "swish")
        return self.last

    def inception_block(self, prefix):
        """1x1 -> 2x2, then parallel 2x2 / 4x4 branches, each pooled, concatenated.

        The 4x4 branch is zero-padded to the 2x2 branch's spatial size before
        pooling so the two pooled maps align for concatenation.
        """
        self.conv_block(prefix, "1", 3, 1)
        stem = self.conv_block(prefix, "2", 6, 2)
        a = self.conv_block(prefix, "3a", 5, 2, src=stem)
        b = self.conv_block(prefix, "3b", 9, 4, src=stem)
        (ha, wa, _), (hb, wb, cb) = self.shapes[a], self.shapes[b]
        top, left = (ha - hb) // 2, (wa - wb) // 2
        pad = (top, ha - hb - top, left, wa - wb - left)
        self.add(f"{prefix}_pad3b", "pad", (ha, wa, cb), [b], pad=pad)
        pa = self.add(f"{prefix}_pool3a", "maxpool", (ha // 2, wa // 2, self.shapes[a][2]), [a], window=2)
        pb = self.add(f"{prefix}_pool3b", "maxpool", (ha // 2, wa // 2, cb), [f"{prefix}_pad3b"], window=2)
        c = self.shapes[pa][2] + self.shapes[pb][2]
        return self.add(f"{prefix}_concat", "concat", (ha // 2, wa // 2, c), [pa, pb])

    def lstm_params(self, d, u):
        bias = np.zeros(4 * u)
        bias[u : 2 * u] = 1.0  # forget gate
        return {
            "kernel": self._uniform((d, 4 * u), 1.0 / np.sqrt(d)),
            "recurrent": self._uniform((u, 4 * u), 1.0 / np.sqrt(u)),
            "bias": Tensor(bias, requires_grad=True),
        }

    def dense(self, name, classes):
        f = self.shapes[self.last][-1]
        self.params[name] = {
            "kernel": self._uniform((f, classes), np.sqrt(6.0 / f)),
            "bias": Tensor(np.zeros(classes), requires_grad=True),
        }
        return self.add(name, "dense", (classes,))


def build_model(arch: str = "ibis", num_classes: int = 5, seed: int = 0) -> ModelGraph:
    if arch not in ARCHITECTURES:
        raise ConfigurationError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
    if num_classes not in SUPPORTED_CLASSES:
        raise ConfigurationError(f"num_classes must be one of {{5, 8}}, got {num_classes}")
    b = _Builder(seed)
    b.add("input", "input", WINDOW_SHAPE)
    b.add("normalization", "normalize", WINDOW_SHAPE, variance_floor=NORM_VARIANCE_FLOOR)
    b.inception_block("b1")
    b.inception_block("b2")
    b.add("dropout1", "dropout", b.shapes[b.last], rate=DROPOUT_RATE)
    b.conv_block("out", "", 6, 1)
    h, w, c = b.shapes[b.last]
    if arch == "ibis":
        b.add("reshape", "reshape", (h * w, c), target=(h * w, c))
        u = LSTM_UNITS
        b.params["bilstm"] = {f"forward_{k}": v for k, v in b.lstm_params(c, u).items()}
        b.params["bilstm"].update({f"backward_{k}": v for k, v in b.lstm_params(c, u).items()})
        b.add("bilstm", "bilstm", (h * w, 2 * u), units=u)
        b.add("tanh", "activation", (h * w, 2 * u), kind="tanh")
        f = 2 * u
        b.params["attention"] = {
            "weight": b._uniform((f, f), np.sqrt(6.0 / f)),
            "bias": Tensor(np.zeros(f), requires_grad=True),
            "context": b._uniform((f,), np.sqrt(6.0 / f)),
        }
        b.add("attention", "attention", (h * w, f))
        b.add("gap_rnn", "gap1d", (f,), ["tanh"])
        b.add("gap_att", "gap1d", (f,), ["attention"])
        b.add("features", "concat", (2 * f,), ["gap_rnn", "gap_att"])
    else:
        b.add("features", "gap2d", (c,))
    b.add("dropout2", "dropout", b.shapes["features"], rate=DROPOUT_RATE)
    b.dense("dense", num_classes)
    return ModelGraph(arch, num_classes, seed, b.layers, b.params, b.state)


def build_ibis(num_classes: int = 5, seed: int = 0) -> ModelGraph:
    return build_model("ibis", num_classes, seed)


def build_inception_baseline(num_classes: int = 5, seed: int = 0) -> ModelGraph:
    return build_model("inception", num_classes, seed)


# ---------------------------------------------------------------------------
# forward pass


def _apply(model: ModelGraph, spec: LayerSpec, ins: list[Tensor], training: bool, rng) -> Tensor:
    kind, cfg = spec.kind, spec.config
    p = model.params.get(spec.name, {})
    x = ins[0] if ins else None
    if kind == "normalize":
        mean = model.norm_mean if model.adapted else np.zeros(WINDOW_SHAPE[-1])
        var = model.norm_var if model.adapted else np.ones(WINDOW_SHAPE[-1])
        return (x - mean) * (1.0 / np.sqrt(np.maximum(var, cfg["variance_floor"])))
    if kind == "conv":
        return L.conv2d(x, p["kernel"], p["bias"], cfg["stride"])
    if kind == "batchnorm":
        s = model.state[spec.name]
        return L.batchnorm(x, p["gamma"], p["beta"], s["running_mean"], s["running_var"], training,
                           cfg["momentum"], cfg["epsilon"])
    if kind == "activation":
        return L.activation(x, cfg["kind"])
    if kind == "pad":
        return L.pad_spatial(x, *cfg["pad"])
    if kind == "maxpool":
        return L.maxpool2d(x, cfg["window"], cfg["window"])
    if kind == "concat":
        return L.concat(ins, axis=-1)
    if kind == "dropout":
        return L.dropout(x, cfg["rate"], training, rng)
    if kind == "reshape":
        return reshape(x, (x.shape[0],) + tuple(cfg["target"]))
    if kind == "bilstm":
        fw = (p["forward_kernel"], p["forward_recurrent"], p["forward_bias"])
        bw = (p["backward_kernel"], p["backward_recurrent"], p["backward_bias"])
        return L.bilstm(x, fw, bw)
    if kind == "attention":
        return L.additive_attention(x, p["weight"], p["bias"], p["context"])[0]
    if kind == "gap1d":
        return L.global_avg_pool_1d(x)
    if kind == "gap2d":
        return L.global_avg_pool_2d(x)
    if kind == "dense":
        return L.dense(x, p["kernel"], p["bias"])
    raise ConfigurationError(f"unknown layer kind {kind!r}")


def forward(model: ModelGraph, x, training: bool = False, rng=None) -> dict[str, Tensor]:
    """Run the graph on a batch (N, 32, 32, 3); returns every node's output."""
    acts: dict[str, Tensor] = {}
    for spec in model.layers:
        if spec.kind == "input":
            acts[spec.name] = Tensor(x)
            continue
        acts[spec.name] = _apply(model, spec, [acts[n] for n in spec.inputs], training, rng)
    return acts


def shape_trace(model: ModelGraph) -> dict[str, tuple[int, ...]]:
    """Per-node output shape (batch axis dropped) from a real forward pass."""
    with no_grad():
        acts = forward(model, np.zeros((1,) + WINDOW_SHAPE))
    return {name: t.shape[1:] for name, t in acts.items()}


# ---------------------------------------------------------------------------
# normalization, training, inference


def adapt_normalization(model: ModelGraph, training_windows) -> ModelGraph:
    x = np.asarray(training_windows, dtype=np.float64)
    if x.ndim != 4 or x.shape[0] == 0:
        raise InputError("adapt_normalization needs a non-empty (N, 32, 32, 3) training array")
    if x.shape[0] < 2:
        raise InputError("adapt_normalization needs at least 2 training windows")
    model.norm_mean = x.mean(axis=(0, 1, 2))
    model.norm_var = x.var(axis=(0, 1, 2))
    return model


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    learning_rate: float = 1e-3
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigurationError("split ratios must sum to 1")


@dataclass
class EpochRecord:
    epoch: int
    seconds: float
    train_loss: float
    train_accuracy: float
    val_accuracy: float


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def write_csv(self, path, antenna: int | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            head = ["antenna"] if antenna is not None else []
            w.writerow(head + ["epoch", "seconds", "train_loss", "train_accuracy", "val_accuracy"])
            for r in self.records:
                pre = [antenna] if antenna is not None else []
                w.writerow(pre + [r.epoch, f"{r.seconds:.3f}", f"{r.train_loss:.6f}",
                                  f"{r.train_accuracy:.6f}", f"{r.val_accuracy:.6f}"])


def train(model: ModelGraph, dataset: Dataset, config: TrainConfig | None = None) -> TrainingLog:
    """Train for exactly ``config.epochs`` epochs (no early stopping).

    Uses the dataset's split assignment, splitting it first if every window
    is unassigned.  Normalization statistics are adapted on the training
    split when the model has not been adapted yet.
    """
    config = config or TrainConfig()
    config.validate()
    if np.all(dataset.split < 0):
        split_dataset(dataset, config.ratios, config.seed)
    train_mask = dataset.split == SPLIT_CODES["train"]
    xs = dataset.values[train_mask].astype(np.float64)
    ys = dataset.labels[train_mask]
    val = dataset.part("val")
    if config.batch_size > len(ys):
        raise ConfigurationError(f"batch size {config.batch_size} exceeds the {len(ys)} training windows")
    if ys.max() >= model.num_classes:
        raise InputError("dataset has more classes than the model head")
    if not model.adapted:
        adapt_normalization(model, xs)

    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    opt = AdamState(learning_rate=config.learning_rate)
    history = TrainingLog()
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(ys))
        loss_sum, correct = 0.0, 0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            for t in params:
                t.grad = None
            with tape_scope() as tape:
                logits = forward(model, xs[idx], training=True, rng=rng)["dense"]
                loss = L.cross_entropy(logits, ys[idx])
                backward(loss, tape)
            adam_step(params, [t.grad for t in params], opt)
            loss_sum += loss.item() * len(idx)
            correct += int(np.sum(logits.data.argmax(axis=1) == ys[idx]))
        val_acc = float(np.mean(predict(model, val.values)[0] == val.labels)) if len(val) else float("nan")
        seconds = time.perf_counter() - start
        rec = EpochRecord(epoch, seconds, loss_sum / len(ys), correct / len(ys), val_acc)
        history.records.append(rec)
        log.info("epoch %d: %.3fs loss %.4f acc %.3f val %.3f", epoch, seconds, rec.train_loss,
                 rec.train_accuracy, rec.val_accuracy)
    return history


def _check_windows(windows) -> np.ndarray:
    x = np.asarray(windows, dtype=np.float64)
    if x.shape == WINDOW_SHAPE:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != WINDOW_SHAPE:
        raise InputError(f"windows must have shape (32, 32, 3) or (N, 32, 32, 3), got {x.shape}")
    return x


def _infer(model: ModelGraph, windows, node: str) -> np.ndarray:
    x = _check_windows(windows)
    outs = []
    with no_grad():
        for lo in range(0, len(x), INFER_BATCH):
            outs.append(forward(model, x[lo : lo + INFER_BATCH])[node].data)
    if not outs:
        width = model.num_classes if node == "dense" else shape_trace(model)[node][0]
        return np.empty((0, width))
    return np.concatenate(outs)


def predict_logits(model: ModelGraph, windows) -> np.ndarray:
    return _infer(model, windows, "dense")


def predict(model: ModelGraph, windows) -> tuple[np.ndarray, np.ndarray]:
    """Inference-mode labels and softmax probability vectors."""
    logits = predict_logits(model, windows)
    z = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs.argmax(axis=1), probs


def extract_features(model: ModelGraph, windows) -> np.ndarray:
    """Penultimate representation (256-dim for ``ibis``) feeding the dense head."""
    return _infer(model, windows, model.feature_layer)


# ---------------------------------------------------------------------------
# layer-table conformance

# (row label, node names, reference output shape(s), reference parameter count)
REFERENCE_LAYERS = [
    ("Input Layer", ["input"], [(32, 32, 3)], None),
    ("Normalization", ["normalization"], [(32, 32, 3)], None),
    ("Conv2D(3×1×3)", ["b1_conv1"], [(32, 32, 3)], 3),
    ("BatchNormalization", ["b1_bn1"], [(32, 32, 3)], 12),
    ("Activation (swish)", ["b1_act1"], [(32, 32, 3)], None),
    ("Conv2D(6×2×3)", ["b1_conv2"], [(31, 31, 6)], 78),
    ("BatchNormalization", ["b1_bn2"], [(31, 31, 6)], 24),
    ("Activation (swish)", ["b1_act2"], [(31, 31, 6)], None),
    ("Conv2D(5×2×6)", ["b1_conv3a"], [(30, 30, 5)], 125),
    ("BatchNormalization", ["b1_bn3a"], [(30, 30, 5)], 20),
    ("Conv2D(9×4×6)", ["b1_conv3b"], [(28, 28, 9)], 873),
    ("BatchNormalization", ["b1_bn3b"], [(28, 28, 9)], 36),
    ("Activation (swish)", ["b1_act3a", "b1_act3b"], [(30, 30, 5), (28, 28, 9)], None),
    ("MaxPooling2D(2×2)", ["b1_pool3a"], [(15, 15, 5)], None),
    ("Concatenate", ["b1_concat"], [(15, 15, 14)], None),
    ("Conv2D(3×1×14)", ["b2_conv1"], [(15, 15, 3)], 45),
    ("BatchNormalization", ["b2_bn1"], [(15, 15, 3)], 12),
    ("Activation (swish)", ["b2_act1"], [(15, 15, 3)], None),
    ("Conv2D(6×2×3)", ["b2_conv2"], [(14, 14, 6)], 78),
    ("BatchNormalization", ["b2_bn2"], [(14, 14, 6)], 24),
    ("Conv2D(5×2×6)", ["b2_conv3a"], [(13, 13, 5)], 125),
    ("BatchNormalization", ["b2_bn3a"], [(13, 13, 5)], 20),
    ("Conv2D(9×4×6)", ["b2_conv3b"], [(11, 11, 9)], 873),
    ("BatchNormalization", ["b2_bn3b"], [(11, 11, 9)], 36),
    ("Activation (swish)", ["b2_act3a", "b2_act3b"], [(13, 13, 5), (11, 11, 9)], None),
    ("MaxPooling2D(2×2)", ["b2_pool3a"], [(6, 6, 5)], None),
    ("Concatenate", ["b2_concat"], [(6, 6, 14)], None),
    ("Dropout(0.5)", ["dropout1"], [(6, 6, 14)], None),
    ("Conv2D(6×1×14)", ["out_conv"], [(6, 6, 6)], 84),
    ("BatchNormalization", ["out_bn"], [(6, 6, 6)], 24),
    ("Activation (swish)", ["out_act"], [(6, 6, 6)], None),
    ("Reshape", ["reshape"], [(36, 6)], None),
    ("Bidirectional LSTM (64 units)", ["bilstm"], [(36, 128)], 45568),
    ("Activation (tanh)", ["tanh"], [(36, 128)], None),
    ("Attention", ["attention"], [(36, 128)], 16640),
    ("GlobalAvgPooling1D (RNN)", ["gap_rnn"], [(128,)], None),
    ("GlobalAvgPooling1D (Attention)", ["gap_att"], [(128,)], None),
    ("Concatenate", ["features"], [(256,)], None),
    ("Dropout(0.5)", ["dropout2"], [(256,)], None),
    ("Dense (5 classes)", ["dense"], [(5,)], 1285),
]

# Reference counts that disagree with the with-bias formulas, and why.
DOCUMENTED_DIVERGENCES = {
    "b1_conv1": "reference 3; with bias Cout*(k*k*Cin+1) = 3*(1*3+1) = 12",
    "out_conv": "reference 84 = weights only; with bias 6*(14+1) = 90",
    "bilstm": "reference 45568 implies 24 input features; the (36, 6) reshape gives 2*4*64*(6+64+1) = 36352",
}


@dataclass
class ReportRow:
    label: str
    nodes: list[str]
    shapes: list[tuple[int, ...]]
    expected_shapes: list[tuple[int, ...]]
    params: int | None
    expected_params: int | None
    shape_ok: bool
    count_status: str  # "match", "divergent", "mismatch", "-" (no reference count)
    note: str = ""


def parameter_report(model: ModelGraph) -> tuple[list[ReportRow], dict]:
    """Per-row shapes and stored parameter counts next to the reference table."""
    if model.arch != "ibis":
        raise ConfigurationError("the layer table describes the ibis architecture only")
    trace = shape_trace(model)
    rows = []
    for label, nodes, exp_shapes, exp_params in REFERENCE_LAYERS:
        shapes = [trace[n] for n in nodes]
        if label.startswith("Dense"):
            exp_shapes = [(model.num_classes,)]
            if model.num_classes != 5:
                label = f"Dense ({model.num_classes} classes)"
                exp_params = None
        has_params = any(n in model.params or n in model.state for n in nodes)
        count = sum(model.count(n) for n in nodes) if has_params else None
        if exp_params is None:
            status = "-"
        elif count == exp_params:
            status = "match"
        elif nodes[0] in DOCUMENTED_DIVERGENCES:
            status = "divergent"
        else:
            status = "mismatch"
        rows.append(ReportRow(label, nodes, shapes, [tuple(s) for s in exp_shapes], count, exp_params,
                              shapes == [tuple(s) for s in exp_shapes], status,
                              DOCUMENTED_DIVERGENCES.get(nodes[0], "") if status == "divergent" else ""))
    totals = {
        "trainable": sum(t.size for t in model.parameters()),
        "non_trainable": sum(a.size for s in model.state.values() for a in s.values()),
        "shape_rows": len(rows),
        "shape_matches": sum(r.shape_ok for r in rows),
        "distinct_shapes": len({s for r in rows for s in r.expected_shapes}),
        "distinct_shape_matches": len({s for r in rows if r.shape_ok for s in r.expected_shapes}),
        "count_matches": sum(r.count_status == "match" for r in rows),
        "count_divergent": sum(r.count_status == "divergent" for r in rows),
        "count_mismatches": sum(r.count_status == "mismatch" for r in rows),
    }
    totals["total"] = totals["trainable"] + totals["non_trainable"]
    return rows, totals


# ---------------------------------------------------------------------------
# checkpoints


def save_model(model: ModelGraph, path) -> None:
    if not model.adapted:
        raise InputError("refusing to save a model without normalization statistics")
    arrays = {"normalization/mean": model.norm_mean, "normalization/var": model.norm_var}
    for name in sorted(model.params):
        for key, t in sorted(model.params[name].items()):
            arrays[f"{name}/{key}"] = t.data
    for name in sorted(model.state):
        for key, a in sorted(model.state[name].items()):
            arrays[f"{name}/{key}"] = a
    meta = {
        "arch": model.arch,
        "num_classes": model.num_classes,
        "seed": model.seed,
        "layers": [asdict(s) for s in model.layers],
    }
    write_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, meta, arrays)


def load_model(path) -> ModelGraph:
    meta, arrays = read_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    model = build_model(meta["arch"], meta["num_classes"], meta["seed"])
    stored = [LayerSpec(d["name"], d["kind"], tuple(d["inputs"]), _untuple(d["config"])) for d in meta["layers"]]
    if [(s.name, s.kind, s.inputs) for s in stored] != [(s.name, s.kind, s.inputs) for s in model.layers]:
        raise FormatError("checkpoint layer descriptors do not match this architecture")
    model.norm_mean = arrays.pop("normalization/mean")
    model.norm_var = arrays.pop("normalization/var")
    for key, arr in arrays.items():
        name, field_ = key.split("/", 1)
        if name in model.params and field_ in model.params[name]:
            target = model.params[name][field_].data
        elif name in model.state and field_ in model.state[name]:
            target = model.state[name][field_]
        else:
            raise FormatError(f"unexpected array {key!r} in checkpoint")
        if target.shape != arr.shape:
            raise FormatError(f"array {key!r} has shape {arr.shape}, expected {target.shape}")
        target[...] = arr
    return model


def _untuple(cfg: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()}
