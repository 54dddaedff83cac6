"""Synthetic Doppler windows, stratified splitting and the IBDS file format.

A window is a (time=32, doppler_bin=32, channel=3) array.  Bin 16 is zero
Doppler.  Each *event* is one ground-truth activity signature observed by
four antennas; the antennas perturb gain, add independent noise and
occasionally pick up an interference burst, so their predictions are
correlated but not identical.

IBDS layout (all little-endian)::

    offset 0   b"IBDS"
           4   u16 format version
           6   u16 class count
           8   u32 window count N
          12   u64 generation seed
          20   u32 metadata length L
          24   L bytes of UTF-8 JSON {"class_names": [...], "scenarios": [...]}
    24+L       N records: u16 label, u8 antenna, u8 scenario index,
               u32 event id, 3072 x f32 values (time-major, then bin, then channel)
    ...        N x i8 split codes (-1 unassigned, 0 train, 1 val, 2 test)

so the file size is ``24 + L + N * (8 + 4 * 3072) + N``.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ibis.errors import ConfigurationError, FormatError, InputError

WINDOW_SHAPE = (32, 32, 3)
WINDOW_VOLUME = 32 * 32 * 3
N_ANTENNAS = 4
ZERO_BIN = 16

CLASS_NAMES_5 = ["empty", "sitting", "walking", "running", "jumping"]
CLASS_NAMES_8 = CLASS_NAMES_5 + ["standing", "stand up", "arm gym"]

SPLIT_CODES = {"train": 0, "val": 1, "test": 2}

MAGIC = b"IBDS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHIQI")
_RECORD = struct.Struct("<HBBI")


class StratificationError(InputError):
    pass


@dataclass(frozen=True)
class DopplerWindow:
    values: np.ndarray
    label: int
    antenna: int
    scenario: str
    event: int


@dataclass
class SynthConfig:
    classes: int = 5
    windows_per_class: int = 100
    noise: float = 0.3
    seed: int = 7
    outlier_rate: float = 0.1
    scenario: str = "synthetic"

    def validate(self) -> None:
        if self.classes not in (5, 8):
            raise ConfigurationError(f"classes must be one of {{5, 8}}, got {self.classes}")
        if self.windows_per_class < 1:
            raise ConfigurationError("windows_per_class must be at least 1")
        if self.noise < 0:
            raise ConfigurationError("noise amplitude must be non-negative")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ConfigurationError("outlier_rate must lie in [0, 1]")


@dataclass
class Dataset:
    values: np.ndarray  # (N, 32, 32, 3) float32
    labels: np.ndarray
    antennas: np.ndarray
    events: np.ndarray
    scenarios: np.ndarray  # per-window scenario tag
    class_names: list[str]
    seed: int = 0
    split: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.labels)
        if self.split is None:
            self.split = np.full(n, -1, dtype=np.int8)
        if len(set(self.class_names)) != len(self.class_names):
            raise InputError("class names must be unique")
        if self.values.shape != (n,) + WINDOW_SHAPE:
            raise InputError(f"window values must have shape (N, 32, 32, 3), got {self.values.shape}")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise InputError("label outside the class list")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def window(self, i: int) -> DopplerWindow:
        return DopplerWindow(self.values[i], int(self.labels[i]), int(self.antennas[i]), str(self.scenarios[i]), int(self.events[i]))

    def subset(self, mask) -> Dataset:
        mask = np.asarray(mask)
        return Dataset(
            values=self.values[mask],
            labels=self.labels[mask],
            antennas=self.antennas[mask],
            events=self.events[mask],
            scenarios=self.scenarios[mask],
            class_names=list(self.class_names),
            seed=self.seed,
            split=self.split[mask],
        )

    def antenna(self, a: int) -> Dataset:
        """Windows of one antenna, ordered by event id."""
        idx = np.flatnonzero(self.antennas == a)
        return self.subset(idx[np.argsort(self.events[idx], kind="stable")])

    def part(self, name: str) -> Dataset:
        return self.subset(self.split == SPLIT_CODES[name])


# ---------------------------------------------------------------------------
# generation

_T = np.arange(32, dtype=np.float64)[:, None]
_F = np.arange(32, dtype=np.float64)[None, :]


def _ridge(center, width: float) -> np.ndarray:
    center = np.broadcast_to(np.asarray(center, dtype=np.float64).reshape(-1, 1), (32, 1))
    return np.exp(-0.5 * ((_F - center) / width) ** 2)


def _static(level: float = 1.0) -> np.ndarray:
    out = np.zeros((32, 32))
    out[:, ZERO_BIN] = level
    out[:, ZERO_BIN - 1] = out[:, ZERO_BIN + 1] = 0.05 * level
    return out


def _envelope(t0: float, duration: float) -> np.ndarray:
    s = (_T[:, 0] - t0) / duration
    return np.where((s >= 0) & (s <= 1), np.sin(np.pi * np.clip(s, 0, 1)), 0.0)[:, None]


def class_template(label: int, rng: np.random.Generator) -> np.ndarray:
    """Noise-free (32, 32) Doppler signature of one event of class ``label``."""
    phase = rng.uniform(0, 2 * np.pi)
    stretch = rng.uniform(0.9, 1.1)
    t = _T[:, 0]
    if label == 0:  # empty
        return _static()
    if label == 1:  # sitting: brief negative low-band transient
        t0 = rng.uniform(4, 18)
        return _static(0.8) + 0.9 * _envelope(t0, 9 * stretch) * _ridge(ZERO_BIN - 3, 1.2)
    if label == 2:  # walking: mid-band periodic ridge
        return _static(0.5) + _ridge(ZERO_BIN + 7 * np.sin(2 * np.pi * t / (16 * stretch) + phase), 1.0)
    if label == 3:  # running: faster, wider, higher-band ridge
        return _static(0.4) + _ridge(ZERO_BIN + 11 * np.sin(2 * np.pi * t / (8 * stretch) + phase), 2.0)
    if label == 4:  # jumping: broadband bursts
        first = rng.uniform(0, 10)
        bursts = sum(_envelope(first + k * 10 * stretch, 3) for k in range(4))
        band = (np.abs(_F - ZERO_BIN) < 12) * 0.8
        return _static(0.6) + bursts * band
    if label == 5:  # standing: slight sway around zero Doppler
        return _static(0.9) + 0.5 * _ridge(ZERO_BIN + 2.0 * np.sin(2 * np.pi * t / (24 * stretch) + phase), 0.8)
    if label == 6:  # stand up: positive mid-band transient
        t0 = rng.uniform(2, 16)
        return _static(0.7) + _envelope(t0, 12 * stretch) * _ridge(ZERO_BIN + 5, 1.5)
    if label == 7:  # arm gym: mirrored low-band oscillation
        d = 4 * np.sin(2 * np.pi * t / (10 * stretch) + phase)
        return _static(0.7) + 0.7 * (_ridge(ZERO_BIN + d, 0.8) + _ridge(ZERO_BIN - d, 0.8))
    raise ConfigurationError(f"no template for class {label}")


def _antenna_view(template: np.ndarray, config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    gain = rng.uniform(0.8, 1.2)
    base = gain * template
    if rng.random() < config.outlier_rate:
        t0 = rng.uniform(0, 28)
        base = base + 1.2 * _envelope(t0, 4) * rng.uniform(0.2, 1.0, size=(1, 32))
    chan_gain = 1.0 + 0.1 * rng.standard_normal(3)
    views = base[:, :, None] * chan_gain + config.noise * rng.standard_normal((32, 32, 3))
    return views


def generate_synthetic_dataset(config: SynthConfig | None = None) -> Dataset:
    """Deterministic synthetic dataset: ``classes * windows_per_class`` events x 4 antennas."""
    config = config or SynthConfig()
    config.validate()
    rng = np.random.default_rng(config.seed)
    n_events = config.classes * config.windows_per_class
    n = n_events * N_ANTENNAS
    values = np.empty((n,) + WINDOW_SHAPE, dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    antennas = np.empty(n, dtype=np.int64)
    events = np.empty(n, dtype=np.int64)
    k = 0
    for event in range(n_events):
        label = event // config.windows_per_class
        template = class_template(label, rng)
        for a in range(N_ANTENNAS):
            values[k] = _antenna_view(template, config, rng)
            labels[k], antennas[k], events[k] = label, a, event
            k += 1
    names = CLASS_NAMES_5 if config.classes == 5 else CLASS_NAMES_8
    scenarios = np.full(n, config.scenario, dtype=object)
    return Dataset(values, labels, antennas, events, scenarios, list(names), seed=config.seed)


def separability_margins(dataset: Dataset, seed: int = 0, templates_per_class: int = 64) -> np.ndarray:
    """Ratio (template-mean distance / in-class spread) for every class pair.

    Class-template means come from fresh noise-free templates; the in-class
    spread is the larger standard deviation of the two classes' windows
    projected onto the line joining the two template means.  All ratios
    above 1 certify that the classes are separable at this noise level.
    """
    rng = np.random.default_rng(seed)
    k = dataset.num_classes
    means = np.stack([
        np.mean([class_template(c, rng) for _ in range(templates_per_class)], axis=0).reshape(-1)
        for c in range(k)
    ])
    # templates are single-channel; compare against the first channel view
    flat = dataset.values[..., 0].astype(np.float64).reshape(len(dataset), -1)
    ratios = np.full((k, k), np.inf)
    for a in range(k):
        for b in range(a + 1, k):
            diff = means[a] - means[b]
            dist = np.linalg.norm(diff)
            direction = diff / dist
            spread = max(
                np.std(flat[dataset.labels == a] @ direction),
                np.std(flat[dataset.labels == b] @ direction),
            )
            ratios[a, b] = ratios[b, a] = dist / spread
    return ratios


# ---------------------------------------------------------------------------
# splitting


def split_dataset(dataset: Dataset, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> np.ndarray:
    """Stratified train/val/test assignment, made per event so that all
    antennas observing one event land in the same split.

    Returns the split code array and also stores it on ``dataset``.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    split = np.full(len(dataset), -1, dtype=np.int8)
    for c in range(dataset.num_classes):
        class_events = np.unique(dataset.events[dataset.labels == c])
        if class_events.size == 0:
            continue
        if class_events.size < 3:
            raise StratificationError(
                f"class {dataset.class_names[c]!r} has {class_events.size} windows; at least 3 are needed to stratify"
            )
        order = rng.permutation(class_events)
        n = order.size
        n_train = int(round(ratios[0] * n))
        n_val = min(int(round(ratios[1] * n)), n - n_train)
        codes = np.full(n, 2, dtype=np.int8)
        codes[:n_train] = 0
        codes[n_train : n_train + n_val] = 1
        lookup = dict(zip(order.tolist(), codes.tolist()))
        for i in np.flatnonzero(dataset.labels == c):
            split[i] = lookup[int(dataset.events[i])]
    dataset.split = split
    return split


# ---------------------------------------------------------------------------
# persistence


def save_dataset(dataset: Dataset, path) -> None:
    scen_names = sorted({str(s) for s in dataset.scenarios})
    if len(scen_names) > 255:
        raise InputError("at most 255 distinct scenario tags fit the IBDS format")
    scen_index = {s: i for i, s in enumerate(scen_names)}
    meta = json.dumps({"class_names": dataset.class_names, "scenarios": scen_names}, sort_keys=True).encode("utf-8")
    n = len(dataset)
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, dataset.num_classes, n, int(dataset.seed), len(meta)), meta]
    vals = np.ascontiguousarray(dataset.values, dtype="<f4").reshape(n, -1)
    for i in range(n):
        parts.append(_RECORD.pack(int(dataset.labels[i]), int(dataset.antennas[i]),
                                  scen_index[str(dataset.scenarios[i])], int(dataset.events[i])))
        parts.append(vals[i].tobytes())
    parts.append(np.asarray(dataset.split, dtype="i1").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_dataset(path) -> Dataset:
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size:
        raise FormatError("truncated IBDS header", len(buf))
    magic, version, n_classes, n, seed, meta_len = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported IBDS version {version}", 4)
    off = _HEADER.size
    if len(buf) < off + meta_len:
        raise FormatError("truncated metadata block", len(buf))
    try:
        meta = json.loads(buf[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt metadata block: {exc}", off) from None
    off += meta_len
    rec_size = _RECORD.size + 4 * WINDOW_VOLUME
    expected = off + n * rec_size + n
    if len(buf) < expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, found {len(buf)}", len(buf))
    if len(buf) > expected:
        raise FormatError("trailing bytes after split table", expected)
    if len(meta.get("class_names", [])) != n_classes:
        raise FormatError("class name table does not match class count", _HEADER.size)
    rec_dtype = np.dtype([("label", "<u2"), ("antenna", "u1"), ("scenario", "u1"), ("event", "<u4"),
                          ("values", "<f4", (WINDOW_VOLUME,))])
    recs = np.frombuffer(buf, dtype=rec_dtype, count=n, offset=off)
    split = np.frombuffer(buf, dtype="i1", count=n, offset=off + n * rec_size).copy()
    scen_names = np.array(meta["scenarios"] or [""], dtype=object)
    if n and recs["scenario"].max() >= len(scen_names):
        raise FormatError("scenario index out of range", off)
    if n and recs["label"].max() >= n_classes:
        bad = int(np.argmax(recs["label"] >= n_classes))
        raise FormatError("label outside class table", off + bad * rec_size)
    return Dataset(
        values=recs["values"].reshape((n,) + WINDOW_SHAPE).astype(np.float32),
        labels=recs["label"].astype(np.int64),
        antennas=recs["antenna"].astype(np.int64),
        events=recs["event"].astype(np.int64),
        scenarios=scen_names[recs["scenario"].astype(np.int64)] if n else np.array([], dtype=object),
        class_names=list(meta["class_names"]),
        seed=int(seed),
        split=split,
    )


def load_dataset_csv(path, class_names, scenario: str = "csv") -> Dataset:
    """Import externally produced windows: one row per window,
    ``label, antenna, 3072 values`` in the same time/bin/channel order.

    Rows of different antennas are aligned by their order of appearance:
    the k-th row of every antenna is taken to observe event k.
    """
    labels, antennas, rows = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and not _is_number(row[0])):
                continue
            if len(row) != 2 + WINDOW_VOLUME:
                raise InputError(f"line {lineno}: expected {2 + WINDOW_VOLUME} fields, got {len(row)}")
            labels.append(int(row[0]))
            antennas.append(int(row[1]))
            rows.append(np.asarray(row[2:], dtype=np.float32))
    antennas_arr = np.asarray(antennas, dtype=np.int64)
    events = np.empty_like(antennas_arr)
    counters: dict[int, int] = {}
    for i, a in enumerate(antennas_arr.tolist()):
        events[i] = counters.get(a, 0)
        counters[a] = events[i] + 1
    values = np.stack(rows).reshape((-1,) + WINDOW_SHAPE) if rows else np.empty((0,) + WINDOW_SHAPE, np.float32)
    if not np.all(np.isfinite(values)):
        raise InputError("non-finite values in CSV windows")
    return Dataset(values, np.asarray(labels, dtype=np.int64), antennas_arr, events,
                   np.full(len(labels), scenario, dtype=object), list(class_names))


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False
