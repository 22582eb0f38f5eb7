"""Dataset loading (IDX, CSV) and synthetic generators."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError
from .apoptosis import detect_candidates
from .network import Activation, Layer, Network, predict

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ContractError(f"features {x.shape} and labels {y.shape} do not line up")
        if x.shape[0] < 1:
            raise ContractError("dataset is empty")
        if not np.all(np.isfinite(x)):
            raise ContractError("features contain non-finite values")
        if y.min() < 0 or y.max() >= self.class_count:
            raise ContractError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.features[:n], self.labels[:n], self.class_count)

    def targets(self, binary_output: bool = False) -> np.ndarray:
        """One-hot targets, or a single 0/1 column for one-logit binary nets."""
        if binary_output:
            return self.labels.astype(np.float64)[:, None]
        t = np.zeros((len(self), self.class_count))
        t[np.arange(len(self)), self.labels] = 1.0
        return t


def _read_bytes(path: "str | Path") -> bytes:
    path = Path(path)
    with (gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")) as fh:
        return fh.read()


def _idx_header(data: bytes, magic: int, ndims: int, what: str) -> tuple[int, ...]:
    need = 4 * (1 + ndims)
    if len(data) < need:
        raise FormatError(f"{what} file truncated in header ({len(data)} bytes)", offset=len(data))
    found = struct.unpack_from(">I", data, 0)[0]
    if found != magic:
        raise FormatError(f"{what} file has magic 0x{found:08x}, expected 0x{magic:08x}", offset=0)
    return struct.unpack_from(">" + "I" * ndims, data, 4)


def load_idx(image_path: "str | Path", label_path: "str | Path", normalize: bool = True) -> Dataset:
    """Read an IDX image/label pair (optionally gzipped), flattening images row-major."""
    img = _read_bytes(image_path)
    lab = _read_bytes(label_path)
    count, rows, cols = _idx_header(img, IDX_IMAGES_MAGIC, 3, "image")
    (n_labels,) = _idx_header(lab, IDX_LABELS_MAGIC, 1, "label")
    if count != n_labels:
        raise FormatError(f"image count {count} does not match label count {n_labels}", offset=4)
    d = rows * cols
    if len(img) < 16 + count * d:
        raise FormatError(f"image payload truncated: need {count * d} bytes, have {len(img) - 16}", offset=len(img))
    if len(lab) < 8 + count:
        raise FormatError(f"label payload truncated: need {count} bytes, have {len(lab) - 8}", offset=len(lab))
    x = np.frombuffer(img, dtype=np.uint8, count=count * d, offset=16).reshape(count, d).astype(np.float64)
    if normalize:
        x /= 255.0
    y = np.frombuffer(lab, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    classes = max(int(y.max()) + 1, 10) if count else 10
    return Dataset(x, y, classes)


def load_csv(
    path: "str | Path",
    label_column: str = "first",
    binary: bool = False,
    skip_header: bool = False,
    standardize: bool = False,
) -> Dataset:
    """Numeric CSV with one label column (``first`` or ``last``)."""
    if label_column not in ("first", "last"):
        raise ContractError(f"label_column must be 'first' or 'last', got {label_column!r}")
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for rownum, row in enumerate(reader, start=1):
            if skip_header and rownum == 1:
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise FormatError(f"need at least 2 columns, found {width}", offset=rownum)
            elif len(row) != width:
                raise FormatError(f"expected {width} cells, found {len(row)}", offset=rownum)
            values = []
            for colnum, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise FormatError(f"non-numeric cell {cell!r}", offset=rownum, column=colnum) from None
            rows.append(values)
    if not rows:
        raise FormatError("CSV file has no data rows", offset=0)
    table = np.asarray(rows)
    lab_idx = 0 if label_column == "first" else width - 1
    raw = table[:, lab_idx]
    feats = np.delete(table, lab_idx, axis=1)
    if not np.all(np.isfinite(feats)):
        r, c = np.argwhere(~np.isfinite(feats))[0]
        raise FormatError("non-finite feature value", offset=int(r) + 1 + int(skip_header), column=int(c) + 1)
    bad = (raw != np.round(raw)) | (raw < 0)
    if binary:
        bad |= raw > 1
    if bad.any():
        r = int(np.argmax(bad))
        kind = "binary" if binary else "class"
        raise FormatError(f"invalid {kind} label {raw[r]!r}", offset=r + 1 + int(skip_header), column=lab_idx + 1)
    labels = raw.astype(np.int64)
    if standardize:
        mu = feats.mean(axis=0)
        sd = feats.std(axis=0)
        feats = (feats - mu) / np.where(sd > 0, sd, 1.0)
    classes = 2 if binary else int(labels.max()) + 1
    return Dataset(feats, labels, max(classes, 2))


def save_csv(ds: Dataset, path: "str | Path") -> None:
    """Write ``label,feature...`` rows with round-trippable floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for y, row in zip(ds.labels, ds.features):
            w.writerow([int(y)] + [repr(float(v)) for v in row])


# -- synthetic data -------------------------------------------------------------

def gen_planted_teacher(
    d: int,
    n: int,
    k: int,
    activation: "Activation | str" = Activation.SIGMOID,
    samples: int = 1000,
    seed: int = 0,
    classes: int = 2,
    alpha: float | None = None,
    isolate_factor: float | None = None,
    max_attempts: int = 200,
) -> tuple[Network, Dataset]:
    """Random ``d-n-classes`` teacher whose hidden layer holds ``k`` planted pairs.

    Pair partners are exact copies (sigmoid) or positive multiples with scale
    drawn in [0.5, 2] (relu, or ``alpha`` if given). Inputs are uniform in
    [-1, 1]^d and labelled by the teacher's argmax. Output biases are set to
    minus each logit's sample mean, which keeps the classes populated.

    With ``isolate_factor`` the teacher is redrawn until the planted pairs are
    the only merge candidates at that factor.
    """
    act = Activation.parse(activation)
    if act == Activation.LINEAR:
        raise ContractError("teacher hidden layer must be sigmoid or relu")
    if k < 0 or 2 * k > n:
        raise ContractError(f"cannot plant {k} pairs in a layer of {n} neurons (need 2k <= n)")
    if d < 1 or samples < 1 or classes < 2:
        raise ContractError("d, samples must be >= 1 and classes >= 2")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        teacher, pairs = _draw_teacher(rng, d, n, k, act, classes, alpha)
        if isolate_factor is None or _isolated(teacher, pairs, isolate_factor):
            break
    else:
        raise ContractError(f"could not isolate planted pairs at factor {isolate_factor} in {max_attempts} draws")
    x = rng.uniform(-1.0, 1.0, size=(samples, d))
    # centre each logit on the sample so no class wins everywhere
    out = teacher.layers[1]
    out.weights[:, -1] = -np.mean(predict(teacher, x), axis=0)
    labels = np.argmax(predict(teacher, x), axis=1)
    return teacher, Dataset(x, labels, classes)


def _draw_teacher(rng, d, n, k, act, classes, alpha):
    V = rng.normal(0.0, 1.0, size=(n, d + 1))
    W = rng.normal(0.0, 1.0, size=(classes, n + 1))
    W[:, -1] = 0.0
    pairs = []
    for p in range(k):
        i, j = 2 * p, 2 * p + 1
        if act == Activation.SIGMOID:
            V[j] = V[i]
        else:
            a = float(alpha) if alpha is not None else float(rng.uniform(0.5, 2.0))
            V[j] = a * V[i]
        pairs.append((i, j))
    return Network([Layer(V, act), Layer(W, Activation.LINEAR)]), pairs


def _isolated(teacher: Network, pairs, f: float) -> bool:
    found = {(c.survivor, c.removed) for c in detect_candidates(teacher, 0, f)}
    return found == set(pairs)


def gen_abs_dataset(samples: int, seed: int = 0) -> Dataset:
    """Scalar inputs in [-1, 1] labelled ``|x| > 0.5``."""
    if samples < 2:
        raise ContractError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(samples, 1))
    return Dataset(x, (np.abs(x[:, 0]) > 0.5).astype(np.int64), 2)
