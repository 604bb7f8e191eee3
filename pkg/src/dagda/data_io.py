"""Matrix files, dataset directories, checkpoints and the synthetic generator.

Matrix formats (selected by file extension):

``.txt``
    First line ``rows cols``; then ``rows`` lines of whitespace separated
    values written with 17 significant digits.
``.dmat``
    ``b"DMAT"``, one version byte (1), rows and cols as little-endian uint64,
    then ``rows*cols`` little-endian float64 values in row-major order.

A dataset directory holds ``features.dmat`` (or ``.txt``), ``labels.txt`` (one
0-based class id per line), ``class_attr.dmat`` (or ``.txt``) and
``split.txt`` with the lines ``seen: ...`` and ``unseen: ...``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DatasetError,
    DimensionError,
    DimensionOverflowError,
    FormatError,
    LabelRangeError,
    MalformedHeaderError,
    MissingFileError,
    SplitOverlapError,
    TruncatedPayloadError,
)
from .graph import validate_class_attr
from .metrics import SplitSpec
from .numerics import Mat, as_mat, make_rng

DMAT_MAGIC = b"DMAT"
DMAT_VERSION = 1
_DMAT_HEADER = struct.Struct("<4sBQQ")
# Largest element count accepted when reading; 2**40 doubles is 8 TiB.
MAX_ELEMENTS = 1 << 40

CKPT_MAGIC = b"DCKP"
CKPT_VERSION = 1


# -- matrices -----------------------------------------------------------------

def encode_dmat(m: Mat) -> bytes:
    m = np.ascontiguousarray(m, dtype="<f8")
    if m.ndim != 2:
        raise DimensionError(f"can only store 2-D matrices, got shape {m.shape}")
    return _DMAT_HEADER.pack(DMAT_MAGIC, DMAT_VERSION, m.shape[0], m.shape[1]) + m.tobytes()


def decode_dmat(buf: bytes, offset: int = 0, source: str = "<bytes>") -> tuple[Mat, int]:
    """Decode one DMAT record starting at ``offset``; returns (matrix, end offset)."""
    if len(buf) - offset < _DMAT_HEADER.size:
        raise MalformedHeaderError(f"{source}: header shorter than {_DMAT_HEADER.size} bytes")
    magic, version, rows, cols = _DMAT_HEADER.unpack_from(buf, offset)
    if magic != DMAT_MAGIC:
        raise MalformedHeaderError(f"{source}: bad magic {magic!r}")
    if version != DMAT_VERSION:
        raise MalformedHeaderError(f"{source}: unsupported version {version}")
    if rows and cols and rows > MAX_ELEMENTS // cols:
        raise DimensionOverflowError(f"{source}: declared shape {rows}x{cols} is too large")
    start = offset + _DMAT_HEADER.size
    nbytes = rows * cols * 8
    if len(buf) - start < nbytes:
        raise TruncatedPayloadError(
            f"{source}: expected {nbytes} payload bytes, found {len(buf) - start}")
    m = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=start).astype(np.float64)
    return m.reshape(rows, cols), start + nbytes


def _format_kind(path: Path) -> str:
    ext = path.suffix.lower()
    if ext == ".dmat":
        return "binary"
    if ext == ".txt":
        return "text"
    raise FormatError(f"{path}: unknown matrix extension {ext!r} (use .dmat or .txt)")


def save_matrix(path, m: Mat) -> None:
    path = Path(path)
    m = np.asarray(m, dtype=np.float64)
    kind = _format_kind(path)
    if kind == "binary":
        path.write_bytes(encode_dmat(m))
        return
    if m.ndim != 2:
        raise DimensionError(f"can only store 2-D matrices, got shape {m.shape}")
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in m]
    path.write_text("\n".join(lines) + "\n")


def load_matrix(path) -> Mat:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"{path}: no such file")
    kind = _format_kind(path)
    if kind == "binary":
        buf = path.read_bytes()
        m, end = decode_dmat(buf, 0, str(path))
        if end != len(buf):
            raise FormatError(f"{path}: {len(buf) - end} trailing bytes after payload")
        return m
    return _parse_text_matrix(path.read_text(), str(path))


def _parse_text_matrix(text: str, source: str) -> Mat:
    lines = text.splitlines()
    if not lines:
        raise MalformedHeaderError(f"{source}: empty file")
    head = lines[0].split()
    if len(head) != 2:
        raise MalformedHeaderError(f"{source}: header must be 'rows cols', got {lines[0]!r}")
    try:
        rows, cols = int(head[0]), int(head[1])
    except ValueError:
        raise MalformedHeaderError(f"{source}: non-integer dimensions {lines[0]!r}") from None
    if rows < 0 or cols < 0:
        raise MalformedHeaderError(f"{source}: negative dimensions {rows}x{cols}")
    if rows and cols and rows > MAX_ELEMENTS // cols:
        raise DimensionOverflowError(f"{source}: declared shape {rows}x{cols} is too large")
    tokens = " ".join(lines[1:]).split()
    if len(tokens) != rows * cols:
        raise TruncatedPayloadError(
            f"{source}: expected {rows * cols} values for {rows}x{cols}, found {len(tokens)}")
    try:
        vals = np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None
    return vals.reshape(rows, cols)


# -- checkpoints ----------------------------------------------------------------

def save_checkpoint(path, header: dict, matrices: dict[str, Mat]) -> None:
    """Header of ``key=value`` lines followed by one DMAT record per matrix.

    Layout: ``b"DCKP"``, version byte, uint32 header length, UTF-8 header,
    uint32 record count, then for each record a uint16 name length, the name
    and the DMAT bytes.
    """
    head = "".join(f"{k}={v}\n" for k, v in header.items()).encode()
    parts = [CKPT_MAGIC, bytes([CKPT_VERSION]), struct.pack("<I", len(head)), head,
             struct.pack("<I", len(matrices))]
    for name, m in matrices.items():
        nb = name.encode()
        parts += [struct.pack("<H", len(nb)), nb, encode_dmat(m)]
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[dict[str, str], dict[str, Mat]]:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"{path}: no such checkpoint")
    buf = path.read_bytes()
    src = str(path)
    try:
        if buf[:4] != CKPT_MAGIC or buf[4] != CKPT_VERSION:
            raise MalformedHeaderError(f"{src}: not a checkpoint file")
        (hlen,) = struct.unpack_from("<I", buf, 5)
        pos = 9
        head = buf[pos:pos + hlen].decode()
        pos += hlen
        header = dict(line.split("=", 1) for line in head.splitlines() if line)
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        mats = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode()
            pos += nlen
            mats[name], pos = decode_dmat(buf, pos, f"{src}[{name}]")
    except (struct.error, IndexError, UnicodeDecodeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise TruncatedPayloadError(f"{src}: corrupt checkpoint ({exc})") from None
    return header, mats


# -- datasets -----------------------------------------------------------------

@dataclass
class Dataset:
    X: Mat
    labels: np.ndarray
    C: Mat
    split: SplitSpec
    class_names: list[str] | None = None
    attr_names: list[str] | None = None

    @property
    def num_classes(self) -> int:
        return self.C.shape[0]

    def validate(self) -> "Dataset":
        if self.X.shape[0] != self.labels.shape[0]:
            raise DatasetError(f"{self.X.shape[0]} feature rows but {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            bad = self.labels[(self.labels < 0) | (self.labels >= self.num_classes)][0]
            raise LabelRangeError(f"label {bad} outside [0, {self.num_classes})")
        self.C = validate_class_attr(self.C)
        ids = set(self.split.seen) | set(self.split.unseen)
        if any(c < 0 or c >= self.num_classes for c in ids):
            raise LabelRangeError(f"split references classes outside [0, {self.num_classes})")
        missing = set(np.unique(self.labels).tolist()) - ids
        if missing:
            raise DatasetError(f"labels {sorted(missing)} belong to neither seen nor unseen split")
        return self


def find_matrix(directory: Path, stem: str) -> Path:
    for ext in (".dmat", ".txt"):
        p = directory / f"{stem}{ext}"
        if p.exists():
            return p
    raise MissingFileError(f"{directory}: missing {stem}.dmat (or {stem}.txt)")


def parse_split(text: str, source: str = "split.txt") -> SplitSpec:
    fields = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition(":")
        key = key.strip().lower()
        if not sep or key not in ("seen", "unseen"):
            raise DatasetError(f"{source}: unexpected line {line!r}")
        try:
            fields[key] = [int(t) for t in rest.split()]
        except ValueError:
            raise DatasetError(f"{source}: non-integer class id in {line!r}") from None
    if set(fields) != {"seen", "unseen"}:
        raise DatasetError(f"{source}: needs both 'seen:' and 'unseen:' lines")
    overlap = set(fields["seen"]) & set(fields["unseen"])
    if overlap:
        raise SplitOverlapError(f"{source}: classes {sorted(overlap)} are both seen and unseen")
    return SplitSpec(seen=fields["seen"], unseen=fields["unseen"])


def format_split(split: SplitSpec) -> str:
    return ("seen: " + " ".join(map(str, split.seen)) + "\n"
            + "unseen: " + " ".join(map(str, split.unseen)) + "\n")


def _read_names(p: Path) -> list[str] | None:
    return p.read_text().splitlines() if p.exists() else None


def load_dataset(directory) -> Dataset:
    """Read and validate a dataset directory."""
    return read_dataset(directory).validate()


def read_dataset(directory) -> Dataset:
    """Read a dataset directory, checking only file-level structure."""
    d = Path(directory)
    if not d.is_dir():
        raise MissingFileError(f"{d}: dataset directory not found")
    X = load_matrix(find_matrix(d, "features"))
    C = load_matrix(find_matrix(d, "class_attr"))
    lab_path, split_path = d / "labels.txt", d / "split.txt"
    for p in (lab_path, split_path):
        if not p.exists():
            raise MissingFileError(f"{d}: missing {p.name}")
    try:
        labels = np.array([int(t) for t in lab_path.read_text().split()], dtype=np.int64)
    except ValueError:
        raise DatasetError(f"{lab_path}: labels must be integers") from None
    split = parse_split(split_path.read_text(), str(split_path))
    return Dataset(X=as_mat(X, "features"), labels=labels, C=C, split=split,
                   class_names=_read_names(d / "class_names.txt"),
                   attr_names=_read_names(d / "attr_names.txt"))


def save_dataset(directory, ds: Dataset, binary: bool = True) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ext = ".dmat" if binary else ".txt"
    save_matrix(d / f"features{ext}", ds.X)
    save_matrix(d / f"class_attr{ext}", ds.C)
    (d / "labels.txt").write_text("".join(f"{int(v)}\n" for v in ds.labels))
    (d / "split.txt").write_text(format_split(ds.split))
    if ds.class_names:
        (d / "class_names.txt").write_text("\n".join(ds.class_names) + "\n")
    if ds.attr_names:
        (d / "attr_names.txt").write_text("\n".join(ds.attr_names) + "\n")


# -- synthetic data -----------------------------------------------------------

@dataclass
class SynthConfig:
    num_classes: int = 20
    num_attrs: int = 30
    samples_per_class: int = 50
    noise: float = 0.05
    density: float = 0.5
    feature_dim: int = 64
    num_unseen: int | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.num_classes < 4:
            raise ConfigError("synthetic data needs at least 4 classes")
        if min(self.num_attrs, self.samples_per_class, self.feature_dim) < 1:
            raise ConfigError("synthetic counts must be >= 1")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        if not 0.0 < self.density <= 1.0:
            raise ConfigError("density must lie in (0, 1]")
        if self.num_unseen is not None and not 1 <= self.num_unseen < self.num_classes:
            raise ConfigError("num_unseen must leave at least one seen class")


def synth_dataset(cfg: SynthConfig) -> Dataset:
    """Binary attributes, linearly lifted class centres plus Gaussian noise.

    Class centres are ``C @ L`` for a Gaussian ``L`` of shape
    ``(num_attrs, feature_dim)`` scaled by ``1/sqrt(num_attrs)``. The last
    ``num_unseen`` classes (default ``ceil(num_classes/4)``) are unseen.
    """
    cfg.validate()
    rng = make_rng(cfg.seed)
    C = (rng.random((cfg.num_classes, cfg.num_attrs)) < cfg.density).astype(np.float64)
    # Redraw empty rows/columns until none remain.
    while True:
        rows = np.flatnonzero(C.sum(axis=1) == 0)
        cols = np.flatnonzero(C.sum(axis=0) == 0)
        if not rows.size and not cols.size:
            break
        for i in rows:
            C[i] = rng.random(cfg.num_attrs) < cfg.density
        for j in cols:
            C[:, j] = rng.random(cfg.num_classes) < cfg.density
    lift = rng.standard_normal((cfg.num_attrs, cfg.feature_dim)) / np.sqrt(cfg.num_attrs)
    centers = C @ lift
    labels = np.repeat(np.arange(cfg.num_classes), cfg.samples_per_class)
    noise = rng.standard_normal((labels.size, cfg.feature_dim)) * cfg.noise
    X = centers[labels] + noise
    n_unseen = cfg.num_unseen or math.ceil(cfg.num_classes / 4)
    split = SplitSpec(seen=list(range(cfg.num_classes - n_unseen)),
                      unseen=list(range(cfg.num_classes - n_unseen, cfg.num_classes)))
    return Dataset(X=X, labels=labels, C=C, split=split).validate()


def class_centers(cfg: SynthConfig) -> Mat:
    """Noise-free class centres of :func:`synth_dataset` with the same config."""
    noiseless = SynthConfig(**{**cfg.__dict__, "noise": 0.0, "samples_per_class": 1})
    return synth_dataset(noiseless).X
