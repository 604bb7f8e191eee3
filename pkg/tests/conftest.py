import shutil
import struct
from pathlib import Path

import numpy as np
import pytest

from dagda.numerics import make_rng


def random_class_attr(rng, dc, dt, density=0.4):
    """Nonnegative real weights with every row and column nonzero."""
    C = rng.uniform(0.1, 2.0, size=(dc, dt)) * (rng.random((dc, dt)) < density)
    for i in range(dc):
        C[i, rng.integers(dt)] = rng.uniform(0.1, 2.0)
    for j in range(dt):
        C[rng.integers(dc), j] = rng.uniform(0.1, 2.0)
    return C


@pytest.fixture
def rng():
    return make_rng(20240601)


@pytest.fixture
def small_C(rng):
    return random_class_attr(rng, 5, 7)


TINY = Path(__file__).parent / "data" / "tiny"


def malformed_datasets(root: Path) -> list[tuple[str, Path, type]]:
    """Copies of the tiny dataset, each broken in one way, with the error it must raise."""
    from dagda import errors
    from dagda.data_io import encode_dmat

    def variant(name, edit):
        d = root / name
        shutil.copytree(TINY, d)
        edit(d)
        return d

    def write(name):
        return lambda text: (lambda d: (d / name).write_text(text))

    def binary_features(blob_fn):
        def edit(d):
            (d / "features.txt").unlink()
            (d / "features.dmat").write_bytes(blob_fn(encode_dmat(np.ones((12, 4)))))
        return edit

    return [
        ("missing_labels", variant("missing_labels", lambda d: (d / "labels.txt").unlink()),
         errors.MissingFileError),
        ("label_out_of_range", variant("label_out_of_range", write("labels.txt")(
            "0\n0\n1\n1\n2\n2\n3\n3\n4\n4\n5\n6\n")), errors.LabelRangeError),
        ("overlapping_split", variant("overlapping_split", write("split.txt")(
            "seen: 0 1 2 3 4\nunseen: 4 5\n")), errors.SplitOverlapError),
        ("truncated_payload", variant("truncated_payload", binary_features(lambda b: b[:-8])),
         errors.TruncatedPayloadError),
        ("bad_magic", variant("bad_magic", binary_features(lambda b: b"DMAX" + b[4:])),
         errors.MalformedHeaderError),
        ("dimension_overflow", variant("dimension_overflow", binary_features(
            lambda b: b[:5] + struct.pack("<QQ", 2**40, 2**40) + b[21:])),
         errors.DimensionOverflowError),
    ]
