"""Binary grid files: one JSON header line, then little-endian f64 samples."""
import json

import numpy as np

from .core import Box, Grid3


def write_grid(path, g: Grid3):
    ncomp = 3 if g.is_vector else 1
    header = {"dims": list(g.box.shape), "box": list(g.box.half), "field": g.name,
              "dtype": "f64", "components": ncomp}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(g.data, dtype="<f8").tobytes(order="C"))


def read_grid(path) -> Grid3:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        raw = fh.read()
    if header.get("dtype") != "f64":
        raise ValueError("only f64 payloads are supported")
    shape = tuple(header["dims"])
    if header["components"] != 1:
        shape = (header["components"],) + shape
    data = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(float)
    return Grid3(Box(tuple(header["box"]), tuple(header["dims"])), data, header["field"])
