"""Model file format.

A model file is an ASCII header followed by a raw float64 payload::

    GAUSSMC-MODEL\\n
    version=1\\n
    dim=<N>\\n
    dtype=<f8\\n
    <key>=<value>\\n        zero or more metadata lines (config echo, ids)
    end_header\\n
    <N little-endian doubles: mean>
    <N*N little-endian doubles: covariance, row-major>

Header values never contain newlines; ``labels`` holds a JSON list of the
item identifiers. Readers reject a payload whose length is not exactly
``8 * (N + N*N)`` bytes.
"""
import json

import numpy as np

from .errors import ParseError
from .gaussian import GaussianModel

MAGIC = b"GAUSSMC-MODEL"
VERSION = 1
_RESERVED = {"version", "dim", "dtype"}


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return json.dumps(list(value), separators=(",", ":"))
    return str(value)


def save_model(path, model, meta=None, labels=None):
    """Write ``model`` with ``meta`` echoed as header lines.

    Keys are written in sorted order so identical inputs give identical
    bytes.
    """
    meta = dict(meta or {})
    if labels is not None:
        if len(labels) != model.dim:
            raise ValueError("one label per model coordinate is required")
        meta["labels"] = list(labels)
    lines = [MAGIC.decode(), f"version={VERSION}", f"dim={model.dim}", "dtype=<f8"]
    for key in sorted(meta):
        if key in _RESERVED or "=" in key or "\n" in key:
            raise ValueError(f"invalid metadata key {key!r}")
        text = _fmt(meta[key])
        if "\n" in text:
            raise ValueError(f"metadata value for {key!r} contains a newline")
        lines.append(f"{key}={text}")
    lines.append("end_header")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(model.mean.astype("<f8").tobytes())
        fh.write(model.cov.astype("<f8").tobytes())


def load_model(path):
    """Read a model file.

    Returns
    -------
    model : GaussianModel
    meta : dict of str
        Header metadata other than the reserved keys; ``labels`` is decoded
        to a list.
    """
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise ParseError(f"cannot read model file: {exc.strerror or exc}", path) from exc
    with fh:
        if fh.readline().rstrip(b"\n") != MAGIC:
            raise ParseError("not a gaussmc model file", path, 1)
        meta = {}
        lineno = 1
        while True:
            raw = fh.readline()
            lineno += 1
            if not raw:
                raise ParseError("missing end_header", path, lineno)
            line = raw.decode("utf-8").rstrip("\n")
            if line == "end_header":
                break
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError(f"malformed header line {line!r}", path, lineno)
            meta[key] = value
        payload = fh.read()
    if meta.pop("version", None) != str(VERSION):
        raise ParseError("unsupported model file version", path)
    if meta.pop("dtype", None) != "<f8":
        raise ParseError("unsupported payload dtype", path)
    try:
        n = int(meta.pop("dim"))
    except (KeyError, ValueError):
        raise ParseError("missing or invalid dim", path) from None
    if len(payload) != 8 * (n + n * n):
        raise ParseError(f"payload has {len(payload)} bytes, expected {8 * (n + n * n)}", path)
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if "labels" in meta:
        meta["labels"] = json.loads(meta["labels"])
    return GaussianModel(values[:n], values[n:].reshape(n, n)), meta
