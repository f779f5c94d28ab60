"""Checkpoint persistence.

Layout (documented here and in README):

  - a human-readable ASCII header: one ``key: value`` line per config
    field, one ``tensor: <name> <dim...>`` line per parameter in
    declaration order, a ``payload_doubles: <count>`` line, then the
    single line ``end-header``;
  - immediately after the header newline, the payload: every parameter
    flattened row-major and written back-to-back as little-endian 64-bit
    floats, in the same declaration order.

Round-trips are bitwise exact: floats in the header use shortest
round-trip repr, the payload is raw IEEE754.
"""

import numpy as np

from .errors import CheckpointShapeError, ConfigError, MalformedCheckpointError
from .model import CascadeConfig, CascadeModel, LinearParams

MAGIC = "hdc-checkpoint v1"
_END = b"end-header\n"


def _fmt_floats(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


def _header_lines(model: CascadeModel):
    cfg = model.config
    lines = [
        MAGIC,
        f"levels: {cfg.levels}",
        f"input_dim: {cfg.input_dim}",
        "block_layers: " + " | ".join(", ".join(str(w) for w in lvl) for lvl in cfg.block_layers),
        "embed_dims: " + ", ".join(str(d) for d in cfg.embed_dims),
        "level_weights: " + _fmt_floats(cfg.level_weights),
        "hard_fractions: " + _fmt_floats(cfg.hard_fractions),
        f"margin: {repr(float(cfg.margin))}",
        f"seed: {cfg.seed}",
    ]
    total = 0
    for name, arr in model.named_parameters():
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"tensor: {name} {dims}")
        total += arr.size
    lines.append(f"payload_doubles: {total}")
    return lines


def save_checkpoint(model: CascadeModel, path) -> None:
    """Write header + little-endian float64 payload to `path`."""
    with open(path, "wb") as fh:
        fh.write(("\n".join(_header_lines(model)) + "\n").encode("ascii"))
        fh.write(_END)
        for _, arr in model.named_parameters():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _parse_header(text: str) -> tuple[dict, list]:
    fields = {}
    tensors = []
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC:
        raise MalformedCheckpointError("missing checkpoint magic line")
    for line in lines[1:]:
        if ":" not in line:
            raise MalformedCheckpointError(f"bad header line: {line!r}")
        key, value = line.split(":", 1)
        key, value = key.strip(), value.strip()
        if key == "tensor":
            parts = value.split()
            tensors.append((parts[0], tuple(int(d) for d in parts[1:])))
        else:
            fields[key] = value
    return fields, tensors


def _config_from_fields(fields: dict) -> CascadeConfig:
    try:
        block_layers = tuple(
            tuple(int(w) for w in lvl.split(","))
            for lvl in fields["block_layers"].split("|")
        )
        return CascadeConfig(
            levels=int(fields["levels"]),
            input_dim=int(fields["input_dim"]),
            block_layers=block_layers,
            embed_dims=tuple(int(d) for d in fields["embed_dims"].split(",")),
            level_weights=tuple(float(v) for v in fields["level_weights"].split(",")),
            hard_fractions=tuple(float(v) for v in fields["hard_fractions"].split(",")),
            margin=float(fields["margin"]),
            seed=int(fields["seed"]),
        )
    except (KeyError, ValueError) as exc:
        raise MalformedCheckpointError(f"invalid or missing header field: {exc}") from exc


def load_checkpoint(path) -> CascadeModel:
    """Rebuild a model from `path`; the inverse of save_checkpoint."""
    with open(path, "rb") as fh:
        blob = fh.read()
    marker = blob.find(_END)
    if marker < 0:
        raise MalformedCheckpointError("truncated file: no end-header marker")
    try:
        header = blob[:marker].decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedCheckpointError("header is not ASCII text") from exc
    payload = blob[marker + len(_END):]

    fields, tensors = _parse_header(header)
    try:
        config = _config_from_fields(fields)
    except ConfigError as exc:
        raise MalformedCheckpointError(str(exc)) from exc

    declared = int(fields.get("payload_doubles", -1))
    total = sum(int(np.prod(shape)) for _, shape in tensors)
    if declared != total:
        raise MalformedCheckpointError(
            f"payload_doubles {declared} does not match tensor list total {total}"
        )
    if len(payload) != 8 * total:
        raise MalformedCheckpointError(
            f"payload holds {len(payload)} bytes, expected {8 * total}"
        )

    skeleton = _expected_tensors(config)
    if [name for name, _ in tensors] != [name for name, _ in skeleton]:
        raise CheckpointShapeError("tensor names do not match the declared config")
    for (name, shape), (_, expected) in zip(tensors, skeleton):
        if shape != expected:
            raise CheckpointShapeError(f"{name}: shape {shape} != config shape {expected}")

    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    blocks, heads = [], []
    offset = 0

    def take(shape):
        nonlocal offset
        size = int(np.prod(shape))
        arr = flat[offset:offset + size].reshape(shape).copy()
        offset += size
        return arr

    for k in range(config.levels):
        layers = []
        d_in = config.block_input_dim(k)
        for width in config.block_layers[k]:
            layers.append(LinearParams(take((d_in, width)), take((width,))))
            d_in = width
        blocks.append(layers)
    for k in range(config.levels):
        d_in = config.block_layers[k][-1]
        heads.append(LinearParams(take((d_in, config.embed_dims[k])), take((config.embed_dims[k],))))
    return CascadeModel(config=config, blocks=blocks, heads=heads)


def _expected_tensors(config: CascadeConfig):
    out = []
    for k in range(config.levels):
        d_in = config.block_input_dim(k)
        for i, width in enumerate(config.block_layers[k]):
            out.append((f"blocks.{k}.{i}.weight", (d_in, width)))
            out.append((f"blocks.{k}.{i}.bias", (width,)))
            d_in = width
    for k in range(config.levels):
        d_in = config.block_layers[k][-1]
        out.append((f"heads.{k}.weight", (d_in, config.embed_dims[k])))
        out.append((f"heads.{k}.bias", (config.embed_dims[k],)))
    return out
