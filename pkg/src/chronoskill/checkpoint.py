"""Versioned plain-text checkpoints.

Layout::

    chronoskill-ckpt v1
    config <key> = <value>            (one line per RunConfig field)
    tensor <name> <ndim> <dims...> <values...>
    end <number of tensor records>

Values are written with ``repr`` so they parse back to the same bits.
"""

from __future__ import annotations

import os
from dataclasses import replace

import numpy as np

from .config import RunConfig, dumps_config, loads_config
from .errors import DimensionError, FormatError, UnsupportedVersionError
from .policy import Policy, build_policy
from .ppo import ValueNet, build_value_net

MAGIC = "chronoskill-ckpt"
VERSION = "v1"


def build_agent(config: RunConfig, policy_seed: int | None = None, value_seed: int = 0):
    """Fresh policy and critic; ``policy_seed`` overrides ``config.policy.seed``."""
    policy_config = config.policy if policy_seed is None else replace(config.policy, seed=policy_seed)
    policy = build_policy(policy_config)
    value_net = build_value_net(config.policy.obs_dim, config.policy.variant, config.policy.horizon,
                                config.policy.trunk_widths, value_seed)
    return policy, value_net


def _tensor_line(name: str, arr: np.ndarray) -> str:
    dims = " ".join(str(d) for d in arr.shape)
    values = " ".join(repr(float(v)) for v in arr.ravel())
    return f"tensor {name} {arr.ndim} {dims} {values}".rstrip() + "\n"


def save_checkpoint(policy: Policy, value_net: ValueNet, config: RunConfig, path) -> None:
    tensors = {**policy.named_parameters(), **value_net.named_parameters()}
    lines = [f"{MAGIC} {VERSION}\n"]
    lines += [f"config {line}\n" for line in dumps_config(config).splitlines()]
    lines += [_tensor_line(name, t.data) for name, t in tensors.items()]
    lines.append(f"end {len(tensors)}\n")
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.writelines(lines)
    os.replace(tmp, path)


def _parse_tensor(fields: list[str], lineno: int):
    try:
        name, ndim = fields[0], int(fields[1])
        dims = tuple(int(d) for d in fields[2:2 + ndim])
        values = np.array([float(v) for v in fields[2 + ndim:]], dtype=np.float64)
    except (IndexError, ValueError):
        raise FormatError(f"line {lineno}: malformed tensor record") from None
    if len(dims) != ndim or values.size != int(np.prod(dims)):
        raise FormatError(f"line {lineno}: tensor {name!r} has {values.size} values for shape {dims}")
    return name, values.reshape(dims)


def load_checkpoint(path):
    """Return ``(policy, value_net, config)`` restored from ``path``."""
    try:
        with open(path) as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    header = lines[0].split()
    if len(header) != 2 or header[0] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (header {lines[0]!r})")
    if header[1] != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported checkpoint version {header[1]!r}")

    config_lines, tensors, count = [], {}, None
    for lineno, line in enumerate(lines[1:], 2):
        if not line:
            continue
        kind, _, rest = line.partition(" ")
        if count is not None:
            raise FormatError(f"{path}:{lineno}: data after end record")
        if kind == "config":
            config_lines.append(rest)
        elif kind == "tensor":
            name, arr = _parse_tensor(rest.split(" "), lineno)
            tensors[name] = arr
        elif kind == "end":
            try:
                count = int(rest)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: malformed end record") from None
        else:
            raise FormatError(f"{path}:{lineno}: unknown record {kind!r}")
    if count is None or count != len(tensors):
        raise FormatError(f"{path}: truncated checkpoint (missing or inconsistent end record)")

    config = loads_config("\n".join(config_lines))
    policy, value_net = build_agent(config)
    expected = {**policy.named_parameters(), **value_net.named_parameters()}
    if set(expected) != set(tensors):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise FormatError(f"{path}: tensor set mismatch, missing {missing}, unexpected {extra}")
    for name, t in expected.items():
        if tensors[name].shape != t.shape:
            raise DimensionError(f"{path}: tensor {name!r} has shape {tensors[name].shape}, expected {t.shape}")
        t.data = tensors[name]
    return policy, value_net, config
