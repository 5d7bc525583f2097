"""Synthetic datasets from data-contract plan documents.

The plan document is the shared JSON interface: tensors with ranks, dimension
meanings/sizes/ranges, dtypes, value ranges, and isomorphic dimension groups.
Arrays are emitted in npz form under ``input_i`` / ``output_i`` keys, the
layout every module runner reads.
"""
from __future__ import annotations

import io
from pathlib import Path
from typing import Mapping

import numpy as np

DEFAULT_DIM_SIZE = 16


class UnsatisfiablePlanError(ValueError):
    """The plan's constraints cannot be realized; the message names them."""


def _resolve_group_sizes(plan: Mapping) -> dict[str, int]:
    """One concrete size per isomorphic-group member reference."""
    sizes: dict[str, int] = {}
    tensors = list(plan.get("inputs", [])) + list(plan.get("outputs", []))
    by_ref = {}
    for tensor in tensors:
        for dim in tensor.get("dims") or []:
            by_ref[f"{tensor['name']}.{dim['meaning']}"] = dim
    for group in plan.get("isomorphic_groups", []):
        declared = {}
        for ref in group:
            if ref not in by_ref:
                raise UnsatisfiablePlanError(
                    f"isomorphic group member '{ref}' does not exist")
            size = by_ref[ref].get("size")
            if size is not None:
                declared[ref] = int(size)
        if len(set(declared.values())) > 1:
            raise UnsatisfiablePlanError(
                f"isomorphic group {list(group)} declares conflicting sizes "
                f"{sorted(set(declared.values()))}")
        if declared:
            value = next(iter(declared.values()))
        else:
            value = DEFAULT_DIM_SIZE
        for ref in group:
            sizes[ref] = value
    return sizes


def _dim_size(tensor_name: str, dim: Mapping, group_sizes: dict[str, int]) -> int:
    ref = f"{tensor_name}.{dim['meaning']}"
    if ref in group_sizes:
        size = group_sizes[ref]
    elif dim.get("size") is not None:
        size = int(dim["size"])
    elif dim.get("range"):
        low, high = dim["range"]
        size = int(min(max(DEFAULT_DIM_SIZE, low), high))
    else:
        size = DEFAULT_DIM_SIZE
    rng = dim.get("range")
    if rng and not (rng[0] <= size <= rng[1]):
        raise UnsatisfiablePlanError(
            f"dimension '{ref}' size {size} falls outside its range {rng}")
    return size


def _tensor_array(tensor: Mapping, group_sizes: dict[str, int],
                  rng: np.random.Generator) -> np.ndarray:
    dims = tensor.get("dims") or []
    if dims:
        if len(dims) != int(tensor["rank"]):
            raise UnsatisfiablePlanError(
                f"tensor '{tensor['name']}' declares {len(dims)} dimensions "
                f"for rank {tensor['rank']}")
        shape = tuple(_dim_size(tensor["name"], d, group_sizes) for d in dims)
    else:
        shape = tuple([DEFAULT_DIM_SIZE] * int(tensor["rank"]))
    dtype = tensor.get("dtype", "float")
    value_range = tensor.get("value_range")
    if dtype == "integer":
        low, high = value_range if value_range else (0, 9)
        return rng.integers(int(low), int(high) + 1, size=shape)
    if value_range:
        low, high = value_range
        return rng.uniform(low, high, size=shape)
    return rng.normal(size=shape)


def make_synthetic_dataset(plan: Mapping, seed: int,
                           out_path: str | Path | None = None) -> dict[str, np.ndarray]:
    """Arrays realizing the plan, deterministic per seed.

    Writes an npz file when ``out_path`` is given and always returns the
    array dict keyed ``input_i`` / ``output_i``.
    """
    rng = np.random.default_rng(seed)
    group_sizes = _resolve_group_sizes(plan)
    arrays: dict[str, np.ndarray] = {}
    for side, prefix in (("inputs", "input"), ("outputs", "output")):
        for index, tensor in enumerate(plan.get(side, [])):
            arrays[f"{prefix}_{index}"] = _tensor_array(tensor, group_sizes, rng)
    if out_path is not None:
        buffer = io.BytesIO()
        np.savez(buffer, **arrays)
        Path(out_path).write_bytes(buffer.getvalue())
    return arrays
