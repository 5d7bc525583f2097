"""Data-contract plans: what flows between modules, and plan verification."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .. import prompts
from ..backend import Session
from ..errors import PlanRejectedError
from ..task import TaskDescription
from .protocol import ProgenitorProtocol

PLAN_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TensorContract:
    """Shape and content constraints for one tensor type of the task data.

    Rank-only plans (tabular) leave the per-dimension tuples empty; full plans
    carry one meaning and one size entry per dimension. ``size_ranges`` holds
    the allowed interval per dimension (None meaning unconstrained), and
    ``value_range`` bounds element values when declared.
    """

    name: str
    rank: int
    dim_meanings: tuple[str, ...] = ()
    dim_sizes: tuple[int | None, ...] = ()
    size_ranges: tuple[tuple[int, int] | None, ...] = ()
    dtype: str = "float"
    value_range: tuple[float, float] | None = None

    def dim_index(self, meaning: str) -> int:
        return self.dim_meanings.index(meaning)


@dataclass(frozen=True)
class DataContractPlan:
    """The full inter-module data contract for one task."""

    domain: str
    inputs: tuple[TensorContract, ...]
    outputs: tuple[TensorContract, ...]
    isomorphic_groups: tuple[tuple[str, ...], ...] = ()

    def side(self, side: str) -> tuple[TensorContract, ...]:
        return self.inputs if side == "input" else self.outputs

    def isomorphic_dims(self) -> set[str]:
        """All 'tensor.meaning' references that belong to some isomorphic group."""
        refs: set[str] = set()
        for group in self.isomorphic_groups:
            refs.update(group)
        return refs

    def summary(self) -> str:
        """Compact text rendering embedded into module instructions."""
        lines = [f"domain: {self.domain}"]
        for side in ("input", "output"):
            for tensor in self.side(side):
                if tensor.dim_meanings:
                    dims = ", ".join(
                        f"{meaning}={size if size is not None else '?'}"
                        for meaning, size in zip(tensor.dim_meanings, tensor.dim_sizes)
                    )
                    shape = f"({dims})"
                else:
                    shape = f"rank {tensor.rank}"
                extra = f", dtype {tensor.dtype}"
                if tensor.value_range is not None:
                    extra += f", values in [{tensor.value_range[0]}, {tensor.value_range[1]}]"
                lines.append(f"- {side} tensor '{tensor.name}': {shape}{extra}")
        for group in self.isomorphic_groups:
            lines.append("- isomorphic dimensions: " + " = ".join(group))
        return "\n".join(lines)

    def as_dict(self) -> dict:
        def tensor_payload(tensor: TensorContract) -> dict:
            return {
                "name": tensor.name,
                "rank": tensor.rank,
                "dims": [
                    {
                        "meaning": meaning,
                        "size": size,
                        "range": list(rng) if rng is not None else None,
                    }
                    for meaning, size, rng in zip(
                        tensor.dim_meanings, tensor.dim_sizes, tensor.size_ranges
                    )
                ],
                "dtype": tensor.dtype,
                "value_range": list(tensor.value_range)
                if tensor.value_range is not None
                else None,
            }

        return {
            "schema_version": PLAN_SCHEMA_VERSION,
            "domain": self.domain,
            "inputs": [tensor_payload(t) for t in self.inputs],
            "outputs": [tensor_payload(t) for t in self.outputs],
            "isomorphic_groups": [list(g) for g in self.isomorphic_groups],
        }


def _parse_tensor(payload: Mapping) -> TensorContract:
    dims = payload.get("dims") or []
    meanings = []
    sizes = []
    ranges = []
    for dim in dims:
        meanings.append(str(dim["meaning"]))
        sizes.append(dim.get("size"))
        rng = dim.get("range")
        ranges.append(tuple(rng) if rng is not None else None)
    value_range = payload.get("value_range")
    return TensorContract(
        name=str(payload["name"]),
        rank=int(payload["rank"]),
        dim_meanings=tuple(meanings),
        dim_sizes=tuple(sizes),
        size_ranges=tuple(ranges),
        dtype=payload.get("dtype", "float"),
        value_range=tuple(value_range) if value_range is not None else None,
    )


def parse_plan(payload: Mapping) -> DataContractPlan:
    """Build a plan from its JSON wire form (backend response or file)."""
    return DataContractPlan(
        domain=str(payload.get("domain", "")),
        inputs=tuple(_parse_tensor(t) for t in payload.get("inputs", [])),
        outputs=tuple(_parse_tensor(t) for t in payload.get("outputs", [])),
        isomorphic_groups=tuple(
            tuple(str(ref) for ref in group)
            for group in payload.get("isomorphic_groups", [])
        ),
    )


def _normalize(label: str) -> str:
    return label.strip().lower()


def _verify_tensor(tensor: TensorContract, side: str,
                   protocol: ProgenitorProtocol) -> list[str]:
    rule = protocol.side_rule(side)
    where = f"{side} tensor '{tensor.name}'"
    out: list[str] = []
    low, high = rule.rank_bounds
    if not (low <= tensor.rank <= high):
        out.append(f"{where}: rank {tensor.rank} outside [{low}, {high}]")
    if tensor.dtype not in protocol.allowed_dtypes:
        out.append(f"{where}: dtype {tensor.dtype!r} not allowed")
    if protocol.plan_scope == "rank-only":
        if tensor.dim_meanings or any(s is not None for s in tensor.dim_sizes):
            out.append(
                f"{where}: rank-only plans must not declare dimension details"
            )
        return out
    if len(tensor.dim_meanings) != tensor.rank:
        out.append(
            f"{where}: {len(tensor.dim_meanings)} dimension meanings for rank {tensor.rank}"
        )
        return out
    seen: set[str] = set()
    for idx, meaning in enumerate(tensor.dim_meanings):
        norm = _normalize(meaning)
        if norm in seen:
            out.append(f"{where}: duplicate dimension meaning '{meaning}'")
        seen.add(norm)
        size = tensor.dim_sizes[idx] if idx < len(tensor.dim_sizes) else None
        rng = tensor.size_ranges[idx] if idx < len(tensor.size_ranges) else None
        if rng is not None:
            if rng[0] > rng[1] or rng[0] < 1:
                out.append(f"{where}: dimension '{meaning}' has a malformed size range {rng}")
            elif size is not None and not (rng[0] <= size <= rng[1]):
                out.append(
                    f"{where}: dimension '{meaning}' size {size} outside range {rng}"
                )
        if size is not None and size < 1:
            out.append(f"{where}: dimension '{meaning}' size must be >= 1")
    return out


def verify_plan(plan: DataContractPlan, protocol: ProgenitorProtocol) -> list[str]:
    """All protocol violations of a plan; empty list means the plan conforms.

    Pure and deterministic: same plan and protocol always produce the same
    violation list.
    """
    violations: list[str] = []
    if plan.domain != protocol.domain:
        violations.append(
            f"plan domain {plan.domain!r} does not match protocol domain {protocol.domain!r}"
        )
    for side in ("input", "output"):
        tensors = plan.side(side)
        rule = protocol.side_rule(side)
        if len(tensors) < rule.min_tensor_types:
            violations.append(
                f"{side} side declares {len(tensors)} tensor types, "
                f"minimum is {rule.min_tensor_types}"
            )
        if rule.max_tensor_types is not None and len(tensors) > rule.max_tensor_types:
            violations.append(
                f"{side} side declares {len(tensors)} tensor types, "
                f"maximum is {rule.max_tensor_types}"
            )
        names: set[str] = set()
        for tensor in tensors:
            if tensor.name in names:
                violations.append(f"duplicate tensor name '{tensor.name}' on {side} side")
            names.add(tensor.name)
            violations.extend(_verify_tensor(tensor, side, protocol))
        if protocol.plan_scope == "full":
            for required in rule.required_dimensions:
                want = _normalize(required)
                found = any(
                    want in _normalize(meaning)
                    for tensor in tensors
                    for meaning in tensor.dim_meanings
                )
                if not found:
                    violations.append(
                        f"{side} side is missing a required '{required}' dimension"
                    )

    known_refs = {
        f"{tensor.name}.{meaning}"
        for tensor in plan.inputs + plan.outputs
        for meaning in tensor.dim_meanings
    }
    for group in plan.isomorphic_groups:
        if len(group) < 2:
            violations.append(f"isomorphic group {list(group)} needs at least two members")
        declared_sizes: set[int] = set()
        for ref in group:
            if ref not in known_refs:
                violations.append(
                    f"isomorphic group references unknown dimension '{ref}'"
                )
                continue
            tensor_name, meaning = ref.split(".", 1)
            for tensor in plan.inputs + plan.outputs:
                if tensor.name == tensor_name:
                    idx = tensor.dim_index(meaning)
                    size = tensor.dim_sizes[idx] if idx < len(tensor.dim_sizes) else None
                    if size is not None:
                        declared_sizes.add(size)
        if len(declared_sizes) > 1:
            violations.append(
                f"isomorphic group {list(group)} declares conflicting sizes "
                f"{sorted(declared_sizes)}"
            )
    return violations


def devise_plan(session: Session, task: TaskDescription,
                protocol: ProgenitorProtocol, max_rounds: int = 4) -> DataContractPlan:
    """Ask the backend for a plan, re-prompting with violations until allowed."""
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    prompt = prompts.render(
        "plan",
        task_text=task.text,
        protocol_summary=protocol.summary(),
        domain=protocol.domain,
    )
    violations: list[str] = []
    for _ in range(max_rounds):
        response = session.ask(prompt)
        try:
            plan = parse_plan(prompts.extract_json_block(response))
        except (ValueError, KeyError, TypeError) as exc:
            violations = [f"unparseable plan response: {exc}"]
            prompt = prompts.render("plan_repair", violations="\n".join(violations))
            continue
        violations = verify_plan(plan, protocol)
        if not violations:
            return plan
        prompt = prompts.render("plan_repair", violations="\n".join(violations))
    raise PlanRejectedError(violations, max_rounds)
