"""Domain-level testing protocols, loaded from declarative rule files.

A protocol states the task-independent minimum every data-contract plan and
every dataset in its domain must satisfy. New domains are data additions:
drop another rule file into ``mlforge/protocols``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

PROTOCOL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SideRule:
    """Constraints on one side (input or output) of the learning task's data."""

    min_tensor_types: int = 1
    max_tensor_types: int | None = None
    rank_bounds: tuple[int, int] = (1, 6)
    required_dimensions: tuple[str, ...] = ()


@dataclass(frozen=True)
class ProgenitorProtocol:
    """Machine-checkable, task-independent rules for one task domain."""

    domain: str
    plan_scope: str  # full | rank-only
    input_rule: SideRule
    output_rule: SideRule
    allowed_dtypes: tuple[str, ...] = ("float", "integer")

    def side_rule(self, side: str) -> SideRule:
        return self.input_rule if side == "input" else self.output_rule

    def summary(self) -> str:
        """Human-readable rule digest, embedded into plan prompts."""
        lines = [f"domain: {self.domain} (plan scope: {self.plan_scope})"]
        for side in ("input", "output"):
            rule = self.side_rule(side)
            bound = "unbounded" if rule.max_tensor_types is None else rule.max_tensor_types
            lines.append(
                f"- {side}: {rule.min_tensor_types}..{bound} tensor types, "
                f"rank in [{rule.rank_bounds[0]}, {rule.rank_bounds[1]}]"
            )
            if rule.required_dimensions:
                lines.append(
                    f"  required {side} dimensions: "
                    + ", ".join(rule.required_dimensions)
                )
        lines.append("- allowed dtypes: " + ", ".join(self.allowed_dtypes))
        return "\n".join(lines)


def _parse_side(payload: dict) -> SideRule:
    return SideRule(
        min_tensor_types=payload.get("min_tensor_types", 1),
        max_tensor_types=payload.get("max_tensor_types"),
        rank_bounds=tuple(payload.get("rank_bounds", (1, 6))),
        required_dimensions=tuple(payload.get("required_dimensions", ())),
    )


def parse_protocol(payload: dict) -> ProgenitorProtocol:
    if payload.get("schema_version") != PROTOCOL_SCHEMA_VERSION:
        raise ValueError(
            f"unsupported protocol schema version: {payload.get('schema_version')!r}"
        )
    return ProgenitorProtocol(
        domain=payload["domain"],
        plan_scope=payload.get("plan_scope", "full"),
        input_rule=_parse_side(payload.get("input", {})),
        output_rule=_parse_side(payload.get("output", {})),
        allowed_dtypes=tuple(payload.get("allowed_dtypes", ("float", "integer"))),
    )


def load_protocol(domain: str) -> ProgenitorProtocol:
    """Load the shipped rule file for a domain (tabular, cv, nlp)."""
    try:
        text = resources.files("mlforge.protocols").joinpath(f"{domain}.json").read_text(
            encoding="utf-8"
        )
    except FileNotFoundError as exc:
        raise KeyError(f"no protocol rule file for domain {domain!r}") from exc
    return parse_protocol(json.loads(text))
