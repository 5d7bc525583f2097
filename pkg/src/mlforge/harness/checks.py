"""Task-specific unit-test suites, derived deterministically from a plan.

The derivation rule for module checks: dimensions that belong to an
isomorphic group are checked against their allowed range only (their actual
size may vary between pipeline settings, it must merely stay consistent,
which the integration gate enforces); dimensions with a declared size are
checked exactly. Synthetic data realizes the plan verbatim, so its checks pin
every declared size.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from ..task import TaskClassification
from .plan import DataContractPlan, TensorContract
from .protocol import ProgenitorProtocol

SUITE_SCHEMA_VERSION = 1

ENTRY_POINTS = {
    "data-preparation": "prepare_data",
    "modeling": "build_model",
    "post-processing": "postprocess",
    "synthetic": "generate",
}

UNBOUNDED_DIM = (1, 10 ** 9)


@dataclass(frozen=True)
class Check:
    """One machine-interpretable assertion over a named array."""

    name: str
    kind: str  # structure | content | execution
    op: str    # rank | dim-size | dim-range | dtype | value-range | iso-equal | entry-point
    array: str | None = None
    dim: int | None = None
    expected: object | None = None
    low: float | None = None
    high: float | None = None
    members: tuple[tuple[str, int], ...] = ()

    def to_payload(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "op": self.op,
            "array": self.array,
            "dim": self.dim,
            "expected": self.expected,
            "low": self.low,
            "high": self.high,
            "members": [list(m) for m in self.members],
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "Check":
        return cls(
            name=payload["name"],
            kind=payload["kind"],
            op=payload["op"],
            array=payload.get("array"),
            dim=payload.get("dim"),
            expected=payload.get("expected"),
            low=payload.get("low"),
            high=payload.get("high"),
            members=tuple(tuple(m) for m in payload.get("members", ())),
        )


@dataclass(frozen=True)
class UnitTestSuite:
    """Per-module-kind checks plus the synthetic-data validity test."""

    domain: str
    synthetic: tuple[Check, ...]
    modules: tuple[tuple[str, tuple[Check, ...]], ...]

    def checks_for(self, kind: str) -> tuple[Check, ...]:
        if kind == "synthetic":
            return self.synthetic
        for module_kind, checks in self.modules:
            if module_kind == kind:
                return checks
        raise KeyError(kind)

    def to_payload(self, kind: str) -> dict:
        return {
            "schema_version": SUITE_SCHEMA_VERSION,
            "domain": self.domain,
            "kind": kind,
            "entry_point": ENTRY_POINTS[kind],
            "checks": [c.to_payload() for c in self.checks_for(kind)],
        }


def _tensor_checks(tensor: TensorContract, key: str, iso_refs: set[str],
                   exact_sizes: bool) -> list[Check]:
    out = [Check(name=f"{key}.rank", kind="structure", op="rank",
                 array=key, expected=tensor.rank)]
    for idx, meaning in enumerate(tensor.dim_meanings):
        ref = f"{tensor.name}.{meaning}"
        size = tensor.dim_sizes[idx] if idx < len(tensor.dim_sizes) else None
        rng = tensor.size_ranges[idx] if idx < len(tensor.size_ranges) else None
        ranged = (ref in iso_refs) and not exact_sizes
        if size is not None and not ranged:
            out.append(Check(name=f"{key}.dim[{idx}].size", kind="structure",
                             op="dim-size", array=key, dim=idx, expected=size))
        else:
            low, high = rng if rng is not None else UNBOUNDED_DIM
            out.append(Check(name=f"{key}.dim[{idx}].range", kind="structure",
                             op="dim-range", array=key, dim=idx,
                             low=low, high=high))
    out.append(Check(name=f"{key}.dtype", kind="content", op="dtype",
                     array=key, expected=tensor.dtype))
    if tensor.value_range is not None:
        out.append(Check(name=f"{key}.values", kind="content", op="value-range",
                         array=key, low=tensor.value_range[0],
                         high=tensor.value_range[1]))
    return out


def _ref_lookup(plan: DataContractPlan) -> dict[str, tuple[str, int, int]]:
    """Map 'tensor.meaning' to (side, tensor index, dim index)."""
    table: dict[str, tuple[str, int, int]] = {}
    for side in ("input", "output"):
        for t_idx, tensor in enumerate(plan.side(side)):
            for d_idx, meaning in enumerate(tensor.dim_meanings):
                table[f"{tensor.name}.{meaning}"] = (side, t_idx, d_idx)
    return table


def _iso_checks(plan: DataContractPlan, key_for: dict[str, str],
                prefix: str) -> list[Check]:
    """iso-equal checks for every group whose members all map to known arrays."""
    lookup = _ref_lookup(plan)
    out: list[Check] = []
    for g_idx, group in enumerate(plan.isomorphic_groups):
        members: list[tuple[str, int]] = []
        for ref in group:
            if ref not in lookup:
                members = []
                break
            side, t_idx, d_idx = lookup[ref]
            mapped = key_for.get(f"{side}_{t_idx}")
            if mapped is None:
                members = []
                break
            members.append((mapped, d_idx))
        if len(members) >= 2:
            out.append(Check(name=f"{prefix}.iso[{g_idx}]", kind="structure",
                             op="iso-equal", members=tuple(members)))
    return out


def _class_count(tensor: TensorContract) -> int | None:
    if tensor.dtype == "integer" and tensor.value_range is not None:
        low, high = tensor.value_range
        return int(high - low + 1)
    return None


def _prediction_contract(tensor: TensorContract,
                         classification: TaskClassification | None) -> TensorContract:
    """Shape the model's raw predictions must have for one output tensor."""
    probability = (classification is not None
                   and classification.output_format == "probability labels")
    if not probability:
        return tensor
    if classification.category == "multi-label classification":
        # Same layout, per-label probabilities instead of hard labels.
        return TensorContract(
            name=tensor.name, rank=tensor.rank, dim_meanings=tensor.dim_meanings,
            dim_sizes=tensor.dim_sizes, size_ranges=tensor.size_ranges,
            dtype="float", value_range=(0.0, 1.0),
        )
    # Single-label classification gains a trailing class axis.
    classes = _class_count(tensor)
    if not tensor.dim_meanings:  # rank-only plan: no per-dimension detail to extend
        return TensorContract(name=tensor.name, rank=tensor.rank + 1,
                              dtype="float", value_range=(0.0, 1.0))
    class_range = (classes, classes) if classes is not None else None
    return TensorContract(
        name=tensor.name,
        rank=tensor.rank + 1,
        dim_meanings=tensor.dim_meanings + ("class",),
        dim_sizes=tensor.dim_sizes + (classes,),
        size_ranges=tensor.size_ranges + (class_range,),
        dtype="float",
        value_range=(0.0, 1.0),
    )


def build_unit_tests(plan: DataContractPlan, protocol: ProgenitorProtocol,
                     classification: TaskClassification | None = None) -> UnitTestSuite:
    """Derive the full suite from (plan, protocol); pure and deterministic."""
    iso_refs = plan.isomorphic_dims()

    # Synthetic data realizes the plan verbatim: exact sizes everywhere.
    synthetic: list[Check] = []
    key_for_task: dict[str, str] = {}
    for side in ("input", "output"):
        for idx, tensor in enumerate(plan.side(side)):
            key = f"{'input' if side == 'input' else 'output'}_{idx}"
            key_for_task[f"{side}_{idx}"] = key
            synthetic.extend(_tensor_checks(tensor, key, iso_refs, exact_sizes=True))
    synthetic.extend(_iso_checks(plan, key_for_task, "synthetic"))
    synthetic.append(Check(name="synthetic.entry", kind="execution",
                           op="entry-point", expected=ENTRY_POINTS["synthetic"]))

    # Data preparation returns the task tensors it extracted from raw files;
    # isomorphic dimensions float within their ranges.
    prep: list[Check] = []
    for side in ("input", "output"):
        for idx, tensor in enumerate(plan.side(side)):
            key = key_for_task[f"{side}_{idx}"]
            prep.extend(_tensor_checks(tensor, key, iso_refs, exact_sizes=False))
    prep.extend(_iso_checks(plan, key_for_task, "data-preparation"))
    prep.append(Check(name="data-preparation.entry", kind="execution",
                      op="entry-point", expected=ENTRY_POINTS["data-preparation"]))

    # Modeling is fed synthetic inputs; its predictions must land in the
    # prediction contract, with isomorphic dimensions agreeing with the inputs.
    modeling: list[Check] = []
    key_for_model: dict[str, str] = {}
    for idx in range(len(plan.inputs)):
        key_for_model[f"input_{idx}"] = f"input_{idx}"
    for idx, tensor in enumerate(plan.outputs):
        key_for_model[f"output_{idx}"] = f"prediction_{idx}"
        contract = _prediction_contract(tensor, classification)
        modeling.extend(_tensor_checks(contract, f"prediction_{idx}", iso_refs,
                                       exact_sizes=False))
    modeling.extend(_iso_checks(plan, key_for_model, "modeling"))
    modeling.append(Check(name="modeling.entry", kind="execution",
                          op="entry-point", expected=ENTRY_POINTS["modeling"]))

    # Post-processing decodes predictions back into the task output contract.
    post: list[Check] = []
    key_for_post: dict[str, str] = {}
    for idx, tensor in enumerate(plan.outputs):
        key_for_post[f"output_{idx}"] = f"decoded_{idx}"
        post.extend(_tensor_checks(tensor, f"decoded_{idx}", iso_refs,
                                   exact_sizes=False))
    post.extend(_iso_checks(plan, key_for_post, "post-processing"))
    post.append(Check(name="post-processing.entry", kind="execution",
                      op="entry-point", expected=ENTRY_POINTS["post-processing"]))

    return UnitTestSuite(
        domain=plan.domain,
        synthetic=tuple(synthetic),
        modules=(
            ("data-preparation", tuple(prep)),
            ("modeling", tuple(modeling)),
            ("post-processing", tuple(post)),
        ),
    )
