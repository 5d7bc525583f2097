"""Zero-cost proxy collection, ranking, filtering, and stability analysis.

The proxy mathematics runs in an external probe process (request and result
documents are the shared, schema-versioned interface); this module never
loads a model itself. All four default proxies are treated higher-is-better
(compute and capacity read as favorable signals); the orientation is recorded
in the matrix so the convention stays auditable.
"""
from __future__ import annotations

import json
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from scipy.stats import rankdata

from .generation import ModuleArtifact
from .harness.sandbox import SandboxRequest, make_input_files, run_sandbox
from .task import ModuleStage, SearchSpace

PROXY_KINDS = ("flops", "params", "naswot", "synflow")
PROBE_SCHEMA_VERSION = 1

DEFAULT_ORIENTATION = {kind: "higher-better" for kind in PROXY_KINDS}


@dataclass(frozen=True)
class ProxyScoreMatrix:
    """Per-candidate proxy scores (orientation already applied)."""

    candidate_ids: tuple[str, ...]
    proxies: tuple[str, ...]
    scores: tuple[tuple[float, ...], ...]  # row per candidate, column per proxy
    flagged: tuple[str, ...] = ()  # candidates with missing scores, kept aside
    orientation: tuple[tuple[str, str], ...] = tuple(DEFAULT_ORIENTATION.items())

    def row(self, candidate_id: str) -> tuple[float, ...]:
        return self.scores[self.candidate_ids.index(candidate_id)]


@dataclass(frozen=True)
class FilterDecision:
    kept: tuple[str, ...]
    removed: tuple[str, ...]
    mu: float

    def __post_init__(self):
        overlap = set(self.kept) & set(self.removed)
        if overlap:
            raise ValueError(f"candidates both kept and removed: {sorted(overlap)}")


def probe_request_payload(proxies: Sequence[str], seed: int,
                          model_ref: Mapping | None = None,
                          data_ref: Mapping | None = None) -> dict:
    return {
        "schema_version": PROBE_SCHEMA_VERSION,
        "model": dict(model_ref or {"kind": "file", "path": "model.py"}),
        "data": dict(data_ref or {"kind": "file", "path": "data.npz"}),
        "proxies": list(proxies),
        "seed": seed,
    }


def run_probe(probe_command: Sequence[str], files: Mapping[str, bytes | str],
              request: Mapping, workdir: str | Path, wall_time: float = 120.0,
              memory_limit_mb: int | None = None):
    """One probe invocation: request document in, result document out.

    Probes are pre-written (trusted) executables, so there is no
    address-space cap by default; numeric runtimes reserve large virtual
    mappings on import.
    """
    staged = dict(files)
    staged["probe_request.json"] = json.dumps(request, sort_keys=True)
    report = run_sandbox(SandboxRequest(
        command=(*probe_command, "probe_request.json", "probe_result.json"),
        workdir=str(workdir),
        input_files=make_input_files(staged),
        wall_time_limit=wall_time,
        memory_limit_mb=memory_limit_mb,
        result_file="probe_result.json",
    ))
    return report


def collect_proxy_scores(artifacts: Mapping[str, ModuleArtifact],
                         dataset: bytes, *, probe_command: Sequence[str],
                         workdir_root: str | Path, seed: int = 0,
                         proxies: Sequence[str] = PROXY_KINDS,
                         wall_time: float = 120.0,
                         memory_limit_mb: int | None = None) -> ProxyScoreMatrix:
    """One probe run per modeling candidate; crashes flag the candidate
    (kept out of ranking, never silently pruned)."""
    workdir_root = Path(workdir_root)
    workdir_root.mkdir(parents=True, exist_ok=True)
    ids: list[str] = []
    rows: list[tuple[float, ...]] = []
    flagged: list[str] = []
    for candidate_id in artifacts:
        artifact = artifacts[candidate_id]
        workdir = tempfile.mkdtemp(prefix=f"probe_{candidate_id}_", dir=workdir_root)
        request = probe_request_payload(proxies, seed)
        report = run_probe(
            probe_command,
            {"model.py": artifact.code, "data.npz": dataset},
            request, workdir, wall_time, memory_limit_mb,
        )
        doc = report.result_document
        scores = (doc or {}).get("scores", {})
        if doc is None or any(
            proxy not in scores or not _is_finite(scores[proxy]) for proxy in proxies
        ):
            flagged.append(candidate_id)
            continue
        ids.append(candidate_id)
        rows.append(tuple(float(scores[proxy]) for proxy in proxies))
    return ProxyScoreMatrix(
        candidate_ids=tuple(ids),
        proxies=tuple(proxies),
        scores=tuple(rows),
        flagged=tuple(flagged),
    )


def _is_finite(value) -> bool:
    try:
        return math.isfinite(float(value))
    except (TypeError, ValueError):
        return False


def average_relative_rank(matrix: ProxyScoreMatrix) -> list[tuple[str, float]]:
    """Mean of per-proxy ranks (best = 1, ties averaged) per candidate.

    Ranks depend only on score order within each column, so positive
    rescaling of any proxy leaves the result unchanged.
    """
    if not matrix.candidate_ids:
        return []
    for row in matrix.scores:
        if len(row) != len(matrix.proxies):
            raise ValueError("proxy score matrix has missing entries")
    columns = list(zip(*matrix.scores))
    per_proxy_ranks = [
        rankdata([-score for score in column], method="average")
        for column in columns
    ]
    means = [
        float(sum(ranks[i] for ranks in per_proxy_ranks) / len(per_proxy_ranks))
        for i in range(len(matrix.candidate_ids))
    ]
    return list(zip(matrix.candidate_ids, means))


def filter_search_space(space: SearchSpace, mean_ranks: Sequence[tuple[str, float]],
                        mu: float) -> tuple[FilterDecision, SearchSpace]:
    """Drop the worst floor(mu * n) modeling candidates by mean rank.

    Ties at the cut break by candidate id (lexicographically earlier ids
    survive); every other stage is untouched. Candidates without ranks (for
    example, flagged ones) are always kept.
    """
    if not (0.0 <= mu <= 1.0):
        raise ValueError("mu must lie in [0, 1]")
    n = len(mean_ranks)
    k = math.floor(mu * n)
    ordered = sorted(mean_ranks, key=lambda item: (item[1], item[0]))
    removed = tuple(cid for cid, _ in ordered[n - k:]) if k else ()
    kept = tuple(cid for cid, _ in mean_ranks if cid not in removed)
    decision = FilterDecision(kept=kept, removed=removed, mu=mu)
    removed_set = set(removed)
    stages = tuple(
        stage if stage.kind != "modeling" else ModuleStage(
            kind=stage.kind,
            candidates=tuple(c for c in stage.candidates if c.id not in removed_set),
        )
        for stage in space.stages
    )
    reduced = SearchSpace(stages=stages, hyperparameters=space.hyperparameters,
                          classification=space.classification)
    return decision, reduced


def stability_mrd(scores: Sequence[float]) -> float:
    """Mean relative deviation: mean absolute deviation over |mean|."""
    if len(scores) < 2:
        raise ValueError("stability needs at least two samples")
    mean = sum(scores) / len(scores)
    if mean == 0:
        raise ValueError("stability is undefined for zero-mean scores")
    mad = sum(abs(s - mean) for s in scores) / len(scores)
    return mad / abs(mean)
