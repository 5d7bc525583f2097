"""Search-space construction from a backend response."""
from __future__ import annotations

import re
from typing import Mapping

from . import prompts
from .backend import Session
from .errors import ResponseParseError
from .task import (
    CandidateMethod,
    HyperparameterSpec,
    ModuleStage,
    SearchSpace,
    TaskClassification,
    TaskDescription,
    default_finetune_space,
    validate_search_space,
)


def _slug(text: str) -> str:
    slug = re.sub(r"[^a-z0-9._-]+", "-", text.strip().lower()).strip("-")
    return slug or "candidate"


def _parse_hyperparameter(payload: Mapping) -> HyperparameterSpec:
    rng = payload.get("range") or (None, None)
    choices = payload.get("choices")
    return HyperparameterSpec(
        name=str(payload.get("name", "")),
        kind=str(payload.get("kind", "")),
        scale=str(payload.get("scale", "linear")),
        low=rng[0],
        high=rng[1],
        choices=tuple(str(c) for c in choices) if choices else None,
    )


def parse_search_space(payload: Mapping) -> SearchSpace:
    """Build a SearchSpace from the JSON wire form.

    A modeling suggestion naming several concrete models fans out into one
    candidate per model, so the candidate network gets one node per concrete
    modeling code.
    """
    cls_payload = payload.get("classification", {})
    classification = TaskClassification(
        modality=str(cls_payload.get("modality", "")),
        category=str(cls_payload.get("category", "")),
        output_format=str(cls_payload.get("output_format", "n/a")),
    )
    stages: list[ModuleStage] = []
    for stage_payload in payload.get("stages", []):
        kind = str(stage_payload.get("kind", ""))
        candidates: list[CandidateMethod] = []
        for suggestion in stage_payload.get("suggestions", []):
            base_id = str(suggestion.get("id") or _slug(suggestion.get("description", "")))
            description = str(suggestion.get("description", ""))
            models = suggestion.get("models")
            if kind == "modeling" and models:
                for model in models:
                    candidates.append(CandidateMethod(
                        id=_slug(str(model)),
                        stage=kind,
                        description=f"{description} [model: {model}]".strip(),
                    ))
            else:
                candidates.append(CandidateMethod(
                    id=base_id, stage=kind, description=description,
                ))
        stages.append(ModuleStage(kind=kind, candidates=tuple(candidates)))

    if classification.is_deep_learning():
        hyperparameters = default_finetune_space()
    else:
        hyperparameters = tuple(
            _parse_hyperparameter(h) for h in payload.get("hyperparameters", [])
        )
    return SearchSpace(
        stages=tuple(stages),
        hyperparameters=hyperparameters,
        classification=classification,
    )


def generate_search_space(session: Session, task: TaskDescription,
                          max_repairs: int = 2) -> SearchSpace:
    """Ask the backend for a search space; re-prompt on parse or validation
    failure up to ``max_repairs`` times."""
    prompt = prompts.render("search_space", task_text=task.text)
    response = ""
    for round_index in range(max_repairs + 1):
        response = session.ask(prompt)
        try:
            space = parse_search_space(prompts.extract_json_block(response))
            problems = validate_search_space(space)
        except (ValueError, KeyError, TypeError, IndexError) as exc:
            problems = [f"unparseable response: {exc}"]
            space = None
        if space is not None and not problems:
            return space
        prompt = prompts.render("repair_json", error="; ".join(problems))
    raise ResponseParseError(
        f"no valid search space after {max_repairs} repair prompts: {problems}",
        raw_text=response,
    )
