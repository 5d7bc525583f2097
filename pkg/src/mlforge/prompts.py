"""Instruction templates and the sentinel-delimited JSON response format."""
from __future__ import annotations

import json
import re
from importlib import resources

SENTINEL_BEGIN = "===BEGIN_RESPONSE_JSON==="
SENTINEL_END = "===END_RESPONSE_JSON==="

_BLOCK_RE = re.compile(
    re.escape(SENTINEL_BEGIN) + r"\s*(.*?)\s*" + re.escape(SENTINEL_END),
    re.DOTALL,
)
_CODE_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_+-]*)\n(.*?)```", re.DOTALL)


def load_template(name: str) -> str:
    return resources.files("mlforge.templates").joinpath(f"{name}.txt").read_text(
        encoding="utf-8"
    )


def render(name: str, **fields: str) -> str:
    text = load_template(name)
    fields.setdefault("sentinel_begin", SENTINEL_BEGIN)
    fields.setdefault("sentinel_end", SENTINEL_END)
    return text.format(**fields)


def extract_json_block(text: str) -> dict:
    """Parse the sentinel-delimited JSON document out of a response.

    Raises ValueError when the sentinels are missing or the payload is not a
    JSON object; callers turn that into a repair prompt.
    """
    match = _BLOCK_RE.search(text)
    if match is None:
        raise ValueError("no sentinel-delimited JSON block found")
    payload = json.loads(match.group(1))
    if not isinstance(payload, dict):
        raise ValueError("JSON block does not hold an object")
    return payload


def extract_code_block(text: str) -> str | None:
    """Code from the last fenced block, or None when the response has none."""
    blocks = _CODE_FENCE_RE.findall(text)
    if not blocks:
        return None
    return blocks[-1].strip() + "\n"
