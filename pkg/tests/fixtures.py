"""Loaders for the verbatim wire snippets kept under fixtures/."""

import json
from pathlib import Path

HERE = Path(__file__).parent / "fixtures"


def _load(name: str) -> dict:
    text = (HERE / name).read_text(encoding="utf-8")
    # the snippets are object bodies; the register one elides further forms
    return json.loads("{" + text.replace(",...]", "]") + "}")


def register_snippet() -> dict:
    return _load("register_response.txt")


def advice_snippet() -> dict:
    return _load("advice_request.txt")


def key_structure(doc):
    """Keys and nesting with leaf values erased; list entries kept in order."""
    if isinstance(doc, dict):
        return {k: key_structure(v) for k, v in doc.items()}
    if isinstance(doc, list):
        return [key_structure(v) for v in doc]
    return None
