"""Collects one verdict per acceptance criterion for the terminal summary."""

from __future__ import annotations

import contextlib
import time

RESULTS: dict[int, tuple[str, str, str]] = {}


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record PASS if the block finishes, FAIL (and re-raise) otherwise.

    The yielded dict collects measurements shown next to the verdict.
    """
    detail: dict = {}
    start = time.monotonic()
    try:
        yield detail
    except BaseException as exc:
        detail.setdefault("error", f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        RESULTS[number] = ("FAIL", title, _fmt(detail, start))
        raise
    RESULTS[number] = ("PASS", title, _fmt(detail, start))


def _fmt(detail: dict, start: float) -> str:
    parts = [f"{k}={v}" for k, v in detail.items()]
    parts.append(f"elapsed={time.monotonic() - start:.1f}s")
    return " ".join(parts)


def lines() -> list[str]:
    out = []
    for n in sorted(RESULTS):
        verdict, title, detail = RESULTS[n]
        out.append(f"criterion {n} {verdict}: {title} ({detail})")
    return out
