"""Whitespace/comment normalization used by the string-based baselines."""

from __future__ import annotations

import re

_WS = re.compile(r"\s+")


def canonicalize(source: str) -> str:
    """Strip comments, trim each line, collapse inner whitespace, drop blank lines."""
    out = []
    for line in source.splitlines():
        line = line.split("#", 1)[0]
        line = _WS.sub(" ", line).strip()
        if line:
            out.append(line)
    return "\n".join(out)
