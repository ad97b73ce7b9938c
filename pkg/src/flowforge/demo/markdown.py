"""Tiny deterministic markdown renderer backing the demo's ProcessMarkdown.

The same function serves as the canned behavior for all three binding
kinds (mock fixture entries, the local process stub, the REST stub), so
swapping bindings must not change what a flow observes.
"""

from __future__ import annotations

import re

_CODE = re.compile(r"`(.+?)`")
_BOLD = re.compile(r"\*\*(.+?)\*\*")
_EM = re.compile(r"\*(.+?)\*")


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_markdown(text: str) -> str:
    paragraphs = [p.strip() for p in re.split(r"\n\s*\n", text) if p.strip()]
    out = []
    for p in paragraphs:
        s = _escape(p)
        s = _CODE.sub(r"<code>\1</code>", s)
        s = _BOLD.sub(r"<strong>\1</strong>", s)
        s = _EM.sub(r"<em>\1</em>", s)
        out.append(f"<p>{s}</p>")
    return "".join(out)
