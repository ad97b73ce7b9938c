"""Process-binding stub: JSON in on stdin, JSON out on stdout.

Run as ``python -m flowforge.demo.markdown_process``; expects a document
with a ``text`` field and answers with ``html``.
"""

import json
import sys

from .markdown import render_markdown


def main() -> int:
    request = json.load(sys.stdin)
    html = render_markdown(str(request["text"]))
    json.dump({"html": html}, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
