from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence


def fmt(x: object, digits: int = 4) -> str:
    if isinstance(x, bool) or x is None:
        return "" if x is None else str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if x != 0 and (abs(x) < 10 ** -(digits - 1) or abs(x) >= 1e6):
            return f"{x:.{digits - 1}e}"
        return f"{x:.{digits}f}"
    return str(x)


def h2(title: str) -> str:
    return f"## {title}\n"


def bullets(items: Iterable[str]) -> str:
    items = list(items)
    if not items:
        return "_none_\n"
    return "\n".join(f"- {x}" for x in items) + "\n"


def _cell(x: object, digits: int) -> str:
    return fmt(x, digits).replace("\n", " ").replace("|", "\\|").strip()


def table(headers: Sequence[str], rows: Sequence[Sequence[object]], digits: int = 4) -> str:
    """Markdown table; numeric columns (judged from the first row) are right-aligned."""
    numeric = [isinstance(c, (int, float)) and not isinstance(c, bool) for c in rows[0]] if rows else []
    align = ["---:" if numeric and numeric[i] else "---" for i in range(len(headers))]
    out = ["| " + " | ".join(_cell(h, digits) for h in headers) + " |", "| " + " | ".join(align) + " |"]
    out += ["| " + " | ".join(_cell(c, digits) for c in r) + " |" for r in rows]
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class Section:
    title: str
    body: str


def document(title: str, sections: Sequence[Section]) -> str:
    lines = [f"# {title}", ""]
    for sec in sections:
        if sec.title.strip():
            lines += [h2(sec.title.strip()).rstrip(), ""]
        if sec.body:
            lines += [sec.body.rstrip(), ""]
    return "\n".join(lines).rstrip() + "\n"


def write_report(out_dir: Path, filename: str, title: str, sections: Sequence[Section]) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / filename
    out.write_text(document(title, sections), encoding="utf-8")
    return out
