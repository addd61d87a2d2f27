"""Line-delimited JSON files with a versioned header line.

Every file written by the package starts with a header object carrying
``format`` and ``version`` keys, followed by one JSON record per line.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator

FORMAT_VERSION = 1


def write_records(path: str | Path, fmt: str, records: Iterable[dict], **header: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = {"format": fmt, "version": FORMAT_VERSION, **header}
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_header(path: str | Path, fmt: str) -> dict:
    with Path(path).open(encoding="utf-8") as fh:
        head = json.loads(fh.readline())
    _check(head, fmt, path)
    return head


def iter_records(path: str | Path, fmt: str) -> Iterator[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        _check(json.loads(fh.readline()), fmt, path)
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def _check(head: dict, fmt: str, path) -> None:
    if head.get("format") != fmt:
        raise ValueError(f"{path}: expected a {fmt!r} file, found {head.get('format')!r}")
    if head.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported {fmt} version {head.get('version')!r}")
