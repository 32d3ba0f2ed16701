"""Small JSON / JSONL file helpers with atomic writes."""

from __future__ import annotations

import json
import os
import tempfile


class DatasetError(ValueError):
    pass


def read_jsonl(path):
    """Yield (line_number, object) for each non-blank line of a JSONL file."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(
                    f"{path}:{lineno}: invalid JSON at column {exc.colno}: {exc.msg}"
                ) from exc


def _atomic_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path, objects):
    _atomic_text(path, "".join(json.dumps(obj) + "\n" for obj in objects))


def write_json(path, obj):
    _atomic_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
