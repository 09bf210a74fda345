"""Small shared helpers: canonical JSON, content hashing, atomic writes, seeds.

Everything downstream that must be byte-reproducible funnels through these
functions, so determinism bugs have one place to hide.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and no whitespace; stable across runs."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def pretty_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stable_id(*parts: Any, length: int = 16) -> str:
    """Short deterministic identifier for a tuple of JSON-serializable parts."""
    return sha256_text(canonical_json(list(parts)))[:length]


def derive_seed(root_seed: int, *parts: Any) -> int:
    """Derive an independent integer seed from a root seed and a label tuple.

    Hash-based so that inserting or removing one item in a corpus does not
    shift the random streams of unrelated items.
    """
    digest = hashlib.sha256(canonical_json([root_seed, *parts]).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory plus rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp.{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_jsonl_atomic(path: str | Path, records: list[dict]) -> None:
    text = "".join(canonical_json(r) + "\n" for r in records)
    write_text_atomic(path, text)
