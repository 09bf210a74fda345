"""Turning dataset rows into token-ready shadow-training text.

A shadow example is the plain concatenation "code [SEP] input [SEP] output".
The separator appears exactly twice at the top level; when the whole string
would exceed the encoder's limit, characters are removed from the END of the
code segment only, so the input and candidate output always survive intact.
An example whose input and output cannot fit even with the code gone is
dropped (and logged by the caller): there is nothing sensible to train on.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

SEPARATOR = " [SEP] "


@dataclass(frozen=True)
class ShadowExample:
    triple_id: str
    serialized: str
    success: int

    def __post_init__(self) -> None:
        if self.success not in (0, 1):
            raise ValueError("success must be 0 or 1")


class OversizedExample(ValueError):
    """Input and output alone exceed the sequence limit; the example is unusable."""


def serialize_example(
    code: str,
    input_text: str,
    output_text: str,
    success: int,
    triple_id: str,
    max_chars: int = 512,
) -> ShadowExample:
    """Join the three segments, trimming only the code tail to fit."""
    fixed = len(SEPARATOR) * 2 + len(input_text) + len(output_text)
    budget = max_chars - fixed
    if budget < 0:
        raise OversizedExample(
            f"{triple_id}: input+output need {fixed} chars, limit is {max_chars}"
        )
    kept_code = code if len(code) <= budget else code[:budget]
    serialized = kept_code + SEPARATOR + input_text + SEPARATOR + output_text
    return ShadowExample(triple_id=triple_id, serialized=serialized, success=int(success))


def deserialize(serialized: str) -> tuple[str, str, str]:
    """Recover (code, input, output); only well-formed three-part strings qualify."""
    parts = serialized.split(SEPARATOR)
    if len(parts) != 3:
        raise ValueError(f"expected exactly two separators, found {len(parts) - 1}")
    return parts[0], parts[1], parts[2]


def read_dataset_rows(path: str | Path) -> list[dict]:
    """Rows of the corpus dataset file (JSON lines, one triple per line)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def read_success_labels(path: str | Path, target_model_id: str) -> dict[str, int]:
    """triple_id -> success bit from a judgment-records file for one model."""
    labels: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record["model_id"] != target_model_id:
                continue
            labels[record["triple_id"]] = int(record["success"])
    return labels


def build_examples(
    dataset_rows: list[dict],
    success_by_id: dict[str, int],
    max_chars: int = 512,
) -> tuple[list[ShadowExample], list[str]]:
    """Join dataset rows with success labels; returns (examples, dropped ids).

    Rows without a judgment for the target model are skipped silently (the
    judge may have run on a split); oversized rows are dropped and reported.
    """
    examples: list[ShadowExample] = []
    dropped: list[str] = []
    for row in dataset_rows:
        triple_id = row["triple_id"]
        if triple_id not in success_by_id:
            continue
        try:
            examples.append(
                serialize_example(
                    row["code"],
                    row["input"],
                    row["output"],
                    success_by_id[triple_id],
                    triple_id,
                    max_chars=max_chars,
                )
            )
        except OversizedExample:
            dropped.append(triple_id)
    return examples, dropped
