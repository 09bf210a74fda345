"""Acceptance gate for the sequence-model success predictor.

Two criteria, each a single test:

- shadow_separable_task: with synthetic success labels set by a code-length
  threshold on 2,000 serialized examples, one epoch reaches test AUROC >= 0.9,
  and the same setup with shuffled labels lands in [0.4, 0.6]. Budget 30 min.
- cross_component_auroc_agreement: the exported scores CSV, fed to the main
  package's AUROC command line, reproduces this package's value within 1e-9.

The second test runs the other package strictly as a subprocess; nothing in
this suite imports it.
"""
import json
import random
import subprocess
import sys
import time

import pytest

from shadowpred.encoder import make_encoder
from shadowpred.serialize import ShadowExample, serialize_example
from shadowpred.trainer import Hyper, eval_shadow, stratified_split, train_shadow

_NAMES = ["a", "b", "count", "total", "acc", "x", "y", "n", "step", "left"]


def _make_code(rng: random.Random, n_chars: int) -> str:
    """Assignment-and-print soup, clipped to an exact character length."""
    lines = []
    size = 0
    while size < n_chars:
        kind = rng.randrange(3)
        if kind == 0:
            line = f"{rng.choice(_NAMES)} = {rng.choice(_NAMES)} + {rng.randrange(100)}"
        elif kind == 1:
            line = f"{rng.choice(_NAMES)} = int(input()) * {rng.randrange(1, 10)}"
        else:
            line = f"print({rng.choice(_NAMES)})"
        lines.append(line)
        size += len(line) + 1
    return "\n".join(lines)[:n_chars]


def _length_task_examples(n: int, seed: int) -> list[ShadowExample]:
    rng = random.Random(seed)
    drafts = []
    for i in range(n):
        length = rng.randrange(20, 400)
        code = _make_code(rng, length)
        x = str(rng.randrange(1000))
        y = str(rng.randrange(1000))
        drafts.append((f"t{i:05d}", code, x, y))
    median = sorted(len(code) for _, code, _, _ in drafts)[n // 2]
    return [
        serialize_example(code, x, y, int(len(code) < median), tid)
        for tid, code, x, y in drafts
    ]


@pytest.mark.criterion("shadow_separable_task")
def test_separable_code_length_task_and_null_control():
    started = time.monotonic()
    examples = _length_task_examples(2000, seed=41)
    hyper = Hyper(batch_size=16)

    train_part, test_part = stratified_split(examples, 0.8, seed=0)
    model = train_shadow(train_part, hyper, make_encoder("tiny", 512, seed=0), seed=0)
    report, _ = eval_shadow(model, test_part, "separable-golden")
    assert report.epochs == 1
    assert report.auroc >= 0.9, f"separable task AUROC {report.auroc:.4f} < 0.9"

    shuffled_labels = [ex.success for ex in examples]
    random.Random(7).shuffle(shuffled_labels)
    shuffled = [
        ShadowExample(ex.triple_id, ex.serialized, label)
        for ex, label in zip(examples, shuffled_labels)
    ]
    train_part, test_part = stratified_split(shuffled, 0.8, seed=0)
    model = train_shadow(train_part, hyper, make_encoder("tiny", 512, seed=1), seed=1)
    null_report, _ = eval_shadow(model, test_part, "null-control")
    assert 0.4 <= null_report.auroc <= 0.6, (
        f"null control AUROC {null_report.auroc:.4f} outside [0.4, 0.6]"
    )

    elapsed = time.monotonic() - started
    assert elapsed < 1800.0, f"took {elapsed:.0f}s, budget is 30 minutes"


@pytest.mark.criterion("cross_component_auroc_agreement")
def test_exported_scores_reproduce_auroc_across_packages(tmp_path):
    examples = _length_task_examples(300, seed=13)
    train_part, test_part = stratified_split(examples, 0.8, seed=2)
    model = train_shadow(
        train_part, Hyper(batch_size=16), make_encoder("tiny", 512, seed=2), seed=2
    )
    report, scores = eval_shadow(model, test_part, "agreement-check")

    from shadowpred.trainer import write_scores_csv

    scores_path = tmp_path / "scores.csv"
    write_scores_csv(str(scores_path), test_part, scores)

    proc = subprocess.run(
        [sys.executable, "-m", "iojudge.cli", "auroc", "--scores", str(scores_path)],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert abs(payload["auroc"] - report.auroc) <= 1e-9
    assert payload["n"] == report.n_test
    assert payload["n_pos"] == sum(ex.success for ex in test_part)
    assert payload["n_neg"] == report.n_test - payload["n_pos"]
