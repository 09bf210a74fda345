"""Corpus construction: fuzz inputs, execute programs, label triples.

A triple is (program, input, output) with a ground-truth consistency bit:
label 1 means the output really is what the program prints on that input
(verified by running it twice), label 0 means the output was donated by the
same program on a *different* input. All randomness flows through explicit
seeds; building the same corpus twice yields byte-identical artifacts.
"""
from __future__ import annotations

import random
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .sidecar import SidecarSession
from .util import canonical_json, derive_seed, read_jsonl, stable_id, write_text_atomic

ORIGIN_POSITIVE = "executed_positive"
ORIGIN_NEGATIVE = "shuffled_negative"

DEFAULT_CODE_LIMIT = 5000
DEFAULT_INPUT_LIMIT = 500
DEFAULT_OUTPUT_LIMIT = 500


@dataclass(frozen=True)
class Program:
    problem_id: str
    submission_id: str
    source: str

    def __post_init__(self) -> None:
        if not self.source:
            raise ValueError("program source must be non-empty")

    @property
    def key(self) -> tuple[str, str]:
        return (self.problem_id, self.submission_id)


@dataclass(frozen=True)
class Triple:
    program: Program
    input: str
    output: str
    label: int
    origin: str

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if (self.label == 1) != (self.origin == ORIGIN_POSITIVE):
            raise ValueError("label 1 iff origin is executed_positive")

    @property
    def triple_id(self) -> str:
        return stable_id(
            self.program.problem_id,
            self.program.submission_id,
            self.input,
            self.output,
            self.label,
        )

    def sort_key(self) -> tuple:
        # Dataset order: (problem, submission, input, label descending).
        return (self.program.problem_id, self.program.submission_id, self.input, -self.label)


@dataclass(frozen=True)
class SplitManifest:
    ordering: tuple[str, ...]
    eval_problems: frozenset[str]
    train_problems: frozenset[str]

    def to_json(self) -> str:
        return canonical_json(
            {
                "ordering": list(self.ordering),
                "eval_problems": sorted(self.eval_problems),
                "train_problems": sorted(self.train_problems),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitManifest":
        import json

        obj = json.loads(text)
        return cls(
            ordering=tuple(obj["ordering"]),
            eval_problems=frozenset(obj["eval_problems"]),
            train_problems=frozenset(obj["train_problems"]),
        )


@dataclass
class CorpusLog:
    """Everything dropped or skipped during a build, in deterministic order."""

    dropped_inputs: list[dict] = field(default_factory=list)
    no_donor_positives: list[str] = field(default_factory=list)
    filtered_out: int = 0
    dedup_removed: int = 0

    def to_dict(self) -> dict:
        return {
            "dropped_inputs": sorted(
                self.dropped_inputs,
                key=lambda d: (d["problem_id"], d["submission_id"], d["input"]),
            ),
            "no_donor_positives": sorted(self.no_donor_positives),
            "filtered_out": self.filtered_out,
            "dedup_removed": self.dedup_removed,
        }


# --- input fuzzing ----------------------------------------------------------
#
# Four generators, cycled round-robin: a single integer line, a space-separated
# integer list, a lowercase word, and a multi-line combination of the former.
# The integer line puts 20% of its mass on a handful of boundary values.

SPECIAL_INTS = (-1, 0, 1, 2, 10)
INT_LO = -(10**6)
INT_HI = 10**6


def integer_line(rng: random.Random, lo: int = INT_LO, hi: int = INT_HI) -> str:
    """One integer on one line; 20% of draws come from SPECIAL_INTS.

    Stream contract (relied on by tests): one rng.random() call decides the
    branch, then either one rng.choice(SPECIAL_INTS) or one rng.randint(lo, hi).
    """
    if rng.random() < 0.2:
        return str(rng.choice(SPECIAL_INTS))
    return str(rng.randint(lo, hi))


def integer_list_line(rng: random.Random, lo: int = INT_LO, hi: int = INT_HI) -> str:
    n = rng.randint(1, 20)
    return " ".join(str(rng.randint(lo, hi)) for _ in range(n))


def word_line(rng: random.Random) -> str:
    n = rng.randint(1, 50)
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(n))


_LINE_GENERATORS = (integer_line, integer_list_line, word_line)


def multiline(rng: random.Random) -> str:
    n = rng.randint(2, 5)
    return "\n".join(_LINE_GENERATORS[rng.randrange(len(_LINE_GENERATORS))](rng) for _ in range(n))


GENERATORS = (integer_line, integer_list_line, word_line, multiline)


def fuzz_inputs(program: Program, budget: int, seed: int) -> list[str]:
    """Up to ``budget`` distinct candidate inputs, deterministic in ``seed``.

    The program argument is part of the contract but not inspected: candidate
    shapes come from the grammar alone, never from problem metadata, so inputs
    that no generator shape fits are simply dropped later at execution time.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = random.Random(seed)
    seen: set[str] = set()
    out: list[str] = []
    attempts = 0
    max_attempts = budget * 20
    gen_index = 0
    while len(out) < budget and attempts < max_attempts:
        candidate = GENERATORS[gen_index % len(GENERATORS)](rng)
        gen_index += 1
        attempts += 1
        if candidate in seen:
            continue
        seen.add(candidate)
        out.append(candidate)
    return out


# --- execution and labeling -------------------------------------------------


def normalize_stdout(stdout: str) -> str:
    """Strip exactly one trailing newline (the conventional print terminator)."""
    return stdout[:-1] if stdout.endswith("\n") else stdout


def execute_and_collect(
    program: Program,
    inputs: list[str],
    sidecar: SidecarSession,
    log: CorpusLog | None = None,
) -> list[Triple]:
    """Run each input twice; keep only inputs with identical usable results.

    The double execution is the determinism check: programs that time out,
    crash, print nothing, or print different things on the two runs contribute
    no triple and get a logged drop instead.
    """
    triples = []
    for x in inputs:
        first = sidecar.run(program.source, x)
        reason = None
        if first.timed_out:
            reason = "timeout"
        elif first.exit_status != 0:
            reason = "nonzero_exit"
        elif first.stdout == "":
            reason = "empty_stdout"
        else:
            second = sidecar.run(program.source, x)
            if not second.usable or second.stdout != first.stdout:
                reason = "nondeterministic"
        if reason is not None:
            if log is not None:
                log.dropped_inputs.append(
                    {
                        "problem_id": program.problem_id,
                        "submission_id": program.submission_id,
                        "input": x,
                        "reason": reason,
                    }
                )
            continue
        triples.append(
            Triple(program, x, normalize_stdout(first.stdout), 1, ORIGIN_POSITIVE)
        )
    return triples


def deduplicate(triples: list[Triple], log: CorpusLog | None = None) -> list[Triple]:
    """Collapse identical observable behavior.

    Key is (problem_id, input, output); the first triple in deterministic
    corpus order (problem, submission, input) wins, so duplicates across
    submissions of one problem resolve to the lexicographically first
    submission. Idempotent.
    """
    kept: list[Triple] = []
    seen: set[tuple[str, str, str]] = set()
    removed = 0
    for t in sorted(triples, key=lambda t: (t.program.problem_id, t.program.submission_id, t.input)):
        key = (t.program.problem_id, t.input, t.output)
        if key in seen:
            removed += 1
            continue
        seen.add(key)
        kept.append(t)
    if log is not None:
        log.dedup_removed += removed
    return kept


def make_negatives(
    positives: list[Triple],
    seed: int,
    log: CorpusLog | None = None,
) -> list[Triple]:
    """One shuffled negative per positive where a donor output exists.

    For positive (p, x, y) the candidate donors are the distinct outputs y'
    of the *same program* on other kept inputs with y' != y; one is chosen
    uniformly. Constant-output programs have no donors; those positives are
    logged and produce nothing. Seeding is per-positive (hash-derived), so
    adding a program does not reshuffle its neighbors' donors.
    """
    by_program: dict[tuple[str, str], list[Triple]] = {}
    for t in positives:
        if t.label != 1:
            raise ValueError("make_negatives expects positives only")
        by_program.setdefault(t.program.key, []).append(t)

    negatives = []
    for t in sorted(positives, key=lambda t: (t.program.problem_id, t.program.submission_id, t.input)):
        donors = sorted(
            {
                d.output
                for d in by_program[t.program.key]
                if d.input != t.input and d.output != t.output
            }
        )
        if not donors:
            if log is not None:
                log.no_donor_positives.append(t.triple_id)
            continue
        rng = random.Random(
            derive_seed(seed, "negative", t.program.problem_id, t.program.submission_id, t.input)
        )
        donated = donors[rng.randrange(len(donors))]
        negatives.append(Triple(t.program, t.input, donated, 0, ORIGIN_NEGATIVE))
    return negatives


def apply_length_filters(
    triples: list[Triple],
    code_limit: int = DEFAULT_CODE_LIMIT,
    input_limit: int = DEFAULT_INPUT_LIMIT,
    output_limit: int = DEFAULT_OUTPUT_LIMIT,
    log: CorpusLog | None = None,
) -> list[Triple]:
    """Inclusive character-length caps, applied after negative generation."""
    kept = [
        t
        for t in triples
        if len(t.program.source) <= code_limit
        and len(t.input) <= input_limit
        and len(t.output) <= output_limit
    ]
    if log is not None:
        log.filtered_out += len(triples) - len(kept)
    return kept


def split_by_problem(problems: set[str] | frozenset[str]) -> SplitManifest:
    """Every tenth problem of the lexicographic ordering goes to evaluation."""
    if not problems:
        raise ValueError("cannot split an empty problem set")
    ordering = tuple(sorted(problems))
    eval_problems = frozenset(ordering[::10])
    return SplitManifest(
        ordering=ordering,
        eval_problems=eval_problems,
        train_problems=frozenset(problems) - eval_problems,
    )


# --- corpus directory layout and orchestration ------------------------------


def discover_programs(corpus_root: str | Path) -> list[Program]:
    """Read <root>/<problem_id>/<submission_id>.py into Programs, sorted."""
    root = Path(corpus_root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root {root} is not a directory")
    programs = []
    for problem_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for sub_path in sorted(problem_dir.glob("*.py")):
            source = sub_path.read_text(encoding="utf-8", errors="replace")
            if not source:
                continue
            programs.append(Program(problem_dir.name, sub_path.stem, source))
    return programs


def build_corpus(
    programs: list[Program],
    fuzz_budget: int,
    fuzz_seed: int,
    negative_seed: int,
    sidecar_factory,
    workers: int = 1,
    code_limit: int = DEFAULT_CODE_LIMIT,
    input_limit: int = DEFAULT_INPUT_LIMIT,
    output_limit: int = DEFAULT_OUTPUT_LIMIT,
) -> tuple[list[Triple], SplitManifest, CorpusLog]:
    """Full assembly: fuzz/execute per program, then a single-threaded
    deterministic reduction (dedup, negatives, filters) over sorted results.

    The fuzz seed is derived per problem, so every submission of a problem
    sees the same candidate inputs and behavioral dedup can collapse
    equivalent submissions.
    """
    log = CorpusLog()

    def process(program: Program) -> tuple[list[Triple], CorpusLog]:
        local = CorpusLog()
        inputs = fuzz_inputs(program, fuzz_budget, derive_seed(fuzz_seed, "fuzz", program.problem_id))
        with sidecar_factory() as session:
            collected = execute_and_collect(program, inputs, session, local)
        return collected, local

    positives: list[Triple] = []
    if workers <= 1:
        results = [process(p) for p in programs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(process, programs))
    for collected, local in results:
        positives.extend(collected)
        log.dropped_inputs.extend(local.dropped_inputs)

    positives = deduplicate(positives, log)
    negatives = make_negatives(positives, negative_seed, log)
    triples = apply_length_filters(
        positives + negatives, code_limit, input_limit, output_limit, log
    )
    triples.sort(key=Triple.sort_key)
    manifest = split_by_problem({p.problem_id for p in programs})
    return triples, manifest, log


# --- dataset file format ----------------------------------------------------


def triple_to_record(t: Triple) -> dict:
    # triple_id is derivable but stored anyway: downstream consumers join
    # dataset rows against judgment records on it without reimplementing ids.
    return {
        "triple_id": t.triple_id,
        "problem_id": t.program.problem_id,
        "submission_id": t.program.submission_id,
        "code": t.program.source,
        "input": t.input,
        "output": t.output,
        "label": t.label,
        "origin": t.origin,
    }


def record_to_triple(record: dict) -> Triple:
    return Triple(
        Program(record["problem_id"], record["submission_id"], record["code"]),
        record["input"],
        record["output"],
        int(record["label"]),
        record["origin"],
    )


def write_dataset(path: str | Path, triples: list[Triple]) -> None:
    ordered = sorted(triples, key=Triple.sort_key)
    text = "".join(canonical_json(triple_to_record(t)) + "\n" for t in ordered)
    write_text_atomic(path, text)


def read_dataset(path: str | Path) -> list[Triple]:
    return [record_to_triple(r) for r in read_jsonl(path)]
