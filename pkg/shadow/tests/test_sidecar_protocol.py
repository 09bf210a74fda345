"""Wire-protocol conformance of the execution sidecar, tested from outside.

This suite never imports the sidecar's client library. It spawns the worker
the way any foreign-language consumer would (`python3 -m iojudge.sidecar_script`),
replays a golden transcript, and checks responses structurally. "__ANY__" in
an expectation matches any value at that position (timings, version strings,
opcode payloads); everything else must be exactly equal, including key sets.
"""
import dis
import json
import subprocess
import sys
import types
from pathlib import Path

import pytest

GOLDEN = Path(__file__).parent / "goldens" / "session.jsonl"


def _spawn():
    return subprocess.Popen(
        [sys.executable, "-m", "iojudge.sidecar_script"],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
    )


def _ask(proc, line: str) -> dict:
    proc.stdin.write(line + "\n")
    proc.stdin.flush()
    reply = proc.stdout.readline()
    assert reply, "sidecar closed its stdout mid-session"
    return json.loads(reply)


def _matches(expected, actual) -> bool:
    if expected == "__ANY__":
        return True
    if isinstance(expected, dict):
        return (
            isinstance(actual, dict)
            and set(expected) == set(actual)
            and all(_matches(v, actual[k]) for k, v in expected.items())
        )
    if isinstance(expected, list):
        return (
            isinstance(actual, list)
            and len(expected) == len(actual)
            and all(_matches(e, a) for e, a in zip(expected, actual))
        )
    return expected == actual


def _transcript():
    entries = []
    with open(GOLDEN, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                entries.append(json.loads(line))
    return entries


def test_golden_transcript_replay():
    entries = _transcript()
    assert len(entries) >= 8
    proc = _spawn()
    try:
        for i, entry in enumerate(entries):
            raw = entry["send_raw"] if "send_raw" in entry else json.dumps(entry["send"])
            reply = _ask(proc, raw)
            assert _matches(entry["expect"], reply), (
                f"transcript line {i + 1}: expected {entry['expect']!r}, got {reply!r}"
            )
    finally:
        proc.stdin.close()
        proc.wait(timeout=10)


def test_exits_cleanly_when_stdin_closes():
    proc = _spawn()
    out, _ = proc.communicate(input="", timeout=10)
    assert proc.returncode == 0
    assert out == ""


def test_blank_lines_are_ignored():
    proc = _spawn()
    try:
        proc.stdin.write("\n   \n")
        reply = _ask(proc, json.dumps({"kind": "disassemble", "code": "pass"}))
        assert reply["ok"] is True
    finally:
        proc.stdin.close()
        proc.wait(timeout=10)


def test_responses_come_back_in_request_order():
    proc = _spawn()
    try:
        first = {"kind": "run", "code": "print('A')", "stdin": ""}
        second = {"kind": "run", "code": "print('B')", "stdin": ""}
        proc.stdin.write(json.dumps(first) + "\n" + json.dumps(second) + "\n")
        proc.stdin.flush()
        replies = [json.loads(proc.stdout.readline()) for _ in range(2)]
        assert replies[0]["result"]["stdout"] == "A\n"
        assert replies[1]["result"]["stdout"] == "B\n"
    finally:
        proc.stdin.close()
        proc.wait(timeout=10)


def _walk_code_objects(code):
    """Module first, then nested code objects depth first in definition order."""
    yield code
    for const in code.co_consts:
        if isinstance(const, types.CodeType):
            yield from _walk_code_objects(const)


@pytest.mark.parametrize(
    "snippet",
    [
        "x = 1",
        "def f(n):\n    return [i * i for i in range(n)]\nprint(f(3))",
        "g = lambda a: a + 1\nclass C:\n    def m(self):\n        return 2",
    ],
)
def test_disassemble_agrees_with_local_dis(snippet):
    expected = []
    for code in _walk_code_objects(compile(snippet, "<golden>", "exec")):
        for instr in dis.get_instructions(code):
            expected.append([instr.opcode, instr.opname])

    proc = _spawn()
    try:
        reply = _ask(proc, json.dumps({"kind": "disassemble", "code": snippet}))
    finally:
        proc.stdin.close()
        proc.wait(timeout=10)
    assert reply["ok"] is True
    major_minor = ".".join(str(v) for v in sys.version_info[:2])
    assert reply["result"]["interpreter"] == major_minor
    assert reply["result"]["ops"] == expected


def test_run_result_is_utf8_text():
    proc = _spawn()
    try:
        reply = _ask(
            proc,
            json.dumps({"kind": "run", "code": "print('caf\\u00e9')", "stdin": ""}),
        )
    finally:
        proc.stdin.close()
        proc.wait(timeout=10)
    assert reply["result"]["stdout"] == "café\n"
