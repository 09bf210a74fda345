"""Client for the interpreter sidecar's JSON-lines protocol.

The sidecar itself (``iojudge.sidecar_script``) is a fixed stdlib-only worker;
this module owns spawning it, speaking the protocol, and the result types the
rest of the package consumes.
"""
from __future__ import annotations

import json
import subprocess
import sys
from dataclasses import dataclass

DEFAULT_TIMEOUT = 5.0
DEFAULT_MEMORY_CAP = 256 * 1024 * 1024


class SidecarError(RuntimeError):
    """Transport-level failure: sidecar missing, dead, or speaking garbage."""


class DisassemblyError(ValueError):
    """The sidecar could not compile a snippet (explicit error record)."""


@dataclass(frozen=True)
class ExecutionResult:
    stdout: str
    exit_status: int
    wall_time: float
    timed_out: bool

    @property
    def usable(self) -> bool:
        # A usable result requires a clean exit, some stdout, and no timeout.
        return (not self.timed_out) and self.exit_status == 0 and self.stdout != ""


@dataclass(frozen=True)
class OpcodeSequence:
    """Flattened (opcode_id, opcode_name) pairs across all code objects."""

    ops: tuple[tuple[int, str], ...]
    interpreter: str

    def names(self) -> tuple[str, ...]:
        return tuple(name for _, name in self.ops)


def default_command() -> list[str]:
    return [sys.executable, "-m", "iojudge.sidecar_script"]


class SidecarSession:
    """One live sidecar process; not thread-safe, one session per worker.

    ``allow_run`` exists so purity-sensitive callers (the feature extractors
    must never execute anything) can be handed a session that refuses ``run``.
    """

    def __init__(
        self,
        command: list[str] | None = None,
        timeout: float = DEFAULT_TIMEOUT,
        memory_cap: int = DEFAULT_MEMORY_CAP,
        allow_run: bool = True,
    ) -> None:
        self.timeout = timeout
        self.memory_cap = memory_cap
        self.allow_run = allow_run
        self._command = list(command) if command else default_command()
        try:
            self._proc = subprocess.Popen(
                self._command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SidecarError(f"could not launch sidecar {self._command}: {exc}") from exc

    def _request(self, payload: dict) -> dict:
        if self._proc.poll() is not None:
            raise SidecarError("sidecar process has exited")
        try:
            self._proc.stdin.write(json.dumps(payload, sort_keys=True) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise SidecarError(f"sidecar pipe failure: {exc}") from exc
        if not line:
            raise SidecarError("sidecar closed its stdout mid-request")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SidecarError(f"sidecar sent malformed JSON: {exc}") from exc
        if not isinstance(response, dict) or "ok" not in response:
            raise SidecarError("sidecar response missing 'ok' field")
        return response

    def run(self, code: str, stdin_text: str) -> ExecutionResult:
        if not self.allow_run:
            raise SidecarError("this session was opened with run disabled")
        response = self._request(
            {
                "kind": "run",
                "code": code,
                "stdin": stdin_text,
                "timeout": self.timeout,
                "memory_cap": self.memory_cap,
            }
        )
        if not response["ok"]:
            err = response.get("error", {})
            raise SidecarError(f"run failed: {err.get('type')}: {err.get('message')}")
        r = response["result"]
        return ExecutionResult(
            stdout=r["stdout"],
            exit_status=int(r["exit_status"]),
            wall_time=float(r["wall_time"]),
            timed_out=bool(r["timed_out"]),
        )

    def disassemble(self, code: str) -> OpcodeSequence:
        response = self._request({"kind": "disassemble", "code": code})
        if not response["ok"]:
            err = response.get("error", {})
            if err.get("type") == "compile_error":
                raise DisassemblyError(err.get("message", "compilation failed"))
            raise SidecarError(f"disassemble failed: {err.get('type')}: {err.get('message')}")
        r = response["result"]
        ops = tuple((int(op), str(name)) for op, name in r["ops"])
        return OpcodeSequence(ops=ops, interpreter=str(r["interpreter"]))

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "SidecarSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
