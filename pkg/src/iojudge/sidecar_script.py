"""Interpreter sidecar: executes untrusted snippets and disassembles them.

A minimal, self-contained worker process speaking a line protocol on
stdin/stdout: one JSON object per request line, one JSON object per response
line. Intentionally stdlib-only and free of package imports so it can be
launched as ``python -m iojudge.sidecar_script`` (or by file path) without any
environment beyond the interpreter itself. See docs/sidecar_protocol.md for
the full wire contract.

Requests:
    {"kind": "run", "code": str, "stdin": str,
     "timeout": float (optional, seconds), "memory_cap": int (optional, bytes)}
    {"kind": "disassemble", "code": str}

Responses:
    {"ok": true,  "result": {...}}
    {"ok": false, "error": {"type": str, "message": str}}

``run`` results: {"stdout": str, "exit_status": int, "wall_time": float,
"timed_out": bool}. ``disassemble`` results: {"ops": [[opcode_id, opname], ...],
"interpreter": "MAJOR.MINOR"}, flattened over the module code object and every
nested code object (functions, comprehensions, lambdas) in definition order.

Each ``run`` forks a fresh child interpreter with resource limits applied
(address-space cap, zero-size file creation, CPU seconds), a scratch working
directory that is removed afterwards, and the socket constructor disabled.
A snippet that opens a network connection fails outright; one that writes a
file can at most create an empty one (the zero-size rlimit makes every write
of actual bytes fail), so no snippet-authored content ever lands on the host.
"""
import dis
import json
import os
import shutil
import subprocess
import sys
import tempfile
import time
import types

DEFAULT_TIMEOUT = 5.0
DEFAULT_MEMORY_CAP = 256 * 1024 * 1024

# Runs inside the child. Reads the snippet from the path in argv, hides the
# wrapper from the snippet's view, and refuses socket creation up front.
_CHILD_RUNNER = (
    "import sys, socket\n"
    "def _no_net(*a, **k):\n"
    "    raise OSError('network access disabled')\n"
    "socket.socket = _no_net\n"
    "with open(sys.argv[1], 'r', encoding='utf-8', errors='replace') as fh:\n"
    "    _source = fh.read()\n"
    "sys.argv = ['prog.py']\n"
    "_code = compile(_source, 'prog.py', 'exec')\n"
    "exec(_code, {'__name__': '__main__'})\n"
)


def _limit_resources(memory_cap, cpu_seconds):
    import resource

    def apply():
        resource.setrlimit(resource.RLIMIT_AS, (memory_cap, memory_cap))
        # Zero-size regular files: any write of >0 bytes raises SIGXFSZ.
        # Pipes (the child's stdout/stderr) are unaffected.
        resource.setrlimit(resource.RLIMIT_FSIZE, (0, 0))
        resource.setrlimit(resource.RLIMIT_CPU, (cpu_seconds, cpu_seconds))

    return apply


def run_snippet(code, stdin_text, timeout=DEFAULT_TIMEOUT, memory_cap=DEFAULT_MEMORY_CAP):
    """Execute one snippet in a fresh child; never raises for snippet faults."""
    workdir = tempfile.mkdtemp(prefix="sidecar-run-")
    prog_path = os.path.join(workdir, "prog.py")
    with open(prog_path, "w", encoding="utf-8") as fh:
        fh.write(code)
    cpu_seconds = max(1, int(timeout) + 1)
    started = time.monotonic()
    timed_out = False
    try:
        proc = subprocess.run(
            [sys.executable, "-I", "-c", _CHILD_RUNNER, prog_path],
            input=stdin_text.encode("utf-8"),
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            cwd=workdir,
            env={"PATH": os.defpath},
            timeout=timeout,
            preexec_fn=_limit_resources(memory_cap, cpu_seconds),
        )
        stdout_bytes = proc.stdout or b""
        exit_status = proc.returncode
    except subprocess.TimeoutExpired as exc:
        stdout_bytes = exc.stdout or b""
        exit_status = -1
        timed_out = True
    finally:
        shutil.rmtree(workdir, ignore_errors=True)
    return {
        "stdout": stdout_bytes.decode("utf-8", errors="replace"),
        "exit_status": exit_status,
        "wall_time": time.monotonic() - started,
        "timed_out": timed_out,
    }


def _walk_code_objects(code_obj):
    yield code_obj
    for const in code_obj.co_consts:
        if isinstance(const, types.CodeType):
            yield from _walk_code_objects(const)


def disassemble_snippet(code):
    """Flattened opcode sequence for a snippet; raises on compilation failure."""
    compiled = compile(code, "<prog>", "exec")
    ops = []
    for code_obj in _walk_code_objects(compiled):
        for ins in dis.get_instructions(code_obj):
            ops.append([ins.opcode, ins.opname])
    return ops


def handle_request(request):
    if not isinstance(request, dict) or "kind" not in request:
        return {"ok": False, "error": {"type": "protocol_error", "message": "request must be an object with a 'kind' field"}}
    kind = request["kind"]
    if kind == "run":
        try:
            result = run_snippet(
                str(request.get("code", "")),
                str(request.get("stdin", "")),
                timeout=float(request.get("timeout", DEFAULT_TIMEOUT)),
                memory_cap=int(request.get("memory_cap", DEFAULT_MEMORY_CAP)),
            )
        except Exception as exc:  # harness fault, not a snippet fault
            return {"ok": False, "error": {"type": "run_error", "message": f"{type(exc).__name__}: {exc}"}}
        return {"ok": True, "result": result}
    if kind == "disassemble":
        try:
            ops = disassemble_snippet(str(request.get("code", "")))
        except (SyntaxError, ValueError, MemoryError, RecursionError) as exc:
            return {"ok": False, "error": {"type": "compile_error", "message": f"{type(exc).__name__}: {exc}"}}
        version = "%d.%d" % sys.version_info[:2]
        return {"ok": True, "result": {"ops": ops, "interpreter": version}}
    return {"ok": False, "error": {"type": "protocol_error", "message": f"unknown request kind: {kind!r}"}}


def main():
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            response = {"ok": False, "error": {"type": "protocol_error", "message": f"bad JSON: {exc}"}}
        else:
            response = handle_request(request)
        sys.stdout.write(json.dumps(response, sort_keys=True) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
