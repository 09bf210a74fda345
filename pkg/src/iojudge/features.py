"""Human-centric static code metrics over (code, input, output) triples.

Four feature families, concatenated in a fixed catalog order:

  lexical          sizes and token-level counts from a best-effort lexer pass
  opcode           bytecode length, distinct opcodes, Shannon entropy (base 2),
                   and per-opcode relative frequencies over a frozen vocabulary
  ast_graph        the parse tree viewed as an undirected graph: node/edge
                   counts, depth, branching, density, diameter, mean distance,
                   and per-node-type counts over a frozen vocabulary
  control_flow     decision-point cyclomatic complexity plus loop/branch/
                   function counts, nesting depth, and basic-block shape

Vocabularies (opcode names, AST node type names) are frozen from the training
split with a trailing OTHER bucket, so evaluation-split novelties fold into
OTHER instead of changing dimensionality. Extraction is pure: nothing here
ever executes a program; the opcode sequence arrives via the sidecar's
``disassemble`` request only.
"""
from __future__ import annotations

import ast
import io
import json
import keyword
import math
import tokenize
from collections import Counter, deque
from dataclasses import dataclass

import numpy as np

from .sidecar import DisassemblyError, OpcodeSequence
from .util import canonical_json

OTHER = "OTHER"

LEXICAL_FEATURES = (
    "code_chars",
    "code_lines",
    "token_count",
    "num_identifiers",
    "num_unique_identifiers",
    "avg_identifier_length",
    "num_comments",
    "comment_chars",
    "num_string_literals",
    "num_numeric_literals",
    "len_input",
    "len_output",
)
PARSE_FAILED = "parse_failed"
OPCODE_SCALARS = ("num_opcodes", "num_unique_opcodes", "opcode_entropy")
AST_SCALARS = (
    "ast_num_nodes",
    "ast_num_edges",
    "ast_max_depth",
    "ast_avg_branching",
    "ast_density",
    "ast_diameter",
    "ast_avg_shortest_path",
)
CONTROL_FLOW_FEATURES = (
    "cyclomatic_total",
    "num_loops",
    "num_branches",
    "num_functions",
    "max_nesting_depth",
    "num_basic_blocks",
    "avg_basic_block_size",
)


@dataclass(frozen=True)
class FeatureCatalog:
    """Frozen feature-name ordering plus the vocabularies behind it."""

    opcode_vocabulary: tuple[str, ...]
    node_type_vocabulary: tuple[str, ...]
    interpreter: str

    @property
    def names(self) -> tuple[str, ...]:
        return (
            LEXICAL_FEATURES
            + (PARSE_FAILED,)
            + OPCODE_SCALARS
            + tuple(f"op_freq_{n}" for n in self.opcode_vocabulary)
            + (f"op_freq_{OTHER}",)
            + AST_SCALARS
            + tuple(f"nodecount_{t}" for t in self.node_type_vocabulary)
            + (f"nodecount_{OTHER}",)
            + CONTROL_FLOW_FEATURES
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": 1,
                "interpreter": self.interpreter,
                "opcode_vocabulary": list(self.opcode_vocabulary),
                "node_type_vocabulary": list(self.node_type_vocabulary),
                "names": list(self.names),
            },
            sort_keys=True,
            indent=2,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FeatureCatalog":
        obj = json.loads(text)
        catalog = cls(
            opcode_vocabulary=tuple(obj["opcode_vocabulary"]),
            node_type_vocabulary=tuple(obj["node_type_vocabulary"]),
            interpreter=obj["interpreter"],
        )
        if list(catalog.names) != list(obj["names"]):
            raise ValueError("catalog names do not match its vocabularies")
        return catalog


@dataclass(frozen=True)
class FeatureVector:
    catalog: FeatureCatalog
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.catalog.names),):
            raise ValueError("feature vector length does not match catalog")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature vector contains non-finite values")


# --- lexical ----------------------------------------------------------------

_LAYOUT_TOKENS = {
    tokenize.NEWLINE,
    tokenize.NL,
    tokenize.INDENT,
    tokenize.DEDENT,
    tokenize.ENDMARKER,
}


def _lex_tokens(code: str) -> tuple[list[tokenize.TokenInfo], bool]:
    """Best-effort token list; returns (tokens-so-far, failed)."""
    tokens: list[tokenize.TokenInfo] = []
    try:
        for tok in tokenize.generate_tokens(io.StringIO(code).readline):
            tokens.append(tok)
    except (tokenize.TokenError, IndentationError, SyntaxError, ValueError):
        return tokens, True
    return tokens, False


def extract_lexical(code: str, input_text: str, output_text: str) -> tuple[dict, bool]:
    """Counts a reader sees without running anything.

    token_count excludes layout tokens (NEWLINE/NL/INDENT/DEDENT/ENDMARKER);
    identifiers are NAME tokens that are not keywords, counted per occurrence;
    avg_identifier_length averages over occurrences (0 when there are none).
    """
    tokens, failed = _lex_tokens(code)
    identifiers = [t.string for t in tokens if t.type == tokenize.NAME and not keyword.iskeyword(t.string)]
    comments = [t.string for t in tokens if t.type == tokenize.COMMENT]
    features = {
        "code_chars": float(len(code)),
        "code_lines": float(len(code.splitlines())),
        "token_count": float(sum(1 for t in tokens if t.type not in _LAYOUT_TOKENS)),
        "num_identifiers": float(len(identifiers)),
        "num_unique_identifiers": float(len(set(identifiers))),
        "avg_identifier_length": (
            sum(len(s) for s in identifiers) / len(identifiers) if identifiers else 0.0
        ),
        "num_comments": float(len(comments)),
        "comment_chars": float(sum(len(s) for s in comments)),
        "num_string_literals": float(sum(1 for t in tokens if t.type == tokenize.STRING)),
        "num_numeric_literals": float(sum(1 for t in tokens if t.type == tokenize.NUMBER)),
        "len_input": float(len(input_text)),
        "len_output": float(len(output_text)),
    }
    return features, failed


# --- opcodes ----------------------------------------------------------------


def shannon_entropy(counts: list[int]) -> float:
    """Base-2 entropy of a count distribution; 0 for empty input."""
    total = sum(counts)
    if total == 0:
        return 0.0
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / total
            h -= p * math.log2(p)
    return h


def extract_opcode_features(
    seq: OpcodeSequence | None, catalog: FeatureCatalog
) -> tuple[dict, bool]:
    """Opcode statistics; a missing/empty sequence zeroes the family."""
    features = {name: 0.0 for name in OPCODE_SCALARS}
    for name in catalog.opcode_vocabulary:
        features[f"op_freq_{name}"] = 0.0
    features[f"op_freq_{OTHER}"] = 0.0
    if seq is None or not seq.ops:
        return features, True

    names = seq.names()
    counts = Counter(names)
    total = len(names)
    features["num_opcodes"] = float(total)
    features["num_unique_opcodes"] = float(len(counts))
    features["opcode_entropy"] = shannon_entropy(list(counts.values()))
    vocab = set(catalog.opcode_vocabulary)
    other = 0
    for name, c in counts.items():
        if name in vocab:
            features[f"op_freq_{name}"] = c / total
        else:
            other += c
    features[f"op_freq_{OTHER}"] = other / total
    return features, False


# --- AST as a graph ---------------------------------------------------------


def _ast_adjacency(tree: ast.AST) -> tuple[list[list[int]], list[str], list[int]]:
    """Index the tree depth-first; returns (adjacency, type names, depths)."""
    adjacency: list[list[int]] = []
    type_names: list[str] = []
    depths: list[int] = []
    stack = [(tree, -1, 0)]
    while stack:
        node, parent, depth = stack.pop()
        idx = len(type_names)
        type_names.append(type(node).__name__)
        depths.append(depth)
        adjacency.append([])
        if parent >= 0:
            adjacency[parent].append(idx)
            adjacency[idx].append(parent)
        for child in reversed(list(ast.iter_child_nodes(node))):
            stack.append((child, idx, depth + 1))
    return adjacency, type_names, depths


def _bfs_distances(adjacency: list[list[int]], start: int) -> list[int]:
    dist = [-1] * len(adjacency)
    dist[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def tree_distance_stats(adjacency: list[list[int]]) -> tuple[float, float]:
    """(diameter, mean shortest path over ordered pairs) by BFS from every node."""
    n = len(adjacency)
    if n < 2:
        return 0.0, 0.0
    diameter = 0
    total = 0
    for start in range(n):
        dist = _bfs_distances(adjacency, start)
        m = max(dist)
        if m > diameter:
            diameter = m
        total += sum(dist)
    return float(diameter), total / (n * (n - 1))


def extract_ast_graph(code: str, catalog: FeatureCatalog) -> tuple[dict, bool]:
    """Graph-shape metrics of the parse tree (undirected, parent-child edges).

    Context markers (Load/Store/...) count as nodes like any other; density is
    2E / (V * (V-1)) with V < 2 defined as 0; diameter and mean distance come
    from exact BFS out of every node.
    """
    features = {name: 0.0 for name in AST_SCALARS}
    for t in catalog.node_type_vocabulary:
        features[f"nodecount_{t}"] = 0.0
    features[f"nodecount_{OTHER}"] = 0.0
    try:
        tree = ast.parse(code)
    except (SyntaxError, ValueError, MemoryError, RecursionError):
        return features, True

    adjacency, type_names, depths = _ast_adjacency(tree)
    v = len(type_names)
    e = sum(len(a) for a in adjacency) // 2
    child_counts = [len(a) - (1 if i > 0 else 0) for i, a in enumerate(adjacency)]
    internal = [c for c in child_counts if c > 0]
    diameter, avg_path = tree_distance_stats(adjacency)

    features["ast_num_nodes"] = float(v)
    features["ast_num_edges"] = float(e)
    features["ast_max_depth"] = float(max(depths))
    features["ast_avg_branching"] = (sum(internal) / len(internal)) if internal else 0.0
    features["ast_density"] = (2.0 * e / (v * (v - 1))) if v >= 2 else 0.0
    features["ast_diameter"] = diameter
    features["ast_avg_shortest_path"] = avg_path

    vocab = set(catalog.node_type_vocabulary)
    for name, c in Counter(type_names).items():
        if name in vocab:
            features[f"nodecount_{name}"] = float(c)
        else:
            features[f"nodecount_{OTHER}"] += float(c)
    return features, False


# --- control flow -----------------------------------------------------------

_LOOP_NODES = (ast.For, ast.AsyncFor, ast.While)
_SCOPE_NODES = (ast.FunctionDef, ast.AsyncFunctionDef)
_BLOCK_NODES = (
    ast.If,
    ast.For,
    ast.AsyncFor,
    ast.While,
    ast.With,
    ast.AsyncWith,
    ast.Try,
    ast.FunctionDef,
    ast.AsyncFunctionDef,
    ast.ClassDef,
)
_COMPOUND_STMT = (ast.If, ast.For, ast.AsyncFor, ast.While, ast.With, ast.AsyncWith, ast.Try, ast.ClassDef)
_JUMP_STMT = (ast.Return, ast.Break, ast.Continue, ast.Raise)


def _walk_scope(node: ast.AST):
    """Yield nodes of one function scope, not descending into nested defs."""
    stack = list(ast.iter_child_nodes(node))
    while stack:
        child = stack.pop()
        yield child
        if not isinstance(child, _SCOPE_NODES):
            stack.extend(ast.iter_child_nodes(child))


def _bool_ops_in(expr: ast.AST) -> int:
    count = 0
    for node in ast.walk(expr):
        if isinstance(node, ast.BoolOp):
            count += len(node.values) - 1
    return count


def _scope_decision_points(scope: ast.AST) -> int:
    """Decision points of one scope: if/elif arms, loop headers, boolean
    operators inside condition expressions, exception handlers, conditional
    expressions, and comprehension filters."""
    points = 0
    for node in _walk_scope(scope):
        if isinstance(node, ast.If):
            points += 1 + _bool_ops_in(node.test)
        elif isinstance(node, ast.While):
            points += 1 + _bool_ops_in(node.test)
        elif isinstance(node, (ast.For, ast.AsyncFor)):
            points += 1
        elif isinstance(node, ast.ExceptHandler):
            points += 1
        elif isinstance(node, ast.IfExp):
            points += 1 + _bool_ops_in(node.test)
        elif isinstance(node, ast.comprehension):
            points += len(node.ifs) + sum(_bool_ops_in(test) for test in node.ifs)
    return points


def _basic_blocks(body: list[ast.stmt]) -> list[int]:
    """Block sizes for one statement list.

    A block is a maximal straight-line run; a compound statement's header
    closes the current block (and is counted in it), each nested body opens
    fresh blocks, and explicit jumps (return/break/continue/raise) close the
    block they end. Nested function bodies belong to their own scope and are
    not descended into here.
    """
    blocks: list[int] = []
    current = 0
    for stmt in body:
        current += 1
        if isinstance(stmt, _COMPOUND_STMT):
            blocks.append(current)
            current = 0
            for sub in _statement_bodies(stmt):
                blocks.extend(_basic_blocks(sub))
        elif isinstance(stmt, _JUMP_STMT):
            blocks.append(current)
            current = 0
    if current:
        blocks.append(current)
    return blocks


def _statement_bodies(stmt: ast.stmt) -> list[list[ast.stmt]]:
    bodies = []
    for attr in ("body", "orelse", "finalbody"):
        sub = getattr(stmt, attr, None)
        if sub:
            bodies.append(sub)
    for handler in getattr(stmt, "handlers", []) or []:
        if handler.body:
            bodies.append(handler.body)
    return bodies


def _max_nesting(tree: ast.AST) -> int:
    best = 0
    stack = [(tree, 0)]
    while stack:
        node, depth = stack.pop()
        for child in ast.iter_child_nodes(node):
            d = depth + 1 if isinstance(child, _BLOCK_NODES) else depth
            if d > best:
                best = d
            stack.append((child, d))
    return best


def extract_control_flow(code: str) -> tuple[dict, bool]:
    """Decision-point counting per function scope; the module body is a scope.

    cyclomatic_total is the sum over scopes of (1 + decision points), so
    straight-line code scores exactly 1 and the value can never drop below
    the number of scopes.
    """
    features = {name: 0.0 for name in CONTROL_FLOW_FEATURES}
    try:
        tree = ast.parse(code)
    except (SyntaxError, ValueError, MemoryError, RecursionError):
        return features, True

    scopes: list[ast.AST] = [tree]
    for node in ast.walk(tree):
        if isinstance(node, _SCOPE_NODES):
            scopes.append(node)

    cyclomatic = 0
    loops = 0
    branches = 0
    block_sizes: list[int] = []
    for scope in scopes:
        cyclomatic += 1 + _scope_decision_points(scope)
        for node in _walk_scope(scope):
            if isinstance(node, _LOOP_NODES):
                loops += 1
            elif isinstance(node, (ast.If, ast.IfExp)):
                branches += 1
        block_sizes.extend(_basic_blocks(scope.body))

    features["cyclomatic_total"] = float(cyclomatic)
    features["num_loops"] = float(loops)
    features["num_branches"] = float(branches)
    features["num_functions"] = float(len(scopes))
    features["max_nesting_depth"] = float(_max_nesting(tree))
    features["num_basic_blocks"] = float(len(block_sizes))
    features["avg_basic_block_size"] = (
        sum(block_sizes) / len(block_sizes) if block_sizes else 0.0
    )
    return features, False


# --- catalog construction and assembly --------------------------------------


def build_catalog(
    training_codes: list[str],
    opcode_sequences: dict[str, OpcodeSequence | None],
    interpreter: str,
) -> FeatureCatalog:
    """Freeze vocabularies from the training split only.

    ``opcode_sequences`` maps each training code text to its disassembly (or
    None where compilation failed). Vocabularies are sorted name lists; OTHER
    is implicit and always last in the catalog's derived feature names.
    """
    opcode_names: set[str] = set()
    node_types: set[str] = set()
    for code in training_codes:
        seq = opcode_sequences.get(code)
        if seq is not None:
            opcode_names.update(seq.names())
        try:
            tree = ast.parse(code)
        except (SyntaxError, ValueError, MemoryError, RecursionError):
            continue
        node_types.update(type(n).__name__ for n in ast.walk(tree))
    return FeatureCatalog(
        opcode_vocabulary=tuple(sorted(opcode_names)),
        node_type_vocabulary=tuple(sorted(node_types)),
        interpreter=interpreter,
    )


def extract_all(
    triple,
    sidecar,
    catalog: FeatureCatalog,
    opcode_cache: dict[tuple[str, str], OpcodeSequence | None] | None = None,
) -> FeatureVector:
    """Concatenate all families in catalog order for one triple.

    The sidecar is used for ``disassemble`` only; a disassembly failure zeroes
    the opcode family and sets parse_failed rather than aborting extraction.
    """
    code = triple.program.source
    key = triple.program.key
    if opcode_cache is not None and key in opcode_cache:
        seq = opcode_cache[key]
    else:
        try:
            seq = sidecar.disassemble(code)
        except DisassemblyError:
            seq = None
        if opcode_cache is not None:
            opcode_cache[key] = seq

    lexical, lex_failed = extract_lexical(code, triple.input, triple.output)
    opcode, opc_failed = extract_opcode_features(seq, catalog)
    ast_graph, ast_failed = extract_ast_graph(code, catalog)
    control_flow, cf_failed = extract_control_flow(code)

    features = {**lexical, **opcode, **ast_graph, **control_flow}
    features[PARSE_FAILED] = float(lex_failed or opc_failed or ast_failed or cf_failed)

    names = catalog.names
    values = np.empty(len(names), dtype=np.float64)
    for i, name in enumerate(names):
        values[i] = features[name]
    return FeatureVector(catalog=catalog, values=values)


# --- feature matrix file format ---------------------------------------------


def write_feature_matrix(path, catalog: FeatureCatalog, rows: list[tuple[str, FeatureVector]]) -> None:
    """CSV with a header of feature names, rows keyed by triple id."""
    from .util import write_text_atomic

    lines = ["triple_id," + ",".join(catalog.names)]
    for triple_id, fv in rows:
        lines.append(triple_id + "," + ",".join(repr(float(v)) for v in fv.values))
    write_text_atomic(path, "\n".join(lines) + "\n")


def read_feature_matrix(path, catalog: FeatureCatalog) -> list[tuple[str, np.ndarray]]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != ["triple_id"] + list(catalog.names):
            raise ValueError("feature matrix header does not match catalog")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            rows.append((parts[0], np.asarray([float(x) for x in parts[1:]], dtype=np.float64)))
    return rows


def catalog_fingerprint(catalog: FeatureCatalog) -> str:
    from .util import sha256_text

    return sha256_text(canonical_json(list(catalog.names)))[:16]
