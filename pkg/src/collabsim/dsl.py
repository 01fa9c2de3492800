"""Plain-text evaluation DSL: the annotation-file syntax.

Documents are Python-syntax assignment files carrying ``instruction``,
``propositions``, ``temporal_groups``, ``tie_constraints``,
``exclude_final_constraint``, ``skip_episode``, and ``reason``.  Two
compatible extensions are accepted and emitted when needed:
``dependencies`` (PropositionDependency calls) and ``temporal_edges``
(explicit DAG edges for constraints not expressible as groups).

Parsing is total: any input yields either a document or a positioned error.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    ArityError,
    DslSyntaxError,
    IndexOutOfRangeError,
    UnknownPredicateError,
)
from .evaluation import (
    ArgTieConstraint,
    EvaluationFunction,
    Proposition,
    PropositionDependency,
    TemporalConstraint,
    TerminalSatisfactionConstraint,
    render_proposition,
)
from .predicates import ALL_PREDICATES, STATE_PREDICATES

_TWO_LIST = ("is_on_top", "is_inside", "is_in_room", "is_next_to")
_ONE_LIST = STATE_PREDICATES + ("is_on_floor",)

_ARG_MATCH_ALIASES = ("arg_match", "is_same_receptacle", "is_same_room", "is_same_b")


@dataclass
class EvalDslDocument:
    instruction: str = ""
    propositions: list = field(default_factory=list)
    temporal_groups: list = field(default_factory=list)
    temporal_edges: Optional[list] = None
    dependencies: list = field(default_factory=list)
    tie_constraints: list = field(default_factory=list)
    exclude_final_constraint: list = field(default_factory=list)
    skip_episode: bool = False
    reason: str = ""

    def compile(self) -> EvaluationFunction:
        n = len(self.propositions)
        seen_in_group: set[int] = set()
        for group in self.temporal_groups:
            for index in group:
                if not 0 <= index < n:
                    raise IndexOutOfRangeError(
                        f"temporal group index {index} out of range"
                    )
                if index in seen_in_group:
                    raise IndexOutOfRangeError(
                        f"index {index} appears in more than one temporal group"
                    )
                seen_in_group.add(index)
        for index in self.exclude_final_constraint:
            if not 0 <= index < n:
                raise IndexOutOfRangeError(
                    f"exclude_final_constraint index {index} out of range"
                )
        if self.temporal_edges is not None:
            temporal = TemporalConstraint(
                frozenset((int(u), int(v)) for u, v in self.temporal_edges)
            )
        else:
            temporal = TemporalConstraint.from_groups(self.temporal_groups)
        terminal = TerminalSatisfactionConstraint(
            frozenset(set(range(n)) - set(self.exclude_final_constraint))
        )
        return EvaluationFunction(
            propositions=tuple(self.propositions),
            dependencies=tuple(self.dependencies),
            temporal=temporal,
            ties=tuple(self.tie_constraints),
            terminal=terminal,
        )


def _pos(node: ast.AST) -> tuple[int, int]:
    return getattr(node, "lineno", 0), getattr(node, "col_offset", 0)


def _err(node: ast.AST, message: str) -> DslSyntaxError:
    line, col = _pos(node)
    return DslSyntaxError(message, line, col)


def _const_value(node: ast.AST):
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        inner = _const_value(node.operand)
        if isinstance(inner, (int, float)):
            return -inner
    raise _err(node, "expected a literal value")


def _string(node: ast.AST) -> str:
    value = _const_value(node)
    if not isinstance(value, str):
        raise _err(node, "expected a string")
    return value


def _int(node: ast.AST) -> int:
    value = _const_value(node)
    if isinstance(value, bool) or not isinstance(value, int):
        raise _err(node, "expected an integer")
    return value


def _bool(node: ast.AST) -> bool:
    value = _const_value(node)
    if not isinstance(value, bool):
        raise _err(node, "expected True or False")
    return value


def _int_list(node: ast.AST) -> list[int]:
    if not isinstance(node, (ast.List, ast.Tuple)):
        raise _err(node, "expected a list of integers")
    return [_int(item) for item in node.elts]


def _string_list(node: ast.AST) -> list[str]:
    """A list of strings; a bare string acts as a singleton list."""
    if isinstance(node, ast.Constant) and isinstance(node.value, str):
        return [node.value]
    if not isinstance(node, (ast.List, ast.Tuple)):
        raise _err(node, "expected a list of entity names")
    return [_string(item) for item in node.elts]


def _parse_proposition(node: ast.AST) -> Proposition:
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name):
        raise _err(node, "expected a predicate call")
    name = node.func.id
    if name not in ALL_PREDICATES:
        raise UnknownPredicateError(f"unknown predicate {name}")
    arg_lists = tuple(tuple(_string_list(a)) for a in node.args)
    number = 1
    arg_match = False
    threshold: Optional[float] = None
    for kw in node.keywords:
        if kw.arg == "number":
            number = _int(kw.value)
        elif kw.arg in _ARG_MATCH_ALIASES:
            arg_match = _bool(kw.value)
        elif kw.arg == "l2_threshold":
            value = _const_value(kw.value)
            if not isinstance(value, (int, float)):
                raise _err(kw.value, "expected a number")
            threshold = float(value)
        else:
            raise _err(node, f"unknown keyword {kw.arg!r} for {name}")
    if name in _TWO_LIST and len(arg_lists) != 2:
        raise ArityError(f"{name} takes two entity lists, got {len(arg_lists)}")
    if name in _ONE_LIST and len(arg_lists) != 1:
        raise ArityError(f"{name} takes one entity list, got {len(arg_lists)}")
    if name == "is_clustered" and len(arg_lists) < 2:
        raise ArityError("is_clustered takes at least two entity lists")
    try:
        return Proposition(name, arg_lists, number, arg_match, threshold)
    except ValueError as exc:
        raise _err(node, str(exc))


def _parse_tie(node: ast.AST) -> ArgTieConstraint:
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name):
        raise _err(node, "expected SameArgConstraint or DifferentArgConstraint")
    name = node.func.id
    if name not in ("SameArgConstraint", "DifferentArgConstraint"):
        raise _err(node, f"unknown constraint {name}")
    args = list(node.args)
    kwargs = {kw.arg: kw.value for kw in node.keywords}
    if "proposition_indices" in kwargs:
        args.insert(0, kwargs.pop("proposition_indices"))
    for alias in ("arg_indices", "arg_index"):
        if alias in kwargs:
            args.insert(1, kwargs.pop(alias))
    if kwargs:
        raise _err(node, f"unknown keyword {next(iter(kwargs))!r}")
    if len(args) != 2:
        raise ArityError(f"{name} takes proposition indices and argument slots")
    indices = _int_list(args[0])
    slots = _int_list(args[1])
    # a short slot list broadcasts its last entry over the remaining
    # propositions (annotated files use this shorthand)
    if 0 < len(slots) < len(indices):
        slots = slots + [slots[-1]] * (len(indices) - len(slots))
    try:
        return ArgTieConstraint(
            "same" if name == "SameArgConstraint" else "different",
            tuple(indices),
            tuple(slots),
        )
    except ValueError as exc:
        raise _err(node, str(exc))


def _parse_dependency(node: ast.AST) -> PropositionDependency:
    if (
        not isinstance(node, ast.Call)
        or not isinstance(node.func, ast.Name)
        or node.func.id != "PropositionDependency"
    ):
        raise _err(node, "expected a PropositionDependency call")
    args = list(node.args)
    kwargs = {kw.arg: kw.value for kw in node.keywords}
    for key in ("proposition_indices", "depends_on", "relation_type"):
        if key in kwargs:
            args.append(kwargs.pop(key))
    if kwargs or len(args) != 3:
        raise ArityError("PropositionDependency takes indices, heads, and a relation")
    try:
        return PropositionDependency(
            tuple(_int_list(args[0])), tuple(_int_list(args[1])), _string(args[2])
        )
    except ValueError as exc:
        raise _err(node, str(exc))


def parse_eval_document(text: str) -> EvalDslDocument:
    try:
        tree = ast.parse(text)
    except SyntaxError as exc:
        raise DslSyntaxError(exc.msg or "invalid syntax", exc.lineno or 0, exc.offset or 0)
    except (ValueError, RecursionError) as exc:
        raise DslSyntaxError(str(exc))

    doc = EvalDslDocument()
    saw_propositions = False
    for stmt in tree.body:
        if not isinstance(stmt, ast.Assign) or len(stmt.targets) != 1:
            continue
        target = stmt.targets[0]
        if not isinstance(target, ast.Name):
            continue
        name, value = target.id, stmt.value
        if name == "instruction":
            doc.instruction = _string(value).strip()
        elif name == "propositions":
            if not isinstance(value, ast.List):
                raise _err(value, "propositions must be a list")
            doc.propositions = [_parse_proposition(item) for item in value.elts]
            saw_propositions = True
        elif name in ("temporal_groups", "proposition_order"):
            if not isinstance(value, ast.List):
                raise _err(value, f"{name} must be a list of lists")
            doc.temporal_groups = [_int_list(item) for item in value.elts]
        elif name == "temporal_edges":
            if not isinstance(value, ast.List):
                raise _err(value, "temporal_edges must be a list of pairs")
            edges = []
            for item in value.elts:
                pair = _int_list(item)
                if len(pair) != 2:
                    raise _err(item, "a temporal edge is a pair of indices")
                edges.append((pair[0], pair[1]))
            doc.temporal_edges = edges
        elif name == "dependencies":
            if not isinstance(value, ast.List):
                raise _err(value, "dependencies must be a list")
            doc.dependencies = [_parse_dependency(item) for item in value.elts]
        elif name == "tie_constraints":
            if not isinstance(value, ast.List):
                raise _err(value, "tie_constraints must be a list")
            doc.tie_constraints = [_parse_tie(item) for item in value.elts]
        elif name == "exclude_final_constraint":
            doc.exclude_final_constraint = _int_list(value)
        elif name == "skip_episode":
            doc.skip_episode = _bool(value)
        elif name == "reason":
            doc.reason = _string(value)
    if not saw_propositions:
        raise DslSyntaxError("missing propositions section", 1, 0)
    return doc


def parse_eval_dsl(text: str) -> EvaluationFunction:
    return parse_eval_document(text).compile()


def _render_tie(tie: ArgTieConstraint) -> str:
    name = "SameArgConstraint" if tie.kind == "same" else "DifferentArgConstraint"
    return f"{name}({list(tie.proposition_indices)}, {list(tie.arg_indices)})"


def _render_dependency(dep: PropositionDependency) -> str:
    return (
        f"PropositionDependency({list(dep.proposition_indices)}, "
        f"{list(dep.depends_on)}, '{dep.relation_type}')"
    )


def _render_list(name: str, items: list[str]) -> str:
    body = "".join(f"    {item},\n" for item in items)
    return f"{name} = [\n{body}]"


def serialize_eval_document(doc: EvalDslDocument) -> str:
    instruction = doc.instruction.replace('"""', r"\"\"\"")
    sections = [f'instruction = """\n{instruction}\n"""']
    sections.append(
        _render_list("propositions", [render_proposition(p) for p in doc.propositions])
    )
    if doc.temporal_edges is not None:
        sections.append(
            _render_list(
                "temporal_edges", [f"({u}, {v})" for u, v in sorted(doc.temporal_edges)]
            )
        )
    else:
        sections.append(
            _render_list("temporal_groups", [str(list(g)) for g in doc.temporal_groups])
        )
    if doc.dependencies:
        sections.append(
            _render_list("dependencies", [_render_dependency(d) for d in doc.dependencies])
        )
    sections.append(
        _render_list("tie_constraints", [_render_tie(t) for t in doc.tie_constraints])
    )
    sections.append(
        f"exclude_final_constraint = {sorted(doc.exclude_final_constraint)}"
    )
    sections.append(f"skip_episode = {doc.skip_episode}")
    sections.append(f'reason = "{doc.reason}"')
    return "\n\n".join(sections) + "\n"


def document_from_function(fn: EvaluationFunction, instruction: str = "") -> EvalDslDocument:
    """Rebuild the carrier document for serialization."""
    n = len(fn.propositions)
    doc = EvalDslDocument(
        instruction=instruction,
        propositions=list(fn.propositions),
        dependencies=list(fn.dependencies),
        tie_constraints=list(fn.ties),
        exclude_final_constraint=sorted(
            set(range(n)) - set(fn.terminal.proposition_indices)
        ),
    )
    if fn.temporal.groups is not None:
        doc.temporal_groups = [list(g) for g in fn.temporal.groups]
    elif fn.temporal.edges:
        doc.temporal_edges = sorted(fn.temporal.edges)
    return doc


def serialize_eval_dsl(fn: EvaluationFunction, instruction: str = "") -> str:
    return serialize_eval_document(document_from_function(fn, instruction))
