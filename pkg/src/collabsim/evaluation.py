"""Task evaluation over a trace of world snapshots.

An evaluation function is a list of propositions (predicates instantiated
with entity lists), dependencies that gate *when* each proposition is
queried, and constraints on *how* propositions must be satisfied: a temporal
DAG, same/different-argument ties, and terminal satisfaction.  Evaluating a
trace yields Percent Complete, Success (PC == 1), and a failure explanation.

``brute_force_reference`` is the exhaustive oracle used by the differential
tests; it re-derives satisfaction and the countable set by enumeration and
must agree exactly with the incremental evaluator on small instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Optional

from .errors import (
    IndexOutOfRangeError,
    InstanceTooLargeError,
    OutOfOrderStateError,
)
from .predicates import (
    ALL_PREDICATES,
    DEFAULT_CONFIG,
    STATE_PREDICATES,
    PredicateConfig,
    eval_predicate,
)
from .world import WorldState, floor_name

if TYPE_CHECKING:  # pragma: no cover
    from .sceneio import EpisodeSpec, SceneSpec

# predicates taking a single entity list
SINGLE_LIST_PREDICATES = STATE_PREDICATES + ("is_on_floor",)

AFFORDANCE_OF_PREDICATE = {
    "is_clean": "cleanable",
    "is_dirty": "cleanable",
    "is_filled": "fillable",
    "is_empty": "fillable",
    "is_powered_on": "powerable",
    "is_powered_off": "powerable",
}

# an assignment is a frozenset of (subject, target) pairs; target is None for
# single-list predicates
Assignment = frozenset


def assignment_key(assignment: frozenset) -> tuple:
    """Stable sort key (None targets are not comparable with strings)."""
    return tuple(sorted((s, t if t is not None else "") for s, t in assignment))


@dataclass(frozen=True)
class Proposition:
    predicate: str
    arg_lists: tuple[tuple[str, ...], ...]
    number: int = 1
    arg_match: bool = False
    next_to_threshold: Optional[float] = None

    def __post_init__(self) -> None:
        if self.predicate not in ALL_PREDICATES:
            raise ValueError(f"unknown predicate {self.predicate}")
        if not self.arg_lists or not all(self.arg_lists):
            raise ValueError("argument lists must be non-empty")
        if self.number < 1 or self.number > len(self.arg_lists[0]):
            raise ValueError("number must be in [1, len(first list)]")
        if self.arg_match and len(self.arg_lists) < 2:
            raise ValueError("arg_match requires a second argument list")


@dataclass(frozen=True)
class PropositionDependency:
    proposition_indices: tuple[int, ...]
    depends_on: tuple[int, ...]
    relation_type: str  # after_satisfied | after_unsatisfied | while_satisfied

    def __post_init__(self) -> None:
        if self.relation_type not in (
            "after_satisfied",
            "after_unsatisfied",
            "while_satisfied",
        ):
            raise ValueError(f"unknown relation type {self.relation_type}")
        if set(self.proposition_indices) & set(self.depends_on):
            raise ValueError("dependent and head index sets must be disjoint")


@dataclass(frozen=True)
class TemporalConstraint:
    """DAG over proposition indices; edge (u, v) means u strictly before v."""

    edges: frozenset = frozenset()
    groups: Optional[tuple[tuple[int, ...], ...]] = None  # provenance only

    def __post_init__(self) -> None:
        _check_acyclic(self.edges)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TemporalConstraint) and self.edges == other.edges

    def __hash__(self) -> int:
        return hash(self.edges)

    @staticmethod
    def from_groups(groups: Iterable[Iterable[int]]) -> "TemporalConstraint":
        """Pairwise product of consecutive groups."""
        groups = tuple(tuple(g) for g in groups)
        edges = set()
        for earlier, later in zip(groups, groups[1:]):
            for u in earlier:
                for v in later:
                    edges.add((u, v))
        return TemporalConstraint(frozenset(edges), groups)


def _check_acyclic(edges: Iterable[tuple[int, int]]) -> None:
    succ: dict[int, set[int]] = {}
    nodes = set()
    for u, v in edges:
        succ.setdefault(u, set()).add(v)
        nodes.update((u, v))
    seen: dict[int, int] = {}  # 1 = on stack, 2 = done

    def visit(n: int) -> None:
        seen[n] = 1
        for m in succ.get(n, ()):
            if seen.get(m) == 1:
                raise ValueError("temporal constraint graph has a cycle")
            if m not in seen:
                visit(m)
        seen[n] = 2

    for n in nodes:
        if n not in seen:
            visit(n)


@dataclass(frozen=True)
class ArgTieConstraint:
    kind: str  # "same" | "different"
    proposition_indices: tuple[int, ...]
    arg_indices: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.kind not in ("same", "different"):
            raise ValueError(f"unknown tie kind {self.kind}")
        if len(self.proposition_indices) != len(self.arg_indices):
            raise ValueError("one argument slot per proposition required")
        if len(self.proposition_indices) < 2:
            raise ValueError("a tie needs at least two propositions")


@dataclass(frozen=True)
class TerminalSatisfactionConstraint:
    proposition_indices: frozenset = frozenset()


@dataclass(frozen=True)
class EvaluationFunction:
    propositions: tuple[Proposition, ...]
    dependencies: tuple[PropositionDependency, ...] = ()
    temporal: TemporalConstraint = TemporalConstraint()
    ties: tuple[ArgTieConstraint, ...] = ()
    terminal: TerminalSatisfactionConstraint = TerminalSatisfactionConstraint()

    def __post_init__(self) -> None:
        n = len(self.propositions)

        def check(indices: Iterable[int], what: str) -> None:
            for i in indices:
                if not 0 <= i < n:
                    raise IndexOutOfRangeError(f"{what} index {i} out of range")

        for dep in self.dependencies:
            check(dep.proposition_indices, "dependency")
            check(dep.depends_on, "dependency head")
        for u, v in self.temporal.edges:
            check((u, v), "temporal")
        for tie in self.ties:
            check(tie.proposition_indices, "tie")
            for prop_index, arg_index in zip(tie.proposition_indices, tie.arg_indices):
                prop = self.propositions[prop_index]
                if prop.predicate == "is_clustered":
                    raise ValueError("arg ties on is_clustered are not supported")
                if not 0 <= arg_index < len(prop.arg_lists):
                    raise IndexOutOfRangeError(
                        f"tie argument slot {arg_index} invalid for proposition {prop_index}"
                    )
        check(self.terminal.proposition_indices, "terminal")


# -- proposition satisfaction ------------------------------------------------


def _prop_config(prop: Proposition, cfg: PredicateConfig) -> PredicateConfig:
    if prop.next_to_threshold is not None and prop.predicate == "is_next_to":
        return replace(cfg, next_to_l2_threshold=prop.next_to_threshold)
    return cfg


def eval_proposition_at(
    prop: Proposition, state: WorldState, cfg: PredicateConfig = DEFAULT_CONFIG
) -> frozenset:
    """All minimal satisfying assignments of the proposition at one state.

    An assignment picks ``number`` distinct subjects from the first list,
    each paired with a target from the second list for which the predicate
    holds; with ``arg_match`` every pair shares one target.  Empty set means
    unsatisfied.
    """
    cfg = _prop_config(prop, cfg)
    out: set = set()
    if prop.predicate == "is_clustered":
        for combo in itertools.product(*prop.arg_lists):
            if len(set(combo)) != len(combo):
                continue
            if eval_predicate("is_clustered", list(combo), state, cfg):
                out.add(frozenset((e, None) for e in combo))
        return frozenset(out)

    subjects = prop.arg_lists[0]
    if len(prop.arg_lists) == 1:
        true_subjects = [
            s for s in subjects if eval_predicate(prop.predicate, [s], state, cfg)
        ]
        for combo in itertools.combinations(true_subjects, prop.number):
            out.add(frozenset((s, None) for s in combo))
        return frozenset(out)

    targets = prop.arg_lists[1]
    valid: dict[str, list[str]] = {}
    for s in subjects:
        hits = [
            t
            for t in targets
            if t != s and eval_predicate(prop.predicate, [s, t], state, cfg)
        ]
        if hits:
            valid[s] = hits
    for combo in itertools.combinations(list(valid), prop.number):
        if prop.arg_match:
            shared = set(valid[combo[0]])
            for s in combo[1:]:
                shared &= set(valid[s])
            for t in sorted(shared):
                out.add(frozenset((s, t) for s in combo))
        else:
            for choice in itertools.product(*(valid[s] for s in combo)):
                out.add(frozenset(zip(combo, choice)))
    return frozenset(out)


def assignment_slot(assignment: frozenset, arg_index: int) -> frozenset:
    """Entities an assignment uses in the given argument slot (0 or 1)."""
    if arg_index == 0:
        return frozenset(s for s, _ in assignment)
    return frozenset(t for _, t in assignment if t is not None)


def ties_hold(
    tie: ArgTieConstraint, chosen: dict[int, frozenset], counted: Iterable[int]
) -> bool:
    """Check one tie over the counted propositions it mentions."""
    values = [
        assignment_slot(chosen[i], arg_index)
        for i, arg_index in zip(tie.proposition_indices, tie.arg_indices)
        if i in counted and i in chosen
    ]
    if len(values) < 2:
        return True
    if tie.kind == "same":
        return all(v == values[0] for v in values[1:])
    return all(
        values[i].isdisjoint(values[j])
        for i in range(len(values))
        for j in range(i + 1, len(values))
    )


# -- incremental evaluator ---------------------------------------------------


@dataclass
class PropositionRecord:
    evaluable_from: Optional[int] = None
    first_satisfied_step: Optional[int] = None
    assignment_sets: dict = field(default_factory=dict)  # step -> frozenset
    satisfied_at_end: bool = False


@dataclass
class EvaluationReport:
    pc: float
    success: bool
    failure_explanation: str
    records: list
    counted: frozenset
    reasons: dict  # uncounted index -> reason tag
    violated_constraints: list
    witnesses: dict  # counted index -> (step, assignment)


REASON_DEPENDENCY = "dependency never opened"
REASON_UNSATISFIED = "never satisfied"
REASON_TEMPORAL = "out of temporal order"
REASON_TIE = "arg-tie violated"
REASON_TERMINAL = "not satisfied at end"


class Evaluator:
    """Consumes snapshots in strictly increasing step order."""

    def __init__(self, fn: EvaluationFunction, cfg: PredicateConfig = DEFAULT_CONFIG):
        self.fn = fn
        self.cfg = cfg
        self.records = [PropositionRecord() for _ in fn.propositions]
        self.last_step: Optional[int] = None
        self._deps_of: dict[int, list[PropositionDependency]] = {}
        for dep in fn.dependencies:
            for i in dep.proposition_indices:
                self._deps_of.setdefault(i, []).append(dep)

    def step(self, state: WorldState) -> None:
        if self.last_step is not None and state.step <= self.last_step:
            raise OutOfOrderStateError(
                f"state step {state.step} not after {self.last_step}"
            )
        now = state.step
        raw = [
            eval_proposition_at(p, state, self.cfg) for p in self.fn.propositions
        ]

        def gate_open(i: int) -> bool:
            for dep in self._deps_of.get(i, ()):
                heads = dep.depends_on
                if dep.relation_type == "after_satisfied":
                    if not all(
                        self.records[h].first_satisfied_step is not None for h in heads
                    ):
                        return False
                elif dep.relation_type == "after_unsatisfied":
                    if not all(
                        self.records[h].first_satisfied_step is not None and not raw[h]
                        for h in heads
                    ):
                        return False
                else:  # while_satisfied
                    if not all(raw[h] for h in heads):
                        return False
            return True

        # same-step head satisfaction may open dependent gates: iterate to
        # fixpoint (monotone in the set of satisfied records)
        open_now = [False] * len(raw)
        changed = True
        while changed:
            changed = False
            for i, record in enumerate(self.records):
                if open_now[i]:
                    continue
                if gate_open(i):
                    open_now[i] = True
                    if record.evaluable_from is None:
                        record.evaluable_from = now
                    if raw[i]:
                        record.assignment_sets[now] = raw[i]
                        if record.first_satisfied_step is None:
                            record.first_satisfied_step = now
                            changed = True
        for i, record in enumerate(self.records):
            record.satisfied_at_end = open_now[i] and bool(raw[i])
        self.last_step = now

    # -- finalisation ------------------------------------------------------

    def _eligible(self) -> tuple[set, dict]:
        """Indices passing satisfaction, temporal, and terminal checks."""
        fn, records = self.fn, self.records
        reasons: dict[int, str] = {}
        eligible: set[int] = set()
        first = [r.first_satisfied_step for r in records]
        for i, record in enumerate(records):
            if record.evaluable_from is None:
                reasons[i] = REASON_DEPENDENCY
                continue
            if first[i] is None:
                reasons[i] = REASON_UNSATISFIED
                continue
            ordered = all(
                first[u] is not None and first[u] < first[i]
                for u, v in fn.temporal.edges
                if v == i
            )
            if not ordered:
                reasons[i] = REASON_TEMPORAL
                continue
            if i in fn.terminal.proposition_indices and not record.satisfied_at_end:
                reasons[i] = REASON_TERMINAL
                continue
            eligible.add(i)
        return eligible, reasons

    def _choices(self, i: int) -> list:
        """All recorded assignments of proposition i, canonically ordered."""
        seen = set()
        out = []
        for step in sorted(self.records[i].assignment_sets):
            for assignment in sorted(
                self.records[i].assignment_sets[step], key=assignment_key
            ):
                if assignment not in seen:
                    seen.add(assignment)
                    out.append((step, assignment))
        return out

    def _resolve_ties(self, eligible: set) -> tuple[set, dict]:
        """Maximal tie-consistent counted subset plus witnesses."""
        fn = self.fn
        tied = sorted(
            {i for tie in fn.ties for i in tie.proposition_indices} & eligible
        )
        witnesses: dict[int, tuple] = {}
        counted = set(eligible) - set(tied)
        for i in counted:
            witnesses[i] = self._choices(i)[0]
        if not tied:
            return counted, witnesses

        # connected components of the tie graph restricted to eligible props
        parent = {i: i for i in tied}

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for tie in fn.ties:
            members = [i for i in tie.proposition_indices if i in parent]
            for a, b in zip(members, members[1:]):
                parent[find(a)] = find(b)
        components: dict[int, list[int]] = {}
        for i in tied:
            components.setdefault(find(i), []).append(i)

        for members in components.values():
            members = sorted(members)
            relevant = [
                tie
                for tie in fn.ties
                if any(i in members for i in tie.proposition_indices)
            ]
            best = self._max_consistent(members, relevant)
            counted.update(best.keys())
            witnesses.update(best)
        return counted, witnesses

    def _max_consistent(self, members: list, ties: list) -> dict:
        """Largest subset of members admitting a tie-consistent assignment."""
        choice_lists = {i: self._choices(i) for i in members}

        def feasible(subset: tuple) -> Optional[dict]:
            chosen: dict[int, frozenset] = {}
            picked: dict[int, tuple] = {}

            def consistent() -> bool:
                return all(ties_hold(t, chosen, subset) for t in ties)

            def backtrack(k: int) -> bool:
                if k == len(subset):
                    return True
                i = subset[k]
                for step, assignment in choice_lists[i]:
                    chosen[i] = assignment
                    picked[i] = (step, assignment)
                    if consistent() and backtrack(k + 1):
                        return True
                    del chosen[i]
                    del picked[i]
                return False

            return picked if backtrack(0) else None

        for size in range(len(members), 0, -1):
            for subset in itertools.combinations(members, size):
                result = feasible(subset)
                if result is not None:
                    return result
        return {}

    def finalize(self, final_state: Optional[WorldState] = None) -> EvaluationReport:
        if final_state is not None and (
            self.last_step is None or final_state.step > self.last_step
        ):
            self.step(final_state)
        if self.last_step is None:
            raise OutOfOrderStateError("no states consumed")

        eligible, reasons = self._eligible()
        counted, witnesses = self._resolve_ties(eligible)
        for i in eligible - counted:
            reasons[i] = REASON_TIE

        fn = self.fn
        total = len(fn.propositions)
        pc = len(counted) / total if total else 1.0
        success = pc == 1.0

        violated: list[str] = []
        for u, v in sorted(fn.temporal.edges):
            if reasons.get(v) == REASON_TEMPORAL:
                violated.append(f"temporal order {u} -> {v}")
        for tie in fn.ties:
            if any(reasons.get(i) == REASON_TIE for i in tie.proposition_indices):
                kind = "SameArgConstraint" if tie.kind == "same" else "DifferentArgConstraint"
                violated.append(
                    f"{kind} over propositions {list(tie.proposition_indices)}"
                )
        for i in sorted(fn.terminal.proposition_indices):
            if reasons.get(i) == REASON_TERMINAL:
                violated.append(f"terminal satisfaction of proposition {i}")

        report = EvaluationReport(
            pc=pc,
            success=success,
            failure_explanation="",
            records=self.records,
            counted=frozenset(counted),
            reasons=reasons,
            violated_constraints=violated,
            witnesses=witnesses,
        )
        report.failure_explanation = explain_failure(report, fn)
        return report


def step_evaluator(ev: Evaluator, state: WorldState) -> Evaluator:
    ev.step(state)
    return ev


def render_proposition(prop: Proposition) -> str:
    parts = [
        "[" + ", ".join(f"'{e}'" for e in entities) + "]"
        for entities in prop.arg_lists
    ]
    if prop.number != 1:
        parts.append(f"number={prop.number}")
    if prop.arg_match:
        parts.append("arg_match=True")
    if prop.next_to_threshold is not None:
        parts.append(f"l2_threshold={prop.next_to_threshold}")
    return f"{prop.predicate}({', '.join(parts)})"


def explain_failure(report: EvaluationReport, fn: EvaluationFunction) -> str:
    """Deterministic template naming every uncounted proposition."""
    if report.success:
        return ""
    lines = [
        f"Task incomplete: {len(report.counted)} of {len(fn.propositions)} "
        "propositions were accomplished."
    ]
    for i, prop in enumerate(fn.propositions):
        reason = report.reasons.get(i)
        if reason is not None:
            lines.append(f"- {render_proposition(prop)}: {reason}")
    for item in report.violated_constraints:
        lines.append(f"- violated constraint: {item}")
    return "\n".join(lines)


def evaluate_trace(
    fn: EvaluationFunction,
    states: Iterable[WorldState],
    cfg: PredicateConfig = DEFAULT_CONFIG,
) -> EvaluationReport:
    ev = Evaluator(fn, cfg)
    for state in states:
        ev.step(state)
    return ev.finalize()


# -- exhaustive oracle -------------------------------------------------------


def _oracle_assignments(
    prop: Proposition, state: WorldState, cfg: PredicateConfig
) -> set:
    """Assignment enumeration by plain nested loops over everything."""
    cfg = _prop_config(prop, cfg)
    found = set()
    if prop.predicate == "is_clustered":
        for combo in itertools.product(*prop.arg_lists):
            if len(set(combo)) == len(combo) and eval_predicate(
                "is_clustered", list(combo), state, cfg
            ):
                found.add(frozenset((e, None) for e in combo))
        return found
    if len(prop.arg_lists) == 1:
        for combo in itertools.combinations(prop.arg_lists[0], prop.number):
            if all(eval_predicate(prop.predicate, [s], state, cfg) for s in combo):
                found.add(frozenset((s, None) for s in combo))
        return found
    for combo in itertools.combinations(prop.arg_lists[0], prop.number):
        for choice in itertools.product(prop.arg_lists[1], repeat=len(combo)):
            if prop.arg_match and len(set(choice)) != 1:
                continue
            pairs = list(zip(combo, choice))
            if any(s == t for s, t in pairs):
                continue
            if all(
                eval_predicate(prop.predicate, [s, t], state, cfg) for s, t in pairs
            ):
                found.add(frozenset(pairs))
    return found


def brute_force_reference(
    fn: EvaluationFunction,
    trace: list,
    cfg: PredicateConfig = DEFAULT_CONFIG,
) -> tuple[float, bool]:
    """Exhaustive re-derivation of (PC, success) for small instances."""
    n = len(fn.propositions)
    if n > 8 or any(
        len(entities) > 4 for p in fn.propositions for entities in p.arg_lists
    ):
        raise InstanceTooLargeError("oracle accepts <= 8 propositions, <= 4 entities per list")
    if not trace:
        raise OutOfOrderStateError("no states consumed")

    steps = [s.step for s in trace]
    raw: list[list[set]] = [
        [_oracle_assignments(p, state, cfg) for p in fn.propositions]
        for state in trace
    ]

    deps_of: dict[int, list[PropositionDependency]] = {}
    for dep in fn.dependencies:
        for i in dep.proposition_indices:
            deps_of.setdefault(i, []).append(dep)

    first_sat: list[Optional[int]] = [None] * n
    evaluable: list[Optional[int]] = [None] * n
    open_at_final = [False] * n
    evidence: list[set] = [set() for _ in range(n)]

    for t, state in enumerate(trace):

        def gate(i: int, first: list) -> bool:
            for dep in deps_of.get(i, ()):
                if dep.relation_type == "after_satisfied":
                    if not all(first[h] is not None for h in dep.depends_on):
                        return False
                elif dep.relation_type == "after_unsatisfied":
                    if not all(
                        first[h] is not None and not raw[t][h] for h in dep.depends_on
                    ):
                        return False
                else:
                    if not all(raw[t][h] for h in dep.depends_on):
                        return False
            return True

        current = list(first_sat)
        opened = [False] * n
        while True:
            progress = False
            for i in range(n):
                if not opened[i] and gate(i, current):
                    opened[i] = True
                    if evaluable[i] is None:
                        evaluable[i] = steps[t]
                    if raw[t][i] and current[i] is None:
                        current[i] = steps[t]
                        progress = True
            if not progress:
                break
        for i in range(n):
            if opened[i] and raw[t][i]:
                evidence[i].update(raw[t][i])
        first_sat = current
        if t == len(trace) - 1:
            open_at_final = [opened[i] and bool(raw[t][i]) for i in range(n)]

    eligible = set()
    for i in range(n):
        if evaluable[i] is None or first_sat[i] is None:
            continue
        if not all(
            first_sat[u] is not None and first_sat[u] < first_sat[i]
            for u, v in fn.temporal.edges
            if v == i
        ):
            continue
        if i in fn.terminal.proposition_indices and not open_at_final[i]:
            continue
        eligible.add(i)

    tied = sorted(
        {i for tie in fn.ties for i in tie.proposition_indices} & eligible
    )
    base = len(eligible) - len(tied)
    best_tied = 0
    for size in range(len(tied), 0, -1):
        if size <= best_tied:
            break
        for subset in itertools.combinations(tied, size):
            option_lists = [sorted(evidence[i], key=assignment_key) for i in subset]
            for picks in itertools.product(*option_lists):
                chosen = dict(zip(subset, picks))
                if all(ties_hold(tie, chosen, set(subset)) for tie in fn.ties):
                    best_tied = size
                    break
            if best_tied == size:
                break
    pc = (base + best_tied) / n if n else 1.0
    return pc, pc == 1.0


# -- feasibility -------------------------------------------------------------


@dataclass(frozen=True)
class FeasibilityIssue:
    kind: str
    message: str


def verify_feasibility(
    fn: EvaluationFunction, scene: "SceneSpec", episode: "EpisodeSpec"
) -> list[FeasibilityIssue]:
    """Static checks that every proposition is evaluable in this episode."""
    issues: list[FeasibilityIssue] = []
    rooms = {r.name for r in scene.rooms}
    furniture = {f.name: f for f in scene.furniture}
    floors = {floor_name(r) for r in rooms}
    objects = {p.object_id: p for p in episode.all_placements()}

    def exists(name: str) -> bool:
        return name in rooms or name in furniture or name in floors or name in objects

    def affordances(name: str):
        if name in furniture:
            return furniture[name].affordances
        if name in objects:
            return objects[name].affordances
        return None

    for index, prop in enumerate(fn.propositions):
        for entities in prop.arg_lists:
            for entity in entities:
                if not exists(entity):
                    issues.append(
                        FeasibilityIssue(
                            "MissingEntity",
                            f"proposition {index}: {entity} does not exist",
                        )
                    )
        if prop.predicate in AFFORDANCE_OF_PREDICATE:
            wanted = AFFORDANCE_OF_PREDICATE[prop.predicate]
            for entity in prop.arg_lists[0]:
                aff = affordances(entity)
                if aff is not None and not getattr(aff, wanted):
                    issues.append(
                        FeasibilityIssue(
                            "MissingAffordance",
                            f"proposition {index}: {entity} lacks {wanted}",
                        )
                    )
        if prop.predicate == "is_inside":
            for entity in prop.arg_lists[1]:
                aff = affordances(entity)
                if aff is not None and not aff.is_receptacle:
                    issues.append(
                        FeasibilityIssue(
                            "NotAReceptacle",
                            f"proposition {index}: {entity} is not a receptacle",
                        )
                    )
        if prop.predicate == "is_in_room":
            for entity in prop.arg_lists[1]:
                if exists(entity) and entity not in rooms:
                    issues.append(
                        FeasibilityIssue(
                            "TypeMismatch",
                            f"proposition {index}: {entity} is not a room",
                        )
                    )
        if prop.number > len(set(prop.arg_lists[0])):
            issues.append(
                FeasibilityIssue(
                    "InsufficientCandidates",
                    f"proposition {index}: number={prop.number} exceeds candidates",
                )
            )
    try:
        _check_acyclic(fn.temporal.edges)
    except ValueError:
        issues.append(FeasibilityIssue("CyclicTemporal", "temporal graph has a cycle"))
    return issues
