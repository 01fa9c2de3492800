"""Dynamic tool-call grammar over an agent's known entities.

The rule set is fixed; the ``object``, ``furniture``, and ``room`` terminals
are instantiated from the agent's observed view, so a call can only name
entities the agent knows exist.  Robot grammars exclude the state-modifying
skills.  Perception tools (FindObjectTool etc.) are included only for the
tools variant; the default summary-based agent omits them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import GrammarRejectionError
from .skills import STATE_MODIFYING_SKILLS, SkillCall

PERCEPTION_TOOLS = (
    "FindReceptacleTool",
    "FindObjectTool",
    "FindAgentActionTool",
    "FindRoomTool",
)

_ROOT_ORDER = (
    "Navigate",
    "Pick",
    "Place",
    "Open",
    "Close",
    "Rearrange",
    "PowerOn",
    "PowerOff",
    "Clean",
    "Fill",
    "Pour",
    "Explore",
    "Wait",
    "FindReceptacleTool",
    "FindObjectTool",
    "FindAgentActionTool",
    "FindRoomTool",
    "Done",
)

_FREE_TEXT = re.compile(r"[ \"'.:,!a-zA-Z_0-9]*")

# terminal class consumed by each single-argument skill
_SINGLE_ARG = {
    "Navigate": "nav_target",
    "Pick": "object",
    "Open": "furniture",
    "Close": "furniture",
    "PowerOn": "obj_or_furniture",
    "PowerOff": "obj_or_furniture",
    "Clean": "obj_or_furniture",
    "Fill": "object",
    "Pour": "object",
    "Explore": "room",
}


@dataclass(frozen=True)
class GrammarInstance:
    objects: tuple[str, ...]
    furniture: tuple[str, ...]
    rooms: tuple[str, ...]
    role: str  # human | robot
    include_perception_tools: bool = False
    skills: tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        if not self.furniture or not self.rooms:
            raise ValueError("furniture and room terminal sets must be non-empty")
        names = [s for s in _ROOT_ORDER]
        if self.role == "robot":
            names = [s for s in names if s not in STATE_MODIFYING_SKILLS]
        if not self.include_perception_tools:
            names = [s for s in names if s not in PERCEPTION_TOOLS]
        object.__setattr__(self, "skills", tuple(names))

    def terminal_set(self, kind: str) -> tuple[str, ...]:
        if kind == "object":
            return self.objects
        if kind == "furniture":
            return self.furniture
        if kind == "room":
            return self.rooms
        if kind == "nav_target":
            return self.furniture + self.rooms + self.objects
        if kind == "obj_or_furniture":
            return self.furniture + self.objects
        raise ValueError(kind)

    # -- parsing -------------------------------------------------------------

    def validate_and_parse(self, text: str) -> SkillCall:
        parser = _Parser(self, text)
        call = parser.parse()
        parser.expect_end()
        return call

    def accepts(self, text: str) -> bool:
        try:
            self.validate_and_parse(text)
            return True
        except GrammarRejectionError:
            return False

    # -- dump ------------------------------------------------------------------

    def dump(self) -> str:
        """The instantiated BNF, one production per line."""

        def alt(values: tuple[str, ...]) -> str:
            return " | ".join(f'"{v}"' for v in values)

        five_field = (
            '{name} ::= "{name}[" object "," WS spatial_relation "," WS furniture '
            '"," WS ((spatial_constraint "," WS obj_or_furniture )| '
            '(("none" | "None") WS "," WS ("none" | "None"))) "]"'
        )
        productions = {
            "Navigate": 'Navigate ::= "Navigate[" nav_target "]"',
            "Pick": 'Pick ::= "Pick[" object "]"',
            "Place": five_field.format(name="Place"),
            "Open": 'Open ::= "Open[" furniture "]"',
            "Close": 'Close ::= "Close[" furniture "]"',
            "Rearrange": five_field.format(name="Rearrange"),
            "PowerOn": 'PowerOn ::= "PowerOn[" obj_or_furniture "]"',
            "PowerOff": 'PowerOff ::= "PowerOff[" obj_or_furniture "]"',
            "Clean": 'Clean ::= "Clean[" obj_or_furniture "]"',
            "Fill": 'Fill ::= "Fill[" object "]"',
            "Pour": 'Pour ::= "Pour[" object "]"',
            "Explore": 'Explore ::= "Explore[" room "]"',
            "Wait": 'Wait ::= "Wait["  "]"',
            "FindReceptacleTool": 'FindReceptacleTool ::= "FindReceptacleTool[" free_text "]"',
            "FindObjectTool": 'FindObjectTool ::= "FindObjectTool[" free_text "]"',
            "FindAgentActionTool": 'FindAgentActionTool ::= "FindAgentActionTool["  "]"',
            "FindRoomTool": 'FindRoomTool ::= "FindRoomTool[" free_text "]"',
            "Done": 'Done ::= "Done[]"',
        }
        lines = ["root ::= " + " | ".join(self.skills)]
        lines.extend(productions[s] for s in self.skills)
        lines.append("nav_target ::= (furniture | room | object)")
        lines.append(f"object ::= {alt(self.objects) or chr(34) + chr(34)}")
        lines.append("obj_or_furniture ::= (furniture | object)")
        lines.append(f"furniture ::= {alt(self.furniture)}")
        lines.append(f"room ::= {alt(self.rooms)}")
        lines.append('spatial_constraint ::= "next_to"')
        lines.append('spatial_relation ::= "on" | "within"')
        lines.append("free_text ::= [ \"'.:,!a-zA-Z_0-9]*")
        lines.append("WS ::= [ ]*")
        return "\n".join(lines)


class _Parser:
    def __init__(self, grammar: GrammarInstance, text: str):
        self.grammar = grammar
        self.text = text
        self.pos = 0

    def error(self, expected: str) -> GrammarRejectionError:
        return GrammarRejectionError(
            f"expected {expected} at position {self.pos}",
            position=self.pos,
            expected=expected,
        )

    def literal(self, token: str) -> None:
        if not self.text.startswith(token, self.pos):
            raise self.error(repr(token))
        self.pos += len(token)

    def ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] == " ":
            self.pos += 1

    def terminal(self, kind: str) -> str:
        values = self.grammar.terminal_set(kind)
        # longest match keeps prefixes like table_1 / table_10 unambiguous
        best = None
        for value in values:
            if self.text.startswith(value, self.pos):
                if best is None or len(value) > len(best):
                    best = value
        if best is None:
            raise self.error(kind)
        self.pos += len(best)
        return best

    def none_token(self) -> str:
        for token in ("none", "None"):
            if self.text.startswith(token, self.pos):
                self.pos += len(token)
                return token
        raise self.error('"none"')

    def free_text(self) -> str:
        match = _FREE_TEXT.match(self.text, self.pos)
        value = match.group(0) if match else ""
        self.pos += len(value)
        return value

    def expect_end(self) -> None:
        if self.pos != len(self.text):
            raise self.error("end of call")

    def parse(self) -> SkillCall:
        grammar = self.grammar
        skill = None
        for name in sorted(grammar.skills, key=len, reverse=True):
            if self.text.startswith(name + "[", self.pos):
                skill = name
                break
        if skill is None:
            raise self.error("a skill name")
        self.pos += len(skill) + 1

        if skill in ("Wait", "Done"):
            self.literal("]")
            return SkillCall.make(skill)
        if skill == "FindAgentActionTool":
            self.literal("]")
            return _ToolCall(skill, "")
        if skill in PERCEPTION_TOOLS:
            text = self.free_text()
            self.literal("]")
            return _ToolCall(skill, text)
        if skill in _SINGLE_ARG:
            value = self.terminal(_SINGLE_ARG[skill])
            self.literal("]")
            return SkillCall.make(skill, value)

        # Place / Rearrange: five comma-separated fields
        obj = self.terminal("object")
        self.literal(",")
        self.ws()
        relation = self._spatial_relation()
        self.literal(",")
        self.ws()
        furniture = self.terminal("furniture")
        self.literal(",")
        self.ws()
        start = self.pos
        try:
            self.literal("next_to")
            self.literal(",")
            self.ws()
            reference = self.terminal("obj_or_furniture")
            constraint = "next_to"
        except GrammarRejectionError:
            self.pos = start
            self.none_token()
            self.ws()
            self.literal(",")
            self.ws()
            self.none_token()
            constraint, reference = "none", "none"
        self.literal("]")
        return SkillCall.make(skill, obj, relation, furniture, constraint, reference)

    def _spatial_relation(self) -> str:
        for token in ("within", "on"):
            if self.text.startswith(token, self.pos):
                self.pos += len(token)
                return token
        raise self.error("spatial_relation")


@dataclass(frozen=True)
class _ToolCall:
    """A perception-tool invocation; resolved by the policy, not the simulator."""

    skill: str
    query: str

    def to_string(self) -> str:
        return f"{self.skill}[{self.query}]"


def build_grammar(
    objects: tuple[str, ...] | list[str],
    furniture: tuple[str, ...] | list[str],
    rooms: tuple[str, ...] | list[str],
    role: str,
    include_perception_tools: bool = False,
) -> GrammarInstance:
    return GrammarInstance(
        tuple(objects), tuple(furniture), tuple(rooms), role, include_perception_tools
    )


def grammar_for_view(observed, role: str, include_perception_tools: bool = False) -> GrammarInstance:
    """Grammar over the entities present in an agent's observed graph."""
    graph = observed.graph
    return build_grammar(
        tuple(graph.objects),
        tuple(graph.furniture),
        tuple(graph.rooms),
        role,
        include_perception_tools,
    )


def validate_and_parse(grammar: GrammarInstance, text: str) -> SkillCall:
    return grammar.validate_and_parse(text)
