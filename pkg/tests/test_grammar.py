import random

import pytest

from collabsim.errors import GrammarRejectionError
from collabsim.grammar import build_grammar
from collabsim.skills import STATE_MODIFYING_SKILLS, SkillCall

OBJECTS = ("cup_1", "vase_0", "book_1", "kettle_0")
FURNITURE = ("table_35", "table_1", "table_10", "counter_22", "chest_of_drawers_1",
             "cabinet_65", "floor_kitchen_1")
ROOMS = ("kitchen_1", "living_room_1", "bedroom_4")


@pytest.fixture
def human():
    return build_grammar(OBJECTS, FURNITURE, ROOMS, "human")


@pytest.fixture
def robot():
    return build_grammar(OBJECTS, FURNITURE, ROOMS, "robot")


PUBLISHED_CALLS = [
    "Navigate[counter_22]",
    "Explore[kitchen_1]",
    "Explore[living_room_1]",
    "Open[chest_of_drawers_1]",
    "Close[chest_of_drawers_1]",
    "Pick[cup_1]",
    "Navigate[cabinet_65]",
    "Navigate[table_35]",
    "Navigate[vase_0]",
    "Pick[vase_0]",
    "Open[table_35]",
    "Place[vase_0, on, table_35, none, none]",
    "Place[book_1, on, table_35, none, none]",
    "Rearrange[book_1, on, table_35, none, none]",
    "Rearrange[book_1, on, table_35, next_to, vase_0]",
    "Wait[]",
    "Done[]",
]


def test_accepts_published_call_strings(human):
    # Open[table_35] needs table_35 in the furniture terminals; arity and
    # terminal checks are the grammar's, affordances are the simulator's
    for text in PUBLISHED_CALLS:
        call = human.validate_and_parse(text)
        assert isinstance(call, SkillCall)


def test_dynamic_terminals(human):
    assert human.accepts("Pick[cup_1]")
    assert not human.accepts("Pick[cup_2]")
    assert not human.accepts("Pick[table_35]")  # furniture is not an object
    assert human.accepts("Navigate[table_35]")
    assert human.accepts("Navigate[kitchen_1]")
    assert human.accepts("Navigate[cup_1]")


def test_place_five_fields(human):
    assert human.accepts("Place[cup_1, on, table_1, none, none]")
    assert human.accepts("Place[cup_1, within, cabinet_65, None, None]")
    assert human.accepts("Place[cup_1, on, table_1, next_to, vase_0]")
    assert human.accepts("Place[cup_1, on, table_1, next_to, counter_22]")
    assert not human.accepts("Place[cup_1, under, table_1, none, none]")
    assert not human.accepts("Place[cup_1, on, table_1, none]")
    assert not human.accepts("Place[cup_1, on, table_1]")
    assert not human.accepts("Place[cup_1, on, cup_1, none, none]")  # object slot


def test_whitespace_rule(human):
    assert human.accepts("Place[cup_1,on,table_1,none,none]")
    assert human.accepts("Place[cup_1,  on,   table_1,  none,  none]")
    # WS is only licensed after commas (and around the none pair)
    assert not human.accepts("Place[ cup_1, on, table_1, none, none]")
    assert not human.accepts("Place[cup_1 , on, table_1, none, none]")


def test_role_gate(human, robot):
    for skill in STATE_MODIFYING_SKILLS:
        for args in ("cup_1", "kettle_0", "table_1"):
            text = f"{skill}[{args}]"
            assert not robot.accepts(text), text
    assert robot.accepts("Rearrange[book_1, on, table_35, none, none]")
    assert human.accepts("Fill[kettle_0]")
    assert human.accepts("Clean[cup_1]")
    assert human.accepts("Clean[table_1]")  # furniture may be cleaned
    assert not human.accepts("Fill[table_1]")  # Fill takes an object


def test_longest_match_on_prefix_names(human):
    # table_1 and table_10 share a prefix; the longer name must win
    call = human.validate_and_parse("Navigate[table_10]")
    assert call.args == ("table_10",)


def test_parse_error_reports_position(human):
    with pytest.raises(GrammarRejectionError) as exc:
        human.validate_and_parse("Pick[cup_9]")
    assert exc.value.position == 5
    assert exc.value.expected == "object"
    with pytest.raises(GrammarRejectionError):
        human.validate_and_parse("Pick[cup_1] and more")
    with pytest.raises(GrammarRejectionError):
        human.validate_and_parse("Hop[cup_1]")


def test_perception_tools_optional():
    bare = build_grammar(OBJECTS, FURNITURE, ROOMS, "human")
    assert not bare.accepts("FindObjectTool[toys on the floor]")
    tools = build_grammar(OBJECTS, FURNITURE, ROOMS, "human", include_perception_tools=True)
    parsed = tools.validate_and_parse("FindObjectTool[toys on the floor]")
    assert parsed.query == "toys on the floor"
    assert tools.accepts("FindAgentActionTool[]")
    assert tools.accepts("FindReceptacleTool[a kitchen counter]")


def test_dump_contains_instantiated_terminals(human):
    dump = human.dump()
    assert dump.splitlines()[0].startswith("root ::= Navigate | Pick | Place")
    assert '"cup_1"' in dump and '"table_35"' in dump and '"kitchen_1"' in dump
    assert 'spatial_relation ::= "on" | "within"' in dump
    assert 'Done ::= "Done[]"' in dump


def random_call(rng: random.Random, grammar) -> SkillCall:
    skill = rng.choice(grammar.skills)
    if skill in ("Wait", "Done"):
        return SkillCall.make(skill)
    if skill in ("Place", "Rearrange"):
        obj = rng.choice(OBJECTS)
        relation = rng.choice(("on", "within"))
        furniture = rng.choice(FURNITURE)
        if rng.random() < 0.5:
            return SkillCall.make(skill, obj, relation, furniture, "none", "none")
        ref = rng.choice(OBJECTS + FURNITURE)
        return SkillCall.make(skill, obj, relation, furniture, "next_to", ref)
    pools = {
        "Navigate": OBJECTS + FURNITURE + ROOMS,
        "Pick": OBJECTS,
        "Open": FURNITURE,
        "Close": FURNITURE,
        "PowerOn": OBJECTS + FURNITURE,
        "PowerOff": OBJECTS + FURNITURE,
        "Clean": OBJECTS + FURNITURE,
        "Fill": OBJECTS,
        "Pour": OBJECTS,
        "Explore": ROOMS,
    }
    return SkillCall.make(skill, rng.choice(pools[skill]))


def test_round_trip_random_derivations(human, robot):
    rng = random.Random(42)
    for _ in range(2000):
        grammar = rng.choice((human, robot))
        call = random_call(rng, grammar)
        text = call.to_string()
        assert grammar.accepts(text), text
        assert grammar.validate_and_parse(text) == call


def test_entity_mutation_fuzzing_rejected(human):
    """Mutating any entity name to an unknown id must be rejected."""
    rng = random.Random(43)
    rejected = 0
    total = 0
    for _ in range(2000):
        call = random_call(rng, human)
        if not call.args:
            continue
        index = rng.randrange(len(call.args))
        if call.args[index] in ("on", "within", "none", "next_to"):
            continue
        mutated = list(call.args)
        mutated[index] = mutated[index] + "9"  # unknown id, same shape
        text = f"{call.skill}[{', '.join(mutated)}]"
        total += 1
        if not human.accepts(text):
            rejected += 1
    assert total > 0 and rejected == total
