import pytest

from collabsim.geometry import BoundingBox, Vec3
from collabsim.world import AffordanceSet, Placement, WorldGraph


def make_two_room_world(seed: int = 0) -> WorldGraph:
    """Kitchen + bedroom with a table, a sink cabinet, a shelf, and a dresser."""
    g = WorldGraph(seed=seed)
    g.add_room("kitchen_1", BoundingBox(Vec3(0, 0, 1.5), Vec3(3, 3, 1.5)))
    g.add_room("bedroom_1", BoundingBox(Vec3(8, 0, 1.5), Vec3(3, 3, 1.5)))
    g.add_adjacency("kitchen_1", "bedroom_1")
    g.add_furniture(
        "table_1", "kitchen_1",
        BoundingBox(Vec3(1.0, 1.0, 0.4), Vec3(0.7, 0.45, 0.4)),
    )
    g.add_furniture(
        "cabinet_1", "kitchen_1",
        BoundingBox(Vec3(-1.5, 0.0, 0.5), Vec3(0.5, 0.35, 0.5)),
        AffordanceSet(is_receptacle=True, openable=True, has_faucet=True),
    )
    g.add_furniture(
        "shelves_1", "kitchen_1",
        BoundingBox(Vec3(0.0, -2.0, 0.9), Vec3(0.5, 0.2, 0.9)),
        AffordanceSet(is_receptacle=True),
    )
    g.add_furniture(
        "table_2", "bedroom_1",
        BoundingBox(Vec3(8.0, 1.0, 0.4), Vec3(0.7, 0.45, 0.4)),
    )
    g.add_furniture(
        "chest_1", "bedroom_1",
        BoundingBox(Vec3(7.0, -1.5, 0.5), Vec3(0.45, 0.3, 0.5)),
        AffordanceSet(is_receptacle=True, openable=True),
    )
    return g


def add_cup(g: WorldGraph, name: str = "cup_0", parent: str = "table_1"):
    g.add_object(
        name, "cup", Vec3(0.05, 0.05, 0.06),
        AffordanceSet(cleanable=True, fillable=True),
    )
    g.place_object(name, Placement.on(parent))
    return g.objects[name]


@pytest.fixture
def two_room_world() -> WorldGraph:
    return make_two_room_world()
