"""Axis-aligned 3D boxes and the small amount of vector math the simulator needs."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def horizontal_distance(self, other: "Vec3") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box given by center and strictly positive half-extents."""

    center: Vec3
    half_extents: Vec3

    def __post_init__(self) -> None:
        h = self.half_extents
        if h.x <= 0 or h.y <= 0 or h.z <= 0:
            raise ValueError(f"half extents must be positive, got {h}")

    @property
    def min_corner(self) -> Vec3:
        return self.center - self.half_extents

    @property
    def max_corner(self) -> Vec3:
        return self.center + self.half_extents

    def corners(self) -> list[Vec3]:
        lo, hi = self.min_corner, self.max_corner
        return [
            Vec3(x, y, z)
            for x in (lo.x, hi.x)
            for y in (lo.y, hi.y)
            for z in (lo.z, hi.z)
        ]

    def keypoints(self) -> list[Vec3]:
        """The 8 corners plus the center."""
        return self.corners() + [self.center]

    def contains(self, p: Vec3) -> bool:
        lo, hi = self.min_corner, self.max_corner
        return (
            lo.x <= p.x <= hi.x and lo.y <= p.y <= hi.y and lo.z <= p.z <= hi.z
        )

    def contains_xy(self, p: Vec3) -> bool:
        lo, hi = self.min_corner, self.max_corner
        return lo.x <= p.x <= hi.x and lo.y <= p.y <= hi.y

    def at_center(self, new_center: Vec3) -> "BoundingBox":
        return BoundingBox(new_center, self.half_extents)

    def vertical_overlap(self, other: "BoundingBox") -> bool:
        return (
            self.min_corner.z <= other.max_corner.z
            and other.min_corner.z <= self.max_corner.z
        )

    def footprint_distance(self, other: "BoundingBox") -> float:
        """Horizontal gap between the two xy footprints; 0 when they overlap."""
        dx = max(
            0.0,
            max(
                self.min_corner.x - other.max_corner.x,
                other.min_corner.x - self.max_corner.x,
            ),
        )
        dy = max(
            0.0,
            max(
                self.min_corner.y - other.max_corner.y,
                other.min_corner.y - self.max_corner.y,
            ),
        )
        return math.hypot(dx, dy)

    def distance_to_point_xy(self, p: Vec3) -> float:
        lo, hi = self.min_corner, self.max_corner
        dx = max(lo.x - p.x, 0.0, p.x - hi.x)
        dy = max(lo.y - p.y, 0.0, p.y - hi.y)
        return math.hypot(dx, dy)
