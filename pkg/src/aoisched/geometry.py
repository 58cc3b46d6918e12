"""Room geometry: walls, image-method propagation paths, blockage tests.

All coordinates are 2-D points in meters.  A propagation path is a polyline
from a sensor to the base station, either the direct line-of-sight segment
or a single wall bounce constructed by mirroring the sensor across the wall.
Blockage is decided by comparing the blocker disk radius with the minimum
distance from the disk center to the path segments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Point = tuple[float, float]
Segment = tuple[Point, Point]

_EPS = 1e-12


def rectangle_walls(width: float, height: float) -> list[Segment]:
    """Four perimeter walls of a rectangular room, counter-clockwise from the bottom."""
    return [
        ((0.0, 0.0), (width, 0.0)),
        ((width, 0.0), (width, height)),
        ((width, height), (0.0, height)),
        ((0.0, height), (0.0, 0.0)),
    ]


@dataclass(frozen=True)
class RoomLayout:
    """Static room description: walls, base station, sensors and blocker grid cells.

    Positions must lie strictly inside the [0, width] x [0, height] rectangle;
    blocker cell centers must be pairwise distinct.  Instances are immutable
    and safe for concurrent read access.
    """

    width: float
    height: float
    walls: tuple
    bs_position: Point
    sensor_positions: tuple
    blocker_cells: tuple

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("room dimensions must be positive")
        if len(self.sensor_positions) < 1:
            raise ValueError("at least one sensor is required")
        if len(self.blocker_cells) < 1:
            raise ValueError("at least one blocker cell is required")
        for name, pts in (
            ("bsPosition", [self.bs_position]),
            ("sensorPositions", self.sensor_positions),
            ("blockerCells", self.blocker_cells),
        ):
            for p in pts:
                if not (0.0 < p[0] < self.width and 0.0 < p[1] < self.height):
                    raise ValueError(f"{name} entry {p} is not strictly inside the room")
        for p in self.sensor_positions:
            if _dist(p, self.bs_position) < _EPS:
                raise ValueError("sensor position coincides with the base station")
        if len(set(self.blocker_cells)) != len(self.blocker_cells):
            raise ValueError("blocker cells must be pairwise distinct")

    @property
    def n_sensors(self) -> int:
        return len(self.sensor_positions)

    @property
    def n_cells(self) -> int:
        return len(self.blocker_cells)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


def make_room(width, height, bs_position, sensor_positions, blocker_cells,
              walls=None) -> RoomLayout:
    """Build a RoomLayout with perimeter walls unless custom walls are given."""
    if walls is None:
        walls = rectangle_walls(width, height)
    return RoomLayout(
        width=float(width),
        height=float(height),
        walls=tuple((tuple(a), tuple(b)) for a, b in walls),
        bs_position=tuple(bs_position),
        sensor_positions=tuple(tuple(p) for p in sensor_positions),
        blocker_cells=tuple(tuple(c) for c in blocker_cells),
    )


@dataclass(frozen=True)
class PropagationPath:
    """One sensor-to-BS propagation path.

    path_index 0 is the direct segment; index i >= 1 is the single bounce off
    wall i.  Angles are measured against the array broadside and folded into
    [-pi/2, pi/2]; path_loss_linear is the linear-scale loss 10^(dB/10).
    """

    sensor_index: int          # 1-based
    path_index: int            # 0 = direct, wall index otherwise
    segments: tuple            # sensor -> (bounce point) -> BS
    length_m: float
    aoa_rad: float             # arrival angle at the BS array
    aod_rad: float             # departure angle at the sensor array
    path_loss_db: float
    path_loss_linear: float


def _dist(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _fold_broadside(angle: float) -> float:
    # ULA front-back fold: mirror across +-pi/2 so that sin() is preserved.
    a = math.atan2(math.sin(angle), math.cos(angle))
    if a > math.pi / 2:
        a = math.pi - a
    elif a < -math.pi / 2:
        a = -math.pi - a
    return a


def _endpoint_angle(endpoint: Point, toward: Point) -> float:
    return _fold_broadside(math.atan2(toward[1] - endpoint[1], toward[0] - endpoint[0]))


def _mirror_across_line(p: Point, wall: Segment) -> Point:
    (x1, y1), (x2, y2) = wall
    dx, dy = x2 - x1, y2 - y1
    norm2 = dx * dx + dy * dy
    if norm2 < _EPS:
        raise ValueError("degenerate wall segment")
    t = ((p[0] - x1) * dx + (p[1] - y1) * dy) / norm2
    foot = (x1 + t * dx, y1 + t * dy)
    return (2 * foot[0] - p[0], 2 * foot[1] - p[1])


def _segment_intersection(a: Point, b: Point, c: Point, d: Point):
    """Intersection point of segments a-b and c-d, or None.

    Returns the point only when it lies strictly inside a-b and within c-d
    (inclusive endpoints with a small tolerance).
    """
    r = (b[0] - a[0], b[1] - a[1])
    s = (d[0] - c[0], d[1] - c[1])
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < _EPS:
        return None
    qp = (c[0] - a[0], c[1] - a[1])
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    if not (_EPS < t < 1.0 - _EPS):
        return None
    if not (-1e-9 <= u <= 1.0 + 1e-9):
        return None
    return (a[0] + t * r[0], a[1] + t * r[1])


def path_loss_db(length_m: float, carrier_freq_ghz: float, extra_db: float = 0.0) -> float:
    """Free-space style loss: 32.5 + 20*log10(f_GHz) + 20*log10(R_m) + extra."""
    return 32.5 + 20.0 * math.log10(carrier_freq_ghz) + 20.0 * math.log10(length_m) + extra_db


def first_order_bounce(origin: Point, target: Point, wall: Segment):
    """Single-bounce point on `wall` between origin and target, or None.

    Image method: mirror the origin across the wall line and intersect the
    image-to-target segment with the wall.  Returns (bounce_point, length).
    None when the intersection misses the wall segment or the construction
    degenerates (an endpoint on the wall line).
    """
    image = _mirror_across_line(origin, wall)
    if _dist(image, origin) < 1e-9:
        return None
    bounce = _segment_intersection(image, target, wall[0], wall[1])
    if bounce is None:
        return None
    if _dist(bounce, origin) < 1e-9 or _dist(bounce, target) < 1e-9:
        return None
    return bounce, _dist(origin, bounce) + _dist(bounce, target)


def build_paths(room: RoomLayout, sensor_index: int, carrier_freq_ghz: float,
                nlos_extra_loss_db: float = 15.0) -> list[PropagationPath]:
    """Direct path plus one first-order bounce per wall for one sensor.

    Bounces are found by the image method: the sensor is mirrored across the
    wall line and the image-to-BS segment is intersected with the wall.  A
    wall whose intersection falls outside the segment (or that degenerates
    because an endpoint lies on the wall line) contributes no path, so the
    returned list may be shorter than 1 + number of walls; callers treat a
    missing path as permanently blocked.
    """
    if not (1 <= sensor_index <= room.n_sensors):
        raise ValueError(f"sensor_index {sensor_index} out of range")
    sensor = room.sensor_positions[sensor_index - 1]
    bs = room.bs_position

    paths = []
    los_len = _dist(sensor, bs)
    db = path_loss_db(los_len, carrier_freq_ghz)
    paths.append(PropagationPath(
        sensor_index=sensor_index, path_index=0,
        segments=((sensor, bs),), length_m=los_len,
        aoa_rad=_endpoint_angle(bs, sensor),
        aod_rad=_endpoint_angle(sensor, bs),
        path_loss_db=db, path_loss_linear=10.0 ** (db / 10.0),
    ))

    for wall_i, wall in enumerate(room.walls, start=1):
        hit = first_order_bounce(sensor, bs, wall)
        if hit is None:
            continue
        bounce, length = hit
        db = path_loss_db(length, carrier_freq_ghz, nlos_extra_loss_db)
        paths.append(PropagationPath(
            sensor_index=sensor_index, path_index=wall_i,
            segments=((sensor, bounce), (bounce, bs)), length_m=length,
            aoa_rad=_endpoint_angle(bs, bounce),
            aod_rad=_endpoint_angle(sensor, bounce),
            path_loss_db=db, path_loss_linear=10.0 ** (db / 10.0),
        ))
    return paths


def point_segment_distance(p: Point, seg: Segment) -> float:
    """Euclidean distance from a point to a segment (foot or nearest endpoint)."""
    (x1, y1), (x2, y2) = seg
    dx, dy = x2 - x1, y2 - y1
    norm2 = dx * dx + dy * dy
    if norm2 < _EPS:
        return math.hypot(p[0] - x1, p[1] - y1)
    t = ((p[0] - x1) * dx + (p[1] - y1) * dy) / norm2
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (x1 + t * dx), p[1] - (y1 + t * dy))


def min_distance_to_path(point: Point, path: PropagationPath) -> float:
    """Minimum distance from a point to any segment of the path."""
    return min(point_segment_distance(point, seg) for seg in path.segments)


def blockage_indicator(room: RoomLayout, cell_index: int, path: PropagationPath,
                       blocker_radius: float) -> int:
    """1 when the blocker disk at the given cell clears every path segment.

    The path counts as unblocked when the center-to-path distance is at least
    the blocker radius (the boundary tie counts as clear).
    """
    if not (1 <= cell_index <= room.n_cells):
        raise ValueError(f"cell_index {cell_index} out of range")
    if blocker_radius <= 0:
        raise ValueError("blocker radius must be positive")
    center = room.blocker_cells[cell_index - 1]
    return 1 if min_distance_to_path(center, path) >= blocker_radius else 0


def perimeter_positions(width: float, height: float, inset: float, count: int,
                        seed: int, mode: str = "even") -> list[Point]:
    """Seeded sensor placement on the rectangle inset by `inset` from the walls.

    "even" spreads the sensors equally along the inset perimeter with one
    seeded rotation; "uniform" draws independent arc-length positions.
    Draws are taken from a fixed-size pool so that the first positions do not
    change when only `count` changes.
    """
    import numpy as np

    if inset <= 0 or 2 * inset >= min(width, height):
        raise ValueError("inset must leave a positive interior rectangle")
    w, h = width - 2 * inset, height - 2 * inset
    perim = 2 * (w + h)
    rng = np.random.default_rng(seed)
    pool = rng.uniform(0.0, perim, size=max(count, 64))
    if mode == "even":
        offsets = (pool[0] + perim * np.arange(count) / count) % perim
    elif mode == "uniform":
        offsets = pool[:count]
    else:
        raise ValueError(f"unknown placement mode {mode!r}")

    points = []
    for s in offsets:
        s = float(s % perim)
        if s < w:
            p = (inset + s, inset)
        elif s < w + h:
            p = (width - inset, inset + (s - w))
        elif s < 2 * w + h:
            p = (width - inset - (s - w - h), height - inset)
        else:
            p = (inset, height - inset - (s - 2 * w - h))
        points.append(p)
    return points


def ring_cells(center: Point, radius_m: float, spacing_m: float) -> list[Point]:
    """Cell centers of a square ring around `center`.

    The ring consists of the grid points at Chebyshev distance `radius_m`
    with grid pitch `spacing_m`, ordered counter-clockwise so that list
    neighbors are also spatial neighbors.  radius 3 * spacing gives 24 cells.
    """
    n = round(radius_m / spacing_m)
    if n < 1:
        raise ValueError("ring radius must be at least one cell spacing")
    offsets = []
    for i in range(-n, n):          # bottom edge, left to right
        offsets.append((i, -n))
    for j in range(-n, n):          # right edge, bottom to top
        offsets.append((n, j))
    for i in range(n, -n, -1):      # top edge, right to left
        offsets.append((i, n))
    for j in range(n, -n, -1):      # left edge, top to bottom
        offsets.append((-n, j))
    return [(center[0] + dx * spacing_m, center[1] + dy * spacing_m) for dx, dy in offsets]
