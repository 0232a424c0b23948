"""Discrete tile lattice over WGS84, spiral enumeration, and rating colors.

The lattice is anchored at a grid origin: square (0, 0) has its south-west
corner exactly at the origin point, and square (i, j) sits i cells east and
j cells north of it. Meters are converted to degrees with a local
equirectangular scaling fixed at the origin latitude, which keeps the whole
lattice rectangular in lon/lat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

# Meters per degree of latitude, and per degree of longitude at the equator.
METERS_PER_DEGREE = 111320.0

# Mean Earth radius used by the haversine distance.
EARTH_RADIUS_M = 6371000.0

# Latitude bound beyond which the equirectangular scaling degenerates.
MAX_GRID_LATITUDE = 85.0

DEFAULT_SIDE_M = 75.0

# Fraction of a cell by which edge points are nudged east/north before floor
# quantization, so points exactly on a shared edge land in the east/north cell.
_EDGE_SNAP = 1e-9


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 coordinate. Longitude is normalized to [-180, 180)."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise DomainError(f"latitude {self.lat} outside [-90, 90]")
        if not math.isfinite(self.lon):
            raise DomainError(f"longitude {self.lon} is not finite")
        # Only wrap out-of-range longitudes; the modulo arithmetic would
        # otherwise perturb in-range values at the 1e-14 degree level.
        if not -180.0 <= self.lon < 180.0:
            object.__setattr__(self, "lon", (self.lon + 180.0) % 360.0 - 180.0)


@dataclass(frozen=True)
class GridSpec:
    """Tile lattice definition: an origin point and a square side in meters."""

    origin: GeoPoint
    side_m: float = DEFAULT_SIDE_M

    def __post_init__(self):
        if self.side_m <= 0:
            raise DomainError(f"side_m must be > 0, got {self.side_m}")
        if abs(self.origin.lat) >= MAX_GRID_LATITUDE:
            raise DomainError(
                f"grid origin latitude {self.origin.lat} outside projection bounds"
                f" (|lat| < {MAX_GRID_LATITUDE})"
            )

    @property
    def degrees_per_cell_lat(self) -> float:
        return self.side_m / METERS_PER_DEGREE

    @property
    def degrees_per_cell_lon(self) -> float:
        return self.side_m / (METERS_PER_DEGREE * math.cos(math.radians(self.origin.lat)))


@dataclass(frozen=True)
class SquareIndex:
    """Signed cell offsets from the origin square: i east, j north."""

    i: int
    j: int


@dataclass(frozen=True)
class Square:
    """One lattice cell: its index, center, and corners ordered SW, SE, NE, NW."""

    index: SquareIndex
    center: GeoPoint
    corners: tuple[GeoPoint, GeoPoint, GeoPoint, GeoPoint]


@dataclass(frozen=True)
class RgbColor:
    """An 8-bit RGB triple."""

    r: int
    g: int
    b: int

    def __post_init__(self):
        for name in ("r", "g", "b"):
            v = getattr(self, name)
            if not isinstance(v, int) or not 0 <= v <= 255:
                raise DomainError(f"channel {name}={v} outside [0, 255]")

    def to_hex(self) -> str:
        return f"#{self.r:02x}{self.g:02x}{self.b:02x}"


def _check_projection_lat(lat: float):
    if abs(lat) >= MAX_GRID_LATITUDE:
        raise DomainError(f"latitude {lat} outside projection bounds (|lat| < {MAX_GRID_LATITUDE})")


def square_for_index(grid: GridSpec, idx: SquareIndex) -> Square:
    """Geometry of square (i, j) on the grid.

    The SW corner of square (i, j) lies ``i * side_m`` meters east and
    ``j * side_m`` meters north of the grid origin under the origin-anchored
    equirectangular scaling.

    Raises:
        DomainError: if any resulting corner leaves the projection bounds.
    """
    dlat = grid.degrees_per_cell_lat
    dlon = grid.degrees_per_cell_lon
    sw_lat = grid.origin.lat + idx.j * dlat
    sw_lon = grid.origin.lon + idx.i * dlon
    ne_lat = sw_lat + dlat
    ne_lon = sw_lon + dlon
    _check_projection_lat(sw_lat)
    _check_projection_lat(ne_lat)
    corners = (
        GeoPoint(sw_lat, sw_lon),
        GeoPoint(sw_lat, ne_lon),
        GeoPoint(ne_lat, ne_lon),
        GeoPoint(ne_lat, sw_lon),
    )
    center = GeoPoint(sw_lat + dlat / 2.0, sw_lon + dlon / 2.0)
    return Square(index=idx, center=center, corners=corners)


def index_for_point(grid: GridSpec, p: GeoPoint) -> SquareIndex:
    """Square containing point ``p``.

    Cells are half-open ([SW, NE)): a point exactly on a shared edge maps to
    the square east/north of the edge.

    Raises:
        DomainError: if ``p`` is outside projection bounds.
    """
    _check_projection_lat(p.lat)
    qi = (p.lon - grid.origin.lon) / grid.degrees_per_cell_lon
    qj = (p.lat - grid.origin.lat) / grid.degrees_per_cell_lat
    return SquareIndex(math.floor(qi + _EDGE_SNAP), math.floor(qj + _EDGE_SNAP))


def spiral_order(count: int, clockwise: bool = False) -> list[SquareIndex]:
    """First ``count`` square indices in spiral order.

    Starts at (0, 0), steps east, and walks a contiguous spiral that completes
    each Chebyshev ring before entering the next. ``clockwise`` flips the
    handedness (default is counter-clockwise).

    Raises:
        DomainError: if ``count`` < 1.
    """
    if count < 1:
        raise DomainError(f"count must be >= 1, got {count}")
    out = [SquareIndex(0, 0)]
    turns = [(1, 0), (0, -1 if clockwise else 1), (-1, 0), (0, 1 if clockwise else -1)]
    i = j = 0
    run = 1
    d = 0
    while len(out) < count:
        for _ in range(2):
            di, dj = turns[d % 4]
            for _ in range(run):
                if len(out) >= count:
                    return out
                i += di
                j += dj
                out.append(SquareIndex(i, j))
            d += 1
        run += 1
    return out


def color_for_rating(rating: int) -> RgbColor:
    """Color for an integer rating in [0, 100].

    Hue-linear ramp at full saturation and half lightness: hue is
    ``1.2 * rating`` degrees, so 0 is pure red, 50 yellow, 100 pure green.

    Raises:
        DomainError: if ``rating`` is not an integer in [0, 100].
    """
    if not isinstance(rating, int) or isinstance(rating, bool) or not 0 <= rating <= 100:
        raise DomainError(f"rating must be an integer in [0, 100], got {rating!r}")
    hue = 1.2 * rating
    # HSL with s=1, l=0.5: chroma is 1 and the offset term is 0.
    x = 1.0 - abs((hue / 60.0) % 2.0 - 1.0)
    if hue < 60.0:
        rgb = (1.0, x, 0.0)
    elif hue < 120.0:
        rgb = (x, 1.0, 0.0)
    else:
        rgb = (0.0, 1.0, x)
    r, g, b = (int(math.floor(c * 255.0 + 0.5)) for c in rgb)
    return RgbColor(r, g, b)


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, in meters (mean-radius sphere)."""
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(h))
