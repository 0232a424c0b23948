
import pytest
from hypothesis import given, strategies as st

from safetiles.errors import DomainError
from safetiles.geogrid import (
    GeoPoint,
    GridSpec,
    RgbColor,
    SquareIndex,
    color_for_rating,
    haversine_m,
    index_for_point,
    spiral_order,
    square_for_index,
)

from oracles import block_cells, chebyshev, ring_cells, sphere_distance_m


# ---------------------------------------------------------------------------
# GeoPoint / GridSpec
# ---------------------------------------------------------------------------

def test_geopoint_rejects_bad_latitude():
    with pytest.raises(DomainError):
        GeoPoint(90.5, 0.0)


def test_geopoint_normalizes_longitude():
    assert GeoPoint(0.0, 181.0).lon == -179.0
    assert GeoPoint(0.0, -180.0).lon == -180.0
    assert GeoPoint(0.0, 180.0).lon == -180.0
    assert GeoPoint(0.0, 540.0).lon == 180.0 - 360.0


@given(st.floats(min_value=-1000, max_value=1000, allow_nan=False))
def test_geopoint_longitude_always_in_range(lon):
    p = GeoPoint(10.0, lon)
    assert -180.0 <= p.lon < 180.0


def test_gridspec_rejects_polar_origin():
    with pytest.raises(DomainError):
        GridSpec(GeoPoint(86.0, 0.0), 75.0)


def test_gridspec_rejects_nonpositive_side():
    with pytest.raises(DomainError):
        GridSpec(GeoPoint(0.0, 0.0), 0.0)


# ---------------------------------------------------------------------------
# square_for_index / index_for_point
# ---------------------------------------------------------------------------

def test_origin_square_sw_corner_is_origin():
    grid = GridSpec(GeoPoint(60.17, 24.94), 75.0)
    square = square_for_index(grid, SquareIndex(0, 0))
    sw = square.corners[0]
    assert sw.lat == pytest.approx(60.17, abs=1e-12)
    assert sw.lon == pytest.approx(24.94, abs=1e-12)


def test_one_east_offset_matches_scaling_constants():
    grid = GridSpec(GeoPoint(0.0, 0.0), 75.0)
    square = square_for_index(grid, SquareIndex(1, 0))
    sw = square.corners[0]
    # cos(0) = 1, so one cell east is side_m / 111320 degrees of longitude.
    assert sw.lon == pytest.approx(75.0 / 111320.0, abs=1e-15)
    assert sw.lat == 0.0


def test_north_neighbor_sw_corners_are_75m_apart():
    grid = GridSpec(GeoPoint(60.17, 24.94), 75.0)
    sw0 = square_for_index(grid, SquareIndex(0, 0)).corners[0]
    sw1 = square_for_index(grid, SquareIndex(0, 1)).corners[0]
    distance = haversine_m(sw0, sw1)
    assert distance == pytest.approx(75.0, rel=0.005)


def test_center_is_corner_midpoint():
    grid = GridSpec(GeoPoint(45.0, 9.0), 75.0)
    square = square_for_index(grid, SquareIndex(4, -7))
    sw, _se, ne, _nw = square.corners
    assert square.center.lat == pytest.approx((sw.lat + ne.lat) / 2, abs=1e-12)
    assert square.center.lon == pytest.approx((sw.lon + ne.lon) / 2, abs=1e-12)


def test_square_out_of_projection_raises():
    grid = GridSpec(GeoPoint(84.9, 0.0), 75.0)
    with pytest.raises(DomainError):
        square_for_index(grid, SquareIndex(0, 10_000))


@pytest.mark.parametrize("lat", [0.0, 45.0, 60.0])
def test_south_edge_length_within_half_percent(lat):
    grid = GridSpec(GeoPoint(lat, 24.94), 75.0)
    for i in range(-5, 6):
        for j in range(-5, 6):
            sw, se, _ne, _nw = square_for_index(grid, SquareIndex(i, j)).corners
            length = sphere_distance_m(sw.lat, sw.lon, se.lat, se.lon)
            assert abs(length - 75.0) <= 0.005 * 75.0, (i, j, length)


@pytest.mark.parametrize("lat", [0.0, 45.0, 60.0])
def test_index_round_trip(lat):
    grid = GridSpec(GeoPoint(lat, 24.94), 75.0)
    for i in range(-50, 51, 7):
        for j in range(-50, 51, 7):
            idx = SquareIndex(i, j)
            center = square_for_index(grid, idx).center
            assert index_for_point(grid, center) == idx


def test_round_trip_at_origin():
    grid = GridSpec(GeoPoint(60.17, 24.94), 75.0)
    assert index_for_point(grid, grid.origin) == SquareIndex(0, 0)


def test_point_on_shared_edge_goes_east():
    grid = GridSpec(GeoPoint(60.17, 24.94), 75.0)
    # SW corner of (1, 0) sits exactly on the edge between (0,0) and (1,0).
    edge_point = square_for_index(grid, SquareIndex(1, 0)).corners[0]
    assert index_for_point(grid, edge_point) == SquareIndex(1, 0)


def test_point_on_shared_edge_goes_north():
    grid = GridSpec(GeoPoint(60.17, 24.94), 75.0)
    edge_point = square_for_index(grid, SquareIndex(0, 1)).corners[0]
    assert index_for_point(grid, edge_point) == SquareIndex(0, 1)


def test_index_for_point_out_of_projection():
    grid = GridSpec(GeoPoint(60.0, 0.0), 75.0)
    with pytest.raises(DomainError):
        index_for_point(grid, GeoPoint(89.0, 0.0))


# ---------------------------------------------------------------------------
# spiral_order
# ---------------------------------------------------------------------------

def test_spiral_single():
    assert spiral_order(1) == [SquareIndex(0, 0)]


def test_spiral_rejects_zero():
    with pytest.raises(DomainError):
        spiral_order(0)


def test_spiral_nine_is_ring_one_permutation():
    order = spiral_order(9)
    assert order[0] == SquareIndex(0, 0)
    assert {(s.i, s.j) for s in order} == block_cells(1)


def test_spiral_25_ring_positions():
    order = [(s.i, s.j) for s in spiral_order(25)]
    assert set(order[1:9]) == ring_cells(1)
    assert set(order[9:25]) == ring_cells(2)


@pytest.mark.parametrize("k", range(0, 11))
def test_spiral_block_completeness(k):
    n = (2 * k + 1) ** 2
    order = spiral_order(n)
    assert len(order) == n
    assert {(s.i, s.j) for s in order} == block_cells(k)


def test_spiral_rings_complete_in_order():
    order = [(s.i, s.j) for s in spiral_order(441)]
    position = {cell: pos for pos, cell in enumerate(order)}
    for r in range(0, 10):
        last_inner = max(position[c] for c in ring_cells(r))
        first_outer = min(position[c] for c in ring_cells(r + 1))
        assert last_inner < first_outer


def test_spiral_contiguous_walk():
    order = [(s.i, s.j) for s in spiral_order(441)]
    for a, b in zip(order, order[1:]):
        assert chebyshev(a, b) == 1


def test_spiral_prefix_stability():
    full = spiral_order(441)
    for n in (1, 2, 9, 10, 25, 100, 440):
        assert spiral_order(n) == full[:n]


def test_spiral_clockwise_mirrors_ccw():
    ccw = [(s.i, s.j) for s in spiral_order(49)]
    cw = [(s.i, s.j) for s in spiral_order(49, clockwise=True)]
    assert cw == [(i, -j) for i, j in ccw]
    assert {c for c in cw} == block_cells(3)


# ---------------------------------------------------------------------------
# color_for_rating
# ---------------------------------------------------------------------------

def test_color_endpoints_exact():
    assert color_for_rating(0) == RgbColor(255, 0, 0)
    assert color_for_rating(100) == RgbColor(0, 255, 0)


def test_color_midpoint_yellow():
    assert color_for_rating(50) == RgbColor(255, 255, 0)


def test_color_channels_monotone():
    colors = [color_for_rating(r) for r in range(101)]
    for earlier, later in zip(colors, colors[1:]):
        assert later.r <= earlier.r
        assert later.g >= earlier.g
        assert later.b == earlier.b == 0


@pytest.mark.parametrize("rating", [-1, 101, 1000])
def test_color_out_of_range(rating):
    with pytest.raises(DomainError):
        color_for_rating(rating)


def test_color_rejects_non_integer():
    with pytest.raises(DomainError):
        color_for_rating(49.5)


def test_rgb_channel_validation():
    with pytest.raises(DomainError):
        RgbColor(0, 300, 0)


def test_color_hex():
    assert color_for_rating(0).to_hex() == "#ff0000"
    assert color_for_rating(100).to_hex() == "#00ff00"


# ---------------------------------------------------------------------------
# haversine
# ---------------------------------------------------------------------------

@given(
    st.floats(min_value=-60, max_value=60),
    st.floats(min_value=-179, max_value=179),
    st.floats(min_value=-0.002, max_value=0.002),
    st.floats(min_value=-0.002, max_value=0.002),
)
def test_haversine_matches_chord_oracle(lat, lon, dlat, dlon):
    a = GeoPoint(lat, lon)
    b = GeoPoint(lat + dlat, lon + dlon)
    expected = sphere_distance_m(a.lat, a.lon, b.lat, b.lon)
    assert haversine_m(a, b) == pytest.approx(expected, abs=0.1)
