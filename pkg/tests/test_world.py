"""World grid, distance fields and bookkeeping."""

import heapq

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sprawl._chamfer import SQRT2, chamfer_steps, geodesic_steps, steps_to_field
from sprawl.world import (
    EMPTY,
    PARK,
    RESIDENTIAL,
    ROAD_PRIMARY,
    ROAD_TERTIARY,
    WATER,
    Terrain,
    World,
    disc_offsets,
)


def flat_world(w=40, h=40, elev=10.0):
    t = Terrain(np.full((h, w), float(elev)), water_level=0.0, hill_offset=30.0)
    return World(t)


def test_disc_offsets_radius5_has_81_patches():
    offs = disc_offsets(5)
    assert offs.shape == (81, 2)
    # sorted by (dy, dx), unique
    assert len({(int(a), int(b)) for a, b in offs}) == 81
    d2 = offs[:, 0] ** 2 + offs[:, 1] ** 2
    assert d2.max() == 25


def test_corner_neighborhood_is_26_patches():
    w = flat_world()
    assert w.neighborhood(0, 0, 5).size == 26
    assert w.neighborhood(20, 20, 5).size == 81


def naive_chamfer(mask: np.ndarray, sentinel: float) -> np.ndarray:
    """Unobstructed octagonal distance straight from the closed form."""
    h, wd = mask.shape
    out = np.full((h, wd), sentinel)
    src = np.argwhere(mask)
    if src.size == 0:
        return out
    for y in range(h):
        for x in range(wd):
            best = None
            for sy, sx in src:
                dy, dx = abs(int(sy) - y), abs(int(sx) - x)
                lo, hi = min(dy, dx), max(dy, dx)
                cand = (hi - lo) + lo * SQRT2
                if best is None or cand < best:
                    best = cand
            out[y, x] = best
    return out


def test_chamfer_single_source_exact_values():
    mask = np.zeros((11, 11), bool)
    mask[5, 5] = True
    orth, diag = chamfer_steps(mask)
    f = steps_to_field(orth, diag, 99.0)
    assert f[5, 5] == 0.0
    assert f[5, 8] == 3.0
    assert f[8, 8] == 3 * SQRT2
    assert f[2, 4] == 2.0 + 1 * SQRT2


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_chamfer_matches_naive_bitwise(seed):
    rng = np.random.default_rng(seed)
    h, wd = int(rng.integers(3, 14)), int(rng.integers(3, 14))
    mask = rng.random((h, wd)) < 0.15
    orth, diag = chamfer_steps(mask)
    got = steps_to_field(orth, diag, float(h + wd + 1))
    want = naive_chamfer(mask, float(h + wd + 1))
    assert np.array_equal(got, want)


def dijkstra_steps(sources, passable):
    """Masked octagonal distance by priority queue, for checking geodesics."""
    h, wd = sources.shape
    dist = np.full((h, wd), np.inf)
    pq = []
    for y, x in np.argwhere(sources & passable):
        dist[y, x] = 0.0
        heapq.heappush(pq, (0.0, int(y), int(x)))
    while pq:
        d, y, x = heapq.heappop(pq)
        if d > dist[y, x]:
            continue
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < wd and passable[ny, nx]:
                    step = SQRT2 if dy != 0 and dx != 0 else 1.0
                    nd = d + step
                    if nd < dist[ny, nx] - 1e-12:
                        dist[ny, nx] = nd
                        heapq.heappush(pq, (nd, ny, nx))
    return dist


def test_geodesic_goes_around_walls():
    h = wd = 12
    passable = np.ones((h, wd), bool)
    passable[2:12, 6] = False  # wall with a gap at the top
    sources = np.zeros((h, wd), bool)
    sources[6, 1] = True
    orth, diag = geodesic_steps(sources, passable)
    got = steps_to_field(orth, diag, 999.0)
    want = dijkstra_steps(sources, passable)
    reach = np.isfinite(want)
    assert np.allclose(got[reach], want[reach], atol=1e-9)
    assert np.all(got[~reach] == 999.0)
    assert np.all(got[~passable] == 999.0)
    # the wall forces a detour: straight-line would be 9
    assert got[6, 7] > 9.0


def test_parcel_bookkeeping_roundtrip():
    w = flat_world()
    idx = np.array([w.flat(10, 10), w.flat(11, 10), w.flat(10, 11)])
    p = w.commit_parcel(RESIDENTIAL, idx, population=3, tick=5, initial_density=1.0)
    assert w.cover[RESIDENTIAL] == 3
    assert w.population[RESIDENTIAL] == 3
    assert w.city_population == 3
    assert p.size == 3 and p.density == 1.0
    assert np.all(w.use.ravel()[idx] == RESIDENTIAL)
    assert w.consistency_errors() == []
    w.add_population(p, 2)
    assert p.population == 5 and w.population[RESIDENTIAL] == 5
    w.remove_parcel(p)
    assert w.cover[RESIDENTIAL] == 0 and w.population[RESIDENTIAL] == 0
    assert np.all(w.use.ravel()[idx] == EMPTY)
    assert w.consistency_errors() == []


def test_road_commit_counts_and_adjacency():
    w = flat_world()
    path = [(5, 5), (6, 5), (7, 5)]
    w.commit_road(path, ROAD_TERTIARY)
    assert w.cover[ROAD_TERTIARY] == 3
    assert w.road_adjacent[5, 4] and w.road_adjacent[6, 5]
    assert not w.road_adjacent[20, 20]
    # circle(5) road census at the middle of the stub
    assert w.road_count5[5, 6] == 3
    assert w.road_count5[5, 11] == 2  # (6,5) and (7,5) are within 5 of (11,5)
    # upgrading to primary does not double count
    w.commit_road(path, ROAD_PRIMARY)
    assert w.cover[ROAD_TERTIARY] == 0 and w.cover[ROAD_PRIMARY] == 3
    assert w.road_count5[5, 6] == 3
    assert w.consistency_errors() == []


def test_distance_fields_refresh_on_change():
    w = flat_world()
    road = w.dist("road")
    assert np.all(road == w.sentinel)
    w.commit_road([(5, 5)], ROAD_TERTIARY)
    road = w.dist("road")
    assert road[5, 5] == 0.0
    assert road[5, 8] == 3.0
    water = w.dist("water")
    assert np.all(water == w.sentinel)  # flat world has no lake


def test_erase_splits_parcels_and_shares_population():
    w = flat_world()
    idx = np.array([w.flat(x, 10) for x in range(10, 15)])
    p = w.commit_parcel(RESIDENTIAL, idx, population=10, tick=0, initial_density=2.0)
    w.erase(np.array([w.flat(12, 10)]))
    assert p.id not in w.parcels
    parts = sorted(wp.size for wp in w.parcels.values())
    assert parts == [2, 2]
    assert sum(wp.population for wp in w.parcels.values()) in (8, 10)
    for wp in w.parcels.values():
        assert wp.initial_density == 2.0
    assert w.consistency_errors() == []


def test_erase_road_restores_counts():
    w = flat_world()
    w.commit_road([(5, 5), (6, 5)], ROAD_TERTIARY)
    w.erase(np.array([w.flat(5, 5), w.flat(6, 5)]))
    assert w.cover[ROAD_TERTIARY] == 0
    assert np.all(w.road_count5 == 0)
    assert not w.road_adjacent.any()
    assert w.consistency_errors() == []


def test_paint_elevation_floods_and_drains():
    w = flat_world()
    idx = np.array([w.flat(20, 20), w.flat(21, 20)])
    p = w.commit_parcel(RESIDENTIAL, idx, population=2, tick=0, initial_density=1.0)
    w.paint("elevation", idx, -3.0)
    assert p.id not in w.parcels
    assert np.all(w.use.ravel()[idx] == WATER)
    assert w.water_mask[20, 20]
    w.paint("elevation", idx, 4.0)
    assert np.all(w.use.ravel()[idx] == EMPTY)
    assert not w.water_mask[20, 20]
    assert w.consistency_errors() == []


def test_paint_rejects_unknown_layer():
    w = flat_world()
    with pytest.raises(ValueError):
        w.paint("nonsense", (0, 0, 2, 2), 1.0)


def test_place_use_makes_parcels_and_roads():
    w = flat_world()
    region = np.array([w.flat(x, 5) for x in range(3, 7)])
    w.place_use(region, RESIDENTIAL, tick=0, min_density=1)
    assert len(w.parcels) == 1
    p = next(iter(w.parcels.values()))
    assert p.size == 4 and p.population == 4
    road = np.array([w.flat(x, 8) for x in range(3, 7)])
    w.place_use(road, ROAD_TERTIARY, tick=0, min_density=0)
    assert w.cover[ROAD_TERTIARY] == 4
    park = np.array([w.flat(x, 12) for x in range(3, 7)])
    w.place_use(park, PARK, tick=0, min_density=0)
    parks = [q for q in w.parcels.values() if q.use == PARK]
    assert len(parks) == 1 and parks[0].population == 0
    assert w.consistency_errors() == []


def test_place_use_skips_water_and_reserved():
    w = flat_world()
    w.paint("reserved", np.array([w.flat(4, 5)]), True)
    region = np.array([w.flat(x, 5) for x in range(3, 7)])
    w.place_use(region, RESIDENTIAL, tick=0, min_density=1)
    sizes = sorted(p.size for p in w.parcels.values())
    assert sizes == [1, 2]  # the reserved patch split the strip


def test_density_center_weights_population():
    w = flat_world()
    w.commit_parcel(RESIDENTIAL, np.array([w.flat(0, 0)]), 1, 0, 1.0)
    w.commit_parcel(RESIDENTIAL, np.array([w.flat(30, 0)]), 3, 0, 1.0)
    cx, cy = w.density_center()
    assert cy == 0.0
    assert cx == pytest.approx(22.5)


def test_grid_paint_roundtrip():
    w = flat_world()
    w.paint("grid_params", (0, 0, 40, 40), (10.0, 12.0, 0.5, 1.0, 2.0))
    assert w.grid_x[3, 3] == 10.0
    assert w.grid_dy[3, 3] == 2.0
    with pytest.raises(ValueError):
        w.paint("grid_params", (0, 0, 4, 4), (0.0, 1.0, 0.0, 1.0, 1.0))
