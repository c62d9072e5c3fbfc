"""Valuation math and the attribute cache against naive recomputation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sprawl.config import SimConfig
from sprawl.valuation import (
    ROW_COM_DENSITY,
    ROW_CROWDING,
    ROW_IND_DENSITY,
    ROW_RES_DENSITY,
    Valuation,
    balance,
    normalize,
    smoothness,
)
from sprawl.world import (
    COMMERCIAL,
    INDUSTRIAL,
    PARK,
    RESIDENTIAL,
    ROAD_TERTIARY,
    Terrain,
    World,
)


def flat_world(w=36, h=36):
    t = Terrain(np.full((h, w), 10.0), water_level=0.0, hill_offset=30.0)
    return World(t)


# ------------------------------------------------------------------ normalize

def test_normalize_pinned_values():
    assert float(normalize(0.5, 1.0)) == pytest.approx(0.5, abs=1e-12)
    assert float(normalize(2.0, 1.0)) == pytest.approx(1.5, abs=1e-12)
    assert float(normalize(1.0, 1.0)) == 1.0
    assert float(normalize(0.0, 5.0)) == 0.0
    assert float(normalize(3.0, 0.0)) == 2.0
    assert float(normalize(0.0, 0.0)) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_normalize_range_and_midpoint(x, mean):
    v = float(normalize(x, mean))
    assert 0.0 <= v <= 2.0
    if x == mean and mean > 0:
        assert v == 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(0.01, 100))
def test_normalize_monotone_in_value(mean, a, b):
    lo, hi = sorted((a, b))
    assert float(normalize(lo, mean)) <= float(normalize(hi, mean)) + 1e-12


# -------------------------------------------------------------------- balance

def test_balance_pinned_values():
    assert balance(0, 100, 0.4) == pytest.approx(0.19, abs=1e-12)
    assert balance(40, 100, 0.4) == 1.0
    assert balance(0, 0, 0.4) == 1.0  # empty city does not constrain
    assert balance(90, 100, 0.4) == 0.0  # ratio 2.25, past the cutoff
    # zero crossing at ratio 1 + 1/0.9 = 2.111..
    assert balance(2112, 1000, 1.0) == 0.0
    assert balance(2111, 1000, 1.0) > 0.0


# ----------------------------------------------------------------- smoothness

def test_smoothness_pinned_values():
    assert float(smoothness(1.0, 1.0)) == 1.0
    assert float(smoothness(1.2, 1.0)) == 1.0  # log3(3) exactly
    assert float(smoothness(3.2, 1.0)) == 0.0
    assert float(smoothness(5.0, 1.0)) == 0.0  # argument goes negative
    mid = float(smoothness(2.2, 1.0))  # log3(2)
    assert mid == pytest.approx(math.log(2) / math.log(3), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10))
def test_smoothness_monotone_decreasing(a, b):
    lo, hi = sorted((a, b))
    assert float(smoothness(hi, 1.0)) <= float(smoothness(lo, 1.0)) + 1e-12
    assert 0.0 <= float(smoothness(a, b)) <= 1.0


# ------------------------------------------------------- compatibility factors

def test_compat_pinned_values():
    w = flat_world()
    cfg = SimConfig()
    val = Valuation(w, cfg)
    n = w.width * w.height

    block = np.zeros((14, 2))
    block[ROW_IND_DENSITY] = [2.0, 0.0]
    core = val._core(RESIDENTIAL, block)
    # with all weights zeroed the core isolates the compatibility factor
    val.wvec[RESIDENTIAL][:] = 0.0
    zeroed = val._core(RESIDENTIAL, block)
    assert np.allclose(zeroed, 0.0)
    # compat alone: 0.8 + 0.2*10^-x
    ones = np.ones(2)
    val.wvec[RESIDENTIAL][:] = 0.0
    del core, ones, n

    def compat(use, nd_r=0.0, nd_c=0.0, nd_i=0.0, nd_pk=0.0):
        b = np.zeros((14, 1))
        b[ROW_RES_DENSITY] = nd_r
        b[ROW_COM_DENSITY] = nd_c
        b[ROW_IND_DENSITY] = nd_i
        b[8] = nd_pk  # park distance row
        save = {u: val.wvec[u].copy() for u in val.wvec}
        for u in val.wvec:
            val.wvec[u][:] = 0.0
            val.wvec[u][0] = 1.0  # hill row; block has 0 there -> mu arg 0
        b[0] = 1.0  # make W.A contribute exactly 1
        out = float(val._core(use, b)[0])
        for u in save:
            val.wvec[u] = save[u]
        return out

    assert compat(RESIDENTIAL, nd_i=2.0) == pytest.approx(0.802, abs=1e-12)
    assert compat(RESIDENTIAL, nd_i=0.0) == pytest.approx(1.0, abs=1e-12)
    assert compat(COMMERCIAL, nd_pk=1.0) == pytest.approx(0.82, abs=1e-12)
    assert compat(INDUSTRIAL, nd_r=1.0, nd_pk=1.0) == pytest.approx(
        0.4 + 0.02 + 0.04, abs=1e-12)
    assert compat(PARK, nd_i=0.0, nd_c=0.0) == pytest.approx(1.0, abs=1e-12)
    assert compat(PARK, nd_i=1.0, nd_c=1.0) == pytest.approx(0.1, abs=1e-12)


# ------------------------------------------------------------- density oracle

def naive_density_row(world, use):
    """Sum of populations of same-use parcels near each patch, spread over the
    union of the circle and those parcels' ground."""
    n = world.width * world.height
    out = np.zeros(n)
    for j in range(n):
        x, y = j % world.width, j // world.width
        circle = set(world.neighborhood(x, y, 5).tolist())
        pop = 0
        union = set(circle)
        for p in world.parcels.values():
            if p.use != use:
                continue
            pset = set(p.patches.tolist())
            if pset & circle:
                pop += p.population
                union |= pset
        out[j] = pop / len(union)
    return out


def busy_world():
    w = flat_world(24, 24)
    w.commit_road([(x, 8) for x in range(4, 16)], ROAD_TERTIARY)
    w.commit_parcel(RESIDENTIAL, np.array([w.flat(5, 9), w.flat(6, 9)]), 4, 0, 1.0)
    w.commit_parcel(RESIDENTIAL, np.array([w.flat(9, 9), w.flat(10, 9), w.flat(10, 10)]), 3, 0, 1.0)
    w.commit_parcel(COMMERCIAL, np.array([w.flat(12, 9), w.flat(13, 9), w.flat(12, 10), w.flat(13, 10)]), 16, 0, 4.0)
    w.commit_parcel(INDUSTRIAL, np.array([w.flat(4, 4), w.flat(5, 4), w.flat(4, 5), w.flat(5, 5),
                                          w.flat(6, 4), w.flat(6, 5), w.flat(7, 4), w.flat(7, 5)]), 8, 0, 1.0)
    w.commit_parcel(PARK, np.array([w.flat(18, 18), w.flat(18, 19)]), 0, 0, 0.0)
    return w


def test_density_rows_match_naive():
    w = busy_world()
    val = Valuation(w, SimConfig())
    val.ensure_fresh()
    for use, row in ((RESIDENTIAL, ROW_RES_DENSITY), (COMMERCIAL, ROW_COM_DENSITY),
                     (INDUSTRIAL, ROW_IND_DENSITY)):
        want = naive_density_row(w, use)
        assert np.allclose(val.raw[row], want, atol=1e-12), use


def naive_crowding(world):
    n = world.width * world.height
    out = np.ones(n)
    pg = world.parcel_grid.ravel()
    for j in range(n):
        pid = pg[j]
        if pid > 0:
            p = world.parcels[pid]
            nb = pg[world.adjacent4(p.patches)]
            cand = {int(q) for q in nb if q > 0 and q != pid}
        else:
            nb = pg[world.adjacent4(np.array([j]))]
            cand = {int(q) for q in nb if q > 0}
        sizes = [world.parcels[q].size for q in cand
                 if q in world.parcels and world.parcels[q].use == COMMERCIAL]
        out[j] = 1.0 / max([1] + sizes)
    return out


def test_crowding_matches_naive():
    w = busy_world()
    # another commercial parcel adjacent to the first
    w.commit_parcel(COMMERCIAL, np.array([w.flat(14, 9), w.flat(14, 10)]), 8, 0, 4.0)
    val = Valuation(w, SimConfig())
    val.ensure_fresh()
    assert np.allclose(val.raw[ROW_CROWDING], naive_crowding(w), atol=1e-15)


def naive_mnid(world):
    n = world.width * world.height
    out = np.full(n, np.inf)
    pg = world.parcel_grid.ravel()
    for j in range(n):
        cand = [int(pg[j])]
        cand += [int(q) for q in pg[world.adjacent4(np.array([j]))]]
        dens = [world.parcels[q].initial_density for q in cand
                if q > 0 and q in world.parcels
                and world.parcels[q].use in (RESIDENTIAL, COMMERCIAL, INDUSTRIAL)]
        if dens:
            out[j] = min(dens)
    return out


def test_neighbor_density_floor_matches_naive():
    w = busy_world()
    val = Valuation(w, SimConfig())
    val.ensure_fresh()
    assert np.array_equal(val.mnid, naive_mnid(w))


# ------------------------------------------------------------- cache integrity

def test_cache_equals_fresh_rebuild_after_mutations():
    w = busy_world()
    val = Valuation(w, SimConfig())
    val.begin_tick()
    rng = np.random.default_rng(7)
    for step in range(6):
        kind = step % 3
        if kind == 0:
            x, y = int(rng.integers(2, 22)), int(rng.integers(10, 22))
            if w.use[y, x] == 0:
                w.commit_parcel(RESIDENTIAL, np.array([w.flat(x, y)]), 1, 1, 1.0)
        elif kind == 1:
            x = int(rng.integers(2, 22))
            if w.use[20, x] == 0:
                w.commit_road([(x, 20)], ROAD_TERTIARY)
        else:
            pids = [p for p in w.parcels.values() if p.use == RESIDENTIAL]
            if pids:
                w.add_population(pids[0], 1)
        val.ensure_fresh()
        twin = val.fresh_twin()
        assert np.array_equal(val.raw, twin.raw), f"raw diverged at step {step}"
        assert np.array_equal(val.norm, twin.norm), f"norm diverged at step {step}"
        for u in val.F:
            assert np.array_equal(val.F[u], twin.F[u]), f"core diverged at step {step}"
        assert np.array_equal(val.mnid, twin.mnid)
        for u in val.P:
            assert np.array_equal(val.P[u], twin.P[u])
            assert np.array_equal(val.S[u], twin.S[u])
            assert np.array_equal(val.C[u], twin.C[u])


def test_value_fields_bounded():
    w = busy_world()
    w.paint("honey_residential", (0, 0, 24, 24), 1.0)
    val = Valuation(w, SimConfig())
    val.begin_tick()
    for u in (RESIDENTIAL, COMMERCIAL, INDUSTRIAL, PARK):
        v = val.value_field(u)
        assert np.all(v >= 0.0) and np.all(v <= 3.0)


# --------------------------------------------------------- proposal valuation

def test_self_population_raises_residential_proposal_value():
    w = flat_world()
    w.commit_road([(x, 8) for x in range(2, 20)], ROAD_TERTIARY)
    val = Valuation(w, SimConfig())
    val.begin_tick()
    patches = np.array([w.flat(6, 9), w.flat(7, 9)])
    with_self = val.development_value(RESIDENTIAL, patches, 2, 1.0)
    without = val.development_value(RESIDENTIAL, patches, 2, 1.0, include_self=False)
    assert with_self > without


def test_conversion_removal_shifts_density_attribution():
    # a city where commercial is under target, so its balance gates stay open
    w = flat_world()
    w.commit_road([(x, 8) for x in range(0, 36)], ROAD_TERTIARY)
    w.commit_road([(x, 20) for x in range(0, 36)], ROAD_TERTIARY)
    p = w.commit_parcel(RESIDENTIAL, np.array([w.flat(x, 9) for x in range(4, 8)]), 8, 0, 1.0)
    w.commit_parcel(COMMERCIAL, np.array([w.flat(x, 9) for x in range(10, 14)]), 16, 0, 4.0)
    # far-away population so the commercial balance gates stay open
    w.commit_parcel(RESIDENTIAL, np.array([w.flat(x, 30) for x in range(0, 30)]), 300, 0, 10.0)
    val = Valuation(w, SimConfig())
    val.begin_tick()
    as_com = val.development_value(
        COMMERCIAL, p.patches, p.population, p.density,
        removals=[(RESIDENTIAL, p.population, p.patches)])
    # removing the residential population must depress residential density
    # around the parcel, which the commercial weights price in
    keep = val.development_value(COMMERCIAL, p.patches, p.population, p.density)
    assert as_com != keep
    assert as_com < keep


def test_park_value_ignores_balance_and_smoothness():
    w = busy_world()
    val = Valuation(w, SimConfig())
    val.begin_tick()
    patches = np.array([w.flat(20, 4), w.flat(21, 4)])
    v = val.development_value(PARK, patches, 0, 0.0)
    # park value has no balance/smoothness factor; equals mean of core + honey
    core = val._core(PARK, val.norm[:, patches])
    assert v == pytest.approx(float(np.mean(core)), abs=1e-12)
