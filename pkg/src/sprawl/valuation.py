"""Land valuation: attribute fields, normalization, constraints, patch value.

A patch's value for a use is

    value = balance_pop * balance_cover * compat * smoothness * (W . A) + honey

where A is the vector of attributes normalized against their city means and W
the per-use weight row.  The Valuation object keeps every attribute as a full
raster row and trails the world's change feed, so lookups are cheap gathers
and a from-scratch recompute reproduces the cached rows bit for bit (that
equivalence is asserted in the tests).

City means are frozen once per tick, at begin_tick, as is the neglect
attribute (built from the previous tick's cached value fields).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .world import (
    COMMERCIAL,
    EMPTY,
    INDUSTRIAL,
    PARK,
    PROPERTY_USES,
    RESIDENTIAL,
    USE_NAMES,
    World,
    disc_offsets,
)

LOG3 = math.log(3.0)

# Raw attribute rows live next to the jitted loops that hard-code them.
from ._kernels import (  # noqa: E402
    N_RAW,
    ROW_COM_DENSITY,
    ROW_COM_DIST,
    ROW_CROWDING,
    ROW_FLATNESS,
    ROW_FLOOD_SAFETY,
    ROW_HILL,
    ROW_IND_DENSITY,
    ROW_MARKET,
    ROW_NEGLECT,
    ROW_PARK_DIST,
    ROW_PRIMARY_PROX,
    ROW_RELIEF,
    ROW_RES_DENSITY,
    ROW_WATER_PROX,
)

ATTRIBUTES = (
    "hill",
    "flatness",
    "relief",
    "flood_safety",
    "water_proximity",
    "residential_density",
    "industrial_density",
    "park_distance",
    "primary_proximity",
    "market",
    "commercial_distance",
    "neglect",
)

# Attribute name -> normalized stack row.
ATTR_ROW = {
    "hill": ROW_HILL,
    "flatness": ROW_FLATNESS,
    "relief": ROW_RELIEF,
    "flood_safety": ROW_FLOOD_SAFETY,
    "water_proximity": ROW_WATER_PROX,
    "residential_density": ROW_RES_DENSITY,
    "industrial_density": ROW_IND_DENSITY,
    "park_distance": ROW_PARK_DIST,
    "primary_proximity": ROW_PRIMARY_PROX,
    "market": ROW_MARKET,
    "commercial_distance": ROW_COM_DIST,
    "neglect": ROW_NEGLECT,
}

DENSITY_ROW = {RESIDENTIAL: ROW_RES_DENSITY, COMMERCIAL: ROW_COM_DENSITY, INDUSTRIAL: ROW_IND_DENSITY}
DENSITY_USES = (RESIDENTIAL, COMMERCIAL, INDUSTRIAL)

# shared empties for the no-removals proposal path
_NO_IDS = np.empty(0, np.int64)
_NO_VALS = np.empty(0)
_NO_START = np.zeros(1, np.int64)


def normalize(x, mean):
    """Map a positive attribute onto [0, 2] around its city mean.

    Exactly the mean maps to 1; zero maps to 0 (or 1 when the mean is also
    zero); with a zero mean any positive value maps to 2.
    """
    x = np.asarray(x, np.float64)
    mean = float(mean)
    if mean == 0.0:
        return np.where(x == 0.0, 1.0, 2.0)
    with np.errstate(divide="ignore", over="ignore"):
        low = np.power(2.0, 1.0 - mean / x)
        high = 2.0 - np.power(2.0, 1.0 - x / mean)
    out = np.where(x <= mean, low, high)
    return np.where(x == 0.0, 0.0, out)


def normalize_block(block, means) -> np.ndarray:
    """normalize() over a whole attribute stack, one mean per row.

    Kept cell-for-cell identical to the scalar form; the per-candidate
    value path leans on this running once per proposal instead of once
    per attribute row.
    """
    x = np.ascontiguousarray(block, np.float64)
    return _kernels.norm_block(x, np.asarray(means, np.float64))


def balance(amount, total, share) -> float:
    """Inverted parabola around the desired share of a city total.

    Peaks at 1 when amount == total * share, hits 0 at ratio 0 or about 2.11.
    An empty city (zero denominator) does not constrain.
    """
    denom = total * share
    if denom <= 0:
        return 1.0
    r = amount / denom
    return max(0.0, 1.0 - (0.9 * (r - 1.0)) ** 2)


def smoothness(density, floor):
    """Penalty for building much denser than the least dense neighbor.

    floor is the smallest initial density among the candidate and its
    neighboring parcels.  Up to a ratio of 1.2 there is no penalty; at 3.2
    and beyond the site is worthless for the candidate.
    """
    d = np.asarray(density, np.float64)
    f = np.asarray(floor, np.float64)
    if d.ndim == 0 and f.ndim == 0:
        return _kernels.smooth_cell(float(d), float(f))
    if d.ndim == 0:
        return _kernels.smooth_scalar_vec(float(d), np.ascontiguousarray(f))
    if f.ndim == 0:
        f = np.full(d.shape, float(f))
    return _kernels.smooth_vec(np.ascontiguousarray(d), np.ascontiguousarray(f))


@dataclass
class CityTotals:
    population: dict
    cover: dict
    city_population: int
    developed_cover: int

    @classmethod
    def from_world(cls, world: World) -> "CityTotals":
        pop = {USE_NAMES[u]: int(world.population[u]) for u in PROPERTY_USES}
        cover = {USE_NAMES[u]: int(world.cover[u]) for u in range(1, 8)}
        return cls(pop, cover, world.city_population, world.developed_cover)


class Valuation:
    def __init__(self, world: World, config):
        self.world = world
        self.config = config
        n = world.width * world.height
        self.n = n
        self.raw = np.zeros((N_RAW, n))
        self.norm = np.zeros((N_RAW + 1, n))
        self.market_raw = np.zeros(n)
        self.F = {u: np.zeros(n) for u in PROPERTY_USES}  # compat * (W . A)
        # density bookkeeping, stacked per use so kernels take one array;
        # the dicts hold row views onto the stacks
        self._P_all = np.zeros((3, n), np.int64)  # intersecting pop
        self._S_all = np.zeros((3, n), np.int64)  # intersecting size
        self._C_all = np.zeros((3, n), np.int64)  # patches in circle
        self.P = {u: self._P_all[u - 1] for u in DENSITY_USES}
        self.S = {u: self._S_all[u - 1] for u in DENSITY_USES}
        self.C = {u: self._C_all[u - 1] for u in DENSITY_USES}
        self.mnid = np.full(n, np.inf)  # least initial density at or adjacent
        self.parcel_density = np.zeros(n)
        self.parcel_dii = np.zeros(n)
        self.prev_value = {u: np.ones(n) for u in DENSITY_USES}
        self.means = np.ones(N_RAW)
        self.market_mean = 1.0
        self._gcache: dict = {}
        self.n5 = self._circle_counts()
        self.land_idx = np.flatnonzero(~world.water_mask.ravel())
        self._land_seen = world.land_version
        self._pending: dict[str, list] = {k: [] for k in
            ("terrain", "water", "park", "commercial", "primary", "density", "crowd")}
        self._dirty = True
        self._full_terrain = True
        self._has_pending = True
        self.wvec = {u: self._weight_vector(u) for u in PROPERTY_USES}
        self._W = np.ascontiguousarray(np.stack([self.wvec[u] for u in PROPERTY_USES]))
        self._allidx = np.arange(n, dtype=np.int64)
        # honey grids are mutated in place, so flat views stay valid
        self._honey_flat = {u: world.honey[u].ravel() for u in PROPERTY_USES}
        # scratch for the single-removal proposal path (never retained)
        self._rem1_use = np.empty(1, np.int64)
        self._rem1_pop = np.empty(1)
        self._rem1_start = np.zeros(2, np.int64)
        world.listeners.append(self._on_event)
        self.rebuild_registry()
        self.begin_tick()

    # ------------------------------------------------------------ static geometry

    def _circle_counts(self) -> np.ndarray:
        w, h = self.world.width, self.world.height
        offs = disc_offsets(5)
        xs = np.arange(w)
        ys = np.arange(h)
        # separable: the bounds clip per axis independently for each offset
        n5 = np.zeros((h, w), np.int64)
        for dy, dx in offs:
            okx = ((xs + dx) >= 0) & ((xs + dx) < w)
            oky = ((ys + dy) >= 0) & ((ys + dy) < h)
            n5 += oky[:, None] & okx[None, :]
        return n5.ravel()

    def _scatter_disc(self, arr: np.ndarray, idx: np.ndarray, delta: int):
        """Add delta to arr over the radius-5 disc of every index, duplicates kept."""
        if idx.size == 0:
            return
        w, h = self.world.width, self.world.height
        offs = disc_offsets(5)
        ys, xs = np.divmod(np.asarray(idx, np.int64), w)
        yy = ys[:, None] + offs[None, :, 0]
        xx = xs[:, None] + offs[None, :, 1]
        ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        np.add.at(arr, yy[ok] * w + xx[ok], delta)

    # ----------------------------------------------------------------- event feed

    def _on_event(self, ev):
        kind = ev[0]
        self._dirty = True
        self._has_pending = True
        if kind == "use":
            _, idx, old, new = ev
            for u in DENSITY_USES:
                gone = idx[old == u]
                if gone.size:
                    self._scatter_disc(self.C[u], gone, -1)
                if new == u:
                    came = idx[old != u]
                    if came.size:
                        self._scatter_disc(self.C[u], came, 1)
            self._pending["density"].append(self.world.dilate(idx, 5))
        elif kind == "parcel+":
            p = ev[1]
            if p.use in DENSITY_USES:
                self.P[p.use][p.footprint] += p.population
                self.S[p.use][p.footprint] += p.size
                self._pending["density"].append(p.footprint)
                self._refresh_mnid(np.union1d(p.patches, self.world.adjacent4(p.patches)))
                self.parcel_density[p.patches] = p.density
                self.parcel_dii[p.patches] = p.initial_density
            self._mark_crowd(p)
        elif kind == "parcel-":
            p = ev[1]
            if p.use in DENSITY_USES:
                self.P[p.use][p.footprint] -= p.population
                self.S[p.use][p.footprint] -= p.size
                self._pending["density"].append(p.footprint)
                self._refresh_mnid(np.union1d(p.patches, self.world.adjacent4(p.patches)))
                self.parcel_density[p.patches] = 0.0
                self.parcel_dii[p.patches] = 0.0
            self._mark_crowd(p)
        elif kind == "pop":
            _, p, delta = ev
            if p.use in DENSITY_USES:
                self.P[p.use][p.footprint] += delta
                self._pending["density"].append(p.footprint)
                self.parcel_density[p.patches] = p.density
        elif kind == "dist":
            _, name, idx = ev
            if name in ("water", "park", "commercial", "primary"):
                self._pending[name].append(idx)
        elif kind == "elev":
            self._pending["terrain"].append(self.world.dilate(ev[1], 5))
            self._full_terrain = True  # the elevation mean shifted too
        # honey / reserved changes need no raw row work

    def _mark_crowd(self, parcel):
        region = [parcel.patches, self.world.adjacent4(parcel.patches)]
        if parcel.use == COMMERCIAL:
            # neighbors of a commercial parcel see a new largest-neighbor size
            pids = np.unique(self.world.parcel_grid.ravel()[region[1]])
            for pid in pids:
                if pid > 0 and pid != parcel.id and pid in self.world.parcels:
                    region.append(self.world.parcels[pid].patches)
        self._pending["crowd"].append(np.unique(np.concatenate(region)))

    # ------------------------------------------------------------- raw row recompute

    def _elevation_window_rows(self, idx: np.ndarray):
        """Windowed mean and variance of elevation over circle(5), plus the
        pointwise terrain rows.  One fixed offset order so partial and full
        recomputes round identically."""
        w, h = self.world.width, self.world.height
        e = self.world.terrain.elevation.ravel()
        offs = disc_offsets(5)
        ys, xs = np.divmod(idx, w)
        acc = np.zeros(idx.size)
        acc2 = np.zeros(idx.size)
        for dy, dx in offs:
            yy = ys + dy
            xx = xs + dx
            ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
            v = e[np.where(ok, yy * w + xx, 0)]
            acc += np.where(ok, v, 0.0)
            acc2 += np.where(ok, v * v, 0.0)
        cnt = self.n5[idx]
        mean = acc / cnt
        var = acc2 / cnt - mean * mean
        var = np.maximum(var, 0.0)
        t = self.world.terrain
        pe = e[idx]
        self.raw[ROW_HILL, idx] = np.exp(-((pe - t.mean_elevation - t.hill_offset) ** 2) / 128.0)
        self.raw[ROW_FLATNESS, idx] = np.exp(-var)
        self.raw[ROW_RELIEF, idx] = var
        self.raw[ROW_FLOOD_SAFETY, idx] = (pe - t.water_level) ** 2

    def _density_rows(self, idx: np.ndarray):
        for u, row in DENSITY_ROW.items():
            denom = self.n5[idx] + self.S[u][idx] - self.C[u][idx]
            self.raw[row, idx] = self.P[u][idx] / denom

    def _refresh_mnid(self, idx: np.ndarray):
        """Least initial density among the parcel at or 4-adjacent to each patch."""
        if idx.size == 0:
            return
        w, h = self.world.width, self.world.height
        table = np.full(self.world._next_parcel, np.inf)
        for p in self.world.parcels.values():
            if p.use in DENSITY_USES:
                table[p.id] = p.initial_density
        pg = self.world.parcel_grid.ravel()
        ys, xs = np.divmod(idx, w)
        best = table[pg[idx]]
        for dy, dx in ((0, -1), (0, 1), (-1, 0), (1, 0)):
            yy = ys + dy
            xx = xs + dx
            ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
            v = table[pg[np.where(ok, yy * w + xx, 0)]]
            best = np.minimum(best, np.where(ok, v, np.inf))
        self.mnid[idx] = best

    def _refresh_crowding(self, idx: np.ndarray):
        """1 / size of the largest commercial parcel adjacent to the patch (or
        to the patch's parcel), floored at one."""
        if idx.size == 0:
            return
        w, h = self.world.width, self.world.height
        world = self.world
        table = np.zeros(world._next_parcel, np.int64)
        for p in world.parcels.values():
            if p.use == COMMERCIAL:
                table[p.id] = p.size
        pg = world.parcel_grid.ravel()
        own = pg[idx]
        loose = idx[own == 0]
        if loose.size:
            ys, xs = np.divmod(loose, w)
            best = np.zeros(loose.size, np.int64)
            for dy, dx in ((0, -1), (0, 1), (-1, 0), (1, 0)):
                yy = ys + dy
                xx = xs + dx
                ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
                v = table[pg[np.where(ok, yy * w + xx, 0)]]
                best = np.maximum(best, np.where(ok, v, 0))
            self.raw[ROW_CROWDING, loose] = 1.0 / np.maximum(1, best)
        for pid in np.unique(own[own > 0]):
            parcel = world.parcels[int(pid)]
            nb = pg[world.adjacent4(parcel.patches)]
            nb = np.unique(nb[(nb > 0) & (nb != pid)])
            biggest = max((int(table[q]) for q in nb), default=0)
            self.raw[ROW_CROWDING, parcel.patches[np.isin(parcel.patches, idx)]] = 1.0 / max(1, biggest)

    def proposal_crowding(self, patches: np.ndarray, exclude: int = 0) -> float:
        """Crowding a new commercial parcel on these patches would see."""
        w = self.world
        biggest = _kernels.proposal_crowd(
            w.parcel_grid.ravel(), w.width, w.height,
            np.ascontiguousarray(patches, np.int64), exclude,
            w.parcel_use_by_id, w.parcel_size_by_id)
        return 1.0 / max(1, int(biggest))

    # ------------------------------------------------------------------ refresh

    def rebuild_registry(self):
        """Recompute parcel-derived state from the registry (startup path)."""
        for u in DENSITY_USES:
            self.P[u][:] = 0
            self.S[u][:] = 0
            self.C[u][:] = 0
        self.parcel_density[:] = 0.0
        self.parcel_dii[:] = 0.0
        for p in self.world.parcels.values():
            if p.use in DENSITY_USES:
                self.P[p.use][p.footprint] += p.population
                self.S[p.use][p.footprint] += p.size
                self._scatter_disc(self.C[p.use], p.patches, 1)
                self.parcel_density[p.patches] = p.density
                self.parcel_dii[p.patches] = p.initial_density
        allidx = np.arange(self.n, dtype=np.int64)
        self._refresh_mnid(allidx)
        self._refresh_crowding(allidx)
        self._full_terrain = True
        self._pending["density"].append(allidx)
        self._pending["water"].append(allidx)
        self._pending["park"].append(allidx)
        self._pending["commercial"].append(allidx)
        self._pending["primary"].append(allidx)
        self._dirty = True
        self._has_pending = True

    def _drain(self) -> np.ndarray | None:
        """Apply pending raw-row updates; returns the union of touched indices."""
        self.world.flush()
        self._has_pending = False
        touched = []
        if self._full_terrain:
            allidx = np.arange(self.n, dtype=np.int64)
            self._elevation_window_rows(allidx)
            touched.append(allidx)
            self._full_terrain = False
            self._pending["terrain"].clear()
        elif self._pending["terrain"]:
            idx = np.unique(np.concatenate(self._pending["terrain"]))
            self._elevation_window_rows(idx)
            touched.append(idx)
            self._pending["terrain"].clear()
        for name, row in (("water", ROW_WATER_PROX), ("park", ROW_PARK_DIST),
                          ("commercial", ROW_COM_DIST), ("primary", ROW_PRIMARY_PROX)):
            if not self._pending[name]:
                continue
            idx = np.unique(np.concatenate(self._pending[name]))
            fld = self.world._dist[name].field.ravel()[idx]
            if name == "water":
                self.raw[row, idx] = 1.0 / (1.0 + fld) ** 2
            elif name == "primary":
                self.raw[row, idx] = np.exp(-fld)
            else:
                self.raw[row, idx] = fld
            touched.append(idx)
            self._pending[name].clear()
        if self._pending["density"]:
            idx = np.unique(np.concatenate(self._pending["density"]))
            self._density_rows(idx)
            touched.append(idx)
            self._pending["density"].clear()
        if self._pending["crowd"]:
            idx = np.unique(np.concatenate(self._pending["crowd"]))
            self._refresh_crowding(idx)
            touched.append(idx)
            self._pending["crowd"].clear()
        if not touched:
            return None
        return np.unique(np.concatenate(touched))

    def ensure_fresh(self):
        """Bring normalized rows and value cores up to date mid-tick."""
        if self.world._any_dirty:
            self.world.flush()
        if not self._has_pending:
            return
        self._gcache.clear()  # any event may have moved the city totals
        idx = self._drain()
        if idx is None:
            return
        self._recompute_normalized(idx)

    def _recompute_normalized(self, idx):
        idx = np.ascontiguousarray(np.asarray(idx, np.int64))
        _kernels.refresh_norm_cols(self.raw, self.norm, self.market_raw, idx, self.means)
        _kernels.refresh_fields_cols(
            self.norm, self.market_raw,
            self.F[RESIDENTIAL], self.F[COMMERCIAL], self.F[INDUSTRIAL], self.F[PARK],
            idx, self.market_mean, self._W,
            bool(self.config.park_compat_as_printed))

    def begin_tick(self):
        """Freeze the neglect row and the city means for the coming tick."""
        self.world.flush()
        self._gcache.clear()
        if self.world.land_version != self._land_seen:
            self.land_idx = np.flatnonzero(~self.world.water_mask.ravel())
            self._land_seen = self.world.land_version
            self._dirty = True
        self.wvec = {u: self._weight_vector(u) for u in PROPERTY_USES}
        self._W = np.ascontiguousarray(np.stack([self.wvec[u] for u in PROPERTY_USES]))
        if not self._dirty and not any(self._pending.values()) and not self._full_terrain:
            return
        self._drain()
        floor = self.config.value_floor
        self.raw[ROW_NEGLECT] = (
            1.0 / np.maximum(self.prev_value[RESIDENTIAL], floor)
            + 1.0 / np.maximum(self.prev_value[COMMERCIAL], floor)
            + 1.0 / np.maximum(self.prev_value[INDUSTRIAL], floor)
        )
        if self.land_idx.size:
            self.means = _kernels.row_means_at(self.raw, self.land_idx)
        else:
            self.means = np.ones(N_RAW)
        _kernels.refresh_norm_cols(self.raw, self.norm, self.market_raw,
                                   self._allidx, self.means)
        if self.land_idx.size:
            self.market_mean = float(_kernels.row_means_at(self.market_raw[None, :], self.land_idx)[0])
        else:
            self.market_mean = 1.0
        _kernels.refresh_fields_cols(
            self.norm, self.market_raw,
            self.F[RESIDENTIAL], self.F[COMMERCIAL], self.F[INDUSTRIAL], self.F[PARK],
            self._allidx, self.market_mean, self._W,
            bool(self.config.park_compat_as_printed))
        self._dirty = False

    def end_tick(self):
        """Cache value fields feeding next tick's neglect attribute."""
        self.ensure_fresh()
        for u in DENSITY_USES:
            self.prev_value[u] = self.value_field(u)

    # ------------------------------------------------------------------- weights

    def _weight_vector(self, use) -> np.ndarray:
        w = np.zeros(N_RAW + 1)
        for attr, weight in self.config.weights[USE_NAMES[use]].items():
            w[ATTR_ROW[attr]] = weight
        return w

    def _core(self, use, norm_block) -> np.ndarray:
        """compat * (W . normalized attributes) for one use."""
        return _kernels.core_field(
            np.ascontiguousarray(norm_block),
            self.wvec[use],
            int(use),
            bool(self.config.park_compat_as_printed),
        )

    # --------------------------------------------------------------- constraints

    def balance_pop(self, use) -> float:
        if use == PARK:
            return 1.0
        return balance(
            int(self.world.population[use]),
            self.world.city_population,
            self.config.pop_target[USE_NAMES[use]],
        )

    def balance_cover(self, use) -> float:
        if use == PARK:
            return 1.0
        return balance(
            int(self.world.cover[use]),
            self.world.developed_cover,
            self.config.cover_target[USE_NAMES[use]],
        )

    def _balance_g(self, use) -> float:
        # totals only move through world events, so ensure_fresh clears this
        g = self._gcache.get(use)
        if g is None:
            g = self.balance_pop(use) * self.balance_cover(use)
            self._gcache[use] = g
        return g

    # -------------------------------------------------------------------- values

    def _sigma_empty(self, use, idx):
        if use == PARK:
            return 1.0
        d = self.config.density_min[USE_NAMES[use]]
        return smoothness(d, np.minimum(d, self.mnid[idx]))

    def site_values(self, use, idx) -> np.ndarray:
        """As-is value of empty ground for a prospective use."""
        self.ensure_fresh()
        g = self._balance_g(use)
        idx = np.ascontiguousarray(np.asarray(idx, np.int64))
        d = 0.0 if use == PARK else float(self.config.density_min[USE_NAMES[use]])
        return _kernels.site_values_at(
            self.F[use], self._honey_flat[use], self.mnid,
            idx, d, g, use == PARK)

    def site_value(self, use, patch: int) -> float:
        """site_values for a single patch."""
        self.ensure_fresh()
        d = 0.0 if use == PARK else float(self.config.density_min[USE_NAMES[use]])
        return float(_kernels.site_value_1(
            self.F[use], self._honey_flat[use], self.mnid,
            patch, d, self._balance_g(use), use == PARK))

    def parcel_site_value(self, use, parcel) -> float:
        """As-is value of an existing parcel seen by a prospective use."""
        self.ensure_fresh()
        if parcel.use == PARK:
            dens = dii = float(self.config.density_min[USE_NAMES[use]]) if use != PARK else 0.0
        else:
            dens, dii = float(parcel.density), float(parcel.initial_density)
        v = _kernels.parcel_value_at(
            self.F[use], self._honey_flat[use], self.mnid,
            parcel.patches, dens, dii, self._balance_g(use), use == PARK)
        if use == parcel.use:
            parcel.value = v
        return v

    def parcel_value(self, parcel) -> float:
        return self.parcel_site_value(parcel.use, parcel)

    def value_field(self, use) -> np.ndarray:
        """Full-map as-is value of every patch for a use."""
        self.ensure_fresh()
        d = 0.0 if use == PARK else float(self.config.density_min[USE_NAMES[use]])
        g = self._balance_g(use)
        out = np.empty(self.n)
        _kernels.whole_value_field(
            self.F[use], self._honey_flat[use],
            self.parcel_density, self.parcel_dii, self.mnid,
            d, g, use == PARK, out)
        return out

    def development_value(self, use, patches, population, initial_density,
                          removals=(), include_self=True) -> float:
        """Value of a proposed development on these patches.

        The proposal's own population is counted in its density attributes
        (otherwise improving a building could never raise its value) but
        distance fields stay as-built: the proposal does not see itself as an
        already existing park or shop when measuring park/commercial distance.
        removals lists (use, population, patches) contributions to subtract,
        e.g. the previous parcel in a conversion.
        """
        self.ensure_fresh()
        patches = np.ascontiguousarray(np.asarray(patches, np.int64))
        if not removals:
            rem_use, rem_pop = _NO_IDS, _NO_VALS
            rem_start, rem_src = _NO_START, _NO_IDS
        elif len(removals) == 1:
            u0, pop0, src0 = removals[0]
            rem_use, rem_pop, rem_start = self._rem1_use, self._rem1_pop, self._rem1_start
            rem_use[0] = u0
            rem_pop[0] = pop0
            rem_src = np.ascontiguousarray(np.asarray(src0, np.int64))
            rem_start[1] = rem_src.size
        else:
            rem_use = np.empty(len(removals), np.int64)
            rem_pop = np.empty(len(removals))
            rem_start = np.zeros(len(removals) + 1, np.int64)
            segs = []
            for i, (u0, pop0, src0) in enumerate(removals):
                rem_use[i] = u0
                rem_pop[i] = pop0
                seg = np.ascontiguousarray(np.asarray(src0, np.int64))
                segs.append(seg)
                rem_start[i + 1] = rem_start[i] + seg.size
            rem_src = np.concatenate(segs)
        if use == COMMERCIAL:
            crowd, has_crowd = self.proposal_crowding(patches), True
        else:
            crowd, has_crowd = 0.0, False
        g = 1.0 if use == PARK else self._balance_g(use)
        return float(_kernels.proposal_value(
            self.raw, self.world.width, self.n5,
            self._P_all, self._S_all, self._C_all,
            patches, int(use), float(population), float(initial_density),
            bool(include_self),
            rem_use, rem_pop, rem_start, rem_src,
            float(crowd), has_crowd,
            self.mnid, self._honey_flat[use],
            self.means, self.market_mean, self.wvec[use],
            bool(self.config.park_compat_as_printed), g, use == PARK))

    def _pair_counts(self, eval_idx, src_idx) -> np.ndarray:
        """How many src patches fall in each eval patch's circle(5)."""
        w = self.world.width
        ey, ex = np.divmod(eval_idx, w)
        sy, sx = np.divmod(np.asarray(src_idx, np.int64), w)
        return _kernels.pair_counts(ex, ey, sx, sy)

    # ------------------------------------------------------------------- oracle

    def fresh_twin(self) -> "Valuation":
        """A new Valuation built from the same world, with this instance's
        frozen per-tick state carried over.  Used to assert cache integrity."""
        twin = Valuation.__new__(Valuation)
        twin.world = self.world
        twin.config = self.config
        twin.n = self.n
        twin.raw = np.zeros_like(self.raw)
        twin.norm = np.zeros_like(self.norm)
        twin.market_raw = np.zeros_like(self.market_raw)
        twin.F = {u: np.zeros(self.n) for u in PROPERTY_USES}
        twin._P_all = np.zeros((3, self.n), np.int64)
        twin._S_all = np.zeros((3, self.n), np.int64)
        twin._C_all = np.zeros((3, self.n), np.int64)
        twin._honey_flat = {u: self.world.honey[u].ravel() for u in PROPERTY_USES}
        twin._rem1_use = np.empty(1, np.int64)
        twin._rem1_pop = np.empty(1)
        twin._rem1_start = np.zeros(2, np.int64)
        twin.P = {u: twin._P_all[u - 1] for u in DENSITY_USES}
        twin.S = {u: twin._S_all[u - 1] for u in DENSITY_USES}
        twin.C = {u: twin._C_all[u - 1] for u in DENSITY_USES}
        twin.mnid = np.full(self.n, np.inf)
        twin.parcel_density = np.zeros(self.n)
        twin.parcel_dii = np.zeros(self.n)
        twin.prev_value = {u: self.prev_value[u].copy() for u in DENSITY_USES}
        twin.means = self.means.copy()
        twin.market_mean = self.market_mean
        twin._gcache = {}
        twin.n5 = self.n5
        twin.land_idx = self.land_idx.copy()
        twin._land_seen = self.world.land_version
        twin._pending = {k: [] for k in self._pending}
        twin._dirty = True
        twin._full_terrain = True
        twin._has_pending = True
        twin.wvec = {u: self._weight_vector(u) for u in PROPERTY_USES}
        twin._W = np.ascontiguousarray(np.stack([twin.wvec[u] for u in PROPERTY_USES]))
        twin._allidx = np.arange(twin.n, dtype=np.int64)
        twin.rebuild_registry()
        twin._drain()
        twin.raw[ROW_NEGLECT] = self.raw[ROW_NEGLECT].copy()
        twin._recompute_normalized(np.arange(twin.n, dtype=np.int64))
        return twin
