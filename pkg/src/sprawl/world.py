"""Patch grid world: terrain, land use, parcels, roads and paint layers.

Every mutation funnels through the commit / paint methods here so the derived
state (distance fields, road counts, adjacency masks, city totals) can never
drift from the use grid, and so listeners (the valuation cache) can trail the
change feed and stay bit-identical with a from-scratch recompute.

Coordinates are (x, y) with x the column; arrays are indexed [y, x] and flat
indices are y * width + x.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from ._chamfer import chamfer_steps, steps_to_field

# Land use codes, also the order used in snapshots and exports.
EMPTY = 0
RESIDENTIAL = 1
COMMERCIAL = 2
INDUSTRIAL = 3
PARK = 4
ROAD_TERTIARY = 5
ROAD_PRIMARY = 6
WATER = 7

USE_NAMES = (
    "empty",
    "residential",
    "commercial",
    "industrial",
    "park",
    "road_tertiary",
    "road_primary",
    "water",
)
USE_BY_NAME = {n: i for i, n in enumerate(USE_NAMES)}

PROPERTY_USES = (RESIDENTIAL, COMMERCIAL, INDUSTRIAL, PARK)
ROAD_USES = (ROAD_TERTIARY, ROAD_PRIMARY)
# Everything that counts as built ground when measuring the city's footprint.
DEVELOPED_USES = PROPERTY_USES + ROAD_USES

N8 = np.array(
    [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)],
    np.int64,
)


@lru_cache(maxsize=None)
def disc_offsets(radius: int) -> np.ndarray:
    """(dy, dx) offsets of the Euclidean disc of the given radius, lex sorted."""
    r2 = radius * radius
    offs = [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dx * dx + dy * dy <= r2
    ]
    a = np.array(offs, np.int64)
    a.setflags(write=False)
    return a


def raster_segment(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Bresenham rasterization of the segment, endpoints included."""
    pts = []
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        pts.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return pts


class Terrain:
    """Elevation grid plus the two scalar levels the valuation cares about."""

    def __init__(self, elevation: np.ndarray, water_level: float, hill_offset: float):
        self.elevation = np.asarray(elevation, np.float64)
        self.water_level = float(water_level)
        self.hill_offset = float(hill_offset)
        self._mean = None

    @property
    def height(self) -> int:
        return self.elevation.shape[0]

    @property
    def width(self) -> int:
        return self.elevation.shape[1]

    @property
    def mean_elevation(self) -> float:
        if self._mean is None:
            self._mean = float(self.elevation.mean())
        return self._mean

    def invalidate(self):
        self._mean = None


@dataclass
class Parcel:
    id: int
    use: int
    patches: np.ndarray  # sorted flat indices
    population: int
    created: int
    initial_density: float
    footprint: np.ndarray = field(default=None, repr=False)  # patches dilated by 5
    value: float = 0.0  # last computed mean patch value, refreshed when ranked

    @property
    def size(self) -> int:
        return int(self.patches.size)

    @property
    def density(self) -> float:
        return self.population / self.patches.size


class _DistField:
    __slots__ = ("orth", "diag", "field", "dirty")

    def __init__(self, h, w, sentinel):
        self.orth = np.full((h, w), -1, np.int32)
        self.diag = np.zeros((h, w), np.int32)
        self.field = np.full((h, w), sentinel, np.float64)
        self.dirty = True


# Distance field names -> source predicate, resolved in _dist_sources.
DIST_FIELDS = ("road", "primary", "water", "park", "commercial")


class World:
    def __init__(
        self,
        terrain: Terrain,
        road_density_limit: int = 20,
        grid_params: tuple = (8.0, 8.0, 0.0, 8.0, 8.0),
    ):
        self.terrain = terrain
        h, w = terrain.height, terrain.width
        self.height, self.width = h, w
        self.sentinel = float(w + h + 1)

        self.water_mask = terrain.elevation <= terrain.water_level
        self.use = np.where(self.water_mask, WATER, EMPTY).astype(np.int8)
        self.parcel_grid = np.zeros((h, w), np.int32)
        self.honey = {u: np.zeros((h, w), np.float64) for u in PROPERTY_USES}
        self.reserved = np.zeros((h, w), bool)
        gx, gy, gt, gdx, gdy = grid_params
        self.grid_x = np.full((h, w), float(gx))
        self.grid_y = np.full((h, w), float(gy))
        self.grid_theta = np.full((h, w), float(gt))
        self.grid_dx = np.full((h, w), float(gdx))
        self.grid_dy = np.full((h, w), float(gdy))
        self.density_limit = np.full((h, w), float(road_density_limit))

        self.parcels: dict[int, Parcel] = {}
        self._next_parcel = 1
        # use/size by parcel id, mirrored from the dict so jitted loops can
        # test neighbors without object lookups; removed ids read as use 0
        self.parcel_use_by_id = np.zeros(256, np.int8)
        self.parcel_size_by_id = np.zeros(256, np.int64)
        self.road_paths: list[tuple[int, list[tuple[int, int]]]] = []

        self.road_count5 = np.zeros((h, w), np.int32)
        self.road_adjacent = np.zeros((h, w), bool)

        self.cover = np.zeros(8, np.int64)  # patches per use
        self.population = np.zeros(8, np.int64)
        self.cover[WATER] = int(self.water_mask.sum())

        self._dist = {name: _DistField(h, w, self.sentinel) for name in DIST_FIELDS}
        self._any_dirty = True  # any distance field needs a flush pass
        self.listeners: list = []
        self.land_version = 0  # bumped whenever the water mask changes

    # ------------------------------------------------------------------ basics

    def flat(self, x, y):
        return y * self.width + x

    def coords(self, idx):
        y, x = np.divmod(np.asarray(idx, np.int64), self.width)
        return x, y

    def in_bounds(self, x, y) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def neighborhood(self, x: int, y: int, radius: int) -> np.ndarray:
        """Flat indices of in-bounds patches within Euclidean radius."""
        offs = disc_offsets(radius)
        yy = y + offs[:, 0]
        xx = x + offs[:, 1]
        ok = (xx >= 0) & (xx < self.width) & (yy >= 0) & (yy < self.height)
        return yy[ok] * self.width + xx[ok]

    def dilate(self, idx: np.ndarray, radius: int) -> np.ndarray:
        """Unique flat indices within the radius of any index in idx."""
        idx = np.asarray(idx, np.int64)
        offs = disc_offsets(radius)
        ys, xs = np.divmod(idx, self.width)
        yy = ys[:, None] + offs[None, :, 0]
        xx = xs[:, None] + offs[None, :, 1]
        ok = (xx >= 0) & (xx < self.width) & (yy >= 0) & (yy < self.height)
        return np.unique(yy[ok] * self.width + xx[ok])

    def adjacent4(self, idx: np.ndarray) -> np.ndarray:
        idx = np.ascontiguousarray(np.asarray(idx, np.int64))
        return _kernels.adjacent4_k(idx, self.width, self.height)

    def region_indices(self, region) -> np.ndarray:
        """Accepts an (x0, y0, x1, y1) inclusive rect, a bool mask, or flat indices."""
        if isinstance(region, np.ndarray):
            if region.dtype == bool:
                return np.flatnonzero(region.ravel()).astype(np.int64)
            return np.asarray(region, np.int64).ravel()
        x0, y0, x1, y1 = region
        x0 = max(0, int(x0))
        y0 = max(0, int(y0))
        x1 = min(self.width - 1, int(x1))
        y1 = min(self.height - 1, int(y1))
        if x1 < x0 or y1 < y0:
            return np.empty(0, np.int64)
        xs = np.arange(x0, x1 + 1, dtype=np.int64)
        ys = np.arange(y0, y1 + 1, dtype=np.int64)
        return (ys[:, None] * self.width + xs[None, :]).ravel()

    def _emit(self, event):
        for fn in self.listeners:
            fn(event)

    # --------------------------------------------------------- distance fields

    def _dist_sources(self, name: str) -> np.ndarray:
        if name == "road":
            return (self.use == ROAD_TERTIARY) | (self.use == ROAD_PRIMARY)
        if name == "primary":
            return self.use == ROAD_PRIMARY
        if name == "water":
            # Elevation decides; a bridged patch still reads as water here.
            return self.water_mask
        if name == "park":
            return self.use == PARK
        if name == "commercial":
            return self.use == COMMERCIAL
        raise KeyError(name)

    def flush(self):
        self._any_dirty = False
        for name, df in self._dist.items():
            if not df.dirty:
                continue
            df.dirty = False
            orth, diag = chamfer_steps(self._dist_sources(name))
            fld = steps_to_field(orth, diag, self.sentinel)
            changed = np.flatnonzero((fld != df.field).ravel()).astype(np.int64)
            df.orth, df.diag, df.field = orth, diag, fld
            if changed.size:
                self._emit(("dist", name, changed))

    def dist(self, name: str) -> np.ndarray:
        self.flush()
        return self._dist[name].field

    def _mark_dist_dirty(self, *names):
        self._any_dirty = True
        for n in names:
            self._dist[n].dirty = True

    # ----------------------------------------------------------------- parcels

    def _set_parcel_entry(self, pid: int, use: int, size: int):
        if pid >= self.parcel_use_by_id.size:
            cap = self.parcel_use_by_id.size
            while cap <= pid:
                cap *= 2
            nu = np.zeros(cap, np.int8)
            nu[: self.parcel_use_by_id.size] = self.parcel_use_by_id
            ns = np.zeros(cap, np.int64)
            ns[: self.parcel_size_by_id.size] = self.parcel_size_by_id
            self.parcel_use_by_id, self.parcel_size_by_id = nu, ns
        self.parcel_use_by_id[pid] = use
        self.parcel_size_by_id[pid] = size

    def commit_parcel(
        self,
        use: int,
        patches: np.ndarray,
        population: int,
        tick: int,
        initial_density: float,
        parcel_id: int | None = None,
    ) -> Parcel:
        patches = np.sort(np.asarray(patches, np.int64))
        if parcel_id is None:
            parcel_id = self._next_parcel
        self._next_parcel = max(self._next_parcel, parcel_id + 1)
        parcel = Parcel(
            id=parcel_id,
            use=use,
            patches=patches,
            population=int(population),
            created=int(tick),
            initial_density=float(initial_density),
            footprint=self.dilate(patches, 5),
        )
        self.parcels[parcel.id] = parcel
        self._set_parcel_entry(parcel.id, use, patches.size)
        uflat = self.use.ravel()
        old = uflat[patches].copy()
        uflat[patches] = use
        self.parcel_grid.ravel()[patches] = parcel.id
        self.cover[use] += patches.size
        self.population[use] += parcel.population
        if use == PARK:
            self._mark_dist_dirty("park")
        elif use == COMMERCIAL:
            self._mark_dist_dirty("commercial")
        self._emit(("use", patches, old, use))
        self._emit(("parcel+", parcel))
        return parcel

    def remove_parcel(self, parcel: Parcel):
        del self.parcels[parcel.id]
        self._set_parcel_entry(parcel.id, 0, 0)
        patches = parcel.patches
        uflat = self.use.ravel()
        old = uflat[patches].copy()
        uflat[patches] = EMPTY
        self.parcel_grid.ravel()[patches] = 0
        self.cover[parcel.use] -= patches.size
        self.population[parcel.use] -= parcel.population
        if parcel.use == PARK:
            self._mark_dist_dirty("park")
        elif parcel.use == COMMERCIAL:
            self._mark_dist_dirty("commercial")
        self._emit(("parcel-", parcel))
        self._emit(("use", patches, old, EMPTY))

    def convert_parcel(self, parcel: Parcel, new_use: int, tick: int):
        """Change a parcel's use in place; population transfers to the new use."""
        assert parcel.use != PARK and new_use != PARK
        old_use = parcel.use
        self._emit(("parcel-", parcel))
        uflat = self.use.ravel()
        old = uflat[parcel.patches].copy()
        uflat[parcel.patches] = new_use
        self.cover[old_use] -= parcel.size
        self.cover[new_use] += parcel.size
        self.population[old_use] -= parcel.population
        self.population[new_use] += parcel.population
        parcel.use = new_use
        parcel.created = int(tick)
        parcel.initial_density = parcel.population / parcel.size
        self.parcel_use_by_id[parcel.id] = new_use
        if COMMERCIAL in (old_use, new_use):
            self._mark_dist_dirty("commercial")
        self._emit(("use", parcel.patches, old, new_use))
        self._emit(("parcel+", parcel))

    def add_population(self, parcel: Parcel, delta: int):
        parcel.population += int(delta)
        self.population[parcel.use] += int(delta)
        self._emit(("pop", parcel, int(delta)))

    def absorb_parcel(self, parcel: Parcel, extra: np.ndarray, population: int, tick: int):
        """Grow a parcel by extra patches (a merge) and reset its population."""
        patches = np.sort(np.concatenate([parcel.patches, extra]))
        dpop = int(population) - parcel.population
        uflat = self.use.ravel()
        old = uflat[extra].copy()
        uflat[extra] = parcel.use
        self.parcel_grid.ravel()[extra] = parcel.id
        self.cover[parcel.use] += extra.size
        self.population[parcel.use] += dpop
        self._emit(("parcel-", parcel))
        parcel.patches = patches
        parcel.population = int(population)
        parcel.created = int(tick)
        parcel.initial_density = parcel.population / parcel.size
        parcel.footprint = self.dilate(patches, 5)
        self.parcel_size_by_id[parcel.id] = patches.size
        if parcel.use == PARK:
            self._mark_dist_dirty("park")
        elif parcel.use == COMMERCIAL:
            self._mark_dist_dirty("commercial")
        self._emit(("use", extra, old, parcel.use))
        self._emit(("parcel+", parcel))

    # ------------------------------------------------------------------- roads

    def commit_road(self, path, level: int):
        """Pave a path, given as flat indices or (x, y) pairs."""
        if isinstance(path, np.ndarray) and path.ndim == 1:
            idx = np.asarray(path, np.int64)
            coords = [(int(i % self.width), int(i // self.width)) for i in idx]
        else:
            coords = [(int(x), int(y)) for x, y in path]
            idx = np.array([self.flat(x, y) for x, y in coords], np.int64)
        uflat = self.use.ravel()
        old = uflat[idx].copy()
        fresh = idx[(old != ROAD_TERTIARY) & (old != ROAD_PRIMARY)]
        uflat[idx] = level
        for u in np.unique(old):
            if u != EMPTY:  # empty cover is untracked
                self.cover[int(u)] -= int((old == u).sum())
        self.cover[level] += idx.size
        if fresh.size:
            # Newly paved ground: bump circle(5) road counts and adjacency.
            ys, xs = np.divmod(fresh, self.width)
            for x, y in zip(xs, ys):
                np.add.at(self.road_count5.ravel(), self.neighborhood(int(x), int(y), 5), 1)
            self.road_adjacent.ravel()[self.adjacent4(fresh)] = True
            self._mark_dist_dirty("road")
        if level == ROAD_PRIMARY and int((old != ROAD_PRIMARY).sum()):
            self._mark_dist_dirty("primary")
        self.road_paths.append((level, list(coords)))
        self._emit(("use", idx, old, level))

    # ------------------------------------------------------------------- paint

    def paint(self, layer: str, region, value, tick: int = 0, min_density=None):
        idx = self.region_indices(region)
        if idx.size == 0:
            return
        if layer.startswith("honey_"):
            use = USE_BY_NAME[layer[6:]]
            if use not in self.honey:
                raise ValueError(f"no honey layer for use {layer[6:]}")
            self.honey[use].ravel()[idx] = min(1.0, max(0.0, float(value)))
        elif layer == "reserved":
            self.reserved.ravel()[idx] = bool(value)
        elif layer == "grid_params":
            gx, gy, gt, gdx, gdy = (float(v) for v in value)
            if gx <= 0 or gy <= 0:
                raise ValueError("grid spacing must be positive")
            self.grid_x.ravel()[idx] = gx
            self.grid_y.ravel()[idx] = gy
            self.grid_theta.ravel()[idx] = gt
            self.grid_dx.ravel()[idx] = gdx
            self.grid_dy.ravel()[idx] = gdy
        elif layer == "road_density_limit":
            v = float(value)
            if v < 1:
                raise ValueError("road density limit must be at least 1")
            self.density_limit.ravel()[idx] = v
        elif layer == "elevation":
            self._paint_elevation(idx, float(value))
        elif layer == "direct_use":
            use = USE_BY_NAME[value] if isinstance(value, str) else int(value)
            self.place_use(idx, use, tick, min_density)
        else:
            raise ValueError(f"unknown paint layer {layer!r}")

    def _paint_elevation(self, idx: np.ndarray, value: float):
        self.terrain.elevation.ravel()[idx] = value
        self.terrain.invalidate()
        new_water = self.terrain.elevation.ravel()[idx] <= self.terrain.water_level
        old_water = self.water_mask.ravel()[idx]
        flooded = idx[new_water & ~old_water]
        drained = idx[~new_water & old_water]
        if flooded.size:
            self.erase(flooded)  # clears any development before the flood fills in
        self.water_mask.ravel()[idx] = new_water
        uflat = self.use.ravel()
        if flooded.size:
            old = uflat[flooded].copy()
            uflat[flooded] = WATER
            self.cover[WATER] += flooded.size
            self._emit(("use", flooded, old, WATER))
        if drained.size:
            old = uflat[drained].copy()
            uflat[drained] = EMPTY
            self.cover[WATER] -= drained.size
            self._emit(("use", drained, old, EMPTY))
        if flooded.size or drained.size:
            self.land_version += 1
            self._mark_dist_dirty("water")
        self._emit(("elev", idx))

    def erase(self, region):
        """Revert a region to empty ground; parcels may shrink or split."""
        idx = self.region_indices(region)
        hit = np.unique(self.parcel_grid.ravel()[idx])
        for pid in hit:
            if pid == 0:
                continue
            parcel = self.parcels[int(pid)]
            keep = parcel.patches[~np.isin(parcel.patches, idx)]
            pop, created, d_ii, use = (
                parcel.population,
                parcel.created,
                parcel.initial_density,
                parcel.use,
            )
            self.remove_parcel(parcel)
            if keep.size == 0:
                continue
            for comp in self._components(keep):
                share = max(1, round(pop * comp.size / parcel.patches.size))
                self.commit_parcel(use, comp, share, created, d_ii)
        uflat = self.use.ravel()
        roads = idx[(uflat[idx] == ROAD_TERTIARY) | (uflat[idx] == ROAD_PRIMARY)]
        if roads.size:
            old = uflat[roads].copy()
            for u in ROAD_USES:
                self.cover[u] -= int((old == u).sum())
            uflat[roads] = EMPTY
            ys, xs = np.divmod(roads, self.width)
            for x, y in zip(xs, ys):
                np.add.at(self.road_count5.ravel(), self.neighborhood(int(x), int(y), 5), -1)
            stale = np.union1d(roads, self.adjacent4(roads))
            self.road_adjacent.ravel()[stale] = False
            for j in stale:
                n4 = self.adjacent4(np.array([j]))
                if np.any(np.isin(uflat[n4], ROAD_USES)):
                    self.road_adjacent.ravel()[j] = True
            self._mark_dist_dirty("road", "primary")
            self._emit(("use", roads, old, EMPTY))

    def place_use(self, region, use: int, tick: int, min_density=None):
        idx = self.region_indices(region)
        buildable = ~self.water_mask.ravel()[idx] & ~self.reserved.ravel()[idx]
        idx = idx[buildable]
        if idx.size == 0:
            return
        self.erase(idx)
        if use == EMPTY:
            return
        if use in ROAD_USES:
            xs, ys = self.coords(idx)
            self.commit_road(list(zip(xs.tolist(), ys.tolist())), use)
            return
        if use not in PROPERTY_USES:
            raise ValueError(f"cannot place use {USE_NAMES[use]}")
        dens = 0.0 if use == PARK else float(min_density if min_density is not None else 1.0)
        for comp in self._components(idx):
            pop = int(np.ceil(dens * comp.size))
            self.commit_parcel(use, comp, pop, tick, dens)

    def decay_honey(self, rate: float):
        if rate <= 0:
            return
        keep = 1.0 - rate
        for arr in self.honey.values():
            np.multiply(arr, keep, out=arr)

    # ------------------------------------------------------------------ helpers

    def _components(self, idx: np.ndarray) -> list[np.ndarray]:
        """4-connected components of a flat index set, deterministic order."""
        remaining = set(int(i) for i in idx)
        comps = []
        w = self.width
        while remaining:
            seed = min(remaining)
            stack = [seed]
            remaining.discard(seed)
            comp = [seed]
            while stack:
                j = stack.pop()
                y, x = divmod(j, w)
                for dy, dx in ((0, -1), (0, 1), (-1, 0), (1, 0)):
                    nx, ny = x + dx, y + dy
                    if 0 <= nx < w and 0 <= ny < self.height:
                        k = ny * w + nx
                        if k in remaining:
                            remaining.discard(k)
                            stack.append(k)
                            comp.append(k)
            comps.append(np.array(sorted(comp), np.int64))
        return comps

    @property
    def developed_cover(self) -> int:
        return int(self.cover[list(DEVELOPED_USES)].sum())

    @property
    def city_population(self) -> int:
        return int(self.population[list(PROPERTY_USES)].sum())

    def density_center(self) -> tuple[float, float]:
        """Population-weighted centroid, or the map center when unpopulated."""
        tx = ty = tp = 0.0
        for parcel in self.parcels.values():
            if parcel.population <= 0:
                continue
            ys, xs = np.divmod(parcel.patches, self.width)
            tx += parcel.population * float(xs.mean())
            ty += parcel.population * float(ys.mean())
            tp += parcel.population
        if tp == 0:
            return (self.width - 1) / 2.0, (self.height - 1) / 2.0
        return tx / tp, ty / tp

    def consistency_errors(self) -> list[str]:
        """Cross-checks between counters, grids and the parcel registry."""
        errs = []
        counts = np.bincount(self.use.ravel(), minlength=8)
        for u in range(1, 8):  # empty cover is the untracked remainder
            if counts[u] != self.cover[u]:
                errs.append(f"cover[{USE_NAMES[u]}] {self.cover[u]} != grid {counts[u]}")
        pops = np.zeros(8, np.int64)
        for parcel in self.parcels.values():
            pops[parcel.use] += parcel.population
            if not np.all(self.parcel_grid.ravel()[parcel.patches] == parcel.id):
                errs.append(f"parcel {parcel.id} grid mismatch")
            if not np.all(self.use.ravel()[parcel.patches] == parcel.use):
                errs.append(f"parcel {parcel.id} use mismatch")
            if len(self._components(parcel.patches)) != 1:
                errs.append(f"parcel {parcel.id} not connected")
        for u in PROPERTY_USES:
            if pops[u] != self.population[u]:
                errs.append(f"population[{USE_NAMES[u]}] {self.population[u]} != {pops[u]}")
        return errs
