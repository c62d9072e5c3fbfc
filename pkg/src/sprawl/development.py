"""Property developers: prospecting, parcel formation, improvement,
conversion, parks and honey swaps.

A developer keeps a working set of candidate sites (parcels it could take
over or improve, and empty road-adjacent patches it could build on), refreshed
each tick around its position.  Every site gets a concrete proposal and a
profit check; each profitable proposal commits immediately, so later sites in
the same sweep see the world the earlier ones left behind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .world import (
    COMMERCIAL,
    EMPTY,
    INDUSTRIAL,
    PARK,
    RESIDENTIAL,
    ROAD_PRIMARY,
    ROAD_TERTIARY,
    USE_NAMES,
    World,
)

FAR_PAST = -(10 ** 9)


def convertibility(parcel, use: int) -> bool:
    """May a developer of this use take over the parcel?

    Same use counts as convertible (that is the improvement path).  Direct
    residential/industrial conversion is barred in both directions, parks are
    never converted, and park developers only take undeveloped land.
    """
    if use == PARK:
        return False
    if parcel.use == PARK:
        return False
    pair = {parcel.use, use}
    if pair == {RESIDENTIAL, INDUSTRIAL}:
        return False
    return True


@dataclass
class Proposal:
    kind: str  # new | merge | improve | convert | park
    use: int
    patches: np.ndarray  # full resulting parcel
    population: int
    initial_density: float
    base: object = None  # parcel being improved/converted, or merge partner
    extra: np.ndarray | None = None  # newly claimed ground for merges
    site_value: float = 0.0
    new_value: float = 0.0


class PropertyDeveloper:
    kind = "property"

    def __init__(self, use: int, world: World, valuation, config, rng):
        self.use = use
        self.world = world
        self.val = valuation
        self.cfg = config
        self.rng = rng
        self.x = 0
        self.y = 0
        self.dev_parcels: list[int] = []
        self.dev_patches: list[int] = []
        self._taken = None  # scratch for parcel growth, sized to the map
        self.last_commit = FAR_PAST
        self.last_relocate = FAR_PAST

    @property
    def name(self) -> str:
        return f"{USE_NAMES[self.use]}_developer"

    # -------------------------------------------------------------- tick entry

    def act(self, tick: int, log=None) -> int:
        self.prospect(tick)
        commits = 0
        if self._try_honey_swap(tick, log):
            commits += 1
            self.last_commit = tick
        for site in self._sites():
            prop = self.build_proposal(site, tick)
            if prop is None:
                continue
            if self.profitable(prop):
                self._commit(prop, tick, log)
                commits += 1
                self.last_commit = tick
        return commits

    def _sites(self):
        sites = [("parcel", pid) for pid in self.dev_parcels]
        sites += [("patch", i) for i in self.dev_patches]
        return sites

    # ------------------------------------------------------------- prospecting

    def prospect(self, tick: int):
        w = self.world
        circle = w.neighborhood(self.x, self.y, 5)
        local = self._local_sites(circle)
        recent = (tick - self.last_commit <= self.cfg.recent_ticks
                  or tick - self.last_relocate <= self.cfg.recent_ticks)
        if local and recent:
            best = max(local, key=lambda s: (s[0], -s[1]))
            self.x, self.y = best[2] % w.width, best[2] // w.width
        else:
            self.relocate(tick)
        self._rebuild_sites()

    def _local_sites(self, circle):
        """(value, order, position) for current sites intersecting the circle."""
        w = self.world
        out = []
        for pid in self.dev_parcels:
            p = w.parcels.get(pid)
            if p is None:
                continue
            # patches and the circle are both ascending
            hit = _kernels.first_common(p.patches, circle)
            if hit >= 0:
                out.append((self.val.parcel_site_value(self.use, p),
                            int(p.patches[0]), int(hit)))
        if self.dev_patches:
            arr = np.intersect1d(np.array(self.dev_patches, np.int64), circle,
                                 assume_unique=True)
            if arr.size:
                vals = self.val.site_values(self.use, arr)
                out += [(float(v), int(i), int(i)) for v, i in zip(vals, arr)]
        return out

    def relocate(self, tick: int):
        w = self.world
        val_parts, key_parts = [], []
        if self.use != PARK and w.parcels:
            # parcel values come from the full value field in one pass;
            # per-parcel means match parcel_site_value's definition
            field = self.val.value_field(self.use)
            pg = w.parcel_grid.ravel()
            sums = np.bincount(pg, weights=field)
            counts = np.bincount(pg)
            pids = [pid for pid in sorted(w.parcels)
                    if convertibility(w.parcels[pid], self.use)]
            if pids:
                arr = np.array(pids, np.int64)
                pv = sums[arr] / counts[arr]
                anchors = np.empty(len(pids), np.int64)
                for k, pid in enumerate(pids):
                    p = w.parcels[pid]
                    anchors[k] = p.patches[0]
                    if p.use == self.use:
                        p.value = float(pv[k])
                val_parts.append(pv)
                key_parts.append(anchors)
        open_idx = np.flatnonzero(
            (w.use.ravel() == EMPTY) & w.road_adjacent.ravel() & ~w.reserved.ravel())
        if open_idx.size:
            val_parts.append(self.val.site_values(self.use, open_idx))
            key_parts.append(open_idx)
        if not val_parts:
            return  # saturated map: idle
        values = np.concatenate(val_parts)
        keys = np.concatenate(key_parts)
        order = np.lexsort((keys, -values))
        top = max(1, math.ceil(order.size / 5))
        pick = int(keys[order[self.rng.randrange(top)]])
        self.x, self.y = pick % w.width, pick // w.width
        self.dev_patches = []
        self.last_relocate = tick

    def _rebuild_sites(self):
        w = self.world
        circle = w.neighborhood(self.x, self.y, 5)
        uflat = w.use.ravel()
        if self.use == PARK:
            self.dev_parcels = []
        else:
            pids = np.unique(w.parcel_grid.ravel()[circle])
            self.dev_parcels = [int(pid) for pid in pids
                                if pid > 0 and convertibility(w.parcels[int(pid)], self.use)]
        # refresh patch candidates: drop built-on ones, add local empties
        keep = [i for i in self.dev_patches
                if uflat[i] == EMPTY and not w.reserved.ravel()[i] and w.road_adjacent.ravel()[i]]
        fresh = circle[(uflat[circle] == EMPTY)
                       & w.road_adjacent.ravel()[circle]
                       & ~w.reserved.ravel()[circle]]
        merged = sorted(set(keep) | set(int(i) for i in fresh))
        if merged:
            arr = np.array(merged, np.int64)
            vals = self.val.site_values(self.use, arr)
            drop = int(len(merged) * self.cfg.site_drop_share)
            if drop:
                order = sorted(range(len(merged)), key=lambda k: (vals[k], merged[k]))
                dead = set(order[:drop])
                merged = [m for k, m in enumerate(merged) if k not in dead]
        self.dev_patches = merged

    # --------------------------------------------------------------- proposals

    def build_proposal(self, site, tick: int) -> Proposal | None:
        w = self.world
        skind, key = site
        if skind == "parcel":
            p = w.parcels.get(key)
            if p is None or not convertibility(p, self.use):
                return None
            if p.use == self.use:
                if (p.population + 1) / p.size > self.cfg.density_max[USE_NAMES[self.use]]:
                    return None
                return Proposal("improve", self.use, p.patches, p.population + 1,
                                p.initial_density, base=p)
            return Proposal("convert", self.use, p.patches, p.population,
                            p.population / p.size, base=p)
        uflat = w.use.ravel()
        if uflat[key] != EMPTY or w.reserved.ravel()[key]:
            return None
        if self.use == PARK:
            return self.form_park(key, tick)
        return self.form_parcel(key, tick)

    def form_parcel(self, seed: int, tick: int) -> Proposal | None:
        """Grow a strip from a road-adjacent seed, then widen it."""
        w = self.world
        cfg = self.cfg
        uname = USE_NAMES[self.use]
        uflat = w.use.ravel()
        W, H = w.width, w.height
        sx, sy = seed % W, seed // W
        road = -1
        for dx, dy in ((0, -1), (-1, 0), (1, 0), (0, 1)):
            nx, ny = sx + dx, sy + dy
            if 0 <= nx < W and 0 <= ny < H:
                j = ny * W + nx
                u = uflat[j]
                if (u == ROAD_TERTIARY or u == ROAD_PRIMARY) and (road < 0 or j < road):
                    road = j
        if road < 0:
            return None
        rx, ry = road % W, road // W
        ux, uy = sx - rx, sy - ry  # away from the road
        target = self.rng.randint(cfg.size_min[uname], cfg.size_max[uname])
        reach = math.ceil(cfg.block_length / 2)
        taken = self._taken
        if taken is None or taken.size != W * H:
            taken = self._taken = np.zeros(W * H, np.uint8)
        strip = _kernels.grow_parcel(uflat, w.reserved.ravel(), taken,
                                     W, H, seed, ux, uy, reach, target)
        size = strip.size
        patches = np.sort(strip)
        dmin = cfg.density_min[uname]
        if size < cfg.size_min[uname]:
            partner = self._merge_partner(patches, size)
            if partner is None:
                return None
            total = size + partner.size
            pop = dmin * total
            union = np.sort(np.concatenate([patches, partner.patches]))
            return Proposal("merge", self.use, union, pop, float(dmin),
                            base=partner, extra=patches)
        return Proposal("new", self.use, patches, dmin * size, float(dmin))

    def _merge_partner(self, patches: np.ndarray, size: int):
        w = self.world
        room = self.cfg.size_max[USE_NAMES[self.use]] - size
        pid = _kernels.merge_partner_k(
            w.parcel_grid.ravel(), w.width, w.height,
            np.ascontiguousarray(patches, np.int64), self.use,
            room, w.parcel_use_by_id, w.parcel_size_by_id)
        return w.parcels[int(pid)] if pid >= 0 else None

    def form_park(self, seed: int, tick: int) -> Proposal | None:
        w = self.world
        cfg = self.cfg
        if w.city_population < cfg.park_min_city_population:
            return None
        park_cover = int(w.cover[PARK])
        if park_cover >= cfg.park_per_resident * w.city_population:
            return None
        if park_cover >= cfg.park_per_developed * w.developed_cover:
            return None
        lo, hi = cfg.size_min["park"], cfg.size_max["park"]
        base = self.rng.randint(lo, hi)
        site_v = float(self.val.site_values(PARK, np.array([seed]))[0])
        area = w.width * w.height
        scale_v = min(2.0, max(0.5, site_v))
        scale_c = min(2.0, max(0.5, w.developed_cover / (cfg.park_area_norm * area)))
        target = int(round(base * scale_v * scale_c))
        target = min(hi, max(lo, target))
        uflat = w.use.ravel()
        resv = w.reserved.ravel()
        region: list[int] = [seed]
        rset = {seed}
        while len(region) < target:
            frontier = [i for i in w.adjacent4(np.array(region, np.int64)).tolist()
                        if uflat[i] == EMPTY and not resv[i] and i not in rset]
            if not frontier:
                break
            vals = self.val.site_values(PARK, np.array(frontier, np.int64))
            ranked = sorted(zip(frontier, vals), key=lambda t: (-t[1], t[0]))
            admit = ranked[: math.ceil(len(ranked) / 2)]
            for i, _ in admit:
                if len(region) >= target:
                    break
                region.append(i)
                rset.add(i)
        if len(region) < lo:
            return None
        return Proposal("park", PARK, np.array(sorted(region), np.int64), 0, 0.0)

    # ------------------------------------------------------------------ profit

    def profitable(self, prop: Proposal) -> bool:
        val = self.val
        use = self.use
        if prop.kind == "improve":
            p = prop.base
            v_site = val.parcel_site_value(use, p)
            v_new = val.development_value(
                use, p.patches, prop.population, prop.initial_density,
                removals=[(use, p.population, p.patches)])
        elif prop.kind == "convert":
            p = prop.base
            v_site = val.parcel_site_value(use, p)
            v_new = val.development_value(
                use, p.patches, prop.population, prop.initial_density,
                removals=[(p.use, p.population, p.patches)])
        elif prop.kind == "merge":
            seed = int(prop.extra[0])
            v_site = val.site_value(use, seed)
            v_new = val.development_value(
                use, prop.patches, prop.population, prop.initial_density,
                removals=[(use, prop.base.population, prop.base.patches)])
        elif prop.kind == "park":
            seed = int(prop.patches[0])
            v_site = val.site_value(PARK, seed)
            v_new = val.development_value(PARK, prop.patches, 0, 0.0)
        else:  # new
            seed = int(prop.patches[0])
            v_site = val.site_value(use, seed)
            v_new = val.development_value(
                use, prop.patches, prop.population, prop.initial_density)
        prop.site_value = v_site
        prop.new_value = v_new
        if v_site <= 0.0:
            ok = v_new > 0.0
        else:
            ok = v_new / v_site >= 1.0 + self.cfg.profit_margin_pct / 100.0
        if ok and prop.kind == "convert":
            p = prop.base
            old_site = val.parcel_site_value(p.use, p)
            old_new = val.development_value(
                p.use, p.patches, prop.population, prop.initial_density,
                removals=[(p.use, p.population, p.patches)])
            prev_loss = min(0.0, old_new - old_site)
            new_gain = v_new - v_site
            ok = prev_loss <= new_gain
        return ok

    # ------------------------------------------------------------------ commit

    def _commit(self, prop: Proposal, tick: int, log):
        w = self.world
        if prop.kind == "improve":
            w.add_population(prop.base, 1)
        elif prop.kind == "convert":
            w.convert_parcel(prop.base, self.use, tick)
        elif prop.kind == "merge":
            w.absorb_parcel(prop.base, prop.extra, prop.population, tick)
        elif prop.kind == "park":
            w.commit_parcel(PARK, prop.patches, 0, tick, 0.0)
        else:
            w.commit_parcel(self.use, prop.patches, prop.population, tick,
                            prop.initial_density)
        if log is not None:
            log.append({
                "tick": tick,
                "agent": self.name,
                "action": prop.kind,
                "use": USE_NAMES[prop.use],
                "patches": [int(i) for i in np.atleast_1d(prop.patches)[:4]],
                "size": int(np.atleast_1d(prop.patches).size),
                "value_before": prop.site_value,
                "value_after": prop.new_value,
            })

    # -------------------------------------------------------------- honey swap

    def _try_honey_swap(self, tick: int, log) -> bool:
        if self.use == PARK:
            return False
        w = self.world
        hon = w.honey[self.use].ravel()
        best = None
        for pid in self.dev_parcels:
            p = w.parcels.get(pid)
            if p is None or p.use == self.use:
                continue
            sweet = float(hon[p.patches].mean())
            if sweet > 0 and (best is None or sweet > best[0]
                              or (sweet == best[0] and pid < best[1])):
                best = (sweet, pid)
        if best is None:
            return False
        honeyed = w.parcels[best[1]]
        victim = self._least_valuable_edge_parcel()
        if victim is None:
            return False
        if self.val.parcel_site_value(self.use, honeyed) <= self.val.parcel_value(victim):
            return False
        before = self.val.parcel_value(victim)
        w.convert_parcel(honeyed, self.use, tick)
        w.remove_parcel(victim)
        if log is not None:
            log.append({
                "tick": tick,
                "agent": self.name,
                "action": "honey_swap",
                "use": USE_NAMES[self.use],
                "patches": [int(i) for i in honeyed.patches[:4]],
                "size": int(honeyed.patches.size),
                "value_before": before,
                "value_after": self.val.parcel_value(honeyed),
            })
        return True

    def _least_valuable_edge_parcel(self):
        """This use's least valuable parcel touching a different-type parcel."""
        w = self.world
        pg = w.parcel_grid.ravel()
        best = None
        for pid in sorted(w.parcels):
            p = w.parcels[pid]
            if p.use != self.use:
                continue
            nb = pg[w.adjacent4(p.patches)]
            other = False
            for q in np.unique(nb[nb > 0]):
                if int(q) != pid and w.parcels[int(q)].use != self.use:
                    other = True
                    break
            if not other:
                continue
            v = self.val.parcel_value(p)
            if best is None or v < best[0]:
                best = (v, p)
        return best[1] if best else None
