"""Road-building agents.

Three kinds of agent grow the street network.  Extenders push dead-end
tertiary spurs into unserved ground, connectors close loops where the
network detour between two nearby patches is much longer than the crow
flies, and the primary developer carves arterial roads that tie the city
centre to the map edge and to the rest of the primary network.

Tertiary roads obey the painted street-grid lattice and the local road
density cap, and never cross water or parcels.  Primary roads ignore the
lattice and the cap, may bridge water, and upgrade tertiary patches they
run along.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from . import _kernels
from .world import (
    EMPTY,
    ROAD_PRIMARY,
    ROAD_TERTIARY,
    N8,
    World,
    disc_offsets,
    raster_segment,
)

SQRT2 = math.sqrt(2.0)
INF = float("inf")
_NO_TARGETS = np.zeros(0, bool)

# Half-angle of the forward view slice (an eighth of the circle).
_COS_SLICE = math.cos(math.radians(22.5))

# Candidate-cost weights for primary routing among built ground and
# across open country.  Order: pull to destination, pull to the straight
# line, existing-road bonus, parcel-edge bonus, pull to other primaries,
# water-heading penalty.
_URBAN_WEIGHTS = (0.3, 0.2, 1.0, 0.1, 1.0, 3.0)
_RURAL_WEIGHTS = (0.3, 0.5, 0.1, 0.2, 1.0, 3.0)

_OFF5 = disc_offsets(5)
_D5Y = _OFF5[:, 0].astype(np.float64)
_D5X = _OFF5[:, 1].astype(np.float64)
_D5N = np.hypot(_D5X, _D5Y)
_RING = _D5N > 4.0  # outer edge of the view slice, ray targets


# ----------------------------------------------------------------- grid law


def on_grid_mask(world: World, idx: np.ndarray) -> np.ndarray:
    """True where a patch lies on the painted street lattice.

    The lattice is defined per patch by spacing, rotation and slack; a
    patch qualifies when either rotated coordinate is within slack of a
    line.  Non-positive spacing disables that axis entirely.
    """
    idx = np.asarray(idx, np.int64)
    x, y = world.coords(idx)
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    th = world.grid_theta.ravel()[idx]
    ct, st = np.cos(th), np.sin(th)
    xr = x * ct + y * st
    yr = -x * st + y * ct
    ok = np.zeros(idx.shape, bool)
    for spacing, slack, val in (
        (world.grid_x.ravel()[idx], world.grid_dx.ravel()[idx], xr),
        (world.grid_y.ravel()[idx], world.grid_dy.ravel()[idx], yr),
    ):
        live = spacing > 0
        r = np.mod(val, np.where(live, spacing, 1.0))
        off = np.minimum(r, np.where(live, spacing, 1.0) - r)
        ok |= ~live | (live & (off <= slack + 1e-9))
    return ok


def on_grid_at(world: World, x: int, y: int) -> bool:
    return bool(on_grid_mask(world, np.array([world.flat(x, y)]))[0])


def clear_for_tertiary(world: World, x: int, y: int) -> bool:
    """Whether one patch may legally receive tertiary pavement now."""
    q = world.flat(x, y)
    if world.use.ravel()[q] != EMPTY:
        return False
    if world.reserved.ravel()[q]:
        return False
    if world.road_count5.ravel()[q] >= world.density_limit.ravel()[q]:
        return False
    return on_grid_at(world, x, y)


def path_density_ok(world: World, path: list[int]) -> bool:
    """Re-check the road density cap as if the path were already paved.

    Each prospective patch must stay within its cap after counting both
    existing roads and every other patch of the path inside its
    circle(5).
    """
    idx = np.asarray(path, np.int64)
    xs, ys = world.coords(idx)
    dx = xs[:, None] - xs[None, :]
    dy = ys[:, None] - ys[None, :]
    mutual = ((dx * dx + dy * dy) <= 25).sum(axis=1)
    base = world.road_count5.ravel()[idx]
    limit = world.density_limit.ravel()[idx]
    return bool(np.all(base + mutual <= limit))


# ------------------------------------------------------------ network paths


def network_path(
    world: World,
    start: int,
    goal: int | None = None,
    targets: np.ndarray | None = None,
    max_cost: float | None = None,
    ball: tuple[int, int, float] | None = None,
) -> tuple[float, int]:
    """Shortest-path cost over the 8-connected road graph.

    Steps cost 1 orthogonally and sqrt(2) diagonally.  Stops at `goal`,
    or at the first patch where `targets` is true.  `max_cost` prunes
    the frontier; `ball` = (x, y, r) restricts the search to patches
    within Euclidean r of a centre.  Returns (cost, patch) on success
    and (inf, -1) otherwise.
    """
    if ball is not None:
        bx, by, br = ball
        has_ball, bx, by, br2 = True, float(bx), float(by), float(br) * float(br)
    else:
        has_ball, bx, by, br2 = False, 0.0, 0.0, 0.0
    if targets is None:
        targets_arr, has_targets = _NO_TARGETS, False
    else:
        targets_arr, has_targets = np.ascontiguousarray(targets.ravel()), True
    cost, node = _kernels.network_path_k(
        world.use.ravel(), world.width, world.height, int(start),
        -1 if goal is None else int(goal), targets_arr, has_targets,
        INF if max_cost is None else float(max_cost), bx, by, br2, has_ball)
    return float(cost), int(node)


def _step_length(coords: list[tuple[int, int]]) -> float:
    total = 0.0
    for (ax, ay), (bx, by) in zip(coords, coords[1:]):
        total += SQRT2 if ax != bx and ay != by else 1.0
    return total


# ------------------------------------------------------------ path cleanup


def clip_water_tail(world: World, path: list[int], limit: int = 3) -> list[int]:
    """Drop a trailing water run longer than `limit` patches.

    Mid-path water crossings are bridges and stay; a long tail dangling
    over open water serves nothing and is cut entirely.
    """
    wm = world.water_mask.ravel()
    run = 0
    while run < len(path) and wm[path[len(path) - 1 - run]]:
        run += 1
    if run > limit:
        return path[: len(path) - run]
    return path


def smooth_path(world: World, path: list[int]) -> list[int]:
    """One smoothing pass over a paved path.

    Collapses zigzag elbows: a right-or-sharper turn whose following
    turn bends the other way (or ends the path) is shortcut.  When the
    two outer patches are adjacent the elbow drops; when they sit two
    apart the elbow moves to the straight midpoint, unless that midpoint
    is water, a parcel, or reserved ground.
    """
    if len(path) < 3:
        return list(path)
    w = world.width
    wm = world.water_mask.ravel()
    pg = world.parcel_grid.ravel()
    rsv = world.reserved.ravel()
    pts = [(i % w, i // w) for i in path]
    res = [pts[0]]
    j = 1
    while j < len(pts) - 1:
        ax, ay = res[-1]
        bx, by = pts[j]
        cx, cy = pts[j + 1]
        ux, uy = bx - ax, by - ay
        vx, vy = cx - bx, cy - by
        sharp = (
            max(abs(ux), abs(uy)) == 1
            and max(abs(vx), abs(vy)) == 1
            and ux * vx + uy * vy <= 0
        )
        if sharp and j + 2 < len(pts):
            dx_, dy_ = pts[j + 2]
            wx, wy = dx_ - cx, dy_ - cy
            turn1 = ux * vy - uy * vx
            turn2 = vx * wy - vy * wx
            sharp = turn1 * turn2 <= 0
        if sharp:
            cheb = max(abs(cx - ax), abs(cy - ay))
            if cheb <= 1:
                j += 1  # elbow drops, outer patches already adjacent
                continue
            if (ax + cx) % 2 == 0 and (ay + cy) % 2 == 0:
                mx, my = (ax + cx) // 2, (ay + cy) // 2
                m = my * w + mx
                if not wm[m] and pg[m] == 0 and not rsv[m]:
                    res.append((mx, my))
                    j += 1
                    continue
        res.append((bx, by))
        j += 1
    res.append(pts[-1])
    out = []
    for x, y in res:
        q = y * w + x
        if not out or out[-1] != q:
            out.append(q)
    return out


def _seg_dist(px, py, ax, ay, bx, by) -> float:
    """Distance from a point to the segment a-b."""
    vx, vy = bx - ax, by - ay
    den = vx * vx + vy * vy
    if den == 0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * vx + (py - ay) * vy) / den
    t = min(1.0, max(0.0, t))
    return math.hypot(px - ax - t * vx, py - ay - t * vy)


# ----------------------------------------------------------------- agents


class _RoadAgent:
    """Shared state: a position, a bounded trail memory, a stall clock."""

    kind = "road"

    def __init__(self, world: World, config, rng, x: int = 0, y: int = 0):
        self.world = world
        self.config = config
        self.rng = rng
        self.x = int(x)
        self.y = int(y)
        self.visited: deque[int] = deque(maxlen=50)
        self.idle_ticks = 0

    @property
    def pos(self) -> int:
        return self.world.flat(self.x, self.y)

    def _log(self, log, tick: int, action: str, path: list[int]):
        if log is not None:
            log.append(
                {
                    "tick": tick,
                    "agent": self.kind,
                    "action": action,
                    "size": len(path),
                    "patches": [int(p) for p in path[:4]],
                }
            )


class ExtenderAgent(_RoadAgent):
    """Walks uphill in road distance and drops spurs back to the network."""

    kind = "extender"

    def act(self, tick: int, log=None) -> int:
        w = self.world
        cfg = self.config
        rd = w.dist("road").ravel()
        if not self._climb(rd):
            self._teleport(rd)
        built = self._try_build(rd, tick, log)
        if built:
            self.idle_ticks = 0
        else:
            self.idle_ticks += 1
            if self.idle_ticks > cfg.road_stall_ticks:
                self._teleport(rd)
        return built

    def _climb(self, rd) -> bool:
        # One hill-climb step; False on a local maximum.
        w = self.world
        here = rd[self.pos]
        best = None
        ties = []
        for dy, dx in N8:
            qx, qy = self.x + dx, self.y + dy
            if not w.in_bounds(qx, qy):
                continue
            q = w.flat(qx, qy)
            if q in self.visited or rd[q] > self.config.road_reach_max:
                continue
            if w.water_mask.ravel()[q] or w.reserved.ravel()[q]:
                continue
            if rd[q] <= here:
                continue
            if best is None or rd[q] > best:
                best, ties = rd[q], [(qx, qy)]
            elif rd[q] == best:
                ties.append((qx, qy))
        if best is None:
            return False
        self.x, self.y = ties[self.rng.randrange(len(ties))]
        self.visited.append(self.pos)
        return True

    def _teleport(self, rd):
        w = self.world
        cfg = self.config
        ur = w.use.ravel()
        mask = (
            (ur == EMPTY)
            & ~w.reserved.ravel()
            & (w.road_count5.ravel() < w.density_limit.ravel())
            & (rd >= cfg.road_need_dist)
            & (rd <= cfg.road_reach_max)
        )
        idx = np.flatnonzero(mask)
        if idx.size:
            idx = idx[on_grid_mask(w, idx)]
        if not idx.size:
            return
        pick = int(idx[self.rng.randrange(idx.size)])
        self.x, self.y = pick % w.width, pick // w.width
        self.visited.clear()
        self.idle_ticks = 0

    def _try_build(self, rd, tick: int, log) -> int:
        w = self.world
        cfg = self.config
        if rd[self.pos] < cfg.road_need_dist:
            return 0
        if not clear_for_tertiary(w, self.x, self.y):
            return 0
        ur = w.use.ravel()
        pg = w.parcel_grid.ravel()
        e = w.terrain.elevation.ravel()
        road = (ur == ROAD_TERTIARY) | (ur == ROAD_PRIMARY)
        path: list[int] = []
        cx, cy = self.x, self.y
        while True:
            cur = w.flat(cx, cy)
            path.append(cur)
            hit = False
            for dy, dx in N8:
                qx, qy = cx + dx, cy + dy
                if w.in_bounds(qx, qy) and road[w.flat(qx, qy)]:
                    hit = True
                    break
            if hit:
                break
            # Descend: strictly closer to the network each step, legal
            # ground only.  Prefer parcel edges, then the flattest step.
            best = None
            for dy, dx in N8:
                qx, qy = cx + dx, cy + dy
                if not w.in_bounds(qx, qy):
                    continue
                q = w.flat(qx, qy)
                if rd[q] >= rd[cur] or q in path:
                    continue
                if not clear_for_tertiary(w, qx, qy):
                    continue
                edge = 0
                for dy2, dx2 in ((0, -1), (0, 1), (-1, 0), (1, 0)):
                    nx, ny = qx + dx2, qy + dy2
                    if w.in_bounds(nx, ny) and pg[w.flat(nx, ny)] > 0:
                        edge = 1
                        break
                key = (rd[q], -edge, abs(e[q] - e[cur]), self.rng.random())
                if best is None or key < best[0]:
                    best = (key, qx, qy)
            if best is None:
                return 0  # dead end, discard the spur
            cx, cy = best[1], best[2]
        if not path_density_ok(w, path):
            return 0
        w.commit_road(np.asarray(path, np.int64), ROAD_TERTIARY)
        self._log(log, tick, "extend", path)
        return 1


class ConnectorAgent(_RoadAgent):
    """Wanders the network and shortcuts needlessly long detours."""

    kind = "connector"

    def act(self, tick: int, log=None) -> int:
        w = self.world
        cfg = self.config
        ur = w.use.ravel()
        road = (ur == ROAD_TERTIARY) | (ur == ROAD_PRIMARY)
        if not road[self.pos]:
            if not self._reposition(road):
                return 0
        self._walk(road)
        dest = self._draw_destination(road)
        if dest is None:
            return 0
        dx_, dy_ = dest % w.width, dest // w.width
        euclid = math.hypot(dx_ - self.x, dy_ - self.y)
        if euclid == 0:
            return 0
        seg = raster_segment(self.x, self.y, int(dx_), int(dy_))
        if any(road[w.flat(px, py)] for px, py in seg[1:-1]):
            return 0
        cost, _ = network_path(
            w,
            self.pos,
            goal=dest,
            ball=(self.x, self.y, cfg.connector_radius),
        )
        if cost <= cfg.connector_ratio * euclid:
            return 0
        carved = self._carve(dest)
        if carved is None:
            return 0
        path, end = carved
        if not path or not path_density_ok(w, path):
            return 0
        coords = [(self.x, self.y)]
        coords += [(p % w.width, p // w.width) for p in path]
        coords.append((end % w.width, end // w.width))
        new_len = _step_length(coords)
        old_cost, _ = network_path(w, self.pos, goal=end)
        if cfg.connector_ratio * new_len > old_cost:
            return 0
        w.commit_road(np.asarray(path, np.int64), ROAD_TERTIARY)
        self._log(log, tick, "connect", path)
        self.idle_ticks = 0
        return 1

    def _reposition(self, road) -> bool:
        idx = np.flatnonzero(road)
        if not idx.size:
            return False
        pick = int(idx[self.rng.randrange(idx.size)])
        self.x, self.y = pick % self.world.width, pick // self.world.width
        self.visited.clear()
        return True

    def _walk(self, road):
        w = self.world
        cands = []
        for dy, dx in N8:
            qx, qy = self.x + dx, self.y + dy
            if w.in_bounds(qx, qy) and road[w.flat(qx, qy)]:
                cands.append((qx, qy))
        prev = self.visited[-1] if self.visited else None
        if len(cands) > 1 and prev is not None:
            cands = [c for c in cands if w.flat(*c) != prev] or cands
        if not cands:
            return
        self.visited.append(self.pos)
        self.x, self.y = cands[self.rng.randrange(len(cands))]

    def _draw_destination(self, road):
        w = self.world
        near = w.neighborhood(self.x, self.y, int(self.config.connector_radius))
        near = near[road[near] & (near != self.pos)]
        if not near.size:
            return None
        return int(near[self.rng.randrange(near.size)])

    def _carve(self, dest):
        """Greedy walk from the agent toward `dest` over open ground.

        Score favours short remaining distance, low road density, open
        country and level ground; ties fall to seeded random.  Keeps a
        three-deep stack of alternatives for backtracking and succeeds
        the moment any road patch is chosen.
        """
        w = self.world
        ur = w.use.ravel()
        road = (ur == ROAD_TERTIARY) | (ur == ROAD_PRIMARY)
        rd = w.dist("road").ravel()
        e = w.terrain.elevation.ravel()
        dxg, dyg = dest % w.width, dest // w.width
        e_dest = e[dest]
        seen = {self.pos}
        path: list[int] = []
        stack: list[tuple[int, list]] = []
        cx, cy = self.x, self.y
        for _ in range(16 * int(self.config.connector_radius)):
            raw = []
            for dy, dx in N8:
                qx, qy = cx + dx, cy + dy
                if not w.in_bounds(qx, qy):
                    continue
                q = w.flat(qx, qy)
                if q in seen:
                    continue
                if not road[q] and not clear_for_tertiary(w, qx, qy):
                    continue
                # Road candidates terminate the path; they compete on the
                # same terms so a distant road never beats a close one.
                raw.append(
                    (
                        q,
                        qx,
                        qy,
                        bool(road[q]),
                        float(w.road_count5.ravel()[q]),
                        float(rd[q]),
                        math.hypot(qx - dxg, qy - dyg),
                        abs(float(e[q]) - float(e_dest)),
                    )
                )
            ranked = self._rank(raw)
            if not ranked:
                hop = self._backtrack(stack, seen, path)
                if hop is None:
                    return None
                path, (q, qx, qy, is_road) = hop
                if is_road:
                    return path, q
                path.append(q)
                seen.add(q)
                cx, cy = qx, qy
                continue
            q, qx, qy, is_road = ranked[0]
            if is_road:
                return path, q
            stack.append((len(path), ranked[1:]))
            if len(stack) > 3:
                stack.pop(0)
            path.append(q)
            seen.add(q)
            cx, cy = qx, qy
        return None

    def _rank(self, raw):
        if not raw:
            return []
        cols = [[r[i] for r in raw] for i in (4, 5, 6, 7)]
        tops = [max(c) or 1.0 for c in cols]
        out = []
        for r in raw:
            cost = (
                0.2 * (r[4] / tops[0])
                + 0.1 * (1.0 - r[5] / tops[1])
                + 1.0 * (r[6] / tops[2])
                + 0.04 * (r[7] / tops[3])
            )
            out.append((cost, self.rng.random(), (r[0], r[1], r[2], r[3])))
        out.sort()
        return [c for _, _, c in out]

    def _backtrack(self, stack, seen, path):
        while stack:
            plen, rest = stack.pop()
            rest = [c for c in rest if c[0] not in seen]
            if rest:
                choice = rest.pop(0)
                if rest:
                    stack.append((plen, rest))
                return path[:plen], choice
        return None


class PrimaryAgent(_RoadAgent):
    """Routes arterial roads between the city core and the wider network."""

    kind = "primary"

    def __init__(self, world: World, config, rng, x: int = 0, y: int = 0):
        super().__init__(world, config, rng, x, y)
        self.peers: list["PrimaryAgent"] = []

    def act(self, tick: int, log=None) -> int:
        w = self.world
        cfg = self.config
        ur = w.use.ravel()
        road = (ur == ROAD_TERTIARY) | (ur == ROAD_PRIMARY)
        if not road.any():
            return 0
        if not road[self.pos]:
            if not self._reposition(road):
                return 0
        self._prospect(road)
        primary = ur == ROAD_PRIMARY
        has_primary = bool(primary.any())
        if has_primary:
            cost, _ = network_path(
                w, self.pos, targets=primary, max_cost=cfg.primary_min_network_dist
            )
        else:
            cost = INF
        built = 0
        if cost >= cfg.primary_min_network_dist:
            built = self._build(primary if has_primary else None, road, tick, log)
        if built:
            self.idle_ticks = 0
        else:
            self.idle_ticks += 1
            if self.idle_ticks > cfg.road_stall_ticks:
                self._teleport(road)
        return built

    def _reposition(self, road) -> bool:
        idx = np.flatnonzero(road)
        if not idx.size:
            return False
        pick = int(idx[self.rng.randrange(idx.size)])
        self.x, self.y = pick % self.world.width, pick // self.world.width
        self.visited.clear()
        return True

    def _prospect(self, road):
        # Climb the primary-distance field along the network, staying
        # out of other primary agents' working circles.
        w = self.world
        dp = w.dist("primary").ravel()
        here = dp[self.pos]
        best = None
        ties = []
        for dy, dx in N8:
            qx, qy = self.x + dx, self.y + dy
            if not w.in_bounds(qx, qy):
                continue
            q = w.flat(qx, qy)
            if not road[q] or q in self.visited:
                continue
            if any(
                math.hypot(qx - p.x, qy - p.y) <= 5 for p in self.peers if p is not self
            ):
                continue
            if dp[q] <= here:
                continue
            if best is None or dp[q] > best:
                best, ties = dp[q], [(qx, qy)]
            elif dp[q] == best:
                ties.append((qx, qy))
        if best is not None:
            self.x, self.y = ties[self.rng.randrange(len(ties))]
            self.visited.append(self.pos)

    def _teleport(self, road):
        # Restart somewhere on the network far from existing primaries.
        w = self.world
        idx = np.flatnonzero(road)
        if not idx.size:
            return
        dp = w.dist("primary").ravel()[idx]
        order = np.argsort(-dp, kind="stable")
        top = idx[order[: max(1, idx.size // 5)]]
        pick = int(top[self.rng.randrange(top.size)])
        self.x, self.y = pick % w.width, pick // w.width
        self.visited.clear()
        self.idle_ticks = 0

    def _build(self, primary, road, tick: int, log) -> int:
        w = self.world
        start = self.pos
        if primary is not None:
            _, near_dest = network_path(w, start, targets=primary)
        else:
            near_dest = -1
        if near_dest < 0:
            cx, cy = w.density_center()
            px = min(w.width - 1, max(0, int(round(cx))))
            py = min(w.height - 1, max(0, int(round(cy))))
            near_dest = w.flat(px, py)
        far_dest = self._far_destination(road, near_dest)
        built = 0
        for dest in (near_dest, far_dest):
            if dest is None or dest == start:
                continue
            path = self._carve(start, dest)
            if not path:
                continue
            path = clip_water_tail(w, path)
            path = smooth_path(w, path) if len(path) > 2 else path
            if not path:
                continue
            w.commit_road(np.asarray(path, np.int64), ROAD_PRIMARY)
            self._log(log, tick, "primary", path)
            built += 1
        return built

    def _far_destination(self, road, near_dest):
        w = self.world
        if self.rng.random() < 0.5:
            # The road patch closest to the population centre.
            idx = np.flatnonzero(road)
            if not idx.size:
                return None
            cx, cy = w.density_center()
            xs, ys = w.coords(idx)
            d2 = (xs - cx) ** 2 + (ys - cy) ** 2
            return int(idx[int(np.argmin(d2))])
        # An edge patch pointing away from the near destination.
        xs, ys = _border_coords(w.width, w.height)
        vx = xs - self.x
        vy = ys - self.y
        norm = np.hypot(vx, vy)
        ok = norm > 0
        if not ok.any():
            return None
        nx = (near_dest % w.width) - self.x
        ny = (near_dest // w.width) - self.y
        nn = math.hypot(nx, ny)
        if nn == 0:
            score = -norm  # no anchor: just go far
        else:
            score = np.where(ok, (vx * nx + vy * ny) / (norm * nn + 1e-12), INF)
        k = int(np.argmin(score))
        return int(ys[k] * w.width + xs[k])

    # ------------------------------------------------------------- carving

    def _carve(self, start: int, dest: int) -> list[int] | None:
        w = self.world
        sx, sy = start % w.width, start // w.width
        tx, ty = dest % w.width, dest // w.width
        hx, hy = float(tx - sx), float(ty - sy)
        norm = math.hypot(hx, hy)
        if norm == 0:
            return None
        hx /= norm
        hy /= norm
        seen = {start}
        path: list[int] = []
        cx, cy = sx, sy
        cap = 3 * (w.width + w.height)
        done = False
        for _ in range(cap):
            if self._developed_in_slice(cx, cy, hx, hy):
                step = self._urban_step(cx, cy, hx, hy, sx, sy, tx, ty, seen)
                if step is None:
                    break
                advance, done = step
            else:
                ray = self._rural_ray(cx, cy, hx, hy, sx, sy, tx, ty, seen)
                if ray is None:
                    break
                advance, done = ray
            if advance:
                for q in advance:
                    path.append(q)
                    seen.add(q)
                last = advance[-1]
                nx_, ny_ = last % w.width, last // w.width
                mv = math.hypot(nx_ - cx, ny_ - cy)
                if mv > 0:
                    hx, hy = (nx_ - cx) / mv, (ny_ - cy) / mv
                cx, cy = nx_, ny_
            if done:
                break
            if cx in (0, w.width - 1) or cy in (0, w.height - 1):
                done = True
                break
            if (cx, cy) == (tx, ty):
                done = True
                break
        if not done or not path:
            return None
        return path

    def _developed_in_slice(self, cx, cy, hx, hy) -> bool:
        m = (_D5X * hx + _D5Y * hy) >= _D5N * _COS_SLICE
        xs = cx + _OFF5[m, 1]
        ys = cy + _OFF5[m, 0]
        ok = (xs >= 0) & (xs < self.world.width) & (ys >= 0) & (ys < self.world.height)
        if not ok.any():
            return False
        u = self.world.use[ys[ok], xs[ok]]
        return bool(((u >= 1) & (u <= ROAD_PRIMARY)).any())

    def _water_term(self, qx, qy, hx, hy, dw) -> float:
        if not self.config.primary_water_heading:
            return 0.0
        w = self.world
        d = dw[qy, qx]
        if d >= w.sentinel:
            return 0.0
        x0, x1 = max(qx - 1, 0), min(qx + 1, w.width - 1)
        y0, y1 = max(qy - 1, 0), min(qy + 1, w.height - 1)
        gx = (dw[qy, x1] - dw[qy, x0]) / max(1, x1 - x0)
        gy = (dw[y1, qx] - dw[y0, qx]) / max(1, y1 - y0)
        gn = math.hypot(gx, gy)
        if gn == 0:
            return 0.0
        dot = -(hx * gx + hy * gy) / gn
        return (dot * dot) / ((1.0 + d) ** 2)

    def _urban_step(self, cx, cy, hx, hy, sx, sy, tx, ty, seen):
        w = self.world
        ur = w.use.ravel()
        pg = w.parcel_grid.ravel()
        rsv = w.reserved.ravel()
        dp = w.dist("primary").ravel()
        dw = w.dist("water")
        raw = []
        for dy, dx in N8:
            qx, qy = cx + dx, cy + dy
            if not w.in_bounds(qx, qy):
                continue
            q = w.flat(qx, qy)
            if q in seen:
                continue
            u = ur[q]
            if u == ROAD_PRIMARY:
                raw.append((q, True, (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)))
                continue
            if pg[q] > 0 or rsv[q]:
                continue
            boundary = 0.0
            for dy2, dx2 in ((0, -1), (0, 1), (-1, 0), (1, 0)):
                nx, ny = qx + dx2, qy + dy2
                if w.in_bounds(nx, ny) and pg[w.flat(nx, ny)] > 0:
                    boundary = 1.0
                    break
            terms = (
                math.hypot(qx - tx, qy - ty),
                _seg_dist(qx, qy, sx, sy, tx, ty),
                0.0 if u == ROAD_TERTIARY else 1.0,
                0.0 if boundary else 1.0,
                float(dp[q]),
                self._water_term(qx, qy, hx, hy, dw),
            )
            raw.append((q, False, terms))
        if not raw:
            return None
        pick, is_primary = _score_min(raw, _URBAN_WEIGHTS, self.rng)
        if is_primary:
            return [], True
        return [pick], False

    def _rural_ray(self, cx, cy, hx, hy, sx, sy, tx, ty, seen):
        w = self.world
        ur = w.use.ravel()
        pg = w.parcel_grid.ravel()
        rsv = w.reserved.ravel()
        dp = w.dist("primary").ravel()
        dw = w.dist("water")
        e = w.terrain.elevation.ravel()
        m = _RING & ((_D5X * hx + _D5Y * hy) >= _D5N * _COS_SLICE)
        rays = []
        for dy, dx in _OFF5[m]:
            ex, ey = cx + int(dx), cy + int(dy)
            if not w.in_bounds(ex, ey):
                continue
            kept = []
            done = False
            bad = False
            for px, py in raster_segment(cx, cy, ex, ey)[1:]:
                q = w.flat(px, py)
                if ur[q] == ROAD_PRIMARY:
                    done = True
                    break
                if pg[q] > 0 or rsv[q] or q in seen:
                    bad = True
                    break
                kept.append((q, px, py))
                if (px, py) == (tx, ty):
                    done = True
                    break
            if bad:
                continue
            if not kept:
                if done:
                    return [], True
                continue
            elevs = [float(e[q]) for q, _, _ in kept]
            offroad = sum(
                1 for q, _, _ in kept if ur[q] not in (ROAD_TERTIARY, ROAD_PRIMARY)
            )
            q_tip, px_tip, py_tip = kept[-1]
            terms = (
                float(np.var(elevs)),
                offroad / len(kept),
                math.hypot(px_tip - tx, py_tip - ty),
                _seg_dist(px_tip, py_tip, sx, sy, tx, ty),
                float(dp[q_tip]),
                self._water_term(px_tip, py_tip, hx, hy, dw),
            )
            rays.append(([q for q, _, _ in kept], done, terms))
        if not rays:
            return None
        cols = list(zip(*(r[2] for r in rays)))
        tops = [max(c) or 1.0 for c in cols]
        best = None
        for kept, done, terms in rays:
            cost = sum(
                wgt * (t / top) for wgt, t, top in zip(_RURAL_WEIGHTS, terms, tops)
            )
            key = (cost, self.rng.random())
            if best is None or key < best[0]:
                best = (key, kept, done)
        return best[1], best[2]


def _score_min(raw, weights, rng):
    """Normalize candidate terms by their maxima and take the cheapest."""
    cols = list(zip(*(r[2] for r in raw)))
    tops = [max(c) or 1.0 for c in cols]
    best = None
    for q, flag, terms in raw:
        cost = sum(wgt * (t / top) for wgt, t, top in zip(weights, terms, tops))
        key = (cost, rng.random())
        if best is None or key < best[0]:
            best = (key, q, flag)
    return best[1], best[2]


def _border_coords(width: int, height: int):
    xs = []
    ys = []
    for x in range(width):
        xs += [x, x]
        ys += [0, height - 1]
    for y in range(1, height - 1):
        xs += [0, width - 1]
        ys += [y, y]
    return np.array(xs, np.int64), np.array(ys, np.int64)
