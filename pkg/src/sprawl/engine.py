"""Tick loop, network seeding, steering commands and snapshots.

One engine owns one world.  Each tick refreshes the frozen valuation
state, runs every agent once in a freshly shuffled order, then closes
the books.  Steering commands are applied strictly between ticks and
recorded, so a run is a pure function of (seed, terrain, command log).
"""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, SimConfig
from .development import PropertyDeveloper
from .roads import ConnectorAgent, ExtenderAgent, PrimaryAgent, on_grid_mask
from .valuation import CityTotals, Valuation
from .world import (
    COMMERCIAL,
    EMPTY,
    INDUSTRIAL,
    PARK,
    RESIDENTIAL,
    ROAD_TERTIARY,
    USE_NAMES,
    Terrain,
    World,
)

SNAPSHOT_VERSION = "sprawl-snapshot 1"

_PROPERTY_KINDS = (
    ("agents_residential", RESIDENTIAL),
    ("agents_commercial", COMMERCIAL),
    ("agents_industrial", INDUSTRIAL),
    ("agents_park", PARK),
)
_ROAD_KINDS = (
    ("agents_extender", ExtenderAgent),
    ("agents_connector", ConnectorAgent),
    ("agents_primary", PrimaryAgent),
)


@dataclass
class Snapshot:
    tick: int
    width: int
    height: int
    use: np.ndarray
    density: np.ndarray
    honey: dict
    reserved: np.ndarray
    parcels: list
    road_paths: list
    totals: CityTotals

    def text(self) -> str:
        return snapshot_text(self)


def take_snapshot(world: World, tick: int) -> Snapshot:
    density = np.zeros(world.width * world.height)
    parcels = []
    for pid in sorted(world.parcels):
        p = world.parcels[pid]
        parcels.append(
            {
                "id": int(p.id),
                "use": int(p.use),
                "population": int(p.population),
                "created": int(p.created),
                "initial_density": float(p.initial_density),
                "value": float(p.value),
                "patches": [int(i) for i in np.sort(p.patches)],
            }
        )
        density[p.patches] = p.population / p.patches.size
    honey = {
        use: world.honey[use].copy()
        for use in sorted(world.honey)
        if world.honey[use].any()
    }
    return Snapshot(
        tick=int(tick),
        width=world.width,
        height=world.height,
        use=world.use.copy(),
        density=density.reshape(world.use.shape),
        honey=honey,
        reserved=world.reserved.copy(),
        parcels=parcels,
        road_paths=[(int(level), [tuple(c) for c in coords]) for level, coords in world.road_paths],
        totals=CityTotals.from_world(world),
    )


def _grid_lines(arr: np.ndarray, fmt) -> list:
    return [" ".join(fmt(v) for v in row) for row in arr]


def snapshot_text(snap: Snapshot) -> str:
    """Canonical, platform-stable text form; field order is fixed."""
    out = [SNAPSHOT_VERSION]
    out.append(f"tick {snap.tick}")
    out.append(f"size {snap.width} {snap.height}")
    t = snap.totals
    pop = " ".join(f"{k}={v}" for k, v in sorted(t.population.items()))
    cov = " ".join(f"{k}={v}" for k, v in sorted(t.cover.items()))
    out.append(f"population {pop}")
    out.append(f"cover {cov}")
    out.append(f"city_population {t.city_population}")
    out.append(f"developed_cover {t.developed_cover}")
    out.append("use")
    out += _grid_lines(snap.use, lambda v: str(int(v)))
    out.append("density")
    out += _grid_lines(snap.density, lambda v: f"{v:.17g}")
    out.append("reserved")
    out += _grid_lines(snap.reserved.astype(int), lambda v: str(int(v)))
    for use in sorted(snap.honey):
        out.append(f"honey {USE_NAMES[use]}")
        out += _grid_lines(snap.honey[use], lambda v: f"{v:.17g}")
    out.append(f"parcels {len(snap.parcels)}")
    for p in snap.parcels:
        head = (
            f"parcel {p['id']} use={p['use']} population={p['population']} "
            f"created={p['created']} initial_density={p['initial_density']:.17g} "
            f"value={p['value']:.17g}"
        )
        out.append(head)
        out.append(" ".join(str(i) for i in p["patches"]))
    out.append(f"road_paths {len(snap.road_paths)}")
    for level, coords in snap.road_paths:
        pts = " ".join(f"{x},{y}" for x, y in coords)
        out.append(f"road {level} {pts}")
    return "\n".join(out) + "\n"


class Engine:
    def __init__(self, config: SimConfig, terrain: Terrain):
        self.config = config
        self.rng = random.Random(config.seed)
        self.world = World(
            terrain,
            road_density_limit=config.road_density_limit,
            grid_params=(
                config.grid_spacing_x,
                config.grid_spacing_y,
                config.grid_theta,
                config.grid_slack_x,
                config.grid_slack_y,
            ),
        )
        self.valuation = Valuation(self.world, config)
        self.tick_count = 0
        self.commitless = 0
        self.log: list = []
        self.command_log: list = []
        self.paused = False
        self.agents = self._make_agents()
        self._seed_network()

    # ------------------------------------------------------------- roster

    def _agent_count(self, base: int) -> int:
        if base <= 0:
            return 0
        if not self.config.scale_agents_with_area:
            return base
        scale = (self.world.width * self.world.height) / float(200 * 200)
        return max(1, round(base * scale))

    def _make_agents(self) -> list:
        agents = []
        for key, use in _PROPERTY_KINDS:
            for _ in range(self._agent_count(getattr(self.config, key))):
                agents.append(
                    PropertyDeveloper(use, self.world, self.valuation, self.config, self.rng)
                )
        primaries = []
        for key, cls in _ROAD_KINDS:
            for _ in range(self._agent_count(getattr(self.config, key))):
                a = cls(
                    self.world,
                    self.config,
                    self.rng,
                    x=self.rng.randrange(self.world.width),
                    y=self.rng.randrange(self.world.height),
                )
                agents.append(a)
                if cls is PrimaryAgent:
                    primaries.append(a)
        for a in primaries:
            a.peers = primaries
        return agents

    # ------------------------------------------------------------ seeding

    def _seed_network(self):
        """Place the initial 5-patch tertiary stub.

        Goes to the most valuable residential-rated patch that touches
        no water, extended in the first compass direction with room for
        a legal straight run.
        """
        w = self.world
        ur = w.use.ravel()
        cand = np.flatnonzero((ur == EMPTY) & ~w.reserved.ravel())
        if not cand.size:
            return
        xs, ys = w.coords(cand)
        near_water = np.zeros(cand.size, bool)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                qx = np.clip(xs + dx, 0, w.width - 1)
                qy = np.clip(ys + dy, 0, w.height - 1)
                near_water |= w.water_mask[qy, qx]
        cand = cand[~near_water]
        if not cand.size:
            return
        values = self.valuation.site_values(RESIDENTIAL, cand)
        order = np.argsort(-values, kind="stable")  # ties: lowest index
        for k in order:
            i = int(cand[k])
            x0, y0 = i % w.width, i // w.width
            for dx, dy in ((1, 0), (0, 1), (-1, 0), (0, -1)):
                pts = [(x0 + j * dx, y0 + j * dy) for j in range(5)]
                if not all(w.in_bounds(px, py) for px, py in pts):
                    continue
                idx = np.array([w.flat(px, py) for px, py in pts], np.int64)
                if not (ur[idx] == EMPTY).all() or w.reserved.ravel()[idx].any():
                    continue
                if not on_grid_mask(w, idx).all():
                    continue
                w.commit_road(idx, ROAD_TERTIARY)
                self.log.append(
                    {
                        "tick": self.tick_count,
                        "agent": "seed",
                        "action": "seed",
                        "size": 5,
                        "patches": [int(v) for v in idx],
                    }
                )
                return

    # --------------------------------------------------------------- tick

    def step(self) -> dict:
        self.valuation.begin_tick()
        roster = list(self.agents)
        self.rng.shuffle(roster)
        commits = 0
        for agent in roster:
            commits += agent.act(self.tick_count, self.log)
        self.valuation.end_tick()
        decay = self.config.honey_decay
        if decay > 0:
            for arr in self.world.honey.values():
                if arr.any():
                    arr *= 1.0 - decay
                    arr[arr < 1e-12] = 0.0
        self.tick_count += 1
        self.commitless = 0 if commits else self.commitless + 1
        return {
            "tick": self.tick_count,
            "commits": commits,
            "agents": [(a.kind, a.x, a.y) for a in roster if hasattr(a, "x")],
        }

    @property
    def quiescent(self) -> bool:
        return self.commitless >= self.config.quiescence_ticks

    # ------------------------------------------------------------ commands

    def apply_commands(self, commands) -> list:
        """Apply steering between ticks; returns per-command diagnostics."""
        diags = []
        for cmd in commands:
            try:
                self._apply_one(dict(cmd))
                diags.append(None)
            except (KeyError, ValueError, TypeError, ConfigError) as exc:
                diags.append(str(exc) or exc.__class__.__name__)
        return diags

    def _apply_one(self, cmd: dict):
        kind = cmd.get("kind")
        w = self.world
        if kind == "paint":
            w.paint(
                cmd["layer"],
                cmd["region"],
                cmd["value"],
                tick=self.tick_count,
                min_density=cmd.get("min_density"),
            )
        elif kind == "erase":
            w.erase(cmd["region"])
        elif kind == "set_param":
            self.config.set_key(cmd["key"], cmd["value"])
        elif kind == "place_use":
            w.place_use(
                cmd["region"],
                int(cmd["use"]),
                tick=self.tick_count,
                min_density=cmd.get("min_density"),
            )
        elif kind == "pause":
            self.paused = True
        elif kind == "resume":
            self.paused = False
        else:
            raise ValueError(f"unknown command kind: {kind!r}")
        self.command_log.append({"tick": self.tick_count, **cmd})
        self.log.append({"tick": self.tick_count, "agent": "artist", "action": kind})
        # steering is activity: a quiesced run must wake up and react to it
        self.commitless = 0

    # ---------------------------------------------------------------- run

    def snapshot(self) -> Snapshot:
        return take_snapshot(self.world, self.tick_count)

    def run(self, ticks=None, replay=None, on_snapshot=None) -> list:
        """Run to the tick budget or quiescence; returns the snapshots.

        `replay` is a recorded command log: each entry re-applies before
        the tick it was originally recorded at.
        """
        budget = self.config.ticks if ticks is None else ticks
        pending = sorted(replay, key=lambda c: c["tick"]) if replay else []
        k = max(1, self.config.snapshot_every)
        history = [self.snapshot()]
        if on_snapshot:
            on_snapshot(history[-1])
        while self.tick_count < budget and not self.quiescent:
            while pending and pending[0]["tick"] <= self.tick_count:
                self._apply_one({k2: v for k2, v in pending.pop(0).items() if k2 != "tick"})
            self.step()
            if self.tick_count % k == 0:
                history.append(self.snapshot())
                if on_snapshot:
                    on_snapshot(history[-1])
        if history[-1].tick != self.tick_count:
            history.append(self.snapshot())
            if on_snapshot:
                on_snapshot(history[-1])
        return history
