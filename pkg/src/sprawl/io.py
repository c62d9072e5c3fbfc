"""Terrain and config files, raster export, polygon tracing.

All outputs are deterministic functions of their inputs and carry a
version header.  Images are ASCII portable pixmaps/graymaps so byte
equality holds across platforms.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .config import SimConfig, parse_config
from .world import (
    COMMERCIAL,
    EMPTY,
    INDUSTRIAL,
    PARK,
    RESIDENTIAL,
    ROAD_PRIMARY,
    ROAD_TERTIARY,
    USE_NAMES,
    WATER,
    Terrain,
)

EXPORT_VERSION = "sprawl-export 1"

# Fixed use palette: residential yellow, commercial red, industrial
# blue, park light green, roads dark gray, water blue-gray, empty white.
PALETTE = {
    EMPTY: (255, 255, 255),
    RESIDENTIAL: (240, 215, 70),
    COMMERCIAL: (215, 65, 50),
    INDUSTRIAL: (75, 95, 200),
    PARK: (160, 220, 130),
    ROAD_TERTIARY: (105, 105, 105),
    ROAD_PRIMARY: (60, 60, 60),
    WATER: (135, 155, 175),
}

CHANNELS = ("use", "density", "age", "value", "honey")


# ----------------------------------------------------------------- terrain


def load_terrain(path: str) -> Terrain:
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head in (b"P2", b"P5"):
        return _load_terrain_pgm(path)
    with open(path) as fh:
        return parse_terrain_text(fh.read())


def parse_terrain_text(text: str) -> Terrain:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty terrain file")
    head = lines[0].split()
    if len(head) != 4:
        raise ValueError("terrain header must be: width height water_level hill_offset")
    w, h = int(head[0]), int(head[1])
    water_level, hill_offset = float(head[2]), float(head[3])
    rows = []
    for ln, line in enumerate(lines[1 : h + 1], 2):
        vals = [float(v) for v in line.split()]
        if len(vals) != w:
            raise ValueError(f"line {ln}: expected {w} values, got {len(vals)}")
        rows.append(vals)
    if len(rows) != h:
        raise ValueError(f"expected {h} elevation rows, got {len(rows)}")
    return Terrain(np.array(rows, np.float64), water_level, hill_offset)


def terrain_text(terrain: Terrain) -> str:
    head = (
        f"{terrain.width} {terrain.height} "
        f"{terrain.water_level:.17g} {terrain.hill_offset:.17g}"
    )
    body = "\n".join(
        " ".join(f"{v:.17g}" for v in row) for row in terrain.elevation
    )
    return head + "\n" + body + "\n"


def _load_terrain_pgm(path: str) -> Terrain:
    """16-bit graymap plus a sidecar mapping gray levels to feet."""
    meta_path = path + ".meta"
    if not os.path.exists(meta_path):
        raise ValueError(f"graymap terrain needs a sidecar: {meta_path}")
    meta = {}
    with open(meta_path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, _, v = line.partition("=")
            meta[k.strip()] = float(v.strip())
    for key in ("feet_per_level", "water_level", "hill_offset"):
        if key not in meta:
            raise ValueError(f"sidecar missing {key}")
    gray = _read_pgm(path)
    elev = gray.astype(np.float64) * meta["feet_per_level"]
    return Terrain(elev, meta["water_level"], meta["hill_offset"])


def _read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    i = 0
    while len(tokens) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P2":
        vals = np.array(data[i:].split(), np.int64)
    elif magic == b"P5":
        i += 1  # single whitespace after maxval
        if maxval > 255:
            vals = np.frombuffer(data[i : i + w * h * 2], ">u2").astype(np.int64)
        else:
            vals = np.frombuffer(data[i : i + w * h], np.uint8).astype(np.int64)
    else:
        raise ValueError(f"not a graymap: {magic!r}")
    if vals.size != w * h:
        raise ValueError("graymap pixel count does not match header")
    return vals.reshape(h, w)


# ------------------------------------------------------------------ config


def load_config(path: str, base: SimConfig | None = None) -> SimConfig:
    with open(path) as fh:
        return parse_config(fh.read(), base)


# ------------------------------------------------------------- text grids


def grid_text(arr: np.ndarray, kind: str = "grid") -> str:
    h, w = arr.shape
    lines = [f"# {EXPORT_VERSION} {kind}", f"{w} {h}"]
    if np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool:
        fmt = lambda v: str(int(v))
    else:
        fmt = lambda v: f"{v:.17g}"
    for row in arr:
        lines.append(" ".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def parse_grid(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    w, h = (int(v) for v in lines[0].split()[:2])
    rows = [[float(v) for v in line.split()] for line in lines[1 : h + 1]]
    arr = np.array(rows)
    if arr.shape != (h, w):
        raise ValueError(f"grid shape {arr.shape} does not match header {(h, w)}")
    if np.all(arr == np.round(arr)):
        return arr.astype(np.int64)
    return arr


# ---------------------------------------------------------------- rasters


def channel_grid(snapshot, channel: str) -> np.ndarray:
    """The raw per-patch values behind one export channel."""
    if channel == "use":
        return snapshot.use.astype(np.int64)
    if channel == "density":
        return snapshot.density.copy()
    if channel == "age":
        age = np.full(snapshot.use.shape, -1, np.int64).ravel()
        for p in snapshot.parcels:
            age[p["patches"]] = p["created"]
        return age.reshape(snapshot.use.shape)
    if channel == "value":
        val = np.zeros(snapshot.use.shape).ravel()
        for p in snapshot.parcels:
            val[p["patches"]] = p["value"]
        return val.reshape(snapshot.use.shape)
    if channel == "honey":
        out = np.zeros(snapshot.use.shape)
        for arr in snapshot.honey.values():
            out = np.maximum(out, arr)
        return out
    raise ValueError(f"unknown channel: {channel!r}")


def channel_image(snapshot, channel: str) -> np.ndarray:
    """uint8 image: palette RGB for uses, linear gray for scalars."""
    grid = channel_grid(snapshot, channel)
    if channel == "use":
        img = np.zeros(grid.shape + (3,), np.uint8)
        for use, rgb in PALETTE.items():
            img[grid == use] = rgb
        return img
    vals = grid.astype(np.float64)
    if channel == "age":
        vals = np.where(vals < 0, 0.0, vals)
    top = vals.max()
    if top <= 0:
        return np.zeros(grid.shape, np.uint8)
    return np.clip(np.round(vals / top * 255), 0, 255).astype(np.uint8)


def export_raster(snapshot, channel: str) -> tuple:
    """(image array, text grid) for a channel; unknown channels reject."""
    return channel_image(snapshot, channel), grid_text(
        channel_grid(snapshot, channel), kind=channel
    )


def pnm_text(img: np.ndarray) -> str:
    """ASCII pixmap (RGB) or graymap (2-D) with a version comment."""
    if img.ndim == 3:
        h, w, _ = img.shape
        lines = [f"P3", f"# {EXPORT_VERSION}", f"{w} {h}", "255"]
        for row in img:
            lines.append(" ".join(str(int(v)) for px in row for v in px))
    else:
        h, w = img.shape
        lines = [f"P2", f"# {EXPORT_VERSION}", f"{w} {h}", "255"]
        for row in img:
            lines.append(" ".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------- vectorization


def _trace_loops(cells: set) -> list:
    """Closed boundary loops of a 4-connected cell set.

    Vertices are lattice corners.  Each loop keeps the region on its
    left, so outer boundaries and holes wind in opposite directions;
    collinear runs collapse to segment endpoints.
    """
    edges = {}
    for x, y in cells:
        if (x, y - 1) not in cells:
            edges.setdefault((x, y), []).append((x + 1, y))
        if (x + 1, y) not in cells:
            edges.setdefault((x + 1, y), []).append((x + 1, y + 1))
        if (x, y + 1) not in cells:
            edges.setdefault((x + 1, y + 1), []).append((x, y + 1))
        if (x - 1, y) not in cells:
            edges.setdefault((x, y + 1), []).append((x, y))
    loops = []
    while edges:
        start = min(edges)
        cur = start
        prev_dir = None
        loop = [start]
        while True:
            outs = edges[cur]
            if len(outs) == 1 or prev_dir is None:
                nxt = outs[0]
            else:
                # Corner touch: prefer the sharpest left turn so each
                # loop stays simple.
                def turn(o):
                    dx, dy = o[0] - cur[0], o[1] - cur[1]
                    cross = prev_dir[0] * dy - prev_dir[1] * dx
                    dot = prev_dir[0] * dx + prev_dir[1] * dy
                    return math.atan2(cross, dot)

                nxt = max(outs, key=turn)
            outs.remove(nxt)
            if not outs:
                del edges[cur]
            prev_dir = (nxt[0] - cur[0], nxt[1] - cur[1])
            cur = nxt
            if cur == start:
                break
            loop.append(cur)
        loops.append(_collapse(loop))
    return loops


def _collapse(loop: list) -> list:
    out = []
    n = len(loop)
    for i, pt in enumerate(loop):
        ax, ay = loop[i - 1]
        bx, by = pt
        cx, cy = loop[(i + 1) % n]
        if (bx - ax) * (cy - by) != (by - ay) * (cx - bx):
            out.append(pt)
    return out


def loop_area(loop: list) -> float:
    s = 0.0
    for (ax, ay), (bx, by) in zip(loop, loop[1:] + loop[:1]):
        s += ax * by - bx * ay
    return s / 2.0


def vectorize(snapshot) -> list:
    """Polygons for every parcel and contiguous road run.

    Returns records {"kind", "id"/"level", "use", "area", "loops"};
    area is the signed loop total, equal to the patch count.
    """
    w = snapshot.width
    out = []
    for p in snapshot.parcels:
        cells = {(i % w, i // w) for i in p["patches"]}
        loops = _trace_loops(cells)
        out.append(
            {
                "kind": "parcel",
                "id": p["id"],
                "use": p["use"],
                "area": abs(sum(loop_area(l) for l in loops)),
                "loops": loops,
            }
        )
    for level in (ROAD_TERTIARY, ROAD_PRIMARY):
        mask = snapshot.use == level
        for run_id, cells in enumerate(_components4(mask)):
            loops = _trace_loops(cells)
            out.append(
                {
                    "kind": "road",
                    "id": run_id,
                    "use": level,
                    "area": abs(sum(loop_area(l) for l in loops)),
                    "loops": loops,
                }
            )
    return out


def _components4(mask: np.ndarray) -> list:
    h, w = mask.shape
    seen = np.zeros_like(mask)
    comps = []
    for sy, sx in np.argwhere(mask):
        if seen[sy, sx]:
            continue
        stack = [(int(sx), int(sy))]
        seen[sy, sx] = True
        cells = set()
        while stack:
            x, y = stack.pop()
            cells.add((x, y))
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                qx, qy = x + dx, y + dy
                if 0 <= qx < w and 0 <= qy < h and mask[qy, qx] and not seen[qy, qx]:
                    seen[qy, qx] = True
                    stack.append((qx, qy))
        comps.append(cells)
    return comps


def polygons_text(polys: list) -> str:
    lines = [f"# {EXPORT_VERSION} polygons"]
    for p in polys:
        lines.append(
            f"{p['kind']} {p['id']} use={USE_NAMES[p['use']]} area={p['area']:g} "
            f"loops={len(p['loops'])}"
        )
        for loop in p["loops"]:
            lines.append("  " + " ".join(f"{x},{y}" for x, y in loop))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------- stock terrain


def flat_with_lake(width: int = 200, height: int = 200) -> Terrain:
    """The default bring-up map: level ground with one offset lake."""
    elev = np.full((height, width), 10.0)
    cy, cx = height * 0.35, width * 0.3
    r = min(width, height) * 0.1
    ys, xs = np.mgrid[0:height, 0:width]
    lake = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    elev[lake] = -5.0
    return Terrain(elev, water_level=0.0, hill_offset=30.0)
