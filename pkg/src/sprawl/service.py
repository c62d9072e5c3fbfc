"""Steering endpoint: a line-framed socket protocol around one engine.

Framing is a 4-line text header — kind, id, tick, payload-length — then
exactly payload-length bytes of JSON.  Every request gets exactly one
reply carrying the same id; frame pushes use kind "frame" with id "-"
and a strictly increasing tick.

A single loop thread owns the engine.  Client handler threads only
parse requests onto a queue and never touch simulation state, so
steering stays strictly between ticks.
"""

from __future__ import annotations

import json
import queue
import socket
import threading
import time

import numpy as np

from .config import SimConfig, parse_config
from .engine import Engine, snapshot_text
from .io import PALETTE, flat_with_lake, parse_terrain_text
from .valuation import CityTotals

PROTOCOL_VERSION = 1
RLE_LIMIT = 256  # full-grid frames below this edge length, rects above


def rle_encode(values) -> list:
    """Row-major [value, run, value, run, ...] pairs."""
    flat = np.asarray(values).ravel()
    if not flat.size:
        return []
    breaks = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], breaks))
    ends = np.concatenate((breaks, [flat.size]))
    out = []
    for s, e in zip(starts, ends):
        out += [int(flat[s]), int(e - s)]
    return out


def rle_decode(pairs, size) -> np.ndarray:
    out = np.empty(size, np.int64)
    at = 0
    for v, n in zip(pairs[::2], pairs[1::2]):
        out[at : at + n] = v
        at += n
    if at != size:
        raise ValueError("run lengths do not cover the grid")
    return out


def dirty_rects(old: np.ndarray, new: np.ndarray) -> list:
    """Changed areas as row bands: {x, y, w, h, use: RLE of the patch}."""
    diff = old != new
    rows = np.flatnonzero(diff.any(axis=1))
    if not rows.size:
        return []
    rects = []
    start = prev = rows[0]
    bands = []
    for r in rows[1:]:
        if r == prev + 1:
            prev = r
            continue
        bands.append((start, prev))
        start = prev = r
    bands.append((start, prev))
    for y0, y1 in bands:
        cols = np.flatnonzero(diff[y0 : y1 + 1].any(axis=0))
        x0, x1 = int(cols[0]), int(cols[-1])
        sub = new[y0 : y1 + 1, x0 : x1 + 1]
        rects.append(
            {
                "x": x0,
                "y": int(y0),
                "w": int(x1 - x0 + 1),
                "h": int(y1 - y0 + 1),
                "use": rle_encode(sub),
            }
        )
    return rects


def read_message(rfile):
    """One framed message, or None at a clean EOF."""
    kind = rfile.readline()
    if not kind:
        return None
    mid = rfile.readline()
    tick = rfile.readline()
    length = rfile.readline()
    if not length:
        raise ValueError("truncated header")
    n = int(length.strip())
    body = rfile.read(n) if n else b""
    if len(body) != n:
        raise ValueError("truncated payload")
    payload = json.loads(body) if body else {}
    return {
        "kind": kind.strip().decode(),
        "id": mid.strip().decode(),
        "tick": int(tick.strip() or 0),
        "payload": payload,
    }


def _jsonable(obj):
    # numpy scalars and arrays leak into reports; flatten them at the wire
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {obj.__class__.__name__}")


def format_message(kind: str, mid: str, tick: int, payload) -> bytes:
    body = json.dumps(
        payload, sort_keys=True, separators=(",", ":"), default=_jsonable
    ).encode()
    head = f"{kind}\n{mid}\n{tick}\n{len(body)}\n".encode()
    return head + body


class _Client:
    def __init__(self, conn):
        self.conn = conn
        self.rfile = conn.makefile("rb")
        self.subscribe_every = 0
        self.last_use = None
        self.lock = threading.Lock()

    def send(self, kind, mid, tick, payload):
        data = format_message(kind, mid, tick, payload)
        with self.lock:
            try:
                self.conn.sendall(data)
                return True
            except OSError:
                return False


class Service:
    """Serves one engine on a local TCP socket."""

    def __init__(self, engine: Engine, host="127.0.0.1", port=0):
        self.engine = engine
        self.requests: queue.Queue = queue.Queue()
        self.clients: list = []
        self._stop = threading.Event()
        self.running = False
        self.speed = 0.0  # extra sleep between ticks in run mode
        self.listener = socket.create_server((host, port))
        self.port = self.listener.getsockname()[1]
        self._threads = []

    # ----------------------------------------------------------- lifecycle

    def start(self):
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)
        t = threading.Thread(target=self._engine_loop, daemon=True)
        t.start()
        self._threads.append(t)

    def stop(self):
        self._stop.set()
        try:
            self.listener.close()
        except OSError:
            pass

    def serve_forever(self):
        self.start()
        while not self._stop.is_set():
            time.sleep(0.2)

    # ------------------------------------------------------------- accept

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, _ = self.listener.accept()
            except OSError:
                return
            client = _Client(conn)
            self.clients.append(client)
            t = threading.Thread(target=self._read_loop, args=(client,), daemon=True)
            t.start()
            self._threads.append(t)

    def _read_loop(self, client):
        while not self._stop.is_set():
            try:
                msg = read_message(client.rfile)
            except (ValueError, OSError) as exc:
                client.send("error", "-", self.engine.tick_count, {"error": str(exc)})
                continue
            if msg is None:
                break
            self.requests.put((client, msg))

    # -------------------------------------------------------- engine loop

    def _engine_loop(self):
        while not self._stop.is_set():
            try:
                item = self.requests.get(timeout=0.02 if self.running else 0.2)
            except queue.Empty:
                item = None
            if item is not None:
                self._handle(*item)
            if self.running and not self.engine.paused:
                self.engine.step()
                self._push_frames()
                if self.speed:
                    time.sleep(self.speed)

    # ------------------------------------------------------------- frames

    def _frame_payload(self, client) -> dict:
        eng = self.engine
        use = eng.world.use
        honey = np.zeros(use.shape)
        for arr in eng.world.honey.values():
            honey = np.maximum(honey, arr)
        honey8 = np.round(honey * 255).astype(np.int64)
        t = CityTotals.from_world(eng.world)
        totals = {
            "population": t.population,
            "cover": t.cover,
            "city_population": t.city_population,
            "developed_cover": t.developed_cover,
        }
        payload = {
            "tick": eng.tick_count,
            "width": eng.world.width,
            "height": eng.world.height,
            "totals": totals,
        }
        small = max(use.shape) < RLE_LIMIT
        if small or client.last_use is None:
            payload["use"] = rle_encode(use)
            payload["honey"] = rle_encode(honey8)
        else:
            payload["rects"] = dirty_rects(client.last_use, use)
            payload["honey"] = rle_encode(honey8)
        client.last_use = use.copy()
        return payload

    def _push_frames(self):
        tick = self.engine.tick_count
        for client in list(self.clients):
            every = client.subscribe_every
            if every and tick % every == 0:
                ok = client.send("frame", "-", tick, self._frame_payload(client))
                if not ok:
                    self.clients.remove(client)

    # ------------------------------------------------------------ requests

    def _handle(self, client, msg):
        kind = msg["kind"]
        mid = msg["id"]
        eng = self.engine
        try:
            if kind == "hello":
                reply = {
                    "protocol": PROTOCOL_VERSION,
                    "width": eng.world.width,
                    "height": eng.world.height,
                    "tick": eng.tick_count,
                    "palette": {str(u): list(rgb) for u, rgb in PALETTE.items()},
                }
            elif kind == "load":
                reply = self._load(msg["payload"])
            elif kind == "step":
                n = int(msg["payload"].get("ticks", 1))
                report = None
                for _ in range(max(1, n)):
                    report = eng.step()
                self._push_frames()
                reply = report
            elif kind == "run":
                self.running = True
                self.speed = float(msg["payload"].get("delay", 0.0))
                reply = {"running": True}
            elif kind == "pause":
                self.running = False
                reply = {"running": False}
            elif kind in ("paint", "erase", "set_param", "place_use"):
                diags = eng.apply_commands([{"kind": kind, **msg["payload"]}])
                if diags[0] is not None:
                    raise ValueError(diags[0])
                reply = {"applied": True, "tick": eng.tick_count}
            elif kind == "get_frame":
                reply = self._frame_payload(client)
            elif kind == "get_snapshot":
                reply = {"snapshot": snapshot_text(eng.snapshot())}
            elif kind == "subscribe":
                client.subscribe_every = int(msg["payload"].get("every", 1))
                reply = {"every": client.subscribe_every}
            else:
                raise ValueError(f"unknown message kind: {kind!r}")
        except (KeyError, ValueError, TypeError) as exc:
            client.send("error", mid, eng.tick_count, {"error": str(exc)})
            return
        client.send(kind, mid, eng.tick_count, reply)

    def _load(self, payload) -> dict:
        cfg = SimConfig()
        if payload.get("config"):
            cfg = parse_config(payload["config"], cfg)
        if payload.get("terrain"):
            terrain = parse_terrain_text(payload["terrain"])
        else:
            terrain = flat_with_lake(payload.get("width", 200), payload.get("height", 200))
        self.engine = Engine(cfg, terrain)
        for client in self.clients:
            client.last_use = None
        return {
            "width": self.engine.world.width,
            "height": self.engine.world.height,
            "tick": 0,
        }
