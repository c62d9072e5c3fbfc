"""Socket service: framing, RLE frames, steering, snapshot parity."""

import io
import socket
import time

import numpy as np
import pytest

from sprawl.config import SimConfig
from sprawl.engine import Engine, snapshot_text
from sprawl.io import flat_with_lake
from sprawl.service import (
    PROTOCOL_VERSION,
    Service,
    dirty_rects,
    format_message,
    read_message,
    rle_decode,
    rle_encode,
)
from sprawl.world import Terrain

# ------------------------------------------------------------------ units


def test_rle_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(10):
        arr = rng.integers(0, 4, size=rng.integers(1, 400))
        pairs = rle_encode(arr)
        assert (rle_decode(pairs, arr.size) == arr).all()
        # runs really are maximal: no two adjacent pairs share a value
        vals = pairs[::2]
        assert all(a != b for a, b in zip(vals, vals[1:]))


def test_rle_empty_and_constant():
    assert rle_encode(np.empty(0, np.int64)) == []
    assert rle_encode(np.full(7, 5)) == [5, 7]
    with pytest.raises(ValueError):
        rle_decode([1, 3], 5)


def test_dirty_rects_cover_exactly_the_changes():
    old = np.zeros((10, 12), np.int64)
    new = old.copy()
    new[2, 3:6] = 1
    new[3, 4] = 2
    new[8, 0] = 3  # separate band
    rects = dirty_rects(old, new)
    assert len(rects) == 2
    patched = old.copy()
    for r in rects:
        sub = rle_decode(r["use"], r["w"] * r["h"]).reshape(r["h"], r["w"])
        patched[r["y"] : r["y"] + r["h"], r["x"] : r["x"] + r["w"]] = sub
    assert (patched == new).all()


def test_dirty_rects_no_change():
    grid = np.arange(20).reshape(4, 5)
    assert dirty_rects(grid, grid.copy()) == []


def test_message_framing_round_trip():
    raw = format_message("step", "id-7", 42, {"ticks": 3})
    msg = read_message(io.BytesIO(raw))
    assert msg == {"kind": "step", "id": "id-7", "tick": 42, "payload": {"ticks": 3}}
    assert read_message(io.BytesIO(b"")) is None


def test_truncated_payload_rejected():
    raw = format_message("hello", "1", 0, {"a": 1})[:-2]
    with pytest.raises(ValueError):
        read_message(io.BytesIO(raw))


# ---------------------------------------------------------------- sockets


def tiny_engine(w=32, h=32, **kw):
    cfg = SimConfig()
    cfg.scale_agents_with_area = False
    cfg.agents_residential = 2
    cfg.agents_commercial = 1
    cfg.agents_industrial = 1
    cfg.agents_park = 0
    cfg.agents_extender = 1
    cfg.agents_connector = 0
    cfg.agents_primary = 0
    for k, v in kw.items():
        setattr(cfg, k, v)
    terrain = Terrain(np.full((h, w), 10.0), water_level=0.0, hill_offset=30.0)
    return Engine(cfg, terrain)


class Chat:
    """Blocking request/reply helper over one connection."""

    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=10)
        self.rfile = self.sock.makefile("rb")
        self.next_id = 0
        self.frames = []  # pushes collected while waiting for replies

    def send(self, kind, payload=None):
        self.next_id += 1
        mid = f"c{self.next_id}"
        self.sock.sendall(format_message(kind, mid, 0, payload or {}))
        return mid

    def ask(self, kind, payload=None):
        mid = self.send(kind, payload)
        while True:
            msg = read_message(self.rfile)
            assert msg is not None, "connection closed while waiting"
            if msg["id"] == mid:
                return msg
            assert msg["kind"] == "frame"
            self.frames.append(msg)

    def close(self):
        self.sock.close()


@pytest.fixture
def live():
    eng = tiny_engine()
    svc = Service(eng, port=0)
    svc.start()
    chat = Chat(svc.port)
    yield svc, chat
    chat.close()
    svc.stop()


def test_hello_reports_grid_and_palette(live):
    svc, chat = live
    msg = chat.ask("hello")
    assert msg["kind"] == "hello"
    assert msg["payload"]["protocol"] == PROTOCOL_VERSION
    assert msg["payload"]["width"] == 32
    assert msg["payload"]["height"] == 32
    assert msg["payload"]["palette"]["0"] == [255, 255, 255]


def test_step_then_frame_matches_engine(live):
    svc, chat = live
    reply = chat.ask("step", {"ticks": 3})
    assert reply["kind"] == "step"
    assert reply["payload"]["tick"] == 3
    frame = chat.ask("get_frame")["payload"]
    use = rle_decode(frame["use"], 32 * 32).reshape(32, 32)
    assert (use == svc.engine.world.use).all()
    assert frame["totals"]["cover"]["road_tertiary"] >= 5  # seed stub
    assert frame["tick"] == 3


def test_paint_shows_up_in_frame(live):
    svc, chat = live
    reply = chat.ask(
        "paint", {"layer": "honey_commercial", "region": [10, 12, 11, 13], "value": 1.0}
    )
    assert reply["kind"] == "paint"
    frame = chat.ask("get_frame")["payload"]
    honey = rle_decode(frame["honey"], 32 * 32).reshape(32, 32)
    assert honey[12, 10] == 255
    assert honey[0, 0] == 0


def test_bad_paint_returns_error_with_same_id(live):
    svc, chat = live
    reply = chat.ask(
        "paint", {"layer": "honey_casino", "region": [0, 0, 1, 1], "value": 1.0}
    )
    assert reply["kind"] == "error"
    assert "casino" in reply["payload"]["error"]


def test_unknown_kind_is_an_error(live):
    svc, chat = live
    reply = chat.ask("frobnicate")
    assert reply["kind"] == "error"
    assert "frobnicate" in reply["payload"]["error"]


def test_subscribe_pushes_monotone_frames(live):
    svc, chat = live
    assert chat.ask("subscribe", {"every": 1})["payload"]["every"] == 1
    chat.ask("step", {"ticks": 4})
    # pushed frames were collected while waiting for the step reply
    ticks = [f["tick"] for f in chat.frames]
    assert ticks == sorted(ticks)
    assert len(ticks) >= 1
    assert all(f["id"] == "-" for f in chat.frames)
    last = chat.frames[-1]["payload"]
    use = rle_decode(last["use"], 32 * 32).reshape(32, 32)
    assert (use == svc.engine.world.use).all()


def test_snapshot_matches_engine_serialization(live):
    svc, chat = live
    chat.ask("step", {"ticks": 2})
    got = chat.ask("get_snapshot")["payload"]["snapshot"]
    assert got == snapshot_text(svc.engine.snapshot())


def test_run_and_pause(live):
    svc, chat = live
    assert chat.ask("run")["payload"]["running"] is True
    deadline = time.time() + 5
    while svc.engine.tick_count < 3 and time.time() < deadline:
        time.sleep(0.01)
    assert chat.ask("pause")["payload"]["running"] is False
    tick = svc.engine.tick_count
    assert tick >= 3
    time.sleep(0.1)
    assert svc.engine.tick_count == tick  # really stopped


def test_load_swaps_the_engine(live):
    svc, chat = live
    reply = chat.ask("load", {"width": 24, "height": 16})
    assert reply["payload"] == {"width": 24, "height": 16, "tick": 0}
    hello = chat.ask("hello")["payload"]
    assert (hello["width"], hello["height"]) == (24, 16)
    frame = chat.ask("get_frame")["payload"]
    assert len(rle_decode(frame["use"], 24 * 16)) == 24 * 16


def test_two_clients_get_consistent_frames():
    eng = tiny_engine()
    svc = Service(eng, port=0)
    svc.start()
    a, b = Chat(svc.port), Chat(svc.port)
    try:
        a.ask("step", {"ticks": 2})
        fa = a.ask("get_frame")["payload"]
        fb = b.ask("get_frame")["payload"]
        assert fa["use"] == fb["use"]
        assert fa["tick"] == fb["tick"] == 2
    finally:
        a.close()
        b.close()
        svc.stop()
