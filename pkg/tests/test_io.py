"""File formats: terrain, grids, raster channels, polygons."""

import numpy as np
import pytest

from sprawl.config import ConfigError, SimConfig, format_config
from sprawl.engine import take_snapshot
from sprawl.io import (
    PALETTE,
    channel_grid,
    channel_image,
    export_raster,
    flat_with_lake,
    grid_text,
    load_config,
    load_terrain,
    loop_area,
    parse_grid,
    parse_terrain_text,
    pnm_text,
    polygons_text,
    terrain_text,
    vectorize,
    _trace_loops,
)
from sprawl.world import (
    COMMERCIAL,
    EMPTY,
    RESIDENTIAL,
    ROAD_TERTIARY,
    Terrain,
    World,
)


def test_terrain_text_header_and_roundtrip():
    text = "4 3 0 30\n" + "\n".join(" ".join("10" for _ in range(4)) for _ in range(3)) + "\n"
    t = parse_terrain_text(text)
    assert (t.width, t.height) == (4, 3)
    assert t.water_level == 0.0
    assert t.hill_offset == 30.0
    again = parse_terrain_text(terrain_text(t))
    assert np.array_equal(again.elevation, t.elevation)


def test_terrain_text_shape_errors():
    with pytest.raises(ValueError):
        parse_terrain_text("4 3 0 30\n1 2 3\n")
    with pytest.raises(ValueError):
        parse_terrain_text("")


def test_pgm16_terrain_with_sidecar(tmp_path):
    p = tmp_path / "ground.pgm"
    grays = [[0, 100], [200, 65535]]
    body = "\n".join(" ".join(str(v) for v in row) for row in grays)
    p.write_text(f"P2\n# comment\n2 2\n65535\n{body}\n")
    (tmp_path / "ground.pgm.meta").write_text(
        "feet_per_level = 0.01\nwater_level = 0\nhill_offset = 30\n"
    )
    t = load_terrain(str(p))
    assert t.elevation[0, 1] == pytest.approx(1.0)
    assert t.elevation[1, 1] == pytest.approx(655.35)


def test_pgm_without_sidecar_rejected(tmp_path):
    p = tmp_path / "ground.pgm"
    p.write_text("P2\n1 1\n255\n7\n")
    with pytest.raises(ValueError, match="sidecar"):
        load_terrain(str(p))


def test_empty_config_file_equals_dump(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("")
    cfg = load_config(str(p))
    assert format_config(cfg) == format_config(SimConfig())


def test_misspelled_config_key_is_hard_error(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("honeey_decay = 0.5\n")
    with pytest.raises(ConfigError, match="honeey_decay"):
        load_config(str(p))


def test_grid_text_roundtrip():
    ints = np.arange(12).reshape(3, 4)
    assert np.array_equal(parse_grid(grid_text(ints)), ints)
    floats = np.linspace(0, 1, 12).reshape(3, 4)
    back = parse_grid(grid_text(floats))
    assert np.array_equal(back, floats)


def snapshot_world():
    t = Terrain(np.full((12, 12), 10.0), water_level=0.0, hill_offset=30.0)
    w = World(t)
    w.commit_road([(x, 5) for x in range(2, 9)], ROAD_TERTIARY)
    a = np.array([w.flat(x, y) for x in (2, 3) for y in (6, 7, 8)], np.int64)
    w.commit_parcel(RESIDENTIAL, np.sort(a), 6, tick=3, initial_density=1.0)
    b = np.array([w.flat(x, y) for x in (5, 6) for y in (6, 7)], np.int64)
    w.commit_parcel(COMMERCIAL, np.sort(b), 16, tick=7, initial_density=4.0)
    return w


def test_use_channel_palette_and_text():
    w = snapshot_world()
    snap = take_snapshot(w, 10)
    img, text = export_raster(snap, "use")
    assert img.shape == (12, 12, 3)
    assert tuple(img[0, 0]) == PALETTE[EMPTY]
    assert tuple(img[6, 2]) == PALETTE[RESIDENTIAL]
    assert tuple(img[5, 3]) == PALETTE[ROAD_TERTIARY]
    assert np.array_equal(parse_grid(text), snap.use)


def test_density_channel_grays():
    w = snapshot_world()
    snap = take_snapshot(w, 10)
    img = channel_image(snap, "density")
    # Densities 1 and 4: grays at 25% and 100% of the observed max.
    assert img[6, 5] == 255
    assert img[6, 2] == 64  # round(255/4)
    assert img[0, 0] == 0


def test_age_and_value_channels():
    w = snapshot_world()
    snap = take_snapshot(w, 10)
    age = channel_grid(snap, "age")
    assert age[6, 2] == 3
    assert age[6, 5] == 7
    assert age[0, 0] == -1
    val = channel_grid(snap, "value")
    assert val[0, 0] == 0.0
    with pytest.raises(ValueError, match="unknown channel"):
        channel_grid(snap, "bogus")


def test_channel_text_roundtrip_bitexact():
    w = snapshot_world()
    snap = take_snapshot(w, 10)
    for channel in ("use", "density", "age"):
        grid = channel_grid(snap, channel)
        back = parse_grid(grid_text(grid, kind=channel))
        assert np.array_equal(back, grid)


def test_pnm_text_headers():
    img = np.zeros((2, 2, 3), np.uint8)
    text = pnm_text(img)
    assert text.startswith("P3\n# sprawl-export 1\n2 2\n255\n")
    gray = np.zeros((2, 3), np.uint8)
    assert pnm_text(gray).startswith("P2\n# sprawl-export 1\n3 2\n255\n")


def test_trace_rectangle():
    loops = _trace_loops({(x, y) for x in (4, 5) for y in (2, 3, 4)})
    assert len(loops) == 1
    assert len(loops[0]) == 4
    assert abs(loop_area(loops[0])) == 6.0


def test_trace_l_shape_six_vertices():
    loops = _trace_loops({(0, 0), (0, 1), (1, 1)})
    assert len(loops) == 1
    assert len(loops[0]) == 6
    assert abs(loop_area(loops[0])) == 3.0


def test_trace_ring_has_hole():
    cells = {(x, y) for x in range(3) for y in range(3)} - {(1, 1)}
    loops = _trace_loops(cells)
    assert len(loops) == 2
    total = sum(loop_area(l) for l in loops)
    assert abs(total) == 8.0  # outer minus hole
    areas = sorted(abs(loop_area(l)) for l in loops)
    assert areas == [1.0, 9.0]


def test_trace_diagonal_touch_stays_simple():
    loops = _trace_loops({(0, 0), (1, 1)})
    assert len(loops) == 2
    for loop in loops:
        assert len(set(loop)) == len(loop)
        assert abs(loop_area(loop)) == 1.0


def test_vectorize_snapshot_areas_match():
    w = snapshot_world()
    snap = take_snapshot(w, 10)
    polys = vectorize(snap)
    parcels = [p for p in polys if p["kind"] == "parcel"]
    assert {p["area"] for p in parcels} == {6.0, 4.0}
    roads = [p for p in polys if p["kind"] == "road"]
    assert len(roads) == 1
    assert roads[0]["area"] == 7.0
    text = polygons_text(polys)
    assert text.startswith("# sprawl-export 1 polygons")


def test_flat_with_lake_shape():
    t = flat_with_lake(60, 50)
    assert (t.width, t.height) == (60, 50)
    water = (t.elevation <= t.water_level).sum()
    assert 0 < water < 60 * 50 * 0.2
    # Deterministic: identical on rebuild.
    assert np.array_equal(t.elevation, flat_with_lake(60, 50).elevation)
