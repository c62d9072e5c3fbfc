"""Composition and conditional-proportion measures over use grids.

The configuration measure asks: standing on a patch of use u, what
fraction of the surrounding square window holds use v?  Windows are
square, (2r+1) on a side, clipped at the map edge; the six-way category
partition is residential, commercial, industrial, road (both levels),
water, and other (empty or park).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

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
)

CATEGORY_NAMES = ("residential", "commercial", "industrial", "road", "water", "other")
N_CAT = len(CATEGORY_NAMES)

_CAT_OF_USE = np.empty(8, np.int8)
_CAT_OF_USE[EMPTY] = 5
_CAT_OF_USE[RESIDENTIAL] = 0
_CAT_OF_USE[COMMERCIAL] = 1
_CAT_OF_USE[INDUSTRIAL] = 2
_CAT_OF_USE[PARK] = 5
_CAT_OF_USE[ROAD_TERTIARY] = 3
_CAT_OF_USE[ROAD_PRIMARY] = 3
_CAT_OF_USE[WATER] = 4


def categorize(use_grid: np.ndarray) -> np.ndarray:
    return _CAT_OF_USE[np.asarray(use_grid, np.int64)]


def _window_sums(ind: np.ndarray, r: int) -> np.ndarray:
    """Clipped (2r+1)-square window sums of an indicator grid."""
    h, w = ind.shape
    sat = np.zeros((h + 1, w + 1), np.int64)
    np.cumsum(np.cumsum(ind, axis=0), axis=1, out=sat[1:, 1:])
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.clip(ys - r, 0, h)[:, None]
    y1 = np.clip(ys + r + 1, 0, h)[:, None]
    x0 = np.clip(xs - r, 0, w)[None, :]
    x1 = np.clip(xs + r + 1, 0, w)[None, :]
    return sat[y1, x1] - sat[y0, x1] - sat[y1, x0] + sat[y0, x0]


def _window_area(h: int, w: int, r: int) -> np.ndarray:
    ys = np.arange(h)
    xs = np.arange(w)
    ny = np.minimum(ys + r, h - 1) - np.maximum(ys - r, 0) + 1
    nx = np.minimum(xs + r, w - 1) - np.maximum(xs - r, 0) + 1
    return ny[:, None] * nx[None, :]


@dataclass
class ConfigurationMatrix:
    radius: int
    values: np.ndarray  # (6, 6) floats, NaN where undefined
    defined: np.ndarray  # (6,) bools, False when the row use is absent

    def row(self, name: str) -> np.ndarray:
        return self.values[CATEGORY_NAMES.index(name)]


def conditional_proportion(use_grid, u: int, v: int, r: int):
    """C_p for one (u, v) category pair; None when u is absent."""
    m = configuration_matrix(use_grid, r)
    if not m.defined[u]:
        return None
    return float(m.values[u, v])


def configuration_matrix(use_grid, r: int) -> ConfigurationMatrix:
    cat = categorize(use_grid)
    h, w = cat.shape
    area = _window_area(h, w, r)
    wsums = [_window_sums(cat == c, r) for c in range(N_CAT)]
    values = np.full((N_CAT, N_CAT), np.nan)
    defined = np.zeros(N_CAT, bool)
    for u in range(N_CAT):
        mask = cat == u
        if not mask.any():
            continue
        defined[u] = True
        denom = int(area[mask].sum())
        for v in range(N_CAT):
            values[u, v] = wsums[v][mask].sum() / denom
    return ConfigurationMatrix(radius=r, values=values, defined=defined)


def average_matrices(mats: list) -> ConfigurationMatrix:
    """Cell-wise mean over the matrices that define each row."""
    if not mats:
        raise ValueError("nothing to average")
    r = mats[0].radius
    stack = np.stack([m.values for m in mats])
    have = np.stack([np.repeat(m.defined[:, None], N_CAT, axis=1) for m in mats])
    out = np.full((N_CAT, N_CAT), np.nan)
    counts = have.sum(axis=0)
    ok = counts > 0
    safe = np.where(have, stack, 0.0)
    out[ok] = safe.sum(axis=0)[ok] / counts[ok]
    defined = counts[:, 0] > 0
    return ConfigurationMatrix(radius=r, values=out, defined=defined)


def composition(use_grid) -> dict:
    """Per-use cover shares over the whole map, empty included."""
    counts = np.bincount(np.asarray(use_grid, np.int64).ravel(), minlength=8)
    total = counts.sum()
    return {USE_NAMES[u]: counts[u] / total for u in range(8)}


def matrix_table(matrix: ConfigurationMatrix) -> str:
    """Text table, four decimals, '-' for undefined rows."""
    width = max(len(n) for n in CATEGORY_NAMES)
    head = " " * (width + 1) + " ".join(f"{n:>11}" for n in CATEGORY_NAMES)
    lines = [f"# configuration matrix r={matrix.radius}", head]
    for u, name in enumerate(CATEGORY_NAMES):
        if matrix.defined[u]:
            cells = " ".join(f"{matrix.values[u, v]:>11.4f}" for v in range(N_CAT))
        else:
            cells = " ".join(f"{'-':>11}" for _ in range(N_CAT))
        lines.append(f"{name:<{width}} {cells}")
    return "\n".join(lines) + "\n"


def matrix_image(matrix: ConfigurationMatrix, cell: int = 16) -> np.ndarray:
    """Grayscale block image: 0 -> black, 1 -> white, undefined mid-gray."""
    img = np.full((N_CAT, N_CAT), 127, np.uint8)
    ok = ~np.isnan(matrix.values)
    img[ok] = np.clip(np.round(matrix.values[ok] * 255), 0, 255).astype(np.uint8)
    return np.kron(img, np.ones((cell, cell), np.uint8))
