"""Chamfer (1, sqrt 2) distance transforms over the patch lattice.

Distances are tracked as an integer step pair (orthogonal, diagonal) and the
float value of a cell is always derived as ``orth + diag * SQRT2`` in a single
rounding step.  Two cells with the same path cost therefore compare
bit-identically no matter how the cost was discovered, which is what lets the
incremental field maintenance match a from-scratch recompute exactly.
"""

from __future__ import annotations

import numpy as np
from numba import njit

SQRT2 = float(np.sqrt(np.float64(2.0)))


@njit(cache=True)
def _relax_forward(orth, diag, h, w):
    for y in range(h):
        for x in range(w):
            bo = orth[y, x]
            bd = diag[y, x]
            if bo < 0:
                best = 1e300
            else:
                best = bo + bd * SQRT2
            if x > 0:
                o = orth[y, x - 1]
                if o >= 0:
                    d = diag[y, x - 1]
                    c = (o + 1) + d * SQRT2
                    if c < best:
                        best = c
                        bo = o + 1
                        bd = d
            if y > 0:
                o = orth[y - 1, x]
                if o >= 0:
                    d = diag[y - 1, x]
                    c = (o + 1) + d * SQRT2
                    if c < best:
                        best = c
                        bo = o + 1
                        bd = d
                if x > 0:
                    o = orth[y - 1, x - 1]
                    if o >= 0:
                        d = diag[y - 1, x - 1] + 1
                        c = o + d * SQRT2
                        if c < best:
                            best = c
                            bo = o
                            bd = d
                if x < w - 1:
                    o = orth[y - 1, x + 1]
                    if o >= 0:
                        d = diag[y - 1, x + 1] + 1
                        c = o + d * SQRT2
                        if c < best:
                            best = c
                            bo = o
                            bd = d
            orth[y, x] = bo
            diag[y, x] = bd


@njit(cache=True)
def _relax_backward(orth, diag, h, w):
    for y in range(h - 1, -1, -1):
        for x in range(w - 1, -1, -1):
            bo = orth[y, x]
            bd = diag[y, x]
            if bo < 0:
                best = 1e300
            else:
                best = bo + bd * SQRT2
            if x < w - 1:
                o = orth[y, x + 1]
                if o >= 0:
                    d = diag[y, x + 1]
                    c = (o + 1) + d * SQRT2
                    if c < best:
                        best = c
                        bo = o + 1
                        bd = d
            if y < h - 1:
                o = orth[y + 1, x]
                if o >= 0:
                    d = diag[y + 1, x]
                    c = (o + 1) + d * SQRT2
                    if c < best:
                        best = c
                        bo = o + 1
                        bd = d
                if x < w - 1:
                    o = orth[y + 1, x + 1]
                    if o >= 0:
                        d = diag[y + 1, x + 1] + 1
                        c = o + d * SQRT2
                        if c < best:
                            best = c
                            bo = o
                            bd = d
                if x > 0:
                    o = orth[y + 1, x - 1]
                    if o >= 0:
                        d = diag[y + 1, x - 1] + 1
                        c = o + d * SQRT2
                        if c < best:
                            best = c
                            bo = o
                            bd = d
            orth[y, x] = bo
            diag[y, x] = bd


@njit(cache=True)
def _relax_forward_masked(orth, diag, passable, h, w):
    changed = False
    for y in range(h):
        for x in range(w):
            if not passable[y, x]:
                continue
            bo = orth[y, x]
            bd = diag[y, x]
            if bo < 0:
                best = 1e300
            else:
                best = bo + bd * SQRT2
            if x > 0 and passable[y, x - 1]:
                o = orth[y, x - 1]
                if o >= 0:
                    d = diag[y, x - 1]
                    c = (o + 1) + d * SQRT2
                    if c < best:
                        best = c
                        bo = o + 1
                        bd = d
                        changed = True
            if y > 0:
                if passable[y - 1, x]:
                    o = orth[y - 1, x]
                    if o >= 0:
                        d = diag[y - 1, x]
                        c = (o + 1) + d * SQRT2
                        if c < best:
                            best = c
                            bo = o + 1
                            bd = d
                            changed = True
                if x > 0 and passable[y - 1, x - 1]:
                    o = orth[y - 1, x - 1]
                    if o >= 0:
                        d = diag[y - 1, x - 1] + 1
                        c = o + d * SQRT2
                        if c < best:
                            best = c
                            bo = o
                            bd = d
                            changed = True
                if x < w - 1 and passable[y - 1, x + 1]:
                    o = orth[y - 1, x + 1]
                    if o >= 0:
                        d = diag[y - 1, x + 1] + 1
                        c = o + d * SQRT2
                        if c < best:
                            best = c
                            bo = o
                            bd = d
                            changed = True
            orth[y, x] = bo
            diag[y, x] = bd
    return changed


@njit(cache=True)
def _relax_backward_masked(orth, diag, passable, h, w):
    changed = False
    for y in range(h - 1, -1, -1):
        for x in range(w - 1, -1, -1):
            if not passable[y, x]:
                continue
            bo = orth[y, x]
            bd = diag[y, x]
            if bo < 0:
                best = 1e300
            else:
                best = bo + bd * SQRT2
            if x < w - 1 and passable[y, x + 1]:
                o = orth[y, x + 1]
                if o >= 0:
                    d = diag[y, x + 1]
                    c = (o + 1) + d * SQRT2
                    if c < best:
                        best = c
                        bo = o + 1
                        bd = d
                        changed = True
            if y < h - 1:
                if passable[y + 1, x]:
                    o = orth[y + 1, x]
                    if o >= 0:
                        d = diag[y + 1, x]
                        c = (o + 1) + d * SQRT2
                        if c < best:
                            best = c
                            bo = o + 1
                            bd = d
                            changed = True
                if x < w - 1 and passable[y + 1, x + 1]:
                    o = orth[y + 1, x + 1]
                    if o >= 0:
                        d = diag[y + 1, x + 1] + 1
                        c = o + d * SQRT2
                        if c < best:
                            best = c
                            bo = o
                            bd = d
                            changed = True
                if x > 0 and passable[y + 1, x - 1]:
                    o = orth[y + 1, x - 1]
                    if o >= 0:
                        d = diag[y + 1, x - 1] + 1
                        c = o + d * SQRT2
                        if c < best:
                            best = c
                            bo = o
                            bd = d
                            changed = True
            orth[y, x] = bo
            diag[y, x] = bd
    return changed


def chamfer_steps(sources: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Multi-source expansion from a boolean source mask.

    Returns (orth, diag) int32 step counts; orth == -1 marks unreachable
    cells (no source anywhere).
    """
    h, w = sources.shape
    orth = np.where(sources, 0, -1).astype(np.int32)
    diag = np.zeros((h, w), np.int32)
    _relax_forward(orth, diag, h, w)
    _relax_backward(orth, diag, h, w)
    return orth, diag


def steps_to_field(orth: np.ndarray, diag: np.ndarray, sentinel: float) -> np.ndarray:
    return np.where(orth < 0, sentinel, orth + diag * SQRT2)


def geodesic_steps(sources: np.ndarray, passable: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Chamfer distance constrained to passable cells (network distance).

    Raster passes are iterated to a fixpoint, which handles winding paths.
    """
    h, w = sources.shape
    orth = np.where(sources & passable, 0, -1).astype(np.int32)
    diag = np.zeros((h, w), np.int32)
    for _ in range(h + w):
        a = _relax_forward_masked(orth, diag, passable, h, w)
        b = _relax_backward_masked(orth, diag, passable, h, w)
        if not (a or b):
            break
    return orth, diag
