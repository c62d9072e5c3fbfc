"""Hot numeric loops behind the valuation, jitted.

Every caller goes through these same functions, so cached fields and
per-proposal values stay internally consistent cell for cell; the pure
numpy forms they replaced live on only in docstrings and tests.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LOG3 = float(np.log(np.float64(3.0)))

# Raw attribute rows.  Module globals so the jit compiler folds them into the
# kernels as constants instead of taking them as call arguments.
ROW_HILL = 0  # preference for ground a fixed offset above the mean elevation
ROW_FLATNESS = 1  # exp(-local elevation variance)
ROW_RELIEF = 2  # local elevation variance
ROW_FLOOD_SAFETY = 3  # squared height above the water level
ROW_WATER_PROX = 4  # 1 / (1 + water distance)^2
ROW_RES_DENSITY = 5
ROW_COM_DENSITY = 6
ROW_IND_DENSITY = 7
ROW_PARK_DIST = 8
ROW_PRIMARY_PROX = 9  # exp(-primary road distance)
ROW_CROWDING = 10  # 1 / largest adjacent commercial parcel size
ROW_COM_DIST = 11
ROW_NEGLECT = 12  # sum of reciprocal cached values, favors worthless land
N_RAW = 13
ROW_MARKET = 13  # second-stage attribute, lives only in the normalized stack


@njit(cache=True, inline="always")
def _norm_cell(x, m):
    # mean 0: anything positive is "twice the mean", zero is neutral
    if m == 0.0:
        return 1.0 if x == 0.0 else 2.0
    if x == 0.0:
        return 0.0
    if x <= m:
        return 2.0 ** (1.0 - m / x)
    return 2.0 - 2.0 ** (1.0 - x / m)


@njit(cache=True)
def norm_block(block, means):
    rows, k = block.shape
    out = np.empty((rows, k))
    for r in range(rows):
        m = means[r]
        for j in range(k):
            out[r, j] = _norm_cell(block[r, j], m)
    return out


@njit(cache=True)
def norm_row(row, mean):
    out = np.empty(row.size)
    for j in range(row.size):
        out[j] = _norm_cell(row[j], mean)
    return out


@njit(cache=True)
def core_field(nb, w, use, printed):
    """compat(use) * (W . columns of nb); weight order fixed by row index."""
    k = nb.shape[1]
    out = np.empty(k)
    for j in range(k):
        wa = 0.0
        for r in range(w.size):
            if w[r] != 0.0:
                wa += w[r] * nb[r, j]
        if use == 1:
            compat = 0.8 + 0.2 * 10.0 ** (-nb[ROW_IND_DENSITY, j])
        elif use == 2:
            if printed:
                compat = 0.8 + 0.2 * 10.0 ** (-nb[ROW_PARK_DIST, j])
            else:
                compat = 1.0
        elif use == 3:
            compat = 0.4 + 0.2 * 10.0 ** (-nb[ROW_RES_DENSITY, j])
            if printed:
                compat = compat + 0.4 * 10.0 ** (-nb[ROW_PARK_DIST, j])
            else:
                compat = compat + 0.4
        else:
            compat = 0.7 * 10.0 ** (-nb[ROW_IND_DENSITY, j]) + 0.3 * 10.0 ** (-nb[ROW_COM_DENSITY, j])
        out[j] = compat * wa
    return out


@njit(cache=True)
def refresh_norm_cols(raw, norm, market_raw, idx, means):
    """Renormalize the raw rows of the given columns, then the market raw.

    Writes in place; must stay cell-identical to norm_block plus the
    market-row expression so partial and full refreshes agree exactly.
    """
    n_raw = raw.shape[0]
    for t in range(idx.size):
        j = idx[t]
        for r in range(n_raw):
            norm[r, j] = _norm_cell(raw[r, j], means[r])
        market_raw[j] = (0.5 * (1.0 + norm[ROW_PRIMARY_PROX, j])
                         * norm[ROW_CROWDING, j] * norm[ROW_COM_DENSITY, j])


@njit(cache=True)
def refresh_fields_cols(norm, market_raw, F1, F2, F3, F4, idx,
                        market_mean, W, printed):
    """Market-row normalization plus all four per-use value cores, one pass."""
    for t in range(idx.size):
        j = idx[t]
        norm[ROW_MARKET, j] = _norm_cell(market_raw[j], market_mean)
        for ui in range(4):
            use = ui + 1
            wa = 0.0
            for r in range(W.shape[1]):
                if W[ui, r] != 0.0:
                    wa += W[ui, r] * norm[r, j]
            if use == 1:
                compat = 0.8 + 0.2 * 10.0 ** (-norm[ROW_IND_DENSITY, j])
            elif use == 2:
                if printed:
                    compat = 0.8 + 0.2 * 10.0 ** (-norm[ROW_PARK_DIST, j])
                else:
                    compat = 1.0
            elif use == 3:
                compat = 0.4 + 0.2 * 10.0 ** (-norm[ROW_RES_DENSITY, j])
                if printed:
                    compat = compat + 0.4 * 10.0 ** (-norm[ROW_PARK_DIST, j])
                else:
                    compat = compat + 0.4
            else:
                compat = 0.7 * 10.0 ** (-norm[ROW_IND_DENSITY, j]) + 0.3 * 10.0 ** (-norm[ROW_COM_DENSITY, j])
            v = compat * wa
            if use == 1:
                F1[j] = v
            elif use == 2:
                F2[j] = v
            elif use == 3:
                F3[j] = v
            else:
                F4[j] = v


@njit(cache=True)
def whole_value_field(F_u, honey_u, parcel_density, parcel_dii, mnid,
                      dmin, g, is_park, out):
    """As-is patch value for one use over the full map."""
    for i in range(out.size):
        if is_park:
            sig = 1.0
        else:
            if parcel_dii[i] > 0.0:
                dens = parcel_density[i]
                dii = parcel_dii[i]
            else:
                dens = dmin
                dii = dmin
            fl = mnid[i]
            if dii < fl:
                fl = dii
            sig = smooth_cell(dens, fl)
        out[i] = g * sig * F_u[i] + honey_u[i]


@njit(cache=True)
def dev_value(block, means, market_mean, w, use, printed, g, sig, honey):
    """Mean proposal value over the block's columns, whole pipeline fused."""
    n_rows = w.size
    k = block.shape[1]
    nb = np.empty(n_rows)
    total = 0.0
    for j in range(k):
        for r in range(n_rows - 1):
            nb[r] = _norm_cell(block[r, j], means[r])
        mr = 0.5 * (1.0 + nb[ROW_PRIMARY_PROX]) * nb[ROW_CROWDING] * nb[ROW_COM_DENSITY]
        nb[ROW_MARKET] = _norm_cell(mr, market_mean)
        wa = 0.0
        for r in range(n_rows):
            if w[r] != 0.0:
                wa += w[r] * nb[r]
        if use == 1:
            compat = 0.8 + 0.2 * 10.0 ** (-nb[ROW_IND_DENSITY])
        elif use == 2:
            if printed:
                compat = 0.8 + 0.2 * 10.0 ** (-nb[ROW_PARK_DIST])
            else:
                compat = 1.0
        elif use == 3:
            compat = 0.4 + 0.2 * 10.0 ** (-nb[ROW_RES_DENSITY])
            if printed:
                compat = compat + 0.4 * 10.0 ** (-nb[ROW_PARK_DIST])
            else:
                compat = compat + 0.4
        else:
            compat = 0.7 * 10.0 ** (-nb[ROW_IND_DENSITY]) + 0.3 * 10.0 ** (-nb[ROW_COM_DENSITY])
        total += g * sig[j] * compat * wa + honey[j]
    return total / k


@njit(cache=True)
def bump_into(ex, ey, sx, sy, pop_delta, size_delta, adjP, adjS, adjC):
    """Accumulate a source set's population/size/count deltas per eval patch."""
    sgn = 0.0
    if size_delta > 0.0:
        sgn = 1.0
    elif size_delta < 0.0:
        sgn = -1.0
    for i in range(ex.size):
        c = 0
        for j in range(sx.size):
            dx = ex[i] - sx[j]
            dy = ey[i] - sy[j]
            if dx * dx + dy * dy <= 25:
                c += 1
        if c > 0:
            adjP[i] += pop_delta
            adjS[i] += size_delta
        adjC[i] += sgn * c


@njit(cache=True)
def site_value_1(F_u, honey_u, mnid, i, dmin, g, is_park):
    """site_values_at for one patch, skipping the array round trip."""
    if is_park:
        sig = 1.0
    else:
        fl = mnid[i]
        if dmin < fl:
            fl = dmin
        sig = smooth_cell(dmin, fl)
    return g * sig * F_u[i] + honey_u[i]


@njit(cache=True)
def site_values_at(F_u, honey_u, mnid, idx, dmin, g, is_park):
    out = np.empty(idx.size)
    for t in range(idx.size):
        i = idx[t]
        if is_park:
            sig = 1.0
        else:
            fl = mnid[i]
            if dmin < fl:
                fl = dmin
            sig = smooth_cell(dmin, fl)
        out[t] = g * sig * F_u[i] + honey_u[i]
    return out


@njit(cache=True)
def row_means_at(block, idx):
    """Per-row means over a column subset, no gather copy."""
    rows = block.shape[0]
    out = np.empty(rows)
    for r in range(rows):
        acc = 0.0
        for t in range(idx.size):
            acc += block[r, idx[t]]
        out[r] = acc / idx.size
    return out


@njit(cache=True)
def grow_parcel(uflat, resv, taken, width, height, seed, ux, uy, reach, target):
    """Strip march away from the road, then alternate-side widening.

    taken is a zeroed scratch the size of the map; marks are cleared
    before returning so the buffer can be reused between proposals.
    """
    strip = np.empty(target if target > 0 else 1, np.int64)
    count = 0
    strip[count] = seed
    count += 1
    taken[seed] = 1
    x = seed % width
    y = seed // width
    limit = target if target < reach else reach
    while count < limit:
        x += ux
        y += uy
        if x < 0 or x >= width or y < 0 or y >= height:
            break
        j = y * width + x
        if uflat[j] != 0 or resv[j] or taken[j]:
            break
        strip[count] = j
        count += 1
        taken[j] = 1
    base_count = count
    px = uy
    py = -ux
    max_layer = target // (base_count if base_count > 0 else 1) + 1
    flank = 0
    stuck = 0
    while count < target and stuck < 2:
        if flank == 0:
            dx = px
            dy = py
        else:
            dx = -px
            dy = -py
        added = False
        for layer in range(1, max_layer + 1):
            for b in range(base_count):
                j = strip[b]
                bx = j % width + dx * layer
                by = j // width + dy * layer
                if bx < 0 or bx >= width or by < 0 or by >= height:
                    continue
                k = by * width + bx
                if taken[k]:
                    continue
                if layer > 1:
                    support = (by - dy) * width + (bx - dx)
                    if not taken[support]:
                        continue
                if uflat[k] == 0 and not resv[k]:
                    strip[count] = k
                    count += 1
                    taken[k] = 1
                    added = True
                    break
            if added:
                break
        if added:
            stuck = 0
        else:
            stuck += 1
        flank = 1 - flank
    for t in range(count):
        taken[strip[t]] = 0
    return strip[:count]


@njit(cache=True)
def pair_counts(ex, ey, sx, sy):
    """Per eval patch: how many src patches lie within distance 5."""
    out = np.zeros(ex.size, np.int64)
    for i in range(ex.size):
        c = 0
        for j in range(sx.size):
            dx = ex[i] - sx[j]
            dy = ey[i] - sy[j]
            if dx * dx + dy * dy <= 25:
                c += 1
        out[i] = c
    return out


@njit(cache=True)
def smooth_cell(dens, floor):
    arg = 4.2 - dens / floor
    if arg <= 0.0:
        return 0.0
    s = np.log(arg) / LOG3
    if s < 0.0:
        return 0.0
    if s > 1.0:
        return 1.0
    return s


@njit(cache=True)
def _pairwise_leaf(a, lo, n):
    # n <= 128 assumed
    if n < 8:
        res = 0.0
        for i in range(n):
            res += a[lo + i]
        return res
    r0 = a[lo]
    r1 = a[lo + 1]
    r2 = a[lo + 2]
    r3 = a[lo + 3]
    r4 = a[lo + 4]
    r5 = a[lo + 5]
    r6 = a[lo + 6]
    r7 = a[lo + 7]
    i = 8
    lim = n - (n % 8)
    while i < lim:
        r0 += a[lo + i]
        r1 += a[lo + i + 1]
        r2 += a[lo + i + 2]
        r3 += a[lo + i + 3]
        r4 += a[lo + i + 4]
        r5 += a[lo + i + 5]
        r6 += a[lo + i + 6]
        r7 += a[lo + i + 7]
        i += 8
    res = ((r0 + r1) + (r2 + r3)) + ((r4 + r5) + (r6 + r7))
    while i < n:
        res += a[lo + i]
        i += 1
    return res


@njit(cache=True)
def pairwise_sum(a, lo, n):
    """Blocked pairwise summation; must stay reduction-order identical to
    numpy's add.reduce so kernel means agree bitwise with np.mean.  The
    halving recursion is unrolled onto an explicit stack (jitted recursion
    crashes when entered from another jitted caller)."""
    if n <= 128:
        return _pairwise_leaf(a, lo, n)
    s_lo = np.empty(80, np.int64)
    s_n = np.empty(80, np.int64)
    s_stage = np.empty(80, np.int8)
    s_left = np.empty(80)
    top = 0
    s_lo[0] = lo
    s_n[0] = n
    s_stage[0] = 0
    ret = 0.0
    while top >= 0:
        stage = s_stage[top]
        cl = s_lo[top]
        cn = s_n[top]
        if stage == 0:
            if cn <= 128:
                ret = _pairwise_leaf(a, cl, cn)
                top -= 1
            else:
                s_stage[top] = 1
                n2 = (cn // 2) - ((cn // 2) % 8)
                top += 1
                s_lo[top] = cl
                s_n[top] = n2
                s_stage[top] = 0
        elif stage == 1:
            s_left[top] = ret
            s_stage[top] = 2
            n2 = (cn // 2) - ((cn // 2) % 8)
            top += 1
            s_lo[top] = cl + n2
            s_n[top] = cn - n2
            s_stage[top] = 0
        else:
            ret = s_left[top] + ret
            top -= 1
    return ret


@njit(cache=True)
def parcel_value_at(F_u, honey_u, mnid, idx, dens, dii, g, is_park):
    """Mean as-is value over a parcel's patches for one use."""
    k = idx.size
    sf = np.empty(k)
    h = np.empty(k)
    for t in range(k):
        i = idx[t]
        if is_park:
            s = 1.0
        else:
            fl = mnid[i]
            if dii < fl:
                fl = dii
            s = smooth_cell(dens, fl)
        sf[t] = s * F_u[i]
        h[t] = honey_u[i]
    return g * (pairwise_sum(sf, 0, k) / k) + pairwise_sum(h, 0, k) / k


@njit(cache=True)
def proposal_value(raw, width, n5, P_all, S_all, C_all,
                   patches, use, population, init_density, include_self,
                   rem_use, rem_pop, rem_start, rem_src,
                   crowd, has_crowd,
                   mnid, honey_u, means, market_mean, w, printed, g, is_park):
    """development_value in one call: gather, density bumps, value mean.

    The proposal counts its own population in the density rows (and removals
    subtract theirs) but distance rows stay as-built.  Density-row rebuilds
    must keep the exact (n5 + (S+dS)) - (C+dC) operand order of the numpy
    path so partial evaluation stays bit-stable.
    """
    k = patches.size
    nrows = raw.shape[0]
    block = np.empty((nrows, k))
    ey = np.empty(k, np.int64)
    ex = np.empty(k, np.int64)
    for j in range(k):
        p = patches[j]
        for r in range(nrows):
            block[r, j] = raw[r, p]
        ey[j] = p // width
        ex[j] = p % width
    adjP = np.zeros((3, k))
    adjS = np.zeros((3, k))
    adjC = np.zeros((3, k))
    used = np.zeros(3, np.uint8)
    for t in range(rem_use.size):
        u0 = rem_use[t]
        if 1 <= u0 <= 3:
            ui = u0 - 1
            used[ui] = 1
            s0 = rem_start[t]
            s1 = rem_start[t + 1]
            cnt = s1 - s0
            sy = np.empty(cnt, np.int64)
            sx = np.empty(cnt, np.int64)
            for q in range(cnt):
                sy[q] = rem_src[s0 + q] // width
                sx[q] = rem_src[s0 + q] % width
            bump_into(ex, ey, sx, sy, -rem_pop[t], -float(cnt),
                      adjP[ui], adjS[ui], adjC[ui])
    if include_self and 1 <= use <= 3:
        ui = use - 1
        used[ui] = 1
        bump_into(ex, ey, ex, ey, population, float(k),
                  adjP[ui], adjS[ui], adjC[ui])
    for ui in range(3):
        if used[ui] == 0:
            continue
        if ui == 0:
            row = ROW_RES_DENSITY
        elif ui == 1:
            row = ROW_COM_DENSITY
        else:
            row = ROW_IND_DENSITY
        for j in range(k):
            p = patches[j]
            denom = n5[p] + (S_all[ui, p] + adjS[ui, j]) - (C_all[ui, p] + adjC[ui, j])
            block[row, j] = (P_all[ui, p] + adjP[ui, j]) / denom
    if has_crowd:
        for j in range(k):
            block[ROW_CROWDING, j] = crowd
    sig = np.empty(k)
    if is_park:
        for j in range(k):
            sig[j] = 1.0
    else:
        dens = population / k
        for j in range(k):
            fl = mnid[patches[j]]
            if init_density < fl:
                fl = init_density
            sig[j] = smooth_cell(dens, fl)
    h = np.empty(k)
    for j in range(k):
        h[j] = honey_u[patches[j]]
    return dev_value(block, means, market_mean, w, use, printed, g, sig, h)


SQRT2 = float(np.sqrt(np.float64(2.0)))
DY8 = np.array([-1, -1, -1, 0, 0, 1, 1, 1], np.int64)
DX8 = np.array([-1, 0, 1, -1, 1, -1, 0, 1], np.int64)


@njit(cache=True)
def network_path_k(use, width, height, start, goal, targets, has_targets,
                   max_cost, bx, by, br2, has_ball):
    """Dijkstra over the 8-connected road graph (use codes 5 and 6).

    Ties pop lowest node id first, matching a (cost, node) tuple heap, so
    the returned patch is stable when several targets sit at equal cost.
    """
    n = use.size
    best = np.full(n, np.inf)
    best[start] = 0.0
    cap = 1024
    hc = np.empty(cap)
    hn = np.empty(cap, np.int64)
    hc[0] = 0.0
    hn[0] = start
    m = 1
    while m > 0:
        c = hc[0]
        i = hn[0]
        m -= 1
        hc[0] = hc[m]
        hn[0] = hn[m]
        k = 0
        while True:
            l = 2 * k + 1
            if l >= m:
                break
            s = l
            r = l + 1
            if r < m and (hc[r] < hc[l] or (hc[r] == hc[l] and hn[r] < hn[l])):
                s = r
            if hc[s] < hc[k] or (hc[s] == hc[k] and hn[s] < hn[k]):
                hc[k], hc[s] = hc[s], hc[k]
                hn[k], hn[s] = hn[s], hn[k]
                k = s
            else:
                break
        if c > best[i]:
            continue
        if i == goal:
            return c, i
        if has_targets and targets[i]:
            return c, i
        if c >= max_cost:
            continue
        x = i % width
        y = i // width
        for d in range(8):
            qx = x + DX8[d]
            qy = y + DY8[d]
            if qx < 0 or qx >= width or qy < 0 or qy >= height:
                continue
            j = qy * width + qx
            u = use[j]
            if u != 5 and u != 6:
                continue
            if has_ball:
                ex = qx - bx
                ey = qy - by
                if ex * ex + ey * ey > br2:
                    continue
            nc = c + (SQRT2 if (DX8[d] != 0 and DY8[d] != 0) else 1.0)
            if nc < best[j]:
                best[j] = nc
                if m >= cap:
                    cap *= 2
                    nhc = np.empty(cap)
                    nhc[:m] = hc[:m]
                    nhn = np.empty(cap, np.int64)
                    nhn[:m] = hn[:m]
                    hc = nhc
                    hn = nhn
                hc[m] = nc
                hn[m] = j
                k = m
                m += 1
                while k > 0:
                    pa = (k - 1) >> 1
                    if hc[k] < hc[pa] or (hc[k] == hc[pa] and hn[k] < hn[pa]):
                        hc[k], hc[pa] = hc[pa], hc[k]
                        hn[k], hn[pa] = hn[pa], hn[k]
                        k = pa
                    else:
                        break
    return np.inf, np.int64(-1)


@njit(cache=True)
def first_common(a, b):
    """Smallest element common to two ascending unique arrays, or -1."""
    i = 0
    j = 0
    while i < a.size and j < b.size:
        if a[i] < b[j]:
            i += 1
        elif a[i] > b[j]:
            j += 1
        else:
            return a[i]
    return np.int64(-1)


@njit(cache=True)
def adjacent4_k(idx, width, height):
    """Sorted unique in-bounds 4-neighbors of the index set."""
    buf = np.empty(idx.size * 4, np.int64)
    m = 0
    for t in range(idx.size):
        y = idx[t] // width
        x = idx[t] - y * width
        if x > 0:
            buf[m] = idx[t] - 1
            m += 1
        if x + 1 < width:
            buf[m] = idx[t] + 1
            m += 1
        if y > 0:
            buf[m] = idx[t] - width
            m += 1
        if y + 1 < height:
            buf[m] = idx[t] + width
            m += 1
    part = np.sort(buf[:m])
    out = np.empty(m, np.int64)
    k = 0
    prev = np.int64(-1)
    for t in range(m):
        if part[t] != prev:
            out[k] = part[t]
            prev = part[t]
            k += 1
    return out[:k]


@njit(cache=True)
def proposal_crowd(pg, width, height, patches, exclude, puse, psize):
    """Size of the biggest commercial parcel bordering but not inside the
    proposal footprint.  pg ownership makes the overlap test cheap: a parcel
    overlaps the proposal iff some proposal patch already carries its id.
    Removed parcels have their puse entry zeroed, so stale ids fail the
    use check without a dict lookup."""
    biggest = 0
    for t in range(patches.size):
        p = patches[t]
        y = p // width
        x = p - y * width
        for d in range(4):
            if d == 0:
                if x == 0:
                    continue
                q = p - 1
            elif d == 1:
                if x + 1 >= width:
                    continue
                q = p + 1
            elif d == 2:
                if y == 0:
                    continue
                q = p - width
            else:
                if y + 1 >= height:
                    continue
                q = p + width
            pid = pg[q]
            if pid <= 0 or pid == exclude or puse[pid] != 2:
                continue
            if psize[pid] <= biggest:
                continue
            overlap = False
            for s in range(patches.size):
                if pg[patches[s]] == pid:
                    overlap = True
                    break
            if not overlap:
                biggest = psize[pid]
    return biggest


@njit(cache=True)
def merge_partner_k(pg, width, height, patches, self_use, room, puse, psize):
    """Lowest-id neighboring parcel of the given use whose size fits in room."""
    best = np.int64(-1)
    for t in range(patches.size):
        p = patches[t]
        y = p // width
        x = p - y * width
        for d in range(4):
            if d == 0:
                if x == 0:
                    continue
                q = p - 1
            elif d == 1:
                if x + 1 >= width:
                    continue
                q = p + 1
            elif d == 2:
                if y == 0:
                    continue
                q = p - width
            else:
                if y + 1 >= height:
                    continue
                q = p + width
            pid = pg[q]
            if pid <= 0 or puse[pid] != self_use or psize[pid] > room:
                continue
            if best < 0 or pid < best:
                best = pid
    return best


@njit(cache=True)
def smooth_scalar_vec(dens, floor):
    out = np.empty(floor.size)
    for i in range(floor.size):
        out[i] = smooth_cell(dens, floor[i])
    return out


@njit(cache=True)
def smooth_vec(dens, floor):
    out = np.empty(dens.size)
    for i in range(dens.size):
        arg = 4.2 - dens[i] / floor[i]
        if arg <= 0.0:
            out[i] = 0.0
        else:
            s = np.log(arg) / LOG3
            if s < 0.0:
                s = 0.0
            elif s > 1.0:
                s = 1.0
            out[i] = s
    return out
