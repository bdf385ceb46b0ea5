"""Compiled per-flow kernels behind the feature modules.

Each family kernel returns its features as a float64 array in field
order; the modules wrap them in dataclasses. Flows are small (tens of
packets), so plain loops beat chains of numpy calls by a wide margin.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NAN = np.nan
N_STAT, N_TIME, N_DIST, N_FREQ, N_BEH = 26, 9, 7, 20, 7
N_ALL = N_STAT + N_TIME + N_DIST + N_FREQ + N_BEH
# Phasors are recomputed exactly every this many grid frequencies.
ANCHOR_EVERY = 64
MODE_BINS = 64

_jit = njit(cache=True, nogil=True)


@_jit
def _div(a, b):
    return a / b if b != 0 else NAN


@_jit
def quantile_sorted(xs, p):
    pos = (len(xs) - 1) * p
    lo = int(math.floor(pos))
    frac = pos - lo
    a = float(xs[lo])
    if frac == 0.0:
        return a
    return a + (float(xs[lo + 1]) - a) * frac


@_jit
def _fsum(x):
    # Neumaier compensated sum.
    s = 0.0
    c = 0.0
    for v in x:
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


@_jit
def _mean_std(x):
    n = len(x)
    s = 0.0
    for v in x:
        s += v
    mu = s / n
    acc = 0.0
    for v in x:
        d = v - mu
        acc += d * d
    return mu, math.sqrt(acc / n)


# -- statistical --------------------------------------------------------------


@_jit
def stat_kernel(values):
    xs = np.sort(values)
    n = len(xs)
    out = np.empty(N_STAT)
    total = 0
    for v in xs:
        total += v
    mean = total / n
    lo = float(xs[0])
    hi = float(xs[-1])
    fn = float(n)

    s2 = s3 = s4 = sabs = sq = 0.0
    above = below = 0
    for v in xs:
        # n*x - sum is exact in integers: no rounding of the mean before centring.
        d = float(v * n - total)
        d2 = d * d
        s2 += d2
        s3 += d2 * d
        s4 += d2 * d2
        sabs += abs(d)
        x = float(v)
        sq += x * x
        if x > mean:
            above += 1
        elif x < mean:
            below += 1
    constant = lo == hi
    if constant:
        m2 = m3 = m4 = 0.0
    else:
        m2 = s2 / (fn * fn * fn)
        m3 = s3 / (fn * fn * fn * fn)
        m4 = s4 / (fn * fn * fn * fn * fn)
    sd = math.sqrt(m2)
    median = quantile_sorted(xs, 0.5)
    q1 = quantile_sorted(xs, 0.25)
    q3 = quantile_sorted(xs, 0.75)

    # Runs of equal values in sorted data give mode and entropy.
    mode = lo
    best = 0
    distinct = 0
    plogp = 0.0
    i = 0
    while i < n:
        j = i
        while j < n and xs[j] == xs[i]:
            j += 1
        c = j - i
        distinct += 1
        if c > best:
            best = c
            mode = float(xs[i])
        p = c / fn
        plogp -= p * math.log2(p)
        i = j
    entropy = plogp + 0.0 if distinct > 1 else 0.0
    scaled = entropy / math.log2(distinct) if distinct > 1 else NAN
    avg_disp = sabs / (fn * fn)

    if constant:
        g1 = kurt = NAN
    else:
        g1 = m3 / m2**1.5
        kurt = m4 / (m2 * m2) - 3.0
    g1_adj = g1 * math.sqrt(fn * (fn - 1)) / (fn - 2) if n > 2 else NAN

    out[0] = mean
    out[1] = median
    out[2] = sd
    out[3] = m2
    out[4] = _div(sd - mean, sd + mean)
    out[5] = q1
    out[6] = q3
    out[7] = lo
    out[8] = hi
    out[9] = lo - hi
    out[10] = mode
    out[11] = _div(avg_disp, mean) * 100.0
    out[12] = avg_disp
    out[13] = math.sqrt(sq / fn)
    out[14] = 100.0 * above / fn
    out[15] = 100.0 * below / fn
    out[16] = _div(sd, mean)
    out[17] = g1_adj
    out[18] = g1
    out[19] = m3
    out[20] = _div(mean - mode, sd)
    out[21] = _div(3.0 * (mean - median), sd)
    out[22] = _div(q1 + q3 - 2.0 * median, q3 - q1)
    out[23] = kurt
    out[24] = entropy
    out[25] = scaled
    return out


# -- time and distribution ----------------------------------------------------


@_jit
def time_kernel(rel_times, time_diffs):
    out = np.empty(N_TIME)
    n = len(rel_times)
    s = 0.0
    for v in rel_times:
        s += v
    out[0] = s / n
    out[1] = quantile_sorted(rel_times, 0.5)
    out[2] = quantile_sorted(rel_times, 0.25)
    out[3] = quantile_sorted(rel_times, 0.75)
    m = len(time_diffs)
    if m:
        dts = np.sort(time_diffs)
        s = 0.0
        for v in time_diffs:
            s += v
        out[4] = s / m
        out[5] = quantile_sorted(dts, 0.5)
        out[6] = dts[0]
        out[7] = dts[-1]
    else:
        out[4] = out[5] = out[6] = out[7] = NAN
    out[8] = rel_times[-1]
    return out


@_jit
def hurst(x, min_window):
    n = len(x)
    if n < 16:
        return NAN
    lx = np.empty(32)
    ly = np.empty(32)
    pts = 0
    w = min_window
    while w <= n // 2:
        acc = 0.0
        used = 0
        for k in range(n // w):
            base = k * w
            mu = 0.0
            for i in range(base, base + w):
                mu += x[i]
            mu /= w
            run = 0.0
            rmin = math.inf
            rmax = -math.inf
            var = 0.0
            for i in range(base, base + w):
                d = x[i] - mu
                run += d
                var += d * d
                if run < rmin:
                    rmin = run
                if run > rmax:
                    rmax = run
            s = math.sqrt(var / w)
            if s > 0:
                acc += (rmax - rmin) / s
                used += 1
        if used and acc > 0:
            lx[pts] = math.log2(w)
            ly[pts] = math.log2(acc / used)
            pts += 1
        w *= 2
    if pts < 2:
        return NAN
    mx = my = 0.0
    for i in range(pts):
        mx += lx[i]
        my += ly[i]
    mx /= pts
    my /= pts
    num = den = 0.0
    for i in range(pts):
        num += (lx[i] - mx) * (ly[i] - my)
        den += (lx[i] - mx) ** 2
    return num / den


@_jit
def benford(values):
    # A lone observation has no distribution to compare.
    n = len(values)
    if n < 2:
        return NAN
    xs = np.sort(values)
    counts = np.empty(n, dtype=np.int64)
    k = 0
    i = 0
    while i < n:
        j = i
        while j < n and xs[j] == xs[i]:
            j += 1
        counts[k] = j - i
        k += 1
        i = j
    top = np.sort(counts[:k])[::-1][:9]
    hist = np.zeros(9)
    for c in top:
        while c >= 10:
            c //= 10
        hist[c - 1] += 1
    score = 0.0
    for d in range(9):
        score += abs(hist[d] / len(top) - math.log10(1.0 + 1.0 / (d + 1)))
    return 1.0 - 0.5 * score


@_jit
def _max_rel_diff(xs):
    worst = 0.0
    for i in range(len(xs)):
        for j in range(i + 1, len(xs)):
            scale = max(abs(xs[i]), abs(xs[j]))
            if scale > 0:
                worst = max(worst, abs(xs[i] - xs[j]) / scale)
    return worst


@_jit
def stationarity(x, segments, max_mean_diff, max_var_diff, min_points):
    n = len(x)
    if n < max(min_points, segments):
        return NAN
    means = np.empty(segments)
    variances = np.empty(segments)
    size, extra = divmod(n, segments)
    start = 0
    for k in range(segments):
        stop = start + size + (1 if k < extra else 0)
        mu, sd = _mean_std(x[start:stop])
        means[k] = mu
        variances[k] = sd * sd
        start = stop
    ok = _max_rel_diff(means) <= max_mean_diff and _max_rel_diff(variances) <= max_var_diff
    return 1.0 if ok else 0.0


@_jit
def normal_similarity(x):
    n = len(x)
    lo = x.min()
    if lo == x.max():
        return NAN
    mu = 0.0
    for v in x:
        mu += v
    mu /= n
    s2 = s3 = s4 = 0.0
    for v in x:
        d = v - mu
        d2 = d * d
        s2 += d2
        s3 += d2 * d
        s4 += d2 * d2
    m2 = s2 / n
    if m2 == 0:
        return NAN
    g1 = (s3 / n) / m2**1.5
    kurt = (s4 / n) / (m2 * m2) - 3.0
    jb = n / 6.0 * (g1 * g1 + kurt * kurt / 4.0)
    return math.exp(-jb / 2.0)


@_jit
def count_distribution(rel_times, values, nonzero_only, duration):
    if duration <= 0:
        return NAN
    s = 0.0
    k = 0
    for i in range(len(rel_times)):
        if nonzero_only and values[i] <= 0:
            continue
        s += rel_times[i]
        k += 1
    if k == 0:
        return NAN
    return s / k / duration


@_jit
def time_distribution(time_diffs):
    if len(time_diffs) < 2:
        return NAN
    mu, sd = _mean_std(time_diffs)
    return sd / (mu + sd) if mu + sd > 0 else NAN


@_jit
def dist_kernel(values, rel_times, time_diffs, segments, max_mean_diff, max_var_diff, min_points):
    x = values.astype(np.float64)
    duration = rel_times[-1]
    out = np.empty(N_DIST)
    out[0] = hurst(x, 8)
    out[1] = stationarity(x, segments, max_mean_diff, max_var_diff, min_points)
    out[2] = benford(values)
    out[3] = normal_similarity(x)
    out[4] = count_distribution(rel_times, values, False, duration)
    out[5] = count_distribution(rel_times, values, True, duration)
    out[6] = time_distribution(time_diffs)
    return out


# -- frequency ----------------------------------------------------------------


@_jit
def ls_kernel(t, values, freqs):
    """Normalised Lomb-Scargle power of ``values`` at ``t`` on a uniform grid.

    Returns (power, constant). The phasors exp(i w t) are advanced from one
    frequency to the next by a complex multiplication and re-anchored with
    exact trig every ANCHOR_EVERY frequencies.
    """
    n = len(t)
    count = len(freqs)
    power = np.zeros(count)
    y = np.empty(n)
    mu = 0.0
    for i in range(n):
        mu += values[i]
    mu /= n
    var = 0.0
    for i in range(n):
        y[i] = values[i] - mu
        var += y[i] * y[i]
    var /= n
    if var == 0.0 or values.min() == values.max():
        return power, True

    dw = 2.0 * math.pi * (freqs[1] - freqs[0]) if count > 1 else 0.0
    c = np.empty(n)
    s = np.empty(n)
    cs = np.empty(n)
    ss = np.empty(n)
    for i in range(n):
        cs[i] = math.cos(dw * t[i])
        ss[i] = math.sin(dw * t[i])
    eps = 1e-12 * n
    for k in range(count):
        if k % ANCHOR_EVERY == 0:
            w = 2.0 * math.pi * freqs[k]
            for i in range(n):
                c[i] = math.cos(w * t[i])
                s[i] = math.sin(w * t[i])
        yc = ys = z2r = z2i = 0.0
        for i in range(n):
            ci = c[i]
            si = s[i]
            yc += y[i] * ci
            ys += y[i] * si
            z2r += ci * ci - si * si
            z2i += 2.0 * ci * si
            c[i] = ci * cs[i] - si * ss[i]
            s[i] = ci * ss[i] + si * cs[i]
        # Rotate by -w*tau, where 2*w*tau = arg(sum z^2).
        r2 = math.hypot(z2r, z2i)
        half = 0.5 * math.atan2(z2i, z2r)
        ch = math.cos(half)
        sh = math.sin(half)
        a = yc * ch + ys * sh
        b = ys * ch - yc * sh
        cc = 0.5 * (n + r2)
        sq = 0.5 * (n - r2)
        p = 0.0
        if cc > eps:
            p += a * a / cc
        if sq > eps:
            p += b * b / sq
        p /= 2.0 * var
        power[k] = p if p > 0.0 else 0.0
    return power, False


@_jit
def rolloff(freqs, power, threshold):
    total = 0.0
    for p in power:
        total += p
    if not total > 0:
        return NAN
    run = 0.0
    for k in range(len(power)):
        run += power[k]
        if run >= threshold * total:
            return freqs[k]
    return freqs[-1]


@_jit
def power_mode(power, bins):
    lo = power.min()
    hi = power.max()
    if hi == lo:
        return lo
    width = (hi - lo) / bins
    if not width > 0:
        return lo
    hist = np.zeros(bins, dtype=np.int64)
    for p in power:
        hist[min(int((p - lo) / width), bins - 1)] += 1
    return lo + (np.argmax(hist) + 0.5) * width


@_jit
def freq_kernel(f, P, threshold):
    out = np.empty(N_FREQ)
    count = len(P)
    i_min = np.argmin(P)
    i_max = np.argmax(P)
    pmin = P[i_min]
    pmax = P[i_max]
    energy = _fsum(P)
    # Rounding in the sum can push the mean a hair outside [min, max].
    pmean = min(max(energy / count, pmin), pmax)
    acc = 0.0
    for p in P:
        acc += (p - pmean) ** 2
    pstd = math.sqrt(acc / count)

    slope = zcr = NAN
    if count > 1:
        fm = 0.0
        for v in f:
            fm += v
        fm /= count
        num = den = 0.0
        crossings = 0
        for k in range(count):
            num += (f[k] - fm) * (P[k] - pmean)
            den += (f[k] - fm) ** 2
            if k and (P[k] - pmean) * (P[k - 1] - pmean) < 0:
                crossings += 1
        slope = num / den if den > 0 else NAN
        zcr = crossings / (count - 1)

    centroid = bandwidth = skew = kurt = entropy = flatness = flux = NAN
    periodicity = roll = spread = NAN
    logsum = 0.0
    # The mean, not just the energy, must be positive: it can underflow.
    if pmean > 0:
        centroid = 0.0
        for k in range(count):
            centroid += f[k] * (P[k] / energy)
        m2 = m3 = m4 = 0.0
        entropy = 0.0
        flux = 0.0
        first = last = -1
        for k in range(count):
            w = P[k] / energy
            d = f[k] - centroid
            m2 += w * d * d
            m3 += w * d * d * d
            m4 += w * d * d * d * d
            if w > 0:
                entropy -= w * math.log2(w)
            if k:
                flux += (w - P[k - 1] / energy) ** 2
            if P[k] > 0:
                logsum += math.log(P[k])
            if P[k] > pmean:
                if first < 0:
                    first = k
                last = k
        entropy += 0.0
        bandwidth = math.sqrt(m2)
        # Guard the powers too: a tiny bandwidth can underflow when cubed.
        b3 = bandwidth**3
        b4 = bandwidth**4
        if b3 > 0:
            skew = m3 / b3
        if b4 > 0:
            kurt = m4 / b4
        z = pmax / pmean
        periodicity = math.exp(count * math.log1p(-math.exp(-z)))
        roll = rolloff(f, P, threshold)
        spread = f[last] - f[first] if first >= 0 else 0.0
    # Flatness only needs a non-empty spectrum; its ratio branch implies pmean > 0.
    if energy > 0:
        if pmax == pmin:
            flatness = 1.0
        elif pmin <= 0:
            flatness = 0.0
        else:
            flatness = math.exp(logsum / count) / pmean

    out[0] = pmin
    out[1] = pmax
    out[2] = f[i_min]
    out[3] = f[i_max]
    out[4] = power_mode(P, MODE_BINS)
    out[5] = pmean
    out[6] = pstd
    out[7] = bandwidth
    out[8] = centroid
    out[9] = energy
    out[10] = entropy
    out[11] = flatness
    out[12] = flux
    out[13] = kurt
    out[14] = periodicity
    out[15] = roll
    out[16] = spread
    out[17] = skew
    out[18] = slope
    out[19] = zcr
    return out


@_jit
def grid(duration, n, oversample):
    """Frequency grid, or an empty array when the flow has no spectrum."""
    if n < 2 or not duration > 0:
        return np.empty(0)
    f_min = 1.0 / duration
    f_max = n / (2.0 * duration)
    if f_max > f_min:
        count = int(math.ceil(oversample * n / 2))
        return np.linspace(f_min, f_max, count)
    return np.full(1, f_min)


@_jit
def spectral_kernel(rel_times, values, oversample, threshold):
    f = grid(rel_times[-1], len(values), oversample)
    if len(f) == 0:
        return np.full(N_FREQ, NAN)
    power, _ = ls_kernel(rel_times, values, f)
    return freq_kernel(f, power, threshold)


# -- behaviour ----------------------------------------------------------------


@_jit
def significant_spaces(time_diffs):
    m = len(time_diffs)
    if m < 3:
        return NAN
    order = np.sort(time_diffs)
    mu, sd = _mean_std(order[:-1])
    return 1.0 if order[-1] > mu + max(3.0 * sd, mu) else 0.0


@_jit
def switching_ratio(values):
    n = len(values)
    if n < 2:
        return NAN
    k = 0
    for i in range(1, n):
        if values[i] != values[i - 1]:
            k += 1
    return k / (n - 1)


@_jit
def transients(times, values, window, min_points):
    n = len(values)
    mu, sd = _mean_std(values.astype(np.float64))
    if sd == 0:
        return NAN
    limit = mu + 2.0 * sd
    csum = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        csum[i + 1] = csum[i] + values[i]
    end = 0
    for i in range(n):
        # First packet at or after times[i] + window; monotone in i.
        edge = times[i] + window
        if end < i:
            end = i
        while end < n and times[end] < edge:
            end += 1
        count = end - i
        if count >= min_points and (csum[end] - csum[i]) / count > limit:
            return 1.0
    return 0.0


@_jit
def buckets(rel_times, values, duration):
    nb = int(math.floor(duration)) + 1
    sums = np.zeros(nb)
    counts = np.zeros(nb, dtype=np.int64)
    for i in range(len(rel_times)):
        k = int(math.floor(rel_times[i]))
        sums[k] += values[i]
        counts[k] += 1
    return sums, counts


@_jit
def periodicity(times, values, min_occurrences, max_cv):
    """(period, payload length) of the dominant periodic length; (0, -1) if none."""
    n = len(values)
    if n < min_occurrences:
        return 0.0, -1
    order = np.argsort(values, kind="mergesort")  # stable: time order within a length
    best_count = 0
    best_len = -1
    best_period = 0.0
    i = 0
    while i < n:
        j = i
        length = values[order[i]]
        while j < n and values[order[j]] == length:
            j += 1
        count = j - i
        if count >= min_occurrences and count > best_count:
            gaps = np.empty(count - 1)
            for k in range(count - 1):
                gaps[k] = times[order[i + k + 1]] - times[order[i + k]]
            mu, sd = _mean_std(gaps)
            if mu > 0 and sd / mu < max_cv:
                best_count = count
                best_len = length
                best_period = quantile_sorted(np.sort(gaps), 0.5)
        i = j
    return best_period, best_len


@_jit
def behavior_kernel(times, rel_times, time_diffs, values, directions, min_occurrences, max_cv):
    out = np.empty(N_BEH)
    n = len(values)
    sums, counts = buckets(rel_times, values, rel_times[-1])
    empty = 0
    for c in counts:
        if c == 0:
            empty += 1
    fwd = 0
    for d in directions:
        fwd += d
    period, length = periodicity(times, values, min_occurrences, max_cv)
    out[0] = significant_spaces(time_diffs)
    out[1] = switching_ratio(values)
    out[2] = transients(times, values, 1.0, 3)
    out[3] = 100.0 * empty / len(counts)
    out[4] = sums.max()
    out[5] = 100.0 * fwd / n
    out[6] = period
    return out, length


# -- everything ---------------------------------------------------------------


@_jit
def flow_kernel(times, values, directions, oversample, threshold, segments, max_mean_diff,
                max_var_diff, min_points, min_occurrences, max_cv, burst_on_gaps):
    """All feature families of one flow, concatenated in schema order.

    Returns (features, periodic length or -1).
    """
    n = len(times)
    rel = times - times[0]
    diffs = np.empty(n - 1)
    for i in range(n - 1):
        diffs[i] = times[i + 1] - times[i]
    out = np.empty(N_ALL)
    o = 0
    out[o:o + N_STAT] = stat_kernel(values)
    if burst_on_gaps:
        if n > 1:
            mu, sd = _mean_std(diffs)
            out[o + 4] = _div(sd - mu, sd + mu)
        else:
            out[o + 4] = NAN
    o += N_STAT
    out[o:o + N_TIME] = time_kernel(rel, diffs)
    o += N_TIME
    out[o:o + N_DIST] = dist_kernel(values, rel, diffs, segments, max_mean_diff, max_var_diff, min_points)
    o += N_DIST
    out[o:o + N_FREQ] = spectral_kernel(rel, values, oversample, threshold)
    o += N_FREQ
    beh, length = behavior_kernel(times, rel, diffs, values, directions, min_occurrences, max_cv)
    out[o:o + N_BEH] = beh
    return out, length
