"""Compiled inner loops.

Everything in here is numba ``njit`` code operating on flat arrays; the public
modules wrap these with validation and dataclasses. Noise is generated inline
from a Philox4x32-10 counter-based generator so each Gaussian increment is a
pure function of ``(seed, stream, path, step, coordinate)``.
"""

import math

import numpy as np
from numba import njit

SORTED_TAMED = 0
GAP_IMPLICIT = 1
YOSIDA = 2

REGION_NONE = -1
REGION_BOX = 0
REGION_GAP_CAP = 1
REGION_HALF_BELOW = 2

STREAM_BROWNIAN = 0
STREAM_RESAMPLE = 1
STREAM_BRIDGE = 2

TINY_GAP = 1e-200
PROX_MAXIT = 50

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_MASK16 = np.uint64(0xFFFF)
_S32 = np.uint64(32)
_S16 = np.uint64(16)
_S5 = np.uint64(5)
_S6 = np.uint64(6)
_TWO26 = np.uint64(67108864)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# counter-based generator


@njit(cache=True, error_model="numpy", inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK32
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


@njit(cache=True, error_model="numpy", inline="always")
def uniform_pair(k0, k1, stream, path, step, slot):
    """Two U[0,1) doubles with 53 random bits each."""
    st = np.uint64(step)
    pa = np.uint64(path)
    c0 = st & _MASK32
    c1 = ((st >> _S32) & _MASK16) | (np.uint64(stream) << _S16)
    c2 = pa & _MASK32
    c3 = (np.uint64(slot) & _MASK16) | (((pa >> _S32) & _MASK16) << _S16)
    r0, r1, r2, r3 = philox4x32(c0, c1, c2, c3, k0, k1)
    u0 = ((r0 >> _S5) * _TWO26 + (r1 >> _S6)) * _INV53
    u1 = ((r2 >> _S5) * _TWO26 + (r3 >> _S6)) * _INV53
    return u0, u1


@njit(cache=True, error_model="numpy", inline="always")
def normal_pair(k0, k1, stream, path, step, slot):
    u0, u1 = uniform_pair(k0, k1, stream, path, step, slot)
    r = math.sqrt(-2.0 * math.log(1.0 - u0))
    th = _TWO_PI * u1
    return r * math.cos(th), r * math.sin(th)


@njit(cache=True, error_model="numpy", _nrt=False)
def fill_noise(k0, k1, path, step, substeps, scale, out):
    """Standard normal vector for one (possibly aggregated) time step.

    A step at level ``substeps`` sums ``substeps`` base increments addressed by
    ``step * substeps + s`` and rescales, so a run at ``dt`` and one at
    ``dt / substeps`` see the same Brownian path.
    """
    n = out.size
    for c in range(n):
        out[c] = 0.0
    if scale == 0.0:
        return
    npairs = (n + 1) // 2
    for s in range(substeps):
        fine = step * substeps + s
        for q in range(npairs):
            z0, z1 = normal_pair(k0, k1, STREAM_BROWNIAN, path, fine, q)
            out[2 * q] += z0
            if 2 * q + 1 < n:
                out[2 * q + 1] += z1
    m = scale / math.sqrt(substeps)
    for c in range(n):
        out[c] *= m


@njit(cache=True, error_model="numpy")
def noise_matrix(k0, k1, path, n_steps, substeps, scale, n):
    out = np.empty((n_steps, n))
    buf = np.empty(n)
    for k in range(n_steps):
        fill_noise(k0, k1, path, k, substeps, scale, buf)
        out[k, :] = buf
    return out


@njit(cache=True, error_model="numpy")
def uniform_matrix(k0, k1, stream, paths, step):
    out = np.empty(paths.size)
    for i in range(paths.size):
        out[i] = uniform_pair(k0, k1, stream, paths[i], step, 0)[0]
    return out


# ---------------------------------------------------------------------------
# drifts and the proximal map


@njit(cache=True, error_model="numpy", _nrt=False)
def interaction_grad_into(x, gamma, out):
    n = x.size
    for i in range(n):
        out[i] = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            g = x[j] - x[i]
            if g < TINY_GAP:
                g = TINY_GAP
            t = gamma / g
            out[i] += t
            out[j] -= t


@njit(cache=True, error_model="numpy", _nrt=False)
def _insertion_sort(x):
    for i in range(1, x.size):
        v = x[i]
        j = i - 1
        while j >= 0 and x[j] > v:
            x[j + 1] = x[j]
            j -= 1
        x[j + 1] = v


@njit(cache=True, error_model="numpy", _nrt=False)
def _has_crossing(x):
    for i in range(x.size - 1):
        if x[i + 1] < x[i]:
            return True
    return False


@njit(cache=True, error_model="numpy", _nrt=False)
def _solve_spd(h, rhs, out):
    """Cholesky solve of a small SPD system; overwrites ``h`` with its factor."""
    n = rhs.size
    for j in range(n):
        s = h[j, j]
        for k in range(j):
            s -= h[j, k] * h[j, k]
        h[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            s = h[i, j]
            for k in range(j):
                s -= h[i, k] * h[j, k]
            h[i, j] = s / h[j, j]
    for i in range(n):
        s = rhs[i]
        for k in range(i):
            s -= h[i, k] * out[k]
        out[i] = s / h[i, i]
    for i in range(n - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, n):
            s -= h[k, i] * out[k]
        out[i] = s / h[i, i]


def new_workspace(n):
    return np.empty((n + 4, max(n, 1)))


@njit(cache=True, error_model="numpy", _nrt=False)
def _prox_objective(y, x, pen, gamma):
    f = 0.0
    n = y.size
    for i in range(n):
        f += 0.5 * pen * (y[i] - x[i]) ** 2
        for j in range(i + 1, n):
            f -= gamma * math.log(y[j] - y[i])
    return f


@njit(cache=True, error_model="numpy", _nrt=False)
def prox(x, pen, gamma, tol, y, ws):
    """``argmin_y V_I(y) + pen/2 |y - x|^2`` by damped Newton; writes ``y``.

    ``ws`` is scratch of shape ``(n + 4, n)``. Stops once ``y`` is within ``tol``
    of the minimiser. Returns the iteration count, or -1 when the budget is
    exhausted.
    """
    n = x.size
    if n == 1:
        y[0] = x[0]
        return 0
    if n == 2:
        c = 0.5 * (x[0] + x[1])
        gx = x[1] - x[0]
        root = math.sqrt(gx * gx + 8.0 * gamma / pen)
        if gx >= 0.0:
            g = 0.5 * (gx + root)
        else:
            g = 4.0 * gamma / pen / (root - gx)
        y[0] = c - 0.5 * g
        y[1] = c + 0.5 * g
        return 0
    hess = ws[:n]
    grad = ws[n]
    trial = ws[n + 1]
    d = ws[n + 2]
    rhs = ws[n + 3]
    # start from the isotonic projection of x (the large-pen limit), gaps
    # floored at the two-particle equilibrium scale
    g0 = math.sqrt(gamma / (2.0 * pen))
    nb = 0
    for i in range(n):
        trial[nb] = x[i]
        d[nb] = 1.0
        nb += 1
        while nb > 1 and trial[nb - 2] > trial[nb - 1]:
            c = d[nb - 2] + d[nb - 1]
            trial[nb - 2] = (trial[nb - 2] * d[nb - 2] + trial[nb - 1] * d[nb - 1]) / c
            d[nb - 2] = c
            nb -= 1
    k = 0
    for b in range(nb):
        for _ in range(int(d[b])):
            y[k] = trial[b]
            k += 1
    for i in range(1, n):
        if y[i] < y[i - 1] + g0:
            y[i] = y[i - 1] + g0
    shift = 0.0
    for i in range(n):
        shift += x[i] - y[i]
    shift /= n
    for i in range(n):
        y[i] += shift
    for it in range(PROX_MAXIT + 1):
        interaction_grad_into(y, gamma, grad)
        gn = 0.0
        for i in range(n):
            grad[i] += pen * (y[i] - x[i])
            gn += grad[i] * grad[i]
        # strong convexity: |y - y*| <= |grad| / pen
        if math.sqrt(gn) <= tol * pen:
            return it
        if it == PROX_MAXIT:
            break
        for i in range(n):
            for j in range(n):
                hess[i, j] = 0.0
            hess[i, i] = pen
            rhs[i] = -grad[i]
        for i in range(n):
            for j in range(i + 1, n):
                g = y[j] - y[i]
                w = gamma / (g * g)
                hess[i, i] += w
                hess[j, j] += w
                hess[i, j] -= w
                hess[j, i] -= w
        _solve_spd(hess, rhs, d)
        # a Newton step below a few ulps of y cannot improve it further
        dn = 0.0
        ym = 1.0
        for i in range(n):
            dn = max(dn, abs(d[i]))
            ym = max(ym, abs(y[i]))
        if dn <= 64.0 * 2.220446049250313e-16 * ym:
            return it
        slope = 0.0
        for i in range(n):
            slope += grad[i] * d[i]
        # backtracking on the objective itself (strongly convex, barrier keeps order)
        f0 = _prox_objective(y, x, pen, gamma)
        # below round-off level the objective cannot rank steps; take any feasible one
        tiny = -slope <= 1e-13 * (1.0 + abs(f0))
        t = 1.0
        for _ in range(60):
            for i in range(n):
                trial[i] = y[i] + t * d[i]
            ok = True
            for i in range(n - 1):
                if not trial[i + 1] > trial[i]:
                    ok = False
                    break
            if ok and (tiny or _prox_objective(trial, x, pen, gamma) <= f0 + 1e-4 * t * slope):
                break
            t *= 0.5
        for i in range(n):
            y[i] = trial[i]
    return -1


@njit(cache=True, error_model="numpy", _nrt=False)
def step_into(x, xi, dt, scheme, a, gamma, cap, pen, tol, out, work, kinc, ws):
    """Advance one step from ``x`` with standard normals ``xi``.

    Writes the new (sorted) state into ``out`` and the discrete ``dK`` into
    ``kinc``. Returns 1 if the raw update crossed, 0 if not, -1 on prox failure.
    """
    n = x.size
    sq = math.sqrt(dt)
    crossed = 0
    if scheme == SORTED_TAMED:
        interaction_grad_into(x, gamma, work)
        lim = cap / sq
        for i in range(n):
            d = -2.0 * a * x[i] - work[i]
            if d > lim:
                d = lim
            elif d < -lim:
                d = -lim
            out[i] = x[i] + dt * d + sq * xi[i]
        if _has_crossing(out):
            crossed = 1
            _insertion_sort(out)
    elif scheme == GAP_IMPLICIT:
        for i in range(n):
            work[i] = x[i] - dt * 2.0 * a * x[i] + sq * xi[i]
        if n == 1:
            out[0] = work[0]
        elif prox(work, 1.0 / dt, gamma, tol, out, ws) < 0:
            return -1
    else:
        if n == 1:
            out[0] = x[0]
        elif prox(x, pen, gamma, tol, out, ws) < 0:
            return -1
        for i in range(n):
            d = -2.0 * a * x[i] - pen * (x[i] - out[i])
            out[i] = x[i] + dt * d + sq * xi[i]
        if _has_crossing(out):
            crossed = 1
            _insertion_sort(out)
    for i in range(n):
        kinc[i] = x[i] - dt * 2.0 * a * x[i] + sq * xi[i] - out[i]
    return crossed


@njit(cache=True, error_model="numpy")
def bessel_ratio(mu, z):
    """``I_mu(z) / I_{-mu}(z)`` for ``0 < mu < 1`` and ``0 <= z <= ~40`` by the power series."""
    if z <= 0.0:
        return 0.0
    h = 0.25 * z * z
    tp = math.exp(mu * math.log(0.5 * z) - math.lgamma(1.0 + mu))
    tm = math.exp(-mu * math.log(0.5 * z) - math.lgamma(1.0 - mu))
    sp = tp
    sm = tm
    for k in range(1, 200):
        tp *= h / (k * (k + mu))
        tm *= h / (k * (k - mu))
        sp += tp
        sm += tm
        if tp < 1e-17 * sp and tm < 1e-17 * sm:
            break
    return sp / sm


BRIDGE_ZMAX = 25.0


@njit(cache=True, error_model="numpy")
def bridge_hit_prob(gamma, g0, g1, dt):
    """Chance that a gap at ``g0`` and ``g1`` on consecutive grid points touched 0 in between.

    Near a collision the gap behaves like ``sqrt 2`` times a Bessel process of
    dimension ``2 gamma + 1``; its bridge avoids 0 with probability
    ``I_mu(z) / I_{-mu}(z)``, ``mu = 1/2 - gamma``, ``z = g0 g1 / (2 dt)``.
    Zero for ``gamma >= 1/2``.
    """
    if gamma >= 0.5 or g0 <= 0.0 or g1 <= 0.0:
        return 0.0
    z = g0 * g1 / (2.0 * dt)
    if z > BRIDGE_ZMAX:
        return 0.0
    return 1.0 - bessel_ratio(0.5 - gamma, z)


@njit(cache=True, error_model="numpy", _nrt=False)
def bridge_detect(gamma, x, y, dt, k0, k1, path, step):
    """Randomised bridge test over all adjacent pairs of the step ``x -> y``."""
    for i in range(x.size - 1):
        p = bridge_hit_prob(gamma, x[i + 1] - x[i], y[i + 1] - y[i], dt)
        if p > 0.0:
            u = uniform_pair(k0, k1, STREAM_BRIDGE, path, step, i)[0]
            if u < p:
                return True
    return False


@njit(cache=True, error_model="numpy", _nrt=False)
def min_gap(x):
    m = np.inf
    for i in range(x.size - 1):
        g = x[i + 1] - x[i]
        if g < m:
            m = g
    return m


@njit(cache=True, error_model="numpy", _nrt=False)
def in_region(kind, lo, hi, cap_len, bound, x):
    n = x.size
    if kind == REGION_BOX:
        for i in range(n):
            if not (lo[i] < x[i] < hi[i]):
                return False
        return True
    if kind == REGION_GAP_CAP:
        return x[n - 1] - x[0] < cap_len
    if kind == REGION_HALF_BELOW:
        return x[n - 1] < bound
    return True


# ---------------------------------------------------------------------------
# drivers


@njit(cache=True, error_model="numpy")
def simulate_single(x0, n_steps, dt, scheme, a, gamma, cap, pen, tol,
                    k0, k1, path, substeps, scale, states, crossings, bridge_hits, kincs):
    """Full-resolution single path. Returns -1 on success or the failing step.

    ``bridge_hits[k + 1]`` is the randomised bridge test for the step ``k -> k + 1``
    (only evaluated when the raw update did not cross).
    """
    n = x0.size
    x = x0.copy()
    y = np.empty(n)
    xi = np.empty(n)
    work = np.empty(n)
    kinc = np.empty(n)
    ws = np.empty((n + 4, n))
    for c in range(n):
        states[0, c] = x[c]
    crossings[0] = False
    bridge_hits[0] = False
    record_k = kincs.shape[0] >= n_steps
    for k in range(n_steps):
        fill_noise(k0, k1, path, k, substeps, scale, xi)
        flag = step_into(x, xi, dt, scheme, a, gamma, cap, pen, tol, y, work, kinc, ws)
        if flag < 0:
            return k
        crossings[k + 1] = flag == 1
        bridge_hits[k + 1] = flag == 0 and bridge_detect(gamma, x, y, dt, k0, k1, path, k)
        for c in range(n):
            x[c] = y[c]
            states[k + 1, c] = y[c]
            if record_k:
                kincs[k, c] = kinc[c]
    return -1


@njit(cache=True, error_model="numpy")
def simulate_besq(b0, w, dt, drift, states):
    """Full-truncation Euler for ``dB = drift dt + 2 sqrt(2 B) dw``; ``w`` standard normals."""
    states[0] = b0
    sq = math.sqrt(dt)
    for k in range(w.size):
        b = states[k]
        bp = b if b > 0.0 else 0.0
        nb = b + drift * dt + 2.0 * math.sqrt(2.0 * bp) * sq * w[k]
        states[k + 1] = nb if nb > 0.0 else 0.0


@njit(cache=True, error_model="numpy")
def besq_hitting_times(x0, delta, dt, n_steps, k0, k1, first_path, n_samples, out):
    """First crossing of 0 by full-truncation Euler BESQ(delta); ``inf`` if censored.

    A hit is recorded when the raw Euler update is ``<= 0``. Each sample uses
    one base stream path and two normals per Philox call.
    """
    sq = math.sqrt(dt)
    for s in range(n_samples):
        b = x0
        hit = np.inf
        z1 = 0.0
        for k in range(n_steps):
            if k % 2 == 0:
                z0, z1 = normal_pair(k0, k1, STREAM_BROWNIAN, first_path + s, k // 2, 0)
                z = z0
            else:
                z = z1
            nb = b + delta * dt + 2.0 * math.sqrt(b) * sq * z
            if nb <= 0.0:
                hit = (k + 1) * dt
                break
            b = nb
        out[s] = hit


@njit(cache=True, error_model="numpy")
def run_ensemble(x0s, path_ids, n_steps, dt, scheme, a, gamma, cap, pen, tol,
                 k0, k1, substeps, scale,
                 rkind, rlo, rhi, rcap, rbound,
                 coll_thr, bridge, stop_on_exit, stop_on_collision,
                 record_steps, rec, exit_step, coll_step, fail_step):
    """Independent paths with on-the-fly exit and collision detection.

    A collision at step ``k`` is a crossing raw update, a gap ``<= coll_thr``
    or, with ``bridge``, a positive randomised bridge test.
    ``rec[p, r]`` holds the state at ``record_steps[r]`` while the path is
    running and NaN once it has been stopped.
    """
    npaths, n = x0s.shape
    nrec = record_steps.size
    x = np.empty(n)
    y = np.empty(n)
    xi = np.empty(n)
    work = np.empty(n)
    kinc = np.empty(n)
    ws = np.empty((n + 4, n))
    for p in range(npaths):
        pid = path_ids[p]
        for c in range(n):
            x[c] = x0s[p, c]
        exit_step[p] = -1
        coll_step[p] = -1
        fail_step[p] = -1
        r = 0
        stopped = False
        if rkind != REGION_NONE and not in_region(rkind, rlo, rhi, rcap, rbound, x):
            exit_step[p] = 0
            stopped = stop_on_exit
        while r < nrec and record_steps[r] == 0:
            for c in range(n):
                rec[p, r, c] = np.nan if stopped else x[c]
            r += 1
        k = 0
        while k < n_steps and not stopped:
            fill_noise(k0, k1, pid, k, substeps, scale, xi)
            flag = step_into(x, xi, dt, scheme, a, gamma, cap, pen, tol, y, work, kinc, ws)
            if flag < 0:
                fail_step[p] = k
                stopped = True
                break
            hit = flag == 1
            if bridge and not hit and coll_step[p] < 0 and n > 1:
                hit = bridge_detect(gamma, x, y, dt, k0, k1, pid, k)
            k += 1
            for c in range(n):
                x[c] = y[c]
            if coll_step[p] < 0 and n > 1 and (hit or min_gap(x) <= coll_thr):
                coll_step[p] = k
                if stop_on_collision:
                    stopped = True
            if exit_step[p] < 0 and rkind != REGION_NONE and not in_region(rkind, rlo, rhi, rcap, rbound, x):
                exit_step[p] = k
                if stop_on_exit:
                    stopped = True
            while r < nrec and record_steps[r] == k:
                for c in range(n):
                    rec[p, r, c] = np.nan if stopped else x[c]
                r += 1
        while r < nrec:
            for c in range(n):
                rec[p, r, c] = np.nan
            r += 1


@njit(cache=True, error_model="numpy")
def fv_advance(particles, generation, n_steps, dt, scheme, a, gamma, cap, pen, tol,
               k0, k1, substeps, scale, rkind, rlo, rhi, rcap, rbound,
               snap_every, snap_offset, snaps, resamples):
    """Fleming-Viot propagation with uniform-survivor resampling.

    Each step first moves every particle independently, then replaces the
    exited ones (in index order) by copies of survivors chosen with the
    resampling stream addressed by ``(generation, particle)``. Snapshots are
    taken after resampling whenever ``(s + 1 - snap_offset) % snap_every == 0``
    for step ``s``. Returns ``(status, steps_done)``: status 0 ok, 1 extinct,
    2 prox failure.
    """
    m, n = particles.shape
    new = np.empty((m, n))
    alive = np.empty(m, dtype=np.bool_)
    surv = np.empty(m, dtype=np.int64)
    x = np.empty(n)
    y = np.empty(n)
    xi = np.empty(n)
    work = np.empty(n)
    kinc = np.empty(n)
    ws = np.empty((n + 4, n))
    nsnap = 0
    for s in range(n_steps):
        g = generation + s
        for j in range(m):
            for c in range(n):
                x[c] = particles[j, c]
            fill_noise(k0, k1, j, g, substeps, scale, xi)
            flag = step_into(x, xi, dt, scheme, a, gamma, cap, pen, tol, y, work, kinc, ws)
            if flag < 0:
                return 2, s
            for c in range(n):
                new[j, c] = y[c]
            alive[j] = rkind == REGION_NONE or in_region(rkind, rlo, rhi, rcap, rbound, y)
        ns = 0
        for j in range(m):
            if alive[j]:
                surv[ns] = j
                ns += 1
        if ns == 0:
            return 1, s
        count = 0
        for j in range(m):
            if not alive[j]:
                u = uniform_pair(k0, k1, STREAM_RESAMPLE, j, g, 0)[0]
                pick = surv[int(u * ns)]
                for c in range(n):
                    new[j, c] = new[pick, c]
                count += 1
        resamples[s] = count
        for j in range(m):
            for c in range(n):
                particles[j, c] = new[j, c]
        if snap_every > 0 and s + 1 > snap_offset and (s + 1 - snap_offset) % snap_every == 0:
            if nsnap < snaps.shape[0]:
                for j in range(m):
                    for c in range(n):
                        snaps[nsnap, j, c] = particles[j, c]
                nsnap += 1
    return 0, n_steps
