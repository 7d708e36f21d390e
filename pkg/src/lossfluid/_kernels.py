"""Hot numerical kernels: VIE recursions and event-driven simulation loops.

Two implementations live side by side:

* scalar-loop kernels, compiled with numba when the ``numba`` backend is
  active (see ``lossfluid._backend``); these are the default;
* pure-numpy variants of the quadratic-cost VIE recursions, used when the
  backend is ``numpy``.

The event-driven simulation loops have no vectorizable structure, so the
numpy backend simply runs them as interpreted Python; they are written
against preallocated arrays and a hand-rolled binary heap so that the
same source compiles under ``@njit``.  Event sequences are bit-identical
across backends; the VIE trajectories agree to rounding (different
summation orders), which the benchmark asserts.

Index discipline of the VIE recursions: quadrature sums run over
``j = 1..i`` with weight ``dt`` (the node at ``t_0`` never enters any
sum, so the auxiliary value stored there is display-only).  Boundary
classification carries one-increment hysteresis; without it the
saturated discrete equilibrium sits within rounding of the threshold and
the acceptance values flicker on float noise.
"""

from __future__ import annotations

import math

import numpy as np

from ._backend import NUMBA_ENABLED, jit_kernel

INF = math.inf


# ----------------------------------------------------------------------
# state classification (shared by the finite solver and its wrapper)
# ----------------------------------------------------------------------


def _classify_scalar(rho, eta, cap, beta, tol):
    """Four-state label from clamped (rho, eta): 1..4.

    1: below capacity, empty buffer; 2: at capacity, empty buffer;
    3: at capacity, buffer partially filled; 4: at capacity, buffer full.
    With ``beta = 0`` the buffer coordinate stays at zero, so only states
    1 and 2 occur.  Off-table combinations (buffer mass with idle
    capacity, transient under coarse grids) fall through to state 3.
    """
    if eta <= tol:
        if rho < cap - tol:
            return 1
        return 2
    if rho < cap - tol:
        return 3
    if eta >= beta - tol:
        return 4
    return 3


def _classify_hyst(rho, eta, cap, beta, tol, prev):
    """Stateful classification with hysteresis against threshold chatter.

    Entering a boundary regime requires crossing the entry threshold
    (``tol`` below the constraint); leaving it requires falling one extra
    Euler increment further.  The discrete saturated equilibrium sits
    within rounding of the entry threshold, so a memoryless test flips
    the label on float noise and makes the acceptance value flicker.
    """
    prev_boundary = prev >= 2
    prev_pos = prev >= 3
    prev_full = prev == 4
    if prev_boundary:
        boundary = rho >= cap - 2.0 * tol
    else:
        boundary = rho >= cap - tol
    if prev_pos:
        pos = eta > 0.5 * tol
    else:
        pos = eta > tol
    if pos:
        if prev_full:
            full = eta >= beta - 2.0 * tol
        else:
            full = eta >= beta - tol
        if full:
            return 4
        return 3
    if boundary:
        return 2
    return 1


# ----------------------------------------------------------------------
# zero-buffer VIE recursion
# ----------------------------------------------------------------------


def _zero_vie_loop(lam, gbar, gpdf, init_occ, init_dep, dt, cap, tol):
    """Explicit recursion for the zero-buffer solution (rho, w).

    ``init_occ[i] = r0 * Fbar(t_i)`` and ``init_dep[i] = r0 * f(t_i)``.
    Off the capacity boundary the acceptance value is 1; on the boundary
    it is ``min(d/lambda, 1)`` with the departure rate reconstructed from
    the acceptance history.  Boundary membership carries hysteresis (the
    exit threshold sits one extra Euler increment below the entry one) so
    the saturated equilibrium cannot flicker on rounding noise.  Returns
    ``(rho, w, flags, err)`` where ``flags`` marks on-boundary points and
    ``err`` is the first nonfinite grid index (-1 when clean).
    """
    n1 = lam.shape[0]
    rho = np.zeros(n1)
    w = np.zeros(n1)
    wlam = np.zeros(n1)
    flags = np.zeros(n1, np.uint8)
    err = -1

    r = init_occ[0]
    if r > cap:
        r = cap
    if r < 0.0:
        r = 0.0
    rho[0] = r
    if rho[0] >= cap - tol:
        flags[0] = 1
    if flags[0] == 0:
        w[0] = 1.0
    else:
        if lam[0] <= 0.0:
            w[0] = 1.0
        else:
            v = init_dep[0] / lam[0]
            if v > 1.0:
                v = 1.0
            if v < 0.0:
                v = 0.0
            w[0] = v

    for i in range(n1 - 1):
        if flags[i] == 0:
            w[i + 1] = 1.0
        else:
            di = init_dep[i]
            for j in range(1, i + 1):
                di += wlam[j] * gpdf[i - j] * dt
            if lam[i] <= 0.0:
                w[i + 1] = 1.0
            else:
                v = di / lam[i]
                if v > 1.0:
                    v = 1.0
                if v < 0.0:
                    v = 0.0
                w[i + 1] = v
        wlam[i + 1] = w[i + 1] * lam[i + 1]
        acc = init_occ[i + 1]
        for j in range(1, i + 2):
            acc += wlam[j] * gbar[i + 1 - j] * dt
        if not np.isfinite(acc):
            err = i + 1
            break
        if acc > cap:
            acc = cap
        if acc < 0.0:
            acc = 0.0
        rho[i + 1] = acc
        edge = cap - 2.0 * tol if flags[i] == 1 else cap - tol
        if rho[i + 1] >= edge:
            flags[i + 1] = 1
    return rho, w, flags, err


def _zero_vie_numpy(lam, gbar, gpdf, init_occ, init_dep, dt, cap, tol):
    """Vectorized-inner-sum variant of ``_zero_vie_loop``."""
    n1 = lam.shape[0]
    rho = np.zeros(n1)
    w = np.zeros(n1)
    wlam = np.zeros(n1)
    flags = np.zeros(n1, np.uint8)
    gbar_r = gbar[::-1].copy()
    g_r = gpdf[::-1].copy()
    err = -1

    rho[0] = min(max(init_occ[0], 0.0), cap)
    flags[0] = 1 if rho[0] >= cap - tol else 0
    if flags[0] == 0:
        w[0] = 1.0
    elif lam[0] <= 0.0:
        w[0] = 1.0
    else:
        w[0] = min(max(init_dep[0] / lam[0], 0.0), 1.0)

    for i in range(n1 - 1):
        if flags[i] == 0:
            w[i + 1] = 1.0
        else:
            di = init_dep[i] + np.dot(wlam[1 : i + 1], g_r[n1 - i : n1]) * dt
            if lam[i] <= 0.0:
                w[i + 1] = 1.0
            else:
                w[i + 1] = min(max(di / lam[i], 0.0), 1.0)
        wlam[i + 1] = w[i + 1] * lam[i + 1]
        acc = init_occ[i + 1] + np.dot(wlam[1 : i + 2], gbar_r[n1 - i - 1 : n1]) * dt
        if not math.isfinite(acc):
            err = i + 1
            break
        rho[i + 1] = min(max(acc, 0.0), cap)
        edge = cap - 2.0 * tol if flags[i] == 1 else cap - tol
        if rho[i + 1] >= edge:
            flags[i + 1] = 1
    return rho, w, flags, err


# ----------------------------------------------------------------------
# finite-buffer VIE recursion
# ----------------------------------------------------------------------


def _finite_vie_loop(lam, gbar, gpdf, init_occ, init_dep, init_buf, dt, cap, beta, tol):
    """Explicit recursion for the coupled system (rho, eta, d, z1, z2, z3).

    State at ``t_i`` selects the auxiliary values at ``t_{i+1}``:

    * state 1: (1, 0, 1)
    * state 2 with arrivals exceeding departures: (0, 1, 1), so the
      buffer starts filling (the state-3 law; keeping (1, 0, 1) here
      would freeze the buffer at zero forever)
    * state 2 otherwise: (1, 0, 1)
    * state 2 with ``beta = 0``: the merged boundary law
      (0, min(lam/d, 1), min(d/lam, 1)), which makes the accepted inflow
      ``min(lam, d)`` and recovers the zero-buffer acceptance exactly
    * state 3: (0, 1, 1)
    * state 4: (0, 1, min(d/lambda, 1)); points where departures exceed
      arrivals are flagged in ``clamped``.

    In states 3/4 with the occupancy strictly below the boundary band
    (a transient possible under oscillating service kernels), arrivals
    are admitted directly to service (z1 = 1): promotions cannot exceed
    the departure rate, so they alone cannot restore the complementarity
    between free capacity and buffer content.

    The departure-rate update couples d to itself through the convolution
    term at zero lag; to keep every step explicit the self-term reads the
    already-computed value one step back (an O(dt^2) substitution; the
    remaining history uses exact values).  Returns the first nonfinite
    grid index in the last slot (-1 when clean).
    """
    n1 = lam.shape[0]
    rho = np.zeros(n1)
    eta = np.zeros(n1)
    d = np.zeros(n1)
    z1 = np.zeros(n1)
    z2 = np.zeros(n1)
    z3 = np.zeros(n1)
    states = np.zeros(n1, np.int8)
    clamped = np.zeros(n1, np.uint8)
    inflow = np.zeros(n1)
    err = -1

    r = init_occ[0]
    if r > cap:
        r = cap
    if r < 0.0:
        r = 0.0
    rho[0] = r
    e = init_buf
    if e > beta:
        e = beta
    if e < 0.0:
        e = 0.0
    eta[0] = e
    d[0] = init_dep[0]
    states[0] = _classify_scalar(rho[0], eta[0], cap, beta, tol)

    for i in range(n1 - 1):
        s = states[i]
        if s == 1:
            a1 = 1.0
            a2 = 0.0
            a3 = 1.0
        elif s == 2:
            if beta <= 0.0:
                a1 = 0.0
                if d[i] <= 0.0:
                    a2 = 1.0
                else:
                    a2 = lam[i] / d[i]
                    if a2 > 1.0:
                        a2 = 1.0
                if lam[i] <= 0.0:
                    a3 = 1.0
                else:
                    a3 = d[i] / lam[i]
                    if a3 > 1.0:
                        a3 = 1.0
                    if a3 < 0.0:
                        a3 = 0.0
            elif lam[i] > d[i]:
                a1 = 0.0
                a2 = 1.0
                a3 = 1.0
            else:
                a1 = 1.0
                a2 = 0.0
                a3 = 1.0
        elif s == 3:
            a1 = 0.0
            a2 = 1.0
            a3 = 1.0
        else:
            a1 = 0.0
            a2 = 1.0
            if lam[i] <= 0.0:
                a3 = 1.0
            else:
                a3 = d[i] / lam[i]
                if a3 > 1.0:
                    a3 = 1.0
                if a3 < 0.0:
                    a3 = 0.0
                if d[i] > lam[i]:
                    clamped[i + 1] = 1
        # free capacity admits arrivals directly even while buffer mass
        # remains: promotions are capped at the departure rate and cannot
        # close an occupancy gap, so without this the gap left by a
        # transient (oscillating service kernels) would persist
        if s >= 3 and rho[i] < cap - 2.0 * tol:
            a1 = 1.0
        if i == 0:
            z1[0] = a1
            z2[0] = a2
            z3[0] = a3
        z1[i + 1] = a1
        z2[i + 1] = a2
        z3[i + 1] = a3

        # self-coupling term at zero lag reads the latest computed d
        acc_d = init_dep[i + 1] + (a1 * lam[i + 1] + a2 * d[i]) * gpdf[0] * dt
        for j in range(1, i + 1):
            acc_d += inflow[j] * gpdf[i + 1 - j] * dt
        if not np.isfinite(acc_d):
            err = i + 1
            break
        d[i + 1] = acc_d
        inflow[i + 1] = a1 * lam[i + 1] + a2 * acc_d

        acc_r = init_occ[i + 1]
        for j in range(1, i + 2):
            acc_r += inflow[j] * gbar[i + 1 - j] * dt
        e = eta[i] + ((1.0 - a1) * a3 * lam[i + 1] - a2 * acc_d) * dt
        if not (np.isfinite(acc_r) and np.isfinite(e)):
            err = i + 1
            break
        if acc_r > cap:
            acc_r = cap
        if acc_r < 0.0:
            acc_r = 0.0
        rho[i + 1] = acc_r
        if e > beta:
            e = beta
        if e < 0.0:
            e = 0.0
        eta[i + 1] = e
        states[i + 1] = _classify_hyst(rho[i + 1], eta[i + 1], cap, beta, tol, states[i])
    return rho, eta, d, z1, z2, z3, states, clamped, err


def _finite_vie_numpy(lam, gbar, gpdf, init_occ, init_dep, init_buf, dt, cap, beta, tol):
    """Vectorized-inner-sum variant of ``_finite_vie_loop``."""
    n1 = lam.shape[0]
    rho = np.zeros(n1)
    eta = np.zeros(n1)
    d = np.zeros(n1)
    z1 = np.zeros(n1)
    z2 = np.zeros(n1)
    z3 = np.zeros(n1)
    states = np.zeros(n1, np.int8)
    clamped = np.zeros(n1, np.uint8)
    inflow = np.zeros(n1)
    gbar_r = gbar[::-1].copy()
    g_r = gpdf[::-1].copy()
    err = -1

    rho[0] = min(max(init_occ[0], 0.0), cap)
    eta[0] = min(max(init_buf, 0.0), beta)
    d[0] = init_dep[0]
    states[0] = _classify_scalar(rho[0], eta[0], cap, beta, tol)

    for i in range(n1 - 1):
        s = states[i]
        if s == 1:
            a1, a2, a3 = 1.0, 0.0, 1.0
        elif s == 2:
            if beta <= 0.0:
                a1 = 0.0
                a2 = 1.0 if d[i] <= 0.0 else min(lam[i] / d[i], 1.0)
                a3 = 1.0 if lam[i] <= 0.0 else min(max(d[i] / lam[i], 0.0), 1.0)
            elif lam[i] > d[i]:
                a1, a2, a3 = 0.0, 1.0, 1.0
            else:
                a1, a2, a3 = 1.0, 0.0, 1.0
        elif s == 3:
            a1, a2, a3 = 0.0, 1.0, 1.0
        else:
            a1, a2 = 0.0, 1.0
            a3 = 1.0 if lam[i] <= 0.0 else min(max(d[i] / lam[i], 0.0), 1.0)
            if lam[i] > 0.0 and d[i] > lam[i]:
                clamped[i + 1] = 1
        if s >= 3 and rho[i] < cap - 2.0 * tol:
            a1 = 1.0  # free capacity admits arrivals (see loop variant)
        if i == 0:
            z1[0], z2[0], z3[0] = a1, a2, a3
        z1[i + 1], z2[i + 1], z3[i + 1] = a1, a2, a3

        acc_d = (
            init_dep[i + 1]
            + (a1 * lam[i + 1] + a2 * d[i]) * gpdf[0] * dt
            + np.dot(inflow[1 : i + 1], g_r[n1 - 1 - i : n1 - 1]) * dt
        )
        if not math.isfinite(acc_d):
            err = i + 1
            break
        d[i + 1] = acc_d
        inflow[i + 1] = a1 * lam[i + 1] + a2 * acc_d

        acc_r = init_occ[i + 1] + np.dot(inflow[1 : i + 2], gbar_r[n1 - i - 1 : n1]) * dt
        e = eta[i] + ((1.0 - a1) * a3 * lam[i + 1] - a2 * acc_d) * dt
        if not (math.isfinite(acc_r) and math.isfinite(e)):
            err = i + 1
            break
        rho[i + 1] = min(max(acc_r, 0.0), cap)
        eta[i + 1] = min(max(e, 0.0), beta)
        states[i + 1] = _classify_hyst(rho[i + 1], eta[i + 1], cap, beta, tol, states[i])
    return rho, eta, d, z1, z2, z3, states, clamped, err


# ----------------------------------------------------------------------
# binary heap on a flat array (departure times)
# ----------------------------------------------------------------------


def _heap_push(heap, size, val):
    i = size
    heap[i] = val
    while i > 0:
        parent = (i - 1) >> 1
        if heap[parent] <= heap[i]:
            break
        tmp = heap[parent]
        heap[parent] = heap[i]
        heap[i] = tmp
        i = parent
    return size + 1


def _heap_pop(heap, size):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        right = left + 1
        if right < size and heap[right] < heap[left]:
            child = right
        if heap[i] <= heap[child]:
            break
        tmp = heap[i]
        heap[i] = heap[child]
        heap[child] = tmp
        i = child
    return top, size


# ----------------------------------------------------------------------
# event-driven simulation loops
# ----------------------------------------------------------------------

# event kinds in the log arrays
KIND_ARRIVAL_SERVICE = 0
KIND_ARRIVAL_BUFFER = 1
KIND_ARRIVAL_BLOCKED = 2
KIND_DEPARTURE = 3
KIND_PROMOTION = 4


def _zero_sim_loop(arrivals, services, init_resid, c_n, horizon, ev_time, ev_kind, ev_srv, ev_dep):
    """Zero-buffer sample path; returns the number of logged events.

    Arrivals are pre-sorted; one pre-drawn service duration per arrival
    is consumed only if the arrival is accepted.  Ties resolve departures
    before arrivals.  Events after the horizon are dropped.
    """
    heap = np.empty(c_n + 1, np.float64)
    hsize = 0
    for k in range(init_resid.shape[0]):
        hsize = _heap_push(heap, hsize, init_resid[k])
    n_in = init_resid.shape[0]
    dep = 0
    m = 0
    ia = 0
    na = arrivals.shape[0]
    while True:
        ta = arrivals[ia] if ia < na else INF
        td = heap[0] if hsize > 0 else INF
        if td <= ta:
            if td > horizon:
                break
            td, hsize = _heap_pop(heap, hsize)
            n_in -= 1
            dep += 1
            ev_time[m] = td
            ev_kind[m] = KIND_DEPARTURE
            ev_srv[m] = n_in
            ev_dep[m] = dep
            m += 1
        else:
            if n_in < c_n:
                n_in += 1
                hsize = _heap_push(heap, hsize, ta + services[ia])
                ev_kind[m] = KIND_ARRIVAL_SERVICE
            else:
                ev_kind[m] = KIND_ARRIVAL_BLOCKED
            ev_time[m] = ta
            ev_srv[m] = n_in
            ev_dep[m] = dep
            m += 1
            ia += 1
    return m


def _finite_sim_loop(
    arrivals,
    services,
    promo_services,
    init_resid,
    q0,
    c_n,
    b_n,
    horizon,
    ev_time,
    ev_kind,
    ev_srv,
    ev_buf,
    ev_dep,
):
    """Finite-buffer sample path; returns (events logged, promotions).

    A departure that leaves a nonempty buffer immediately promotes the
    buffer head with a fresh pre-drawn service duration, logged as a
    separate record at the same timestamp (departure before promotion
    before any arrival at that instant).
    """
    heap = np.empty(c_n + 1, np.float64)
    hsize = 0
    for k in range(init_resid.shape[0]):
        hsize = _heap_push(heap, hsize, init_resid[k])
    s = init_resid.shape[0]
    q = q0
    dep = 0
    m = 0
    ia = 0
    ip = 0
    na = arrivals.shape[0]
    while True:
        ta = arrivals[ia] if ia < na else INF
        td = heap[0] if hsize > 0 else INF
        if td <= ta:
            if td > horizon:
                break
            td, hsize = _heap_pop(heap, hsize)
            s -= 1
            dep += 1
            ev_time[m] = td
            ev_kind[m] = KIND_DEPARTURE
            ev_srv[m] = s
            ev_buf[m] = q
            ev_dep[m] = dep
            m += 1
            if q > 0:
                q -= 1
                s += 1
                hsize = _heap_push(heap, hsize, td + promo_services[ip])
                ip += 1
                ev_time[m] = td
                ev_kind[m] = KIND_PROMOTION
                ev_srv[m] = s
                ev_buf[m] = q
                ev_dep[m] = dep
                m += 1
        else:
            if s < c_n:
                s += 1
                hsize = _heap_push(heap, hsize, ta + services[ia])
                ev_kind[m] = KIND_ARRIVAL_SERVICE
            elif q < b_n:
                q += 1
                ev_kind[m] = KIND_ARRIVAL_BUFFER
            else:
                ev_kind[m] = KIND_ARRIVAL_BLOCKED
            ev_time[m] = ta
            ev_srv[m] = s
            ev_buf[m] = q
            ev_dep[m] = dep
            m += 1
            ia += 1
    return m, ip


# ----------------------------------------------------------------------
# backend wiring
# ----------------------------------------------------------------------

if NUMBA_ENABLED:
    _heap_push = jit_kernel(_heap_push)
    _heap_pop = jit_kernel(_heap_pop)
    _classify_scalar = jit_kernel(_classify_scalar)
    _classify_hyst = jit_kernel(_classify_hyst)
    _zero_vie_loop = jit_kernel(_zero_vie_loop)
    _finite_vie_loop = jit_kernel(_finite_vie_loop)
    _zero_sim_loop = jit_kernel(_zero_sim_loop)
    _finite_sim_loop = jit_kernel(_finite_sim_loop)
    solve_zero_vie = _zero_vie_loop
    solve_finite_vie = _finite_vie_loop
else:
    solve_zero_vie = _zero_vie_numpy
    solve_finite_vie = _finite_vie_numpy

zero_sim = _zero_sim_loop
finite_sim = _finite_sim_loop
classify_scalar = _classify_scalar


def warm_up():
    """Trigger JIT compilation on tiny inputs (no-op on the numpy path)."""
    lam = np.array([1.0, 1.0, 1.0])
    ones = np.ones(3)
    zeros = np.zeros(3)
    solve_zero_vie(lam, ones, ones, zeros, zeros, 0.1, 1.0, 1e-3)
    solve_finite_vie(lam, ones, ones, zeros, zeros, 0.0, 0.1, 1.0, 0.5, 1e-3)
    arr = np.array([0.05, 0.15])
    serv = np.array([1.0, 1.0])
    buf_f = np.empty(8, np.float64)
    buf_i1 = np.empty(8, np.int8)
    buf_c = np.empty(8, np.int64)
    zero_sim(arr, serv, np.empty(0), 1, 1.0, buf_f, buf_i1, buf_c, buf_c.copy())
    finite_sim(
        arr, serv, serv.copy(), np.empty(0), 0, 1, 1, 1.0,
        buf_f.copy(), buf_i1.copy(), buf_c.copy(), buf_c.copy(), buf_c.copy(),
    )
