"""Numba-jitted kernels. Mirrors _kernels_numpy (same signatures, same constants).

Loop-style implementations of the action minimizer and Hamiltonian flow;
the Newton step uses a block-Thomas factorization with per-block Cholesky
(blocks are d x d with d <= 2, Schur pivots certify positive definiteness).
cost_block parallelizes over matrix entries; every entry is written
independently so results are deterministic under any thread schedule.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

TWO_PI = 2.0 * np.pi

ARMIJO_C = 1e-4
BACKTRACK_SHRINK = 0.5
MAX_BACKTRACKS = 40
BUMP_AMPLITUDES = (0.25, -0.25, 0.5, -0.5)
DAMPING_LADDER = (0.0, 1e-4, 1e-2, 1.0, 1e2)


@njit(cache=True)
def _pot_value_one(x, t, amps, waves, omegas, phases):
    total = 0.0
    for m in range(amps.shape[0]):
        ph = -omegas[m] * t - phases[m]
        for a in range(x.shape[0]):
            ph += waves[m, a] * x[a]
        total += amps[m] * math.cos(TWO_PI * ph)
    return total


@njit(cache=True)
def _pot_grad_one(x, t, amps, waves, omegas, phases, out):
    for a in range(x.shape[0]):
        out[a] = 0.0
    for m in range(amps.shape[0]):
        ph = -omegas[m] * t - phases[m]
        for a in range(x.shape[0]):
            ph += waves[m, a] * x[a]
        s = -TWO_PI * amps[m] * math.sin(TWO_PI * ph)
        for a in range(x.shape[0]):
            out[a] += s * waves[m, a]


@njit(cache=True)
def _pot_hess_one(x, t, amps, waves, omegas, phases, out):
    d = x.shape[0]
    for a in range(d):
        for b in range(d):
            out[a, b] = 0.0
    for m in range(amps.shape[0]):
        ph = -omegas[m] * t - phases[m]
        for a in range(d):
            ph += waves[m, a] * x[a]
        c = -(TWO_PI ** 2) * amps[m] * math.cos(TWO_PI * ph)
        for a in range(d):
            for b in range(d):
                out[a, b] += c * waves[m, a] * waves[m, b]


@njit(cache=True)
def _action_value(z, h, t0, A, amps, waves, omegas, phases):
    n_seg = z.shape[0] - 1
    d = z.shape[1]
    total = 0.0
    mid = np.empty(d)
    v = np.empty(d)
    for k in range(n_seg):
        tau = t0 + (k + 0.5) * h
        for a in range(d):
            mid[a] = 0.5 * (z[k, a] + z[k + 1, a])
            v[a] = (z[k + 1, a] - z[k, a]) / h
        kin = 0.0
        for a in range(d):
            for b in range(d):
                kin += 0.5 * v[a] * A[a, b] * v[b]
        total += h * (kin - _pot_value_one(mid, tau, amps, waves, omegas, phases))
    return total


@njit(cache=True)
def _action_value_grad(z, h, t0, A, amps, waves, omegas, phases, grad):
    n_seg = z.shape[0] - 1
    d = z.shape[1]
    total = 0.0
    mid = np.empty(d)
    v = np.empty(d)
    gV = np.empty(d)
    Av = np.empty((n_seg, d))
    gVs = np.empty((n_seg, d))
    for k in range(n_seg):
        tau = t0 + (k + 0.5) * h
        for a in range(d):
            mid[a] = 0.5 * (z[k, a] + z[k + 1, a])
            v[a] = (z[k + 1, a] - z[k, a]) / h
        kin = 0.0
        for a in range(d):
            acc = 0.0
            for b in range(d):
                acc += A[a, b] * v[b]
            Av[k, a] = acc
            kin += 0.5 * v[a] * acc
        _pot_grad_one(mid, tau, amps, waves, omegas, phases, gV)
        for a in range(d):
            gVs[k, a] = gV[a]
        total += h * (kin - _pot_value_one(mid, tau, amps, waves, omegas, phases))
    for k in range(1, n_seg):
        for a in range(d):
            grad[k - 1, a] = (Av[k - 1, a] - Av[k, a]
                              - 0.5 * h * (gVs[k - 1, a] + gVs[k, a]))
    return total


@njit(cache=True)
def _chol_small(P, L):
    """Cholesky of a d x d symmetric block. Returns False if not PD."""
    d = P.shape[0]
    for i in range(d):
        for j in range(d):
            L[i, j] = 0.0
    for i in range(d):
        s = P[i, i]
        for k in range(i):
            s -= L[i, k] * L[i, k]
        if s <= 0.0 or not np.isfinite(s):
            return False
        L[i, i] = math.sqrt(s)
        for j in range(i + 1, d):
            t = P[j, i]
            for k in range(i):
                t -= L[j, k] * L[i, k]
            L[j, i] = t / L[i, i]
    return True


@njit(cache=True)
def _chol_solve_inplace(L, b):
    """Solve (L L^T) x = b for one rhs vector, overwriting b."""
    d = L.shape[0]
    for i in range(d):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * b[k]
        b[i] = s / L[i, i]
    for i in range(d - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, d):
            s -= L[k, i] * b[k]
        b[i] = s / L[i, i]


@njit(cache=True)
def _block_thomas(diag, off, rhs, damping, sol):
    """Solve the symmetric block tridiagonal system; False when not PD."""
    n = diag.shape[0]
    d = diag.shape[1]
    G = np.empty((n, d, d))
    U = np.empty((n, d))
    S = np.empty((d, d))
    L = np.empty((d, d))
    col = np.empty(d)
    for k in range(n):
        for a in range(d):
            for b in range(d):
                S[a, b] = diag[k, a, b]
            S[a, a] += damping
        if k > 0:
            # S -= off[k-1]^T G[k-1]
            for a in range(d):
                for b in range(d):
                    acc = 0.0
                    for c in range(d):
                        acc += off[k - 1, c, a] * G[k - 1, c, b]
                    S[a, b] -= acc
        if not _chol_small(S, L):
            return False
        # U[k] = S^{-1} (rhs[k] - off[k-1]^T U[k-1])
        for a in range(d):
            s = rhs[k, a]
            if k > 0:
                for c in range(d):
                    s -= off[k - 1, c, a] * U[k - 1, c]
            col[a] = s
        _chol_solve_inplace(L, col)
        for a in range(d):
            U[k, a] = col[a]
        # G[k] = S^{-1} off[k]
        if k < n - 1:
            for b in range(d):
                for a in range(d):
                    col[a] = off[k, a, b]
                _chol_solve_inplace(L, col)
                for a in range(d):
                    G[k, a, b] = col[a]
    for a in range(d):
        sol[n - 1, a] = U[n - 1, a]
    for k in range(n - 2, -1, -1):
        for a in range(d):
            s = U[k, a]
            for b in range(d):
                s -= G[k, a, b] * sol[k + 1, b]
            sol[k, a] = s
    return True


@njit(cache=True)
def _newton_blocks(z, h, t0, A, amps, waves, omegas, phases, diag, off):
    n_seg = z.shape[0] - 1
    d = z.shape[1]
    mid = np.empty(d)
    Vxx = np.empty((n_seg, d, d))
    H = np.empty((d, d))
    for k in range(n_seg):
        tau = t0 + (k + 0.5) * h
        for a in range(d):
            mid[a] = 0.5 * (z[k, a] + z[k + 1, a])
        _pot_hess_one(mid, tau, amps, waves, omegas, phases, H)
        for a in range(d):
            for b in range(d):
                Vxx[k, a, b] = H[a, b]
    for k in range(1, n_seg):
        for a in range(d):
            for b in range(d):
                diag[k - 1, a, b] = (2.0 * A[a, b] / h
                                     - 0.25 * h * (Vxx[k - 1, a, b] + Vxx[k, a, b]))
    for k in range(1, n_seg - 1):
        for a in range(d):
            for b in range(d):
                off[k - 1, a, b] = -A[a, b] / h - 0.25 * h * Vxx[k, a, b]


@njit(cache=True)
def _grad_supnorm(grad):
    worst = 0.0
    for k in range(grad.shape[0]):
        s = 0.0
        for a in range(grad.shape[1]):
            s += grad[k, a] * grad[k, a]
        s = math.sqrt(s)
        if s > worst:
            worst = s
    return worst


@njit(cache=True)
def _backtrack(z, direction, scale, val, slope, h, t0, A,
               amps, waves, omegas, phases, trial):
    """Armijo search along scale*direction; returns (value, alpha), trial holds z+step."""
    alpha = 1.0
    n = z.shape[0]
    d = z.shape[1]
    for _ in range(MAX_BACKTRACKS):
        for k in range(n):
            for a in range(d):
                trial[k, a] = z[k, a]
        for k in range(1, n - 1):
            for a in range(d):
                trial[k, a] += alpha * scale * direction[k - 1, a]
        tval = _action_value(trial, h, t0, A, amps, waves, omegas, phases)
        if tval <= val + ARMIJO_C * alpha * scale * slope:
            return tval, alpha
        alpha *= BACKTRACK_SHRINK
    return val, 0.0


@njit(cache=True)
def _solve_bvp_inplace(z, h, t0, A, amps, waves, omegas, phases,
                       descent_max, newton_max, gtol, newton_switch, lam_max):
    n = z.shape[0]
    d = z.shape[1]
    if n <= 2:
        val = _action_value(z, h, t0, A, amps, waves, omegas, phases)
        return val, 0.0, True
    n_off = n - 3
    if n_off < 0:
        n_off = 0
    grad = np.empty((n - 2, d))
    direction = np.empty((n - 2, d))
    trial = np.empty((n, d))
    diag = np.empty((n - 2, d, d))
    off = np.empty((n_off, d, d))
    sol = np.empty((n - 2, d))
    val = _action_value_grad(z, h, t0, A, amps, waves, omegas, phases, grad)
    gnorm = _grad_supnorm(grad)
    step = 0.5 * h / lam_max
    it = 0
    switch = gtol if gtol > newton_switch else newton_switch
    while gnorm > switch and it < descent_max:
        slope = 0.0
        for k in range(n - 2):
            for a in range(d):
                direction[k, a] = -grad[k, a]
                slope -= grad[k, a] * grad[k, a]
        vnew, alpha = _backtrack(z, direction, step, val, slope, h, t0, A,
                                 amps, waves, omegas, phases, trial)
        if alpha == 0.0:
            break
        for k in range(n):
            for a in range(d):
                z[k, a] = trial[k, a]
        cap = 10.0 * h / lam_max
        step = 2.0 * step * alpha
        if step > cap:
            step = cap
        val = _action_value_grad(z, h, t0, A, amps, waves, omegas, phases, grad)
        gnorm = _grad_supnorm(grad)
        it += 1
    base = 0.0
    for a in range(d):
        base += A[a, a]
    base = base / d / h
    for _ in range(newton_max):
        if gnorm <= gtol:
            break
        _newton_blocks(z, h, t0, A, amps, waves, omegas, phases, diag, off)
        moved = False
        for li in range(len(DAMPING_LADDER)):
            lam = DAMPING_LADDER[li]
            for k in range(n - 2):
                for a in range(d):
                    sol[k, a] = -grad[k, a]
            if not _block_thomas(diag, off, sol, lam * base, direction):
                continue
            slope = 0.0
            for k in range(n - 2):
                for a in range(d):
                    slope += grad[k, a] * direction[k, a]
            if slope >= 0.0:
                continue
            vnew, alpha = _backtrack(z, direction, 1.0, val, slope, h, t0, A,
                                     amps, waves, omegas, phases, trial)
            if alpha > 0.0:
                for k in range(n):
                    for a in range(d):
                        z[k, a] = trial[k, a]
                val = vnew
                moved = True
                break
        if not moved:
            slope = 0.0
            for k in range(n - 2):
                for a in range(d):
                    direction[k, a] = -grad[k, a]
                    slope -= grad[k, a] * grad[k, a]
            vnew, alpha = _backtrack(z, direction, step, val, slope, h, t0, A,
                                     amps, waves, omegas, phases, trial)
            if alpha == 0.0:
                break
            for k in range(n):
                for a in range(d):
                    z[k, a] = trial[k, a]
            val = vnew
        val = _action_value_grad(z, h, t0, A, amps, waves, omegas, phases, grad)
        gnorm = _grad_supnorm(grad)
    return val, gnorm, gnorm <= gtol


@njit(cache=True)
def _bvp_best_impl(x, y, s, t, N, A, amps, waves, omegas, phases, windings,
                   descent_max, newton_max, gtol, newton_switch,
                   lam_min, lam_max, vmax, z_best):
    d = x.shape[0]
    h = (t - s) / N
    duration = t - s
    K = windings.shape[0]
    # stable insertion sort of winding indices by lift length
    order = np.empty(K, dtype=np.int64)
    norms = np.empty(K)
    for i in range(K):
        order[i] = i
        acc = 0.0
        for a in range(d):
            dd = y[a] + windings[i, a] - x[a]
            acc += dd * dd
        norms[i] = acc
    for i in range(1, K):
        key = norms[order[i]]
        idx = order[i]
        j = i - 1
        while j >= 0 and norms[order[j]] > key:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = idx
    have_pot = amps.shape[0] > 0
    n_starts = 1 + len(BUMP_AMPLITUDES) if have_pot else 1
    z = np.empty((N + 1, d))
    best_val = np.inf
    best_wi = -1
    best_g = np.inf
    best_conv = False
    fb_val = np.inf
    fb_wi = -1
    fb_g = np.inf
    have_fb = False
    for oi in range(K):
        wi = order[oi]
        acc = 0.0
        for a in range(d):
            dd = y[a] + windings[wi, a] - x[a]
            acc += dd * dd
        lower = 0.5 * lam_min * acc / duration - vmax * duration
        if best_conv and lower > best_val:
            continue
        for si in range(n_starts):
            for k in range(N + 1):
                frac = k / N
                bump = 0.0
                if si > 0:
                    bump = BUMP_AMPLITUDES[si - 1] * math.sin(math.pi * k / N)
                for a in range(d):
                    z[k, a] = x[a] + frac * (y[a] + windings[wi, a] - x[a]) + bump
            val, gnorm, conv = _solve_bvp_inplace(
                z, h, s, A, amps, waves, omegas, phases,
                descent_max, newton_max, gtol, newton_switch, lam_max)
            if not np.isfinite(val):
                continue
            if not conv:
                if not best_conv and val < fb_val:
                    fb_val = val
                    fb_wi = wi
                    fb_g = gnorm
                    have_fb = True
                    for k in range(N + 1):
                        for a in range(d):
                            z_best[k, a] = z[k, a]
                continue
            if (not best_conv or val < best_val
                    or (val == best_val and wi < best_wi)):
                best_val = val
                best_wi = wi
                best_g = gnorm
                best_conv = True
                for k in range(N + 1):
                    for a in range(d):
                        z_best[k, a] = z[k, a]
    if best_conv:
        return best_val, best_wi, best_g, True
    if have_fb:
        return fb_val, fb_wi, fb_g, False
    return np.inf, -1, np.inf, False


def bvp_best(x, y, s, t, N, A, Ainv, amps, waves, omegas, phases, windings,
             descent_max, newton_max, gtol, newton_switch,
             lam_min, lam_max, vmax):
    """Best BVP over winding classes; see _kernels_numpy.bvp_best."""
    z_best = np.empty((N + 1, x.shape[0]))
    val, wi, gnorm, conv = _bvp_best_impl(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        float(s), float(t), int(N), np.ascontiguousarray(A, dtype=np.float64),
        amps, waves, omegas, phases,
        np.ascontiguousarray(windings, dtype=np.float64),
        int(descent_max), int(newton_max), float(gtol), float(newton_switch),
        float(lam_min), float(lam_max), float(vmax), z_best)
    if wi < 0:
        return val, None, wi, gnorm, conv
    return val, z_best, int(wi), gnorm, bool(conv)


@njit(cache=True, parallel=True)
def _cost_block_impl(sources, targets, s, t, N, A, amps, waves, omegas,
                     phases, windings, descent_max, newton_max, gtol,
                     newton_switch, lam_min, lam_max, vmax,
                     values, conv, gnorms):
    n = sources.shape[0]
    m = targets.shape[0]
    d = sources.shape[1]
    for pair in prange(n * m):
        i = pair // m
        j = pair % m
        z_best = np.empty((N + 1, d))
        val, wi, gn, ok = _bvp_best_impl(
            sources[i], targets[j], s, t, N, A, amps, waves, omegas,
            phases, windings, descent_max, newton_max, gtol,
            newton_switch, lam_min, lam_max, vmax, z_best)
        values[i, j] = val
        conv[i, j] = 1 if ok else 0
        gnorms[i, j] = gn


def cost_block(sources, targets, s, t, N, A, Ainv, amps, waves, omegas,
               phases, windings, descent_max, newton_max, gtol,
               newton_switch, lam_min, lam_max, vmax):
    """Cost matrix block, parallel over entries; see _kernels_numpy.cost_block."""
    sources = np.ascontiguousarray(sources, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    n, m = sources.shape[0], targets.shape[0]
    values = np.empty((n, m))
    conv = np.zeros((n, m), dtype=np.uint8)
    gnorms = np.empty((n, m))
    _cost_block_impl(sources, targets, float(s), float(t), int(N),
                     np.ascontiguousarray(A, dtype=np.float64),
                     amps, waves, omegas, phases,
                     np.ascontiguousarray(windings, dtype=np.float64),
                     int(descent_max), int(newton_max), float(gtol),
                     float(newton_switch), float(lam_min), float(lam_max),
                     float(vmax), values, conv, gnorms)
    return values, conv, gnorms


@njit(cache=True)
def _rk4_impl(xs, ps, t0, t1, nsteps, Ainv, amps, waves, omegas, phases):
    nb = xs.shape[0]
    d = xs.shape[1]
    dt = (t1 - t0) / nsteps
    gV = np.empty(d)
    k1x = np.empty(d)
    k1p = np.empty(d)
    k2x = np.empty(d)
    k2p = np.empty(d)
    k3x = np.empty(d)
    k3p = np.empty(d)
    k4x = np.empty(d)
    k4p = np.empty(d)
    xt = np.empty(d)
    pt = np.empty(d)
    for i in range(nb):
        t = t0
        for _ in range(nsteps):
            for a in range(d):
                acc = 0.0
                for b in range(d):
                    acc += Ainv[a, b] * ps[i, b]
                k1x[a] = acc
            _pot_grad_one(xs[i], t, amps, waves, omegas, phases, gV)
            for a in range(d):
                k1p[a] = -gV[a]
            for a in range(d):
                xt[a] = xs[i, a] + 0.5 * dt * k1x[a]
                pt[a] = ps[i, a] + 0.5 * dt * k1p[a]
            for a in range(d):
                acc = 0.0
                for b in range(d):
                    acc += Ainv[a, b] * pt[b]
                k2x[a] = acc
            _pot_grad_one(xt, t + 0.5 * dt, amps, waves, omegas, phases, gV)
            for a in range(d):
                k2p[a] = -gV[a]
            for a in range(d):
                xt[a] = xs[i, a] + 0.5 * dt * k2x[a]
                pt[a] = ps[i, a] + 0.5 * dt * k2p[a]
            for a in range(d):
                acc = 0.0
                for b in range(d):
                    acc += Ainv[a, b] * pt[b]
                k3x[a] = acc
            _pot_grad_one(xt, t + 0.5 * dt, amps, waves, omegas, phases, gV)
            for a in range(d):
                k3p[a] = -gV[a]
            for a in range(d):
                xt[a] = xs[i, a] + dt * k3x[a]
                pt[a] = ps[i, a] + dt * k3p[a]
            for a in range(d):
                acc = 0.0
                for b in range(d):
                    acc += Ainv[a, b] * pt[b]
                k4x[a] = acc
            _pot_grad_one(xt, t + dt, amps, waves, omegas, phases, gV)
            for a in range(d):
                k4p[a] = -gV[a]
            for a in range(d):
                xs[i, a] += dt / 6.0 * (k1x[a] + 2.0 * k2x[a] + 2.0 * k3x[a] + k4x[a])
                ps[i, a] += dt / 6.0 * (k1p[a] + 2.0 * k2p[a] + 2.0 * k3p[a] + k4p[a])
            t += dt
    return xs, ps


def rk4_flow(xs, ps, t0, t1, nsteps, Ainv, amps, waves, omegas, phases):
    """RK4 Hamiltonian flow, batched over rows; see _kernels_numpy.rk4_flow."""
    xs = np.array(xs, dtype=np.float64)
    ps = np.array(ps, dtype=np.float64)
    if nsteps <= 0 or t1 == t0:
        return xs, ps
    return _rk4_impl(xs, ps, float(t0), float(t1), int(nsteps),
                     np.ascontiguousarray(Ainv, dtype=np.float64),
                     amps, waves, omegas, phases)


# expose the scalar helpers with numpy-compatible wrappers for parity tests
def action_value(z, h, t0, A, amps, waves, omegas, phases):
    return float(_action_value(np.ascontiguousarray(z, dtype=np.float64),
                               float(h), float(t0),
                               np.ascontiguousarray(A, dtype=np.float64),
                               amps, waves, omegas, phases))


def action_value_grad(z, h, t0, A, amps, waves, omegas, phases):
    z = np.ascontiguousarray(z, dtype=np.float64)
    grad = np.empty((z.shape[0] - 2, z.shape[1]))
    val = _action_value_grad(z, float(h), float(t0),
                             np.ascontiguousarray(A, dtype=np.float64),
                             amps, waves, omegas, phases, grad)
    return float(val), grad
