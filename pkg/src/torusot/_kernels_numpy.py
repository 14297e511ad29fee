"""Pure-numpy reference kernels.

Same call signatures and constants as the numba twins in _kernels_numba;
array arguments are raw ndarrays (no dataclasses) so both backends stay
interchangeable.  Potentials arrive as cosine-mode arrays
(amps, waves, omegas, phases); curves as lifted knots z of shape
(N+1, d) in the universal cover.
"""
from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi

# shared solver constants (keep in sync with _kernels_numba)
ARMIJO_C = 1e-4
BACKTRACK_SHRINK = 0.5
MAX_BACKTRACKS = 40
BUMP_AMPLITUDES = (0.25, -0.25, 0.5, -0.5)
DAMPING_LADDER = (0.0, 1e-4, 1e-2, 1.0, 1e2)


def pot_value(x, t, amps, waves, omegas, phases):
    if amps.size == 0:
        return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(t)))
    phase = np.asarray(x) @ waves.T - np.multiply.outer(np.asarray(t), omegas) - phases
    return np.cos(TWO_PI * phase) @ amps


def pot_grad(x, t, amps, waves, omegas, phases):
    x = np.asarray(x)
    if amps.size == 0:
        return np.zeros(x.shape)
    phase = x @ waves.T - np.multiply.outer(np.asarray(t), omegas) - phases
    s = -TWO_PI * amps * np.sin(TWO_PI * phase)
    return s @ waves


def pot_hess(x, t, amps, waves, omegas, phases):
    x = np.asarray(x)
    if amps.size == 0:
        return np.zeros(x.shape + (x.shape[-1],))
    phase = x @ waves.T - np.multiply.outer(np.asarray(t), omegas) - phases
    c = -(TWO_PI ** 2) * amps * np.cos(TWO_PI * phase)
    return np.einsum("...m,ma,mb->...ab", c, waves, waves)


def action_value(z, h, t0, A, amps, waves, omegas, phases):
    """Midpoint-rule action of the knots z: sum_k h*L(mid_k, v_k, tau_k)."""
    v = np.diff(z, axis=0) / h
    mid = 0.5 * (z[:-1] + z[1:])
    tau = t0 + (np.arange(z.shape[0] - 1) + 0.5) * h
    kin = 0.5 * np.einsum("ka,ab,kb->k", v, A, v)
    return float(h * np.sum(kin - pot_value(mid, tau, amps, waves, omegas, phases)))


def action_value_grad(z, h, t0, A, amps, waves, omegas, phases):
    """Action and its gradient with respect to the interior knots z[1:-1]."""
    n_seg = z.shape[0] - 1
    v = np.diff(z, axis=0) / h
    mid = 0.5 * (z[:-1] + z[1:])
    tau = t0 + (np.arange(n_seg) + 0.5) * h
    Av = v @ A.T
    gV = pot_grad(mid, tau, amps, waves, omegas, phases)
    kin = 0.5 * np.einsum("ka,ka->k", v, Av)
    val = float(h * np.sum(kin - pot_value(mid, tau, amps, waves, omegas, phases)))
    # d/dz_k: A(v_{k-1} - v_k) - (h/2)(gV_{k-1} + gV_k), interior k only
    grad = (Av[:-1] - Av[1:]) - 0.5 * h * (gV[:-1] + gV[1:])
    return val, grad


def el_residual(z, h, t0, A, amps, waves, omegas, phases):
    """Per-knot Euclidean norm of the discrete Euler-Lagrange residual."""
    _, g = action_value_grad(z, h, t0, A, amps, waves, omegas, phases)
    return np.linalg.norm(g, axis=1)


def _newton_blocks(z, h, t0, A, amps, waves, omegas, phases):
    n_seg = z.shape[0] - 1
    d = z.shape[1]
    mid = 0.5 * (z[:-1] + z[1:])
    tau = t0 + (np.arange(n_seg) + 0.5) * h
    Vxx = pot_hess(mid, tau, amps, waves, omegas, phases)
    eye = np.eye(d)
    diag = np.empty((n_seg - 1, d, d))
    off = np.empty((n_seg - 2, d, d)) if n_seg > 2 else np.zeros((0, d, d))
    for k in range(1, n_seg):
        diag[k - 1] = 2.0 * A / h - 0.25 * h * (Vxx[k - 1] + Vxx[k])
    for k in range(1, n_seg - 1):
        off[k - 1] = -A / h - 0.25 * h * Vxx[k]
    return diag, off, eye


def _solve_block_tridiag(diag, off, rhs, damping):
    """Solve the symmetric block-tridiagonal system via dense assembly.

    Returns (solution, positive_definite).  Dense is fine here: systems stay
    below ~260 unknowns at desk scale.
    """
    n, d, _ = diag.shape
    m = n * d
    H = np.zeros((m, m))
    for k in range(n):
        H[k * d:(k + 1) * d, k * d:(k + 1) * d] = diag[k] + damping * np.eye(d)
    for k in range(n - 1):
        H[k * d:(k + 1) * d, (k + 1) * d:(k + 2) * d] = off[k]
        H[(k + 1) * d:(k + 2) * d, k * d:(k + 1) * d] = off[k].T
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return np.zeros(m), False
    y = np.linalg.solve(L, rhs.ravel())
    x = np.linalg.solve(L.T, y)
    return x, True


def _backtrack(z, direction, val, slope, h, t0, A, amps, waves, omegas, phases):
    """Armijo line search along direction on the interior knots."""
    alpha = 1.0
    for _ in range(MAX_BACKTRACKS):
        trial = z.copy()
        trial[1:-1] += alpha * direction
        tval = action_value(trial, h, t0, A, amps, waves, omegas, phases)
        if tval <= val + ARMIJO_C * alpha * slope:
            return trial, tval, alpha
        alpha *= BACKTRACK_SHRINK
    return z, val, 0.0


def solve_bvp(z, h, t0, A, Ainv, amps, waves, omegas, phases,
              descent_max, newton_max, gtol, newton_switch, lam_max):
    """Minimize the discrete action over interior knots.

    Gradient descent with backtracking from the given curve until the
    gradient sup-norm falls under newton_switch (or descent_max iterations),
    then Newton polish on the discrete Euler-Lagrange system with a
    Levenberg damping ladder.  Returns (z, value, grad_norm, converged).
    """
    z = z.copy()
    val, g = action_value_grad(z, h, t0, A, amps, waves, omegas, phases)
    gnorm = float(np.max(np.linalg.norm(g, axis=1))) if g.size else 0.0
    if z.shape[0] <= 2:
        return z, val, 0.0, True
    step = 0.5 * h / lam_max
    it = 0
    while gnorm > max(gtol, newton_switch) and it < descent_max:
        direction = -g
        slope = -float(np.sum(g * g))
        znew, vnew, alpha = _backtrack(z, step * direction, val,
                                       step * slope, h, t0, A,
                                       amps, waves, omegas, phases)
        if alpha == 0.0:
            break
        step = min(2.0 * step * alpha, 10.0 * h / lam_max)
        z, val = znew, vnew
        val, g = action_value_grad(z, h, t0, A, amps, waves, omegas, phases)
        gnorm = float(np.max(np.linalg.norm(g, axis=1)))
        it += 1
    # Newton polish
    for _ in range(newton_max):
        if gnorm <= gtol:
            break
        diag, off, _ = _newton_blocks(z, h, t0, A, amps, waves, omegas, phases)
        base = np.trace(A) / A.shape[0] / h
        moved = False
        for lam in DAMPING_LADDER:
            sol, ok = _solve_block_tridiag(diag, off, -g, lam * base)
            if not ok:
                continue
            direction = sol.reshape(g.shape)
            slope = float(np.sum(g * direction))
            if slope >= 0.0:
                continue
            znew, vnew, alpha = _backtrack(z, direction, val, slope, h, t0,
                                           A, amps, waves, omegas, phases)
            if alpha > 0.0:
                z, val = znew, vnew
                moved = True
                break
        if not moved:
            # steepest-descent rescue step
            direction = -g
            slope = -float(np.sum(g * g))
            znew, vnew, alpha = _backtrack(z, step * direction, val,
                                           step * slope, h, t0, A,
                                           amps, waves, omegas, phases)
            if alpha == 0.0:
                break
            z, val = znew, vnew
        val, g = action_value_grad(z, h, t0, A, amps, waves, omegas, phases)
        gnorm = float(np.max(np.linalg.norm(g, axis=1)))
    return z, val, gnorm, gnorm <= gtol


def _winding_order(delta, windings):
    norms = np.linalg.norm(delta[None, :] + windings, axis=1)
    return np.argsort(norms, kind="stable")


def bvp_best(x, y, s, t, N, A, Ainv, amps, waves, omegas, phases, windings,
             descent_max, newton_max, gtol, newton_switch,
             lam_min, lam_max, vmax):
    """Best action over winding classes and deterministic multistarts.

    Winding classes are processed by increasing lift length (stable order,
    so exact ties resolve to the lexicographically smallest winding) and
    pruned with the superlinearity bound
    0.5*lam_min*|delta+w|^2/(t-s) - vmax*(t-s).
    Returns (value, z, winding_index, grad_norm, converged).
    """
    d = x.shape[0]
    h = (t - s) / N
    duration = t - s
    delta = y - x
    order = _winding_order(delta, windings)
    have_pot = amps.size > 0
    best_val = np.inf
    best_z = None
    best_wi = -1
    best_g = np.inf
    best_conv = False
    fb_val = np.inf
    fb = None
    for wi in order:
        wi = int(wi)
        disp = delta + windings[wi]
        lower = 0.5 * lam_min * float(disp @ disp) / duration - vmax * duration
        if best_conv and lower > best_val:
            continue
        frac = np.arange(N + 1)[:, None] / N
        straight = x[None, :] + frac * disp[None, :]
        starts = [straight]
        if have_pot:
            shape = np.sin(np.pi * np.arange(N + 1) / N)[:, None]
            for amp in BUMP_AMPLITUDES:
                starts.append(straight + amp * shape * np.ones((1, d)))
        for z0 in starts:
            z, val, gnorm, conv = solve_bvp(
                z0, h, s, A, Ainv, amps, waves, omegas, phases,
                descent_max, newton_max, gtol, newton_switch, lam_max)
            if not np.isfinite(val):
                continue
            if not conv:
                if val < fb_val:
                    fb_val = val
                    fb = (val, z, wi, gnorm, False)
                continue
            # exact value ties resolve to the lexicographically smallest
            # winding (windings arrive lex-sorted, wi indexes that order)
            if (not best_conv or val < best_val
                    or (val == best_val and wi < best_wi)):
                best_val, best_z, best_wi = val, z, wi
                best_g, best_conv = gnorm, True
    if best_conv:
        return best_val, best_z, best_wi, best_g, True
    if fb is not None:
        return fb
    return np.inf, None, -1, np.inf, False


def cost_block(sources, targets, s, t, N, A, Ainv, amps, waves, omegas,
               phases, windings, descent_max, newton_max, gtol,
               newton_switch, lam_min, lam_max, vmax):
    """Cost matrix block: entry (i, j) is the best BVP action source_i -> target_j."""
    n, m = sources.shape[0], targets.shape[0]
    values = np.empty((n, m))
    conv = np.zeros((n, m), dtype=np.uint8)
    gnorms = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            val, _, _, gnorm, ok = bvp_best(
                sources[i], targets[j], s, t, N, A, Ainv,
                amps, waves, omegas, phases, windings,
                descent_max, newton_max, gtol, newton_switch,
                lam_min, lam_max, vmax)
            values[i, j] = val
            conv[i, j] = 1 if ok else 0
            gnorms[i, j] = gnorm
    return values, conv, gnorms


def rk4_flow(xs, ps, t0, t1, nsteps, Ainv, amps, waves, omegas, phases):
    """Classical RK4 on the Hamiltonian vector field, batched over rows.

    xdot = Ainv p,  pdot = -dV/dx.  Backward integration (t1 < t0) works
    with the signed step.  Returns (xs, ps) at t1, positions unwrapped.
    """
    xs = np.array(xs, dtype=float)
    ps = np.array(ps, dtype=float)
    if nsteps <= 0 or t1 == t0:
        return xs, ps
    dt = (t1 - t0) / nsteps

    def rhs(x, p, t):
        return p @ Ainv.T, -pot_grad(x, t, amps, waves, omegas, phases)

    t = t0
    for _ in range(nsteps):
        k1x, k1p = rhs(xs, ps, t)
        k2x, k2p = rhs(xs + 0.5 * dt * k1x, ps + 0.5 * dt * k1p, t + 0.5 * dt)
        k3x, k3p = rhs(xs + 0.5 * dt * k2x, ps + 0.5 * dt * k2p, t + 0.5 * dt)
        k4x, k4p = rhs(xs + dt * k3x, ps + dt * k3p, t + dt)
        xs = xs + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        ps = ps + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        t += dt
    return xs, ps
