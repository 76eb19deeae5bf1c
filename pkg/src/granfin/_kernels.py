"""Compiled inner loops: planar chain dynamics, RFT forces, and integrators.

Everything here works on packed float arrays so numba can compile it once.
The packed layout is produced by :mod:`granfin.chain`; nothing outside the
package should call into this module directly.

Coordinate layout for a chain of ``L`` links (``J = L - 1`` pin joints)::

    q = (x0, y0, theta_p, gamma_1, ..., gamma_J)

The world angle of the first link (the rod) is ``theta_p + pi/2``, so that a
base angle of 90 deg puts the plate face-on to motion along +y.

The ``system`` tuple holds:

    geom   (L, 5)    length, mass, inertia about center, height, drag_active
    laws   (J+1, 6)  k_soft, k_stop, damping, stop_angle, mirror sign,
                     stop rounding width;
                     row 0 acts on theta_p (only when base rotation is free)
    base   (4,)      base point mass, base inertia, base drag coefficient,
                     base-rotation-free flag
    medium (6,)      sigma_perp, sigma_par, v_eps, mode (0 constant, 1 sine),
                     enabled flag, RFT elements per link
    free   (nf,)     indices of free coordinates
    presc  (np,)     indices of prescribed coordinates (subset of 0..2)
    lf     (L, 2)    extra forces at link centers
    lt     (L,)      extra torques on links
    lj     (J+1,)    extra generalized torques on angle coordinates
    lb     (3,)      extra generalized forces on base coordinates

A motion segment ``seg`` is ``(t0, x0, y0, th0, vx, vy, vth)``: prescribed
coordinates move linearly in time from their values at ``t0``.
"""
import math

import numpy as np
from numba import njit

HALF_PI = 0.5 * math.pi

# powers tracked for work-energy bookkeeping
P_RFT, P_DAMP, P_CONS, P_EXT = 0, 1, 2, 3
N_POW = 4

# speed floor of the sine-scaled mode, as a fraction of v_eps
SPEED_FLOOR = 0.1


@njit(cache=True)
def smooth_sign(u, eps):
    return math.tanh(u / eps)


@njit(cache=True)
def _ramp(e, width):
    """max(e, 0), rounded to C1 over 0 < e < 2*width when width > 0.

    The rounding sits on the engaged side only, so the law is untouched
    away from the stop and exactly zero at and before contact.
    """
    if e <= 0.0:
        return 0.0
    if e >= 2.0 * width:
        return e - width
    return e * e / (4.0 * width)


@njit(cache=True)
def _ramp_integral(e, width):
    if e <= 0.0:
        return 0.0
    if e >= 2.0 * width:
        return 0.5 * (e - width) * (e - width) + width * width / 6.0
    return e * e * e / (12.0 * width)


@njit(cache=True)
def spring_torque(k_soft, k_stop, stop, sign, width, g):
    """Restoring torque of the one-sided stop law; ``sign < 0`` mirrors it."""
    g = sign * g
    tau = -k_soft * g + (k_stop - k_soft) * _ramp(stop - g, width)
    return sign * tau


@njit(cache=True)
def spring_energy(k_soft, k_stop, stop, sign, width, g):
    g = sign * g
    return 0.5 * k_soft * g * g + (k_stop - k_soft) * _ramp_integral(stop - g, width)


@njit(cache=True)
def rft_force(sigma_perp, sigma_par, v_eps, mode, area, tx, ty, vx, vy):
    """Force on one element with unit tangent (tx, ty) moving at (vx, vy)."""
    nx = -ty
    ny = tx
    vt = vx * tx + vy * ty
    vn = vx * nx + vy * ny
    fn = sigma_perp * area * smooth_sign(vn, v_eps)
    ft = sigma_par * area * smooth_sign(vt, v_eps)
    if mode == 1:
        # direction cosines with a speed floor well below v_eps, so the
        # factors stay smooth through v = 0
        speed = math.sqrt(vt * vt + vn * vn + (SPEED_FLOOR * v_eps) ** 2)
        fn *= abs(vn) / speed
        ft *= abs(vt) / speed
    return -fn * nx - ft * tx, -fn * ny - ft * ty


@njit(cache=True)
def assemble(q, qd, system):
    """Mass matrix and generalized forces at one state.

    Returns (M, Q, tau, powers, ke, pe). ``Q`` already contains the
    velocity-product terms, ``tau`` is the spring+damper torque at each angle
    coordinate and ``powers`` lacks the constraint term, which needs q''.
    """
    geom, laws, base, medium, free, presc, lf, lt, lj, lb = system
    L = geom.shape[0]
    nq = L + 2
    rot_free = base[3] > 0.5

    alpha = np.empty(L)
    omega = np.empty(L)
    alpha[0] = q[2] + HALF_PI
    omega[0] = qd[2]
    for k in range(1, L):
        alpha[k] = alpha[k - 1] + q[2 + k]
        omega[k] = omega[k - 1] + qd[2 + k]

    ux = np.cos(alpha)
    uy = np.sin(alpha)
    px = np.empty(L + 1)
    py = np.empty(L + 1)
    cx = np.empty(L)
    cy = np.empty(L)
    px[0] = q[0]
    py[0] = q[1]
    for k in range(L):
        l = geom[k, 0]
        cx[k] = px[k] + 0.5 * l * ux[k]
        cy[k] = py[k] + 0.5 * l * uy[k]
        px[k + 1] = px[k] + l * ux[k]
        py[k + 1] = py[k] + l * uy[k]

    M = np.zeros((nq, nq))
    Q = np.zeros(nq)
    jx = np.zeros(nq)
    jy = np.zeros(nq)
    p_rft = 0.0
    p_ext = 0.0
    ke = 0.0
    tzs = np.zeros(L)

    # centripetal acceleration of the running joint position
    ax_run = 0.0
    ay_run = 0.0
    for k in range(L):
        l, m, inertia, h, active = geom[k, 0], geom[k, 1], geom[k, 2], geom[k, 3], geom[k, 4]
        for j in range(nq):
            jx[j] = 0.0
            jy[j] = 0.0
        jx[0] = 1.0
        jy[1] = 1.0
        for a in range(k + 1):
            rx = cx[k] - px[a]
            ry = cy[k] - py[a]
            jx[2 + a] = -ry
            jy[2 + a] = rx
        vcx = 0.0
        vcy = 0.0
        for j in range(nq):
            vcx += jx[j] * qd[j]
            vcy += jy[j] * qd[j]
        w2 = omega[k] * omega[k]
        dx = ax_run - 0.5 * l * w2 * ux[k]
        dy = ay_run - 0.5 * l * w2 * uy[k]
        ax_run -= l * w2 * ux[k]
        ay_run -= l * w2 * uy[k]

        fx = lf[k, 0]
        fy = lf[k, 1]
        p_ext += fx * vcx + fy * vcy
        p_ext += lt[k] * omega[k]
        if active > 0.5 and medium[4] > 0.5:
            # RFT on n_sub equal elements along the link; the resulting force
            # and its moment about the center are mapped through the center
            n_sub = int(medium[5])
            area = l * h / n_sub
            for e in range(n_sub):
                s = (e + 0.5) / n_sub - 0.5
                ex = s * l * ux[k]
                ey = s * l * uy[k]
                vex = vcx - omega[k] * ey
                vey = vcy + omega[k] * ex
                rfx, rfy = rft_force(medium[0], medium[1], medium[2], int(medium[3]),
                                     area, ux[k], uy[k], vex, vey)
                fx += rfx
                fy += rfy
                tz_k = ex * rfy - ey * rfx
                tzs[k] += tz_k
                p_rft += rfx * vex + rfy * vey
        gx = fx - m * dx
        gy = fy - m * dy
        for i in range(nq):
            Q[i] += jx[i] * gx + jy[i] * gy
            for j in range(i, nq):
                M[i, j] += m * (jx[i] * jx[j] + jy[i] * jy[j])
        # angular Jacobian is 1 on coordinates 2..2+k
        for i in range(2, 3 + k):
            Q[i] += lt[k] + tzs[k]
            for j in range(i, 3 + k):
                M[i, j] += inertia
        ke += 0.5 * m * (vcx * vcx + vcy * vcy) + 0.5 * inertia * omega[k] * omega[k]

    M[0, 0] += base[0]
    M[1, 1] += base[0]
    M[2, 2] += base[1]
    ke += 0.5 * base[0] * (qd[0] * qd[0] + qd[1] * qd[1]) + 0.5 * base[1] * qd[2] * qd[2]
    for i in range(nq):
        for j in range(i):
            M[i, j] = M[j, i]

    # joint laws
    tau = np.zeros(L)
    pe = 0.0
    p_damp = 0.0
    for a in range(L):
        if a == 0 and not rot_free:
            continue
        g = q[2 + a]
        gd = qd[2 + a]
        ts = spring_torque(laws[a, 0], laws[a, 1], laws[a, 3], laws[a, 4], laws[a, 5], g)
        td = -laws[a, 2] * gd
        tau[a] = ts + td
        Q[2 + a] += ts + td + lj[a]
        p_damp += td * gd
        p_ext += lj[a] * gd
        pe += spring_energy(laws[a, 0], laws[a, 1], laws[a, 3], laws[a, 4], laws[a, 5], g)

    # body drag on the base point
    if base[2] > 0.0:
        eps = medium[2]
        fbx = -base[2] * smooth_sign(qd[0], eps)
        fby = -base[2] * smooth_sign(qd[1], eps)
        Q[0] += fbx
        Q[1] += fby
        p_rft += fbx * qd[0] + fby * qd[1]
    for i in range(3):
        Q[i] += lb[i]
        p_ext += lb[i] * qd[i]

    powers = np.zeros(N_POW)
    powers[P_RFT] = p_rft
    powers[P_DAMP] = p_damp
    powers[P_EXT] = p_ext
    return M, Q, tau, powers, ke, pe


@njit(cache=True)
def dynamics(q, qd, qdd_p, system):
    """Solve the equations of motion at one state.

    Returns (qdd, lam, tau, powers, ke, pe) where ``lam`` is the generalized
    force the prescribed-motion constraint must supply (zero on free
    coordinates).
    """
    free = system[4]
    presc = system[5]
    M, Q, tau, powers, ke, pe = assemble(q, qd, system)
    nq = q.size
    nf = free.size
    qdd = np.zeros(nq)
    for i in range(presc.size):
        qdd[presc[i]] = qdd_p[i]
    if nf > 0:
        A = np.empty((nf, nf))
        r = np.empty(nf)
        for i in range(nf):
            fi = free[i]
            r[i] = Q[fi]
            for j in range(presc.size):
                r[i] -= M[fi, presc[j]] * qdd_p[j]
            for j in range(nf):
                A[i, j] = M[fi, free[j]]
        sol = np.linalg.solve(A, r)
        for i in range(nf):
            qdd[free[i]] = sol[i]

    lam = np.zeros(nq)
    p_cons = 0.0
    for i in range(presc.size):
        c = presc[i]
        s = -Q[c]
        for j in range(nq):
            s += M[c, j] * qdd[j]
        lam[c] = s
        p_cons += s * qd[c]

    powers[P_CONS] = p_cons
    return qdd, lam, tau, powers, ke, pe


@njit(cache=True)
def unpack(t, y, system, seg):
    free = system[4]
    presc = system[5]
    nq = system[0].shape[0] + 2
    nf = free.size
    q = np.empty(nq)
    qd = np.empty(nq)
    for i in range(presc.size):
        c = presc[i]
        q[c] = seg[1 + c] + seg[4 + c] * (t - seg[0])
        qd[c] = seg[4 + c]
    for i in range(nf):
        q[free[i]] = y[i]
        qd[free[i]] = y[nf + i]
    return q, qd


@njit(cache=True)
def evaluate(t, y, system, seg):
    q, qd = unpack(t, y, system, seg)
    qdd_p = np.zeros(system[5].size)
    qdd, lam, tau, powers, ke, pe = dynamics(q, qd, qdd_p, system)
    free = system[4]
    nf = free.size
    dy = np.empty(2 * nf)
    for i in range(nf):
        dy[i] = qd[free[i]]
        dy[nf + i] = qdd[free[i]]
    return dy, powers


@njit(cache=True)
def rhs(t, y, system, seg):
    return evaluate(t, y, system, seg)[0]


@njit(cache=True)
def rk4_step(t, y, h, system, seg, w):
    k1, p1 = evaluate(t, y, system, seg)
    k2, p2 = evaluate(t + 0.5 * h, y + 0.5 * h * k1, system, seg)
    k3, p3 = evaluate(t + 0.5 * h, y + 0.5 * h * k2, system, seg)
    k4, p4 = evaluate(t + h, y + h * k3, system, seg)
    w += h / 6.0 * (p1 + 2.0 * p2 + 2.0 * p3 + p4)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def fd_jacobian(t, y, f0, system, seg):
    n = y.size
    jac = np.empty((n, n))
    for j in range(n):
        yp = y.copy()
        d = 1.5e-8 * max(abs(y[j]), 1e-2)
        yp[j] += d
        fp = rhs(t, yp, system, seg)
        for i in range(n):
            jac[i, j] = (fp[i] - f0[i]) / d
    return jac


@njit(cache=True)
def _scaled_max(v, Y, rtol, atol):
    err = 0.0
    for i in range(Y.size):
        e = abs(v[i]) / (atol + rtol * abs(Y[i]))
        if not e <= err:
            err = e
    return err


@njit(cache=True)
def _simplified_newton(Y, base, tc, hg, system, seg, iteration_matrix, rtol, atol, maxit):
    """Newton iteration with a frozen iteration matrix; gives up early on slow contraction."""
    prev = np.inf
    for it in range(maxit):
        f = rhs(tc, Y, system, seg)
        r = Y - base - hg * f
        dY = -iteration_matrix @ r
        err = _scaled_max(dY, Y, rtol, atol)
        if not math.isfinite(err):
            return False
        Y += dY
        if err < 1.0:
            return True
        if it > 0 and err > 0.5 * prev:
            return False
        prev = err
    return False


@njit(cache=True)
def _merit(Y, base, tc, hg, system, seg, weights):
    f = rhs(tc, Y, system, seg)
    r = (Y - base - hg * f) * weights
    return math.sqrt(np.sum(r * r)), f


@njit(cache=True)
def _damped_newton(Y, base, tc, hg, system, seg, rtol, atol, maxit):
    """Full Newton with backtracking on a fixed-weight residual norm.

    Returns (ok, inverse of the last iteration matrix).
    """
    n = Y.size
    weights = 1.0 / (atol + rtol * np.abs(Y))
    rn, f = _merit(Y, base, tc, hg, system, seg, weights)
    inv = np.eye(n)
    for _ in range(maxit):
        jac = fd_jacobian(tc, Y, f, system, seg)
        inv = np.linalg.inv(np.eye(n) - hg * jac)
        dY = -inv @ (Y - base - hg * f)
        step_err = _scaled_max(dY, Y, rtol, atol)
        if not math.isfinite(step_err):
            return False, inv
        if step_err < 1.0:
            Y += dY
            return True, inv
        lam = 1.0
        accepted = False
        for _ in range(30):
            Yt = Y + lam * dY
            rt, ft = _merit(Yt, base, tc, hg, system, seg, weights)
            if math.isfinite(rt) and rt < (1.0 - 1e-4 * lam) * rn:
                Y[:] = Yt
                rn = rt
                f = ft
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            return False, inv
    return False, inv


@njit(cache=True)
def _full_newton(Y, base, tc, hg, system, seg, rtol, atol, maxit):
    """Undamped Newton with a fresh Jacobian every iteration."""
    n = Y.size
    for _ in range(maxit):
        f = rhs(tc, Y, system, seg)
        jac = fd_jacobian(tc, Y, f, system, seg)
        dY = -np.linalg.solve(np.eye(n) - hg * jac, Y - base - hg * f)
        err = _scaled_max(dY, Y, rtol, atol)
        if not math.isfinite(err):
            return False
        Y += dY
        if err < 1.0:
            return True
    return False


@njit(cache=True)
def _iteration_matrix(tc, Y, hg, system, seg):
    f = rhs(tc, Y, system, seg)
    jac = fd_jacobian(tc, Y, f, system, seg)
    n = Y.size
    return np.linalg.inv(np.eye(n) - hg * jac)


@njit(cache=True)
def _solve_stage(Y, base, tc, hg, system, seg, it_mat, rtol, atol):
    """Solve one implicit stage in place; ``it_mat`` is refreshed in place when stale."""
    start = Y.copy()
    if _simplified_newton(Y, base, tc, hg, system, seg, it_mat, rtol, atol, 8):
        return True
    Y[:] = start
    it_mat[:, :] = _iteration_matrix(tc, Y, hg, system, seg)
    if _simplified_newton(Y, base, tc, hg, system, seg, it_mat, rtol, atol, 8):
        return True
    Y[:] = start
    if _full_newton(Y, base, tc, hg, system, seg, rtol, atol, 12):
        it_mat[:, :] = _iteration_matrix(tc, Y, hg, system, seg)
        return True
    Y[:] = start
    ok, inv = _damped_newton(Y, base, tc, hg, system, seg, rtol, atol, 60)
    it_mat[:, :] = inv
    return ok


@njit(cache=True)
def sdirk_step(t, y, h, system, seg, w, it_mat, rtol, atol):
    """One step of the two-stage L-stable SDIRK method (Alexander, order 2).

    ``it_mat`` is the inverse Newton iteration matrix for this step size; it
    is reused between steps and refreshed when Newton stalls. Returns
    (y_new, ok); ``w`` (work accumulators) is only updated on success.
    """
    g = 1.0 - math.sqrt(0.5)
    hg = h * g
    Y1 = y.copy()
    if not _solve_stage(Y1, y, t + g * h, hg, system, seg, it_mat, rtol, atol):
        return y, False
    k1 = (Y1 - y) / hg
    base2 = y + h * (1.0 - g) * k1
    Y2 = y + h * k1
    if not _solve_stage(Y2, base2, t + h, hg, system, seg, it_mat, rtol, atol):
        return y, False
    p1 = evaluate(t + g * h, Y1, system, seg)[1]
    p2 = evaluate(t + h, Y2, system, seg)[1]
    w += h * ((1.0 - g) * p1 + g * p2)
    return Y2, True


@njit(cache=True)
def _implicit_interval(t, y, h, system, seg, w, it_mat, rtol, atol):
    """Advance by h, splitting into equal substeps when Newton fails."""
    y_new, ok = sdirk_step(t, y, h, system, seg, w, it_mat, rtol, atol)
    if ok:
        return y_new, True
    g = 1.0 - math.sqrt(0.5)
    for depth in range(1, 11):
        n_sub = 2 ** depth
        hs = h / n_sub
        sub_mat = _iteration_matrix(t, y, hs * g, system, seg)
        ys = y.copy()
        ws = w.copy()
        good = True
        for i in range(n_sub):
            ys, good = sdirk_step(t + i * hs, ys, hs, system, seg, ws, sub_mat, rtol, atol)
            if not good:
                break
        if good:
            w[:] = ws
            it_mat[:, :] = _iteration_matrix(t + h, ys, h * g, system, seg)
            return ys, True
    return y, False


@njit(cache=True)
def sample_row(t, y, system, seg, w):
    """t | q | qd | qdd | lam(3) | tau(L) | work(N_POW) | ke | pe"""
    q, qd = unpack(t, y, system, seg)
    qdd_p = np.zeros(system[5].size)
    qdd, lam, tau, powers, ke, pe = dynamics(q, qd, qdd_p, system)
    nq = q.size
    L = nq - 2
    row = np.empty(1 + 3 * nq + 3 + L + N_POW + 2)
    row[0] = t
    row[1:1 + nq] = q
    row[1 + nq:1 + 2 * nq] = qd
    row[1 + 2 * nq:1 + 3 * nq] = qdd
    o = 1 + 3 * nq
    row[o:o + 3] = lam[:3]
    row[o + 3:o + 3 + L] = tau
    o = o + 3 + L
    row[o:o + N_POW] = w
    row[o + N_POW] = ke
    row[o + N_POW + 1] = pe
    return row


@njit(cache=True)
def integrate_segment(y0, w, t0, t1, n_steps, decimation, step_offset, system, seg,
                      method, rtol, atol):
    """Integrate over [t0, t1] in ``n_steps`` equal steps.

    Samples are taken after every step whose global index (``step_offset`` +
    local) is a multiple of ``decimation``. Returns (y, samples, status) where
    status is 0 on success, 1 for non-finite state, 2 for Newton failure.
    """
    h = (t1 - t0) / n_steps
    y = y0.copy()
    n_samples = 0
    for i in range(1, n_steps + 1):
        if (step_offset + i) % decimation == 0:
            n_samples += 1
    probe = sample_row(t0, y, system, seg, w)
    it_mat = np.eye(y.size)
    if method != 0:
        it_mat = _iteration_matrix(t0, y, h * (1.0 - math.sqrt(0.5)), system, seg)
    out = np.empty((n_samples, probe.size))
    s = 0
    for i in range(1, n_steps + 1):
        t = t0 + (i - 1) * h
        if method == 0:
            y = rk4_step(t, y, h, system, seg, w)
        else:
            y, ok = _implicit_interval(t, y, h, system, seg, w, it_mat, rtol, atol)
            if not ok:
                return y, out[:s], 2
        for j in range(y.size):
            if not math.isfinite(y[j]):
                return y, out[:s], 1
        if (step_offset + i) % decimation == 0:
            out[s] = sample_row(t0 + i * h, y, system, seg, w)
            s += 1
    return y, out, 0
