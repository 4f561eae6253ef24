"""Compiled control tick and physics step.

These kernels fuse what :mod:`saltolab.stance`, :mod:`saltolab.swing` and
:func:`saltolab.sim.step_physics` do for one 500 Hz control tick, on flat
float arrays. The Python modules remain the reference; tests hold the two
routes together.

State vector layout: ``x, z, theta, vx, vz, omega, q[4], qd[4]``.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .sim import GRAVITY, RobotParams
from .stance import StanceConfig
from .swing import SwingConfig
from .gait import GaitConfig

TWO_PI = 2.0 * math.pi

# parameter vector layout
P_M, P_I, P_JR, P_NMOT, P_TAULIM = 0, 1, 2, 3, 4
P_KC, P_DC, P_MUC, P_VSLIP = 5, 6, 7, 8
P_L1F, P_L2F, P_HIPF, P_L1R, P_L2R, P_HIPR = 9, 10, 11, 12, 13, 14
P_U0, P_U1, P_U2, P_V = 15, 16, 17, 18
P_KV0, P_KV1, P_KV2, P_AMAX0, P_AMAX1, P_AMAX2 = 19, 20, 21, 22, 23, 24
P_MU, P_FZMAX, P_KDFB, P_DETMIN, P_EXACT = 25, 26, 27, 28, 29
P_APEX, P_KP, P_KD, P_KRAIB, P_RESB = 30, 31, 32, 33, 34
P_B0, P_B1, P_B2, P_B3 = 35, 36, 37, 38
P_EPS = 39
N_PARAMS = 40


def pack_params(robot: RobotParams, stance: StanceConfig, swing: SwingConfig,
                gait: GaitConfig, eps_reach: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Flat parameter vector plus the actuator knots as a (k, 2) array."""
    p = np.zeros(N_PARAMS)
    gf, gr = robot.geom_front, robot.geom_rear
    p[P_M], p[P_I], p[P_JR] = robot.m, robot.I, robot.J_r
    p[P_NMOT], p[P_TAULIM] = robot.motors_per_joint, robot.tau_limit
    c = robot.contact
    p[P_KC], p[P_DC], p[P_MUC], p[P_VSLIP] = c.k_c, c.d_c, c.mu, c.v_slip
    p[P_L1F], p[P_L2F], p[P_HIPF] = gf.l1, gf.l2, gf.hip_offset_x
    p[P_L1R], p[P_L2R], p[P_HIPR] = gr.l1, gr.l2, gr.hip_offset_x
    p[P_U0:P_U2 + 1] = stance.weights.U
    p[P_V] = stance.weights.V
    p[P_KV0:P_KV2 + 1] = stance.k_v
    p[P_AMAX0:P_AMAX2 + 1] = stance.a_max
    p[P_MU], p[P_FZMAX], p[P_KDFB], p[P_DETMIN] = stance.mu, stance.fz_max, stance.k_d_fb, stance.det_min
    if stance.mode not in ("exact", "approx"):
        raise ValueError(f"unknown QP mode {stance.mode!r}")
    p[P_EXACT] = 1.0 if stance.mode == "exact" else 0.0
    p[P_APEX], p[P_KP], p[P_KD] = swing.apex_height, swing.kp, swing.kd
    p[P_KRAIB], p[P_RESB] = swing.k_raibert, swing.residual_bound
    p[P_B0:P_B3 + 1] = gait.mode_boundaries
    p[P_EPS] = eps_reach
    return p, np.asarray(robot.actuator.knots, dtype=float)


@numba.njit(cache=True)
def _height(xs, hs, x):
    # right-continuous step lookup, xs[0] = -inf
    lo, hi = 0, len(xs)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    return hs[lo]


@numba.njit(cache=True)
def _saturate(cmd, knots):
    a = abs(cmd)
    n = knots.shape[0]
    out = knots[n - 1, 1]
    for i in range(n - 1):
        if a <= knots[i + 1, 0]:
            x0, y0, x1, y1 = knots[i, 0], knots[i, 1], knots[i + 1, 0], knots[i + 1, 1]
            out = y0 + (y1 - y0) * (a - x0) / (x1 - x0)
            break
    return out if cmd >= 0 else -out


@numba.njit(cache=True)
def _solve_small(K, rhs, n):
    # Gaussian elimination with partial pivoting on the leading n x n block
    A = K[:n, :n].copy()
    b = rhs[:n].copy()
    for col in range(n):
        piv = col
        best = abs(A[col, col])
        for r in range(col + 1, n):
            if abs(A[r, col]) > best:
                best, piv = abs(A[r, col]), r
        if best == 0.0:
            return b, False
        if piv != col:
            for c in range(n):
                A[col, c], A[piv, c] = A[piv, c], A[col, c]
            b[col], b[piv] = b[piv], b[col]
        for r in range(col + 1, n):
            fct = A[r, col] / A[col, col]
            if fct != 0.0:
                for c in range(col, n):
                    A[r, c] -= fct * A[col, c]
                b[r] -= fct * b[col]
    for r in range(n - 1, -1, -1):
        acc = b[r]
        for c in range(r + 1, n):
            acc -= A[r, c] * b[c]
        b[r] = acc / A[r, r]
    return b, True


@numba.njit(cache=True)
def qp_solve(a_ref, r_feet, k, P, max_iter=50):
    """Exact or approximate GRF QP; returns (f (2k,), cost, iterations, ok)."""
    m, inertia = P[P_M], P[P_I]
    U0, U1, U2, V = P[P_U0], P[P_U1], P[P_U2], P[P_V]
    mu, fzmax = P[P_MU], P[P_FZMAX]
    n = 2 * k
    A = np.zeros((3, n))
    for i in range(k):
        A[0, 2 * i] = 1.0 / m
        A[1, 2 * i + 1] = 1.0 / m
        A[2, 2 * i] = -r_feet[i, 1] / inertia
        A[2, 2 * i + 1] = r_feet[i, 0] / inertia
    e0 = 0.0 - a_ref[0]
    e1 = -GRAVITY - a_ref[1]
    e2 = 0.0 - a_ref[2]
    if k == 0:
        return np.zeros(0), U0 * e0 * e0 + U1 * e1 * e1 + U2 * e2 * e2, 0, True
    H = np.zeros((n, n))
    c = np.zeros(n)
    for i in range(n):
        c[i] = 2.0 * (A[0, i] * U0 * e0 + A[1, i] * U1 * e1 + A[2, i] * U2 * e2)
        for j in range(n):
            H[i, j] = 2.0 * (A[0, i] * U0 * A[0, j] + A[1, i] * U1 * A[1, j] + A[2, i] * U2 * A[2, j])
        H[i, i] += 2.0 * V
    nc = 4 * k
    G = np.zeros((nc, n))
    h = np.zeros(nc)
    for i in range(k):
        G[4 * i, 2 * i + 1] = -1.0
        G[4 * i + 1, 2 * i + 1] = 1.0
        h[4 * i + 1] = fzmax
        G[4 * i + 2, 2 * i] = 1.0
        G[4 * i + 2, 2 * i + 1] = -mu
        G[4 * i + 3, 2 * i] = -1.0
        G[4 * i + 3, 2 * i + 1] = -mu
    x = np.zeros(n)
    iters = 0
    ok = True
    if P[P_EXACT] > 0.5:
        for i in range(k):
            x[2 * i + 1] = 0.5 * fzmax
        W = np.empty(nc, dtype=np.int64)
        nw = 0
        K = np.zeros((n + nc, n + nc))
        rhs = np.zeros(n + nc)
        ok = False
        tol = 1e-12
        for it in range(1, max_iter + 1):
            iters = it
            sz = n + nw
            K[:, :] = 0.0
            for i in range(n):
                for j in range(n):
                    K[i, j] = H[i, j]
                rhs[i] = -c[i]
            for a in range(nw):
                for j in range(n):
                    K[j, n + a] = G[W[a], j]
                    K[n + a, j] = G[W[a], j]
                rhs[n + a] = h[W[a]]
            sol, good = _solve_small(K, rhs, sz)
            if not good:
                break
            scale = 1.0
            for i in range(n):
                scale = max(scale, 1.0 + abs(x[i]))
            pmax = 0.0
            for i in range(n):
                pmax = max(pmax, abs(sol[i] - x[i]))
            if pmax <= tol * scale:
                for i in range(n):
                    x[i] = sol[i]
                lmin, lbig, amin = 0.0, 0.0, -1
                for a in range(nw):
                    la = sol[n + a]
                    lbig = max(lbig, abs(la))
                    if amin < 0 or la < lmin:
                        lmin, amin = la, a
                if nw == 0 or lmin >= -tol * (1.0 + lbig):
                    ok = True
                    break
                for a in range(amin, nw - 1):
                    W[a] = W[a + 1]
                nw -= 1
                continue
            alpha, block = 1.0, -1
            for ci in range(nc):
                inw = False
                for a in range(nw):
                    if W[a] == ci:
                        inw = True
                if inw:
                    continue
                gp = 0.0
                gx = 0.0
                for j in range(n):
                    gp += G[ci, j] * (sol[j] - x[j])
                    gx += G[ci, j] * x[j]
                if gp <= 1e-14 * scale:
                    continue
                ai = max(h[ci] - gx, 0.0) / gp
                if ai < alpha:
                    alpha, block = ai, ci
            for i in range(n):
                x[i] = x[i] + alpha * (sol[i] - x[i])
            if block >= 0:
                W[nw] = block
                nw += 1
    else:
        Hc = H.copy()
        sol, good = _solve_small(Hc, -c, n)
        for i in range(k):
            fz = min(max(sol[2 * i + 1], 0.0), fzmax)
            x[2 * i + 1] = fz
            x[2 * i] = min(max(sol[2 * i], -mu * fz), mu * fz)
        ok = good
    a0 = A[0, :] @ x + 0.0 - a_ref[0]
    a1 = A[1, :] @ x - GRAVITY - a_ref[1]
    a2 = A[2, :] @ x - a_ref[2]
    cost = U0 * a0 * a0 + U1 * a1 * a1 + U2 * a2 * a2 + V * (x @ x)
    return x, cost, iters, ok


@numba.njit(cache=True)
def _leg(P, leg):
    if leg == 0:
        return P[P_L1F], P[P_L2F], P[P_HIPF]
    return P[P_L1R], P[P_L2R], P[P_HIPR]


@numba.njit(cache=True)
def _ik(px, pz, l1, l2, eps):
    # radial clamp into the reachable annulus (2 eps margin), then the knee-positive branch
    r = math.sqrt(px * px + pz * pz)
    r_max = l1 + l2 - 2.0 * eps
    r_min = abs(l1 - l2) + 2.0 * eps
    if r > r_max:
        px, pz = px * (r_max / r), pz * (r_max / r)
    elif r < r_min:
        if r < 1e-12:
            px, pz = 0.0, -r_min
        else:
            px, pz = px * (r_min / r), pz * (r_min / r)
    r2 = px * px + pz * pz
    c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    q2 = math.acos(min(1.0, max(-1.0, c2)))
    q1 = math.atan2(px, -pz) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    return q1, q2


@numba.njit(cache=True)
def _smooth(u):
    return u * u * (3.0 - 2.0 * u)


@numba.njit(cache=True)
def control_torques(s, phi, f_gait, act, swinging, liftoff, P, xs, hs):
    """Stance and swing torques for one tick; updates ``swinging``/``liftoff`` in place.

    Returns (tau (4,), qp_cost, qp_ok, scheduled front, scheduled rear).
    """
    x, z, th, vx, vz, om = s[0], s[1], s[2], s[3], s[4], s[5]
    c, sn = math.cos(th), math.sin(th)
    b0, b1, b2, b3 = P[P_B0], P[P_B1], P[P_B2], P[P_B3]
    ph = (phi - b0) % TWO_PI
    mode = 0
    if ph >= b3 - b0:
        mode = 3
    elif ph >= b2 - b0:
        mode = 2
    elif ph >= b1 - b0:
        mode = 1
    sched = (mode == 0, mode == 2)
    vxr, vzr, omr = act[5], act[6], act[7]
    a_ref = np.empty(3)
    a_ref[0] = min(max(P[P_KV0] * (vxr - vx), -P[P_AMAX0]), P[P_AMAX0])
    a_ref[1] = min(max(P[P_KV1] * (vzr - vz), -P[P_AMAX1]), P[P_AMAX1])
    a_ref[2] = min(max(P[P_KV2] * (omr - om), -P[P_AMAX2]), P[P_AMAX2])
    tau = np.zeros(4)
    k = 0
    legs = np.zeros(2, dtype=np.int64)
    r_feet = np.zeros((2, 2))
    fb = np.zeros((2, 2))
    jac = np.zeros((2, 4))
    for leg in range(2):
        if not sched[leg]:
            continue
        l1, l2, hip = _leg(P, leg)
        q1, q2 = s[6 + 2 * leg], s[7 + 2 * leg]
        s1, c1 = math.sin(q1), math.cos(q1)
        s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
        pbx = hip + l1 * s1 + l2 * s12
        pbz = -(l1 * c1 + l2 * c12)
        legs[k] = leg
        fb[k, 0], fb[k, 1] = pbx, pbz
        r_feet[k, 0] = c * pbx - sn * pbz
        r_feet[k, 1] = sn * pbx + c * pbz
        jac[k, 0], jac[k, 1] = l1 * c1 + l2 * c12, l2 * c12
        jac[k, 2], jac[k, 3] = l1 * s1 + l2 * s12, l2 * s12
        k += 1
    f, cost, iters, ok = qp_solve(a_ref, r_feet[:k], k, P)
    for j in range(k):
        leg = legs[j]
        j11, j12, j21, j22 = jac[j, 0], jac[j, 1], jac[j, 2], jac[j, 3]
        # body-frame force the foot applies to the ground: R^T (-f)
        fx, fz = -f[2 * j], -f[2 * j + 1]
        fbx = c * fx + sn * fz
        fbz = -sn * fx + c * fz
        t1 = j11 * fbx + j21 * fbz
        t2 = j12 * fbx + j22 * fbz
        det = j11 * j22 - j12 * j21
        if P[P_KDFB] > 0 and abs(det) > P[P_DETMIN]:
            prx, prz = r_feet[j, 0], r_feet[j, 1]
            wx = vxr - omr * prz
            wz = vzr + omr * prx
            ux = -(c * wx + sn * wz)
            uz = -(-sn * wx + c * wz)
            qr1 = (j22 * ux - j12 * uz) / det
            qr2 = (-j21 * ux + j11 * uz) / det
            t1 += P[P_KDFB] * (qr1 - s[10 + 2 * leg])
            t2 += P[P_KDFB] * (qr2 - s[11 + 2 * leg])
        tau[2 * leg] = t1
        tau[2 * leg + 1] = t2
    for leg in range(2):
        if sched[leg]:
            swinging[leg] = False
            continue
        l1, l2, hip = _leg(P, leg)
        q1, q2 = s[6 + 2 * leg], s[7 + 2 * leg]
        if not swinging[leg]:
            swinging[leg] = True
            pbx = hip + l1 * math.sin(q1) + l2 * math.sin(q1 + q2)
            pbz = -(l1 * math.cos(q1) + l2 * math.cos(q1 + q2))
            liftoff[leg, 0] = x + c * pbx - sn * pbz
            liftoff[leg, 1] = z + sn * pbx + c * pbz
        if leg == 0:
            start, length = b1, TWO_PI - (b1 - b0)
        else:
            start, length = b3, TWO_PI - (b3 - b2)
        prog = min(1.0, ((phi - start) % TWO_PI) / length)
        hx = x + c * hip
        tx = hx + 0.5 * (1.0 / (4.0 * f_gait)) * vx + P[P_KRAIB] * (vx - vxr)
        tz = _height(xs, hs, tx)
        rb = P[P_RESB]
        tx += min(max(act[1 + 2 * leg], -rb), rb)
        tz += min(max(act[2 + 2 * leg], -rb), rb)
        p0x, p0z = liftoff[leg, 0], liftoff[leg, 1]
        dx = p0x + (tx - p0x) * _smooth(prog)
        apex = max(p0z, tz) + P[P_APEX]
        if prog <= 0.5:
            dz = p0z + (apex - p0z) * _smooth(2.0 * prog)
        else:
            dz = apex + (tz - apex) * _smooth(2.0 * prog - 1.0)
        # desired foot in the hip frame
        ex, ez = dx - x, dz - z
        hx_b = c * ex + sn * ez - hip
        hz_b = -sn * ex + c * ez
        qd1, qd2 = _ik(hx_b, hz_b, l1, l2, P[P_EPS])
        tau[2 * leg] = P[P_KP] * (qd1 - q1) - P[P_KD] * s[10 + 2 * leg]
        tau[2 * leg + 1] = P[P_KP] * (qd2 - q2) - P[P_KD] * s[11 + 2 * leg]
    return tau, cost, ok, sched[0], sched[1]


@numba.njit(cache=True)
def physics_step(s, tau_cmd, P, knots, xs, hs, dt):
    """One semi-implicit step; returns (new state, contact flags (2,), forces (2, 2), finite)."""
    m, inertia, Jr = P[P_M], P[P_I], P[P_JR]
    kc, dc, muc, vslip = P[P_KC], P[P_DC], P[P_MUC], P[P_VSLIP]
    nm = P[P_NMOT]
    tlim = nm * P[P_TAULIM]
    tau = np.empty(4)
    for i in range(4):
        t = nm * _saturate(tau_cmd[i] / nm, knots)
        tau[i] = min(max(t, -tlim), tlim)
    x, z, th, vx, vz, om = s[0], s[1], s[2], s[3], s[4], s[5]
    c, sn = math.cos(th), math.sin(th)
    Fx = 0.0
    Fz = 0.0
    Mo = 0.0
    forces = np.zeros((2, 2))
    contact = np.zeros(2, dtype=np.bool_)
    info = np.zeros((2, 14))
    has_lin = np.zeros(2, dtype=np.bool_)
    for i in range(2):
        l1, l2, hip = _leg(P, i)
        q1, q2 = s[6 + 2 * i], s[7 + 2 * i]
        s1, c1 = math.sin(q1), math.cos(q1)
        s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
        pbx = hip + l1 * s1 + l2 * s12
        pbz = -(l1 * c1 + l2 * c12)
        j11, j12 = l1 * c1 + l2 * c12, l2 * c12
        j21, j22 = l1 * s1 + l2 * s12, l2 * s12
        b11, b12 = c * j11 - sn * j21, c * j12 - sn * j22
        b21, b22 = sn * j11 + c * j21, sn * j12 + c * j22
        rx, rz = c * pbx - sn * pbz, sn * pbx + c * pbz
        px, pz = x + rx, z + rz
        qd1, qd2 = s[10 + 2 * i], s[11 + 2 * i]
        wx, wz = vx - om * rz, vz + om * rx
        fvx, fvz = wx + b11 * qd1 + b12 * qd2, wz + b21 * qd1 + b22 * qd2
        pen = _height(xs, hs, px) - pz
        fx = 0.0
        fz = 0.0
        dvx = mt = 0.0
        if pen > 0.0:
            fz_raw = kc * pen - dc * fvz
            if fz_raw > 0.0:
                fz = fz_raw
                thv = math.tanh(fvx / vslip)
                fx = -muc * fz * thv
                sech2 = 1.0 - thv * thv
                dvx = -muc * fz * sech2 / vslip
                mt = muc * thv
                has_lin[i] = True
            contact[i] = True
        forces[i, 0], forces[i, 1] = fx, fz
        Fx += fx
        Fz += fz
        Mo += rx * fz - rz * fx
        info[i, 0], info[i, 1], info[i, 2], info[i, 3] = b11, b12, b21, b22
        info[i, 4], info[i, 5], info[i, 6], info[i, 7] = rx, rz, fx, fz
        info[i, 8], info[i, 9], info[i, 10], info[i, 11] = fvx, fvz, dvx, mt
    ax, az = Fx / m, Fz / m - GRAVITY
    alpha = Mo / inertia
    vx_n, vz_n, om_n = vx + dt * ax, vz + dt * az, om + dt * alpha
    out = np.empty(14)
    for i in range(2):
        b11, b12, b21, b22 = info[i, 0], info[i, 1], info[i, 2], info[i, 3]
        rx, rz, fx, fz = info[i, 4], info[i, 5], info[i, 6], info[i, 7]
        fvx, fvz, dvx, mt = info[i, 8], info[i, 9], info[i, 10], info[i, 11]
        t1, t2 = tau[2 * i], tau[2 * i + 1]
        qd1, qd2 = s[10 + 2 * i], s[11 + 2 * i]
        if not has_lin[i]:
            out[10 + 2 * i] = qd1 + dt * t1 / Jr
            out[11 + 2 * i] = qd2 + dt * t2 / Jr
            continue
        dk = dc + kc * dt
        dvz_x, dvz_z = mt * dk, -dk
        wx_n, wz_n = vx_n - om_n * rz, vz_n + om_n * rx
        gx = fx - dvx * fvx - mt * dc * fvz + dvx * wx_n + dvz_x * wz_n
        gz = fz + dc * fvz + dvz_z * wz_n
        db11 = dvx * b11 + dvz_x * b21
        db12 = dvx * b12 + dvz_x * b22
        db21 = dvz_z * b21
        db22 = dvz_z * b22
        k11 = Jr - dt * (b11 * db11 + b21 * db21)
        k12 = -dt * (b11 * db12 + b21 * db22)
        k21 = -dt * (b12 * db11 + b22 * db21)
        k22 = Jr - dt * (b12 * db12 + b22 * db22)
        r1 = Jr * qd1 + dt * (t1 + b11 * gx + b21 * gz)
        r2 = Jr * qd2 + dt * (t2 + b12 * gx + b22 * gz)
        det = k11 * k22 - k12 * k21
        out[10 + 2 * i] = (k22 * r1 - k12 * r2) / det
        out[11 + 2 * i] = (k11 * r2 - k21 * r1) / det
    out[0] = x + dt * vx_n
    out[1] = z + dt * vz_n
    if not (contact[0] or contact[1]):
        out[1] += 0.5 * GRAVITY * dt * dt
    w = np.fmod(th + dt * om_n + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    out[2] = w - math.pi
    out[3], out[4], out[5] = vx_n, vz_n, om_n
    for kk in range(4):
        out[6 + kk] = s[6 + kk] + dt * out[10 + kk]
    finite = True
    for kk in range(14):
        if not math.isfinite(out[kk]):
            finite = False
    return out, contact, forces, finite


@numba.njit(cache=True)
def termination_code(s, xs, hs, body_length, body_height, pitch_limit, pit_depth):
    """0 none, 1 trunk contact, 2 pitch limit, 3 pit fall, 4 non-finite (same order as the reference)."""
    for i in range(14):
        if not math.isfinite(s[i]):
            return 4
    th = s[2]
    if abs(th) > pitch_limit:
        return 2
    x, z = s[0], s[1]
    if z < _height(xs, hs, x) - pit_depth:
        return 3
    c, sn = math.cos(th), math.sin(th)
    hl, hh = 0.5 * body_length, 0.5 * body_height
    for cx, cz in ((hl, hh), (hl, -hh), (-hl, -hh), (-hl, hh)):
        wx = x + c * cx - sn * cz
        wz = z + sn * cx + c * cz
        if wz < _height(xs, hs, wx):
            return 1
    return 0


@numba.njit(cache=True)
def saturate_all(tau_cmd, P, knots):
    nm = P[P_NMOT]
    tlim = nm * P[P_TAULIM]
    out = np.empty(4)
    for i in range(4):
        out[i] = min(max(nm * _saturate(tau_cmd[i] / nm, knots), -tlim), tlim)
    return out
