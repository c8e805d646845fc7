"""Compiled inner loops: plant derivative, RK4, shooting rollouts and the
nonlinear MPC objective with its finite-difference gradient.

Parameter vector layout (``prm``)::

    [mass, arm, Ixx, Iyy, Izz, k_thrust, b_drag_torque, g, cx, cy, cz]

Every kernel reports a singular attitude (|theta| >= pi/2 - 1e-6) through its
return value instead of raising, so callers decide how to fail.
"""

import math

import numpy as np
from numba import njit

PITCH_LIMIT = math.pi / 2 - 1e-6

# prm indices
M, L, IXX, IYY, IZZ, KT, BD, G, CX, CY, CZ = range(11)


@njit(cache=True)
def deriv(x, u, prm, fext, out):
    phi, theta, psi = x[3], x[4], x[5]
    if abs(theta) >= PITCH_LIMIT:
        return False
    k = prm[KT]
    l = prm[L]
    thrust = k * (u[0] + u[1] + u[2] + u[3])
    tau_phi = l * k * (u[3] - u[1])
    tau_theta = l * k * (u[2] - u[0])
    tau_psi = prm[BD] * (u[0] - u[1] + u[2] - u[3])

    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cpsi, spsi = math.cos(psi), math.sin(psi)
    # third column of the ZYX body-to-world rotation
    r13 = cphi * sth * cpsi + sphi * spsi
    r23 = cphi * sth * spsi - sphi * cpsi
    r33 = cphi * cth

    m = prm[M]
    out[0] = x[6]
    out[1] = x[7]
    out[2] = x[8]
    out[3] = x[9]
    out[4] = x[10]
    out[5] = x[11]
    out[6] = (r13 * thrust - prm[CX] * x[6] + fext[0]) / m
    out[7] = (r23 * thrust - prm[CY] * x[7] + fext[1]) / m
    out[8] = (r33 * thrust - prm[CZ] * x[8] + fext[2]) / m - prm[G]

    p, q, r = x[9], x[10], x[11]
    ixx, iyy, izz = prm[IXX], prm[IYY], prm[IZZ]
    out[9] = (tau_phi - (izz - iyy) * q * r) / ixx
    out[10] = (tau_theta - (ixx - izz) * p * r) / iyy
    out[11] = (tau_psi - (iyy - ixx) * p * q) / izz
    return True


@njit(cache=True)
def rk4(x, u, prm, fext, dt, out):
    n = x.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    if not deriv(x, u, prm, fext, k1):
        return False
    for i in range(n):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    if not deriv(tmp, u, prm, fext, k2):
        return False
    for i in range(n):
        tmp[i] = x[i] + 0.5 * dt * k2[i]
    if not deriv(tmp, u, prm, fext, k3):
        return False
    for i in range(n):
        tmp[i] = x[i] + dt * k3[i]
    if not deriv(tmp, u, prm, fext, k4):
        return False
    for i in range(n):
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return True


@njit(cache=True)
def rollout(x0, inputs, prm, fext, dt, states):
    """Fill ``states`` (N+1 x 12); return the failing step index or -1."""
    states[0, :] = x0
    for k in range(inputs.shape[0]):
        if not rk4(states[k], inputs[k], prm, fext, dt, states[k + 1]):
            return k
    return -1


@njit(cache=True)
def policy_input(k, moves, x, x_ref, u_ref, gain, pos_clip, u_min, u_max, out):
    """Input at horizon step ``k``: feedforward + held correction - gain * error.

    The position part of the error is clipped to +-pos_clip before the gain.
    """
    j = min(k, moves.shape[0] - 1)
    for i in range(4):
        v = u_ref[k, i] + moves[j, i]
        for m in range(x.shape[0]):
            e = x[m] - x_ref[k, m]
            if m < 3:
                e = min(max(e, -pos_clip), pos_clip)
            v -= gain[i, m] * e
        out[i] = min(max(v, u_min[i]), u_max[i])


@njit(cache=True)
def objective(moves, x0, x_ref, u_ref, gain, pos_clip, u_min, u_max, prm, fext, dt,
              q, r, p, qi, factor, parts):
    n = u_ref.shape[0]
    nx = x0.shape[0]
    states = np.empty((n + 1, nx))
    states[0, :] = x0
    u = np.empty(4)
    jx = 0.0
    ji = 0.0
    ju = 0.0
    for k in range(n):
        for i in range(nx):
            e = states[k, i] - x_ref[k, i]
            jx += q[i] * e * e
            ji += qi[i] * e * e
        policy_input(k, moves, states[k], x_ref, u_ref, gain, pos_clip, u_min, u_max, u)
        if k < moves.shape[0]:
            for i in range(4):
                d = u[i] - u_ref[k, i]
                ju += r[i] * d * d
        if not rk4(states[k], u, prm, fext, dt, states[k + 1]):
            parts[:] = np.inf
            return np.inf
    jp = 0.0
    for i in range(nx):
        e = states[n, i] - x_ref[n, i]
        jp += p[i] * e * e
    ji *= factor
    parts[0] = jx
    parts[1] = ju
    parts[2] = jp
    parts[3] = ji
    return jx + ju + jp + ji


@njit(cache=True)
def closed_loop_rollout(moves, x0, x_ref, u_ref, gain, pos_clip, u_min, u_max, prm, fext,
                        dt, states, inputs):
    """Rollout under the prediction policy; return failing step or -1."""
    states[0, :] = x0
    for k in range(u_ref.shape[0]):
        policy_input(k, moves, states[k], x_ref, u_ref, gain, pos_clip, u_min, u_max, inputs[k])
        if not rk4(states[k], inputs[k], prm, fext, dt, states[k + 1]):
            return k
    return -1


@njit(cache=True)
def objective_grad(moves, x0, x_ref, u_ref, gain, pos_clip, u_min, u_max, prm, fext, dt,
                   q, r, p, qi, factor, h, grad):
    """Central-difference gradient of ``objective`` with step ``h``.

    Falls back to a one-sided difference when one probe hits the Euler
    singularity; the entry is NaN when both do.
    """
    parts = np.empty(4)
    work = moves.copy()
    f0 = objective(work, x0, x_ref, u_ref, gain, pos_clip, u_min, u_max, prm, fext,
                   dt, q, r, p, qi, factor, parts)
    for a in range(moves.shape[0]):
        for b in range(moves.shape[1]):
            v = moves[a, b]
            work[a, b] = v + h
            fp = objective(work, x0, x_ref, u_ref, gain, pos_clip, u_min, u_max, prm, fext,
                           dt, q, r, p, qi, factor, parts)
            work[a, b] = v - h
            fm = objective(work, x0, x_ref, u_ref, gain, pos_clip, u_min, u_max, prm, fext,
                           dt, q, r, p, qi, factor, parts)
            work[a, b] = v
            if np.isfinite(fp) and np.isfinite(fm):
                grad[a, b] = (fp - fm) / (2.0 * h)
            elif np.isfinite(fm) and np.isfinite(f0):
                grad[a, b] = (f0 - fm) / h
            elif np.isfinite(fp) and np.isfinite(f0):
                grad[a, b] = (fp - f0) / h
            else:
                grad[a, b] = np.nan
