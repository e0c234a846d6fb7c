"""Compiled forward/backward kernels of the neural ODE.

Parameters live in one flat float64 vector laid out as
``W1 (H x D) | b1 (H) | W2 (S x H) | b2 (S)`` with ``D = S + 1`` (state plus
excitation). Time is measured in output steps, so one RK4 step has length 1.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

DIVERGENCE_LIMIT = 10.0


def n_params(S, H):
    return H * (S + 1) + H + S * H + S


@njit(cache=True)
def _f(theta, S, H, s, u, out, h):
    D = S + 1
    o_b1 = H * D
    o_w2 = o_b1 + H
    o_b2 = o_w2 + S * H
    for j in range(H):
        a = theta[o_b1 + j] + theta[j * D + S] * u
        for k in range(S):
            a += theta[j * D + k] * s[k]
        h[j] = 1.0 / (1.0 + math.exp(-a))
    for i in range(S):
        acc = theta[o_b2 + i]
        for j in range(H):
            acc += theta[o_w2 + i * H + j] * h[j]
        out[i] = acc


@njit(cache=True)
def _vjp(theta, grad, S, H, z_s, u, h, g, gs, gh):
    """Accumulate parameter gradients for cotangent g; write state cotangent to gs."""
    D = S + 1
    o_b1 = H * D
    o_w2 = o_b1 + H
    o_b2 = o_w2 + S * H
    for i in range(S):
        grad[o_b2 + i] += g[i]
        for j in range(H):
            grad[o_w2 + i * H + j] += g[i] * h[j]
    for j in range(H):
        acc = 0.0
        for i in range(S):
            acc += theta[o_w2 + i * H + j] * g[i]
        gh[j] = acc * h[j] * (1.0 - h[j])
    for k in range(S):
        gs[k] = 0.0
    for j in range(H):
        ga = gh[j]
        grad[o_b1 + j] += ga
        grad[j * D + S] += ga * u
        for k in range(S):
            grad[j * D + k] += ga * z_s[k]
            gs[k] += theta[j * D + k] * ga


@njit(cache=True)
def rhs_kernel(theta, S, H, s, u):
    out = np.empty(S)
    h = np.empty(H)
    _f(theta, S, H, s, u, out, h)
    return out


@njit(cache=True)
def _rk4_forward(theta, S, H, n_obs, s0, u, states, stage_s, stage_h, limit):
    """Integrate N = len(u) - 1 steps; returns the first diverged step or -1.

    Only the normalized observed states (the first n_obs) are bounded by
    ``limit``; free states have no scale and are only required to be finite.
    """
    N = u.shape[0] - 1
    k = np.empty((4, S))
    for i in range(S):
        states[0, i] = s0[i]
    for n in range(N):
        un = u[n]
        for q in range(4):
            for i in range(S):
                if q == 0:
                    stage_s[n, 0, i] = states[n, i]
                elif q == 3:
                    stage_s[n, 3, i] = states[n, i] + k[2, i]
                else:
                    stage_s[n, q, i] = states[n, i] + 0.5 * k[q - 1, i]
            _f(theta, S, H, stage_s[n, q], un, k[q], stage_h[n, q])
        bad = False
        for i in range(S):
            v = states[n, i] + (k[0, i] + 2.0 * k[1, i] + 2.0 * k[2, i] + k[3, i]) / 6.0
            states[n + 1, i] = v
            if i < n_obs:
                if not (abs(v) <= limit):
                    bad = True
            elif not math.isfinite(v):
                bad = True
        if bad:
            return n + 1
    return -1


@njit(cache=True)
def rollout_kernel(theta, S, H, n_obs, s0, u, limit):
    N = u.shape[0] - 1
    states = np.empty((N + 1, S))
    stage_s = np.empty((max(N, 1), 4, S))
    stage_h = np.empty((max(N, 1), 4, H))
    status = _rk4_forward(theta, S, H, n_obs, s0, u, states, stage_s, stage_h, limit)
    return states, status


@njit(cache=True)
def loss_grad_kernel(theta, S, H, n_obs, s0, u, y, grad):
    """MSE over observed channels and steps 1..N; adds dL/dtheta into grad."""
    N = u.shape[0] - 1
    states = np.empty((N + 1, S))
    stage_s = np.empty((N, 4, S))
    stage_h = np.empty((N, 4, H))
    _rk4_forward(theta, S, H, n_obs, s0, u, states, stage_s, stage_h, np.inf)

    scale = 1.0 / (n_obs * N)
    loss = 0.0
    for n in range(1, N + 1):
        for l in range(n_obs):
            e = states[n, l] - y[n, l]
            loss += e * e
    loss *= scale

    lam = np.zeros(S)
    gbar = np.empty(S)
    gk = np.empty(S)
    gs = np.empty(S)
    gh = np.empty(H)
    for n in range(N, 0, -1):
        for l in range(n_obs):
            lam[l] += 2.0 * scale * (states[n, l] - y[n, l])
        un = u[n - 1]
        m = n - 1
        # stage 4: k4 = f(s + k3)
        for i in range(S):
            gk[i] = lam[i] / 6.0
        _vjp(theta, grad, S, H, stage_s[m, 3], un, stage_h[m, 3], gk, gs, gh)
        for i in range(S):
            gbar[i] = lam[i] + gs[i]
            gk[i] = lam[i] / 3.0 + gs[i]
        # stage 3: k3 = f(s + k2/2)
        _vjp(theta, grad, S, H, stage_s[m, 2], un, stage_h[m, 2], gk, gs, gh)
        for i in range(S):
            gbar[i] += gs[i]
            gk[i] = lam[i] / 3.0 + 0.5 * gs[i]
        # stage 2: k2 = f(s + k1/2)
        _vjp(theta, grad, S, H, stage_s[m, 1], un, stage_h[m, 1], gk, gs, gh)
        for i in range(S):
            gbar[i] += gs[i]
            gk[i] = lam[i] / 6.0 + 0.5 * gs[i]
        # stage 1: k1 = f(s)
        _vjp(theta, grad, S, H, stage_s[m, 0], un, stage_h[m, 0], gk, gs, gh)
        for i in range(S):
            lam[i] = gbar[i] + gs[i]
    return loss


@njit(cache=True)
def batch_loss_grad(theta, S, H, n_obs, s0s, u_all, y_all, offsets, grad):
    """Mean loss and gradient over scenarios packed back to back."""
    n_sc = offsets.shape[0] - 1
    for i in range(grad.shape[0]):
        grad[i] = 0.0
    total = 0.0
    for c in range(n_sc):
        a = offsets[c]
        b = offsets[c + 1]
        total += loss_grad_kernel(theta, S, H, n_obs, s0s[c], u_all[a:b], y_all[a:b], grad)
    for i in range(grad.shape[0]):
        grad[i] /= n_sc
    return total / n_sc


@njit(cache=True)
def adam_kernel(theta, S, H, n_obs, s0s, u_all, y_all, offsets, lrs, clip, tol,
                beta1, beta2, eps, weight_decay):
    """Full-batch Adam with decoupled weight decay.

    Returns (best_theta, loss history, diverged epoch or -1).
    """
    P = theta.shape[0]
    epochs = lrs.shape[0]
    m = np.zeros(P)
    v = np.zeros(P)
    grad = np.empty(P)
    hist = np.full(epochs + 1, np.nan)
    best = theta.copy()
    best_loss = np.inf
    theta = theta.copy()
    for e in range(epochs + 1):
        loss = batch_loss_grad(theta, S, H, n_obs, s0s, u_all, y_all, offsets, grad)
        hist[e] = loss
        if not math.isfinite(loss):
            return best, hist[:e + 1], e
        if loss < best_loss:
            best_loss = loss
            best[:] = theta
        if e == epochs or loss < tol:
            return best, hist[:e + 1], -1
        norm = 0.0
        for i in range(P):
            norm += grad[i] * grad[i]
        norm = math.sqrt(norm)
        if not math.isfinite(norm):
            return best, hist[:e + 1], e
        factor = clip / norm if norm > clip else 1.0
        t = e + 1
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        lr = lrs[e]
        for i in range(P):
            g = grad[i] * factor
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            theta[i] -= lr * ((m[i] / c1) / (math.sqrt(v[i] / c2) + eps) + weight_decay * theta[i])
    return best, hist, -1
