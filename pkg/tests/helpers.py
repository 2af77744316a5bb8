"""Independent oracles used by the test suite.

Everything here is deliberately written without reference to the package
internals: scalar loops, minute scans, and brute-force enumeration pin the
semantics that the fast implementations must match.
"""

import math
from datetime import timedelta

import numpy as np


def minute_scan_demand(sessions, origin, n_intervals):
    """Count active sessions by scanning every minute of the grid.

    A session is active at minute t iff start <= t < charge_end.
    """
    counts = [0] * n_intervals
    for k in range(n_intervals):
        seen = set()
        for step in range(15):
            t = origin + timedelta(minutes=15 * k + step)
            for idx, s in enumerate(sessions):
                if s.start <= t < s.charge_end:
                    seen.add(idx)
        counts[k] = len(seen)
    return counts


def enumerate_windows(matrix, p, m):
    """Brute-force sliding windows: inputs rows [i, i+p), targets column 0
    of rows [i+p, i+p+m), for every valid start i."""
    matrix = np.asarray(matrix, dtype=float)
    T = matrix.shape[0]
    inputs, targets = [], []
    for i in range(T - p - m + 1):
        inputs.append(matrix[i:i + p].copy())
        targets.append(matrix[i + p:i + p + m, 0].copy())
    return np.array(inputs), np.array(targets)


def scalar_sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def scalar_lstm_step(x, h_prev, c_prev, W, U, b):
    """One LSTM step written with explicit index loops.

    W/U/b are dicts keyed by gate ("f", "i", "C", "o") holding plain nested
    lists; x, h_prev, c_prev are flat lists.
    """
    hidden = len(h_prev)
    n = len(x)

    def affine(gate, row):
        acc = b[gate][row]
        for j in range(n):
            acc += W[gate][row][j] * x[j]
        for j in range(hidden):
            acc += U[gate][row][j] * h_prev[j]
        return acc

    h_out, c_out = [], []
    for r in range(hidden):
        f = scalar_sigmoid(affine("f", r))
        i = scalar_sigmoid(affine("i", r))
        chat = math.tanh(affine("C", r))
        o = scalar_sigmoid(affine("o", r))
        c = f * c_prev[r] + i * chat
        h = o * math.tanh(c)
        c_out.append(c)
        h_out.append(h)
    return h_out, c_out


def central_difference(f, arr, eps=1e-5):
    """Numeric gradient of scalar f w.r.t. every element of arr, in place."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + eps
        up = f()
        arr[idx] = old - eps
        down = f()
        arr[idx] = old
        grad[idx] = (up - down) / (2.0 * eps)
    return grad


def relative_error(a, b, floor=1e-8):
    return np.abs(a - b) / (np.abs(a) + np.abs(b) + floor)


def scalar_adam_trajectory(grad_fn, w0, lr, steps,
                           beta1=0.9, beta2=0.999, eps=1e-8):
    """Reference scalar Adam: returns the weight after each update."""
    w = w0
    m = 0.0
    v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        w = w - lr * m_hat / (math.sqrt(v_hat) + eps)
        out.append(w)
    return out


def linear_window_model(weights):
    """f(window) = sum_j w_j * mean_t(window[t, j]), emitted as a length-1
    forecast so it plugs into the shapley predict_fn interface."""
    weights = np.asarray(weights, dtype=float)

    def predict(window):
        return np.array([float(np.mean(window, axis=0) @ weights)])

    return predict


def linear_shapley(weights, test, background, groups):
    """Closed-form grouped Shapley values for the linear window model."""
    weights = np.asarray(weights, dtype=float)
    t_mean = np.mean(np.asarray(test, dtype=float), axis=0)
    b_mean = np.mean(np.asarray(background, dtype=float), axis=0)
    phi = {}
    for g in groups:
        phi[g.name] = float(sum(weights[j] * (t_mean[j] - b_mean[j])
                                for j in g.columns))
    return phi


def direct_softmax(scores):
    exps = [math.exp(s) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]
