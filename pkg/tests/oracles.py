"""Independent reference implementations used as test oracles.

Everything here is written straight from public algorithm descriptions
or as naive per-element loops, deliberately sharing no code with the
package so that agreement is evidence, not tautology.
"""

import numpy as np

M64 = (1 << 64) - 1


def splitmix64_stream(seed, n):
    """Reference splitmix64, transcribed from the public specification."""
    out = []
    x = seed & M64
    for _ in range(n):
        x = (x + 0x9E3779B97F4A7C15) & M64
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
        out.append((z ^ (z >> 31)) & M64)
    return out


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & M64


def xoshiro256pp_stream(state4, n):
    """Reference xoshiro256++ advanced from an explicit 4-word state."""
    s = list(state4)
    out = []
    for _ in range(n):
        out.append((_rotl((s[0] + s[3]) & M64, 23) + s[0]) & M64)
        t = (s[1] << 17) & M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
    return out


def mlp_forward_loops(layer_params, x_row):
    """Forward pass for one sample using plain Python loops."""
    a = [float(v) for v in x_row]
    for idx, (w, b) in enumerate(layer_params):
        d_in = len(w)
        d_out = len(w[0])
        z = []
        for j in range(d_out):
            s = float(b[j])
            for i in range(d_in):
                s += a[i] * float(w[i][j])
            z.append(s)
        if idx < len(layer_params) - 1:
            a = [max(v, 0.0) for v in z]
        else:
            a = z
    return np.array(a)


def central_diff_grad(f, x, h=1e-5):
    """Coordinate-wise central finite differences of a scalar function."""
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def central_diff_hvp(grad_f, x, v, h=1e-4):
    """(grad(x + h v) - grad(x - h v)) / (2 h)."""
    return (grad_f(x + h * v) - grad_f(x - h * v)) / (2.0 * h)


def jacobi_eigenvalues(a, sweeps=100, tol=1e-14):
    """Cyclic Jacobi rotation eigensolver for symmetric matrices."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off < tol * max(1.0, np.sqrt(np.sum(np.diag(a) ** 2))):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


def hsic_literal(x, y):
    """The centering-matrix trace formula evaluated verbatim."""
    m = x.shape[0]
    h = np.eye(m) - np.ones((m, m)) / m
    return np.trace(x @ x.T @ h @ y @ y.T @ h) / (m - 1) ** 2


def softmax_reference(logits):
    """Plain exp/normalize without the max-subtraction trick."""
    e = np.exp(np.asarray(logits, dtype=np.float64))
    return e / e.sum(axis=1, keepdims=True)


def count_correct_loops(logits, labels):
    """Accuracy numerator with explicit loops and lowest-index argmax."""
    correct = 0
    for row, lab in zip(logits, labels):
        best = 0
        for j in range(1, len(row)):
            if row[j] > row[best]:
                best = j
        if best == lab:
            correct += 1
    return correct


def l2_loops(a, b):
    s = 0.0
    for x, y in zip(a, b):
        s += (float(x) - float(y)) ** 2
    return s**0.5
