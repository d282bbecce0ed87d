"""Independent reference implementations used by the tests.

Everything here is deliberately slow and literal: central finite differences,
breadth-first search on a fine grid, quadratic-time return sums. The point is
that none of these share code with the package.
"""

import numpy as np


def fd_grad(f, x, h=1e-5):
    """Central finite differences of scalar f at flat x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def assert_grads_match(g, g_ref, rtol=1e-5, floor=1e-8):
    """Relative error < rtol on every coordinate with |g| above the floor."""
    g = np.asarray(g)
    g_ref = np.asarray(g_ref)
    assert g.shape == g_ref.shape
    mask = np.abs(g) > floor
    denom = np.maximum(np.abs(g), np.abs(g_ref))
    rel = np.abs(g - g_ref)[mask] / denom[mask]
    assert mask.any(), "gradient is entirely below the comparison floor"
    assert rel.max() < rtol, f"worst relative error {rel.max():.3e} over {mask.sum()} coords"


def gae_quadratic(rewards, values, last_value, dones, gamma, lam):
    """O(T^2) advantage estimate: explicit sum of discounted TD residuals.

    A_t = sum_{l=0}^{T-1-t} (gamma*lam)^l delta_{t+l}, truncated at episode
    boundaries (done flags) exactly like the streaming recursion should.
    """
    T = len(rewards)
    v_next = np.append(values[1:], last_value)
    nonterm = 1.0 - np.asarray(dones, dtype=np.float64)
    delta = rewards + gamma * v_next * nonterm - values
    adv = np.zeros(T)
    for t in range(T):
        acc = 0.0
        coef = 1.0
        for l in range(t, T):
            acc += coef * delta[l]
            if dones[l]:
                break
            coef *= gamma * lam
        adv[t] = acc
    return adv


def smooth_direct(y, sigma):
    """Gaussian smoothing by direct convolution with a renormalized window."""
    y = np.asarray(y, dtype=np.float64)
    if sigma <= 0:
        return y.copy()
    r = int(np.floor(2.0 * sigma))
    out = np.zeros_like(y)
    for i in range(len(y)):
        num = 0.0
        den = 0.0
        for j in range(max(0, i - r), min(len(y), i + r + 1)):
            w = np.exp(-((j - i) ** 2) / (2.0 * sigma ** 2))
            num += w * y[j]
            den += w
        out[i] = num / den
    return out


def plateau_scan(smoothed, window, eps, budget, guard=0.15):
    """First index t with s[t] + eps >= s[t'] for every t' in (t, t+window],
    where t is confined to the interior of the epoch budget (the first and
    last `guard` fraction are skipped) and the full window must exist inside
    the recorded curve. Returns None when nothing qualifies."""
    n = len(smoothed)
    lo = int(np.ceil(round(guard * budget, 9)))
    hi = budget - lo
    for t in range(lo, hi + 1):
        if t + window > n - 1:
            break
        if all(smoothed[t] + eps >= smoothed[u] for u in range(t + 1, t + window + 1)):
            return t
    return None


def bfs_geodesic(passable_fn, src, dst, step=0.005):
    """Shortest-path length between two points on a fine 4-connected grid.

    passable_fn takes (x, y) and says whether the point is inside the free
    space. Distances are step * (number of grid moves), so the result
    converges to the L1 geodesic as step shrinks.
    """
    from collections import deque

    def snap(p):
        return (round(p[0] / step), round(p[1] / step))

    s, d = snap(src), snap(dst)
    seen = {s: 0}
    q = deque([s])
    while q:
        node = q.popleft()
        if node == d:
            return seen[node] * step
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (node[0] + dx, node[1] + dy)
            if nxt in seen:
                continue
            if not passable_fn(nxt[0] * step, nxt[1] * step):
                continue
            seen[nxt] = seen[node] + 1
            q.append(nxt)
    return np.inf
