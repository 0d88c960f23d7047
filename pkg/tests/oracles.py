"""Slow, loop-based reference implementations and a finite-difference checker.

Nothing here imports the package's numerical code, so agreement with it is
evidence rather than tautology.
"""

import math

import numpy as np


def spline(q):
    # cubic B-spline written out independently of the package
    if q < 0:
        raise ValueError(q)
    if q <= 1.0:
        return 2.0 / 3.0 - q * q + 0.5 * q * q * q
    if q <= 2.0:
        t = 2.0 - q
        return t * t * t / 6.0
    return 0.0


def nodes(dims, spacing=1.0, origin=(0.0, 0.0, 0.0)):
    """Node coordinates, x fastest, trimmed to 2D when nz == 1."""
    nx, ny, nz = dims
    dim = 2 if nz == 1 else 3
    out = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                p = (origin[0] + spacing * i, origin[1] + spacing * j, origin[2] + spacing * k)
                out.append(p[:dim])
    return out


def p2g(pos, vals, h, dims, spacing=1.0, origin=(0.0, 0.0, 0.0), eps=1e-12):
    out = []
    for x in nodes(dims, spacing, origin):
        num = den = 0.0
        for p, v in zip(pos, vals):
            w = spline(math.dist(x, p) / h)
            num += w * v
            den += w
        out.append(num / den if den >= eps else 0.0)
    return np.array(out)


def sph(pos, masses, h, dims, spacing=1.0, origin=(0.0, 0.0, 0.0)):
    out = []
    for x in nodes(dims, spacing, origin):
        out.append(sum(m * spline(math.dist(x, p) / h) for p, m in zip(pos, masses)))
    return np.array(out)


def rays(values, axis):
    """(H, W, n) rays of an (nx, ny, nz) array for one of the six axis views."""
    nx, ny, nz = values.shape
    ax = "xyz".index(axis[1])
    sign = 1 if axis[0] == "+" else -1
    shape = values.shape
    trans = [a for a in range(3) if a != ax]
    hgt, wid, n = shape[trans[1]], shape[trans[0]], shape[ax]
    out = np.zeros((hgt, wid, n))
    for r in range(hgt):
        for c in range(wid):
            for s in range(n):
                idx = [0, 0, 0]
                idx[trans[0]] = c
                idx[trans[1]] = r
                idx[ax] = s if sign > 0 else n - 1 - s
                out[r, c, s] = values[tuple(idx)]
    return out


def render(values, axis, mode, gamma, emission, dr, colors=None):
    d = rays(values, axis)
    cs = None if colors is None else [rays(c, axis) for c in colors]
    hgt, wid, n = d.shape
    out = np.zeros((hgt, wid, 1 if colors is None else 3))
    for r in range(hgt):
        for c in range(wid):
            if mode == "liquid":
                tot = sum(max(d[r, c, s], 0.0) for s in range(n))
                out[r, c, 0] = 1.0 - math.exp(-gamma * tot * dr)
                continue
            trans = 1.0
            acc = [0.0, 0.0, 0.0]
            for s in range(n):
                ds = max(d[r, c, s], 0.0)
                if cs is None:
                    acc[0] += trans * emission * ds * dr
                else:
                    for ch in range(3):
                        acc[ch] += trans * emission * ds * max(cs[ch][r, c, s], 0.0) * dr
                trans *= math.exp(-gamma * ds * dr)
            out[r, c, :] = acc[: out.shape[2]]
    return out


def conv(x, w, b):
    c_in, hgt, wid = x.shape
    c_out, _, k, _ = w.shape
    p = k // 2
    out = np.zeros((c_out, hgt, wid))
    for o in range(c_out):
        for y in range(hgt):
            for xx in range(wid):
                s = b[o]
                for i in range(c_in):
                    for dy in range(k):
                        for dx in range(k):
                            yy, xs = y + dy - p, xx + dx - p
                            if 0 <= yy < hgt and 0 <= xs < wid:
                                s += w[o, i, dy, dx] * x[i, yy, xs]
                out[o, y, xx] = s
    return out


def pool(x):
    c, hgt, wid = x.shape
    out = np.zeros((c, hgt // 2, wid // 2))
    for ch in range(c):
        for y in range(hgt // 2):
            for xx in range(wid // 2):
                out[ch, y, xx] = 0.25 * (
                    x[ch, 2 * y, 2 * xx] + x[ch, 2 * y + 1, 2 * xx] + x[ch, 2 * y, 2 * xx + 1] + x[ch, 2 * y + 1, 2 * xx + 1]
                )
    return out


def features(pixels, layers, style_layers):
    """layers: list of (weight, bias, pool). Returns {idx: (C, H, W)}."""
    px = np.asarray(pixels, dtype=float)
    if px.ndim == 2:
        px = px[:, :, None]
    if px.shape[2] == 1 and layers[0][0].shape[1] == 3:
        px = np.repeat(px, 3, axis=2)
    x = np.transpose(px, (2, 0, 1))
    feats = {}
    for i, (w, b, do_pool) in enumerate(layers):
        if i > max(style_layers):
            break
        a = np.maximum(conv(x, w, b), 0.0)
        if i in style_layers:
            feats[i] = a
        x = pool(a) if do_pool else a
    return feats


def gram(f):
    c = f.shape[0]
    flat = f.reshape(c, -1)
    g = np.zeros((c, c))
    for i in range(c):
        for j in range(c):
            g[i, j] = sum(flat[i, k] * flat[j, k] for k in range(flat.shape[1]))
    return g


def fd_grad(fun, x, step=1e-5):
    """Central differences of a scalar function over every entry of ``x``."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (fun(xp) - fun(xm)) / (2 * step)
    return g


def rel_err(analytic, numeric, floor=1e-6):
    """Max entrywise |a - f| / max(|f|, floor * max|f|)."""
    a = np.asarray(analytic, dtype=float).ravel()
    f = np.asarray(numeric, dtype=float).ravel()
    scale = np.maximum(np.abs(f), floor * max(np.abs(f).max(), 1e-300))
    return float(np.max(np.abs(a - f) / scale)) if a.size else 0.0
