"""Compiled inner loops.

Per-sensor parameters are stored as flat vectors so the kernels stay simple:

    measurement map f:  theta = [alpha(M), w(M), k(M), b]          length 3M+1
    inverse map v:      theta = [alpha(M), w(M), k(M), b, gamma]   length 3M+2

The same evaluation/derivative code serves both layouts; the trailing gamma
entry is detected from the vector length.
"""

import numba as nb
import numpy as np

jit = nb.njit(cache=True)

MAX_EXPAND = 64
STATUS_OK = 0
STATUS_SINGULAR = 1
STATUS_NONINVERTIBLE = 2
STATUS_NONFINITE = 3


@jit
def sigmoid(x):
    if x >= 0.0:
        e = np.exp(-x)
        return 1.0 / (1.0 + e)
    e = np.exp(x)
    return e / (1.0 + e)


@jit
def map_val(theta, m, y):
    acc = theta[3 * m]
    for j in range(m):
        acc += theta[j] * sigmoid(theta[m + j] * y - theta[2 * m + j])
    if theta.shape[0] > 3 * m + 1:
        acc += theta[3 * m + 1] * y
    return acc


@jit
def map_der(theta, m, y):
    acc = 0.0
    if theta.shape[0] > 3 * m + 1:
        acc = theta[3 * m + 1]
    for j in range(m):
        s = sigmoid(theta[m + j] * y - theta[2 * m + j])
        acc += theta[j] * theta[m + j] * s * (1.0 - s)
    return acc


@jit
def map_dtheta(theta, m, y, out):
    """Partial derivatives of the map value w.r.t. its flat parameters."""
    for j in range(m):
        s = sigmoid(theta[m + j] * y - theta[2 * m + j])
        sp = s * (1.0 - s)
        out[j] = s
        out[m + j] = theta[j] * y * sp
        out[2 * m + j] = -theta[j] * sp
    out[3 * m] = 1.0
    if theta.shape[0] > 3 * m + 1:
        out[3 * m + 1] = y


@jit
def map_val_der(theta, m, y):
    val = theta[3 * m]
    der = 0.0
    if theta.shape[0] > 3 * m + 1:
        val += theta[3 * m + 1] * y
        der = theta[3 * m + 1]
    for j in range(m):
        s = sigmoid(theta[m + j] * y - theta[2 * m + j])
        val += theta[j] * s
        der += theta[j] * theta[m + j] * s * (1.0 - s)
    return val, der


@jit
def _refine(theta, m, z, tol, max_iter, lo, hi):
    """Root of map - z inside a straddling bracket [lo, hi].

    A Newton step is taken whenever it stays strictly inside the current
    bracket, otherwise the bracket is bisected; the iterate can never leave
    the bracket, so this converges at least as fast as plain bisection.
    Stops once |map(x) - z| <= tol or the bracket stops shrinking.
    """
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx, dx = map_val_der(theta, m, x)
        fx -= z
        if abs(fx) <= tol:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
        nxt = 0.5 * (lo + hi)
        if dx > 0.0:
            cand = x - fx / dx
            if lo < cand < hi:
                nxt = cand
        if nxt <= lo or nxt >= hi or nxt == x:
            return x
        x = nxt
    return x


@jit
def map_inverse(theta, m, z, tol, max_iter):
    """Inverse of an increasing map; NaN when no bracket is found.

    The bracket starts at [-1, 1] and doubles outward until it straddles z.
    """
    lo = -1.0
    hi = 1.0
    n = 0
    while map_val(theta, m, lo) > z:
        hi = lo
        lo *= 2.0
        n += 1
        if n > MAX_EXPAND:
            return np.nan
    n = 0
    while map_val(theta, m, hi) < z:
        lo = hi
        hi *= 2.0
        n += 1
        if n > MAX_EXPAND:
            return np.nan
    return _refine(theta, m, z, tol, max_iter, lo, hi)


@jit
def map_inverse_near(theta, m, z, tol, max_iter, guess):
    """As map_inverse, but brackets outward from a nearby guess (widths doubling from 1e-3)."""
    if not np.isfinite(guess):
        return map_inverse(theta, m, z, tol, max_iter)
    h = 1e-3
    lo = guess - h
    hi = guess + h
    n = 0
    while map_val(theta, m, lo) > z:
        hi = lo
        h *= 2.0
        lo = guess - h
        n += 1
        if n > MAX_EXPAND:
            return np.nan
    n = 0
    while map_val(theta, m, hi) < z:
        lo = hi
        h *= 2.0
        hi = guess + h
        n += 1
        if n > MAX_EXPAND:
            return np.nan
    return _refine(theta, m, z, tol, max_iter, lo, hi)


@jit
def map_val_many(theta, m, ys):
    out = np.empty(ys.shape[0])
    for i in range(ys.shape[0]):
        out[i] = map_val(theta, m, ys[i])
    return out


@jit
def map_der_many(theta, m, ys):
    out = np.empty(ys.shape[0])
    for i in range(ys.shape[0]):
        out[i] = map_der(theta, m, ys[i])
    return out


@jit
def map_inverse_many(theta, m, zs, tol, max_iter):
    out = np.empty(zs.shape[0])
    for i in range(zs.shape[0]):
        out[i] = map_inverse(theta, m, zs[i], tol, max_iter)
    return out


@jit
def apply_maps(theta, m, Z):
    """Evaluate sensor n's map on row n of Z."""
    N, T = Z.shape
    out = np.empty((N, T))
    for n in range(N):
        for t in range(T):
            out[n, t] = map_val(theta[n], m, Z[n, t])
    return out


@jit
def invert_maps(theta, m, Z, tol, max_iter):
    N, T = Z.shape
    out = np.empty((N, T))
    for n in range(N):
        for t in range(T):
            out[n, t] = map_inverse(theta[n], m, Z[n, t], tol, max_iter)
    return out


@jit
def invert_maps_near(theta, m, Z, tol, max_iter, guess):
    """invert_maps started from per-entry guesses (NaN entries start cold)."""
    N, T = Z.shape
    out = np.empty((N, T))
    for n in range(N):
        for t in range(T):
            out[n, t] = map_inverse_near(theta[n], m, Z[n, t], tol, max_iter, guess[n, t])
    return out


# ---------------------------------------------------------------- projections


@jit
def soft_threshold(x, thresh):
    if x > thresh:
        return x - thresh
    if x < -thresh:
        return x + thresh
    return 0.0


@jit
def project_simplex(v, s):
    """Euclidean projection of v onto {x >= 0, sum(x) = s} (sort based)."""
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = 0.0
    tau = 0.0
    for i in range(n):
        css += u[i]
        t = (css - s) / (i + 1)
        if u[i] - t > 0.0:
            tau = t
    out = np.empty(n)
    for i in range(n):
        out[i] = max(v[i] - tau, 0.0)
    return out


@jit
def project_a_inplace(theta_i, m, z_lo, z_hi):
    theta_i[:m] = project_simplex(theta_i[:m].copy(), z_hi - z_lo)
    for j in range(m, 2 * m):
        if theta_i[j] < 0.0:
            theta_i[j] = 0.0
    theta_i[3 * m] = z_lo


@jit
def project_b_inplace(theta_i, m, gamma_min):
    for j in range(2 * m):
        if theta_i[j] < 0.0:
            theta_i[j] = 0.0
    if theta_i[3 * m + 1] < gamma_min:
        theta_i[3 * m + 1] = gamma_min


# -------------------------------------------------------- formulation A pieces


@jit
def forward_a(theta, m, A, zwin, tol, max_iter, ytil, yhat, zhat, fp):
    """One forward pass; zwin[:, 0] is z[t] and zwin[:, p] is z[t-p].

    ytil may hold starting guesses for the inverses (NaN for none); it is
    overwritten with g(z[t-p]).
    """
    N = A.shape[0]
    P = A.shape[2]
    for i in range(N):
        for p in range(P):
            ytil[i, p] = map_inverse_near(theta[i], m, zwin[i, p + 1], tol, max_iter, ytil[i, p])
    for i in range(N):
        s = 0.0
        for p in range(P):
            for j in range(N):
                s += A[i, j, p] * ytil[j, p]
        yhat[i] = s
        zhat[i] = map_val(theta[i], m, s)
        fp[i] = map_der(theta[i], m, s)


@jit
def grad_a_sample(theta, m, A, zwin, ytil, yhat, zhat, fp, eps_d, gA, gtheta):
    N = A.shape[0]
    P = A.shape[2]
    S = 2.0 * (zhat - zwin[:, 0])
    for i in range(N):
        for j in range(N):
            for p in range(P):
                gA[i, j, p] = S[i] * fp[i] * ytil[j, p]
    buf = np.empty(theta.shape[1])
    for i in range(N):
        map_dtheta(theta[i], m, yhat[i], buf)
        for q in range(buf.shape[0]):
            gtheta[i, q] = S[i] * buf[q]
        for p in range(P):
            d = map_der(theta[i], m, ytil[i, p])
            if not d > eps_d:
                return STATUS_SINGULAR
            c = 0.0
            for n in range(N):
                c += S[n] * fp[n] * A[n, i, p]
            map_dtheta(theta[i], m, ytil[i, p], buf)
            for q in range(buf.shape[0]):
                gtheta[i, q] -= c * buf[q] / d
    return STATUS_OK


@jit
def epoch_a(Z, order, theta, m, A, z_lo, z_hi, eta, thresh, tol, max_iter, eps_d, ycache):
    """Algorithm-1 pass over the sample indices in `order` (parameters updated in place).

    ycache (N x T) holds the latest inverse of every measurement and is used
    only to start each inversion close to its root.
    """
    N = A.shape[0]
    P = A.shape[2]
    zwin = np.empty((N, P + 1))
    ytil = np.empty((N, P))
    yhat = np.empty(N)
    zhat = np.empty(N)
    fp = np.empty(N)
    gA = np.empty_like(A)
    gtheta = np.empty_like(theta)
    for t in order:
        for p in range(P + 1):
            for i in range(N):
                zwin[i, p] = Z[i, t - p]
        for i in range(N):
            for p in range(P):
                ytil[i, p] = ycache[i, t - p - 1]
        forward_a(theta, m, A, zwin, tol, max_iter, ytil, yhat, zhat, fp)
        for i in range(N):
            for p in range(P):
                if np.isnan(ytil[i, p]):
                    return STATUS_NONINVERTIBLE
                ycache[i, t - p - 1] = ytil[i, p]
        status = grad_a_sample(theta, m, A, zwin, ytil, yhat, zhat, fp, eps_d, gA, gtheta)
        if status != STATUS_OK:
            return status
        for i in range(N):
            for q in range(theta.shape[1]):
                theta[i, q] -= eta * gtheta[i, q]
            project_a_inplace(theta[i], m, z_lo[i], z_hi[i])
        for i in range(N):
            for j in range(N):
                for p in range(P):
                    A[i, j, p] = soft_threshold(A[i, j, p] - eta * gA[i, j, p], thresh)
    return STATUS_OK


# -------------------------------------------------------- formulation B pieces


@jit
def grad_lagrangian_b(theta, m, A, beta, mu, zwin, n_total, gA, gtheta):
    """Gradient of the per-sample partial Lagrangian (lasso term excluded).

    n_total is the series length T used in the 1/(T-P), 1/T and 1/(T-1) weights.
    """
    N = A.shape[0]
    P = A.shape[2]
    nq = theta.shape[1]
    V = np.empty((N, P + 1))
    D = np.empty((N, P + 1, nq))
    for i in range(N):
        for q in range(P + 1):
            V[i, q] = map_val(theta[i], m, zwin[i, q])
            map_dtheta(theta[i], m, zwin[i, q], D[i, q])
    r = np.empty(N)
    for i in range(N):
        s = V[i, 0]
        for p in range(P):
            for j in range(N):
                s -= A[i, j, p] * V[j, p + 1]
        r[i] = s
    w_data = 2.0 / (n_total - P)
    for i in range(N):
        for j in range(N):
            for p in range(P):
                gA[i, j, p] = -w_data * r[i] * V[j, p + 1]
    for i in range(N):
        c0 = w_data * r[i] + beta[i] / n_total + 2.0 * mu[i] * V[i, 0] / (n_total - 1)
        for q in range(nq):
            gtheta[i, q] = c0 * D[i, 0, q]
        for p in range(P):
            c = 0.0
            for n in range(N):
                c += r[n] * A[n, i, p]
            c *= w_data
            for q in range(nq):
                gtheta[i, q] -= c * D[i, p + 1, q]


@jit
def epoch_b(Z, order, theta, m, A, beta, mu, n_total, eta_theta, eta_a, thresh,
            eta_dual, gamma_min, freeze_duals):
    """Algorithm-2 pass over `order` (parameters and duals updated in place)."""
    N = A.shape[0]
    P = A.shape[2]
    zwin = np.empty((N, P + 1))
    gA = np.empty_like(A)
    gtheta = np.empty_like(theta)
    for t in order:
        for p in range(P + 1):
            for i in range(N):
                zwin[i, p] = Z[i, t - p]
        grad_lagrangian_b(theta, m, A, beta, mu, zwin, n_total, gA, gtheta)
        for i in range(N):
            for q in range(theta.shape[1]):
                theta[i, q] -= eta_theta * gtheta[i, q]
            project_b_inplace(theta[i], m, gamma_min)
        for i in range(N):
            for j in range(N):
                for p in range(P):
                    A[i, j, p] = soft_threshold(A[i, j, p] - eta_a * gA[i, j, p], thresh)
        if not freeze_duals:
            for i in range(N):
                vz = map_val(theta[i], m, zwin[i, 0])
                beta[i] += eta_dual * (vz / n_total)
                mu[i] += eta_dual * ((vz * vz - (n_total - 1.0) / n_total) / (n_total - 1.0))
        for i in range(N):
            if not np.isfinite(beta[i]) or not np.isfinite(mu[i]):
                return STATUS_NONFINITE
    return STATUS_OK


@jit
def full_grad_b(Z, theta, m, A, beta, mu, n_total, gtheta_sum, gA_sum):
    """Sum of per-sample Lagrangian gradients over t = P..T-1."""
    N = A.shape[0]
    P = A.shape[2]
    zwin = np.empty((N, P + 1))
    gA = np.empty_like(A)
    gtheta = np.empty_like(theta)
    gtheta_sum[:] = 0.0
    gA_sum[:] = 0.0
    for t in range(P, Z.shape[1]):
        for p in range(P + 1):
            for i in range(N):
                zwin[i, p] = Z[i, t - p]
        grad_lagrangian_b(theta, m, A, beta, mu, zwin, n_total, gA, gtheta)
        gtheta_sum += gtheta
        gA_sum += gA
