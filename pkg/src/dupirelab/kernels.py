"""Hot loops, each with a numba version and a pure-numpy version.

``BACKEND`` names the implementation in use; both produce the same sums in
the same order, so results agree to the last few ulps.
"""
import numpy as np

from ._accel import JIT_OPTIONS, PAR_OPTIONS, USE_NUMBA, njit, prange

BACKEND = "numba" if USE_NUMBA else "numpy"


# --- regularization windows ------------------------------------------------
#
# For a target node n and window length p (in cells), the cells
# i = max(1, n-p+1) .. n contribute the trapezoid of the integrand between
# the right value at t_{i-1} and the left limit at t_i.

@njit(**PAR_OPTIONS)
def _window_fwd_nb(hr, hl, xr, xl, p, half_dt):
    m = xr.shape[0]
    out = np.zeros(m)
    for n in prange(1, m):
        acc = 0.0
        xn = xr[n]
        for q in range(min(p, n)):
            i = n - q
            acc += half_dt * (hr[i - 1] * (xn - xr[i - 1]) + hl[i] * (xn - xl[i]))
        out[n] = acc
    return out


@njit(**PAR_OPTIONS)
def _window_qc_nb(xr, xl, yr, yl, p, half_dt):
    m = xr.shape[0]
    out = np.zeros(m)
    for n in prange(1, m):
        acc = 0.0
        xn = xr[n]
        yn = yr[n]
        for q in range(min(p, n)):
            i = n - q
            acc += half_dt * ((xn - xr[i - 1]) * (yn - yr[i - 1]) + (xn - xl[i]) * (yn - yl[i]))
        out[n] = acc
    return out


def _window_fwd_np(hr, hl, xr, xl, p, half_dt):
    m = xr.shape[0]
    out = np.zeros(m)
    for q in range(min(p, m - 1)):
        n = np.arange(q + 1, m)
        i = n - q
        out[n] += half_dt * (hr[i - 1] * (xr[n] - xr[i - 1]) + hl[i] * (xr[n] - xl[i]))
    return out


def _window_qc_np(xr, xl, yr, yl, p, half_dt):
    m = xr.shape[0]
    out = np.zeros(m)
    for q in range(min(p, m - 1)):
        n = np.arange(q + 1, m)
        i = n - q
        out[n] += half_dt * ((xr[n] - xr[i - 1]) * (yr[n] - yr[i - 1]) + (xr[n] - xl[i]) * (yr[n] - yl[i]))
    return out


def window_fwd(hr, hl, xr, xl, p, half_dt, backend=None):
    f = _window_fwd_nb if (backend or BACKEND) == "numba" else _window_fwd_np
    return f(hr, hl, xr, xl, int(p), float(half_dt))


def window_qc(xr, xl, yr, yl, p, half_dt, backend=None):
    f = _window_qc_nb if (backend or BACKEND) == "numba" else _window_qc_np
    return f(xr, xl, yr, yl, int(p), float(half_dt))


# --- nested Monte Carlo for the integral-payoff value function -------------
#
# Every inner sample has its own 64-bit key derived from (seed, path, node,
# sample); draw j of that sample is mix64(key + (j+1) * GOLDEN). Streams are
# therefore addressable in any order, which is what makes the jitted and the
# numpy versions draw the same numbers.

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SAMPLE = np.uint64(0xD1B54A32D192ED03)
_H0 = np.uint64(0x6A09E667F3BCC909)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# payoff codes
LINEAR, QUADRATIC, TANH = 0, 1, 2
# law codes
UNIFORM, TWO_POINT, TABLE = 0, 1, 2


@njit(**JIT_OPTIONS)
def mix64_nb(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(**JIT_OPTIONS)
def node_key_nb(seed, path, node):
    h = _H0
    h = mix64_nb(h ^ mix64_nb(np.uint64(seed) + _GOLDEN))
    h = mix64_nb(h ^ mix64_nb(np.uint64(path) + _GOLDEN))
    h = mix64_nb(h ^ mix64_nb(np.uint64(node) + _GOLDEN))
    return h


@njit(**JIT_OPTIONS)
def _uniform(skey, j):
    return float(mix64_nb(skey + np.uint64(j + 1) * _GOLDEN) >> _S11) * _INV53


@njit(**JIT_OPTIONS)
def _payoff(kind, u):
    if kind == LINEAR:
        return u
    if kind == QUADRATIC:
        return u * u
    return np.tanh(u)


@njit(**JIT_OPTIONS)
def _payoff_d(kind, u):
    if kind == LINEAR:
        return 1.0
    if kind == QUADRATIC:
        return 2.0 * u
    t = np.tanh(u)
    return 1.0 - t * t


@njit(**JIT_OPTIONS)
def _mark(law, lp, ppf, u):
    if law == UNIFORM:
        return lp[0] + u * (lp[1] - lp[0])
    if law == TWO_POINT:
        return lp[0] if u < 0.5 else lp[1]
    n = ppf.shape[0] - 1
    z = u * n
    i = min(int(z), n - 1)
    f = z - i
    return ppf[i] + f * (ppf[i + 1] - ppf[i])


@njit(**JIT_OPTIONS)
def sample_R_nb(skey, k, D, sqrtV, cdf, cj, law, lp, ppf, pos):
    """One draw of the remaining integral ``R_k``; ``pos`` is scratch space."""
    m = D.shape[0]
    u1 = _uniform(skey, 0)
    u2 = _uniform(skey, 1)
    z = np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2)
    r = D[k] + sqrtV[k] * z
    n = m - 1 - k
    if n == 0:
        return r
    u3 = _uniform(skey, 2)
    row = cdf[k]
    c = 0
    jmax = row.shape[0] - 1
    while c < jmax and u3 > row[c]:
        c += 1
    if c > n:
        c = n
    if c > pos.shape[0]:
        c = pos.shape[0]
    # Floyd's selection of c distinct offsets in [0, n)
    for j in range(c):
        jj = n - c + j
        t = int(_uniform(skey, 3 + j) * (jj + 1))
        if t > jj:
            t = jj
        hit = False
        for l in range(j):
            if pos[l] == t:
                hit = True
                break
        pos[j] = jj if hit else t
    for j in range(c):
        i = k + 1 + pos[j]
        r += cj[i] * _mark(law, lp, ppf, _uniform(skey, 3 + c + j))
    return r


@njit(**JIT_OPTIONS)
def _sample_key(nk, s):
    return mix64_nb(nk + np.uint64(s + 1) * _SAMPLE)


@njit(**PAR_OPTIONS)
def clark_paths_nb(seed, paths, a_post, a_pre, tail, gamma, D, sqrtV, cdf, cj, law, lp, ppf, yq, wq, payoff, M, jcap):
    """Per path and node: v, se(v), grad v, se(grad v), v at the pre-jump state, jump compensator."""
    P, m = a_post.shape
    Q = yq.shape[0]
    out = np.zeros((P, m, 6))
    for p in prange(P):
        pos = np.zeros(jcap, dtype=np.int64)
        cq = np.zeros(Q)
        nq = np.zeros(Q)
        for k in range(m):
            nk = node_key_nb(seed, paths[p], k)
            sv = 0.0
            sv2 = 0.0
            sg = 0.0
            sg2 = 0.0
            sb = 0.0
            for q in range(Q):
                cq[q] = 0.0
                nq[q] = 0.0
            pre = k >= 1
            for s in range(M):
                r = sample_R_nb(_sample_key(nk, s), k, D, sqrtV, cdf, cj, law, lp, ppf, pos)
                u = a_post[p, k] + r
                gv = _payoff(payoff, u)
                gd = _payoff_d(payoff, u)
                sv += gv
                sv2 += gv * gv
                sg += gd
                sg2 += gd * gd
                if pre:
                    ub = a_pre[p, k] + r
                    gb = _payoff(payoff, ub)
                    sb += gb
                    q = s % Q
                    cq[q] += _payoff(payoff, ub + gamma[k] * yq[q] * tail[k]) - gb
                    nq[q] += 1.0
            mv = sv / M
            mg = sg / M
            out[p, k, 0] = mv
            out[p, k, 1] = np.sqrt(max(sv2 / M - mv * mv, 0.0) / max(M - 1, 1))
            out[p, k, 2] = mg * tail[k]
            out[p, k, 3] = np.sqrt(max(sg2 / M - mg * mg, 0.0) / max(M - 1, 1)) * abs(tail[k])
            if pre:
                out[p, k, 4] = sb / M
                acc = 0.0
                for q in range(Q):
                    if nq[q] > 0:
                        acc += wq[q] * cq[q] / nq[q]
                out[p, k, 5] = acc
    return out


# numpy versions -----------------------------------------------------------

def _mix64_np(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def node_key_np(seed, path, node):
    with np.errstate(over="ignore"):
        h = np.full(np.shape(node), _H0, dtype=np.uint64)
        for v in (seed, path, node):
            h = _mix64_np(h ^ _mix64_np(np.asarray(v, dtype=np.uint64) + _GOLDEN))
    return h


def _uniform_np(skey, j):
    with np.errstate(over="ignore"):
        z = _mix64_np(skey + np.asarray(j + 1, dtype=np.uint64) * _GOLDEN)
    return (z >> _S11).astype(float) * _INV53


def payoff_np(kind, u):
    if kind == LINEAR:
        return np.array(u, dtype=float)
    if kind == QUADRATIC:
        return u * u
    return np.tanh(u)


def payoff_d_np(kind, u):
    if kind == LINEAR:
        return np.ones_like(u)
    if kind == QUADRATIC:
        return 2.0 * u
    t = np.tanh(u)
    return 1.0 - t * t


def _mark_np(law, lp, ppf, u):
    if law == UNIFORM:
        return lp[0] + u * (lp[1] - lp[0])
    if law == TWO_POINT:
        return np.where(u < 0.5, lp[0], lp[1])
    n = ppf.shape[0] - 1
    z = u * n
    i = np.minimum(z.astype(np.int64), n - 1)
    f = z - i
    return ppf[i] + f * (ppf[i + 1] - ppf[i])


def sample_keys_np(nk, M):
    with np.errstate(over="ignore"):
        return _mix64_np(np.uint64(nk) + (np.arange(M, dtype=np.uint64) + np.uint64(1)) * _SAMPLE)


def sample_R_np(skeys, k, D, sqrtV, cdf, cj, law, lp, ppf, jcap):
    """Vectorized ``sample_R_nb`` over an array of sample keys."""
    m = D.shape[0]
    u1 = _uniform_np(skeys, 0)
    u2 = _uniform_np(skeys, 1)
    r = D[k] + sqrtV[k] * (np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2))
    n = m - 1 - k
    if n == 0:
        return r
    u3 = _uniform_np(skeys, 2)
    row = cdf[k]
    jmax = row.shape[0] - 1
    c = np.searchsorted(row[:jmax], u3, side="left")
    c = np.minimum(np.minimum(c, n), jcap)
    cmax = int(c.max(initial=0))
    pos = np.zeros((len(skeys), max(cmax, 1)), dtype=np.int64)
    for j in range(cmax):
        act = c > j
        jj = n - c + j
        t = np.minimum((_uniform_np(skeys, 3 + j) * (jj + 1)).astype(np.int64), jj)
        hit = np.any(pos[:, :j] == t[:, None], axis=1) if j else np.zeros(len(t), dtype=bool)
        pos[:, j] = np.where(act, np.where(hit, jj, t), 0)
    for j in range(cmax):
        act = c > j
        if not act.any():
            continue
        u = _uniform_np(skeys, 3 + c + j)
        i = np.where(act, k + 1 + pos[:, j], k + 1)
        r = r + np.where(act, cj[np.minimum(i, m - 1)] * _mark_np(law, lp, ppf, u), 0.0)
    return r


def clark_paths_np(seed, paths, a_post, a_pre, tail, gamma, D, sqrtV, cdf, cj, law, lp, ppf, yq, wq, payoff, M, jcap):
    P, m = a_post.shape
    Q = yq.shape[0]
    out = np.zeros((P, m, 6))
    q_of = np.arange(M) % Q
    for p in range(P):
        for k in range(m):
            nk = node_key_np(seed, paths[p], k)
            r = sample_R_np(sample_keys_np(nk, M), k, D, sqrtV, cdf, cj, law, lp, ppf, jcap)
            u = a_post[p, k] + r
            gv = payoff_np(payoff, u)
            gd = payoff_d_np(payoff, u)
            mv, mg = gv.mean(), gd.mean()
            out[p, k, 0] = mv
            out[p, k, 1] = np.sqrt(max((gv * gv).mean() - mv * mv, 0.0) / max(M - 1, 1))
            out[p, k, 2] = mg * tail[k]
            out[p, k, 3] = np.sqrt(max((gd * gd).mean() - mg * mg, 0.0) / max(M - 1, 1)) * abs(tail[k])
            if k >= 1:
                ub = a_pre[p, k] + r
                gb = payoff_np(payoff, ub)
                out[p, k, 4] = gb.mean()
                diff = payoff_np(payoff, ub + gamma[k] * yq[q_of] * tail[k]) - gb
                sums = np.bincount(q_of, weights=diff, minlength=Q)
                cnt = np.bincount(q_of, minlength=Q)
                out[p, k, 5] = np.sum(np.where(cnt > 0, wq * sums / np.maximum(cnt, 1), 0.0))
    return out


def clark_paths(*args, backend=None):
    f = clark_paths_nb if (backend or BACKEND) == "numba" else clark_paths_np
    return f(*args)
