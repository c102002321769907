"""Numerical engines behind the max-form equivocation statements.

A point of the feasible set is parametrized by two row-stochastic arrays

    w[x, u] = P(U = u | X = x)      v[u, y] = P(Y = y | U = u)

so the joint ``T[x, u, y] = P(x) w[x, u] v[u, y]`` has the prescribed X
marginal and X - U - Y Markov by construction. Everything here works on a
leading batch axis, so all restarts (or all grid points in a chunk) are
evaluated by the same numpy calls.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import minimize

LOG2E = 1.0 / math.log(2.0)
_TINY = 1e-300

# objective codes
RECONSTRUCTION = "reconstruction"
JOINT = "joint"


def _H(m, axes):
    """Batched entropy in bits summed over ``axes`` (0 log 0 = 0)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(m > 0, m * np.log2(np.where(m > 0, m, 1.0)), 0.0)
    return -t.sum(axis=axes)


def _gH(m):
    """Elementwise derivative of -sum m log2 m."""
    return -(np.log2(np.maximum(m, _TINY)) + LOG2E)


class Problem:
    """One instance of the max-form search: source, constraints, objective."""

    def __init__(self, px, dmat, limit, rate, key_rate, objective, hard_tol=1e-11):
        self.px = np.asarray(px, dtype=float)
        self.dmat = np.asarray(dmat, dtype=float)
        self.limit = float(limit)
        self.rate = float(rate)
        self.key_rate = float(key_rate)
        self.objective = objective
        self.hard_tol = hard_tol
        self.hx = float(_H(self.px, 0))

    def joint(self, w, v):
        return self.px[None, :, None, None] * w[:, :, :, None] * v[:, None, :, :]

    def evaluate(self, w, v, grad=False):
        """Objective, constraint values and (optionally) gradients for a batch."""
        T = self.joint(w, v)
        Ty = T.sum(axis=(1, 2))
        Tu = T.sum(axis=(1, 3))
        Tuy = T.sum(axis=1)
        Txy = T.sum(axis=2)
        Hy = _H(Ty, 1)
        Hu = _H(Tu, 1)
        Hxy = _H(Txy, (1, 2))
        Ixy = np.maximum(self.hx + Hy - Hxy, 0.0)
        Ed = np.einsum("kxy,xy->k", Txy, self.dmat)
        if self.objective == RECONSTRUCTION:
            A = Hy
            B = _H(Tuy, (1, 2)) - Hu + self.key_rate
        else:
            A = Hxy
            B = _H(T, (1, 2, 3)) - Hu + self.key_rate
        out = {
            "f": np.minimum(A, B),
            "A": A,
            "B": B,
            "Ed": Ed,
            "Ixy": Ixy,
            "s_d": self.limit - Ed,
            "s_r": self.rate - Ixy,
        }
        if not grad:
            return out
        gHu = _gH(Tu)[:, None, :, None]
        if self.objective == RECONSTRUCTION:
            gA = np.broadcast_to(_gH(Ty)[:, None, None, :], T.shape)
            gB = np.broadcast_to(_gH(Tuy)[:, None, :, :] - gHu, T.shape)
        else:
            gA = np.broadcast_to(_gH(Txy)[:, :, None, :], T.shape)
            gB = _gH(T) - gHu
        gI = np.broadcast_to(
            _gH(Ty)[:, None, None, :] - _gH(Txy)[:, :, None, :] + _gH(self.px)[None, :, None, None], T.shape
        )
        gE = np.broadcast_to(self.dmat[None, :, None, :], T.shape)
        out.update(gA=gA, gB=gB, gI=gI, gE=gE)
        return out

    def chain(self, G, w, v, precondition=True):
        """Pull a gradient with respect to T back to (w, v).

        The raw partials carry a factor P(x) (rows of w) or P(u) (rows of v).
        Preconditioning divides it out, which equalizes step sizes across
        rows and keeps every direction an ascent direction.
        """
        gw = np.einsum("kxuy,kuy->kxu", G, v)
        gv = np.einsum("kxuy,x,kxu->kuy", G, self.px, w)
        if precondition:
            pu = np.einsum("x,kxu->ku", self.px, w)
            gv = gv / np.maximum(pu, 1e-6)[:, :, None]
        else:
            gw = gw * self.px[None, :, None]
        return gw, gv

    def feasible(self, ev):
        return (ev["s_d"] >= -self.hard_tol) & (ev["s_r"] >= -self.hard_tol)

    def violation(self, ev):
        return np.maximum(-ev["s_d"], 0.0) + np.maximum(-ev["s_r"], 0.0)


def project_rows(y):
    """Euclidean projection of every last-axis row onto the probability simplex."""
    n = y.shape[-1]
    u = -np.sort(-y, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    rho = n - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(y - theta, 0.0)


# restart phases: -1 restores feasibility, 0..len(mus)-1 run ascent with
# barrier weight mus[phase], DONE/FAILED are terminal
DONE = 100
FAILED = 101
BARRIER_SHIFT = 1e-9
# |A - B| below this counts as being on the hinge ridge
RIDGE_BAND = 1e-4


def ascend(problem: Problem, w0, v0, barrier_weight=1e-3, tol=1e-9, patience=20, max_iter=4000,
           trace_len=64):
    """Batched projected gradient ascent with step halving.

    Each restart first descends the constraint violation if it starts
    infeasible, then ascends ``f + mu * sum(log(slack + shift))`` for a
    decreasing sequence of barrier weights ending at 0. Steps that leave the
    feasible set or fail to increase the merit are rejected and halve the
    step; accepted steps double it. A phase ends after ``patience``
    consecutive steps improving the merit by less than ``tol``.

    Returns per-restart best feasible objective, the (w, v) attaining it, a
    trace of best values, and iteration counts.
    """
    mus = [barrier_weight * 10.0**-k for k in range(4)] + [0.0] if barrier_weight > 0 else [0.0]
    w = w0.copy()
    v = v0.copy()
    K = w.shape[0]
    ev = problem.evaluate(w, v)
    phase = np.where(problem.feasible(ev), 0, -1)
    best_f = np.where(phase == 0, ev["f"], -np.inf)
    best_w = w.copy()
    best_v = v.copy()
    eta = np.full(K, np.nan)
    stall = np.zeros(K, dtype=int)
    iters = np.zeros(K, dtype=int)
    traces = [[float(f)] if np.isfinite(f) else [] for f in best_f]

    def merit(ev, ph):
        mu = np.array([mus[p] if 0 <= p < len(mus) else 0.0 for p in ph])
        with np.errstate(divide="ignore", invalid="ignore"):
            bar = np.log(np.maximum(ev["s_d"], 0.0) + BARRIER_SHIFT) + np.log(
                np.maximum(ev["s_r"], 0.0) + BARRIER_SHIFT
            )
        m = np.where(ph < 0, -problem.violation(ev), ev["f"] + np.where(mu > 0, mu * bar, 0.0))
        return m, mu

    for _ in range(max_iter):
        active = (phase != DONE) & (phase != FAILED)
        if not active.any():
            break
        idx = np.flatnonzero(active)
        wa, va, ph = w[idx], v[idx], phase[idx]
        ev = problem.evaluate(wa, va, grad=True)
        m0, mu = merit(ev, ph)
        # gradient of the merit with respect to T, minus the hinge part
        sd = np.maximum(ev["s_d"], 0.0) + BARRIER_SHIFT
        sr = np.maximum(ev["s_r"], 0.0) + BARRIER_SHIFT
        g_bar = -(mu / sd)[:, None, None, None] * ev["gE"] - (mu / sr)[:, None, None, None] * ev["gI"]
        over_d = (ev["s_d"] < 0).astype(float)[:, None, None, None]
        over_r = (ev["s_r"] < 0).astype(float)[:, None, None, None]
        g_viol = -over_d * ev["gE"] - over_r * ev["gI"]
        restoring = ph < 0
        gw, gv = problem.chain(np.where(restoring[:, None, None, None], g_viol, g_bar), wa, va)
        # objective min(A, B): off the ridge follow the smaller branch; near it
        # take the least-norm convex combination of both branch gradients,
        # the steepest ascent direction of the min
        gwa, gva = problem.chain(ev["gA"], wa, va)
        gwb, gvb = problem.chain(ev["gB"], wa, va)
        da = np.concatenate([gwa.reshape(len(idx), -1), gva.reshape(len(idx), -1)], axis=1)
        db = np.concatenate([gwb.reshape(len(idx), -1), gvb.reshape(len(idx), -1)], axis=1)
        diff = ev["A"] - ev["B"]
        dd = da - db
        denom = np.einsum("kn,kn->k", dd, dd)
        lam_ridge = np.clip(-np.einsum("kn,kn->k", db, dd) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
        lam = np.where(diff < -RIDGE_BAND, 1.0, np.where(diff > RIDGE_BAND, 0.0, lam_ridge))
        lam = np.where(restoring, 0.0, lam)
        on = (~restoring).astype(float)
        gw = gw + (on * lam)[:, None, None] * gwa + (on * (1 - lam))[:, None, None] * gwb
        gv = gv + (on * lam)[:, None, None] * gva + (on * (1 - lam))[:, None, None] * gvb
        scale = np.maximum(np.abs(gw).max(axis=(1, 2)), np.abs(gv).max(axis=(1, 2)))
        scale = np.where(scale > 0, scale, 1.0)
        e = eta[idx]
        e = np.where(np.isnan(e), 0.1 / scale, e)
        wn = project_rows(wa + e[:, None, None] * gw)
        vn = project_rows(va + e[:, None, None] * gv)
        evn = problem.evaluate(wn, vn)
        m1, _ = merit(evn, ph)
        ok_domain = (ph < 0) | problem.feasible(evn)
        accept = ok_domain & (m1 > m0)
        gain = np.where(accept, m1 - m0, 0.0)

        wa = np.where(accept[:, None, None], wn, wa)
        va = np.where(accept[:, None, None], vn, va)
        e = np.where(accept, np.minimum(2.0 * e, 1.0 / scale), 0.5 * e)
        st = np.where(gain < tol, stall[idx] + 1, 0)
        iters[idx] += 1

        now_feasible = problem.feasible(evn) & accept
        f_new = np.where(now_feasible, evn["f"], -np.inf)
        improved = f_new > best_f[idx]
        for j in np.flatnonzero(improved):
            k = idx[j]
            best_f[k] = f_new[j]
            best_w[k] = wa[j]
            best_v[k] = va[j]
            traces[k].append(float(f_new[j]))

        # phase transitions
        new_ph = ph.copy()
        restored = (ph < 0) & accept & problem.feasible(evn)
        new_ph[restored] = 0
        exhausted = (st >= patience) | (e * scale < 1e-15)
        fail = (ph < 0) & exhausted & ~restored
        new_ph[fail] = FAILED
        adv = (ph >= 0) & exhausted
        new_ph[adv] = np.where(ph[adv] + 1 >= len(mus), DONE, ph[adv] + 1)
        reset = restored | adv
        st = np.where(reset, 0, st)
        e = np.where(reset, np.nan, e)

        w[idx], v[idx], eta[idx], stall[idx], phase[idx] = wa, va, e, st, new_ph

    traces = [t if len(t) <= trace_len else t[:: math.ceil(len(t) / trace_len)] + [t[-1]] for t in traces]
    return best_f, best_w, best_v, traces, iters


def polish(problem: Problem, w, v, max_iter=200):
    """Refine one feasible point with SLSQP on the epigraph form

        maximize t  s.t.  t <= A, t <= B, E d <= D, I(X;Y) <= R,

    rows of w and v on the simplex. Returns (f, w, v); the input point is
    returned unchanged when the refined one is not a feasible improvement.
    """
    nx, nu = w.shape
    ny = v.shape[1]
    nw = nx * nu
    ev0 = problem.evaluate(w[None], v[None])
    f0 = float(ev0["f"][0])

    def unpack(z):
        return z[:nw].reshape(1, nx, nu), z[nw:-1].reshape(1, nu, ny)

    cache = {}

    def ev_at(z):
        key = z.tobytes()
        if key not in cache:
            cache.clear()
            wz, vz = unpack(z)
            cache[key] = problem.evaluate(np.clip(wz, 0, None), np.clip(vz, 0, None), grad=True)
        return cache[key]

    def cons(z):
        ev = ev_at(z)
        return np.array([ev["A"][0] - z[-1], ev["B"][0] - z[-1], ev["s_d"][0], ev["s_r"][0]])

    def cons_jac(z):
        ev = ev_at(z)
        wz, vz = unpack(z)
        rows = []
        for G, dt in ((ev["gA"], -1.0), (ev["gB"], -1.0), (-ev["gE"], 0.0), (-ev["gI"], 0.0)):
            gw, gv = problem.chain(G, wz, vz, precondition=False)
            rows.append(np.concatenate([gw.ravel(), gv.ravel(), [dt]]))
        return np.array(rows)

    eq_mat = np.zeros((nx + nu, nw + nu * ny + 1))
    for x in range(nx):
        eq_mat[x, x * nu:(x + 1) * nu] = 1.0
    for u in range(nu):
        eq_mat[nx + u, nw + u * ny:nw + (u + 1) * ny] = 1.0

    z0 = np.concatenate([w.ravel(), v.ravel(), [f0]])
    bounds = [(0.0, 1.0)] * (nw + nu * ny) + [(None, None)]
    res = minimize(
        lambda z: -z[-1],
        z0,
        jac=lambda z: np.concatenate([np.zeros(len(z) - 1), [-1.0]]),
        method="SLSQP",
        bounds=bounds,
        constraints=[
            {"type": "ineq", "fun": cons, "jac": cons_jac},
            {"type": "eq", "fun": lambda z: eq_mat @ z - 1.0, "jac": lambda z: eq_mat},
        ],
        options={"maxiter": max_iter, "ftol": 1e-12},
    )
    wz, vz = unpack(np.asarray(res.x, dtype=float))
    wz = np.clip(wz[0], 0.0, None)
    vz = np.clip(vz[0], 0.0, None)
    if not (np.all(np.isfinite(wz)) and np.all(np.isfinite(vz))):
        return f0, w, v
    wz /= wz.sum(axis=1, keepdims=True)
    vz /= vz.sum(axis=1, keepdims=True)
    # the solver may finish marginally outside the feasible set; back off
    # toward the starting point until it is inside
    for lam in (1.0, 1 - 1e-9, 1 - 1e-7, 1 - 1e-5, 1 - 1e-3, 0.99, 0.9, 0.5):
        wl = lam * wz + (1 - lam) * w
        vl = lam * vz + (1 - lam) * v
        ev = problem.evaluate(wl[None], vl[None])
        if problem.feasible(ev)[0]:
            if ev["f"][0] > f0:
                return float(ev["f"][0]), wl, vl
            break
    return f0, w, v


# ---------------------------------------------------------------------------
# exhaustive grid


def simplex_grid(n: int, units: int) -> np.ndarray:
    """All points of the n-simplex whose coordinates are multiples of 1/units."""
    pts = []
    for bars in itertools.combinations(range(units + n - 1), n - 1):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(units + n - 1 - prev - 1)
        pts.append(row)
    return np.array(pts, dtype=float) / units


def canonical_w(nx: int, nu: int, units: int) -> np.ndarray:
    """Grid kernels w[x, u] with the U columns in lexicographic order.

    Relabeling U permutes the columns of w and the rows of v together and
    leaves every objective and constraint unchanged, so one representative
    per column ordering suffices.
    """
    rows = simplex_grid(nu, units)
    out = []
    for combo in itertools.product(range(len(rows)), repeat=nx):
        w = rows[list(combo)]
        cols = [tuple(np.round(w[:, u] * units).astype(int)) for u in range(nu)]
        if all(cols[i] <= cols[i + 1] for i in range(nu - 1)):
            out.append(w)
    return np.array(out)


def grid_sizes(nx: int, ny: int, nu: int, units: int) -> tuple:
    """(raw point count, canonical point count) of the grid."""
    n_wrow = math.comb(units + nu - 1, nu - 1)
    n_vrow = math.comb(units + ny - 1, ny - 1)
    raw = n_wrow**nx * n_vrow**nu
    # canonical count is only known after enumeration; bound by raw / nu!
    return raw, raw // math.factorial(nu)


def grid_search(problem: Problem, nu: int, units: int, feas_tol=1e-9, chunk=200_000):
    """Exhaustive maximization over the grid. Returns (best f, w, v, counts)."""
    nx, ny = problem.dmat.shape
    W = canonical_w(nx, nu, units)
    vrows = simplex_grid(ny, units)
    vidx = np.array(list(itertools.product(range(len(vrows)), repeat=nu)))
    V = vrows[vidx]  # (Nv, nu, ny)
    best = (-np.inf, None, None)
    n_points = 0
    n_feasible = 0
    per = max(1, chunk // len(V))
    for start in range(0, len(W), per):
        Wc = W[start:start + per]
        wb = np.repeat(Wc, len(V), axis=0)
        vb = np.tile(V, (len(Wc), 1, 1))
        ev = problem.evaluate(wb, vb)
        ok = (ev["s_d"] >= -feas_tol) & (ev["s_r"] >= -feas_tol)
        n_points += len(wb)
        n_feasible += int(ok.sum())
        if not ok.any():
            continue
        f = np.where(ok, ev["f"], -np.inf)
        j = int(np.argmax(f))
        if f[j] > best[0]:
            best = (float(f[j]), wb[j].copy(), vb[j].copy())
    return best[0], best[1], best[2], n_points, n_feasible
