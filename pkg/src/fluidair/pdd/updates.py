"""Closed-form block updates.

Every function returns a new state in which its variables exactly minimize
the augmented Lagrangian restricted to them (subject to the hard constraints
listed in :mod:`fluidair.pdd.state`), all other variables held fixed. The
position update is the one exception: it minimizes a phase-linearized model
and is accepted only if the true augmented Lagrangian does not increase.
"""

from __future__ import annotations

import numpy as np

from fluidair.errors import NumericDegeneracyError
from fluidair.pdd.state import DualState, PddProblem, PddState, effective_vectors, pair_diffs

ETA_BAR_FLOOR = 1e-12


def update_e(prob: PddProblem, st: PddState, duals: DualState) -> PddState:
    k, lam = duals.kappa, duals.lam
    out = st.copy()
    mean = ((st.e_t - k * lam["e_t"]) + (st.e_h - k * lam["e_h"]) + (st.e_b - k * lam["e_b"])) / 3
    out.e = np.clip(mean, 0.0, 1.0)
    return out


def alpha_gamma_update(a_target, g_target) -> tuple[np.ndarray, np.ndarray]:
    """argmin (alpha - A)^2 + |gamma - T|^2  s.t.  alpha <= |gamma|^2, per user.

    When the constraint is active, gamma = rho * T/|T| and alpha = rho^2 with
    rho >= 0 a root of 2 rho^3 + (1 - 2A) rho - |T| = 0.
    """
    a_target = np.atleast_1d(np.asarray(a_target, dtype=float))
    g_target = np.atleast_1d(np.asarray(g_target, dtype=complex))
    b = np.abs(g_target)
    alpha = a_target.copy()
    gamma = g_target.copy()
    active = np.flatnonzero(a_target > b * b)
    if active.size:
        aa, bb = a_target[active], b[active]
        # companion matrices of rho^3 + (1/2 - A) rho - B/2
        comp = np.zeros((active.size, 3, 3))
        comp[:, 0, 1] = -(0.5 - aa)
        comp[:, 0, 2] = bb / 2
        comp[:, 1, 0] = 1.0
        comp[:, 2, 1] = 1.0
        roots = np.linalg.eigvals(comp)
        ok = (np.abs(roots.imag) < 1e-9 * np.maximum(1.0, np.abs(roots))) & (roots.real >= 0)
        rr = np.where(ok, roots.real, 0.0)
        cost = (rr**2 - aa[:, None]) ** 2 + (rr - bb[:, None]) ** 2
        rho = rr[np.arange(active.size), np.argmin(cost, axis=1)]
        phase = np.where(bb > 0, g_target[active] / np.where(bb > 0, bb, 1.0), 1.0)
        alpha[active] = rho**2
        gamma[active] = rho * phase
    return alpha, gamma


def update_block1_aux(prob: PddProblem, st: PddState, duals: DualState) -> PddState:
    """alpha & gamma (jointly), c, alpha_h, eta_t, xd, yd."""
    k, lam = duals.kappa, duals.lam
    out = st.copy()
    hv = effective_vectors(prob, st)
    g_target = hv @ st.q.conj() - k * lam["gamma"]
    a_target = st.alpha_t - k * lam["alpha"]
    out.alpha, out.gamma = alpha_gamma_update(a_target, g_target)

    out.c = max(0.0, st.c_t - k * lam["c"] - k * prob.nu / st.eta_b)
    out.alpha_h = np.maximum(st.alpha_t * st.c_t - k * lam["alpha_h"], st.e_b * prob.s**2)

    a = st.eta_h - k * lam["eta_t"]
    b = st.eta_b + k * lam["eta_b"]
    c = st.e_h @ prob.s - k * lam["sum_h"]
    out.eta_t = float((a + st.eta_h * b + c) / (2.0 + st.eta_h**2))

    if prob.positions_free:
        out.xd = _project_spacing(pair_diffs(prob, st.x) - k * lam["xd"], st.sx, prob.v_x)
        out.yd = _project_spacing(pair_diffs(prob, st.y) - k * lam["yd"], st.sy, prob.v_y)
    return out


def _project_spacing(target: np.ndarray, sign: np.ndarray, v: float) -> np.ndarray:
    return np.where(sign * target >= v, target, sign * v)


def project_q_tilde(q: np.ndarray, dual: np.ndarray, kappa: float) -> np.ndarray:
    w = np.asarray(q) + kappa * np.asarray(dual)
    norm = np.linalg.norm(w)
    if norm == 0:
        raise NumericDegeneracyError("cannot project the zero vector onto the sphere")
    return w / norm


def update_q_tilde(prob: PddProblem, st: PddState, duals: DualState) -> PddState:
    out = st.copy()
    out.q_t = project_q_tilde(st.q, duals.lam["q"], duals.kappa)
    return out


def b_objective(prob: PddProblem, st: PddState, duals: DualState, u: int, b_u: np.ndarray) -> float:
    """Restriction of the augmented Lagrangian to ``b_u`` (without 1/2kappa)."""
    k, lam = duals.kappa, duals.lam
    a = prob.response(st.x, st.y)[u]
    r1 = st.gamma[u] - prob.beta[u] * np.vdot(st.q, b_u) + k * lam["gamma"][u]
    r2 = a - b_u + k * lam["b"][u]
    return float(abs(r1) ** 2 + np.sum(np.abs(r2) ** 2))


def update_b_bcd(prob: PddProblem, st: PddState, duals: DualState, sweeps: int = 1) -> PddState:
    """Element-wise unit-modulus coordinate descent on each ``b_u``.

    Each element takes the phase of its linear coefficient; a zero
    coefficient leaves the element unchanged.
    """
    if not prob.positions_free:
        return st.copy()
    k, lam = duals.kappa, duals.lam
    out = st.copy()
    a = prob.response(st.x, st.y)
    qc = st.q.conj()
    beta = prob.beta
    t = st.gamma + k * lam["gamma"]
    w = a + k * lam["b"]
    b = out.b
    for _ in range(sweeps):
        total = beta * (b @ qc)
        for i in range(prob.n_antennas):
            rest = t - (total - beta * qc[i] * b[:, i])
            coef = np.conj(beta) * st.q[i] * rest + w[:, i]
            mag = np.abs(coef)
            new = np.where(mag > 0, coef / np.where(mag > 0, mag, 1.0), b[:, i])
            total = total + beta * qc[i] * (new - b[:, i])
            b[:, i] = new
    return out


def update_e_aux(prob: PddProblem, st: PddState, duals: DualState) -> PddState:
    """e_t, e_h (each coupled through a sample-weighted sum), and e_b jointly
    with alpha_h."""
    k, lam = duals.kappa, duals.lam
    s = prob.s
    out = st.copy()
    denom = 1.0 + s @ s

    p = st.e + k * lam["e_t"]
    m = st.eta_h + k * lam["sum_t"]
    out.e_t = p + s * (m - s @ p) / denom

    p = st.e + k * lam["e_h"]
    m = st.eta_t + k * lam["sum_h"]
    out.e_h = p + s * (m - s @ p) / denom

    # e_b and alpha_h share the constraint s^2 e_b <= alpha_h; updating them
    # together avoids a coordinate-descent deadlock when it is active.
    out.e_b, out.alpha_h = project_mass_cap(
        st.e + k * lam["e_b"], st.alpha_t * st.c_t - k * lam["alpha_h"], s**2)
    return out


def project_mass_cap(p, m, w):
    """argmin (x - p)^2 + (y - m)^2  s.t.  w x <= y, element-wise."""
    p = np.asarray(p, dtype=float)
    m = np.asarray(m, dtype=float)
    viol = w * p - m
    t = np.maximum(viol, 0.0) / (w * w + 1.0)
    return p - w * t, m + t


def update_block2(prob: PddProblem, st: PddState, duals: DualState) -> PddState:
    """alpha_t, eta_h, eta (bookkeeping), q."""
    k, lam = duals.kappa, duals.lam
    out = st.copy()
    u = prob.n_users

    out.alpha_t = ((st.alpha + k * lam["alpha"]) + st.c_t * (st.alpha_h + k * lam["alpha_h"])) \
        / (1.0 + st.c_t**2)

    rhs = 8.0 * prob.mass / u**2 + (
        (st.eta_t + k * lam["eta_t"])
        + st.eta_t * (st.eta_b + k * lam["eta_b"])
        + (st.e_t @ prob.s - k * lam["sum_t"])
    ) / k
    out.eta_h = float(rhs / (8.0 / u**2 + (2.0 + st.eta_t**2) / k))
    out.eta = prob.nu * st.c / st.eta_b

    hv = effective_vectors(prob, st)
    t = st.gamma + k * lam["gamma"]
    mat = np.eye(prob.n_antennas) + hv.T @ hv.conj()
    rhs_q = (st.q_t - k * lam["q"]) + hv.T @ np.conj(t)
    try:
        out.q = np.linalg.solve(mat, rhs_q)
    except np.linalg.LinAlgError as exc:
        raise NumericDegeneracyError("beamformer system is singular") from exc
    return out


def position_model(prob: PddProblem, st: PddState, duals: DualState, i: int):
    """Quadratic model of the restricted Lagrangian in element ``i`` of every user.

    Returns (weight, direction, phase target, x targets, y targets), shapes
    (U,), (U, 2), (U,), (U, m), (U, m), such that
    J(p) = weight * (k d.p - phase)^2 + sum (x - tx)^2 + sum (y - ty)^2.
    The phase target is unwrapped to the branch nearest the current phase.
    """
    k, lam = duals.kappa, duals.lam
    d = prob.direction
    w = st.b[:, i] - k * lam["b"][:, i]
    weight = np.abs(w)
    cur = prob.k * (d[:, 0] * st.x[:, i] + d[:, 1] * st.y[:, i])
    target = np.where(weight > 0, np.angle(w), cur)
    target = target + 2 * np.pi * np.round((cur - target) / (2 * np.pi))
    ii, jj = prob.pairs
    left = np.flatnonzero(ii == i)  # pairs (i, j): xd = x_i - x_j
    right = np.flatnonzero(jj == i)  # pairs (j, i): xd = x_j - x_i
    tx = np.concatenate([
        st.xd[:, left] + st.x[:, jj[left]] + k * lam["xd"][:, left],
        st.x[:, ii[right]] - st.xd[:, right] - k * lam["xd"][:, right]], axis=1)
    ty = np.concatenate([
        st.yd[:, left] + st.y[:, jj[left]] + k * lam["yd"][:, left],
        st.y[:, ii[right]] - st.yd[:, right] - k * lam["yd"][:, right]], axis=1)
    return weight, d, target, tx, ty


def position_J(model, kw: float, px, py) -> np.ndarray:
    weight, d, target, tx, ty = model
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    phase = kw * (d[:, 0] * px + d[:, 1] * py) - target
    return (weight * phase**2 + np.sum((px[:, None] - tx) ** 2, axis=1)
            + np.sum((py[:, None] - ty) ** 2, axis=1))


def _solve_rank_one(a, d, m, g):
    """Minimum-norm solution of (a d d^T + m I) z = g for each user."""
    dg = np.sum(d * g, axis=1)
    dd = np.sum(d * d, axis=1)
    if m > 0:
        return (g - (a * dg / (m + a * dd))[:, None] * d) / m
    # a single element: only the phase direction is determined
    den = a * dd**2
    coef = np.where(den > 0, dg / np.where(den > 0, den, 1.0), 0.0)
    return coef[:, None] * d


def minimize_position_model(model, kw: float, box, px0, py0) -> tuple[np.ndarray, np.ndarray]:
    """Exact minimizer of each user's convex quadratic J over the box.

    If the unconstrained minimizer lies outside, the optimum is on an edge;
    every edge is minimized in closed form and the best one is kept.
    """
    weight, d, target, tx, ty = model
    n_users = weight.size
    m = tx.shape[1]
    sx, sy = tx.sum(axis=1), ty.sum(axis=1)
    a = weight * kw**2
    p0 = np.stack([px0, py0], axis=1)
    lin = weight * kw * (kw * np.sum(d * p0, axis=1) - target)
    grad = lin[:, None] * d + np.stack([m * px0 - sx, m * py0 - sy], axis=1)
    step = -_solve_rank_one(a, d, m, grad)
    px, py = px0 + step[:, 0], py0 + step[:, 1]
    x0, x1, y0, y1 = box
    inside = (px >= x0) & (px <= x1) & (py >= y0) & (py <= y1)
    if np.all(inside):
        return px, py

    cands = []
    for fixed in (x0, x1):  # vertical edges, free y
        fx = np.full(n_users, fixed)
        h = a * d[:, 1] ** 2 + m
        g = weight * kw * (kw * (d[:, 0] * fx + d[:, 1] * py0) - target) * d[:, 1] + m * py0 - sy
        fy = np.clip(py0 - np.where(h > 0, g / np.where(h > 0, h, 1.0), 0.0), y0, y1)
        cands.append((fx, fy))
    for fixed in (y0, y1):  # horizontal edges, free x
        fy = np.full(n_users, fixed)
        h = a * d[:, 0] ** 2 + m
        g = weight * kw * (kw * (d[:, 0] * px0 + d[:, 1] * fy) - target) * d[:, 0] + m * px0 - sx
        fx = np.clip(px0 - np.where(h > 0, g / np.where(h > 0, h, 1.0), 0.0), x0, x1)
        cands.append((fx, fy))
    vals = np.array([position_J(model, kw, cx, cy) for cx, cy in cands])
    best = np.argmin(vals, axis=0)
    bx = np.array([c[0] for c in cands])[best, np.arange(n_users)]
    by = np.array([c[1] for c in cands])[best, np.arange(n_users)]
    return np.where(inside, px, bx), np.where(inside, py, by)


def local_lagrangian(prob: PddProblem, st: PddState, duals: DualState, i: int,
                     xi, yi) -> np.ndarray:
    """Terms of the augmented Lagrangian that involve element ``i`` (times 2 kappa)."""
    k, lam = duals.kappa, duals.lam
    d = prob.direction
    a = np.exp(1j * prob.k * (d[:, 0] * xi + d[:, 1] * yi))
    total = np.abs(a - st.b[:, i] + k * lam["b"][:, i]) ** 2
    ii, jj = prob.pairs
    for p in np.flatnonzero((ii == i) | (jj == i)):
        if ii[p] == i:
            dx, dy = xi - st.x[:, jj[p]], yi - st.y[:, jj[p]]
        else:
            dx, dy = st.x[:, ii[p]] - xi, st.y[:, ii[p]] - yi
        total = total + (st.xd[:, p] - dx + k * lam["xd"][:, p]) ** 2
        total = total + (st.yd[:, p] - dy + k * lam["yd"][:, p]) ** 2
    return total


def _element_pairs(prob: PddProblem, st: PddState, i: int, xi, yi):
    """Pair indices touching element ``i`` and their coordinate differences
    (x_a - x_b in pair order) with element ``i`` at (xi, yi)."""
    ii, jj = prob.pairs
    ps = np.flatnonzero((ii == i) | (jj == i))
    xs = st.x.copy()
    ys = st.y.copy()
    xs[:, i], ys[:, i] = xi, yi
    return ps, xs[:, ii[ps]] - xs[:, jj[ps]], ys[:, ii[ps]] - ys[:, jj[ps]]


def joint_local_lagrangian(prob: PddProblem, st: PddState, duals: DualState, i: int,
                           xi, yi) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Element-``i`` terms with the pair differences minimized out.

    Returns the per-user value (times 2 kappa), the pair indices, and the
    minimizing ``xd``/``yd`` for those pairs.
    """
    k, lam = duals.kappa, duals.lam
    d = prob.direction
    a = np.exp(1j * prob.k * (d[:, 0] * xi + d[:, 1] * yi))
    total = np.abs(a - st.b[:, i] + k * lam["b"][:, i]) ** 2
    ps, dx, dy = _element_pairs(prob, st, i, xi, yi)
    tx = dx - k * lam["xd"][:, ps]
    ty = dy - k * lam["yd"][:, ps]
    xd = _project_spacing(tx, st.sx[:, ps], prob.v_x)
    yd = _project_spacing(ty, st.sy[:, ps], prob.v_y)
    total = total + np.sum((xd - tx) ** 2, axis=1) + np.sum((yd - ty) ** 2, axis=1)
    return total, ps, xd, yd


PHASE_BRANCHES = (-2, -1, 1, 2)


def update_positions(prob: PddProblem, st: PddState, duals: DualState) -> PddState:
    """Element-by-element moves (Gauss-Seidel over elements) jointly with the
    pair differences that touch the element.

    Candidates are the minimizer of the quadratic model and the nearest points
    on neighbouring phase branches; the response is periodic in the phase, so
    those fit ``b`` equally well and can clear a spacing conflict that the
    nearest branch cannot. A move is kept only where it lowers the augmented
    Lagrangian.
    """
    if not prob.positions_free:
        return st.copy()
    out = st.copy()
    d = prob.direction
    dd = np.sum(d * d, axis=1)
    x0b, x1b, y0b, y1b = prob.region
    for i in range(prob.n_antennas):
        model = position_model(prob, out, duals, i)
        x0, y0 = out.x[:, i].copy(), out.y[:, i].copy()
        cands = [minimize_position_model(model, prob.k, prob.region, x0, y0)]
        cur = prob.k * (d[:, 0] * x0 + d[:, 1] * y0)
        target = model[2]
        for shift in PHASE_BRANCHES:
            t = (target + 2 * np.pi * shift - cur) / np.where(dd > 0, prob.k * dd, 1.0)
            t = np.where(dd > 0, t, 0.0)
            cands.append((np.clip(x0 + t * d[:, 0], x0b, x1b), np.clip(y0 + t * d[:, 1], y0b, y1b)))
        best = local_lagrangian(prob, out, duals, i, x0, y0)
        bx, by = x0, y0
        ps = None
        bxd = byd = None
        for px, py in cands:
            val, ps, xd, yd = joint_local_lagrangian(prob, out, duals, i, px, py)
            better = val < best
            best = np.where(better, val, best)
            bx, by = np.where(better, px, bx), np.where(better, py, by)
            if bxd is None:
                bxd, byd = out.xd[:, ps].copy(), out.yd[:, ps].copy()
            bxd = np.where(better[:, None], xd, bxd)
            byd = np.where(better[:, None], yd, byd)
        out.x[:, i], out.y[:, i] = bx, by
        out.xd[:, ps], out.yd[:, ps] = bxd, byd
    return out


def update_block3(prob: PddProblem, st: PddState, duals: DualState) -> PddState:
    """eta_b (positive root of a cubic), then c_t jointly with alpha_h."""
    k, lam = duals.kappa, duals.lam
    out = st.copy()
    target = st.eta_h * st.eta_t - k * lam["eta_b"]
    scale = k * prob.nu * st.c
    if scale <= 0:
        out.eta_b = max(target, ETA_BAR_FLOOR)
    else:
        # d/d eta_b [nu c / eta_b + (eta_b - target)^2 / 2k] = 0
        roots = np.roots([1.0, -target, 0.0, -scale])
        pos = [r.real for r in roots if abs(r.imag) <= 1e-9 * max(1.0, abs(r)) and r.real > 0]
        if not pos:
            raise NumericDegeneracyError("no positive stationary point for eta_b")
        f = lambda z: prob.nu * st.c / z + (z - target) ** 2 / (2 * k)
        out.eta_b = max(min(pos, key=f), ETA_BAR_FLOOR)

    # alpha_h is minimized out jointly with c_t: for a fixed c_t it sits at
    # max(alpha_t c_t - k lam, e_b s^2), so users whose cap is slack no longer
    # hold c_t in place.
    floor = st.e_b * prob.s**2
    out.c_t = bottleneck_min(st.c + k * lam["c"], st.alpha_t, floor + k * lam["alpha_h"])
    out.alpha_h = np.maximum(st.alpha_t * out.c_t - k * lam["alpha_h"], floor)
    return out


def bottleneck_min(center: float, slope: np.ndarray, level: np.ndarray) -> float:
    """argmin_z (z - center)^2 + sum_u max(0, level_u - slope_u z)^2 for slope >= 0."""
    slope = np.asarray(slope, dtype=float)
    level = np.asarray(level, dtype=float)
    pos = slope > 0
    a, m = slope[pos], level[pos]
    with np.errstate(over="ignore"):
        bp = m / a  # term u is active for z < bp_u
    order = np.argsort(-bp)
    a, m, bp = a[order], m[order], bp[order]
    # grow the active set from the largest breakpoint down
    num, den = float(center), 1.0
    z = num / den
    for i in range(a.size):
        if z >= bp[i]:
            break
        num += a[i] * m[i]
        den += a[i] * a[i]
        z = num / den
        if i + 1 < a.size and z >= bp[i + 1]:
            break
    return float(z)


def update_duals_and_penalty(duals: DualState, prob: PddProblem, st: PddState,
                             eps_inner: float) -> tuple[DualState, bool]:
    """Multiplier ascent when the coupling residual is small enough,
    otherwise penalty reduction. Returns the new duals and whether the
    multipliers were updated."""
    from fluidair.pdd.state import residual_inf_norm, residuals

    out = duals.copy()
    if residual_inf_norm(prob, st) <= eps_inner:
        for name, r in residuals(prob, st).items():
            out.lam[name] = out.lam[name] + r / duals.kappa
        return out, True
    out.kappa = duals.kappa * duals.c_pen
    return out, False
