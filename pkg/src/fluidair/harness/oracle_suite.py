"""Numeric oracles for the closed forms and laws the package relies on.

Every check returns ``(name, passed, detail)``. The per-block checks compare a
closed-form update against a bounded numeric minimizer of the same restricted
augmented Lagrangian, written here term by term so that a wrong residual list
in :mod:`fluidair.pdd.state` shows up as a double-entry mismatch. scipy is
used only in this module.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from fluidair.baselines import exhaustive_selection_oracle
from fluidair.channel import (
    AntennaLayout,
    ChannelConfig,
    ChannelParams,
    array_response,
    channel_vector,
    effective_gain,
    max_gain_bound,
    sample_channels,
)
from fluidair.fedsim import (
    Dataset,
    Model,
    RoundPlan,
    TrainConfig,
    TrainState,
    UserData,
    fed_round,
    global_loss,
    local_gradient,
    local_loss,
)
from fluidair.objective import BoundParams, SelectionVector, bound_after_T, noisy_gap_recursion
from fluidair.ota import receive_and_combine, theoretical_mse
from fluidair.pdd import solve
from fluidair.pdd import updates as U
from fluidair.pdd.state import (
    COMPLEX_DUALS,
    DUAL_SHAPES,
    DualState,
    PddConfig,
    PddProblem,
    PddState,
    augmented_lagrangian,
)

LINK_GAIN_DB = 65.0
SIGMA_N2 = 0.01  # -20 dBm in mW
P_A = 1.0  # 0 dBm in mW


def _optimize():
    try:
        from scipy import optimize
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise ImportError("the oracle suite needs scipy (pip install scipy)") from exc
    return optimize


# ---------------------------------------------------------------- instances

def random_problem(rng, n_users: int = 3, n_antennas: int = 2, optimize_positions: bool = True):
    cfg = ChannelConfig(n_antennas=n_antennas, link_gain_db=LINK_GAIN_DB)
    channels = sample_channels(int(rng.integers(2**31)), n_users, cfg)
    samples = rng.integers(100, 400, n_users).astype(float)
    prob = PddProblem.from_channels(channels, samples, SIGMA_N2, P_A, optimize_positions)
    return prob, channels, samples


def random_state(prob: PddProblem, rng) -> PddState:
    """Arbitrary point: couplings violated, hard constraints of other blocks
    not necessarily met, scalars kept where the objective is defined."""
    u, n = prob.n_users, prob.n_antennas
    p = n * (n - 1) // 2
    x0, x1, y0, y1 = prob.region

    def cn(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    q_t = cn(n)
    return PddState(
        e=rng.uniform(-0.2, 1.2, u), e_t=rng.uniform(-0.2, 1.2, u),
        e_h=rng.uniform(-0.2, 1.2, u), e_b=rng.uniform(-0.2, 1.2, u),
        alpha=rng.uniform(0.1, 2, u), alpha_t=rng.uniform(0.1, 2, u),
        alpha_h=rng.uniform(0.1, 2, u), gamma=cn(u),
        b=np.exp(1j * rng.uniform(-np.pi, np.pi, (u, n))),
        x=rng.uniform(x0, x1, (u, n)), y=rng.uniform(y0, y1, (u, n)),
        xd=rng.normal(0, prob.v_x * 2, (u, p)), yd=rng.normal(0, prob.v_y * 2, (u, p)),
        sx=rng.choice([-1.0, 1.0], (u, p)), sy=rng.choice([-1.0, 1.0], (u, p)),
        q=cn(n), q_t=q_t / np.linalg.norm(q_t),
        c=float(rng.uniform(0.1, 2)), c_t=float(rng.uniform(0.1, 2)),
        eta=0.0, eta_h=float(rng.uniform(0.2, 1.2) * prob.mass),
        eta_t=float(rng.uniform(0.2, 1.2) * prob.mass), eta_b=float(rng.uniform(0.5, 2) * prob.mass**2),
    )


def random_duals(prob: PddProblem, rng) -> DualState:
    duals = DualState.zeros(prob, kappa=float(np.exp(rng.uniform(np.log(0.05), np.log(2.0)))))
    for name in DUAL_SHAPES:
        shape = duals.lam[name].shape
        val = rng.normal(0, 0.5, shape)
        if name in COMPLEX_DUALS:
            val = val + 1j * rng.normal(0, 0.5, shape)
        duals.lam[name] = np.asarray(val)
    return duals


# ------------------------------------------------- restricted Lagrangian

def coupling(prob: PddProblem, st: PddState, name: str):
    """Residual of one coupling, written out independently of the solver."""
    i, j = prob.pairs
    if name in ("e_t", "e_h", "e_b"):
        return st.e - getattr(st, name)
    if name == "gamma":
        hv = prob.fixed_h if prob.fixed_h is not None else prob.beta[:, None] * st.b
        return st.gamma - np.einsum("un,n->u", hv, st.q.conj())
    if name == "b":
        ph = prob.k * (prob.direction[:, :1] * st.x + prob.direction[:, 1:] * st.y)
        return np.cos(ph) + 1j * np.sin(ph) - st.b
    if name == "alpha":
        return st.alpha - st.alpha_t
    if name == "alpha_h":
        return st.alpha_h - st.alpha_t * st.c_t
    if name == "xd":
        return st.xd - (st.x[:, i] - st.x[:, j])
    if name == "yd":
        return st.yd - (st.y[:, i] - st.y[:, j])
    if name == "c":
        return st.c - st.c_t
    if name == "eta_t":
        return st.eta_t - st.eta_h
    if name == "eta_b":
        return st.eta_b - st.eta_h * st.eta_t
    if name == "q":
        return st.q - st.q_t
    if name == "sum_t":
        return st.eta_h - np.sum(st.e_t * prob.s)
    if name == "sum_h":
        return st.eta_t - np.sum(st.e_h * prob.s)
    raise KeyError(name)


def restricted(prob, st, duals, terms, with_objective: bool) -> float:
    k = duals.kappa
    total = 0.0
    for name in terms:
        r = np.asarray(coupling(prob, st, name))
        total += float(np.sum(np.abs(r + k * duals.lam[name]) ** 2)) / (2 * k)
    if with_objective:
        total += 4.0 / prob.n_users**2 * (prob.mass - st.eta_h) ** 2 + prob.nu * st.c / st.eta_b
    return total


BLOCK_TERMS = {
    "e": (("e_t", "e_h", "e_b"), False),
    "block1_aux": (("gamma", "alpha", "c", "alpha_h", "eta_t", "eta_b", "sum_h", "xd", "yd"), True),
    "q_tilde": (("q",), False),
    "b": (("gamma", "b"), False),
    "e_aux": (("e_t", "e_h", "e_b", "sum_t", "sum_h", "alpha_h"), False),
    "block2": (("alpha", "alpha_h", "eta_t", "eta_b", "sum_t", "gamma", "q"), True),
    "block3": (("eta_b", "c", "alpha_h"), True),
}


def _sub(st, **changes):
    # setters only swap whole fields, so a shallow copy is enough
    return replace(st, **changes)


def _subproblems(block: str, prob: PddProblem, st: PddState, new: PddState, rng):
    """(setter, z at the closed form, bounds, extra starts) per independent
    piece of the block; setter(z) returns the pre-update state with that
    piece replaced."""
    u, n = prob.n_users, prob.n_antennas
    s2 = prob.s**2
    free = (None, None)
    pos = (0.0, None)
    out = []
    if block == "block1_aux":
        def ag(z):
            rho, th, t = z[:u], z[u:2 * u], z[2 * u:]
            return _sub(st, gamma=rho * np.exp(1j * th), alpha=rho**2 - t)
        zc = np.concatenate([np.abs(new.gamma), np.angle(new.gamma),
                             np.maximum(np.abs(new.gamma) ** 2 - new.alpha, 0.0)])
        starts = [np.concatenate([rng.uniform(0, 2, u), rng.uniform(-3, 3, u), rng.uniform(0, 1, u)])]
        out.append((ag, zc, [free] * 2 * u + [pos] * u, starts))
        out.append((lambda z: _sub(st, c=float(z[0])), np.array([new.c]), [pos], [np.array([st.c])]))
        out.append((lambda z: _sub(st, alpha_h=st.e_b * s2 + z), new.alpha_h - st.e_b * s2,
                    [pos] * u, [np.ones(u)]))
        out.append((lambda z: _sub(st, eta_t=float(z[0])), np.array([new.eta_t]), [free],
                    [np.array([st.eta_t])]))
        if prob.positions_free:
            for name, sign, v in (("xd", st.sx, prob.v_x), ("yd", st.sy, prob.v_y)):
                shape = sign.shape
                out.append((lambda z, name=name, sign=sign, v=v, shape=shape:
                            _sub(st, **{name: sign * (v + z.reshape(shape))}),
                            (sign * getattr(new, name) - v).ravel(), [pos] * sign.size,
                            [np.ones(sign.size)]))
    elif block == "q_tilde":
        def qt(z):
            w = z[:n] + 1j * z[n:]
            return _sub(st, q_t=w / np.linalg.norm(w))
        zc = np.concatenate([new.q_t.real, new.q_t.imag])
        starts = [rng.standard_normal(2 * n) for _ in range(3)]
        out.append((qt, zc, [free] * 2 * n, starts))
    elif block == "e_aux":
        out.append((lambda z: _sub(st, e_t=z), new.e_t, [free] * u, [st.e_t]))
        out.append((lambda z: _sub(st, e_h=z), new.e_h, [free] * u, [st.e_h]))
        out.append((lambda z: _sub(st, e_b=z[:u], alpha_h=z[:u] * s2 + z[u:]),
                    np.concatenate([new.e_b, new.alpha_h - new.e_b * s2]),
                    [free] * u + [pos] * u, [np.concatenate([st.e_b, np.ones(u)])]))
    elif block == "block2":
        out.append((lambda z: _sub(st, alpha_t=z), new.alpha_t, [free] * u, [st.alpha_t]))
        out.append((lambda z: _sub(st, eta_h=float(z[0])), np.array([new.eta_h]), [free],
                    [np.array([st.eta_h])]))
        out.append((lambda z: _sub(st, q=z[:n] + 1j * z[n:]),
                    np.concatenate([new.q.real, new.q.imag]), [free] * 2 * n,
                    [np.concatenate([st.q.real, st.q.imag])]))
    elif block == "block3":
        out.append((lambda z: _sub(st, eta_b=float(z[0])), np.array([new.eta_b]), [(1e-12, None)],
                    [np.array([st.eta_b])]))
        out.append((lambda z: _sub(st, c_t=float(z[0]), alpha_h=st.e_b * s2 + z[1:]),
                    np.concatenate([[new.c_t], new.alpha_h - st.e_b * s2]),
                    [free] + [pos] * u, [np.concatenate([[st.c_t], np.ones(u)])]))
    else:
        raise KeyError(block)
    return out


def _numeric_min(f, z0s, bounds):
    optimize = _optimize()
    best = np.inf
    for z0 in z0s:
        z0 = np.asarray(z0, dtype=float)
        lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
        z0 = np.maximum(z0, lo + 0.0)
        res = optimize.minimize(f, z0, method="L-BFGS-B", bounds=bounds,
                                options={"ftol": 1e-15, "gtol": 1e-11, "maxiter": 2000})
        best = min(best, float(res.fun), float(f(res.x)))
    return best


BLOCK_UPDATES = {
    "e": U.update_e,
    "block1_aux": U.update_block1_aux,
    "q_tilde": U.update_q_tilde,
    "b": lambda p, s, d: U.update_b_bcd(p, s, d, 1),
    "e_aux": U.update_e_aux,
    "block2": U.update_block2,
    "block3": U.update_block3,
}


def _double_entry(prob, st, new, duals, block) -> float:
    """Mismatch between the full and the restricted Lagrangian changes."""
    terms, obj = BLOCK_TERMS[block]
    full = augmented_lagrangian(prob, new, duals) - augmented_lagrangian(prob, st, duals)
    part = restricted(prob, new, duals, terms, obj) - restricted(prob, st, duals, terms, obj)
    scale = max(1.0, abs(augmented_lagrangian(prob, st, duals)))
    return abs(full - part) / scale


def check_block(block: str, n_states: int = 100, seed: int = 0, tol: float = 1e-6):
    """Closed form versus numeric minimizer of the restricted Lagrangian."""
    rng = np.random.default_rng([seed, sum(map(ord, block))])
    worst_gap, worst_entry = 0.0, 0.0
    for _ in range(n_states):
        if block == "b":
            # with one element a single coordinate pass solves the block
            prob, _, _ = random_problem(rng, n_antennas=1)
        else:
            prob, _, _ = random_problem(rng)
        st = random_state(prob, rng)
        duals = random_duals(prob, rng)
        new = BLOCK_UPDATES[block](prob, st, duals)
        worst_entry = max(worst_entry, _double_entry(prob, st, new, duals, block))
        terms, obj = BLOCK_TERMS[block]
        if block == "e":
            gap = _grid_e(prob, st, new, duals)
        elif block == "b":
            gap = _grid_b(prob, st, new, duals)
        else:
            gap = 0.0
            for setter, zc, bounds, starts in _subproblems(block, prob, st, new, rng):
                f = lambda z: restricted(prob, setter(np.asarray(z)), duals, terms, obj)
                closed = f(zc)
                best = _numeric_min(f, [zc] + list(starts), bounds)
                gap = max(gap, (closed - best) / max(1.0, abs(best)))
        worst_gap = max(worst_gap, gap)
    passed = bool(worst_gap <= tol and worst_entry <= 1e-9)
    return (f"closed form {block}", passed,
            f"{n_states} states, worst relative excess {worst_gap:.2e} (tol {tol:g}), "
            f"double-entry mismatch {worst_entry:.1e}")


def _grid_e(prob, st, new, duals, points: int = 10_000) -> float:
    """update_e against a grid on [0, 1]; returns the excess over the grid
    minimum beyond what the grid resolution explains."""
    k, lam = duals.kappa, duals.lam
    grid = np.linspace(0.0, 1.0, points)
    step = grid[1] - grid[0]
    worst = 0.0
    for u in range(prob.n_users):
        def f(e):
            return sum((e - getattr(st, n)[u] + k * lam[n][u]) ** 2 for n in ("e_t", "e_h", "e_b"))
        vals = f(grid)
        g_best = grid[int(np.argmin(vals))]
        # a convex quadratic with curvature 6: the grid minimum is at most
        # 3 * step^2 / 4 above the true minimum
        excess = f(new.e[u]) - vals.min()
        worst = max(worst, excess / max(1.0, abs(vals.min())))
        if abs(new.e[u] - g_best) > step:
            worst = max(worst, abs(new.e[u] - g_best))
    return worst


def _grid_b(prob, st, new, duals, angles: int = 3600) -> float:
    """Single-element b against a phase grid and a bounded scalar search."""
    optimize = _optimize()
    worst = 0.0
    grid = np.linspace(-np.pi, np.pi, angles, endpoint=False)
    k, lam = duals.kappa, duals.lam
    ph0 = prob.k * (prob.direction[:, 0] * st.x[:, 0] + prob.direction[:, 1] * st.y[:, 0])
    for u in range(prob.n_users):
        def f(ph):
            return U.b_objective(prob, st, duals, u, np.array([np.exp(1j * ph)]))
        # the same restriction written out for a whole grid at once
        z = np.exp(1j * grid)
        vals = (np.abs(st.gamma[u] + k * lam["gamma"][u] - prob.beta[u] * np.conj(st.q[0]) * z) ** 2
                + np.abs(np.exp(1j * ph0[u]) + k * lam["b"][u, 0] - z) ** 2)
        p0 = grid[int(np.argmin(vals))]
        step = grid[1] - grid[0]
        res = optimize.minimize_scalar(f, bounds=(p0 - step, p0 + step), method="bounded",
                                       options={"xatol": 1e-12})
        best = min(vals.min(), float(res.fun))
        closed = f(np.angle(new.b[u, 0]))
        worst = max(worst, (closed - best) / max(1.0, abs(best)))
    return worst


def check_positions(n_states: int = 100, seed: int = 0, tol: float = 1e-6):
    """Position model minimizer versus a 100 x 100 grid refined by a bounded
    search, per user and element."""
    optimize = _optimize()
    rng = np.random.default_rng([seed, 7])
    worst = 0.0
    for _ in range(n_states):
        prob, _, _ = random_problem(rng)
        st = random_state(prob, rng)
        duals = random_duals(prob, rng)
        x0b, x1b, y0b, y1b = prob.region
        gx, gy = np.meshgrid(np.linspace(x0b, x1b, 100), np.linspace(y0b, y1b, 100))
        gx, gy = gx.ravel(), gy.ravel()
        for i in range(prob.n_antennas):
            model = U.position_model(prob, st, duals, i)
            px, py = U.minimize_position_model(model, prob.k, prob.region, st.x[:, i], st.y[:, i])
            weight, d, target, tx, ty = model
            for u in range(prob.n_users):
                def j_u(z):
                    ph = prob.k * (d[u, 0] * z[0] + d[u, 1] * z[1]) - target[u]
                    return weight[u] * ph**2 + np.sum((z[0] - tx[u]) ** 2) + np.sum((z[1] - ty[u]) ** 2)
                ph = prob.k * (d[u, 0] * gx + d[u, 1] * gy) - target[u]
                vals = (weight[u] * ph**2 + ((gx[:, None] - tx[u]) ** 2).sum(axis=1)
                        + ((gy[:, None] - ty[u]) ** 2).sum(axis=1))
                start = int(np.argmin(vals))
                res = optimize.minimize(j_u, [gx[start], gy[start]], method="L-BFGS-B",
                                        bounds=[(x0b, x1b), (y0b, y1b)],
                                        options={"ftol": 1e-15, "gtol": 1e-12})
                best = min(vals.min(), float(res.fun))
                closed = j_u((px[u], py[u]))
                worst = max(worst, (closed - best) / max(1.0, abs(best)))
    return ("closed form positions", bool(worst <= tol),
            f"{n_states} states, worst relative excess {worst:.2e} (tol {tol:g})")


def check_beamformer_solve(n_states: int = 100, seed: int = 0, tol: float = 1e-9):
    """q update versus a dense least-squares solve built independently."""
    rng = np.random.default_rng([seed, 11])
    worst = 0.0
    for _ in range(n_states):
        prob, _, _ = random_problem(rng, n_antennas=4)
        st = random_state(prob, rng)
        duals = random_duals(prob, rng)
        new = U.update_block2(prob, st, duals)
        k = duals.kappa
        hv = prob.beta[:, None] * st.b
        # minimize ||gamma + k lam - H conj(q)||^2 + ||conj(q) - conj(q_t - k lam_q)||^2
        a = np.vstack([hv, np.eye(prob.n_antennas)])
        rhs = np.concatenate([st.gamma + k * duals.lam["gamma"], np.conj(st.q_t - k * duals.lam["q"])])
        w, *_ = np.linalg.lstsq(a, rhs, rcond=None)
        worst = max(worst, float(np.max(np.abs(np.conj(w) - new.q))) / max(1.0, float(np.max(np.abs(w)))))
    return ("beamformer linear solve", bool(worst <= tol), f"{n_states} states, worst deviation {worst:.1e}")


def closed_form_checks(n_states: int = 100, seed: int = 0):
    for block in BLOCK_TERMS:
        yield check_block(block, n_states, seed)
    yield check_positions(n_states, seed)
    yield check_beamformer_solve(n_states, seed)


# ------------------------------------------------------------ monotonicity

def check_monotone(n_instances: int = 50, seed: int = 0, slack: float = 1e-9, max_outer: int = 60):
    """Augmented Lagrangian after every block update within a sweep, along
    the solver's own trajectory (first ``max_outer`` outer iterations) and
    from a random state with random multipliers."""
    rng = np.random.default_rng([seed, 2])
    worst, blocks_seen, where = 0.0, 0, ""
    cfg = PddConfig(max_outer=max_outer)
    for inst in range(n_instances):
        cfg_ch = ChannelConfig(n_antennas=2, link_gain_db=LINK_GAIN_DB)
        channels = sample_channels(int(rng.integers(2**31)), 4, cfg_ch)
        samples = rng.integers(100, 400, 4).astype(float)
        last = {}

        def monitor(event, prob, st, duals):
            nonlocal worst, blocks_seen, where
            val = augmented_lagrangian(prob, st, duals)
            if event != "sweep":
                rise = (val - last["v"]) / max(1.0, abs(last["v"]))
                blocks_seen += 1
                if rise > worst:
                    worst, where = rise, f"instance {inst} block {event}"
            last["v"] = val

        solve(cfg, channels, samples, SIGMA_N2, P_A, monitor=monitor)

        prob = PddProblem.from_channels(channels, samples, SIGMA_N2, P_A)
        st = random_state(prob, rng)
        duals = random_duals(prob, rng)
        from fluidair.pdd.solver import inner_sweep

        monitor("sweep", prob, st, duals)
        inner_sweep(prob, st, duals, 1, lambda name, s: monitor(name, prob, s, duals))
    passed = bool(worst <= slack)
    return ("augmented Lagrangian monotone per block", passed,
            f"{n_instances} instances, {blocks_seen} block updates, worst relative rise "
            f"{worst:.1e}{' at ' + where if where else ''} (slack {slack:g})")


# ---------------------------------------------------------- PDD vs oracle

def check_pdd_vs_oracle(n_instances: int = 20, seed: int = 0, ratio: float = 1.10,
                        eps: float = 1e-5):
    """PDD's r against the exhaustive selection oracle on the channels PDD
    returned, beamformer by whichever standard rule does better."""
    t0 = time.time()
    bad, worst, worst_res = [], 0.0, 0.0
    for k in range(n_instances):
        inst_seed = seed + k
        n_users = 3 + k % 6
        channels = sample_channels(inst_seed, n_users,
                                   ChannelConfig(n_antennas=2, link_gain_db=LINK_GAIN_DB))
        samples = np.full(n_users, 270.0)
        res = solve(PddConfig(), channels, samples, SIGMA_N2, P_A)
        hs = [c.h for c in res.channels]
        oracle = min(exhaustive_selection_oracle(hs, samples, rule, SIGMA_N2, P_A).r
                     for rule in ("eig", "mrt_sum"))
        worst = max(worst, res.r / oracle)
        worst_res = max(worst_res, res.residual)
        if res.r > ratio * oracle or res.residual > eps:
            bad.append(f"#{k}: r/oracle {res.r / oracle:.3f} residual {res.residual:.1e}")
    passed = not bad
    detail = (f"{n_instances} instances, worst r/oracle {worst:.3f} (limit {ratio}), "
              f"worst residual {worst_res:.1e} (limit {eps:g}), {time.time() - t0:.0f} s")
    if bad:
        detail += "; " + "; ".join(bad)
    return ("PDD versus exhaustive oracle", passed, detail)


# --------------------------------------------------------------- MSE law

MSE_CONFIGS = (
    # (K, antennas, sigma_n2, P_a, equal gains)
    (1, 2, 0.01, 1.0, True),
    (5, 4, 0.01, 1.0, True),
    (5, 4, 0.1, 2.0, False),
    (20, 4, 0.01, 1.0, True),
    (20, 2, 0.05, 0.5, False),
)


def check_mse(n_rounds: int = 100_000, seed: int = 0, dim: int = 3):
    """Empirical aggregation MSE over independent rounds against the closed
    form, with equal-norm gradients (the law's worst-case reading) and the
    bottleneck gain."""
    results = []
    for idx, (k, n, sigma, p_a, equal) in enumerate(MSE_CONFIGS):
        rng = np.random.default_rng([seed, 4, idx])
        hs = rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))
        q = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        q /= np.linalg.norm(q)
        if equal:
            # rescale every channel so q^H h has the same magnitude
            hs = hs / np.abs(hs @ q.conj())[:, None]
        grads = rng.standard_normal((k, dim))
        grads /= np.linalg.norm(grads, axis=1, keepdims=True)
        gain = float(np.min(np.abs(hs @ q.conj()) ** 2))
        theory = theoretical_mse(k, sigma, 1.0, p_a, gain)
        noise_rng = np.random.default_rng([seed, 5, idx])
        sel = np.ones(k)
        err = np.empty(n_rounds)
        for t in range(n_rounds):
            out = receive_and_combine(hs, sel, q, grads, sigma, p_a, noise_rng)
            err[t] = float(np.sum(np.abs(out.e2) ** 2))
        mean, se = err.mean(), err.std(ddof=1) / np.sqrt(n_rounds)
        results.append((k, mean, theory, se, abs(mean - theory) <= 3 * se))
    passed = bool(all(r[-1] for r in results))
    detail = "; ".join(f"K={k}: {m:.4g} vs {t:.4g} ({abs(m - t) / s:.1f} se)"
                       for k, m, t, s, _ in results)
    return ("aggregation MSE law", passed, detail)


# -------------------------------------------------------- channel bound

def check_gain_bound(n_draws: int = 1000, seed: int = 0):
    rng = np.random.default_rng([seed, 5])
    worst_ratio, worst_aligned = 0.0, 1.0
    configs = [(n, w) for n in (1, 2, 4, 8) for w in (0.1, 1.0)]
    for n, wavelength in configs:
        beta = complex(rng.standard_normal() + 1j * rng.standard_normal())
        region = (0.0, 8 * wavelength, 0.0, 8 * wavelength)
        layout = AntennaLayout(rng.uniform(0, 8 * wavelength, n), rng.uniform(0, 8 * wavelength, n),
                               region, wavelength / 2, wavelength / 2)
        params = ChannelParams(beta, float(rng.uniform(-np.pi / 2, np.pi / 2)),
                               float(rng.uniform(-np.pi / 2, np.pi / 2)), wavelength)
        h = channel_vector(params, layout)
        bound = max_gain_bound(beta, n)
        qs = rng.standard_normal((n_draws, n)) + 1j * rng.standard_normal((n_draws, n))
        qs /= np.linalg.norm(qs, axis=1, keepdims=True)
        for q in qs:
            worst_ratio = max(worst_ratio, effective_gain(q, h) / bound)
        # phase-aligned beamformer from the array response
        a = array_response(layout, params.theta, params.phi, wavelength)
        aligned = effective_gain(a / np.sqrt(n), h) / bound
        worst_aligned = min(worst_aligned, aligned)
    passed = bool(worst_ratio <= 1.0 + 1e-12 and worst_aligned >= 0.999)
    return ("channel gain bound", passed,
            f"{len(configs)} configurations x {n_draws} beamformers, max gain/bound "
            f"{worst_ratio:.6f}, aligned gain/bound {worst_aligned:.12f}")


# ---------------------------------------------------- convergence bound

def check_bound_recursion(n_instances: int = 100, seed: int = 0, rounds: int = 5):
    rng = np.random.default_rng([seed, 6])
    worst_unrolled, worst_contract = 0.0, 0.0
    for _ in range(n_instances):
        mu = float(rng.uniform(0.1, 1.0))
        params = BoundParams(mu=mu, L=float(rng.uniform(mu, 10 * mu + 1)),
                             alpha1=float(rng.uniform(0, 2)), alpha2=float(rng.uniform(1, 3)),
                             lr=float(rng.uniform(0.01, 0.2)))
        r = rng.uniform(0, 0.1, rounds)
        gap0 = float(rng.uniform(0.1, 10))
        gap = gap0
        for rt in r:
            phi = 1 - params.mu / params.L * (1 - 2 * params.alpha2 * rt)
            gap = phi * gap + params.alpha1 / params.L * rt
        got = bound_after_T(params, r, gap0)
        worst_unrolled = max(worst_unrolled, abs(got - gap) / abs(gap))
        clean = noisy_gap_recursion(params, np.zeros(rounds), 0.0, gap0)
        expect = gap0 * (1 - params.mu / params.L) ** rounds
        worst_contract = max(worst_contract, abs(clean - expect) / expect)
    passed = bool(worst_unrolled <= 1e-12 and worst_contract <= 1e-12)
    return ("convergence bound recursion", passed,
            f"{n_instances} instances, unrolled mismatch {worst_unrolled:.1e}, "
            f"clean contraction mismatch {worst_contract:.1e}")


# ------------------------------------------------------------- learning

def _toy_dataset(rng, n_users=4, classes=3, features=5, sizes=(7, 11, 5, 9)):
    users = [UserData(rng.standard_normal((s, features)), rng.integers(0, classes, s))
             for s in sizes[:n_users]]
    test = UserData(rng.standard_normal((20, features)), rng.integers(0, classes, 20))
    return Dataset(users, classes, features, test)


def check_learning(n_instances: int = 20, seed: int = 0):
    rng = np.random.default_rng([seed, 8])
    worst_fd, worst_pool, worst_step = 0.0, 0.0, 0.0
    for _ in range(n_instances):
        data = _toy_dataset(rng)
        model = Model(rng.normal(0, 0.5, 3 * 6), 3, 5)
        user = data.users[0]
        grad = local_gradient(model, user)
        h = 1e-6
        fd = np.empty_like(grad)
        for i in range(grad.size):
            w = model.w.copy()
            w[i] += h
            up = local_loss(Model(w, 3, 5), user)
            w[i] -= 2 * h
            down = local_loss(Model(w, 3, 5), user)
            fd[i] = (up - down) / (2 * h)
        worst_fd = max(worst_fd, float(np.max(np.abs(fd - grad))))

        pooled = local_loss(model, data.pooled())
        worst_pool = max(worst_pool, abs(global_loss(model, data) - pooled) / abs(pooled))

        n = 3
        hs = rng.standard_normal((4, n)) + 1j * rng.standard_normal((4, n))
        q = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        q /= np.linalg.norm(q)
        plan = RoundPlan(SelectionVector(np.ones(4), data.sizes), q, list(hs))
        cfg = TrainConfig(rounds=1, lr=0.1, sigma_n2=0.0, p_a=1.0)
        after = fed_round(TrainState(model), plan, data, cfg, np.random.default_rng(0))
        central = model.w - cfg.lr * local_gradient(model, data.pooled())
        worst_step = max(worst_step, float(np.max(np.abs(after.model.w - central))))
    passed = bool(worst_fd <= 1e-5 and worst_pool <= 1e-12 and worst_step <= 1e-9)
    return ("gradient and loss identities", passed,
            f"{n_instances} instances, finite-difference error {worst_fd:.1e}, pooled-loss "
            f"mismatch {worst_pool:.1e}, noiseless round vs centralized step {worst_step:.1e}")


# ------------------------------------------------------------------ suite

def run_all(seed: int = 0, quick: bool = False):
    """Yield every oracle check; ``quick`` shrinks the random draws and skips
    the PDD-versus-oracle comparison."""
    n = 10 if quick else 100
    yield from closed_form_checks(n, seed)
    yield check_monotone(5 if quick else 50, seed)
    if not quick:
        yield check_pdd_vs_oracle(20, seed)
    yield check_mse(10_000 if quick else 100_000, seed)
    yield check_gain_bound(100 if quick else 1000, seed)
    yield check_bound_recursion(10 if quick else 100, seed)
    yield check_learning(5 if quick else 20, seed)
