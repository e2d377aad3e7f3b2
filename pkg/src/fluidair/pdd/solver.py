"""Outer/inner loop of the penalty dual decomposition solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fluidair.baselines import aps_positions, eig_beamformer, greedy_selection, mrt_beamformer
from fluidair.channel import AntennaLayout, ChannelRealization
from fluidair.errors import EmptySelectionError, InvalidArgumentError, SolverFailure
from fluidair.objective import SelectionVector, comm_penalty
from fluidair.pdd import updates
from fluidair.pdd.state import (
    DualState,
    PddConfig,
    PddProblem,
    PddState,
    augmented_lagrangian,
    initial_state,
    objective_value,
    residual_inf_norm,
)

# Block order of one inner sweep.
SWEEP = (
    ("e", updates.update_e),
    ("block1_aux", updates.update_block1_aux),
    ("q_tilde", updates.update_q_tilde),
    ("b", None),  # needs the sweep count
    ("e_aux", updates.update_e_aux),
    ("block2", updates.update_block2),
    ("positions", updates.update_positions),
    ("block3", updates.update_block3),
)


@dataclass
class PddResult:
    selection: SelectionVector
    q: np.ndarray
    layouts: list[AntennaLayout]
    channels: list[ChannelRealization]
    r: float
    residual: float
    trace: list[dict] = field(default_factory=list)
    repair: float = 0.0  # largest coordinate move made by the layout repair


SELECTION_BLOCKS = ("e", "e_aux")


def inner_sweep(prob: PddProblem, st: PddState, duals: DualState, b_sweeps: int = 1,
                monitor=None, skip=()) -> PddState:
    """One pass over all blocks; ``monitor(name, state)`` is called after each."""
    for name, fn in SWEEP:
        if name in skip:
            continue
        if fn is None:
            st = updates.update_b_bcd(prob, st, duals, b_sweeps)
        else:
            st = fn(prob, st, duals)
        if monitor is not None:
            monitor(name, st)
    return st


def isotonic_spacing(z: np.ndarray, v: float, lo: float, hi: float) -> np.ndarray:
    """Closest point (in L2) to ``z`` whose sorted coordinates are at least
    ``v`` apart and lie in ``[lo, hi]``; the input order is preserved."""
    n = z.size
    order = np.argsort(z, kind="stable")
    offs = np.arange(n) * v
    w = z[order] - offs
    # pool adjacent violators for a nondecreasing fit of w
    vals, wts = [], []
    for val in w:
        vals.append(val)
        wts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            tot = wts[-2] + wts[-1]
            merged = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / tot
            vals[-2:] = [merged]
            wts[-2:] = [tot]
    fit = np.repeat(vals, wts)
    fit = np.clip(fit, lo, hi - (n - 1) * v)
    out = np.empty(n)
    out[order] = fit + offs
    return out


def repair_layout(layout: AntennaLayout) -> tuple[AntennaLayout, float]:
    x0, x1, y0, y1 = layout.region
    if layout.feasible:
        return layout, 0.0
    x = isotonic_spacing(layout.x, layout.v_x, x0, x1)
    y = isotonic_spacing(layout.y, layout.v_y, y0, y1)
    move = float(max(np.max(np.abs(x - layout.x)), np.max(np.abs(y - layout.y))))
    return layout.moved(x, y), move


def aligned_layouts(channels: list[ChannelRealization], step: float,
                    rounds: int = 2) -> list[ChannelRealization]:
    """Grid-align every user's elements toward the beamformer that serves
    all users at the given layouts; a starting point for the joint solve."""
    try:
        q0 = eig_beamformer([c.h for c in channels], np.ones(len(channels)))
    except (ArithmeticError, ValueError):
        return list(channels)
    return [c.with_layout(aps_positions(c.params, c.layout, step * c.params.wavelength, q0, rounds))
            if c.mode == "los" else c for c in channels]


def _binarize(e: np.ndarray, s: np.ndarray, threshold: float) -> np.ndarray:
    out = (e >= threshold).astype(float)
    if not out.any():
        out[int(np.argmax(e * s))] = 1.0
    return out


def solve(config: PddConfig, channels: list[ChannelRealization], samples, sigma_n2: float,
          p_a: float, monitor=None) -> PddResult:
    """Jointly choose users, receive beamformer and antenna positions.

    Channels carry their starting layouts. With ``config.optimize_positions``
    false, or for Rayleigh channels, positions stay where they are.
    ``monitor(event, prob, state, duals)`` is called with ``"sweep"`` before
    every inner sweep and with the block name after every block update.
    """
    samples = np.asarray(samples, dtype=float)
    if len(channels) < 1 or samples.size != len(channels):
        raise InvalidArgumentError("need one sample count per user and at least one user")
    if np.any(samples <= 0):
        raise InvalidArgumentError("sample counts must be positive")
    if sigma_n2 < 0 or p_a <= 0:
        raise InvalidArgumentError("need sigma_n2 >= 0 and P_a > 0")

    if config.align_start and config.optimize_positions:
        channels = aligned_layouts(channels, config.align_grid_step)
    prob = PddProblem.from_channels(channels, samples, sigma_n2, p_a, config.optimize_positions)
    st = initial_state(prob, [c.layout for c in channels])
    # The penalty is scaled to the objective's starting magnitude so the
    # couplings bind from the first outer iteration at any noise level.
    f0 = objective_value(prob, st)
    if config.kappa_scale == "bottleneck" and prob.nu > 0 and st.c > 0:
        kappa = config.kappa0 * st.c * st.eta_b / prob.nu
    else:
        kappa = config.kappa0 / (f0 if f0 > 0 else 4.0 / prob.n_users**2)
    duals = DualState.zeros(prob, kappa, config.c_pen)
    kappa_min = kappa * config.kappa_floor
    trace: list[dict] = []
    scale = prob.s_ref**2

    skip = SELECTION_BLOCKS if config.fixed_selection else ()
    best_res, stall = np.inf, 0
    try:
        f_prev = objective_value(prob, st)
        for outer in range(config.max_outer):
            eps = config.eps_inner(outer)
            prev = augmented_lagrangian(prob, st, duals)
            for inner in range(config.max_inner):
                hook = None
                if monitor is not None:
                    monitor("sweep", prob, st, duals)
                    hook = lambda name, s, d=duals: monitor(name, prob, s, d)
                st = inner_sweep(prob, st, duals, config.b_sweeps, hook, skip)
                cur = augmented_lagrangian(prob, st, duals)
                res = residual_inf_norm(prob, st)
                trace.append({
                    "outer_iter": outer, "inner_iter": inner, "aug_lagrangian": cur,
                    "residual_inf": res, "kappa": duals.kappa,
                    "r_value": objective_value(prob, st) * scale,
                })
                if not np.isfinite(cur):
                    raise SolverFailure("augmented Lagrangian is not finite", trace)
                # a feasible iterate is not enough: the sweeps must also have
                # stopped making progress on the augmented Lagrangian
                change = abs(prev - cur) / max(abs(cur), 1e-300)
                if (res <= eps and change <= config.obj_rel_tol) or change <= config.inner_rel_tol:
                    break
                prev = cur
            res = residual_inf_norm(prob, st)
            f_cur = objective_value(prob, st)
            settled = abs(f_prev - f_cur) <= config.obj_rel_tol * max(abs(f_cur), 1e-300)
            f_prev = f_cur
            if res <= config.eps_outer and settled:
                break
            duals = outer_update(duals, prob, st, res, best_res, stall, config)
            duals.kappa = max(duals.kappa, kappa_min)
            if res < config.progress_ratio * best_res:
                best_res, stall = res, 0
            else:
                stall += 1
                if stall >= config.stall_patience:
                    best_res, stall = res, 0
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        raise SolverFailure(f"numerical failure: {exc}", trace) from exc

    return _finish(config, prob, st, channels, samples, sigma_n2, p_a, trace)


def outer_update(duals: DualState, prob: PddProblem, st: PddState, res: float,
                 best_res: float, stall: int, config: PddConfig) -> DualState:
    """Multiplier ascent after every inner loop; the penalty shrinks by
    ``c_pen`` when the residual has stalled for ``stall_patience`` rounds.

    Gating the ascent on a fixed residual schedule leaves the multipliers at
    zero when the inner sweeps converge slowly, which stalls the method on
    couplings whose feasible sets meet tangentially (gain versus beamformer).
    """
    out, _ = updates.update_duals_and_penalty(duals, prob, st, np.inf)
    stalled = not res < config.progress_ratio * best_res and stall + 1 >= config.stall_patience
    if stalled:
        out.kappa = duals.kappa * duals.c_pen
    return out


def _score(e, q, hs, samples, sigma_n2, p_a):
    sel = SelectionVector(e, samples)
    try:
        return comm_penalty(sel, q, hs, sigma_n2, p_a), sel, q
    except (EmptySelectionError, ArithmeticError, ValueError):
        return None


def _polish(best, q, hs, samples, sigma_n2, p_a, max_rounds: int = 10):
    """Alternate exact selection for a fixed beamformer with the standard
    beamformer rules for a fixed selection, keeping the best pair seen."""
    starts = [q] if best is None else [q, best[2]]
    for q0 in starts:
        qc = q0
        for _ in range(max_rounds):
            try:
                sel = greedy_selection(qc, hs, samples, sigma_n2, p_a)
            except ArithmeticError:
                break
            improved = False
            for cand in [qc] + [rule(hs, sel.e) for rule in (eig_beamformer, mrt_beamformer)]:
                scored = _score(sel.e, cand, hs, samples, sigma_n2, p_a)
                if scored is not None and (best is None or scored[0] < best[0] * (1 - 1e-12)):
                    best, improved = scored, True
            if not improved:
                break
            qc = best[2]
    return _flip_search(best, hs, samples, sigma_n2, p_a)


def _flip_search(best, hs, samples, sigma_n2, p_a, max_rounds: int = 20):
    """Single add/drop moves, refitting the beamformer by each rule; stops at
    the first round without improvement."""
    if best is None:
        return best
    for _ in range(max_rounds):
        cur_e = best[1].e
        improved = False
        for u in range(cur_e.size):
            e = cur_e.copy()
            e[u] = 1.0 - e[u]
            if not e.any():
                continue
            for rule in (eig_beamformer, mrt_beamformer):
                try:
                    q = rule(hs, e)
                except (ArithmeticError, ValueError):
                    continue
                scored = _score(e, q, hs, samples, sigma_n2, p_a)
                if scored is not None and scored[0] < best[0] * (1 - 1e-12):
                    best, improved = scored, True
        if not improved:
            break
    return best


def _better(a, b):
    return b if a is None or (b is not None and b[0] < a[0]) else a


def _select(config, st, hs, samples, sigma_n2, p_a):
    """Binary selection and beamformer for one set of channels."""
    q = st.q / np.linalg.norm(st.q)
    everyone = np.ones(samples.size)
    rules = []
    for rule in (eig_beamformer, mrt_beamformer):
        try:
            rules.append(rule(hs, everyone))
        except (ArithmeticError, ValueError):
            pass
    if config.fixed_selection:
        best = None
        for cand in [q] + rules:
            best = _better(best, _score(everyone, cand, hs, samples, sigma_n2, p_a))
        return best
    e = _binarize(st.e, samples, config.binarize_threshold)
    best = _score(e, q, hs, samples, sigma_n2, p_a)
    if config.greedy_refine:
        best = _polish(best, q, hs, samples, sigma_n2, p_a)
        # also descend from the full selection, which the relaxation may
        # have left for a poorer local optimum
        for qa in rules:
            start = _score(everyone, qa, hs, samples, sigma_n2, p_a)
            best = _better(best, _polish(start, qa, hs, samples, sigma_n2, p_a))
    return best


def _finish(config, prob, st, channels, samples, sigma_n2, p_a, trace) -> PddResult:
    residual = residual_inf_norm(prob, st)
    options = []  # (layouts, channels, repair move)
    if prob.positions_free:
        layouts, repair = [], 0.0
        for u, c in enumerate(channels):
            lay, move = repair_layout(c.layout.moved(st.x[u], st.y[u]))
            layouts.append(lay)
            repair = max(repair, move)
        options.append((layouts, [c.with_layout(l) for c, l in zip(channels, layouts)], repair))
    # the starting layouts are feasible too; they guard against a solver run
    # that moved the antennas to serve a poor selection
    options.append(([c.layout for c in channels], list(channels), 0.0))

    found = None
    for layouts, out_channels, repair in options:
        best = _select(config, st, [c.h for c in out_channels], samples, sigma_n2, p_a)
        if best is not None and (found is None or best[0] < found[0][0]):
            found = (best, layouts, out_channels, repair)
    if found is None:
        raise SolverFailure("no usable selection after binarization", trace)
    (r, sel, q), layouts, out_channels, repair = found
    if sel.count == 0:
        raise SolverFailure("empty selection after repair", trace)
    return PddResult(sel, q, layouts, out_channels, float(r), residual, trace, repair)
