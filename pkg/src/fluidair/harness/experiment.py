"""Method x realization grid: channels, planning, training, summary."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from fluidair.baselines import aps_positions, eig_beamformer, mrt_beamformer, random_fa_positions
from fluidair.channel import dbm_to_mw, sample_channels
from fluidair.fedsim import RoundPlan, TrainConfig, load_mnist, make_synthetic, train
from fluidair.harness.config import EXTERNAL_METHODS, ExperimentConfig
from fluidair.harness.results import ResultRow
from fluidair.objective import comm_penalty
from fluidair.pdd import solve

log = logging.getLogger(__name__)


@dataclass
class CellResult:
    method: str
    realization: int
    rows: list[ResultRow] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    error: str | None = None


@dataclass
class ExperimentResult:
    rows: list[ResultRow]
    summary: dict
    traces: dict  # (method, realization) -> PDD trace


def cell_seed(cfg: ExperimentConfig, realization: int) -> int:
    return cfg.experiment.master_seed + realization


def make_dataset(cfg: ExperimentConfig, seed: int):
    f = cfg.fedsim
    if f.dataset == "mnist":
        root = Path(f.mnist_dir)
        return load_mnist(root / "train-images-idx3-ubyte.gz", root / "train-labels-idx1-ubyte.gz",
                          cfg.experiment.users, f.samples_per_user, seed,
                          root / "t10k-images-idx3-ubyte.gz", root / "t10k-labels-idx1-ubyte.gz")
    return make_synthetic(seed, cfg.experiment.users, f.samples_per_user, f.n_classes,
                          f.n_features, f.class_sep, f.test_size)


def _plan_from(res) -> RoundPlan:
    return RoundPlan(res.selection, res.q, [c.h for c in res.channels], res.r)


def plan_method(method: str, cfg: ExperimentConfig, channels, samples, rng) -> tuple[RoundPlan, list]:
    """Selection, beamformer and channels for one method; returns the plan
    and the PDD trace behind it."""
    sigma = dbm_to_mw(cfg.ota.sigma_n2_dbm)
    p_a = dbm_to_mw(cfg.ota.p_a_dbm)
    pdd = cfg.pdd
    if method == "pdd_fa":
        res = solve(pdd, channels, samples, sigma, p_a)
        return _plan_from(res), res.trace
    if method == "select_all":
        # everyone transmits through fixed-position antennas; only the
        # beamformer is optimized
        res = solve(replace(pdd, fixed_selection=True, optimize_positions=False), channels,
                    samples, sigma, p_a)
        return _plan_from(res), res.trace
    if method == "mrt":
        res = solve(pdd, channels, samples, sigma, p_a)
        hs = [c.h for c in res.channels]
        q = mrt_beamformer(hs, res.selection)
        r = comm_penalty(res.selection, q, hs, sigma, p_a)
        return RoundPlan(res.selection, q, hs, r), res.trace
    frozen = replace(pdd, optimize_positions=False)
    ch = cfg.channel
    if method == "rfa":
        moved = [c.with_layout(random_fa_positions(c.layout.region, c.layout.v_x, c.layout.v_y,
                                                   c.layout.n, rng, cfg.baselines.rfa_max_tries))
                 for c in channels]
    elif method == "aps":
        everyone = np.ones(len(channels))
        q0 = eig_beamformer([c.h for c in channels], everyone)
        step = cfg.baselines.aps_grid_step * ch.wavelength
        moved = [c.with_layout(aps_positions(c.params, c.layout, step, q0, cfg.baselines.aps_rounds))
                 if c.mode == "los" else c for c in channels]
    else:
        raise ValueError(f"unknown method {method!r}")
    res = solve(frozen, moved, samples, sigma, p_a)
    return _plan_from(res), res.trace


def run_cell(cfg: ExperimentConfig, method: str, realization: int) -> CellResult:
    out = CellResult(method, realization)
    if method in EXTERNAL_METHODS:
        out.error = "external: not implemented"
        return out
    seed = cell_seed(cfg, realization)
    try:
        channels = sample_channels(seed, cfg.experiment.users, cfg.channel)
        data = make_dataset(cfg, seed)
        # one stream for position draws, another for receiver noise
        pos_rng = np.random.default_rng([seed, 1])
        traces = []

        def planner(t):
            plan, trace = plan_method(method, cfg, channels, data.sizes, pos_rng)
            traces.append(trace)
            return plan

        f = cfg.fedsim
        per_round = f.resolve_each_round or (method == "rfa" and cfg.baselines.rfa_redraw == "per_round")
        tc = TrainConfig(rounds=f.rounds, lr=f.lr, sigma_n2=dbm_to_mw(cfg.ota.sigma_n2_dbm),
                         p_a=dbm_to_mw(cfg.ota.p_a_dbm), l2=f.l2, seed=seed,
                         resolve_each_round=per_round)
        state = train(data, tc, planner)
        out.trace = traces[0] if traces else []
        out.rows = [ResultRow(method, realization, h["round"], h["train_loss"], h["test_loss"],
                              h["test_accuracy"], h["selected_count"], float(h["r_value"]),
                              h["max_gain"]) for h in state.history]
    except Exception as exc:  # recorded per cell; the grid keeps going
        log.warning("cell %s/%d failed: %s", method, realization, exc)
        out.error = f"{type(exc).__name__}: {exc}"
        out.rows = []
    return out


def _stats(values) -> dict:
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        return {"mean": None, "std": None, "median": None}
    return {"mean": float(a.mean()), "std": float(a.std()), "median": float(np.median(a))}


def summarize(cfg: ExperimentConfig, cells: list[CellResult]) -> dict:
    methods = {}
    for m in cfg.experiment.methods:
        mine = [c for c in cells if c.method == m]
        ok = [c for c in mine if c.error is None and c.rows]
        failed = {str(c.realization): c.error for c in mine if c.error is not None}
        if m in EXTERNAL_METHODS:
            status = "external"
        elif not ok:
            status = "failed"
        elif failed:
            status = "partial"
        else:
            status = "ok"
        final = [max(c.rows, key=lambda r: r.round) for c in ok]
        methods[m] = {
            "status": status,
            "cells_ok": len(ok),
            "cells_failed": len(mine) - len(ok),
            "errors": failed,
            "final_test_accuracy": _stats([r.test_accuracy for r in final]),
            "selected_count": _stats([r.selected_count for r in final]),
        }
    return {"realizations": cfg.experiment.realizations, "users": cfg.experiment.users,
            "master_seed": cfg.experiment.master_seed, "methods": methods}


def _run_packed(args):
    return run_cell(*args)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    jobs = [(cfg, m, k) for m in cfg.experiment.methods
            for k in range(cfg.experiment.realizations)]
    n = workers or cfg.experiment.workers
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            cells = list(pool.map(_run_packed, jobs))
    else:
        cells = [_run_packed(j) for j in jobs]
    rows = sorted((r for c in cells for r in c.rows), key=lambda r: r.key)
    traces = {(c.method, c.realization): c.trace for c in cells if c.trace}
    return ExperimentResult(rows, summarize(cfg, cells), traces)
