"""Reference schemes: Select-All, MRT, random and grid-searched antenna
positions, and a brute-force selection oracle for small instances."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from fluidair.channel import AntennaLayout, ChannelParams, channel_vector, min_distance_ok
from fluidair.errors import (
    DegenerateChannelError,
    EmptySelectionError,
    InvalidArgumentError,
    PackingError,
)
from fluidair.objective import SelectionVector, penalty_terms

BASELINE_KINDS = ("select_all", "mrt", "rfa", "aps", "exhaustive_oracle")
MAX_ORACLE_USERS = 12


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    params: dict = field(default_factory=dict)  # e.g. grid_step, rounds, max_tries

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise InvalidArgumentError(f"unknown baseline {self.kind!r}")
        for k, v in self.params.items():
            if isinstance(v, (int, float)) and not v > 0:
                raise InvalidArgumentError(f"baseline parameter {k} must be positive")


def _vec(c) -> np.ndarray:
    return np.asarray(c.h if hasattr(c, "h") else c, dtype=complex)


def select_all(samples) -> SelectionVector:
    """Everyone transmits. ``samples`` is a user count or the per-user sizes."""
    s = np.ones(samples) if np.ndim(samples) == 0 else np.asarray(samples, dtype=float)
    if s.size < 1:
        raise InvalidArgumentError("need at least one user")
    return SelectionVector(np.ones(s.size), s)


def mrt_beamformer(channels, sel) -> np.ndarray:
    """Matched filter to the sum of the selected channels."""
    idx = np.flatnonzero(np.asarray(sel.e if hasattr(sel, "e") else sel) > 0.5)
    if idx.size == 0:
        raise EmptySelectionError("MRT needs a nonempty selection")
    total = sum(_vec(channels[u]) for u in idx)
    norm = np.linalg.norm(total)
    if norm == 0:
        raise DegenerateChannelError("selected channels sum to zero")
    return total / norm


def eig_beamformer(channels, sel) -> np.ndarray:
    """Principal eigenvector of the selected channels' covariance."""
    idx = np.flatnonzero(np.asarray(sel.e if hasattr(sel, "e") else sel) > 0.5)
    if idx.size == 0:
        raise EmptySelectionError("beamformer needs a nonempty selection")
    hs = np.array([_vec(channels[u]) for u in idx])
    cov = hs.T @ hs.conj()
    if not np.any(cov):
        raise DegenerateChannelError("selected channels are all zero")
    q = np.linalg.eigh(cov)[1][:, -1]
    # fix the global phase so results are reproducible across LAPACK builds
    k = int(np.argmax(np.abs(q)))
    return q * np.exp(-1j * np.angle(q[k]))


Q_RULES = {"mrt_sum": mrt_beamformer, "eig": eig_beamformer}


def greedy_selection(q, channels, samples, sigma_n2: float, p_a: float) -> SelectionVector:
    """Best selection for a fixed beamformer.

    For a fixed bottleneck value every user below it should be included, so
    the optimum is one of the prefixes of the users sorted by S_u^2 / gain.
    """
    s = np.asarray(samples, dtype=float)
    gains = np.array([abs(np.vdot(q, _vec(c))) ** 2 for c in channels])
    ok = gains > 0
    if not np.any(ok):
        raise DegenerateChannelError("every effective gain is zero")
    ratio = np.where(ok, s**2 / np.where(ok, gains, 1.0), np.inf)
    order = np.argsort(ratio, kind="stable")
    best, best_r = None, np.inf
    e = np.zeros(s.size)
    for u in order:
        if not ok[u]:
            break
        e[u] = 1.0
        r = sum(penalty_terms(e, s, gains, sigma_n2, p_a))
        if r < best_r:
            best, best_r = e.copy(), r
    return SelectionVector(best, s)


def random_fa_positions(region, v_x: float, v_y: float, n: int, rng,
                        max_tries: int = 10000) -> AntennaLayout:
    """Uniform rejection sampling of a feasible layout."""
    if n < 1:
        raise InvalidArgumentError("need at least one element")
    x0, x1, y0, y1 = region
    if (n - 1) * v_x > x1 - x0 + 1e-12 or (n - 1) * v_y > y1 - y0 + 1e-12:
        raise PackingError("region cannot hold the requested elements")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    for _ in range(max_tries):
        lay = AntennaLayout(rng.uniform(x0, x1, n), rng.uniform(y0, y1, n), region, v_x, v_y)
        if min_distance_ok(lay):
            return lay
    raise PackingError(f"no feasible layout after {max_tries} draws")


def aps_positions(params: ChannelParams, layout: AntennaLayout, grid_step: float, q,
                  rounds: int = 3, trace: list | None = None) -> AntennaLayout:
    """Coordinate-wise grid search maximizing |q^H h|^2 for one user.

    Each element in turn moves to the feasible grid point with the largest
    gain, the others held fixed; a move is taken only on strict improvement.
    """
    if not grid_step > 0:
        raise InvalidArgumentError("grid step must be positive")
    x0, x1, y0, y1 = layout.region
    if grid_step > max(x1 - x0, y1 - y0):
        return layout
    gx = np.arange(x0, x1 + 1e-12, grid_step)
    gy = np.arange(y0, y1 + 1e-12, grid_step)
    q = np.asarray(q, dtype=complex)

    def gain(lay):
        return abs(np.vdot(q, channel_vector(params, lay))) ** 2

    cur = layout
    best = gain(cur)
    if trace is not None:
        trace.append(best)
    for _ in range(rounds):
        moved = False
        for i in range(cur.n):
            others = np.arange(cur.n) != i
            ox, oy = cur.x[others], cur.y[others]
            for xv in gx:
                if np.any(np.abs(ox - xv) < cur.v_x - 1e-12):
                    continue
                for yv in gy:
                    if np.any(np.abs(oy - yv) < cur.v_y - 1e-12):
                        continue
                    x = cur.x.copy()
                    y = cur.y.copy()
                    x[i], y[i] = xv, yv
                    cand = cur.moved(x, y)
                    g = gain(cand)
                    if g > best * (1 + 1e-12):
                        cur, best, moved = cand, g, True
                        if trace is not None:
                            trace.append(best)
        if not moved:
            break
    return cur


@dataclass
class OracleResult:
    selection: SelectionVector
    q: np.ndarray
    r: float


def exhaustive_selection_oracle(channels, samples, q_rule: str, sigma_n2: float,
                                p_a: float) -> OracleResult:
    """Enumerate every nonempty selection, beamformer set by ``q_rule``.

    Ties break toward the larger selected mass, then the lexicographically
    smallest list of selected indices.
    """
    s = np.asarray(samples, dtype=float)
    u = s.size
    if u > MAX_ORACLE_USERS:
        raise InvalidArgumentError(f"oracle limited to {MAX_ORACLE_USERS} users, got {u}")
    if u < 1:
        raise InvalidArgumentError("need at least one user")
    rule = Q_RULES.get(q_rule)
    if rule is None:
        raise InvalidArgumentError(f"unknown q rule {q_rule!r}")
    best = None
    for k in range(1, u + 1):
        for combo in itertools.combinations(range(u), k):
            e = np.zeros(u)
            e[list(combo)] = 1.0
            try:
                q = rule(channels, e)
                gains = np.array([abs(np.vdot(q, _vec(c))) ** 2 for c in channels])
                r = sum(penalty_terms(e, s, gains, sigma_n2, p_a))
            except DegenerateChannelError:
                continue
            key = (r, -float(e @ s), combo)
            if best is None or key < best[0]:
                best = (key, e, q)
    if best is None:
        raise DegenerateChannelError("no selection has a positive gain")
    (r, _, _), e, q = best
    return OracleResult(SelectionVector(e, s), q, r)
