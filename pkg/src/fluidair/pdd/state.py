"""Variables, multipliers and the augmented Lagrangian of the PDD solver.

The solver works on a normalized copy of the round problem: sample counts are
divided by their maximum and channel powers by the bottleneck gain bound
``min_u bound_u / s_u^2``. That leaves the surrogate unchanged up to the
factor ``S_ref**2`` and makes the bottleneck variable ``c`` start near one
however weak the weakest user is.

Penalized couplings (residuals ``h``; each enters as ``(h + kappa*lam)^2``):

    e - e_t, e - e_h, e - e_b          selection consensus
    gamma - q^H (beta b)               effective channel
    a(x, y) - b                        array response
    alpha - alpha_t
    alpha_h - alpha_t * c_t
    xd - (x_i - x_j), yd - (y_i - y_j) pairwise differences
    c - c_t
    eta_t - eta_h
    eta_b - eta_h * eta_t              squared selected mass
    q - q_t
    eta_h - sum(e_t * s), eta_t - sum(e_h * s)

Hard constraints kept inside the block updates: ``0 <= e <= 1``,
``e_b s^2 <= alpha_h``, ``alpha <= |gamma|^2``, ``|b_i| = 1``, ``||q_t|| = 1``,
positions inside the region, linearized spacing ``sign * xd >= v``,
``c >= 0`` and ``eta_b > 0``. The objective is
``(4/U^2)(M - eta_h)^2 + nu * c / eta_b``; ``eta`` records its second term.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, fields

import numpy as np

from fluidair.channel import AntennaLayout, ChannelRealization


@functools.lru_cache(maxsize=None)
def _pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(n, 1)
    i.flags.writeable = False
    j.flags.writeable = False
    return i, j


@dataclass
class PddProblem:
    s: np.ndarray  # normalized samples, max 1
    nu: float  # sigma^2 / (P_a * g_ref * S_ref^2)
    beta: np.ndarray  # normalized path gains (LoS)
    direction: np.ndarray  # U x 2, (cos theta, sin phi)
    wavelength: float
    region: tuple[float, float, float, float]
    v_x: float
    v_y: float
    n_antennas: int
    fixed_h: np.ndarray | None = None  # U x N, used when positions are frozen
    s_ref: float = 1.0
    g_ref: float = 1.0

    @property
    def n_users(self) -> int:
        return self.s.size

    @property
    def mass(self) -> float:
        return float(self.s.sum())

    @property
    def k(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def positions_free(self) -> bool:
        return self.fixed_h is None

    @property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return _pairs(self.n_antennas)

    def response(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Array responses for all users, U x N."""
        ph = self.direction[:, 0:1] * x + self.direction[:, 1:2] * y
        return np.exp(1j * self.k * ph)

    @classmethod
    def from_channels(cls, channels: list[ChannelRealization], samples, sigma_n2: float,
                      p_a: float, optimize_positions: bool = True) -> "PddProblem":
        samples = np.asarray(samples, dtype=float)
        s_ref = float(samples.max())
        n = channels[0].layout.n
        los = all(c.mode == "los" for c in channels)
        if los:
            bounds = np.array([abs(c.params.beta) ** 2 * n for c in channels])
        else:
            bounds = np.array([float(np.linalg.norm(c.h) ** 2) for c in channels])
        g_ref = float(np.min(bounds / (samples / s_ref) ** 2))
        if not g_ref > 0:
            g_ref = float(bounds.max())
        lay = channels[0].layout
        fixed = None
        if not (los and optimize_positions):
            fixed = np.array([c.h for c in channels]) / np.sqrt(g_ref)
        return cls(
            s=samples / s_ref,
            nu=sigma_n2 / (p_a * g_ref * s_ref**2),
            beta=np.array([c.params.beta for c in channels]) / np.sqrt(g_ref),
            direction=np.array([c.params.direction for c in channels]),
            wavelength=channels[0].params.wavelength,
            region=lay.region,
            v_x=lay.v_x,
            v_y=lay.v_y,
            n_antennas=n,
            fixed_h=fixed,
            s_ref=s_ref,
            g_ref=g_ref,
        )


def _copy_value(v):
    return v.copy() if isinstance(v, np.ndarray) else v


@dataclass
class PddState:
    e: np.ndarray
    e_t: np.ndarray
    e_h: np.ndarray
    e_b: np.ndarray
    alpha: np.ndarray
    alpha_t: np.ndarray
    alpha_h: np.ndarray
    gamma: np.ndarray
    b: np.ndarray  # U x N
    x: np.ndarray  # U x N
    y: np.ndarray
    xd: np.ndarray  # U x P
    yd: np.ndarray
    sx: np.ndarray  # SCA orientation of each pair, +-1
    sy: np.ndarray
    q: np.ndarray
    q_t: np.ndarray
    c: float
    c_t: float
    eta: float
    eta_h: float
    eta_t: float
    eta_b: float

    def copy(self) -> "PddState":
        return PddState(**{f.name: _copy_value(getattr(self, f.name)) for f in fields(self)})


# dual name -> shape key ("u", "un", "up", "n" or "")
DUAL_SHAPES = {
    "e_t": "u", "e_h": "u", "e_b": "u", "gamma": "u", "b": "un",
    "alpha": "u", "alpha_h": "u", "xd": "up", "yd": "up",
    "c": "", "eta_t": "", "eta_b": "", "q": "n", "sum_t": "", "sum_h": "",
}
COMPLEX_DUALS = {"gamma", "b", "q"}


@dataclass
class DualState:
    lam: dict = field(default_factory=dict)
    kappa: float = 1.0
    c_pen: float = 0.7

    @classmethod
    def zeros(cls, prob: PddProblem, kappa: float = 1.0, c_pen: float = 0.7) -> "DualState":
        u, n = prob.n_users, prob.n_antennas
        p = n * (n - 1) // 2
        dims = {"u": (u,), "un": (u, n), "up": (u, p), "n": (n,), "": ()}
        lam = {}
        for name, key in DUAL_SHAPES.items():
            dt = complex if name in COMPLEX_DUALS else float
            lam[name] = np.zeros(dims[key], dtype=dt)
        return cls(lam, kappa, c_pen)

    def copy(self) -> "DualState":
        return DualState({k: np.array(v, copy=True) for k, v in self.lam.items()},
                         self.kappa, self.c_pen)


@dataclass
class PddConfig:
    kappa0: float = 0.1
    c_pen: float = 0.7
    eps_inner0: float = 1e-3
    eps_inner_rate: float = 0.5
    eps_inner_min: float = 1e-7
    eps_outer: float = 1e-5
    max_inner: int = 10
    max_outer: int = 1000
    inner_rel_tol: float = 1e-9
    # relative change of the objective (outer) and augmented Lagrangian
    # (inner) below which a feasible iterate counts as converged
    obj_rel_tol: float = 1e-6
    # penalty reduction once the residual has failed to drop by
    # ``progress_ratio`` for ``stall_patience`` consecutive outer iterations
    progress_ratio: float = 0.9
    stall_patience: int = 3
    # the penalty never drops below this fraction of its starting value
    kappa_floor: float = 1e-6
    # "objective": kappa0 / f(initial); "bottleneck": kappa0 * c * eta_b / nu,
    # so one sweep's pull of the noise term moves c by about kappa0 * c
    kappa_scale: str = "objective"
    b_sweeps: int = 1
    optimize_positions: bool = True
    greedy_refine: bool = True
    # keep every user selected and optimize only beamformer and positions
    fixed_selection: bool = False
    binarize_threshold: float = 0.5
    # start from layouts grid-aligned to the all-user beamformer
    align_start: bool = False
    align_grid_step: float = 0.25  # in wavelengths

    def __post_init__(self):
        if not 0 < self.c_pen < 1:
            raise ValueError("penalty reduction factor must be in (0, 1)")
        if min(self.eps_inner0, self.eps_inner_min, self.eps_outer, self.kappa0, self.obj_rel_tol) <= 0:
            raise ValueError("tolerances and initial penalty must be positive")
        if self.max_inner < 1 or self.max_outer < 1 or self.stall_patience < 1:
            raise ValueError("iteration limits must be positive")
        if self.kappa_scale not in ("objective", "bottleneck"):
            raise ValueError(f"unknown penalty scaling {self.kappa_scale!r}")
        if not 0 <= self.kappa_floor < 1:
            raise ValueError("penalty floor must be in [0, 1)")
        if not self.align_grid_step > 0:
            raise ValueError("alignment grid step must be positive")
        if not 0 < self.progress_ratio <= 1:
            raise ValueError("progress ratio must be in (0, 1]")

    def eps_inner(self, outer: int) -> float:
        return max(self.eps_inner0 * self.eps_inner_rate**outer, self.eps_inner_min)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def effective_vectors(prob: PddProblem, st: PddState) -> np.ndarray:
    """``beta_u * b_u`` (or the frozen channels), U x N."""
    if prob.fixed_h is not None:
        return prob.fixed_h
    return prob.beta[:, None] * st.b


def pair_diffs(prob: PddProblem, z: np.ndarray) -> np.ndarray:
    i, j = prob.pairs
    return z[:, i] - z[:, j]


def residuals(prob: PddProblem, st: PddState) -> dict:
    hv = effective_vectors(prob, st)
    res = {
        "e_t": st.e - st.e_t,
        "e_h": st.e - st.e_h,
        "e_b": st.e - st.e_b,
        "gamma": st.gamma - hv @ st.q.conj(),
        "alpha": st.alpha - st.alpha_t,
        "alpha_h": st.alpha_h - st.alpha_t * st.c_t,
        "c": np.asarray(st.c - st.c_t),
        "eta_t": np.asarray(st.eta_t - st.eta_h),
        "eta_b": np.asarray(st.eta_b - st.eta_h * st.eta_t),
        "q": st.q - st.q_t,
        "sum_t": np.asarray(st.eta_h - st.e_t @ prob.s),
        "sum_h": np.asarray(st.eta_t - st.e_h @ prob.s),
    }
    if prob.positions_free:
        res["b"] = prob.response(st.x, st.y) - st.b
        res["xd"] = st.xd - pair_diffs(prob, st.x)
        res["yd"] = st.yd - pair_diffs(prob, st.y)
    return res


def residual_inf_norm(prob: PddProblem, st: PddState) -> float:
    worst = 0.0
    for r in residuals(prob, st).values():
        if np.size(r):
            worst = max(worst, float(np.max(np.abs(r))))
    return worst


def objective_value(prob: PddProblem, st: PddState) -> float:
    u = prob.n_users
    return 4.0 / u**2 * (prob.mass - st.eta_h) ** 2 + prob.nu * st.c / st.eta_b


def augmented_lagrangian(prob: PddProblem, st: PddState, duals: DualState) -> float:
    kappa = duals.kappa
    total = 0.0
    for name, r in residuals(prob, st).items():
        total += float(np.sum(np.abs(r + kappa * duals.lam[name]) ** 2))
    return objective_value(prob, st) + total / (2 * kappa)


def initial_state(prob: PddProblem, layouts: list[AntennaLayout] | None = None) -> PddState:
    """Consistent starting point: everyone selected, principal-eigenvector
    beamformer, array responses matching the given positions."""
    u, n = prob.n_users, prob.n_antennas
    if layouts is None:
        x = np.zeros((u, n))
        y = np.zeros((u, n))
    else:
        x = np.array([l.x for l in layouts])
        y = np.array([l.y for l in layouts])
    b = prob.response(x, y)
    hv = prob.fixed_h if prob.fixed_h is not None else prob.beta[:, None] * b
    cov = hv.T @ hv.conj()
    w, vecs = np.linalg.eigh(cov)
    q = vecs[:, -1].astype(complex)
    gamma = hv @ q.conj()
    alpha = np.abs(gamma) ** 2
    ones = np.ones(u)
    floor = 1e-12
    c = float(np.max(prob.s**2 / np.maximum(alpha, floor)))
    mass = prob.mass
    xd = pair_diffs(prob, x)
    yd = pair_diffs(prob, y)
    return PddState(
        e=ones.copy(), e_t=ones.copy(), e_h=ones.copy(), e_b=ones.copy(),
        alpha=alpha.copy(), alpha_t=alpha.copy(), alpha_h=alpha * c, gamma=gamma,
        b=b, x=x, y=y, xd=xd, yd=yd,
        sx=np.where(xd >= 0, 1.0, -1.0), sy=np.where(yd >= 0, 1.0, -1.0),
        q=q, q_t=q.copy(), c=c, c_t=c,
        eta=prob.nu * c / mass**2, eta_h=mass, eta_t=mass, eta_b=mass**2,
    )
