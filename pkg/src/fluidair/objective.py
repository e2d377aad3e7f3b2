"""Per-round convergence surrogate and the loss upper bound built from it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fluidair.errors import DegenerateChannelError, EmptySelectionError, InvalidArgumentError


@dataclass
class SelectionVector:
    e: np.ndarray
    s: np.ndarray  # samples per user
    binary: bool = True

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        if self.e.shape != self.s.shape:
            raise InvalidArgumentError("selection and sample counts differ in length")
        if np.any(self.e < 0) or np.any(self.e > 1):
            raise InvalidArgumentError("selection entries must lie in [0, 1]")
        if self.binary and not np.all(np.isin(self.e, (0.0, 1.0))):
            raise InvalidArgumentError("binary selection has fractional entries")

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.e > 0.5)

    @property
    def count(self) -> int:
        return int(np.sum(self.e > 0.5))

    @property
    def mass(self) -> float:
        return float(self.e @ self.s)


@dataclass(frozen=True)
class BoundParams:
    mu: float = 1.0
    L: float = 10.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    lr: float = 0.05
    # Multiplier on r inside the contraction factor; None means 2 * alpha2.
    r_factor: float | None = None

    def __post_init__(self):
        if self.L <= 0 or self.mu < 0 or self.mu > self.L:
            raise InvalidArgumentError("need 0 <= mu <= L and L > 0")
        if self.alpha2 < 1 or self.alpha1 < 0:
            raise InvalidArgumentError("need alpha1 >= 0 and alpha2 >= 1")

    @property
    def factor(self) -> float:
        return 2 * self.alpha2 if self.r_factor is None else self.r_factor


def penalty_terms(e, s, gains, sigma_n2: float, p_a: float) -> tuple[float, float]:
    """(excluded-data term, noise term) of the surrogate, from raw gains."""
    e = np.asarray(e, dtype=float)
    s = np.asarray(s, dtype=float)
    gains = np.asarray(gains, dtype=float)
    u = e.size
    mass = float(e @ s)
    if mass <= 0:
        raise EmptySelectionError("no samples are selected")
    active = e > 0
    if np.any(gains[active] <= 0):
        raise DegenerateChannelError("a selected user has zero effective gain")
    data = 4.0 / u**2 * float((1 - e) @ s) ** 2
    worst = float(np.max(e[active] * s[active] ** 2 / gains[active]))
    return data, sigma_n2 / (p_a * mass**2) * worst


def comm_penalty(sel: SelectionVector, q, channels, sigma_n2: float, p_a: float) -> float:
    """Surrogate r(q, e); ``channels`` holds one complex vector per user."""
    q = np.asarray(q)
    gains = np.array([abs(np.vdot(q, h)) ** 2 for h in channels])
    data, noise = penalty_terms(sel.e, sel.s, gains, sigma_n2, p_a)
    return data + noise


def contraction_factor(params: BoundParams, r: float) -> float:
    if r < 0:
        raise InvalidArgumentError("penalty must be non-negative")
    return 1.0 - params.mu / params.L * (1.0 - params.factor * r)


def bound_after_T(params: BoundParams, r_list, initial_gap: float) -> float:
    """Closed-form T-round bound: product of contractions on the initial gap
    plus the discounted per-round penalties."""
    r = np.asarray(r_list, dtype=float)
    if r.size == 0:
        raise InvalidArgumentError("need at least one round")
    if initial_gap < 0:
        raise InvalidArgumentError("initial gap must be non-negative")
    phi = np.array([contraction_factor(params, x) for x in r])
    t = r.size
    total = float(np.prod(phi)) * initial_gap
    acc = 0.0
    for k in range(t - 1):
        acc += float(np.prod(phi[k + 1:])) * r[k]
    acc += r[-1]
    return total + params.alpha1 / params.L * acc


def noisy_gap_recursion(params: BoundParams, r_list, sigma2: float, initial_gap: float) -> float:
    """Iterate gap <- phi_t * gap + psi_t for gradient noise variance ``sigma2``."""
    if params.lr <= 0:
        raise InvalidArgumentError("learning rate must be positive")
    gap = float(initial_gap)
    for r in r_list:
        phi = contraction_factor(params, r)
        psi = params.L * params.lr**2 / 2 * (sigma2 + r)
        gap = phi * gap + psi
    return gap
