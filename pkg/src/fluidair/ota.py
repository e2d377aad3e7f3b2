"""Analog over-the-air gradient aggregation.

Each selected user normalizes its gradient, scales it by a complex transmit
weight and all users transmit simultaneously; the server applies a unit-norm
receive beamformer, rescales by ``eta = 1 / max_u |q^H h_u|`` and undoes the
normalization with the digitally signalled factors.

Transmit weights equalize the effective received amplitudes to the bottleneck
user and split the power budget evenly across the ``K`` transmitters, so the
recovered sum is unbiased and its error obeys

    E||e||^2 = K * sigma_n^2 * max_u ||g_u||^2 / (P_a * min_u |q^H h_u|^2),

which coincides with the max-gain law when the selected gains are equal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fluidair.errors import (
    DegenerateChannelError,
    EmptySelectionError,
    InvalidArgumentError,
    ZeroGradientError,
)


@dataclass
class TransmitPlan:
    a: np.ndarray  # complex transmit weight per selected user
    v: np.ndarray  # normalizer per selected user
    p_a: float

    def __post_init__(self):
        if np.any(np.abs(self.a) ** 2 > self.p_a + 1e-12):
            raise InvalidArgumentError("transmit weight exceeds the power budget")
        if np.any(self.v <= 0):
            raise InvalidArgumentError("normalizers must be positive")


@dataclass
class AggregateResult:
    """``g_hat_complex`` is the de-normalized combiner output; the model update
    uses its real part. ``e2`` is measured in the complex domain."""

    g_hat_complex: np.ndarray
    target: np.ndarray
    noise_draws: int
    plan: TransmitPlan

    @property
    def g_hat(self) -> np.ndarray:
        return self.g_hat_complex.real

    @property
    def e2(self) -> np.ndarray:
        return self.target - self.g_hat_complex


def grad_normalizer(g, d: int | None = None) -> float:
    g = np.asarray(g, dtype=float)
    d = g.size if d is None else d
    if d < 1 or d != g.size:
        raise InvalidArgumentError("D must equal the gradient length")
    norm = float(np.linalg.norm(g))
    if norm == 0.0:
        raise ZeroGradientError("zero gradient has no normalizer")
    return norm / np.sqrt(d)


def precode_symbols(g, a: complex, v: float) -> np.ndarray:
    if not v > 0:
        raise InvalidArgumentError(f"normalizer must be positive, got {v}")
    return a * np.asarray(g, dtype=float) / v


def receive_scaling_eta(q, channels) -> float:
    if len(channels) == 0:
        raise EmptySelectionError("no selected users")
    amps = np.array([abs(np.vdot(q, h)) for h in channels])
    if np.all(amps == 0):
        raise DegenerateChannelError("all effective gains are zero")
    return float(1.0 / amps.max())


def theoretical_mse(k: int, sigma_n2: float, g_norm2: float, p_a: float, max_gain: float) -> float:
    if max_gain <= 0:
        raise DegenerateChannelError("gain must be positive")
    if p_a <= 0 or k < 1:
        raise InvalidArgumentError("need P_a > 0 and K >= 1")
    return k * sigma_n2 * g_norm2 / (p_a * max_gain)


def _rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def transmit_plan(q, channels, gradients, p_a: float) -> tuple[TransmitPlan, np.ndarray]:
    """Per-user weights and the combiner response ``q^H h_u`` they see."""
    resp = np.array([np.vdot(q, h) for h in channels])
    amps = np.abs(resp)
    if np.any(amps == 0):
        raise DegenerateChannelError("a selected user has zero effective gain")
    v = np.array([grad_normalizer(g) for g in gradients])
    k = len(channels)
    a = np.sqrt(p_a / k) * (v / v.max()) * (amps.min() / amps) * np.exp(-1j * np.angle(resp))
    return TransmitPlan(a, v, p_a), resp


def receive_and_combine(channels, selection, q, gradients, sigma_n2: float, p_a: float = 1.0,
                        rng=None) -> AggregateResult:
    """Simulate one aggregation of ``sum_u g_u`` over the selected users.

    ``channels`` and ``gradients`` are indexed by user; ``selection`` is a
    0/1 vector of the same length.
    """
    idx = np.flatnonzero(np.asarray(selection) > 0.5)
    if idx.size == 0:
        raise EmptySelectionError("no selected users")
    q = np.asarray(q, dtype=complex)
    if abs(np.linalg.norm(q) - 1.0) > 1e-9:
        raise InvalidArgumentError("beamformer must have unit norm")
    hs = [np.asarray(channels[u]) for u in idx]
    gs = np.array([np.asarray(gradients[u], dtype=float) for u in idx])
    plan, resp = transmit_plan(q, hs, gs, p_a)
    eta = receive_scaling_eta(q, hs)
    k, d = gs.shape
    n = hs[0].size

    f = plan.a[:, None] * gs / plan.v[:, None]  # K x D symbols
    y = np.array(hs).T @ f  # N x D, column n is the received vector
    if sigma_n2 > 0:
        rng = _rng(rng)
        s = np.sqrt(sigma_n2 / 2) * (rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d)))
        y = y + s
    z = eta * (q.conj() @ y)

    amps = np.abs(resp)
    scale = plan.v.max() * np.sqrt(k) / (np.sqrt(p_a) * amps.min() * eta)
    return AggregateResult(z * scale, gs.sum(axis=0), d if sigma_n2 > 0 else 0, plan)
