"""Fluid-antenna line-of-sight channel model.

Positions are in meters; with the default 0.1 m carrier wavelength every
geometric default below is expressed in multiples of the wavelength.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from fluidair.errors import InvalidArgumentError

DEFAULT_WAVELENGTH = 0.1


@dataclass(frozen=True)
class AntennaLayout:
    """Element coordinates of one fluid-antenna array.

    Feasibility is reported, not enforced: SCA iterates pass through
    infeasible layouts.
    """

    x: np.ndarray
    y: np.ndarray
    region: tuple[float, float, float, float]  # x_min, x_max, y_min, y_max
    v_x: float
    v_y: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.shape != y.shape:
            raise InvalidArgumentError("x and y must have the same length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "region", tuple(float(r) for r in self.region))

    @property
    def n(self) -> int:
        return self.x.size

    def in_region(self, tol: float = 1e-12) -> bool:
        x0, x1, y0, y1 = self.region
        return bool(
            np.all(self.x >= x0 - tol) and np.all(self.x <= x1 + tol)
            and np.all(self.y >= y0 - tol) and np.all(self.y <= y1 + tol)
        )

    @property
    def feasible(self) -> bool:
        return self.in_region() and min_distance_ok(self)

    def moved(self, x, y) -> "AntennaLayout":
        return replace(self, x=np.array(x, dtype=float), y=np.array(y, dtype=float))


@dataclass(frozen=True)
class ChannelParams:
    beta: complex
    theta: float
    phi: float
    wavelength: float = DEFAULT_WAVELENGTH

    def __post_init__(self):
        if not (self.wavelength > 0 and math.isfinite(self.wavelength)):
            raise InvalidArgumentError(f"wavelength must be positive, got {self.wavelength}")

    @property
    def direction(self) -> np.ndarray:
        """Coefficients mapping (x, y) to the path-length term of the phase."""
        return np.array([math.cos(self.theta), math.sin(self.phi)])


@dataclass(frozen=True)
class ChannelRealization:
    """One user's channel.

    In ``los`` mode ``h`` is always derived from ``params`` and ``layout``.
    In ``rayleigh`` mode ``h`` is an i.i.d. draw that ignores the layout.
    """

    params: ChannelParams
    layout: AntennaLayout
    mode: str = "los"
    fading: np.ndarray | None = field(default=None, repr=False)

    @property
    def h(self) -> np.ndarray:
        if self.mode == "rayleigh":
            return self.fading
        return channel_vector(self.params, self.layout)

    def with_layout(self, layout: AntennaLayout) -> "ChannelRealization":
        return replace(self, layout=layout)


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("non-finite input")


def array_response(layout: AntennaLayout, theta: float, phi: float,
                   wavelength: float = DEFAULT_WAVELENGTH) -> np.ndarray:
    _check_finite(layout.x, layout.y, theta, phi, wavelength)
    if wavelength <= 0:
        raise InvalidArgumentError("wavelength must be positive")
    if layout.n < 1:
        raise InvalidArgumentError("layout has no elements")
    rho = layout.x * math.cos(theta) + layout.y * math.sin(phi)
    return np.exp(1j * (2 * math.pi / wavelength) * rho)


def channel_vector(params: ChannelParams, layout: AntennaLayout) -> np.ndarray:
    return params.beta * array_response(layout, params.theta, params.phi, params.wavelength)


def cost_hata_pl_db(distance_m: float) -> float:
    if not distance_m > 0:
        raise InvalidArgumentError(f"distance must be positive, got {distance_m}")
    return 139.1 + 35.22 * math.log10(distance_m / 1000.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def effective_gain(q: np.ndarray, h: np.ndarray) -> float:
    q = np.asarray(q)
    h = np.asarray(h)
    if q.shape != h.shape:
        raise InvalidArgumentError(f"dimension mismatch {q.shape} vs {h.shape}")
    if abs(np.linalg.norm(q) - 1.0) > 1e-9:
        raise InvalidArgumentError("beamformer must have unit norm")
    return float(abs(np.vdot(q, h)) ** 2)


def max_gain_bound(beta: complex, n_antennas: int) -> float:
    if n_antennas < 1:
        raise InvalidArgumentError("need at least one antenna")
    return float(abs(beta) ** 2 * n_antennas)


def min_distance_ok(layout: AntennaLayout, tol: float = 1e-12) -> bool:
    if layout.n < 2:
        return True
    dx = np.abs(layout.x[:, None] - layout.x[None, :])
    dy = np.abs(layout.y[:, None] - layout.y[None, :])
    off = ~np.eye(layout.n, dtype=bool)
    return bool(np.all(dx[off] >= layout.v_x - tol) and np.all(dy[off] >= layout.v_y - tol))


@dataclass(frozen=True)
class ChannelConfig:
    n_antennas: int = 4
    wavelength: float = DEFAULT_WAVELENGTH
    d_min: float = 10.0
    d_max: float = 100.0
    region_size: float = 4.0  # in wavelengths, square region anchored at 0
    spacing: float = 0.5  # minimum separation in wavelengths, both axes
    mode: str = "los"
    link_gain_db: float = 0.0  # extra gain on every channel power

    @property
    def region(self) -> tuple[float, float, float, float]:
        side = self.region_size * self.wavelength
        return (0.0, side, 0.0, side)

    @property
    def v(self) -> float:
        return self.spacing * self.wavelength


def default_layout(cfg: ChannelConfig) -> AntennaLayout:
    """Diagonal placement: every pair must be separated on *both* axes."""
    step = max(cfg.v, cfg.wavelength / 2)
    x0, x1, y0, y1 = cfg.region
    if (cfg.n_antennas - 1) * step > min(x1 - x0, y1 - y0) + 1e-12:
        raise InvalidArgumentError("region too small for the requested spacing")
    offs = np.arange(cfg.n_antennas) * step
    return AntennaLayout(x0 + offs, y0 + offs, cfg.region, cfg.v, cfg.v)


def sample_path_gain(rng: np.random.Generator, distance_m, link_gain_db: float = 0.0,
                     size=None):
    """Zero-mean circular Gaussian gain with E|beta|^2 = gain / PL(d)."""
    pl = np.vectorize(cost_hata_pl_db)(distance_m) if np.ndim(distance_m) else cost_hata_pl_db(distance_m)
    power = 10.0 ** ((link_gain_db - pl) / 10.0)
    scale = np.sqrt(power / 2)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_channels(rng_seed: int, n_users: int,
                    cfg: ChannelConfig = ChannelConfig()) -> list[ChannelRealization]:
    """Static per-user channels; distances uniform in [d_min, d_max]."""
    if n_users < 0:
        raise InvalidArgumentError("user count must be non-negative")
    if cfg.mode not in ("los", "rayleigh"):
        raise InvalidArgumentError(f"unknown channel mode {cfg.mode!r}")
    rng = np.random.default_rng(rng_seed)
    layout = default_layout(cfg)
    out = []
    for _ in range(n_users):
        d = rng.uniform(cfg.d_min, cfg.d_max)
        power = db_to_linear(cfg.link_gain_db - cost_hata_pl_db(d))
        beta = complex(sample_path_gain(rng, d, cfg.link_gain_db))
        theta, phi = rng.uniform(-math.pi / 2, math.pi / 2, size=2)
        params = ChannelParams(beta, float(theta), float(phi), cfg.wavelength)
        fading = None
        if cfg.mode == "rayleigh":
            n = cfg.n_antennas
            fading = np.sqrt(power / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        out.append(ChannelRealization(params, layout, cfg.mode, fading))
    return out


def channel_matrix(channels: list[ChannelRealization]) -> np.ndarray:
    """Stack user channels as rows (U x N_T)."""
    return np.array([c.h for c in channels])
