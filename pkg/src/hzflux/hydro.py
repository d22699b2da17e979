"""1D saturated column: quasi-steady Darcy flow coupled to advective-conductive heat.

Depth ``z`` increases downward from the streambed surface (``z = 0``) to the
column base (``z = length_m``). Darcy flux is reported positive upward.

The heat equation is discretised by finite volumes with first-order upwind
advection, central conduction and backward-Euler time stepping, giving an
M-matrix tridiagonal system that is solved directly each step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from hzflux.data import FluxSeries, TemperatureField

logger = logging.getLogger(__name__)

GRAVITY = 9.80665
KELVIN = 273.15
MICROPOISE_TO_PA_S = 1e-7

__all__ = [
    "ColumnConfig",
    "ForcingSeries",
    "ForcingSpec",
    "ColumnState",
    "SimOutput",
    "viscosity",
    "hydraulic_conductivity",
    "solve_heads",
    "solve_flow",
    "step_heat",
    "steady_profile",
    "peclet_number",
    "generate_forcing",
    "initial_state",
    "simulate",
    "read_forcing_csv",
    "write_forcing_csv",
]


@dataclass(frozen=True)
class ColumnConfig:
    length_m: float = 2.0
    cell_size_m: float = 0.01
    porosity: float = 0.3
    permeability_m2: float = 1e-11
    specific_storage_per_m: float = 0.0
    rock_density_kg_m3: float = 2650.0
    rock_heat_capacity_J_kgK: float = 800.0
    water_heat_capacity_J_kgK: float = 4182.0
    bulk_thermal_conductivity_W_mK: float = 1.8
    water_density_kg_m3: float = 1000.0

    def __post_init__(self):
        if not self.length_m > 0:
            raise ValueError("length_m must be positive")
        if not 0 < self.porosity < 1:
            raise ValueError("porosity must lie strictly between 0 and 1")
        if self.specific_storage_per_m < 0:
            raise ValueError("specific_storage_per_m must be non-negative")
        for name in (
            "cell_size_m",
            "permeability_m2",
            "rock_density_kg_m3",
            "rock_heat_capacity_J_kgK",
            "water_heat_capacity_J_kgK",
            "bulk_thermal_conductivity_W_mK",
            "water_density_kg_m3",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        ratio = self.length_m / self.cell_size_m
        if abs(ratio - round(ratio)) > 1e-6 * ratio:
            raise ValueError(
                f"cell_size_m={self.cell_size_m} does not divide length_m={self.length_m}"
            )

    @property
    def n_cells(self) -> int:
        return int(round(self.length_m / self.cell_size_m))

    @property
    def dz(self) -> float:
        return self.length_m / self.n_cells

    @property
    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dz

    @property
    def water_volumetric_heat(self) -> float:
        return self.water_density_kg_m3 * self.water_heat_capacity_J_kgK

    @property
    def bulk_heat_capacity(self) -> float:
        """Volumetric heat capacity of the saturated sediment, J/m3/K."""
        phi = self.porosity
        return (
            phi * self.water_volumetric_heat
            + (1.0 - phi) * self.rock_density_kg_m3 * self.rock_heat_capacity_J_kgK
        )


@dataclass(frozen=True)
class ForcingSeries:
    """Boundary conditions per step: river stage/temperature on top, aquifer below."""

    dt_s: float
    top_head_m: np.ndarray
    top_temp_C: np.ndarray
    bottom_head_m: np.ndarray
    bottom_temp_C: np.ndarray

    def __post_init__(self):
        if not self.dt_s > 0:
            raise ValueError("dt_s must be positive")
        names = ("top_head_m", "top_temp_C", "bottom_head_m", "bottom_temp_C")
        arrays = [np.asarray(getattr(self, n), dtype=float) for n in names]
        n = arrays[0].size
        if any(a.ndim != 1 or a.size != n for a in arrays):
            raise ValueError("forcing series must be 1-D and of equal length")
        if n < 2:
            raise ValueError("forcing needs at least 2 steps")
        for name, a in zip(names, arrays):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
            if name.endswith("temp_C") and (a.min() < -5.0 or a.max() > 60.0):
                raise ValueError(f"{name} outside [-5, 60] C")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self):
        return self.top_head_m.size


@dataclass
class ColumnState:
    temp_C: np.ndarray
    head_m: np.ndarray

    def __post_init__(self):
        self.temp_C = np.asarray(self.temp_C, dtype=float)
        self.head_m = np.asarray(self.head_m, dtype=float)
        if self.temp_C.shape != self.head_m.shape or self.temp_C.ndim != 1:
            raise ValueError("temp_C and head_m must be 1-D vectors of equal length")
        if not (np.all(np.isfinite(self.temp_C)) and np.all(np.isfinite(self.head_m))):
            raise ValueError("column state must be finite")


@dataclass
class SimOutput:
    flux: FluxSeries
    temps: TemperatureField
    cell_depths_m: np.ndarray
    full_profile_snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)


def viscosity(T_K, p_bar=1.0, p_sat_bar=1.0):
    """Water viscosity in micropoise as a function of temperature and pressure.

    ``mu = 241.4 * 10**(247.8 / (T - 140)) * (1 + 1.0467e-6 (p - p_sat)(T - 305))``
    with ``T`` in kelvin and pressures in bar.
    """
    T = np.asarray(T_K, dtype=float)
    if np.any(T <= 140.0):
        raise ValueError("viscosity undefined for T_K <= 140 K: the denominator (T - 140) is singular")
    dp = np.asarray(p_bar, dtype=float) - np.asarray(p_sat_bar, dtype=float)
    if not np.all(np.isfinite(dp)):
        raise ValueError("pressures must be finite")
    mu = 241.4 * 10.0 ** (247.8 / (T - 140.0)) * (1.0 + 1.0467e-6 * dp * (T - 305.0))
    return mu if mu.ndim else float(mu)


def hydraulic_conductivity(config: ColumnConfig, temp_C) -> np.ndarray:
    """K(T) = k rho_w g / mu_w(T) in m/s; the pressure correction is not applied."""
    mu = viscosity(np.asarray(temp_C, dtype=float) + KELVIN) * MICROPOISE_TO_PA_S
    return config.permeability_m2 * config.water_density_kg_m3 * GRAVITY / mu


def _check_conductivity(K: np.ndarray) -> None:
    if not np.all(np.isfinite(K)) or np.any(K <= 0):
        raise FloatingPointError("flow system is singular: non-positive or non-finite conductivity")


def solve_heads(
    config: ColumnConfig,
    state: ColumnState,
    top_head_m: float,
    bottom_head_m: float,
    dt_s: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve for cell heads and upward face fluxes.

    Returns ``(heads, face_flux)`` with ``face_flux`` of length ``n_cells + 1``
    ordered top face first. Without storage (the default) the solve is
    quasi-steady and the flux is identical on every face.
    """
    if not (np.isfinite(top_head_m) and np.isfinite(bottom_head_m)):
        raise ValueError("boundary heads must be finite")
    K = hydraulic_conductivity(config, state.temp_C)
    _check_conductivity(K)
    dz = config.dz
    n = K.size
    # resistance of each face: half-cell on each side
    half = 0.5 * dz / K
    face_res = np.empty(n + 1)
    face_res[0] = half[0]
    face_res[1:-1] = half[:-1] + half[1:]
    face_res[-1] = half[-1]

    storage = config.specific_storage_per_m
    if storage == 0.0 or dt_s is None:
        q = (bottom_head_m - top_head_m) / face_res.sum()
        heads = top_head_m + q * np.cumsum(face_res[:-1])
        return heads, np.full(n + 1, q)

    # transient: Ss dz (h' - h)/dt = q_up[i+1] - q_up[i]
    cond = 1.0 / face_res
    cap = storage * dz / dt_s
    ab = np.zeros((3, n))
    ab[1] = cap + cond[:-1] + cond[1:]
    ab[0, 1:] = -cond[1:-1]
    ab[2, :-1] = -cond[1:-1]
    rhs = cap * state.head_m
    rhs[0] += cond[0] * top_head_m
    rhs[-1] += cond[-1] * bottom_head_m
    heads = solve_banded((1, 1), ab, rhs)
    padded = np.r_[top_head_m, heads, bottom_head_m]
    return heads, np.diff(padded) * cond


def solve_flow(config, state, top_head_m, bottom_head_m, dt_s=None) -> np.ndarray:
    """Upward Darcy flux on every face (m/s); element 0 is the streambed surface."""
    return solve_heads(config, state, top_head_m, bottom_head_m, dt_s)[1]


def step_heat(
    config: ColumnConfig,
    temp_C,
    face_flux,
    dt_s: float,
    top_temp_C: float | None = None,
    bottom_temp_C: float | None = None,
    insulated: bool = False,
) -> np.ndarray:
    """Advance cell temperatures one implicit step.

    ``face_flux`` is the upward Darcy flux on the ``n_cells + 1`` faces. With
    ``insulated=True`` both end faces carry no heat (a test mode); otherwise
    ``top_temp_C`` and ``bottom_temp_C`` are imposed on the end faces.
    """
    T = np.asarray(temp_C, dtype=float)
    q_up = np.asarray(face_flux, dtype=float)
    n = T.size
    if q_up.size != n + 1:
        raise ValueError(f"expected {n + 1} face fluxes, got {q_up.size}")
    if not dt_s > 0:
        raise ValueError("dt_s must be positive")
    if not (np.all(np.isfinite(T)) and np.all(np.isfinite(q_up))):
        raise FloatingPointError("non-finite temperature or flux passed to step_heat")
    if not insulated:
        if top_temp_C is None or bottom_temp_C is None:
            raise ValueError("Dirichlet mode needs top_temp_C and bottom_temp_C")
        if not (np.isfinite(top_temp_C) and np.isfinite(bottom_temp_C)):
            raise FloatingPointError("non-finite boundary temperature")

    dz = config.dz
    a = config.water_volumetric_heat
    kappa = config.bulk_thermal_conductivity_W_mK
    q_down = -q_up
    p = np.maximum(q_down, 0.0)
    m = np.minimum(q_down, 0.0)
    g = np.full(n + 1, kappa / dz)
    g[0] = g[-1] = 2.0 * kappa / dz
    if insulated:
        p = p.copy()
        m = m.copy()
        p[[0, -1]] = m[[0, -1]] = g[[0, -1]] = 0.0

    # downward heat flux on face j: F_j = (a p_j + g_j) T_{j-1} + (a m_j - g_j) T_j
    cap = config.bulk_heat_capacity * dz / dt_s
    lower = a * p + g
    upper = a * m - g
    ab = np.zeros((3, n))
    ab[1] = cap - upper[:-1] + lower[1:]
    ab[0, 1:] = upper[1:-1]
    ab[2, :-1] = -lower[1:-1]
    rhs = cap * T
    if not insulated:
        rhs[0] += lower[0] * top_temp_C
        rhs[-1] -= upper[-1] * bottom_temp_C
    return solve_banded((1, 1), ab, rhs)


def peclet_number(config: ColumnConfig, flux_up: float) -> float:
    """Thermal Peclet number of the whole column, positive for downward flow."""
    return -config.water_volumetric_heat * flux_up * config.length_m / config.bulk_thermal_conductivity_W_mK


def steady_profile(Pe, T_top, T_bottom, z_over_L):
    """Steady advection-conduction profile between two fixed end temperatures.

    ``T_top + (T_bottom - T_top) * expm1(Pe z/L) / expm1(Pe)``, evaluated in
    an overflow-safe form and falling back to the linear profile as ``Pe -> 0``.
    """
    z = np.asarray(z_over_L, dtype=float)
    if np.any((z < 0) | (z > 1)):
        raise ValueError("z_over_L must lie in [0, 1]")
    Pe = float(Pe)
    if abs(Pe) < 1e-12:
        shape = z
    elif Pe > 0:
        # multiply through by exp(-Pe) to keep both terms bounded
        shape = np.exp(Pe * (z - 1.0)) * np.expm1(-Pe * z) / np.expm1(-Pe)
    else:
        shape = np.expm1(Pe * z) / np.expm1(Pe)
    out = T_top + (T_bottom - T_top) * shape
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class ForcingSpec:
    """Parameters of the synthetic river/aquifer boundary generator.

    River stage is a seasonal cycle plus a sub-daily peaking cycle plus random
    smooth events. The aquifer head at the column base follows a slow
    exponential moving average of the stage, so rapid stage rises push river
    water down into the bed and falls let groundwater discharge upward.
    """

    dt_s: float = 300.0
    seed: int = 0
    stage_mean_m: float = 1.0
    stage_seasonal_amp_m: float = 1.0
    stage_diurnal_amp_m: float = 0.25
    stage_semidiurnal_amp_m: float = 0.1
    event_rate_per_day: float = 0.6
    event_amp_m: float = 0.5
    event_duration_h: float = 8.0
    aquifer_response_h: float = 18.0
    head_offset_m: float = 0.0
    temp_mean_C: float = 12.0
    temp_seasonal_amp_C: float = 7.0
    temp_diurnal_amp_C: float = 2.0
    temp_noise_C: float = 0.5
    bottom_temp_mean_C: float = 13.0
    bottom_temp_seasonal_amp_C: float = 2.0
    bottom_temp_lag_days: float = 60.0
    start_day: float = 120.0


def _ema(x: np.ndarray, alpha: float) -> np.ndarray:
    from scipy.signal import lfilter

    y, _ = lfilter([alpha], [1.0, alpha - 1.0], x, zi=[x[0] * (1.0 - alpha)])
    return y


def generate_forcing(spec: ForcingSpec, n_steps: int) -> ForcingSeries:
    if n_steps < 2:
        raise ValueError("n_steps must be at least 2")
    rng = np.random.default_rng(spec.seed)
    dt = spec.dt_s
    t_days = spec.start_day + np.arange(n_steps) * dt / 86400.0
    year = 2 * np.pi * t_days / 365.25
    day = 2 * np.pi * t_days

    # diurnal peaking with a slowly drifting phase keeps the cycle from being
    # perfectly periodic
    phase_drift = np.cumsum(rng.normal(0.0, 0.02, n_steps)) * np.sqrt(dt / 86400.0)
    stage = (
        spec.stage_mean_m
        + spec.stage_seasonal_amp_m * np.sin(year)
        + spec.stage_diurnal_amp_m * np.sin(day + phase_drift)
        + spec.stage_semidiurnal_amp_m * np.sin(2 * day + 0.7 + 1.3 * phase_drift)
    )
    if spec.event_rate_per_day > 0 and spec.event_amp_m != 0:
        n_days = n_steps * dt / 86400.0
        n_events = rng.poisson(spec.event_rate_per_day * n_days)
        centers = rng.uniform(t_days[0], t_days[-1], n_events)
        amps = spec.event_amp_m * rng.uniform(-1.0, 1.0, n_events)
        widths = spec.event_duration_h / 24.0 * rng.uniform(0.5, 1.5, n_events)
        for c, a, w in zip(centers, amps, widths):
            lo, hi = np.searchsorted(t_days, [c - 4 * w, c + 4 * w])
            stage[lo:hi] += a * np.exp(-0.5 * ((t_days[lo:hi] - c) / w) ** 2)

    if spec.aquifer_response_h > 0:
        alpha = 1.0 - np.exp(-dt / (spec.aquifer_response_h * 3600.0))
        bottom_head = _ema(stage, alpha)
    else:
        bottom_head = stage.copy()
    bottom_head = bottom_head + spec.head_offset_m

    wiggle = np.zeros(n_steps)
    if spec.temp_noise_C > 0:
        # weather-driven departures, smoothed over roughly half a day
        raw = rng.normal(0.0, 1.0, n_steps)
        alpha = 1.0 - np.exp(-dt / (12 * 3600.0))
        smooth = _ema(raw, alpha)
        sd = smooth.std()
        if sd > 0:
            wiggle = spec.temp_noise_C * smooth / sd
    top_temp = (
        spec.temp_mean_C
        + spec.temp_seasonal_amp_C * np.sin(year - np.pi / 2)
        + spec.temp_diurnal_amp_C * np.sin(day - np.pi / 2)
        + wiggle
    )
    lag = 2 * np.pi * spec.bottom_temp_lag_days / 365.25
    bottom_temp = spec.bottom_temp_mean_C + spec.bottom_temp_seasonal_amp_C * np.sin(year - np.pi / 2 - lag)
    return ForcingSeries(dt, stage, top_temp, bottom_head, bottom_temp)


def write_forcing_csv(path, forcing: ForcingSeries) -> None:
    t = np.arange(len(forcing)) * forcing.dt_s
    table = np.column_stack(
        [t, forcing.top_head_m, forcing.top_temp_C, forcing.bottom_head_m, forcing.bottom_temp_C]
    )
    np.savetxt(
        Path(path),
        table,
        delimiter=",",
        header="time_s,top_head_m,top_temp_C,bottom_head_m,bottom_temp_C",
        comments="",
        fmt="%.10g",
    )


def read_forcing_csv(path) -> ForcingSeries:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
    if header != "time_s,top_head_m,top_temp_C,bottom_head_m,bottom_temp_C":
        raise ValueError(f"{path}: unexpected forcing header {header!r}")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = table[:, 0]
    dt = float(t[1] - t[0]) if t.size > 1 else 300.0
    return ForcingSeries(dt, table[:, 1], table[:, 2], table[:, 3], table[:, 4])


def initial_state(config: ColumnConfig, forcing: ForcingSeries) -> ColumnState:
    """Steady profile for the first forcing step (flux evaluated at the mean temperature)."""
    z = config.cell_centers
    t_top, t_bot = forcing.top_temp_C[0], forcing.bottom_temp_C[0]
    probe = ColumnState(np.full(z.size, 0.5 * (t_top + t_bot)), np.zeros(z.size))
    heads, q = solve_heads(config, probe, forcing.top_head_m[0], forcing.bottom_head_m[0])
    temp = steady_profile(peclet_number(config, q[0]), t_top, t_bot, z / config.length_m)
    return ColumnState(temp, heads)


def _sampler(config: ColumnConfig, depths: np.ndarray):
    """Linear interpolation weights from (top face, cells, bottom face) to ``depths``."""
    nodes = np.r_[0.0, config.cell_centers, config.length_m]
    idx = np.clip(np.searchsorted(nodes, depths, side="right") - 1, 0, nodes.size - 2)
    w = (depths - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
    return idx, w


def simulate(
    config: ColumnConfig,
    forcing: ForcingSeries,
    sample_depths: Sequence[float] = (0.005, 0.15, 0.255, 1.995),
    snapshot_times: Sequence[int] = (),
    state: ColumnState | None = None,
) -> SimOutput:
    """Run the coupled model over every forcing step.

    Each step solves the flow field with the current temperatures, then
    advances heat with that flux. The recorded flux is the upward flux across
    the streambed surface; temperatures are recorded after the heat step.
    """
    depths = np.asarray(sample_depths, dtype=float)
    if np.any(depths < 0) or np.any(depths > config.length_m):
        raise ValueError(f"sample depths must lie within [0, {config.length_m}] m")
    n_steps = len(forcing)
    snaps = set(int(s) for s in snapshot_times)
    if any(s < 0 or s >= n_steps for s in snaps):
        raise ValueError("snapshot time outside the forcing range")
    state = initial_state(config, forcing) if state is None else state
    if state.temp_C.size != config.n_cells:
        raise ValueError("state does not match the column discretisation")

    idx, w = _sampler(config, depths)
    flux = np.empty(n_steps)
    temps = np.empty((n_steps, depths.size))
    snapshots = []
    T = state.temp_C.copy()
    h = state.head_m.copy()
    for k in range(n_steps):
        top_t, bot_t = forcing.top_temp_C[k], forcing.bottom_temp_C[k]
        h, q = solve_heads(
            config, ColumnState(T, h), forcing.top_head_m[k], forcing.bottom_head_m[k], forcing.dt_s
        )
        T = step_heat(config, T, q, forcing.dt_s, top_t, bot_t)
        flux[k] = q[0]
        nodes = np.r_[top_t, T, bot_t]
        temps[k] = nodes[idx] * (1.0 - w) + nodes[idx + 1] * w
        if k in snaps:
            snapshots.append((k, T.copy()))
    logger.debug("simulated %d steps on %d cells", n_steps, config.n_cells)
    return SimOutput(
        FluxSeries(forcing.dt_s, flux),
        TemperatureField(forcing.dt_s, depths, temps),
        config.cell_centers,
        snapshots,
    )
