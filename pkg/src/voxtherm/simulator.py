"""Finite-difference ground-truth generator with voxel activation.

Each timestep first activates the voxels the schedule deposits at that step
(at ``deposition_temperature``) and then runs ``substeps_per_deposition``
explicit conduction/convection updates over the active set. Lateral and top
faces without an active neighbour lose heat by convection; the bottom face of
layer 0 conducts into a substrate held at ``substrate_temperature``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .core import (
    NEVER,
    DepositionSchedule,
    GridSpec,
    LaserParams,
    MaterialProps,
    ThermalHistory,
)
from .errors import ConfigError, ContractError, NumericalError
from .kernels.heat import diffuse_numba, diffuse_numpy

log = logging.getLogger(__name__)

CFL_LIMIT = 1.0 / 6.0


@dataclass(frozen=True)
class SimConfig:
    grid: GridSpec
    material: MaterialProps = field(default_factory=MaterialProps)
    laser: LaserParams = field(default_factory=LaserParams)
    dt: float = 0.1
    substeps_per_deposition: int = 10
    convection: bool = True
    substrate_contact: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if int(self.substeps_per_deposition) < 1:
            raise ConfigError("substeps_per_deposition must be >= 1")
        self.laser.check_against(self.grid)

    @property
    def substep_dt(self) -> float:
        return self.dt / self.substeps_per_deposition

    @property
    def diffusion_number(self) -> float:
        """alpha * dt' / h**2, the explicit-scheme stability number."""
        return self.material.diffusivity * self.substep_dt / self.grid.edge_length**2

    @property
    def convection_number(self) -> float:
        """Per-exposed-face relaxation factor h_conv * dt' / (rho * c_p * h)."""
        if not self.convection:
            return 0.0
        m = self.material
        return m.convective_coefficient * self.substep_dt / (
            m.density * m.specific_heat * self.grid.edge_length
        )

    def max_stable_dt(self) -> float:
        return CFL_LIMIT * self.grid.edge_length**2 / self.material.diffusivity * self.substeps_per_deposition

    def check_stability(self):
        r = self.diffusion_number
        if r > CFL_LIMIT:
            raise ConfigError(
                f"explicit scheme unstable: alpha*dt'/h^2 = {r:.6g} > 1/6; "
                f"need dt <= {self.max_stable_dt():.6g} s with {self.substeps_per_deposition} substeps"
            )


@dataclass(frozen=True)
class SimState:
    current_step: int
    active: np.ndarray
    field: np.ndarray

    @classmethod
    def initial(cls, grid: GridSpec) -> "SimState":
        return cls(-1, np.zeros(grid.shape, dtype=bool), np.full(grid.shape, np.nan))


def diffuse(T, active, config: SimConfig, n_sub=None, pinned=None, use_numba=None):
    """Run explicit substeps on ``T`` (NaN outside ``active``); returns a new array."""
    if pinned is None:
        pinned = np.zeros(T.shape, dtype=bool)
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    kernel = diffuse_numba if use_numba else diffuse_numpy
    return kernel(
        np.ascontiguousarray(T, dtype=np.float64),
        np.ascontiguousarray(active, dtype=np.bool_),
        np.ascontiguousarray(pinned, dtype=np.bool_),
        int(config.substeps_per_deposition if n_sub is None else n_sub),
        float(config.diffusion_number),
        float(config.convection_number),
        float(config.material.ambient_temperature),
        bool(config.substrate_contact),
        float(config.grid.substrate_temperature),
    )


def step(state: SimState, config: SimConfig, schedule: DepositionSchedule) -> SimState:
    """Advance one timestep: activate scheduled voxels, then diffuse."""
    config.check_stability()
    t = state.current_step + 1
    if t > schedule.end_step:
        raise ContractError(f"schedule ends at step {schedule.end_step}; cannot advance to {t}")
    new_voxels = schedule.creation_step == t
    active = state.active | new_voxels
    T = state.field.copy()
    T[new_voxels] = config.laser.deposition_temperature
    T = diffuse(T, active, config)
    if not np.all(np.isfinite(T[active])):
        raise NumericalError(f"non-finite temperature at timestep {t}", timestep=t)
    active.setflags(write=False)
    T.setflags(write=False)
    return SimState(t, active, T)


def run(config: SimConfig, schedule: DepositionSchedule, tail_steps: int = 0) -> ThermalHistory:
    """Simulate the whole schedule (plus ``tail_steps`` cool-down steps)."""
    config.check_stability()
    if schedule.grid != config.grid:
        raise ConfigError("schedule grid differs from simulation grid")
    if tail_steps:
        schedule = schedule.with_tail(tail_steps)
    n_t = schedule.n_timesteps
    temps = np.full((n_t,) + config.grid.shape, np.nan)
    state = SimState.initial(config.grid)
    for t in range(n_t):
        state = step(state, config, schedule)
        temps[t] = state.field
    log.debug("simulated %d timesteps on %s grid", n_t, config.grid.shape)
    creation = schedule.creation_step.copy()
    return ThermalHistory(
        grid=config.grid,
        dt=config.dt,
        creation_step=creation,
        temperatures=temps,
        laser_path=schedule.laser_path.copy(),
        material=config.material,
        laser=config.laser,
    )


def thermal_energy(T, active, config: SimConfig) -> float:
    """Sum of rho * c_p * V * T over active voxels (J, relative to 0 K)."""
    m = config.material
    vol = config.grid.edge_length**3
    return float(m.density * m.specific_heat * vol * np.sum(T[active]))


__all__ = ["SimConfig", "SimState", "step", "run", "diffuse", "thermal_energy", "NEVER", "CFL_LIMIT"]
