"""Domain types shared by every stage: grid, material, laser, schedule, history.

Temperatures are Kelvin throughout. A voxel is addressed by zero-based integer
coordinates ``(ix, iy, iz)``; dense per-voxel arrays use shape ``(nx, ny, nz)``
in C order, and a thermal history stores one such frame per timestep with NaN
where a voxel does not exist yet.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, ContractError, FormatError

#: creation step stored for voxels that a (partial) schedule never activates
NEVER = np.iinfo(np.int64).max

HISTORY_HEADER = "timestep,ix,iy,iz,temperature_K"


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    nz: int
    edge_length: float = 5e-4
    substrate_temperature: float = 300.0

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"grid {name} must be >= 1, got {getattr(self, name)}")
        if not self.edge_length > 0:
            raise ConfigError(f"edge_length must be > 0, got {self.edge_length}")
        if not self.substrate_temperature > 0:
            raise ConfigError("substrate_temperature must be > 0 K")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def n_voxels(self) -> int:
        return self.nx * self.ny * self.nz

    def contains(self, ix, iy, iz) -> bool:
        return 0 <= ix < self.nx and 0 <= iy < self.ny and 0 <= iz < self.nz


@dataclass(frozen=True)
class MaterialProps:
    """Defaults approximate Ti-6Al-4V."""

    density: float = 4430.0
    specific_heat: float = 526.0
    conductivity: float = 6.7
    convective_coefficient: float = 50.0
    ambient_temperature: float = 300.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"material {k} must be finite and > 0, got {v}")

    @property
    def diffusivity(self) -> float:
        return self.conductivity / (self.density * self.specific_heat)


@dataclass(frozen=True)
class LaserParams:
    deposition_temperature: float = 1900.0
    voxels_per_step_lateral: int = 2
    turnaround_steps: int = 1
    power_label: float = 400.0
    scan_speed_label: float = 0.01

    def __post_init__(self):
        if int(self.voxels_per_step_lateral) < 1:
            raise ConfigError("voxels_per_step_lateral must be >= 1")
        if int(self.turnaround_steps) < 0:
            raise ConfigError("turnaround_steps must be >= 0")
        if not self.deposition_temperature > 0:
            raise ConfigError("deposition_temperature must be > 0 K")

    def check_against(self, grid: GridSpec):
        if not self.deposition_temperature > grid.substrate_temperature:
            raise ConfigError(
                f"deposition_temperature ({self.deposition_temperature} K) must exceed "
                f"substrate_temperature ({grid.substrate_temperature} K)"
            )


class VoxelIndex(NamedTuple):
    ix: int
    iy: int
    iz: int


@dataclass(frozen=True)
class DepositionStep:
    timestep: int
    activated: tuple[VoxelIndex, ...]

    @property
    def laser_position(self) -> VoxelIndex:
        return self.activated[-1]


@dataclass(frozen=True)
class DepositionSchedule:
    """Ordered activation steps plus an optional cool-down tail.

    ``end_step`` is the final simulated timestep; it is at least the last
    deposition step and larger when a tail is appended.
    """

    grid: GridSpec
    steps: tuple[DepositionStep, ...]
    end_step: int = -2
    creation_step: np.ndarray = field(init=False, repr=False, compare=False)
    laser_path: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        last = self.steps[-1].timestep if self.steps else -1
        end = last if self.end_step == -2 else int(self.end_step)
        if end < last:
            raise ContractError(f"end_step {end} precedes last deposition step {last}")
        object.__setattr__(self, "end_step", end)

        creation = np.full(self.grid.shape, NEVER, dtype=np.int64)
        path = np.zeros((max(end + 1, 0), 3), dtype=np.int64)
        prev_t = -1
        for st in self.steps:
            if st.timestep <= prev_t:
                raise ContractError("schedule timesteps must be strictly increasing")
            if not st.activated:
                raise ContractError(f"step {st.timestep} activates no voxels")
            for v in st.activated:
                if not self.grid.contains(*v):
                    raise ContractError(f"voxel {tuple(v)} outside grid {self.grid.shape}")
                if creation[v] != NEVER:
                    raise ContractError(f"voxel {tuple(v)} activated twice")
                creation[v] = st.timestep
            # laser idles at its last position between and after steps
            path[st.timestep:] = st.laser_position
            prev_t = st.timestep
        creation.setflags(write=False)
        path.setflags(write=False)
        object.__setattr__(self, "creation_step", creation)
        object.__setattr__(self, "laser_path", path)

    @property
    def last_deposition_step(self) -> int:
        return self.steps[-1].timestep if self.steps else -1

    @property
    def n_timesteps(self) -> int:
        return self.end_step + 1

    @property
    def is_complete(self) -> bool:
        return bool(np.all(self.creation_step != NEVER))

    def with_tail(self, extra_steps: int) -> "DepositionSchedule":
        if extra_steps < 0:
            raise ContractError("tail length must be >= 0")
        return DepositionSchedule(self.grid, self.steps, self.end_step + extra_steps)

    def laser_position(self, t: int) -> VoxelIndex:
        return VoxelIndex(*(int(c) for c in self.laser_path[t]))

    def active_mask(self, t: int) -> np.ndarray:
        return self.creation_step <= t

    def active_voxels(self, t: int) -> np.ndarray:
        """(n, 3) indices active at ``t`` in C order."""
        return np.argwhere(self.creation_step <= t)

    def __iter__(self) -> Iterator[DepositionStep]:
        return iter(self.steps)


def build_zigzag_schedule(grid: GridSpec, laser: LaserParams) -> DepositionSchedule:
    """Raster each layer as +x, step +y, -x, step +y, ...; layers stack in +z.

    Every row after the very first begins with ``turnaround_steps`` single-voxel
    steps (the laser reversing or repositioning); the rest of the row goes down
    ``voxels_per_step_lateral`` voxels per step.
    """
    laser.check_against(grid)
    vps = int(laser.voxels_per_step_lateral)
    steps: list[DepositionStep] = []
    t = 0
    first_row = True
    for iz in range(grid.nz):
        for iy in range(grid.ny):
            xs = range(grid.nx) if iy % 2 == 0 else range(grid.nx - 1, -1, -1)
            row = [VoxelIndex(ix, iy, iz) for ix in xs]
            pos = 0
            if not first_row:
                for _ in range(min(laser.turnaround_steps, len(row))):
                    steps.append(DepositionStep(t, (row[pos],)))
                    pos += 1
                    t += 1
            while pos < len(row):
                steps.append(DepositionStep(t, tuple(row[pos:pos + vps])))
                pos += vps
                t += 1
            first_row = False
    return DepositionSchedule(grid, tuple(steps))


def schedule_row_count(schedule: DepositionSchedule) -> int:
    """Number of (voxel, timestep) samples from creation through ``end_step``."""
    c = schedule.creation_step
    created = c[c != NEVER]
    return int(np.sum(schedule.end_step - created + 1))


@dataclass(frozen=True)
class ThermalHistory:
    """Ground-truth temperature record.

    ``temperatures[t]`` is the field after timestep ``t``; entries are NaN for
    voxels whose ``creation_step`` is later than ``t``.
    """

    grid: GridSpec
    dt: float
    creation_step: np.ndarray
    temperatures: np.ndarray
    laser_path: np.ndarray
    material: MaterialProps | None = None
    laser: LaserParams | None = None

    def __post_init__(self):
        for a in (self.creation_step, self.temperatures, self.laser_path):
            a.setflags(write=False)
        if self.temperatures.shape[1:] != self.grid.shape:
            raise ContractError("temperature frames do not match grid shape")

    @property
    def n_timesteps(self) -> int:
        return self.temperatures.shape[0]

    @property
    def final_step(self) -> int:
        return self.n_timesteps - 1

    def frame(self, t: int) -> np.ndarray:
        """Read-only temperature field at timestep ``t`` (NaN = not created)."""
        if not 0 <= t < self.n_timesteps:
            raise ContractError(f"timestep {t} outside history [0, {self.final_step}]")
        return self.temperatures[t]

    def temperature(self, t: int, voxel: Sequence[int]) -> float:
        ix, iy, iz = voxel
        if self.creation_step[ix, iy, iz] > t:
            raise ContractError(f"voxel {tuple(voxel)} is not active at timestep {t}")
        return float(self.frame(t)[ix, iy, iz])

    def row_count(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.temperatures)))

    def schedule(self) -> DepositionSchedule:
        """Rebuild the deposition schedule from creation steps and laser path.

        Voxels activated in the same step are ordered so the recorded laser
        position comes last.
        """
        by_step: dict[int, list[VoxelIndex]] = {}
        for v in np.argwhere(self.creation_step != NEVER):
            by_step.setdefault(int(self.creation_step[tuple(v)]), []).append(VoxelIndex(*map(int, v)))
        steps = []
        for t in sorted(by_step):
            vox = by_step[t]
            lp = VoxelIndex(*map(int, self.laser_path[t]))
            if lp in vox:
                vox.remove(lp)
                vox.append(lp)
            steps.append(DepositionStep(t, tuple(vox)))
        return DepositionSchedule(self.grid, tuple(steps), self.final_step)


# --------------------------------------------------------------------------
# history file format: columnar text + JSON sidecar
# --------------------------------------------------------------------------

def _meta_path(path):
    root, _ = os.path.splitext(os.fspath(path))
    return root + ".meta.json"


def history_rows(history: ThermalHistory) -> np.ndarray:
    """(rows, 5) array ``timestep, ix, iy, iz, T`` grouped by timestep, C order inside."""
    T = history.temperatures
    t, ix, iy, iz = np.nonzero(~np.isnan(T))
    out = np.empty((t.size, 5), dtype=np.float64)
    out[:, 0], out[:, 1], out[:, 2], out[:, 3] = t, ix, iy, iz
    out[:, 4] = T[t, ix, iy, iz]
    return out


def save_history(history: ThermalHistory, path) -> None:
    path = os.fspath(path)
    rows = history_rows(history)
    meta = {
        "format": "voxtherm-history",
        "version": 1,
        "grid": asdict(history.grid),
        "dt": history.dt,
        "n_timesteps": history.n_timesteps,
        "material": asdict(history.material) if history.material else None,
        "laser": asdict(history.laser) if history.laser else None,
        "creation_step": [int(c) if c != NEVER else -1 for c in history.creation_step.ravel()],
        "laser_path": history.laser_path.tolist(),
    }
    try:
        with open(path, "w") as fh:
            fh.write(HISTORY_HEADER + "\n")
            if len(rows):
                np.savetxt(fh, rows, fmt=["%d", "%d", "%d", "%d", "%.17g"], delimiter=",")
        with open(_meta_path(path), "w") as fh:
            json.dump(meta, fh, indent=1)
    except OSError as exc:
        raise FormatError(f"cannot write history to {path}: {exc}") from exc


def load_history(path) -> ThermalHistory:
    path = os.fspath(path)
    try:
        with open(_meta_path(path)) as fh:
            meta = json.load(fh)
        with open(path) as fh:
            header = fh.readline().strip()
            if header != HISTORY_HEADER:
                raise FormatError(f"{path}: unexpected header {header!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=np.float64)
    except OSError as exc:
        raise FormatError(f"cannot read history {path}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise FormatError(f"malformed history {path}: {exc}") from exc
    grid = GridSpec(**meta["grid"])
    creation = np.array(meta["creation_step"], dtype=np.int64).reshape(grid.shape)
    creation[creation < 0] = NEVER
    temps = np.full((meta["n_timesteps"],) + grid.shape, np.nan)
    if data.size:
        idx = data[:, :4].astype(np.int64)
        temps[idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3]] = data[:, 4]
    path_arr = np.array(meta["laser_path"], dtype=np.int64).reshape(-1, 3)
    return ThermalHistory(
        grid=grid,
        dt=float(meta["dt"]),
        creation_step=creation,
        temperatures=temps,
        laser_path=path_arr,
        material=MaterialProps(**meta["material"]) if meta.get("material") else None,
        laser=LaserParams(**meta["laser"]) if meta.get("laser") else None,
    )
