"""Seeded synthetic datasets for the experiments and the ``generate`` command."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import structlog

from starm.tensor import Matrix, Tensor3, from_slices, mode3_product
from starm.transforms import make_dct

logger = structlog.get_logger()


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """Slicewise straight-line fits hidden behind a known transform.

    Attributes:
        a: ``(n_points, 2, n3)`` design tensor in the spatial domain.
        b: ``(n_points, 1, n3)`` observations in the spatial domain.
        m_true: Transform under which the noiseless problem is exact.
        slopes: Per-slice slope, equal to the per-slice intercept.
        noise: Spatial-domain noise level.
    """

    a: Tensor3
    b: Tensor3
    m_true: Matrix
    slopes: npt.NDArray[np.float64]
    noise: float = 0.0

    @property
    def n3(self) -> int:
        """Tube length."""
        return int(self.a.shape[2])


def synthetic_regression(
    n3: int, *, n_points: int = 100, noise: float = 0.0, seed: int = 0
) -> RegressionProblem:
    """Build the straight-line regression problem.

    Slice ``i`` (1-based) of the transform-domain design holds rows
    ``[1, z]`` and its observations are ``beta_i + alpha_i z`` with
    ``alpha_i = beta_i = -1 + 2 i / n3``; the abscissae ``z`` are uniform on
    ``[-1, 1]``. Both tensors are mapped to the spatial domain with the DCT
    and perturbed there by ``noise`` times standard normal entries.
    """
    rng = np.random.default_rng(seed)
    z = rng.uniform(-1.0, 1.0, size=(n_points, n3))
    slopes = -1.0 + 2.0 * np.arange(1, n3 + 1) / n3
    a_hat = np.stack([np.ones_like(z), z], axis=1)
    b_hat = (slopes + slopes * z)[:, None, :]
    m_true = np.array(make_dct(n3).matrix)
    a = mode3_product(a_hat, m_true.T)
    b = mode3_product(b_hat, m_true.T)
    if noise > 0:
        a = a + noise * rng.standard_normal(a.shape)
        b = b + noise * rng.standard_normal(b.shape)
    return RegressionProblem(a=a, b=b, m_true=m_true, slopes=slopes, noise=noise)


def random_tensor(dims: tuple[int, int, int], *, seed: int = 0) -> Tensor3:
    """Standard normal entries."""
    return np.random.default_rng(seed).standard_normal(dims)


def lowrank_tensor(
    dims: tuple[int, int, int],
    rank: int,
    *,
    noise: float = 0.0,
    seed: int = 0,
    m: npt.ArrayLike | None = None,
) -> Tensor3:
    """Tensor whose transform-domain slices have rank ``rank``.

    Args:
        dims: ``(n1, n2, n3)``.
        rank: Rank of every slice under ``m``.
        noise: Level of additive standard normal noise.
        seed: Generator seed.
        m: Hiding transform, the DCT when omitted.
    """
    n1, n2, n3 = dims
    rng = np.random.default_rng(seed)
    left = rng.standard_normal((n3, n1, rank))
    right = rng.standard_normal((n3, rank, n2))
    mat = np.array(make_dct(n3).matrix) if m is None else np.asarray(m, np.float64)
    a = mode3_product(from_slices(left @ right), mat.T)
    if noise > 0:
        a = a + noise * rng.standard_normal(a.shape)
    return a


# ---------------------------------------------------------------------------
# Wave-equation snapshots
# ---------------------------------------------------------------------------


@dataclass
class WaveSnapshots:
    """Snapshot tensor of the 1-D wave equation over a family of speeds.

    Attributes:
        data: ``(n_space, n_time, n_params)`` tensor; slice ``l`` holds the
            states for speed ``speeds[l]``.
        x: Spatial grid.
        t: Snapshot times.
        speeds: Wave speed per frontal slice.
        substeps: Internal time steps between consecutive snapshots.
        dt: Internal time step per speed.
        cfl: Courant number actually used per speed.
    """

    data: Tensor3
    x: npt.NDArray[np.float64]
    t: npt.NDArray[np.float64]
    speeds: npt.NDArray[np.float64]
    substeps: npt.NDArray[np.int64] = field(repr=False)
    dt: npt.NDArray[np.float64] = field(repr=False)
    cfl: npt.NDArray[np.float64] = field(repr=False)

    def metadata(self) -> dict[str, object]:
        """Generator parameters for the tensor file header."""
        return {
            "generator": "wave",
            "speeds": self.speeds.tolist(),
            "t": self.t.tolist(),
            "dt": self.dt.tolist(),
            "cfl": self.cfl.tolist(),
            "substeps": self.substeps.tolist(),
        }


def wave_initial_state(
    x: npt.NDArray[np.float64],
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Displacement ``atan(cos(pi x / 2))`` and velocity ``2 sin(pi x)``."""
    return np.arctan(np.cos(np.pi * x / 2)), 2.0 * np.sin(np.pi * x)


def _leapfrog(
    u0: npt.NDArray[np.float64],
    v0: npt.NDArray[np.float64],
    courant: float,
    dt: float,
    n_snapshots: int,
    substeps: int,
) -> npt.NDArray[np.float64]:
    """Second-order central differences with both ends clamped to zero."""
    r2 = courant**2
    states = np.empty((u0.size, n_snapshots))
    states[:, 0] = u0

    def laplacian(u: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        lap = np.zeros_like(u)
        lap[1:-1] = u[2:] - 2.0 * u[1:-1] + u[:-2]
        return lap

    prev = u0.copy()
    curr = u0 + dt * v0 + 0.5 * r2 * laplacian(u0)
    curr[0] = curr[-1] = 0.0
    step = 1
    for j in range(1, n_snapshots):
        while step < j * substeps:
            prev, curr = curr, 2.0 * curr - prev + r2 * laplacian(curr)
            curr[0] = curr[-1] = 0.0
            step += 1
        states[:, j] = curr
    return states


def wave_snapshots(
    *,
    n_space: int = 64,
    n_time: int = 31,
    n_params: int = 50,
    speed_min: float = 0.1,
    speed_max: float = 5.0,
    t_final: float = 5.0,
    cfl: float = 0.5,
) -> WaveSnapshots:
    """Solve ``u_tt = c^2 u_xx`` on ``[-1, 1]`` with fixed ends for every speed.

    Speeds are equispaced on ``[speed_min, speed_max]`` and snapshots are
    equispaced on ``[0, t_final]``. The internal step divides the snapshot
    interval so the Courant number ``c dt / dx`` stays at most ``cfl``.
    """
    x = np.linspace(-1.0, 1.0, n_space)
    t = np.linspace(0.0, t_final, n_time)
    dx = float(x[1] - x[0])
    snapshot_dt = float(t[1] - t[0])
    speeds = np.linspace(speed_min, speed_max, n_params)
    u0, v0 = wave_initial_state(x)
    u0[0] = u0[-1] = 0.0
    v0[0] = v0[-1] = 0.0

    data = np.empty((n_space, n_time, n_params))
    substeps = np.empty(n_params, dtype=np.int64)
    dts = np.empty(n_params)
    courants = np.empty(n_params)
    for idx, c in enumerate(speeds):
        n_sub = max(1, math.ceil(c * snapshot_dt / (cfl * dx)))
        dt = snapshot_dt / n_sub
        substeps[idx] = n_sub
        dts[idx] = dt
        courants[idx] = c * dt / dx
        data[:, :, idx] = _leapfrog(u0, v0, courants[idx], dt, n_time, n_sub)

    logger.info(
        "wave_snapshots_generated",
        shape=data.shape,
        max_substeps=int(substeps.max()),
        max_cfl=float(courants.max()),
    )
    return WaveSnapshots(
        data=data, x=x, t=t, speeds=speeds, substeps=substeps, dt=dts, cfl=courants
    )
