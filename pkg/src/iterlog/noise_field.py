"""Space-time white noise on U x [0, T], discretized on (time step, U-cell).

One NoiseGrid drives every spatial node of a solve: the spatial coupling of
the model comes entirely from evaluating ``G(a, y, u(y))`` against the same
cells. Entries are N(0, da*dt) drawn from a Philox stream keyed by
``(seed, stream_key)``, so any replica can be regenerated on its own.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .grid import GridSpec, UDomainSpec
from .kernels import KernelSpec

__all__ = ["UDomainSpec", "NoiseGrid", "sample_noise", "zero_noise", "noise_increment",
           "dump_noise", "load_noise", "generator_for"]

_MAGIC = b"ITLNOISE"


def generator_for(seed: int, stream_key) -> np.random.Generator:
    """Counter-based Philox generator keyed by the seed and a tuple of ints."""
    key = tuple(int(k) for k in np.atleast_1d(stream_key))
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class NoiseGrid:
    xi: np.ndarray
    da: float
    dt: float
    seed: int = 0
    stream_key: tuple = field(default=(0, 0))

    @property
    def n_t(self) -> int:
        return self.xi.shape[0]

    @property
    def n_a(self) -> int:
        return self.xi.shape[1]

    def is_zero(self) -> bool:
        return not np.any(self.xi)


def sample_noise(grid: GridSpec, udom: UDomainSpec, seed: int, stream_key=(0, 0)) -> NoiseGrid:
    if grid.n_t < 1 or udom.n_a < 1:
        raise ShapeError("noise grid needs at least one time step and one U-cell")
    rng = generator_for(seed, stream_key)
    scale = np.sqrt(udom.da * grid.dt)
    xi = scale * rng.standard_normal((grid.n_t, udom.n_a))
    xi.setflags(write=False)
    return NoiseGrid(xi, udom.da, grid.dt, int(seed), tuple(int(k) for k in stream_key))


def zero_noise(grid: GridSpec, udom: UDomainSpec) -> NoiseGrid:
    xi = np.zeros((grid.n_t, udom.n_a))
    xi.setflags(write=False)
    return NoiseGrid(xi, udom.da, grid.dt, 0, (0, 0))


def noise_increment(noise: NoiseGrid, i: int, kernel: KernelSpec, y, u_at_y,
                    udom: UDomainSpec) -> float | np.ndarray:
    """``sum_k G(a_k, y, u) xi[i, k]``: the U-integral of the noise over step i."""
    if not 0 <= i < noise.n_t:
        raise IndexError(f"time index {i} outside [0, {noise.n_t})")
    if noise.n_a != udom.n_a:
        raise ShapeError("noise and U-domain disagree on n_a")
    u = np.atleast_1d(np.asarray(u_at_y, dtype=float))
    out = kernel.project(y, u, np.broadcast_to(noise.xi[i], u.shape[:-1] + (udom.n_a,)), udom)
    return float(out[0]) if np.ndim(u_at_y) == 0 else out


def dump_noise(noise: NoiseGrid, path) -> None:
    """Binary dump: magic, dims, seed, key, da, dt, then float64 row-major."""
    key = tuple(noise.stream_key)
    header = struct.pack("<8sQQqI", _MAGIC, noise.n_t, noise.n_a, noise.seed, len(key))
    header += struct.pack(f"<{len(key)}q", *key) + struct.pack("<dd", noise.da, noise.dt)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(noise.xi, dtype="<f8").tobytes())


def load_noise(path) -> NoiseGrid:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, n_t, n_a, seed, nkey = struct.unpack_from("<8sQQqI", data, 0)
    if magic != _MAGIC:
        raise ShapeError(f"{path}: not a noise dump")
    off = struct.calcsize("<8sQQqI")
    key = struct.unpack_from(f"<{nkey}q", data, off)
    off += 8 * nkey
    da, dt = struct.unpack_from("<dd", data, off)
    off += 16
    xi = np.frombuffer(data, dtype="<f8", count=n_t * n_a, offset=off).reshape(n_t, n_a).copy()
    xi.setflags(write=False)
    return NoiseGrid(xi, da, dt, seed, tuple(key))
