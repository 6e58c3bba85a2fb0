"""Spherical-harmonic latent texture: basis, evaluation, weighted fits.

Each texel stores one coefficient vector per channel. The basis is scaled
so the degree-0 entry is exactly 1 (an order-0 texture stores plain latent
values); the three degree-1 entries are the direction's y, z, x components
times K1 = sqrt(3), in (l=1, m=-1), (1, 0), (1, 1) order.

Angles (theta, phi): theta is the polar angle from +Y, phi = atan2(z, x),
so a unit direction is (sin t cos p, cos t, sin t sin p).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import OutOfRangeError, UnsupportedOrderError

K1 = math.sqrt(3.0)

SUPPORTED_ORDERS = (0, 1)


def _check_order(order: int) -> None:
    if order not in SUPPORTED_ORDERS:
        raise UnsupportedOrderError(f"order {order} not in {SUPPORTED_ORDERS}")


def num_coeffs(order: int) -> int:
    return (order + 1) ** 2


def angles_to_direction(theta, phi) -> np.ndarray:
    """(theta, phi) -> unit xyz, broadcasting over array inputs."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    st = np.sin(theta)
    return np.stack(
        [st * np.cos(phi), np.cos(theta), st * np.sin(phi)], axis=-1
    )


def direction_to_angles(direction) -> tuple[np.ndarray, np.ndarray]:
    """Unit xyz -> (theta, phi)."""
    d = np.asarray(direction, dtype=np.float64)
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    phi = np.arctan2(d[..., 2], d[..., 0])
    return theta, phi


def sh_basis_xyz(direction, order: int) -> np.ndarray:
    """Basis values for unit direction(s), shape (..., (order+1)^2)."""
    _check_order(order)
    d = np.asarray(direction, dtype=np.float64)
    ones = np.ones(d.shape[:-1], dtype=np.float64)
    if order == 0:
        return ones[..., None]
    return np.stack(
        [ones, K1 * d[..., 1], K1 * d[..., 2], K1 * d[..., 0]], axis=-1
    )


def sh_basis(theta, phi, order: int) -> np.ndarray:
    """Basis values at (theta, phi); see sh_basis_xyz."""
    return sh_basis_xyz(angles_to_direction(theta, phi), order)


@dataclass
class ShTexture:
    """T x T grid of per-channel coefficient vectors.

    coeffs has shape (size, size, channels, (order+1)^2) and is indexed
    [tv, tu] with tv = floor(v * size), tu = floor(u * size).
    """

    order: int
    size: int
    channels: int
    coeffs: np.ndarray

    @classmethod
    def zeros(cls, order: int, size: int, channels: int = 4) -> "ShTexture":
        _check_order(order)
        coeffs = np.zeros((size, size, channels, num_coeffs(order)), dtype=np.float64)
        return cls(order=order, size=size, channels=channels, coeffs=coeffs)

    def copy(self) -> "ShTexture":
        return ShTexture(self.order, self.size, self.channels, self.coeffs.copy())

    def max_degree1_abs(self) -> float:
        """Largest |coefficient| among degree-1 entries (0.0 for order 0)."""
        if self.order == 0:
            return 0.0
        return float(np.abs(self.coeffs[..., 1:]).max())


def evaluate(texture: ShTexture, texel: tuple[int, int], direction) -> np.ndarray:
    """Radiance-style evaluation of one texel at a direction: C-vector."""
    tu, tv = texel
    if not (0 <= tu < texture.size and 0 <= tv < texture.size):
        raise OutOfRangeError(f"texel {texel} outside {texture.size}x{texture.size}")
    basis = sh_basis_xyz(direction, texture.order)
    return texture.coeffs[tv, tu] @ basis


def evaluate_texels(texture: ShTexture, tu: np.ndarray, tv: np.ndarray, direction) -> np.ndarray:
    """Evaluate many texels at one shared direction -> (n, channels)."""
    basis = sh_basis_xyz(direction, texture.order)
    return texture.coeffs[tv, tu] @ basis


class TexelSamples:
    """Per-texel observations: (direction, value, weight) triples.

    Stored as flat arrays keyed by texel index so fits can scatter-add
    normal-equation blocks; weights must be >= 0 and directions unit.
    """

    def __init__(self, size: int, channels: int):
        self.size = size
        self.channels = channels
        self._texel_flat: list[np.ndarray] = []
        self._dirs: list[np.ndarray] = []
        self._values: list[np.ndarray] = []
        self._weights: list[np.ndarray] = []

    def add(self, tu, tv, directions, values, weights) -> None:
        """Append a batch of samples; directions broadcast to (n, 3)."""
        tu = np.atleast_1d(np.asarray(tu, dtype=np.int64))
        tv = np.atleast_1d(np.asarray(tv, dtype=np.int64))
        n = len(tu)
        directions = np.broadcast_to(
            np.asarray(directions, dtype=np.float64), (n, 3)
        )
        values = np.asarray(values, dtype=np.float64).reshape(n, self.channels)
        weights = np.broadcast_to(np.asarray(weights, dtype=np.float64), (n,))
        self._texel_flat.append(tv * self.size + tu)
        self._dirs.append(directions)
        self._values.append(values)
        self._weights.append(np.asarray(weights))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        if not self._texel_flat:
            z = np.zeros(0)
            return z.astype(np.int64), z.reshape(0, 3), z.reshape(0, self.channels), z
        return (
            np.concatenate(self._texel_flat),
            np.concatenate(self._dirs),
            np.concatenate(self._values),
            np.concatenate(self._weights),
        )


def _normal_equations(
    samples: TexelSamples, order: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scatter-accumulate A = sum w b b^T and r = sum w b v per texel."""
    nb = num_coeffs(order)
    t2 = samples.size * samples.size
    flat, dirs, values, weights = samples.arrays()
    a = np.zeros((t2, nb, nb), dtype=np.float64)
    r = np.zeros((t2, nb, samples.channels), dtype=np.float64)
    wsum = np.zeros(t2, dtype=np.float64)
    if len(flat):
        basis = sh_basis_xyz(dirs, order)
        wb = weights[:, None] * basis
        np.add.at(a, flat, wb[:, :, None] * basis[:, None, :])
        np.add.at(r, flat, wb[:, :, None] * values[:, None, :])
        np.add.at(wsum, flat, weights)
    return a, r, wsum


def fit_weighted(
    samples: TexelSamples,
    order: int,
    ridge: float = 1e-4,
    prior: ShTexture | None = None,
) -> ShTexture:
    """Per-texel, per-channel ridge-regularized weighted least squares.

    Solves argmin_c sum_i w_i (basis(d_i) . c - v_i)^2 + ridge |c|^2 via
    closed-form normal equations (4x4 at most). Texels with zero total
    weight keep the prior's coefficients, or zeros without a prior.
    """
    _check_order(order)
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    nb = num_coeffs(order)
    a, r, wsum = _normal_equations(samples, order)
    covered = wsum > 0.0

    out = ShTexture.zeros(order, samples.size, samples.channels)
    if prior is not None:
        if prior.size != samples.size or prior.channels != samples.channels:
            raise ValueError("prior texture shape mismatch")
        shared = min(num_coeffs(prior.order), nb)
        out.coeffs[..., :shared] = prior.coeffs[..., :shared]

    if covered.any():
        a_cov = a[covered] + ridge * np.eye(nb)
        solved = np.linalg.solve(a_cov, r[covered])  # (n, nb, C)
        flat_coeffs = out.coeffs.reshape(-1, samples.channels, nb)
        flat_coeffs[covered] = np.swapaxes(solved, -1, -2)
    return out


def blended_fit(
    samples: TexelSamples,
    order: int,
    alpha: float,
    ridge: float = 1e-4,
    prior: ShTexture | None = None,
) -> ShTexture:
    """Coefficient-wise blend of an order-N fit with an order-0 fit.

    result = (1 - alpha) * fit(order) + alpha * embed(fit(order 0)), where
    the order-0 fit occupies the degree-0 slot and degree >= 1 entries are
    zero. Uncovered texels copy the prior wholesale (no blend).
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must be in [0, 1]")
    _check_order(order)
    full = fit_weighted(samples, order, ridge, prior)
    if order == 0:
        return full
    base = fit_weighted(samples, 0, ridge)
    out = ShTexture.zeros(order, samples.size, samples.channels)
    out.coeffs[...] = (1.0 - alpha) * full.coeffs
    out.coeffs[..., 0] += alpha * base.coeffs[..., 0]

    _, _, wsum = _normal_equations(samples, 0)
    uncovered = ~(wsum > 0.0).reshape(samples.size, samples.size)
    if prior is not None and uncovered.any():
        shared = min(num_coeffs(prior.order), num_coeffs(order))
        out.coeffs[uncovered] = 0.0
        out.coeffs[uncovered, :, :shared] = prior.coeffs[uncovered, :, :shared]
    return out


def save_coefficient_planes(texture: ShTexture, path: str | Path) -> None:
    """Debug export: little-endian float32 raster with a 16-byte header.

    Header: four uint32 LE fields (width, height, channels, order), then
    coeffs as float32 in (height, width, channels, basis) row-major order.
    """
    path = Path(path)
    header = struct.pack(
        "<IIII", texture.size, texture.size, texture.channels, texture.order
    )
    data = texture.coeffs.astype("<f4").tobytes()
    path.write_bytes(header + data)


def load_coefficient_planes(path: str | Path) -> ShTexture:
    raw = Path(path).read_bytes()
    width, height, channels, order = struct.unpack("<IIII", raw[:16])
    coeffs = np.frombuffer(raw[16:], dtype="<f4").astype(np.float64)
    coeffs = coeffs.reshape(height, width, channels, num_coeffs(order))
    return ShTexture(order=order, size=width, channels=channels, coeffs=coeffs)
