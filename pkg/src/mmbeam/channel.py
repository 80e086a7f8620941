"""Clustered narrowband mmWave channel model and ULA steering geometry.

The channel between a transmitter with ``n_t`` antennas and a receiver with
``n_r`` antennas is a sum of rank-one ray contributions

    H = gamma * sum_i c_i * a_r(phi_r_i) a_t(phi_t_i)^H

where ``c_i = gain_i * sqrt(path_loss_i)``. The line-of-sight component is
stored in the same path list with ``gain = sqrt(N) * exp(j theta)`` so that
``gamma * sqrt(N) * sqrt(L) = sqrt(n_r * n_t * L)`` and the whole matrix is
rebuilt by one formula.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "UlaGeometry",
    "PathLossModel",
    "ChannelParams",
    "PathComponent",
    "ChannelRealization",
    "ula_response",
    "steering_matrix",
    "steering_overlap",
    "path_loss_linear",
    "los_probability",
    "generate_channel",
    "reconstruct",
    "sample_strongest_angle",
]

HALF_PI = 0.5 * np.pi


@dataclass(frozen=True)
class UlaGeometry:
    """Uniform linear array with half-wavelength spacing."""

    num_elements: int
    element_spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if self.num_elements < 1:
            raise ValueError("num_elements must be >= 1")
        if self.element_spacing_wavelengths != 0.5:
            raise ValueError("only half-wavelength spacing is supported")

    def response(self, phi: float) -> np.ndarray:
        return ula_response(phi, self.num_elements)


@dataclass(frozen=True)
class PathLossModel:
    intercept_db: float = 69.8
    exponent_los: float = 2.0
    exponent_nlos: float = 3.19
    shadow_sigma_los_db: float = 5.2
    shadow_sigma_nlos_db: float = 8.29


@dataclass(frozen=True)
class ChannelParams:
    n_cl: int = 2
    n_ray_per_cluster: int = 20
    gain_variance: float = 1.0
    angular_spread_deg: float = 5.0
    los_enabled: bool = True
    carrier_hz: float = 73e9
    pathloss_model: PathLossModel = field(default_factory=PathLossModel)
    los_prob_d1_m: float = 20.0
    los_prob_d2_m: float = 39.0

    def __post_init__(self):
        if self.n_cl < 1 or self.n_ray_per_cluster < 1:
            raise ValueError("n_cl and n_ray_per_cluster must be >= 1")
        if self.gain_variance <= 0:
            raise ValueError("gain_variance must be positive")
        if self.angular_spread_deg < 0:
            raise ValueError("angular_spread_deg must be nonnegative")
        if self.los_prob_d1_m <= 0 or self.los_prob_d2_m <= 0:
            raise ValueError("LOS probability distances must be positive")

    @property
    def n_paths(self) -> int:
        return self.n_cl * self.n_ray_per_cluster


@dataclass(frozen=True)
class PathComponent:
    gain: complex
    aod_rad: float
    aoa_rad: float
    path_loss_linear: float
    cluster_index: int
    is_los: bool = False

    @property
    def strength(self) -> float:
        """|gain| * sqrt(path loss), the sorting key of a path."""
        return abs(self.gain) * np.sqrt(self.path_loss_linear)

    @property
    def coefficient(self) -> complex:
        return self.gain * np.sqrt(self.path_loss_linear)


@dataclass
class ChannelRealization:
    """One ``n_r x n_t`` channel draw together with the rays that built it."""

    matrix: np.ndarray
    paths: list[PathComponent]
    gamma: float
    n_cl: int
    n_ray: int
    distance_m: float
    los: bool = False

    @property
    def n_r(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_t(self) -> int:
        return self.matrix.shape[1]

    @property
    def coefficients(self) -> np.ndarray:
        """Lumped per-path coefficients ``gain * sqrt(path_loss)``."""
        return np.array([p.coefficient for p in self.paths], dtype=complex)

    @property
    def aods(self) -> np.ndarray:
        return np.array([p.aod_rad for p in self.paths])

    @property
    def aoas(self) -> np.ndarray:
        return np.array([p.aoa_rad for p in self.paths])

    def steering_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(A_r, A_t)`` whose columns are the ray steering vectors."""
        return steering_matrix(self.aoas, self.n_r), steering_matrix(self.aods, self.n_t)

    def dual(self) -> "ChannelRealization":
        """Conjugate-transposed channel with departure and arrival swapped.

        Used to design beamformers for the reverse link with the same code
        that handles the forward link.
        """
        paths = [
            replace(p, gain=np.conj(p.gain), aod_rad=p.aoa_rad, aoa_rad=p.aod_rad)
            for p in self.paths
        ]
        return ChannelRealization(
            matrix=self.matrix.conj().T.copy(),
            paths=paths,
            gamma=self.gamma,
            n_cl=self.n_cl,
            n_ray=self.n_ray,
            distance_m=self.distance_m,
            los=self.los,
        )


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite angle: {v!r}")


def ula_response(phi: float, n: int) -> np.ndarray:
    """Unit-norm half-wavelength ULA response at angle ``phi`` (radians)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_finite(phi)
    m = np.arange(n)
    return np.exp(-1j * np.pi * m * np.sin(phi)) / np.sqrt(n)


def steering_matrix(phis, n: int) -> np.ndarray:
    """Stack ULA responses for each angle in ``phis`` as columns (n x len)."""
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_finite(phis)
    m = np.arange(n)[:, None]
    return np.exp(-1j * np.pi * m * np.sin(phis)[None, :]) / np.sqrt(n)


def steering_overlap(phi1, phi2, p: int):
    """Inner product ``a(phi1)^H a(phi2)`` of two length-``p`` ULA responses.

    Evaluated through the Dirichlet kernel

        exp(j x (p - 1) / 2) * sin(p x / 2) / (p sin(x / 2)),
        x = pi (sin phi1 - sin phi2).

    Within about 1e-6 of a multiple of 2 pi the series is
    summed directly, and equal sines (or the endfire pair) give exactly 1.
    Broadcasts over array inputs.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    phi1 = np.asarray(phi1, dtype=float)
    phi2 = np.asarray(phi2, dtype=float)
    _check_finite(phi1, phi2)
    delta = np.sin(phi1) - np.sin(phi2)
    x = np.pi * delta
    den = p * np.sin(0.5 * x)
    # near a multiple of 2 pi the quotient loses accuracy; sum the series
    near = np.abs(np.sin(0.5 * x)) < 1e-6
    safe_den = np.where(near, 1.0, den)
    out = np.exp(0.5j * x * (p - 1)) * np.sin(0.5 * p * x) / safe_den
    if np.any(near):
        steps = np.arange(p)
        xs = np.broadcast_to(x, out.shape)[near]
        out = np.array(out, dtype=complex)
        out[near] = np.mean(np.exp(1j * np.mod(xs[:, None], 2 * np.pi) * steps), axis=1)
        out[np.broadcast_to((delta == 0.0) | (np.abs(delta) == 2.0), out.shape)] = 1.0
    if out.ndim == 0:
        return complex(out)
    return out


def path_loss_linear(d_m: float, los: bool, params: ChannelParams, shadow_db: float = 0.0) -> float:
    """Linear-scale attenuation ``10^(-PL_dB/10)`` of a link of length ``d_m``."""
    if not d_m > 0:
        raise ValueError("distance must be positive")
    pl = params.pathloss_model
    exponent = pl.exponent_los if los else pl.exponent_nlos
    pl_db = pl.intercept_db + 10.0 * exponent * np.log10(d_m) + shadow_db
    return float(10.0 ** (-pl_db / 10.0))


def los_probability(d_m: float, params: ChannelParams) -> float:
    if not d_m > 0:
        raise ValueError("distance must be positive")
    d1, d2 = params.los_prob_d1_m, params.los_prob_d2_m
    e = np.exp(-d_m / d2)
    p = min(d1 / d_m, 1.0) * (1.0 - e) + e
    return float(np.clip(p, 0.0, 1.0))


def _fold_visible(phi: np.ndarray) -> np.ndarray:
    # mirror about +-pi/2; sin() and hence the array response are unchanged
    phi = np.where(phi > HALF_PI, np.pi - phi, phi)
    phi = np.where(phi < -HALF_PI, -np.pi - phi, phi)
    return phi


def _ray_angles(rng: np.random.Generator, n_cl: int, n_ray: int, spread_rad: float):
    centers = rng.uniform(-HALF_PI, HALF_PI, size=(n_cl, 1))
    # Laplacian with rms spread s has scale s / sqrt(2)
    offsets = rng.laplace(0.0, spread_rad / np.sqrt(2.0), size=(n_cl, n_ray))
    return _fold_visible(centers + offsets)


def reconstruct(paths, gamma: float, n_r: int, n_t: int) -> np.ndarray:
    """Rebuild the channel matrix from its path list."""
    if not paths:
        return np.zeros((n_r, n_t), dtype=complex)
    coeffs = np.array([p.coefficient for p in paths], dtype=complex)
    a_r = steering_matrix([p.aoa_rad for p in paths], n_r)
    a_t = steering_matrix([p.aod_rad for p in paths], n_t)
    return gamma * (a_r * coeffs) @ a_t.conj().T


def generate_channel(
    params: ChannelParams,
    n_r: int,
    n_t: int,
    distance_m: float,
    rng: np.random.Generator,
) -> ChannelRealization:
    """Draw one clustered channel realization.

    The number and order of random draws does not depend on ``n_r``, ``n_t``
    or on whether the LOS draw succeeds, so one stream yields the same
    geometry for every array size.
    """
    if n_r < 1 or n_t < 1:
        raise ValueError("array sizes must be >= 1")
    if not distance_m > 0:
        raise ValueError("distance must be positive")
    n_cl, n_ray = params.n_cl, params.n_ray_per_cluster
    n = n_cl * n_ray
    pl = params.pathloss_model
    spread = np.deg2rad(params.angular_spread_deg)

    aod = _ray_angles(rng, n_cl, n_ray, spread)
    aoa = _ray_angles(rng, n_cl, n_ray, spread)
    scale = np.sqrt(params.gain_variance / 2.0)
    gains = scale * (rng.standard_normal((n_cl, n_ray)) + 1j * rng.standard_normal((n_cl, n_ray)))
    shadows = rng.normal(0.0, pl.shadow_sigma_nlos_db, size=n_cl)

    los_draw = rng.uniform()
    theta = rng.uniform(0.0, 2.0 * np.pi)
    los_aod, los_aoa = rng.uniform(-HALF_PI, HALF_PI, size=2)
    los_shadow = rng.normal(0.0, pl.shadow_sigma_los_db)

    paths = []
    for i in range(n_cl):
        loss = path_loss_linear(distance_m, False, params, shadows[i])
        for l in range(n_ray):
            paths.append(PathComponent(complex(gains[i, l]), float(aod[i, l]), float(aoa[i, l]), loss, i))

    has_los = bool(params.los_enabled and los_draw < los_probability(distance_m, params))
    if has_los:
        paths.append(
            PathComponent(
                complex(np.sqrt(n) * np.exp(1j * theta)),
                float(los_aod),
                float(los_aoa),
                path_loss_linear(distance_m, True, params, los_shadow),
                -1,
                is_los=True,
            )
        )
    # stable sort keeps generation order among equal strengths
    paths.sort(key=lambda p: -p.strength)

    gamma = float(np.sqrt(n_r * n_t / n))
    return ChannelRealization(
        matrix=reconstruct(paths, gamma, n_r, n_t),
        paths=paths,
        gamma=gamma,
        n_cl=n_cl,
        n_ray=n_ray,
        distance_m=float(distance_m),
        los=has_los,
    )


def sample_strongest_angle(params: ChannelParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw angles from the ray-angle prior of the generator.

    Cluster center plus one Laplacian ray offset, folded into the visible
    range. Used for expectations over the dominant path direction.
    """
    spread = np.deg2rad(params.angular_spread_deg)
    centers = rng.uniform(-HALF_PI, HALF_PI, size=size)
    offsets = rng.laplace(0.0, spread / np.sqrt(2.0), size=size)
    return _fold_visible(centers + offsets)
