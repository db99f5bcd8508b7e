"""Meta-atom / antenna / user layout and the physical channel stack.

Coordinates are in meters. The surface layers are parallel to the y-z plane
and stacked along +x: the antenna array sits at ``x = d_bs``, layer ``i``
(1-based) at ``x = d_bs + i * d_layer``, users beyond the last layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .config import ScenarioConfig

X_AXIS = np.array([1.0, 0.0, 0.0])
PSD_TOL = 1e-9


@dataclass(frozen=True)
class SimGeometry:
    L: int
    Nx: int
    Ny: int
    delta: float
    t_sim: float
    d_layer: float
    wavelength: float
    atom_positions: List[np.ndarray]  # L arrays of shape (N, 3)
    antenna_positions: np.ndarray  # (M, 3)
    user_positions: np.ndarray  # (K, 3)

    @property
    def N(self) -> int:
        return self.Nx * self.Ny

    @property
    def M(self) -> int:
        return len(self.antenna_positions)

    @property
    def K(self) -> int:
        return len(self.user_positions)

    @property
    def kappa(self) -> float:
        return 2 * np.pi / self.wavelength


@dataclass(frozen=True)
class ChannelSet:
    """All channel matrices of one realization.

    ``q_layers[i]`` maps layer ``i+1`` to layer ``i+2`` (N x N); ``q_first``
    maps the antennas to layer 1 (N x M); ``h_users`` is N x K.
    """

    q_layers: List[np.ndarray]
    q_first: np.ndarray
    h_users: np.ndarray
    covariance: np.ndarray
    path_loss: np.ndarray

    @property
    def L(self) -> int:
        return len(self.q_layers) + 1

    @property
    def N(self) -> int:
        return self.q_first.shape[0]

    @property
    def M(self) -> int:
        return self.q_first.shape[1]

    @property
    def K(self) -> int:
        return self.h_users.shape[1]

    def with_users(self, h_users: np.ndarray) -> "ChannelSet":
        return ChannelSet(self.q_layers, self.q_first, h_users, self.covariance, self.path_loss)

    def with_antennas(self, q_first: np.ndarray) -> "ChannelSet":
        return ChannelSet(self.q_layers, q_first, self.h_users, self.covariance, self.path_loss)

    def to_dict(self) -> dict:
        return {
            "q_layers": [_complex_to_json(q) for q in self.q_layers],
            "q_first": _complex_to_json(self.q_first),
            "h_users": _complex_to_json(self.h_users),
            "covariance": self.covariance.tolist(),
            "path_loss": self.path_loss.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelSet":
        return cls(
            q_layers=[_complex_from_json(q) for q in data["q_layers"]],
            q_first=_complex_from_json(data["q_first"]),
            h_users=_complex_from_json(data["h_users"]),
            covariance=np.asarray(data["covariance"], dtype=float),
            path_loss=np.asarray(data["path_loss"], dtype=float),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ChannelSet":
        return cls.from_dict(json.loads(text))


def _complex_to_json(a: np.ndarray):
    a = np.asarray(a)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _complex_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def _grid(Nx: int, Ny: int, delta: float, x: float) -> np.ndarray:
    # atom n = row * Nx + col; columns run along y, rows along z
    ys = (np.arange(Nx) - (Nx - 1) / 2) * delta
    zs = (np.arange(Ny) - (Ny - 1) / 2) * delta
    zz, yy = np.meshgrid(zs, ys, indexing="ij")
    return np.column_stack([np.full(Nx * Ny, x), yy.ravel(), zz.ravel()])


def build_geometry(config: ScenarioConfig) -> SimGeometry:
    lam = config.wavelength
    delta = config.delta_wavelengths * lam
    t_sim = config.t_sim_wavelengths * lam
    if config.Nx < 1 or config.Ny < 1:
        raise ValueError("atom grid must be at least 1x1")
    if delta <= 0 or t_sim <= 0:
        raise ValueError("element spacing and thickness must be positive")
    if config.M < config.K:
        raise ValueError(f"need M >= K, got M={config.M}, K={config.K}")
    d_layer = t_sim / config.L
    atoms = [_grid(config.Nx, config.Ny, delta, config.d_bs_m + i * d_layer)
             for i in range(1, config.L + 1)]
    pitch = config.antenna_pitch_wavelengths * lam
    ant_y = (np.arange(config.M) - (config.M - 1) / 2) * pitch
    antennas = np.column_stack([np.full(config.M, config.d_bs_m), ant_y, np.zeros(config.M)])
    user_z = (np.arange(config.K) - (config.K - 1) / 2) * config.d_ue_m
    users = np.column_stack([np.full(config.K, config.d_user_x_m), np.zeros(config.K), user_z])
    return SimGeometry(L=config.L, Nx=config.Nx, Ny=config.Ny, delta=delta, t_sim=t_sim,
                       d_layer=d_layer, wavelength=lam, atom_positions=atoms,
                       antenna_positions=antennas, user_positions=users)


def diffraction_coefficient(src, dst, normal, delta: float, wavelength: float):
    """Rayleigh-Sommerfeld transmission coefficient between two apertures.

    Broadcasts over leading dimensions of ``src`` and ``dst``.
    """
    diff = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    r = np.linalg.norm(diff, axis=-1)
    if np.any(r == 0):
        raise ValueError("source and destination coincide")
    cos_a = np.abs(diff @ np.asarray(normal, dtype=float)) / r
    kappa = 2 * np.pi / wavelength
    return (delta**2 * cos_a / r) * (1 / (2 * np.pi * r) - 1j / wavelength) * np.exp(1j * kappa * r)


def _coupling(src: np.ndarray, dst: np.ndarray, geom: SimGeometry) -> np.ndarray:
    # rows index destination, columns source
    return diffraction_coefficient(src[None, :, :], dst[:, None, :], X_AXIS,
                                   geom.delta, geom.wavelength)


def build_interlayer_channels(geom: SimGeometry):
    """Return ``(q_layers, q_first)``: layer-to-layer and antenna-to-layer-1 matrices."""
    q_first = _coupling(geom.antenna_positions, geom.atom_positions[0], geom)
    q_layers = [_coupling(geom.atom_positions[i - 1], geom.atom_positions[i], geom)
                for i in range(1, geom.L)]
    return q_layers, q_first


def build_user_covariance(geom: SimGeometry) -> np.ndarray:
    pos = geom.atom_positions[-1]
    r = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    # np.sinc(x) = sin(pi x)/(pi x); kappa r = pi * (2 r / lambda)
    R = np.sinc(2 * r / geom.wavelength)
    return (R + R.T) / 2


def path_losses(geom: SimGeometry, C0_db: float, alpha: float) -> np.ndarray:
    center = geom.atom_positions[-1].mean(axis=0)
    d = np.linalg.norm(geom.user_positions - center, axis=1)
    return 10 ** (C0_db / 10) * d ** (-alpha)


def covariance_factor(R: np.ndarray) -> np.ndarray:
    """Symmetric square-root factor F with F F^T = R, clipping round-off negatives."""
    w, V = np.linalg.eigh(R)
    if w.min() < -PSD_TOL:
        raise ValueError(f"covariance not PSD: min eigenvalue {w.min():.3e}")
    return V * np.sqrt(np.clip(w, 0, None))


def sample_user_channels(R: np.ndarray, path_loss, rng: np.random.Generator,
                         factor: np.ndarray | None = None) -> np.ndarray:
    path_loss = np.asarray(path_loss, dtype=float)
    F = covariance_factor(R) if factor is None else factor
    N, K = R.shape[0], len(path_loss)
    w = (rng.standard_normal((N, K)) + 1j * rng.standard_normal((N, K))) / np.sqrt(2)
    return (F @ w) * np.sqrt(path_loss)


@dataclass
class Scenario:
    """Deterministic part of a scenario plus a user-channel sampler.

    The inter-layer matrices depend only on geometry and are built once; each
    call to :meth:`sample` draws a fresh Rayleigh realization of the users.
    """

    config: ScenarioConfig
    geometry: SimGeometry = field(init=False)
    q_layers: List[np.ndarray] = field(init=False)
    q_first: np.ndarray = field(init=False)
    covariance: np.ndarray = field(init=False)
    path_loss: np.ndarray = field(init=False)
    _factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.geometry = build_geometry(self.config)
        self.q_layers, self.q_first = build_interlayer_channels(self.geometry)
        self.covariance = build_user_covariance(self.geometry)
        self.path_loss = path_losses(self.geometry, self.config.path_loss.C0_db,
                                     self.config.path_loss.alpha)
        self._factor = covariance_factor(self.covariance)

    def sample(self, rng: np.random.Generator) -> ChannelSet:
        H = sample_user_channels(self.covariance, self.path_loss, rng, factor=self._factor)
        return ChannelSet(self.q_layers, self.q_first, H, self.covariance, self.path_loss)
