"""QPSK symbols, Saleh amplifier distortion, cascaded transmission and CI margins."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import SalehParams
from .geometry import ChannelSet

QPSK_PHI = np.pi / 4
_S = 1 / np.sqrt(2)
# Gray map indexed by (b0, b1): 00 -> +1+j, 01 -> -1+j, 11 -> -1-j, 10 -> +1-j
_GRAY = np.array([[1 + 1j, -1 + 1j], [1 - 1j, -1 - 1j]]) * _S
QPSK_ALPHABET = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) * _S


@dataclass(frozen=True)
class Frame:
    ideal: np.ndarray  # K x U
    distorted: np.ndarray  # K x U

    @property
    def K(self) -> int:
        return self.ideal.shape[0]

    @property
    def U(self) -> int:
        return self.ideal.shape[1]


@dataclass(frozen=True)
class PhaseStack:
    thetas: np.ndarray  # L x N complex, unit modulus

    def __post_init__(self):
        t = np.asarray(self.thetas, dtype=complex)
        if t.ndim != 2:
            raise ValueError("thetas must be an L x N array")
        if np.max(np.abs(np.abs(t) - 1), initial=0.0) > 1e-12:
            raise ValueError("phase shifts must have unit modulus")
        object.__setattr__(self, "thetas", t)

    @property
    def L(self) -> int:
        return self.thetas.shape[0]

    @property
    def N(self) -> int:
        return self.thetas.shape[1]

    @classmethod
    def from_angles(cls, angles) -> "PhaseStack":
        return cls(np.exp(1j * np.asarray(angles, dtype=float)))

    @classmethod
    def random(cls, L: int, N: int, rng: np.random.Generator) -> "PhaseStack":
        return cls.from_angles(rng.uniform(0, 2 * np.pi, size=(L, N)))

    @classmethod
    def identity(cls, L: int, N: int) -> "PhaseStack":
        return cls(np.ones((L, N), dtype=complex))

    def replace_layer(self, l: int, theta) -> "PhaseStack":
        """Copy with 1-based layer ``l`` replaced."""
        t = self.thetas.copy()
        t[l - 1] = theta
        return PhaseStack(t)


def modulate_qpsk(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=int).ravel()
    if bits.size % 2:
        raise ValueError("QPSK needs an even number of bits")
    pairs = bits.reshape(-1, 2)
    return _GRAY[pairs[:, 0], pairs[:, 1]]


def demodulate_qpsk(symbols) -> np.ndarray:
    s = np.asarray(symbols).ravel()
    b0 = (s.imag < 0).astype(int)
    b1 = (s.real < 0).astype(int)
    return np.column_stack([b0, b1]).ravel()


def apply_nld(sym, p: SalehParams | None = None):
    """Memoryless Saleh AM/AM and AM/PM distortion, elementwise."""
    p = p or SalehParams()
    sym = np.asarray(sym, dtype=complex)
    r = np.abs(sym)
    amp = p.alpha_a * r / (1 + p.beta_a * r**2)
    dphi = p.alpha_phi * r**2 / (1 + p.beta_phi * r**2)
    out = amp * np.exp(1j * (np.angle(sym) + dphi))
    return out if out.ndim else complex(out)


def make_frame(K: int, U: int, rng: np.random.Generator, saleh: SalehParams | None = None) -> Frame:
    bits = rng.integers(0, 2, size=2 * K * U)
    ideal = modulate_qpsk(bits).reshape(K, U)
    return Frame(ideal=ideal, distorted=apply_nld(ideal, saleh))


def _check_selection(selection: Sequence[int], M: int) -> np.ndarray:
    sel = np.asarray(selection, dtype=int)
    if len(set(sel.tolist())) != len(sel):
        raise ValueError(f"duplicate antenna indices in {sel.tolist()}")
    if sel.size and (sel.min() < 0 or sel.max() >= M):
        raise ValueError(f"antenna index out of range [0, {M})")
    return sel


def chain(channels: ChannelSet, phases: PhaseStack, X: np.ndarray) -> np.ndarray:
    """Propagate layer-1 illumination ``X`` (N x ...) through all layers: G X."""
    out = phases.thetas[0][:, None] * X
    for l, Q in enumerate(channels.q_layers, start=2):
        out = phases.thetas[l - 1][:, None] * (Q @ out)
    return out


def effective_matrix(channels: ChannelSet, phases: PhaseStack,
                     selection: Sequence[int] | None = None, power=None) -> np.ndarray:
    """K x K stream-to-user gain H^H G Q1[:, selection] Diag(power)."""
    sel = np.arange(channels.K) if selection is None else _check_selection(selection, channels.M)
    if len(sel) != channels.K:
        raise ValueError(f"selection must have K={channels.K} antennas")
    Q1 = channels.q_first[:, sel]
    if power is not None:
        Q1 = Q1 * np.asarray(power, dtype=float)
    return channels.h_users.conj().T @ chain(channels, phases, Q1)


def received(E: np.ndarray, symbols: np.ndarray) -> np.ndarray:
    return E @ symbols


def unit_direction(s):
    s = np.asarray(s, dtype=complex)
    return s / np.abs(s)


def safety_margin(y, s_ideal, phi: float = QPSK_PHI):
    """Signed distance of ``y`` from the CI-region boundary of ``s_ideal``."""
    z = np.asarray(y) * np.conj(unit_direction(s_ideal))
    return z.real * np.tan(phi) - np.abs(z.imag)


def min_margin(Y: np.ndarray, ideal: np.ndarray, phi: float = QPSK_PHI) -> float:
    return float(np.min(safety_margin(Y, ideal, phi)))


def add_noise(y, sigma2: float, rng: np.random.Generator):
    if sigma2 < 0:
        raise ValueError("noise variance must be nonnegative")
    y = np.asarray(y, dtype=complex)
    w = (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)) / np.sqrt(2)
    return y + np.sqrt(sigma2) * w


def detect_qpsk(y) -> np.ndarray:
    """Quadrant decision; points on an axis go to the counter-clockwise neighbor.

    Sectors are half-open in angle, ``[0, pi/2) -> (1+j)/sqrt2`` and so on, so
    the origin decodes as ``(1+j)/sqrt2``.
    """
    y = np.asarray(y, dtype=complex)
    re, im = y.real, y.imag
    q = np.where((re > 0) & (im >= 0), 0,
                 np.where((re <= 0) & (im > 0), 1,
                          np.where((re < 0) & (im <= 0), 2,
                                   np.where((re >= 0) & (im < 0), 3, 0))))
    return QPSK_ALPHABET[q]


def noise_variance(Y: np.ndarray, snr_db: float) -> float:
    """Receiver-referenced noise power: mean noise-free |y|^2 over SNR."""
    return float(np.mean(np.abs(Y) ** 2) / 10 ** (snr_db / 10))
