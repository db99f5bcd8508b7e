"""Recursive layer-by-layer oblique-manifold optimization of the surface phases.

Each layer's phases enter the received signal linearly once the other layers
are frozen, so the max-min margin problem for that layer becomes a min-max
over ``2 K U`` linear forms of the real/imaginary split of the phase vector.
The max is smoothed with log-sum-exp and minimized on the oblique manifold;
an outer loop sweeps the layers from the user side down to the antenna side.

All optimizers work in normalized units: the user channels are rescaled so
the RMS noise-free received amplitude at the start point equals
``log(2 K U)``, the log of the number of smoothed terms. The LSE bias bound
``eps * log(2 K U)`` is then ``eps`` times the start amplitude whatever the
path loss or frame size. Margins are positively homogeneous in the scale, so
the exact maximizer is unchanged.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Sequence

import numpy as np

from .config import DescentParams, OptimizerParams
from .geometry import ChannelSet
from .manifold import (complex_to_oblique, descend, lse, oblique_to_complex,
                       softmax_weights)
from .signal import QPSK_PHI, Frame, PhaseStack, chain, unit_direction


@dataclass
class RomParams:
    T: int = 50
    eps_conv: float = 1e-3
    lse_eps: float = 1e-1
    descent: DescentParams = field(default_factory=DescentParams)
    phi: float = QPSK_PHI
    target_rms: float | None = None  # None: log of the term count
    anneal: int = 0  # times lse_eps may be halved on a stall before stopping

    @classmethod
    def from_config(cls, opt: OptimizerParams) -> "RomParams":
        return cls(T=opt.T, eps_conv=opt.eps_conv, lse_eps=opt.lse_eps,
                   descent=opt.descent.model_copy(), target_rms=opt.target_rms, anneal=opt.anneal)


@dataclass
class LayerContext:
    """Per-layer equivalent channels and the linear forms they induce.

    ``g1`` is N x K (left channel per user), ``g2`` N x U (right channel per
    slot, shared by all users), ``gtilde``/``g_real``/``g_imag`` are U x K x N.
    ``coef_re``/``coef_im`` stack the coefficient rows of the ``2 K U`` terms
    in (slot, user, sign) order and act on the real and imaginary phase rows.
    """

    layer: int
    g1: np.ndarray
    g2: np.ndarray
    gtilde: np.ndarray
    g_real: np.ndarray
    g_imag: np.ndarray
    phi: float
    coef_re: np.ndarray = field(init=False, repr=False)
    coef_im: np.ndarray = field(init=False, repr=False)
    coef: np.ndarray = field(init=False, repr=False)  # [coef_re | coef_im], acts on theta.ravel()

    def __post_init__(self):
        t = np.tan(self.phi)
        gR, gI = self.g_real, self.g_imag
        # term 2k-1: -Re t + Im ; term 2k: -Re t - Im
        re = np.stack([gI - gR * t, -(gI + gR * t)], axis=2)
        im = np.stack([gR + gI * t, gI * t - gR], axis=2)
        N = gR.shape[-1]
        self.coef_re = re.reshape(-1, N)
        self.coef_im = im.reshape(-1, N)
        self.coef = np.hstack([self.coef_re, self.coef_im])


def tx_matrix(channels: ChannelSet, selection: Sequence[int] | None = None, power=None) -> np.ndarray:
    """Antenna-to-layer-1 matrix restricted to ``selection`` and scaled by ``power``."""
    sel = np.arange(channels.K) if selection is None else np.asarray(selection, dtype=int)
    Q1 = channels.q_first[:, sel]
    if power is not None:
        Q1 = Q1 * np.asarray(power, dtype=float)
    return Q1


def _right_channels(channels: ChannelSet, phases: PhaseStack, Q1S: np.ndarray) -> List[np.ndarray]:
    """Right channels for every layer: index ``l-1`` holds Q_l Phi_{l-1} ... Phi_1 Q_1 S."""
    out = [Q1S]
    for l in range(2, channels.L + 1):
        out.append(channels.q_layers[l - 2] @ (phases.thetas[l - 2][:, None] * out[-1]))
    return out


def _left_step(channels: ChannelSet, phases: PhaseStack, g1_above: np.ndarray, l: int) -> np.ndarray:
    """Left channel of layer ``l`` from that of layer ``l+1``."""
    Q = channels.q_layers[l - 1]  # Q_{l+1}
    return Q.conj().T @ (phases.thetas[l].conj()[:, None] * g1_above)


def _context(layer: int, g1: np.ndarray, g2: np.ndarray, ideal: np.ndarray, phi: float) -> LayerContext:
    # gtilde[mu, k] = conj(g2[:, mu]) * g1[:, k]
    gtilde = np.conj(g2.T)[:, None, :] * g1.T[None, :, :]
    rot = np.conj(unit_direction(ideal)).T[:, :, None]  # U x K x 1
    a = np.conj(gtilde) * rot
    return LayerContext(layer, g1, g2, gtilde, a.real, a.imag, phi)


def equivalent_channels(channels: ChannelSet, phases: PhaseStack, frame: Frame, l: int,
                        selection=None, power=None, phi: float = QPSK_PHI) -> LayerContext:
    """Equivalent left/right channels of layer ``l`` (1-based) with the others frozen.

    The transmitted symbols are ``frame.distorted``; margins are measured
    against the decision regions of ``frame.ideal``.
    """
    if not 1 <= l <= channels.L:
        raise ValueError(f"layer {l} outside 1..{channels.L}")
    g1 = channels.h_users
    for j in range(channels.L - 1, l - 1, -1):
        g1 = _left_step(channels, phases, g1, j)
    Q1S = tx_matrix(channels, selection, power) @ frame.distorted
    g2 = _right_channels(channels, phases, Q1S)[l - 1]
    return _context(l, g1, g2, frame.ideal, phi)


def realize_terms(ctx: LayerContext, theta: np.ndarray) -> np.ndarray:
    """The ``2 K U`` negated-margin branches; their max is minus the min margin."""
    return ctx.coef @ theta.reshape(-1)


def smoothed_objective(ctx: LayerContext, theta: np.ndarray, lse_eps: float):
    g = realize_terms(ctx, theta)
    value = lse(g, lse_eps)
    w = softmax_weights(g, lse_eps)
    return value, (w @ ctx.coef).reshape(theta.shape)


def optimize_layer(ctx: LayerContext, theta0: np.ndarray, params: RomParams,
                   best_exact: bool = False):
    """Minimize the smoothed objective of one layer; returns ``(theta, trace)``.

    With ``best_exact`` the returned point is, among all feasible points the
    descent evaluated (start included), the one with the smallest exact max
    term rather than the final iterate.
    """
    best = [realize_terms(ctx, theta0).max(), theta0]
    eps = params.lse_eps

    def objective(th):
        g = realize_terms(ctx, th)
        top = g.max()
        w = np.exp((g - top) / eps)
        total = w.sum()
        if best_exact and top < best[0]:
            best[0], best[1] = top, th
        # the gradient is only formed for accepted steps
        return top + eps * math.log(total), lambda: ((w / total) @ ctx.coef).reshape(th.shape)

    theta, _, trace = descend(objective, theta0, params.descent)
    return (best[1] if best_exact else theta), trace


def frame_margins(channels: ChannelSet, phases: PhaseStack, frame: Frame,
                  selection=None, power=None, phi: float = QPSK_PHI) -> np.ndarray:
    """K x U exact margins of the noise-free received block."""
    Y = channels.h_users.conj().T @ chain(channels, phases, tx_matrix(channels, selection, power)
                                          @ frame.distorted)
    z = Y * np.conj(unit_direction(frame.ideal))
    return z.real * np.tan(phi) - np.abs(z.imag)


def received_rms(channels: ChannelSet, phases: PhaseStack, frame: Frame, selection=None,
                 power=None) -> float:
    Y = channels.h_users.conj().T @ chain(channels, phases, tx_matrix(channels, selection, power)
                                          @ frame.distorted)
    return float(np.sqrt(np.mean(np.abs(Y) ** 2)))


def working_scale(channels: ChannelSet, phases: PhaseStack, frame: Frame, target_rms=None,
                  selection=None, power=None) -> float:
    """Factor the user channels are divided by before optimizing."""
    target = np.log(2 * frame.K * frame.U) if target_rms is None else target_rms
    scale = received_rms(channels, phases, frame, selection, power) / max(target, 1e-12)
    return scale if scale > 0 else 1.0


def relative_change(current: float, previous: float) -> float:
    if abs(previous) < 1e-6:
        return abs(current - previous)
    return abs(current - previous) / abs(previous)


def rom_sweep(channels: ChannelSet, frame: Frame, phases: PhaseStack, params: RomParams,
              selection=None, power=None, traces: list | None = None) -> PhaseStack:
    """One pass over the layers, L down to 1.

    Each layer keeps the evaluated point with the best exact min margin, so
    the sweep never loses ground even when the smoothed and exact objectives
    disagree.
    """
    Q1S = tx_matrix(channels, selection, power) @ frame.distorted
    rights = _right_channels(channels, phases, Q1S)
    g1 = channels.h_users
    for l in range(channels.L, 0, -1):
        if l < channels.L:
            g1 = _left_step(channels, phases, g1, l)
        ctx = _context(l, g1, rights[l - 1], frame.ideal, params.phi)
        theta0 = complex_to_oblique(phases.thetas[l - 1])
        theta, trace = optimize_layer(ctx, theta0, params, best_exact=True)
        if traces is not None:
            traces.append((l, trace))
        if theta is not theta0:
            phases = phases.replace_layer(l, oblique_to_complex(theta))
    return phases


@dataclass
class RomHistory:
    """Min margin (raw units) at the start and after each outer iteration."""

    initial_margin: float
    scale: float
    min_margin: List[float] = field(default_factory=list)
    wall_ms: List[float] = field(default_factory=list)
    layer_traces: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.min_margin)


def rom(channels: ChannelSet, frame: Frame, params: RomParams | None = None,
        phases0: PhaseStack | None = None, rng: np.random.Generator | None = None,
        selection=None, power=None, keep_traces: bool = False):
    """Alternate single-layer solves until the min margin stalls.

    Returns ``(phases, history)``. ``phases0`` defaults to uniform random
    phases drawn from ``rng``.
    """
    params = params or RomParams()
    if phases0 is None:
        rng = rng if rng is not None else np.random.default_rng()
        phases0 = PhaseStack.random(channels.L, channels.N, rng)
    scale = working_scale(channels, phases0, frame, params.target_rms, selection, power)
    work = channels.with_users(channels.h_users / scale)
    phases = phases0
    m_prev = float(frame_margins(work, phases, frame, selection, power, params.phi).min())
    history = RomHistory(initial_margin=m_prev * scale, scale=scale)
    t0 = time.perf_counter()
    level, current = 0, params
    for t in range(1, params.T + 1):
        traces = history.layer_traces if keep_traces else None
        phases = rom_sweep(work, frame, phases, current, selection, power, traces)
        m = float(frame_margins(work, phases, frame, selection, power, params.phi).min())
        history.min_margin.append(m * scale)
        history.wall_ms.append((time.perf_counter() - t0) * 1e3)
        if t >= 2 and relative_change(m, m_prev) <= params.eps_conv:
            if level >= params.anneal:
                break
            level += 1
            current = replace(params, lse_eps=params.lse_eps / 2**level)
        m_prev = m
    return phases, history
