"""Greedy antenna selection, sphere-constrained power allocation and the
alternating loop that combines them with the layer-wise phase optimizer."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .config import DescentParams, OptimizerParams
from .geometry import ChannelSet
from .manifold import descend, retract_sphere
from .rom import RomParams, frame_margins, relative_change, rom_sweep, working_scale
from .signal import QPSK_PHI, Frame, PhaseStack, chain, unit_direction


@dataclass
class SelectionState:
    chosen: List[int] = field(default_factory=list)  # 0-based, in stream order
    margin_best: float = -np.inf


def uniform_power(K: int) -> np.ndarray:
    return np.full(K, 1 / np.sqrt(K))


def greedy_as(channels: ChannelSet, phases: PhaseStack, frame: Frame, power=None,
              phi: float = QPSK_PHI) -> SelectionState:
    """Grow the antenna set one stream at a time, maximizing the min margin.

    At stage ``k`` the chosen antennas carry the first ``k`` users' streams
    (antenna ``i`` -> user ``i``) and only those users are scored. Partial
    stages use uniform power; the last stage uses ``power`` when given.
    Ties go to the lowest antenna index.
    """
    K, M = channels.K, channels.M
    gains = channels.h_users.conj().T @ chain(channels, phases, channels.q_first)  # K x M
    state = SelectionState()
    for k in range(1, K + 1):
        if k == K and power is not None:
            p = np.asarray(power, dtype=float)
        else:
            p = uniform_power(K)[:k]
        best_m, best_val = -1, -np.inf
        for m in range(M):
            if m in state.chosen:
                continue
            cols = state.chosen + [m]
            Y = (gains[:k, cols] * p) @ frame.distorted[:k]
            z = Y * np.conj(unit_direction(frame.ideal[:k]))
            val = float(np.min(z.real * np.tan(phi) - np.abs(z.imag)))
            if val > best_val:
                best_m, best_val = m, val
        state.chosen.append(best_m)
        state.margin_best = best_val
    return state


@dataclass
class PowerContext:
    """Linear forms of the power vector for a fixed selection and phase stack.

    ``h_tilde``, ``h_real``, ``h_imag`` are U x K x K: for slot ``mu`` and
    user ``k`` the received sample is ``conj(h_tilde[mu, k]) @ p`` after
    rotating by the ideal symbol's argument.
    """

    h_tilde: np.ndarray
    h_real: np.ndarray
    h_imag: np.ndarray
    phi: float = QPSK_PHI
    coef: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.tan(self.phi)
        hR, hI = self.h_real, self.h_imag
        self.coef = np.stack([hI - hR * t, -(hI + hR * t)], axis=2).reshape(-1, hR.shape[-1])


def power_context(channels: ChannelSet, phases: PhaseStack, frame: Frame, selection,
                  phi: float = QPSK_PHI) -> PowerContext:
    sel = np.asarray(selection, dtype=int)
    B = channels.h_users.conj().T @ chain(channels, phases, channels.q_first[:, sel])  # K x K
    rot = np.conj(unit_direction(frame.ideal)).T  # U x K
    a = B[None, :, :] * frame.distorted.T[:, None, :] * rot[:, :, None]
    return PowerContext(np.conj(a), a.real, a.imag, phi)


def pa_terms(ctx: PowerContext, p: np.ndarray) -> np.ndarray:
    return ctx.coef @ p


def pa_objective(ctx: PowerContext, p: np.ndarray, eps_p: float):
    g = pa_terms(ctx, p)
    top = g.max()
    w = np.exp((g - top) / eps_p)
    total = w.sum()
    return top + eps_p * np.log(total), (w / total) @ ctx.coef


def optimize_pa(ctx: PowerContext, eps_p: float = 10 ** -1.5, descent: DescentParams | None = None,
                p0=None, best_exact: bool = False) -> np.ndarray:
    """Minimize the smoothed max of the power terms over the unit sphere.

    The context should already be in normalized units (see :func:`rom_ao`).
    Squared entries of the result give the per-stream power fractions.
    """
    K = ctx.coef.shape[1]
    p0 = uniform_power(K) if p0 is None else retract_sphere(np.asarray(p0, dtype=float))
    best = [pa_terms(ctx, p0).max(), p0]

    def objective(p):
        value, grad = pa_objective(ctx, p, eps_p)
        if best_exact:
            top = pa_terms(ctx, p).max()
            if top < best[0]:
                best[0], best[1] = top, p
        return value, grad

    p, _, _ = descend(objective, p0, descent)
    return best[1] if best_exact else p


@dataclass
class AoParams:
    rom: RomParams = field(default_factory=RomParams)
    eps_p: float = 10 ** -1.5
    use_as: bool = True
    use_pa: bool = True

    @classmethod
    def from_config(cls, opt: OptimizerParams, use_as: bool = True, use_pa: bool = True) -> "AoParams":
        return cls(RomParams.from_config(opt), opt.eps_p, use_as, use_pa)


@dataclass
class AoHistory:
    """Min margin after each block, in units of unit total transmit power."""

    scale: float
    initial_margin: float
    blocks: List[tuple] = field(default_factory=list)  # (outer_iter, block, min_margin)
    wall_ms: List[float] = field(default_factory=list)

    @property
    def min_margin(self) -> List[float]:
        return [b[2] for b in self.blocks]


def rom_ao(channels: ChannelSet, frame: Frame, params: AoParams | None = None,
           phases0: PhaseStack | None = None, rng: np.random.Generator | None = None):
    """Alternate antenna selection, a layer sweep and power allocation.

    Returns ``(selection, phases, power, history)``. ``power`` is the unit-norm
    amplitude vector (uniform when power allocation is disabled). Each block
    keeps its previous state unless the exact min margin does not decrease.
    """
    params = params or AoParams()
    K, M = channels.K, channels.M
    if M < K:
        raise ValueError(f"need M >= K, got M={M}, K={K}")
    phi = params.rom.phi
    if phases0 is None:
        rng = rng if rng is not None else np.random.default_rng()
        phases0 = PhaseStack.random(channels.L, channels.N, rng)
    selection = list(range(K))
    # without allocation the streams run at unit amplitude internally, which
    # keeps the phase sweep bit-identical to a plain ROM run
    power: Optional[np.ndarray] = uniform_power(K) if params.use_pa else None
    report = 1.0 if params.use_pa else 1 / np.sqrt(K)

    scale = working_scale(channels, phases0, frame, params.rom.target_rms, selection, power)
    work = channels.with_users(channels.h_users / scale)
    phases = phases0

    def margin(sel, pw, ph) -> float:
        return float(frame_margins(work, ph, frame, sel, pw, phi).min())

    m_prev = margin(selection, power, phases)
    history = AoHistory(scale=scale, initial_margin=m_prev * scale * report)
    t0 = time.perf_counter()
    level, rom_p, eps_p = 0, params.rom, params.eps_p
    for t in range(1, params.rom.T + 1):
        if params.use_as and M > K:
            state = greedy_as(work, phases, frame, power, phi)
            if margin(state.chosen, power, phases) >= margin(selection, power, phases):
                selection = state.chosen
        history.blocks.append((t, "as", margin(selection, power, phases) * scale * report))

        phases = rom_sweep(work, frame, phases, rom_p, selection, power)
        m = margin(selection, power, phases)
        history.blocks.append((t, "phases", m * scale * report))

        # with a negative min margin the max-min power problem is solved by
        # starving the failing streams toward zero, which only traps the
        # following phase sweeps; allocate once the margin is positive
        if params.use_pa and m > 0:
            ctx = power_context(work, phases, frame, selection, phi)
            power = optimize_pa(ctx, eps_p, params.rom.descent, p0=power, best_exact=True)
            m = margin(selection, power, phases)
        if params.use_pa:
            history.blocks.append((t, "pa", m * scale * report))
        history.wall_ms.append((time.perf_counter() - t0) * 1e3)
        if t >= 2 and relative_change(m, m_prev) <= params.rom.eps_conv:
            if level >= params.rom.anneal:
                break
            level += 1
            rom_p = replace(params.rom, lse_eps=params.rom.lse_eps / 2**level)
            eps_p = params.eps_p / 2**level
        m_prev = m
    final_power = power if power is not None else uniform_power(K)
    return SelectionState(list(selection), margin(selection, power, phases) * scale * report), \
        phases, final_power, history
