"""Monte Carlo SER / sum-rate sweeps and the baselines they are compared with.

Every frame draws its channel, symbols, starting phases and a unit noise
block from its own stream ``SeedSequence([master_seed, frame_index])``. All
strategies of a frame see the same draws and the same noise variance, so
comparisons are paired and results do not depend on how frames are spread
across workers.

Noise variance is referenced to the frame's unoptimized link: the mean
noise-free received power with the random starting phases, the first K
antennas and uniform power. Margins are reported in units of the square root
of that same reference power.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .aspa import AoParams, rom_ao, uniform_power
from .config import SalehParams, ScenarioConfig
from .geometry import ChannelSet, Scenario
from .rom import RomParams, rom
from .signal import (Frame, PhaseStack, apply_nld, detect_qpsk, effective_matrix, make_frame,
                     min_margin, safety_margin)

HEATMAP_FLOOR_DB = -200.0


# -- baselines and metrics -------------------------------------------------

def quantize_phases(phases: PhaseStack, bits: int) -> PhaseStack:
    """Snap every phase to the nearest of ``2**bits`` uniform levels; ties go down."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    levels = 2**bits
    step = 2 * np.pi / levels
    ang = np.mod(np.angle(phases.thetas), 2 * np.pi)
    idx = np.mod(np.ceil(ang / step - 0.5), levels)
    return PhaseStack.from_angles(idx * step)


def sum_rate(effective: np.ndarray, sigma2) -> float:
    """Sum over users of log2(1 + SINR) treating off-diagonal gains as interference.

    ``sigma2`` may be a scalar or a per-user vector (noise plus any extra
    distortion power).
    """
    E = np.asarray(effective)
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (E.shape[0],))
    if np.any(sigma2 <= 0):
        raise ValueError("sigma2 must be positive")
    power = np.abs(E) ** 2
    signal = np.diag(power)
    interference = power.sum(axis=1) - signal
    return float(np.sum(np.log2(1 + signal / (interference + sigma2))))


def linear_model(Y: np.ndarray, ideal: np.ndarray):
    """Least-squares K x K map from ideal symbols to received samples.

    Returns ``(F, distortion)`` where ``distortion`` is the per-user mean
    power of the residual that the linear map cannot explain.
    """
    F = Y @ np.linalg.pinv(ideal)
    resid = Y - F @ ideal
    return F, np.mean(np.abs(resid) ** 2, axis=1)


def zf_precoder(E: np.ndarray) -> np.ndarray:
    """Right inverse E^H (E E^H)^{-1}, diagonally loaded when near singular."""
    A = E @ E.conj().T
    if np.linalg.cond(A) > 1e12:
        A = A + 1e-9 * np.trace(A).real * np.eye(len(A))
    return E.conj().T @ np.linalg.inv(A)


def zf_transmit(E: np.ndarray, ideal: np.ndarray, saleh: SalehParams | None = None,
                nld: bool = True) -> np.ndarray:
    """Noise-free received block of ZF precoding with per-slot unit power."""
    X = zf_precoder(E) @ ideal
    X = X / np.linalg.norm(X, axis=0, keepdims=True)
    if nld:
        X = apply_nld(X, saleh)
    return E @ X


def zf_baseline(channels: ChannelSet, phases: PhaseStack, frame: Frame, sigma2: float,
                noise_unit: np.ndarray, saleh: SalehParams | None = None):
    """``(ser, sum_rate)`` of ZF through a fixed SIM state for one frame."""
    E = effective_matrix(channels, phases)
    Y = zf_transmit(E, frame.ideal, saleh)
    errors = np.count_nonzero(detect_qpsk(Y + np.sqrt(sigma2) * noise_unit) != frame.ideal)
    F, dist = linear_model(Y, frame.ideal)
    return errors / frame.ideal.size, sum_rate(F, sigma2 + dist)


def channel_gain_heatmap(effective: np.ndarray):
    """Per-entry gain in dB and summary stats.

    Returns ``(db, stats)`` with ``stats = {"gap_db", "diag_var_db"}``: mean
    diagonal minus mean off-diagonal dB, and the variance of the diagonal.
    """
    mag = np.abs(np.asarray(effective))
    with np.errstate(divide="ignore"):
        db = np.maximum(20 * np.log10(mag), HEATMAP_FLOOR_DB)
    K = db.shape[0]
    diag = np.diag(db)
    off = db[~np.eye(K, dtype=bool)]
    gap = diag.mean() - off.mean() if off.size else 0.0
    return db, {"gap_db": float(gap), "diag_var_db": float(diag.var())}


def ser_stderr(ser: float, n: int) -> float:
    return float(np.sqrt(ser * (1 - ser) / n))


# -- per-frame evaluation --------------------------------------------------

@dataclass
class FrameDraw:
    index: int
    channels: ChannelSet
    frame: Frame
    phases0: PhaseStack
    noise_unit: np.ndarray
    ref_power: float

    def realization_hash(self) -> str:
        h = hashlib.sha256()
        for a in (self.channels.h_users, self.frame.ideal, self.phases0.thetas, self.noise_unit):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]


def frame_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, index]))


def draw_frame(scenario: Scenario, master_seed: int, index: int) -> FrameDraw:
    cfg = scenario.config
    rng = frame_rng(master_seed, index)
    channels = scenario.sample(rng)
    frame = make_frame(cfg.K, cfg.U, rng, cfg.saleh)
    phases0 = PhaseStack.random(cfg.L, cfg.N, rng)
    noise = (rng.standard_normal((cfg.K, cfg.U)) + 1j * rng.standard_normal((cfg.K, cfg.U))) / np.sqrt(2)
    Y = effective_matrix(channels, phases0, power=uniform_power(cfg.K)) @ frame.distorted
    return FrameDraw(index, channels, frame, phases0, noise, float(np.mean(np.abs(Y) ** 2)))


@dataclass
class StrategyOutcome:
    Y: np.ndarray  # noise-free received block
    min_margin: float  # in units of sqrt(reference power)
    wall_ms: float
    selection: List[int] = field(default_factory=list)
    power: List[float] = field(default_factory=list)


def _rom_params(cfg: ScenarioConfig) -> RomParams:
    return RomParams.from_config(cfg.optimizer)


def run_strategies(cfg: ScenarioConfig, draw: FrameDraw, strategies: Sequence[str]) -> Dict[str, StrategyOutcome]:
    """Noise-free outcome of every requested strategy on one frame draw."""
    K = cfg.K
    ch, fr = draw.channels, draw.frame
    ref = np.sqrt(draw.ref_power)
    p_uni = uniform_power(K)
    out: Dict[str, StrategyOutcome] = {}
    cache: Dict[str, PhaseStack] = {}

    def linear(phases, selection=None, power=p_uni) -> np.ndarray:
        sel = list(range(K)) if selection is None else selection
        return effective_matrix(ch, phases, sel, power) @ fr.distorted

    def finish(name, t0, Y, selection=None, power=p_uni):
        sel = list(range(K)) if selection is None else list(selection)
        out[name] = StrategyOutcome(Y, min_margin(Y, fr.ideal) / ref, (time.perf_counter() - t0) * 1e3,
                                    sel, (np.asarray(power) ** 2).tolist())

    def rom_phases() -> PhaseStack:
        if "rom" not in cache:
            cache["rom"] = rom(ch, fr, _rom_params(cfg), draw.phases0)[0]
        return cache["rom"]

    for name in strategies:
        t0 = time.perf_counter()
        if name == "random_phase":
            finish(name, t0, linear(draw.phases0))
        elif name == "rom":
            finish(name, t0, linear(rom_phases()))
        elif name == "rom_unaware":
            phases, _ = rom(ch, Frame(fr.ideal, fr.ideal), _rom_params(cfg), draw.phases0)
            finish(name, t0, linear(phases))
        elif name in ("rom_as", "rom_pa", "rom_ao"):
            params = AoParams.from_config(cfg.optimizer, use_as=name != "rom_pa",
                                          use_pa=name != "rom_as")
            state, phases, power, _ = rom_ao(ch, fr, params, draw.phases0)
            finish(name, t0, linear(phases, state.chosen, power), state.chosen, power)
        elif name.startswith("quantized"):
            finish(name, t0, linear(quantize_phases(rom_phases(), int(name[len("quantized"):]))))
        elif name == "zf":
            phases = rom_phases() if cfg.zf_phases == "rom" else draw.phases0
            finish(name, t0, zf_transmit(effective_matrix(ch, phases), fr.ideal, cfg.saleh))
        else:
            raise ValueError(f"unknown strategy {name!r}")
    return out


@dataclass
class FrameResult:
    """Per-frame, per-strategy numbers; ``errors``/``rates`` are indexed by SNR."""

    index: int
    realization: str
    min_margin: Dict[str, float]
    errors: Dict[str, List[int]]
    rates: Dict[str, List[float]]
    wall_ms: Dict[str, float]
    selection: Dict[str, List[int]]
    power: Dict[str, List[float]]


def evaluate_frame(cfg: ScenarioConfig, scenario: Scenario, index: int, strategies: Sequence[str],
                   snrs_db: Sequence[float]) -> FrameResult:
    draw = draw_frame(scenario, cfg.master_seed, index)
    outcomes = run_strategies(cfg, draw, strategies)
    res = FrameResult(index, draw.realization_hash(), {}, {}, {}, {}, {}, {})
    for name, oc in outcomes.items():
        F, dist = linear_model(oc.Y, draw.frame.ideal)
        errs, rates = [], []
        for snr in snrs_db:
            sigma2 = draw.ref_power / 10 ** (snr / 10)
            det = detect_qpsk(oc.Y + np.sqrt(sigma2) * draw.noise_unit)
            errs.append(int(np.count_nonzero(det != draw.frame.ideal)))
            rates.append(sum_rate(F, sigma2 + dist))
        res.min_margin[name] = oc.min_margin
        res.errors[name] = errs
        res.rates[name] = rates
        res.wall_ms[name] = oc.wall_ms
        res.selection[name] = oc.selection
        res.power[name] = oc.power
    return res


_WORKER_STATE: dict = {}


def _worker_eval(args):
    cfg_json, index, strategies, snrs = args
    scen = _WORKER_STATE.get(cfg_json)
    if scen is None:
        cfg = ScenarioConfig.model_validate_json(cfg_json)
        scen = _WORKER_STATE[cfg_json] = Scenario(cfg)
    return evaluate_frame(scen.config, scen, index, strategies, snrs)


def run_frames(cfg: ScenarioConfig, strategies: Sequence[str], snrs_db: Sequence[float],
               frames: int, workers: int = 1, scenario: Scenario | None = None) -> List[FrameResult]:
    """Evaluate frames ``0..frames-1``; the result list is in frame order."""
    strategies, snrs = list(strategies), [float(s) for s in snrs_db]
    if workers <= 1:
        scenario = scenario or Scenario(cfg)
        return [evaluate_frame(cfg, scenario, i, strategies, snrs) for i in range(frames)]
    cfg_json = cfg.model_dump_json()
    jobs = [(cfg_json, i, strategies, snrs) for i in range(frames)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_worker_eval, jobs))


# -- sweeps ----------------------------------------------------------------

@dataclass
class RunResult:
    """Aggregated sweep rows plus the per-frame results they came from."""

    axis: str
    rows: List[dict]
    frames: Dict[float, List[FrameResult]]
    master_seed: int
    config_hash: str

    COLUMNS = ("axis_value", "strategy", "ser", "ser_stderr", "sum_rate", "min_margin", "wall_ms")


def aggregate(results: List[FrameResult], strategy: str, snr_idx: int, K: int, U: int) -> dict:
    n = K * U * len(results)
    errors = sum(r.errors[strategy][snr_idx] for r in results)
    ser = errors / n
    return {
        "strategy": strategy,
        "ser": ser,
        "ser_stderr": ser_stderr(ser, n),
        "sum_rate": float(np.mean([r.rates[strategy][snr_idx] for r in results])),
        "min_margin": float(np.median([r.min_margin[strategy] for r in results])),
        "wall_ms": float(np.mean([r.wall_ms[strategy] for r in results])),
    }


def axis_config(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "layers":
        return cfg.replace(L=int(value))
    if axis == "atoms_per_layer":
        side = int(round(np.sqrt(value)))
        if side * side != int(value):
            raise ValueError(f"atoms_per_layer must be a perfect square, got {value}")
        return cfg.replace(Nx=side, Ny=side)
    return cfg


def sweep(cfg: ScenarioConfig, workers: int = 1) -> RunResult:
    """Run the configured sweep; SNR sweeps reuse each frame's optimization."""
    sp = cfg.sweep
    rows, frames = [], {}
    if sp.axis == "snr_db":
        res = run_frames(cfg, sp.strategies, sp.values, sp.frames, workers)
        for i, v in enumerate(sp.values):
            frames[v] = res
            for s in sp.strategies:
                rows.append({"axis_value": v, **aggregate(res, s, i, cfg.K, cfg.U)})
    else:
        for v in sp.values:
            sub = axis_config(cfg, sp.axis, v)
            res = run_frames(sub, sp.strategies, [sp.snr_db], sp.frames, workers)
            frames[v] = res
            for s in sp.strategies:
                rows.append({"axis_value": v, **aggregate(res, s, 0, sub.K, sub.U)})
    return RunResult(sp.axis, rows, frames, cfg.master_seed, cfg.config_hash())


def constellation(cfg: ScenarioConfig, strategy: str = "rom", index: int = 0,
                  scenario: Scenario | None = None):
    """Noise-free received samples of one frame for a strategy.

    Returns a list of dict rows (slot, user, ideal, received, margin) with
    complex values split into real/imaginary parts.
    """
    scenario = scenario or Scenario(cfg)
    draw = draw_frame(scenario, cfg.master_seed, index)
    oc = run_strategies(cfg, draw, [strategy])[strategy]
    ref = np.sqrt(draw.ref_power)
    margins = safety_margin(oc.Y, draw.frame.ideal) / ref
    rows = []
    for mu in range(cfg.U):
        for k in range(cfg.K):
            s, y = draw.frame.ideal[k, mu], oc.Y[k, mu] / ref
            rows.append({"slot": mu, "user": k + 1, "ideal_re": s.real, "ideal_im": s.imag,
                         "rx_re": y.real, "rx_im": y.imag, "margin": margins[k, mu]})
    return rows


def heatmap_for(cfg: ScenarioConfig, strategy: str = "rom", index: int = 0,
                scenario: Scenario | None = None):
    """Gain heat map of the K x K stream-to-user matrix produced by a strategy."""
    scenario = scenario or Scenario(cfg)
    draw = draw_frame(scenario, cfg.master_seed, index)
    K = cfg.K
    if strategy == "random_phase":
        phases, sel, power = draw.phases0, list(range(K)), uniform_power(K)
    elif strategy == "rom":
        phases = rom(draw.channels, draw.frame, _rom_params(cfg), draw.phases0)[0]
        sel, power = list(range(K)), uniform_power(K)
    elif strategy == "rom_ao":
        state, phases, power, _ = rom_ao(draw.channels, draw.frame,
                                          AoParams.from_config(cfg.optimizer), draw.phases0)
        sel = state.chosen
    else:
        raise ValueError(f"heatmap supports random_phase, rom, rom_ao; got {strategy!r}")
    E = effective_matrix(draw.channels, phases, sel, power)
    return channel_gain_heatmap(E / np.sqrt(draw.ref_power))
