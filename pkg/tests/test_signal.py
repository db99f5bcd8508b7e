import numpy as np
import pytest

from simiep.config import SalehParams
from simiep.signal import (QPSK_ALPHABET, PhaseStack, add_noise, apply_nld, chain,
                           demodulate_qpsk, detect_qpsk, effective_matrix, make_frame,
                           min_margin, modulate_qpsk, noise_variance, safety_margin)

from simiep.checks import random_instance


def test_gray_mapping():
    s = modulate_qpsk([0, 0, 0, 1, 1, 1, 1, 0])
    assert np.allclose(s, np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2))
    assert np.allclose(np.abs(s), 1)


def test_round_trip_all_symbols():
    bits = np.array([0, 0, 0, 1, 1, 1, 1, 0])
    assert np.array_equal(demodulate_qpsk(detect_qpsk(modulate_qpsk(bits))), bits)


def test_odd_bits_rejected():
    with pytest.raises(ValueError):
        modulate_qpsk([0, 1, 1])


def test_saleh_values():
    out = apply_nld(1.0 + 0j)
    assert abs(out) == pytest.approx(1.6623 / 1.0552, abs=1e-12)
    assert abs(out) == pytest.approx(1.57535, abs=1e-5)
    assert np.angle(out) == pytest.approx(0.113927, abs=1e-6)
    assert apply_nld(0j) == 0


def test_saleh_phase_shift_exact(rng):
    x = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    p = SalehParams()
    r = np.abs(x)
    shift = np.angle(apply_nld(x, p) * np.conj(x))
    assert np.allclose(shift, p.alpha_phi * r**2 / (1 + p.beta_phi * r**2), atol=1e-12)


def test_frame_entries(rng):
    fr = make_frame(3, 10, rng)
    assert np.all(np.isin(np.round(fr.ideal * np.sqrt(2)), [1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]))
    assert np.array_equal(fr.distorted, apply_nld(fr.ideal))


def test_scalar_chain():
    from simiep.geometry import ChannelSet
    ch = ChannelSet([], np.array([[0.3 - 0.2j]]), np.array([[1.1 + 0.4j]]), np.eye(1), np.ones(1))
    E = effective_matrix(ch, PhaseStack.identity(1, 1))
    assert E[0, 0] == pytest.approx(np.conj(1.1 + 0.4j) * (0.3 - 0.2j))


def test_effective_matches_slotwise(rng):
    ch, fr, ph = random_instance(rng, L=3, N=4, K=2, U=5, M=3)
    E = effective_matrix(ch, ph)
    for mu in range(fr.U):
        x = ch.q_first[:, :2] @ fr.distorted[:, mu]
        for l in range(ch.L):
            if l:
                x = ch.q_layers[l - 1] @ x
            x = ph.thetas[l] * x
        assert np.max(np.abs(E @ fr.distorted[:, mu] - ch.h_users.conj().T @ x)) <= 1e-10


def test_selection_permutes_columns(rng):
    ch, _, ph = random_instance(rng, L=2, N=3, K=2, M=4)
    a = effective_matrix(ch, ph, [3, 1])
    b = effective_matrix(ch, ph, [1, 3])
    assert np.array_equal(a, b[:, ::-1])
    with pytest.raises(ValueError):
        effective_matrix(ch, ph, [1, 1])
    with pytest.raises(ValueError):
        effective_matrix(ch, ph, [0, 4])


def test_chain_identity_phases(rng):
    ch, _, _ = random_instance(rng, L=2, N=3, K=1, M=1)
    X = rng.standard_normal((3, 2))
    assert np.allclose(chain(ch, PhaseStack.identity(2, 3), X), ch.q_layers[0] @ X)


@pytest.mark.parametrize("z, expected", [(1 + 0j, 1.0), (0.5 + 0.5j, 0.0), (0.3 - 0.5j, -0.2)])
def test_margin_examples(z, expected):
    s = QPSK_ALPHABET[0]
    y = z * s  # y e^{-j arg s} = z
    assert safety_margin(y, s) == pytest.approx(expected, abs=1e-12)


def test_min_margin(rng):
    s = QPSK_ALPHABET[rng.integers(0, 4, (2, 6))]
    assert min_margin(2 * s, s) == pytest.approx(2.0)


def test_detect_examples():
    assert detect_qpsk(2 + 3j) == QPSK_ALPHABET[0]
    assert detect_qpsk(-0.1 - 5j) == QPSK_ALPHABET[2]
    assert detect_qpsk(0j) == QPSK_ALPHABET[0]
    # axis points go counter-clockwise
    assert detect_qpsk(1 + 0j) == QPSK_ALPHABET[0]
    assert detect_qpsk(1j) == QPSK_ALPHABET[1]
    assert detect_qpsk(-1 + 0j) == QPSK_ALPHABET[2]
    assert detect_qpsk(-1j) == QPSK_ALPHABET[3]


def test_margin_detector_equivalence_per_symbol(rng):
    for s in QPSK_ALPHABET:
        y = rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000)
        assert np.array_equal(safety_margin(y, s) >= 0, detect_qpsk(y) == s)


def test_noise(rng):
    y = np.zeros(100_000, dtype=complex)
    assert np.array_equal(add_noise(y, 0.0, rng), y)
    w = add_noise(y, 0.5, rng)
    n = w.size
    assert abs(np.mean(np.abs(w) ** 2) - 0.5) <= 3 * 0.5 / np.sqrt(n)
    assert abs(np.mean(w.real * w.imag)) <= 3 * 0.25 / np.sqrt(n)
    with pytest.raises(ValueError):
        add_noise(y, -1.0, rng)


def test_noise_variance():
    Y = np.full((2, 4), 2.0 + 0j)
    assert noise_variance(Y, 10) == pytest.approx(0.4)


def test_phase_stack_validation(rng):
    with pytest.raises(ValueError):
        PhaseStack(np.array([[1.0, 0.5]]))
    ph = PhaseStack.random(2, 3, rng)
    new = ph.replace_layer(2, np.ones(3))
    assert np.array_equal(new.thetas[1], np.ones(3))
    assert np.array_equal(new.thetas[0], ph.thetas[0])
