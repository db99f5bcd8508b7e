import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from simiep.checks import random_instance
from simiep.evaluation import quantize_phases
from simiep.manifold import complex_to_oblique, lse, project_tangent, retract
from simiep.rom import equivalent_channels, realize_terms
from simiep.signal import PhaseStack, chain, safety_margin

seeds = st.integers(0, 2**32 - 1)
finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_layer_identity_any_instance(seed):
    rng = np.random.default_rng(seed)
    ch, fr, ph = random_instance(rng)
    Y = ch.h_users.conj().T @ chain(ch, ph, ch.q_first[:, :ch.K] @ fr.distorted)
    margin = safety_margin(Y, fr.ideal)
    for l in range(1, ch.L + 1):
        ctx = equivalent_channels(ch, ph, fr, l)
        terms = realize_terms(ctx, complex_to_oblique(ph.thetas[l - 1])).reshape(fr.U, fr.K, 2)
        assert np.allclose(-terms.max(axis=2).T, margin, atol=1e-9 * (1 + np.abs(Y).max()))


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=1, max_size=30), st.floats(1e-3, 10))
def test_lse_bounds(values, eps):
    v = np.array(values)
    s = lse(v, eps)
    assert v.max() - 1e-12 <= s <= v.max() + eps * np.log(len(v)) + 1e-9


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 12))
def test_projection_and_retraction(seed, n):
    rng = np.random.default_rng(seed)
    x = complex_to_oblique(np.exp(1j * rng.uniform(0, 2 * np.pi, n)))
    g = rng.standard_normal((2, n))
    xi = project_tangent(x, g)
    assert np.allclose(np.sum(x * xi, axis=0), 0, atol=1e-12)
    assert np.allclose(project_tangent(x, xi), xi, atol=1e-12)
    y = retract(x + rng.uniform(0, 3) * xi)
    assert np.allclose(np.linalg.norm(y, axis=0), 1, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 6))
def test_quantization_bound(seed, bits):
    ph = PhaseStack.random(2, 5, np.random.default_rng(seed))
    q = quantize_phases(ph, bits)
    err = np.abs(np.angle(q.thetas * np.conj(ph.thetas)))
    assert np.all(err <= np.pi / 2**bits + 1e-12)
    assert np.array_equal(quantize_phases(q, bits).thetas, q.thetas)


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(1e-3, 1e3))
def test_margin_homogeneity(seed, c):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    s = np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, 20)))
    assert np.allclose(safety_margin(c * y, s), c * safety_margin(y, s), rtol=1e-10, atol=1e-12)
