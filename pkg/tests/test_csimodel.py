import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iasim import csimodel, linkeval, precode
from iasim.netmodel import NetworkConfig, generate_channels
from iasim.numkit import ContractViolation


def _errors(true, report):
    return np.concatenate([(report.estimated_channels.get(i, l) - H).ravel() for i, l, H in true.links()])


def _big_network():
    # 4 * 4 * 25 * 25 = 10^4 coefficients per draw
    return NetworkConfig.symmetric(4, 25, 25, 1)


@pytest.mark.parametrize("fd,expected", [(0.0, 10**6), (0.00423, 100), (0.423, 1), (1e-4, 4230), (1e-2, 42)])
def test_coherence_length_examples(fd, expected):
    assert csimodel.coherence_length(fd) == expected


def test_coherence_length_errors_and_model():
    with pytest.raises(ContractViolation):
        csimodel.coherence_length(0.5)
    with pytest.raises(ContractViolation):
        csimodel.coherence_length(-1e-3)
    assert csimodel.CoherenceModel(0.0, max_length=500).block_length_symbols == 500
    assert csimodel.CoherenceModel(0.01, constant=1.0).block_length_symbols == 100


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0.0, 0.4999), b=st.floats(0.0, 0.4999))
def test_coherence_length_non_increasing(a, b):
    lo, hi = sorted((a, b))
    assert csimodel.coherence_length(hi) <= csimodel.coherence_length(lo)
    assert csimodel.coherence_length(hi) >= 1


def test_effective_throughput_examples():
    assert csimodel.effective_throughput(10.0, 0, 1000) == 10.0
    assert csimodel.effective_throughput(10.0, 100, 1000) == pytest.approx(9.0)
    assert csimodel.effective_throughput(10.0, 1000, 1000) == 0.0
    assert csimodel.effective_throughput(10.0, 5000, 1000) == 0.0
    with pytest.raises(ContractViolation):
        csimodel.effective_throughput(1.0, 0, 0)


@settings(max_examples=50, deadline=None)
@given(rate=st.floats(0, 100), oh=st.integers(0, 10**4), a=st.floats(0, 0.49), b=st.floats(0, 0.49))
def test_effective_throughput_non_increasing_in_doppler(rate, oh, a, b):
    lo, hi = sorted((a, b))
    e_lo = csimodel.effective_throughput(rate, oh, csimodel.coherence_length(lo))
    e_hi = csimodel.effective_throughput(rate, oh, csimodel.coherence_length(hi))
    assert e_hi <= e_lo


def test_analog_feedback_mse_10db():
    c = _big_network()
    errs = []
    for seed in range(10):
        true = generate_channels(c, seed=seed)
        errs.append(_errors(true, csimodel.apply_analog_feedback(true, 10.0, 10.0, seed=seed)))
    e = np.concatenate(errs)
    assert e.size >= 10**5
    assert np.mean(np.abs(e) ** 2) == pytest.approx(0.2, rel=0.05)


def test_analog_feedback_variance_halves_when_snrs_double():
    c = _big_network()
    true = generate_channels(c, seed=1)
    a = np.concatenate([_errors(true, csimodel.apply_analog_feedback(true, 5.0, 5.0, seed=s)) for s in range(10)])
    b = np.concatenate([_errors(true, csimodel.apply_analog_feedback(true, 10.0, 10.0, seed=s)) for s in range(10)])
    ratio = np.mean(np.abs(b) ** 2) / np.mean(np.abs(a) ** 2)
    assert ratio == pytest.approx(0.5, rel=0.05)


def test_analog_feedback_model_values():
    assert csimodel.analog_feedback_error_variance(10.0, 10.0) == pytest.approx(0.2)
    assert csimodel.analog_feedback_error_variance(np.inf, 8.0) == pytest.approx(
        2 * csimodel.analog_feedback_error_variance(np.inf, 16.0))
    assert csimodel.analog_feedback_error_variance(10.0, 10.0, training_reuse=4) == pytest.approx(0.05)
    with pytest.raises(ContractViolation):
        csimodel.analog_feedback_error_variance(0.0, 1.0)


def test_analog_feedback_noiseless_and_overhead():
    c = NetworkConfig.symmetric(5, 3, 3, 1)
    true = generate_channels(c, seed=0)
    rep = csimodel.apply_analog_feedback(true, np.inf, np.inf)
    assert rep.estimated_channels.array_equal(true)
    # 5 * (3 + 3) pilots + 25 links * 9 coefficients
    assert rep.overhead_symbols == 30 + 225 == csimodel.analog_feedback_overhead(c)
    assert rep.mechanism == "analog_feedback"
    assert csimodel.analog_feedback_overhead(c, training_reuse=2) == 2 * 255


def test_analog_feedback_overhead_partial_connectivity():
    mask = np.eye(3, dtype=bool)
    mask[0, 1] = True
    c = NetworkConfig(K=3, nt=2, nr=3, connectivity_mask=mask)
    assert csimodel.analog_feedback_overhead(c) == 3 * 5 + 4 * 6


def test_analog_feedback_deterministic():
    true = generate_channels(NetworkConfig.symmetric(3, 2, 2, 1), seed=3)
    a = csimodel.apply_analog_feedback(true, 10.0, 10.0, seed=9)
    b = csimodel.apply_analog_feedback(true, 10.0, 10.0, seed=9)
    assert a.estimated_channels.array_equal(b.estimated_channels)


def test_csi_report_invariants():
    ch = generate_channels(NetworkConfig.symmetric(2, 2, 2, 1), seed=0)
    with pytest.raises(ContractViolation):
        csimodel.CsiReport(ch, 0, "analog_feedback")
    with pytest.raises(ContractViolation):
        csimodel.CsiReport(ch, 10, "perfect")
    with pytest.raises(ContractViolation):
        csimodel.CsiReport(ch, 10, "quantized")
    assert csimodel.perfect_csi(ch).overhead_symbols == 0


def test_reciprocity_equals_min_leakage_bitwise():
    for seed in range(10):
        ch = generate_channels(NetworkConfig.symmetric(3, 2, 2, 1, snr_db=10), seed=seed)
        opts = precode.AlgoOptions(max_iters=80, tol=1e-300, seed=seed)
        F1, W1, t1 = precode.min_leakage(ch, opts)
        F2, W2, rep, t2 = csimodel.run_reciprocity_loop(ch, opts, pilot_cost_per_round=4, rounds=len(t1))
        assert t1 == t2
        assert all(np.array_equal(a, b) for a, b in zip(F1 + W1, F2 + W2))
        assert rep.overhead_symbols == 4 * len(t1) and rep.mechanism == "reciprocity"


def test_reciprocity_zero_rounds():
    ch = generate_channels(NetworkConfig.symmetric(3, 2, 2, 1), seed=2)
    opts = precode.AlgoOptions(seed=2)
    F, W, rep, trace = csimodel.run_reciprocity_loop(ch, opts, pilot_cost_per_round=6, rounds=0)
    assert all(np.array_equal(a, b) for a, b in zip(F, precode.random_precoders(ch.config, 2)))
    assert rep.overhead_symbols == 0 and rep.mechanism == "perfect" and trace == []


def test_reciprocity_converges_feasible():
    good = 0
    for seed in range(40):
        ch = generate_channels(NetworkConfig.symmetric(3, 2, 2, 1), seed=seed)
        F, W, _, _ = csimodel.run_reciprocity_loop(ch, precode.AlgoOptions(seed=seed), rounds=5000)
        good += linkeval.leakage(ch, F, W) <= 1e-6
    assert good >= 38


def test_reciprocity_noisy_pilots_degrade_gracefully():
    ch = generate_channels(NetworkConfig.symmetric(3, 2, 2, 1, snr_db=20), seed=5)
    opts = precode.AlgoOptions(seed=5)
    F, W, _, _ = csimodel.run_reciprocity_loop(ch, opts, rounds=100, pilot_snr=1e3)
    Fc, Wc, _, _ = csimodel.run_reciprocity_loop(ch, opts, rounds=100)
    noisy = linkeval.leakage(ch, F, W)
    assert linkeval.leakage(ch, Fc, Wc) < noisy
    assert noisy < linkeval.interference_power(ch, F)


def test_run_link_mechanisms():
    ch = generate_channels(NetworkConfig.symmetric(3, 2, 2, 1, snr_db=20), seed=1)
    opts = precode.AlgoOptions(max_iters=500, tol=1e-8, seed=1)
    perfect = csimodel.run_link(ch, "min_leakage", opts)
    assert perfect.overhead_symbols == 0 and perfect.leakage < 1e-3
    analog = csimodel.run_link(ch, "min_leakage", opts, csimodel.CsiSpec("analog_feedback"), seed=1)
    assert analog.overhead_symbols == csimodel.analog_feedback_overhead(ch.config)
    assert analog.sum_rate < perfect.sum_rate
    recip = csimodel.run_link(ch, "min_leakage", opts, csimodel.CsiSpec("reciprocity", rounds=30))
    assert recip.overhead_symbols == 30 * 6
    tdma = csimodel.run_link(ch, "tdma", opts, csimodel.CsiSpec("analog_feedback"))
    assert tdma.overhead_symbols == 0 and tdma.sum_rate == pytest.approx(precode.tdma_baseline(ch).sum_rate)
    with pytest.raises(ContractViolation):
        csimodel.run_link(ch, "max_sinr", opts, csimodel.CsiSpec("reciprocity"))
    with pytest.raises(ContractViolation):
        csimodel.CsiSpec("quantized")
