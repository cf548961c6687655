import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iasim import linkeval, precode
from iasim.netmodel import ChannelSet, NetworkConfig, generate_channels
from iasim.numkit import ContractViolation, NumericalFailureError, SingularMatrixError, projector_distance


def _net(K=3, nt=2, nr=2, d=1, snr_db=20, seed=0):
    return generate_channels(NetworkConfig.symmetric(K, nt, nr, d, snr_db=snr_db), seed=seed)


def _orthonormal(Ms, tol=1e-8):
    return all(np.abs(M.conj().T @ M - np.eye(M.shape[1])).max() <= tol for M in Ms)


def _zero_cross(ch):
    return ch.map(lambda i, l, h: h if i == l else np.zeros_like(h))


@pytest.mark.parametrize("K,nt,nr,d,expected", [
    (3, 2, 2, 1, "feasible"),
    (3, 2, 2, 2, "infeasible"),
    (5, 3, 3, 1, "feasible"),
    (1, 4, 4, 4, "feasible"),
    (6, 2, 5, 1, "feasible"),
    (7, 2, 5, 1, "infeasible"),
])
def test_check_feasibility(K, nt, nr, d, expected):
    assert precode.check_feasibility(NetworkConfig.symmetric(K, nt, nr, d)) == expected


def test_check_feasibility_unknown_cases():
    assert precode.check_feasibility(NetworkConfig(K=3, nt=[2, 2, 3], nr=2, d=1)) == "unknown"
    mask = np.ones((3, 3), dtype=bool)
    mask[0, 1] = False
    assert precode.check_feasibility(NetworkConfig(K=3, connectivity_mask=mask)) == "unknown"


def test_algo_options_validation():
    with pytest.raises(ContractViolation):
        precode.AlgoOptions(tol=0.0)
    with pytest.raises(ContractViolation):
        precode.AlgoOptions(max_iters=0)


def test_random_precoders_seeded_orthonormal():
    c = NetworkConfig.symmetric(3, 4, 4, 2)
    F = precode.random_precoders(c, 3)
    assert _orthonormal(F, 1e-12)
    assert all(np.array_equal(a, b) for a, b in zip(F, precode.random_precoders(c, 3)))
    assert not np.array_equal(F[0], precode.random_precoders(c, 4)[0])


# closed form ------------------------------------------------------------------------


def test_closed_form_post_condition_100_seeds():
    for seed in range(100):
        ch = _net(seed=seed)
        F, W = precode.closed_form_ia_3user(ch)
        for i in range(3):
            for l in range(3):
                M = W[i].conj().T @ ch.get(i, l) @ F[l]
                if l == i:
                    assert np.linalg.svd(M, compute_uv=False).min() > 0
                else:
                    assert np.linalg.norm(M) <= 1e-8
        assert _orthonormal(F) and _orthonormal(W)


def test_closed_form_diagonal_channels():
    rng = np.random.default_rng(3)
    H = [[np.diag(rng.uniform(0.5, 2.0, 2)) for _ in range(3)] for _ in range(3)]
    ch = ChannelSet(NetworkConfig.symmetric(3, 2, 2, 1), H)
    F, W = precode.closed_form_ia_3user(ch)
    assert linkeval.leakage(ch, F, W) <= 1e-16
    for f in F:
        assert np.isclose(np.abs(f).max(), 1.0)


def test_closed_form_d2():
    ch = _net(nt=4, nr=4, d=2, seed=1)
    F, W = precode.closed_form_ia_3user(ch)
    assert linkeval.leakage(ch, F, W) <= 1e-8


def test_closed_form_scale_invariant():
    ch = _net(seed=2)
    F1, _ = precode.closed_form_ia_3user(ch)
    F2, _ = precode.closed_form_ia_3user(ch.scaled(2.0))
    assert all(projector_distance(a, b) <= 1e-8 for a, b in zip(F1, F2))


def test_closed_form_errors():
    with pytest.raises(ContractViolation):
        precode.closed_form_ia_3user(_net(K=4))
    with pytest.raises(ContractViolation):
        precode.closed_form_ia_3user(_net(nt=3, nr=3))
    ch = _net(seed=0)
    singular = ch.map(lambda i, l, h: np.ones((2, 2), dtype=complex) if (i, l) == (1, 0) else h)
    with pytest.raises(SingularMatrixError):
        precode.closed_form_ia_3user(singular)


# min leakage -------------------------------------------------------------------------


def test_min_leakage_trace_monotone_every_seed():
    for seed in range(30):
        ch = _net(K=4, nt=3, nr=2, d=1, seed=seed)
        F, W, trace = precode.min_leakage(ch, precode.AlgoOptions(max_iters=300, tol=1e-12, seed=seed))
        assert np.all(np.diff(trace) <= 1e-12 * trace[0])
        assert _orthonormal(F) and _orthonormal(W)
        assert trace[-1] == pytest.approx(linkeval.leakage(ch, F, W), rel=1e-9, abs=1e-14)


def test_min_leakage_zero_cross_channels():
    ch = _zero_cross(_net())
    _, _, trace = precode.min_leakage(ch)
    assert trace == [0.0]


def test_min_leakage_stacked_matches_loop():
    # same iterates through the per-user loop and the batched path
    ch = _net(seed=4)
    F0 = precode.random_precoders(ch.config, 4)
    Fa, Wa, ta = precode._leakage_iterations(ch, F0, 40, 1e-300)
    Fb, Wb, tb = precode._leakage_iterations(ch, F0, 40, 1e-300, estimator=lambda *a: a[-1])
    assert np.allclose(ta, tb, rtol=1e-9)
    assert all(projector_distance(a, b) < 1e-8 for a, b in zip(Fa + Wa, Fb + Wb))


def test_min_leakage_asymmetric_network():
    c = NetworkConfig(K=3, nt=[2, 3, 2], nr=[3, 2, 2], d=1, tx_power=[10.0, 1.0, 5.0])
    ch = generate_channels(c, seed=8)
    F, W, trace = precode.min_leakage(ch, precode.AlgoOptions(max_iters=2000, tol=1e-14))
    assert np.all(np.diff(trace) <= 1e-12 * trace[0])
    assert trace[-1] <= 1e-6


def test_min_leakage_partial_connectivity():
    mask = np.ones((4, 4), dtype=bool)
    mask[0, 3] = mask[3, 0] = False
    ch = generate_channels(NetworkConfig(K=4, connectivity_mask=mask, tx_power=10.0), seed=3)
    F, W, trace = precode.min_leakage(ch, precode.AlgoOptions(max_iters=3000, tol=1e-14))
    assert np.all(np.diff(trace) <= 1e-12 * trace[0])
    assert trace[-1] == pytest.approx(linkeval.leakage(ch, F, W), rel=1e-9, abs=1e-14)


def test_min_leakage_and_closed_form_share_zero_leakage():
    for seed in range(10):
        ch = _net(snr_db=0, seed=seed)
        F, W = precode.closed_form_ia_3user(ch)
        _, _, trace = precode.min_leakage(ch, precode.AlgoOptions(max_iters=5000, tol=1e-14, seed=seed))
        assert linkeval.leakage(ch, F, W) <= 1e-6
        assert trace[-1] <= 1e-6


def test_min_leakage_scale_invariant():
    ch = _net(seed=6)
    opts = precode.AlgoOptions(max_iters=200, tol=1e-300, seed=1)
    F1, W1, _ = precode.min_leakage(ch, opts)
    F2, W2, _ = precode.min_leakage(ch.scaled(3.0), opts)
    assert all(projector_distance(a, b) <= 1e-6 for a, b in zip(F1 + W1, F2 + W2))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), K=st.integers(2, 4), n=st.integers(2, 4), snr=st.floats(-10, 40))
def test_min_leakage_monotone_property(seed, K, n, snr):
    ch = _net(K=K, nt=n, nr=n, d=1, snr_db=snr, seed=seed)
    _, _, trace = precode.min_leakage(ch, precode.AlgoOptions(max_iters=60, tol=1e-300, seed=seed))
    # roundoff floor once the leakage has collapsed to machine zero
    assert np.all(np.diff(trace) <= 1e-12 * max(trace[0], sum(ch.config.tx_power)))


# max-SINR ----------------------------------------------------------------------------


def test_max_sinr_single_user_dominant_singular_pair():
    ch = _net(K=1, nt=3, nr=4, d=1, snr_db=10, seed=2)
    F, W = precode.max_sinr(ch, precode.AlgoOptions(max_iters=500, tol=1e-14))
    U, s, Vh = np.linalg.svd(ch.get(0, 0))
    assert projector_distance(F[0], Vh[0].conj()[:, None]) <= 1e-6
    assert projector_distance(W[0], U[:, :1]) <= 1e-6


def test_max_sinr_orthonormal_and_better_than_random():
    for seed in range(5):
        ch = _net(snr_db=0, seed=seed)
        F, W = precode.max_sinr(ch, precode.AlgoOptions(seed=seed))
        assert _orthonormal(F) and _orthonormal(W)
        F0 = precode.random_precoders(ch.config, seed)
        assert linkeval.sum_rate(ch, F, W).sum_rate >= linkeval.sum_rate(ch, F0).sum_rate


def test_max_sinr_colored_noise_runs():
    ch = _net(seed=3, nt=2, nr=3)
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 3))
    N = [np.eye(3) + A @ A.T, None, np.eye(3)]
    F, W = precode.max_sinr(ch, precode.AlgoOptions(noise_cov=N))
    assert _orthonormal(W)


def test_max_sinr_close_to_min_leakage_at_high_snr():
    a = b = 0.0
    for seed in range(10):
        ch = _net(snr_db=40, seed=seed)
        F, W = precode.max_sinr(ch, precode.AlgoOptions(seed=seed, tol=1e-8))
        a += linkeval.sum_rate(ch, F, W).sum_rate
        F, W, _ = precode.min_leakage(ch, precode.AlgoOptions(seed=seed, max_iters=5000, tol=1e-8))
        b += linkeval.sum_rate(ch, F, W).sum_rate
    assert abs(a - b) / b <= 0.05


# WMMSE -------------------------------------------------------------------------------


@pytest.mark.parametrize("nt,nr,d,snr", [(2, 2, 1, 0), (3, 2, 2, 10), (4, 4, 4, 20), (2, 4, 2, -5)])
def test_wmmse_single_user_is_waterfilling(nt, nr, d, snr):
    ch = _net(K=1, nt=nt, nr=nr, d=d, snr_db=snr, seed=nt + nr)
    V, W, trace = precode.wmmse_sum_rate(ch, precode.AlgoOptions(max_iters=3000, tol=1e-13))
    cap, _ = precode.waterfill(ch.get(0, 0), ch.config.tx_power[0], 1.0)
    assert abs(trace[-1] - cap) <= 1e-6


def test_wmmse_decoupled_pair():
    ch = _zero_cross(_net(K=2, nt=3, nr=3, d=3, snr_db=10, seed=1))
    _, _, trace = precode.wmmse_sum_rate(ch, precode.AlgoOptions(max_iters=3000, tol=1e-13))
    caps = [precode.waterfill(ch.get(i, i), ch.config.tx_power[i], 1.0)[0] for i in range(2)]
    assert abs(trace[-1] - sum(caps)) <= 1e-6


def test_wmmse_monotone_and_power_feasible():
    for seed in range(10):
        ch = _net(K=3, nt=3, nr=2, d=1, snr_db=15, seed=seed)
        V, W, trace = precode.wmmse_sum_rate(ch, precode.AlgoOptions(max_iters=200, seed=seed))
        assert np.all(np.diff(trace) >= -1e-9)
        assert np.all(precode.transmit_powers(V) <= np.array(ch.config.tx_power) * (1 + 1e-9))
        assert _orthonormal(W)
        assert trace[-1] == pytest.approx(linkeval.sum_rate(ch, V, power_loaded=True).sum_rate, rel=1e-12)


def test_wmmse_bisection_failure():
    A = np.zeros((2, 2), dtype=complex)
    with pytest.raises(NumericalFailureError):
        precode._power_bisection(A, 1e6 * np.ones((2, 1), dtype=complex), 1.0, max_doublings=3)
    with pytest.raises(NumericalFailureError):
        precode._power_bisection(A, np.full((2, 1), np.nan, dtype=complex), 1.0)


def test_power_bisection_meets_budget():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((3, 3))
    A = X @ X.T * 1e-3
    b = rng.standard_normal((3, 2)).astype(complex)
    mu = precode._power_bisection(A, b, 2.0)
    V = np.linalg.solve(A + mu * np.eye(3), b)
    assert np.vdot(V, V).real == pytest.approx(2.0, rel=1e-8)


# TDMA --------------------------------------------------------------------------------


def test_waterfill_known_values():
    cap, Q = precode.waterfill(np.eye(2), 2.0, 1.0)
    assert cap == pytest.approx(2.0)
    assert np.allclose(Q, np.eye(2))
    # weak mode gets no power
    cap, Q = precode.waterfill(np.diag([10.0, 0.1]), 1.0, 1.0)
    assert cap == pytest.approx(np.log2(101.0))
    assert np.trace(Q).real == pytest.approx(1.0)


def test_waterfill_beats_equal_power():
    rng = np.random.default_rng(5)
    for _ in range(50):
        H = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        cap, Q = precode.waterfill(H, 5.0, 1.0)
        equal = np.linalg.slogdet(np.eye(3) + 2.5 * H @ H.conj().T)[1] / np.log(2)
        assert cap >= equal - 1e-9
        assert np.trace(Q).real == pytest.approx(5.0)


def test_tdma_baseline():
    ch = _net(K=1, nt=2, nr=3, snr_db=10, seed=3)
    assert precode.tdma_baseline(ch).sum_rate == pytest.approx(precode.waterfill(ch.get(0, 0), 10.0, 1.0)[0])
    H = np.random.default_rng(0).standard_normal((2, 2)).astype(complex)
    pair = ChannelSet(NetworkConfig.symmetric(2, 2, 2, 1, snr_db=10), [[H, H], [H, H]])
    sched = precode.tdma_baseline(pair)
    solo = precode.waterfill(H, 10.0, 1.0)[0]
    assert np.allclose(sched.per_user_rate, solo / 2)
    assert sched.sum_rate == pytest.approx(solo)
