"""Precoder/combiner design for the MIMO interference channel.

All functions take a :class:`~iasim.netmodel.ChannelSet` and return plain
lists of numpy arrays, one per user: ``F[i]`` is ``nt[i] x d[i]`` and
``W[i]`` is ``nr[i] x d[i]``. Unless stated otherwise both have
orthonormal columns and each stream is sent with power ``tx_power[i]/d[i]``.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import linkeval
from .numkit import (
    COND_LIMIT,
    ContractViolation,
    NumericalFailureError,
    SingularMatrixError,
    eig_general,
    hermitian_eig,
    orthonormalize,
    solve,
    svd,
)

__all__ = [
    "AlgoOptions",
    "TdmaSchedule",
    "check_feasibility",
    "random_precoders",
    "closed_form_ia_3user",
    "min_leakage",
    "max_sinr",
    "wmmse_sum_rate",
    "waterfill",
    "tdma_baseline",
    "transmit_powers",
    "ALGORITHMS",
]

ALGORITHMS = ("closed_form_ia", "min_leakage", "max_sinr", "wmmse", "tdma")


@dataclass
class AlgoOptions:
    max_iters: int = 1000
    tol: float = 1e-10
    seed: int = 0
    noise_cov: Optional[list] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ContractViolation("max_iters must be >= 1")
        if not self.tol > 0:
            raise ContractViolation("tol must be positive")
        if self.noise_cov is not None:
            for i, N in enumerate(self.noise_cov):
                if N is None:
                    continue
                w = np.linalg.eigvalsh(0.5 * (N + np.conj(N).T))
                if w[0] < -1e-10 * max(1.0, abs(w[-1])):
                    raise ContractViolation(f"noise_cov[{i}] is not positive semidefinite")


def check_feasibility(config):
    """Proper-system test ``d <= (nt + nr) / (K + 1)``.

    Returns ``"feasible"``, ``"infeasible"``, or ``"unknown"`` when the
    system is not symmetric and fully connected.
    """
    if not (config.is_symmetric and config.fully_connected):
        return "unknown"
    if config.K == 1:
        return "feasible"
    nt, nr, d = config.nt[0], config.nr[0], config.d[0]
    return "feasible" if d * (config.K + 1) <= nt + nr else "infeasible"


def random_precoders(config, seed, side="tx"):
    """Seeded Gaussian matrices orthonormalized per user."""
    dims = config.nt if side == "tx" else config.nr
    key = 0 if side == "tx" else 1
    out = []
    for i in range(config.K):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(0x1A, key, i))))
        G = rng.standard_normal((dims[i], config.d[i])) + 1j * rng.standard_normal((dims[i], config.d[i]))
        out.append(orthonormalize(G, config.d[i]))
    return out


def transmit_powers(F):
    return np.array([float(np.vdot(f, f).real) for f in F])


def _least_eigvecs(Q, d):
    _, V = hermitian_eig(0.5 * (Q + Q.conj().T))
    return V[:, :d]


# ---------------------------------------------------------------------------
# closed form


def closed_form_ia_3user(channels):
    """Closed-form alignment for three users with ``nt = nr = 2d``.

    Precoder 0 spans an invariant subspace of the round-trip map obtained
    by chaining the three pairwise alignment conditions; precoders 1 and 2
    follow from those conditions and the combiners reject the (aligned)
    interference subspace.
    """
    c = channels.config
    if c.K != 3 or not c.fully_connected:
        raise ContractViolation("closed form needs K=3 with full connectivity")
    for i in range(3):
        if not (c.nt[i] == c.nr[i] == 2 * c.d[i]) or c.d[i] != c.d[0]:
            raise ContractViolation("closed form needs nt = nr = 2d with equal d for every user")
    H = channels.get
    d = c.d[0]
    for i, l, h in channels.links():
        if i != l:
            sv = np.linalg.svd(h, compute_uv=False)
            if sv[-1] == 0 or sv[0] / sv[-1] >= COND_LIMIT:
                raise SingularMatrixError(f"cross channel ({i}, {l}) is singular or ill-conditioned")
    # span(F0) = span(E F0), E = H20^-1 H21 H01^-1 H02 H12^-1 H10
    E = solve(H(2, 0), H(2, 1) @ solve(H(0, 1), H(0, 2) @ solve(H(1, 2), H(1, 0))))
    _, V = eig_general(E)
    F0 = orthonormalize(V, d)
    F1 = orthonormalize(solve(H(2, 1), H(2, 0) @ F0), d)
    F2 = orthonormalize(solve(H(1, 2), H(1, 0) @ F0), d)
    F = [F0, F1, F2]
    W = [_least_eigvecs(_interference_covariance(channels, F, i), d) for i in range(3)]
    return F, W


# ---------------------------------------------------------------------------
# leakage minimization


def _interference_covariance(channels, F, i, blocks=None):
    """``sum_{l != i} (p_l/d_l) H_il F_l F_l^* H_il^*`` at receiver ``i``.

    ``blocks`` optionally maps ``l`` to an already-estimated ``H_il F_l``.
    """
    c = channels.config
    Q = np.zeros((c.nr[i], c.nr[i]), dtype=complex)
    for l, H in channels.cross_links(i):
        B = H @ F[l] if blocks is None else blocks[l]
        Q += (c.tx_power[l] / c.d[l]) * (B @ B.conj().T)
    return Q


def _leakage_iterations(channels, F, max_iters, tol, estimator=None, stop_early=True):
    """Alternating least-interference subspace selection.

    The forward step picks each combiner as the ``d`` least-dominant
    eigenvectors of its interference covariance. The reverse step does the
    same on the reciprocal network, where every receiver sends pilots along
    its combiner with unit power per stream, which makes both steps exact
    minimizers of the same leakage and the trace non-increasing.

    ``estimator(direction, i, blocks)`` may perturb the effective channels
    each node observes (over-the-air training); ``None`` means exact.
    """
    c = channels.config
    if estimator is None and _uniform_shapes(c):
        return _leakage_iterations_stacked(channels, F, max_iters, tol, stop_early)
    rev = channels.reciprocal()
    rev_unit = rev.with_config(_unit_power(rev.config))
    F = list(F)
    W = None
    trace = []
    for _ in range(max_iters):
        W = []
        for i in range(c.K):
            blocks = None
            if estimator is not None:
                blocks = estimator("forward", i, {l: H @ F[l] for l, H in channels.cross_links(i)})
            W.append(_least_eigvecs(_interference_covariance(channels, F, i, blocks), c.d[i]))
        F = []
        for l in range(c.K):
            blocks = None
            if estimator is not None:
                blocks = estimator("reverse", l, {i: H @ W[i] for i, H in rev_unit.cross_links(l)})
            F.append(_least_eigvecs(_interference_covariance(rev_unit, W, l, blocks), c.d[l]))
        trace.append(linkeval.leakage(channels, F, W))
        if stop_early and (trace[-1] == 0.0 or (len(trace) > 1 and abs(trace[-2] - trace[-1]) <= tol)):
            break
    return F, W, trace


def _uniform_shapes(config):
    return len(set(config.nt)) == 1 and len(set(config.nr)) == 1 and len(set(config.d)) == 1


def stack_channels(channels):
    """``(K, K, nr, nt)`` array of all links, zeros where masked out."""
    c = channels.config
    Hs = np.zeros((c.K, c.K, c.nr[0], c.nt[0]), dtype=complex)
    for i, l, H in channels.links():
        Hs[i, l] = H
    return Hs


def _stacked_least_eigvecs(Q, d):
    _, V = np.linalg.eigh(0.5 * (Q + np.conj(np.swapaxes(Q, -1, -2))))
    V = V[..., :d]
    idx = np.argmax(np.abs(V), axis=-2)
    piv = np.take_along_axis(V, idx[..., None, :], axis=-2)
    mag = np.abs(piv)
    phase = np.where(mag > 0, piv / np.where(mag > 0, mag, 1.0), 1.0)
    return V * np.conj(phase)


def _leakage_iterations_stacked(channels, F, max_iters, tol, stop_early):
    """Same iteration as :func:`_leakage_iterations`, batched over users."""
    c = channels.config
    K, d = c.K, c.d[0]
    Hs = stack_channels(channels)
    Hs[np.arange(K), np.arange(K)] = 0.0
    Hr = np.conj(np.swapaxes(Hs, -1, -2)).transpose(1, 0, 2, 3)
    w = (np.asarray(c.tx_power) / d)[None, :, None, None]
    Fs = np.stack(F)
    trace = []
    Ws = None
    for _ in range(max_iters):
        B = np.einsum("ilrt,ltd->ilrd", Hs, Fs) * np.sqrt(w)
        Q = np.einsum("ilrd,ilsd->irs", B, B.conj())
        Ws = _stacked_least_eigvecs(Q, d)
        C = np.einsum("litr,ird->litd", Hr, Ws)
        Q = np.einsum("lird,lisd->lrs", C, C.conj())
        Fs = _stacked_least_eigvecs(Q, d)
        M = np.einsum("ird,ilrt,ltk->ildk", Ws.conj(), Hs, Fs)
        trace.append(float(np.sum(w[..., 0, 0][..., None, None] * np.abs(M) ** 2)))
        if stop_early and (trace[-1] == 0.0 or (len(trace) > 1 and abs(trace[-2] - trace[-1]) <= tol)):
            break
    return list(Fs), list(Ws), trace


def _unit_power(config):
    return replace(config, tx_power=[float(x) for x in config.d])


def min_leakage(channels, opts=None, F0=None):
    """Distributed leakage-minimizing alignment.

    Returns
    -------
    F, W : list of ndarray
        Orthonormal precoders and combiners.
    leakage_trace : list of float
        Leakage after each iteration; non-increasing.
    """
    opts = opts or AlgoOptions()
    if F0 is None:
        F0 = random_precoders(channels.config, opts.seed)
    return _leakage_iterations(channels, F0, opts.max_iters, opts.tol)


# ---------------------------------------------------------------------------
# Max-SINR


def _noise(config, opts, i):
    if opts.noise_cov is not None and opts.noise_cov[i] is not None:
        return np.asarray(opts.noise_cov[i], dtype=complex)
    return config.noise_var * np.eye(config.nr[i], dtype=complex)


def _sinr_step(channels, F, N):
    """One per-stream max-SINR receive update for every receiver.

    Returns unit-norm combiners and the stream SINRs they achieve.
    """
    c = channels.config
    W, sinrs = [], []
    for i in range(c.K):
        total = N[i].copy()
        for l in range(c.K):
            if channels.H[i][l] is None:
                continue
            B = channels.H[i][l] @ F[l]
            total += (c.tx_power[l] / c.d[l]) * (B @ B.conj().T)
        Hd = channels.get(i, i) @ F[i]
        p = c.tx_power[i] / c.d[i]
        Wi = np.zeros((c.nr[i], c.d[i]), dtype=complex)
        s_i = np.zeros(c.d[i])
        for s in range(c.d[i]):
            h = Hd[:, s:s + 1]
            B = total - p * (h @ h.conj().T)
            u = solve(B, h)
            nrm = np.linalg.norm(u)
            u = u / nrm if nrm > 0 else u
            Wi[:, s:s + 1] = u
            s_i[s] = p * abs((u.conj().T @ h).item()) ** 2 / max((u.conj().T @ B @ u).real.item(), 1e-300)
        W.append(Wi)
        sinrs.append(s_i)
    return W, sinrs


def max_sinr(channels, opts=None, F0=None):
    """Per-stream Max-SINR transceiver iteration.

    Forward and reverse steps use the same rule on the network and on its
    reciprocal. Colored ``noise_cov`` applies only to the forward receivers;
    the reverse link sees white noise. Iteration stops when the largest
    relative change of any stream SINR drops to ``opts.tol`` or after
    ``opts.max_iters`` rounds. Outputs are orthonormalized.
    """
    opts = opts or AlgoOptions()
    c = channels.config
    F = F0 if F0 is not None else random_precoders(c, opts.seed)
    rev = channels.reciprocal()
    N_fwd = [_noise(c, opts, i) for i in range(c.K)]
    N_rev = [c.noise_var * np.eye(c.nt[i], dtype=complex) for i in range(c.K)]
    # the reverse link transmits with the forward users' power budgets
    rev = rev.with_config(_with_power(rev.config, c.tx_power))
    prev = None
    n_iter = 0
    for n_iter in range(1, opts.max_iters + 1):
        W, sinrs = _sinr_step(channels, F, N_fwd)
        F, _ = _sinr_step(rev, W, N_rev)
        flat = np.concatenate(sinrs)
        if prev is not None and np.max(np.abs(flat - prev) / np.maximum(1.0, np.abs(prev))) <= opts.tol:
            break
        prev = flat
    W, _ = _sinr_step(channels, F, N_fwd)
    F = [orthonormalize(f, f.shape[1]) for f in F]
    W = [orthonormalize(w, w.shape[1]) for w in W]
    return F, W


def _with_power(config, powers):
    return replace(config, tx_power=list(powers))


# ---------------------------------------------------------------------------
# WMMSE


def _power_bisection(A, b, P, max_doublings=200):
    """Smallest ``mu >= 0`` with ``||(A + mu I)^-1 b||_F^2 <= P``."""
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise NumericalFailureError("non-finite input to the power-constraint search")
    lam, Q = np.linalg.eigh(0.5 * (A + A.conj().T))
    lam = np.clip(lam, 0.0, None)
    phi = np.sum(np.abs(Q.conj().T @ b) ** 2, axis=1)

    def power(mu):
        den = lam + mu
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(phi > 0, phi / den ** 2, 0.0)
        return float(np.sum(terms))

    if lam[0] > 1e-12 * max(1.0, lam[-1]) and power(0.0) <= P:
        return 0.0
    hi = 1.0
    for _ in range(max_doublings):
        if power(hi) <= P:
            break
        hi *= 2.0
    else:
        raise NumericalFailureError("could not bracket the power-constraint multiplier")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if power(mid) <= P:
            hi = mid
        else:
            lo = mid
    return hi


def wmmse_sum_rate(channels, opts=None, V0=None):
    """Weighted-MMSE sum-rate maximization.

    Precoders returned here carry their power (``||V_i||_F^2 <= tx_power[i]``,
    see :func:`transmit_powers`); combiners are the MMSE receivers,
    orthonormalized (this leaves the achievable rate unchanged).

    Returns
    -------
    V, W : list of ndarray
    rate_trace : list of float
        Sum rate (bits/s/Hz) after each iteration, non-decreasing.
    """
    opts = opts or AlgoOptions()
    c = channels.config
    if V0 is None:
        V0 = [np.sqrt(c.tx_power[i] / c.d[i]) * f for i, f in enumerate(random_precoders(c, opts.seed))]
    V = list(V0)
    N = [_noise(c, opts, i) for i in range(c.K)]
    trace = []
    U = None
    for _ in range(opts.max_iters):
        U, Wt = [], []
        for k in range(c.K):
            J = N[k].copy()
            for l in range(c.K):
                if channels.H[k][l] is not None:
                    B = channels.H[k][l] @ V[l]
                    J += B @ B.conj().T
            Hv = channels.get(k, k) @ V[k]
            Uk = solve(J, Hv)
            E = np.eye(c.d[k]) - Hv.conj().T @ Uk
            E = 0.5 * (E + E.conj().T)
            U.append(Uk)
            Wt.append(solve(E, np.eye(c.d[k])))
        V = []
        for k in range(c.K):
            A = np.zeros((c.nt[k], c.nt[k]), dtype=complex)
            for j in range(c.K):
                if channels.H[j][k] is not None:
                    G = channels.H[j][k].conj().T @ U[j]
                    A += G @ Wt[j] @ G.conj().T
            b = channels.get(k, k).conj().T @ U[k] @ Wt[k]
            if c.tx_power[k] == 0:
                V.append(np.zeros((c.nt[k], c.d[k]), dtype=complex))
                continue
            mu = _power_bisection(A, b, c.tx_power[k])
            V.append(np.linalg.solve(A + mu * np.eye(c.nt[k]), b))
        rate = linkeval.sum_rate(channels, V, noise_cov=opts.noise_cov, power_loaded=True).sum_rate
        trace.append(rate)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= opts.tol:
            break
    W = []
    for k in range(c.K):
        J = N[k].copy()
        for l in range(c.K):
            if channels.H[k][l] is not None:
                B = channels.H[k][l] @ V[l]
                J += B @ B.conj().T
        Uk = solve(J, channels.get(k, k) @ V[k])
        W.append(orthonormalize(Uk, c.d[k]) if np.linalg.matrix_rank(Uk) == c.d[k] else _complete(Uk, c.d[k]))
    return V, W, trace


def _complete(U, d):
    """Orthonormal d-column basis containing span(U) when U is rank deficient."""
    Uu, s, _ = svd(U)
    return Uu[:, :d]


# ---------------------------------------------------------------------------
# TDMA


def waterfill(H, power, noise_var):
    """Single-user MIMO capacity by waterfilling over the channel eigenmodes.

    Returns
    -------
    capacity : float
        bits/s/Hz.
    Q : ndarray
        Optimal transmit covariance.
    """
    H = np.asarray(H, dtype=complex)
    _, s, V = svd(H)
    gains = s ** 2 / noise_var
    gains = gains[gains > 1e-14 * max(gains.max(initial=0.0), 1e-300)] if gains.size else gains
    n = gains.size
    alloc = np.zeros(n)
    for m in range(n, 0, -1):
        level = (power + np.sum(1.0 / gains[:m])) / m
        p = level - 1.0 / gains[:m]
        if p[-1] > 0:
            alloc[:m] = p
            break
    capacity = float(np.sum(np.log2(1.0 + alloc * gains)))
    Vn = V[:, :n]
    return capacity, (Vn * alloc) @ Vn.conj().T


@dataclass
class TdmaSchedule:
    slots: list
    per_user_rate: np.ndarray
    sum_rate: float
    covariances: list = field(default_factory=list)


def tdma_baseline(channels):
    """Round-robin single-user transmission, one equal-length slot per user."""
    c = channels.config
    rates, covs = [], []
    for i in range(c.K):
        cap, Q = waterfill(channels.get(i, i), c.tx_power[i], c.noise_var)
        rates.append(cap / c.K)
        covs.append(Q)
    rates = np.array(rates)
    return TdmaSchedule(slots=list(range(c.K)), per_user_rate=rates, sum_rate=float(rates.sum()), covariances=covs)
