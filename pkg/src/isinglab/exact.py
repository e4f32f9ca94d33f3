"""Brute-force ground truth for small instances.

Enumerates the full Gibbs distribution over the free (unclamped) vertices,
builds the single-site transition matrix, and extracts spectra, relaxation
times and exact total-variation mixing times.  Everything here is the oracle
that the sampling and certification modules are tested against.

State encoding: state ``s`` assigns free vertex ``free[b]`` spin +1 when bit
``b`` of ``s`` is set, else -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import SizeCapError
from .graphs import CLAMP_FREE, CLAMP_MINUS, CLAMP_PLUS, IsingInstance, build_instance

ENUM_CAP = 16      # free vertices for distribution enumeration
MATRIX_CAP = 12    # free vertices for the dense transition matrix
TV_TARGET = 1.0 / (2.0 * math.e)

__all__ = [
    "ExactDistribution",
    "TransitionSpectrum",
    "enumerate_gibbs",
    "conditional_marginal",
    "with_conditioning",
    "transition_matrix",
    "exact_mixing_time",
    "continuous_mixing_time",
    "worst_start_tv",
    "dirichlet_check",
    "ENUM_CAP",
    "MATRIX_CAP",
    "TV_TARGET",
]


@dataclass(frozen=True)
class ExactDistribution:
    """Full Gibbs distribution over the free vertices of an instance."""

    instance: IsingInstance
    free: np.ndarray               # free vertex ids, ascending
    probabilities: np.ndarray      # length 2^k, sums to 1
    log_probabilities: np.ndarray  # exact in log scale even when p underflows
    log_z: float

    @property
    def k(self) -> int:
        return len(self.free)

    def spin_matrix(self) -> np.ndarray:
        """(2^k, k) matrix of +-1 spins, column b = free vertex free[b]."""
        states = np.arange(self.probabilities.shape[0], dtype=np.int64)
        bits = (states[:, None] >> np.arange(self.k)[None, :]) & 1
        return (2 * bits - 1).astype(np.int8)

    def marginals(self) -> np.ndarray:
        """P(sigma_v = +) for each free vertex, in ``free`` order."""
        spins = self.spin_matrix()
        return self.probabilities @ (spins > 0)

    def marginal_of(self, v: int) -> float:
        if self.instance.clamp[v] == CLAMP_PLUS:
            return 1.0
        if self.instance.clamp[v] == CLAMP_MINUS:
            return 0.0
        b = int(np.searchsorted(self.free, v))
        states = np.arange(self.probabilities.shape[0], dtype=np.int64)
        mask = (states >> b) & 1
        return float(self.probabilities @ mask)


def _free_system(instance: IsingInstance):
    """Free vertex list, effective fields, and free-free edges (i, j, beta)."""
    free = instance.free_vertices
    pos = {int(v): i for i, v in enumerate(free)}
    h_eff = np.array([instance.effective_field(int(v)) for v in free])
    edges = []
    g = instance.graph
    for u in free:
        for t, w in enumerate(g.neighbors(int(u))):
            w = int(w)
            if w > u and w in pos:
                edges.append((pos[int(u)], pos[w],
                              float(instance.weights[g.indptr[int(u)] + t])))
    return free, h_eff, edges


def enumerate_gibbs(instance: IsingInstance, cap: int = ENUM_CAP) -> ExactDistribution:
    """P(sigma) ~ exp(H(sigma)) over the 2^k free-vertex configurations.

    Normalization goes through log-sum-exp so large fields and couplings
    stay finite.  log_z includes constant edge terms between clamped
    vertices but not the infinite clamp fields themselves.
    """
    free, h_eff, edges = _free_system(instance)
    k = len(free)
    if k > cap:
        raise SizeCapError(f"{k} free vertices exceeds enumeration cap {cap}")
    states = np.arange(1 << k, dtype=np.int64)
    spins = (2 * ((states[:, None] >> np.arange(k)[None, :]) & 1) - 1).astype(np.float64)
    logw = spins @ h_eff if k else np.zeros(1)
    for i, j, b in edges:
        logw = logw + b * spins[:, i] * spins[:, j]
    # constant contribution of clamped-clamped edges
    const = 0.0
    g = instance.graph
    for u in range(instance.n):
        if instance.clamp[u] == CLAMP_FREE:
            continue
        for t, w in enumerate(g.neighbors(u)):
            w = int(w)
            if w > u and instance.clamp[w] != CLAMP_FREE:
                const += float(instance.weights[g.indptr[u] + t]) \
                    * int(instance.clamp[u]) * int(instance.clamp[w])
    logw = logw + const
    log_z = float(logsumexp(logw))
    logp = logw - log_z
    return ExactDistribution(instance=instance, free=free,
                             probabilities=np.exp(logp),
                             log_probabilities=logp, log_z=log_z)


def with_conditioning(instance: IsingInstance, assignment: dict) -> IsingInstance:
    """New instance with the given vertices frozen to +-1 spins."""
    for v, s in assignment.items():
        c = int(instance.clamp[v])
        if c != CLAMP_FREE and c != s:
            raise ValueError(f"conditioning sigma_{v}={s} contradicts clamp {c}: "
                             "event has probability zero")
    edges = [(u, v, instance.coupling(u, v)) for u, v in instance.graph.edges()]
    fields = []
    for v in range(instance.n):
        if v in assignment:
            fields.append((v, math.inf if assignment[v] > 0 else -math.inf))
        elif instance.clamp[v] != CLAMP_FREE:
            fields.append((v, math.inf if instance.clamp[v] > 0 else -math.inf))
        elif instance.h[v] != 0.0:
            fields.append((v, float(instance.h[v])))
    return build_instance(edges, fields, n=instance.n)


def conditional_marginal(instance: IsingInstance, v: int, lam=(), eta=(),
                         cap: int = ENUM_CAP) -> float:
    """Exact P(sigma_v = + | sigma_Lambda = eta) under the Gibbs distribution.

    ``lam`` and ``eta`` are parallel sequences of vertices and +-1 spins;
    empty means the unconditional marginal.
    """
    lam = list(lam)
    if v in lam:
        raise ValueError("conditioned vertex cannot be the target")
    assignment = {int(u): int(s) for u, s in zip(lam, eta)}
    if len(assignment) != len(lam):
        raise ValueError("duplicate vertices in conditioning set")
    cond = with_conditioning(instance, assignment) if assignment else instance
    return enumerate_gibbs(cond, cap=cap).marginal_of(v)


# ---------------------------------------------------------------------------
# Transition matrix and spectrum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionSpectrum:
    """Spectrum of the single-site uniform-vertex update chain.

    The chain picks one of the instance's n vertices uniformly; picking a
    clamped vertex resamples it to its clamp, a no-op on the free state, so
    clamps contribute lazy mass (n-k)/n on the diagonal.
    """

    matrix: np.ndarray        # row-stochastic, 2^k x 2^k
    eigenvalues: np.ndarray   # descending, lambda_1 = 1
    eigenvectors: np.ndarray  # columns, of the symmetrized kernel
    n_vertices: int
    k_free: int

    @property
    def gap(self) -> float:
        lam = self.eigenvalues
        return float(min(1.0 - lam[1], 1.0 - abs(lam[-1])))

    @property
    def relaxation_time(self) -> float:
        return 1.0 / self.gap

    @property
    def continuous_gap(self) -> float:
        """Gap of the rate-1-per-site continuous generator, n (1 - lambda_2)."""
        return self.n_vertices * (1.0 - float(self.eigenvalues[1]))


def transition_matrix(instance: IsingInstance, cap: int = MATRIX_CAP,
                      distribution: ExactDistribution | None = None) -> TransitionSpectrum:
    """Dense heat-bath transition matrix with verified reversibility."""
    free, h_eff, edges = _free_system(instance)
    k = len(free)
    if k > cap:
        raise SizeCapError(f"{k} free vertices exceeds matrix cap {cap}")
    if k == 0:
        raise ValueError("no free vertices: the chain has a single state")
    n = instance.n
    m = 1 << k
    states = np.arange(m, dtype=np.int64)
    spins = (2 * ((states[:, None] >> np.arange(k)[None, :]) & 1) - 1).astype(np.float64)

    nbrs = [[] for _ in range(k)]
    for i, j, b in edges:
        nbrs[i].append((j, b))
        nbrs[j].append((i, b))

    P = np.zeros((m, m))
    P[states, states] += (n - k) / n
    for b in range(k):
        local = h_eff[b] + sum(bb * spins[:, j] for j, bb in nbrs[b]) \
            if nbrs[b] else np.full(m, h_eff[b])
        z = np.exp(-2.0 * np.abs(local))  # in [0, 1]: never overflows
        p_plus = np.where(local >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
        up = states | (1 << b)
        down = states & ~(1 << b)
        np.add.at(P, (states, up), p_plus / n)
        np.add.at(P, (states, down), (1.0 - p_plus) / n)

    dist = distribution if distribution is not None else enumerate_gibbs(instance, cap=max(cap, ENUM_CAP))
    pi = dist.probabilities
    assert np.max(np.abs(pi @ P - pi)) < 1e-10, "stationarity check failed"
    Q = pi[:, None] * P
    assert np.max(np.abs(Q - Q.T)) < 1e-12, "detailed balance check failed"

    # under detailed balance sqrt(P_ij P_ji) equals the pi-symmetrized kernel
    # D^(1/2) P D^(-1/2) but needs no division, so huge fields cannot
    # underflow it
    sym = np.sqrt(P * P.T)
    lam, vecs = np.linalg.eigh(sym)
    order = np.argsort(lam)[::-1]
    return TransitionSpectrum(matrix=P, eigenvalues=lam[order],
                              eigenvectors=vecs[:, order],
                              n_vertices=n, k_free=k)


class _TvEvaluator:
    """Worst-start TV at arbitrary times, with two numerical routes.

    When every stationary probability is comfortably inside float range the
    kernel power is reconstructed from the symmetrized spectrum (one matmul
    per probe).  Otherwise the pi^(1/2) conjugation would mix overflowing
    and vanishing factors, so the evaluator falls back to plain matrix
    powering (discrete) and uniformization plus repeated squaring
    (continuous); both only combine nonnegative terms and stay stable.
    """

    def __init__(self, spectrum: TransitionSpectrum, distribution: ExactDistribution):
        self.spectrum = spectrum
        self.pi = distribution.probabilities
        self.fast = bool(distribution.log_probabilities.min() > -500.0)
        if self.fast:
            self._sq = np.sqrt(self.pi)
        self._pow2 = [spectrum.matrix]  # P^(2^j) cache for the slow route

    def _tv_of_rows(self, rows) -> float:
        return float(0.5 * np.max(np.abs(rows - self.pi[None, :]).sum(axis=1)))

    def _spectral_rows(self, mode_weights):
        u = self.spectrum.eigenvectors
        core = (u * mode_weights[None, :]) @ u.T
        return (core / self._sq[:, None]) * self._sq[None, :]

    def _power(self, t: int):
        j = 0
        acc = None
        while t:
            if j >= len(self._pow2):
                prev = self._pow2[-1]
                self._pow2.append(prev @ prev)
            if t & 1:
                acc = self._pow2[j] if acc is None else acc @ self._pow2[j]
            t >>= 1
            j += 1
        return np.eye(len(self.pi)) if acc is None else acc

    def _semigroup(self, tau: float):
        """exp(tau (P - I)) by uniformization and repeated squaring."""
        p = self.spectrum.matrix
        k = max(0, int(math.ceil(math.log2(max(tau, 1e-12) / 0.5))))
        dt = tau / (1 << k)
        term = np.eye(len(self.pi))
        acc = term.copy()
        for j in range(1, 40):
            term = (term @ p) * (dt / j)
            acc += term
            if float(np.abs(term).max()) < 1e-18:
                break
        acc *= math.exp(-dt)
        for _ in range(k):
            acc = acc @ acc
        return acc

    def discrete(self, t: int) -> float:
        t = int(t)
        if self.fast:
            return self._tv_of_rows(self._spectral_rows(self.spectrum.eigenvalues ** t))
        return self._tv_of_rows(self._power(t))

    def continuous(self, t: float) -> float:
        if self.fast:
            w = np.exp(self.spectrum.n_vertices * t * (self.spectrum.eigenvalues - 1.0))
            return self._tv_of_rows(self._spectral_rows(w))
        return self._tv_of_rows(self._semigroup(self.spectrum.n_vertices * t))


def worst_start_tv(spectrum: TransitionSpectrum, distribution: ExactDistribution,
                   t: float, continuous: bool = False) -> float:
    """max over starting states of TV(P^t(x, .), pi).

    Discrete mode requires integer t >= 0; continuous mode evaluates the
    rate-1-per-site semigroup at real time t.
    """
    ev = _TvEvaluator(spectrum, distribution)
    return ev.continuous(t) if continuous else ev.discrete(t)


def exact_mixing_time(spectrum: TransitionSpectrum,
                      distribution: ExactDistribution,
                      target: float = TV_TARGET) -> int:
    """Smallest t with worst-start TV at most the target (default 1/2e).

    Worst-start TV is non-increasing in t, so bracket by doubling and then
    binary search.
    """
    f = _TvEvaluator(spectrum, distribution).discrete
    if f(1) <= target:
        return 1
    hi = 2
    while f(hi) > target:
        hi *= 2
        if hi > 2 ** 62:
            raise RuntimeError("mixing time exceeds 2^62 steps")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if f(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def continuous_mixing_time(spectrum: TransitionSpectrum,
                           distribution: ExactDistribution,
                           target: float = TV_TARGET,
                           rtol: float = 1e-9) -> float:
    """Smallest continuous time with worst-start TV at most the target.

    The returned endpoint always satisfies the TV target; rtol only controls
    how tightly it brackets the crossing from above.
    """
    f = _TvEvaluator(spectrum, distribution).continuous
    hi = 1.0 / spectrum.continuous_gap
    while f(hi) > target:
        hi *= 2.0
        if hi > 1e30:
            raise RuntimeError("continuous mixing time out of range")
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def dirichlet_check(spectrum: TransitionSpectrum, distribution: ExactDistribution,
                    fs, tol: float = 1e-8) -> bool:
    """Verify the variational characterization of the relaxation time.

    For every mean-zero test function f the variance/Dirichlet-form ratio is
    at most 1/(1 - lambda_2), with equality (within tol) attained by the
    lambda_2 eigenfunction, which is checked alongside the supplied fs.
    Single-site heat-bath kernels average projections, so the spectrum is
    nonnegative and 1/(1 - lambda_2) equals the relaxation time.
    """
    pi = distribution.probabilities
    if float(pi.min()) <= 0.0:
        raise ValueError("Dirichlet diagnostics need stationary probabilities "
                         "representable in float range")
    P = spectrum.matrix
    Q = pi[:, None] * P
    tau2 = 1.0 / (1.0 - float(spectrum.eigenvalues[1]))

    def ratio(f):
        f = np.asarray(f, dtype=np.float64)
        mean = float(pi @ f)
        scale = float(np.max(np.abs(f))) or 1.0
        if abs(mean) > 1e-10 * scale:
            raise ValueError(f"test function must be mean zero, got E f = {mean}")
        var = float(pi @ (f * f))
        if var <= 1e-14 * scale * scale:
            raise ValueError("constant (zero-variance) test function rejected")
        diff = f[:, None] - f[None, :]
        energy = float(np.sum(Q * diff * diff))  # counts ordered pairs = 2 E(f,f)
        return 2.0 * var / energy

    for f in fs:
        if ratio(f) > tau2 * (1.0 + 1e-9) + 1e-12:
            return False
    phi2 = spectrum.eigenvectors[:, 1] / np.sqrt(pi)
    phi2 = phi2 - float(pi @ phi2)
    if abs(ratio(phi2) - tau2) > tol * max(1.0, tau2):
        return False
    return True
