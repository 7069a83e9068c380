"""Constructive indistinguishability certificates and minimax hypothesis families.

Builds, for the bit-flip channel:
  * the channel information matrix Omega with entries
    integral of (Q(z|j)/Q(z|1) - 1)(Q(z|j')/Q(z|1) - 1) dQ(z|1),
  * a sum-zero direction Delta inside the low-eigenvalue span of Omega whose
    l1 mass is large relative to its l2 norm,
  * the hard pair p = |Delta|/||Delta||_1, q = p - Delta whose k-fold privatized
    products are within total variation eps of each other,
  * the common mixture certifying that eps-contamination can exactly equalize
    the two privatized product laws,
  * the paired-perturbation (Assouad cube) family whose pairwise l1 distance is
    exactly 4 * gamma times the Hamming distance of the sign vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .channel import RapporChannel
from .errors import (
    AlphaOutOfRange,
    BadSigns,
    DimensionTooLarge,
    EmptySubspace,
    EpsOutOfRange,
    InfeasibleScale,
    ProductSpaceTooLarge,
    TooSmallAlphabet,
)
from .prob import FiniteDist, ProbVector, RngSeed, make_prob_vector, tv_product_bound

#: Exact output-space enumeration guard.
MAX_EXACT_D = 16
#: Constant in the quadratic-form radius C * eps^2 / k; e^-2 suffices for the
#: total-variation chain.
QUAD_FORM_CONSTANT = math.exp(-2.0)
#: Eigenvalue cutoff multiplier defining the low eigenspace.
EIGENVALUE_CAP = 3.0 * math.e ** 2

_RANK_TOL = 1e-10


def _output_bits(d: int) -> np.ndarray:
    if d > MAX_EXACT_D:
        raise DimensionTooLarge(f"exact enumeration capped at d={MAX_EXACT_D}")
    masks = np.arange(1 << d, dtype=np.uint64)
    return ((masks[:, None] >> np.arange(d, dtype=np.uint64)[None, :]) & 1).astype(np.float64)


def _conditional_outputs(ch: RapporChannel) -> np.ndarray:
    """(2^d, d) matrix of Q(z | x) over all outputs z and inputs x."""
    bits = _output_bits(ch.d)
    ones = bits.sum(axis=1)
    # Hamming distance between z and e_x is |z| + 1 - 2 * z_x.
    ham = ones[:, None] + 1.0 - 2.0 * bits
    return (ch.lam ** ham) * ((1.0 - ch.lam) ** (ch.d - ham))


def channel_output_dist(ch: RapporChannel, p: ProbVector) -> np.ndarray:
    """Distribution of a privatized sample over all 2^d outputs, exactly."""
    cond = _conditional_outputs(ch)
    return cond @ p.weights


def channel_chi2_exact(ch: RapporChannel, p: ProbVector, q: ProbVector) -> float:
    """Exact chi-square divergence between the privatized laws of p and q."""
    qp = channel_output_dist(ch, p)
    qq = channel_output_dist(ch, q)
    diff = qp - qq
    return float(np.sum(diff * diff / qq))


@dataclass(frozen=True)
class OmegaMatrix:
    matrix: np.ndarray
    alpha: float
    d: int

    def low_eigencount(self) -> int:
        """Number of eigenvalues at or below the cap 3 * e^2 * alpha^2."""
        vals = np.linalg.eigvalsh(self.matrix)
        return int((vals <= EIGENVALUE_CAP * self.alpha ** 2 + 1e-12).sum())


def omega_matrix(ch: RapporChannel) -> OmegaMatrix:
    """Exact channel information matrix by summation over all 2^d outputs.

    Row and column 1 vanish identically since the reference ratio at x = 1 is
    constant.  The matrix is symmetric positive semidefinite with trace at most
    d * e^2 * alpha^2 whenever alpha <= 1.
    """
    bits = _output_bits(ch.d)
    lam = ch.lam
    ratio = (1.0 - lam) / lam
    # Q(z|j)/Q(z|1) = ratio^(2 (z_j - z_1)); exponent in {-2, 0, 2}.
    expo = 2.0 * (bits - bits[:, [0]])
    qfun = ratio ** expo - 1.0
    weights = _conditional_outputs(ch)[:, 0]
    omega = (qfun * weights[:, None]).T @ qfun
    omega = 0.5 * (omega + omega.T)
    eig_min = float(np.linalg.eigvalsh(omega).min())
    if eig_min < -1e-9:
        raise ValueError(f"information matrix not PSD (min eig {eig_min})")
    if ch.alpha <= 1.0:
        trace_cap = ch.d * (math.e * ch.alpha) ** 2
        if float(np.trace(omega)) > trace_cap * (1.0 + 1e-9):
            raise ValueError("trace bound violated")
    return OmegaMatrix(matrix=omega, alpha=ch.alpha, d=ch.d)


def omega_matrix_mc(ch: RapporChannel, n_samples: int, rng: RngSeed,
                    chunk: int = 1 << 18) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo estimate of the information matrix with entrywise standard errors.

    Samples outputs from Q(. | 1); usable beyond the exact-enumeration cap but
    excluded from acceptance checks.
    """
    d, lam = ch.d, ch.lam
    ratio = (1.0 - lam) / lam
    table = np.array([1.0 / ratio ** 2 - 1.0, 0.0, ratio ** 2 - 1.0])
    total = np.zeros((d, d))
    total_sq = np.zeros((d, d))
    done = 0
    idx = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        gen = rng.generator(idx)
        z = (gen.random((m, d)) < lam).astype(np.int8)
        z[:, 0] = (gen.random(m) < (1.0 - lam)).astype(np.int8)
        qvals = table[(z - z[:, [0]]) + 1]
        total += qvals.T @ qvals
        total_sq += (qvals * qvals).T @ (qvals * qvals)
        done += m
        idx += 1
    mean = total / n_samples
    var = total_sq / n_samples - mean * mean
    se = np.sqrt(np.clip(var, 0.0, None) / n_samples)
    return mean, se


def low_eigenspace_delta(omega: OmegaMatrix, eps: float, k: int,
                         gaussian_samples: int, rng: RngSeed) -> np.ndarray:
    """Sum-zero direction in the low eigenspace with a large l1-to-l2 ratio.

    Draws standard normal vectors in an orthonormal basis of
    span(low eigenvectors) intersected with the sum-zero hyperplane and keeps
    the draw maximizing ||x||_1 / ||x||_2.  The result is scaled so that its
    quadratic form x^T Omega x equals C * eps^2 / k exactly (or its l2 norm
    hits 1/sqrt(d), whichever binds first).  Calibrating against the realized
    quadratic form instead of the worst-case eigenvalue cap 2 e^2 alpha^2
    keeps the direction inside the certified indistinguishable set while
    extracting the full l1 mass the channel permits; the conservative cap
    would forfeit a factor sqrt(cap / realized) of l1 mass.
    """
    if omega.d < 3:
        raise TooSmallAlphabet("d must be >= 3")
    if gaussian_samples < 1:
        raise ValueError("need at least one sample")
    vals, vecs = np.linalg.eigh(omega.matrix)
    cutoff = EIGENVALUE_CAP * omega.alpha ** 2
    j0 = int((vals <= cutoff + 1e-12).sum())
    if j0 == 0:
        raise EmptySubspace("no eigenvalues below the cap")
    basis = vecs[:, :j0]                      # (d, j0), orthonormal columns
    g = basis.T @ np.ones(omega.d)
    gnorm = float(np.linalg.norm(g))
    if gnorm <= _RANK_TOL:
        inner = np.eye(j0)
    else:
        # orthonormal basis of the orthocomplement of g inside R^j0
        seed_mat = np.eye(j0) - np.outer(g, g) / (gnorm ** 2)
        u, s, _ = np.linalg.svd(seed_mat)
        inner = u[:, s > _RANK_TOL]
    W = basis @ inner                          # (d, m), orthonormal, sum-zero
    m = W.shape[1]
    if m == 0:
        raise EmptySubspace("sum-zero intersection is empty")

    gen = rng.generator() if isinstance(rng, RngSeed) else rng
    draws = gen.standard_normal((gaussian_samples, m))
    X = draws @ W.T
    l1 = np.abs(X).sum(axis=1)
    l2 = np.linalg.norm(X, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(l2 > 0, l1 / l2, 0.0)
    best = int(np.argmax(ratios))
    direction = X[best] / float(np.linalg.norm(X[best]))

    quad_per_unit = float(direction @ omega.matrix @ direction)
    budget = QUAD_FORM_CONSTANT * eps ** 2 / k
    if quad_per_unit > 0.0:
        target_sq = min(budget / quad_per_unit, 1.0 / omega.d)
    else:
        target_sq = 1.0 / omega.d
    return direction * math.sqrt(target_sq)


@dataclass(frozen=True)
class HardPair:
    """Pair of distributions indistinguishable after privatization and contamination."""

    p: ProbVector
    q: ProbVector
    delta: np.ndarray
    chi2_one_sample: float
    quad_form: float
    tv_bound_k: float
    eps: float
    k: int
    alpha: float

    def validate(self) -> None:
        if abs(float(self.delta.sum())) > 1e-12:
            raise ValueError("delta is not sum-zero")
        if float(np.abs((self.p.weights - self.delta) - self.q.weights).max()) > 1e-9:
            raise ValueError("q != p - delta")
        cap = QUAD_FORM_CONSTANT * self.eps ** 2 / self.k
        if self.quad_form > cap * (1.0 + 1e-9):
            raise ValueError("quadratic form exceeds C * eps^2 / k")
        if self.chi2_one_sample > math.exp(self.alpha) * self.quad_form + 1e-9:
            raise ValueError("chi-square exceeds e^alpha * quadratic form")
        if self.tv_bound_k > self.eps:
            raise ValueError("k-fold TV bound exceeds eps")


def hard_pair(ch: RapporChannel, eps: float, k: int, rng: RngSeed,
              gaussian_samples: int = 10_000) -> HardPair:
    """Construct and certify a hard pair for the given channel, eps and k.

    p places mass |Delta_j| / ||Delta||_1 on symbol j and q = p - Delta; both
    are valid probability vectors because ||Delta||_1 <= 1 by the l2 scaling.
    The guarantees assume alpha <= 1.
    """
    if not 0.0 < eps < 0.5:
        raise EpsOutOfRange("eps must lie in (0, 1/2)")
    if k < 1:
        raise ValueError("k must be >= 1")
    if ch.alpha > 1.0:
        raise AlphaOutOfRange("hard pair construction requires alpha <= 1")
    omega = omega_matrix(ch)
    delta = low_eigenspace_delta(omega, eps, k, gaussian_samples, rng)
    l1 = float(np.abs(delta).sum())
    if l1 > 1.0:
        raise InfeasibleScale("||Delta||_1 > 1 after scaling")
    p = make_prob_vector(np.abs(delta) / l1)
    q_raw = p.weights - delta
    if float(q_raw.min()) < -1e-12:
        raise InfeasibleScale("q has a negative coordinate")
    q = make_prob_vector(q_raw)
    quad = float(delta @ omega.matrix @ delta)
    chi2 = channel_chi2_exact(ch, p, q)
    bound = tv_product_bound(chi2, k)
    pair = HardPair(p=p, q=q, delta=delta, chi2_one_sample=chi2, quad_form=quad,
                    tv_bound_k=bound, eps=eps, k=k, alpha=ch.alpha)
    pair.validate()
    return pair


def common_mixture(pair: HardPair, ch: RapporChannel,
                   k: int) -> tuple[FiniteDist, FiniteDist, FiniteDist]:
    """Mixture A and components N_p, N_q with
    (1-eps) Qp^k + eps N_p = A = (1-eps) Qq^k + eps N_q, outcome by outcome.

    A is the normalized pointwise maximum of the two k-fold product laws;
    nonnegativity of N_p and N_q is exactly the indistinguishability property
    of the pair.  Requires (2^d)^k <= 2^20 for exact product enumeration.
    """
    d = ch.d
    if (1 << d) ** k > 1 << 20:
        raise ProductSpaceTooLarge("product space exceeds 2^20 outcomes")
    sp = channel_output_dist(ch, pair.p)
    sq = channel_output_dist(ch, pair.q)
    prod_p = sp.copy()
    prod_q = sq.copy()
    for _ in range(k - 1):
        prod_p = np.kron(prod_p, sp)
        prod_q = np.kron(prod_q, sq)
    tv_exact = 0.5 * float(np.abs(prod_p - prod_q).sum())
    a = np.maximum(prod_p, prod_q) / (1.0 + tv_exact)
    eps = pair.eps
    n_p = (a - (1.0 - eps) * prod_p) / eps
    n_q = (a - (1.0 - eps) * prod_q) / eps
    outcomes = tuple(range(a.size))
    return (FiniteDist(outcomes, a),
            FiniteDist(outcomes, n_p),
            FiniteDist(outcomes, n_q))


def _snap_gamma(gamma: float, bits: int = 16) -> float:
    """Round gamma to a 16-bit significand so paired offsets subtract exactly."""
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    exp = math.floor(math.log2(gamma))
    scale = 2.0 ** (exp - (bits - 1))
    return round(gamma / scale) * scale


@dataclass(frozen=True)
class AssouadFamily:
    """Paired-perturbation hypothesis cube around the uniform distribution.

    Member for sign vector s in {-1, +1}^(d//2): coordinate j <= d/2 gets
    1/d + s_j * gamma, its mirror d - j + 1 gets 1/d - s_j * gamma, and the
    middle coordinate (odd d) stays 1/d.  The l1 distance between two members
    is exactly 4 * gamma * Hamming(s, s').
    """

    d: int
    n: int
    alpha: float
    c_gamma: float
    gamma: float

    @property
    def half(self) -> int:
        return self.d // 2

    @property
    def size(self) -> int:
        return 1 << self.half

    def member(self, signs) -> ProbVector:
        s = np.asarray(signs, dtype=np.int64).ravel()
        if s.size != self.half or not np.all(np.abs(s) == 1):
            raise BadSigns(f"need a +-1 vector of length {self.half}")
        w = np.full(self.d, 1.0 / self.d)
        for j in range(self.half):
            w[j] = 1.0 / self.d + s[j] * self.gamma
            w[self.d - 1 - j] = 1.0 / self.d - s[j] * self.gamma
        # No renormalization: the paired +-gamma offsets must stay exact so the
        # l1 distance between members is exactly 4 * gamma * Hamming distance.
        return ProbVector(w)


def assouad_family(d: int, n: int, alpha: float, c_gamma: float) -> AssouadFamily:
    if d < 3:
        raise TooSmallAlphabet("d must be >= 3")
    if not 0.0 < c_gamma < 1.0:
        raise ValueError("c_gamma must lie in (0, 1)")
    if alpha <= 0 or n < 1:
        raise ValueError("need alpha > 0 and n >= 1")
    gamma = min(c_gamma / (alpha * math.sqrt(n)), c_gamma / d)
    return AssouadFamily(d=d, n=n, alpha=alpha, c_gamma=c_gamma,
                         gamma=_snap_gamma(gamma))


@dataclass(frozen=True)
class AssouadChi2Report:
    chi2_forward: np.ndarray
    chi2_backward: np.ndarray
    envelope_constant: float
    tv_bound_n: float

    def max_chi2(self) -> float:
        return float(max(self.chi2_forward.max(), self.chi2_backward.max()))


def assouad_chi2_check(family: AssouadFamily, ch: RapporChannel) -> AssouadChi2Report:
    """Exact chi-square between privatized laws of all Hamming-1 neighbor pairs.

    Reports the empirical envelope constant max chi^2 / (alpha^2 gamma^2) and
    the product total-variation bound at sample size n.
    """
    if ch.d != family.d:
        raise DimensionTooLarge("channel and family disagree on d")
    base = family.member(np.ones(family.half, dtype=np.int64))
    fwd = np.zeros(family.half)
    bwd = np.zeros(family.half)
    for j in range(family.half):
        signs = np.ones(family.half, dtype=np.int64)
        signs[j] = -1
        other = family.member(signs)
        fwd[j] = channel_chi2_exact(ch, base, other)
        bwd[j] = channel_chi2_exact(ch, other, base)
    denom = (ch.alpha * family.gamma) ** 2
    envelope = float(max(fwd.max(), bwd.max()) / denom) if denom > 0 else math.inf
    return AssouadChi2Report(
        chi2_forward=fwd,
        chi2_backward=bwd,
        envelope_constant=envelope,
        tv_bound_n=tv_product_bound(float(fwd.max()), family.n),
    )


def assouad_l1(family: AssouadFamily, s1, s2) -> tuple[float, float]:
    """Materialized l1 distance between two members and the exact 4*gamma*rho value."""
    a = family.member(s1)
    b = family.member(s2)
    rho = int(np.sum(np.asarray(s1) != np.asarray(s2)))
    return float(np.abs(a.weights - b.weights).sum()), (4.0 * family.gamma) * rho
