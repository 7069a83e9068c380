"""Bilinear maximization over the Gram feasible set and its subset-indicator oracle.

The feasible set consists of matrices M with M_ij = <u_i, v_j> for unit vectors
u_1..u_d, v_1..v_d.  For a symmetric matrix A the maximum of <M, A> over that
set sandwiches the exponential-time subset maximum:

    max_{S,S'} |<1_S 1_{S'}^T, A>|  <=  max_M <M, A>  <=  8 * max_{S,S'} |...|

The solver is low-rank alternating maximization over a product of spheres.
Each block update is exact (u_i <- normalize(sum_j A_ij v_j)), so the
objective is nondecreasing per half sweep; random restarts guard against bad
stationary points and the subset oracle certifies the sandwich on test sizes.
The returned value is always a feasible lower bound on the true maximum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionTooLarge, NotSymmetric, RankTooSmall
from .prob import RngSeed

#: Enumeration guard for the exact subset oracle.
MAX_ENUM_D = 22
_ENUM_CHUNK = 1 << 14

SYMMETRY_TOL = 1e-12


def check_symmetric(A: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetric("matrix must be square")
    if float(np.abs(A - A.T).max(initial=0.0)) > tol:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    return A


def _mask_block(start: int, stop: int, d: int) -> np.ndarray:
    masks = np.arange(start, stop, dtype=np.uint64)
    return ((masks[:, None] >> np.arange(d, dtype=np.uint64)[None, :]) & 1).astype(np.float64)


def subset_bilinear_max(A) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact max_{S,S'} |<1_S 1_{S'}^T, A>| with attaining masks, by enumeration.

    S is enumerated over all 2^d subsets; for each S the inner problem is
    separable, so S' is the positive-part or negative-part support of A^T 1_S.
    """
    A = check_symmetric(A)
    d = A.shape[0]
    if d > MAX_ENUM_D:
        raise DimensionTooLarge(f"subset enumeration capped at d={MAX_ENUM_D}")
    best_val = 0.0
    best_mask = 0
    best_sp = np.zeros(d, dtype=bool)
    for start in range(0, 1 << d, _ENUM_CHUNK):
        stop = min(start + _ENUM_CHUNK, 1 << d)
        bits = _mask_block(start, stop, d)
        W = bits @ A
        pos = np.where(W > 0.0, W, 0.0).sum(axis=1)
        neg = np.where(W < 0.0, -W, 0.0).sum(axis=1)
        vals = np.maximum(pos, neg)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = float(vals[i])
            best_mask = start + i
            w = W[i]
            best_sp = w > 0.0 if pos[i] >= neg[i] else w < 0.0
    s_mask = ((best_mask >> np.arange(d)) & 1).astype(bool)
    return best_val, s_mask, best_sp


@dataclass
class GramSolution:
    """Feasible factors (rows are unit vectors) and the objective they achieve."""

    u_factors: np.ndarray
    v_factors: np.ndarray
    value: float
    history: list = field(default_factory=list, repr=False)

    @property
    def rank(self) -> int:
        return int(self.u_factors.shape[1])

    def matrix(self) -> np.ndarray:
        return self.u_factors @ self.v_factors.T

    def recompute_value(self, A: np.ndarray) -> float:
        return float(np.sum(self.matrix() * np.asarray(A, dtype=np.float64)))

    def validate(self, A: np.ndarray | None = None) -> None:
        for F in (self.u_factors, self.v_factors):
            norms = np.linalg.norm(F, axis=1)
            if float(np.abs(norms - 1.0).max()) > 1e-10:
                raise ValueError("factor rows are not unit vectors")
        M = self.matrix()
        if float(np.abs(M).max()) > 1.0 + 1e-10:
            raise ValueError("Gram entries exceed 1 in absolute value")
        if A is not None and abs(self.recompute_value(A) - self.value) > 1e-9 * max(1.0, abs(self.value)):
            raise ValueError("stored value does not match factors")


def _normalize_rows(G: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(G, axis=1)
    out = fallback.copy()
    nz = norms > 0.0
    out[nz] = G[nz] / norms[nz, None]
    return out


def gram_maximize(A, rank: int | None = None, restarts: int = 16,
                  sweep_tol: float = 1e-8, rng: RngSeed | None = None,
                  max_sweeps: int = 500) -> GramSolution:
    """Maximize <M, A> over Gram matrices by alternating row updates.

    With v fixed each u_i has the closed-form optimum normalize((A v)_i); rows
    with zero gradient are left unchanged.  Runs `restarts` independent starts
    and returns the best; ties break toward the lowest restart index.
    """
    A = check_symmetric(A)
    d = A.shape[0]
    if rank is None:
        rank = min(d, 8)
    if rank < 3:
        raise RankTooSmall(f"rank must be >= 3, got {rank}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if rng is None:
        rng = RngSeed(0)

    best: GramSolution | None = None
    for r in range(restarts):
        gen = rng.generator(r) if isinstance(rng, RngSeed) else rng
        U = _normalize_rows(gen.standard_normal((d, rank)), np.tile(_e(rank, 0), (d, 1)))
        V = _normalize_rows(gen.standard_normal((d, rank)), np.tile(_e(rank, 0), (d, 1)))
        value = float(np.sum((U @ V.T) * A))
        history = [value]
        for _ in range(max_sweeps):
            U = _normalize_rows(A @ V, U)
            history.append(float(np.sum((U @ V.T) * A)))
            V = _normalize_rows(A.T @ U, V)
            new_value = float(np.sum((U @ V.T) * A))
            history.append(new_value)
            if new_value - value <= sweep_tol * max(1.0, abs(new_value)):
                value = new_value
                break
            value = new_value
        if best is None or value > best.value:
            best = GramSolution(u_factors=U, v_factors=V, value=value, history=history)
    assert best is not None
    return best


def _e(r: int, i: int) -> np.ndarray:
    v = np.zeros(r)
    v[i] = 1.0
    return v


def indicator_embedding(s_mask, sp_mask, rank: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Unit-vector factors whose Gram matrix equals 1_S 1_{S'}^T exactly.

    Rows of u are e0 on S and e1 off it; rows of v are e0 on S' and e2 off it.
    Requires rank >= 3 for the three orthonormal directions.
    """
    if rank < 3:
        raise RankTooSmall("indicator embedding needs rank >= 3")
    s = np.asarray(s_mask, dtype=bool).ravel()
    sp = np.asarray(sp_mask, dtype=bool).ravel()
    if s.size != sp.size:
        raise ValueError("masks differ in length")
    d = s.size
    U = np.tile(_e(rank, 1), (d, 1))
    U[s] = _e(rank, 0)
    V = np.tile(_e(rank, 2), (d, 1))
    V[sp] = _e(rank, 0)
    return U, V


@dataclass(frozen=True)
class SandwichReport:
    subset_value: float
    gram_value: float
    lower_margin: float
    upper_margin: float
    lower_ok: bool
    upper_ok: bool

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok


def sandwich_check(A, sol: GramSolution | None = None, rng: RngSeed | None = None,
                   tol_scale: float = 1e-6, **solver_kwargs) -> SandwichReport:
    """Certify subset_max <= gram value + tol and gram value <= 8 * subset_max + tol.

    The tolerance is tol_scale times the Frobenius norm of A on both sides.
    """
    A = check_symmetric(A)
    if A.shape[0] > MAX_ENUM_D:
        raise DimensionTooLarge("sandwich certification requires enumerable d")
    if sol is None:
        sol = gram_maximize(A, rng=rng, **solver_kwargs)
    bf, _, _ = subset_bilinear_max(A)
    tol = tol_scale * float(np.linalg.norm(A))
    lower_margin = sol.value + tol - bf
    upper_margin = 8.0 * bf + tol - sol.value
    return SandwichReport(
        subset_value=bf,
        gram_value=sol.value,
        lower_margin=lower_margin,
        upper_margin=upper_margin,
        lower_ok=lower_margin >= 0.0,
        upper_ok=upper_margin >= 0.0,
    )
