"""Seeded experiment cells, CSV sweeps and rate-scaling analysis.

A sweep enumerates the cross product of parameter grids, runs `trials`
independent trials per cell and writes one CSV row per trial.  Per-trial
randomness is derived from (master seed, cell index, trial index), so results
are independent of scheduling and the CSV is byte-identical across reruns and
thread counts.  Wall-clock timings are therefore excluded from primary
outputs: the wall_ms column is written as 0 (timings are kept on the in-memory
records for runtime checks).
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adversary import (
    AttackSpec,
    BatchCollection,
    LABEL_ADVERSARIAL,
    contaminate,
    make_clean_collection,
)
from .channel import RapporChannel
from .errors import InsufficientData, NoRoot
from .estimator import (
    DESK_TAU_THRESHOLD,
    EstimatorConfig,
    naive_estimate,
    robust_estimate,
)
from .lowerbound import hard_pair
from .prob import ProbVector, RngSeed, l1_dist, make_prob_vector

CSV_COLUMNS = [
    "n", "k", "d", "alpha", "eps", "attack", "trial", "seed",
    "l1_robust", "l1_robust_norm", "l1_naive",
    "deleted_good", "deleted_bad", "iterations", "final_tau", "wall_ms",
]

P_FAMILIES = ("uniform", "dirichlet", "point_heavy")


def format_float(x: float) -> str:
    """Decimal rendering with 17 significant digits (shortest exact round trip)."""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.17g}"


@dataclass(frozen=True)
class TrialCell:
    n: int
    k: int
    d: int
    alpha: float
    eps: float
    attack: str = "all_ones"
    attack_params: dict = field(default_factory=dict)
    p_family: str = "dirichlet"
    tau_threshold: float = DESK_TAU_THRESHOLD
    sdp_restarts: int = 16

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(eps=self.eps, tau_threshold=self.tau_threshold,
                               sdp_restarts=self.sdp_restarts)


@dataclass
class TrialResult:
    cell: TrialCell
    trial: int
    seed: int
    l1_robust: float
    l1_robust_norm: float
    l1_naive: float
    deleted_good: int
    deleted_bad: int
    iterations: int
    final_tau: float
    wall_time_ms: float
    alpha_exceeds_theory: bool = False

    def csv_row(self) -> list[str]:
        c = self.cell
        return [
            str(c.n), str(c.k), str(c.d), format_float(c.alpha), format_float(c.eps),
            c.attack, str(self.trial), str(self.seed),
            format_float(self.l1_robust), format_float(self.l1_robust_norm),
            format_float(self.l1_naive),
            str(self.deleted_good), str(self.deleted_bad), str(self.iterations),
            format_float(self.final_tau), "0",
        ]

    def to_json_dict(self) -> dict:
        c = self.cell
        return {
            "n": c.n, "k": c.k, "d": c.d, "alpha": c.alpha, "eps": c.eps,
            "attack": c.attack, "trial": self.trial, "seed": self.seed,
            "l1_robust": self.l1_robust, "l1_robust_norm": self.l1_robust_norm,
            "l1_naive": self.l1_naive, "deleted_good": self.deleted_good,
            "deleted_bad": self.deleted_bad, "iterations": self.iterations,
            "final_tau": None if math.isnan(self.final_tau) else self.final_tau,
            "wall_ms": 0,
            "alpha_exceeds_theory": self.alpha_exceeds_theory,
        }


def sample_p(family: str, d: int, rng: RngSeed) -> ProbVector:
    """Draw the estimation target from one of the configured families."""
    if family == "uniform":
        return ProbVector(np.full(d, 1.0 / d))
    gen = rng.generator()
    if family == "dirichlet":
        return make_prob_vector(gen.dirichlet(np.ones(d)))
    if family == "point_heavy":
        w = gen.dirichlet(np.ones(d))
        w = 0.3 * w
        w[0] += 0.7
        return make_prob_vector(w)
    raise ValueError(f"unknown p family {family!r}")


def resolve_attack(cell: TrialCell, p: ProbVector, ch: RapporChannel,
                   rng: RngSeed) -> AttackSpec:
    """Instantiate the cell's attack, resolving per-trial parameters.

    swap_mix swaps in a mixture of the target with a point mass, a fixed-shape
    contamination the filter cannot tell apart batchwise.
    """
    kind = cell.attack
    params = cell.attack_params
    if kind in ("all_ones", "all_zeros"):
        return AttackSpec(kind=kind, name=kind)
    if kind == "swap_mix":
        mix = float(params.get("mix", 0.5))
        w = (1.0 - mix) * p.weights.copy()
        w[0] += mix
        return AttackSpec(kind="swap_distribution", q=make_prob_vector(w),
                          name="swap_mix")
    if kind == "swap_uniform":
        return AttackSpec(kind="swap_distribution",
                          q=ProbVector(np.full(ch.d, 1.0 / ch.d)),
                          name="swap_uniform")
    if kind == "targeted_subset":
        size = int(params.get("subset_size", max(1, ch.d // 2)))
        mask = np.zeros(ch.d, dtype=bool)
        mask[:size] = True
        return AttackSpec(kind="targeted_subset", mask=mask,
                          direction=int(params.get("direction", 1)),
                          magnitude=float(params.get("magnitude", 1.0)),
                          name="targeted_subset")
    raise ValueError(f"unknown attack {kind!r}")


def build_collection(cell: TrialCell, p: ProbVector, attack: Optional[AttackSpec],
                     ch: RapporChannel, rng: RngSeed) -> BatchCollection:
    n_adv = int(math.floor(cell.n * cell.eps))
    n_prime = cell.n - n_adv
    clean = make_clean_collection(ch, p, n_prime, cell.k, rng.child(10))
    if cell.eps == 0.0:
        return clean
    return contaminate(clean, attack, cell.eps, cell.n, ch, rng.child(12))


def run_trial(cell: TrialCell, trial: int, master_seed: int) -> TrialResult:
    """One full generate / contaminate / estimate cycle with derived randomness.

    For the hard-pair attack the estimation target is the certified pair's p:
    the adversarial batches simulate its companion q, which is the scenario the
    indistinguishability construction speaks about.
    """
    base = RngSeed(master_seed).child(hash_cell(cell), trial)
    ch = RapporChannel.create(cell.d, cell.alpha)
    if cell.attack == "hard_pair_swap" and cell.eps > 0.0:
        pair = hard_pair(ch, eps=cell.eps, k=cell.k, rng=base.child(1))
        p = pair.p
        attack = AttackSpec(kind="hard_pair_swap", pair=pair, name="hard_pair_swap")
    else:
        p = sample_p(cell.p_family, cell.d, base.child(1))
        attack = resolve_attack(cell, p, ch, base.child(4)) if cell.eps > 0.0 else None
    coll = build_collection(cell, p, attack, ch, base.child(2))

    t0 = time.monotonic()
    robust = robust_estimate(coll, cell.estimator_config(), ch, base.child(3))
    naive = naive_estimate(coll, ch)
    wall_ms = (time.monotonic() - t0) * 1e3

    deleted = robust.deleted_indices()
    if coll.truth is not None and deleted.size:
        bad = int((coll.truth[deleted] == LABEL_ADVERSARIAL).sum())
    else:
        bad = 0
    return TrialResult(
        cell=cell, trial=trial, seed=master_seed,
        l1_robust=l1_dist(robust.phat, p.weights),
        l1_robust_norm=l1_dist(robust.phat_normalized, p.weights),
        l1_naive=l1_dist(naive.phat, p.weights),
        deleted_good=int(deleted.size - bad), deleted_bad=bad,
        iterations=robust.iterations, final_tau=robust.final_tau,
        wall_time_ms=wall_ms,
        alpha_exceeds_theory=ch.exceeds_theory_range,
    )


def hash_cell(cell: TrialCell) -> int:
    """Stable small integer identifying a cell inside seed derivations."""
    payload = json.dumps({
        "n": cell.n, "k": cell.k, "d": cell.d,
        "alpha": format_float(cell.alpha), "eps": format_float(cell.eps),
        "attack": cell.attack, "params": sorted(cell.attack_params.items()),
        "p_family": cell.p_family,
    }, sort_keys=True)
    import hashlib
    return int.from_bytes(hashlib.sha256(payload.encode()).digest()[:6], "big")


@dataclass(frozen=True)
class SweepConfig:
    n_grid: tuple
    k_grid: tuple
    d_grid: tuple
    alpha_grid: tuple
    eps_grid: tuple
    attack: str = "all_ones"
    attack_params: dict = field(default_factory=dict)
    trials: int = 1
    seed: int = 0
    p_family: str = "dirichlet"
    tau_threshold: float = DESK_TAU_THRESHOLD

    def __post_init__(self):
        for name in ("n_grid", "k_grid", "d_grid", "alpha_grid", "eps_grid"):
            grid = getattr(self, name)
            if len(tuple(grid)) == 0:
                raise ValueError(f"{name} must be nonempty")
            object.__setattr__(self, name, tuple(grid))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    @classmethod
    def from_json(cls, text: str) -> "SweepConfig":
        raw = json.loads(text)
        return cls(
            n_grid=tuple(raw["n_grid"]), k_grid=tuple(raw["k_grid"]),
            d_grid=tuple(raw["d_grid"]), alpha_grid=tuple(raw["alpha_grid"]),
            eps_grid=tuple(raw["eps_grid"]),
            attack=raw.get("attack", "all_ones"),
            attack_params=raw.get("attack_params", {}),
            trials=int(raw.get("trials", 1)), seed=int(raw.get("seed", 0)),
            p_family=raw.get("p_family", "dirichlet"),
            tau_threshold=float(raw.get("tau_threshold", DESK_TAU_THRESHOLD)),
        )

    def cells(self) -> list[TrialCell]:
        out = []
        for n in self.n_grid:
            for k in self.k_grid:
                for d in self.d_grid:
                    for alpha in self.alpha_grid:
                        for eps in self.eps_grid:
                            out.append(TrialCell(
                                n=int(n), k=int(k), d=int(d), alpha=float(alpha),
                                eps=float(eps), attack=self.attack,
                                attack_params=dict(self.attack_params),
                                p_family=self.p_family,
                                tau_threshold=self.tau_threshold,
                            ))
        return out


def _run_job(args) -> TrialResult:
    cell, trial, seed = args
    return run_trial(cell, trial, seed)


def run_sweep(cfg: SweepConfig, threads: int = 1) -> list[TrialResult]:
    """Execute all trials; output order is (cell, trial) regardless of scheduling."""
    jobs = [(cell, trial, cfg.seed)
            for cell in cfg.cells() for trial in range(cfg.trials)]
    if threads == 0:
        import os
        threads = os.cpu_count() or 1
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=1))
    else:
        results = [_run_job(job) for job in jobs]
    return results


def write_csv(results: list[TrialResult], path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for res in results:
        writer.writerow(res.csv_row())
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def sweep(cfg: SweepConfig, out_path, threads: int = 1) -> list[TrialResult]:
    """Run the configured sweep and persist one CSV row per trial."""
    results = run_sweep(cfg, threads=threads)
    write_csv(results, out_path)
    return results


@dataclass(frozen=True)
class RateFitReport:
    axis: str
    slope: float
    stderr: float
    axis_values: tuple
    medians: tuple


def rate_fit(csv_path, axis: str) -> RateFitReport:
    """Log-log least-squares slope of the median robust error along one axis.

    Requires at least three distinct axis values with every other cell
    parameter held fixed.
    """
    if axis not in ("n", "k", "eps"):
        raise ValueError("axis must be one of n, k, eps")
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InsufficientData("empty csv")
    others = [c for c in ("n", "k", "d", "alpha", "eps", "attack") if c != axis]
    fixed = {c: rows[0][c] for c in others}
    for row in rows:
        for c in others:
            if row[c] != fixed[c]:
                raise InsufficientData(f"column {c} is not fixed across rows")
    groups: dict[float, list[float]] = {}
    for row in rows:
        groups.setdefault(float(row[axis]), []).append(float(row["l1_robust"]))
    if len(groups) < 3:
        raise InsufficientData("need at least three distinct axis values")
    xs = np.array(sorted(groups))
    med = np.array([float(np.median(groups[x])) for x in xs])
    lx, ly = np.log(xs), np.log(med)
    n_pts = lx.size
    vx = lx - lx.mean()
    slope = float(np.sum(vx * ly) / np.sum(vx * vx))
    resid = ly - (ly.mean() + slope * vx)
    dof = max(n_pts - 2, 1)
    stderr = float(math.sqrt(np.sum(resid ** 2) / dof / np.sum(vx * vx)))
    return RateFitReport(axis=axis, slope=slope, stderr=stderr,
                         axis_values=tuple(float(x) for x in xs),
                         medians=tuple(float(m) for m in med))


#: Operating-level search upper endpoint and the implied minimal n.
EPS_PRIME_MAX = 0.01


def eps_prime_solve(n: int, d: int) -> float:
    """Root of n = 4 d / (eps'^2 ln(1/eps')) on (0, 1/100], by bisection.

    The right side is decreasing in eps', so a root exists exactly when
    n >= 4 d / (0.01^2 ln 100); otherwise NoRoot is raised.
    """
    def required(e: float) -> float:
        return 4.0 * d / (e * e * math.log(1.0 / e))

    if n < required(EPS_PRIME_MAX) * (1.0 - 1e-12):
        raise NoRoot(f"n={n} below the minimum {required(EPS_PRIME_MAX):.3f}")
    lo, hi = 1e-12, EPS_PRIME_MAX
    if required(hi) >= n:
        return hi
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if required(mid) > n:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1.0 < 1e-10:
            break
    return hi
