"""Corrupted batch collections: clean generation, attacks, shuffling, serialization.

A collection holds n batches of k privatized samples each, stored as a
(n, k, d) uint8 array.  Truth labels (good / adversarial) travel with the
collection for evaluation only; estimators must never read them.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import RapporChannel, privatize_batch, sample_privatized
from .errors import (
    BadCollectionFile,
    CountMismatch,
    DimensionMismatch,
    EpsOutOfRange,
    InvalidAttackParams,
)
from .prob import ProbVector, RngSeed

LABEL_GOOD = 0
LABEL_ADVERSARIAL = 1

_MAGIC = b"LDPB"
_VERSION = 1


@dataclass
class BatchCollection:
    """n batches of k privatized samples, with optional simulation-only labels."""

    batches: np.ndarray
    truth: Optional[np.ndarray] = None
    eps: float = 0.0
    seed: int = 0

    def __post_init__(self):
        b = np.asarray(self.batches, dtype=np.uint8)
        if b.ndim != 3:
            raise DimensionMismatch("batches must have shape (n, k, d)")
        self.batches = b
        if self.truth is not None:
            t = np.asarray(self.truth, dtype=np.uint8).ravel()
            if t.size != b.shape[0]:
                raise CountMismatch("one truth label per batch required")
            self.truth = t

    @property
    def n(self) -> int:
        return int(self.batches.shape[0])

    @property
    def k(self) -> int:
        return int(self.batches.shape[1])

    @property
    def d(self) -> int:
        return int(self.batches.shape[2])

    def adversarial_count(self) -> int:
        if self.truth is None:
            return 0
        return int((self.truth == LABEL_ADVERSARIAL).sum())

    def batch_digests(self) -> np.ndarray:
        """Content digest per batch, independent of batch order in the collection."""
        out = np.empty(self.n, dtype="S16")
        for i in range(self.n):
            out[i] = hashlib.sha256(self.batches[i].tobytes()).digest()[:16]
        return out


@dataclass(frozen=True)
class AttackSpec:
    """One adversarial batch strategy.

    kinds:
      all_ones / all_zeros        constant batches
      swap_distribution           honest privatization of another distribution q
      targeted_subset             privatize uniform, then push masked coordinates
                                  to (1 + direction)/2 independently w.p. magnitude
      hard_pair_swap              swap_distribution on the q of a hard pair
    """

    kind: str
    q: Optional[ProbVector] = None
    mask: Optional[np.ndarray] = None
    direction: int = 1
    magnitude: float = 1.0
    pair: object = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        kinds = {"all_ones", "all_zeros", "swap_distribution", "targeted_subset",
                 "hard_pair_swap"}
        if self.kind not in kinds:
            raise InvalidAttackParams(f"unknown attack kind {self.kind!r}")
        if self.kind == "swap_distribution" and self.q is None:
            raise InvalidAttackParams("swap_distribution requires q")
        if self.kind == "hard_pair_swap" and self.pair is None:
            raise InvalidAttackParams("hard_pair_swap requires a pair")
        if self.kind == "targeted_subset":
            if self.mask is None:
                raise InvalidAttackParams("targeted_subset requires a mask")
            if self.direction not in (-1, 1):
                raise InvalidAttackParams("direction must be +1 or -1")
            if not 0.0 <= self.magnitude <= 1.0:
                raise InvalidAttackParams("magnitude must lie in [0, 1]")
        if not self.name:
            object.__setattr__(self, "name", self.kind)


def make_clean_collection(ch: RapporChannel, p: ProbVector, n_prime: int, k: int,
                          rng: RngSeed) -> BatchCollection:
    """Generate n_prime iid batches of k privatized draws from p, labeled good."""
    if n_prime < 1 or k < 1:
        raise CountMismatch("need n_prime >= 1 and k >= 1")
    if p.d != ch.d:
        raise DimensionMismatch("p and channel disagree on d")
    flat = sample_privatized(ch, p, n_prime * k, rng)
    batches = flat.reshape(n_prime, k, ch.d)
    return BatchCollection(batches=batches,
                           truth=np.zeros(n_prime, dtype=np.uint8),
                           eps=0.0, seed=rng.seed)


def attack_batch(attack: AttackSpec, ch: RapporChannel, k: int,
                 rng: RngSeed) -> np.ndarray:
    """Produce one adversarial batch of k samples under the given strategy."""
    if k < 1:
        raise InvalidAttackParams("k must be >= 1")
    if attack.kind == "all_ones":
        return np.ones((k, ch.d), dtype=np.uint8)
    if attack.kind == "all_zeros":
        return np.zeros((k, ch.d), dtype=np.uint8)
    if attack.kind == "swap_distribution":
        return sample_privatized(ch, attack.q, k, rng).reshape(k, ch.d)
    if attack.kind == "hard_pair_swap":
        return sample_privatized(ch, attack.pair.q, k, rng).reshape(k, ch.d)
    # targeted_subset
    mask = np.asarray(attack.mask, dtype=bool).ravel()
    if mask.size != ch.d:
        raise InvalidAttackParams("mask length != d")
    uniform = ProbVector(np.full(ch.d, 1.0 / ch.d))
    gen = rng.generator()
    xs = gen.choice(ch.d, size=k, p=uniform.weights) + 1
    batch = privatize_batch(ch, xs, gen)
    hit = gen.random((k, int(mask.sum()))) < attack.magnitude
    target = 1 if attack.direction > 0 else 0
    cols = np.where(mask)[0]
    sub = batch[:, cols]
    sub[hit] = target
    batch[:, cols] = sub
    return batch


def contaminate(clean: BatchCollection, attack: AttackSpec, eps: float, n: int,
                ch: RapporChannel, rng: RngSeed) -> BatchCollection:
    """Append floor(n * eps) adversarial batches and shuffle uniformly.

    The clean collection must hold exactly n - floor(n * eps) batches; truth
    labels are preserved through the shuffle.
    """
    if not 0.0 <= eps < 0.25:
        raise EpsOutOfRange(f"eps must lie in [0, 1/4), got {eps}")
    n_adv = int(math.floor(n * eps))
    n_prime = n - n_adv
    if clean.n != n_prime:
        raise CountMismatch(f"clean collection has {clean.n} batches, expected {n_prime}")
    k, d = clean.k, clean.d
    if n_adv > 0:
        adv = np.stack([attack_batch(attack, ch, k, rng.child(1, i))
                        for i in range(n_adv)])
    else:
        adv = np.zeros((0, k, d), dtype=np.uint8)
    batches = np.concatenate([clean.batches, adv], axis=0)
    truth = np.concatenate([
        np.zeros(n_prime, dtype=np.uint8),
        np.full(n_adv, LABEL_ADVERSARIAL, dtype=np.uint8),
    ])
    perm = rng.generator(2).permutation(n)
    return BatchCollection(batches=batches[perm], truth=truth[perm],
                           eps=eps, seed=rng.seed)


def save_collection(coll: BatchCollection, path) -> None:
    """Write the binary collection format: header, packed bits, optional labels."""
    eps_num, eps_den = float(coll.eps).as_integer_ratio()
    if eps_num < 0 or eps_num >= 2 ** 64 or eps_den >= 2 ** 64:
        raise ValueError("eps outside serializable range")
    header = _MAGIC + struct.pack(
        "<HIIIQQQB", _VERSION, coll.n, coll.k, coll.d,
        eps_num, eps_den, coll.seed, 1 if coll.truth is not None else 0,
    )
    rows = coll.batches.reshape(coll.n * coll.k, coll.d)
    packed = np.packbits(rows, axis=1)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(packed.tobytes())
        if coll.truth is not None:
            fh.write(coll.truth.tobytes())


def load_collection(path) -> BatchCollection:
    """Read a collection written by save_collection; byte-exact round trip."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise BadCollectionFile("bad magic")
    off = 4
    version, n, k, d, eps_num, eps_den, seed, has_labels = struct.unpack_from(
        "<HIIIQQQB", raw, off)
    if version != _VERSION:
        raise BadCollectionFile(f"unsupported version {version}")
    off += struct.calcsize("<HIIIQQQB")
    row_bytes = (d + 7) // 8
    body = n * k * row_bytes
    packed = np.frombuffer(raw, dtype=np.uint8, count=body, offset=off)
    off += body
    rows = np.unpackbits(packed.reshape(n * k, row_bytes), axis=1)[:, :d]
    truth = None
    if has_labels:
        truth = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off).copy()
    eps = eps_num / eps_den if eps_den else 0.0
    return BatchCollection(batches=rows.reshape(n, k, d), truth=truth,
                           eps=eps, seed=seed)
