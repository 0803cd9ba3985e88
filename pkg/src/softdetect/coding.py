"""Outer code chain for iterative receivers.

Recursive systematic convolutional (RSC) mother code of rate 1/2, periodic
puncturing/repetition to reach other rates, log-domain BCJR decoding, random
interleaving and the irregular mixture of several rate-adapted subcodes.

Polynomials use the octal convention with the most significant bit as the
``D^0`` tap, so feedback ``0o7`` is ``1 + D + D^2``. Mother codewords
interleave (systematic, parity) per trellis step; every block is terminated
in the zero state with ``memory`` tail steps whose bits are transmitted too.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import kernels
from .constellation import LLR_MAX

DECODE_MODES = ("full", "maxlog")


@dataclass(frozen=True)
class RscCode:
    feedback: int = 0o23
    feedforward: int = 0o35
    memory: int = 4
    _trellis: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        limit = 1 << (self.memory + 1)
        for name, poly in (("feedback", self.feedback), ("feedforward", self.feedforward)):
            if not 0 < poly < limit:
                raise ValueError(f"{name} polynomial {poly:o} does not fit memory {self.memory}")
        if not (self.feedback >> self.memory) & 1:
            raise ValueError("feedback polynomial needs its constant term")

    @property
    def base_rate(self) -> Fraction:
        return Fraction(1, 2)

    @property
    def n_states(self) -> int:
        return 1 << self.memory

    def _taps(self, poly: int) -> list[int]:
        return [(poly >> (self.memory - k)) & 1 for k in range(self.memory + 1)]

    def trellis(self):
        """``(next_state, parity, tail_input)`` tables.

        The state integer holds the register ``a[t-1] .. a[t-memory]`` MSB-first.
        """
        if not self._trellis:
            nu = self.memory
            fb, ff = self._taps(self.feedback), self._taps(self.feedforward)
            S = self.n_states
            next_state = np.empty((S, 2), dtype=np.int32)
            parity = np.empty((S, 2), dtype=np.uint8)
            tail = np.empty(S, dtype=np.uint8)
            for s in range(S):
                reg = [(s >> (nu - k)) & 1 for k in range(1, nu + 1)]
                fbsum = sum(fb[k] * reg[k - 1] for k in range(1, nu + 1)) & 1
                ffsum = sum(ff[k] * reg[k - 1] for k in range(1, nu + 1)) & 1
                tail[s] = fbsum
                for u in (0, 1):
                    a = u ^ fbsum
                    parity[s, u] = (ff[0] * a) ^ ffsum
                    next_state[s, u] = (a << (nu - 1)) | (s >> 1)
            for arr in (next_state, parity, tail):
                arr.setflags(write=False)
            self._trellis.update(next_state=next_state, parity=parity, tail=tail)
        t = self._trellis
        return t["next_state"], t["parity"], t["tail"]

    def encode_mother(self, info) -> np.ndarray:
        """Terminated rate-1/2 codeword, ``2 * (K + memory)`` bits."""
        info = np.asarray(info, dtype=np.uint8)
        next_state, parity, tail = self.trellis()
        K = info.size
        out = np.empty((K + self.memory, 2), dtype=np.uint8)
        s = 0
        for t in range(K + self.memory):
            u = int(info[t]) if t < K else int(tail[s])
            out[t, 0] = u
            out[t, 1] = parity[s, u]
            s = int(next_state[s, u])
        assert s == 0
        return out.reshape(-1)


@dataclass(frozen=True)
class RateAdapter:
    """Periodic repetition counts over mother-code positions.

    ``counts`` covers ``period`` trellis steps (``2 * period`` positions,
    systematic first within each step): 0 punctures a position, 1 sends it
    once, ``r > 1`` repeats it ``r`` times.
    """

    counts: tuple

    def __post_init__(self):
        c = tuple(int(x) for x in self.counts)
        if not c or len(c) % 2 or min(c) < 0 or sum(c) == 0:
            raise ValueError("counts must be non-negative, non-empty, cover whole steps")
        object.__setattr__(self, "counts", c)

    @property
    def period(self) -> int:
        return len(self.counts) // 2

    @property
    def effective_rate(self) -> Fraction:
        return Fraction(self.period, sum(self.counts))

    @classmethod
    def identity(cls) -> "RateAdapter":
        return cls((1, 1))

    @classmethod
    def for_rate(cls, rate, max_denominator: int = 100) -> "RateAdapter":
        """Mask reaching ``rate`` exactly after rounding it to a fraction.

        Rates below 1/2 repeat positions (base count everywhere, extras spread
        evenly, systematic positions first); rates above 1/2 keep every
        systematic bit and an evenly spaced share of parity bits.
        """
        r = Fraction(rate).limit_denominator(max_denominator)
        if not 0 < r <= 1:
            raise ValueError(f"rate must be in (0, 1], got {rate}")
        p, q = r.numerator, r.denominator
        positions = 2 * p
        if q >= positions:
            base, extra = divmod(q, positions)
            counts = [base] * positions
            order = list(range(0, positions, 2)) + list(range(1, positions, 2))
            for k in range(extra):
                counts[order[(k * positions) // extra]] += 1
        else:
            counts = [1, 0] * p
            keep = q - p
            for k in range(keep):
                counts[2 * ((k * p) // keep) + 1] = 1
        return cls(tuple(counts))

    def tile(self, n_steps: int) -> np.ndarray:
        reps = -(-n_steps // self.period)
        return np.tile(np.asarray(self.counts, dtype=np.int64), reps)[: 2 * n_steps]


def coded_length(code: RscCode, adapter: RateAdapter, n_info: int) -> int:
    return int(adapter.tile(n_info + code.memory).sum())


def encode(code: RscCode, adapter: RateAdapter, info) -> np.ndarray:
    info = np.asarray(info)
    if info.size == 0:
        raise ValueError("cannot encode an empty info word")
    if not np.all((info == 0) | (info == 1)):
        raise ValueError("info bits must be 0 or 1")
    mother = code.encode_mother(info)
    return np.repeat(mother, adapter.tile(info.size + code.memory))


def _infer_info_len(code, adapter, n_coded):
    lo, hi = 1, max(1, n_coded)
    while lo < hi:
        mid = (lo + hi) // 2
        if coded_length(code, adapter, mid) < n_coded:
            lo = mid + 1
        else:
            hi = mid
    if coded_length(code, adapter, lo) != n_coded:
        raise ValueError(f"{n_coded} LLRs do not match any codeword length")
    return lo


def bcjr_decode(code: RscCode, adapter: RateAdapter, prior_llrs, mode: str = "full",
                n_info: int | None = None):
    """SISO decoding of one terminated block.

    ``prior_llrs`` holds one LLR per transmitted bit (positive = 0); repeated
    copies are combined and punctured positions enter as 0. Returns
    ``(extrinsic, info_posterior)``: the extrinsic LLR of every transmitted
    bit (its own prior removed) and the a-posteriori LLRs of the info bits.
    """
    if mode not in DECODE_MODES:
        raise ValueError(f"mode must be one of {DECODE_MODES}")
    llrs = np.asarray(prior_llrs, dtype=np.float64)
    if n_info is None:
        n_info = _infer_info_len(code, adapter, llrs.size)
    steps = n_info + code.memory
    counts = adapter.tile(steps)
    if llrs.size != counts.sum():
        raise ValueError(f"expected {counts.sum()} LLRs for K={n_info}, got {llrs.size}")
    pos = np.repeat(np.arange(2 * steps), counts)
    mother_prior = np.bincount(pos, weights=llrs, minlength=2 * steps)

    next_state, parity, _ = code.trellis()
    post = kernels.bcjr(
        np.ascontiguousarray(next_state),
        np.ascontiguousarray(parity),
        np.ascontiguousarray(mother_prior.reshape(steps, 2)),
        mode == "maxlog",
    ).reshape(-1)
    post = np.clip(post, -LLR_MAX, LLR_MAX)
    mother_ext = post - mother_prior
    extrinsic = np.clip(mother_ext[pos] + (mother_prior[pos] - llrs), -LLR_MAX, LLR_MAX)
    return extrinsic, post[0 : 2 * n_info : 2].copy()


def hard_decisions(llrs) -> np.ndarray:
    return (np.asarray(llrs) < 0).astype(np.uint8)


@dataclass(frozen=True)
class Interleaver:
    perm: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ValueError("perm must be a permutation of 0..len-1")
        perm.setflags(write=False)
        object.__setattr__(self, "perm", perm)

    @classmethod
    def random(cls, length: int, seed) -> "Interleaver":
        return cls(np.random.default_rng(seed).permutation(length), seed)

    @classmethod
    def identity(cls, length: int) -> "Interleaver":
        return cls(np.arange(length))

    def __len__(self):
        return self.perm.size

    def interleave(self, seq) -> np.ndarray:
        seq = np.asarray(seq)
        if seq.shape[0] != self.perm.size:
            raise ValueError(f"length {seq.shape[0]} != interleaver length {self.perm.size}")
        return seq[self.perm]

    def deinterleave(self, seq) -> np.ndarray:
        seq = np.asarray(seq)
        if seq.shape[0] != self.perm.size:
            raise ValueError(f"length {seq.shape[0]} != interleaver length {self.perm.size}")
        out = np.empty_like(seq)
        out[self.perm] = seq
        return out


# j, R_j, alpha_j (alpha_j = share of coded bits produced by subcode j)
DEFAULT_IRCC_TABLE = (
    (1, "0.10", "0.254042"),
    (2, "0.15", "0.292594"),
    (3, "0.20", "0.003651"),
    (4, "0.25", "0.133594"),
    (5, "0.30", "0.054518"),
    (6, "0.35", "0.032276"),
    (7, "0.40", "0.092666"),
    (8, "0.45", "0.000000"),
    (9, "0.50", "0.000000"),
    (10, "0.55", "0.105838"),
    (11, "0.60", "0.030820"),
)


@dataclass(frozen=True)
class IrccSpec:
    """Weighted mixture of rate-adapted subcodes.

    ``weights[j]`` is the fraction of coded bits produced by subcode ``j``, so
    the overall rate is ``sum(weights[j] * rates[j])``. Weight sums are
    checked in exact decimal arithmetic against a 1e-6 tolerance.
    """

    rates: tuple
    weights: tuple

    def __post_init__(self):
        rates = tuple(Fraction(str(r)) for r in self.rates)
        weights = tuple(Fraction(str(w)) for w in self.weights)
        if len(rates) != len(weights) or not rates:
            raise ValueError("rates and weights must be non-empty and equally long")
        if any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
        if abs(sum(weights) - 1) > Fraction(1, 10**6):
            raise ValueError(f"weights sum to {float(sum(weights))}, expected 1")
        if any(not 0 < r <= 1 for r in rates):
            raise ValueError("subcode rates must lie in (0, 1]")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "weights", weights)

    @property
    def total_rate(self) -> float:
        return float(sum(w * r for w, r in zip(self.weights, self.rates)))

    @property
    def adapters(self) -> tuple:
        return tuple(RateAdapter.for_rate(r) for r in self.rates)

    @classmethod
    def default(cls) -> "IrccSpec":
        return cls(tuple(r for _, r, _ in DEFAULT_IRCC_TABLE),
                   tuple(a for _, _, a in DEFAULT_IRCC_TABLE))

    @classmethod
    def single(cls, rate="0.5") -> "IrccSpec":
        return cls((rate,), ("1",))

    @classmethod
    def from_text(cls, text: str) -> "IrccSpec":
        """Parse whitespace/comma separated rows ``j R_j alpha_j``.

        ``#`` starts a comment; a non-numeric header row is skipped.
        """
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            cols = [c for c in re.split(r"[,\s]+", line) if c]
            if len(cols) != 3:
                raise ValueError(f"line {lineno}: expected 3 columns, got {len(cols)}")
            try:
                j = int(cols[0])
                Fraction(cols[1]), Fraction(cols[2])
            except ValueError:
                if not rows:
                    continue
                raise ValueError(f"line {lineno}: not numeric") from None
            rows.append((j, cols[1], cols[2]))
        if not rows:
            raise ValueError("no subcode rows found")
        rows.sort()
        return cls(tuple(r for _, r, _ in rows), tuple(a for _, _, a in rows))

    @classmethod
    def load(cls, path) -> "IrccSpec":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class Segment:
    subcode: int
    info_start: int
    info_len: int
    coded_start: int
    coded_len: int
    adapter: RateAdapter


@dataclass(frozen=True)
class IrccCodec:
    """Segmented encoder/decoder built by :func:`assemble_ircc`."""

    code: RscCode
    n_info: int
    segments: tuple

    @property
    def n_coded(self) -> int:
        last = self.segments[-1]
        return last.coded_start + last.coded_len

    @property
    def rate(self) -> float:
        return self.n_info / self.n_coded

    def encode(self, info) -> np.ndarray:
        info = np.asarray(info, dtype=np.uint8)
        if info.size != self.n_info:
            raise ValueError(f"expected {self.n_info} info bits, got {info.size}")
        return np.concatenate([
            encode(self.code, seg.adapter, info[seg.info_start : seg.info_start + seg.info_len])
            for seg in self.segments
        ])

    def decode(self, prior_llrs, mode: str = "full"):
        """Per-segment BCJR. Returns ``(extrinsic, info_posterior)``."""
        llrs = np.asarray(prior_llrs, dtype=np.float64)
        if llrs.size != self.n_coded:
            raise ValueError(f"expected {self.n_coded} LLRs, got {llrs.size}")
        ext = np.empty(self.n_coded)
        post = np.empty(self.n_info)
        for seg in self.segments:
            cs = slice(seg.coded_start, seg.coded_start + seg.coded_len)
            e, p = bcjr_decode(self.code, seg.adapter, llrs[cs], mode, seg.info_len)
            ext[cs] = e
            post[seg.info_start : seg.info_start + seg.info_len] = p
        return ext, post


def segment_lengths(spec: IrccSpec, total_info_len: int) -> list[int]:
    """Info bits per subcode: ``floor(share_j * K)``, residue to the last
    nonzero-weight subcode, where ``share_j = alpha_j R_j / R``."""
    R = sum(w * r for w, r in zip(spec.weights, spec.rates))
    shares = [w * r / R for w, r in zip(spec.weights, spec.rates)]
    lengths = [math.floor(s * total_info_len) for s in shares]
    last = max(j for j, w in enumerate(spec.weights) if w > 0)
    lengths[last] += total_info_len - sum(lengths)
    return lengths


def assemble_ircc(spec: IrccSpec, total_info_len: int, code: RscCode | None = None) -> IrccCodec:
    """Partition the info word into consecutive per-subcode segments.

    Zero-weight subcodes and segments that round to zero length are skipped.
    """
    if total_info_len < 1:
        raise ValueError("total_info_len must be >= 1")
    code = code or RscCode()
    segments = []
    info_start = coded_start = 0
    for j, (n, adapter) in enumerate(zip(segment_lengths(spec, total_info_len), spec.adapters)):
        if n == 0 or spec.weights[j] == 0:
            continue
        n_coded = coded_length(code, adapter, n)
        segments.append(Segment(j, info_start, n, coded_start, n_coded, adapter))
        info_start += n
        coded_start += n_coded
    return IrccCodec(code, total_info_len, tuple(segments))
