"""Symbol alphabets and aggregated a-priori masses.

A constellation is described by its distinct points and a total map from the
2**N bit patterns onto those points. Non-bijective alphabets (superposition
modulation) send several patterns to the same point; the number of patterns
landing on a point is its multiplicity.

Bit patterns are indexed MSB-first: pattern index ``p`` carries bit ``n`` at
``(p >> (N - 1 - n)) & 1``. Bit value 0 maps to the positive chip.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LLR_MAX = 50.0
SYMBOL_TOL = 1e-9
FORMAT_NAME = "softdetect-constellation"
FORMAT_VERSION = 1
MAPPER_MAX_BITS = 16

BIJECTIVE_SCHEMES = ("bpsk", "qpsk", "psk8", "qam16_gray")


def pattern_bits(n_bits: int) -> np.ndarray:
    """Return the (2**n_bits, n_bits) table of bit patterns, MSB-first."""
    idx = np.arange(1 << n_bits, dtype=np.int64)
    shifts = np.arange(n_bits - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ConstellationPoint:
    value: complex
    index: int
    multiplicity: int


@dataclass(frozen=True, eq=False)
class Constellation:
    """Symbol alphabet with its bit-pattern map.

    Use :meth:`from_patterns`, :meth:`from_layers` or the ``build_*`` helpers
    rather than the raw constructor.
    """

    values: np.ndarray
    multiplicity: np.ndarray
    n_bits: int
    mapper: np.ndarray
    subsets: tuple
    layer_spec: np.ndarray | None = None
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_patterns(cls, pattern_values, n_bits, layer_spec=None, name=""):
        """Build from the symbol produced by each of the 2**n_bits patterns.

        Patterns whose symbols agree within ``SYMBOL_TOL`` per coordinate are
        merged into one point; points are numbered by first occurrence.
        """
        pattern_values = np.asarray(pattern_values, dtype=np.complex128)
        if pattern_values.shape != (1 << n_bits,):
            raise ValueError(
                f"expected {1 << n_bits} pattern values, got {pattern_values.shape}"
            )
        keys = np.rint(
            np.stack([pattern_values.real, pattern_values.imag], axis=1) / SYMBOL_TOL
        ).astype(np.int64)
        _, first, inverse = np.unique(
            keys, axis=0, return_index=True, return_inverse=True
        )
        inverse = inverse.reshape(-1)
        # renumber unique keys by first occurrence
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        mapper = rank[inverse]
        values = pattern_values[first[order]]
        multiplicity = np.bincount(mapper, minlength=values.size)

        bits = pattern_bits(n_bits)
        subsets = tuple(
            tuple(np.unique(mapper[bits[:, n] == b]) for b in (0, 1))
            for n in range(n_bits)
        )
        return cls(
            values=_readonly(values),
            multiplicity=_readonly(multiplicity.astype(np.int64)),
            n_bits=n_bits,
            mapper=_readonly(mapper.astype(np.int64)),
            subsets=tuple(tuple(_readonly(s) for s in pair) for pair in subsets),
            layer_spec=None if layer_spec is None else _readonly(
                np.asarray(layer_spec, dtype=np.complex128)
            ),
            name=name,
        )

    @classmethod
    def from_layers(cls, chips: Sequence[complex], name=""):
        """Superposition of binary chips: bit ``i`` contributes ``+chips[i]``
        when 0 and ``-chips[i]`` when 1."""
        chips = np.asarray(chips, dtype=np.complex128)
        n_bits = chips.size
        bits = pattern_bits(n_bits)
        values = np.zeros(1 << n_bits, dtype=np.complex128)
        for i in range(n_bits):
            values += chips[i] * (1.0 - 2.0 * bits[:, i])
        return cls.from_patterns(values, n_bits, layer_spec=chips, name=name)

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def kind(self) -> str:
        return "bijective" if self.size == (1 << self.n_bits) else "non-bijective"

    @property
    def is_bijective(self) -> bool:
        return self.kind == "bijective"

    @property
    def points(self) -> list[ConstellationPoint]:
        return [
            ConstellationPoint(complex(v), i, int(m))
            for i, (v, m) in enumerate(zip(self.values, self.multiplicity))
        ]

    def mean_energy(self) -> float:
        """E|x|^2 with every bit pattern equally likely."""
        return float(
            np.sum(self.multiplicity * np.abs(self.values) ** 2) / (1 << self.n_bits)
        )

    def point_index(self, x: complex) -> int:
        """Index of the point within ``SYMBOL_TOL`` of ``x``."""
        d = np.maximum(np.abs(self.values.real - x.real), np.abs(self.values.imag - x.imag))
        i = int(np.argmin(d))
        if d[i] >= SYMBOL_TOL:
            raise KeyError(f"{x} is not a point of {self.name or 'constellation'}")
        return i

    def half_patterns(self, n: int, b: int) -> np.ndarray:
        """Full pattern indices with bit ``n`` fixed to ``b``.

        Entry ``q`` corresponds to the pattern of the remaining N-1 bits whose
        MSB-first index is ``q``.
        """
        key = ("half", n, b)
        if key not in self._cache:
            N = self.n_bits
            q = np.arange(1 << (N - 1), dtype=np.int64)
            low_width = N - 1 - n
            high = q >> low_width
            low = q & ((1 << low_width) - 1)
            full = (high << (N - n)) | (b << low_width) | low
            self._cache[key] = _readonly(full)
        return self._cache[key]

    def grouping(self, n: int, b: int):
        """Sort order and segment starts grouping ``half_patterns(n, b)`` by point.

        Segments appear in the order of ``subsets[n][b]``.
        """
        key = ("group", n, b)
        if key not in self._cache:
            sym = self.mapper[self.half_patterns(n, b)]
            order = np.argsort(sym, kind="stable")
            sorted_sym = sym[order]
            starts = np.flatnonzero(np.r_[True, sorted_sym[1:] != sorted_sym[:-1]])
            assert np.array_equal(sorted_sym[starts], self.subsets[n][b])
            self._cache[key] = (_readonly(order), _readonly(starts))
        return self._cache[key]

    def to_dict(self) -> dict:
        d = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "name": self.name,
            "n_bits": self.n_bits,
            "kind": self.kind,
            "points": [[float(v.real), float(v.imag)] for v in self.values],
            "multiplicity": [int(m) for m in self.multiplicity],
            "layer_spec": None
            if self.layer_spec is None
            else [[float(v.real), float(v.imag)] for v in self.layer_spec],
        }
        if self.n_bits <= MAPPER_MAX_BITS:
            d["mapper"] = [int(i) for i in self.mapper]
        return d

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "Constellation":
        if d.get("format") != FORMAT_NAME:
            raise ValueError(f"not a {FORMAT_NAME} document")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported version {d.get('version')}")
        n_bits = int(d["n_bits"])
        layer_spec = d.get("layer_spec")
        if layer_spec is not None:
            layer_spec = [complex(re, im) for re, im in layer_spec]
        if "mapper" in d:
            pts = np.array([complex(re, im) for re, im in d["points"]])
            mapper = np.asarray(d["mapper"], dtype=np.int64)
            c = cls.from_patterns(pts[mapper], n_bits, layer_spec, d.get("name", ""))
        elif layer_spec is not None:
            c = cls.from_layers(layer_spec, d.get("name", ""))
        else:
            raise ValueError("document has neither a mapper table nor a layer_spec")
        if c.size != len(d["points"]) or list(c.multiplicity) != list(d["multiplicity"]):
            raise ValueError("points/multiplicity inconsistent with mapper")
        return c

    @classmethod
    def from_json(cls, text: str) -> "Constellation":
        return cls.from_dict(json.loads(text))


def build_dsm_epa(n_bits: int) -> Constellation:
    """Direct superposition modulation with equal power allocation.

    Bits ``0 .. N/2-1`` each add a real chip of amplitude ``1/sqrt(N)``, bits
    ``N/2 .. N-1`` an imaginary one. The alphabet has ``N**2/4 + N + 1`` points.
    """
    if isinstance(n_bits, bool) or not isinstance(n_bits, (int, np.integer)):
        raise TypeError("n_bits must be an integer")
    if n_bits < 2 or n_bits % 2:
        raise ValueError(f"n_bits must be even and >= 2, got {n_bits}")
    a = 1.0 / math.sqrt(n_bits)
    half = n_bits // 2
    chips = [a] * half + [1j * a] * half
    return Constellation.from_layers(chips, name=f"dsm-epa:{n_bits}")


def _gray(k: int) -> int:
    return k ^ (k >> 1)


def build_bijective(scheme: str) -> Constellation:
    """Unit-energy bijective reference alphabets (Gray labelled where it matters)."""
    if scheme == "bpsk":
        return Constellation.from_patterns([1.0, -1.0], 1, name="bpsk")
    if scheme == "qpsk":
        bits = pattern_bits(2).astype(float)
        vals = ((1 - 2 * bits[:, 0]) + 1j * (1 - 2 * bits[:, 1])) / math.sqrt(2)
        return Constellation.from_patterns(vals, 2, name="qpsk")
    if scheme == "psk8":
        vals = np.empty(8, dtype=np.complex128)
        for k in range(8):
            vals[_gray(k)] = np.exp(2j * np.pi * k / 8)
        return Constellation.from_patterns(vals, 3, name="psk8")
    if scheme == "qam16_gray":
        bits = pattern_bits(4).astype(float)

        def pam(b0, b1):
            # 01 -> 3, 00 -> 1, 10 -> -1, 11 -> -3
            return (1 - 2 * b0) * (2 - (1 - 2 * b1))

        vals = (pam(bits[:, 0], bits[:, 1]) + 1j * pam(bits[:, 2], bits[:, 3])) / math.sqrt(10)
        return Constellation.from_patterns(vals, 4, name="qam16")
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {BIJECTIVE_SCHEMES}")


def parse_constellation(spec: str) -> Constellation:
    """Parse ``dsm-epa:N``, ``bpsk``, ``qpsk``, ``psk8`` or ``qam16``."""
    spec = spec.strip().lower()
    if spec.startswith("dsm-epa:") or spec.startswith("dsm_epa:"):
        return build_dsm_epa(int(spec.split(":", 1)[1]))
    aliases = {"qam16": "qam16_gray", "qam16-gray": "qam16_gray"}
    return build_bijective(aliases.get(spec, spec))


def map_bits(c: Constellation, bits) -> ConstellationPoint:
    bits = np.asarray(bits)
    if bits.shape != (c.n_bits,):
        raise ValueError(f"expected {c.n_bits} bits, got shape {bits.shape}")
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0 or 1")
    p = 0
    for bit in bits:
        p = (p << 1) | int(bit)
    i = int(c.mapper[p])
    return ConstellationPoint(complex(c.values[i]), i, int(c.multiplicity[i]))


def modulate(c: Constellation, bits) -> np.ndarray:
    """Map a flat bit stream (length a multiple of N) onto symbols."""
    bits = np.asarray(bits, dtype=np.int64).reshape(-1, c.n_bits)
    weights = 1 << np.arange(c.n_bits - 1, -1, -1, dtype=np.int64)
    return c.values[c.mapper[bits @ weights]]


@dataclass(frozen=True)
class BitPriorSet:
    """Per-bit a-priori log-probabilities, shape ``(..., N)``.

    Leading axes batch independent observations.
    """

    log_p0: np.ndarray
    log_p1: np.ndarray

    def __post_init__(self):
        lp0 = np.asarray(self.log_p0, dtype=np.float64)
        lp1 = np.asarray(self.log_p1, dtype=np.float64)
        if lp0.shape != lp1.shape or lp0.ndim < 1:
            raise ValueError("log_p0 and log_p1 must share a shape (..., N)")
        with np.errstate(over="ignore"):
            total = np.exp(lp0) + np.exp(lp1)
        if np.any(lp0 > 0) or np.any(lp1 > 0) or not np.allclose(total, 1.0, rtol=0, atol=1e-10):
            raise ValueError("bit priors must be normalized log-probabilities")
        object.__setattr__(self, "log_p0", lp0)
        object.__setattr__(self, "log_p1", lp1)

    @property
    def n_bits(self) -> int:
        return self.log_p0.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.log_p0.shape[:-1]

    @classmethod
    def uniform(cls, n_bits: int, batch_shape=()):
        lp = np.full(tuple(batch_shape) + (n_bits,), -math.log(2.0))
        return cls(lp, lp.copy())

    @classmethod
    def from_llrs(cls, llrs, clamp: float = LLR_MAX):
        """From a-priori LLRs ``log P(b=0)/P(b=1)``, clamped to ``+-clamp``."""
        L = np.clip(np.asarray(llrs, dtype=np.float64), -clamp, clamp)
        return cls(-np.logaddexp(0.0, -L), -np.logaddexp(0.0, L))

    def llrs(self) -> np.ndarray:
        return self.log_p0 - self.log_p1

    def for_bit(self, b: int) -> np.ndarray:
        return self.log_p0 if b == 0 else self.log_p1


@dataclass(frozen=True)
class PriorAggregate:
    """``log P(z(x))`` for every point ``x`` of the subset with ``b_n = b``.

    ``indices`` are the point indices (``subsets[n][b]``); ``log_pz`` has shape
    ``batch + (len(indices),)``.
    """

    n: int
    b: int
    indices: np.ndarray
    log_pz: np.ndarray
    branch_count: int


def excluded_pattern_log_priors(priors: BitPriorSet, n: int):
    """Log-prior of every pattern of the N-1 bits other than ``n``.

    Built as a binary tree over the excluded bits, so the work done is the
    tree's edge count ``2**N - 2``. Returns ``(values, branch_count)`` with
    ``values`` of shape ``batch + (2**(N-1),)`` indexed MSB-first.
    """
    lp0, lp1 = priors.log_p0, priors.log_p1
    batch = priors.batch_shape
    acc = np.zeros(batch + (1,))
    branches = 0
    for i in range(priors.n_bits):
        if i == n:
            continue
        acc = np.stack(
            [acc + lp0[..., i, None], acc + lp1[..., i, None]], axis=-1
        ).reshape(batch + (-1,))
        branches += acc.shape[-1]
    return acc, branches


def segment_logsumexp(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """logsumexp over consecutive segments of the last axis."""
    m = np.maximum.reduceat(values, starts, axis=-1)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    seg = np.repeat(np.arange(starts.size), np.diff(np.r_[starts, values.shape[-1]]))
    with np.errstate(invalid="ignore"):
        s = np.add.reduceat(np.exp(values - m_safe[..., seg]), starts, axis=-1)
    with np.errstate(divide="ignore"):
        return np.where(np.isfinite(m), m_safe + np.log(s), m)


def _aggregate_naive(c: Constellation, priors: BitPriorSet, n: int, b: int):
    lp, branches = excluded_pattern_log_priors(priors, n)
    order, starts = c.grouping(n, b)
    return segment_logsumexp(lp[..., order], starts), branches


def _axis_groups(chips: np.ndarray, exclude: int) -> list[list[int]]:
    re, im, joint = [], [], []
    for i, ch in enumerate(chips):
        if i == exclude:
            continue
        if ch.imag == 0.0:
            re.append(i)
        elif ch.real == 0.0:
            im.append(i)
        else:
            joint.append(i)
    return [g for g in (re, im, joint) if g]


def _find_state(vals: list, v: complex) -> int:
    for k, u in enumerate(vals):
        if abs(u.real - v.real) < SYMBOL_TOL and abs(u.imag - v.imag) < SYMBOL_TOL:
            return k
    return -1


def _aggregate_layered(c: Constellation, priors: BitPriorSet, n: int, b: int):
    # Trellis over partial chip sums with merging of equal sums. Chips along
    # different axes accumulate independently, so each axis runs its own
    # trellis and the per-axis distributions are combined at readout.
    chips = c.layer_spec
    batch = priors.batch_shape
    branches = 0
    group_states = []
    for layers in _axis_groups(chips, n):
        vals = [0j]
        logp = np.zeros(batch + (1,))
        for i in layers:
            new_vals: list = []
            new_terms: list = []
            for s, v in enumerate(vals):
                for bit, sign in ((0, 1.0), (1, -1.0)):
                    term = logp[..., s] + priors.for_bit(bit)[..., i]
                    nv = v + sign * chips[i]
                    k = _find_state(new_vals, nv)
                    if k < 0:
                        new_vals.append(nv)
                        new_terms.append(term)
                    else:
                        new_terms[k] = np.logaddexp(new_terms[k], term)
                    branches += 1
            vals = new_vals
            logp = np.stack(new_terms, axis=-1)
        group_states.append((vals, logp))

    indices = c.subsets[n][b]
    slot = {int(p): k for k, p in enumerate(indices)}
    out = np.full(batch + (indices.size,), -np.inf)
    base = (1.0 - 2.0 * b) * chips[n]
    combos = [(base, np.zeros(batch))]
    for vals, logp in group_states:
        combos = [
            (x + v, lp + logp[..., s]) for x, lp in combos for s, v in enumerate(vals)
        ]
    for x, lp in combos:
        k = slot[c.point_index(x)]
        out[..., k] = np.logaddexp(out[..., k], lp)
    return out, branches


AGGREGATE_METHODS = ("naive", "layered_dp")


def aggregate_log_priors(
    c: Constellation, priors: BitPriorSet, n: int, b: int, method: str = "naive"
) -> PriorAggregate:
    """Aggregate ``log P(z(x))`` over all points reachable with ``b_n = b``.

    ``naive`` enumerates the 2**(N-1) patterns of the other bits; its
    branch count is the edge count of that binary tree. ``layered_dp`` merges
    equal partial chip sums layer by layer (superposition alphabets only);
    its branch count is the number of trellis edges. The final grouping of
    leaves or per-axis states into points is not counted in either.

    ``method="auto"`` picks ``layered_dp`` whenever a layer description is
    available.
    """
    if priors.n_bits != c.n_bits:
        raise ValueError(f"priors have {priors.n_bits} bits, constellation {c.n_bits}")
    if not 0 <= n < c.n_bits or b not in (0, 1):
        raise ValueError(f"invalid bit index/value ({n}, {b})")
    if method == "auto":
        method = "layered_dp" if c.layer_spec is not None else "naive"
    if method == "naive":
        log_pz, branches = _aggregate_naive(c, priors, n, b)
    elif method == "layered_dp":
        if c.layer_spec is None:
            raise ValueError("layered_dp needs a superposition constellation (layer_spec)")
        log_pz, branches = _aggregate_layered(c, priors, n, b)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PriorAggregate(n, b, c.subsets[n][b], log_pz, branches)
