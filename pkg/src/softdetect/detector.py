"""Extrinsic bit LLRs from a channel observation.

Four detectors are provided:

``app``            exact a-posteriori detection, over bit patterns (``domain="bit"``)
                   or over symbols with aggregated priors (``domain="symbol"``)
``maxlog_bit``     max-log over bit patterns
``maxlog_sym``     max-log over symbols, priors aggregated per symbol first
``maxlog_bitsym``  max-log over symbols where the per-symbol prior is formed
                   by folding the pattern log-priors with a max* variant

All computation is in the log domain. Outputs are extrinsic (the prior of
bit ``n`` never enters ``L_n``), positive when bit 0 is more likely, and
clamped to ``+-LLR_MAX``.

Observations may be batched: ``y`` of shape ``T`` yields LLRs of shape
``T + (N,)``; priors either share that batch shape or have shape ``(N,)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .channel import AwgnChannel
from .constellation import (
    LLR_MAX,
    BitPriorSet,
    Constellation,
    aggregate_log_priors,
    excluded_pattern_log_priors,
    segment_logsumexp,
)

ALGORITHMS = ("app", "maxlog_bit", "maxlog_sym", "maxlog_bitsym")
MAXSTAR_IMPLS = ("exact", "approx_max", "table_lookup")

TABLE_CELLS = 8
TABLE_RANGE = 5.0
_TABLE_WIDTH = TABLE_RANGE / TABLE_CELLS
CORRECTION_TABLE = np.log1p(np.exp(-(np.arange(TABLE_CELLS) + 0.5) * _TABLE_WIDTH))

# patterns x observations processed per chunk in the bit domain
_CHUNK_ELEMS = 1 << 22


def correction_term(delta, impl: str = "exact"):
    """Correction ``log(1 + exp(-delta))`` for ``delta = |a - b| >= 0``."""
    delta = np.asarray(delta, dtype=np.float64)
    if impl == "exact":
        out = np.log1p(np.exp(-delta))
    elif impl == "approx_max":
        out = np.zeros_like(delta)
    elif impl == "table_lookup":
        cell = np.minimum(
            np.floor(np.where(np.isfinite(delta), delta, TABLE_RANGE) / _TABLE_WIDTH),
            TABLE_CELLS,
        ).astype(np.int64)
        out = np.where(cell < TABLE_CELLS, CORRECTION_TABLE[np.minimum(cell, TABLE_CELLS - 1)], 0.0)
    else:
        raise ValueError(f"unknown max* implementation {impl!r}")
    return float(out) if out.ndim == 0 else out


def maxstar(a, b, impl: str = "exact"):
    """``log(exp(a) + exp(b))``, or an approximation of it.

    ``approx_max`` drops the correction term entirely; ``table_lookup`` reads it
    from an 8-cell table over ``|a - b| < 5``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    with np.errstate(invalid="ignore"):
        delta = np.where(np.isfinite(hi), hi - lo, np.inf)
    out = hi + correction_term(delta, impl)
    return float(out) if np.ndim(out) == 0 else out


def maxstar_reduce(values, impl: str = "exact", axis: int = -1):
    """Fold :func:`maxstar` over ``axis``.

    The exact fold is evaluated as a max-shifted log-sum-exp, which equals any
    fold order to rounding.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.shape[axis] == 0:
        raise ValueError("maxstar_reduce of an empty sequence")
    if impl == "approx_max":
        out = np.max(v, axis=axis)
    elif impl == "exact":
        m = np.max(v, axis=axis, keepdims=True)
        m_safe = np.where(np.isfinite(m), m, 0.0)
        with np.errstate(divide="ignore"):
            s = np.log(np.sum(np.exp(v - m_safe), axis=axis, keepdims=True))
        out = np.squeeze(np.where(np.isfinite(m), m_safe + s, m), axis=axis)
    elif impl == "table_lookup":
        v = np.moveaxis(v, axis, -1)
        out = v[..., 0]
        for k in range(1, v.shape[-1]):
            out = maxstar(out, v[..., k], impl)
    else:
        raise ValueError(f"unknown max* implementation {impl!r}")
    return float(out) if np.ndim(out) == 0 else out


def _segment_reduce(values, starts, impl):
    if impl == "exact":
        return segment_logsumexp(values, starts)
    if impl == "approx_max":
        return np.maximum.reduceat(values, starts, axis=-1)
    bounds = np.r_[starts, values.shape[-1]]
    return np.stack(
        [maxstar_reduce(values[..., lo:hi], impl) for lo, hi in zip(bounds[:-1], bounds[1:])],
        axis=-1,
    )


@dataclass(frozen=True)
class DetectorMode:
    algorithm: str = "app"
    maxstar_impl: str = "exact"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.maxstar_impl not in MAXSTAR_IMPLS:
            raise ValueError(f"unknown max* implementation {self.maxstar_impl!r}")
        if self.algorithm in ("maxlog_bit", "maxlog_sym") and self.maxstar_impl != "approx_max":
            raise ValueError(f"{self.algorithm} uses approx_max by definition")
        if self.algorithm == "app" and self.maxstar_impl == "approx_max":
            raise ValueError("app needs exact or table_lookup max*")

    @classmethod
    def parse(cls, name: str) -> "DetectorMode":
        """CLI names: ``app``, ``maxlog-bit``, ``maxlog-sym``, ``maxlog-bitsym``."""
        algo = name.strip().lower().replace("-", "_")
        if algo in ("maxlog_bit", "maxlog_sym"):
            return cls(algo, "approx_max")
        return cls(algo, "exact")


@dataclass
class Diagnostics:
    """Work counters, summed over all observations of a call."""

    maxstar_calls: int = 0
    max_calls: int = 0
    branch_count: int = 0
    patterns_visited: int = 0

    def count_reduce(self, n_items: int, n_obs: int, impl: str):
        combines = max(n_items - 1, 0) * n_obs
        if impl == "approx_max":
            self.max_calls += combines
        else:
            self.maxstar_calls += combines


def _broadcast_priors(c: Constellation, priors, batch: tuple) -> BitPriorSet:
    if priors is None:
        return BitPriorSet.uniform(c.n_bits, batch)
    if priors.n_bits != c.n_bits:
        raise ValueError(f"priors have {priors.n_bits} bits, constellation {c.n_bits}")
    if priors.batch_shape == batch:
        return priors
    shape = batch + (c.n_bits,)
    try:
        return BitPriorSet(
            np.broadcast_to(priors.log_p0, shape), np.broadcast_to(priors.log_p1, shape)
        )
    except ValueError:
        raise ValueError(
            f"prior batch shape {priors.batch_shape} does not match observations {batch}"
        ) from None


def _bit_domain(c, priors, ll, impl, diag):
    N = c.n_bits
    batch = priors.batch_shape
    n_obs = int(np.prod(batch))
    if diag is not None:
        half = 1 << (N - 1)
        diag.patterns_visited += 2 * N * half * n_obs
        diag.branch_count += N * ((1 << N) - 2) * n_obs
        for _ in range(2 * N):
            diag.count_reduce(half, n_obs, impl)
    if impl != "table_lookup":
        out = kernels.pattern_llrs(
            np.ascontiguousarray(priors.log_p0.reshape(-1, N)),
            np.ascontiguousarray(priors.log_p1.reshape(-1, N)),
            np.ascontiguousarray(ll.reshape(-1, c.size)),
            c.mapper,
            impl == "approx_max",
        )
        return out.reshape(batch + (N,))

    out = np.empty(batch + (N,))
    # patterns with b_n = b are a strided view of the MSB-first pattern table
    ll_pat = ll[..., c.mapper]
    for n in range(N):
        lp, _ = excluded_pattern_log_priors(priors, n)
        lp = lp.reshape(batch + (1 << n, 1 << (N - 1 - n)))
        ll_view = ll_pat.reshape(batch + (1 << n, 2, 1 << (N - 1 - n)))
        r = [
            maxstar_reduce((lp + ll_view[..., b, :]).reshape(batch + (-1,)), impl)
            for b in (0, 1)
        ]
        out[..., n] = np.asarray(r[0]) - np.asarray(r[1])
    return out


def _symbol_domain(c, priors, ll, impl, method, diag):
    out = np.empty(priors.batch_shape + (c.n_bits,))
    n_obs = int(np.prod(priors.batch_shape))
    for n in range(c.n_bits):
        r = []
        for b in (0, 1):
            agg = aggregate_log_priors(c, priors, n, b, method)
            metric = agg.log_pz + ll[..., agg.indices]
            r.append(maxstar_reduce(metric, impl))
            if diag is not None:
                diag.branch_count += agg.branch_count * n_obs
                diag.count_reduce(metric.shape[-1], n_obs, impl)
        out[..., n] = np.asarray(r[0]) - np.asarray(r[1])
    return out


def _bitsym_domain(c, priors, ll, inner_impl, diag):
    out = np.empty(priors.batch_shape + (c.n_bits,))
    n_obs = int(np.prod(priors.batch_shape))
    for n in range(c.n_bits):
        lp, branches = excluded_pattern_log_priors(priors, n)
        if diag is not None:
            diag.branch_count += branches * n_obs
        r = []
        for b in (0, 1):
            order, starts = c.grouping(n, b)
            inner = _segment_reduce(lp[..., order], starts, inner_impl)
            metric = inner + ll[..., c.subsets[n][b]]
            r.append(np.max(metric, axis=-1))
            if diag is not None:
                diag.patterns_visited += lp.shape[-1] * n_obs
                diag.count_reduce(lp.shape[-1] - starts.size + 1, n_obs, inner_impl)
                diag.count_reduce(metric.shape[-1], n_obs, "approx_max")
        out[..., n] = r[0] - r[1]
    return out


def _run(c, priors, y, ch, kernel, bit_patterns: bool):
    y_arr = np.asarray(y, dtype=np.complex128)
    scalar = y_arr.ndim == 0
    batch = y_arr.shape
    priors = _broadcast_priors(c, priors, batch)
    y_flat = y_arr.reshape(-1)
    lp0 = priors.log_p0.reshape(-1, c.n_bits)
    lp1 = priors.log_p1.reshape(-1, c.n_bits)
    width = (1 << (c.n_bits - 1)) if bit_patterns else max(c.size, 1)
    chunk = max(1, _CHUNK_ELEMS // width)
    pieces = []
    for lo in range(0, max(y_flat.size, 1), chunk):
        sl = slice(lo, lo + chunk)
        ll = ch.log_likelihood(y_flat[sl, None], c.values)
        # validated already; skip re-normalization checks on the slices
        p = object.__new__(BitPriorSet)
        object.__setattr__(p, "log_p0", lp0[sl])
        object.__setattr__(p, "log_p1", lp1[sl])
        pieces.append(kernel(p, ll))
    L = np.concatenate(pieces, axis=0) if pieces else np.empty((0, c.n_bits))
    L = np.clip(L, -LLR_MAX, LLR_MAX).reshape(batch + (c.n_bits,))
    return L.reshape(c.n_bits) if scalar else L


def app_llr(
    c: Constellation,
    priors: BitPriorSet | None,
    y,
    ch: AwgnChannel,
    domain: str = "symbol",
    impl: str = "exact",
    diagnostics: Diagnostics | None = None,
):
    """Exact APP extrinsic LLRs.

    ``domain="bit"`` sums over all 2**(N-1) patterns per hypothesis;
    ``domain="symbol"`` sums over the points of each subset weighted by the
    aggregated prior of the patterns reaching them. The two agree for any
    constellation. ``impl="table_lookup"`` swaps the exact correction term for
    the lookup table.
    """
    if impl == "approx_max":
        raise ValueError("use maxlog_bit_llr / maxlog_sym_llr for max-log detection")
    if domain == "bit":
        return _run(c, priors, y, ch,
                    lambda p, ll: _bit_domain(c, p, ll, impl, diagnostics), True)
    if domain == "symbol":
        return _run(c, priors, y, ch,
                    lambda p, ll: _symbol_domain(c, p, ll, impl, "auto", diagnostics), False)
    raise ValueError(f"domain must be 'bit' or 'symbol', got {domain!r}")


def maxlog_bit_llr(c, priors, y, ch, diagnostics: Diagnostics | None = None):
    """Max-log over bit patterns: the best pattern per hypothesis wins.

    Multiplicities of non-bijective alphabets are invisible to this detector.
    """
    return _run(c, priors, y, ch,
                lambda p, ll: _bit_domain(c, p, ll, "approx_max", diagnostics), True)


def maxlog_sym_llr(c, priors, y, ch, method: str = "auto",
                   diagnostics: Diagnostics | None = None):
    """Max-log over symbols, each weighted by its aggregated prior mass."""
    return _run(c, priors, y, ch,
                lambda p, ll: _symbol_domain(c, p, ll, "approx_max", method, diagnostics),
                False)


def maxlog_bitsym_llr(c, priors, y, ch, inner_impl: str = "exact",
                      diagnostics: Diagnostics | None = None):
    """Max-log over symbols with pattern priors folded per symbol by ``inner_impl``.

    With ``inner_impl="exact"`` this reproduces :func:`maxlog_sym_llr`; with
    ``approx_max`` it collapses to :func:`maxlog_bit_llr`.
    """
    if inner_impl not in MAXSTAR_IMPLS:
        raise ValueError(f"unknown max* implementation {inner_impl!r}")
    return _run(c, priors, y, ch,
                lambda p, ll: _bitsym_domain(c, p, ll, inner_impl, diagnostics), True)


def detect(c, priors, y, ch, mode: DetectorMode = DetectorMode(),
           diagnostics: Diagnostics | None = None):
    """Dispatch on ``mode.algorithm``."""
    if mode.algorithm == "app":
        return app_llr(c, priors, y, ch, "symbol", mode.maxstar_impl, diagnostics)
    if mode.algorithm == "maxlog_bit":
        return maxlog_bit_llr(c, priors, y, ch, diagnostics)
    if mode.algorithm == "maxlog_sym":
        return maxlog_sym_llr(c, priors, y, ch, diagnostics=diagnostics)
    return maxlog_bitsym_llr(c, priors, y, ch, mode.maxstar_impl, diagnostics)


def bpsk_llr(y, sigma2: float):
    """Closed form for BPSK without priors: ``4 Re{y} / sigma2``."""
    return np.clip(4.0 * np.real(y) / sigma2, -LLR_MAX, LLR_MAX)


__all__ = [
    "ALGORITHMS",
    "MAXSTAR_IMPLS",
    "CORRECTION_TABLE",
    "DetectorMode",
    "Diagnostics",
    "app_llr",
    "bpsk_llr",
    "correction_term",
    "detect",
    "maxlog_bit_llr",
    "maxlog_bitsym_llr",
    "maxlog_sym_llr",
    "maxstar",
    "maxstar_reduce",
]

