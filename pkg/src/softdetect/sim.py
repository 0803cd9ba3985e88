"""Experiment drivers: LLR sweeps, iterative BICM-ID BER runs, branch counts.

Every stochastic quantity derives from ``SimConfig.seed``: block ``k`` of any
SNR point uses the seed sequence ``(seed, 1, k)`` for its info word and noise,
so detectors and SNR points see common random numbers, and results do not
depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import __version__, kernels
from .channel import AwgnChannel, snr_db_to_sigma2
from .coding import Interleaver, IrccSpec, assemble_ircc, hard_decisions
from .constellation import (
    LLR_MAX,
    BitPriorSet,
    aggregate_log_priors,
    build_dsm_epa,
    modulate,
    parse_constellation,
)
from .detector import DetectorMode, app_llr, detect, maxlog_bit_llr, maxlog_sym_llr

log = logging.getLogger(__name__)

DEFAULT_CODE_ALIAS = "default"
STOPPING_RULE = "genie: stop a block at the first iteration with zero info-bit errors"


@dataclass
class SimConfig:
    constellation: str = "dsm-epa:4"
    detector: str = "app"
    snr_db: tuple = (10.0,)
    info_len: int = 10_000
    iters: int = 20
    seed: int = 0
    bit_index: int = 0
    grid: tuple = (-2.0, 2.0, 0.01)
    code: str | None = None
    prior_llrs: str | None = None
    max_blocks: int = 100
    target_errors: int = 100
    decoder_mode: str = "full"
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        self.snr_db = tuple(float(s) for s in self.snr_db)
        self.grid = tuple(float(g) for g in self.grid)
        if not self.snr_db:
            raise ValueError("SNR list must not be empty")
        if self.info_len < 1 or self.iters < 1:
            raise ValueError("info_len and iters must be >= 1")
        if self.max_blocks < 1 or self.target_errors < 1 or self.workers < 1:
            raise ValueError("max_blocks, target_errors and workers must be >= 1")
        lo, hi, step = self.grid
        if not step > 0 or hi < lo:
            raise ValueError(f"bad grid {self.grid}")
        DetectorMode.parse(self.detector)


@dataclass
class BerRecord:
    snr_db: float
    iteration: int
    bit_errors: int
    bits: int
    ber: float
    blocks: int


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.9g}"


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def write_manifest(path, experiment: str, cfg: SimConfig | None, extra: dict | None = None):
    manifest = {
        "experiment": experiment,
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "git": _git_describe(),
        "config": asdict(cfg) if cfg is not None else None,
    }
    manifest.update(extra or {})
    Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def grid_points(grid) -> np.ndarray:
    lo, hi, step = grid
    n = int(round((hi - lo) / step)) + 1
    return np.linspace(lo, hi, n)


def load_prior_llrs(path, n_bits: int) -> np.ndarray:
    vals = np.array([float(v) for v in Path(path).read_text().replace(",", " ").split()])
    if vals.size != n_bits:
        raise ValueError(f"{path}: expected {n_bits} prior LLRs, got {vals.size}")
    return vals


# --- LLR sweep ---------------------------------------------------------------

SWEEP_HEADER = ("re_y", "L_app", "L_maxlog_bit", "L_maxlog_sym")


def run_llr_sweep(cfg: SimConfig) -> list[tuple]:
    """Detector outputs for bit ``cfg.bit_index`` along the real axis."""
    c = parse_constellation(cfg.constellation)
    if not 0 <= cfg.bit_index < c.n_bits:
        raise ValueError(f"bit index {cfg.bit_index} out of range for N={c.n_bits}")
    if len(cfg.snr_db) != 1:
        raise ValueError("llr-sweep takes exactly one SNR")
    ch = AwgnChannel.from_snr_db(cfg.snr_db[0])
    priors = None
    if cfg.prior_llrs:
        priors = BitPriorSet.from_llrs(load_prior_llrs(cfg.prior_llrs, c.n_bits))
    re_y = grid_points(cfg.grid)
    y = re_y + 0j
    n = cfg.bit_index
    cols = [
        app_llr(c, priors, y, ch)[:, n],
        maxlog_bit_llr(c, priors, y, ch)[:, n],
        maxlog_sym_llr(c, priors, y, ch)[:, n],
    ]
    rows = list(zip(re_y, *cols))
    if cfg.out:
        write_csv(cfg.out, SWEEP_HEADER, rows)
        write_manifest(cfg.out, "llr-sweep", cfg)
    return rows


# --- complexity --------------------------------------------------------------

COMPLEXITY_HEADER = ("N", "branches_naive", "branches_dp")


def branch_counts(n_bits: int) -> tuple[int, int]:
    """Largest naive and layered-DP branch counts over all bit indices."""
    c = build_dsm_epa(n_bits)
    priors = BitPriorSet.uniform(n_bits)
    naive = dp = 0
    for n in range(n_bits):
        naive = max(naive, aggregate_log_priors(c, priors, n, 0, "naive").branch_count)
        dp = max(dp, aggregate_log_priors(c, priors, n, 0, "layered_dp").branch_count)
    return naive, dp


def run_complexity(n_list, out=None) -> list[tuple]:
    n_list = [int(n) for n in n_list]
    rows = [(n, *branch_counts(n)) for n in n_list]
    if out:
        write_csv(out, COMPLEXITY_HEADER, rows)
        write_manifest(out, "complexity", None, {"n_list": n_list})
    return rows


# --- BER ---------------------------------------------------------------------

BER_HEADER = ("snr_db", "iteration", "bit_errors", "bits", "ber", "blocks")


@dataclass
class _Link:
    """Everything a block needs, rebuilt identically in each worker."""

    cfg: SimConfig
    constellation: object = field(init=False)
    codec: object = field(init=False)
    interleaver: Interleaver = field(init=False)
    mode: DetectorMode = field(init=False)

    def __post_init__(self):
        cfg = self.cfg
        self.constellation = parse_constellation(cfg.constellation)
        if not cfg.code:
            spec = IrccSpec.single("0.5")
        elif cfg.code == DEFAULT_CODE_ALIAS:
            spec = IrccSpec.default()
        else:
            spec = IrccSpec.load(cfg.code)
        self.codec = assemble_ircc(spec, cfg.info_len)
        self.interleaver = Interleaver.random(
            self.codec.n_coded, np.random.SeedSequence(cfg.seed, spawn_key=(0,))
        )
        self.mode = DetectorMode.parse(cfg.detector)


_worker_links: dict = {}


def _link_for(cfg: SimConfig) -> _Link:
    key = json.dumps(asdict(cfg), sort_keys=True)
    if key not in _worker_links:
        _worker_links.clear()
        _worker_links[key] = _Link(cfg)
    return _worker_links[key]


def simulate_block(link: _Link, snr_db: float, block: int) -> np.ndarray:
    """Info-bit errors after each iteration of one BICM-ID block.

    After a genie-detected error-free iteration the block stops and the
    remaining entries stay 0.
    """
    cfg, c, codec, pi = link.cfg, link.constellation, link.codec, link.interleaver
    N = c.n_bits
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(1, block))
    data_seed, noise_seed = ss.spawn(2)
    info = np.random.default_rng(data_seed).integers(0, 2, cfg.info_len, dtype=np.uint8)
    coded = codec.encode(info)
    n_coded = coded.size
    pad = (-n_coded) % N
    tx_bits = np.concatenate([pi.interleave(coded), np.zeros(pad, dtype=np.uint8)])
    ch = AwgnChannel(snr_db_to_sigma2(snr_db), noise_seed)
    y = ch.transmit(modulate(c, tx_bits))

    prior = np.zeros(tx_bits.size)
    prior[n_coded:] = LLR_MAX  # padding bits are known zeros
    errors = np.zeros(cfg.iters, dtype=np.int64)
    for it in range(cfg.iters):
        L = detect(c, BitPriorSet.from_llrs(prior.reshape(-1, N)), y, ch, link.mode)
        ext, post = codec.decode(pi.deinterleave(L.reshape(-1)[:n_coded]), cfg.decoder_mode)
        errors[it] = np.count_nonzero(hard_decisions(post) != info)
        if errors[it] == 0:
            break
        prior[:n_coded] = pi.interleave(ext)
    return errors


def _block_task(args):
    cfg, snr_db, block = args
    return simulate_block(_link_for(cfg), snr_db, block)


def ber_point(cfg: SimConfig, snr_db: float, link: _Link | None = None,
              pool: ProcessPoolExecutor | None = None) -> list[BerRecord]:
    """Run blocks at one SNR until ``max_blocks`` or ``target_errors``
    (counted after the last iteration), whichever comes first."""
    link = link or _Link(cfg)
    totals = np.zeros(cfg.iters, dtype=np.int64)
    blocks = 0
    chunk = cfg.workers
    while blocks < cfg.max_blocks and totals[-1] < cfg.target_errors:
        todo = range(blocks, min(blocks + chunk, cfg.max_blocks))
        if pool is None:
            results = [simulate_block(link, snr_db, k) for k in todo]
        else:
            results = list(pool.map(_block_task, [(cfg, snr_db, k) for k in todo]))
        # consume in block order so the stopping point is worker-independent
        for errs in results:
            totals += errs
            blocks += 1
            if totals[-1] >= cfg.target_errors:
                break
    bits = blocks * cfg.info_len
    return [
        BerRecord(snr_db, it + 1, int(totals[it]), bits, totals[it] / bits, blocks)
        for it in range(cfg.iters)
    ]


def iter_ber(cfg: SimConfig) -> Iterator[BerRecord]:
    link = _Link(cfg)
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for snr in cfg.snr_db:
            recs = ber_point(cfg, snr, link, pool)
            log.info("%s @ %.2f dB: BER %.3e over %d blocks",
                     cfg.detector, snr, recs[-1].ber, recs[-1].blocks)
            yield from recs
    finally:
        if pool is not None:
            pool.shutdown()


def run_ber(cfg: SimConfig) -> list[BerRecord]:
    records = list(iter_ber(cfg))
    if cfg.out:
        write_csv(cfg.out, BER_HEADER, [
            (r.snr_db, r.iteration, r.bit_errors, r.bits, r.ber, r.blocks) for r in records
        ])
        write_manifest(cfg.out, "ber", cfg, {"stopping_rule": STOPPING_RULE})
    return records


def final_ber(records: list[BerRecord]) -> dict[float, float]:
    """BER after the last iteration, keyed by SNR."""
    last = max(r.iteration for r in records)
    return {r.snr_db: r.ber for r in records if r.iteration == last}


def min_snr_below(cfg: SimConfig, snr_grid, threshold: float = 1e-3) -> float:
    """Smallest SNR of the ascending grid whose final BER is below ``threshold``.

    Stops scanning at the first hit; ``inf`` if no grid point qualifies.
    """
    link = _Link(cfg)
    for snr in sorted(snr_grid):
        recs = ber_point(cfg, snr, link)
        log.info("%s @ %.2f dB: BER %.3e (%d blocks)",
                 cfg.detector, snr, recs[-1].ber, recs[-1].blocks)
        if recs[-1].ber < threshold:
            return snr
    return math.inf
