import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from softdetect.channel import AwgnChannel
from softdetect.constellation import BitPriorSet, build_bijective, build_dsm_epa, map_bits
from softdetect.detector import (
    CORRECTION_TABLE,
    DetectorMode,
    Diagnostics,
    app_llr,
    bpsk_llr,
    correction_term,
    detect,
    maxlog_bit_llr,
    maxlog_bitsym_llr,
    maxlog_sym_llr,
    maxstar,
    maxstar_reduce,
)

import oracles

finite = st.floats(-30, 30, allow_nan=False)


# ------------------------------------------------------------------ max*
def test_maxstar_examples():
    assert maxstar(0, 0) == pytest.approx(math.log(2), abs=1e-15)
    assert maxstar(5, 0) == pytest.approx(5.0067153, abs=1e-7)
    assert maxstar(5, 0, "approx_max") == 5
    assert maxstar(-np.inf, 2.5) == 2.5
    assert maxstar(-np.inf, -np.inf) == -np.inf


def test_maxstar_reduce_examples():
    assert maxstar_reduce([0, 0, 0, 0]) == pytest.approx(math.log(4), abs=1e-15)
    assert maxstar_reduce([1, 2, 3], "approx_max") == 3
    with pytest.raises(ValueError):
        maxstar_reduce([])


@given(a=finite, b=finite)
def test_maxstar_exact_matches_reference(a, b):
    m = max(a, b)
    assert abs(maxstar(a, b) - (m + math.log(math.exp(a - m) + math.exp(b - m)))) < 1e-12


@given(st.lists(finite, min_size=1, max_size=40), st.randoms())
def test_reduce_order_independent(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert abs(maxstar_reduce(values) - maxstar_reduce(shuffled)) < 1e-10
    m = max(values)
    ref = m + math.log(math.fsum(math.exp(v - m) for v in values))
    assert abs(maxstar_reduce(values) - ref) < 1e-10


@given(st.lists(finite, min_size=1, max_size=30))
def test_exact_reduce_dominates_approx(values):
    assert maxstar_reduce(values) >= maxstar_reduce(values, "approx_max")
    assert maxstar_reduce(values, "table_lookup") >= maxstar_reduce(values, "approx_max")


@given(st.floats(0, 100, allow_nan=False))
def test_correction_term_range(delta):
    for impl in ("exact", "table_lookup"):
        c = correction_term(delta, impl)
        assert 0 <= c <= math.log(2) + 1e-15
    if delta < 30:
        assert correction_term(delta) > 0


def test_table_lookup_cells():
    assert len(CORRECTION_TABLE) == 8
    w = 5 / 8
    for k in range(8):
        mid = (k + 0.5) * w
        assert correction_term(k * w + 1e-9, "table_lookup") == pytest.approx(
            math.log1p(math.exp(-mid)), abs=1e-15)
    assert correction_term(5.0, "table_lookup") == 0.0
    # a lookup max* stays within half a cell of the exact value
    for d in np.linspace(0, 5, 101):
        assert abs(maxstar(d, 0, "table_lookup") - maxstar(d, 0)) < w / 2 * 0.5 + 1e-12


# ------------------------------------------------------------ modes
def test_detector_mode_validation():
    with pytest.raises(ValueError):
        DetectorMode("maxlog_bit", "exact")
    with pytest.raises(ValueError):
        DetectorMode("app", "approx_max")
    with pytest.raises(ValueError):
        DetectorMode.parse("viterbi")
    assert DetectorMode.parse("maxlog-sym") == DetectorMode("maxlog_sym", "approx_max")
    assert DetectorMode.parse("maxlog-bitsym") == DetectorMode("maxlog_bitsym", "exact")


# ------------------------------------------------------- closed forms
def test_bpsk_closed_form():
    c = build_bijective("bpsk")
    ch = AwgnChannel(1.0)
    assert app_llr(c, None, 0.5 + 0j, ch)[0] == pytest.approx(2.0, abs=1e-12)
    y = np.linspace(-2, 2, 41)
    for sigma2 in (0.1, 0.5, 2.0):
        ch = AwgnChannel(sigma2)
        ref = bpsk_llr(y, sigma2)
        for det in (app_llr, maxlog_bit_llr, maxlog_sym_llr, maxlog_bitsym_llr):
            assert np.max(np.abs(det(c, None, y, ch)[:, 0] - ref)) < 1e-10


def test_outputs_are_clamped():
    c = build_bijective("bpsk")
    L = app_llr(c, None, np.array([10.0, -10.0]), AwgnChannel(1e-3))
    assert np.array_equal(L[:, 0], [50.0, -50.0])


# ----------------------------------------------------------- oracles
CASES = {
    "qpsk": (build_bijective("qpsk"), oracles.qpsk_point),
    "qam16": (build_bijective("qam16_gray"), oracles.qam16_point),
    "dsm4": (build_dsm_epa(4), oracles.dsm_point),
    "dsm6": (build_dsm_epa(6), oracles.dsm_point),
}


@pytest.mark.parametrize("name", CASES)
def test_all_detectors_match_oracle(name):
    c, point = CASES[name]
    N = c.n_bits
    rng = np.random.default_rng(sum(map(ord, name)))
    for _ in range(15):
        llrs = rng.normal(0, 3, N)
        y = complex(rng.normal(0, 0.8), rng.normal(0, 0.8))
        sigma2 = float(10 ** rng.uniform(-1.5, 0.5))
        ch = AwgnChannel(sigma2)
        pri = BitPriorSet.from_llrs(llrs)
        checks = [
            (app_llr(c, pri, y, ch, "bit"), oracles.app_llrs),
            (app_llr(c, pri, y, ch, "symbol"), oracles.app_llrs),
            (maxlog_bit_llr(c, pri, y, ch), oracles.maxlog_bit_llrs),
            (maxlog_sym_llr(c, pri, y, ch), oracles.maxlog_sym_llrs),
            (maxlog_bitsym_llr(c, pri, y, ch), oracles.maxlog_bitsym_llrs),
        ]
        for got, ref in checks:
            assert np.max(np.abs(got - ref(point, N, llrs, y, sigma2))) < 1e-9


def test_app_example_dsm4():
    c = build_dsm_epa(4)
    ch = AwgnChannel(0.1)
    y = 0.3 + 0.2j
    ref = oracles.app_llrs(oracles.dsm_point, 4, [0.0] * 4, y, 0.1)
    assert np.max(np.abs(app_llr(c, None, y, ch, "bit") - ref)) < 1e-9
    assert np.max(np.abs(app_llr(c, None, y, ch, "symbol") - ref)) < 1e-9


def test_bitsym_inner_approx_equals_bit_domain(rng):
    for c in (build_dsm_epa(4), build_dsm_epa(8), build_bijective("psk8")):
        N = c.n_bits
        pri = BitPriorSet.from_llrs(rng.normal(0, 3, (50, N)))
        y = rng.normal(size=50) + 1j * rng.normal(size=50)
        ch = AwgnChannel(0.2)
        a = maxlog_bitsym_llr(c, pri, y, ch, "approx_max")
        assert np.array_equal(a, maxlog_bit_llr(c, pri, y, ch))


def test_bitsym_table_lookup_matches_oracle_fold_bounds(rng):
    # lookup inner max* sits between the max and the exact fold
    c = build_dsm_epa(6)
    pri = BitPriorSet.from_llrs(rng.normal(0, 2, (40, 6)))
    y = rng.normal(size=40) + 1j * rng.normal(size=40)
    ch = AwgnChannel(0.3)
    tab = maxlog_bitsym_llr(c, pri, y, ch, "table_lookup")
    assert np.all(np.isfinite(tab))
    assert np.max(np.abs(tab - maxlog_sym_llr(c, pri, y, ch))) < 2.0


def test_app_table_lookup_close_to_exact(rng):
    c = build_dsm_epa(4)
    y = rng.normal(size=30) + 1j * rng.normal(size=30)
    ch = AwgnChannel(0.2)
    exact = app_llr(c, None, y, ch)
    tab = app_llr(c, None, y, ch, impl="table_lookup")
    assert np.max(np.abs(tab - exact)) < 1.0


def test_dsm4_bit_and_symbol_maxlog_coincide(rng):
    # two layers per axis: no multiplicity inside an axis, so both max-log
    # forms pick the same winner for any prior
    c = build_dsm_epa(4)
    pri = BitPriorSet.from_llrs(rng.normal(0, 4, (300, 4)))
    y = rng.normal(size=300) + 1j * rng.normal(size=300)
    ch = AwgnChannel(0.1)
    assert np.max(np.abs(maxlog_bit_llr(c, pri, y, ch) - maxlog_sym_llr(c, pri, y, ch))) < 1e-12


def test_dsm6_bit_and_symbol_maxlog_differ():
    c = build_dsm_epa(6)
    ch = AwgnChannel(0.1)
    a = 1 / math.sqrt(6)
    # an observation near the multiplicity-3 point a(1 + 1j)
    L_bit = maxlog_bit_llr(c, None, a * (1 + 1j), ch)
    L_sym = maxlog_sym_llr(c, None, a * (1 + 1j), ch)
    assert np.max(np.abs(L_bit - L_sym)) > 0.5
    ref = oracles.maxlog_sym_llrs(oracles.dsm_point, 6, [0.0] * 6, a * (1 + 1j), 0.1)
    assert np.max(np.abs(L_sym - ref)) < 1e-9


@pytest.mark.parametrize("c", [build_bijective("qam16_gray"), build_dsm_epa(4), build_dsm_epa(8)],
                         ids=["qam16", "dsm4", "dsm8"])
def test_negation_symmetry(c, rng):
    y = rng.normal(size=25) + 1j * rng.normal(size=25)
    ch = AwgnChannel(0.25)
    for det in (app_llr, maxlog_bit_llr, maxlog_sym_llr, maxlog_bitsym_llr):
        L = det(c, None, y, ch)
        flipped = det(c, None, -y, ch)
        if c.name.startswith("dsm"):
            assert np.max(np.abs(flipped + L)) < 1e-9
        else:
            # Gray QAM: negation complements the sign bits only
            assert np.max(np.abs(flipped[:, [0, 2]] + L[:, [0, 2]])) < 1e-9


@pytest.mark.parametrize("c", [build_dsm_epa(4), build_dsm_epa(6), build_bijective("psk8")],
                         ids=["dsm4", "dsm6", "psk8"])
def test_extrinsic_contract(c, rng):
    N = c.n_bits
    llrs = rng.normal(0, 3, (20, N))
    y = rng.normal(size=20) + 1j * rng.normal(size=20)
    ch = AwgnChannel(0.3)
    base = {det: det(c, BitPriorSet.from_llrs(llrs), y, ch)
            for det in (app_llr, maxlog_bit_llr, maxlog_sym_llr, maxlog_bitsym_llr)}
    for n in range(N):
        pert = llrs.copy()
        pert[:, n] += rng.normal(0, 10, 20)
        for det, ref in base.items():
            got = det(c, BitPriorSet.from_llrs(pert), y, ch)
            assert np.max(np.abs(got[:, n] - ref[:, n])) < 1e-12


def test_sign_on_exclusive_point():
    # the corner point a(1+j) of dsm_epa(4) is reachable only with all bits 0
    c = build_dsm_epa(4)
    y = map_bits(c, (0, 0, 0, 0)).value
    ch = AwgnChannel(1e-4)
    for det in (app_llr, maxlog_bit_llr, maxlog_sym_llr, maxlog_bitsym_llr):
        assert np.all(det(c, None, y, ch) > 0)


def test_certain_priors_make_maxlog_sym_exact():
    c = build_dsm_epa(4)
    ch = AwgnChannel(0.1)
    y = 0.2 - 0.4j
    for n in range(4):
        llrs = np.array([50.0, -50.0, -50.0, 50.0])
        llrs[n] = 0.0
        pri = BitPriorSet.from_llrs(llrs)
        assert np.max(np.abs(maxlog_sym_llr(c, pri, y, ch) - app_llr(c, pri, y, ch))[n]) < 1e-9


def test_batch_shapes_and_prior_broadcast(rng):
    c = build_dsm_epa(4)
    ch = AwgnChannel(0.2)
    y = rng.normal(size=(3, 5)) + 0j
    L = app_llr(c, BitPriorSet.from_llrs(rng.normal(size=4)), y, ch)
    assert L.shape == (3, 5, 4)
    with pytest.raises(ValueError):
        app_llr(c, BitPriorSet.uniform(6), y, ch)
    with pytest.raises(ValueError):
        app_llr(c, BitPriorSet.uniform(4, (2,)), y, ch)
    with pytest.raises(ValueError):
        app_llr(c, None, y, ch, domain="pattern")


def test_detect_dispatch(rng):
    c = build_dsm_epa(6)
    ch = AwgnChannel(0.2)
    y = rng.normal(size=8) + 1j * rng.normal(size=8)
    assert np.array_equal(detect(c, None, y, ch, DetectorMode.parse("app")), app_llr(c, None, y, ch))
    assert np.array_equal(detect(c, None, y, ch, DetectorMode.parse("maxlog-bit")),
                          maxlog_bit_llr(c, None, y, ch))
    assert np.array_equal(detect(c, None, y, ch, DetectorMode.parse("maxlog-sym")),
                          maxlog_sym_llr(c, None, y, ch))


def test_diagnostics_count_work():
    c = build_dsm_epa(8)
    ch = AwgnChannel(0.2)
    d_bit, d_sym = Diagnostics(), Diagnostics()
    maxlog_bit_llr(c, None, 0.1j, ch, diagnostics=d_bit)
    maxlog_sym_llr(c, None, 0.1j, ch, diagnostics=d_sym)
    assert d_bit.patterns_visited == 8 * 2 * 2**7
    assert d_sym.branch_count < d_bit.branch_count
    assert d_bit.max_calls > 0 and d_bit.maxstar_calls == 0
