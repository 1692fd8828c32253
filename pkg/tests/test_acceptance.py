"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned.

Run with ``pytest tests/test_acceptance.py``; the lines are printed in an
"acceptance criteria" section of the terminal summary.
"""

from __future__ import annotations

import math
import sys
from fractions import Fraction

import pytest

from offloadsim import cli
from offloadsim.calibration import MB, PRESET_NAMES, preset, with_overrides
from offloadsim.overlap import critical_config, f_star, i_star, min_residency, nearest_grid_value
from offloadsim.simulator import Chunked, NoOffload, WholeLayer, simulate_step, validate_trace
from offloadsim.workload import (
    Collective, WorkloadPoint, flops_dit_block, flops_mmdit_double, flops_mmdit_single, phase_plans,
)

CRITICAL_TARGETS = {"wanvideo": (119.2, 1.0), "flux": (11.5, 0.3), "hunyuanvideo": (34.5, 1.0)}
F_STAR_RTOL = 1e-12
COLLECTIVE_TARGET_S = 0.45
WL_OVER_NO = (1.44, 0.15)
SPEEDUP_FLOOR = 1.05
REGIME_SLACK = 1.05
CHUNK_GRID = (4 * MB, 16 * MB, 64 * MB, 256 * MB)
RESIDENCY_GRID = (0.0, 0.2, 0.4, 0.6, 1.0)
MIN_RESIDENCY_CEIL = 0.60 + 0.1
OVERHEAD_FRACTION = 0.02
POLICIES = (NoOffload(), Chunked(16 * MB, 0.0), WholeLayer())


def line(num: int, title: str, status: str, detail: str) -> str:
    return f"[{status}] criterion {num:>2} {title}: {detail}"


@pytest.fixture
def report(record_property):
    """Record one PASS/FAIL line; the conftest summary prints them in order."""
    def _report(num: int, title: str, ok: bool, detail: str) -> None:
        text = line(num, title, "PASS" if ok else "FAIL", detail)
        record_property("acceptance", text)
        print(text)
    return _report


_sweep_cache: dict = {}


def sweep(name):
    """Default-policy sweep over the preset grid, memoised across criteria."""
    if name not in _sweep_cache:
        hw, m = preset(name)
        rows = []
        for v in m.sweep_values:
            w = WorkloadPoint.at(m, v, hw)
            rows.append((v, {p.name: simulate_step(m, w, hw, p) for p in POLICIES}))
        _sweep_cache[name] = rows
    return _sweep_cache[name]


# -- independent oracles ---------------------------------------------------

def _oracle_f_star(p_peak, bw, ec, ep, b):
    # Exact rationals, then one rounding.
    return float(Fraction(ec) * Fraction(p_peak) * Fraction(b) / (Fraction(ep) * Fraction(bw)))


def _oracle_dit(B, S, d, f, L):
    return [8 * B * S * d * d, 4 * B * S * S * d, 4 * B * S * d * d + 4 * B * L * d * d, 4 * B * S * L * d,
            4 * B * S * d * f]


def _oracle_double(B, S, d, f, L):
    return [8 * B * S * d * d, 8 * B * L * d * d, 4 * B * (S + L) ** 2 * d, 4 * B * S * d * f, 4 * B * L * d * f]


def _oracle_single(B, S, d, f, L):
    T = S + L
    return [2 * B * T * d * (3 * d + f), 4 * B * T * T * d, 2 * B * T * (d + f) * d]


def _ulp_close(a, b) -> bool:
    return abs(float(a) - float(b)) <= math.ulp(float(b))


# -- criteria --------------------------------------------------------------

def test_c01_critical_configuration(report):
    parts, ok = [], True
    cfg_rows = _predict_rows()
    for name, (target, tol) in CRITICAL_TARGETS.items():
        x = float(cfg_rows[name]["critical_real"])
        good = abs(x - target) <= tol
        ok &= good
        parts.append(f"{name}={x:.3f} (target {target}±{tol})")
    report(1, "critical configuration", ok, ", ".join(parts))
    assert ok


def _predict_rows():
    import contextlib
    import csv
    import io

    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli.main(["predict"])
    assert code == 0
    return {r["model"]: r for r in csv.DictReader(io.StringIO(buf.getvalue()))}


def test_c02_f_star_i_star_oracle(report):
    worst = 0.0
    for name in PRESET_NAMES:
        hw, m = preset(name)
        fs = _oracle_f_star(hw.p_peak, hw.bw_h2d, hw.eta_comp, hw.eta_pref, m.b_pref)
        ist = _oracle_f_star(hw.p_peak, hw.bw_h2d, hw.eta_comp, hw.eta_pref, 1)
        worst = max(worst, abs(f_star(hw, m.b_pref) - fs) / fs, abs(i_star(hw) - ist) / ist)
    ok = worst <= F_STAR_RTOL
    report(2, "F*/I* oracle", ok, f"max relative error {worst:.2e} (tol {F_STAR_RTOL:g})")
    assert ok


def test_c03_flop_oracle(report):
    Bs = (1, 2, 3, 4, 7)
    Ss = (1, 256, 4096, 36_300, 75_000)
    d, f, L = 3072, 14336, 512
    checked, bad = 0, 0
    for fn, oracle in ((flops_dit_block, _oracle_dit), (flops_mmdit_double, _oracle_double),
                       (flops_mmdit_single, _oracle_single)):
        for B in Bs:
            for S in Ss:
                got = fn(B, S, d, f, L)
                want = oracle(B, S, d, f, L)
                for g, w in zip(got.terms.values(), want):
                    checked += 1
                    bad += not _ulp_close(g, w)
                checked += 1
                bad += not _ulp_close(got.total, sum(want))
    ok = bad == 0
    report(3, "FLOP oracle", ok, f"{checked - bad}/{checked} terms and totals within 1 ULP on 3x5x5 grid")
    assert ok


def _calibrated_collective_hw():
    hw, m = preset("wanvideo")
    w = WorkloadPoint.at(m, 81, hw)
    (plan,) = phase_plans(m, w).values()
    coll = [ph.bytes for ph in plan.phases if isinstance(ph, Collective) and ph.bytes > 0]
    per_step = len(coll) * m.n_layers
    per_coll_s = COLLECTIVE_TARGET_S / per_step
    bw = float(coll[0]) / (per_coll_s - hw.t_coll_latency)
    return with_overrides(hw, bw_coll=bw), m, w


def test_c04_characterization_ratio(report):
    hw, m, w = _calibrated_collective_hw()
    no = simulate_step(m, w, hw, NoOffload())
    wl = simulate_step(m, w, hw, WholeLayer())
    ratio = wl.step_time_s / no.step_time_s
    target, tol = WL_OVER_NO
    ok = abs(ratio - target) <= tol and abs(no.collective_s - COLLECTIVE_TARGET_S) < 1e-3
    report(4, "whole-layer/no-offload ratio", ok,
           f"collective_s={no.collective_s:.4f}s, ratio={ratio:.3f} (target {target}±{tol})")
    assert ok


def test_c05_policy_ordering(report):
    ok, parts = True, []
    for name in PRESET_NAMES:
        rows = sweep(name)
        for v, r in rows:
            t_no, t_ch, t_wl = (r[p.name].step_time_s for p in POLICIES)
            ok &= t_no <= t_ch <= t_wl
        v0, r0 = rows[0]
        sp = r0["whole-layer"].step_time_s / r0["chunked"].step_time_s
        ok &= sp >= SPEEDUP_FLOOR
        parts.append(f"{name}@{v0} speedup {sp:.3f}")
    report(5, "policy ordering", ok, "no<=chunked<=whole everywhere; " + ", ".join(parts)
           + f" (floor {SPEEDUP_FLOOR})")
    assert ok


def test_c06_regime(report):
    ok, parts = True, []
    for name in PRESET_NAMES:
        hw, m = preset(name)
        cc = critical_config(m, hw)
        rounded = nearest_grid_value(cc.value, m.sweep_values)
        for v, r in sweep(name):
            if v < rounded:
                continue
            ratio = r["chunked"].step_time_s / r["no-offload"].step_time_s
            good = ratio <= REGIME_SLACK
            ok &= good
            parts.append(f"{name}@{v} {ratio:.3f}{'' if good else '!'}")
    report(6, "regime beyond critical", ok, ", ".join(parts) + f" (chunked/no <= {REGIME_SLACK})")
    assert ok


def test_c07_contention_bound(report):
    runs, viol = 0, []
    for name in PRESET_NAMES:
        hw, _ = preset(name)
        tail = hw.t_dma + 16 * MB / hw.h2d_rate
        for v, r in sweep(name):
            for pol, bd in r.items():
                runs += 1
                problems = validate_trace(bd)
                if pol == "chunked":
                    worst = max((e.t_end - e.t_start for e in bd.trace if e.category == "contention_stall"),
                                default=0.0)
                    if worst > tail + 1e-12:
                        problems.append(f"chunk tail {worst} > {tail}")
                if problems:
                    viol.append(f"{name}@{v}/{pol}: {problems[0]}")
    ok = not viol
    report(7, "contention bound", ok, f"{runs} traces validated" + (f"; {viol[0]}" if viol else ""))
    assert ok


def test_c08_conservation_identity(report):
    hw, m = preset("wanvideo")
    L = m.n_layers
    notes, ok = [], True
    w = WorkloadPoint.at(m, 81, hw)
    for r in (0.0, 0.4):
        vals = {simulate_step(m, w, hw, Chunked(c, r)).total_h2d_bytes for c in CHUNK_GRID}
        for c in CHUNK_GRID:
            bd = simulate_step(m, w, hw, Chunked(c, r))
            expect = L * (1 - bd.residency_effective) * m.b_pref
            ok &= math.isclose(bd.total_h2d_bytes, expect, rel_tol=1e-12)
        if r == 0.0:
            ok &= len(vals) == 1
    notes.append("h2d bytes conserved")
    for name in PRESET_NAMES:
        hw_, m_ = preset(name)
        w_ = WorkloadPoint.at(m_, m_.sweep_values[0], hw_)
        a = simulate_step(m_, w_, hw_, Chunked(16 * MB, 1.0))
        b = simulate_step(m_, w_, hw_, NoOffload())
        same = a.step_time_s == b.step_time_s and a.categories() == b.categories() and \
            [e[:3] for e in a.trace] == [e[:3] for e in b.trace]
        ok &= same
    notes.append("r=1 identical to no-offload")
    deg = simulate_step(m, w, hw, Chunked(int(m.b_pref), 0.0, pausing=False)).step_time_s
    wl = simulate_step(m, w, hw, WholeLayer()).step_time_s
    gap = abs(deg - wl)
    ok &= gap <= hw.t_dma * L
    notes.append(f"C=b_pref gap {gap * 1e3:.4f} ms <= {hw.t_dma * L * 1e3:.2f} ms")
    report(8, "conservation and identity", ok, "; ".join(notes))
    assert ok


def test_c09_chunk_u_shape(report):
    hw, m = preset("wanvideo")
    w = WorkloadPoint.at(m, 81, hw)
    times = [simulate_step(m, w, hw, Chunked(c, 0.0)).step_time_s for c in CHUNK_GRID]
    k = min(range(len(times)), key=times.__getitem__)
    mono = all(a >= b for a, b in zip(times[:k], times[1:k + 1])) and \
        all(a <= b for a, b in zip(times[k:], times[k + 1:]))
    ok = CHUNK_GRID[k] == 16 * MB and mono
    desc = ", ".join(f"{c // MB}MB={t:.4f}s" for c, t in zip(CHUNK_GRID, times))
    report(9, "chunk-size U-shape", ok, f"{desc}; argmin {CHUNK_GRID[k] // MB} MB (expected 16)")
    assert ok


def test_c10_residency_tradeoff(report):
    ok, parts = True, []
    for name in PRESET_NAMES:
        hw, m = preset(name)
        v = m.sweep_values[0]
        w = WorkloadPoint.at(m, v, hw)
        bds = [simulate_step(m, w, hw, Chunked(16 * MB, r)) for r in RESIDENCY_GRID]
        no = simulate_step(m, w, hw, NoOffload()).step_time_s
        steps = [b.step_time_s for b in bds]
        mems = [b.peak_param_bytes for b in bds]
        mono = all(a >= b for a, b in zip(steps, steps[1:])) and all(a <= b for a, b in zip(mems, mems[1:]))
        r06 = steps[RESIDENCY_GRID.index(0.6)] / no
        rmin = min_residency(m, w, hw)
        good = mono and r06 <= REGIME_SLACK and rmin <= MIN_RESIDENCY_CEIL
        ok &= good
        parts.append(f"{name}@{v} monotone={mono} r0.6/no={r06:.3f} min_r={rmin:.3f}")
    report(10, "residency tradeoff", ok,
           "; ".join(parts) + f" (bounds {REGIME_SLACK}, {MIN_RESIDENCY_CEIL:.2f})")
    assert ok


def test_c11_overhead_bound(report):
    worst, rows = 0.0, 0
    for name in PRESET_NAMES:
        for _, r in sweep(name):
            for bd in r.values():
                rows += 1
                worst = max(worst, bd.overhead_s / bd.step_time_s)
    ok = worst <= OVERHEAD_FRACTION
    report(11, "overhead bound", ok, f"max overhead {worst * 100:.3f}% over {rows} rows (<= 2%)")
    assert ok


def test_c12_declared_not_reproducible(record_property):
    record_property("acceptance", line(12, "absolute step times and memory", "N/A ",
                                       "declared not reproducible, covered by criteria 5-11"))
    pytest.skip("declared not reproducible at desk scale")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
