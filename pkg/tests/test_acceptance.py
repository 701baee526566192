"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` (total runtime on the order
of ten minutes, dominated by the N=16 eigenvalue-flow ensembles).

Two sub-checks are expected to fail and are asserted faithfully anyway; the
analysis lives in the project notes:
  * criterion 1: the time-reversal group residual of the flux-ring model is
    O(lambda) at N >= 3 (the channel frame is complex), so the 1e-8 gate is
    structurally unattainable there;
  * criterion 4 at z = 0.3: at N = 16 the mean conductance carries a
    1/(z^2 N)-scale finite-size correction (~0.4), far outside the 0.15 gate.
"""

import json
import math

import numpy as np
import pytest

from dmpkwire import (
    WireConfig,
    channel_basis,
    covariance_structure_report,
    localization_decay_report,
    lyapunov_spectrum,
    moment_convergence_report,
    run_micro_ensemble,
    run_microscopic,
    run_sde_ensemble,
    scattering_from_transfer,
    sigma_from_basis,
    sigma_limit,
    transmission_spectrum,
)


def report(criterion, ok, detail):
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


def ring(n, disorder, energy=1.0, hopping=0.3, frac=0.7, **kw):
    return WireConfig(energy=energy, disorder=disorder, n_channels=n,
                      flux=frac * 2 * math.pi / n, transverse_hopping=hopping,
                      **kw)


def test_criterion_01_group_structure():
    """200 random wires: both group residuals and S unitarity below 1e-8."""
    rng = np.random.default_rng(20260810)
    worst = {"current": 0.0, "time_reversal": 0.0, "unitarity": 0.0}
    count = 0
    while count < 200:
        n = int(rng.choice([2, 4, 8]))
        lam = float(rng.choice([0.05, 0.1, 0.3]))
        length = int(rng.integers(20, 501))
        energy = float(rng.uniform(0.5, 1.1))
        hopping = float(rng.uniform(0.15, 0.35))
        frac = float(rng.uniform(0.55, 0.85))
        cfg = ring(n, lam, energy=energy, hopping=hopping, frac=frac,
                   length=length)
        try:
            res = run_microscopic(cfg, seed=int(rng.integers(2**31)))
        except Exception:
            continue  # assumption-violating draw; redraw
        count += 1
        s = scattering_from_transfer(res.transfer)
        uni = float(np.linalg.norm(s.conj().T @ s - np.eye(2 * n)))
        worst["current"] = max(worst["current"], res.residual_current)
        worst["time_reversal"] = max(worst["time_reversal"],
                                     res.residual_time_reversal)
        worst["unitarity"] = max(worst["unitarity"], uni)
    ok = all(v < 1e-8 for v in worst.values())
    report(1, ok,
           f"worst residuals over 200 wires: current {worst['current']:.2e}, "
           f"S-unitarity {worst['unitarity']:.2e}, "
           f"time-reversal {worst['time_reversal']:.2e} (gate 1e-8; the "
           "time-reversal half fails structurally for the flux ring at N>=3, "
           "see notes)")
    assert ok


def test_criterion_02_ballistic_exactness():
    ok = True
    detail = []
    for n in (1, 2, 3, 8, 16, 32):
        cfg = ring(n, 0.0, energy=0.7, hopping=0.2, length=41)
        res = run_microscopic(cfg, seed=7)
        exact_a = bool(np.array_equal(res.interaction,
                                      np.eye(2 * n, dtype=complex)))
        g = transmission_spectrum(res.transfer).conductance
        ok &= exact_a and (g == float(n))
        detail.append(f"N={n}: A==1 {exact_a}, g={g}")
    report(2, ok, "; ".join(detail))
    assert ok


UCF_PARAMS = dict(n_channels=16, beta=1, s_final=0.4 * 16)


def test_criterion_03_ucf():
    """Var(g) = 2/15 +- 0.02 at N=16, z=0.4; exactly one noise convention."""
    target = 2.0 / 15.0
    stats = run_sde_ensemble(
        "dmpk", dict(UCF_PARAMS, noise_convention="sqrt_diffusion"),
        n_paths=4000, ds=0.008, master_seed=1003)
    var_sqrt = float(stats["g"].variance)
    ok_sqrt = abs(var_sqrt - target) <= 0.02
    stats_d = run_sde_ensemble(
        "dmpk", dict(UCF_PARAMS, noise_convention="diffusion"),
        n_paths=1000, ds=0.008, master_seed=1004)
    var_d = float(stats_d["g"].variance)
    ok_d = abs(var_d - target) <= 0.02
    ok = ok_sqrt and not ok_d
    report(3, ok,
           f"sqrt(D) convention Var(g)={var_sqrt:.4f} (target {target:.4f}"
           f"+-0.02, {'pass' if ok_sqrt else 'fail'}); D convention "
           f"Var(g)={var_d:.4f} ({'pass' if ok_d else 'fail'}); exactly one "
           "setting passes and sqrt(D) is the default")
    assert ok


def test_criterion_04_ohm_weak_localization():
    """E(g) within (1/z - 1/3) +- 0.15 at z in {0.3, 0.5}, N=16."""
    ok = True
    details = []
    for z in (0.3, 0.5):
        stats = run_sde_ensemble(
            "dmpk", dict(UCF_PARAMS, s_final=z * 16),
            n_paths=4000, ds=0.008, master_seed=1005)
        g = float(stats.mean("g"))
        target = 1.0 / z - 1.0 / 3.0
        good = abs(g - target) <= 0.15
        ok &= good
        details.append(f"z={z}: E(g)={g:.4f} vs {target:.4f}+-0.15 "
                       f"({'pass' if good else 'fail'})")
    report(4, ok, "; ".join(details) + " (z=0.3 carries a ~1/(z^2 N) "
           "finite-size deficit at N=16, see notes)")
    assert ok


def test_criterion_05_moment_convergence():
    cfg = ring(2, 0.4, scaled_length=0.5)
    rep = moment_convergence_report(cfg, (0.4, 0.2, 0.1), 0.5, orders=(2, 4),
                                    n_samples=100_000, master_seed=202,
                                    ds_flow=1e-3)
    monotone = all(rep.monotone_within_error(e, m)
                   for e in rep.entries for m in ("abs2", "abs4"))
    ident = rep.identity_deviation <= 4.0
    ok = monotone and ident
    report(5, ok,
           f"gaps monotone within error: {monotone}; max |E(A)-1| deviation "
           f"{rep.identity_deviation:.2f} stderr (gate 4)")
    assert ok


def test_criterion_06_selection_rule():
    cfg = ring(2, 0.05, scaled_length=0.5)
    rep = covariance_structure_report(cfg, n_samples=100_000, master_seed=601)
    off = rep.max_off_pattern()
    rel = float(rep.diagonal_relative_errors().max())
    ok = off < 0.05 * rep.scaled_length and rel < 0.10
    report(6, ok,
           f"off-pattern max |cov| {off:.5f} < {0.05 * rep.scaled_length}; "
           f"on-pattern diagonal rel err {rel:.3f} < 0.10 "
           "(reference s*E|R_ij|^2 = s*sigma^2/N, see notes)")
    assert ok


def test_criterion_07_prop2_collapse():
    wire = ring(4, 0.1, energy=1.0, hopping=0.05, scaled_length=1.0)
    sigma = sigma_from_basis(channel_basis(wire))
    limit_amp = math.sqrt(sigma_limit(wire.energy))
    dev = float(np.abs(sigma.values / limit_amp - 1.0).max())
    ok_sigma = dev <= 0.05
    c = 1.0 / sigma_limit(wire.energy)
    s = 1.0
    aniso = run_sde_ensemble("aniso", dict(sigma=sigma, s_final=s),
                             n_paths=3000, ds=2.5e-4, master_seed=301)
    dmpk = run_sde_ensemble("dmpk", dict(n_channels=4, beta=1, s_final=s / c,
                                         ramp_rate=0.001),
                            n_paths=6000, ds=1e-3, master_seed=302)
    gap = abs(float(aniso.mean("g")) - float(dmpk.mean("g")))
    gate = 2.0 * math.hypot(float(aniso.stderr("g")), float(dmpk.stderr("g")))
    ok = ok_sigma and gap <= gate
    report(7, ok,
           f"sigma amplitudes within {dev:.3f} of the h->0 limit (gate 0.05); "
           f"collapse time factor c={c:.3f}; E(g) gap {gap:.4f} <= "
           f"2 x combined stderr {gate:.4f}")
    assert ok


def test_criterion_08_localization_trend():
    slopes = {}
    s_over_n = (2.0, 3.0, 4.0, 5.0, 6.0)
    for n, samples in ((1, 20000), (4, 4000), (8, 4000)):
        cfg = ring(n, 0.2, energy=1.0 if n > 1 else 0.6, scaled_length=2.0 * n)
        rep = localization_decay_report(cfg, [r * n for r in s_over_n],
                                        n_samples=samples, master_seed=800 + n)
        slopes[n] = rep
    negative = all(r.slope + 2 * r.slope_stderr < 0 for r in slopes.values())
    trend = abs(slopes[8].slope) < abs(slopes[4].slope)
    cfg1 = ring(1, 0.2, energy=0.6, scaled_length=2.0)
    est = lyapunov_spectrum(cfg1, length=400_000, reorth_every=10, seed=801)
    gamma_s = est.smallest_positive / cfg1.disorder**2
    ratio = slopes[1].slope_typical / (-2.0 * gamma_s)
    lyap_match = abs(ratio - 1.0) <= 0.20
    ok = negative and trend and lyap_match
    report(8, ok,
           f"slopes of ln E(g): N=1 {slopes[1].slope:.4f}, "
           f"N=4 {slopes[4].slope:.4f}, N=8 {slopes[8].slope:.4f} "
           f"(all negative: {negative}; |slope| falls 4->8: {trend}); "
           f"N=1 typical-decay slope {slopes[1].slope_typical:.4f} vs "
           f"-2*gamma_1 = {-2 * gamma_s:.4f}, ratio {ratio:.3f} "
           "(gate 20%; typical track per notes)")
    assert ok


def test_criterion_09_autonomy():
    mea = run_sde_ensemble("mea", dict(n_channels=4, s_final=1.0),
                           n_paths=4000, ds=2.5e-4, master_seed=401)
    dmpk = run_sde_ensemble("dmpk", dict(n_channels=4, beta=1, s_final=1.0,
                                         ramp_rate=0.001),
                            n_paths=8000, ds=1e-3, master_seed=402)
    gm, em = float(mea.mean("g")), float(mea.stderr("g"))
    gd, ed = float(dmpk.mean("g")), float(dmpk.stderr("g"))
    vm, vd = float(mea["g"].variance), float(dmpk["g"].variance)
    evm = vm * math.sqrt(2.0 / (mea.count("g") - 1))
    evd = vd * math.sqrt(2.0 / (dmpk.count("g") - 1))
    e_gap, e_gate = abs(gm - gd), 2 * math.hypot(em, ed)
    v_gap, v_gate = abs(vm - vd), 2 * math.hypot(evm, evd)
    ok = e_gap <= e_gate and v_gap <= v_gate
    report(9, ok,
           f"E(g): MEA {gm:.4f} vs DMPK {gd:.4f} (gap {e_gap:.4f} <= "
           f"{e_gate:.4f}); Var(g): {vm:.4f} vs {vd:.4f} (gap {v_gap:.4f} <= "
           f"{v_gate:.4f})")
    assert ok


def test_criterion_10_determinism(tmp_path):
    from dmpkwire.cli import main

    base = ["run", "--set", "experiment.kind=dmpk",
            "--set", "experiment.seed=42", "--set", "wire.channels=4",
            "--set", "flow.s_final=0.5", "--set", "flow.step=0.005",
            "--set", "experiment.paths=256"]
    outs = [tmp_path / "a", tmp_path / "b", tmp_path / "c"]
    assert main(base + ["--out", str(outs[0])]) == 0
    assert main(base + ["--out", str(outs[1])]) == 0
    # third run reproduced from the first manifest
    assert main(["run", "--config", str(outs[0] / "manifest.json"),
                 "--out", str(outs[2])]) == 0
    blobs = [(p / "results.csv").read_bytes() for p in outs]
    same_results = blobs[0] == blobs[1] == blobs[2]
    manifests = []
    for p in outs[:2]:
        doc = json.loads((p / "manifest.json").read_text())
        doc.pop("created_at")
        doc.pop("wall_time_s")
        manifests.append(doc)
    same_manifest = manifests[0] == manifests[1]
    # ensembles are reduction-order independent too
    cfg = ring(2, 0.15, scaled_length=0.3)
    serial = run_micro_ensemble(cfg, 512, master_seed=5, block_size=128,
                                n_workers=0)
    pooled = run_micro_ensemble(cfg, 512, master_seed=5, block_size=128,
                                n_workers=4)
    same_stats = (float(serial.mean("g")) == float(pooled.mean("g"))
                  and float(serial["g"].m2) == float(pooled["g"].m2))
    ok = same_results and same_manifest and same_stats
    report(10, ok,
           f"byte-identical results files: {same_results}; manifests equal "
           f"modulo timestamps: {same_manifest}; worker-count invariance: "
           f"{same_stats}")
    assert ok
