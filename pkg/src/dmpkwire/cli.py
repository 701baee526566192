"""Command-line front end: flat key=value experiment configs, a dispatcher
over the simulation engines, and machine-readable result tables.

Subcommands:
    run       execute an experiment, write results.{csv,json} + manifest.json
    validate  print the channel table, assumption verdicts and sigma matrix

Config files are flat ``key = value`` lines with dotted section keys and
``#`` comments.  Every key has a documented default except ``experiment.kind``
and ``experiment.seed``; unknown keys are a hard error.  Results files are
deterministic given (config, seed): reruns are byte-identical, and the
manifest's resolved config re-runs to identical results.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import ConfigError, DmpkWireError, ModelError, NumericalError
from .ensemble import (
    covariance_structure_report,
    localization_decay_report,
    lyapunov_spectrum,
    moment_convergence_report,
    run_micro_ensemble,
    run_sde_ensemble,
)
from .flows import (
    collapse_time_factor,
    sigma_from_basis,
    sigma_limit,
    NOISE_CONVENTIONS,
)
from .wire import POTENTIAL_TAGS, WireConfig, channel_basis, check_no_degenerate_spacings

SCHEMA_VERSION = 1

KINDS = ("micro", "sde-mea", "sde-aniso", "dmpk", "moment-convergence",
         "covariance-structure", "lyapunov", "localization", "prop2-collapse",
         "ucf", "ohm")


def _float_list(text: str) -> tuple:
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _int_list(text: str) -> tuple:
    return tuple(int(x) for x in str(text).split(",") if x.strip())


# key -> (parser, default, help); default None means "computed", a value of
# REQUIRED means the key must be provided.
REQUIRED = object()

_KEY_TABLE = {
    "experiment.kind": (str, REQUIRED, "one of " + ", ".join(KINDS)),
    "experiment.seed": (int, REQUIRED, "master seed (mandatory: reproducibility is a contract)"),
    "experiment.samples": (int, 10000, "disorder realizations for microscopic ensembles"),
    "experiment.paths": (int, 4000, "paths for flow ensembles"),
    "wire.energy": (float, 1.0, "injection energy E"),
    "wire.disorder": (float, 0.1, "disorder strength lambda"),
    "wire.channels": (int, 4, "channel count N"),
    "wire.flux": (float, None, "flux phase gamma; default 0.7 * 2*pi/N"),
    "wire.hopping": (float, 0.3, "transverse hopping h_perp"),
    "wire.length": (int, None, "slice count L (exclusive with wire.scaled_length)"),
    "wire.scaled_length": (float, 1.0, "diffusive length s, L = floor(s/lambda^2)"),
    "wire.potential": (str, "gaussian", "one of " + ", ".join(POTENTIAL_TAGS)),
    "wire.beta": (int, 1, "symmetry index (1, 2 or 4; the strip model is 1)"),
    "flow.step": (float, 1e-3, "integrator step ds"),
    "flow.s_final": (float, 1.0, "flow time to integrate to"),
    "flow.z": (float, 0.4, "diffusive ratio z = s/N (ucf; overrides flow.s_final)"),
    "flow.z_values": (_float_list, (0.3, 0.5), "z sweep for the ohm experiment"),
    "flow.noise_convention": (str, "sqrt_diffusion",
                              "one of " + ", ".join(NOISE_CONVENTIONS)),
    "flow.ramp_rate": (float, 0.002, "adaptive step ramp out of the ballistic corner"),
    "flow.residual_bound": (float, 0.1, "abort threshold on the matrix-flow group residual"),
    "sweep.disorders": (_float_list, (0.4, 0.2, 0.1),
                        "decreasing lambda sweep for moment-convergence"),
    "sweep.s_over_n": (_float_list, (2.0, 3.0, 4.0, 5.0, 6.0),
                       "localization sweep, s = (s/N) * N"),
    "moment.orders": (_int_list, (2, 4), "entry-moment orders to compare"),
    "lyapunov.length": (int, 200000, "slices in the Lyapunov product"),
    "lyapunov.reorth_every": (int, 10, "QR reorthogonalisation cadence"),
}

_KIND_KEYS = {
    "micro": ("experiment.samples", "wire.*"),
    "sde-mea": ("experiment.paths", "wire.channels", "flow.step", "flow.s_final",
                "flow.residual_bound"),
    "sde-aniso": ("experiment.paths", "wire.*", "flow.step", "flow.s_final",
                  "flow.residual_bound"),
    "dmpk": ("experiment.paths", "wire.channels", "wire.beta", "flow.step",
             "flow.s_final", "flow.noise_convention", "flow.ramp_rate"),
    "moment-convergence": ("experiment.samples", "wire.*", "sweep.disorders",
                           "moment.orders", "flow.step"),
    "covariance-structure": ("experiment.samples", "wire.*"),
    "lyapunov": ("wire.*", "lyapunov.length", "lyapunov.reorth_every"),
    "localization": ("experiment.samples", "wire.*", "sweep.s_over_n"),
    "prop2-collapse": ("experiment.paths", "wire.*", "flow.step", "flow.s_final",
                       "flow.noise_convention", "flow.ramp_rate",
                       "flow.residual_bound"),
    "ucf": ("experiment.paths", "wire.channels", "wire.beta", "flow.step",
            "flow.z", "flow.noise_convention", "flow.ramp_rate"),
    "ohm": ("experiment.paths", "wire.channels", "wire.beta", "flow.step",
            "flow.z_values", "flow.noise_convention", "flow.ramp_rate"),
}

_ALWAYS_KEYS = ("experiment.kind", "experiment.seed")


def _allowed_keys(kind: str) -> set:
    spec = _KIND_KEYS[kind]
    keys = set(_ALWAYS_KEYS)
    for item in spec:
        if item.endswith(".*"):
            prefix = item[:-1]
            keys.update(k for k in _KEY_TABLE if k.startswith(prefix))
        else:
            keys.add(item)
    # validate accepts any wire key regardless of kind; handled separately
    return keys


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines into a raw string dict."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    return raw


def load_config(path: str, overrides=()) -> dict:
    """Load a config file (or a manifest's resolved config) plus overrides."""
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        if path.endswith(".json"):
            doc = json.loads(text)
            raw = {k: str(v) for k, v in doc.get("resolved_config", doc).items()}
        else:
            raw = parse_config_text(text)
    else:
        raw = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def resolve_config(raw: dict, validate_only: bool = False) -> dict:
    """Type, default and cross-check a raw string config; returns typed dict."""
    unknown = [k for k in raw if k not in _KEY_TABLE]
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    kind = raw.get("experiment.kind")
    if not validate_only:
        if kind is None:
            raise ConfigError("experiment.kind is required")
        if kind not in KINDS:
            raise ConfigError(f"experiment.kind must be one of {', '.join(KINDS)}")
        allowed = _allowed_keys(kind)
        inapplicable = [k for k in raw if k not in allowed]
        if inapplicable:
            raise ConfigError(
                f"key(s) not applicable to kind {kind!r}: "
                f"{', '.join(sorted(inapplicable))}")
    if "experiment.seed" not in raw:
        raise ConfigError("experiment.seed is required (no entropy defaults)")
    if "wire.length" in raw and "wire.scaled_length" in raw:
        raise ConfigError("wire.length and wire.scaled_length are exclusive")
    out = {}
    keys = raw.keys() if validate_only else (set(raw) | _allowed_keys(kind))
    for key in sorted(set(keys) | set(_ALWAYS_KEYS if not validate_only else ())):
        parser, default, _ = _KEY_TABLE[key]
        if key in raw:
            try:
                out[key] = parser(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r}") from exc
        elif default is REQUIRED:
            raise ConfigError(f"{key} is required")
        elif default is not None:
            out[key] = default
    if validate_only:
        out["experiment.seed"] = int(raw["experiment.seed"])
    else:
        # materialize computed defaults so the manifest is self-describing
        allowed = _allowed_keys(kind)
        if "wire.flux" in allowed and "wire.flux" not in out:
            out["wire.flux"] = 0.7 * 2 * math.pi / out.get("wire.channels", 4)
        if "wire.length" in out:
            out.pop("wire.scaled_length", None)
    return out


def wire_from_config(cfg: dict) -> WireConfig:
    n = cfg.get("wire.channels", 4)
    flux = cfg.get("wire.flux")
    if flux is None:
        flux = 0.7 * 2 * math.pi / n
    kwargs = dict(
        energy=cfg.get("wire.energy", 1.0),
        disorder=cfg.get("wire.disorder", 0.1),
        n_channels=n,
        flux=flux,
        transverse_hopping=cfg.get("wire.hopping", 0.3),
        potential=cfg.get("wire.potential", "gaussian"),
        beta=cfg.get("wire.beta", 1),
    )
    if cfg.get("wire.length") is not None:
        kwargs["length"] = cfg["wire.length"]
    else:
        kwargs["scaled_length"] = cfg.get("wire.scaled_length", 1.0)
    return WireConfig(**kwargs)


# ---------------------------------------------------------------------------
# result rows

def _row(name: str, estimate: float, stderr: float = 0.0, count: int = 0,
         **metadata) -> dict:
    return {"name": name, "estimate": float(estimate), "stderr": float(stderr),
            "count": int(count), "metadata": metadata}


def _stat_rows(stats, prefix: str = "", **meta) -> list:
    rows = []
    for base in ("g", "ln_g"):
        if base not in stats.observables:
            continue
        mom = stats[base]
        rows.append(_row(prefix + base, mom.mean, mom.stderr, mom.count, **meta))
        if base == "g":
            var = float(mom.variance)
            var_err = var * math.sqrt(2.0 / max(mom.count - 1, 1))
            rows.append(_row(prefix + "var_g", var, var_err, mom.count, **meta))
    if "transmission" in stats.observables:
        mom = stats["transmission"]
        for k, (m, e) in enumerate(zip(np.atleast_1d(mom.mean),
                                       np.atleast_1d(mom.stderr)), start=1):
            rows.append(_row(f"{prefix}T_mean[{k}]", m, e, mom.count, **meta))
    return rows


def _run_micro(cfg, seed, threads):
    wire = wire_from_config(cfg)
    stats = run_micro_ensemble(wire, cfg["experiment.samples"], seed,
                               n_workers=threads)
    return _stat_rows(stats)


def _run_flow(cfg, seed, threads, kind):
    n = cfg["wire.channels"]
    if kind == "sde-mea":
        params = dict(n_channels=n, s_final=cfg["flow.s_final"],
                      residual_bound=cfg["flow.residual_bound"])
        stats = run_sde_ensemble("mea", params, cfg["experiment.paths"],
                                 cfg["flow.step"], seed, n_workers=threads)
    elif kind == "sde-aniso":
        wire = wire_from_config(cfg)
        sigma = sigma_from_basis(channel_basis(wire))
        params = dict(sigma=sigma, s_final=cfg["flow.s_final"],
                      residual_bound=cfg["flow.residual_bound"])
        stats = run_sde_ensemble("aniso", params, cfg["experiment.paths"],
                                 cfg["flow.step"], seed, n_workers=threads)
    else:
        params = dict(n_channels=n, beta=cfg["wire.beta"],
                      s_final=cfg["flow.s_final"],
                      noise_convention=cfg["flow.noise_convention"],
                      ramp_rate=cfg["flow.ramp_rate"])
        stats = run_sde_ensemble("dmpk", params, cfg["experiment.paths"],
                                 cfg["flow.step"], seed, n_workers=threads)
    return _stat_rows(stats)


def _run_ucf(cfg, seed, threads):
    n = cfg["wire.channels"]
    beta = cfg["wire.beta"]
    z = cfg["flow.z"]
    params = dict(n_channels=n, beta=beta, s_final=z * n,
                  noise_convention=cfg["flow.noise_convention"],
                  ramp_rate=cfg["flow.ramp_rate"])
    stats = run_sde_ensemble("dmpk", params, cfg["experiment.paths"],
                             cfg["flow.step"], seed, n_workers=threads)
    rows = _stat_rows(stats, z=z)
    rows.append(_row("ucf_reference", 2.0 / (15.0 * beta), 0.0, 0, beta=beta))
    return rows


def _run_ohm(cfg, seed, threads):
    n = cfg["wire.channels"]
    beta = cfg["wire.beta"]
    rows = []
    for k, z in enumerate(cfg["flow.z_values"]):
        params = dict(n_channels=n, beta=beta, s_final=z * n,
                      noise_convention=cfg["flow.noise_convention"],
                      ramp_rate=cfg["flow.ramp_rate"])
        stats = run_sde_ensemble("dmpk", params, cfg["experiment.paths"],
                                 cfg["flow.step"], seed + k, n_workers=threads)
        mom = stats["g"]
        rows.append(_row(f"g[z={z:g}]", mom.mean, mom.stderr, mom.count, z=z))
        ref = 1.0 / z + (1.0 - 2.0 / beta) / 3.0
        rows.append(_row(f"ohm_reference[z={z:g}]", ref, 0.0, 0, z=z))
    return rows


def _run_moment_convergence(cfg, seed, threads):
    wire = wire_from_config(cfg)
    report = moment_convergence_report(
        wire, cfg["sweep.disorders"], cfg.get("wire.scaled_length", 0.5),
        orders=cfg["moment.orders"], n_samples=cfg["experiment.samples"],
        master_seed=seed, ds_flow=cfg["flow.step"], n_workers=threads)
    rows = []
    for gap in report.gaps:
        rows.append(_row(
            f"moment_gap[{gap.moment};{gap.entry[0]},{gap.entry[1]};lam={gap.disorder:g}]",
            gap.gap, gap.combined_stderr, 0,
            moment=gap.moment, order=gap.order, disorder=gap.disorder,
            entry=list(gap.entry), micro=gap.micro, reference=gap.reference))
    rows.append(_row("identity_deviation_sigmas", report.identity_deviation))
    from .ensemble import MOMENTS_BY_ORDER

    magnitude_moments = [m for order in cfg["moment.orders"]
                         for m in MOMENTS_BY_ORDER[order] if m in ("abs2", "abs4")]
    monotone = all(report.monotone_within_error(e, m)
                   for e in report.entries for m in magnitude_moments)
    rows.append(_row("gaps_monotone", 1.0 if monotone else 0.0))
    return rows


def _run_covariance(cfg, seed, threads):
    wire = wire_from_config(cfg)
    report = covariance_structure_report(wire, cfg["experiment.samples"], seed)
    rel = report.diagonal_relative_errors()
    rows = [
        _row("off_pattern_max", report.max_off_pattern(), 0.0, report.n_samples,
             threshold=0.05 * report.scaled_length),
        _row("on_pattern_diag_max_rel_err", float(rel.max()), 0.0,
             report.n_samples),
        _row("on_pattern_count", int(report.conj_on.sum() + report.plain_on.sum())),
    ]
    return rows


def _run_lyapunov(cfg, seed, threads):
    wire = wire_from_config(cfg)
    est = lyapunov_spectrum(wire, cfg["lyapunov.length"],
                            cfg["lyapunov.reorth_every"], seed)
    rows = [_row(f"lyapunov[{i+1}]", x, 0.0, est.length)
            for i, x in enumerate(est.exponents)]
    rows.append(_row("pairing_residual", est.pairing_residual, 0.0, est.length))
    return rows


def _run_localization(cfg, seed, threads):
    wire = wire_from_config(cfg)
    s_values = [r * wire.n_channels for r in cfg["sweep.s_over_n"]]
    report = localization_decay_report(wire, s_values,
                                       n_samples=cfg["experiment.samples"],
                                       master_seed=seed, n_workers=threads)
    rows = [_row("slope", report.slope, report.slope_stderr),
            _row("slope_typical", report.slope_typical,
                 report.slope_typical_stderr),
            _row("intercept", report.intercept)]
    for s, lg, err, ml, mle in zip(report.s_values, report.log_mean_g,
                                   report.log_mean_g_stderr, report.mean_log_g,
                                   report.mean_log_g_stderr):
        rows.append(_row(f"ln_mean_g[s={s:g}]", lg, err, 0, s=s))
        rows.append(_row(f"mean_ln_g[s={s:g}]", ml, mle, 0, s=s))
    return rows


def _run_prop2(cfg, seed, threads):
    wire = wire_from_config(cfg)
    basis = channel_basis(wire)
    sigma = sigma_from_basis(basis)
    limit_amp = math.sqrt(sigma_limit(wire.energy))
    rel = np.abs(sigma.values / limit_amp - 1.0)
    c = collapse_time_factor(wire.energy)
    s = cfg["flow.s_final"]
    aniso = run_sde_ensemble(
        "aniso", dict(sigma=sigma, s_final=s,
                      residual_bound=cfg["flow.residual_bound"]),
        cfg["experiment.paths"], cfg["flow.step"], seed, n_workers=threads)
    dmpk = run_sde_ensemble(
        "dmpk", dict(n_channels=wire.n_channels, beta=wire.beta, s_final=s / c,
                     noise_convention=cfg["flow.noise_convention"],
                     ramp_rate=cfg["flow.ramp_rate"]),
        cfg["experiment.paths"], cfg["flow.step"], seed + 1, n_workers=threads)
    gap = abs(float(aniso.mean("g")) - float(dmpk.mean("g")))
    err = math.hypot(float(aniso.stderr("g")), float(dmpk.stderr("g")))
    return [
        _row("sigma_amplitude_max_rel_dev", float(rel.max()), 0.0, 0,
             limit_amplitude=limit_amp),
        _row("collapse_time_factor", c),
        _row("g_aniso", aniso.mean("g"), aniso.stderr("g"), aniso.count("g"), s=s),
        _row("g_dmpk_rescaled", dmpk.mean("g"), dmpk.stderr("g"),
             dmpk.count("g"), s=s / c),
        _row("collapse_gap", gap, err),
    ]


_RUNNERS = {
    "micro": _run_micro,
    "sde-mea": lambda c, s, t: _run_flow(c, s, t, "sde-mea"),
    "sde-aniso": lambda c, s, t: _run_flow(c, s, t, "sde-aniso"),
    "dmpk": lambda c, s, t: _run_flow(c, s, t, "dmpk"),
    "ucf": _run_ucf,
    "ohm": _run_ohm,
    "moment-convergence": _run_moment_convergence,
    "covariance-structure": _run_covariance,
    "lyapunov": _run_lyapunov,
    "localization": _run_localization,
    "prop2-collapse": _run_prop2,
}


# ---------------------------------------------------------------------------
# writers

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_results_csv(rows: list, path: str) -> None:
    lines = ["schema_version,name,estimate,stderr,count,metadata"]
    for r in rows:
        meta = json.dumps(r["metadata"], sort_keys=True, separators=(",", ":"))
        meta = '"' + meta.replace('"', '""') + '"'
        lines.append(",".join([str(SCHEMA_VERSION), r["name"], _fmt(r["estimate"]),
                               _fmt(r["stderr"]), str(r["count"]), meta]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_results_json(rows: list, path: str) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "rows": rows}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(path: str, cfg: dict, fmt: str, results_file: str,
                   wall_time: float) -> None:
    resolved = {}
    for key, value in sorted(cfg.items()):
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        resolved[key] = value
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool": "dmpkwire",
        "version": __version__,
        "resolved_config": resolved,
        "seed": cfg["experiment.seed"],
        "format": fmt,
        "results_file": results_file,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "wall_time_s": wall_time,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_run(args) -> int:
    cfg = resolve_config(load_config(args.config, args.set or []))
    kind = cfg["experiment.kind"]
    seed = cfg["experiment.seed"]
    threads = args.threads
    if threads == 0:
        threads = min(os.cpu_count() or 1, 8)
    start = time.monotonic()
    rows = _RUNNERS[kind](cfg, seed, threads)
    wall = time.monotonic() - start
    os.makedirs(args.out, exist_ok=True)
    results_file = f"results.{args.format}"
    results_path = os.path.join(args.out, results_file)
    if args.format == "csv":
        write_results_csv(rows, results_path)
    else:
        write_results_json(rows, results_path)
    write_manifest(os.path.join(args.out, "manifest.json"), cfg, args.format,
                   results_file, wall)
    print(f"{kind}: wrote {results_path} ({len(rows)} rows, {wall:.1f}s)")
    return 0


def cmd_validate(args) -> int:
    # validate diagnoses configs, including ones the run path must reject, so
    # the basis is built directly from the raw parameters
    from .wire import build_transverse_hamiltonian, diagonalize_channels

    cfg = resolve_config(load_config(args.config, args.set or []),
                         validate_only=True)
    n = cfg.get("wire.channels", 4)
    energy = cfg.get("wire.energy", 1.0)
    flux = cfg.get("wire.flux")
    if flux is None:
        flux = 0.7 * 2 * math.pi / n
    hopping = cfg.get("wire.hopping", 0.3)
    basis = diagonalize_channels(build_transverse_hamiltonian(n, flux, hopping),
                                 energy)
    print(f"channels: N={n}  E={energy}  gamma={flux:.6f}  h_perp={hopping}")
    if not 0 < flux < 2 * math.pi / n:
        print(f"warning: flux outside the canonical window (0, 2*pi/{n})")
    print(f"{'mu':>4} {'E_perp':>12} {'E_par':>12} {'theta':>10} {'rho':>10}")
    for mu in range(n):
        print(f"{mu + 1:>4} {basis.e_perp[mu]:>12.6f} {basis.e_par[mu]:>12.6f} "
              f"{basis.theta[mu]:>10.6f} {basis.rho[mu]:>10.6f}")
    print("assumption 1 (elliptic channels): pass")
    violations = check_no_degenerate_spacings(basis)
    if violations:
        print(f"assumption 2 (no degenerate spacings): FAIL "
              f"({len(violations)} quadruples)")
        for v in violations[:20]:
            chans = ",".join(str(c + 1) for c in v.channels)
            signs = "".join("+" if q > 0 else "-" for q in v.signs)
            print(f"  channels ({chans}) signs ({signs}) |sum mod 2pi| = "
                  f"{v.magnitude:.3e}")
        if len(violations) > 20:
            print(f"  ... and {len(violations) - 20} more")
    else:
        print("assumption 2 (no degenerate spacings): pass")
    sigma = sigma_from_basis(basis)
    print("sigma matrix (anisotropic flow amplitudes):")
    for row in sigma.values:
        print("  " + " ".join(f"{x:10.6f}" for x in row))
    return 3 if violations else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmpkwire",
        description="Disordered-wire simulation toolkit (Anderson strip / "
                    "matrix flows / DMPK eigenvalue process)")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("validate", cmd_validate)):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config "
                       "file, or a manifest.json to re-run")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        if name == "run":
            p.add_argument("--out", default="results", help="output directory")
            p.add_argument("--format", choices=("csv", "json"), default="csv")
            p.add_argument("--threads", type=int, default=0,
                           help="worker processes (0 = serial)")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        for v in getattr(exc, "violations", [])[:20]:
            print(f"  channels {v.channels} signs {v.signs} "
                  f"|sum mod 2pi| = {v.magnitude:.3e}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except DmpkWireError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
