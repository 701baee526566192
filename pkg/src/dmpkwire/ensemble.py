"""Parallel Monte Carlo: disorder averages, flow ensembles, moment and
covariance comparisons, Lyapunov spectra and localization fits.

Reproducibility contract: every realization draws from a generator that is a
pure function of (master_seed, realization index); realizations are grouped
into fixed-size blocks, each block is reduced with a single-pass streaming
accumulator, and blocks are merged in index order.  Results are therefore
byte-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InsufficientSamples, NumericalError
from .flows import (
    SigmaMatrix,
    _dmpk_batch,
    _flow_batch,
    aniso_sampler,
    ballistic_state,
    mea_sampler,
    sigma_from_basis,
)
from .transport import spectrum_from_log_singular_values
from .wire import (
    ChannelBasis,
    WireConfig,
    _interaction_products,
    assert_assumptions,
    channel_basis,
    realization_rng,
)

DEFAULT_BLOCK_SIZE = 4096


# ---------------------------------------------------------------------------
# Streaming statistics

@dataclass
class StreamingMoments:
    """Single-pass mean/variance accumulator (Welford), mergeable.

    Values may be scalars or fixed-shape arrays; arrays are accumulated
    componentwise.
    """

    count: int = 0
    mean: np.ndarray | float = 0.0
    m2: np.ndarray | float = 0.0
    vmin: np.ndarray | float = math.inf
    vmax: np.ndarray | float = -math.inf

    def update_batch(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        n_new = values.shape[0]
        if n_new == 0:
            return
        batch_mean = values.mean(axis=0)
        batch_m2 = ((values - batch_mean) ** 2).sum(axis=0)
        if self.count == 0:
            self.count = n_new
            self.mean = batch_mean
            self.m2 = batch_m2
            self.vmin = values.min(axis=0)
            self.vmax = values.max(axis=0)
            return
        merged = StreamingMoments(count=n_new, mean=batch_mean, m2=batch_m2,
                                  vmin=values.min(axis=0), vmax=values.max(axis=0))
        self.merge(merged)

    def merge(self, other: "StreamingMoments") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count = other.count
            self.mean = other.mean
            self.m2 = other.m2
            self.vmin = other.vmin
            self.vmax = other.vmax
            return
        total = self.count + other.count
        delta = np.asarray(other.mean) - np.asarray(self.mean)
        self.mean = self.mean + delta * (other.count / total)
        self.m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / total)
        self.vmin = np.minimum(self.vmin, other.vmin)
        self.vmax = np.maximum(self.vmax, other.vmax)
        self.count = total

    @property
    def variance(self):
        if self.count < 2:
            return np.zeros_like(np.asarray(self.mean, dtype=float))
        return self.m2 / (self.count - 1)

    @property
    def stderr(self):
        if self.count < 1:
            return np.asarray(math.inf)
        return np.sqrt(self.variance / self.count)


@dataclass
class EnsembleStats:
    """Named streaming accumulators for one ensemble."""

    observables: dict = field(default_factory=dict)

    def update(self, name: str, values: np.ndarray) -> None:
        self.observables.setdefault(name, StreamingMoments()).update_batch(values)

    def merge(self, other: "EnsembleStats") -> None:
        for name, mom in other.observables.items():
            if name in self.observables:
                self.observables[name].merge(mom)
            else:
                ours = StreamingMoments()
                ours.merge(mom)
                self.observables[name] = ours

    def __getitem__(self, name: str) -> StreamingMoments:
        return self.observables[name]

    def mean(self, name: str):
        return self.observables[name].mean

    def stderr(self, name: str):
        return self.observables[name].stderr

    def count(self, name: str) -> int:
        return self.observables[name].count


# ---------------------------------------------------------------------------
# Deterministic block runner

def _blocks(n_samples: int, block_size: int):
    return [(a, min(a + block_size, n_samples))
            for a in range(0, n_samples, block_size)]


_WORKER_FN = None


def _pool_init(fn):
    global _WORKER_FN
    _WORKER_FN = fn


def _pool_call(args):
    return _WORKER_FN(*args)


def _run_blocks(block_fn, n_samples: int, block_size: int, n_workers: int,
                common_args: tuple) -> EnsembleStats:
    """Run ``block_fn(start, stop, *common_args) -> EnsembleStats`` over fixed
    index blocks and merge in index order (worker count cannot change the
    result)."""
    spans = _blocks(n_samples, block_size)
    stats = EnsembleStats()
    if n_workers and n_workers > 1 and len(spans) > 1:
        with ProcessPoolExecutor(max_workers=n_workers, initializer=_pool_init,
                                 initargs=(block_fn,)) as pool:
            results = list(pool.map(_pool_call,
                                    [(a, b) + common_args for a, b in spans]))
        for part in results:
            stats.merge(part)
    else:
        for a, b in spans:
            stats.merge(block_fn(a, b, *common_args))
    return stats


# ---------------------------------------------------------------------------
# Microscopic ensembles

MICRO_OBSERVABLES = ("g", "ln_g", "transmission")


def _micro_block(start: int, stop: int, config: WireConfig, master_seed: int,
                 observables: tuple, failure_budget: int) -> EnsembleStats:
    basis = channel_basis(config)
    length = config.resolved_length
    rngs = [realization_rng(master_seed, i) for i in range(start, stop)]
    a, log_scale = _interaction_products(basis, config.disorder, length,
                                         config.potential, rngs)
    n = basis.n_channels
    stats = EnsembleStats()
    total = stop - start
    finite_in = np.all(np.isfinite(a), axis=(1, 2)) & np.isfinite(log_scale)
    log_sv = np.full((total, n), np.nan)
    if np.any(finite_in):
        sv = np.linalg.svd(a[finite_in][:, :n, :n], compute_uv=False)
        log_sv[finite_in] = np.log(sv) + log_scale[finite_in, None]
    good = np.all(np.isfinite(log_sv), axis=1)
    n_bad = int((~good).sum())
    if n_bad:
        if n_bad > failure_budget:
            raise NumericalError(
                f"{n_bad} of {stop - start} realizations failed numerically "
                f"(budget {failure_budget}); indices "
                f"{(start + np.flatnonzero(~good)[:10]).tolist()}")
        log_sv = log_sv[good]
        stats.update("failed", np.ones(n_bad))
    spectra = [spectrum_from_log_singular_values(row) for row in log_sv]
    if "g" in observables:
        stats.update("g", np.array([sp.conductance for sp in spectra]))
    if "ln_g" in observables:
        stats.update("ln_g", np.array([sp.log_conductance for sp in spectra]))
    if "transmission" in observables:
        stats.update("transmission", np.array([sp.values for sp in spectra]))
    return stats


def run_micro_ensemble(config: WireConfig, n_samples: int, master_seed: int,
                       observables: tuple = MICRO_OBSERVABLES,
                       block_size: int = DEFAULT_BLOCK_SIZE,
                       n_workers: int = 0,
                       failure_budget: int = 0) -> EnsembleStats:
    """Disorder average over independent wires.

    Assumption checks run once up front.  By default any per-sample numerical
    failure aborts the ensemble (silent dropping would bias the average); a
    positive ``failure_budget`` instead tolerates that many dropped samples
    per block, counted under the "failed" observable.
    """
    basis = channel_basis(config)
    assert_assumptions(basis)
    return _run_blocks(_micro_block, n_samples, block_size, n_workers,
                       (config, master_seed, observables, failure_budget))


# ---------------------------------------------------------------------------
# Flow ensembles

def _sde_block(start: int, stop: int, kind: str, params: dict,
               master_seed: int, observables: tuple) -> EnsembleStats:
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(start,)))
    n_paths = stop - start
    stats = EnsembleStats()
    if kind in ("mea", "aniso"):
        n_channels = params["n_channels"]
        if kind == "mea":
            sampler = mea_sampler(n_channels)
        else:
            sampler = aniso_sampler(params["sigma"])
        bound = params.get("residual_bound", 0.1)
        _, stack, scales, residuals = _flow_batch(
            sampler, n_paths, params["s_final"], params["ds"], rng, bound)
        mats, log_scales = stack[-1], scales[-1]
        sv = np.linalg.svd(mats[:, :n_channels, :n_channels], compute_uv=False)
        log_sv = np.log(sv) + log_scales[:, None]
        # the Euler scheme drifts off the group manifold by the monitored
        # residual, so T may overshoot 1 by that amount before clamping
        spectra = [spectrum_from_log_singular_values(row, clamp_tol=bound)
                   for row in log_sv]
        t_vals = np.array([sp.values for sp in spectra])
        stats.update("flow_residual", residuals)
    elif kind == "dmpk":
        initial = params.get("initial")
        if initial is None:
            initial = ballistic_state(params["n_channels"], params.get("beta", 1))
        from .flows import RAMP_RATE

        _, stack = _dmpk_batch(initial, n_paths, params["s_final"], params["ds"],
                               rng, params.get("noise_convention", "sqrt_diffusion"),
                               ramp_rate=params.get("ramp_rate", RAMP_RATE))
        t_vals = stack[-1]
    else:
        raise ConfigError(f"unknown flow kind {kind!r}")
    g = t_vals.sum(axis=1)
    if "g" in observables:
        stats.update("g", g)
    if "ln_g" in observables:
        if np.any(g <= 0):
            raise NumericalError("nonpositive conductance in flow ensemble")
        stats.update("ln_g", np.log(g))
    if "transmission" in observables:
        stats.update("transmission", t_vals)
    return stats


def run_sde_ensemble(kind: str, params: dict, n_paths: int, ds: float,
                     master_seed: int, observables: tuple = MICRO_OBSERVABLES,
                     block_size: int = DEFAULT_BLOCK_SIZE,
                     n_workers: int = 0) -> EnsembleStats:
    """Ensemble of independent flow paths.

    kind: "mea" | "aniso" (params must carry a SigmaMatrix) | "dmpk".
    params: n_channels, s_final, plus kind-specific entries (sigma, beta,
    noise_convention, initial, residual_bound).
    """
    params = dict(params)
    params["ds"] = ds
    if kind == "aniso" and not isinstance(params.get("sigma"), SigmaMatrix):
        raise ConfigError("aniso ensemble needs params['sigma'], a SigmaMatrix")
    if kind == "aniso":
        params.setdefault("n_channels", params["sigma"].n_channels)
    return _run_blocks(_sde_block, n_paths, block_size, n_workers,
                       (kind, params, master_seed, observables))


# ---------------------------------------------------------------------------
# Moment-convergence comparison (micro vs anisotropic flow)

#: moment label -> function of a complex entry sample
_MOMENT_FUNS = {
    "mean_re": lambda z: z.real,
    "mean_im": lambda z: z.imag,
    "abs2": lambda z: np.abs(z) ** 2,
    "sq_re": lambda z: (z**2).real,
    "sq_im": lambda z: (z**2).imag,
    "cube_re": lambda z: (np.abs(z) ** 2 * z).real,
    "abs4": lambda z: np.abs(z) ** 4,
}

MOMENTS_BY_ORDER = {
    1: ("mean_re", "mean_im"),
    2: ("abs2", "sq_re", "sq_im"),
    3: ("cube_re",),
    4: ("abs4",),
}


def _entry_moment_stats(mats: np.ndarray, entries) -> EnsembleStats:
    stats = EnsembleStats()
    for (i, j) in entries:
        z = mats[:, i, j]
        for label, fun in _MOMENT_FUNS.items():
            stats.update(f"{label}[{i},{j}]", fun(z))
    return stats


def _micro_moment_block(start, stop, config, master_seed, entries):
    basis = channel_basis(config)
    rngs = [realization_rng(master_seed, i) for i in range(start, stop)]
    a, log_scale = _interaction_products(basis, config.disorder,
                                         config.resolved_length,
                                         config.potential, rngs)
    if np.any(log_scale != 0.0):
        a = a * np.exp(log_scale)[:, None, None]
    return _entry_moment_stats(a, entries)


def _flow_moment_block(start, stop, sigma, s_final, ds, master_seed, entries):
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(start,)))
    _, stack, scales, _ = _flow_batch(aniso_sampler(sigma), stop - start,
                                      s_final, ds, rng, residual_bound=0.25)
    mats = stack[-1] * np.exp(scales[-1])[:, None, None]
    return _entry_moment_stats(mats, entries)


@dataclass(frozen=True)
class MomentGap:
    """|micro - flow| for one entry moment at one disorder strength."""

    entry: tuple
    moment: str
    order: int
    disorder: float
    micro: float
    micro_stderr: float
    reference: float
    reference_stderr: float

    @property
    def gap(self) -> float:
        return abs(self.micro - self.reference)

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.micro_stderr, self.reference_stderr)


@dataclass(frozen=True)
class MomentReport:
    """Microscopic vs limit-flow moments across a disorder sweep."""

    disorders: tuple
    scaled_length: float
    entries: tuple
    gaps: tuple                  # MomentGap, all sweeps and moments
    identity_deviation: float    # max |E(A) - 1| over entries, units of stderr

    def gaps_for(self, entry, moment) -> list:
        return [g for g in self.gaps
                if g.entry == tuple(entry) and g.moment == moment]

    def monotone_within_error(self, entry, moment, n_sigma: float = 2.0) -> bool:
        """Gaps nonincreasing along the (descending) disorder sweep, allowing
        n_sigma of combined statistical error per comparison."""
        seq = self.gaps_for(entry, moment)
        for prev, nxt in zip(seq, seq[1:]):
            allowance = n_sigma * math.hypot(prev.combined_stderr, nxt.combined_stderr)
            if nxt.gap > prev.gap + allowance:
                return False
        return True


def moment_convergence_report(config_base: WireConfig, disorders, s: float,
                              orders=(2, 4), n_samples: int = 100_000,
                              master_seed: int = 0,
                              entries=None, ds_flow: float = 1e-3,
                              block_size: int = DEFAULT_BLOCK_SIZE,
                              n_workers: int = 0) -> MomentReport:
    """Compare entry moments of the interaction product against the
    anisotropic limit flow across a decreasing disorder sweep.

    The flow reference uses the sigma matrix of the configured basis; the
    empirical content of the small-disorder limit is that the gaps shrink as
    the sweep descends.
    """
    disorders = tuple(disorders)
    if any(l2 >= l1 for l1, l2 in zip(disorders, disorders[1:])):
        raise ConfigError("disorder sweep must be strictly decreasing")
    import dataclasses

    basis = channel_basis(config_base)
    assert_assumptions(basis)
    nc = basis.n_channels
    if entries is None:
        entries = ((0, 0), (0, min(1, 2 * nc - 1)), (0, nc), (0, 2 * nc - 1))
    entries = tuple(tuple(e) for e in entries)
    wanted = [(order, m) for order in orders for m in MOMENTS_BY_ORDER[order]]

    sigma = sigma_from_basis(basis)
    flow_stats = _run_blocks(
        _flow_moment_block, n_samples, block_size, n_workers,
        (sigma, s, ds_flow, master_seed + 1, entries))

    gaps = []
    ident_dev = 0.0
    for lam in disorders:
        config = dataclasses.replace(config_base, disorder=lam, length=None,
                                     scaled_length=s)
        micro_stats = _run_blocks(
            _micro_moment_block, n_samples, block_size, n_workers,
            (config, master_seed, entries))
        for (i, j) in entries:
            for order, moment in wanted:
                key = f"{moment}[{i},{j}]"
                gaps.append(MomentGap(
                    entry=(i, j), moment=moment, order=order, disorder=lam,
                    micro=float(micro_stats.mean(key)),
                    micro_stderr=float(micro_stats.stderr(key)),
                    reference=float(flow_stats.mean(key)),
                    reference_stderr=float(flow_stats.stderr(key)),
                ))
            for part, target in (("mean_re", 1.0 if i == j else 0.0), ("mean_im", 0.0)):
                key = f"{part}[{i},{j}]"
                for st in (micro_stats, flow_stats):
                    err = float(st.stderr(key))
                    if err > 0:
                        ident_dev = max(ident_dev,
                                        abs(float(st.mean(key)) - target) / err)

    # resolution gate: the magnitude moments carry the monotonicity verdict,
    # and their reference scale is the gap at the strongest disorder
    report = MomentReport(disorders=disorders, scaled_length=s, entries=entries,
                          gaps=tuple(gaps), identity_deviation=ident_dev)
    for entry in entries:
        for moment in ("abs2", "abs4"):
            seq = report.gaps_for(entry, moment)
            if not seq:
                continue
            worst_err = max(g.combined_stderr for g in seq)
            if worst_err > 0.5 * seq[0].gap:
                raise InsufficientSamples(
                    f"stderr {worst_err:.2e} exceeds half the leading gap "
                    f"{seq[0].gap:.2e} for {moment}{entry}; increase n_samples")
    return report


# ---------------------------------------------------------------------------
# Covariance structure of the accumulated noise

@dataclass(frozen=True)
class CovarianceReport:
    """Empirical second moments of lam * sum_x Z_x against the phase selection rule.

    plain[i,j,k,l]  estimates E[(S)_ij (S)_kl],      on-pattern iff dG_ij + dG_kl = 0 (mod 2pi)
    conj[i,j,k,l]   estimates E[conj(S)_ij (S)_kl],  on-pattern iff dG_ij - dG_kl = 0 (mod 2pi)

    References hold s * E[R R] (resp. s * E[conj(R) R]) computed exactly from
    the channel frame; off-pattern references are zero in the limit.
    """

    scaled_length: float
    disorder: float
    n_samples: int
    plain: np.ndarray
    conj: np.ndarray
    plain_ref: np.ndarray
    conj_ref: np.ndarray
    plain_on: np.ndarray
    conj_on: np.ndarray
    stderr_scale: float

    def max_off_pattern(self) -> float:
        off = max(np.abs(self.plain[~self.plain_on]).max(initial=0.0),
                  np.abs(self.conj[~self.conj_on]).max(initial=0.0))
        return float(off)

    def diagonal_relative_errors(self) -> np.ndarray:
        """Relative error of E|S_ij|^2 against its reference, flattened."""
        dim = self.plain.shape[0]
        out = np.empty(dim * dim)
        k = 0
        for i in range(dim):
            for j in range(dim):
                ref = self.conj_ref[i, j, i, j].real
                out[k] = abs(self.conj[i, j, i, j].real - ref) / ref
                k += 1
        return out


def _slice_noise_covariance(basis: ChannelBasis) -> tuple[np.ndarray, np.ndarray]:
    """Exact E[R_ij R_kl] and E[conj(R_ij) R_kl] for unit-variance potentials."""
    o = basis.vectors
    n = basis.n_channels
    p = 1.0 / np.sqrt(1j * basis.rho)
    # E[Vt_ab Vt_cd] = sum_z conj(O_za) O_zb conj(O_zc) O_zd
    ev_plain = np.einsum("za,zb,zc,zd->abcd", o.conj(), o, o.conj(), o)
    ev_conj = np.einsum("za,zb,zc,zd->abcd", o, o.conj(), o.conj(), o)
    w_plain = np.einsum("a,b,c,d,abcd->abcd", p, p, p, p, ev_plain)
    w_conj = np.einsum("a,b,c,d,abcd->abcd", p.conj(), p.conj(), p, p, ev_conj)
    sign = np.concatenate([np.ones(n), -np.ones(n)])  # R_ij = -sign_i W_{mu nu}
    mu = np.concatenate([np.arange(n), np.arange(n)])
    si, sk = np.meshgrid(sign, sign, indexing="ij")
    plain = np.empty((2 * n,) * 4, dtype=complex)
    conj = np.empty_like(plain)
    for i in range(2 * n):
        for j in range(2 * n):
            for k in range(2 * n):
                for l in range(2 * n):
                    f = sign[i] * sign[k]
                    plain[i, j, k, l] = f * w_plain[mu[i], mu[j], mu[k], mu[l]]
                    conj[i, j, k, l] = f * w_conj[mu[i], mu[j], mu[k], mu[l]]
    return plain, conj


def covariance_structure_report(config: WireConfig, n_samples: int = 100_000,
                                master_seed: int = 0, pattern_tol: float = 1e-9,
                                block_size: int = DEFAULT_BLOCK_SIZE) -> CovarianceReport:
    """Estimate all index-quadruple covariances of lam * sum_x Z_x and classify
    them against the phase-matching selection rule."""
    if config.scaled_length is None:
        raise ConfigError("covariance report wants the s-form of the wire length")
    basis = channel_basis(config)
    assert_assumptions(basis)
    s = config.scaled_length
    dim = 2 * basis.n_channels
    plain = np.zeros((dim,) * 4, dtype=complex)
    conj = np.zeros_like(plain)
    done = 0
    for a, b in _blocks(n_samples, block_size):
        rngs = [realization_rng(master_seed, i) for i in range(a, b)]
        _, _, z_sum = _interaction_products(basis, config.disorder,
                                            config.resolved_length,
                                            config.potential, rngs,
                                            collect_sum=True)
        plain += np.einsum("nij,nkl->ijkl", z_sum, z_sum)
        conj += np.einsum("nij,nkl->ijkl", z_sum.conj(), z_sum)
        done += b - a
    plain /= done
    conj /= done

    g = basis.free_phases
    dg = g[:, None] - g[None, :]
    combo_plain = dg[:, :, None, None] + dg[None, None, :, :]
    combo_conj = dg[:, :, None, None] - dg[None, None, :, :]

    def on_pattern(combo):
        wrapped = (combo + math.pi) % (2 * math.pi) - math.pi
        return np.abs(wrapped) < max(pattern_tol, 1e-9)

    r_plain, r_conj = _slice_noise_covariance(basis)
    plain_on = on_pattern(combo_plain)
    conj_on = on_pattern(combo_conj)
    lam2 = config.disorder**2
    length = config.resolved_length
    return CovarianceReport(
        scaled_length=s, disorder=config.disorder, n_samples=done,
        plain=plain, conj=conj,
        plain_ref=np.where(plain_on, lam2 * length * r_plain, 0.0),
        conj_ref=np.where(conj_on, lam2 * length * r_conj, 0.0),
        plain_on=plain_on, conj_on=conj_on,
        stderr_scale=1.0 / math.sqrt(done),
    )


# ---------------------------------------------------------------------------
# Lyapunov spectrum

@dataclass(frozen=True)
class LyapunovEstimate:
    exponents: np.ndarray        # per-slice, descending, length 2N
    pairing_residual: float      # max |l_i + l_{2N+1-i}|
    length: int
    reorth_every: int

    @property
    def smallest_positive(self) -> float:
        pos = self.exponents[self.exponents > 0]
        if not len(pos):
            raise NumericalError("no positive Lyapunov exponent resolved")
        return float(pos.min())

    def per_scaled_length(self, disorder: float) -> np.ndarray:
        """Exponents per unit s = disorder^2 * slices."""
        return self.exponents / disorder**2


def lyapunov_spectrum(config: WireConfig, length: int, reorth_every: int = 10,
                      seed: int = 0) -> LyapunovEstimate:
    """QR-reorthogonalised Lyapunov exponents of the wave-basis slice product."""
    if length < 10 * reorth_every:
        raise ConfigError("length must be much larger than reorth_every")
    basis = channel_basis(config)
    assert_assumptions(basis)
    n = basis.n_channels
    rng = realization_rng(seed, 0)
    q = np.eye(2 * n, dtype=complex)
    logs = np.zeros(2 * n)
    from .wire import _draw_potentials, upsilon

    u, uinv = upsilon(basis)
    e_par = np.diag(basis.e_par.astype(complex))
    block = np.zeros((2 * n, 2 * n), dtype=complex)
    block[:n, n:] = -np.eye(n)
    block[n:, :n] = np.eye(n)
    for x in range(length):
        v = _draw_potentials(rng, config.potential, (n,))
        t = block.copy()
        t[:n, :n] = e_par
        if config.disorder != 0.0:
            t[:n, :n] -= config.disorder * (basis.vectors.conj().T * v) @ basis.vectors
        q = (uinv @ t @ u) @ q
        if (x + 1) % reorth_every == 0 or x == length - 1:
            q, r = np.linalg.qr(q)
            d = np.abs(np.diag(r))
            if np.any(d == 0):
                raise NumericalError("rank collapse during QR reorthogonalisation")
            logs += np.log(d)
    exponents = np.sort(logs / length)[::-1]
    pairing = float(np.abs(exponents + exponents[::-1]).max())
    return LyapunovEstimate(exponents=exponents, pairing_residual=pairing,
                            length=length, reorth_every=reorth_every)


# ---------------------------------------------------------------------------
# Localization decay

def _weighted_line_fit(x, y, err):
    w = 1.0 / np.asarray(err) ** 2
    sw = w.sum()
    sx = (w * x).sum() / sw
    sy = (w * y).sum() / sw
    sxx = (w * (x - sx) ** 2).sum()
    slope = (w * (x - sx) * (y - sy)).sum() / sxx
    return slope, sy - slope * sx, math.sqrt(1.0 / sxx)


@dataclass(frozen=True)
class LocalizationReport:
    """Exponential-decay fits over an s-sweep.

    Two tracks: the decay of the mean conductance (slope of ln E(g), which is
    what the localization bound constrains) and of the typical conductance
    (slope of E(ln g), which is governed by twice the smallest positive
    Lyapunov exponent).  Deep in the localized regime the two rates differ:
    E(g) is carried by rare barely-localized samples and decays more slowly.
    """

    s_values: np.ndarray
    log_mean_g: np.ndarray
    log_mean_g_stderr: np.ndarray
    mean_log_g: np.ndarray
    mean_log_g_stderr: np.ndarray
    slope: float                   # d ln E(g) / ds
    slope_stderr: float
    intercept: float
    slope_typical: float           # d E(ln g) / ds
    slope_typical_stderr: float

    @property
    def decaying(self) -> bool:
        return self.slope + 2 * self.slope_stderr < 0


def localization_decay_report(config_base: WireConfig, s_values,
                              n_samples: int = 2000, master_seed: int = 0,
                              block_size: int = DEFAULT_BLOCK_SIZE,
                              n_workers: int = 0) -> LocalizationReport:
    """Fit ln E(g) and E(ln g) against s over a sweep of identical wires."""
    import dataclasses

    s_values = np.asarray(sorted(s_values), dtype=float)
    log_means = np.empty(len(s_values))
    log_errs = np.empty(len(s_values))
    mean_logs = np.empty(len(s_values))
    mean_log_errs = np.empty(len(s_values))
    for k, s in enumerate(s_values):
        config = dataclasses.replace(config_base, length=None,
                                     scaled_length=float(s))
        stats = run_micro_ensemble(config, n_samples, master_seed + k,
                                   observables=("g", "ln_g"),
                                   block_size=block_size, n_workers=n_workers)
        mean_g = float(stats.mean("g"))
        err_g = float(stats.stderr("g"))
        if mean_g <= 2 * err_g:
            raise InsufficientSamples(
                f"E(g) at s={s} is {mean_g:.3e} +- {err_g:.3e}; "
                "cannot take a log reliably")
        log_means[k] = math.log(mean_g)
        log_errs[k] = err_g / mean_g
        mean_logs[k] = float(stats.mean("ln_g"))
        mean_log_errs[k] = float(stats.stderr("ln_g"))
    slope, intercept, slope_err = _weighted_line_fit(s_values, log_means, log_errs)
    slope_t, _, slope_t_err = _weighted_line_fit(s_values, mean_logs, mean_log_errs)
    return LocalizationReport(s_values=s_values, log_mean_g=log_means,
                              log_mean_g_stderr=log_errs, mean_log_g=mean_logs,
                              mean_log_g_stderr=mean_log_errs, slope=slope,
                              slope_stderr=slope_err, intercept=intercept,
                              slope_typical=slope_t,
                              slope_typical_stderr=slope_t_err)
