"""Matrix-valued Brownian flows and the DMPK transmission-eigenvalue process.

Two increment ensembles are provided.  The isotropic (maximal-entropy) one has
blocks

    L = [[a, b], [conj(b), conj(a)]],
    a_ij = (B^R_ij + i B^I_ij)/sqrt(2N)   (i<j),   a_ii = i B^I_ii / sqrt(N),
    a_ji = -conj(a_ij),
    b_ij = (C^R_ij + i C^I_ij)/sqrt(2N)   (i<=j),  b symmetric,

with independent standard Brownian motions, so over a step ds every B-draw is
N(0, ds).  The anisotropic ensemble multiplies every (i, j) entry by a
channel-dependent amplitude sigma_ij derived from the microscopic model,

    sigma_ij^2 = N E|Vt_ij|^2 / (4 |sin(theta_i) sin(theta_j)|),

and reduces to the isotropic law at sigma = 1.

The transmission eigenvalues of the isotropic flow evolve autonomously:

    dT_k = v_k ds + sqrt(D_k) dB_k,
    v_k = -T_k + (2 T_k / gt) (1 - T_k + (beta/2) sum_{j!=k} (T_k + T_j - 2 T_k T_j)/(T_k - T_j)),
    D_k = 4 T_k^2 (1 - T_k) / gt,            gt = beta N + 2 - beta.

The integrator works in the radial coordinates T_k = 1/cosh^2(x_k), x_k > 0,
where Ito's formula turns the noise into an additive one:

    dx_k = (1/(2 gt)) (2 coth(2 x_k)
           + beta sum_{j!=k} sinh(2 x_k)/(sinh^2 x_k - sinh^2 x_j)) ds
           + dB_k / sqrt(gt).

That this is exactly the Ito transform of (v_k, D_k) is checked in the test
suite.  Whether D_k or sqrt(D_k) multiplies dB_k is notationally ambiguous in
the defining equation; both conventions are implemented and the universality
checks single out sqrt(D_k), which is the default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateSpectrum, SingularBasis, StepTooLarge
from .wire import ChannelBasis

NOISE_CONVENTIONS = ("sqrt_diffusion", "diffusion")

#: Adaptive step near the degenerate ballistic corner: h <= RAMP_RATE * s.
#: The hard-edge drift is convex, so Euler carries an O(ramp rate) relative
#: bias out of the corner; the default keeps it well below Monte Carlo
#: resolution at desk scale.
RAMP_RATE = 0.002
_RAMP_FLOOR = 1e-8
_MAX_HALVINGS = 60


# ---------------------------------------------------------------------------
# Brownian increments

@dataclass(frozen=True)
class FlowIncrement:
    """One sampled increment dL over a step ds, with its block structure."""

    entries: np.ndarray
    ds: float

    @property
    def a_block(self) -> np.ndarray:
        n = self.entries.shape[0] // 2
        return self.entries[:n, :n]

    @property
    def b_block(self) -> np.ndarray:
        n = self.entries.shape[0] // 2
        return self.entries[:n, n:]


def _increment_batch(n_channels: int, ds: float, rng: np.random.Generator,
                     size: int, sigma: np.ndarray | None = None) -> np.ndarray:
    """Stack of ``size`` increments, shape (size, 2N, 2N)."""
    n = n_channels
    root = math.sqrt(ds)
    norm_off = 1.0 / math.sqrt(2 * n)
    ga = rng.standard_normal((size, n, n)) + 1j * rng.standard_normal((size, n, n))
    gdiag = rng.standard_normal((size, n))
    gb = rng.standard_normal((size, n, n)) + 1j * rng.standard_normal((size, n, n))

    a = np.triu(ga, 1) * norm_off
    a = a - np.conj(np.swapaxes(a, 1, 2))
    idx = np.arange(n)
    a[:, idx, idx] = 1j * gdiag / math.sqrt(n)
    b = np.triu(gb) * norm_off
    b = b + np.swapaxes(np.triu(gb, 1), 1, 2) * norm_off
    if sigma is not None:
        a = a * sigma[None, :, :]
        b = b * sigma[None, :, :]
    a *= root
    b *= root
    out = np.empty((size, 2 * n, 2 * n), dtype=complex)
    out[:, :n, :n] = a
    out[:, :n, n:] = b
    out[:, n:, :n] = b.conj()
    out[:, n:, n:] = a.conj()
    return out


def sample_mea_increment(n_channels: int, ds: float,
                         rng: np.random.Generator) -> FlowIncrement:
    """One increment of the maximal-entropy (isotropic) flow."""
    if ds <= 0:
        raise ConfigError("ds must be > 0")
    return FlowIncrement(entries=_increment_batch(n_channels, ds, rng, 1)[0], ds=ds)


@dataclass(frozen=True)
class SigmaMatrix:
    """Channel-dependent noise amplitudes of the anisotropic flow."""

    values: np.ndarray   # sigma_{mu nu} > 0, symmetric

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ConfigError("sigma matrix must be square")
        if not np.allclose(v, v.T, rtol=1e-10, atol=1e-12):
            raise ConfigError("sigma matrix must be symmetric")
        if np.any(v <= 0):
            raise ConfigError("sigma matrix entries must be strictly positive")

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]


def potential_channel_covariance(basis: ChannelBasis) -> np.ndarray:
    """E|Vt_{mu nu}|^2 for unit-variance site disorder: sum_z |O_z mu O_z nu|^2."""
    w = np.abs(basis.vectors) ** 2
    return np.einsum("za,zb->ab", w, w)


def sigma_from_basis(basis: ChannelBasis,
                     potential_covariance: np.ndarray | None = None,
                     rho_tol: float = 1e-6) -> SigmaMatrix:
    """Anisotropic amplitudes sigma_{mu nu} of the small-disorder limit flow."""
    sin_t = np.sin(basis.theta)
    if np.any(2 * sin_t < rho_tol):
        raise SingularBasis("grazing channel: sigma amplitudes diverge")
    cov = potential_covariance
    if cov is None:
        cov = potential_channel_covariance(basis)
    cov = np.asarray(cov, dtype=float)
    n = basis.n_channels
    if cov.shape != (n, n):
        raise ConfigError("potential covariance must be N x N")
    sig2 = n * cov / (4.0 * np.abs(np.outer(sin_t, sin_t)))
    return SigmaMatrix(values=np.sqrt(sig2))


def sample_aniso_increment(sigma: SigmaMatrix, ds: float,
                           rng: np.random.Generator) -> FlowIncrement:
    """One increment of the anisotropic limit flow."""
    if ds <= 0:
        raise ConfigError("ds must be > 0")
    ent = _increment_batch(sigma.n_channels, ds, rng, 1, sigma=sigma.values)[0]
    return FlowIncrement(entries=ent, ds=ds)


def sigma_limit(energy: float) -> float:
    """Common sigma^2 of all channels in the vanishing-transverse-hopping limit,
    1 / (4 (1 - (E/2)^2))."""
    s2 = 1.0 - (energy / 2.0) ** 2
    if s2 <= 0:
        raise ConfigError("energy outside the open band (-2, 2)")
    return 1.0 / (4.0 * s2)


def collapse_time_factor(energy: float) -> float:
    """Time rescale c(E) = 1/sigma_limit^2: the anisotropic flow at time s
    matches the isotropic (DMPK) flow at time s/c as the transverse hopping
    vanishes."""
    return 1.0 / sigma_limit(energy)


# ---------------------------------------------------------------------------
# Matrix flow integration

def mea_sampler(n_channels: int):
    """Batch sampler for integrate_matrix_flow: (ds, rng, size) -> increments."""
    def sample(ds, rng, size):
        return _increment_batch(n_channels, ds, rng, size)
    sample.n_channels = n_channels
    return sample


def aniso_sampler(sigma: SigmaMatrix):
    def sample(ds, rng, size):
        return _increment_batch(sigma.n_channels, ds, rng, size, sigma=sigma.values)
    sample.n_channels = sigma.n_channels
    return sample


@dataclass(frozen=True)
class MatrixFlowPath:
    """Matrix flow sampled at requested times, with group diagnostics."""

    times: np.ndarray
    matrices: np.ndarray          # (len(times), 2N, 2N), unit-scale parts
    log_scales: np.ndarray        # matching log factors
    residuals: np.ndarray         # current-conservation residual per sample


def _flow_batch(sampler, n_paths: int, s_final: float, ds: float,
                rng: np.random.Generator, residual_bound: float,
                times: np.ndarray | None = None):
    """Euler-Maruyama for dA = dZ A on a batch of paths.

    Returns (times, A-stack (n_times, n_paths, 2N, 2N), log_scales).  The
    increment multiplies from the left and is sampled independently of the
    state (Ito).  Current-conservation residuals are monitored; exceeding
    ``residual_bound`` raises StepTooLarge.
    """
    from .transport import sigma_z

    n_channels = sampler.n_channels
    dim = 2 * n_channels
    if times is None:
        times = np.array([s_final])
    times = np.asarray(times, dtype=float)
    if s_final < 0 or ds <= 0:
        raise ConfigError("need s_final >= 0 and ds > 0")
    if np.any(np.diff(times) < 0) or np.any(times > s_final + 1e-12):
        raise ConfigError("sample times must be ascending and within s_final")
    a = np.broadcast_to(np.eye(dim, dtype=complex), (n_paths, dim, dim)).copy()
    log_scale = np.zeros(n_paths)
    sz = np.diag(sigma_z(n_channels)).astype(complex)
    out = np.empty((len(times),) + a.shape, dtype=complex)
    out_scale = np.empty((len(times), n_paths))

    def record(k):
        out[k] = a
        out_scale[k] = log_scale

    def check_residual():
        # residual of A* Sz A = Sz, gauged by ||A||^2: that is the size of the
        # perturbation seen by the transmission extraction
        quad = np.einsum("nij,i,nik->njk", a.conj(), sz, a)
        scale = np.exp(2 * log_scale)
        norm2 = np.linalg.norm(a, axis=(1, 2)) ** 2
        res = np.linalg.norm(quad - np.diag(sz)[None] / scale[:, None, None],
                             axis=(1, 2)) / norm2
        worst = res.max(initial=0.0)
        if not np.isfinite(worst) or worst > residual_bound:
            raise StepTooLarge(
                f"current-conservation residual {worst:.3e} exceeded "
                f"{residual_bound:.2e} during matrix-flow integration"
            )
        return res

    s = 0.0
    k = 0
    step_count = 0
    while k < len(times) and times[k] <= 1e-15:
        record(k)
        k += 1
    while s < s_final - 1e-12 and k < len(times):
        h = min(ds, times[k] - s)
        if h > 1e-15:
            dz = sampler(h, rng, n_paths)
            a = a + dz @ a
            s += h
            step_count += 1
            if step_count % 64 == 0:
                peak = np.abs(a).max(axis=(1, 2))
                big = peak > 1e8
                if np.any(big):
                    a[big] /= peak[big, None, None]
                    log_scale[big] += np.log(peak[big])
                check_residual()
        if s >= times[k] - 1e-12:
            record(k)
            k += 1
    residuals = check_residual()
    return times, out, out_scale, residuals


def integrate_matrix_flow(sampler, s_final: float, ds: float,
                          rng: np.random.Generator,
                          times=None, residual_bound: float = 0.1) -> MatrixFlowPath:
    """Integrate one path of dA = dZ A from A(0) = 1, recording ``times``.

    ``sampler`` is a callable (ds, rng, size) -> (size, 2N, 2N) increments;
    use mea_sampler / aniso_sampler.  Defaults to recording only s_final.
    """
    times, stack, scales, residuals = _flow_batch(
        sampler, 1, s_final, ds, rng, residual_bound,
        None if times is None else np.asarray(times, dtype=float),
    )
    return MatrixFlowPath(times=times, matrices=stack[:, 0], log_scales=scales[:, 0],
                          residuals=residuals)


# ---------------------------------------------------------------------------
# DMPK eigenvalue process

@dataclass(frozen=True)
class DMPKState:
    """Transmission eigenvalues at one flow time, strictly decreasing in (0, 1]."""

    s: float
    transmission: np.ndarray
    beta: int = 1

    def __post_init__(self):
        t = np.asarray(self.transmission, dtype=float)
        if np.any(t <= 0) or np.any(t > 1):
            raise ConfigError("transmission eigenvalues must lie in (0, 1]")
        if np.any(np.diff(t) >= 0):
            raise ConfigError("transmission eigenvalues must be strictly decreasing")
        if self.beta not in (1, 2, 4):
            raise ConfigError("beta must be one of 1, 2, 4")

    @property
    def n_channels(self) -> int:
        return len(self.transmission)

    @property
    def conductance(self) -> float:
        return float(np.sum(self.transmission))


def ballistic_state(n_channels: int, beta: int = 1, eps: float = 1e-9) -> DMPKState:
    """Near-ballistic start T_k = 1 - k*eps; the exact ballistic point is a
    degenerate corner of the drift."""
    k = np.arange(1, n_channels + 1)
    return DMPKState(s=0.0, transmission=1.0 - k * eps, beta=beta)


def _coupling(beta: int, n_channels: int) -> float:
    return beta * n_channels + 2 - beta


def dmpk_drift(state: DMPKState, degeneracy_tol: float = 1e-12) -> np.ndarray:
    """Drift v_k of the eigenvalue process (raises on near-degenerate input)."""
    t = np.asarray(state.transmission, dtype=float)
    n = len(t)
    diff = t[:, None] - t[None, :]
    off = ~np.eye(n, dtype=bool)
    if n > 1 and np.abs(diff[off]).min() < degeneracy_tol:
        raise DegenerateSpectrum("transmission eigenvalues too close for the drift sum")
    gt = _coupling(state.beta, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        pair = np.where(off, (t[:, None] + t[None, :] - 2 * t[:, None] * t[None, :]) / diff, 0.0)
    repulsion = (state.beta / 2.0) * pair.sum(axis=1)
    return -t + (2 * t / gt) * (1 - t + repulsion)


def dmpk_diffusion(state: DMPKState) -> np.ndarray:
    """Squared noise amplitude D_k = 4 T_k^2 (1 - T_k) / (beta N + 2 - beta)."""
    t = np.asarray(state.transmission, dtype=float)
    gt = _coupling(state.beta, len(t))
    return 4.0 * t**2 * (1.0 - t) / gt


# -- radial coordinates ------------------------------------------------------

def _x_from_t(t: np.ndarray) -> np.ndarray:
    return np.arccosh(1.0 / np.sqrt(t))


def _t_from_x(x: np.ndarray) -> np.ndarray:
    return 1.0 / np.cosh(x) ** 2


def _x_drift(x: np.ndarray, beta: int, gt: float, convention: str) -> np.ndarray:
    """Drift of the radial process; x has shape (..., N), strictly increasing.

    For the sqrt(D) noise convention this is the exact Ito transform of
    (v, sqrt(D)), in the x-stable closed form; the alternative D-convention
    adds the correction (1/2)(D^2 - D) x''(T).
    """
    sinh2 = np.sinh(x) ** 2
    n = x.shape[-1]
    if n > 1:
        diff = sinh2[..., :, None] - sinh2[..., None, :]
        eye = np.eye(n, dtype=bool)
        inv = np.where(eye, 0.0, 1.0 / np.where(eye, 1.0, diff))
        pair = np.sinh(2 * x) * inv.sum(axis=-1)
    else:
        pair = 0.0
    drift = (2.0 / np.tanh(2 * x) + beta * pair) / (2.0 * gt)
    if convention == "diffusion":
        th = np.tanh(x)
        ch2 = np.cosh(x) ** 2
        d = 4.0 * th**2 / (ch2**2 * gt)
        xpp = 0.5 * ch2**2 / th - 0.25 * ch2 / th**3
        drift = drift + 0.5 * (d * d - d) * xpp
    return drift


def _x_noise_coeff(x: np.ndarray, gt: float, convention: str):
    if convention == "sqrt_diffusion":
        return 1.0 / math.sqrt(gt)
    th = np.tanh(x)
    ch2 = np.cosh(x) ** 2
    return 4.0 * th**2 / (ch2**2 * gt) * (np.cosh(x) ** 2 / (2.0 * th))


def _valid(x: np.ndarray) -> np.ndarray:
    """Rows with finite, positive, strictly increasing coordinates."""
    ok = np.all(np.isfinite(x), axis=-1) & np.all(x > 0, axis=-1)
    if x.shape[-1] > 1:
        ok &= np.all(np.diff(x, axis=-1) > 0, axis=-1)
    return ok


def _advance(x: np.ndarray, h: float, beta: int, gt: float, convention: str,
             rng: np.random.Generator, depth: int = 0) -> np.ndarray:
    """One Euler step of size h for all rows, recursively halving rows that
    would collide or leave the domain (fresh noise each retry)."""
    drift = _x_drift(x, beta, gt, convention)
    coeff = _x_noise_coeff(x, gt, convention)
    prop = x + drift * h + coeff * math.sqrt(h) * rng.standard_normal(x.shape)
    bad = ~_valid(prop)
    if np.any(bad):
        if depth >= _MAX_HALVINGS:
            raise StepTooLarge(
                "eigenvalue ordering could not be maintained at the configured step"
            )
        sub = x[bad]
        sub = _advance(sub, h / 2, beta, gt, convention, rng, depth + 1)
        sub = _advance(sub, h / 2, beta, gt, convention, rng, depth + 1)
        prop[bad] = sub
    return prop


def _step_plan(s_final: float, ds: float, times: np.ndarray,
               ramp_rate: float = RAMP_RATE):
    """Ramped step sequence hitting every requested time exactly."""
    marks = np.unique(times[times > 1e-15])
    s = 0.0
    k = 0
    while s < s_final - 1e-12:
        h = min(ds, max(_RAMP_FLOOR, ramp_rate * s))
        if k < len(marks):
            h = min(h, marks[k] - s)
        hit = k < len(marks) and s + h >= marks[k] - 1e-12
        yield h, (marks[k] if hit else None)
        s += h
        if hit:
            k += 1


def _dmpk_batch(initial: DMPKState, n_paths: int, s_final: float, ds: float,
                rng: np.random.Generator, convention: str,
                times: np.ndarray | None = None,
                ramp_rate: float = RAMP_RATE):
    """Batched radial integration; returns (times, T-stack (n_times, n_paths, N))."""
    if convention not in NOISE_CONVENTIONS:
        raise ConfigError(f"unknown noise convention {convention!r}")
    if ds <= 0:
        raise ConfigError("ds must be > 0")
    t0 = np.asarray(initial.transmission, dtype=float)
    n = len(t0)
    gt = _coupling(initial.beta, n)
    if times is None:
        times = np.array([s_final])
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or np.any(times > s_final + 1e-12):
        raise ConfigError("sample times must be ascending and within s_final")
    # descending T maps to ascending x, which is the integrator's ordering
    x = np.broadcast_to(_x_from_t(t0), (n_paths, n)).copy()
    out = np.empty((len(times), n_paths, n))
    for k in np.flatnonzero(times <= 1e-15):
        out[k] = t0
    for h, hit in _step_plan(s_final, ds, times, ramp_rate):
        x = _advance(x, h, initial.beta, gt, convention, rng)
        if hit is not None:
            for k in np.flatnonzero(np.abs(times - hit) <= 1e-12):
                out[k] = _t_from_x(x)
    return times, out


@dataclass(frozen=True)
class DMPKPath:
    times: np.ndarray
    transmission: np.ndarray     # (len(times), N), descending per row
    beta: int

    def state(self, k: int) -> DMPKState:
        return DMPKState(s=float(self.times[k]), transmission=self.transmission[k],
                         beta=self.beta)

    @property
    def conductance(self) -> np.ndarray:
        return self.transmission.sum(axis=1)


def integrate_dmpk(initial: DMPKState, s_final: float, ds: float,
                   rng: np.random.Generator, times=None,
                   noise_convention: str = "sqrt_diffusion",
                   ramp_rate: float = RAMP_RATE) -> DMPKPath:
    """Integrate one path of the transmission-eigenvalue process.

    Euler-Maruyama in the radial coordinates with an adaptive ramp out of the
    near-ballistic corner; steps that would cross eigenvalues are rejected and
    halved.  Output eigenvalues stay ordered in (0, 1].
    """
    times_arr = None if times is None else np.asarray(times, dtype=float)
    times_out, stack = _dmpk_batch(initial, 1, s_final, ds, rng,
                                   noise_convention, times_arr, ramp_rate)
    return DMPKPath(times=times_out, transmission=stack[:, 0], beta=initial.beta)
