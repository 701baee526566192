"""Physics extracted from transfer matrices: group residuals, transmission
eigenvalues, Cartan factors, scattering matrix and Landauer conductance.

The group of interest is

    G = { M : M* Sz M = Sz  and  Sx M Sx = conj(M) },

with Sz = diag(1, -1) and Sx = offdiag(1, 1) in N x N blocks.  The first
relation (current conservation) holds exactly, up to rounding, for every
wave-basis slice product of the microscopic model; the second (time reversal)
holds exactly only when the channel frame is real.  Extractions that depend
only on current conservation therefore gate on that residual alone by
default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlockSingular, DegenerateSpectrum, NotInGroup, NumericalError
from .wire import TransferMatrix

#: Default gate on the current-conservation residual for extractions.
RESIDUAL_TOL = 1e-6

#: T_k may exceed 1 by at most this much before clamping is refused.
CLAMP_TOL = 1e-7

#: T_k within this distance of 1 are snapped to exactly 1 (pure rounding).
SNAP_TOL = 1e-12


def sigma_z(n_channels: int) -> np.ndarray:
    return np.diag(np.concatenate([np.ones(n_channels), -np.ones(n_channels)]))


def sigma_x(n_channels: int) -> np.ndarray:
    z = np.zeros((n_channels, n_channels))
    e = np.eye(n_channels)
    return np.block([[z, e], [e, z]])


def _as_matrix(m) -> np.ndarray:
    return m.matrix if isinstance(m, TransferMatrix) else np.asarray(m)


@dataclass(frozen=True)
class GroupResiduals:
    current: float
    time_reversal: float


def group_residuals(m) -> GroupResiduals:
    """Relative Frobenius residuals of the two defining relations of G.

    current       = ||M* Sz M - Sz|| / ||Sz||
    time_reversal = ||Sx M Sx - conj(M)|| / ||M||

    A TransferMatrix with a running log scale is tested as the effective
    matrix exp(log_scale) * matrix; beyond ||M||^2 ~ 1e300 the current
    relation cannot be resolved against Sz in double precision and a
    NumericalError is raised (at that depth the singular-value pairing,
    which the transmission extraction uses, is the verifiable remnant).
    """
    mat = _as_matrix(m)
    log_scale = m.log_scale if isinstance(m, TransferMatrix) else 0.0
    if 2.0 * log_scale + 2.0 * np.log(max(np.abs(mat).max(), 1e-300)) > 690.0:
        raise NumericalError(
            "matrix norm exceeds the double-precision range of the "
            "current-conservation test")
    if log_scale != 0.0:
        mat = mat * np.exp(log_scale)
    n = mat.shape[0] // 2
    sz = sigma_z(n)
    norm_m = np.linalg.norm(mat)
    r_cur = np.linalg.norm(mat.conj().T @ sz @ mat - sz) / np.linalg.norm(sz)
    swapped = np.empty_like(mat)
    swapped[:n, :n] = mat[n:, n:]
    swapped[:n, n:] = mat[n:, :n]
    swapped[n:, :n] = mat[:n, n:]
    swapped[n:, n:] = mat[:n, :n]
    r_trs = np.linalg.norm(swapped - mat.conj()) / norm_m
    return GroupResiduals(current=float(r_cur), time_reversal=float(r_trs))


@dataclass(frozen=True)
class TransmissionSpectrum:
    """Transmission eigenvalues (descending) and the Landauer conductance."""

    values: np.ndarray        # T_k in [0, 1], descending
    log_values: np.ndarray    # ln T_k, exact also deep in the localized regime
    conductance: float        # g = sum T_k
    log_conductance: float    # ln g via logsumexp of log_values


def _gate_residuals(m, residual_tol: float, require_time_reversal: bool) -> GroupResiduals:
    res = group_residuals(m)
    if res.current > residual_tol:
        raise NotInGroup(
            f"current-conservation residual {res.current:.3e} exceeds {residual_tol:.1e}; "
            "transmission eigenvalues would be meaningless"
        )
    if require_time_reversal and res.time_reversal > residual_tol:
        raise NotInGroup(
            f"time-reversal residual {res.time_reversal:.3e} exceeds {residual_tol:.1e}"
        )
    return res


def _clamp(values: np.ndarray, clamp_tol: float) -> np.ndarray:
    worst = values.max(initial=0.0)
    if worst > 1.0 + clamp_tol:
        raise NotInGroup(
            f"transmission eigenvalue {worst!r} exceeds 1 by more than {clamp_tol:.1e}; "
            "refusing to clamp a structural violation"
        )
    out = np.minimum(values, 1.0)
    out[np.abs(out - 1.0) <= SNAP_TOL] = 1.0
    return out


def spectrum_from_log_singular_values(log_sv: np.ndarray,
                                      clamp_tol: float = CLAMP_TOL) -> TransmissionSpectrum:
    """T_k = 1/s_k^2 from log singular values of the alpha block, stably."""
    from scipy.special import logsumexp

    log_t = np.sort(-2.0 * np.asarray(log_sv))[::-1]
    values = _clamp(np.exp(log_t), clamp_tol)
    log_t = np.minimum(log_t, 0.0)
    return TransmissionSpectrum(
        values=values,
        log_values=log_t,
        conductance=float(values.sum()),
        log_conductance=float(logsumexp(log_t)),
    )


def transmission_spectrum(m, residual_tol: float = RESIDUAL_TOL,
                          require_time_reversal: bool = False,
                          clamp_tol: float = CLAMP_TOL) -> TransmissionSpectrum:
    """Transmission eigenvalues from the singular values of the alpha block.

    alpha = U sqrt(T^{-1}) V has singular values s_k = sqrt(1/T_k) >= 1, so
    T_k = 1/s_k^2; this avoids any block inversion and is stable near the
    ballistic point.  Values above 1 by more than ``clamp_tol`` raise
    NotInGroup instead of being clamped silently.
    """
    res = _gate_residuals(m, residual_tol, require_time_reversal)
    del res
    mat = _as_matrix(m)
    n = mat.shape[0] // 2
    sv = np.linalg.svd(mat[:n, :n], compute_uv=False)
    log_scale = m.log_scale if isinstance(m, TransferMatrix) else 0.0
    return spectrum_from_log_singular_values(np.log(sv) + log_scale, clamp_tol)


@dataclass(frozen=True)
class CartanFactors:
    """M = diag(U, conj U) N(T) diag(V, conj V) with N(T) the hyperbolic core."""

    u: np.ndarray
    v: np.ndarray
    transmission: np.ndarray   # descending, in (0, 1]
    degenerate: bool

    def reassemble(self) -> np.ndarray:
        n = len(self.transmission)
        inv_t = 1.0 / self.transmission
        core = np.zeros((2 * n, 2 * n), dtype=complex)
        core[:n, :n] = core[n:, n:] = np.diag(np.sqrt(inv_t))
        core[:n, n:] = core[n:, :n] = np.diag(np.sqrt(inv_t - 1.0))
        left = np.zeros_like(core)
        left[:n, :n] = self.u
        left[n:, n:] = self.u.conj()
        right = np.zeros_like(core)
        right[:n, :n] = self.v
        right[n:, n:] = self.v.conj()
        return left @ core @ right


def cartan_decompose(m, residual_tol: float = RESIDUAL_TOL,
                     clamp_tol: float = CLAMP_TOL,
                     degeneracy_tol: float = 1e-8) -> CartanFactors:
    """Canonicalised Cartan factors of a group element.

    Requires both group relations (the conj-block reassembly encodes time
    reversal).  The SVD phase freedom is fixed by the beta block; the leftover
    per-channel sign freedom (U -> U A, V -> A V, A diagonal +-1) is fixed by
    making the first sufficiently large entry of each row of V have positive
    real part (positive imaginary part when the real part vanishes).

    Nearly equal transmission eigenvalues leave U, V ambiguous beyond signs;
    the factors are then flagged degenerate but still reassemble.
    """
    _gate_residuals(m, residual_tol, require_time_reversal=True)
    mat = _as_matrix(m)
    n = mat.shape[0] // 2
    alpha = mat[:n, :n]
    beta = mat[:n, n:]
    u, sv, vh = np.linalg.svd(alpha)
    transmission = _clamp(1.0 / sv**2, clamp_tol)
    degenerate = bool(np.min(np.abs(np.diff(transmission)), initial=np.inf)
                      < degeneracy_tol)

    # beta = U sqrt(T^{-1}-1) conj(V) pins the SVD phases up to signs:
    # D = U* beta V^T must be positive diagonal after the phase fix.
    d = u.conj().T @ beta @ vh.T
    diag = np.diag(d).copy()
    phases = np.ones(n, dtype=complex)
    big = np.abs(diag) > 1e-9
    phases[big] = np.sqrt(diag[big] / np.abs(diag[big]))
    u = u * phases[None, :]
    vh = phases.conj()[:, None] * vh

    # Sign gauge: first usable entry of each row of V gets Re > 0.
    for k in range(n):
        row = vh[k]
        idx = np.flatnonzero(np.abs(row) > 1e-9)
        if not len(idx):
            continue
        lead = row[idx[0]]
        flip = (lead.real < 0) or (lead.real == 0 and lead.imag < 0)
        if abs(lead.real) < 1e-12 * abs(lead):
            flip = lead.imag < 0
        if flip:
            vh[k] = -row
            u[:, k] = -u[:, k]
    return CartanFactors(u=u, v=vh, transmission=transmission,
                         degenerate=degenerate)


def scattering_from_transfer(m, residual_tol: float = RESIDUAL_TOL) -> np.ndarray:
    """Scattering matrix S = [[r, t'], [t, r']] from the transfer matrix.

    With M = [[alpha, beta], [beta_c, alpha_c]] acting on (right-in, left-out)
    -> (right-out, left-in), eliminating the internal amplitudes gives

        r  = -alpha_c^{-1} beta_c        t' = alpha_c^{-1}
        t  = alpha - beta alpha_c^{-1} beta_c
        r' = beta alpha_c^{-1}.

    Unitarity of S is equivalent to current conservation of M and is
    inherited to rounding; S = S^T additionally requires time reversal.
    """
    _gate_residuals(m, residual_tol, require_time_reversal=False)
    mat = _as_matrix(m)
    if isinstance(m, TransferMatrix) and m.log_scale != 0.0:
        mat = mat * np.exp(m.log_scale)
    n = mat.shape[0] // 2
    alpha = mat[:n, :n]
    beta = mat[:n, n:]
    beta_c = mat[n:, :n]
    alpha_c = mat[n:, n:]
    try:
        x = np.linalg.solve(alpha_c, beta_c)       # alpha_c^{-1} beta_c
        t_prime = np.linalg.inv(alpha_c)
    except np.linalg.LinAlgError as exc:
        raise BlockSingular("lower-right transfer block is singular") from exc
    s = np.zeros_like(mat)
    s[:n, :n] = -x
    s[:n, n:] = t_prime
    s[n:, :n] = alpha - beta @ x
    s[n:, n:] = beta @ t_prime
    return s


def conductance(m, **kwargs) -> float:
    """Landauer conductance g = sum_k T_k."""
    return transmission_spectrum(m, **kwargs).conductance


def transmission_from_scattering(s: np.ndarray) -> np.ndarray:
    """Eigenvalues of t* t from a scattering matrix, descending (cross-check route)."""
    n = s.shape[0] // 2
    t = s[n:, :n]
    ev = np.linalg.eigvalsh(t.conj().T @ t)
    if ev.max(initial=0.0) > 1.0 + CLAMP_TOL:
        raise DegenerateSpectrum(
            f"t*t eigenvalue {ev.max():.12f} exceeds 1 beyond tolerance"
        )
    return np.sort(np.clip(ev, 0.0, 1.0))[::-1]
