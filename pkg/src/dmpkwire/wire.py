"""Microscopic Anderson strip: channel basis, slice transfer matrices and the
interaction-picture product.

Conventions
-----------
The wire lives on ``Z x {1..N}`` with longitudinal lattice Laplacian
(hopping 1) and a transverse ring Hamiltonian carrying a flux phase.  A slice
transfer matrix in channel coordinates is

    T_x = [[E_par - lam*Vt_x, -1], [1, 0]],      Vt_x = O* diag(v_x) O,

and the wave-basis matrix is ``M_x = Uinv T_x U`` with ``U`` the (non-unitary)
plane-wave transform built from the channel momenta.  At zero disorder
``M_x = M0 = diag(e^{i theta}, e^{-i theta})``.  The interaction product strips
the ballistic phases:

    A(x+1) = (1 + lam*Z_{x+1}) A(x),
    lam*Z_{x+1} = e^{-i(x+1)G} Uinv T_{x+1} U e^{ixG} - 1,

so that ``A(L) = M0^{-L} M(L)`` holds exactly.  Equivalently
``Z_{x+1} = e^{-ixG} R_{x+1} e^{ixG}`` with the i.i.d. slice variable
``lam*R_x = -lam * e^{-iG} Uinv [[Vt_x, 0],[0, 0]] U``.  Note the phase index:
the conjugation uses ``x``, one step behind the slice label, which is what the
product telescoping requires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AssumptionViolation,
    ConfigError,
    EllipticViolation,
    NumericalError,
    SingularBasis,
)

POTENTIAL_TAGS = ("gaussian", "rademacher", "uniform")

#: |A| threshold beyond which the interaction product is renormalised onto the
#: running log scale.
RENORM_THRESHOLD = 1e8


@dataclass(frozen=True)
class WireConfig:
    """Full physical parameter set of one disordered wire.

    Exactly one of ``length`` (number of disordered slices L) and
    ``scaled_length`` (diffusive length s, with L = floor(s / disorder^2))
    must be given.
    """

    energy: float
    disorder: float
    n_channels: int
    flux: float
    transverse_hopping: float
    length: int | None = None
    scaled_length: float | None = None
    potential: str = "gaussian"
    beta: int = 1

    def __post_init__(self):
        if self.n_channels < 1:
            raise ConfigError("n_channels must be >= 1")
        if self.disorder < 0:
            raise ConfigError("disorder strength must be >= 0")
        if self.transverse_hopping <= 0:
            raise ConfigError("transverse_hopping must be > 0")
        if not 0 < self.flux < 2 * math.pi / self.n_channels:
            raise ConfigError(
                "flux must lie strictly between 0 and 2*pi/n_channels "
                f"(got {self.flux!r} at N={self.n_channels})"
            )
        if self.potential not in POTENTIAL_TAGS:
            raise ConfigError(f"unknown potential tag {self.potential!r}")
        if self.beta not in (1, 2, 4):
            raise ConfigError("beta must be one of 1, 2, 4")
        if (self.length is None) == (self.scaled_length is None):
            raise ConfigError("give exactly one of length and scaled_length")
        if self.length is not None and self.length < 1:
            raise ConfigError("length must be a positive integer")
        if self.scaled_length is not None:
            if self.scaled_length <= 0:
                raise ConfigError("scaled_length must be > 0")
            if self.disorder == 0:
                raise ConfigError("scaled_length requires disorder > 0")

    @property
    def resolved_length(self) -> int:
        """Number of disordered slices, L = floor(s / lambda^2) in the s-form."""
        if self.length is not None:
            return self.length
        return int(math.floor(self.scaled_length / self.disorder**2))


@dataclass(frozen=True)
class ChannelBasis:
    """Diagonalised transverse problem at a fixed injection energy."""

    vectors: np.ndarray      # N x N unitary, columns are the channel modes
    e_perp: np.ndarray       # transverse energies, ascending
    e_par: np.ndarray        # longitudinal energies E - E_perp
    theta: np.ndarray        # momenta in (0, pi), 2 cos(theta) = e_par
    rho: np.ndarray          # velocities 2 sin(theta) > 0
    energy: float

    @property
    def n_channels(self) -> int:
        return len(self.theta)

    @property
    def free_phases(self) -> np.ndarray:
        """Diagonal of G: (theta_1..theta_N, -theta_1..-theta_N)."""
        return np.concatenate([self.theta, -self.theta])


@dataclass(frozen=True)
class DisorderSlice:
    """Site potentials of one slice (unit-variance i.i.d. draws)."""

    potentials: np.ndarray
    index: int = 1


@dataclass(frozen=True)
class TransferMatrix:
    """2N x 2N transfer matrix with its basis tag and running log scale.

    The represented matrix is ``exp(log_scale) * matrix``; the scale is only
    nonzero for long products that would otherwise overflow.
    """

    matrix: np.ndarray
    basis: str                      # "position" or "wave"
    log_scale: float = 0.0

    @property
    def n_channels(self) -> int:
        return self.matrix.shape[0] // 2


@dataclass(frozen=True)
class SpacingViolation:
    """One quadruple failing the no-degenerate-spacings scan."""

    channels: tuple
    signs: tuple
    magnitude: float


def build_transverse_hamiltonian(n_channels: int, flux: float, hopping: float) -> np.ndarray:
    """Ring of N sites with hopping ``h e^{+i flux}`` in the +z direction.

    Kernel H(z, z') = h (e^{i flux} d_{z, z'-1} + e^{-i flux} d_{z, z'+1}),
    indices mod N.  For N <= 2 the two winding directions coincide and the
    bond amplitude doubles.
    """
    if n_channels < 1:
        raise ConfigError("n_channels must be >= 1")
    step = np.roll(np.eye(n_channels), 1, axis=1)  # step[z, z'] = d_{z, z'-1}
    h = hopping * (np.exp(1j * flux) * step + np.exp(-1j * flux) * step.conj().T)
    return h


def diagonalize_channels(h_perp: np.ndarray, energy: float) -> ChannelBasis:
    """Diagonalise the transverse Hamiltonian and solve the dispersion relation.

    Channels are ordered by ascending transverse energy; each eigenvector is
    phase-fixed so its first nonzero component is real positive.

    Raises EllipticViolation if any longitudinal energy falls outside the open
    band (-2, 2).
    """
    h_perp = np.asarray(h_perp)
    if not np.allclose(h_perp, h_perp.conj().T, atol=1e-12):
        raise ConfigError("transverse Hamiltonian must be Hermitian")
    e_perp, vectors = np.linalg.eigh(h_perp)
    vectors = vectors.astype(complex, copy=True)
    for mu in range(vectors.shape[1]):
        col = vectors[:, mu]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if len(nz):
            col *= np.conj(col[nz[0]]) / abs(col[nz[0]])
    e_par = energy - e_perp
    bad = np.abs(e_par) >= 2.0
    if np.any(bad):
        raise EllipticViolation(
            f"channels {np.flatnonzero(bad).tolist()} have longitudinal energy "
            f"{e_par[bad].tolist()} outside the open band (-2, 2)"
        )
    theta = np.arccos(e_par / 2.0)
    rho = 2.0 * np.sin(theta)
    return ChannelBasis(vectors=vectors, e_perp=e_perp, e_par=e_par,
                        theta=theta, rho=rho, energy=float(energy))


def channel_basis(config: WireConfig) -> ChannelBasis:
    """Channel basis of the configured magnetic-ring wire."""
    h = build_transverse_hamiltonian(config.n_channels, config.flux,
                                     config.transverse_hopping)
    return diagonalize_channels(h, config.energy)


def check_no_degenerate_spacings(basis: ChannelBasis, tol: float = 1e-9) -> list[SpacingViolation]:
    """Scan momentum quadruples for forbidden cancellations.

    Every multiset of four signed momenta q_i * theta_{mu_i} is tested for
    ``sum q_i theta_{mu_i} = 0 (mod 2*pi)``.  Cancellations are allowed only
    when the four (mu, q) pairs split into two pairs with equal channel and
    opposite sign, which cancel identically.  The sum is reduced mod 2*pi
    because the ballistic phases e^{i x phi} are blind to full turns; this is
    what rules out, for example, a symmetric spectrum around the band centre.

    Violations are returned as data (deduplicated up to permutation and a
    global sign flip), not raised.
    """
    theta = basis.theta
    n = len(theta)
    # Multisets of four (channel, sign) symbols; a global sign flip is redundant.
    pairs = [(mu, q) for mu in range(n) for q in (1, -1)]
    seen = set()
    out = []
    from itertools import combinations_with_replacement

    for quad in combinations_with_replacement(range(len(pairs)), 4):
        key = quad
        if key in seen:
            continue
        seen.add(key)
        chans = tuple(pairs[k][0] for k in quad)
        signs = tuple(pairs[k][1] for k in quad)
        total = sum(q * theta[mu] for mu, q in zip(chans, signs))
        wrapped = (total + math.pi) % (2 * math.pi) - math.pi
        if abs(wrapped) >= tol:
            continue
        # Allowed iff the per-channel signed counts all vanish.
        net = np.zeros(n, dtype=int)
        for mu, q in zip(chans, signs):
            net[mu] += q
        if np.any(net):
            out.append(SpacingViolation(channels=chans, signs=signs,
                                        magnitude=abs(wrapped)))
    return out


def assert_assumptions(basis: ChannelBasis, tol: float = 1e-9) -> None:
    """Raise AssumptionViolation if the degenerate-spacings scan reports hits."""
    violations = check_no_degenerate_spacings(basis, tol)
    if violations:
        head = ", ".join(
            f"mu={v.channels} q={v.signs} |sum|={v.magnitude:.2e}"
            for v in violations[:5]
        )
        raise AssumptionViolation(
            f"{len(violations)} degenerate momentum quadruple(s), e.g. {head}",
            violations,
        )


def channel_potential(basis: ChannelBasis, potentials: np.ndarray) -> np.ndarray:
    """Disorder matrix in channel coordinates, Vt = O* diag(v) O."""
    o = basis.vectors
    v = np.asarray(potentials, dtype=float)
    return (o.conj().T * v) @ o


def slice_transfer_position(basis: ChannelBasis, slice_: DisorderSlice,
                            disorder: float) -> TransferMatrix:
    """One-slice transfer matrix in channel coordinates (position data).

    Block form [[E_par - lam*Vt, -1], [1, 0]]; propagates eigenfunction data
    (Psi_{x+1}, Psi_x) across the slice.
    """
    n = basis.n_channels
    v = np.asarray(slice_.potentials, dtype=float)
    if v.shape != (n,):
        raise ConfigError(f"expected {n} site potentials, got shape {v.shape}")
    upper = np.diag(basis.e_par.astype(complex))
    if disorder != 0.0:
        upper = upper - disorder * channel_potential(basis, v)
    t = np.zeros((2 * n, 2 * n), dtype=complex)
    t[:n, :n] = upper
    t[:n, n:] = -np.eye(n)
    t[n:, :n] = np.eye(n)
    return TransferMatrix(matrix=t, basis="position")


def upsilon(basis: ChannelBasis, rho_tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Wave transform U and its exact inverse.

    Blocks (all diagonal, P = (i rho)^{-1/2} on the principal branch, so each
    entry has argument -pi/4):

        U    = [[P, P], [P e^{-i theta}, P e^{+i theta}]]
        Uinv = [[P e^{+i theta}, -P], [-P e^{-i theta}, P]]

    The per-channel determinant is exactly 1, so the closed-form inverse is
    exact.  Raises SingularBasis for grazing channels (rho below rho_tol).
    """
    rho = basis.rho
    if np.any(rho < rho_tol):
        raise SingularBasis(
            f"grazing channel: min velocity {rho.min():.3e} < {rho_tol:.1e}"
        )
    n = basis.n_channels
    p = 1.0 / np.sqrt(1j * rho)
    ephase = np.exp(1j * basis.theta)
    u = np.zeros((2 * n, 2 * n), dtype=complex)
    u[:n, :n] = np.diag(p)
    u[:n, n:] = np.diag(p)
    u[n:, :n] = np.diag(p / ephase)
    u[n:, n:] = np.diag(p * ephase)
    uinv = np.zeros((2 * n, 2 * n), dtype=complex)
    uinv[:n, :n] = np.diag(p * ephase)
    uinv[:n, n:] = np.diag(-p)
    uinv[n:, :n] = np.diag(-p / ephase)
    uinv[n:, n:] = np.diag(p)
    return u, uinv


def slice_transfer_wave(basis: ChannelBasis, slice_: DisorderSlice,
                        disorder: float, rho_tol: float = 1e-6) -> TransferMatrix:
    """One-slice transfer matrix in the wave (mover) basis, M = Uinv T U."""
    u, uinv = upsilon(basis, rho_tol)
    t = slice_transfer_position(basis, slice_, disorder)
    return TransferMatrix(matrix=uinv @ t.matrix @ u, basis="wave")


def _slice_noise(basis: ChannelBasis, potentials: np.ndarray) -> np.ndarray:
    """R_x for unit disorder strength: R = -[[W, W], [-W, -W]], W = P Vt P.

    ``potentials`` may be a batch (n, N); the result then has shape
    (n, 2N, 2N).
    """
    n = basis.n_channels
    p = 1.0 / np.sqrt(1j * basis.rho)
    v = np.asarray(potentials, dtype=float)
    squeeze = v.ndim == 1
    v = np.atleast_2d(v)
    vt = (basis.vectors.conj().T[None, :, :] * v[:, None, :]) @ basis.vectors
    w = p[None, :, None] * vt * p[None, None, :]
    r = np.empty(v.shape[:1] + (2 * n, 2 * n), dtype=complex)
    r[:, :n, :n] = -w
    r[:, :n, n:] = -w
    r[:, n:, :n] = w
    r[:, n:, n:] = w
    return r[0] if squeeze else r


def interaction_step(a: np.ndarray, basis: ChannelBasis, slice_: DisorderSlice,
                     disorder: float, x: int) -> np.ndarray:
    """One update of the interaction product, A -> (1 + lam Z_{x+1}) A.

    ``x`` is the number of slices already absorbed into ``a``; the new slice
    is x+1 and its oscillation phase uses x.  At zero disorder the input is
    returned unchanged (bitwise), since Z vanishes identically.
    """
    if disorder == 0.0:
        return a
    g = basis.free_phases
    r = _slice_noise(basis, slice_.potentials)
    phase = np.exp(-1j * x * (g[:, None] - g[None, :]))
    z = disorder * phase * r
    return a + z @ a


def _draw_potentials(rng: np.random.Generator, tag: str, shape) -> np.ndarray:
    """Unit-variance i.i.d. site potentials, one RNG call per realization."""
    if tag == "gaussian":
        return rng.standard_normal(shape)
    if tag == "rademacher":
        return rng.integers(0, 2, shape).astype(float) * 2.0 - 1.0
    if tag == "uniform":
        half = math.sqrt(3.0)
        return rng.uniform(-half, half, shape)
    raise ConfigError(f"unknown potential tag {tag!r}")


def realization_rng(master_seed: int, index: int) -> np.random.Generator:
    """Generator for one disorder realization, a pure function of (seed, index)."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    )


def _interaction_products(basis: ChannelBasis, disorder: float, length: int,
                          potential: str, rngs: list[np.random.Generator],
                          collect_sum: bool = False):
    """Batched interaction products A(L) for a list of realizations.

    Returns (a, log_scale) with a of shape (n, 2N, 2N), or
    (a, log_scale, z_sum) when ``collect_sum`` also accumulates
    lam * sum_x Z_x (used by the covariance-structure report).

    The disorder field of every realization is drawn in one generator call of
    shape (length, N), so sample i is reproducible independently of batching.
    """
    n = len(rngs)
    nc = basis.n_channels
    dim = 2 * nc
    a = np.broadcast_to(np.eye(dim, dtype=complex), (n, dim, dim)).copy()
    log_scale = np.zeros(n)
    z_sum = np.zeros((n, dim, dim), dtype=complex) if collect_sum else None
    if disorder == 0.0 or length == 0:
        return (a, log_scale, z_sum) if collect_sum else (a, log_scale)

    field = np.empty((n, length, nc))
    for i, rng in enumerate(rngs):
        field[i] = _draw_potentials(rng, potential, (length, nc))

    g = basis.free_phases
    dg = g[:, None] - g[None, :]
    for x in range(length):
        r = _slice_noise(basis, field[:, x, :])
        z = disorder * np.exp(-1j * x * dg) * r
        if collect_sum:
            z_sum += z
        a += z @ a
        if (x + 1) % 32 == 0 or x == length - 1:
            peak = np.abs(a).max(axis=(1, 2))
            big = peak > RENORM_THRESHOLD
            if np.any(big):
                a[big] /= peak[big, None, None]
                log_scale[big] += np.log(peak[big])
    return (a, log_scale, z_sum) if collect_sum else (a, log_scale)


@dataclass(frozen=True)
class MicroWire:
    """Result of propagating one disordered wire."""

    interaction: np.ndarray        # A(L), unit-scale part
    log_scale: float               # A(L) = exp(log_scale) * interaction
    transfer: TransferMatrix       # full wave-basis M = M0^L A
    basis: ChannelBasis
    residual_current: float
    residual_time_reversal: float


def run_microscopic(config: WireConfig, seed: int,
                    assumption_tol: float = 1e-9) -> MicroWire:
    """Propagate one wire: interaction product and full wave-basis transfer matrix.

    Deterministic given (config, seed).  Raises EllipticViolation or
    AssumptionViolation if the configured basis fails the model assumptions,
    and NumericalError if the product loses current conservation (relative
    residual above 1e-8, which exact algebra forbids short of overflow).

    Note the time-reversal residual is reported but not enforced: for the
    flux-carrying ring at N >= 3 the channel-frame disorder matrix is complex
    and the single-slice time-reversal relation fails at order lambda.
    """
    if config.beta != 1:
        raise ConfigError("the microscopic strip model is orthogonal-class (beta=1)")
    basis = channel_basis(config)
    assert_assumptions(basis, assumption_tol)
    length = config.resolved_length
    a, log_scale = _interaction_products(
        basis, config.disorder, length, config.potential,
        [realization_rng(seed, 0)],
    )
    a, log_scale = a[0], float(log_scale[0])
    phase = np.exp(1j * length * basis.free_phases)
    m = TransferMatrix(matrix=phase[:, None] * a, basis="wave", log_scale=log_scale)

    from .transport import group_residuals  # late import avoids a cycle

    res = group_residuals(m)
    if not np.isfinite(res.current) or res.current > 1e-8:
        raise NumericalError(
            f"current-conservation residual {res.current:.3e} after {length} slices"
        )
    return MicroWire(interaction=a, log_scale=log_scale, transfer=m, basis=basis,
                     residual_current=res.current,
                     residual_time_reversal=res.time_reversal)
