"""Channel structure of the magnetic-ring wire, and what the model assumptions
exclude.

The transverse Hamiltonian is a ring of N sites threaded by a flux phase
gamma.  Its eigenvectors are plane waves; the flux only slides the transverse
spectrum, which is exactly what removes the chiral double degeneracy of the
plain ring.  Each transverse mode ("channel") mu carries a longitudinal energy
E_par = E - E_perp(mu) and a momentum theta_mu with 2 cos(theta) = E_par.

Two assumptions gate every simulation:
  1. elliptic channels: every E_par lies strictly inside the band (-2, 2);
  2. no degenerate level spacings: no four signed momenta cancel (mod 2 pi)
     except the trivial pairings.
"""

import math

import numpy as np

from dmpkwire import (
    build_transverse_hamiltonian,
    check_no_degenerate_spacings,
    diagonalize_channels,
)

N, E, hopping = 6, 0.9, 0.3
flux = 0.7 * 2 * math.pi / N

basis = diagonalize_channels(build_transverse_hamiltonian(N, flux, hopping), E)
print(f"ring with N={N}, E={E}, gamma={flux:.4f}, h_perp={hopping}")
print(f"{'mu':>3} {'E_perp':>9} {'E_par':>9} {'theta':>8} {'rho':>8}")
for mu in range(N):
    print(f"{mu:>3} {basis.e_perp[mu]:>9.4f} {basis.e_par[mu]:>9.4f} "
          f"{basis.theta[mu]:>8.4f} {basis.rho[mu]:>8.4f}")

hits = check_no_degenerate_spacings(basis)
print(f"\ndegenerate-spacing violations: {len(hits)} (clean flux)")

# A chiral flux gamma = 2 pi k / N restores the double degeneracy:
bad = diagonalize_channels(
    build_transverse_hamiltonian(N, 2 * math.pi / N, hopping), E)
hits = check_no_degenerate_spacings(bad)
print(f"violations at gamma = 2*pi/N: {len(hits)} (chiral symmetry back)")
for v in hits[:3]:
    print("   e.g. channels", v.channels, "signs", v.signs)

# The band centre is excluded too: the spectrum is symmetric, so momenta come
# in pairs (theta, pi - theta) and four of them add up to 2 pi.
center = diagonalize_channels(
    build_transverse_hamiltonian(N, flux, hopping), 0.0)
hits = check_no_degenerate_spacings(center)
print(f"violations at E = 0: {len(hits)} (momenta pair across the centre)")

theta = center.theta
quad = hits[0]
total = sum(q * theta[mu] for mu, q in zip(quad.channels, quad.signs))
print(f"   first quadruple sums to {total:.6f} = 2*pi? {np.isclose(total % (2*math.pi), 0)}")
