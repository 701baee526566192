"""Matrix-valued Brownian flows and the autonomous eigenvalue process.

The isotropic flow dA = dZ A moves through the transfer-matrix group; its
transmission eigenvalues close on themselves and obey the DMPK process

    dT_k = v_k ds + sqrt(D_k) dB_k,

which this package integrates in the radial coordinates T = sech^2(x).  Here
we check the autonomy numerically at small N: eigenvalue statistics extracted
from the matrix flow match the eigenvalue integrator.
"""

import numpy as np

from dmpkwire import (
    ballistic_state,
    dmpk_diffusion,
    dmpk_drift,
    integrate_dmpk,
    integrate_matrix_flow,
    mea_sampler,
    run_sde_ensemble,
    transmission_spectrum,
)
from dmpkwire.wire import TransferMatrix

rng = np.random.default_rng(1)

# one matrix-flow path, watching the group residual
path = integrate_matrix_flow(mea_sampler(3), s_final=1.0, ds=5e-4, rng=rng,
                             times=[0.25, 0.5, 1.0])
for t, m, c in zip(path.times, path.matrices, path.log_scales):
    sp = transmission_spectrum(TransferMatrix(m, "wave", c), residual_tol=0.5,
                               clamp_tol=0.5)
    print(f"s={t:4.2f}  T = {np.round(sp.values, 4)}  g = {sp.conductance:.4f}")
print(f"final group residual: {path.residuals.max():.2e} (Euler drift off the manifold)")

# one eigenvalue path from the near-ballistic corner
dm = integrate_dmpk(ballistic_state(3), 1.0, 1e-3, np.random.default_rng(2),
                    times=[0.25, 0.5, 1.0])
print("\neigenvalue process:", *(f"s={t:4.2f} g={g:.4f}"
                                 for t, g in zip(dm.times, dm.conductance)))

state = dm.state(-1)
print("drift v_k     :", np.round(dmpk_drift(state), 4))
print("diffusion D_k :", np.round(dmpk_diffusion(state), 4))

# autonomy: ensembles from both engines agree
n, s = 4, 1.0
mea = run_sde_ensemble("mea", dict(n_channels=n, s_final=s), 1500, 5e-4, 31)
dmpk = run_sde_ensemble("dmpk", dict(n_channels=n, beta=1, s_final=s), 3000,
                        2e-3, 32)
print(f"\nautonomy at N={n}, s={s}:")
print(f"  matrix flow : E(g) = {float(mea.mean('g')):.4f} "
      f"+- {float(mea.stderr('g')):.4f}")
print(f"  eigenvalues : E(g) = {float(dmpk.mean('g')):.4f} "
      f"+- {float(dmpk.stderr('g')):.4f}")
