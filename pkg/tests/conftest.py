import math

import numpy as np
import pytest

from dmpkwire import WireConfig, diagonalize_channels


@pytest.fixture
def ring_config():
    """Elliptic, assumption-clean 4-channel wire used across tests."""
    return WireConfig(energy=1.0, disorder=0.1, n_channels=4,
                      flux=0.7 * 2 * math.pi / 4, transverse_hopping=0.3,
                      length=100)


def real_chain_basis(n, energy=0.6, hopping=0.35):
    """Channel basis of an open chain with site-dependent terms: real frame,
    nondegenerate, generically assumption-clean."""
    h = np.zeros((n, n))
    for z in range(n - 1):
        h[z, z + 1] = h[z + 1, z] = hopping * (1.0 + 0.13 * z)
    h += np.diag(0.07 * np.arange(n))
    return diagonalize_channels(h, energy)


def basis_with_theta(theta):
    """Synthetic single-frame basis with prescribed momenta (identity vectors)."""
    theta = np.asarray(theta, dtype=float)
    e_par = 2.0 * np.cos(theta)
    h = np.diag(-e_par)  # E=0 puts e_par where we want it
    return diagonalize_channels(h, 0.0)
