"""Shared fixtures for expensive end-to-end computations.

The two-atom recovery run is the costliest pipeline in the suite (simulate,
estimate, eigendecompose, recover at p=2000); it backs both a round-trip unit
test and an acceptance criterion, so it runs once per session.
"""

import dataclasses
import time

import numpy as np
import pytest

from specrcv.covmodel import esd
from specrcv.diffusion import ClassCSpec, ConstantProfile, make_grid, simulate_increments
from specrcv.estimators import tvarcv
from specrcv.mpsolve import RecoveryResult, recover_spectrum


@dataclasses.dataclass(frozen=True)
class TwoAtomRun:
    result: RecoveryResult
    elapsed_s: float


@pytest.fixture(scope="session")
def two_atom_recovery() -> TwoAtomRun:
    """Recover a half-and-half {0.4, 1.6} population spectrum at p=2000.

    Simulates a constant-volatility process whose ICV has two equal eigenvalue
    blocks, takes the TVARCV ESD (normalized to unit mean), and inverts it on
    a candidate grid fine enough that neighbors of each true location stay
    inside the +-10% windows.
    """
    t0 = time.time()
    p, n = 2000, 4000
    lam = np.diag(
        np.concatenate([np.full(p // 2, np.sqrt(0.4)), np.full(p // 2, np.sqrt(1.6))])
    )
    spec = ClassCSpec(p=p, profile=ConstantProfile(0.02), lam=lam, seed=7)
    incr = simulate_increments(spec, make_grid("equispaced", n))
    out = tvarcv(incr)
    dist = esd(out.matrix.entries / out.trace_over_p)
    lo, hi = dist.support()
    width = hi - lo
    zs = np.linspace(lo - 0.1 * width, hi + 0.1 * width, 40) + 1j * 0.05 * width
    scale = float(np.mean(dist.eigenvalues))
    result = recover_spectrum(dist, p / n, np.linspace(0.04, 2.96, 74) * scale, zs=zs)
    return TwoAtomRun(result=result, elapsed_s=time.time() - t0)
