"""Realized covariance estimators and trace diagnostics.

RCV sums increment outer products. The time-variation adjusted variant
(TVARCV) self-normalizes each outer product by its squared length and
rescales by the realized trace, which removes the distortion a time-varying
volatility profile induces on the spectrum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covmodel import CovMatrix
from .diffusion import IncrementMatrix
from .errors import ZeroIncrementError, ZeroTraceError

# Row-block size for outer-product accumulation. Fixed so the reduction order
# (and hence the bit pattern of the result) never depends on thread count.
BLOCK_ROWS = 512


@dataclass(frozen=True, eq=False)
class EstimatorOutput:
    """An estimator result: the matrix plus bookkeeping for manifests."""

    matrix: CovMatrix
    kind: str
    n: int
    trace_over_p: float
    spec_digest: str = ""

    @property
    def p(self) -> int:
        return self.matrix.dim


def _accumulate_outer(x: np.ndarray) -> np.ndarray:
    """Sum of row outer products x_l x_l^T, block-compensated.

    Blocks are summed with Kahan compensation so the accumulated roundoff
    stays at the single-block level even when n*p is large; required for the
    1e-12 relative trace identities.
    """
    n, p = x.shape
    total = np.zeros((p, p))
    comp = np.zeros((p, p))
    for start in range(0, n, BLOCK_ROWS):
        xb = x[start : start + BLOCK_ROWS]
        part = xb.T @ xb
        y = part - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def rcv(incr: IncrementMatrix) -> EstimatorOutput:
    """Realized covariance: sum of increment outer products."""
    x = incr.increments
    s = _accumulate_outer(x)
    mat = CovMatrix(s)
    return EstimatorOutput(
        matrix=mat,
        kind="rcv",
        n=incr.n,
        trace_over_p=mat.trace() / incr.p,
        spec_digest=incr.spec_digest,
    )


def _unit_rows(incr: IncrementMatrix, drop_zero_rows: bool) -> tuple[np.ndarray, int]:
    x = incr.increments
    norms_sq = np.einsum("ij,ij->i", x, x)
    zero = norms_sq == 0.0
    if np.any(zero):
        if not drop_zero_rows:
            raise ZeroIncrementError(int(np.flatnonzero(zero)[0]))
        x = x[~zero]
        norms_sq = norms_sq[~zero]
        if x.shape[0] == 0:
            raise ZeroIncrementError(0, "all increment rows have zero length")
    return x / np.sqrt(norms_sq)[:, None], x.shape[0]


def sigma_tilde(incr: IncrementMatrix, drop_zero_rows: bool = False) -> EstimatorOutput:
    """Self-normalized realized covariance (p/n) * sum of dX dX^T / |dX|^2.

    Its trace equals p identically. Rows with |dX| = 0 raise ZeroIncrementError
    unless ``drop_zero_rows`` is set, in which case the surviving row count
    replaces n in the p/n factor.
    """
    y, n_eff = _unit_rows(incr, drop_zero_rows)
    p = incr.p
    s = (p / n_eff) * _accumulate_outer(y)
    mat = CovMatrix(s)
    return EstimatorOutput(
        matrix=mat,
        kind="sigma_tilde",
        n=n_eff,
        trace_over_p=mat.trace() / p,
        spec_digest=incr.spec_digest,
    )


def tvarcv(incr: IncrementMatrix, drop_zero_rows: bool = False) -> EstimatorOutput:
    """Time-variation adjusted RCV: (tr(RCV)/p) times the self-normalized matrix.

    Shares the trace of RCV up to roundoff while its spectral shape follows
    the self-normalized matrix, so the estimate is insensitive to how the
    variance is distributed over the day.
    """
    base = rcv(incr)
    tilde = sigma_tilde(incr, drop_zero_rows=drop_zero_rows)
    mat = CovMatrix(base.trace_over_p * tilde.matrix.entries)
    return EstimatorOutput(
        matrix=mat,
        kind="tvarcv",
        n=tilde.n,
        trace_over_p=mat.trace() / incr.p,
        spec_digest=incr.spec_digest,
    )


def normalized_icv(icv: CovMatrix) -> CovMatrix:
    """Rescale a covariance matrix to trace p."""
    tr = icv.trace()
    if not tr > 0.0:
        raise ZeroTraceError(f"cannot normalize matrix with trace {tr}")
    return CovMatrix((icv.dim / tr) * icv.entries)


@dataclass(frozen=True)
class TraceDiagnostic:
    """Realized trace per coordinate versus a target integrated variance."""

    ratio: float
    theta: float
    relative_deviation: float
    tolerance: float
    passed: bool


def trace_diagnostic(
    incr: IncrementMatrix, theta: float, tolerance: float = 0.05
) -> TraceDiagnostic:
    """Compare tr(RCV)/p against a target theta at the given relative tolerance."""
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    ratio = float(np.einsum("ij,ij->", incr.increments, incr.increments)) / incr.p
    rel = abs(ratio - theta) / theta
    return TraceDiagnostic(
        ratio=ratio,
        theta=theta,
        relative_deviation=rel,
        tolerance=tolerance,
        passed=rel <= tolerance,
    )
