"""Draw a product-kernel multi-index with probability proportional to the
magnitude of its gradient component, in O(r n^2 D) per draw.

The draw is hierarchical: first the degree d, with weight
delta(d) = alpha' S^(.)d alpha / rho_d^2, then one base-kernel index per
position. With M the running Hadamard product (alpha alpha' times the factors
chosen so far), position i uses conditional weights

    pi(j) proportional to sum_{t,s} M_ts * S^(.)(d-i)_ts * K_j,ts,

whose telescoping sum over j equals the previous position's chosen weight. The
resulting joint law over ordered tuples is exactly the normalized |gradient|
distribution, which `brute_force_q` enumerates for testing.
"""

from __future__ import annotations

import numpy as np

from .dataset import MultiIndex
from .gradient import DegreeMasses, RhoSchedule, degree_masses
from .kernels import BaseKernelSet

ENUMERATION_GUARD = 10**6

# round-off tolerance for masses that are nonnegative in exact arithmetic,
# relative to the ambient mass scale
_NEG_TOL = 1e-12


class SamplerError(RuntimeError):
    pass


def _draw_categorical(rng: np.random.Generator, weights: np.ndarray, scale: float) -> int:
    """One uniform variate against the cumulative sums of `weights`, renormalized
    by their computed total. Negative round-off down to -_NEG_TOL*scale is
    clamped to zero; anything lower signals corruption."""
    weights = np.asarray(weights, dtype=np.float64)
    floor = -_NEG_TOL * max(1.0, scale)
    if np.any(weights < floor):
        raise SamplerError(f"negative sampling mass beyond round-off: min={weights.min()}")
    weights = np.maximum(weights, 0.0)
    total = float(weights.sum())
    if total <= 0:
        raise SamplerError("all sampling masses vanished; upstream state is corrupt")
    cumulative = np.cumsum(weights)
    u = rng.random() * total
    return int(np.searchsorted(cumulative, u, side="right").clip(0, len(weights) - 1))


class SamplerWorkspace:
    """Reusable per-draw buffers over one immutable kernel set. Single-owner:
    share the kernel set across workspaces, not a workspace across callers."""

    def __init__(self, ks: BaseKernelSet, rho: RhoSchedule, rng: np.random.Generator):
        self.ks = ks
        self.rho = rho
        self.rng = rng
        self._M = np.empty((ks.n, ks.n))
        self._W = np.empty((ks.n, ks.n))

    def draw(self, alpha: np.ndarray, masses: DegreeMasses | None = None) -> MultiIndex:
        ks = self.ks
        if masses is None:
            masses = degree_masses(alpha, ks, self.rho)
        if masses.total <= 0:
            raise SamplerError("zero total gradient mass; nothing to sample")
        d = _draw_categorical(self.rng, masses.delta, masses.total)
        if d == 0:
            return ()

        M = np.outer(alpha, alpha, out=self._M)
        W = self._W
        W_flat = W.reshape(-1)
        chosen: list[int] = []
        # entering position i the denominator is the weight that won position
        # i-1 (telescoping); at i=1 it is the degree weight before rho-scaling
        denom = masses.delta[d] * self.rho.rho_sq[d]
        for i in range(1, d + 1):
            np.multiply(M, ks.powers[d - i], out=W)
            # per candidate j the entrywise sum sum_ts W_ts K_j,ts, all at once
            weights = ks.stacked_flat @ W_flat
            assert abs(weights.sum() - denom) <= 1e-9 * max(1.0, abs(denom)), (
                f"telescoping identity violated: {weights.sum()} vs {denom}"
            )
            pos = _draw_categorical(self.rng, weights, scale=max(denom, 1.0))
            chosen.append(ks.indices[pos])
            denom = float(weights[pos])
            np.multiply(M, ks.kernel(ks.indices[pos]), out=M)
        return tuple(chosen)


def sample_multi_index(
    alpha: np.ndarray,
    ks: BaseKernelSet,
    rho: RhoSchedule,
    rng: np.random.Generator,
    masses: DegreeMasses | None = None,
) -> MultiIndex:
    """One-shot draw; long-running loops should hold a SamplerWorkspace instead."""
    return SamplerWorkspace(ks, rho, rng).draw(alpha, masses)


def brute_force_q(
    alpha: np.ndarray, ks: BaseKernelSet, rho: RhoSchedule, D: int
) -> dict[MultiIndex, float]:
    """Exact normalized |gradient| over every ordered tuple of degree <= D.

    Test oracle only: enumeration is exponential in D and guarded at
    ENUMERATION_GUARD tuples.
    """
    size = sum(ks.num_kernels**d for d in range(D + 1))
    if size > ENUMERATION_GUARD:
        raise SamplerError(f"index set of size {size} exceeds enumeration guard")
    masses: dict[MultiIndex, float] = {}
    M0 = np.outer(alpha, alpha)

    def visit(prefix: MultiIndex, M: np.ndarray):
        masses[prefix] = float(M.sum()) / rho.rho_sq[len(prefix)]
        if len(prefix) < D:
            for j in ks.indices:
                visit(prefix + (j,), M * ks.kernel(j))

    visit((), M0)
    total = sum(masses.values())
    if total <= 0:
        raise SamplerError("zero total gradient mass; nothing to normalize")
    return {idx: mass / total for idx, mass in masses.items()}
