"""Discrete-ordinates angular quadrature sets for 2-D x-y transport.

Directions live on the upper (xi = Omega_z > 0) hemisphere with the lower
hemisphere folded in (weights sum to 4*pi), which is the standard reduction
for z-invariant problems.  Sets are symmetric under sign reflection of
Omega_x and Omega_y and under the x<->y swap, so all odd x/y moments vanish
and the diagonal second moments integrate to (4*pi/3).

Two arrangements are supported for a requested per-quadrant count q:
triangular (q = n(n+1)/2, with n polar levels carrying n, n-1, ..., 1
azimuthal points) and square product (q = s*s).  Polar cosines are
Gauss-Legendre nodes on (0, 1); the single-level case uses xi = 1/sqrt(3),
which makes the 4-point set Omega = (+-1/sqrt(3), +-1/sqrt(3), 1/sqrt(3))
with weight pi per direction.

Azimuthal points per level sit at pi/4 +- delta_j with equal weights; such
symmetric pairs keep every second moment exact regardless of the deltas.
For sets with at least two azimuthal points per level the delta scale is
solved (by bisection) so that the half-range current identity
sum_{mu>0} w mu = pi holds to machine precision, making the isotropic
boundary factor exactly 1/2.  The single-point-per-level case (including
the classic 4-point set) cannot satisfy that identity; multi-level
triangular sets compensate on their wider levels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FOUR_PI = 4.0 * np.pi


class QuadratureSpecError(ValueError):
    """Unsupported quadrature family or order."""


@dataclass(frozen=True)
class AngularQuadrature:
    mu: np.ndarray      # Omega_x, (M,)
    eta: np.ndarray     # Omega_y, (M,)
    xi: np.ndarray      # Omega_z, (M,)
    weight: np.ndarray  # steradians, (M,)

    @property
    def n_dirs(self) -> int:
        return self.mu.shape[0]

    def half_range_current(self) -> float:
        """sum of w*mu over mu > 0; pi for half-range-exact sets."""
        pos = self.mu > 0.0
        return float(np.sum(self.weight[pos] * self.mu[pos]))

    def validate(self, tol: float = 1e-10) -> None:
        """Check unit norms, weight normalization and moment identities."""
        norm = self.mu**2 + self.eta**2 + self.xi**2
        if np.max(np.abs(norm - 1.0)) > 1e-12:
            raise AssertionError("directions are not unit vectors")
        if np.any(self.weight <= 0.0):
            raise AssertionError("weights must be positive")
        w = self.weight
        if abs(w.sum() - FOUR_PI) > tol:
            raise AssertionError("weights do not sum to 4*pi")
        for comp in (self.mu, self.eta):
            if abs(np.sum(w * comp)) > tol:
                raise AssertionError("first moment in x/y must vanish")
            if abs(np.sum(w * comp**2) - FOUR_PI / 3.0) > tol:
                raise AssertionError("second moment must be 4*pi/3")
        if abs(np.sum(w * self.xi**2) - FOUR_PI / 3.0) > tol:
            raise AssertionError("zz second moment must be 4*pi/3")
        for a, b in ((self.mu, self.eta), (self.mu, self.xi), (self.eta, self.xi)):
            if abs(np.sum(w * a * b)) > tol:
                raise AssertionError("cross second moments must vanish")


def _polar_levels(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights for xi on (0, 1); weights sum to 1."""
    if n == 1:
        # single level: xi fixed by the second-moment identity sum(W xi^2)=1/3
        return np.array([1.0 / np.sqrt(3.0)]), np.array([1.0])
    nodes, wts = np.polynomial.legendre.leggauss(n)
    return 0.5 * (nodes + 1.0), 0.5 * wts


def _pair_cos_sum(a: int, beta: float) -> float:
    """sum_k cos(phi_k) for the symmetric level pattern at delta scale beta."""
    p, odd = divmod(a, 2)
    deltas = beta * (2.0 * np.arange(1, p + 1) - (0 if odd else 1)) / max(2 * p + odd - 1, 1)
    total = np.sqrt(2.0) * np.sum(np.cos(deltas))
    if odd:
        total += np.sqrt(0.5)
    return float(total)


def _solve_level_angles(a: int, cos_target: float) -> np.ndarray:
    """First-quadrant azimuthal angles pi/4 +- delta_j with the given cos sum."""
    if a == 1:
        return np.array([0.25 * np.pi])
    lo, hi = 0.0, 0.25 * np.pi * (1.0 - 1e-12)
    f_lo = _pair_cos_sum(a, lo) - cos_target
    f_hi = _pair_cos_sum(a, hi) - cos_target
    if f_lo < 0.0 or f_hi > 0.0:
        raise QuadratureSpecError(
            f"azimuthal half-range target {cos_target:.6f} infeasible for {a} points"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _pair_cos_sum(a, mid) - cos_target >= 0.0:
            lo = mid
        else:
            hi = mid
    beta = 0.5 * (lo + hi)
    p, odd = divmod(a, 2)
    deltas = beta * (2.0 * np.arange(1, p + 1) - (0 if odd else 1)) / max(2 * p + odd - 1, 1)
    angles = [0.25 * np.pi - d for d in deltas[::-1]] + ([0.25 * np.pi] if odd else []) \
        + [0.25 * np.pi + d for d in deltas]
    return np.array(angles)


def _assemble(levels: np.ndarray, level_w: np.ndarray, azi_counts: np.ndarray) -> AngularQuadrature:
    s_lev = np.sqrt(np.clip(1.0 - levels**2, 0.0, None))
    # choose a common per-level azimuthal mean cosine so the half-range
    # current sums to exactly pi; single-point levels are pinned at pi/4
    pinned = azi_counts == 1
    pinned_part = np.sqrt(2.0) * np.sum(level_w[pinned] * s_lev[pinned])
    free_mass = np.sum(level_w[~pinned] * s_lev[~pinned])
    kappa = (1.0 - pinned_part) / free_mass if free_mass > 0.0 else None

    mu, eta, xi, wgt = [], [], [], []
    for lev, lw, s, na in zip(levels, level_w, s_lev, azi_counts):
        if na == 1:
            phi = np.array([0.25 * np.pi])
        else:
            phi = _solve_level_angles(int(na), 0.5 * na * kappa)
        w_dir = np.pi * lw / na
        for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
            mu.append(sx * s * np.cos(phi))
            eta.append(sy * s * np.sin(phi))
            xi.append(np.full(na, lev))
            wgt.append(np.full(na, w_dir))
    return AngularQuadrature(
        np.concatenate(mu), np.concatenate(eta), np.concatenate(xi), np.concatenate(wgt)
    )


def build_quadrature(per_quadrant: int) -> AngularQuadrature:
    """Build the level-symmetric set with `per_quadrant` directions per x-y quadrant."""
    q = int(per_quadrant)
    if q < 1:
        raise QuadratureSpecError(f"per-quadrant count must be >= 1, got {per_quadrant}")
    n = int((np.sqrt(8.0 * q + 1.0) - 1.0) / 2.0 + 0.5)
    if n * (n + 1) // 2 == q:
        levels, lw = _polar_levels(n)
        azi = np.arange(n, 0, -1)  # most azimuthal points on the lowest level
        return _assemble(levels, lw, azi)
    s = int(np.sqrt(q) + 0.5)
    if s * s == q:
        levels, lw = _polar_levels(s)
        return _assemble(levels, lw, np.full(s, s))
    raise QuadratureSpecError(
        f"unsupported per-quadrant count {q}: need a triangular number n(n+1)/2 or a perfect square"
    )
