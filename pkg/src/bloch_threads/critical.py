"""Critical points of the radial velocity on a sphere of fixed radius.

On the sphere |n_hat| = 1 the radial velocity

    f_r(n_hat) = b.n_hat + r (n_hat^T A n_hat - tr A)

is critical where ``b + 2rA n_hat = C n_hat`` with ``C = 2 nu`` a Lagrange
multiplier.  In the eigenbasis of A this gives ``n_hat_j = b_j / (C - 2 r a_j)``
and the unit-norm condition becomes a polynomial in C of degree twice the
number of eigenspaces that b touches (six in the generic case).

Eigenspaces of A that b does not touch contribute affine sets of critical
points (lines, planes) on which ``C = 2 r a_g``; these are reported by
:func:`special_case_critical_sets` and their isolated intersections with the
sphere are included in :func:`critical_points_at`.

Over all radii the isolated critical points lie on the curve
``n(mu) = (mu - A)^-1 b / 2`` with ``mu = C / (2r)``.  Its branches with
``mu > a_1`` and ``mu < a_3`` are the maximizing and minimizing threads;
branches between eigenvalues are alternate threads, born where the curve is
tangent to a sphere (:func:`tangency_points`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import brentq

from .errors import RootFindingError
from .system import LindbladSystem

REAL_ROOT_TOL = 1e-6
UNIT_NORM_TOL = 1e-8
HESSIAN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CriticalPoint:
    r: float
    n_hat: np.ndarray
    nu: float
    classification: str  # "max" | "min" | "saddle"
    residual: float
    hessian_eigenvalues: np.ndarray

    @property
    def C(self) -> float:
        return 2 * self.nu

    @property
    def mu(self) -> float:
        return self.nu / self.r if self.r > 0 else np.inf * np.sign(self.nu)


@dataclass(frozen=True, eq=False)
class TangencyPoint:
    mu: float
    n: np.ndarray
    interval: tuple[float, float]

    @property
    def r(self) -> float:
        return float(np.linalg.norm(self.n))

    @property
    def n_hat(self) -> np.ndarray:
        return self.n / self.r

    @property
    def inside_ball(self) -> bool:
        return self.r < 1.0


@dataclass(frozen=True, eq=False)
class AffineCriticalSet:
    """Affine set ``offset + span(directions)`` of critical points.

    ``kind`` is ``"line"``, ``"plane"`` or ``"sphere"`` for eigenspaces of A
    that b does not touch (on these C = 2 r eigenvalue), or ``"main_axis"``
    when b lies in a single eigenspace and the main threads are the fixed
    directions ``+-directions[:, 0]``.
    """

    kind: str
    eigenvalue: float
    offset: np.ndarray
    directions: np.ndarray

    def at_radius(self, r: float):
        """Intersection with the sphere of radius r.

        Lines and main axes give a list of unit vectors; planes give
        ``(center, radius, basis)`` of a circle of n_hat values, or None.
        """
        if self.kind == "main_axis":
            u = self.directions[:, 0]
            return [u.copy(), -u]
        if self.kind == "sphere":
            return "all"
        d2 = r * r - float(self.offset @ self.offset)
        if self.kind == "line":
            e = self.directions[:, 0]
            if d2 < -1e-14:
                return []
            if d2 <= 1e-14:
                return [self.offset / np.linalg.norm(self.offset)]
            s = np.sqrt(d2)
            return [(self.offset + s * e) / r, (self.offset - s * e) / r]
        if d2 < 0:
            return None
        return self.offset / r, np.sqrt(d2) / r, self.directions


def criticality_residual(system: LindbladSystem, r: float, n_hat) -> np.ndarray | float:
    """|(b + 2 r A n_hat)_perp|, broadcasting over stacked n_hat."""
    n_hat = np.asarray(n_hat, dtype=float)
    v = system.b + 2 * r * n_hat @ system.A
    along = np.sum(v * n_hat, axis=-1, keepdims=True)
    return np.linalg.norm(v - along * n_hat, axis=-1)


def tangent_basis(n_hat) -> np.ndarray:
    """Orthonormal 3x2 basis of the plane perpendicular to n_hat."""
    n_hat = np.asarray(n_hat, dtype=float)
    helper = np.eye(3)[int(np.argmin(np.abs(n_hat)))]
    t1 = np.cross(n_hat, helper)
    t1 /= np.linalg.norm(t1)
    return np.column_stack([t1, np.cross(n_hat, t1)])


def classify(system: LindbladSystem, r: float, n_hat) -> tuple[str, np.ndarray]:
    """Sign pattern of the Riemannian Hessian 2r P^T A P - C I."""
    Pt = tangent_basis(n_hat)
    C = float(n_hat @ (system.b + 2 * r * system.A @ n_hat))
    H = 2 * r * Pt.T @ system.A @ Pt - C * np.eye(2)
    eigs = np.linalg.eigvalsh(H)
    thr = HESSIAN_TOL * system.scale
    if np.all(eigs < -thr):
        label = "max"
    elif np.all(eigs > thr):
        label = "min"
    else:
        label = "saddle"
    return label, eigs


def _make_point(system, r, n_hat):
    n_hat = n_hat / np.linalg.norm(n_hat)
    C = float(n_hat @ (system.b + 2 * r * system.A @ n_hat))
    label, eigs = classify(system, r, n_hat)
    return CriticalPoint(
        r=float(r),
        n_hat=n_hat,
        nu=C / 2,
        classification=label,
        residual=float(criticality_residual(system, r, n_hat)),
        hessian_eigenvalues=eigs,
    )


def nu_polynomial(system: LindbladSystem, r: float) -> np.ndarray:
    """Coefficients (ascending) of the polynomial in nu whose real roots give critical points.

    sum_j beta_j^2 prod_{k != j} (nu - r a_k)^2 - 4 prod_k (nu - r a_k)^2,
    taken over the eigenspaces that b touches (beta_j = |projection of b|).
    """
    groups = system.active_groups
    factors = [P.polypow([-r * g.value, 1.0], 2) for g in groups]
    poly = -4 * _prod(factors)
    for i, g in enumerate(groups):
        poly = P.polyadd(poly, g.b_norm**2 * _prod(factors[:i] + factors[i + 1 :]))
    return poly


def _prod(polys):
    out = np.array([1.0])
    for p in polys:
        out = P.polymul(out, p)
    return out


def _roots(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if coeffs.size <= 1:
        return np.array([], dtype=complex)
    try:
        roots = P.polyroots(coeffs / coeffs[-1])
    except np.linalg.LinAlgError as exc:
        raise RootFindingError(f"companion eigenvalue solve failed: {exc}", coeffs) from exc
    if not np.all(np.isfinite(roots)):
        raise RootFindingError("non-finite polynomial roots", coeffs)
    return roots


def _active_arrays(system: LindbladSystem):
    groups = system.active_groups
    alphas = np.array([g.value for g in groups])
    betas = np.array([g.b_norm for g in groups])
    U = np.column_stack([g.b_direction for g in groups]) if groups else np.zeros((3, 0))
    return alphas, betas, U


def critical_points_at(system: LindbladSystem, r: float) -> list[CriticalPoint]:
    """Isolated critical points of f_r on the unit sphere.

    Continuous families (circles from a plane of critical points, or the
    whole sphere when A is a multiple of the identity and b = 0) are not
    enumerated here; see :func:`special_case_critical_sets`.
    """
    r = float(r)
    if r < 0 or r > 1 + 1e-12:
        raise ValueError(f"radius {r} outside [0, 1]")
    if r == 0:
        if system.is_unital:
            return []
        b_hat = system.b / np.linalg.norm(system.b)
        return [_make_point(system, 0.0, b_hat), _make_point(system, 0.0, -b_hat)]

    alphas, betas, U = _active_arrays(system)
    candidates = []
    if alphas.size:
        coeffs = nu_polynomial(system, r)
        roots = _roots(coeffs)
        poles = r * alphas
        for z in roots:
            if abs(z.imag) > REAL_ROOT_TOL * (1 + abs(z.real)):
                continue
            nu = _polish_nu(z.real, betas, poles)
            coords = betas / (2 * (nu - poles))
            if abs(np.linalg.norm(coords) - 1) > UNIT_NORM_TOL:
                continue
            candidates.append(U @ coords)

    for g in system.zero_b_groups:
        if g.dim > 1 and alphas.size:
            continue
        if alphas.size:
            part = U @ (betas / (2 * r * (g.value - alphas)))
        else:
            part = np.zeros(3)
        s2 = 1 - float(part @ part)
        if g.dim == 1:
            e = g.basis[:, 0]
            if s2 > 1e-14:
                s = np.sqrt(s2)
                candidates += [part + s * e, part - s * e]
            elif s2 > -UNIT_NORM_TOL:
                candidates.append(part)
        elif g.dim == 2 and not alphas.size:
            continue  # b = 0 with a degenerate pair: a great circle, reported as a set

    points = []
    for n in candidates:
        n = n / np.linalg.norm(n)
        if any(np.linalg.norm(n - p.n_hat) < 1e-9 for p in points):
            continue
        points.append(_make_point(system, r, n))

    generic = len(system.active_groups) == 3
    if generic and len(points) < 2:
        raise RootFindingError(
            f"only {len(points)} critical points found at r={r}", nu_polynomial(system, r)
        )
    points.sort(key=lambda p: -p.nu)
    return points


def _polish_nu(nu, betas, poles, steps=2):
    """Newton on the secular function sum beta^2 / (4 (nu - pole)^2) - 1."""

    def g(x):
        d = x - poles
        return np.sum(betas**2 / (4 * d * d)) - 1, -np.sum(betas**2 / (2 * d**3))

    val, der = g(nu)
    for _ in range(steps):
        if der == 0 or not np.isfinite(der):
            break
        trial = nu - val / der
        tv, td = g(trial)
        if not abs(tv) < abs(val):
            break
        nu, val, der = trial, tv, td
    return nu


def critical_curve(system: LindbladSystem, mu) -> np.ndarray:
    """n(mu) = sum_j beta_j / (2 (mu - a_j)) u_j over the eigenspaces b touches."""
    alphas, betas, U = _active_arrays(system)
    mu = np.asarray(mu, dtype=float)
    coords = betas / (2 * (mu[..., None] - alphas))
    return coords @ U.T


def mu_polynomial(system: LindbladSystem) -> np.ndarray:
    """sum_j beta_j^2 prod_{k != j} (a_k - mu)^3, ascending coefficients."""
    groups = system.active_groups
    factors = [P.polypow([g.value, -1.0], 3) for g in groups]
    poly = np.zeros(1)
    for i, g in enumerate(groups):
        poly = P.polyadd(poly, g.b_norm**2 * _prod(factors[:i] + factors[i + 1 :]))
    return poly


def tangency_points(system: LindbladSystem) -> list[TangencyPoint]:
    """Points where the curve of critical points is tangent to a concentric sphere.

    ``|n(mu)|^2`` is strictly convex between consecutive eigenvalues that b
    touches, so there is exactly one tangency (a radius minimum) per such
    interval; roots come from the companion matrix of the mu-polynomial and
    are polished by bisection on the monotone secular function.
    """
    alphas, betas, _ = _active_arrays(system)
    if alphas.size < 2:
        return []
    roots = _roots(mu_polynomial(system))
    real = roots.real[np.abs(roots.imag) <= REAL_ROOT_TOL * (1 + np.abs(roots.real))]

    def h(mu):
        return float(np.sum(betas**2 / (mu - alphas) ** 3))

    out = []
    ordered = np.sort(alphas)
    for lo, hi in zip(ordered[:-1], ordered[1:]):
        inside = real[(real > lo) & (real < hi)]
        width = hi - lo
        # stay a few ulps clear of the poles so the end signs are exact
        eps = max(1e-12 * width, 8 * np.spacing(max(abs(lo), abs(hi))))
        a, b = lo + eps, hi - eps
        if inside.size:
            guess = float(np.median(inside))
            # bracket tightly around the companion estimate when possible
            d = 1e-6 * width
            if lo < guess - d and guess + d < hi and h(guess - d) > 0 > h(guess + d):
                a, b = guess - d, guess + d
        mu = brentq(h, a, b, xtol=1e-14 * max(1.0, abs(hi)), rtol=1e-15, maxiter=200)
        out.append(TangencyPoint(mu=mu, n=critical_curve(system, mu), interval=(float(lo), float(hi))))
    return out


def special_case_critical_sets(system: LindbladSystem) -> list[AffineCriticalSet]:
    """Affine families of critical points from degenerate parameter patterns."""
    alphas, betas, U = _active_arrays(system)
    sets = []
    if len(system.active_groups) == 1:
        g = system.active_groups[0]
        sets.append(AffineCriticalSet("main_axis", g.value, np.zeros(3), g.b_direction[:, None]))
    for g in system.zero_b_groups:
        if alphas.size:
            offset = U @ (betas / (2 * (g.value - alphas)))
        else:
            offset = np.zeros(3)
        kind = {1: "line", 2: "plane", 3: "sphere"}[g.dim]
        sets.append(AffineCriticalSet(kind, g.value, offset, g.basis.copy()))
    return sets
