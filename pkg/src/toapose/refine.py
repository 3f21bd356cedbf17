"""Gauss-Newton refinement of a pose window and the single-epoch baseline.

The relaxation hands over poses close to the optimum; this module runs the
actual maximum-likelihood iteration from there.  Every epoch contributes its
differenced range rows, consecutive epochs are tied together by the measured
in-plane displacement and yaw change, and the stacked weighted least squares
problem is linearized and re-solved until the increment vanishes.

The single-epoch solver reuses the same machinery with the coupling rows
absent.  A brute-force grid evaluator of the same cost is included as a test
oracle: it is the only honest way to certify that an epoch's cost surface
has (or lacks) a second basin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .frames import (
    Attitude,
    Pose,
    rotation_matrix,
    rotation_yaw_derivative,
    wrap_angle,
)
from .measurement import (
    InsufficientMeasurements,
    TdoaBundle,
    inter_epoch_covariance,
)
from .scenario import Scenario


class RefineError(RuntimeError):
    """Base class for refinement failures."""


class SingularGeometry(RefineError):
    """A predicted range collapsed, leaving a unit vector undefined."""


class RankDeficient(RefineError):
    """The normal matrix is numerically singular; the window is unobservable."""


class NotConverged(RefineError):
    """Iteration budget exhausted.  Carries the last iterate, flagged."""

    def __init__(self, message: str, estimate: "WindowEstimate"):
        super().__init__(message)
        self.estimate = estimate


_MIN_RANGE = 1e-6
_MAX_CONDITION = 1e12


@dataclass(frozen=True)
class WindowEstimate:
    """Stacked per-epoch [x, y, yaw] estimate with its covariance.

    The covariance is the inverse of the final weighted normal matrix, which
    is the estimator's asymptotic covariance when converged."""

    theta: np.ndarray
    covariance: np.ndarray
    iterations: int
    converged: bool
    increment_norm: float

    @property
    def num_epochs(self) -> int:
        return self.theta.size // 3

    def pose(self, k: int, scenario: Scenario) -> Pose:
        """Epoch k's estimate as a Pose, completed with the known attitude."""
        x, y, yaw = self.theta[3 * k : 3 * k + 3]
        att = Attitude(float(wrap_angle(yaw)), scenario.roll, scenario.pitch)
        return Pose(float(x), float(y), att, scenario.h)

    def poses(self, scenario: Scenario) -> list[Pose]:
        return [self.pose(k, scenario) for k in range(self.num_epochs)]


@dataclass(frozen=True)
class StackedSystem:
    """One linearization of the window problem.

    Rows are ordered as all differenced-range blocks first, then the
    inter-epoch blocks; covariance is block diagonal in the same order."""

    jacobian: np.ndarray
    residual: np.ndarray
    covariance: np.ndarray
    num_toa_rows: int


def _stack_theta(poses: Sequence[Pose] | np.ndarray) -> np.ndarray:
    if isinstance(poses, np.ndarray):
        theta = np.asarray(poses, dtype=float).ravel().copy()
        if theta.size % 3:
            raise ValueError("theta length must be a multiple of 3")
        return theta
    out = np.empty(3 * len(poses))
    for k, pose in enumerate(poses):
        out[3 * k : 3 * k + 3] = (pose.x, pose.y, pose.yaw)
    return out


def _epoch_pose(theta: np.ndarray, k: int, scenario: Scenario) -> Pose:
    x, y, yaw = theta[3 * k : 3 * k + 3]
    return Pose(float(x), float(y), Attitude(float(yaw), scenario.roll, scenario.pitch), scenario.h)


def linearize(
    theta: Sequence[Pose] | np.ndarray,
    bundles: Sequence[TdoaBundle],
    inter: Sequence[np.ndarray],
    scenario: Scenario,
    sigma_p: float | None = None,
    sigma_psi: float | None = None,
) -> StackedSystem:
    """Jacobian, residual and covariance of the stacked window problem.

    Each differenced-range row depends on its own epoch only; its gradient is
    the difference of the two unit vectors for the position part and the
    lever-arm sensitivity through the yaw derivative of the rotation for the
    attitude part.  Each inter-epoch block spans exactly two adjacent epochs.
    """
    theta = _stack_theta(theta)
    num_epochs = theta.size // 3
    if len(bundles) != num_epochs:
        raise ValueError("theta and bundles disagree on the number of epochs")
    if len(inter) != max(num_epochs - 1, 0):
        raise ValueError("expected one inter-epoch row block per epoch after the first")
    if sigma_p is None:
        sigma_p = scenario.sigma_p
    if sigma_psi is None:
        sigma_psi = scenario.sigma_psi

    anchors = scenario.anchors
    toa_rows = sum(b.num_tdoas for b in bundles)
    total = toa_rows + 3 * (num_epochs - 1)
    H = np.zeros((total, 3 * num_epochs))
    residual = np.empty(total)
    covariance = np.zeros((total, total))

    row = 0
    for k, bundle in enumerate(bundles):
        pose = _epoch_pose(theta, k, scenario)
        R = rotation_matrix(pose.attitude)
        Rp = rotation_yaw_derivative(pose.attitude)
        center = pose.center

        def sensitivities(i: int, j: int):
            lever = scenario.levers[i]
            antenna = center + R @ lever
            vec = anchors[j] - antenna
            rng = float(np.linalg.norm(vec))
            if rng < _MIN_RANGE:
                raise SingularGeometry(
                    f"epoch {k}: antenna {i} sits on anchor {j}, range {rng:.1e}"
                )
            unit = vec / rng
            return rng, unit[:2], float(unit @ (Rp @ lever))

        ref_i, ref_j = bundle.reference
        ref_rng, ref_xy, ref_psi = sensitivities(ref_i, ref_j)
        cols = slice(3 * k, 3 * k + 3)
        for r, (i, j) in enumerate(bundle.rows):
            rng, unit_xy, psi_sens = sensitivities(i, j)
            H[row + r, cols.start : cols.start + 2] = -unit_xy + ref_xy
            H[row + r, cols.start + 2] = -psi_sens + ref_psi
            residual[row + r] = bundle.values[r] - (rng - ref_rng)
        covariance[row : row + bundle.num_tdoas, row : row + bundle.num_tdoas] = bundle.covariance
        row += bundle.num_tdoas

    for step in range(1, num_epochs):
        prev = _epoch_pose(theta, step - 1, scenario)
        curr = _epoch_pose(theta, step, scenario)
        R_prev = rotation_matrix(prev.attitude)
        Rp_prev = rotation_yaw_derivative(prev.attitude)
        delta = curr.center - prev.center
        predicted_xy = (R_prev.T @ delta)[:2]
        prev_cols = 3 * (step - 1)
        curr_cols = 3 * step
        block = R_prev.T[:2, :2]
        H[row : row + 2, prev_cols : prev_cols + 2] = -block
        H[row : row + 2, prev_cols + 2] = (Rp_prev.T @ delta)[:2]
        H[row : row + 2, curr_cols : curr_cols + 2] = block
        H[row + 2, prev_cols + 2] = -1.0
        H[row + 2, curr_cols + 2] = 1.0
        measured = np.asarray(inter[step - 1], dtype=float)
        residual[row : row + 2] = measured[:2] - predicted_xy
        residual[row + 2] = wrap_angle(
            measured[2] - (theta[curr_cols + 2] - theta[prev_cols + 2])
        )
        covariance[row : row + 3, row : row + 3] = inter_epoch_covariance(sigma_p, sigma_psi)
        row += 3

    return StackedSystem(
        jacobian=H, residual=residual, covariance=covariance, num_toa_rows=toa_rows
    )


def _whiten(system: StackedSystem, bundles: Sequence[TdoaBundle]) -> tuple[np.ndarray, np.ndarray]:
    """Premultiply jacobian and residual by the inverse covariance root."""
    A = np.empty_like(system.jacobian)
    b = np.empty_like(system.residual)
    row = 0
    for bundle in bundles:
        n = bundle.num_tdoas
        L = np.linalg.cholesky(bundle.covariance)
        sl = slice(row, row + n)
        A[sl] = np.linalg.solve(L, system.jacobian[sl])
        b[sl] = np.linalg.solve(L, system.residual[sl])
        row += n
    if row < system.residual.size:
        scales = 1.0 / np.sqrt(np.diag(system.covariance[row:, row:]))
        A[row:] = scales[:, None] * system.jacobian[row:]
        b[row:] = scales * system.residual[row:]
    return A, b


def _solve_increment(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares increment and normal-matrix inverse via SVD.

    The SVD makes the rank decision explicit instead of burying it in a
    pseudo-inverse: a condition number past 1e12 is reported, not smoothed
    over."""
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[0] <= 0.0 or (s[0] / max(s[-1], 1e-300)) ** 2 > _MAX_CONDITION:
        raise RankDeficient(
            f"normal matrix condition {(s[0] / max(s[-1], 1e-300)) ** 2:.2e} exceeds {_MAX_CONDITION:.0e}"
        )
    increment = Vt.T @ ((U.T @ b) / s)
    covariance = (Vt.T / s**2) @ Vt
    return increment, covariance


def gauss_newton(
    init: Sequence[Pose] | np.ndarray,
    bundles: Sequence[TdoaBundle],
    inter: Sequence[np.ndarray],
    scenario: Scenario,
    sigma_p: float | None = None,
    sigma_psi: float | None = None,
    tol: float = 1e-8,
    max_iter: int = 50,
    line_search: bool = False,
) -> WindowEstimate:
    """Iterate weighted least-squares increments until they vanish.

    Mixed meter and radian units share one tolerance; both are order one
    here.  With line_search enabled a step that increases the whitened cost
    is halved up to eight times, otherwise the plain increment is applied.
    Raises NotConverged (carrying the flagged estimate) when the iteration
    budget runs out, and RankDeficient the moment the window stops being
    jointly observable.
    """
    theta = _stack_theta(init)
    covariance = np.full((theta.size, theta.size), np.nan)
    increment_norm = math.inf
    for iteration in range(1, max_iter + 1):
        system = linearize(theta, bundles, inter, scenario, sigma_p, sigma_psi)
        A, b = _whiten(system, bundles)
        increment, covariance = _solve_increment(A, b)
        step = increment
        if line_search:
            cost = float(b @ b)
            for _ in range(8):
                trial = _try_cost(theta + step, bundles, inter, scenario, sigma_p, sigma_psi)
                if trial is not None and trial <= cost:
                    break
                step = step / 2.0
        theta = theta + step
        theta[2::3] = [wrap_angle(v) for v in theta[2::3]]
        increment_norm = float(np.linalg.norm(step))
        if increment_norm < tol:
            return WindowEstimate(theta, covariance, iteration, True, increment_norm)
    estimate = WindowEstimate(theta, covariance, max_iter, False, increment_norm)
    raise NotConverged(
        f"no convergence in {max_iter} iterations (last step {increment_norm:.2e})",
        estimate,
    )


def _try_cost(theta, bundles, inter, scenario, sigma_p, sigma_psi) -> float | None:
    try:
        system = linearize(theta, bundles, inter, scenario, sigma_p, sigma_psi)
    except SingularGeometry:
        return None
    _, b = _whiten(system, bundles)
    return float(b @ b)


def sema_solve(
    init: Pose,
    bundle: TdoaBundle,
    scenario: Scenario,
    tol: float = 1e-8,
    max_iter: int = 50,
    line_search: bool = False,
) -> WindowEstimate:
    """Single-epoch baseline: the same iteration without coupling rows."""
    if bundle.num_tdoas < 3:
        raise InsufficientMeasurements(
            f"{bundle.num_tdoas} differenced rows cannot determine 3 pose unknowns"
        )
    return gauss_newton(
        [init], [bundle], [], scenario, tol=tol, max_iter=max_iter, line_search=line_search
    )


def window_cost(
    theta: Sequence[Pose] | np.ndarray,
    bundles: Sequence[TdoaBundle],
    inter: Sequence[np.ndarray],
    scenario: Scenario,
    sigma_p: float | None = None,
    sigma_psi: float | None = None,
) -> float:
    """Whitened squared-residual cost of the window at the given poses."""
    system = linearize(theta, bundles, inter, scenario, sigma_p, sigma_psi)
    _, b = _whiten(system, bundles)
    return float(b @ b)


def oracle_grid_mle(
    bundles: Sequence[TdoaBundle] | TdoaBundle,
    inter: Sequence[np.ndarray],
    scenario: Scenario,
    bounds: Sequence[tuple[float, float]],
    resolution: int | Sequence[int] = 40,
    threshold: float | None = None,
    sigma_p: float | None = None,
    sigma_psi: float | None = None,
) -> list[Pose]:
    """Brute-force basin finder over an (x, y, yaw) grid.

    Evaluates the window cost at every grid node of the first epoch's pose;
    with a second epoch present, its pose is implied by the measured change,
    so the grid stays three dimensional.  Returns the local minima whose
    cost is below the threshold, best first.  The yaw axis wraps.  This is
    deliberately exhaustive and coarse: its only job is to witness how many
    basins the cost surface has, independently of any iterative solver.
    """
    if isinstance(bundles, TdoaBundle):
        bundles = [bundles]
    if len(bundles) > 2:
        raise ValueError("the grid oracle is meant for one or two epochs")
    if len(bounds) != 3:
        raise ValueError("bounds must cover x, y and yaw")
    if isinstance(resolution, int):
        resolution = (resolution, resolution, resolution)
    nx, ny, npsi = resolution
    xs = np.linspace(bounds[0][0], bounds[0][1], nx)
    ys = np.linspace(bounds[1][0], bounds[1][1], ny)
    # an endpoint-exclusive yaw axis keeps the circular neighborhood honest
    psis = bounds[2][0] + (bounds[2][1] - bounds[2][0]) * np.arange(npsi) / npsi

    cost = np.empty((nx, ny, npsi))
    for a, x in enumerate(xs):
        for b, y in enumerate(ys):
            for c, psi in enumerate(psis):
                theta = _grid_theta(x, y, psi, bundles, inter, scenario)
                try:
                    cost[a, b, c] = window_cost(
                        theta, bundles, inter, scenario, sigma_p, sigma_psi
                    )
                except SingularGeometry:
                    cost[a, b, c] = np.inf

    if threshold is None:
        rows = sum(b.num_tdoas for b in bundles) + 3 * (len(bundles) - 1)
        threshold = float(np.min(cost)) + 9.0 * rows

    minima: list[tuple[float, Pose]] = []
    for a in range(nx):
        for b in range(ny):
            for c in range(npsi):
                value = cost[a, b, c]
                if not np.isfinite(value) or value > threshold:
                    continue
                if _is_local_min(cost, a, b, c):
                    att = Attitude(float(wrap_angle(psis[c])), scenario.roll, scenario.pitch)
                    minima.append((value, Pose(float(xs[a]), float(ys[b]), att, scenario.h)))
    minima.sort(key=lambda pair: pair[0])
    return [pose for _, pose in minima]


def _grid_theta(x, y, psi, bundles, inter, scenario) -> np.ndarray:
    theta = np.empty(3 * len(bundles))
    theta[0:3] = (x, y, psi)
    if len(bundles) == 2:
        first = Pose(float(x), float(y), Attitude(float(psi), scenario.roll, scenario.pitch), scenario.h)
        measured = np.asarray(inter[0], dtype=float)
        R = rotation_matrix(first.attitude)
        shift = R @ np.array([measured[0], measured[1], 0.0])
        theta[3:6] = (x + shift[0], y + shift[1], psi + measured[2])
    return theta


def _is_local_min(cost: np.ndarray, a: int, b: int, c: int) -> bool:
    nx, ny, npsi = cost.shape
    value = cost[a, b, c]
    for da in (-1, 0, 1):
        for db in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if da == db == dc == 0:
                    continue
                aa, bb = a + da, b + db
                if not (0 <= aa < nx and 0 <= bb < ny):
                    continue
                if cost[aa, bb, (c + dc) % npsi] < value:
                    return False
    return True
