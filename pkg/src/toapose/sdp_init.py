"""Convex initialization of a pose window from differenced TOA measurements.

Squaring each differenced TOA turns it into a row that is linear in a small
lifted vector: the yaw direction (sin, cos), the planar position, the range
from the reference antenna to the reference anchor, and the body-frame
translation R^T p_c.  Collecting the lift f and its second-moment surrogate
F >= f f^T gives a semidefinite program whose solution seeds the iterative
refinement.  Odometry between epochs enters through two further lifted
blocks, one for the planar step and one for the yaw increment, that share
coordinates with the per-epoch lifts.

Variable layout of a window with K epochs (all symmetric matrices are packed
as row-major upper triangles):

    per epoch k:   moment F_k (36) then lift vector f_k (8)
    if K >= 2:     one yaw-chain scalar per epoch (K)
    per step j:    step moment (21) then yaw-pair moment (3)

The yaw-chain scalars are gauge-fixed to zero at the first epoch; only their
increments are observable, and pose extraction reads yaw from the lift
direction instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .conic import ConicProgram, ConicSolution, MaxIterations, solve
from .frames import (
    Attitude,
    Pose,
    antenna_position,
    kronecker_row,
    rotation_matrix,
    vectorize_rotation,
)
from .measurement import EpochMeasurements, InsufficientMeasurements, TdoaBundle
from .scenario import Scenario

# Index map of the lift vector f.
LIFT_SIN = 0
LIFT_COS = 1
LIFT_X = 2
LIFT_Y = 3
LIFT_RANGE = 4
LIFT_BODY = slice(5, 8)
LIFT_DIM = 8

_MOMENT_VARS = LIFT_DIM * (LIFT_DIM + 1) // 2
_EPOCH_VARS = _MOMENT_VARS + LIFT_DIM
_STEP_DIM = 6
_STEP_VARS = _STEP_DIM * (_STEP_DIM + 1) // 2 + 3


class DegenerateLift(RuntimeError):
    """The solved lift has no usable yaw direction."""


def pack_symmetric(mat: np.ndarray) -> np.ndarray:
    """Row-major upper triangle of a symmetric matrix."""
    mat = np.asarray(mat, dtype=float)
    return mat[np.triu_indices(mat.shape[0])]


def unpack_symmetric(vec: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros((size, size))
    iu = np.triu_indices(size)
    out[iu] = vec
    return out + out.T - np.diag(np.diag(out))


def _uptri_index(size: int, i: int, j: int) -> int:
    if i > j:
        i, j = j, i
    return i * size - i * (i - 1) // 2 + (j - i)


def moment_slice(epoch: int) -> slice:
    return slice(_EPOCH_VARS * epoch, _EPOCH_VARS * epoch + _MOMENT_VARS)


def vector_slice(epoch: int) -> slice:
    start = _EPOCH_VARS * epoch + _MOMENT_VARS
    return slice(start, start + LIFT_DIM)


def yaw_index(epoch: int, num_epochs: int) -> int:
    """Index of an epoch's yaw-chain scalar (only present when K >= 2)."""
    if num_epochs < 2:
        raise ValueError("single-epoch windows carry no yaw chain")
    return _EPOCH_VARS * num_epochs + epoch

def _step_base(step: int, num_epochs: int) -> int:
    if not 1 <= step < num_epochs:
        raise ValueError(f"step {step} outside window of {num_epochs} epochs")
    return _EPOCH_VARS * num_epochs + num_epochs + _STEP_VARS * (step - 1)


def motion_moment_slice(step: int, num_epochs: int) -> slice:
    base = _step_base(step, num_epochs)
    return slice(base, base + 21)


def yaw_moment_slice(step: int, num_epochs: int) -> slice:
    base = _step_base(step, num_epochs) + 21
    return slice(base, base + 3)


def window_variable_count(num_epochs: int) -> int:
    if num_epochs < 1:
        raise ValueError("a window needs at least one epoch")
    if num_epochs == 1:
        return _EPOCH_VARS
    return _EPOCH_VARS * num_epochs + num_epochs + _STEP_VARS * (num_epochs - 1)


def lift_pose(pose: Pose, anchor: np.ndarray, lever: np.ndarray) -> np.ndarray:
    """Evaluate the lift vector f at a pose for a given reference pair."""
    rot = rotation_matrix(pose.attitude)
    f = np.empty(LIFT_DIM)
    f[LIFT_SIN] = math.sin(pose.yaw)
    f[LIFT_COS] = math.cos(pose.yaw)
    f[LIFT_X] = pose.x
    f[LIFT_Y] = pose.y
    f[LIFT_RANGE] = float(np.linalg.norm(np.asarray(anchor) - antenna_position(pose, lever)))
    f[LIFT_BODY] = rot.T @ pose.center
    return f


class ToaBlocks(NamedTuple):
    """Squared-difference rows of one epoch: constants, coefficients on the
    lift, the per-row noise scaling, and the induced weight matrix."""

    constants: np.ndarray
    coefficients: np.ndarray
    noise_scale: np.ndarray
    weight: np.ndarray


def build_toa_blocks(
    bundle: TdoaBundle,
    scenario: Scenario,
    epoch: int,
    clock_prior: float | None = None,
    measurements: EpochMeasurements | None = None,
) -> ToaBlocks:
    """Linearize one epoch's differenced TOAs against the lift vector.

    Each row r with antenna/anchor pair (i, j) and differenced value d sits in
    the identity  constants[r] = coefficients[r] . f + 2 range * noise, so the
    residual vanishes at the true lift when the noise is zero.  The default
    noise scaling is the identity (equal weights); passing a clock-bias prior
    together with the raw epoch measurements switches to rows scaled by twice
    the approximate ranges.
    """
    vec = vectorize_rotation(scenario.attitude(0.0))
    ref_ant, ref_anc = bundle.reference
    anchor_ref = scenario.anchors[ref_anc]
    lever_ref = scenario.levers[ref_ant]
    kron_ref = kronecker_row(lever_ref, anchor_ref)

    count = bundle.num_tdoas
    constants = np.empty(count)
    coefficients = np.empty((count, LIFT_DIM))
    for r, (ant, anc) in enumerate(bundle.rows):
        anchor = scenario.anchors[anc]
        lever = scenario.levers[ant]
        diff = bundle.values[r]
        gap = anchor_ref - anchor
        kron_row = kron_ref - kronecker_row(lever, anchor)
        constants[r] = (
            diff * diff
            - anchor @ anchor
            + anchor_ref @ anchor_ref
            + lever_ref @ lever_ref
            - lever @ lever
            - 2.0 * gap[2] * scenario.h
            - 2.0 * kron_row @ vec.alpha
        )
        coefficients[r, 0:2] = 2.0 * kron_row @ vec.gamma_mat
        coefficients[r, 2:4] = 2.0 * gap[:2]
        coefficients[r, LIFT_RANGE] = -2.0 * diff
        coefficients[r, LIFT_BODY] = 2.0 * (lever - lever_ref)

    if clock_prior is None:
        noise_scale = np.eye(count)
    else:
        if measurements is None:
            raise ValueError("a clock prior needs the raw epoch measurements")
        ranges = np.array([measurements.toas[row] - clock_prior for row in bundle.rows])
        noise_scale = 2.0 * np.diag(ranges)
    scale_inv = np.linalg.inv(noise_scale)
    weight = scale_inv @ np.linalg.inv(bundle.covariance) @ scale_inv
    weight = 0.5 * (weight + weight.T)
    return ToaBlocks(constants, coefficients, noise_scale, weight)


@dataclass(frozen=True)
class EpochLift:
    """One epoch's lift evaluated at a pose, with its measurement rows."""

    vector: np.ndarray
    moment: np.ndarray
    constants: np.ndarray
    coefficients: np.ndarray
    noise_scale: np.ndarray
    weight: np.ndarray

    @classmethod
    def from_pose(
        cls,
        pose: Pose,
        bundle: TdoaBundle,
        scenario: Scenario,
        clock_prior: float | None = None,
        measurements: EpochMeasurements | None = None,
    ) -> "EpochLift":
        blocks = build_toa_blocks(bundle, scenario, 0, clock_prior, measurements)
        ant, anc = bundle.reference
        vector = lift_pose(pose, scenario.anchors[anc], scenario.levers[ant])
        return cls(vector, np.outer(vector, vector), *blocks)


class MotionBlocks(NamedTuple):
    """Affine maps tying one odometry step to the adjacent epoch lifts."""

    pos_map: np.ndarray
    pos_offset: np.ndarray
    yaw_map: np.ndarray
    yaw_offset: float


def build_motion_blocks(delta: np.ndarray, scenario: Scenario) -> MotionBlocks:
    """Rows of the lifted odometry residuals for one epoch step.

    The planar residual is pos_map . o - pos_offset with the step vector
    o = [x_k, y_k, sin psi_{k-1}, cos psi_{k-1}, x_{k-1}, y_{k-1}]; the yaw
    residual is yaw_map . [psi_k, psi_{k-1}] - yaw_offset.  The measured body
    step is treated as in-plane, which is exact for level attitudes.
    """
    delta = np.asarray(delta, dtype=float)
    vec = vectorize_rotation(scenario.attitude(0.0))
    body = np.array([delta[0], delta[1], 0.0])
    sel = np.kron(body.reshape(1, 3), np.eye(3))[:2, :]
    turn = sel @ vec.gamma_mat
    pos_map = np.hstack([np.eye(2), -turn, -np.eye(2)])
    pos_offset = sel @ vec.alpha
    return MotionBlocks(pos_map, pos_offset, np.array([1.0, -1.0]), float(delta[2]))


@dataclass(frozen=True)
class InterEpochLift:
    """Lifted odometry step between two epochs, evaluated at poses."""

    pos_vector: np.ndarray
    pos_moment: np.ndarray
    yaw_vector: np.ndarray
    yaw_moment: np.ndarray
    pos_map: np.ndarray
    pos_offset: np.ndarray
    yaw_map: np.ndarray
    yaw_offset: float

    @classmethod
    def from_poses(
        cls,
        previous: Pose,
        current: Pose,
        delta: np.ndarray,
        scenario: Scenario,
        yaws: tuple[float, float] | None = None,
    ) -> "InterEpochLift":
        """Evaluate the step lift; yaws optionally supplies the chain pair
        (previous, current) when a gauge other than the raw angles is used."""
        blocks = build_motion_blocks(delta, scenario)
        pos_vector = np.array([
            current.x, current.y,
            math.sin(previous.yaw), math.cos(previous.yaw),
            previous.x, previous.y,
        ])
        if yaws is None:
            yaws = (previous.yaw, current.yaw)
        yaw_vector = np.array([yaws[1], yaws[0]])
        return cls(
            pos_vector, np.outer(pos_vector, pos_vector),
            yaw_vector, np.outer(yaw_vector, yaw_vector),
            *blocks,
        )


def _bordered_term(size: int, border: int, entry: int) -> np.ndarray:
    mat = np.zeros((size, size))
    mat[border, entry] = 1.0
    mat[entry, border] = 1.0
    return mat


def _entry_term(size: int, i: int, j: int) -> np.ndarray:
    mat = np.zeros((size, size))
    mat[i, j] = 1.0
    mat[j, i] = 1.0
    return mat


def _corner_const(size: int) -> np.ndarray:
    mat = np.zeros((size, size))
    mat[size - 1, size - 1] = 1.0
    return mat


def _range_consistency_row(
    bundle: TdoaBundle, scenario: Scenario, epoch: int
) -> tuple[dict[int, float], float]:
    """Equality pinning the squared-range moment to the other lift moments.

    Expanding range^2 = |anchor - p_c - R lever|^2 expresses the F[4,4] entry
    through |p_c|^2 (moment trace plus the fixed height), the anchor-position
    inner products (linear in f), and the two bilinear terms anchor^T R lever
    and p_c^T R lever, whose yaw parts land on f and on moment entries.
    """
    vec = vectorize_rotation(scenario.attitude(0.0))
    alpha, gamma = vec.alpha, vec.gamma_mat
    ant, anc = bundle.reference
    anchor = scenario.anchors[anc]
    lever = scenario.levers[ant]
    h = scenario.h
    kron_ref = kronecker_row(lever, anchor)

    coeff_f = np.zeros(LIFT_DIM)
    coeff_moment = np.zeros((LIFT_DIM, LIFT_DIM))
    const = (
        anchor @ anchor + lever @ lever + h * h
        - 2.0 * anchor[2] * h
        - 2.0 * kron_ref @ alpha
    )
    coeff_moment[2, 2] += 1.0
    coeff_moment[3, 3] += 1.0
    coeff_f[LIFT_X] += -2.0 * anchor[0]
    coeff_f[LIFT_Y] += -2.0 * anchor[1]
    coeff_f[LIFT_SIN] += -2.0 * (kron_ref @ gamma[:, 0])
    coeff_f[LIFT_COS] += -2.0 * (kron_ref @ gamma[:, 1])
    # 2 p_c^T R lever, one body axis at a time.
    for axis in range(3):
        weight = 2.0 * lever[axis]
        if weight == 0.0:
            continue
        const += weight * h * alpha[3 * axis + 2]
        coeff_f[LIFT_X] += weight * alpha[3 * axis + 0]
        coeff_f[LIFT_Y] += weight * alpha[3 * axis + 1]
        coeff_f[LIFT_SIN] += weight * h * gamma[3 * axis + 2, 0]
        coeff_f[LIFT_COS] += weight * h * gamma[3 * axis + 2, 1]
        coeff_moment[0, 2] += weight * gamma[3 * axis + 0, 0]
        coeff_moment[1, 2] += weight * gamma[3 * axis + 0, 1]
        coeff_moment[0, 3] += weight * gamma[3 * axis + 1, 0]
        coeff_moment[1, 3] += weight * gamma[3 * axis + 1, 1]

    ms, vs = moment_slice(epoch), vector_slice(epoch)
    row: dict[int, float] = {ms.start + _uptri_index(LIFT_DIM, 4, 4): 1.0}
    for i in range(LIFT_DIM):
        for j in range(i, LIFT_DIM):
            value = coeff_moment[i, j]
            if value != 0.0:
                idx = ms.start + _uptri_index(LIFT_DIM, i, j)
                row[idx] = row.get(idx, 0.0) - value
    for i in range(LIFT_DIM):
        if coeff_f[i] != 0.0:
            row[vs.start + i] = -coeff_f[i]
    return row, const


def _step_border_vars(step: int) -> list[int]:
    prev = vector_slice(step - 1).start
    curr = vector_slice(step).start
    return [curr + LIFT_X, curr + LIFT_Y, prev + LIFT_SIN, prev + LIFT_COS,
            prev + LIFT_X, prev + LIFT_Y]


def build_sdp_window(
    bundles: Sequence[TdoaBundle],
    inter: Sequence[np.ndarray],
    scenario: Scenario,
    sigma_p: float | None = None,
    sigma_psi: float | None = None,
    clock_prior: float | None = None,
    measurements: Sequence[EpochMeasurements] | None = None,
    moment_damping: float = 1e-8,
) -> ConicProgram:
    """Assemble the lifted window program over K epochs.

    The objective is the weighted sum of all lifted squared residuals (with
    their constant terms kept, so a noiseless window bottoms out near zero),
    uniformly rescaled so its largest coefficient is one; the constraints are
    the unit direction trace, the range-consistency row, and one semidefinite
    block per lift.  Odometry appears from the second epoch on, sharing its
    border coordinates with the epoch lifts.

    moment_damping adds a penalty of that size (in the normalized units) on
    every moment diagonal that appears in no residual row and no equality.
    Such coordinates exist in benign layouts (level anchors leave the third
    body-row moment completely free), and the solver otherwise inflates them
    toward the analytic center, flooring the reported rank-one gap near 0.1.
    Data-bearing moments are never penalized: a penalty on the position
    moments, for instance, drags the estimate toward the reference anchor.
    """
    num_epochs = len(bundles)
    if num_epochs < 1:
        raise ValueError("a window needs at least one epoch")
    if len(inter) != num_epochs - 1:
        raise ValueError("expected one odometry step per epoch after the first")
    total_rows = sum(b.num_tdoas for b in bundles)
    if total_rows < 3 * num_epochs:
        raise InsufficientMeasurements(
            f"{total_rows} differenced rows cannot determine {3 * num_epochs} pose unknowns"
        )
    if sigma_p is None:
        sigma_p = scenario.sigma_p
    if sigma_psi is None:
        sigma_psi = scenario.sigma_psi
    if num_epochs >= 2 and (sigma_p <= 0.0 or sigma_psi <= 0.0):
        raise ValueError("odometry weighting needs positive sigma_p and sigma_psi")

    program = ConicProgram(window_variable_count(num_epochs))
    cost = np.zeros(program.num_vars)
    offset = 0.0
    iu8 = np.triu_indices(LIFT_DIM)
    scale8 = np.where(iu8[0] == iu8[1], 1.0, 2.0)

    for k, bundle in enumerate(bundles):
        raw = measurements[k] if measurements is not None else None
        blocks = build_toa_blocks(bundle, scenario, k, clock_prior, raw)
        quad = blocks.coefficients.T @ blocks.weight @ blocks.coefficients
        lin = blocks.coefficients.T @ blocks.weight @ blocks.constants
        offset += blocks.constants @ blocks.weight @ blocks.constants
        ms, vs = moment_slice(k), vector_slice(k)
        cost[ms] += scale8 * quad[iu8]
        cost[vs] += -2.0 * lin

        block = program.add_psd_block(LIFT_DIM + 1, const=_corner_const(LIFT_DIM + 1))
        for t, (i, j) in enumerate(zip(*iu8)):
            program.add_block_term(block, ms.start + t, _entry_term(LIFT_DIM + 1, i, j))
        for i in range(LIFT_DIM):
            program.add_block_term(block, vs.start + i, _bordered_term(LIFT_DIM + 1, LIFT_DIM, i))

        program.add_equality(
            {ms.start + _uptri_index(LIFT_DIM, 0, 0): 1.0,
             ms.start + _uptri_index(LIFT_DIM, 1, 1): 1.0},
            1.0,
        )
        row, rhs = _range_consistency_row(bundle, scenario, k)
        program.add_equality(row, rhs)

    if num_epochs >= 2:
        program.add_equality({yaw_index(0, num_epochs): 1.0}, 0.0)
        iu6 = np.triu_indices(_STEP_DIM)
        scale6 = np.where(iu6[0] == iu6[1], 1.0, 2.0)
        iu2 = np.triu_indices(2)
        scale2 = np.where(iu2[0] == iu2[1], 1.0, 2.0)
        pos_weight = np.eye(2) / (sigma_p * sigma_p)
        yaw_weight = 1.0 / (sigma_psi * sigma_psi)

        for step in range(1, num_epochs):
            blocks = build_motion_blocks(inter[step - 1], scenario)
            quad = blocks.pos_map.T @ pos_weight @ blocks.pos_map
            lin = blocks.pos_map.T @ pos_weight @ blocks.pos_offset
            offset += blocks.pos_offset @ pos_weight @ blocks.pos_offset
            sl = motion_moment_slice(step, num_epochs)
            cost[sl] += scale6 * quad[iu6]
            border = _step_border_vars(step)
            for t, var in enumerate(border):
                cost[var] += -2.0 * lin[t]
            block = program.add_psd_block(_STEP_DIM + 1, const=_corner_const(_STEP_DIM + 1))
            for t, (i, j) in enumerate(zip(*iu6)):
                program.add_block_term(block, sl.start + t, _entry_term(_STEP_DIM + 1, i, j))
            for t, var in enumerate(border):
                program.add_block_term(block, var, _bordered_term(_STEP_DIM + 1, _STEP_DIM, t))

            quad_yaw = yaw_weight * np.array([[1.0, -1.0], [-1.0, 1.0]])
            lin_yaw = yaw_weight * blocks.yaw_offset * blocks.yaw_map
            offset += yaw_weight * blocks.yaw_offset * blocks.yaw_offset
            yl = yaw_moment_slice(step, num_epochs)
            cost[yl] += scale2 * quad_yaw[iu2]
            chain = [yaw_index(step, num_epochs), yaw_index(step - 1, num_epochs)]
            for t, var in enumerate(chain):
                cost[var] += -2.0 * lin_yaw[t]
            block = program.add_psd_block(3, const=_corner_const(3))
            for t, (i, j) in enumerate(zip(*iu2)):
                program.add_block_term(block, yl.start + t, _entry_term(3, i, j))
            for t, var in enumerate(chain):
                program.add_block_term(block, var, _bordered_term(3, 2, t))

    # Normalize so the solver sees O(1) data; a uniform rescale leaves the
    # minimizer and every relative weight untouched.
    scale = max(1.0, float(np.max(np.abs(cost))), abs(offset))
    cost /= scale
    offset /= scale
    if moment_damping > 0.0:
        eq_rows, _ = program.equalities
        touched = np.abs(cost) > 0.0
        if eq_rows.size:
            touched |= np.any(np.abs(eq_rows) > 0.0, axis=0)
        diag_indices = []
        for k in range(num_epochs):
            base = moment_slice(k).start
            diag_indices += [base + _uptri_index(LIFT_DIM, i, i) for i in range(LIFT_DIM)]
        for step in range(1, num_epochs):
            base = motion_moment_slice(step, num_epochs).start
            diag_indices += [base + _uptri_index(_STEP_DIM, i, i) for i in range(_STEP_DIM)]
            base = yaw_moment_slice(step, num_epochs).start
            diag_indices += [base + _uptri_index(2, i, i) for i in range(2)]
        for idx in diag_indices:
            if not touched[idx]:
                cost[idx] += moment_damping

    program.set_objective(cost, offset)
    return program


def solve_window(
    bundles: Sequence[TdoaBundle],
    inter: Sequence[np.ndarray],
    scenario: Scenario,
    sigma_p: float | None = None,
    sigma_psi: float | None = None,
    clock_prior: float | None = None,
    measurements: Sequence[EpochMeasurements] | None = None,
    moment_damping: float = 1e-8,
    corner_pull: float = 1e-3,
    tol: float = 1e-9,
    max_iter: int = 60,
    backend=None,
) -> ConicSolution:
    """Build and solve the window relaxation, cornering the flat directions.

    With zero noise the relaxation's optimal set is a flat face: the true
    trajectory is one of its extreme points, but an interior-point solver
    drifts to the face's analytic center, a few centimetres away.  A second
    solve therefore adds a tiny linear reward (corner_pull, in the normalized
    objective units) on each epoch's heading direction, aligned with the
    first solve's estimate.  The reward is maximized at an extreme point, so
    the second solve lands on the rank-one corner nearest the data optimum.
    Noise breaks the degeneracy and makes the pull inconsequential, so it is
    safe to leave on; corner_pull=0 skips the second solve.

    A solver that runs out of iterations still returns its best iterate; any
    other failure of the second solve falls back to the first solution.  The
    default tol suits the bundled solver; external backends tend to stop
    short of 1e-9 and are better run around 1e-7.
    """

    def build():
        return build_sdp_window(
            bundles,
            inter,
            scenario,
            sigma_p=sigma_p,
            sigma_psi=sigma_psi,
            clock_prior=clock_prior,
            measurements=measurements,
            moment_damping=moment_damping,
        )

    def attempt(program):
        try:
            return solve(program, tol_feas=tol, tol_gap=tol, max_iter=max_iter, backend=backend)
        except MaxIterations as exc:
            return exc.solution

    first = attempt(build())
    if corner_pull <= 0.0:
        return first
    program = build()
    cost = program.objective.copy()
    pulled = False
    for k in range(len(bundles)):
        start = vector_slice(k).start
        direction = np.array([first.y[start + LIFT_SIN], first.y[start + LIFT_COS]])
        norm = float(np.linalg.norm(direction))
        if norm < 1e-9:
            continue
        cost[start + LIFT_SIN] -= corner_pull * direction[0] / norm
        cost[start + LIFT_COS] -= corner_pull * direction[1] / norm
        pulled = True
    if not pulled:
        return first
    program.set_objective(cost, program.objective_constant)
    try:
        return attempt(program)
    except Exception:
        return first


def extract_poses(
    solution: ConicSolution,
    num_epochs: int,
    scenario: Scenario | None = None,
    mode: str = "border",
) -> list[Pose]:
    """Read a pose per epoch out of a solved window.

    The border mode takes the lift vector directly; the eigenvector mode
    rescales the dominant eigenvector of the bordered moment matrix first.
    Yaw comes from atan2 of the direction pair, so it is immune to the
    chain gauge.
    """
    if mode not in ("border", "eigenvector"):
        raise ValueError(f"unknown extraction mode {mode!r}")
    roll = scenario.roll if scenario is not None else 0.0
    pitch = scenario.pitch if scenario is not None else 0.0
    height = scenario.h if scenario is not None else 0.0
    poses = []
    for k in range(num_epochs):
        f = solution.y[vector_slice(k)]
        if mode == "eigenvector":
            bordered = np.zeros((LIFT_DIM + 1, LIFT_DIM + 1))
            bordered[:LIFT_DIM, :LIFT_DIM] = unpack_symmetric(
                solution.y[moment_slice(k)], LIFT_DIM
            )
            bordered[LIFT_DIM, :LIFT_DIM] = f
            bordered[:LIFT_DIM, LIFT_DIM] = f
            bordered[LIFT_DIM, LIFT_DIM] = 1.0
            _, vecs = np.linalg.eigh(bordered)
            principal = vecs[:, -1]
            if abs(principal[LIFT_DIM]) < 1e-6:
                raise DegenerateLift(f"epoch {k}: dominant eigenvector has no affine part")
            f = principal[:LIFT_DIM] / principal[LIFT_DIM]
        direction = math.hypot(f[LIFT_SIN], f[LIFT_COS])
        if direction < 0.1:
            raise DegenerateLift(
                f"epoch {k}: yaw direction collapsed (|u| = {direction:.3g})"
            )
        yaw = math.atan2(f[LIFT_SIN], f[LIFT_COS])
        poses.append(Pose(float(f[LIFT_X]), float(f[LIFT_Y]), Attitude(yaw, roll, pitch), height))
    return poses


def rank_one_gaps(solution: ConicSolution, num_epochs: int) -> np.ndarray:
    """Second-to-first eigenvalue ratio of each epoch moment.

    Values near zero mean the relaxation is effectively rank one and the
    extracted poses are trustworthy."""
    gaps = np.empty(num_epochs)
    for k in range(num_epochs):
        moment = unpack_symmetric(solution.y[moment_slice(k)], LIFT_DIM)
        eigs = np.linalg.eigvalsh(moment)
        top = max(eigs[-1], 1e-300)
        gaps[k] = max(eigs[-2], 0.0) / top
    return gaps
