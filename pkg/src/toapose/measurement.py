"""TDOA formation, prediction, and noise covariance construction.

Raw per-epoch data is a set of TOA ranges contaminated by a common receiver
clock offset.  Differencing every TOA against one reference TOA cancels the
offset and leaves L = (total TOAs) - 1 TDOA values whose noise is correlated
through the shared reference; the resulting covariance is sigma^2 (I + 11^T).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .frames import Pose, antenna_position, rotation_matrix, wrap_angle

if TYPE_CHECKING:  # pragma: no cover
    from .scenario import Scenario

__all__ = [
    "InsufficientMeasurements",
    "EpochMeasurements",
    "TdoaBundle",
    "form_tdoa",
    "tdoa_covariance",
    "predict_tdoa",
    "predict_inter_epoch",
    "inter_epoch_covariance",
]


class InsufficientMeasurements(ValueError):
    """Raised when an epoch has too few TOAs to form any TDOA."""


@dataclass(frozen=True)
class EpochMeasurements:
    """One epoch of raw measurements.

    toas maps (antenna index, anchor index) to a TOA range in meters;
    visibility lists, per antenna, the anchor indices in stacking order; the
    keys of toas match the visibility sets exactly.  inter_epoch is the
    measured body-frame position change [dx, dy] plus yaw change relative to
    the previous epoch, or None for the first epoch of a trial.
    """

    epoch: int
    toas: dict[tuple[int, int], float]
    visibility: tuple[tuple[int, ...], ...]
    inter_epoch: np.ndarray | None = None

    def __post_init__(self) -> None:
        expected = {(i, j) for i, anchors in enumerate(self.visibility) for j in anchors}
        if set(self.toas.keys()) != expected:
            raise ValueError("toas keys must match the visibility sets exactly")
        if self.inter_epoch is not None and np.shape(self.inter_epoch) != (3,):
            raise ValueError("inter_epoch must be a 3-vector [dx, dy, dyaw]")

    def pairs(self) -> list[tuple[int, int]]:
        """(antenna, anchor) pairs in antenna-then-anchor stacking order."""
        return [(i, j) for i, anchors in enumerate(self.visibility) for j in anchors]

    @property
    def num_toas(self) -> int:
        return len(self.toas)


@dataclass(frozen=True)
class TdoaBundle:
    """Differenced measurements for one epoch.

    values[r] is the TOA of rows[r] minus the TOA of the reference pair.  The
    selection matrix maps the stacked TOA vector (reference first) to the
    TDOA vector and determines the covariance.
    """

    reference: tuple[int, int]
    values: np.ndarray
    rows: tuple[tuple[int, int], ...]
    covariance: np.ndarray
    selection: np.ndarray

    def __post_init__(self) -> None:
        L = len(self.rows)
        if self.values.shape != (L,) or self.covariance.shape != (L, L):
            raise ValueError("inconsistent TDOA bundle shapes")
        if self.selection.shape != (L, L + 1):
            raise ValueError("selection matrix must be L x (L+1)")

    @property
    def num_tdoas(self) -> int:
        return len(self.rows)


def tdoa_covariance(num_tdoas: int, sigma: float) -> np.ndarray:
    """Covariance of TDOAs sharing one reference: sigma^2 (I + 11^T)."""
    return sigma**2 * (np.eye(num_tdoas) + np.ones((num_tdoas, num_tdoas)))


def form_tdoa(epoch: EpochMeasurements, sigma: float) -> TdoaBundle:
    """Difference all TOAs of an epoch against the first one.

    The reference is the first (antenna, anchor) pair in antenna-then-anchor
    order; which pair plays reference is arbitrary as far as the estimators
    are concerned, but fixing it keeps row bookkeeping reproducible.
    """
    pairs = epoch.pairs()
    if len(pairs) < 2:
        raise InsufficientMeasurements(
            f"epoch {epoch.epoch}: need at least 2 TOAs to form a TDOA, got {len(pairs)}"
        )
    reference = pairs[0]
    rows = tuple(pairs[1:])
    ref_toa = epoch.toas[reference]
    values = np.array([epoch.toas[p] - ref_toa for p in rows])
    L = len(rows)
    selection = np.hstack([-np.ones((L, 1)), np.eye(L)])
    return TdoaBundle(
        reference=reference,
        values=values,
        rows=rows,
        covariance=tdoa_covariance(L, sigma),
        selection=selection,
    )


def predict_tdoa(pose: Pose, bundle: TdoaBundle, scenario: "Scenario") -> np.ndarray:
    """Noise-free TDOA vector implied by a pose, aligned with bundle.rows."""
    anchors = scenario.anchors
    ref_i, ref_j = bundle.reference
    ref_antenna = antenna_position(pose, scenario.levers[ref_i])
    ref_range = float(np.linalg.norm(anchors[ref_j] - ref_antenna))
    out = np.empty(bundle.num_tdoas)
    antenna_cache: dict[int, np.ndarray] = {ref_i: ref_antenna}
    for r, (i, j) in enumerate(bundle.rows):
        if i not in antenna_cache:
            antenna_cache[i] = antenna_position(pose, scenario.levers[i])
        out[r] = np.linalg.norm(anchors[j] - antenna_cache[i]) - ref_range
    return out


def predict_inter_epoch(pose_k: Pose, pose_km1: Pose) -> np.ndarray:
    """Body-frame position change and yaw change between consecutive poses.

    The position change is expressed in the frame of the earlier pose; only
    its in-plane components are observable (constant height), so the output
    is [dx_body, dy_body, dyaw] with dyaw wrapped to (-pi, pi].
    """
    delta = pose_k.center - pose_km1.center
    body = rotation_matrix(pose_km1.attitude).T @ delta
    return np.array([body[0], body[1], wrap_angle(pose_k.yaw - pose_km1.yaw)])


def inter_epoch_covariance(sigma_p: float, sigma_psi: float) -> np.ndarray:
    """Covariance of one inter-epoch measurement."""
    return np.diag([sigma_p**2, sigma_p**2, sigma_psi**2])
