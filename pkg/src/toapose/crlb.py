"""Fisher information and estimation lower bounds for the pose window.

Everything here is evaluated at the true poses, which is the standard way to
tabulate a Cramer-Rao bound for a simulated scene.  The window information is
the sum of what the differenced ranges say about each epoch alone and what
the inter-epoch constraints say about adjacent pairs; inverting it bounds any
unbiased window estimator, and comparing its diagonal against the per-epoch
bounds quantifies how much the coupling buys.

Passing an infinite inter-epoch sigma is the supported way to switch the
coupling off: the corresponding rows get zero weight, no overflow involved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .frames import Pose
from .measurement import TdoaBundle
from .refine import linearize, _whiten
from .scenario import Scenario


class SingularFIM(RuntimeError):
    """The information matrix is numerically singular; no bound exists."""


_MAX_CONDITION = 1e12


@dataclass(frozen=True)
class FisherInfo:
    """Window information with its single-epoch decomposition.

    window is the full 3K-by-3K matrix; toa_only drops the inter-epoch rows
    and is block diagonal; single_epoch holds each epoch's own 3-by-3 block.
    The bound arrays are the diagonals of the respective inverses, ordered
    [x, y, yaw] per epoch."""

    window: np.ndarray
    toa_only: np.ndarray
    single_epoch: tuple[np.ndarray, ...]
    window_bound: np.ndarray
    single_epoch_bound: np.ndarray

    @property
    def num_epochs(self) -> int:
        return self.window.shape[0] // 3


def _invert_diag(matrix: np.ndarray, label: str) -> np.ndarray:
    w, V = np.linalg.eigh(matrix)
    if w[0] <= 0.0 or w[-1] / w[0] > _MAX_CONDITION:
        raise SingularFIM(
            f"{label} information matrix has eigenvalue range [{w[0]:.3e}, {w[-1]:.3e}]"
        )
    return np.einsum("ij,j,ij->i", V, 1.0 / w, V)


def fim_mema(
    poses: Sequence[Pose],
    bundles: Sequence[TdoaBundle],
    scenario: Scenario,
    sigma_p: float | None = None,
    sigma_psi: float | None = None,
) -> FisherInfo:
    """Window Fisher information at the given true poses.

    The bundles supply the differenced-range geometry and weighting; the
    inter-epoch structure is implied by the pose count.  sigma_p or sigma_psi
    of infinity zeroes the corresponding constraint weight.
    """
    num_epochs = len(poses)
    inter = [np.zeros(3)] * (num_epochs - 1)
    system = linearize(poses, bundles, inter, scenario, sigma_p, sigma_psi)
    A, _ = _whiten(system, bundles)
    toa = A[: system.num_toa_rows]
    full = A.T @ A
    toa_only = toa.T @ toa
    blocks = tuple(
        toa_only[3 * k : 3 * k + 3, 3 * k : 3 * k + 3].copy() for k in range(num_epochs)
    )
    single_bound = np.concatenate(
        [_invert_diag(blocks[k], f"epoch {k}") for k in range(num_epochs)]
    )
    return FisherInfo(
        window=full,
        toa_only=toa_only,
        single_epoch=blocks,
        window_bound=_invert_diag(full, "window"),
        single_epoch_bound=single_bound,
    )


def fim_sema(
    pose: Pose, bundle: TdoaBundle, scenario: Scenario
) -> tuple[np.ndarray, np.ndarray]:
    """Single-epoch information matrix and its bound diagonal."""
    system = linearize([pose], [bundle], [], scenario)
    A, _ = _whiten(system, [bundle])
    fim = A.T @ A
    return fim, _invert_diag(fim, "epoch")
