"""Semidefinite programming: problem container and interior-point solver.

A ConicProgram holds a linear objective over scalar variables y, affine
equality constraints, and PSD constraints on matrix blocks that depend
affinely on y (linear matrix inequalities).  That is exactly the shape of the
lifted initialization problem, and general enough for cross-checks.

The built-in solver eliminates the equalities through a nullspace
parameterization and embeds the remaining LMI problem as the dual side of a
standard-form SDP pair, which it solves with a homogeneous self-dual
interior-point method (Nesterov-Todd scaling, Mehrotra predictor-corrector).
The homogeneous embedding needs no feasible starting point and detects
infeasibility through the tau/kappa certificates.  A pluggable backend hook
lets an external conic solver take the embedded standard form instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

logger = logging.getLogger(__name__)

__all__ = [
    "ConicError",
    "Infeasible",
    "MaxIterations",
    "ConicProgram",
    "ConicSolution",
    "StandardForm",
    "solve",
    "builtin_backend",
    "cvxopt_backend",
    "dump_program",
    "load_program",
]


class ConicError(Exception):
    """Base class for solver failures."""


class Infeasible(ConicError):
    """No PSD-feasible point exists (or the problem is unbounded below)."""


class MaxIterations(ConicError):
    """Iteration limit hit before reaching the requested tolerances.

    Carries the best iterate so callers can inspect how far the solve got.
    """

    def __init__(self, message: str, solution: "ConicSolution | None" = None):
        super().__init__(message)
        self.solution = solution


def _sym(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


@dataclass
class _Block:
    size: int
    const: np.ndarray
    coeff: dict[int, np.ndarray] = field(default_factory=dict)


class ConicProgram:
    """Linear objective + affine equalities + affine PSD block constraints."""

    def __init__(self, num_vars: int):
        if num_vars < 0:
            raise ValueError("num_vars must be nonnegative")
        self.num_vars = num_vars
        self.objective = np.zeros(num_vars)
        self.objective_constant = 0.0
        self._eq_rows: list[np.ndarray] = []
        self._eq_rhs: list[float] = []
        self.blocks: list[_Block] = []

    def set_objective(self, coeffs, constant: float = 0.0) -> None:
        c = np.zeros(self.num_vars)
        if isinstance(coeffs, dict):
            for idx, val in coeffs.items():
                c[self._check_var(idx)] = float(val)
        else:
            arr = np.asarray(coeffs, dtype=float)
            if arr.shape != (self.num_vars,):
                raise ValueError("objective vector has wrong length")
            c = arr.copy()
        self.objective = c
        self.objective_constant = float(constant)

    def add_equality(self, coeffs, rhs: float) -> None:
        """Add sum_i coeffs[i] * y_i == rhs."""
        row = np.zeros(self.num_vars)
        if isinstance(coeffs, dict):
            for idx, val in coeffs.items():
                row[self._check_var(idx)] += float(val)
        else:
            arr = np.asarray(coeffs, dtype=float)
            if arr.shape != (self.num_vars,):
                raise ValueError("equality row has wrong length")
            row = arr.copy()
        self._eq_rows.append(row)
        self._eq_rhs.append(float(rhs))

    def add_psd_block(self, size: int, const=None) -> int:
        """Declare a PSD block; returns its index for add_block_term calls."""
        if size < 0:
            raise ValueError("block size must be nonnegative")
        c = np.zeros((size, size)) if const is None else _sym(np.asarray(const, dtype=float))
        if c.shape != (size, size):
            raise ValueError("block constant has wrong shape")
        self.blocks.append(_Block(size=size, const=c))
        return len(self.blocks) - 1

    def add_block_term(self, block: int, var: int, matrix) -> None:
        """Add y[var] * matrix to an existing block's affine map."""
        blk = self.blocks[block]
        var = self._check_var(var)
        mat = _sym(np.asarray(matrix, dtype=float))
        if mat.shape != (blk.size, blk.size):
            raise ValueError("block coefficient has wrong shape")
        if var in blk.coeff:
            blk.coeff[var] = blk.coeff[var] + mat
        else:
            blk.coeff[var] = mat

    def _check_var(self, idx: int) -> int:
        idx = int(idx)
        if not 0 <= idx < self.num_vars:
            raise ValueError(f"variable index {idx} out of range [0, {self.num_vars})")
        return idx

    @property
    def equalities(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._eq_rows:
            return np.zeros((0, self.num_vars)), np.zeros(0)
        return np.stack(self._eq_rows), np.array(self._eq_rhs)

    def block_value(self, block: int, y: np.ndarray) -> np.ndarray:
        blk = self.blocks[block]
        out = blk.const.copy()
        for var, mat in blk.coeff.items():
            out += y[var] * mat
        return out

    def evaluate_objective(self, y: np.ndarray) -> float:
        return float(self.objective @ y + self.objective_constant)


@dataclass(frozen=True)
class ConicSolution:
    """Solver output: variable values plus optimality diagnostics."""

    y: np.ndarray
    objective: float
    status: str
    primal_residual: float
    gap: float
    iterations: int
    min_block_eig: float


@dataclass(frozen=True)
class StandardForm:
    """Embedded standard-form SDP pair shared with pluggable backends.

    Primal: min <C, X> s.t. <A_i, X> = b_i, X in PSD(block_sizes).
    The original LMI problem is the dual side; its variable is y.
    """

    block_sizes: tuple[int, ...]
    coeff: tuple[np.ndarray, ...]  # per block: (m, s, s) tensor of A_i chunks
    const: tuple[np.ndarray, ...]  # per block: C chunk
    b: np.ndarray


Backend = Callable[[StandardForm, float, float, int], tuple[np.ndarray, str, float, float, int]]


def _equilibrate(sf: StandardForm, passes: int = 4) -> tuple[StandardForm, np.ndarray]:
    """Ruiz-style rescaling of the embedded pair.

    Lifted moment coordinates span several orders of magnitude (squared
    ranges next to unit entries), which drives the homogenizing tau toward
    zero and amplifies roundoff in the de-homogenized residuals until the
    solver's accuracy floor sits far above machine precision.  Per-block
    diagonal congruences D B D balance the block entries without disturbing
    PSD structure, and per-variable scales balance the coefficient columns.

    Returns (scaled form, var_scale); a backend solution z' of the scaled
    form maps back as z = var_scale * z'.
    """
    m = sf.b.shape[0]
    coeff = [A.copy() for A in sf.coeff]
    const = [C.copy() for C in sf.const]
    var_scale = np.ones(m)
    for _ in range(passes):
        for k, size in enumerate(sf.block_sizes):
            mag = np.abs(const[k])
            if m:
                mag = np.maximum(mag, np.max(np.abs(coeff[k]), axis=0))
            row_max = np.maximum(mag.max(axis=1), 1e-300)
            d = 1.0 / np.sqrt(np.sqrt(row_max))
            d[row_max < 1e-150] = 1.0
            const[k] = d[:, None] * const[k] * d[None, :]
            coeff[k] = d[None, :, None] * coeff[k] * d[None, None, :]
        col_max = np.zeros(m)
        for k in range(len(coeff)):
            if m:
                col_max = np.maximum(col_max, np.abs(coeff[k]).max(axis=(1, 2)))
        sv = 1.0 / np.sqrt(np.maximum(col_max, 1e-300))
        sv[col_max < 1e-150] = 1.0
        for k in range(len(coeff)):
            coeff[k] = sv[:, None, None] * coeff[k]
        var_scale *= sv
    b = sf.b * var_scale
    norm_b = float(np.linalg.norm(b))
    if norm_b > 1.0:
        b = b / norm_b
    scaled = StandardForm(
        block_sizes=sf.block_sizes,
        coeff=tuple(coeff),
        const=tuple(const),
        b=b,
    )
    return scaled, var_scale


# ---------------------------------------------------------------------------
# Homogeneous self-dual interior-point engine


def _factor_psd(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor a nominally positive definite matrix as M = L L^T.

    Returns (L, L_inv).  Cholesky when the matrix is numerically definite;
    otherwise an eigendecomposition with eigenvalues floored just above zero,
    which keeps the interior-point iteration alive when an iterate grazes the
    cone boundary.
    """
    try:
        L = np.linalg.cholesky(M)
        return L, np.linalg.inv(L)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(_sym(M))
        floor = max(float(w[-1]), 1.0) * 1e-14
        w = np.maximum(w, floor)
        sqrt_w = np.sqrt(w)
        return V * sqrt_w[None, :], (V / sqrt_w[None, :]).T


def _nt_scaling(X: np.ndarray, S: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nesterov-Todd scaling factors for one block.

    Returns (G, G_inv, d) with X = G diag(d) G^T, S = G^-T diag(d) G^-1,
    so both scaled variables equal diag(d).
    """
    Lx, Lx_inv = _factor_psd(X)
    Ls, _ = _factor_psd(S)
    U, dvals, Vt = np.linalg.svd(Ls.T @ Lx)
    sqrt_d = np.sqrt(np.maximum(dvals, 1e-300))
    G = Lx @ Vt.T / sqrt_d[None, :]
    G_inv = (sqrt_d[:, None] * Vt) @ Lx_inv
    return G, G_inv, dvals


def _max_step(L_inv_times: np.ndarray) -> float:
    """Largest alpha with I + alpha * M >= 0 for symmetric M (in scaled space)."""
    w = np.linalg.eigvalsh(_sym(L_inv_times))
    lam = w[0]
    if lam >= 0.0:
        return np.inf
    return -1.0 / lam


def _hsd_solve(
    sf: StandardForm, tol_feas: float, tol_gap: float, max_iter: int
) -> tuple[np.ndarray, str, float, float, int]:
    """Solve the embedded pair; return (y, status, primal_res, gap, iters).

    status is one of 'optimal', 'max-iter', 'primal-infeasible',
    'dual-infeasible'.  y is the dual variable (the LMI problem's variable in
    the eliminated coordinates); on infeasible statuses y is meaningless.
    """
    sizes = [s for s in sf.block_sizes]
    nblk = len(sizes)
    m = sf.b.shape[0]
    b = sf.b
    C = [sf.const[k] for k in range(nblk)]
    A = [sf.coeff[k] for k in range(nblk)]  # (m, s, s)
    nu = sum(sizes) + 1

    def op_A(Xb):
        out = np.zeros(m)
        for k in range(nblk):
            out += np.einsum("ikl,kl->i", A[k], Xb[k])
        return out

    def op_At(y):
        return [np.einsum("i,ikl->kl", y, A[k]) for k in range(nblk)]

    X = [np.eye(s) for s in sizes]
    S = [np.eye(s) for s in sizes]
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0

    norm_b = 1.0 + np.linalg.norm(b)
    norm_C = 1.0 + math.sqrt(sum(float(np.sum(Ck * Ck)) for Ck in C))

    best = (y.copy(), np.inf, np.inf, np.inf)
    best_seen = np.inf
    progress_ref = np.inf
    stall_count = 0
    status = "max-iter"
    iters = 0
    rel_p = rel_d = rel_g = np.inf

    for iteration in range(max_iter):
        iters = iteration
        # residuals of the homogeneous model
        AX = op_A(X)
        Aty = op_At(y)
        p_res = AX - b * tau
        d_res = [Aty[k] + S[k] - C[k] * tau for k in range(nblk)]
        CX = sum(float(np.sum(C[k] * X[k])) for k in range(nblk))
        by = float(b @ y)
        g_res = CX - by + kappa
        mu = (sum(float(np.sum(X[k] * S[k])) for k in range(nblk)) + tau * kappa) / nu

        # convergence bookkeeping on the de-homogenized iterate
        rel_p = np.linalg.norm(AX / tau - b) / norm_b
        rel_d = math.sqrt(
            sum(float(np.sum((Aty[k] / tau + S[k] / tau - C[k]) ** 2)) for k in range(nblk))
        ) / norm_C
        pobj = CX / tau
        dobj = by / tau
        rel_g = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        if rel_p <= tol_feas and rel_d <= tol_feas and rel_g <= tol_gap:
            status = "optimal"
            break
        score = rel_p + rel_d + rel_g
        if score < best_seen:
            best_seen = score
            best = (y / tau, rel_p, rel_d, rel_g)
        if score < 0.9 * progress_ref:
            progress_ref = score
            stall_count = 0
        else:
            stall_count += 1
        # complementarity at the numerical floor, or many iterations without
        # measurable progress: no further digits are reachable
        if mu <= 0.0 or stall_count >= 10:
            break
        # infeasibility detection: tau collapsing relative to kappa
        if tau < 1e-12 * max(1.0, kappa) or (mu < 1e-14 and tau < 1e-8 * kappa):
            if by > 0:
                status = "primal-infeasible"
            elif CX < 0:
                status = "dual-infeasible"
            else:
                status = "primal-infeasible"
            break

        # NT scaling per block
        Gs, Gis, ds = [], [], []
        try:
            for k in range(nblk):
                G, Gi, d = _nt_scaling(X[k], S[k])
                Gs.append(G)
                Gis.append(Gi)
                ds.append(d)
        except np.linalg.LinAlgError:
            status = "max-iter"
            break

        # Schur system M = V V^T with V stacking T_i = G^T A_i G per block.
        # Solved through QR of the stacked V^T (with Tikhonov rows standing in
        # for light regularization): the triangular factor sees cond(V), not
        # cond(V)^2, which keeps directions usable deep into the endgame where
        # the plain normal-equations Cholesky loses every digit.
        T = [np.einsum("ab,iac,cd->ibd", Gs[k], A[k], Gs[k], optimize=True) for k in range(nblk)]
        V = np.concatenate([T[k].reshape(m, -1) for k in range(nblk)], axis=1)
        col_norm = float(np.max(np.sum(V * V, axis=1))) if m else 0.0
        # pin only directions below roundoff relative to the dominant ones
        reg = 1e-28 * (1.0 + col_norm)
        R = None
        for _ in range(6):
            stacked = np.concatenate([V.T, math.sqrt(reg) * np.eye(m)], axis=0)
            R = np.linalg.qr(stacked, mode="r")
            diag = np.abs(np.diag(R))
            if np.all(np.isfinite(diag)) and np.min(diag) > 0.0:
                break
            reg *= 100.0

        def schur_solve(rhs):
            w = solve_triangular(R.T, rhs, lower=True)
            sol = solve_triangular(R, w, lower=False)
            # one refinement round against the unregularized V V^T
            resid = rhs - V @ (V.T @ sol)
            w = solve_triangular(R.T, resid, lower=True)
            return sol + solve_triangular(R, w, lower=False)

        WCW = [Gs[k] @ (Gs[k].T @ C[k] @ Gs[k]) @ Gs[k].T for k in range(nblk)]
        h = op_A(WCW)
        cWCW = sum(float(np.sum(C[k] * WCW[k])) for k in range(nblk))

        u2 = schur_solve(h + b)
        denom = float((h - b) @ u2) - cWCW - kappa / tau
        zero_blocks = [np.zeros((s, s)) for s in sizes]

        def newton(rp, rd, rg, Rc, rhs_tau):
            """Solve one Newton system of the homogeneous model.

            Rows: A dX - b dtau = -rp; A^T dy + dS - C dtau = -rd (per block);
            <C,dX> - b@dy + dkappa = -rg; scaled complementarity targets Rc and
            tau*dkappa + kappa*dtau = rhs_tau.
            """
            Wd = [Gs[k] @ (Gs[k].T @ rd[k] @ Gs[k]) @ Gs[k].T for k in range(nblk)]
            AWd = op_A(Wd)
            cWd = sum(float(np.sum(C[k] * Wd[k])) for k in range(nblk))
            Xc = [Gs[k] @ _lam_div(Rc[k], ds[k]) @ Gs[k].T for k in range(nblk)]
            AXc = op_A(Xc)
            cXc = sum(float(np.sum(C[k] * Xc[k])) for k in range(nblk))
            r1 = -rp - AXc - AWd
            r2 = -rg - cXc - cWd - rhs_tau / tau
            u1 = schur_solve(r1)
            dtau = (r2 - float((h - b) @ u1)) / denom
            dy = u1 + u2 * dtau
            Atdy = op_At(dy)
            dS = [C[k] * dtau - Atdy[k] - rd[k] for k in range(nblk)]
            dX = [Xc[k] - Gs[k] @ (Gs[k].T @ dS[k] @ Gs[k]) @ Gs[k].T for k in range(nblk)]
            dkappa = (rhs_tau - kappa * dtau) / tau
            return dX, dy, dS, dtau, dkappa

        def directions(Rc, rhs_tau):
            """Newton solve plus one full-system refinement pass.

            The construction satisfies the dual and complementarity rows to
            roundoff; the Schur solve error lands in the primal and gap rows,
            amplified through W when the iterate sits near the cone boundary.
            Re-solving against the measured row residuals corrects dX where a
            tighter Schur solve alone cannot.
            """
            dX, dy, dS, dtau, dkappa = newton(p_res, d_res, g_res, Rc, rhs_tau)
            rr1 = op_A(dX) - b * dtau + p_res
            rr3 = (
                sum(float(np.sum(C[k] * dX[k])) for k in range(nblk))
                - float(b @ dy)
                + dkappa
                + g_res
            )
            cX, cy, cS, ctau, ckappa = newton(rr1, zero_blocks, rr3, zero_blocks, 0.0)
            dX = [dX[k] + cX[k] for k in range(nblk)]
            dS = [dS[k] + cS[k] for k in range(nblk)]
            return dX, dy + cy, dS, dtau + ctau, dkappa + ckappa

        # predictor (affine scaling) direction
        Rc_aff = [-np.diag(ds[k] ** 2) for k in range(nblk)]
        dXa, dya, dSa, dtaua, dkappaa = directions(Rc_aff, -tau * kappa)

        alpha_aff = _step_length(X, S, dXa, dSa, Gs, Gis, ds, tau, kappa, dtaua, dkappaa, 1.0)
        mu_aff = (
            sum(
                float(np.sum((X[k] + alpha_aff * dXa[k]) * (S[k] + alpha_aff * dSa[k])))
                for k in range(nblk)
            )
            + (tau + alpha_aff * dtaua) * (kappa + alpha_aff * dkappaa)
        ) / nu
        sigma = min(1.0, max(0.0, (mu_aff / mu))) ** 3

        # corrector
        Rc = []
        for k in range(nblk):
            dXhat = Gis[k] @ dXa[k] @ Gis[k].T
            dShat = Gs[k].T @ dSa[k] @ Gs[k]
            Rc.append(sigma * mu * np.eye(sizes[k]) - np.diag(ds[k] ** 2) - _sym(dXhat @ dShat))
        rhs_tau = sigma * mu - tau * kappa - dtaua * dkappaa
        dX, dy, dS, dtau, dkappa = directions(Rc, rhs_tau)

        alpha = _step_length(X, S, dX, dS, Gs, Gis, ds, tau, kappa, dtau, dkappa, 0.98)
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(
                "it=%d mu=%.3e tau=%.3e kappa=%.3e alpha=%.3e sigma=%.3e "
                "rel_p=%.3e rel_d=%.3e rel_g=%.3e reg=%.1e",
                iteration, mu, tau, kappa, alpha, sigma, rel_p, rel_d, rel_g, reg,
            )
        if not np.isfinite(alpha) or alpha <= 1e-14:
            status = "max-iter"
            break

        X = [_sym(X[k] + alpha * dX[k]) for k in range(nblk)]
        S = [_sym(S[k] + alpha * dS[k]) for k in range(nblk)]
        y = y + alpha * dy
        tau += alpha * dtau
        kappa += alpha * dkappa
    else:
        iters = max_iter

    if status == "optimal":
        return y / tau, status, float(rel_p), float(rel_g), iters + 1
    if status in ("primal-infeasible", "dual-infeasible"):
        return y, status, float(rel_p), float(rel_g), iters + 1
    return best[0], "max-iter", float(best[1]), float(best[3]), iters + 1


def _lam_div(Rc: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve D o Z = Rc for Z with D = diag(d): elementwise divide."""
    denom = 0.5 * (d[:, None] + d[None, :])
    return Rc / denom


def _step_length(X, S, dX, dS, Gs, Gis, ds, tau, kappa, dtau, dkappa, gamma) -> float:
    alpha = np.inf
    for k in range(len(X)):
        scale = 1.0 / np.sqrt(ds[k])
        dXhat = Gis[k] @ dX[k] @ Gis[k].T
        dShat = Gs[k].T @ dS[k] @ Gs[k]
        alpha = min(alpha, _max_step(scale[:, None] * dXhat * scale[None, :]))
        alpha = min(alpha, _max_step(scale[:, None] * dShat * scale[None, :]))
    if dtau < 0:
        alpha = min(alpha, -tau / dtau)
    if dkappa < 0:
        alpha = min(alpha, -kappa / dkappa)
    if not np.isfinite(alpha):
        return 1.0 if gamma >= 1.0 else gamma
    return min(1.0, gamma * alpha)


def builtin_backend() -> Backend:
    """The in-package homogeneous self-dual interior-point backend."""

    def run(sf: StandardForm, tol_feas: float, tol_gap: float, max_iter: int):
        return _hsd_solve(sf, tol_feas, tol_gap, max_iter)

    return run


def cvxopt_backend() -> Backend:
    """Adapter feeding the embedded standard form to cvxopt's SDP solver.

    Used as an independent cross-check in the test suite; requires cvxopt.
    """
    from cvxopt import matrix, solvers

    def run(sf: StandardForm, tol_feas: float, tol_gap: float, max_iter: int):
        m = sf.b.shape[0]
        # cvxopt.solvers.sdp: min c'x s.t. sum_i x_i mat(G[:, i]) <= h per
        # block.  Our LMI side reads sum_i y_i A_i <= C, so G columns are the
        # A_i chunks and h is the C chunk; the objective max b'y becomes -b.
        c = matrix(-sf.b)
        Gs, hs = [], []
        for k, s in enumerate(sf.block_sizes):
            if s == 0:
                continue
            cols = [sf.coeff[k][i].reshape(s * s, order="F") for i in range(m)]
            Gs.append(matrix(np.stack(cols, axis=1)))
            hs.append(matrix(sf.const[k]))
        opts = {
            "show_progress": False,
            "maxiters": max_iter,
            "abstol": tol_gap,
            "reltol": tol_gap,
            "feastol": tol_feas,
        }
        sol = solvers.sdp(c, Gs=Gs, hs=hs, options=opts)
        if sol["status"] == "optimal":
            y = np.array(sol["x"]).ravel()
            gap = float(sol["gap"]) if sol["gap"] is not None else np.nan
            return y, "optimal", float(sol["primal infeasibility"] or 0.0), gap, 0
        if sol["status"] == "primal infeasible":
            return np.zeros(m), "dual-infeasible", np.inf, np.inf, 0
        if sol["status"] == "dual infeasible":
            return np.zeros(m), "primal-infeasible", np.inf, np.inf, 0
        return np.zeros(m), "max-iter", np.inf, np.inf, 0

    return run


# ---------------------------------------------------------------------------
# Front end: equality elimination, embedding, solution assembly


def _eliminate_equalities(program: ConicProgram, tol: float):
    """Parameterize {y : Ay = b} as y0 + N z; returns (y0, N)."""
    A, b = program.equalities
    n = program.num_vars
    if A.shape[0] == 0:
        return np.zeros(n), np.eye(n)
    y0 = np.linalg.lstsq(A, b, rcond=None)[0]
    if np.linalg.norm(A @ y0 - b, ord=np.inf) > max(1e-8, tol) * (1.0 + np.linalg.norm(b, np.inf)):
        raise Infeasible("equality constraints are inconsistent")
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    cutoff = max(A.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    N = Vt[rank:].T
    return y0, N


def to_standard_form(program: ConicProgram, tol_feas: float = 1e-7):
    """Embed the LMI problem as the dual side of a standard-form pair.

    Returns (sf, y0, N, obj_shift): original variables are y0 + N z where z
    is the embedded dual variable.  The embedded objective b is normalized to
    unit length (the minimizer is invariant, and callers evaluate true
    objective values through the program), so the LMI objective equals
    -scale * b@z + obj_shift at the solution.
    """
    y0, N = _eliminate_equalities(program, tol_feas)
    mz = N.shape[1]
    coeff, const = [], []
    for blk in program.blocks:
        if blk.size == 0:
            continue
        # constant evaluated at y0, coefficients pushed through N
        c0 = blk.const.copy()
        tensor = np.zeros((program.num_vars, blk.size, blk.size))
        for var, mat in blk.coeff.items():
            c0 = c0 + y0[var] * mat
            tensor[var] = mat
        zc = np.einsum("vkl,vj->jkl", tensor, N, optimize=True)
        # dual form: sum z_j (-Cj) + S = C0
        coeff.append(-zc)
        const.append(c0)
    b = -(N.T @ program.objective)
    b_scale = float(np.linalg.norm(b))
    if b_scale > 1.0:
        b = b / b_scale
    sizes = tuple(c.shape[0] for c in const)
    sf = StandardForm(block_sizes=sizes, coeff=tuple(coeff), const=tuple(const), b=b)
    obj_shift = float(program.objective @ y0 + program.objective_constant)
    return sf, y0, N, obj_shift


def solve(
    program: ConicProgram,
    tol_feas: float = 1e-7,
    tol_gap: float = 1e-7,
    max_iter: int = 100,
    backend: Backend | None = None,
    tol_psd: float = 1e-6,
) -> ConicSolution:
    """Solve the program; raises Infeasible / MaxIterations on failure."""
    for blk in program.blocks:
        for var in blk.coeff:
            program._check_var(var)
    sf, y0, N, obj_shift = to_standard_form(program, tol_feas)
    if N.shape[1] == 0:
        y = y0
        min_eig = _min_block_eig(program, y)
        if min_eig < -tol_psd:
            raise Infeasible("equalities pin all variables at a PSD-violating point")
        return ConicSolution(
            y=y,
            objective=program.evaluate_objective(y),
            status="optimal",
            primal_residual=0.0,
            gap=0.0,
            iterations=0,
            min_block_eig=min_eig,
        )
    run = backend if backend is not None else builtin_backend()
    sf_scaled, var_scale = _equilibrate(sf)
    z, status, pres, gap, iters = run(sf_scaled, tol_feas, tol_gap, max_iter)
    z = var_scale * z
    if status in ("primal-infeasible", "dual-infeasible"):
        raise Infeasible(
            "no PSD-feasible point (or objective unbounded below)"
            if status == "primal-infeasible"
            else "PSD constraints are infeasible"
        )
    y = y0 + N @ z
    solution = ConicSolution(
        y=y,
        objective=program.evaluate_objective(y),
        status=status,
        primal_residual=pres,
        gap=gap,
        iterations=iters,
        min_block_eig=_min_block_eig(program, y),
    )
    if status != "optimal":
        raise MaxIterations(
            f"interior point did not reach tolerance in {max_iter} iterations", solution
        )
    return solution


def _min_block_eig(program: ConicProgram, y: np.ndarray) -> float:
    worst = np.inf
    for k, blk in enumerate(program.blocks):
        if blk.size == 0:
            continue
        w = np.linalg.eigvalsh(_sym(program.block_value(k, y)))
        worst = min(worst, float(w[0]))
    return 0.0 if worst is np.inf else worst


# ---------------------------------------------------------------------------
# Sparse text dump (triplet lists) for external cross-checking


def dump_program(program: ConicProgram, path) -> None:
    lines = [f"vars {program.num_vars}", f"objconst {float(program.objective_constant)!r}"]
    for i, v in enumerate(program.objective):
        if v != 0.0:
            lines.append(f"obj {i} {float(v)!r}")
    A, b = program.equalities
    for r in range(A.shape[0]):
        for ci in np.nonzero(A[r])[0]:
            lines.append(f"eq {r} {ci} {float(A[r, ci])!r}")
        lines.append(f"eqrhs {r} {float(b[r])!r}")
    for k, blk in enumerate(program.blocks):
        lines.append(f"block {k} {blk.size}")
        rows, cols = np.nonzero(np.triu(blk.const))
        for r, ci in zip(rows, cols):
            lines.append(f"bconst {k} {r} {ci} {float(blk.const[r, ci])!r}")
        for var in sorted(blk.coeff):
            mat = blk.coeff[var]
            rows, cols = np.nonzero(np.triu(mat))
            for r, ci in zip(rows, cols):
                lines.append(f"bcoef {k} {var} {r} {ci} {float(mat[r, ci])!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_program(path) -> ConicProgram:
    """Rebuild a program written by dump_program."""
    with open(path, "r", encoding="utf-8") as f:
        tokens = [line.split() for line in f if line.strip()]
    header = tokens[0]
    if header[0] != "vars":
        raise ValueError("dump must start with a vars line")
    prog = ConicProgram(int(header[1]))
    obj: dict[int, float] = {}
    eqs: dict[int, dict[int, float]] = {}
    rhs: dict[int, float] = {}
    consts: dict[int, dict] = {}
    for tok in tokens[1:]:
        kind = tok[0]
        if kind == "objconst":
            prog.objective_constant = float(tok[1])
        elif kind == "obj":
            obj[int(tok[1])] = float(tok[2])
        elif kind == "eq":
            eqs.setdefault(int(tok[1]), {})[int(tok[2])] = float(tok[3])
        elif kind == "eqrhs":
            rhs[int(tok[1])] = float(tok[2])
        elif kind == "block":
            prog.add_psd_block(int(tok[2]))
        elif kind == "bconst":
            k, r, ci, v = int(tok[1]), int(tok[2]), int(tok[3]), float(tok[4])
            blk = prog.blocks[k]
            blk.const[r, ci] = v
            blk.const[ci, r] = v
        elif kind == "bcoef":
            k, var, r, ci, v = int(tok[1]), int(tok[2]), int(tok[3]), int(tok[4]), float(tok[5])
            mat = np.zeros((prog.blocks[k].size, prog.blocks[k].size))
            mat[r, ci] = v
            mat[ci, r] = v
            prog.add_block_term(k, var, mat)
        else:
            raise ValueError(f"unknown dump record {kind!r}")
    for i, v in obj.items():
        prog.objective[i] = v
    for r in sorted(eqs):
        prog.add_equality(eqs[r], rhs.get(r, 0.0))
    return prog
