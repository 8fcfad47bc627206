"""Levenberg-Marquardt over the factor graph with Schur elimination of landmarks."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from cvxopt import cholmod, matrix, spmatrix

from ..exceptions import DivergedNaN, GaugeUnfixed, InvalidResidual, RankDeficient
from .core import DIMS, FactorGraph, Key, VariableKind, retract
from .factors import PriorNavStateFactor, PriorPoseFactor, ReprojectionFactor, reprojection_batch

log = logging.getLogger(__name__)

cholmod.options["supernodal"] = 2


@dataclass
class SolverOptions:
    lambda0: float = 1e-4
    lambda_up: float = 10.0
    lambda_down: float = 3.0
    max_iterations: int = 100
    relative_cost_tol: float = 1e-8
    step_tol: float = 1e-10
    max_lambda: float = 1e16
    max_rank_retries: int = 8
    linear_solver: str = "schur"  # or "dense"


@dataclass
class IterationRecord:
    iteration: int
    cost: float
    lam: float
    step_norm: float
    accepted: bool


@dataclass
class SolveReport:
    initial_cost: float
    final_cost: float
    iterations: int
    history: list = field(default_factory=list)
    termination: str = ""
    values: dict = field(default_factory=dict)
    factor_census: dict = field(default_factory=dict)
    skipped_factors: int = 0

    def accepted_costs(self) -> list[float]:
        return [self.initial_cost] + [h.cost for h in self.history if h.accepted]

    def to_dict(self) -> dict:
        return {
            "initial_cost": self.initial_cost,
            "final_cost": self.final_cost,
            "iterations": self.iterations,
            "termination": self.termination,
            "skipped_factors": self.skipped_factors,
            "factor_census": self.factor_census,
            "history": [
                {"iteration": h.iteration, "cost": h.cost, "lambda": h.lam, "step_norm": h.step_norm, "accepted": h.accepted}
                for h in self.history
            ],
        }


class _Ordering:
    """Column layout: free frame dims (nav states, extrinsics) first, then free landmarks."""

    def __init__(self, graph: FactorGraph):
        self.cols: dict[Key, np.ndarray] = {}
        self.full: dict[Key, np.ndarray] = {}  # length DIMS[kind], -1 where frozen
        F = 0
        self.frame_keys = []
        for key in graph.keys():
            if key.kind is VariableKind.LANDMARK:
                continue
            free = graph.free_dims(key)
            if len(free) == 0:
                continue
            self._assign(key, free, F)
            self.frame_keys.append(key)
            F += len(free)
        self.F = F
        self.landmark_keys = []
        n = F
        for key in graph.keys(VariableKind.LANDMARK):
            if graph.is_frozen(key):
                continue
            if key in graph.frozen and graph.frozen[key].any():
                raise ValueError("landmarks can only be frozen as a whole")
            self._assign(key, np.arange(3), n)
            self.landmark_keys.append(key)
            n += 3
        self.N = n
        self.L = len(self.landmark_keys)

    def _assign(self, key, free, start):
        cols = np.arange(start, start + len(free))
        self.cols[key] = cols
        full = -np.ones(DIMS[key.kind], dtype=np.int64)
        full[free] = cols
        self.full[key] = full


def _check_gauge(graph: FactorGraph):
    anchored = set()
    for key, mask in graph.frozen.items():
        if key.kind is VariableKind.NAV_STATE and mask[0:6].all():
            anchored.add(key)
    for f in graph.factors:
        if isinstance(f, (PriorPoseFactor, PriorNavStateFactor)) and f.keys[0].kind is VariableKind.NAV_STATE:
            anchored.add(f.keys[0])
    if not anchored:
        raise GaugeUnfixed("no frozen or prior-constrained nav state; freeze one to fix the gauge")


def _check_landmark_support(graph: FactorGraph):
    counts = defaultdict(int)
    for f in graph.factors:
        if isinstance(f, ReprojectionFactor):
            counts[f.keys[1]] += 1
    for key in graph.keys(VariableKind.LANDMARK):
        if graph.is_frozen(key):
            continue
        if counts[key] < 2:
            raise RankDeficient(f"landmark {key!r} is observed {counts[key]} time(s) and is not frozen")


class _ReprojectionBlock:
    """All reprojection factors evaluated as one batch through precomputed index arrays."""

    def __init__(self, factors, order: _Ordering, graph: FactorGraph):
        self.factors = factors
        n = len(factors)
        self.n = n
        self.intr = np.array([f.intr_row for f in factors]) if n else np.zeros((0, 6))
        self.pixels = np.array([f.pixel for f in factors]) if n else np.zeros((0, 2))
        self.sigma = np.array([f.sigma_px for f in factors]) if n else np.zeros(0)
        self.huber = np.array([f.loss.delta if f.loss is not None else np.inf for f in factors])
        # nav states, landmarks and extrinsics referenced by the batch
        self.nav_keys = sorted({f.keys[0] for f in factors})
        self.lm_keys = sorted({f.keys[1] for f in factors})
        ext = [f.keys[2] if len(f.keys) > 2 else None for f in factors]
        self.ext_keys = sorted({k for k in ext if k is not None})
        nav_pos = {k: i for i, k in enumerate(self.nav_keys)}
        lm_pos = {k: i for i, k in enumerate(self.lm_keys)}
        ext_pos = {k: i for i, k in enumerate(self.ext_keys)}
        self.nav_i = np.array([nav_pos[f.keys[0]] for f in factors], dtype=np.int64)
        self.lm_i = np.array([lm_pos[f.keys[1]] for f in factors], dtype=np.int64)
        self.ext_i = np.array([ext_pos[k] if k is not None else -1 for k in ext], dtype=np.int64)
        self.fixed_ext = [f.extrinsic_pose for f in factors]
        self.has_fixed_ext = bool(np.any(self.ext_i < 0))
        # tangent columns (-1 where frozen)
        self.nav_cols = np.array([order.full[k][:6] if k in order.full else -np.ones(6, np.int64) for k in self.nav_keys]).reshape(-1, 6)
        self.ext_cols = np.array([order.full[k][:6] if k in order.full else -np.ones(6, np.int64) for k in self.ext_keys]).reshape(-1, 6)
        lm_ord = {k: j for j, k in enumerate(order.landmark_keys)}
        self.lm_ord = np.array([lm_ord.get(k, -1) for k in self.lm_keys], dtype=np.int64)

    def gather(self, values):
        Rn = np.array([values[k].R for k in self.nav_keys]).reshape(-1, 3, 3)
        pn = np.array([values[k].position for k in self.nav_keys]).reshape(-1, 3)
        lm = np.array([values[k] for k in self.lm_keys], dtype=float).reshape(-1, 3)
        Rc = np.empty((self.n, 3, 3))
        tc = np.empty((self.n, 3))
        if self.ext_keys:
            Re = np.array([values[k].R for k in self.ext_keys])
            te = np.array([values[k].translation for k in self.ext_keys])
            sel = self.ext_i >= 0
            Rc[sel] = Re[self.ext_i[sel]]
            tc[sel] = te[self.ext_i[sel]]
        if self.has_fixed_ext:
            for n in np.flatnonzero(self.ext_i < 0):
                Rc[n] = self.fixed_ext[n].R
                tc[n] = self.fixed_ext[n].translation
        return Rn[self.nav_i], pn[self.nav_i], Rc, tc, lm[self.lm_i]

    def evaluate(self, values, jacobians):
        return reprojection_batch(*self.gather(values), self.intr, self.pixels, jacobians=jacobians)

    def costs(self, values):
        res, valid = self.evaluate(values, False)
        n = np.linalg.norm(res / self.sigma[:, None], axis=1)
        d = self.huber
        c = 0.5 * n * n
        out = n > d
        c[out] = d[out] * n[out] - 0.5 * d[out] ** 2
        return c, valid


def _split_factors(graph):
    reproj = [f for f in graph.factors if isinstance(f, ReprojectionFactor)]
    other = [f for f in graph.factors if not isinstance(f, ReprojectionFactor)]
    return reproj, other


class _Problem:
    def __init__(self, graph: FactorGraph):
        self.graph = graph
        self.order = _Ordering(graph)
        reproj, self.other = _split_factors(graph)
        self.block = _ReprojectionBlock(reproj, self.order, graph)

    def cost(self, values):
        total = 0.0
        skipped = 0
        for f in self.other:
            try:
                total += f.cost(values)
            except InvalidResidual:
                skipped += 1
        if self.block.n:
            c, valid = self.block.costs(values)
            total += float(np.sum(c[valid]))
            skipped += int(np.count_nonzero(~valid))
        return total, skipped

    def linearize(self, values) -> _NormalEquations:
        order = self.order
        F, Lc = order.F, order.L
        rows, cols, data = [], [], []
        gf = np.zeros(F)
        gl = np.zeros(3 * Lc)
        B = np.zeros((Lc, 3, 3))
        fl_rows, fl_cols, fl_data = [], [], []
        skipped = 0

        # generic factors: sparse Jacobian restricted to frame columns
        jr, jc, jd, res = [], [], [], []
        m = 0
        for f in self.other:
            try:
                e, Js = f.linearize(values)
            except InvalidResidual:
                skipped += 1
                continue
            for key, J in zip(f.keys, Js):
                full = order.full.get(key)
                if full is None:
                    continue
                sel = full >= 0
                if not sel.any():
                    continue
                Jf = J[:, sel]
                rr, cc = np.nonzero(Jf)
                jr.append(m + rr)
                jc.append(full[sel][cc])
                jd.append(Jf[rr, cc])
            res.append(e)
            m += len(e)
        if jr:
            J = sp.csr_matrix((np.concatenate(jd), (np.concatenate(jr), np.concatenate(jc))), shape=(m, F))
            e = np.concatenate(res)
            Ho = (J.T @ J).tocoo()
            rows.append(Ho.row)
            cols.append(Ho.col)
            data.append(Ho.data)
            gf += J.T @ e

        blk = self.block
        if blk.n:
            res, valid, J_nav, J_l, J_c = blk.evaluate(values, True)
            skipped += int(np.count_nonzero(~valid))
            if not valid.all():
                log.debug("skipping %d reprojection factors behind the camera", int(np.count_nonzero(~valid)))
            e = res / blk.sigma[:, None]
            nrm = np.linalg.norm(e, axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(nrm <= blk.huber, 1.0, blk.huber / nrm)
            s = np.where(valid, np.sqrt(w) / blk.sigma, 0.0)
            e = e * (np.sqrt(w) * valid)[:, None]
            J_nav = J_nav * s[:, None, None]
            J_l = J_l * s[:, None, None]
            J_c = J_c * s[:, None, None]

            nav_cols = blk.nav_cols[blk.nav_i]  # (N, 6)
            ext_cols = np.full((blk.n, 6), -1, dtype=np.int64)
            sel = blk.ext_i >= 0
            ext_cols[sel] = blk.ext_cols[blk.ext_i[sel]]
            Jf = np.concatenate((J_nav, J_c), axis=2)  # (N, 2, 12)
            fcols = np.concatenate((nav_cols, ext_cols), axis=1)  # (N, 12)
            Hblk = np.einsum("nki,nkj->nij", Jf, Jf)
            keep = (fcols[:, :, None] >= 0) & (fcols[:, None, :] >= 0)
            rows.append(np.broadcast_to(fcols[:, :, None], Hblk.shape)[keep])
            cols.append(np.broadcast_to(fcols[:, None, :], Hblk.shape)[keep])
            data.append(Hblk[keep])
            gfb = np.einsum("nki,nk->ni", Jf, e)
            ok = fcols >= 0
            gf += np.bincount(fcols[ok], weights=gfb[ok], minlength=F)

            lo = blk.lm_ord[blk.lm_i]  # landmark ordinal per observation
            has_l = lo >= 0
            if has_l.any():
                Bb = np.einsum("nki,nkj->nij", J_l[has_l], J_l[has_l])
                np.add.at(B, lo[has_l], Bb)
                glb = np.einsum("nki,nk->ni", J_l[has_l], e[has_l])
                lc = F + 3 * lo[has_l][:, None] + np.arange(3)
                gl += np.bincount((lc - F).reshape(-1), weights=glb.reshape(-1), minlength=3 * Lc)
                W = np.einsum("nki,nkj->nij", Jf[has_l], J_l[has_l])  # (n, 12, 3)
                fc = fcols[has_l]
                keepw = np.broadcast_to((fc >= 0)[:, :, None], W.shape)
                fl_rows.append(np.broadcast_to(fc[:, :, None], W.shape)[keepw])
                fl_cols.append(np.broadcast_to((lc - F)[:, None, :], W.shape)[keepw])
                fl_data.append(W[keepw])

        def cat(x, dtype=float):
            return np.concatenate(x) if x else np.zeros(0, dtype=dtype)

        Hff = sp.csc_matrix((cat(data), (cat(rows, np.int64), cat(cols, np.int64))), shape=(F, F))
        Hfl = sp.csr_matrix((cat(fl_data), (cat(fl_rows, np.int64), cat(fl_cols, np.int64))), shape=(F, 3 * Lc))
        neq = _NormalEquations(Hff, Hfl, B, gf, gl, skipped)
        neq.pin_uninformed()
        return neq

    def apply(self, values, dx):
        new = dict(values)
        for key, full in self.order.full.items():
            d = np.zeros(len(full))
            sel = full >= 0
            d[sel] = dx[full[sel]]
            new[key] = retract(key.kind, values[key], d)
        return new


@dataclass
class _NormalEquations:
    Hff: sp.csc_matrix
    Hfl: sp.csr_matrix
    B: np.ndarray  # (L, 3, 3) landmark blocks
    gf: np.ndarray
    gl: np.ndarray
    skipped: int = 0

    def pin_uninformed(self):
        """Unit curvature on dims no valid factor touches, so their step is zero instead of singular."""
        d = self.Hff.diagonal()
        empty = d == 0.0
        if empty.any():
            self.Hff = (self.Hff + sp.diags(empty.astype(float), format="csc")).tocsc()
        if len(self.B):
            i3 = np.arange(3)
            self.B[:, i3, i3] = np.where(self.B[:, i3, i3] == 0.0, 1.0, self.B[:, i3, i3])

    def full(self) -> tuple[sp.csc_matrix, np.ndarray]:
        L = len(self.B)
        Bsp = sp.bsr_matrix((self.B, np.arange(L), np.arange(L + 1)), shape=(3 * L, 3 * L))
        H = sp.bmat([[self.Hff, self.Hfl], [self.Hfl.T, Bsp]], format="csc")
        return H, np.concatenate((self.gf, self.gl))


def evaluate_cost(graph: FactorGraph, values=None):
    """Total robust cost and the number of skipped (invalid) factors."""
    return _Problem(graph).cost(graph.values if values is None else values)


class _NotPositiveDefinite(Exception):
    pass


class _SparseCholesky:
    """CHOLMOD solves that reuse the symbolic analysis while the sparsity pattern is unchanged."""

    def __init__(self):
        self._pattern = None
        self._A = None
        self._F = None

    def solve(self, S: sp.spmatrix, b: np.ndarray) -> np.ndarray:
        Sl = sp.tril(S, format="csc")
        Sl.sort_indices()
        n = S.shape[0]
        same = (
            self._pattern is not None
            and self._pattern[0].shape == Sl.indptr.shape
            and self._pattern[1].shape == Sl.indices.shape
            and np.array_equal(self._pattern[0], Sl.indptr)
            and np.array_equal(self._pattern[1], Sl.indices)
        )
        if same:
            self._A.V = matrix(Sl.data.astype(float))
        else:
            c = Sl.tocoo()
            self._A = spmatrix(matrix(c.data.astype(float)), matrix(c.row.astype(np.int64)), matrix(c.col.astype(np.int64)), (n, n))
            self._F = cholmod.symbolic(self._A)
            self._pattern = (Sl.indptr.copy(), Sl.indices.copy())
        x = matrix(np.asarray(b, dtype=float).reshape(n, 1))
        try:
            cholmod.numeric(self._A, self._F)
        except ArithmeticError as exc:
            raise _NotPositiveDefinite from exc
        cholmod.solve(self._F, x)
        return np.array(x).reshape(n)


def _cholmod_solve(S: sp.spmatrix, b: np.ndarray, cache: _SparseCholesky | None = None) -> np.ndarray:
    return (cache if cache is not None else _SparseCholesky()).solve(S, b)


def dense_step(neq: _NormalEquations, lam: float) -> np.ndarray:
    """Reference solver: the full damped normal equations, dense Cholesky."""
    H, g = neq.full()
    A = H.toarray()
    A[np.diag_indices_from(A)] *= 1.0 + lam
    try:
        c = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise _NotPositiveDefinite from exc
    return scipy.linalg.cho_solve(c, -g)


def schur_step(neq: _NormalEquations, lam: float, cache: _SparseCholesky | None = None) -> np.ndarray:
    """Damped step with the landmark 3x3 blocks eliminated by Schur complement."""
    F = neq.Hff.shape[0]
    L = len(neq.B)
    Hff = neq.Hff + sp.diags(lam * neq.Hff.diagonal(), format="csc")
    if L == 0:
        return _cholmod_solve(Hff, -neq.gf, cache) if F else np.zeros(0)
    i3 = np.arange(3)
    Bd = neq.B.copy()
    Bd[:, i3, i3] *= 1.0 + lam
    try:
        np.linalg.cholesky(Bd)
    except np.linalg.LinAlgError as exc:
        raise _NotPositiveDefinite from exc
    Binv = np.linalg.inv(Bd)
    Binv_sp = sp.bsr_matrix((Binv, np.arange(L), np.arange(L + 1)), shape=(3 * L, 3 * L)).tocsr()
    gl = neq.gl
    if F == 0:
        return -(Binv_sp @ gl)
    T = neq.Hfl @ Binv_sp
    S = (Hff - T @ neq.Hfl.T).tocsc()
    rhs = -neq.gf + T @ gl
    dxf = _cholmod_solve(S, rhs, cache)
    dxl = Binv_sp @ (-gl - neq.Hfl.T @ dxf)
    return np.concatenate((dxf, dxl))


def _step(neq, lam, method, cache=None):
    return dense_step(neq, lam) if method == "dense" else schur_step(neq, lam, cache)


def compute_step(graph: FactorGraph, lam: float, method: str = "schur", values=None) -> np.ndarray:
    """One damped Gauss-Newton step at ``values`` (default: the graph estimates)."""
    prob = _Problem(graph)
    neq = prob.linearize(graph.values if values is None else values)
    return _step(neq, lam, method)


def solve(graph: FactorGraph, options: SolverOptions | None = None) -> SolveReport:
    """Levenberg-Marquardt; the graph's estimates are updated in place with the result."""
    opts = options if options is not None else SolverOptions()
    _check_gauge(graph)
    _check_landmark_support(graph)
    prob = _Problem(graph)
    values = dict(graph.values)
    cost, skipped = prob.cost(values)
    if not np.isfinite(cost):
        raise DivergedNaN("initial cost is not finite")
    report = SolveReport(initial_cost=cost, final_cost=cost, iterations=0, factor_census=graph.factor_census(), skipped_factors=skipped)
    lam = opts.lambda0
    neq = None
    chol = _SparseCholesky()
    termination = "max_iterations"
    for it in range(1, opts.max_iterations + 1):
        if neq is None:
            neq = prob.linearize(values)
            skipped = neq.skipped
        for _ in range(opts.max_rank_retries + 1):
            try:
                dx = _step(neq, lam, opts.linear_solver, chol)
                break
            except _NotPositiveDefinite:
                lam *= opts.lambda_up
        else:
            raise RankDeficient("normal equations are not positive definite after damping boosts")
        if not np.all(np.isfinite(dx)):
            raise DivergedNaN("non-finite update")
        step_norm = float(np.linalg.norm(dx))
        report.iterations = it
        if step_norm < opts.step_tol:
            report.history.append(IterationRecord(it, cost, lam, step_norm, False))
            termination = "small_step"
            break
        trial = prob.apply(values, dx)
        new_cost, new_skipped = prob.cost(trial)
        if np.isfinite(new_cost) and new_cost < cost:
            rel = (cost - new_cost) / cost
            values, cost, skipped = trial, new_cost, new_skipped
            report.history.append(IterationRecord(it, cost, lam, step_norm, True))
            lam = max(lam / opts.lambda_down, 1e-300)
            neq = None
            if cost == 0.0:
                termination = "zero_cost"
                break
            if rel < opts.relative_cost_tol:
                termination = "relative_cost"
                break
        else:
            report.history.append(IterationRecord(it, cost, lam, step_norm, False))
            lam *= opts.lambda_up
            if lam > opts.max_lambda:
                termination = "lambda_overflow"
                break
    report.final_cost = cost
    report.termination = termination
    report.skipped_factors = skipped
    report.values = values
    graph.values.update(values)
    log.info("solve: %s after %d iterations, cost %.6g -> %.6g", termination, report.iterations, report.initial_cost, cost)
    return report




def add_loop_closure_observations(graph: FactorGraph, reobservations, sigma_px: float = 1.0, loss=None, use_extrinsic_keys: bool = True):
    """Bind current states to existing landmarks with reprojection factors.

    ``reobservations`` holds ``(nav_key, camera_id, landmark_key, pixel)`` tuples.
    """
    from .core import C
    from ..exceptions import UnknownLandmark

    reobservations = list(reobservations)
    for _, _, lk, _ in reobservations:
        if lk not in graph.values or lk.kind is not VariableKind.LANDMARK:
            raise UnknownLandmark(f"landmark {lk!r} does not exist in the graph")
    added = []
    for nav_key, camera_id, lk, pixel in reobservations:
        p = graph.rig.index(camera_id)
        cam = graph.rig.cameras[p]
        ext = C(p) if use_extrinsic_keys and C(p) in graph.values else cam.extrinsic
        f = ReprojectionFactor(nav_key, lk, camera_id, cam.intrinsics, pixel, sigma_px, extrinsic=ext, loss=loss)
        added.append(graph.add_factor(f))
    return added


def optimize_extrinsics_toggle(graph: FactorGraph, enabled) -> None:
    """Freeze (default) or release the rig extrinsics; released ones get a weak prior at calibration.

    ``enabled`` is a single flag or one flag per rig camera.
    """
    from .factors import EXTRINSIC_PRIOR_SIGMAS

    keys = graph.keys(VariableKind.RIG_EXTRINSIC)
    if np.ndim(enabled) == 0:
        flags = [bool(enabled)] * len(keys)
    else:
        flags = [bool(e) for e in enabled]
        if len(flags) != len(keys):
            raise ValueError(f"expected {len(keys)} extrinsic flags, got {len(flags)}")
    for key, on in zip(keys, flags):
        prior = graph.extrinsic_priors.pop(key, None)
        if prior is not None:
            graph.remove_factor(prior)
        calib = graph.extrinsic_calibration.get(key, graph.values[key])
        if on:
            graph.unfreeze(key)
            f = PriorPoseFactor(key, calib, sigmas=EXTRINSIC_PRIOR_SIGMAS)
            graph.add_factor(f)
            graph.extrinsic_priors[key] = f
        else:
            graph.values[key] = calib
            graph.freeze(key)
