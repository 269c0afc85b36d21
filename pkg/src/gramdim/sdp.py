"""Canonical-form SDP solving and stress-matrix certificate extraction.

Problems are max <A0, X> s.t. <A_j, X> = b_j, X psd.  The solver is a dense
primal-dual path-following method with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step; instances here are tiny (n <= ~50), so robustness
is preferred over speed throughout.

The three certificate extractions layered on top:

* `flatten`   -- maximize a stretched non-edge entry of a completion and read
                 the dual slack back as a psd stress matrix supported on
                 V u E u {e0} whose equilibrium condition annihilates the
                 primal Gram vectors.
* `farkas_certificate` -- for feasible but not strictly feasible constraint
                 systems, a nonzero psd matrix in the span of the constraints
                 orthogonal to every feasible point.
* `pinned_flatten` -- the second-stretch program with part of the
                 configuration frozen; equilibrium holds at the free vertices
                 and the stretch coefficient may legitimately vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from gramdim.graphs import Graph, _norm_edge
from gramdim.linalg import Configuration, gram_factor, numerical_rank

__all__ = [
    "SdpProblem",
    "SdpSolution",
    "StressMatrix",
    "FlattenResult",
    "InfeasibleInstanceError",
    "NoCertificateError",
    "solve",
    "slater_probe",
    "farkas_certificate",
    "flatten",
    "pinned_flatten",
    "rank_reduce",
    "completion_constraints",
]

DEFAULT_TOL = 1e-8
STRESS_ZERO_REL = 1e-6  # entries below this (relative to max) count as unstressed


class InfeasibleInstanceError(Exception):
    """Raised when a completion instance admits no psd completion."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class NoCertificateError(Exception):
    """Raised when a Farkas certificate is requested for a strictly feasible system."""


# -- svec utilities -----------------------------------------------------------


def _svec(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    iu = np.triu_indices(n)
    scale = np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
    return m[iu] * scale


def _unsvec(v: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n))
    iu = np.triu_indices(n)
    scale = np.where(iu[0] == iu[1], 1.0, 1.0 / math.sqrt(2.0))
    out[iu] = v * scale
    out = out + out.T - np.diag(np.diag(out))
    return out


def _sym(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2


def _elementary(n: int, i: int, j: int) -> np.ndarray:
    out = np.zeros((n, n))
    if i == j:
        out[i, i] = 1.0
    else:
        out[i, j] = out[j, i] = 0.5
    return out


# -- problem / solution types -------------------------------------------------


@dataclass
class SdpProblem:
    """max <objective, X> s.t. <mats[j], X> = b[j], X psd."""

    objective: np.ndarray
    mats: list
    b: np.ndarray

    def __post_init__(self):
        self.objective = _sym(np.asarray(self.objective, dtype=float))
        self.mats = [_sym(np.asarray(a, dtype=float)) for a in self.mats]
        self.b = np.asarray(self.b, dtype=float).ravel()
        n = self.objective.shape[0]
        if any(a.shape != (n, n) for a in self.mats) or len(self.mats) != self.b.size:
            raise ValueError("inconsistent problem dimensions")

    @property
    def n(self) -> int:
        return self.objective.shape[0]

    def dump(self) -> str:
        """Plain-text canonical format: n, m, then triplet-sparse rows."""
        lines = [f"{self.n} {len(self.mats)}"]
        lines.append(" ".join(repr(float(x)) for x in self.b))
        for j, a in enumerate([self.objective] + self.mats):
            iu = np.triu_indices(self.n)
            for r, c in zip(*iu):
                if a[r, c] != 0.0:
                    lines.append(f"{j} {r} {c} {float(a[r, c])!r}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def load(text: str) -> "SdpProblem":
        rows = [ln for ln in text.strip().splitlines() if ln.strip()]
        n, m = (int(t) for t in rows[0].split())
        b = np.array([float(t) for t in rows[1].split()])
        mats = [np.zeros((n, n)) for _ in range(m + 1)]
        for ln in rows[2:]:
            j, r, c, val = ln.split()
            j, r, c = int(j), int(r), int(c)
            mats[j][r, c] = mats[j][c, r] = float(val)
        return SdpProblem(mats[0], mats[1:], b)


@dataclass
class SdpSolution:
    status: str  # optimal | infeasible_certificate | unbounded | numerical_failure
    X: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    S: Optional[np.ndarray] = None
    gap: float = float("nan")
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    iterations: int = 0
    certificate: Optional[np.ndarray] = None  # Farkas y for infeasibility

    @property
    def objective_value(self) -> float:
        return float("nan")


# -- constraint preprocessing --------------------------------------------------


class _ReducedSystem:
    """Orthonormalized constraint system with maps back to the original one."""

    def __init__(self, mats, b, n):
        self.n = n
        self.m_orig = len(mats)
        M = np.vstack([_svec(a) for a in mats]) if mats else np.zeros((0, n * (n + 1) // 2))
        self.M = M
        u, s, vt = np.linalg.svd(M, full_matrices=True) if mats else (
            np.zeros((0, 0)), np.zeros(0), np.zeros((0, n * (n + 1) // 2)))
        tol = 1e-11 * max(1.0, s[0] if s.size else 1.0)
        r = int(np.sum(s > tol))
        self.rank = r
        self.u, self.s, self.vt = u, s, vt
        b = np.asarray(b, dtype=float)
        self.b_orig = b
        if r < len(mats):
            resid = b - u[:, :r] @ (u[:, :r].T @ b)
            self.inconsistency = float(np.linalg.norm(resid))
            self.inconsistent_y = resid
        else:
            self.inconsistency = 0.0
            self.inconsistent_y = None
        self.mats_red = [_unsvec(vt[l], n) for l in range(r)]
        self.b_red = (u[:, :r].T @ b) / s[:r] if r else np.zeros(0)
        # least-norm symmetric matrix satisfying the constraints
        self.affine_witness = _unsvec(vt[:r].T @ self.b_red, n)

    def lift_y(self, y_red: np.ndarray) -> np.ndarray:
        if self.rank == 0:
            return np.zeros(self.m_orig)
        return self.u[:, : self.rank] @ (y_red / self.s[: self.rank])

    def complement_basis(self):
        return [_unsvec(self.vt[l], self.n) for l in range(self.rank, self.vt.shape[0])]


# -- the interior point core ----------------------------------------------------


def _max_step(chol_l: np.ndarray, delta: np.ndarray) -> float:
    """Largest alpha with M + alpha*Delta psd, M = L L^T."""
    z = np.linalg.solve(chol_l, delta)
    z = np.linalg.solve(chol_l, z.T).T
    lam = np.linalg.eigvalsh(_sym(z)).min()
    if lam >= -1e-14:
        return np.inf
    return 1.0 / (-lam)


def _ipm(c: np.ndarray, mats: list, b: np.ndarray, tol: float, max_iter: int = 200):
    """NT-scaled Mehrotra predictor-corrector for max <c,X> s.t. <A_j,X>=b_j, X psd.

    Assumes the constraint matrices are linearly independent (callers pass a
    reduced system).  Returns a dict with the final iterate and residuals.
    """
    n = c.shape[0]
    m = len(mats)
    iu = np.triu_indices(n)
    asv = np.vstack([_svec(a) for a in mats]) if m else np.zeros((0, len(iu[0])))

    def aop(x):
        return asv @ _svec(x) if m else np.zeros(0)

    def atop(y):
        return _unsvec(asv.T @ y, n) if m else np.zeros((n, n))

    norm_b = 1.0 + np.linalg.norm(b)
    norm_c = 1.0 + np.linalg.norm(c)
    rho = max(1.0, float(np.max(np.abs(b))) if m else 1.0, n)
    X = np.eye(n) * rho
    S = np.eye(n) * max(1.0, np.linalg.norm(c))
    y = np.zeros(m)
    best = None
    stall = 0
    tiny_steps = 0
    last_mu = np.inf

    if m:
        row_gram = asv @ asv.T
        try:
            row_cho = np.linalg.cholesky(row_gram + 1e-13 * np.eye(m))
        except np.linalg.LinAlgError:
            row_cho = None
    else:
        row_cho = None

    def correct_step(dx, target):
        # re-project the primal step onto {<A_j, dx> = target}; removes the
        # cancellation noise that otherwise makes late iterates drift infeasible
        if row_cho is None:
            return dx
        z = np.linalg.solve(row_cho.T, np.linalg.solve(row_cho, target - aop(dx)))
        return _sym(dx + atop(z))

    for it in range(max_iter):
        rp = b - aop(X)
        Rd = c + S - atop(y)
        mu = float(np.tensordot(X, S) / n)
        pobj = float(np.tensordot(c, X))
        dobj = float(b @ y)
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        pres = np.linalg.norm(rp) / norm_b
        dres = np.linalg.norm(Rd) / norm_c
        state = dict(X=X, y=y, S=S, gap=gap, pres=pres, dres=dres, it=it,
                     mu=mu, pobj=pobj, dobj=dobj)
        if best is None or (pres + dres + gap) < (best["pres"] + best["dres"] + best["gap"]):
            best = state
        if pres <= tol and dres <= tol and (gap <= tol or mu <= tol * 1e-2):
            state["converged"] = True
            return state
        if pobj > 1e13 * norm_b and pres <= 1e-6:
            best["diverged"] = "unbounded"
            return best
        if dobj < -1e13 * norm_c:
            best["diverged"] = "primal_infeasible"
            return best
        if mu > 0.9 * last_mu and pres > tol:
            stall += 1
            if stall > 40:
                return best
        else:
            stall = 0
        last_mu = mu

        try:
            lx = np.linalg.cholesky(X)
            ls = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return best
        u_, sv, vt_ = np.linalg.svd(ls.T @ lx)
        sv = np.clip(sv, 1e-300, None)
        R = lx @ vt_.T / np.sqrt(sv)
        Rinv = (u_.T @ ls.T) / np.sqrt(sv)[:, None]
        d = sv
        amats_scaled = np.vstack([_svec(_sym(R.T @ a_mat @ R)) for a_mat in mats]) \
            if m else np.zeros((0, len(iu[0])))
        schur = amats_scaled @ amats_scaled.T
        w_rd_w = R @ (_sym(R.T @ Rd @ R)) @ R.T  # == W Rd W

        try:
            cho = np.linalg.cholesky(schur + 1e-14 * np.trace(schur) / max(m, 1) * np.eye(m)) \
                if m else None
        except np.linalg.LinAlgError:
            return best

        def newton(g_hat):
            rc = R @ (2.0 * g_hat / (d[:, None] + d[None, :])) @ R.T
            if m:
                rhs = np.array([np.tensordot(a_mat, rc + w_rd_w) for a_mat in mats]) - rp
                dy = np.linalg.solve(cho.T, np.linalg.solve(cho, rhs))
            else:
                dy = np.zeros(0)
            dS = atop(dy) - Rd
            dX = _sym(rc - R @ (_sym(R.T @ dS @ R)) @ R.T)
            return correct_step(dX, rp), dy, dS

        g_aff = -np.diag(d * d)
        dXa, dya, dSa = newton(g_aff)
        a_aff = min(1.0, 0.99 * _max_step(lx, dXa), 0.99 * _max_step(ls, dSa))
        mu_aff = float(np.tensordot(X + a_aff * dXa, S + a_aff * dSa) / n)
        sigma = min(0.99, max(1e-8, (max(mu_aff, 0.0) / mu) ** 3)) if mu > 0 else 0.1
        cross = _sym((Rinv @ dXa @ Rinv.T) @ (R.T @ dSa @ R))
        g_cor = sigma * mu * np.eye(n) - np.diag(d * d) - cross
        dX, dy, dS = newton(g_cor)
        # symmetric step with a neighborhood safeguard: the new scaled
        # eigenvalue products must not collapse far below the new mu, or the
        # next NT direction is garbage
        def try_step(dx_, dy_, ds_):
            alpha = min(1.0, 0.99 * _max_step(lx, dx_), 0.99 * _max_step(ls, ds_))
            for _bt in range(40):
                xn = _sym(X + alpha * dx_)
                sn = _sym(S + alpha * ds_)
                try:
                    lxn = np.linalg.cholesky(xn)
                except np.linalg.LinAlgError:
                    alpha *= 0.8
                    continue
                mu_n = float(np.tensordot(xn, sn) / n)
                ev = np.linalg.eigvalsh(_sym(lxn.T @ sn @ lxn))
                if mu_n > 0 and ev.min() >= 1e-4 * mu_n:
                    return (xn, y + alpha * dy_, sn), alpha
                alpha *= 0.8
            return None, 0.0

        stepped, alpha_used = try_step(dX, dy, dS)
        if stepped is None or alpha_used < 1e-3:
            # recenter: a pure centering direction recovers from the
            # neighborhood boundary where the Mehrotra step collapses
            dXc, dyc, dSc = newton(mu * np.eye(n) - np.diag(d * d))
            stepped_c, alpha_c = try_step(dXc, dyc, dSc)
            if stepped_c is not None and alpha_c > alpha_used:
                stepped, alpha_used = stepped_c, alpha_c
        if stepped is None:
            return best
        if alpha_used < 1e-4:
            tiny_steps += 1
            if tiny_steps >= 5:
                return best
        else:
            tiny_steps = 0
        X, y, S = stepped
    return best


def solve(problem: SdpProblem, tol: float = DEFAULT_TOL, max_iter: int = 200) -> SdpSolution:
    """Solve a canonical SDP; labels degenerate outcomes instead of guessing."""
    red = _ReducedSystem(problem.mats, problem.b, problem.n)
    if red.inconsistency > 1e-8 * (1 + np.linalg.norm(problem.b)):
        y = -red.inconsistent_y / max(red.inconsistency, 1e-300)
        return SdpSolution(status="infeasible_certificate", certificate=y)
    state = _ipm(problem.objective, red.mats_red, red.b_red, tol, max_iter)
    y_full = red.lift_y(state["y"])
    acceptable = (
        state.get("converged")
        or (state["pres"] <= tol and state["dres"] <= tol and state["gap"] <= 10 * tol)
    )
    sol = SdpSolution(
        status="optimal" if acceptable else "numerical_failure",
        X=state["X"],
        y=y_full,
        S=state["S"],
        gap=state["gap"],
        primal_residual=state["pres"],
        dual_residual=state["dres"],
        iterations=state["it"],
    )
    if sol.status == "optimal":
        return sol
    if state.get("diverged") == "unbounded":
        sol.status = "unbounded"
        return sol
    # distinguish genuine primal infeasibility from numerical trouble
    try:
        cert = _infeasibility_certificate(problem.mats, problem.b, problem.n, tol)
    except Exception:
        cert = None
    if cert is not None:
        sol.status = "infeasible_certificate"
        sol.certificate = cert
    return sol


def _infeasibility_certificate(mats, b, n, tol):
    """Search for y with sum y_j A_j psd, trace 1, b^T y < 0 (primal infeasibility).

    The candidate from the auxiliary solve is verified from scratch, so a
    returned certificate is trustworthy even when that solve only reached the
    boundary numerically.
    """
    red = _ReducedSystem(mats, b, n)
    comp = red.complement_basis()
    aux_mats = comp + [np.eye(n)]
    aux_b = np.concatenate([np.zeros(len(comp)), [1.0]])
    aux = SdpProblem(-red.affine_witness, aux_mats, aux_b)
    aux_red = _ReducedSystem(aux.mats, aux.b, n)
    if aux_red.inconsistency > 1e-8:
        return None
    state = _ipm(aux.objective, aux_red.mats_red, aux_red.b_red, max(tol, 1e-9), 200)
    if state is None or state.get("X") is None:
        return None
    y = _recover_span_coefficients(red, state["X"])
    omega = sum(float(c) * a for c, a in zip(y, mats))
    scale = max(1.0, float(np.max(np.abs(omega))))
    if np.linalg.eigvalsh(_sym(omega)).min() < -1e-8 * scale:
        return None
    if float(np.asarray(b) @ y) > -math.sqrt(max(tol, 1e-12)) * scale:
        return None
    return y


def _recover_span_coefficients(red: _ReducedSystem, omega: np.ndarray) -> np.ndarray:
    """Least-squares y with sum y_j A_j ~= omega (omega known to lie in the span)."""
    y, *_ = np.linalg.lstsq(red.M.T, _svec(omega), rcond=None)
    return y


# -- Slater probe and robust solving ---------------------------------------------


def slater_probe(mats, b, n, tol: float = DEFAULT_TOL):
    """Maximize the minimum eigenvalue over the affine slice of the psd cone.

    Returns (t_star, X0, solution); X0 is a feasible completion attaining the
    maximum and serves as a maximum-rank interior point of the feasible set.
    Raises InfeasibleInstanceError when the system is infeasible.
    """
    b = np.asarray(b, dtype=float)
    t_lb = -2.0 * (n * float(np.max(np.abs(b), initial=0.0)) + 1.0)
    lifted = []
    for a in mats:
        la = np.zeros((n + 1, n + 1))
        la[:n, :n] = a
        la[n, n] = np.trace(a)
        lifted.append(la)
    bl = b - t_lb * np.array([np.trace(a) for a in mats])
    cobj = np.zeros((n + 1, n + 1))
    cobj[n, n] = 1.0
    sol = solve(SdpProblem(cobj, lifted, bl), tol)
    if sol.status == "infeasible_certificate":
        raise InfeasibleInstanceError("constraint system is infeasible", sol.certificate)
    if sol.status != "optimal":
        raise InfeasibleInstanceError(f"slater probe failed with status {sol.status}")
    t_star = float(sol.X[n, n]) + t_lb
    scale = 1.0 + float(np.max(np.abs(b), initial=0.0))
    if t_star < -1e-6 * scale:
        # the affine slice misses the cone entirely: no psd completion
        cert = _infeasibility_certificate(mats, b, n, tol)
        raise InfeasibleInstanceError(
            f"no psd point on the constraint slice (max min-eigenvalue {t_star:.3e})",
            cert,
        )
    x0 = sol.X[:n, :n] + t_star * np.eye(n)
    return t_star, _sym(x0), sol


def _solve_on_face(objective, mats, b, v, tol):
    """Maximize over the face X = V M V^T of the feasible set (M psd)."""
    vm = [_sym(v.T @ a @ v) for a in mats]
    red = _ReducedSystem(vm, b, v.shape[1])
    if red.inconsistency > 1e-6 * (1 + np.linalg.norm(b)):
        raise InfeasibleInstanceError("face restriction inconsistent")
    state = _ipm(_sym(v.T @ objective @ v), red.mats_red, red.b_red, tol, 200)
    if not state.get("converged"):
        raise InfeasibleInstanceError("face-restricted solve failed")
    return _sym(v @ state["X"] @ v.T)


# -- stress matrices ---------------------------------------------------------------


@dataclass(frozen=True)
class StressMatrix:
    """Symmetric psd matrix supported on host edges plus the stretched pair.

    Row i against a configuration expresses the equilibrium condition at
    vertex i.  For pinned stresses only the rows of `pinned_free` vertices
    carry equilibrium (and only the free-block principal submatrix is psd).
    """

    matrix: np.ndarray
    host: Graph
    stretched_pair: Optional[tuple] = None
    pinned_free: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", _sym(np.asarray(self.matrix, dtype=float)))

    def support_violation(self) -> float:
        """Largest entry outside V u E u {stretched pair} (0 when structural)."""
        allowed = set(self.host.edges)
        if self.stretched_pair is not None:
            allowed.add(_norm_edge(*self.stretched_pair))
        worst = 0.0
        n = self.host.n
        for i in range(n):
            for j in range(i + 1, n):
                if (i, j) not in allowed:
                    worst = max(worst, abs(self.matrix[i, j]))
        return worst

    def psd_block(self) -> np.ndarray:
        if self.pinned_free is None:
            return self.matrix
        idx = list(self.pinned_free)
        return self.matrix[np.ix_(idx, idx)]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.psd_block()).min())

    def is_zero(self, tol: float = 1e-10) -> bool:
        return float(np.max(np.abs(self.psd_block()))) <= tol

    def equilibrium_residuals(self, config: Configuration) -> np.ndarray:
        """Per-vertex norm of sum_j w_ij p_j (rows of Omega P)."""
        rows = self.matrix @ config.vectors
        res = np.linalg.norm(rows, axis=1)
        if self.pinned_free is not None:
            res = res[list(self.pinned_free)]
        return res

    def stressed_graph(self, threshold_rel: float = STRESS_ZERO_REL):
        """Support graph of the stress after zero-thresholding; returns (nodes, edges)."""
        m = self.matrix
        thr = threshold_rel * max(float(np.max(np.abs(m))), 1e-300)
        n = m.shape[0]
        edges = {
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if abs(m[i, j]) > thr
        }
        nodes = {i for i in range(n) if abs(m[i, i]) > thr} | {v for e in edges for v in e}
        return nodes, edges

    def node_degree(self, v: int, threshold_rel: float = STRESS_ZERO_REL) -> int:
        _, edges = self.stressed_graph(threshold_rel)
        return sum(1 for e in edges if v in e)


def completion_constraints(a) -> tuple:
    """Constraint matrices/rhs fixing the diagonal and edge entries of `a`."""
    g = a.graph
    mats, b, tags = [], [], []
    for v in range(g.n):
        mats.append(_elementary(g.n, v, v))
        b.append(a.diagonal[v])
        tags.append((v, v))
    for (i, j) in g.edge_list():
        mats.append(_elementary(g.n, i, j))
        b.append(a.off_diagonal[(i, j)])
        tags.append((i, j))
    return mats, np.array(b), tags


def farkas_certificate(mats, b, known_feasible=None, host: Optional[Graph] = None,
                       tol: float = DEFAULT_TOL) -> StressMatrix:
    """Nonzero psd Omega in span{A_j} with <X, Omega> = 0 for every feasible X.

    Exists exactly when the system is feasible but not strictly feasible; a
    strictly feasible system raises NoCertificateError.  The certificate is
    normalized to unit trace.
    """
    mats = [_sym(np.asarray(a, dtype=float)) for a in mats]
    n = mats[0].shape[0]
    red = _ReducedSystem(mats, b, n)
    comp = red.complement_basis()
    aux_mats = comp + [np.eye(n)]
    aux_b = np.concatenate([np.zeros(len(comp)), [1.0]])
    aux = SdpProblem(-red.affine_witness, aux_mats, aux_b)
    sol = solve(aux, tol)
    if sol.X is None:
        raise NoCertificateError(f"certificate search failed: {sol.status}")
    omega = _sym(sol.X)
    value = -float(np.tensordot(red.affine_witness, omega))
    if sol.status == "optimal" and value < -math.sqrt(max(tol, 1e-14)):
        raise NoCertificateError("no certificate exists: system is strictly feasible")
    if sol.status != "optimal" and value < -math.sqrt(max(tol, 1e-14)):
        raise NoCertificateError(f"certificate search inconclusive: {sol.status}")
    omega = _project_to_span(omega, red)
    if np.linalg.eigvalsh(omega).min() < -1e-8 * max(1.0, float(np.abs(omega).max())):
        raise NoCertificateError("certificate lost psd-ness in span projection")
    if known_feasible is not None:
        inner = abs(float(np.tensordot(known_feasible, omega)))
        if inner > math.sqrt(tol):
            raise NoCertificateError("certificate fails complementarity with supplied point")
    if host is None:
        host = _aggregated_pattern(mats, n)
    return StressMatrix(omega, host)


def _aggregated_pattern(mats, n) -> Graph:
    edges = set()
    for a in mats:
        nz = np.argwhere(np.abs(a) > 1e-12)
        for (i, j) in nz:
            if i < j:
                edges.add((int(i), int(j)))
    return Graph.from_edges(n, edges)


def _project_to_span(omega, red: _ReducedSystem):
    """Orthogonal projection onto span{A_j}; for completion systems this zeroes
    the off-support entries exactly."""
    vt_r = red.vt[: red.rank]
    return _unsvec(vt_r.T @ (vt_r @ _svec(omega)), red.n)


def refine_kkt(x, y, mats, b, obj=None, rank_tol: float = 1e-7,
               normalize_trace: bool = False, max_iter: int = 40):
    """Gauss-Newton refinement of an approximate primal-dual optimal pair.

    Solves the square optimality system in (Q, y), where X = Q Q^T has the
    numerical rank of the input and Omega(y) = sum y_j A_j - obj:

        <A_j, Q Q^T> = b_j            (feasibility)
        Omega(y) Q   = 0              (complementarity / equilibrium)
        tr Omega     = 1              (only for homogeneous certificates)

    Interior-point output is accurate to ~sqrt(gap) in the eigenvector
    geometry; one or two Newton steps push the whole system to ~1e-12, which
    the stress-certificate checks downstream rely on.  Returns (X, y, Omega)
    or None when the iteration fails to reduce the residual.
    """
    x = _sym(np.asarray(x, dtype=float))
    n = x.shape[0]
    m = len(mats)
    w, u = np.linalg.eigh(x)
    scale = max(1.0, float(w[-1]) if w.size else 1.0)
    r = int(np.sum(w > rank_tol * scale))
    if r == 0:
        return None
    q = u[:, -r:] * np.sqrt(np.clip(w[-r:], 0.0, None))
    y = np.asarray(y, dtype=float).copy()
    b = np.asarray(b, dtype=float)

    def omega_of(yy):
        om = sum(float(c) * a for c, a in zip(yy, mats))
        if obj is not None:
            om = om - obj
        return _sym(om)

    def residual(qq, yy):
        om = omega_of(yy)
        f = [np.array([np.tensordot(a, qq @ qq.T) for a in mats]) - b, (om @ qq).ravel()]
        if normalize_trace:
            f.append(np.array([np.trace(om) - 1.0]))
        return np.concatenate(f), om

    f, om = residual(q, y)
    best_norm = np.linalg.norm(f)
    lm = 1e-10
    rr = q.shape[1]
    for _ in range(max_iter):
        if best_norm <= 1e-12 * (1 + np.linalg.norm(b)):
            break
        # Jacobian blocks: d feas/dQ = 2 A_j Q, d equil/dQ = Omega (x r copies),
        # d equil/dy_l = A_l Q
        jq_feas = np.vstack([2.0 * (a @ q).ravel() for a in mats])
        j_feas = np.hstack([jq_feas, np.zeros((m, m))])
        nr = n * rr
        jq = np.zeros((nr, n * rr))
        # d(Om Q)[i,k]/dQ[j,k] = Om[i,j]; ravel() is row-major: index i*rr+k
        for i in range(n):
            for k in range(rr):
                row = np.zeros((n, rr))
                row[:, k] = om[i]
                jq[i * rr + k] = row.ravel()
        jy = np.zeros((nr, m))
        for l, a in enumerate(mats):
            jy[:, l] = (a @ q).ravel()
        j_eq = np.hstack([jq, jy])
        blocks = [j_feas, j_eq]
        if normalize_trace:
            jtr = np.concatenate([np.zeros(n * rr), [np.trace(a) for a in mats]])
            blocks.append(jtr[None, :])
        jac = np.vstack(blocks)
        # Levenberg-Marquardt: the Gauss-Newton system is singular along the
        # orthogonal gauge freedom of Q, so damp instead of line-searching
        jtj = jac.T @ jac
        jtf = jac.T @ f
        dscale = np.trace(jtj) / jtj.shape[0] + 1e-30
        improved = False
        for _bt in range(25):
            try:
                step = np.linalg.solve(jtj + lm * dscale * np.eye(jtj.shape[0]), -jtf)
            except np.linalg.LinAlgError:
                lm = max(lm * 10, 1e-12)
                continue
            q2 = q + step[: n * rr].reshape(n, rr)
            y2 = y + step[n * rr:]
            f2, om2 = residual(q2, y2)
            if np.linalg.norm(f2) < best_norm:
                q, y, f, om = q2, y2, f2, om2
                best_norm = np.linalg.norm(f2)
                lm = max(lm / 5.0, 1e-12)
                improved = True
                break
            lm = min(lm * 10.0, 1e8)
        if not improved:
            break
    if best_norm > 1e-6 * (1 + np.linalg.norm(b)):
        return None
    return q @ q.T, y, omega_of(y)


# -- flatten -----------------------------------------------------------------------


@dataclass
class FlattenResult:
    config: Configuration
    stress: StressMatrix
    X: np.ndarray
    route: str  # "interior" | "farkas"
    slater_margin: float


def flatten(a, e0: tuple, tol: float = DEFAULT_TOL, rank_tol: float = 1e-7) -> FlattenResult:
    """Maximize X_e0 over psd completions of `a`; return Gram vectors and stress.

    With a positive definite completion available the dual slack is the stress
    and its stretched-pair entry is exactly -1/2; on the boundary the optimal
    face is located first and the stress comes from Farkas' lemma (stretch
    coefficient zero).
    """
    g = a.graph
    e0 = _norm_edge(*e0)
    if e0 in g.edges:
        raise ValueError(f"stretched pair {e0} is an edge of the graph")
    mats, b, _ = completion_constraints(a)
    scale = 1.0 + float(np.max(np.abs(b)))
    t_star, x0, _ = slater_probe(mats, b, g.n, tol)
    obj = _elementary(g.n, *e0)
    ghost = g.add_edges([e0])

    if t_star > 1e-7 * scale:
        sol = solve(SdpProblem(obj, mats, b), tol)
        if sol.status != "optimal":
            raise InfeasibleInstanceError(f"flatten solve failed: {sol.status}")
        x, y = sol.X, sol.y
        refined = refine_kkt(x, y, mats, b, obj=obj, rank_tol=rank_tol)
        if refined is not None:
            x, y, omega = refined
        else:
            omega = _sym(sum(float(c) * m for c, m in zip(y, mats)) - obj)
        stress = StressMatrix(omega, g, stretched_pair=e0)
        p = gram_factor(x, tol=rank_tol, host=ghost)
        return FlattenResult(p, stress, _sym(x), "interior", t_star)

    # boundary instance: maximize over the face of the maximum-rank point
    w, u = np.linalg.eigh(x0)
    v = u[:, w > rank_tol * max(1.0, w[-1])]
    try:
        x = _solve_on_face(obj, mats, b, v, tol)
    except InfeasibleInstanceError:
        x = x0
    stress = farkas_certificate(mats, b, known_feasible=x, host=g, tol=tol)
    y0, *_ = np.linalg.lstsq(
        np.vstack([_svec(m) for m in mats]).T, _svec(stress.matrix), rcond=None
    )
    refined = refine_kkt(x, y0, mats, b, obj=None, rank_tol=rank_tol,
                         normalize_trace=True)
    if refined is not None:
        x, _, omega = refined
        if np.linalg.eigvalsh(omega).min() >= -1e-8 * max(1.0, float(np.abs(omega).max())):
            stress = StressMatrix(omega, g, stretched_pair=e0)
    p = gram_factor(x, tol=rank_tol, host=ghost)
    return FlattenResult(p, stress, _sym(x), "farkas", t_star)


# -- pinned flatten ------------------------------------------------------------------


def pinned_flatten(pinned: Configuration, a, free, stretch: tuple,
                   tol: float = DEFAULT_TOL, rank_tol: float = 1e-7):
    """Second-stretch program: extend a pinned configuration across `free` vertices.

    Returns (config on all vertices, stress or None).  The configuration
    extends the pins by zero coordinates; the stress satisfies the support
    condition on (V1 x V2) pairs and equilibrium at every free vertex.  When
    the whole dual slack vanishes (the stretch objective is implied by the
    pins) no nonzero stress exists and None is returned.
    """
    g = a.graph
    v2 = sorted(free)
    if not v2:
        raise ValueError("nothing to solve: the free vertex set is empty")
    v1 = [v for v in range(g.n) if v not in set(v2)]
    s_, t_ = stretch
    if s_ in set(v2) and t_ in set(v1):
        s_, t_ = t_, s_
    if s_ not in set(v1) or t_ not in set(v2):
        raise ValueError("stretch pair must join a pinned vertex to a free vertex")
    if _norm_edge(s_, t_) in g.edges:
        raise ValueError("stretch pair is already an edge")
    pin_index = {v: k for k, v in enumerate(v1)}
    if pinned.vectors.shape[0] != len(v1):
        raise ValueError("pinned configuration must cover exactly the non-free vertices")
    pins = pinned.vectors
    gram_pins = pins @ pins.T
    for ii, vi in enumerate(v1):
        if abs(gram_pins[ii, ii] - a.diagonal[vi]) > 1e-6 * (1 + abs(a.diagonal[vi])):
            raise ValueError("pinned data inconsistent with the instance diagonal")
    for (i, j) in g.edges:
        if i in pin_index and j in pin_index:
            want = a.off_diagonal[(i, j)]
            got = gram_pins[pin_index[i], pin_index[j]]
            if abs(want - got) > 1e-6 * (1 + abs(want)):
                raise ValueError("pinned data inconsistent with the instance edges")

    d = pins.shape[1]
    n2 = len(v2)
    dim = d + n2
    free_index = {v: d + k for k, v in enumerate(v2)}

    mats, b, kinds = [], [], []
    for r in range(d):
        for s in range(r, d):
            mats.append(_elementary(dim, r, s))
            b.append(1.0 if r == s else 0.0)
            kinds.append(("pin", r, s))

    def f_mat(vi, vj):
        p_hat = np.zeros(dim)
        p_hat[:d] = pins[pin_index[vi]]
        ej = np.zeros(dim)
        ej[free_index[vj]] = 1.0
        return _sym(np.outer(p_hat, ej))

    for (i, j) in g.edge_list():
        if i in free_index and j in free_index:
            mats.append(_elementary(dim, free_index[i], free_index[j]))
            b.append(a.off_diagonal[(i, j)])
            kinds.append(("free_edge", i, j))
        elif i in free_index or j in free_index:
            vi, vj = (j, i) if i in free_index else (i, j)
            mats.append(f_mat(vi, vj))
            b.append(a.off_diagonal[(i, j)])
            kinds.append(("cross", vi, vj))
    for v in v2:
        mats.append(_elementary(dim, free_index[v], free_index[v]))
        b.append(a.diagonal[v])
        kinds.append(("free_diag", v, v))

    b = np.array(b)
    objective = f_mat(s_, t_)

    t_star, z0, _ = slater_probe(mats, b, dim, tol)
    scale = 1.0 + float(np.max(np.abs(b)))
    if t_star > 1e-7 * scale:
        sol = solve(SdpProblem(objective, mats, b), tol)
        if sol.status != "optimal":
            raise InfeasibleInstanceError(f"pinned solve failed: {sol.status}")
        z, yy = sol.X, sol.y
        refined = refine_kkt(z, yy, mats, b, obj=objective, rank_tol=rank_tol)
        if refined is not None:
            z, yy, lam = refined
        else:
            lam = _sym(sum(float(c) * m for c, m in zip(yy, mats)) - objective)
        mult = {k: float(c) for k, c in zip(kinds, yy)}
        stretch_coef = -0.5
    else:
        w, u = np.linalg.eigh(z0)
        v = u[:, w > rank_tol * max(1.0, w[-1])]
        try:
            z = _solve_on_face(objective, mats, b, v, tol)
        except InfeasibleInstanceError:
            z = z0
        cert = farkas_certificate(mats, b, known_feasible=z, tol=tol)
        lam = cert.matrix
        yy, *_ = np.linalg.lstsq(np.vstack([_svec(m) for m in mats]).T, _svec(lam), rcond=None)
        refined = refine_kkt(z, yy, mats, b, obj=None, rank_tol=rank_tol,
                             normalize_trace=True)
        if refined is not None:
            z2, yy2, lam2 = refined
            if np.linalg.eigvalsh(lam2).min() >= -1e-8 * max(1.0, float(np.abs(lam2).max())):
                z, yy, lam = z2, yy2, lam2
        mult = {k: float(c) for k, c in zip(kinds, yy)}
        stretch_coef = 0.0

    # configuration: pins extended by zeros, free vectors from the blocks of Z
    ylift = z[:d, d:]
    xblk = z[d:, d:]
    zz = _sym(xblk - ylift.T @ ylift)
    zfac = gram_factor(zz, tol=rank_tol, dim=n2)
    vecs = np.zeros((g.n, dim))
    for vi in v1:
        vecs[vi, :d] = pins[pin_index[vi]]
    for k, vj in enumerate(v2):
        vecs[vj, :d] = ylift[:, k]
        vecs[vj, d:] = zfac[k]
    ghost = g.add_edges([(s_, t_)])
    config = Configuration(vecs, ghost)

    stress_mat = np.zeros((g.n, g.n))
    for (i, j) in g.edges:
        if i in free_index and j in free_index:
            stress_mat[i, j] = stress_mat[j, i] = mult[("free_edge", *sorted((i, j)))] / 2.0
        elif i in free_index or j in free_index:
            vi, vj = (j, i) if i in free_index else (i, j)
            stress_mat[vi, vj] = stress_mat[vj, vi] = mult[("cross", vi, vj)] / 2.0
    for v in v2:
        stress_mat[v, v] = mult[("free_diag", v, v)]
    stress_mat[s_, t_] = stress_mat[t_, s_] = stretch_coef
    # the free-block entries must be the actual slack block (psd certificate)
    lam22 = lam[d:, d:]
    for ki, vi in enumerate(v2):
        for kj, vj in enumerate(v2):
            stress_mat[vi, vj] = lam22[ki, kj]

    if float(np.max(np.abs(lam22))) <= 1e-9 * scale:
        return config, None
    stress = StressMatrix(stress_mat, g, stretched_pair=(s_, t_), pinned_free=tuple(v2))
    return config, stress


# -- rank reduction -------------------------------------------------------------------


def rank_reduce(x: np.ndarray, mats, tol: float = 1e-7, max_rounds: int = 100) -> np.ndarray:
    """Move x along constraint-null directions of its own face until the rank
    meets the bound floor((sqrt(1+8m)-1)/2) implied by the constraint count.
    """
    mats = [_sym(np.asarray(a, dtype=float)) for a in mats]
    m = len(mats)
    bound = int(math.floor((math.sqrt(1 + 8 * m) - 1) / 2))
    x = _sym(np.asarray(x, dtype=float))
    for _ in range(max_rounds):
        w, u = np.linalg.eigh(x)
        scale = max(1.0, w[-1] if w.size else 1.0)
        keep = w > tol * scale
        r = int(keep.sum())
        if r <= bound or r == 0:
            break
        v = u[:, keep] * np.sqrt(w[keep])
        rows = np.vstack([_svec(_sym(v.T @ a @ v)) for a in mats])
        _, sv, vt = np.linalg.svd(rows, full_matrices=True)
        null_dim = vt.shape[0] - int(np.sum(sv > 1e-9 * max(1.0, sv[0] if sv.size else 1.0)))
        if null_dim == 0:
            break
        delta = _unsvec(vt[-1], r)
        lam = np.linalg.eigvalsh(delta)
        peak = lam[-1] if abs(lam[-1]) >= abs(lam[0]) else lam[0]
        if abs(peak) < 1e-12:
            break
        x = _sym(v @ (np.eye(r) - delta / peak) @ v.T)
    return x
