"""Completion instances: values on V u E, feasibility checks, genericity perturbation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import networkx as nx
import numpy as np

from gramdim.graphs import Graph, _norm_edge

__all__ = [
    "PartialMatrix",
    "ElliptopeVector",
    "ValidationReport",
    "validate",
    "project",
    "perturb_to_generic",
    "cycle_sign_gap",
    "circuit_gaps",
    "GenericityError",
]


class GenericityError(Exception):
    def __init__(self, message, circuit=None):
        super().__init__(message)
        self.circuit = circuit


@dataclass(frozen=True)
class PartialMatrix:
    """Real values on the diagonal and the edges of a graph (a vector in R^{V u E})."""

    graph: Graph
    diagonal: np.ndarray
    off_diagonal: dict

    def __post_init__(self):
        diag = np.asarray(self.diagonal, dtype=float).ravel()
        if diag.size != self.graph.n:
            raise ValueError("one diagonal value per vertex required")
        if np.any(diag < 0):
            raise ValueError("diagonal values must be nonnegative")
        off = {_norm_edge(*e): float(v) for e, v in self.off_diagonal.items()}
        if set(off) != set(self.graph.edges):
            raise ValueError("off-diagonal values must cover exactly the edge set")
        object.__setattr__(self, "diagonal", diag)
        object.__setattr__(self, "off_diagonal", off)

    def value(self, i: int, j: int) -> float:
        if i == j:
            return float(self.diagonal[i])
        return self.off_diagonal[_norm_edge(i, j)]

    def specified_pairs(self):
        return [(v, v) for v in range(self.graph.n)] + self.graph.edge_list()

    def residual_against(self, x: np.ndarray) -> float:
        """Max-norm error of a full symmetric matrix on the specified entries."""
        worst = 0.0
        for (i, j) in self.specified_pairs():
            worst = max(worst, abs(x[i, j] - self.value(i, j)))
        return worst

    def restrict(self, vertices, extra: Optional[dict] = None) -> "PartialMatrix":
        """Instance induced on `vertices`; `extra` supplies values for added edges."""
        extra = {_norm_edge(*e): float(v) for e, v in (extra or {}).items()}
        sub, idx = self.graph.induced(vertices)
        sub = sub.add_edges((idx[a], idx[b]) for (a, b) in extra)
        diag = [self.diagonal[v] for v in sorted(vertices)]
        off = {}
        for (i, j) in sub.edges:
            back = {v: k for k, v in idx.items()}
            a, b = _norm_edge(back[i], back[j])
            off[(i, j)] = extra.get((a, b), self.off_diagonal.get((a, b)))
        return PartialMatrix(sub, np.array(diag), off)

    def to_json_dict(self) -> dict:
        return {
            "graph": self.graph.to_json_dict(),
            "diag": [float(v) for v in self.diagonal],
            "entries": [
                {"i": i, "j": j, "v": float(self.off_diagonal[(i, j)])}
                for (i, j) in self.graph.edge_list()
            ],
        }

    @staticmethod
    def from_json_dict(d: dict, graph: Optional[Graph] = None) -> "PartialMatrix":
        from gramdim.graphs import named_graph

        if graph is None:
            spec = d["graph"]
            graph = named_graph(spec) if isinstance(spec, str) else Graph.from_json_dict(spec)
        entries = {(e["i"], e["j"]): e["v"] for e in d["entries"]}
        diag = d.get("diag")
        if diag is None:
            diag = np.ones(graph.n)
        return PartialMatrix(graph, np.asarray(diag, dtype=float), entries)


@dataclass(frozen=True)
class ElliptopeVector:
    """Edge values of a correlation-matrix instance (all diagonal entries 1)."""

    graph: Graph
    values: dict

    def __post_init__(self):
        vals = {_norm_edge(*e): float(v) for e, v in self.values.items()}
        if set(vals) != set(self.graph.edges):
            raise ValueError("values must cover exactly the edge set")
        bad = [e for e, v in vals.items() if abs(v) > 1.0 + 1e-12]
        if bad:
            raise ValueError(f"elliptope values must lie in [-1, 1]; offending edges {bad}")
        object.__setattr__(self, "values", vals)

    def to_partial(self) -> PartialMatrix:
        return PartialMatrix(self.graph, np.ones(self.graph.n), dict(self.values))

    @staticmethod
    def from_partial(a: PartialMatrix) -> "ElliptopeVector":
        if np.max(np.abs(a.diagonal - 1.0)) > 1e-12:
            raise ValueError("not an elliptope instance: diagonal is not all ones")
        return ElliptopeVector(a.graph, dict(a.off_diagonal))


@dataclass(frozen=True)
class ValidationReport:
    feasible_necessary: bool
    violations: tuple  # ((clique vertices), min_eigenvalue) pairs

    def worst(self):
        return min(self.violations, key=lambda t: t[1]) if self.violations else None


def validate(a: PartialMatrix, tol: float = 1e-8) -> ValidationReport:
    """Check every fully specified principal submatrix (maximal clique) for psd-ness.

    Necessary for completability in general and sufficient on chordal graphs.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    violations = []
    for clique in nx.find_cliques(a.graph.to_nx()):
        cl = sorted(clique)
        sub = np.empty((len(cl), len(cl)))
        for r, i in enumerate(cl):
            for c, j in enumerate(cl):
                sub[r, c] = a.value(i, j)
        w = float(np.linalg.eigvalsh(sub).min()) if cl else 0.0
        if w < -tol:
            violations.append((tuple(cl), w))
    return ValidationReport(not violations, tuple(violations))


def project(x: np.ndarray, g: Graph) -> PartialMatrix:
    """Projection of a symmetric matrix onto the diagonal and edge entries of g."""
    x = np.asarray(x, dtype=float)
    if x.shape != (g.n, g.n):
        raise ValueError(f"matrix size {x.shape} does not match vertex count {g.n}")
    if np.max(np.abs(x - x.T), initial=0.0) > 1e-10:
        raise ValueError("matrix is not symmetric")
    off = {(i, j): float(x[i, j]) for (i, j) in g.edges}
    return PartialMatrix(g, np.diag(x).copy(), off)


# -- cycle genericity ----------------------------------------------------------


def cycle_sign_gap(angles) -> tuple:
    """Best signed angle sum on a circuit: (signs, k, gap to the nearest 2k*pi).

    The circuit instance cos(angles) has a unit-vector Gram representation in
    the plane exactly when the gap is zero for some sign pattern.
    """
    angles = np.asarray(angles, dtype=float)
    n = angles.size
    best = (None, 0, float("inf"))
    # epsilon and -epsilon give the same distance; fix the first sign
    for mask in range(2 ** max(n - 1, 0)):
        signs = [1] + [1 if (mask >> t) & 1 == 0 else -1 for t in range(n - 1)]
        total = float(np.dot(signs, angles))
        k = round(total / (2 * math.pi))
        gap = abs(total - 2 * math.pi * k)
        if gap < best[2]:
            best = (tuple(signs), int(k), gap)
    return best


def circuit_gaps(x: ElliptopeVector, max_length: Optional[int] = None):
    """All circuits of the graph with their best sign-pattern gaps, worst first."""
    gx = x.graph.to_nx()
    out = []
    for cyc in nx.simple_cycles(gx):
        if max_length is not None and len(cyc) > max_length:
            continue
        vals = []
        for t in range(len(cyc)):
            vals.append(x.values[_norm_edge(cyc[t], cyc[(t + 1) % len(cyc)])])
        angles = np.arccos(np.clip(vals, -1.0, 1.0))
        _, _, gap = cycle_sign_gap(angles)
        out.append((tuple(cyc), gap))
    out.sort(key=lambda t: t[1])
    return out


def strict_completability_margin(a: PartialMatrix, tol: float = 1e-8) -> float:
    """Maximum attainable minimum eigenvalue over psd completions (Slater probe)."""
    from gramdim.sdp import completion_constraints, slater_probe

    mats, b, _ = completion_constraints(a)
    t_star, _, _ = slater_probe(mats, b, a.graph.n, tol)
    return t_star


def perturb_to_generic(x: ElliptopeVector, epsilon: float, seed: int,
                       max_retries: int = 40,
                       margin: Optional[float] = None) -> ElliptopeVector:
    """Move x by at most epsilon (sup norm) into the generic set.

    Generic means: strictly completable, and no circuit passes the planar
    cycle test with gap below `margin`.  The perturbation first blends toward
    the elliptope center (which guarantees a strict completability margin) and
    then adds seeded noise small enough to keep it; only the circuit margins
    need retries.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    margin = margin if margin is not None else max(1e-8, 0.02 * epsilon)
    gaps = circuit_gaps(x)
    boundary = any(abs(v) >= 1.0 - 1e-12 for v in x.values.values())
    if not boundary and (not gaps or gaps[0][1] >= margin):
        try:
            if strict_completability_margin(x.to_partial()) > 1e-9:
                return x
        except Exception:
            pass
    rng = np.random.default_rng(seed)
    n = x.graph.n
    tau = epsilon / 2.0
    noise_scale = min(epsilon / 2.0, tau / (2.0 * max(n, 1)))
    edges = x.graph.edge_list()
    worst = None
    for _ in range(max_retries):
        vals = {}
        for e in edges:
            v = (1 - tau) * x.values[e] + rng.uniform(-noise_scale, noise_scale)
            vals[e] = float(np.clip(v, -1.0 + 1e-9, 1.0 - 1e-9))
        cand = ElliptopeVector(x.graph, vals)
        gaps = circuit_gaps(cand)
        if gaps and gaps[0][1] < margin:
            worst = gaps[0]
            continue
        if strict_completability_margin(cand.to_partial()) <= 1e-9:
            worst = ("slater", 0.0)
            continue
        return cand
    raise GenericityError(
        f"no generic perturbation found after {max_retries} tries", circuit=worst
    )
