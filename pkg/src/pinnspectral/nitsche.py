"""Nitsche solves of the Poisson problem in a truncated orthonormal basis.

With ``u_r = sum_{j<=r} c_j q_j`` the discrete system ``A c = b`` is

    A[l, j] = -<grad q_l, k grad q_j>
              + int_bdry k (q_l dn q_j + dn q_l q_j - beta q_l q_j) ds
    b[l]    = -<q_l, f> + int_bdry k (dn q_l g - beta q_l g) ds

which is the negative of the usual symmetric Nitsche system.
"""

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .problems import PoissonProblem

__all__ = [
    "DEFAULT_BETA",
    "COND_LIMIT",
    "PoissonProblem",
    "NitscheSystem",
    "SweepRecord",
    "SweepReport",
    "BasisSample",
    "assemble",
    "solve",
    "evaluate_solution",
    "evaluate_solution_gradient",
    "residual_norms",
    "error_norms",
    "nitsche_energy",
    "rank_sweep",
    "NitscheSolver",
]

DEFAULT_BETA = 200.0
COND_LIMIT = 1e14


@dataclass
class NitscheSystem:
    A: np.ndarray
    b: np.ndarray
    beta: float
    rank: int


@dataclass
class BasisSample:
    """Basis values and derivatives tabulated on a quadrature rule up to rank ``r``."""

    rank: int
    vals: np.ndarray
    grads: np.ndarray
    laps: np.ndarray
    bvals: np.ndarray
    bnormal: np.ndarray

    @classmethod
    def tabulate(cls, basis, rule, r):
        vals, grads, laps = basis.derivatives(rule.interior_nodes, r)
        bv, bg, _ = basis.derivatives(rule.boundary_nodes, r, order=1)
        bn = np.einsum("nkd,nd->nk", bg, rule.boundary_normals)
        return cls(r, vals, grads, laps, bv, bn)


def _operator(sample, rule, k_int, k_bdry, beta):
    w = rule.interior_weights * k_int
    stiff = np.einsum("n,nld,njd->lj", w, sample.grads, sample.grads)
    wb = rule.boundary_weights * k_bdry
    cross = (sample.bvals * wb[:, None]).T @ sample.bnormal
    pen = (sample.bvals * wb[:, None]).T @ sample.bvals
    return -stiff + cross + cross.T - beta * pen


def _boundary_load(sample, rule, k_bdry, g_vals, beta):
    wb = rule.boundary_weights * k_bdry * g_vals
    return sample.bnormal.T @ wb - beta * (sample.bvals.T @ wb)


def assemble(basis, r, problem, beta=DEFAULT_BETA, rule=None, sample=None):
    """Assemble the Nitsche system for ranks ``0..r``.

    ``rule`` is the quadrature used for every integral; a precomputed
    ``sample`` of at least rank ``r`` may be passed instead of re-evaluating
    the basis.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if sample is None:
        sample = BasisSample.tabulate(basis, rule, r)
    s = _truncate(sample, r)
    k_int = problem.k_at(rule.interior_nodes)
    k_bdry = problem.k_at(rule.boundary_nodes)
    A = _operator(s, rule, k_int, k_bdry, beta)
    f = problem.f(rule.interior_nodes)
    g = problem.g(rule.boundary_nodes)
    b = -(s.vals.T @ (rule.interior_weights * f)) + _boundary_load(s, rule, k_bdry, g, beta)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise FloatingPointError("non-finite entries in the Nitsche system")
    return NitscheSystem(A, b, beta, r)


def _truncate(sample, r):
    if r > sample.rank:
        raise ValueError(f"sample only covers rank {sample.rank}, asked for {r}")
    m = r + 1
    return BasisSample(r, sample.vals[:, :m], sample.grads[:, :m], sample.laps[:, :m],
                       sample.bvals[:, :m], sample.bnormal[:, :m])


def solve(system):
    """Dense LU solve with partial pivoting.

    Returns
    -------
    c : ndarray
    cond : float
        2-norm condition number of ``A``.
    flagged : bool
        ``True`` when ``cond`` exceeds ``COND_LIMIT`` or LU broke down.
    """
    A = system.A
    s = np.linalg.svd(A, compute_uv=False)
    cond = np.inf if s[-1] == 0 else s[0] / s[-1]
    try:
        with warnings.catch_warnings():
            # exact singularity is reported through ``flagged``
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            c = scipy.linalg.lu_solve(scipy.linalg.lu_factor(A, check_finite=True), system.b)
    except (ValueError, scipy.linalg.LinAlgError):
        return np.full(len(system.b), np.nan), cond, True
    flagged = bool(cond > COND_LIMIT or not np.all(np.isfinite(c)))
    return c, cond, flagged


def evaluate_solution(basis, c, X):
    c = np.asarray(c, dtype=float)
    return basis.eval_basis(X, len(c) - 1) @ c


def evaluate_solution_gradient(basis, c, X):
    c = np.asarray(c, dtype=float)
    return np.einsum("nkd,k->nd", basis.eval_basis_gradient(X, len(c) - 1), c)


def _norms(values, weights):
    return float(np.sqrt(np.dot(weights, values**2))), float(np.max(np.abs(values)))


def residual_norms(basis, c, problem, rule, sample=None):
    """L2 and max norms of ``e_r = -div(k grad u_r) - f`` on ``rule``."""
    X = rule.interior_nodes
    c = np.asarray(c, dtype=float)
    r = len(c) - 1
    if sample is None:
        _, grads, laps = basis.derivatives(X, r)
    else:
        grads, laps = sample.grads[:, : r + 1], sample.laps[:, : r + 1]
    lap_u = laps @ c
    e = -problem.k_at(X) * lap_u - problem.f(X)
    if callable(problem.k):
        grad_u = np.einsum("nkd,k->nd", grads, c)
        e -= np.einsum("nd,nd->n", problem.grad_k_at(X), grad_u)
    return _norms(e, rule.interior_weights)


def error_norms(values, exact, weights):
    return _norms(np.asarray(values) - np.asarray(exact), weights)


def nitsche_energy(basis, c, problem, beta, rule):
    """Quadratic functional whose stationary point is the Nitsche solution.

    The penalty enters as ``beta / 2`` so that its first variation
    reproduces the ``beta`` of the assembled system.
    """
    c = np.asarray(c, dtype=float)
    X, w = rule.interior_nodes, rule.interior_weights
    r = len(c) - 1
    vals, grads, _ = basis.derivatives(X, r, order=1)
    u = vals @ c
    gu = np.einsum("nkd,k->nd", grads, c)
    bv, bg, _ = basis.derivatives(rule.boundary_nodes, r, order=1)
    ub = bv @ c
    dn = np.einsum("nkd,k,nd->n", bg, c, rule.boundary_normals)
    kb = problem.k_at(rule.boundary_nodes)
    jump = ub - problem.g(rule.boundary_nodes)
    vol = np.dot(w, 0.5 * problem.k_at(X) * np.sum(gu**2, axis=1) - problem.f(X) * u)
    bdry = np.dot(rule.boundary_weights, -kb * dn * jump + 0.5 * beta * kb * jump**2)
    return float(vol + bdry)


@dataclass
class SweepRecord:
    r: int
    err_L2: float = np.nan
    err_Linf: float = np.nan
    res_L2: float = np.nan
    res_Linf: float = np.nan
    cond: float = np.nan
    cond_flag: bool = False


@dataclass
class SweepReport:
    """Per-rank errors and residuals plus the residual-selected rank."""

    records: list
    best_r: int
    baseline_L2: Optional[float] = None
    baseline_Linf: Optional[float] = None
    coefficients: dict = field(default_factory=dict, repr=False)

    COLUMNS = ("r", "err_L2", "err_Linf", "res_L2", "res_Linf", "cond_flag")

    def column(self, name):
        return np.array([getattr(rec, name) for rec in self.records])

    def record(self, r):
        for rec in self.records:
            if rec.r == r:
                return rec
        raise KeyError(r)

    @property
    def min_err_L2(self):
        return float(np.nanmin(self.column("err_L2")))

    @property
    def argmin_err_L2(self):
        return int(self.records[int(np.nanargmin(self.column("err_L2")))].r)

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for rec in self.records:
            writer.writerow([rec.r] + [repr(float(getattr(rec, c))) for c in self.COLUMNS[1:-1]] + [int(rec.cond_flag)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def select_rank(records):
    """Smallest ``r`` minimizing the residual L2 norm over unflagged records."""
    ok = [rec for rec in records if np.isfinite(rec.res_L2) and not rec.cond_flag] or records
    best = min(ok, key=lambda rec: (rec.res_L2, rec.r))
    return best.r


def rank_sweep(basis, problem, r_list, beta=DEFAULT_BETA, rule=None, fine_rule=None, baseline=None):
    """Solve at every rank in ``r_list`` and record errors and residuals.

    Parameters
    ----------
    basis : OrthonormalBasis or LegendreBasis
    problem : PoissonProblem
    r_list : iterable of int
    rule : QuadratureRule
        Rule used to assemble the systems.
    fine_rule : QuadratureRule, optional
        Rule for error and residual norms; defaults to ``rule``.
    baseline : callable, optional
        Reference approximation (typically the parent network) whose errors
        are reported alongside.
    """
    r_list = sorted(set(int(r) for r in r_list))
    if not r_list:
        raise ValueError("empty rank list")
    if r_list[-1] >= basis.r_max_:
        raise ValueError(f"rank {r_list[-1]} exceeds r_max - 1 = {basis.r_max_ - 1}")
    fine_rule = fine_rule or rule
    r_top = r_list[-1]
    sample = BasisSample.tabulate(basis, rule, r_top)
    fvals, _, flaps = basis.derivatives(fine_rule.interior_nodes, r_top)
    fgrads = None
    if callable(problem.k):
        fgrads = basis.eval_basis_gradient(fine_rule.interior_nodes, r_top)
    Xf, wf = fine_rule.interior_nodes, fine_rule.interior_weights
    exact = problem.exact(Xf) if problem.exact is not None else None
    f_fine = problem.f(Xf)
    k_fine = problem.k_at(Xf)
    gk_fine = problem.grad_k_at(Xf) if callable(problem.k) else None

    records, coefs = [], {}
    for r in r_list:
        system = assemble(basis, r, problem, beta, rule, sample=sample)
        c, cond, flagged = solve(system)
        rec = SweepRecord(r, cond=cond, cond_flag=flagged)
        if np.all(np.isfinite(c)):
            m = r + 1
            u = fvals[:, :m] @ c
            e = -k_fine * (flaps[:, :m] @ c) - f_fine
            if gk_fine is not None:
                e -= np.einsum("nd,nkd,k->n", gk_fine, fgrads[:, :m], c)
            rec.res_L2, rec.res_Linf = _norms(e, wf)
            if exact is not None:
                rec.err_L2, rec.err_Linf = error_norms(u, exact, wf)
        records.append(rec)
        coefs[r] = c
    report = SweepReport(records, select_rank(records), coefficients=coefs)
    if baseline is not None and exact is not None:
        report.baseline_L2, report.baseline_Linf = error_norms(baseline(Xf), exact, wf)
    return report


class NitscheSolver(RegressorMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` solves the Nitsche system, ``predict`` evaluates ``u_r``.

    Parameters
    ----------
    basis : fitted OrthonormalBasis or LegendreBasis
    rank : int or None
        Truncation rank; ``None`` uses the largest admissible rank.
    beta : float, default=200
    """

    def __init__(self, basis=None, rank=None, beta=DEFAULT_BETA):
        self.basis = basis
        self.rank = rank
        self.beta = beta

    def fit(self, problem, rule):
        r = self.basis.r_max_ - 1 if self.rank is None else self.rank
        system = assemble(self.basis, r, problem, self.beta, rule)
        self.coef_, self.cond_, self.flagged_ = solve(system)
        self.system_ = system
        return self

    def predict(self, X):
        check_is_fitted(self)
        return evaluate_solution(self.basis, self.coef_, X)

    def predict_gradient(self, X):
        check_is_fitted(self)
        return evaluate_solution_gradient(self.basis, self.coef_, X)

    def residual(self, problem, rule):
        check_is_fitted(self)
        return residual_norms(self.basis, self.coef_, problem, rule)
