"""Linear mixed-effects models fitted by profiled REML.

Random effects are parameterised by relative covariance factors: for a term
with k columns per level, ``b_level = sigma * T u`` with ``T`` lower
triangular (k(k+1)/2 parameters, diagonal >= 0) and ``u ~ N(0, I)``. For a
given theta the fixed effects and the residual variance are profiled out of
the penalised least-squares problem

    A = Lambda' Z'Z Lambda + I
    S = [X y]'[X y] - B' A^-1 B,        B = Lambda' Z' [X y]

which gives ``beta = Sxx^-1 Sxy``, ``r2 = Syy - Sxy' beta`` and the REML
deviance ``logdet A + logdet Sxx + (n - p)(1 + log(2 pi r2 / (n - p)))``.
The deviance is minimised over theta with bounded Powell search, restarted
from its own optimum until a restart no longer improves the deviance.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg, optimize, sparse, stats
from scipy.sparse import linalg as splinalg

DENSE_LIMIT = 2500  # random-effect columns above which the sparse solver is used
FATOL = 1e-8
MAXFEV = 10_000
TRIM_SD = 2.5
TRIM_WARN_FRACTION = 0.04
INFORMATIVITY = ("fwd_inf_z", "bwd_inf_z")


class RankDeficientError(ValueError):
    pass


class ExcessTrimWarning(UserWarning):
    pass


# -- model specification ------------------------------------------------------

@dataclass(frozen=True)
class RandomTerm:
    group: str
    slopes: tuple = ()  # columns besides the intercept

    @property
    def names(self) -> tuple:
        return ("(Intercept)",) + tuple(self.slopes)


@dataclass
class ModelSpec:
    dependent: str
    fixed: list
    random: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"dependent": self.dependent, "fixed": list(self.fixed),
                "random": [{"group": t.group, "slopes": list(t.slopes)} for t in self.random]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        terms = [RandomTerm(t["group"], tuple(t.get("slopes", ()))) for t in d.get("random", [])]
        return cls(d["dependent"], list(d["fixed"]), terms)

    @classmethod
    def read_json(cls, path) -> "ModelSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def with_fixed(self, extra: str) -> "ModelSpec":
        return ModelSpec(self.dependent, list(self.fixed) + [extra], list(self.random))


def default_spec(dependent: str) -> ModelSpec:
    """Crossed word and tone-sequence intercepts plus correlated speaker slopes."""
    from .predictors import FIXED_EFFECTS, syncat_z
    return ModelSpec(
        dependent,
        list(FIXED_EFFECTS) + [syncat_z(dependent)],
        [RandomTerm("word_type"), RandomTerm("tone_sequence"), RandomTerm("speaker_id", INFORMATIVITY)],
    )


# -- design -------------------------------------------------------------------

@dataclass
class TermDesign:
    group: str
    names: tuple
    levels: list
    index: np.ndarray  # level index per row
    Xr: np.ndarray  # n x k

    @property
    def k(self) -> int:
        return len(self.names)

    @property
    def n_params(self) -> int:
        return self.k * (self.k + 1) // 2


@dataclass
class Design:
    y: np.ndarray
    X: np.ndarray
    fixed_names: list
    terms: list
    Z: sparse.csc_matrix
    order: np.ndarray | None = None  # canonical row order; row i of the design is input row order[i]

    def unsort(self, v: np.ndarray) -> np.ndarray:
        """Per-row values back in input order."""
        if self.order is None:
            return v
        out = np.empty_like(v)
        out[self.order] = v
        return out

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Z.shape[1]


def _column(table, name: str) -> np.ndarray:
    try:
        col = table[name]
    except KeyError:
        raise KeyError(f"column {name!r} not in table") from None
    return np.asarray(col, dtype=float)


def aliased_columns(X: np.ndarray, names: list, tol: float = 1e-9) -> list:
    """Names of columns that are linear combinations of earlier ones."""
    _, r, perm = linalg.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d.size == 0:
        return []
    rank = int(np.sum(d > tol * d[0]))
    return sorted(names[i] for i in perm[rank:])


def build_design(table, spec: ModelSpec) -> Design:
    """Response, fixed-effects matrix (intercept first) and random-effects matrix.

    Z has one block per term; within a block the columns are level-major
    (all k columns of level 0, then level 1, ...).
    """
    y = _column(table, spec.dependent)
    n = len(y)
    names = ["(Intercept)"] + list(spec.fixed)
    X = np.column_stack([np.ones(n)] + [_column(table, c) for c in spec.fixed])
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("missing or non-finite values in model columns")
    bad = aliased_columns(X, names)
    if bad:
        raise RankDeficientError(f"fixed-effects matrix is rank deficient; aliased columns: {', '.join(bad)}")
    groups_idx = []
    for t in spec.random:
        groups = [str(g) for g in table[t.group]]
        levels = sorted(set(groups))
        if len(levels) < 2:
            raise ValueError(f"grouping factor {t.group!r} needs at least 2 levels")
        lookup = {g: i for i, g in enumerate(levels)}
        groups_idx.append((t, levels, np.array([lookup[g] for g in groups], dtype=np.int64)))
    # Sort rows by content so that floating-point sums, and hence the whole
    # fit, do not depend on the order rows arrive in.
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, 0, -1)] + [g[2] for g in reversed(groups_idx)]
    order = np.lexsort(keys)
    y, X = y[order], X[order]
    terms, blocks = [], []
    for t, levels, idx in groups_idx:
        idx = idx[order]
        Xr = np.column_stack([np.ones(n)] + [_column(table, c)[order] for c in t.slopes])
        k = Xr.shape[1]
        rows = np.repeat(np.arange(n), k)
        cols = (idx[:, None] * k + np.arange(k)[None, :]).ravel()
        blocks.append(sparse.csc_matrix((Xr.ravel(), (rows, cols)), shape=(n, len(levels) * k)))
        terms.append(TermDesign(t.group, t.names, levels, idx, Xr))
    Z = sparse.hstack(blocks, format="csc") if blocks else sparse.csc_matrix((n, 0))
    return Design(y, X, names, terms, Z, order)


# -- theta <-> factors ------------------------------------------------------------

def theta_bounds(design: Design) -> list:
    out = []
    for t in design.terms:
        for j in range(t.k):
            for i in range(j, t.k):
                out.append((0.0, None) if i == j else (None, None))
    return out


def theta_start(design: Design) -> np.ndarray:
    return np.array([1.0 if lo == 0.0 else 0.0 for lo, _ in theta_bounds(design)])


def factors(design: Design, theta) -> list:
    """Lower-triangular T per term, filled column by column."""
    out, pos = [], 0
    for t in design.terms:
        T = np.zeros((t.k, t.k))
        for j in range(t.k):
            for i in range(j, t.k):
                T[i, j] = theta[pos]
                pos += 1
        out.append(T)
    return out


def _lambda(design: Design, theta) -> sparse.csc_matrix:
    mats = [sparse.kron(sparse.identity(len(t.levels)), T, format="csc")
            for t, T in zip(design.terms, factors(design, theta))]
    return sparse.block_diag(mats, format="csc") if mats else sparse.csc_matrix((0, 0))


# -- deviance ---------------------------------------------------------------------

class _Profiler:
    """Cached cross-products and the profiled REML deviance for one design."""

    def __init__(self, design: Design, dense_limit: int = DENSE_LIMIT):
        self.d = design
        Xy = np.column_stack([design.X, design.y])
        self.XytXy = Xy.T @ Xy
        self.ZtXy = np.asarray(design.Z.T @ Xy)
        self.dense = design.q <= dense_limit
        ZtZ = (design.Z.T @ design.Z).tocsc()
        self.ZtZ = ZtZ.toarray() if self.dense else ZtZ
        self.n, self.p = design.n, design.p

    def lambda_t(self, Ts, M: np.ndarray) -> np.ndarray:
        """Lambda' M for a dense M, one reshape per term."""
        out = np.empty_like(M)
        o = 0
        for t, T in zip(self.d.terms, Ts):
            size = len(t.levels) * t.k
            blk = M[o:o + size]
            if t.k == 1:
                out[o:o + size] = T[0, 0] * blk
            else:
                shaped = blk.reshape(len(t.levels), t.k, -1)
                out[o:o + size] = np.matmul(T.T, shaped).reshape(size, -1)
            o += size
        return out

    def solve(self, theta):
        """Returns (logdet A, solve(rhs) callable, factors)."""
        Ts = factors(self.d, theta)
        q = self.d.q
        if self.dense:
            A = self.lambda_t(Ts, self.lambda_t(Ts, self.ZtZ).T)  # ZtZ is symmetric
            A[np.diag_indices(q)] += 1.0
            c = linalg.cho_factor(A, lower=True, check_finite=False)
            logdet = 2.0 * float(np.sum(np.log(np.diag(c[0]))))
            return logdet, (lambda rhs: linalg.cho_solve(c, rhs, check_finite=False)), Ts
        Lam = _lambda(self.d, theta)
        A = (Lam.T @ self.ZtZ @ Lam + sparse.identity(q)).tocsc()
        lu = splinalg.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
        logdet = float(np.sum(np.log(np.abs(lu.U.diagonal()))))
        return logdet, lu.solve, Ts

    def profile(self, theta):
        p = self.p
        if self.d.q:
            logdet, solve, Ts = self.solve(theta)
            B = self.lambda_t(Ts, self.ZtXy)
            AinvB = solve(B)
            S = self.XytXy - B.T @ AinvB
        else:
            logdet, AinvB, B, S = 0.0, None, None, self.XytXy.copy()
        Sxx, Sxy, Syy = S[:p, :p], S[:p, p], S[p, p]
        cx = linalg.cho_factor(Sxx, lower=True, check_finite=False)
        beta = linalg.cho_solve(cx, Sxy, check_finite=False)
        r2 = float(Syy - Sxy @ beta)
        return logdet, cx, beta, r2, AinvB

    def deviance(self, theta) -> float:
        try:
            logdet, cx, _, r2, _ = self.profile(theta)
        except (linalg.LinAlgError, RuntimeError):
            return math.inf
        if not r2 > 0:
            return math.inf
        m = self.n - self.p
        return logdet + 2.0 * float(np.sum(np.log(np.diag(cx[0])))) + m * (1.0 + math.log(2.0 * math.pi * r2 / m))


def reml_deviance(design: Design, theta) -> float:
    return _Profiler(design).deviance(np.asarray(theta, dtype=float))


# -- fit ------------------------------------------------------------------------

@dataclass
class FixedEffect:
    name: str
    estimate: float
    se: float
    t: float
    p: float


@dataclass
class VarComp:
    group: str
    names: tuple
    sds: list
    corr: list  # k x k nested lists


@dataclass
class FitResult:
    fixed: list
    theta: list
    varcomp: list
    sigma: float
    reml_deviance: float
    n_obs: int
    converged: bool
    singular: bool = False
    degenerate: bool = False
    n_evals: int = 0
    trace: list = field(default_factory=list)  # best deviance after each optimiser iteration
    message: str = ""
    residuals: np.ndarray | None = field(default=None, repr=False)
    fitted: np.ndarray | None = field(default=None, repr=False)

    def coef(self, name: str) -> FixedEffect:
        for f in self.fixed:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("residuals", "fitted", "trace")}
        d["fixed"] = [asdict(f) for f in self.fixed]
        d["varcomp"] = [{"group": v.group, "names": list(v.names), "sds": v.sds, "corr": v.corr}
                        for v in self.varcomp]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        """Inverse of ``to_dict`` (per-row residuals and the trace are not stored)."""
        d = dict(d)
        d["fixed"] = [FixedEffect(**f) for f in d["fixed"]]
        d["varcomp"] = [VarComp(v["group"], tuple(v["names"]), v["sds"], v["corr"]) for v in d["varcomp"]]
        return cls(**d)

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _pvalue(t: float) -> float:
    return float(2.0 * stats.norm.sf(abs(t)))


def _varcomp(design: Design, theta, sigma: float) -> list:
    out = []
    for t, T in zip(design.terms, factors(design, theta)):
        cov = sigma * sigma * (T @ T.T)
        sds = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = cov / np.outer(sds, sds)
        corr = np.where(np.outer(sds, sds) > 0, np.clip(corr, -1.0, 1.0), 0.0)
        np.fill_diagonal(corr, 1.0)
        out.append(VarComp(t.group, t.names, [float(s) for s in sds], corr.tolist()))
    return out


def _assemble(design: Design, prof: _Profiler, theta, converged, n_evals, trace, message) -> FitResult:
    logdet, cx, beta, r2, AinvB = prof.profile(theta)
    m = design.n - design.p
    sigma2 = r2 / m
    cov = sigma2 * linalg.cho_solve(cx, np.eye(design.p), check_finite=False)
    se = np.sqrt(np.diag(cov))
    fixed = []
    for name, b, s in zip(design.fixed_names, beta, se):
        t = float(b / s) if s > 0 else math.inf
        fixed.append(FixedEffect(name, float(b), float(s), t, _pvalue(t)))
    fitted = design.X @ beta
    if design.q:
        u = AinvB[:, -1] - AinvB[:, :-1] @ beta  # A^-1 Lambda'Z'(y - X beta)
        fitted = fitted + design.Z @ (_lambda(design, theta) @ u)
    dev = prof.deviance(theta)
    sigma = math.sqrt(sigma2)
    vc = _varcomp(design, theta, sigma)
    singular = any(T[i, i] < 1e-4 for T in factors(design, theta) for i in range(T.shape[0]))
    return FitResult(fixed, [float(v) for v in theta], vc, sigma, float(dev), design.n, converged, singular,
                     False, n_evals, trace, message, design.unsort(design.y - fitted), design.unsort(fitted))


def _degenerate(design: Design) -> FitResult | None:
    beta, *_ = linalg.lstsq(design.X, design.y)
    resid = design.y - design.X @ beta
    if float(resid @ resid) > 1e-20 * max(1.0, float(design.y @ design.y)):
        return None
    theta = np.zeros(len(theta_bounds(design)))
    fixed = [FixedEffect(n, float(b), 0.0, math.nan, math.nan) for n, b in zip(design.fixed_names, beta)]
    return FitResult(fixed, theta.tolist(), _varcomp(design, theta, 0.0), 0.0, -math.inf, design.n, False,
                     True, True, 0, [], "degenerate: response is fitted exactly by the fixed effects",
                     design.unsort(resid), design.unsort(design.X @ beta))


def fit_reml(design: Design, start=None, fatol: float = FATOL, maxfev: int = MAXFEV,
             dense_limit: int = DENSE_LIMIT) -> FitResult:
    """Profiled-REML fit. Non-convergence is flagged on the result, not raised."""
    if design.n <= design.p:
        raise ValueError(f"need more observations ({design.n}) than fixed effects ({design.p})")
    degenerate = _degenerate(design)
    if degenerate is not None:
        return degenerate
    prof = _Profiler(design, dense_limit)
    if not design.terms:
        return _assemble(design, prof, np.zeros(0), True, 1, [prof.deviance(np.zeros(0))], "no random effects")

    bounds = theta_bounds(design)
    x0 = theta_start(design) if start is None else np.asarray(start, dtype=float)
    x0 = np.array([max(v, 0.0) if lo == 0.0 else v for v, (lo, _) in zip(x0, bounds)])
    cache = {}

    def f(th):
        key = th.tobytes()
        if key not in cache:
            cache[key] = prof.deviance(th)
        return cache[key]

    trace, evals = [], 0
    best = None
    converged = False
    # Powell's tolerance is relative; scale it so the absolute change is ~fatol
    ftol = fatol / max(1.0, abs(f(x0)))
    # Rounds of Powell with a bounded budget, each restarted from the best
    # point with fresh directions; this escapes the slow crawl along flat
    # ridges that boundary (near-singular) fits produce.
    budget = 200 * len(x0)
    while evals < maxfev:
        res = optimize.minimize(f, x0, method="Powell", bounds=bounds,
                                callback=lambda xk: trace.append(f(np.asarray(xk))),
                                options={"ftol": ftol, "xtol": 1e-6, "maxfev": min(budget, maxfev - evals)})
        evals += res.nfev
        improved = best is None or res.fun < best.fun - fatol
        if best is None or res.fun < best.fun:
            best = res
        if res.success and not improved:
            converged = True
            break
        x0 = best.x
    trace = list(np.minimum.accumulate(trace)) if trace else []
    msg = "converged" if converged else f"not converged after {evals} evaluations"
    return _assemble(design, prof, best.x, converged, evals, trace, msg)


def fit(table, spec: ModelSpec, **kw) -> FitResult:
    return fit_reml(build_design(table, spec), **kw)


# -- model criticism and mediation ------------------------------------------------

@dataclass
class Criticism:
    kept_index: np.ndarray
    fit: FitResult
    refit: FitResult
    excluded_fraction: float


def trim_mask(residuals, threshold: float = TRIM_SD) -> np.ndarray:
    """True for points within ``threshold`` SDs of the mean residual."""
    r = np.asarray(residuals, dtype=float)
    sd = r.std(ddof=1)
    return np.abs(r - r.mean()) <= threshold * sd


def model_criticism(table, spec: ModelSpec, threshold: float = TRIM_SD, first: FitResult | None = None,
                    **kw) -> Criticism:
    """One trim pass on conditional residuals, then one refit."""
    first = first if first is not None else fit(table, spec, **kw)
    keep = trim_mask(first.residuals, threshold)
    idx = np.flatnonzero(keep)
    frac = 1.0 - len(idx) / len(keep)
    if frac > TRIM_WARN_FRACTION:
        warnings.warn(f"model criticism removed {100 * frac:.2f}% of the data (more than "
                      f"{100 * TRIM_WARN_FRACTION:.0f}%)", ExcessTrimWarning, stacklevel=2)
    refit = first if len(idx) == len(keep) else fit(table.take(idx), spec, **kw)
    return Criticism(idx, first, refit, frac)


@dataclass
class MediationReport:
    dependent: str
    predictors: tuple
    columns: dict  # mediator name ("none" for the base fit) -> predictor -> {beta, se, t}

    def to_dict(self) -> dict:
        return {"dependent": self.dependent, "predictors": list(self.predictors), "columns": self.columns}


def _summary(result: FitResult, predictors) -> dict:
    return {p: {"beta": result.coef(p).estimate, "se": result.coef(p).se, "t": result.coef(p).t}
            for p in predictors}


def mediate(table, spec: ModelSpec, mediators, base: FitResult | None = None,
            predictors=INFORMATIVITY, **kw) -> MediationReport:
    """Refit with each mediator added as a fixed effect; the base fit is the "none" column."""
    mediators = [mediators] if isinstance(mediators, str) else list(mediators)
    for m in mediators:
        if m == spec.dependent:
            raise ValueError(f"mediator {m!r} is the dependent variable")
        if m in spec.fixed:
            raise ValueError(f"mediator {m!r} is already a fixed effect")
    base = base if base is not None else fit(table, spec, **kw)
    columns = {"none": _summary(base, predictors)}
    for m in mediators:
        columns[m] = _summary(fit(table, spec.with_fixed(m), **kw), predictors)
    return MediationReport(spec.dependent, tuple(predictors), columns)


def write_mediation(reports: list, json_path=None, tsv_path=None) -> None:
    if json_path is not None:
        Path(json_path).write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n", encoding="utf-8")
    if tsv_path is not None:
        with open(tsv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("dependent\tmediator\tpredictor\tbeta\tse\tt\n")
            for r in reports:
                for med, by_pred in r.columns.items():
                    for pred in r.predictors:
                        v = by_pred[pred]
                        fh.write(f"{r.dependent}\t{med}\t{pred}\t{v['beta']!r}\t{v['se']!r}\t{v['t']!r}\n")
