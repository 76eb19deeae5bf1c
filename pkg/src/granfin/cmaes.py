"""Covariance matrix adaptation evolution strategy, (mu/mu_w, lambda) flavour.

Follows Hansen's tutorial formulation: rank-based recombination weights,
cumulative step-size adaptation and rank-one plus rank-mu covariance
updates. Box constraints are handled by evaluating the objective at the
clamped point and adding a quadratic penalty on the distance to the box.
"""
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ObjectiveSpec:
    """Search box, starting distribution and stopping rules.

    ``lower``/``upper`` may hold +-inf for unbounded coordinates. A
    coordinate whose bounds coincide is held fixed.
    """

    x0: tuple
    sigma0: float
    lower: tuple = None
    upper: tuple = None
    budget: int = None
    ftarget: float = -np.inf
    tolx: float = 1e-12
    tolfun: float = 0.0
    popsize: int = None
    seed: int = 0
    penalty: float = 1e6

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        n = x0.size
        lo = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        hi = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if lo.shape != (n,) or hi.shape != (n,):
            raise ValueError("bounds must match the dimension of x0")
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ValueError("bounds must satisfy lower <= upper")
        if not (np.isfinite(self.sigma0) and self.sigma0 > 0):
            raise ValueError("sigma0 must be > 0")
        budget = 1000 * n if self.budget is None else int(self.budget)
        if budget < 10 * n:
            raise ValueError(f"budget must be at least 10 * dimension = {10 * n}")
        if self.popsize is not None and self.popsize < 2:
            raise ValueError("popsize must be >= 2")
        object.__setattr__(self, "x0", tuple(np.clip(x0, lo, hi)))
        object.__setattr__(self, "lower", tuple(lo))
        object.__setattr__(self, "upper", tuple(hi))
        object.__setattr__(self, "budget", budget)

    @property
    def dimension(self):
        return len(self.x0)


@dataclass
class Evaluation:
    iteration: int
    eval_id: int
    params: np.ndarray
    objective: float


@dataclass
class FitResult:
    """Outcome of a minimization.

    ``history`` is the incumbent (best-so-far) value after each generation,
    ``evaluations`` the full log in evaluation order.
    """

    x: np.ndarray
    fun: float
    n_evals: int
    converged: bool
    message: str
    history: list = field(default_factory=list)
    evaluations: list = field(default_factory=list, repr=False)
    per_speed_mse: dict = None
    extras: dict = field(default_factory=dict)

    @property
    def budget_exhausted(self):
        return self.message == "budget"


def default_popsize(n):
    return 4 + int(3 * np.log(n))


class CMAES:
    """Ask/tell state of one CMA-ES run over the unbounded free coordinates."""

    def __init__(self, mean, sigma, popsize=None, rng=None):
        self.n = n = len(mean)
        self.mean = np.array(mean, dtype=float)
        self.sigma = float(sigma)
        self.lam = lam = popsize or default_popsize(n)
        self.mu = mu = lam // 2
        w = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights ** 2)
        mueff = self.mueff
        self.cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
        self.cs = (mueff + 2) / (n + mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + mueff)
        self.cmu = min(1 - self.c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
        self.damps = 1 + 2 * max(0.0, np.sqrt((mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.invsqrtC = np.eye(n)
        self.generation = 0
        self.rng = rng or np.random.default_rng()

    def ask(self):
        z = self.rng.standard_normal((self.lam, self.n))
        return self.mean + self.sigma * (z * self.D) @ self.B.T

    def tell(self, xs, fs):
        order = np.argsort(fs, kind="stable")
        xsel = xs[order[:self.mu]]
        old = self.mean
        self.mean = self.weights @ xsel
        y = (self.mean - old) / self.sigma
        n = self.n
        self.ps = (1 - self.cs) * self.ps + np.sqrt(self.cs * (2 - self.cs) * self.mueff) * (self.invsqrtC @ y)
        self.generation += 1
        norm_ps = np.linalg.norm(self.ps)
        hsig = norm_ps / np.sqrt(1 - (1 - self.cs) ** (2 * self.generation)) / self.chi_n < 1.4 + 2 / (n + 1)
        self.pc = (1 - self.cc) * self.pc + hsig * np.sqrt(self.cc * (2 - self.cc) * self.mueff) * y
        artmp = (xsel - old) / self.sigma
        delta = (1 - hsig) * self.cc * (2 - self.cc)
        self.C = ((1 - self.c1 - self.cmu) * self.C
                  + self.c1 * (np.outer(self.pc, self.pc) + delta * self.C)
                  + self.cmu * (artmp.T * self.weights) @ artmp)
        self.sigma *= np.exp((self.cs / self.damps) * (norm_ps / self.chi_n - 1))
        self.C = np.triu(self.C) + np.triu(self.C, 1).T
        d2, self.B = np.linalg.eigh(self.C)
        self.D = np.sqrt(np.maximum(d2, 1e-300))
        self.invsqrtC = (self.B / self.D) @ self.B.T

    @property
    def spread(self):
        """Largest standard deviation of the search distribution."""
        return self.sigma * float(np.sqrt(np.max(np.diag(self.C))))


def cmaes_minimize(objective, spec, map_fn=map, callback=None):
    """Minimize ``objective`` over the box in ``spec``.

    ``map_fn`` evaluates one generation (``map`` by default; an executor's
    ``map`` works too). Results are consumed in candidate order, so a run is
    reproducible from ``spec.seed`` regardless of scheduling. Stops on
    ``ftarget``, on ``tolx`` (distribution spread), on ``tolfun`` (range of
    recent incumbents) or when the budget is spent, in which case the
    best-so-far point is returned with ``message == "budget"``.
    """
    lo = np.asarray(spec.lower)
    hi = np.asarray(spec.upper)
    x0 = np.asarray(spec.x0)
    free = hi > lo
    rng = np.random.default_rng(spec.seed)
    log = []
    history = []
    best_x, best_f = None, np.inf

    def full(xf):
        x = x0.copy()
        x[free] = xf
        return x

    def run_batch(points, it):
        nonlocal best_x, best_f
        clamped = [np.clip(p, lo, hi) for p in points]
        values = list(map_fn(objective, clamped))
        out = np.empty(len(points))
        for i, (p, c, v) in enumerate(zip(points, clamped, values)):
            v = float(v)
            if np.isnan(v):
                v = np.inf
            log.append(Evaluation(it, len(log), c, v))
            if v < best_f:
                best_x, best_f = c, v
            out[i] = v + spec.penalty * float(np.sum((p - c) ** 2))
        history.append(best_f)
        return out

    if not np.any(free):
        run_batch([x0], 0)
        return FitResult(best_x, best_f, len(log), True, "fixed point", history, log)

    es = CMAES(x0[free], spec.sigma0, spec.popsize, rng)
    message = "budget"
    while len(log) + es.lam <= spec.budget:
        cands = es.ask()
        fs = run_batch([full(c) for c in cands], es.generation)
        finite = np.isfinite(fs)
        if np.any(finite):
            # rank undefined candidates last
            es.tell(cands, np.where(finite, fs, np.inf))
        else:
            es.generation += 1
        if best_f <= spec.ftarget:
            message = "ftarget"
            break
        if es.spread < spec.tolx:
            message = "tolx"
            break
        window = 10 + int(30 * es.n / es.lam)
        if spec.tolfun > 0 and len(history) > window and history[-window - 1] - history[-1] < spec.tolfun:
            message = "tolfun"
            break
    if best_x is None:
        raise RuntimeError("no objective evaluations fit in the budget")
    return FitResult(best_x, best_f, len(log), message != "budget", message, history, log)
