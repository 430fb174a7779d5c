"""Dual smoothing solver for discrete memoryless channel capacity.

The capacity problem max_p I(p, W) (optionally with an average-cost equality
constraint s^T p = S after preprocessing) is attacked through its Lagrange
dual

    min_{lambda in Q}  F(lambda) + G(lambda),

where F(lambda) = log2 sum_j 2^(-lambda_j) is the smooth output-entropy term,
G(lambda) = max_p { (W lambda - r)^T p : p feasible } is the non-smooth input
term, and Q is the centered euclidean ball of radius
R = M * max(log2(1/gamma), 1/ln2) that is known to contain a dual optimizer
whenever every channel entry is positive (gamma > 0, "Assumption 1").

G is replaced by the entropy-smoothed G_nu (uniform approximation within
nu*log2(N)), making the objective gradient Lipschitz with constant
L_nu = 1 + 1/nu, and the resulting smooth problem is driven by the optimal
fast-gradient scheme.  Averaged primal iterates give a feasible input
distribution p_hat, so every run returns a certified sandwich

    I(p_hat, W)  <=  C  <=  F(lambda_hat) + G(lambda_hat),

where the upper bound uses the *exact* G (a vertex maximum, or a 1-D
parametric LP over the cost slice of the simplex).

All values are in bits.  Exponentials are always evaluated in the natural
base after max-shifting, so that no intermediate exponent is positive; the
lambda iterates themselves stay in bit scale so the constants above apply
verbatim.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    AssumptionViolated,
    DimensionMismatch,
    Infeasible,
    NewtonStall,
)
from .info_theory import (
    LN2,
    ChannelMatrix,
    CostConstraint,
    ProbVector,
    _entropy_bits,
)

# S_max guard band: budgets within this of the unconstrained optimum are
# treated as non-binding (the constraint is dropped).
S_MAX_GUARD = 1e-4

# Gap tolerance for the auxiliary solve that estimates S_max.
_SMAX_SOLVE_EPS = 1e-6

_MU_NEWTON_MAX_ITER = 200


# ---------------------------------------------------------------------------
# Dual domain


@dataclass(frozen=True)
class DualPoint:
    """A dual vector constrained to the ball of the given radius."""

    values: np.ndarray
    radius: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if np.linalg.norm(v) > self.radius + 1e-9:
            raise ValueError(
                f"dual point norm {np.linalg.norm(v)!r} exceeds radius {self.radius!r}"
            )


def dual_radius(W: ChannelMatrix) -> float:
    """Radius of the ball known to contain a dual optimizer."""
    if W.gamma <= 0.0:
        raise AssumptionViolated(
            "Assumption 1 violated: channel matrix has zero entries (gamma = 0); "
            "use the perturbation wrapper (perturb-solve)"
        )
    return W.cols * max(math.log2(1.0 / W.gamma), 1.0 / LN2)


def smoothing_constants(W: ChannelMatrix) -> tuple[float, float]:
    """(d1, d2) = (half squared dual-ball radius, log2 N)."""
    r = dual_radius(W)
    return 0.5 * r * r, math.log2(W.rows)


@dataclass(frozen=True)
class SmoothingConfig:
    """Smoothing parameter nu tied to a planned iteration count."""

    nu: float
    d1: float
    d2: float
    n_planned: int

    @classmethod
    def from_iterations(cls, n: int, d1: float, d2: float) -> "SmoothingConfig":
        nu = (2.0 / (n + 1)) * math.sqrt(d1 / d2)
        return cls(nu=nu, d1=d1, d2=d2, n_planned=n)


def _as_values(lam) -> np.ndarray:
    if isinstance(lam, DualPoint):
        return lam.values
    return np.asarray(lam, dtype=float)


def project_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the centered ball of the given radius."""
    x = np.asarray(x, dtype=float)
    n = np.linalg.norm(x)
    if n <= radius or n == 0.0:
        return x
    return x * (radius / n)


def project_Q(x, radius: float) -> DualPoint:
    """Projection onto the dual ball Q, returned as a typed DualPoint."""
    return DualPoint(project_ball(_as_values(x), radius), radius)


# ---------------------------------------------------------------------------
# Dual objective pieces


def eval_F(lam) -> tuple[float, np.ndarray]:
    """Smooth dual term F(lambda) = log2 sum_j 2^(-lambda_j) and its gradient.

    The gradient is minus the softmax of -lambda (it sums to -1); evaluation
    is max-shifted so no exponent exceeds 0.
    """
    lam = _as_values(lam)
    a = -lam * LN2
    m = a.max()
    e = np.exp(a - m)
    s = e.sum()
    value = (m + math.log(s)) / LN2
    grad = -e / s
    return float(value), grad


def _eval_F_direct(lam) -> tuple[float, np.ndarray]:
    """Unshifted reference evaluation of F; overflows for large |lambda|."""
    lam = _as_values(lam)
    t = np.power(2.0, -lam)
    s = t.sum()
    return float(np.log2(s)), -t / s


def _scores(Wm: np.ndarray, r: np.ndarray, lam: np.ndarray, nu: float) -> np.ndarray:
    """Natural-log exponents (W lambda - r) * ln2 / nu."""
    return (Wm @ lam - r) * (LN2 / nu)


def _softmax(scores: np.ndarray) -> np.ndarray:
    m = scores.max()
    e = np.exp(scores - m)
    return e / e.sum()


def eval_G_nu_unconstrained(lam, W: ChannelMatrix, nu: float
                            ) -> tuple[float, np.ndarray, ProbVector]:
    """Smoothed input term G_nu(lambda), its gradient W^T p_nu, and p_nu.

    G_nu(lambda) = nu*log2 sum_i 2^((W lambda - r)_i / nu) - nu*log2(N); the
    maximizer p_nu is the softmax of the shifted exponents.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    lam = _as_values(lam)
    f = W.entries @ lam - W.r
    c = f * (LN2 / nu)
    m = c.max()
    e = np.exp(c - m)
    s = e.sum()
    p = e / s
    value = nu * (m + math.log(s)) / LN2 - nu * math.log2(W.rows)
    grad = W.entries.T @ p
    return float(value), grad, ProbVector(p)


def _eval_G_nu_direct(lam, W: ChannelMatrix, nu: float
                      ) -> tuple[float, np.ndarray, np.ndarray]:
    """Unshifted reference evaluation of G_nu; overflows for small nu."""
    lam = _as_values(lam)
    f = W.entries @ lam - W.r
    t = np.power(2.0, f / nu)
    s = t.sum()
    p = t / s
    value = nu * np.log2(s) - nu * math.log2(W.rows)
    return float(value), W.entries.T @ p, p


@dataclass(frozen=True)
class MuPair:
    """Multipliers (mu1, mu2) of the max-entropy solution p_i = 2^(mu1 + c_i + mu2 s_i)."""

    mu1: float
    mu2: float


def _max_entropy_multipliers(scores: np.ndarray, s: np.ndarray,
                             weights: np.ndarray, budget: float
                             ) -> tuple[float, float, np.ndarray]:
    """Newton solve for the multipliers of the tilted max-entropy problem.

    Maximizes  m1 + budget*m2 - sum_k weights_k exp(m1 + scores_k + m2*s_k)
    over (m1, m2); at the optimum the density p_k = exp(m1 + scores_k + m2 s_k)
    satisfies sum w p = 1 and sum w s p = budget exactly.  The normalization
    multiplier m1 is eliminated in closed form (its coordinate maximization
    is a log-sum-exp), leaving a 1-D strictly concave problem in m2 whose
    stationarity is the cost constraint; that is solved by bracketed Newton
    with bisection fallback, so convergence does not depend on the size of
    the tilts (exponent ranges of ~1e3 occur routinely for small nu).
    Natural-log multipliers are returned.  ``weights`` are point masses
    (ones) in the discrete case and quadrature weights in the continuous
    case.
    """
    smin, smax = float(s.min()), float(s.max())
    if budget < smin - 1e-12 or budget > smax + 1e-12:
        raise Infeasible(
            f"budget {budget!r} outside attainable cost range [{smin!r}, {smax!r}]"
        )
    logw = np.log(weights)
    base = scores + logw
    tol = 1e-11 * max(1.0, abs(budget))

    if smax - smin <= 1e-12 * max(1.0, abs(smax)):
        # Degenerate cost (s constant): any m2 is optimal, pin it to 0.
        m1 = -_logsumexp(base)
        return m1, 0.0, np.exp(m1 + scores)

    def moments(m2):
        t = base + m2 * s
        m = t.max()
        e = np.exp(t - m)
        z = e.sum()
        prob = e / z              # weighted mass: prob_k = w_k p_k
        mean = float(s @ prob)
        var = float((s * s) @ prob) - mean * mean
        return mean, var, m + math.log(z), prob

    # Bracket the root of  mean_cost(m2) = budget  (strictly increasing).
    lo = hi = 0.0
    mean0, _, _, _ = moments(0.0)
    step = 1.0
    if mean0 > budget:
        while True:
            lo -= step
            if moments(lo)[0] <= budget:
                break
            step *= 2.0
            if step > 1e30:
                raise NewtonStall("cost multiplier bracket expansion diverged")
    else:
        while True:
            hi += step
            if moments(hi)[0] >= budget:
                break
            step *= 2.0
            if step > 1e30:
                raise NewtonStall("cost multiplier bracket expansion diverged")

    m2 = 0.5 * (lo + hi)
    for _ in range(_MU_NEWTON_MAX_ITER):
        mean, var, lognorm, prob = moments(m2)
        g = mean - budget
        if abs(g) <= tol:
            m1 = -lognorm
            return m1, m2, prob / weights
        if g > 0:
            hi = m2
        else:
            lo = m2
        cand = m2 - g / var if var > 0 else math.nan
        m2 = cand if lo < cand < hi else 0.5 * (lo + hi)
    mean, var, lognorm, prob = moments(m2)
    if abs(mean - budget) <= 100 * tol:
        return -lognorm, m2, prob / weights
    raise NewtonStall(
        f"cost multiplier Newton solve stalled (residual {abs(mean - budget):.3e})"
    )


def _logsumexp(a: np.ndarray) -> float:
    m = a.max()
    return float(m + math.log(np.exp(a - m).sum()))


def solve_mu(lam, W: ChannelMatrix, nu: float, cost: CostConstraint) -> MuPair:
    """Multipliers making p_i = 2^(mu1 + (W lambda - r)_i/nu + mu2 s_i) feasible.

    The returned pair is in the base-2 parameterization; the resulting p sums
    to 1 and meets s^T p = budget to solver tolerance.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    lam = _as_values(lam)
    if cost.costs.size != W.rows:
        raise DimensionMismatch("cost vector length must equal channel rows")
    scores = _scores(W.entries, W.r, lam, nu)
    m1, m2, _ = _max_entropy_multipliers(
        scores, cost.costs, np.ones(W.rows), cost.budget
    )
    return MuPair(mu1=m1 / LN2, mu2=m2 / LN2)


def eval_G_nu_constrained(lam, W: ChannelMatrix, nu: float, cost: CostConstraint
                          ) -> tuple[float, np.ndarray, ProbVector]:
    """Smoothed input term under the cost equality constraint.

    The optimizer is the tilted max-entropy density from the multiplier
    solve; the value reduces to -nu*(mu1 + mu2*S) - nu*log2(N), which avoids
    any 0*log(0) evaluation.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    lam = _as_values(lam)
    scores = _scores(W.entries, W.r, lam, nu)
    m1, m2, p = _max_entropy_multipliers(
        scores, cost.costs, np.ones(W.rows), cost.budget
    )
    value = -nu * (m1 + m2 * cost.budget) / LN2 - nu * math.log2(W.rows)
    grad = W.entries.T @ p
    return float(value), grad, ProbVector(p)


# ---------------------------------------------------------------------------
# Exact (non-smoothed) G for a posteriori certificates


def exact_G_unconstrained(lam, W: ChannelMatrix) -> float:
    """G(lambda) = max_i (W lambda - r)_i: linear over the simplex, vertex max."""
    lam = _as_values(lam)
    return float((W.entries @ lam - W.r).max())


def exact_G_constrained(lam, W: ChannelMatrix, cost: CostConstraint) -> float:
    """G(lambda) over {p in simplex : s^T p = budget} by upper concave hull.

    The LP max f^T p over the cost slice equals the upper concave envelope of
    the points (s_i, f_i) evaluated at the budget; O(N log N).
    """
    lam = _as_values(lam)
    f = W.entries @ lam - W.r
    return _segment_lp_max(f, cost.costs, cost.budget)


def _segment_lp_max(f: np.ndarray, s: np.ndarray, budget: float) -> float:
    smin, smax = float(s.min()), float(s.max())
    if budget < smin - 1e-12 or budget > smax + 1e-12:
        raise Infeasible(
            f"budget {budget!r} outside attainable cost range [{smin!r}, {smax!r}]"
        )
    budget = min(max(budget, smin), smax)
    order = np.lexsort((-f, s))
    ss, fs = s[order], f[order]
    # Keep only the best f for duplicate cost values.
    keep = np.ones(ss.size, dtype=bool)
    keep[1:] = np.diff(ss) > 0
    ss, fs = ss[keep], fs[keep]
    if ss.size == 1:
        return float(fs[0])
    # Monotone-chain upper hull over (cost, value) points.
    hull: list[int] = []
    for i in range(ss.size):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (ss[a] - ss[o]) * (fs[i] - fs[o]) - (fs[a] - fs[o]) * (ss[i] - ss[o])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    hx = ss[hull]
    hy = fs[hull]
    j = int(np.searchsorted(hx, budget, side="right"))
    if j == 0:
        return float(hy[0])
    if j >= hx.size:
        return float(hy[-1])
    t = (budget - hx[j - 1]) / (hx[j] - hx[j - 1])
    return float((1.0 - t) * hy[j - 1] + t * hy[j])


# ---------------------------------------------------------------------------
# Iteration schedules


def apriori_iterations(epsilon: float, d1: float, d2: float) -> int:
    """Complexity-style iteration count ceil(4*sqrt(d1*d2)/eps + 2*sqrt(d1/eps))."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return math.ceil(4.0 * math.sqrt(d1 * d2) / epsilon + 2.0 * math.sqrt(d1 / epsilon))


def scheduled_iterations(epsilon: float, d1: float, d2: float) -> int:
    """Smallest n whose a priori gap bound is at most epsilon.

    Solves 4*sqrt(d1*d2)/(n+1) + 4*d1/(n+1)^2 = epsilon for n+1 (a quadratic)
    and rounds up.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    t = (2.0 / epsilon) * (math.sqrt(d1 * d2) + math.sqrt(d1 * d2 + epsilon * d1))
    return max(1, math.ceil(t - 1.0))


def apriori_error_bound(n: int, d1: float, d2: float) -> float:
    """Gap bound 4*sqrt(d1*d2)/(n+1) + 4*d1/(n+1)^2 after n iterations."""
    return 4.0 * math.sqrt(d1 * d2) / (n + 1) + 4.0 * d1 / (n + 1) ** 2


# ---------------------------------------------------------------------------
# Fast gradient scheme


class FastGradientState:
    """Iterate bookkeeping for the optimal scheme on a centered ball.

    Per step k (starting from x_0 = 0, the ball center):
        y_k = proj(x_k - grad/L)
        z_k = proj(-(1/L) * sum_{i<=k} (i+1)/2 * grad_i)
        x_{k+1} = 2/(k+3) * z_k + (k+1)/(k+3) * y_k
    """

    def __init__(self, dim: int, radius: float, lipschitz: float):
        self.radius = radius
        self.L = lipschitz
        self.x = np.zeros(dim)
        self.gsum = np.zeros(dim)
        self.k = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        k = self.k
        y = project_ball(self.x - grad / self.L, self.radius)
        self.gsum += (0.5 * (k + 1)) * grad
        z = project_ball(-self.gsum / self.L, self.radius)
        self.x = (2.0 / (k + 3)) * z + ((k + 1) / (k + 3)) * y
        self.k = k + 1
        return y


# ---------------------------------------------------------------------------
# Capacity solve


@dataclass
class SolveReport:
    """Certified capacity sandwich produced by one dual-smoothing solve."""

    c_lb: float
    c_ub: float
    apriori_err: float
    aposteriori_err: float
    iterations: int
    p_hat: ProbVector
    lambda_hat: DualPoint
    wall_time: float
    nu: float
    constrained: bool = False
    s_max_estimate: Optional[float] = None

    def __post_init__(self):
        assert self.c_lb <= self.c_ub + 1e-9
        assert self.aposteriori_err >= -1e-9


ProgressFn = Callable[[int, float, float, float], None]


def solve_capacity(W: ChannelMatrix,
                   cost: Optional[CostConstraint] = None,
                   epsilon: float = 1e-3,
                   stopping: str = "aposteriori",
                   progress: Optional[ProgressFn] = None,
                   checkpoint_every: Optional[int] = None) -> SolveReport:
    """Run the smoothed dual fast-gradient solve on a positive channel.

    stopping="apriori" runs exactly the scheduled number of iterations for
    the requested epsilon; stopping="aposteriori" uses the same smoothing but
    stops at the first checkpoint whose measured duality gap is below
    epsilon (the schedule length is a hard cap, so termination is
    guaranteed).  With a cost constraint, the unconstrained problem is first
    solved to estimate the largest useful budget; budgets at or above it
    (minus a guard band) drop the constraint, smaller ones are enforced with
    equality.
    """
    if stopping not in ("apriori", "aposteriori"):
        raise ValueError(f"unknown stopping mode {stopping!r}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if W.gamma <= 0.0:
        raise AssumptionViolated(
            "Assumption 1 violated: channel matrix has zero entries (gamma = 0); "
            "use the perturbation wrapper (perturb-solve)"
        )

    t0 = time.perf_counter()
    s_max_est = None
    active_cost = None
    if cost is not None:
        s = cost.costs
        if s.size != W.rows:
            raise DimensionMismatch("cost vector length must equal channel rows")
        if cost.budget < float(s.min()) - 1e-12:
            raise Infeasible(
                f"budget {cost.budget!r} below minimum attainable cost {float(s.min())!r}"
            )
        if cost.budget < float(s.max()):
            pre = _solve_core(W, None, _SMAX_SOLVE_EPS, "aposteriori", None, None)
            s_max_est = float(s @ pre.p_hat.weights)
            if cost.budget < s_max_est - S_MAX_GUARD:
                active_cost = cost

    report = _solve_core(W, active_cost, epsilon, stopping, progress, checkpoint_every)
    report.wall_time = time.perf_counter() - t0
    report.s_max_estimate = s_max_est
    return report


def _solve_core(W: ChannelMatrix,
                cost: Optional[CostConstraint],
                epsilon: float,
                stopping: str,
                progress: Optional[ProgressFn],
                checkpoint_every: Optional[int]) -> SolveReport:
    t0 = time.perf_counter()
    N, M = W.rows, W.cols
    Wm, r = W.entries, W.r

    if N == 1 or M == 1:
        # Degenerate alphabets: capacity is exactly zero.
        p = ProbVector.uniform(N)
        lam = DualPoint(np.zeros(M), 0.0)
        return SolveReport(0.0, 0.0, 0.0, 0.0, 0, p, lam,
                           time.perf_counter() - t0, nu=math.inf,
                           constrained=False)

    radius = dual_radius(W)
    d1, d2 = smoothing_constants(W)
    n_eps = scheduled_iterations(epsilon, d1, d2)
    cfg = SmoothingConfig.from_iterations(n_eps, d1, d2)
    nu = cfg.nu
    L = 1.0 + 1.0 / nu
    ell = checkpoint_every if checkpoint_every else max(100, round(n_eps / 100))

    s = cost.costs if cost is not None else None
    budget = cost.budget if cost is not None else None
    ones = np.ones(N)
    inv_nu_ln2 = LN2 / nu

    state = FastGradientState(M, radius, L)
    acc_p = np.zeros(N)
    x = state.x
    y = np.zeros(M)
    k = 0
    c_lb = c_ub = gap = math.nan

    while True:
        f = Wm @ x - r
        scoresk = f * inv_nu_ln2
        if cost is None:
            p = _softmax(scoresk)
        else:
            _, _, p = _max_entropy_multipliers(scoresk, s, ones, budget)
        a = -x * LN2
        ea = np.exp(a - a.max())
        gF = -ea / ea.sum()
        grad = gF + Wm.T @ p

        acc_p += (k + 1) * p
        y = state.step(grad)
        x = state.x

        if k == n_eps or (k + 1) % ell == 0:
            p_hat = acc_p * (2.0 / ((k + 1) * (k + 2)))
            c_lb = float(-(r @ p_hat) + _entropy_bits(Wm.T @ p_hat))
            Fv, _ = eval_F(y)
            if cost is None:
                Gv = float((Wm @ y - r).max())
            else:
                Gv = _segment_lp_max(Wm @ y - r, s, budget)
            c_ub = Fv + Gv
            gap = c_ub - c_lb
            if progress is not None:
                progress(k, c_lb, c_ub, gap)
            if k == n_eps or (stopping == "aposteriori" and gap <= epsilon):
                break
        k += 1

    p_hat = acc_p * (2.0 / ((k + 1) * (k + 2)))
    apriori = nu * d2 + 4.0 * d1 * (1.0 + 1.0 / nu) / (k + 1) ** 2
    return SolveReport(
        c_lb=c_lb,
        c_ub=c_ub,
        apriori_err=apriori,
        aposteriori_err=gap,
        iterations=k,
        p_hat=ProbVector(np.maximum(p_hat, 0.0)),
        lambda_hat=DualPoint(y, radius),
        wall_time=time.perf_counter() - t0,
        nu=nu,
        constrained=cost is not None,
    )
