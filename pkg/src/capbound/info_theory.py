"""Exact, numerically safe information-theoretic primitives.

All public quantities are in bits.  Internally every log/exp goes through
the natural base with a single ln(2) rescaling, and 0*log(0) is resolved by
branching (masking), never by adding an epsilon: entries below 1e-300 are
treated as exact zeros.

Everything here is a pure function over immutable inputs (the arrays inside
``ChannelMatrix``/``ProbVector`` are marked read-only), so concurrent use
from multiple threads is safe.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidChannel

LN2 = math.log(2.0)

# Below this magnitude a probability is treated as an exact zero.
ZERO_FLOOR = 1e-300

# Row sums within SUM_TOL of 1 are accepted as-is; within RENORM_TOL they are
# renormalized (file round-off); beyond that the matrix is rejected.
SUM_TOL = 1e-12
RENORM_TOL = 1e-9


def _neg_xlogx_nats(w: np.ndarray) -> np.ndarray:
    """Elementwise -w*ln(w) with the 0*log(0)=0 convention."""
    w = np.asarray(w, dtype=float)
    out = np.zeros_like(w)
    mask = w > ZERO_FLOOR
    out[mask] = -w[mask] * np.log(w[mask])
    return out


def _entropy_bits(w: np.ndarray) -> float:
    return float(_neg_xlogx_nats(w).sum() / LN2)


class ProbVector:
    """A point of the probability simplex (weights >= 0, sum = 1)."""

    __slots__ = ("weights",)

    def __init__(self, weights):
        w = np.array(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise InvalidChannel("probability vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(w)):
            raise InvalidChannel("probability vector contains NaN/inf")
        if np.any(w < 0):
            raise InvalidChannel("probability vector contains negative entries")
        s = w.sum()
        if abs(s - 1.0) > RENORM_TOL:
            raise InvalidChannel(f"probabilities sum to {s!r}, not 1")
        if abs(s - 1.0) > SUM_TOL:
            w = w / s
        w.setflags(write=False)
        self.weights = w

    @property
    def dim(self) -> int:
        return self.weights.size

    @classmethod
    def uniform(cls, d: int) -> "ProbVector":
        return cls(np.full(d, 1.0 / d))

    @classmethod
    def point_mass(cls, d: int, i: int) -> "ProbVector":
        w = np.zeros(d)
        w[i] = 1.0
        return cls(w)

    def __repr__(self):
        return f"ProbVector({np.array2string(self.weights, precision=6)})"


class ChannelMatrix:
    """Row-stochastic channel law W with cached per-row entropies.

    entries[i, j] = P(output j | input i).  ``r`` holds the conditional
    output entropy of each row in bits, ``gamma`` the exact minimum entry.
    """

    __slots__ = ("entries", "r", "gamma")

    def __init__(self, entries):
        W = np.array(entries, dtype=float)
        if W.ndim != 2 or W.size == 0:
            raise InvalidChannel("channel matrix must be a non-empty 2-D array")
        if not np.all(np.isfinite(W)):
            raise InvalidChannel("channel matrix contains NaN/inf entries")
        if np.any(W < 0):
            raise InvalidChannel("channel matrix contains negative entries")
        W[W < ZERO_FLOOR] = 0.0
        sums = W.sum(axis=1)
        err = np.abs(sums - 1.0)
        if np.any(err > RENORM_TOL):
            i = int(np.argmax(err))
            raise InvalidChannel(f"row {i} sums to {sums[i]!r}, not 1")
        if np.any(err > SUM_TOL):
            W = W / sums[:, None]
        W.setflags(write=False)
        self.entries = W
        r = _neg_xlogx_nats(W).sum(axis=1) / LN2
        r.setflags(write=False)
        self.r = r
        self.gamma = float(W.min())

    @property
    def rows(self) -> int:
        """Input alphabet size N."""
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        """Output alphabet size M."""
        return self.entries.shape[1]

    @classmethod
    def from_text(cls, text: str) -> "ChannelMatrix":
        """Parse the plain-text channel format.

        First non-comment line is "N M", followed by N lines of M decimal
        probabilities.  '#' starts a comment.  NaN and negative entries are
        rejected.
        """
        lines = []
        for raw in io.StringIO(text):
            line = raw.split("#", 1)[0].strip()
            if line:
                lines.append(line)
        if not lines:
            raise InvalidChannel("empty channel file")
        head = lines[0].split()
        if len(head) != 2:
            raise InvalidChannel(f"expected 'N M' header, got {lines[0]!r}")
        try:
            n, m = int(head[0]), int(head[1])
        except ValueError as exc:
            raise InvalidChannel(f"bad header {lines[0]!r}") from exc
        if n <= 0 or m <= 0 or len(lines) != n + 1:
            raise InvalidChannel(f"expected {n} rows of {m} entries")
        rows = []
        for line in lines[1:]:
            vals = line.split()
            if len(vals) != m:
                raise InvalidChannel(f"row has {len(vals)} entries, expected {m}")
            try:
                row = [float(v) for v in vals]
            except ValueError as exc:
                raise InvalidChannel(f"non-numeric entry in row {line!r}") from exc
            if any(math.isnan(v) for v in row):
                raise InvalidChannel("NaN entry in channel file")
            rows.append(row)
        return cls(rows)

    @classmethod
    def from_file(cls, path) -> "ChannelMatrix":
        with open(path, "r") as fh:
            return cls.from_text(fh.read())

    def __repr__(self):
        return f"ChannelMatrix(N={self.rows}, M={self.cols}, gamma={self.gamma:.3g})"


@dataclass(frozen=True)
class CostConstraint:
    """Average input cost constraint E[s(X)] <= S."""

    costs: np.ndarray
    budget: float

    def __post_init__(self):
        s = np.array(self.costs, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise InvalidChannel("cost vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise InvalidChannel("costs must be finite and nonnegative")
        if not math.isfinite(self.budget) or self.budget < 0:
            raise InvalidChannel("budget must be finite and nonnegative")
        s.setflags(write=False)
        object.__setattr__(self, "costs", s)
        object.__setattr__(self, "budget", float(self.budget))


def entropy(p) -> float:
    """Shannon entropy H(p) in bits, 0 <= H <= log2(dim)."""
    if not isinstance(p, ProbVector):
        p = ProbVector(p)
    return _entropy_bits(p.weights)


def mutual_information(p, W: ChannelMatrix) -> float:
    """I(p, W) in bits, computed as -r^T p + H(W^T p)."""
    if not isinstance(p, ProbVector):
        p = ProbVector(p)
    if p.dim != W.rows:
        raise DimensionMismatch(f"input dim {p.dim} != channel rows {W.rows}")
    w = p.weights
    q = W.entries.T @ w
    return float(-(W.r @ w) + _entropy_bits(q))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto the probability simplex.

    Sort-based algorithm; O(d log d).
    """
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, v.size + 1)
    cond = u + (1.0 - css) / ks > 0
    rho = int(np.nonzero(cond)[0][-1])
    tau = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + tau, 0.0)


@dataclass(frozen=True)
class DiffNormResult:
    """Evaluation of the channel-difference norm max_{b in simplex} ||b b^T A||_tr.

    ``upper_bound`` is the sound over-estimate max_i ||row_i(A)||_2 (the
    rank-one trace norm ||b||_2 ||A^T b||_2 is maximized at a simplex vertex,
    so this bound is in fact attained); ``lower_estimate`` is the best value
    found by multi-start projected ascent plus a Dirichlet sample sweep and
    can only under-estimate the true maximum.  Certificates must use
    ``upper_bound``.
    """

    upper_bound: float
    lower_estimate: float
    method: str

    def __float__(self):
        return self.upper_bound


def _diff_norm_objective(b: np.ndarray, A: np.ndarray) -> float:
    return float(np.linalg.norm(b) * np.linalg.norm(A.T @ b))


def channel_diff_norm(W1: ChannelMatrix, W2: ChannelMatrix,
                      samples: int = 2000, ascent_starts: int = 6,
                      seed: int = 0) -> DiffNormResult:
    """Channel-difference norm of A = W1 - W2 (dimensionless).

    Returns both the sound vertex upper bound and a sampled lower estimate;
    the two agree (up to ascent tolerance) because the maximum sits at a
    simplex vertex.
    """
    if W1.entries.shape != W2.entries.shape:
        raise DimensionMismatch("channel matrices must have equal shape")
    A = W1.entries - W2.entries
    row_norms = np.linalg.norm(A, axis=1)
    upper = float(row_norms.max())
    if upper == 0.0:
        return DiffNormResult(0.0, 0.0, "zero-difference")

    n = A.shape[0]
    best = upper  # vertex value is feasible, so it seeds the estimate
    rng = np.random.default_rng(seed)
    cands = rng.dirichlet(np.ones(n), size=samples)
    vals = np.linalg.norm(cands, axis=1) * np.linalg.norm(cands @ A, axis=1)
    best = max(best, float(vals.max()))

    # Multi-start projected gradient ascent on ||b|| * ||A^T b||.
    starts = [np.full(n, 1.0 / n)]
    for i in np.argsort(row_norms)[::-1][: max(0, ascent_starts - 1)]:
        e = np.full(n, 1e-3 / n)
        e[i] += 1.0 - 1e-3
        starts.append(e / e.sum())
    G = A @ A.T
    for b in starts:
        b = b.copy()
        step = 1.0
        val = _diff_norm_objective(b, A)
        for _ in range(200):
            nb = np.linalg.norm(b)
            nAb = np.linalg.norm(A.T @ b)
            if nb == 0 or nAb == 0:
                break
            grad = (nAb / nb) * b + (nb / nAb) * (G @ b)
            cand = project_simplex(b + step * grad)
            cval = _diff_norm_objective(cand, A)
            if cval > val + 1e-15:
                b, val = cand, cval
                step *= 1.2
            else:
                step *= 0.5
                if step < 1e-12:
                    break
        best = max(best, val)
    return DiffNormResult(upper, min(best, upper), "vertex-bound+ascent")


def continuity_capacity_bound(delta_norm: float, N: int, M: int) -> float:
    """Capacity continuity bound in bits for a channel perturbation of norm delta.

    3*delta*log2(max(M, N)) + 2*eta(delta) with eta(t) = -t*log2(t); delta is
    clamped to [0, 1] and eta(0) = eta(1) = 0.
    """
    d = min(max(float(delta_norm), 0.0), 1.0)
    if d == 0.0:
        return 0.0
    eta = -d * math.log2(d) if 0.0 < d < 1.0 else 0.0
    return 3.0 * d * math.log2(max(M, N)) + 2.0 * eta
