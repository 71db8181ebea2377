"""Zero-sum matrix games: payoff construction and equilibrium solvers.

Two independent solving routes are kept deliberately separate: a
complementary-pivoting solver (Lemke-Howson with lexicographic tie
breaking) used in production, and a linear-programming oracle used for
verification and as the fallback when pivoting cycles.  They share no
code, so each checks the other.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .metrics import CartParams, MetricKind, reference_accuracy
from .perturb import Perturbation, apply

logger = logging.getLogger(__name__)

# Strategy-set caps applied when building payoff matrices from populations.
MAX_PAYOFF_ROWS = 200
MAX_PAYOFF_COLS = 1000

_PIVOT_TOL = 1e-9


class GameSolverError(RuntimeError):
    """Raised when a solver cannot produce a verified equilibrium."""


@dataclass(frozen=True)
class PayoffMatrix:
    """Row-player payoffs: rows are trees, columns are perturbations."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if entries.size == 0:
            raise GameSolverError("payoff matrix is empty")
        if not np.isfinite(entries).all():
            raise GameSolverError("payoff matrix has non-finite entries")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True)
class MixedStrategyPair:
    row_probs: np.ndarray
    col_probs: np.ndarray
    value: float


def build_payoff(
    trees: Sequence,
    perturbations: Sequence[Perturbation],
    view,
    labels: np.ndarray,
    metric: MetricKind,
    cart_params: CartParams = CartParams(),
) -> PayoffMatrix:
    """Tree-vs-perturbation payoffs for the row (tree) player.

    Adversarial accuracy entries are plain accuracies in [0, 1]; max-regret
    entries are negated regrets in [-1, 1], so higher is better for the
    tree player under either metric.
    """
    if len(trees) == 0 or len(perturbations) == 0:
        raise GameSolverError("payoff needs at least one tree and one perturbation")
    base = view.instances if hasattr(view, "instances") else np.asarray(view)
    labels = np.asarray(labels)
    m = base.shape[0]
    stacked = np.concatenate([apply(p, base) for p in perturbations], axis=0)
    entries = np.empty((len(trees), len(perturbations)))
    for i, tree in enumerate(trees):
        preds = tree.predict_batch(stacked).reshape(len(perturbations), m)
        entries[i] = (preds == labels[None, :]).mean(axis=1)
    if metric is MetricKind.MAX_REGRET:
        refs = np.array(
            [reference_accuracy(p, base, labels, cart_params) for p in perturbations]
        )
        entries = entries - refs[None, :]
    return PayoffMatrix(entries=entries)


def _first_occurrence_groups(rows: np.ndarray) -> tuple[list[int], list[int]]:
    """Indices of first-seen unique rows, plus each row's group index."""
    seen: dict[bytes, int] = {}
    keep: list[int] = []
    group: list[int] = []
    for row in rows:
        key = row.tobytes()
        if key not in seen:
            seen[key] = len(keep)
            keep.append(len(group))
        group.append(seen[key])
    return keep, group


def _lex_ratio_row(tableau: np.ndarray, col: int, eligible: np.ndarray) -> int:
    """Leaving row by lexicographic minimum ratio; unique, so no cycling."""
    cand = list(eligible)
    n_cols = tableau.shape[1]
    for c in [n_cols - 1] + list(range(n_cols - 1)):
        vals = tableau[cand, c] / tableau[cand, col]
        best = vals.min()
        tol = 1e-9 * max(1.0, abs(best))
        cand = [r for r, v in zip(cand, vals) if v <= best + tol]
        if len(cand) == 1:
            break
    return cand[0]


def _pivot(tableau: np.ndarray, basis: list[int], entering: int) -> int:
    column = tableau[:, entering]
    eligible = np.flatnonzero(column > _PIVOT_TOL)
    if eligible.size == 0:
        raise GameSolverError("unbounded pivot direction")
    r = _lex_ratio_row(tableau, entering, eligible)
    tableau[r] /= tableau[r, entering]
    for i in range(tableau.shape[0]):
        if i != r and tableau[i, entering] != 0.0:
            tableau[i] -= tableau[i, entering] * tableau[r]
    leaving = basis[r]
    basis[r] = entering
    return leaving


def _lemke_howson_core(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Complementary pivoting from initial label 0 on the game (A, -A).

    Variable ids 0..n-1 are row labels, n..n+m-1 column labels.  Each label
    is represented in both tableaux; a pivot that removes a label from one
    basis forces the matching variable into the other, and the path ends
    when the initially dropped label is picked up again.
    """
    n, m = A.shape
    row_payoff = A - A.min() + 1.0  # strictly positive
    col_payoff = (A.max() + 1.0) - A  # strictly positive payoff for the minimizer

    # Polytope of the row player: col_payoff^T x + s = 1.
    tab_p = np.hstack([col_payoff.T, np.eye(m), np.ones((m, 1))])
    basis_p = [n + j for j in range(m)]
    # Polytope of the column player: r + row_payoff y = 1.
    tab_q = np.hstack([np.eye(n), row_payoff, np.ones((n, 1))])
    basis_q = list(range(n))

    dropped = 0
    entering = dropped
    in_p = True
    for _ in range(200 * (n + m) + 200):
        if in_p:
            leaving = _pivot(tab_p, basis_p, entering)
        else:
            leaving = _pivot(tab_q, basis_q, entering)
        if leaving == dropped:
            break
        entering = leaving
        in_p = not in_p
    else:
        raise GameSolverError("pivoting did not terminate (cycle suspected)")

    x = np.zeros(n)
    for r, var in enumerate(basis_p):
        if var < n:
            x[var] = tab_p[r, -1]
    y = np.zeros(m)
    for r, var in enumerate(basis_q):
        if var >= n:
            y[var - n] = tab_q[r, -1]
    if x.sum() <= 0 or y.sum() <= 0:
        raise GameSolverError("degenerate termination at the artificial equilibrium")
    return x / x.sum(), y / y.sum()


def _clean_probs(p: np.ndarray) -> np.ndarray:
    p = np.where(p < 0, 0.0, p)
    return p / p.sum()


def lemke_howson(payoff: PayoffMatrix) -> MixedStrategyPair:
    """One exact mixed Nash equilibrium of the zero-sum game with row
    payoff A.

    Duplicate rows/columns are collapsed before pivoting (their first
    occurrence carries the probability afterwards).  If pivoting fails to
    terminate, the LP oracle takes over.
    """
    A = payoff.entries
    n, m = A.shape
    row_keep, _ = _first_occurrence_groups(A)
    col_keep, _ = _first_occurrence_groups(A.T)
    reduced = A[np.ix_(row_keep, col_keep)]
    try:
        x_red, y_red = _lemke_howson_core(reduced)
    except GameSolverError as exc:
        logger.warning("lemke_howson failed (%s); using the LP oracle", exc)
        pair = solve_zero_sum_oracle(PayoffMatrix(reduced))
        x_red, y_red = pair.row_probs, pair.col_probs
    x = np.zeros(n)
    x[row_keep] = x_red
    y = np.zeros(m)
    y[col_keep] = y_red
    x, y = _clean_probs(x), _clean_probs(y)
    return MixedStrategyPair(row_probs=x, col_probs=y, value=float(x @ A @ y))


def solve_zero_sum_oracle(payoff: PayoffMatrix) -> MixedStrategyPair:
    """Independent equilibrium solver: direct optimization of the max-min
    value as a linear program (one LP per player).

    Kept free of any pivoting code so it can vouch for lemke_howson.
    """
    A = payoff.entries
    n, m = A.shape
    if n == 1:
        j = int(np.argmin(A[0]))
        y = np.zeros(m)
        y[j] = 1.0
        return MixedStrategyPair(np.ones(1), y, float(A[0, j]))
    if m == 1:
        i = int(np.argmax(A[:, 0]))
        x = np.zeros(n)
        x[i] = 1.0
        return MixedStrategyPair(x, np.ones(1), float(A[i, 0]))

    x = _maxmin_lp(A)
    y = _maxmin_lp(-A.T)
    value_row = float(np.min(x @ A))
    value_col = float(np.max(A @ y))
    if abs(value_col - value_row) > 1e-6:
        raise GameSolverError(
            f"LP duality gap {abs(value_col - value_row):.3g} exceeds tolerance"
        )
    return MixedStrategyPair(row_probs=x, col_probs=y, value=float(x @ A @ y))


def _maxmin_lp(A: np.ndarray) -> np.ndarray:
    """argmax_x min_j (x^T A)_j over the probability simplex."""
    n, m = A.shape
    c = np.zeros(n + 1)
    c[-1] = -1.0  # maximize v
    a_ub = np.hstack([-A.T, np.ones((m, 1))])
    b_ub = np.zeros(m)
    a_eq = np.ones((1, n + 1))
    a_eq[0, -1] = 0.0
    bounds = [(0.0, None)] * n + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not res.success:
        raise GameSolverError(f"LP solver did not converge: {res.message}")
    return _clean_probs(res.x[:n])


def verify_equilibrium(payoff: PayoffMatrix, pair: MixedStrategyPair, tol: float) -> bool:
    """No pure-strategy deviation improves either player (sufficient for
    zero-sum games)."""
    A = payoff.entries
    best_row_deviation = float(np.max(A @ pair.col_probs))
    best_col_deviation = float(np.min(pair.row_probs @ A))
    return best_row_deviation <= pair.value + tol and best_col_deviation >= pair.value - tol
