"""Mixing-coefficient update strategies.

Covers the static and fairness-aware baselines, which are all one-step
exponentiated-gradient updates re-centered on the sample-size prior, and the
two stateful online strategies: a second-order (Online Newton Step) learner
for small federations and a closed-form entropic follow-the-regularized-
leader update that runs in linear time for massive ones. A hindsight solver
for the best fixed decision supports regret accounting.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace

import numpy as np

from . import simplex
from .errors import ConvergenceError, InvalidInputError

logger = logging.getLogger(__name__)

STRATEGIES = ("fedavg", "afl", "qfedavg", "term", "propfair", "aaggff-s", "aaggff-d")

QFEDAVG_LOSS_FLOOR = 1e-12
PROPFAIR_GAP_FLOOR = 1e-6
DEFAULT_AFL_Q = 50.0


class BaselineMethod(str, enum.Enum):
    FEDAVG = "fedavg"
    QFEDAVG = "qfedavg"
    TERM = "term"
    PROPFAIR = "propfair"


@dataclass(frozen=True)
class BaselineParams:
    """Hyperparameters of the one-step baselines.

    The minimax baseline is realized as the q-weighted method with a large
    exponent (q -> inf limit), so it needs no enum member of its own.
    """

    method: BaselineMethod
    sample_sizes: np.ndarray
    q: float = 1.0
    tilt: float = 1.0
    m: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "method", BaselineMethod(self.method))
        sizes = np.asarray(self.sample_sizes, dtype=float)
        if sizes.ndim != 1 or sizes.size < 1 or np.any(sizes < 1):
            raise InvalidInputError("sample sizes must be a vector of values >= 1")
        object.__setattr__(self, "sample_sizes", sizes)
        if self.q < 0:
            raise InvalidInputError("q must be >= 0")
        if self.m < 1:
            raise InvalidInputError("baseline constant m must be >= 1")

    @property
    def prior(self) -> np.ndarray:
        """Static decision proportional to client sample sizes."""
        return self.sample_sizes / self.sample_sizes.sum()

    @property
    def step_size(self) -> float:
        """1/tilt for the tilted method, 1 otherwise."""
        return 1.0 / self.tilt if self.method is BaselineMethod.TERM else 1.0


def baseline_params_for(
    strategy: str,
    sample_sizes,
    q: float = 1.0,
    tilt: float = 1.0,
    propfair_m: float = 3.0,
    afl_q: float = DEFAULT_AFL_Q,
) -> BaselineParams:
    """Map a strategy string to baseline hyperparameters."""
    if strategy == "fedavg":
        return BaselineParams(BaselineMethod.FEDAVG, sample_sizes)
    if strategy == "qfedavg":
        return BaselineParams(BaselineMethod.QFEDAVG, sample_sizes, q=q)
    if strategy == "afl":
        return BaselineParams(BaselineMethod.QFEDAVG, sample_sizes, q=afl_q)
    if strategy == "term":
        return BaselineParams(BaselineMethod.TERM, sample_sizes, tilt=tilt)
    if strategy == "propfair":
        return BaselineParams(BaselineMethod.PROPFAIR, sample_sizes, m=propfair_m)
    raise InvalidInputError(f"not a baseline strategy: {strategy!r}")


def baseline_response(params: BaselineParams, losses: np.ndarray) -> np.ndarray:
    """Per-method response built from raw local losses.

    fedavg: 0, qfedavg: q*log(F_i), term: F_i, propfair: -log(m - F_i).
    Out-of-domain losses are clamped at documented floors and logged rather
    than aborting the round.
    """
    losses = np.asarray(losses, dtype=float)
    if not np.all(np.isfinite(losses)):
        raise InvalidInputError("losses must be finite")
    method = params.method
    if method is BaselineMethod.FEDAVG:
        return np.zeros_like(losses)
    if method is BaselineMethod.TERM:
        return losses.copy()
    if method is BaselineMethod.QFEDAVG:
        if np.any(losses < 0):
            raise InvalidInputError("losses must be >= 0")
        if np.any(losses < QFEDAVG_LOSS_FLOOR):
            logger.warning("q-weighted response: clamping %d zero losses at %g",
                           int(np.sum(losses < QFEDAVG_LOSS_FLOOR)), QFEDAVG_LOSS_FLOOR)
        return params.q * np.log(np.maximum(losses, QFEDAVG_LOSS_FLOOR))
    if method is BaselineMethod.PROPFAIR:
        gap = params.m - losses
        if np.any(gap < PROPFAIR_GAP_FLOOR):
            logger.warning("proportional-fair response saturated: %d losses >= m=%g",
                           int(np.sum(gap < PROPFAIR_GAP_FLOOR)), params.m)
            gap = np.maximum(gap, PROPFAIR_GAP_FLOOR)
        return -np.log(gap)
    raise InvalidInputError(f"unknown baseline {method!r}")  # pragma: no cover


def eg_step(prev: np.ndarray, response: np.ndarray, eta: float) -> np.ndarray:
    """Multiplicative-weights update p_i' proportional to p_i exp(r_i / eta).

    Computed in the log domain (max subtracted before exponentiation) so that
    large responses, e.g. from the q -> inf minimax limit, cannot overflow.
    Zero-support entries stay zero; a nonzero response there is ignored with
    a warning since the entropic update cannot revive dead coordinates.
    """
    prev = np.asarray(prev, dtype=float)
    response = np.asarray(response, dtype=float)
    if prev.shape != response.shape or prev.ndim != 1:
        raise InvalidInputError("decision and response dimensions differ")
    if eta <= 0:
        raise InvalidInputError("step size must be positive")
    if np.any(prev < 0) or abs(prev.sum() - 1.0) > simplex.SIMPLEX_SUM_TOL:
        raise InvalidInputError("previous decision must lie on the simplex")
    dead = prev == 0.0
    if np.any(dead & (response != 0.0)):
        logger.warning("entropic step: %d zero-support entries carry nonzero response",
                       int(np.sum(dead & (response != 0.0))))
    with np.errstate(divide="ignore"):
        w = np.where(dead, -np.inf, np.log(np.where(dead, 1.0, prev))) + response / eta
    w -= w.max()
    p = np.exp(w)
    return p / p.sum()


@dataclass(frozen=True)
class OnsState:
    """Second-order learner state.

    b_matrix is alpha*I plus beta times the running sum of gradient outer
    products; linear_term accumulates (1 - beta <g, p>) g. The next decision
    is the b_matrix-metric projection of the unconstrained Newton point
    -b_matrix^{-1} linear_term onto the simplex.
    """

    t: int
    decision: np.ndarray
    b_matrix: np.ndarray
    linear_term: np.ndarray
    alpha: float
    beta: float
    l_inf: float

    @classmethod
    def init(cls, k: int, l_inf: float) -> "OnsState":
        """Fresh state with alpha = 4*K*l_inf and beta = 1/(4*l_inf)."""
        if l_inf <= 0:
            raise InvalidInputError("Lipschitz constant must be positive")
        alpha = 4.0 * k * l_inf
        beta = 1.0 / (4.0 * l_inf)
        return cls(
            t=0,
            decision=simplex.uniform(k),
            b_matrix=alpha * np.eye(k),
            linear_term=np.zeros(k),
            alpha=alpha,
            beta=beta,
            l_inf=l_inf,
        )


def ons_step(state: OnsState, gradient: np.ndarray) -> tuple[OnsState, np.ndarray]:
    """Advance the second-order learner by one observed gradient.

    The gradient must be the decision-loss gradient evaluated at
    ``state.decision``. Returns the updated state and the new decision, which
    minimizes the accumulated linearized losses plus the quadratic proximal
    regularizer over the simplex.
    """
    g = np.asarray(gradient, dtype=float)
    if g.shape != state.decision.shape:
        raise InvalidInputError("gradient dimension mismatch")
    if not np.all(np.isfinite(g)):
        raise InvalidInputError("gradient must be finite")
    if np.max(np.abs(g)) > state.l_inf + 1e-9:
        raise InvalidInputError(
            f"gradient sup norm {np.max(np.abs(g)):.6g} exceeds Lipschitz bound {state.l_inf:.6g}"
        )
    b_new = state.b_matrix + state.beta * np.outer(g, g)
    lin_new = state.linear_term + (1.0 - state.beta * float(g @ state.decision)) * g
    newton = np.linalg.solve(b_new, -lin_new)
    decision = simplex.project_mahalanobis(newton, b_new, start=state.decision)
    new_state = replace(state, t=state.t + 1, decision=decision, b_matrix=b_new, linear_term=lin_new)
    return new_state, decision


@dataclass(frozen=True)
class FtrlState:
    """Entropic follow-the-regularized-leader state.

    l_inf is the sup-norm bound on the supplied gradients (the inflated
    constant when they come from doubly robust estimates); it sets the
    closed-form step size l_inf * sqrt(t+1) / sqrt(log K).
    """

    t: int
    cumulative_gradient: np.ndarray
    l_inf: float

    @classmethod
    def init(cls, k: int, l_inf: float) -> "FtrlState":
        if l_inf <= 0:
            raise InvalidInputError("Lipschitz constant must be positive")
        return cls(t=0, cumulative_gradient=np.zeros(k), l_inf=l_inf)

    @property
    def k(self) -> int:
        return self.cumulative_gradient.size


def ftrl_eg_step(state: FtrlState, gradient: np.ndarray) -> tuple[FtrlState, np.ndarray]:
    """Closed-form entropic FTRL update.

    After accumulating the t-th gradient the new decision is the softmax of
    -sum(gradients) / eta with eta = l_inf * sqrt(t+1) / sqrt(log K),
    stabilized by subtracting the max exponent. A single-client federation
    (log K = 0) short-circuits to the trivial decision.
    """
    g = np.asarray(gradient, dtype=float)
    if g.shape != state.cumulative_gradient.shape:
        raise InvalidInputError("gradient dimension mismatch")
    if not np.all(np.isfinite(g)):
        raise InvalidInputError("gradient must be finite")
    if np.max(np.abs(g)) > state.l_inf + 1e-9:
        raise InvalidInputError(
            f"gradient sup norm {np.max(np.abs(g)):.6g} exceeds Lipschitz bound {state.l_inf:.6g}"
        )
    cum = state.cumulative_gradient + g
    t_new = state.t + 1
    new_state = replace(state, t=t_new, cumulative_gradient=cum)
    k = cum.size
    if k == 1:
        return new_state, np.ones(1)
    eta = state.l_inf * np.sqrt(t_new + 1.0) / np.sqrt(np.log(k))
    w = -cum / eta
    w -= w.max()
    p = np.exp(w)
    return new_state, p / p.sum()


def cumulative_loss(p: np.ndarray, responses: np.ndarray) -> float:
    """Sum over rounds of -log(1 + <p, r_t>); +inf outside the domain."""
    growth = 1.0 + responses @ p
    if np.any(growth <= 0.0):
        return np.inf
    return -float(np.log(growth).sum())


def _cumulative_gradient(p, r):
    return -(r.T @ (1.0 / (1.0 + r @ p)))


def _optimality_gap(p, grad):
    """Certified suboptimality bound over the simplex: by convexity,
    f(p) - f(q) <= <grad, p - q> <= <grad, p> - min_i grad_i for all q."""
    return float(grad @ p - grad.min())


def _entropic_warm_start(r, p, budget, target_gap):
    """Entropic mirror descent with Armijo backtracking; cheap early phase."""
    f = cumulative_loss(p, r)
    step = 1.0
    for _ in range(budget):
        grad = _cumulative_gradient(p, r)
        if _optimality_gap(p, grad) <= target_gap:
            break
        accepted = False
        for _ in range(60):
            # log(0) = -inf is the correct limit for coordinates driven to
            # zero; the multiplicative update keeps them there.
            with np.errstate(divide="ignore"):
                w = np.log(p) - step * grad
            w -= w.max()
            cand = np.exp(w)
            cand /= cand.sum()
            f_cand = cumulative_loss(cand, r)
            if f_cand <= f + 1e-4 * float(grad @ (cand - p)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        p, f = cand, f_cand
        step *= 1.3
    return p


def _newton_on_support(r, x, iters=40):
    """Damped Newton for the restricted problem min f(x) s.t. sum x = 1.

    ``r`` holds only the supported response columns. The sum constraint is
    kept by solving the bordered KKT system; steps are clamped to preserve
    x >= 0 and backtracked to stay inside the log domain.
    """
    m = x.size
    f = cumulative_loss(x, r)
    for _ in range(iters):
        inv_growth = 1.0 / (1.0 + r @ x)
        grad = -(r.T @ inv_growth)
        scaled = r * inv_growth[:, None]
        hess = scaled.T @ scaled
        kkt = np.zeros((m + 1, m + 1))
        kkt[:m, :m] = hess + 1e-12 * np.eye(m)
        kkt[:m, m] = 1.0
        kkt[m, :m] = 1.0
        rhs = np.concatenate([-grad, [0.0]])
        try:
            dx = np.linalg.solve(kkt, rhs)[:m]
        except np.linalg.LinAlgError:
            break
        if np.max(np.abs(dx)) <= 1e-16:
            break
        # largest step keeping the iterate nonnegative
        limit = 1.0
        shrink = dx < 0
        if np.any(shrink):
            limit = min(1.0, float(np.min(x[shrink] / -dx[shrink])))
        alpha = limit
        improved = False
        for _ in range(50):
            cand = np.maximum(x + alpha * dx, 0.0)
            cand /= cand.sum()
            f_cand = cumulative_loss(cand, r)
            if f_cand <= f + 1e-4 * alpha * float(grad @ dx):
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        x, f = cand, f_cand
        if alpha * float(np.max(np.abs(dx))) <= 1e-15:
            break
    return x


def hindsight_best(
    responses,
    gap_tol: float = 1e-9,
    max_iter: int = 500,
) -> np.ndarray:
    """Best fixed decision in hindsight for a sequence of responses.

    Minimizes the cumulative decision loss over the simplex. An entropic
    mirror-descent phase locates the active face cheaply; an active-set
    Newton phase then polishes the supported coordinates, which is what
    makes 1e-9-level optimality affordable when the cumulative loss is flat
    along parts of the face (plain mirror descent decays like 1/iteration
    there). Termination is certified by the simplex duality gap
    <grad, p> - min_i grad_i, an upper bound on the objective suboptimality.
    """
    r = np.atleast_2d(np.asarray(responses, dtype=float))
    if r.size == 0:
        raise InvalidInputError("need at least one response")
    if not np.all(np.isfinite(r)):
        raise InvalidInputError("responses must be finite")
    t, k = r.shape
    if k == 1:
        return np.ones(1)

    p = simplex.uniform(k)
    if not np.isfinite(cumulative_loss(p, r)):
        raise InvalidInputError("cumulative loss undefined at the uniform start")
    p = _entropic_warm_start(r, p, budget=200, target_gap=max(gap_tol, 1e-6))

    gap = np.inf
    best_gap = np.inf
    stall = 0
    for _ in range(max_iter):
        grad = _cumulative_gradient(p, r)
        gap = _optimality_gap(p, grad)
        if gap <= gap_tol:
            return p
        if gap < best_gap - 1e-15:
            best_gap, stall = gap, 0
        else:
            stall += 1
            if stall >= 20:
                break
        support = p > 1e-15
        support[int(np.argmin(grad))] = True
        idx = np.nonzero(support)[0]
        x = _newton_on_support(r[:, idx], np.maximum(p[idx], 1e-15) / p[idx].sum())
        p = np.zeros(k)
        p[idx] = x
    if gap <= 1e-6:  # short of gap_tol but still far inside test tolerances
        return p
    raise ConvergenceError(
        f"hindsight solver stalled with optimality gap {gap:.3e}",
        iterate=p,
        residual=gap,
    )
