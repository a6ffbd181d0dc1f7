"""Low-rank + sparse tensor separation by scaled gradient descent.

The observed tensor ``y`` is modeled as ``x + s`` where ``x`` has low
multilinear rank and ``s`` is entrywise sparse.  Each iteration first
re-estimates the sparse part by soft-shrinking the residual with a
geometrically decaying threshold, then takes one preconditioned gradient
step on the squared-error loss

    L(F, S) = 0.5 * ||reconstruct(F) + S - y||_F^2

in the factor parametrization.  The per-mode preconditioners are the
inverse Gram matrices of the co-factors, which is what keeps the step
well-scaled regardless of how ill-conditioned the underlying tensor is.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .tensor_ops import as_tensor, fro_norm, inf_norm, matricize, multilinear_mul
from .tucker import TuckerFactors, breve_factor, hosvd, reconstruct

# Gram matrices with a worse condition estimate than this are treated as
# numerically singular instead of being inverted.
GRAM_CONDITION_LIMIT = 1e12


class SingularGramError(np.linalg.LinAlgError):
    """A factor or co-factor Gram matrix is numerically singular."""

    def __init__(self, mode: int, cond: float, which: str):
        self.mode = mode
        self.cond = cond
        super().__init__(
            f"{which} Gram matrix for mode {mode} is numerically singular "
            f"(condition estimate {cond:.3e})"
        )


class DivergenceError(RuntimeError):
    """The iteration produced non-finite values."""


def soft_shrink(t: np.ndarray, zeta: float) -> np.ndarray:
    """Entrywise soft shrinkage sgn(x) * max(|x| - zeta, 0)."""
    if zeta < 0:
        raise ValueError(f"shrinkage threshold must be >= 0, got {zeta}")
    t = np.asarray(t)
    return np.sign(t) * np.maximum(np.abs(t) - zeta, 0.0)


class Reference(NamedTuple):
    """Ground-truth handle for error tracking and oracle thresholds.

    ``diagnostics`` may be None; it only needs ``mu`` and ``sigma_min``
    attributes when oracle thresholds are wanted.
    """

    x_star: np.ndarray
    diagnostics: object = None


@dataclass
class SolverConfig:
    """Knobs for :func:`solve`.

    Parameters
    ----------
    rank : tuple of int
        Target multilinear rank, one entry per mode.
    eta : float
        Step size in (0, 0.25].  The analysis behind the default schedule
        assumes eta in [1/7, 1/4].
    rho : float or None
        Threshold decay factor in (0, 1).  None means ``1 - 0.45 * eta``.
    zeta0, zeta1 : float or None
        Initialization / iteration shrinkage thresholds.  None selects a
        rule automatically, see :func:`make_schedule`.
    max_iters : int
        Iteration budget.
    stop_tol : float
        Early exit once the relative Frobenius change of the low-rank
        iterate drops below this.  0 disables early stopping; use that for
        slow decay factors, where the iteration can sit still for many
        steps while the threshold is still above the corruption scale.
    active_modes : tuple of bool or None
        Which factor matrices to update each iteration (the core and the
        sparse part always update).  None means all modes.
    alpha_estimate : float
        Corruption-fraction guess used by the automatic zeta0 rule.
    seed : int or None
        Unused by this deterministic solver; recorded for provenance.
    """

    rank: tuple[int, ...]
    eta: float = 0.25
    rho: float | None = None
    zeta0: float | None = None
    zeta1: float | None = None
    max_iters: int = 200
    stop_tol: float = 1e-12
    active_modes: tuple[bool, ...] | None = None
    alpha_estimate: float = 0.1
    seed: int | None = None

    def __post_init__(self):
        self.rank = tuple(int(r) for r in np.atleast_1d(self.rank))
        if any(r < 1 for r in self.rank):
            raise ValueError(f"rank entries must be >= 1, got {self.rank}")
        if not 0.0 < self.eta <= 0.25:
            raise ValueError(f"eta must be in (0, 0.25], got {self.eta}")
        if self.rho is not None and not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        for name in ("zeta0", "zeta1"):
            z = getattr(self, name)
            if z is not None and not z >= 0.0:
                raise ValueError(f"{name} must be >= 0, got {z}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be >= 0")
        if self.active_modes is not None:
            self.active_modes = tuple(bool(b) for b in self.active_modes)
        if not 0.0 <= self.alpha_estimate < 1.0:
            raise ValueError(f"alpha_estimate must be in [0, 1), got {self.alpha_estimate}")

    @property
    def effective_rho(self) -> float:
        return self.rho if self.rho is not None else 1.0 - 0.45 * self.eta

    def modes_mask(self, order: int) -> tuple[bool, ...]:
        if self.active_modes is None:
            return (True,) * order
        if len(self.active_modes) != order:
            raise ValueError(
                f"active_modes has {len(self.active_modes)} entries "
                f"for an order-{order} tensor"
            )
        return self.active_modes


@dataclass
class SolverState:
    """Iterate: current factors, sparse estimate, threshold, and counter."""

    factors: TuckerFactors
    sparse: np.ndarray
    zeta: float
    iteration: int


@dataclass
class ThresholdSchedule:
    """Shrinkage threshold sequence: zeta0 at init, then zeta1 * rho**(t-1)."""

    zeta0: float
    zeta1: float
    rho: float

    def __post_init__(self):
        if self.zeta0 < 0 or self.zeta1 < 0:
            raise ValueError("thresholds must be >= 0")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")

    def value(self, t: int) -> float:
        if t < 0:
            raise ValueError("iteration index must be >= 0")
        if t == 0:
            return self.zeta0
        return self.zeta1 * self.rho ** (t - 1)


@dataclass
class TraceRow:
    """One iteration record.  Error fields are None without a reference."""

    iteration: int
    zeta: float
    rel_fro_error: float | None
    inf_error: float | None
    loss: float
    seconds: float


@dataclass
class IterationTrace:
    """Per-iteration history of a solve."""

    rows: list[TraceRow] = field(default_factory=list)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def final(self) -> TraceRow:
        if not self.rows:
            raise ValueError("empty trace")
        return self.rows[-1]

    def rel_errors(self) -> np.ndarray:
        """Relative Frobenius errors as an array (nan where unavailable)."""
        return np.array(
            [np.nan if r.rel_fro_error is None else r.rel_fro_error for r in self.rows]
        )

    def iterations_to(self, tol: float) -> int | None:
        """First iteration whose relative error is <= tol, or None."""
        for r in self.rows:
            if r.rel_fro_error is not None and r.rel_fro_error <= tol:
                return r.iteration
        return None


class SolveResult(NamedTuple):
    factors: TuckerFactors
    sparse: np.ndarray
    trace: IterationTrace


def _as_reference(reference) -> Reference | None:
    if reference is None:
        return None
    x = getattr(reference, "x_star", None)
    if x is not None:
        return Reference(np.asarray(x, dtype=np.float64),
                         getattr(reference, "diagnostics", None))
    return Reference(np.asarray(reference, dtype=np.float64), None)


def _resolve_zeta0(cfg: SolverConfig, y: np.ndarray, ref: Reference | None) -> float:
    if cfg.zeta0 is not None:
        return cfg.zeta0
    if ref is not None:
        return inf_norm(ref.x_star)
    if cfg.alpha_estimate == 0.0:
        return inf_norm(y)
    return float(np.quantile(np.abs(y), 1.0 - cfg.alpha_estimate))


def _oracle_zeta1(cfg: SolverConfig, y: np.ndarray, ref: Reference) -> float | None:
    diag = ref.diagnostics
    mu = getattr(diag, "mu", None)
    sigma_min = getattr(diag, "sigma_min", None)
    if mu is None or sigma_min is None:
        return None
    ratio = np.prod(cfg.rank) / y.size
    return float(8.0 * np.sqrt(mu ** 3 * ratio) * sigma_min)


def make_schedule(
    cfg: SolverConfig,
    y: np.ndarray,
    init_estimate_hook: Callable[[np.ndarray, float], SolverState] | None = None,
    reference=None,
) -> ThresholdSchedule:
    """Resolve the full shrinkage schedule for ``y``.

    zeta0 precedence: explicit config value, then ``||x_star||_inf`` when a
    reference is given, then the ``1 - alpha_estimate`` quantile of ``|y|``
    (falling back to ``||y||_inf`` when alpha_estimate is 0).

    zeta1 precedence: explicit config value, then the oracle value
    ``8 * sqrt(mu^3 * prod(rank) / prod(dims)) * sigma_min`` when the
    reference carries diagnostics, else twice the sup-norm residual of the
    spectral initialization.  ``init_estimate_hook(y, zeta0)`` supplies that
    initialization; by default :func:`spectral_init` runs internally.
    """
    y = as_tensor(y)
    ref = _as_reference(reference)
    zeta0 = _resolve_zeta0(cfg, y, ref)
    zeta1 = cfg.zeta1
    if zeta1 is None and ref is not None:
        zeta1 = _oracle_zeta1(cfg, y, ref)
    if zeta1 is None:
        hook = init_estimate_hook
        state = hook(y, zeta0) if hook is not None else spectral_init(y, cfg, zeta0=zeta0)
        residual = y - state.sparse - reconstruct(state.factors)
        zeta1 = 2.0 * inf_norm(residual)
    return ThresholdSchedule(zeta0=zeta0, zeta1=zeta1, rho=cfg.effective_rho)


def spectral_init(
    y: np.ndarray, cfg: SolverConfig, zeta0: float | None = None, reference=None
) -> SolverState:
    """Initial iterate: shrink ``y`` at zeta0, then rank-truncate the rest.

    The sparse part is ``soft_shrink(y, zeta0)``; the factors are the
    truncated higher-order SVD of ``y`` minus that sparse part.
    """
    y = as_tensor(y, min_order=3)
    if zeta0 is None:
        zeta0 = _resolve_zeta0(cfg, y, _as_reference(reference))
    s0 = soft_shrink(y, zeta0)
    f0 = hosvd(y - s0, cfg.rank)
    return SolverState(factors=f0, sparse=s0, zeta=zeta0, iteration=0)


def update_sparse(state: SolverState, y: np.ndarray, zeta_next: float) -> np.ndarray:
    """Next sparse iterate: shrink the current low-rank residual at zeta_next."""
    return soft_shrink(np.asarray(y) - reconstruct(state.factors), zeta_next)


def _checked_gram(b: np.ndarray, mode: int, which: str) -> np.ndarray:
    gram = b.T @ b
    w = np.linalg.eigvalsh(gram)
    if w[-1] <= 0.0 or w[0] <= 0.0 or w[-1] / w[0] > GRAM_CONDITION_LIMIT:
        cond = np.inf if w[0] <= 0.0 else w[-1] / w[0]
        raise SingularGramError(mode, cond, which)
    return gram


def scaled_step(
    state: SolverState, y: np.ndarray, s_next: np.ndarray, cfg: SolverConfig
) -> TuckerFactors:
    """One preconditioned gradient step on the factors and core.

    Every active mode gets

        U_k <- (1 - eta) * U_k - eta * matricize(s_next - y, k) @ B_k @ inv(B_k.T @ B_k)

    with ``B_k`` the mode-k co-factor of the *current* factors, and the core
    gets the matching update through the factor-Gram preconditioners.  All
    updates read the pre-step factors, so the order of modes is irrelevant.
    """
    f = state.factors
    eta = cfg.eta
    mask = cfg.modes_mask(f.order)
    d = np.asarray(s_next) - np.asarray(y)

    new_factors = []
    for k, u in enumerate(f.factors):
        if not mask[k]:
            new_factors.append(u)
            continue
        b = breve_factor(f, k)
        gram = _checked_gram(b, k, "co-factor")
        rhs = matricize(d, k) @ b
        new_factors.append((1.0 - eta) * u - eta * np.linalg.solve(gram, rhs.T).T)

    pre = []
    for k, u in enumerate(f.factors):
        gram = _checked_gram(u, k, "factor")
        pre.append(np.linalg.solve(gram, u.T))
    new_core = (1.0 - eta) * f.core - eta * multilinear_mul(pre, d)
    return TuckerFactors(tuple(new_factors), new_core)


def _loss(x: np.ndarray, s: np.ndarray, y: np.ndarray) -> float:
    return 0.5 * fro_norm(x + s - y) ** 2


def _solve_impl(y: np.ndarray, cfg: SolverConfig, reference) -> SolveResult:
    start = time.perf_counter()
    y = as_tensor(y, min_order=3)
    size = y.size
    if len(cfg.rank) != y.ndim:
        raise ValueError(f"rank {cfg.rank} does not match tensor order {y.ndim}")
    for k, r in enumerate(cfg.rank):
        if r > min(y.shape[k], size // y.shape[k]):
            raise ValueError(f"rank[{k}]={r} too large for shape {y.shape}")
    cfg.modes_mask(y.ndim)  # validate early

    ref = _as_reference(reference)
    x_star = ref.x_star if ref is not None else None
    if x_star is not None and x_star.shape != y.shape:
        raise ValueError(f"reference shape {x_star.shape} does not match {y.shape}")
    x_star_fro = fro_norm(x_star) if x_star is not None else None

    zeta0 = _resolve_zeta0(cfg, y, ref)
    state = spectral_init(y, cfg, zeta0=zeta0)
    x = reconstruct(state.factors)
    zeta1 = cfg.zeta1
    if zeta1 is None and ref is not None:
        zeta1 = _oracle_zeta1(cfg, y, ref)
    if zeta1 is None:
        zeta1 = 2.0 * inf_norm(y - state.sparse - x)
    sched = ThresholdSchedule(zeta0=zeta0, zeta1=zeta1, rho=cfg.effective_rho)

    trace = IterationTrace()

    def record(t, zeta, x_t, s_t):
        rel = err_inf = None
        if x_star is not None:
            diff = x_t - x_star
            rel = fro_norm(diff) / x_star_fro if x_star_fro > 0 else fro_norm(diff)
            err_inf = inf_norm(diff)
        trace.rows.append(
            TraceRow(t, zeta, rel, err_inf, _loss(x_t, s_t, y),
                     time.perf_counter() - start)
        )

    record(0, zeta0, x, state.sparse)
    for t in range(cfg.max_iters):
        zeta_next = sched.value(t + 1)
        s_next = soft_shrink(y - x, zeta_next)
        f_next = scaled_step(state, y, s_next, cfg)
        x_next = reconstruct(f_next)
        if not np.all(np.isfinite(x_next)):
            raise DivergenceError(f"non-finite iterate at iteration {t + 1}")
        state = SolverState(f_next, s_next, zeta_next, t + 1)
        record(t + 1, zeta_next, x_next, s_next)
        delta = fro_norm(x_next - x)
        denom = max(fro_norm(x), 1e-300)
        x = x_next
        if cfg.stop_tol > 0 and delta / denom < cfg.stop_tol:
            break
    return SolveResult(state.factors, state.sparse, trace)


def solve(y: np.ndarray, cfg: SolverConfig, reference=None) -> SolveResult:
    """Separate an order-3 tensor into low-multilinear-rank plus sparse parts.

    Parameters
    ----------
    y : ndarray
        Order-3 observation, finite entries.
    cfg : SolverConfig
        Rank, step size, threshold schedule, and budget.
    reference : optional
        Ground truth for per-iteration error reporting; either an object
        with ``x_star`` (and optionally ``diagnostics``) attributes or a
        plain array.  When diagnostics are present the oracle threshold
        rules kick in, see :func:`make_schedule`.

    Returns
    -------
    SolveResult
        Final factors, sparse estimate, and the iteration trace.
    """
    y = as_tensor(y)
    if y.ndim != 3:
        raise ValueError(f"solve handles order-3 tensors, got order {y.ndim}; "
                         "use solve_orderN")
    return _solve_impl(y, cfg, reference)


def solve_orderN(y: np.ndarray, cfg: SolverConfig, reference=None) -> SolveResult:
    """Order-N generalization of :func:`solve` (N >= 3).

    Runs the identical update rules with mode-k co-factors generalized to
    N modes; for N = 3 the output is bit-for-bit the same as :func:`solve`.
    """
    y = as_tensor(y)
    if y.ndim < 3:
        raise ValueError(f"expected order >= 3, got order {y.ndim}")
    return _solve_impl(y, cfg, reference)
