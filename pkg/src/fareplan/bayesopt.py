"""Gaussian-process Bayesian optimization over the fare box.

A fixed, documented configuration keeps the benchmark reproducible: a
squared-exponential kernel with per-dimension lengthscale 0.2 on the unit
hypercube, unit signal variance after standardizing the observed values,
1e-8 diagonal jitter and no hyperparameter optimization.  The acquisition
rule is an upper confidence bound maximized over a seeded low-discrepancy
candidate pool plus local perturbations of the incumbent.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.stats import qmc

from .choice import eval_context
from .model import Instance


class SingularKernel(RuntimeError):
    """Cholesky failed even after escalating the diagonal jitter."""


@dataclass(frozen=True)
class GPHyper:
    lengthscale: float = 0.2
    signal_var: float = 1.0
    jitter: float = 1e-8


@dataclass
class GPState:
    X: np.ndarray
    y_std: np.ndarray
    y_mean: float
    y_scale: float
    hyper: GPHyper
    L: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)


def _kernel(A: np.ndarray, B: np.ndarray, hyper: GPHyper) -> np.ndarray:
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=-1)
    return hyper.signal_var * np.exp(-0.5 * d2 / hyper.lengthscale ** 2)


def gp_fit(points: np.ndarray, values: np.ndarray,
           hyper: GPHyper | None = None) -> GPState:
    """Exact GP regression on unit-cube points with standardized values.

    Retries the Cholesky three times with a tenfold jitter escalation
    before raising :class:`SingularKernel`.
    """
    hyper = hyper or GPHyper()
    X = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.asarray(values, dtype=float)
    if len(X) == 0:
        raise ValueError("need at least one observation")
    mean = float(v.mean())
    scale = float(v.std())
    if scale == 0.0:
        scale = 1.0
    y_std = (v - mean) / scale
    K = _kernel(X, X, hyper)
    jitter = hyper.jitter
    L = None
    for _ in range(4):
        try:
            L = cholesky(K + jitter * np.eye(len(X)), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
    else:
        raise SingularKernel(f"kernel not PD after jitter {jitter / 10}")
    if L is None:
        raise SingularKernel("cholesky failed")
    alpha = cho_solve((L, True), y_std)
    return GPState(X=X, y_std=y_std, y_mean=mean, y_scale=scale,
                   hyper=hyper, L=L, alpha=alpha)


def gp_posterior(state: GPState, Xq: np.ndarray):
    """Posterior mean and stddev at query points, in original value units.

    Variance is clamped at zero after numerical cancellation.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Ks = _kernel(Xq, state.X, state.hyper)
    mean_std = Ks @ state.alpha
    v = solve_triangular(state.L, Ks.T, lower=True)
    var = np.maximum(state.hyper.signal_var - (v ** 2).sum(axis=0), 0.0)
    return state.y_mean + state.y_scale * mean_std, state.y_scale * np.sqrt(var)


def _sobol_pool(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    sampler = qmc.Sobol(d=d, scramble=True, seed=rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return sampler.random(count)


def ucb_suggest(state: GPState, kappa: float, candidate_count: int,
                rng: np.random.Generator) -> np.ndarray:
    """Argmax of mean + kappa * stddev over the candidate pool."""
    d = state.X.shape[1]
    pool = _sobol_pool(d, candidate_count, rng)
    incumbent = state.X[int(np.argmax(state.y_std))]
    local = np.clip(incumbent + 0.05 * rng.standard_normal((32, d)), 0.0, 1.0)
    cands = np.vstack([pool, local])
    mean, std = gp_posterior(state, cands)
    return cands[int(np.argmax(mean + kappa * std))]


class BOSuggester:
    """Stateless-ish ask interface used for warm starts and the BO loop."""

    def __init__(self, axis_bounds: np.ndarray, kappa: float = 2.0,
                 candidate_count: int = 1024,
                 rng: np.random.Generator | None = None,
                 hyper: GPHyper | None = None):
        self.bounds = np.asarray(axis_bounds, dtype=float)
        self.kappa = kappa
        self.candidate_count = candidate_count
        self.rng = rng or np.random.default_rng()
        self.hyper = hyper or GPHyper()
        width = self.bounds[:, 1] - self.bounds[:, 0]
        self._width = np.where(width > 0, width, 1.0)

    def to_unit(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y) - self.bounds[:, 0]) / self._width

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        return self.bounds[:, 0] + np.asarray(u) * (self.bounds[:, 1]
                                                    - self.bounds[:, 0])

    def ask(self, history_points: np.ndarray,
            history_values: np.ndarray) -> np.ndarray:
        """Next fare point given raw-space history (uniform when empty)."""
        if len(history_points) == 0:
            return self.from_unit(self.rng.random(len(self.bounds)))
        X = np.array([self.to_unit(p) for p in np.atleast_2d(history_points)])
        state = gp_fit(X, history_values, self.hyper)
        u = ucb_suggest(state, self.kappa, self.candidate_count, self.rng)
        return self.from_unit(u)


def bo_search(fn, axis_bounds: np.ndarray,
              eval_budget: int | None = None,
              time_limit: float | None = None,
              kappa: float = 2.0, seed: int | None = None,
              candidate_count: int = 1024,
              clock=time.monotonic):
    """Generic UCB loop over a box; ``fn`` maps a raw point to a value.

    One of ``eval_budget`` / ``time_limit`` must be given.  Returns
    (best point, best value, history) where history is the evaluation
    list in order.
    """
    if eval_budget is None and time_limit is None:
        raise ValueError("need eval_budget or time_limit")
    rng = np.random.default_rng(seed)
    suggester = BOSuggester(axis_bounds, kappa=kappa,
                            candidate_count=candidate_count, rng=rng)
    history: list[tuple[np.ndarray, float]] = []
    xs: list[np.ndarray] = []
    vals: list[float] = []
    best_x, best_v = None, -np.inf
    t0 = clock()
    while True:
        if eval_budget is not None and len(history) >= eval_budget:
            break
        if time_limit is not None and clock() - t0 >= time_limit:
            break
        x = suggester.ask(np.array(xs) if xs else np.empty((0, len(axis_bounds))),
                          np.array(vals))
        v = float(fn(x))
        xs.append(x)
        vals.append(v)
        history.append((x, v))
        if v > best_v:
            best_x, best_v = x, v
    return best_x, best_v, history


def bo_loop(instance: Instance,
            eval_budget: int | None = None,
            time_limit: float | None = None,
            kappa: float = 2.0, seed: int | None = None,
            component_cap: int = 20, heuristic_fallback: bool = False,
            clock=time.monotonic):
    """Bayesian optimization of the welfare objective on one instance.

    Each suggested fare point is scored with the exact second stage.
    Returns (FareVector, value, history); the history hands off directly
    as warm starts for the timed descent driver.
    """
    from .descent import MemoizedEvaluator

    ctx = eval_context(instance)
    evaluator = MemoizedEvaluator(instance, component_cap=component_cap,
                                  heuristic_fallback=heuristic_fallback)

    def fn(y):
        return evaluator(y).welfare.total

    best_x, best_v, history = bo_search(
        fn, ctx.axis_bounds, eval_budget=eval_budget, time_limit=time_limit,
        kappa=kappa, seed=seed, clock=clock)
    if best_x is None:
        raise RuntimeError("budget admitted no evaluations")
    return ctx.vec_to_fares(best_x), best_v, history
