"""Limited-memory BFGS with a strong Wolfe line search.

The stopping rule is tailored to image recovery rather than to gradient
norms: the solver watches the percent change of the objective and the
percent mean-absolute change of the iterate, and declares convergence
once both stay under their thresholds for a run of consecutive
iterations.  Line-search trial points where the objective reports +inf
are treated as failed Wolfe trials and the step is shortened; a NaN
objective or a non-finite gradient aborts the solve with a
"numerical-failure" termination and the trace collected so far.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import ValidationError

WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9

_STEP_MAX = 1e10
_MAX_BRACKET = 60
_MAX_ZOOM = 50


@dataclass(frozen=True)
class SolverSettings:
    """Iteration budget and the dual percent-change stopping rule."""

    history: int = 64
    max_iters: int = 10_000
    m_consecutive: int = 5
    obj_tol_pct: float = 1.0
    recon_tol_pct: float = 0.5

    def __post_init__(self):
        for name in ("history", "max_iters", "m_consecutive"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        if self.history > self.max_iters:
            raise ValidationError("history must not exceed max_iters")
        for name in ("obj_tol_pct", "recon_tol_pct"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be a positive real, got {v!r}")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    obj_change_pct: float
    recon_change_pct: float
    elapsed_s: float


@dataclass(frozen=True)
class SolveTrace:
    """Per-iteration convergence record of one minimization."""

    records: tuple
    termination: str

    @property
    def n_iterations(self):
        return len(self.records)

    @property
    def final_objective(self):
        if not self.records:
            return float("nan")
        return self.records[-1].objective

    def to_text(self):
        lines = ["# iter objective obj_change_pct recon_change_pct elapsed_s"]
        for r in self.records:
            lines.append(
                f"{r.iteration} {r.objective:.12e} {r.obj_change_pct:.6e} "
                f"{r.recon_change_pct:.6e} {r.elapsed_s:.6f}"
            )
        lines.append(f"# termination: {self.termination}")
        return "\n".join(lines) + "\n"


class _NumericalTrouble(Exception):
    """Internal signal: NaN objective, -inf objective, or bad gradient."""


def _evaluate(fun, v):
    value, grad = fun(v)
    value = float(value)
    if np.isnan(value) or value == -np.inf:
        raise _NumericalTrouble
    if value == np.inf:
        # failed trial marker; the gradient is not consulted
        return value, None
    grad = np.asarray(grad, dtype=float).ravel()
    if grad.shape != v.shape:
        raise ValidationError(
            f"gradient shape {grad.shape} does not match point shape {v.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise _NumericalTrouble
    return value, grad


def _pct_change(prev, cur):
    diff = abs(cur - prev)
    if diff == 0.0:
        return 0.0
    den = abs(prev)
    if den == 0.0:
        return float("inf")
    return 100.0 * diff / den


def _pct_move(prev_x, cur_x):
    num = float(np.abs(cur_x - prev_x).mean())
    if num == 0.0:
        return 0.0
    den = float(np.abs(cur_x).mean())
    if den == 0.0:
        return float("inf")
    return 100.0 * num / den


def _direction(mem, g):
    q = g.copy()
    if not mem:
        return -q
    alphas = []
    for s, y, rho in reversed(mem):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    s_last, y_last, _ = mem[-1]
    q *= np.dot(s_last, y_last) / np.dot(y_last, y_last)
    for (s, y, rho), a in zip(mem, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def _quad_min(alo, flo, derlo, ahi, fhi):
    h = ahi - alo
    denom = fhi - flo - derlo * h
    if denom <= 0 or not np.isfinite(denom):
        return None
    a = alo - 0.5 * derlo * h * h / denom
    lo, hi = min(alo, ahi), max(alo, ahi)
    margin = 0.05 * (hi - lo)
    if not (lo + margin <= a <= hi - margin):
        return None
    return a


def _zoom(fun_eval, x, d, f0, der0, alo, flo, derlo, ahi, fhi):
    # best is the lowest trial satisfying sufficient decrease; if the
    # curvature condition proves unattainable (a constraint boundary can
    # do this) we still return it so the iterate makes progress
    best = None
    for _ in range(_MAX_ZOOM):
        if abs(ahi - alo) <= 1e-14 * max(1.0, abs(alo)):
            break
        aj = None
        if np.isfinite(fhi):
            aj = _quad_min(alo, flo, derlo, ahi, fhi)
        if aj is None:
            aj = 0.5 * (alo + ahi)
        fj, gj = fun_eval(x + aj * d)
        if not np.isfinite(fj) or fj > f0 + WOLFE_C1 * aj * der0 or fj >= flo:
            ahi, fhi = aj, fj
        else:
            if best is None or fj < best[1]:
                best = (aj, fj, gj)
            derj = float(np.dot(gj, d))
            if abs(derj) <= -WOLFE_C2 * der0:
                return aj, fj, gj
            if derj * (ahi - alo) >= 0:
                ahi, fhi = alo, flo
            alo, flo, derlo = aj, fj, derj
    return best


def _line_search(fun_eval, x, d, f0, g0, a_init):
    der0 = float(np.dot(g0, d))
    if der0 >= 0:
        return None
    a_prev, f_prev, der_prev = 0.0, f0, der0
    a = a_init
    for i in range(_MAX_BRACKET):
        fa, ga = fun_eval(x + a * d)
        if not np.isfinite(fa) or fa > f0 + WOLFE_C1 * a * der0 or (i > 0 and fa >= f_prev):
            return _zoom(fun_eval, x, d, f0, der0, a_prev, f_prev, der_prev, a, fa)
        dera = float(np.dot(ga, d))
        if abs(dera) <= -WOLFE_C2 * der0:
            return a, fa, ga
        if dera >= 0:
            return _zoom(fun_eval, x, d, f0, der0, a, fa, dera, a_prev, f_prev)
        a_prev, f_prev, der_prev = a, fa, dera
        if a >= _STEP_MAX:
            return None
        a = min(2.0 * a, _STEP_MAX)
    return None


def lbfgs_minimize(fun, x0, settings=None):
    """Minimize fun(v) -> (value, gradient) from x0.

    Returns (solution, SolveTrace).  Termination is one of "converged"
    (both percent-change criteria held for m_consecutive iterations),
    "max-iters", or "numerical-failure".
    """
    if settings is None:
        settings = SolverSettings()
    if not isinstance(settings, SolverSettings):
        raise ValidationError("settings must be a SolverSettings")
    x = np.asarray(x0, dtype=float).ravel().copy()
    if x.size == 0:
        raise ValidationError("initial point is empty")
    if not np.all(np.isfinite(x)):
        raise ValidationError("initial point must be finite")

    t0 = time.perf_counter()
    records = []

    def fail(iteration):
        records.append(
            IterationRecord(
                iteration,
                float("nan"),
                float("nan"),
                float("nan"),
                time.perf_counter() - t0,
            )
        )
        return x, SolveTrace(tuple(records), "numerical-failure")

    try:
        f, g = _evaluate(fun, x)
        if not np.isfinite(f):
            raise _NumericalTrouble
    except _NumericalTrouble:
        return fail(1)

    mem = deque(maxlen=settings.history)
    streak = 0
    termination = "max-iters"

    def fun_eval(v):
        return _evaluate(fun, v)

    for k in range(1, settings.max_iters + 1):
        x_new, f_new, g_new = x, f, g
        if np.max(np.abs(g)) > 0.0:
            d = _direction(mem, g)
            if np.dot(g, d) >= 0:
                mem.clear()
                d = -g
            a_init = 1.0 if mem else min(1.0, 1.0 / np.abs(g).sum())
            try:
                hit = _line_search(fun_eval, x, d, f, g, a_init)
            except _NumericalTrouble:
                return fail(k)
            if hit is None:
                # cannot improve along this direction; drop stale curvature
                # and let the change criteria decide whether we are done
                mem.clear()
            else:
                a, f_new, g_new = hit
                s = a * d
                y = g_new - g
                sy = np.dot(s, y)
                if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
                    mem.append((s, y, 1.0 / sy))
                x_new = x + s

        if k == 1:
            obj_pct = float("nan")
            rec_pct = float("nan")
        else:
            obj_pct = _pct_change(f, f_new)
            rec_pct = _pct_move(x, x_new)
        records.append(
            IterationRecord(k, f_new, obj_pct, rec_pct, time.perf_counter() - t0)
        )
        if k >= 2 and obj_pct < settings.obj_tol_pct and rec_pct < settings.recon_tol_pct:
            streak += 1
        else:
            streak = 0
        x, f, g = x_new, f_new, g_new
        if streak >= settings.m_consecutive:
            termination = "converged"
            break

    return x, SolveTrace(tuple(records), termination)
