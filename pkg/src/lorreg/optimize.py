"""Limited-memory quasi-Newton minimization with a Wolfe line search.

A compact L-BFGS (two-loop recursion, 10 stored pairs) with backtracking
line search enforcing sufficient decrease and, when attainable, the
curvature condition.  Accepted steps never increase the objective, which
the optimization trace records.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizationTrace:
    params: list = field(default_factory=list)
    values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    step_lengths: list = field(default_factory=list)
    termination: str = "running"

    def record(self, x, f, g, step):
        self.params.append(np.asarray(x).copy())
        self.values.append(float(f))
        self.grad_norms.append(float(np.linalg.norm(g)))
        self.step_lengths.append(float(step))

    @property
    def n_iterations(self) -> int:
        return max(0, len(self.values) - 1)

    def summary(self) -> dict:
        return {
            "iterations": self.n_iterations,
            "termination": self.termination,
            "initial_value": self.values[0] if self.values else None,
            "final_value": self.values[-1] if self.values else None,
            "final_grad_norm": self.grad_norms[-1] if self.grad_norms else None,
        }


def _line_search(fun, x, f0, g0, direction, c1=1e-4, c2=0.9, max_backtracks=30):
    """Backtracking-to-Wolfe search along ``direction``.

    Returns (step, x_new, f_new, g_new) or step 0 on failure.  Armijo
    decrease is required; the curvature condition is checked but a point
    satisfying only Armijo is accepted when curvature cannot be met.
    """
    slope = float(g0 @ direction)
    if slope >= 0:
        return 0.0, x, f0, g0
    step = 1.0
    armijo_pt = None
    for _ in range(max_backtracks):
        x_new = x + step * direction
        f_new, g_new = fun(x_new)
        if np.isfinite(f_new) and f_new <= f0 + c1 * step * slope:
            if float(g_new @ direction) >= c2 * slope:
                return step, x_new, f_new, g_new
            if armijo_pt is None:
                armijo_pt = (step, x_new, f_new, g_new)
        step *= 0.5
    if armijo_pt is not None:
        return armijo_pt
    return 0.0, x, f0, g0


def minimize_lbfgs(fun, x0, max_iter=200, memory=10,
                   grad_tol_scale=1e-6, step_tol=1e-9):
    """Minimize ``fun(x) -> (value, gradient)`` from x0.

    Terminates when the gradient norm drops below
    ``grad_tol_scale * (1 + |value|)``, the step stalls, the line search
    fails, or the iteration budget runs out.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g = fun(x)
    trace = OptimizationTrace()
    trace.record(x, f, g, 0.0)
    s_list, y_list, rho_list = [], [], []

    for _ in range(max_iter):
        if np.linalg.norm(g) < grad_tol_scale * (1.0 + abs(f)):
            trace.termination = "gradient_tolerance"
            return x, trace

        # Two-loop recursion.
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_list:
            gamma = (s_list[-1] @ y_list[-1]) / (y_list[-1] @ y_list[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        direction = -q

        step, x_new, f_new, g_new = _line_search(fun, x, f, g, direction)
        if step == 0.0:
            trace.termination = "line_search_failure"
            return x, trace

        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)

        x, f, g = x_new, f_new, g_new
        trace.record(x, f, g, float(np.linalg.norm(s)))
        if np.linalg.norm(s) < step_tol * (1.0 + np.linalg.norm(x)):
            trace.termination = "step_tolerance"
            return x, trace

    trace.termination = "iteration_budget"
    return x, trace
