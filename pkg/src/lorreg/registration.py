"""Registration driver: minimize a similarity objective over transform
parameters with the limited-memory quasi-Newton loop."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import ImageGrid
from .objective import Objective, ObjectiveConfig
from .optimize import minimize_lbfgs, OptimizationTrace
from .transforms import Transform


@dataclass(frozen=True)
class RegistrationResult:
    transform: Transform
    trace: OptimizationTrace
    value: float


def register(config: ObjectiveConfig, moving: ImageGrid, fixed: ImageGrid,
             init: Transform, max_iter: int = 200,
             grad_tol_scale: float = 1e-6) -> RegistrationResult:
    """Register ``moving`` onto ``fixed`` starting from ``init``."""
    objective = Objective(config, moving, fixed)
    template = init

    def fun(params):
        value, grad = objective.value_and_gradient(template.with_params(params))
        return value, grad

    best, trace = minimize_lbfgs(fun, init.get_params(), max_iter=max_iter,
                                 grad_tol_scale=grad_tol_scale)
    final = template.with_params(best)
    return RegistrationResult(transform=final, trace=trace,
                              value=trace.values[-1])


def save_result(result: RegistrationResult, config: ObjectiveConfig, path) -> None:
    payload = {
        "transform": result.transform.to_dict(),
        "value": result.value,
        "config": {
            "measure": result and config.measure.kind,
            "estimator": config.estimator,
            "bins": config.bins,
            "sigma": config.scales.sigma,
            "beta": config.scales.beta,
            "alpha": config.scales.alpha,
        },
        "trace": result.trace.summary(),
    }
    Path(path).write_text(json.dumps(payload, indent=2))
