"""Solve and relaxation reports shared across the solver modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

__all__ = ["SolveReport", "RelaxationReport", "NonConvergenceError"]


@dataclass
class SolveReport:
    """Iteration record of a solver run; cost traces are non-increasing for
    the monotone-descent methods."""

    method: str
    iterations: int
    residual: float
    converged: bool
    cost: Optional[float] = None
    stationarity: Optional[float] = None
    cost_trace: Optional[list] = None
    contraction_ratio: Optional[float] = None
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
        }
        if self.cost is not None:
            d["cost"] = self.cost
        if self.stationarity is not None:
            d["stationarity"] = self.stationarity
        if self.cost_trace is not None:
            d["cost_trace"] = list(self.cost_trace)
        if self.contraction_ratio is not None:
            d["contraction_ratio"] = self.contraction_ratio
        if self.extras:
            d["extras"] = dict(self.extras)
        return d


@dataclass
class RelaxationReport:
    """Gap certificate: best sampled classical cost versus the relaxed value.

    ``failed`` flags a violated sub-relaxation inequality, which is a bug
    trap rather than a tolerated outcome.  A nonzero gap at fixed mesh width
    mixes a genuine relaxation gap with discretization effects; the split is
    not resolved here (see ``note``).
    """

    best_classical: float
    relaxed: float
    dirac_residual: float
    certificates: list = field(default_factory=list)
    trace: dict = field(default_factory=dict)
    failed: bool = False
    note: str = (
        "gap measured at fixed mesh width; continuum vs discretization "
        "contributions are not separated"
    )

    @property
    def gap(self) -> float:
        return self.best_classical - self.relaxed

    def to_dict(self) -> dict:
        return {
            "best_classical": self.best_classical,
            "relaxed": self.relaxed,
            "gap": self.gap,
            "dirac_residual": self.dirac_residual,
            "certificates": list(self.certificates),
            "trace": dict(self.trace),
            "failed": self.failed,
            "note": self.note,
        }


class NonConvergenceError(RuntimeError):
    """Raised when an iterative solve exhausts its cap; carries the report."""

    def __init__(self, message: str, report: Optional[SolveReport] = None):
        super().__init__(message)
        self.report = report
