"""Solver and run configuration."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, replace

from .errors import InvalidConfig


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and limits shared by the optimisation routines.

    Attributes
    ----------
    max_iter : int
        Iteration cap (Newton steps for interior-point solvers, gradient
        steps for first-order ones).
    gap_tol : float
        Target duality gap, relative to ``1 + |value|``.
    feas_tol : float
        Constraint violation accepted in reported plans.
    tol : float
        Stationarity tolerance for first-order and Newton stopping rules.
    ceiling : float
        Prices beyond this magnitude are reported as unbounded.
    seed : int
        Seed for any randomised component.
    """

    max_iter: int = 500
    gap_tol: float = 1e-8
    feas_tol: float = 1e-7
    tol: float = 1e-9
    ceiling: float = 1e9
    seed: int = 0

    def __post_init__(self):
        for name in ("gap_tol", "feas_tol", "tol", "ceiling"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive", field=name)
        if self.max_iter < 1:
            raise InvalidConfig("max_iter must be at least 1", field="max_iter")

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        if data is None:
            return cls()
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation: command, inputs, solver settings and output."""

    command: str
    inputs: dict = field(default_factory=dict)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: str | None = None
    verbosity: int = 0
    threads: int | None = None

    def __post_init__(self):
        for key, path in self.inputs.items():
            if path is not None and not os.path.exists(path):
                raise InvalidConfig(f"input file for {key!r} does not exist: {path}", field=key)


def resolve_threads(flag=None):
    """Worker count from the flag, then ``FRICTIONLAB_THREADS``, then the CPU count."""
    if flag is not None:
        n = int(flag)
    else:
        env = os.environ.get("FRICTIONLAB_THREADS")
        n = int(env) if env else (os.cpu_count() or 1)
    if n < 1:
        raise InvalidConfig("thread count must be positive", field="threads")
    return n
