"""Error taxonomy shared by every module of the package.

All errors derive from :class:`BoundError` and carry a ``context`` dict with
whatever is needed to reproduce the failure (seed, sigma, query index, ...).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence


class BoundError(Exception):
    """Base class. ``kind`` is the class name, ``context`` a JSON-friendly dict."""

    def __init__(self, message: str = "", **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    @property
    def kind(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "message": self.message,
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }

    def __str__(self) -> str:
        if not self.context:
            return self.message
        extras = ", ".join(f"{k}={v!r}" for k, v in self.context.items() if k != "result")
        return f"{self.message} ({extras})" if extras else self.message


class InvalidInput(BoundError, ValueError):
    pass


class NotPSD(BoundError):
    pass


class NotPD(BoundError):
    pass


class HypothesisFalsified(BoundError):
    """The data cannot be explained by any (f, w) within the assumed budgets."""


class NumericalBreakdown(BoundError):
    pass


class OptimizerFailed(BoundError):
    """Sigma search hit its iteration cap; ``context['result']`` is still a valid bound."""


class OracleInconclusive(BoundError):
    pass


class RunDegraded(BoundError):
    pass


def _jsonable(v: Any) -> Any:
    if isinstance(v, float):
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (int, str, bool)) or v is None:
        return v
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    try:
        return _jsonable(float(v))
    except (TypeError, ValueError):
        return repr(v)


@dataclass(frozen=True)
class FalsificationDiagnostic:
    """Least-violated probe and the budget inflation that would repair it."""

    sigma: float
    beta_sq: float
    inflation: float
    probes_checked: int
    violations: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "beta_sq": self.beta_sq,
            "inflation": self.inflation,
            "probes_checked": self.probes_checked,
        }


def classify_falsification(data, probes: Iterable[Sequence[float]]) -> FalsificationDiagnostic:
    """Summarise a sigma scan in which some probe has ``beta_sq < 0``.

    ``probes`` holds ``(sigma, beta_sq)`` pairs. With budget = Gf^2 + Gw^2/sigma^2
    and interp = budget - beta_sq, scaling both budgets by
    ``c = max interp / budget`` makes beta_sq non-negative at every probe. The
    reported sigma is the most violated probe, where that maximum is attained.
    """
    probes = [(float(s), float(b)) for s, b in probes]
    if not probes:
        raise InvalidInput("no probes to classify")

    def ratio(p):
        budget = data.gamma_f_sq + data.gamma_w_sq / p[0] ** 2
        return (budget - p[1]) / budget

    sigma, beta_sq = max(probes, key=ratio)
    return FalsificationDiagnostic(
        sigma=sigma,
        beta_sq=beta_sq,
        inflation=max(1.0, ratio((sigma, beta_sq))),
        probes_checked=len(probes),
        violations=tuple(p for p in probes if p[1] < 0),
    )
