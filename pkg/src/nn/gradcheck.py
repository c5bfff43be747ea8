import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, MutableMapping, Optional

import numpy as np

from src.nn.core import ParameterStore
from src.utils.errors import ContractViolation

logger = logging.getLogger(__name__)

# closure(grads) returns the scalar loss; when grads is a mapping it also runs backward into it
Closure = Callable[[Optional[MutableMapping[str, np.ndarray]]], float]


@dataclass
class GradCheckReport:
    max_rel_error: float
    failures: List[str]
    errors: Dict[str, float] = field(default_factory=dict)
    checked: int = 0

    @property
    def passed(self) -> bool:
        return not self.failures


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(closure: Closure,
               store: ParameterStore,
               tol: float = 1e-4,
               step: float = 1e-5,
               names: Optional[Iterable[str]] = None,
               max_entries: Optional[int] = None,
               seed: int = 0,
               floor: float = 1e-6) -> GradCheckReport:
    """Compare backprop gradients with central finite differences.

    Every parameter array (or the subset in `names`) is perturbed entry by entry;
    `max_entries` caps the number of entries per array, drawn at random.
    """
    for name, param in store.params.items():
        if param.dtype != np.float64:
            raise ContractViolation(f"grad_check needs float64 parameters, '{name}' is {param.dtype}")

    grads = store.grad_buffer()
    closure(grads)
    rng = np.random.default_rng(seed)

    report = GradCheckReport(max_rel_error=0.0, failures=[])
    for name in (list(names) if names is not None else store.names()):
        param = store.params[name]
        analytic = grads[name].ravel() if name in grads else np.zeros(param.size)
        flat = param.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))

        worst = 0.0
        for i in entries:
            original = flat[i]
            flat[i] = original + step
            plus = closure(None)
            flat[i] = original - step
            minus = closure(None)
            flat[i] = original
            numeric = (plus - minus) / (2.0 * step)
            worst = max(worst, relative_error(float(analytic[i]), numeric, floor))

        report.errors[name] = worst
        report.checked += len(entries)
        report.max_rel_error = max(report.max_rel_error, worst)
        if worst > tol:
            report.failures.append(name)
            logger.warning(f"Gradient mismatch for {name}: rel. error {worst:.3e}")
    return report
