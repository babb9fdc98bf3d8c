"""Central finite-difference check of autodiff gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_err: float
    tol: float
    n_checked: int
    worst: list[tuple[int, tuple, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol


def grad_check(
    f: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
    max_entries: int | None = None,
    rng=None,
) -> GradCheckReport:
    """Compare ``f``'s autodiff gradients with ``(f(x+h) - f(x-h)) / 2h``.

    ``f`` rebuilds the graph from ``leaves`` on every call and returns a
    scalar. Leaves must be float64. The per-element relative error is
    ``|a - n| / max(|a|, |n|, floor)``. ``max_entries`` subsamples elements
    per leaf (using ``rng``) for large leaves.
    """
    for leaf in leaves:
        if leaf.dtype != np.float64:
            raise ValueError("grad_check requires float64 leaves")
        leaf.grad = None
    f().backward()
    analytic = [np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad.copy() for leaf in leaves]

    errs = []
    n_checked = 0
    for li, leaf in enumerate(leaves):
        flat = leaf.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.permutation(flat.size)[:max_entries])
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            a = analytic[li].reshape(-1)[i]
            err = abs(a - num) / max(abs(a), abs(num), floor)
            errs.append((err, li, np.unravel_index(i, leaf.shape), a, num))
            n_checked += 1
    errs.sort(key=lambda e: -e[0])
    worst = [(li, tuple(int(j) for j in pos), a, num) for _, li, pos, a, num in errs[:5]]
    return GradCheckReport(errs[0][0] if errs else 0.0, tol, n_checked, worst)
