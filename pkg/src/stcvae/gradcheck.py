"""Finite-difference verification of reverse-mode gradients."""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor


@dataclass
class GradCheckReport:
    """Outcome of one finite-difference sweep.

    ``max_rel_err`` uses |ad - fd| / max(|ad|, |fd|) per coordinate, with
    the absolute error substituted when both magnitudes are below 1e-8
    (a ratio of two near-zero numbers says nothing).
    """

    max_rel_err: float
    checked: int
    tolerance: float
    worst_param: str
    worst_index: tuple[int, ...]

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def grad_check(
    loss_fn,
    params: dict[str, np.ndarray],
    tolerance: float = 1e-4,
    n_coords: int = 200,
    step: float = 1e-4,
    seed: int = 0,
) -> GradCheckReport:
    """Compare reverse-mode gradients of ``loss_fn`` to central differences.

    ``loss_fn`` maps a name -> Tensor dict to a scalar Tensor.  Arrays are
    promoted to float64; a random subset of at least ``n_coords``
    coordinates (all of them, if fewer exist) is probed with central
    differences of half-width ``step``.
    """
    work = {k: np.asarray(v, dtype=np.float64).copy() for k, v in params.items()}

    tensors = {k: Tensor(v, requires_grad=True) for k, v in work.items()}
    loss = loss_fn(tensors)
    loss.backward()
    # parameters the loss never touches have a zero gradient
    analytic = {
        k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for k, t in tensors.items()
    }

    rng = np.random.default_rng(seed)
    coords: list[tuple[str, tuple[int, ...]]] = []
    for name, arr in work.items():
        for flat in range(arr.size):
            coords.append((name, np.unravel_index(flat, arr.shape)))
    if len(coords) > n_coords:
        picked = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[i] for i in sorted(picked)]

    def eval_loss() -> float:
        frozen = {k: Tensor(v) for k, v in work.items()}
        return float(loss_fn(frozen).data)

    max_err = 0.0
    worst = (next(iter(work)), ())
    for name, idx in coords:
        original = work[name][idx]
        work[name][idx] = original + step
        up = eval_loss()
        work[name][idx] = original - step
        down = eval_loss()
        work[name][idx] = original
        fd = (up - down) / (2.0 * step)
        ad_val = analytic[name][idx]
        denom = max(abs(ad_val), abs(fd))
        err = abs(ad_val - fd) if denom < 1e-8 else abs(ad_val - fd) / denom
        if err > max_err:
            max_err = err
            worst = (name, idx)
    return GradCheckReport(
        max_rel_err=float(max_err),
        checked=len(coords),
        tolerance=tolerance,
        worst_param=worst[0],
        worst_index=tuple(int(i) for i in worst[1]),
    )
