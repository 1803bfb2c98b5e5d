"""Projected-descent iteration engine.

One step applies the model projection, then descends along a back-projected
residual:

    x_{n+1} = P(x_n) - mu * L(A P(x_n) - y)

Note the projection happens before the descent step (the reverse of the
more common presentation of projected gradient descent).  The run loop
records per-iteration diagnostics into a RecoveryTrace.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["GpgdConfig", "RecoveryTrace", "gpgd_step", "gpgd_run", "i_min_oracle"]

# Floor for relative-change denominators; avoids 0/0 on the zero iterate.
REL_CHANGE_FLOOR = float(np.finfo(float).tiny)


@dataclass
class GpgdConfig:
    """Iteration controls.

    rel_change_tol = 0 disables early stopping (fixed iteration count),
    which is what the reproduction experiments use so post-optimum behavior
    stays observable.
    """

    mu: float = 1.0
    max_iters: int = 100
    rel_change_tol: float = 0.0
    record_iterates: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"step size mu must be > 0, got {self.mu}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_change_tol < 0:
            raise ValueError(f"rel_change_tol must be >= 0, got {self.rel_change_tol}")


@dataclass
class RecoveryTrace:
    """Per-iteration diagnostics for one descent run.

    All lists cover iterates x_0 .. x_T with T = iterations_run;
    rel_changes[0] is NaN (no predecessor).  errors_to_truth is only
    populated when a ground truth was supplied, iterates only when
    recording was requested.  final always holds x_T.
    """

    residual_norms: list
    rel_changes: list
    iterations_run: int
    final: np.ndarray
    errors_to_truth: list = None
    iterates: list = None
    diverged: bool = False

    def to_csv(self, path):
        """One row per iterate: iter, error_to_truth, residual_norm, rel_change."""
        with open(path, "w") as fh:
            fh.write("iter,error_to_truth,residual_norm,rel_change\n")
            for i in range(self.iterations_run + 1):
                err = self.errors_to_truth[i] if self.errors_to_truth is not None else float("nan")
                fh.write(f"{i},{repr(float(err))},{repr(float(self.residual_norms[i]))},{repr(float(self.rel_changes[i]))}\n")


def gpgd_step(x, projection, back_projection, op, y, mu):
    """One iteration: P(x) - mu * L(A P(x) - y)."""
    px = np.asarray(projection(x), dtype=float)
    residual = op.apply(px) - y
    return px - mu * back_projection.apply(residual)


def gpgd_run(x0, projection, back_projection, op, y, cfg, truth=None):
    """Iterate gpgd_step from x0, recording diagnostics.

    Stops at cfg.max_iters, or earlier when the relative iterate change
    drops below cfg.rel_change_tol (if positive).  A non-finite iterate
    truncates the trace at the last finite one and sets the diverged flag;
    post-divergence behavior is a measured phenomenon for unstable learned
    priors, so this is not an error.
    """
    y = np.asarray(y, dtype=float)
    x = np.array(x0, dtype=float)
    if x.shape != (op.n_ambient,):
        raise ValueError(f"x0 must have length {op.n_ambient}, got shape {x.shape}")

    truth_arr = None if truth is None else np.asarray(truth, dtype=float)
    residual_norms = []
    rel_changes = [float("nan")]
    errors = None if truth_arr is None else [float(np.linalg.norm(x - truth_arr))]
    iterates = [x.copy()] if cfg.record_iterates else None
    diverged = False

    iterations_run = 0
    for _ in range(cfg.max_iters):
        # Diverging runs overflow on their way to the non-finite iterate that
        # stops them; those float warnings are expected, not actionable.
        with np.errstate(over="ignore", invalid="ignore"):
            px = np.asarray(projection(x), dtype=float)
            residual = op.apply(px) - y
            residual_norms.append(float(np.linalg.norm(residual)))
            x_next = px - cfg.mu * back_projection.apply(residual)
        if not np.all(np.isfinite(x_next)):
            diverged = True
            break
        # The floor makes the first step from a zero iterate come out as a
        # huge relative change (possibly inf), and near-overflow iterates can
        # give inf/inf = nan; neither can early-stop, which is the intent.
        with np.errstate(over="ignore", invalid="ignore"):
            rel = float(np.linalg.norm(x_next - x) / max(np.linalg.norm(x), REL_CHANGE_FLOOR))
        rel_changes.append(rel)
        if errors is not None:
            errors.append(float(np.linalg.norm(x_next - truth_arr)))
        if iterates is not None:
            iterates.append(x_next.copy())
        x = x_next
        iterations_run += 1
        if cfg.rel_change_tol > 0 and rel < cfg.rel_change_tol:
            break

    if len(residual_norms) == iterations_run:
        # Loop ended without a divergence break: the final iterate's residual
        # has not been evaluated yet.
        px = np.asarray(projection(x), dtype=float)
        residual_norms.append(float(np.linalg.norm(op.apply(px) - y)))

    return RecoveryTrace(
        residual_norms=residual_norms,
        rel_changes=rel_changes,
        iterations_run=iterations_run,
        final=x,
        errors_to_truth=errors,
        iterates=iterates,
        diverged=diverged,
    )


def i_min_oracle(trace):
    """Index of the smallest recorded error to the truth; ties take the lowest.

    This is an oracle (it needs the ground truth), used to anchor the
    post-optimum stability metrics.
    """
    if trace.errors_to_truth is None:
        raise ValueError("trace has no errors_to_truth; run with a ground truth")
    return int(np.argmin(trace.errors_to_truth))
