"""Recovery and post-optimum stability metrics.

SM1 measures the worst relative error inflation after the oracle-best
iterate; SM2 the cumulative relative iterate motion after it.  Both need
the ground-truth oracle, which synthetic experiments always retain.
Centile curves summarize repeated trials for phase-transition tables.
"""

from dataclasses import dataclass
from math import ceil

import numpy as np

from .descent import i_min_oracle

__all__ = [
    "normalized_error",
    "centile_curve",
    "sm1",
    "sm2",
    "StabilityReport",
    "stability_report",
]


def normalized_error(x, truth):
    """||x - truth|| / ||truth||, with 0/0 = 0 for the zero-truth case."""
    x = np.asarray(x, dtype=float)
    truth = np.asarray(truth, dtype=float)
    err = float(np.linalg.norm(x - truth))
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        return 0.0 if err == 0.0 else float("inf")
    return err / denom


def centile_curve(errors, centile):
    """Nearest-rank centile of per-trial errors, thresholded at 1.

    Returns the ceil(centile * trials)-th smallest value capped at 1;
    no interpolation, so the result is always one of the inputs (or 1).
    """
    errors = list(errors)
    if not errors:
        raise ValueError("errors must be nonempty")
    if not 0.0 < centile <= 1.0:
        raise ValueError(f"centile must lie in (0, 1], got {centile}")
    rank = ceil(centile * len(errors))
    value = sorted(errors)[rank - 1]
    return float(min(value, 1.0))


def _errors_from_trace(trace, truth):
    if trace.errors_to_truth is not None:
        return trace.errors_to_truth
    if truth is not None and trace.iterates is not None:
        truth = np.asarray(truth, dtype=float)
        return [float(np.linalg.norm(x - truth)) for x in trace.iterates]
    raise ValueError("trace has no errors_to_truth and no iterates to recompute them from")


def sm1(trace, truth=None, n=10):
    """Worst post-optimum relative error inflation over an n-iteration window.

    max over i in [i_min+1, i_min+n] of errors[i] / errors[i_min] - 1,
    where i_min is the oracle-best index.  Nonnegative by construction of
    i_min.  Errors if the trace is too short or the best error is exactly
    zero (the ratio is then undefined).
    """
    if n < 1:
        raise ValueError(f"offset n must be >= 1, got {n}")
    errors = _errors_from_trace(trace, truth)
    i_min = int(np.argmin(errors))
    if i_min + n >= len(errors):
        raise ValueError(
            f"trace too short for sm1: need errors through {i_min + n}, have {len(errors) - 1}"
        )
    best = errors[i_min]
    if best == 0.0:
        raise ValueError("exact recovery at the best iterate; sm1 is undefined")
    window = errors[i_min + 1 : i_min + n + 1]
    return float(max(window) / best - 1.0)


def sm2(trace, n=10):
    """Cumulative relative iterate motion over the n iterations past the optimum.

    sum over i in [i_min+1, i_min+n] of ||x_{i+1} - x_i|| / ||x_i||.
    Needs recorded iterates through i_min + n + 1.
    """
    if n < 1:
        raise ValueError(f"offset n must be >= 1, got {n}")
    if trace.iterates is None:
        raise ValueError("sm2 needs recorded iterates; run with record_iterates=True")
    i_min = i_min_oracle(trace)
    if i_min + n + 1 >= len(trace.iterates):
        raise ValueError(
            f"trace too short for sm2: need iterates through {i_min + n + 1}, "
            f"have {len(trace.iterates) - 1}"
        )
    total = 0.0
    for i in range(i_min + 1, i_min + n + 1):
        denom = float(np.linalg.norm(trace.iterates[i]))
        if denom == 0.0:
            raise ValueError(f"zero-norm iterate at index {i}; sm2 is undefined")
        total += float(np.linalg.norm(trace.iterates[i + 1] - trace.iterates[i])) / denom
    return total


@dataclass
class StabilityReport:
    """SM1/SM2 at a set of post-optimum offsets (default 10/50/100)."""

    i_min: int
    sm1_at: dict
    sm2_at: dict
    offsets: tuple = (10, 50, 100)

    CSV_HEADER = "i_min,sm1_10,sm1_50,sm1_100,sm2_10,sm2_50,sm2_100"

    def to_csv_row(self):
        parts = [str(int(self.i_min))]
        parts += [repr(float(self.sm1_at[n])) for n in self.offsets]
        parts += [repr(float(self.sm2_at[n])) for n in self.offsets]
        return ",".join(parts)


def stability_report(trace, truth=None, offsets=(10, 50, 100)):
    """Bundle SM1/SM2 at each offset into a StabilityReport."""
    offsets = tuple(int(n) for n in offsets)
    if any(n < 1 for n in offsets):
        raise ValueError(f"offsets must be positive, got {offsets}")
    errors = _errors_from_trace(trace, truth)
    report = StabilityReport(
        i_min=int(np.argmin(errors)),
        sm1_at={n: sm1(trace, truth, n) for n in offsets},
        sm2_at={n: sm2(trace, n) for n in offsets},
        offsets=offsets,
    )
    return report
