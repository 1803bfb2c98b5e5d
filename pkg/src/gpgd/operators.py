"""Measurement operators and back-projections.

Dense linear maps from signal space R^n to measurement space R^m, plus the
back-projections (adjoint, masked adjoint, residual-thresholded adjoint) used
to send measurement residuals back to signal space, and the augmented
operator (A, I) acting on a stacked signal/noise vector.
"""

import numpy as np

__all__ = [
    "MeasurementOperator",
    "BackProjection",
    "JointOperator",
    "gaussian_operator",
    "joint_operator",
]


class MeasurementOperator:
    """Dense linear measurement map y = A x.

    The matrix is stored dense and row-major; problem sizes here are desk
    scale (n up to a few thousand), so implicit/structured operators are
    not worth the indirection.
    """

    def __init__(self, matrix, seed=None, kind="dense"):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ValueError(f"operator matrix must be 2-d, got shape {matrix.shape}")
        m, n = matrix.shape
        if m < 1 or n < 1:
            raise ValueError(f"operator dimensions must be >= 1, got {m}x{n}")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("operator entries must all be finite")
        self.matrix = matrix
        self.seed = seed
        self.kind = kind

    @property
    def m(self):
        return self.matrix.shape[0]

    @property
    def n_ambient(self):
        return self.matrix.shape[1]

    def apply(self, x):
        """Forward map: A @ x, with a strict dimension check."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_ambient,):
            raise ValueError(f"expected vector of length {self.n_ambient}, got shape {x.shape}")
        return self.matrix @ x

    def adjoint(self, r):
        """Adjoint map: A.T @ r."""
        r = np.asarray(r, dtype=float)
        if r.shape != (self.m,):
            raise ValueError(f"expected vector of length {self.m}, got shape {r.shape}")
        return self.matrix.T @ r

    def __repr__(self):
        return f"{type(self).__name__}(m={self.m}, n={self.n_ambient}, kind={self.kind!r})"

    def save_csv(self, path):
        """Dump to CSV: a 'm,n,seed,kind' header, a values line, then the rows.

        Entries are written with repr (shortest round-trip), so a reload is
        bit-identical.
        """
        with open(path, "w") as fh:
            fh.write("m,n,seed,kind\n")
            seed = "" if self.seed is None else str(self.seed)
            fh.write(f"{self.m},{self.n_ambient},{seed},{self.kind}\n")
            for row in self.matrix:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "m,n,seed,kind":
                raise ValueError(f"unrecognized operator dump header: {header!r}")
            m_s, n_s, seed_s, kind = fh.readline().strip().split(",")
            m, n = int(m_s), int(n_s)
            seed = int(seed_s) if seed_s else None
            rows = [
                np.array([float(tok) for tok in fh.readline().split(",")])
                for _ in range(m)
            ]
        matrix = np.vstack(rows)
        if matrix.shape != (m, n):
            raise ValueError(f"dump announced {m}x{n} but contained {matrix.shape}")
        return cls(matrix, seed=seed, kind=kind)


def gaussian_operator(m, n, seed):
    """Random Gaussian measurement ensemble with i.i.d. N(0, 1/m) entries.

    The 1/m variance makes A.T A close to the identity on low-dimensional
    sets (columns have unit expected norm), so a unit step size is a sane
    default for projected descent.  Deterministic given the seed.
    """
    if m < 1 or n < 1:
        raise ValueError(f"operator dimensions must be >= 1, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((m, n)) / np.sqrt(m)
    return MeasurementOperator(matrix, seed=seed, kind="gaussian")


class BackProjection:
    """Map a measurement residual back to signal space.

    Three kinds:

    - ``adjoint``: plain A.T r.
    - ``masked``: A.T (mask * r) with a fixed binary mask chosen at
      construction (known corrupted-measurement support).
    - ``residual_threshold``: A.T (S r) where S zeroes the (m - keep)
      largest-magnitude entries of the residual, recomputed on every call.
      Ties keep the lower index.
    """

    KINDS = ("adjoint", "masked", "residual_threshold")

    def __init__(self, op, kind="adjoint", mask=None, keep=None):
        if kind not in self.KINDS:
            raise ValueError(f"kind must be one of {self.KINDS}, got {kind!r}")
        self.op = op
        self.kind = kind
        self.mask = None
        self.keep = None
        if kind == "masked":
            mask = np.asarray(mask, dtype=float)
            if mask.shape != (op.m,):
                raise ValueError(f"mask must have length {op.m}, got shape {mask.shape}")
            if not np.all((mask == 0.0) | (mask == 1.0)):
                raise ValueError("mask entries must be 0 or 1")
            self.mask = mask
        elif kind == "residual_threshold":
            keep = int(keep)
            if not 0 <= keep <= op.m:
                raise ValueError(f"keep must lie in [0, {op.m}], got {keep}")
            self.keep = keep

    @classmethod
    def adjoint(cls, op):
        return cls(op, kind="adjoint")

    @classmethod
    def masked(cls, op, mask):
        return cls(op, kind="masked", mask=mask)

    @classmethod
    def residual_threshold(cls, op, keep):
        return cls(op, kind="residual_threshold", keep=keep)

    def apply(self, residual):
        residual = np.asarray(residual, dtype=float)
        if residual.shape != (self.op.m,):
            raise ValueError(f"expected residual of length {self.op.m}, got shape {residual.shape}")
        if self.kind == "adjoint":
            return self.op.adjoint(residual)
        if self.kind == "masked":
            return self.op.adjoint(self.mask * residual)
        # residual_threshold: keep the `keep` smallest-magnitude entries.
        # Ascending stable sort puts lower indices first among ties, so the
        # kept set prefers lower indices.
        order = np.argsort(np.abs(residual), kind="stable")
        kept = order[: self.keep]
        selected = np.zeros_like(residual)
        selected[kept] = residual[kept]
        return self.op.adjoint(selected)

    def __repr__(self):
        extra = ""
        if self.kind == "masked":
            extra = f", kept={int(self.mask.sum())}/{self.op.m}"
        elif self.kind == "residual_threshold":
            extra = f", keep={self.keep}"
        return f"BackProjection(kind={self.kind!r}{extra})"


class JointOperator(MeasurementOperator):
    """Augmented operator (A, I) acting on a stacked (signal, noise) vector.

    Applying it to the stack (x, e) gives A x + e; the adjoint of r is the
    stack (A.T r, r).  Used to recast recovery under sparse corruptions as
    plain recovery over a product model.
    """

    def __init__(self, base):
        matrix = np.hstack([base.matrix, np.eye(base.m)])
        super().__init__(matrix, seed=base.seed, kind="joint")
        self.base = base

    def stack(self, x, e):
        return np.concatenate([np.asarray(x, dtype=float), np.asarray(e, dtype=float)])

    def split(self, stacked):
        stacked = np.asarray(stacked, dtype=float)
        n = self.base.n_ambient
        return stacked[:n], stacked[n:]


def joint_operator(base):
    """Build the augmented (A, I) operator over stacked (signal, noise)."""
    return JointOperator(base)
