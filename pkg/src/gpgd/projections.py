"""Projections onto low-dimensional model sets.

Hard thresholding onto k-sparse vectors, a rescaled variant that inflates
its restricted Lipschitz constant by a tunable amount, block-wise product
projections, and the projection-induced distance to the model set.
"""

import numpy as np

__all__ = [
    "HARD_THRESHOLD_BETA",
    "hard_threshold",
    "p_alpha_project",
    "product_project",
    "model_distance",
    "HardThreshold",
    "PAlpha",
    "ProductProjection",
    "IdentityProjection",
]

# Analytic restricted-Lipschitz bound for hard thresholding onto k-sparse
# vectors (near optimal among projections onto that set), ~1.618.
HARD_THRESHOLD_BETA = float(np.sqrt((3.0 + np.sqrt(5.0)) / 2.0))


def hard_threshold(z, k):
    """Keep the k largest-magnitude entries of z, zero the rest.

    Ties keep the lower index; k = 0 gives the zero vector.  The arg-min
    over k-sparse vectors is set-valued at ties, so a deterministic
    selection rule is part of the contract.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise ValueError(f"expected a vector, got shape {z.shape}")
    k = int(k)
    if k < 0 or k > z.size:
        raise ValueError(f"sparsity k must lie in [0, {z.size}], got {k}")
    out = np.zeros_like(z)
    if k == 0:
        return out
    # Descending stable sort: among equal magnitudes, lower indices first.
    kept = np.argsort(-np.abs(z), kind="stable")[:k]
    out[kept] = z[kept]
    return out


def p_alpha_project(z, k, alpha):
    """Hard threshold rescaled by 1 + alpha * ||z - P(z)|| / ||P(z)||.

    The rescaling inflates the restricted Lipschitz constant by at most
    alpha while keeping the output k-sparse; alpha = 0 reduces exactly to
    hard thresholding.  A zero hard threshold maps to the zero vector.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    base = hard_threshold(z, k)
    base_norm = np.linalg.norm(base)
    if base_norm == 0.0:
        return base
    z = np.asarray(z, dtype=float)
    factor = 1.0 + alpha * np.linalg.norm(z - base) / base_norm
    return factor * base


def product_project(z, components):
    """Apply component projections to consecutive blocks and concatenate.

    ``components`` is a sequence of (projection, block_dim) pairs whose
    dims must sum to len(z).
    """
    z = np.asarray(z, dtype=float)
    dims = [int(d) for _, d in components]
    if sum(dims) != z.size:
        raise ValueError(f"block dims {dims} do not sum to len(z) = {z.size}")
    blocks = []
    offset = 0
    for (proj, dim) in components:
        blocks.append(np.asarray(proj(z[offset : offset + int(dim)]), dtype=float))
        offset += int(dim)
    return np.concatenate(blocks)


def model_distance(x, projection):
    """Projection-induced distance to the model set: ||P(x) - x||_2."""
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(np.asarray(projection(x), dtype=float) - x))


class HardThreshold:
    """Orthogonal projection onto k-sparse vectors."""

    def __init__(self, k):
        self.k = int(k)
        self.beta_bound = HARD_THRESHOLD_BETA

    def __call__(self, z):
        return hard_threshold(z, self.k)

    def __repr__(self):
        return f"HardThreshold(k={self.k})"


class PAlpha:
    """Hard threshold with its restricted Lipschitz constant inflated by alpha."""

    def __init__(self, k, alpha):
        if alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {alpha}")
        self.k = int(k)
        self.alpha = float(alpha)
        self.beta_bound = HARD_THRESHOLD_BETA + self.alpha

    def __call__(self, z):
        return p_alpha_project(z, self.k, self.alpha)

    def __repr__(self):
        return f"PAlpha(k={self.k}, alpha={self.alpha})"


class ProductProjection:
    """Concatenation of per-block projections over a product model set.

    The restricted Lipschitz constant of the concatenation is the max of
    the per-block constants, so ``beta_bound`` is the max of the component
    bounds when they are all known.
    """

    def __init__(self, components):
        self.components = [(proj, int(dim)) for proj, dim in components]
        bounds = [getattr(proj, "beta_bound", None) for proj, _ in self.components]
        self.beta_bound = max(bounds) if bounds and all(b is not None for b in bounds) else None

    def __call__(self, z):
        return product_project(z, self.components)

    def __repr__(self):
        return f"ProductProjection({self.components!r})"


class IdentityProjection:
    """Projection onto the whole space (model set = everything)."""

    beta_bound = 1.0

    def __call__(self, z):
        return np.asarray(z, dtype=float)

    def __repr__(self):
        return "IdentityProjection()"
