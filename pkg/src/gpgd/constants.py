"""Restricted isometry and restricted Lipschitz constants, and the linear
convergence bound they imply.

Exact restricted isometry constants are computed by support enumeration on
small instances; Monte-Carlo estimates (always lower bounds) cover the
rest.  The stability/robustness constants combine into a per-iteration
error bound sequence that observed runs can be checked against.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ENUMERATION_GUARD",
    "exact_ric_sparse",
    "mc_ric",
    "mc_beta",
    "sparse_model_sampler",
    "operator_norm",
    "TheoremBound",
    "theorem_bound_eval",
]

# Refuse to enumerate more supports than this; callers should fall back to
# the Monte-Carlo estimate beyond it.
ENUMERATION_GUARD = 10**6


def exact_ric_sparse(B, k):
    """Exact restricted isometry constant of B over k-sparse differences.

    Differences of k-sparse vectors are 2k-sparse, and on a fixed support T
    the worst ratio ||(B - I)v|| / ||v|| is the largest singular value of
    the column submatrix (B - I)[:, T].  The constant is the max of that
    over all supports of size min(2k, N).  Smaller supports are dominated
    by larger ones, so only the top size needs enumerating.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"B must be square, got shape {B.shape}")
    n = B.shape[0]
    k = int(k)
    if k < 0:
        raise ValueError(f"sparsity k must be >= 0, got {k}")
    t = min(2 * k, n)
    if t == 0:
        return 0.0
    if math.comb(n, t) > ENUMERATION_GUARD:
        raise ValueError(
            f"C({n}, {t}) = {math.comb(n, t)} supports exceed the enumeration "
            f"guard ({ENUMERATION_GUARD}); use mc_ric instead"
        )
    D = B - np.eye(n)
    best = 0.0
    for support in itertools.combinations(range(n), t):
        s = np.linalg.svd(D[:, support], compute_uv=False)[0]
        if s > best:
            best = float(s)
    return best


def _random_sparse_unit(n, t, rng):
    """Unit-norm vector with t nonzeros on a uniform random support."""
    v = np.zeros(n)
    support = rng.choice(n, size=t, replace=False)
    vals = rng.standard_normal(t)
    while np.linalg.norm(vals) == 0.0:
        vals = rng.standard_normal(t)
    v[support] = vals / np.linalg.norm(vals)
    return v


def mc_ric(B, k, trials, seed):
    """Monte-Carlo lower bound on the restricted isometry constant.

    Samples 2k-sparse unit vectors and takes the max of ||(B - I)v||.
    Always a lower bound on the exact constant; nondecreasing under nested
    sampling (the first t draws of a longer run are the same).
    """
    B = np.asarray(B, dtype=float)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    n = B.shape[0]
    t = min(2 * int(k), n)
    if t == 0:
        return 0.0
    D = B - np.eye(n)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(int(trials)):
        v = _random_sparse_unit(n, t, rng)
        val = float(np.linalg.norm(D @ v))
        if val > best:
            best = val
    return best


def sparse_model_sampler(n, k):
    """Sampler for random k-sparse points (standard normal nonzeros)."""

    def draw(rng):
        x = np.zeros(n)
        if k > 0:
            support = rng.choice(n, size=k, replace=False)
            x[support] = rng.standard_normal(k)
        return x

    return draw


def mc_beta(projection, k, n, trials, seed, model_sampler=None):
    """Monte-Carlo lower bound on the restricted Lipschitz constant.

    Samples pairs (z ambient, x in the model set) and takes the max of
    ||P(z) - x|| / ||z - x||.  Half the draws place z near the model set
    (a model point plus a small perturbation) to probe the regime where
    projections expand; the other half draw z fully ambient.  Degenerate
    z == x draws are discarded and redrawn.  A lower bound on the true
    constant, deterministic given the seed, nondecreasing under nested
    sampling.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if model_sampler is None:
        model_sampler = sparse_model_sampler(n, int(k))
    rng = np.random.default_rng(seed)
    best = 0.0
    for trial in range(int(trials)):
        x = model_sampler(rng)
        while True:
            if trial % 2 == 0:
                z = rng.standard_normal(n)
            else:
                z = model_sampler(rng) + 0.1 * rng.standard_normal(n)
            if np.linalg.norm(z - x) > 0.0:
                break
        ratio = float(np.linalg.norm(np.asarray(projection(z), dtype=float) - x) / np.linalg.norm(z - x))
        if ratio > best:
            best = ratio
    return best


def operator_norm(M, iters=200, seed=0, tol=1e-10):
    """Largest singular value of M by power iteration on M.T M.

    Stops after `iters` rounds or when the Rayleigh-quotient estimate
    changes by less than `tol` relative.  The estimate approaches the true
    norm from below; cross-check against an SVD on small matrices when an
    upper bound matters.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"M must be 2-d, got shape {M.shape}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(int(iters)):
        w = M.T @ (M @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        new_estimate = float(np.linalg.norm(M @ v))
        if abs(new_estimate - estimate) <= tol * max(new_estimate, 1.0):
            return new_estimate
        estimate = new_estimate
    return estimate


@dataclass
class TheoremBound:
    """Constants feeding the linear-convergence error bound.

    delta is the restricted isometry constant of mu*L*A on the model
    secants, beta the restricted Lipschitz constant of the projection.
    noise_term holds ||mu L e||_2 (the step size is already inside, which
    matches the recursion constant; the reported c_stab = mu/(1-delta*beta)
    refers to the unscaled ||L e||_2 and is equivalent).  model_error is
    the projection-induced distance of the truth to the model set, and
    proj_error_eta bounds the per-call deviation of the actual projection
    from a restricted-Lipschitz one.
    """

    delta: float
    beta: float
    mu: float
    noise_term: float = 0.0
    model_error: float = 0.0
    proj_error_eta: float = 0.0
    op_norm_muLA: float = 0.0
    op_norm_I_minus_muLA: float = 0.0

    def __post_init__(self):
        for name in ("delta", "beta", "mu", "noise_term", "model_error",
                     "proj_error_eta", "op_norm_muLA", "op_norm_I_minus_muLA"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    @property
    def contraction(self):
        return self.delta * self.beta

    @property
    def c_stab(self):
        return self.mu / (1.0 - self.contraction)

    @property
    def c_rob(self):
        return self.op_norm_muLA / (1.0 - self.contraction)

    @property
    def c_rob_prime(self):
        return 1.0 + self.c_rob

    @property
    def c_proj(self):
        return self.op_norm_I_minus_muLA / (1.0 - self.contraction)


def theorem_bound_eval(tb, n_iters, initial_error, variant="projection"):
    """Bound sequence b_0 .. b_n for the recovery error.

    b_n = (delta*beta)^n * initial_error
          + noise_term / (1 - delta*beta)
          + C_rob * model_error + C_proj * eta

    with noise_term = ||mu L e||_2 (equivalent to c_stab * ||L e||_2 since
    mu is scalar).  variant="projection" bounds the error to the projected
    truth with C_rob; variant="truth" bounds the error to the truth itself
    with C_rob' = 1 + C_rob.  initial_error is the distance of x_0 to the
    projected truth in both variants.
    """
    if variant not in ("projection", "truth"):
        raise ValueError(f"variant must be 'projection' or 'truth', got {variant!r}")
    if initial_error < 0:
        raise ValueError(f"initial_error must be >= 0, got {initial_error}")
    if n_iters < 0:
        raise ValueError(f"n_iters must be >= 0, got {n_iters}")
    rate = tb.contraction
    if rate >= 1.0:
        raise ValueError(f"bound requires delta*beta < 1, got {rate}")
    c_rob = tb.c_rob_prime if variant == "truth" else tb.c_rob
    constant = (
        tb.noise_term / (1.0 - rate)
        + c_rob * tb.model_error
        + tb.c_proj * tb.proj_error_eta
    )
    return rate ** np.arange(n_iters + 1) * initial_error + constant
