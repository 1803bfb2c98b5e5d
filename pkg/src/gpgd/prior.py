"""A small differentiable projective prior: one-hidden-layer autoencoder.

P(x) = W_dec sigma(W_enc x), trainable with either a reconstruction loss
(sum of ||P(x) - x||^2) or a denoising loss (mean of ||P(x + eps) - x||^2),
optionally regularized toward idempotence with the normalized penalty

    ||P(P(x)) - P(x)|| / ||P(x)||

summed over the batch.  The normalization matters: the raw idempotence
defect of a scaled-down linear map alpha*P vanishes as alpha -> 0, so the
unnormalized criterion can be gamed by shrinking the output.  Gradients
are hand-derived backprop and verified against finite differences in the
test suite.
"""

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ToyPrior",
    "TrainConfig",
    "TrainResult",
    "prior_apply",
    "nipr_penalty",
    "training_loss",
    "loss_gradient",
    "train",
    "make_manifold_dataset",
    "LearnedProjection",
    "random_prior",
    "save_prior",
    "load_prior",
]

NONLINEARITIES = ("linear", "tanh")

# Batch elements whose projected norm falls below this are excluded from the
# idempotence penalty and its gradient alike so the two stay consistent.
PROJECTED_NORM_FLOOR = 1e-12


@dataclass
class ToyPrior:
    """Autoencoder prior with encoder (d_latent x n) and decoder (n x d_latent).

    seed records the initialization draw, for the serialized header only.
    """

    encoder_weights: np.ndarray
    decoder_weights: np.ndarray
    nonlinearity: str = "linear"
    seed: int = None

    def __post_init__(self):
        self.encoder_weights = np.asarray(self.encoder_weights, dtype=float)
        self.decoder_weights = np.asarray(self.decoder_weights, dtype=float)
        d_latent, n = self.encoder_weights.shape
        if self.decoder_weights.shape != (n, d_latent):
            raise ValueError(
                f"decoder shape {self.decoder_weights.shape} does not mirror "
                f"encoder shape {self.encoder_weights.shape}"
            )
        if not d_latent < n:
            raise ValueError(f"need d_latent < n, got d_latent={d_latent}, n={n}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"nonlinearity must be one of {NONLINEARITIES}")
        if not (np.all(np.isfinite(self.encoder_weights)) and np.all(np.isfinite(self.decoder_weights))):
            raise ValueError("prior weights must be finite")

    @property
    def n_ambient(self):
        return self.encoder_weights.shape[1]

    @property
    def d_latent(self):
        return self.encoder_weights.shape[0]

    def copy(self):
        return ToyPrior(self.encoder_weights.copy(), self.decoder_weights.copy(),
                        self.nonlinearity, self.seed)


def random_prior(n, d_latent, seed, nonlinearity="tanh", scale=None):
    """Random prior with ~orthonormal-ish raw weights (scale defaults to 1/sqrt(n))."""
    rng = np.random.default_rng(seed)
    if scale is None:
        scale = 1.0 / np.sqrt(n)
    enc = scale * rng.standard_normal((d_latent, n))
    dec = scale * rng.standard_normal((n, d_latent))
    return ToyPrior(enc, dec, nonlinearity, seed=seed)


def _activate(h, kind):
    return np.tanh(h) if kind == "tanh" else h


def _activate_deriv(h, kind):
    if kind == "tanh":
        t = np.tanh(h)
        return 1.0 - t * t
    return np.ones_like(h)


def _forward(prior, x):
    """Single forward pass; returns (pre-activation, activation, output)."""
    h = prior.encoder_weights @ x
    a = _activate(h, prior.nonlinearity)
    return h, a, prior.decoder_weights @ a


def prior_apply(prior, x):
    """P(x) = W_dec sigma(W_enc x)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (prior.n_ambient,):
        raise ValueError(f"expected vector of length {prior.n_ambient}, got shape {x.shape}")
    return _forward(prior, x)[2]


def _forward_batch(prior, X):
    """Batched forward pass over rows of X."""
    H = X @ prior.encoder_weights.T
    A = _activate(H, prior.nonlinearity)
    return H, A, A @ prior.decoder_weights.T


def _nipr_terms(prior, batch):
    """Per-element penalty values and usability mask (norm-floor guard)."""
    X = _as_batch(batch)
    Q = _forward_batch(prior, X)[2]
    qn = np.linalg.norm(Q, axis=1)
    used = qn > PROJECTED_NORM_FLOOR
    PQ = _forward_batch(prior, Q)[2]
    gn = np.linalg.norm(PQ - Q, axis=1)
    values = np.where(used, gn / np.where(used, qn, 1.0), 0.0)
    return values, used


def nipr_penalty(prior, batch):
    """Normalized idempotence penalty, summed over the batch.

    Elements with ||P(x)|| below the norm floor are skipped (with a
    warning); if every element is skipped there is nothing to normalize
    and a ValueError is raised.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("batch must be nonempty")
    values, used = _nipr_terms(prior, batch)
    n_skipped = int((~used).sum())
    if n_skipped == len(batch):
        raise ValueError("all batch elements had ||P(x)|| below the norm floor")
    if n_skipped:
        warnings.warn(f"nipr_penalty skipped {n_skipped} batch element(s) with ~zero projection")
    return float(values.sum())


@dataclass
class TrainConfig:
    """Training controls; nipr_weight is the idempotence penalty weight."""

    nipr_weight: float = 0.005
    noise_sigma: float = 0.0
    learning_rate: float = 0.05
    epochs: int = 100
    batch_size: int = 32
    loss_kind: str = "ae"
    seed: int = 0

    def __post_init__(self):
        if self.nipr_weight < 0:
            raise ValueError(f"nipr_weight must be >= 0, got {self.nipr_weight}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.loss_kind not in ("ae", "pnp"):
            raise ValueError(f"loss_kind must be 'ae' or 'pnp', got {self.loss_kind!r}")


def _as_batch(batch):
    batch = np.asarray(batch, dtype=float)
    if batch.ndim == 1:
        batch = batch[None, :]
    return batch


def training_loss(prior, batch, cfg, noise=None):
    """Data-fit loss plus the weighted idempotence penalty.

    'ae' sums ||P(x) - x||^2 over the batch; 'pnp' averages
    ||P(x + eps) - x||^2 with one noise draw per element (pass the same
    `noise` array to the gradient for consistency).  The penalty term is a
    batch mean so its weight does not depend on batch size, and it always
    evaluates P on the clean inputs.
    """
    batch = _as_batch(batch)
    if cfg.loss_kind == "pnp":
        if noise is None:
            noise = np.zeros_like(batch)
        out = _forward_batch(prior, batch + noise)[2]
        data = float(np.sum((out - batch) ** 2)) / len(batch)
    else:
        out = _forward_batch(prior, batch)[2]
        data = float(np.sum((out - batch) ** 2))
    if cfg.nipr_weight > 0:
        values, used = _nipr_terms(prior, batch)
        n_used = int(used.sum())
        if n_used == 0:
            raise ValueError("all batch elements had ||P(x)|| below the norm floor")
        data += cfg.nipr_weight * float(values.sum()) / n_used
    return data


def _backprop_squared(prior, X_in, target, weight, g_enc, g_dec):
    """Accumulate gradients of weight * sum_rows ||P(x_in) - target||^2."""
    H, A, out = _forward_batch(prior, X_in)
    d_out = 2.0 * weight * (out - target)
    g_dec += d_out.T @ A
    d_H = (d_out @ prior.decoder_weights) * _activate_deriv(H, prior.nonlinearity)
    g_enc += d_H.T @ X_in


def _backprop_nipr(prior, X, weight, g_enc, g_dec):
    """Accumulate gradients of weight * sum_rows ||P(P(x)) - P(x)|| / ||P(x)||.

    Rows below the norm floor are skipped, and exactly-idempotent rows
    (zero defect) contribute nothing: the term is zero and flat there.
    """
    H1, A1, Q = _forward_batch(prior, X)
    qn = np.linalg.norm(Q, axis=1)
    H2, A2, PQ = _forward_batch(prior, Q)
    G = PQ - Q
    gn = np.linalg.norm(G, axis=1)
    active = (qn > PROJECTED_NORM_FLOOR) & (gn > 0.0)
    if not np.any(active):
        return
    safe_qn = np.where(active, qn, 1.0)
    safe_gn = np.where(active, gn, 1.0)
    scale = np.where(active, weight / (safe_gn * safe_qn), 0.0)
    U = scale[:, None] * G
    # Second pass: parameters see U directly.
    g_dec += U.T @ A2
    T2 = (U @ prior.decoder_weights) * _activate_deriv(H2, prior.nonlinearity)
    g_enc += T2.T @ Q
    # Gradient flowing into Q: through the second pass, the -Q inside the
    # defect, and the 1/||Q|| normalization.
    norm_pull = np.where(active, weight * safe_gn / safe_qn**3, 0.0)
    DQ = T2 @ prior.encoder_weights - U - norm_pull[:, None] * Q
    # First pass.
    g_dec += DQ.T @ A1
    T1 = (DQ @ prior.decoder_weights) * _activate_deriv(H1, prior.nonlinearity)
    g_enc += T1.T @ X


def loss_gradient(prior, batch, cfg, noise=None):
    """Gradient of training_loss w.r.t. (encoder, decoder) weights.

    Must be called with the same `noise` array as the loss evaluation it
    differentiates.  Elements skipped by the penalty's norm floor are
    skipped here too.
    """
    batch = _as_batch(batch)
    g_enc = np.zeros_like(prior.encoder_weights)
    g_dec = np.zeros_like(prior.decoder_weights)
    if cfg.loss_kind == "pnp":
        if noise is None:
            noise = np.zeros_like(batch)
        _backprop_squared(prior, batch + noise, batch, 1.0 / len(batch), g_enc, g_dec)
    else:
        _backprop_squared(prior, batch, batch, 1.0, g_enc, g_dec)
    if cfg.nipr_weight > 0:
        _, used = _nipr_terms(prior, batch)
        n_used = int(used.sum())
        if n_used == 0:
            raise ValueError("all batch elements had ||P(x)|| below the norm floor")
        _backprop_nipr(prior, batch, cfg.nipr_weight / n_used, g_enc, g_dec)
    return g_enc, g_dec


@dataclass
class TrainResult:
    """Final prior plus the per-epoch loss history and a divergence flag."""

    prior: ToyPrior
    losses: list
    diverged: bool = False


def train(prior0, dataset, cfg):
    """Fixed-step minibatch gradient descent, deterministic given cfg.seed.

    Batch order is reshuffled and denoising draws are resampled every epoch
    from one seeded stream.  A non-finite loss or parameter aborts the run,
    rolls back to the last finite epoch and flags divergence.  The recorded
    per-epoch loss uses a fixed evaluation noise draw so epochs are
    comparable.
    """
    dataset = _as_batch(dataset)
    rng = np.random.default_rng(cfg.seed)
    prior = prior0.copy()
    eval_noise = None
    if cfg.loss_kind == "pnp":
        eval_noise = cfg.noise_sigma * rng.standard_normal(dataset.shape)
    losses = [training_loss(prior, dataset, cfg, noise=eval_noise)]
    for _ in range(cfg.epochs):
        epoch_start = prior.copy()
        order = rng.permutation(len(dataset))
        finite = True
        # Diverging parameters overflow before the non-finite check catches
        # them; those float warnings are expected.
        with np.errstate(over="ignore", invalid="ignore"):
            for lo in range(0, len(dataset), cfg.batch_size):
                idx = order[lo : lo + cfg.batch_size]
                batch = dataset[idx]
                noise = None
                if cfg.loss_kind == "pnp":
                    noise = cfg.noise_sigma * rng.standard_normal(batch.shape)
                g_enc, g_dec = loss_gradient(prior, batch, cfg, noise=noise)
                prior.encoder_weights = prior.encoder_weights - cfg.learning_rate * g_enc
                prior.decoder_weights = prior.decoder_weights - cfg.learning_rate * g_dec
                if not (np.all(np.isfinite(prior.encoder_weights)) and np.all(np.isfinite(prior.decoder_weights))):
                    finite = False
                    break
            loss = training_loss(prior, dataset, cfg, noise=eval_noise) if finite else float("nan")
        if not np.isfinite(loss):
            return TrainResult(prior=epoch_start, losses=losses, diverged=True)
        losses.append(loss)
    return TrainResult(prior=prior, losses=losses, diverged=False)


def make_manifold_dataset(n_points, n_ambient, latent_dim, seed, curvature="tanh",
                          ambient_noise=0.0, latent_scale=1.0):
    """Points on a low-dimensional manifold in R^n plus optional ambient noise.

    The manifold is the image of latent draws t ~ N(0, latent_scale^2 I)
    under a random orthonormal frame, either linearly (a subspace) or after
    a coordinate-wise tanh (a mildly curved sheet).
    """
    if curvature not in ("linear", "tanh"):
        raise ValueError(f"curvature must be 'linear' or 'tanh', got {curvature!r}")
    rng = np.random.default_rng(seed)
    frame = np.linalg.qr(rng.standard_normal((n_ambient, latent_dim)))[0]
    t = latent_scale * rng.standard_normal((n_points, latent_dim))
    coords = np.tanh(t) if curvature == "tanh" else t
    points = coords @ frame.T
    if ambient_noise > 0:
        points = points + ambient_noise * rng.standard_normal(points.shape)
    return points


class LearnedProjection:
    """Use a trained prior as the model projection inside the descent loop."""

    beta_bound = None

    def __init__(self, prior):
        self.prior = prior

    def __call__(self, z):
        return prior_apply(self.prior, z)

    def __repr__(self):
        return f"LearnedProjection(n={self.prior.n_ambient}, d={self.prior.d_latent})"


def save_prior(prior, path):
    """Serialize weights plus a (n, d_latent, nonlinearity, seed) header to .npz."""
    np.savez(
        path,
        encoder_weights=prior.encoder_weights,
        decoder_weights=prior.decoder_weights,
        nonlinearity=np.array(prior.nonlinearity),
        n_ambient=np.array(prior.n_ambient),
        d_latent=np.array(prior.d_latent),
        seed=np.array(-1 if prior.seed is None else int(prior.seed)),
    )


def load_prior(path):
    with np.load(path) as blob:
        seed = int(blob["seed"])
        return ToyPrior(
            blob["encoder_weights"],
            blob["decoder_weights"],
            str(blob["nonlinearity"]),
            seed=None if seed == -1 else seed,
        )
