"""Diagonal-Gaussian variational autoencoder with hand-rolled numerics.

Everything here is plain numpy: forward passes, the evidence lower bound
(ELBO), exact reparameterized gradients, and a small SGD training loop.
Keeping the gradients analytic (instead of relying on an autodiff
framework) lets the rest of the library treat the model as a transparent,
deterministic function of its parameters, which matters both for the
gradient-free per-sample optimization built on top and for checking the
math against finite differences.

Conventions:
    * Hidden layers use tanh; mean / log-variance heads are linear.
    * The decoder models p(x|z) as a diagonal Gaussian whose per-dimension
      log-variance is a learned parameter vector (not an MLP output).
    * Log-variances are clamped to [-8, 8] so exp() stays well-scaled.
    * All randomness is drawn from explicitly seeded generators; the same
      seed always reproduces the same numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

LOGVAR_MIN = -8.0
LOGVAR_MAX = 8.0

_LOG_2PI = float(np.log(2.0 * np.pi))

CHECKPOINT_FORMAT = "vae-params"
CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


def _as_vector(x, dim: int | None = None) -> np.ndarray:
    """Coerce a sample (array or FeatureVector-like with .values) to 1-D float64."""
    values = getattr(x, "values", x)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D sample, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"sample has dimension {arr.shape[0]}, expected {dim}")
    return arr


Layer = tuple[np.ndarray, np.ndarray]  # (weight (out, in), bias (out,))


def _freeze_layers(layers) -> tuple[Layer, ...]:
    return tuple((_freeze(w), _freeze(b)) for w, b in layers)


def _check_chain(layers: Sequence[Layer], first_in: int, last_out: int, name: str) -> None:
    expect = first_in
    for i, (w, b) in enumerate(layers):
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ValueError(f"{name} layer {i} has inconsistent shapes {w.shape} / {b.shape}")
        if w.shape[1] != expect:
            raise ValueError(
                f"{name} layer {i} expects input {w.shape[1]}, previous layer produces {expect}"
            )
        expect = w.shape[0]
    if expect != last_out:
        raise ValueError(f"{name} final layer produces {expect}, expected {last_out}")


@dataclass(frozen=True)
class VaeParams:
    """All weights of the VAE. Immutable: arrays are stored read-only.

    ``encoder_layers`` maps an input sample to the concatenated
    (mean, log-variance) of the approximate posterior, so its final layer
    has ``2 * latent_dim`` outputs. ``decoder_layers`` maps a latent draw
    back to the reconstruction mean; ``decoder_logvar`` holds the learned
    per-dimension log-variance of the observation model (clamped on
    construction).
    """

    encoder_layers: tuple[Layer, ...]
    decoder_layers: tuple[Layer, ...]
    decoder_logvar: np.ndarray
    input_dim: int
    latent_dim: int

    def __post_init__(self):
        if self.input_dim < 1 or self.latent_dim < 1:
            raise ValueError("input_dim and latent_dim must be positive")
        enc = _freeze_layers(self.encoder_layers)
        dec = _freeze_layers(self.decoder_layers)
        _check_chain(enc, self.input_dim, 2 * self.latent_dim, "encoder")
        _check_chain(dec, self.latent_dim, self.input_dim, "decoder")
        dlv = np.asarray(self.decoder_logvar, dtype=np.float64)
        if dlv.shape != (self.input_dim,):
            raise ValueError(f"decoder_logvar has shape {dlv.shape}, expected ({self.input_dim},)")
        for arrs in (enc, dec):
            for w, b in arrs:
                if not (np.isfinite(w).all() and np.isfinite(b).all()):
                    raise ValueError("parameters must be finite")
        if not np.isfinite(dlv).all():
            raise ValueError("decoder_logvar must be finite")
        object.__setattr__(self, "encoder_layers", enc)
        object.__setattr__(self, "decoder_layers", dec)
        object.__setattr__(self, "decoder_logvar", _freeze(np.clip(dlv, LOGVAR_MIN, LOGVAR_MAX)))


@dataclass(frozen=True)
class LatentStats:
    """Mean and log-variance of the diagonal-Gaussian posterior q(z|x)."""

    mu: np.ndarray
    logvar: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        lv = np.asarray(self.logvar, dtype=np.float64)
        if mu.shape != lv.shape or mu.ndim != 1:
            raise ValueError("mu and logvar must be 1-D with matching shapes")
        if not (np.isfinite(mu).all() and np.isfinite(lv).all()):
            raise ValueError("latent statistics must be finite")
        object.__setattr__(self, "mu", _freeze(mu))
        object.__setattr__(self, "logvar", _freeze(np.clip(lv, LOGVAR_MIN, LOGVAR_MAX)))


@dataclass(frozen=True)
class ElboValue:
    """ELBO decomposition in nats: elbo = recon_logprob - kl, held bit-exactly."""

    recon_logprob: float
    kl: float
    elbo: float
    mc_samples: int


@dataclass
class VaeGradient:
    """Gradient of the ELBO, same shape family as :class:`VaeParams`."""

    encoder_layers: list[Layer]
    decoder_layers: list[Layer]
    decoder_logvar: np.ndarray


def init_params(
    input_dim: int,
    latent_dim: int,
    hidden_dims: Sequence[int],
    seed: int,
    decoder_hidden_dims: Sequence[int] | None = None,
) -> VaeParams:
    """Create parameters with 1/sqrt(fan_in) Gaussian weights and zero biases.

    By default the decoder mirrors the encoder's hidden stack in reverse
    order; pass ``decoder_hidden_dims`` for an asymmetric model (a small
    encoder keeps per-sample optimization cheap while a deeper decoder
    models the data tightly). Deterministic for a given seed.
    """
    if input_dim < 1 or latent_dim < 1:
        raise ValueError("input_dim and latent_dim must be positive")
    if not hidden_dims or any(h < 1 for h in hidden_dims):
        raise ValueError("hidden_dims must be a nonempty list of positive ints")
    if decoder_hidden_dims is None:
        decoder_hidden_dims = list(reversed(hidden_dims))
    if not decoder_hidden_dims or any(h < 1 for h in decoder_hidden_dims):
        raise ValueError("decoder_hidden_dims must be a nonempty list of positive ints")
    rng = np.random.default_rng(seed)

    def make(dims):
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in))
            layers.append((w, np.zeros(fan_out)))
        return tuple(layers)

    enc = make([input_dim, *hidden_dims, 2 * latent_dim])
    dec = make([latent_dim, *decoder_hidden_dims, input_dim])
    return VaeParams(enc, dec, np.zeros(input_dim), input_dim, latent_dim)


def _mlp_forward(layers: Sequence[Layer], x: np.ndarray) -> np.ndarray:
    """Hidden layers tanh, final layer linear. Accepts (d,) or (n, d) input."""
    h = x
    for w, b in layers[:-1]:
        h = np.tanh(h @ w.T + b)
    w, b = layers[-1]
    return h @ w.T + b


def encode(params: VaeParams, x) -> LatentStats:
    """Run the encoder MLP and split its output into posterior mean / log-variance."""
    vec = _as_vector(x, params.input_dim)
    out = _mlp_forward(params.encoder_layers, vec)
    k = params.latent_dim
    return LatentStats(out[:k], np.clip(out[k:], LOGVAR_MIN, LOGVAR_MAX))


def decode(params: VaeParams, z) -> tuple[np.ndarray, np.ndarray]:
    """Map a latent vector to (reconstruction mean, observation log-variance)."""
    zv = _as_vector(z, params.latent_dim)
    mu = _mlp_forward(params.decoder_layers, zv)
    return mu, np.array(params.decoder_logvar)


def kl_diag_gaussian(stats: LatentStats) -> float:
    """Closed-form KL(q || N(0, I)) = 0.5 * sum(mu^2 + exp(lv) - 1 - lv).

    Uses expm1 so each per-dimension term is computed as a sum of
    nonnegative quantities; the result is >= 0 in floating point, not just
    mathematically.
    """
    terms = stats.mu**2 + (np.expm1(stats.logvar) - stats.logvar)
    return float(0.5 * np.sum(terms))


def _gaussian_logpdf_rows(x: np.ndarray, means: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log-density of x under each row of means: (n,) result."""
    sq = (x[None, :] - means) ** 2
    return -0.5 * np.sum(_LOG_2PI + logvar[None, :] + sq * np.exp(-logvar)[None, :], axis=1)


def _draw_eps(noise_seed: int, mc_samples: int, latent_dim: int) -> np.ndarray:
    return np.random.default_rng(noise_seed).standard_normal((mc_samples, latent_dim))


def elbo(params: VaeParams, x, mc_samples: int = 8, noise_seed: int = 0) -> ElboValue:
    """Monte-Carlo ELBO of a single sample.

    The reconstruction term averages the decoder log-density over
    ``mc_samples`` reparameterized draws z = mu + exp(logvar/2) * eps, with
    eps drawn from ``noise_seed``; the KL term is analytic. Deterministic
    for a given seed.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    vec = _as_vector(x, params.input_dim)
    stats = encode(params, vec)
    sigma = np.exp(0.5 * stats.logvar)
    eps = _draw_eps(noise_seed, mc_samples, params.latent_dim)
    z = stats.mu[None, :] + sigma[None, :] * eps
    recon_mu = _mlp_forward(params.decoder_layers, z)
    recon = float(np.mean(_gaussian_logpdf_rows(vec, recon_mu, params.decoder_logvar)))
    kl = kl_diag_gaussian(stats)
    return ElboValue(recon, kl, recon - kl, mc_samples)


def _elbo_and_grad(
    params: VaeParams, x, mc_samples: int, noise_seed: int
) -> tuple[ElboValue, VaeGradient]:
    """Forward pass plus exact backward pass, sharing the noise of :func:`elbo`.

    The backward pass is ordinary reverse-mode calculus written out by hand:
    reconstruction error flows back through the decoder stack, splits at the
    reparameterization into mean and log-variance paths, picks up the
    analytic KL gradients, and continues through the encoder stack. Clamped
    encoder log-variances get zero gradient (saturated clamp).
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    vec = _as_vector(x, params.input_dim)
    k = params.latent_dim

    # Encoder forward, caching layer inputs.
    enc_inputs = []
    h = vec
    for w, b in params.encoder_layers[:-1]:
        enc_inputs.append(h)
        h = np.tanh(h @ w.T + b)
    enc_inputs.append(h)
    w_head, b_head = params.encoder_layers[-1]
    head_out = h @ w_head.T + b_head
    mu, lv_raw = head_out[:k], head_out[k:]
    lv = np.clip(lv_raw, LOGVAR_MIN, LOGVAR_MAX)
    sigma = np.exp(0.5 * lv)

    eps = _draw_eps(noise_seed, mc_samples, k)
    z = mu[None, :] + sigma[None, :] * eps  # (S, k)

    # Decoder forward on all MC draws at once.
    dec_inputs = []
    g = z
    for w, b in params.decoder_layers[:-1]:
        dec_inputs.append(g)
        g = np.tanh(g @ w.T + b)
    dec_inputs.append(g)
    w_out, b_out = params.decoder_layers[-1]
    recon_mu = g @ w_out.T + b_out  # (S, D)

    dlv = params.decoder_logvar
    inv_var = np.exp(-dlv)
    resid = vec[None, :] - recon_mu
    recon_each = -0.5 * np.sum(_LOG_2PI + dlv[None, :] + resid**2 * inv_var[None, :], axis=1)
    recon = float(np.mean(recon_each))
    kl = kl_diag_gaussian(LatentStats(mu, lv))
    value = ElboValue(recon, kl, recon - kl, mc_samples)

    s = float(mc_samples)
    # d elbo / d recon_mu, already carrying the 1/S of the MC average.
    delta = resid * inv_var[None, :] / s  # (S, D)
    grad_dlv = np.mean(-0.5 + 0.5 * resid**2 * inv_var[None, :], axis=0)

    # Back through the decoder.
    dec_grads: list[Layer] = []
    upstream = delta
    for (w, b), layer_in in zip(
        reversed(params.decoder_layers), reversed(dec_inputs)
    ):
        dec_grads.append((upstream.T @ layer_in, upstream.sum(axis=0)))
        upstream = upstream @ w
        if len(dec_grads) < len(params.decoder_layers):
            upstream = upstream * (1.0 - layer_in**2)  # tanh'(a) = 1 - tanh(a)^2
    dec_grads.reverse()
    dz = upstream  # (S, k): d elbo / d z per draw

    # Through the reparameterization, plus analytic KL gradients.
    dmu = dz.sum(axis=0) - mu
    dlv_enc = 0.5 * sigma * (dz * eps).sum(axis=0) - 0.5 * np.expm1(lv)
    dlv_enc = np.where((lv_raw > LOGVAR_MIN) & (lv_raw < LOGVAR_MAX), dlv_enc, 0.0)

    # Back through the encoder.
    enc_grads: list[Layer] = []
    upstream = np.concatenate([dmu, dlv_enc])[None, :]
    for (w, b), layer_in in zip(
        reversed(params.encoder_layers), reversed(enc_inputs)
    ):
        layer_in2 = np.atleast_2d(layer_in)
        enc_grads.append((upstream.T @ layer_in2, upstream.sum(axis=0)))
        upstream = upstream @ w
        if len(enc_grads) < len(params.encoder_layers):
            upstream = upstream * (1.0 - layer_in2**2)
    enc_grads.reverse()

    return value, VaeGradient(enc_grads, dec_grads, grad_dlv)


def grad_elbo(params: VaeParams, x, mc_samples: int = 1, noise_seed: int = 0) -> VaeGradient:
    """Exact gradient of :func:`elbo` w.r.t. every parameter (same noise draws)."""
    _, grad = _elbo_and_grad(params, x, mc_samples, noise_seed)
    return grad


def _grad_mean(grads: list[VaeGradient]) -> VaeGradient:
    enc = [
        (
            np.mean([g.encoder_layers[i][0] for g in grads], axis=0),
            np.mean([g.encoder_layers[i][1] for g in grads], axis=0),
        )
        for i in range(len(grads[0].encoder_layers))
    ]
    dec = [
        (
            np.mean([g.decoder_layers[i][0] for g in grads], axis=0),
            np.mean([g.decoder_layers[i][1] for g in grads], axis=0),
        )
        for i in range(len(grads[0].decoder_layers))
    ]
    dlv = np.mean([g.decoder_logvar for g in grads], axis=0)
    return VaeGradient(enc, dec, dlv)


def _ascent_step(params: VaeParams, grad: VaeGradient, lr: float) -> VaeParams:
    enc = tuple(
        (w + lr * gw, b + lr * gb)
        for (w, b), (gw, gb) in zip(params.encoder_layers, grad.encoder_layers)
    )
    dec = tuple(
        (w + lr * gw, b + lr * gb)
        for (w, b), (gw, gb) in zip(params.decoder_layers, grad.decoder_layers)
    )
    dlv = params.decoder_logvar + lr * grad.decoder_logvar
    return VaeParams(enc, dec, dlv, params.input_dim, params.latent_dim)


def train(
    params: VaeParams,
    dataset: Sequence,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    seed: int,
    mc_samples: int = 1,
) -> tuple[VaeParams, list[float]]:
    """Plain minibatch SGD ascent on the ELBO.

    Returns the trained parameters and the per-epoch mean negative ELBO
    (computed from the values visited during the gradient pass).
    Deterministic for a given seed; ``epochs=0`` returns the input
    parameters untouched with an empty curve.
    """
    if len(dataset) == 0:
        raise ValueError("dataset must be nonempty")
    if epochs < 0 or batch_size < 1 or learning_rate <= 0:
        raise ValueError("epochs must be >= 0, batch_size >= 1, learning_rate > 0")
    data = np.stack([_as_vector(x, params.input_dim) for x in dataset])
    rng = np.random.default_rng(seed)
    curve: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        epoch_neg_elbo = []
        for start in range(0, len(data), batch_size):
            batch = order[start : start + batch_size]
            grads = []
            for idx in batch:
                noise_seed = int(rng.integers(0, 2**63))
                value, grad = _elbo_and_grad(params, data[idx], mc_samples, noise_seed)
                grads.append(grad)
                epoch_neg_elbo.append(-value.elbo)
            params = _ascent_step(params, _grad_mean(grads), learning_rate)
        mean_loss = float(np.mean(epoch_neg_elbo))
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(
                f"non-finite training loss at epoch {epoch} (mean negative ELBO {mean_loss})"
            )
        curve.append(mean_loss)
    return params, curve


# -- Parameter flattening -----------------------------------------------------
#
# Canonical declaration order (used by the vector views and the checkpoint
# file): encoder layers in order (weight row-major, then bias), decoder
# layers likewise, then decoder_logvar.


def _iter_arrays(params: VaeParams):
    for w, b in params.encoder_layers:
        yield w
        yield b
    for w, b in params.decoder_layers:
        yield w
        yield b
    yield params.decoder_logvar


def params_to_vector(params: VaeParams) -> np.ndarray:
    """All parameters flattened in canonical declaration order."""
    return np.concatenate([a.ravel() for a in _iter_arrays(params)])


def vector_to_params(vec: np.ndarray, like: VaeParams) -> VaeParams:
    """Rebuild a :class:`VaeParams` with the same shapes as ``like``."""
    vec = np.asarray(vec, dtype=np.float64)
    pos = 0

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        out = vec[pos : pos + n].reshape(shape)
        pos += n
        return out

    enc = tuple((take(w.shape), take(b.shape)) for w, b in like.encoder_layers)
    dec = tuple((take(w.shape), take(b.shape)) for w, b in like.decoder_layers)
    dlv = take(like.decoder_logvar.shape)
    if pos != vec.size:
        raise ValueError(f"vector has {vec.size} entries, expected {pos}")
    return VaeParams(enc, dec, dlv, like.input_dim, like.latent_dim)


def gradient_to_vector(grad: VaeGradient) -> np.ndarray:
    """Gradient flattened in the same canonical order as :func:`params_to_vector`."""
    parts = []
    for w, b in grad.encoder_layers:
        parts.extend([w.ravel(), b.ravel()])
    for w, b in grad.decoder_layers:
        parts.extend([w.ravel(), b.ravel()])
    parts.append(np.asarray(grad.decoder_logvar).ravel())
    return np.concatenate(parts)


def encoder_to_vector(params: VaeParams) -> np.ndarray:
    """Only the encoder parameters, flattened in declaration order."""
    parts = []
    for w, b in params.encoder_layers:
        parts.extend([w.ravel(), b.ravel()])
    return np.concatenate(parts)


def encoder_gradient_to_vector(grad: VaeGradient) -> np.ndarray:
    parts = []
    for w, b in grad.encoder_layers:
        parts.extend([w.ravel(), b.ravel()])
    return np.concatenate(parts)


def replace_encoder(params: VaeParams, vec: np.ndarray) -> VaeParams:
    """New params with the encoder taken from a flat vector; rest shared."""
    vec = np.asarray(vec, dtype=np.float64)
    pos = 0

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        out = vec[pos : pos + n].reshape(shape)
        pos += n
        return out

    enc = tuple((take(w.shape), take(b.shape)) for w, b in params.encoder_layers)
    if pos != vec.size:
        raise ValueError(f"encoder vector has {vec.size} entries, expected {pos}")
    return VaeParams(
        enc, params.decoder_layers, params.decoder_logvar, params.input_dim, params.latent_dim
    )


# -- Checkpoint file ----------------------------------------------------------
#
# Layout: one JSON header line (format name, version, dimensions, layer
# shapes) terminated by "\n", then every parameter as 64-bit little-endian
# floats in canonical declaration order.


def save_checkpoint(params: VaeParams, path) -> None:
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_dim": params.input_dim,
        "latent_dim": params.latent_dim,
        "encoder_layers": [list(w.shape) for w, _ in params.encoder_layers],
        "decoder_layers": [list(w.shape) for w, _ in params.decoder_layers],
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(params_to_vector(params).astype("<f8").tobytes())


def load_checkpoint(path) -> VaeParams:
    with open(path, "rb") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"not a model checkpoint: {path}") from exc
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not a model checkpoint: {path}")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        flat = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)

    input_dim = int(header["input_dim"])
    latent_dim = int(header["latent_dim"])
    pos = 0

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        out = flat[pos : pos + n].reshape(shape)
        pos += n
        return out

    enc = tuple(
        (take((o, i)), take((o,))) for o, i in (tuple(s) for s in header["encoder_layers"])
    )
    dec = tuple(
        (take((o, i)), take((o,))) for o, i in (tuple(s) for s in header["decoder_layers"])
    )
    dlv = take((input_dim,))
    if pos != flat.size:
        raise ValueError(f"checkpoint payload has {flat.size} floats, expected {pos}")
    return VaeParams(enc, dec, dlv, input_dim, latent_dim)
