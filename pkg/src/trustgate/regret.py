"""Per-sample likelihood regret scoring.

The trust score of a sample is the gap between the best likelihood bound a
per-sample optimizer can reach and the bound the frozen trained model
assigns. Samples the model explains well leave little room for
improvement; samples off the learned distribution leave a lot. Only the
encoder is optimized per sample: the frozen decoder pins the learned
density, and the encoder is the part that can be mis-matched to an
individual input.

Every objective evaluation inside one scoring call reuses the same
reparameterization noise, so the optimizer sees a deterministic objective
and the score is reproducible bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import vae
from .fixedpoint import FixedPointFormat
from .zo import ZoConfig, ObjectiveEvaluationError, optimize

SCORE_CSV_COLUMNS = ["sample_id", "l_vae", "l_opt", "lr", "label"]


class ScoringError(RuntimeError):
    """Per-sample scoring failure, tagged with the sample identity."""


@dataclass(frozen=True)
class LRScore:
    """Likelihood bounds (nats) under the frozen and per-sample-optimized model."""

    l_vae: float
    l_opt: float
    lr: float

    @classmethod
    def from_bounds(cls, l_vae: float, l_opt: float) -> "LRScore":
        return cls(l_vae, l_opt, l_opt - l_vae)


def score_likelihood(params: vae.VaeParams, x, mc_samples: int = 8, noise_seed: int = 0) -> float:
    """Plain likelihood bound of a sample under the frozen model."""
    return vae.elbo(params, x, mc_samples, noise_seed).elbo


def score_lr(
    params: vae.VaeParams,
    x,
    cfg: ZoConfig,
    fixed: FixedPointFormat | None = None,
    mc_samples: int = 8,
    noise_seed: int = 0,
    sample_id=None,
) -> LRScore:
    """Likelihood regret of one sample via gradient-free encoder optimization.

    The encoder weights are flattened into the optimization vector and the
    objective is the negative likelihood bound at frozen noise; the frozen
    model's own bound is the optimizer's start point, so the best-so-far
    rule makes the regret nonnegative by construction. The input ``params``
    are never modified. When ``fixed`` is given, both bounds come from the
    quantized evaluation pipeline so the comparison stays internally
    consistent.
    """
    phi0 = vae.encoder_to_vector(params)

    def objective(phi: np.ndarray) -> float:
        return -vae.elbo(vae.replace_encoder(params, phi), x, mc_samples, noise_seed).elbo

    try:
        result = optimize(objective, phi0, cfg, fixed)
    except ObjectiveEvaluationError as exc:
        ident = "sample" if sample_id is None else f"sample {sample_id!r}"
        raise ScoringError(f"likelihood-regret scoring failed for {ident}: {exc}") from exc
    return LRScore.from_bounds(l_vae=-result.f_initial, l_opt=-result.f_best)


def score_lr_gradient(
    params: vae.VaeParams,
    x,
    iterations: int,
    step: float,
    mc_samples: int = 8,
    noise_seed: int = 0,
) -> LRScore:
    """Likelihood regret via exact-gradient ascent on the encoder.

    Reference implementation for comparing the gradient-free route against:
    each iteration spends one gradient evaluation (which also yields the
    objective value), keeps the best bound seen, and uses the same frozen
    noise convention as :func:`score_lr`.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    phi = vae.encoder_to_vector(params)
    current = vae.replace_encoder(params, phi)
    value, grad = vae._elbo_and_grad(current, x, mc_samples, noise_seed)
    l_vae = value.elbo
    best = l_vae
    for _ in range(iterations - 1):
        phi = phi + step * vae.encoder_gradient_to_vector(grad)
        current = vae.replace_encoder(params, phi)
        value, grad = vae._elbo_and_grad(current, x, mc_samples, noise_seed)
        best = max(best, value.elbo)
    return LRScore.from_bounds(l_vae=l_vae, l_opt=best)


def score_batch(
    params: vae.VaeParams,
    xs: Sequence,
    cfg: ZoConfig,
    fixed: FixedPointFormat | None = None,
    mc_samples: int = 8,
    base_seed: int = 0,
) -> tuple[list[LRScore | None], dict[int, str]]:
    """Score a batch, one :func:`score_lr` per sample, collecting failures.

    Seeds attach to the original index: sample i is scored with optimizer
    and noise seeds ``base_seed + i``, so each output slot depends only on
    (xs[i], base_seed + i) and the batch equals the matching sequence of
    individual calls. Failed samples leave a ``None`` in their slot and an
    error message keyed by index; the batch never aborts early.
    """
    if len(xs) == 0:
        raise ValueError("batch must be nonempty")
    scores: list[LRScore | None] = []
    failures: dict[int, str] = {}
    for i, x in enumerate(xs):
        seed = base_seed + i
        try:
            scores.append(
                score_lr(
                    params,
                    x,
                    replace(cfg, seed=seed),
                    fixed,
                    mc_samples,
                    noise_seed=seed,
                    sample_id=i,
                )
            )
        except ScoringError as exc:
            scores.append(None)
            failures[i] = str(exc)
    return scores, failures


def calibrate_threshold(clean_scores: Sequence, percentile: float) -> float:
    """Percentile of the regret values of a clean calibration set.

    Linear interpolation between order statistics; accepts LRScore objects
    or raw regret values.
    """
    if len(clean_scores) == 0:
        raise ValueError("clean_scores must be nonempty")
    if not 0 < percentile <= 100:
        raise ValueError("percentile must be in (0, 100]")
    values = [getattr(s, "lr", s) for s in clean_scores]
    return float(np.percentile(values, percentile))


def write_scores_csv(rows: Sequence[tuple], path) -> None:
    """Score dump: rows of (sample_id, LRScore, label)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SCORE_CSV_COLUMNS)
        for sample_id, score, label in rows:
            writer.writerow(
                [sample_id, repr(score.l_vae), repr(score.l_opt), repr(score.lr), label]
            )


def read_scores_csv(path) -> list[tuple[str, LRScore, str]]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != SCORE_CSV_COLUMNS:
            raise ValueError(f"unexpected score CSV header {header!r} in {path}")
        return [
            (row[0], LRScore(float(row[1]), float(row[2]), float(row[3])), row[4])
            for row in reader
        ]
