"""Critic payoff estimates, under/overfitting indicators, and a Fréchet metric."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .seeding import derive_seed
from .tensor import ContractError, no_grad

COV_REG = 1e-6
EIG_CLAMP = 1e-10
SYM_TOL = 1e-8


@dataclass(frozen=True)
class DivergenceEstimate:
    value: float
    standard_error: float
    n_real: int
    n_gen: int
    discriminator_role: str = "original"
    eval_set: str = "test"

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "standard_error": self.standard_error,
            "n_real": self.n_real,
            "n_gen": self.n_gen,
            "discriminator_role": self.discriminator_role,
            "eval_set": self.eval_set,
        }


def critic_values(f, x: np.ndarray) -> np.ndarray:
    """Evaluate a critic on a sample matrix without touching its state.

    ``f`` is either a :class:`genlab.nn.Network` (run in eval mode without
    advancing power iteration) or any callable mapping an (n, d) array to n values.
    """
    if hasattr(f, "spec") and hasattr(f, "layers"):
        with no_grad():
            out = f.forward(x, train=False, update_sn=False).data
    else:
        out = np.asarray(f(x), dtype=np.float64)
    return out.reshape(-1)


def estimate_divergence(
    f, real: np.ndarray, gen: np.ndarray, role: str = "original", eval_set: str = "test"
) -> DivergenceEstimate:
    """mean f(real) - mean f(gen), with a two-sample standard error."""
    if len(real) == 0 or len(gen) == 0:
        raise ContractError("estimate_divergence needs nonempty real and generated sets")
    fr = critic_values(f, real)
    fg = critic_values(f, gen)
    return estimate_from_values(fr, fg, role, eval_set)


def estimate_from_values(fr, fg, role="original", eval_set="test") -> DivergenceEstimate:
    fr = np.asarray(fr, dtype=np.float64)
    fg = np.asarray(fg, dtype=np.float64)
    # shift symmetric in (fr, fg): constants cancel exactly and swapping the
    # sets negates the value bit for bit
    shift = (fr.reshape(-1)[0] + fg.reshape(-1)[0]) / 2
    fr, fg = fr - shift, fg - shift
    value = float(fr.mean() - fg.mean())
    var_r = fr.var(ddof=1) if fr.size > 1 else 0.0
    var_g = fg.var(ddof=1) if fg.size > 1 else 0.0
    se = math.sqrt(var_r / fr.size + var_g / fg.size)
    return DivergenceEstimate(value, se, int(fr.size), int(fg.size), role, eval_set)


def underfitting_indicator(l_original: float, l_auxiliary: float, margin: float = 0.0) -> bool:
    """True when the original critic's payoff falls short of the auxiliary's
    by more than ``margin``."""
    if margin < 0:
        raise ContractError("margin must be >= 0")
    return bool(l_original < l_auxiliary - margin)


def underfit_margin(a: DivergenceEstimate, b: DivergenceEstimate, k: float = 2.0) -> float:
    return k * math.hypot(a.standard_error, b.standard_error)


def generator_gap(l_on_train2: float, l_on_train1: float) -> float:
    return l_on_train2 - l_on_train1


@dataclass(frozen=True)
class GapReport:
    generator_gap: float
    generator_gap_se: float
    discriminator_gap: float
    underfit_flag: bool


def gap_report(
    indep_train1: DivergenceEstimate,
    indep_train2: DivergenceEstimate,
    orig_train: DivergenceEstimate,
    orig_test: DivergenceEstimate,
    aux_test: DivergenceEstimate,
) -> GapReport:
    return GapReport(
        generator_gap=generator_gap(indep_train2.value, indep_train1.value),
        generator_gap_se=math.hypot(indep_train1.standard_error, indep_train2.standard_error),
        discriminator_gap=orig_train.value - orig_test.value,
        underfit_flag=underfitting_indicator(
            orig_test.value, aux_test.value, underfit_margin(orig_test, aux_test)
        ),
    )


# -- Fréchet distance ----------------------------------------------------------


def fit_gaussian(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ContractError("fit_gaussian needs a 2-D sample matrix with at least 2 rows")
    mean = samples.mean(axis=0)
    cov = np.cov(samples, rowvar=False, ddof=1).reshape(samples.shape[1], samples.shape[1])
    return mean, cov + COV_REG * np.eye(samples.shape[1])


def _sym_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    w = np.where(w < EIG_CLAMP, 0.0, w)
    return (V * np.sqrt(w)) @ V.T


def _check_sym(S: np.ndarray, name: str) -> None:
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ContractError(f"{name} must be square, got {S.shape}")
    if np.max(np.abs(S - S.T), initial=0.0) > SYM_TOL:
        raise ContractError(f"{name} is not symmetric (tolerance {SYM_TOL})")


def frechet_distance(m1, S1, m2, S2) -> float:
    """|m1 - m2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)).

    tr (S1 S2)^(1/2) is taken as tr (S1^(1/2) S2 S1^(1/2))^(1/2), whose
    argument is symmetric PSD, so both roots use an eigendecomposition.
    """
    m1, m2 = np.atleast_1d(np.asarray(m1, float)), np.atleast_1d(np.asarray(m2, float))
    S1, S2 = np.atleast_2d(np.asarray(S1, float)), np.atleast_2d(np.asarray(S2, float))
    _check_sym(S1, "S1")
    _check_sym(S2, "S2")
    if S1.shape != S2.shape or m1.shape != m2.shape or m1.shape[0] != S1.shape[0]:
        raise ContractError("frechet_distance: mismatched dimensions")
    r1 = _sym_sqrt(S1)
    M = r1 @ S2 @ r1
    w = np.linalg.eigvalsh((M + M.T) / 2)
    tr_cross = float(np.sum(np.sqrt(np.where(w < EIG_CLAMP, 0.0, w))))
    diff = m1 - m2
    d = float(diff @ diff + np.trace(S1) + np.trace(S2) - 2.0 * tr_cross)
    return max(d, 0.0) if d > -1e-9 else d


@dataclass(frozen=True)
class EmbeddingSpec:
    kind: str = "identity"  # identity | fixed_random_projection
    out_dim: int = 8
    seed: int = 0


def embed(samples: np.ndarray, spec: EmbeddingSpec, in_dim: int | None = None) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if spec.kind == "identity":
        return samples
    if spec.kind != "fixed_random_projection":
        raise ContractError(f"unknown embedding {spec.kind!r}")
    d = samples.shape[1]
    if in_dim is not None and in_dim != d:
        raise ContractError(f"embedding expects {in_dim}-D input, got {d}-D")
    P = np.random.default_rng(derive_seed(spec.seed, "embed", d, spec.out_dim)).normal(
        0.0, 1.0 / math.sqrt(d), size=(d, spec.out_dim)
    )
    h = samples @ P
    return np.where(h >= 0, h, 0.2 * h)


def frechet_metric(a: np.ndarray, b: np.ndarray, spec: EmbeddingSpec = EmbeddingSpec()) -> float:
    ea, eb = embed(a, spec), embed(b, spec)
    if ea.shape[1] != eb.shape[1]:
        raise ContractError("samples have different dimensions")
    return frechet_distance(*fit_gaussian(ea), *fit_gaussian(eb))


def spearman(x, y) -> float:
    from scipy.stats import spearmanr

    return float(spearmanr(x, y).statistic)

