"""Closed forms and Monte Carlo estimators for sparse influence matrices.

Combinatorial quantities are evaluated in log space with ``gammaln`` so
they stay finite for n in the hundreds of thousands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from . import network
from .influence import InfluenceMatrix, expand, generate
from .rng import PERTURB, as_seed
from .trainer import clip, evaluate, sample_mask


def _log_comb(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


# -- sparsity of w ----------------------------------------------------------

def expected_nonzero_weights(m: int, d: int) -> float:
    """E[#nonzero w_i] for w = Q z, z ~ Bernoulli(U(0,1)) componentwise."""
    return m * -math.expm1(-d * math.log(2.0))


def simulate_nonzero_weights(m: int, n: int, d: int, trials: int, seed) -> np.ndarray:
    """Nonzero counts of Q z over ``trials`` fresh draws of (Q, p, z)."""
    seed = as_seed(seed)
    fan_in = np.ones(m, dtype=np.int64)
    counts = np.empty(trials)
    for t in range(trials):
        Q = generate(fan_in, n, d, seed.stream("nonzero-matrix", t).integers(2**63))
        rng = seed.stream("nonzero-mask", t)
        z = sample_mask(rng.random(n), rng)
        counts[t] = np.count_nonzero(expand(Q, z))
    return counts


# -- empty columns ----------------------------------------------------------

def prob_k_empty_columns(n: int, k: int, d: int, m: int) -> float:
    """C(n,k) C(n-k,d)^m / C(n,d)^m.

    This is n-choose-k times the probability that one fixed set of k
    columns is empty, i.e. E[C(E, k)] for E the number of empty columns.
    For k >= 1 it is an upper bound on P(E >= k), not P(E = k); see
    ``prob_exactly_k_empty_columns`` for the latter.
    """
    if k < 0 or k > n - d:
        return 0.0
    if k == 0:
        return 1.0
    logv = _log_comb(n, k) + m * (_log_comb(n - k, d) - _log_comb(n, d))
    return float(np.exp(logv))


def prob_exactly_k_empty_columns(n: int, k: int, d: int, m: int) -> float:
    """P(exactly k empty columns), by inclusion-exclusion in exact arithmetic.

    Cost grows with C(n,d)^m as a big integer; intended for small shapes.
    """
    total = Fraction(math.comb(n, d)) ** m
    acc = Fraction(0)
    for j in range(k, n - d + 1):
        term = Fraction(math.comb(n, j) * math.comb(n - j, d) ** m) / total
        acc += (-1) ** (j - k) * math.comb(j, k) * term
    return float(acc)


def expected_empty_fraction(n: int, d: int, m: int) -> float:
    """Expected fraction of empty columns, ((n - d) / n)^m."""
    if not 1 <= d <= n:
        raise ValueError("need 1 <= d <= n")
    if d == n:
        return 0.0
    return math.exp(m * math.log1p(-d / n))


def expected_column_load(m: int, n: int, d: int) -> float:
    """Expected number of rows touching a given column, m d / n."""
    return m * d / n


# -- magnitude of a single row ----------------------------------------------

def cherrypick_p(Q: InfluenceMatrix, i: int) -> tuple[np.ndarray, float]:
    """p on the majority-sign support of row i (ties favour positives)."""
    cols, vals = Q.row(i)
    pos = vals > 0
    keep = pos if 2 * np.count_nonzero(pos) >= vals.size else ~pos
    p = np.zeros(Q.cols)
    p[cols[keep]] = 1.0
    return p, float(abs(vals[keep].sum()))


def cherrypick_bounds(d: int, fan_in: int) -> tuple[float, float]:
    """[(d/2) s, d s] with s = sigma sqrt(2/pi) the half-normal mean."""
    half_normal = math.sqrt(6.0 / (d * fan_in)) * math.sqrt(2.0 / math.pi)
    return d / 2 * half_normal, d * half_normal


def cherrypick_values(rows: int, d: int, fan_in: int, seed, n: int | None = None) -> np.ndarray:
    n = n or max(d, 1000)
    Q = generate(np.full(rows, fan_in), n, d, seed)
    return np.array([cherrypick_p(Q, i)[1] for i in range(rows)])


# -- zonotopes --------------------------------------------------------------

@dataclass(frozen=True)
class ZonotopeSpec:
    n: int
    d: int
    fan_ins: tuple

    def __post_init__(self):
        fan_ins = tuple(int(f) for f in np.broadcast_to(self.fan_ins, (self.n,)))
        object.__setattr__(self, "fan_ins", fan_ins)
        if self.n < 1 or self.d < 1 or min(fan_ins) < 1:
            raise ValueError("zonotope parameters must be positive")


def log_zonotope_volume_expected(spec: ZonotopeSpec) -> float:
    n = spec.n
    return float(
        gammaln(n + 1) + n / 2 * math.log(3.0 / spec.d) - gammaln(1 + n / 2)
        - 0.5 * np.sum(np.log(spec.fan_ins))
    )


def zonotope_volume_expected(spec: ZonotopeSpec) -> float:
    """n! (3/d)^(n/2) / Gamma(1 + n/2) * prod sqrt(1/n_i).

    Exact for dense square Q (d = n). Returns inf rather than overflowing.
    """
    logv = log_zonotope_volume_expected(spec)
    return math.exp(logv) if logv < 709 else math.inf


def zonotope_volume_exact_2d(generators) -> float | np.ndarray:
    """Area of the planar zonotope sum_j [0, 1] g_j: sum over pairs |det(g_i, g_j)|.

    Accepts (k, 2) or a batch (..., k, 2).
    """
    g = np.asarray(generators, dtype=np.float64)
    x, y = g[..., :, 0], g[..., :, 1]
    cross = x[..., :, None] * y[..., None, :] - y[..., :, None] * x[..., None, :]
    area = np.abs(np.triu(cross, k=1)).sum(axis=(-2, -1))
    return float(area) if area.ndim == 0 else area


def sample_square_blocks(spec: ZonotopeSpec, draws: int, seed) -> np.ndarray:
    """``draws`` independent n x n influence matrices, as (draws, n, n).

    One tall matrix with ``draws * n`` rows is generated; its rows are
    independent, so consecutive n-row blocks are independent draws of Q.
    """
    n = spec.n
    Q = generate(np.tile(spec.fan_ins, draws), n, spec.d, seed)
    dense = np.zeros((draws * n, n))
    rows = np.repeat(np.arange(Q.rows), Q.degree)
    dense[rows, Q.col_indices] = Q.values
    return dense.reshape(draws, n, n)


def zonotope_volume_monte_carlo(spec: ZonotopeSpec, draws: int, seed) -> np.ndarray:
    """Per-draw volumes of the zonotope spanned by the columns of Q."""
    blocks = sample_square_blocks(spec, draws, seed)
    if spec.n == 2:
        return zonotope_volume_exact_2d(np.swapaxes(blocks, 1, 2))
    # n generators in R^n span a parallelotope
    return np.abs(np.linalg.det(blocks))


# -- tau hypercube ----------------------------------------------------------

@dataclass(frozen=True)
class TauCube:
    tau: float
    active: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.active.size)


def tau_active(p, tau: float) -> np.ndarray:
    if not 0.0 <= tau <= 0.5:
        raise ValueError(f"tau must lie in [0, 0.5], got {tau}")
    p = np.asarray(p)
    return (p >= tau) & (p <= 1.0 - tau)


def tau_cube(p, tau: float) -> TauCube:
    return TauCube(tau, np.flatnonzero(tau_active(p, tau)))


def tau_dimension(p, tau: float) -> int:
    """Number of coordinates with tau <= p_j <= 1 - tau."""
    return int(np.count_nonzero(tau_active(p, tau)))


def fed_dimension_report(ps, tau: float) -> tuple[int, float]:
    """(dimension of the mean vector, mean of the dimensions).

    Both are reported; neither dominates the other in general.
    """
    ps = [np.asarray(p) for p in ps if p is not None]
    if not ps:
        return 0, 0.0
    mean = np.mean(ps, axis=0)
    return tau_dimension(mean, tau), float(np.mean([tau_dimension(p, tau) for p in ps]))


# -- sensitivity ------------------------------------------------------------

BANDS = ("interior", "centered")


def perturbation_support(p, tau: float, band: str = "interior") -> np.ndarray:
    """Coordinates that receive noise.

    ``interior``: tau <= p_j <= 1 - tau (the tau-hypercube itself).
    ``centered``: |p_j - 1/2| <= tau, so tau = 0.5 reaches every coordinate.
    """
    p = np.asarray(p)
    if band == "interior":
        return tau_active(p, tau)
    if band == "centered":
        if not 0.0 <= tau <= 0.5:
            raise ValueError(f"tau must lie in [0, 0.5], got {tau}")
        return np.abs(p - 0.5) <= tau
    raise ValueError(f"unknown band {band!r}; expected one of {BANDS}")


@dataclass(frozen=True)
class SensitivityResult:
    tau: float
    base_accuracy: float
    accuracy: float
    accuracy_std: float
    sensitivity: float
    sensitivity_std: float
    deviation: float
    deviation_std: float
    sampled_accuracy: float
    sampled_accuracy_std: float
    perturbed_coords: int


def sensitivity_probe(p, Q: InfluenceMatrix, arch, dataset, tau: float, trials: int = 10,
                      seed=0, band: str = "interior", sampled_k: int = 10) -> SensitivityResult:
    """Accuracy change of the expected network under Gaussian kicks to p.

    Each trial adds N(0, 1) noise on the support coordinates, clips back to
    [0, 1], and measures sensitivity |d acc| / acc0 and deviation
    |d acc| / ||eps||_2. Mean sampled accuracy over ``sampled_k`` masks of
    the perturbed p is logged alongside.
    """
    seed = as_seed(seed)
    arch = network.get_arch(arch)
    p = np.asarray(p, dtype=np.float64)
    support = perturbation_support(p, tau, band)
    acc0 = evaluate(p, Q, arch, dataset, "expected").mean
    accs, sens, devs, samp = [], [], [], []
    for trial in range(trials):
        rng = seed.stream(PERTURB, trial)
        eps = np.where(support, rng.standard_normal(p.size), 0.0)
        norm = float(np.linalg.norm(eps))
        if norm == 0.0:
            acc = acc0
        else:
            acc = evaluate(clip(p + eps), Q, arch, dataset, "expected").mean
        delta = abs(acc - acc0)
        accs.append(acc)
        sens.append(delta / acc0 if acc0 > 0 else 0.0)
        devs.append(delta / norm if norm > 0 else 0.0)
        if sampled_k:
            samp.append(evaluate(clip(p + eps), Q, arch, dataset, "sampled", sampled_k,
                                 rng=seed.evaluation(trial)).mean)
    samp = samp or [float("nan")]
    return SensitivityResult(
        tau=tau,
        base_accuracy=acc0,
        accuracy=float(np.mean(accs)), accuracy_std=float(np.std(accs)),
        sensitivity=float(np.mean(sens)), sensitivity_std=float(np.std(sens)),
        deviation=float(np.mean(devs)), deviation_std=float(np.std(devs)),
        sampled_accuracy=float(np.mean(samp)), sampled_accuracy_std=float(np.std(samp)),
        perturbed_coords=int(np.count_nonzero(support)),
    )
