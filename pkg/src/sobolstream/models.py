"""Analytic test models: sampling, evaluation, and ground-truth indices.

Each model pairs input sampling laws with a scalar output function and, where
available, closed-form first-order indices. The sampling-based oracle
(:func:`oracle_indices`) provides ground truth for models without closed
forms and cross-validates the ones that have them.

Sampling is reproducible bit for bit: every input column draws from its own
Philox counter stream (spawned from the run seed), and the continuous laws
map raw uniform draws through deterministic inverse-CDF transforms, so the
matrices do not depend on thread count or platform math-library quirks. The
gamma law is the exception: it uses the generator's native gamma sampler for
speed, which consumes a data-dependent number of raw draws.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .errors import DataError, NoClosedFormError, ParameterError
from .partition import Partition

_INV_TWO53 = 1.0 / 2.0**53

_LAW_KINDS = ("uniform", "normal", "exponential", "gamma", "spike_slab")
_MODEL_KINDS = ("polynomial", "sobol_g", "ishigami", "gamma_output", "linear")

_SOBOL_G_BLOCK = 128


def _open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    """Uniform draws strictly inside (0, 1), one 53-bit raw per element."""
    raw = rng.integers(0, 2**53, size=size, dtype=np.uint64)
    return (raw.astype(np.float64) + 0.5) * _INV_TWO53


@dataclass(frozen=True)
class InputLaw:
    """A one-dimensional input distribution."""

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in _LAW_KINDS:
            raise ParameterError(f"unknown input law {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        p = self.params
        if self.kind == "uniform" and not p[0] < p[1]:
            raise ParameterError(f"uniform law needs lo < hi, got {p}")
        if self.kind == "normal" and p[1] <= 0:
            raise ParameterError(f"normal law needs sigma > 0, got {p[1]}")
        if self.kind == "exponential" and p[0] <= 0:
            raise ParameterError(f"exponential law needs rate > 0, got {p[0]}")
        if self.kind == "gamma" and (p[0] <= 0 or p[1] <= 0):
            raise ParameterError(f"gamma law needs alpha, theta > 0, got {p}")
        if self.kind == "spike_slab" and not (0.0 <= p[0] <= 1.0 and p[2] > 0):
            raise ParameterError(f"spike_slab law needs 0 <= p <= 1, sigma > 0, got {p}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            lo, hi = self.params
            return lo + (hi - lo) * _open_uniform(rng, n)
        if self.kind == "normal":
            mu, sigma = self.params
            return mu + sigma * special.ndtri(_open_uniform(rng, n))
        if self.kind == "exponential":
            (rate,) = self.params
            return -np.log1p(-_open_uniform(rng, n)) / rate
        if self.kind == "gamma":
            alpha, theta = self.params
            return rng.standard_gamma(alpha, size=n) * theta
        # spike_slab: Bernoulli(p) gate times Normal(mu, sigma), two raws each
        p, mu, sigma = self.params
        u = _open_uniform(rng, (n, 2))
        gate = u[:, 0] < p
        return gate * (mu + sigma * special.ndtri(u[:, 1]))

    def label(self) -> str:
        return f"{self.kind}({', '.join(repr(p) for p in self.params)})"


def uniform(lo: float = 0.0, hi: float = 1.0) -> InputLaw:
    return InputLaw("uniform", (lo, hi))


def normal(mu: float = 0.0, sigma: float = 1.0) -> InputLaw:
    return InputLaw("normal", (mu, sigma))


def exponential(rate: float = 1.0) -> InputLaw:
    return InputLaw("exponential", (rate,))


def gamma_law(alpha: float, theta: float) -> InputLaw:
    return InputLaw("gamma", (alpha, theta))


def spike_slab(p: float = 0.5, mu: float = 1.0, sigma: float = 1.0) -> InputLaw:
    """Point mass at zero with probability 1-p, else Normal(mu, sigma)."""
    return InputLaw("spike_slab", (p, mu, sigma))


@dataclass(frozen=True)
class ModelSpec:
    """A test model: input laws, coefficients, and an output function kind."""

    kind: str
    laws: tuple
    coeffs: tuple

    def __post_init__(self):
        if self.kind not in _MODEL_KINDS:
            raise ParameterError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "laws", tuple(self.laws))
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @property
    def d(self) -> int:
        return len(self.laws)

    def key(self) -> str:
        """Stable identity string (used for oracle caching)."""
        laws = ";".join(law.label() for law in self.laws)
        return f"{self.kind}|d={self.d}|coeffs={self.coeffs}|laws={laws}"


_POLY_LAWS = {
    "uniform": lambda p, mu, sigma: uniform(0.0, 1.0),
    "normal": lambda p, mu, sigma: normal(0.0, 1.0),
    "exponential": lambda p, mu, sigma: exponential(1.0),
    "spike_slab": spike_slab,
}
_POLY_DEFAULT_COEFFS = {
    "uniform": (1.0, 1.0, 10.0),
    "normal": (1.0, 1.0, 1.0),
    "exponential": (1.0, 1.0, 10.0),
    "spike_slab": (1.0, 1.0, 1.0),
}


def polynomial(
    law: str = "uniform",
    a: float | None = None,
    b: float | None = None,
    c: float | None = None,
    p: float = 0.5,
    mu: float = 1.0,
    sigma: float = 1.0,
) -> ModelSpec:
    """``y = a*x1 + b*x2**2 + c*x1*x2`` with an uninfluential third input.

    All three inputs share one law; coefficient defaults depend on the law so
    both active inputs keep nonnegligible indices.
    """
    if law not in _POLY_LAWS:
        raise ParameterError(f"polynomial law must be one of {sorted(_POLY_LAWS)}")
    defaults = _POLY_DEFAULT_COEFFS[law]
    coeffs = (
        defaults[0] if a is None else a,
        defaults[1] if b is None else b,
        defaults[2] if c is None else c,
    )
    one = _POLY_LAWS[law](p, mu, sigma)
    return ModelSpec("polynomial", (one, one, one), coeffs)


def sobol_g(d: int = 1000) -> ModelSpec:
    """Product model ``prod_i (|4*x_i - 2| + a_i) / (1 + a_i)``, ``a_i = sqrt(i - 1)``.

    The coefficients grow fast enough that only the first few inputs carry
    significant indices even for very large ``d``; the rest sit near zero,
    which makes this the canonical stress test for noise screening.
    """
    if d < 1:
        raise ParameterError(f"sobol_g needs d >= 1, got {d}")
    return ModelSpec("sobol_g", (uniform(0.0, 1.0),) * d, ())


def ishigami(a: float = 7.0, b: float = 0.1) -> ModelSpec:
    """``y = sin(x1) + a*sin(x2)**2 + b*x3**4*sin(x1)`` on Uniform[-pi, pi]^3."""
    return ModelSpec("ishigami", (uniform(-np.pi, np.pi),) * 3, (a, b))


def gamma_output(alpha: float = 0.1) -> ModelSpec:
    """Gamma-distributed output with unit variance plus one uninfluential input.

    The output is drawn directly as ``Gamma(alpha, theta)`` with
    ``theta = alpha**-0.5`` (so the variance is exactly 1 and the skewness
    ``2 * alpha**-0.5``); it rides along as the second input column and the
    evaluation simply projects it out. Input 0 is a dummy Uniform(0, 1) used
    to probe the zero-index noise distribution.
    """
    if alpha <= 0:
        raise ParameterError(f"gamma_output needs alpha > 0, got {alpha}")
    theta = alpha**-0.5
    return ModelSpec("gamma_output", (uniform(0.0, 1.0), gamma_law(alpha, theta)), (alpha,))


def linear_model(d: int = 10_000, active: int = 10) -> ModelSpec:
    """Sparse linear model over many Uniform(0, 1) inputs.

    ``active`` evenly spaced inputs enter with weights ``1/(j+1)``; all other
    inputs are inert. Intended for large-d runtime and memory studies.
    """
    if not 1 <= active <= d:
        raise ParameterError(f"need 1 <= active <= d, got active={active}, d={d}")
    return ModelSpec("linear", (uniform(0.0, 1.0),) * d, (float(active),))


def _linear_positions_weights(spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    active = int(spec.coeffs[0])
    positions = (np.arange(active) * (spec.d // active)).astype(np.int64)
    weights = 1.0 / (np.arange(active) + 1.0)
    return positions, weights


def _column_seeds(seed: int, d: int) -> list:
    return np.random.SeedSequence(seed).spawn(d)


def sample_inputs(spec: ModelSpec, n: int, seed: int) -> np.ndarray:
    """Draw an ``n x d`` input matrix, one independent stream per column.

    Identical ``(spec, n, seed)`` reproduce the same matrix exactly. The
    returned array stores columns contiguously, which downstream per-column
    binning exploits.
    """
    if n < 1:
        raise ParameterError(f"need n >= 1, got {n}")
    buf = np.empty((spec.d, n), dtype=np.float64)
    for i, child in enumerate(_column_seeds(seed, spec.d)):
        rng = np.random.Generator(np.random.Philox(child))
        buf[i, :] = spec.laws[i].sample(rng, n)
    return buf.T


class ModelSampleStream:
    """Batch-by-batch sample generator with persistent per-column streams.

    For laws drawn by inverse CDF (one raw draw per element) the emitted
    samples do not depend on where batch boundaries fall; the gamma law's
    native sampler consumes a variable number of raws, so gamma streams are
    reproducible per (seed, batching) rather than per seed alone.
    """

    def __init__(self, spec: ModelSpec, seed: int):
        self.spec = spec
        self._rngs = [
            np.random.Generator(np.random.Philox(child))
            for child in _column_seeds(seed, spec.d)
        ]
        self.emitted = 0

    def next_batch(self, b: int) -> tuple[np.ndarray, np.ndarray]:
        if b < 0:
            raise ParameterError(f"batch size must be nonnegative, got {b}")
        buf = np.empty((self.spec.d, b), dtype=np.float64)
        for i, rng in enumerate(self._rngs):
            buf[i, :] = self.spec.laws[i].sample(rng, b)
        x = buf.T
        self.emitted += b
        return x, evaluate(self.spec, x)


def evaluate(spec: ModelSpec, x) -> np.ndarray:
    """Pointwise model outputs for an ``n x d`` input matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.d:
        raise DataError(
            f"expected an n x {spec.d} matrix for {spec.kind}, got shape {x.shape}"
        )
    if spec.kind == "polynomial":
        a, b, c = spec.coeffs
        return a * x[:, 0] + b * np.square(x[:, 1]) + c * x[:, 0] * x[:, 1]
    if spec.kind == "sobol_g":
        out = np.ones(x.shape[0], dtype=np.float64)
        a = np.sqrt(np.arange(spec.d, dtype=np.float64))
        for j in range(0, spec.d, _SOBOL_G_BLOCK):
            blk = x[:, j : j + _SOBOL_G_BLOCK]
            ab = a[j : j + blk.shape[1]]
            out *= np.prod((np.abs(4.0 * blk - 2.0) + ab) / (1.0 + ab), axis=1)
        return out
    if spec.kind == "ishigami":
        a, b = spec.coeffs
        s1 = np.sin(x[:, 0])
        return s1 + a * np.square(np.sin(x[:, 1])) + b * np.power(x[:, 2], 4) * s1
    if spec.kind == "gamma_output":
        return x[:, 1].copy()
    positions, weights = _linear_positions_weights(spec)
    return x[:, positions] @ weights


def analytic_indices(spec: ModelSpec) -> tuple[float, np.ndarray]:
    """Exact output variance and first-order indices, where closed forms exist.

    Raises :class:`NoClosedFormError` for the spike-slab polynomial, whose
    indices come from :func:`oracle_indices` instead.
    """
    if spec.kind == "polynomial":
        a, b, c = spec.coeffs
        law = spec.laws[0].kind
        if law == "uniform":
            v = a**2 / 12 + a * c / 12 + 4 * b**2 / 45 + b * c / 12 + 7 * c**2 / 144
            s1v = a**2 / 12 + a * c / 12 + c**2 / 48
            s2v = 4 * b**2 / 45 + b * c / 12 + c**2 / 48
        elif law == "normal":
            v = a**2 + 2 * b**2 + c**2
            s1v = a**2
            s2v = 2 * b**2
        elif law == "exponential":
            v = a**2 + 2 * a * c + 20 * b**2 + 8 * b * c + 3 * c**2
            s1v = a**2 + 2 * a * c + c**2
            s2v = 20 * b**2 + 8 * b * c + c**2
        else:
            raise NoClosedFormError(
                "spike-slab polynomial has no closed-form indices; "
                "use oracle_indices"
            )
        return float(v), np.array([s1v / v, s2v / v, 0.0])
    if spec.kind == "sobol_g":
        a = np.sqrt(np.arange(spec.d, dtype=np.float64))
        vi = (1.0 / 3.0) / np.square(1.0 + a)
        v = float(np.prod(1.0 + vi) - 1.0)
        return v, vi / v
    if spec.kind == "ishigami":
        a, b = spec.coeffs
        pi4 = np.pi**4
        v = a**2 / 8 + b * pi4 / 5 + b**2 * np.pi**8 / 18 + 0.5
        s1 = 0.5 * (1.0 + b * pi4 / 5) ** 2 / v
        s2 = a**2 / 8 / v
        return float(v), np.array([s1, s2, 0.0])
    if spec.kind == "gamma_output":
        alpha = spec.coeffs[0]
        theta = spec.laws[1].params[1]
        return float(alpha * theta**2), np.array([0.0, 1.0])
    positions, weights = _linear_positions_weights(spec)
    vi = np.square(weights) / 12.0
    v = float(vi.sum())
    s = np.zeros(spec.d)
    s[positions] = vi / v
    return v, s


def oracle_indices(
    spec: ModelSpec,
    n_oracle: int = 10_000_000,
    seed: int = 190_753,
    n_bins: int = 10_000,
    cache_dir=None,
) -> tuple[float, np.ndarray]:
    """Sampling-based ground-truth indices via very fine sort-and-split binning.

    Sorts the samples along each input and splits them into ``n_bins``
    near-equal groups (no explicit edges), so the computation shares nothing
    with the streaming estimator beyond arithmetic. Intended as test ground
    truth: with the defaults the estimates carry at least two significant
    digits. Results are cached as JSON under ``cache_dir`` when given.
    """
    cache_path = None
    if cache_dir is not None:
        key = json.dumps(
            {"spec": spec.key(), "n": n_oracle, "seed": seed, "bins": n_bins}
        )
        digest = hashlib.sha256(key.encode()).hexdigest()[:24]
        cache_path = Path(cache_dir) / f"oracle_{digest}.json"
        if cache_path.exists():
            payload = json.loads(cache_path.read_text())
            return payload["v"], np.asarray(payload["s"], dtype=np.float64)

    x = sample_inputs(spec, n_oracle, seed)
    y = evaluate(spec, x)
    n = y.size
    starts = (n * np.arange(n_bins)) // n_bins
    counts = np.diff(np.append(starts, n))
    vhat = float(y.var(ddof=1))
    s = np.empty(spec.d, dtype=np.float64)
    for i in range(spec.d):
        order = np.argsort(x[:, i])
        y_sorted = y[order]
        sums = np.add.reduceat(y_sorted, starts)
        means = sums / counts
        dev2 = np.square(y_sorted - np.repeat(means, counts))
        uv = np.add.reduceat(dev2, starts)
        within = np.where(counts >= 2, uv / np.maximum(counts - 1, 1), 0.0)
        ev = float((within * counts).sum() / n)
        s[i] = 1.0 - ev / vhat

    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        cache_path.write_text(
            json.dumps({"key": json.loads(key), "v": vhat, "s": list(map(float, s))})
        )
    return vhat, s


def _polynomial_conditional_variance(spec: ModelSpec, i: int):
    """Pointwise ``Var(y | x_i = t)`` for the standard-normal polynomial."""
    a, b, c = spec.coeffs
    if i == 0:
        return lambda t: 2.0 * b**2 + (c * t) ** 2
    if i == 1:
        return lambda t: (a + c * t) ** 2
    if i == 2:
        total = a**2 + 2.0 * b**2 + c**2
        return lambda t: total
    raise ParameterError(f"input index must be 0, 1, or 2, got {i}")


def exact_bin_statistics(
    spec: ModelSpec, i: int, partition: Partition, epsabs: float = 1e-8
) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-bin conditional statistics for the normal polynomial.

    For each bin ``A_k`` of ``partition`` (outer edges at +-inf), returns
    ``E[Var(y | x_i) | x_i in A_k]`` by adaptive quadrature of the pointwise
    conditional variance against the standard normal density, together with
    the exact bin probability ``P(A_k)``. These are the quantities the binned
    estimator approximates with within-bin sample variances and empirical
    weights, so their products expose the partition-induced bias bin by bin.
    """
    if spec.kind != "polynomial" or spec.laws[0].kind != "normal":
        raise NoClosedFormError(
            "exact bin statistics require the polynomial model with normal inputs"
        )
    condvar = _polynomial_conditional_variance(spec, i)
    bounds = np.concatenate(([-np.inf], partition.interior_edges, [np.inf]))
    cdf = special.ndtr(bounds[1:-1])
    p = np.diff(np.concatenate(([0.0], cdf, [1.0])))

    def integrand(t):
        return condvar(t) * np.exp(-0.5 * t * t) / np.sqrt(2.0 * np.pi)

    ev = np.empty(p.size, dtype=np.float64)
    for k in range(p.size):
        integral, _ = integrate.quad(
            integrand, bounds[k], bounds[k + 1], epsabs=epsabs, limit=200
        )
        ev[k] = integral / p[k] if p[k] > 0 else 0.0
    return ev, p
