"""Teacher-student lab for wall-constrained linear regression.

Setup: teacher weights u ~ Unif(-a, a) per coordinate, labels shift the
effective target to u' = u + eta with eta either Unif(-sigma, sigma) or
Cauchy(scale sigma). A student trained to convergence with a hard clip
(alpha = 0) at walls +-V lands, for identity input correlation, exactly at
w = clip(u', -V, V); its per-parameter generalization error is
E[(w - u)^2].

Closed form (uniform noise, 0 <= sigma <= a, c = a - V):

    V >= a+sigma            sigma^2/3
    a-sigma <= V < a+sigma  sigma^2/3 + (c+sigma)^3 (c-sigma) / (12 a sigma)
    0 <= V < a-sigma        sigma^2/3 + c (c^2 - sigma^2) / (3 a)

derived by integrating the crossing tails of (clip(u+eta, V) - u)^2. Sanity
anchors: V=0 gives a^2/3 (constant student), V -> inf gives sigma^2/3 (no
walls), the minimum sits at V* = a - sigma/2 with value
(1 - 27 sigma/(64 a)) * sigma^2/3, and the curve returns to sigma^2/3 at
both V = a-sigma and V = a+sigma, staying strictly below in between.

Monte-Carlo estimates use the same clip semantics on fresh draws. For
uniform noise the default estimator subtracts the known-mean control
variate eta^2 (adding back sigma^2/3), which leaves exactly the crossing
contribution to be sampled; near V = a+sigma that shrinks the standard
error by orders of magnitude and is what makes three-sigma interval checks
feasible at sane sample counts.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError, NumericError
from .linalg import SeededRng, as_matrix, jacobi_eigh, sample_cauchy, sample_uniform

NOISE_KINDS = ("uniform", "cauchy")
_MC_CHUNK = 1 << 22


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "uniform"
    sigma: float = 1.0  # half-width (uniform) or scale (cauchy)

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if self.kind == "uniform" and not self.sigma >= 0:
            raise DomainError(f"uniform noise needs sigma >= 0, got {self.sigma}")
        if self.kind == "cauchy" and not self.sigma > 0:
            raise DomainError(f"cauchy noise needs scale > 0, got {self.sigma}")


@dataclass(frozen=True, eq=False)
class TeacherStudentProblem:
    dim: int
    a: float = 1.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    correlation: np.ndarray | None = None  # None means identity

    def __post_init__(self):
        if self.dim <= 0:
            raise DomainError(f"dim must be positive, got {self.dim}")
        if not self.a > 0:
            raise DomainError(f"a must be positive, got {self.a}")
        if self.correlation is not None:
            c = as_matrix(self.correlation, "correlation")
            if c.shape != (self.dim, self.dim):
                raise DomainError(
                    f"correlation must be {self.dim}x{self.dim}, got {c.shape}"
                )
            object.__setattr__(self, "correlation", c)

    def sample_teacher(self, rng: SeededRng):
        """Draws (u, u') = (teacher, noise-shifted target)."""
        u = sample_uniform(rng, -self.a, self.a, self.dim)
        if self.noise.kind == "uniform":
            if self.noise.sigma == 0.0:
                eta = np.zeros(self.dim)
            else:
                eta = sample_uniform(rng, -self.noise.sigma, self.noise.sigma, self.dim)
        else:
            eta = sample_cauchy(rng, self.noise.sigma, self.dim)
        return u, u + eta


def _check_uniform_domain(a: float, sigma: float):
    if not a > 0:
        raise DomainError(f"a must be positive, got {a}")
    if not 0 <= sigma <= a:
        raise DomainError(f"uniform closed form needs 0 <= sigma <= a, got sigma={sigma}, a={a}")


def clip_error_closed_form(a: float, sigma: float, vol: float) -> float:
    """Per-parameter error of the clipped student, uniform noise."""
    _check_uniform_domain(a, sigma)
    if not vol >= 0:
        raise DomainError(f"vol must be >= 0, got {vol}")
    base = sigma * sigma / 3.0
    if vol >= a + sigma:
        return base
    c = a - vol
    if vol >= a - sigma:
        # sigma > 0 here: sigma == 0 collapses this branch into the one above
        return base + (c + sigma) ** 3 * (c - sigma) / (12.0 * a * sigma)
    return base + c * (c * c - sigma * sigma) / (3.0 * a)


def optimal_volume(a: float, sigma: float):
    """(argmin V*, minimum error) of the closed-form curve: V* = a - sigma/2."""
    _check_uniform_domain(a, sigma)
    vol = a - sigma / 2.0
    err = (1.0 - 27.0 * sigma / (64.0 * a)) * sigma * sigma / 3.0
    return vol, err


def weight_decay_optimum(a: float, sigma: float):
    """(optimal decay lambda, its error) for multiplicative shrinkage.

    Shrinkage w = u'/(1+lambda) has error (sigma^2 + lambda^2 a^2) /
    (3 (1+lambda)^2), minimized at lambda = sigma^2/a^2 with value
    sigma^2 a^2 / (3 (sigma^2 + a^2)).
    """
    _check_uniform_domain(a, sigma)
    lam = sigma * sigma / (a * a)
    err = sigma * sigma * a * a / (3.0 * (sigma * sigma + a * a))
    return lam, err


def alpha_for_weight_decay(lam: float, step: float) -> float:
    """Per-iteration alpha whose V=0 transform matches decay rate lam.

    An Euler step of size s followed by w <- alpha*w has fixed point
    u' * alpha*s / (1 - alpha + alpha*s); alpha = 1/(1 + lam*s) makes that
    exactly u'/(1 + lam), the continuous-flow shrinkage solution.
    """
    if not lam >= 0:
        raise DomainError(f"lam must be >= 0, got {lam}")
    if not step > 0:
        raise DomainError(f"step must be positive, got {step}")
    return 1.0 / (1.0 + lam * step)


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    n_samples: int


def _moments_to_estimate(s1: float, s2: float, n: int, offset: float) -> McEstimate:
    mean = s1 / n
    var = max(s2 - s1 * s1 / n, 0.0) / (n - 1) if n > 1 else 0.0
    return McEstimate(value=offset + mean, stderr=math.sqrt(var / n), n_samples=n)


def clip_error_mc(problem: TeacherStudentProblem, vol: float, rng: SeededRng,
                  n_samples: int, control_variate: bool | None = None) -> McEstimate:
    """Unbiased MC estimate of E[(clip(u', V) - u)^2] with its stderr.

    Valid for identity correlation only (the clip is the converged alpha=0
    student there); custom-correlation problems go through
    gradient_flow_sim instead. control_variate defaults to on for uniform
    noise and is unavailable for cauchy (no finite noise variance)."""
    if problem.correlation is not None:
        raise ConfigError("clip semantics hold for identity correlation only; "
                          "use gradient_flow_sim for custom correlation")
    if not vol >= 0:
        raise DomainError(f"vol must be >= 0, got {vol}")
    if n_samples <= 1:
        raise DomainError(f"need n_samples > 1, got {n_samples}")
    if control_variate is None:
        control_variate = problem.noise.kind == "uniform"
    if control_variate and problem.noise.kind != "uniform":
        raise ConfigError("control variate requires uniform noise")

    a = problem.a
    sigma = problem.noise.sigma
    s1 = 0.0
    s2 = 0.0
    done = 0
    while done < n_samples:
        k = min(_MC_CHUNK, n_samples - done)
        u = sample_uniform(rng, -a, a, k)
        if problem.noise.kind == "uniform":
            eta = np.zeros(k) if sigma == 0.0 else sample_uniform(rng, -sigma, sigma, k)
        else:
            eta = sample_cauchy(rng, sigma, k)
        if control_variate:
            z = _kernels.clip_sq_cv_values(u, eta, float(vol))
        else:
            z = _kernels.clip_sq_values(u, eta, float(vol))
        # reduce here in numpy: the kernels are elementwise on purpose, so
        # the summation tree is backend-independent
        s1 += float(z.sum())
        s2 += float((z * z).sum())
        done += k
    offset = sigma * sigma / 3.0 if control_variate else 0.0
    return _moments_to_estimate(s1, s2, n_samples, offset)


def weight_decay_error_mc(a: float, sigma: float, lam: float, rng: SeededRng,
                          n_samples: int) -> McEstimate:
    """MC estimate of E[(u'/(1+lam) - u)^2] for uniform noise."""
    _check_uniform_domain(a, sigma)
    if not lam >= 0:
        raise DomainError(f"lam must be >= 0, got {lam}")
    if n_samples <= 1:
        raise DomainError(f"need n_samples > 1, got {n_samples}")
    u = sample_uniform(rng, -a, a, n_samples)
    eta = np.zeros(n_samples) if sigma == 0.0 else sample_uniform(rng, -sigma, sigma, n_samples)
    e = ((u + eta) / (1.0 + lam) - u) ** 2
    return _moments_to_estimate(float(e.sum()), float((e * e).sum()), n_samples, 0.0)


@dataclass(eq=False)
class FlowResult:
    error: float
    vol: float
    alpha: float
    iterations: int
    converged: bool
    last_delta: float
    w: np.ndarray
    u: np.ndarray
    u_prime: np.ndarray


def gradient_flow_sim(problem: TeacherStudentProblem, vol: float, alpha: float,
                      rng: SeededRng, step: float | None = None,
                      max_steps: int = 100000, tol: float = 1e-10,
                      overshoot_policy: str = "leave") -> FlowResult:
    """Explicit-Euler residual flow with the wall transform each iteration.

    Student starts at w = 0 and follows w <- w - step*A(w - u'), then the
    transform. The default step is 0.1/lambda_max(A); steps at or beyond
    2/lambda_max are rejected (explicit Euler would not contract). Stops
    when the max elementwise change drops below tol.
    """
    if not vol >= 0:
        raise DomainError(f"vol must be >= 0, got {vol}")
    if not -1.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [-1, 1], got {alpha}")
    u, u_prime = problem.sample_teacher(rng)
    w = np.zeros(problem.dim)
    clamp = overshoot_policy == "clamp"

    if problem.correlation is None:
        lam_max = 1.0
    else:
        vals, _ = jacobi_eigh(problem.correlation)
        if vals[0] <= 0:
            raise DomainError(f"correlation must be SPD; min eigenvalue {vals[0]:.3e}")
        lam_max = float(vals[-1])
    if step is None:
        step = 0.1 / lam_max
    if not 0 < step * lam_max < 2.0:
        raise DomainError(
            f"explicit Euler needs 0 < step*lambda_max < 2, got {step * lam_max}"
        )

    converged = False
    delta = math.inf
    it = 0
    if problem.correlation is None:
        for it in range(1, max_steps + 1):
            delta = _kernels.flow_iter_identity(w, u_prime, step, float(vol),
                                                float(alpha), clamp)
            if not math.isfinite(delta) or delta > 1e12:
                raise NumericError(f"flow diverged at iteration {it}: max step {delta:.3e}")
            if delta < tol:
                converged = True
                break
    else:
        mom = np.zeros(problem.dim)
        corr = problem.correlation
        for it in range(1, max_steps + 1):
            w_old = w.copy()
            w -= step * _kernels.matvec(corr, w - u_prime)
            _kernels.volumize(w, mom, float(vol), float(alpha), clamp)
            delta = float(np.abs(w - w_old).max())
            if not math.isfinite(delta) or delta > 1e12:
                raise NumericError(f"flow diverged at iteration {it}: max step {delta:.3e}")
            if delta < tol:
                converged = True
                break

    err = float(((w - u) ** 2).mean())
    return FlowResult(error=err, vol=float(vol), alpha=float(alpha), iterations=it,
                      converged=converged, last_delta=float(delta),
                      w=w, u=u, u_prime=u_prime)


@dataclass(eq=False)
class ErrorCurve:
    """One method's error across a V grid, with CSV-ready metadata."""

    method: str
    a: float
    sigma: float
    vols: np.ndarray
    errors: np.ndarray
    stderrs: np.ndarray
    n_samples: int
    seed: int

    def argmin_vol(self) -> float:
        return float(self.vols[int(np.argmin(self.errors))])

    def rows(self):
        for v, e, s in zip(self.vols, self.errors, self.stderrs):
            yield {
                "method": self.method,
                "a": self.a,
                "sigma": self.sigma,
                "V": float(v),
                "error": float(e),
                "stderr": float(s),
                "n_samples": self.n_samples,
                "seed": self.seed,
            }


CURVE_CSV_HEADER = ("method", "a", "sigma", "V", "error", "stderr", "n_samples", "seed")


def closed_form_curve(a: float, sigma: float, vols) -> ErrorCurve:
    vols = np.asarray(vols, dtype=np.float64)
    errs = np.array([clip_error_closed_form(a, sigma, v) for v in vols])
    return ErrorCurve("closed_form", a, sigma, vols, errs, np.zeros_like(errs), 0, 0)


def mc_curve(a: float, sigma: float, vols, seed: int, n_samples: int,
             kind: str = "uniform") -> ErrorCurve:
    """MC error across a V grid; each point gets a seed-derived substream."""
    vols = np.asarray(vols, dtype=np.float64)
    problem = TeacherStudentProblem(dim=1, a=a, noise=NoiseSpec(kind, sigma))
    base = SeededRng(seed)
    errs = np.empty_like(vols)
    ses = np.empty_like(vols)
    for i, v in enumerate(vols):
        est = clip_error_mc(problem, float(v), base.spawn("mc-curve", i), n_samples)
        errs[i] = est.value
        ses[i] = est.stderr
    return ErrorCurve("monte_carlo", a, sigma, vols, errs, ses, n_samples, seed)


def flow_curve(a: float, sigma: float, vols, seed: int, dim: int,
               alpha: float = 0.0, kind: str = "uniform") -> ErrorCurve:
    """Gradient-flow error across a V grid with common random numbers.

    Every V point replays the same teacher draw (same spawned stream), so
    the curve's shape, and in particular its argmin, is not washed out by
    independent sampling noise between neighboring grid points.
    """
    vols = np.asarray(vols, dtype=np.float64)
    problem = TeacherStudentProblem(dim=dim, a=a, noise=NoiseSpec(kind, sigma))
    base = SeededRng(seed)
    errs = np.empty_like(vols)
    for i, v in enumerate(vols):
        res = gradient_flow_sim(problem, float(v), alpha, base.spawn("flow-curve"))
        errs[i] = res.error
    se = np.zeros_like(errs)
    return ErrorCurve("gradient_flow", a, sigma, vols, errs, se, dim, seed)


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    vol: float
    error: float
    stderr: float
    n_samples: int
    note: str = ""


@dataclass(eq=False)
class ComparisonTable:
    a: float
    scale: float
    seed: int
    rows: list

    def best_volumization(self) -> ComparisonRow:
        vrows = [r for r in self.rows if r.method == "volumization"]
        return min(vrows, key=lambda r: r.error)

    def csv_rows(self):
        for r in self.rows:
            yield {
                "method": r.method,
                "a": self.a,
                "sigma": self.scale,
                "V": r.vol,
                "error": r.error,
                "stderr": r.stderr,
                "n_samples": r.n_samples,
                "seed": self.seed,
            }


def unregularized_prefix_errors(rng: SeededRng, scale: float, prefix_ns):
    """Truncated-sample mean of eta^2 over growing prefixes of one stream.

    The population mean does not exist for cauchy noise, so these estimates
    have no limit; they grow (erratically) with sample count, which is the
    behavior the comparison table records."""
    n_max = max(prefix_ns)
    eta = sample_cauchy(rng, scale, n_max)
    sq = eta * eta
    csum = np.cumsum(sq)
    return [float(csum[n - 1] / n) for n in prefix_ns]


def cauchy_comparison(a: float = 1.0, scale: float = 1.0, vol_grid=None,
                      n_samples: int = 10**6, seed: int = 0) -> ComparisonTable:
    """Heavy-tail showdown: no regularization vs shrinkage vs walls.

    Unregularized rows report the (divergent) truncated-sample estimate at
    several prefix sizes of one stream. Weight decay has no finite optimum
    when the noise variance does not exist; its row reports the constant
    -model limit a^2/3 exactly. Volumization rows are clip-MC estimates per
    grid V; all remain bounded.
    """
    if not a > 0:
        raise DomainError(f"a must be positive, got {a}")
    if vol_grid is None:
        vol_grid = np.round(np.arange(0.05, 2.0001, 0.05), 10)
    base = SeededRng(seed)
    rows = []

    prefix_ns = sorted({10**4, 10**5, min(10**6, n_samples), n_samples})
    prefix_ns = [n for n in prefix_ns if n <= n_samples]
    for n, est in zip(prefix_ns,
                      unregularized_prefix_errors(base.spawn("unreg"), scale, prefix_ns)):
        rows.append(ComparisonRow("unregularized", math.inf, est, math.nan, n,
                                  "heavy-tail: truncated-sample estimate, grows with n"))

    rows.append(ComparisonRow("weight_decay", 0.0, a * a / 3.0, 0.0, 0,
                              "constant-model limit: noise variance undefined"))

    problem = TeacherStudentProblem(dim=1, a=a, noise=NoiseSpec("cauchy", scale))
    for i, v in enumerate(vol_grid):
        est = clip_error_mc(problem, float(v), base.spawn("vol", i), n_samples)
        rows.append(ComparisonRow("volumization", float(v), est.value, est.stderr,
                                  n_samples, ""))
    return ComparisonTable(a=a, scale=scale, seed=seed, rows=rows)
