"""Synthetic data-generating processes with closed-form oracles.

Two families are provided:

* the continuous-outcome DGP (8 Gaussian + 2 binary covariates, a linear shared
  baseline, and a Gaussian-vs-bimodal noise contrast designed so that the
  preference-optimal and mean-optimal policies disagree), and
* a hierarchical DGP with a binary primary and a Gaussian secondary outcome.

Oracles expose ``qw``, ``ql``, the per-observation ``pw``/``pl`` terms of the
efficient influence function, exact conditional samplers and policy values.
"""

import functools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate
from scipy.special import expit
from scipy.stats import norm

from ._seeds import derive_seed, rng_for
from .data import Dataset
from .distest.samplers import ConditionalSampler, FactorizedSampler, BernoulliModel

logger = logging.getLogger(__name__)

N_CONTINUOUS = 8
N_BINARY = 2
N_FEATURES = N_CONTINUOUS + N_BINARY
#: binary covariate that swaps the noise laws between arms in the heterogeneous DGP
MODIFIER_COL = 8
#: one binary and two continuous confounders for observational assignment
CONFOUNDER_COLS = (9, 0, 1)
POSITIVITY_FLOOR = 0.05
MAX_ASSIGNMENT_ATTEMPTS = 100

# sub-stream ids
_FEATURES, _ASSIGN, _SIMPLE, _MIXTURE, _COEF, _HIER = range(6)


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseConstants:
    sigma: float = 0.2
    mu_s: float = 0.3
    mu_low: float = 0.0
    mu_high: float = 3.0
    b: float = 0.85


@dataclass(frozen=True)
class SyntheticConfig:
    """Configuration of the continuous-outcome DGP.

    ``seed`` drives features, assignment and noise; ``beta_seed`` drives the
    outcome and assignment coefficients, which are shared by every dataset of
    one experiment (training repetitions and the held-out set alike).
    """

    n: int = 1000
    heterogeneous: bool = False
    observational: bool = False
    correlation_target: float = 0.0
    seed: int = 0
    beta_seed: int = None
    constants: NoiseConstants = field(default_factory=NoiseConstants)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not abs(self.correlation_target) < 1:
            raise ValueError("correlation_target must lie strictly inside (-1, 1)")
        if self.beta_seed is None:
            object.__setattr__(self, "beta_seed", self.seed)


# ---------------------------------------------------------------------------
# Noise laws
# ---------------------------------------------------------------------------

def simple_cdf(r, c=NoiseConstants()):
    return norm.cdf(r, c.mu_s, c.sigma)


def simple_ppf(u, c=NoiseConstants()):
    return norm.ppf(u, c.mu_s, c.sigma)


def mixture_cdf(r, c=NoiseConstants()):
    return c.b * norm.cdf(r, c.mu_low, c.sigma) + (1 - c.b) * norm.cdf(r, c.mu_high, c.sigma)


def mixture_pdf(r, c=NoiseConstants()):
    return c.b * norm.pdf(r, c.mu_low, c.sigma) + (1 - c.b) * norm.pdf(r, c.mu_high, c.sigma)


def mixture_ppf(u, c=NoiseConstants()):
    """Inverse CDF of the two-component mixture by vectorised bisection."""
    u = np.asarray(u, dtype=float)
    lo = np.full(u.shape, min(c.mu_low, c.mu_high) - 40 * c.sigma)
    hi = np.full(u.shape, max(c.mu_low, c.mu_high) + 40 * c.sigma)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = mixture_cdf(mid, c) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    out = np.where(u <= 0, -np.inf, out)
    return np.where(u >= 1, np.inf, out)


def mixture_mean(c=NoiseConstants()):
    return c.b * c.mu_low + (1 - c.b) * c.mu_high


def mixture_var(c=NoiseConstants()):
    m = mixture_mean(c)
    return c.sigma**2 + c.b * (c.mu_low - m) ** 2 + (1 - c.b) * (c.mu_high - m) ** 2


def win_probability(c=NoiseConstants()):
    """P(simple draw > independent mixture draw)."""
    scale = c.sigma * np.sqrt(2.0)
    return float(c.b * norm.cdf((c.mu_s - c.mu_low) / scale) + (1 - c.b) * norm.cdf((c.mu_s - c.mu_high) / scale))


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def draw_coefficients(cfg):
    """Outcome coefficients ``beta_y`` and assignment coefficients ``beta_t``."""
    rng = rng_for(cfg.beta_seed, _COEF)
    beta_y = rng.uniform(0.1, 0.5, N_FEATURES)
    beta_t = np.zeros(N_FEATURES)
    beta_t[list(CONFOUNDER_COLS)] = rng.uniform(0.2, 0.6, len(CONFOUNDER_COLS))
    return beta_y, beta_t


def gen_features(cfg):
    rng = rng_for(cfg.seed, _FEATURES)
    cont = rng.standard_normal((cfg.n, N_CONTINUOUS))
    binary = rng.integers(0, 2, (cfg.n, N_BINARY)).astype(float)
    return np.hstack([cont, binary])


def true_propensity(cfg, x):
    if not cfg.observational:
        return np.full(len(x), 0.5)
    _, beta_t = draw_coefficients(cfg)
    # centring the binary confounder makes the linear index symmetric about 0,
    # so the population mean propensity is exactly 0.5 (clamping is symmetric too)
    intercept = 0.5 * beta_t[CONFOUNDER_COLS[0]]
    logits = x @ beta_t - intercept
    return np.clip(expit(logits), POSITIVITY_FLOOR, 1 - POSITIVITY_FLOOR)


def assign_treatment(cfg, x):
    prop = true_propensity(cfg, x)
    for attempt in range(MAX_ASSIGNMENT_ATTEMPTS):
        rng = rng_for(derive_seed(cfg.seed, attempt), _ASSIGN)
        t = (rng.random(len(x)) < prop).astype(int)
        if 0 < t.sum() < len(t):
            return t, prop
        logger.debug("degenerate assignment on attempt %d, redrawing", attempt)
    raise RuntimeError(f"could not draw a treatment vector with both arms in {MAX_ASSIGNMENT_ATTEMPTS} attempts")


def baseline(cfg, x):
    beta_y, _ = draw_coefficients(cfg)
    return x @ beta_y


def _simple_treated(cfg, x):
    """True where the treated arm carries the simple Gaussian noise."""
    if cfg.heterogeneous:
        return x[:, MODIFIER_COL] == 1
    return np.ones(len(x), dtype=bool)


def _noise_draws(cfg, n):
    c = cfg.constants
    simple = rng_for(cfg.seed, _SIMPLE).normal(c.mu_s, c.sigma, n)
    rng = rng_for(cfg.seed, _MIXTURE)
    low = rng.random(n) < c.b
    mixture = np.where(low, rng.normal(c.mu_low, c.sigma, n), rng.normal(c.mu_high, c.sigma, n))
    return simple, mixture


def gen_potential_outcomes(cfg, x):
    base = baseline(cfg, x)
    simple, mixture = _noise_draws(cfg, len(x))
    st = _simple_treated(cfg, x)
    y1 = base + np.where(st, simple, mixture)
    y0 = base + np.where(st, mixture, simple)
    return y0, y1


@functools.lru_cache(maxsize=None)
def max_noise_correlation(c=NoiseConstants()):
    """Largest attainable |Pearson| between the simple and mixture noise terms.

    With the simple noise Gaussian, the copula covariance is linear in the latent
    correlation: ``cov = rho * sigma * E[Z m(Z)]`` where ``m`` is the mixture
    quantile transform of a standard normal ``Z``. The constant is evaluated in
    the mixture's own coordinates, where the integrand is smooth.
    """
    mean = mixture_mean(c)

    def integrand(r):
        u = np.clip(mixture_cdf(r, c), 1e-300, 1 - 1e-16)
        return (r - mean) * norm.ppf(u) * mixture_pdf(r, c)

    lo = min(c.mu_low, c.mu_high) - 12 * c.sigma
    hi = max(c.mu_low, c.mu_high) + 12 * c.sigma
    knots = sorted({lo, c.mu_low, 0.5 * (c.mu_low + c.mu_high), c.mu_high, hi})
    total = sum(integrate.quad(integrand, a, b, limit=200)[0] for a, b in zip(knots[:-1], knots[1:]))
    return float(total / np.sqrt(mixture_var(c)))


def latent_correlation(target, c=NoiseConstants()):
    """Gaussian-copula correlation giving Pearson ``target`` between noise terms."""
    cmax = max_noise_correlation(c)
    if abs(target) > cmax:
        raise CalibrationError(
            f"noise correlation {target} is not attainable; the attainable range is [{-cmax:.4f}, {cmax:.4f}]"
        )
    return target / cmax


def induce_correlation_copula(cfg, x, y0, y1):
    """Re-couple the control noise to the treated noise through a Gaussian copula.

    Each noise term keeps its exact marginal law (probability-integral transform
    to normal scores, mixing, and inverse transform). ``y1`` is returned as is.
    """
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    if cfg.correlation_target == 0:
        return y0.copy(), y1.copy()
    c = cfg.constants
    rho = latent_correlation(cfg.correlation_target, c)
    base = baseline(cfg, x)
    st = _simple_treated(cfg, x)
    r1, r0 = y1 - base, y0 - base
    eps = 1e-15
    u1 = np.where(st, simple_cdf(r1, c), mixture_cdf(r1, c))
    u0 = np.where(st, mixture_cdf(r0, c), simple_cdf(r0, c))
    z1 = norm.ppf(np.clip(u1, eps, 1 - eps))
    z0 = norm.ppf(np.clip(u0, eps, 1 - eps))
    v0 = norm.cdf(rho * z1 + np.sqrt(1 - rho**2) * z0)
    v0 = np.clip(v0, eps, 1 - eps)
    new_r0 = np.where(st, mixture_ppf(v0, c), simple_ppf(v0, c))
    return base + new_r0, y1.copy()


def generate(cfg):
    """Draw a full synthetic dataset (observed data plus hidden potential outcomes)."""
    x = gen_features(cfg)
    t, prop = assign_treatment(cfg, x)
    y0, y1 = gen_potential_outcomes(cfg, x)
    if cfg.correlation_target != 0:
        y0, y1 = induce_correlation_copula(cfg, x, y0, y1)
    y = np.where(t == 1, y1, y0)
    return Dataset(x, t, y, y0, y1, prop, meta={"dgp": "synthetic"})


def noise_pairs(cfg, x, y0, y1):
    """Per-unit (simple, mixture) noise pairs, whichever arm carries them."""
    base = baseline(cfg, x)
    st = _simple_treated(cfg, x)
    r0, r1 = np.ravel(y0) - base, np.ravel(y1) - base
    return np.where(st, r1, r0), np.where(st, r0, r1)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def _actions(policy, x):
    if callable(policy):
        return np.asarray(policy(x)).astype(int)
    a = np.asarray(policy)
    if a.ndim == 0:
        return np.full(len(x), int(a))
    return a.astype(int)


class OracleDgp:
    """Closed-form quantities of a DGP; subclasses implement the conditionals."""

    d = 1

    def qw(self, x):
        raise NotImplementedError

    def ql(self, x):
        raise NotImplementedError

    def delta(self, x):
        return self.qw(x) - self.ql(x)

    def optimal_action(self, x):
        return (self.delta(x) > 0).astype(int)

    def propensity(self, x):
        raise NotImplementedError

    def pw(self, x, t, y):
        raise NotImplementedError

    def pl(self, x, t, y):
        raise NotImplementedError

    def sampler(self, arm):
        raise NotImplementedError

    def value(self, policy, eval_x):
        """Oracle preference value of ``policy`` averaged over ``eval_x``."""
        a = _actions(policy, eval_x)
        return float(np.mean(a * self.qw(eval_x) + (1 - a) * self.ql(eval_x)))

    def optimal_value(self, eval_x):
        return self.value(self.optimal_action, eval_x)


class _NoiseSampler(ConditionalSampler):
    """Exact conditional law ``baseline(x) + noise`` for one arm."""

    def __init__(self, cfg, arm):
        self.cfg, self.arm = cfg, arm

    def quantile(self, x, q):
        x = np.atleast_2d(x)
        q = np.asarray(q, dtype=float)
        base = baseline(self.cfg, x)[:, None]
        st = _simple_treated(self.cfg, x)
        simple_here = st if self.arm == 1 else ~st
        c = self.cfg.constants
        qs = simple_ppf(q, c)[None, :]
        qm = mixture_ppf(q, c)[None, :]
        return base + np.where(simple_here[:, None], qs, qm)


class SyntheticOracle(OracleDgp):
    """Oracle for the continuous DGP under the strict indicator preference."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.win = win_probability(cfg.constants)

    def qw(self, x):
        x = np.atleast_2d(x)
        return np.where(_simple_treated(self.cfg, x), self.win, 1.0 - self.win)

    def ql(self, x):
        return 1.0 - self.qw(x)

    def cate(self, x):
        x = np.atleast_2d(x)
        c = self.cfg.constants
        gap = c.mu_s - mixture_mean(c)
        return np.where(_simple_treated(self.cfg, x), gap, -gap)

    def propensity(self, x):
        return true_propensity(self.cfg, np.atleast_2d(x))

    def _cdfs(self, x):
        st = _simple_treated(self.cfg, x)
        c = self.cfg.constants
        f1 = lambda r: np.where(st, simple_cdf(r, c), mixture_cdf(r, c))
        f0 = lambda r: np.where(st, mixture_cdf(r, c), simple_cdf(r, c))
        return f1, f0

    def pw(self, x, t, y):
        x = np.atleast_2d(x)
        t, r = np.asarray(t), np.ravel(y) - baseline(self.cfg, x)
        f1, f0 = self._cdfs(x)
        # treated: P(y > Y(0,x)); control: P(Y(1,x) > y)
        return np.where(t == 1, f0(r), 1.0 - f1(r))

    def pl(self, x, t, y):
        x = np.atleast_2d(x)
        t, r = np.asarray(t), np.ravel(y) - baseline(self.cfg, x)
        f1, f0 = self._cdfs(x)
        return np.where(t == 1, 1.0 - f0(r), f1(r))

    def sampler(self, arm):
        return _NoiseSampler(self.cfg, arm)


# ---------------------------------------------------------------------------
# Hierarchical DGP (binary primary, Gaussian secondary)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HierarchicalConfig:
    """Logistic primary and Gaussian secondary outcome per arm.

    Coefficients are drawn from ``U(-coef_scale, coef_scale)``; arm intercepts
    from the given ranges.
    """

    n: int = 1000
    observational: bool = False
    seed: int = 0
    beta_seed: int = None
    primary_coef_scale: float = 0.3
    primary_intercepts: tuple = (1.2, 1.4)
    secondary_coef_scale: float = 0.3
    secondary_intercepts: tuple = (0.0, 0.2)
    secondary_sd: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.beta_seed is None:
            object.__setattr__(self, "beta_seed", self.seed)

    # assignment reuses the continuous-DGP machinery
    @property
    def heterogeneous(self):
        return False

    @property
    def correlation_target(self):
        return 0.0


def hierarchical_coefficients(cfg):
    rng = rng_for(cfg.beta_seed, _HIER)
    gamma = rng.uniform(-cfg.primary_coef_scale, cfg.primary_coef_scale, (2, N_FEATURES))
    eta = rng.uniform(-cfg.secondary_coef_scale, cfg.secondary_coef_scale, (2, N_FEATURES))
    return gamma, np.asarray(cfg.primary_intercepts, float), eta, np.asarray(cfg.secondary_intercepts, float)


def hierarchical_win(p1, p0, m1, m0, sd1, sd0=None):
    """Closed-form ``E[w(Y1 | Y0)]`` under the tie-aware lexicographic win.

    ``Y_t = (A_t, B_t)`` with ``A_t ~ Bernoulli(p_t)`` and independent
    ``B_t ~ N(m_t, sd_t^2)``; ties on the continuous secondary have probability 0.
    """
    sd0 = sd1 if sd0 is None else sd0
    p_sec = norm.cdf((np.asarray(m1) - m0) / np.sqrt(np.square(sd1) + np.square(sd0)))
    tie = p1 * p0 + (1 - p1) * (1 - p0)
    return p1 * (1 - p0) + tie * p_sec


class HierarchicalOracle(OracleDgp):
    d = 2

    def __init__(self, cfg):
        self.cfg = cfg
        self.gamma, self.gamma0, self.eta, self.eta0 = hierarchical_coefficients(cfg)

    def primary_prob(self, x, arm):
        return expit(np.atleast_2d(x) @ self.gamma[arm] + self.gamma0[arm])

    def secondary_mean(self, x, arm):
        return np.atleast_2d(x) @ self.eta[arm] + self.eta0[arm]

    def _parts(self, x):
        return (self.primary_prob(x, 1), self.primary_prob(x, 0),
                self.secondary_mean(x, 1), self.secondary_mean(x, 0))

    def qw(self, x):
        p1, p0, m1, m0 = self._parts(x)
        return hierarchical_win(p1, p0, m1, m0, self.cfg.secondary_sd)

    def ql(self, x):
        # the tie-aware win splits ties evenly, so the loss probability is the exact complement
        return 1.0 - self.qw(x)

    def propensity(self, x):
        return true_propensity(self._assignment_cfg(), np.atleast_2d(x))

    def _assignment_cfg(self):
        return SyntheticConfig(n=max(self.cfg.n, 2), observational=self.cfg.observational,
                               seed=self.cfg.seed, beta_seed=self.cfg.beta_seed)

    @staticmethod
    def _win_vs(a, b, p, m, sd):
        """P((a, b) beats (A, B)) with A ~ Ber(p), B ~ N(m, sd^2)."""
        tie = a * p + (1 - a) * (1 - p)
        return a * (1 - p) + tie * norm.cdf((b - m) / sd)

    @staticmethod
    def _loses_to(a, b, p, m, sd):
        """P((A, B) beats (a, b))."""
        tie = a * p + (1 - a) * (1 - p)
        return (1 - a) * p + tie * norm.sf((b - m) / sd)

    def pw(self, x, t, y):
        x, y, t = np.atleast_2d(x), np.atleast_2d(y), np.asarray(t)
        a, b = y[:, 0], y[:, 1]
        p1, p0, m1, m0 = self._parts(x)
        sd = self.cfg.secondary_sd
        return np.where(t == 1, self._win_vs(a, b, p0, m0, sd), self._loses_to(a, b, p1, m1, sd))

    def pl(self, x, t, y):
        x, y, t = np.atleast_2d(x), np.atleast_2d(y), np.asarray(t)
        a, b = y[:, 0], y[:, 1]
        p1, p0, m1, m0 = self._parts(x)
        sd = self.cfg.secondary_sd
        return np.where(t == 1, self._loses_to(a, b, p0, m0, sd), self._win_vs(a, b, p1, m1, sd))

    def sampler(self, arm):
        oracle = self

        class _Primary(BernoulliModel):
            def predict_proba(self, x):
                return oracle.primary_prob(x, arm)

        class _Secondary(ConditionalSampler):
            def quantile(self, x, q):
                mean = oracle.secondary_mean(x, arm)[:, None]
                return mean + oracle.cfg.secondary_sd * norm.ppf(np.asarray(q, float))[None, :]

        return FactorizedSampler(_Primary(), _Secondary())


def gen_hierarchical(cfg):
    """Draw a hierarchical dataset (d = 2: binary primary, continuous secondary)."""
    oracle = HierarchicalOracle(cfg)
    acfg = oracle._assignment_cfg()
    x = gen_features(replace(acfg, n=cfg.n))
    t, prop = assign_treatment(replace(acfg, n=cfg.n), x)
    rng = rng_for(cfg.seed, _HIER)
    po = []
    for arm in (0, 1):
        a = (rng.random(cfg.n) < oracle.primary_prob(x, arm)).astype(float)
        b = rng.normal(oracle.secondary_mean(x, arm), cfg.secondary_sd)
        po.append(np.column_stack([a, b]))
    y0, y1 = po
    y = np.where((t == 1)[:, None], y1, y0)
    return Dataset(x, t, y, y0, y1, prop, meta={"dgp": "hierarchical"})


def make_oracle(cfg):
    if isinstance(cfg, HierarchicalConfig):
        return HierarchicalOracle(cfg)
    return SyntheticOracle(cfg)


def make_dataset(cfg):
    if isinstance(cfg, HierarchicalConfig):
        return gen_hierarchical(cfg)
    return generate(cfg)


# ---------------------------------------------------------------------------
# Iman-Conover reordering
# ---------------------------------------------------------------------------

def iman_conover(samples, target_rho, seed=0):
    """Reorder each column of an ``n x 2`` sample to induce a target rank correlation.

    Values are never changed, only permuted within their column, so the
    marginal multisets are preserved exactly.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError("iman_conover expects an n x 2 matrix")
    n = x.shape[0]
    if n < 10:
        raise ValueError("iman_conover needs at least 10 rows")
    if not abs(target_rho) < 1:
        raise ValueError("target_rho must lie strictly inside (-1, 1)")
    for j in range(2):
        if np.all(x[:, j] == x[0, j]):
            raise ValueError(f"column {j} is constant; rank correlation is undefined")
    rng = np.random.default_rng(seed)
    scores = norm.ppf(np.arange(1, n + 1) / (n + 1))
    score_mat = np.column_stack([rng.permutation(scores), rng.permutation(scores)])
    current = np.linalg.cholesky(np.corrcoef(score_mat, rowvar=False))
    wanted = np.linalg.cholesky(np.array([[1.0, target_rho], [target_rho, 1.0]]))
    adjusted = score_mat @ np.linalg.inv(current).T @ wanted.T
    out = np.empty_like(x)
    for j in range(2):
        ranks = np.argsort(np.argsort(adjusted[:, j], kind="stable"), kind="stable")
        out[:, j] = np.sort(x[:, j], kind="stable")[ranks]
    return out


def star_like_potential_outcomes(n, seed=0):
    """STAR-flavoured marginals: retention (binary) and math score per arm.

    Returns two ``n x 2`` matrices with columns (control, treated).
    """
    rng = np.random.default_rng(seed)
    retained = np.column_stack([rng.random(n) < 0.78, rng.random(n) < 0.81]).astype(float)
    math = np.column_stack([rng.normal(485.0, 47.0, n), rng.normal(492.0, 48.0, n)])
    return retained, math
