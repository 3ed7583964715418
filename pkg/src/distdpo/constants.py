"""Monte Carlo estimates of the DPO optimisation constants, plus numerical oracles.

The constants follow the trajectory-level analysis of the DPO loss:

* ``zeta_phi_sq`` bounds the per-step score second moment ``E||nu(h)||^2``;
* ``varsigma`` and ``c0`` describe geometric decay of lagged score correlations;
* ``c_mix = 1 + 2 c0 varsigma / (1 - varsigma)``;
* ``L = (beta^2 c_mix + 2 beta) zeta_phi_sq H`` (smoothness);
* ``zeta_g_sq = 4 beta^2 c_mix zeta_phi_sq H`` (gradient second moment).

Estimates come with "inflated" variants that replace each Monte Carlo mean by
its mean plus three standard errors.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .env import FeatureTable, Instance, MdpSpec, policy_tables, sample_trajectories

VARSIGMA_CAP = 1.0 - 1e-6
MAX_HESSIAN_DIM = 64


# --- analytic formulas ------------------------------------------------------


def mixing_factor(c0: float, varsigma: float) -> float:
    return 1.0 + 2.0 * c0 * varsigma / (1.0 - varsigma)


def smoothness_constant(beta: float, c_mix: float, zeta_phi_sq: float, horizon: int) -> float:
    if beta <= 0 or c_mix <= 0 or horizon <= 0 or zeta_phi_sq < 0:
        raise ValueError("smoothness_constant needs positive beta, c_mix, H and nonnegative zeta_phi_sq")
    return (beta**2 * c_mix + 2.0 * beta) * zeta_phi_sq * horizon


def variance_bound(beta: float, c_mix: float, zeta_phi_sq: float, horizon: int) -> float:
    if beta <= 0 or c_mix <= 0 or horizon <= 0 or zeta_phi_sq < 0:
        raise ValueError("variance_bound needs positive beta, c_mix, H and nonnegative zeta_phi_sq")
    return 4.0 * beta**2 * c_mix * zeta_phi_sq * horizon


# --- score moments ----------------------------------------------------------


def _step_scores(spec: MdpSpec, feats: FeatureTable, theta, num_samples, rng, sampling_theta=None):
    """Per-step scores at ``theta`` along rollouts of ``sampling_theta`` (default: on-policy)."""
    src = theta if sampling_theta is None else sampling_theta
    states, actions = sample_trajectories(spec, feats, src, num_samples, rng)
    return policy_tables(feats, theta).score[states, actions]  # (n, H, d)


@dataclass(frozen=True)
class ZetaPhiEstimate:
    value: float  # max_h of the sample mean of ||nu(h)||^2
    ucb: float  # max_h of mean + 3 standard errors
    pointwise_bound: float  # max_{s,u} ||step_score(s,u)||^2
    num_samples: int

    def __float__(self):
        return self.value


def _zeta_from_scores(nu: np.ndarray, pointwise: float) -> ZetaPhiEstimate:
    n = nu.shape[0]
    sq = np.einsum("nhd,nhd->nh", nu, nu)
    mean = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return ZetaPhiEstimate(float(mean.max()), float((mean + 3 * se).max()), pointwise, n)


def estimate_zeta_phi_sq(spec, feats, theta, num_samples, rng, sampling_theta=None) -> ZetaPhiEstimate:
    if num_samples < 1:
        raise ValueError("num_samples must be at least 1")
    score = policy_tables(feats, theta).score
    pointwise = float(np.einsum("sad,sad->sa", score, score).max())
    return _zeta_from_scores(_step_scores(spec, feats, theta, num_samples, rng, sampling_theta), pointwise)


@dataclass(frozen=True)
class MixingEstimate:
    varsigma: float
    c0: float
    degenerate: bool
    varsigma_ucb: float
    c0_ucb: float
    lag_cov: np.ndarray = field(repr=False)  # lag k = 1..H-1
    lag_se: np.ndarray = field(repr=False)
    noise_floor: float = 0.0

    @property
    def c_mix(self) -> float:
        return mixing_factor(self.c0, self.varsigma)

    @property
    def c_mix_ucb(self) -> float:
        return mixing_factor(self.c0_ucb, self.varsigma_ucb)


def lag_covariances(nu: np.ndarray):
    """Mean over ``h`` of ``E<nu(h) - mean_h, nu(h+k) - mean_{h+k}>`` with standard errors."""
    n, H, _ = nu.shape
    centered = nu - nu.mean(axis=0, keepdims=True)
    cov = np.zeros(H - 1)
    se = np.zeros(H - 1)
    for k in range(1, H):
        per_sample = np.einsum("nhd,nhd->nh", centered[:, :-k], centered[:, k:]).mean(axis=1)
        cov[k - 1] = per_sample.mean()
        se[k - 1] = per_sample.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
    return cov, se


def _fit_decay(lags: np.ndarray, magnitude: np.ndarray, zeta: float):
    """Rate from a log-linear fit, then the smallest ``c0`` whose envelope covers every point."""
    if len(lags) == 1:
        rate = (magnitude[0] / zeta) ** (1.0 / lags[0]) if zeta > 0 else 0.0
    else:
        slope = np.polyfit(lags, np.log(magnitude), 1)[0]
        rate = float(np.exp(slope))
    rate = float(np.clip(rate, 0.0, VARSIGMA_CAP))
    if rate == 0.0 or zeta <= 0:
        return rate, 1.0
    c0 = float(np.max(magnitude / (zeta * rate**lags)))
    return rate, max(c0, 1.0)


def estimate_mixing(spec, feats, theta, num_samples, rng, sampling_theta=None) -> MixingEstimate:
    """Fit ``|cov_k| <= c0 varsigma^k zeta_phi_sq`` to lagged score covariances.

    Lags whose covariance magnitude does not exceed ``3/sqrt(n) * zeta_phi_sq``
    are treated as noise.  If no lag survives, the steps are taken to be
    independent: ``varsigma = 0``, ``c0 = 1`` and ``degenerate`` is set.
    """
    if spec.horizon < 2:
        raise ValueError("mixing needs a horizon of at least 2")
    nu = _step_scores(spec, feats, theta, num_samples, rng, sampling_theta)
    zeta = _zeta_from_scores(nu, 0.0)
    cov, se = lag_covariances(nu)
    floor = 3.0 / np.sqrt(num_samples) * zeta.value
    lags = np.arange(1, spec.horizon, dtype=float)
    keep = np.abs(cov) > floor
    if not keep.any() or zeta.value <= 0:
        return MixingEstimate(0.0, 1.0, True, 0.0, 1.0, cov, se, floor)
    rate, c0 = _fit_decay(lags[keep], np.abs(cov[keep]), zeta.value)
    rate_u, c0_u = _fit_decay(lags[keep], np.abs(cov[keep]) + 3 * se[keep], zeta.value)
    return MixingEstimate(rate, c0, False, max(rate, rate_u), max(c0, c0_u), cov, se, floor)


# --- heterogeneity ----------------------------------------------------------


def gradient_diversity(grads, weights=None) -> float:
    """``(1/N) sum_i ||g - g_i||^2`` where ``g`` is the weighted mean of the rows."""
    G = np.asarray(grads, dtype=float)
    if G.shape[0] < 2:
        raise ValueError("gradient diversity needs at least two clients")
    w = np.full(G.shape[0], 1.0 / G.shape[0]) if weights is None else np.asarray(weights, float) / np.sum(weights)
    dev = G - w @ G
    return float(np.einsum("nd,nd->n", dev, dev).mean())


def estimate_kappa_sq(clients, spec, feats, theta, cfg, weighting: str = "data_size") -> float:
    from .dpo import mean_gradient

    grads = [mean_gradient(feats, theta, cfg, c.data) for c in clients]
    weights = [c.size for c in clients] if weighting == "data_size" else None
    return gradient_diversity(grads, weights)


# --- report -----------------------------------------------------------------


@dataclass(frozen=True)
class ConstantReport:
    zeta_phi_sq: float
    varsigma: float
    c0: float
    c_mix: float
    smoothness_L: float
    zeta_g_sq: float
    kappa_sq: float | None
    beta: float
    horizon: int
    inflated: bool
    sample_sizes: dict

    def to_dict(self) -> dict:
        return asdict(self)


def make_report(beta, horizon, zeta_phi_sq, varsigma, c0, kappa_sq=None, inflated=False, sample_sizes=None):
    c_mix = mixing_factor(c0, varsigma)
    return ConstantReport(
        zeta_phi_sq=float(zeta_phi_sq),
        varsigma=float(varsigma),
        c0=float(c0),
        c_mix=c_mix,
        smoothness_L=smoothness_constant(beta, c_mix, zeta_phi_sq, horizon),
        zeta_g_sq=variance_bound(beta, c_mix, zeta_phi_sq, horizon),
        kappa_sq=None if kappa_sq is None else float(kappa_sq),
        beta=float(beta),
        horizon=int(horizon),
        inflated=bool(inflated),
        sample_sizes=dict(sample_sizes or {}),
    )


def estimate_constants(inst: Instance, theta, beta, num_samples, rng, inflate=True, clients=None, dpo_cfg=None, sampling_theta=None) -> ConstantReport:
    """Estimate every constant at ``theta``; ``inflate`` uses the 3-sigma upper variants."""
    spec, feats = inst.spec, inst.feats
    z = estimate_zeta_phi_sq(spec, feats, theta, num_samples, rng, sampling_theta)
    if spec.horizon >= 2:
        mix = estimate_mixing(spec, feats, theta, num_samples, rng, sampling_theta)
        rate, c0 = (mix.varsigma_ucb, mix.c0_ucb) if inflate else (mix.varsigma, mix.c0)
    else:
        rate, c0 = 0.0, 1.0
    kappa = None
    if clients is not None and len(clients) >= 2:
        kappa = estimate_kappa_sq(clients, spec, feats, theta, dpo_cfg)
    return make_report(
        beta,
        spec.horizon,
        z.ucb if inflate else z.value,
        rate,
        c0,
        kappa,
        inflate,
        {"zeta_phi_sq": num_samples, "mixing": num_samples if spec.horizon >= 2 else 0},
    )


# --- numerical oracles ------------------------------------------------------


def finite_diff_gradient(f, theta, step: float = 1e-5) -> np.ndarray:
    if step <= 0:
        raise ValueError("step must be positive")
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        g[i] = (f(theta + e) - f(theta - e)) / (2 * step)
    return g


def numerical_hessian(f, theta, step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function, symmetrised."""
    if step <= 0:
        raise ValueError("step must be positive")
    theta = np.asarray(theta, dtype=float)
    d = theta.size
    if d > MAX_HESSIAN_DIM:
        raise ValueError(f"dense Hessian differencing limited to d <= {MAX_HESSIAN_DIM}, got {d}")
    E = np.eye(d) * step
    f0 = f(theta)
    B = np.empty((d, d))
    for i in range(d):
        B[i, i] = (f(theta + E[i]) - 2 * f0 + f(theta - E[i])) / step**2
        for j in range(i + 1, d):
            B[i, j] = (
                f(theta + E[i] + E[j]) - f(theta + E[i] - E[j]) - f(theta - E[i] + E[j]) + f(theta - E[i] - E[j])
            ) / (4 * step**2)
            B[j, i] = B[i, j]
    return (B + B.T) / 2


def power_iteration_norm(A, tol: float = 1e-8, max_iter: int = 100_000) -> float:
    """Largest singular value of ``A`` by power iteration on ``A^T A``."""
    A = np.asarray(A, dtype=float)
    M = A.T @ A
    x = np.random.default_rng(0).standard_normal(M.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = M @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        lam_new = float(x @ y)
        x = y / ny
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300) and np.linalg.norm(M @ x - lam_new * x) <= tol * ny:
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))


def numerical_hessian_norm(f, theta, step: float = 1e-4) -> float:
    return power_iteration_norm(numerical_hessian(f, theta, step))
