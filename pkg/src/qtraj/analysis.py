"""Physics-level checks on linked trajectory ensembles.

Covers the outcome statistics of the completed measurement (sign fractions
of the amplified boundary against the prepared weights), reconstruction of
the postselected initial-time distribution Q_(+/-)(x, p, 0) with its
conditional variances and uncertainty product, and a deterministic
quadrature oracle for the same quantities.

The oracle never touches trajectories.  The backward path is an
Ornstein-Uhlenbeck relaxation, so conditioned on a boundary value x_f the
present value is Gaussian,

    x_0 | x_f ~ N(x_f e^(-g t_f), 1 - e^(-2 g t_f)),

and the postselected present-time density is

    M(x_0) ~ integral over selected x_f of P(x_f, t_f) K(x_0 | x_f),

with the linked p drawn from the analytic t = 0 conditional.  Moments of M
reduce to truncated-two-Gaussian moments (evaluated with scaled-erfc
hazards, stable for any separation), and the fringe shifts only the mean of
p, never its conditional second moment, so the p-variance needs just the
mean fringe amplitude under M.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfcx

from . import model
from .stats import _block_edges, jackknife_mean_var

__all__ = [
    "BornEstimate",
    "PostselectionReport",
    "PostselectOracle",
    "born_fraction",
    "born_oracle",
    "postselect",
    "postselect_oracle",
    "oracle_qplus_bin_probs",
    "conditional_p_distribution",
    "default_qplus_edges",
    "write_qplus_csv",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _norm_cdf(z):
    return 0.5 * (1.0 + erf(np.asarray(z) / math.sqrt(2.0)))


def _hazard(alpha):
    """phi(alpha)/Phi(alpha), stable for any alpha via the scaled erfc."""
    return math.sqrt(2.0 / math.pi) / erfcx(-np.asarray(alpha) / math.sqrt(2.0))


def _sign_value(sign):
    if sign in (1, +1, "+", "plus"):
        return 1
    if sign in (-1, "-", "minus"):
        return -1
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


@dataclass(frozen=True)
class BornEstimate:
    """Fraction of amplified boundary draws landing on the positive side."""

    f_plus: float
    se: float
    n_samples: int
    overlap_mass: float

    def to_dict(self):
        return {
            "f_plus": self.f_plus,
            "se": self.se,
            "n_samples": self.n_samples,
            "overlap_mass": self.overlap_mass,
        }


def _hill_overlap_mass(spec, cfg):
    """Probability mass of each boundary hill leaking past zero."""
    gt_f = cfg.signed_g * cfg.t_f
    sigma_f = math.sqrt(float(model.sigma_x2(spec.r, gt_f)))
    mu = math.exp(gt_f) * spec.x1
    return float(_norm_cdf(-mu / sigma_f))


def born_fraction(batch):
    """Empirical outcome fraction f_plus with its binomial standard error.

    Requires a measure-x run with well separated boundary hills; if more
    than 1e-3 of a hill's mass crosses zero the fraction is ill-defined and
    a warning is issued.  Boundary values exactly at zero count as +.
    """
    if batch.cfg.setting is not model.Setting.X:
        raise ValueError("born_fraction applies to measure-x runs (two-hill boundary)")
    overlap = _hill_overlap_mass(batch.spec, batch.cfg)
    if overlap > 1e-3:
        warnings.warn(
            f"boundary hills overlap (mass {overlap:.2e} past zero); "
            "the sign fraction no longer identifies the prepared weights",
            stacklevel=2,
        )
    boundary = batch.amplified_at(batch.cfg.n_steps)
    n = batch.n_samples
    f_plus = float(np.count_nonzero(boundary >= 0.0)) / n
    se = math.sqrt(max(f_plus * (1.0 - f_plus), 1e-300) / n)
    return BornEstimate(f_plus=f_plus, se=se, n_samples=n, overlap_mass=overlap)


def born_oracle(spec, cfg):
    """Exact boundary mass on the positive side (two-hill quadrature)."""
    gt_f = cfg.signed_g * cfg.t_f
    sigma_f = math.sqrt(float(model.sigma_x2(spec.r, gt_f)))
    mu = math.exp(gt_f) * spec.x1
    alpha = mu / sigma_f
    return float(spec.c1_sq * _norm_cdf(alpha) + spec.c2_sq * _norm_cdf(-alpha))


@dataclass(frozen=True)
class PostselectionReport:
    """Conditional variances of the inferred t = 0 state, one outcome sign.

    var_x_cond and var_p_cond are the raw antinormal-subtracted values
    sigma^2 - 1 (no clamping; sampling noise may push them negative), and
    epsilon their geometric-mean uncertainty product, defined only when
    both are positive.
    """

    outcome_sign: int
    n_selected: int
    sigma_x2_sel: float
    sigma_p2_sel: float
    var_x_cond: float
    var_p_cond: float
    se_var_x: float
    se_var_p: float
    epsilon: float
    se_epsilon: float
    mean_x: float
    mean_p: float
    q_plus_hist: np.ndarray
    hist_x_edges: np.ndarray
    hist_p_edges: np.ndarray

    def to_dict(self):
        eps = None if not math.isfinite(self.epsilon) else self.epsilon
        se_eps = None if not math.isfinite(self.se_epsilon) else self.se_epsilon
        return {
            "outcome_sign": "+" if self.outcome_sign > 0 else "-",
            "n_selected": self.n_selected,
            "sigma_x2_sel": self.sigma_x2_sel,
            "sigma_p2_sel": self.sigma_p2_sel,
            "var_x_cond": self.var_x_cond,
            "var_p_cond": self.var_p_cond,
            "se_var_x": self.se_var_x,
            "se_var_p": self.se_var_p,
            "epsilon": eps,
            "se_epsilon": se_eps,
            "mean_x": self.mean_x,
            "mean_p": self.mean_p,
        }


def default_qplus_edges(spec, n_bins=60, n_sigma=6.0):
    """Histogram edges covering the initial-time support of the state."""
    sx = math.sqrt(float(model.sigma_x2(spec.r, 0.0)))
    sp = math.sqrt(float(model.sigma_p2(spec.r, 0.0)))
    x_max = spec.x1 + n_sigma * sx
    p_max = n_sigma * sp
    return np.linspace(-x_max, x_max, n_bins + 1), np.linspace(-p_max, p_max, n_bins + 1)


def _jackknife_epsilon(x0, p0, n_blocks):
    """Delete-block errors for the two variances and the product epsilon."""
    n = len(x0)
    n_blocks = min(n_blocks, n)
    bounds = _block_edges(n, n_blocks)
    sx1 = np.add.reduceat(x0, bounds[:-1])
    sx2 = np.add.reduceat(x0 * x0, bounds[:-1])
    sp1 = np.add.reduceat(p0, bounds[:-1])
    sp2 = np.add.reduceat(p0 * p0, bounds[:-1])
    lens = np.diff(bounds)
    tx1, tx2 = math.fsum(sx1), math.fsum(sx2)
    tp1, tp2 = math.fsum(sp1), math.fsum(sp2)
    rest = n - lens
    varx_del = (tx2 - sx2) / rest - ((tx1 - sx1) / rest) ** 2
    varp_del = (tp2 - sp2) / rest - ((tp1 - sp1) / rest) ** 2
    fac = (n_blocks - 1) / n_blocks
    se_var_x = math.sqrt(fac * np.sum((varx_del - varx_del.mean()) ** 2))
    se_var_p = math.sqrt(fac * np.sum((varp_del - varp_del.mean()) ** 2))
    dx = varx_del - 1.0
    dp = varp_del - 1.0
    if np.all(dx > 0.0) and np.all(dp > 0.0):
        eps_del = np.sqrt(dx * dp)
        se_eps = math.sqrt(fac * np.sum((eps_del - eps_del.mean()) ** 2))
    else:
        se_eps = float("nan")
    return se_var_x, se_var_p, se_eps


def postselect(batch, sign="+", n_blocks=100, hist_edges=None):
    """Condition the linked ensemble on the sign of the amplified outcome.

    Gathers the linked (x(0), p(0)) pairs of the selected rows, reports the
    antinormal-subtracted conditional variances, the uncertainty product
    epsilon, and a 2-D histogram of the inferred initial-time distribution.
    """
    sgn = _sign_value(sign)
    boundary = batch.amplified_at(batch.cfg.n_steps)
    sel = boundary >= 0.0 if sgn > 0 else boundary < 0.0
    n_selected = int(sel.sum())
    if n_selected < 1000:
        raise ValueError(
            f"only {n_selected} trajectories selected; variance estimates need >= 1000"
        )
    x0 = batch.x_at(0)[sel]
    p0 = batch.p_at(0)[sel]
    mean_x, var_x, _, _ = jackknife_mean_var(x0, n_blocks)
    mean_p, var_p, _, _ = jackknife_mean_var(p0, n_blocks)
    se_var_x, se_var_p, se_eps = _jackknife_epsilon(x0, p0, n_blocks)
    dx2 = var_x - 1.0
    dp2 = var_p - 1.0
    eps = math.sqrt(dx2 * dp2) if (dx2 > 0.0 and dp2 > 0.0) else float("nan")
    if hist_edges is None:
        hist_edges = default_qplus_edges(batch.spec)
    x_edges, p_edges = hist_edges
    hist, _, _ = np.histogram2d(x0, p0, bins=[x_edges, p_edges])
    return PostselectionReport(
        outcome_sign=sgn,
        n_selected=n_selected,
        sigma_x2_sel=var_x,
        sigma_p2_sel=var_p,
        var_x_cond=dx2,
        var_p_cond=dp2,
        se_var_x=se_var_x,
        se_var_p=se_var_p,
        epsilon=eps,
        se_epsilon=se_eps,
        mean_x=mean_x,
        mean_p=mean_p,
        q_plus_hist=hist.astype(np.int64),
        hist_x_edges=np.asarray(x_edges),
        hist_p_edges=np.asarray(p_edges),
    )


def conditional_p_distribution(batch, sign, step, edges):
    """Histogram of the complementary quadrature over selected rows."""
    sgn = _sign_value(sign)
    boundary = batch.amplified_at(batch.cfg.n_steps)
    sel = boundary >= 0.0 if sgn > 0 else boundary < 0.0
    if int(sel.sum()) < 1000:
        raise ValueError("fewer than 1000 selected trajectories")
    values = batch.p_at(step)[sel] if batch.cfg.setting is model.Setting.X else batch.x_at(step)[sel]
    counts, _ = np.histogram(values, bins=edges)
    return counts.astype(np.int64)


# ---------------------------------------------------------------------------
# Deterministic quadrature oracle
# ---------------------------------------------------------------------------


def _truncated_hill_moments(mu, sigma, sgn):
    """(mass, E[X], E[X^2]) of N(mu, sigma^2) restricted to sgn*X >= 0."""
    alpha = sgn * mu / sigma
    mass = float(_norm_cdf(alpha))
    lam = float(_hazard(alpha))
    # Moments of sgn*X, a normal with mean sgn*mu truncated to >= 0.
    m1 = sgn * mu + sigma * lam
    m2 = mu * mu + 2.0 * sgn * mu * sigma * lam + sigma * sigma * (1.0 - alpha * lam)
    return mass, sgn * m1, m2


@dataclass(frozen=True)
class PostselectOracle:
    """Quadrature values of the postselected initial-time moments."""

    outcome_sign: int
    selected_mass: float
    mean_x: float
    var_x: float
    mean_p: float
    var_p: float
    var_x_cond: float
    var_p_cond: float
    epsilon: float

    def to_dict(self):
        return {
            "outcome_sign": "+" if self.outcome_sign > 0 else "-",
            "selected_mass": self.selected_mass,
            "mean_x": self.mean_x,
            "var_x": self.var_x,
            "mean_p": self.mean_p,
            "var_p": self.var_p,
            "var_x_cond": self.var_x_cond,
            "var_p_cond": self.var_p_cond,
            "epsilon": self.epsilon if math.isfinite(self.epsilon) else None,
        }


def _boundary_params(spec, cfg):
    gt_f = cfg.signed_g * cfg.t_f
    sigma_f = math.sqrt(float(model.sigma_x2(spec.r, gt_f)))
    mu = math.exp(gt_f) * spec.x1
    return mu, sigma_f


def _selected_boundary_moments(spec, cfg, sgn):
    """Mass, mean and second moment of x_f over the selected sign."""
    mu, sigma_f = _boundary_params(spec, cfg)
    total_mass = 0.0
    m1 = 0.0
    m2 = 0.0
    for w, center in ((spec.c1_sq, mu), (spec.c2_sq, -mu)):
        if w == 0.0:
            continue
        mass, e1, e2 = _truncated_hill_moments(center, sigma_f, sgn)
        total_mass += w * mass
        m1 += w * mass * e1
        m2 += w * mass * e2
    if total_mass <= 0.0:
        raise ValueError("selected boundary mass is zero")
    return total_mass, m1 / total_mass, m2 / total_mass


def _mean_fringe_amp_selected(spec, cfg, sgn, n_f=2001, n_z=64):
    """E[amp(x_0)] over the postselected present-time distribution.

    Double quadrature: composite Simpson over the truncated boundary hills,
    Gauss-Hermite over the bridge noise x_0 = kappa x_f + s z.
    """
    if spec.mixture or spec.fringe_weight == 0.0:
        return 0.0
    mu, sigma_f = _boundary_params(spec, cfg)
    kappa = math.exp(-cfg.g * cfg.t_f)
    s2 = 1.0 - math.exp(-2.0 * cfg.g * cfg.t_f)
    s = math.sqrt(max(s2, 0.0))
    hi = mu + 12.0 * sigma_f
    nodes = np.linspace(0.0, hi, n_f if n_f % 2 == 1 else n_f + 1)
    w = np.ones(len(nodes))
    w[1:-1:2] = 4.0
    w[2:-2:2] = 2.0
    w *= (nodes[1] - nodes[0]) / 3.0
    xf = sgn * nodes
    dens = spec.c1_sq * np.exp(-((xf - mu) ** 2) / (2 * sigma_f**2)) + spec.c2_sq * np.exp(
        -((xf + mu) ** 2) / (2 * sigma_f**2)
    )
    dens /= _SQRT_2PI * sigma_f
    mass = float(w @ dens)
    z, wz = np.polynomial.hermite_e.hermegauss(n_z)
    wz = wz / math.sqrt(2.0 * math.pi)
    if s > 0.0:
        x0 = kappa * xf[:, None] + s * z[None, :]
        amp = model.conditional_fringe_amp(spec, x0)
        mean_amp_given_f = amp @ wz
    else:
        mean_amp_given_f = model.conditional_fringe_amp(spec, kappa * xf)
    return float(w @ (dens * mean_amp_given_f)) / mass


def postselect_oracle(spec, cfg, sign="+"):
    """Deterministic moments of the postselected t = 0 distribution.

    x moments follow from truncated-hill boundary moments pushed through
    the backward Gaussian kernel; p moments use sigma_p^2(0) and the mean
    conditional fringe amplitude (the fringe leaves the conditional second
    moment of p untouched).
    """
    sgn = _sign_value(sign)
    mass, ef1, ef2 = _selected_boundary_moments(spec, cfg, sgn)
    kappa = math.exp(-cfg.g * cfg.t_f)
    s2 = 1.0 - math.exp(-2.0 * cfg.g * cfg.t_f)
    mean_x = kappa * ef1
    var_x = kappa * kappa * (ef2 - ef1 * ef1) + s2
    sp2 = float(model.sigma_p2(spec.r, 0.0))
    sx2 = float(model.sigma_x2(spec.r, 0.0))
    b = spec.x1 / sx2
    big_c = b * sp2 * math.exp(-b * b * sp2 / 2.0)
    mean_amp = _mean_fringe_amp_selected(spec, cfg, sgn)
    mean_p = -big_c * mean_amp
    # E[p^2 | x] = sigma_p^2 exactly; only the mean is fringe-shifted.
    var_p = sp2 - mean_p * mean_p
    dx2 = var_x - 1.0
    dp2 = var_p - 1.0
    eps = math.sqrt(dx2 * dp2) if (dx2 > 0.0 and dp2 > 0.0) else float("nan")
    return PostselectOracle(
        outcome_sign=sgn,
        selected_mass=mass,
        mean_x=mean_x,
        var_x=var_x,
        mean_p=mean_p,
        var_p=var_p,
        var_x_cond=dx2,
        var_p_cond=dp2,
        epsilon=eps,
    )


def _present_time_density(spec, cfg, sgn, x_nodes, n_f=4001):
    """Postselected density M(x_0) on the given nodes, by quadrature."""
    mu, sigma_f = _boundary_params(spec, cfg)
    kappa = math.exp(-cfg.g * cfg.t_f)
    s2 = 1.0 - math.exp(-2.0 * cfg.g * cfg.t_f)
    hi = mu + 12.0 * sigma_f
    nodes = np.linspace(0.0, hi, n_f if n_f % 2 == 1 else n_f + 1)
    w = np.ones(len(nodes))
    w[1:-1:2] = 4.0
    w[2:-2:2] = 2.0
    w *= (nodes[1] - nodes[0]) / 3.0
    xf = sgn * nodes
    dens = spec.c1_sq * np.exp(-((xf - mu) ** 2) / (2 * sigma_f**2)) + spec.c2_sq * np.exp(
        -((xf + mu) ** 2) / (2 * sigma_f**2)
    )
    dens /= _SQRT_2PI * sigma_f
    mass = float(w @ dens)
    kern = np.exp(-((x_nodes[:, None] - kappa * xf[None, :]) ** 2) / (2.0 * s2))
    kern /= _SQRT_2PI * math.sqrt(s2)
    return (kern @ (w * dens)) / mass


def oracle_qplus_bin_probs(spec, cfg, sign, x_edges, p_edges, nodes_per_bin=5):
    """Per-bin probabilities of the postselected Q_(+/-)(x, p, 0).

    The joint factorizes as M(x) [envelope(p) - amp(x) fringe(p)], so the
    bin integrals combine two x-profiles with two p-profiles.
    """
    sgn = _sign_value(sign)
    seg = nodes_per_bin - 1
    x_edges = np.asarray(x_edges, dtype=float)
    p_edges = np.asarray(p_edges, dtype=float)

    def lattice(edges):
        n_bins = len(edges) - 1
        delta = (edges[-1] - edges[0]) / (n_bins * seg)
        lat = edges[0] + np.arange(n_bins * seg + 1) * delta
        idx = np.arange(n_bins)[:, None] * seg + np.arange(nodes_per_bin)[None, :]
        w = np.ones(nodes_per_bin)
        w[1:-1:2] = 4.0
        w[2:-2:2] = 2.0
        w *= delta / 3.0
        return lat, idx, w

    lat_x, idx_x, w_x = lattice(x_edges)
    lat_p, idx_p, w_p = lattice(p_edges)
    m_x = _present_time_density(spec, cfg, sgn, lat_x)
    amp_x = model.conditional_fringe_amp(spec, lat_x)
    sp2 = float(model.sigma_p2(spec.r, 0.0))
    sx2 = float(model.sigma_x2(spec.r, 0.0))
    env = np.exp(-lat_p * lat_p / (2.0 * sp2)) / (_SQRT_2PI * math.sqrt(sp2))
    env_sin = env * np.sin(lat_p * spec.x1 / sx2)
    g1 = (m_x)[idx_x] @ w_x
    g2 = (m_x * amp_x)[idx_x] @ w_x
    e1 = env[idx_p] @ w_p
    e2 = env_sin[idx_p] @ w_p
    return g1[:, None] * e1[None, :] - g2[:, None] * e2[None, :]


def write_qplus_csv(path, report):
    """Dump the postselected (x(0), p(0)) histogram: one row per occupied bin."""
    xe, pe = report.hist_x_edges, report.hist_p_edges
    with open(path, "w", newline="") as fh:
        fh.write("x_lo,x_hi,p_lo,p_hi,count\n")
        nz = np.argwhere(report.q_plus_hist > 0)
        for i, j in nz:
            fh.write(
                f"{xe[i]:.17g},{xe[i + 1]:.17g},{pe[j]:.17g},{pe[j + 1]:.17g},"
                f"{int(report.q_plus_hist[i, j])}\n"
            )
