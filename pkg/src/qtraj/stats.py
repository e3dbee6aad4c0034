"""Histogram verification: (x, p, t) binning, per-bin Simpson integrals of
the analytic density, and the time-averaged chi-squared statistic.

The comparison grid is a shared uniform lattice (bin edges are exact float
multiples of dx, dp) with an active window per stored time slice covering
the occupied region (packet centers +- n_sigma standard deviations), so
early slices are not charged for the full amplified extent.  Counts are
plain integers and merge by addition, which makes the reduction exactly
associative: worker count can never change a bin.

Per-bin analytic probabilities use composite Simpson per axis.  The density
separates into products of one-dimensional profiles (two hills and the
fringe), so the default integrator evaluates three 1-D Simpson integrals
per axis and combines them by outer products; a dense 2-D Simpson path over
the same nodes is kept for cross-checking.

The verification statistic follows the binned-comparison recipe: with
p_ijk the analytic bin probability and N_ijk the trajectory count,

    chi2_bar = (1/N_t) sum over significant bins of
               (p_ijk - N_ijk/N_s)^2 / (p_ijk / N_s)

where bins whose population falls below min_count (default 10) are
discarded; significance is judged on the expected population N_s * p_ijk,
which keeps the discarded set deterministic and the statistic unbiased.
With k the mean number of significant bins per time step, a correct model
gives chi2_bar ~ k; the PASS band is k +- 3 sqrt(2k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2 as _chi2_dist

from . import model
from .engine import iter_chunk_batches

__all__ = [
    "Grid3",
    "BinnedCounts",
    "Chi2Report",
    "MomentStats",
    "bin_counts",
    "accumulate_counts",
    "analytic_bin_probs",
    "chi2_time_averaged",
    "chi2_counts_vs_probs",
    "moment_summary",
    "two_sample_chi2",
    "write_histogram_csv",
]


def _slice_extents(spec, cfg, step, n_sigma):
    """Occupied (x, p) half-extent at a stored step: centers + n_sigma widths."""
    gt = cfg.signed_g * step * cfg.dt
    sx = math.sqrt(float(model.sigma_x2(spec.r, gt)))
    sp = math.sqrt(float(model.sigma_p2(spec.r, gt)))
    gx1 = math.exp(gt) * spec.x1
    mom = model.reference_moments(spec, step * cfg.dt, cfg)
    ext_x = gx1 + n_sigma * sx
    ext_p = abs(mom.mean_p) + n_sigma * sp
    return ext_x, ext_p


@dataclass(frozen=True)
class Grid3:
    """(x, p, t) comparison grid: shared edges plus per-slice active windows.

    x_edges and p_edges are strictly increasing uniform edges; t_steps are
    engine step indices; windows[s] = (ix0, ix1, ip0, ip1) bounds the active
    bins of slice s as half-open index ranges into the shared bin lattice.
    """

    x_edges: np.ndarray
    p_edges: np.ndarray
    t_steps: tuple
    dt: float
    windows: tuple = None

    def __post_init__(self):
        for name, edges in (("x_edges", self.x_edges), ("p_edges", self.p_edges)):
            if len(edges) < 2 or np.any(np.diff(edges) <= 0):
                raise ValueError(f"{name} must be strictly increasing with >= 2 entries")
            steps = np.diff(edges)
            if np.max(steps) - np.min(steps) > 1e-9 * np.max(steps):
                raise ValueError(f"{name} must be uniform")
        if self.area <= 0:
            raise ValueError("bin area must be positive")
        if self.windows is None:
            full = (0, len(self.x_edges) - 1, 0, len(self.p_edges) - 1)
            object.__setattr__(self, "windows", tuple(full for _ in self.t_steps))
        elif len(self.windows) != len(self.t_steps):
            raise ValueError("need one window per time slice")

    @property
    def dx(self):
        return float(self.x_edges[1] - self.x_edges[0])

    @property
    def dp(self):
        return float(self.p_edges[1] - self.p_edges[0])

    @property
    def area(self):
        return self.dx * self.dp

    def times(self):
        return np.asarray(self.t_steps) * self.dt

    @classmethod
    def auto(cls, spec, cfg, dx, dp, t_steps=None, n_sigma=6.0):
        """Lattice covering packet centers +- n_sigma widths at every slice."""
        if t_steps is None:
            t_steps = tuple(range(cfg.n_steps + 1))
        t_steps = tuple(int(s) for s in t_steps)
        exts = [_slice_extents(spec, cfg, s, n_sigma) for s in t_steps]
        kx = max(int(math.ceil(ex / dx)) for ex, _ in exts)
        kp = max(int(math.ceil(ep / dp)) for _, ep in exts)
        x_edges = np.arange(-kx, kx + 1) * dx
        p_edges = np.arange(-kp, kp + 1) * dp
        windows = []
        for ex, ep in exts:
            kxt = min(kx, int(math.ceil(ex / dx)))
            kpt = min(kp, int(math.ceil(ep / dp)))
            windows.append((kx - kxt, kx + kxt, kp - kpt, kp + kpt))
        return cls(
            x_edges=x_edges,
            p_edges=p_edges,
            t_steps=t_steps,
            dt=cfg.dt,
            windows=tuple(windows),
        )


@dataclass
class BinnedCounts:
    """Per-slice integer histograms on the grid's active windows."""

    grid: Grid3
    counts: list
    out_of_grid: np.ndarray
    n_samples: int

    def merge(self, other):
        if other.grid is not self.grid and (
            other.grid.t_steps != self.grid.t_steps
            or len(other.grid.x_edges) != len(self.grid.x_edges)
        ):
            raise ValueError("cannot merge counts from different grids")
        for mine, theirs in zip(self.counts, other.counts):
            mine += theirs
        self.out_of_grid += other.out_of_grid
        self.n_samples += other.n_samples
        return self

    def out_of_grid_fraction(self):
        return float(self.out_of_grid.sum()) / (self.n_samples * len(self.counts))


def _bin_slice(xs, ps, grid, window):
    ix0, ix1, ip0, ip1 = window
    nx, npb = ix1 - ix0, ip1 - ip0
    ix = np.floor((xs - grid.x_edges[0]) / grid.dx).astype(np.int64) - ix0
    ip = np.floor((ps - grid.p_edges[0]) / grid.dp).astype(np.int64) - ip0
    ok = (ix >= 0) & (ix < nx) & (ip >= 0) & (ip < npb)
    flat = ix[ok] * npb + ip[ok]
    counts = np.bincount(flat, minlength=nx * npb).reshape(nx, npb)
    return counts, int(len(xs) - ok.sum())


def bin_counts(batch, grid):
    """Histogram a trajectory batch on the grid (integer counts per slice)."""
    counts = []
    out = np.zeros(len(grid.t_steps), dtype=np.int64)
    for s, (step, window) in enumerate(zip(grid.t_steps, grid.windows)):
        c, o = _bin_slice(batch.x_at(step), batch.p_at(step), grid, window)
        counts.append(c)
        out[s] = o
    return BinnedCounts(grid=grid, counts=counts, out_of_grid=out, n_samples=batch.n_samples)


def accumulate_counts(spec, cfg, grid, workers=1):
    """Stream chunks through the binner without materializing full paths."""
    store = tuple(sorted(set(grid.t_steps) | {0, cfg.n_steps}))
    total = None
    for chunk in iter_chunk_batches(spec, cfg, workers=workers, store_steps=store):
        binned = bin_counts(chunk, grid)
        total = binned if total is None else total.merge(binned)
    return total


def _axis_lattice(edges, lo, hi, nodes_per_bin):
    """Simpson node lattice over bins [lo, hi) of a uniform edge array."""
    n_bins = hi - lo
    seg = nodes_per_bin - 1
    delta = (edges[1] - edges[0]) / seg
    lattice = edges[lo] + np.arange(n_bins * seg + 1) * delta
    idx = np.arange(n_bins)[:, None] * seg + np.arange(nodes_per_bin)[None, :]
    w = np.ones(nodes_per_bin)
    w[1:-1:2] = 4.0
    w[2:-2:2] = 2.0
    w *= delta / 3.0
    return lattice, idx, w


def _bin_integrals(values, idx, w):
    return values[idx] @ w


def _gauss_pdf(v, mu, var):
    return np.exp(-((v - mu) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def analytic_bin_probs(spec, cfg, grid, nodes_per_bin=3, method="separable"):
    """Per-bin integrals of the analytic density, one array per slice.

    nodes_per_bin (odd, >= 3) sets the Simpson resolution per axis per bin.
    method "separable" integrates the three 1-D profiles per axis and
    combines them; "dense" evaluates the full density on the 2-D node
    lattice.  Both are the same composite Simpson rule.
    """
    if nodes_per_bin < 3 or nodes_per_bin % 2 == 0:
        raise ValueError("nodes_per_bin must be odd and >= 3")
    probs = []
    for step, window in zip(grid.t_steps, grid.windows):
        t = step * cfg.dt
        gt = cfg.signed_g * t
        sx2 = float(model.sigma_x2(spec.r, gt))
        sp2 = float(model.sigma_p2(spec.r, gt))
        gx1 = math.exp(gt) * spec.x1
        ix0, ix1, ip0, ip1 = window
        lat_x, idx_x, w_x = _axis_lattice(grid.x_edges, ix0, ix1, nodes_per_bin)
        lat_p, idx_p, w_p = _axis_lattice(grid.p_edges, ip0, ip1, nodes_per_bin)
        if method == "dense":
            q = model.q_sup(spec, lat_x[:, None], lat_p[None, :], t, cfg)
            if not np.all(np.isfinite(q)):
                raise ValueError(f"non-finite density on slice t={t}")
            part = q[idx_x][:, :, idx_p]  # (bins_x, nodes, bins_p, nodes)
            p_ij = np.einsum("a,iajb,b->ij", w_x, part, w_p)
            probs.append(p_ij)
            continue
        hill1 = spec.c1_sq * _gauss_pdf(lat_x, gx1, sx2)
        hill2 = spec.c2_sq * _gauss_pdf(lat_x, -gx1, sx2)
        fringe_x = _gauss_pdf(lat_x, 0.0, sx2)
        env = _gauss_pdf(lat_p, 0.0, sp2)
        env_sin = env * np.sin(lat_p * gx1 / sx2)
        if not np.all(np.isfinite(hill1 + hill2 + fringe_x)) or not np.all(
            np.isfinite(env_sin)
        ):
            raise ValueError(f"non-finite density on slice t={t}")
        ih1 = _bin_integrals(hill1, idx_x, w_x)
        ih2 = _bin_integrals(hill2, idx_x, w_x)
        ifr = _bin_integrals(fringe_x, idx_x, w_x)
        ie = _bin_integrals(env, idx_p, w_p)
        isin = _bin_integrals(env_sin, idx_p, w_p)
        famp_t = spec.fringe_weight * math.exp(-gx1 * gx1 / (2.0 * sx2))
        p_ij = (ih1 + ih2)[:, None] * ie[None, :] - famp_t * ifr[:, None] * isin[None, :]
        probs.append(p_ij)
    return probs


@dataclass(frozen=True)
class MomentStats:
    mean: float
    var: float
    se_mean: float
    se_var: float


@dataclass(frozen=True)
class Chi2Report:
    """Time-averaged chi-squared comparison of counts against analytic bins."""

    chi2_bar: float
    k: float
    n_valid: int
    per_slice: tuple
    n_samples: int
    min_count: int
    n_out_of_grid: int

    @property
    def band_lo(self):
        return self.k - 3.0 * math.sqrt(2.0 * self.k)

    @property
    def band_hi(self):
        return self.k + 3.0 * math.sqrt(2.0 * self.k)

    @property
    def passed(self):
        return self.band_lo <= self.chi2_bar <= self.band_hi

    def to_dict(self):
        return {
            "chi2_bar": self.chi2_bar,
            "k": self.k,
            "n_valid": self.n_valid,
            "band": [self.band_lo, self.band_hi],
            "passed": bool(self.passed),
            "n_samples": self.n_samples,
            "min_count": self.min_count,
            "n_out_of_grid": self.n_out_of_grid,
            "per_slice": [
                {"t": t, "chi2": c, "k": kk} for (t, c, kk) in self.per_slice
            ],
        }


def chi2_counts_vs_probs(counts, probs, n_samples, min_count=10):
    """One-slice statistic over the significant bins.

    A bin is significant when its expected population n_samples * p_ijk
    reaches min_count, the usual validity rule for binned chi-squared
    comparisons.  Gating on the expected rather than the observed count
    keeps the bin set deterministic and the statistic unbiased (selecting
    on observed fluctuations inflates chi2_bar by several percent of k,
    enough to leave the acceptance band).  Returns (chi2, k) with k the
    number of significant bins.
    """
    counts = np.asarray(counts)
    probs = np.asarray(probs)
    if counts.shape != probs.shape:
        raise ValueError(f"shape mismatch: counts {counts.shape} vs probs {probs.shape}")
    sig = probs * n_samples >= min_count
    k = int(sig.sum())
    if k == 0:
        return 0.0, 0
    p = probs[sig]
    f = counts[sig] / n_samples
    chi2 = float(np.sum((p - f) ** 2 / (p / n_samples)))
    return chi2, k


def chi2_time_averaged(binned, probs, n_samples=None, min_count=10):
    """Time-averaged statistic over every stored slice, with PASS band.

    binned may be a BinnedCounts or a plain list of count arrays matching
    probs; n_samples is then required.
    """
    if isinstance(binned, BinnedCounts):
        counts_list = binned.counts
        n_samples = binned.n_samples
        times = binned.grid.times()
        n_out = int(binned.out_of_grid.sum())
    else:
        counts_list = binned
        if n_samples is None:
            raise ValueError("n_samples is required with bare count arrays")
        times = np.arange(len(counts_list), dtype=float)
        n_out = 0
    per_slice = []
    total_chi2 = 0.0
    total_k = 0
    for t, counts, p in zip(times, counts_list, probs):
        c, k = chi2_counts_vs_probs(counts, p, n_samples, min_count)
        per_slice.append((float(t), c, k))
        total_chi2 += c
        total_k += k
    n_t = len(per_slice)
    if total_k == 0:
        raise ValueError("no significant bins anywhere; grid or sample size too small")
    return Chi2Report(
        chi2_bar=total_chi2 / n_t,
        k=total_k / n_t,
        n_valid=total_k,
        per_slice=tuple(per_slice),
        n_samples=n_samples,
        min_count=min_count,
        n_out_of_grid=n_out,
    )


def _block_edges(n, n_blocks):
    bounds = np.linspace(0, n, n_blocks + 1).astype(np.int64)
    return bounds


def jackknife_mean_var(values, n_blocks=100):
    """(mean, var, se_mean, se_var) with delete-block jackknife errors.

    Totals are accumulated from per-block partial sums with math.fsum, so
    the result does not depend on how blocks were distributed to workers.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    n_blocks = min(n_blocks, n)
    bounds = _block_edges(n, n_blocks)
    s1 = np.add.reduceat(values, bounds[:-1])
    s2 = np.add.reduceat(values * values, bounds[:-1])
    lens = np.diff(bounds)
    tot1 = math.fsum(s1)
    tot2 = math.fsum(s2)
    mean = tot1 / n
    var = tot2 / n - mean * mean
    if n_blocks < 2:
        return mean, var, float("nan"), float("nan")
    rest = n - lens
    mean_del = (tot1 - s1) / rest
    var_del = (tot2 - s2) / rest - mean_del**2
    fac = (n_blocks - 1) / n_blocks
    se_mean = math.sqrt(fac * np.sum((mean_del - mean_del.mean()) ** 2))
    se_var = math.sqrt(fac * np.sum((var_del - var_del.mean()) ** 2))
    return mean, var, se_mean, se_var


def moment_summary(batch, step, n_blocks=100):
    """Sample mean and variance of x and p at a stored step, with jackknife SEs."""
    out = {}
    for name, values in (("x", batch.x_at(step)), ("p", batch.p_at(step))):
        mean, var, se_mean, se_var = jackknife_mean_var(values, n_blocks)
        out[name] = MomentStats(mean=mean, var=var, se_mean=se_mean, se_var=se_var)
    return out


def two_sample_chi2(counts1, counts2, min_total=10):
    """Two-sample homogeneity chi-squared over shared bins.

    Returns (stat, dof, p_value); bins with fewer than min_total combined
    entries are pooled out of the comparison.
    """
    c1 = np.asarray(counts1, dtype=float).ravel()
    c2 = np.asarray(counts2, dtype=float).ravel()
    if c1.shape != c2.shape:
        raise ValueError("histograms must share their binning")
    n1, n2 = c1.sum(), c2.sum()
    if n1 == 0 or n2 == 0:
        raise ValueError("empty histogram")
    use = (c1 + c2) >= min_total
    k1 = math.sqrt(n2 / n1)
    k2 = math.sqrt(n1 / n2)
    stat = float(np.sum((k1 * c1[use] - k2 * c2[use]) ** 2 / (c1[use] + c2[use])))
    dof = int(use.sum()) - 1
    if dof < 1:
        raise ValueError("not enough populated bins for a two-sample comparison")
    return stat, dof, float(_chi2_dist.sf(stat, dof))


def write_histogram_csv(path, binned, probs):
    """Sparse histogram dump: one row per occupied bin.

    Columns: t, x_lo, x_hi, p_lo, p_hi, count, analytic_prob.  Bins with a
    zero count are omitted to keep paper-scale dumps tractable.
    """
    grid = binned.grid
    with open(path, "w", newline="") as fh:
        fh.write("t,x_lo,x_hi,p_lo,p_hi,count,analytic_prob\n")
        for s, (step, window) in enumerate(zip(grid.t_steps, grid.windows)):
            t = step * grid.dt
            ix0, _, ip0, _ = window
            counts = binned.counts[s]
            p = probs[s] if probs is not None else None
            nz = np.argwhere(counts > 0)
            for i, j in nz:
                x_lo = grid.x_edges[ix0 + i]
                p_lo = grid.p_edges[ip0 + j]
                prob = p[i, j] if p is not None else float("nan")
                fh.write(
                    f"{t:.17g},{x_lo:.17g},{x_lo + grid.dx:.17g},"
                    f"{p_lo:.17g},{p_lo + grid.dp:.17g},"
                    f"{int(counts[i, j])},{prob:.17g}\n"
                )
