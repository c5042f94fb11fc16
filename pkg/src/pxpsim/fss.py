"""Finite-size-scaling collapse of the steady-state entropy table.

The scaling ansatz rescales each (size, rate) sample to
``x = (rate - rate_c) * N^(1/nu)`` and ``y = |S - S_c(N)|``, where the
per-size critical entropy ``S_c(N)`` comes from linear interpolation of
that size's curve. Collapse quality is the leave-one-out error of a
Gaussian-kernel regression through the pooled rescaled points (bandwidth
picked by cross-validation on the rescaled axis), and the two parameters
are fitted by a multi-start simplex search with bootstrap error bars.
"""

from dataclasses import dataclass

import numpy as np
import scipy.optimize

NU_BOUNDS = (0.2, 3.0)
BANDWIDTH_FACTORS = np.geomspace(0.03, 0.45, 7)
_DENOM_FLOOR = 1e-12


@dataclass(eq=False)
class ScalingDataset:
    """Rows of (size, rate, mean entropy, standard error), sorted internally."""

    sizes: np.ndarray
    gammas: np.ndarray
    entropy: np.ndarray
    entropy_err: np.ndarray

    def __len__(self):
        return len(self.sizes)

    def distinct_sizes(self):
        return np.unique(self.sizes)

    def gamma_range(self):
        """Interval of rates covered by every size (valid critical-rate domain)."""
        lo = max(self.gammas[self.sizes == n].min() for n in self.distinct_sizes())
        hi = min(self.gammas[self.sizes == n].max() for n in self.distinct_sizes())
        return float(lo), float(hi)


def make_dataset(sizes, gammas, entropy, entropy_err, validate=True):
    """Build a ScalingDataset; full-row lexicographic sort makes the result
    independent of input row order."""
    sizes = np.asarray(sizes, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    entropy = np.asarray(entropy, dtype=float)
    entropy_err = np.asarray(entropy_err, dtype=float)
    if not (len(sizes) == len(gammas) == len(entropy) == len(entropy_err)):
        raise ValueError("dataset columns have mismatched lengths")
    order = np.lexsort((entropy_err, entropy, gammas, sizes))
    ds = ScalingDataset(sizes[order], gammas[order], entropy[order], entropy_err[order])
    if validate:
        uniq = ds.distinct_sizes()
        if len(uniq) < 3:
            raise ValueError(f"need at least 3 distinct sizes, got {len(uniq)}")
        for n in uniq:
            if len(np.unique(ds.gammas[ds.sizes == n])) < 4:
                raise ValueError(f"need at least 4 distinct rates per size (size {n:g})")
        if np.any(ds.entropy_err <= 0):
            raise ValueError("standard errors must be positive")
    return ds


def _interp_with_error(gamma_c, g, s, e):
    j = int(np.searchsorted(g, gamma_c))
    if j == 0:
        return float(s[0]), float(e[0])
    lam = (gamma_c - g[j - 1]) / (g[j] - g[j - 1])
    value = (1.0 - lam) * s[j - 1] + lam * s[j]
    var = (1.0 - lam) ** 2 * e[j - 1] ** 2 + lam**2 * e[j] ** 2
    return float(value), float(np.sqrt(var))


def critical_entropy(ds, n, gamma_c, with_error=False):
    """Entropy of size ``n`` at ``gamma_c`` by linear interpolation between
    the two closest sampled rates (optionally with its propagated error)."""
    sel = ds.sizes == n
    if not np.any(sel):
        raise ValueError(f"no rows for size {n:g}")
    g = ds.gammas[sel]
    s = ds.entropy[sel]
    e = ds.entropy_err[sel]
    order = np.argsort(g)
    g, s, e = g[order], s[order], e[order]
    if gamma_c < g[0] or gamma_c > g[-1]:
        raise ValueError(
            f"critical rate {gamma_c:g} outside the sampled range "
            f"[{g[0]:g}, {g[-1]:g}] for size {n:g}"
        )
    value, err = _interp_with_error(gamma_c, g, s, e)
    return (value, err) if with_error else value


def scaled_coordinates(ds, gamma_c, nu):
    """Rescaled (x, y, weight) triples under the collapse ansatz.

    Weights are the rows' inverse squared standard errors; they carry no
    dependence on (gamma_c, nu), which keeps the objective comparable
    across parameter values.
    """
    x = np.empty(len(ds))
    y = np.empty(len(ds))
    for n in ds.distinct_sizes():
        sel = ds.sizes == n
        s_c = critical_entropy(ds, n, gamma_c)
        x[sel] = (ds.gammas[sel] - gamma_c) * n ** (1.0 / nu)
        y[sel] = np.abs(ds.entropy[sel] - s_c)
    return x, y, 1.0 / ds.entropy_err**2


def _loo_residual_mse(x, y, w, bandwidth, diff=None):
    """Mean standardized squared leave-one-out residual of the kernel fit.

    The smoother is local-linear (a weighted straight-line fit around each
    evaluation point), which unlike a plain kernel average carries no
    first-order bias on the sloped arms of the rescaled data.
    """
    if diff is None:
        diff = x[None, :] - x[:, None]  # diff[i, j] = x_j - x_i
    kw = np.exp(-(diff**2) / (2.0 * bandwidth**2)) * w[None, :]
    np.fill_diagonal(kw, 0.0)
    s0 = kw.sum(axis=1)
    s1 = (kw * diff).sum(axis=1)
    s2 = (kw * diff**2).sum(axis=1)
    t0 = kw @ y
    t1 = (kw * diff) @ y
    det = s0 * s2 - s1**2
    scale = np.max(s0) * np.max(np.abs(s2)) if len(x) else 1.0
    ok = det > _DENOM_FLOOR * max(scale, _DENOM_FLOOR)
    # fall back to the kernel average, then to the global mean, where the
    # local fit is singular (isolated points, vanishing bandwidth)
    mean_ok = s0 > _DENOM_FLOOR * max(np.max(s0), _DENOM_FLOOR)
    global_mean = (np.sum(w * y) - w * y) / (np.sum(w) - w)
    smooth = np.where(mean_ok, t0 / np.where(mean_ok, s0, 1.0), global_mean)
    lever = np.where(mean_ok, (kw**2 / w[None, :]).sum(axis=1) / np.where(mean_ok, s0, 1.0) ** 2, 0.0)
    with np.errstate(invalid="ignore"):
        coef = (s2[:, None] - diff * s1[:, None]) * kw / det[:, None]
        lever_ll = (coef**2 / w[None, :]).sum(axis=1)
    smooth = np.where(ok, (s2 * t0 - s1 * t1) / np.where(ok, det, 1.0), smooth)
    lever = np.where(ok, lever_ll, lever)
    # residual normalized by the full predictive variance: point noise plus
    # the variance the linear smoother propagates from its neighbors
    return float(np.mean((y - smooth) ** 2 / (1.0 / w + lever)))


def collapse_objective(ds, gamma_c, nu, bandwidth=None):
    """Collapse quality at (gamma_c, nu); zero means a perfect collapse.

    With ``bandwidth=None`` the kernel width is picked by leave-one-out
    cross-validation over a geometric grid of fractions of the rescaled
    data spread.
    """
    x, y, w = scaled_coordinates(ds, gamma_c, nu)
    spread = x.max() - x.min()
    if spread <= 0 or not np.isfinite(spread):
        raise ValueError("degenerate transform: all rescaled coordinates coincide")
    if bandwidth is not None:
        return _loo_residual_mse(x, y, w, bandwidth)
    diff = x[None, :] - x[:, None]
    return min(_loo_residual_mse(x, y, w, f * spread, diff) for f in BANDWIDTH_FACTORS)


@dataclass(eq=False)
class CollapseFit:
    gamma_c: float
    nu: float
    gamma_c_err: float | None
    nu_err: float | None
    quality: float
    scaled_x: np.ndarray
    scaled_y: np.ndarray
    n_boot: int


def _minimize(ds, start, bounds, maxiter, xatol, fatol):
    result = scipy.optimize.minimize(
        lambda p: collapse_objective(ds, p[0], p[1]),
        np.asarray(start, dtype=float),
        method="Nelder-Mead",
        bounds=bounds,
        options={"maxiter": maxiter, "xatol": xatol, "fatol": fatol},
    )
    return result.x, float(result.fun)


def fit_collapse(ds, init=None, n_boot=100, seed=0):
    """Fit (gamma_c, nu) by multi-start simplex search plus one polish.

    Bootstrap errors resample rows with replacement within each size and
    jitter entropies by their standard errors; ``n_boot=0`` skips error
    estimation, ``n_boot=1`` is rejected as degenerate.
    """
    if n_boot == 1:
        raise ValueError("a single bootstrap replica gives zero-width errors; use 0 or >= 2")
    g_lo, g_hi = ds.gamma_range()
    margin = 0.1 * (g_hi - g_lo)
    bounds = [(g_lo, g_hi), NU_BOUNDS]
    starts = [
        (gc, nu)
        for gc in np.linspace(g_lo + margin, g_hi - margin, 5)
        for nu in (0.4, 0.7, 1.2)
    ]
    if init is not None:
        starts.append(tuple(init))

    best_p, best_f = None, np.inf
    for start in starts:
        p, f = _minimize(ds, start, bounds, maxiter=150, xatol=1e-5, fatol=1e-12)
        if f < best_f:
            best_p, best_f = p, f
    best_p, best_f = _minimize(ds, best_p, bounds, maxiter=1000, xatol=1e-7, fatol=1e-16)

    gamma_c_err = nu_err = None
    if n_boot:
        rng_master = np.random.default_rng
        reps = np.empty((n_boot, 2))
        for r in range(n_boot):
            rng = rng_master((int(seed), r))
            boot = _bootstrap_dataset(ds, rng)
            # the replica's covered rate interval can shrink under resampling
            b_lo, b_hi = boot.gamma_range()
            b_bounds = [(b_lo, b_hi), NU_BOUNDS]
            start = (min(max(best_p[0], b_lo), b_hi), best_p[1])
            p, _ = _minimize(boot, start, b_bounds, maxiter=300, xatol=1e-5, fatol=1e-12)
            reps[r] = p
        gamma_c_err = float(reps[:, 0].std(ddof=1))
        nu_err = float(reps[:, 1].std(ddof=1))

    x, y, _ = scaled_coordinates(ds, best_p[0], best_p[1])
    return CollapseFit(
        gamma_c=float(best_p[0]),
        nu=float(best_p[1]),
        gamma_c_err=gamma_c_err,
        nu_err=nu_err,
        quality=best_f,
        scaled_x=x,
        scaled_y=y,
        n_boot=n_boot,
    )


def _bootstrap_dataset(ds, rng):
    rows_n, rows_g, rows_s, rows_e = [], [], [], []
    for n in ds.distinct_sizes():
        idx = np.nonzero(ds.sizes == n)[0]
        draw = rng.choice(idx, size=len(idx), replace=True)
        jitter = rng.normal(0.0, ds.entropy_err[draw])
        rows_n.append(ds.sizes[draw])
        rows_g.append(ds.gammas[draw])
        rows_s.append(ds.entropy[draw] + jitter)
        rows_e.append(ds.entropy_err[draw])
    return make_dataset(
        np.concatenate(rows_n),
        np.concatenate(rows_g),
        np.concatenate(rows_s),
        np.concatenate(rows_e),
        validate=False,
    )
