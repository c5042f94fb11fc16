"""Composite monitored-dynamics experiments.

Each public function runs one experiment family: random-time monitoring
ensembles, periodic boundary monitoring, the post-measurement scar-weight
scan, the cumulative rephasing scan, the single-projection entanglement
velocity comparison, and the steady-state entropy scan over sizes and
rates. All stochastic runs derive one independent RNG stream per
trajectory from (master seed, trajectory index), so ensembles are
reproducible and worker-count independent; aggregation is ordered by
trajectory index.
"""

import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .basis import OBC, PBC, bipartition, enumerate_basis
from .errors import CapacityError, ImpossibleOutcomeError
from .evolution import (
    DENSE_DIM_MAX,
    KRYLOV_TOL,
    DensePropagator,
    StateVector,
    dense_propagator,
    entanglement_entropy,
    evolve_dense,
    evolve_krylov,
    fidelity,
    make_neel,
    make_uniform,
    real_matmul,
)
from .hamiltonian import build_hamiltonian
from .measurement import (
    DOWN,
    UP,
    project,
    sample_measurement,
    schedule_random_events,
)
from .scars import scar_decomposition, scar_weight

DEFAULT_PERIOD = 4.72
DEFAULT_GRID_STEP = 0.05
AUTO_DENSE_DIM = 6000
_TIME_CHUNK = 256


# ---------------------------------------------------------------------------
# model bundle: basis + Hamiltonian + propagation engine


@dataclass(eq=False)
class Model:
    """Shared read-only inputs for one chain: basis, operator, propagator."""

    basis: object
    ham: object
    engine: str  # "dense" | "krylov"
    prop: DensePropagator | None
    tol: float
    bimap: object

    @property
    def dim(self):
        return self.basis.dim

    def advance(self, psi, dt):
        """State evolved by ``dt``."""
        if self.engine == "dense":
            return evolve_dense(self.prop, psi, dt)
        return evolve_krylov(self.ham, psi, dt, tol=self.tol)

    def states_at(self, psi, t0, times):
        """Yield the evolved state at each of ``times`` (ascending, >= t0).

        The dense route transforms to the eigenbasis once and emits states
        in batched matrix products; the Krylov route steps sequentially.
        """
        times = np.asarray(times, dtype=float)
        if len(times) == 0:
            return
        if self.engine == "dense":
            coeffs = real_matmul(self.prop.vectors.T, psi.amps)
            for start in range(0, len(times), _TIME_CHUNK):
                chunk = times[start : start + _TIME_CHUNK]
                phases = np.exp(np.outer(-1j * self.prop.energies, chunk - t0))
                block = real_matmul(self.prop.vectors, phases * coeffs[:, None])
                for col in range(block.shape[1]):
                    yield StateVector(psi.basis, block[:, col])
        else:
            state = psi
            t_prev = t0
            for t in times:
                state = evolve_krylov(self.ham, state, t - t_prev, tol=self.tol)
                t_prev = t
                yield state


def build_model(n, boundary, engine="auto", tol=KRYLOV_TOL, dense_limit=DENSE_DIM_MAX):
    """Assemble basis, Hamiltonian, and a propagation engine for one chain.

    ``engine="auto"`` picks the dense route for dimensions up to
    AUTO_DENSE_DIM and Krylov stepping beyond; forcing ``"dense"`` is still
    subject to the ``dense_limit`` capacity guard.
    """
    basis = enumerate_basis(n, boundary)
    ham = build_hamiltonian(basis)
    if engine == "auto":
        engine = "dense" if basis.dim <= min(AUTO_DENSE_DIM, dense_limit) else "krylov"
    if engine not in ("dense", "krylov"):
        raise ValueError(f"unknown engine {engine!r}")
    prop = dense_propagator(ham, dim_max=dense_limit) if engine == "dense" else None
    return Model(
        basis=basis,
        ham=ham,
        engine=engine,
        prop=prop,
        tol=tol,
        bimap=bipartition(basis, n // 2),
    )


def initial_state(model, initial):
    if initial == "neel":
        return make_neel(model.basis)
    if initial == "unif":
        return make_uniform(model.basis)
    raise ValueError(f"initial state must be 'neel' or 'unif', got {initial!r}")


def neel_outcome(site):
    """The outcome at ``site`` consistent with the alternating pattern."""
    return UP if site % 2 == 0 else DOWN


def time_grid(t_max, grid_step):
    """Observation times k*grid_step up to (and including) t_max."""
    count = int(np.floor(t_max / grid_step + 1e-9))
    return np.arange(count + 1) * grid_step


# ---------------------------------------------------------------------------
# records and aggregation


@dataclass(eq=False)
class EventRecord:
    time: float
    site: int
    result: int
    probability: float


@dataclass(eq=False)
class TrajectoryRecord:
    """Observables sampled on the time grid for one stochastic trajectory.

    ``seed_key`` is the full entropy tuple fed to the RNG, so any single
    trajectory can be replayed in isolation. The product of event
    probabilities is the trajectory's Born weight.
    """

    index: int
    seed_key: tuple | None
    times: np.ndarray
    fidelity: np.ndarray
    entropy: np.ndarray
    weight: np.ndarray | None = None
    events: list = field(default_factory=list)
    aborted_period: int | None = None


@dataclass(eq=False)
class EnsembleResult:
    times: np.ndarray
    fidelity_mean: np.ndarray
    fidelity_err: np.ndarray
    entropy_mean: np.ndarray
    entropy_err: np.ndarray
    weight_mean: np.ndarray | None
    weight_err: np.ndarray | None
    n_traj: int
    records: list


def _mean_err(matrix):
    mean = matrix.mean(axis=0)
    if matrix.shape[0] > 1:
        err = matrix.std(axis=0, ddof=1) / np.sqrt(matrix.shape[0])
    else:
        err = np.zeros_like(mean)
    return mean, err


def _aggregate(records, with_weight):
    fid_mean, fid_err = _mean_err(np.stack([r.fidelity for r in records]))
    ent_mean, ent_err = _mean_err(np.stack([r.entropy for r in records]))
    w_mean = w_err = None
    if with_weight:
        w_mean, w_err = _mean_err(np.stack([r.weight for r in records]))
    return EnsembleResult(
        times=records[0].times,
        fidelity_mean=fid_mean,
        fidelity_err=fid_err,
        entropy_mean=ent_mean,
        entropy_err=ent_err,
        weight_mean=w_mean,
        weight_err=w_err,
        n_traj=len(records),
        records=list(records),
    )


# ---------------------------------------------------------------------------
# worker pool plumbing (fork-based so heavy read-only inputs are shared)

_WORK_CTX = None


def _call_worker(args):
    kind, idx = args
    return _WORK_CTX[kind](idx)


def _run_indexed(kind, worker, n_tasks, threads):
    global _WORK_CTX
    if threads <= 1 or n_tasks <= 1:
        return [worker(i) for i in range(n_tasks)]
    try:
        ctx = multiprocessing.get_context("fork")
    except ValueError:
        return [worker(i) for i in range(n_tasks)]
    _WORK_CTX = {kind: worker}
    try:
        with ctx.Pool(processes=min(threads, n_tasks)) as pool:
            return pool.map(_call_worker, [(kind, i) for i in range(n_tasks)])
    finally:
        _WORK_CTX = None


def _seed_tuple(master_seed, index):
    if isinstance(master_seed, (tuple, list)):
        return (*master_seed, index)
    return (int(master_seed), index)


# ---------------------------------------------------------------------------
# random-time monitoring (Poisson streams per site)


def run_random_monitoring(
    model,
    initial,
    gamma,
    t_max,
    grid_step=DEFAULT_GRID_STEP,
    n_traj=1,
    master_seed=0,
    threads=1,
    scars=None,
):
    """Ensemble of trajectories under Poisson-timed local measurements.

    Each trajectory draws its own schedule, alternates exact evolution with
    Born-rule collapses, and records fidelity against the initial state and
    half-chain entropy (plus scar-subspace weight when ``scars`` is given)
    on the time grid.
    """
    if gamma < 0:
        raise ValueError(f"rate must be non-negative, got {gamma}")
    psi0 = initial_state(model, initial)
    times = time_grid(t_max, grid_step)

    def worker(idx):
        seed_key = _seed_tuple(master_seed, idx)
        rng = np.random.default_rng(seed_key)
        events = schedule_random_events(model.basis.size, gamma, t_max, rng)
        return _monitored_trajectory(model, psi0, times, events, rng, seed_key, idx, scars)

    records = _run_indexed("random", worker, n_traj, threads)
    return _aggregate(records, with_weight=scars is not None)


def _monitored_trajectory(model, psi0, times, events, rng, seed_key, idx, scars):
    n_times = len(times)
    fid = np.empty(n_times)
    ent = np.empty(n_times)
    wgt = np.empty(n_times) if scars is not None else None
    log = []

    psi = psi0.copy()
    t_anchor = 0.0
    cursor = 0

    def record_upto(t_limit, inclusive):
        # stream grid points in (t_anchor, t_limit] (or <= t_limit) without
        # re-anchoring: recording does not disturb the state
        nonlocal cursor
        stop = cursor
        while stop < n_times and (
            times[stop] < t_limit or (inclusive and times[stop] <= t_limit + 1e-12)
        ):
            stop += 1
        if stop > cursor:
            for k, state in zip(
                range(cursor, stop), model.states_at(psi, t_anchor, times[cursor:stop])
            ):
                fid[k] = fidelity(state, psi0)
                ent[k] = entanglement_entropy(state, model.bimap)
                if wgt is not None:
                    wgt[k] = scar_weight(state, scars)
            cursor = stop

    for ev in events:
        record_upto(ev.time, inclusive=True)
        psi = model.advance(psi, ev.time - t_anchor)
        t_anchor = ev.time
        out = sample_measurement(psi, ev.site, rng)
        psi = out.post_state
        log.append(
            EventRecord(time=ev.time, site=ev.site, result=out.result, probability=out.probability)
        )
    record_upto(np.inf, inclusive=False)

    return TrajectoryRecord(
        index=idx,
        seed_key=seed_key,
        times=times,
        fidelity=fid,
        entropy=ent,
        weight=wgt,
        events=log,
    )


# ---------------------------------------------------------------------------
# periodic monitoring synchronized with the revival period


@dataclass(eq=False)
class PeriodicResult:
    """Grid time series plus per-period checkpoint tables.

    The grid series holds the post-measurement state at each period
    boundary; the checkpoint arrays carry both sides of every measurement,
    and in postselect mode the per-period outcome probabilities.
    """

    ensemble: EnsembleResult
    period_times: np.ndarray
    fidelity_pre: np.ndarray
    fidelity_post: np.ndarray
    entropy_pre: np.ndarray
    entropy_post: np.ndarray
    probability: np.ndarray | None
    mode: str
    aborted: list


def run_periodic_monitoring(
    model,
    mode="postselect",
    sites=(0,),
    n_periods=10,
    period=DEFAULT_PERIOD,
    grid_step=DEFAULT_GRID_STEP,
    n_traj=1,
    master_seed=0,
    threads=1,
):
    """Alternate evolution over one period with measurements of ``sites``.

    Modes: ``"unitary"`` (no measurements), ``"born"`` (sampled outcomes,
    ``n_traj`` trajectories), ``"postselect"`` (outcomes forced to the
    alternating pattern; a zero-probability outcome aborts the trajectory
    and the remaining grid is NaN-filled). ``grid_step=None`` records at
    period boundaries only.
    """
    if mode not in ("unitary", "born", "postselect"):
        raise ValueError(f"unknown mode {mode!r}")
    sites = list(sites)
    for s in sites:
        if not 0 <= s < model.basis.size:
            raise ValueError(f"site {s} out of range")
    psi0 = make_neel(model.basis)
    if grid_step is None:
        times = np.arange(n_periods + 1) * period
    else:
        interior = time_grid(n_periods * period, grid_step)
        times = np.unique(np.concatenate([interior, np.arange(n_periods + 1) * period]))
        keep = np.ones(len(times), dtype=bool)
        keep[1:] = np.diff(times) > 1e-9
        times = times[keep]
    if mode != "born":
        n_traj = 1

    def worker(idx):
        seed_key = _seed_tuple(master_seed, idx) if mode == "born" else None
        rng = np.random.default_rng(seed_key) if mode == "born" else None
        return _periodic_trajectory(
            model, psi0, mode, sites, n_periods, period, times, rng, seed_key, idx
        )

    raw = _run_indexed("periodic", worker, n_traj, threads)
    records = [r[0] for r in raw]
    pre = np.stack([r[1] for r in raw])  # (traj, period, 2): fidelity, entropy
    post = np.stack([r[2] for r in raw])
    probs = np.stack([r[3] for r in raw]) if mode != "unitary" else None

    ensemble = _aggregate(records, with_weight=False)
    return PeriodicResult(
        ensemble=ensemble,
        period_times=np.arange(1, n_periods + 1) * period,
        fidelity_pre=np.nanmean(pre[:, :, 0], axis=0),
        fidelity_post=np.nanmean(post[:, :, 0], axis=0),
        entropy_pre=np.nanmean(pre[:, :, 1], axis=0),
        entropy_post=np.nanmean(post[:, :, 1], axis=0),
        probability=None if probs is None else np.nanmean(probs, axis=0),
        mode=mode,
        aborted=[(r.index, r.aborted_period) for r in records if r.aborted_period is not None],
    )


def _periodic_trajectory(model, psi0, mode, sites, n_periods, period, times, rng, seed_key, idx):
    n_times = len(times)
    fid = np.full(n_times, np.nan)
    ent = np.full(n_times, np.nan)
    pre = np.full((n_periods, 2), np.nan)
    post = np.full((n_periods, 2), np.nan)
    probs = np.full(n_periods, np.nan)
    log = []
    aborted = None

    def observe(state, k):
        fid[k] = fidelity(state, psi0)
        ent[k] = entanglement_entropy(state, model.bimap)

    psi = psi0.copy()
    cursor = 0
    if n_times and times[0] == 0.0:
        observe(psi, 0)
        cursor = 1
    for n in range(1, n_periods + 1):
        t0, t1 = (n - 1) * period, n * period
        stop = cursor
        while stop < n_times and times[stop] < t1 - 1e-12:
            stop += 1
        for k, state in zip(range(cursor, stop), model.states_at(psi, t0, times[cursor:stop])):
            observe(state, k)
        cursor = stop
        psi = model.advance(psi, t1 - t0)
        pre[n - 1] = (fidelity(psi, psi0), entanglement_entropy(psi, model.bimap))
        if mode != "unitary":
            try:
                p_period = 1.0
                for site in sites:
                    if mode == "postselect":
                        out = project(psi, site, neel_outcome(site))
                    else:
                        out = sample_measurement(psi, site, rng)
                    psi = out.post_state
                    p_period *= out.probability
                    log.append(
                        EventRecord(
                            time=t1, site=site, result=out.result, probability=out.probability
                        )
                    )
                probs[n - 1] = p_period
            except ImpossibleOutcomeError:
                aborted = n
                break
        post[n - 1] = (fidelity(psi, psi0), entanglement_entropy(psi, model.bimap))
        if cursor < n_times and abs(times[cursor] - t1) <= 1e-12:
            observe(psi, cursor)
            cursor += 1

    record = TrajectoryRecord(
        index=idx,
        seed_key=seed_key,
        times=times,
        fidelity=fid,
        entropy=ent,
        events=log,
        aborted_period=aborted,
    )
    return record, pre, post, probs


# ---------------------------------------------------------------------------
# scar-subspace scans


@dataclass(eq=False)
class ScarWeightScan:
    times: np.ndarray
    projected: np.ndarray
    reference: float
    dead_ends: list


def scan_scar_weight(model, scars, t_grid, site=0):
    """Scar weight after projecting the evolved state up at ``site``.

    For each measurement time the alternating state is evolved, projected
    onto the excited outcome, and its scar-subspace weight recorded.
    Impossible outcomes leave NaN gaps. The unmeasured weight (invariant
    under evolution) is returned as reference.
    """
    psi0 = make_neel(model.basis)
    t_grid = np.asarray(t_grid, dtype=float)
    reference = scar_weight(psi0, scars)
    projected = np.full(len(t_grid), np.nan)
    dead = []
    for k, state in enumerate(model.states_at(psi0, 0.0, t_grid)):
        try:
            projected[k] = scar_weight(project(state, site, UP).post_state, scars)
        except ImpossibleOutcomeError:
            dead.append(float(t_grid[k]))
    return ScarWeightScan(times=t_grid, projected=projected, reference=reference, dead_ends=dead)


@dataclass(eq=False)
class RephasingResult:
    """Per-scar phase and amplitude tables under cumulative projections.

    Row ``n`` describes the period-evolved state after forcing the
    alternating pattern on sites ``0..n-1``. Only scars whose initial
    squared amplitude exceeds the floor are tabulated.
    """

    n_measured: np.ndarray
    scar_indices: np.ndarray
    scar_energies: np.ndarray
    sin_phi: np.ndarray  # (n_max+1, n_reported)
    amp_sq: np.ndarray
    weight: np.ndarray
    dead_end: int | None


def rephasing_scan(model, scars, n_max, period=DEFAULT_PERIOD, amp_floor=0.005):
    """Cumulative alternating-pattern projections on the period-evolved state."""
    if not 0 <= n_max <= model.basis.size:
        raise ValueError(f"n_max must lie in [0, {model.basis.size}], got {n_max}")
    psi = model.advance(make_neel(model.basis), period)
    dec0 = scar_decomposition(psi, scars)
    reported = np.nonzero(dec0.amplitudes**2 > amp_floor)[0]

    sin_phi = np.full((n_max + 1, len(reported)), np.nan)
    amp_sq = np.full((n_max + 1, len(reported)), np.nan)
    weight = np.full(n_max + 1, np.nan)
    dead_end = None
    dec = dec0
    for n in range(n_max + 1):
        if n > 0:
            try:
                psi = project(psi, n - 1, neel_outcome(n - 1)).post_state
            except ImpossibleOutcomeError:
                dead_end = n
                break
            dec = scar_decomposition(psi, scars)
        sin_phi[n] = np.sin(dec.phases[reported])
        amp_sq[n] = dec.amplitudes[reported] ** 2
        weight[n] = dec.weight
    return RephasingResult(
        n_measured=np.arange(n_max + 1),
        scar_indices=reported,
        scar_energies=scars.energies[reported],
        sin_phi=sin_phi,
        amp_sq=amp_sq,
        weight=weight,
        dead_end=dead_end,
    )


# ---------------------------------------------------------------------------
# entanglement velocity after a single scar-destroying projection


@dataclass(eq=False)
class VelocityResult:
    times: np.ndarray
    entropy_unitary: np.ndarray
    entropy_measured: np.ndarray
    slope_unitary: float
    slope_measured: float
    fit_window: tuple
    site: int
    outcome: int
    probability: float


def _fit_slope(times, values, window):
    sel = (times >= window[0]) & (times <= window[1])
    if sel.sum() < 2:
        raise ValueError(f"fit window {window} contains fewer than two grid points")
    coeffs = np.polyfit(times[sel], values[sel], 1)
    return float(coeffs[0])


def velocity_experiment(
    model,
    period=DEFAULT_PERIOD,
    t_max=None,
    grid_step=DEFAULT_GRID_STEP,
    outcome=DOWN,
    site=None,
    fit_window=None,
):
    """Entropy growth with and without one projection at the first revival.

    The default target is the mid-chain site that carries an excitation in
    the alternating pattern (requires N/2 even), projected to the unexcited
    outcome at t = period: a maximally scar-destroying measurement. Slopes
    come from least-squares fits on a shared window after the projection.
    """
    n = model.basis.size
    if site is None:
        if (n // 2) % 2:
            raise ValueError(
                f"default mid-chain target needs N/2 even, got N={n}; pass a site explicitly"
            )
        site = n // 2 - 2
    if t_max is None:
        t_max = 3 * period
    if fit_window is None:
        fit_window = (period + 0.5, min(t_max, 3 * period))

    psi0 = make_neel(model.basis)
    times = time_grid(t_max, grid_step)
    ent_u = np.empty(len(times))
    for k, state in enumerate(model.states_at(psi0, 0.0, times)):
        ent_u[k] = entanglement_entropy(state, model.bimap)

    psi_T = model.advance(psi0, period)
    out = project(psi_T, site, outcome)
    ent_m = ent_u.copy()
    after = np.nonzero(times > period + 1e-12)[0]
    for k, state in zip(after, model.states_at(out.post_state, period, times[after])):
        ent_m[k] = entanglement_entropy(state, model.bimap)

    return VelocityResult(
        times=times,
        entropy_unitary=ent_u,
        entropy_measured=ent_m,
        slope_unitary=_fit_slope(times, ent_u, fit_window),
        slope_measured=_fit_slope(times, ent_m, fit_window),
        fit_window=tuple(fit_window),
        site=site,
        outcome=outcome,
        probability=out.probability,
    )


# ---------------------------------------------------------------------------
# steady-state entropy table over (size, rate)


@dataclass(eq=False)
class SteadyScanResult:
    sizes: np.ndarray
    gammas: np.ndarray
    entropy: np.ndarray
    entropy_err: np.ndarray
    window: tuple
    skipped: list


def steady_state_scan(
    sizes,
    gammas,
    boundary=OBC,
    window=(60.0, 80.0),
    grid_step=DEFAULT_GRID_STEP,
    n_traj=100,
    master_seed=0,
    engine="auto",
    threads=1,
):
    """Long-time entropy table feeding the scaling collapse.

    Runs the alternating initial state under random monitoring for each
    (size, rate) pair and time-averages the half-chain entropy over the
    window, then averages over trajectories. Rate zero has no measurement
    steady state; those cells are skipped and reported separately.
    """
    rows_n, rows_g, rows_s, rows_e = [], [], [], []
    skipped = []
    for i_n, n in enumerate(sizes):
        model = build_model(n, boundary, engine=engine)
        for i_g, gamma in enumerate(gammas):
            if gamma == 0:
                skipped.append((n, gamma, "no stationary state without measurements"))
                continue
            ens = run_random_monitoring(
                model,
                "neel",
                gamma,
                t_max=window[1],
                grid_step=grid_step,
                n_traj=n_traj,
                master_seed=(master_seed, i_n, i_g),
                threads=threads,
            )
            sel = (ens.times >= window[0]) & (ens.times <= window[1])
            per_traj = np.array([r.entropy[sel].mean() for r in ens.records])
            mean, err = _mean_err(per_traj[:, None])
            rows_n.append(n)
            rows_g.append(gamma)
            rows_s.append(float(mean[0]))
            rows_e.append(float(err[0]))
    return SteadyScanResult(
        sizes=np.array(rows_n),
        gammas=np.array(rows_g),
        entropy=np.array(rows_s),
        entropy_err=np.array(rows_e),
        window=tuple(window),
        skipped=skipped,
    )


# ---------------------------------------------------------------------------
# revival-period calibration


def calibrate_period(model, t_lo=1.0, t_hi=8.0, step=0.01, min_height=0.05):
    """Locate the first revival: the first local fidelity maximum after t_lo.

    Returns the parabolically refined peak position. Useful because the
    finite-size peak drifts slightly away from the nominal period.
    """
    psi0 = make_neel(model.basis)
    times = np.arange(t_lo, t_hi + step / 2, step)
    fid = np.empty(len(times))
    for k, state in enumerate(model.states_at(psi0, 0.0, times)):
        fid[k] = fidelity(state, psi0)
    for j in range(1, len(fid) - 1):
        if fid[j] >= fid[j - 1] and fid[j] >= fid[j + 1] and fid[j] > min_height:
            denom = fid[j - 1] - 2 * fid[j] + fid[j + 1]
            shift = 0.0 if denom == 0 else 0.5 * (fid[j - 1] - fid[j + 1]) / denom
            return float(times[j] + shift * step)
    raise ValueError(
        f"no fidelity maximum above {min_height} found in ({t_lo}, {t_hi}) at step {step}"
    )
