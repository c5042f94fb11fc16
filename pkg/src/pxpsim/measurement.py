"""Projective single-site measurements and their random-time scheduling.

Measurements act directly in the constrained basis: projecting a site onto
the excited state automatically forces its neighbors into the unexcited
state, so a single measurement can collapse three sites' worth of
correlations. Random monitoring is realized with exact exponential waiting
times per site (one independent Poisson stream each) rather than a
discretized grid.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ImpossibleOutcomeError
from .evolution import StateVector

UP, DOWN = 1, 0
BORN = "born"
POSTSELECT = "postselect"

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class MeasurementEvent:
    """A scheduled measurement: where, when, and how the outcome is chosen."""

    time: float
    site: int
    mode: str = BORN
    outcome: int | None = None

    def __post_init__(self):
        if self.time < 0:
            raise ValueError(f"event time must be non-negative, got {self.time}")
        if self.mode == POSTSELECT and self.outcome not in (UP, DOWN):
            raise ValueError("postselect events need an outcome of UP or DOWN")


@dataclass(eq=False)
class MeasurementOutcome:
    site: int
    result: int
    probability: float
    post_state: StateVector


def born_probability(psi, site):
    """Probability of finding the excited state at ``site``."""
    mask = psi.basis.site_mask(site)
    return float(np.sum(np.abs(psi.amps[mask]) ** 2))


def project(psi, site, outcome):
    """Collapse ``psi`` onto the given outcome at ``site`` and renormalize.

    Raises ImpossibleOutcomeError when the outcome probability falls below
    PROB_FLOOR, which in postselected protocols marks a dead-end trajectory.
    """
    if outcome not in (UP, DOWN):
        raise ValueError(f"outcome must be UP (1) or DOWN (0), got {outcome!r}")
    p_up = born_probability(psi, site)
    prob = p_up if outcome == UP else 1.0 - p_up
    if prob <= PROB_FLOOR:
        raise ImpossibleOutcomeError(
            f"outcome {outcome} at site {site} has probability {prob:.3e}"
        )
    keep = psi.basis.site_mask(site)
    if outcome == DOWN:
        keep = ~keep
    amps = np.where(keep, psi.amps, 0.0)
    amps /= np.linalg.norm(amps)
    return MeasurementOutcome(
        site=site,
        result=outcome,
        probability=prob,
        post_state=StateVector(psi.basis, amps),
    )


def sample_measurement(psi, site, rng):
    """Born-rule measurement at ``site`` using one uniform draw from ``rng``."""
    p_up = born_probability(psi, site)
    outcome = UP if rng.random() < p_up else DOWN
    return project(psi, site, outcome)


def schedule_random_events(n_sites, gamma, t_max, rng):
    """Poisson monitoring schedule: rate ``gamma`` per site per unit time.

    Each site draws exponential inter-arrival times until ``t_max`` is
    passed (sites in index order, so a given rng state always yields the
    same schedule). The merged list is sorted by time, ties broken by site.
    """
    if gamma < 0:
        raise ValueError(f"rate must be non-negative, got {gamma}")
    if t_max <= 0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    events = []
    if gamma == 0:
        return events
    for site in range(n_sites):
        t = rng.exponential(1.0 / gamma)
        while t < t_max:
            events.append(MeasurementEvent(time=t, site=site, mode=BORN))
            t += rng.exponential(1.0 / gamma)
    events.sort(key=lambda ev: (ev.time, ev.site))
    return events
