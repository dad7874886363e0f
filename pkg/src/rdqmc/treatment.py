"""Time-dependent therapy forcing terms.

Two mechanisms contribute to the proliferation sink ``f(x, t)``:

* instantaneous irradiation doses, modelled with a linear-quadratic
  survival fraction and spread over exactly one time step of width
  ``window`` starting at the dose time;
* drug concentrations injected at given times that decay exponentially
  afterwards.

Both dose fields may be constants or callables on point arrays.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

DoseField = Union[float, Callable[[np.ndarray], np.ndarray]]


def _dose_values(dose, points):
    if callable(dose):
        vals = np.asarray(dose(points), dtype=float)
        if vals.shape != (len(points),):
            raise ValueError("dose callable must return one value per point")
        return vals
    return np.full(len(points), float(dose))


def _dose_sup(dose, declared, what):
    if declared is not None:
        return float(declared)
    if callable(dose):
        raise ValueError(
            f"{what}: a callable dose field needs an explicit upper bound"
        )
    return float(dose)


@dataclass
class RadiotherapySchedule:
    """Irradiation doses applied over one time step each.

    Parameters
    ----------
    times : array_like
        Dose times, strictly increasing.
    dose : float or callable
        Dose field in Gy, constant or evaluated on point arrays.
    alpha, beta : float
        Linear-quadratic survival parameters; the survival fraction of a
        dose ``z`` is ``exp(-alpha z - beta z**2)``.
    gamma_scale : float
        Magnitude of the pulse; ``1/window`` makes the time integral of
        one pulse equal ``1 - survival_fraction``.
    window : float
        Pulse duration.  A dose at time ``tau`` is active for
        ``tau < t <= tau + window``, so a solver sampling the forcing at
        the end of each step applies it during exactly one step.
    dose_max : float, optional
        Upper bound of the dose field; required for callable doses.
    """

    times: np.ndarray
    dose: DoseField
    alpha: float
    beta: float
    gamma_scale: float
    window: float
    dose_max: Optional[float] = None

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("dose times must be strictly increasing")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("survival parameters must be non-negative")
        if not self.window > 0:
            raise ValueError("pulse window must be positive")
        if not self.gamma_scale > 0:
            raise ValueError("gamma_scale must be positive")

    def effect_values(self, points):
        """Pulse magnitude ``gamma_scale * (1 - survival fraction)``."""
        z = _dose_values(self.dose, points)
        return self.gamma_scale * (1.0 - np.exp(-self.alpha * z - self.beta * z * z))

    def effect_sup(self):
        z = _dose_sup(self.dose, self.dose_max, "radiotherapy")
        return self.gamma_scale * (1.0 - np.exp(-self.alpha * z - self.beta * z * z))


@dataclass
class ChemotherapySchedule:
    """Drug injections with exponential washout.

    An injection at time ``tau`` contributes
    ``alpha * concentration(x) * exp(-beta (t - tau))`` for ``t >= tau``.
    """

    times: np.ndarray
    concentration: DoseField
    alpha: float
    beta: float
    concentration_max: Optional[float] = None

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("injection times must be strictly increasing")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("decay parameters must be non-negative")


def eval_f(points, t, radiotherapy=None, chemotherapy=None):
    """Total therapy forcing ``f(x, t)`` at an array of points.

    Parameters
    ----------
    points : ndarray, shape (n, 2) or (2,)
    t : float
    radiotherapy : RadiotherapySchedule, optional
    chemotherapy : ChemotherapySchedule, optional
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros(len(pts))
    if radiotherapy is not None:
        active = (radiotherapy.times < t) & (
            t <= radiotherapy.times + radiotherapy.window
        )
        n_active = int(np.count_nonzero(active))
        if n_active:
            out += n_active * radiotherapy.effect_values(pts)
    if chemotherapy is not None:
        started = chemotherapy.times[chemotherapy.times <= t]
        if started.size:
            conc = _dose_values(chemotherapy.concentration, pts)
            decay = np.exp(-chemotherapy.beta * (t - started)).sum()
            out += chemotherapy.alpha * decay * conc
    return out


def f_max_bound(radiotherapy=None, chemotherapy=None):
    """Upper bound of ``sup_x f(x, t)`` over all times.

    The bound adds the largest single pulse magnitude (pulses of a
    schedule do not overlap when dose times are at least one window
    apart) to the worst case of all decaying drug terms being at full
    strength simultaneously.
    """
    bound = 0.0
    if radiotherapy is not None and radiotherapy.times.size:
        bound += radiotherapy.effect_sup()
    if chemotherapy is not None and chemotherapy.times.size:
        conc = _dose_sup(
            chemotherapy.concentration,
            chemotherapy.concentration_max,
            "chemotherapy",
        )
        bound += chemotherapy.alpha * conc * chemotherapy.times.size
    return bound


def default_week_protocol(
    dt,
    rt_days=(0, 1, 2, 3, 4),
    ct_days=(0, 1, 2, 3, 4, 5, 6),
    rt_dose=2.0,
    ct_concentration=1.0,
    alpha_rt=0.025,
    alpha_beta_ratio=10.0,
    alpha_ct=0.9,
    ct_halflife_hours=1.8,
):
    """One-week reference protocol.

    Daily irradiation for the first five days and a daily drug injection
    all week, with each dose pulse lasting one time step.  Returns a
    ``(RadiotherapySchedule, ChemotherapySchedule)`` pair; either entry
    is ``None`` when its day list is empty.
    """
    rt = None
    if len(rt_days):
        rt = RadiotherapySchedule(
            times=np.asarray(rt_days, dtype=float),
            dose=rt_dose,
            alpha=alpha_rt,
            beta=alpha_rt / alpha_beta_ratio,
            gamma_scale=1.0 / dt,
            window=dt,
        )
    ct = None
    if len(ct_days):
        ct = ChemotherapySchedule(
            times=np.asarray(ct_days, dtype=float),
            concentration=ct_concentration,
            alpha=alpha_ct,
            beta=24.0 / ct_halflife_hours,
        )
    return rt, ct
