from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from gaussflow.errors import DomainError


SAMPLES = 20001
SAFETY = 1 + 1e-6
EXPONENTS = (0.5, 0.75)


def smoothstep(s):
    """C^2 ramp, 1 on s <= 1/2 and 0 on s >= 1, with its first two derivatives."""
    s = np.asarray(s, dtype=float)
    x = np.clip(2 * s - 1, 0.0, 1.0)
    inside = (s > 0.5) & (s < 1.0)
    value = 1 - x ** 3 * (10 - 15 * x + 6 * x ** 2)
    d1 = np.where(inside, -2 * 30 * x ** 2 * (1 - x) ** 2, 0.0)
    d2 = np.where(inside, -4 * 60 * x * (1 - x) * (1 - 2 * x), 0.0)
    return value, d1, d2


def ramp(s):
    """Fourth power of the smoothstep, bounded |ramp'| / ramp^(3/4) gives the cutoff estimates."""
    value, d1, d2 = smoothstep(s)
    return value ** 4, 4 * value ** 3 * d1, 12 * value ** 2 * d1 ** 2 + 4 * value ** 3 * d2


def _sup_on_ramp(ratio):
    """sup of ratio(s) over the open transition interval (1/2, 1), refined around the best sample."""
    s = np.linspace(0.5, 1.0, SAMPLES)[1:-1]
    values = ratio(s)
    best = int(np.argmax(values))
    lo, hi = s[max(best - 1, 0)], s[min(best + 1, len(s) - 1)]
    refined = minimize_scalar(lambda x: -float(ratio(np.array([x]))[0]), bounds=(lo, hi), method='bounded',
                              options={'xatol': 1e-12})
    return max(float(values[best]), -float(refined.fun)) * SAFETY


@lru_cache(maxsize=None)
def ramp_constants():
    """Dimensionless constants of the space-time cutoff, C_a for a in 1/2, 3/4 and C for the time derivative."""
    constants = {}
    for a in EXPONENTS:
        first = _sup_on_ramp(lambda s: np.abs(ramp(s)[1]) / ramp(s)[0] ** a)
        second = _sup_on_ramp(lambda s: np.abs(ramp(s)[2]) / ramp(s)[0] ** a)
        constants[f'C_{a}'] = max(first, second)
    constants['C'] = _sup_on_ramp(lambda s: np.abs(ramp(s)[1]) / np.sqrt(ramp(s)[0]))
    return constants


class SpaceTimeCutoff:
    """eta(r, t) = ramp(|r| / R) ramp(-t / T), supported on [-R, R] x [-T, 0], equal to 1 on the half window."""

    def __init__(self, R, T):
        if R <= 0 or T <= 0:
            raise DomainError(f'cutoff window needs R, T > 0, got R={R}, T={T}')
        self.R = float(R)
        self.T = float(T)
        self.constants = ramp_constants()

    def _parts(self, r, t):
        r, t = np.asarray(r, dtype=float), np.asarray(t, dtype=float)
        space = ramp(np.abs(r) / self.R)
        time = ramp(-t / self.T)
        future = t > 0
        time = tuple(np.where(future, 0.0, part) for part in time)
        return r, space, time

    def __call__(self, r, t):
        _, space, time = self._parts(r, t)
        return space[0] * time[0]

    def dr(self, r, t):
        r, space, time = self._parts(r, t)
        return np.sign(r) * space[1] / self.R * time[0]

    def drr(self, r, t):
        _, space, time = self._parts(r, t)
        return space[2] / self.R ** 2 * time[0]

    def dt(self, r, t):
        _, space, time = self._parts(r, t)
        return -space[0] * time[1] / self.T

    def to_dict(self):
        return {'R': self.R, 'T': self.T, **self.constants}


def cutoff_eta(r, t, R, T):
    cutoff = SpaceTimeCutoff(R, T)
    return cutoff(r, t), cutoff.constants


class SolitonCutoff:
    """eta~(s) = ramp(s) on [0, inf), with C0 bounding |eta~'|^2 / eta~ and -eta~''."""

    def __init__(self):
        gradient = _sup_on_ramp(lambda s: ramp(s)[1] ** 2 / ramp(s)[0])
        concavity = _sup_on_ramp(lambda s: -ramp(s)[2])
        self.C0 = max(gradient, concavity)

    def __call__(self, s):
        return ramp(s)[0]

    def derivatives(self, s):
        return ramp(s)

    def to_dict(self):
        return {'C0': self.C0}


def soliton_cutoff(s):
    cutoff = SolitonCutoff()
    return cutoff(s), cutoff.C0
