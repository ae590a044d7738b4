from concurrent.futures import ThreadPoolExecutor
import math

import numpy as np
from scipy.optimize import brentq

from gaussflow.errors import CapError, DimensionError, DomainError
from gaussflow.graphgeom import ShapeTensor, coordinate_count
from gaussflow.util import thread_count


FORMS = ['logv', 'v']
CONSTRAINTS = ['pair', 'slope']
MAX_ORACLE_DIM = 6
MARGIN_TOL = 1e-9


class LambdaProfile:

    def __init__(self, lambdas, m=None):
        lambdas = np.array(lambdas, dtype=float).reshape(-1)
        if not np.all(np.isfinite(lambdas)) or np.any(lambdas < 0):
            raise DomainError(f'lambda profile needs finite nonnegative entries, got {lambdas}')
        self.lambdas = lambdas
        self.n = len(lambdas)
        self.m = self.n if m is None else int(m)
        if self.m < self.n:
            raise DimensionError(f'profile with n={self.n} needs m >= n, got m={self.m}')

    def slope(self):
        return float(np.prod(np.sqrt(1.0 + self.lambdas ** 2)))

    def max_pair_product(self):
        if self.n < 2:
            return 0.0
        lam = np.sort(self.lambdas)[::-1]
        return float(lam[0] * lam[1])

    def permuted(self, perm):
        return LambdaProfile(self.lambdas[perm], self.m)

    def to_dict(self):
        return {'lambdas': self.lambdas, 'n': self.n, 'm': self.m}

    def __repr__(self):
        return f'LambdaProfile({np.array2string(self.lambdas, precision=4)}, m={self.m})'


class BoundReport:

    def __init__(self, kind, threshold, samples, min_rayleigh, claimed_bound, worst_profile, details=None):
        self.kind = kind
        self.threshold = threshold
        self.samples = samples
        self.min_rayleigh = min_rayleigh
        self.claimed_bound = claimed_bound
        self.worst_profile = worst_profile
        self.details = details or []

    @property
    def margin(self):
        if self.claimed_bound is None:
            return None
        return self.min_rayleigh - self.claimed_bound

    @property
    def passed(self):
        if self.claimed_bound is None:
            return self.min_rayleigh > 0
        return self.margin >= -MARGIN_TOL

    def to_dict(self):
        return {'kind': self.kind, 'threshold': self.threshold, 'samples': self.samples,
                'min_rayleigh': self.min_rayleigh, 'claimed_bound': self.claimed_bound,
                'margin': self.margin, 'passed': self.passed, 'worst_profile': self.worst_profile,
                'details': self.details}


def _check_dims(profile, h):
    if h.shape[-3:] != (profile.m, profile.n, profile.n):
        raise DimensionError(f'shape tensor {h.shape[-3:]} does not match profile (m={profile.m}, n={profile.n})')


def _as_array(h):
    return h.h if isinstance(h, ShapeTensor) else np.asarray(h, dtype=float)


def q_logv_batch(lambdas, h):
    """Closed form of sum_i Hess(log v)(dgamma(e_i), dgamma(e_i)), h with shape (..., m, n, n)."""
    lam = np.asarray(lambdas, dtype=float)
    n = lam.shape[-1]
    idx = np.arange(n)
    hd = h[..., :n, :, :]
    off = ~np.eye(n, dtype=bool)
    distinct = off[:, :, None] & off[:, None, :] & off[None, :, :]

    diag = np.diagonal(hd, axis1=-2, axis2=-1)  # diag[.., a, i] = h_{a,ii}
    own = hd[..., idx, idx, :]  # own[.., i, j] = h_{i,ij}
    total = np.sum(h[..., n:, :, :] ** 2, axis=(-3, -2, -1))
    total = total + np.sum((1 + lam ** 2) * diag[..., idx, idx] ** 2, axis=-1)
    total = total + np.sum(diag ** 2 * off, axis=(-2, -1))
    total = total + np.sum((2 + lam ** 2)[..., :, None] * own ** 2 * off, axis=(-2, -1))
    pair = lam[..., :, None] * lam[..., None, :]
    total = total + 2 * np.sum(pair * own * np.swapaxes(diag, -1, -2) * off, axis=(-2, -1))
    total = total + np.sum(hd ** 2 * distinct, axis=(-3, -2, -1))
    swapped = np.swapaxes(hd, -3, -2)  # swapped[.., i, j, k] = h_{j,ik}
    total = total + np.sum(pair[..., :, :, None] * hd * swapped * distinct, axis=(-3, -2, -1))
    return total


def q_logv(profile, h):
    h = _as_array(h)
    _check_dims(profile, h)
    return float(q_logv_batch(profile.lambdas, h))


def logv_coframe_tensor(profile):
    """Coefficients G[j, a, k, b] of omega_ja (x) omega_kb in Hess log v at a point with the given lambdas."""
    n, m = profile.n, profile.m
    lam = profile.lambdas
    G = np.einsum('jk,ab->jakb', np.eye(n), np.eye(m))
    for j in range(n):
        G[j, j, j, j] += lam[j] ** 2
        for k in range(n):
            if k != j:
                G[j, k, k, j] += lam[j] * lam[k]
    return G


def q_logv_via_coframe(profile, h):
    h = _as_array(h)
    _check_dims(profile, h)
    # omega_ja(dgamma(e_i)) = h_{a,ij}
    omega = np.transpose(h, (1, 2, 0))
    return float(np.einsum('ija,jakb,ikb->', omega, logv_coframe_tensor(profile), omega))


def q_v_batch(lambdas, h):
    lam = np.asarray(lambdas, dtype=float)
    n = lam.shape[-1]
    # h[.., j, i, j] = h_{j,ij}
    grad = np.einsum('...j,...jij->...i', lam, h[..., :n, :, :])
    slope = np.prod(np.sqrt(1.0 + lam ** 2), axis=-1)
    return slope * (q_logv_batch(lam, h) + np.sum(grad ** 2, axis=-1))


def q_v(profile, h):
    h = _as_array(h)
    _check_dims(profile, h)
    return float(q_v_batch(profile.lambdas, h))


QUADRATIC_FORMS = {
    'logv': q_logv_batch,
    'v': q_v_batch,
}


def _check_form(form):
    if form not in QUADRATIC_FORMS:
        raise DomainError(f'unknown form {form}, choose from {FORMS}')
    return QUADRATIC_FORMS[form]


def form_matrix(profile, form='logv'):
    """Symmetric matrix of the form in ShapeTensor coordinates, assembled by polarization."""
    evaluate = _check_form(form)
    if profile.n > MAX_ORACLE_DIM or profile.m > MAX_ORACLE_DIM:
        raise CapError(f'eigen oracle is capped at n, m <= {MAX_ORACLE_DIM}, got n={profile.n}, m={profile.m}')
    n, m = profile.n, profile.m
    dim = coordinate_count(n, m)
    basis = np.array([ShapeTensor.from_coordinates(e, n, m).h for e in np.eye(dim)])
    diag = evaluate(profile.lambdas, basis)
    sums = evaluate(profile.lambdas, basis[:, None] + basis[None, :])
    matrix = 0.5 * (sums - diag[:, None] - diag[None, :])
    return 0.5 * (matrix + matrix.T)


def rayleigh_min(profile, form='logv'):
    return float(np.linalg.eigvalsh(form_matrix(profile, form))[0])


def tail_bound_matrix(profile, lambda0):
    """Matrix of (1 - lambda0)|B|^2 + sum_ij lambda_i^2 h_{i,ij}^2, the intermediate chain bound."""
    n, m = profile.n, profile.m
    dim = coordinate_count(n, m)
    basis = np.array([ShapeTensor.from_coordinates(e, n, m).h for e in np.eye(dim)])
    idx = np.arange(n)
    own = basis[:, idx, idx, :]  # own[c, i, j] = h_{i,ij}
    weighted = own * profile.lambdas[None, :, None]
    flat = weighted.reshape(dim, -1)
    return (1 - lambda0) * np.eye(dim) + flat @ flat.T


def tail_bound_logv(profile, lambda0):
    """Smallest eigenvalue of the log v form minus the intermediate bound, nonnegative when the chain holds."""
    gap = form_matrix(profile, 'logv') - tail_bound_matrix(profile, lambda0)
    return float(np.linalg.eigvalsh(gap)[0])


### admissible profile sampling


def profile_is_admissible(lambdas, constraint, threshold):
    lambdas = np.asarray(lambdas)
    if constraint == 'pair':
        if len(lambdas) < 2:
            return True
        lam = np.sort(lambdas)[::-1]
        return lam[0] * lam[1] <= threshold * (1 + 1e-12)
    return np.sum(0.5 * np.log1p(lambdas ** 2)) <= math.log(threshold) + 1e-12


def _project(lambdas, constraint, threshold):
    """Radially scale an inadmissible candidate onto the constraint boundary."""
    if profile_is_admissible(lambdas, constraint, threshold):
        return lambdas
    if constraint == 'pair':
        lam = np.sort(lambdas)[::-1]
        return lambdas * math.sqrt(threshold / (lam[0] * lam[1]))
    target = math.log(threshold)
    scale = brentq(lambda t: np.sum(0.5 * np.log1p((t * lambdas) ** 2)) - target, 0.0, 1.0, xtol=1e-15)
    return lambdas * scale


def lambda_range(constraint, threshold, n, lambda_cap):
    if constraint == 'slope':
        return math.sqrt(max(threshold ** 2 - 1, 0.0))
    return lambda_cap


def sample_profiles(constraint, threshold, n, trials, rng, lambda_cap=8.0):
    if constraint not in CONSTRAINTS:
        raise DomainError(f'unknown constraint {constraint}, choose from {CONSTRAINTS}')
    upper = lambda_range(constraint, threshold, n, lambda_cap)
    if upper == 0:
        return np.zeros((trials, n))
    candidates = rng.uniform(0.0, upper, size=(trials, n))
    return np.array([_project(c, constraint, threshold) for c in candidates])


def saturating_profiles(constraint, threshold, n, count=16, lambda_cap=8.0):
    """Deterministic profiles on the constraint boundary: all entries equal, and one large entry with the rest equal."""
    if constraint == 'pair':
        if n == 1:
            return np.linspace(0.0, lambda_cap, count)[:, None]
        equal = math.sqrt(threshold)
        profiles = [np.full(n, equal)]
        for large in np.geomspace(equal, max(lambda_cap, equal), count):
            profiles.append(np.concatenate([[large], np.full(n - 1, threshold / large)]))
        return np.array(profiles)
    if threshold <= 1:
        return np.zeros((1, n))
    single = math.sqrt(threshold ** 2 - 1)
    if n == 1:
        return np.linspace(0.0, single, count)[:, None]
    profiles = [np.full(n, math.sqrt(threshold ** (2.0 / n) - 1))]
    for large in np.linspace(0.0, single, count):
        rest = math.sqrt(max((threshold ** 2 / (1 + large ** 2)) ** (1.0 / (n - 1)) - 1, 0.0))
        profiles.append(np.concatenate([[large], np.full(n - 1, rest)]))
    return np.array(profiles)


def _rayleigh(form):
    _check_form(form)
    return lambda profile: rayleigh_min(profile, form)


def _scan(evaluate, constraint, threshold, n, m, trials, seed, lambda_cap, extra=None):
    rng = np.random.default_rng([seed, n, m])
    candidates = [saturating_profiles(constraint, threshold, n, lambda_cap=lambda_cap),
                  sample_profiles(constraint, threshold, n, trials, rng, lambda_cap)]
    if extra is not None and len(extra) > 0:
        # profiles admissible for a smaller threshold stay admissible for this one
        candidates.append(np.asarray(extra))
    profiles = [LambdaProfile(lam, m) for lam in np.concatenate(candidates)]
    with ThreadPoolExecutor(max_workers=thread_count()) as executor:
        values = list(executor.map(evaluate, profiles))
    worst = int(np.argmin(values))
    return values[worst], profiles[worst], len(profiles)


def _run_scan(kind, evaluate, constraint, threshold, claimed, trials, dims, seed, lambda_cap, carry=None):
    details = []
    for n, m in dims:
        extra = None if carry is None else carry.get((n, m))
        value, worst, samples = _scan(evaluate, constraint, threshold, n, m, trials, seed, lambda_cap, extra)
        details.append(BoundReport(kind, threshold, samples, value, claimed, worst))
        print(f'{kind:<14} threshold {threshold:<6} n={n} m={m} samples {samples:<6} min {value:.6f}')
    overall = min(details, key=lambda rep: rep.min_rayleigh)
    return BoundReport(kind, threshold, sum(rep.samples for rep in details), overall.min_rayleigh,
                       claimed, overall.worst_profile, details)


def certify_lambda0_bound(lambda0, trials, dims, seed, lambda_cap=8.0):
    """Certify sum_i Hess(log v)(dgamma(e_i), dgamma(e_i)) >= (1 - lambda0)|B|^2 on sup lambda_i lambda_j <= lambda0."""
    if not 0 < lambda0 < 1:
        raise DomainError(f'lambda0 must lie in (0, 1), got {lambda0}')
    return _run_scan('lambda0', _rayleigh('logv'), 'pair', lambda0, 1 - lambda0, trials, dims, seed, lambda_cap)


def certify_tail_bound(lambda0, trials, dims, seed, lambda_cap=8.0):
    """Smallest gap between the log v form and (1 - lambda0)|B|^2 + sum_ij lambda_i^2 h_{i,ij}^2 on the same profiles."""
    if not 0 < lambda0 < 1:
        raise DomainError(f'lambda0 must lie in (0, 1), got {lambda0}')
    return _run_scan('tail', lambda profile: tail_bound_logv(profile, lambda0), 'pair', lambda0, 0.0, trials, dims,
                     seed, lambda_cap)


def estimate_eps0(v0, trials, dims, seed, carry=None):
    if v0 < 1:
        raise DomainError(f'v0 must be at least 1, got {v0}')
    return _run_scan('eps0', _rayleigh('v'), 'slope', v0, None, trials, dims, seed, None, carry)


def estimate_eps_T2(Lambda, trials, dims, seed, lambda_cap=8.0, carry=None):
    if not 0 < Lambda < math.sqrt(2):
        raise DomainError(f'Lambda must lie in (0, sqrt(2)), got {Lambda}')
    return _run_scan('eps_T2', _rayleigh('logv'), 'pair', Lambda, None, trials, dims, seed, lambda_cap, carry)


def sweep_thresholds(estimator, thresholds, trials, dims, seed, **kwargs):
    """Run an estimator over ascending thresholds, re-evaluating every earlier worst profile.

    Admissible sets grow with the threshold, so the carried profiles make the estimates nonincreasing.
    """
    reports = []
    carry = {}
    for threshold in sorted(thresholds):
        report = estimator(threshold, trials, dims, seed, carry=carry, **kwargs)
        for rep, (n, m) in zip(report.details, dims):
            carry.setdefault((n, m), []).append(rep.worst_profile.lambdas)
        reports.append(report)
    return reports


def check_monotone(reports, tol=MARGIN_TOL):
    """Estimates over ascending thresholds must not increase beyond tol."""
    values = [rep.min_rayleigh for rep in reports]
    worst = max((b - a for a, b in zip(values, values[1:])), default=0.0)
    return {'check': 'monotone', 'kind': reports[0].kind if reports else None,
            'thresholds': [rep.threshold for rep in reports], 'estimates': values,
            'worst_increase': worst, 'passed': worst <= tol}
