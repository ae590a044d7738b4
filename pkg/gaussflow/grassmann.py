import math

import numpy as np
import scipy.linalg

from gaussflow.errors import DegeneratePlane, DimensionError, DomainError


ORTHONORMAL_TOL = 1e-12
RANK_TOL = 1e-12
LAMBDA_CAP = 1e12
REGION_KINDS = ['U', 'U2', 'BJX', 'BJX_lambda0', 'T2Lambda']
GEODESIC_BALL_RADIUS = math.sqrt(2) * math.pi / 4


class Plane:
    """Oriented n-plane in R^(m+n), stored as a matrix with orthonormal columns."""

    def __init__(self, basis):
        basis = np.array(basis, dtype=float)
        if basis.ndim != 2 or basis.shape[1] < 1 or basis.shape[0] <= basis.shape[1]:
            raise DimensionError(f'basis needs shape (m+n, n) with m >= 1, got {basis.shape}')
        n = basis.shape[1]
        m = basis.shape[0] - n
        if m < n:
            raise DimensionError(f'codimension m={m} must not be smaller than n={n}')
        gram = basis.T @ basis
        if np.max(np.abs(gram - np.eye(n))) > ORTHONORMAL_TOL:
            raise DegeneratePlane('basis columns are not orthonormal, use orthonormalize()')
        basis.setflags(write=False)
        self.basis = basis
        self.n = n
        self.m = m

    @property
    def ambient_dim(self):
        return self.n + self.m

    @property
    def orientation(self):
        w = np.linalg.det(self.basis[:self.n, :])
        if abs(w) < RANK_TOL:
            return 0
        return 1 if w > 0 else -1

    def projector(self):
        return self.basis @ self.basis.T

    def flipped(self):
        basis = np.array(self.basis)
        basis[:, -1] *= -1
        return Plane(basis)

    def __repr__(self):
        return f'Plane(n={self.n}, m={self.m})'


class JordanSpectrum:

    def __init__(self, mus, thetas, lambdas, infinite):
        self.mus = mus
        self.thetas = thetas
        self.lambdas = lambdas
        self.infinite = infinite

    def __len__(self):
        return len(self.mus)

    def max_pair_product(self):
        """sup over i != j of lambda_i lambda_j."""
        if len(self.lambdas) < 2:
            return 0.0
        if np.any(self.infinite):
            return math.inf
        lam = np.sort(self.lambdas)[::-1]
        return float(lam[0] * lam[1])

    def to_dict(self):
        return {'mus': self.mus, 'thetas': self.thetas, 'lambdas': self.lambdas, 'infinite': self.infinite}


class RegionSpec:

    def __init__(self, kind, lambda0=None, Lambda=None):
        if kind not in REGION_KINDS:
            raise DomainError(f'unknown region {kind}, choose from {REGION_KINDS}')
        if kind == 'BJX_lambda0' and (lambda0 is None or lambda0 <= 0):
            raise DomainError('BJX_lambda0 needs a positive lambda0')
        if kind == 'T2Lambda' and (Lambda is None or Lambda <= 0):
            raise DomainError('T2Lambda needs a positive Lambda')
        self.kind = kind
        self.lambda0 = lambda0
        self.Lambda = Lambda

    def in_certified_range(self):
        if self.kind == 'BJX_lambda0':
            return 0 < self.lambda0 < 1
        if self.kind == 'T2Lambda':
            return 0 < self.Lambda <= math.sqrt(2)
        return True


def reference_plane(n, m):
    return Plane(np.eye(n + m)[:, :n])


def orthonormalize(raw):
    raw = np.array(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] <= raw.shape[1]:
        raise DimensionError(f'expected a tall (m+n, n) matrix, got {raw.shape}')
    q, r = np.linalg.qr(raw)
    diag = np.diag(r)
    scale = max(np.max(np.abs(raw)), 1.0)
    if np.min(np.abs(diag)) <= RANK_TOL * scale:
        raise DegeneratePlane('input columns are linearly dependent')
    # positive diagonal of r keeps the orientation of the raw columns
    q = q * np.sign(diag)
    # one re-orthogonalization pass pushes the Gram error to machine precision
    q2, r2 = np.linalg.qr(q)
    q2 = q2 * np.sign(np.diag(r2))
    return Plane(q2)


def _check_pair(P, Q):
    if P.n != Q.n or P.m != Q.m:
        raise DimensionError(f'planes live in different Grassmannians: ({P.n},{P.m}) vs ({Q.n},{Q.m})')


def pairing_matrix(P, Q):
    _check_pair(P, Q)
    return P.basis.T @ Q.basis


def w_pairing(P, Q):
    return float(np.linalg.det(pairing_matrix(P, Q)))


def jordan_spectrum(P, Q, cap=LAMBDA_CAP):
    W = pairing_matrix(P, Q)
    mus = np.clip(np.linalg.svd(W, compute_uv=False), 0.0, 1.0)
    # sines from the component of Q orthogonal to P, ascending order pairs with descending cosines
    residual = Q.basis - P.basis @ W
    sines = np.sort(np.clip(np.linalg.svd(residual, compute_uv=False), 0.0, 1.0))
    thetas = np.where(mus ** 2 >= 0.5, np.arcsin(sines), np.arccos(mus))
    infinite = mus < 1.0 / cap
    with np.errstate(divide='ignore'):
        lambdas = np.where(infinite, cap, np.tan(np.minimum(thetas, np.pi / 2 - 1.0 / cap)))
    return JordanSpectrum(mus, thetas, lambdas, infinite)


def distance(P, Q):
    return float(np.sqrt(np.sum(jordan_spectrum(P, Q).thetas ** 2)))


def slope_v(P, P0):
    spectrum = jordan_spectrum(P, P0)
    if np.any(spectrum.infinite):
        return math.inf
    return float(1.0 / np.prod(spectrum.mus))


def region_test(P, P0, spec):
    if spec.kind == 'U':
        return w_pairing(P, P0) > 0
    if w_pairing(P, P0) <= 0:
        return False
    spectrum = jordan_spectrum(P, P0)
    if np.any(spectrum.infinite):
        return False
    if spec.kind == 'U2':
        return float(1.0 / np.prod(spectrum.mus)) < 2
    pair = spectrum.max_pair_product()
    if spec.kind == 'BJX':
        return pair < 1
    if spec.kind == 'BJX_lambda0':
        return pair <= spec.lambda0
    return pair <= spec.Lambda


def geodesic_ball_test(P, P0, radius=GEODESIC_BALL_RADIUS):
    return distance(P, P0) < radius


def rotate(P, rotation):
    return Plane(np.asarray(rotation) @ P.basis)


def random_rotation(dim, rng):
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def random_plane(n, m, rng):
    return orthonormalize(rng.standard_normal((n + m, n)))


def plane_with_angles(P0, thetas, seed=0):
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 1 or len(thetas) > P0.n:
        raise DomainError(f'expected at most {P0.n} angles, got {thetas.shape}')
    if np.any(thetas < 0) or np.any(thetas >= np.pi / 2):
        raise DomainError('Jordan angles must lie in [0, pi/2)')
    thetas = np.concatenate([thetas, np.zeros(P0.n - len(thetas))])
    rng = np.random.default_rng(seed)
    complement = scipy.linalg.null_space(P0.basis.T)
    tangent = P0.basis @ random_rotation(P0.n, rng)
    normal = complement @ random_rotation(P0.m, rng)
    basis = tangent * np.cos(thetas) + normal[:, :P0.n] * np.sin(thetas)
    # rotating within the plane leaves the spanned subspace and its angles untouched
    basis = basis @ random_rotation(P0.n, rng)
    return orthonormalize(basis)


### sampled checks


def _positive(P, P0):
    return P.flipped() if w_pairing(P, P0) < 0 else P


def check_reciprocity(n, m, samples, rng, tol=1e-10):
    """Largest |v(P, P0) w(P, P0) - 1| over random planes, oriented so that w > 0."""
    P0 = reference_plane(n, m)
    worst = 0.0
    for _ in range(samples):
        P = _positive(random_plane(n, m, rng), P0)
        v = slope_v(P, P0)
        if math.isfinite(v):
            worst = max(worst, abs(v * w_pairing(P, P0) - 1))
    return {'check': 'reciprocity', 'n': n, 'm': m, 'samples': samples, 'worst': worst, 'passed': worst <= tol}


def check_angle_roundtrip(n, m, samples, rng, tol=1e-10):
    """Planes built from prescribed Jordan angles give those angles back."""
    P0 = reference_plane(n, m)
    worst = 0.0
    for _ in range(samples):
        thetas = rng.uniform(0.0, 0.49 * np.pi, n)
        P = plane_with_angles(P0, thetas, seed=int(rng.integers(2 ** 32)))
        recovered = np.sort(jordan_spectrum(P, P0).thetas)
        worst = max(worst, float(np.max(np.abs(recovered - np.sort(thetas)))))
    return {'check': 'angle_roundtrip', 'n': n, 'm': m, 'samples': samples, 'worst': worst, 'passed': worst <= tol}


def sample_slope_below(n, m, bound, samples, rng):
    """Planes with v < bound, drawn by rejection from uniformly distributed angles in [0, arccos(1 / bound)]."""
    P0 = reference_plane(n, m)
    top = math.acos(1.0 / bound)
    planes = []
    while len(planes) < samples:
        thetas = rng.uniform(0.0, top, n)
        if np.prod(1.0 / np.cos(thetas)) >= bound:
            continue
        planes.append(_positive(plane_with_angles(P0, thetas, seed=int(rng.integers(2 ** 32))), P0))
    return planes


def check_region_inclusion(n, m, samples, rng):
    """Every sampled plane of U2 must pass the B_JX pair test. worst is the largest pair product seen."""
    P0 = reference_plane(n, m)
    u2, bjx = RegionSpec('U2'), RegionSpec('BJX')
    worst, failures = 0.0, 0
    for P in sample_slope_below(n, m, 2.0, samples, rng):
        if not region_test(P, P0, u2):
            continue
        worst = max(worst, jordan_spectrum(P, P0).max_pair_product())
        failures += not region_test(P, P0, bjx)
    return {'check': 'U2_in_BJX', 'n': n, 'm': m, 'samples': samples, 'worst': worst, 'failures': failures,
            'passed': failures == 0}


def check_geodesic_ball_inclusion(n, m, samples, rng, radius=GEODESIC_BALL_RADIUS):
    """Planes inside the open distance ball around P0 must pass the B_JX pair test."""
    P0 = reference_plane(n, m)
    bjx = RegionSpec('BJX')
    worst, failures = 0.0, 0
    for _ in range(samples):
        direction = rng.standard_normal(n)
        thetas = np.abs(direction) / np.linalg.norm(direction) * radius * rng.uniform(0.0, 1.0)
        P = _positive(plane_with_angles(P0, thetas, seed=int(rng.integers(2 ** 32))), P0)
        if not geodesic_ball_test(P, P0, radius):
            continue
        worst = max(worst, jordan_spectrum(P, P0).max_pair_product())
        failures += not region_test(P, P0, bjx)
    return {'check': 'ball_in_BJX', 'n': n, 'm': m, 'samples': samples, 'worst': worst, 'failures': failures,
            'passed': failures == 0}


def check_strictness_witness(m=2):
    """lambda = (1.5, 0.5) lies in B_JX but not in U2, so the inclusion is strict."""
    P0 = reference_plane(2, m)
    P = _positive(plane_with_angles(P0, np.arctan([1.5, 0.5])), P0)
    in_bjx, in_u2 = region_test(P, P0, RegionSpec('BJX')), region_test(P, P0, RegionSpec('U2'))
    return {'check': 'strictness_witness', 'n': 2, 'm': m, 'samples': 1, 'worst': slope_v(P, P0),
            'in_BJX': in_bjx, 'in_U2': in_u2, 'passed': in_bjx and not in_u2}
