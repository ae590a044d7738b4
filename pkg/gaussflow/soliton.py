import numpy as np

from gaussflow.cutoff import SolitonCutoff
from gaussflow.errors import DomainError, NotASoliton
from gaussflow.graphgeom import (ambient_gradient, check_node, gradient_norm2, interior_mask, laplace_beltrami,
                                 normal_projection)


KINDS = ['shrinker', 'translator']
UNIT_TOL = 1e-12
PAIR_LIMIT = np.sqrt(2)
RATIO_SPREAD_LIMIT = 2.0


class SolitonSpec:

    def __init__(self, kind, V0=None, k2=1.0):
        if kind not in KINDS:
            raise DomainError(f'unknown soliton kind {kind}, choose from {KINDS}')
        if kind == 'translator':
            if V0 is None:
                raise DomainError('a translator needs its direction V0')
            V0 = np.asarray(V0, dtype=float)
            if abs(np.linalg.norm(V0) - 1) > UNIT_TOL:
                raise DomainError(f'V0 must be a unit vector, got |V0| = {np.linalg.norm(V0)}')
        self.kind = kind
        self.V0 = V0
        self.k2 = k2
        self.cutoff = SolitonCutoff()

    def to_dict(self):
        return {'kind': self.kind, 'V0': self.V0, 'k2': self.k2, 'C0': self.cutoff.C0}


### residuals


def shrinker_residual_field(patch):
    geo = patch.geometry()
    return geo.H + 0.5 * normal_projection(patch, geo.X)


def translator_residual_field(patch, V0):
    return patch.geometry().H - normal_projection(patch, V0)


def shrinker_residual(patch, node):
    return shrinker_residual_field(patch)[check_node(patch, node)]


def translator_residual(patch, node, V0):
    return translator_residual_field(patch, V0)[check_node(patch, node)]


def residual_field(patch, spec):
    if spec.kind == 'shrinker':
        return shrinker_residual_field(patch)
    return translator_residual_field(patch, spec.V0)


def soliton_mask(patch, lower=None, upper=None):
    # gradients of curvature quantities use one more stencil layer
    return interior_mask(patch, 2, lower, upper)


### drift operators


def drift_L(field, patch):
    """L f = Delta f - 1/2 <X, grad f>."""
    geo = patch.geometry()
    return laplace_beltrami(patch, field) - 0.5 * np.einsum('...a,...a->...', geo.X, ambient_gradient(patch, field))


def drift_LII(field, patch, V0):
    """L_II f = Delta f + <V0, grad f>."""
    return laplace_beltrami(patch, field) + ambient_gradient(patch, field) @ np.asarray(V0, dtype=float)


def drift_operator(field, patch, spec):
    if spec.kind == 'shrinker':
        return drift_L(field, patch)
    return drift_LII(field, patch, spec.V0)


### inequalities


def max_residual(patch, spec, mask):
    return float(np.max(np.linalg.norm(residual_field(patch, spec), axis=-1)[mask]))


def check_soliton_inequalities(patch, spec, eps_hat, lower=None, upper=None, residual_factor=50.0, slack=1.0):
    """Pointwise margins of L v >= eps |B|^2 and of the drift Simons inequality for |B|^2.

    Translators use L_II |B|^2 >= 2|grad |B||^2 - 3|B|^4, shrinkers carry an extra +|B|^2 on the right.
    Margins may dip to -slack * spacing^2. Raises NotASoliton when the residual exceeds
    residual_factor * spacing^2 on the checked nodes.
    """
    mask = soliton_mask(patch, lower, upper)
    h2 = float(np.max(patch.spacing)) ** 2
    residual = max_residual(patch, spec, mask)
    threshold = residual_factor * h2
    if residual > threshold:
        raise NotASoliton(f'{spec.kind} residual {residual:.3e} exceeds {threshold:.3e}', residual, threshold)
    geo = patch.geometry()
    B2 = geo.B2
    slope_margin = drift_operator(geo.v, patch, spec) - eps_hat * B2
    rhs = 2 * gradient_norm2(patch, np.sqrt(B2)) - 3 * B2 ** 2
    if spec.kind == 'shrinker':
        rhs = rhs + B2
    curvature_margin = drift_operator(B2, patch, spec) - rhs
    worst = min(slope_margin[mask].min(), curvature_margin[mask].min())
    worst_node = np.unravel_index(int(np.argmin(np.where(mask, np.minimum(slope_margin, curvature_margin), np.inf))),
                                  patch.grid)
    return {'check': 'soliton_inequalities', 'kind': spec.kind, 'eps_hat': eps_hat,
            'max_residual': residual, 'residual_threshold': threshold,
            'margin_slope': float(slope_margin[mask].min()), 'margin_curvature': float(curvature_margin[mask].min()),
            'slack': slack * h2, 'worst_node': tuple(int(i) for i in worst_node),
            'passed': bool(worst >= -slack * h2)}


def distance_identity(patch, spec, lower=None, upper=None):
    """Defect of L_II r^2 = 2n + 2<V0, X> for translators, of L r^2 = 2n - r^2 for shrinkers."""
    geo = patch.geometry()
    r2 = geo.r ** 2
    if spec.kind == 'translator':
        defect = drift_LII(r2, patch, spec.V0) - (2 * patch.n + 2 * geo.X @ spec.V0)
    else:
        defect = drift_L(r2, patch) - (2 * patch.n - r2)
    mask = soliton_mask(patch, lower, upper)
    return defect, float(np.max(np.abs(defect[mask])))


def drift_r_bound(patch, V0, lower=None, upper=None, min_radius=0.5):
    """Smallest margin of L_II r <= (n + r) / r over nodes with r >= min_radius."""
    geo = patch.geometry()
    bound = np.divide(patch.n + geo.r, geo.r, out=np.full_like(geo.r, np.inf), where=geo.r > 0)
    margin = bound - drift_LII(geo.r, patch, V0)
    mask = soliton_mask(patch, lower, upper) & (geo.r >= min_radius)
    return float(np.min(margin[mask], initial=np.inf))


### localized bound


def localized_soliton_bound(patch, spec, R_list, v0=None, lower=None, upper=None):
    """Table of max f2~ = |B|^2 exp(k2 v) eta~(r / R) against 1/R + 1/R^2 for every window R."""
    geo = patch.geometry()
    mask = soliton_mask(patch, lower, upper)
    f2 = geo.B2 * np.exp(spec.k2 * geo.v)
    rows = []
    for R in R_list:
        eta1 = spec.cutoff(geo.r / R)
        f2_tilde = f2 * eta1
        half = mask & (geo.r <= 0.5 * R)
        rows.append({'R': R,
                     'max_f2_tilde': float(np.max(f2_tilde[mask])),
                     'sup_B2_half': float(np.max(geo.B2[half], initial=0.0)),
                     'ratio': float(np.max(f2_tilde[mask])) / (1 / R + 1 / R ** 2)})
    pair = geo.sigma[..., 0] * geo.sigma[..., 1] if patch.n > 1 else np.zeros(patch.grid)
    hypotheses = {
        'residual': max_residual(patch, spec, mask),
        'max_v': float(np.max(geo.v[mask])),
        'slope_bounded': v0 is None or bool(np.max(geo.v[mask]) <= v0),
        'pair_below_sqrt2': bool(np.max(pair[mask]) < PAIR_LIMIT),
    }
    spread = ratio_spread([row['ratio'] for row in rows])
    return {'rows': rows, 'C0': spec.cutoff.C0, 'hypotheses': hypotheses, 'ratio_spread': spread,
            'ratio_within_limit': spread <= RATIO_SPREAD_LIMIT,
            'passed': bool(hypotheses['slope_bounded'] and hypotheses['pair_below_sqrt2'])}


def ratio_spread(ratios):
    """Largest over smallest ratio across the windows, 1 when every ratio vanishes."""
    top, bottom = max(ratios, default=0.0), min(ratios, default=0.0)
    if top == 0:
        return 1.0
    if bottom == 0:
        return float('inf')
    return top / bottom
