import numpy as np

from gaussflow.errors import DimensionError, DomainError
from gaussflow.graphgeom import GraphPatch


def _mesh(lower, upper, points, boundary):
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    axes = []
    for lo, hi, num in zip(lower, upper, points):
        if boundary == 'periodic':
            axes.append(lo + (hi - lo) * np.arange(num) / num)
        else:
            axes.append(np.linspace(lo, hi, num))
    return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)


def _box(n, lower, upper, points):
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (n, ))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (n, ))
    points = tuple(np.broadcast_to(np.asarray(points, dtype=int), (n, )))
    return lower, upper, points


def _pad_codim(components, m):
    """Stack the given u components and fill the remaining codimensions with zeros."""
    values = np.stack(components, axis=-1)
    if values.shape[-1] > m:
        raise DimensionError(f'{values.shape[-1]} components do not fit into codimension {m}')
    zeros = np.zeros(values.shape[:-1] + (m - values.shape[-1], ))
    return np.concatenate([values, zeros], axis=-1)


def affine_patch(A, b=None, lower=-1.0, upper=1.0, points=17, boundary='fixed-affine'):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    b = np.zeros(m) if b is None else np.asarray(b, dtype=float)
    lower, upper, points = _box(n, lower, upper, points)
    x = _mesh(lower, upper, points, boundary)
    return GraphPatch(x @ A.T + b, lower, upper, boundary)


def sine_patch(n, m, amplitude, points=32):
    """u^1 = a sin x_1 on the periodic box [0, 2pi)^n."""
    lower, upper, points = _box(n, 0.0, 2 * np.pi, points)
    x = _mesh(lower, upper, points, 'periodic')
    return GraphPatch(_pad_codim([amplitude * np.sin(x[..., 0])], m), lower, upper, 'periodic')


def product_sine_patch(n, m, amplitude, points=32):
    """u^a = a sin x_a for a = 1..n, the maximal slope is (1 + a^2)^(n/2)."""
    lower, upper, points = _box(n, 0.0, 2 * np.pi, points)
    x = _mesh(lower, upper, points, 'periodic')
    return GraphPatch(_pad_codim([amplitude * np.sin(x[..., k]) for k in range(n)], m), lower, upper, 'periodic')


def sine_cosine_patch(n, m, amplitude, points=32):
    """u^1 = a sin x_1 cos x_2 on the periodic box [0, 2pi)^n."""
    if n < 2:
        raise DimensionError('sine_cosine_patch needs n >= 2')
    lower, upper, points = _box(n, 0.0, 2 * np.pi, points)
    x = _mesh(lower, upper, points, 'periodic')
    u = amplitude * np.sin(x[..., 0]) * np.cos(x[..., 1])
    return GraphPatch(_pad_codim([u], m), lower, upper, 'periodic')


def circle_arc_patch(radius, m=2, half_width=None, points=65):
    """Curve u^1 = sqrt(R^2 - x^2) - R, an arc of the circle with curvature 1/R."""
    half_width = 0.5 * radius if half_width is None else half_width
    if half_width >= radius:
        raise DomainError('the arc needs half_width < radius')
    lower, upper, points = _box(1, -half_width, half_width, points)
    x = _mesh(lower, upper, points, 'fixed-affine')[..., 0]
    return GraphPatch(_pad_codim([np.sqrt(radius ** 2 - x ** 2) - radius], m), lower, upper)


def hyperbola_patch(slope=1.0, eps=0.1, m=2, half_width=4.0, points=321):
    """Smoothed cone u^1 = a sqrt(x^2 + eps^2), curvature concentrates near the tip and decays under the flow."""
    lower, upper, points = _box(1, -half_width, half_width, points)
    x = _mesh(lower, upper, points, 'fixed-affine')[..., 0]
    return GraphPatch(_pad_codim([slope * np.sqrt(x ** 2 + eps ** 2)], m), lower, upper)


def grim_reaper_patch(n=1, m=2, delta=0.1, half_width=1.0, points=65):
    """Translating grim reaper u^1 = -log cos x_1, times a flat factor R^(n-1) when n > 1.

    Translates with unit speed in the direction of the u^1 axis, index n of the ambient space.
    """
    if not 0 < delta < np.pi / 2:
        raise DomainError('delta must lie in (0, pi/2)')
    lower = np.full(n, -half_width)
    upper = np.full(n, half_width)
    lower[0], upper[0] = -np.pi / 2 + delta, np.pi / 2 - delta
    _, _, points = _box(n, 0, 1, points)
    x = _mesh(lower, upper, points, 'fixed-affine')
    return GraphPatch(_pad_codim([-np.log(np.cos(x[..., 0]))], m), lower, upper)


def grim_reaper_direction(n, m):
    direction = np.zeros(n + m)
    direction[n] = 1.0
    return direction


def shrinker_sphere_patch(n=2, m=2, half_width=1.0, points=33):
    """Lower hemisphere of the sphere of radius sqrt(2n) around the origin, a self-shrinker."""
    if half_width ** 2 * n >= 2 * n:
        raise DomainError('the box must stay inside the equator of the sphere')
    lower, upper, points = _box(n, -half_width, half_width, points)
    x = _mesh(lower, upper, points, 'fixed-affine')
    u = -np.sqrt(2 * n - np.sum(x ** 2, axis=-1))
    return GraphPatch(_pad_codim([u], m), lower, upper)


PRESETS = {
    'affine': affine_patch,
    'sine': sine_patch,
    'product-sine': product_sine_patch,
    'sine-cosine': sine_cosine_patch,
    'circle-arc': circle_arc_patch,
    'hyperbola': hyperbola_patch,
    'grim-reaper': grim_reaper_patch,
    'shrinker-sphere': shrinker_sphere_patch,
}


def build_patch(recipe):
    """Patch from a config recipe such as {'preset': 'sine', 'n': 2, 'm': 2, 'amplitude': 0.5}."""
    recipe = dict(recipe)
    name = recipe.pop('preset')
    if name not in PRESETS:
        raise DomainError(f'unknown patch preset {name}, choose from {list(PRESETS.keys())}')
    return PRESETS[name](**recipe)
