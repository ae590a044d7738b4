import numpy as np

from gaussflow.errors import DimensionError, DomainError, StencilError
from gaussflow.grassmann import orthonormalize


BOUNDARIES = ['periodic', 'fixed-affine']
MIN_POINTS = 5
DEGENERATE_TOL = 1e-8


class GraphPatch:
    """Discretized graph map u: box in R^n -> R^m, carrying F(x) = (x, u(x)).

    Values are stored node-major with shape (*grid, m). Periodic axes exclude the right endpoint of
    the box, fixed-affine axes include it.
    """

    def __init__(self, values, lower, upper, boundary='fixed-affine'):
        values = np.array(values, dtype=float)
        n = values.ndim - 1
        if n < 1:
            raise DimensionError('values need shape (*grid, m)')
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (n, )).copy()
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (n, )).copy()
        m = values.shape[-1]
        if m < n:
            raise DimensionError(f'codimension m={m} must not be smaller than n={n}')
        grid = values.shape[:-1]
        if min(grid) < MIN_POINTS:
            raise DimensionError(f'every axis needs at least {MIN_POINTS} nodes, got {grid}')
        if np.any(upper <= lower):
            raise DomainError('box needs upper > lower on every axis')
        if boundary not in BOUNDARIES:
            raise DomainError(f'unknown boundary {boundary}, choose from {BOUNDARIES}')
        if not np.all(np.isfinite(values)):
            raise DomainError('patch values must be finite')
        values.setflags(write=False)
        self.values = values
        self.lower, self.upper = lower, upper
        self.lower.setflags(write=False)
        self.upper.setflags(write=False)
        self.n, self.m = n, m
        self.grid = tuple(grid)
        self.boundary = boundary
        self._geometry = {}

    @property
    def spacing(self):
        nodes = np.array(self.grid, dtype=float)
        if self.boundary == 'periodic':
            return (self.upper - self.lower) / nodes
        return (self.upper - self.lower) / (nodes - 1)

    def axes(self):
        return [self.lower[k] + self.spacing[k] * np.arange(self.grid[k]) for k in range(self.n)]

    def coordinates(self):
        """Node coordinates with shape (*grid, n)."""
        return np.stack(np.meshgrid(*self.axes(), indexing='ij'), axis=-1)

    def with_values(self, values):
        return GraphPatch(values, self.lower, self.upper, self.boundary)

    def geometry(self, align=False):
        if align not in self._geometry:
            self._geometry[align] = geometry_fields(self, align)
        return self._geometry[align]

    def to_dict(self):
        return {'n': self.n, 'm': self.m, 'lower': self.lower, 'upper': self.upper,
                'grid': self.grid, 'boundary': self.boundary}

    def __repr__(self):
        return f'GraphPatch(n={self.n}, m={self.m}, grid={self.grid}, boundary={self.boundary})'


class ShapeTensor:
    """Second fundamental form components h[alpha, i, j] in an adapted orthonormal frame."""

    def __init__(self, h, frame=None):
        h = np.array(h, dtype=float)
        if h.ndim != 3 or h.shape[1] != h.shape[2]:
            raise DimensionError(f'expected shape (m, n, n), got {h.shape}')
        h = 0.5 * (h + np.swapaxes(h, 1, 2))
        h.setflags(write=False)
        self.h = h
        self.m, self.n = h.shape[0], h.shape[1]
        self.frame = frame

    def norm2(self):
        return float(np.sum(self.h ** 2))

    def coordinates(self):
        """Pack into m*n(n+1)/2 coordinates whose Euclidean norm equals |B|."""
        rows, cols = np.triu_indices(self.n)
        weights = np.where(rows == cols, 1.0, np.sqrt(2))
        return (self.h[:, rows, cols] * weights).reshape(-1)

    @classmethod
    def from_coordinates(cls, coords, n, m):
        rows, cols = np.triu_indices(n)
        weights = np.where(rows == cols, 1.0, np.sqrt(2))
        coords = np.asarray(coords, dtype=float).reshape(m, len(rows))
        h = np.zeros((m, n, n))
        h[:, rows, cols] = coords / weights
        h[:, cols, rows] = coords / weights
        return cls(h)

    def to_dict(self):
        return {'h': self.h}


class GeometryFields:
    """Per-node geometry of a patch, every array node-major with shape (*grid, ...)."""

    def __init__(self, **fields):
        self.__dict__.update(fields)


def coordinate_count(n, m):
    return m * n * (n + 1) // 2


### finite difference stencils, spatial axes come first


def _pad(field, n, boundary, width):
    pad = [(width, width)] * n + [(0, 0)] * (field.ndim - n)
    if boundary == 'periodic':
        return np.pad(field, pad, mode='wrap')
    # odd reflection continues the boundary layer affinely
    return np.pad(field, pad, mode='reflect', reflect_type='odd')


def _window(padded, grid, width, offsets):
    return padded[tuple(slice(width + off, width + off + size) for off, size in zip(offsets, grid))]


def _shift(n, axis, step):
    offsets = [0] * n
    offsets[axis] = step
    return offsets


def first_derivatives(field, patch, order=2):
    """Central differences, appends a trailing axis of length n."""
    if order not in (2, 4):
        raise DomainError(f'difference order must be 2 or 4, got {order}')
    n, grid, h = patch.n, patch.grid, patch.spacing
    width = order // 2
    padded = _pad(np.asarray(field, dtype=float), n, patch.boundary, width)
    derivs = []
    for k in range(n):
        def w(step):
            return _window(padded, grid, width, _shift(n, k, step))
        if order == 2:
            derivs.append((w(1) - w(-1)) / (2 * h[k]))
        else:
            derivs.append((-w(2) + 8 * w(1) - 8 * w(-1) + w(-2)) / (12 * h[k]))
    return np.stack(derivs, axis=-1)


def second_derivatives(field, patch):
    """Second order stencils, mixed terms by the 4-point cross, appends two trailing axes."""
    n, grid, h = patch.n, patch.grid, patch.spacing
    padded = _pad(np.asarray(field, dtype=float), n, patch.boundary, 1)
    center = _window(padded, grid, 1, [0] * n)
    out = np.empty(center.shape + (n, n))
    for k in range(n):
        plus = _window(padded, grid, 1, _shift(n, k, 1))
        minus = _window(padded, grid, 1, _shift(n, k, -1))
        out[..., k, k] = (plus - 2 * center + minus) / h[k] ** 2
        for l in range(k + 1, n):
            corners = []
            for sk, sl in [(1, 1), (1, -1), (-1, 1), (-1, -1)]:
                offsets = [0] * n
                offsets[k], offsets[l] = sk, sl
                corners.append(_window(padded, grid, 1, offsets))
            mixed = (corners[0] - corners[1] - corners[2] + corners[3]) / (4 * h[k] * h[l])
            out[..., k, l] = mixed
            out[..., l, k] = mixed
    return out


### field level geometry


def jacobian_field(patch, order=2):
    return first_derivatives(patch.values, patch, order)


def hessian_field(patch):
    return second_derivatives(patch.values, patch)


def induced_metric(Du):
    Du = np.asarray(Du, dtype=float)
    n = Du.shape[-1]
    return np.eye(n) + np.einsum('...ai,...aj->...ij', Du, Du)


def position_field(patch):
    """Position X = (x, u(x)) with shape (*grid, m+n) and its length r."""
    X = np.concatenate([patch.coordinates(), patch.values], axis=-1)
    return X, np.linalg.norm(X, axis=-1)


def interior_mask(patch, width=1, lower=None, upper=None):
    """Nodes at least width away from a fixed-affine boundary, optionally restricted to a sub-box."""
    mask = np.ones(patch.grid, dtype=bool)
    if patch.boundary == 'fixed-affine' and width > 0:
        mask[:] = False
        mask[tuple(slice(width, size - width) for size in patch.grid)] = True
    if lower is not None or upper is not None:
        x = patch.coordinates()
        if lower is not None:
            mask &= np.all(x >= np.asarray(lower) - 1e-12, axis=-1)
        if upper is not None:
            mask &= np.all(x <= np.asarray(upper) + 1e-12, axis=-1)
    return mask


def _largest_component_sign(frames):
    idx = np.argmax(np.abs(frames), axis=-2)
    lead = np.take_along_axis(frames, idx[..., None, :], axis=-2)
    return np.where(lead < 0, -1.0, 1.0)


def _align_degenerate(sigma, U, V, grid):
    n = V.shape[-1]
    prev_V = np.eye(n)
    for node in np.ndindex(*grid):
        s = sigma[node]
        tol = DEGENERATE_TOL * max(1.0, s[0])
        start = 0
        while start < n:
            stop = start + 1
            while stop < n and s[start] - s[stop] <= tol:
                stop += 1
            if stop - start > 1:
                block = slice(start, stop)
                W, _, Zt = np.linalg.svd(V[node][:, block].T @ prev_V[:, block])
                R = W @ Zt
                V[node][:, block] = V[node][:, block] @ R
                U[node][:, block] = U[node][:, block] @ R
            start = stop
        prev_V = V[node]
    return U, V


def adapted_frames(Du, align=False):
    """Singular frames of Du, U: (*grid, m, m), sigma descending, V: (*grid, n, n).

    Columns are sign-normalized so their largest component is positive. With align=True, columns
    belonging to repeated singular values are rotated towards the previous node in lexicographic order.
    """
    U, sigma, Vh = np.linalg.svd(Du, full_matrices=True)
    V = np.swapaxes(Vh, -1, -2).copy()
    U = U.copy()
    n = V.shape[-1]
    signs = _largest_component_sign(V)
    V *= signs
    U[..., :n] *= signs
    U[..., n:] *= _largest_component_sign(U[..., n:])
    if align:
        U, V = _align_degenerate(sigma, U, V, Du.shape[:-2])
    return sigma, U, V


def geometry_fields(patch, align=False):
    n, m = patch.n, patch.m
    Du = jacobian_field(patch)
    D2u = hessian_field(patch)
    g = induced_metric(Du)
    g_inv = np.linalg.inv(g)
    v = np.sqrt(np.linalg.det(g))
    sigma, U, V = adapted_frames(Du, align)
    c = 1.0 / np.sqrt(1.0 + sigma ** 2)
    c_normal = np.concatenate([c, np.ones(sigma.shape[:-1] + (m - n, ))], axis=-1)
    h = np.einsum('...a,...i,...j,...ba,...ki,...lj,...bkl->...aij',
                  c_normal, c, c, U, V, V, D2u, optimize=True)
    h = 0.5 * (h + np.swapaxes(h, -1, -2))

    tangent = np.concatenate([V * c[..., None, :], U[..., :n] * (sigma * c)[..., None, :]], axis=-2)
    normal_top = np.zeros(sigma.shape[:-1] + (n, m))
    normal_top[..., :n] = -V * (sigma * c)[..., None, :]
    normal = np.concatenate([normal_top, U * c_normal[..., None, :]], axis=-2)

    # coordinate frame: dF = (I; Du), normal part by removing the tangential projection
    dF = np.concatenate([np.broadcast_to(np.eye(n), Du.shape[:-2] + (n, n)), Du], axis=-2)
    lift = np.concatenate([np.zeros(D2u.shape[:-3] + (n, n, n)), D2u], axis=-3)
    tangential = np.einsum('...aq,...qp,...bp,...bkl->...akl', dF, g_inv, Du, D2u, optimize=True)
    B = lift - tangential
    w = np.einsum('...ij,...aij->...a', g_inv, D2u)
    H = np.concatenate([np.zeros(w.shape[:-1] + (n, )), w], axis=-1)
    H = H - np.einsum('...aq,...qp,...bp,...b->...a', dF, g_inv, Du, w, optimize=True)
    B2_coordinate = np.einsum('...ik,...jl,...aij,...akl->...', g_inv, g_inv, B, B, optimize=True)

    X, r = position_field(patch)
    return GeometryFields(Du=Du, D2u=D2u, g=g, g_inv=g_inv, v=v, sigma=sigma, U=U, V=V, h=h,
                          B2=np.sum(h ** 2, axis=(-3, -2, -1)), B2_coordinate=B2_coordinate,
                          B_coordinate=B, H=H, dF=dF, tangent=tangent, normal=normal, X=X, r=r)


def slope_field(patch):
    return patch.geometry().v


def norm_B_field(patch):
    return np.sqrt(patch.geometry().B2)


def christoffel_field(patch, g=None, g_inv=None):
    """Gamma[k, i, j] of the induced metric, by central differences of g."""
    if g is None:
        g = patch.geometry().g
        g_inv = patch.geometry().g_inv
    elif g_inv is None:
        g_inv = np.linalg.inv(g)
    dg = first_derivatives(g, patch)  # dg[..., i, j, l] = d_l g_ij
    lowered = np.einsum('...jli->...ijl', dg) + np.einsum('...ilj->...ijl', dg) - dg
    return 0.5 * np.einsum('...kl,...ijl->...kij', g_inv, lowered)


def drift_term(patch, f, gamma=None):
    """g^ij Gamma^k_ij d_k f, the tangential motion of the graphical gauge applied to f."""
    geo = patch.geometry()
    if gamma is None:
        gamma = christoffel_field(patch, geo.g, geo.g_inv)
    return np.einsum('...ij,...kij,...k->...', geo.g_inv, gamma, first_derivatives(f, patch))


def laplace_beltrami(patch, f, gamma=None):
    geo = patch.geometry()
    if gamma is None:
        gamma = christoffel_field(patch, geo.g, geo.g_inv)
    hessian = np.einsum('...ij,...ij->...', geo.g_inv, second_derivatives(f, patch))
    return hessian - drift_term(patch, f, gamma)


def gradient_norm2(patch, f):
    df = first_derivatives(f, patch)
    return np.einsum('...ij,...i,...j->...', patch.geometry().g_inv, df, df)


def ambient_gradient(patch, f):
    """Gradient of f along the submanifold as a vector in R^(m+n)."""
    geo = patch.geometry()
    df = first_derivatives(f, patch)
    return np.einsum('...ai,...ij,...j->...a', geo.dF, geo.g_inv, df)


def normal_projection(patch, vectors):
    """Normal part of ambient vectors given per node, or of one constant vector."""
    geo = patch.geometry()
    vectors = np.broadcast_to(np.asarray(vectors, dtype=float), geo.X.shape)
    coefficients = np.einsum('...ij,...aj,...a->...i', geo.g_inv, geo.dF, vectors)
    return vectors - np.einsum('...ai,...i->...a', geo.dF, coefficients)


### per node operations


def check_node(patch, node):
    node = tuple(int(i) for i in np.atleast_1d(node))
    if len(node) != patch.n:
        raise StencilError(f'node {node} does not have {patch.n} indices')
    for idx, size in zip(node, patch.grid):
        if idx < 0 or idx >= size:
            raise StencilError(f'node {node} lies outside grid {patch.grid}')
        if patch.boundary == 'fixed-affine' and (idx == 0 or idx == size - 1):
            raise StencilError(f'node {node} lies on the fixed-affine boundary')
    return node


def jacobian(patch, node, order=2):
    node = check_node(patch, node)
    if order == 2:
        return np.array(patch.geometry().Du[node])
    if patch.boundary == 'fixed-affine' and any(i < 2 or i > size - 3 for i, size in zip(node, patch.grid)):
        raise StencilError(f'node {node} is too close to the boundary for the 4th order stencil')
    return jacobian_field(patch, order)[node]


def gauss_plane(patch, node):
    Du = jacobian(patch, node)
    return orthonormalize(np.vstack([np.eye(patch.n), Du]))


def shape_tensor(patch, node):
    node = check_node(patch, node)
    geo = patch.geometry(align=True)
    return ShapeTensor(geo.h[node], frame={'tangent': geo.tangent[node], 'normal': geo.normal[node]})


def mean_curvature(patch, node):
    node = check_node(patch, node)
    return np.array(patch.geometry().H[node])


def lambda_profile(patch, node):
    node = check_node(patch, node)
    return np.array(patch.geometry().sigma[node])


### checkpoints


def save_patch(patch, filepath):
    np.savez(filepath, n=patch.n, m=patch.m, lower=patch.lower, upper=patch.upper,
             grid=np.array(patch.grid), boundary=np.array(patch.boundary), values=patch.values)


def load_patch(filepath):
    with np.load(filepath) as data:
        values = data['values']
        if tuple(data['grid']) != values.shape[:-1] or int(data['m']) != values.shape[-1]:
            raise DimensionError(f'inconsistent patch header in {filepath}')
        return GraphPatch(values, data['lower'], data['upper'], str(data['boundary']))
