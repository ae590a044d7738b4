import csv
import json
from dataclasses import dataclass, asdict, field

import numpy as np

from gaussflow.cutoff import SpaceTimeCutoff
from gaussflow.errors import BlowupError, DomainError, HypothesisViolated
from gaussflow.graphgeom import (drift_term, first_derivatives, gradient_norm2, interior_mask, laplace_beltrami,
                                 christoffel_field, induced_metric, second_derivatives)
from gaussflow.quadform import q_v_batch
from gaussflow.util import PatchedJSONEncoder


SCHEMES = ['euler', 'rk2']
TRACE_COLUMNS = ['step', 'time', 'max_v', 'sup_B', 'max_f', 'max_phi_f', 'residual_L2', 'residual_max',
                 'region_violations']
ESTIMATE_COLUMNS = ['R', 'T', 'sup_B', 'C_fit']
MAX_SLOPE = 3.0
MAX_PRINCIPLE_SLACK = 1e-6
# trace columns stored under a plural attribute
TRACE_ATTRIBUTES = {'step': 'steps', 'time': 'times'}


@dataclass
class FlowConfig:
    dt: float = None
    cfl: float = 0.2
    scheme: str = 'euler'
    steps: int = 100
    monitor_every: int = 1
    k: float = 1.0
    v0: float = None
    lambda0: float = None
    R: float = None
    T: float = None
    seed: int = 0
    snapshots: bool = False
    slack: float = 1.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise DomainError(f'unknown time scheme {self.scheme}, choose from {SCHEMES}')
        if self.steps < 1 or self.monitor_every < 1:
            raise DomainError('steps and monitor_every must be positive')

    def resolve_dt(self, patch):
        bound = self.cfl * float(np.min(patch.spacing)) ** 2
        if self.dt is None:
            return bound
        if self.dt > bound * (1 + 1e-12):
            raise DomainError(f'dt={self.dt} violates the stability bound {bound:.3e} = {self.cfl} * min(spacing)^2')
        return self.dt

    def cutoff(self):
        if self.R is None or self.T is None:
            return None
        return SpaceTimeCutoff(self.R, self.T)


@dataclass
class FlowTrace:
    steps: list = field(default_factory=list)
    times: list = field(default_factory=list)
    max_v: list = field(default_factory=list)
    sup_B: list = field(default_factory=list)
    max_f: list = field(default_factory=list)
    max_phi_f: list = field(default_factory=list)
    residual_L2: list = field(default_factory=list)
    residual_max: list = field(default_factory=list)
    region_violations: list = field(default_factory=list)
    inequality_violations: list = field(default_factory=list)
    test_quantity_deficit: list = field(default_factory=list)
    radius: list = field(default_factory=list)
    norm_B: list = field(default_factory=list)
    residual_fields: list = field(default_factory=list)

    def rows(self):
        for idx in range(len(self.steps)):
            yield {col: getattr(self, TRACE_ATTRIBUTES.get(col, col))[idx] for col in TRACE_COLUMNS}

    def to_dict(self):
        return {col: getattr(self, TRACE_ATTRIBUTES.get(col, col)) for col in TRACE_COLUMNS}


### time stepping


def graph_velocity(patch):
    """g^ij d_ij u, zero on fixed-affine boundary nodes."""
    Du = first_derivatives(patch.values, patch)
    D2u = second_derivatives(patch.values, patch)
    g_inv = np.linalg.inv(induced_metric(Du))
    velocity = np.einsum('...ij,...aij->...a', g_inv, D2u)
    if patch.boundary == 'fixed-affine':
        velocity[~interior_mask(patch, 1)] = 0.0
    return velocity


def _check_finite(values, step):
    bad = ~np.isfinite(values)
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(bad)[0][:-1])
        raise BlowupError(f'non-finite value at node {node} in step {step}', node=node, step=step)
    return values


def mcf_step(patch, dt, scheme='euler', step=None):
    if scheme not in SCHEMES:
        raise DomainError(f'unknown time scheme {scheme}, choose from {SCHEMES}')
    with np.errstate(all='ignore'):
        k1 = graph_velocity(patch)
        if scheme == 'euler':
            values = patch.values + dt * k1
        else:
            stage = patch.with_values(_check_finite(patch.values + dt * k1, step))
            values = patch.values + 0.5 * dt * (k1 + graph_velocity(stage))
    return patch.with_values(_check_finite(values, step))


### monitors


def slope_values(patch):
    return np.sqrt(np.linalg.det(induced_metric(first_derivatives(patch.values, patch))))


def monitor_mask(patch):
    # Christoffel symbols differentiate g once more, so one extra layer is excluded
    return interior_mask(patch, 2)


def _l2(field, mask, patch):
    return float(np.sqrt(np.sum(field[mask] ** 2) * np.prod(patch.spacing)))


def residual_evolution_identity(prev, cur, nxt, dt, drift=True):
    """Pointwise residual of (d_t - Delta) v = -sum_i Hess v(dgamma(e_i), dgamma(e_i)) at the middle state.

    The graphical gauge moves nodes tangentially, drift=True subtracts the resulting advection
    g^ij Gamma^k_ij d_k v. Returns the residual field and its max and L2 norms over the monitored nodes.
    """
    geo = cur.geometry()
    v = geo.v
    dv_dt = (slope_values(nxt) - slope_values(prev)) / (2 * dt)
    gamma = christoffel_field(cur, geo.g, geo.g_inv)
    residual = dv_dt - laplace_beltrami(cur, v, gamma) + q_v_batch(geo.sigma, geo.h)
    if drift:
        residual = residual - drift_term(cur, v, gamma)
    mask = monitor_mask(cur)
    residual = np.where(mask, residual, 0.0)
    return residual, {'L2': _l2(residual, mask, cur), 'max': float(np.max(np.abs(residual[mask])))}


def region_violation_count(patch, config):
    geo = patch.geometry()
    violations = np.zeros(patch.grid, dtype=bool)
    if config.lambda0 is not None and patch.n > 1:
        violations |= geo.sigma[..., 0] * geo.sigma[..., 1] > config.lambda0
    if config.v0 is not None:
        violations |= geo.v > config.v0
    return int(np.count_nonzero(violations))


def inequality_margin(prev, cur, nxt, dt, lambda0, slack=1.0):
    """Count nodes violating (d_t - Delta) v <= -(1 - lambda0)|B|^2 beyond slack * spacing^2.

    Only nodes whose lambda profile satisfies sup lambda_i lambda_j <= lambda0 are checked.
    """
    geo = cur.geometry()
    gamma = christoffel_field(cur, geo.g, geo.g_inv)
    dv_dt = (slope_values(nxt) - slope_values(prev)) / (2 * dt)
    normal_rate = dv_dt - drift_term(cur, geo.v, gamma) - laplace_beltrami(cur, geo.v, gamma)
    margin = -(1 - lambda0) * geo.B2 - normal_rate
    mask = monitor_mask(cur)
    if cur.n > 1:
        mask &= geo.sigma[..., 0] * geo.sigma[..., 1] <= lambda0
    tol = slack * float(np.max(cur.spacing)) ** 2
    return int(np.count_nonzero(margin[mask] < -tol)), float(np.min(margin[mask], initial=np.inf))


def test_quantity_inequality(prev, cur, nxt, dt):
    """Largest deficit of (Delta - d_t)|B|^2 >= 2|grad |B||^2 - 3|B|^4 over the monitored nodes."""
    geo = cur.geometry()
    gamma = christoffel_field(cur, geo.g, geo.g_inv)
    B2 = geo.B2
    dB2_dt = (nxt.geometry().B2 - prev.geometry().B2) / (2 * dt)
    normal_rate = dB2_dt - drift_term(cur, B2, gamma)
    lhs = laplace_beltrami(cur, B2, gamma) - normal_rate
    rhs = 2 * gradient_norm2(cur, np.sqrt(B2)) - 3 * B2 ** 2
    mask = monitor_mask(cur)
    return float(np.max(rhs[mask] - lhs[mask], initial=-np.inf))


def localized_quantity(patch, t, config):
    """max of phi f with f = |B|^2 exp(k v) and phi = eta(r(F), t - T), the cutoff window ending at trace time T."""
    cutoff = config.cutoff()
    if cutoff is None:
        raise DomainError('localized_quantity needs the cutoff window R and T')
    geo = patch.geometry()
    f = geo.B2 * np.exp(config.k * geo.v)
    phi_f = cutoff(geo.r, t - cutoff.T) * f
    node = np.unravel_index(int(np.argmax(phi_f)), patch.grid)
    return float(phi_f[node]), tuple(int(i) for i in node)


def record_state(trace, patch, step, time, config, residual=None):
    geo = patch.geometry()
    f = geo.B2 * np.exp(config.k * geo.v)
    trace.steps.append(step)
    trace.times.append(time)
    trace.max_v.append(float(np.max(geo.v)))
    trace.sup_B.append(float(np.sqrt(np.max(geo.B2))))
    trace.max_f.append(float(np.max(f)))
    trace.max_phi_f.append(localized_quantity(patch, time, config)[0] if config.cutoff() is not None else float('nan'))
    trace.region_violations.append(region_violation_count(patch, config))
    trace.radius.append(geo.r.reshape(-1).copy())
    trace.norm_B.append(np.sqrt(geo.B2).reshape(-1))
    if residual is None:
        trace.residual_L2.append(float('nan'))
        trace.residual_max.append(float('nan'))
    else:
        trace.residual_L2.append(residual[1]['L2'])
        trace.residual_max.append(residual[1]['max'])
        if config.snapshots:
            trace.residual_fields.append(residual[0])


def run_flow(patch, config):
    dt = config.resolve_dt(patch)
    print(f'Running {config.scheme} flow on {patch} for {config.steps} steps with dt={dt:.3e}')
    trace = FlowTrace()
    states = [None, patch]
    record_state(trace, patch, 0, 0.0, config)
    for step in range(1, config.steps + 1):
        states = [states[-2], states[-1], mcf_step(states[-1], dt, config.scheme, step)]
        monitored = step - 1
        if monitored > 0 and monitored % config.monitor_every == 0:
            prev, cur, nxt = states
            residual = residual_evolution_identity(prev, cur, nxt, dt)
            record_state(trace, cur, monitored, monitored * dt, config, residual)
            if config.lambda0 is not None:
                trace.inequality_violations.append(inequality_margin(prev, cur, nxt, dt, config.lambda0, config.slack)[0])
            trace.test_quantity_deficit.append(test_quantity_inequality(prev, cur, nxt, dt))
        states = states[1:]
    final = states[-1]
    if config.steps % config.monitor_every == 0:
        record_state(trace, final, config.steps, config.steps * dt, config)
    return final, trace


### verdicts on stored traces


def check_inequality_monitor(trace, lambda0):
    """Verdict over the per-step violation counts of the lambda0 sign check."""
    counts = trace.inequality_violations
    first = next((step for step, count in zip(trace.steps[1:], counts) if count > 0), None)
    return {'check': 'lambda0_inequality', 'lambda0': lambda0, 'monitored_steps': len(counts),
            'violations': int(sum(counts)), 'first_violation_step': first, 'passed': first is None}


def monitor_max_principle(trace, v0):
    initial = trace.max_v[0]
    verdict = {'check': 'max_principle', 'v0': v0, 'initial_max_v': initial,
               'hypothesis': bool(initial <= v0 < MAX_SLOPE), 'first_violation_step': None}
    for prev, cur, step in zip(trace.max_v[:-1], trace.max_v[1:], trace.steps[1:]):
        if cur > prev + MAX_PRINCIPLE_SLACK * (1 + prev):
            verdict['first_violation_step'] = step
            break
    verdict['passed'] = verdict['hypothesis'] and verdict['first_violation_step'] is None
    return verdict


class EstimateTable:

    def __init__(self, rows):
        self.rows = rows

    @property
    def max_C(self):
        return max(row['C_fit'] for row in self.rows)

    def max_C_per_T(self):
        per_T = {}
        for row in self.rows:
            per_T[row['T']] = max(per_T.get(row['T'], 0.0), row['C_fit'])
        return per_T

    @property
    def variation(self):
        """Ratio of the largest to the smallest per-T maximum of C_fit, inf when some window saw no curvature."""
        values = list(self.max_C_per_T().values())
        if min(values) == 0:
            return 1.0 if max(values) == 0 else float('inf')
        return max(values) / min(values)

    def verdict(self, max_variation=2.0):
        return {'check': 'estimate_scaling', 'max_C': self.max_C, 'variation': self.variation,
                'max_variation': max_variation, 'passed': bool(self.variation < max_variation)}

    def to_dict(self):
        return {'rows': self.rows, 'max_C': self.max_C, 'variation': self.variation}


def estimate_check(trace, R_list, T_list, v0=MAX_SLOPE):
    """C_fit = sup_{D_{R/2,T/2}} |B| / (1/R + 1/sqrt(T)), with the flow regarded as started at time -T.

    The half window [-T/2, 0] then corresponds to trace times [T/2, T].
    """
    times = np.asarray(trace.times)
    if max(T_list) > times[-1] * (1 + 1e-12):
        raise DomainError(f'trace ends at {times[-1]}, shorter than the largest window T={max(T_list)}')
    rows = []
    for T in T_list:
        in_window = (times >= 0.5 * T * (1 - 1e-12)) & (times <= T * (1 + 1e-12))
        for R in R_list:
            sup_B = 0.0
            for idx in np.flatnonzero(in_window):
                inside = trace.radius[idx] <= 0.5 * R
                if np.any(inside):
                    sup_B = max(sup_B, float(np.max(trace.norm_B[idx][inside])))
            rows.append({'R': R, 'T': T, 'sup_B': sup_B, 'C_fit': sup_B / (1 / R + 1 / np.sqrt(T))})
    table = EstimateTable(rows)
    if max(trace.max_v) >= v0:
        raise HypothesisViolated(f'slope reached {max(trace.max_v):.4f} >= v0={v0} during the run', table)
    return table


def rescale_trace(trace, scale):
    """Parabolic rescaling F -> scale F(., t / scale^2) of the stored monitors."""
    rescaled = FlowTrace()
    rescaled.steps = list(trace.steps)
    rescaled.times = [t * scale ** 2 for t in trace.times]
    rescaled.max_v = list(trace.max_v)
    rescaled.sup_B = [b / scale for b in trace.sup_B]
    rescaled.radius = [r * scale for r in trace.radius]
    rescaled.norm_B = [b / scale for b in trace.norm_B]
    rescaled.region_violations = list(trace.region_violations)
    return rescaled


### export


def write_csv(trace, filepath):
    with open(filepath, 'w', newline='') as csvfile:
        writer = csv.writer(csvfile)
        writer.writerow(TRACE_COLUMNS)
        for row in trace.rows():
            writer.writerow([repr(row[col]) for col in TRACE_COLUMNS])


def write_estimate_csv(table, filepath):
    with open(filepath, 'w', newline='') as csvfile:
        writer = csv.writer(csvfile)
        writer.writerow(ESTIMATE_COLUMNS)
        for row in table.rows:
            writer.writerow([repr(float(row[col])) for col in ESTIMATE_COLUMNS])


def write_jsonl(trace, filepath):
    with open(filepath, 'w') as jsonl:
        for idx, row in enumerate(trace.rows()):
            if idx > 0 and idx - 1 < len(trace.residual_fields):
                row['residual'] = trace.residual_fields[idx - 1]
            jsonl.write(json.dumps(row, cls=PatchedJSONEncoder) + '\n')


def config_dict(config):
    return asdict(config)
