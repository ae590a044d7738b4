import math

import numpy as np
import pytest

from gaussflow.cutoff import SpaceTimeCutoff, cutoff_eta, ramp, ramp_constants, smoothstep
from gaussflow.errors import BlowupError, DomainError, HypothesisViolated
from gaussflow.flow import (TRACE_COLUMNS, FlowConfig, check_inequality_monitor, estimate_check, inequality_margin,
                            localized_quantity, mcf_step, monitor_max_principle, rescale_trace,
                            residual_evolution_identity, run_flow, write_csv, write_estimate_csv, write_jsonl)
from gaussflow.graphgeom import GraphPatch
from gaussflow.presets import affine_patch, hyperbola_patch, product_sine_patch, sine_cosine_patch, sine_patch


### cutoff


def test_smoothstep_shape():
    s = np.linspace(0.0, 1.5, 301)
    value, d1, _ = smoothstep(s)
    assert np.all(value[s <= 0.5] == 1.0)
    assert np.allclose(value[s >= 1.0], 0.0)
    assert np.all(np.diff(value) <= 1e-15)
    assert np.all(d1 <= 0)


def test_ramp_derivatives_match_differences():
    s = np.linspace(0.55, 0.95, 41)
    eps = 1e-6
    value, d1, d2 = ramp(s)
    assert np.allclose(d1, (ramp(s + eps)[0] - ramp(s - eps)[0]) / (2 * eps), atol=1e-6)
    assert np.allclose(d2, (ramp(s + eps)[1] - ramp(s - eps)[1]) / (2 * eps), atol=1e-5)


def test_space_time_cutoff_window():
    cutoff = SpaceTimeCutoff(4.0, 1.0)
    assert cutoff(1.9, -0.4) == 1.0
    assert cutoff(4.0, -0.5) == pytest.approx(0.0, abs=1e-15)
    assert cutoff(1.0, 0.1) == 0.0
    assert cutoff(1.0, -1.0) == pytest.approx(0.0, abs=1e-15)
    value, constants = cutoff_eta(3.0, -0.7, 4.0, 1.0)
    assert 0 < value < 1
    assert set(constants) == {'C_0.5', 'C_0.75', 'C'}
    with pytest.raises(DomainError):
        SpaceTimeCutoff(0.0, 1.0)


def test_cutoff_constants_bound_derivatives():
    R, T = 2.0, 0.5
    cutoff = SpaceTimeCutoff(R, T)
    constants = ramp_constants()
    r, t = np.meshgrid(np.linspace(0.0, R, 201), np.linspace(-T, 0.0, 101))
    eta = cutoff(r, t)
    inside = eta > 1e-12
    for a in (0.5, 0.75):
        bound = constants[f'C_{a}'] * eta[inside] ** a
        assert np.all(np.abs(cutoff.dr(r, t))[inside] <= bound / R + 1e-12)
        assert np.all(np.abs(cutoff.drr(r, t))[inside] <= bound / R ** 2 + 1e-12)
    assert np.all(np.abs(cutoff.dt(r, t))[inside] <= constants['C'] * np.sqrt(eta[inside]) / T + 1e-12)


### stepping


def test_config_validation():
    patch = product_sine_patch(2, 2, 0.5, points=16)
    with pytest.raises(DomainError):
        FlowConfig(scheme='leapfrog')
    with pytest.raises(DomainError):
        FlowConfig(steps=0)
    with pytest.raises(DomainError):
        FlowConfig(dt=1.0).resolve_dt(patch)
    assert FlowConfig().resolve_dt(patch) == pytest.approx(0.2 * (2 * np.pi / 16) ** 2)


def test_affine_patch_is_stationary():
    patch = affine_patch([[0.5, 0.0], [0.0, 0.3]], points=9)
    final, trace = run_flow(patch, FlowConfig(steps=10, v0=2.0, lambda0=0.5))
    assert np.allclose(final.values, patch.values, atol=1e-12)
    assert max(trace.residual_max[1:-1]) < 1e-9
    assert sum(trace.inequality_violations) == 0
    assert check_inequality_monitor(trace, 0.5)['passed']
    assert monitor_max_principle(trace, 2.0)['passed']


def test_rk2_and_euler_agree_to_first_order():
    patch = sine_cosine_patch(2, 2, 0.3, points=16)
    dt = 0.1 * patch.spacing[0] ** 2
    euler = mcf_step(patch, dt, 'euler')
    heun = mcf_step(patch, dt, 'rk2')
    assert np.max(np.abs(euler.values - heun.values)) < 10 * dt ** 2


def test_blowup_is_reported():
    values = np.zeros((8, 2))
    values[4, 0] = 1e308
    patch = GraphPatch(values, -1.0, 1.0)
    with pytest.raises(BlowupError) as info:
        mcf_step(patch, 1e-3, step=3)
    assert info.value.step == 3


def test_max_principle_on_product_sine():
    patch = product_sine_patch(2, 2, math.sqrt(1.5), points=16)
    _, trace = run_flow(patch, FlowConfig(steps=200, v0=2.9))
    # grid slopes slightly underestimate the exact maximum 2.5
    assert trace.max_v[0] == pytest.approx(2.5, rel=0.05)
    verdict = monitor_max_principle(trace, 2.9)
    assert verdict['hypothesis'] and verdict['passed'], verdict
    assert trace.max_v[-1] < trace.max_v[0]
    assert max(trace.region_violations) == 0


@pytest.mark.slow
def test_max_principle_over_thousand_steps():
    patch = product_sine_patch(2, 2, math.sqrt(1.5), points=32)
    _, trace = run_flow(patch, FlowConfig(steps=1000, monitor_every=10, v0=2.9))
    assert trace.steps[-1] == 1000
    verdict = monitor_max_principle(trace, 2.9)
    assert verdict['hypothesis'] and verdict['passed'], verdict
    assert all(b <= a + 1e-6 for a, b in zip(trace.max_v, trace.max_v[1:]))


def test_mcf_step_matches_hand_stencil():
    amplitude, points = 0.7, 32
    patch = sine_patch(1, 2, amplitude, points=points)
    h = patch.spacing[0]
    dt = 0.2 * h ** 2
    node = points // 4  # x = pi / 2, where the first derivative vanishes
    assert patch.coordinates()[node, 0] == pytest.approx(math.pi / 2)
    stepped = mcf_step(patch, dt)
    update = stepped.values[node] - patch.values[node]
    expected = dt * amplitude * (2 * math.cos(h) - 2) / h ** 2
    assert update[0] == pytest.approx(expected, abs=1e-12)
    assert update[1] == 0.0
    assert expected == pytest.approx(-dt * amplitude, rel=h ** 2)


def test_injected_violation_is_caught():
    patch = product_sine_patch(2, 2, math.sqrt(1.5), points=16)
    _, trace = run_flow(patch, FlowConfig(steps=20, v0=2.9))
    trace.max_v[5] += 0.1
    verdict = monitor_max_principle(trace, 2.9)
    assert not verdict['passed']
    assert verdict['first_violation_step'] == trace.steps[5]
    assert not monitor_max_principle(trace, 2.0)['hypothesis']


def test_trace_layout(tmp_path):
    patch = product_sine_patch(2, 2, 0.5, points=16)
    config = FlowConfig(steps=6, monitor_every=2, R=4.0, T=0.1, snapshots=True)
    _, trace = run_flow(patch, config)
    assert trace.steps == [0, 2, 4, 6]
    assert math.isnan(trace.residual_L2[0]) and math.isnan(trace.residual_L2[-1])
    assert all(np.isfinite(trace.residual_L2[1:-1]))
    assert len(trace.residual_fields) == 2
    write_csv(trace, tmp_path / 'trace.csv')
    write_jsonl(trace, tmp_path / 'trace.jsonl')
    lines = (tmp_path / 'trace.csv').read_text().splitlines()
    assert lines[0] == ','.join(TRACE_COLUMNS)
    assert len(lines) == 5
    assert len((tmp_path / 'trace.jsonl').read_text().splitlines()) == 4


def test_localized_quantity_needs_window():
    patch = product_sine_patch(2, 2, 0.5, points=16)
    with pytest.raises(DomainError):
        localized_quantity(patch, 0.0, FlowConfig())
    value, node = localized_quantity(patch, 1.0, FlowConfig(R=100.0, T=1.0))
    geo = patch.geometry()
    assert value == pytest.approx(np.max(geo.B2 * np.exp(geo.v)))
    assert len(node) == 2


### monitors


def _three_states(patch, dt, steps):
    states = [patch]
    for step in range(steps + 1):
        states = (states + [mcf_step(states[-1], dt, 'euler', step)])[-3:]
    return states


def test_inequality_margin_on_product_sine():
    patch = product_sine_patch(2, 2, 0.5, points=32)
    dt = 0.2 * patch.spacing[0] ** 2
    prev, cur, nxt = _three_states(patch, dt, 4)
    violations, margin = inequality_margin(prev, cur, nxt, dt, lambda0=0.9)
    assert violations == 0
    assert np.isfinite(margin)


def _residual_norm(level, drift):
    points = 16 * 2 ** level
    patch = sine_cosine_patch(2, 2, 0.3, points=points)
    dt = 0.2 * patch.spacing[0] ** 2
    prev, cur, nxt = _three_states(patch, dt, 10 * 4 ** level)
    return residual_evolution_identity(prev, cur, nxt, dt, drift=drift)[1]['L2']


def test_residual_matches_run_flow():
    patch = sine_cosine_patch(2, 2, 0.3, points=16)
    steps = 11
    _, trace = run_flow(patch, FlowConfig(steps=steps, monitor_every=steps - 1))
    assert trace.steps == [0, steps - 1]
    assert trace.residual_L2[1] == pytest.approx(_residual_norm(0, True), rel=1e-12)


@pytest.mark.slow
def test_evolution_identity_converges():
    with_drift = [_residual_norm(level, True) for level in range(4)]
    ratios = [a / b for a, b in zip(with_drift, with_drift[1:])]
    assert all(3.0 <= ratio <= 5.0 for ratio in ratios), ratios
    # without the gauge drift the residual stalls at the size of the drift term
    without_drift = [_residual_norm(level, False) for level in range(4)]
    assert without_drift[-1] > 3 * with_drift[-1], (without_drift, with_drift)
    assert without_drift[-2] / without_drift[-1] < 2, without_drift


### estimates on stored traces


def _cone_trace():
    patch = hyperbola_patch(slope=1.0, eps=0.2, m=2, half_width=4.0, points=161)
    return run_flow(patch, FlowConfig(steps=400, monitor_every=10))[1]


def test_estimate_table_and_rescaling(tmp_path):
    trace = _cone_trace()
    T_list = [0.02, 0.04]
    table = estimate_check(trace, [1.0, 2.0], T_list)
    assert len(table.rows) == 4
    assert all(row['sup_B'] > 0 for row in table.rows)
    rescaled = estimate_check(rescale_trace(trace, 2.0), [2.0, 4.0], [4 * T for T in T_list])
    for row, scaled in zip(table.rows, rescaled.rows):
        assert scaled['C_fit'] == pytest.approx(row['C_fit'], rel=1e-8)
    write_estimate_csv(table, tmp_path / 'estimate.csv')
    assert (tmp_path / 'estimate.csv').read_text().splitlines()[0] == 'R,T,sup_B,C_fit'
    assert table.verdict()['check'] == 'estimate_scaling'


def test_estimate_check_hypotheses():
    trace = _cone_trace()
    with pytest.raises(DomainError):
        estimate_check(trace, [1.0], [10.0])
    with pytest.raises(HypothesisViolated) as info:
        estimate_check(trace, [1.0], [0.02], v0=1.2)
    assert len(info.value.table.rows) == 1


@pytest.mark.slow
def test_curvature_estimate_scaling_proxy():
    patch = hyperbola_patch(slope=1.0, eps=0.2, m=2, half_width=8.0, points=641)
    config = FlowConfig(steps=6500, monitor_every=40, v0=2.9)
    _, trace = run_flow(patch, config)
    table = estimate_check(trace, [2.0, 4.0, 8.0, 16.0], [0.05, 0.1, 0.2, 0.4, 0.8], v0=2.9)
    verdict = table.verdict()
    assert verdict['passed'], table.max_C_per_T()
    rescaled = estimate_check(rescale_trace(trace, 2.0), [4.0, 8.0, 16.0, 32.0], [0.2, 0.4, 0.8, 1.6, 3.2], v0=2.9)
    assert rescaled.max_C == pytest.approx(table.max_C, rel=1e-8)
