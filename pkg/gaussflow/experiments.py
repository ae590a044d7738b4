import csv
import json
import os
import platform
import time
from datetime import timedelta

import numpy as np
import psutil
import scipy

from gaussflow.config import flow_config
from gaussflow.errors import HypothesisViolated
from gaussflow.flow import (MAX_SLOPE, TRACE_COLUMNS, check_inequality_monitor, estimate_check, monitor_max_principle,
                            run_flow, write_csv, write_estimate_csv, write_jsonl)
from gaussflow.graphgeom import save_patch
from gaussflow.grassmann import (check_angle_roundtrip, check_geodesic_ball_inclusion, check_reciprocity,
                                 check_region_inclusion, check_strictness_witness)
from gaussflow.presets import build_patch, grim_reaper_direction
from gaussflow.quadform import (certify_lambda0_bound, certify_tail_bound, check_monotone, estimate_eps0,
                                estimate_eps_T2, sweep_thresholds)
from gaussflow.soliton import (SolitonSpec, check_soliton_inequalities, distance_identity, drift_r_bound,
                               localized_soliton_bound)
from gaussflow.util import PatchedJSONEncoder, file_digest


EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
MODULE_ERRORS = (ValueError, IndexError, RuntimeError, FloatingPointError, np.linalg.LinAlgError)
CSV_COLUMNS = {
    'grassmann-check': ['check', 'samples', 'passed', 'worst'],
    'bound-scan': ['n', 'm', 'lambda0', 'samples', 'min_rayleigh', 'claimed_bound', 'margin'],
    'estimate-sweep': ['kind', 'threshold', 'n', 'm', 'samples', 'estimate'],
    'flow-run': TRACE_COLUMNS,
    'soliton-check': ['R', 'max_f2_tilde', 'sup_B2_half', 'ratio'],
}


class RunReport:

    def __init__(self, config, output_dir):
        self.config = config
        self.output_dir = output_dir
        self.verdicts = []
        self.monitors = {}
        self.artifacts = {}
        self.timings = {}
        self.error = None

    def add_verdict(self, verdict):
        self.verdicts.append(verdict)
        status = 'passed' if verdict['passed'] else 'FAILED'
        print(f'  {verdict["check"]:<22} {status}')

    def add_artifact(self, filename):
        self.artifacts[filename] = file_digest(os.path.join(self.output_dir, filename))

    def add_error(self, exc):
        self.error = {'type': type(exc).__name__, 'message': str(exc)}
        for attr in ('node', 'step', 'max_residual', 'threshold', 'table'):
            if getattr(exc, attr, None) is not None:
                self.error[attr] = getattr(exc, attr)

    def path(self, filename):
        return os.path.join(self.output_dir, filename)

    @property
    def passed(self):
        return self.error is None and all(verdict['passed'] for verdict in self.verdicts)

    @property
    def exit_code(self):
        if self.error is not None:
            return EXIT_RUNTIME
        return EXIT_PASS if self.passed else EXIT_FAIL

    def to_dict(self):
        return {'command': self.config.command, 'config': self.config.to_dict(), 'passed': self.passed,
                'exit_code': self.exit_code, 'verdicts': self.verdicts, 'monitors': self.monitors,
                'artifacts': self.artifacts, 'timings': self.timings, 'error': self.error}


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ''
    return str(value)


def write_rows(filepath, columns, rows):
    with open(filepath, 'w', newline='') as csvfile:
        writer = csv.writer(csvfile)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[col]) for col in columns])


def execution_platform():
    memory = psutil.virtual_memory()
    return {
        'System': platform.system(), 'Node Name': platform.node(), 'Release': platform.release(),
        'Machine': platform.machine(), 'Processor': platform.processor(),
        'Physical cores': psutil.cpu_count(logical=False), 'Total cores': psutil.cpu_count(logical=True),
        'Memory': f'{memory.total / 1024 ** 3:.1f} GB',
        'Python': platform.python_version(), 'numpy': np.__version__, 'scipy': scipy.__version__,
    }


### commands


def grassmann_check(config, report):
    params = config.params
    rng = np.random.default_rng(config.seed)
    rows = []
    for n, m in config.dims:
        print(f'Checking Grassmannian G({n},{m}) on {params["samples"]} samples')
        for verdict in (check_reciprocity(n, m, params['samples'], rng, params['tolerance']),
                        check_angle_roundtrip(n, m, params['angle_samples'], rng, params['tolerance']),
                        check_region_inclusion(n, m, params['samples'], rng),
                        check_geodesic_ball_inclusion(n, m, params['samples'], rng)):
            report.add_verdict(verdict)
            rows.append({**verdict, 'check': f'{verdict["check"]}({n},{m})'})
    witness = check_strictness_witness()
    report.add_verdict(witness)
    rows.append({**witness, 'check': f'{witness["check"]}(2,{witness["m"]})'})
    write_rows(report.path('grassmann.csv'), CSV_COLUMNS['grassmann-check'], rows)
    report.add_artifact('grassmann.csv')


def bound_scan(config, report):
    params = config.params
    rows, tails = [], []
    for lambda0 in params['lambda0']:
        scan = certify_lambda0_bound(lambda0, params['trials'], config.dims, config.seed, params['lambda_cap'])
        report.add_verdict({'check': 'lambda0_bound', 'lambda0': lambda0, 'samples': scan.samples,
                            'min_rayleigh': scan.min_rayleigh, 'claimed_bound': scan.claimed_bound,
                            'margin': scan.margin, 'worst_profile': scan.worst_profile, 'passed': scan.passed})
        for detail, (n, m) in zip(scan.details, config.dims):
            rows.append({'n': n, 'm': m, 'lambda0': lambda0, 'samples': detail.samples,
                         'min_rayleigh': detail.min_rayleigh, 'claimed_bound': detail.claimed_bound,
                         'margin': detail.margin})
        if params['tail_bound']:
            tails.append(certify_tail_bound(lambda0, params['trials'], config.dims, config.seed, params['lambda_cap']))
    if tails:
        report.monitors['tail_bound'] = [{'lambda0': tail.threshold, 'min_gap': tail.min_rayleigh,
                                          'worst_profile': tail.worst_profile} for tail in tails]
    write_rows(report.path('bound_scan.csv'), CSV_COLUMNS['bound-scan'], rows)
    report.add_artifact('bound_scan.csv')


def estimate_sweep(config, report):
    params = config.params
    sweeps = []
    if params['eps0']:
        sweeps.append(sweep_thresholds(estimate_eps0, params['eps0'], params['trials'], config.dims, config.seed))
    if params['eps_T2']:
        sweeps.append(sweep_thresholds(estimate_eps_T2, params['eps_T2'], params['trials'], config.dims, config.seed,
                                       lambda_cap=params['lambda_cap']))
    rows = []
    for reports in sweeps:
        for scan in reports:
            report.add_verdict({'check': f'{scan.kind}_positive', 'threshold': scan.threshold,
                                'estimate': scan.min_rayleigh, 'worst_profile': scan.worst_profile,
                                'passed': scan.passed})
            for detail, (n, m) in zip(scan.details, config.dims):
                rows.append({'kind': scan.kind, 'threshold': scan.threshold, 'n': n, 'm': m,
                             'samples': detail.samples, 'estimate': detail.min_rayleigh})
        report.add_verdict(check_monotone(reports))
    write_rows(report.path('estimate_sweep.csv'), CSV_COLUMNS['estimate-sweep'], rows)
    report.add_artifact('estimate_sweep.csv')


def flow_run(config, report):
    params = config.params
    patch = build_patch(params['patch'])
    flow = flow_config(config)
    if params['checkpoint']:
        save_patch(patch, report.path('initial_patch.npz'))
        report.add_artifact('initial_patch.npz')
    start = time.time()
    final, trace = run_flow(patch, flow)
    report.timings['flow'] = time.time() - start
    write_csv(trace, report.path('trace.csv'))
    report.add_artifact('trace.csv')
    if flow.snapshots:
        write_jsonl(trace, report.path('trace.jsonl'))
        report.add_artifact('trace.jsonl')
    if params['checkpoint']:
        save_patch(final, report.path('final_patch.npz'))
        report.add_artifact('final_patch.npz')
    residuals = [value for value in trace.residual_L2 if np.isfinite(value)]
    report.monitors['residual_L2_max'] = max(residuals, default=None)
    report.monitors['test_quantity_deficit_max'] = max(trace.test_quantity_deficit, default=None)
    report.monitors['region_violations_max'] = max(trace.region_violations)

    if flow.v0 is not None:
        report.add_verdict(monitor_max_principle(trace, flow.v0))
    if flow.lambda0 is not None:
        report.add_verdict(check_inequality_monitor(trace, flow.lambda0))
    if params['T_list']:
        try:
            table = estimate_check(trace, params['R_list'], params['T_list'], flow.v0 or MAX_SLOPE)
        except HypothesisViolated as exc:
            write_estimate_csv(exc.table, report.path('estimate.csv'))
            report.add_artifact('estimate.csv')
            raise
        write_estimate_csv(table, report.path('estimate.csv'))
        report.add_artifact('estimate.csv')
        report.add_verdict(table.verdict())


def soliton_check(config, report):
    params = config.params
    patch = build_patch(params['patch'])
    V0 = params['V0']
    if params['kind'] == 'translator' and V0 is None:
        V0 = grim_reaper_direction(patch.n, patch.m)
    spec = SolitonSpec(params['kind'], V0, params['k2'])
    eps_hat = params['eps_hat']
    if eps_hat is None:
        eps_hat = estimate_eps_T2(params['Lambda'], params['trials'], [(patch.n, patch.m)], config.seed).min_rayleigh
    report.monitors['eps_hat'] = eps_hat
    lower, upper = params['lower'], params['upper']
    report.add_verdict(check_soliton_inequalities(patch, spec, eps_hat, lower, upper, params['residual_factor'],
                                                  params['slack']))
    report.monitors['distance_identity_max'] = distance_identity(patch, spec, lower, upper)[1]
    if spec.kind == 'translator':
        report.monitors['drift_r_margin'] = drift_r_bound(patch, spec.V0, lower, upper)
    bound = localized_soliton_bound(patch, spec, params['R_list'], params['v0'], lower, upper)
    report.add_verdict({'check': 'localized_bound', 'C0': bound['C0'], **bound['hypotheses'],
                        'passed': bound['passed']})
    report.monitors['localized_ratio_spread'] = bound['ratio_spread']
    report.monitors['localized_ratio_within_limit'] = bound['ratio_within_limit']
    write_rows(report.path('soliton.csv'), CSV_COLUMNS['soliton-check'], bound['rows'])
    report.add_artifact('soliton.csv')


COMMANDS = {
    'grassmann-check': grassmann_check,
    'bound-scan': bound_scan,
    'estimate-sweep': estimate_sweep,
    'flow-run': flow_run,
    'soliton-check': soliton_check,
}


def run_experiment(config, output_dir):
    """Run the configured command into output_dir and write report.json, module errors end up in the report."""
    report = RunReport(config, output_dir)
    starttime = time.time()
    print(f'Running {config.command} with seed {config.seed} on dims {config.dims}')
    try:
        COMMANDS[config.command](config, report)
    except MODULE_ERRORS as exc:
        print(f'{config.command} stopped with {type(exc).__name__}: {exc}')
        report.add_error(exc)
    report.timings['total'] = time.time() - starttime
    with open(report.path('execution_platform.json'), 'w') as platform_file:
        json.dump(execution_platform(), platform_file, indent=4)
    with open(report.path('report.json'), 'w') as report_file:
        json.dump(report.to_dict(), report_file, indent=4, cls=PatchedJSONEncoder)
    status = 'passed' if report.passed else ('failed' if report.error is None else 'errored')
    print(f'{config.command} {status} after {timedelta(seconds=int(report.timings["total"]))}, '
          f'{len(report.verdicts)} verdicts, {len(report.artifacts)} artifacts')
    return report
