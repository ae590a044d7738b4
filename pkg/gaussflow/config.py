import inspect
import json
import math
import os
from dataclasses import dataclass, asdict, field

from gaussflow.errors import ParseError, ValidationError
from gaussflow.flow import FlowConfig, MAX_SLOPE, SCHEMES
from gaussflow.presets import PRESETS
from gaussflow.quadform import MAX_ORACLE_DIM
from gaussflow.soliton import KINDS


DEFAULTS_FILE = os.path.join(os.path.dirname(__file__), 'defaults.json')
COMMANDS = ['grassmann-check', 'bound-scan', 'flow-run', 'estimate-sweep', 'soliton-check']
TOP_LEVEL_KEYS = ['schema_version', 'command', 'seed', 'dims', 'output_dir', 'params']
# defaults of null take either null or a value of this kind
NULLABLE = {
    'dt': 'number', 'v0': 'number', 'lambda0': 'number', 'R': 'number', 'T': 'number',
    'eps_hat': 'number', 'V0': 'vector', 'lower': 'vector', 'upper': 'vector',
}


def load_defaults():
    with open(DEFAULTS_FILE, 'r') as df:
        return json.load(df)


@dataclass
class ExperimentConfig:
    command: str
    schema_version: int = 1
    seed: int = 0
    dims: list = field(default_factory=lambda: [(2, 2)])
    output_dir: str = 'results'
    params: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.dims[0][0]

    @property
    def m(self):
        return self.dims[0][1]

    def to_dict(self):
        return asdict(self)


def _reject_duplicates(duplicates):
    def hook(pairs):
        obj = {}
        for key, value in pairs:
            if key in obj:
                duplicates.append(key)
            obj[key] = value
        return obj
    return hook


def _parse(text):
    duplicates = []
    try:
        data = json.loads(text, object_pairs_hook=_reject_duplicates(duplicates))
    except json.JSONDecodeError as exc:
        raise ParseError(f'malformed config: {exc.msg} at line {exc.lineno} column {exc.colno}',
                         exc.pos, exc.lineno, exc.colno) from exc
    return data, duplicates


### value checks


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_vector(value):
    return _is_number(value) or (isinstance(value, list) and len(value) > 0 and all(_is_number(v) for v in value))


def _check_type(name, value, default, violations):
    """Type of value against the type of its default, returns whether the value can be range-checked."""
    if default is None:
        if value is None:
            return False
        kind = NULLABLE.get(name.split('.')[-1], 'number')
        ok = _is_vector(value) if kind == 'vector' else _is_number(value)
        expected = 'a number or a list of numbers' if kind == 'vector' else 'a number'
    elif isinstance(default, bool):
        ok, expected = isinstance(value, bool), 'a boolean'
    elif isinstance(default, int):
        ok, expected = _is_int(value), 'an integer'
    elif isinstance(default, float):
        ok, expected = _is_number(value), 'a number'
    elif isinstance(default, str):
        ok, expected = isinstance(value, str), 'a string'
    elif isinstance(default, list):
        # nested lists such as dims get their structure checked by the command
        nested = any(isinstance(v, list) for v in default)
        ok = isinstance(value, list) and (nested or all(_is_number(v) for v in value))
        expected = 'a list' if nested else 'a list of numbers'
    elif isinstance(default, dict):
        ok, expected = isinstance(value, dict), 'an object'
    else:
        ok, expected = True, None
    if not ok:
        violations.append(f'{name} must be {expected}, got {json.dumps(value)}')
    return ok


def _check_keys(name, given, allowed, violations):
    for key in given:
        if key not in allowed:
            violations.append(f'unknown key {name}{key}')


def _require(condition, message, violations):
    if not condition:
        violations.append(message)


def _merge(name, user, defaults, violations):
    """Merge user values over defaults one level deep, unknown keys are reported."""
    _check_keys(name, user, defaults, violations)
    merged = dict(defaults)
    for key, value in user.items():
        if key in defaults and _check_type(f'{name}{key}', value, defaults[key], violations):
            merged[key] = value
    return merged


def _positive_list(name, values, violations, allow_empty=False):
    _require(allow_empty or len(values) > 0, f'{name} must not be empty', violations)
    for value in values:
        _require(value > 0, f'{name} entries must be > 0, got {value}', violations)


### per command ranges


def _check_dims(config, violations):
    dims = config.dims
    if not isinstance(dims, list) or len(dims) == 0:
        violations.append('dims must be a non-empty list of [n, m] pairs')
        return []
    pairs = []
    for pair in dims:
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2 and all(_is_int(d) for d in pair)):
            violations.append(f'dims entries must be [n, m] integer pairs, got {json.dumps(pair)}')
            continue
        n, m = pair
        if n < 1 or m < n:
            violations.append(f'dims entry [{n}, {m}] needs 1 <= n <= m')
            continue
        if config.command in ('bound-scan', 'estimate-sweep') and m > MAX_ORACLE_DIM:
            violations.append(f'dims entry [{n}, {m}] exceeds the eigen oracle cap {MAX_ORACLE_DIM}')
            continue
        pairs.append((n, m))
    if config.command in ('flow-run', 'soliton-check') and len(dims) != 1:
        violations.append(f'{config.command} runs on a single [n, m] pair, got {len(dims)}')
    return pairs


def _check_grassmann(params, violations):
    _require(params['samples'] >= 1, 'samples must be >= 1', violations)
    _require(params['angle_samples'] >= 1, 'angle_samples must be >= 1', violations)
    _require(params['tolerance'] > 0, 'tolerance must be > 0', violations)


def _check_bound_scan(params, violations):
    if len(params['lambda0']) == 0:
        violations.append('lambda0 must not be empty')
    for lambda0 in params['lambda0']:
        _require(lambda0 > 0, 'lambda0 must be > 0', violations)
        _require(lambda0 < 1, 'lambda0 must be < 1', violations)
    _require(params['trials'] >= 1, 'trials must be >= 1', violations)
    _require(params['lambda_cap'] > 0, 'lambda_cap must be > 0', violations)


def _check_estimate_sweep(params, violations):
    _require(len(params['eps0']) + len(params['eps_T2']) > 0, 'eps0 and eps_T2 must not both be empty', violations)
    for v0 in params['eps0']:
        _require(v0 >= 1, f'eps0 thresholds must be >= 1, got {v0}', violations)
    for Lambda in params['eps_T2']:
        _require(0 < Lambda < math.sqrt(2), f'eps_T2 thresholds must lie in (0, sqrt(2)), got {Lambda}', violations)
    _require(params['trials'] >= 1, 'trials must be >= 1', violations)
    _require(params['lambda_cap'] > 0, 'lambda_cap must be > 0', violations)


def _check_patch(recipe, config, violations):
    name = recipe.get('preset')
    if name not in PRESETS:
        violations.append(f'patch.preset must be one of {list(PRESETS.keys())}, got {json.dumps(name)}')
        return recipe
    accepted = inspect.signature(PRESETS[name]).parameters
    _check_keys('patch.', [key for key in recipe if key != 'preset'], accepted, violations)
    recipe = dict(recipe)
    if 'n' in accepted:
        recipe.setdefault('n', config.n)
    if 'm' in accepted:
        recipe.setdefault('m', config.m)
    for key in ('points', 'amplitude', 'delta', 'half_width', 'radius', 'slope', 'eps'):
        if key in recipe and not (_is_int(recipe[key]) if key == 'points' else _is_number(recipe[key])):
            violations.append(f'patch.{key} must be {"an integer" if key == "points" else "a number"}')
    return recipe


def _check_flow_run(params, config, violations):
    params['patch'] = _check_patch(params['patch'], config, violations)
    flow = params['flow']
    _require(flow['cfl'] > 0, 'flow.cfl must be > 0', violations)
    _require(flow['scheme'] in SCHEMES, f'flow.scheme must be one of {SCHEMES}', violations)
    _require(flow['steps'] >= 1, 'flow.steps must be >= 1', violations)
    _require(flow['monitor_every'] >= 1, 'flow.monitor_every must be >= 1', violations)
    _require(flow['k'] > 0, 'flow.k must be > 0', violations)
    _require(flow['slack'] >= 0, 'flow.slack must be >= 0', violations)
    if _is_number(flow['dt']):
        _require(flow['dt'] > 0, 'flow.dt must be > 0', violations)
    if _is_number(flow['v0']):
        _require(1 <= flow['v0'] < MAX_SLOPE, f'flow.v0 must lie in [1, {MAX_SLOPE})', violations)
    if _is_number(flow['lambda0']):
        _require(0 < flow['lambda0'] < 1, 'flow.lambda0 must be < 1 and > 0', violations)
    for key in ('R', 'T'):
        if _is_number(flow[key]):
            _require(flow[key] > 0, f'flow.{key} must be > 0', violations)
    _require((flow['R'] is None) == (flow['T'] is None), 'flow.R and flow.T must be given together', violations)
    _positive_list('R_list', params['R_list'], violations, allow_empty=True)
    _positive_list('T_list', params['T_list'], violations, allow_empty=True)
    _require(len(params['T_list']) == 0 or len(params['R_list']) > 0, 'T_list needs a non-empty R_list', violations)


def _check_soliton(params, config, violations):
    params['patch'] = _check_patch(params['patch'], config, violations)
    _require(params['kind'] in KINDS, f'kind must be one of {KINDS}', violations)
    _require(params['k2'] > 0, 'k2 must be > 0', violations)
    _require(0 < params['Lambda'] < math.sqrt(2), 'Lambda must lie in (0, sqrt(2))', violations)
    _require(params['trials'] >= 1, 'trials must be >= 1', violations)
    _require(params['residual_factor'] > 0, 'residual_factor must be > 0', violations)
    _require(params['slack'] >= 0, 'slack must be >= 0', violations)
    _positive_list('R_list', params['R_list'], violations)
    if _is_number(params['eps_hat']):
        _require(params['eps_hat'] >= 0, 'eps_hat must be >= 0', violations)
    if _is_number(params['v0']):
        _require(params['v0'] >= 1, 'v0 must be >= 1', violations)
    if params['kind'] == 'translator' and params['V0'] is None:
        _require(params['patch'].get('preset') == 'grim-reaper', 'V0 is required unless the patch is a grim reaper',
                 violations)
    V0 = params['V0']
    if isinstance(V0, list):
        _require(len(V0) == config.n + config.m, f'V0 must have {config.n + config.m} entries', violations)
        norm = math.sqrt(sum(v * v for v in V0))
        _require(abs(norm - 1) <= 1e-12, f'V0 must be a unit vector, got |V0| = {norm}', violations)
    elif _is_number(V0):
        violations.append('V0 must be a list of numbers')


RANGE_CHECKS = {
    'grassmann-check': lambda params, config, violations: _check_grassmann(params, violations),
    'bound-scan': lambda params, config, violations: _check_bound_scan(params, violations),
    'estimate-sweep': lambda params, config, violations: _check_estimate_sweep(params, violations),
    'flow-run': _check_flow_run,
    'soliton-check': _check_soliton,
}


### entry points


def validate_config(text, defaults=None, command=None):
    """Parse a JSON experiment config, merge it over the packaged defaults and collect every violation.

    A given command fills in a config without one and must match the config's command otherwise.
    """
    defaults = load_defaults() if defaults is None else defaults
    data, duplicates = _parse(text)
    violations = [f'duplicate key {key}' for key in duplicates]
    if not isinstance(data, dict):
        raise ValidationError(violations + ['config must be a JSON object'])
    _check_keys('', data, TOP_LEVEL_KEYS, violations)
    if data.get('schema_version') != defaults['schema_version']:
        violations.append(f'schema_version must be {defaults["schema_version"]}, got {json.dumps(data.get("schema_version"))}')
    if command is not None and data.setdefault('command', command) != command:
        violations.append(f'config is for command {data["command"]}, not {command}')
    command = data.get('command')
    if command not in COMMANDS:
        violations.append(f'command must be one of {COMMANDS}, got {json.dumps(command)}')
        raise ValidationError(violations)

    common = _merge('', {key: data[key] for key in ('seed', 'dims', 'output_dir') if key in data},
                    defaults['common'], violations)
    if _is_int(common['seed']):
        _require(-1 <= common['seed'] < 2 ** 64, 'seed must be -1 or an unsigned 64 bit integer', violations)
    config = ExperimentConfig(command=command, schema_version=defaults['schema_version'], seed=common['seed'],
                              dims=common['dims'], output_dir=common['output_dir'])

    user_params = data.get('params', {})
    if not isinstance(user_params, dict):
        violations.append('params must be an object')
        user_params = {}
    command_defaults = dict(defaults[command])
    if command == 'bound-scan' and _is_number(user_params.get('lambda0')):
        user_params = {**user_params, 'lambda0': [user_params['lambda0']]}
    nested = [key for key in ('flow', 'patch') if key in command_defaults]
    params = _merge('params.', {k: v for k, v in user_params.items() if k not in nested}, command_defaults, violations)
    if 'flow' in command_defaults:
        user_flow = user_params.get('flow', {})
        if not isinstance(user_flow, dict):
            violations.append('params.flow must be an object')
            user_flow = {}
        params['flow'] = _merge('flow.', user_flow, command_defaults['flow'], violations)
    if 'patch' in command_defaults and 'patch' in user_params:
        # a user recipe replaces the default recipe, its preset may take other arguments
        params['patch'] = dict(user_params['patch']) if isinstance(user_params['patch'], dict) else {}

    pairs = _check_dims(config, violations)
    if pairs:
        config.dims = pairs
        # values of the wrong type were not merged, the ranges below only see well-typed values
        RANGE_CHECKS[command](params, config, violations)
    if violations:
        raise ValidationError(violations)
    config.params = params
    return config


def load_config(filepath, command=None):
    with open(filepath, 'r') as cf:
        return validate_config(cf.read(), command=command)


def flow_config(config):
    return FlowConfig(seed=config.seed, **config.params['flow'])
