"""Configuration and input validation functions."""

from typing import Any

from .errors import ConfigError

ENVIRONMENT_KINDS = ['asos', 'linear', 'ranking']
POLICY_KINDS = ['rho', 'uniform', 'ts', 'ttts', 'dts']
PLANNING_MODELS = ['contextual', 'noncontextual']
NOISE_KINDS = ['gaussian', 'gumbel', 'student_t']


def _positive_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value > 0


def _number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def validate_environment(env: dict[str, Any], filename: str) -> None:
    """Validate the environment section of a benchmark config.

    Raises:
        ConfigError: If a field is missing or invalid
    """
    if not isinstance(env, dict):
        raise ConfigError(f"'environment' must be a mapping in {filename}", field='environment')
    kind = env.get('kind', 'asos')
    if kind not in ENVIRONMENT_KINDS:
        raise ConfigError(f"Unknown environment kind '{kind}' in {filename}", field='environment.kind')

    for field in ['num_instances', 'num_arms', 'batch_size']:
        if field in env and not _positive_int(env[field]):
            raise ConfigError(f"'{field}' must be a positive integer in {filename}", field=f'environment.{field}')
    if kind == 'asos' and env.get('num_arms', 2) < 2:
        raise ConfigError(f"'num_arms' must be at least 2 in {filename}", field='environment.num_arms')

    noise = env.get('noise', {'kind': 'gaussian'})
    if not isinstance(noise, dict) or noise.get('kind', 'gaussian') not in NOISE_KINDS:
        raise ConfigError(f"'noise.kind' must be one of {NOISE_KINDS} in {filename}", field='environment.noise')
    if noise.get('kind') == 'student_t' and not (_number(noise.get('df', 5.0)) and noise.get('df', 5.0) > 2):
        raise ConfigError(f"StudentT 'df' must be greater than 2 in {filename}", field='environment.noise.df')

    if 'csv' in env and (not isinstance(env['csv'], str) or not env['csv'].strip()):
        raise ConfigError(f"'csv' must be a non-empty path in {filename}", field='environment.csv')


def validate_policy(policy: dict[str, Any], idx: int, filename: str, env_kind: str = 'asos') -> None:
    """Validate one policy entry.

    Raises:
        ConfigError: If a field is missing or invalid
    """
    where = f'policies[{idx}]'
    if not isinstance(policy, dict):
        raise ConfigError(f"Policy {idx} must be a mapping in {filename}", field=where)
    if 'kind' not in policy:
        raise ConfigError(f"Policy {idx} missing 'kind' in {filename}", field=f'{where}.kind')
    if policy['kind'] not in POLICY_KINDS:
        raise ConfigError(f"Unknown policy kind '{policy['kind']}' in {filename}", field=f'{where}.kind')

    model = policy.get('model', 'contextual')
    if model not in PLANNING_MODELS:
        raise ConfigError(f"'model' must be one of {PLANNING_MODELS} in {filename}", field=f'{where}.model')
    if model == 'noncontextual' and env_kind == 'ranking':
        raise ConfigError(f"Ranking environments need a contextual planning model in {filename}", field=f'{where}.model')

    if 'beta_param' in policy:
        beta = policy['beta_param']
        if not _number(beta) or not 0 < beta <= 1:
            raise ConfigError(f"'beta_param' must be in (0, 1] in {filename}", field=f'{where}.beta_param')

    optimizer = policy.get('optimizer', {})
    if not isinstance(optimizer, dict):
        raise ConfigError(f"'optimizer' must be a mapping in {filename}", field=f'{where}.optimizer')
    if 'learning_rate' in optimizer and not (_number(optimizer['learning_rate']) and optimizer['learning_rate'] > 0):
        raise ConfigError(f"'learning_rate' must be positive in {filename}", field=f'{where}.optimizer.learning_rate')
    if 'num_scenarios' in optimizer and not (_positive_int(optimizer['num_scenarios']) and optimizer['num_scenarios'] >= 2):
        raise ConfigError(f"'num_scenarios' must be an integer >= 2 in {filename}", field=f'{where}.optimizer.num_scenarios')

    objective = policy.get('objective', {})
    if not isinstance(objective, dict):
        raise ConfigError(f"'objective' must be a mapping in {filename}", field=f'{where}.objective')
    terms = objective.get('terms', [{'kind': 'simple_regret'}])
    if not isinstance(terms, list) or not terms:
        raise ConfigError(f"'objective.terms' must be a non-empty list in {filename}", field=f'{where}.objective.terms')
    for t_idx, term in enumerate(terms):
        if not isinstance(term, dict) or 'kind' not in term:
            raise ConfigError(f"Term {t_idx} missing 'kind' in {filename}", field=f'{where}.objective.terms[{t_idx}]')
        if 'weight' in term and not (_number(term['weight']) and term['weight'] >= 0):
            raise ConfigError(
                f"Term weight must be a non-negative number in {filename}",
                field=f'{where}.objective.terms[{t_idx}].weight',
            )


def validate_bench_config(config: dict[str, Any], filename: str) -> None:
    """Validate a benchmark configuration has the required fields.

    Args:
        config: Parsed configuration dictionary
        filename: Name of the file being validated (for error messages)

    Raises:
        ConfigError: If required fields are missing or invalid
    """
    if 'policies' not in config:
        raise ConfigError(f"Missing required field 'policies' in {filename}", field='policies')
    if not isinstance(config['policies'], list) or not config['policies']:
        raise ConfigError(f"'policies' must be a non-empty list in {filename}", field='policies')

    env = config.get('environment', {})
    validate_environment(env, filename)
    for idx, policy in enumerate(config['policies']):
        validate_policy(policy, idx, filename, env.get('kind', 'asos'))

    ids = [p.get('id', p['kind']) for p in config['policies']]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"Policy ids must be unique in {filename}", field='policies')

    # Validate numeric fields
    if 'replications' in config and not _positive_int(config['replications']):
        raise ConfigError(f"'replications' must be a positive integer in {filename}", field='replications')
    if 'threads' in config and not _positive_int(config['threads']):
        raise ConfigError(f"'threads' must be a positive integer in {filename}", field='threads')
    if 'seed' in config and (not isinstance(config['seed'], int) or config['seed'] < 0):
        raise ConfigError(f"'seed' must be a non-negative integer in {filename}", field='seed')
    if 'c_prior' in config and not (_number(config['c_prior']) and config['c_prior'] > 0):
        raise ConfigError(f"'c_prior' must be positive in {filename}", field='c_prior')

    # Validate optional sweeps
    if 'lr_sweep' in config:
        rates = config['lr_sweep']
        if not isinstance(rates, list) or not rates or not all(_number(r) and r > 0 for r in rates):
            raise ConfigError(f"'lr_sweep' must be a non-empty list of positive numbers in {filename}", field='lr_sweep')
    if 'pareto' in config:
        pareto = config['pareto']
        weights = pareto.get('weights', []) if isinstance(pareto, dict) else None
        if weights is None or not isinstance(weights, list):
            raise ConfigError(f"'pareto.weights' must be a list in {filename}", field='pareto.weights')
        for w_idx, pair in enumerate(weights):
            if not isinstance(pair, list) or len(pair) != 2 or not all(_number(w) and w >= 0 for w in pair):
                raise ConfigError(
                    f"Weight {w_idx} must be a pair of non-negative numbers in {filename}",
                    field=f'pareto.weights[{w_idx}]',
                )


def validate_posterior(data: dict[str, Any], filename: str) -> None:
    """Validate a JSON posterior document {beta, sigma, epoch}.

    Raises:
        ConfigError: If required fields are missing or malformed
    """
    for field in ['beta', 'sigma']:
        if field not in data:
            raise ConfigError(f"Missing required field '{field}' in {filename}", field=field)
    if not isinstance(data['beta'], list) or not data['beta']:
        raise ConfigError(f"'beta' must be a non-empty list in {filename}", field='beta')
    sigma = data['sigma']
    if not isinstance(sigma, list) or len(sigma) != len(data['beta']):
        raise ConfigError(f"'sigma' must be a {len(data['beta'])}x{len(data['beta'])} matrix in {filename}", field='sigma')
    for row in sigma:
        if not isinstance(row, list) or len(row) != len(data['beta']):
            raise ConfigError(f"'sigma' must be a square matrix in {filename}", field='sigma')
    if 'epoch' in data and (not isinstance(data['epoch'], int) or data['epoch'] < 0):
        raise ConfigError(f"'epoch' must be a non-negative integer in {filename}", field='epoch')


FEATURE_MAPS = ['arm_effects', 'additive', 'mixed']
LOSS_FAMILIES = ['squared_error', 'logistic']


def validate_plan_config(config: dict[str, Any], filename: str) -> None:
    """Validate a one-shot planning configuration.

    Raises:
        ConfigError: If required fields are missing or invalid
    """
    for field in ['posterior', 'num_arms', 'batch_sizes']:
        if field not in config:
            raise ConfigError(f"Missing required field '{field}' in {filename}", field=field)
    if not isinstance(config['posterior'], (str, dict)):
        raise ConfigError(f"'posterior' must be a path or a mapping in {filename}", field='posterior')
    if not _positive_int(config['num_arms']):
        raise ConfigError(f"'num_arms' must be a positive integer in {filename}", field='num_arms')

    sizes = config['batch_sizes']
    if not isinstance(sizes, list) or not sizes or not all(_positive_int(n) for n in sizes):
        raise ConfigError(f"'batch_sizes' must be a non-empty list of positive integers in {filename}",
                          field='batch_sizes')

    if config.get('feature_map', 'arm_effects') not in FEATURE_MAPS:
        raise ConfigError(f"'feature_map' must be one of {FEATURE_MAPS} in {filename}", field='feature_map')
    if config.get('loss_family', 'squared_error') not in LOSS_FAMILIES:
        raise ConfigError(f"'loss_family' must be one of {LOSS_FAMILIES} in {filename}", field='loss_family')
    if config.get('feature_map', 'arm_effects') != 'arm_effects' and 'contexts' not in config:
        raise ConfigError(f"Contextual feature maps need 'contexts' in {filename}", field='contexts')

    noise = config.get('noise_scale', 1.0)
    values = noise if isinstance(noise, list) else [noise]
    if not values or not all(_number(v) and v > 0 for v in values):
        raise ConfigError(f"'noise_scale' must be positive in {filename}", field='noise_scale')
