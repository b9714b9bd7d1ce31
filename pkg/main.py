"""Command line entry point: plan, simulate, bench, pareto, quantiles, gen-asos and verify."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from allocation_planner import (
    BenchConfig,
    ContextSet,
    HorizonSpec,
    ModelSpec,
    ObjectiveSpec,
    OptimizerConfig,
    PosteriorState,
    load_config,
    pareto_sweep,
    quantile_report,
    run_bench,
    run_episode,
    solve_plan,
)
from allocation_planner.config import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_ERROR,
    EXIT_OK,
    OUTPUT_DIR,
    get_text,
)
from allocation_planner.errors import (
    ConfigError,
    DegeneratePosterior,
    IndefiniteMatrix,
    NonFiniteError,
    SingularMatrix,
)
from allocation_planner.harness import build_instances, simple_regret_monotone, write_csv
from allocation_planner.model import AdditiveEffects, ArmEffects, MixedEffects
from allocation_planner.simulator import synthetic_asos_instance, write_asos_csv
from allocation_planner.validators import validate_plan_config, validate_posterior
from allocation_planner import verify

NUMERICAL_ERRORS = (NonFiniteError, DegeneratePosterior, IndefiniteMatrix, SingularMatrix)
FEATURE_MAPS = {'arm_effects': ArmEffects, 'additive': AdditiveEffects, 'mixed': MixedEffects}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="allocation-planner", description=__doc__)
    parser.add_argument('--verbose', action='store_true', help="Log planner and harness progress at DEBUG level")
    commands = parser.add_subparsers(dest='command', required=True)

    def add_common(sub, config_required: bool = True):
        sub.add_argument('--config', type=Path, required=config_required, help="YAML configuration file")
        sub.add_argument('--seed', type=int, help="Override the master seed")
        sub.add_argument('--out-dir', type=Path, help="Override the output directory")
        sub.add_argument('--threads', type=int, help="Worker threads")
        sub.add_argument('--policy', help="Comma separated policy ids to keep")
        sub.add_argument('--lr-sweep', help="Comma separated RHO learning rates")

    add_common(commands.add_parser('plan', help="Solve one residual horizon plan from a posterior"))
    add_common(commands.add_parser('simulate', help="Run one episode and print a per-epoch trace"))
    add_common(commands.add_parser('bench', help="Run the benchmark protocol"))
    add_common(commands.add_parser('pareto', help="Sweep objective weights"))

    quantiles = commands.add_parser('quantiles', help="Regret quantiles normalized by a baseline")
    quantiles.add_argument('--runs', type=Path, required=True, help="runs.csv from a benchmark")
    quantiles.add_argument('--baseline', default='uniform', help="Baseline policy id")
    quantiles.add_argument('--out-dir', type=Path, help="Output directory")

    gen = commands.add_parser('gen-asos', help="Write synthetic ASOS-format instances")
    gen.add_argument('--num-instances', type=int, default=1)
    gen.add_argument('--num-intervals', type=int, default=10)
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--out', type=Path, default=OUTPUT_DIR / "asos_synthetic.csv")

    check = commands.add_parser('verify', help="Run the verification checks")
    check.add_argument('--seed', type=int, default=0)
    check.add_argument('--quick', action='store_true', help="Smaller draw counts")
    check.add_argument('--check', choices=['reparam', 'clt', 'policy_improvement', 'dts_limit'],
                       help="Run a single check")
    return parser


def _apply_overrides(data: dict, args: argparse.Namespace) -> dict:
    data = dict(data)
    if args.seed is not None:
        data['seed'] = args.seed
    if args.out_dir is not None:
        data['out_dir'] = str(args.out_dir)
    if args.threads is not None:
        data['threads'] = args.threads
    if args.lr_sweep:
        try:
            data['lr_sweep'] = [float(r) for r in args.lr_sweep.split(',')]
        except ValueError as e:
            raise ConfigError(f"Invalid --lr-sweep value: {args.lr_sweep}", field='lr_sweep') from e
    if args.policy:
        keep = set(args.policy.split(','))
        data['policies'] = [p for p in data.get('policies', []) if p.get('id', p.get('kind')) in keep]
    return data


def _bench_config(args: argparse.Namespace) -> BenchConfig:
    data = _apply_overrides(load_config(args.config), args)
    return BenchConfig.from_dict(data, args.config.name)


def _load_posterior(source, base: Path) -> PosteriorState:
    if isinstance(source, str):
        path = base / source
        if not path.exists():
            raise ConfigError(f"Posterior file not found: {path}", field='posterior')
        with open(path, 'r', encoding='utf-8') as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Error parsing JSON in {path.name}: {e}", line=e.lineno) from e
        validate_posterior(data, path.name)
    else:
        data = source
        validate_posterior(data, 'posterior')
    return PosteriorState.from_dict(data)


def cmd_plan(args: argparse.Namespace) -> int:
    print(get_text('plan_header'))
    data = _apply_overrides(load_config(args.config), args)
    validate_plan_config(data, args.config.name)
    state = _load_posterior(data['posterior'], args.config.parent)

    horizon = HorizonSpec(tuple(data['batch_sizes']))
    num_arms = int(data['num_arms'])
    if 'contexts' in data:
        contexts = np.asarray(data['contexts'], dtype=float)
        uniform = np.full(contexts.shape[0], 1.0 / contexts.shape[0])
        ctx = ContextSet(
            contexts,
            data.get('weights_per_epoch', np.tile(uniform, (horizon.total_epochs, 1))),
            data.get('population_weights', uniform),
        )
    else:
        ctx = ContextSet.single(horizon.total_epochs)
    feature_map = FEATURE_MAPS[data.get('feature_map', 'arm_effects')]()
    model = ModelSpec.build(feature_map, ctx, num_arms, data.get('noise_scale', 1.0),
                            data.get('loss_family', 'squared_error'))
    spec = ObjectiveSpec.from_dict(data.get('objective', {}))
    opt = OptimizerConfig.from_dict(data.get('optimizer', {}), seed=int(data.get('seed', 0)))

    plan = solve_plan(state, horizon, model, ctx, spec, opt)
    value = plan.history[-1] if plan.history else None
    print(json.dumps({'start_epoch': plan.start_epoch, 'plan': plan.to_dict(), 'value': value}))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    print(get_text('simulate_header'))
    config = _bench_config(args)
    env = build_instances(config.environment, config.seed)[0]
    policy = config.expanded_policies()[0]
    trace = []
    record = run_episode(env, policy, 0, 0, config.seed, config.c_prior, trace=trace)
    for row in trace:
        print(json.dumps(row))
    print(json.dumps({
        'policy_id': record.policy_id,
        'simple_regret': record.simple_regret,
        'cumulative_regret': record.cumulative_regret,
        'chosen_arm': record.chosen_arm,
    }))
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    print(get_text('bench_header'))
    result = run_bench(_bench_config(args))
    for path in result.paths:
        print(f"{get_text('wrote')} {path}")
    print(f"\n{get_text('done')} {len(result.records)} run(s).")
    return EXIT_OK


def cmd_pareto(args: argparse.Namespace) -> int:
    print(get_text('pareto_header'))
    config = _bench_config(args)
    frame = pareto_sweep(config)
    path = Path(config.out_dir) / "pareto.csv"
    write_csv(frame, path)
    print(f"{get_text('wrote')} {path}")
    if (frame['policy'] == 'rho').sum() > 1:
        key = 'pareto_monotone' if simple_regret_monotone(frame) else 'pareto_not_monotone'
        print(f"  {get_text(key)}")
    print(f"\n{get_text('done')} {len(frame)} point(s).")
    return EXIT_OK


def cmd_quantiles(args: argparse.Namespace) -> int:
    print(get_text('quantiles_header'))
    if not args.runs.exists():
        raise ConfigError(f"Runs file not found: {args.runs}", field='runs')
    frame = quantile_report(args.runs, args.baseline)
    path = (args.out_dir or args.runs.parent) / "quantiles.csv"
    write_csv(frame, path)
    print(f"{get_text('wrote')} {path}")
    return EXIT_OK


def cmd_gen_asos(args: argparse.Namespace) -> int:
    print(get_text('gen_asos_header'))
    if args.num_instances < 1 or args.num_intervals < 1:
        raise ConfigError("'num-instances' and 'num-intervals' must be positive")
    rng = np.random.default_rng(args.seed)
    instances = [
        synthetic_asos_instance(args.num_intervals, rng, name=f"synthetic-{idx}/0")
        for idx in range(args.num_instances)
    ]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_asos_csv(instances, args.out)
    print(f"{get_text('wrote')} {args.out}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    print(get_text('verify_header'))
    checks = {
        'reparam': lambda: verify.check_reparam(seeds=(args.seed,)),
        'clt': lambda: verify.check_clt(verify.CltConfig(seed=args.seed)),
        'policy_improvement': lambda: verify.check_policy_improvement(seed=args.seed),
        'dts_limit': lambda: verify.check_dts_limit(seed=args.seed),
    }
    if args.check:
        reports = [checks[args.check]()]
    else:
        reports = verify.run_all(args.seed, quick=args.quick)

    for report in reports:
        print(json.dumps(report))
    failed = [r['check'] for r in reports if not r['pass']]
    for report in reports:
        status = get_text('check_fail') if report['check'] in failed else get_text('check_pass')
        print(f"  {status} {report['check']}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


COMMANDS = {
    'plan': cmd_plan,
    'simulate': cmd_simulate,
    'bench': cmd_bench,
    'pareto': cmd_pareto,
    'quantiles': cmd_quantiles,
    'gen-asos': cmd_gen_asos,
    'verify': cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, run one subcommand and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    # basicConfig is a no-op once the root logger has handlers
    logging.getLogger('allocation_planner').setLevel(level)
    try:
        return COMMANDS[args.command](args)
    except NUMERICAL_ERRORS as e:
        print(f"  ✗ {get_text('numerical_error')}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR
    except (ConfigError, ValueError, KeyError) as e:
        print(f"  ✗ {get_text('config_error')}: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
