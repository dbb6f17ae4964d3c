#!/usr/bin/env python3
"""
Donaldson Equation Toolkit - Main Entry Point
Subcommands: build, verify, transform, liouville, complexify, solve, probe31, catalog
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import grid_io
from errors import DonaldsonError, InvalidInputError
from pipeline_core import AnalysisPipeline
from settings import AnalysisConfig, ConfigManager, EnhancedLogger

logger = logging.getLogger(__name__)

COMMANDS = ("build", "verify", "transform", "liouville", "complexify", "solve", "probe31", "catalog")
EFFECTIVE_CONFIG_FILE = "effective_config.json"


@dataclass
class RunConfig:
    """Everything one invocation needs: subcommand, inputs, output location and effective config"""
    command: str
    inputs: Dict[str, Any] = field(default_factory=dict)
    output_dir: Path = Path("out")
    config: AnalysisConfig = field(default_factory=AnalysisConfig)

    @property
    def report_format(self) -> str:
        return self.config.report_format


class _ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors share the JSON error path"""

    def error(self, message):
        raise InvalidInputError(f"usage: {message}")


def _shape_list(text: str) -> List[int]:
    try:
        return [int(s) for s in text.lower().replace(",", "x").split("x") if s]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Grid shape must look like 33x33, got {text!r}") from e


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments"""
    common = _ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='Path to a JSON configuration file')
    common.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='Override one configuration key (repeatable)')
    common.add_argument('--output-dir', type=str, default='out', help='Directory for reports and artifacts')
    common.add_argument('--seed', type=int, help='Random seed for sample points')
    common.add_argument('--format', choices=['json', 'csv'], help='Report format on stdout')
    common.add_argument('--log-level', type=str, help='Logging level (DEBUG, INFO, WARNING, ERROR)')
    common.add_argument('--log-file', type=str, help='Rotating log file (relative to the output directory)')

    parser = _ArgumentParser(description="Donaldson's equation toolkit: exact solutions, transforms, Dirichlet solves")
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_ArgumentParser)

    p = sub.add_parser('build', parents=[common], help='Build an entire solution a t^2 + t b + g')
    p.add_argument('--a', required=True, help='Positive rational p/q')
    p.add_argument('--b', required=True, help='Harmonic polynomial in x1..xn')
    p.add_argument('--n', type=int, help='Spatial dimension (inferred from b when omitted)')
    p.add_argument('--extra', help='Harmonic polynomial added to g')
    p.add_argument('--out', help='Bundle path (default: <output-dir>/solution.json)')

    p = sub.add_parser('verify', parents=[common], help='Certify a bundle, polynomial or grid')
    p.add_argument('input', nargs='?', help='Solution bundle or grid header')
    p.add_argument('--u', help='Polynomial in t, x1..xn to certify directly')
    p.add_argument('--n', type=int)
    p.add_argument('--shapes', nargs='+', type=_shape_list, help='Nested grids for the convergence order, e.g. 17x17 33x33 65x65')
    p.add_argument('--region', nargs=2, type=float, action='append', metavar=('LO', 'HI'))

    p = sub.add_parser('transform', parents=[common], help='Donaldson transform of a bundle or u-grid')
    p.add_argument('input')
    p.add_argument('--numeric-shape', type=_shape_list, help='Also sample the bundle on this grid and transform numerically')
    p.add_argument('--box', nargs=2, type=float, action='append', metavar=('LO', 'HI'))
    p.add_argument('--payload', choices=['csv', 'npy'], default='csv')

    p = sub.add_parser('liouville', parents=[common], help='Liouville and completeness diagnostics')
    p.add_argument('input')
    p.add_argument('--point', nargs='+', type=float, help='Spatial point for the completeness line')

    p = sub.add_parser('complexify', parents=[common], help='Complex Monge-Ampere side (n = 2)')
    p.add_argument('input', nargs='?', help='Real solution bundle with n = 2')
    p.add_argument('--a')
    p.add_argument('--b', help='Polynomial in w, wb (I is the imaginary unit)')
    p.add_argument('--f', help='Real polynomial in z, zb')
    p.add_argument('--points', type=int, default=5, help='Random points for Hessian and curvature samples')

    p = sub.add_parser('solve', parents=[common], help='Dirichlet problem by damped Newton')
    p.add_argument('--bundle', help='Solution bundle whose u supplies the boundary data')
    p.add_argument('--boundary', help='Polynomial in t, x1..xn supplying the boundary data')
    p.add_argument('--n', type=int)
    p.add_argument('--shape', type=_shape_list)
    p.add_argument('--box', nargs=2, type=float, action='append', metavar=('LO', 'HI'))
    p.add_argument('--payload', choices=['csv', 'npy'], default='csv')

    p = sub.add_parser('probe31', parents=[common], help='Nested-domain u_tt oscillation experiment')
    p.add_argument('--bundle')
    p.add_argument('--a')
    p.add_argument('--b')
    p.add_argument('--n', type=int)
    p.add_argument('--perturbation', help='Polynomial added to the boundary data')
    p.add_argument('--amplitude', type=float, help='Amplitude of the cosine perturbation')
    p.add_argument('--frequency', type=float, help='Frequency of the cosine perturbation')
    p.add_argument('--domains', nargs='+', type=float, help='Domain sizes L for boxes [0, L]^(n+1)')

    p = sub.add_parser('catalog', parents=[common], help='Harmonic bases or the certified solution catalog')
    p.add_argument('--n', type=int, default=2)
    p.add_argument('--degree', type=int)
    p.add_argument('--solutions', action='store_true', help='List the certified solution catalog')

    return parser.parse_args(argv)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge config file, --set overrides and the dedicated global flags"""
    overrides: Dict[str, Any] = {}
    for item in args.set:
        overrides.update(ConfigManager.parse_override(item))
    flags = {
        'seed': args.seed,
        'report_format': args.format,
        'log_level': args.log_level,
        'log_file': args.log_file,
        'perturbation_amplitude': getattr(args, 'amplitude', None),
        'perturbation_frequency': getattr(args, 'frequency', None),
    }
    overrides.update({k: v for k, v in flags.items() if v is not None})
    config = ConfigManager().load_config(args.config, overrides)

    skip = {'command', 'config', 'set', 'output_dir', 'seed', 'format', 'log_level', 'log_file',
            'amplitude', 'frequency'}
    inputs = {k: v for k, v in vars(args).items() if k not in skip}
    return RunConfig(command=args.command, inputs=inputs, output_dir=Path(args.output_dir), config=config)


def _path(inputs: Dict[str, Any], key: str) -> Optional[Path]:
    return Path(inputs[key]) if inputs.get(key) else None


def _dispatch(pipeline: AnalysisPipeline, rc: RunConfig) -> Dict[str, Any]:
    i = rc.inputs
    if rc.command == 'build':
        return pipeline.run_build(i['a'], i['b'], i.get('n'), i.get('extra'), _path(i, 'out'))
    if rc.command == 'verify':
        if not i.get('input') and not i.get('u'):
            raise InvalidInputError("verify needs an input file or --u")
        return pipeline.run_verify(_path(i, 'input'), i.get('u'), i.get('n'), i.get('shapes'), i.get('region'))
    if rc.command == 'transform':
        return pipeline.run_transform(_path(i, 'input'), i.get('numeric_shape'), i.get('box'), i['payload'])
    if rc.command == 'liouville':
        return pipeline.run_liouville(_path(i, 'input'), i.get('point'))
    if rc.command == 'complexify':
        return pipeline.run_complexify(_path(i, 'input'), i.get('a'), i.get('b'), i.get('f'), i['points'])
    if rc.command == 'solve':
        return pipeline.run_solve(_path(i, 'bundle'), i.get('boundary'), i.get('n'), i.get('shape'),
                                  i.get('box'), i['payload'])
    if rc.command == 'probe31':
        return pipeline.run_probe31(_path(i, 'bundle'), i.get('a'), i.get('b'), i.get('n'),
                                    i.get('perturbation'), i.get('domains'))
    if rc.command == 'catalog':
        degree = i['degree'] if i.get('degree') is not None else rc.config.catalog_max_degree
        return pipeline.run_catalog(i['n'], degree, i.get('solutions', False))
    raise InvalidInputError(f"Unknown command {rc.command!r}; expected one of {COMMANDS}")


def _print_report(report: Dict[str, Any], report_format: str) -> None:
    if report_format == 'csv' and report.get('stage') == 'probe31':
        writer = csv.writer(sys.stdout)
        with open(report['csv'], newline='') as f:
            for row in csv.reader(f):
                writer.writerow(row)
        return
    if report_format == 'csv' and report.get('stage') == 'catalog' and 'levels' in report:
        writer = csv.writer(sys.stdout)
        writer.writerow(['degree', 'dimension', 'rank', 'basis'])
        for level in report['levels']:
            writer.writerow([level['degree'], level['dimension'], level['rank'], ' ; '.join(level['basis'])])
        return
    print(grid_io.dumps(report))


def emit_error(error: DonaldsonError) -> None:
    print(json.dumps(grid_io.to_jsonable(error.to_dict()), sort_keys=True), file=sys.stderr)


def run(rc: RunConfig) -> int:
    """Execute one subcommand; returns the process exit status"""
    try:
        EnhancedLogger(rc.config, log_dir=rc.output_dir)
        logger.info(f"Running {rc.command} (seed {rc.config.seed}, output {rc.output_dir})")
        pipeline = AnalysisPipeline(rc.config, rc.output_dir)
        ConfigManager().save_config(rc.config, rc.output_dir / EFFECTIVE_CONFIG_FILE)
        report = _dispatch(pipeline, rc)
        _print_report(report, rc.report_format)
        return 0
    except DonaldsonError as e:
        logger.error(f"{rc.command} failed: {e}")
        emit_error(e)
        return e.exit_code
    except Exception as e:
        logger.exception(f"{rc.command} crashed: {e}")
        print(json.dumps({"error": "internal", "message": str(e)}), file=sys.stderr)
        return 1


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    try:
        rc = build_run_config(parse_arguments(argv))
    except DonaldsonError as e:
        emit_error(e)
        return e.exit_code
    return run(rc)


if __name__ == "__main__":
    sys.exit(main())
