# ----------------------------------------------------------------------
#  Donaldson Equation Toolkit - Stage Pipeline
#
#  One stage per subcommand, each reading its inputs, calling the library
#  modules and writing its artifacts into the output directory:
#  build -> verify -> transform -> liouville, complexify, solve, probe31,
#  catalog. Every report embeds the effective configuration.
# ----------------------------------------------------------------------

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

import grid_io
from builder import (EntireSolution, build_entire_solution, harmonic_catalog, solution_catalog,
                     solution_from_bundle, solution_to_bundle, split_g)
from complexify import (build_cma_solution, complex_hessian, complex_hessian_determinant, conjugation_residual,
                        curvature_spot_check, real_to_complex_bridge, s_independent_extension)
from dirichlet import (PROBE_CSV_HEADER, PerturbationSpec, SolveConfig, boundary_from_function, newton_solve,
                       probe_problem31)
from errors import ConstraintViolationError, InvalidInputError, SolverFailureError
from expression_parser import infer_dimension, parse_bipoly, parse_optional_poly, parse_poly, parse_rational
from polycore import exact_rank, harmonic_basis, harmonic_dimension
from settings import AnalysisConfig, SystemMonitor
from transform import (TransformResult, completeness_diagnostic, donaldson_transform_numeric,
                       donaldson_transform_symbolic, harmonicity_residual, liouville_diagnostic)
from verifier import (GridField, certify_solution, convergence_order, ellipticity_check, q_operator_grid,
                      q_operator_symbolic)

logger = logging.getLogger(__name__)


class AnalysisPipeline:
    """
    Runs the toolkit stages for one invocation.

    Each `run_<stage>` method takes already-parsed arguments, writes its
    artifacts and returns the report dictionary.
    """

    def __init__(self, config: AnalysisConfig, output_dir: Path):
        self.config = config
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        monitor = SystemMonitor(config)
        self.workers = monitor.get_optimal_workers()
        resources = monitor.check_system_resources()
        logger.debug(f"Pipeline ready: output {self.output_dir}, {self.workers} workers, "
                     f"{resources['cpu_count']:.0f} CPUs, {resources['memory_available_gb']:.1f} GB free")
        if resources['memory_percent'] > 0.9:
            logger.warning(f"Memory usage at {resources['memory_percent']:.0%}; large 3-D grids may swap")

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    def _report(self, stage: str, body: Dict[str, Any]) -> Dict[str, Any]:
        report = {"stage": stage, **body, "config": self.config.to_dict()}
        grid_io.write_json(self.output_dir / f"{stage}_report.json", report)
        return report

    def load_input(self, path: Path) -> Tuple[str, Any, Dict]:
        """Classify an input file as a solution bundle or a grid; returns (kind, object, header)."""
        data = grid_io.read_json(path)
        if data.get("format") == "grid":
            field, header = grid_io.read_grid(path)
            return "grid", field, header
        if "u" in data and "a" in data:
            return "bundle", solution_from_bundle(data, verify=True), data
        raise InvalidInputError(f"{path} is neither a solution bundle nor a grid header")

    def _solution_from_args(self, a: Optional[str], b: Optional[str], n: Optional[int],
                            extra: Optional[str] = None, bundle: Optional[Path] = None) -> EntireSolution:
        if bundle is not None:
            kind, obj, _ = self.load_input(bundle)
            if kind != "bundle":
                raise InvalidInputError(f"{bundle} must be a solution bundle")
            return obj
        if a is None or b is None:
            raise InvalidInputError("Provide either a bundle or both --a and --b")
        n = n or infer_dimension(b, extra or "")
        return build_entire_solution(parse_rational(a), parse_poly(b, n, with_t=False), n,
                                     parse_optional_poly(extra, n))

    def _box(self, box: Optional[Sequence[Sequence[float]]], ndim: int) -> List[Tuple[float, float]]:
        box = box or self.config.box
        if len(box) == ndim:
            return [tuple(b) for b in box]
        if len(box) == 1 or len(set(map(tuple, box))) == 1:
            return [tuple(box[0])] * ndim
        raise InvalidInputError(f"Box {box} does not match {ndim} axes")

    def _shape(self, shape: Optional[Sequence[int]], ndim: int) -> List[int]:
        shape = list(shape or self.config.grid_shape)
        if len(shape) == ndim:
            return shape
        if len(set(shape)) == 1:
            return [shape[0]] * ndim
        raise InvalidInputError(f"Shape {shape} does not match {ndim} axes")

    # ------------------------------------------------------------------
    # Stages
    # ------------------------------------------------------------------

    def run_build(self, a: str, b: str, n: Optional[int] = None, extra: Optional[str] = None,
                  out: Optional[Path] = None) -> Dict[str, Any]:
        """Build a family member, write its bundle and report its certification."""
        sol = self._solution_from_args(a, b, n, extra)
        f, lap_f = split_g(sol)
        bundle_path = Path(out) if out else self.output_dir / "solution.json"
        grid_io.write_json(bundle_path, solution_to_bundle(sol))
        logger.info(f"Built solution n={sol.n}, a={sol.a}: u = {sol.u}")
        return self._report("build", {
            "bundle": str(bundle_path),
            "n": sol.n,
            "a": sol.a,
            "b": str(sol.b),
            "g": str(sol.g),
            "u": str(sol.u),
            "verify": certify_solution(sol.u),
            "split_g": {"f": str(f), "laplacian_f": lap_f},
        })

    def run_verify(self, input_path: Optional[Path] = None, u_text: Optional[str] = None,
                   n: Optional[int] = None, shapes: Optional[List[Sequence[int]]] = None,
                   region: Optional[Sequence[Sequence[float]]] = None) -> Dict[str, Any]:
        """Certify a bundle or raw polynomial exactly, or report grid residual statistics."""
        if u_text is not None:
            n = n or infer_dimension(u_text)
            u = parse_poly(u_text, n)
            certificate = certify_solution(u)
            if certificate["verdict"] != "exact-identity":
                residual = q_operator_symbolic(u) - 1
                raise ConstraintViolationError(f"Q(D^2u) - 1 = {residual}", residual)
            return self._report("verify", {"kind": "polynomial", "u": str(u), "verify": certificate,
                                           "ellipticity": self._ellipticity(u, region)})

        kind, obj, header = self.load_input(Path(input_path))
        if kind == "grid":
            residual = q_operator_grid(obj)
            return self._report("verify", {
                "kind": "grid",
                "shape": list(obj.shape),
                "residual": residual.to_dict(),
                "ellipticity": ellipticity_check(obj, region).to_dict(),
            })

        sol: EntireSolution = obj
        f, lap_f = split_g(sol)
        body = {
            "kind": "bundle",
            "u": str(sol.u),
            "verify": certify_solution(sol.u),
            "split_g": {"f": str(f), "laplacian_f": lap_f},
            "ellipticity": self._ellipticity(sol.u, region),
        }
        if shapes:
            box = self._box(None, sol.n + 1)
            body["convergence"] = convergence_order(sol.u, box, shapes, self.config.roundoff_factor).to_dict()
        return self._report("verify", body)

    def _ellipticity(self, u, region) -> Dict:
        region = region or [(-1.0, 1.0)] * u.nvars
        return ellipticity_check(u, region, self.config.positivity_samples).to_dict()

    def _numeric_transform(self, field: GridField, source: str) -> TransformResult:
        return donaldson_transform_numeric(field, self.config.root_tolerance, self.workers, source)

    def _source_label(self, header: Dict) -> str:
        return "solver" if header.get("meta", {}).get("source") == "solver" else "numeric"

    def run_transform(self, input_path: Path, numeric_shape: Optional[Sequence[int]] = None,
                      box: Optional[Sequence[Sequence[float]]] = None, payload: str = "csv") -> Dict[str, Any]:
        """Transform a bundle exactly (optionally also on a sampled grid) or a u-grid numerically."""
        kind, obj, header = self.load_input(Path(input_path))
        body: Dict[str, Any] = {}
        if kind == "bundle":
            result = donaldson_transform_symbolic(obj)
            body["symbolic"] = {
                **result.to_dict(),
                "harmonicity": harmonicity_residual(result).to_dict(),
                "liouville": self._liouville(result).to_dict(),
            }
            if numeric_shape is None:
                return self._report("transform", body)
            ndim = obj.n + 1
            field = GridField.sample(obj.u, self._box(box, ndim), self._shape(numeric_shape, ndim))
            source = "numeric"
        else:
            field, source = obj, self._source_label(header)

        numeric = self._numeric_transform(field, source)
        theta_path = grid_io.write_grid(
            numeric.theta, self.output_dir / "theta.json", payload,
            axis_names=["z"] + [f"x{i}" for i in range(1, numeric.theta.ndim)],
            meta={"kind": "theta", "source": source},
        )
        body["numeric"] = {
            **numeric.to_dict(),
            "theta_file": str(theta_path),
            "harmonicity": harmonicity_residual(numeric).to_dict(),
            "liouville": self._liouville(numeric).to_dict(),
        }
        return self._report("transform", body)

    def _liouville(self, result: TransformResult):
        return liouville_diagnostic(result, symbolic_tolerance=self.config.liouville_tolerance_symbolic,
                                    solver_factor=self.config.liouville_solver_factor)

    def run_liouville(self, input_path: Path, point: Optional[Sequence[float]] = None) -> Dict[str, Any]:
        """Liouville diagnostic (and completeness where u is available) for a bundle, u-grid or theta grid."""
        kind, obj, header = self.load_input(Path(input_path))
        body: Dict[str, Any] = {}
        completeness_source = obj
        if kind == "bundle":
            result = donaldson_transform_symbolic(obj)
        elif header.get("meta", {}).get("kind") == "theta":
            result = TransformResult.from_theta_field(obj, header["meta"].get("source", "numeric"))
            completeness_source = None
        else:
            result = self._numeric_transform(obj, self._source_label(header))
        body["liouville"] = self._liouville(result).to_dict()
        body["dtheta_dz_stats"] = result.dtheta_dz_stats
        if completeness_source is not None:
            verdicts = completeness_diagnostic(completeness_source, point, self.config.completeness_windows,
                                               self.config.diverging_exponent, self.config.bounded_exponent)
            body["completeness"] = [v.to_dict() for v in verdicts]
        return self._report("liouville", body)

    def run_complexify(self, input_path: Optional[Path] = None, a: Optional[str] = None,
                       b: Optional[str] = None, f: Optional[str] = None,
                       points: int = 5) -> Dict[str, Any]:
        """Bridge a real n = 2 bundle to the complex side, or build a complex family member."""
        rng = np.random.default_rng(self.config.seed)
        if input_path is not None:
            kind, sol, _ = self.load_input(Path(input_path))
            if kind != "bundle":
                raise InvalidInputError("complexify expects a solution bundle")
            bridge = real_to_complex_bridge(sol.u, self.config.bridge_samples, self.config.seed,
                                            self.config.bridge_tolerance, self.workers)
            if not bridge.passed:
                raise ConstraintViolationError(f"Bridge identity failed: {bridge.symbolic_residual}")
            return self._report("complexify", {
                "mode": "bridge",
                "v": str(s_independent_extension(sol.u)),
                "bridge": bridge.to_dict(),
            })

        if a is None or b is None:
            raise InvalidInputError("complexify needs a bundle or --a and --b")
        member = build_cma_solution(parse_rational(a), parse_bipoly(b), parse_bipoly(f) if f else None)
        samples = []
        for zr, zi, wr, wi in rng.uniform(-1.0, 1.0, size=(points, 4)):
            point = (complex(zr, zi), complex(wr, wi))
            form = complex_hessian(member.v, point)
            entry = {"z": point[0], "w": point[1], "hessian": form.to_dict()}
            if form.positive_definite:
                entry["curvature"] = curvature_spot_check(member.v, point, self.config.curvature_step)
            samples.append(entry)
        return self._report("complexify", {
            "mode": "family",
            **member.to_dict(),
            "det_residual": str(complex_hessian_determinant(member.v) - 1),
            "conjugation_residual": str(conjugation_residual(member.v)),
            "samples": samples,
        })

    def run_solve(self, bundle: Optional[Path] = None, boundary: Optional[str] = None,
                  n: Optional[int] = None, shape: Optional[Sequence[int]] = None,
                  box: Optional[Sequence[Sequence[float]]] = None, payload: str = "csv") -> Dict[str, Any]:
        """Solve the Dirichlet problem; a non-converged solve raises after the report is written."""
        if bundle is not None:
            sol = self._solution_from_args(None, None, None, bundle=bundle)
            source, n = sol.u, sol.n
        elif boundary is not None:
            n = n or infer_dimension(boundary)
            source = parse_poly(boundary, n)
        else:
            raise InvalidInputError("solve needs a bundle or a --boundary expression")
        ndim = n + 1
        grid_shape = self._shape(shape, ndim)
        data = boundary_from_function(source, self._box(box, ndim), grid_shape)
        solution, report = newton_solve(data, SolveConfig.from_analysis_config(self.config, grid_shape))

        grid_path = grid_io.write_grid(solution, self.output_dir / "solution_grid.json", payload,
                                       meta={"kind": "u", "source": "solver", "status": report.status})
        body = {"grid_file": str(grid_path), "solve": report.to_dict(), "boundary": str(source)}
        if report.converged:
            body["ellipticity"] = ellipticity_check(solution).to_dict()
        result = self._report("solve", body)
        if not report.converged:
            raise SolverFailureError(f"Dirichlet solve ended with status {report.status}", report)
        return result

    def run_probe31(self, bundle: Optional[Path] = None, a: Optional[str] = None, b: Optional[str] = None,
                    n: Optional[int] = None, perturbation: Optional[str] = None,
                    domains: Optional[Sequence[float]] = None) -> Dict[str, Any]:
        """Nested-domain u_tt oscillation experiment; writes probe31.csv."""
        base = self._solution_from_args(a, b, n, bundle=bundle)
        poly = parse_poly(perturbation, base.n) if perturbation else None
        spec = PerturbationSpec.from_config(self.config, poly)
        report = probe_problem31(base, spec, domains or self.config.probe_domain_sizes, self.config)
        csv_path = grid_io.write_csv(self.output_dir / "probe31.csv", PROBE_CSV_HEADER, report.csv_rows())
        result = self._report("probe31", {"csv": str(csv_path), **report.to_dict()})
        if not report.complete:
            failed = [r.domain_size for r in report.rows if r.status != "converged"]
            raise SolverFailureError(f"nested-domain report is partial: solves on domains {failed} did not converge")
        return result

    def run_catalog(self, n: int, degree: int, solutions: bool = False) -> Dict[str, Any]:
        """Harmonic bases for (n, d <= degree), or the certified solution catalog."""
        if solutions:
            rows = []
            for entry in solution_catalog(degree):
                sol = entry.build()
                _, lap_f = split_g(sol)
                rows.append({"label": entry.label, "n": sol.n, "a": sol.a, "b": str(sol.b),
                             "verify": certify_solution(sol.u)["verdict"], "laplacian_f": lap_f})
            return self._report("catalog", {"solutions": rows})
        levels = []
        for d in range(degree + 1):
            basis = harmonic_basis(n, d)
            levels.append({
                "degree": d,
                "dimension": harmonic_dimension(n, d),
                "rank": exact_rank(basis),
                "basis": [str(p) for p in basis],
            })
        return self._report("catalog", {"n": n, "levels": levels,
                                        "labels": [label for label, _ in harmonic_catalog(n, degree)]})
