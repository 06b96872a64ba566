#Batch entry point: config -> (PDE solve) -> builder -> residuals -> classification -> frame -> report
import json
import logging
import sys
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

from config import ConfigError, RunConfig, env_db_path, env_log_level, load_config
from constructors import (build_case_i, build_case_ii, build_flat_normal, build_lorentzian,
                          build_one_lift)
from database import RunDatabase
from fields import Grid, ScalarField, export_csv, resample, sample, st_cover
from frame import export_immersion, frame_residuals, integrate_frame
from invariants import (FundamentalData, Verdict, classify, compatibility_residual, gcr_residuals,
                        residual_scale)
from pde import (GoursatProblem, goursat_scalar, goursat_system, liouville_closed_form,
                 self_residual)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_ERROR = 2
COMMANDS = ("run", "check", "classify", "solve")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class SurfacePipeline:
    def __init__(self, config: RunConfig, store_state=False):
        self.run_id = str(uuid.uuid4())
        self.config = config
        self.grid = Grid.uv(config.domain.u_range, config.domain.v_range, config.domain.n)
        self.store_state = store_state
        self.db = RunDatabase(env_db_path(config.out_dir)) if store_state else None
        # Stage outputs
        self.solved: Dict[str, ScalarField] = {}
        self.solver_info: Dict[str, object] = {}
        self.data: Optional[FundamentalData] = None
        self.residual_maxima: Dict[str, float] = {}
        self.verdicts: Dict[str, Verdict] = {}
        self.classification = None
        self.frame_summary: Optional[dict] = None
        self.expectations: Dict[str, dict] = {}

    def _stage(self, name, func):
        print(f"▶️  {name}")
        try:
            return func()
        except (ConfigError, PipelineError):
            raise
        except Exception as e:
            logger.debug("stage %s failed", name, exc_info=True)
            raise PipelineError(name, e) from e

    # =============================
    # Stages
    # =============================

    def solve(self):
        """Produce λ (or f1, f2) on the uv-grid from the configured source"""
        cfg = self.config
        source = cfg.source
        kind = source["source"]
        L0, eps = cfg.ambient.L0, cfg.signs.epsilon
        self.solver_info = {"source": kind}

        if cfg.case == "one_lift":
            if kind == "expression":
                self.solved = {"f1": sample(source["f1"], self.grid), "f2": sample(source["f2"], self.grid)}
                return self.solved
            cover = st_cover(self.grid)
            prob = GoursatProblem.system(cover, L0, eps, f1=source["f1"], f2=source["f2"])
            f1, f2 = goursat_system(prob)
            self._record_goursat(prob, (f1, f2))
            self.solved = {"f1": resample(f1, self.grid), "f2": resample(f2, self.grid)}
            return self.solved

        if kind == "expression":
            lam = sample(source["expr"], self.grid)
        elif kind == "liouville":
            lam = liouville_closed_form(L0, source["p"], source["q"], self.grid)
        else:
            cover = st_cover(self.grid)
            prob = GoursatProblem.scalar(cover, L0, eps, *source["boundary"])
            solution = goursat_scalar(prob)
            self._record_goursat(prob, solution)
            lam = resample(solution, self.grid)
        self.solved = {"lambda": lam}
        return self.solved

    def _record_goursat(self, prob, solution):
        residuals = self_residual(prob, solution)
        margin = self.config.tolerances.margin
        self.solver_info.update({
            "st_grid": prob.grid.to_json(),
            "self_residual_max": max(r.max_abs(margin) for r in residuals),
        })

    def build(self):
        """Run the builder of the configured case"""
        cfg = self.config
        fn = cfg.functions
        eps = cfg.signs.epsilon
        common = {"ambient": cfg.ambient, "tolerances": cfg.tolerances}
        if cfg.case == "case_i":
            data = build_case_i(self.solved["lambda"], fn["gamma"], fn["p_plus"], fn["p_minus"], eps, **common)
        elif cfg.case == "case_ii":
            data = build_case_ii(self.solved["lambda"], fn["gamma"], fn["phi"], fn["psi"], eps, **common)
        elif cfg.case == "flat_normal":
            P_plus = sample(fn["P_plus"], self.grid)
            data = build_flat_normal(self.solved["lambda"], P_plus, cfg.constants["c"], cfg.signs, **common)
        elif cfg.case == "one_lift":
            gauge = sample(fn["P_tilde_minus"], self.grid)
            data = build_one_lift(self.solved["f1"], self.solved["f2"], gauge, cfg.signs, **common)
        else:
            data = build_lorentzian(self.solved["lambda"], fn["gamma"], fn["C"], eps, **common)

        if cfg.perturb is not None:
            print(f"⚠️  Perturbing {cfg.perturb.name} by {cfg.perturb.delta}")
            data = data.perturbed(cfg.perturb.name, cfg.perturb.delta)
        self.data = data
        return data

    def check(self):
        """Integrability residuals: maxima per equation and one verdict each"""
        tol = self.config.tolerances
        margin = tol.margin
        limit = tol.verdict_tol(self.grid.h, residual_scale(self.data))
        named = gcr_residuals(self.data).named()
        named["compatibility"] = compatibility_residual(self.data)
        self.verdicts = {name: Verdict(name, f.max_abs(margin), limit, f.boundary_max_abs(margin))
                         for name, f in named.items()}
        self.residual_maxima = {
            "gauss_max": self.verdicts["gauss"].max_deviation,
            "codazzi_max": max(self.verdicts[f"codazzi_{k}"].max_deviation for k in range(1, 5)),
            "ricci_max": self.verdicts["ricci"].max_deviation,
            "compatibility_max": self.verdicts["compatibility"].max_deviation,
        }
        return self.verdicts

    def classify(self):
        self.classification = classify(self.data, self.config.tolerances)
        self._check_expectations()
        return self.classification

    def _check_expectations(self):
        report = self.classification.to_json()
        for key, wanted in self.config.expect.items():
            got = report[key]
            if isinstance(got, dict):
                got = got["passed"]
            self.expectations[key] = {"expected": wanted, "actual": got, "passed": got == wanted}

    def integrate(self):
        """Integrate the frame, measure holonomy, Gram drift and the mean curvature residual"""
        cfg = self.config
        ff = integrate_frame(self.data, reproject=cfg.pipeline.reproject)
        residuals = frame_residuals(ff, self.data)
        self.frame_summary = residuals.summary(cfg.tolerances.margin)
        if cfg.pipeline.export:
            export_immersion(ff, cfg.out_dir / "immersion.csv", signs=cfg.signs.to_json(),
                             residuals=self.frame_summary)
        return ff

    # =============================
    # Results
    # =============================

    def failing(self) -> List[str]:
        failed = [name for name, v in self.verdicts.items() if not v.passed]
        failed += [f"expect.{key}" for key, e in self.expectations.items() if not e["passed"]]
        return failed

    def exit_status(self) -> int:
        return EXIT_VERDICT if self.failing() else EXIT_OK

    def emit_report(self, command: str, path: Optional[Path] = None) -> Path:
        """Write report.json; only the timestamp differs between runs of the same config"""
        path = Path(path) if path is not None else self.config.out_dir / "report.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        report = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "command": command,
            "config": self.config.raw,
            "grid": self.grid.to_json(),
            "refinement": {"h": self.grid.h, "n": self.config.domain.n},
            "solver": self.solver_info,
            **self.residual_maxima,
            "verdicts": {name: v.to_json() for name, v in self.verdicts.items()},
            "classification": self.classification.to_json() if self.classification is not None else None,
            "frame": self.frame_summary,
            "expectations": self.expectations,
            "failing": self.failing(),
            "exit_status": self.exit_status(),
        }
        with path.open("w") as handle:
            json.dump(report, handle, indent=2, sort_keys=True)
        logger.info("wrote report %s", path)
        return path

    def log_state(self, status: int):
        """Log the run into the SQLite ledger"""
        self.db.log_run(self.run_id, datetime.now(timezone.utc), self.config.case, status,
                        self.residual_maxima.get("gauss_max"), self.residual_maxima.get("compatibility_max"))

    def start(self, command: str = "run") -> int:
        cfg = self.config
        print(f"🚀 Starting {command} for case {cfg.case}")
        print(f"Run ID: {self.run_id}")
        print(f"Ambient: {cfg.ambient.family}, L0 = {cfg.ambient.L0}")
        print(f"Grid: {self.grid.n1}x{self.grid.n2}, h = {self.grid.h:.4g}")
        print("=" * 60)

        self._stage("solve", self.solve)
        if command == "solve":
            for name, f in self.solved.items():
                export_csv(f, cfg.out_dir / f"{name}.csv")
        else:
            self._stage("build", self.build)
            self._stage("check", self.check)
            if command in ("run", "classify"):
                self._stage("classify", self.classify)
            if command == "run" and cfg.pipeline.integrate_frame:
                self._stage("frame", self.integrate)
        report = self._stage("report", lambda: self.emit_report(command))

        status = self.exit_status()
        if self.store_state:
            self.log_state(status)

        print(f"\n{command} complete, report at {report}")
        for name in self.failing():
            print(f"❌ {name} failed")
        maxima = ", ".join(f"{k}={v:.3e}" for k, v in self.residual_maxima.items())
        print(f"Final Stats: exit {status}" + (f", {maxima}" if maxima else ""))
        return status

    def close(self):
        if self.db is not None:
            self.db.close()


def run_pipeline(config_path, command: str = "run", *, grid: Optional[int] = None,
                 tol: Optional[float] = None, out: Optional[str] = None, store_state: bool = False) -> int:
    """Run one subcommand on one config file and return the exit status"""
    try:
        config = load_config(config_path)
        if grid is not None:
            config.with_grid(grid)
        if tol is not None:
            config.with_tolerance(tol)
        if out is not None:
            config.with_out_dir(out)
        pipeline = SurfacePipeline(config, store_state=store_state)
    except ConfigError as e:
        print(f"❌ Config error in {config_path}: {e}")
        return EXIT_ERROR
    except ValueError as e:
        print(f"❌ Invalid setup for {config_path}: {e}")
        return EXIT_ERROR

    try:
        return pipeline.start(command)
    except PipelineError as e:
        print(f"\n❌ Pipeline error: {e}")
        return EXIT_ERROR
    except KeyboardInterrupt:
        print("\n⏹ Run interrupted by user")
        return EXIT_ERROR
    finally:
        pipeline.close()


def main(argv=None) -> int:
    import argparse

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Path to a JSON run config")
    common.add_argument("--grid", type=int, default=None, help="Override the number of points per axis")
    common.add_argument("--tol", type=float, default=None, help="Override the verdict tolerance")
    common.add_argument("--out", default=None, help="Output directory (default: config 'out' or ZMC_OUT_DIR)")
    common.add_argument("--store-state", action="store_true", help="Log the run into the SQLite ledger")
    common.add_argument("--log-level", default=None, help="Logging level (default: ZMC_LOG_LEVEL or WARNING)")

    parser = argparse.ArgumentParser(description="Time-like zero mean curvature surfaces - build, check and integrate")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="Full pipeline with frame integration and export")
    sub.add_parser("check", parents=[common], help="Integrability residuals only")
    sub.add_parser("classify", parents=[common], help="Residuals and classification report")
    sub.add_parser("solve", parents=[common], help="Solve for the conformal factor (or f1, f2) only")

    args = parser.parse_args(argv)
    logging.basicConfig(level=(args.log_level or env_log_level()).upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    return run_pipeline(args.config, args.command, grid=args.grid, tol=args.tol, out=args.out,
                        store_state=args.store_state)


if __name__ == "__main__":
    sys.exit(main())
