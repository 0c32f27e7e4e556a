"""Campaign command line: dataset generation, training, optimization runs,
front comparison, prediction scatter and optimizer benchmarks.

Every command reads one YAML campaign config (see README for the schema).
All randomness comes from explicit seeds in the config; commands refuse to
run without them.  Exit codes: 0 success, 2 config error, 3 feasibility
exhausted, 4 I/O error, 5 internal failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import artifacts, benchmarks, machine_model, postprocess, surrogate
from .design_space import DesignSpec, GeometryLimits, Parameter, default_spec, geometry_check
from .optimizer import (
    EvalOutcome,
    EvaluatorFailure,
    OptimizerConfig,
    OptResult,
    coverage,
    hypervolume_2d,
    margin_reference_point,
    run,
)
from .sampling import FeasibilityExhausted, SamplingConfig, lhs_feasible
from .surrogate import Dataset, TrainConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4
EXIT_INTERNAL = 5

APPROACHES = ("classical", "hybrid", "factor2")


class ConfigError(ValueError):
    pass


# --- config ------------------------------------------------------------------

def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return sec


def _require_seed(sec: dict, section: str) -> int:
    if "seed" not in sec:
        raise ConfigError(
            f"{section}.seed is mandatory (wall-clock seeding is not allowed)")
    seed = sec["seed"]
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"{section}.seed must be a non-negative integer")
    return seed


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    if "run_dir" not in cfg:
        raise ConfigError("run_dir is mandatory")
    known = {"run_dir", "design_space", "sampling", "dataset", "training",
             "optimizer"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def build_spec(cfg: dict) -> DesignSpec:
    sec = _section(cfg, "design_space")
    base = default_spec()
    bounds = sec.get("bounds") or {}
    params = []
    for p in base.parameters:
        if p.name in bounds:
            lo, hi = bounds[p.name]
            params.append(Parameter(p.name, float(lo) if not p.integer else int(lo),
                                    float(hi) if not p.integer else int(hi),
                                    p.integer))
        else:
            params.append(p)
    extra = set(bounds) - {p.name for p in base.parameters}
    if extra:
        raise ConfigError(f"unknown design parameters in bounds: {sorted(extra)}")
    limits_over = sec.get("limits") or {}
    try:
        limits = GeometryLimits(**limits_over)
    except TypeError as e:
        raise ConfigError(f"bad design_space.limits: {e}") from e
    try:
        return DesignSpec(parameters=tuple(params), limits=limits)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def build_train_config(cfg: dict) -> TrainConfig:
    sec = _section(cfg, "training")
    seed = _require_seed(sec, "training")
    kwargs = {k: sec[k] for k in
              ("max_epochs", "batch_size", "learning_rate",
               "validation_fraction", "patience") if k in sec}
    try:
        return TrainConfig(seed=seed, **kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad training config: {e}") from e


def build_optimizer_config(cfg: dict, budget_multiplier: int = 1) -> OptimizerConfig:
    sec = _section(cfg, "optimizer")
    seed = _require_seed(sec, "optimizer")
    rename = {"population": "population", "generations": "max_generations",
              "crossover_prob": "crossover_prob", "eta_crossover": "eta_crossover",
              "mutation_prob": "mutation_prob", "eta_mutation": "eta_mutation",
              "int_reset_prob": "int_reset_prob", "hv_window": "hv_window",
              "hv_tol": "hv_tol"}
    kwargs = {dst: sec[src] for src, dst in rename.items() if src in sec}
    try:
        return OptimizerConfig(seed=seed, budget_multiplier=budget_multiplier,
                               **kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad optimizer config: {e}") from e


def config_hash(cfg: dict) -> str:
    """Hash of the campaign semantics; the output location is excluded so a
    rerun into a different directory still reproduces identical artifacts."""
    return artifacts.canonical_hash({k: v for k, v in cfg.items()
                                     if k != "run_dir"})


# --- evaluators ----------------------------------------------------------------

def _skipped_outcome(report, tag: str) -> EvalOutcome:
    cons = np.empty(postprocess.N_CONSTRAINTS)
    cons[0] = np.nan                      # physics constraint never evaluated
    cons[1:] = report.values
    return EvalOutcome(kpis=(np.inf, np.inf), constraints=cons,
                       physics_skipped=True, tag=tag)


def reference_evaluator(spec: DesignSpec):
    """Closed-form measures plus shared post-processing ('classical' route)."""
    limits = spec.limits

    def evaluate(v: np.ndarray) -> EvalOutcome:
        report = geometry_check(v, limits)
        if not report.feasible:
            return _skipped_outcome(report, "reference")
        meas = machine_model.evaluate_measures(v)
        kpis, cons = postprocess.evaluate_kpis(v, meas, limits)
        return EvalOutcome(kpis=(kpis[0], kpis[1]), constraints=cons,
                           measures=meas, tag="reference")

    return evaluate


def surrogate_evaluator(spec: DesignSpec, model: surrogate.MetaModel):
    """Meta-model measures plus the identical post-processing ('hybrid')."""
    limits = spec.limits

    def evaluate(v: np.ndarray) -> EvalOutcome:
        report = geometry_check(v, limits)
        if not report.feasible:
            return _skipped_outcome(report, "surrogate")
        meas = surrogate.predict(model, v)
        kpis, cons = postprocess.evaluate_kpis(v, meas, limits)
        return EvalOutcome(kpis=(kpis[0], kpis[1]), constraints=cons,
                           measures=meas, tag="surrogate")

    return evaluate


# --- commands ----------------------------------------------------------------

def cmd_dataset(cfg: dict) -> int:
    spec = build_spec(cfg)
    sec = _section(cfg, "sampling")
    seed = _require_seed(sec, "sampling")
    if "n_samples" not in sec:
        raise ConfigError("sampling.n_samples is mandatory")
    scfg = SamplingConfig(n_samples=int(sec["n_samples"]), seed=seed,
                          max_resample_rounds=int(sec.get("max_resample_rounds", 100)))
    designs = lhs_feasible(scfg, spec)
    ds = surrogate.build_dataset(designs, spec)
    run_dir = Path(cfg["run_dir"])
    path = run_dir / "dataset.csv"
    artifacts.write_dataset(path, ds, meta={
        "seed": seed,
        "n_samples": scfg.n_samples,
        "spec_hash": artifacts.spec_hash(spec),
        "config_hash": config_hash(cfg),
        "kpi_hash": postprocess.kpi_definition_hash(),
    })
    print(f"dataset: {len(ds)} designs -> {path}")
    return EXIT_OK


def _load_dataset(cfg: dict, spec: DesignSpec) -> tuple[Dataset, dict]:
    path = Path(cfg["run_dir"]) / "dataset.csv"
    if not path.exists():
        raise ConfigError(f"dataset not found: {path} (run 'dvopt dataset' first)")
    ds, meta = artifacts.read_dataset(path, spec)
    if meta.get("spec_hash") != artifacts.spec_hash(spec):
        raise ConfigError(
            f"{path}: design-space hash mismatch "
            f"(dataset {meta.get('spec_hash')}, config {artifacts.spec_hash(spec)})")
    return ds, meta


def _test_split(ds: Dataset, cfg: dict, tcfg: TrainConfig):
    frac = float(_section(cfg, "dataset").get("test_fraction", 0.2))
    if not 0.0 <= frac < 1.0:
        raise ConfigError("dataset.test_fraction must be in [0, 1)")
    rng = np.random.default_rng(tcfg.seed)
    perm = rng.permutation(len(ds))
    n_test = int(round(frac * len(ds)))
    return ds.subset(perm[n_test:]), (ds.subset(perm[:n_test]) if n_test else None)


def cmd_train(cfg: dict) -> int:
    spec = build_spec(cfg)
    tcfg = build_train_config(cfg)
    ds, _ = _load_dataset(cfg, spec)
    train_ds, test_ds = _test_split(ds, cfg, tcfg)

    t0 = time.perf_counter()
    model = surrogate.train(train_ds, tcfg)
    train_seconds = time.perf_counter() - t0
    model.metadata.update({
        "spec_hash": artifacts.spec_hash(spec),
        "config_hash": config_hash(cfg),
        "kpi_hash": postprocess.kpi_definition_hash(),
    })

    run_dir = Path(cfg["run_dir"])
    model_path = run_dir / "model.dvm"
    surrogate.save(model, model_path)

    eval_ds = test_ds if test_ds is not None else train_ds
    metrics = surrogate.evaluate_model(model, eval_ds)
    report = {
        "metrics": metrics,
        "evaluated_on": "test" if test_ds is not None else "train",
        "n_eval": len(eval_ds),
        "n_train": len(train_ds),
        "train_seconds": round(train_seconds, 3),
        "training": model.metadata,
        "config_hash": config_hash(cfg),
        "tool_version": artifacts.tool_version(),
    }
    artifacts.write_json(run_dir / "train_metrics.json", report)
    print(f"model -> {model_path}")
    print(f"flux R2={metrics['flux']['r2']:.5f} "
          f"scalars R2={metrics['scalars']['r2']:.5f} "
          f"power MAPE={metrics['kpi_max_power']['mape'] * 100:.2f}% "
          f"({report['evaluated_on']}, n={report['n_eval']})")
    return EXIT_OK


def _load_model(cfg: dict, spec: DesignSpec) -> surrogate.MetaModel:
    path = Path(cfg["run_dir"]) / "model.dvm"
    if not path.exists():
        raise ConfigError(f"model not found: {path} (run 'dvopt train' first)")
    model = surrogate.load(path)
    if model.metadata.get("spec_hash") != artifacts.spec_hash(spec):
        raise ConfigError(f"{path}: design-space hash mismatch with config")
    return model


def cmd_optimize(cfg: dict, approach: str) -> int:
    if approach not in APPROACHES:
        raise ConfigError(f"approach must be one of {APPROACHES}")
    spec = build_spec(cfg)
    ocfg = build_optimizer_config(
        cfg, budget_multiplier=2 if approach == "factor2" else 1)
    if approach == "classical":
        evaluator = reference_evaluator(spec)
    else:
        evaluator = surrogate_evaluator(spec, _load_model(cfg, spec))

    out_dir = Path(cfg["run_dir"]) / approach
    meta = {
        "approach": approach,
        "seed": ocfg.seed,
        "config_hash": config_hash(cfg),
        "spec_hash": artifacts.spec_hash(spec),
        "kpi_hash": postprocess.kpi_definition_hash(),
    }
    t0 = time.perf_counter()
    try:
        result = run(ocfg, spec, evaluator)
    except EvaluatorFailure as e:
        if e.archive is not None:
            partial = OptResult(
                population=[], front=e.archive.pareto_front(), archive=e.archive,
                history=e.history, evaluations=len(e.archive.members),
                eval_seconds=0.0, reference_point=None,
                generations=max((h.generation for h in e.history), default=0))
            artifacts.write_archive_csv(out_dir / "archive.csv", partial, spec)
        print(f"evaluator failure: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    total_seconds = time.perf_counter() - t0

    artifacts.write_archive_csv(out_dir / "archive.csv", result, spec)
    artifacts.write_history_csv(out_dir / "history.csv", result.history)
    artifacts.write_json(out_dir / "front.json",
                         artifacts.front_to_json(result, spec, meta))
    # Bundle-level integrity record covering the CSV artifacts next to it.
    artifacts.write_json(out_dir / "meta.json",
                         dict(meta, tool_version=artifacts.tool_version()))
    artifacts.write_json(out_dir / "timing.json", {
        "approach": approach,
        "evaluations": result.evaluations,
        "eval_seconds": result.eval_seconds,
        "seconds_per_evaluation": result.eval_seconds / result.evaluations,
        "generations": result.generations,
        "converged_early": result.converged_early,
        "total_seconds": total_seconds,
    })
    print(f"{approach}: {result.evaluations} evaluations, "
          f"{result.generations} generations, front {len(result.front)}, "
          f"{result.eval_seconds / result.evaluations * 1e3:.2f} ms/eval "
          f"-> {out_dir}")
    return EXIT_OK


def _load_front(cfg: dict, name_or_path: str) -> dict:
    p = Path(name_or_path)
    if not p.suffix == ".json":
        p = Path(cfg["run_dir"]) / name_or_path / "front.json"
    if not p.exists():
        raise ConfigError(f"front not found: {p}")
    return artifacts.read_json(p)


def cmd_compare(cfg: dict, run_a: str, run_b: str, ref_margin: float = 1.1) -> int:
    front_a = _load_front(cfg, run_a)
    front_b = _load_front(cfg, run_b)
    ha = front_a["meta"].get("kpi_hash")
    hb = front_b["meta"].get("kpi_hash")
    if ha != hb:
        raise ConfigError(f"KPI definition hash mismatch: {ha} vs {hb}")

    a = artifacts.front_kpi_array(front_a)
    b = artifacts.front_kpi_array(front_b)
    merged = np.vstack([a, b]) if len(a) or len(b) else np.empty((0, 2))
    if len(merged) == 0:
        raise ConfigError("both fronts are empty")
    reference = margin_reference_point(merged.max(axis=0), ref_margin)
    hv_a = hypervolume_2d(a, reference)
    hv_b = hypervolume_2d(b, reference)

    out_dir = Path(cfg["run_dir"]) / f"compare_{Path(run_a).stem}_{Path(run_b).stem}"
    lines = ["front_id,k1,k2"]
    for fid, pts in ((Path(run_a).stem, a), (Path(run_b).stem, b)):
        for k1, k2 in pts:
            lines.append(f"{fid},{k1!r},{k2!r}")
    artifacts.atomic_write_text(out_dir / "fronts.csv", "\n".join(lines) + "\n")

    report = {
        "front_a": run_a,
        "front_b": run_b,
        "reference_point": list(reference),
        "hypervolume_a": hv_a,
        "hypervolume_b": hv_b,
        "hv_ratio_b_over_a": hv_b / hv_a if hv_a > 0 else None,
        "coverage_a_over_b": coverage(a, b),
        "coverage_b_over_a": coverage(b, a),
        "front_size_a": len(a),
        "front_size_b": len(b),
        "kpi_hash": ha,
        "config_hash": config_hash(cfg),
        "tool_version": artifacts.tool_version(),
    }
    artifacts.write_json(out_dir / "report.json", report)
    ratio = report["hv_ratio_b_over_a"]
    print(f"HV({run_a})={hv_a:.6g} HV({run_b})={hv_b:.6g} "
          f"ratio={ratio if ratio is None else round(ratio, 4)} "
          f"C(a,b)={report['coverage_a_over_b']:.3f} "
          f"C(b,a)={report['coverage_b_over_a']:.3f} -> {out_dir}")
    return EXIT_OK


def cmd_predict_plot(cfg: dict, run_name: str) -> int:
    spec = build_spec(cfg)
    front = _load_front(cfg, run_name)
    if front["meta"].get("approach") not in ("hybrid", "factor2"):
        raise ConfigError("predict-plot needs a surrogate-evaluated bundle")
    if front["meta"].get("spec_hash") != artifacts.spec_hash(spec):
        raise ConfigError("front design-space hash mismatch with config")
    limits = spec.limits

    rows = []
    pred = []
    ref = []
    for entry in front["front"]:
        v = np.asarray(entry["params"], dtype=float)
        meas = machine_model.evaluate_measures(v)
        kpis, _ = postprocess.evaluate_kpis(v, meas, limits)
        k_pred = (-entry["kpis"]["max_power_w"], entry["kpis"]["cost"])
        pred.append(k_pred)
        ref.append(tuple(kpis))
        rows.append((entry["id"], k_pred[0], kpis[0], k_pred[1], kpis[1]))

    pred_a = np.array(pred).reshape(-1, 2)
    ref_a = np.array(ref).reshape(-1, 2)

    def _r2(x, y):
        ss_res = float(np.sum((x - y) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        if ss_tot == 0.0:
            return 1.0 if ss_res == 0.0 else float("-inf")
        return 1.0 - ss_res / ss_tot

    def _mape(x, y):
        mask = np.abs(y) > 1e-12
        return float(np.mean(np.abs(x[mask] - y[mask]) / np.abs(y[mask]))) if mask.any() else 0.0

    out_dir = Path(cfg["run_dir"]) / f"predict_plot_{run_name}"
    lines = ["id,k1_pred,k1_ref,k2_pred,k2_ref"]
    for r in rows:
        lines.append(f"{r[0]}," + ",".join(repr(float(x)) for x in r[1:]))
    artifacts.atomic_write_text(out_dir / "scatter.csv", "\n".join(lines) + "\n")
    summary = {
        "n_designs": len(rows),
        "max_power": {"r2": _r2(pred_a[:, 0], ref_a[:, 0]),
                      "mape": _mape(pred_a[:, 0], ref_a[:, 0])},
        "cost": {"r2": _r2(pred_a[:, 1], ref_a[:, 1]),
                 "mape": _mape(pred_a[:, 1], ref_a[:, 1])},
        "run": run_name,
        "kpi_hash": front["meta"].get("kpi_hash"),
        "config_hash": config_hash(cfg),
        "tool_version": artifacts.tool_version(),
    }
    artifacts.write_json(out_dir / "summary.json", summary)
    print(f"predict-plot: {len(rows)} designs, "
          f"max-power R2={summary['max_power']['r2']:.4f} "
          f"MAPE={summary['max_power']['mape'] * 100:.2f}% -> {out_dir}")
    return EXIT_OK


def cmd_benchmark(suite: str, out_dir: Path, population: int, generations: int,
                  seed: int) -> int:
    if suite not in benchmarks.SUITE_IDS:
        raise ConfigError(f"suite must be one of {benchmarks.SUITE_IDS}")
    prob = benchmarks.get_problem(suite)
    # Benchmarks validate the optimizer at a fixed budget, so the
    # hypervolume-stagnation stop is disabled.
    ocfg = OptimizerConfig(seed=seed, population=population,
                           max_generations=generations, hv_tol=0.0)
    t0 = time.perf_counter()
    result = run(ocfg, prob.spec, prob.evaluator, use_geometry_gate=False)
    seconds = time.perf_counter() - t0

    pts = result.front_points()
    hv = hypervolume_2d(pts, (1.0, 1.0))
    gd = benchmarks.generational_distance(pts, prob.true_front)
    report = {
        "suite": suite,
        "population": population,
        "generations": result.generations,
        "evaluations": result.evaluations,
        "hypervolume": hv,
        "true_hypervolume": prob.true_hypervolume,
        "hv_fraction_of_true": hv / prob.true_hypervolume,
        "generational_distance": gd,
        "front_size": len(pts),
        "seed": seed,
        "seconds": round(seconds, 3),
        "tool_version": artifacts.tool_version(),
    }
    artifacts.write_json(out_dir / f"{suite}.json", report)
    print(f"{suite}: hv={hv:.4f} (true {prob.true_hypervolume:.4f}) "
          f"gd_mean={gd['mean']:.5f} front={len(pts)} {seconds:.1f}s")
    return EXIT_OK


# --- entry point ---------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dvopt",
        description="Surrogate-assisted multi-objective machine design optimization")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("-c", "--config", required=True, help="campaign YAML")

    with_config(sub.add_parser("dataset", help="sample designs and evaluate measures"))
    with_config(sub.add_parser("train", help="train the meta-model on the dataset"))

    p = sub.add_parser("optimize", help="run one optimization campaign")
    with_config(p)
    p.add_argument("-a", "--approach", required=True, choices=APPROACHES)

    p = sub.add_parser("compare", help="compare two final fronts")
    with_config(p)
    p.add_argument("--a", dest="run_a", required=True,
                   help="approach name under run_dir, or a front.json path")
    p.add_argument("--b", dest="run_b", required=True)
    p.add_argument("--ref-margin", type=float, default=1.1)

    p = sub.add_parser("predict-plot",
                       help="re-evaluate a surrogate front with the reference model")
    with_config(p)
    p.add_argument("--run", default="hybrid",
                   help="approach name under run_dir (default: hybrid)")

    p = sub.add_parser("benchmark", help="validate the optimizer on analytic problems")
    p.add_argument("--suite", required=True, choices=benchmarks.SUITE_IDS)
    p.add_argument("--out", default="benchmarks", help="output directory")
    p.add_argument("--population", type=int, default=100)
    p.add_argument("--generations", type=int, default=250)
    p.add_argument("--seed", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "benchmark":
            return cmd_benchmark(args.suite, Path(args.out), args.population,
                                 args.generations, args.seed)
        cfg = load_config(args.config)
        if args.command == "dataset":
            return cmd_dataset(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "optimize":
            return cmd_optimize(cfg, args.approach)
        if args.command == "compare":
            return cmd_compare(cfg, args.run_a, args.run_b, args.ref_margin)
        if args.command == "predict-plot":
            return cmd_predict_plot(cfg, args.run)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FeasibilityExhausted as e:
        print(f"feasibility exhausted: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except (surrogate.ModelFormatError, surrogate.TooFewSamples) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # pragma: no cover - defensive
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
