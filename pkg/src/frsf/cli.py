"""Command-line driver: simulate | fit | eval | vimp | predict.

All commands are deterministic given their flags: reruns produce
byte-identical outputs. A JSON config file can supply defaults; explicit
flags override it.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import load_dataset, observations_to_csv, subjects_to_csv
from .exceptions import FRSFError, SchemaError
from .metrics import EvaluationReport
from .pipeline import FunctionalSurvivalForest
from .simulate import SimConfig, gen_dataset


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _load_dataset_args(args) -> "Dataset":
    for name in ("obs", "subjects"):
        p = Path(getattr(args, name))
        if not p.exists():
            raise FileNotFoundError(f"no such file: {p}")
    domain = tuple(args.domain) if args.domain else None
    return load_dataset(
        Path(args.obs).read_text(encoding="utf-8"),
        Path(args.subjects).read_text(encoding="utf-8"),
        domain=domain,
    )


def _pipeline_kwargs(args, curve_mode=None, grid_step=None) -> dict:
    return dict(
        grid_step=args.h if grid_step is None else grid_step,
        fve=args.fve,
        score_method=args.score_method,
        curve_mode=args.curve_mode if curve_mode is None else curve_mode,
        basis_order=args.order,
        basis_k_max=args.kmax,
        bw_mean=args.bw_mean,
        bw_cov=(args.bw_cov, args.bw_cov) if args.bw_cov is not None else None,
        n_trees=args.ntrees,
        mtry=args.mtry,
        min_node_events=args.min_node_events,
        min_node_size=args.min_node_size,
        max_depth=args.max_depth,
        n_split_candidates=args.nsplit,
        seed=args.seed,
    )


def cmd_simulate(args) -> int:
    lambdas = tuple(float(x) for x in args.lambdas.split(","))
    gamma = tuple(float(x) for x in args.gamma.split(",")) if args.gamma else None
    cfg = SimConfig(
        n_subjects=args.n,
        domain=tuple(args.domain or (0.0, 1.0)),
        mean_family=args.mean,
        mean_level=args.mean_level,
        eigen_family=args.eigen,
        lambdas=lambdas,
        sigma2=args.sigma2,
        scheme=args.scheme,
        dense_step=args.dense_step,
        sparse_j_min=args.sparse_j_min,
        sparse_j_max=args.sparse_j_max,
        lambda0=args.lambda0,
        gamma=gamma,
        c_max=args.cmax,
        n_noise_covariates=args.noise_covariates,
        seed=args.seed,
    )
    dataset, truth = gen_dataset(cfg)
    out = Path(args.out_dir)
    _write(out / "observations.csv", observations_to_csv(dataset))
    _write(out / "subjects.csv", subjects_to_csv(dataset))
    _write(out / "ground_truth.csv", truth.to_csv())
    print(
        f"simulated {dataset.n} subjects on [{dataset.domain[0]}, {dataset.domain[1]}], "
        f"event rate {np.mean(dataset.event_indicators()):.3f} -> {out}"
    )
    return 0


def cmd_fit(args) -> int:
    dataset = _load_dataset_args(args)
    est = FunctionalSurvivalForest(**_pipeline_kwargs(args))
    est.fit(dataset)
    _write(Path(args.out), _dump_json(est.to_dict()))
    ks = [c.k_selected for c in est.curves_ or [] if c.kind == "spline"]
    print(
        f"fitted {dataset.n} subjects ({int(np.sum(dataset.event_indicators()))} events): "
        f"p={est.model_.p} (FVE {est.model_.fve_achieved:.4f}), sigma2={est.model_.sigma2:.4g}, "
        f"kernel={est.model_.kernel}, bw_mean={est.model_.bw_mean:.4g}, "
        f"bw_cov={est.model_.bw_cov[0]:.4g}"
        + (f", spline K range {min(ks)}..{max(ks)}" if ks else "")
        + f" -> {args.out}"
    )
    return 0


def _parse_arms(arm_list: str, default_h: float) -> list[tuple[str, str, float]]:
    """'std,cfd:0.5,cfd:0.2' -> [(label, curve_mode, grid_step), ...]."""
    arms = []
    for token in arm_list.split(","):
        token = token.strip()
        if not token:
            continue
        if ":" in token:
            mode, h = token.split(":", 1)
            step = float(h)
        else:
            mode, step = token, default_h
        if mode not in ("std", "cfd"):
            raise ValueError(f"unknown arm {token!r}; use std or cfd[:h]")
        label = f"{mode}" if mode == "std" else f"{mode}_h{step:g}"
        arms.append((label, mode, step))
    if not arms:
        raise ValueError("no evaluation arms given")
    return arms


def _stratified_split(events: np.ndarray, frac: float, rng) -> np.ndarray:
    train = []
    for stratum in (0, 1):
        rows = np.flatnonzero(events == stratum)
        k = int(round(frac * rows.size))
        k = min(max(k, 0), rows.size)
        train.extend(rng.permutation(rows)[:k].tolist())
    return np.sort(np.asarray(train, dtype=int))


def cmd_eval(args) -> int:
    if not 0 < args.train_frac < 1:
        raise ValueError(f"--train-frac must be in (0,1), got {args.train_frac}")
    dataset = _load_dataset_args(args)
    arms = _parse_arms(args.arms, args.h)
    events = np.asarray(dataset.event_indicators())
    report: dict = {
        "train_frac": args.train_frac,
        "repeats": args.repeats,
        "arms": {},
        "seed": args.seed,
    }
    brier_rows = ["arm,repeat,t,bs"]
    curve_rows = ["arm,repeat,n_trees,oob_error"]
    metric_rows = ["arm,repeat,metric,value"]
    for label, mode, step in arms:
        per_rep = []
        for rep in range(args.repeats):
            rng = np.random.default_rng((args.seed, int(round(args.train_frac * 1e6)), rep))
            train_rows = _stratified_split(events, args.train_frac, rng)
            sub = type(dataset)(
                subjects=tuple(dataset.subjects[i] for i in train_rows),
                domain=dataset.domain,
                covariate_names=dataset.covariate_names,
            )
            est = FunctionalSurvivalForest(**_pipeline_kwargs(args, curve_mode=mode, grid_step=step))
            est.fit(sub)
            rep_report = est.oob_report(config={"arm": label, "repeat": rep})
            per_rep.append(
                {
                    "repeat": rep,
                    "n_train": int(train_rows.size),
                    "n_events_train": int(events[train_rows].sum()),
                    "oob_cindex": rep_report.oob_cindex,
                    "rpe": rep_report.rpe,
                    "crps": rep_report.crps,
                    "resolved_config": rep_report.config,
                }
            )
            for t, b in rep_report.brier_curve:
                brier_rows.append(f"{label},{rep},{t!r},{b!r}")
            for ntree, err in est.oob_error_curve():
                curve_rows.append(f"{label},{rep},{ntree},{err!r}")
            for key, value in rep_report.metric_rows():
                metric_rows.append(f"{label},{rep},{key},{value!r}")
        metrics = {}
        for key in ("oob_cindex", "rpe", "crps"):
            vals = np.asarray([r[key] for r in per_rep], dtype=float)
            metrics[key] = {"mean": float(vals.mean()), "sd": float(vals.std(ddof=0))}
        report["arms"][label] = {"repeats": per_rep, "summary": metrics}
    report["config"] = {
        "h": args.h,
        "fve": args.fve,
        "score_method": args.score_method,
        "ntrees": args.ntrees,
        "mtry": args.mtry,
        "min_node_events": args.min_node_events,
        "min_node_size": args.min_node_size,
        "nsplit": args.nsplit,
        "order": args.order,
        "kmax": args.kmax,
        "bw_mean": args.bw_mean,
        "bw_cov": args.bw_cov,
    }
    out = Path(args.out_dir)
    _write(out / "report.json", _dump_json(report))
    _write(out / "brier.csv", "\n".join(brier_rows) + "\n")
    _write(out / "error_curve.csv", "\n".join(curve_rows) + "\n")
    _write(out / "metrics.csv", "\n".join(metric_rows) + "\n")
    for label in report["arms"]:
        s = report["arms"][label]["summary"]
        print(
            f"{label}: CRPS {s['crps']['mean']:.6f} (sd {s['crps']['sd']:.6f}), "
            f"RPE {s['rpe']['mean']:.6f} (sd {s['rpe']['sd']:.6f})"
        )
    return 0


def cmd_vimp(args) -> int:
    path = Path(args.model)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    est = FunctionalSurvivalForest.from_dict(json.loads(path.read_text(encoding="utf-8")))
    table = est.variable_importance(n_repeats=args.repeats, seed=args.seed)
    _write(Path(args.out), table.to_csv())
    for name, imp, rel in table.rows:
        print(f"{name}\t{imp:+.4f}\t{rel:+.4f}")
    return 0


def cmd_predict(args) -> int:
    path = Path(args.model)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    est = FunctionalSurvivalForest.from_dict(json.loads(path.read_text(encoding="utf-8")))
    for name in ("obs", "subjects"):
        p = Path(getattr(args, name))
        if not p.exists():
            raise FileNotFoundError(f"no such file: {p}")
    from .data import parse_observations, parse_subjects

    obs_map = parse_observations(Path(args.obs).read_text(encoding="utf-8"))
    subj_map, cov_names = parse_subjects(Path(args.subjects).read_text(encoding="utf-8"))
    rows = ["subject_id,mortality,t,survival"]
    if subj_map:
        from .data import assemble_dataset

        dataset = assemble_dataset(obs_map, subj_map, covariate_names=cov_names)
        mort = est.predict(dataset)
        survs = est.predict_survival_function(dataset)
        ev = est.forest_.event_times
        for sid, m, fn in zip(dataset.subject_ids, mort, survs):
            vals = fn(ev)
            for t, s in zip(ev, vals):
                rows.append(f"{sid},{float(m)!r},{float(t)!r},{float(s)!r}")
        n = dataset.n
    else:
        if set(cov_names) != set(est.covariate_names_):
            raise SchemaError(
                f"covariates {sorted(cov_names)} do not match training covariates "
                f"{sorted(est.covariate_names_)}"
            )
        n = 0
    _write(Path(args.out), "\n".join(rows) + "\n")
    print(f"predicted {n} subjects -> {args.out}")
    return 0


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--obs", required=True, help="observations CSV (subject_id,time,value)")
    p.add_argument("--subjects", required=True, help="subjects CSV (subject_id,event_time,event,covariates...)")
    p.add_argument("--domain", type=float, nargs=2, default=None, help="follow-up window a b")
    p.add_argument("--h", type=float, default=0.5, help="grid step")
    p.add_argument("--fve", type=float, default=0.95, help="explained-variance threshold")
    p.add_argument("--score-method", choices=("conditional", "riemann"), default="conditional")
    p.add_argument("--curve-mode", choices=("cfd", "std"), default="cfd")
    p.add_argument("--order", type=int, default=4, help="spline order")
    p.add_argument("--kmax", type=int, default=15, help="max spline dimension")
    p.add_argument("--bw-mean", type=float, default=None, help="mean bandwidth (default: GCV)")
    p.add_argument("--bw-cov", type=float, default=None, help="covariance bandwidth (default: GCV)")
    p.add_argument("--ntrees", type=int, default=100)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--min-node-events", type=int, default=1)
    p.add_argument("--min-node-size", type=int, default=6)
    p.add_argument("--nsplit", type=int, default=10)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker cap (results are schedule-independent)")


def build_parser() -> tuple[argparse.ArgumentParser, list[argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="frsf",
        description="Survival forests on censored functional data: reconstruct truncated "
        "trajectories, extract principal-component scores, grow log-rank tree ensembles.",
    )
    parser.add_argument("--config", default=None, help="JSON file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = []

    p = sub.add_parser("simulate", help="generate synthetic data with known ground truth")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--domain", type=float, nargs=2, default=None)
    p.add_argument("--mean", choices=("constant", "sine", "polynomial"), default="sine")
    p.add_argument("--mean-level", type=float, default=2.0)
    p.add_argument("--eigen", choices=("legendre", "fourier"), default="fourier")
    p.add_argument("--lambdas", default="2.0,1.0", help="comma-separated eigenvalues")
    p.add_argument("--sigma2", type=float, default=0.1)
    p.add_argument("--scheme", choices=("dense", "sparse"), default="dense")
    p.add_argument("--dense-step", type=float, default=0.05)
    p.add_argument("--sparse-j-min", type=int, default=2)
    p.add_argument("--sparse-j-max", type=int, default=5)
    p.add_argument("--lambda0", type=float, default=1.0)
    p.add_argument("--gamma", default=None, help="comma-separated hazard loadings")
    p.add_argument("--cmax", type=float, default=None)
    p.add_argument("--noise-covariates", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)
    subparsers.append(p)

    p = sub.add_parser("fit", help="fit the full pipeline and persist the model")
    _add_fit_flags(p)
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_fit)
    subparsers.append(p)

    p = sub.add_parser("eval", help="train-fraction sweep with out-of-bag scores per arm")
    _add_fit_flags(p)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--arms", default="std,cfd", help="e.g. std,cfd:0.5,cfd:0.2")
    p.add_argument("--out-dir", default="eval_out")
    p.set_defaults(func=cmd_eval)
    subparsers.append(p)

    p = sub.add_parser("vimp", help="permutation importance table from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="vimp.csv")
    p.set_defaults(func=cmd_vimp)
    subparsers.append(p)

    p = sub.add_parser("predict", help="score new subjects through a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--subjects", required=True)
    p.add_argument("--out", default="predictions.csv")
    p.set_defaults(func=cmd_predict)
    subparsers.append(p)
    return parser, subparsers


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    args, _ = parser.parse_known_args(argv)
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.exists():
            print(f"error: config file not found: {cfg_path}", file=sys.stderr)
            return 2
        defaults = json.loads(cfg_path.read_text(encoding="utf-8"))
        known = {a.dest for sp in subparsers for a in sp._actions}
        unknown = set(defaults) - known
        if unknown:
            print(f"error: unknown config keys: {sorted(unknown)}", file=sys.stderr)
            return 2
        # top-level set_defaults does not reach subparser namespaces
        for sp in subparsers:
            sp.set_defaults(**{k: v for k, v in defaults.items() if any(a.dest == k for a in sp._actions)})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FRSFError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
