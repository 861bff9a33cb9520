"""``demandml`` command-line interface.

Exit status is 0 on success, 1 when inputs fail validation and 2 on usage
errors (unknown flags, missing required options).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import evaluation as ev
from .config import RunManifest, config_hash, learner_params, load_config
from .domain import FILES, CohortError, load_cohort, save_cohort
from .features import SPACES, assemble_space
from .learners import SPACE_FREE, FitError, ModelSpec, fit_model, parse_spec
from .learners.io import load_model, save_model
from .simulate import ConfigError, SimConfig, simulate_cohort


class UsageError(Exception):
    pass


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _split_models(text: str) -> list[str]:
    # split on commas outside parentheses
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    out.append(cur)
    return [t.strip() for t in out if t.strip()]


def expand_models(models: str, features: str | None) -> list[ModelSpec]:
    """Model list with bare kinds crossed with ``--features``.

    ``--models bdm,rf --features W,WO`` gives bdm, rf(W), rf(WO); explicit
    specs such as ``rf(WOA)`` pass through unchanged.
    """
    spaces = _csv_list(features) if features else []
    for s in spaces:
        if s not in SPACES:
            raise UsageError(f"unknown feature space {s!r}; choose from {sorted(SPACES)}")
    specs: list[ModelSpec] = []
    for item in _split_models(models):
        if "(" in item or item in SPACE_FREE:
            specs.append(parse_spec(item))
        else:
            if not spaces:
                raise UsageError(f"model {item!r} needs --features")
            specs.extend(parse_spec(f"{item}({s})") for s in spaces)
    seen, out = set(), []
    for s in specs:
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load(args, manifest: RunManifest):
    c = load_cohort(args.data)
    manifest.add_inputs_dir(args.data, FILES)
    return c


def _eval_section(cfg: dict) -> dict:
    return dict(cfg.get("evaluation", {}))


def _split_spec(args, cfg: dict) -> ev.SplitSpec:
    e = _eval_section(cfg)
    protocol = args.protocol or e.get("protocol", "within_between")
    repeats = args.repeats if args.repeats is not None else e.get("n_repeats", 50)
    holdout = args.holdout if args.holdout is not None else e.get("holdout")
    return ev.SplitSpec(protocol, holdout, repeats, args.seed)


def _metrics(args, cfg):
    text = args.metrics or ",".join(_eval_section(cfg).get("metrics", ev.METRICS))
    return tuple(_csv_list(text))


# -- subcommands ------------------------------------------------------------


def cmd_simulate(args, cfg, manifest):
    sim = dict(cfg.get("simulation", {}))
    sim["seed"] = args.seed
    for key in ("n_subjects", "wtp_bias"):
        val = getattr(args, key)
        if val is not None:
            sim[key] = val
    c, truth = simulate_cohort(SimConfig.from_dict(sim))
    out = _out_dir(args.out)
    for p in save_cohort(c, out):
        manifest.add_artifact(p)
    tp = out / "truth.csv"
    truth.to_frame().to_csv(tp, index=False, lineterminator="\n")
    manifest.add_artifact(tp)
    print(f"simulated {c.n_subjects} subjects x {c.n_items} items -> {out}")


def cmd_featurize(args, cfg, manifest):
    c = _load(args, manifest)
    out = _out_dir(args.out)
    for space in _csv_list(args.features):
        if space not in SPACES:
            raise UsageError(f"unknown feature space {space!r}")
        fm = assemble_space(c, space, args.drop_item_fixed_effects)
        path = out / f"features_{space}.csv"
        fm.frame().to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
        manifest.add_artifact(path)
        print(f"{space}: {fm.n_rows} rows x {len(fm.column_names)} columns -> {path}")


def _model_filename(spec: ModelSpec) -> str:
    return f"model_{spec.kind}_{spec.space}.json" if spec.space else f"model_{spec.kind}.json"


def cmd_fit(args, cfg, manifest):
    c = _load(args, manifest)
    out = _out_dir(args.out)
    params = learner_params(cfg)
    for spec in expand_models(args.model, args.features):
        fm = assemble_space(c, spec.space or "C", args.drop_item_fixed_effects)
        m = fit_model(spec, fm, seed=args.seed, params=params, n_jobs=args.threads)
        path = out / _model_filename(spec)
        save_model(m, path)
        manifest.add_artifact(path)
        print(f"{spec.name}: {json.dumps(m.info, sort_keys=True)} -> {path}")


def _write_report(rep: ev.EvalReport, out: Path, manifest: RunManifest):
    path = out / "report.csv"
    rep.to_csv(path)
    manifest.add_artifact(path)
    if rep.errors:
        epath = out / "fit_errors.txt"
        epath.write_text("\n".join(rep.errors) + "\n")
        manifest.add_artifact(epath)
        print(f"{len(rep.errors)} fit failures recorded in {epath}", file=sys.stderr)
    print(rep.summary().to_string(index=False))


def _surplus_plotdata(c, specs, split, params, out: Path, manifest: RunManifest):
    """Surplus-binned MSE on the first repeat's test rows."""
    rng_split, _, learner_seed = ev.repeat_streams(split.seed, 0)
    train, test = ev.make_split(c, split, rng_split)
    preds = {}
    fm0 = None
    for spec in specs:
        fm = assemble_space(c, spec.space or "C", split.drop_item_fixed_effects)
        fm0 = fm0 or fm
        try:
            preds[spec.name] = fit_model(spec, fm, train, seed=learner_seed, params=params).predict(fm, test)
        except (FitError, ValueError):
            continue
    if preds:
        df = ev.surplus_binned_mse(fm0, test, preds)
        pd_dir = _out_dir(out / "plotdata")
        path = pd_dir / "surplus_bins.csv"
        df.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
        manifest.add_artifact(path)


def cmd_evaluate(args, cfg, manifest):
    c = _load(args, manifest)
    out = _out_dir(args.out)
    specs = expand_models(args.models, args.features)
    split = _split_spec(args, cfg)
    params = learner_params(cfg)
    rep = ev.evaluate(c, specs, split, _metrics(args, cfg), params, n_jobs=args.threads)
    _write_report(rep, out, manifest)
    _surplus_plotdata(c, specs, split, params, out, manifest)


def _parse_sizes(text: str) -> list[int]:
    if ":" in text:
        a, b, step = (int(x) for x in text.split(":"))
        return list(range(a, b + 1, step))
    return [int(x) for x in _csv_list(text)]


def cmd_sweep(args, cfg, manifest):
    c = _load(args, manifest)
    out = _out_dir(args.out)
    specs = expand_models(args.models, args.features)
    split = _split_spec(args, cfg)
    sizes = _parse_sizes(args.sizes) if args.sizes else _eval_section(cfg).get("sizes", list(ev.PAPER_SIZES))
    rep = ev.sample_size_sweep(c, specs, split, sizes, _metrics(args, cfg), learner_params(cfg), args.threads)
    _write_report(rep, out, manifest)
    df = rep.summary()
    df["model_name"] = [f"{m}({s})" if s else m for m, s in zip(df["model"], df["space"])]
    curve = df[["model_name", "metric", "size", "mean", "stderr"]].rename(columns={"model_name": "model"})
    pd_dir = _out_dir(out / "plotdata")
    path = pd_dir / "sweep.csv"
    curve.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    manifest.add_artifact(path)


def _model_arg(text: str, c, args, params, manifest):
    p = Path(text)
    if p.suffix == ".json" and p.exists():
        manifest.add_input(p)
        return load_model(p)
    spec = parse_spec(text)
    fm = assemble_space(c, spec.space or "C")
    return fit_model(spec, fm, seed=args.seed, params=params, n_jobs=args.threads)


def cmd_price(args, cfg, manifest):
    from .pricing import revenue_comparison

    c = _load(args, manifest)
    out = _out_dir(args.out)
    params = learner_params(cfg)
    pm = _model_arg(args.pricing_model, c, args, params, manifest)
    tm = pm if args.truth_model == args.pricing_model else _model_arg(args.truth_model, c, args, params, manifest)
    df, summary = revenue_comparison(pm, tm, c)
    summary["pricing_model"] = pm.name
    summary["truth_model"] = tm.name
    path = out / "pricing.csv"
    df.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    manifest.add_artifact(path)
    spath = out / "summary.json"
    spath.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest.add_artifact(spath)
    for k in ("mean_revenue_wtp", "mean_revenue_star", "gain_pct", "share_positive_gain", "corr_p_star_wtp",
              "mean_delta", "mean_abs_delta"):
        print(f"{k:>22}: {summary[k]:.4f}")


def cmd_diagnose(args, cfg, manifest):
    c = _load(args, manifest)
    out = _out_dir(args.out)
    wtp, buy = ev.demand_trend_diagnostics(c)
    res = {
        "wtp_trend": {"coef": wtp.coef, "stderr": wtp.stderr, "p_value": wtp.p_value},
        "buy_trend": {"coef": buy.coef, "stderr": buy.stderr, "p_value": buy.p_value},
    }
    path = out / "diagnostics.json"
    path.write_text(json.dumps(res, indent=2, sort_keys=True) + "\n")
    manifest.add_artifact(path)
    print(f"WTP trend per trial: {wtp.coef:+.5f} (p={wtp.p_value:.3f})")
    print(f"Buy logit trend per trial: {buy.coef:+.5f} (p={buy.p_value:.3f})")


def format_cell(mean: float, se: float) -> str:
    """``0.08904, 0.00121`` -> ``"0.0890 (0.0012)"``."""
    if not np.isfinite(mean):
        return "NA"
    if not np.isfinite(se):
        return f"{mean:.4f}"
    return f"{mean:.4f} ({se:.4f})"


def merge_reports(frames: list[pd.DataFrame], metric: str = "mse") -> pd.DataFrame:
    """One row per model, one column per protocol, cells ``mean (stderr)``.

    Each (model, space, protocol) contributes its largest training size.
    Two inputs that disagree on the same key are an error.
    """
    df = pd.concat(frames, ignore_index=True)
    df["space"] = df["space"].fillna("")
    key = ["model", "space", "protocol", "size", "metric"]
    dup = df[df.duplicated(key, keep=False)]
    if len(dup):
        for _, g in dup.groupby(key):
            if len(g[["mean", "stderr", "n_repeats"]].drop_duplicates()) > 1:
                raise ValueError(f"conflicting duplicate report rows for {tuple(g.iloc[0][key])}")
        df = df.drop_duplicates(key)
    df = df[df["metric"] == metric]
    df = df.sort_values("size").groupby(["model", "space", "protocol"], sort=False).tail(1)
    df = df.assign(label=[f"{m}({s})" if s else m for m, s in zip(df["model"], df["space"])])
    df = df.assign(cell=[format_cell(m, s) for m, s in zip(df["mean"], df["stderr"])])
    protocols = [p for p in ev.PROTOCOLS if p in set(df["protocol"])]
    order = list(dict.fromkeys(df.sort_index()["label"]))
    table = df.pivot(index="label", columns="protocol", values="cell").reindex(order)[protocols]
    table.index.name = "model"
    return table.reset_index().fillna("")


def cmd_report(args, cfg, manifest):
    frames = []
    for p in args.inputs:
        manifest.add_input(p)
        frames.append(pd.read_csv(p, keep_default_na=False, na_values=[""]))
    out = _out_dir(args.out)
    metrics = _csv_list(args.metrics) if args.metrics else ["mse"]
    for metric in metrics:
        table = merge_reports(frames, metric)
        path = out / f"summary_{metric}.csv"
        table.to_csv(path, index=False, lineterminator="\n")
        manifest.add_artifact(path)
        print(table.to_string(index=False))


def cmd_acceptance(args, cfg, manifest):
    from .acceptance import run_acceptance

    ok = run_acceptance(seed=args.seed, quick=args.quick, n_jobs=args.threads, only=args.only)
    return 0 if ok else 1


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (schema_version 1)")
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", required=True, help="cohort directory")

    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", required=True, help="output directory")

    models = argparse.ArgumentParser(add_help=False)
    models.add_argument("--models", required=True, help="comma list, e.g. bdm,probbuy,logit(W),rf")
    models.add_argument("--features", help="spaces crossed with bare model kinds, e.g. W,WO")
    models.add_argument("--protocol", choices=ev.PROTOCOLS)
    models.add_argument("--repeats", type=int, help="number of repeats (default 50)")
    models.add_argument("--holdout", type=int, help="test rows, subjects or items (protocol default)")
    models.add_argument("--metrics", help="comma list of mse,deviance,auc")

    p = argparse.ArgumentParser(prog="demandml", description="Individual demand prediction from elicitation data.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common, out], help="draw a synthetic cohort")
    s.add_argument("--n-subjects", dest="n_subjects", type=int)
    s.add_argument("--wtp-bias", dest="wtp_bias", type=float, help="dollars")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("featurize", parents=[common, data, out], help="write feature matrices")
    s.add_argument("--features", required=True, help="comma list of spaces")
    s.add_argument("--drop-item-fixed-effects", action="store_true")
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("fit", parents=[common, data, out], help="fit models on all rows and save them")
    s.add_argument("--model", required=True, help="comma list of kinds or specs")
    s.add_argument("--features", help="spaces for kinds that need one")
    s.add_argument("--drop-item-fixed-effects", action="store_true")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("evaluate", parents=[common, data, out, models], help="repeated holdout evaluation")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", parents=[common, data, out, models], help="training-size sweep")
    s.add_argument("--sizes", help="comma list or start:stop:step (default 600:3960:200)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("price", parents=[common, data, out], help="revenue-maximizing prices")
    s.add_argument("--pricing-model", default="rf(WO)", help="model file or spec (default rf(WO))")
    s.add_argument("--truth-model", default="rf(WOA)", help="model file or spec (default rf(WOA))")
    s.set_defaults(func=cmd_price)

    s = sub.add_parser("diagnose", parents=[common, data, out], help="trial-order trend diagnostics")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("report", parents=[common, out], help="merge report.csv files")
    s.add_argument("inputs", nargs="+", help="report.csv files")
    s.add_argument("--metrics", help="metrics to tabulate (default mse)")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("acceptance", parents=[common], help="run the acceptance checks")
    s.add_argument("--quick", action="store_true", help="fewer repeats and seeds")
    s.add_argument("--only", help="comma list of criterion numbers")
    s.set_defaults(func=cmd_acceptance)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        manifest = RunManifest(args.command, args.seed, config_hash(cfg))
        if args.config:
            manifest.add_input(args.config)
        rc = args.func(args, cfg, manifest)
        out = getattr(args, "out", None)
        if out is not None:
            manifest.write(out)
        return rc or 0
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"demandml: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, CohortError, FitError, ValueError, FileNotFoundError) as exc:
        print(f"demandml: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
