"""Command-line pipeline: prepare -> train-ctr -> fit-landscape -> solve-dp / train-nn -> evaluate -> report.

Every subcommand accepts ``--config FILE`` with flat ``key=value`` lines whose
keys match the long flag names (dashes or underscores). Flags given on the
command line win over the config file.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import approx, ctr as ctr_mod, dp, evaluator, landscape as land_mod, logdata
from .strategies import VARIANTS, StrategyParams

logger = logging.getLogger("rlbid")

CTR_FILE = "ctr.model"
STATS_FILE = "stats.txt"
LANDSCAPE_FILE = "landscape.txt"
VALUE_FILE = "value.bin"
DIFF_FILE = "diff.bin"
NN_FILE = "nn.txt"
SUBGRID_FILE = "subgrid_value.bin"
SCHEMA_FILE = "schema.conf"


class CliError(Exception):
    pass


def _need_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"input file not found: {p}")
    return p


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _floats(s: str) -> list[float]:
    out = []
    for tok in s.split(","):
        tok = tok.strip()
        if "/" in tok:
            num, den = tok.split("/")
            out.append(float(num) / float(den))
        elif tok:
            out.append(float(tok))
    return out


def _schema(args) -> logdata.SchemaConfig:
    dim = args.dim
    if dim is None and args.model_dir and (Path(args.model_dir) / SCHEMA_FILE).is_file():
        with open(Path(args.model_dir) / SCHEMA_FILE, encoding="utf-8") as fh:
            dim = int(logdata.read_kv(fh)["dim"])
    return logdata.SchemaConfig(dim=dim, delta_max=None)


def _read(path, schema=None) -> list[logdata.LogRecord]:
    res = logdata.read_log(_need_file(path), schema)
    if res.skipped:
        logger.warning("%s: skipped %d malformed lines", path, res.skipped)
    if not res.records:
        raise CliError(f"{path}: no usable records")
    return res.records


def _load_bundle(args, train_records=None) -> evaluator.ModelBundle:
    mdir = Path(args.model_dir)
    ctr = ctr_mod.CtrModel.load(_need_file(mdir / CTR_FILE))
    land = land_mod.LandscapeModel.load(_need_file(mdir / LANDSCAPE_FILE))
    stats = logdata.CampaignStats.from_text(_need_file(mdir / STATS_FILE).read_text(encoding="utf-8"))
    train = evaluator.ReplayLog.from_records(train_records, ctr) if train_records else None
    nn = approx.NnModel.load(mdir / NN_FILE) if (mdir / NN_FILE).is_file() else None
    sub = dp.ValueTable.load(mdir / SUBGRID_FILE) if (mdir / SUBGRID_FILE).is_file() else None
    return evaluator.ModelBundle(ctr, land, stats, train, nn, sub, memory_cap=int(args.memory_cap_mb * 2**20))


def cmd_prepare(args) -> None:
    out = _out_dir(args.out_dir)
    dim = 0
    for name, src in (("train", args.train), ("test", args.test)):
        if not src:
            continue
        res = logdata.read_log(_need_file(src), logdata.SchemaConfig(dim=args.dim, delta_max=args.clamp_price))
        logdata.write_log(res.records, out / f"{name}.txt")
        top = max((r.features[-1] for r in res.records if r.features), default=-1)
        dim = max(dim, top + 1)
        print(f"{name}: {len(res.records)} records, {res.skipped} skipped -> {out / (name + '.txt')}")
    if args.dim is not None:
        dim = args.dim
    (out / SCHEMA_FILE).write_text(f"dim={dim}\n", encoding="utf-8")


def cmd_train_ctr(args) -> None:
    mdir = _out_dir(args.model_dir)
    schema = _schema(args)
    train = _read(args.train, schema)
    dim = schema.dim or (max((r.features[-1] for r in train if r.features), default=0) + 1)
    hyper = ctr_mod.CtrHyper(
        learning_rate=args.lr, l2=args.l2, epochs=args.epochs, optimizer=args.optimizer,
        neg_sample_rate=args.neg_sample_rate, shuffle=args.shuffle, seed=args.seed,
    )
    model = ctr_mod.train_ctr(train, dim, hyper)
    model.save(mdir / CTR_FILE)
    stats = logdata.campaign_stats(train, model)
    (mdir / STATS_FILE).write_text(stats.to_text(), encoding="utf-8")
    if not (mdir / SCHEMA_FILE).is_file():
        (mdir / SCHEMA_FILE).write_text(f"dim={dim}\n", encoding="utf-8")
    parts = [f"train_auc={ctr_mod.auc(model, train):.6f}"]
    if args.test:
        parts.append(f"test_auc={ctr_mod.auc(model, _read(args.test, schema)):.6f}")
    parts.append(f"theta_avg={stats.theta_avg:.6g}")
    line = " ".join(parts)
    (mdir / "ctr_metrics.txt").write_text(line + "\n", encoding="utf-8")
    print(line)


def cmd_fit_landscape(args) -> None:
    mdir = _out_dir(args.model_dir)
    train = _read(args.train)
    model = land_mod.fit_landscape(train, args.delta_max, args.laplace)
    model.save(mdir / LANDSCAPE_FILE)
    print(f"landscape: delta_max={model.delta_max} mean_price={np.dot(model.pdf, np.arange(model.pdf.size)):.3f}")


def _budget(args, stats, T) -> int:
    if args.B is not None:
        return args.B
    return evaluator.episode_budget(stats.cpm_train, T, args.c0)


def cmd_solve(args) -> None:
    mdir = Path(args.model_dir)
    land = land_mod.LandscapeModel.load(_need_file(mdir / LANDSCAPE_FILE))
    stats = logdata.CampaignStats.from_text(_need_file(mdir / STATS_FILE).read_text(encoding="utf-8"))
    B = _budget(args, stats, args.T)
    try:
        v = dp.solve_value_table(land, stats.theta_avg, args.T, B, int(args.memory_cap_mb * 2**20))
    except dp.MemoryPlanError as exc:
        raise CliError(str(exc)) from exc
    v.save(mdir / VALUE_FILE)
    dp.diff_table(v).save(mdir / DIFF_FILE)
    if args.text:
        v.save_text(mdir / "value.txt")
    print(f"value table T={v.T} B={v.B} -> {mdir / VALUE_FILE}")


def cmd_train_nn(args) -> None:
    mdir = Path(args.model_dir)
    land = land_mod.LandscapeModel.load(_need_file(mdir / LANDSCAPE_FILE))
    stats = logdata.CampaignStats.from_text(_need_file(mdir / STATS_FILE).read_text(encoding="utf-8"))
    T0 = args.T0
    B0 = args.B0 if args.B0 is not None else evaluator.episode_budget(stats.cpm_train, T0, 0.5)
    try:
        v = dp.solve_value_table(land, stats.theta_avg, T0, B0 + 1, int(args.memory_cap_mb * 2**20))
    except dp.MemoryPlanError as exc:
        raise CliError(f"{exc}. Lower --T0/--B0.") from exc
    cfg = approx.ApproxConfig(T0, B0, learning_rate=args.nn_lr, epochs=args.nn_epochs,
                              batch_size=args.batch_size, max_cells=args.max_cells, seed=args.seed)
    model = approx.train_nn(dp.diff_table(v), cfg)
    model.save(mdir / NN_FILE)
    v.save(mdir / SUBGRID_FILE)
    print(f"nn: T0={T0} B0={B0} rmse={model.train_rmse:.4g} rmse/theta_avg={model.train_rmse / stats.theta_avg:.4g}")


def cmd_evaluate(args) -> None:
    schema = _schema(args)
    test = _read(args.test, schema)
    train = _read(args.train, schema) if args.train else None
    bundle = _load_bundle(args, train)
    test_log = evaluator.ReplayLog.from_records(test, bundle.ctr)
    strategies = [StrategyParams(s.strip(), b0=args.b0, cpc=args.cpc, T0=args.T0_override,
                                 mapa_delegate=args.mapa_delegate)
                  for s in args.strategies.split(",") if s.strip()]
    rows = evaluator.run_grid(args.campaign, test_log, bundle, args.T, strategies, _floats(args.c0_grid))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    evaluator.write_csv(rows, out)
    print(f"{len(rows)} rows -> {out}")


def cmd_report(args) -> None:
    rows = []
    for p in args.inputs:
        rows.extend(evaluator.read_csv(_need_file(p)))
    summary = evaluator.improvement_summary(rows, args.base, args.target)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cols = ["campaign", "T", "c0", "base", "target", "base_clicks", "target_clicks", "improvement"]
    import csv

    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(summary)
    for r in summary:
        if r["campaign"] == "average":
            print(f"average T={r['T']} c0={r['c0']:.5g}: {r['improvement']:+.2%}")
    print(f"summary -> {out}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--log-level", default="WARNING")
    common.add_argument("--model-dir", default="models")
    common.add_argument("--dim", type=int, help="feature dimension (default: from schema.conf or data)")
    common.add_argument("--memory-cap-mb", type=float, default=dp.DEFAULT_MEMORY_CAP / 2**20)

    p = argparse.ArgumentParser(prog="rlbid", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare", parents=[common], help="validate logs and rewrite them canonically")
    s.add_argument("--train", required=True)
    s.add_argument("--test")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--clamp-price", type=int, help="clamp market prices above this value")
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("train-ctr", parents=[common], help="train the logistic-regression CTR model")
    s.add_argument("--train", required=True)
    s.add_argument("--test")
    s.add_argument("--optimizer", choices=("ftrl", "sgd"), default="ftrl")
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--l2", type=float, default=1e-6)
    s.add_argument("--epochs", type=int, default=3)
    s.add_argument("--neg-sample-rate", type=float, default=1.0)
    s.add_argument("--shuffle", action="store_true")
    s.set_defaults(func=cmd_train_ctr)

    s = sub.add_parser("fit-landscape", parents=[common], help="fit the market price histogram")
    s.add_argument("--train", required=True)
    s.add_argument("--delta-max", type=int, default=land_mod.DEFAULT_DELTA_MAX)
    s.add_argument("--laplace", type=float, default=1.0)
    s.set_defaults(func=cmd_fit_landscape)

    s = sub.add_parser("solve-dp", parents=[common], help="solve the value table V(t, b)")
    s.add_argument("--T", type=int, default=1000)
    s.add_argument("--B", type=int, help="budget; default derives from --c0")
    s.add_argument("--c0", type=float, default=0.5)
    s.add_argument("--text", action="store_true", help="also write a text export")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("train-nn", parents=[common], help="fit the D(t, b) network on a sub-grid")
    s.add_argument("--T0", type=int, default=1000)
    s.add_argument("--B0", type=int, help="default: CPM_train * 1e-3 * T0 / 2 in price units")
    s.add_argument("--nn-lr", type=float, default=3e-3)
    s.add_argument("--nn-epochs", type=int, default=200)
    s.add_argument("--batch-size", type=int, default=256)
    s.add_argument("--max-cells", type=int, default=50_000)
    s.set_defaults(func=cmd_train_nn)

    s = sub.add_parser("evaluate", parents=[common], help="replay strategies over a c0 grid")
    s.add_argument("--test", required=True)
    s.add_argument("--train", help="training log (Lin tuning and default CPC)")
    s.add_argument("--T", type=int, default=1000)
    s.add_argument("--c0-grid", default="1/32,1/16,1/8,1/4,1/2")
    s.add_argument("--strategies", default=",".join(VARIANTS))
    s.add_argument("--campaign", default="campaign")
    s.add_argument("--b0", type=int, help="fixed Lin base bid (default: tuned)")
    s.add_argument("--cpc", type=float, help="Mcpc CPC (default: training eCPC)")
    s.add_argument("--T0-override", type=int, dest="T0_override")
    s.add_argument("--mapa-delegate", choices=("nn", "exact"), default="nn")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", parents=[common], help="RLB-over-Lin click improvement summary")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--base", default="lin")
    s.add_argument("--target", default="rlb")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    with open(_need_file(args.config), encoding="utf-8") as fh:
        kv = {k.replace("-", "_"): v for k, v in logdata.read_kv(fh).items()}
    # re-parse with config values as defaults so explicit flags still win
    sub = parser._subparsers._group_actions[0].choices[args.command]
    types = {a.dest: a for a in sub._actions}
    defaults = {}
    for k, v in kv.items():
        act = types.get(k)
        if act is None:
            raise CliError(f"{args.config}: unknown key {k!r}")
        if isinstance(act, argparse._StoreTrueAction):
            defaults[k] = v.lower() in ("1", "true", "yes")
        else:
            defaults[k] = act.type(v) if act.type else v
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except (CliError, ValueError, OSError, ctr_mod.TrainingDiverged, approx.TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
