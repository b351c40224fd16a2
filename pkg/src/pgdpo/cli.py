"""Command-line front end: generate | train | eval | export.

Config precedence: command-line flags > TOML config file > defaults.
The effective configuration is always dumped into the run manifest.

Exit codes: 2 invalid arguments, 3 degenerate market, 4 non-finite
objective, 5 checkpoint/market mismatch.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import merton
from .errors import CheckpointMismatch, DegenerateMarket, NonFiniteObjective
from .market import generate_market, load_market, save_market
from .metrics import relative_mse
from .oneshot import oneshot_controls
from .policy import load_checkpoint
from .rng import stream
from .rollout import (
    FixedWeightPolicy,
    ProportionalConsumption,
    RolloutConfig,
    sample_initial_nodes,
)
from .train import (
    METRICS_SCHEMA_VERSION,
    SurrogateConfig,
    TrainConfig,
    evaluate_foc_protocol,
    fit_surrogates,
    node_costates_averaged,
    train,
)

HEATMAP_GRID = 101


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _pick(flag, config: dict, key: str, default):
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


# -- generate -------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = _load_config(args.config).get("generate", {})
    n = _pick(args.n, cfg, "n", None)
    if n is None or n < 1:
        print("error: --n must be a positive asset count", file=sys.stderr)
        return 2
    try:
        market = generate_market(
            n,
            r=_pick(args.rate, cfg, "rate", 0.03),
            gamma=_pick(args.gamma, cfg, "gamma", 2.0),
            vol_range=tuple(cfg.get("vol_range", (0.05, 0.5))),
            pi_range=tuple(cfg.get("pi_range", (-1.0, 2.0))),
            sum_band=tuple(cfg.get("sum_band", (0.2, 0.75))),
            seed=_pick(args.seed, cfg, "seed", 0),
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DegenerateMarket as exc:
        print(f"error: degenerate market: {exc}", file=sys.stderr)
        return 3
    save_market(market, args.out)
    print(f"wrote {args.out} (n={market.n}, seed={market.seed})")
    return 0


# -- train ----------------------------------------------------------------------


def _build_train_configs(args) -> tuple[RolloutConfig, TrainConfig]:
    file_cfg = _load_config(args.config)
    roll_section = file_cfg.get("rollout", {})
    train_section = file_cfg.get("train", {})
    seed = _pick(args.seed, train_section, "seed", 0)
    roll_cfg = RolloutConfig(
        T_max=roll_section.get("T_max", 1.0),
        m=roll_section.get("steps", 5),
        wealth_min=roll_section.get("wealth_min", 0.1),
        wealth_max=roll_section.get("wealth_max", 2.0),
        batch=_pick(args.batch, train_section, "batch", 1000),
        rho=roll_section.get("rho", 0.1),
        gamma=roll_section.get("gamma", 2.0),
        kappa_bequest=roll_section.get("kappa_bequest", 1.0),
        seed=seed,
    )
    sur_section = file_cfg.get("surrogate", {})
    cfg = TrainConfig(
        iterations=_pick(args.iters, train_section, "iterations", 1000),
        batch=roll_cfg.batch,
        lr=_pick(args.lr, train_section, "lr", 1e-5),
        warmup=_pick(args.warmup, train_section, "warmup", 1000),
        eval_every=_pick(args.eval_every, train_section, "eval_every", 500),
        mse_every=train_section.get("mse_every", 50),
        eval_nodes=train_section.get("eval_nodes", 256),
        eval_paths_per_node=train_section.get("eval_paths_per_node", 1),
        checkpoint_every=train_section.get("checkpoint_every", 500),
        seed=seed,
        constrained=bool(args.constrained or train_section.get("constrained", False)),
        hidden=tuple(train_section.get("hidden", (200, 200))),
        epsilon=train_section.get("epsilon", 1e-6),
        grad_clip=train_section.get("grad_clip", 100.0),
        workers=_pick(args.workers, train_section, "workers", None),
        surrogate=SurrogateConfig(
            samples=sur_section.get("samples", 100_000),
            epochs=sur_section.get("epochs", 50),
            batch=sur_section.get("batch", 512),
            lr=sur_section.get("lr", 1e-3),
        ),
    )
    return roll_cfg, cfg


def cmd_train(args) -> int:
    market = load_market(args.market)
    roll_cfg, cfg = _build_train_configs(args)
    try:
        train(
            market,
            roll_cfg,
            cfg,
            mode=args.mode,
            out_dir=args.out,
            market_path=args.market,
            resume=args.resume,
        )
    except NonFiniteObjective as exc:
        diag = Path(args.out) / "nonfinite_diagnostic.json"
        diag.parent.mkdir(parents=True, exist_ok=True)
        with open(diag, "w") as fh:
            json.dump({"iteration": exc.iteration, "seed": exc.seed}, fh)
        print(f"error: {exc} (diagnostic in {diag})", file=sys.stderr)
        return 4
    print(f"run complete: {args.out}")
    return 0


# -- eval -----------------------------------------------------------------------


class _OraclePolicyPair:
    """Closed-form stand-ins used by `--checkpoint oracle`."""

    def __init__(self, market, roll_cfg):
        self.reference = merton.closed_form(
            market, roll_cfg.gamma, roll_cfg.rho,
            roll_cfg.kappa_bequest, roll_cfg.T_max,
        )
        self.inv = FixedWeightPolicy(self.reference.pi_star)
        gam = roll_cfg.gamma
        self.cons = ProportionalConsumption(
            lambda t, cf=self.reference: cf.g_of_t(t) ** (-1.0 / gam)
        )


def _csv_write(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(f"schema_version,{header}\n")
        for row in rows:
            fh.write(f"{METRICS_SCHEMA_VERSION},{row}\n")


def _fmt(v) -> str:
    return format(float(v), ".17g")


def cmd_eval(args) -> int:
    market = load_market(args.market)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    run_dir = Path(args.run) if args.run else None
    manifest = {}
    if run_dir and (run_dir / "manifest.json").exists():
        manifest = json.loads((run_dir / "manifest.json").read_text())
    mode = args.mode or manifest.get("mode", "pgdpo")
    constrained = bool(manifest.get("train", {}).get("constrained", False))
    if args.constrained:
        constrained = True
    roll_kwargs = manifest.get("rollout", {})
    roll_kwargs.pop("batch", None)
    roll_kwargs.pop("seed", None)
    roll_cfg = RolloutConfig(batch=args.nodes, seed=args.seed, **roll_kwargs)
    epsilon = manifest.get("train", {}).get("epsilon", 1e-6)

    oracle_mode = args.checkpoint == "oracle"
    if oracle_mode:
        pair = _OraclePolicyPair(market, roll_cfg)
        inv, cons = pair.inv, pair.cons
        constrained = False
    else:
        if run_dir:
            inv_path = run_dir / "inv_final.ckpt"
            cons_path = run_dir / "cons_final.ckpt"
        else:
            inv_path = Path(args.checkpoint)
            cons_path = Path(args.consumption_checkpoint)
        try:
            inv, _ = load_checkpoint(inv_path)
            cons, _ = load_checkpoint(cons_path)
        except (CheckpointMismatch, FileNotFoundError) as exc:
            print(f"error: cannot load checkpoint: {exc}", file=sys.stderr)
            return 5
        if inv.n != market.n:
            print(
                f"error: checkpoint n={inv.n} does not match market n={market.n}",
                file=sys.stderr,
            )
            return 5
        if constrained and inv.head != "simplex":
            print("error: constrained eval requires a simplex checkpoint", file=sys.stderr)
            return 5

    reference = merton.closed_form(
        market, roll_cfg.gamma, roll_cfg.rho, roll_cfg.kappa_bequest, roll_cfg.T_max
    )

    # -- controls at sampled nodes ------------------------------------------
    t_e, x_e = sample_initial_nodes(roll_cfg, args.nodes, stream(args.seed, "eval_nodes", 0))
    if mode == "oneshot" and not oracle_mode:
        cs = node_costates_averaged(
            market, inv, cons, t_e, x_e, roll_cfg,
            args.paths_per_node, args.seed, 0,
        )
        pi_e, c_e = oneshot_controls(
            cs, market, roll_cfg.gamma, roll_cfg.rho,
            constrained=constrained, epsilon=epsilon,
        )
    else:
        pi_e = inv.forward(t_e, x_e)
        c_e = np.asarray(cons.forward(t_e, x_e))
    risky = pi_e[:, 1:] if constrained else pi_e
    # score against the experiment's bequest weight and the zero-bequest
    # limit of the closed form
    zero_bequest = merton.closed_form(
        market, roll_cfg.gamma, roll_cfg.rho, 1e-8, roll_cfg.T_max
    )
    rows = []
    for label, ref in (("experiment", reference), ("zero_bequest", zero_bequest)):
        rel = relative_mse(t_e, x_e, c_e, risky, ref)
        rows.append(
            f"{mode},{label},{_fmt(rel.consumption)},{_fmt(rel.investment)},"
            f"{_fmt(rel.per_asset_min)},{_fmt(rel.per_asset_max)},{rel.nodes_used}"
        )
    _csv_write(
        out / "eval_mse.csv",
        "mode,reference,consumption_rel_mse,investment_rel_mse,"
        "investment_mse_min,investment_mse_max,nodes_used",
        rows,
    )

    # -- FOC residuals over simulated path nodes ------------------------------
    if oracle_mode:
        foc_inv, foc_cons = inv, cons
        foc_label = "oracle"
    elif mode == "oneshot" and constrained:
        # Replicate the OneShot controls with surrogate networks, then
        # score those networks' own rollouts.
        sur_cfg = TrainConfig(
            iterations=1, batch=roll_cfg.batch, seed=args.seed,
            constrained=True, hidden=inv.hidden, epsilon=epsilon,
            surrogate=SurrogateConfig(
                samples=args.surrogate_samples,
                epochs=args.surrogate_epochs,
            ),
        )
        foc_inv, foc_cons, _ = fit_surrogates(market, inv, cons, roll_cfg, sur_cfg)
        foc_label = "oneshot-surrogate"
    else:
        foc_inv, foc_cons = inv, cons
        foc_label = mode
    foc = evaluate_foc_protocol(
        market, foc_inv, foc_cons, roll_cfg,
        batch=min(args.nodes, 256), seed=args.seed, tag=1,
        epsilon=epsilon, constrained=constrained,
        paths_per_node=min(args.paths_per_node, 8),
    )
    _csv_write(
        out / "eval_foc.csv",
        "policy,foc_consumption_mse,foc_investment_mse,"
        "foc_consumption_normalized,foc_investment_normalized",
        [
            f"{foc_label},{_fmt(foc.consumption)},{_fmt(foc.investment)},"
            f"{_fmt(foc.consumption_normalized)},{_fmt(foc.investment_normalized)}"
        ],
    )

    # -- per-asset bands from the training log --------------------------------
    if run_dir and (run_dir / "metrics.csv").exists():
        rows = []
        for line in (run_dir / "metrics.csv").read_text().splitlines()[1:]:
            parts = line.split(",")
            rows.append(f"{parts[1]},{parts[4]},{parts[5]}")
        _csv_write(out / "bands.csv", "iteration,min,max", rows)
        shutil.copy(run_dir / "metrics.csv", out / "metrics.csv")

    # -- allocation snapshot at (t, X) = (0, 1) --------------------------------
    t_snap = np.array([0.0])
    x_snap = np.array([1.0])
    if mode == "oneshot" and not oracle_mode:
        cs = node_costates_averaged(
            market, inv, cons, t_snap, x_snap, roll_cfg,
            args.paths_per_node, args.seed, 2,
        )
        pi_snap, _ = oneshot_controls(
            cs, market, roll_cfg.gamma, roll_cfg.rho,
            constrained=constrained, epsilon=epsilon,
        )
        pi_snap = pi_snap[0]
    else:
        pi_snap = np.atleast_2d(inv.forward(t_snap, x_snap))[0]
    if not constrained:
        pi_snap = np.concatenate([[1.0 - pi_snap.sum()], pi_snap])
    rows = [f"riskfree,{_fmt(pi_snap[0])}"]
    rows += [f"risky_{i:04d},{_fmt(w)}" for i, w in enumerate(pi_snap[1:])]
    _csv_write(out / "alloc.csv", "asset,weight", rows)

    # -- policy heatmaps --------------------------------------------------------
    assets = [int(a) for a in args.heatmap_assets.split(",") if a != ""]
    ts = np.linspace(0.0, roll_cfg.T_max, HEATMAP_GRID)
    xs = np.linspace(roll_cfg.wealth_min, roll_cfg.wealth_max, HEATMAP_GRID)
    tg, xg = np.meshgrid(ts, xs, indexing="ij")
    flat_t, flat_x = tg.ravel(), xg.ravel()
    if mode == "oneshot" and not oracle_mode:
        if constrained:
            # the fitted surrogate is the OneShot policy's description
            pi_grid = np.atleast_2d(foc_inv.forward(flat_t, flat_x))
        else:
            # avoid the divergent costate right at the horizon
            grid_t = np.minimum(flat_t, roll_cfg.T_max - 1e-3)
            cs_grid = node_costates_averaged(
                market, inv, cons, grid_t, flat_x, roll_cfg,
                min(args.paths_per_node, 4), args.seed, 3,
            )
            pi_grid, _ = oneshot_controls(
                cs_grid, market, roll_cfg.gamma, roll_cfg.rho,
                constrained=False, epsilon=epsilon,
            )
    else:
        pi_grid = np.atleast_2d(inv.forward(flat_t, flat_x))
    for a in assets:
        col = a + 1 if pi_grid.shape[1] == market.n + 1 else a
        rows = [
            f"{_fmt(flat_t[i])},{_fmt(flat_x[i])},{_fmt(pi_grid[i, col])}"
            for i in range(flat_t.size)
        ]
        _csv_write(out / f"heatmap_{a:04d}.csv", "t,x,pi", rows)

    print(f"eval written to {out}")
    return 0


# -- export ----------------------------------------------------------------------


def cmd_export(args) -> int:
    run_dir = Path(args.run)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    copied = []
    for name in ("manifest.json", "metrics.csv", "timing.csv"):
        src = run_dir / name
        if src.exists():
            shutil.copy(src, out / name)
            copied.append(name)
    for csv in sorted(run_dir.glob("*.csv")):
        if csv.name not in copied:
            shutil.copy(csv, out / csv.name)
            copied.append(csv.name)
    with open(out / "bundle.json", "w") as fh:
        json.dump({"source": str(run_dir), "files": sorted(copied)}, fh, indent=1)
    print(f"exported {len(copied)} files to {out}")
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pgdpo", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic market file")
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--rate", type=float, default=None)
    g.add_argument("--gamma", type=float, default=None)
    g.add_argument("--config", default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a policy on a market file")
    t.add_argument("--market", required=True)
    t.add_argument("--mode", choices=("pgdpo", "oneshot"), default="pgdpo")
    t.add_argument("--constrained", action="store_true")
    t.add_argument("--iters", type=int, default=None)
    t.add_argument("--warmup", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--batch", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--eval-every", type=int, default=None, dest="eval_every")
    t.add_argument("--workers", type=int, default=None)
    t.add_argument("--config", default=None)
    t.add_argument("--resume", action="store_true")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint or run directory")
    e.add_argument("--market", required=True)
    e.add_argument("--run", default=None, help="run directory with final checkpoints")
    e.add_argument("--checkpoint", default=None, help="policy checkpoint or 'oracle'")
    e.add_argument(
        "--consumption-checkpoint", default=None, dest="consumption_checkpoint"
    )
    e.add_argument("--mode", choices=("pgdpo", "oneshot"), default=None)
    e.add_argument("--constrained", action="store_true")
    e.add_argument("--nodes", type=int, default=256)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument(
        "--paths-per-node", type=int, default=16, dest="paths_per_node"
    )
    e.add_argument("--heatmap-assets", default="0", dest="heatmap_assets")
    e.add_argument("--surrogate-samples", type=int, default=20_000)
    e.add_argument("--surrogate-epochs", type=int, default=20)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export", help="bundle run CSVs for plotting")
    x.add_argument("--run", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "eval" and not args.run and not args.checkpoint:
        print("error: eval needs --run or --checkpoint", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
