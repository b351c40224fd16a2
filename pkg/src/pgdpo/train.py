"""Training loops and run-directory management.

Both modes run the same gradient loop (simulate, sweep, Adam ascent);
they differ in which controls the metric columns score: the baseline
scores the network outputs, the OneShot mode scores controls rebuilt
from costates once the warm-up has passed.

Run directory layout:

  manifest.json   config snapshot, written before any long computation
  metrics.csv     one row per iteration (deterministic bytes)
  timing.csv      wall-clock sidecar (excluded from metrics.csv so two
                  identical runs produce byte-identical metrics)
  *_NNNNNN.ckpt   policy checkpoints at the checkpoint cadence
  state_NNNNNN.npz  optimizer/window state for resumption
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import merton
from .costate import CostateSample, node_costates, path_costate_samples, z_process
from .errors import NonFiniteObjective
from .gradients import pathwise_gradients
from .market import MarketParams
from .metrics import (
    FocResiduals,
    foc_residuals,
    relative_mse,
    unconstrained_foc_residuals,
)
from .optim import Adam, AdamState
from .oneshot import oneshot_controls
from .policy import PolicyNet, load_checkpoint, save_checkpoint
from .rng import stream
from .rollout import (
    RolloutConfig,
    brownian_increments,
    sample_initial_nodes,
    simulate_taped,
)

log = logging.getLogger(__name__)

METRICS_SCHEMA_VERSION = 1
UTILITY_WINDOW = 500

METRIC_COLUMNS = (
    "iteration",
    "consumption_rel_mse",
    "investment_rel_mse",
    "investment_mse_min",
    "investment_mse_max",
    "utility_rolling_mean",
    "foc_consumption_mse",
    "foc_investment_mse",
)


@dataclass
class SurrogateConfig:
    samples: int = 100_000
    epochs: int = 50
    batch: int = 512
    lr: float = 1e-3


@dataclass
class TrainConfig:
    iterations: int
    batch: int = 1000
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    warmup: int = 1000
    eval_every: int = 500
    mse_every: int = 50
    eval_nodes: int = 256
    # costates at an evaluation node average this many CRN paths; the
    # single-path estimator is unbiased but heavy-tailed through the
    # finite-difference slope, which would dominate the scored mean
    eval_paths_per_node: int = 1
    checkpoint_every: int = 500
    seed: int = 0
    constrained: bool = False
    hidden: tuple = (200, 200)
    epsilon: float = 1e-6
    workers: int | None = None  # None: PGDPO_WORKERS env var, else 1
    # global-norm clip per network; collapsing low-wealth paths produce
    # astronomically large but correctly signed gradients, and without a
    # clip a single spike poisons Adam's second-moment state for the rest
    # of the run
    grad_clip: float | None = 100.0
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.warmup >= self.iterations:
            # K0 < K is required; clamp so short smoke runs stay valid
            self.warmup = max(self.iterations - 1, 0)


@dataclass
class MetricRecord:
    iteration: int
    consumption_rel_mse: float
    investment_rel_mse: float
    investment_mse_min: float
    investment_mse_max: float
    utility_rolling_mean: float
    foc_consumption_mse: float
    foc_investment_mse: float
    wall_clock: float  # written to timing.csv, not metrics.csv

    def csv_row(self) -> str:
        vals = [str(METRICS_SCHEMA_VERSION), str(self.iteration)] + [
            format(getattr(self, c), ".17g") for c in METRIC_COLUMNS[1:]
        ]
        return ",".join(vals)


def make_nets(market: MarketParams, cfg: TrainConfig, roll_cfg: RolloutConfig):
    head = "simplex" if cfg.constrained else "linear"
    inv = PolicyNet(n=market.n, head=head, T=roll_cfg.T_max, hidden=cfg.hidden)
    inv.init_params(seed=cfg.seed, tag=0)
    cons = PolicyNet(n=market.n, head="positive", T=roll_cfg.T_max, hidden=cfg.hidden)
    cons.init_params(seed=cfg.seed, tag=1)
    return inv, cons


def clip_gradient(g: np.ndarray, max_norm: float | None) -> np.ndarray:
    if max_norm is None:
        return g
    norm = float(np.linalg.norm(g))
    if norm > max_norm:
        return g * (max_norm / norm)
    return g


def market_digest(market: MarketParams) -> str:
    h = hashlib.sha256()
    for arr in (market.mu, market.sigma_cov.entries, market.pi_base):
        h.update(arr.tobytes())
    h.update(f"{market.n}|{market.r}|{market.gamma}|{market.seed}".encode())
    return h.hexdigest()[:16]


# -- evaluation helpers --------------------------------------------------------


def _risky_block(pi: np.ndarray, constrained: bool) -> np.ndarray:
    pi = np.atleast_2d(pi)
    return pi[:, 1:] if constrained else pi


def _to_simplex(pi: np.ndarray, constrained: bool) -> np.ndarray:
    """Full (n+1)-vector with cash first; implied cash for the linear head."""
    pi = np.atleast_2d(pi)
    if constrained:
        return pi
    cash = 1.0 - pi.sum(axis=1, keepdims=True)
    return np.concatenate([cash, pi], axis=1)


def node_costates_averaged(
    market: MarketParams,
    inv,
    cons,
    t_e: np.ndarray,
    x_e: np.ndarray,
    roll_cfg: RolloutConfig,
    paths_per_node: int,
    seed: int,
    tag: int,
):
    """Costates at nodes, averaged over paths_per_node CRN paths each."""
    k = max(1, paths_per_node)
    tt = np.repeat(t_e, k)
    xx = np.repeat(x_e, k)
    incs = brownian_increments(
        (roll_cfg.T_max - tt) / roll_cfg.m,
        roll_cfg.m,
        market.n,
        stream(seed, "eval_brownian", tag),
    )
    cs = node_costates(market, inv, cons, tt, xx, incs, roll_cfg)
    if k == 1:
        return cs
    lam = cs.lam.reshape(-1, k).mean(axis=1)
    slope = cs.dlam_dx.reshape(-1, k).mean(axis=1)
    pi0 = np.atleast_2d(inv.forward(t_e, x_e))
    return CostateSample(
        t=t_e, x=x_e, lam=lam, dlam_dx=slope,
        z=z_process(slope, x_e, market, pi0),
    )


def eval_controls(
    market: MarketParams,
    inv: PolicyNet,
    cons: PolicyNet,
    roll_cfg: RolloutConfig,
    cfg: TrainConfig,
    iteration: int,
    mode: str,
):
    """Controls + costates at freshly sampled evaluation nodes."""
    t_e, x_e = sample_initial_nodes(
        roll_cfg, cfg.eval_nodes, stream(cfg.seed, "eval_nodes", iteration)
    )
    cs = node_costates_averaged(
        market, inv, cons, t_e, x_e, roll_cfg,
        cfg.eval_paths_per_node, cfg.seed, iteration,
    )
    if mode == "oneshot":
        pi, c = oneshot_controls(
            cs, market, roll_cfg.gamma, roll_cfg.rho,
            constrained=cfg.constrained, epsilon=cfg.epsilon,
            workers=cfg.workers,
        )
    else:
        pi = inv.forward(t_e, x_e)
        c = cons.forward(t_e, x_e)
    return t_e, x_e, pi, c, cs


def evaluate_foc_protocol(
    market: MarketParams,
    investment,
    consumption,
    roll_cfg: RolloutConfig,
    batch: int,
    seed: int,
    tag: int,
    epsilon: float,
    constrained: bool,
    paths_per_node: int = 1,
) -> FocResiduals:
    """FOC residuals of a policy over all nodes of simulated paths.

    The same protocol scores the baseline nets and the surrogate nets
    that replicate OneShot controls: simulate under the policy, extract
    costates under that same policy, and measure its controls' residuals.
    With paths_per_node > 1 the costates at each visited node average
    that many CRN tail pairs, which applies identically to every policy
    being compared.
    """
    t0, x0 = sample_initial_nodes(roll_cfg, batch, stream(seed, "eval_nodes", tag))
    incs = brownian_increments(
        (roll_cfg.T_max - t0) / roll_cfg.m,
        roll_cfg.m,
        market.n,
        stream(seed, "eval_brownian", tag),
    )
    roll = simulate_taped(market, investment, consumption, t0, x0, incs, roll_cfg)
    xs = roll.path_values()
    if paths_per_node <= 1:
        samples = path_costate_samples(market, investment, consumption, roll)
    else:
        samples = [
            node_costates_averaged(
                market, investment, consumption, roll.times(k), xs[:, k],
                roll_cfg, paths_per_node, seed, tag * 1000 + k,
            )
            for k in range(roll_cfg.m)
        ]

    ts, exes, pis, cs_, lams, slopes = [], [], [], [], [], []
    for k, s in enumerate(samples):
        pi_k = roll.pi_vars[k]
        pi_k = pi_k.value if hasattr(pi_k, "value") else np.asarray(pi_k)
        c_k = roll.c_vars[k]
        c_k = c_k.value if hasattr(c_k, "value") else np.asarray(c_k)
        ts.append(s.t)
        exes.append(xs[:, k])
        pis.append(np.atleast_2d(pi_k))
        cs_.append(c_k)
        lams.append(s.lam)
        slopes.append(s.dlam_dx)
    args = (
        np.concatenate(ts),
        np.concatenate(exes),
        np.vstack(pis),
        np.concatenate(cs_),
        np.concatenate(lams),
        np.concatenate(slopes),
        market,
        roll_cfg.gamma,
        roll_cfg.rho,
    )
    if constrained:
        return foc_residuals(*args, epsilon)
    return unconstrained_foc_residuals(*args)


# -- surrogate fitting -----------------------------------------------------------


def collect_oneshot_dataset(
    market: MarketParams,
    inv: PolicyNet,
    cons: PolicyNet,
    roll_cfg: RolloutConfig,
    cfg: TrainConfig,
    n_samples: int,
):
    """(t, x) -> (pi_OS, C_OS) pairs from rollouts under the current nets."""
    per_pass = roll_cfg.batch * roll_cfg.m
    passes = max(1, int(np.ceil(n_samples / per_pass)))
    ts, xs, pis, cs_ = [], [], [], []
    for p in range(passes):
        t0, x0 = sample_initial_nodes(
            roll_cfg, roll_cfg.batch, stream(cfg.seed, "surrogate", p, 0)
        )
        incs = brownian_increments(
            (roll_cfg.T_max - t0) / roll_cfg.m,
            roll_cfg.m,
            market.n,
            stream(cfg.seed, "surrogate", p, 1),
        )
        roll = simulate_taped(market, inv, cons, t0, x0, incs, roll_cfg)
        for s in path_costate_samples(market, inv, cons, roll):
            pi_os, c_os = oneshot_controls(
                s, market, roll_cfg.gamma, roll_cfg.rho,
                constrained=cfg.constrained, epsilon=cfg.epsilon,
                workers=cfg.workers,
            )
            ts.append(s.t)
            xs.append(s.x)
            pis.append(pi_os)
            cs_.append(c_os)
    t = np.concatenate(ts)[:n_samples]
    x = np.concatenate(xs)[:n_samples]
    pi = np.vstack(pis)[:n_samples]
    c = np.concatenate(cs_)[:n_samples]
    return t, x, pi, c


def _fit_regression(net: PolicyNet, t, x, target, sur_cfg: SurrogateConfig, seed, tag):
    """Adam least squares of the net output onto the targets."""
    from .autodiff import Tape, backward_sweep

    opt = Adam(lr=sur_cfg.lr)
    state = AdamState.zeros(net.param_count)
    count = t.size
    order_rng = stream(seed, "surrogate", tag, 2)
    for epoch in range(sur_cfg.epochs):
        order = order_rng.permutation(count)
        for lo in range(0, count, sur_cfg.batch):
            idx = order[lo : lo + sur_cfg.batch]
            tape = Tape()
            bound = net.bind(tape)
            out = bound.forward(t[idx], tape.input(x[idx]))
            diff = tape.sub(out, target[idx])
            sq = tape.mul(diff, diff)
            loss = tape.mean(tape.rowsum(sq) if out.value.ndim > 1 else sq)
            adjoints = backward_sweep(tape, loss)
            grad = bound.param_adjoints(adjoints)
            # descent on the loss = ascent on its negative
            net.params = opt.step(net.params, -grad, state)
    return net


def fit_surrogates(
    market: MarketParams,
    inv: PolicyNet,
    cons: PolicyNet,
    roll_cfg: RolloutConfig,
    cfg: TrainConfig,
):
    """Networks replicating the OneShot controls, for rollout-based scoring."""
    sur = cfg.surrogate
    t, x, pi, c = collect_oneshot_dataset(
        market, inv, cons, roll_cfg, cfg, sur.samples
    )
    pi_head = "simplex" if cfg.constrained else "linear"
    pi_net = PolicyNet(n=market.n, head=pi_head, T=roll_cfg.T_max, hidden=cfg.hidden)
    pi_net.init_params(seed=cfg.seed, tag=2)
    c_net = PolicyNet(n=market.n, head="positive", T=roll_cfg.T_max, hidden=cfg.hidden)
    c_net.init_params(seed=cfg.seed, tag=3)
    _fit_regression(pi_net, t, x, pi, sur, cfg.seed, 0)
    _fit_regression(c_net, t, x, c, sur, cfg.seed, 1)
    mse_pi = float(np.mean((pi_net.forward(t, x) - pi) ** 2))
    mse_c = float(np.mean((c_net.forward(t, x) - c) ** 2))
    log.info("surrogate fit: pi mse %.3e, c mse %.3e", mse_pi, mse_c)
    return pi_net, c_net, {"pi_fit_mse": mse_pi, "c_fit_mse": mse_c}


# -- the training loop -----------------------------------------------------------


@dataclass
class TrainResult:
    inv: PolicyNet
    cons: PolicyNet
    records: list
    reference: merton.ClosedFormSolution
    out_dir: Path


def _write_manifest(out_dir: Path, market: MarketParams, roll_cfg, cfg, mode, market_path):
    manifest = {
        "schema_version": METRICS_SCHEMA_VERSION,
        "mode": mode,
        "market_file": str(market_path) if market_path else None,
        "market_digest": market_digest(market),
        "rollout": asdict(roll_cfg),
        "train": {**asdict(cfg), "hidden": list(cfg.hidden)},
        "metric_columns": list(METRIC_COLUMNS),
        "notes": {
            "wall_clock": "per-iteration seconds live in timing.csv",
            "foc_definition": (
                "consumption: e^{-rho t} U'(C) - lambda; investment: "
                "demeaned dH/dpi_i + eps/pi_i (constrained) or the "
                "unconstrained stationarity vector (unconstrained)"
            ),
        },
        "created_unix": time.time(),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _metrics_header() -> str:
    return "schema_version," + ",".join(METRIC_COLUMNS)


def _checkpoint(out_dir, inv, cons, it, opt_inv, opt_cons, window, carry):
    save_checkpoint(inv, out_dir / f"inv_{it:06d}.ckpt", seed=it)
    save_checkpoint(cons, out_dir / f"cons_{it:06d}.ckpt", seed=it)
    np.savez(
        out_dir / f"state_{it:06d}.npz",
        iteration=it,
        inv_m=opt_inv.m,
        inv_v=opt_inv.v,
        inv_t=opt_inv.t,
        cons_m=opt_cons.m,
        cons_v=opt_cons.v,
        cons_t=opt_cons.t,
        window=np.array(window),
        carry=np.array([carry[c] for c in METRIC_COLUMNS[1:]]),
    )


def _truncate_csv(path: Path, max_iteration: int, iter_col: int) -> None:
    """Drop rows past the checkpoint so a resumed run rewrites them."""
    if not path.exists():
        return
    lines = path.read_text().splitlines()
    kept = [lines[0]]
    for line in lines[1:]:
        if int(line.split(",")[iter_col]) <= max_iteration:
            kept.append(line)
    path.write_text("\n".join(kept) + "\n")


def latest_state(out_dir: Path):
    states = sorted(out_dir.glob("state_*.npz"))
    return states[-1] if states else None


def train(
    market: MarketParams,
    roll_cfg: RolloutConfig,
    cfg: TrainConfig,
    mode: str = "pgdpo",
    out_dir: Path | str = "run",
    market_path=None,
    resume: bool = False,
    nets: tuple | None = None,
) -> TrainResult:
    if mode not in ("pgdpo", "oneshot"):
        raise ValueError(f"unknown mode {mode!r}")
    out_dir = Path(out_dir)
    reference = merton.closed_form(
        market, roll_cfg.gamma, roll_cfg.rho, roll_cfg.kappa_bequest, roll_cfg.T_max
    )

    inv, cons = nets if nets is not None else make_nets(market, cfg, roll_cfg)
    opt = Adam(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    opt_inv = AdamState.zeros(inv.param_count)
    opt_cons = AdamState.zeros(cons.param_count)
    window: deque = deque(maxlen=UTILITY_WINDOW)
    carry = {c: 0.0 for c in METRIC_COLUMNS[1:]}
    start_it = 0

    state_file = latest_state(out_dir) if resume else None
    if state_file is not None:
        blob = np.load(state_file)
        start_it = int(blob["iteration"])
        inv, _ = load_checkpoint(out_dir / f"inv_{start_it:06d}.ckpt")
        cons, _ = load_checkpoint(out_dir / f"cons_{start_it:06d}.ckpt")
        opt_inv = AdamState(m=blob["inv_m"], v=blob["inv_v"], t=int(blob["inv_t"]))
        opt_cons = AdamState(m=blob["cons_m"], v=blob["cons_v"], t=int(blob["cons_t"]))
        window.extend(blob["window"].tolist())
        for name, val in zip(METRIC_COLUMNS[1:], blob["carry"]):
            carry[name] = float(val)
        _truncate_csv(out_dir / "metrics.csv", start_it, iter_col=1)
        _truncate_csv(out_dir / "timing.csv", start_it, iter_col=0)
        log.info("resuming at iteration %d", start_it)
    else:
        _write_manifest(out_dir, market, roll_cfg, cfg, mode, market_path)
        with open(out_dir / "metrics.csv", "w") as fh:
            fh.write(_metrics_header() + "\n")
        with open(out_dir / "timing.csv", "w") as fh:
            fh.write("iteration,seconds\n")

    records: list[MetricRecord] = []
    metrics_fh = open(out_dir / "metrics.csv", "a")
    timing_fh = open(out_dir / "timing.csv", "a")
    t_start = time.perf_counter()
    try:
        for it in range(start_it + 1, cfg.iterations + 1):
            t0, x0 = sample_initial_nodes(
                roll_cfg, cfg.batch, stream(cfg.seed, "init_nodes", it)
            )
            incs = brownian_increments(
                (roll_cfg.T_max - t0) / roll_cfg.m,
                roll_cfg.m,
                market.n,
                stream(cfg.seed, "brownian", it),
            )
            roll = simulate_taped(market, inv, cons, t0, x0, incs, roll_cfg)
            j_hat = float(roll.j_hat.value)
            if not np.isfinite(j_hat):
                raise NonFiniteObjective(
                    f"objective became {j_hat} at iteration {it}",
                    iteration=it,
                    seed=cfg.seed,
                )
            g_inv, g_cons = pathwise_gradients(roll)
            if not (np.all(np.isfinite(g_inv)) and np.all(np.isfinite(g_cons))):
                raise NonFiniteObjective(
                    f"non-finite gradient at iteration {it}",
                    iteration=it,
                    seed=cfg.seed,
                )
            g_inv = clip_gradient(g_inv, cfg.grad_clip)
            g_cons = clip_gradient(g_cons, cfg.grad_clip)
            inv.params = opt.step(inv.params, g_inv, opt_inv)
            cons.params = opt.step(cons.params, g_cons, opt_cons)
            window.append(j_hat)
            carry["utility_rolling_mean"] = float(np.mean(window))

            # cadence is purely iteration-keyed so a resumed run writes the
            # same rows as an uninterrupted one
            eval_mode = mode if (mode == "pgdpo" or it > cfg.warmup) else "pgdpo"
            refresh_mse = it == 1 or it % cfg.mse_every == 0
            refresh_foc = it == 1 or it % cfg.eval_every == 0
            if refresh_mse or refresh_foc:
                t_e, x_e, pi_e, c_e, cs_e = eval_controls(
                    market, inv, cons, roll_cfg, cfg, it, eval_mode
                )
            if refresh_mse:
                rel = relative_mse(
                    t_e, x_e, c_e,
                    _risky_block(pi_e, cfg.constrained),
                    reference,
                )
                carry["consumption_rel_mse"] = rel.consumption
                carry["investment_rel_mse"] = rel.investment
                carry["investment_mse_min"] = rel.per_asset_min
                carry["investment_mse_max"] = rel.per_asset_max
            if refresh_foc:
                if cfg.constrained:
                    foc = foc_residuals(
                        t_e, x_e, pi_e, c_e, cs_e.lam, cs_e.dlam_dx,
                        market, roll_cfg.gamma, roll_cfg.rho, cfg.epsilon,
                    )
                else:
                    foc = unconstrained_foc_residuals(
                        t_e, x_e, pi_e, c_e, cs_e.lam, cs_e.dlam_dx,
                        market, roll_cfg.gamma, roll_cfg.rho,
                    )
                carry["foc_consumption_mse"] = foc.consumption
                carry["foc_investment_mse"] = foc.investment

            rec = MetricRecord(
                iteration=it,
                wall_clock=time.perf_counter() - t_start,
                **{c: carry[c] for c in METRIC_COLUMNS[1:]},
            )
            records.append(rec)
            metrics_fh.write(rec.csv_row() + "\n")
            timing_fh.write(f"{it},{rec.wall_clock:.3f}\n")

            if it % cfg.checkpoint_every == 0 or it == cfg.iterations:
                metrics_fh.flush()
                _checkpoint(out_dir, inv, cons, it, opt_inv, opt_cons, window, carry)
    finally:
        metrics_fh.close()
        timing_fh.close()

    save_checkpoint(inv, out_dir / "inv_final.ckpt", seed=cfg.seed)
    save_checkpoint(cons, out_dir / "cons_final.ckpt", seed=cfg.seed)
    return TrainResult(inv=inv, cons=cons, records=records, reference=reference, out_dir=out_dir)
