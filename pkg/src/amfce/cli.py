"""Command-line entry point.

Exit codes: 0 success, 1 domain error (bad input files, infeasible models),
2 usage error (argparse). Every file is written to a temporary sibling and
moved into place, so readers never see partial output.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import environments as envs
from .equilibrium import NonConvergence, solve_amfce_fixed_point, verify_amfce
from .evaluation import check_bounds, log_loss
from .mfg_core import (
    BehavioralPolicy,
    CorrelationDevice,
    DemonstrationSet,
    DimensionMismatch,
    EnumerationTooLarge,
    MfgModel,
    ZeroProbabilityObservation,
)
from .signatures import embed_signal_history

DOMAIN_ERRORS = (ValueError, KeyError, IndexError, OSError, EnumerationTooLarge, ZeroProbabilityObservation,
                 DimensionMismatch, json.JSONDecodeError)


class DomainError(Exception):
    pass


def atomic_write(path, data) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _fmt_tol(x: float) -> str:
    mant, exp = f"{x:e}".split("e")
    mant = mant.rstrip("0").rstrip(".")
    return f"{mant}e{int(exp)}"


def _fmt_num(x: float) -> str:
    return f"{x:.10g}" if x != 0 else "0"


# ---------------------------------------------------------------- shared resolution

def _load_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    with open(args.config) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise DomainError("config must be a JSON object")
    return doc


def _opt(args, config: dict, name: str, default):
    """Flag value if given, else config value, else default."""
    v = getattr(args, name, None)
    if v is not None:
        return v
    return config.get(name, default)


def _model_and_bundle(args):
    if getattr(args, "model", None):
        with open(args.model) as fh:
            doc = json.load(fh)
        # exports made with --with-expert nest the model next to the policy
        return MfgModel.from_json(doc.get("model", doc)), None
    if not getattr(args, "env", None):
        raise DomainError("pass --env NAME or --model FILE")
    bundle = envs.build_env(args.env)
    return bundle.model, bundle


def _expert(bundle, which: str = "ground-truth"):
    if bundle is None or bundle.expert_policy is None:
        raise DomainError("this model has no bundled expert; pass --policy FILE")
    if which in ("ground-truth", "expert"):
        return bundle.expert_policy, bundle.expert_device
    if which in bundle.alternates:
        return bundle.alternates[which]
    raise DomainError(f"unknown bundled policy {which!r}")


def _device_arg(args, model, bundle, default="expert"):
    choice = getattr(args, "device", None) or default
    if choice == "uniform":
        return CorrelationDevice.uniform(model)
    if choice == "dirac":
        return CorrelationDevice.dirac(model)
    if choice == "expert":
        if bundle is None or bundle.expert_device is None:
            return CorrelationDevice.uniform(model)
        return bundle.expert_device
    with open(choice) as fh:
        return CorrelationDevice.from_json(json.load(fh))


def _policy_doc(path):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------- subcommands

def cmd_env_export(args) -> int:
    bundle = envs.build_env(args.name)
    doc = bundle.model.to_json()
    if args.with_expert and bundle.expert_policy is not None:
        doc = {"model": doc, **bundle.expert_policy.to_json(), **bundle.expert_device.to_json()}
    _emit(json.dumps(doc, indent=1) + "\n", args.out)
    return 0


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    model, bundle = _model_and_bundle(args)
    device = _device_arg(args, model, bundle, "expert")
    init = None
    if args.init:
        init = BehavioralPolicy.from_json(_policy_doc(args.init))
    import warnings
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonConvergence)
        policy, report = solve_amfce_fixed_point(
            model, device, init=init,
            max_iters=int(_opt(args, cfg, "max_iters", 500)),
            damping=float(_opt(args, cfg, "damping", 0.1)),
            tol=float(_opt(args, cfg, "tol", 1e-6)),
            log_path=args.log)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    doc = {**policy.to_json(), **device.to_json(), "report": report.to_json()}
    _emit(json.dumps(doc) + "\n", args.out)
    print(f"AMFCE: {str(report.is_equilibrium).lower()} (max_gain {report.max_gain:.3g})", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    model, bundle = _model_and_bundle(args)
    if args.policy in ("ground-truth", "expert") or (bundle is not None and args.policy in bundle.alternates):
        policy, device = _expert(bundle, args.policy)
        if args.device:
            device = _device_arg(args, model, bundle)
    else:
        doc = _policy_doc(args.policy)
        policy = BehavioralPolicy.from_json(doc)
        device = CorrelationDevice.from_json(doc) if "device" in doc and not args.device else \
            _device_arg(args, model, bundle)
    report = verify_amfce(model, policy, device, tol=args.tol)
    sign = "≤" if report.is_equilibrium else ">"
    print(f"AMFCE: {str(report.is_equilibrium).lower()} (max_gain {sign} {_fmt_tol(args.tol)})")
    if args.out:
        atomic_write(args.out, report.dumps() + "\n")
    return 0


def cmd_demo(args) -> int:
    from .mfcil import generate_demonstrations
    cfg = _load_config(args)
    model, bundle = _model_and_bundle(args)
    if args.policy and args.policy not in ("ground-truth", "expert"):
        doc = _policy_doc(args.policy)
        policy = BehavioralPolicy.from_json(doc)
        device = CorrelationDevice.from_json(doc) if "device" in doc else _device_arg(args, model, bundle)
    else:
        policy, device = _expert(bundle)
    n = int(_opt(args, cfg, "n", 10_000))
    demos = generate_demonstrations(model, policy, device, n, int(_opt(args, cfg, "seed", 0)))
    _emit(demos.to_jsonl(), args.out)
    return 0


def cmd_train(args) -> int:
    from .mfcil import TrainingConfig, train_mfcil, write_history_csv
    cfg = _load_config(args)
    model, _ = _model_and_bundle(args)
    demos = DemonstrationSet.load(args.demos)
    overrides = dict(cfg)
    for flag, key in (("iters", "iterations"), ("seed", "seed"), ("batch_size", "batch_size")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v
    tc = TrainingConfig.from_json(overrides)
    import torch
    torch.set_num_threads(max(1, int(args.workers or 1)))
    res = train_mfcil(model, demos, tc)
    doc = {"env": args.env, "model": model.to_json(), **res.to_json(), "history": res.history}
    _emit(json.dumps(doc) + "\n", args.out)
    if args.history:
        write_history_csv(res.history, args.history + ".tmp")
        os.replace(args.history + ".tmp", args.history)
    return 0


def _load_run(path):
    from .mfcil import TrainingResult
    with open(path) as fh:
        doc = json.load(fh)
    res = TrainingResult.from_json(doc)
    res.history = doc.get("history", [])
    if doc.get("env"):
        bundle = envs.build_env(doc["env"])
        model = bundle.model
    else:
        bundle, model = None, MfgModel.from_json(doc["model"])
    return doc.get("env"), model, bundle, res


def _evaluate(model, bundle, res, weighting: str) -> dict:
    if bundle is None or bundle.expert_policy is None:
        raise DomainError("evaluation needs a bundled expert (checkpoint trained with --env)")
    pi_exp, rho_exp = bundle.expert_policy, bundle.expert_device
    ll = log_loss(res.policy(), pi_exp, weighting, model, rho_exp)
    bounds = check_bounds(model, res.policy(), pi_exp, rho_exp)
    tv = float(np.max(0.5 * np.abs(res.device().table - rho_exp.table).sum(axis=-1)))
    return {"log_loss": ll.mean, "per_signal": [float(x) for x in ll.per_signal], "device_tv": tv,
            "bounds": {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v))
                       for k, v in bounds.to_json().items()}}


def cmd_eval(args) -> int:
    env, model, bundle, res = _load_run(args.checkpoint)
    doc = {"env": env, **_evaluate(model, bundle, res, args.weighting)}
    _emit(json.dumps(doc, indent=1) + "\n", args.out)
    return 0


def cmd_sig(args) -> int:
    try:
        prefix = [int(x) for x in args.input.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise DomainError(f"--input must be comma-separated integers: {exc}") from None
    vec = embed_signal_history(prefix, args.dim, args.depth)
    _emit(" ".join(_fmt_num(x) for x in vec) + "\n", args.out)
    return 0


def cmd_report(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(args.out or "report")
    out.mkdir(parents=True, exist_ok=True)
    rows, curves, devices = [], [], []
    for path in args.checkpoints:
        env, model, bundle, res = _load_run(path)
        ev = _evaluate(model, bundle, res, args.weighting)
        seed = res.config.seed
        for z, v in enumerate(ev["per_signal"]):
            rows.append({"task": env, "seed": seed, "signal": model.signals[z], "log_loss": v})
        rows.append({"task": env, "seed": seed, "signal": "all", "log_loss": ev["log_loss"]})
        curves.append((f"{env} (seed {seed})", [h["iter"] for h in res.history], [h["log_loss"] for h in res.history]))
        devices.append((f"{env} (seed {seed})", res.device().table, bundle.expert_device.table))

    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["task", "seed", "signal", "log_loss"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "log_loss": f"{r['log_loss']:.6f}"})
    atomic_write(out / "log_loss.csv", buf.getvalue())

    def save(fig, name):
        png = io.BytesIO()
        fig.savefig(png, format="png", dpi=100, metadata={"Software": None})
        plt.close(fig)
        atomic_write(out / name, png.getvalue())

    per = [r for r in rows if r["signal"] != "all"]
    labels = [f"{r['task']}/{r['signal']}/s{r['seed']}" for r in per]
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(labels)), 4))
    ax.bar(range(len(per)), [r["log_loss"] for r in per])
    ax.set_xticks(range(len(per)), labels, rotation=90, fontsize=7)
    ax.set_ylabel("log loss")
    fig.tight_layout()
    save(fig, "log_loss.png")

    if any(c[1] for c in curves):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, x, y in curves:
            if x:
                ax.plot(x, y, label=label, lw=1)
        ax.set_xlabel("iteration")
        ax.set_ylabel("demonstration log loss")
        ax.legend(fontsize=6)
        fig.tight_layout()
        save(fig, "training_curves.png")

    fig, axes = plt.subplots(len(devices), 1, figsize=(6, 1.8 * len(devices)), squeeze=False)
    for ax, (label, rec, true) in zip(axes[:, 0], devices):
        steps, Z = rec.shape
        xs = np.arange(steps * Z)
        ax.bar(xs - 0.2, rec.ravel(), width=0.4, label="recovered")
        ax.bar(xs + 0.2, true.ravel(), width=0.4, label="ground truth")
        ax.set_title(label, fontsize=8)
        ax.set_xticks(xs, [f"t{t}z{z}" for t in range(steps) for z in range(Z)], fontsize=6)
    axes[0, 0].legend(fontsize=6)
    fig.tight_layout()
    save(fig, "devices.png")
    print(f"wrote {out / 'log_loss.csv'} and figures", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="root random seed (default 0)")
    common.add_argument("--config", help="JSON file of option defaults; flags take precedence")
    common.add_argument("--out", help="output path (stdout when omitted, where applicable)")
    common.add_argument("--workers", type=int, default=1, help="worker threads (default 1)")

    def source(p):
        p.add_argument("--env", choices=envs.ENV_NAMES, help="bundled environment")
        p.add_argument("--model", help="model JSON file instead of --env")

    parser = argparse.ArgumentParser(prog="amfce", description="Correlated mean-field equilibria and imitation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("env", help="environment utilities")
    env_sub = p.add_subparsers(dest="env_command", required=True)
    p = env_sub.add_parser("export", parents=[common], help="write a bundled model as JSON")
    p.add_argument("name", choices=envs.ENV_NAMES, help="bundled environment to export")
    p.add_argument("--with-expert", action="store_true", help="also include the bundled expert policy and device")
    p.set_defaults(func=cmd_env_export)

    p = sub.add_parser("solve", parents=[common], help="damped best-response solver")
    source(p)
    p.add_argument("--device", help="uniform | dirac | expert | device JSON file (default expert)")
    p.add_argument("--init", help="initial policy JSON")
    p.add_argument("--max-iters", dest="max_iters", type=int, help="iteration cap (default 500)")
    p.add_argument("--damping", type=float, help="step size toward the best response (default 0.1)")
    p.add_argument("--tol", type=float, help="equilibrium tolerance (default 1e-6)")
    p.add_argument("--log", help="CSV of per-iteration max_gain")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", parents=[common], help="check the no-swap-deviation condition")
    source(p)
    p.add_argument("--policy", default="ground-truth",
                   help="ground-truth, a bundled alternate name (e.g. mfce), or a policy JSON file")
    p.add_argument("--device", help="uniform | dirac | expert | device JSON file")
    p.add_argument("--tol", type=float, default=1e-9, help="tolerance on the largest deviation gain (default 1e-9)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("demo", parents=[common], help="sample demonstrations as JSONL")
    source(p)
    p.add_argument("--policy", help="policy JSON file (default: bundled expert)")
    p.add_argument("--device", help="uniform | dirac | expert | device JSON file")
    p.add_argument("--n", type=int, help="number of trajectories (default 10000)")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("train", parents=[common], help="adversarial imitation training")
    source(p)
    p.add_argument("--demos", required=True, help="demonstrations JSONL")
    p.add_argument("--iters", type=int, help="training iterations (default 2000)")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="rollouts per iteration (default 256)")
    p.add_argument("--history", help="CSV of per-iteration training statistics")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="log loss, device error and bound checks of a checkpoint")
    p.add_argument("checkpoint", help="checkpoint JSON written by train")
    p.add_argument("--weighting", choices=("expert-visitation", "uniform"), default="expert-visitation",
                   help="log-loss weighting over (t, z, s) cells (default expert-visitation)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sig", parents=[common], help="signature features of a signal history")
    p.add_argument("--input", required=True, help="comma-separated signal indices, e.g. 0,1")
    p.add_argument("--dim", type=int, required=True, help="number of signals")
    p.add_argument("--depth", type=int, default=3, help="truncation depth (default 3)")
    p.set_defaults(func=cmd_sig)

    p = sub.add_parser("report", parents=[common], help="log-loss CSV and PNG figures from checkpoints")
    p.add_argument("checkpoints", nargs="+", help="checkpoint JSON files written by train")
    p.add_argument("--weighting", choices=("expert-visitation", "uniform"), default="expert-visitation",
                   help="log-loss weighting over (t, z, s) cells (default expert-visitation)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, *DOMAIN_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
