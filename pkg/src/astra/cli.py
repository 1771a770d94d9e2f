"""Command-line entry point.

Exit codes: 0 ok, 1 verification tolerance exceeded, 2 usage error,
3 format error (including a missing input file), 4 degenerate lattice.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np

from . import gradcheck, toy
from .consistency import PointwiseLoss, build_weight_grid, consistency_losses
from .ctc import CtcGrid, ctc_state_posteriors
from .errors import AstraError, FormatError, UsageError
from .instances import random_ctc, random_grid, random_weights
from .oracle import ctc_oracle, oracle_losses
from .rnnt import LogProbGrid, rnnt_backward
from .tensor import Rng, dumps, load_json, parse_matrix, write_tensor_json

ORACLE_TOL = 1e-9
GRAD_TOL = 1e-5
TOY_GRAD_TOL = 1e-4


def _emit(doc: dict, output: str | None) -> None:
    if output:
        write_tensor_json(output, doc)
    else:
        sys.stdout.write(dumps(doc, indent=1) + "\n")


def _require(doc: dict, key: str, path: str) -> np.ndarray:
    if key not in doc:
        raise FormatError(f"{path}: missing key {key!r}")
    return parse_matrix(doc[key], key)


def _load_grid(doc: dict, path: str) -> LogProbGrid:
    blank = _require(doc, "blank_lp", path)
    emit = _require(doc, "emit_lp", path)
    try:
        return LogProbGrid(blank, emit)
    except UsageError as e:
        raise FormatError(f"{path}: {e}") from None


def cmd_rnnt(args) -> int:
    res = rnnt_backward(_load_grid(load_json(args.input), args.input))
    _emit({"log_prob": res.value, "emit_marginals": res.emit_marginals, "blank_marginals": res.blank_marginals}, args.output)
    return 0


def cmd_astra(args) -> int:
    doc = load_json(args.input)
    grid = _load_grid(doc, args.input)
    speech = _require(doc, "speech_emb", args.input)
    text = _require(doc, "text_emb", args.input)
    try:
        w = build_weight_grid(speech, text, args.pointwise)
        if w.shape != (grid.T, grid.U):
            raise UsageError(f"embeddings give a {w.shape} weight grid but the lattice is {(grid.T, grid.U)}")
    except UsageError as e:
        raise FormatError(f"{args.input}: {e}") from None
    _emit(consistency_losses(grid, w).to_json(), args.output)
    return 0


def cmd_ctc(args) -> int:
    doc = load_json(args.input)
    lp = _require(doc, "ctc_lp", args.input)
    labels = doc.get("labels")
    if not isinstance(labels, list):
        raise FormatError(f"{args.input}: missing or non-list key 'labels'")
    try:
        grid = CtcGrid.from_labels(lp, labels)
        if grid.U != len(labels):
            raise UsageError(f"ctc_lp has {lp.shape[1]} columns, expected {2 * len(labels) + 1}")
        w = parse_matrix(doc["w"], "w") if "w" in doc else None
        if w is not None and w.shape != (grid.T, grid.U):
            raise UsageError(f"w must have shape {(grid.T, grid.U)}, got {w.shape}")
    except UsageError as e:
        raise FormatError(f"{args.input}: {e}") from None
    value, post = ctc_state_posteriors(grid)
    out = {"log_prob": value, "state_posteriors": post}
    if w is not None:
        wvalue, wpost = ctc_state_posteriors(grid, w)
        out["weighted_log_prob"] = wvalue
        out["weighted_state_posteriors"] = wpost
    _emit(out, args.output)
    return 0


def cmd_gradcheck(args) -> int:
    report = gradcheck.run_suites(args.trials, args.seed)
    lattice = max(v for k, v in report.items() if k != "toy_chain")
    ok = lattice < GRAD_TOL and report["toy_chain"] < TOY_GRAD_TOL
    print(dumps({"trials": args.trials, "seed": args.seed, "max_rel_err": lattice, **report}))
    return 0 if ok else 1


def oracle_check(max_t: int, max_u: int, trials: int, seed: int) -> dict:
    rng = Rng(seed)
    worst_rnnt = 0.0
    worst_ctc = 0.0
    for _ in range(trials):
        T = rng.integers(1, max_t + 1)
        U = rng.integers(0, max_u + 1)
        grid = random_grid(rng, T, U)
        w = random_weights(rng, T, U)
        got = consistency_losses(grid, w)
        ref = oracle_losses(grid, w)
        worst_rnnt = max(
            worst_rnnt,
            abs(got.log_z - ref.log_z),
            abs(got.log_zw - ref.log_zw),
            abs(got.l_c_exact - ref.l_c_exact),
            abs(got.l_hat_norm - ref.l_hat_norm),
        )
        cU = min(U, T)
        cgrid, labels = random_ctc(rng, T, cU)
        cw = random_weights(rng, T, cU)
        ref_plain = ctc_oracle(T, labels, cgrid.log_probs)
        if ref_plain != float("-inf"):
            v, _ = ctc_state_posteriors(cgrid)
            vw, _ = ctc_state_posteriors(cgrid, cw)
            worst_ctc = max(worst_ctc, abs(v - ref_plain), abs(vw - ctc_oracle(T, labels, cgrid.log_probs, cw)))
    return {
        "trials": trials,
        "seed": seed,
        "max_abs_discrepancy": max(worst_rnnt, worst_ctc),
        "rnnt": worst_rnnt,
        "ctc": worst_ctc,
    }


def cmd_oracle_check(args) -> int:
    if args.max_t < 1 or args.max_u < 0:
        raise UsageError("--max-t must be >= 1 and --max-u >= 0")
    report = oracle_check(args.max_t, args.max_u, args.trials, args.seed)
    print(dumps(report))
    return 0 if report["max_abs_discrepancy"] < ORACLE_TOL else 1


def _train_config(args) -> toy.TrainConfig:
    return toy.TrainConfig(
        seed=args.seed,
        steps=args.steps,
        learning_rate=args.lr,
        lambda_consistency=args.lam,
        lambda_text=args.lambda_text,
        pointwise=args.pointwise,
        text_mask_prob=args.mask_prob,
        enable_consistency=args.lam > 0,
        enable_text_branch=args.text_branch,
        text_source=args.text_source,
    )


def cmd_train_toy(args) -> int:
    cfg = _train_config(args)
    train_set, test_set = toy.make_splits(cfg)
    sink = open(args.metrics, "w") if args.metrics and args.metrics != "-" else (sys.stdout if args.metrics == "-" else None)
    keys = ("rnnt_loss", "l_hat_norm", "l_c_exact", "text_loss")

    def on_step(step: int, m: dict) -> None:
        if sink is not None:
            record = {"step": step, **{k: m.get(k) for k in keys}}
            if m.get("skipped"):
                record["skipped"] = True
            sink.write(dumps(record) + "\n")

    try:
        params = toy.train(cfg, train_set, on_step)
    finally:
        if sink is not None and sink is not sys.stdout:
            sink.close()
    if args.save_params:
        write_tensor_json(args.save_params, toy.params_to_json(params))
    ter, mean_l_c = toy.evaluate(params, test_set, cfg.pointwise)
    print(dumps({"ter": ter, "mean_l_c": mean_l_c}))
    return 0


def cmd_eval_toy(args) -> int:
    cfg = _train_config(args)
    train_set, test_set = toy.make_splits(cfg)
    if args.params:
        params = toy.params_from_json(load_json(args.params))
    else:
        params = toy.train(cfg, train_set)
    ter, mean_l_c = toy.evaluate(params, test_set, cfg.pointwise)
    print(dumps({"ter": ter, "mean_l_c": mean_l_c}))
    return 0


def _add_toy_flags(p: argparse.ArgumentParser) -> None:
    d = toy.TrainConfig()
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--steps", type=int, default=d.steps)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lambda_consistency, help="consistency weight")
    p.add_argument("--lambda-text", type=float, default=d.lambda_text)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--text-branch", action=argparse.BooleanOptionalAction, default=d.enable_text_branch)
    p.add_argument("--text-source", choices=["paired", "unpaired"], default=d.text_source)
    p.add_argument("--mask-prob", type=float, default=d.text_mask_prob)
    p.add_argument("--pointwise", choices=[k.value for k in PointwiseLoss], default=d.pointwise.value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="astra", description="Weighted RNNT consistency losses and checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rnnt", help="full-sum RNNT log-likelihood and edge posteriors")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_rnnt)

    p = sub.add_parser("astra", help="consistency losses on a lattice plus embeddings")
    p.add_argument("--input", required=True)
    p.add_argument("--pointwise", choices=[k.value for k in PointwiseLoss], default="mae")
    p.add_argument("--output")
    p.set_defaults(func=cmd_astra)

    p = sub.add_parser("ctc", help="CTC forward values and state posteriors")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_ctc)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("oracle-check", help="lattice vs brute-force enumeration")
    p.add_argument("--max-t", type=int, default=6)
    p.add_argument("--max-u", type=int, default=4)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("train-toy", help="train the toy model; metrics as JSON lines")
    _add_toy_flags(p)
    p.add_argument("--metrics", help="JSON-lines metrics path ('-' for stdout)")
    p.add_argument("--save-params")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval-toy", help="TER and mean consistency loss on the toy test split")
    _add_toy_flags(p)
    p.add_argument("--params", help="parameters saved by train-toy; trains from scratch when omitted")
    p.set_defaults(func=cmd_eval_toy)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except AstraError as e:
        print(f"astra {args.command}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"astra {args.command}: {e}", file=sys.stderr)
        return FormatError.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
