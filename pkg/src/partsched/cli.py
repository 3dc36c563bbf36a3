"""Command-line front door wiring the modules into reproducible pipelines.

Exit codes, stable for scripting: 0 success, 1 verification failure,
2 capacity, 3 input format, 4 invalid parameter, 5 arity mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import oracle, synth
from .errors import (
    ArityMismatchError,
    CapacityError,
    FormatError,
    InsufficientDataError,
    InvalidParameterError,
)
from .inference import DetectorModel, load_responses, run_grid, save_results_csv
from .likelihoods import fit_part_likelihood, load_likelihoods, read_sample_sets, save_likelihoods
from .policy import (
    BeliefGrid,
    CostParams,
    action_name,
    load_policy,
    query_policy,
    save_policy,
    train_policy,
)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CAPACITY = 2
EXIT_FORMAT = 3
EXIT_PARAMETER = 4
EXIT_ARITY = 5

VERIFY_TOLERANCE = 1e-6


def _dump_json(payload, out_path=None) -> None:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_fit(args) -> int:
    if args.bins < 2:
        raise InvalidParameterError(f"--bins must be >= 2, got {args.bins}")
    if args.bandwidth is not None and not args.bandwidth > 0:
        raise InvalidParameterError(f"--bandwidth must be positive, got {args.bandwidth}")
    sample_sets = read_sample_sets(args.samples)
    if not sample_sets:
        raise FormatError(f"{args.samples}: no samples found")
    for s in sample_sets:
        for name, arr in (("pos", s.positives), ("neg", s.negatives)):
            if arr.size < 2:
                raise InsufficientDataError(
                    f"part {s.part_id}: needs >= 2 '{name}' samples, got {arr.size}"
                )
    likelihoods = [fit_part_likelihood(s, bandwidth=args.bandwidth, n_bins=args.bins)
                   for s in sample_sets]
    save_likelihoods(likelihoods, args.out)
    for s, lik in zip(sample_sets, likelihoods):
        print(f"part {lik.part_id}: pos={s.positives.size} neg={s.negatives.size} "
              f"support=[{lik.pos.lo:.4g}, {lik.pos.hi:.4g}] bins={lik.pos.n_bins}")
    print(f"wrote {len(likelihoods)} part likelihoods to {args.out}")
    return EXIT_OK


def cmd_train_policy(args) -> int:
    likelihoods = load_likelihoods(args.likelihoods)
    costs = CostParams(args.lambda_fp, args.lambda_fn)
    grid = BeliefGrid(args.belief_bins)
    policy = train_policy(likelihoods, costs, grid)
    save_policy(policy, args.out)
    half = policy.grid.nearest_index(0.5)
    print(f"states={policy.n_states} belief_bins={policy.grid.d} "
          f"table_entries={policy.n_states * policy.grid.d}")
    print(f"V(empty, 0.5)={float(policy.values[0, half])!r} "
          f"initial_action={action_name(int(policy.actions[0, half]))}")
    print(f"wrote policy to {args.out}")
    return EXIT_OK


def cmd_infer(args) -> int:
    policy = load_policy(args.policy)
    likelihoods = load_likelihoods(args.likelihoods)
    provider = load_responses(args.responses)
    if len(likelihoods) != policy.n_parts:
        raise ArityMismatchError(f"likelihood file has {len(likelihoods)} parts, "
                                 f"policy has {policy.n_parts}")
    if provider.n_locations and provider.n_parts != policy.n_parts:
        raise ArityMismatchError(f"responses file has {provider.n_parts} parts, "
                                 f"policy has {policy.n_parts}")
    model = DetectorModel(bias=args.bias, likelihoods=tuple(likelihoods), costs=policy.costs)
    results, stats = run_grid(model, policy, provider)
    save_results_csv(results, args.out)
    rnpe = synth.compute_rnpe(stats, model.n_parts, stats.n_locations) if stats.n_locations else 0.0
    print(f"locations={stats.n_locations} non_root_evals={stats.non_root_evals} "
          f"rnpe={rnpe!r} positives={stats.n_positive} mean_tau={stats.mean_tau!r}")
    print(f"wrote results to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    policy = load_policy(args.policy)
    likelihoods = load_likelihoods(args.likelihoods)
    estimate = oracle.simulate_policy(policy, likelihoods, args.prior, policy.costs,
                                      args.trials, args.seed)
    _dump_json({
        "mean_cost": estimate.mean_cost,
        "std_error": estimate.std_error,
        "mean_tau": estimate.mean_tau,
        "fp_rate": estimate.fp_rate,
        "fn_rate": estimate.fn_rate,
        "trials": estimate.n_trials,
        "dp_value": float(policy.values[0, policy.grid.nearest_index(args.prior)]),
    }, args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    reports = []
    worst = 0.0
    failing_seed = None
    for seed in range(args.seeds):
        inst = oracle.random_tiny_instance(seed)
        policy = train_policy(inst.likelihoods, inst.costs, inst.grid)
        dp_row = policy.values[0].copy()
        if args.perturb_values:
            dp_row = dp_row + args.perturb_values
        oracle_row = oracle.exhaustive_value_row(inst)
        diff = float(np.max(np.abs(dp_row - oracle_row)))
        half = inst.grid.nearest_index(0.5)
        estimate = oracle.simulate_policy(policy, inst.likelihoods, 0.5, inst.costs,
                                          args.trials, seed)
        reports.append({
            "seed": seed,
            "optimal_value": float(oracle_row[half]),
            "dp_value": float(dp_row[half]),
            "abs_diff": diff,
            "trials": estimate.n_trials,
            "mean_cost": estimate.mean_cost,
            "std_error": estimate.std_error,
        })
        if diff > worst:
            worst = diff
            if diff > VERIFY_TOLERANCE and failing_seed is None:
                failing_seed = seed
    passed = worst <= VERIFY_TOLERANCE
    _dump_json({"seeds": reports, "max_abs_diff": worst,
                "tolerance": VERIFY_TOLERANCE, "passed": passed}, args.out)
    if not passed:
        print(f"verification FAILED at seed {failing_seed}: "
              f"max |dp - exhaustive| = {worst!r} > {VERIFY_TOLERANCE!r}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    print(f"verified {args.seeds} instances: max |dp - exhaustive| = {worst!r}")
    return EXIT_OK


def _parse_lambda_grid(text: str) -> list[tuple[float, float]]:
    points = []
    try:
        for token in text.split(";"):
            token = token.strip()
            if not token:
                continue
            fp, fn = token.split(",")
            points.append((float(fp), float(fn)))
    except ValueError as exc:
        raise InvalidParameterError(f"bad lambda grid {text!r}; "
                                    "expected 'fp,fn;fp,fn;...'") from exc
    if not points:
        raise InvalidParameterError("lambda grid is empty")
    return points


def _load_spec(path) -> synth.SyntheticSpec:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: not a valid spec file: {exc}") from exc
    if not isinstance(payload, dict):
        raise FormatError(f"{path}: spec must be a JSON object")
    known = {"n_parts", "separation", "prior_positive", "n_locations", "seed",
             "informativeness_profile", "train_samples"}
    unknown = set(payload) - known
    if unknown:
        raise FormatError(f"{path}: unknown spec fields {sorted(unknown)}")
    try:
        if payload.get("informativeness_profile") is not None:
            payload["informativeness_profile"] = tuple(payload["informativeness_profile"])
        return synth.SyntheticSpec(**payload)
    except TypeError as exc:
        raise FormatError(f"{path}: incomplete spec: {exc}") from exc


def cmd_sweep(args) -> int:
    spec = _load_spec(args.spec)
    points = _parse_lambda_grid(args.grid)
    grid = BeliefGrid(args.belief_bins)
    result = synth.lambda_sweep(spec, points, grid, threads=args.threads)
    synth.save_sweep_csv(result, args.out)
    meta = {
        "spec": {
            "n_parts": spec.n_parts,
            "separation": spec.separation,
            "prior_positive": spec.prior_positive,
            "n_locations": spec.n_locations,
            "seed": spec.seed,
            "informativeness_profile": (list(spec.informativeness_profile)
                                        if spec.informativeness_profile else None),
            "train_samples": spec.train_samples,
        },
        "grid": [[fp, fn] for fp, fn in points],
        "belief_bins": grid.d,
        "failures": [[fp, fn, msg] for fp, fn, msg in result.failures],
    }
    Path(str(args.out) + ".meta.json").write_text(
        json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
    diag = result.diagonal_diagnostics()
    if len(diag["lambdas"]) > 1:
        print(f"diagonal: error_nonincreasing={diag['error_nonincreasing']} "
              f"rnpe_nonincreasing={diag['rnpe_nonincreasing']}")
    print(f"wrote {len(result.rows)} rows to {args.out} "
          f"({len(result.failures)} failures)")
    return EXIT_OK


def cmd_inspect(args) -> int:
    policy = load_policy(args.policy)
    half = policy.grid.nearest_index(0.5)
    print(f"n_parts={policy.n_parts} belief_bins={policy.grid.d} "
          f"lambda_fp={policy.costs.lambda_fp!r} lambda_fn={policy.costs.lambda_fn!r}")
    print(f"V(empty, 0.5)={float(policy.values[0, half])!r}")
    print(f"initial action at p=0.5: {action_name(query_policy(policy, 0, 0.5))}")
    if policy.n_states <= 64:
        for mask in range(policy.n_states):
            row = policy.actions[mask]
            summary = {}
            for a in row:
                name = action_name(int(a))
                summary[name] = summary.get(name, 0) + 1
            bits = format(mask, f"0{policy.n_parts}b")
            at_half = action_name(int(row[half]))
            print(f"mask {bits}: at p=0.5 -> {at_half}; "
                  + " ".join(f"{k}={v}" for k, v in sorted(summary.items())))
    else:
        for used in range(policy.n_parts + 1):
            masks = [m for m in range(policy.n_states) if m.bit_count() == used]
            rows = policy.actions[masks]
            n_label = int((rows <= 1).sum())
            n_part = int(rows.size - n_label)
            mean_v = float(policy.values[masks, half].mean())
            print(f"stage used={used}: masks={len(masks)} label_entries={n_label} "
                  f"part_entries={n_part} mean_V(p=0.5)={mean_v:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partsched",
        description="Learn score likelihoods, train part-selection policies, and run "
                    "sequential inference for additive-score part-based classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit per-part likelihoods from a samples CSV")
    p.add_argument("--samples", required=True, help="CSV with header part_id,label,score")
    p.add_argument("--out", required=True, help="output likelihoods JSON")
    p.add_argument("--bins", type=int, default=201, help="histogram bins per pdf")
    p.add_argument("--bandwidth", type=float, default=None,
                   help="fixed KDE bandwidth (default: rule of thumb)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("train-policy", help="train the order-and-stop policy tables")
    p.add_argument("--likelihoods", required=True)
    p.add_argument("--lambda-fp", type=float, required=True, help="false-positive cost")
    p.add_argument("--lambda-fn", type=float, required=True, help="false-negative cost")
    p.add_argument("--belief-bins", type=int, default=101)
    p.add_argument("--out", required=True, help="output policy file")
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("infer", help="run sequential inference over a responses file")
    p.add_argument("--policy", required=True)
    p.add_argument("--likelihoods", required=True)
    p.add_argument("--responses", required=True,
                   help=".csv (location_id,part_id,score) or binary matrix file")
    p.add_argument("--bias", type=float, default=0.0, help="additive score bias")
    p.add_argument("--out", required=True, help="output results CSV")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("simulate", help="Monte Carlo cost estimate of a trained policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--likelihoods", required=True)
    p.add_argument("--prior", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write report JSON here instead of stdout")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="certify the trained tables against exhaustive enumeration")
    p.add_argument("--seeds", type=int, default=20, help="number of seeded tiny instances")
    p.add_argument("--trials", type=int, default=20000, help="Monte Carlo trials per instance")
    p.add_argument("--perturb-values", type=float, default=0.0,
                   help="fault-injection offset added to the trained values (test hook)")
    p.add_argument("--out", default=None, help="write report JSON here instead of stdout")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="train and evaluate a grid of cost points on a synthetic spec")
    p.add_argument("--spec", required=True, help="synthetic spec JSON")
    p.add_argument("--grid", required=True, help="semicolon-separated fp,fn pairs, e.g. '4,4;8,4'")
    p.add_argument("--belief-bins", type=int, default=101)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="parallel sweep rows; 1 guarantees bit-reproducible output")
    p.add_argument("--out", required=True, help="output sweep CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect", help="human-readable dump of a policy file")
    p.add_argument("--policy", required=True)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (FormatError, InsufficientDataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ArityMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARITY
    except InvalidParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER


if __name__ == "__main__":
    sys.exit(main())
