"""Command-line runner: solve, verify-series, walk-check, generate, sweep."""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .approx import CertificationError, chebyshev_series, fourier_grid
from .problem import MAX_GENERATED_DIM, InstanceError, generate_random_instance, load_instance
from .simcore import apply_chebyshev, build_walk, walk_power_block_check

SUMMARY_COLUMNS = ["method", "n", "d", "kappa", "epsilon", "seed", "error", "pa_queries", "pb_uses",
                   "walk_steps", "evolution_uses", "evolution_time_total", "aa_rounds", "p_succ",
                   "t_avg", "predicted_cost"]
LEDGER_KEYS = ["pa_queries", "pb_uses", "walk_steps", "evolution_uses", "evolution_time_total", "aa_rounds"]


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def result_record(result) -> dict:
    """JSON-ready result: x_tilde as [re, im] pairs plus the solver report."""
    report = dict(result.report)
    ledger = report.pop("ledger")
    record = {"x_tilde": [[float(z.real), float(z.imag)] for z in result.x_tilde],
              "error_vs_truth": report.pop("error_vs_truth"),
              "success_prob": report.pop("success_prob"),
              "ledger": ledger}
    record.update(report)
    return _jsonable(record)


def _dump(data, path: Path | None) -> None:
    text = json.dumps(data, indent=1, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def cmd_solve(args) -> int:
    from .solver import solve

    instance = load_instance(args.instance)
    kwargs = {} if args.method == "vtaa" else {"policy": args.policy, "seed": args.seed}
    result = solve(instance, args.method, args.epsilon, **kwargs)
    _dump(result_record(result), Path(args.out) if args.out else None)
    return 0 if result.report["error_vs_truth"] <= args.epsilon else 1


def cmd_verify_series(args) -> int:
    writer = csv.writer(sys.stdout)
    writer.writerow(["method", "kappa", "epsilon", "max_error", "alpha", "certified"])
    ok = True
    records = []
    methods = ["fourier", "chebyshev"] if args.method == "both" else [args.method]
    for method, kappa, eps in itertools.product(methods, args.kappa, args.epsilon):
        build = fourier_grid if method == "fourier" else chebyshev_series
        try:
            series = build(kappa, eps, scan_points=args.points)
        except CertificationError as exc:
            ok = False
            writer.writerow([method, kappa, eps, str(exc), "", False])
            records.append({"method": method, "kappa": kappa, "epsilon": eps, "certified": False})
            continue
        writer.writerow([method, kappa, eps, f"{series.max_error:.3e}", f"{series.alpha:.6g}", True])
        records.append({"method": method, "parameters": series.parameters(), "alpha": series.alpha,
                        "max_error": series.max_error, "scan_points": series.scan_points, "certified": True})
    if args.out:
        _dump(_jsonable(records), Path(args.out))
    return 0 if ok else 1


def cmd_walk_check(args) -> int:
    if args.instance:
        instance = load_instance(args.instance)
    else:
        instance = generate_random_instance(args.n, args.d, args.kappa, args.seed)
    walk = build_walk(instance)
    rng = np.random.default_rng(args.seed)
    psi = rng.normal(size=instance.n) + 1j * rng.normal(size=instance.n)
    psi /= np.linalg.norm(psi)
    moments = walk.moments(psi, args.max_order)
    writer = csv.writer(sys.stdout)
    writer.writerow(["order", "block_error", "apply_error"])
    worst = 0.0
    for n in range(1, args.max_order + 1):
        block = walk_power_block_check(walk, n)
        apply = float(np.linalg.norm(apply_chebyshev(walk, n, psi).amps - moments[n]))
        worst = max(worst, block, apply)
        writer.writerow([n, f"{block:.3e}", f"{apply:.3e}"])
    return 0 if worst <= args.tol else 1


def cmd_generate(args) -> int:
    if args.n > MAX_GENERATED_DIM:
        raise InstanceError(f"n={args.n} exceeds the generator limit {MAX_GENERATED_DIM}")
    instance = generate_random_instance(args.n, args.d, args.kappa, args.seed)
    instance.save(args.out)
    return 0


def sweep_cells(config: dict) -> list[dict]:
    """Expand a sweep config into cells (method x instance x epsilon x seed)."""
    methods = config.get("methods", [])
    epsilons = config.get("epsilons", [])
    seeds = config.get("seeds", [0])
    cells = []
    if "instances" in config:
        for method, path, eps, seed in itertools.product(methods, config["instances"], epsilons, seeds):
            cells.append({"method": method, "instance": str(path), "epsilon": eps, "seed": seed})
    else:
        n, d = config.get("n", 16), config.get("d", 4)
        for method, kappa, eps, seed in itertools.product(methods, config.get("kappas", []), epsilons, seeds):
            cells.append({"method": method, "n": n, "d": d, "kappa": kappa, "epsilon": eps, "seed": seed})
    policy = config.get("policy", "postselect-exact")
    for i, cell in enumerate(cells):
        cell["policy"] = policy
        cell["name"] = f"cell{i:04d}"
    return cells


def run_cell(cell: dict) -> tuple[dict, dict | None]:
    """Solve one cell; returns its summary row and result record (None on failure)."""
    from .solver import solve

    row = {key: "" for key in SUMMARY_COLUMNS}
    row.update(method=cell["method"], epsilon=cell["epsilon"], seed=cell["seed"])
    try:
        if "instance" in cell:
            instance = load_instance(cell["instance"])
        else:
            instance = generate_random_instance(cell["n"], cell["d"], float(cell["kappa"]), cell["seed"])
        row.update(n=instance.n, d=instance.d, kappa=instance.kappa)
        kwargs = {} if cell["method"] == "vtaa" else {"policy": cell["policy"], "seed": cell["seed"]}
        record = result_record(solve(instance, cell["method"], cell["epsilon"], **kwargs))
    except (InstanceError, CertificationError, ArithmeticError, RuntimeError, ValueError, OverflowError) as exc:
        row["error"] = f"failed: {type(exc).__name__}: {exc}"
        return row, None
    row["error"] = record["error_vs_truth"]
    row.update({key: record["ledger"][key] for key in LEDGER_KEYS})
    row["p_succ"] = record.get("p_succ", record["success_prob"])
    row["t_avg"] = record.get("t_avg", "")
    row["predicted_cost"] = record.get("predicted_cost", "")
    return row, record


def run_sweep(config: dict, out_dir: Path, jobs: int = 1) -> bool:
    """Run every cell, write one JSON per cell and summary.csv; True iff all succeed."""
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = sweep_cells(config)
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_cell, cells))
    else:
        outcomes = [run_cell(cell) for cell in cells]
    ok = True
    for cell, (row, record) in zip(cells, outcomes):
        if record is None:
            ok = False
            continue
        _dump({"cell": cell, "result": record}, out_dir / f"{cell['name']}.json")
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        writer.writerows(row for row, _ in outcomes)
    return ok


def cmd_sweep(args) -> int:
    config = json.loads(Path(args.config).read_text())
    start = time.perf_counter()
    ok = run_sweep(config, Path(args.out), args.jobs)
    print(f"sweep finished in {time.perf_counter() - start:.1f}s; results in {args.out}", file=sys.stderr)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlsp", description="Simulated quantum linear-system solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance file")
    p.add_argument("--method", choices=["fourier", "chebyshev", "vtaa"], default="chebyshev")
    p.add_argument("--instance", required=True)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--policy", choices=["sample", "amplify", "postselect-exact"], default="postselect-exact")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify-series", help="certify the 1/x approximations on a dense scan")
    p.add_argument("--method", "--kind", dest="method", choices=["fourier", "chebyshev", "both"], default="both")
    p.add_argument("--kappa", type=float, nargs="+", default=[2, 4, 8, 16])
    p.add_argument("--epsilon", type=float, nargs="+", default=[1e-2, 1e-4, 1e-6])
    p.add_argument("--points", type=int, default=10_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_series)

    p = sub.add_parser("walk-check", help="check walk powers against Chebyshev polynomials (CSV)")
    p.add_argument("--instance")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--kappa", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-order", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_walk_check)

    p = sub.add_parser("generate", help="write a random instance file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sweep", help="run a JSON-configured sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InstanceError, CertificationError, OSError) as exc:
        print(f"qlsp: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
