"""Command-line front door.

Machine-readable output (JSON or CSV) goes to stdout, human-readable notes to
stderr. ``check`` exits 0 on a clean grid, 3 when violations are found, and 1
on any error, so pipelines can distinguish findings from failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .constraints import read_constraint_config
from .detect import ALGORITHMS, detect
from .grid import (
    LikelihoodGrid,
    argmax_labels,
    read_label_grid,
    read_likelihood_grid,
    write_label_grid,
    write_likelihood_grid,
    write_mask,
)
from .loss import LossConfig, masked_loss_with_gradient, total_loss
from .metrics import evaluate
from .synth import SynthSpec, bench, generate

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATIONS = 3


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(obj) -> None:
    print(json.dumps(obj))


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("TOPO_THREADS", "1"))


def _load_config(path, conn_flag, ndim):
    cs, conn = read_constraint_config(path)
    if conn_flag is not None:
        conn = conn_flag if conn_flag == "box" else int(conn_flag)
    if conn is None:
        conn = {2: 8, 3: 26}[ndim]  # widest named connectivity per rank
    return cs, conn


def cmd_check(args) -> int:
    grid = read_label_grid(args.labels)
    cs, conn = _load_config(args.constraints, args.conn, grid.ndim)
    res = detect(grid, cs, conn, algorithm=args.algo, threads=_threads(args))
    if args.out:
        write_mask(res.mask, args.out)
    fg = res.foreground_count
    payload = {
        "violations": res.violation_count,
        "foreground": fg,
        "violations_percent": (100.0 * res.violation_count / fg) if fg else 0.0,
        "per_task": [
            {
                "ids_a": sorted(task.ids_a),
                "ids_c": sorted(task.ids_c),
                "d": task.d,
                "violations_a": va.popcount(),
                "violations_c": vc.popcount(),
            }
            for task, va, vc in res.per_task
        ],
    }
    _emit(payload)
    if not args.json:
        _say(f"{res.violation_count} critical site(s) out of {fg} foreground site(s)")
    return EXIT_VIOLATIONS if res.violation_count else EXIT_OK


def cmd_lossmask(args) -> int:
    f = read_likelihood_grid(args.likelihood)
    cs, conn = _load_config(args.constraints, args.conn, f.ndim)
    res = detect(argmax_labels(f), cs, conn, threads=_threads(args))
    if args.out:
        write_mask(res.mask, args.out)
    _emit({"violations": res.violation_count, "foreground": res.foreground_count})
    return EXIT_OK


def _require_normalized(f: LikelihoodGrid, where: str):
    sums = f.values.sum(axis=0, dtype=np.float64)
    err = float(np.abs(sums - 1.0).max())
    if err > 1e-5:
        raise ValueError(
            f"{where} requires a normalized likelihood map: per-site channel sums "
            f"must equal 1 within 1e-5 (worst deviation {err:.2e})"
        )


def cmd_loss(args) -> int:
    f = read_likelihood_grid(args.likelihood)
    gt = read_label_grid(args.gt)
    cs, conn = _load_config(args.constraints, args.conn, gt.ndim)
    want_grad = args.grad is not None
    if args.ti_only:
        if args.surrogate.upper() == "CE":
            _require_normalized(f, "the CE surrogate")
        res = detect(argmax_labels(f), cs, conn, threads=_threads(args))
        l_ti, grad = masked_loss_with_gradient(
            f, gt, res.mask, args.surrogate, want_gradient=want_grad
        )
        _emit({"l_ti": l_ti})
    else:
        _require_normalized(f, "the combined loss (cross-entropy term)")
        cfg = LossConfig(
            surrogate=args.surrogate,
            lambda_dice=args.lambda_dice,
            lambda_ti=args.lambda_ti,
        )
        report = total_loss(f, gt, cs, conn, cfg, want_gradient=want_grad)
        grad = report.gradient
        _emit(report.to_dict())
    if want_grad:
        write_likelihood_grid(LikelihoodGrid(grad), args.grad)
    return EXIT_OK


def cmd_metrics(args) -> int:
    pred = read_label_grid(args.pred)
    gt = read_label_grid(args.gt)
    cs, conn = _load_config(args.constraints, args.conn, gt.ndim)
    report = evaluate(pred, gt, cs, conn)
    _emit(report.to_flat_dict())
    return EXIT_OK


def cmd_gen(args) -> int:
    dims = tuple(int(x) for x in args.dims.split(","))
    spec = SynthSpec(
        ndim=len(dims),
        dims=dims,
        num_classes=args.classes,
        scenario=args.scenario,
        violation_count=args.violations,
        wall_thickness=args.wall,
        seed=args.seed,
    )
    grid, cs, planted = generate(spec)
    write_label_grid(grid, args.out)
    if args.config_out:
        from .constraints import format_constraint_config

        conn = "box" if args.box_conn else None
        with open(args.config_out, "w", encoding="utf-8") as fh:
            fh.write(format_constraint_config(cs, conn))
    _emit({"planted": [list(c) for c in planted], "dims": list(dims)})
    return EXIT_OK


def cmd_bench(args) -> int:
    report = bench(
        algorithms=args.algos.split(","),
        n_list=[int(x) for x in args.N.split(",")],
        k_list=[int(x) for x in args.k.split(",")],
        repeats=args.repeats,
        ndim=args.ndim,
        seed=args.seed,
        threads=_threads(args),
    )
    csv_text = report.to_csv()
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    _say(report.table())
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="topogrid",
        description="Detect topological-interaction violations in label grids, "
        "compute the masked interaction loss, and score segmentations.",
    )
    p.add_argument("--version", action="version", version=f"topogrid {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, constraints=True):
        if constraints:
            sp.add_argument("constraints", help="constraint config file")
            sp.add_argument("--conn", choices=["4", "8", "6", "26", "box"],
                            help="override the config's connectivity")
        sp.add_argument("--threads", type=int, default=None,
                        help="tiled detection threads (default: TOPO_THREADS or 1)")

    sp = sub.add_parser("check", help="detect critical sites in a label grid")
    sp.add_argument("labels", help="label grid (SEGV or P5 PGM)")
    common(sp)
    sp.add_argument("--algo", choices=ALGORITHMS, default="auto")
    sp.add_argument("--out", help="write the critical mask as SEGV")
    sp.add_argument("--json", action="store_true",
                    help="machine output only (suppress the stderr summary)")
    sp.set_defaults(fn=cmd_check)

    sp = sub.add_parser("lossmask", help="critical mask of a likelihood map's argmax")
    sp.add_argument("likelihood", help="likelihood grid (SEGV)")
    common(sp)
    sp.add_argument("--out", help="write the critical mask as SEGV")
    sp.set_defaults(fn=cmd_lossmask)

    sp = sub.add_parser("loss", help="combined loss report and optional gradient")
    sp.add_argument("likelihood", help="likelihood grid (SEGV)")
    sp.add_argument("gt", help="ground-truth label grid (SEGV)")
    common(sp)
    sp.add_argument("--surrogate", choices=["CE", "MSE", "DICE", "ce", "mse", "dice"],
                    default="CE")
    sp.add_argument("--lambda-dice", type=float, default=1.0)
    sp.add_argument("--lambda-ti", type=float, default=1e-4)
    sp.add_argument("--grad", help="write the gradient w.r.t. the likelihood as SEGV")
    sp.add_argument("--ti-only", action="store_true",
                    help="report only the interaction term; --grad then holds its "
                         "gradient alone")
    sp.set_defaults(fn=cmd_loss)

    sp = sub.add_parser("metrics", help="Dice/HD/ASSD per class plus violation percent")
    sp.add_argument("pred", help="predicted label grid (SEGV)")
    sp.add_argument("gt", help="ground-truth label grid (SEGV)")
    common(sp)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(fn=cmd_metrics)

    sp = sub.add_parser("gen", help="generate a synthetic labeled grid")
    sp.add_argument("--dims", required=True, help="comma-separated extents, e.g. 64,64")
    sp.add_argument("--classes", type=int, default=3)
    sp.add_argument("--scenario", choices=["nested_rings", "exclusion_blobs"],
                    default="nested_rings")
    sp.add_argument("--violations", type=int, default=0)
    sp.add_argument("--wall", type=int, default=1, help="wall/gap thickness")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output label grid (SEGV)")
    sp.add_argument("--config-out", help="also write the matching constraint config")
    sp.add_argument("--box-conn", action="store_true",
                    help="pin 'conn box' in the emitted config")
    sp.set_defaults(fn=cmd_gen)

    sp = sub.add_parser("bench", help="scaling benchmark across algorithms")
    sp.add_argument("--algos", default="naive,shifted,conv_direct,conv_fft")
    sp.add_argument("--N", default="128", help="comma-separated per-axis sizes")
    sp.add_argument("--k", default="3", help="comma-separated kernel extents (odd)")
    sp.add_argument("--repeats", type=int, default=3)
    sp.add_argument("--ndim", type=int, choices=[2, 3], default=2)
    sp.add_argument("--seed", type=int, default=2023)
    sp.add_argument("--csv", help="write CSV here instead of stdout")
    sp.add_argument("--threads", type=int, default=None)
    sp.set_defaults(fn=cmd_bench)

    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except BrokenPipeError:
        return EXIT_ERROR
    except Exception as e:  # argparse handles its own usage errors
        _say(f"error: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
