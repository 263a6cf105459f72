"""Command-line entry point: ``run``, ``selftest`` and ``report``.

Exit codes: 0 success, 1 runtime or property failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from hypknowe.c2f.metrics import SchemaError, from_json_dict, session_rows, summary, to_csv, to_json
from hypknowe.c2f.protocol import run_protocol
from hypknowe.config import ExperimentConfig, load_config
from hypknowe.data import generate_hierarchy, schedule_sessions
from hypknowe.errors import HypKnoweError, InvalidConfigError
from hypknowe.selftest import DEFAULT_CURVATURES, run_suite

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
REPORT_TOL = 1e-9

log = logging.getLogger("hypknowe")


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"must be a positive finite number, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypknowe", description="Hyperbolic coarse-to-fine few-shot class-incremental experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train and evaluate every session of a configured experiment")
    run.add_argument("--config", required=True, help="JSON experiment config")
    run.add_argument("--seed", type=int, help="override the config's run seed")
    run.add_argument("--out", help="override the config's output directory")

    st = sub.add_parser("selftest", help="check geometry, statistics and gradient properties")
    st.add_argument("--curvature", type=_positive_float, help="run the suite at this curvature only")
    st.add_argument("--tol", type=_positive_float, default=1.0, help="multiplier applied to every property tolerance")
    st.add_argument("--seed", type=int, default=0)

    rep = sub.add_parser("report", help="recompute and check the metrics stored in a history file")
    rep.add_argument("history", help="history.json written by 'run'")
    return parser


# --- run ------------------------------------------------------------------------


def _write_atomic(files: dict[Path, str]) -> None:
    """Write every file to a temp sibling first, then rename them all into place."""
    staged = []
    try:
        for path, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.4f}"


def format_table(rows: list[dict]) -> str:
    head = f"{'session':>7} {'coarse':>8} {'fine':>8} {'total':>8} {'avg':>8} {'F_fine':>8} {'F_coarse':>8}"
    lines = [head]
    for r in rows:
        lines.append(
            f"{r['session']:>7d} {_fmt(r['acc_coarse']):>8} {_fmt(r['acc_fine']):>8} {_fmt(r['acc_total']):>8} "
            f"{_fmt(r['avg_acc']):>8} {_fmt(r['f_fine']):>8} {_fmt(r['f_coarse']):>8}"
        )
    return "\n".join(lines)


def format_summary(s: dict) -> str:
    return (
        f"A_coarse^0={_fmt(s['acc_coarse_0'])}  A_fine^T={_fmt(s['acc_fine_T'])}  "
        f"avg_acc={_fmt(s['avg_acc'])}  forgetting={_fmt(s['forgetting'])}"
    )


def execute(cfg: ExperimentConfig):
    """Run one experiment and return its RunHistory with the config attached."""
    ds = generate_hierarchy(cfg.hierarchy)
    P = cfg.protocol
    schedule = schedule_sessions(ds.fine, P.way, P.shot, P.query, cfg.seed)
    ball = cfg.ball()
    result = run_protocol(ds, schedule, ball, cfg.learning, cfg.augment, cfg.seed)
    history = result.history
    history.extra = {
        "config": cfg.to_dict(),
        "curvature": ball.curvature,
        "base_loss_first": result.base.epoch_losses[0],
        "base_loss_last": result.base.epoch_losses[-1],
    }
    return history


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, output=args.out)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        history = execute(cfg)
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        _write_atomic({out / "history.json": to_json(history), out / "history.csv": to_csv(history)})
    except (HypKnoweError, ArithmeticError, OSError) as exc:
        print(f"error: run failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    print(f"curvature c={cfg.resolved_curvature():.6g}  hyperbolic={cfg.hyperbolic}  augment={cfg.augment}  seed={cfg.seed}")
    print(format_table(session_rows(history)))
    print(format_summary(summary(history)))
    print(f"wrote {out / 'history.json'} and {out / 'history.csv'}")
    return EXIT_OK


# --- selftest ---------------------------------------------------------------------


def cmd_selftest(args) -> int:
    curvatures = (args.curvature,) if args.curvature is not None else DEFAULT_CURVATURES
    results = run_suite(curvatures, args.tol, args.seed)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties passed")
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_FAILURE
    return EXIT_OK


# --- report -----------------------------------------------------------------------


def _stored(doc, *path):
    cur = doc
    where = ""
    for key in path:
        where = f"{where}[{key}]" if isinstance(key, int) else (f"{where}.{key}" if where else key)
        if isinstance(key, int):
            if not isinstance(cur, list) or key >= len(cur):
                raise SchemaError(where)
        elif not isinstance(cur, dict) or key not in cur:
            raise SchemaError(where)
        cur = cur[key]
    if cur is not None and (isinstance(cur, bool) or not isinstance(cur, (int, float))):
        raise SchemaError(where, "expected a number or null")
    return cur


def _mismatch(stored, fresh) -> bool:
    if stored is None or fresh is None:
        return stored is not fresh
    return abs(stored - fresh) > REPORT_TOL


def cmd_report(args) -> int:
    try:
        doc = json.loads(Path(args.history).read_text())
    except OSError as exc:
        print(f"error: cannot read history: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        history = from_json_dict(doc)
        rows = session_rows(history)
        summ = summary(history)
        stale = []
        for i, row in enumerate(rows):
            for key in ("avg_acc", "f_fine", "f_coarse"):
                if _mismatch(_stored(doc, "sessions", i, key), row[key]):
                    stale.append(f"sessions[{i}].{key}")
        for key in ("avg_acc", "forgetting"):
            if _mismatch(_stored(doc, "summary", key), summ[key]):
                stale.append(f"summary.{key}")
    except InvalidConfigError as exc:
        print(f"error: schema mismatch: {exc}", file=sys.stderr)
        return EXIT_USAGE

    print(format_table(rows))
    print(format_summary(summ))
    if stale:
        print("stale values (stored differs from recomputed by more than 1e-9): " + ", ".join(stale))
        return EXIT_FAILURE
    print("stored metrics match recomputed values")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    handler = {"run": cmd_run, "selftest": cmd_selftest, "report": cmd_report}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
