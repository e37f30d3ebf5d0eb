"""Command-line front end.

Every phase reads and writes plain files so the pipeline can be resumed at
any step::

    debloatkit mine wc.ir --category cli            -> wc.necked.ir, wc.neck.json
    debloatkit interpret-to-neck wc.necked.ir --arg -l  -> wc.state.json
    debloatkit convert wc.necked.ir --state wc.state.json -> wc.cc.ir, wc.ccplan.json
    debloatkit simplify wc.cc.ir --state wc.state.json  -> wc.debloated.ir
    debloatkit debloat wc.ir --arg -l               -> all of the above in one go
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis
from .constconv import StateMismatch, apply_conversion, plan_conversion
from .harness import diff_run, random_delayed_inputs, stats
from .interp import (
    DelayedInputBeforeNeck, Invocation, NeckNotReached, Trap, run_full, run_to_neck,
    state_from_json, state_to_json,
)
from .ir import IRError, IRSyntaxError, ResolutionError, parse_program, print_program, validate
from .neck_miner import NoAdmissibleCandidate, NoHeuristicMatch, mine_neck
from .pipeline import PipelineConfig, PipelineError, debloat_pipeline, report_json
from .simplify import run_simplify

log = logging.getLogger("debloatkit")

EXIT_OK, EXIT_DIFF_FAIL, EXIT_INPUT, EXIT_PHASE = 0, 1, 2, 3
PHASE_ERRORS = (PipelineError, NoHeuristicMatch, NoAdmissibleCandidate, NeckNotReached,
                DelayedInputBeforeNeck, StateMismatch, Trap, analysis.NoNeck)
STAGE_SUFFIXES = (".necked", ".cc", ".debloated")
VALUE_FLAGS = ("--arg",)


class InputError(Exception):
    pass


def stem_of(path) -> str:
    name = Path(path).name
    if name.endswith(".ir"):
        name = name[:-3]
    for suf in STAGE_SUFFIXES:
        if name.endswith(suf):
            name = name[: -len(suf)]
            break
    return name


def _out(args, src, suffix: str) -> Path:
    d = Path(args.out_dir) if args.out_dir else Path(src).resolve().parent
    d.mkdir(parents=True, exist_ok=True)
    return d / (stem_of(src) + suffix)


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_program(path, require_main: bool = True):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        prog = parse_program(text)
    except (IRSyntaxError, ResolutionError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    diags = validate(prog, require_main=require_main)
    if diags:
        raise InputError(f"{path}: " + "; ".join(str(d) for d in diags))
    return prog


def _read_bytes(path) -> bytes:
    if path is None:
        return b""
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _pipeline_config(args) -> PipelineConfig:
    if args.config:
        try:
            cfg = PipelineConfig.load(args.config)
        except (OSError, ValueError) as exc:
            raise InputError(f"bad config {args.config}: {exc}") from exc
    else:
        cfg = PipelineConfig()
    if getattr(args, "category", None):
        cfg.category = args.category
    if getattr(args, "parse_api", None):
        cfg.parse_apis = list(args.parse_api)
    if getattr(args, "arg", None) is not None:
        cfg.supplied_args = list(args.arg)
    if getattr(args, "step_budget", None):
        cfg.step_budget = args.step_budget
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "trials", None) is not None:
        cfg.trials = args.trials
    if getattr(args, "config_input", None):
        cfg.config_input = _read_bytes(args.config_input).decode("latin-1")
    return cfg


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        sys.stdout.write(_dump(payload))
    elif human:
        sys.stdout.write(human if human.endswith("\n") else human + "\n")


# -- subcommands -------------------------------------------------------------------

def cmd_mine(args) -> int:
    prog = load_program(args.program)
    cfg = _pipeline_config(args)
    necked, report = mine_neck(prog, cfg.miner())
    ir_path = _out(args, args.program, ".necked.ir")
    js_path = _out(args, args.program, ".neck.json")
    _write(ir_path, print_program(necked))
    _write(js_path, _dump(report.as_dict()))
    _emit(args, report.as_dict(),
          f"neck before instruction {report.chosen} (block {report.chosen_block} of @{report.function})")
    return EXIT_OK


def cmd_interpret(args) -> int:
    prog = load_program(args.program)
    cfg = _pipeline_config(args)
    st = run_to_neck(prog, cfg.supplied_args, cfg.config_input.encode("latin-1"), cfg.step_budget)
    data = state_to_json(st)
    _write(_out(args, args.program, ".state.json"), _dump(data))
    lines = [f"{e['name']}\t{e['type']}\t{json.dumps(e['value'], sort_keys=True)}" for e in data["entries"]]
    _emit(args, data, "\n".join(lines))
    return EXIT_OK


def _load_state(path):
    try:
        with open(path) as fh:
            return state_from_json(json.load(fh))
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"bad state file {path}: {exc}") from exc


def cmd_convert(args) -> int:
    prog = load_program(args.program)
    st = _load_state(args.state)
    plan = plan_conversion(prog, st)
    out = apply_conversion(prog, plan)
    _write(_out(args, args.program, ".cc.ir"), print_program(out))
    _write(_out(args, args.program, ".ccplan.json"), _dump(plan.as_dict()))
    _emit(args, plan.as_dict(),
          f"{len(plan.pre_neck)} pre-neck and {len(plan.post_neck)} post-neck rewrites, "
          f"{len(plan.skipped)} skipped")
    return EXIT_OK


def cmd_simplify(args) -> int:
    prog = load_program(args.program)
    visited = _load_state(args.state).visited_funcs if args.state else {"main"}
    out, reports = run_simplify(prog, visited)
    _write(_out(args, args.program, ".debloated.ir"), print_program(out))
    payload = {"passes": [r.as_dict() for r in reports], "sizeBefore": stats(prog).as_dict(),
               "sizeAfter": stats(out).as_dict()}
    _emit(args, payload, "\n".join(
        f"{r.pass_name}\tremovedInsts={r.removed_insts}\tremovedBlocks={r.removed_blocks}"
        f"\tremovedFuncs={r.removed_funcs}\tremovedGlobals={r.removed_globals}" for r in reports))
    return EXIT_OK


def cmd_debloat(args) -> int:
    from .plotting import plot_sizes, reduction_tsv

    prog = load_program(args.program)
    cfg = _pipeline_config(args)
    out, report = debloat_pipeline(prog, cfg)
    stem = stem_of(args.program)
    _write(_out(args, args.program, ".debloated.ir"), print_program(out))
    _write(_out(args, args.program, ".report.json"), report_json(report, {"config": cfg.to_json()}) + "\n")
    tsv = reduction_tsv(report.before, report.after)
    _write(_out(args, args.program, ".sizes.tsv"), tsv)
    if not args.no_plot:
        png = _out(args, args.program, ".sizes.png")
        plot_sizes([("original", report.before), ("debloated", report.after)], png,
                   title=f"{stem} {' '.join(cfg.supplied_args)}".strip())
        log.info("wrote %s", png)
    _emit(args, report.as_dict(), tsv)
    return EXIT_OK


def cmd_run(args) -> int:
    prog = load_program(args.program)
    cfg = _pipeline_config(args)
    stdin = _read_bytes(args.stdin) if args.stdin else b""
    inv = Invocation(tuple(cfg.supplied_args), stdin, cfg.config_input.encode("latin-1"), cfg.step_budget)
    res = run_full(prog, inv)
    if args.json:
        sys.stdout.write(_dump(res.as_dict()))
    else:
        sys.stdout.buffer.write(res.stdout)
        sys.stdout.flush()
        sys.stderr.write(f"\nexit status: {res.exit_status}\n")
    return EXIT_OK


def cmd_diff(args) -> int:
    orig = load_program(args.original)
    spec = load_program(args.specialized)
    cfg = _pipeline_config(args)
    exts = random_delayed_inputs(cfg.seed, cfg.trials, args.stdin_profile)
    rep = diff_run(orig, spec, cfg.supplied_args, exts, cfg.config_input.encode("latin-1"), cfg.step_budget)
    _write(_out(args, args.specialized, ".diff.json"), rep.to_json() + "\n")
    _emit(args, rep.as_dict(), f"{rep.verdict}: {len(rep.mismatches)} mismatches in {rep.trials} trials")
    return EXIT_OK if rep.verdict == "Pass" else EXIT_DIFF_FAIL


def cmd_stats(args) -> int:
    rows = []
    for path in args.programs:
        prog = load_program(path, require_main=False)
        rows.append((Path(path).name, stats(prog)))
        if args.dump_cfg:
            for f in prog.functions:
                sys.stdout.write(analysis.cfg_to_dot(f))
    from .plotting import plot_sizes, sizes_tsv

    if args.plot:
        plot_sizes(rows, args.plot)
        log.info("wrote %s", args.plot)
    _emit(args, {name: s.as_dict() for name, s in rows}, sizes_tsv(rows))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _add_common(sp, args=True, category=False):
    if args:
        sp.add_argument("--arg", action="append", metavar="A", help="supplied argument (repeatable)")
        sp.add_argument("--config-input", metavar="FILE", help="contents of the configuration stream")
        sp.add_argument("--step-budget", type=int, help="interpreter step limit")
    if category:
        sp.add_argument("--category", choices=["cli", "config"], help="program category")
        sp.add_argument("--parse-api", action="append", metavar="NAME",
                        help="configuration-parsing intrinsic (repeatable)")
    sp.add_argument("--out-dir", help="directory for output files (default: next to the input)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="debloatkit", description="Specialize IR programs to fixed arguments.")
    ap.add_argument("--config", help="JSON pipeline configuration")
    ap.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    ap.add_argument("--verbose", "-v", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("mine", help="find the neck and mark it")
    sp.add_argument("program")
    _add_common(sp, args=False, category=True)
    sp.set_defaults(func=cmd_mine)

    sp = sub.add_parser("interpret-to-neck", help="run the supplied arguments up to the neck")
    sp.add_argument("program")
    _add_common(sp)
    sp.set_defaults(func=cmd_interpret)

    sp = sub.add_parser("convert", help="apply a captured state as constants")
    sp.add_argument("program")
    sp.add_argument("--state", required=True)
    _add_common(sp, args=False)
    sp.set_defaults(func=cmd_convert)

    sp = sub.add_parser("simplify", help="fold, simplify the CFG and clean up")
    sp.add_argument("program")
    sp.add_argument("--state", help="state file providing the visited functions")
    _add_common(sp, args=False)
    sp.set_defaults(func=cmd_simplify)

    sp = sub.add_parser("debloat", help="run the whole pipeline")
    sp.add_argument("program")
    sp.add_argument("--no-plot", action="store_true", help="skip the size figure")
    _add_common(sp, category=True)
    sp.set_defaults(func=cmd_debloat)

    sp = sub.add_parser("run", help="execute a program")
    sp.add_argument("program")
    sp.add_argument("--stdin", metavar="FILE")
    _add_common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("diff", help="compare two programs on random delayed inputs")
    sp.add_argument("original")
    sp.add_argument("specialized")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--stdin-profile", choices=["text", "bytes"], default="text")
    _add_common(sp)
    sp.set_defaults(func=cmd_diff)

    sp = sub.add_parser("stats", help="IR size metrics as TSV")
    sp.add_argument("programs", nargs="+")
    sp.add_argument("--dump-cfg", action="store_true", help="print each function's CFG as DOT")
    sp.add_argument("--plot", metavar="PNG", help="also draw the metrics")
    sp.set_defaults(func=cmd_stats, out_dir=None)
    return ap


def _glue_values(argv: list[str]) -> list[str]:
    """Turn ``--arg -l`` into ``--arg=-l`` so dash-leading values survive argparse."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in VALUE_FLAGS:
            val = next(it, None)
            out.append(tok if val is None else f"{tok}={val}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = ap.parse_args(_glue_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (InputError, IRError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PHASE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHASE


if __name__ == "__main__":
    sys.exit(main())
