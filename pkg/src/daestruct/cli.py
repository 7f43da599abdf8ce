"""Command-line front end.

    daestruct analyze MODEL [--format text|json] [--stages a..b]
    daestruct solve MODEL --order K [--init FILE] [--scheme block|basic]
                          [--format text|json] [--tol X]

Exit codes: 0 success, 2 parse or validation error, 3 structurally ill
posed, 4 executor failure (singular Jacobian, divergence), 5 missing
initialization entries.

The init file has one entry per line: `NAME ORDER VALUE` supplies an
initial value, `guess NAME ORDER VALUE` an initial guess; `#` comments.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import scheme as _scheme
from .analysis import Analysis, analyze
from .codelist import DaeModel, ModelError
from .executor import (
    ExecutorError,
    MissingInitialization,
    solve_to_order,
)
from .parser import parse_model
from .scheme import Schedule
from .sigma import StructurallyIllPosed

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ILL_POSED = 3
EXIT_EXECUTOR = 4
EXIT_MISSING_INIT = 5


# -- derivative-order display ------------------------------------------


def _order_groups(pairs, names):
    """Human form of a set of (variable, order) pairs.

    Contiguous runs from order 0 collapse to name^(<=r); isolated orders
    are listed as name^(r); order 0 alone is the bare name.
    """
    by_var: dict[int, list[int]] = {}
    for j, r in pairs:
        by_var.setdefault(j, []).append(r)
    out = []
    for j in sorted(by_var):
        orders = sorted(by_var[j])
        name = names[j]
        if orders == list(range(len(orders))):
            top = orders[-1]
            if top == 0:
                out.append(name)
            elif top == 1 and len(orders) == 2:
                out.append("%s^(<=1)" % name)
            else:
                out.append("%s^(<=%d)" % (name, top))
        else:
            run: list[int] = []
            for r in orders:
                if run and r == run[-1] + 1 and run[0] == 0:
                    run.append(r)
                else:
                    if run:
                        out.append(_run_text(name, run))
                        run = []
                    run = [r]
            if run:
                out.append(_run_text(name, run))
    return out


def _run_text(name, run):
    if run == [0]:
        return name
    if run[0] == 0:
        return "%s^(<=%d)" % (name, run[-1])
    return ", ".join("%s^(%d)" % (name, r) for r in run)


def _deriv_name(name: str, r: int) -> str:
    return name if r == 0 else "%s^(%d)" % (name, r)


# -- text report --------------------------------------------------------


def _sigma_grid(a: Analysis) -> list[str]:
    model = a.model
    n = model.n
    entries = [["" for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            v = a.sm.sigma[i, j]
            if np.isfinite(v):
                mark = "\u2022" if a.hvt.assignment[i] == j else ""
                entries[i][j] = "%d%s" % (int(v), mark)
    widths = [
        max(len(model.variable_names[j]), max(len(entries[i][j]) for i in range(n)), 2)
        for j in range(n)
    ]
    name_w = max(3, *(len(nm) for nm in model.equation_names)) + 2
    lines = []
    head = " " * name_w + "  ".join(
        model.variable_names[j].rjust(widths[j]) for j in range(n)
    )
    lines.append(head + "  |  c_i")
    for i in range(n):
        row = model.equation_names[i].ljust(name_w) + "  ".join(
            entries[i][j].rjust(widths[j]) for j in range(n)
        )
        lines.append(row + "  |  %d" % a.offsets.c[i])
    lines.append(
        "d_j".ljust(name_w)
        + "  ".join(str(a.offsets.d[j]).rjust(widths[j]) for j in range(n))
    )
    return lines


def _permuted_grid(a: Analysis) -> list[str]:
    model = a.model
    n = model.n
    part = a.fine
    col_block_end = set()
    acc = 0
    for b in part.blocks:
        acc += b.size
        col_block_end.add(acc - 1)
    entries = [["" for _ in range(n)] for _ in range(n)]
    for pi in range(n):
        for pj in range(n):
            i, j = part.row_perm[pi], part.col_perm[pj]
            v = a.sm.sigma[i, j]
            if np.isfinite(v):
                mark = "\u2022" if a.hvt.assignment[i] == j else ""
                entries[pi][pj] = "%d%s" % (int(v), mark)
    cnames = [model.variable_names[j] for j in part.col_perm]
    rnames = [model.equation_names[i] for i in part.row_perm]
    widths = [
        max(len(cnames[pj]), max(len(entries[pi][pj]) for pi in range(n)), 2)
        for pj in range(n)
    ]
    name_w = max(4, *(len(nm) for nm in rnames)) + 2

    def row_text(cells, tail):
        parts = []
        for pj in range(n):
            parts.append(cells[pj].rjust(widths[pj]))
            if pj in col_block_end and pj != n - 1:
                parts.append("|")
        return "  ".join(parts) + tail

    lines = [
        " " * name_w
        + row_text(cnames, "  |  c_i  c^_i  K_l")
    ]
    pi = 0
    for l, b in enumerate(part.blocks, start=1):
        for _ in range(b.size):
            i = part.row_perm[pi]
            lines.append(
                rnames[pi].ljust(name_w)
                + row_text(
                    entries[pi],
                    "  |  %3d  %4d  %3d"
                    % (a.offsets.c[i], a.local.c_hat[pi], a.local.lead_times[l - 1]),
                )
            )
            pi += 1
        if l != part.p:
            lines.append("-" * len(lines[-1]))
    lines.append(
        "d_j".ljust(name_w)
        + row_text([str(a.offsets.d[j]) for j in part.col_perm], "")
    )
    lines.append(
        "d^_j".ljust(name_w)
        + row_text([str(a.local.d_hat[pj]) for pj in range(n)], "")
    )
    return lines


def _schedule_lines(a: Analysis, schedule: Schedule) -> list[str]:
    model = a.model
    part = a.fine
    lines = []
    for task in schedule.tasks:
        eqs = ", ".join(
            _deriv_name(model.equation_names[part.row_perm[pos]], r)
            for pos, r in sorted(task.equations)
        )
        unk = ", ".join(
            _deriv_name(model.variable_names[part.col_perm[pos]], r)
            for pos, r in sorted(task.unknowns)
        )
        uses = ", ".join(
            _deriv_name(model.variable_names[part.col_perm[pos]], r)
            for pos, r in sorted(task.cross_block_inputs)
        )
        head = "stage %3d  block %d (local %3d, %s, %s): " % (
            task.stage,
            task.block,
            task.local_stage,
            task.determinacy,
            task.linearity,
        )
        if task.equations:
            body = "solve %s for %s" % (eqs, unk)
            if uses:
                body += "  using %s" % uses
        else:
            body = "initial values for %s" % unk
        lines.append(head + body)
    return lines


def _text_report(a: Analysis, k_range: tuple[int, int]) -> str:
    model = a.model
    names = model.variable_names
    lines = []
    lines.append(
        "model: %d equations, %d variables" % (model.n, model.n)
    )
    lines.append(
        "structural index: %d    degrees of freedom: %d"
        % (a.metrics.index, a.metrics.dof)
    )
    lines.append("")
    lines.append("signature matrix (blank = absent, \u2022 marks the transversal)")
    lines.extend(_sigma_grid(a))
    lines.append("")
    lines.append(
        "coarse blocks: %s"
        % "; ".join(
            "{%s | %s}"
            % (
                ", ".join(model.equation_names[i] for i in b.rows),
                ", ".join(names[j] for j in b.cols),
            )
            for b in a.coarse.blocks
        )
    )
    lines.append("")
    lines.append("fine block form (%d blocks, solved highest block first)" % a.fine.p)
    lines.extend(_permuted_grid(a))
    lines.append("")
    lines.append("quasilinearity")
    for i in range(model.n):
        lines.append(
            "  %s: global %s, in-block %s"
            % (
                model.equation_names[i],
                a.ql.global_ql[i].code.value,
                a.ql.blockwise[i].code.value,
            )
        )
    lines.append(
        "  per-block linear flags: %s"
        % " ".join(
            "block %d=%d" % (l + 1, g) for l, g in enumerate(a.ql.gamma_block)
        )
    )
    lines.append("  whole system linear in leading derivatives: %s"
                 % ("yes" if a.ql.gamma_dae else "no"))
    lines.append("")
    lines.append(
        "initial values : %s"
        % (", ".join(_order_groups(a.init_fine.values, names)) or "(none)")
    )
    lines.append(
        "initial guesses: %s"
        % (", ".join(_order_groups(a.init_fine.guesses, names)) or "(none)")
    )
    lines.append(
        "one-block scheme would need %d entries: %s"
        % (
            len(a.init_basic.guesses),
            ", ".join(_order_groups(a.init_basic.guesses, names)),
        )
    )
    lines.append("")
    lines.append("schedule for stages %d..%d" % k_range)
    schedule = _scheme.render_schedule(
        k_range[0], k_range[1], a.fine, a.offsets, a.local, a.ql.gamma_eq, a.pattern
    )
    lines.extend(_schedule_lines(a, schedule))
    return "\n".join(lines) + "\n"


# -- json report ---------------------------------------------------------


def _json_sigma(a: Analysis):
    return [
        [int(v) if np.isfinite(v) else None for v in row] for row in a.sm.sigma
    ]


def _json_pairs(pairs, names):
    return [
        {"variable": names[j], "order": r} for j, r in sorted(pairs)
    ]


def _json_report(a: Analysis, k_range: tuple[int, int]):
    model = a.model
    names = model.variable_names
    part = a.fine
    blocks = []
    for l, b in enumerate(part.blocks, start=1):
        positions = list(part.block_positions(l))
        blocks.append(
            {
                "size": b.size,
                "rows": [model.equation_names[i] for i in b.rows],
                "cols": [names[j] for j in b.cols],
                "c_hat": [a.local.c_hat[pos] for pos in positions],
                "d_hat": [a.local.d_hat[pos] for pos in positions],
                "lead_time": a.local.lead_times[l - 1],
                "ql": a.ql.gamma_block[l - 1],
            }
        )
    schedule = _scheme.render_schedule(
        k_range[0], k_range[1], part, a.offsets, a.local, a.ql.gamma_eq, a.pattern
    )
    tasks = []
    for t in schedule.tasks:
        tasks.append(
            {
                "stage": t.stage,
                "block": t.block,
                "local_stage": t.local_stage,
                "solve": [
                    {"equation": model.equation_names[part.row_perm[pos]], "order": r}
                    for pos, r in sorted(t.equations)
                ],
                "for": [
                    {"variable": names[part.col_perm[pos]], "order": r}
                    for pos, r in sorted(t.unknowns)
                ],
                "uses": [
                    {"variable": names[part.col_perm[pos]], "order": r}
                    for pos, r in sorted(t.cross_block_inputs)
                ],
                "determinacy": t.determinacy,
                "linearity": t.linearity,
            }
        )
    return {
        "model": {
            "variables": list(names),
            "equations": list(model.equation_names),
            "constants": dict(sorted(model.constants.items())),
        },
        "sigma": _json_sigma(a),
        "hvt": list(a.hvt.assignment),
        "hvt_value": a.hvt.value,
        "offsets": {"c": list(a.offsets.c), "d": list(a.offsets.d)},
        "blocks": blocks,
        "lead_times": list(a.local.lead_times),
        "coarse_blocks": [
            {
                "rows": [model.equation_names[i] for i in b.rows],
                "cols": [names[j] for j in b.cols],
            }
            for b in a.coarse.blocks
        ],
        "ql": {
            "per_equation": [
                {
                    "equation": model.equation_names[i],
                    "global": a.ql.global_ql[i].code.value,
                    "block": a.ql.blockwise[i].code.value,
                    "linear_flag": a.ql.gamma_eq[i],
                }
                for i in range(model.n)
            ],
            "per_block": list(a.ql.gamma_block),
            "dae": a.ql.gamma_dae,
        },
        "init": {
            "values": _json_pairs(a.init_fine.values, names),
            "guesses": _json_pairs(a.init_fine.guesses, names),
            "basic_guesses": _json_pairs(a.init_basic.guesses, names),
        },
        "schedule": tasks,
        "metrics": {"index": a.metrics.index, "dof": a.metrics.dof},
    }


# -- init files -----------------------------------------------------------


def parse_init_file(text: str, model: DaeModel):
    """`NAME ORDER VALUE` lines are values, `guess NAME ORDER VALUE` guesses."""
    values: dict[tuple[int, int], float] = {}
    guesses: dict[tuple[int, int], float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        sink = values
        if parts[0] == "guess":
            sink = guesses
            parts = parts[1:]
        if len(parts) != 3:
            raise ModelError(
                "init line %d: expected NAME ORDER VALUE, got %r" % (lineno, raw)
            )
        name, order, value = parts
        if name not in model.variable_names:
            raise ModelError("init line %d: unknown variable %r" % (lineno, name))
        sink[(model.variable_index(name), int(order))] = float(value)
    return values, guesses


# -- commands --------------------------------------------------------------


def _load(path: str) -> DaeModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())


def _parse_stages(text: str, default_lo: int, default_hi: int):
    if text is None:
        return default_lo, default_hi
    lo, sep, hi = text.partition("..")
    if not sep:
        raise ModelError("--stages expects the form a..b")
    return int(lo), int(hi)


def cmd_analyze(args) -> int:
    try:
        model = _load(args.model)
    except (ModelError, OSError) as err:
        print("error: %s" % err, file=sys.stderr)
        return EXIT_INPUT
    try:
        a = analyze(model)
    except StructurallyIllPosed as err:
        print("error: %s" % err, file=sys.stderr)
        return EXIT_ILL_POSED
    try:
        k_range = _parse_stages(args.stages, -max(a.offsets.d), 1)
    except (ModelError, ValueError) as err:
        print("error: %s" % err, file=sys.stderr)
        return EXIT_INPUT
    if args.format == "json":
        print(json.dumps(_json_report(a, k_range), indent=2))
    else:
        print(_text_report(a, k_range), end="")
    return EXIT_OK


def cmd_solve(args) -> int:
    try:
        model = _load(args.model)
        init_text = ""
        if args.init:
            with open(args.init, "r", encoding="utf-8") as fh:
                init_text = fh.read()
        values, guesses = parse_init_file(init_text, model)
    except (ModelError, OSError, ValueError) as err:
        print("error: %s" % err, file=sys.stderr)
        return EXIT_INPUT
    try:
        a = analyze(model)
    except StructurallyIllPosed as err:
        print("error: %s" % err, file=sys.stderr)
        return EXIT_ILL_POSED
    try:
        rep = solve_to_order(
            a, values, guesses, args.order, scheme=args.scheme, tol=args.tol
        )
    except MissingInitialization as err:
        print("error: %s" % err, file=sys.stderr)
        return EXIT_MISSING_INIT
    except ExecutorError as err:
        print("error: %s" % err, file=sys.stderr)
        return EXIT_EXECUTOR

    names = model.variable_names
    if args.format == "json":
        table = {
            names[j]: [
                rep.derivatives[(j, r)]
                for r in range(a.offsets.d[j] + args.order + 1)
            ]
            for j in range(model.n)
        }
        print(
            json.dumps(
                {
                    "derivatives": table,
                    "max_residual": rep.max_residual,
                    "max_residual_raw": rep.max_residual_raw,
                },
                indent=2,
            )
        )
    else:
        for j in range(model.n):
            for r in range(a.offsets.d[j] + args.order + 1):
                print("%s %d %r" % (names[j], r, rep.derivatives[(j, r)]))
        print("max_residual %r" % rep.max_residual)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="daestruct",
        description="Structural analysis of differential-algebraic equation models",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="run the structural analysis")
    pa.add_argument("model", help="model file")
    pa.add_argument("--format", choices=("text", "json"), default="text")
    pa.add_argument(
        "--stages",
        help="stage range a..b for the schedule (write --stages=-6..0 for "
        "negative bounds)",
    )
    pa.set_defaults(func=cmd_analyze)

    ps = sub.add_parser("solve", help="solve for Taylor coefficients at a point")
    ps.add_argument("model", help="model file")
    ps.add_argument("--order", type=int, required=True, help="final stage")
    ps.add_argument("--init", help="initialization file")
    ps.add_argument("--scheme", choices=("block", "basic"), default="block")
    ps.add_argument("--format", choices=("text", "json"), default="text")
    ps.add_argument("--tol", type=float, default=1e-12)
    ps.set_defaults(func=cmd_solve)
    return ap


def main(argv=None) -> int:
    if hasattr(sys.stdout, "reconfigure"):
        sys.stdout.reconfigure(errors="replace")  # bullet marks on any locale
    args = build_parser().parse_args(argv)
    code = args.func(args)
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
