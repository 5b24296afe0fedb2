"""Command-line front end: generate, detect, solve, bench.

Exit codes: 0 success, 2 input error, 3 solver non-convergence,
4 internal error.
"""

from __future__ import annotations

import json
import sys
import time

import click
import numpy as np

from . import flops as flops_mod
from . import generators as gen_mod
from . import io as io_mod
from .model import Status, to_general_qp
from .solver import Settings, Solver
from .structure import detect, detection_pattern

_EXIT_INPUT = 2
_EXIT_NOCONV = 3
_EXIT_INTERNAL = 4


def _fail(code: int, msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Structured QP solver for multistage problems."""


def _load(path):
    try:
        return io_mod.load_problem(path)
    except FileNotFoundError:
        _fail(_EXIT_INPUT, f"no such file: {path}")
    except (ValueError, KeyError, json.JSONDecodeError) as err:
        _fail(_EXIT_INPUT, f"cannot parse {path}: {err}")


@main.command()
@click.argument("problem_file", type=click.Path())
@click.option("--backend", type=click.Choice(["btda", "dense"]), default="btda")
@click.option("--tol", type=float, default=1e-8, help="eps_abs and eps_rel")
@click.option("--max-iter", type=int, default=250)
@click.option("--warm-start", "warm_file", type=click.Path(), default=None,
              help="result file to warm-start from")
@click.option("-o", "--output", type=click.Path(), default=None,
              help="result file (defaults to stdout)")
@click.option("--timings", is_flag=True, help="include wall times in the result")
def solve(problem_file, backend, tol, max_iter, warm_file, output, timings):
    """Solve a problem file and write the solution."""
    qp, structure, _meta = _load(problem_file)
    warm = None
    if warm_file is not None:
        try:
            warm = io_mod.load_result(warm_file)
        except (FileNotFoundError, ValueError, KeyError,
                json.JSONDecodeError) as err:
            _fail(_EXIT_INPUT, f"cannot parse warm start: {err}")
    settings = Settings(eps_abs=tol, eps_rel=tol, max_iter=max_iter,
                        backend=backend)
    try:
        solver = Solver(qp, settings, structure)
        sol = solver.solve(warm_start=warm if warm is not None else False)
    except Exception as err:  # pragma: no cover - defensive
        _fail(_EXIT_INTERNAL, f"solver failure: {err}")
    if output:
        io_mod.dump_result(output, sol, include_timings=timings)
    else:
        doc = {"status": sol.status.value, "iterations": sol.iterations,
               "objective": sol.objective, "primal_res": sol.primal_res,
               "dual_res": sol.dual_res, "x": sol.x.tolist()}
        click.echo(json.dumps(doc, sort_keys=True))
    if sol.status is not Status.SOLVED:
        _fail(_EXIT_NOCONV, f"solver stopped with status {sol.status.value}")


def _render_grid(pattern, structure) -> str:
    bounds = set(structure.offsets[1:-1])
    if structure.arrow_width:
        bounds.add(structure.offsets[-1])
    lines = []
    for i in range(pattern.n):
        cols = set(pattern.rows[i].tolist())
        row = []
        for j in range(i + 1):
            row.append("|" if j in bounds and j <= i else "")
            row.append("*" if j in cols else ".")
        lines.append("".join(row))
        if i + 1 in bounds:
            lines.append("-" * (2 * (i + 1)))
    return "\n".join(lines)


@main.command("detect")
@click.argument("problem_file", type=click.Path())
@click.option("--grid", is_flag=True, help="render the pattern with boundaries")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]),
              default="text")
def detect_cmd(problem_file, grid, fmt):
    """Report the detected block structure of a problem file."""
    qp, _declared, _meta = _load(problem_file)
    pattern = detection_pattern(qp)
    structure = detect(pattern)
    flops = flops_mod.predict_factorization(structure)
    if fmt == "json":
        click.echo(json.dumps({
            "block_sizes": list(structure.block_sizes),
            "arrow_width": structure.arrow_width,
            "factorization_flops": flops,
        }, sort_keys=True))
    else:
        click.echo(f"block_sizes: {list(structure.block_sizes)}")
        click.echo(f"arrow_width: {structure.arrow_width}")
        click.echo(f"factorization_flops: {flops}")
    if grid:
        if pattern.n > 200:
            click.echo("(grid rendering skipped: n > 200)", err=True)
        else:
            click.echo(_render_grid(pattern, structure))


def _build_family(family: str, m: int, horizon: int, scenarios: int,
                  rd: float, nx: int, nu: int, ng: int, seed: int):
    if family == "spring-mass":
        cfg = gen_mod.SpringMassConfig(M=m, N=horizon, r_d=rd, seed=seed)
        problem, _sampler = gen_mod.spring_mass(cfg)
        meta = {"family": family, "M": m, "N": horizon, "r_d": rd, "seed": seed}
    elif family == "scenario":
        cfg = gen_mod.ScenarioConfig(M=m, N=horizon, N_s=scenarios, seed=seed)
        problem = gen_mod.scenario(cfg)
        meta = {"family": family, "M": m, "N": horizon, "N_s": scenarios,
                "seed": seed}
    elif family == "lqc":
        problem = gen_mod.extended_lqc(horizon, nx, nu, ng, seed=seed)
        meta = {"family": family, "N": horizon, "n_x": nx, "n_u": nu,
                "n_g": ng, "seed": seed}
    else:
        raise ValueError(f"unknown family {family!r}")
    return problem, meta


@main.command()
@click.argument("family",
                type=click.Choice(["spring-mass", "scenario", "lqc"]))
@click.option("-M", "--masses", "m", type=int, default=2)
@click.option("-N", "--horizon", type=int, default=15)
@click.option("--scenarios", type=int, default=2, help="scenario count")
@click.option("--rd", type=float, default=0.0, help="input-rate weight")
@click.option("--nx", type=int, default=4)
@click.option("--nu", type=int, default=2)
@click.option("--ng", type=int, default=0)
@click.option("--seed", type=int, default=0)
@click.option("-o", "--output", type=click.Path(), required=True)
def generate(family, m, horizon, scenarios, rd, nx, nu, ng, seed, output):
    """Write a deterministic benchmark instance to a problem file."""
    try:
        problem, meta = _build_family(family, m, horizon, scenarios, rd,
                                      nx, nu, ng, seed)
    except ValueError as err:
        _fail(_EXIT_INPUT, str(err))
    qp, _structure = to_general_qp(problem)
    io_mod.dump_problem(output, qp, multistage=problem, meta=meta)
    click.echo(f"wrote {output} (n={qp.n}, p={qp.p}, m={qp.m})")


def _parse_sweep(spec: str) -> tuple[str, list[int]]:
    if "=" not in spec:
        raise ValueError("sweep must look like NAME=lo..hi or NAME=a,b,c")
    name, _, rhs = spec.partition("=")
    if ".." in rhs:
        lo, _, hi = rhs.partition("..")
        values = list(range(int(lo), int(hi) + 1))
    else:
        values = [int(v) for v in rhs.split(",")]
    return name.strip(), values


def _svg_polyline(points, width=640, height=400, margin=50):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys + [0.0]), max(ys)
    spanx = (x1 - x0) or 1.0
    spany = (y1 - y0) or 1.0

    def sx(v):
        return margin + (v - x0) / spanx * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y0) / spany * (height - 2 * margin)

    pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in points)
    return sx, sy, pts, (x0, x1, y0, y1)


def _write_speedup_svg(path, sweep_name, values, ratios):
    width, height = 640, 400
    points = list(zip(values, ratios))
    _sx, _sy, pts, _box = _svg_polyline(points, width, height)
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle">'
        f'dense/btda solve-time ratio vs {sweep_name}</text>',
        "</svg>",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(body) + "\n")


def _write_breakdown_svg(path, labels, parts):
    # Stacked horizontal bars: factorize (blue), solve (orange), other (green).
    width, bar_h, gap, margin = 640, 18, 6, 120
    height = margin // 2 + len(labels) * (bar_h + gap) + 30
    colors = {"factorize": "steelblue", "solve": "orange", "other": "seagreen"}
    rows = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>']
    scale = max(sum(p.values()) for p in parts) or 1.0
    y = margin // 2
    for label, part in zip(labels, parts):
        x = margin
        rows.append(f'<text x="4" y="{y + bar_h - 4}" font-size="11">{label}</text>')
        for key in ("factorize", "solve", "other"):
            w = part.get(key, 0.0) / scale * (width - margin - 20)
            rows.append(f'<rect x="{x:.1f}" y="{y}" width="{w:.1f}" '
                        f'height="{bar_h}" fill="{colors[key]}"/>')
            x += w
        y += bar_h + gap
    rows.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


@main.command()
@click.argument("family",
                type=click.Choice(["spring-mass", "scenario", "lqc"]))
@click.option("--sweep", required=True, help="e.g. M=2..8 or M=2,4,8")
@click.option("--repeats", type=int, default=1)
@click.option("--backends", default="btda,dense")
@click.option("-N", "--horizon", type=int, default=15)
@click.option("--scenarios", type=int, default=2)
@click.option("--rd", type=float, default=0.0)
@click.option("--tol", type=float, default=1e-6)
@click.option("--seed", type=int, default=0)
@click.option("--flops", "show_flops", is_flag=True,
              help="print a flop report per instance")
@click.option("--plot", "plot_dir", type=click.Path(), default=None)
@click.option("-o", "--output", type=click.Path(), required=True)
def bench(family, sweep, repeats, backends, horizon, scenarios, rd, tol,
          seed, show_flops, plot_dir, output):
    """Run a benchmark sweep; one JSON record per line and instance."""
    try:
        name, values = _parse_sweep(sweep)
        backend_list = [b.strip() for b in backends.split(",") if b.strip()]
        for b in backend_list:
            if b not in ("btda", "dense"):
                raise ValueError(f"unknown backend {b!r}")
    except ValueError as err:
        _fail(_EXIT_INPUT, str(err))

    records = []
    by_value: dict[int, dict[str, list[float]]] = {}
    for value in values:
        kwargs = {"m": 2, "horizon": horizon, "scenarios": scenarios,
                  "rd": rd, "nx": 4, "nu": 2, "ng": 0, "seed": seed}
        if name == "M":
            kwargs["m"] = value
        elif name == "N":
            kwargs["horizon"] = value
        elif name == "Ns":
            kwargs["scenarios"] = value
        else:
            _fail(_EXIT_INPUT, f"unknown sweep parameter {name!r}")
        try:
            problem, meta = _build_family(family, **kwargs)
        except ValueError as err:
            _fail(_EXIT_INPUT, str(err))
        qp, structure = to_general_qp(problem)
        report = flops_mod.predict_factorization(structure)
        if show_flops:
            click.echo(f"{name}={value}: factorization flops {report}")
        for backend in backend_list:
            for rep in range(repeats):
                settings = Settings(eps_abs=tol, eps_rel=tol, backend=backend)
                solver = Solver(qp, settings, structure)
                t0 = time.perf_counter()
                sol = solver.solve(warm_start=False)
                wall = time.perf_counter() - t0
                rec = {
                    "family": family, "sweep": {name: value}, "config": meta,
                    "backend": backend, "repeat": rep,
                    "n": qp.n, "p": qp.p, "m": qp.m,
                    "block_sizes": list(structure.block_sizes),
                    "arrow_width": structure.arrow_width,
                    "iterations": sol.iterations,
                    "status": sol.status.value,
                    "timings": sol.info["timings"],
                    "wall_time": wall,
                    "factorization_flops": report,
                    "primal_res": sol.primal_res,
                    "dual_res": sol.dual_res,
                }
                records.append(rec)
                by_value.setdefault(value, {}).setdefault(backend, []).append(
                    sol.info["timings"]["total"])

    with open(output, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    click.echo(f"wrote {len(records)} records to {output}")

    if plot_dir:
        import os
        os.makedirs(plot_dir, exist_ok=True)
        if "btda" in backend_list and "dense" in backend_list:
            ratios = []
            for value in values:
                t_b = np.mean(by_value[value]["btda"])
                t_d = np.mean(by_value[value]["dense"])
                ratios.append(t_d / t_b if t_b > 0 else 1.0)
            _write_speedup_svg(os.path.join(plot_dir, "speedup.svg"),
                               name, values, ratios)
        labels, parts = [], []
        for rec in records:
            if rec["repeat"] == 0:
                labels.append(f'{name}={list(rec["sweep"].values())[0]} '
                              f'{rec["backend"]}')
                t = rec["timings"]
                parts.append({"factorize": t["factorize"],
                              "solve": t["solve"],
                              "other": t["assembly"] + t["other"]})
        _write_breakdown_svg(os.path.join(plot_dir, "breakdown.svg"),
                             labels, parts)
        click.echo(f"wrote plots to {plot_dir}")


if __name__ == "__main__":
    main()
