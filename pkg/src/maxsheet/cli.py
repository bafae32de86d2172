"""Command-line front end.

Every command prints one JSON document with the fields command, config_echo,
verdicts, artifacts and max_deviation.  Exit status: 0 success, 1 domain
error, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gallery
from .errors import MaxsheetError
from .initial_data import angular_lift, load_curve_csv
from .evolution import evaluate_grid, evolve, fmt, mesh_export

COMMANDS = ("evolve", "singular", "curvature", "embed", "classify", "gallery", "horizon")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    source: str                       # "gallery:<name>" or "csv:<path>"
    window: tuple = None              # (s_min, s_max) of the evaluation grid
    t_range: tuple = None
    step: float = None
    out_dir: str = "."
    options: dict = field(default_factory=dict)

    def validate(self, data_window=None):
        if self.step is not None and not self.step > 0:
            raise UsageError("--step must be positive")
        if self.window is not None and not self.window[1] > self.window[0]:
            raise UsageError("--s: empty window")
        if self.t_range is not None and data_window is not None:
            T = max(abs(self.t_range[0]), abs(self.t_range[1]))
            lo, hi = data_window
            if 2 * T >= hi - lo:
                raise UsageError("--t: time range does not fit inside the data window")


def _range(text):
    try:
        a, b = text.split("..")
        a, b = float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a..b, got {text!r}") from None
    if not b >= a:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return a, b


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="maxsheet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def source(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--gallery", metavar="NAME", help="gallery entry, e.g. cigar")
        g.add_argument("--curve", metavar="CSV", help="sampled data with header s,c1,c2,v1,v2")
        sp.add_argument("--L", type=float, help="parameter of cigar / periodic_wedge")
        sp.add_argument("--out", default=".", help="output directory")

    ev = sub.add_parser("evolve", help="evaluate gamma on a grid, export CSV/OBJ")
    source(ev)
    ev.add_argument("--t", type=_range, required=True, help="time range a..b")
    ev.add_argument("--s", type=_range, help="parameter range a..b")
    ev.add_argument("--step", type=float, default=0.01)
    ev.add_argument("--obj", help="OBJ mesh path")
    ev.add_argument("--csv", help="grid CSV path (default <out>/evolve.csv)")

    sg = sub.add_parser("singular", help="singular set on a characteristic diamond")
    source(sg)
    sg.add_argument("--diamond", type=float, nargs=2, metavar=("S1", "S2"))
    sg.add_argument("--step", type=float)
    sg.add_argument("--csv", help="singular-set CSV path (default <out>/singular.csv)")

    cv = sub.add_parser("curvature", help="curvature samples, blow-up and norm diagnostics")
    source(cv)
    cv.add_argument("--t", type=_range, required=True)
    cv.add_argument("--s", type=_range)
    cv.add_argument("--step", type=float, default=0.05)
    cv.add_argument("--anchor", type=float, nargs=2, metavar=("S0", "T0"),
                    help="singular anchor for the blow-up integral")
    cv.add_argument("--epsilon", type=float, default=0.5)
    cv.add_argument("--norms", action="store_true", help="mixed-norm table towards the anchor time")
    cv.add_argument("--p", type=_floats, default=[1.1, 1.5, 2.0, 3.0, 4.0])
    cv.add_argument("--q", type=_floats, default=[1.1, 1.5, 2.0, 3.0, 4.0])
    cv.add_argument("--csv", help="curvature CSV path (default <out>/curvature.csv)")

    em = sub.add_parser("embed", help="separating direction, graph check, self-intersections")
    source(em)
    em.add_argument("--s", type=_range, help="initial interval a..b")

    cl = sub.add_parser("classify", help="classify a tangent discontinuity at time t0")
    source(cl)
    cl.add_argument("--t0", type=float)
    cl.add_argument("--s", type=_range, help="interval containing the zero set")

    ga = sub.add_parser("gallery", help="list, sample or regress gallery entries")
    ga.add_argument("name", nargs="?", help="entry name (omit to list)")
    ga.add_argument("--L", type=float)
    ga.add_argument("--check", action="store_true", help="run the regression")
    ga.add_argument("--step", type=float, help="sampling step for the data CSV")
    ga.add_argument("--out", default=".")
    ga.add_argument("--csv", help="write sampled initial data to this path")

    ho = sub.add_parser("horizon", help="short-time existence horizon")
    source(ho)
    ho.add_argument("--step", type=float)
    return p


def _load(args):
    if getattr(args, "curve", None):
        return None, load_curve_csv(args.curve)
    name = getattr(args, "gallery", None)
    if not name:
        raise UsageError("one of --gallery or --curve is required")
    params = {"L": args.L} if args.L is not None else {}
    entry = gallery.build(name, **params)
    return entry, entry.data


def _write(path, text, artifacts):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    artifacts.append({"path": path, "sha256": hashlib.sha256(text.encode()).hexdigest()})


def _num(x):
    """JSON-safe number: floats round-trip, non-finite values as strings."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return x if np.isfinite(x) else fmt(x)


def _s_grid(data, t_range, s_range, step):
    T = max(abs(t_range[0]), abs(t_range[1]))
    lo, hi = data.window
    if s_range is None:
        s_range = (lo + T, hi - T)
    a, b = s_range
    if a - T < lo or b + T > hi:
        raise UsageError("--s/--t: s +- t leaves the data window")
    return np.linspace(a, b, int(round((b - a) / step)) + 1)


def _t_grid(t_range, step):
    a, b = t_range
    return np.linspace(a, b, int(round((b - a) / step)) + 1)


def cmd_evolve(args, cfg, out):
    _, data = _load(args)
    cfg.validate(data.window)
    s = _s_grid(data, args.t, args.s, args.step)
    t = _t_grid(args.t, args.step)
    sheet = evolve(data)
    grid = evaluate_grid(sheet, s, t)
    _write(args.csv or os.path.join(args.out, "evolve.csv"), grid.to_csv(), out["artifacts"])
    if args.obj:
        mesh = mesh_export(sheet, s, t, grid=grid)
        _write(args.obj, mesh.to_obj(), out["artifacts"])
        out["verdicts"]["obj_vertices"] = int(len(mesh.vertices))
        out["verdicts"]["obj_faces"] = int(len(mesh.faces))
    gs, gt = grid.gs, grid.gt
    orth = np.max(np.abs(np.sum(gs * gt, axis=-1)))
    norm = np.max(np.abs(np.sum(gs * gs + gt * gt, axis=-1) - 1.0))
    out["verdicts"].update({"grid": [int(s.size), int(t.size)],
                            "gauge_orthogonality": _num(orth), "gauge_norm": _num(norm)})
    out["max_deviation"] = _num(max(orth, norm))


def cmd_singular(args, cfg, out):
    from .singularity import (CharacteristicDiamond, find_singular_set,
                              no_singularity_criterion, semicircle_criterion)
    entry, data = _load(args)
    if args.diamond:
        s1, s2 = args.diamond
    elif entry is not None:
        s1, s2 = entry.diamond
    else:
        s1, s2 = data.window
    if not s2 > s1:
        raise UsageError("--diamond: need S1 < S2")
    step = args.step or (entry.grid_step if entry is not None else 0.01)
    cfg.step = step
    cfg.validate()
    K = find_singular_set(data, CharacteristicDiamond(s1, s2), step)
    _write(args.csv or os.path.join(args.out, "singular.csv"), K.to_csv(), out["artifacts"])
    semi = semicircle_criterion(data, s1, s2)
    reg = no_singularity_criterion(data, s1, s2)
    v = out["verdicts"]
    v["diamond"] = [s1, s2]
    v["points"] = len(K)
    v["components"] = {str(i): c for i, c in enumerate(K.component_class)}
    v["semicircle_criterion"] = semi.verdict
    v["theta_sweep"] = _num(semi.sweep)
    v["no_singularity_criterion"] = reg.verdict
    # the two criteria can be checked against the scan
    bad = (semi.verdict == "guaranteed_singular" and K.is_empty) or \
          (reg.verdict == "guaranteed_regular" and not K.is_empty)
    v["criteria_consistent"] = not bad
    out["max_deviation"] = 0.0


def cmd_curvature(args, cfg, out):
    from .curvature import blowup_integral, curvature_report, mixed_norm_table
    if args.norms and not args.anchor:
        raise UsageError("--norms needs --anchor S0 T0")
    _, data = _load(args)
    cfg.validate(data.window)
    sheet = evolve(data)
    s = _s_grid(data, args.t, args.s, args.step)
    t = _t_grid(args.t, args.step)
    rep = curvature_report(sheet, s, t)
    _write(args.csv or os.path.join(args.out, "curvature.csv"), rep.to_csv(), out["artifacts"])
    h = rep.h[np.isfinite(rep.h)]
    hmax = float(np.max(np.abs(h))) if h.size else 0.0
    out["verdicts"]["max_abs_mean_curvature"] = _num(hmax)
    out["max_deviation"] = _num(hmax)
    if args.anchor:
        s0, t0 = args.anchor
        B = blowup_integral(sheet, s0, t0, args.epsilon)
        out["verdicts"]["blowup"] = {"verdict": B.verdict, "slope": _num(B.log_model_slope),
                                     "r2": _num(B.log_model_r2),
                                     "last_partial_integral": _num(B.partial_integrals[-1])}
        if args.norms:
            T = mixed_norm_table(sheet, args.p, args.q, (t0 - args.epsilon, t0))
            _write(os.path.join(args.out, "norms.csv"), T.to_csv(), out["artifacts"])
            out["verdicts"]["norms"] = {f"{fmt(e.p)},{fmt(e.q)}": e.verdict for e in T.entries}


def cmd_embed(args, cfg, out):
    from .embedding import detect_self_intersections, separating_direction, verify_graph_on_diamond
    entry, data = _load(args)
    if args.s:
        s1, s2 = args.s
    elif entry is not None:
        s1, s2 = entry.diamond
    else:
        s1, s2 = data.window
    if not s2 > s1:
        raise UsageError("--s: need a < b")
    sep = separating_direction(data, s1, s2)
    v = out["verdicts"]
    v["interval"] = [s1, s2]
    v["separation"] = sep.verdict
    v["alpha_plus_arc"] = [_num(x) for x in sep.arc]
    if sep.verdict == "separated":
        v["omega"] = [_num(x) for x in sep.omega]
        v["separation_margin"] = _num(sep.margin)
        g = verify_graph_on_diamond(evolve(data), (s1, s2), sep.omega)
        v["graph"] = g.verdict
        v["graph_margin"] = _num(g.min_margin)
    else:
        v["overlap_witness"] = [_num(x) for x in sep.witness]
    X = detect_self_intersections(data.c, (s1, s2))
    v["self_intersections"] = [[_num(a), _num(b)] for a, b in X]
    v["certification"] = sep.certification
    out["max_deviation"] = 0.0


def cmd_classify(args, cfg, out):
    from .singularity import classify_tangent_discontinuity
    entry, data = _load(args)
    ref = entry.reference if entry is not None else {}
    t0 = args.t0 if args.t0 is not None else ref.get("t0")
    s_int = args.s if args.s is not None else ref.get("s_interval")
    if t0 is None or s_int is None:
        raise UsageError("--t0 and --s are required for this input")
    c = classify_tangent_discontinuity(data, t0, s_int)
    out["verdicts"].update({
        "t0": _num(t0), "classification": c.classification,
        "interval": [_num(c.r1), _num(c.r2)],
        "m": None if c.m is None else int(c.m),
        "tangent_left": [_num(x) for x in c.tangent_left],
        "tangent_right": [_num(x) for x in c.tangent_right],
    })
    expected = ref.get("classification")
    if expected is not None:
        out["verdicts"]["matches_reference"] = c.classification == expected
    out["max_deviation"] = 0.0


def cmd_gallery(args, cfg, out):
    if not args.name:
        out["verdicts"]["entries"] = list(gallery.NAMES)
        out["max_deviation"] = 0.0
        return
    params = {"L": args.L} if args.L is not None else {}
    entry = gallery.build(args.name, **params)
    v = out["verdicts"]
    v["name"] = entry.name
    v["params"] = {k: _num(x) for k, x in entry.params.items()}
    v["window"] = [_num(x) for x in entry.data.window]
    v["diamond"] = [_num(x) for x in entry.diamond]
    if args.csv or args.step:
        step = args.step or 0.01
        lo, hi = entry.data.window
        s = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
        c, vel = entry.data.c.eval(s), entry.data.v.eval(s)
        rows = ["s,c1,c2,v1,v2"] + [",".join(fmt(x) for x in (s[i], *c[i], *vel[i]))
                                      for i in range(s.size)]
        _write(args.csv or os.path.join(args.out, f"{entry.name}.csv"), "\n".join(rows) + "\n",
               out["artifacts"])
    out["max_deviation"] = 0.0
    if args.check:
        rep = gallery.run_regression(entry)
        v["regression"] = {"passed": rep.passed, "failures": rep.failures,
                           "deviations": {k: {"value": _num(a), "tolerance": _num(b)}
                                          for k, (a, b) in rep.deviations.items()},
                           "checks": {k: _jsonable(x) for k, x in rep.verdicts.items()}}
        out["max_deviation"] = _num(rep.max_deviation)
        if not rep.passed:
            out["exit"] = 1


def _jsonable(x):
    if isinstance(x, (list, tuple)):
        return [_jsonable(y) for y in x]
    if isinstance(x, (str, type(None))):
        return x
    return _num(x)


def cmd_horizon(args, cfg, out):
    from .singularity import short_time_horizon
    _, data = _load(args)
    T = short_time_horizon(data, args.step)
    out["verdicts"]["horizon"] = _num(T)
    lift = angular_lift(data, np.linspace(*data.window, 20001))
    out["verdicts"]["theta_oscillation"] = _num(np.ptp(lift.theta))
    out["max_deviation"] = 0.0


HANDLERS = {"evolve": cmd_evolve, "singular": cmd_singular, "curvature": cmd_curvature,
            "embed": cmd_embed, "classify": cmd_classify, "gallery": cmd_gallery,
            "horizon": cmd_horizon}


_RANGE = re.compile(r"^-[0-9.eE+-]*\.\.[0-9.eE+-]+$")


def _join_ranges(argv):
    """Let `--s -5..5` through: argparse would read -5..5 as a flag."""
    out = []
    for tok in argv:
        if out and out[-1] in ("--s", "--t") and _RANGE.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_join_ranges(argv))
    echo = {k: (list(x) if isinstance(x, tuple) else x) for k, x in sorted(vars(args).items())}
    src = f"csv:{args.curve}" if getattr(args, "curve", None) else f"gallery:{getattr(args, 'gallery', None) or getattr(args, 'name', None)}"
    cfg = RunConfig(args.command, src, getattr(args, "s", None), getattr(args, "t", None),
                    getattr(args, "step", None), getattr(args, "out", "."))
    out = {"command": args.command, "config_echo": echo, "verdicts": {}, "artifacts": [],
           "max_deviation": None}
    code = 0
    try:
        HANDLERS[args.command](args, cfg, out)
        code = out.pop("exit", 0)
    except UsageError as exc:
        parser.error(str(exc))
    except (MaxsheetError, ValueError, OSError) as exc:
        out.pop("exit", None)
        out["verdicts"]["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code = 1
    out["config_echo"]["resolved"] = {k: v for k, v in asdict(cfg).items() if k != "options"}
    json.dump(out, sys.stdout, indent=2, sort_keys=True, default=_jsonable)
    sys.stdout.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
