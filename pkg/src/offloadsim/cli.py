"""Command-line front end: predictions, simulation sweeps, CSV and SVG output."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import re
import sys

from offloadsim import svg
from offloadsim.calibration import PRESET_NAMES, Config, load_config, load_config_file
from offloadsim.errors import ConfigError, SimulationError
from offloadsim.overlap import (
    critical_config, f_star, i_star, min_residency, nearest_grid_value, overlap_report,
    roofline_points, t_pref,
)
from offloadsim.simulator import (
    CATEGORIES, Chunked, StepBreakdown, WholeLayer, parse_policy,
    simulate_step, validate_trace,
)
from offloadsim.workload import WorkloadPoint

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_VALIDATION = 0, 2, 3, 4

SWEEP_COLUMNS = [
    "model", "sweep_var", "value", "policy", "chunk_bytes", "residency", "step_time_s",
    "compute_s", "collective_s", "prefetch_stall_s", "contention_stall_s", "overhead_s",
    "peak_param_bytes", "total_h2d_bytes",
]


class ValidationFailure(Exception):
    pass


_SIZE_RE = re.compile(r"^\s*([0-9.eE+]+)\s*([KMG]i?B|B)?\s*$")
_UNITS = {None: 1, "B": 1, "KB": 10**3, "MB": 10**6, "GB": 10**9, "KiB": 2**10, "MiB": 2**20, "GiB": 2**30}


def parse_bytes(text: str) -> int:
    m = _SIZE_RE.match(text)
    if not m:
        raise ConfigError("chunk_bytes", f"cannot parse size {text!r}")
    return int(round(float(m.group(1)) * _UNITS[m.group(2)]))


def _num(v):
    """Shortest round-trip text for CSV cells."""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        if v.is_integer() and abs(v) < 1e16:
            return str(int(v))
        return repr(v)
    return str(v)


def _csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_num(r[c]) for c in columns])
    return buf.getvalue()


class Runner:
    def __init__(self, args, config: Config):
        self.args = args
        self.cfg = config
        self.hw = config.hardware
        self.runs: list[tuple[str, StepBreakdown]] = []

    # -- helpers ---------------------------------------------------------
    def simulate(self, model, value, policy, tag=""):
        w = WorkloadPoint.at(model, value, self.hw)
        bd = simulate_step(model, w, self.hw, policy)
        if self.args.validate:
            problems = validate_trace(bd)
            if problems:
                raise ValidationFailure(f"{model.name} {value} {policy.name}: " + "; ".join(problems))
        self.runs.append((tag or f"{model.name}:{value}:{policy.name}", bd))
        return bd

    def policy(self, name, chunk_bytes=None, residency=None):
        d = self.cfg.defaults
        cb = d.chunk_bytes if chunk_bytes is None else chunk_bytes
        r = d.residency if residency is None else residency
        return parse_policy(name, cb, r)

    def emit(self, stem: str, text: str, charts: dict[str, str] | None = None):
        out = self.args.out
        if out:
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, f"{stem}.csv"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if self.args.svg and charts:
            target = out or "."
            os.makedirs(target, exist_ok=True)
            for name, body in charts.items():
                with open(os.path.join(target, f"{name}.svg"), "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(body)

    def write_traces(self):
        path = self.args.json_trace
        if not path:
            return
        multi = len(self.runs) > 1
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for tag, bd in self.runs:
                for e in bd.trace:
                    rec = {"t_start": e.t_start, "t_end": e.t_end, "category": e.category,
                           "layer": e.layer, "label": e.label}
                    if multi:
                        rec["run"] = tag
                    fh.write(json.dumps(rec) + "\n")

    # -- commands --------------------------------------------------------
    def predict(self):
        names = self.args.model or [m.name for m in self.cfg.models]
        rows = []
        for name in names:
            m = self.cfg.model(name)
            cc = critical_config(m, self.hw)
            if cc.status == "crossing":
                rounded = nearest_grid_value(cc.value, m.sweep_values) if m.sweep_values else cc.rounded
            else:
                rounded = ""
            value = self.args.value if self.args.value is not None else (m.sweep_values[0] if m.sweep_values else 1)
            w = WorkloadPoint.at(m, value, self.hw)
            rows.append({
                "model": m.name,
                "f_star_flops": f_star(self.hw, m.b_pref),
                "i_star_flops_per_byte": i_star(self.hw),
                "t_pref_s": t_pref(m.b_pref, self.hw),
                "critical_real": cc.value if cc.value is not None else cc.status,
                "critical_rounded": rounded,
                "sweep_var": m.sweep_var,
                "critical_ceil": cc.rounded if cc.rounded is not None else "",
                "workload_value": value,
                "min_residency": min_residency(m, w, self.hw),
            })
        cols = ["model", "f_star_flops", "i_star_flops_per_byte", "t_pref_s", "critical_real",
                "critical_rounded", "sweep_var", "critical_ceil", "workload_value", "min_residency"]
        self.emit("predict", _csv(rows, cols))

    def sweep(self):
        m = self.cfg.model(self.args.model)
        values = self.args.values or list(m.sweep_values)
        _check_increasing(values, "values")
        pols = [self.policy(p, self.args.chunk_bytes, self.args.residency) for p in self.args.policies]
        rows = []
        for v in values:
            for pol in pols:
                bd = self.simulate(m, v, pol)
                rows.append(sweep_row(m.name, m.sweep_var, v, pol, bd))
        charts = None
        if self.args.svg:
            step = {p.name: [r["step_time_s"] for r in rows if r["policy"] == p.name] for p in pols}
            mem = {p.name: [r["peak_param_bytes"] / 1e9 for r in rows if r["policy"] == p.name] for p in pols}
            charts = {
                f"sweep_{m.name}_step_time": svg.line_chart(f"{m.name}: step time", m.sweep_var, "step time (s)", values, step),
                f"sweep_{m.name}_memory": svg.line_chart(f"{m.name}: peak parameter memory", m.sweep_var, "GB", values, mem),
            }
        self.emit(f"sweep_{m.name}", _csv(rows, SWEEP_COLUMNS), charts)

    def breakdown(self):
        m = self.cfg.model(self.args.model)
        value = self.args.value if self.args.value is not None else m.sweep_values[0]
        pol = self.policy(self.args.policy or self.cfg.defaults.policy, self.args.chunk_bytes, self.args.residency)
        bd = self.simulate(m, value, pol)
        problems = validate_trace(bd)
        if problems:
            raise ValidationFailure("; ".join(problems))
        rows = [{"model": m.name, "value": value, "policy": pol.name, "category": c,
                 "seconds": s, "fraction": s / bd.step_time_s} for c, s in bd.categories().items()]
        charts = None
        if self.args.svg:
            ref = self.simulate(m, value, WholeLayer(), tag="reference")
            charts = {f"breakdown_{m.name}_{value}": svg.stacked_bar_chart(
                f"{m.name} {m.sweep_var}={value}: {pol.name} breakdown", m.sweep_var, "seconds", [value],
                {c: [s] for c, s in bd.categories().items()}, markers=[ref.step_time_s])}
        self.emit(f"breakdown_{m.name}_{value}",
                  _csv(rows, ["model", "value", "policy", "category", "seconds", "fraction"]), charts)

    def chunk_sweep(self):
        m = self.cfg.model(self.args.model)
        value = self.args.value if self.args.value is not None else m.sweep_values[0]
        sizes = self.args.chunks
        _check_increasing(sizes, "chunks")
        rows = []
        for c in sizes:
            pol = Chunked(c, self.args.residency if self.args.residency is not None else 0.0)
            rows.append(sweep_row(m.name, m.sweep_var, value, pol, self.simulate(m, value, pol)))
        charts = None
        if self.args.svg:
            charts = {f"chunk_sweep_{m.name}_{value}": svg.line_chart(
                f"{m.name} {m.sweep_var}={value}: step time vs chunk size", "chunk size (MB)", "step time (s)",
                [f"{c / 1e6:g}" for c in sizes], {"chunked": [r["step_time_s"] for r in rows]})}
        self.emit(f"chunk_sweep_{m.name}_{value}", _csv(rows, SWEEP_COLUMNS), charts)

    def residency_sweep(self):
        m = self.cfg.model(self.args.model)
        value = self.args.value if self.args.value is not None else m.sweep_values[0]
        rs = self.args.residencies
        _check_increasing(rs, "residencies")
        cb = self.args.chunk_bytes or self.cfg.defaults.chunk_bytes
        rows = []
        for r in rs:
            pol = Chunked(cb, r)
            rows.append(sweep_row(m.name, m.sweep_var, value, pol, self.simulate(m, value, pol)))
        charts = None
        if self.args.svg:
            labels = [f"{r:g}" for r in rs]
            charts = {
                f"residency_{m.name}_{value}_step_time": svg.line_chart(
                    f"{m.name} {m.sweep_var}={value}: step time vs residency", "residency", "step time (s)",
                    labels, {"chunked": [row["step_time_s"] for row in rows]}),
                f"residency_{m.name}_{value}_memory": svg.line_chart(
                    f"{m.name} {m.sweep_var}={value}: peak memory vs residency", "residency", "GB",
                    labels, {"chunked": [row["peak_param_bytes"] / 1e9 for row in rows]}),
            }
        self.emit(f"residency_sweep_{m.name}_{value}", _csv(rows, SWEEP_COLUMNS), charts)

    def roofline(self):
        m = self.cfg.model(self.args.model)
        values = self.args.values or list(m.sweep_values)
        ist = i_star(self.hw)
        grid = [ist * 10 ** (k / 4) for k in range(-12, 9)]
        rows = [{"kind": "roof", "label": "", "intensity_flops_per_byte": i, "attainable_flops_per_s": a, "hidden": ""}
                for i, a in roofline_points(self.hw, grid)]
        rows.append({"kind": "i_star", "label": "I*", "intensity_flops_per_byte": ist,
                     "attainable_flops_per_s": self.hw.compute_rate, "hidden": ""})
        markers = []
        for v in values:
            w = WorkloadPoint.at(m, v, self.hw)
            rep = overlap_report(m, w, self.hw)
            label = f"{m.sweep_var}={v}"
            att = roofline_points(self.hw, [rep.i_block])[0][1]
            rows.append({"kind": "marker", "label": label, "intensity_flops_per_byte": rep.i_block,
                         "attainable_flops_per_s": att, "hidden": rep.hidden})
            markers.append((label, rep.i_block, att))
        charts = None
        if self.args.svg:
            charts = {f"roofline_{m.name}": svg.roofline_chart(
                f"{m.name}: compute roof vs host-to-device roof", roofline_points(self.hw, grid), ist, markers)}
        cols = ["kind", "label", "intensity_flops_per_byte", "attainable_flops_per_s", "hidden"]
        self.emit(f"roofline_{m.name}", _csv(rows, cols), charts)


def sweep_row(model, sweep_var, value, policy, bd: StepBreakdown) -> dict:
    row = {"model": model, "sweep_var": sweep_var, "value": value, "policy": policy.name,
           "chunk_bytes": policy.chunk_bytes if isinstance(policy, Chunked) else 0,
           "residency": policy.residency if isinstance(policy, Chunked) else 0.0,
           "step_time_s": bd.step_time_s}
    for c in CATEGORIES:
        row[f"{c}_s"] = getattr(bd, f"{c}_s")
    row["peak_param_bytes"] = bd.peak_param_bytes
    row["total_h2d_bytes"] = bd.total_h2d_bytes
    return row


def _check_increasing(vals, what):
    if not vals:
        raise ConfigError(what, "list must be non-empty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(what, "values must be strictly increasing")


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _bytes_list(text):
    return [parse_bytes(x) for x in text.split(",") if x.strip()]


def _global_flags(p, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="JSON configuration file (default: built-in presets)")
    p.add_argument("--out", default=d(None), help="output directory for CSV/SVG (default: CSV to stdout)")
    p.add_argument("--svg", action="store_true", default=d(False), help="also write SVG charts")
    p.add_argument("--validate", action="store_true", default=d(False),
                   help="check every simulated trace; exit 4 on a violation")
    p.add_argument("--json-trace", dest="json_trace", default=d(None), help="write event traces as JSON lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="offloadsim", description=__doc__)
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", parents=[common], help="analytical thresholds per model")
    p.add_argument("--model", action="append", help="model name (repeatable; default: all)")
    p.add_argument("--value", type=int, help="sweep value for min_residency (default: smallest swept)")

    p = sub.add_parser("sweep", parents=[common], help="simulate policies across the sweep grid")
    p.add_argument("--model", required=True)
    p.add_argument("--values", type=_int_list)
    p.add_argument("--policies", type=lambda s: s.split(","), default=["no-offload", "chunked", "whole-layer"])
    p.add_argument("--chunk-bytes", type=parse_bytes)
    p.add_argument("--residency", type=float)

    p = sub.add_parser("breakdown", parents=[common], help="per-category step decomposition")
    p.add_argument("--model", required=True)
    p.add_argument("--value", type=int)
    p.add_argument("--policy")
    p.add_argument("--chunk-bytes", type=parse_bytes)
    p.add_argument("--residency", type=float)

    p = sub.add_parser("chunk-sweep", parents=[common], help="step time across chunk sizes")
    p.add_argument("--model", required=True)
    p.add_argument("--value", type=int)
    p.add_argument("--chunks", type=_bytes_list, default=[4 * 10**6, 16 * 10**6, 64 * 10**6, 256 * 10**6])
    p.add_argument("--residency", type=float)

    p = sub.add_parser("residency-sweep", parents=[common], help="step time and memory across residency")
    p.add_argument("--model", required=True)
    p.add_argument("--value", type=int)
    p.add_argument("--residencies", type=_float_list, default=[0.0, 0.2, 0.4, 0.6, 1.0])
    p.add_argument("--chunk-bytes", type=parse_bytes)

    p = sub.add_parser("roofline", parents=[common], help="roofline arms, I* and workload markers")
    p.add_argument("--model", required=True)
    p.add_argument("--values", type=_int_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            cfg = load_config_file(args.config)
        else:
            cfg = load_config({"hardware": {"preset": PRESET_NAMES[0]}})
        runner = Runner(args, cfg)
        getattr(runner, args.command.replace("-", "_"))()
        runner.write_traces()
    except ValidationFailure as e:
        print(f"validation failed: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return EXIT_SIM
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
