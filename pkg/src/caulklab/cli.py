"""Command-line entry point: ``caulk <command> CONFIG [--set key=value ...]``.

Every command writes into one output directory and finishes with a
``manifest.json`` listing each emitted file with its sha256 digest. Exit
codes: 0 success, 1 probative verification failure, 2 config error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import math
import sys
import traceback
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .caulking import CaulkedModel
from .config import (
    OUTPUT_KEY,
    block,
    check_keys,
    config_hash,
    dump_config,
    get_float,
    get_int,
    load_config,
    master_seed,
)
from .errors import CaulkError, ConfigError, FormatError
from .experiments import (
    build_depth_setup,
    build_m_setup,
    build_pretrained,
    build_rate_setup,
    build_target,
    theoretical_for,
)
from .function_spaces import serialize_target
from .network import ReluNetwork, serialize_network
from .parallel import run_cells, worker_count
from .rates import ORACLE, RateTable, count_inversions, fit_power_law, fit_trial, run_depth_sweep, run_m_sweep, run_rate_sweep, spearman
from .seeding import derive_seed
from . import svg
from .verify import VerifySettings, bound_consistency_report, run_verify_suite

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
MANIFEST = "manifest.json"

RATE_HEADER = ("n", "trials", "mean_error", "std_error")
TRIAL_HEADER = ("model_id", "n", "seed", "l2_estimate", "l2_stderr", "excess_estimate", "train_loss")
DEPTH_HEADER = ("variant", "depth", "mean_error", "std_error", "is_min")
M_HEADER = ("m", "exponent", "r_squared")
M_RATE_HEADER = ("m", "n", "trials", "mean_error", "std_error")
TRACE_HEADER = ("epoch", "loss")


# --- output plumbing ------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunWriter:
    """Writes files into the run directory and records them for the manifest."""

    def __init__(self, out_dir: Path, command: str, digest: str):
        self.dir = Path(out_dir)
        self.command = command
        self.digest = digest
        self.started = _now()
        self.files: list[str] = []
        self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
        if name not in self.files:
            self.files.append(name)
        return path

    def finish(self) -> Path:
        entries = [
            {"path": name, "sha256": sha256_file(self.dir / name), "bytes": (self.dir / name).stat().st_size}
            for name in sorted(self.files)
        ]
        manifest = {
            "tool": "caulklab",
            "version": __version__,
            "command": self.command,
            "config_hash": self.digest,
            "started": self.started,
            "finished": _now(),
            "files": entries,
        }
        return self.write(MANIFEST, json_text(manifest))


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def validate_manifest(out_dir: str | Path) -> list[str]:
    """Files whose digests do not match the manifest (empty when all good)."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / MANIFEST).read_text())
    bad = []
    for entry in manifest["files"]:
        path = out_dir / entry["path"]
        if not path.is_file() or sha256_file(path) != entry["sha256"]:
            bad.append(entry["path"])
    return bad


# --- commands -------------------------------------------------------------------


def _start(config: dict, command: str, out: str | None) -> RunWriter:
    digest = config_hash(config)
    target = out or config.get(OUTPUT_KEY) or f"runs/{command}-{digest[:12]}"
    writer = RunWriter(Path(target), command, digest)
    writer.write("config.yaml", dump_config(config))
    return writer


def cmd_gen_target(config: dict, out: str | None = None, workers: int | None = None) -> int:
    check_keys(config, ("master_seed", "output_dir", "composition"))
    target = build_target(config)
    writer = _start(config, "gen-target", out)
    writer.write("target.txt", serialize_target(target))
    writer.write("composition.yaml", dump_config({"composition": target.spec.to_config()}))
    writer.finish()
    return EXIT_OK


def cmd_pretrain(config: dict, out: str | None = None, workers: int | None = None) -> int:
    check_keys(config, ("master_seed", "output_dir", "composition", "pretrain"))
    target = build_target(config)
    pretrained = build_pretrained(config, target, master_seed(config))
    writer = _start(config, "pretrain", out)
    writer.write("target.txt", serialize_target(target))
    model = {
        "provenance": pretrained.provenance,
        "split": list(pretrained.split),
        "m": pretrained.m,
        "adapter_in_dim": pretrained.adapter_in_dim,
        "adapter_out_dim": pretrained.adapter_out_dim,
    }
    if pretrained.source_net is not None:
        writer.write("source_net.txt", serialize_network(pretrained.source_net))
        writer.write("source_trace.csv", csv_text(TRACE_HEADER, pretrained.source_trace.csv_rows()))
        model["source_net"] = "source_net.txt"
        model["final_loss"] = pretrained.source_trace.final_loss
    writer.write("model.json", json_text(model))
    writer.finish()
    return EXIT_OK


def _single_fit(config: dict, out: str | None, workers: int | None, kind: str) -> int:
    n = get_int(config, "n", minimum=1)
    setup = build_rate_setup(config, model=kind, n_grid=(n,))
    seed = master_seed(config)
    cells = [(t, (setup, n, t, seed)) for t in range(setup.trials)]
    results = run_cells(fit_trial, cells, workers)
    writer = _start(config, kind, out)
    rows = []
    for t, (model, res) in results:
        model_id = f"{kind}-n{n}-t{t}"
        net = model.adapter if isinstance(model, CaulkedModel) else model
        if isinstance(net, ReluNetwork):
            writer.write(f"models/{model_id}.txt", serialize_network(net))
        rows.append((model_id, n, derive_seed(seed, "sample", n, t), res.error, res.std_error, res.excess, res.train_loss))
    writer.write("results.csv", csv_text(TRIAL_HEADER, rows))
    if kind == "caulk":
        p = setup.pretrained
        writer.write("model.json", json_text({"provenance": p.provenance, "split": list(p.split), "m": p.m}))
    writer.finish()
    return EXIT_OK


def cmd_caulk(config, out=None, workers=None) -> int:
    return _single_fit(config, out, workers, "caulk")


def cmd_scratch(config, out=None, workers=None) -> int:
    return _single_fit(config, out, workers, "scratch")


def _trial_rows(table: RateTable, kind: str, seed: int, prefix: str = ""):
    for r in table.trials:
        yield (f"{prefix}{kind}-n{r.n}-t{r.trial}", r.n, derive_seed(seed, "sample", r.n, r.trial), r.error, r.std_error, r.excess, r.train_loss)


def _rate_rows(table: RateTable):
    return [(r.n, r.trials, r.mean_error, r.std_error) for r in table.rows]


def _log_cover_proxy(setup) -> float:
    if setup.model == "caulk":
        return float(setup.adapter.for_model(setup.pretrained).network_spec().num_params)
    if setup.model == "scratch":
        return float(setup.scratch_spec.num_params)
    return 0.0


def cmd_rate_sweep(config: dict, out: str | None = None, workers: int | None = None) -> int:
    setup = build_rate_setup(config)
    seed = master_seed(config)
    table = run_rate_sweep(setup, seed, workers)
    writer = _start(config, "rate-sweep", out)
    writer.write("rates.csv", csv_text(RATE_HEADER, _rate_rows(table)))
    writer.write("trials.csv", csv_text(TRIAL_HEADER, _trial_rows(table, setup.model, seed)))
    split = setup.pretrained.split if setup.pretrained is not None else None
    summary = {
        "model": setup.model,
        "config_hash": setup.config_hash,
        "theoretical": theoretical_for(config, setup.target, split),
        "spearman": spearman(table.errors, table.ns) if len(table.rows) > 1 else math.nan,
    }
    if len(table.rows) >= 3 and np.all(table.errors > 0):
        fit = fit_power_law(table)
        summary.update(exponent=fit.exponent, intercept=fit.intercept, r_squared=fit.r_squared, n_range=list(fit.n_range))
        writer.write("rate.svg", svg.rate_plot(list(table.ns), list(table.errors), [r.std_error for r in table.rows], fit.exponent, fit.intercept))
    else:
        summary.update(exponent=math.nan, intercept=math.nan, r_squared=math.nan, n_range=[table.rows[0].n, table.rows[-1].n])
    writer.write("exponent.json", json_text(summary))
    # diagnostic only: implied constant of the oracle-inequality shape, parameter count as log-cover proxy
    ns = [r.n for r in table.rows]
    if setup.model != "truth":
        report = bound_consistency_report(
            ns, list(table.errors), 0.0,
            [_log_cover_proxy(setup) * math.log(n) for n in ns], [1.0 / n for n in ns],
            f_scale=1.0, sigma=setup.noise_sigma,
        )
        writer.write("consistency.json", json_text(report.to_json()))
    writer.finish()
    return EXIT_OK


def cmd_depth_sweep(config: dict, out: str | None = None, workers: int | None = None) -> int:
    setup = build_depth_setup(config)
    table = run_depth_sweep(setup, master_seed(config), workers)
    writer = _start(config, "depth-sweep", out)
    writer.write("depth.csv", csv_text(DEPTH_HEADER, [(r.variant, r.depth, r.mean_error, r.std_error, r.is_min) for r in table.rows]))
    writer.write("depth.json", json_text({"config_hash": setup.config_hash, "min_depth": {v: table.min_depth(v) for v in table.variants}}))
    writer.write("depth.svg", _depth_svg([(r.variant, r.depth, r.mean_error, r.std_error, r.is_min) for r in table.rows]))
    writer.finish()
    return EXIT_OK


def _depth_svg(rows) -> str:
    series: dict = {}
    for variant, depth, mean, se, is_min in rows:
        depths, means, ses, best = series.get(variant, ([], [], [], None))
        depths.append(depth)
        means.append(mean)
        ses.append(se)
        series[variant] = (depths, means, ses, depth if is_min else best)
    return svg.depth_plot(series)


def cmd_m_sweep(config: dict, out: str | None = None, workers: int | None = None) -> int:
    setup = build_m_setup(config)
    rows = run_m_sweep(setup, master_seed(config), workers)
    writer = _start(config, "m-sweep", out)
    writer.write("m_sweep.csv", csv_text(M_HEADER, [(r.m, r.exponent, r.r_squared) for r in rows]))
    writer.write("m_rates.csv", csv_text(M_RATE_HEADER, [(r.m, *row) for r in rows for row in _rate_rows(r.table)]))
    exps = [r.exponent for r in rows]
    oracle_best = rows[-1].m == ORACLE and all(rows[-1].exponent < e for e in exps[:-1])
    writer.write("m_sweep.json", json_text({
        "config_hash": setup.config_hash,
        "exponents": {str(r.m): r.exponent for r in rows},
        "inversions": count_inversions(exps),
        "oracle_strictly_best": oracle_best,
    }))
    writer.write("m_sweep.svg", svg.exponent_plot([str(r.m) for r in rows], exps))
    writer.finish()
    return EXIT_OK


VERIFY_KEYS = tuple(VerifySettings.__dataclass_fields__)


def cmd_verify(config: dict, out: str | None = None, workers: int | None = None) -> int:
    check_keys(config, ("master_seed", "output_dir", "verify"))
    raw = block(config, "verify", required=False)
    check_keys(raw, VERIFY_KEYS, "verify")
    settings = dict(raw)
    for key in ("deltas", "lemma_ns", "lemma_sigmas"):
        if key in settings:
            if not isinstance(settings[key], list):
                raise ConfigError(f"verify.{key}", "expected a list")
            settings[key] = tuple(settings[key])
    try:
        settings = VerifySettings(**settings)
    except (TypeError, CaulkError) as exc:
        raise ConfigError("verify", str(exc)) from None
    result = run_verify_suite(settings, master_seed(config))
    writer = _start(config, "verify", out)
    for name, report in result.reports.items():
        writer.write(f"reports/{name}.json", json_text(report))
    for i, failure in enumerate(result.failures):
        writer.write(f"failures/failure_{i:03d}.json", json_text(failure))
    writer.write("summary.json", json_text({
        "passed": result.passed,
        "failures": len(result.failures),
        "checks": sorted(k for k in result.reports if k != "smoke_covering"),
        "non_probative": ["smoke_covering"] if "smoke_covering" in result.reports else [],
    }))
    writer.finish()
    return EXIT_OK if result.passed else EXIT_VERIFY


PLOT_KINDS = {"rate": RATE_HEADER, "depth": DEPTH_HEADER, "m": M_HEADER}


def _read_csv(path: Path) -> tuple[tuple[str, ...], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}", 0) from None
    if not rows:
        raise FormatError("empty CSV", 1)
    return tuple(rows[0]), rows[1:]


def plot_svg(csv_path: str | Path, kind: str | None = None) -> str:
    """SVG for a rate, depth or m-sweep CSV; the schema is checked against ``kind``."""
    header, rows = _read_csv(Path(csv_path))
    if kind is None:
        kind = next((k for k, h in PLOT_KINDS.items() if h == header), None)
        if kind is None:
            raise FormatError(f"unknown CSV schema {','.join(header)}", 1)
    if kind not in PLOT_KINDS:
        raise FormatError(f"unknown plot kind {kind!r}", 0)
    if header != PLOT_KINDS[kind]:
        raise FormatError(f"{kind} plot expects columns {','.join(PLOT_KINDS[kind])}, got {','.join(header)}", 1)
    if not rows:
        raise FormatError("CSV has no data rows", 2)
    try:
        if kind == "rate":
            ns = [float(r[0]) for r in rows]
            means = [float(r[2]) for r in rows]
            ses = [float(r[3]) for r in rows]
            if min(ns) <= 0 or min(means) <= 0:
                raise FormatError("log-log plot needs positive n and errors", 2)
            if len(rows) >= 3:
                table = RateTable.from_arrays(ns, means, ses)
                fit = fit_power_law(table)
                slope, intercept = fit.exponent, fit.intercept
            else:
                slope, intercept = 0.0, math.log(means[0])
            return svg.rate_plot(ns, means, ses, slope, intercept)
        if kind == "depth":
            parsed = [(r[0], int(r[1]), float(r[2]), float(r[3]), r[4] == "true") for r in rows]
            if min(p[2] for p in parsed) <= 0:
                raise FormatError("depth plot needs positive errors", 2)
            return _depth_svg(parsed)
        return svg.exponent_plot([r[0] for r in rows], [float(r[1]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed {kind} CSV: {exc}", 2) from None


def cmd_plot(csv_path: str, kind: str | None, out: str | None) -> int:
    text = plot_svg(csv_path, kind)
    source = Path(csv_path)
    out_dir = Path(out) if out else source.parent / "plots"
    writer = RunWriter(out_dir, "plot", hashlib.sha256(source.read_bytes()).hexdigest())
    writer.write(f"{source.stem}.svg", text)
    writer.finish()
    return EXIT_OK


COMMANDS = {
    "gen-target": cmd_gen_target,
    "pretrain": cmd_pretrain,
    "caulk": cmd_caulk,
    "scratch": cmd_scratch,
    "rate-sweep": cmd_rate_sweep,
    "depth-sweep": cmd_depth_sweep,
    "m-sweep": cmd_m_sweep,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caulk", description="Transfer learning by caulking: experiments and checks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="YAML config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="dotted-path override, applied before hashing")
        p.add_argument("--out", help="output directory (default: config output_dir, else runs/<command>-<hash>)")
        p.add_argument("--workers", type=int, help="worker processes (capped by CAULK_THREADS)")
    p = sub.add_parser("plot")
    p.add_argument("csv", help="rate, depth or m-sweep CSV")
    p.add_argument("--kind", choices=sorted(PLOT_KINDS), help="schema to expect (default: detect from header)")
    p.add_argument("--out", help="output directory (default: plots/ next to the CSV)")
    return parser


def _workers(requested: int | None) -> int:
    cap = worker_count()
    return cap if requested is None else max(1, min(requested, cap))


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            return cmd_plot(args.csv, args.kind, args.out)
        config = load_config(args.config, args.overrides)
        return COMMANDS[args.command](config, args.out, _workers(args.workers))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CaulkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception:  # anything else is a bug or an environment failure
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
