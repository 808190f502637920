"""Command-line entry point: ``footfall-lab <subcommand> [options]``."""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import json
import logging
import os
import sys
import tempfile
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__
from .clean import clean_all, read_footfall, write_footfall
from .config import PATH_KEYS, PipelineConfig, coerce, load_config
from .errors import ConfigError, ContainsMissing, FootfallError, InsufficientData, InvalidScenario, IoError
from .flows import (
    FlowDirection,
    FlowParams,
    PairGeometry,
    analyze_pairs,
    classify_flow,
    daily_correlations,
    preferred_direction,
    quadrant,
    quadrant_membership,
    read_pairs,
    read_te,
    write_flows,
    write_pairs,
    write_te,
)
from .impute import impute_gaps
from .ingest import aggregate_intervals, iter_probe_log, read_outages, write_intervals, write_outages, write_probe_log
from .routes import load_route_file, score_route_file, write_route_scores
from .series import decompose_additive, write_decomposition
from .synth import SynthScenario, cohort_scenario, generate_probe_stream, write_ground_truth

log = logging.getLogger("footfall_lab")

INTERVALS_CSV = "intervals.csv"
FOOTFALL_CSV = "footfall.csv"
IMPUTED_CSV = "footfall_imputed.csv"
TE_CSV = "te.csv"
SKIPPED_CSV = "skipped_days.csv"
FLOWS_CSV = "flows.csv"
PREFERRED_CSV = "preferred.csv"
CORRELATIONS_CSV = "correlations.csv"
QUADRANTS_CSV = "quadrants.csv"
ROUTES_CSV = "route_scores.csv"
EFFECTIVE_CONFIG = "effective_config.toml"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


@contextlib.contextmanager
def atomic_open(path):
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _open_input(path, key):
    if not path:
        raise ConfigError(f"{key}: no input path given (set --{key.replace('_', '-')} or '{key}' in the config)", key)
    try:
        return open(path, newline="")
    except OSError as exc:
        raise IoError(f"cannot read {key} file {path}: {exc.strerror}", str(path)) from None


def _flow_params(cfg: PipelineConfig) -> FlowParams:
    return FlowParams(
        bins=cfg.bins, strategy=cfg.strategy, lag=cfg.lag, n_surrogates=cfg.surrogates, alpha=cfg.alpha,
        epsilon_bits=cfg.epsilon_bits, coverage_threshold=cfg.coverage_threshold, seed=cfg.seed,
        timezone=cfg.timezone,
    )


def _figures_dir(out: Path) -> Path:
    path = out / "figures"
    path.mkdir(parents=True, exist_ok=True)
    return path


def stage_ingest(cfg, out):
    outages = []
    if cfg.outages:
        with _open_input(cfg.outages, "outages") as fh:
            outages = read_outages(fh)
    problems = []
    with _open_input(cfg.probes, "probes") as fh:
        summaries = aggregate_intervals(
            iter_probe_log(fh, lenient=cfg.lenient, problems=problems), cfg.step_seconds, outages)
    if problems:
        log.warning("%d malformed probe-log lines skipped", len(problems))
    with atomic_open(out / INTERVALS_CSV) as fh:
        write_intervals(summaries, fh)
    return summaries


def stage_clean(cfg, out, summaries):
    series = clean_all(summaries, cfg.dwell_window_minutes * 60, cfg.step_seconds)
    with atomic_open(out / FOOTFALL_CSV) as fh:
        write_footfall(series.values(), fh)
    return series


def stage_impute(cfg, out, series, figures=False):
    imputed = {}
    for sid, s in series.items():
        try:
            imputed[sid] = impute_gaps(s, max_gap=cfg.max_gap_minutes * 60)
        except InsufficientData as exc:
            log.warning("sensor %s not imputed: %s", sid, exc)
            imputed[sid] = s
    with atomic_open(out / IMPUTED_CSV) as fh:
        write_footfall(imputed.values(), fh)
    if figures:
        from .plotting import plot_footfall

        plot_footfall(imputed.values(), _figures_dir(out) / "footfall.png")
    return imputed


def stage_te(cfg, out, series, pairs, jobs=1):
    results = analyze_pairs(series, pairs, _flow_params(cfg), jobs=jobs)
    with atomic_open(out / TE_CSV) as fh:
        write_te(results, fh)
    with atomic_open(out / SKIPPED_CSV) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("pair", "date", "reason"))
        for fs in results:
            for day, reason in fs.skipped:
                writer.writerow((fs.pair_id, day.isoformat(), reason))
    return [r for fs in results for r in fs.results]


def stage_flows(cfg, out, te_results, figures=False):
    rows = [(r, classify_flow(r.ab, r.ba, cfg.epsilon_bits, cfg.alpha, r.p_max)) for r in te_results]
    with atomic_open(out / FLOWS_CSV) as fh:
        write_flows(rows, fh)
    by_pair = {}
    for r, code in rows:
        by_pair.setdefault(r.pair_id, []).append(int(code))
    with atomic_open(out / PREFERRED_CSV) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("pair", "n_days", "pct_-1", "pct_0", "pct_1", "pct_2", "preferred"))
        for pair_id, codes in by_pair.items():
            counts = Counter(codes)
            pref = preferred_direction(codes, cfg.preferred_direction_threshold)
            pct = [repr(100.0 * counts[c] / len(codes)) for c in FlowDirection]
            writer.writerow((pair_id, len(codes), *pct, "" if pref is None else int(pref)))
    if figures and rows:
        from .plotting import plot_flow_codes

        plot_flow_codes(rows, _figures_dir(out) / "flow_codes.png")
    return rows


def stage_quadrants(cfg, out, series, pairs, figures=False):
    center = (cfg.quadrant_seconds, cfg.quadrant_correlation)
    points = []
    with atomic_open(out / CORRELATIONS_CSV) as fc, atomic_open(out / QUADRANTS_CSV) as fq:
        wc = csv.writer(fc, lineterminator="\n")
        wq = csv.writer(fq, lineterminator="\n")
        wc.writerow(("pair", "date", "walking_seconds", "correlation", "quadrant"))
        wq.writerow(("pair", "quadrant", "percent"))
        for g in pairs:
            if g.sensor_a not in series or g.sensor_b not in series:
                continue
            rows, _ = daily_correlations(series[g.sensor_a], series[g.sensor_b], cfg.timezone, cfg.coverage_threshold)
            for day, r in rows:
                wc.writerow((g.pair_id, day.isoformat(), repr(g.walking_seconds), repr(r),
                             quadrant(g.walking_seconds, r, center).value))
                points.append((g.walking_seconds, r))
            if rows:
                m = quadrant_membership(g.pair_id, [r for _, r in rows], g.walking_seconds, center)
                for q, pct in m.percent.items():
                    wq.writerow((g.pair_id, q.value, repr(pct)))
    if figures:
        from .plotting import plot_quadrants

        plot_quadrants(points, _figures_dir(out) / "quadrants.png", center)


def _load_footfall(cfg):
    with _open_input(cfg.footfall, "footfall") as fh:
        return read_footfall(fh, cfg.step_seconds)


def _load_pairs(cfg):
    with _open_input(cfg.pairs, "pairs") as fh:
        return read_pairs(fh)


def cmd_ingest(cfg, args, out):
    summaries = stage_ingest(cfg, out)
    log.info("aggregated %d sensors", len(summaries))


def cmd_clean(cfg, args, out):
    stage_clean(cfg, out, stage_ingest(cfg, out))


def cmd_impute(cfg, args, out):
    stage_impute(cfg, out, _load_footfall(cfg), args.figures)


def cmd_decompose(cfg, args, out):
    series = _load_footfall(cfg)
    if args.sensor not in series:
        raise ConfigError(f"sensor {args.sensor!r} not in {cfg.footfall}", "sensor")
    s = series[args.sensor]
    values = s.values
    period = args.period
    if args.daily:
        values = _daily_totals(s, cfg.timezone)
        period = args.period if args.period_given else 7
    dec = decompose_additive(values, period)
    with atomic_open(out / f"decomposition_{args.sensor}.csv") as fh:
        write_decomposition(dec, fh)
    if args.figures:
        from .plotting import plot_decomposition

        plot_decomposition(dec, _figures_dir(out) / f"decomposition_{args.sensor}.png", args.sensor)


def _daily_totals(s, tz):
    from .flows import local_days

    totals = []
    for day, lo, n in local_days(s, tz):
        v = s.reindex(lo, n).values
        if np.isnan(v).any():
            raise ContainsMissing(f"day {day} of {s.sensor_id} is incomplete; cannot form daily totals")
        totals.append(v.sum())
    return np.array(totals)


def cmd_te(cfg, args, out):
    stage_te(cfg, out, _load_footfall(cfg), _load_pairs(cfg), args.jobs)


def cmd_flows(cfg, args, out):
    with _open_input(cfg.te, "te") as fh:
        te_results = read_te(fh)
    stage_flows(cfg, out, te_results, args.figures)


def cmd_quadrants(cfg, args, out):
    stage_quadrants(cfg, out, _load_footfall(cfg), _load_pairs(cfg), args.figures)


def cmd_route_score(cfg, args, out):
    with _open_input(cfg.routes, "routes") as fh:
        entries = load_route_file(fh)
    target = Path(args.out) if args.out else out / ROUTES_CSV
    with atomic_open(target) as fh:
        write_route_scores(score_route_file(entries, multi_match=not args.first_word_only), fh)


def cmd_synth(cfg, args, out):
    pair_rows = None
    if args.cohort_pairs:
        scenario, pair_rows = cohort_scenario(
            n_sensors=args.cohort_sensors, n_pairs=args.cohort_pairs, days=args.days, seed=cfg.seed)
    elif cfg.scenario:
        with _open_input(cfg.scenario, "scenario") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidScenario(f"{cfg.scenario}: invalid JSON: {exc.msg}") from None
        pair_rows = raw.pop("pairs", None)
        scenario = SynthScenario.from_dict(raw)
        if args.seed is not None:
            scenario = dataclasses.replace(scenario, seed=cfg.seed)
    else:
        scenario = SynthScenario(seed=cfg.seed)
    if pair_rows is None:
        rng = np.random.default_rng([scenario.seed, 0x9A])
        pair_rows = [(c.source, c.target, float(rng.uniform(30.0, 300.0))) for c in scenario.coupling]
    events, truth = generate_probe_stream(scenario)
    with atomic_open(out / "probes.jsonl") as fh:
        write_probe_log(events, fh)
    with atomic_open(out / "outages.csv") as fh:
        write_outages(truth.outages, fh)
    with atomic_open(out / "ground_truth.csv") as fh:
        write_ground_truth(truth, fh)
    with atomic_open(out / "pairs.csv") as fh:
        write_pairs([PairGeometry(a, b, float(w)) for a, b, w in pair_rows], fh)
    with atomic_open(out / "scenario.json") as fh:
        json.dump(scenario.to_dict() | {"pairs": [list(p) for p in pair_rows]}, fh, indent=2, sort_keys=True)
    log.info("wrote %d probe events for %d sensors", len(events), scenario.n_sensors)


def cmd_pipeline(cfg, args, out):
    pairs = _load_pairs(cfg)
    summaries = stage_ingest(cfg, out)
    series = stage_clean(cfg, out, summaries)
    imputed = stage_impute(cfg, out, series, args.figures)
    te_results = stage_te(cfg, out, imputed, pairs, args.jobs)
    stage_flows(cfg, out, te_results, args.figures)
    stage_quadrants(cfg, out, imputed, pairs, args.figures)


COMMANDS = {
    "ingest": cmd_ingest,
    "clean": cmd_clean,
    "impute": cmd_impute,
    "decompose": cmd_decompose,
    "te": cmd_te,
    "flows": cmd_flows,
    "quadrants": cmd_quadrants,
    "route-score": cmd_route_score,
    "synth": cmd_synth,
    "pipeline": cmd_pipeline,
}


def build_parser():
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="flat TOML config file")
    g.add_argument("--out-dir", default=".", help="output directory (default: current)")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int, default=1, help="worker processes for pair analysis")
    g.add_argument("--figures", action="store_true", help="also render report figures")
    g.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="footfall-lab", description=__doc__, parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    def inputs(p, *keys):
        for key in keys:
            p.add_argument(f"--{key}", dest=key, metavar="PATH")

    def probe_opts(p):
        inputs(p, "probes", "outages")
        p.add_argument("--lenient", action="store_const", const=True, help="skip malformed lines")
        p.add_argument("--step-seconds", dest="step_seconds", type=int)
        p.add_argument("--dwell-window-minutes", dest="dwell_window_minutes", type=int)

    def te_opts(p):
        p.add_argument("--bins", type=int)
        p.add_argument("--strategy", choices=("equal_frequency", "equal_width"))
        p.add_argument("--lag", type=int)
        p.add_argument("--surrogates", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--coverage-threshold", dest="coverage_threshold", type=float)
        p.add_argument("--timezone")

    def flow_opts(p):
        p.add_argument("--alpha", type=float)
        p.add_argument("--epsilon-bits", dest="epsilon_bits", type=float)
        p.add_argument("--preferred-direction-threshold", dest="preferred_direction_threshold", type=float)

    probe_opts(add("ingest", "aggregate a probe log into interval summaries"))
    probe_opts(add("clean", "ingest, remove long dwellers and estimate footfall"))

    p = add("impute", "fill short gaps in a footfall CSV")
    inputs(p, "footfall")
    p.add_argument("--max-gap-minutes", dest="max_gap_minutes", type=float)

    p = add("decompose", "additive trend/seasonal/residual decomposition of one sensor")
    inputs(p, "footfall")
    p.add_argument("--sensor", required=True)
    p.add_argument("--period", type=int)
    p.add_argument("--daily", action="store_true", help="decompose daily totals (default period 7)")
    p.add_argument("--timezone")

    p = add("te", "daily transfer entropy with surrogate p-values per sensor pair")
    inputs(p, "footfall", "pairs")
    te_opts(p)

    p = add("flows", "direction codes and preferred direction from a TE CSV")
    inputs(p, "te")
    flow_opts(p)

    p = add("quadrants", "correlation/walking-time quadrant membership per pair")
    inputs(p, "footfall", "pairs")
    p.add_argument("--coverage-threshold", dest="coverage_threshold", type=float)
    p.add_argument("--timezone")
    p.add_argument("--quadrant-seconds", dest="quadrant_seconds", type=float)
    p.add_argument("--quadrant-correlation", dest="quadrant_correlation", type=float)

    p = add("route-score", "complexity score of the fastest cached walking route")
    inputs(p, "routes")
    p.add_argument("--out", help="output CSV (default: OUT_DIR/route_scores.csv)")
    p.add_argument("--first-word-only", action="store_true", help="count only the first table word per step")

    p = add("synth", "generate a synthetic probe log with ground truth")
    inputs(p, "scenario")
    p.add_argument("--cohort-pairs", type=int, default=0, help="generate a multi-pair cohort instead")
    p.add_argument("--cohort-sensors", type=int, default=20)
    p.add_argument("--days", type=int, default=30)

    p = add("pipeline", "ingest -> clean -> impute -> te -> flows (+ quadrants)")
    probe_opts(p)
    inputs(p, "pairs")
    p.add_argument("--max-gap-minutes", dest="max_gap_minutes", type=float)
    te_opts(p)
    p.add_argument("--epsilon-bits", dest="epsilon_bits", type=float)
    p.add_argument("--preferred-direction-threshold", dest="preferred_direction_threshold", type=float)
    return parser


def _configure_logging(verbose):
    level = os.environ.get("FOOTFALL_LAB_LOG", "").upper()
    if verbose:
        level = "DEBUG" if verbose > 1 else "INFO"
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _error_report(exc):
    report = {"status": "error", "error": type(exc).__name__, "message": str(exc)}
    for attr in ("key", "path", "line"):
        value = getattr(exc, attr, None)
        if value is not None:
            report[attr] = value
    return report


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args.verbose)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1", "jobs")
        cfg = load_config(args.config) if args.config else PipelineConfig()
        keys = {f.name for f in dataclasses.fields(PipelineConfig)}
        overrides = {k: v for k, v in vars(args).items() if k in keys and v is not None}
        for key in PATH_KEYS:
            if overrides.get(key):
                overrides[key] = str(Path(overrides[key]).resolve())
        cfg = coerce(overrides, dataclasses.asdict(cfg))
        if args.command == "decompose":
            args.period_given = args.period is not None
            if args.period is None:
                args.period = 288
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args, out)
        with atomic_open(out / EFFECTIVE_CONFIG) as fh:
            fh.write(cfg.to_toml())
    except FootfallError as exc:
        print(json.dumps(_error_report(exc)), file=sys.stderr)
        return 1
    except OSError as exc:
        err = IoError(f"{exc.strerror}: {exc.filename}", exc.filename)
        print(json.dumps(_error_report(err)), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
