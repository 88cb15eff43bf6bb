"""Command line entry point: ``chaincluster {bitcoin|ethereum|synth|advertise}``.

Exit codes: 0 success, 1 internal or numerical error, 2 configuration or
validation error.
"""
import argparse
import csv
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .adpayload import STRATEGIES, build_tx_sketch
from .cluster import (ALG1, ALG2, MODES, SMALLEST_EIG, elbow_select, lowrank_cluster,
                      spectral_cluster, token_cluster)
from .errors import ChainClusterError, NumericalError, ParseError, ValidationError
from .graph import build_user_graph
from .ingest_btc import (CANONICAL, associate_change_address, associate_common_spend,
                         filter_by_occurrence, load_column_map, parse_contraction,
                         parse_tx_files)
from .ingest_eth import (build_attention_matrix, filter_bipartite, normalize_rows_cols,
                         read_holdings, read_prices)
from .metrics import MetricReport, modularity, recovery_rate, silhouette
from .synth import SynthSpec, gen_signals

log = logging.getLogger("chaincluster")

DEFAULT_SEED = 2019
DEFAULT_K_RANGE = "2..10"


class ConfigError(ValidationError):
    pass


# ---------------------------------------------------------------- helpers

def parse_range(text):
    try:
        lo, hi = (int(p) for p in text.split(".."))
    except ValueError:
        raise ConfigError(f"bad range {text!r}; expected a..b") from None
    if hi < lo:
        raise ConfigError(f"empty range {text!r}")
    return lo, hi


def parse_values(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad value list {text!r}") from None


def read_kv(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}: expected key = value", no)
            key, val = (p.strip() for p in line.split("=", 1))
            values[key.lstrip("-").replace("-", "_")] = val
    return values


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def apply_config(parser, values):
    """Turn config-file entries into parser defaults; flags still win."""
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in values.items():
        if key == "config":
            continue
        action = actions.get(key)
        if action is None:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = _bool(raw)
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        else:
            defaults[key] = raw
        if action.choices is not None and defaults[key] not in action.choices:
            raise ConfigError(f"{key} must be one of {list(action.choices)}")
    parser.set_defaults(**defaults)


def _open_lines(path):
    if not os.path.exists(path):
        raise ConfigError(f"no such file: {path}")
    return open(path, encoding="utf-8", newline="")


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _float_or_none(x):
    return None if x is None else float(x)


def assignment_payload(result, nodes, report: MetricReport, extra=None):
    out = {
        "mode": result.mode,
        "k": int(result.k),
        "seed": int(result.seed),
        "nodes": list(nodes),
        "labels": [int(v) for v in result.labels],
        "sizes": result.sizes(),
        "distortion": float(result.distortion),
        "silhouette": _float_or_none(report.silhouette),
        "modularity": _float_or_none(report.modularity),
        "flags": list(result.flags),
    }
    if report.recovery is not None:
        out["recovery"] = float(report.recovery)
    if extra:
        out.update(extra)
    return out


def write_coords(path, nodes, points, labels):
    pts = np.asarray(points)
    if pts.shape[1] < 2:
        pts = np.hstack([pts, np.zeros((pts.shape[0], 2 - pts.shape[1]))])
    write_csv(path, ["node", "x", "y", "label"],
              ([node, pts[i, 0], pts[i, 1], int(labels[i])] for i, node in enumerate(nodes)))


def read_truth(path, nodes):
    """Labels aligned to ``nodes`` from ``id label`` or ``id,label`` lines."""
    mapping = {}
    with _open_lines(path) as fh:
        for no, raw in enumerate(fh, 1):
            parts = raw.replace(",", " ").split()
            if not parts or (no == 1 and parts[0] in ("id", "node")):
                continue
            if len(parts) != 2:
                raise ParseError(f"{path}: expected 'id label'", no)
            mapping[parts[0]] = parts[1]
    missing = [n for n in nodes if str(n) not in mapping]
    if missing:
        raise ValidationError(f"truth file has no label for {len(missing)} node(s), e.g. {missing[0]}")
    return np.array([mapping[str(n)] for n in nodes])


def _metrics(points, W, result, unweighted=False, truth=None):
    sil = silhouette(points, result) if result.k >= 2 else None
    mod = modularity(W, result, unweighted=unweighted) if np.asarray(W).sum() > 0 else None
    rec = recovery_rate(result, truth) if truth is not None else None
    return MetricReport(sil, mod, rec)


def _choose_k(args, data, n, method):
    if args.k is not None:
        return args.k, None
    lo, hi = parse_range(args.k_range)
    hi = min(hi, n - 1)
    if hi - lo + 1 < 3:
        raise ConfigError(f"k range {args.k_range} leaves fewer than 3 candidates for n={n}; pass --k")
    elbow = elbow_select(data, range(lo, hi + 1), args.seed, method, args.mode,
                         center=getattr(args, "center", False))
    return elbow.k_star, elbow


def _column_map(path):
    if not path:
        return None
    with _open_lines(path) as fh:
        return load_column_map(fh)


def _write_elbow(out, elbow):
    if elbow is not None:
        write_csv(os.path.join(out, "elbow.csv"), ["k", "distortion"], elbow.curve)


# ------------------------------------------------------------ subcommands

def cmd_bitcoin(args):
    txin_cols = _column_map(args.columns) or CANONICAL
    txout_cols = _column_map(args.out_columns) or txin_cols
    tx_range = parse_range(args.tx_range) if args.tx_range else None
    with _open_lines(args.txin) as fin, _open_lines(args.txout) as fout:
        txs = parse_tx_files(fin, fout, txin_cols, txout_cols, tx_range)
    base = None
    if args.contraction:
        with _open_lines(args.contraction) as fh:
            base = parse_contraction(fh)
    partition = associate_common_spend(txs, base)
    if args.change_address:
        partition = associate_change_address(txs, partition)
    kept, surviving = filter_by_occurrence(txs, partition, args.min_occ)
    graph = build_user_graph(kept, partition, surviving)
    if graph.n < 3:
        raise ValidationError(f"graph has only {graph.n} node(s) after filtering")

    k, elbow = _choose_k(args, graph.weights, graph.n, ALG1)
    result, emb = spectral_cluster(graph.weights, k, args.seed, args.mode)
    truth = read_truth(args.truth, graph.nodes) if args.truth else None
    report = _metrics(emb.points, graph.weights, result, args.unweighted, truth)

    config = {"min_occ": args.min_occ, "change_address": args.change_address,
              "k": k, "k_from_elbow": elbow is not None, "mode": args.mode, "seed": args.seed}
    counts = {"transactions": len(txs), "kept_transactions": len(kept),
              "users": graph.n, "edges": len(graph.edges())}
    _write_outputs(args.out, result, graph.nodes, report, emb, config, counts, elbow)
    write_json(os.path.join(args.out, "graph.json"), graph.to_json())
    return result, report


def cmd_ethereum(args):
    with _open_lines(args.holdings) as fh:
        holdings = read_holdings(fh)
    with _open_lines(args.prices) as fh:
        prices = read_prices(fh)
    att = build_attention_matrix(holdings, prices)
    att = filter_bipartite(att, args.min_tokens, args.min_users)
    att = normalize_rows_cols(att)

    if args.tokens:
        signals, nodes = att.A.T, att.tokens
    else:
        signals, nodes = att.A, att.users
    k, elbow = _choose_k(args, signals, len(nodes), ALG2)
    if args.tokens:
        result, emb = token_cluster(att, k, args.seed, center=args.center)
    else:
        result, emb = lowrank_cluster(signals, k, args.seed, center=args.center)
    # co-attention graph between the clustered nodes
    W = signals @ signals.T
    np.fill_diagonal(W, 0.0)
    W = np.maximum(0.5 * (W + W.T), 0.0)
    truth = read_truth(args.truth, nodes) if args.truth else None
    report = _metrics(emb.points, W, result, args.unweighted, truth)

    config = {"min_tokens_per_user": args.min_tokens, "min_users_per_token": args.min_users,
              "k": k, "k_from_elbow": elbow is not None, "tokens": args.tokens,
              "center": args.center, "seed": args.seed}
    counts = {"users": len(att.users), "tokens": len(att.tokens)}
    _write_outputs(args.out, result, nodes, report, emb, config, counts, elbow)
    rows, cols = np.nonzero(att.A)
    write_json(os.path.join(args.out, "graph.json"), {
        "users": att.users, "tokens": att.tokens,
        "edges": [{"user": att.users[i], "token": att.tokens[j], "weight": float(att.A[i, j])}
                  for i, j in zip(rows, cols)],
    })
    return result, report


def _write_outputs(out, result, nodes, report, emb, config, counts, elbow):
    metrics = report.to_json()
    metrics.update({"config": config, "counts": counts})
    if elbow is not None:
        metrics["elbow"] = {"k_star": elbow.k_star, "degenerate": elbow.degenerate}
    write_json(os.path.join(out, "assignment.json"), assignment_payload(result, nodes, report))
    write_json(os.path.join(out, "metrics.json"), metrics)
    write_coords(os.path.join(out, "coords.csv"), nodes, emb.points, result.labels)
    _write_elbow(out, elbow)


def _synth_spec(args, **changes):
    values = {name: getattr(args, name) for name in
              ("N", "K", "Pa", "Pb", "R", "L", "alpha", "sigma", "T", "seed")}
    values.update(changes)
    return SynthSpec.from_mapping(values)


def synth_run(spec: SynthSpec, center=False):
    data = gen_signals(spec)
    result, emb = lowrank_cluster(data.Y, spec.K, spec.seed, center=center)
    sil = silhouette(emb.points, result) if spec.K >= 2 else None
    mod = modularity(data.adjacency, result) if data.adjacency.any() else None
    return data, result, emb, MetricReport(sil, mod, recovery_rate(result, data.truth))


def cmd_synth(args):
    base = _synth_spec(args)
    if args.repeats < 1:
        raise ConfigError("repeats must be >= 1")
    if args.sweep:
        values = parse_values(args.values) if args.values else \
            ([0, 0.5, 1, 2, 4] if args.sweep == "sigma" else [10, 50, 200, 1000])
        rows = []
        for v in values:
            change = {"sigma": float(v)} if args.sweep == "sigma" else {"T": int(v)}
            reports = [synth_run(base.with_(seed=base.seed + r, **change), args.center)[3]
                       for r in range(args.repeats)]
            rec = np.array([r.recovery for r in reports])
            sil = [r.silhouette for r in reports if r.silhouette is not None]
            mod = [r.modularity for r in reports if r.modularity is not None]
            stderr = rec.std(ddof=1) / np.sqrt(len(rec)) if len(rec) > 1 else 0.0
            rows.append([args.sweep, change[args.sweep], args.repeats, rec.mean(), stderr,
                         np.mean(sil) if sil else "", np.mean(mod) if mod else ""])
            print(f"{args.sweep}={change[args.sweep]}: mean recovery {rec.mean():.4f}")
        write_csv(os.path.join(args.out, "sweep.csv"),
                  ["param", "value", "repeats", "mean_recovery", "stderr_recovery",
                   "mean_silhouette", "mean_modularity"], rows)
        return rows

    runs = [synth_run(base.with_(seed=base.seed + r), args.center) for r in range(args.repeats)]
    data, result, emb, report = runs[0]
    recs = [r[3].recovery for r in runs]
    config = {"spec": {k: getattr(base, k) for k in
                       ("N", "K", "Pa", "Pb", "R", "L", "alpha", "sigma", "T", "seed")},
              "alpha_used": data.alpha, "repeats": args.repeats}
    metrics = report.to_json()
    metrics.update({"config": config, "mean_recovery": float(np.mean(recs)),
                    "recoveries": [float(r) for r in recs]})
    nodes = list(range(base.N))
    write_json(os.path.join(args.out, "assignment.json"),
               assignment_payload(result, nodes, report, {"truth": [int(v) for v in data.truth.labels]}))
    write_json(os.path.join(args.out, "metrics.json"), metrics)
    write_coords(os.path.join(args.out, "coords.csv"), nodes, emb.points, result.labels)
    if args.export_signals:
        # rows = nodes, columns = instances
        np.savetxt(os.path.join(args.out, "signals.csv"), data.Y, delimiter=",", fmt="%.17g")
    print(f"recovery {report.recovery:.4f} (mean over {args.repeats}: {np.mean(recs):.4f})")
    return runs


def cmd_advertise(args):
    with _open_lines(args.assignment) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.assignment}: {exc}") from None
    try:
        nodes, labels = payload["nodes"], payload["labels"]
    except KeyError as exc:
        raise ValidationError(f"assignment file lacks {exc}") from None
    members = [str(n) for n, lab in zip(nodes, labels) if lab == args.community]
    if not members:
        raise ValidationError(f"unknown community id {args.community}")
    sketches = build_tx_sketch(members, args.message, args.strategy,
                               value_wei=args.value_wei, contract=args.contract)
    write_json(os.path.join(args.out, "sketches.json"), [s.to_json() for s in sketches])
    print(f"{len(sketches)} {args.strategy} sketch(es) for community {args.community} "
          f"({len(members)} member(s))")
    return sketches


# ----------------------------------------------------------------- parser

def _common(p, k_default_range=DEFAULT_K_RANGE):
    p.add_argument("--config", help="key = value file mirroring these flags")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--k", type=int, help="fixed number of clusters (skips the elbow search)")
    p.add_argument("--k-range", dest="k_range", default=k_default_range,
                   help="elbow search range a..b")
    p.add_argument("--unweighted", action="store_true", help="binary edges for modularity")


def build_parser():
    parser = argparse.ArgumentParser(prog="chaincluster",
                                     description="Community detection on blockchain transaction graphs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bitcoin", help="spectral clustering of the Bitcoin user graph")
    _common(p)
    p.add_argument("--txin")
    p.add_argument("--txout")
    p.add_argument("--contraction")
    p.add_argument("--columns", help="column map for the input files")
    p.add_argument("--out-columns", dest="out_columns", help="column map for txout if different")
    p.add_argument("--tx-range", dest="tx_range", help="keep tx ids in a..b")
    p.add_argument("--min-occ", dest="min_occ", type=int, default=30)
    p.add_argument("--change-address", dest="change_address", action="store_true")
    p.add_argument("--mode", choices=MODES, default=SMALLEST_EIG)
    p.add_argument("--truth", help="'node label' lines for recovery scoring")
    p.set_defaults(func=cmd_bitcoin, required=("txin", "txout"))

    p = sub.add_parser("ethereum", help="low-rank clustering of the user-token graph")
    _common(p)
    p.add_argument("--holdings")
    p.add_argument("--prices")
    p.add_argument("--min-tokens", dest="min_tokens", type=int, default=20)
    p.add_argument("--min-users", dest="min_users", type=int, default=60)
    p.add_argument("--tokens", action="store_true", help="cluster tokens instead of users")
    p.add_argument("--center", action="store_true", help="mean-center signals before covariance")
    p.add_argument("--truth", help="'id,label' lines for recovery scoring")
    p.set_defaults(func=cmd_ethereum, required=("holdings", "prices"), mode=SMALLEST_EIG)

    p = sub.add_parser("synth", help="planted-partition recovery experiments")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default="out")
    for name, typ, default in (("N", int, 150), ("K", int, 5), ("Pa", float, 0.89),
                               ("Pb", float, 0.11), ("R", int, 15), ("L", int, 3),
                               ("alpha", float, None), ("sigma", float, 0.0), ("T", int, 1000)):
        p.add_argument(f"--{name}", dest=name, type=typ, default=default)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--sweep", choices=("sigma", "T"))
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--center", action="store_true")
    p.add_argument("--export-signals", dest="export_signals", action="store_true",
                   help="also write signals.csv (rows = nodes, columns = instances)")
    p.set_defaults(func=cmd_synth, required=())

    p = sub.add_parser("advertise", help="build advertisement transaction sketches")
    p.add_argument("--config")
    p.add_argument("--out", default="out")
    p.add_argument("--assignment")
    p.add_argument("--community", type=int)
    p.add_argument("--message")
    p.add_argument("--strategy", choices=STRATEGIES, default=STRATEGIES[0])
    p.add_argument("--value-wei", dest="value_wei", type=int, default=0)
    p.add_argument("--contract")
    p.set_defaults(func=cmd_advertise, required=("assignment", "community", "message"))
    return parser


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        cfg = _config_path(argv)
        if cfg:
            if not os.path.exists(cfg):
                raise ConfigError(f"no such config file: {cfg}")
            command = next((a for a in argv if not a.startswith("-")), None)
            subparsers = parser._subparsers._group_actions[0].choices
            if command not in subparsers:
                raise ConfigError("config given without a subcommand")
            apply_config(subparsers[command], read_kv(cfg))
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ChainClusterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        missing = [name for name in args.required if getattr(args, name) is None]
        if missing:
            raise ConfigError("missing required option(s): "
                              + ", ".join("--" + m.replace("_", "-") for m in missing))
        os.makedirs(args.out, exist_ok=True)
        if getattr(args, "mode", None) and args.command == "bitcoin":
            print(f"spectral mode: {args.mode}")
        args.func(args)
    except (ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    return 0
