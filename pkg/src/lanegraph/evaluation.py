"""Per-ODD evaluation of baselines and the learned model, table output and ablations."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import BaselineParams, run_baseline
from .metrics import ConnCounts, boundary_errors, connectivity_counts, width_errors

log = logging.getLogger(__name__)

ODDS = ("highway", "non-highway")
BASELINES = ("b1", "b2", "b3", "b4")
METHODS = BASELINES + ("lmtnet",)
CSV_COLUMNS = ["odd", "method", "mbpe_m", "mlwe_m", "conn_acc", "conn_f1", "n_pairs", "n_edges", "zero_pos_flag"]
# methods that produce lane pairs / connectivity
PAIR_METHODS = {"b1", "b2", "b3", "lmtnet"}
CONN_METHODS = {"b4", "lmtnet"}


class EvalError(RuntimeError):
    pass


@dataclass
class EvalRow:
    odd: str
    method: str
    mbpe: float = math.nan
    mlwe: float = math.nan
    conn_acc: float = math.nan
    conn_f1: float = math.nan
    n_pairs: int = 0
    n_edges: int = 0
    zero_pos_flag: bool = False

    def csv_values(self) -> list:
        def f(v):
            return "" if math.isnan(v) else f"{v:.6f}"

        return [self.odd, self.method, f(self.mbpe), f(self.mlwe), f(self.conn_acc), f(self.conn_f1),
                str(self.n_pairs), str(self.n_edges), str(int(self.zero_pos_flag))]


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    n_minimaps: dict = field(default_factory=dict)  # per ODD
    aggregation: str = "pooled"

    def get(self, odd: str, method: str) -> EvalRow:
        for r in self.rows:
            if r.odd == odd and r.method == method:
                return r
        raise KeyError((odd, method))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.csv_values())
        return buf.getvalue()

    def to_markdown(self) -> str:
        """Methods as rows; per ODD the boundary errors in meters and the
        connectivity scores in percent."""
        odds = [o for o in ODDS if any(r.odd == o for r in self.rows)]
        methods = list(dict.fromkeys(r.method for r in self.rows))
        head = ["Method"]
        for o in odds:
            head += [f"{o} mBPE [m]", f"{o} mLWE [m]", f"{o} Acc. [%]", f"{o} F1 [%]"]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for m in methods:
            cells = [m]
            for o in odds:
                try:
                    r = self.get(o, m)
                except KeyError:
                    cells += ["-"] * 4
                    continue
                cells += [_fmt(r.mbpe, 3), _fmt(r.mlwe, 3), _fmt(100 * r.conn_acc, 2), _fmt(100 * r.conn_f1, 2)]
            lines.append("| " + " | ".join(cells) + " |")
        counts = ", ".join(f"{o}: {self.n_minimaps.get(o, 0)}" for o in odds)
        return "\n".join(lines) + f"\n\nEvaluated minimaps ({counts}); connectivity aggregation: {self.aggregation}.\n"


def _fmt(v, nd):
    return "-" if math.isnan(v) else f"{v:.{nd}f}"


def split_dataset(minimaps, eval_fraction: float = 0.05, seed: int = 0):
    """Seeded holdout: returns ``(train, eval)``; at least one minimap each."""
    if not 0.0 < eval_fraction < 1.0:
        raise ValueError("eval_fraction must lie in (0, 1)")
    n = len(minimaps)
    if n < 2:
        raise ValueError("need at least two minimaps to split")
    n_eval = min(n - 1, max(1, int(round(eval_fraction * n))))
    perm = np.random.default_rng(seed).permutation(n)
    ev = set(perm[:n_eval].tolist())
    return [m for i, m in enumerate(minimaps) if i not in ev], [m for i, m in enumerate(minimaps) if i in ev]


def evaluable(m, min_queries: int = 2, max_queries: int = 50) -> bool:
    return min_queries <= len(m.centers) <= max_queries and len(m.polylines) > 0


def method_outputs(method: str, minimaps, params: BaselineParams | None = None, model=None,
                   pair_method: str = "b3") -> list:
    """``(pairs (Q, 4) or None, adjacency or None)`` per minimap."""
    method = method.lower()
    if method == "lmtnet":
        if model is None:
            raise EvalError("method lmtnet needs a trained model checkpoint; run `lanegraph train` first")
        from .model.losses import predict_adjacency
        from .model.train import predict_minimaps

        thr = model.config.connectivity_threshold
        out = []
        for r in predict_minimaps(model, minimaps):
            if r is None:
                raise EvalError("a minimap has a query count outside the model's accepted range")
            out.append((r[0], predict_adjacency(r[1], thr)))
        return out
    if method not in BASELINES:
        raise EvalError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    out = []
    for m in minimaps:
        pairs, adj = run_baseline(method, m.centers, m.observations(), params, pair_method=pair_method)
        arr = np.array([p.as_array() for p in pairs]).reshape(-1, 4)
        out.append((arr if method in PAIR_METHODS else None, adj))
    return out


def _score(minimaps, outputs, method, odd, aggregation) -> EvalRow:
    row = EvalRow(odd, method)
    b_err, w_err = [], []
    counts = ConnCounts()
    per_map = []
    for m, (pairs, adj) in zip(minimaps, outputs):
        lab = m.labeled
        if pairs is not None and lab.any():
            gt = [p for p in m.gt_pairs if p is not None]
            b_err.append(boundary_errors(pairs[lab], gt).ravel())
            w_err.append(width_errors(pairs[lab], gt))
        if method in CONN_METHODS:
            c = connectivity_counts(adj, m.gt_adjacency)
            counts = counts + c
            per_map.append((c.accuracy(), c.f1()[0]))
        row.n_pairs += int(lab.sum()) if pairs is not None else 0
        row.n_edges += int(np.asarray(m.gt_adjacency).sum())
    if b_err:
        row.mbpe = float(np.concatenate(b_err).mean())
        row.mlwe = float(np.concatenate(w_err).mean())
    if method in CONN_METHODS and minimaps:
        if aggregation == "pooled":
            row.conn_acc = counts.accuracy()
            row.conn_f1, row.zero_pos_flag = counts.f1()
        else:
            row.conn_acc = float(np.mean([a for a, _ in per_map]))
            row.conn_f1 = float(np.mean([f for _, f in per_map]))
            row.zero_pos_flag = counts.tp + counts.fp + counts.fn == 0
    return row


def evaluate(minimaps, methods=METHODS, model=None, params: BaselineParams | None = None,
             aggregation: str = "pooled", pair_method: str = "b3") -> EvalReport:
    """Score every method on each ODD split.

    All methods see the same minimaps: those with a query count the model
    accepts. Boundary metrics use labeled queries only; connectivity counts
    are pooled over all ordered query pairs of the split unless
    ``aggregation='per_minimap'`` (mean of per-minimap scores).
    """
    if aggregation not in ("pooled", "per_minimap"):
        raise ValueError("aggregation must be 'pooled' or 'per_minimap'")
    methods = [m.lower() for m in methods]
    for m in methods:
        if m not in METHODS:
            raise EvalError(f"unknown method {m!r}; expected one of {', '.join(METHODS)}")
    if "lmtnet" in methods and model is None:
        raise EvalError("method lmtnet needs a trained model checkpoint; run `lanegraph train` first")
    lo, hi = (model.config.min_queries, model.config.max_queries) if model is not None else (2, 50)
    usable = [m for m in minimaps if evaluable(m, lo, hi)]
    if len(usable) < len(minimaps):
        log.info("evaluating %d of %d minimaps (query count out of range)", len(usable), len(minimaps))
    report = EvalReport(aggregation=aggregation)
    for odd in ODDS:
        split = [m for m in usable if m.odd == odd]
        report.n_minimaps[odd] = len(split)
        if not split:
            continue
        for method in methods:
            outs = method_outputs(method, split, params, model, pair_method)
            report.rows.append(_score(split, outs, method, odd, aggregation))
    return report


def run_ablation(train_set, eval_set, train_config, base_config=None, configs=None, progress=None) -> list:
    """Train every ablation variant with the same seed and budget.

    Returns dict rows: name, encoder_sharing, decoder_layers, params_m and
    the four metrics per ODD.
    """
    from .model.config import ablation_configs
    from .model.network import count_parameters
    from .model.train import train_model

    rows = []
    for name, cfg in configs or ablation_configs(base_config):
        res = train_model(train_set, cfg, train_config)
        rep = evaluate(eval_set, ["lmtnet"], model=res.model)
        row = {"variant": name, "encoder_sharing": cfg.encoder_sharing.value,
               "decoder_layers": cfg.decoder_layers, "params_m": count_parameters(cfg) / 1e6}
        for r in rep.rows:
            for k in ("mbpe", "mlwe", "conn_acc", "conn_f1"):
                row[f"{r.odd}_{k}"] = getattr(r, k)
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


def ablation_csv(rows) -> str:
    cols = ["variant", "encoder_sharing", "decoder_layers", "params_m"] + [
        f"{o}_{k}" for o in ODDS for k in ("mbpe", "mlwe", "conn_acc", "conn_f1")]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([f"{r[c]:.6f}" if isinstance(r.get(c), float) else r.get(c, "") for c in cols])
    return buf.getvalue()


def ablation_markdown(rows) -> str:
    lines = ["| Polyline encoder | Decoder layers | # Params [Mio.] | highway mLWE [m] | highway F1 [%] "
             "| non-highway mLWE [m] | non-highway F1 [%] |", "|---|---|---|---|---|---|---|"]
    for r in rows:
        lines.append(f"| {r['encoder_sharing']} | {r['decoder_layers']} | {r['params_m']:.2f} | "
                     f"{_fmt(r.get('highway_mlwe', math.nan), 3)} | {_fmt(100 * r.get('highway_conn_f1', math.nan), 2)} | "
                     f"{_fmt(r.get('non-highway_mlwe', math.nan), 3)} | "
                     f"{_fmt(100 * r.get('non-highway_conn_f1', math.nan), 2)} |")
    return "\n".join(lines) + "\n"


__all__ = [
    "BASELINES", "CSV_COLUMNS", "EvalError", "EvalReport", "EvalRow", "METHODS", "ODDS", "ablation_csv",
    "ablation_markdown", "evaluate", "method_outputs", "run_ablation", "split_dataset",
]
