import logging

import numpy as np
import pandas as pd
from tqdm import tqdm

from data_provider.data_loader import noise_triples
from exp.exp_basic import Exp_Basic, read_query
from layers.KB_Access import KbAccessMode, relevant_predicates
from layers.NTriples import serialize_ntriple
from layers.Triple_Store import TripleStore, extract_used_kb
from scep.publisher import publish_results
from utils.metrics import Measurement, result_digest

logger = logging.getLogger(__name__)

FRACTIONS = (1.0, 0.5, 0.25, 0.1, 0.0)
GROWTH = (1, 2, 5, 10)


class Exp_Step3(Exp_Basic):
    """
    Per-window cost of the KB-touching subqueries under per-window KB reload:
    (i) shrink the part of the KB the query can use at constant total size,
    (ii) hold the used KB fixed and grow the total with unrelated triples.
    Every point evaluates the same stream windows and must give the same results.
    """

    subqueries = {"A": ("cquery1_a_local", "artists"), "B": ("cquery1_b_local", "shows")}

    def _measure(self, name, ast, lines):
        model = self._build_engine(KbAccessMode.local_merge(kb_lines=lines, reload_per_window=True), f"{name}.engine.0")
        rows, events = [], []
        try:
            for _ in range(self.args.runs):
                events = []
                for window in self.sample_windows():
                    result = model.evaluate_window(ast, window)
                    rows.append(Measurement(
                        name, window.seq_no, window.triple_count, result.eval_millis,
                        result.kb_triples_touched, model.engine_id,
                    ))
                    events.extend(publish_results(result, name, window.high_ts))
        finally:
            model.close()
        frame = pd.DataFrame([vars(m) for m in rows])
        return frame, result_digest(events)

    def _sweeps(self, sub, query, part, rng):
        ast = read_query(query)
        lines = self.kb_lines([self.paths[part]])
        total = len(lines)
        used = set(extract_used_kb(self.kb_store([self.paths[part]]), ast, self.sample_windows()).to_ntriples())
        relevant = set(TripleStore.load(lines, predicates=relevant_predicates(ast), closures=False).to_ntriples())
        remaining = sorted(relevant - used)
        noise = [serialize_ntriple(t) + "\n" for t in noise_triples(10 * max(total, len(used)))]
        logger.info("%s: %d KB lines, %d relevant, %d used", sub, total, len(relevant), len(used))

        points = []
        for f in FRACTIONS:
            extra = rng.choice(len(remaining), size=int(round(f * len(remaining))), replace=False) if remaining else []
            kept = sorted(used) + [remaining[i] for i in sorted(extra)]
            kb = [line + "\n" for line in kept] + noise[: max(0, total - len(kept))]
            points.append(("used", f, len(kept), len(kb), kb))
        for g in GROWTH:
            kb = [line + "\n" for line in sorted(used)] + noise[: (g - 1) * len(used)]
            points.append(("total", g, len(used), len(kb), kb))

        rows, frames, digests = [], [], {}
        for sweep, point, used_size, total_size, kb in tqdm(points, desc=sub, leave=False):
            label = f"{sub}:{sweep}:{point:g}"
            frame, digest = self._measure(label, ast, kb)
            digests[label] = digest
            frames.append(frame.assign(step="step3", pipeline=f"{sub}-{sweep}"))
            rows.append({
                "subquery": sub, "sweep": sweep, "point": point, "used_size": used_size,
                "total_size": total_size, "mean_millis": frame["eval_millis"].mean(),
                "median_millis": frame["eval_millis"].median(), "digest": digest,
            })
        self.check_digests(sub, digests)
        return rows, frames

    def run(self):
        rng = np.random.default_rng(self.args.seed)
        sweep_rows, windows = [], []
        for sub, (query, part) in self.subqueries.items():
            rows, frames = self._sweeps(sub, query, part, rng)
            sweep_rows.extend(rows)
            windows.extend(frames)
        sweep = pd.DataFrame(sweep_rows)
        summary = sweep.assign(
            step="step3", pipeline=sweep["subquery"] + "-" + sweep["sweep"],
            wall_millis=sweep["mean_millis"] * len(self.sample_windows()),
        )[["step", "pipeline", "wall_millis", "digest", "point", "used_size", "total_size"]]
        self.write_reports(windows, summary, sweep=sweep)
        print(sweep.drop(columns="digest").to_string(index=False))
        return sweep
