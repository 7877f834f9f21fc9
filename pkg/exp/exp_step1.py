import logging

import pandas as pd
from tqdm import tqdm

from exp.exp_basic import Exp_Basic
from exp.pipelines import build_pipeline
from layers.KB_Access import LOCAL, SERVICE
from utils.metrics import summarize

logger = logging.getLogger(__name__)


class Exp_Step1(Exp_Basic):
    """Subclass reasoning (q15) and a 3-step property path (q16), each with the KB merged locally and behind a service."""

    queries = ("q15", "q16")
    modes = (LOCAL, SERVICE)

    def run(self):
        summary, windows, operators = [], [], []
        try:
            for query in self.queries:
                used, total = self.used_kb(f"{query}_local", [self.paths["kb"]])
                digests = {}
                for mode in self.modes:
                    pipeline = build_pipeline(
                        query, self.paths, mode=mode, engines=self.args.engines,
                        window=self.args.window, reload=self.args.kb_reload,
                    )
                    label = f"{query}-{mode}"
                    frames = []
                    for r in tqdm(range(self.args.runs), desc=label, leave=False):
                        run = self.run_pipeline(pipeline)
                        digests[f"{mode}#{r}"] = run.digest
                        summary.append({
                            "step": "step1", "pipeline": label, "wall_millis": run.wall_millis,
                            "digest": run.digest, "run": r, "results": run.results,
                            "used_kb": used, "total_kb": total, "valid": True,
                        })
                        frames.append(run.measurements.assign(step="step1", pipeline=label))
                    windows.extend(frames)
                    ops = summarize(pd.concat(frames, ignore_index=True))
                    operators.append(ops.assign(step="step1", pipeline=label))
                self.check_digests(query, digests)
        except Exception:
            for row in summary:
                row["valid"] = False
            self.write_reports(windows, pd.DataFrame(summary))
            raise

        frame = pd.DataFrame(summary)
        self.write_reports(windows, frame, pd.concat(operators, ignore_index=True))
        table = frame.groupby("pipeline").agg(
            wall_millis=("wall_millis", "median"), results=("results", "first"),
            used_kb=("used_kb", "first"), total_kb=("total_kb", "first"), digest=("digest", "first"),
        )
        print(table.to_string())
        return frame
