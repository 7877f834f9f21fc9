import logging

import pandas as pd
from tqdm import tqdm

from exp.exp_basic import Exp_Basic
from exp.pipelines import build_pipeline
from scep.operator import PROCESS
from utils.metrics import summarize

logger = logging.getLogger(__name__)

KB_OPERATORS = ("A", "B")
STREAM_OPERATORS = ("C", "D", "E", "F", "G")


class Exp_Step2(Exp_Basic):
    """
    The correlation query run as one operator and as the seven-operator
    graph, on identical input. Results must match before times are compared.
    """

    default_backend = PROCESS

    def run(self):
        summary, windows = [], []
        digests = {}
        mode = self.args.kb_mode
        kwargs = dict(mode=mode, engines=self.args.engines, window=self.args.window, reload=self.args.kb_reload)
        pipelines = [build_pipeline(name, self.paths, **kwargs) for name in ("cquery1-mono", "cquery1-dag")]
        try:
            # mono and dag alternate within each run
            for r in tqdm(range(self.args.runs), desc="step2"):
                for pipeline in pipelines:
                    run = self.run_pipeline(pipeline)
                    digests[f"{pipeline.name}#{r}"] = run.digest
                    summary.append({
                        "step": "step2", "pipeline": pipeline.name, "wall_millis": run.wall_millis,
                        "digest": run.digest, "run": r, "results": run.results, "kb_mode": mode, "valid": True,
                    })
                    windows.append(run.measurements.assign(step="step2", pipeline=pipeline.name))
            self.check_digests("cquery1", digests)
        except Exception:
            for row in summary:
                row["valid"] = False
            self.write_reports(windows, pd.DataFrame(summary))
            raise

        frame = pd.DataFrame(summary)
        medians = frame.groupby("pipeline")["wall_millis"].median()
        speedup = 100.0 * (1.0 - medians["cquery1-dag"] / medians["cquery1-mono"])
        frame["speedup_pct"] = speedup

        per_window = pd.concat(windows, ignore_index=True)
        operators = pd.concat(
            [summarize(g).assign(pipeline=name) for name, g in per_window.groupby("pipeline")], ignore_index=True
        )
        self.write_reports(windows, frame, operators.assign(step="step2"))

        dag = operators[operators["pipeline"] == "cquery1-dag"].set_index("operator_id")
        kb_mean = dag.loc[dag.index.isin(KB_OPERATORS), "mean_millis"].mean()
        stream_mean = dag.loc[dag.index.isin(STREAM_OPERATORS), "mean_millis"].mean()
        print(f"mono median {medians['cquery1-mono']:.0f} ms, dag median {medians['cquery1-dag']:.0f} ms, "
              f"reduction {speedup:.1f}%")
        print(f"per-window mean: KB subqueries {kb_mean:.2f} ms, stream-only subqueries {stream_mean:.2f} ms")
        print(operators.to_string(index=False))
        return frame
