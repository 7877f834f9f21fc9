import pandas as pd
import pytest
import yaml

from exp.exp_basic import Exp_Basic
from exp.exp_step1 import Exp_Step1
from exp.exp_step3 import Exp_Step3
from exp.pipelines import STREAM_TOPIC, PipelineConfig, build_pipeline, query_file
from layers.KB_Access import LOCAL, SERVICE
from scep.operator import THREAD
from utils.metrics import DigestMismatchError
from utils.tools import ConfigError, dotdict

SMALL = dict(tweet_count=60, artists=30, shows=20, others=10, cities=8, countries=4, class_depth=3, seed=11)


def op(op_id, topics, output):
    return {"id": op_id, "topics": topics, "output": output, "query.file": query_file("cquery1_g")}


def test_operators_sorted_producers_first():
    pipeline = PipelineConfig(
        "p", (STREAM_TOPIC,),
        [op("late", "mid", "end"), op("early", STREAM_TOPIC, "mid")],
        [{"topics": "end"}],
    )
    assert [d["id"] for d in pipeline.validate().topological_order()] == ["early", "late"]
    assert pipeline.output_topics == ["end"]


def test_cycles_and_dangling_topics_rejected():
    cyclic = PipelineConfig("p", (STREAM_TOPIC,), [op("a", "y", "x"), op("b", "x", "y")], [])
    with pytest.raises(ConfigError, match="cycle"):
        cyclic.topological_order()
    dangling = PipelineConfig("p", (STREAM_TOPIC,), [op("a", "nowhere", "x")], [{"topics": "x"}])
    with pytest.raises(ConfigError, match="nothing produces"):
        dangling.validate()
    twice = PipelineConfig("p", (STREAM_TOPIC,), [op("a", STREAM_TOPIC, "x"), op("b", STREAM_TOPIC, "x")], [])
    with pytest.raises(ConfigError, match="same topic"):
        twice.topological_order()


def test_service_endpoints_are_bound():
    paths = {"kb": query_file("q15_local"), "artists": query_file("q15_local"), "shows": query_file("q15_local")}
    pipeline = build_pipeline("cquery1-dag", paths, mode=SERVICE)
    docs = {d["id"]: d for d in pipeline.with_endpoints({"artists": "h:1", "shows": "h:2"})}
    assert docs["A"]["kb.endpoint"] == "artists=h:1,shows=h:2"
    assert "kb.endpoint" not in docs["C"]
    assert len(pipeline.topological_order()) == 7
    with pytest.raises(ConfigError, match="unknown pipeline"):
        build_pipeline("q99", paths)


def test_digest_check():
    Exp_Basic.check_digests("q", {"a": "1", "b": "1"})
    with pytest.raises(DigestMismatchError, match="differ"):
        Exp_Basic.check_digests("q", {"a": "1", "b": "2"})


@pytest.fixture
def bench_args(tmp_path):
    gen = tmp_path / "gen.yaml"
    gen.write_text(yaml.safe_dump(SMALL))
    return dotdict(
        data="tweets", root_path=str(tmp_path / "data"), gen_config=str(gen), regenerate=False, tweets=None,
        seed=11, engine="Native", engines=2, window=200, rate=0, runs=1, kb_mode=LOCAL, kb_reload=False,
        backend=THREAD, timeout=60.0, out=str(tmp_path / "results" / "report.csv"), log_level="WARNING",
    )


@pytest.mark.slow
@pytest.mark.parametrize("query", ["q15", "q16"])
def test_local_and_service_agree(bench_args, query):
    exp = Exp_Basic(bench_args)
    local = exp.run_pipeline(build_pipeline(query, exp.paths, mode=LOCAL, engines=2, window=200))
    service = exp.run_pipeline(build_pipeline(query, exp.paths, mode=SERVICE, engines=2, window=200))
    assert local.results > 0
    assert local.digest == service.digest
    assert local.replay.events == SMALL["tweet_count"]
    assert set(local.measurements["operator_id"]) == {query}


@pytest.mark.slow
def test_operator_graph_matches_single_operator(bench_args):
    exp = Exp_Basic(bench_args)
    mono = exp.run_pipeline(build_pipeline("cquery1-mono", exp.paths, engines=2, window=200))
    dag = exp.run_pipeline(build_pipeline("cquery1-dag", exp.paths, engines=2, window=200))
    assert mono.results > 0
    assert mono.digest == dag.digest
    assert set(dag.measurements["operator_id"]) <= set("ABCDEFG")


@pytest.mark.slow
def test_step1_writes_reports(bench_args):
    frame = Exp_Step1(bench_args).run()
    assert set(frame["pipeline"]) == {"q15-local", "q15-service", "q16-local", "q16-service"}
    assert frame["valid"].all()
    windows = pd.read_csv(bench_args.out)
    assert set(windows["step"]) == {"step1"}


@pytest.mark.slow
def test_step3_sweeps_keep_results(bench_args):
    sweep = Exp_Step3(bench_args).run()
    assert set(sweep["subquery"]) == {"A", "B"}
    for _, group in sweep.groupby("subquery"):
        assert group["digest"].nunique() == 1
    total = sweep[sweep["sweep"] == "total"]
    assert list(total["total_size"]) == sorted(total["total_size"])
