import argparse
import logging
import os
import random
import signal
import sys
import threading

import numpy as np
import yaml

from bus.broker import BusError
from utils.metrics import DigestMismatchError
from utils.print_args import print_args
from utils.tools import ConfigError, broker_address

logger = logging.getLogger("dscep")

BENCH_DEFAULTS = {
    "data": "tweets",
    "root_path": "./dataset/tweets/",
    "gen_config": None,
    "regenerate": False,
    "tweets": None,
    "seed": 2021,
    "engine": "Native",
    "engines": 1,
    "window": 1000,
    "rate": 25000,
    "runs": 5,
    "kb_mode": "local",
    "kb_reload": True,
    "backend": None,
    "timeout": 600.0,
    "out": "./results/report.csv",
}


def apply_bench_config(args):
    """Fill every bench flag left unset from --config, then from BENCH_DEFAULTS."""
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            values = yaml.safe_load(f) or {}
        if not isinstance(values, dict):
            raise ConfigError(f"{args.config}: expected a mapping of bench settings")
        unknown = set(values) - set(BENCH_DEFAULTS)
        if unknown:
            raise ConfigError(f"{args.config}: unknown keys {sorted(unknown)}")
    for key, default in BENCH_DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, values.get(key, default))
    args.kb_reload = bool(args.kb_reload)
    if args.inproc:
        args.backend = "thread"
    return args


def add_data_args(p):
    p.add_argument("--data", type=str, default=None, help="dataset type, options: [tweets]")
    p.add_argument("--root_path", type=str, default=None, help="directory of the generated dataset")
    p.add_argument("--gen_config", type=str, default=None, help="generator settings (YAML), e.g. configs/gen.yaml")
    p.add_argument("--regenerate", action="store_true", default=None, help="regenerate even if the dataset exists")
    p.add_argument("--tweets", type=int, default=None, help="number of tweets to generate")
    p.add_argument("--seed", type=int, default=None, help="randomization seed")


def build_parser():
    parser = argparse.ArgumentParser(prog="dscep", description="Distributed semantic complex event processing")
    parser.add_argument("--log-level", dest="log_level", type=str, default="INFO", help="logging level")
    parser.add_argument("--broker", type=str, default=None, help="broker host:port (default $DSCEP_BROKER or 127.0.0.1:9092)")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate the tweet stream and KB")
    add_data_args(gen)

    rep = sub.add_parser("replay", help="publish a stream file to a topic at a fixed rate")
    rep.add_argument("--stream", type=str, required=True, help="stream file, one wire event per line")
    rep.add_argument("--rate", type=float, default=25000, help="triples per second, 0 for unpaced")
    rep.add_argument("--topic", type=str, default="tweets", help="destination topic")
    rep.add_argument("--no-eos", dest="eos", action="store_false", help="do not end the stream")

    launch = sub.add_parser("launch", help="run one role until interrupted")
    launch.add_argument("role", choices=["broker", "operator", "client", "kbservice", "gen", "replay"], help="role to run")
    launch.add_argument("--config", type=str, default=None, help="node document (operator, client) or generator YAML")
    launch.add_argument("--address", type=str, default=None, help="listen address for broker and kbservice")
    launch.add_argument("--kb", type=str, default=None, help="KB file served by kbservice")
    launch.add_argument("--stream", type=str, default=None, help="stream file for replay")
    launch.add_argument("--rate", type=float, default=25000, help="replay rate in triples per second")
    launch.add_argument("--topic", type=str, default="tweets", help="replay topic")
    add_data_args(launch)

    bench = sub.add_parser("bench", help="run an evaluation step")
    bench.add_argument("step", choices=["step1", "step2", "step3"], help="evaluation step")
    bench.add_argument("--config", type=str, default="configs/bench.yaml", help="bench settings (YAML)")
    add_data_args(bench)
    bench.add_argument("--engine", type=str, default=None, help="engine, options: [Native, Naive]")
    bench.add_argument("--engines", type=int, default=None, help="engines per KB-touching operator")
    bench.add_argument("--window", type=int, default=None, help="window cap in triples")
    bench.add_argument("--rate", type=float, default=None, help="replay rate in triples per second, 0 for unpaced")
    bench.add_argument("--runs", type=int, default=None, help="repetitions per pipeline")
    bench.add_argument("--kb_mode", type=str, default=None, help="KB access for step2, options: [local, service]")
    bench.add_argument("--kb_reload", type=int, default=None, help="re-index the KB for every window (1) or not (0)")
    bench.add_argument("--backend", type=str, default=None, help="engine backend, options: [thread, process]")
    bench.add_argument("--inproc", action="store_true", help="engines as threads in this process")
    bench.add_argument("--timeout", type=float, default=None, help="seconds to wait for one pipeline run")
    bench.add_argument("--out", type=str, default=None, help="per-window report CSV")
    return parser


def wait_for_interrupt():
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    while not stop.is_set():
        stop.wait(0.5)


def cmd_gen(args):
    from data_provider.data_factory import data_provider, gen_config

    args.data = args.data or "tweets"
    args.root_path = args.root_path or BENCH_DEFAULTS["root_path"]
    args.regenerate = True
    cfg = gen_config(args.gen_config, seed=args.seed, tweet_count=args.tweets)
    paths = data_provider(args, cfg)
    print(f"expected KB size {cfg.expected_kb_triples} triples")
    for name, path in paths.items():
        print(f"  {name + ':':<12}{path}")


def cmd_replay(args, stream, rate, topic, eos=True):
    from bus.transport import connect
    from data_provider.data_factory import load_stream
    from data_provider.replay import replay

    broker = connect(args.broker)
    try:
        report = replay(load_stream(stream), rate, topic, broker, eos=eos)
    finally:
        broker.close()
    print(f"{report.events} events, {report.triples} triples in {report.duration_s:.2f}s "
          f"({report.achieved_rate:.0f}/s, rolling {report.min_rolling_rate:.0f}..{report.max_rolling_rate:.0f})")


def cmd_launch(args):
    if args.role == "broker":
        from bus.transport import BrokerServer

        server = BrokerServer(args.address or broker_address(args.broker))
        try:
            server.serve_forever()
        finally:
            server.close()
    elif args.role == "kbservice":
        from layers.KB_Service import serve
        from layers.Triple_Store import load_kb

        if not args.kb:
            raise ConfigError("launch kbservice needs --kb")
        with open(args.kb, encoding="utf-8") as f:
            handle = serve(load_kb(f), args.address or "127.0.0.1:0")
        print(f"KB service on {handle.address}", flush=True)
        wait_for_interrupt()
        handle.close()
    elif args.role == "operator":
        from bus.transport import connect
        from scep.node_config import load_operator_config
        from scep.operator import run_operator

        if not args.config:
            raise ConfigError("launch operator needs --config")
        cfg = load_operator_config(args.config)
        address = broker_address(args.broker)
        handle = run_operator(cfg, connect(address), args.log_level, address=address)
        _run_until_done(handle)
    elif args.role == "client":
        from bus.transport import connect
        from scep.client import CsvWindowSink, run_client
        from scep.node_config import load_client_settings

        if not args.config:
            raise ConfigError("launch client needs --config")
        settings = load_client_settings(args.config)
        sink = CsvWindowSink(settings.sink_file) if settings.sink_file else _log_window
        handle = run_client(settings.topics, settings.scripts, sink, connect(args.broker), settings.id, settings.window)
        _run_until_done(handle)
    elif args.role == "gen":
        args.gen_config = args.gen_config or args.config
        cmd_gen(args)
    elif args.role == "replay":
        if not args.stream:
            raise ConfigError("launch replay needs --stream")
        cmd_replay(args, args.stream, args.rate, args.topic)


def _log_window(window, script_id):
    logger.info("%s: window %d, %d events, %d triples", script_id, window.seq_no, len(window.events), window.triple_count)


def _run_until_done(handle):
    signal.signal(signal.SIGTERM, lambda *_: handle.stop())
    try:
        while handle.alive():
            handle.stop_event.wait(0.5)
    except KeyboardInterrupt:
        handle.stop()
    handle.join(timeout=10)


def cmd_bench(args):
    from exp.exp_step1 import Exp_Step1
    from exp.exp_step2 import Exp_Step2
    from exp.exp_step3 import Exp_Step3

    apply_bench_config(args)
    random.seed(args.seed)
    np.random.seed(args.seed)
    print("Args in experiment:")
    print_args(args)

    if args.step == "step1":
        Exp = Exp_Step1
    elif args.step == "step2":
        Exp = Exp_Step2
    else:
        Exp = Exp_Step3
    exp = Exp(args)
    print(">>>>>>>running {} : {}_{}_w{}_e{}_seed{}>>>>>>>>>>>>>>>>>>>>>>>>>>".format(
        args.step, args.engine, args.kb_mode, args.window, args.engines, args.seed))
    exp.run()


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.log_level = args.log_level.upper()
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.broker:
        os.environ["DSCEP_BROKER"] = args.broker
    try:
        if args.command == "gen":
            cmd_gen(args)
        elif args.command == "replay":
            cmd_replay(args, args.stream, args.rate, args.topic, args.eos)
        elif args.command == "launch":
            cmd_launch(args)
        else:
            cmd_bench(args)
    except (ConfigError, BusError, DigestMismatchError) as e:
        print(f"dscep: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
