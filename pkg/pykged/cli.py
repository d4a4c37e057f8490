import argparse
import glob
import json
import logging
import os
import sys
from pykged import __version__
from pykged.backends import make_selector
from pykged.config import RunConfig, DEFAULTS, BACKENDS, PIPELINES
from pykged.descriptions import DescriptionStore
from pykged.errors import BackendError, ConfigError, DataError, DisambiguationError, GraphError, KgedError
from pykged.evaluation import (load_dataset, load_error_tags, load_traces, iteration_stats, run_eval,
                               REFERENCE_ITERATIONS)
from pykged.pruning import DisambiguationTask, disambiguate, baseline_disambiguate, write_trace, load_trace, BASELINE
from pykged.selector import template_id
from pykged.taxonomy import load_snapshot
from pykged.utils import file_checksum, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BACKEND = 4

CHECKSUMMED = ("kg_snapshot", "dataset", "mock_script", "description_cache", "error_tags")

def build_config(args):
    overrides = {}
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and key != "workspace":
            overrides[key] = value
    overrides["workspace"] = args.workspace
    if getattr(args, "config", None):
        return RunConfig.from_yaml(args.config, **overrides)
    return RunConfig(**overrides)

def manifest(config):
    return {
        "pykged_version": __version__,
        "template": template_id(config["template_version"]),
        "config": config.to_dict(),
        "checksums": {key: file_checksum(config.resolve(key)) for key in CHECKSUMMED},
    }

def _components(config, golds = None):
    store = load_snapshot(config.resolve("kg_snapshot"))
    selector = make_selector(config, store, golds)
    descriptions = None
    if config["pipeline"] != BASELINE or config["include_descriptions"]:
        descriptions = DescriptionStore.from_config(config)
    return store, selector, descriptions

def cmd_stats(args):
    store = load_snapshot(os.path.join(args.workspace, args.snapshot))
    stats = store.compute_stats()
    if args.json:
        print(json.dumps(stats.to_dict(), indent = 2))
    else:
        print(stats)
    return EXIT_OK

def cmd_run(args):
    config = build_config(args)
    if config["kg_snapshot"] is None and config["pipeline"] != BASELINE:
        raise ConfigError("run needs --kg-snapshot")
    config.validate()

    task = DisambiguationTask(args.mention_id, args.mention, args.document, list(args.candidates), args.gold,
                              args.start, args.end)
    task.check(config["k_max"])
    golds = {task.mention_id: args.gold} if args.gold is not None else None

    if config["pipeline"] == BASELINE:
        store = load_snapshot(config.resolve("kg_snapshot")) if config["kg_snapshot"] else None
        selector = make_selector(config, store, golds)
        descriptions = DescriptionStore.from_config(config) if config["include_descriptions"] else None
        result, trace = baseline_disambiguate(task, selector, config["include_descriptions"], descriptions,
                                              config["context_window"], config["desc_limit"], config["template_version"])
    else:
        store, selector, descriptions = _components(config, golds)
        result, trace = disambiguate(task, store, selector, descriptions, config["context_window"], config["desc_limit"],
                                     config["template_version"], config["multi_select"])

    path = write_trace(trace, os.path.join(config.resolve("output_dir"), "traces"))
    print(result)
    print("trace: {} ({} selector calls, {} iterations)".format(path, trace.total_selector_calls, len(trace.iterations)))
    return EXIT_OK

def cmd_eval(args):
    config = build_config(args)
    for key in ("kg_snapshot", "dataset"):
        if config[key] is None:
            raise ConfigError("eval needs --{}".format(key.replace("_", "-")))
    config.validate()
    run_manifest = manifest(config)

    dataset = load_dataset(config.resolve("dataset"), k_max = config["k_max"])
    store, selector, descriptions = _components(config, dataset.golds())
    error_tags = load_error_tags(config.resolve("error_tags")) if config["error_tags"] else None

    report, traces = run_eval(dataset, config["pipeline"], store, selector, descriptions, config, error_tags,
                              progress = not args.quiet)

    output_dir = config.resolve("output_dir")
    trace_dir = os.path.join(output_dir, "traces")
    for stale in glob.glob(os.path.join(trace_dir, "*.json")):
        os.remove(stale)
    for trace in traces:
        write_trace(trace, trace_dir)
    os.makedirs(output_dir, exist_ok = True)
    with open(os.path.join(output_dir, "report.json"), "w", encoding = "utf-8") as f:
        f.write(report.to_json())
    if config["write_tsv"]:
        report.to_tsv(os.path.join(output_dir, "report.tsv"))
    write_json(run_manifest, os.path.join(output_dir, "manifest.json"))

    entry = report.per_dataset[dataset.name]
    print("{}: micro-F1 {} | Gold F1 {} | %Gold {}".format(dataset.name, _fmt(entry["micro_f1"]),
                                                            _fmt(entry["gold_f1"]), _fmt(entry["pct_gold"], 1.0)))
    if report.mean_iterations is not None:
        print("mean iterations: {:.2f}".format(report.mean_iterations))
    for mention_id in report.failures:
        print("FAILED {}".format(mention_id))
    print("report written to {}".format(output_dir))
    return EXIT_OK

def _fmt(value, scale = 100.0):
    return "n/a" if value is None else "{:.1f}".format(value * scale)

def cmd_warm_cache(args):
    config = build_config(args)
    if config["dataset"] is None or config["description_cache"] is None:
        raise ConfigError("warm-cache needs --dataset and --description-cache")
    config.validate(selector = False)
    dataset = load_dataset(config.resolve("dataset"))
    descriptions = DescriptionStore.from_config(config)
    summary = descriptions.warm(dataset.candidate_entities())
    print("{} entities: {cached} cached, {fetched} fetched, {absent} absent, {failed} failed".format(
        len(dataset.candidate_entities()), **summary))
    return EXIT_OK

def cmd_inspect_trace(args):
    path = os.path.join(args.workspace, args.path)
    if os.path.isfile(path) and path.endswith(".json"):
        trace = load_trace(path)
        print("{} {!r} -> {} ({} selector calls)".format(trace.mention_id, trace.mention, trace.result,
                                                        trace.total_selector_calls))
        for i, it in enumerate(trace.iterations, 1):
            print("  {}. lca {} [{}]".format(i, it.lca, it.case))
            for query in it.queries:
                print("     {} {} -> {}{}".format(query.kind, query.options_shown, query.chosen,
                                                 " ({})".format(query.reason) if query.reason else ""))
            print("     pruned {}".format(it.pruned))
        return EXIT_OK

    traces = load_traces(path)
    if len(traces) == 0:
        raise DataError("no traces under {}".format(path))
    histogram, mean = iteration_stats(traces)
    reference = REFERENCE_ITERATIONS.get(args.reference) if args.reference else None
    print("{} traces".format(len(traces)))
    for count, pct in histogram.items():
        line = "{:>3} iterations: {:6.2f}%".format(count, pct)
        if reference is not None:
            line += "   ({}: {:.2f}%)".format(args.reference, reference[0].get(count, 0.0))
        print(line)
    print("mean: {:.2f}".format(mean) + ("   ({}: {:.2f})".format(args.reference, reference[1]) if reference else ""))
    return EXIT_OK

def _add_config_flags(parser):
    parser.add_argument("--config", help = "YAML file with run settings, flags override it")
    for key, default in DEFAULTS.items():
        if key == "workspace":
            continue
        flag = "--" + key.replace("_", "-")
        if type(default) == bool:
            parser.add_argument(flag, dest = key, action = "store_true", default = None)
        elif key == "backend":
            parser.add_argument(flag, dest = key, choices = BACKENDS)
        elif key == "pipeline":
            parser.add_argument(flag, dest = key, choices = PIPELINES)
        else:
            parser.add_argument(flag, dest = key, type = type(default) if default is not None else str)

def make_parser():
    parser = argparse.ArgumentParser(prog = "pykged", description = "KG-guided entity disambiguation")
    parser.add_argument("--workspace", default = ".", help = "relative paths are resolved against this directory")
    parser.add_argument("--log-level", default = "warning", choices = ["debug", "info", "warning", "error"])
    parser.add_argument("--version", action = "version", version = "pykged " + __version__)
    sub = parser.add_subparsers(dest = "command", required = True)

    stats = sub.add_parser("stats", help = "validate a taxonomy snapshot and print its statistics")
    stats.add_argument("snapshot")
    stats.add_argument("--json", action = "store_true")
    stats.set_defaults(func = cmd_stats)

    run = sub.add_parser("run", help = "disambiguate one mention")
    _add_config_flags(run)
    run.add_argument("--mention", required = True)
    run.add_argument("--document", required = True)
    run.add_argument("--candidates", nargs = "+", required = True)
    run.add_argument("--mention-id", default = "cli")
    run.add_argument("--gold")
    run.add_argument("--start", type = int)
    run.add_argument("--end", type = int)
    run.set_defaults(func = cmd_run)

    evaluate = sub.add_parser("eval", help = "run a dataset and write report, traces and manifest")
    _add_config_flags(evaluate)
    evaluate.add_argument("--quiet", action = "store_true", help = "no progress bar")
    evaluate.set_defaults(func = cmd_eval)

    warm = sub.add_parser("warm-cache", help = "fetch the descriptions of every candidate of a dataset")
    _add_config_flags(warm)
    warm.set_defaults(func = cmd_warm_cache)

    inspect = sub.add_parser("inspect-trace", help = "print one trace, or the iteration histogram of many")
    inspect.add_argument("path", help = "trace .json, trace directory, or JSON Lines file of traces")
    inspect.add_argument("--reference", choices = sorted(REFERENCE_ITERATIONS))
    inspect.set_defaults(func = cmd_inspect_trace)
    return parser

def main(argv = None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level = getattr(logging, args.log_level.upper()), format = "%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print("configuration error: {}".format(e), file = sys.stderr)
        return EXIT_CONFIG
    except (DataError, GraphError) as e:
        print("data error: {}".format(e), file = sys.stderr)
        return EXIT_DATA
    except (BackendError, DisambiguationError) as e:
        print("backend error: {}".format(e), file = sys.stderr)
        return EXIT_BACKEND
    except KgedError as e:
        print("error: {}".format(e), file = sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print("io error: {}".format(e), file = sys.stderr)
        return EXIT_DATA

def entry():
    sys.exit(main())
