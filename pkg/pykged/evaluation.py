import glob
import json
import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import numpy as np
import polars
from tqdm import tqdm
from pykged.config import RunConfig
from pykged.errors import DatasetError, DisambiguationError, KgedError
from pykged.pruning import (DisambiguationTask, DisambiguationTrace, disambiguate, baseline_disambiguate,
                            trace_from_dict, KG, BASELINE)
from pykged.selector import template_id
from pykged.utils import dumps

logger = logging.getLogger(__name__)

TAGS = ("llm", "ambiguous", "kg", "ground_truth")
METRICS = ("micro_f1", "gold_f1", "pct_gold")

# iteration histograms published for the two full KGs with GPT-3.5 as selector. They are what the bundled trace
# fixture is shaped after, not something a run here is expected to reproduce.
REFERENCE_ITERATIONS = {
    "YAGO": ({1: 26.24, 2: 37.36, 3: 26.60, 4: 8.30, 5: 1.32, 6: 0.15}, 2.21),
    "DBpedia": ({1: 23.57, 2: 43.00, 3: 26.68, 4: 6.12, 5: 0.42, 6: 0.01}, 2.18),
}

@dataclass
class Dataset:
    name: str
    documents: dict
    tasks: list

    def __len__(self):
        return len(self.tasks)

    def golds(self):
        return {task.mention_id: task.gold for task in self.tasks}

    def candidate_entities(self):
        return sorted({c for task in self.tasks for c in task.candidates})

def _require(record, key, kind, line_number):
    if key not in record:
        raise DatasetError("{} record is missing {!r}".format(kind, key), line_number)
    return record[key]

def load_dataset(path, name = None, k_max = None):

    """
    Loads an ED dataset. One JSON object per line, documents and mentions may come in any order:

        {"type": "doc", "doc_id": ..., "text": ...}
        {"type": "mention", "mention_id": ..., "doc_id": ..., "surface": ..., "start": ..., "end": ..., "gold": ...,
         "candidates": [...]}

    Args:
        path (str): dataset file.
        name (str, optional): dataset name for reports. Defaults to the file name.
        k_max (int, optional): upper bound on the candidate set size.

    Return:
        Dataset

    Raises:
        DatasetError: schema violations with their line number, mentions without gold, mentions pointing at a
            document that is not in the file.
    """

    documents = {}
    mentions = []
    seen = set()
    with open(path, encoding = "utf-8") as f:
        for line_number, line in enumerate(f, 1):
            if len(line.strip()) == 0:
                continue
            try:
                record = json.loads(line)
            except ValueError:
                raise DatasetError("not a JSON record", line_number)
            if not isinstance(record, dict):
                raise DatasetError("expected a JSON object", line_number)
            kind = record.get("type")
            if kind == "doc":
                doc_id = str(_require(record, "doc_id", "doc", line_number))
                text = _require(record, "text", "doc", line_number)
                if not isinstance(text, str):
                    raise DatasetError("document text must be a string", line_number)
                if doc_id in documents:
                    raise DatasetError("duplicate document {!r}".format(doc_id), line_number)
                documents[doc_id] = text
            elif kind == "mention":
                mention_id = str(_require(record, "mention_id", "mention", line_number))
                if mention_id in seen:
                    raise DatasetError("duplicate mention {!r}".format(mention_id), line_number)
                seen.add(mention_id)
                if record.get("gold") is None:
                    raise DatasetError("mention {!r} has no gold entity".format(mention_id), line_number)
                candidates = _require(record, "candidates", "mention", line_number)
                if not isinstance(candidates, list) or not all(isinstance(c, str) for c in candidates):
                    raise DatasetError("candidates of {!r} must be a list of labels".format(mention_id), line_number)
                mentions.append((line_number, record, mention_id, candidates))
            else:
                raise DatasetError("unknown record type {!r}".format(kind), line_number)

    tasks = []
    for line_number, record, mention_id, candidates in mentions:
        doc_id = str(_require(record, "doc_id", "mention", line_number))
        if doc_id not in documents:
            raise DatasetError("mention {!r} references missing document {!r}".format(mention_id, doc_id), line_number)
        text = documents[doc_id]
        surface = _require(record, "surface", "mention", line_number)
        start, end = record.get("start"), record.get("end")
        if start is not None and end is not None and not (0 <= start <= end <= len(text)):
            raise DatasetError("span {}:{} of {!r} is outside its document".format(start, end, mention_id), line_number)
        task = DisambiguationTask(mention_id, surface, text, list(candidates), record["gold"], start, end, doc_id)
        try:
            task.check(k_max if k_max is not None else max(len(candidates), 1))
        except DatasetError as e:
            raise DatasetError(str(e), line_number)
        tasks.append(task)

    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    dataset = Dataset(name, documents, tasks)
    stats = dataset_stats(dataset)
    logger.info("loaded dataset %s: %d docs, %d mentions, %.1f characters per doc", name, stats["docs"],
                stats["mentions"], stats["avg_chars"])
    return dataset

def dataset_stats(dataset):
    lengths = [len(text) for text in dataset.documents.values()]
    return {"name": dataset.name, "docs": len(dataset.documents), "mentions": len(dataset.tasks),
            "avg_chars": float(np.mean(lengths)) if len(lengths) > 0 else 0.0}

def micro_f1(tp, fp, fn):

    """
    micro-F1 = TP / (TP + (FP + FN) / 2)

    Return:
        the score in [0, 1], or None when all three counts are zero and the score is undefined.

    Examples:

        >>> micro_f1(3, 1, 0)
        0.8571428571428571
    """

    assert tp >= 0 and fp >= 0 and fn >= 0, "counts must be non-negative"
    if tp == 0 and fp == 0 and fn == 0:
        return None
    return tp / (tp + 0.5 * (fp + fn))

def _membership(kg):
    if kg is None:
        return lambda label: True
    if hasattr(kg, "is_entity"):
        return kg.is_entity
    if callable(kg):
        return kg
    return lambda label: label in kg

def gold_f1(dataset, kg_membership = None, candidate_sets = None):

    """
    The best inKB micro-F1 any predictor could reach with the given candidate sets. Every mention whose gold is
    among its candidates is a hit. Every other inKB mention still gets an answer, which is wrong, so it counts as one
    false positive and one false negative, the same way run_eval counts it.

    Args:
        dataset (Dataset): mentions with gold.
        kg_membership: TaxonomyStore, set of labels or predicate telling whether a gold entity is in the KG.
            None counts every mention.
        candidate_sets (dict, optional): mention_id -> candidates, overriding the dataset's own.
    """

    in_kb = _membership(kg_membership)
    hits = misses = 0
    for task in dataset.tasks:
        if not in_kb(task.gold):
            continue
        candidates = candidate_sets.get(task.mention_id, task.candidates) if candidate_sets else task.candidates
        if task.gold in candidates:
            hits += 1
        else:
            misses += 1
    return micro_f1(hits, misses, misses)

def pct_gold(micro, gold):
    if gold is None or gold <= 0:
        raise ValueError("%Gold is undefined for a Gold F1 of {!r}".format(gold))
    return 100.0 * (micro / gold)

def weighted_average(scores, weights):
    if len(scores) == 0:
        raise ValueError("weighted average of nothing")
    assert len(scores) == len(weights)
    if any(w <= 0 for w in weights):
        raise ValueError("weights must be positive, got {}".format(list(weights)))
    return float(np.average(np.asarray(scores, dtype = float), weights = np.asarray(weights, dtype = float)))

def iteration_stats(traces):

    """
    Share of mentions per number of pruning iterations.

    Return:
        (histogram, mean): histogram maps iteration count -> percent of mentions, mean is sum(count * percent) / 100.
    """

    assert len(traces) > 0, "no traces"
    counts = Counter(len(trace.iterations) for trace in traces)
    total = sum(counts.values())
    histogram = {c: 100.0 * counts[c] / total for c in sorted(counts)}
    mean = sum(c * pct for c, pct in histogram.items()) / 100.0
    return histogram, mean

'''
Scores of one or more datasets in the layout of a results table: micro-F1, Gold F1 and %Gold per dataset with the
plain and the mention-weighted average over datasets, plus iteration statistics of the runs behind them.
'''
class MetricsReport:
    def __init__(self, pipeline = None, template = None) -> None:
        self.pipeline = pipeline
        self.template = template
        self.per_dataset = {}
        self.iteration_histogram = {}
        self.mean_iterations = None
        self.fallback_parse_count = 0
        self.tag_counts = {tag: 0 for tag in TAGS}
        self.failures = []

    def add_dataset(self, name, tp, fp, fn, in_kb_mentions, out_of_kb_mentions, gold):
        micro = micro_f1(tp, fp, fn)
        self.per_dataset[name] = {
            "tp": tp, "fp": fp, "fn": fn,
            "in_kb_mentions": in_kb_mentions, "out_of_kb_mentions": out_of_kb_mentions,
            "micro_f1": micro, "gold_f1": gold,
            "pct_gold": pct_gold(micro if micro is not None else 0.0, gold) if gold else None,
        }
        return self.per_dataset[name]

    @property
    def averages(self):
        result = {"plain": {}, "weighted": {}}
        for metric in METRICS:
            rows = [(e[metric], e["in_kb_mentions"]) for e in self.per_dataset.values()
                    if e[metric] is not None and e["in_kb_mentions"] > 0]
            if len(rows) == 0:
                result["plain"][metric] = result["weighted"][metric] = None
                continue
            scores, weights = zip(*rows)
            result["plain"][metric] = float(np.mean(scores))
            result["weighted"][metric] = weighted_average(scores, weights)
        return result

    def set_iterations(self, traces):
        if len(traces) == 0:
            return
        self.iteration_histogram, self.mean_iterations = iteration_stats(traces)

    def merge(self, other):
        for name, entry in other.per_dataset.items():
            self.per_dataset[name] = dict(entry)
        for tag in TAGS:
            self.tag_counts[tag] += other.tag_counts[tag]
        self.fallback_parse_count += other.fallback_parse_count
        self.failures = sorted(self.failures + other.failures)
        return self

    def to_dict(self):
        return {
            "pipeline": self.pipeline,
            "template": self.template,
            "per_dataset": {name: self.per_dataset[name] for name in self.per_dataset},
            "averages": self.averages,
            "iteration_histogram": {str(c): pct for c, pct in sorted(self.iteration_histogram.items())},
            "mean_iterations": self.mean_iterations,
            "fallback_parse_count": self.fallback_parse_count,
            "tag_counts": dict(self.tag_counts),
            "failures": list(self.failures),
        }

    def to_json(self):
        return dumps(self.to_dict())

    def to_frame(self):
        names = list(self.per_dataset)
        averages = self.averages
        rows = []
        for metric, title in (("micro_f1", "F1-Score"), ("gold_f1", "Gold F1"), ("pct_gold", "%Gold")):
            row = {"metric": title}
            scale = 1.0 if metric == "pct_gold" else 100.0
            for name in names:
                value = self.per_dataset[name][metric]
                row[name] = round(value * scale, 1) if value is not None else None
            # only %Gold is comparable across KGs, so only %Gold is averaged
            for column, key in (("Avg.", "plain"), ("Wt. avg.", "weighted")):
                value = averages[key]["pct_gold"]
                row[column] = round(value, 1) if metric == "pct_gold" and value is not None else None
            rows.append(row)
        schema = {"metric": polars.Utf8, **{c: polars.Float64 for c in names + ["Avg.", "Wt. avg."]}}
        return polars.DataFrame(rows, schema = schema)

    def to_tsv(self, path = None):
        frame = self.to_frame()
        if path is None:
            return frame.write_csv(separator = "\t")
        frame.write_csv(path, separator = "\t")
        return path


def _run_one(task, pipeline, store, selector, descriptions, config):
    try:
        if pipeline == BASELINE:
            return baseline_disambiguate(task, selector, config["include_descriptions"], descriptions,
                                         config["context_window"], config["desc_limit"], config["template_version"])[1]
        return disambiguate(task, store, selector, descriptions, config["context_window"], config["desc_limit"],
                            config["template_version"], config["multi_select"])[1]
    except DisambiguationError as e:
        logger.warning("mention %r failed: %s", task.mention_id, e)
        return e.trace
    except KgedError as e:
        logger.warning("mention %r failed: %s", task.mention_id, e)
        trace = DisambiguationTrace(task.mention_id, task.mention, list(task.candidates), pipeline,
                                    template_id(config["template_version"]), task.gold)
        trace.failed = True
        trace.error = "{}: {}".format(e.__class__.__name__, e)
        return trace

def run_eval(dataset, pipeline, store, selector, descriptions = None, config = None, error_tags = None,
             progress = True):

    """
    Disambiguates every mention of `dataset` and scores the predictions.

    A wrong prediction on an inKB mention counts as one false positive and one false negative, a correct one as a
    true positive. Mentions whose gold is not in the KG are left out of the scores and only counted. A mention whose
    selector failed counts as wrong and is listed under `failures`; the run goes on.

    Args:
        dataset (Dataset): mentions to run.
        pipeline (str): "kg" for the taxonomy-guided pruning, "baseline" for a single entity query.
        store (TaxonomyStore): the KG taxonomy.
        selector (Selector): backend answering the queries.
        descriptions (DescriptionStore, optional): entity descriptions.
        config (RunConfig, optional): prompt and concurrency settings. Defaults to RunConfig().
        error_tags (dict, optional): mention_id -> error category, merged into the traces and the tag counts.

    Return:
        (MetricsReport, traces sorted by mention id)
    """

    config = config if config is not None else RunConfig()
    assert pipeline in (KG, BASELINE), "unknown pipeline " + str(pipeline)
    error_tags = error_tags or {}

    with ThreadPoolExecutor(max_workers = config["max_in_flight"]) as executor:
        futures = [executor.submit(_run_one, task, pipeline, store, selector, descriptions, config)
                   for task in dataset.tasks]
        traces = [f.result() for f in tqdm(futures, desc = dataset.name, disable = not progress)]
    traces = sorted(traces, key = lambda t: t.mention_id)

    in_kb = _membership(store)
    report = MetricsReport(pipeline, template_id(config["template_version"]))
    tp = fp = fn = in_kb_count = out_of_kb = 0
    for trace in traces:
        if trace.mention_id in error_tags:
            trace.tags = [error_tags[trace.mention_id]]
            report.tag_counts[error_tags[trace.mention_id]] += 1
        report.fallback_parse_count += trace.counters["parse_fallbacks"]
        if trace.failed:
            report.failures.append(trace.mention_id)
        if not in_kb(trace.gold):
            out_of_kb += 1
            continue
        in_kb_count += 1
        if not trace.failed and trace.result == trace.gold:
            tp += 1
        else:
            fp += 1
            fn += 1

    report.add_dataset(dataset.name, tp, fp, fn, in_kb_count, out_of_kb, gold_f1(dataset, store))
    report.set_iterations([t for t in traces if not t.failed])
    entry = report.per_dataset[dataset.name]
    logger.info("%s/%s: tp %d fp %d fn %d, micro-F1 %s, Gold F1 %s, %d failed", dataset.name, pipeline, tp, fp, fn,
                entry["micro_f1"], entry["gold_f1"], len(report.failures))
    return report, traces

def load_error_tags(path):
    tags = {}
    with open(path, encoding = "utf-8") as f:
        for line_number, line in enumerate(f, 1):
            if len(line.strip()) == 0:
                continue
            try:
                record = json.loads(line)
                mention_id, tag = str(record["mention_id"]), record["tag"]
            except (ValueError, KeyError, TypeError):
                raise DatasetError("error tag records look like {\"mention_id\": ..., \"tag\": ...}", line_number)
            if tag not in TAGS:
                raise DatasetError("unknown error tag {!r}, expected one of {}".format(tag, TAGS), line_number)
            tags[mention_id] = tag
    return tags

def load_reference_results(path):

    """
    Reads a published results table: one row per (method, metric) and one column per dataset, `#` lines are
    provenance comments.

    Return:
        polars.DataFrame with columns method, metric, the dataset names, "Avg." and "Wt. avg.".
    """

    return polars.read_csv(path, separator = "\t", comment_prefix = "#")

def reference_rows(frame):
    # (method, dataset, F1, Gold F1, %Gold) for every cell triple of the table
    datasets = [c for c in frame.columns if c not in ("method", "metric", "Avg.", "Wt. avg.")]
    rows = []
    for method in frame["method"].unique(maintain_order = True).to_list():
        block = frame.filter(polars.col("method") == method)
        values = {row["metric"]: row for row in block.to_dicts()}
        for dataset in datasets:
            rows.append((method, dataset, values["F1-Score"][dataset], values["Gold F1"][dataset], values["%Gold"][dataset]))
    return rows

def load_traces(path):

    """
    Loads traces for replay, either from a JSON Lines file with one trace per line or from a directory of per-mention
    trace documents as written by an evaluation run.
    """

    if os.path.isdir(path):
        traces = []
        for name in sorted(glob.glob(os.path.join(path, "*.json"))):
            with open(name, encoding = "utf-8") as f:
                traces.append(trace_from_dict(json.load(f)))
        return traces

    traces = []
    with open(path, encoding = "utf-8") as f:
        for line_number, line in enumerate(f, 1):
            if len(line.strip()) == 0:
                continue
            try:
                traces.append(trace_from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError):
                raise DatasetError("{}: not a trace record".format(path), line_number)
    return traces
