import json
import random
import numpy as np
import polars
import pytest
from pykged.backends import MockSelector, OracleSelector
from pykged.config import RunConfig
from pykged.descriptions import DescriptionStore, HttpFetcher
from pykged.errors import DatasetError
from pykged.evaluation import (Dataset, MetricsReport, load_dataset, dataset_stats, micro_f1, gold_f1, pct_gold,
                               weighted_average, iteration_stats, run_eval, load_error_tags, load_reference_results,
                               reference_rows, load_traces, REFERENCE_ITERATIONS)
from pykged.pruning import DisambiguationTask
from pykged.utils import data_path
from conftest import FakeTransport


def test_micro_f1_example():
    assert micro_f1(3, 1, 0) == pytest.approx(0.8571428571428571)
    assert micro_f1(0, 0, 0) is None
    assert micro_f1(0, 2, 5) == 0.0
    with pytest.raises(AssertionError):
        micro_f1(-1, 0, 0)


def test_micro_f1_is_harmonic_mean():
    rng = random.Random(1)
    for _ in range(10000):
        tp, fp, fn = rng.randint(1, 500), rng.randint(0, 500), rng.randint(0, 500)
        precision, recall = tp / (tp + fp), tp / (tp + fn)
        assert micro_f1(tp, fp, fn) == pytest.approx(2 * precision * recall / (precision + recall), abs = 1e-12)


def test_one_wrong_out_of_ten():
    report = MetricsReport()
    entry = report.add_dataset("ten", 9, 1, 1, 10, 0, 1.0)
    assert entry["micro_f1"] == pytest.approx(0.9)
    assert entry["pct_gold"] == pytest.approx(90.0)


def test_pct_gold():
    assert round(pct_gold(56.7, 88.0), 1) == 64.4
    assert round(pct_gold(78.7, 88.0), 1) == 89.4
    assert pct_gold(0.83, 0.83) == 100.0
    with pytest.raises(ValueError):
        pct_gold(0.5, 0.0)
    with pytest.raises(ValueError):
        pct_gold(0.5, None)


def test_weighted_average():
    assert weighted_average([60.0, 70.0], [1, 3]) == pytest.approx(67.5)
    with pytest.raises(ValueError):
        weighted_average([], [])
    with pytest.raises(ValueError):
        weighted_average([60.0, 70.0], [1, 0])


def toy_dataset(rows):
    # rows of (gold, candidates)
    tasks = [DisambiguationTask("m{}".format(i), "x", "x", list(candidates), gold)
             for i, (gold, candidates) in enumerate(rows)]
    return Dataset("toy", {"d": "x"}, tasks)


def test_gold_f1_brute_force():
    rng = random.Random(2)
    labels = ["e{}".format(i) for i in range(12)]
    for _ in range(500):
        kg = set(rng.sample(labels, 8))
        rows = [(rng.choice(labels), rng.sample(labels, rng.randint(1, 5))) for _ in range(rng.randint(1, 30))]
        hits = sum(1 for gold, candidates in rows if gold in kg and gold in candidates)
        misses = sum(1 for gold, candidates in rows if gold in kg and gold not in candidates)
        expected = None if hits + misses == 0 else hits / (hits + misses)
        assert gold_f1(toy_dataset(rows), kg) == expected


def test_gold_f1_ignores_out_of_kb_mentions():
    rows = [("a", ["a", "b"]), ("b", ["a"]), ("c", ["c"])]
    base = gold_f1(toy_dataset(rows), {"a", "b", "c"})
    extended = gold_f1(toy_dataset(rows + [("z", ["y"]), ("z", ["z"])]), {"a", "b", "c"})
    assert base == extended == pytest.approx(2 / 3)
    overridden = gold_f1(toy_dataset(rows), {"a", "b", "c"}, {"m1": ["b"]})
    assert overridden == 1.0


def test_published_percentages_are_consistent():
    frame = load_reference_results(data_path("published_results.tsv"))
    rows = reference_rows(frame)
    assert len(rows) == 50
    for method, dataset, f1, gold, pct in rows:
        assert pct_gold(f1, gold) == pytest.approx(pct, abs = 0.3), (method, dataset)


def test_published_averages():
    frame = load_reference_results(data_path("published_results.tsv"))
    sizes = polars.read_csv(data_path("datasets_reference.tsv"), separator = "\t", comment_prefix = "#")
    mentions = dict(zip(sizes["name"].to_list(), sizes["mentions"].to_list()))
    names = list(mentions)
    for row in frame.filter(polars.col("metric") == "%Gold").to_dicts():
        scores = [row[name] for name in names]
        assert float(np.mean(scores)) == pytest.approx(row["Avg."], abs = 0.3), row["method"]
        assert weighted_average(scores, [mentions[n] for n in names]) == pytest.approx(row["Wt. avg."], abs = 0.5)


def test_iteration_replay():
    traces = load_traces(data_path("yago_iteration_traces.jsonl"))
    assert len(traces) == 2000
    histogram, mean = iteration_stats(traces)
    assert sum(histogram.values()) == pytest.approx(100.0, abs = 1e-9)
    assert mean == pytest.approx(2.214, abs = 1e-9)
    reference, reference_mean = REFERENCE_ITERATIONS["YAGO"]
    assert sorted(histogram) == sorted(reference)
    for count, pct in histogram.items():
        assert pct == pytest.approx(reference[count], abs = 0.1)
    assert mean == pytest.approx(reference_mean, abs = 0.01)


def test_mini_dataset_stats():
    dataset = load_dataset(data_path("mini_ed.jsonl"))
    with open(data_path("mini_ed.stats.json")) as f:
        expected = json.load(f)
    stats = dataset_stats(dataset)
    assert stats["name"] == expected["name"]
    assert (stats["docs"], stats["mentions"]) == (expected["docs"], expected["mentions"])
    assert stats["avg_chars"] == pytest.approx(expected["avg_chars"], abs = 1e-9)


def write_lines(tmp_path, records):
    path = tmp_path / "ds.jsonl"
    path.write_text("\n".join(r if isinstance(r, str) else json.dumps(r) for r in records) + "\n", encoding = "utf-8")
    return str(path)


DOC = {"type": "doc", "doc_id": "d", "text": "Tiger won."}
MENTION = {"type": "mention", "mention_id": "m", "doc_id": "d", "surface": "Tiger", "start": 0, "end": 5,
           "gold": "Tiger_Woods", "candidates": ["Tiger", "Tiger_Woods"]}


@pytest.mark.parametrize("records, line", [
    ([DOC, "{oops"], 2),
    ([DOC, dict(MENTION, gold = None)], 2),
    ([dict(MENTION, doc_id = "missing"), DOC], 1),
    ([DOC, MENTION, MENTION], 3),
    ([DOC, dict(MENTION, end = 50)], 2),
    ([DOC, dict(MENTION, candidates = [])], 2),
    ([DOC, dict(MENTION, candidates = ["Tiger", "Tiger"])], 2),
    ([DOC, {"type": "other"}], 2),
])
def test_dataset_errors(tmp_path, records, line):
    with pytest.raises(DatasetError) as e:
        load_dataset(write_lines(tmp_path, records))
    assert e.value.line_number == line


def test_dataset_k_max(tmp_path):
    path = write_lines(tmp_path, [DOC, MENTION])
    assert len(load_dataset(path, k_max = 2)) == 1
    with pytest.raises(DatasetError):
        load_dataset(path, k_max = 1)


def test_oracle_reaches_gold(yago_store):
    dataset = load_dataset(data_path("mini_ed.jsonl"))
    oracle = OracleSelector(yago_store, dataset.golds())
    report, traces = run_eval(dataset, "kg", yago_store, oracle, config = RunConfig(backend = "oracle"),
                              progress = False)
    entry = report.per_dataset["mini_ed"]
    assert (entry["in_kb_mentions"], entry["out_of_kb_mentions"]) == (62, 7)
    # d23-1 has an inKB gold its candidates miss, every predictor gets it wrong
    assert (entry["tp"], entry["fp"], entry["fn"]) == (61, 1, 1)
    assert entry["gold_f1"] == pytest.approx(61 / 62)
    assert entry["micro_f1"] == entry["gold_f1"]
    assert entry["pct_gold"] == 100.0
    assert [t.mention_id for t in traces] == sorted(t.mention_id for t in dataset.tasks)
    assert report.failures == []


@pytest.mark.parametrize("snapshot", ["yago_store", "dbpedia_store"])
def test_oracle_reaches_gold_on_both_snapshots(snapshot, request):
    store = request.getfixturevalue(snapshot)
    dataset = load_dataset(data_path("mini_ed.jsonl"))
    report, _ = run_eval(dataset, "kg", store, OracleSelector(store, dataset.golds()),
                         config = RunConfig(backend = "oracle"), progress = False)
    entry = report.per_dataset["mini_ed"]
    assert entry["in_kb_mentions"] == 62
    assert entry["pct_gold"] == 100.0
    assert report.failures == []


def test_error_tags(yago_store):
    dataset = load_dataset(data_path("mini_ed.jsonl"))
    tags = load_error_tags(data_path("mini_ed.error_tags.jsonl"))
    report, traces = run_eval(dataset, "kg", yago_store, OracleSelector(yago_store, dataset.golds()),
                              config = RunConfig(backend = "oracle"), error_tags = tags, progress = False)
    assert report.tag_counts == {"llm": 1, "ambiguous": 1, "kg": 1, "ground_truth": 1}
    assert {t.mention_id: t.tags for t in traces}["d08-1"] == ["llm"]


def test_bad_error_tag(tmp_path):
    path = tmp_path / "tags.jsonl"
    path.write_text(json.dumps({"mention_id": "m", "tag": "typo"}) + "\n")
    with pytest.raises(DatasetError):
        load_error_tags(str(path))


def test_kg_beats_baseline_on_adversarial_mentions(yago_store):
    dataset = load_dataset(data_path("phoenix_adversarial.jsonl"))
    config = RunConfig(backend = "mock", max_in_flight = 1)
    kg, _ = run_eval(dataset, "kg", yago_store, MockSelector.from_jsonl(data_path("phoenix_adversarial.kg.jsonl")),
                     config = config, progress = False)
    baseline, _ = run_eval(dataset, "baseline", yago_store,
                           MockSelector.from_jsonl(data_path("phoenix_adversarial.baseline.jsonl")), config = config,
                           progress = False)
    kg_entry, baseline_entry = kg.per_dataset[dataset.name], baseline.per_dataset[dataset.name]
    assert kg_entry["micro_f1"] == 1.0
    assert (baseline_entry["tp"], baseline_entry["fp"], baseline_entry["fn"]) == (1, 3, 3)
    assert baseline_entry["micro_f1"] == 0.25
    assert kg.mean_iterations == pytest.approx(7 / 4)
    assert baseline.mean_iterations == 1.0


def test_unreadable_descriptions_do_not_stop_the_run(yago_store, tmp_path):
    dataset = load_dataset(data_path("phoenix_adversarial.jsonl"))
    fetcher = HttpFetcher(backoff = 0, transport = FakeTransport([(200, None)]))
    descriptions = DescriptionStore(str(tmp_path / "descriptions.jsonl"), fetcher)
    report, traces = run_eval(dataset, "kg", yago_store,
                              MockSelector.from_jsonl(data_path("phoenix_adversarial.kg.jsonl")), descriptions,
                              config = RunConfig(backend = "mock", max_in_flight = 1), progress = False)
    assert report.failures == []
    assert report.per_dataset[dataset.name]["micro_f1"] == 1.0
    assert "Phoenix,_Arizona" in {t.mention_id: t for t in traces}["phoenix"].description_failures


def test_failed_mentions_count_as_wrong(yago_store):
    dataset = load_dataset(data_path("phoenix_adversarial.jsonl"))
    # the script stops after the tiger mention
    selector = MockSelector.scripted({"tiger": ["3", "yes"]})
    report, traces = run_eval(dataset, "kg", yago_store, selector, config = RunConfig(backend = "mock"),
                              progress = False)
    entry = report.per_dataset[dataset.name]
    assert report.failures == ["bounty", "justin", "phoenix"]
    assert (entry["tp"], entry["fp"], entry["fn"]) == (1, 3, 3)
    assert all(t.failed for t in traces if t.mention_id != "tiger")


def test_report_layout(yago_store):
    dataset = load_dataset(data_path("mini_ed.jsonl"))
    report, _ = run_eval(dataset, "kg", yago_store, OracleSelector(yago_store, dataset.golds()),
                         config = RunConfig(backend = "oracle"), progress = False)
    lines = report.to_tsv().splitlines()
    assert lines[0] == "metric\tmini_ed\tAvg.\tWt. avg."
    assert lines[1] == "F1-Score\t98.4\t\t"
    assert lines[3] == "%Gold\t100.0\t100.0\t100.0"

    as_dict = json.loads(report.to_json())
    assert as_dict["per_dataset"]["mini_ed"]["in_kb_mentions"] == 62
    assert as_dict["averages"]["weighted"]["pct_gold"] == 100.0
    assert as_dict["template"] == "pykged/v1"


def test_report_averages_over_datasets():
    report = MetricsReport()
    report.add_dataset("small", 6, 4, 4, 10, 0, 0.8)
    report.add_dataset("large", 70, 30, 30, 100, 5, 1.0)
    small, large = report.per_dataset["small"]["pct_gold"], report.per_dataset["large"]["pct_gold"]
    averages = report.averages
    assert averages["plain"]["pct_gold"] == pytest.approx((small + large) / 2)
    assert averages["weighted"]["pct_gold"] == pytest.approx((10 * small + 100 * large) / 110)


def test_merged_reports_average_over_datasets():
    small = MetricsReport("kg", "pykged/v1")
    small.add_dataset("small", 9, 1, 1, 10, 2, 1.0)
    small.fallback_parse_count = 2
    large = MetricsReport("kg", "pykged/v1")
    large.add_dataset("large", 60, 30, 30, 90, 0, 0.9)
    large.failures = ["l7"]
    merged = small.merge(large)
    assert list(merged.per_dataset) == ["small", "large"]
    assert merged.fallback_parse_count == 2
    assert merged.failures == ["l7"]
    lines = merged.to_tsv().splitlines()
    assert lines[0] == "metric\tsmall\tlarge\tAvg.\tWt. avg."
    assert merged.averages["weighted"]["micro_f1"] == pytest.approx((10 * 0.9 + 90 * 60 / 90) / 100)
