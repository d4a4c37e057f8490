import logging
import polars
from pykged.backends import MockSelector, OracleSelector
from pykged.config import RunConfig
from pykged.descriptions import DescriptionStore
from pykged.evaluation import load_dataset, run_eval
from pykged.taxonomy import load_snapshot
from pykged.utils import data_path

# Runs the bundled datasets end to end without a network: the oracle on the mini dataset against each bundled
# snapshot, then the scripted KG and baseline answers on the adversarial mentions. Swap the selector for
# HttpSelector.from_config(config) to run against a live endpoint.

logging.basicConfig(level = logging.INFO, format = "%(levelname)s: %(message)s")
polars.Config().set_tbl_cols(10)

config = RunConfig(backend = "oracle", offline = True, max_in_flight = 4)
descriptions = DescriptionStore(data_path("descriptions.jsonl"), offline = True)
mini = load_dataset(data_path("mini_ed.jsonl"))

stores = {name: load_snapshot(data_path(name + ".tsv")) for name in ("sample_yago", "sample_dbpedia")}
for name, snapshot in stores.items():
    oracle_report, _ = run_eval(mini, "kg", snapshot, OracleSelector(snapshot, mini.golds()), descriptions, config)
    entry = oracle_report.per_dataset[mini.name]
    print("{:>14}: %Gold {:.1f}, Gold F1 {:.1f}, {} inKB mentions, mean iterations {:.2f}".format(
        name, entry["pct_gold"], 100 * entry["gold_f1"], entry["in_kb_mentions"], oracle_report.mean_iterations))
    print(oracle_report.to_frame())

store = stores["sample_yago"]

adversarial = load_dataset(data_path("phoenix_adversarial.jsonl"))
for pipeline, script in (("kg", "phoenix_adversarial.kg.jsonl"), ("baseline", "phoenix_adversarial.baseline.jsonl")):
    selector = MockSelector.from_jsonl(data_path(script))
    result, traces = run_eval(adversarial, pipeline, store, selector, descriptions, config)
    entry = result.per_dataset[adversarial.name]
    print("{:>8}: micro-F1 {:.1f}, {} selector calls".format(pipeline, 100 * entry["micro_f1"], selector.calls))
    for trace in traces:
        print("          {} -> {} ({} iterations)".format(trace.mention_id, trace.result, len(trace.iterations)))
