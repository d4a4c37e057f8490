import json
import logging
import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Optional
from pykged.errors import BackendError, DatasetError, DisambiguationError
from pykged.selector import (build_query, template_id, Selection, CLASS_CHOICE, ENTITY_CHOICE, MIXED_CHOICE,
                             ASSESSMENT, REJECT, FALLBACK, NONE, OTHER)
from pykged.subgraph import build_subgraph, ALL_CLASSES, ALL_ENTITIES
from pykged.utils import dumps, safe_filename

logger = logging.getLogger(__name__)

KG = "kg"
BASELINE = "baseline"

# what made a query happen besides the regular case handling
NONE_FALLBACK = "none_fallback"
ASSESSMENT_REJECTED = "assessment_rejected"
FORCED_PROGRESS = "forced_progress"

COUNTERS = ("class_queries", "entity_queries", "assessment_queries", "forced_progress", "parse_fallbacks",
            "backend_retries", "description_misses")

@dataclass
class DisambiguationTask:
    mention_id: str
    mention: str
    document: str
    candidates: list
    gold: Optional[str] = None
    start: Optional[int] = None
    end: Optional[int] = None
    doc_id: Optional[str] = None

    def check(self, k_max = 10):
        if len(self.candidates) == 0:
            raise DatasetError("mention {!r} has no candidates".format(self.mention_id))
        if len(self.candidates) > k_max:
            raise DatasetError("mention {!r} has {} candidates, more than k_max = {}".format(
                self.mention_id, len(self.candidates), k_max))
        if len(set(self.candidates)) != len(self.candidates):
            raise DatasetError("mention {!r} has duplicate candidates".format(self.mention_id))
        if self.mention.lower() not in self.document.lower():
            logger.warning("mention %r (%r) does not occur in its document", self.mention_id, self.mention)
        return self

@dataclass
class QueryRecord:
    kind: str
    reason: Optional[str]
    options_shown: list
    selection: Optional[Selection]
    chosen: list = field(default_factory = list)
    covers: dict = field(default_factory = dict)

    def to_dict(self):
        return {"kind": self.kind, "reason": self.reason, "options_shown": list(self.options_shown),
                "covers": {k: list(v) for k, v in self.covers.items()}, "chosen": list(self.chosen),
                "selection": self.selection.to_dict() if self.selection is not None else None}

    @classmethod
    def from_dict(cls, d):
        selection = Selection.from_dict(d["selection"]) if d.get("selection") is not None else None
        return cls(d.get("kind", ENTITY_CHOICE), d.get("reason"), list(d.get("options_shown", [])), selection,
                   list(d.get("chosen", [])), {k: list(v) for k, v in d.get("covers", {}).items()})

@dataclass
class IterationRecord:
    lca: Optional[str]
    case: str
    lca_ties: list = field(default_factory = list)
    leaves_before: list = field(default_factory = list)
    # the first query of the iteration, then the ones it triggered
    queries: list = field(default_factory = list)
    sentinel_used: Optional[str] = None
    pruned: list = field(default_factory = list)
    leaves_after: list = field(default_factory = list)

    @property
    def options_shown(self):
        return self.queries[0].options_shown if len(self.queries) > 0 else []

    @property
    def selection(self):
        return self.queries[0].selection if len(self.queries) > 0 else None

    def to_dict(self):
        return {"lca": self.lca, "case": self.case, "lca_ties": list(self.lca_ties),
                "leaves_before": list(self.leaves_before), "options_shown": list(self.options_shown),
                "sentinel_used": self.sentinel_used,
                "selection": self.selection.to_dict() if self.selection is not None else None,
                "queries": [q.to_dict() for q in self.queries], "pruned": list(self.pruned),
                "leaves_after": list(self.leaves_after)}

    @classmethod
    def from_dict(cls, d):
        queries = [QueryRecord.from_dict(q) for q in d.get("queries", [])]
        return cls(d.get("lca"), d.get("case", ""), list(d.get("lca_ties", [])), list(d.get("leaves_before", [])),
                   queries, d.get("sentinel_used"), list(d.get("pruned", [])), list(d.get("leaves_after", [])))

@dataclass
class DisambiguationTrace:
    mention_id: str
    mention: str
    candidates: list
    pipeline: str = KG
    template: Optional[str] = None
    gold: Optional[str] = None
    iterations: list = field(default_factory = list)
    total_selector_calls: int = 0
    assessment_triggered: bool = False
    result: Optional[str] = None
    counters: dict = field(default_factory = lambda: {name: 0 for name in COUNTERS})
    description_failures: list = field(default_factory = list)
    failed: bool = False
    error: Optional[str] = None
    tags: list = field(default_factory = list)

    def entity_level_queries(self):
        return self.counters["entity_queries"]

    def to_dict(self):
        return {"mention_id": self.mention_id, "mention": self.mention, "pipeline": self.pipeline,
                "template": self.template, "candidates": list(self.candidates), "gold": self.gold,
                "result": self.result, "failed": self.failed, "error": self.error,
                "total_selector_calls": self.total_selector_calls, "assessment_triggered": self.assessment_triggered,
                "counters": {name: self.counters.get(name, 0) for name in COUNTERS},
                "description_failures": list(self.description_failures), "tags": list(self.tags),
                "iterations": [it.to_dict() for it in self.iterations]}

def trace_to_json(trace):
    return dumps(trace.to_dict())

def trace_from_dict(d):
    counters = {name: d.get("counters", {}).get(name, 0) for name in COUNTERS}
    return DisambiguationTrace(d["mention_id"], d.get("mention", ""), list(d.get("candidates", [])),
                               d.get("pipeline", KG), d.get("template"), d.get("gold"),
                               [IterationRecord.from_dict(it) for it in d.get("iterations", [])],
                               d.get("total_selector_calls", 0), d.get("assessment_triggered", False), d.get("result"),
                               counters, list(d.get("description_failures", [])), d.get("failed", False),
                               d.get("error"), list(d.get("tags", [])))

def write_trace(trace, directory):
    os.makedirs(directory, exist_ok = True)
    path = os.path.join(directory, safe_filename(str(trace.mention_id)) + ".json")
    with open(path, "w", encoding = "utf-8") as f:
        f.write(trace_to_json(trace))
    return path

def load_trace(path):
    with open(path, encoding = "utf-8") as f:
        return trace_from_dict(json.load(f))

'''
One mention's worth of state shared by the query helpers: the ordinal of the next query, the trace the answers go
into, and where descriptions come from. Lives only as long as one disambiguate() call.
'''
class _Session:
    def __init__(self, task, selector, descriptions, trace, context_window, desc_limit, template_version,
                 multi_select) -> None:
        self.task = task
        self.selector = selector
        self.descriptions = descriptions
        self.trace = trace
        self.context_window = context_window
        self.desc_limit = desc_limit
        self.template_version = template_version
        self.multi_select = multi_select
        self.ordinal = 0

    def describe(self, entities):
        texts = {}
        if self.descriptions is None:
            return texts
        for entity in entities:
            if isinstance(self.descriptions, Mapping):
                text = self.descriptions.get(entity)
            else:
                text = self.descriptions.text(entity)
                if entity in getattr(self.descriptions, "failed", ()) and entity not in self.trace.description_failures:
                    self.trace.description_failures.append(entity)
            if text is None:
                self.trace.counters["description_misses"] += 1
            texts[entity] = text
        return texts

    def ask(self, kind, labels, reason = None, covers = None, descriptions = None):
        self.ordinal += 1
        query = build_query(kind, self.task.mention, self.task.document, labels, descriptions,
                            self.task.mention_id, self.ordinal, self.task.start, self.task.end, self.context_window,
                            self.desc_limit, self.template_version, covers, self.multi_select)
        try:
            selection = self.selector.select(query)
        except BackendError as e:
            self.trace.failed = True
            self.trace.error = "{}: {}".format(e.__class__.__name__, e)
            raise DisambiguationError("selector failed on mention {!r} at query {}: {}".format(
                self.task.mention_id, self.ordinal, e), self.trace, e)

        self.trace.total_selector_calls += 1
        self.trace.counters["backend_retries"] += selection.retries
        if selection.parse_status == FALLBACK:
            self.trace.counters["parse_fallbacks"] += 1
        if kind in (CLASS_CHOICE, MIXED_CHOICE):
            self.trace.counters["class_queries"] += 1
        elif kind == ENTITY_CHOICE:
            self.trace.counters["entity_queries"] += 1
        else:
            self.trace.counters["assessment_queries"] += 1

        chosen = [query.option(i).label for i in selection.indices()]
        record = QueryRecord(kind, reason, query.labels(), selection, chosen,
                             {o.label: list(o.covers) for o in query.options if len(o.covers) > 0})
        return query, selection, record

    def choose_entity(self, entities, reason = None):
        _, selection, record = self.ask(ENTITY_CHOICE, entities, reason, descriptions = self.describe(entities))
        return record.chosen[0], record

    def assess(self, entity):
        _, selection, record = self.ask(ASSESSMENT, [entity], descriptions = self.describe([entity]))
        self.trace.assessment_triggered = True
        return selection.verdict != REJECT, record


def disambiguate(task, store, selector, descriptions = None, context_window = 2000, desc_limit = 250,
                 template_version = "v1", multi_select = False):

    """
    Prunes the candidate DAG of one mention down to a single entity.

    Every iteration takes the lowest common ancestor of the remaining leaves and looks at its direct successors:

    - only classes: the selector picks one class, or None. None turns into an entity query over the leaves of the
      iteration, a class prunes its sibling classes.
    - only entities: the selector picks the entity directly.
    - classes and entities: the selector picks one class or Other. Other prunes the classes, a class prunes the
      other classes and the entities.

    A class step that leaves one entity is followed by an assessment of that entity, and a rejection turns into an
    entity query over the leaves of the iteration. A step that does not lower the number of leaves is followed by an
    entity query over the current leaves, so every run ends after at most len(candidates) - 1 iterations.

    Args:
        task (DisambiguationTask): the mention.
        store (TaxonomyStore): the KG taxonomy.
        selector (Selector): who answers the queries.
        descriptions (DescriptionStore or dict, optional): entity descriptions shown with entity options.

    Return:
        (chosen entity, DisambiguationTrace)

    Raises:
        DisambiguationError: the selector failed. The error carries the trace up to that point.

    Examples:

        >>> task = DisambiguationTask("m1", "Justin", "Justin won at the MTV awards.",
        ...                           ["JustinTrudeau", "JustinBieber", "JustinTimberlake"])
        >>> result, trace = disambiguate(task, store, MockSelector.scripted({"m1": ["Musician", "JustinBieber"]}))
        >>> result, len(trace.iterations)
        ('JustinBieber', 2)
    """

    trace = DisambiguationTrace(task.mention_id, task.mention, list(task.candidates), KG, template_id(template_version),
                                task.gold)
    if len(task.candidates) == 1:
        trace.result = task.candidates[0]
        return trace.result, trace

    session = _Session(task, selector, descriptions, trace, context_window, desc_limit, template_version, multi_select)
    dag = build_subgraph(store, task.candidates)

    while len(dag.leaves()) != 1:
        before = dag
        start = dag.leaves()
        lca, ties = dag.lca_with_ties(start)
        case = dag.successor_case(lca)
        record = IterationRecord(lca, case.kind, list(ties), list(start))
        class_step = False

        if case.kind == ALL_ENTITIES:
            chosen, query = session.choose_entity(case.entity_successors)
            record.queries.append(query)
            dag = dag.prune([e for e in case.entity_successors if e != chosen])
        else:
            kind = CLASS_CHOICE if case.kind == ALL_CLASSES else MIXED_CHOICE
            covers = {c: dag.leaves_under(c) for c in case.class_successors}
            _, selection, query = session.ask(kind, case.class_successors, covers = covers)
            record.queries.append(query)
            picked = [label for label in query.chosen if label not in (NONE, OTHER)]

            if len(picked) == 0 and case.kind == ALL_CLASSES:
                record.sentinel_used = NONE
                chosen, followup = session.choose_entity(start, NONE_FALLBACK)
                record.queries.append(followup)
                dag = before.prune([e for e in start if e != chosen])
            elif len(picked) == 0:
                record.sentinel_used = OTHER
                dag = dag.prune(case.class_successors)
                class_step = True
            else:
                dag = dag.prune([c for c in case.class_successors if c not in picked] + case.entity_successors)
                class_step = True

        if class_step and len(dag.leaves()) == 1:
            accepted, assessment = session.assess(dag.leaves()[0])
            record.queries.append(assessment)
            if not accepted:
                chosen, followup = session.choose_entity(start, ASSESSMENT_REJECTED)
                record.queries.append(followup)
                dag = before.prune([e for e in start if e != chosen])
        elif len(dag.leaves()) >= len(start):
            trace.counters["forced_progress"] += 1
            current = dag.leaves()
            chosen, followup = session.choose_entity(current, FORCED_PROGRESS)
            record.queries.append(followup)
            dag = dag.prune([e for e in current if e != chosen])

        record.pruned = sorted(set(before.graph.nodes) - set(dag.graph.nodes))
        record.leaves_after = dag.leaves()
        trace.iterations.append(record)
        assert len(dag.leaves()) < len(start), "iteration made no progress"

    trace.result = dag.leaves()[0]
    assert trace.result in task.candidates
    logger.debug("mention %r -> %r after %d iterations", task.mention_id, trace.result, len(trace.iterations))
    return trace.result, trace

def baseline_disambiguate(task, selector, include_descriptions = False, descriptions = None, context_window = 2000,
                          desc_limit = 250, template_version = "v1"):

    """
    One entity query over all candidates, no taxonomy involved. Without descriptions this is the plain baseline the
    KG-guided pipeline is compared against.
    """

    trace = DisambiguationTrace(task.mention_id, task.mention, list(task.candidates), BASELINE,
                                template_id(template_version), task.gold)
    if len(task.candidates) == 1:
        trace.result = task.candidates[0]
        return trace.result, trace

    session = _Session(task, selector, descriptions if include_descriptions else None, trace, context_window,
                       desc_limit, template_version, False)
    record = IterationRecord(None, BASELINE, [], list(task.candidates))
    chosen, query = session.choose_entity(list(task.candidates))
    record.queries.append(query)
    record.pruned = [c for c in task.candidates if c != chosen]
    record.leaves_after = [chosen]
    trace.iterations.append(record)
    trace.result = chosen
    return chosen, trace
