import random
import networkx as nx
import pytest
from pykged.errors import TransientError
from pykged.selector import Selector, parse_response, ASSESSMENT
from pykged.subgraph import CandidateDag, CLASS, ENTITY
from pykged.taxonomy import TaxonomyStore, ROOT
from pykged.utils import data_path


@pytest.fixture
def minimal_store():
    return TaxonomyStore({("Person", "Thing"), ("Musician", "Person")}, {"JustinBieber": {"Musician"}})


@pytest.fixture
def justin_store():
    # the running example: three Justins, two of them musicians
    return TaxonomyStore(
        {("Person", "Thing"), ("Politician", "Person"), ("Musician", "Person"), ("Athlete", "Person"),
         ("Golfer", "Athlete")},
        {"JustinTrudeau": {"Politician"}, "JustinBieber": {"Musician"}, "JustinTimberlake": {"Musician"},
         "JustinRose": {"Golfer"}},
        source_name = "justin")


@pytest.fixture(scope = "session")
def yago_store():
    from pykged.taxonomy import load_snapshot
    return load_snapshot(data_path("sample_yago.tsv"))


@pytest.fixture(scope = "session")
def dbpedia_store():
    from pykged.taxonomy import load_snapshot
    return load_snapshot(data_path("sample_dbpedia.tsv"))


def random_dag_edges(rng, n, p = 0.35):
    # nodes n00 .. n{n-1} in topological order, n00 is the root, every other node has at least one parent
    names = ["n{:02d}".format(i) for i in range(n)]
    edges = []
    for j in range(1, n):
        parents = [names[i] for i in range(j) if rng.random() < p]
        if len(parents) == 0:
            parents = [names[rng.randrange(j)]]
        edges.extend((parent, names[j]) for parent in parents)
    return names, edges


def dag_from_edges(names, edges, root = "n00"):
    graph = nx.DiGraph()
    graph.add_nodes_from(names)
    graph.add_edges_from(edges)
    kinds = {node: ENTITY if graph.out_degree(node) == 0 and node != root else CLASS for node in names}
    return CandidateDag.from_edges(edges, kinds, root = root)


def random_store(rng, n_classes = 12, n_entities = 25, entity_classes = True):
    classes = [ROOT] + ["C{}".format(i) for i in range(1, n_classes)]
    subclass_edges = set()
    for j in range(1, n_classes):
        for parent in rng.sample(classes[:j], min(j, rng.choice([1, 1, 2, 3]))):
            subclass_edges.add((classes[j], parent))
    entities = ["E{}".format(i) for i in range(n_entities)]
    entity_types = {e: set(rng.sample(classes, rng.choice([1, 1, 2]))) for e in entities}
    entity_as_class = set()
    if entity_classes and rng.random() < 0.5:
        # a few entities that other entities are typed with
        for host in rng.sample(entities[:5], 2):
            entity_as_class.add(host)
            for e in rng.sample(entities[5:], 2):
                entity_types[e].add(host)
    return TaxonomyStore(subclass_edges, entity_types, entity_as_class, source_name = "random")


def random_candidates(rng, store, k_max = 10, unknown_rate = 0.1):
    entities = sorted(store.entity_types)
    k = rng.randint(1, k_max)
    candidates = rng.sample(entities, min(k, len(entities)))
    if rng.random() < unknown_rate:
        candidates[-1] = "Unknown{}".format(rng.randrange(1000))
    return list(dict.fromkeys(candidates))


class RandomSelector(Selector):
    '''
    Answers with whatever comes out of a seeded generator: valid numbers, numbers out of range, labels, free text
    and yes/no in random mixes. Everything still goes through the real parser.
    '''
    name = "random"

    def __init__(self, seed) -> None:
        super().__init__()
        self.rng = random.Random(seed)

    def _select(self, query):
        if query.kind == ASSESSMENT:
            raw = self.rng.choice(["yes", "no", "No.", "maybe", "I would reject it", ""])
        else:
            roll = self.rng.random()
            if roll < 0.6:
                raw = str(self.rng.randint(0, len(query.options) + 1))
            elif roll < 0.85:
                raw = self.rng.choice(query.options).label
            else:
                raw = self.rng.choice(["", "I am not sure", "all of them", "1, 2"])
        return parse_response(raw, query)


class CountingFetcher:
    # stands in for HttpFetcher: answers from a dict, counts calls, fails for the labels in `failing`
    source = "test"

    def __init__(self, texts, failing = ()) -> None:
        self.texts = dict(texts)
        self.failing = set(failing)
        self.calls = []

    def __call__(self, entity):
        self.calls.append(entity)
        if entity in self.failing:
            raise TransientError("HTTP 503 from test")
        return self.texts.get(entity)


class FakeTransport:
    # async stand-in for both aiohttp transports, replays (status, body) pairs and records every request
    def __init__(self, responses) -> None:
        self.responses = list(responses)
        self.calls = []

    async def __call__(self, url, payload, headers, timeout):
        self.calls.append({"url": url, "payload": payload, "headers": headers})
        response = self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]
        if isinstance(response, BaseException):
            raise response
        return response


def chat_body(content):
    return {"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}
