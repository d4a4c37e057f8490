import logging
from dataclasses import dataclass, field
import networkx as nx
from pykged.errors import GraphError, UnknownNodeError
from pykged.taxonomy import ROOT

logger = logging.getLogger(__name__)

CLASS = "class"
ENTITY = "entity"

ALL_CLASSES = "AllClasses"
ALL_ENTITIES = "AllEntities"
MIXED = "Mixed"

@dataclass
class SuccessorCase:
    kind: str
    class_successors: list = field(default_factory = list)
    entity_successors: list = field(default_factory = list)

'''
The per-mention DAG that the pruning loop walks. Nodes carry a `kind` attribute (class or entity), edges point from
parent to child and the root is always `Thing`. Entities are the candidates of the mention; `order` is the candidate
list as it was handed in and fixes every ordering decision downstream, so traces replay exactly.

A CandidateDag is never mutated after construction, prune() hands back a new one.
'''
class CandidateDag:
    def __init__(self, graph, order, root = ROOT) -> None:
        assert root in graph, "dag has no root node"
        self.graph = graph
        self.root = root
        self.order = list(order)
        self.position = {label: i for i, label in enumerate(self.order)}
        self._depths = None

    @classmethod
    def from_edges(cls, edges, kinds = None, order = None, root = ROOT):

        """
        Builds a dag straight from an edge list, without any of the build steps.

        Args:
            edges (list): (parent, child) pairs.
            kinds (dict, optional): node -> "class" | "entity". Nodes that are missing default to class.
            order (list, optional): candidate order. Defaults to the entities in label order.
        """

        kinds = kinds or {}
        graph = nx.DiGraph()
        graph.add_node(root)
        graph.add_edges_from(edges)
        for node in graph.nodes:
            graph.nodes[node]["kind"] = kinds.get(node, CLASS)
        if order is None:
            order = sorted(node for node in graph.nodes if graph.nodes[node]["kind"] == ENTITY)
        return cls(graph, order, root)

    def __contains__(self, node):
        return node in self.graph

    def __len__(self):
        return self.graph.number_of_nodes()

    def __eq__(self, other):
        if not isinstance(other, CandidateDag):
            return NotImplemented
        return self.root == other.root and set(self.graph.edges) == set(other.graph.edges) \
            and dict(self.graph.nodes(data = "kind")) == dict(other.graph.nodes(data = "kind"))

    def __str__(self):
        return "CandidateDag[{} nodes, {} edges, leaves {}]".format(len(self), self.graph.number_of_edges(), self.leaves())

    def kind(self, node):
        self._check_node(node)
        return self.graph.nodes[node]["kind"]

    def edges(self):
        return sorted(self.graph.edges)

    def copy(self):
        return CandidateDag(self.graph.copy(), self.order, self.root)

    def _check_node(self, node):
        if node not in self.graph:
            raise UnknownNodeError("node {!r} is not in the dag".format(node))

    def _candidate_key(self, node):
        return (self.position.get(node, len(self.position)), node)

    def leaves(self):
        return sorted([node for node in self.graph.nodes if self.graph.out_degree(node) == 0], key = self._candidate_key)

    def depth(self, node):
        self._check_node(node)
        if self._depths is None:
            # longest path from the root, nodes the root cannot reach have no depth
            depths = {self.root: 0}
            for n in nx.topological_sort(self.graph):
                reached = [depths[p] for p in self.graph.predecessors(n) if p in depths]
                if n != self.root and len(reached) > 0:
                    depths[n] = max(reached) + 1
            self._depths = depths
        if node not in self._depths:
            raise GraphError("node {!r} is not reachable from {!r}".format(node, self.root))
        return self._depths[node]

    def lca_with_ties(self, leaves):
        leaves = list(leaves)
        if len(leaves) == 0:
            raise GraphError("lca needs at least one leaf")
        common = None
        for leaf in leaves:
            self._check_node(leaf)
            up = nx.ancestors(self.graph, leaf) | {leaf}
            common = up if common is None else common & up
        if len(common) == 0:
            raise GraphError("leaves {} have no common ancestor".format(sorted(leaves)))
        deepest = max(self.depth(node) for node in common)
        tied = sorted(node for node in common if self.depth(node) == deepest)
        return tied[0], tied[1:]

    def lca(self, leaves):
        return self.lca_with_ties(leaves)[0]

    def successor_case(self, node):
        self._check_node(node)
        successors = list(self.graph.successors(node))
        if len(successors) == 0:
            raise GraphError("{!r} is a leaf and has no successors to classify".format(node))
        classes = sorted(s for s in successors if self.graph.nodes[s]["kind"] == CLASS)
        entities = sorted([s for s in successors if self.graph.nodes[s]["kind"] == ENTITY], key = self._candidate_key)
        if len(entities) == 0:
            return SuccessorCase(ALL_CLASSES, classes, [])
        elif len(classes) == 0:
            return SuccessorCase(ALL_ENTITIES, [], entities)
        else:
            return SuccessorCase(MIXED, classes, entities)

    def leaves_under(self, node):
        self._check_node(node)
        below = nx.descendants(self.graph, node) | {node}
        return [leaf for leaf in self.leaves() if leaf in below]

    def prune(self, nodes):

        """
        Removes `nodes`, then drops everything the root no longer reaches and every class that is no longer above a
        remaining entity.

        Args:
            nodes (iterable): nodes to remove. May be empty.

        Return:
            a new CandidateDag. The receiver is left untouched.

        Raises:
            GraphError: the root is in `nodes`, or nothing would be left to choose from.
        """

        nodes = set(nodes)
        for node in nodes:
            self._check_node(node)
        if self.root in nodes:
            raise GraphError("cannot prune the root {!r}".format(self.root))
        if len(nodes) == 0:
            return self.copy()

        graph = self.graph.copy()
        graph.remove_nodes_from(nodes)
        reachable = nx.descendants(graph, self.root) | {self.root}
        graph.remove_nodes_from([n for n in list(graph.nodes) if n not in reachable])

        entities = [n for n in graph.nodes if graph.nodes[n]["kind"] == ENTITY]
        if len(entities) == 0:
            raise GraphError("pruning {} would leave no candidate".format(sorted(nodes)))
        keep = set(entities)
        for entity in entities:
            keep |= nx.ancestors(graph, entity)
        graph.remove_nodes_from([n for n in list(graph.nodes) if n not in keep])
        return CandidateDag(graph, self.order, self.root)

    def validate(self):
        # raises on the first broken invariant, handy in tests and when loading debug exports
        if not nx.is_directed_acyclic_graph(self.graph):
            raise GraphError("dag has a cycle")
        sources = [n for n in self.graph.nodes if self.graph.in_degree(n) == 0]
        if sources != [self.root]:
            raise GraphError("expected {!r} as the only source, found {}".format(self.root, sorted(sources)))
        for leaf in self.leaves():
            if self.graph.nodes[leaf]["kind"] != ENTITY:
                raise GraphError("leaf {!r} is not an entity".format(leaf))
            if leaf not in self.position:
                raise GraphError("leaf {!r} is not a candidate".format(leaf))
        below_leaf = set(self.leaves())
        for leaf in self.leaves():
            below_leaf |= nx.ancestors(self.graph, leaf)
        dangling = sorted(set(self.graph.nodes) - below_leaf)
        if len(dangling) > 0:
            raise GraphError("node {!r} is on no root-to-leaf path".format(dangling[0]))
        return self


def _reduce(graph):
    graph = graph.copy()
    graph.remove_edges_from(list(nx.selfloop_edges(graph)))
    if not nx.is_directed_acyclic_graph(graph):
        raise GraphError("cannot reduce a cyclic graph: " + " -> ".join(u for u, _ in nx.find_cycle(graph)))
    reduced = nx.transitive_reduction(graph)
    reduced.add_nodes_from(graph.nodes(data = True))
    return reduced

def _normalize_entities(graph, position):
    # an entity with successors becomes a leaf, its successors move up to its predecessors
    while True:
        inner = [n for n in graph.nodes if graph.nodes[n]["kind"] == ENTITY and graph.out_degree(n) > 0]
        if len(inner) == 0:
            return graph
        node = min(inner, key = lambda n: (position.get(n, len(position)), n))
        successors = list(graph.successors(node))
        predecessors = list(graph.predecessors(node))
        logger.debug("entity %r has candidate successors %s, turning it into a leaf", node, successors)
        graph.remove_edges_from([(node, s) for s in successors])
        graph.add_edges_from([(p, s) for p in predecessors for s in successors])

def _collapse_chains(graph, root):
    while True:
        chain = sorted(n for n in graph.nodes if n != root and graph.nodes[n]["kind"] == CLASS
                       and graph.out_degree(n) == 1 and graph.nodes[next(iter(graph.successors(n)))]["kind"] == CLASS)
        if len(chain) == 0:
            return graph
        node = chain[0]
        successor = next(iter(graph.successors(node)))
        predecessors = list(graph.predecessors(node))
        graph.remove_node(node)
        graph.add_edges_from([(p, successor) for p in predecessors])
        graph = _reduce(graph)

def build_subgraph(store, candidates):

    """
    Builds the candidate DAG of one mention.

    The candidates are hung under their typing classes together with every class above them up to `Thing`. Classes
    that sit above no candidate are dropped, the graph is transitively reduced, candidates that sit above other
    candidates are turned into leaves, and finally chains of classes with a single class successor are collapsed.
    Candidates the KG does not know are attached directly under `Thing`.

    Args:
        store (TaxonomyStore): the KG taxonomy.
        candidates (list): distinct candidate labels, in the order the candidate generator ranked them.

    Return:
        CandidateDag

    Examples:

        >>> dag = build_subgraph(store, ["JustinBieber", "JustinTimberlake", "JustinTrudeau"])
        >>> dag.successor_case(dag.lca(dag.leaves())).kind
        'AllClasses'
    """

    candidates = list(candidates)
    if len(candidates) == 0:
        raise GraphError("empty candidate list")
    assert len(set(candidates)) == len(candidates), "candidates must be distinct"
    if ROOT in candidates:
        raise GraphError("{!r} cannot be a candidate".format(ROOT))
    position = {c: i for i, c in enumerate(candidates)}

    graph = nx.DiGraph()
    graph.add_node(ROOT)
    for candidate in candidates:
        if not store.contains(candidate):
            graph.add_edge(ROOT, candidate)
            continue
        for parent in store.parents_of(candidate):
            graph.add_edge(parent, candidate)
            closure = store.ancestors(parent) | {parent}
            graph.add_edges_from(store.graph.subgraph(closure).edges)
    for node in graph.nodes:
        graph.nodes[node]["kind"] = ENTITY if node in position else CLASS

    above = set(candidates)
    for candidate in candidates:
        above |= nx.ancestors(graph, candidate)
    graph.remove_nodes_from([n for n in list(graph.nodes) if n not in above])

    graph = _reduce(graph)
    graph = _reduce(_normalize_entities(graph, position))
    graph = _collapse_chains(graph, ROOT)

    dag = CandidateDag(graph, candidates, ROOT)
    logger.debug("built %s", dag)
    return dag

def transitive_reduce(dag):
    return CandidateDag(_reduce(dag.graph), dag.order, dag.root)

def depth(dag, node):
    return dag.depth(node)

def lca(dag, leaves):
    return dag.lca(leaves)

def lca_with_ties(dag, leaves):
    return dag.lca_with_ties(leaves)

def successor_case(dag, lca_node):
    return dag.successor_case(lca_node)

def prune(dag, nodes):
    return dag.prune(nodes)

def leaves(dag):
    return dag.leaves()

def export_edges(dag):
    lines = ["{}\t{}\t{}".format(parent, child, dag.graph.nodes[child]["kind"]) for parent, child in dag.edges()]
    return "\n".join(lines) + "\n" if len(lines) > 0 else ""

def load_edges(text, root = ROOT):
    edges = []
    kinds = {}
    order = []
    for line_number, line in enumerate(text.splitlines(), 1):
        if len(line.strip()) == 0 or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3 or fields[2] not in (CLASS, ENTITY):
            raise GraphError("line {}: malformed edge {!r}".format(line_number, line))
        parent, child, kind = fields
        edges.append((parent, child))
        kinds[child] = kind
        if kind == ENTITY and child not in order:
            order.append(child)
    return CandidateDag.from_edges(edges, kinds, order, root)
