import logging
import os
from collections import Counter
from dataclasses import dataclass, asdict
import networkx as nx
from pykged.errors import SnapshotError, UnknownNodeError

logger = logging.getLogger(__name__)

ROOT = "Thing"

@dataclass(frozen = True)
class SnapshotStats:
    instance_count: int
    class_count: int
    avg_tree_depth: float
    avg_branching_factor: float

    def to_dict(self):
        return asdict(self)

    def __str__(self):
        return "# Instances: {}\n# Classes: {}\nAvg. tree depth: {:.2f}\nAvg. branching factor: {:.2f}".format(
            self.instance_count, self.class_count, self.avg_tree_depth, self.avg_branching_factor)

'''
An immutable class hierarchy plus entity typings. The hierarchy is kept as a networkx DiGraph with edges pointing
from parent to child. Its nodes are the classes and the entities that are flagged to also act as classes (EC records);
a typing of an EC entity becomes an edge class -> entity in the hierarchy so that its ancestry is walkable.

Plain entities never enter the hierarchy graph, they only live in entity_types.
'''
class TaxonomyStore:
    def __init__(self, subclass_edges, entity_types, entity_as_class = (), source_name = None, origins = None) -> None:

        self.subclass_edges = frozenset(subclass_edges)
        self.entity_types = {entity: frozenset(classes) for entity, classes in entity_types.items()}
        self.entity_as_class = frozenset(entity_as_class)
        self.source_name = source_name

        # (child, parent) -> (line number, raw record), only known when loaded from a file
        origins = origins or {}

        self.graph = nx.DiGraph()
        for child, parent in sorted(self.subclass_edges):
            self.graph.add_edge(parent, child)
        for entity in sorted(self.entity_types):
            for cls in sorted(self.entity_types[entity]):
                if entity in self.entity_as_class:
                    self.graph.add_edge(cls, entity)
                else:
                    self.graph.add_node(cls)
        for entity in sorted(self.entity_as_class):
            self.graph.add_node(entity)

        if ROOT not in self.graph:
            raise SnapshotError("missing root class {!r}".format(ROOT))
        if self.graph.in_degree(ROOT) > 0:
            parent = sorted(self.graph.predecessors(ROOT))[0]
            raise SnapshotError("root class {!r} must not have a parent, found {!r}".format(ROOT, parent), *origins.get((ROOT, parent), (None, None)))

        try:
            cycle = nx.find_cycle(self.graph)
        except nx.NetworkXNoCycle:
            cycle = None
        if cycle is not None:
            path = " -> ".join([cycle[0][0]] + [v for _, v in cycle])
            parent, child = cycle[0]
            raise SnapshotError("cycle detected in subclass edges: " + path, *origins.get((child, parent), (None, None)))

        reachable = nx.descendants(self.graph, ROOT) | {ROOT}
        unreachable = sorted(set(self.graph.nodes) - reachable)
        if len(unreachable) > 0:
            raise SnapshotError("class {!r} is unreachable from {!r}".format(unreachable[0], ROOT))

        self.classes = frozenset(node for node in self.graph.nodes if node not in self.entity_as_class)
        self._ancestors = {}

    def __eq__(self, other):
        # source_name is provenance, not content
        if not isinstance(other, TaxonomyStore):
            return NotImplemented
        return self.subclass_edges == other.subclass_edges and self.entity_types == other.entity_types \
            and self.entity_as_class == other.entity_as_class

    def __hash__(self):
        return hash((self.subclass_edges, self.entity_as_class, frozenset(self.entity_types.items())))

    def __str__(self):
        return "TaxonomyStore[{}: {} classes, {} entities]".format(self.source_name, len(self.classes), len(self.entity_types))

    def contains(self, label):
        return label in self.entity_types or label in self.graph

    def is_entity(self, label):
        return label in self.entity_types or label in self.entity_as_class

    def classes_of(self, entity):
        return self.entity_types.get(entity, frozenset())

    def ancestors(self, cls):
        if cls not in self.graph:
            raise UnknownNodeError("unknown class {!r}".format(cls))
        if cls not in self._ancestors:
            self._ancestors[cls] = frozenset(nx.ancestors(self.graph, cls))
        return self._ancestors[cls]

    def parents_of(self, label):
        if label in self.graph:
            return frozenset(self.graph.predecessors(label))
        return self.classes_of(label)

    def entity_ancestors(self, entity):
        result = set()
        for parent in self.parents_of(entity):
            result.add(parent)
            result |= self.ancestors(parent)
        return frozenset(result)

    def compute_stats(self):

        """
        Computes the four snapshot metrics of the KG comparison table.

        The depth of an entity is the shortest number of subclass edges from `Thing` to any class the entity is
        typed with, averaged over all typed entities. The branching factor is the mean number of subclass children
        over the classes that have at least one subclass child.

        Return:
            SnapshotStats

        Examples:

            >>> store = load_snapshot("minimal.tsv")   # SC Person Thing, SC Musician Person, TY JustinBieber Musician
            >>> compute_stats(store)
            SnapshotStats(instance_count=1, class_count=3, avg_tree_depth=2.0, avg_branching_factor=1.0)
        """

        distance = nx.single_source_shortest_path_length(self.graph, ROOT)
        depths = [min(distance[cls] for cls in classes) for classes in self.entity_types.values()]
        avg_depth = sum(depths) / len(depths) if len(depths) > 0 else 0.0

        children = Counter(parent for _, parent in self.subclass_edges)
        avg_branching = sum(children.values()) / len(children) if len(children) > 0 else 0.0

        return SnapshotStats(len(self.entity_types), len(self.classes), avg_depth, avg_branching)

    def records(self):
        for entity in sorted(self.entity_as_class):
            yield ("EC", entity)
        for child, parent in sorted(self.subclass_edges):
            yield ("SC", child, parent)
        for entity in sorted(self.entity_types):
            for cls in sorted(self.entity_types[entity]):
                yield ("TY", entity, cls)


def _check_label(label, line_number, line):
    if len(label) == 0 or label != label.strip("\r"):
        raise SnapshotError("empty or malformed label", line_number, line)
    return label

def load_snapshot(path, source_name = None):

    """
    Loads a taxonomy snapshot. One record per line, TAB separated, `#` starts a comment line:

        SC  child_class  parent_class
        TY  entity       class
        EC  entity

    Args:
        path (str): snapshot file.
        source_name (str, optional): which KG the snapshot was taken from. Defaults to the file name.

    Return:
        TaxonomyStore

    Raises:
        SnapshotError: malformed record (with its line number), cycle, class unreachable from `Thing`, missing `Thing`,
            or an entity used as a class without an EC declaration.
    """

    subclass_edges = set()
    entity_types = {}
    entity_as_class = set()
    origins = {}
    class_use = {}
    typing_use = {}

    with open(path, encoding = "utf-8") as f:
        for line_number, raw in enumerate(f, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if len(line.strip()) == 0 or line.startswith("#"):
                continue
            fields = line.split("\t")
            kind = fields[0]
            if kind == "SC" and len(fields) == 3:
                child, parent = _check_label(fields[1], line_number, line), _check_label(fields[2], line_number, line)
                if child == parent:
                    logger.warning("%s:%d: dropping self-pointing subclass record for %r", path, line_number, child)
                    continue
                subclass_edges.add((child, parent))
                origins.setdefault((child, parent), (line_number, line))
                class_use.setdefault(child, (line_number, line))
                class_use.setdefault(parent, (line_number, line))
            elif kind == "TY" and len(fields) == 3:
                entity, cls = _check_label(fields[1], line_number, line), _check_label(fields[2], line_number, line)
                if entity == cls:
                    raise SnapshotError("entity typed with itself", line_number, line)
                entity_types.setdefault(entity, set()).add(cls)
                origins.setdefault((entity, cls), (line_number, line))
                class_use.setdefault(cls, (line_number, line))
                typing_use.setdefault(entity, (line_number, line))
            elif kind == "EC" and len(fields) == 2:
                entity_as_class.add(_check_label(fields[1], line_number, line))
            else:
                raise SnapshotError("malformed record", line_number, line)

    for entity in sorted(typing_use):
        if entity in class_use and entity not in entity_as_class:
            raise SnapshotError("entity {!r} is used as a class without an EC declaration".format(entity), *class_use[entity])
    for entity in sorted(entity_as_class):
        if entity == ROOT:
            raise SnapshotError("the root class cannot be declared an entity")

    if source_name is None:
        source_name = os.path.splitext(os.path.basename(path))[0]
    store = TaxonomyStore(subclass_edges, entity_types, entity_as_class, source_name, origins)
    logger.info("loaded %s", store)
    return store

def serialize_snapshot(store, path):
    with open(path, "w", encoding = "utf-8") as f:
        f.write("# source: {}\n".format(store.source_name))
        for record in store.records():
            f.write("\t".join(record) + "\n")
    return path

def classes_of(store, entity):
    return store.classes_of(entity)

def ancestors(store, cls):
    return store.ancestors(cls)

def compute_stats(store):
    return store.compute_stats()
