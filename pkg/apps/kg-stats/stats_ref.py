import sys
from collections import deque
from pykged.taxonomy import load_snapshot
from pykged.utils import data_path

# recomputes the snapshot statistics with plain loops over the TSV and compares them with pykged's numbers

path = sys.argv[1] if len(sys.argv) > 1 else data_path("sample_yago.tsv")

children = {}
typings = {}
entity_as_class = set()
subclass = set()
for line in open(path, encoding = "utf-8"):
    line = line.rstrip("\n")
    if len(line.strip()) == 0 or line.startswith("#"):
        continue
    fields = line.split("\t")
    if fields[0] == "SC" and fields[1] != fields[2]:
        subclass.add((fields[1], fields[2]))
        children.setdefault(fields[2], set()).add(fields[1])
    elif fields[0] == "TY":
        typings.setdefault(fields[1], set()).add(fields[2])
    elif fields[0] == "EC":
        entity_as_class.add(fields[1])

for entity in entity_as_class:
    for cls in typings.get(entity, ()):
        children.setdefault(cls, set()).add(entity)

distance = {"Thing": 0}
queue = deque(["Thing"])
while queue:
    node = queue.popleft()
    for child in children.get(node, ()):
        if child not in distance:
            distance[child] = distance[node] + 1
            queue.append(child)

classes = set(children) | {c for cs in children.values() for c in cs} | {c for cs in typings.values() for c in cs}
classes -= entity_as_class
depth_ref = sum(min(distance[c] for c in typings[e]) for e in typings) / len(typings)
parents = {}
for child, parent in subclass:
    parents[parent] = parents.get(parent, 0) + 1
branching_ref = sum(parents.values()) / len(parents)

stats = load_snapshot(path).compute_stats()
print(stats)
print("reference: {} instances, {} classes, depth {:.6f}, branching {:.6f}".format(
    len(typings), len(classes), depth_ref, branching_ref))

assert stats.instance_count == len(typings)
assert stats.class_count == len(classes)
assert abs(stats.avg_tree_depth - depth_ref) < 1e-9
assert abs(stats.avg_branching_factor - branching_ref) < 1e-9
