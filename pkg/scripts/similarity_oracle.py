#!/usr/bin/env python3
"""Recompute the expected similarity breakdowns for the fixture pairs from
first principles and freeze them into tests/fixtures/expected_breakdowns.json.

This is deliberately straight-line and independent of bpmnkit.similarity and
bpmnkit.model: it re-extracts elements with xml.etree directly, computes the
Pearson correlation from the explicit sum formula, gets Jensen-Shannon from
scipy.spatial.distance, and solves the assignment with
scipy.optimize.linear_sum_assignment. Only the hashing embedder is shared,
since both routes must score the same vectors.

Run from the repository root:  python3 scripts/similarity_oracle.py
"""

import json
import math
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import jensenshannon

from bpmnkit.embeddings import HashingEmbedder

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "tests" / "fixtures"
OUTPUT = FIXTURES / "expected_breakdowns.json"

BPMN = "http://www.omg.org/spec/BPMN/20100524/MODEL"

TASK_TAGS = {"task", "userTask", "serviceTask", "scriptTask", "manualTask", "sendTask",
             "receiveTask", "businessRuleTask", "callActivity", "subProcess"}
GATEWAY_TAGS = {"exclusiveGateway", "parallelGateway", "inclusiveGateway",
                "eventBasedGateway", "complexGateway"}
EVENT_TAGS = {"startEvent", "endEvent", "intermediateCatchEvent",
              "intermediateThrowEvent", "boundaryEvent"}
DATA_TAGS = {"dataObject", "dataObjectReference", "dataStoreReference",
             "dataInput", "dataOutput"}
NODE_TAGS = TASK_TAGS | GATEWAY_TAGS | EVENT_TAGS | DATA_TAGS

PAIRS = [
    ("chain3", "chain4"),
    ("chain3", "diamond"),
    ("diamond", "parallel"),
    ("loan-approval", "order-v1"),
    ("order-v1", "order-v2"),
    ("boundary", "chain4"),
    ("inclusive", "diamond"),
    ("unicode", "chain3"),
    ("parallel", "boundary"),
    ("loan-approval", "order-v2"),
]


def category_of(tag):
    if tag in TASK_TAGS:
        return "task"
    if tag in GATEWAY_TAGS:
        return "gateway"
    if tag in EVENT_TAGS:
        return "event"
    if tag in DATA_TAGS:
        return "data"
    return "other"


def load_elements(path):
    """Nodes [(id, tag, label, category)] and edges [(src, tgt, tag)] in
    document order, mirroring the documented graph-building behavior."""
    root = ET.fromstring(path.read_bytes())
    nodes = []
    node_ids = set()
    edges = []

    def visit(elem, activity_id):
        for child in elem:
            if not isinstance(child.tag, str) or not child.tag.startswith("{" + BPMN + "}"):
                visit(child, activity_id)
                continue
            tag = child.tag.rsplit("}", 1)[-1]
            cid = child.get("id")
            next_activity = activity_id
            if tag in NODE_TAGS:
                if cid and cid not in node_ids:
                    node_ids.add(cid)
                    nodes.append((cid, tag, child.get("name", ""), category_of(tag)))
                    if tag not in DATA_TAGS:
                        next_activity = cid
                if tag == "boundaryEvent" and child.get("attachedToRef") and cid:
                    edges.append((child.get("attachedToRef"), cid, "boundaryAttachment"))
            elif tag in ("sequenceFlow", "messageFlow", "association"):
                if child.get("sourceRef") and child.get("targetRef"):
                    edges.append((child.get("sourceRef"), child.get("targetRef"), tag))
            elif tag == "dataInputAssociation":
                ref = child.find("{%s}sourceRef" % BPMN)
                if ref is not None and ref.text and activity_id:
                    edges.append((ref.text.strip(), activity_id, tag))
            elif tag == "dataOutputAssociation":
                ref = child.find("{%s}targetRef" % BPMN)
                if ref is not None and ref.text and activity_id:
                    edges.append((activity_id, ref.text.strip(), tag))
            visit(child, next_activity)

    visit(root, None)
    edges = [e for e in edges if e[0] in node_ids and e[1] in node_ids]
    return nodes, edges


def ratio(m1, m2):
    if m1 == m2:
        return 1.0
    if m1 == 0 or m2 == 0:
        return 0.0
    return min(m1, m2) / max(m1, m2)


def pearson(xs, ys):
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    cov = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    var_x = sum((x - mean_x) ** 2 for x in xs)
    var_y = sum((y - mean_y) ** 2 for y in ys)
    return cov / math.sqrt(var_x * var_y)


def degree_score(deg1, deg2):
    a = sorted(deg1, reverse=True)
    b = sorted(deg2, reverse=True)
    size = max(len(a), len(b))
    if size == 0:
        return 1.0
    a += [0] * (size - len(a))
    b += [0] * (size - len(b))
    const_a = len(set(a)) == 1
    const_b = len(set(b)) == 1
    if const_a and const_b:
        return 1.0 if a[0] == b[0] else ratio(float(a[0]), float(b[0]))
    if const_a or const_b:
        return 0.0
    return min(1.0, abs(pearson(a, b)))


def structural(nodes1, edges1, nodes2, edges2):
    stats = []
    for nodes, edges in ((nodes1, edges1), (nodes2, edges2)):
        n = len(nodes)
        e = len(edges)
        density = e / (n * (n - 1)) if n >= 2 else 0.0
        avg_degree = 2.0 * e / n if n > 0 else 0.0
        degrees = {nid: 0 for nid, *_ in nodes}
        for src, tgt, _ in edges:
            degrees[src] += 1
            degrees[tgt] += 1
        stats.append((n, e, density, avg_degree, list(degrees.values())))
    (n1, e1, den1, avg1, deg1), (n2, e2, den2, avg2, deg2) = stats
    parts = [ratio(n1, n2), ratio(e1, e2), ratio(den1, den2), ratio(avg1, avg2),
             degree_score(deg1, deg2)]
    return sum(parts) / 5.0


def type_distribution(nodes1, edges1, nodes2, edges2):
    order = ("task", "gateway", "event", "data", "flow")
    counts = []
    for nodes, edges in ((nodes1, edges1), (nodes2, edges2)):
        c = {cat: 0 for cat in order}
        for _, _, _, cat in nodes:
            if cat != "other":
                c[cat] += 1
        c["flow"] = len(edges)
        counts.append(c)
    c1, c2 = counts
    t1 = sum(c1.values())
    t2 = sum(c2.values())
    if t1 == 0 and t2 == 0:
        return 1.0
    if t1 == 0 or t2 == 0:
        return 0.0
    support = [cat for cat in order if c1[cat] + c2[cat] > 0]
    p = [c1[cat] / t1 for cat in support]
    q = [c2[cat] / t2 for cat in support]
    js = float(jensenshannon(p, q, base=2)) ** 2
    return max(0.0, 1.0 - js)


def display(nid, nodes_by_id):
    _, tag, label, _ = nodes_by_id[nid]
    label = label.strip()
    return label if label else tag


def context_strings(nodes, edges):
    nodes_by_id = {nid: (nid, tag, label, cat) for nid, tag, label, cat in nodes}
    neighbors = {nid: set() for nid in nodes_by_id}
    for src, tgt, _ in edges:
        neighbors[src].add(tgt)
        neighbors[tgt].add(src)
    out = []
    for nid, tag, label, cat in nodes:
        if cat in ("other", "flow"):
            continue
        near = sorted(display(m, nodes_by_id) for m in neighbors[nid])
        out.append((display(nid, nodes_by_id) + " neighbors: " + ", ".join(near), tag))
    return out


def assignment_score(texts1, texts2, embedder):
    if not texts1 and not texts2:
        return 1.0
    if not texts1 or not texts2:
        return 0.0
    v1 = embedder.embed_batch(texts1)
    v2 = embedder.embed_batch(texts2)
    scores = np.clip(v1 @ v2.T, 0.0, 1.0)
    rows, cols = linear_sum_assignment(scores, maximize=True)
    return float(scores[rows, cols].sum()) / max(len(texts1), len(texts2))


def breakdown(path1, path2, embedder):
    nodes1, edges1 = load_elements(path1)
    nodes2, edges2 = load_elements(path2)

    ctx1 = context_strings(nodes1, edges1)
    ctx2 = context_strings(nodes2, edges2)
    names1 = [text for text, _ in ctx1]
    names2 = [text for text, _ in ctx2]
    types1 = [tag for _, tag, _, cat in nodes1 if cat != "other"] + [t for _, _, t in edges1]
    types2 = [tag for _, tag, _, cat in nodes2 if cat != "other"] + [t for _, _, t in edges2]
    name_types1 = [f"{text} [{tag}]" for text, tag in ctx1]
    name_types2 = [f"{text} [{tag}]" for text, tag in ctx2]

    dims = {
        "structural": structural(nodes1, edges1, nodes2, edges2),
        "type_distribution": type_distribution(nodes1, edges1, nodes2, edges2),
        "semantic_name": assignment_score(names1, names2, embedder),
        "semantic_type": assignment_score(types1, types2, embedder),
        "semantic_name_type": assignment_score(name_types1, name_types2, embedder),
    }
    dims["overall"] = sum(dims.values()) / 5.0
    return dims


def main():
    embedder = HashingEmbedder()
    pairs = {}
    for name1, name2 in PAIRS:
        key = f"{name1}__{name2}"
        pairs[key] = breakdown(FIXTURES / f"{name1}.bpmn", FIXTURES / f"{name2}.bpmn",
                               embedder)
        print(f"{key:32s} overall={pairs[key]['overall']:.6f}")

    dims = list(next(iter(pairs.values())))
    averages = {dim: sum(p[dim] for p in pairs.values()) / len(pairs) for dim in dims}
    payload = {
        "options": {"context_augmentation": True, "embedder": "hashing-fallback:384"},
        "pairs": pairs,
        "averages": averages,
    }
    OUTPUT.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {OUTPUT.relative_to(REPO)}")


if __name__ == "__main__":
    main()
