"""Typed directed-graph view of BPMN models plus basic graph statistics.

Elements are grouped into five categories (tasks, gateways, events, data,
flows); anything unrecognized maps to ``OTHER`` and stays out of the metrics.
Tasks/gateways/events/data become nodes, flow elements become edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import xml.etree.ElementTree as ET

from .xmlio import BpmnDocument, DocumentWithoutProcess, local_name, qname

ATTACHMENT_TAG = "boundaryAttachment"


class ElementCategory(Enum):
    TASK = "task"
    GATEWAY = "gateway"
    EVENT = "event"
    DATA = "data"
    FLOW = "flow"
    OTHER = "other"


_CATEGORY_BY_TAG: dict[str, ElementCategory] = {}
for _tag in ("task", "userTask", "serviceTask", "scriptTask", "manualTask", "sendTask",
             "receiveTask", "businessRuleTask", "callActivity", "subProcess"):
    _CATEGORY_BY_TAG[_tag] = ElementCategory.TASK
for _tag in ("exclusiveGateway", "parallelGateway", "inclusiveGateway",
             "eventBasedGateway", "complexGateway"):
    _CATEGORY_BY_TAG[_tag] = ElementCategory.GATEWAY
for _tag in ("startEvent", "endEvent", "intermediateCatchEvent",
             "intermediateThrowEvent", "boundaryEvent"):
    _CATEGORY_BY_TAG[_tag] = ElementCategory.EVENT
for _tag in ("dataObject", "dataObjectReference", "dataStoreReference",
             "dataInput", "dataOutput"):
    _CATEGORY_BY_TAG[_tag] = ElementCategory.DATA
for _tag in ("sequenceFlow", "messageFlow", "association",
             "dataInputAssociation", "dataOutputAssociation"):
    _CATEGORY_BY_TAG[_tag] = ElementCategory.FLOW


def categorize_element(tag: str) -> ElementCategory:
    """Total, pure mapping from a (namespace-stripped) element tag to its
    category. Unknown tags map to ``OTHER``."""
    return _CATEGORY_BY_TAG.get(tag, ElementCategory.OTHER)


class UnknownNode(KeyError):
    pass


@dataclass(frozen=True)
class BpmnNode:
    id: str
    tag: str
    label: str
    category: ElementCategory


@dataclass(frozen=True)
class BpmnEdge:
    id: str
    source: str
    target: str
    tag: str
    condition: str | None = None
    is_default: bool = False


class BpmnGraph:
    """Directed graph over BPMN nodes. Immutable after construction; all
    edge endpoints must resolve to nodes."""

    def __init__(self, nodes: Iterable[BpmnNode], edges: Iterable[BpmnEdge]):
        self._nodes: dict[str, BpmnNode] = {}
        for node in nodes:
            if node.id in self._nodes:
                raise ValueError(f"duplicate node id {node.id!r}")
            self._nodes[node.id] = node
        self._edges: tuple[BpmnEdge, ...] = tuple(edges)
        self._succ: dict[str, list[str]] = {nid: [] for nid in self._nodes}
        self._pred: dict[str, list[str]] = {nid: [] for nid in self._nodes}
        for edge in self._edges:
            if edge.source not in self._nodes or edge.target not in self._nodes:
                raise ValueError(f"edge {edge.id!r} has a dangling endpoint")
            self._succ[edge.source].append(edge.target)
            self._pred[edge.target].append(edge.source)

    @property
    def nodes(self) -> tuple[BpmnNode, ...]:
        return tuple(self._nodes.values())

    @property
    def edges(self) -> tuple[BpmnEdge, ...]:
        return self._edges

    @property
    def node_count(self) -> int:
        return len(self._nodes)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def node(self, node_id: str) -> BpmnNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def successors(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return tuple(self._succ[node_id])

    def predecessors(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return tuple(self._pred[node_id])

    def neighbors(self, node_id: str) -> set[str]:
        return set(self.successors(node_id)) | set(self.predecessors(node_id))

    def degree(self, node_id: str) -> int:
        """Total degree: in-degree + out-degree."""
        self.node(node_id)
        return len(self._succ[node_id]) + len(self._pred[node_id])


def effective_label(node: BpmnNode) -> str:
    """A node's display text: its label, or its tag when unlabeled. Keeps
    usually-unnamed elements (gateways, events) usable in text measures."""
    label = node.label.strip()
    return label if label else node.tag


def build_graph(doc: BpmnDocument) -> tuple[BpmnGraph, list[str]]:
    """Build the typed graph for a document. Sub-process contents are
    flattened in; boundary events gain an implicit attachment edge from their
    host activity. Flow elements with unresolvable endpoints are dropped and
    reported in the returned warning list.
    """
    if not doc.processes():
        raise DocumentWithoutProcess("no process definition found")

    nodes: list[BpmnNode] = []
    node_ids: set[str] = set()
    warnings: list[str] = []
    raw_edges: list[BpmnEdge] = []
    default_flow_ids: set[str] = set()
    anon_counter = iter(range(1, 1 << 30))
    bpmn_prefix = f"{{{doc.root.tag[1:].split('}', 1)[0]}}}"

    def visit(elem: ET.Element, activity_id: str | None) -> None:
        for child in elem:
            if not isinstance(child.tag, str) or not child.tag.startswith(bpmn_prefix):
                visit(child, activity_id)
                continue
            tag = local_name(child.tag)
            category = categorize_element(tag)
            child_id = child.get("id")
            child_activity = activity_id

            if category in (ElementCategory.TASK, ElementCategory.GATEWAY,
                            ElementCategory.EVENT, ElementCategory.DATA):
                if not child_id:
                    warnings.append(f"{tag} element without id skipped")
                elif child_id in node_ids:
                    warnings.append(f"duplicate element id {child_id!r} skipped")
                else:
                    node_ids.add(child_id)
                    nodes.append(BpmnNode(child_id, tag, child.get("name", ""), category))
                    if category is not ElementCategory.DATA:
                        child_activity = child_id
                default = child.get("default")
                if default:
                    default_flow_ids.add(default)
                if tag == "boundaryEvent":
                    host = child.get("attachedToRef")
                    if host and child_id:
                        raw_edges.append(BpmnEdge(f"{child_id}__attached", host,
                                                  child_id, ATTACHMENT_TAG))
            elif category is ElementCategory.FLOW:
                edge = _flow_edge(child, tag, activity_id, warnings, anon_counter)
                if edge is not None:
                    raw_edges.append(edge)

            visit(child, child_activity)

    visit(doc.root, None)

    edges = []
    for edge in raw_edges:
        if edge.source in node_ids and edge.target in node_ids:
            edges.append(edge)
        else:
            missing = edge.target if edge.source in node_ids else edge.source
            warnings.append(f"{edge.tag} {edge.id!r} dropped: endpoint {missing!r} not found")

    edges = [
        edge if edge.id not in default_flow_ids
        else BpmnEdge(edge.id, edge.source, edge.target, edge.tag, edge.condition, True)
        for edge in edges
    ]
    return BpmnGraph(nodes, edges), warnings


def _flow_edge(elem: ET.Element, tag: str, activity_id: str | None,
               warnings: list[str], anon_counter) -> BpmnEdge | None:
    elem_id = elem.get("id") or f"_anon_{tag}_{next(anon_counter)}"
    if tag in ("sequenceFlow", "messageFlow", "association"):
        source, target = elem.get("sourceRef"), elem.get("targetRef")
        condition = None
        if tag == "sequenceFlow":
            cond_elem = elem.find(qname("conditionExpression"))
            if cond_elem is not None and cond_elem.text and cond_elem.text.strip():
                condition = cond_elem.text.strip()
        if not source or not target:
            warnings.append(f"{tag} {elem_id!r} dropped: missing sourceRef/targetRef")
            return None
        return BpmnEdge(elem_id, source, target, tag, condition)
    if tag == "dataInputAssociation":
        ref = elem.find(qname("sourceRef"))
        source = ref.text.strip() if ref is not None and ref.text else None
        if not source or not activity_id:
            warnings.append(f"dataInputAssociation {elem_id!r} dropped: unresolved endpoints")
            return None
        return BpmnEdge(elem_id, source, activity_id, tag)
    if tag == "dataOutputAssociation":
        ref = elem.find(qname("targetRef"))
        target = ref.text.strip() if ref is not None and ref.text else None
        if not target or not activity_id:
            warnings.append(f"dataOutputAssociation {elem_id!r} dropped: unresolved endpoints")
            return None
        return BpmnEdge(elem_id, activity_id, target, tag)
    return None


@dataclass(frozen=True)
class GraphStats:
    node_count: int
    edge_count: int
    density: float
    average_degree: float
    degree_sequence: tuple[int, ...]


def graph_stats(graph: BpmnGraph) -> GraphStats:
    """Node/edge counts, directed density E/(N*(N-1)), average total degree
    2E/N, and the descending degree sequence."""
    n = graph.node_count
    e = graph.edge_count
    density = e / (n * (n - 1)) if n >= 2 else 0.0
    average_degree = 2.0 * e / n if n > 0 else 0.0
    degrees = sorted((graph.degree(node.id) for node in graph.nodes), reverse=True)
    return GraphStats(n, e, density, average_degree, tuple(degrees))


def context_label(graph: BpmnGraph, node_id: str) -> str:
    """A node's label joined with its alphabetically sorted neighbor labels.

    Unlabeled nodes contribute their tag name instead, so the string is stable
    regardless of edge insertion order and never empty.
    """
    node = graph.node(node_id)
    neighbor_labels = sorted(effective_label(graph.node(m)) for m in graph.neighbors(node_id))
    return f"{effective_label(node)} neighbors: " + ", ".join(neighbor_labels)
