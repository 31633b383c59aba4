//! Research graph: loading, validation, support queries and depth weights.
//!
//! A graph is a DAG of claims at three levels. Edges point from evidence to
//! the conclusion it supports, so the supporters of a node are the sources of
//! its incoming edges.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Graph file schema version written by [`ResearchGraph::to_json`].
pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLevel {
    AtomicFact,
    KeyInsight,
    GlobalInsight,
}

impl NodeLevel {
    pub const ALL: [NodeLevel; 3] = [NodeLevel::AtomicFact, NodeLevel::KeyInsight, NodeLevel::GlobalInsight];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeLevel::AtomicFact => "atomic_fact",
            NodeLevel::KeyInsight => "key_insight",
            NodeLevel::GlobalInsight => "global_insight",
        }
    }
}

impl fmt::Display for NodeLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: NodeId,
    pub level: NodeLevel,
    pub content: String,
    #[serde(default)]
    pub source_urls: Vec<String>,
}

impl GraphNode {
    pub fn new(id: impl Into<NodeId>, level: NodeLevel, content: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            level,
            content: content.into(),
            source_urls: Vec::new(),
        }
    }

    pub fn with_source(mut self, url: impl Into<String>) -> Self {
        self.source_urls.push(url.into());
        self
    }
}

/// Kind of support link. Both kinds count as support for weights and chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    #[default]
    Supports,
    Inference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub source: NodeId,
    pub target: NodeId,
    #[serde(default)]
    pub relation: Relation,
}

impl GraphEdge {
    pub fn new(source: impl Into<NodeId>, target: impl Into<NodeId>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            relation: Relation::Supports,
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("malformed graph file: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("node #{position} has an empty id")]
    EmptyNodeId { position: usize },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(NodeId),
    #[error("link #{position} references unknown node `{id}`")]
    DanglingEndpoint { position: usize, id: NodeId },
    #[error("link #{position} is a self-loop on `{id}`")]
    SelfLoop { position: usize, id: NodeId },
    #[error("duplicate link `{from}` -> `{to}`")]
    DuplicateEdge { from: NodeId, to: NodeId },
    #[error("cycle detected: {}", format_cycle(.0))]
    Cycle(Vec<NodeId>),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
}

fn format_cycle(ids: &[NodeId]) -> String {
    let mut parts: Vec<&str> = ids.iter().map(NodeId::as_str).collect();
    if let Some(first) = ids.first() {
        parts.push(first.as_str());
    }
    parts.join(" -> ")
}

/// Non-fatal findings attached to a loaded graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphWarning {
    FactWithoutSource { id: NodeId },
    UnsupportedInsight { id: NodeId },
    SupportedFact { id: NodeId },
    UnknownSchemaVersion { version: u32 },
}

impl fmt::Display for GraphWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphWarning::FactWithoutSource { id } => {
                write!(f, "atomic fact `{id}` has no source_urls")
            }
            GraphWarning::UnsupportedInsight { id } => {
                write!(f, "insight `{id}` has no supporters; weighted as a leaf")
            }
            GraphWarning::SupportedFact { id } => {
                write!(f, "atomic fact `{id}` has supporters; weight follows the recursion")
            }
            GraphWarning::UnknownSchemaVersion { version } => {
                write!(
                    f,
                    "unknown schema_version {version}; reading as version {GRAPH_SCHEMA_VERSION}"
                )
            }
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct GraphFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema_version: Option<u32>,
    nodes: Vec<GraphNode>,
    #[serde(default)]
    links: Vec<GraphEdge>,
}

/// A validated research graph. Immutable once built.
#[derive(Debug, Clone)]
pub struct ResearchGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    index: HashMap<NodeId, usize>,
    // Per node index, sorted indices of supporters (incoming) and dependents (outgoing).
    supporters: Vec<Vec<usize>>,
    dependents: Vec<Vec<usize>>,
    topo: Vec<usize>,
    warnings: Vec<GraphWarning>,
}

/// Parse and validate a graph file.
pub fn load_graph(bytes: &[u8]) -> Result<ResearchGraph, GraphError> {
    let file: GraphFile = serde_json::from_slice(bytes)?;
    let mut graph = ResearchGraph::from_parts(file.nodes, file.links)?;
    if let Some(v) = file.schema_version {
        if v != GRAPH_SCHEMA_VERSION {
            graph
                .warnings
                .insert(0, GraphWarning::UnknownSchemaVersion { version: v });
        }
    }
    Ok(graph)
}

impl ResearchGraph {
    pub fn from_parts(nodes: Vec<GraphNode>, edges: Vec<GraphEdge>) -> Result<Self, GraphError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (position, node) in nodes.iter().enumerate() {
            if node.id.as_str().trim().is_empty() {
                return Err(GraphError::EmptyNodeId { position });
            }
            if index.insert(node.id.clone(), position).is_some() {
                return Err(GraphError::DuplicateNode(node.id.clone()));
            }
        }

        let mut supporters = vec![Vec::new(); nodes.len()];
        let mut dependents = vec![Vec::new(); nodes.len()];
        let mut seen = BTreeSet::new();
        for (position, edge) in edges.iter().enumerate() {
            let lookup = |id: &NodeId| {
                index.get(id).copied().ok_or_else(|| GraphError::DanglingEndpoint {
                    position,
                    id: id.clone(),
                })
            };
            let s = lookup(&edge.source)?;
            let t = lookup(&edge.target)?;
            if s == t {
                return Err(GraphError::SelfLoop {
                    position,
                    id: edge.source.clone(),
                });
            }
            if !seen.insert((s, t)) {
                return Err(GraphError::DuplicateEdge {
                    from: edge.source.clone(),
                    to: edge.target.clone(),
                });
            }
            supporters[t].push(s);
            dependents[s].push(t);
        }
        let by_id = |v: &mut Vec<usize>| v.sort_by(|a, b| nodes[*a].id.cmp(&nodes[*b].id));
        supporters.iter_mut().for_each(by_id);
        dependents.iter_mut().for_each(by_id);

        let topo = topological_order(&nodes, &supporters, &dependents)?;

        let mut warnings = Vec::new();
        for (i, node) in nodes.iter().enumerate() {
            match node.level {
                NodeLevel::AtomicFact => {
                    if node.source_urls.iter().all(|u| u.trim().is_empty()) {
                        warnings.push(GraphWarning::FactWithoutSource { id: node.id.clone() });
                    }
                    if !supporters[i].is_empty() {
                        warnings.push(GraphWarning::SupportedFact { id: node.id.clone() });
                    }
                }
                NodeLevel::KeyInsight | NodeLevel::GlobalInsight => {
                    if supporters[i].is_empty() {
                        warnings.push(GraphWarning::UnsupportedInsight { id: node.id.clone() });
                    }
                }
            }
        }

        Ok(Self {
            nodes,
            edges,
            index,
            supporters,
            dependents,
            topo,
            warnings,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in file order.
    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn warnings(&self) -> &[GraphWarning] {
        &self.warnings
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Supporter indices of the node at `idx`, sorted by id.
    pub fn supporter_indices(&self, idx: usize) -> &[usize] {
        &self.supporters[idx]
    }

    /// Dependent (conclusion) indices of the node at `idx`, sorted by id.
    pub fn dependent_indices(&self, idx: usize) -> &[usize] {
        &self.dependents[idx]
    }

    /// Node indices in a topological order (supporters before conclusions).
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn nodes_at(&self, level: NodeLevel) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(move |n| n.level == level)
    }

    pub fn level_count(&self, level: NodeLevel) -> usize {
        self.nodes_at(level).count()
    }

    pub fn supporters(&self, id: &str) -> Result<BTreeSet<NodeId>, GraphError> {
        let idx = self
            .index_of(id)
            .ok_or_else(|| GraphError::UnknownNode(NodeId::new(id)))?;
        Ok(self.supporters[idx].iter().map(|&s| self.nodes[s].id.clone()).collect())
    }

    pub fn compute_weights(&self) -> WeightTable {
        compute_weights(self)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            schema_version: Some(GRAPH_SCHEMA_VERSION),
            nodes: self.nodes.clone(),
            links: self.edges.clone(),
        };
        serde_json::to_string_pretty(&file).expect("graph serializes")
    }
}

/// All `u` with an edge `u -> id`.
pub fn supporters(graph: &ResearchGraph, id: &str) -> Result<BTreeSet<NodeId>, GraphError> {
    graph.supporters(id)
}

fn topological_order(
    nodes: &[GraphNode],
    supporters: &[Vec<usize>],
    dependents: &[Vec<usize>],
) -> Result<Vec<usize>, GraphError> {
    let n = nodes.len();
    let mut indegree: Vec<usize> = supporters.iter().map(Vec::len).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = queue.pop_front() {
        order.push(i);
        for &d in &dependents[i] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                queue.push_back(d);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // Every leftover node keeps a leftover supporter, so walking supporters
    // from any leftover node must revisit a node.
    let start = (0..n).find(|&i| indegree[i] > 0).expect("leftover node");
    let mut pos_in_walk = HashMap::new();
    let mut walk = Vec::new();
    let mut cur = start;
    loop {
        if let Some(&p) = pos_in_walk.get(&cur) {
            let mut cycle: Vec<NodeId> = walk[p..].iter().map(|&i: &usize| nodes[i].id.clone()).collect();
            // The walk follows supporters, i.e. runs against the edges.
            cycle.reverse();
            return Err(GraphError::Cycle(cycle));
        }
        pos_in_walk.insert(cur, walk.len());
        walk.push(cur);
        cur = *supporters[cur]
            .iter()
            .find(|&&s| indegree[s] > 0)
            .expect("leftover supporter");
    }
}

/// Depth weight per node: 1 for nodes without supporters, otherwise one more
/// than the heaviest supporter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct WeightTable(BTreeMap<NodeId, u32>);

impl WeightTable {
    pub fn get(&self, id: &str) -> Option<u32> {
        self.0.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, u32)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn compute_weights(graph: &ResearchGraph) -> WeightTable {
    let mut by_index = vec![0u32; graph.len()];
    for &i in graph.topological_order() {
        by_index[i] = 1 + graph
            .supporter_indices(i)
            .iter()
            .map(|&s| by_index[s])
            .max()
            .unwrap_or(0);
    }
    WeightTable(
        graph
            .nodes()
            .iter()
            .zip(by_index)
            .map(|(n, w)| (n.id.clone(), w))
            .collect(),
    )
}

/// Sum of weights over every node of the graph.
pub fn total_weight(graph: &ResearchGraph, weights: &WeightTable) -> u64 {
    graph
        .nodes()
        .iter()
        .map(|n| u64::from(weights.get(n.id.as_str()).unwrap_or(0)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fact(id: &str) -> GraphNode {
        GraphNode::new(id, NodeLevel::AtomicFact, format!("fact {id}")).with_source("http://example.org")
    }

    fn insight(id: &str) -> GraphNode {
        GraphNode::new(id, NodeLevel::KeyInsight, format!("insight {id}"))
    }

    fn global(id: &str) -> GraphNode {
        GraphNode::new(id, NodeLevel::GlobalInsight, format!("global {id}"))
    }

    fn diamond() -> ResearchGraph {
        ResearchGraph::from_parts(
            vec![fact("f1"), fact("f2"), fact("f3"), insight("i1"), global("g1")],
            vec![
                GraphEdge::new("f1", "i1"),
                GraphEdge::new("f2", "i1"),
                GraphEdge::new("i1", "g1"),
                GraphEdge::new("f3", "g1"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn minimal_file_loads() {
        let g = load_graph(
            br#"{"nodes":[{"id":"f1","level":"atomic_fact","content":"a","source_urls":["u"]},
                          {"id":"i1","level":"key_insight","content":"b"}],
                 "links":[{"source":"f1","target":"i1","relation":"supports"}]}"#,
        )
        .unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.edges().len(), 1);
        assert!(g.warnings().is_empty());
    }

    #[test]
    fn two_cycle_is_named() {
        let err = load_graph(
            br#"{"nodes":[{"id":"f1","level":"atomic_fact","content":"a"},
                          {"id":"i1","level":"key_insight","content":"b"}],
                 "links":[{"source":"f1","target":"i1","relation":"supports"},
                          {"source":"i1","target":"f1","relation":"inference"}]}"#,
        )
        .unwrap_err();
        match err {
            GraphError::Cycle(ids) => {
                let set: BTreeSet<_> = ids.iter().map(NodeId::as_str).collect();
                assert_eq!(set, BTreeSet::from(["f1", "i1"]));
            }
            other => panic!("expected cycle, got {other}"),
        }
    }

    #[test]
    fn cycle_report_follows_edges() {
        let g = ResearchGraph::from_parts(
            vec![fact("a"), insight("b"), insight("c"), insight("d")],
            vec![
                GraphEdge::new("a", "b"),
                GraphEdge::new("b", "c"),
                GraphEdge::new("c", "d"),
                GraphEdge::new("d", "b"),
            ],
        );
        let Err(GraphError::Cycle(ids)) = g else {
            panic!("expected cycle")
        };
        assert_eq!(ids.len(), 3);
        let pos = |x: &str| ids.iter().position(|i| i.as_str() == x).unwrap();
        // b -> c -> d -> b, rotated arbitrarily
        assert_eq!((pos("b") + 1) % 3, pos("c"));
        assert_eq!((pos("c") + 1) % 3, pos("d"));
    }

    #[test]
    fn dangling_endpoint() {
        let err = load_graph(
            br#"{"nodes":[{"id":"f1","level":"atomic_fact","content":"a"}],
                 "links":[{"source":"f1","target":"x9","relation":"supports"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::DanglingEndpoint { ref id, .. } if id.as_str() == "x9"));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            ResearchGraph::from_parts(vec![fact("a"), fact("a")], vec![]),
            Err(GraphError::DuplicateNode(_))
        ));
        assert!(matches!(
            ResearchGraph::from_parts(vec![fact("")], vec![]),
            Err(GraphError::EmptyNodeId { position: 0 })
        ));
        assert!(matches!(
            ResearchGraph::from_parts(vec![fact("a"), insight("b")], vec![GraphEdge::new("a", "a")]),
            Err(GraphError::SelfLoop { .. })
        ));
        assert!(matches!(
            ResearchGraph::from_parts(
                vec![fact("a"), insight("b")],
                vec![GraphEdge::new("a", "b"), GraphEdge::new("a", "b")]
            ),
            Err(GraphError::DuplicateEdge { .. })
        ));
        assert!(matches!(load_graph(b"{nodes: 3"), Err(GraphError::Syntax(_))));
    }

    #[test]
    fn warnings_are_not_errors() {
        let g = ResearchGraph::from_parts(
            vec![GraphNode::new("f", NodeLevel::AtomicFact, "x"), insight("lonely")],
            vec![],
        )
        .unwrap();
        assert_eq!(
            g.warnings(),
            &[
                GraphWarning::FactWithoutSource { id: "f".into() },
                GraphWarning::UnsupportedInsight { id: "lonely".into() },
            ]
        );
        assert_eq!(g.compute_weights().get("lonely"), Some(1));
    }

    #[test]
    fn supporters_queries() {
        let g = ResearchGraph::from_parts(
            vec![fact("f1"), fact("f2"), insight("i1")],
            vec![GraphEdge::new("f1", "i1"), GraphEdge::new("f2", "i1")],
        )
        .unwrap();
        assert_eq!(
            supporters(&g, "i1").unwrap(),
            BTreeSet::from(["f1".into(), "f2".into()])
        );
        assert!(supporters(&g, "f1").unwrap().is_empty());
        assert!(matches!(supporters(&g, "zz"), Err(GraphError::UnknownNode(_))));

        let d = diamond();
        assert_eq!(d.supporters("g1").unwrap(), BTreeSet::from(["i1".into(), "f3".into()]));
    }

    #[test]
    fn weights_follow_recursion() {
        let single = ResearchGraph::from_parts(vec![fact("f1")], vec![]).unwrap();
        assert_eq!(single.compute_weights().get("f1"), Some(1));
        assert_eq!(total_weight(&single, &single.compute_weights()), 1);

        let chain = ResearchGraph::from_parts(
            vec![global("g1"), insight("i1"), fact("f1")],
            vec![GraphEdge::new("i1", "g1"), GraphEdge::new("f1", "i1")],
        )
        .unwrap();
        let w = chain.compute_weights();
        assert_eq!((w.get("f1"), w.get("i1"), w.get("g1")), (Some(1), Some(2), Some(3)));

        let d = diamond();
        let w = d.compute_weights();
        assert_eq!(w.get("i1"), Some(2));
        assert_eq!(w.get("g1"), Some(3));
        assert_eq!(total_weight(&d, &w), 8);

        let empty = ResearchGraph::from_parts(vec![], vec![]).unwrap();
        assert_eq!(total_weight(&empty, &empty.compute_weights()), 0);
    }

    #[test]
    fn json_round_trip() {
        let d = diamond();
        let back = load_graph(d.to_json().as_bytes()).unwrap();
        assert_eq!(back.nodes(), d.nodes());
        assert_eq!(back.edges(), d.edges());
    }
}
