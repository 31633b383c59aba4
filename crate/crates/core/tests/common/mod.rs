#![allow(dead_code)]

use graphaudit_core::{GraphEdge, GraphNode, NodeLevel, ResearchGraph};
use proptest::prelude::*;

/// The five-node diamond: f1,f2 -> i1; i1,f3 -> g1.
pub fn diamond() -> ResearchGraph {
    ResearchGraph::from_parts(
        vec![
            GraphNode::new(
                "f1",
                NodeLevel::AtomicFact,
                "Lithium prices fell forty percent in 2023.",
            )
            .with_source("https://a.example/1"),
            GraphNode::new(
                "f2",
                NodeLevel::AtomicFact,
                "Cathode recycling capacity doubled across Europe.",
            )
            .with_source("https://a.example/2"),
            GraphNode::new(
                "f3",
                NodeLevel::AtomicFact,
                "Grid storage tenders expanded in coastal provinces.",
            )
            .with_source("https://a.example/3"),
            GraphNode::new(
                "i1",
                NodeLevel::KeyInsight,
                "Battery supply chains are becoming cheaper and circular.",
            ),
            GraphNode::new(
                "g1",
                NodeLevel::GlobalInsight,
                "Electrification economics now favour stationary storage.",
            ),
        ],
        vec![
            GraphEdge::new("f1", "i1"),
            GraphEdge::new("f2", "i1"),
            GraphEdge::new("i1", "g1"),
            GraphEdge::new("f3", "g1"),
        ],
    )
    .unwrap()
}

pub fn node_id(i: usize) -> String {
    format!("n{i:02}")
}

/// Content built from pseudo-words unique to node `i`, so the deterministic
/// judge never confuses two nodes.
pub fn node_content(i: usize) -> String {
    (0..4).map(|k| format!("qz{i}v{k}")).collect::<Vec<_>>().join(" ")
}

/// DAG over `n` nodes: edge i -> j only when i < j and `mask` selects it.
pub fn dag_from_mask(n: usize, levels: &[NodeLevel], mask: &[bool]) -> ResearchGraph {
    let nodes = (0..n)
        .map(|i| GraphNode::new(node_id(i), levels[i], node_content(i)))
        .collect();
    let mut edges = Vec::new();
    let mut k = 0;
    for j in 0..n {
        for i in 0..j {
            if mask[k] {
                edges.push(GraphEdge::new(node_id(i), node_id(j)));
            }
            k += 1;
        }
    }
    ResearchGraph::from_parts(nodes, edges).unwrap()
}

pub fn level_strategy() -> impl Strategy<Value = NodeLevel> {
    prop_oneof![
        Just(NodeLevel::AtomicFact),
        Just(NodeLevel::KeyInsight),
        Just(NodeLevel::GlobalInsight)
    ]
}

/// (graph, hit flags) over 1..=max_nodes nodes with edge density `p`.
pub fn dag_with_hits(max_nodes: usize, p: f64) -> impl Strategy<Value = (ResearchGraph, Vec<bool>)> {
    (1..=max_nodes).prop_flat_map(move |n| {
        let pairs = n * (n - 1) / 2;
        (
            proptest::collection::vec(level_strategy(), n),
            proptest::collection::vec(proptest::bool::weighted(p), pairs),
            proptest::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(levels, mask, hits)| (dag_from_mask(n, &levels, &mask), hits))
    })
}

pub fn hit_ids(hits: &[bool]) -> Vec<String> {
    hits.iter()
        .enumerate()
        .filter(|(_, h)| **h)
        .map(|(i, _)| node_id(i))
        .collect()
}

/// Markdown report embedding the content of the selected nodes, spread over
/// `sections` headed sections.
pub fn report_embedding(graph: &ResearchGraph, ids: &[String], sections: usize) -> String {
    let sections = sections.max(1);
    let mut out = String::from("# Synthetic report\n\n");
    for s in 0..sections {
        out.push_str(&format!("## Part {s}\n\n"));
        for (k, id) in ids.iter().enumerate() {
            if k % sections == s {
                let node = graph.node(id).unwrap();
                out.push_str(&format!("{}.\n\n", node.content.trim_end_matches('.')));
            }
        }
    }
    out
}
