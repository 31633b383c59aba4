//! Synthetic workloads for the audit benchmarks.

use graphaudit_core::{GraphEdge, GraphNode, NodeLevel, ResearchGraph};

/// Layered graph: `facts` facts, one insight per `fan_in` facts, and one
/// global insight per `fan_in` insights. Every node has distinct content.
pub fn layered_graph(facts: usize, fan_in: usize) -> ResearchGraph {
    let fan_in = fan_in.max(1);
    let insights = facts.div_ceil(fan_in);
    let globals = insights.div_ceil(fan_in);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for i in 0..facts {
        nodes.push(
            GraphNode::new(format!("f{i}"), NodeLevel::AtomicFact, content("fact", i))
                .with_source(format!("https://example.org/{i}")),
        );
        edges.push(GraphEdge::new(format!("f{i}"), format!("i{}", i / fan_in)));
    }
    for i in 0..insights {
        nodes.push(GraphNode::new(
            format!("i{i}"),
            NodeLevel::KeyInsight,
            content("insight", i),
        ));
        edges.push(GraphEdge::new(format!("i{i}"), format!("g{}", i / fan_in)));
    }
    for i in 0..globals {
        nodes.push(GraphNode::new(
            format!("g{i}"),
            NodeLevel::GlobalInsight,
            content("global", i),
        ));
    }
    ResearchGraph::from_parts(nodes, edges).expect("layered graph is acyclic")
}

fn content(kind: &str, i: usize) -> String {
    format!("{kind} marker{i} alpha{} beta{} gamma{}", i * 7 % 101, i * 13 % 103, i)
}

/// Markdown report stating every `stride`-th node, eight sentences per
/// section, with a citation per sentence and a reference list.
pub fn report_for(graph: &ResearchGraph, stride: usize) -> String {
    let mut out = String::from("# Synthetic report\n");
    let stated: Vec<&GraphNode> = graph.nodes().iter().step_by(stride.max(1)).collect();
    for (s, chunk) in stated.chunks(8).enumerate() {
        out.push_str(&format!("\n## Section {s}\n\n"));
        for (k, n) in chunk.iter().enumerate() {
            out.push_str(&format!("{} [{}]. ", n.content, k % 5 + 1));
        }
        out.push('\n');
    }
    out.push_str("\n## References\n\n");
    for k in 1..=5 {
        out.push_str(&format!("[{k}] https://example.org/ref{k}\n"));
    }
    out
}
