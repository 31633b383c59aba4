//! Graph projection onto a report and citation-chain verification.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::graph::{NodeId, NodeLevel, ResearchGraph};
use crate::judge::{Judge, PresenceVerdict};
use crate::report::Report;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LevelHits {
    pub atomic_fact: BTreeSet<NodeId>,
    pub key_insight: BTreeSet<NodeId>,
    pub global_insight: BTreeSet<NodeId>,
}

impl LevelHits {
    pub fn at(&self, level: NodeLevel) -> &BTreeSet<NodeId> {
        match level {
            NodeLevel::AtomicFact => &self.atomic_fact,
            NodeLevel::KeyInsight => &self.key_insight,
            NodeLevel::GlobalInsight => &self.global_insight,
        }
    }

    fn at_mut(&mut self, level: NodeLevel) -> &mut BTreeSet<NodeId> {
        match level {
            NodeLevel::AtomicFact => &mut self.atomic_fact,
            NodeLevel::KeyInsight => &mut self.key_insight,
            NodeLevel::GlobalInsight => &mut self.global_insight,
        }
    }
}

/// One verdict per graph node, with hits partitioned by level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionResult {
    pub verdicts: BTreeMap<NodeId, PresenceVerdict>,
    pub hits: LevelHits,
    /// Nodes whose judgment failed; they count as misses.
    pub failed: Vec<NodeId>,
}

impl ProjectionResult {
    pub fn is_hit(&self, id: &str) -> bool {
        self.verdicts.get(id).is_some_and(|v| v.hit)
    }

    pub fn hit_ids(&self) -> BTreeSet<NodeId> {
        self.verdicts
            .iter()
            .filter(|(_, v)| v.hit)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn is_partial(&self) -> bool {
        !self.failed.is_empty()
    }

    /// Build a projection from a known hit set, without a judge.
    pub fn from_hits<'a>(graph: &ResearchGraph, hits: impl IntoIterator<Item = &'a str>) -> Self {
        let hits: BTreeSet<&str> = hits.into_iter().collect();
        let verdicts = graph
            .nodes()
            .iter()
            .map(|n| {
                let hit = hits.contains(n.id.as_str());
                let verdict = PresenceVerdict {
                    node_id: n.id.clone(),
                    hit,
                    rationale: "given".into(),
                    confidence: 1.0,
                };
                (n.id.clone(), verdict)
            })
            .collect();
        Self::assemble(graph, verdicts, Vec::new())
    }

    fn assemble(graph: &ResearchGraph, verdicts: BTreeMap<NodeId, PresenceVerdict>, failed: Vec<NodeId>) -> Self {
        let mut hits = LevelHits::default();
        for node in graph.nodes() {
            if verdicts.get(&node.id).is_some_and(|v| v.hit) {
                hits.at_mut(node.level).insert(node.id.clone());
            }
        }
        Self { verdicts, hits, failed }
    }
}

/// Judge every node against the report. Judge failures become misses and
/// are listed in [`ProjectionResult::failed`].
pub fn project(graph: &ResearchGraph, report: &Report, judge: &dyn Judge) -> ProjectionResult {
    let outcomes: Vec<_> = graph
        .nodes()
        .par_iter()
        .map(|node| (node, judge.assess_presence(node, report)))
        .collect();
    let mut verdicts = BTreeMap::new();
    let mut failed = Vec::new();
    for (node, outcome) in outcomes {
        let verdict = match outcome {
            Ok(v) => v,
            Err(e) => {
                failed.push(node.id.clone());
                PresenceVerdict {
                    node_id: node.id.clone(),
                    hit: false,
                    rationale: format!("judge error: {e}"),
                    confidence: 0.0,
                }
            }
        };
        verdicts.insert(node.id.clone(), verdict);
    }
    failed.sort();
    ProjectionResult::assemble(graph, verdicts, failed)
}

/// Induced subgraph on the hit set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecoveredSubgraph {
    pub nodes: BTreeSet<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
}

pub fn recovered_subgraph(graph: &ResearchGraph, result: &ProjectionResult) -> RecoveredSubgraph {
    let nodes = result.hit_ids();
    let edges = graph
        .edges()
        .iter()
        .filter(|e| nodes.contains(&e.source) && nodes.contains(&e.target))
        .map(|e| (e.source.clone(), e.target.clone()))
        .collect();
    RecoveredSubgraph { nodes, edges }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupportVerdict {
    pub global_id: NodeId,
    pub hit: bool,
    pub supported: bool,
    /// Shortest chain from a hit atomic fact up to the global node.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_path: Option<Vec<NodeId>>,
}

/// For every global insight: is it reachable from a hit atomic fact through
/// hit nodes only?
pub fn verify_support(graph: &ResearchGraph, result: &ProjectionResult) -> Vec<SupportVerdict> {
    let n = graph.len();
    let hit: Vec<bool> = graph
        .nodes()
        .iter()
        .map(|node| result.is_hit(node.id.as_str()))
        .collect();

    // Multi-source BFS along evidence -> conclusion edges, seeded with every
    // hit atomic fact in id order, so each reached node gets a shortest path.
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut reached = vec![false; n];
    let mut queue = VecDeque::new();
    let mut seeds: Vec<usize> = (0..n)
        .filter(|&i| hit[i] && graph.nodes()[i].level == NodeLevel::AtomicFact)
        .collect();
    seeds.sort_by(|a, b| graph.nodes()[*a].id.cmp(&graph.nodes()[*b].id));
    for s in seeds {
        reached[s] = true;
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        for &v in graph.dependent_indices(u) {
            if hit[v] && !reached[v] {
                reached[v] = true;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }

    let mut out: Vec<SupportVerdict> = graph
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, node)| node.level == NodeLevel::GlobalInsight)
        .map(|(i, node)| {
            let supported = hit[i] && reached[i] && parent[i].is_some();
            let witness_path = supported.then(|| {
                let mut path = vec![node.id.clone()];
                let mut cur = i;
                while let Some(p) = parent[cur] {
                    path.push(graph.nodes()[p].id.clone());
                    cur = p;
                }
                path.reverse();
                path
            });
            SupportVerdict {
                global_id: node.id.clone(),
                hit: hit[i],
                supported,
                witness_path,
            }
        })
        .collect();
    out.sort_by(|a, b| a.global_id.cmp(&b.global_id));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphEdge, GraphNode};
    use crate::judge::DeterministicJudge;
    use crate::report::parse_report;

    fn chain() -> ResearchGraph {
        ResearchGraph::from_parts(
            vec![
                GraphNode::new("f1", NodeLevel::AtomicFact, "Factories emitted ninety tonnes of soot."),
                GraphNode::new(
                    "i1",
                    NodeLevel::KeyInsight,
                    "Soot output drives regional smog episodes.",
                ),
                GraphNode::new(
                    "g1",
                    NodeLevel::GlobalInsight,
                    "Industrial policy shapes urban air quality.",
                ),
            ],
            vec![GraphEdge::new("f1", "i1"), GraphEdge::new("i1", "g1")],
        )
        .unwrap()
    }

    #[test]
    fn full_chain_supported() {
        let g = chain();
        let res = ProjectionResult::from_hits(&g, ["f1", "i1", "g1"]);
        let v = verify_support(&g, &res);
        assert_eq!(v.len(), 1);
        assert!(v[0].supported);
        assert_eq!(
            v[0].witness_path.as_deref().unwrap(),
            &["f1".into(), "i1".into(), "g1".into()]
        );
    }

    #[test]
    fn broken_chain_is_unsupported() {
        let g = chain();
        let res = ProjectionResult::from_hits(&g, ["f1", "g1"]);
        let v = verify_support(&g, &res);
        assert!(v[0].hit && !v[0].supported && v[0].witness_path.is_none());
        let sub = recovered_subgraph(&g, &res);
        assert_eq!(sub.nodes.len(), 2);
        assert!(sub.edges.is_empty());
    }

    #[test]
    fn no_fact_hits_means_no_support() {
        let g = chain();
        let res = ProjectionResult::from_hits(&g, ["i1", "g1"]);
        assert!(verify_support(&g, &res).iter().all(|v| !v.supported));
    }

    #[test]
    fn hit_global_without_any_supporters_is_unsupported() {
        let g = ResearchGraph::from_parts(vec![GraphNode::new("g", NodeLevel::GlobalInsight, "x")], vec![]).unwrap();
        let v = verify_support(&g, &ProjectionResult::from_hits(&g, ["g"]));
        assert!(v[0].hit && !v[0].supported);
    }

    #[test]
    fn subgraph_extremes() {
        let g = chain();
        let all = recovered_subgraph(&g, &ProjectionResult::from_hits(&g, ["f1", "i1", "g1"]));
        assert_eq!(all.nodes.len(), 3);
        assert_eq!(all.edges.len(), 2);
        let none = recovered_subgraph(&g, &ProjectionResult::from_hits(&g, []));
        assert!(none.nodes.is_empty() && none.edges.is_empty());
    }

    #[test]
    fn projection_through_judge() {
        let g = chain();
        let judge = DeterministicJudge::new(0.8).unwrap();
        let full = parse_report(
            "Factories emitted ninety tonnes of soot. Soot output drives regional smog episodes. \
             Industrial policy shapes urban air quality.",
        );
        let res = project(&g, &full, &judge);
        assert_eq!(res.hit_ids().len(), 3);
        assert_eq!(res.hits.at(NodeLevel::KeyInsight).len(), 1);
        assert!(!res.is_partial());

        let empty = project(&g, &parse_report(""), &judge);
        assert!(empty.hit_ids().is_empty());
        assert_eq!(empty.verdicts.len(), 3);
    }
}
