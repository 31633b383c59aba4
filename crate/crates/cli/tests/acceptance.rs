//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! with its runtime budget, and exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use graphaudit_cli::args::RunArgs;
use graphaudit_cli::{commands, leaderboard};
use graphaudit_core::meta::{consistency_sigma, degrade, improve, responsiveness};
use graphaudit_core::metrics::{
    consistency_from_counts, coverage, dominance_from_proportions, narrative_monopolization, objectivity_item, overall,
};
use graphaudit_core::report::SectionPresence;
use graphaudit_core::{
    compute_weights, evaluate_report, parse_report, verify_support, AuditContext, DeterministicJudge, GraphEdge,
    GraphNode, MetricConfig, NodeLevel, PerturbOptions, ProjectionResult, ResearchGraph, ScoreTriple, StanceScores,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(), String>;

/// Name, runtime budget in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($msg)+)),
        }
    };
}

/// Transcribed rows: system, printed Overall, then Coverage, Consistency,
/// Utility, Objectivity, Dominance, Monopolization ("-" where blank).
const PUBLISHED_ROWS: &str = "\
System,Overall,Coverage,Consistency,Utility,Objectivity,Dominance,Monopolization
Gemini Deep Research,28.62,33.15,22.92,22.98,35.43,4.85,39.71
Sonar Deep Research,27.04,28.26,16.89,26.50,36.50,8.32,42.49
Tongyi Deep Research,25.74,27.41,19.80,20.86,34.88,-,-
o3 Deep Research,22.04,23.44,19.90,13.66,31.18,5.68,32.33
o4-mini Deep Research,21.91,23.11,20.04,13.60,30.91,7.35,36.50
Kimi-k2,26.16,25.97,24.80,19.88,34.01,-,-
Grok-4-1-fast,24.55,30.09,19.41,16.79,31.91,9.33,43.14
Deepseek-r1,22.57,24.21,15.81,16.55,33.73,2.94,55.09
Claude-3.5-sonnet,22.26,27.02,17.60,13.75,30.69,2.08,65.42
Minimax-m2.1,22.05,20.91,13.24,19.24,34.81,10.54,44.56
Llama-3.3-70B,17.71,15.55,13.61,11.44,30.25,57.51,62.66
Qwen-2.5-72B,16.84,10.47,10.78,14.72,31.39,-,-
";

fn leaderboard_aggregation() -> Outcome {
    let config = MetricConfig::default();
    let mut printed: Vec<(String, f64)> = Vec::new();
    for line in PUBLISHED_ROWS.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let num = |i: usize| cells[i].parse::<f64>().unwrap();
        let core = [Some(num(2)), Some(num(3)), Some(num(4)), Some(num(5))];
        let got = overall(core, &config).map_err(|m| format!("{}: missing {m:?}", cells[0]))?;
        ensure!(
            (got - num(1)).abs() <= 0.01,
            "{}: overall {got:.4} vs printed {}",
            cells[0],
            num(1)
        );
        printed.push((cells[0].to_string(), num(1)));
    }
    ensure!(printed.len() == 12, "expected 12 rows, found {}", printed.len());

    // The table groups systems by family; its ranking is the printed
    // Overall column in descending order.
    printed.sort_by(|a, b| b.1.total_cmp(&a.1));
    let expected: Vec<&str> = printed.iter().map(|(s, _)| s.as_str()).collect();
    let entries = leaderboard::read_csv(PUBLISHED_ROWS).map_err(|e| e.to_string())?;
    let ranked = leaderboard::rank(entries, &config);
    let got: Vec<&str> = ranked.iter().map(|e| e.system.as_str()).collect();
    ensure!(got == expected, "ranking {got:?} != {expected:?}");
    ensure!(
        got[0] == "Gemini Deep Research" && got[1] == "Sonar Deep Research",
        "top two: {got:?}"
    );

    let md = leaderboard::to_markdown(&ranked);
    let tongyi = md.lines().find(|l| l.contains("Tongyi")).unwrap_or_default();
    ensure!(
        tongyi.matches("| -").count() == 2,
        "null citation cells not dashed: {tongyi}"
    );
    Ok(())
}

/// Random DAG as (levels, edges i -> j with i < j).
fn random_dag(rng: &mut ChaCha8Rng, min_n: usize, max_n: usize) -> (Vec<NodeLevel>, Vec<(usize, usize)>) {
    let n = rng.random_range(min_n..=max_n);
    let levels = (0..n)
        .map(|_| match rng.random_range(0..3) {
            0 => NodeLevel::AtomicFact,
            1 => NodeLevel::KeyInsight,
            _ => NodeLevel::GlobalInsight,
        })
        .collect();
    let p = rng.random_range(0.05..0.45);
    let mut edges = Vec::new();
    for j in 0..n {
        for i in 0..j {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    (levels, edges)
}

fn vid(i: usize) -> String {
    format!("v{i:02}")
}

/// Pseudo-words owned by node `i` alone.
fn words(i: usize) -> String {
    (0..4).map(|k| format!("zq{i}w{k}")).collect::<Vec<_>>().join(" ")
}

/// Build with nodes and links listed in the given permutation.
fn build(levels: &[NodeLevel], edges: &[(usize, usize)], node_order: &[usize], edge_order: &[usize]) -> ResearchGraph {
    let nodes = node_order
        .iter()
        .map(|&i| GraphNode::new(vid(i), levels[i], words(i)))
        .collect();
    let links = edge_order
        .iter()
        .map(|&k| GraphEdge::new(vid(edges[k].0), vid(edges[k].1)))
        .collect();
    ResearchGraph::from_parts(nodes, links).expect("generator emits DAGs")
}

fn identity(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn weight_recursion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    for trial in 0..200 {
        let (levels, edges) = random_dag(&mut rng, 1, 50);
        let n = levels.len();
        let mut supporters = vec![Vec::new(); n];
        for &(i, j) in &edges {
            supporters[j].push(i);
        }
        // Oracle: the recursion itself, memoized.
        fn w(v: usize, sup: &[Vec<usize>], memo: &mut HashMap<usize, u32>) -> u32 {
            if let Some(&x) = memo.get(&v) {
                return x;
            }
            let x = 1 + sup[v].iter().map(|&s| w(s, sup, memo)).max().unwrap_or(0);
            memo.insert(v, x);
            x
        }
        let mut memo = HashMap::new();
        let graph = build(&levels, &edges, &identity(n), &identity(edges.len()));
        let table = compute_weights(&graph);
        for v in 0..n {
            let got = table.get(&vid(v));
            let want = w(v, &supporters, &mut memo);
            ensure!(got == Some(want), "trial {trial}, node {v}: {got:?} != {want}");
            if supporters[v].is_empty() {
                ensure!(want == 1, "trial {trial}: leaf {v} weighs {want}");
            }
        }
        for _ in 0..3 {
            let mut nodes = identity(n);
            let mut links = identity(edges.len());
            nodes.shuffle(&mut rng);
            links.shuffle(&mut rng);
            let shuffled = compute_weights(&build(&levels, &edges, &nodes, &links));
            ensure!(shuffled == table, "trial {trial}: weights depend on listing order");
        }
    }
    Ok(())
}

/// Brute force: all simple forward paths from each hit fact through hit
/// nodes. Returns the shortest path length (in nodes) into each reached node.
fn enumerate_paths(n: usize, edges: &[(usize, usize)], levels: &[NodeLevel], hits: &[bool]) -> Vec<Option<usize>> {
    fn dfs(at: usize, edges: &[(usize, usize)], hits: &[bool], path: &mut Vec<usize>, best: &mut [Option<usize>]) {
        let len = path.len();
        best[at] = Some(best[at].map_or(len, |b| b.min(len)));
        for &(i, j) in edges {
            if i == at && hits[j] && !path.contains(&j) {
                path.push(j);
                dfs(j, edges, hits, path, best);
                path.pop();
            }
        }
    }
    let mut best = vec![None; n];
    for s in 0..n {
        if hits[s] && levels[s] == NodeLevel::AtomicFact {
            dfs(s, edges, hits, &mut vec![s], &mut best);
        }
    }
    best
}

fn chain_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut supported_seen = 0;
    for trial in 0..100 {
        let (levels, edges) = random_dag(&mut rng, 1, 12);
        let n = levels.len();
        let hits: Vec<bool> = (0..n).map(|_| rng.random_bool(0.65)).collect();
        let graph = build(&levels, &edges, &identity(n), &identity(edges.len()));
        let ids: Vec<String> = (0..n).filter(|&i| hits[i]).map(vid).collect();
        let result = ProjectionResult::from_hits(&graph, ids.iter().map(String::as_str));
        let verdicts = verify_support(&graph, &result);
        let shortest = enumerate_paths(n, &edges, &levels, &hits);

        let globals: Vec<usize> = (0..n).filter(|&i| levels[i] == NodeLevel::GlobalInsight).collect();
        ensure!(verdicts.len() == globals.len(), "trial {trial}: verdict count");
        for g in globals {
            let v = verdicts
                .iter()
                .find(|v| v.global_id.as_str() == vid(g))
                .ok_or(format!("trial {trial}: no verdict for {}", vid(g)))?;
            let want = hits[g] && shortest[g].is_some();
            ensure!(v.hit == hits[g], "trial {trial}: hit flag of {}", vid(g));
            ensure!(
                v.supported == want,
                "trial {trial}: {} supported={} oracle={want}",
                vid(g),
                v.supported
            );
            match (&v.witness_path, shortest[g]) {
                (Some(path), Some(len)) if want => {
                    supported_seen += 1;
                    ensure!(
                        path.len() == len,
                        "trial {trial}: witness length {} != {len}",
                        path.len()
                    );
                    let idx: Vec<usize> = path.iter().map(|p| p.as_str()[1..].parse().unwrap()).collect();
                    ensure!(
                        levels[idx[0]] == NodeLevel::AtomicFact,
                        "trial {trial}: witness starts off a fact"
                    );
                    ensure!(*idx.last().unwrap() == g, "trial {trial}: witness ends elsewhere");
                    ensure!(idx.iter().all(|&i| hits[i]), "trial {trial}: witness through a miss");
                    ensure!(
                        idx.windows(2).all(|w| edges.contains(&(w[0], w[1]))),
                        "trial {trial}: witness uses a missing link"
                    );
                }
                (None, _) if !want => {}
                other => return Err(format!("trial {trial}: witness {other:?} for supported={want}")),
            }
        }
    }
    ensure!(
        supported_seen > 20,
        "generator too sparse: {supported_seen} supported globals"
    );
    Ok(())
}

fn diamond() -> ResearchGraph {
    ResearchGraph::from_parts(
        vec![
            GraphNode::new(
                "f1",
                NodeLevel::AtomicFact,
                "Lithium prices fell forty percent in 2023.",
            ),
            GraphNode::new(
                "f2",
                NodeLevel::AtomicFact,
                "Cathode recycling capacity doubled across Europe.",
            ),
            GraphNode::new(
                "f3",
                NodeLevel::AtomicFact,
                "Grid storage tenders expanded in coastal provinces.",
            ),
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
    .expect("diamond is a DAG")
}

fn closed_forms() -> Outcome {
    let graph = diamond();
    let weights = compute_weights(&graph);
    let result = ProjectionResult::from_hits(&graph, ["f1", "f2", "i1"]);
    let r = coverage(&graph, &weights, &result)
        .map_err(|e| e.to_string())?
        .r_weighted;
    // Weights 1,1,1,2,3: hits carry 1+1+2 of 8.
    ensure!(r == 50.0, "R_weighted {r}");

    let c = consistency_from_counts(2, 1, 1, MetricConfig::default().epsilon);
    ensure!((c - 50.0).abs() <= 1e-6, "C_logic {c}");

    let o = objectivity_item(&StanceScores::new(6.0, 5.0), &StanceScores::new(6.0, 3.0), 5.0);
    ensure!(o == 90.0, "O_bias {o}");

    let d = dominance_from_proportions(&[0.5, 0.25, 0.25]).unwrap();
    let h: f64 = 1.5;
    let want = 100.0 * (1.0 - h / 3f64.log2());
    ensure!((d - 5.361).abs() <= 0.001 && (d - want).abs() < 1e-9, "D_src {d}");
    for n in 2..=64 {
        let u = dominance_from_proportions(&vec![1.0 / n as f64; n]).unwrap();
        ensure!(u.abs() <= 1e-9, "uniform over {n}: D_src {u}");
    }

    let presence = SectionPresence {
        per_source: BTreeMap::from([(1, 3), (2, 1)]),
        total_sections: 4,
    };
    let m = narrative_monopolization(&presence);
    ensure!(m == Some(75.0), "M_mono {m:?}");
    let parsed = parse_report(
        "## A\n\nOne [1].\n\n## B\n\nTwo [1].\n\n## C\n\nThree [1][2].\n\n## D\n\nFour [2].\n\n\
         ## References\n\n[1] https://s.example/1\n[2] https://s.example/2\n",
    );
    let m = narrative_monopolization(&parsed.section_presence());
    ensure!(m == Some(75.0), "M_mono through the parser {m:?}");
    Ok(())
}

/// Report stating `stated` nodes verbatim, up to three per section.
fn embed(stated: &[usize], rng: &mut ChaCha8Rng) -> String {
    let mut md = String::from("# Synthetic brief\n");
    let mut order = stated.to_vec();
    order.shuffle(rng);
    for (s, chunk) in order.chunks(3).enumerate() {
        md.push_str(&format!("\n## Part {s}\n\n"));
        for &i in chunk {
            md.push_str(&format!("{} [1]. ", words(i)));
        }
        md.push('\n');
    }
    md.push_str("\n## References\n\n[1] https://s.example/1\n");
    md
}

fn deterministic_responsiveness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let judge = DeterministicJudge::new(0.6).map_err(|e| e.to_string())?;
    let mut triples = Vec::new();
    while triples.len() < 24 {
        let (levels, edges) = random_dag(&mut rng, 6, 20);
        let n = levels.len();
        let facts: Vec<usize> = (0..n).filter(|&i| levels[i] == NodeLevel::AtomicFact).collect();
        if facts.len() < 2 {
            continue;
        }
        let mut stated: BTreeSet<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        stated.insert(facts[0]);
        stated.remove(&facts[1]);
        let stated: Vec<usize> = stated.into_iter().collect();

        let graph = build(&levels, &edges, &identity(n), &identity(edges.len()));
        let weights = compute_weights(&graph);
        let ctx = AuditContext::new(&graph, &weights);
        let report = parse_report(&embed(&stated, &mut rng));
        let base = evaluate_report(&ctx, &report, &judge).map_err(|e| e.to_string())?;
        let options = PerturbOptions {
            count: 1,
            seed: rng.random(),
            ..PerturbOptions::default()
        };
        let r = |rep| -> Result<f64, String> {
            Ok(evaluate_report(&ctx, rep, &judge)
                .map_err(|e| e.to_string())?
                .scores
                .r_weighted
                .expect("coverage always defined"))
        };
        let (deg, _) = degrade(&report, &graph, &base.projection, &options).map_err(|e| e.to_string())?;
        let (imp, _) = improve(&report, &graph, &base.projection, &options).map_err(|e| e.to_string())?;
        triples.push(ScoreTriple::new(base.scores.r_weighted.unwrap(), r(&deg)?, r(&imp)?));
    }
    let rr = responsiveness(&triples, 0.0).map_err(|e| e.to_string())?;
    ensure!(
        rr.rr_deg == Some(100.0) && rr.rr_imp == Some(100.0),
        "RR_deg {:?}, RR_imp {:?} over {} fixtures",
        rr.rr_deg,
        rr.rr_imp,
        triples.len()
    );
    Ok(())
}

fn supported_set(graph: &ResearchGraph, hits: &BTreeSet<String>) -> BTreeSet<String> {
    let result = ProjectionResult::from_hits(graph, hits.iter().map(String::as_str));
    verify_support(graph, &result)
        .into_iter()
        .filter(|v| v.supported)
        .map(|v| v.global_id.as_str().to_string())
        .collect()
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    for trial in 0..1000 {
        let (levels, edges) = random_dag(&mut rng, 1, 30);
        let n = levels.len();
        let graph = build(&levels, &edges, &identity(n), &identity(edges.len()));
        let weights = compute_weights(&graph);
        let mut hits: BTreeSet<String> = (0..n).filter(|_| rng.random_bool(0.5)).map(vid).collect();
        let before = coverage(
            &graph,
            &weights,
            &ProjectionResult::from_hits(&graph, hits.iter().map(String::as_str)),
        )
        .map_err(|e| e.to_string())?
        .r_weighted;
        hits.insert(vid(rng.random_range(0..n)));
        let after = coverage(
            &graph,
            &weights,
            &ProjectionResult::from_hits(&graph, hits.iter().map(String::as_str)),
        )
        .map_err(|e| e.to_string())?
        .r_weighted;
        ensure!(after >= before, "coverage trial {trial}: {before} -> {after}");
    }
    for trial in 0..1000 {
        let (levels, edges) = random_dag(&mut rng, 1, 30);
        let n = levels.len();
        let graph = build(&levels, &edges, &identity(n), &identity(edges.len()));
        let small: BTreeSet<String> = (0..n).filter(|_| rng.random_bool(0.5)).map(vid).collect();
        let mut large = small.clone();
        large.extend((0..n).filter(|_| rng.random_bool(0.3)).map(vid));
        let (a, b) = (supported_set(&graph, &small), supported_set(&graph, &large));
        ensure!(a.is_subset(&b), "support trial {trial}: {a:?} not within {b:?}");
    }
    for trial in 0..1000 {
        let sections = rng.random_range(1..8);
        let mut cites: Vec<Vec<u32>> = (0..sections)
            .map(|_| (0..rng.random_range(0..4)).map(|_| rng.random_range(1..=5)).collect())
            .collect();
        let before = narrative_monopolization(&parse_report(&cited(&cites)).section_presence());
        let s = rng.random_range(0..sections);
        cites[s].push(rng.random_range(1..=5));
        let after = narrative_monopolization(&parse_report(&cited(&cites)).section_presence());
        ensure!(
            after.is_some() && after >= before,
            "M_mono trial {trial}: {before:?} -> {after:?}"
        );
    }
    Ok(())
}

fn cited(cites: &[Vec<u32>]) -> String {
    let mut md = String::new();
    for (i, marks) in cites.iter().enumerate() {
        let marks: String = marks.iter().map(|m| format!("[{m}]")).collect();
        md.push_str(&format!("## Topic {i}\n\nObservation {i} stands {marks}.\n\n"));
    }
    md.push_str("## References\n\n");
    for k in 1..=5 {
        md.push_str(&format!("[{k}] https://s.example/{k}\n"));
    }
    md
}

fn consistency_machinery() -> Outcome {
    let same = vec![vec![37.5; 3], vec![80.0; 3], vec![0.0; 3]];
    let s = consistency_sigma(&same, 0.0, 100.0).map_err(|e| e.to_string())?;
    ensure!(s == 0.0, "identical columns: {s}");
    let wide = consistency_sigma(&[vec![40.0, 60.0]], 0.0, 100.0).map_err(|e| e.to_string())?;
    let narrow = consistency_sigma(&[vec![4.0, 6.0]], 0.0, 10.0).map_err(|e| e.to_string())?;
    ensure!((wide - 10.0).abs() < 1e-9, "0-100 scale: {wide}");
    ensure!((narrow - 10.0).abs() < 1e-9, "0-10 scale: {narrow}");
    Ok(())
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn end_to_end_determinism() -> Outcome {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |id: &str| -> Result<Vec<u8>, String> {
        let args = RunArgs {
            config: Some(fixtures().join("audit.toml")),
            out: Some(out.path().to_path_buf()),
            run_id: Some(id.to_string()),
            ..RunArgs::default()
        };
        let code = commands::evaluate(&args).map_err(|f| f.to_string())?;
        ensure!(code == 0, "evaluate exited {code}");
        std::fs::read(out.path().join(id).join("scores.json")).map_err(|e| e.to_string())
    };
    let first = run("first")?;
    let second = run("second")?;
    ensure!(first == second, "scores.json differs between runs");
    let v: serde_json::Value = serde_json::from_slice(&first).map_err(|e| e.to_string())?;
    let n = v["reports"].as_array().map_or(0, Vec::len);
    ensure!(n == 3, "expected 3 scored reports, found {n}");
    Ok(())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 leaderboard aggregation", 1, leaderboard_aggregation),
        ("2 weight recursion", 5, weight_recursion),
        ("3 chain-verification oracle", 10, chain_oracle),
        ("4 closed-form metric fixtures", 1, closed_forms),
        ("5 deterministic responsiveness", 30, deterministic_responsiveness),
        ("6 monotonicity properties", 30, monotonicity),
        ("7 consistency machinery", 1, consistency_machinery),
        ("8 end-to-end determinism", 10, end_to_end_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|()| {
            if elapsed <= Duration::from_secs(budget) {
                Ok(())
            } else {
                Err(format!("over the {budget} s budget"))
            }
        });
        match outcome {
            Ok(()) => println!(
                "PASS criterion {name} ({:.3} s, budget {budget} s)",
                elapsed.as_secs_f64()
            ),
            Err(e) => {
                failed += 1;
                println!(
                    "FAIL criterion {name} ({:.3} s, budget {budget} s): {e}",
                    elapsed.as_secs_f64()
                );
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
