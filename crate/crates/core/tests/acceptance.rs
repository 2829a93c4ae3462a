//! The ten acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fofe_link::candidates::{
    distill, generate_corpus, DocCandidateGraph, Extensions, GraphNode, RawCandidate,
    ScoredCandidate,
};
use fofe_link::corpus::read_corpus;
use fofe_link::eval::{candidate_recall, ceaf_m};
use fofe_link::fofe::{decode_bruteforce, encode, encode_projected, Vocabulary};
use fofe_link::kb::{load_kb, KbStore, NIL_ID};
use fofe_link::par::Execution;
use fofe_link::pipeline::{run_pipeline, PipelineConfig, MODEL_FILE, REPORT_FILE};
use fofe_link::ranker::{
    gradient_check, softmax, Label, MentionInput, MentionInputs, RankerDims, RankerModel,
    TrainConfig,
};
use fofe_link::tensor::Matrix;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn all_sequences(v: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for t in 0..v {
                let mut s2: Vec<usize> = s.clone();
                s2.push(t);
                next.push(s2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn fofe_uniqueness() -> Outcome {
    let start = Instant::now();
    let vocab = Vocabulary::from_tokens(["a", "b", "c", "d", "e"]).unwrap();
    let seqs = all_sequences(5, 6);
    let tokens = |s: &[usize]| -> Vec<String> {
        s.iter()
            .map(|&i| vocab.token_at(i).unwrap().to_owned())
            .collect()
    };
    let codes: Vec<Vec<f64>> = seqs
        .iter()
        .map(|s| encode(&tokens(s), &vocab, 0.5).unwrap().values)
        .collect();
    let mut min_gap = f64::INFINITY;
    for i in 0..codes.len() {
        for j in (i + 1)..codes.len() {
            let gap = codes[i]
                .iter()
                .zip(&codes[j])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            min_gap = min_gap.min(gap);
        }
    }
    let mut decoded = 0;
    for s in &seqs {
        let code = encode(&tokens(s), &vocab, 0.5).unwrap();
        if decode_bruteforce(&code, &vocab, 6) == Ok(Some(tokens(s))) {
            decoded += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        min_gap > 1e-9 && decoded == seqs.len() && elapsed < Duration::from_secs(10),
        format!(
            "{} sequences, min pairwise L-inf gap {min_gap:.3e}, {decoded} decoded exactly, {:.2}s",
            seqs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn projection_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = rng.random_range(1..=12);
        let dim = rng.random_range(1..=16);
        let vocab = Vocabulary::from_tokens((0..v).map(|i| format!("w{i}"))).unwrap();
        let len = rng.random_range(0..=20);
        let seq: Vec<String> = (0..len)
            .map(|_| format!("w{}", rng.random_range(0..v)))
            .collect();
        let alpha = rng.random_range(0.05..0.95);
        let m = Matrix::<f64>::from_fn(v, dim, |_, _| rng.random_range(-1.0..1.0));
        let direct = encode_projected(&seq, &vocab, &m, alpha).unwrap();
        let code = encode(&seq, &vocab, alpha).unwrap();
        for (c, &d) in direct.iter().enumerate() {
            let explicit: f64 = (0..v).map(|r| code.values[r] * m.row(r)[c]).sum();
            worst = worst.max((explicit - d).abs());
        }
    }
    check(
        worst <= 1e-10,
        format!("100 pairs, max abs difference {worst:.3e}"),
    )
}

fn oracle_distill(
    mentions: usize,
    nodes: &[GraphNode],
    edges: &[(usize, usize)],
    tau: usize,
) -> Vec<Vec<(String, u32)>> {
    let mut lists: Vec<Vec<(u32, f64, String)>> = vec![Vec::new(); mentions];
    for (i, n) in nodes.iter().enumerate() {
        let score = edges
            .iter()
            .filter(|&&(a, b)| (a == i || b == i) && nodes[a].mention != nodes[b].mention)
            .count() as u32;
        lists[n.mention].push((score, n.similarity, n.id.clone()));
    }
    lists
        .into_iter()
        .map(|mut l| {
            l.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
            let mut out: Vec<(String, u32)> =
                l.into_iter().take(tau).map(|(s, _, id)| (id, s)).collect();
            out.push((NIL_ID.to_owned(), 0));
            out
        })
        .collect()
}

fn flatten(lists: &[Vec<ScoredCandidate>]) -> Vec<Vec<(String, u32)>> {
    lists
        .iter()
        .map(|l| l.iter().map(|c| (c.id.clone(), c.score)).collect())
        .collect()
}

fn distillation_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    for _ in 0..200 {
        let mentions = rng.random_range(1..=8);
        let mut nodes = Vec::new();
        for m in 0..mentions {
            let mut ids: Vec<usize> = (0..15).collect();
            ids.shuffle(&mut rng);
            for &id in ids.iter().take(rng.random_range(0..=10)) {
                nodes.push(GraphNode {
                    mention: m,
                    id: format!("e{id:02}"),
                    similarity: [0.5, 0.75, 1.0][rng.random_range(0..3)],
                });
            }
        }
        let p = rng.random_range(0.0..0.6);
        let mut edges = Vec::new();
        for a in 0..nodes.len() {
            for b in (a + 1)..nodes.len() {
                if nodes[a].mention != nodes[b].mention && rng.random_bool(p) {
                    edges.push((a, b));
                }
            }
        }
        let tau = rng.random_range(1..=12);
        let graph = DocCandidateGraph::from_edges(mentions, nodes.clone(), &edges).unwrap();
        if flatten(&distill(&graph, tau)) != oracle_distill(mentions, &nodes, &edges, tau) {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        failures == 0 && elapsed < Duration::from_secs(30),
        format!(
            "200 random graphs, {failures} mismatches, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn toy_graph_fixture() -> Outcome {
    let kb = load_kb(fixture_dir().join("toy_graph_kb.jsonl")).unwrap();
    let surfaces = ["United F.C.", "Lincolnshire", "Devon White"];
    let raw: Vec<Vec<RawCandidate>> = surfaces
        .iter()
        .map(|s| {
            kb.lookup_exact(s)
                .into_iter()
                .map(|e| RawCandidate {
                    entity: e,
                    id: kb.entity(e).id.clone(),
                    similarity: 1.0,
                })
                .collect()
        })
        .collect();
    let sizes: Vec<usize> = raw.iter().map(Vec::len).collect();
    let graph = DocCandidateGraph::build(&raw, &kb);
    let id = |n: usize| graph.nodes()[n].id.as_str();
    let intra = graph
        .edges()
        .iter()
        .filter(|&&(a, b)| graph.nodes()[a].mention == graph.nodes()[b].mention)
        .count();
    let edges: BTreeSet<(String, String)> = graph
        .edges()
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (id(a).to_owned(), id(b).to_owned());
            if x < y {
                (x, y)
            } else {
                (y, x)
            }
        })
        .collect();
    let pair = |a: &str, b: &str| (a.min(b).to_owned(), a.max(b).to_owned());
    let expected_edges: BTreeSet<(String, String)> = [
        pair("Lincoln_United_F.C.", "Lincolnshire"),
        pair("Lincoln_United_F.C.", "Devon_White_(footballer)"),
        pair("Boston_United_F.C.", "Lincolnshire"),
        pair("Boston_United_F.C.", "Devon_White_(footballer)"),
        pair("Lincolnshire", "Devon_White_(footballer)"),
    ]
    .into_iter()
    .collect();
    // hand-computed edge sums over the other two mentions
    let expected: Vec<Vec<(&str, u32)>> = vec![
        vec![
            ("Boston_United_F.C.", 2),
            ("Lincoln_United_F.C.", 2),
            ("Carlisle_United_F.C.", 0),
            (NIL_ID, 0),
        ],
        vec![
            ("Lincolnshire", 3),
            ("Lincolnshire_(UK_Parliament_constituency)", 0),
            (NIL_ID, 0),
        ],
        vec![
            ("Devon_White_(footballer)", 3),
            ("Devon_White_(baseball)", 0),
            (NIL_ID, 0),
        ],
    ];
    let expected: Vec<Vec<(String, u32)>> = expected
        .into_iter()
        .map(|l| l.into_iter().map(|(i, s)| (i.to_owned(), s)).collect())
        .collect();
    let got = flatten(&distill(&graph, 20));
    check(
        sizes == [3, 2, 2] && intra == 0 && edges == expected_edges && got == expected,
        format!(
            "candidates {sizes:?}, {} nodes, {} edges, {intra} intra-mention, scores match: {}",
            graph.nodes().len(),
            edges.len(),
            got == expected
        ),
    )
}

fn random_sparse(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, f64)> {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let mut v: Vec<(usize, f64)> = ids
        .into_iter()
        .take(rng.random_range(1..=3))
        .map(|i| (i, rng.random_range(0.1..1.0)))
        .collect();
    v.sort_by_key(|p| p.0);
    v
}

fn gradient_check_criterion() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let dims = RankerDims {
            vocab: 6,
            charset: 0,
            word_dim: 3,
            char_dim: 0,
            mention_dim: 3,
            context_dim: 4,
            description_dim: 3,
            hidden: 6,
        };
        // Glorot weights as in training; random biases keep pre-activations off the ReLU kink
        let mut model = RankerModel::<f64>::init(dims, &TrainConfig::default(), &mut rng);
        for (name, p) in model.params_mut() {
            if name.ends_with(".bias") {
                p.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            }
        }
        let inputs = MentionInputs {
            surface: MentionInput::Words(random_sparse(&mut rng, 6)),
            context: std::array::from_fn(|_| random_sparse(&mut rng, 6)),
        };
        let description = random_sparse(&mut rng, 6);
        for label in [Label::Correct, Label::Incorrect] {
            worst = worst.max(gradient_check(&model, &inputs, &description, label).unwrap());
        }
    }
    check(
        worst < 1e-4,
        format!("20 random tiny models, max relative error {worst:.3e}"),
    )
}

fn softmax_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut sum_err, mut shift_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let c = rng.random_range(-100.0..100.0);
        let p = softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        let q = softmax(&shifted);
        sum_err = sum_err.max((p.iter().sum::<f64>() - 1.0).abs());
        shift_err = p
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - b).abs())
            .fold(shift_err, f64::max);
    }
    check(
        sum_err <= 1e-6 && shift_err <= 1e-9,
        format!("1000 vectors, max |sum - 1| {sum_err:.3e}, max shift difference {shift_err:.3e}"),
    )
}

struct Runs {
    first: Result<(fofe_link::eval::EvalReport, Vec<u8>, Vec<u8>), String>,
    second: Result<(Vec<u8>, Vec<u8>), String>,
    elapsed: Duration,
    cfg: Option<PipelineConfig>,
    _dirs: Vec<tempfile::TempDir>,
}

fn synthetic_config(dir: &Path) -> PipelineConfig {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml");
    let mut cfg = PipelineConfig::load(&shipped).unwrap();
    cfg.paths.kb = dir.join("kb.jsonl");
    cfg.paths.corpus = dir.join("corpus.jsonl");
    cfg.paths.work_dir = dir.join("out");
    cfg
}

fn run_twice() -> Runs {
    let dirs = vec![tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let read = |cfg: &PipelineConfig| -> Result<(Vec<u8>, Vec<u8>), String> {
        let model =
            std::fs::read(cfg.paths.work_dir.join(MODEL_FILE)).map_err(|e| e.to_string())?;
        let report =
            std::fs::read(cfg.paths.work_dir.join(REPORT_FILE)).map_err(|e| e.to_string())?;
        Ok((model, report))
    };
    let cfg = synthetic_config(dirs[0].path());
    let start = Instant::now();
    let first = run_pipeline(&cfg).map_err(|e| format!("{e}"));
    let elapsed = start.elapsed();
    let first = first.and_then(|r| read(&cfg).map(|(m, p)| (r, m, p)));
    let cfg2 = synthetic_config(dirs[1].path());
    let second = run_pipeline(&cfg2)
        .map_err(|e| format!("{e}"))
        .and_then(|_| read(&cfg2));
    Runs {
        first,
        second,
        elapsed,
        cfg: Some(cfg),
        _dirs: dirs,
    }
}

fn synthetic_end_to_end(runs: &Runs) -> Outcome {
    let (report, _, _) = runs.first.as_ref().map_err(Clone::clone)?;
    check(
        report.candidate_recall >= 0.98
            && report.linking_accuracy >= 0.95
            && runs.elapsed < Duration::from_secs(300),
        format!(
            "held-out candidate recall {:.4}, linking accuracy {:.4}, {:.1}s",
            report.candidate_recall,
            report.linking_accuracy,
            runs.elapsed.as_secs_f64()
        ),
    )
}

fn extension_ablation(runs: &Runs) -> Outcome {
    let cfg = runs.cfg.as_ref().ok_or("no pipeline run")?;
    let kb = KbStore::from_entities(
        fofe_link::corpus::read_jsonl(&cfg.paths.kb).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let docs = read_corpus(&cfg.paths.corpus).map_err(|e| e.to_string())?;
    let gold: Vec<Option<String>> = docs
        .iter()
        .flat_map(|d| d.mentions.iter().map(|m| m.gold_entity_id.clone()))
        .collect();
    let recall = |extensions: Extensions| {
        let mut opts = cfg.candidate_options();
        opts.extensions = extensions;
        let lists = generate_corpus(&docs, &kb, &opts, Execution::Parallel);
        let ids: Vec<Vec<String>> = lists
            .iter()
            .map(|l| l.candidates.iter().map(|c| c.id.clone()).collect())
            .collect();
        candidate_recall(&ids, &gold).unwrap()
    };
    let with = recall(cfg.candidate_options().extensions);
    let without = recall(Extensions::none());
    check(
        without < with,
        format!("candidate recall {with:.4} with extensions, {without:.4} without"),
    )
}

fn brute_force_ceaf(pred: &[Vec<usize>], gold: &[Vec<usize>]) -> usize {
    let n = pred.len().max(gold.len());
    let cluster = |c: &[Vec<usize>], i: usize| -> BTreeSet<usize> {
        c.get(i)
            .map(|v| v.iter().copied().collect())
            .unwrap_or_default()
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = 0;
    fn permutations(k: usize, perm: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if k == perm.len() {
            visit(perm);
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            permutations(k + 1, perm, visit);
            perm.swap(k, i);
        }
    }
    permutations(0, &mut perm, &mut |p: &[usize]| {
        let total = (0..n)
            .map(|i| cluster(pred, i).intersection(&cluster(gold, p[i])).count())
            .sum();
        best = best.max(total);
    });
    best
}

fn random_partition(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for m in 0..n {
        by_label.entry(rng.random_range(0..n)).or_default().push(m);
    }
    by_label.into_values().collect()
}

fn ceaf_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let pred = random_partition(&mut rng, n);
        let gold = random_partition(&mut rng, n);
        let score = ceaf_m(&pred, &gold).unwrap();
        let best = brute_force_ceaf(&pred, &gold);
        let p = best as f64 / n as f64;
        let f1 = if p == 0.0 { 0.0 } else { 2.0 * p * p / (p + p) };
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        if score.overlap != best
            || !close(score.precision, p)
            || !close(score.recall, p)
            || !close(score.f1, f1)
        {
            failures += 1;
        }
    }
    check(
        failures == 0,
        format!("100 random partition pairs, {failures} mismatches"),
    )
}

fn determinism(runs: &Runs) -> Outcome {
    let (_, model_a, report_a) = runs.first.as_ref().map_err(Clone::clone)?;
    let (model_b, report_b) = runs.second.as_ref().map_err(Clone::clone)?;
    check(
        model_a == model_b && report_a == report_b,
        format!(
            "model files identical: {}, reports identical: {}",
            model_a == model_b,
            report_a == report_b
        ),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "FOFE uniqueness", guarded(fofe_uniqueness)),
        (2, "projection equivalence", guarded(projection_equivalence)),
        (3, "distillation oracle", guarded(distillation_oracle)),
        (4, "toy document graph fixture", guarded(toy_graph_fixture)),
        (5, "gradient check", guarded(gradient_check_criterion)),
        (6, "softmax contract", guarded(softmax_contract)),
    ];
    let runs = catch_unwind(run_twice).ok();
    let missing = || Err("pipeline runs panicked".to_string());
    results.push((
        7,
        "synthetic end-to-end",
        runs.as_ref()
            .map_or_else(missing, |r| guarded(|| synthetic_end_to_end(r))),
    ));
    results.push((
        8,
        "extension ablation",
        runs.as_ref()
            .map_or_else(missing, |r| guarded(|| extension_ablation(r))),
    ));
    results.push((9, "CEAF-m brute force", guarded(ceaf_brute_force)));
    results.push((
        10,
        "determinism",
        runs.as_ref()
            .map_or_else(missing, |r| guarded(|| determinism(r))),
    ));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
