//! End-to-end runs: configuration, stage drivers and artifact files.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::candidates::{
    generate_corpus, CandidateList, CandidateOptions, DictionaryExtension, Extensions,
};
use crate::corpus::{read_corpus, write_jsonl, Document};
use crate::error::{Error, Result, StageExt};
use crate::eval::{evaluate, EvalReport, MentionOutcome};
use crate::kb::{load_kb, write_index, EntityType, KbStore, DEFAULT_FLOOR, DEFAULT_LIMIT, NIL_ID};
use crate::nil::{cluster_nils, MentionRef};
use crate::par::Execution;
use crate::ranker::{train, Prediction, RankerModel, TrainConfig};
use crate::synth::{write_synthetic, SyntheticSpec};

pub const SEED_ENV: &str = "FOFE_LINK_SEED";
pub const DEFAULT_HOLDOUT: f64 = 0.2;

pub const KB_INDEX_FILE: &str = "kb.idx";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const MODEL_FILE: &str = "model.bin";
pub const HELDOUT_FILE: &str = "heldout.jsonl";
pub const LINKS_FILE: &str = "links.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// KB JSONL. Written first when a `[synth]` section is present.
    pub kb: PathBuf,
    /// Corpus JSONL. Written first when a `[synth]` section is present.
    pub corpus: PathBuf,
    /// Directory receiving every artifact of a run.
    pub work_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            kb: "kb.jsonl".into(),
            corpus: "corpus.jsonl".into(),
            work_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateConfig {
    pub fuzzy_floor: f64,
    pub fuzzy_limit: usize,
    pub substring: bool,
    pub country: bool,
    pub nominal: bool,
    /// Extension dictionaries by name, each mapping a surface to its rewrites.
    pub dictionaries: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self {
            fuzzy_floor: DEFAULT_FLOOR,
            fuzzy_limit: DEFAULT_LIMIT,
            substring: true,
            country: true,
            nominal: true,
            dictionaries: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides `train.seed` and `synth.seed` when set.
    pub seed: Option<u64>,
    /// Share of documents, taken from the end of the corpus, held out for evaluation.
    pub holdout_fraction: f64,
    pub execution: Execution,
    pub paths: Paths,
    pub synth: Option<SyntheticSpec>,
    pub candidates: CandidateConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            holdout_fraction: DEFAULT_HOLDOUT,
            execution: Execution::default(),
            paths: Paths::default(),
            synth: None,
            candidates: CandidateConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.propagate_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file. Relative paths inside it are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        resolve(base, &mut cfg.paths.kb);
        resolve(base, &mut cfg.paths.corpus);
        resolve(base, &mut cfg.paths.work_dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    fn propagate_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.train.seed = seed;
            if let Some(s) = &mut self.synth {
                s.seed = seed;
            }
        }
    }

    /// Apply a seed override taken from the environment value `value`.
    pub fn override_seed(&mut self, value: &str) -> Result<()> {
        let seed = value.trim().parse::<u64>().map_err(|_| {
            Error::Config(format!(
                "{SEED_ENV} must be an unsigned integer, got `{value}`"
            ))
        })?;
        self.seed = Some(seed);
        self.propagate_seed();
        Ok(())
    }

    /// Apply `FOFE_LINK_SEED` when it is set.
    pub fn apply_env(&mut self) -> Result<()> {
        match std::env::var(SEED_ENV) {
            Ok(v) => self.override_seed(&v),
            Err(_) => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!(
                "holdout_fraction must lie in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        self.train.validate()?;
        self.candidate_options().validate()
    }

    pub fn candidate_options(&self) -> CandidateOptions {
        let c = &self.candidates;
        let mut extensions = Extensions {
            substring: c.substring,
            country: c.country,
            nominal: c.nominal,
            plugins: Vec::new(),
        };
        for (name, entries) in &c.dictionaries {
            extensions =
                extensions.with_plugin(DictionaryExtension::new(name.clone(), entries.clone()));
        }
        CandidateOptions {
            tau: self.train.tau,
            fuzzy_floor: c.fuzzy_floor,
            fuzzy_limit: c.fuzzy_limit,
            extensions,
        }
    }
}

/// One line of the links file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub doc_id: String,
    pub mention_index: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    /// Linked KB id, or `NIL`.
    pub entity_id: String,
    pub probability: f64,
    /// Cluster of a NIL-linked mention; `null` otherwise.
    pub nil_cluster_id: Option<String>,
    /// Candidate ids the ranker chose from, NIL last.
    pub candidates: Vec<String>,
}

/// Attach predictions and NIL clusters to candidate lists.
pub fn link_records(
    lists: &[CandidateList],
    predictions: &[Prediction],
) -> Result<Vec<LinkRecord>> {
    if lists.len() != predictions.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} candidate lists",
            predictions.len(),
            lists.len()
        )));
    }
    let nil_mentions: Vec<_> = lists
        .iter()
        .zip(predictions)
        .filter(|(_, p)| p.is_nil())
        .map(|(l, _)| l.mention.clone())
        .collect();
    let mut cluster_of: HashMap<MentionRef, String> = HashMap::new();
    for c in cluster_nils(&nil_mentions) {
        for m in c.members {
            cluster_of.insert(m, c.cluster_id.clone());
        }
    }
    Ok(lists
        .iter()
        .zip(predictions)
        .map(|(l, p)| {
            let m = &l.mention;
            LinkRecord {
                doc_id: m.doc_id.clone(),
                mention_index: m.index,
                start: m.start,
                end: m.end,
                surface: m.surface.clone(),
                entity_type: m.entity_type,
                entity_id: p.entity_id.clone(),
                probability: p.probability,
                nil_cluster_id: cluster_of.get(&MentionRef::from(m)).cloned(),
                candidates: l.candidates.iter().map(|c| c.id.clone()).collect(),
            }
        })
        .collect())
}

/// Join gold documents with link records. Every gold mention needs exactly one record.
pub fn evaluate_links(gold: &[Document], links: &[LinkRecord]) -> Result<EvalReport> {
    let mut by_mention: HashMap<(&str, usize), &LinkRecord> = HashMap::with_capacity(links.len());
    for l in links {
        if by_mention
            .insert((l.doc_id.as_str(), l.mention_index), l)
            .is_some()
        {
            return Err(Error::Validation(format!(
                "duplicate prediction for {} mention {}",
                l.doc_id, l.mention_index
            )));
        }
    }
    let total: usize = gold.iter().map(|d| d.mentions.len()).sum();
    if total != links.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {total} gold mentions",
            links.len()
        )));
    }
    let mut outcomes = Vec::with_capacity(total);
    for d in gold {
        for (i, m) in d.mentions.iter().enumerate() {
            let l = by_mention.get(&(d.doc_id.as_str(), i)).ok_or_else(|| {
                Error::Validation(format!("no prediction for {} mention {i}", d.doc_id))
            })?;
            let mention = d.mention(i);
            outcomes.push(MentionOutcome {
                mention: MentionRef::from(&mention),
                surface: mention.surface,
                entity_type: m.entity_type,
                gold: m.gold_entity_id.clone(),
                gold_nil_cluster: m.gold_nil_cluster.clone(),
                candidates: l.candidates.clone(),
                predicted: l.entity_id.clone(),
                nil_cluster_id: l.nil_cluster_id.clone(),
            });
        }
    }
    evaluate(&outcomes)
}

/// Split documents into training and held-out parts; the held-out part is the tail.
pub fn split_holdout(docs: &[Document], fraction: f64) -> (&[Document], &[Document]) {
    let held = ((docs.len() as f64) * fraction).round() as usize;
    docs.split_at(docs.len() - held.min(docs.len()))
}

fn timed<T>(stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f().stage(stage)?;
    info!("{stage}: {:.2}s", t.elapsed().as_secs_f64());
    Ok(out)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Stage `build-kb`: load KB JSONL and write the binary index.
pub fn build_kb(kb_jsonl: &Path, index: &Path) -> Result<KbStore> {
    let kb = load_kb(kb_jsonl)?;
    write_index(&kb, index)?;
    info!(
        "knowledge base: {} entities, {} vocabulary entries",
        kb.len(),
        kb.vocab().len()
    );
    Ok(kb)
}

/// Run every stage. Artifacts land in `paths.work_dir`; the report is also returned.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let work = &cfg.paths.work_dir;
    let exec = cfg.execution;
    if let Some(spec) = &cfg.synth {
        timed("synth", || {
            for p in [&cfg.paths.kb, &cfg.paths.corpus] {
                if let Some(dir) = p.parent() {
                    ensure_dir(dir)?;
                }
            }
            write_synthetic(spec, &cfg.paths.kb, &cfg.paths.corpus)
        })?;
    }
    timed("setup", || ensure_dir(work))?;

    let kb = timed("build-kb", || {
        build_kb(&cfg.paths.kb, &work.join(KB_INDEX_FILE))
    })?;
    let docs = timed("read-corpus", || read_corpus(&cfg.paths.corpus))?;
    let (train_docs, heldout) = split_holdout(&docs, cfg.holdout_fraction);
    info!(
        "{} training and {} held-out documents",
        train_docs.len(),
        heldout.len()
    );

    let opts = cfg.candidate_options();
    let lists = timed("gen-candidates", || {
        let lists = generate_corpus(&docs, &kb, &opts, exec);
        write_jsonl(work.join(CANDIDATES_FILE), &lists)?;
        info!("{} candidate lists", lists.len());
        Ok(lists)
    })?;
    let n_train: usize = train_docs.iter().map(|d| d.mentions.len()).sum();
    let (train_lists, heldout_lists) = lists.split_at(n_train);

    let model = timed("train", || {
        let model = train(train_docs, train_lists, &kb, &cfg.train, exec)?;
        crate::ranker::write_model(&work.join(MODEL_FILE), &model)?;
        Ok(model)
    })?;

    let links = timed("link", || {
        let predictions = model.link(heldout, heldout_lists, &kb, exec)?;
        let links = link_records(heldout_lists, &predictions)?;
        write_jsonl(work.join(HELDOUT_FILE), heldout)?;
        write_jsonl(work.join(LINKS_FILE), &links)?;
        Ok(links)
    })?;

    timed("eval", || {
        let report = evaluate_links(heldout, &links)?;
        let path = work.join(REPORT_FILE);
        std::fs::write(&path, report.to_json()).map_err(|e| Error::io(&path, e))?;
        info!(
            "held-out: recall {:.4}, accuracy {:.4}, ceaf_m F1 {:.4}",
            report.candidate_recall, report.linking_accuracy, report.ceaf_m.f1
        );
        Ok(report)
    })
}

/// Stage `link` on its own: rank prepared candidate lists with a saved model.
pub fn link_corpus(
    model: &RankerModel<f32>,
    docs: &[Document],
    lists: &[CandidateList],
    kb: &KbStore,
    exec: Execution,
) -> Result<Vec<LinkRecord>> {
    let predictions = model.link(docs, lists, kb, exec)?;
    link_records(lists, &predictions)
}

/// Predicted NIL count, for logging.
pub fn nil_count(links: &[LinkRecord]) -> usize {
    links.iter().filter(|l| l.entity_id == NIL_ID).count()
}
