//! Deterministic synthetic knowledge base and corpus.
//!
//! Entities come in groups of `ambiguity` members that share one name, and no two groups
//! share a name token. Every member of a group belongs to a different topic, and its
//! description is drawn from that topic's vocabulary. Each document has one topic, and every mention sits in its own sentence
//! whose context words come from the document topic, so the right group member is the
//! one whose description shares that vocabulary. NIL mentions reuse a group name none of
//! whose members belong to the document topic.
//!
//! Besides full names, documents contain mentions that only resolve through extensions:
//! single-token short forms of a name spelled out elsewhere in the document, and nominal
//! mentions ("the company") that directly follow their antecedent. The members of a GPE
//! group may share an initials abbreviation that is used as a surface.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_jsonl, Document, MentionKind, MentionRecord};
use crate::error::{Error, Result};
use crate::kb::{EntityType, KbEntity, KbStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_entities: usize,
    pub n_docs: usize,
    pub mentions_per_doc: usize,
    /// Entities sharing each name.
    pub ambiguity: usize,
    pub nil_fraction: f64,
    /// Probability that two entities of the same topic link to each other.
    pub link_density: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_entities: 500,
            n_docs: 200,
            mentions_per_doc: 10,
            ambiguity: 3,
            nil_fraction: 0.2,
            link_density: 0.3,
            seed: 42,
        }
    }
}

const MIN_TOPICS: usize = 10;
const TOPIC_WORDS: usize = 8;
const NAME_WORDS: usize = 600;
const NAME_TOKENS: usize = 3;
/// Keeps the distinct-name-token demand well inside the pseudo-word space.
const MAX_GROUPS: usize = 4000;
const DESCRIPTION_TOPIC_WORDS: usize = 8;
const CONTEXT_TOPIC_WORDS: usize = 6;
const REFERENCE_RATE: f64 = 0.35;
const ABBREVIATION_RATE: f64 = 0.3;

const FILLERS: &[&str] = &[
    "the",
    "of",
    "and",
    "in",
    "on",
    "with",
    "for",
    "from",
    "reported",
    "said",
    "after",
    "during",
    "near",
    "about",
    "new",
    "local",
    "officials",
    "week",
    "today",
    "again",
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ra", "ven", "tos", "dri", "bel", "sun", "ga", "thor", "pel", "qui", "zan",
    "mor", "li", "dex", "fa", "nu", "ser", "vo", "ha", "kri", "ton", "ul", "bre", "sa", "jo",
    "wen", "cas",
];

fn nominal(ty: EntityType) -> &'static str {
    match ty {
        EntityType::Per => "the official",
        EntityType::Org => "the company",
        EntityType::Gpe => "the city",
        EntityType::Loc => "the region",
        EntityType::Fac => "the building",
    }
}

fn type_noun(ty: EntityType) -> &'static str {
    match ty {
        EntityType::Per => "person",
        EntityType::Org => "organization",
        EntityType::Gpe => "place",
        EntityType::Loc => "area",
        EntityType::Fac => "facility",
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_entities", self.n_entities),
            ("n_docs", self.n_docs),
            ("mentions_per_doc", self.mentions_per_doc),
            ("ambiguity", self.ambiguity),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!(
                "synthetic {name} must be at least 1"
            )));
        }
        if self.ambiguity > self.n_entities {
            return Err(Error::Config(
                "synthetic ambiguity exceeds the number of entities".into(),
            ));
        }
        if self.groups() > MAX_GROUPS {
            return Err(Error::Config(format!(
                "synthetic n_entities / ambiguity must be at most {MAX_GROUPS}, got {}",
                self.groups()
            )));
        }
        for (name, v) in [
            ("nil_fraction", self.nil_fraction),
            ("link_density", self.link_density),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "synthetic {name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }

    fn groups(&self) -> usize {
        self.n_entities / self.ambiguity
    }

    fn name_words(&self) -> usize {
        NAME_WORDS.max(NAME_TOKENS * self.groups())
    }

    fn topics(&self) -> usize {
        MIN_TOPICS.max(self.ambiguity + 2)
    }
}

struct Group {
    name: String,
    entity_type: EntityType,
    members: Vec<usize>,
    /// Single name token that matches no KB name, alias or fuzzy key.
    short_form: Option<String>,
}

struct Vocab {
    names: Vec<String>,
    topics: Vec<Vec<String>>,
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

fn pseudo_words(
    rng: &mut ChaCha8Rng,
    n: usize,
    syllables: std::ops::RangeInclusive<usize>,
) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = rng.random_range(syllables.clone());
        let w: String = (0..k)
            .map(|_| *SYLLABLES.choose(rng).expect("nonempty"))
            .collect();
        if !FILLERS.contains(&w.as_str()) && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn make_vocab(rng: &mut ChaCha8Rng, topics: usize, name_words: usize) -> Vocab {
    let words = pseudo_words(rng, name_words + topics * TOPIC_WORDS, 2..=3);
    let (names, topic_words) = words.split_at(name_words);
    Vocab {
        names: names.iter().map(|w| capitalize(w)).collect(),
        topics: topic_words
            .chunks(TOPIC_WORDS)
            .map(<[String]>::to_vec)
            .collect(),
    }
}

struct Built {
    entities: Vec<KbEntity>,
    topic_of: Vec<usize>,
    groups: Vec<Group>,
    group_of: Vec<usize>,
}

fn build_kb(spec: &SyntheticSpec, rng: &mut ChaCha8Rng, vocab: &Vocab) -> Result<Built> {
    let n_topics = spec.topics();
    let n_groups = spec.groups();
    // groups never share a name token, so fuzzy matches stay within a group
    let mut tokens = vocab.names.clone();
    tokens.shuffle(rng);
    let mut groups: Vec<Group> = Vec::with_capacity(n_groups);
    for (g, name) in tokens.chunks_exact(NAME_TOKENS).take(n_groups).enumerate() {
        groups.push(Group {
            name: name.join(" "),
            entity_type: EntityType::ALL[g % EntityType::ALL.len()],
            members: Vec::new(),
            short_form: None,
        });
    }
    let mut group_of = Vec::with_capacity(spec.n_entities);
    for e in 0..spec.n_entities {
        let g = (e / spec.ambiguity).min(n_groups - 1);
        groups[g].members.push(e);
        group_of.push(g);
    }

    // members of a group get distinct topics; an oversized last group wraps around
    let mut topic_of = vec![0; spec.n_entities];
    for group in &groups {
        let mut order: Vec<usize> = (0..n_topics).collect();
        order.shuffle(rng);
        for (k, &e) in group.members.iter().enumerate() {
            topic_of[e] = order[k % n_topics];
        }
    }

    let mut entities: Vec<KbEntity> = (0..spec.n_entities)
        .map(|e| {
            let group = &groups[group_of[e]];
            let topic = &vocab.topics[topic_of[e]];
            let mut words: Vec<String> = topic
                .choose_multiple(rng, DESCRIPTION_TOPIC_WORDS)
                .cloned()
                .collect();
            words.extend(FILLERS.choose_multiple(rng, 4).map(|s| s.to_string()));
            words.shuffle(rng);
            KbEntity {
                id: format!("e{e:05}"),
                name: group.name.clone(),
                entity_type: group.entity_type,
                aliases: Vec::new(),
                description: format!(
                    "{} is a {} {}.",
                    group.name,
                    type_noun(group.entity_type),
                    words.join(" ")
                ),
                links: Vec::new(),
            }
        })
        .collect();

    // abbreviation alias shared by every member of a GPE group, kept only when no other group has it
    let mut abbreviations: HashMap<String, Vec<usize>> = HashMap::new();
    for (g, group) in groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.entity_type == EntityType::Gpe)
    {
        let abbr: String = group
            .name
            .split(' ')
            .filter_map(|t| t.chars().next())
            .collect();
        abbreviations.entry(abbr).or_default().push(g);
    }
    let taken: BTreeSet<String> = groups.iter().map(|g| g.name.to_uppercase()).collect();
    let mut abbreviations: Vec<(String, Vec<usize>)> = abbreviations.into_iter().collect();
    abbreviations.sort();
    for (abbr, owners) in abbreviations {
        if owners.len() == 1 && !taken.contains(&abbr) {
            for &e in &groups[owners[0]].members {
                entities[e].aliases.push(abbr.clone());
            }
        }
    }

    if spec.link_density > 0.0 {
        for a in 0..spec.n_entities {
            for b in a + 1..spec.n_entities {
                if topic_of[a] == topic_of[b] && rng.random_bool(spec.link_density) {
                    let id_b = entities[b].id.clone();
                    entities[a].links.push(id_b);
                    let id_a = entities[a].id.clone();
                    entities[b].links.push(id_a);
                }
            }
        }
    }

    let kb = KbStore::from_entities(entities.clone())?;
    for group in &mut groups {
        let full = group.name.chars().count();
        group.short_form = group
            .name
            .split(' ')
            .filter(|t| 2 * t.chars().count() < full)
            .find(|t| kb.lookup_exact(t).is_empty() && kb.lookup_fuzzy(t, 1).is_empty())
            .map(str::to_string);
    }
    Ok(Built {
        entities,
        topic_of,
        groups,
        group_of,
    })
}

#[derive(Clone)]
enum Surface {
    Full,
    Abbreviation,
    Short,
    Nominal,
}

#[derive(Clone)]
struct Slot {
    /// Gold entity; `None` for NIL.
    entity: Option<usize>,
    group: usize,
    surface: Surface,
    left: Vec<String>,
    right: Vec<String>,
}

fn context(rng: &mut ChaCha8Rng, topic: &[String]) -> (Vec<String>, Vec<String>) {
    let side = |rng: &mut ChaCha8Rng| {
        let mut w: Vec<String> = topic
            .choose_multiple(rng, CONTEXT_TOPIC_WORDS)
            .cloned()
            .collect();
        w.push(FILLERS.choose(rng).expect("nonempty").to_string());
        w.shuffle(rng);
        w
    };
    let left = side(rng);
    (left, side(rng))
}

fn surface_text(slot: &Slot, built: &Built) -> String {
    let group = &built.groups[slot.group];
    match slot.surface {
        Surface::Full => group.name.clone(),
        Surface::Abbreviation => {
            built.entities[slot.entity.expect("abbreviations are linked")].aliases[0].clone()
        }
        Surface::Short => group.short_form.clone().expect("short form exists"),
        Surface::Nominal => nominal(group.entity_type).to_string(),
    }
}

fn push(text: &mut String, len: &mut usize, s: &str) {
    text.push_str(s);
    *len += s.chars().count();
}

fn render(doc_id: String, slots: &[Slot], built: &Built) -> Document {
    let mut text = String::new();
    let mut len = 0usize;
    let mut mentions = Vec::with_capacity(slots.len());
    for slot in slots {
        if !text.is_empty() {
            text.push(' ');
            len += 1;
        }
        let left = capitalize(&slot.left.join(" "));
        push(&mut text, &mut len, &left);
        push(&mut text, &mut len, " ");
        let surface = surface_text(slot, built);
        let start = len;
        push(&mut text, &mut len, &surface);
        let end = len;
        push(&mut text, &mut len, " ");
        push(&mut text, &mut len, &slot.right.join(" "));
        push(&mut text, &mut len, ".");
        let group = &built.groups[slot.group];
        mentions.push(MentionRecord {
            start,
            end,
            entity_type: group.entity_type,
            kind: match slot.surface {
                Surface::Nominal => MentionKind::Nominal,
                _ => MentionKind::Named,
            },
            gold_entity_id: slot.entity.map(|e| built.entities[e].id.clone()),
            gold_nil_cluster: slot
                .entity
                .is_none()
                .then(|| format!("nil-{:05}", slot.group)),
        });
    }
    Document {
        doc_id,
        text,
        mentions,
    }
}

/// Index of the named mention the nominal extension would pick for mention `i`.
fn nearest_named(doc: &Document, i: usize) -> Option<usize> {
    let m = &doc.mentions[i];
    doc.mentions
        .iter()
        .enumerate()
        .filter(|(j, o)| *j != i && o.kind == MentionKind::Named && o.entity_type == m.entity_type)
        .min_by_key(|(_, o)| {
            let d = if o.end <= m.start {
                m.start - o.end
            } else if o.start >= m.end {
                o.start - m.end
            } else {
                0
            };
            (d, o.start)
        })
        .map(|(j, _)| j)
}

fn build_doc(
    d: usize,
    spec: &SyntheticSpec,
    rng: &mut ChaCha8Rng,
    vocab: &Vocab,
    built: &Built,
) -> Document {
    let n_topics = spec.topics();
    let topic = rng.random_range(0..n_topics);
    let words = &vocab.topics[topic];
    let in_topic: Vec<usize> = (0..spec.n_entities)
        .filter(|&e| built.topic_of[e] == topic)
        .collect();
    let nil_groups: Vec<usize> = (0..built.groups.len())
        .filter(|&g| {
            built.groups[g]
                .members
                .iter()
                .all(|&e| built.topic_of[e] != topic)
        })
        .collect();

    let mut slots: Vec<Slot> = Vec::with_capacity(spec.mentions_per_doc);
    let mut mentioned: Vec<usize> = Vec::new();
    for _ in 0..spec.mentions_per_doc {
        let (left, right) = context(rng, words);
        if rng.random_bool(spec.nil_fraction) {
            if let Some(&group) = nil_groups.choose(rng) {
                slots.push(Slot {
                    entity: None,
                    group,
                    surface: Surface::Full,
                    left,
                    right,
                });
            }
            continue;
        }
        if in_topic.is_empty() {
            continue;
        }
        let previous = slots.last().and_then(|s| s.entity);
        if !mentioned.is_empty() && rng.random_bool(REFERENCE_RATE) {
            let e = *mentioned.choose(rng).expect("nonempty");
            let group = built.group_of[e];
            let surface = if previous == Some(e) && rng.random_bool(0.5) {
                Surface::Nominal
            } else if built.groups[group].short_form.is_some()
                && slots
                    .iter()
                    .any(|s| s.entity == Some(e) && matches!(s.surface, Surface::Full))
            {
                Surface::Short
            } else {
                Surface::Full
            };
            slots.push(Slot {
                entity: Some(e),
                group,
                surface,
                left,
                right,
            });
            continue;
        }
        let e = *in_topic.choose(rng).expect("nonempty");
        let surface = if !built.entities[e].aliases.is_empty() && rng.random_bool(ABBREVIATION_RATE)
        {
            Surface::Abbreviation
        } else {
            Surface::Full
        };
        mentioned.push(e);
        slots.push(Slot {
            entity: Some(e),
            group: built.group_of[e],
            surface,
            left,
            right,
        });
    }

    // a nominal whose nearest same-type named mention is not its exactly-matching antecedent is spelled out
    loop {
        let doc = render(format!("doc{d:04}"), &slots, built);
        let bad = (0..slots.len()).find(|&i| {
            matches!(slots[i].surface, Surface::Nominal)
                && nearest_named(&doc, i).is_none_or(|j| {
                    i == 0
                        || j != i - 1
                        || slots[j].entity != slots[i].entity
                        || !matches!(slots[j].surface, Surface::Full | Surface::Abbreviation)
                })
        });
        match bad {
            Some(i) => slots[i].surface = Surface::Full,
            None => return doc,
        }
    }
}

/// Generate a knowledge base and a gold-labelled corpus. Identical specs give identical output.
pub fn synthesize(spec: &SyntheticSpec) -> Result<(Vec<KbEntity>, Vec<Document>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = make_vocab(&mut rng, spec.topics(), spec.name_words());
    let built = build_kb(spec, &mut rng, &vocab)?;
    let docs = (0..spec.n_docs)
        .map(|d| build_doc(d, spec, &mut rng, &vocab, &built))
        .collect();
    Ok((built.entities, docs))
}

/// Generate and write the KB and corpus JSONL files.
pub fn write_synthetic(spec: &SyntheticSpec, kb_path: &Path, corpus_path: &Path) -> Result<()> {
    let (entities, docs) = synthesize(spec)?;
    write_jsonl(kb_path, &entities)?;
    write_jsonl(corpus_path, &docs)
}
