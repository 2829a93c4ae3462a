use fofe_link::candidates::{generate_corpus, CandidateOptions};
use fofe_link::corpus::{read_corpus, read_jsonl, MentionKind};
use fofe_link::kb::{KbEntity, KbStore};
use fofe_link::par::Execution;
use fofe_link::synth::{synthesize, write_synthetic, SyntheticSpec};

fn small(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_entities: 120,
        n_docs: 40,
        mentions_per_doc: 6,
        seed,
        ..SyntheticSpec::default()
    }
}

#[test]
fn same_spec_gives_identical_output() {
    let a = synthesize(&small(9)).unwrap();
    let b = synthesize(&small(9)).unwrap();
    assert_eq!(a, b);
    let c = synthesize(&small(10)).unwrap();
    assert_ne!(a.1, c.1);
}

#[test]
fn zero_nil_fraction_gives_no_nil_mentions() {
    let spec = SyntheticSpec {
        nil_fraction: 0.0,
        ..small(3)
    };
    let (_, docs) = synthesize(&spec).unwrap();
    let mentions: Vec<_> = docs.iter().flat_map(|d| &d.mentions).collect();
    assert!(!mentions.is_empty());
    assert!(mentions.iter().all(|m| m.gold_entity_id.is_some()));
}

#[test]
fn nil_mentions_exist_at_the_default_fraction() {
    let (_, docs) = synthesize(&small(3)).unwrap();
    let nil = docs
        .iter()
        .flat_map(|d| &d.mentions)
        .filter(|m| m.gold_entity_id.is_none())
        .count();
    assert!(nil > 0);
    assert!(docs
        .iter()
        .flat_map(|d| &d.mentions)
        .filter(|m| m.gold_entity_id.is_none())
        .all(|m| m.gold_nil_cluster.is_some()));
}

#[test]
fn every_named_surface_matches_at_least_ambiguity_entities() {
    let spec = SyntheticSpec {
        ambiguity: 3,
        ..small(5)
    };
    let (entities, docs) = synthesize(&spec).unwrap();
    let kb = KbStore::from_entities(entities.clone()).unwrap();
    let token_owners = |t: &str| {
        entities
            .iter()
            .filter(|e| e.name.split(' ').any(|w| w == t))
            .count()
    };
    let mut checked = 0;
    for doc in &docs {
        for m in doc.resolved_mentions() {
            if m.kind == MentionKind::Nominal {
                continue;
            }
            let exact = kb.lookup_exact(&m.surface).len();
            let matches = exact.max(token_owners(&m.surface));
            assert!(matches >= 3, "`{}` matches {matches} entities", m.surface);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn gold_entities_share_type_and_name_with_their_group() {
    let (entities, docs) = synthesize(&small(2)).unwrap();
    let by_id = |id: &str| entities.iter().find(|e| e.id == id).unwrap();
    for doc in &docs {
        for (i, r) in doc.mentions.iter().enumerate() {
            if let Some(id) = &r.gold_entity_id {
                let e: &KbEntity = by_id(id);
                assert_eq!(e.entity_type, r.entity_type);
                let m = doc.mention(i);
                if m.kind == MentionKind::Named {
                    let hit = e.name == m.surface
                        || e.aliases.contains(&m.surface)
                        || e.name.split(' ').any(|t| t == m.surface);
                    assert!(hit, "`{}` does not name {}", m.surface, e.name);
                }
            }
        }
    }
}

#[test]
fn zero_link_density_gives_edgeless_graphs() {
    let spec = SyntheticSpec {
        link_density: 0.0,
        ..small(4)
    };
    let (entities, docs) = synthesize(&spec).unwrap();
    assert!(entities.iter().all(|e| e.links.is_empty()));
    let kb = KbStore::from_entities(entities).unwrap();
    let lists = generate_corpus(
        &docs,
        &kb,
        &CandidateOptions::default(),
        Execution::Sequential,
    );
    assert!(!lists.is_empty());
    assert!(lists
        .iter()
        .flat_map(|l| &l.candidates)
        .all(|c| c.score == 0));
}

#[test]
fn positive_link_density_gives_scored_candidates() {
    let (entities, docs) = synthesize(&small(4)).unwrap();
    let kb = KbStore::from_entities(entities).unwrap();
    let lists = generate_corpus(
        &docs,
        &kb,
        &CandidateOptions::default(),
        Execution::Sequential,
    );
    assert!(lists
        .iter()
        .flat_map(|l| &l.candidates)
        .any(|c| c.score > 0));
}

#[test]
fn gold_entities_are_reachable_by_the_candidate_generator() {
    let (entities, docs) = synthesize(&small(6)).unwrap();
    let kb = KbStore::from_entities(entities).unwrap();
    let lists = generate_corpus(
        &docs,
        &kb,
        &CandidateOptions::default(),
        Execution::Sequential,
    );
    let gold: Vec<Option<String>> = docs
        .iter()
        .flat_map(|d| d.mentions.iter().map(|m| m.gold_entity_id.clone()))
        .collect();
    assert_eq!(gold.len(), lists.len());
    let found = lists
        .iter()
        .zip(&gold)
        .filter(|(l, g)| g.as_deref().is_none_or(|id| l.contains(id)))
        .count();
    assert!(
        found as f64 / gold.len() as f64 >= 0.95,
        "{found} of {}",
        gold.len()
    );
}

#[test]
fn written_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (kb_path, corpus_path) = (dir.path().join("kb.jsonl"), dir.path().join("corpus.jsonl"));
    write_synthetic(&small(1), &kb_path, &corpus_path).unwrap();
    let (entities, docs) = synthesize(&small(1)).unwrap();
    assert_eq!(read_jsonl::<KbEntity>(&kb_path).unwrap(), entities);
    assert_eq!(read_corpus(&corpus_path).unwrap(), docs);
}

#[test]
fn invalid_specs_are_rejected() {
    for spec in [
        SyntheticSpec {
            n_entities: 0,
            ..small(0)
        },
        SyntheticSpec {
            nil_fraction: 1.5,
            ..small(0)
        },
        SyntheticSpec {
            ambiguity: 500,
            ..small(0)
        },
    ] {
        assert!(synthesize(&spec).is_err());
    }
}
