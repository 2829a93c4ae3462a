//! Binary KB index file.
//!
//! Layout (all integers little-endian):
//! - 8-byte magic `FOFELKB\0`, then a `u16` format version
//! - `u32` section count, then for each section a 4-byte tag, a `u64` payload length and
//!   the payload
//!
//! Sections: `ENTS` entities with resolved links, `NAME` exact-name table, `REDR` redirects,
//! `DISA` disambiguation sets, `VOCB` word vocabulary, `IDFW` idf weights (`f64`), `CHRS`
//! character vocabulary, `FUZZ` fuzzy index keys and postings. Strings are a `u32` byte
//! length followed by UTF-8.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::{EntityType, FuzzyIndex, IndexedKey, KbEntity, KbStore, RedirectTable};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::fofe::Vocabulary;

pub const INDEX_MAGIC: &[u8; 8] = b"FOFELKB\0";
pub const INDEX_VERSION: u16 = 1;

fn write_ids(w: &mut ByteWriter, ids: &[u32]) {
    w.u32(ids.len() as u32);
    ids.iter().for_each(|&i| w.u32(i));
}

fn read_ids(r: &mut ByteReader) -> Result<Vec<u32>> {
    let n = r.u32()? as usize;
    (0..n).map(|_| r.u32()).collect()
}

fn write_vocab(w: &mut ByteWriter, v: &Vocabulary) {
    w.u32(v.len() as u32);
    v.tokens().iter().for_each(|t| w.str(t));
}

fn read_vocab(r: &mut ByteReader) -> Result<Vocabulary> {
    let n = r.u32()? as usize;
    let tokens = (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    Vocabulary::from_tokens(tokens)
}

fn write_name_table(w: &mut ByteWriter, t: &BTreeMap<String, Vec<u32>>) {
    w.u32(t.len() as u32);
    for (k, ids) in t {
        w.str(k);
        write_ids(w, ids);
    }
}

fn read_name_table(r: &mut ByteReader) -> Result<BTreeMap<String, Vec<u32>>> {
    let n = r.u32()? as usize;
    let mut t = BTreeMap::new();
    for _ in 0..n {
        let k = r.string()?;
        t.insert(k, read_ids(r)?);
    }
    Ok(t)
}

pub fn write_index(kb: &KbStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_index(kb)).map_err(|e| Error::io(path, e))
}

pub fn encode_index(kb: &KbStore) -> Vec<u8> {
    let mut sections: Vec<(&[u8; 4], ByteWriter)> = Vec::new();

    let mut w = ByteWriter::default();
    w.u32(kb.entities.len() as u32);
    for (e, links) in kb.entities.iter().zip(&kb.links) {
        w.str(&e.id);
        w.str(&e.name);
        w.u8(e.entity_type.code());
        w.u32(e.aliases.len() as u32);
        e.aliases.iter().for_each(|a| w.str(a));
        w.str(&e.description);
        write_ids(&mut w, links);
    }
    sections.push((b"ENTS", w));

    let mut w = ByteWriter::default();
    write_name_table(&mut w, &kb.names);
    sections.push((b"NAME", w));

    let mut w = ByteWriter::default();
    w.u32(kb.redirects.redirects.len() as u32);
    for (k, &id) in &kb.redirects.redirects {
        w.str(k);
        w.u32(id);
    }
    sections.push((b"REDR", w));

    let mut w = ByteWriter::default();
    write_name_table(&mut w, &kb.redirects.disambiguation);
    sections.push((b"DISA", w));

    let mut w = ByteWriter::default();
    write_vocab(&mut w, &kb.vocab);
    sections.push((b"VOCB", w));

    let mut w = ByteWriter::default();
    w.u32(kb.idf.len() as u32);
    kb.idf.iter().for_each(|&x| w.f64(x));
    sections.push((b"IDFW", w));

    let mut w = ByteWriter::default();
    write_vocab(&mut w, &kb.charset);
    sections.push((b"CHRS", w));

    let mut w = ByteWriter::default();
    w.u8(kb.fuzzy.gram() as u8);
    w.u32(kb.fuzzy.keys().len() as u32);
    for k in kb.fuzzy.keys() {
        w.u32(k.entity);
        w.str(&k.text);
    }
    w.u32(kb.fuzzy.postings().len() as u32);
    for (g, list) in kb.fuzzy.postings() {
        w.str(g);
        write_ids(&mut w, list);
    }
    sections.push((b"FUZZ", w));

    let mut out = ByteWriter::default();
    out.bytes(INDEX_MAGIC);
    out.u16(INDEX_VERSION);
    out.u32(sections.len() as u32);
    for (tag, payload) in sections {
        let payload = payload.into_inner();
        out.bytes(tag);
        out.u64(payload.len() as u64);
        out.bytes(&payload);
    }
    out.into_inner()
}

pub fn read_index(path: impl AsRef<Path>) -> Result<KbStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_index(&bytes)
}

pub fn decode_index(bytes: &[u8]) -> Result<KbStore> {
    let mut r = ByteReader::new(bytes);
    if r.take(8)? != INDEX_MAGIC {
        return Err(Error::Format("not a KB index (bad magic)".into()));
    }
    let version = r.u16()?;
    if version != INDEX_VERSION {
        return Err(Error::Format(format!(
            "unsupported KB index version {version}"
        )));
    }
    let count = r.u32()?;
    let mut sections: HashMap<[u8; 4], &[u8]> = HashMap::new();
    for _ in 0..count {
        let tag: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        let len = r.u64()? as usize;
        sections.insert(tag, r.take(len)?);
    }
    let section = |tag: &[u8; 4]| -> Result<ByteReader> {
        sections
            .get(tag)
            .map(|b| ByteReader::new(b))
            .ok_or_else(|| {
                Error::Format(format!("missing section {}", String::from_utf8_lossy(tag)))
            })
    };

    let mut r = section(b"ENTS")?;
    let n = r.u32()? as usize;
    let mut entities = Vec::with_capacity(n);
    let mut links = Vec::with_capacity(n);
    for _ in 0..n {
        let id = r.string()?;
        let name = r.string()?;
        let code = r.u8()?;
        let entity_type = EntityType::from_code(code)
            .ok_or_else(|| Error::Format(format!("bad entity type code {code}")))?;
        let na = r.u32()? as usize;
        let aliases = (0..na).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let description = r.string()?;
        links.push(read_ids(&mut r)?);
        entities.push(KbEntity {
            id,
            name,
            entity_type,
            aliases,
            description,
            links: Vec::new(),
        });
    }
    for (i, ls) in links.iter().enumerate() {
        let mut ids = Vec::with_capacity(ls.len());
        for &t in ls {
            let target = entities
                .get(t as usize)
                .ok_or_else(|| Error::Format(format!("link target {t} out of range")))?;
            ids.push(target.id.clone());
        }
        entities[i].links = ids;
    }
    let by_id = entities
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.clone(), i as u32))
        .collect();

    let names = read_name_table(&mut section(b"NAME")?)?;

    let mut r = section(b"REDR")?;
    let mut redirects = BTreeMap::new();
    for _ in 0..r.u32()? {
        let k = r.string()?;
        redirects.insert(k, r.u32()?);
    }
    let disambiguation = read_name_table(&mut section(b"DISA")?)?;

    let vocab = read_vocab(&mut section(b"VOCB")?)?;
    let mut r = section(b"IDFW")?;
    let idf = (0..r.u32()?).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let charset = read_vocab(&mut section(b"CHRS")?)?;

    let mut r = section(b"FUZZ")?;
    let gram = r.u8()? as usize;
    let nk = r.u32()? as usize;
    let mut keys = Vec::with_capacity(nk);
    for _ in 0..nk {
        let entity = r.u32()?;
        keys.push(IndexedKey {
            entity,
            text: r.string()?,
        });
    }
    let mut postings = BTreeMap::new();
    for _ in 0..r.u32()? {
        let g = r.string()?;
        postings.insert(g, read_ids(&mut r)?);
    }

    let kb = KbStore {
        entities,
        links,
        by_id,
        names,
        redirects: RedirectTable {
            redirects,
            disambiguation,
        },
        fuzzy: FuzzyIndex::from_parts(gram, keys, postings),
        vocab,
        idf,
        charset,
    };
    validate(&kb)?;
    Ok(kb)
}

fn validate(kb: &KbStore) -> Result<()> {
    let n = kb.entities.len() as u32;
    let bad = |what: &str| Err(Error::Format(format!("inconsistent index: {what}")));
    if kb.idf.len() != kb.vocab.len() {
        return bad("idf length differs from vocabulary");
    }
    let in_range = |ids: &[u32]| ids.iter().all(|&i| i < n);
    if !kb.names.values().all(|ids| in_range(ids))
        || !kb
            .redirects
            .disambiguation
            .values()
            .all(|ids| in_range(ids))
        || !kb.redirects.redirects.values().all(|&i| i < n)
    {
        return bad("name table references a missing entity");
    }
    if !kb.fuzzy.keys().iter().all(|k| k.entity < n) {
        return bad("fuzzy key references a missing entity");
    }
    let nk = kb.fuzzy.keys().len() as u32;
    for list in kb.fuzzy.postings().values() {
        if !list.windows(2).all(|w| w[0] < w[1]) || list.iter().any(|&k| k >= nk) {
            return bad("posting list unsorted or out of range");
        }
    }
    Ok(())
}
