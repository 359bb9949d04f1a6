//! Versioned binary snapshots.
//!
//! Layout: magic `MLNK`, a four-byte kind tag, format version (u32 LE),
//! record count (u64 LE), then each record as a u32 LE byte length followed
//! by its bincode encoding.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, Corpus, Entity, Redirect};
use crate::error::{Error, IoContext, Result};

pub const MAGIC: [u8; 4] = *b"MLNK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Corpus,
    Annotations,
    Model,
    Pruner,
    KnowledgeBase,
}

impl Kind {
    fn tag(self) -> [u8; 4] {
        match self {
            Kind::Corpus => *b"CORP",
            Kind::Annotations => *b"ANNO",
            Kind::Model => *b"MODL",
            Kind::Pruner => *b"PRUN",
            Kind::KnowledgeBase => *b"KBAS",
        }
    }
}

pub fn write_records<'a, W, T, I>(mut w: W, kind: Kind, records: I) -> Result<()>
where
    W: Write,
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
    I::IntoIter: ExactSizeIterator,
{
    let records = records.into_iter();
    w.write_all(&MAGIC)?;
    w.write_all(&kind.tag())?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        let bytes = bincode::serialize(r)?;
        let len = u32::try_from(bytes.len()).map_err(|_| Error::Snapshot("record larger than 4 GiB".into()))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read, T: DeserializeOwned>(mut r: R, kind: Kind) -> Result<Vec<T>> {
    let mut head = [0u8; 20];
    r.read_exact(&mut head)
        .map_err(|e| Error::Snapshot(format!("truncated header: {e}")))?;
    if head[..4] != MAGIC {
        return Err(Error::Snapshot("not a snapshot file".into()));
    }
    if head[4..8] != kind.tag() {
        return Err(Error::Snapshot(format!(
            "expected {:?} snapshot, found tag {:?}",
            kind,
            String::from_utf8_lossy(&head[4..8])
        )));
    }
    let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(head[12..20].try_into().unwrap());
    let mut out = Vec::with_capacity(count.min(1 << 20) as usize);
    let mut buf = Vec::new();
    for i in 0..count {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)
            .map_err(|e| Error::Snapshot(format!("record {i}: {e}")))?;
        buf.resize(u32::from_le_bytes(len) as usize, 0);
        r.read_exact(&mut buf)
            .map_err(|e| Error::Snapshot(format!("record {i}: {e}")))?;
        out.push(bincode::deserialize(&buf)?);
    }
    Ok(out)
}

pub fn save<T: Serialize>(path: &Path, kind: Kind, records: &[T]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).at(dir)?;
    }
    // write-then-rename so readers never observe a partial file
    let tmp = path.with_extension("tmp");
    let f = File::create(&tmp).at(&tmp)?;
    write_records(BufWriter::new(f), kind, records.iter())?;
    std::fs::rename(&tmp, path).at(path)?;
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: Kind) -> Result<Vec<T>> {
    let f = File::open(path).at(path)?;
    read_records(BufReader::new(f), kind)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CorpusRecord {
    Entity(Entity),
    Redirect(Redirect),
    Annotation(Annotation),
}

/// Corpus plus its original link annotations.
pub fn save_corpus(path: &Path, corpus: &Corpus, annotations: &[Annotation]) -> Result<()> {
    let records: Vec<CorpusRecord> = corpus
        .entities
        .values()
        .cloned()
        .map(CorpusRecord::Entity)
        .chain(corpus.redirects.iter().cloned().map(CorpusRecord::Redirect))
        .chain(annotations.iter().cloned().map(CorpusRecord::Annotation))
        .collect();
    save(path, Kind::Corpus, &records)
}

pub fn load_corpus(path: &Path) -> Result<(Corpus, Vec<Annotation>)> {
    let mut corpus = Corpus::default();
    let mut anns = Vec::new();
    for r in load::<CorpusRecord>(path, Kind::Corpus)? {
        match r {
            CorpusRecord::Entity(e) => {
                corpus.entities.insert(e.id, e);
            }
            CorpusRecord::Redirect(r) => corpus.redirects.push(r),
            CorpusRecord::Annotation(a) => anns.push(a),
        }
    }
    Ok((corpus, anns))
}

pub fn save_annotations(path: &Path, annotations: &[Annotation]) -> Result<()> {
    save(path, Kind::Annotations, annotations)
}

pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>> {
    load(path, Kind::Annotations)
}
