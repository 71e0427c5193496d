//! File-backed knowledge base of models, rule sets, reports and plans.
//!
//! ```text
//! <store>/
//!   catalog.jsonl          append-only journal, one JSON entry per write
//!   objects/<id>.<rev>     payload bytes of each revision
//! ```
//!
//! A payload is written to a temp file, synced and renamed before its journal
//! line is appended, so a crash leaves either a complete revision or nothing
//! visible. On open, a torn final journal line is cut off, temp files are
//! removed and payload files without a journal entry are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const JOURNAL: &str = "catalog.jsonl";
pub const OBJECTS: &str = "objects";
const TOKEN_TAG: &str = "request-token:";

#[derive(Debug, Error)]
pub enum KbError {
    #[error("artifact `{0}` not found")]
    NotFound(String),
    #[error("payload is empty")]
    EmptyPayload,
    #[error("payload of `{0}` does not match its recorded digest")]
    Corrupt(String),
    #[error("unknown artifact kind `{0}`")]
    Kind(String),
    #[error("storage failure: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Model,
    Ruleset,
    Report,
    CustomerList,
    CampaignPlan,
    Note,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 6] = [
        ArtifactKind::Model,
        ArtifactKind::Ruleset,
        ArtifactKind::Report,
        ArtifactKind::CustomerList,
        ArtifactKind::CampaignPlan,
        ArtifactKind::Note,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Model => "model",
            ArtifactKind::Ruleset => "ruleset",
            ArtifactKind::Report => "report",
            ArtifactKind::CustomerList => "customer-list",
            ArtifactKind::CampaignPlan => "campaign-plan",
            ArtifactKind::Note => "note",
        }
    }
}

impl std::str::FromStr for ArtifactKind {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArtifactKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| KbError::Kind(s.to_string()))
    }
}

/// One journal line; the latest revision of an id is its current state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub id: String,
    pub revision: u32,
    pub kind: ArtifactKind,
    pub tags: BTreeSet<String>,
    pub created: String,
    pub updated: String,
    /// Payload path relative to the store root.
    pub file: String,
    pub sha256: String,
    pub size: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub meta: ArtifactMeta,
    pub payload: Vec<u8>,
}

/// An open store. Writes take `&mut self`; callers sharing a store across
/// threads put it behind a lock.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    catalog: BTreeMap<String, ArtifactMeta>,
    /// Journal position of each id's latest entry.
    written: BTreeMap<String, u64>,
    next: u64,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

fn fresh_id() -> String {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%6f");
    let suffix: u32 = rand::rng().random();
    format!("{stamp}-{suffix:08x}")
}

fn sync_dir(path: &Path) -> io::Result<()> {
    File::open(path)?.sync_all()
}

impl Store {
    /// Opens or creates a store, replaying its journal.
    pub fn open(root: impl AsRef<Path>) -> Result<Store, KbError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join(OBJECTS))?;
        for entry in fs::read_dir(root.join(OBJECTS))? {
            let entry = entry?;
            if entry.file_name().to_string_lossy().starts_with(".tmp-") {
                fs::remove_file(entry.path())?;
            }
        }
        let journal = root.join(JOURNAL);
        let mut catalog = BTreeMap::new();
        let mut written = BTreeMap::new();
        let mut next = 0;
        if journal.exists() {
            let bytes = fs::read(&journal)?;
            let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
            if complete < bytes.len() {
                // torn final line from an interrupted append
                OpenOptions::new().write(true).open(&journal)?.set_len(complete as u64)?;
            }
            for line in bytes[..complete].split(|&b| b == b'\n') {
                if line.is_empty() {
                    continue;
                }
                if let Ok(meta) = serde_json::from_slice::<ArtifactMeta>(line) {
                    written.insert(meta.id.clone(), next);
                    next += 1;
                    catalog.insert(meta.id.clone(), meta);
                }
            }
        }
        Ok(Store { root, catalog, written, next })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.catalog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.catalog.is_empty()
    }

    fn write_revision(&mut self, meta: ArtifactMeta, payload: &[u8]) -> Result<(), KbError> {
        let objects = self.root.join(OBJECTS);
        let tmp = objects.join(format!(".tmp-{}.{}", meta.id, meta.revision));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(payload)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.root.join(&meta.file))?;
        sync_dir(&objects)?;
        let mut line = serde_json::to_vec(&meta).expect("meta serializes");
        line.push(b'\n');
        let mut j = OpenOptions::new().create(true).append(true).open(self.root.join(JOURNAL))?;
        j.write_all(&line)?;
        j.sync_all()?;
        self.written.insert(meta.id.clone(), self.next);
        self.next += 1;
        self.catalog.insert(meta.id.clone(), meta);
        Ok(())
    }

    fn meta_for(id: &str, revision: u32, kind: ArtifactKind, tags: BTreeSet<String>, created: String, payload: &[u8]) -> ArtifactMeta {
        ArtifactMeta {
            id: id.to_string(),
            revision,
            kind,
            tags,
            updated: now(),
            created,
            file: format!("{OBJECTS}/{id}.{revision}"),
            sha256: crate::dataset::hex(&Sha256::digest(payload)),
            size: payload.len() as u64,
        }
    }

    /// Stores a new artifact and returns its id once it is durable.
    pub fn put(&mut self, kind: ArtifactKind, payload: &[u8], tags: BTreeSet<String>) -> Result<String, KbError> {
        if payload.is_empty() {
            return Err(KbError::EmptyPayload);
        }
        let mut id = fresh_id();
        while self.catalog.contains_key(&id) {
            id = fresh_id();
        }
        let meta = Self::meta_for(&id, 1, kind, tags, now(), payload);
        self.write_revision(meta, payload)?;
        Ok(id)
    }

    /// Id of the artifact written under a request token, if any.
    pub fn find_token(&self, token: &str) -> Option<String> {
        let tag = format!("{TOKEN_TAG}{token}");
        self.catalog.values().find(|m| m.tags.contains(&tag)).map(|m| m.id.clone())
    }

    /// Like [`Store::put`], but a retry carrying the same `token` returns the
    /// id stored by the first call instead of writing again.
    pub fn put_once(&mut self, kind: ArtifactKind, payload: &[u8], mut tags: BTreeSet<String>, token: &str) -> Result<String, KbError> {
        if let Some(id) = self.find_token(token) {
            return Ok(id);
        }
        tags.insert(format!("{TOKEN_TAG}{token}"));
        self.put(kind, payload, tags)
    }

    /// Writes a new revision of `id`; tags are kept unless replaced.
    pub fn update(&mut self, id: &str, payload: &[u8], tags: Option<BTreeSet<String>>) -> Result<ArtifactMeta, KbError> {
        if payload.is_empty() {
            return Err(KbError::EmptyPayload);
        }
        let prev = self.catalog.get(id).ok_or_else(|| KbError::NotFound(id.to_string()))?.clone();
        let meta = Self::meta_for(id, prev.revision + 1, prev.kind, tags.unwrap_or(prev.tags), prev.created, payload);
        self.write_revision(meta.clone(), payload)?;
        Ok(meta)
    }

    pub fn meta(&self, id: &str) -> Option<&ArtifactMeta> {
        self.catalog.get(id)
    }

    /// Latest revision of `id`, checked against its recorded digest.
    pub fn get(&self, id: &str) -> Result<Artifact, KbError> {
        let meta = self.catalog.get(id).ok_or_else(|| KbError::NotFound(id.to_string()))?;
        let payload = fs::read(self.root.join(&meta.file))?;
        if crate::dataset::hex(&Sha256::digest(&payload)) != meta.sha256 {
            return Err(KbError::Corrupt(id.to_string()));
        }
        Ok(Artifact { meta: meta.clone(), payload })
    }

    /// Current artifacts matching both filters, most recently written first.
    pub fn query(&self, kind: Option<ArtifactKind>, tag: Option<&str>) -> Vec<ArtifactMeta> {
        let mut out: Vec<ArtifactMeta> = self
            .catalog
            .values()
            .filter(|m| kind.is_none_or(|k| m.kind == k) && tag.is_none_or(|t| m.tags.contains(t)))
            .cloned()
            .collect();
        out.sort_by_key(|m| std::cmp::Reverse(self.written[&m.id]));
        out
    }
}

pub fn tags<I, S>(items: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    items.into_iter().map(Into::into).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_update_query() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        let a = s.put(ArtifactKind::Note, b"first", tags(["x"])).unwrap();
        let b = s.put(ArtifactKind::Report, b"second", tags(["y"])).unwrap();
        assert_ne!(a, b);
        assert_eq!(s.get(&a).unwrap().payload, b"first");
        s.update(&a, b"first, revised", None).unwrap();
        assert_eq!(s.get(&a).unwrap().payload, b"first, revised");
        assert_eq!(s.get(&a).unwrap().meta.revision, 2);
        assert_eq!(s.query(Some(ArtifactKind::Note), Some("x")).len(), 1);
        assert_eq!(s.query(Some(ArtifactKind::Model), None).len(), 0);
        assert!(matches!(s.get("nope"), Err(KbError::NotFound(_))));
        assert!(matches!(s.put(ArtifactKind::Note, b"", tags::<[&str; 0], &str>([])), Err(KbError::EmptyPayload)));
    }

    #[test]
    fn request_token_deduplicates() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        let a = s.put_once(ArtifactKind::Note, b"p", BTreeSet::new(), "t1").unwrap();
        let b = s.put_once(ArtifactKind::Note, b"p", BTreeSet::new(), "t1").unwrap();
        assert_eq!(a, b);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn kind_names_parse_back() {
        for k in ArtifactKind::ALL {
            assert_eq!(k.as_str().parse::<ArtifactKind>().unwrap(), k);
        }
    }
}
