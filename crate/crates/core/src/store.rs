//! On-disk model store, sharded by mention hash, with incremental training
//! and a thread-safe read-through cache.
//!
//! ```text
//! <root>/manifest.json            feature settings and training config
//! <root>/kb.snap                  titles, unambiguous mentions, redirects
//! <root>/shards/<xx>/<hash>.model one mention model
//! <root>/shards/<xx>/<hash>.<pruner>.prune
//! ```
//! `<xx>` is the first two hex digits of the 64-bit FNV-1a hash of the
//! mention and `<hash>` the full 16-digit hash.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EntityId, Grouping, MentionGroup};
use crate::disambiguator::{train_mention, training_fingerprint, MentionModel};
use crate::error::{Error, IoContext, Result};
use crate::features::FeatureSettings;
use crate::pruner::MentionPruner;
use crate::regression::TrainConfig;
use crate::rng::hash_str;
use crate::snapshot::{self, Kind};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub titles: BTreeMap<EntityId, String>,
    /// Mentions with exactly one observed sense.
    pub direct: BTreeMap<String, EntityId>,
    /// Lemmatized redirect title → resolved entity.
    pub redirects: BTreeMap<String, EntityId>,
    /// Mentions that have a trained model.
    pub ambiguous: BTreeSet<String>,
}

impl KnowledgeBase {
    pub fn from_corpus(corpus: &Corpus, grouping: &Grouping) -> Self {
        KnowledgeBase {
            titles: corpus.entities.values().map(|e| (e.id, e.title.clone())).collect(),
            direct: grouping.direct.clone(),
            redirects: corpus.redirect_map(),
            ambiguous: grouping.groups.iter().map(|g| g.mention.clone()).collect(),
        }
    }

    pub fn title(&self, id: EntityId) -> Option<&str> {
        self.titles.get(&id).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub version: u32,
    pub settings: FeatureSettings,
    pub config: TrainConfig,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ModelStore {
    root: PathBuf,
}

fn mention_hash(mention: &str) -> String {
    format!("{:016x}", hash_str(mention))
}

/// Keeps pruner keys filesystem-safe.
fn file_key(key: &str) -> String {
    key.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

impl ModelStore {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join("shards")).at(&root)?;
        Ok(ModelStore { root })
    }

    /// Opens an existing store; fails when the directory or its knowledge
    /// base is missing.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.join("kb.snap").is_file() {
            return Err(Error::Io {
                path: root.join("kb.snap"),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "model store not found"),
            });
        }
        Ok(ModelStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn shard_dir(&self, mention: &str) -> PathBuf {
        self.root.join("shards").join(&mention_hash(mention)[..2])
    }

    pub fn model_path(&self, mention: &str) -> PathBuf {
        self.shard_dir(mention).join(format!("{}.model", mention_hash(mention)))
    }

    pub fn pruner_path(&self, mention: &str, key: &str) -> PathBuf {
        self.shard_dir(mention)
            .join(format!("{}.{}.prune", mention_hash(mention), file_key(key)))
    }

    pub fn save_model(&self, model: &MentionModel) -> Result<()> {
        snapshot::save(
            &self.model_path(&model.mention),
            Kind::Model,
            std::slice::from_ref(model),
        )
    }

    pub fn load_model(&self, mention: &str) -> Result<Option<MentionModel>> {
        let path = self.model_path(mention);
        if !path.is_file() {
            return Ok(None);
        }
        let model = snapshot::load::<MentionModel>(&path, Kind::Model)?
            .pop()
            .ok_or_else(|| Error::Snapshot(format!("empty model file {}", path.display())))?;
        if model.mention != mention {
            return Err(Error::Snapshot(format!(
                "hash collision: {} holds {:?}, not {mention:?}",
                path.display(),
                model.mention
            )));
        }
        model.validate()?;
        Ok(Some(model))
    }

    pub fn export_json(&self, mention: &str) -> Result<String> {
        let model = self
            .load_model(mention)?
            .ok_or_else(|| Error::NoModel(mention.to_string()))?;
        Ok(serde_json::to_string_pretty(&model)?)
    }

    pub fn save_pruner(&self, mention: &str, key: &str, pruner: &MentionPruner) -> Result<()> {
        snapshot::save(
            &self.pruner_path(mention, key),
            Kind::Pruner,
            std::slice::from_ref(pruner),
        )
    }

    pub fn load_pruner(&self, mention: &str, key: &str) -> Result<Option<MentionPruner>> {
        let path = self.pruner_path(mention, key);
        if !path.is_file() {
            return Ok(None);
        }
        Ok(snapshot::load::<MentionPruner>(&path, Kind::Pruner)?.pop())
    }

    pub fn save_kb(&self, kb: &KnowledgeBase) -> Result<()> {
        snapshot::save(
            &self.root.join("kb.snap"),
            Kind::KnowledgeBase,
            std::slice::from_ref(kb),
        )
    }

    pub fn load_kb(&self) -> Result<KnowledgeBase> {
        snapshot::load::<KnowledgeBase>(&self.root.join("kb.snap"), Kind::KnowledgeBase)?
            .pop()
            .ok_or_else(|| Error::Snapshot("empty knowledge base".into()))
    }

    pub fn save_manifest(&self, manifest: &StoreManifest) -> Result<()> {
        let path = self.root.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(manifest)?).at(&path)
    }

    pub fn load_manifest(&self) -> Result<StoreManifest> {
        let path = self.root.join("manifest.json");
        Ok(serde_json::from_str(&std::fs::read_to_string(&path).at(&path)?)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainSummary {
    pub trained: Vec<String>,
    pub up_to_date: usize,
    pub failures: Vec<(String, String)>,
}

impl TrainSummary {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Trains every group in memory on `workers` threads, in group order.
pub fn train_models(
    groups: &[MentionGroup],
    corpus: &Corpus,
    settings: FeatureSettings,
    config: &TrainConfig,
    workers: usize,
) -> Result<Vec<MentionModel>> {
    let pool = thread_pool(workers)?;
    Ok(pool.install(|| {
        groups
            .par_iter()
            .map(|g| train_mention(g, corpus, settings, config))
            .collect()
    }))
}

/// Trains and persists one model per group. A model whose stored
/// fingerprint matches its current inputs is left untouched, so deleting a
/// model file and re-running retrains exactly that mention. A failing
/// mention is reported and never blocks the others.
pub fn train_all(
    store: &ModelStore,
    groups: &[MentionGroup],
    corpus: &Corpus,
    settings: FeatureSettings,
    config: &TrainConfig,
    workers: usize,
    filter: Option<&HashSet<String>>,
) -> Result<TrainSummary> {
    let pool = thread_pool(workers)?;
    let selected: Vec<&MentionGroup> = groups
        .iter()
        .filter(|g| filter.is_none_or(|f| f.contains(&g.mention)))
        .collect();
    enum Outcome {
        Trained(String),
        UpToDate,
        Failed(String, String),
    }
    let outcomes: Vec<Outcome> = pool.install(|| {
        selected
            .par_iter()
            .map(|g| {
                let fp = training_fingerprint(g, corpus, settings, config);
                if let Ok(Some(existing)) = store.load_model(&g.mention) {
                    if existing.meta.fingerprint == fp && existing.settings == settings {
                        return Outcome::UpToDate;
                    }
                }
                let res = catch_unwind(AssertUnwindSafe(|| train_mention(g, corpus, settings, config)));
                match res {
                    Ok(model) => match model.validate().and_then(|_| store.save_model(&model)) {
                        Ok(()) => Outcome::Trained(g.mention.clone()),
                        Err(e) => Outcome::Failed(g.mention.clone(), e.to_string()),
                    },
                    Err(p) => Outcome::Failed(g.mention.clone(), panic_message(p)),
                }
            })
            .collect()
    });
    let mut summary = TrainSummary::default();
    for o in outcomes {
        match o {
            Outcome::Trained(m) => summary.trained.push(m),
            Outcome::UpToDate => summary.up_to_date += 1,
            Outcome::Failed(m, e) => {
                warn!("training {m:?} failed: {e}");
                summary.failures.push((m, e));
            }
        }
    }
    info!(
        "trained {} mention(s), {} up to date, {} failed",
        summary.trained.len(),
        summary.up_to_date,
        summary.failures.len()
    );
    Ok(summary)
}

/// Where the annotator and evaluator get models and pruners from.
pub trait ModelSource: Send + Sync {
    fn model(&self, mention: &str) -> Result<Option<Arc<MentionModel>>>;
    fn pruner(&self, mention: &str, key: &str) -> Result<Option<Arc<MentionPruner>>>;
}

/// Models held in memory.
#[derive(Debug, Default)]
pub struct MemoryModels {
    pub models: HashMap<String, Arc<MentionModel>>,
    pub pruners: HashMap<(String, String), Arc<MentionPruner>>,
}

impl MemoryModels {
    pub fn new(models: impl IntoIterator<Item = MentionModel>) -> Self {
        MemoryModels {
            models: models.into_iter().map(|m| (m.mention.clone(), Arc::new(m))).collect(),
            pruners: HashMap::new(),
        }
    }

    pub fn set_pruners(&mut self, key: &str, pruners: impl IntoIterator<Item = (String, MentionPruner)>) {
        for (m, p) in pruners {
            self.pruners.insert((m, key.to_string()), Arc::new(p));
        }
    }
}

impl ModelSource for MemoryModels {
    fn model(&self, mention: &str) -> Result<Option<Arc<MentionModel>>> {
        Ok(self.models.get(mention).cloned())
    }

    fn pruner(&self, mention: &str, key: &str) -> Result<Option<Arc<MentionPruner>>> {
        Ok(self.pruners.get(&(mention.to_string(), key.to_string())).cloned())
    }
}

type Slot<T> = RwLock<HashMap<String, Option<Arc<T>>>>;

/// Lazily loads models from a store and keeps them for the process lifetime.
#[derive(Debug)]
pub struct ModelCache {
    store: ModelStore,
    models: Slot<MentionModel>,
    pruners: Slot<MentionPruner>,
    reads: AtomicUsize,
}

impl ModelCache {
    pub fn new(store: ModelStore) -> Self {
        ModelCache {
            store,
            models: RwLock::default(),
            pruners: RwLock::default(),
            reads: AtomicUsize::new(0),
        }
    }

    pub fn store(&self) -> &ModelStore {
        &self.store
    }

    /// Number of store reads performed so far.
    pub fn store_reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    fn cached<T>(
        &self,
        slot: &Slot<T>,
        key: String,
        load: impl FnOnce() -> Result<Option<T>>,
    ) -> Result<Option<Arc<T>>> {
        if let Some(hit) = slot.read().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(hit.clone());
        }
        let mut w = slot.write().unwrap_or_else(|e| e.into_inner());
        if let Some(hit) = w.get(&key) {
            return Ok(hit.clone());
        }
        self.reads.fetch_add(1, Ordering::Relaxed);
        let loaded = load()?.map(Arc::new);
        w.insert(key, loaded.clone());
        Ok(loaded)
    }
}

impl ModelSource for ModelCache {
    fn model(&self, mention: &str) -> Result<Option<Arc<MentionModel>>> {
        self.cached(&self.models, mention.to_string(), || self.store.load_model(mention))
    }

    fn pruner(&self, mention: &str, key: &str) -> Result<Option<Arc<MentionPruner>>> {
        self.cached(&self.pruners, format!("{key}\u{0}{mention}"), || {
            self.store.load_pruner(mention, key)
        })
    }
}
