use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use mentionlink::corpus::{group_by_mention, parse_corpus, Annotation, EntityId, MentionGroup, N_CONTEXT};
use mentionlink::dataset::{
    cap_per_sense, flatten, scramble_groups, split_per_mention, DatasetCatalog, DatasetEntry, ScrambleSpec,
    STANDARD_SCRAMBLES,
};
use mentionlink::eval::{bands_csv, precision_vs_candidates, MacroPolicy};
use mentionlink::extension::{extend_corpus, ExtendOptions};
use mentionlink::features::{similarity, ContextVector, FeatureSettings, MEASURES};
use mentionlink::pipeline::{self, PredictionInput, PredictionLine};
use mentionlink::pruner::{fit_all, PrunerOptions, PrunerRegistry};
use mentionlink::regression::TrainConfig;
use mentionlink::service::{self, AnnotateRequest, Annotator, AppState, STORE_ENV};
use mentionlink::snapshot;
use mentionlink::store::{train_all, KnowledgeBase, ModelCache, ModelStore, StoreManifest};
use mentionlink::synth::{generate, SynthConfig};
use mentionlink::text::lemma_key;

#[derive(Parser)]
#[command(name = "mentionlink", version, about = "Per-mention entity disambiguation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a JSON-lines article dump into a corpus snapshot.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = N_CONTEXT)]
        n_context: usize,
    },
    /// Add phrase-match and self-title annotations.
    Extend {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_generality_filter: bool,
    },
    /// Split extended annotations per mention into A1 (train) and A2 (held out).
    Split {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        cap: usize,
    },
    /// Build scrambled datasets. Without --name, builds B-F.
    Scramble {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        datasets: PathBuf,
        #[arg(long)]
        name: Option<String>,
        /// Dataset to scramble (default A2, or A1 for F)
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        keep: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one model per ambiguous mention of A1.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        datasets: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 100)]
        nfw: usize,
        #[arg(long, default_value_t = 1)]
        nfp: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated mentions, or @file with one mention per line
        #[arg(long)]
        mentions_filter: Option<String>,
    },
    /// Predict senses for annotations (JSON lines in, JSON lines out).
    Predict {
        #[arg(long)]
        store: PathBuf,
        /// JSON lines of {mention, context, gold_sense?}
        #[arg(long, conflicts_with = "dataset")]
        input: Option<PathBuf>,
        /// Annotation snapshot instead of JSON lines
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Fit per-mention pruners on predictions over a dataset (default F).
    PruneTrain {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        datasets: PathBuf,
        #[arg(long, default_value = "F")]
        dataset: String,
        #[arg(long, value_enum, default_value_t = Method::Threshold)]
        method: Method,
        #[command(flatten)]
        pruner: PrunerArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Score a dataset against its gold senses.
    Evaluate {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        datasets: PathBuf,
        #[arg(long, default_value = "A2")]
        dataset: String,
        #[arg(long, value_enum, default_value_t = PrunerChoice::None)]
        pruner: PrunerChoice,
        #[command(flatten)]
        pruner_args: PrunerArgs,
        #[arg(long, value_enum, default_value_t = PolicyArg::Exclude)]
        macro_policy: PolicyArg,
        /// Write the report as JSON
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write precision-vs-candidates quantiles as CSV
        #[arg(long)]
        quantiles: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Show candidate contexts and the feature breakdown for one context.
    InspectFeatures {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        mention: String,
        /// Context text; lemmatized before featurizing
        #[arg(long)]
        context: String,
        /// Print the stored model as JSON instead
        #[arg(long)]
        json: bool,
    },
    /// Annotate marked spans of a document (same schema as the HTTP API).
    Annotate {
        #[arg(long, env = STORE_ENV)]
        store: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = PrunerChoice::None)]
        pruner: PrunerChoice,
        #[command(flatten)]
        pruner_args: PrunerArgs,
        #[arg(long)]
        ids: bool,
    },
    /// Serve the annotation API over HTTP.
    Serve {
        #[arg(long, env = STORE_ENV)]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, value_enum, default_value_t = PrunerChoice::None)]
        pruner: PrunerChoice,
        #[command(flatten)]
        pruner_args: PrunerArgs,
    },
    /// Write a seeded synthetic corpus as JSON lines.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        mentions: usize,
        #[arg(long, default_value_t = 200)]
        annotations_per_sense: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Clone, Copy)]
struct PrunerArgs {
    #[arg(long, value_enum, default_value_t = ScopeArg::Mention)]
    scope: ScopeArg,
    #[arg(long, default_value_t = -0.05, allow_negative_numbers = true)]
    beta0: f64,
    #[arg(long, default_value_t = -0.02, allow_negative_numbers = true)]
    beta1: f64,
    #[arg(long = "pruner-seed", default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Forest,
    Threshold,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PrunerChoice {
    None,
    Forest,
    Threshold,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Mention,
    Candidate,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Exclude,
    IncludeAsOne,
}

/// Registry name for a method and scope.
fn strategy_name(method: Method, scope: ScopeArg) -> &'static str {
    match (method, scope) {
        (Method::Threshold, _) => "threshold",
        (Method::Forest, ScopeArg::Mention) => "forest-mention",
        (Method::Forest, ScopeArg::Candidate) => "forest-candidate",
    }
}

fn options(args: &PrunerArgs) -> PrunerOptions {
    PrunerOptions {
        beta0: args.beta0,
        beta1: args.beta1,
        seed: args.seed,
    }
}

/// Storage key of the pruner selected on the command line.
fn pruner_key(choice: PrunerChoice, args: &PrunerArgs) -> Result<Option<String>> {
    let method = match choice {
        PrunerChoice::None => return Ok(None),
        PrunerChoice::Forest => Method::Forest,
        PrunerChoice::Threshold => Method::Threshold,
    };
    let strategy = PrunerRegistry::default().create(strategy_name(method, args.scope), &options(args))?;
    Ok(Some(strategy.key()))
}

fn catalog_path(dir: &Path) -> PathBuf {
    dir.join("catalog.json")
}

fn load_catalog(dir: &Path) -> Result<DatasetCatalog> {
    let p = catalog_path(dir);
    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn save_catalog(dir: &Path, catalog: &DatasetCatalog) -> Result<()> {
    std::fs::write(catalog_path(dir), serde_json::to_string_pretty(catalog)?)?;
    Ok(())
}

fn load_dataset(dir: &Path, name: &str) -> Result<Vec<Annotation>> {
    let catalog = load_catalog(dir)?;
    let entry = catalog
        .get(name)
        .with_context(|| format!("dataset {name:?} not in {}", catalog_path(dir).display()))?;
    Ok(snapshot::load_annotations(&dir.join(&entry.file))?)
}

/// Rebuilds groups keeping every mention, including ones whose sample
/// happens to hold a single sense.
fn groups_of(annotations: Vec<Annotation>) -> Vec<MentionGroup> {
    let mut by: BTreeMap<String, Vec<Annotation>> = BTreeMap::new();
    for a in annotations {
        by.entry(a.mention.clone()).or_default().push(a);
    }
    by.into_iter()
        .map(|(mention, annotations)| {
            let mut candidates: Vec<EntityId> = annotations.iter().map(|a| a.sense).collect();
            candidates.sort_unstable();
            candidates.dedup();
            MentionGroup {
                mention,
                candidates,
                annotations,
            }
        })
        .collect()
}

fn read_filter(spec: &str) -> Result<HashSet<String>> {
    let raw = match spec.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?,
        None => spec.replace(',', "\n"),
    };
    Ok(raw.lines().map(lemma_key).filter(|m| !m.is_empty()).collect())
}

fn ingest(input: &Path, out: &Path, n_context: usize) -> Result<ExitCode> {
    let f = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let parsed = parse_corpus(BufReader::new(f), n_context)?;
    for e in &parsed.report.errors {
        warn!("line {}: {}", e.line, e.message);
    }
    snapshot::save_corpus(out, &parsed.corpus, &parsed.annotations)?;
    println!(
        "{} entities, {} redirects, {} links; {} bad lines, {} unknown targets, {} empty links",
        parsed.corpus.entities.len(),
        parsed.corpus.redirects.len(),
        parsed.annotations.len(),
        parsed.report.errors.len(),
        parsed.report.unknown_targets,
        parsed.report.empty_links
    );
    Ok(ExitCode::SUCCESS)
}

fn extend(corpus: &Path, out: &Path, no_filter: bool) -> Result<ExitCode> {
    let (corpus, links) = snapshot::load_corpus(corpus)?;
    let before = links.len();
    let opts = ExtendOptions {
        generality_filter: !no_filter,
        ..Default::default()
    };
    let all = extend_corpus(&corpus, links, opts);
    snapshot::save_annotations(out, &all)?;
    println!("{} annotations ({} added)", all.len(), all.len() - before);
    Ok(ExitCode::SUCCESS)
}

fn split(annotations: &Path, out_dir: &Path, ratio: f64, seed: u64, cap: usize) -> Result<ExitCode> {
    std::fs::create_dir_all(out_dir)?;
    let grouping = group_by_mention(snapshot::load_annotations(annotations)?);
    let groups: Vec<MentionGroup> = grouping.groups.iter().map(|g| cap_per_sense(g, cap, seed)).collect();
    let (a1, a2) = split_per_mention(&groups, ratio, seed);
    let mut catalog = DatasetCatalog {
        split_ratio: ratio,
        split_seed: seed,
        cap_per_sense: Some(cap),
        datasets: Vec::new(),
    };
    for (name, groups) in [("A1", &a1), ("A2", &a2)] {
        let anns = flatten(groups);
        let file = format!("{name}.snap");
        snapshot::save_annotations(&out_dir.join(&file), &anns)?;
        catalog.upsert(DatasetEntry {
            name: name.into(),
            file,
            source: None,
            scramble: None,
            annotations: anns.len(),
        });
    }
    std::fs::write(
        out_dir.join("unambiguous.json"),
        serde_json::to_string_pretty(&grouping.direct)?,
    )?;
    save_catalog(out_dir, &catalog)?;
    println!(
        "{} ambiguous mentions, {} unambiguous; A1 {} / A2 {} annotations",
        groups.len(),
        grouping.direct.len(),
        catalog.datasets[0].annotations,
        catalog.datasets[1].annotations
    );
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn scramble(
    corpus: &Path,
    dir: &Path,
    name: Option<String>,
    source: Option<String>,
    keep: Option<f64>,
    noise: Option<f64>,
    seed: u64,
) -> Result<ExitCode> {
    let (corpus, _) = snapshot::load_corpus(corpus)?;
    let mut catalog = load_catalog(dir)?;
    let jobs: Vec<(String, f64, f64)> = match name {
        None => STANDARD_SCRAMBLES
            .iter()
            .map(|&(n, k, z)| (n.to_string(), k, z))
            .collect(),
        Some(n) => {
            let standard = STANDARD_SCRAMBLES.iter().find(|s| s.0 == n);
            let k = keep
                .or(standard.map(|s| s.1))
                .context("--keep is required for a custom dataset")?;
            let z = noise.or(standard.map(|s| s.2)).unwrap_or(0.0);
            vec![(n, k, z)]
        }
    };
    for (i, (name, keep, noise)) in jobs.into_iter().enumerate() {
        let src = source
            .clone()
            .unwrap_or_else(|| if name == "F" { "A1".into() } else { "A2".into() });
        let spec = ScrambleSpec::new(keep, noise, mentionlink::rng::mix(seed, i as u64))?;
        let groups = groups_of(load_dataset(dir, &src)?);
        let anns = flatten(&scramble_groups(&groups, &spec, &corpus));
        let file = format!("{name}.snap");
        snapshot::save_annotations(&dir.join(&file), &anns)?;
        println!(
            "{name}: {} annotations from {src} (keep {keep}, noise {noise})",
            anns.len()
        );
        catalog.upsert(DatasetEntry {
            name,
            file,
            source: Some(src),
            scramble: Some(spec),
            annotations: anns.len(),
        });
    }
    save_catalog(dir, &catalog)?;
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn train(
    corpus: &Path,
    datasets: &Path,
    store_dir: &Path,
    nfw: usize,
    nfp: usize,
    workers: usize,
    seed: u64,
    filter: Option<String>,
) -> Result<ExitCode> {
    if nfw == 0 || nfp == 0 {
        bail!("--nfw and --nfp must be positive");
    }
    let (corpus, _) = snapshot::load_corpus(corpus)?;
    let groups = groups_of(load_dataset(datasets, "A1")?);
    let direct: BTreeMap<String, EntityId> = match std::fs::read_to_string(datasets.join("unambiguous.json")) {
        Ok(s) => serde_json::from_str(&s)?,
        Err(_) => BTreeMap::new(),
    };
    let ambiguous: Vec<MentionGroup> = groups.into_iter().filter(|g| g.candidates.len() > 1).collect();
    let store = ModelStore::create(store_dir)?;
    let settings = FeatureSettings::new(nfw, nfp);
    let config = TrainConfig::default();
    let kb = KnowledgeBase {
        titles: corpus.entities.values().map(|e| (e.id, e.title.clone())).collect(),
        direct,
        redirects: corpus.redirect_map(),
        ambiguous: ambiguous.iter().map(|g| g.mention.clone()).collect(),
    };
    store.save_kb(&kb)?;
    store.save_manifest(&StoreManifest {
        version: snapshot::VERSION,
        settings,
        config,
        seed,
    })?;
    let filter = filter.as_deref().map(read_filter).transpose()?;
    let summary = train_all(&store, &ambiguous, &corpus, settings, &config, workers, filter.as_ref())?;
    println!(
        "trained {}, up to date {}, failed {}",
        summary.trained.len(),
        summary.up_to_date,
        summary.failures.len()
    );
    for (m, e) in &summary.failures {
        eprintln!("failed {m:?}: {e}");
    }
    Ok(if summary.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn open_cache(store_dir: &Path) -> Result<(ModelCache, KnowledgeBase)> {
    let store = ModelStore::open(store_dir)?;
    let kb = store.load_kb()?;
    Ok((ModelCache::new(store), kb))
}

fn predict(
    store: &Path,
    input: Option<PathBuf>,
    dataset: Option<PathBuf>,
    out: &Path,
    workers: usize,
) -> Result<ExitCode> {
    let (cache, kb) = open_cache(store)?;
    let inputs: Vec<PredictionInput> = match (input, dataset) {
        (Some(p), _) => {
            let f = BufReader::new(File::open(&p).with_context(|| format!("opening {}", p.display()))?);
            let mut v = Vec::new();
            for (i, line) in f.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let mut rec: PredictionInput =
                    serde_json::from_str(&line).with_context(|| format!("{}:{}", p.display(), i + 1))?;
                rec.mention = lemma_key(&rec.mention);
                v.push(rec);
            }
            v
        }
        (None, Some(p)) => snapshot::load_annotations(&p)?
            .into_iter()
            .map(|a| PredictionInput {
                mention: a.mention,
                context: a.context,
                gold_sense: Some(a.sense),
            })
            .collect(),
        (None, None) => bail!("one of --input or --dataset is required"),
    };
    let pool = mentionlink::store::thread_pool(workers)?;
    let results: Vec<_> = pool.install(|| {
        use rayon::prelude::*;
        inputs
            .par_iter()
            .map(|r| pipeline::disambiguate(&cache, &kb, None, &r.mention, &r.context))
            .collect()
    });
    let mut w = BufWriter::new(File::create(out)?);
    for (r, res) in inputs.iter().zip(results) {
        let linked = res?;
        let line = PredictionLine {
            mention: r.mention.clone(),
            gold_sense: r.gold_sense,
            predicted_sense: linked.as_ref().map(|l| l.prediction.top_sense),
            probabilities: linked.map(|l| l.prediction.probabilities).unwrap_or_default(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    println!("{} predictions", inputs.len());
    Ok(ExitCode::SUCCESS)
}

fn prune_train(
    store_dir: &Path,
    datasets: &Path,
    dataset: &str,
    method: Method,
    args: PrunerArgs,
    workers: usize,
) -> Result<ExitCode> {
    let (cache, kb) = open_cache(store_dir)?;
    let anns = load_dataset(datasets, dataset)?;
    let samples = pipeline::prune_samples(&cache, &kb, &anns, workers)?;
    let strategy = PrunerRegistry::default().create(strategy_name(method, args.scope), &options(&args))?;
    let key = strategy.key();
    let fitted = fit_all(strategy.as_ref(), &samples);
    for (mention, pruner) in &fitted {
        cache.store().save_pruner(mention, &key, pruner)?;
    }
    println!("fitted {key} pruners for {} mention(s) on {dataset}", fitted.len());
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    store: &Path,
    datasets: &Path,
    dataset: &str,
    pruner: PrunerChoice,
    args: PrunerArgs,
    policy: PolicyArg,
    json: Option<PathBuf>,
    quantiles: Option<PathBuf>,
    workers: usize,
) -> Result<ExitCode> {
    let (cache, kb) = open_cache(store)?;
    let anns = load_dataset(datasets, dataset)?;
    let key = pruner_key(pruner, &args)?;
    let policy = match policy {
        PolicyArg::Exclude => MacroPolicy::Exclude,
        PolicyArg::IncludeAsOne => MacroPolicy::IncludeAsOne,
    };
    let report = pipeline::evaluate(&cache, &kb, key.as_deref(), &anns, policy, workers)?;
    print!("{}", report.table());
    if let Some(p) = json {
        std::fs::write(&p, serde_json::to_string_pretty(&report)?)?;
    }
    if let Some(p) = quantiles {
        std::fs::write(&p, bands_csv(&precision_vs_candidates(&report)))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn inspect_features(store: &Path, mention: &str, context: &str, json: bool) -> Result<ExitCode> {
    let store = ModelStore::open(store)?;
    let mention = lemma_key(mention);
    if json {
        println!("{}", store.export_json(&mention)?);
        return Ok(ExitCode::SUCCESS);
    }
    let kb = store.load_kb()?;
    let model = store
        .load_model(&mention)?
        .with_context(|| format!("no model for {mention:?}"))?;
    let tokens = mentionlink::text::lemmatize(context);
    let cv = ContextVector::from_tokens(&tokens);
    println!("mention {mention:?}, context length {}", cv.length);
    let prediction = model.predict(&mention, &tokens)?;
    for (i, cc) in model.candidate_contexts.iter().enumerate() {
        println!(
            "\ncandidate {} {:?}  p = {:.6}",
            cc.sense,
            kb.title(cc.sense).unwrap_or("?"),
            prediction.probabilities[i]
        );
        for (j, part) in cc.parts.iter().enumerate() {
            let s = similarity(&cv, part);
            let top: Vec<String> = part
                .iter()
                .take(8)
                .map(|r| format!("{}:{:.3}", r.word, r.tfidf))
                .collect();
            println!(
                "  part {j}: wo {:.4} ws {:.4} to {:.4} ts {:.4}  [{}{}]",
                s.wo,
                s.ws,
                s.to,
                s.ts,
                top.join(" "),
                if part.len() > 8 { " ..." } else { "" }
            );
        }
    }
    println!("\n{} features ({} per part)", model.dimension(), MEASURES);
    println!("predicted {} ({:.6})", prediction.top_sense, prediction.top_probability);
    Ok(ExitCode::SUCCESS)
}

fn annotate(store: &Path, input: &Path, out: &Path, pruner: Option<String>, ids: bool) -> Result<ExitCode> {
    let annotator = Annotator::from_store(ModelStore::open(store)?, pruner)?;
    let req: AnnotateRequest = serde_json::from_str(&std::fs::read_to_string(input)?)?;
    let resp = annotator.annotate_document(&req, ids);
    std::fs::write(out, serde_json::to_string_pretty(&resp)?)?;
    Ok(ExitCode::SUCCESS)
}

fn serve(store: &Path, host: &str, port: u16, pruner: Option<String>) -> Result<ExitCode> {
    let state = Arc::new(AppState::open(store, pruner));
    let addr = format!("{host}:{port}").parse().context("bad --host/--port")?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(addr, state))?;
    Ok(ExitCode::SUCCESS)
}

fn synth(out: &Path, mentions: usize, annotations_per_sense: usize, seed: u64) -> Result<ExitCode> {
    let corpus = generate(&SynthConfig {
        mentions,
        annotations_per_sense,
        seed,
        ..Default::default()
    });
    std::fs::write(out, corpus.to_jsonl())?;
    info!("wrote {} articles", corpus.articles.len());
    println!(
        "{} articles, {} ambiguous mentions",
        corpus.articles.len(),
        corpus.mentions.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { input, out, n_context } => ingest(&input, &out, n_context),
        Command::Extend {
            corpus,
            out,
            no_generality_filter,
        } => extend(&corpus, &out, no_generality_filter),
        Command::Split {
            annotations,
            out_dir,
            ratio,
            seed,
            cap,
        } => split(&annotations, &out_dir, ratio, seed, cap),
        Command::Scramble {
            corpus,
            datasets,
            name,
            source,
            keep,
            noise,
            seed,
        } => scramble(&corpus, &datasets, name, source, keep, noise, seed),
        Command::Train {
            corpus,
            datasets,
            store,
            nfw,
            nfp,
            workers,
            seed,
            mentions_filter,
        } => train(&corpus, &datasets, &store, nfw, nfp, workers, seed, mentions_filter),
        Command::Predict {
            store,
            input,
            dataset,
            out,
            workers,
        } => predict(&store, input, dataset, &out, workers),
        Command::PruneTrain {
            store,
            datasets,
            dataset,
            method,
            pruner,
            workers,
        } => prune_train(&store, &datasets, &dataset, method, pruner, workers),
        Command::Evaluate {
            store,
            datasets,
            dataset,
            pruner,
            pruner_args,
            macro_policy,
            json,
            quantiles,
            workers,
        } => evaluate(
            &store,
            &datasets,
            &dataset,
            pruner,
            pruner_args,
            macro_policy,
            json,
            quantiles,
            workers,
        ),
        Command::InspectFeatures {
            store,
            mention,
            context,
            json,
        } => inspect_features(&store, &mention, &context, json),
        Command::Annotate {
            store,
            input,
            out,
            pruner,
            pruner_args,
            ids,
        } => annotate(&store, &input, &out, pruner_key(pruner, &pruner_args)?, ids),
        Command::Serve {
            store,
            port,
            host,
            pruner,
            pruner_args,
        } => serve(&store, &host, port, pruner_key(pruner, &pruner_args)?),
        Command::Synth {
            out,
            mentions,
            annotations_per_sense,
            seed,
        } => synth(&out, mentions, annotations_per_sense, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
