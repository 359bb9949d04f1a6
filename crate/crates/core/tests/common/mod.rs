#![allow(dead_code)]

use std::sync::Arc;

use mentionlink::corpus::{group_by_mention, parse_corpus, Annotation, Corpus, MentionGroup, N_CONTEXT};
use mentionlink::dataset::{cap_per_sense, flatten, scramble_groups, split_per_mention, ScrambleSpec};
use mentionlink::eval::{EvalReport, MacroPolicy};
use mentionlink::extension::{extend_corpus, ExtendOptions};
use mentionlink::features::FeatureSettings;
use mentionlink::pipeline::evaluate;
use mentionlink::regression::TrainConfig;
use mentionlink::store::{train_models, KnowledgeBase, MemoryModels};
use mentionlink::synth::{generate, SynthConfig};

pub const SPLIT_SEED: u64 = 17;

/// A synthetic corpus carried through ingest, extension, split and training.
pub struct Bench {
    pub corpus: Corpus,
    pub kb: KnowledgeBase,
    pub train: Vec<MentionGroup>,
    pub held: Vec<MentionGroup>,
    pub models: Arc<MemoryModels>,
    pub settings: FeatureSettings,
}

pub fn prepare(cfg: &SynthConfig) -> (Corpus, KnowledgeBase, Vec<MentionGroup>, Vec<MentionGroup>) {
    let synth = generate(cfg);
    let parsed = parse_corpus(synth.to_jsonl().as_bytes(), N_CONTEXT).expect("synthetic corpus parses");
    let annotations = extend_corpus(&parsed.corpus, parsed.annotations, ExtendOptions::default());
    let grouping = group_by_mention(annotations);
    let kb = KnowledgeBase::from_corpus(&parsed.corpus, &grouping);
    let groups: Vec<MentionGroup> = grouping
        .groups
        .iter()
        .map(|g| cap_per_sense(g, 5000, SPLIT_SEED))
        .collect();
    let (train, held) = split_per_mention(&groups, 0.9, SPLIT_SEED);
    (parsed.corpus, kb, train, held)
}

pub fn bench(cfg: &SynthConfig) -> Bench {
    let (corpus, kb, train, held) = prepare(cfg);
    let settings = FeatureSettings::new(100, 1);
    let models = train_models(&train, &corpus, settings, &TrainConfig::default(), 1).expect("training");
    Bench {
        corpus,
        kb,
        train,
        held,
        models: Arc::new(MemoryModels::new(models)),
        settings,
    }
}

impl Bench {
    pub fn evaluate(&self, annotations: &[Annotation], pruner: Option<&str>) -> EvalReport {
        evaluate(
            self.models.as_ref(),
            &self.kb,
            pruner,
            annotations,
            MacroPolicy::Exclude,
            1,
        )
        .expect("evaluation")
    }

    pub fn held_out(&self) -> Vec<Annotation> {
        flatten(&self.held)
    }

    pub fn scrambled(&self, groups: &[MentionGroup], keep: f64, noise: f64, seed: u64) -> Vec<Annotation> {
        let spec = ScrambleSpec::new(keep, noise, seed).unwrap();
        flatten(&scramble_groups(groups, &spec, &self.corpus))
    }
}
