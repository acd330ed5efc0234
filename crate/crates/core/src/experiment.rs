//! Seeded end-to-end runs: build a source/target task, pretrain, pseudo-label,
//! adapt with each method, and score on the target references.

use rayon::prelude::*;

use crate::adapt::{
    centroid_distances, character_centroids, filter_pseudo, pretrain, pseudo_label, run_method, AdaptConfig,
    EpochMetrics, Method, PseudoLabelSet, Trained,
};
use crate::assign::{AssignmentStrategy, StrategyKind};
use crate::corpus::{apply_shift, generate, DomainCorpus, DomainShiftSpec, GeneratorSpec};
use crate::ctc::CharSet;
use crate::error::{Error, Result};
use crate::metrics::{levenshtein, EditCounts};
use crate::model::{beam_search, BeamConfig, ModelDims, ModelParams};
use crate::numkit::Scalar;

/// Kind and strength of the synthetic domain shift.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShiftParams {
    Device { strength: f64, bias_scale: f64 },
    Environment { amplitude: f64 },
}

/// Everything needed to build a source/target pair from a seed.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub charset: CharSet,
    pub source_utterances: usize,
    pub target_utterances: usize,
    pub transcript_len: (usize, usize),
    pub frames_per_char: (usize, usize),
    pub gap_frames: (usize, usize),
    pub input_dim: usize,
    pub jitter: f64,
    pub min_prototype_distance: f64,
    pub shift: ShiftParams,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub decoder_dim: usize,
    pub attention_dim: usize,
    pub subsample: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            charset: CharSet::letters(8).expect("8 letters"),
            source_utterances: 400,
            target_utterances: 400,
            transcript_len: (2, 5),
            frames_per_char: (2, 4),
            gap_frames: (0, 1),
            input_dim: 8,
            jitter: 0.3,
            min_prototype_distance: 2.0,
            shift: ShiftParams::Device {
                strength: 0.42,
                bias_scale: 0.5,
            },
            hidden_dim: 32,
            feature_dim: 16,
            decoder_dim: 16,
            attention_dim: 16,
            subsample: 1,
        }
    }
}

/// Decorrelated child seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl TaskSpec {
    pub fn generator(&self, num_utterances: usize, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            charset: self.charset.clone(),
            num_utterances,
            transcript_len: self.transcript_len,
            frames_per_char: self.frames_per_char,
            gap_frames: self.gap_frames,
            input_dim: self.input_dim,
            jitter: self.jitter,
            min_prototype_distance: self.min_prototype_distance,
            prototype_seed: seed,
            seed,
        }
    }

    pub fn shift_spec(&self, seed: u64) -> Result<DomainShiftSpec> {
        let s = derive_seed(seed, 3);
        match self.shift {
            ShiftParams::Device { strength, bias_scale } => {
                DomainShiftSpec::random_device(self.input_dim, strength, bias_scale, s, "device")
            }
            ShiftParams::Environment { amplitude } => DomainShiftSpec::environment(amplitude, s, "environment"),
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            feature_dim: self.feature_dim,
            decoder_dim: self.decoder_dim,
            attention_dim: self.attention_dim,
            subsample: self.subsample,
        }
    }
}

/// Source corpus with transcripts and shifted target corpus with hidden
/// transcripts, drawn over the same prototypes.
#[derive(Clone, Debug)]
pub struct Task<T> {
    pub source: DomainCorpus<T>,
    pub target: DomainCorpus<T>,
}

pub fn build_task<T: Scalar>(spec: &TaskSpec, seed: u64) -> Result<Task<T>> {
    let mut src_spec = spec.generator(spec.source_utterances, seed);
    src_spec.seed = derive_seed(seed, 1);
    let mut tgt_spec = spec.generator(spec.target_utterances, seed);
    tgt_spec.seed = derive_seed(seed, 2);
    let source: DomainCorpus<T> = generate(&src_spec)?;
    let target = apply_shift(&generate(&tgt_spec)?, &spec.shift_spec(seed)?)?;
    Ok(Task { source, target })
}

/// Best beam hypothesis per utterance, in corpus order.
pub fn decode_corpus<T: Scalar>(
    params: &ModelParams<T>,
    corpus: &DomainCorpus<T>,
    beam: &BeamConfig,
) -> Result<Vec<(Vec<usize>, f64)>> {
    corpus
        .utterances
        .par_iter()
        .map(|u| {
            let r = beam_search(params, &u.frames, beam)?;
            Ok((r.best().tokens.clone(), r.confidence().as_f64()))
        })
        .collect()
}

/// Pooled character and word edit counts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorSummary {
    pub char_edits: EditCounts,
    pub ref_chars: usize,
    pub word_edits: EditCounts,
    pub ref_words: usize,
}

impl ErrorSummary {
    pub fn cer(&self) -> f64 {
        self.char_edits.rate(self.ref_chars).unwrap_or(f64::NAN)
    }

    pub fn wer(&self) -> f64 {
        self.word_edits.rate(self.ref_words).unwrap_or(f64::NAN)
    }
}

/// Scores hypotheses against the corpus reference transcripts. Words are
/// whitespace-separated runs of decoded symbols.
pub fn score<T: Scalar>(corpus: &DomainCorpus<T>, hyps: &[Vec<usize>]) -> Result<ErrorSummary> {
    if hyps.len() != corpus.len() {
        return Err(Error::shape(format!("{} hypotheses for {} utterances", hyps.len(), corpus.len())));
    }
    let cs = &corpus.charset;
    let mut s = ErrorSummary::default();
    for (i, h) in hyps.iter().enumerate() {
        let r = corpus.reference_transcript(i).ok_or(Error::MissingTranscript("scoring"))?;
        s.char_edits = s.char_edits + levenshtein(r, h);
        s.ref_chars += r.len();
        let (rt, ht) = (cs.decode(r), cs.decode(h));
        let rw: Vec<&str> = rt.split_whitespace().collect();
        let hw: Vec<&str> = ht.split_whitespace().collect();
        s.word_edits = s.word_edits + levenshtein(&rw, &hw);
        s.ref_words += rw.len();
    }
    Ok(s)
}

pub fn evaluate<T: Scalar>(params: &ModelParams<T>, corpus: &DomainCorpus<T>, beam: &BeamConfig) -> Result<ErrorSummary> {
    let hyps: Vec<Vec<usize>> = decode_corpus(params, corpus, beam)?.into_iter().map(|(h, _)| h).collect();
    score(corpus, &hyps)
}

/// Pretrained model and its filtered pseudo labels on the target.
#[derive(Clone, Debug)]
pub struct Prepared<T> {
    pub pretrained: Trained<T>,
    pub pseudo: PseudoLabelSet,
}

pub fn prepare<T: Scalar>(task: &Task<T>, spec: &TaskSpec, cfg: &AdaptConfig) -> Result<Prepared<T>> {
    let pretrained = pretrain(&task.source, spec.dims(), cfg)?;
    let all = pseudo_label(&pretrained.params, &task.target, cfg)?;
    let pseudo = filter_pseudo(&all, cfg.keep_ratio)?;
    Ok(Prepared { pretrained, pseudo })
}

#[derive(Clone, Debug)]
pub struct MethodRun<T> {
    pub method: Method,
    pub trained: Trained<T>,
    pub target: ErrorSummary,
}

pub fn run_methods<T: Scalar>(
    task: &Task<T>,
    prepared: &Prepared<T>,
    cfg: &AdaptConfig,
    methods: &[Method],
) -> Result<Vec<MethodRun<T>>> {
    methods
        .iter()
        .map(|&method| {
            let trained = run_method(method, &prepared.pretrained.params, &task.source, &task.target, &prepared.pseudo, cfg)?;
            let target = evaluate(&trained.params, &task.target, &cfg.beam())?;
            Ok(MethodRun {
                method,
                trained,
                target,
            })
        })
        .collect()
}

pub const ABLATION_HEADER: &str = "method,target_cer,target_wer,char_errors,ref_chars,epochs,best_epoch";

pub fn ablation_csv<T>(runs: &[MethodRun<T>]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for r in runs {
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{},{},{}\n",
            r.method,
            r.target.cer(),
            r.target.wer(),
            r.target.char_edits.total(),
            r.target.ref_chars,
            r.trained.metrics.len(),
            r.trained.best_epoch
        ));
    }
    out
}

/// Per-character source/target centroid distances of one model.
pub fn centroid_report<T: Scalar>(params: &ModelParams<T>, task: &Task<T>) -> Result<Vec<(usize, Option<f64>)>> {
    let strategy = AssignmentStrategy::new(StrategyKind::CtcAlign, 0.9)?;
    let cs = params.charset();
    let src = character_centroids(params, &task.source, &strategy, cs)?;
    let tgt = character_centroids(params, &task.target, &strategy, cs)?;
    Ok(centroid_distances(&src, &tgt, cs))
}

#[derive(Clone, Debug)]
pub struct StrategyRun {
    pub strategy: StrategyKind,
    pub target: ErrorSummary,
    pub metrics: Vec<EpochMetrics>,
}

pub const ASSIGNMENT_HEADER: &str = "strategy,target_cer,target_wer,char_errors,ref_chars";

/// CMatch once per frame-label assignment strategy, from the same
/// pretrained model and pseudo labels.
pub fn compare_assignments<T: Scalar>(
    task: &Task<T>,
    prepared: &Prepared<T>,
    cfg: &AdaptConfig,
) -> Result<Vec<StrategyRun>> {
    StrategyKind::ALL
        .iter()
        .map(|&strategy| {
            let c = AdaptConfig {
                strategy,
                ..cfg.clone()
            };
            let trained = run_method(Method::Cmatch, &prepared.pretrained.params, &task.source, &task.target, &prepared.pseudo, &c)?;
            Ok(StrategyRun {
                strategy,
                target: evaluate(&trained.params, &task.target, &c.beam())?,
                metrics: trained.metrics,
            })
        })
        .collect()
}

pub fn assignment_csv(runs: &[StrategyRun]) -> String {
    let mut out = format!("{ASSIGNMENT_HEADER}\n");
    for r in runs {
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{}\n",
            r.strategy,
            r.target.cer(),
            r.target.wer(),
            r.target.char_edits.total(),
            r.target.ref_chars
        ));
    }
    out
}

/// Median of a non-empty list (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
