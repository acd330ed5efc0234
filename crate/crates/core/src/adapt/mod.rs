//! Source pretraining, pseudo-labelling, and adaptation with a matching
//! term, plus the centroid diagnostic.
//!
//! Every adaptation step draws one source and one target batch of equal
//! size and minimizes
//!
//! ```text
//! 0.5 * (L_src + L_tgt) + gamma * L_match
//! ```
//!
//! where each domain loss is the batch mean of the joint CTC-attention loss
//! (target transcripts are pseudo labels) and `L_match` depends on the
//! [`Method`].

mod centroid;
mod config;
mod pseudo;
mod train;

pub use centroid::{
    centroid_csv, centroid_distances, character_centroids, mean_paired_distance, CentroidTable, CENTROID_HEADER,
};
pub use config::{AdaptConfig, Method};
pub use pseudo::{filter_pseudo, kept_count, pseudo_label, PseudoLabel, PseudoLabelSet};
pub use train::{clip_gradients, metrics_csv, EpochMetrics, Matching, StepValues, Trained, METRICS_HEADER};

use train::{objective, train_loop, AssignSource, Sample, TrainSets};

use crate::corpus::DomainCorpus;
use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams};
use crate::numkit::{Matrix, Scalar};

fn check_dims<T: Scalar>(params: &ModelParams<T>, corpus: &DomainCorpus<T>) -> Result<()> {
    if let Some(d) = corpus.frame_dim() {
        if d != params.dims().input_dim {
            return Err(Error::shape(format!(
                "corpus {} has frame width {d}, model expects {}",
                corpus.domain_tag,
                params.dims().input_dim
            )));
        }
    }
    if corpus.charset != *params.charset() {
        return Err(Error::InvalidArgument(format!(
            "corpus {} uses a different charset than the model",
            corpus.domain_tag
        )));
    }
    Ok(())
}

fn source_samples<'a, T: Scalar>(
    source: &'a DomainCorpus<T>,
    range: std::ops::Range<usize>,
    cfg: &AdaptConfig,
) -> Result<Vec<Sample<'a, T>>> {
    range
        .map(|i| {
            let t = source.training_transcript(i).ok_or(Error::MissingTranscript("source training"))?;
            Ok(Sample {
                frames: &source.utterances[i].frames,
                supervised: Some(t),
                assign: if cfg.reference_source_transcripts {
                    AssignSource::Given(t)
                } else {
                    AssignSource::Greedy
                },
                reference: Some(t),
            })
        })
        .collect()
}

fn source_split<T>(source: &DomainCorpus<T>, cfg: &AdaptConfig) -> usize {
    let n = source.utterances.len();
    let tail = if n >= 2 && cfg.dev_fraction > 0.0 {
        (((n as f64) * cfg.dev_fraction).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    n - tail
}

/// Trains a fresh model on the source corpus with the joint loss; the last
/// `dev_fraction` of utterances drive early stopping.
pub fn pretrain<T: Scalar>(source: &DomainCorpus<T>, dims: ModelDims, cfg: &AdaptConfig) -> Result<Trained<T>> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::EmptyDomain(format!("source corpus {}", source.domain_tag)));
    }
    let mut params = ModelParams::init(source.charset.clone(), dims, cfg.seed)?;
    params.lambda = cfg.lambda;
    check_dims(&params, source)?;
    let cut = source_split(source, cfg);
    let sets = TrainSets {
        src_train: source_samples(source, 0..cut, cfg)?,
        tgt_train: Vec::new(),
        src_dev: source_samples(source, cut..source.len(), cfg)?,
        tgt_dev: Vec::new(),
    };
    train_loop(params, &sets, Matching::None, cfg, cfg.epochs, cfg.step_size)
}

fn target_samples<'a, T: Scalar>(
    target: &'a DomainCorpus<T>,
    pseudo: &'a PseudoLabelSet,
    cfg: &AdaptConfig,
) -> Result<(Vec<Sample<'a, T>>, Vec<Sample<'a, T>>)> {
    let stride = if cfg.dev_fraction > 0.0 {
        (1.0 / cfg.dev_fraction).round().max(2.0) as usize
    } else {
        usize::MAX
    };
    let mut train = Vec::new();
    let mut dev = Vec::new();
    for (k, e) in pseudo.entries().iter().enumerate() {
        let u = target.utterances.get(e.index).filter(|u| u.id == e.id).ok_or_else(|| {
            Error::InvalidArgument(format!("pseudo label {} does not match the target corpus", e.id))
        })?;
        let s = Sample {
            frames: &u.frames,
            supervised: Some(&e.transcript),
            assign: AssignSource::Given(&e.transcript),
            reference: None,
        };
        if stride != usize::MAX && k % stride == stride - 1 {
            dev.push(s);
        } else {
            train.push(s);
        }
    }
    Ok((train, dev))
}

/// Continues training `model` on source plus pseudo-labelled target data
/// with the matching term selected by `method`. `source-only` returns the
/// model untouched.
pub fn run_method<T: Scalar>(
    method: Method,
    model: &ModelParams<T>,
    source: &DomainCorpus<T>,
    target: &DomainCorpus<T>,
    pseudo: &PseudoLabelSet,
    cfg: &AdaptConfig,
) -> Result<Trained<T>> {
    cfg.validate()?;
    check_dims(model, source)?;
    check_dims(model, target)?;
    let matching = match method {
        Method::SourceOnly => {
            return Ok(Trained {
                params: model.clone(),
                metrics: Vec::new(),
                best_epoch: 0,
            })
        }
        Method::SelfTraining => Matching::None,
        Method::DomainMmd => Matching::Domain,
        Method::Cmatch => Matching::Character,
    };
    if source.is_empty() {
        return Err(Error::EmptyDomain(format!("source corpus {}", source.domain_tag)));
    }
    let cut = source_split(source, cfg);
    let (tgt_train, tgt_dev) = target_samples(target, pseudo, cfg)?;
    let sets = TrainSets {
        src_train: source_samples(source, 0..cut, cfg)?,
        tgt_train,
        src_dev: source_samples(source, cut..source.len(), cfg)?,
        tgt_dev,
    };
    train_loop(model.clone(), &sets, matching, cfg, cfg.adapt_epochs, cfg.adapt_step_size)
}

/// Character-level matching (the full method).
pub fn adapt<T: Scalar>(
    model: &ModelParams<T>,
    source: &DomainCorpus<T>,
    target: &DomainCorpus<T>,
    pseudo: &PseudoLabelSet,
    cfg: &AdaptConfig,
) -> Result<Trained<T>> {
    run_method(Method::Cmatch, model, source, target, pseudo, cfg)
}

/// Matching on utterance-averaged features, no character conditioning.
pub fn adapt_domain_mmd<T: Scalar>(
    model: &ModelParams<T>,
    source: &DomainCorpus<T>,
    target: &DomainCorpus<T>,
    pseudo: &PseudoLabelSet,
    cfg: &AdaptConfig,
) -> Result<Trained<T>> {
    run_method(Method::DomainMmd, model, source, target, pseudo, cfg)
}

/// Objective terms and gradient for explicit batches: source utterances with
/// their transcripts, target utterances with pseudo transcripts.
pub fn step_objective<T: Scalar>(
    model: &ModelParams<T>,
    source: &[(&Matrix<T>, &[usize])],
    target: &[(&Matrix<T>, &[usize])],
    matching: Matching,
    cfg: &AdaptConfig,
) -> Result<(StepValues, ModelParams<T>)> {
    let src: Vec<Sample<'_, T>> = source
        .iter()
        .map(|&(frames, t)| Sample {
            frames,
            supervised: Some(t),
            assign: if cfg.reference_source_transcripts {
                AssignSource::Given(t)
            } else {
                AssignSource::Greedy
            },
            reference: Some(t),
        })
        .collect();
    let tgt: Vec<Sample<'_, T>> = target
        .iter()
        .map(|&(frames, t)| Sample {
            frames,
            supervised: Some(t),
            assign: AssignSource::Given(t),
            reference: None,
        })
        .collect();
    let (v, g) = objective(model, &src, &tgt, matching, cfg, true)?;
    Ok((v, g.expect("requested")))
}
