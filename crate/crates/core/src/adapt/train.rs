//! Minibatch SGD over the joint loss of two domains plus a matching term.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::AdaptConfig;
use crate::assign::{assign_labels, AssignmentStrategy};
use crate::ctc::{greedy_decode, CharSet, LogProbLattice};
use crate::error::{Error, Result};
use crate::metrics::corpus_cer;
use crate::mmd::{cmatch_loss, mmd_sq_biased, KernelSpec, LabeledFeatureBag};
use crate::model::{build_utterance, JointLossConfig, ModelParams, ParamVars, UtteranceGraph};
use crate::numkit::{Matrix, Scalar, Tape};

/// Which matching term joins the supervised losses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Matching {
    None,
    /// Character-conditional MMD on frame features.
    Character,
    /// MMD between utterance-averaged features.
    Domain,
}

/// Where the transcript for frame-label assignment comes from.
#[derive(Clone, Copy, Debug)]
pub(crate) enum AssignSource<'a> {
    Given(&'a [usize]),
    /// Greedy CTC decoding of the current lattice.
    Greedy,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Sample<'a, T> {
    pub frames: &'a Matrix<T>,
    pub supervised: Option<&'a [usize]>,
    pub assign: AssignSource<'a>,
    /// Reference for dev CER, when known.
    pub reference: Option<&'a [usize]>,
}

/// Per-term values of one objective evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepValues {
    pub l_src: f64,
    pub l_tgt: f64,
    pub l_match: f64,
    pub total: f64,
    /// Domain weight applied to each of `l_src` and `l_tgt`.
    pub domain_weight: f64,
    /// The matching term was requested but could not be formed.
    pub no_overlap: bool,
    /// Utterances whose supervised loss was skipped (infeasible or empty).
    pub skipped: usize,
}

struct Forward<T> {
    tape: Tape<T>,
    pv: ParamVars,
    graph: UtteranceGraph<T>,
    skipped: bool,
}

fn forward_one<T: Scalar>(params: &ModelParams<T>, s: &Sample<'_, T>, joint: &JointLossConfig) -> Result<Forward<T>> {
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    match build_utterance(&mut tape, &pv, params, s.frames, s.supervised, joint) {
        Ok(graph) => Ok(Forward {
            tape,
            pv,
            graph,
            skipped: false,
        }),
        Err(Error::InfeasibleAlignment { .. } | Error::InvalidTranscript(_)) if s.supervised.is_some() => {
            let mut tape = Tape::new();
            let pv = params.register(&mut tape);
            let graph = build_utterance(&mut tape, &pv, params, s.frames, None, joint)?;
            Ok(Forward {
                tape,
                pv,
                graph,
                skipped: true,
            })
        }
        Err(e) => Err(e),
    }
}

fn lattice_of<T: Scalar>(f: &Forward<T>) -> LogProbLattice<T> {
    LogProbLattice::from_normalized(f.tape.value(f.graph.log_probs).clone())
}

struct MatchTerm<T> {
    value: T,
    /// Per-utterance partials w.r.t. the feature matrix, sources first.
    partials: Vec<Option<Matrix<T>>>,
}

fn character_term<T: Scalar>(
    fwd: &[Forward<T>],
    samples: &[&Sample<'_, T>],
    n_src: usize,
    strategy: &AssignmentStrategy,
    kernel: &KernelSpec,
    cs: &CharSet,
) -> Result<Option<MatchTerm<T>>> {
    let dim = fwd[0].tape.value(fwd[0].graph.features).cols();
    // (utterance, frame) of every bag row, per domain
    let mut owners: [Vec<(usize, usize)>; 2] = [Vec::new(), Vec::new()];
    let mut rows: [Vec<T>; 2] = [Vec::new(), Vec::new()];
    let mut labels: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (u, (f, s)) in fwd.iter().zip(samples).enumerate() {
        let d = usize::from(u >= n_src);
        let lattice = lattice_of(f);
        let decoded;
        let transcript = match s.assign {
            AssignSource::Given(t) => t,
            AssignSource::Greedy => {
                decoded = greedy_decode(&lattice, cs);
                &decoded
            }
        };
        let a = assign_labels(strategy, &lattice, Some(transcript), cs)?;
        let feats = f.tape.value(f.graph.features);
        for (frame, label) in a.kept() {
            owners[d].push((u, frame));
            rows[d].extend_from_slice(feats.row(frame));
            labels[d].push(label);
        }
    }
    if labels[0].is_empty() || labels[1].is_empty() {
        return Ok(None);
    }
    let [rs, rt] = rows;
    let [ls, lt] = labels;
    let src = LabeledFeatureBag::new(Matrix::new(ls.len(), dim, rs)?, ls, cs)?;
    let tgt = LabeledFeatureBag::new(Matrix::new(lt.len(), dim, rt)?, lt, cs)?;
    let v = match cmatch_loss(&src, &tgt, cs, kernel) {
        Ok(v) => v,
        Err(Error::NoOverlap) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut partials: Vec<Option<Matrix<T>>> = vec![None; fwd.len()];
    for (grad, own) in [(&v.grad_source, &owners[0]), (&v.grad_target, &owners[1])] {
        for (r, &(u, frame)) in own.iter().enumerate() {
            let n = fwd[u].tape.value(fwd[u].graph.features).rows();
            let p = partials[u].get_or_insert_with(|| Matrix::zeros(n, dim));
            p.row_mut(frame).copy_from_slice(grad.row(r));
        }
    }
    Ok(Some(MatchTerm {
        value: v.value,
        partials,
    }))
}

fn domain_term<T: Scalar>(fwd: &[Forward<T>], n_src: usize, kernel: &KernelSpec) -> Result<Option<MatchTerm<T>>> {
    if n_src == 0 || n_src == fwd.len() {
        return Ok(None);
    }
    let means: Vec<Vec<T>> = fwd
        .iter()
        .map(|f| f.tape.value(f.graph.features).mean_rows().into_data())
        .collect();
    let xs = Matrix::from_rows(&means[..n_src])?;
    let xt = Matrix::from_rows(&means[n_src..])?;
    let v = mmd_sq_biased(&xs, &xt, kernel)?;
    let partials = fwd
        .iter()
        .enumerate()
        .map(|(u, f)| {
            let feats = f.tape.value(f.graph.features);
            let g = if u < n_src {
                v.grad_source.row(u)
            } else {
                v.grad_target.row(u - n_src)
            };
            let inv = T::one() / T::from_usize_lossy(feats.rows());
            let row: Vec<T> = g.iter().map(|&x| x * inv).collect();
            let data = (0..feats.rows()).flat_map(|_| row.iter().copied()).collect();
            Some(Matrix::from_raw(feats.rows(), feats.cols(), data))
        })
        .collect();
    Ok(Some(MatchTerm {
        value: v.value,
        partials,
    }))
}

/// Evaluates `w * (mean L_src + mean L_tgt) + gamma * L_match`, where `w` is
/// one over the number of domains with at least one usable utterance, and
/// optionally its gradient.
pub(crate) fn objective<T: Scalar>(
    params: &ModelParams<T>,
    src: &[Sample<'_, T>],
    tgt: &[Sample<'_, T>],
    matching: Matching,
    cfg: &AdaptConfig,
    with_grad: bool,
) -> Result<(StepValues, Option<ModelParams<T>>)> {
    let joint = cfg.joint();
    let samples: Vec<&Sample<'_, T>> = src.iter().chain(tgt).collect();
    if samples.is_empty() {
        return Ok((StepValues::default(), with_grad.then(|| params.zeros_like())));
    }
    let fwd: Vec<Forward<T>> = samples
        .par_iter()
        .map(|s| forward_one(params, s, &joint))
        .collect::<Result<_>>()?;
    let n_src = src.len();

    let mut values = StepValues {
        skipped: fwd.iter().filter(|f| f.skipped).count(),
        ..StepValues::default()
    };
    let mut counts = [0usize; 2];
    let mut sums = [T::zero(); 2];
    for (u, f) in fwd.iter().enumerate() {
        if let Some(loss) = f.graph.loss {
            let d = usize::from(u >= n_src);
            counts[d] += 1;
            sums[d] += f.tape.value(loss).item();
        }
    }
    let domains = counts.iter().filter(|&&c| c > 0).count();
    let domain_weight = if domains == 0 {
        T::zero()
    } else {
        T::one() / T::from_usize_lossy(domains)
    };
    let mean = |d: usize| {
        if counts[d] == 0 {
            T::zero()
        } else {
            sums[d] / T::from_usize_lossy(counts[d])
        }
    };
    let (l_src, l_tgt) = (mean(0), mean(1));

    let gamma = T::lit(cfg.gamma);
    let term = if cfg.gamma > 0.0 {
        let t = match matching {
            Matching::None => None,
            Matching::Character => {
                character_term(&fwd, &samples, n_src, &cfg.assignment(), &cfg.kernel, params.charset())?
            }
            Matching::Domain => domain_term(&fwd, n_src, &cfg.kernel)?,
        };
        values.no_overlap = matching != Matching::None && t.is_none();
        t
    } else {
        None
    };
    let l_match = term.as_ref().map_or(T::zero(), |t| t.value);
    let total = domain_weight * (l_src + l_tgt) + gamma * l_match;
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("objective {total}")));
    }
    values.l_src = l_src.as_f64();
    values.l_tgt = l_tgt.as_f64();
    values.l_match = l_match.as_f64();
    values.total = total.as_f64();
    values.domain_weight = domain_weight.as_f64();
    if !with_grad {
        return Ok((values, None));
    }

    let partials = term.map(|t| t.partials);
    let per_utt: Vec<Option<ModelParams<T>>> = fwd
        .into_par_iter()
        .enumerate()
        .map(|(u, mut f)| -> Result<Option<ModelParams<T>>> {
            let mut terms = Vec::new();
            if let Some(loss) = f.graph.loss {
                let d = usize::from(u >= n_src);
                terms.push((domain_weight / T::from_usize_lossy(counts[d]), loss));
            }
            if let Some(p) = partials.as_ref().and_then(|p| p[u].clone()) {
                let m = f.tape.custom_scalar(T::zero(), vec![(f.graph.features, p)])?;
                terms.push((gamma, m));
            }
            if terms.is_empty() {
                return Ok(None);
            }
            let out = f.tape.weighted_sum(&terms)?;
            let mut g = f.tape.backward(out)?;
            let mut grads = params.zeros_like();
            for (t, &v) in grads.tensors_mut().iter_mut().zip(f.pv.all()) {
                *t = g.take(v);
            }
            Ok(Some(grads))
        })
        .collect::<Result<_>>()?;
    let mut grads = params.zeros_like();
    for g in per_utt.iter().flatten() {
        grads.axpy(T::one(), g)?;
    }
    Ok((values, Some(grads)))
}

/// Rescales `grads` to norm at most `max_norm`.
pub fn clip_gradients<T: Scalar>(grads: &mut ModelParams<T>, max_norm: f64) {
    let norm = grads.norm();
    let max = T::lit(max_norm);
    if norm > max {
        grads.scale_in_place(max / norm);
    }
}

/// Endless reshuffled pass over `0..n`.
pub(crate) struct BatchCycler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchCycler {
    pub fn new(n: usize, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let n = self.order.len();
        let mut out = Vec::with_capacity(size.min(n));
        while out.len() < size.min(n) {
            if self.pos == n {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// One row of the per-epoch metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub l_src: f64,
    pub l_tgt: f64,
    pub l_match: f64,
    pub total: f64,
    /// Domain-weighted supervised loss on the held-out splits; no matching term.
    pub dev_loss: f64,
    /// Greedy CTC CER on the held-out source split.
    pub dev_cer: f64,
    pub no_overlap_steps: usize,
    pub skipped_utterances: usize,
}

pub const METRICS_HEADER: &str =
    "epoch,l_src,l_tgt,l_match,total,dev_loss,dev_cer,no_overlap_steps,skipped_utterances";

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.6},{},{}\n",
            r.epoch,
            r.l_src,
            r.l_tgt,
            r.l_match,
            r.total,
            r.dev_loss,
            r.dev_cer,
            r.no_overlap_steps,
            r.skipped_utterances
        ));
    }
    out
}

pub(crate) struct TrainSets<'a, T> {
    pub src_train: Vec<Sample<'a, T>>,
    pub tgt_train: Vec<Sample<'a, T>>,
    pub src_dev: Vec<Sample<'a, T>>,
    pub tgt_dev: Vec<Sample<'a, T>>,
}

fn dev_cer<T: Scalar>(params: &ModelParams<T>, dev: &[Sample<'_, T>]) -> Result<f64> {
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = dev
        .par_iter()
        .filter_map(|s| s.reference.map(|r| (s, r)))
        .map(|(s, r)| {
            let lat = crate::model::ctc_lattice(params, s.frames)?;
            Ok((r.to_vec(), greedy_decode(&lat, params.charset())))
        })
        .collect::<Result<_>>()?;
    Ok(corpus_cer(pairs.iter().map(|(r, h)| (r.as_slice(), h.as_slice()))).unwrap_or(f64::NAN))
}

/// The result of a training run: the selected parameters and per-epoch metrics.
#[derive(Clone, Debug)]
pub struct Trained<T> {
    pub params: ModelParams<T>,
    pub metrics: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept (0 when no epoch ran).
    pub best_epoch: usize,
}

/// SGD with clipping and patience-based early stopping on the held-out
/// recognition loss (the supervised terms only); returns the best
/// parameters seen.
pub(crate) fn train_loop<T: Scalar>(
    mut params: ModelParams<T>,
    sets: &TrainSets<'_, T>,
    matching: Matching,
    cfg: &AdaptConfig,
    epochs: usize,
    step_size: f64,
) -> Result<Trained<T>> {
    let b = cfg.batch_size;
    let mut src_cycle = BatchCycler::new(sets.src_train.len(), cfg.seed, 1);
    let mut tgt_cycle = BatchCycler::new(sets.tgt_train.len(), cfg.seed, 2);
    let driver = if sets.tgt_train.is_empty() {
        sets.src_train.len()
    } else {
        sets.tgt_train.len()
    };
    let steps = driver.div_ceil(b);
    let has_dev = !(sets.src_dev.is_empty() && sets.tgt_dev.is_empty());
    let lr = T::lit(step_size);

    let mut metrics = Vec::with_capacity(epochs);
    let mut best: Option<(f64, ModelParams<T>, usize)> = None;
    let mut since_best = 0;
    for epoch in 1..=epochs {
        let mut acc = StepValues::default();
        let mut no_overlap = 0;
        for _ in 0..steps {
            let src: Vec<Sample<'_, T>> = src_cycle.next_batch(b).into_iter().map(|i| sets.src_train[i]).collect();
            let tgt: Vec<Sample<'_, T>> = tgt_cycle.next_batch(b).into_iter().map(|i| sets.tgt_train[i]).collect();
            let (v, grads) = objective(&params, &src, &tgt, matching, cfg, true)?;
            let mut grads = grads.expect("requested");
            clip_gradients(&mut grads, cfg.clip_norm);
            params.axpy(-lr, &grads)?;
            if !params.is_finite() {
                return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
            }
            acc.l_src += v.l_src;
            acc.l_tgt += v.l_tgt;
            acc.l_match += v.l_match;
            acc.total += v.total;
            acc.skipped += v.skipped;
            no_overlap += usize::from(v.no_overlap);
        }
        let k = steps.max(1) as f64;
        let (dev_loss, cer) = if has_dev {
            let (v, _) = objective(&params, &sets.src_dev, &sets.tgt_dev, Matching::None, cfg, false)?;
            (v.total, dev_cer(&params, &sets.src_dev)?)
        } else {
            (f64::NAN, f64::NAN)
        };
        metrics.push(EpochMetrics {
            epoch,
            l_src: acc.l_src / k,
            l_tgt: acc.l_tgt / k,
            l_match: acc.l_match / k,
            total: acc.total / k,
            dev_loss,
            dev_cer: cer,
            no_overlap_steps: no_overlap,
            skipped_utterances: acc.skipped,
        });
        if !has_dev {
            continue;
        }
        if best.as_ref().is_none_or(|(l, _, _)| dev_loss < *l) {
            best = Some((dev_loss, params.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience.max(1) {
                break;
            }
        }
    }
    let (params, best_epoch) = match best {
        Some((_, p, e)) => (p, e),
        None => {
            let e = metrics.len();
            (params, e)
        }
    };
    Ok(Trained {
        params,
        metrics,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycler_covers_every_index_each_pass() {
        let mut c = BatchCycler::new(10, 3, 1);
        let mut seen: Vec<usize> = (0..5).flat_map(|_| c.next_batch(2)).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert!(BatchCycler::new(0, 1, 1).next_batch(4).is_empty());
        assert_eq!(BatchCycler::new(3, 1, 1).next_batch(8).len(), 3);
    }

    #[test]
    fn cycler_is_seeded() {
        let a: Vec<usize> = BatchCycler::new(20, 5, 1).next_batch(20);
        let b: Vec<usize> = BatchCycler::new(20, 5, 1).next_batch(20);
        let c: Vec<usize> = BatchCycler::new(20, 5, 2).next_batch(20);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
