//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cmatch::adapt::{centroid_csv, filter_pseudo, mean_paired_distance, metrics_csv, Method, PseudoLabel, PseudoLabelSet};
use cmatch::assign::StrategyKind;
use cmatch::config::RunConfig;
use cmatch::ctc::{collapse, ctc_loss, viterbi_path, CharSet};
use cmatch::experiment::{
    ablation_csv, assignment_csv, build_task, centroid_report, compare_assignments, median, prepare, run_methods,
};
use cmatch::mmd::{cmatch_loss, mmd_sq_biased, KernelSpec, LabeledFeatureBag};
use cmatch::model::{attention_log_prob, beam_search, joint_loss, BeamConfig, JointLossConfig, ModelDims, ModelParams};
use cmatch::numkit::{grad_check, Matrix};
use cmatch::Error;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn ctc_sweep() -> (usize, usize, f64, f64, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut feasible, mut mismatched, mut worst_sum, mut worst_max, mut collapse_failures) = (0, 0, 0.0f64, 0.0f64, 0);
    for _ in 0..1000 {
        let n = rng.random_range(1..=6);
        let v = rng.random_range(2..=4);
        let cs = CharSet::letters(v - 1).unwrap();
        let m = rng.random_range(0..=3);
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(1..v)).collect();
        let lattice = random_lattice(n, v, &mut rng);
        let oracle = brute_force_ctc(&lattice, &labels, &cs);
        let loss = ctc_loss(&lattice, &labels, &cs);
        let path = viterbi_path(&lattice, &labels, &cs);
        match (oracle, loss, path) {
            (Some((sum, max)), Ok(loss), Ok(path)) => {
                feasible += 1;
                worst_sum = worst_sum.max((-loss.nll - sum).abs());
                worst_max = worst_max.max((path.score - max).abs());
                if collapse(&path.symbols, &cs) != labels || collapse_ref(&path.symbols, cs.blank()) != labels {
                    collapse_failures += 1;
                }
            }
            (None, Err(Error::InfeasibleAlignment { .. }), Err(Error::InfeasibleAlignment { .. })) => {}
            _ => mismatched += 1,
        }
    }
    (feasible, mismatched, worst_sum, worst_max, collapse_failures, 1000)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (feasible, mismatched, worst_sum, worst_max, _, total) = ctc_sweep();
    let t = secs(start.elapsed());
    outcome(
        mismatched == 0 && worst_sum <= 1e-9 && worst_max <= 1e-9 && t < 30.0,
        format!(
            "{total} lattices ({feasible} feasible, {mismatched} feasibility mismatches), \
             max |loss - path sum| {worst_sum:.2e}, max |viterbi - path max| {worst_max:.2e}, {t:.2}s"
        ),
    )
}

fn tiny_dims() -> ModelDims {
    ModelDims {
        input_dim: 3,
        hidden_dim: 4,
        feature_dim: 3,
        decoder_dim: 3,
        attention_dim: 3,
        subsample: 1,
    }
}

fn random_bag<R: Rng>(rng: &mut R, rows: usize, dim: usize, chars: usize, cs: &CharSet) -> LabeledFeatureBag<f64> {
    let labels: Vec<usize> = (0..rows).map(|i| 1 + (i + rng.random_range(0..chars)) % chars).collect();
    LabeledFeatureBag::new(random_matrix(rows, dim, rng), labels, cs).unwrap()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let eps = 1e-6;
    let (mut joint, mut cm, mut mmd) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0;
    for i in 0..100u64 {
        let cs = CharSet::letters(3).unwrap();
        let dims = tiny_dims();
        let params = ModelParams::<f64>::init(cs.clone(), dims, i).unwrap();
        let n = rng.random_range(4..=7);
        let frames = random_matrix(n, dims.input_dim, &mut rng);
        let m = rng.random_range(1..=2);
        let transcript: Vec<usize> = (0..m).map(|_| rng.random_range(1..=3)).collect();
        let cfg = JointLossConfig { lambda: 0.3 };
        let r = grad_check(
            |t: &[Matrix<f64>]| {
                let p = ModelParams::from_tensors(cs.clone(), dims, t.to_vec(), 0.3)?;
                let l = joint_loss(&p, &frames, &transcript, &cfg)?;
                Ok((l.loss, l.grads.tensors().to_vec()))
            },
            params.tensors(),
            eps,
        );
        match r {
            Ok(e) => joint = joint.max(e),
            Err(_) => failures += 1,
        }

        let kernel = if i % 2 == 0 {
            KernelSpec::Linear
        } else {
            KernelSpec::rbf(rng.random_range(0.5..2.0)).unwrap()
        };
        let dim = rng.random_range(1..=4);
        let (ns, nt) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let xs = random_matrix(ns, dim, &mut rng);
        let xt = random_matrix(nt, dim, &mut rng);
        let r = grad_check(
            |p: &[Matrix<f64>]| {
                let v = mmd_sq_biased(&p[0], &p[1], &kernel)?;
                Ok((v.value, vec![v.grad_source, v.grad_target]))
            },
            &[xs, xt],
            eps,
        );
        match r {
            Ok(e) => mmd = mmd.max(e),
            Err(_) => failures += 1,
        }

        let (na, nb) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let src = random_bag(&mut rng, na, dim, 3, &cs);
        let tgt = random_bag(&mut rng, nb, dim, 3, &cs);
        let (sl, tl) = (src.labels().to_vec(), tgt.labels().to_vec());
        let r = grad_check(
            |p: &[Matrix<f64>]| {
                let s = LabeledFeatureBag::new(p[0].clone(), sl.clone(), &cs)?;
                let t = LabeledFeatureBag::new(p[1].clone(), tl.clone(), &cs)?;
                let v = cmatch_loss(&s, &t, &cs, &kernel)?;
                Ok((v.value, vec![v.grad_source, v.grad_target]))
            },
            &[src.features().clone(), tgt.features().clone()],
            eps,
        );
        match r {
            Ok(e) => cm = cm.max(e),
            Err(Error::NoOverlap) => {}
            Err(_) => failures += 1,
        }
    }
    let t = secs(start.elapsed());
    let worst = joint.max(cm).max(mmd);
    outcome(
        failures == 0 && worst < 1e-4 && t < 60.0,
        format!(
            "100 instances each, max relative error joint {joint:.2e}, cmatch {cm:.2e}, mmd {mmd:.2e}, \
             {failures} failures, {t:.2}s"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut self_gap, mut linear_gap, mut sym_gap, mut double_sum_gap) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..1000 {
        let dim = rng.random_range(1..=5);
        let xs = random_matrix(rng.random_range(1..=8), dim, &mut rng);
        let xt = random_matrix(rng.random_range(1..=8), dim, &mut rng);
        let bw = rng.random_range(0.3..3.0);
        let kernel = if i % 2 == 0 { KernelSpec::Linear } else { KernelSpec::rbf(bw).unwrap() };
        self_gap = self_gap.max(mmd_sq_biased(&xs, &xs, &kernel).unwrap().value.abs());
        let ab = mmd_sq_biased(&xs, &xt, &kernel).unwrap().value;
        let ba = mmd_sq_biased(&xt, &xs, &kernel).unwrap().value;
        sym_gap = sym_gap.max((ab - ba).abs());
        if i % 2 == 0 {
            linear_gap = linear_gap.max((ab - squared_mean_difference(&xs, &xt)).abs());
            double_sum_gap = double_sum_gap.max((ab - mmd_double_sum(&xs, &xt, linear).max(0.0)).abs());
        } else {
            double_sum_gap = double_sum_gap.max((ab - mmd_double_sum(&xs, &xt, rbf(bw)).max(0.0)).abs());
        }
    }
    outcome(
        self_gap <= 1e-12 && linear_gap <= 1e-10 && sym_gap <= 1e-12 && double_sum_gap <= 1e-10,
        format!(
            "1000 instances, |mmd(X,X)| {self_gap:.2e}, linear vs mean difference {linear_gap:.2e}, \
             asymmetry {sym_gap:.2e}, vs double sum {double_sum_gap:.2e}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let (feasible, mismatched, _, _, failures, _) = ctc_sweep();
    outcome(
        failures == 0 && mismatched == 0,
        format!("{feasible} feasible instances, {failures} forced paths not collapsing to their transcript"),
    )
}

fn all_sequences(chars: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 1..=chars {
                let mut t: Vec<usize> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lambda = 0.3;
    let cfg = BeamConfig {
        lambda,
        beam_width: 64,
        max_len: 3,
    };
    let mut mismatches = 0;
    for i in 0..100u64 {
        let cs = CharSet::letters(2).unwrap();
        let dims = tiny_dims();
        let mut params = ModelParams::<f64>::init(cs.clone(), dims, 100 + i).unwrap();
        params.scale_in_place(3.0);
        let frames = random_matrix(rng.random_range(3..=6), dims.input_dim, &mut rng);
        let lattice = cmatch::model::ctc_lattice(&params, &frames).unwrap();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for seq in all_sequences(2, 3) {
            let Some((ctc, _)) = brute_force_ctc(&lattice, &seq, &cs) else {
                continue;
            };
            let att = attention_log_prob(&params, &frames, &seq).unwrap();
            let score = (1.0 - lambda) * att + lambda * ctc;
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, seq));
            }
        }
        let found = beam_search(&params, &frames, &cfg).unwrap();
        if best.map(|(_, s)| s) != Some(found.best().tokens.clone()) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("100 models, {mismatches} beam results differ from the enumerated argmax"))
}

fn criterion_6() -> Outcome {
    let set = PseudoLabelSet::new(
        (0..10)
            .map(|i| PseudoLabel {
                index: i,
                id: format!("u{i}"),
                transcript: vec![1],
                confidence: -(i as f64) * 0.1,
            })
            .collect(),
    )
    .unwrap();
    let kept = filter_pseudo(&set, 0.7).unwrap();
    let top_seven = kept.entries().iter().map(|e| e.index).eq(0..7);
    let mut previous = 0;
    let mut monotone = true;
    for k in 1..=100 {
        let n = filter_pseudo(&set, k as f64 / 100.0).unwrap().len();
        monotone &= n >= previous;
        previous = n;
    }
    outcome(
        kept.len() == 7 && top_seven && monotone,
        format!("kept {} of 10 at 0.7 (most confident first: {top_seven}), monotone over 100 ratios: {monotone}", kept.len()),
    )
}

/// Every CSV written for one seed of the desk-scale experiment.
#[derive(PartialEq)]
struct SeedRun {
    csvs: Vec<(String, String)>,
    cer: [f64; 4],
    centroids: Option<(f64, f64)>,
    strategies: [f64; 3],
}

fn desk_run(seed: u64) -> SeedRun {
    let mut run = RunConfig::default();
    run.set_seed(seed);
    let task = build_task::<f64>(&run.task, seed).unwrap();
    let prepared = prepare(&task, &run.task, &run.adapt).unwrap();
    let methods = [Method::SourceOnly, Method::SelfTraining, Method::DomainMmd, Method::Cmatch];
    let runs = run_methods(&task, &prepared, &run.adapt, &methods).unwrap();
    let cmatch_params = &runs[3].trained.params;
    let before = centroid_report(&prepared.pretrained.params, &task).unwrap();
    let after = centroid_report(cmatch_params, &task).unwrap();
    let strategies = compare_assignments(&task, &prepared, &run.adapt).unwrap();
    let mut csvs = vec![
        ("pretrain.metrics.csv".to_string(), metrics_csv(&prepared.pretrained.metrics)),
        ("ablation.csv".to_string(), ablation_csv(&runs)),
        ("centroids.csv".to_string(), centroid_csv(&before, &after, cmatch_params.charset())),
        ("assignments.csv".to_string(), assignment_csv(&strategies)),
    ];
    for r in &runs {
        csvs.push((format!("{}.metrics.csv", r.method), metrics_csv(&r.trained.metrics)));
    }
    let by_kind = |k: StrategyKind| strategies.iter().find(|s| s.strategy == k).unwrap().target.cer();
    SeedRun {
        csvs,
        cer: [0, 1, 2, 3].map(|i| runs[i].target.cer()),
        centroids: mean_paired_distance(&before, &after),
        strategies: [StrategyKind::PseudoCtcPred, StrategyKind::FrameAverage, StrategyKind::CtcAlign].map(by_kind),
    }
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn criterion_7(runs: &[SeedRun], elapsed: f64) -> Outcome {
    let med = |i: usize| median(&runs.iter().map(|r| r.cer[i]).collect::<Vec<_>>());
    let (src, st, dm, cm) = (med(0), med(1), med(2), med(3));
    let reduction = (src - cm) / src;
    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| format!("[{:.4} {:.4} {:.4} {:.4}]", r.cer[0], r.cer[1], r.cer[2], r.cer[3]))
        .collect();
    outcome(
        cm < st && st < src && cm <= dm && reduction >= 0.10 && elapsed < 900.0,
        format!(
            "median target CER source-only {src:.4}, self-training {st:.4}, mmd-domain {dm:.4}, cmatch {cm:.4}, \
             relative reduction {:.1}%, {elapsed:.0}s; per seed (src st mmd cmatch) {}",
            100.0 * reduction,
            per_seed.join(" ")
        ),
    )
}

fn criterion_8(runs: &[SeedRun]) -> Outcome {
    let pairs: Vec<String> = runs
        .iter()
        .map(|r| match r.centroids {
            Some((b, a)) => format!("{b:.3}->{a:.3}"),
            None => "none".into(),
        })
        .collect();
    let pass = runs.iter().all(|r| matches!(r.centroids, Some((b, a)) if a < b));
    outcome(pass, format!("mean centroid distance per seed {}", pairs.join(" ")))
}

fn criterion_9(runs: &[SeedRun]) -> Outcome {
    let med = |i: usize| median(&runs.iter().map(|r| r.strategies[i]).collect::<Vec<_>>());
    let m = [med(0), med(1), med(2)];
    let spread = m.iter().cloned().fold(f64::MIN, f64::max) - m.iter().cloned().fold(f64::MAX, f64::min);
    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| format!("[{:.4} {:.4} {:.4}]", r.strategies[0], r.strategies[1], r.strategies[2]))
        .collect();
    outcome(
        spread <= 0.02,
        format!(
            "median target CER pseudo-ctc {:.4}, frame-average {:.4}, ctc-align {:.4}, spread {spread:.4}; per seed {}",
            m[0],
            m[1],
            m[2],
            per_seed.join(" ")
        ),
    )
}

fn criterion_10(first: &SeedRun) -> Outcome {
    let again = desk_run(SEEDS[0]);
    let differing: Vec<&str> = first
        .csvs
        .iter()
        .zip(&again.csvs)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    outcome(
        differing.is_empty() && first.csvs.len() == again.csvs.len(),
        format!(
            "seed {} rerun, {} CSVs compared, differing: [{}]",
            SEEDS[0],
            first.csvs.len(),
            differing.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "ctc oracle", criterion_1()),
        (2, "gradients", criterion_2()),
        (3, "mmd identities", criterion_3()),
        (4, "alignment collapse", criterion_4()),
        (5, "beam oracle", criterion_5()),
        (6, "pseudo-label filter", criterion_6()),
    ];
    for (n, name, o) in &results {
        println!("criterion {n} [{name}]: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let start = Instant::now();
    let runs: Vec<SeedRun> = SEEDS.iter().map(|&s| desk_run(s)).collect();
    let elapsed = secs(start.elapsed());
    let desk = vec![
        (7, "desk-scale ablation", criterion_7(&runs, elapsed)),
        (8, "centroid distances", criterion_8(&runs)),
        (9, "assignment strategies", criterion_9(&runs)),
        (10, "determinism", criterion_10(&runs[0])),
    ];
    for (n, name, o) in &desk {
        println!("criterion {n} [{name}]: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    results.extend(desk);
    let failed: Vec<String> = results.iter().filter(|r| !r.2.pass).map(|r| r.0.to_string()).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
