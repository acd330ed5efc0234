use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cmatch::adapt::{
    centroid_csv, filter_pseudo, mean_paired_distance, metrics_csv, pretrain, pseudo_label, run_method, Method,
};
use cmatch::config::RunConfig;
use cmatch::corpus::{read_corpus, write_corpus, DomainCorpus};
use cmatch::experiment::{
    ablation_csv, assignment_csv, build_task, centroid_report, compare_assignments, decode_corpus, score, MethodRun,
    Prepared, Task,
};
use cmatch::metrics::{char_errors, word_errors};
use cmatch::model::{read_checkpoint, write_checkpoint, ModelParams};
use cmatch::{Corpus64, Error, ModelParams64};

const AFTER_HELP: &str = "\
CSV schemas (columns never reordered):
  pretrain/adapt metrics: epoch,l_src,l_tgt,l_match,total,dev_loss,dev_cer,no_overlap_steps,skipped_utterances
  adapt ablation.csv:     method,target_cer,target_wer,char_errors,ref_chars,epochs,best_epoch
  adapt centroids.csv:    character,before,after
  evaluate:               id,ref_chars,char_errors,cer,ref_words,word_errors,wer,flag
  compare-assignments:    strategy,target_cer,target_wer,char_errors,ref_chars

Exit status: 0 success, 2 usage or config error, 3 data error, 4 numerical failure.";

#[derive(Parser, Debug)]
#[command(name = "cmatch", version, about = "Character-level distribution matching experiments", after_help = AFTER_HELP)]
struct Cli {
    /// Flat key = value run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Domains {
    /// Source corpus directory (falls back to `source` in the config).
    #[arg(long)]
    source: Option<PathBuf>,
    /// Target corpus directory (falls back to `target` in the config).
    #[arg(long)]
    target: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Writes <out>/source (labelled) and <out>/target (shifted, labels hidden).
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains on the source corpus; writes the checkpoint and <out>.metrics.csv.
    Pretrain {
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pseudo-labels the target and adapts with each listed method.
    ///
    /// Writes <out>/<method>.ckpt and <out>/<method>.metrics.csv per method,
    /// plus <out>/ablation.csv (target scores) and, when cmatch runs,
    /// <out>/centroids.csv.
    Adapt {
        /// Comma-separated methods, or `all`:
        /// cmatch, mmd-domain, source-only, self-training-only.
        #[arg(long, default_value = "cmatch")]
        method: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        domains: Domains,
        #[arg(long)]
        out: PathBuf,
    },
    /// Beam-search decodes a corpus to `id<TAB>transcript<TAB>confidence` lines.
    Decode {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scores decoded transcripts against a corpus's reference transcripts.
    Evaluate {
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs cmatch once per frame-label assignment strategy.
    CompareAssignments {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        domains: Domains,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::NonFinite(_) => 4,
        _ => 3,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn required(flag: Option<&PathBuf>, fallback: Option<&PathBuf>, name: &str) -> Result<PathBuf, Error> {
    flag.or(fallback)
        .cloned()
        .ok_or_else(|| Error::Config(format!("--{name} is required (or set `{name}` in the config)")))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_model(path: &Path) -> Result<ModelParams64, Error> {
    read_checkpoint::<f64>(path)
}

fn load_corpus(path: &Path) -> Result<Corpus64, Error> {
    read_corpus::<f64>(path)
}

fn parse_methods(s: &str) -> Result<Vec<Method>, Error> {
    if s == "all" {
        return Ok(Method::ALL.to_vec());
    }
    let mut out: Vec<Method> = Vec::new();
    for part in s.split(',') {
        let m: Method = part.trim().parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Generate { out } => {
            let task: Task<f64> = build_task(&cfg.task, cfg.seed)?;
            write_corpus(&task.source, &out.join("source"))?;
            write_corpus(&task.target, &out.join("target"))?;
            write(&out.join("config.txt"), &cfg.to_text())?;
            eprintln!(
                "wrote {} source and {} target utterances to {}",
                task.source.len(),
                task.target.len(),
                out.display()
            );
        }
        Command::Pretrain { source, out } => {
            let src = load_corpus(&required(source.as_ref(), cfg.source.as_ref(), "source")?)?;
            let trained = pretrain(&src, cfg.task.dims(), &cfg.adapt)?;
            write_checkpoint(&trained.params, out)?;
            write(&sibling(out, ".metrics.csv"), &metrics_csv(&trained.metrics))?;
            eprintln!("pretrained {} epochs, kept epoch {}", trained.metrics.len(), trained.best_epoch);
        }
        Command::Adapt {
            method,
            checkpoint,
            domains,
            out,
        } => {
            let methods = parse_methods(method)?;
            let ckpt = required(checkpoint.as_ref(), cfg.checkpoint.as_ref(), "checkpoint")?;
            let model = load_model(&ckpt)?;
            let task = Task {
                source: load_corpus(&required(domains.source.as_ref(), cfg.source.as_ref(), "source")?)?,
                target: load_corpus(&required(domains.target.as_ref(), cfg.target.as_ref(), "target")?)?,
            };
            let needs_pseudo = methods.iter().any(|&m| m != Method::SourceOnly);
            let pseudo = if needs_pseudo {
                filter_pseudo(&pseudo_label(&model, &task.target, &cfg.adapt)?, cfg.adapt.keep_ratio)?
            } else {
                Default::default()
            };
            let mut runs: Vec<MethodRun<f64>> = Vec::new();
            for &m in &methods {
                let ckpt_out = out.join(format!("{m}.ckpt"));
                let trained = run_method(m, &model, &task.source, &task.target, &pseudo, &cfg.adapt)?;
                if m == Method::SourceOnly {
                    fs::create_dir_all(out).map_err(|e| Error::Io {
                        path: out.clone(),
                        source: e,
                    })?;
                    fs::copy(&ckpt, &ckpt_out).map_err(|e| Error::Io {
                        path: ckpt_out.clone(),
                        source: e,
                    })?;
                } else {
                    write_checkpoint(&trained.params, &ckpt_out)?;
                }
                write(&out.join(format!("{m}.metrics.csv")), &metrics_csv(&trained.metrics))?;
                let hyps: Vec<Vec<usize>> = decode_corpus(&trained.params, &task.target, &cfg.adapt.beam())?
                    .into_iter()
                    .map(|(h, _)| h)
                    .collect();
                let target = score(&task.target, &hyps)?;
                eprintln!("{m}: target CER {:.4}", target.cer());
                runs.push(MethodRun {
                    method: m,
                    trained,
                    target,
                });
            }
            write(&out.join("ablation.csv"), &ablation_csv(&runs))?;
            if let Some(r) = runs.iter().find(|r| r.method == Method::Cmatch) {
                let before = centroid_report(&model, &task)?;
                let after = centroid_report(&r.trained.params, &task)?;
                write(&out.join("centroids.csv"), &centroid_csv(&before, &after, model.charset()))?;
                if let Some((b, a)) = mean_paired_distance(&before, &after) {
                    eprintln!("mean centroid distance {b:.4} -> {a:.4}");
                }
            }
        }
        Command::Decode {
            checkpoint,
            corpus,
            out,
        } => {
            let model = load_model(&required(checkpoint.as_ref(), cfg.checkpoint.as_ref(), "checkpoint")?)?;
            let c = load_corpus(corpus)?;
            check_charset(&model, &c)?;
            let hyps = decode_corpus(&model, &c, &cfg.adapt.beam())?;
            let mut text = String::from("id\ttranscript\tconfidence\n");
            for (u, (h, conf)) in c.utterances.iter().zip(hyps) {
                text.push_str(&format!("{}\t{}\t{conf:.9}\n", u.id, c.charset.decode(&h)));
            }
            write(out, &text)?;
        }
        Command::Evaluate {
            transcripts,
            reference,
            out,
        } => {
            let c = load_corpus(reference)?;
            let hyps = read_transcripts(transcripts)?;
            write(out, &evaluate_csv(&c, &hyps, transcripts)?)?;
        }
        Command::CompareAssignments {
            checkpoint,
            domains,
            out,
        } => {
            let model = load_model(&required(checkpoint.as_ref(), cfg.checkpoint.as_ref(), "checkpoint")?)?;
            let task = Task {
                source: load_corpus(&required(domains.source.as_ref(), cfg.source.as_ref(), "source")?)?,
                target: load_corpus(&required(domains.target.as_ref(), cfg.target.as_ref(), "target")?)?,
            };
            let pseudo = filter_pseudo(&pseudo_label(&model, &task.target, &cfg.adapt)?, cfg.adapt.keep_ratio)?;
            let prepared = Prepared {
                pretrained: cmatch::adapt::Trained {
                    params: model,
                    metrics: Vec::new(),
                    best_epoch: 0,
                },
                pseudo,
            };
            let runs = compare_assignments(&task, &prepared, &cfg.adapt)?;
            write(out, &assignment_csv(&runs))?;
        }
    }
    Ok(())
}

fn check_charset(model: &ModelParams<f64>, c: &DomainCorpus<f64>) -> Result<(), Error> {
    if c.charset != *model.charset() {
        return Err(Error::InvalidArgument("corpus and checkpoint use different charsets".into()));
    }
    if let Some(d) = c.frame_dim() {
        if d != model.dims().input_dim {
            return Err(Error::InvalidShape(format!(
                "corpus frame width {d}, checkpoint expects {}",
                model.dims().input_dim
            )));
        }
    }
    Ok(())
}

fn read_transcripts(path: &Path) -> Result<Vec<(String, String)>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "id\ttranscript\tconfidence" {
                return Err(Error::Parse {
                    file: path.into(),
                    line: 1,
                    msg: "expected header `id<TAB>transcript<TAB>confidence`".into(),
                });
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                file: path.into(),
                line: i + 1,
                msg: format!("expected 3 columns, found {}", cols.len()),
            });
        }
        out.push((cols[0].to_string(), cols[1].to_string()));
    }
    Ok(out)
}

fn rate(edits: usize, len: usize) -> String {
    if len == 0 {
        "nan".into()
    } else {
        format!("{:.6}", edits as f64 / len as f64)
    }
}

/// Per-utterance rows in reference order, then a `TOTAL` row pooling all
/// edits. Empty references yield a `nan` rate flagged `empty-reference`.
fn evaluate_csv(c: &Corpus64, hyps: &[(String, String)], path: &Path) -> Result<String, Error> {
    let by_id: std::collections::HashMap<&str, &str> = hyps.iter().map(|(i, h)| (i.as_str(), h.as_str())).collect();
    if by_id.len() != hyps.len() {
        return Err(Error::Parse {
            file: path.into(),
            line: 0,
            msg: "duplicate utterance id".into(),
        });
    }
    let mut text = String::from("id,ref_chars,char_errors,cer,ref_words,word_errors,wer,flag\n");
    let (mut tc, mut tce, mut tw, mut twe) = (0, 0, 0, 0);
    for (i, u) in c.utterances.iter().enumerate() {
        let hyp = by_id.get(u.id.as_str()).ok_or_else(|| Error::Parse {
            file: path.into(),
            line: 0,
            msg: format!("no transcript for utterance {}", u.id),
        })?;
        let reference = c
            .reference_transcript(i)
            .ok_or(Error::MissingTranscript("evaluate"))?;
        let r = c.charset.decode(reference);
        let (ce, cn) = char_errors(&r, hyp);
        let (we, wn) = word_errors(&r, hyp);
        let flag = if cn == 0 { "empty-reference" } else { "" };
        text.push_str(&format!(
            "{},{cn},{},{},{wn},{},{},{flag}\n",
            u.id,
            ce.total(),
            rate(ce.total(), cn),
            we.total(),
            rate(we.total(), wn)
        ));
        tc += cn;
        tce += ce.total();
        tw += wn;
        twe += we.total();
    }
    let flag = if tc == 0 { "empty-reference" } else { "" };
    text.push_str(&format!(
        "TOTAL,{tc},{tce},{},{tw},{twe},{},{flag}\n",
        rate(tce, tc),
        rate(twe, tw)
    ));
    Ok(text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cmatch::adapt::METRICS_HEADER;
    use cmatch::experiment::{ABLATION_HEADER, ASSIGNMENT_HEADER};

    #[test]
    fn headers_match_library() {
        assert!(AFTER_HELP.contains(METRICS_HEADER));
        assert!(AFTER_HELP.contains(ABLATION_HEADER));
        assert!(AFTER_HELP.contains(ASSIGNMENT_HEADER));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::NonFinite("x".into())), 4);
        assert_eq!(exit_code(&Error::EmptyDomain("x".into())), 3);
    }

    #[test]
    fn method_lists() {
        assert_eq!(parse_methods("all").unwrap().len(), 4);
        assert_eq!(parse_methods("cmatch,cmatch,source-only").unwrap(), vec![Method::Cmatch, Method::SourceOnly]);
        assert!(parse_methods("adv").is_err());
    }
}
