//! Directory layout:
//!
//! ```text
//! <dir>/manifest.tsv
//! <dir>/frames/<id>.txt
//! ```
//!
//! The manifest starts with `#`-prefixed metadata lines (format version,
//! charset, domain tag, label visibility), followed by one line per
//! utterance: `id<TAB>frames/<id>.txt<TAB>transcript-or-dash<TAB>domain`.
//! A frame file holds `N D` on its first line and then `N` lines of `D`
//! space-separated values with 17 significant digits.

use std::fs;
use std::path::Path;

use super::{validate_id, DomainCorpus, Utterance};
use crate::ctc::CharSet;
use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const CORPUS_HEADER: &str = "#cmatch-corpus\tv1";
const FRAMES_DIR: &str = "frames";
const ABSENT: &str = "-";

fn frames_to_string<T: Scalar>(m: &Matrix<T>) -> String {
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    for row in m.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_text()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_corpus<T: Scalar>(corpus: &DomainCorpus<T>, dir: &Path) -> Result<()> {
    corpus.validate()?;
    let frames_dir = dir.join(FRAMES_DIR);
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let cs = &corpus.charset;
    let mut manifest = String::new();
    manifest.push_str(CORPUS_HEADER);
    manifest.push('\n');
    manifest.push_str(&format!(
        "#charset\t{}\t{}\n",
        cs.blank(),
        cs.symbols().iter().collect::<String>()
    ));
    manifest.push_str(&format!("#domain\t{}\n", corpus.domain_tag));
    manifest.push_str(&format!(
        "#labels\t{}\n",
        if corpus.labels_hidden { "hidden" } else { "visible" }
    ));
    for u in &corpus.utterances {
        let rel = format!("{FRAMES_DIR}/{}.txt", u.id);
        let path = dir.join(&rel);
        fs::write(&path, frames_to_string(&u.frames)).map_err(|e| Error::io(&path, e))?;
        let transcript = match &u.transcript {
            Some(t) => {
                let text = cs.decode(t);
                if text == ABSENT {
                    return Err(Error::InvalidTranscript(format!(
                        "transcript of {} collides with the absent marker",
                        u.id
                    )));
                }
                text
            }
            None => ABSENT.to_string(),
        };
        manifest.push_str(&format!("{}\t{rel}\t{transcript}\t{}\n", u.id, corpus.domain_tag));
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

fn read_frames<T: Scalar>(path: &Path) -> Result<Matrix<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, head) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty frame file"))?;
    let dims: Vec<usize> = head
        .split(' ')
        .map(|s| s.parse().map_err(|_| Error::parse(path, 1, format!("bad header {head:?}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(Error::parse(path, 1, "header must be `N D`"));
    }
    let (n, d) = (dims[0], dims[1]);
    let mut data = Vec::with_capacity(n * d);
    for r in 0..n {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, r + 2, format!("expected {n} frame lines")))?;
        let before = data.len();
        for tok in line.split(' ') {
            data.push(T::parse_text(tok).ok_or_else(|| Error::parse(path, no, format!("bad number {tok:?}")))?);
        }
        if data.len() - before != d {
            return Err(Error::parse(path, no, format!("expected {d} values")));
        }
    }
    if let Some((no, extra)) = lines.next() {
        if !extra.is_empty() {
            return Err(Error::parse(path, no, "trailing content"));
        }
    }
    Matrix::new(n, d, data).map_err(|e| Error::parse(path, 1, e.to_string()))
}

pub fn read_corpus<T: Scalar>(dir: &Path) -> Result<DomainCorpus<T>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut charset = None;
    let mut domain = None;
    let mut hidden = false;
    let mut utterances = Vec::new();
    let mut saw_header = false;
    for (i, line) in text.lines().enumerate() {
        let no = i + 1;
        if line.is_empty() {
            continue;
        }
        if no == 1 {
            if line != CORPUS_HEADER {
                return Err(Error::parse(&path, no, format!("unknown header {line:?}")));
            }
            saw_header = true;
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let (key, value) = meta
                .split_once('\t')
                .ok_or_else(|| Error::parse(&path, no, "metadata needs key and value"))?;
            match key {
                "charset" => {
                    let (blank, symbols) = value
                        .split_once('\t')
                        .ok_or_else(|| Error::parse(&path, no, "charset needs blank index and symbols"))?;
                    let blank = blank.parse().map_err(|_| Error::parse(&path, no, "bad blank index"))?;
                    charset = Some(
                        CharSet::new(symbols.chars().collect(), blank)
                            .map_err(|e| Error::parse(&path, no, e.to_string()))?,
                    );
                }
                "domain" => domain = Some(value.to_string()),
                "labels" => {
                    hidden = match value {
                        "hidden" => true,
                        "visible" => false,
                        other => return Err(Error::parse(&path, no, format!("labels must be hidden or visible, got {other:?}"))),
                    }
                }
                other => return Err(Error::parse(&path, no, format!("unknown metadata key {other:?}"))),
            }
            continue;
        }
        let cs = charset
            .as_ref()
            .ok_or_else(|| Error::parse(&path, no, "utterance before #charset"))?;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::parse(&path, no, format!("expected 4 columns, found {}", cols.len())));
        }
        validate_id(cols[0]).map_err(|e| Error::parse(&path, no, e.to_string()))?;
        let frames = read_frames(&dir.join(cols[1]))?;
        let transcript = if cols[2] == ABSENT {
            None
        } else {
            Some(cs.encode(cols[2]).map_err(|e| Error::parse(&path, no, e.to_string()))?)
        };
        if let Some(d) = &domain {
            if d != cols[3] {
                return Err(Error::parse(&path, no, format!("domain {} differs from #domain {d}", cols[3])));
            }
        }
        let utt = Utterance::new(cols[0], frames, transcript).map_err(|e| Error::parse(&path, no, e.to_string()))?;
        utterances.push(utt);
    }
    if !saw_header {
        return Err(Error::parse(&path, 1, "missing corpus header"));
    }
    let charset = charset.ok_or_else(|| Error::parse(&path, 1, "missing #charset"))?;
    let domain = domain.ok_or_else(|| Error::parse(&path, 1, "missing #domain"))?;
    let corpus = DomainCorpus {
        charset,
        domain_tag: domain,
        utterances,
        labels_hidden: hidden,
    };
    corpus.validate().map_err(|e| Error::parse(&path, 0, e.to_string()))?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{apply_shift, generate, DomainShiftSpec, GeneratorSpec};

    fn corpus() -> DomainCorpus<f64> {
        generate(&GeneratorSpec::new(CharSet::letters(4).unwrap(), 6, 3)).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus();
        write_corpus(&c, dir.path()).unwrap();
        let r: DomainCorpus<f64> = read_corpus(dir.path()).unwrap();
        assert_eq!(r, c);
        let dir2 = tempfile::tempdir().unwrap();
        write_corpus(&r, dir2.path()).unwrap();
        assert_eq!(
            fs::read(dir.path().join(MANIFEST_FILE)).unwrap(),
            fs::read(dir2.path().join(MANIFEST_FILE)).unwrap()
        );
    }

    #[test]
    fn hidden_labels_survive() {
        let dir = tempfile::tempdir().unwrap();
        let t = apply_shift(&corpus(), &DomainShiftSpec::environment(0.2, 1, "rain").unwrap()).unwrap();
        write_corpus(&t, dir.path()).unwrap();
        let r: DomainCorpus<f64> = read_corpus(dir.path()).unwrap();
        assert!(r.labels_hidden);
        assert_eq!(r.domain_tag, "rain");
        assert!(r.training_transcript(0).is_none());
        assert!(r.reference_transcript(0).is_some());
    }

    #[test]
    fn missing_frame_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus();
        write_corpus(&c, dir.path()).unwrap();
        fs::remove_file(dir.path().join("frames").join(format!("{}.txt", c.utterances[2].id))).unwrap();
        assert!(read_corpus::<f64>(dir.path()).is_err());
    }

    #[test]
    fn malformed_line_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&corpus(), dir.path()).unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        let mut text = fs::read_to_string(&p).unwrap();
        text.push_str("broken line\n");
        fs::write(&p, text).unwrap();
        match read_corpus::<f64>(dir.path()) {
            Err(Error::Parse { file, line, .. }) => {
                assert!(file.ends_with(MANIFEST_FILE));
                assert_eq!(line, 11);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_corpus_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = DomainCorpus::<f64>::new(CharSet::letters(2).unwrap(), "clean", vec![]).unwrap();
        write_corpus(&c, dir.path()).unwrap();
        let r: DomainCorpus<f64> = read_corpus(dir.path()).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.domain_tag, "clean");
    }

    #[test]
    fn bad_number_reports_frame_line() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus();
        write_corpus(&c, dir.path()).unwrap();
        let p = dir.path().join("frames").join(format!("{}.txt", c.utterances[0].id));
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[1] = lines[1].replacen(' ', " x", 1);
        let text = lines.join("\n") + "\n";
        fs::write(&p, text).unwrap();
        match read_corpus::<f64>(dir.path()) {
            Err(Error::Parse { file, line, .. }) => {
                assert_eq!(file, p);
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
