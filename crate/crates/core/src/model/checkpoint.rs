//! Text checkpoint format.
//!
//! ```text
//! cmatch-checkpoint v1
//! charset<TAB><blank index><TAB><symbols>
//! dims<TAB><input> <hidden> <feature> <decoder> <attention> <subsample>
//! lambda<TAB><value>
//! param<TAB><name><TAB><rows><TAB><cols>
//! <rows lines of cols space-separated values>
//! ...
//! ```
//!
//! Values use 17 significant digits, so write -> read -> write is byte-identical.

use std::fs;
use std::path::Path;

use super::params::{ModelDims, ModelParams, Param};
use crate::ctc::CharSet;
use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar};

pub const CHECKPOINT_HEADER: &str = "cmatch-checkpoint v1";

pub fn checkpoint_to_string<T: Scalar>(params: &ModelParams<T>) -> String {
    let cs = params.charset();
    let d = params.dims();
    let mut out = String::new();
    out.push_str(CHECKPOINT_HEADER);
    out.push('\n');
    out.push_str(&format!(
        "charset\t{}\t{}\n",
        cs.blank(),
        cs.symbols().iter().collect::<String>()
    ));
    out.push_str(&format!(
        "dims\t{} {} {} {} {} {}\n",
        d.input_dim, d.hidden_dim, d.feature_dim, d.decoder_dim, d.attention_dim, d.subsample
    ));
    out.push_str(&format!("lambda\t{}\n", params.lambda.to_text()));
    for (p, t) in Param::ALL.iter().zip(params.tensors()) {
        out.push_str(&format!("param\t{}\t{}\t{}\n", p.name(), t.rows(), t.cols()));
        for row in t.iter_rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_text()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn write_checkpoint<T: Scalar>(params: &ModelParams<T>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, checkpoint_to_string(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<T: Scalar>(path: &Path) -> Result<ModelParams<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text, path)
}

fn field<'a>(line: Option<(usize, &'a str)>, key: &str, path: &Path) -> Result<(usize, &'a str)> {
    let (no, line) = line.ok_or_else(|| Error::parse(path, 0, format!("missing {key} line")))?;
    let rest = line
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('\t'))
        .ok_or_else(|| Error::parse(path, no, format!("expected {key}")))?;
    Ok((no, rest))
}

pub fn parse_checkpoint<T: Scalar>(text: &str, path: &Path) -> Result<ModelParams<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, CHECKPOINT_HEADER)) => {}
        Some((no, other)) => return Err(Error::parse(path, no, format!("unknown header {other:?}"))),
        None => return Err(Error::parse(path, 1, "empty checkpoint")),
    }

    let (no, rest) = field(lines.next(), "charset", path)?;
    let (blank, symbols) = rest
        .split_once('\t')
        .ok_or_else(|| Error::parse(path, no, "charset needs blank index and symbols"))?;
    let blank: usize = blank
        .parse()
        .map_err(|_| Error::parse(path, no, "bad blank index"))?;
    let charset = CharSet::new(symbols.chars().collect(), blank).map_err(|e| Error::parse(path, no, e.to_string()))?;

    let (no, rest) = field(lines.next(), "dims", path)?;
    let d: Vec<usize> = rest
        .split(' ')
        .map(|s| s.parse().map_err(|_| Error::parse(path, no, format!("bad dimension {s:?}"))))
        .collect::<Result<_>>()?;
    if d.len() != 6 {
        return Err(Error::parse(path, no, "dims needs six values"));
    }
    let dims = ModelDims {
        input_dim: d[0],
        hidden_dim: d[1],
        feature_dim: d[2],
        decoder_dim: d[3],
        attention_dim: d[4],
        subsample: d[5],
    };

    let (no, rest) = field(lines.next(), "lambda", path)?;
    let lambda = f64::parse_text(rest).ok_or_else(|| Error::parse(path, no, "bad lambda"))?;

    let mut tensors = Vec::with_capacity(Param::ALL.len());
    for expected in Param::ALL {
        let (no, rest) = field(lines.next(), "param", path)?;
        let parts: Vec<&str> = rest.split('\t').collect();
        if parts.len() != 3 {
            return Err(Error::parse(path, no, "param needs name, rows, cols"));
        }
        if parts[0] != expected.name() {
            return Err(Error::parse(
                path,
                no,
                format!("expected parameter {}, found {}", expected.name(), parts[0]),
            ));
        }
        let rows: usize = parts[1].parse().map_err(|_| Error::parse(path, no, "bad rows"))?;
        let cols: usize = parts[2].parse().map_err(|_| Error::parse(path, no, "bad cols"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(path, no, format!("truncated block {}", expected.name())))?;
            let before = data.len();
            for tok in line.split(' ') {
                data.push(T::parse_text(tok).ok_or_else(|| Error::parse(path, no, format!("bad number {tok:?}")))?);
            }
            if data.len() - before != cols {
                return Err(Error::parse(path, no, format!("expected {cols} values")));
            }
        }
        tensors.push(Matrix::new(rows, cols, data).map_err(|e| Error::parse(path, no, e.to_string()))?);
    }
    if let Some((no, extra)) = lines.next() {
        if !extra.is_empty() {
            return Err(Error::parse(path, no, "trailing content"));
        }
    }
    ModelParams::from_tensors(charset, dims, tensors, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_identical() {
        let cs = CharSet::letters(5).unwrap();
        let mut p = ModelParams::<f64>::init(cs, ModelDims::new(4), 9).unwrap();
        p.lambda = 0.3;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&p, &path).unwrap();
        let q: ModelParams<f64> = read_checkpoint(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.lambda, 0.3);
        assert_eq!(checkpoint_to_string(&q), fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn rejects_bad_header_and_truncation() {
        let p = Path::new("x.ckpt");
        assert!(parse_checkpoint::<f64>("nope\n", p).is_err());
        let cs = CharSet::letters(2).unwrap();
        let m = ModelParams::<f64>::init(cs, ModelDims::new(2), 1).unwrap();
        let text = checkpoint_to_string(&m);
        let cut: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        match parse_checkpoint::<f64>(&cut, p) {
            Err(Error::Parse { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
