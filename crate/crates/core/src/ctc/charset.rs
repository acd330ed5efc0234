use crate::error::{Error, Result};

/// Ordered symbol inventory with a distinguished blank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharSet {
    symbols: Vec<char>,
    blank: usize,
}

pub const DEFAULT_BLANK: char = '-';

impl CharSet {
    pub fn new(symbols: Vec<char>, blank: usize) -> Result<Self> {
        if blank >= symbols.len() {
            return Err(Error::InvalidArgument(format!(
                "blank index {blank} out of {} symbols",
                symbols.len()
            )));
        }
        for (i, c) in symbols.iter().enumerate() {
            if symbols[..i].contains(c) {
                return Err(Error::InvalidArgument(format!("duplicate symbol {c:?}")));
            }
            if *c == '\t' || *c == '\n' || *c == '\r' {
                return Err(Error::InvalidArgument("control character in charset".into()));
            }
        }
        if symbols.len() < 2 {
            return Err(Error::InvalidArgument("charset needs a character besides blank".into()));
        }
        Ok(Self { symbols, blank })
    }

    /// Blank at index 0 followed by `chars`.
    pub fn with_blank_first(chars: &str) -> Result<Self> {
        let mut symbols = vec![DEFAULT_BLANK];
        symbols.extend(chars.chars());
        Self::new(symbols, 0)
    }

    /// Letters `a` through the `n`-th letter, plus blank.
    pub fn letters(n: usize) -> Result<Self> {
        if n == 0 || n > 26 {
            return Err(Error::InvalidArgument(format!("{n} letters requested")));
        }
        Self::with_blank_first(&('a'..='z').take(n).collect::<String>())
    }

    /// 26 letters, apostrophe and space, plus blank. End-of-sequence lives in
    /// the decoder vocabulary.
    pub fn english() -> Self {
        Self::with_blank_first("abcdefghijklmnopqrstuvwxyz' ").expect("valid inventory")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    pub fn is_blank(&self, index: usize) -> bool {
        index == self.blank
    }

    pub fn symbol(&self, index: usize) -> char {
        self.symbols[index]
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    /// Indices of every non-blank symbol, ascending.
    pub fn characters(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.symbols.len()).filter(move |&i| i != self.blank)
    }

    pub fn num_characters(&self) -> usize {
        self.symbols.len() - 1
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.symbols.iter().position(|&s| s == c)
    }

    /// Transcript text to symbol indices. Blank and unknown symbols are errors.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| match self.index_of(c) {
                Some(i) if i != self.blank => Ok(i),
                Some(_) => Err(Error::InvalidTranscript(format!("blank symbol in {text:?}"))),
                None => Err(Error::InvalidTranscript(format!("unknown symbol {c:?} in {text:?}"))),
            })
            .collect()
    }

    pub fn decode(&self, labels: &[usize]) -> String {
        labels.iter().map(|&i| self.symbols[i]).collect()
    }

    pub fn validate_transcript(&self, labels: &[usize]) -> Result<()> {
        for &l in labels {
            if l >= self.symbols.len() {
                return Err(Error::InvalidTranscript(format!("label {l} out of range")));
            }
            if l == self.blank {
                return Err(Error::InvalidTranscript("blank inside transcript".into()));
            }
        }
        Ok(())
    }
}
