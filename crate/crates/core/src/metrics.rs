//! Edit-distance scoring.

/// Minimal edit counts turning a reference into a hypothesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// Error rate against a reference of `ref_len` tokens; `None` when the
    /// reference is empty.
    pub fn rate(&self, ref_len: usize) -> Option<f64> {
        (ref_len > 0).then(|| self.total() as f64 / ref_len as f64)
    }
}

impl std::ops::Add for EditCounts {
    type Output = EditCounts;

    fn add(self, o: EditCounts) -> EditCounts {
        EditCounts {
            substitutions: self.substitutions + o.substitutions,
            insertions: self.insertions + o.insertions,
            deletions: self.deletions + o.deletions,
        }
    }
}

/// Among minimal alignments, prefers substitutions, then deletions, then
/// insertions.
pub fn levenshtein<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut prev: Vec<EditCounts> = (0..=m)
        .map(|j| EditCounts {
            insertions: j,
            ..EditCounts::default()
        })
        .collect();
    for i in 1..=n {
        let mut cur = Vec::with_capacity(m + 1);
        cur.push(EditCounts {
            deletions: i,
            ..EditCounts::default()
        });
        for j in 1..=m {
            let mut diag = prev[j - 1];
            if reference[i - 1] != hypothesis[j - 1] {
                diag.substitutions += 1;
            }
            let mut del = prev[j];
            del.deletions += 1;
            let mut ins = cur[j - 1];
            ins.insertions += 1;
            let mut best = diag;
            for cand in [del, ins] {
                if cand.total() < best.total() {
                    best = cand;
                }
            }
            cur.push(best);
        }
        prev = cur;
    }
    prev[m]
}

/// Character-level counts; `ref_len` is the reference length in characters.
pub fn char_errors(reference: &str, hypothesis: &str) -> (EditCounts, usize) {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    (levenshtein(&r, &h), r.len())
}

/// Word-level counts over whitespace-split tokens.
pub fn word_errors(reference: &str, hypothesis: &str) -> (EditCounts, usize) {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    (levenshtein(&r, &h), r.len())
}

/// Corpus CER: summed edits over summed reference lengths.
pub fn corpus_cer<'a>(pairs: impl IntoIterator<Item = (&'a [usize], &'a [usize])>) -> Option<f64> {
    let mut edits = 0;
    let mut len = 0;
    for (r, h) in pairs {
        edits += levenshtein(r, h).total();
        len += r.len();
    }
    (len > 0).then(|| edits as f64 / len as f64)
}
