use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{NliExample, NliLabel, StsExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDataset {
    pub records: Vec<StsExample>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceCorpus {
    pub sentences: Vec<String>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliDataset {
    pub records: Vec<NliExample>,
    pub source: String,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Every sentence, `a` then `b` for each pair in order.
    pub fn sentences(&self) -> Vec<String> {
        self.records
            .iter()
            .flat_map(|r| [r.sentence_a.clone(), r.sentence_b.clone()])
            .collect()
    }

    /// TSV form: `sentence_a TAB sentence_b TAB score`, LF line endings.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!("{}\t{}\t{}\n", r.sentence_a, r.sentence_b, r.gold_score));
        }
        out
    }
}

impl SentenceCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(s);
            out.push('\n');
        }
        out
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate()
        .map(|(i, l)| (i + 1, l))
}

fn source_tag(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Parses pair TSV. Blank lines are ignored; anything else that is not
/// three tab-separated fields with a score in `[0, 5]` is rejected.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<StsExample>> {
    let invalid = |line, message: String| Error::Validation {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut records = Vec::new();
    for (no, line) in lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(invalid(no, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let (a, b) = (fields[0].trim(), fields[1].trim());
        if a.is_empty() || b.is_empty() {
            return Err(invalid(no, "empty sentence".into()));
        }
        let score: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| invalid(no, format!("unparseable score {:?}", fields[2])))?;
        if !(0.0..=5.0).contains(&score) {
            return Err(invalid(no, format!("score {score} outside [0, 5]")));
        }
        records.push(StsExample::new(a, b, score)?);
    }
    Ok(records)
}

pub fn load_pairs(path: &Path) -> Result<PairDataset> {
    Ok(PairDataset {
        records: parse_pairs(&read(path)?, path)?,
        source: source_tag(path),
    })
}

/// One sentence per line; blank lines are dropped.
pub fn parse_corpus(text: &str) -> Vec<String> {
    lines(text)
        .map(|(_, l)| l.trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn load_corpus(path: &Path) -> Result<SentenceCorpus> {
    let sentences = parse_corpus(&read(path)?);
    if sentences.is_empty() {
        log::warn!("{}: corpus is empty", path.display());
    }
    Ok(SentenceCorpus {
        sentences,
        source: source_tag(path),
    })
}

/// NLI TSV: `premise TAB hypothesis TAB label`, label by name or 0/1/2.
pub fn parse_nli(text: &str, path: &Path) -> Result<Vec<NliExample>> {
    let mut records = Vec::new();
    for (no, line) in lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| Error::Validation {
            path: path.to_path_buf(),
            line: no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(invalid(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        if fields[0].trim().is_empty() || fields[1].trim().is_empty() {
            return Err(invalid("empty sentence".into()));
        }
        let label = NliLabel::parse(fields[2]).ok_or_else(|| invalid(format!("unknown label {:?}", fields[2])))?;
        records.push(NliExample {
            premise: fields[0].trim().to_string(),
            hypothesis: fields[1].trim().to_string(),
            label,
        });
    }
    Ok(records)
}

pub fn load_nli(path: &Path) -> Result<NliDataset> {
    Ok(NliDataset {
        records: parse_nli(&read(path)?, path)?,
        source: source_tag(path),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("pairs.tsv")
    }

    #[test]
    fn well_formed_pairs_in_order() {
        let text = "a b\tc d\t1.5\nx\ty\t0\nsame\tsame\t5\n";
        let r = parse_pairs(text, p()).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[0].sentence_a, "a b");
        assert_eq!(r[2].gold_score, 5.0);
    }

    #[test]
    fn out_of_range_score_names_the_line() {
        let err = parse_pairs("a\tb\t1\nc\td\t7.0\n", p()).unwrap_err();
        match err {
            Error::Validation { line, ref message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains('7'), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().starts_with("pairs.tsv:2:"));
    }

    #[test]
    fn malformed_rows_are_rejected() {
        assert!(parse_pairs("a\tb\n", p()).is_err());
        assert!(parse_pairs("a\tb\tfive\n", p()).is_err());
        assert!(parse_pairs("\tb\t1\n", p()).is_err());
        assert!(parse_pairs("a\tb\tNaN\n", p()).is_err());
    }

    #[test]
    fn crlf_matches_lf() {
        let lf = "one two\tthree\t2.25\nfour\tfive six\t4\n";
        let crlf = lf.replace('\n', "\r\n");
        assert_eq!(parse_pairs(lf, p()).unwrap(), parse_pairs(&crlf, p()).unwrap());
    }

    #[test]
    fn corpus_drops_blank_lines() {
        assert_eq!(parse_corpus("first one\n\nsecond one\n"), ["first one", "second one"]);
        assert!(parse_corpus("").is_empty());
    }

    #[test]
    fn nli_rows() {
        let r = parse_nli("a\tb\tneutral\nc\td\t2\n", Path::new("nli.tsv")).unwrap();
        assert_eq!(r[0].label, NliLabel::Neutral);
        assert_eq!(r[1].label, NliLabel::Contradiction);
        assert!(parse_nli("a\tb\tunsure\n", Path::new("nli.tsv")).is_err());
    }
}
