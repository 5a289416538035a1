use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LabeledSentence, Tag};
use crate::error::{Error, Result};

/// On-disk corpus encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// `token<TAB>tag` lines, blank line between sentences, optional `# id = ...` header.
    Conll,
    /// One `{"id", "tokens", "labels"}` object per line.
    Jsonl,
}

impl CorpusFormat {
    /// `.jsonl`/`.json` files are JSON-lines; everything else is CoNLL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Conll,
        }
    }
}

const ID_PREFIX: &str = "# id = ";

/// Parses CoNLL-style blocks.
///
/// Sentences without an `# id = ...` header get their zero-based block index as id.
/// Tags are checked against the `O`/`B-c`/`I-c` grammar but not repaired.
pub fn parse_conll(text: &str) -> Result<Vec<LabeledSentence>> {
    let mut out = Vec::new();
    let mut id: Option<String> = None;
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    let mut block_start = 1;

    let flush = |id: &mut Option<String>,
                     tokens: &mut Vec<String>,
                     labels: &mut Vec<Tag>,
                     line: usize,
                     out: &mut Vec<LabeledSentence>|
     -> Result<()> {
        if tokens.is_empty() {
            if id.is_some() {
                return Err(Error::Parse {
                    line,
                    message: "id header without tokens".into(),
                });
            }
            return Ok(());
        }
        let sid = id.take().unwrap_or_else(|| out.len().to_string());
        out.push(LabeledSentence::new(
            sid,
            std::mem::take(tokens),
            std::mem::take(labels),
        )?);
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            flush(&mut id, &mut tokens, &mut labels, block_start, &mut out)?;
            block_start = line_no + 1;
            continue;
        }
        if let Some(rest) = line.strip_prefix(ID_PREFIX) {
            if !tokens.is_empty() || id.is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "id header must open a sentence block".into(),
                });
            }
            id = Some(rest.trim().to_string());
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty token".into(),
            });
        }
        let tag: Tag = cols[1].parse()?;
        tokens.push(cols[0].to_string());
        labels.push(tag);
    }
    flush(&mut id, &mut tokens, &mut labels, block_start, &mut out)?;
    Ok(out)
}

/// Serializes sentences into the format [`parse_conll`] reads.
pub fn to_conll(sentences: &[LabeledSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        let _ = writeln!(out, "{ID_PREFIX}{}", s.id);
        for (tok, tag) in s.tokens.iter().zip(&s.labels) {
            let _ = writeln!(out, "{tok}\t{tag}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<LabeledSentence>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        tokens: Vec<String>,
        labels: Vec<String>,
    }
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let labels = super::parse_tags(&row.labels)?;
        out.push(LabeledSentence::new(row.id, row.tokens, labels)?);
    }
    Ok(out)
}

pub fn to_jsonl(sentences: &[LabeledSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        // LabeledSentence serializes to exactly the {"id","tokens","labels"} shape
        out.push_str(&serde_json::to_string(s).expect("sentence serializes"));
        out.push('\n');
    }
    out
}

/// Reads a corpus file, picking the format from the extension, and repairs IOB2.
pub fn read_corpus(path: &Path) -> Result<Vec<LabeledSentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed = match CorpusFormat::from_path(path) {
        CorpusFormat::Conll => parse_conll(&text)?,
        CorpusFormat::Jsonl => parse_jsonl(&text)?,
    };
    let mut repaired = 0usize;
    let out = parsed
        .into_iter()
        .map(|s| {
            if !s.is_valid_iob2() {
                repaired += 1;
            }
            s.repaired()
        })
        .collect();
    if repaired > 0 {
        log::warn!("{}: repaired IOB2 labels in {repaired} sentences", path.display());
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, sentences: &[LabeledSentence]) -> Result<()> {
    let text = match CorpusFormat::from_path(path) {
        CorpusFormat::Conll => to_conll(sentences),
        CorpusFormat::Jsonl => to_jsonl(sentences),
    };
    crate::io::write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_single_block() {
        let got = parse_conll("saw\tB-idiom\nthe\tI-idiom\nlight\tI-idiom\n\n").unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].tokens, ["saw", "the", "light"]);
        assert_eq!(got[0].id, "0");
        assert_eq!(crate::spans::extract_gold_spans(&got[0]).unwrap().len(), 1);
    }

    #[test]
    fn empty_text_is_empty_corpus() {
        assert!(parse_conll("").unwrap().is_empty());
        assert!(parse_conll("\n\n").unwrap().is_empty());
        assert!(parse_jsonl("").unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse_conll("a\tB-idiom\tx") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_conll("a\tO\n\nb\tO\nc\n") {
            Err(Error::Parse { line: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_prefix_is_validation_error() {
        assert!(matches!(parse_conll("a\tE-idiom\n"), Err(Error::InvalidTag(_))));
    }

    #[test]
    fn keeps_ids_and_order() {
        let text = "# id = first\na\tO\n\n# id = second\nb\tB-idiom\nc\tI-idiom\n";
        let got = parse_conll(text).unwrap();
        assert_eq!(got[0].id, "first");
        assert_eq!(got[1].id, "second");
        assert_eq!(to_conll(&got), format!("{text}\n"));
    }

    #[test]
    fn jsonl_alternative() {
        let text = r#"{"id":"x","tokens":["break","the","ice"],"labels":["B-idiom","I-idiom","I-idiom"]}"#;
        let got = parse_jsonl(text).unwrap();
        assert_eq!(got[0].labels[2], Tag::inside("idiom"));
        assert_eq!(to_jsonl(&got).trim_end(), text);
        assert!(matches!(parse_jsonl("{}\n"), Err(Error::Parse { line: 1, .. })));
    }

    fn arb_sentence() -> impl Strategy<Value = LabeledSentence> {
        (1usize..8)
            .prop_flat_map(|n| {
                (
                    "[a-z0-9]{1,6}",
                    proptest::collection::vec("[a-zA-Z'.,]{1,5}", n),
                    proptest::collection::vec(0u8..3, n),
                )
            })
            .prop_map(|(id, tokens, raw)| {
                let labels = raw
                    .iter()
                    .map(|r| match r {
                        0 => Tag::Outside,
                        1 => Tag::begin("idiom"),
                        _ => Tag::inside("idiom"),
                    })
                    .collect::<Vec<_>>();
                LabeledSentence::new(id, tokens, labels).unwrap().repaired()
            })
    }

    proptest! {
        #[test]
        fn conll_and_jsonl_round_trip(data in proptest::collection::vec(arb_sentence(), 0..6)) {
            prop_assert_eq!(&parse_conll(&to_conll(&data)).unwrap(), &data);
            prop_assert_eq!(&parse_jsonl(&to_jsonl(&data)).unwrap(), &data);
        }
    }
}
