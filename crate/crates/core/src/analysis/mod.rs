//! Embedding extraction (CLS, word, span), 2-D projections and scatter plots.

mod pca;
mod plot;
mod tsne;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{classes_of, LabeledSentence};
use crate::encoder::TaggerModel;
use crate::error::{Error, Result};
use crate::spans::{extract_label_agnostic_spans, mean_pool, OUTSIDE_LABEL};

pub use pca::{pca, Pca};
pub use plot::{emit_plot, silhouette, PlotFiles};
pub use tsne::tsne;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Cls,
    Word,
    Span,
}

impl FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" => Ok(EmbeddingKind::Cls),
            "word" => Ok(EmbeddingKind::Word),
            "span" => Ok(EmbeddingKind::Span),
            other => Err(Error::InvalidInput(format!(
                "unknown embedding kind `{other}` (expected cls, word or span)"
            ))),
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingKind::Cls => "cls",
            EmbeddingKind::Word => "word",
            EmbeddingKind::Span => "span",
        })
    }
}

/// Where a point came from. `[start, end)` is the word range: the whole
/// sentence for `cls`, one word for `word`, the run for `span`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMeta {
    pub sentence_id: String,
    pub start: usize,
    pub end: usize,
    pub label: String,
    pub model: String,
    pub lambda: f64,
}

/// `m` points of one kind with per-point metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDump {
    pub kind: EmbeddingKind,
    pub points: Vec<Vec<f64>>,
    pub meta: Vec<PointMeta>,
}

#[derive(Serialize, Deserialize)]
struct DumpLine {
    kind: EmbeddingKind,
    #[serde(flatten)]
    meta: PointMeta,
    vector: Vec<f64>,
}

impl EmbeddingDump {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// One JSON object per point.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for (p, m) in self.points.iter().zip(&self.meta) {
            let line = DumpLine {
                kind: self.kind,
                meta: m.clone(),
                vector: p.clone(),
            };
            out += &serde_json::to_string(&line)?;
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut points = Vec::new();
        let mut meta = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let l: DumpLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if kind.is_some_and(|k| k != l.kind) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "mixed embedding kinds in one dump".into(),
                });
            }
            kind = Some(l.kind);
            points.push(l.vector);
            meta.push(l.meta);
        }
        let kind = kind.ok_or_else(|| Error::InvalidInput("empty embedding dump".into()))?;
        Ok(EmbeddingDump { kind, points, meta })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_jsonl()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

/// Label of a whole sentence: its first class, or `O` without any span.
fn sentence_label(s: &LabeledSentence) -> String {
    s.classes().next().unwrap_or(OUTSIDE_LABEL).to_string()
}

/// Encodes `sentences` with `model` and collects points of `kind`
/// (`cls`, `word` or `span`). Span points are unnormalized means over every
/// maximal run of identical labels, `O` runs included.
pub fn extract_embeddings(
    model: &TaggerModel,
    sentences: &[LabeledSentence],
    kind: &str,
    model_tag: &str,
    lambda: f64,
) -> Result<EmbeddingDump> {
    let kind: EmbeddingKind = kind.parse()?;
    if let Some(class) = classes_of(sentences).into_iter().find(|c| !model.tags.contains_class(c)) {
        return Err(Error::MissingClass {
            class,
            dataset: model_tag.to_string(),
        });
    }
    let meta = |s: &LabeledSentence, start, end, label: String| PointMeta {
        sentence_id: s.id.clone(),
        start,
        end,
        label,
        model: model_tag.to_string(),
        lambda,
    };
    let mut dump = EmbeddingDump {
        kind,
        points: Vec::new(),
        meta: Vec::new(),
    };
    for s in sentences {
        let enc = model.encode(s)?;
        match kind {
            EmbeddingKind::Cls => {
                dump.points.push(enc.cls);
                dump.meta.push(meta(s, 0, s.len(), sentence_label(s)));
            }
            EmbeddingKind::Word => {
                for (i, (v, tag)) in enc.word_vectors.into_iter().zip(&s.labels).enumerate() {
                    dump.points.push(v);
                    dump.meta.push(meta(s, i, i + 1, tag.to_string()));
                }
            }
            EmbeddingKind::Span => {
                for sp in extract_label_agnostic_spans(&s.id, &s.labels) {
                    dump.points.push(mean_pool(&enc.word_vectors, sp.start, sp.end, false)?);
                    dump.meta.push(meta(s, sp.start, sp.end, sp.label));
                }
            }
        }
    }
    Ok(dump)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Pca,
    Tsne,
}

impl FromStr for ProjectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(ProjectionMethod::Pca),
            "tsne" | "t-sne" => Ok(ProjectionMethod::Tsne),
            other => Err(Error::InvalidInput(format!("unknown projection `{other}` (expected pca or tsne)"))),
        }
    }
}

impl fmt::Display for ProjectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProjectionMethod::Pca => "pca",
            ProjectionMethod::Tsne => "tsne",
        })
    }
}

/// t-SNE settings; PCA ignores everything but being two-dimensional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub seed: u64,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        ProjectionParams {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub method: ProjectionMethod,
    pub params: ProjectionParams,
    /// `m` rows of `[x, y]`.
    pub coords: Vec<[f64; 2]>,
}

/// Projects a dump to two dimensions.
pub fn project(dump: &EmbeddingDump, method: ProjectionMethod, params: &ProjectionParams) -> Result<Projection> {
    let coords = match method {
        ProjectionMethod::Pca => {
            let fit = pca(&dump.points)?;
            fit.scores.iter().map(|r| [r[0], r.get(1).copied().unwrap_or(0.0)]).collect()
        }
        ProjectionMethod::Tsne => tsne(&dump.points, params)?,
    };
    Ok(Projection {
        method,
        params: params.clone(),
        coords,
    })
}
