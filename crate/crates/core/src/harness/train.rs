use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::optim::Adam;
use crate::autodiff::Graph;
use crate::corpus::{classes_of, read_corpus, DatasetSplit, LabeledSentence, SplitRatios, Tag, TagSet, DEFAULT_CLASS};
use crate::encoder::{ParamStore, TaggerModel};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::objective::{total_loss_node, ContrastiveConfig, LossBreakdown};
use crate::spans::{extract_gold_spans, mine_negative_spans, MiningPolicy, Span};

pub const CHECKPOINT_FILE: &str = "model.json";
pub const RECORD_FILE: &str = "run.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
/// Wall-clock timings live apart from results so result files stay byte-stable.
pub const TIMING_FILE: &str = "timing.json";

/// Reads `train`, `dev` and `test` (`.conll`, `.jsonl` or `.json`) from `dir`.
pub fn load_dataset(dir: &Path) -> Result<DatasetSplit> {
    let find = |stem: &str| -> Result<Vec<LabeledSentence>> {
        for ext in ["conll", "jsonl", "json"] {
            let p = dir.join(format!("{stem}.{ext}"));
            if p.exists() {
                return read_corpus(&p);
            }
        }
        Err(Error::InvalidInput(format!("no {stem} split in {}", dir.display())))
    };
    let (train, dev, test) = (find("train")?, find("dev")?, find("test")?);
    let total = (train.len() + dev.len() + test.len()).max(1) as f64;
    let ratios = SplitRatios {
        train: train.len() as f64 / total,
        dev: dev.len() as f64 / total,
        test: test.len() as f64 / total,
    };
    Ok(DatasetSplit {
        train,
        dev,
        test,
        seed: 0,
        ratios,
    })
}

/// Tag set covering every class in the data; a corpus without any labeled
/// span still gets the default class so the classifier has a positive tag.
pub fn tagset_for(data: &DatasetSplit) -> TagSet {
    let mut classes = classes_of(data.train.iter().chain(&data.dev).chain(&data.test));
    if classes.is_empty() {
        classes.push(DEFAULT_CLASS.to_string());
    }
    TagSet::from_classes(classes)
}

/// Batch index lists for `steps` updates: each epoch is a fresh seeded
/// permutation cut into `batch_size` chunks (the last may be short).
pub fn batch_schedule(n: usize, batch_size: usize, seed: u64, steps: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(steps);
    if n == 0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba7c_4e5);
    while out.len() < steps {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            if out.len() == steps {
                break;
            }
            out.push(chunk.to_vec());
        }
    }
    out
}

/// Model predictions over a split and the resulting report.
pub fn evaluate_model(model: &TaggerModel, sentences: &[LabeledSentence]) -> Result<(EvalReport, Vec<Vec<Tag>>)> {
    if sentences.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on an empty split".into()));
    }
    let pred = sentences.iter().map(|s| model.predict(s)).collect::<Result<Vec<_>>>()?;
    let gold: Vec<Vec<Tag>> = sentences.iter().map(|s| s.labels.clone()).collect();
    Ok((EvalReport::evaluate(&pred, &gold)?, pred))
}

#[derive(Serialize)]
struct NonFiniteDump<'a> {
    step: usize,
    loss: LossBreakdown,
    batch: Vec<&'a LabeledSentence>,
}

/// One optimisation step at a time over a model.
pub struct Trainer {
    pub model: TaggerModel,
    pub optimizer: Adam,
    pub objective: ContrastiveConfig,
    policy: MiningPolicy,
    seed: u64,
    dump_dir: PathBuf,
    steps: usize,
}

impl Trainer {
    pub fn new(cfg: &ExperimentConfig, train: &[LabeledSentence], tags: TagSet) -> Result<Self> {
        cfg.validate()?;
        let model = TaggerModel::build(cfg.encoder_config(), tags, train)?;
        let policy = MiningPolicy::by_name(
            &cfg.mining_policy,
            MiningPolicy::phrases_from(train),
            cfg.mining_cap,
            cfg.mining_max_len,
        )?;
        Ok(Trainer {
            optimizer: Adam::new(&model.params, cfg.learning_rate, cfg.warmup_steps),
            model,
            objective: cfg.contrastive_config(),
            policy,
            seed: cfg.seed,
            dump_dir: cfg.resolved_out_dir(),
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Gold spans plus mined `O` spans for one sentence; spans touching
    /// truncated words are dropped.
    fn spans_for(&self, s: &LabeledSentence, supervised: &[bool], index: usize) -> Result<Vec<Span>> {
        let mut spans = extract_gold_spans(s)?;
        if self.objective.lambda_span > 0.0 {
            let seed = self.seed ^ ((self.steps as u64) << 20) ^ index as u64;
            spans.extend(mine_negative_spans(s, &self.policy, seed)?);
        }
        spans.retain(|sp| supervised[sp.start..sp.end].iter().all(|b| *b));
        Ok(spans)
    }

    /// Forward, backward and one optimizer update on `batch`.
    pub fn step(&mut self, batch: &[&LabeledSentence]) -> Result<LossBreakdown> {
        let mut g = Graph::new();
        let bound = self.model.params.bind(&mut g);
        let mut logits = Vec::with_capacity(batch.len());
        let mut gold = Vec::new();
        let mut mask = Vec::new();
        let mut pooled = Vec::new();
        let mut labels = Vec::new();
        for (i, s) in batch.iter().enumerate() {
            let prepared = self.model.prepare(s)?;
            let nodes = self.model.forward(&mut g, &bound, &prepared);
            logits.push(nodes.logits);
            for t in &s.labels {
                gold.push(self.model.tags.index_of(t).ok_or_else(|| Error::MissingClass {
                    class: t.class().unwrap_or("O").to_string(),
                    dataset: s.id.clone(),
                })?);
            }
            mask.extend_from_slice(&prepared.supervised);
            for sp in self.spans_for(s, &prepared.supervised, i)? {
                pooled.push((nodes.words, sp.start, sp.end));
                labels.push(sp.label);
            }
        }
        let logits = if logits.len() == 1 { logits[0] } else { g.concat_rows(&logits) };
        let spans = if self.objective.lambda_span > 0.0 && labels.len() >= 2 {
            Some((g.span_means(&pooled), labels.as_slice()))
        } else {
            None
        };
        let (root, loss) = total_loss_node(&mut g, logits, &gold, &mask, spans, &self.objective)?;
        if !loss.total.is_finite() {
            let path = self.dump_dir.join(format!("nonfinite-step-{}.json", self.steps + 1));
            let dump = NonFiniteDump {
                step: self.steps + 1,
                loss,
                batch: batch.to_vec(),
            };
            crate::io::write_json(&path, &dump)?;
            return Err(Error::NonFiniteLoss {
                step: self.steps + 1,
                dump: path,
            });
        }
        let grads = g.backward(root, self.model.params.len());
        self.optimizer.step(&mut self.model.params, &grads);
        self.steps += 1;
        Ok(loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevPoint {
    pub step: usize,
    /// Mean loss over the steps since the previous point.
    pub loss: LossBreakdown,
    pub dev: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub lambda_span: f64,
    pub curve: Vec<DevPoint>,
    pub best_step: usize,
    pub dev: EvalReport,
    pub test: EvalReport,
    /// File name of the selected checkpoint, relative to the run directory.
    pub checkpoint: String,
}

fn mean_loss(acc: &[LossBreakdown]) -> LossBreakdown {
    let n = acc.len().max(1) as f64;
    let mut m = LossBreakdown::default();
    for l in acc {
        m.slot += l.slot / n;
        m.span_reg += l.span_reg / n;
        m.span_hard += l.span_hard / n;
        m.span += l.span / n;
        m.total += l.total / n;
        m.eligible_anchors += l.eligible_anchors;
    }
    m
}

/// Trains on already-loaded data and writes the run directory.
pub fn train_on(cfg: &ExperimentConfig, data: &DatasetSplit) -> Result<RunRecord> {
    let started = Instant::now();
    let out = cfg.resolved_out_dir();
    let mut trainer = Trainer::new(cfg, &data.train, tagset_for(data))?;
    let schedule = batch_schedule(data.train.len(), cfg.batch_size, cfg.seed, cfg.max_steps);

    let mut curve = Vec::new();
    let mut window = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for (i, idx) in schedule.iter().enumerate() {
        let batch: Vec<&LabeledSentence> = idx.iter().map(|&j| &data.train[j]).collect();
        window.push(trainer.step(&batch)?);
        let step = i + 1;
        if step % cfg.eval_interval == 0 || step == schedule.len() {
            let (dev, _) = evaluate_model(&trainer.model, &data.dev)?;
            let score = cfg.select_metric.of(&dev);
            log::info!(
                "{} λ={} step {step}: loss {:.4} dev SA {:.4} F1 {:.4}",
                cfg.dataset,
                cfg.lambda_span,
                mean_loss(&window).total,
                dev.sa,
                dev.f1
            );
            if best.as_ref().map_or(true, |(b, _, _)| score > *b) {
                best = Some((score, step, trainer.model.params.clone()));
            }
            curve.push(DevPoint {
                step,
                loss: mean_loss(&window),
                dev,
            });
            window.clear();
        }
    }
    let mut model = trainer.model;
    let best_step = match best {
        Some((_, step, params)) => {
            model.params = params;
            step
        }
        None => 0,
    };
    let (dev, _) = evaluate_model(&model, &data.dev)?;
    let (test, _) = evaluate_model(&model, &data.test)?;
    model.save(&out.join(CHECKPOINT_FILE))?;
    let record = RunRecord {
        config: cfg.clone(),
        lambda_span: cfg.lambda_span,
        curve,
        best_step,
        dev,
        test,
        checkpoint: CHECKPOINT_FILE.into(),
    };
    crate::io::write_json(&out.join(RECORD_FILE), &record)?;
    crate::io::write_atomic(&out.join(RESOLVED_CONFIG_FILE), cfg.to_toml().as_bytes())?;
    crate::io::write_json(
        &out.join(TIMING_FILE),
        &serde_json::json!({ "wall_clock_seconds": started.elapsed().as_secs_f64() }),
    )?;
    Ok(record)
}

/// Loads `cfg.data_dir` and trains.
pub fn train(cfg: &ExperimentConfig) -> Result<RunRecord> {
    train_on(cfg, &load_dataset(&cfg.data_dir)?)
}

/// `(test − dev)` for sequence accuracy and F1; positive means test is higher.
pub fn generalization_delta(record: &RunRecord) -> (f64, f64) {
    (record.test.sa - record.dev.sa, record.test.f1 - record.dev.f1)
}
