use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::train::{evaluate_model, train_on, RunRecord};
use crate::corpus::{classes_of, DatasetSplit};
use crate::encoder::TaggerModel;
use crate::error::{Error, Result};
use crate::metrics::{summarize_cross_eval, CrossEvalSummary, EvalReport};

/// Runs of a λ grid with the λ chosen by dev SA and by dev F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub records: Vec<RunRecord>,
    pub best_by_sa: f64,
    pub best_by_f1: f64,
}

/// `λ = 0.0, 0.1, …, 1.0`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

/// Directory name for one grid point, e.g. `lambda-0.3`.
pub fn lambda_dir(lambda: f64) -> String {
    format!("lambda-{lambda:.1}")
}

/// Best λ by `metric`; ties go to the smaller λ.
pub fn select_lambda(records: &[RunRecord], metric: impl Fn(&EvalReport) -> f64) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for r in records {
        let score = metric(&r.dev);
        let better = match best {
            None => true,
            Some((bs, bl)) => score > bs || (score == bs && r.lambda_span < bl),
        };
        if better {
            best = Some((score, r.lambda_span));
        }
    }
    best.map(|(_, l)| l)
}

/// One training run per λ (shared seed), each in its own subdirectory.
pub fn ablate_lambda(cfg: &ExperimentConfig, data: &DatasetSplit, grid: &[f64]) -> Result<Ablation> {
    if grid.is_empty() {
        return Err(Error::Config("the λ grid is empty".into()));
    }
    let mut records = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut run = cfg.clone();
        run.lambda_span = lambda;
        run.out_dir = cfg.out_dir.join(lambda_dir(lambda));
        records.push(train_on(&run, data)?);
    }
    Ok(Ablation {
        best_by_sa: select_lambda(&records, |r| r.sa).expect("non-empty"),
        best_by_f1: select_lambda(&records, |r| r.f1).expect("non-empty"),
        records,
    })
}

/// Reports of every model on every dataset, for dev and test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalMatrix {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// `dev[model][dataset]`
    pub dev: Vec<Vec<EvalReport>>,
    pub test: Vec<Vec<EvalReport>>,
}

impl CrossEvalMatrix {
    /// Per-model μ/R summary over the test (or dev) row.
    pub fn summaries(&self, test: bool) -> Result<Vec<(String, CrossEvalSummary)>> {
        let cells = if test { &self.test } else { &self.dev };
        self.models
            .iter()
            .zip(cells)
            .map(|(m, row)| {
                let rows: Vec<(&str, f64, f64)> = self
                    .datasets
                    .iter()
                    .zip(row)
                    .map(|(d, r)| (d.as_str(), r.sa, r.f1))
                    .collect();
                Ok((m.clone(), summarize_cross_eval(&rows)?))
            })
            .collect()
    }
}

/// Evaluates each trained model on each dataset's dev and test splits.
pub fn cross_evaluate(models: &[(String, TaggerModel)], datasets: &[(String, DatasetSplit)]) -> Result<CrossEvalMatrix> {
    for (_, model) in models {
        for (name, data) in datasets {
            if let Some(class) = classes_of(data.dev.iter().chain(&data.test))
                .into_iter()
                .find(|c| !model.tags.contains_class(c))
            {
                return Err(Error::MissingClass {
                    class,
                    dataset: name.clone(),
                });
            }
        }
    }
    let mut dev = Vec::with_capacity(models.len());
    let mut test = Vec::with_capacity(models.len());
    for (name, model) in models {
        log::info!("cross-evaluating {name}");
        let mut dev_row = Vec::with_capacity(datasets.len());
        let mut test_row = Vec::with_capacity(datasets.len());
        for (_, data) in datasets {
            dev_row.push(evaluate_model(model, &data.dev)?.0);
            test_row.push(evaluate_model(model, &data.test)?.0);
        }
        dev.push(dev_row);
        test.push(test_row);
    }
    Ok(CrossEvalMatrix {
        models: models.iter().map(|(n, _)| n.clone()).collect(),
        datasets: datasets.iter().map(|(n, _)| n.clone()).collect(),
        dev,
        test,
    })
}
