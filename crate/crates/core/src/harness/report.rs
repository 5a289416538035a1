use std::path::{Path, PathBuf};

use serde::Serialize;

use super::cross::CrossEvalMatrix;
use super::train::{generalization_delta, RunRecord};
use crate::error::Result;
use crate::metrics::{fixed4, render_table, CrossEvalSummary, EvalReport};

#[derive(Serialize)]
struct ResultStore<'a> {
    records: Vec<NamedRecord<'a>>,
    cross_eval: Option<&'a CrossEvalMatrix>,
    summaries_test: Vec<(String, CrossEvalSummary)>,
}

#[derive(Serialize)]
struct NamedRecord<'a> {
    name: &'a str,
    record: &'a RunRecord,
}

fn quadruple_table(m: &CrossEvalMatrix, cells: &[Vec<EvalReport>]) -> String {
    let mut header = vec!["model".to_string()];
    header.extend(m.datasets.iter().cloned());
    let rows: Vec<Vec<String>> = m
        .models
        .iter()
        .zip(cells)
        .map(|(name, row)| std::iter::once(name.clone()).chain(row.iter().map(EvalReport::quadruple)).collect())
        .collect();
    format!("# SA/F1/P/R (%)\n{}", render_table(&header, &rows))
}

fn metric_cells(r: &EvalReport) -> [String; 5] {
    [fixed4(r.sa), fixed4(r.f1), fixed4(r.precision), fixed4(r.recall), fixed4(r.gm)]
}

/// Writes `results.json`, quadruple tables, μ/R summary, `ablation.csv` and
/// `deltas.csv` under `out_dir`, replacing earlier copies. Returns the paths.
pub fn emit_reports(matrix: Option<&CrossEvalMatrix>, records: &[(String, RunRecord)], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = out_dir.join(name);
        crate::io::write_atomic(&p, text.as_bytes())?;
        written.push(p);
        Ok(())
    };

    let summaries = match matrix {
        Some(m) if !m.datasets.is_empty() => m.summaries(true)?,
        _ => Vec::new(),
    };
    if let Some(m) = matrix {
        put("cross_eval_test.txt", quadruple_table(m, &m.test))?;
        put("cross_eval_dev.txt", quadruple_table(m, &m.dev))?;
        let mut header = vec!["model".to_string()];
        header.extend(CrossEvalSummary::HEADER.iter().map(|s| s.to_string()));
        let rows: Vec<Vec<String>> = summaries
            .iter()
            .map(|(name, s)| std::iter::once(name.clone()).chain(s.cells()).collect())
            .collect();
        put("summary_test.txt", render_table(&header, &rows))?;
    }

    let mut ablation = String::from(
        "name,lambda,best_step,dev_sa,dev_f1,dev_precision,dev_recall,dev_gm,test_sa,test_f1,test_precision,test_recall,test_gm\n",
    );
    let mut deltas = String::from("name,lambda,delta_sa,delta_f1\n");
    for (name, r) in records {
        let mut row = vec![name.clone(), format!("{:.1}", r.lambda_span), r.best_step.to_string()];
        row.extend(metric_cells(&r.dev));
        row.extend(metric_cells(&r.test));
        ablation += &(row.join(",") + "\n");
        let (dsa, df1) = generalization_delta(r);
        deltas += &format!("{name},{:.1},{},{}\n", r.lambda_span, signed4(dsa), signed4(df1));
    }
    put("ablation.csv", ablation)?;
    put("deltas.csv", deltas)?;

    let store = ResultStore {
        records: records.iter().map(|(name, record)| NamedRecord { name, record }).collect(),
        cross_eval: matrix,
        summaries_test: summaries,
    };
    put("results.json", serde_json::to_string_pretty(&store)? + "\n")?;
    Ok(written)
}

fn signed4(v: f64) -> String {
    if v < 0.0 {
        format!("-{}", fixed4(-v))
    } else {
        format!("+{}", fixed4(v))
    }
}

/// Per-step dev curve of one run as CSV.
pub fn curve_csv(record: &RunRecord) -> String {
    let mut out = String::from("step,loss_total,loss_slot,loss_span,dev_sa,dev_f1,dev_precision,dev_recall\n");
    for p in &record.curve {
        out += &format!(
            "{},{:.6},{:.6},{:.6},{},{},{},{}\n",
            p.step,
            p.loss.total,
            p.loss.slot,
            p.loss.span,
            fixed4(p.dev.sa),
            fixed4(p.dev.f1),
            fixed4(p.dev.precision),
            fixed4(p.dev.recall)
        );
    }
    out
}
