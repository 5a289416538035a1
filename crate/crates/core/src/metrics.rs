//! Sequence accuracy, exact-match entity P/R/F1, their geometric mean, and
//! cross-dataset mean/robustness summaries.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Tag;
use crate::error::{Error, Result};
use crate::spans::iob2_runs;

/// `(start, end, class)` entities of one sentence; `end` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EntitySet(pub BTreeSet<(usize, usize, String)>);

impl EntitySet {
    /// Maximal `B-c I-c*` runs; a stray `I-c` opens a run, as after repair.
    pub fn from_tags(tags: &[Tag]) -> Self {
        EntitySet(iob2_runs(tags).into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EntityCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn check_parallel<T, U>(pred: &[T], gold: &[U]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predicted sentences for {} gold sentences",
            pred.len(),
            gold.len()
        )));
    }
    Ok(())
}

/// Fraction of sentences whose whole tag sequence matches.
pub fn sequence_accuracy(pred: &[Vec<Tag>], gold: &[Vec<Tag>]) -> Result<f64> {
    check_parallel(pred, gold)?;
    if gold.is_empty() {
        return Err(Error::InvalidInput("sequence accuracy of zero sentences".into()));
    }
    let mut hits = 0usize;
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(Error::Shape(format!(
                "sentence {i}: {} predicted tags for {} gold tags",
                p.len(),
                g.len()
            )));
        }
        hits += usize::from(p == g);
    }
    Ok(hits as f64 / gold.len() as f64)
}

/// Exact boundary and class matching, summed over sentences.
pub fn entity_counts(pred: &[EntitySet], gold: &[EntitySet]) -> Result<EntityCounts> {
    check_parallel(pred, gold)?;
    let mut c = EntityCounts::default();
    for (p, g) in pred.iter().zip(gold) {
        let tp = p.0.intersection(&g.0).count();
        c.tp += tp;
        c.fp += p.len() - tp;
        c.fn_ += g.len() - tp;
    }
    Ok(c)
}

/// Precision, recall and F1; any ratio with a zero denominator is 0.
pub fn prf1(c: EntityCounts) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

/// `√(F1·SA)`.
pub fn geometric_mean(f1: f64, sa: f64) -> f64 {
    (f1 * sa).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sa: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gm: f64,
}

impl EvalReport {
    pub fn evaluate(pred: &[Vec<Tag>], gold: &[Vec<Tag>]) -> Result<Self> {
        let sa = sequence_accuracy(pred, gold)?;
        let ents = |xs: &[Vec<Tag>]| xs.iter().map(|t| EntitySet::from_tags(t)).collect::<Vec<_>>();
        let counts = entity_counts(&ents(pred), &ents(gold))?;
        let (precision, recall, f1) = prf1(counts);
        Ok(EvalReport {
            n: gold.len(),
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            sa,
            precision,
            recall,
            f1,
            gm: geometric_mean(f1, sa),
        })
    }

    /// `SA/F1/P/R` as percentages.
    pub fn quadruple(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            percent(self.sa),
            percent(self.f1),
            percent(self.precision),
            percent(self.recall)
        )
    }
}

/// A fraction as a percentage with two decimals, rounding half up.
pub fn percent(v: f64) -> String {
    // the epsilon absorbs binary representation error at exact halves
    let cents = (v * 10_000.0 + 0.5 + 1e-7).floor();
    format!("{:.2}", cents / 100.0)
}

/// Four-decimal fixed point, rounding half up.
pub fn fixed4(v: f64) -> String {
    format!("{:.4}", (v * 10_000.0 + 0.5 + 1e-7).floor() / 10_000.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub dataset: String,
    pub sa: f64,
    pub f1: f64,
    pub gm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalSummary {
    pub rows: Vec<DatasetScore>,
    pub k: usize,
    pub mu_sa: f64,
    pub mu_f1: f64,
    pub mu_gm: f64,
    pub hardest: String,
    pub r_sa: f64,
    pub r_f1: f64,
    pub r_gm: f64,
}

impl CrossEvalSummary {
    pub const HEADER: [&'static str; 8] = ["mu_SA", "mu_F1", "mu_GM", "hardest", "R_SA", "R_F1", "R_GM", "K"];

    pub fn cells(&self) -> Vec<String> {
        vec![
            fixed4(self.mu_sa),
            fixed4(self.mu_f1),
            fixed4(self.mu_gm),
            self.hardest.clone(),
            fixed4(self.r_sa),
            fixed4(self.r_f1),
            fixed4(self.r_gm),
            self.k.to_string(),
        ]
    }
}

/// Means over datasets, the hardest dataset (lowest `√(SA·F1)`, first wins
/// ties) and independent minima `R_SA`, `R_F1` with `R_GM = √(R_SA·R_F1)`.
pub fn summarize_cross_eval<S: AsRef<str>>(rows: &[(S, f64, f64)]) -> Result<CrossEvalSummary> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("cross-evaluation summary needs at least one dataset".into()));
    }
    let scores: Vec<DatasetScore> = rows
        .iter()
        .map(|(name, sa, f1)| DatasetScore {
            dataset: name.as_ref().to_string(),
            sa: *sa,
            f1: *f1,
            gm: geometric_mean(*f1, *sa),
        })
        .collect();
    let k = scores.len();
    let mean = |f: fn(&DatasetScore) -> f64| scores.iter().map(f).sum::<f64>() / k as f64;
    let min = |f: fn(&DatasetScore) -> f64| scores.iter().map(f).fold(f64::INFINITY, f64::min);
    let mut hardest = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.gm < scores[hardest].gm {
            hardest = i;
        }
    }
    let (r_sa, r_f1) = (min(|s| s.sa), min(|s| s.f1));
    Ok(CrossEvalSummary {
        k,
        mu_sa: mean(|s| s.sa),
        mu_f1: mean(|s| s.f1),
        mu_gm: mean(|s| s.gm),
        hardest: scores[hardest].dataset.clone(),
        r_sa,
        r_f1,
        r_gm: geometric_mean(r_f1, r_sa),
        rows: scores,
    })
}

/// Left-aligned text table with columns padded to their widest cell.
pub fn render_table<H: AsRef<str>>(header: &[H], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.as_ref().chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.iter().map(AsRef::as_ref).collect());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for row in rows {
        debug_assert_eq!(row.len(), cols);
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_tags;
    use proptest::prelude::*;

    fn tags(s: &str) -> Vec<Tag> {
        parse_tags(&s.split_whitespace().collect::<Vec<_>>()).unwrap()
    }

    fn ents(spans: &[(usize, usize, &str)]) -> EntitySet {
        EntitySet(spans.iter().map(|(s, e, c)| (*s, *e, c.to_string())).collect())
    }

    #[test]
    fn sequence_accuracy_examples() {
        let g = vec![tags("O B-idiom I-idiom"), tags("O O")];
        assert_eq!(sequence_accuracy(&g, &g).unwrap(), 1.0);
        let p = vec![tags("O B-idiom I-idiom"), tags("O B-idiom")];
        assert_eq!(sequence_accuracy(&p, &g).unwrap(), 0.5);
        assert!(sequence_accuracy(&p[..1], &g).is_err());
        assert!(sequence_accuracy(&[tags("O")], &[tags("O O")]).is_err());
    }

    #[test]
    fn partial_overlap_counts_for_neither() {
        let gold = vec![tags("O B-idiom I-idiom I-idiom O")];
        let pred = vec![tags("O B-idiom I-idiom O O")];
        let r = EvalReport::evaluate(&pred, &gold).unwrap();
        assert_eq!(r.sa, 0.0);
        assert_eq!((r.tp, r.fp, r.fn_), (0, 1, 1));
        assert_eq!(entity_counts(&[ents(&[(0, 2, "idiom")])], &[ents(&[(0, 3, "idiom")])]).unwrap(), EntityCounts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn entity_count_examples() {
        let g = vec![ents(&[(0, 2, "a"), (3, 4, "a")]), ents(&[(1, 2, "b"), (2, 3, "a"), (4, 6, "a")])];
        assert_eq!(entity_counts(&g, &g).unwrap(), EntityCounts { tp: 5, fp: 0, fn_: 0 });
        let empty = vec![EntitySet::default()];
        let three = vec![ents(&[(0, 1, "a"), (1, 2, "a"), (2, 3, "b")])];
        assert_eq!(entity_counts(&empty, &three).unwrap(), EntityCounts { tp: 0, fp: 0, fn_: 3 });
        // class must match too
        assert_eq!(entity_counts(&[ents(&[(0, 1, "a")])], &[ents(&[(0, 1, "b")])]).unwrap().tp, 0);
    }

    #[test]
    fn prf1_examples() {
        assert_eq!(prf1(EntityCounts::default()), (0.0, 0.0, 0.0));
        let (p, r, f) = prf1(EntityCounts { tp: 1, fp: 1, fn_: 0 });
        assert_eq!((p, r), (0.5, 1.0));
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        // P = 4939/5000 = 0.9878, R = 1987/2000 = 0.9935
        let (p, r, f) = prf1(EntityCounts { tp: 9_813_793, fp: 121_207, fn_: 64_207 });
        assert!((p - 0.9878).abs() < 1e-12 && (r - 0.9935).abs() < 1e-12);
        assert!((f - 0.9906).abs() < 5e-5);
    }

    #[test]
    fn geometric_mean_examples() {
        assert_eq!(geometric_mean(0.0, 0.7), 0.0);
        assert!((geometric_mean(0.1256, 0.1339) - 0.1297).abs() < 5e-5);
        assert!((geometric_mean(0.37, 0.37) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn summary_of_published_row() {
        let names = ["IFL-C4-A", "FLUTE", "MAGPIE (random)", "PIFL-OSCAR", "IFL-OSCAR-A", "SemEval-2022"];
        let sa = [0.80, 0.1286, 0.6594, 0.987, 0.6714, 0.357];
        let f1 = [0.8889, 0.128, 0.7129, 0.9906, 0.8065, 0.169];
        let rows: Vec<_> = (0..6).map(|i| (names[i], sa[i], f1[i])).collect();
        let s = summarize_cross_eval(&rows).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 5e-4;
        assert!(close(s.mu_sa, 0.6006) && close(s.mu_f1, 0.6160) && close(s.mu_gm, 0.6046));
        assert!(close(s.r_sa, 0.1286) && close(s.r_f1, 0.1280) && close(s.r_gm, 0.1283));
        assert_eq!(s.hardest, "FLUTE");
        assert_eq!(s.k, 6);
    }

    #[test]
    fn summary_edge_cases() {
        let s = summarize_cross_eval(&[("only", 0.4, 0.9)]).unwrap();
        assert_eq!((s.mu_sa, s.mu_f1, s.hardest.as_str()), (0.4, 0.9, "only"));
        assert!(summarize_cross_eval::<&str>(&[]).is_err());
        // equal GM: first in input order wins
        let s = summarize_cross_eval(&[("a", 0.25, 1.0), ("b", 1.0, 0.25)]).unwrap();
        assert_eq!(s.hardest, "a");
    }

    #[test]
    fn quadruple_format() {
        assert_eq!(percent(0.98705), "98.71");
        assert_eq!(percent(0.125), "12.50");
        assert_eq!(percent(0.0), "0.00");
        assert_eq!(percent(1.0), "100.00");
        assert_eq!(fixed4(0.12345), "0.1235");
        let r = EvalReport::evaluate(&[tags("B-x O"), tags("O O")], &[tags("B-x O"), tags("O B-x")]).unwrap();
        assert_eq!(r.quadruple(), "50.00/66.67/100.00/50.00");
    }

    #[test]
    fn table_alignment() {
        let t = render_table(&["model", "x"], &[vec!["a".into(), "10.00/1.00/2.00/3.00".into()], vec!["long-name".into(), "0".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "model      x");
        assert_eq!(lines[2], "a          10.00/1.00/2.00/3.00");
        assert_eq!(render_table(&["a", "b"], &[]).lines().count(), 2);
    }

    // Independent oracle: enumerate every (start, end) window and decide
    // whether it is an entity by scanning the tags directly.
    fn brute_entities(t: &[Tag]) -> Vec<(usize, usize, String)> {
        let mut out = Vec::new();
        for s in 0..t.len() {
            for e in s + 1..=t.len() {
                let Some(c) = t[s].class() else { continue };
                let opens = matches!(&t[s], Tag::Begin(_))
                    || s == 0
                    || t[s - 1].class() != Some(c);
                let inner = (s + 1..e).all(|i| t[i] == Tag::Inside(c.to_string()));
                let closes = e == t.len() || t[e] != Tag::Inside(c.to_string());
                if opens && inner && closes {
                    out.push((s, e, c.to_string()));
                }
            }
        }
        out
    }

    fn tag_strategy() -> impl Strategy<Value = Vec<Tag>> {
        prop::collection::vec(
            prop::sample::select(vec!["O", "O", "B-a", "I-a", "B-b", "I-b"]),
            1..10,
        )
        .prop_map(|v| parse_tags(&v).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn counts_match_brute_force(pairs in prop::collection::vec((tag_strategy(), tag_strategy()), 1..6)) {
            let mut tp = 0;
            let mut fp = 0;
            let mut fn_ = 0;
            let mut hits = 0;
            for (p, g) in &pairs {
                let pe = brute_entities(p);
                let ge = brute_entities(g);
                tp += pe.iter().filter(|x| ge.contains(x)).count();
                fp += pe.iter().filter(|x| !ge.contains(x)).count();
                fn_ += ge.iter().filter(|x| !pe.contains(x)).count();
                hits += usize::from(p.len() == g.len() && p.iter().zip(g).all(|(a, b)| a == b));
            }
            let pred: Vec<EntitySet> = pairs.iter().map(|(p, _)| EntitySet::from_tags(p)).collect();
            let gold: Vec<EntitySet> = pairs.iter().map(|(_, g)| EntitySet::from_tags(g)).collect();
            let c = entity_counts(&pred, &gold).unwrap();
            prop_assert_eq!(c, EntityCounts { tp, fp, fn_ });

            let (p, r, f) = prf1(c);
            let ep = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let er = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            prop_assert_eq!((p, r), (ep, er));
            prop_assert!((0.0..=1.0).contains(&f));

            // sequence accuracy on same-length pairs only
            let same: Vec<_> = pairs.iter().filter(|(p, g)| p.len() == g.len()).cloned().collect();
            if !same.is_empty() {
                let (ps, gs): (Vec<_>, Vec<_>) = same.into_iter().unzip();
                let sa = sequence_accuracy(&ps, &gs).unwrap();
                prop_assert!((sa - hits as f64 / ps.len() as f64).abs() < 1e-15);
            }
        }

        #[test]
        fn gm_bounds(f1 in 0.0f64..=1.0, sa in 0.0f64..=1.0, bump in 0.0f64..0.5) {
            let gm = geometric_mean(f1, sa);
            prop_assert!(gm >= 0.0 && gm <= f1.max(sa) + 1e-15);
            prop_assert!(geometric_mean((f1 + bump).min(1.0), sa) >= gm);
            prop_assert!(geometric_mean(f1, (sa + bump).min(1.0)) >= gm);
        }

        #[test]
        fn minima_bound_every_row(rows in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..8)) {
            let named: Vec<_> = rows.iter().enumerate().map(|(i, (s, f))| (format!("d{i}"), *s, *f)).collect();
            let s = summarize_cross_eval(&named).unwrap();
            prop_assert!(rows.iter().all(|(sa, f1)| s.r_sa <= *sa && s.r_f1 <= *f1));
            let hardest = s.rows.iter().find(|r| r.dataset == s.hardest).unwrap();
            prop_assert!(s.rows.iter().all(|r| hardest.gm <= r.gm));
        }

        #[test]
        fn perfect_sa_means_no_token_errors(t in tag_strategy()) {
            prop_assert_eq!(sequence_accuracy(&[t.clone()], &[t]).unwrap(), 1.0);
        }
    }
}
