//! Classification metrics and per-action two-sample t-tests.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::miner::{Action, ActionRepresentation};

/// p-values below this are printed as `< 2e-16`.
pub const P_VALUE_FLOOR: f64 = 1e-15;

fn check_lengths(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what: "metric inputs",
            expected,
            found,
        });
    }
    Ok(())
}

/// F1 of the positive class; 0 when precision and recall are both 0.
pub fn f1_score(labels: &[bool], predictions: &[bool]) -> Result<f64> {
    check_lengths(labels.len(), predictions.len())?;
    if labels.is_empty() {
        return Err(Error::Empty("F1 input"));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&l, &p) in labels.iter().zip(predictions) {
        match (l, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    // 2PR/(P+R) reduces to 2TP/(2TP+FP+FN); zero TP makes both sides 0.
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// Average 1-based ranks with ties sharing the mean rank.
fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve via the Mann-Whitney statistic.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    check_lengths(labels.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite { term: "AUC scores" });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = average_ranks(scores);
    let pos_rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let n_pos = n_pos as f64;
    Ok((pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Two-sided p-value of Student's t at `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Welch's unequal-variance t-test. Positive `t` means the first group has
/// the larger mean.
pub fn welch_t_test(group_a: &[f64], group_b: &[f64]) -> Result<(f64, f64)> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(Error::GroupTooSmall(group_a.len(), group_b.len()));
    }
    let (ma, va) = mean_var(group_a);
    let (mb, vb) = mean_var(group_b);
    let (na, nb) = (group_a.len() as f64, group_b.len() as f64);
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    let diff = ma - mb;
    if se2 == 0.0 {
        return Ok(match diff.partial_cmp(&0.0) {
            Some(Ordering::Equal) => (0.0, 1.0),
            Some(Ordering::Greater) => (f64::INFINITY, 0.0),
            _ => (f64::NEG_INFINITY, 0.0),
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok((t, student_t_two_sided_p(t, df)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationRow {
    pub action: Action,
    pub t_score: f64,
    pub p_value: f64,
}

impl CharacterizationRow {
    pub fn p_value_display(&self) -> String {
        if self.p_value < P_VALUE_FLOOR {
            "< 2e-16".to_string()
        } else {
            format!("{:.6e}", self.p_value)
        }
    }
}

/// Per-action t-tests of dropout against non-dropout weeks. Returns the `k`
/// most negative rows ascending and the `k` most positive rows descending.
pub fn characterize_actions(
    reps: &[ActionRepresentation],
    actions: &[Action],
    k: usize,
) -> Result<(Vec<CharacterizationRow>, Vec<CharacterizationRow>)> {
    for r in reps {
        if r.scores.len() != actions.len() {
            return Err(Error::DimensionMismatch {
                what: "representation",
                expected: actions.len(),
                found: r.scores.len(),
            });
        }
    }
    let n_pos = reps.iter().filter(|r| r.dropout_label).count();
    if n_pos == 0 || n_pos == reps.len() {
        return Err(Error::SingleClass);
    }
    let mut rows = (0..actions.len())
        .into_par_iter()
        .map(|j| {
            let (d, nd): (Vec<_>, Vec<_>) = reps.iter().partition(|r| r.dropout_label);
            let d: Vec<f64> = d.iter().map(|r| r.scores[j]).collect();
            let nd: Vec<f64> = nd.iter().map(|r| r.scores[j]).collect();
            let (t_score, p_value) = welch_t_test(&d, &nd)?;
            Ok(CharacterizationRow {
                action: actions[j].clone(),
                t_score,
                p_value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = k.min(rows.len());
    rows.sort_by(|a, b| a.t_score.total_cmp(&b.t_score).then_with(|| a.action.cmp(&b.action)));
    let nondropout = rows[..k].to_vec();
    rows.sort_by(|a, b| b.t_score.total_cmp(&a.t_score).then_with(|| a.action.cmp(&b.action)));
    let dropout = rows[..k].to_vec();
    Ok((nondropout, dropout))
}

pub fn write_characterization_csv<W: std::io::Write>(out: W, rows: &[CharacterizationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["action", "t_score", "p_value"])?;
    for row in rows {
        w.write_record([
            row.action.to_string(),
            row.t_score.to_string(),
            format!("{:e}", row.p_value),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Fixed-width text table with `< 2e-16` for vanishing p-values.
pub fn format_characterization_table(rows: &[CharacterizationRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.action.to_string().len())
        .max()
        .unwrap_or(0)
        .max("Action".len());
    let mut out = format!("{:<width$}  {:>10}  {:>13}\n", "Action", "t-score", "p-value");
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>10.3}  {:>13}\n",
            r.action.to_string(),
            r.t_score,
            r.p_value_display()
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub threshold: f64,
}

pub fn evaluate(labels: &[bool], scores: &[f64], threshold: f64) -> Result<MetricsReport> {
    let predictions: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    let n_pos = labels.iter().filter(|&&l| l).count();
    Ok(MetricsReport {
        f1: f1_score(labels, &predictions)?,
        auc: auc(labels, scores)?,
        n_pos,
        n_neg: labels.len() - n_pos,
        threshold,
    })
}
