//! Attachment scores, aggregation over runs, and significance tests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub const DEFAULT_ALPHA: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("sentence counts differ: gold {gold}, predicted {pred}")]
    SentenceCount { gold: usize, pred: usize },
    #[error("sentence {sentence}: gold has {gold} words, prediction has {pred}")]
    TokenCount { sentence: usize, gold: usize, pred: usize },
    #[error("sentence {sentence}, word {word}: forms differ")]
    FormMismatch { sentence: usize, word: usize },
    #[error("no reports to aggregate")]
    Empty,
    #[error("inputs have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("constant input vector")]
    Constant,
}

/// Correct and total counts for one gold relation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationCounts {
    pub head_correct: usize,
    pub labeled_correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachmentScores {
    pub las: f64,
    pub uas: f64,
    pub labeled_correct: usize,
    pub head_correct: usize,
    pub total: usize,
    pub per_relation: BTreeMap<String, RelationCounts>,
}

/// LAS/UAS on identical tokenization. Multiword ranges and empty nodes are
/// ignored; labels are compared by name so the two treebanks may number
/// their labels differently.
pub fn las(gold: &crate::conllu::Treebank, pred: &crate::conllu::Treebank) -> Result<AttachmentScores, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::SentenceCount { gold: gold.len(), pred: pred.len() });
    }
    let mut per_relation: BTreeMap<String, RelationCounts> = BTreeMap::new();
    let (mut head_correct, mut labeled_correct, mut total) = (0, 0, 0);
    for (si, (g, p)) in gold.sentences.iter().zip(&pred.sentences).enumerate() {
        let (gw, pw): (Vec<_>, Vec<_>) = (g.words().collect(), p.words().collect());
        if gw.len() != pw.len() {
            return Err(EvalError::TokenCount { sentence: si, gold: gw.len(), pred: pw.len() });
        }
        for (wi, (gt, pt)) in gw.iter().zip(&pw).enumerate() {
            if gt.form != pt.form {
                return Err(EvalError::FormMismatch { sentence: si, word: wi + 1 });
            }
            let glabel = gold.label_name(gt.deprel.unwrap_or(u32::MAX));
            let plabel = pred.label_name(pt.deprel.unwrap_or(u32::MAX));
            let entry = per_relation.entry(glabel.to_string()).or_default();
            entry.total += 1;
            total += 1;
            if gt.head == pt.head {
                head_correct += 1;
                entry.head_correct += 1;
                if glabel == plabel {
                    labeled_correct += 1;
                    entry.labeled_correct += 1;
                }
            }
        }
    }
    let pct = |c: usize| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 };
    Ok(AttachmentScores {
        las: pct(labeled_correct),
        uas: pct(head_correct),
        labeled_correct,
        head_correct,
        total,
        per_relation,
    })
}

/// Scores of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub language: String,
    pub model: String,
    pub support_size: usize,
    pub repetition: usize,
    pub seed: u64,
    pub las: f64,
    pub uas: f64,
    pub per_relation: BTreeMap<String, RelationCounts>,
}

/// Mean and sample standard deviation over one (language, model, |S|) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub language: String,
    pub model: String,
    pub support_size: usize,
    pub count: usize,
    pub mean_las: f64,
    pub std_las: f64,
    pub mean_uas: f64,
    pub std_uas: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Groups reports by (language, model, |S|) in sorted key order.
pub fn aggregate(reports: &[EvalReport]) -> Result<Vec<GroupSummary>, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut groups: BTreeMap<(String, String, usize), Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.language.clone(), r.model.clone(), r.support_size)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((language, model, support_size), rs)| {
            let l: Vec<f64> = rs.iter().map(|r| r.las).collect();
            let u: Vec<f64> = rs.iter().map(|r| r.uas).collect();
            GroupSummary {
                language,
                model,
                support_size,
                count: rs.len(),
                mean_las: mean(&l),
                std_las: sample_std(&l),
                mean_uas: mean(&u),
                std_uas: sample_std(&u),
            }
        })
        .collect())
}

/// Mean LAS per seed for one (language, model, |S|), repetitions averaged
/// first. Seeds in ascending order.
pub fn per_seed_las(reports: &[EvalReport], language: &str, model: &str, support_size: usize) -> Vec<(u64, f64)> {
    let mut by_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in reports {
        if r.language == language && r.model == model && r.support_size == support_size {
            by_seed.entry(r.seed).or_default().push(r.las);
        }
    }
    by_seed.into_iter().map(|(s, v)| (s, mean(&v))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    /// `p < alpha / num_comparisons`, the Bonferroni-corrected threshold.
    pub significant: bool,
    /// Set when the differences have zero variance and the decision is exact.
    pub note: Option<String>,
}

/// Two-sided paired t-test with Bonferroni correction.
///
/// Rejecting when `p · m < alpha` is the same decision as `p < alpha / m`;
/// the latter is what is computed.
pub fn paired_ttest(a: &[f64], b: &[f64], num_comparisons: usize, alpha: f64) -> Result<TTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFew { need: 2, got: a.len() });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let m = mean(&d);
    let s = sample_std(&d);
    let threshold = alpha / num_comparisons.max(1) as f64;
    if s == 0.0 {
        if m == 0.0 {
            return Ok(TTest { t: 0.0, df: n - 1, p: 1.0, significant: false, note: None });
        }
        return Ok(TTest {
            t: m.signum() * f64::INFINITY,
            df: n - 1,
            p: 0.0,
            significant: true,
            note: Some("all paired differences equal and non-zero; t is unbounded".into()),
        });
    }
    let t = m / (s / (n as f64).sqrt());
    let p = two_sided_t(t, (n - 1) as f64);
    Ok(TTest { t, df: n - 1, p, significant: p < threshold, note: None })
}

fn two_sided_t(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::Constant);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ with a two-sided p-value from `t = ρ √((n−2)/(1−ρ²))`.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64), EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(EvalError::TooFew { need: 3, got: x.len() });
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y))?;
    let n = x.len() as f64;
    if (1.0 - rho.abs()) < 1e-15 {
        return Ok((rho, 0.0));
    }
    let t = rho * ((n - 2.0) / (1.0 - rho * rho)).sqrt();
    Ok((rho, two_sided_t(t, n - 2.0)))
}

/// One-sided exact sign test: P(at least `wins` successes of `trials` fair coin flips).
pub fn sign_test(wins: usize, trials: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=trials {
        p += binomial(trials, k) * 0.5f64.powi(trials as i32);
    }
    p.min(1.0)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Tables-shaped CSV: one row per group, significance against `baseline`
/// (paired over seeds) when that model has the same language and |S|.
pub fn summary_csv(reports: &[EvalReport], baseline: Option<&str>, alpha: f64) -> Result<String, EvalError> {
    let groups = aggregate(reports)?;
    let comparisons = groups.iter().filter(|g| Some(g.model.as_str()) != baseline).count().max(1);
    let mut out = String::from("language,model,support_size,mean_LAS,std,significant\n");
    for g in &groups {
        let significant = match baseline {
            Some(b) if b != g.model => {
                let a = per_seed_las(reports, &g.language, &g.model, g.support_size);
                let c = per_seed_las(reports, &g.language, b, g.support_size);
                let paired: Vec<(f64, f64)> = a
                    .iter()
                    .filter_map(|(s, x)| c.iter().find(|(t, _)| t == s).map(|(_, y)| (*x, *y)))
                    .collect();
                if paired.len() >= 2 {
                    let (x, y): (Vec<f64>, Vec<f64>) = paired.into_iter().unzip();
                    paired_ttest(&x, &y, comparisons, alpha)?.significant.to_string()
                } else {
                    String::new()
                }
            }
            _ => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{:.2},{:.2},{}\n",
            g.language, g.model, g.support_size, g.mean_las, g.std_las, significant
        ));
    }
    Ok(out)
}
