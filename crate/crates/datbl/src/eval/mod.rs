//! Evaluation harness: accuracy reports, seeded multi-run trials,
//! two-sample significance testing, and synthetic corpora.

pub mod synth;

use std::collections::BTreeMap;

use crate::corpus::{apply_clusters, ClusterMap, Corpus, Tag};
use crate::cues::{substring_source, CueConfig};
use crate::tbl::{tag_corpus, train_exhaustive, train_monte_carlo, TemplateSet, TrainingConfig};
use crate::{Error, Result};

/// Precision and recall for one tag. Both are 0 when their denominator is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TagScore {
    pub precision: f64,
    pub recall: f64,
}

/// Exact-match accuracy over gold-tagged utterances, with per-tag scores
/// and a gold-by-predicted confusion matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_tag: BTreeMap<Tag, TagScore>,
    pub confusion: BTreeMap<(Tag, Tag), usize>,
}

impl EvaluationReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "accuracy: {:.4} ({}/{})\n",
            self.accuracy, self.correct, self.total
        );
        out.push_str("tag\tprecision\trecall\n");
        for (tag, score) in &self.per_tag {
            out.push_str(&format!("{tag}\t{:.4}\t{:.4}\n", score.precision, score.recall));
        }
        out.push_str("confusion (gold -> predicted):\n");
        for ((gold, pred), count) in &self.confusion {
            out.push_str(&format!("{gold} -> {pred}: {count}\n"));
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("accuracy\t{}\n", self.accuracy));
        out.push_str(&format!("correct\t{}\n", self.correct));
        out.push_str(&format!("total\t{}\n", self.total));
        for (tag, score) in &self.per_tag {
            out.push_str(&format!("tag\t{tag}\t{}\t{}\n", score.precision, score.recall));
        }
        for ((gold, pred), count) in &self.confusion {
            out.push_str(&format!("confusion\t{gold}\t{pred}\t{count}\n"));
        }
        out
    }
}

/// Compares working tags in `predicted` against gold tags in `gold`.
/// Utterances whose gold tag is `NONE` are excluded from the total; a
/// `NONE` prediction for a gold-tagged utterance counts as wrong.
pub fn evaluate(predicted: &Corpus, gold: &Corpus) -> Result<EvaluationReport> {
    if predicted.dialogues.len() != gold.dialogues.len() {
        return Err(Error::Invalid(format!(
            "structure mismatch: {} vs {} dialogues",
            predicted.dialogues.len(),
            gold.dialogues.len()
        )));
    }
    for (p, g) in predicted.dialogues.iter().zip(&gold.dialogues) {
        if p.id != g.id || p.utterances.len() != g.utterances.len() {
            return Err(Error::Invalid(format!(
                "structure mismatch in dialogue {:?}: {} vs {} utterances",
                g.id,
                p.utterances.len(),
                g.utterances.len()
            )));
        }
    }

    let mut correct = 0usize;
    let mut total = 0usize;
    let mut confusion: BTreeMap<(Tag, Tag), usize> = BTreeMap::new();
    for (p, g) in predicted.dialogues.iter().zip(&gold.dialogues) {
        for (pu, gu) in p.utterances.iter().zip(&g.utterances) {
            if gu.gold_tag.is_none() {
                continue;
            }
            total += 1;
            if pu.working_tag == gu.gold_tag {
                correct += 1;
            }
            *confusion
                .entry((gu.gold_tag.clone(), pu.working_tag.clone()))
                .or_insert(0) += 1;
        }
    }

    let mut per_tag = BTreeMap::new();
    let tags: std::collections::BTreeSet<Tag> = confusion
        .keys()
        .flat_map(|(g, p)| [g.clone(), p.clone()])
        .filter(|t| !t.is_none())
        .collect();
    for tag in tags {
        let tp = *confusion.get(&(tag.clone(), tag.clone())).unwrap_or(&0);
        let gold_count: usize =
            confusion.iter().filter(|((g, _), _)| *g == tag).map(|(_, c)| c).sum();
        let pred_count: usize =
            confusion.iter().filter(|((_, p), _)| *p == tag).map(|(_, c)| c).sum();
        per_tag.insert(
            tag,
            TagScore {
                precision: if pred_count == 0 { 0.0 } else { tp as f64 / pred_count as f64 },
                recall: if gold_count == 0 { 0.0 } else { tp as f64 / gold_count as f64 },
            },
        );
    }

    Ok(EvaluationReport {
        accuracy: if total == 0 { 1.0 } else { correct as f64 / total as f64 },
        correct,
        total,
        per_tag,
        confusion,
    })
}

/// Per-seed accuracies of repeated runs, with mean and population sigma.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialStats {
    pub runs: Vec<f64>,
    pub mean: f64,
    pub sigma: f64,
}

impl TrialStats {
    pub fn from_runs(runs: Vec<f64>) -> Result<TrialStats> {
        if runs.is_empty() {
            return Err(Error::Invalid("trial statistics need at least one run".into()));
        }
        let n = runs.len() as f64;
        let mean = runs.iter().sum::<f64>() / n;
        let variance = runs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Ok(TrialStats { runs, mean, sigma: variance.sqrt() })
    }
}

/// Everything one training/evaluation trial needs besides the corpora.
#[derive(Clone, Debug)]
pub struct TrialSetup<'a> {
    pub templates: &'a TemplateSet,
    pub cue_config: CueConfig,
    /// Normalized phrases for external-list mode.
    pub external_cues: Option<&'a [String]>,
    /// Applied to both corpora when the mode calls for clustering.
    pub clusters: Option<&'a ClusterMap>,
    pub training: TrainingConfig,
    pub exhaustive: bool,
}

/// Trains `n_runs` times with seeds `seed_base..seed_base + n_runs`,
/// evaluating each model on the test corpus. Cue extraction happens once;
/// only the training seed varies across runs.
pub fn run_trials(
    train: &Corpus,
    test: &Corpus,
    setup: &TrialSetup,
    n_runs: usize,
    seed_base: u64,
) -> Result<TrialStats> {
    if n_runs < 1 {
        return Err(Error::Invalid("n_runs must be at least 1".into()));
    }
    let (mut train, test) = if setup.cue_config.mode.uses_clusters() {
        let map = setup.clusters.ok_or_else(|| {
            Error::Invalid(format!("mode {} requires a cluster map", setup.cue_config.mode))
        })?;
        (apply_clusters(train, map), apply_clusters(test, map))
    } else {
        (train.clone(), test.clone())
    };
    let cues = substring_source(&train, &setup.cue_config, setup.external_cues)?;

    let mut runs = Vec::with_capacity(n_runs);
    for i in 0..n_runs {
        let config = TrainingConfig {
            seed: seed_base + i as u64,
            ..setup.training.clone()
        };
        let report = if setup.exhaustive {
            train_exhaustive(&mut train, setup.templates, &cues, &config)?
        } else {
            train_monte_carlo(&mut train, setup.templates, &cues, &config)?
        };
        let tagged = tag_corpus(report.model(), &test);
        runs.push(evaluate(&tagged, &test)?.accuracy);
    }
    TrialStats::from_runs(runs)
}

/// A two-sample pooled-variance (Student) t test, two-tailed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub significant_at_05: bool,
}

/// Compares two accuracy samples. With degenerate (zero) pooled variance
/// the result is `p = 1` for equal means and `p = 0` otherwise.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("t test needs non-empty samples".into()));
    }
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let df = na + nb - 2.0;

    let pooled = if df >= 1.0 {
        let ssa: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let ssb: f64 = b.iter().map(|x| (x - mb) * (x - mb)).sum();
        (ssa + ssb) / df
    } else {
        0.0
    };

    let result = |t: f64, df: f64, p: f64| TTestResult {
        t,
        df,
        p,
        significant_at_05: p < 0.05,
    };
    if pooled <= 0.0 || df < 1.0 {
        return Ok(if ma == mb {
            result(0.0, df, 1.0)
        } else {
            result((ma - mb).signum() * f64::INFINITY, df, 0.0)
        });
    }
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let p = student_two_tailed_p(t, df);
    Ok(result(t, df, p))
}

/// Two-tailed p-value of a Student t statistic via the regularized
/// incomplete beta function: `I_{df/(df+t^2)}(df/2, 1/2)`.
pub(crate) fn student_two_tailed_p(t: f64, df: f64) -> f64 {
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Lanczos log-gamma for positive arguments.
fn ln_gamma(x: f64) -> f64 {
    const COF: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_9e-2,
        -0.539_523_938_495_3e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000_000_000_190_015;
    for c in COF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1.0e-14;
    const FPMIN: f64 = 1.0e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let bt =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}
