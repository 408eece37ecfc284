//! Metrics over prediction records, and the prediction CSV format.
//!
//! Metrics that are undefined for the given input (a single class, zero
//! variance) are `None` rather than NaN.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A pose counts as near-native below this RMSD, in Å.
pub const GOOD_POSE_RMSD: f64 = 2.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no prediction records")]
    Empty,
    #[error("record '{sample_id}': label {label} is not 0 or 1")]
    NonBinaryLabel { sample_id: String, label: f64 },
    #[error("record '{sample_id}': non-finite {field}")]
    NonFinite {
        sample_id: String,
        field: &'static str,
    },
    #[error("sample '{sample_id}' has no pose with an rmsd value")]
    MissingRmsd { sample_id: String },
    #[error("top-N needs N >= 1")]
    BadN,
    #[error("prediction csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub target_id: String,
    pub pose_rank: u32,
    /// Probability for classification, predicted value for regression.
    pub score: f64,
    pub label: f64,
    pub rmsd: Option<f64>,
    /// Free-form flag, e.g. `no_interactions`.
    #[serde(default)]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub n: usize,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub threshold: f64,
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MetricReport {
    Classification(ClassificationReport),
    Regression(RegressionReport),
}

impl MetricReport {
    /// `(name, value)` rows for reporting; `None` prints as `undefined`.
    pub fn entries(&self) -> Vec<(&'static str, Option<f64>)> {
        match self {
            MetricReport::Classification(c) => vec![
                ("n", Some(c.n as f64)),
                ("threshold", Some(c.threshold)),
                ("tp", Some(c.tp as f64)),
                ("tn", Some(c.tn as f64)),
                ("fp", Some(c.fp as f64)),
                ("fn", Some(c.fn_ as f64)),
                ("accuracy", Some(c.accuracy)),
                ("sensitivity", c.sensitivity),
                ("specificity", c.specificity),
                ("auroc", c.auroc),
            ],
            MetricReport::Regression(r) => vec![
                ("n", Some(r.n as f64)),
                ("rmse", Some(r.rmse)),
                ("mae", Some(r.mae)),
                ("pearson", r.pearson),
                ("spearman", r.spearman),
                ("r2", r.r2),
            ],
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (name, v) in self.entries() {
            match v {
                Some(v) => out.push_str(&format!("{name},{v}\n")),
                None => out.push_str(&format!("{name},undefined\n")),
            }
        }
        out
    }
}

fn check_finite(r: &PredictionRecord) -> Result<(), MetricsError> {
    for (field, v) in [("score", r.score), ("label", r.label)] {
        if !v.is_finite() {
            return Err(MetricsError::NonFinite {
                sample_id: r.sample_id.clone(),
                field,
            });
        }
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Confusion counts at `score >= threshold`, and threshold-free AUROC.
pub fn classification_metrics(
    records: &[PredictionRecord],
    threshold: f64,
) -> Result<ClassificationReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        check_finite(r)?;
        let positive = if r.label == 1.0 {
            true
        } else if r.label == 0.0 {
            false
        } else {
            return Err(MetricsError::NonBinaryLabel {
                sample_id: r.sample_id.clone(),
                label: r.label,
            });
        };
        labels.push(positive);
        match (positive, r.score >= threshold) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    Ok(ClassificationReport {
        n: records.len(),
        tp,
        tn,
        fp,
        fn_,
        threshold,
        accuracy: (tp + tn) as f64 / records.len() as f64,
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        auroc: auroc(&scores, &labels),
    })
}

pub fn regression_metrics(records: &[PredictionRecord]) -> Result<RegressionReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    for r in records {
        check_finite(r)?;
    }
    let pred: Vec<f64> = records.iter().map(|r| r.score).collect();
    let obs: Vec<f64> = records.iter().map(|r| r.label).collect();
    let n = records.len() as f64;
    let sq: f64 = pred.iter().zip(&obs).map(|(p, o)| (p - o) * (p - o)).sum();
    let abs: f64 = pred.iter().zip(&obs).map(|(p, o)| (p - o).abs()).sum();
    let mean_obs = obs.iter().sum::<f64>() / n;
    let ss_tot: f64 = obs.iter().map(|o| (o - mean_obs) * (o - mean_obs)).sum();
    Ok(RegressionReport {
        n: records.len(),
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        pearson: pearson(&pred, &obs),
        spearman: spearman(&pred, &obs),
        r2: (ss_tot > 0.0).then(|| 1.0 - sq / ss_tot),
    })
}

/// Area under the ROC curve via the rank-sum statistic; tied scores get
/// half credit. `None` unless both classes are present.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(
        scores.len(),
        labels.len(),
        "scores and labels differ in length"
    );
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = mid_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// 1-based ranks with ties sharing the mean of their positions.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let mid = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }
    ranks
}

/// `None` for fewer than two points or zero variance on either side.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson inputs differ in length");
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&mid_ranks(x), &mid_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankOrder {
    /// Higher score ranks first.
    Desc,
    /// Lower score ranks first, for energy-like scores.
    Asc,
}

impl RankOrder {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "desc" => Some(RankOrder::Desc),
            "asc" => Some(RankOrder::Asc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopNRow {
    pub n: usize,
    pub hits: usize,
    pub groups: usize,
    /// Percentage of groups with a good pose among their top `n`.
    pub percent: f64,
}

/// For each `n`, the share of samples (grouped by `sample_id`) whose `n`
/// best-scored poses include one with rmsd strictly below `good_rmsd`.
///
/// Equal scores rank by ascending `pose_rank`. Poses without rmsd never
/// count as good; a sample with no rmsd at all is an error.
pub fn topn_analysis(
    records: &[PredictionRecord],
    ns: &[usize],
    good_rmsd: f64,
    order: RankOrder,
) -> Result<Vec<TopNRow>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    if ns.contains(&0) {
        return Err(MetricsError::BadN);
    }
    let mut groups: BTreeMap<&str, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        check_finite(r)?;
        groups.entry(r.sample_id.as_str()).or_default().push(r);
    }
    let mut first_good = Vec::with_capacity(groups.len());
    for (id, mut poses) in groups {
        if poses.iter().all(|p| p.rmsd.is_none()) {
            return Err(MetricsError::MissingRmsd {
                sample_id: id.to_string(),
            });
        }
        poses.sort_by(|a, b| {
            let by_score = match order {
                RankOrder::Desc => b.score.total_cmp(&a.score),
                RankOrder::Asc => a.score.total_cmp(&b.score),
            };
            by_score.then(a.pose_rank.cmp(&b.pose_rank))
        });
        first_good.push(
            poses
                .iter()
                .position(|p| p.rmsd.is_some_and(|r| r < good_rmsd)),
        );
    }
    let groups = first_good.len();
    Ok(ns
        .iter()
        .map(|&n| {
            let hits = first_good
                .iter()
                .filter(|g| g.is_some_and(|k| k < n))
                .count();
            TopNRow {
                n,
                hits,
                groups,
                percent: 100.0 * hits as f64 / groups as f64,
            }
        })
        .collect())
}

pub const PREDICTION_HEADER: [&str; 7] = [
    "sample_id",
    "target_id",
    "pose_rank",
    "score",
    "label",
    "rmsd",
    "warning",
];

pub fn write_predictions<W: Write>(
    writer: W,
    records: &[PredictionRecord],
) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PREDICTION_HEADER)?;
    for r in records {
        w.write_record([
            r.sample_id.clone(),
            r.target_id.clone(),
            r.pose_rank.to_string(),
            r.score.to_string(),
            r.label.to_string(),
            r.rmsd.map(|v| v.to_string()).unwrap_or_default(),
            r.warning.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Deserialize)]
struct CsvRow {
    sample_id: String,
    target_id: String,
    pose_rank: u32,
    score: f64,
    label: f64,
    rmsd: Option<f64>,
    #[serde(default)]
    warning: Option<String>,
}

/// Reads prediction rows; the `warning` column is optional.
pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<PredictionRecord>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row?;
        out.push(PredictionRecord {
            sample_id: row.sample_id,
            target_id: row.target_id,
            pose_rank: row.pose_rank,
            score: row.score,
            label: row.label,
            rmsd: row.rmsd,
            warning: row.warning.filter(|w| !w.is_empty()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, rank: u32, score: f64, label: f64, rmsd: Option<f64>) -> PredictionRecord {
        PredictionRecord {
            sample_id: id.into(),
            target_id: "t".into(),
            pose_rank: rank,
            score,
            label,
            rmsd,
            warning: None,
        }
    }

    fn brute_auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
        let (mut num, mut pairs) = (0.0, 0.0);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    if si > sj {
                        num += 1.0;
                    } else if si == sj {
                        num += 0.5;
                    }
                }
            }
        }
        (pairs > 0.0).then(|| num / pairs)
    }

    #[test]
    fn confusion_counts_at_threshold() {
        let r = vec![
            rec("a", 1, 0.9, 1.0, None),
            rec("b", 1, 0.5, 1.0, None),
            rec("c", 1, 0.4, 1.0, None),
            rec("d", 1, 0.6, 0.0, None),
            rec("e", 1, 0.1, 0.0, None),
        ];
        let m = classification_metrics(&r, 0.5).unwrap();
        assert_eq!((m.tp, m.fn_, m.fp, m.tn), (2, 1, 1, 1));
        assert_eq!(m.accuracy, 0.6);
        assert_eq!(m.sensitivity, Some(2.0 / 3.0));
        assert_eq!(m.specificity, Some(0.5));
        // concordant pairs: 4 of 6
        assert_eq!(m.auroc, Some(4.0 / 6.0));
    }

    #[test]
    fn single_class_metrics_are_undefined() {
        let r = vec![rec("a", 1, 0.9, 1.0, None), rec("b", 1, 0.2, 1.0, None)];
        let m = classification_metrics(&r, 0.5).unwrap();
        assert_eq!(m.auroc, None);
        assert_eq!(m.specificity, None);
        let csv = MetricReport::Classification(m).to_csv();
        assert!(csv.contains("auroc,undefined"));
        assert!(csv.contains("specificity,undefined"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            classification_metrics(&[], 0.5),
            Err(MetricsError::Empty)
        ));
        let r = vec![rec("a", 1, 0.9, 0.5, None)];
        assert!(matches!(
            classification_metrics(&r, 0.5),
            Err(MetricsError::NonBinaryLabel { .. })
        ));
        let r = vec![rec("a", 1, f64::NAN, 1.0, None)];
        assert!(matches!(
            regression_metrics(&r),
            Err(MetricsError::NonFinite { .. })
        ));
    }

    #[test]
    fn regression_example() {
        let r = vec![
            rec("a", 1, 1.0, 2.0, None),
            rec("b", 1, 2.0, 2.0, None),
            rec("c", 1, 4.0, 5.0, None),
        ];
        let m = regression_metrics(&r).unwrap();
        assert!((m.rmse - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((m.mae - 2.0 / 3.0).abs() < 1e-15);
        assert!(m.pearson.unwrap() > 0.9);
        assert_eq!(
            m.spearman,
            Some(pearson(&[1.0, 2.0, 3.0], &[1.5, 1.5, 3.0]).unwrap())
        );
        // ss_tot = 6, ss_res = 2
        assert!((m.r2.unwrap() - (1.0 - 2.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_predictions_have_no_correlation() {
        let r = vec![rec("a", 1, 3.0, 1.0, None), rec("b", 1, 3.0, 2.0, None)];
        let m = regression_metrics(&r).unwrap();
        assert_eq!(m.pearson, None);
        assert_eq!(m.spearman, None);
        let r = vec![rec("a", 1, 1.0, 2.0, None), rec("b", 1, 3.0, 2.0, None)];
        assert_eq!(regression_metrics(&r).unwrap().r2, None);
    }

    #[test]
    fn mid_ranks_share_ties() {
        assert_eq!(mid_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(mid_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn topn_example() {
        // complex a: good pose ranked 2nd; b: first; c: none good
        let r = vec![
            rec("a", 1, 0.9, 0.0, Some(5.0)),
            rec("a", 2, 0.8, 1.0, Some(1.0)),
            rec("b", 1, 0.7, 1.0, Some(0.5)),
            rec("b", 2, 0.1, 0.0, Some(6.0)),
            rec("c", 1, 0.5, 0.0, Some(3.0)),
            rec("c", 2, 0.4, 0.0, Some(2.0)),
        ];
        let rows = topn_analysis(&r, &[1, 2, 3], GOOD_POSE_RMSD, RankOrder::Desc).unwrap();
        let pct: Vec<f64> = rows.iter().map(|r| r.percent).collect();
        assert_eq!(pct, vec![100.0 / 3.0, 200.0 / 3.0, 200.0 / 3.0]);
        let asc = topn_analysis(&r, &[1], GOOD_POSE_RMSD, RankOrder::Asc).unwrap();
        // ascending: a picks pose 2, b picks pose 2, c picks pose 2 (2.0 is not < 2.0)
        assert_eq!(asc[0].hits, 1);
    }

    #[test]
    fn topn_ties_break_by_pose_rank() {
        let r = vec![
            rec("a", 2, 0.5, 1.0, Some(1.0)),
            rec("a", 1, 0.5, 0.0, Some(9.0)),
        ];
        assert_eq!(
            topn_analysis(&r, &[1], 2.0, RankOrder::Desc).unwrap()[0].hits,
            0
        );
        assert_eq!(
            topn_analysis(&r, &[2], 2.0, RankOrder::Desc).unwrap()[0].hits,
            1
        );
    }

    #[test]
    fn topn_errors() {
        let r = vec![rec("a", 1, 0.5, 1.0, None)];
        assert!(matches!(
            topn_analysis(&r, &[1], 2.0, RankOrder::Desc),
            Err(MetricsError::MissingRmsd { .. })
        ));
        let r = vec![rec("a", 1, 0.5, 1.0, Some(1.0))];
        assert!(matches!(
            topn_analysis(&r, &[0], 2.0, RankOrder::Desc),
            Err(MetricsError::BadN)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let mut r = vec![
            rec("t:a", 1, 0.123456789012345, 1.0, Some(1.25)),
            rec("t:b", 3, 1e-20, 0.0, None),
        ];
        r[1].warning = Some("no_interactions".into());
        let mut buf = Vec::new();
        write_predictions(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample_id,target_id,pose_rank,score,label,rmsd,warning\n"));
        assert_eq!(read_predictions(&buf[..]).unwrap(), r);
        let legacy = "sample_id,target_id,pose_rank,score,label,rmsd\nx,t,1,0.5,1,\n";
        let got = read_predictions(legacy.as_bytes()).unwrap();
        assert_eq!(got[0].rmsd, None);
        assert_eq!(got[0].warning, None);
    }

    proptest! {
        #[test]
        fn auroc_matches_pair_count(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 5.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assert_eq!(auroc(&scores, &labels), brute_auroc(&scores, &labels));
        }

        #[test]
        fn auroc_invariant_under_monotone_map(
            data in prop::collection::vec((-50i32..50, any::<bool>()), 2..30)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            let mapped: Vec<f64> = scores.iter().map(|s| (s / 10.0).exp() + 3.0).collect();
            prop_assert_eq!(auroc(&scores, &labels), auroc(&mapped, &labels));
        }

        #[test]
        fn spearman_is_rank_pearson(
            xs in prop::collection::vec((0u8..8, -100i32..100), 3..30)
        ) {
            let x: Vec<f64> = xs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = xs.iter().map(|p| p.1 as f64 * 0.37).collect();
            // independent ranking: count-based mid-rank
            let rank = |v: &[f64]| -> Vec<f64> {
                v.iter()
                    .map(|a| {
                        let less = v.iter().filter(|b| *b < a).count() as f64;
                        let eq = v.iter().filter(|b| *b == a).count() as f64;
                        less + (eq + 1.0) / 2.0
                    })
                    .collect()
            };
            match (spearman(&x, &y), pearson(&rank(&x), &rank(&y))) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }
}
