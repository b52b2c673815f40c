//! Dataset parsing, preprocessing, and seeded splitting.
//!
//! Two input formats are supported: LIBSVM sparse text (`label idx:val ...`
//! with 1-based, strictly increasing indices) and numeric CSV with a
//! header row. Preprocessing standardizes each feature (statistics from
//! the training split by default) and then scales every instance to unit
//! L2 norm.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::classifier::LabeledDataset;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("dataset has {count} distinct labels, expected at most 2")]
    TooManyClasses { count: usize },
    #[error("dataset contains no instances")]
    Empty,
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("could not produce a train split containing both classes after {attempts} attempts")]
    ClassStarved { attempts: usize },
}

/// Where standardization statistics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StatsMode {
    /// Mean/std from the training split only (leakage-free default).
    #[default]
    TrainOnly,
    /// Mean/std pooled over train and test together.
    Global,
}

/// A parsed but not yet preprocessed dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub instances: Vec<DVector<f64>>,
    pub labels: Vec<i8>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.instances.first().map_or(0, |x| x.len())
    }

    pub fn into_labeled(self) -> LabeledDataset {
        LabeledDataset::new(self.instances, self.labels)
    }
}

/// Maps raw numeric labels onto {−1, +1}: smaller source label → −1,
/// larger → +1. A single-label file keeps the sign of its label.
fn map_labels(raw: &[f64]) -> Result<Vec<i8>, ParseError> {
    let mut distinct: Vec<f64> = Vec::new();
    for &l in raw {
        if !distinct.iter().any(|&d| d == l) {
            distinct.push(l);
        }
    }
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("labels must be orderable"));
    match distinct.len() {
        0 => Err(ParseError::Empty),
        1 => {
            let mapped = if distinct[0] < 0.0 { -1 } else { 1 };
            Ok(vec![mapped; raw.len()])
        }
        2 => Ok(raw
            .iter()
            .map(|&l| if l == distinct[0] { -1 } else { 1 })
            .collect()),
        n => Err(ParseError::TooManyClasses { count: n }),
    }
}

/// Parses LIBSVM sparse text into a dense dataset. Missing indices are
/// zero; the width is the maximum index seen. Empty lines are skipped.
pub fn parse_libsvm(text: &str) -> Result<RawDataset, ParseError> {
    let mut raw_labels = Vec::new();
    let mut sparse_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;

    for (line_no, line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a first token");
        let label: f64 = label_tok.parse().map_err(|_| ParseError::Malformed {
            line: line_no,
            message: format!("invalid label `{label_tok}`"),
        })?;
        let mut row = Vec::new();
        let mut prev_index = 0usize;
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| ParseError::Malformed {
                line: line_no,
                message: format!("expected `index:value`, got `{tok}`"),
            })?;
            let idx: usize = idx_str.parse().map_err(|_| ParseError::Malformed {
                line: line_no,
                message: format!("invalid feature index `{idx_str}`"),
            })?;
            if idx == 0 {
                return Err(ParseError::Malformed {
                    line: line_no,
                    message: "feature indices are 1-based".into(),
                });
            }
            if idx <= prev_index {
                return Err(ParseError::Malformed {
                    line: line_no,
                    message: format!("feature index {idx} not strictly increasing"),
                });
            }
            let val: f64 = val_str.parse().map_err(|_| ParseError::Malformed {
                line: line_no,
                message: format!("invalid feature value `{val_str}`"),
            })?;
            prev_index = idx;
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        raw_labels.push(label);
        sparse_rows.push(row);
    }

    if raw_labels.is_empty() {
        return Err(ParseError::Empty);
    }
    let labels = map_labels(&raw_labels)?;
    let instances = sparse_rows
        .into_iter()
        .map(|row| {
            let mut dense = DVector::zeros(max_index);
            for (idx, val) in row {
                dense[idx] = val;
            }
            dense
        })
        .collect();
    Ok(RawDataset { instances, labels })
}

/// Serializes a dataset back to LIBSVM text (zeros omitted). Labels are
/// written as they are stored, i.e. −1/+1.
pub fn write_libsvm(dataset: &RawDataset) -> String {
    let mut out = String::new();
    for (x, &label) in dataset.instances.iter().zip(&dataset.labels) {
        out.push_str(if label < 0 { "-1" } else { "+1" });
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                out.push_str(&format!(" {}:{}", i + 1, v));
            }
        }
        out.push('\n');
    }
    out
}

/// Parses numeric CSV with a header row. `label_column` names the label
/// column; every other column becomes a feature, in header order.
pub fn parse_csv(text: &str, label_column: &str) -> Result<RawDataset, ParseError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ParseError::Empty)?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_pos = columns
        .iter()
        .position(|&c| c == label_column)
        .ok_or_else(|| ParseError::Malformed {
            line: 1,
            message: format!("label column `{label_column}` not found in header"),
        })?;

    let mut raw_labels = Vec::new();
    let mut instances = Vec::new();
    for (line_no, line) in lines {
        let line_no = line_no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(ParseError::Malformed {
                line: line_no,
                message: format!("expected {} cells, found {}", columns.len(), cells.len()),
            });
        }
        let mut features = Vec::with_capacity(columns.len() - 1);
        for (col, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| ParseError::Malformed {
                line: line_no,
                message: format!("column `{}`: non-numeric cell `{cell}`", columns[col]),
            })?;
            if col == label_pos {
                raw_labels.push(value);
            } else {
                features.push(value);
            }
        }
        instances.push(DVector::from_vec(features));
    }
    if instances.is_empty() {
        return Err(ParseError::Empty);
    }
    let labels = map_labels(&raw_labels)?;
    Ok(RawDataset { instances, labels })
}

/// Seeded uniform split: shuffle, first ⌈n·fraction⌉ instances to train.
///
/// If the shuffle leaves the train side without one of the classes, the
/// split retries with derived sub-seeds (up to 100 attempts).
pub fn split(
    dataset: &RawDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(RawDataset, RawDataset), SplitError> {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train fraction must be in (0, 1)"
    );
    let n = dataset.len();
    let n_train = ((n as f64) * train_fraction).ceil() as usize;
    let classes: Vec<i8> = {
        let mut c: Vec<i8> = dataset.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    };

    const MAX_ATTEMPTS: usize = 100;
    for attempt in 0..MAX_ATTEMPTS {
        let sub_seed = seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);

        let take = |idxs: &[usize]| RawDataset {
            instances: idxs.iter().map(|&i| dataset.instances[i].clone()).collect(),
            labels: idxs.iter().map(|&i| dataset.labels[i]).collect(),
        };
        let train = take(&order[..n_train]);
        let test = take(&order[n_train..]);
        let train_complete = classes.iter().all(|c| train.labels.contains(c));
        if train_complete {
            return Ok((train, test));
        }
    }
    Err(SplitError::ClassStarved { attempts: MAX_ATTEMPTS })
}

/// Per-feature standardization statistics.
#[derive(Debug, Clone)]
pub struct FeatureStats {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

/// Computes mean and (population) standard deviation per feature.
pub fn feature_stats(instances: &[DVector<f64>]) -> FeatureStats {
    assert!(!instances.is_empty(), "cannot compute stats of empty data");
    let d = instances[0].len();
    let n = instances.len() as f64;
    let mut mean = DVector::zeros(d);
    for x in instances {
        mean += x;
    }
    mean /= n;
    let mut var = DVector::zeros(d);
    for x in instances {
        let diff = x - &mean;
        var += diff.component_mul(&diff);
    }
    var /= n;
    FeatureStats {
        mean,
        std: var.map(f64::sqrt),
    }
}

/// Standardizes both splits with the requested statistics source.
/// Features with std below 1e−12 are centered but not divided.
pub fn standardize(
    train: &RawDataset,
    test: &RawDataset,
    mode: StatsMode,
) -> (RawDataset, RawDataset) {
    let stats = match mode {
        StatsMode::TrainOnly => feature_stats(&train.instances),
        StatsMode::Global => {
            let mut pooled: Vec<DVector<f64>> = train.instances.clone();
            pooled.extend(test.instances.iter().cloned());
            feature_stats(&pooled)
        }
    };
    let apply = |ds: &RawDataset| RawDataset {
        instances: ds
            .instances
            .iter()
            .map(|x| {
                DVector::from_fn(x.len(), |i, _| {
                    let centered = x[i] - stats.mean[i];
                    if stats.std[i] < 1e-12 {
                        centered
                    } else {
                        centered / stats.std[i]
                    }
                })
            })
            .collect(),
        labels: ds.labels.clone(),
    };
    (apply(train), apply(test))
}

/// Scales each instance to unit L2 norm; exact zero vectors pass through.
pub fn l2_normalize(dataset: &RawDataset) -> RawDataset {
    RawDataset {
        instances: dataset
            .instances
            .iter()
            .map(|x| {
                let norm = x.norm();
                if norm > 0.0 {
                    x / norm
                } else {
                    x.clone()
                }
            })
            .collect(),
        labels: dataset.labels.clone(),
    }
}

/// Full preprocessing pipeline: standardize, then L2-normalize each
/// instance.
pub fn preprocess(
    train: &RawDataset,
    test: &RawDataset,
    mode: StatsMode,
) -> (LabeledDataset, LabeledDataset) {
    let (train_std, test_std) = standardize(train, test, mode);
    (
        l2_normalize(&train_std).into_labeled(),
        l2_normalize(&test_std).into_labeled(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_sparse_line_densely() {
        let ds = parse_libsvm("+1 1:0.5 3:2.0\n").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.instances[0], DVector::from_vec(vec![0.5, 0.0, 2.0]));
        assert_eq!(ds.labels[0], 1);
    }

    #[test]
    fn skips_empty_lines() {
        let ds = parse_libsvm("+1 1:1.0\n\n-1 1:2.0\n\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![1, -1]);
    }

    #[test]
    fn rejects_malformed_token_with_line_number() {
        let err = parse_libsvm("+1 1:1.0\n-1 oops\n").unwrap_err();
        match err {
            ParseError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_non_increasing_indices() {
        let err = parse_libsvm("+1 2:1.0 2:2.0\n").unwrap_err();
        assert!(matches!(err, ParseError::Malformed { line: 1, .. }));
        let err = parse_libsvm("+1 3:1.0 2:2.0\n").unwrap_err();
        assert!(matches!(err, ParseError::Malformed { line: 1, .. }));
    }

    #[test]
    fn rejects_more_than_two_classes() {
        let err = parse_libsvm("1 1:1.0\n2 1:2.0\n3 1:3.0\n").unwrap_err();
        assert!(matches!(err, ParseError::TooManyClasses { count: 3 }));
    }

    #[test]
    fn csv_maps_zero_one_labels() {
        let ds = parse_csv("a,b,label\n1.0,2.0,0\n3.0,4.0,1\n", "label").unwrap();
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels, vec![-1, 1]);
        assert_eq!(ds.instances[1], DVector::from_vec(vec![3.0, 4.0]));
    }

    #[test]
    fn csv_rejects_ragged_rows_and_bad_cells() {
        let err = parse_csv("a,label\n1.0,0\n2.0\n", "label").unwrap_err();
        assert!(matches!(err, ParseError::Malformed { line: 3, .. }));
        let err = parse_csv("a,label\nx,0\n", "label").unwrap_err();
        match err {
            ParseError::Malformed { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("`a`"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_and_libsvm_encodings_agree() {
        let csv = "f1,f2,y\n0.5,0.0,0\n1.5,2.5,1\n";
        let libsvm = "-1 1:0.5\n+1 1:1.5 2:2.5\n";
        let a = parse_csv(csv, "y").unwrap();
        let b = parse_libsvm(libsvm).unwrap();
        assert_eq!(a.instances, b.instances);
        assert_eq!(a.labels, b.labels);
    }

    fn toy_dataset(n: usize) -> RawDataset {
        RawDataset {
            instances: (0..n)
                .map(|i| DVector::from_vec(vec![i as f64, (i * i) as f64]))
                .collect(),
            labels: (0..n).map(|i| if i % 2 == 0 { -1 } else { 1 }).collect(),
        }
    }

    #[test]
    fn split_cardinality_and_determinism() {
        let ds = toy_dataset(10);
        let (train, test) = split(&ds, 0.6, 7).unwrap();
        assert_eq!(train.len(), 6);
        assert_eq!(test.len(), 4);
        // Disjoint and complete: every original row appears exactly once.
        let mut seen: Vec<&DVector<f64>> = train.instances.iter().chain(&test.instances).collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut orig: Vec<&DVector<f64>> = ds.instances.iter().collect();
        orig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(seen, orig);

        let (train2, test2) = split(&ds, 0.6, 7).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let (train3, _) = split(&ds, 0.6, 8).unwrap();
        assert_ne!(train, train3, "different seeds should differ");
    }

    #[test]
    fn split_keeps_class_proportions_roughly() {
        let n = 200;
        let ds = RawDataset {
            instances: (0..n).map(|i| DVector::from_vec(vec![i as f64])).collect(),
            labels: (0..n).map(|i| if i < 120 { -1 } else { 1 }).collect(),
        };
        let global_neg = 120.0 / n as f64;
        for seed in 0..10 {
            let (train, _) = split(&ds, 0.6, seed).unwrap();
            let neg = train.labels.iter().filter(|&&l| l == -1).count() as f64 / train.len() as f64;
            assert!(
                (neg - global_neg).abs() / global_neg < 0.2,
                "seed {seed}: train negative share {neg} drifted from {global_neg}"
            );
        }
    }

    #[test]
    fn split_retries_until_both_classes_in_train() {
        // One positive among five: many shuffles put it in the test side.
        let ds = RawDataset {
            instances: (0..5).map(|i| DVector::from_vec(vec![i as f64])).collect(),
            labels: vec![-1, -1, -1, -1, 1],
        };
        for seed in 0..50 {
            let (train, _) = split(&ds, 0.6, seed).unwrap();
            assert!(train.labels.contains(&1), "seed {seed} lost the positive class");
        }
    }

    #[test]
    fn constant_feature_centers_without_dividing() {
        let train = RawDataset {
            instances: vec![
                DVector::from_vec(vec![5.0, 1.0]),
                DVector::from_vec(vec![5.0, 3.0]),
            ],
            labels: vec![-1, 1],
        };
        let (std_train, _) = standardize(&train, &train, StatsMode::TrainOnly);
        for x in &std_train.instances {
            assert_eq!(x[0], 0.0, "constant column should center to zero");
        }
    }

    #[test]
    fn standardized_train_columns_have_zero_mean_unit_std() {
        let ds = toy_dataset(50);
        let (train, test) = split(&ds, 0.6, 3).unwrap();
        let (std_train, _) = standardize(&train, &test, StatsMode::TrainOnly);
        let stats = feature_stats(&std_train.instances);
        for i in 0..std_train.dim() {
            assert!(stats.mean[i].abs() < 1e-10, "column {i} mean {}", stats.mean[i]);
            assert!((stats.std[i] - 1.0).abs() < 1e-10, "column {i} std {}", stats.std[i]);
        }
    }

    #[test]
    fn preprocessing_yields_unit_rows() {
        let ds = toy_dataset(20);
        let (train, test) = split(&ds, 0.6, 1).unwrap();
        let (ptrain, ptest) = preprocess(&train, &test, StatsMode::TrainOnly);
        for x in ptrain.instances.iter().chain(&ptest.instances) {
            let norm = x.norm();
            assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12, "norm {norm}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// parse → serialize → parse is the identity on dense content.
        #[test]
        fn libsvm_round_trip(rows in proptest::collection::vec(
            (proptest::bool::ANY, proptest::collection::vec(-100.0f64..100.0, 1..6)),
            2..20,
        )) {
            let width = rows.iter().map(|(_, f)| f.len()).max().unwrap();
            // Make at least one row carry the max index so the width survives.
            let text: String = rows
                .iter()
                .map(|(pos, feats)| {
                    let mut line = String::from(if *pos { "+1" } else { "-1" });
                    for (i, v) in feats.iter().enumerate() {
                        if *v != 0.0 || i == width - 1 {
                            line.push_str(&format!(" {}:{}", i + 1, v));
                        }
                    }
                    line.push('\n');
                    line
                })
                .collect();
            prop_assume!(rows.iter().any(|(p, _)| *p) && rows.iter().any(|(p, _)| !*p));
            prop_assume!(rows.iter().any(|(_, f)| f.len() == width && *f.last().unwrap() != 0.0));

            let first = parse_libsvm(&text).unwrap();
            let second = parse_libsvm(&write_libsvm(&first)).unwrap();
            prop_assert_eq!(first.labels, second.labels);
            prop_assert_eq!(first.instances, second.instances);
        }
    }
}
