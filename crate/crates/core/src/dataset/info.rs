use serde::{Deserialize, Serialize};

use super::{AttributeKind, AttributeValue, ClassCounts, DatasetError, View};
use crate::scalar::Scalar;

/// How a node partitions examples on its attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// One branch per observed category, plus a missing branch when needed.
    Categorical,
    /// Two branches: `value <= threshold` and `value > threshold`.
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitChoice<T> {
    pub attribute: usize,
    pub name: String,
    pub split: Split,
    pub gain: T,
}

/// Shannon entropy in bits. Empty counts have entropy 0, and `0 log 0` is 0.
pub fn entropy<T: Scalar>(counts: &ClassCounts) -> T {
    let total = counts.total();
    if total == 0 {
        return T::zero();
    }
    let n = T::from_count(total);
    counts
        .counts()
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = T::from_count(c) / n;
            -p * p.log2()
        })
        .sum()
}

/// `H(parent) - sum_b |b|/|parent| H(b)` over the given branch counts.
fn gain_from_partition<T: Scalar>(parent: &ClassCounts, branches: &[ClassCounts]) -> T {
    let total = parent.total();
    if total == 0 {
        return T::zero();
    }
    let n = T::from_count(total);
    let weighted: T = branches
        .iter()
        .filter(|b| b.total() > 0)
        .map(|b| T::from_count(b.total()) / n * entropy::<T>(b))
        .sum();
    entropy::<T>(parent) - weighted
}

/// Threshold gain with missing values excluded: the gain over the known rows,
/// scaled by the fraction of rows that are known.
fn threshold_gain<T: Scalar>(all: u64, low: &ClassCounts, high: &ClassCounts) -> T {
    let mut known = low.clone();
    known.merge(high);
    if known.total() == 0 || all == 0 {
        return T::zero();
    }
    let g: T = gain_from_partition(&known, &[low.clone(), high.clone()]);
    g * T::from_count(known.total()) / T::from_count(all)
}

fn categorical_partition(view: &View<'_>, attribute: usize, values: &[String]) -> Vec<ClassCounts> {
    let k = view.dataset().classes().len();
    // one bucket per category, last bucket for missing
    let mut buckets = vec![ClassCounts::zeros(k); values.len() + 1];
    for i in 0..view.len() {
        let b = match view.value(i, attribute) {
            AttributeValue::Category(c) => values
                .iter()
                .position(|v| v == c)
                .expect("dataset values are validated"),
            _ => values.len(),
        };
        buckets[b].add(view.label(i));
    }
    buckets
}

fn threshold_partition(view: &View<'_>, attribute: usize, t: f64) -> (ClassCounts, ClassCounts) {
    let k = view.dataset().classes().len();
    let (mut low, mut high) = (ClassCounts::zeros(k), ClassCounts::zeros(k));
    for i in 0..view.len() {
        if let Some(x) = view.value(i, attribute).as_number() {
            if x <= t {
                low.add(view.label(i));
            } else {
                high.add(view.label(i));
            }
        }
    }
    (low, high)
}

/// Information gain (bits) of splitting `view` on `attribute`.
///
/// Categorical splits treat missing values as their own branch. Threshold splits
/// ignore rows whose value is missing and scale by the known fraction.
pub fn information_gain<T: Scalar>(
    view: &View<'_>,
    attribute: &str,
    split: &Split,
) -> Result<T, DatasetError> {
    let (idx, schema) = view.dataset().schema().lookup(attribute)?;
    if view.is_empty() {
        return Err(DatasetError::EmptyView);
    }
    match (&schema.kind, split) {
        (AttributeKind::Categorical { values }, Split::Categorical) => {
            let parts = categorical_partition(view, idx, values);
            Ok(gain_from_partition(&view.class_counts(), &parts))
        }
        (AttributeKind::Numeric { .. }, Split::Threshold(t)) => {
            let (low, high) = threshold_partition(view, idx, *t);
            Ok(threshold_gain(view.len() as u64, &low, &high))
        }
        (AttributeKind::Categorical { .. }, Split::Threshold(_)) => {
            Err(DatasetError::ThresholdOnCategorical(attribute.to_string()))
        }
        (AttributeKind::Numeric { .. }, Split::Categorical) => {
            Err(DatasetError::CategoricalOnNumeric(attribute.to_string()))
        }
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

fn sorted_known(view: &View<'_>, attribute: usize) -> Vec<(f64, usize)> {
    let mut known: Vec<(f64, usize)> = (0..view.len())
        .filter_map(|i| view.value(i, attribute).as_number().map(|x| (x, view.label(i))))
        .collect();
    known.sort_by(|a, b| a.0.total_cmp(&b.0));
    known
}

/// Midpoints between consecutive distinct known values, ascending.
pub fn candidate_thresholds(view: &View<'_>, attribute: &str) -> Result<Vec<f64>, DatasetError> {
    let (idx, schema) = view.dataset().schema().lookup(attribute)?;
    if !schema.is_numeric() {
        return Err(DatasetError::ThresholdOnCategorical(attribute.to_string()));
    }
    let known = sorted_known(view, idx);
    Ok(known
        .windows(2)
        .filter(|w| w[0].0 < w[1].0)
        .map(|w| midpoint(w[0].0, w[1].0))
        .collect())
}

/// Best threshold for one numeric attribute by a single sorted sweep.
fn best_threshold<T: Scalar>(view: &View<'_>, attribute: usize) -> Option<(f64, T)> {
    let k = view.dataset().classes().len();
    let known = sorted_known(view, attribute);
    let mut high = ClassCounts::zeros(k);
    for &(_, l) in &known {
        high.add(l);
    }
    let mut low = ClassCounts::zeros(k);
    let all = view.len() as u64;
    let eps = T::tie_epsilon();
    let mut best: Option<(f64, T)> = None;
    for i in 0..known.len().saturating_sub(1) {
        let (x, l) = known[i];
        low.add(l);
        high.remove(l);
        let next = known[i + 1].0;
        if x < next {
            let g: T = threshold_gain(all, &low, &high);
            match best {
                Some((_, b)) if g <= b + eps => {}
                _ => best = Some((midpoint(x, next), g)),
            }
        }
    }
    best
}

/// Best split over attribute indices; see [`best_split`].
pub fn best_split_among<T: Scalar>(
    view: &View<'_>,
    available: &[usize],
) -> Result<SplitChoice<T>, DatasetError> {
    if view.is_empty() {
        return Err(DatasetError::EmptyView);
    }
    if available.is_empty() {
        return Err(DatasetError::NoAttributes);
    }
    let schema = view.dataset().schema();
    let mut order: Vec<usize> = available.to_vec();
    order.sort_by(|&a, &b| schema.get(a).name.cmp(&schema.get(b).name));
    order.dedup();

    let parent = view.class_counts();
    let eps = T::tie_epsilon();
    let mut best: Option<SplitChoice<T>> = None;
    for idx in order {
        let attr = schema.get(idx);
        let candidate = match &attr.kind {
            AttributeKind::Categorical { values } => {
                let parts = categorical_partition(view, idx, values);
                Some((Split::Categorical, gain_from_partition::<T>(&parent, &parts)))
            }
            AttributeKind::Numeric { .. } => {
                best_threshold::<T>(view, idx).map(|(t, g)| (Split::Threshold(t), g))
            }
        };
        if let Some((split, gain)) = candidate {
            let better = match &best {
                None => true,
                Some(b) => gain > b.gain + eps,
            };
            if better {
                best = Some(SplitChoice {
                    attribute: idx,
                    name: attr.name.clone(),
                    split,
                    gain,
                });
            }
        }
    }
    match best {
        Some(b) if b.gain > eps => Ok(b),
        _ => Err(DatasetError::NoInformativeSplit),
    }
}

/// Attribute (and threshold, for numeric attributes) with maximal information gain.
///
/// Ties go to the lexicographically smallest attribute name, then to the smallest
/// threshold. Returns [`DatasetError::NoInformativeSplit`] when every gain is zero.
pub fn best_split<T: Scalar, S: AsRef<str>>(
    view: &View<'_>,
    available: &[S],
) -> Result<SplitChoice<T>, DatasetError> {
    let schema = view.dataset().schema();
    let idx = available
        .iter()
        .map(|n| schema.lookup(n.as_ref()).map(|(i, _)| i))
        .collect::<Result<Vec<_>, _>>()?;
    best_split_among(view, &idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::figure1;
    use approx::assert_abs_diff_eq;

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy::<f64>(&ClassCounts::from_counts(vec![4, 0])), 0.0);
        assert_abs_diff_eq!(entropy::<f64>(&ClassCounts::from_counts(vec![3, 3])), 1.0);
        assert_abs_diff_eq!(
            entropy::<f64>(&ClassCounts::from_counts(vec![2, 1])),
            0.918_295_834_054_489_6,
            epsilon = 1e-12
        );
        assert_eq!(entropy::<f64>(&ClassCounts::zeros(2)), 0.0);
        assert_abs_diff_eq!(
            entropy::<f32>(&ClassCounts::from_counts(vec![1, 1, 1, 1])),
            2.0f32,
            epsilon = 1e-6
        );
    }

    #[test]
    fn figure1_bankruptcy_gain() {
        let ds = figure1();
        let g: f64 = information_gain(&ds.view(), "Bankruptcy", &Split::Categorical).unwrap();
        assert_abs_diff_eq!(g, 0.251_629_167_387_823, epsilon = 1e-9);
        let e: f64 = information_gain(&ds.view(), "Employment", &Split::Categorical).unwrap();
        assert_abs_diff_eq!(e, g, epsilon = 1e-12);
    }

    #[test]
    fn gain_errors() {
        let ds = figure1();
        let v = ds.view();
        assert!(matches!(
            information_gain::<f64>(&v, "Nope", &Split::Categorical),
            Err(DatasetError::UnknownAttribute(_))
        ));
        assert!(matches!(
            information_gain::<f64>(&v, "Bankruptcy", &Split::Threshold(1.0)),
            Err(DatasetError::ThresholdOnCategorical(_))
        ));
        assert!(matches!(
            information_gain::<f64>(&ds.subset(vec![]), "Bankruptcy", &Split::Categorical),
            Err(DatasetError::EmptyView)
        ));
    }

    #[test]
    fn single_valued_attribute_has_zero_gain() {
        let ds = figure1();
        // rows 0 and 1 both have Employment = no
        let v = ds.subset(vec![0, 1]);
        let g: f64 = information_gain(&v, "Employment", &Split::Categorical).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn thresholds() {
        let ds = figure1();
        assert_eq!(candidate_thresholds(&ds.view(), "Years").unwrap(), vec![5.5]);
        assert_eq!(
            candidate_thresholds(&ds.view(), "Savings").unwrap(),
            vec![3500.0, 52500.0]
        );
        assert!(candidate_thresholds(&ds.subset(vec![0]), "Years")
            .unwrap()
            .is_empty());
        assert!(candidate_thresholds(&ds.view(), "Bankruptcy").is_err());
    }

    #[test]
    fn best_split_ties_break_by_name() {
        let ds = figure1();
        let s = best_split::<f64, _>(&ds.view(), &["Employment", "Bankruptcy"]).unwrap();
        assert_eq!(s.name, "Bankruptcy");
        assert_abs_diff_eq!(s.gain, 0.251_629_167_387_823, epsilon = 1e-9);
        let all = best_split::<f64, _>(&ds.view(), &["Savings", "Years", "Employment", "Bankruptcy"])
            .unwrap();
        assert_eq!(all.name, "Bankruptcy");
    }

    #[test]
    fn pure_view_has_no_informative_split() {
        let ds = figure1();
        let v = ds.subset(vec![0, 2]);
        assert_eq!(
            best_split::<f64, _>(&v, &["Employment", "Savings"]),
            Err(DatasetError::NoInformativeSplit)
        );
    }

    #[test]
    fn singleton_argmax() {
        let ds = figure1();
        let s = best_split::<f64, _>(&ds.view(), &["Employment"]).unwrap();
        assert_eq!((s.name.as_str(), s.split), ("Employment", Split::Categorical));
        let s = best_split::<f64, _>(&ds.subset(vec![0, 1]), &["Savings"]).unwrap();
        assert_eq!(s.split, Split::Threshold(52_500.0));
        assert_abs_diff_eq!(s.gain, 1.0);
    }

    #[test]
    fn numeric_gain_excludes_missing_and_scales() {
        let ds = figure1();
        // Years known only for rows 0 (yes) and 2 (yes): pure known subset
        let g: f64 = information_gain(&ds.view(), "Years", &Split::Threshold(5.5)).unwrap();
        assert_eq!(g, 0.0);
        // rows 0,1 on Savings: perfect split, both known
        let g: f64 =
            information_gain(&ds.subset(vec![0, 1]), "Savings", &Split::Threshold(52_500.0))
                .unwrap();
        assert_abs_diff_eq!(g, 1.0);
    }
}
