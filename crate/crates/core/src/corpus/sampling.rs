use rand::seq::{index, SliceRandom};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::seeded_rng;

/// Apportions `n` seats over `weights` by the largest-remainder rule. Ties in
/// the remainder go to the lower index.
pub fn largest_remainder(weights: &[f64], n: usize) -> Result<Vec<usize>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::config("weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return if n == 0 {
            Ok(vec![0; weights.len()])
        } else {
            Err(Error::config("cannot apportion over all-zero weights"))
        };
    }
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        quotas[i] += 1;
    }
    Ok(quotas)
}

/// Integer-exact apportionment over counts; avoids float rounding in the
/// remainders when the weights are turn counts.
fn apportion_counts(counts: &[usize], n: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let mut quotas: Vec<usize> = counts.iter().map(|&c| n * c / total).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        ((n * counts[b]) % total)
            .cmp(&((n * counts[a]) % total))
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(n - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Draws `quotas[label]` turns of each label uniformly without replacement.
/// The sample keeps dataset order.
pub fn sample_with_quotas(dataset: &Dataset, quotas: &[usize], seed: u64) -> Result<Dataset> {
    if quotas.len() != dataset.labels.len() {
        return Err(Error::config(format!(
            "{} quotas for {} labels",
            quotas.len(),
            dataset.labels.len()
        )));
    }
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); dataset.labels.len()];
    for (i, t) in dataset.turns.iter().enumerate() {
        by_label[dataset.label_index(t)].push(i);
    }
    let mut rng = seeded_rng(seed);
    let mut chosen = Vec::with_capacity(quotas.iter().sum());
    for (label, (&quota, pool)) in quotas.iter().zip(&by_label).enumerate() {
        if quota > pool.len() {
            return Err(Error::InfeasibleSample {
                label: dataset.labels.tag(label).to_string(),
                quota,
                available: pool.len(),
            });
        }
        chosen.extend(
            index::sample(&mut rng, pool.len(), quota)
                .into_iter()
                .map(|j| pool[j]),
        );
    }
    chosen.sort_unstable();
    Ok(dataset.subset(&chosen))
}

/// `n` turns whose label counts follow the dataset's own label distribution
/// (largest-remainder quotas).
pub fn stratified_sample(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > dataset.len() {
        return Err(Error::config(format!(
            "sample of {n} requested from {} turns",
            dataset.len()
        )));
    }
    let quotas = apportion_counts(&dataset.label_counts(), n);
    sample_with_quotas(dataset, &quotas, seed)
}

/// Partition of `0..n` into shuffled folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Folds {
    folds: Vec<Vec<usize>>,
}

impl Folds {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn fold(&self, i: usize) -> &[usize] {
        &self.folds[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.folds.iter().map(Vec::as_slice)
    }

    /// Every index outside fold `i`, ascending.
    pub fn complement(&self, i: usize) -> Vec<usize> {
        let mut rest: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        rest.sort_unstable();
        rest
    }
}

/// Shuffles `0..n` and cuts it into `k` folds of size ⌊n/k⌋ or ⌈n/k⌉ (the
/// larger ones first). Indices inside a fold are sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Folds> {
    if k < 2 {
        return Err(Error::config(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::config(format!("k = {k} exceeds the {n} items")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let mut fold = order[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(Folds { folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabelSet, Turn};
    use proptest::prelude::*;

    fn dataset(counts: &[(&str, usize)]) -> Dataset {
        let labels = LabelSet::new(counts.iter().map(|(l, _)| *l)).unwrap();
        let mut turns = Vec::new();
        for (label, n) in counts {
            for _ in 0..*n {
                turns.push(Turn {
                    dialogue_id: format!("d{}", turns.len()),
                    turn_index: 0,
                    speaker: "s".into(),
                    label: label.to_string(),
                    text_original: String::new(),
                    text_translated: None,
                });
            }
        }
        Dataset::new(labels, turns).unwrap()
    }

    #[test]
    fn whole_dataset_and_single_label() {
        let ds = dataset(&[("A", 3), ("B", 2)]);
        assert_eq!(stratified_sample(&ds, 5, 1).unwrap(), ds);
        let single = dataset(&[("ONLY", 9)]);
        let s = stratified_sample(&single, 5, 1).unwrap();
        assert_eq!(s.label_counts(), vec![5]);
        assert!(stratified_sample(&single, 10, 1).is_err());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ds = dataset(&[("A", 50), ("B", 30), ("C", 20)]);
        let a = stratified_sample(&ds, 10, 5).unwrap();
        assert_eq!(a, stratified_sample(&ds, 10, 5).unwrap());
        assert_ne!(a, stratified_sample(&ds, 10, 6).unwrap());
        assert_eq!(a.label_counts(), vec![5, 3, 2]);
    }

    #[test]
    fn infeasible_quota() {
        let ds = dataset(&[("A", 2), ("B", 8)]);
        let err = sample_with_quotas(&ds, &[3, 1], 0).unwrap_err();
        assert!(matches!(
            err,
            Error::InfeasibleSample {
                quota: 3,
                available: 2,
                ..
            }
        ));
    }

    #[test]
    fn remainder_ties_go_to_lower_index() {
        assert_eq!(
            largest_remainder(&[1.0, 1.0, 1.0], 2).unwrap(),
            vec![1, 1, 0]
        );
        assert_eq!(apportion_counts(&[1, 1, 1], 2), vec![1, 1, 0]);
    }

    #[test]
    fn kfold_examples() {
        let f = kfold_split(470, 10, 3).unwrap();
        assert!(f.iter().all(|fold| fold.len() == 47));
        let loo = kfold_split(10, 10, 3).unwrap();
        assert!(loo.iter().all(|fold| fold.len() == 1));
        assert!(kfold_split(5, 6, 0).is_err());
        assert!(kfold_split(5, 1, 0).is_err());
        assert_eq!(f.complement(0).len(), 423);
    }

    proptest! {
        #[test]
        fn kfold_is_partition(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let f = kfold_split(n, k, seed).unwrap();
            let mut all: Vec<usize> = f.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = f.iter().map(<[usize]>::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn largest_remainder_properties(
            weights in prop::collection::vec(0.0f64..10.0, 1..12),
            n in 0usize..300,
        ) {
            prop_assume!(weights.iter().sum::<f64>() > 1e-6);
            let q = largest_remainder(&weights, n).unwrap();
            prop_assert_eq!(q.iter().sum::<usize>(), n);
            let total: f64 = weights.iter().sum();
            for (qi, w) in q.iter().zip(&weights) {
                let exact = n as f64 * w / total;
                prop_assert!((*qi as f64 - exact).abs() < 1.0 + 1e-9);
            }
        }

        #[test]
        fn count_apportionment_matches_float_rule(
            counts in prop::collection::vec(0usize..60, 1..10),
            frac in 0.0f64..1.0,
        ) {
            let total: usize = counts.iter().sum();
            prop_assume!(total > 0);
            let n = (frac * total as f64) as usize;
            let q = apportion_counts(&counts, n);
            prop_assert_eq!(q.iter().sum::<usize>(), n);
            for (qi, c) in q.iter().zip(&counts) {
                prop_assert!(qi <= c);
                let exact = n as f64 * *c as f64 / total as f64;
                prop_assert!(exact - (*qi as f64) < 1.0 && (*qi as f64) - exact < 1.0);
            }
        }
    }
}
