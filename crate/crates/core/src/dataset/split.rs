use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::Dataset;
use crate::math::round;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Per-class shuffled split. Each class contributes `round(n_c * f)` rows to
/// the test side, capped so at least one row stays in train; classes with
/// fewer than two rows stay entirely in train (with a warning).
///
/// Returned index lists are sorted ascending.
pub fn stratified_split_indices(
    labels: &[usize],
    n_classes: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(alloc::format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < 2 {
            if !members.is_empty() {
                log::warn!(
                    "class {class} has {} sample(s); keeping it entirely in train",
                    members.len()
                );
            }
            train.extend(members);
            continue;
        }
        members.shuffle(&mut rng);
        let n_test = (round(members.len() as f64 * test_fraction) as usize).min(members.len() - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Split a dataset into `(train, test)`; see [`stratified_split_indices`].
pub fn stratified_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) =
        stratified_split_indices(ds.labels(), ds.n_classes(), test_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}
