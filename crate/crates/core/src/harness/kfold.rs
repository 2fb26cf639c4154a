// SPDX-License-Identifier: Apache-2.0

use crate::error::{Error, Result};
use crate::numerics::{streams, RngStream};

/// One fold: training indices and validation indices, each sorted.
pub type Fold = (Vec<usize>, Vec<usize>);

/// Shuffles `0..n` on the folds stream and cuts it into `k` nearly equal
/// validation folds; the first `n mod k` folds get one extra index.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Parameter(format!("k must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::Parameter(format!("k = {k} exceeds the {n} available samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    RngStream::new(seed, streams::FOLDS).shuffle(&mut idx);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut val = idx[start..start + len].to_vec();
        val.sort_unstable();
        let mut train: Vec<usize> = idx[..start].iter().chain(&idx[start + len..]).copied().collect();
        train.sort_unstable();
        folds.push((train, val));
        start += len;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_into_five() {
        let folds = kfold_split(10, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        assert!(folds.iter().all(|(t, v)| v.len() == 2 && t.len() == 8));
        assert_eq!(folds, kfold_split(10, 5, 3).unwrap());
    }

    #[test]
    fn invalid_k() {
        assert!(kfold_split(3, 4, 0).is_err());
        assert!(kfold_split(3, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_indices(n in 2usize..60, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let folds = kfold_split(n, k, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flat_map(|(_, v)| v.clone()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for (t, v) in &folds {
                prop_assert_eq!(t.len() + v.len(), n);
                prop_assert!(t.iter().all(|i| !v.contains(i)));
            }
        }
    }
}
