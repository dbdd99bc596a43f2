//! Log transform and quantile normalization across tracks.

use crate::error::{Error, Result};

pub const DEFAULT_PSEUDOCOUNT: f64 = 1.0;

/// Column-major matrix of per-track values.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackMatrix {
    pub columns: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl TrackMatrix {
    pub fn new(columns: Vec<String>, data: Vec<Vec<f64>>) -> Result<Self> {
        if columns.len() != data.len() {
            return Err(Error::invalid("column ids and column data differ in count"));
        }
        if let Some(first) = data.first() {
            if data.iter().any(|c| c.len() != first.len()) {
                return Err(Error::invalid("ragged columns"));
            }
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite value in track matrix"));
        }
        Ok(TrackMatrix { columns, data })
    }

    pub fn rows(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }
}

pub fn log2_transform(values: &[f64], pseudocount: f64) -> Result<Vec<f64>> {
    if !pseudocount.is_finite() || pseudocount <= 0.0 {
        return Err(Error::invalid("pseudocount must be positive"));
    }
    values
        .iter()
        .map(|&v| {
            if v < 0.0 || !v.is_finite() {
                Err(Error::invalid(format!("cannot log-transform value {v}")))
            } else {
                Ok((v + pseudocount).log2())
            }
        })
        .collect()
}

fn stable_order(column: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..column.len()).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
    order
}

/// Quantile normalization: every column is mapped onto the mean of the
/// column-sorted matrix, rank for rank. Ties keep their row order, so tied
/// inputs can receive distinct outputs.
pub fn quantile_normalize(m: &TrackMatrix) -> Result<TrackMatrix> {
    let k = m.data.len();
    if k < 2 {
        return Err(Error::invalid("quantile normalization needs at least 2 columns"));
    }
    let n = m.rows();
    if m.data.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("ragged columns"));
    }
    let orders: Vec<Vec<usize>> = m.data.iter().map(|c| stable_order(c)).collect();
    let reference: Vec<f64> = (0..n)
        .map(|rank| {
            let first = m.data[0][orders[0][rank]];
            let mut all_equal = true;
            let mut sum = 0.0;
            for (col, order) in m.data.iter().zip(&orders) {
                let v = col[order[rank]];
                all_equal &= v == first;
                sum += v;
            }
            // an exact fixed point keeps the transform idempotent
            if all_equal {
                first
            } else {
                sum / k as f64
            }
        })
        .collect();
    let data = orders
        .iter()
        .map(|order| {
            let mut out = vec![0.0; n];
            for (rank, &row) in order.iter().enumerate() {
                out[row] = reference[rank];
            }
            out
        })
        .collect();
    Ok(TrackMatrix {
        columns: m.columns.clone(),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(cols: Vec<Vec<f64>>) -> TrackMatrix {
        let ids = (0..cols.len()).map(|i| format!("c{i}")).collect();
        TrackMatrix::new(ids, cols).unwrap()
    }

    /// Hand oracle: sort each column, average across columns per rank,
    /// reassign by stable rank counted directly.
    fn oracle(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = cols[0].len();
        let sorted: Vec<Vec<f64>> = cols
            .iter()
            .map(|c| {
                let mut s = c.clone();
                s.sort_by(f64::total_cmp);
                s
            })
            .collect();
        let means: Vec<f64> = (0..n)
            .map(|r| sorted.iter().map(|s| s[r]).sum::<f64>() / cols.len() as f64)
            .collect();
        cols.iter()
            .map(|c| {
                (0..n)
                    .map(|i| {
                        let rank = (0..n)
                            .filter(|&j| c[j] < c[i] || (c[j] == c[i] && j < i))
                            .count();
                        means[rank]
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn log2_examples() {
        assert_eq!(log2_transform(&[0.0, 1.0, 3.0], 1.0).unwrap(), vec![0.0, 1.0, 2.0]);
        assert!(log2_transform(&[-1.0], 1.0).is_err());
        assert!(log2_transform(&[1.0], 0.0).is_err());
    }

    #[test]
    fn two_column_example() {
        let out = quantile_normalize(&matrix(vec![vec![2.0, 4.0, 6.0], vec![1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(out.data, vec![vec![1.5, 3.0, 4.5], vec![1.5, 3.0, 4.5]]);
    }

    #[test]
    fn ties_follow_row_order() {
        let cols = vec![vec![1.0, 1.0, 5.0], vec![2.0, 4.0, 6.0]];
        let out = quantile_normalize(&matrix(cols.clone())).unwrap();
        assert_eq!(out.data[0], vec![1.5, 2.5, 5.5]);
        assert_eq!(out.data, oracle(&cols));
    }

    #[test]
    fn identical_columns_are_a_fixed_point() {
        let c = vec![0.1, 0.7, 0.3, 0.3];
        let m = matrix(vec![c.clone(), c.clone(), c]);
        assert_eq!(quantile_normalize(&m).unwrap(), m);
    }

    #[test]
    fn rejects_ragged_and_single_columns() {
        let ragged = TrackMatrix {
            columns: vec!["a".into(), "b".into()],
            data: vec![vec![1.0], vec![1.0, 2.0]],
        };
        assert!(quantile_normalize(&ragged).is_err());
        assert!(TrackMatrix::new(ragged.columns.clone(), ragged.data.clone()).is_err());
        assert!(quantile_normalize(&matrix(vec![vec![1.0]])).is_err());
    }

    fn columns() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..5, 1usize..40).prop_flat_map(|(k, n)| {
            prop::collection::vec(
                prop::collection::vec(prop_oneof![-5.0..5.0f64, Just(1.0)], n),
                k,
            )
        })
    }

    proptest! {
        #[test]
        fn matches_oracle(cols in columns()) {
            let out = quantile_normalize(&matrix(cols.clone())).unwrap();
            let expected = oracle(&cols);
            for (a, b) in out.data.iter().flatten().zip(expected.iter().flatten()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn sorted_columns_agree_and_idempotent(cols in columns()) {
            let once = quantile_normalize(&matrix(cols)).unwrap();
            let mut first = once.data[0].clone();
            first.sort_by(f64::total_cmp);
            for c in &once.data {
                let mut s = c.clone();
                s.sort_by(f64::total_cmp);
                prop_assert_eq!(&s, &first);
            }
            let twice = quantile_normalize(&once).unwrap();
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn ranks_preserved_under_monotone_maps(cols in columns()) {
            let base = quantile_normalize(&matrix(cols.clone())).unwrap();
            let mapped: Vec<Vec<f64>> = cols
                .iter()
                .map(|c| c.iter().map(|v| (v * 0.5).exp() + 3.0).collect())
                .collect();
            let other = quantile_normalize(&matrix(mapped)).unwrap();
            for (i, c) in cols.iter().enumerate() {
                let order = stable_order(c);
                for out in [&base.data[i], &other.data[i]] {
                    for w in order.windows(2) {
                        prop_assert!(out[w[0]] <= out[w[1]], "column {} not rank-preserving", i);
                    }
                }
            }
        }
    }
}
