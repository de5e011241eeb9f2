//! Cumulative regret folded into checkpoint buckets.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Cumulative regret after round `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Checkpoint<T> {
    pub t: u64,
    pub total: T,
    pub per_client: Vec<T>,
}

/// Multiples of `stride` up to `horizon`, plus `horizon` itself.
pub fn checkpoint_times(horizon: u64, stride: u64) -> Vec<u64> {
    let stride = stride.max(1);
    let mut times: Vec<u64> = (1..=horizon / stride).map(|k| k * stride).collect();
    if times.last() != Some(&horizon) {
        times.push(horizon);
    }
    times
}

/// One client's regret, bucketed by checkpoint interval.
#[derive(Debug, Clone)]
pub(crate) struct RegretTrace<T> {
    stride: u64,
    buckets: Vec<T>,
}

impl<T: Real> RegretTrace<T> {
    pub(crate) fn new(times: &[u64], stride: u64) -> Self {
        RegretTrace { stride: stride.max(1), buckets: vec![T::zero(); times.len()] }
    }

    fn bucket(&self, round: u64) -> usize {
        (((round - 1) / self.stride) as usize).min(self.buckets.len() - 1)
    }

    /// Adds `per_round` regret for rounds `start+1 ..= start+len`.
    pub(crate) fn add(&mut self, start: u64, len: u64, per_round: T) {
        if len == 0 {
            return;
        }
        let (mut round, last) = (start + 1, start + len);
        while round <= last {
            let k = self.bucket(round);
            let end = if k + 1 == self.buckets.len() { last } else { ((k as u64 + 1) * self.stride).min(last) };
            let n = end - round + 1;
            self.buckets[k] = self.buckets[k] + per_round * T::from_u64(n).expect("round count fits");
            round = end + 1;
        }
    }

    pub(crate) fn cumulative(&self) -> Vec<T> {
        self.buckets
            .iter()
            .scan(T::zero(), |acc, &b| {
                *acc = *acc + b;
                Some(*acc)
            })
            .collect()
    }
}

pub(crate) fn assemble<T: Real>(times: &[u64], traces: &[RegretTrace<T>]) -> Vec<Checkpoint<T>> {
    let cumulative: Vec<Vec<T>> = traces.iter().map(RegretTrace::cumulative).collect();
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let per_client: Vec<T> = cumulative.iter().map(|c| c[k]).collect();
            Checkpoint { t, total: per_client.iter().copied().sum(), per_client }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn checkpoint_grid() {
        assert_eq!(checkpoint_times(100_000, 1_000).len(), 100);
        assert_eq!(checkpoint_times(10, 3), vec![3, 6, 9, 10]);
        assert_eq!(checkpoint_times(2, 5), vec![2]);
    }

    #[test]
    fn segments_split_across_buckets() {
        let times = checkpoint_times(10, 3);
        let mut tr = RegretTrace::<f64>::new(&times, 3);
        tr.add(0, 10, 1.0);
        assert_eq!(tr.cumulative(), vec![3.0, 6.0, 9.0, 10.0]);
        let mut tr = RegretTrace::<f64>::new(&times, 3);
        tr.add(2, 2, 0.5);
        tr.add(9, 1, 2.0);
        assert_eq!(tr.cumulative(), vec![0.5, 1.0, 1.0, 3.0]);
    }

    proptest! {
        #[test]
        fn matches_per_round_sum(
            horizon in 1u64..200,
            stride in 1u64..50,
            segs in proptest::collection::vec((0u64..30, 0.0f64..1.0), 1..12),
        ) {
            let times = checkpoint_times(horizon, stride);
            let mut tr = RegretTrace::<f64>::new(&times, stride);
            let mut rounds = vec![0.0; horizon as usize];
            let mut t = 0;
            for (len, v) in segs {
                let len = len.min(horizon - t);
                tr.add(t, len, v);
                for r in t..t + len {
                    rounds[r as usize] = v;
                }
                t += len;
            }
            let cum = tr.cumulative();
            for (k, &c) in times.iter().enumerate() {
                let direct: f64 = rounds[..c as usize].iter().sum();
                prop_assert!((cum[k] - direct).abs() < 1e-9);
            }
        }
    }
}
