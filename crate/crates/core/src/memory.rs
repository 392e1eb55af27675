//! Memory policies that decide which past samples stay available.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::SampleStore;
use crate::error::{bail, Result};
use crate::rng::{stream, tag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicyKind {
    Full,
    /// Explicit `R_t` for each past task (0-based sample indices).
    Fixed { rows: Vec<Vec<usize>> },
    /// `b_t` uniformly drawn samples kept per past task; a single entry
    /// applies to every past task.
    Random { budgets: Vec<usize> },
    /// One buffer of `capacity` items over the whole past stream.
    Reservoir { capacity: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryPolicy {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default)]
    pub seed: u64,
}

impl MemoryPolicy {
    pub fn full() -> Self {
        Self { kind: PolicyKind::Full, seed: 0 }
    }

    pub fn fixed(rows: Vec<Vec<usize>>) -> Self {
        Self { kind: PolicyKind::Fixed { rows }, seed: 0 }
    }

    pub fn random(budgets: Vec<usize>, seed: u64) -> Self {
        Self { kind: PolicyKind::Random { budgets }, seed }
    }

    pub fn reservoir(capacity: usize, seed: u64) -> Self {
        Self { kind: PolicyKind::Reservoir { capacity }, seed }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        match &self.kind {
            PolicyKind::Full => {}
            PolicyKind::Fixed { rows } => {
                for (k, r) in rows.iter().enumerate() {
                    if let Some(&i) = r.iter().find(|&&i| i >= m) {
                        bail!(Argument, "fixed R_{} lists sample {i}, outside [0, {m})", k + 1);
                    }
                }
            }
            PolicyKind::Random { budgets } => {
                if budgets.is_empty() {
                    bail!(Argument, "random policy needs at least one budget");
                }
                if let Some(&b) = budgets.iter().find(|&&b| b == 0 || b > m) {
                    bail!(Argument, "random budget {b} outside [1, m = {m}]");
                }
            }
            PolicyKind::Reservoir { capacity } => {
                if *capacity == 0 {
                    bail!(Argument, "reservoir capacity must be at least 1");
                }
            }
        }
        Ok(())
    }
}

/// Algorithm R: a uniform size-`k` subset of a stream of unknown length,
/// in one pass.
pub fn reservoir_select<T, I, R>(items: I, k: usize, rng: &mut R) -> Vec<T>
where
    I: IntoIterator<Item = T>,
    R: Rng + ?Sized,
{
    let mut buf = Vec::with_capacity(k);
    for (seen, item) in items.into_iter().enumerate() {
        if buf.len() < k {
            buf.push(item);
        } else {
            let j = rng.random_range(0..=seen);
            if j < k {
                buf[j] = item;
            }
        }
    }
    buf
}

/// The store as seen while training task `current_t`: tasks after it are
/// dropped, `R_{current_t}` stays complete and earlier tasks are thinned by
/// the policy.
pub fn restrict(store: &SampleStore, policy: &MemoryPolicy, current_t: usize) -> Result<SampleStore> {
    let view = store.truncated(current_t)?;
    let m = view.m();
    policy.validate(m)?;
    if view.n(current_t) != m {
        bail!(Precondition, "current task {current_t} is not fully observed");
    }
    let past = current_t - 1;
    let keep = |t: usize, candidates: Vec<usize>| -> Vec<usize> {
        candidates.into_iter().filter(|&i| view.contains(t, i)).collect()
    };
    let mut rows: Vec<Vec<usize>> = match &policy.kind {
        PolicyKind::Full => (1..=past).map(|t| view.rows(t).to_vec()).collect(),
        PolicyKind::Fixed { rows } => {
            if rows.len() < past {
                bail!(Argument, "fixed policy lists {} index sets, {past} past tasks need one", rows.len());
            }
            (1..=past).map(|t| keep(t, rows[t - 1].clone())).collect()
        }
        PolicyKind::Random { budgets } => {
            if budgets.len() != 1 && budgets.len() < past {
                bail!(Argument, "random policy has {} budgets for {past} past tasks", budgets.len());
            }
            (1..=past)
                .map(|t| {
                    let b = if budgets.len() == 1 { budgets[0] } else { budgets[t - 1] };
                    let mut rng = stream(policy.seed, &[tag::MEMORY, t as u64]);
                    keep(t, rand::seq::index::sample(&mut rng, m, b).into_vec())
                })
                .collect()
        }
        PolicyKind::Reservoir { capacity } => {
            let mut rng = stream(policy.seed, &[tag::RESERVOIR]);
            let items = (1..=past).flat_map(|t| view.rows(t).iter().map(move |&i| (t, i)));
            let mut rows = vec![Vec::new(); past];
            for (t, i) in reservoir_select(items, *capacity, &mut rng) {
                rows[t - 1].push(i);
            }
            rows
        }
    };
    rows.push((0..m).collect());
    view.with_rows(rows)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BalanceReport {
    pub min: usize,
    pub max: usize,
    pub ratio: f64,
}

/// Spread of `n_t` over tasks with `n_t > 0`.
pub fn balance_report(store: &SampleStore) -> BalanceReport {
    let counts: Vec<usize> = store.counts().into_iter().filter(|&n| n > 0).collect();
    let min = counts.iter().copied().min().unwrap_or(0);
    let max = counts.iter().copied().max().unwrap_or(0);
    let ratio = if min == 0 { f64::NAN } else { max as f64 / min as f64 };
    BalanceReport { min, max, ratio }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blank(tasks: usize, m: usize) -> SampleStore {
        let x: Vec<f64> = (0..tasks * m).map(|k| k as f64).collect();
        SampleStore::from_dense(tasks, m, 1, 1, x.clone(), x, vec![(0..m).collect(); tasks]).unwrap()
    }

    #[test]
    fn full_policy_is_identity() {
        let s = blank(3, 5);
        assert_eq!(restrict(&s, &MemoryPolicy::full(), 3).unwrap(), s);
        let r = balance_report(&s);
        assert_eq!((r.min, r.max, r.ratio), (5, 5, 1.0));
    }

    #[test]
    fn fixed_policy_reproduces_figure_pattern() {
        // R_1 = {1,3}, R_2 = {2,3,4}, R_3 = [4] in 1-based labels.
        let s = blank(3, 4);
        let out = restrict(&s, &MemoryPolicy::fixed(vec![vec![0, 2], vec![1, 2, 3]]), 3).unwrap();
        assert_eq!(out.rows(1), &[0, 2]);
        assert_eq!(out.rows(2), &[1, 2, 3]);
        assert_eq!(out.rows(3), &[0, 1, 2, 3]);
        assert_eq!(out.cols(0), vec![1, 3]);
        assert_eq!(out.cols(1), vec![2, 3]);
        let r = balance_report(&out);
        assert_eq!((r.min, r.max, r.ratio), (2, 4, 2.0));
    }

    #[test]
    fn random_budgets_are_exact() {
        let s = blank(4, 20);
        let out = restrict(&s, &MemoryPolicy::random(vec![5], 3), 4).unwrap();
        assert_eq!(out.counts(), vec![5, 5, 5, 20]);
        let past = balance_report(&out.truncated(3).unwrap());
        assert_eq!((past.min, past.max), (5, 5));
        assert!(matches!(
            restrict(&s, &MemoryPolicy::random(vec![21], 3), 4),
            Err(crate::Error::Argument(_))
        ));
        assert!(restrict(&s, &MemoryPolicy::reservoir(0, 3), 4).is_err());
    }

    #[test]
    fn random_sets_do_not_depend_on_the_current_task() {
        let s = blank(5, 30);
        let p = MemoryPolicy::random(vec![7], 11);
        let a = restrict(&s, &p, 3).unwrap();
        let b = restrict(&s, &p, 5).unwrap();
        assert_eq!(a.rows(1), b.rows(1));
        assert_eq!(a.rows(2), b.rows(2));
    }

    #[test]
    fn reservoir_capacity_and_uniformity() {
        let s = blank(3, 10);
        let out = restrict(&s, &MemoryPolicy::reservoir(6, 1), 3).unwrap();
        assert_eq!(out.counts()[..2].iter().sum::<usize>(), 6);
        assert_eq!(out.n(3), 10);

        // Small-scale frequency check; the larger (n, k) pairs live in the
        // acceptance suite.
        let (n, k, trials) = (20usize, 4usize, 10_000usize);
        let mut hits = vec![0usize; n];
        for trial in 0..trials {
            let mut rng = stream(trial as u64, &[tag::RESERVOIR]);
            for i in reservoir_select(0..n, k, &mut rng) {
                hits[i] += 1;
            }
        }
        let p = k as f64 / n as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        for h in hits {
            assert!((h as f64 / trials as f64 - p).abs() <= 3.0 * se);
        }
    }

    #[test]
    fn incomplete_current_task_is_rejected() {
        let s = blank(2, 4);
        let partial = s.with_rows(vec![vec![0, 1, 2, 3], vec![0, 1]]).unwrap();
        assert!(matches!(restrict(&partial, &MemoryPolicy::full(), 2), Err(crate::Error::Precondition(_))));
    }

    fn policy_strategy() -> impl Strategy<Value = MemoryPolicy> {
        prop_oneof![
            Just(MemoryPolicy::full()),
            (1usize..=8, any::<u64>()).prop_map(|(b, s)| MemoryPolicy::random(vec![b], s)),
            (1usize..=30, any::<u64>()).prop_map(|(k, s)| MemoryPolicy::reservoir(k, s)),
            proptest::collection::vec(proptest::collection::vec(0usize..8, 0..8), 4)
                .prop_map(MemoryPolicy::fixed),
        ]
    }

    proptest! {
        #[test]
        fn restrict_only_removes_and_keeps_current(policy in policy_strategy(), current in 2usize..=5, first in proptest::collection::vec(0usize..8, 0..8)) {
            let base = blank(5, 8);
            // Start from an already-thinned past to check nothing is added back.
            let mut rows: Vec<Vec<usize>> = vec![(0..8).collect(); 5];
            rows[0] = first;
            let s = base.with_rows(rows).unwrap();
            let out = restrict(&s, &policy, current).unwrap();
            prop_assert_eq!(out.tasks(), current);
            prop_assert_eq!(out.rows(current), &(0..8).collect::<Vec<_>>()[..]);
            for (t, i) in out.present() {
                prop_assert!(s.contains(t, i));
                if t < current {
                    for j in out.cols(i) { prop_assert!(out.contains(j, i)); }
                }
            }
            if let PolicyKind::Reservoir { capacity } = policy.kind {
                prop_assert!(out.counts()[..current - 1].iter().sum::<usize>() <= capacity);
            }
            prop_assert_eq!(restrict(&s, &policy, current).unwrap(), out);
        }
    }
}
