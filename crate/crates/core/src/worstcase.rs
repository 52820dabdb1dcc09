//! Worst-case objective evaluation over full or subset scenario sets,
//! f-call accounting, Kendall rank correlation, and a brute-force
//! support-scenario oracle.
//!
//! The cost metric of every experiment is the f-call: one evaluation of
//! f(x, s) for a single (x, s) pair. [`FCallCounter`] tracks it exactly;
//! diagnostic evaluations are charged to a separate counter by the caller.

use crate::as3::ScenarioSubset;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorstCaseError {
    #[error("f(x, {scenario}) returned non-finite value {value} at x = {candidate:?}")]
    NonFiniteValue {
        candidate: Vec<f64>,
        scenario: usize,
        value: f64,
    },
    #[error("scenario index {s} outside 1..={m}")]
    ScenarioOutOfRange { s: usize, m: usize },
    #[error("candidate length {got} does not match problem dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rank correlation needs two sequences of equal length ≥ 2, got {a} and {b}")]
    BadCorrelationInput { a: usize, b: usize },
    #[error("rank correlation undefined: all values tied in input `{0}`")]
    AllTied(&'static str),
    #[error("support set must be nonempty")]
    EmptySupportSet,
}

/// A family f(x, s) over an n-dimensional design space and m scenarios.
///
/// `evaluate` must be deterministic and pure. Minimization is canonical:
/// maximization problems are negated before being wrapped here.
pub type ObjectiveFn = Box<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;

pub struct WorstCaseProblem {
    n: usize,
    m: usize,
    eval: ObjectiveFn,
    known_optimum: Option<Vec<f64>>,
    optimal_value: Option<f64>,
    domain: Option<Vec<(f64, f64)>>,
    known_support: Option<Vec<usize>>,
}

impl std::fmt::Debug for WorstCaseProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorstCaseProblem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("known_optimum", &self.known_optimum)
            .field("optimal_value", &self.optimal_value)
            .field("domain", &self.domain)
            .finish()
    }
}

impl WorstCaseProblem {
    pub fn new<F>(n: usize, m: usize, eval: F) -> Self
    where
        F: Fn(&[f64], usize) -> f64 + Send + Sync + 'static,
    {
        assert!(n >= 1 && m >= 1);
        WorstCaseProblem {
            n,
            m,
            eval: Box::new(eval),
            known_optimum: None,
            optimal_value: None,
            domain: None,
            known_support: None,
        }
    }

    /// Attaches the known optimum x*; the reference value F(x*) is computed
    /// by full evaluation at x*, never assumed.
    pub fn with_known_optimum(mut self, x_star: Vec<f64>) -> Self {
        assert_eq!(x_star.len(), self.n);
        let f_star = (1..=self.m)
            .map(|s| (self.eval)(&x_star, s))
            .fold(f64::NEG_INFINITY, f64::max);
        self.known_optimum = Some(x_star);
        self.optimal_value = Some(f_star);
        self
    }

    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Self {
        assert_eq!(domain.len(), self.n);
        self.domain = Some(domain);
        self
    }

    /// Attaches the analytically known support set around x* (1-based).
    pub fn with_known_support(mut self, support: Vec<usize>) -> Self {
        self.known_support = Some(support);
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn scenario_count(&self) -> usize {
        self.m
    }

    pub fn known_optimum(&self) -> Option<&[f64]> {
        self.known_optimum.as_deref()
    }

    /// F(x*) evaluated at construction time, when x* is known.
    pub fn optimal_value(&self) -> Option<f64> {
        self.optimal_value
    }

    pub fn domain(&self) -> Option<&[(f64, f64)]> {
        self.domain.as_deref()
    }

    pub fn known_support(&self) -> Option<&[usize]> {
        self.known_support.as_deref()
    }

    /// Raw f(x, s), uncounted. All budgeted evaluation goes through
    /// [`evaluate_subset`] / [`evaluate_full`].
    pub fn scenario_value(&self, x: &[f64], s: usize) -> f64 {
        debug_assert!(s >= 1 && s <= self.m);
        (self.eval)(x, s)
    }
}

/// Monotone f-call account; increments by exactly |subset| per candidate
/// evaluation.
#[derive(Debug, Clone, Default)]
pub struct FCallCounter {
    total: u64,
}

impl FCallCounter {
    pub fn new() -> Self {
        FCallCounter { total: 0 }
    }

    pub fn add(&mut self, calls: u64) {
        self.total += calls;
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Result of evaluating one candidate on a scenario subset.
#[derive(Debug, Clone)]
pub struct EvaluationRecord {
    pub candidate: Vec<f64>,
    pub subset: ScenarioSubset,
    /// f(x, s) for s in subset order.
    pub values: Vec<f64>,
    /// max over the stored values.
    pub worst_value: f64,
    /// Scenario indices attaining the max, under exact value equality.
    pub supporting: Vec<usize>,
    /// Whether the candidate fell inside H_γ; filled in by the caller.
    pub in_region: bool,
}

impl EvaluationRecord {
    /// Whether scenario `s` supports this candidate (attains its max).
    pub fn supports(&self, s: usize) -> bool {
        self.supporting.binary_search(&s).is_ok()
    }
}

/// Evaluates f(x, s) exactly once per s ∈ subset, charging |subset| calls.
pub fn evaluate_subset(
    problem: &WorstCaseProblem,
    x: &[f64],
    subset: &ScenarioSubset,
    counter: &mut FCallCounter,
) -> Result<EvaluationRecord, WorstCaseError> {
    if x.len() != problem.dim() {
        return Err(WorstCaseError::DimensionMismatch {
            expected: problem.dim(),
            got: x.len(),
        });
    }
    let m = problem.scenario_count();
    let mut values = Vec::with_capacity(subset.len());
    for s in subset.iter() {
        if s < 1 || s > m {
            return Err(WorstCaseError::ScenarioOutOfRange { s, m });
        }
        let v = problem.scenario_value(x, s);
        if !v.is_finite() {
            return Err(WorstCaseError::NonFiniteValue {
                candidate: x.to_vec(),
                scenario: s,
                value: v,
            });
        }
        values.push(v);
    }
    counter.add(subset.len() as u64);
    let worst_value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let supporting: Vec<usize> = subset
        .iter()
        .zip(&values)
        .filter(|&(_, &v)| v == worst_value)
        .map(|(s, _)| s)
        .collect();
    Ok(EvaluationRecord {
        candidate: x.to_vec(),
        subset: subset.clone(),
        values,
        worst_value,
        supporting,
        in_region: false,
    })
}

/// Evaluates the full worst-case objective F(x) = max over all m scenarios.
pub fn evaluate_full(
    problem: &WorstCaseProblem,
    x: &[f64],
    counter: &mut FCallCounter,
) -> Result<EvaluationRecord, WorstCaseError> {
    let full = ScenarioSubset::full(problem.scenario_count());
    evaluate_subset(problem, x, &full, counter)
}

/// Tie-corrected Kendall rank correlation τ-b.
///
/// Knight-style computation: sort by the first sequence, count discordant
/// pairs as merge-sort inversions in the second, correct for ties. Errors
/// when either input is entirely tied (zero denominator).
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64, WorstCaseError> {
    let n = a.len();
    if n != b.len() || n < 2 {
        return Err(WorstCaseError::BadCorrelationInput { a: n, b: b.len() });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        a[i].partial_cmp(&a[j])
            .unwrap()
            .then(b[i].partial_cmp(&b[j]).unwrap())
    });

    let pairs = |t: u64| t * (t - 1) / 2;

    // ties in a, and joint ties in (a, b)
    let mut ties_a: u64 = 0;
    let mut ties_ab: u64 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && a[idx[j]] == a[idx[i]] {
            j += 1;
        }
        ties_a += pairs((j - i) as u64);
        let mut k = i;
        while k < j {
            let mut l = k;
            while l < j && b[idx[l]] == b[idx[k]] {
                l += 1;
            }
            ties_ab += pairs((l - k) as u64);
            k = l;
        }
        i = j;
    }

    // ties in b
    let mut b_sorted: Vec<f64> = b.to_vec();
    b_sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut ties_b: u64 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && b_sorted[j] == b_sorted[i] {
            j += 1;
        }
        ties_b += pairs((j - i) as u64);
        i = j;
    }

    // discordant pairs = inversions of b in a-order (a-ties excluded by the
    // secondary sort on b above)
    let b_in_a_order: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let swaps = count_inversions(&b_in_a_order);

    let n0 = pairs(n as u64);
    if n0 == ties_a {
        return Err(WorstCaseError::AllTied("a"));
    }
    if n0 == ties_b {
        return Err(WorstCaseError::AllTied("b"));
    }
    let concordant_minus_discordant =
        n0 as f64 - ties_a as f64 - ties_b as f64 + ties_ab as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - ties_a) as f64 * (n0 - ties_b) as f64).sqrt();
    Ok(concordant_minus_discordant / denom)
}

fn count_inversions(values: &[f64]) -> u64 {
    fn merge_count(v: &mut Vec<f64>, tmp: &mut Vec<f64>, lo: usize, hi: usize) -> u64 {
        if hi - lo < 2 {
            return 0;
        }
        let mid = (lo + hi) / 2;
        let mut inv = merge_count(v, tmp, lo, mid) + merge_count(v, tmp, mid, hi);
        tmp.clear();
        let (mut i, mut j) = (lo, mid);
        while i < mid && j < hi {
            if v[j] < v[i] {
                inv += (mid - i) as u64;
                tmp.push(v[j]);
                j += 1;
            } else {
                tmp.push(v[i]);
                i += 1;
            }
        }
        tmp.extend_from_slice(&v[i..mid]);
        tmp.extend_from_slice(&v[j..hi]);
        v[lo..hi].copy_from_slice(tmp);
        inv
    }
    let mut v = values.to_vec();
    let mut tmp = Vec::with_capacity(v.len());
    merge_count(&mut v, &mut tmp, 0, values.len())
}

/// Brute-force support-scenario estimate over a neighborhood.
///
/// Evaluates all m scenarios at each sampled point and unions the exact
/// argmax sets; the result approximates S_support of the sampled region
/// from below, monotonically in `sample_count`. Calls are charged to
/// `counter`, which the caller keeps separate from any optimization budget.
pub fn support_oracle<G>(
    problem: &WorstCaseProblem,
    mut region_sampler: G,
    sample_count: usize,
    counter: &mut FCallCounter,
) -> Result<BTreeSet<usize>, WorstCaseError>
where
    G: FnMut() -> Vec<f64>,
{
    let mut support = BTreeSet::new();
    for _ in 0..sample_count {
        let x = region_sampler();
        let record = evaluate_full(problem, &x, counter)?;
        support.extend(record.supporting.iter().copied());
    }
    Ok(support)
}

/// (|A ∩ S*| / |S*|, |A \ S*| / |S*|): how much of the reference support set
/// the subset hits and how much excess it carries.
pub fn subset_support_ratios(
    subset: &ScenarioSubset,
    support_set: &BTreeSet<usize>,
) -> Result<(f64, f64), WorstCaseError> {
    if support_set.is_empty() {
        return Err(WorstCaseError::EmptySupportSet);
    }
    let size = support_set.len() as f64;
    let hit = subset.iter().filter(|s| support_set.contains(s)).count() as f64;
    let excess = subset.len() as f64 - hit;
    Ok((hit / size, excess / size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p5_instance(m: usize) -> WorstCaseProblem {
        WorstCaseProblem::new(1, m, move |x, s| {
            let omega = 2.0 * (s as f64 - 1.0) / (m as f64 - 1.0) - 1.0;
            x[0] * x[0] + x[0] * omega - omega * omega
        })
    }

    #[test]
    fn subset_evaluation_on_simple_family() {
        // m = 3 scenario weights ω = (-1, 0, 1); at x = 0 the values are
        // (-1, 0, -1): worst 0 attained by scenario 2 only.
        let problem = p5_instance(3);
        let mut counter = FCallCounter::new();
        let subset = ScenarioSubset::full(3);
        let rec = evaluate_subset(&problem, &[0.0], &subset, &mut counter).unwrap();
        assert_eq!(rec.values, vec![-1.0, 0.0, -1.0]);
        assert_eq!(rec.worst_value, 0.0);
        assert_eq!(rec.supporting, vec![2]);
        assert_eq!(counter.total(), 3);
    }

    #[test]
    fn singleton_subset() {
        let problem = p5_instance(3);
        let mut counter = FCallCounter::new();
        let subset = ScenarioSubset::from_indices(vec![1], 3).unwrap();
        let rec = evaluate_subset(&problem, &[0.5], &subset, &mut counter).unwrap();
        assert_eq!(rec.worst_value, problem.scenario_value(&[0.5], 1));
        assert_eq!(rec.supporting, vec![1]);
    }

    #[test]
    fn counter_accounting() {
        let problem = p5_instance(8);
        let mut counter = FCallCounter::new();
        counter.add(7);
        let subset = ScenarioSubset::from_indices(vec![1, 2, 5, 7, 8], 8).unwrap();
        evaluate_subset(&problem, &[0.1], &subset, &mut counter).unwrap();
        assert_eq!(counter.total(), 12);
    }

    #[test]
    fn non_finite_value_is_diagnosed() {
        let problem = WorstCaseProblem::new(1, 2, |x, s| {
            if s == 2 {
                f64::NAN
            } else {
                x[0]
            }
        });
        let mut counter = FCallCounter::new();
        let err = evaluate_full(&problem, &[1.0], &mut counter).unwrap_err();
        match err {
            WorstCaseError::NonFiniteValue { scenario, .. } => assert_eq!(scenario, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn subset_monotonicity() {
        let problem = p5_instance(9);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counter = FCallCounter::new();
        for _ in 0..1000 {
            let x = [rng.random_range(-3.0..3.0)];
            let mut a: Vec<usize> = (1..=9).filter(|_| rng.random::<f64>() < 0.4).collect();
            if a.is_empty() {
                a.push(rng.random_range(1..=9));
            }
            let mut b = a.clone();
            for s in 1..=9 {
                if !b.contains(&s) && rng.random::<f64>() < 0.5 {
                    b.push(s);
                }
            }
            let sub_a = ScenarioSubset::from_indices(a, 9).unwrap();
            let sub_b = ScenarioSubset::from_indices(b, 9).unwrap();
            let fa = evaluate_subset(&problem, &x, &sub_a, &mut counter).unwrap();
            let fb = evaluate_subset(&problem, &x, &sub_b, &mut counter).unwrap();
            assert!(fa.worst_value <= fb.worst_value);
        }
    }

    #[test]
    fn full_vs_single_objective() {
        let problem = WorstCaseProblem::new(2, 1, |x, _| x[0] * x[0] + x[1] * x[1]);
        let mut counter = FCallCounter::new();
        let rec = evaluate_full(&problem, &[1.0, 2.0], &mut counter).unwrap();
        assert_eq!(rec.worst_value, 5.0);
        assert_eq!(counter.total(), 1);
    }

    #[test]
    fn kendall_basic_cases() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        // 5 concordant, 1 discordant of 6 pairs
        let tau = kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((tau - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn kendall_symmetry_and_errors() {
        let a = [0.3, -1.0, 2.5, 0.3, 7.0];
        let b = [1.0, 0.0, 3.0, 2.0, 2.0];
        let t1 = kendall_tau(&a, &b).unwrap();
        let t2 = kendall_tau(&b, &a).unwrap();
        assert!((t1 - t2).abs() < 1e-15);
        assert!(matches!(
            kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(WorstCaseError::AllTied("a"))
        ));
        assert!(matches!(
            kendall_tau(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]),
            Err(WorstCaseError::AllTied("b"))
        ));
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
    }

    /// Literal O(n²) pair count of τ-b, kept independent of the merge-sort
    /// implementation it checks.
    fn kendall_tau_bruteforce(a: &[f64], b: &[f64]) -> Option<f64> {
        let n = a.len();
        let mut concordant = 0i64;
        let mut discordant = 0i64;
        let mut ties_a = 0i64;
        let mut ties_b = 0i64;
        for i in 0..n {
            for j in (i + 1)..n {
                let da = a[i] - a[j];
                let db = b[i] - b[j];
                if da == 0.0 && db == 0.0 {
                    ties_a += 1;
                    ties_b += 1;
                } else if da == 0.0 {
                    ties_a += 1;
                } else if db == 0.0 {
                    ties_b += 1;
                } else if da * db > 0.0 {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
        let n0 = (n * (n - 1) / 2) as i64;
        let d1 = n0 - ties_a;
        let d2 = n0 - ties_b;
        if d1 == 0 || d2 == 0 {
            return None;
        }
        Some((concordant - discordant) as f64 / ((d1 as f64) * (d2 as f64)).sqrt())
    }

    #[test]
    fn kendall_matches_bruteforce_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..1000 {
            let n = rng.random_range(2..40);
            // coarse grid values produce plenty of ties
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
            match (kendall_tau(&a, &b), kendall_tau_bruteforce(&a, &b)) {
                (Ok(fast), Some(brute)) => {
                    assert!(
                        (fast - brute).abs() < 1e-12,
                        "case {case}: {fast} vs {brute} for {a:?} {b:?}"
                    );
                }
                (Err(_), None) => {}
                (fast, brute) => panic!("case {case}: divergence {fast:?} vs {brute:?}"),
            }
        }
    }

    #[test]
    fn oracle_on_singleton_sample() {
        let problem = p5_instance(5);
        let mut counter = FCallCounter::new();
        // at x = 1.2 the argmax of x·ω − ω² sits at the ω = 0.5 scenario
        let support = support_oracle(&problem, || vec![1.2], 1, &mut counter).unwrap();
        assert_eq!(support.into_iter().collect::<Vec<_>>(), vec![4]);
        assert_eq!(counter.total(), 5);
    }

    #[test]
    fn oracle_union_is_monotone_in_samples() {
        let problem = p5_instance(7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.random_range(-2.0..2.0)])
            .collect();
        let mut c1 = FCallCounter::new();
        let mut it = points.clone().into_iter();
        let small = support_oracle(&problem, move || it.next().unwrap(), 20, &mut c1).unwrap();
        let mut c2 = FCallCounter::new();
        let mut it = points.into_iter();
        let large = support_oracle(&problem, move || it.next().unwrap(), 50, &mut c2).unwrap();
        assert!(small.is_subset(&large));
    }

    #[test]
    fn support_ratio_arithmetic() {
        let support: BTreeSet<usize> = (1..=10).collect();
        let all = ScenarioSubset::full(30);
        let (hit, excess) = subset_support_ratios(&all, &support).unwrap();
        assert_eq!(hit, 1.0);
        assert_eq!(excess, 2.0); // m/K - 1 at m = 30, K = 10
        let exact = ScenarioSubset::from_indices((1..=10).collect(), 30).unwrap();
        assert_eq!(subset_support_ratios(&exact, &support).unwrap(), (1.0, 0.0));
        let disjoint = ScenarioSubset::from_indices(vec![11, 12], 30).unwrap();
        assert_eq!(subset_support_ratios(&disjoint, &support).unwrap(), (0.0, 0.2));
        assert!(subset_support_ratios(&all, &BTreeSet::new()).is_err());
    }
}
