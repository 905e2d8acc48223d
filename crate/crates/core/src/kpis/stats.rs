//! Empirical distributions: ECDF, percentiles, Tukey boxplots, reliability.

use serde::{Deserialize, Serialize};

use crate::Scalar;

use super::KpiError;

/// Empirical CDF over the distinct sample values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ecdf<T> {
    values: Vec<T>,
    counts: Vec<usize>,
    n: usize,
}

fn sorted<T: Scalar>(samples: &[T]) -> Result<Vec<T>, KpiError> {
    if samples.is_empty() {
        return Err(KpiError::Empty);
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(KpiError::NotANumber);
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    Ok(xs)
}

/// Builds the empirical CDF of `samples`.
pub fn ecdf<T: Scalar>(samples: &[T]) -> Result<Ecdf<T>, KpiError> {
    let xs = sorted(samples)?;
    let mut values: Vec<T> = Vec::new();
    let mut counts = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        if values.last() == Some(x) {
            *counts.last_mut().expect("parallel") = i + 1;
        } else {
            values.push(*x);
            counts.push(i + 1);
        }
    }
    Ok(Ecdf {
        values,
        counts,
        n: xs.len(),
    })
}

impl<T: Scalar> Ecdf<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Distinct sample values, ascending.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Cumulative probability at each distinct value; ends at 1.
    pub fn probabilities(&self) -> Vec<T> {
        let n = T::from_usize(self.n).expect("representable");
        self.counts
            .iter()
            .map(|&c| T::from_usize(c).expect("representable") / n)
            .collect()
    }

    /// `(value, cumulative probability)` steps.
    pub fn points(&self) -> Vec<(T, T)> {
        self.values.iter().copied().zip(self.probabilities()).collect()
    }

    /// Fraction of samples `<= x`.
    pub fn cdf(&self, x: T) -> T {
        let k = self.values.partition_point(|v| *v <= x);
        let c = if k == 0 { 0 } else { self.counts[k - 1] };
        T::from_usize(c).expect("representable") / T::from_usize(self.n).expect("representable")
    }

    /// Smallest sample value whose cumulative probability is at least `p`,
    /// i.e. the `ceil(p * n)`-th order statistic. `p` must lie in (0, 1].
    pub fn percentile(&self, p: T) -> Result<T, KpiError> {
        if !(p > T::zero() && p <= T::one()) {
            return Err(KpiError::Probability(p.to_f64().unwrap_or(f64::NAN)));
        }
        let n = T::from_usize(self.n).expect("representable");
        // absorb representation error in p * n so that e.g. 0.07 * 100 ranks 7th
        let slack = T::epsilon() * n * T::from_f64(8.0).expect("representable");
        let rank = (p * n - slack).ceil().to_usize().unwrap_or(0).clamp(1, self.n);
        let k = self.counts.partition_point(|&c| c < rank);
        Ok(self.values[k])
    }
}

/// Tukey boxplot summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats<T> {
    pub min: T,
    pub q1: T,
    pub median: T,
    pub q3: T,
    pub max: T,
    pub whisker_lo: T,
    pub whisker_hi: T,
    pub outliers: Vec<T>,
}

/// Quantile by linear interpolation between closest ranks on sorted data.
fn interpolated<T: Scalar>(xs: &[T], q: T) -> T {
    let h = q * T::from_usize(xs.len() - 1).expect("representable");
    let lo = h.floor();
    let i = lo.to_usize().expect("in range");
    if i + 1 >= xs.len() {
        return xs[xs.len() - 1];
    }
    xs[i] + (h - lo) * (xs[i + 1] - xs[i])
}

/// Quartiles by linear interpolation, whiskers at the most extreme samples
/// within 1.5 IQR of the quartiles, everything beyond flagged as an outlier.
pub fn boxplot_stats<T: Scalar>(samples: &[T]) -> Result<BoxplotStats<T>, KpiError> {
    let xs = sorted(samples)?;
    let c = |v: f64| T::from_f64(v).expect("representable");
    let q1 = interpolated(&xs, c(0.25));
    let median = interpolated(&xs, c(0.5));
    let q3 = interpolated(&xs, c(0.75));
    let fence = c(1.5) * (q3 - q1);
    let (lo_fence, hi_fence) = (q1 - fence, q3 + fence);
    let inside = || xs.iter().copied().filter(|x| *x >= lo_fence && *x <= hi_fence);
    Ok(BoxplotStats {
        min: xs[0],
        q1,
        median,
        q3,
        max: xs[xs.len() - 1],
        // with interpolated quartiles the nearest in-fence sample can fall
        // inside the box; the whisker then collapses onto the quartile
        whisker_lo: inside().next().filter(|w| *w <= q1).unwrap_or(q1),
        whisker_hi: inside().last().filter(|w| *w >= q3).unwrap_or(q3),
        outliers: xs.iter().copied().filter(|x| *x < lo_fence || *x > hi_fence).collect(),
    })
}

/// Fraction of samples at or below `bound_ms`.
pub fn reliability<T: Scalar>(samples: &[T], bound_ms: T) -> Result<T, KpiError> {
    if samples.is_empty() {
        return Err(KpiError::Empty);
    }
    let within = samples.iter().filter(|x| **x <= bound_ms).count();
    Ok(T::from_usize(within).expect("representable") / T::from_usize(samples.len()).expect("representable"))
}

/// Latency at reliability level `p`: the ECDF percentile.
pub fn latency_at<T: Scalar>(samples: &[T], p: T) -> Result<T, KpiError> {
    ecdf(samples)?.percentile(p)
}

pub fn mean<T: Scalar>(samples: &[T]) -> Option<T> {
    if samples.is_empty() {
        return None;
    }
    let sum = samples.iter().fold(T::zero(), |a, b| a + *b);
    Some(sum / T::from_usize(samples.len())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_to_hundred() -> Vec<f64> {
        (1..=100).map(f64::from).collect()
    }

    /// Independent order-statistic oracle with an exact rational level
    /// `num / den`: the smallest sample x with `den * #{s <= x} >= num * n`.
    fn brute_percentile(samples: &[f64], num: u64, den: u64) -> f64 {
        let n = samples.len() as u64;
        let mut candidates = samples.to_vec();
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        *candidates
            .iter()
            .find(|x| den * samples.iter().filter(|s| *s <= *x).count() as u64 >= num * n)
            .unwrap()
    }

    #[test]
    fn single_sample() {
        let e = ecdf(&[5.0]).unwrap();
        assert_eq!(e.points(), vec![(5.0, 1.0)]);
        assert_eq!(e.percentile(0.95).unwrap(), 5.0);
    }

    #[test]
    fn order_statistic_95() {
        assert_eq!(latency_at(&one_to_hundred(), 0.95).unwrap(), 95.0);
        assert_eq!(latency_at(&one_to_hundred(), 0.07).unwrap(), 7.0);
        assert_eq!(latency_at(&one_to_hundred(), 1.0).unwrap(), 100.0);
        assert_eq!(latency_at(&one_to_hundred(), 0.001).unwrap(), 1.0);
    }

    #[test]
    fn percentile_rejects_bad_levels() {
        let e = ecdf(&[1.0, 2.0]).unwrap();
        assert!(e.percentile(0.0).is_err());
        assert!(e.percentile(1.5).is_err());
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(ecdf::<f64>(&[]).unwrap_err(), KpiError::Empty);
        assert_eq!(boxplot_stats::<f64>(&[]).unwrap_err(), KpiError::Empty);
        assert_eq!(reliability::<f64>(&[], 1.0).unwrap_err(), KpiError::Empty);
    }

    #[test]
    fn ties_collapse_into_one_step() {
        let e = ecdf(&[2.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.points(), vec![(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]);
        assert_eq!(e.cdf(2.5), 0.75);
        assert_eq!(e.cdf(0.5), 0.0);
    }

    #[test]
    fn boxplot_constant() {
        let b = boxplot_stats(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!((b.min, b.q1, b.median, b.q3, b.max), (3.0, 3.0, 3.0, 3.0, 3.0));
        assert_eq!((b.whisker_lo, b.whisker_hi), (3.0, 3.0));
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn boxplot_flags_outlier() {
        // q1 = 2, q3 = 4, IQR = 2, upper fence 7
        let b = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!((b.whisker_lo, b.whisker_hi), (1.0, 4.0));
        assert_eq!(b.max, 100.0);
    }

    #[test]
    fn even_median_interpolates() {
        assert_eq!(boxplot_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap().median, 2.5);
        assert_eq!(boxplot_stats(&[4.0f32, 1.0, 3.0, 2.0]).unwrap().median, 2.5f32);
    }

    #[test]
    fn reliability_examples() {
        assert_eq!(reliability(&[10.0; 5], 20.0).unwrap(), 1.0);
        assert_eq!(reliability(&one_to_hundred(), 50.0).unwrap(), 0.5);
    }

    #[test]
    fn f32_percentile() {
        let xs: Vec<f32> = (1..=100).map(|v| v as f32).collect();
        assert_eq!(latency_at(&xs, 0.95f32).unwrap(), 95.0);
        assert_eq!(latency_at(&xs, 0.07f32).unwrap(), 7.0);
    }

    proptest! {
        #[test]
        fn percentile_matches_brute_force(
            xs in prop::collection::vec(-50i32..50, 1..80),
            num in 1u64..=1000,
        ) {
            let xs: Vec<f64> = xs.into_iter().map(|v| v as f64 * 0.5).collect();
            let p = num as f64 / 1000.0;
            prop_assert_eq!(latency_at(&xs, p).unwrap(), brute_percentile(&xs, num, 1000));
        }

        #[test]
        fn percentile_monotone_in_p(
            xs in prop::collection::vec(0.0f64..100.0, 1..60),
            a in 0.001f64..1.0,
            b in 0.001f64..1.0,
        ) {
            let e = ecdf(&xs).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(e.percentile(lo).unwrap() <= e.percentile(hi).unwrap());
        }

        #[test]
        fn ecdf_steps_rise_to_one(xs in prop::collection::vec(0.0f64..100.0, 1..60)) {
            let pts = ecdf(&xs).unwrap().points();
            for w in pts.windows(2) {
                prop_assert!(w[0].0 < w[1].0);
                prop_assert!(w[0].1 < w[1].1);
            }
            prop_assert_eq!(pts.last().unwrap().1, 1.0);
        }

        #[test]
        fn reliability_monotone_in_bound(
            xs in prop::collection::vec(0.0f64..100.0, 1..60),
            a in 0.0f64..100.0,
            b in 0.0f64..100.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(reliability(&xs, lo).unwrap() <= reliability(&xs, hi).unwrap());
        }

        #[test]
        fn boxplot_ordering(xs in prop::collection::vec(-100.0f64..100.0, 1..60)) {
            let b = boxplot_stats(&xs).unwrap();
            prop_assert!(b.min <= b.whisker_lo && b.whisker_lo <= b.q1);
            prop_assert!(b.q1 <= b.median && b.median <= b.q3);
            prop_assert!(b.q3 <= b.whisker_hi && b.whisker_hi <= b.max);
        }
    }
}
