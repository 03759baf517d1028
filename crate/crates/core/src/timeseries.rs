//! Daily aggregation, rolling means, volume peaks and PELT changepoints.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use thiserror::Error;

use crate::Scalar;

/// Default trailing window for smoothed series.
pub const DEFAULT_WINDOW: usize = 7;
/// Default peak prominence in standard deviations.
pub const DEFAULT_PROMINENCE: f64 = 3.0;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("no target dates to tune against")]
    EmptyTargets,
    #[error("penalty grid is empty")]
    EmptyGrid,
    #[error("window must be at least 1")]
    Window,
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Values on observed dates only; dates strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DailySeries<T> {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<T>,
}

impl<T: Scalar> DailySeries<T> {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn with_values(&self, values: Vec<T>) -> Self {
        assert_eq!(values.len(), self.dates.len());
        DailySeries { dates: self.dates.clone(), values }
    }

    /// `date,value` CSV with a header row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "date,value")?;
        for (d, v) in self.dates.iter().zip(&self.values) {
            writeln!(out, "{},{}", d.format("%Y-%m-%d"), v)?;
        }
        out.flush()
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, SeriesError> {
        let mut s = DailySeries::default();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let err = |message: String| SeriesError::Line { line: n + 1, message };
            let (d, v) = line.split_once(',').ok_or_else(|| err("expected date,value".into()))?;
            let date = NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d")
                .map_err(|e| err(format!("date {d:?}: {e}")))?;
            let value: f64 = v.trim().parse().map_err(|_| err(format!("value {v:?}")))?;
            if s.dates.last().is_some_and(|&last| last >= date) {
                return Err(err("dates must be strictly increasing".into()));
            }
            s.dates.push(date);
            s.values.push(T::lit(value));
        }
        Ok(s)
    }
}

/// Per-date arithmetic mean, sorted by date.
pub fn daily_mean<T: Scalar>(observations: &[(NaiveDate, T)]) -> DailySeries<T> {
    let mut acc: BTreeMap<NaiveDate, (T, usize)> = BTreeMap::new();
    for &(d, v) in observations {
        let e = acc.entry(d).or_insert((T::zero(), 0));
        e.0 = e.0 + v;
        e.1 += 1;
    }
    let (dates, values) = acc.into_iter().map(|(d, (sum, n))| (d, sum / T::lit(n as f64))).unzip();
    DailySeries { dates, values }
}

/// Trailing-window means; the first `window − 1` positions use shorter
/// windows. Each mean is clamped into its window's [min, max].
pub fn rolling_mean<T: Scalar>(values: &[T], window: usize) -> Result<Vec<T>, SeriesError> {
    if window == 0 {
        return Err(SeriesError::Window);
    }
    Ok((0..values.len())
        .map(|i| {
            let w = &values[(i + 1).saturating_sub(window)..=i];
            let sum = w.iter().fold(T::zero(), |a, &v| a + v);
            let lo = w.iter().copied().fold(T::infinity(), T::min);
            let hi = w.iter().copied().fold(T::neg_infinity(), T::max);
            (sum / T::lit(w.len() as f64)).max(lo).min(hi)
        })
        .collect())
}

fn population_std<T: Scalar>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let n = T::lit(values.len() as f64);
    let mean = values.iter().fold(T::zero(), |a, &v| a + v) / n;
    (values.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n).sqrt()
}

/// Interior local maxima whose prominence is at least `factor · σ`.
///
/// Prominence is the height above the higher of the two flanking minima,
/// each taken over the stretch up to the nearest strictly higher sample (or
/// the series end). A plateau counts once, at its first index.
pub fn detect_peaks<T: Scalar>(values: &[T], factor: T) -> Vec<usize> {
    let n = values.len();
    let threshold = factor * population_std(values);
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] <= values[i - 1] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && values[j + 1] == values[i] {
            j += 1;
        }
        if j + 1 < n && values[j + 1] < values[i] {
            let peak = values[i];
            let mut left_min = peak;
            for &v in values[..i].iter().rev() {
                if v > peak {
                    break;
                }
                left_min = left_min.min(v);
            }
            let mut right_min = peak;
            for &v in &values[j + 1..] {
                if v > peak {
                    break;
                }
                right_min = right_min.min(v);
            }
            if peak - left_min.max(right_min) >= threshold && threshold > T::zero() {
                peaks.push(i);
            }
        }
        i = j + 1;
    }
    peaks
}

/// Segment boundaries `τ₁ < … < τ_m < τ_{m+1} = n`; segment `k` covers
/// positions `τ_{k−1}..τ_k` (half-open, `τ₀ = 0`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangePointSet {
    pub boundaries: Vec<usize>,
}

impl ChangePointSet {
    pub fn interior(&self) -> &[usize] {
        &self.boundaries[..self.boundaries.len().saturating_sub(1)]
    }

    /// Last date of the segment each interior boundary closes.
    pub fn dates(&self, dates: &[NaiveDate]) -> Vec<NaiveDate> {
        self.interior().iter().map(|&t| dates[t - 1]).collect()
    }
}

struct L2Cost<T> {
    s1: Vec<T>,
    s2: Vec<T>,
}

impl<T: Scalar> L2Cost<T> {
    fn new(values: &[T]) -> Self {
        let n = values.len();
        let mean =
            if n == 0 { T::zero() } else { values.iter().fold(T::zero(), |a, &v| a + v) / T::lit(n as f64) };
        let mut s1 = Vec::with_capacity(n + 1);
        let mut s2 = Vec::with_capacity(n + 1);
        s1.push(T::zero());
        s2.push(T::zero());
        for &v in values {
            let c = v - mean;
            s1.push(*s1.last().expect("nonempty") + c);
            s2.push(*s2.last().expect("nonempty") + c * c);
        }
        L2Cost { s1, s2 }
    }

    // Σ (y − mean)² over positions start..end
    fn cost(&self, start: usize, end: usize) -> T {
        let len = T::lit((end - start) as f64);
        let a = self.s1[end] - self.s1[start];
        let b = self.s2[end] - self.s2[start];
        (b - a * a / len).max(T::zero())
    }
}

/// Exact penalized L2 segmentation by PELT:
/// minimizes `Σ C(segment) + penalty · (#segments − 1)`.
pub fn pelt<T: Scalar>(values: &[T], penalty: T) -> ChangePointSet {
    let n = values.len();
    if n == 0 {
        return ChangePointSet { boundaries: vec![] };
    }
    let cost = L2Cost::new(values);
    let scale = T::one() + *cost.s2.last().expect("nonempty") + penalty;
    let slack = T::epsilon() * T::lit(1e4) * scale;

    let mut best = vec![T::zero(); n + 1];
    let mut prev = vec![0usize; n + 1];
    best[0] = -penalty;
    let mut candidates: Vec<usize> = vec![0];
    for t in 1..=n {
        let mut f = T::infinity();
        let mut arg = 0;
        for &s in &candidates {
            let c = best[s] + cost.cost(s, t) + penalty;
            if c < f {
                f = c;
                arg = s;
            }
        }
        best[t] = f;
        prev[t] = arg;
        candidates.retain(|&s| best[s] + cost.cost(s, t) <= f + slack);
        candidates.push(t);
    }

    let mut boundaries = Vec::new();
    let mut t = n;
    while t > 0 {
        boundaries.push(t);
        t = prev[t];
    }
    boundaries.reverse();
    ChangePointSet { boundaries }
}

fn nearest_days(from: &[NaiveDate], to: &[NaiveDate]) -> f64 {
    let total: i64 =
        from.iter().map(|a| to.iter().map(|b| (*a - *b).num_days().abs()).min().expect("nonempty")).sum();
    total as f64 / from.len() as f64
}

/// Mean of the two directed mean nearest-neighbour distances (in days)
/// between detected and target dates; infinite when nothing is detected.
pub fn changepoint_distance(detected: &[NaiveDate], targets: &[NaiveDate]) -> f64 {
    if detected.is_empty() || targets.is_empty() {
        return f64::INFINITY;
    }
    0.5 * (nearest_days(detected, targets) + nearest_days(targets, detected))
}

/// Picks the grid penalty whose detected changepoint dates lie closest to
/// `targets`. Ties go to the larger penalty.
pub fn tune_penalty<T: Scalar>(
    series: &DailySeries<T>,
    targets: &[NaiveDate],
    grid: &[T],
) -> Result<T, SeriesError> {
    if targets.is_empty() {
        return Err(SeriesError::EmptyTargets);
    }
    if grid.is_empty() {
        return Err(SeriesError::EmptyGrid);
    }
    let mut best: Option<(f64, T)> = None;
    for &p in grid {
        let detected = pelt(&series.values, p).dates(&series.dates);
        let d = changepoint_distance(&detected, targets);
        best = match best {
            Some((bd, bp)) if d > bd || (d == bd && p <= bp) => Some((bd, bp)),
            _ => Some((d, p)),
        };
    }
    Ok(best.expect("nonempty grid").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, 11).unwrap() + chrono::Duration::days(i)
    }

    #[test]
    fn daily_mean_examples() {
        let s = daily_mean(&[(day(0), 0.5)]);
        assert_eq!(s.values, [0.5]);
        let s = daily_mean(&[(day(0), 0.2f64), (day(0), 0.4)]);
        assert!((s.values[0] - 0.3).abs() < 1e-15);
        let s = daily_mean(&[(day(3), 1.0), (day(1), 2.0), (day(2), 3.0)]);
        assert_eq!(s.dates, [day(1), day(2), day(3)]);
        assert_eq!(s.values, [2.0, 3.0, 1.0]);
    }

    #[test]
    fn rolling_mean_examples() {
        assert_eq!(rolling_mean(&[0.1; 10], 7).unwrap(), vec![0.1; 10]);
        let r = rolling_mean(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 7.0], 7).unwrap();
        assert_eq!(r[6], 1.0);
        let x = [1.0, 5.0, -2.0];
        assert_eq!(rolling_mean(&x, 1).unwrap(), x);
        assert!(rolling_mean(&x, 0).is_err());
    }

    #[test]
    fn peak_examples() {
        assert!(detect_peaks(&[1.0, 2.0, 3.0, 4.0], 1.0).is_empty());
        assert_eq!(detect_peaks(&[0.0, 0.0, 10.0, 0.0, 0.0], 1.0), [2]);
        assert!(detect_peaks(&[0.0, 0.0, 10.0, 0.0, 0.0], 3.0).is_empty());
        assert_eq!(detect_peaks(&[0.0, 5.0, 5.0, 0.0, 1.0, 0.0], 1.0), [1]);
    }

    #[test]
    fn pelt_constant_series() {
        let cp = pelt(&[2.5; 30], 0.1);
        assert_eq!(cp.boundaries, [30]);
        assert!(cp.interior().is_empty());
    }

    #[test]
    fn pelt_single_step() {
        let mut y = vec![0.0; 20];
        y.extend(vec![1.0; 20]);
        assert_eq!(pelt(&y, 0.1).boundaries, [20, 40]);
    }

    #[test]
    fn changepoint_dates_use_segment_end() {
        let cp = ChangePointSet { boundaries: vec![2, 4] };
        let dates: Vec<_> = (0..4).map(day).collect();
        assert_eq!(cp.dates(&dates), [day(1)]);
    }

    fn step_series() -> DailySeries<f64> {
        let mut values = vec![0.0; 20];
        values.extend(vec![1.0; 20]);
        DailySeries { dates: (0..40).map(day).collect(), values }
    }

    #[test]
    fn tuning_picks_the_matching_penalty() {
        let s = step_series();
        assert_eq!(tune_penalty(&s, &[day(19)], &[0.1, 10.0]).unwrap(), 0.1);
        assert_eq!(tune_penalty(&s, &[day(19)], &[0.1, 0.5, 1.0, 20.0]).unwrap(), 1.0);
        assert!(tune_penalty(&s, &[], &[1.0]).is_err());
        assert!(tune_penalty::<f64>(&s, &[day(3)], &[]).is_err());
    }

    #[test]
    fn series_csv_round_trip() {
        let s = step_series();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(DailySeries::<f64>::read_csv(buf.as_slice()).unwrap(), s);
    }

    proptest! {
        #[test]
        fn rolling_preserves_length_and_bounds(
            xs in proptest::collection::vec(-10.0f64..10.0, 0..40),
            w in 1usize..10,
        ) {
            let r = rolling_mean(&xs, w).unwrap();
            prop_assert_eq!(r.len(), xs.len());
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r.iter().all(|&v| lo <= v && v <= hi));
        }

        #[test]
        fn more_penalty_never_more_changepoints(
            xs in proptest::collection::vec(-3.0f64..3.0, 1..60),
            p in 0.01f64..5.0,
            bump in 0.0f64..5.0,
        ) {
            let a = pelt(&xs, p).boundaries.len();
            let b = pelt(&xs, p + bump).boundaries.len();
            prop_assert!(b <= a);
        }
    }
}
