//! Scalar formulas: quality loss, speedup, achievement rate, pass rate,
//! fitness, and the five-way failure classification.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvaluationReport, Slot, Stage1Outcome};
use crate::task::Target;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid measurements: {0}")]
    InvalidMeasurements(String),
    #[error("invariant violated: {0}")]
    Invariant(&'static str),
}

/// Paired baseline and accelerated samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeasurements {
    pub quality_base: Vec<f64>,
    pub quality_acc: Vec<f64>,
    pub time_base: Vec<f64>,
    pub time_acc: Vec<f64>,
}

impl SampleMeasurements {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let n = self.quality_base.len();
        if n == 0 {
            return Err(MetricsError::EmptyInput);
        }
        if [self.quality_acc.len(), self.time_base.len(), self.time_acc.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(MetricsError::InvalidMeasurements("sample lists differ in length".into()));
        }
        if self.time_base.iter().chain(&self.time_acc).any(|&t| !(t > 0.0)) {
            return Err(MetricsError::InvalidMeasurements("times must be positive".into()));
        }
        Ok(())
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// L = (mean S_base - mean S_acc) / mean S_base. Negative when the
/// accelerated run scores higher.
pub fn quality_loss(m: &SampleMeasurements) -> Result<f64, MetricsError> {
    m.validate()?;
    let base = mean(&m.quality_base);
    if !(base > 0.0) {
        return Err(MetricsError::DegenerateInput("mean baseline quality must be positive"));
    }
    Ok((base - mean(&m.quality_acc)) / base)
}

/// U = mean T_base / mean T_acc.
pub fn speedup(m: &SampleMeasurements) -> Result<f64, MetricsError> {
    m.validate()?;
    let acc = mean(&m.time_acc);
    if !(acc > 0.0) {
        return Err(MetricsError::DegenerateInput("mean accelerated time must be positive"));
    }
    Ok(mean(&m.time_base) / acc)
}

/// S_a = min(U / U_req, 1).
pub fn achievement_rate(u: f64, u_req: f64) -> Result<f64, MetricsError> {
    if !(u_req > 0.0) {
        return Err(MetricsError::DegenerateInput("speedup requirement must be positive"));
    }
    Ok((u / u_req).clamp(0.0, 1.0))
}

/// Latency form of the achievement rate: rho = tau_max / tau.
pub fn latency_achievement_rate(tau: f64, tau_max: f64) -> Result<f64, MetricsError> {
    if !(tau > 0.0) || !(tau_max > 0.0) {
        return Err(MetricsError::DegenerateInput("latencies must be positive"));
    }
    Ok((tau_max / tau).min(1.0))
}

pub fn pass_rate(verdicts: &[bool]) -> Result<f64, MetricsError> {
    if verdicts.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(verdicts.iter().filter(|&&v| v).count() as f64 / verdicts.len() as f64)
}

/// Average of per-group rates weighted by group size, i.e. the pass rate
/// over all tasks rather than over groups. Empty groups are ignored.
pub fn task_weighted_rate(groups: &[(usize, f64)]) -> Result<f64, MetricsError> {
    let total: usize = groups.iter().map(|g| g.0).sum();
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok(groups.iter().map(|&(n, r)| n as f64 * r).sum::<f64>() / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    pub w_u: f64,
    pub w_l: f64,
    pub cap: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        Self { w_u: 1.0, w_l: 5.0, cap: 1.5 }
    }
}

/// Normalised efficiency: U / U_req for speedup targets, tau_max / tau for
/// latency targets, plain U when the task has no target.
pub fn efficiency_ratio(target: &Target, speedup: f64, latency: f64) -> f64 {
    match *target {
        Target::None => speedup,
        Target::Speedup { required } => speedup / required,
        Target::Latency { bound } => bound / latency,
    }
}

/// w_U * min(ratio, cap) - w_L * max(L, 0).
pub fn fitness(loss: f64, ratio: f64, w: &FitnessWeights) -> f64 {
    w.w_u * ratio.min(w.cap) - w.w_l * loss.max(0.0)
}

/// Fitness assigned to candidates that never reach relative measurement.
pub fn failure_fitness(w: &FitnessWeights) -> f64 {
    -w.w_l
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorMode {
    CompileError,
    KeyAttributesError,
    AbsoluteQualityError,
    RelativeQualityError,
    RelativeSpeedError,
}

impl ErrorMode {
    pub const ALL: [ErrorMode; 5] = [
        ErrorMode::CompileError,
        ErrorMode::KeyAttributesError,
        ErrorMode::AbsoluteQualityError,
        ErrorMode::RelativeQualityError,
        ErrorMode::RelativeSpeedError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorMode::CompileError => "CompileError",
            ErrorMode::KeyAttributesError => "KeyAttributesError",
            ErrorMode::AbsoluteQualityError => "AbsoluteQualityError",
            ErrorMode::RelativeQualityError => "RelativeQualityError",
            ErrorMode::RelativeSpeedError => "RelativeSpeedError",
        }
    }
}

impl fmt::Display for ErrorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Labels a failing report. The first failing stage decides; only stage 3
/// can yield two labels at once.
pub fn classify_error(report: &EvaluationReport) -> Result<BTreeSet<ErrorMode>, MetricsError> {
    if report.passed {
        return Err(MetricsError::Invariant("classify_error called on a passing report"));
    }
    let mut out = BTreeSet::new();
    match &report.stage1 {
        Stage1Outcome::RuntimeFailure { .. } => {
            out.insert(ErrorMode::CompileError);
            return Ok(out);
        }
        Stage1Outcome::Assessed { verdict, .. } if !verdict.passed => {
            out.insert(ErrorMode::KeyAttributesError);
            return Ok(out);
        }
        Stage1Outcome::Assessed { .. } => {}
    }
    match &report.stage2 {
        Slot::Completed(s2) if !s2.passed => {
            out.insert(ErrorMode::AbsoluteQualityError);
            return Ok(out);
        }
        Slot::Completed(_) => {}
        _ => return Err(MetricsError::Invariant("stage 2 missing after a passing stage 1")),
    }
    match &report.stage3 {
        Slot::Completed(s3) => {
            if !s3.quality_passed {
                out.insert(ErrorMode::RelativeQualityError);
            }
            if !s3.efficiency_passed {
                out.insert(ErrorMode::RelativeSpeedError);
            }
        }
        _ => return Err(MetricsError::Invariant("failing report with no failing stage")),
    }
    if out.is_empty() {
        return Err(MetricsError::Invariant("failing report with no failing stage"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(qb: &[f64], qa: &[f64], tb: &[f64], ta: &[f64]) -> SampleMeasurements {
        SampleMeasurements {
            quality_base: qb.to_vec(),
            quality_acc: qa.to_vec(),
            time_base: tb.to_vec(),
            time_acc: ta.to_vec(),
        }
    }

    #[test]
    fn loss_fixtures() {
        let ones = [1.0, 1.0];
        assert_eq!(quality_loss(&m(&[30.0, 30.0], &[30.0, 30.0], &ones, &ones)).unwrap(), 0.0);
        let l = quality_loss(&m(&[32.0, 28.0], &[28.5, 28.5], &ones, &ones)).unwrap();
        assert!((l - (30.0 - 28.5) / 30.0).abs() < 1e-12);
        assert!((l - 0.05).abs() < 1e-12);
        assert!(quality_loss(&m(&[30.0, 29.0], &[31.0, 29.5], &ones, &ones)).unwrap() < 0.0);
        assert_eq!(
            quality_loss(&m(&[0.0, 0.0], &[1.0, 1.0], &ones, &ones)),
            Err(MetricsError::DegenerateInput("mean baseline quality must be positive"))
        );
    }

    #[test]
    fn speedup_fixtures() {
        let q = [1.0, 1.0];
        assert_eq!(speedup(&m(&q, &q, &[10.0, 10.0], &[5.0, 5.0])).unwrap(), 2.0);
        assert_eq!(speedup(&m(&q, &q, &[12.0, 8.0], &[4.0, 6.0])).unwrap(), 2.0);
        assert_eq!(speedup(&m(&q, &q, &[3.0, 7.0], &[3.0, 7.0])).unwrap(), 1.0);
    }

    #[test]
    fn measurement_validation() {
        assert_eq!(m(&[], &[], &[], &[]).validate(), Err(MetricsError::EmptyInput));
        assert!(m(&[1.0], &[1.0, 2.0], &[1.0], &[1.0]).validate().is_err());
        assert!(m(&[1.0], &[1.0], &[0.0], &[1.0]).validate().is_err());
    }

    #[test]
    fn achievement_fixtures() {
        assert_eq!(achievement_rate(1.5, 2.0).unwrap(), 0.75);
        assert_eq!(achievement_rate(3.0, 2.0).unwrap(), 1.0);
        assert_eq!(achievement_rate(2.0, 2.0).unwrap(), 1.0);
        assert!(achievement_rate(1.0, 0.0).is_err());
        assert_eq!(latency_achievement_rate(10.0, 5.0).unwrap(), 0.5);
        assert_eq!(latency_achievement_rate(4.0, 5.0).unwrap(), 1.0);
    }

    #[test]
    fn pass_rate_fixtures() {
        assert_eq!(pass_rate(&[true, true, false, false]).unwrap(), 0.5);
        assert_eq!(pass_rate(&[true; 3]).unwrap(), 1.0);
        assert_eq!(pass_rate(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn task_weighted_average_over_level_counts() {
        let counts = [41usize, 116, 261, 93, 93];
        let rates = [0.9, 0.8, 0.7, 0.6, 0.5];
        let groups: Vec<_> = counts.iter().copied().zip(rates).collect();
        // 36.9 + 92.8 + 182.7 + 55.8 + 46.5 = 414.7 passing tasks of 604
        let expected = 414.7 / 604.0;
        assert!((task_weighted_rate(&groups).unwrap() - expected).abs() < 1e-12);
        let level_mean = rates.iter().sum::<f64>() / 5.0;
        assert!((task_weighted_rate(&groups).unwrap() - level_mean).abs() > 1e-3);
    }

    #[test]
    fn fitness_fixtures() {
        let w = FitnessWeights::default();
        let t = Target::Speedup { required: 2.0 };
        assert_eq!(fitness(0.0, efficiency_ratio(&t, 2.0, 1.0), &w), 1.0);
        assert!((fitness(0.10, efficiency_ratio(&t, 2.0, 1.0), &w) - 0.5).abs() < 1e-12);
        assert!(fitness(0.0, efficiency_ratio(&t, 2.2, 1.0), &w) < fitness(0.0, efficiency_ratio(&t, 2.6, 1.0), &w));
        assert_eq!(fitness(-0.2, 1.0, &w), 1.0);
        assert_eq!(fitness(0.0, 9.0, &w), 1.5);
        let tl = Target::Latency { bound: 5.0 };
        assert_eq!(efficiency_ratio(&tl, 0.0, 5.0), 1.0);
        assert_eq!(efficiency_ratio(&Target::None, 1.7, 3.0), 1.7);
        assert_eq!(failure_fitness(&w), -5.0);
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    fn samples() -> impl Strategy<Value = SampleMeasurements> {
        (1usize..12).prop_flat_map(|n| {
            let v = || prop::collection::vec(0.1f64..100.0, n);
            (v(), v(), v(), v()).prop_map(|(qb, qa, tb, ta)| m(&qb, &qa, &tb, &ta))
        })
    }

    fn rel_eq(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12)
    }

    proptest! {
        #[test]
        fn loss_and_speedup_are_scale_invariant(s in samples(), c in 0.01f64..100.0) {
            let scaled = SampleMeasurements {
                quality_base: s.quality_base.iter().map(|x| x * c).collect(),
                quality_acc: s.quality_acc.iter().map(|x| x * c).collect(),
                time_base: s.time_base.iter().map(|x| x * c).collect(),
                time_acc: s.time_acc.iter().map(|x| x * c).collect(),
            };
            prop_assert!(rel_eq(quality_loss(&s).unwrap(), quality_loss(&scaled).unwrap())
                || (quality_loss(&s).unwrap() - quality_loss(&scaled).unwrap()).abs() < 1e-12);
            prop_assert!(rel_eq(speedup(&s).unwrap(), speedup(&scaled).unwrap()));
        }

        #[test]
        fn loss_and_speedup_ignore_order(s in samples(), rot in 0usize..12) {
            let mut p = s.clone();
            let k = rot % s.quality_base.len();
            p.quality_base.rotate_left(k);
            p.quality_acc.reverse();
            p.time_base.rotate_right(k);
            p.time_acc.reverse();
            prop_assert!((quality_loss(&s).unwrap() - quality_loss(&p).unwrap()).abs() < 1e-12);
            prop_assert!(rel_eq(speedup(&s).unwrap(), speedup(&p).unwrap()));
        }

        #[test]
        fn achievement_monotone(u1 in 0.1f64..5.0, du in 0.0f64..3.0, r1 in 0.5f64..4.0, dr in 0.0f64..3.0) {
            let a = achievement_rate(u1, r1).unwrap();
            prop_assert!(achievement_rate(u1 + du, r1).unwrap() >= a);
            prop_assert!(achievement_rate(u1, r1 + dr).unwrap() <= a);
            prop_assert_eq!(achievement_rate(r1 + du, r1).unwrap(), 1.0);
        }

        #[test]
        fn fitness_order_survives_common_shift(l in 0.0f64..0.2, a in 1.0f64..1.4, b in 1.0f64..1.4, c in 0.0f64..0.09) {
            let w = FitnessWeights::default();
            let (fa, fb) = (fitness(l, a, &w), fitness(l, b, &w));
            let (ga, gb) = (fitness(l, a + c, &w), fitness(l, b + c, &w));
            prop_assert_eq!(fa.partial_cmp(&fb), ga.partial_cmp(&gb));
            if a < b { prop_assert!(fa < fb); }
        }

        #[test]
        fn fitness_decreasing_in_positive_loss(l in 0.001f64..0.5, dl in 0.001f64..0.5, r in 0.0f64..2.0) {
            let w = FitnessWeights::default();
            prop_assert!(fitness(l + dl, r, &w) < fitness(l, r, &w));
        }
    }
}
