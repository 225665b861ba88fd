//! Guidance-timestep schedules.
//!
//! A schedule is the strictly decreasing set of timesteps at which a fresh
//! guidance gradient is evaluated. The power-law family places
//! `G_i = T - floor(T * i^k / count^k)` for `i = 0..=count`; `k > 1` crowds the
//! steps toward the start of sampling (high `t`), `k < 1` toward the end.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Absorbs the rounding error of `T * r^k` so that exact integer products
/// (e.g. integer `k`) floor to the mathematically correct value.
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Every timestep `T, T-1, ..., 1`.
    Vanilla,
    /// The first `count` reverse steps, then nothing.
    EarlyStop,
    /// Evenly spaced; identical to `PowerLaw` with `k = 1`.
    Uniform,
    PowerLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    #[serde(rename = "T")]
    pub total_steps: usize,
    #[serde(rename = "count")]
    pub requested_count: usize,
    pub k: f64,
    pub mode: ScheduleMode,
}

impl ScheduleSpec {
    pub fn vanilla(total_steps: usize) -> Self {
        Self {
            total_steps,
            requested_count: total_steps,
            k: 1.0,
            mode: ScheduleMode::Vanilla,
        }
    }

    pub fn power_law(total_steps: usize, requested_count: usize, k: f64) -> Self {
        Self {
            total_steps,
            requested_count,
            k,
            mode: ScheduleMode::PowerLaw,
        }
    }

    pub fn uniform(total_steps: usize, requested_count: usize) -> Self {
        Self {
            total_steps,
            requested_count,
            k: 1.0,
            mode: ScheduleMode::Uniform,
        }
    }

    pub fn early_stop(total_steps: usize, requested_count: usize) -> Self {
        Self {
            total_steps,
            requested_count,
            k: 1.0,
            mode: ScheduleMode::EarlyStop,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(LabError::config("T", "must be at least 1"));
        }
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(LabError::config("k", format!("must be finite and >= 0, got {}", self.k)));
        }
        if self.mode != ScheduleMode::Vanilla {
            if self.requested_count == 0 {
                return Err(LabError::config("count", "must be at least 1"));
            }
            if self.requested_count > self.total_steps {
                return Err(LabError::config(
                    "count",
                    format!(
                        "requested {} guidance steps but T = {}",
                        self.requested_count, self.total_steps
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Raw power-law values `G_0..=G_count` before dropping non-positive entries
/// and deduplicating. `G_0 = T` for every `k`, including `k = 0`.
pub fn raw_power_law(total_steps: usize, count: usize, k: f64) -> Vec<i64> {
    let t = total_steps as f64;
    let c = count as f64;
    (0..=count)
        .map(|i| {
            let frac = if i == 0 { 0.0 } else { (i as f64 / c).powf(k) };
            let offset = (t * frac + FLOOR_SLACK).floor() as i64;
            total_steps as i64 - offset
        })
        .collect()
}

/// The realized set of guidance timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceSchedule {
    steps: Vec<usize>,
    spec: ScheduleSpec,
}

pub fn make_schedule(spec: ScheduleSpec) -> Result<GuidanceSchedule> {
    spec.validate()?;
    let t = spec.total_steps;
    let steps: Vec<usize> = match spec.mode {
        ScheduleMode::Vanilla => (1..=t).rev().collect(),
        ScheduleMode::EarlyStop => (t + 1 - spec.requested_count..=t).rev().collect(),
        ScheduleMode::Uniform | ScheduleMode::PowerLaw => {
            let k = if spec.mode == ScheduleMode::Uniform { 1.0 } else { spec.k };
            let mut v: Vec<usize> = raw_power_law(t, spec.requested_count, k)
                .into_iter()
                .filter(|&g| g > 0)
                .map(|g| g as usize)
                .collect();
            v.sort_unstable_by(|a, b| b.cmp(a));
            v.dedup();
            v
        }
    };
    Ok(GuidanceSchedule { steps, spec })
}

impl GuidanceSchedule {
    /// Builds a schedule from an explicit step list (any order, duplicates
    /// allowed). Used for hand-crafted experiments.
    pub fn from_steps(total_steps: usize, steps: &[usize]) -> Result<Self> {
        if total_steps == 0 {
            return Err(LabError::config("T", "must be at least 1"));
        }
        if let Some(&bad) = steps.iter().find(|&&s| s == 0 || s > total_steps) {
            return Err(LabError::Timestep {
                t: bad,
                lo: 1,
                hi: total_steps,
            });
        }
        let mut v = steps.to_vec();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v.dedup();
        let spec = ScheduleSpec {
            total_steps,
            requested_count: v.len(),
            k: 1.0,
            mode: ScheduleMode::PowerLaw,
        };
        Ok(Self { steps: v, spec })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    pub fn total_steps(&self) -> usize {
        self.spec.total_steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// True when every timestep `1..=T` is a guidance step.
    pub fn is_full(&self) -> bool {
        self.steps.len() == self.spec.total_steps
    }

    /// Compact rate `T / |G|`.
    pub fn compact_rate(&self) -> f64 {
        self.spec.total_steps as f64 / self.steps.len().max(1) as f64
    }

    pub fn contains(&self, t: usize) -> bool {
        // steps are strictly decreasing
        self.steps.binary_search_by(|probe| t.cmp(probe)).is_ok()
    }

    /// Number of sampling steps whose cached gradient is folded into each
    /// guidance step: `a_i - a_{i+1}`, and `a_last` for the final step.
    pub fn gap_weights(&self) -> Result<Vec<(usize, usize)>> {
        if self.steps.is_empty() {
            return Err(LabError::EmptySchedule);
        }
        let mut out = Vec::with_capacity(self.steps.len());
        for (i, &a) in self.steps.iter().enumerate() {
            let next = self.steps.get(i + 1).copied().unwrap_or(0);
            out.push((a, a - next));
        }
        Ok(out)
    }

    /// Gap weight for a single timestep; `None` when `t` is not a guidance step.
    pub fn weight_at(&self, t: usize) -> Option<usize> {
        let i = self.steps.binary_search_by(|probe| t.cmp(probe)).ok()?;
        let next = self.steps.get(i + 1).copied().unwrap_or(0);
        Some(t - next)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.steps).expect("integer array serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn steps(spec: ScheduleSpec) -> Vec<usize> {
        make_schedule(spec).unwrap().steps().to_vec()
    }

    #[test]
    fn uniform_250_50() {
        let s = steps(ScheduleSpec::power_law(250, 50, 1.0));
        let expected: Vec<usize> = (1..=50).rev().map(|i| i * 5).collect();
        assert_eq!(s, expected);
        assert_eq!(steps(ScheduleSpec::uniform(250, 50)), expected);
    }

    #[test]
    fn power_law_small_cases() {
        assert_eq!(steps(ScheduleSpec::power_law(10, 5, 0.5)), vec![10, 6, 4, 3, 2]);
        assert_eq!(steps(ScheduleSpec::power_law(10, 5, 100.0)), vec![10]);
        assert_eq!(steps(ScheduleSpec::power_law(20, 4, 0.5)), vec![20, 10, 6, 3]);
        assert_eq!(steps(ScheduleSpec::power_law(20, 4, 3.0)), vec![20, 18, 12]);
    }

    #[test]
    fn power_law_k2_full_list() {
        let expected = vec![
            250, 249, 248, 247, 246, 244, 242, 240, 238, 236, 234, 231, 228, 225, 222, 218, 214,
            210, 206, 202, 198, 193, 188, 183, 178, 172, 166, 160, 154, 148, 142, 135, 128, 121,
            114, 106, 98, 90, 82, 74, 66, 57, 48, 39, 30, 20, 10,
        ];
        assert_eq!(steps(ScheduleSpec::power_law(250, 50, 2.0)), expected);
    }

    #[test]
    fn zero_exponent_keeps_only_t() {
        assert_eq!(steps(ScheduleSpec::power_law(30, 7, 0.0)), vec![30]);
    }

    #[test]
    fn early_stop_and_vanilla() {
        assert_eq!(steps(ScheduleSpec::early_stop(10, 3)), vec![10, 9, 8]);
        let v = steps(ScheduleSpec::vanilla(6));
        assert_eq!(v, vec![6, 5, 4, 3, 2, 1]);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(make_schedule(ScheduleSpec::power_law(10, 11, 1.0)).is_err());
        assert!(make_schedule(ScheduleSpec::power_law(10, 5, -0.1)).is_err());
        assert!(make_schedule(ScheduleSpec::power_law(0, 0, 1.0)).is_err());
        assert!(make_schedule(ScheduleSpec::power_law(10, 5, f64::NAN)).is_err());
    }

    #[test]
    fn membership() {
        let s = make_schedule(ScheduleSpec::power_law(10, 5, 0.5)).unwrap();
        assert!(!s.contains(5));
        assert!(s.contains(6));
        assert!(!s.contains(0));
        let v = make_schedule(ScheduleSpec::vanilla(40)).unwrap();
        assert!((1..=40).all(|t| v.contains(t)));
    }

    #[test]
    fn gap_weight_examples() {
        let s = make_schedule(ScheduleSpec::power_law(10, 5, 0.5)).unwrap();
        let w: Vec<usize> = s.gap_weights().unwrap().iter().map(|p| p.1).collect();
        assert_eq!(w, vec![4, 2, 1, 1, 2]);
        assert_eq!(w.iter().sum::<usize>(), 10);
        assert_eq!(s.weight_at(6), Some(2));
        assert_eq!(s.weight_at(5), None);

        let v = make_schedule(ScheduleSpec::vanilla(9)).unwrap();
        assert!(v.gap_weights().unwrap().iter().all(|&(_, w)| w == 1));

        let single = make_schedule(ScheduleSpec::power_law(10, 5, 100.0)).unwrap();
        assert_eq!(single.gap_weights().unwrap(), vec![(10, 10)]);
    }

    #[test]
    fn empty_schedule_has_no_weights() {
        let s = GuidanceSchedule::from_steps(5, &[]).unwrap();
        assert!(matches!(s.gap_weights(), Err(LabError::EmptySchedule)));
    }

    #[test]
    fn json_forms() {
        let spec = ScheduleSpec::power_law(10, 5, 0.5);
        let s = make_schedule(spec).unwrap();
        assert_eq!(s.to_json(), "[10,6,4,3,2]");
        let js = serde_json::to_string(&spec).unwrap();
        assert_eq!(js, r#"{"T":10,"count":5,"k":0.5,"mode":"power_law"}"#);
        let back: ScheduleSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(back, spec);
        assert_eq!(make_schedule(back).unwrap(), s);
    }

    proptest! {
        #[test]
        fn raw_values_monotone_in_k(
            t in 1usize..=1000,
            frac in 0.0f64..=1.0,
            k1 in 0.0f64..=50.0,
            dk in 0.0f64..=50.0,
        ) {
            let count = ((t as f64 * frac) as usize).clamp(1, t);
            let k2 = (k1 + dk).min(50.0);
            let lo = raw_power_law(t, count, k1);
            let hi = raw_power_law(t, count, k2);
            for (a, b) in lo.iter().zip(&hi) {
                prop_assert!(a <= b);
            }
        }

        #[test]
        fn schedule_invariants(t in 1usize..=600, frac in 0.0f64..=1.0, k in 0.0f64..=20.0) {
            let count = ((t as f64 * frac) as usize).clamp(1, t);
            let s = make_schedule(ScheduleSpec::power_law(t, count, k)).unwrap();
            let st = s.steps();
            prop_assert_eq!(st[0], t);
            prop_assert!(st.windows(2).all(|w| w[0] > w[1]));
            prop_assert!(st.iter().all(|&x| x >= 1 && x <= t));
            prop_assert!(st.len() <= count + 1);
            let sum: usize = s.gap_weights().unwrap().iter().map(|p| p.1).sum();
            prop_assert_eq!(sum, st[0]);
        }
    }
}
