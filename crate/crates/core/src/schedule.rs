//! Intermittent communication schedules.
//!
//! A schedule is a finite ordered list of half-open communication windows
//! `[t_m, s_m)` inside `[0, horizon]`; the complement is silent time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("communication ratio {0} must lie strictly between 0 and 1")]
    BadRatio(f64),
    #[error("period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("window {index} starts before the previous window")]
    Unsorted { index: usize },
    #[error("window {index} overlaps the previous window")]
    Overlapping { index: usize },
    #[error("window {index} has non-positive width")]
    EmptyInterval { index: usize },
    #[error("window {index} extends outside [0, horizon]")]
    OutsideHorizon { index: usize },
    #[error("range [{a}, {b}) is not inside [0, horizon]")]
    BadRange { a: f64, b: f64 },
    #[error("schedule has no communication windows")]
    EmptySchedule,
    #[error("time {0} is outside [0, horizon)")]
    OutOfHorizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn width(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Periodic { period: f64, ratio: f64 },
    IntervalList,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    windows: Vec<Window>,
    horizon: f64,
    kind: ScheduleKind,
    /// `prefix[m]`: total width of windows `0..m`.
    prefix: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcrMode {
    /// Deficit `ϑ t - M(t, 0)` measured from the origin only.
    FromZero,
    /// Deficit `ϑ (t - s) - M(t, s)` over every pair `s < t`.
    AllPairs,
}

/// Result of verifying an average communication ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcrReport {
    pub theta_requested: f64,
    pub mode: AcrMode,
    /// Minimal `T₀ ≥ 0` with `M(t, s) ≥ ϑ (t - s) - T₀`.
    pub elastic_slack_found: f64,
    pub holds_strict: bool,
    /// Time where the deficit is largest.
    pub worst_time: f64,
    /// Start `s` of the worst pair (0 in `FromZero` mode).
    pub worst_start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasiPeriodicStats {
    /// `inf_m (s_m - t_m)`.
    pub inf_width: f64,
    /// `sup_m (t_{m+1} - t_m)`; `None` without a successor window.
    pub sup_period: Option<f64>,
    pub period_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalStats {
    pub min_width: f64,
    pub mean_width: f64,
    pub max_width: f64,
    pub count: usize,
}

impl Schedule {
    /// Windows `[mT, (m + θ)T)` for every `mT < horizon`, the last one
    /// clipped to the horizon.
    pub fn periodic(period: f64, ratio: f64, horizon: f64) -> Result<Self, ScheduleError> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(ScheduleError::BadRatio(ratio));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(ScheduleError::BadPeriod(period));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(ScheduleError::BadHorizon(horizon));
        }
        let mut windows = Vec::new();
        let mut m = 0u64;
        loop {
            let start = m as f64 * period;
            if start >= horizon {
                break;
            }
            let end = ((m as f64 + ratio) * period).min(horizon);
            windows.push(Window { start, end });
            m += 1;
        }
        Ok(Self::build(windows, horizon, ScheduleKind::Periodic { period, ratio }))
    }

    pub fn from_intervals(list: &[(f64, f64)], horizon: f64) -> Result<Self, ScheduleError> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(ScheduleError::BadHorizon(horizon));
        }
        let mut windows = Vec::with_capacity(list.len());
        for (index, &(start, end)) in list.iter().enumerate() {
            if !(end > start) {
                return Err(ScheduleError::EmptyInterval { index });
            }
            if let Some(prev) = windows.last() {
                let prev: &Window = prev;
                if start < prev.start {
                    return Err(ScheduleError::Unsorted { index });
                }
                if start < prev.end {
                    return Err(ScheduleError::Overlapping { index });
                }
            }
            if !(start >= 0.0) || !(end <= horizon) {
                return Err(ScheduleError::OutsideHorizon { index });
            }
            windows.push(Window { start, end });
        }
        Ok(Self::build(windows, horizon, ScheduleKind::IntervalList))
    }

    fn build(windows: Vec<Window>, horizon: f64, kind: ScheduleKind) -> Self {
        let mut prefix = Vec::with_capacity(windows.len() + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for w in &windows {
            acc += w.width();
            prefix.push(acc);
        }
        Self {
            windows,
            horizon,
            kind,
            prefix,
        }
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Same windows on a shorter horizon (windows past it are clipped).
    pub fn truncated(&self, horizon: f64) -> Result<Self, ScheduleError> {
        if !(horizon > 0.0) || horizon > self.horizon {
            return Err(ScheduleError::BadHorizon(horizon));
        }
        let windows = self
            .windows
            .iter()
            .filter(|w| w.start < horizon)
            .map(|w| Window {
                start: w.start,
                end: w.end.min(horizon),
            })
            .collect();
        Ok(Self::build(windows, horizon, self.kind))
    }

    /// Total communication measure of `[0, t)`.
    fn cumulative(&self, t: f64) -> f64 {
        // number of windows starting at or before t
        let k = self.windows.partition_point(|w| w.start <= t);
        if k == 0 {
            return 0.0;
        }
        let w = &self.windows[k - 1];
        self.prefix[k - 1] + (t.min(w.end) - w.start)
    }

    /// `M(b, a)`: communication measure of `[a, b)`.
    pub fn comm_width(&self, a: f64, b: f64) -> Result<f64, ScheduleError> {
        if !(a >= 0.0 && a < b && b <= self.horizon) {
            return Err(ScheduleError::BadRange { a, b });
        }
        Ok(self.cumulative(b) - self.cumulative(a))
    }

    /// `M^c(b, a) = (b - a) - M(b, a)`.
    pub fn silent_width(&self, a: f64, b: f64) -> Result<f64, ScheduleError> {
        Ok((b - a) - self.comm_width(a, b)?)
    }

    /// Every window boundary plus `0` and the horizon, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = Vec::with_capacity(2 * self.windows.len() + 2);
        pts.push(0.0);
        for w in &self.windows {
            pts.push(w.start);
            pts.push(w.end);
        }
        pts.push(self.horizon);
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        pts
    }

    /// Minimal elastic slack for the average communication ratio `theta`.
    ///
    /// The deficit is piecewise linear between window boundaries, so its
    /// maximum is attained at a breakpoint.
    pub fn check_acr(&self, theta: f64, mode: AcrMode) -> Result<AcrReport, ScheduleError> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(ScheduleError::BadRatio(theta));
        }
        let deficit = |t: f64| theta * t - self.cumulative(t);
        let pts = self.breakpoints();
        let (mut best, mut worst_time, mut worst_start) = (0.0_f64, 0.0, 0.0);
        match mode {
            AcrMode::FromZero => {
                for &t in &pts {
                    let d = deficit(t);
                    if d > best {
                        best = d;
                        worst_time = t;
                    }
                }
            }
            AcrMode::AllPairs => {
                // max_{s ≤ t} D(t) - D(s) by a running minimum of D
                let (mut min_d, mut min_at) = (f64::INFINITY, 0.0);
                for &t in &pts {
                    let d = deficit(t);
                    if d < min_d {
                        min_d = d;
                        min_at = t;
                    }
                    if d - min_d > best {
                        best = d - min_d;
                        worst_time = t;
                        worst_start = min_at;
                    }
                }
            }
        }
        Ok(AcrReport {
            theta_requested: theta,
            mode,
            elastic_slack_found: best,
            holds_strict: best == 0.0,
            worst_time,
            worst_start,
        })
    }

    pub fn quasi_periodic_stats(&self) -> Result<QuasiPeriodicStats, ScheduleError> {
        if self.windows.is_empty() {
            return Err(ScheduleError::EmptySchedule);
        }
        let inf_width = self.windows.iter().map(Window::width).fold(f64::INFINITY, f64::min);
        let periods: Vec<f64> = self.windows.windows(2).map(|p| p[1].start - p[0].start).collect();
        let sup_period = periods.iter().copied().reduce(f64::max);
        Ok(QuasiPeriodicStats {
            inf_width,
            sup_period,
            period_count: periods.len(),
        })
    }

    pub fn interval_stats(&self) -> Result<IntervalStats, ScheduleError> {
        if self.windows.is_empty() {
            return Err(ScheduleError::EmptySchedule);
        }
        let widths = self.windows.iter().map(Window::width);
        let count = self.windows.len();
        Ok(IntervalStats {
            min_width: widths.clone().fold(f64::INFINITY, f64::min),
            mean_width: self.prefix[count] / count as f64,
            max_width: widths.fold(f64::NEG_INFINITY, f64::max),
            count,
        })
    }

    /// Largest realised silent ratio `(t_{m+1} - s_m) / (t_{m+1} - t_m)`,
    /// the finite-horizon stand-in for the limsup of the minimum
    /// communication ratio assumption.
    pub fn max_silent_ratio(&self) -> Option<f64> {
        self.windows
            .windows(2)
            .map(|p| (p[1].start - p[0].end) / (p[1].start - p[0].start))
            .reduce(f64::max)
    }

    /// Fraction of `[0, horizon)` spent communicating.
    pub fn average_ratio(&self) -> f64 {
        self.cumulative(self.horizon) / self.horizon
    }

    pub fn min_width(&self) -> Option<f64> {
        self.windows.iter().map(Window::width).reduce(f64::min)
    }

    pub fn is_communicating(&self, t: f64) -> Result<bool, ScheduleError> {
        if !(t >= 0.0 && t < self.horizon) {
            return Err(ScheduleError::OutOfHorizon(t));
        }
        let k = self.windows.partition_point(|w| w.start <= t);
        Ok(k > 0 && t < self.windows[k - 1].end)
    }

    /// Smallest window boundary (or the horizon) strictly after `t`.
    pub fn next_switch(&self, t: f64) -> Result<f64, ScheduleError> {
        if !(t >= 0.0 && t < self.horizon) {
            return Err(ScheduleError::OutOfHorizon(t));
        }
        let k = self.windows.partition_point(|w| w.start <= t);
        if k > 0 && t < self.windows[k - 1].end {
            return Ok(self.windows[k - 1].end);
        }
        Ok(self.windows.get(k).map_or(self.horizon, |w| w.start))
    }

    /// Silent spans `[s_m, t_{m+1})` (including a leading gap before the
    /// first window and a trailing one up to the horizon).
    pub fn silent_spans(&self) -> Vec<Window> {
        let mut spans = Vec::new();
        let mut cursor = 0.0;
        for w in &self.windows {
            if w.start > cursor {
                spans.push(Window {
                    start: cursor,
                    end: w.start,
                });
            }
            cursor = w.end;
        }
        if self.horizon > cursor {
            spans.push(Window {
                start: cursor,
                end: self.horizon,
            });
        }
        spans
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn periodic_windows() {
        let s = Schedule::periodic(10.0, 0.5, 100.0).unwrap();
        assert_eq!(s.windows().len(), 10);
        assert_eq!(s.windows()[0], Window { start: 0.0, end: 5.0 });
        assert_eq!(s.windows()[9], Window { start: 90.0, end: 95.0 });
        assert_eq!(Schedule::periodic(10.0, 1.2, 100.0), Err(ScheduleError::BadRatio(1.2)));
        let dense = Schedule::periodic(1.0, 0.999, 10.0).unwrap();
        assert!((dense.average_ratio() - 0.999).abs() < 1e-12);
    }

    #[test]
    fn interval_validation() {
        assert_eq!(
            Schedule::from_intervals(&[(0.0, 5.0), (3.0, 8.0)], 10.0),
            Err(ScheduleError::Overlapping { index: 1 })
        );
        assert_eq!(
            Schedule::from_intervals(&[(4.0, 5.0), (1.0, 2.0)], 10.0),
            Err(ScheduleError::Unsorted { index: 1 })
        );
        assert_eq!(
            Schedule::from_intervals(&[(1.0, 1.0)], 10.0),
            Err(ScheduleError::EmptyInterval { index: 0 })
        );
        let silent = Schedule::from_intervals(&[], 10.0).unwrap();
        assert_eq!(silent.comm_width(0.0, 10.0).unwrap(), 0.0);
        assert_eq!(silent.interval_stats(), Err(ScheduleError::EmptySchedule));
        // back-to-back windows are allowed
        assert!(Schedule::from_intervals(&[(0.0, 1.0), (1.0, 2.0)], 2.0).is_ok());
    }

    #[test]
    fn comm_width_examples() {
        let acr = fixtures::acr_schedule();
        assert!((acr.comm_width(0.0, 95.0).unwrap() - 49.9).abs() < 1e-12);
        assert_eq!(acr.comm_width(38.5, 48.0).unwrap(), 0.0);
        let pic = Schedule::periodic(10.0, 0.5, 100.0).unwrap();
        assert_eq!(pic.comm_width(0.0, 20.0).unwrap(), 10.0);
        assert!(matches!(pic.comm_width(5.0, 5.0), Err(ScheduleError::BadRange { .. })));
    }

    #[test]
    fn lookup_examples() {
        let acr = fixtures::acr_schedule();
        assert!(acr.is_communicating(38.2).unwrap());
        assert_eq!(acr.next_switch(38.2).unwrap(), 38.5);
        assert!(!acr.is_communicating(40.0).unwrap());
        assert_eq!(acr.next_switch(40.0).unwrap(), 48.0);
        for w in acr.windows() {
            assert!(acr.is_communicating(w.start).unwrap());
            if w.end < acr.horizon() {
                assert!(!acr.is_communicating(w.end).unwrap());
            }
        }
        assert_eq!(acr.is_communicating(95.0), Err(ScheduleError::OutOfHorizon(95.0)));
    }

    #[test]
    fn acr_all_communication_holds_strictly() {
        let s = Schedule::from_intervals(&[(0.0, 20.0)], 20.0).unwrap();
        for mode in [AcrMode::FromZero, AcrMode::AllPairs] {
            let r = s.check_acr(0.9, mode).unwrap();
            assert!(r.holds_strict);
            assert_eq!(r.elastic_slack_found, 0.0);
        }
    }

    #[test]
    fn quasi_periodic_single_window() {
        let s = Schedule::from_intervals(&[(0.0, 1.0)], 1.0).unwrap();
        let q = s.quasi_periodic_stats().unwrap();
        assert_eq!(q.inf_width, 1.0);
        assert_eq!(q.sup_period, None);
        assert_eq!(q.period_count, 0);
    }

    #[test]
    fn silent_spans_cover_complement() {
        let acr = fixtures::acr_schedule();
        let silent: f64 = acr.silent_spans().iter().map(Window::width).sum();
        assert!((silent + 49.9 - 95.0).abs() < 1e-12);
        assert_eq!(acr.max_silent_ratio(), Some(0.95));
    }
}
