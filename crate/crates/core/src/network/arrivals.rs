//! Piecewise-constant-rate Poisson arrivals over a weekly cycle.

use rand_distr::{Distribution, Exp1};

use crate::des::{Minutes, RandomStream};

use super::scenario::{ArrivalSpec, HOURS_PER_WEEK};

/// Compiled arrival process. Rates are per minute.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalProcess {
    hourly_rate: Vec<f64>,
    peak: f64,
    flat: bool,
}

impl ArrivalProcess {
    pub fn new(spec: &ArrivalSpec) -> Self {
        let per_minute = spec.base_rate / 60.0;
        let hourly_rate: Vec<f64> = spec.profile.iter().map(|m| per_minute * m).collect();
        let peak = hourly_rate.iter().copied().fold(0.0, f64::max);
        let flat = hourly_rate.iter().all(|&r| r == peak);
        Self {
            hourly_rate,
            peak,
            flat,
        }
    }

    /// Instantaneous rate (per minute) at time `t`.
    pub fn rate_at(&self, t: Minutes) -> f64 {
        self.hourly_rate[hour_of_week(t)]
    }

    pub fn peak_rate(&self) -> f64 {
        self.peak
    }

    /// Expected number of arrivals in `[0, t)`.
    pub fn expected_arrivals(&self, t: Minutes) -> f64 {
        let week = 60.0 * HOURS_PER_WEEK as f64;
        let per_week: f64 = self.hourly_rate.iter().sum::<f64>() * 60.0;
        let full_weeks = (t / week).floor();
        let mut total = full_weeks * per_week;
        let mut s = full_weeks * week;
        while s < t {
            let end = (s + 60.0 - s % 60.0).min(t);
            total += self.rate_at(s) * (end - s);
            s = end;
        }
        total
    }

    /// Gap until the next arrival after `now`, or `None` when the rate is zero
    /// everywhere. Uses thinning against the peak rate; with a flat profile
    /// every candidate is accepted, so the gap is exactly exponential.
    pub fn sample_interarrival(&self, now: Minutes, rng: &mut RandomStream) -> Option<Minutes> {
        if self.peak <= 0.0 {
            return None;
        }
        let mut t = now;
        loop {
            let e: f64 = Exp1.sample(rng);
            t += e / self.peak;
            if self.flat || rng.uniform() * self.peak < self.rate_at(t) {
                return Some(t - now);
            }
        }
    }
}

pub fn sample_interarrival(spec: &ArrivalSpec, now: Minutes, rng: &mut RandomStream) -> Option<Minutes> {
    ArrivalProcess::new(spec).sample_interarrival(now, rng)
}

fn hour_of_week(t: Minutes) -> usize {
    ((t / 60.0).floor() as u64 % HOURS_PER_WEEK as u64) as usize
}
