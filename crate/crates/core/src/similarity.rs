//! Fuzzy similarity measures between a decision template and a decision
//! profile.
//!
//! Both arguments are treated as fuzzy sets over the `K x C` cells of the
//! matrices. `sup`/`inf` are realized as exact `max`/`min` over all cells, and
//! cells are visited in row-major order so results are deterministic.
//!
//! `N` is traditionally described as a Euclidean distance; it is actually one
//! minus the mean *squared* cell difference, and is implemented that way.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::ProbMatrix;

/// The six template/profile comparison measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasureKind {
    /// Ratio of summed cellwise minima to summed cellwise maxima.
    S1,
    /// One minus the largest cellwise absolute difference.
    S2,
    /// Inclusion of the template in the profile: summed minima over template mass.
    I1,
    /// Smallest cellwise `max(1 - dt, dp)`.
    I2,
    /// Consistency: largest cellwise minimum.
    C,
    /// One minus the mean squared cellwise difference.
    N,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 6] = [
        MeasureKind::S1,
        MeasureKind::S2,
        MeasureKind::I1,
        MeasureKind::I2,
        MeasureKind::C,
        MeasureKind::N,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            MeasureKind::S1 => "S1",
            MeasureKind::S2 => "S2",
            MeasureKind::I1 => "I1",
            MeasureKind::I2 => "I2",
            MeasureKind::C => "C",
            MeasureKind::N => "N",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeasureKind::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown measure {s:?}; valid measures are S1, S2, I1, I2, C, N"
                ))
            })
    }
}

fn check_shapes(dt: &ProbMatrix, dp: &ProbMatrix) -> Result<()> {
    if dt.shape() != dp.shape() {
        return Err(Error::shape(format!(
            "template is {}x{} but profile is {}x{}",
            dt.rows(),
            dt.cols(),
            dp.rows(),
            dp.cols()
        )));
    }
    Ok(())
}

fn cells<'a>(dt: &'a ProbMatrix, dp: &'a ProbMatrix) -> impl Iterator<Item = (f64, f64)> + 'a {
    dt.as_slice().iter().copied().zip(dp.as_slice().iter().copied())
}

/// Correctly rounded sum of finite values (Shewchuk's algorithm with
/// round-half-even correction on the final partials).
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }

    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

pub fn s1(dt: &ProbMatrix, dp: &ProbMatrix) -> Result<f64> {
    check_shapes(dt, dp)?;
    let num = exact_sum(cells(dt, dp).map(|(a, b)| a.min(b)));
    let den = exact_sum(cells(dt, dp).map(|(a, b)| a.max(b)));
    if den == 0.0 {
        return Err(Error::Degenerate("S1 undefined for two all-zero matrices".into()));
    }
    Ok(num / den)
}

pub fn s2(dt: &ProbMatrix, dp: &ProbMatrix) -> Result<f64> {
    check_shapes(dt, dp)?;
    let sup = cells(dt, dp).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(1.0 - sup)
}

pub fn i1(dt: &ProbMatrix, dp: &ProbMatrix) -> Result<f64> {
    check_shapes(dt, dp)?;
    let num = exact_sum(cells(dt, dp).map(|(a, b)| a.min(b)));
    let den = exact_sum(dt.as_slice().iter().copied());
    if den == 0.0 {
        return Err(Error::Degenerate("I1 undefined for an all-zero template".into()));
    }
    Ok(num / den)
}

pub fn i2(dt: &ProbMatrix, dp: &ProbMatrix) -> Result<f64> {
    check_shapes(dt, dp)?;
    Ok(cells(dt, dp).fold(1.0f64, |m, (a, b)| m.min((1.0 - a).max(b))))
}

pub fn c_measure(dt: &ProbMatrix, dp: &ProbMatrix) -> Result<f64> {
    check_shapes(dt, dp)?;
    Ok(cells(dt, dp).fold(0.0f64, |m, (a, b)| m.max(a.min(b))))
}

pub fn n_measure(dt: &ProbMatrix, dp: &ProbMatrix) -> Result<f64> {
    check_shapes(dt, dp)?;
    let sq = exact_sum(cells(dt, dp).map(|(a, b)| (a - b) * (a - b)));
    Ok(1.0 - sq / (dt.rows() * dt.cols()) as f64)
}

/// Evaluate `kind` on a template/profile pair.
pub fn score(kind: MeasureKind, dt: &ProbMatrix, dp: &ProbMatrix) -> Result<f64> {
    match kind {
        MeasureKind::S1 => s1(dt, dp),
        MeasureKind::S2 => s2(dt, dp),
        MeasureKind::I1 => i1(dt, dp),
        MeasureKind::I2 => i2(dt, dp),
        MeasureKind::C => c_measure(dt, dp),
        MeasureKind::N => n_measure(dt, dp),
    }
}
