use serde::{Deserialize, Serialize};

use super::{check_finite, StatsError};

/// Box-whisker summary. Quartiles interpolate linearly between closest ranks;
/// whiskers reach the most extreme values within 1.5 IQR of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumberSummary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
}

impl FiveNumberSummary {
    pub const CSV_HEADER: &'static str =
        "group,min,whisker_low,q1,median,q3,whisker_high,max,outliers";

    pub fn csv_row(&self, group: &str) -> String {
        use crate::reputation::format_full as f;
        format!(
            "{group},{},{},{},{},{},{},{},{}",
            f(self.min),
            f(self.whisker_low),
            f(self.q1),
            f(self.median),
            f(self.q3),
            f(self.whisker_high),
            f(self.max),
            self.outliers
        )
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn five_number_summary(values: &[f64]) -> Result<FiveNumberSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample("summary"));
    }
    check_finite(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let reach = 1.5 * (q3 - q1);
    let (low_fence, high_fence) = (q1 - reach, q3 + reach);

    let inside = || {
        sorted
            .iter()
            .copied()
            .filter(|&v| v >= low_fence && v <= high_fence)
    };
    // q1 and q3 are interpolated between neighbouring data points, so the
    // nearest point on the inner side of each lies within its fence.
    let whisker_low = inside().fold(f64::INFINITY, f64::min);
    let whisker_high = inside().fold(f64::NEG_INFINITY, f64::max);
    let outliers = sorted.len() - inside().count();

    Ok(FiveNumberSummary {
        count: sorted.len(),
        min: sorted[0],
        q1,
        median,
        q3,
        max: sorted[sorted.len() - 1],
        whisker_low,
        whisker_high,
        outliers,
    })
}
