use std::ops::Range;

use chrono::NaiveDate;

use crate::data::{
    build_regressors, missing_dates, strip_leap_days, CalendarDay, DailyPanel, DateRange,
    RegressorMatrix, Regressors, SplitSpec, Standardization,
};
use crate::error::{Error, Result};
use crate::glm;

/// A panel ready for calibration: leap days removed, restricted to the
/// in-sample rows followed by the (possibly empty) out-of-sample rows, day
/// index 1 on the first in-sample date, outliers flagged, and regressors
/// standardized on the in-sample rows.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub panel: DailyPanel,
    pub in_sample_range: DateRange,
    pub out_of_sample_range: Option<DateRange>,
    pub in_sample: Range<usize>,
    pub out_of_sample: Range<usize>,
    /// In-sample panel rows flagged as outliers (sorted).
    pub outliers: Vec<usize>,
    pub regressors: RegressorMatrix,
}

impl Prepared {
    pub fn from_split(
        panel: DailyPanel,
        split: &SplitSpec,
        outlier_k: Option<f64>,
    ) -> Result<Self> {
        Self::new(panel, split.in_sample, Some(split.out_of_sample), outlier_k)
    }

    /// `outlier_k = None` disables outlier flagging.
    pub fn new(
        panel: DailyPanel,
        in_sample: DateRange,
        out_of_sample: Option<DateRange>,
        outlier_k: Option<f64>,
    ) -> Result<Self> {
        let panel = strip_leap_days(panel);
        let rows = match out_of_sample {
            Some(os) => {
                let split = SplitSpec::new(in_sample, os)?.resolve(&panel)?;
                split.in_sample.start..split.out_of_sample.end
            }
            None => {
                let missing = missing_dates(&panel, in_sample);
                if !missing.is_empty() {
                    return Err(Error::MissingDates(missing));
                }
                let start = panel.position(in_sample.start).expect("checked");
                start..panel.position(in_sample.end).expect("checked") + 1
            }
        };
        let n = in_sample.days().count();
        let panel = panel.slice(rows).with_first_day(1);
        if n < 10 {
            return Err(Error::InsufficientData(format!("{n} in-sample days")));
        }
        let outliers = match outlier_k {
            Some(k) => glm::flag_outliers(&panel.slice(0..n), k)?,
            None => Vec::new(),
        };
        if !outliers.is_empty() {
            log::info!("{} in-sample outlier(s) flagged", outliers.len());
        }
        let regressors = build_regressors(&panel, 0..n)?;
        Ok(Self {
            out_of_sample: n..panel.len(),
            panel,
            in_sample_range: in_sample,
            out_of_sample_range: out_of_sample,
            in_sample: 0..n,
            outliers,
            regressors,
        })
    }

    pub fn n(&self) -> usize {
        self.in_sample.len()
    }

    pub fn n_star(&self) -> usize {
        self.out_of_sample.len()
    }

    pub fn in_sample_panel(&self) -> DailyPanel {
        self.panel.slice(self.in_sample.clone())
    }

    pub fn outlier_dates(&self) -> Vec<NaiveDate> {
        self.outliers
            .iter()
            .map(|&r| self.panel.records()[r].date)
            .collect()
    }

    /// Regressors of the whole panel under frozen statistics.
    pub fn regressors_with(&self, standardization: &Standardization) -> RegressorMatrix {
        RegressorMatrix::with_standardization(&self.panel, standardization.clone())
    }

    /// Regressors of in-sample rows `1..n`, aligned with the GLM residuals.
    pub fn residual_regressors<'a>(&self, x: &'a RegressorMatrix) -> &'a [Regressors] {
        &x.rows[1..self.n()]
    }

    pub fn os_regressors<'a>(&self, x: &'a RegressorMatrix) -> &'a [Regressors] {
        &x.rows[self.out_of_sample.clone()]
    }

    pub fn os_dates(&self) -> Vec<NaiveDate> {
        self.out_of_sample
            .clone()
            .map(|r| self.panel.records()[r].date)
            .collect()
    }

    pub fn os_calendars(&self) -> Vec<CalendarDay> {
        self.out_of_sample
            .clone()
            .map(|r| self.panel.calendar(r))
            .collect()
    }

    /// Realized out-of-sample consumption in MWh.
    pub fn os_consumption(&self) -> Vec<f64> {
        self.out_of_sample
            .clone()
            .map(|r| self.panel.records()[r].consumption)
            .collect()
    }

    /// Last in-sample log-consumption, the seed of the forecast recursion.
    pub fn last_log_consumption(&self) -> f64 {
        self.panel.records()[self.n() - 1].consumption.ln()
    }

    pub fn check_calibrated_on(&self, range: &DateRange) -> Result<()> {
        if *range == self.in_sample_range {
            Ok(())
        } else {
            Err(Error::InvalidSplit(format!(
                "model was calibrated on {range}, data prepared for {}",
                self.in_sample_range
            )))
        }
    }
}
