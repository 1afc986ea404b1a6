use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::PortfolioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Monthly,
}

/// A long–short factor return series. Missing values are `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSeries {
    pub name: String,
    pub frequency: Frequency,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub standardized: bool,
}

impl FactorSeries {
    pub fn new(name: impl Into<String>, frequency: Frequency, dates: Vec<NaiveDate>, values: Vec<f64>) -> Self {
        assert_eq!(dates.len(), values.len());
        Self {
            name: name.into(),
            frequency,
            dates,
            values,
            standardized: false,
        }
    }

    pub fn present(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|v| v.is_finite())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample variance (denominator `n - 1`) over present values.
    pub fn sample_variance(&self) -> Option<f64> {
        let xs: Vec<f64> = self.present().collect();
        sample_variance(&xs)
    }

    /// Scales every value by `a`.
    pub fn scaled(&self, a: f64) -> FactorSeries {
        FactorSeries {
            values: self.values.iter().map(|v| v * a).collect(),
            ..self.clone()
        }
    }
}

pub(crate) fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Some(xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Days per month used to scale mean daily returns.
pub const TRADING_DAYS_PER_MONTH: f64 = 21.0;

/// One value per calendar month: 21 × the mean of the month's present daily
/// returns, dated at the month's last date in the series. A month whose
/// days are all missing stays missing.
pub fn aggregate_daily_to_monthly(series: &FactorSeries) -> FactorSeries {
    let mut dates = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < series.dates.len() {
        let key = (series.dates[i].year(), series.dates[i].month());
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut j = i;
        while j < series.dates.len() && (series.dates[j].year(), series.dates[j].month()) == key {
            if series.values[j].is_finite() {
                sum += series.values[j];
                count += 1;
            }
            j += 1;
        }
        dates.push(series.dates[j - 1]);
        values.push(if count == 0 {
            f64::NAN
        } else {
            TRADING_DAYS_PER_MONTH * (sum / count as f64)
        });
        i = j;
    }
    FactorSeries {
        name: series.name.clone(),
        frequency: Frequency::Monthly,
        dates,
        values,
        standardized: false,
    }
}

/// Divides by the sample standard deviation without removing the mean.
pub fn standardize(series: &FactorSeries) -> Result<FactorSeries, PortfolioError> {
    let xs: Vec<f64> = series.present().collect();
    let var = sample_variance(&xs).ok_or_else(|| PortfolioError::TooFewObservations(series.name.clone()))?;
    if !(var > 0.0) {
        return Err(PortfolioError::ZeroVariance(series.name.clone()));
    }
    let mut out = series.scaled(1.0 / var.sqrt());
    out.standardized = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn days(year: i32, month: u32, n: usize) -> Vec<NaiveDate> {
        (1..=n as u32).map(|d| NaiveDate::from_ymd_opt(year, month, d).unwrap()).collect()
    }

    #[test]
    fn nineteen_days_of_ten_bp() {
        let s = FactorSeries::new("f", Frequency::Daily, days(2020, 3, 19), vec![0.001; 19]);
        let m = aggregate_daily_to_monthly(&s);
        assert_eq!(m.values.len(), 1);
        assert!((m.values[0] - 0.021).abs() < 1e-15);
        assert_eq!(m.dates[0], NaiveDate::from_ymd_opt(2020, 3, 19).unwrap());
    }

    #[test]
    fn single_day_and_all_missing_months() {
        let mut dates = days(2020, 1, 1);
        dates.extend(days(2020, 2, 3));
        let s = FactorSeries::new("f", Frequency::Daily, dates, vec![0.013, f64::NAN, f64::NAN, f64::NAN]);
        let m = aggregate_daily_to_monthly(&s);
        assert_eq!(m.values[0], 21.0 * 0.013);
        assert!(m.values[1].is_nan());
    }

    #[test]
    fn standardize_cases() {
        let d = days(2020, 1, 2);
        let s = standardize(&FactorSeries::new("f", Frequency::Monthly, d.clone(), vec![1.0, -1.0])).unwrap();
        assert!((s.sample_variance().unwrap() - 1.0).abs() < 1e-12);
        assert!(s.standardized);
        let again = standardize(&s).unwrap();
        assert!(again.values.iter().zip(&s.values).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(matches!(
            standardize(&FactorSeries::new("c", Frequency::Monthly, d.clone(), vec![2.0, 2.0])),
            Err(PortfolioError::ZeroVariance(_))
        ));
        assert!(matches!(
            standardize(&FactorSeries::new("c", Frequency::Monthly, d[..1].to_vec(), vec![2.0])),
            Err(PortfolioError::TooFewObservations(_))
        ));
    }
}
