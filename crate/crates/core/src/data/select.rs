use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::records::{Dataset, SeriesKey};
use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionCriteria {
    /// Days with non-zero sales before the first test day (at least).
    pub min_presale_days: usize,
    /// Longest run of zero-sales days after the first sale (at most).
    pub max_zero_gap: usize,
    /// Median sales over the evaluation window must exceed this.
    pub min_median_sales: f64,
    pub top_n_sales: usize,
    pub top_n_revenue: usize,
    /// Share of gap days in the evaluation window must stay below this.
    pub max_missing_frac: f64,
    /// Days before the first test day included in the evaluation window.
    pub lookback_days: usize,
}

impl Default for SelectionCriteria {
    fn default() -> Self {
        Self {
            min_presale_days: 100,
            max_zero_gap: 100,
            min_median_sales: 5.0,
            top_n_sales: 500,
            top_n_revenue: 500,
            max_missing_frac: 0.01,
            lookback_days: 100,
        }
    }
}

impl SelectionCriteria {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_presale_days > 0
            && self.max_zero_gap > 0
            && self.min_median_sales > 0.0
            && self.top_n_sales > 0
            && self.top_n_revenue > 0
            && self.max_missing_frac > 0.0
            && self.lookback_days > 0;
        if ok {
            Ok(())
        } else {
            Err(CoreError::Config(
                "selection thresholds must be positive".into(),
            ))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum Rejection {
    FewSaleDays { days: usize },
    LongZeroRun { days: usize },
    LowMedian { median: f64 },
    SalesRank { rank: usize },
    RevenueRank { rank: usize },
    Missing { fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Sorted by key.
    pub selected: Vec<SeriesKey>,
    pub rejected: BTreeMap<SeriesKey, Vec<Rejection>>,
    pub revenue_checked: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn longest_zero_run_after_first_sale(sales: &[f64]) -> usize {
    let Some(first) = sales.iter().position(|&s| s > 0.0) else {
        return sales.len();
    };
    let (mut best, mut run) = (0, 0);
    for &s in &sales[first..] {
        run = if s > 0.0 { 0 } else { run + 1 };
        best = best.max(run);
    }
    best
}

/// 1-based rank of every key by descending `totals`, ties by key.
fn ranks(totals: &BTreeMap<&SeriesKey, f64>) -> BTreeMap<SeriesKey, usize> {
    let mut order: Vec<_> = totals.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(a.1).then_with(|| a.0.cmp(b.0)));
    order
        .into_iter()
        .enumerate()
        .map(|(i, (k, _))| ((*k).clone(), i + 1))
        .collect()
}

/// Applies every criterion independently over all series and keeps the
/// series passing all of them. The evaluation window runs from
/// `lookback_days` before `test_start` to the end of the data.
pub fn select_series(
    dataset: &Dataset,
    criteria: &SelectionCriteria,
    test_start: NaiveDate,
) -> Result<SelectionReport> {
    criteria.validate()?;
    let ts = dataset.index_of(test_start).ok_or_else(|| {
        CoreError::InsufficientData(format!("test start {test_start} outside the data"))
    })?;
    let window = ts.saturating_sub(criteria.lookback_days)..dataset.n_days;
    let revenue_checked = dataset.fields.price;

    let mut sales_totals = BTreeMap::new();
    let mut revenue_totals = BTreeMap::new();
    let mut rejected: BTreeMap<SeriesKey, Vec<Rejection>> = BTreeMap::new();
    for (key, days) in &dataset.series {
        let mut reasons = Vec::new();
        let sales: Vec<f64> = days.iter().map(|r| r.sales).collect();
        let sale_days = sales[..ts].iter().filter(|&&s| s > 0.0).count();
        if sale_days < criteria.min_presale_days {
            reasons.push(Rejection::FewSaleDays { days: sale_days });
        }
        let run = longest_zero_run_after_first_sale(&sales);
        if run > criteria.max_zero_gap {
            reasons.push(Rejection::LongZeroRun { days: run });
        }
        let med = median(&mut sales[window.clone()].to_vec());
        if med <= criteria.min_median_sales {
            reasons.push(Rejection::LowMedian { median: med });
        }
        let gaps = days[window.clone()].iter().filter(|r| r.missing).count();
        let fraction = gaps as f64 / window.len() as f64;
        if fraction >= criteria.max_missing_frac {
            reasons.push(Rejection::Missing { fraction });
        }
        sales_totals.insert(key, sales[window.clone()].iter().sum::<f64>());
        let mut price = None;
        let mut revenue = 0.0;
        for (t, r) in days.iter().enumerate().take(window.end) {
            price = r.price.or(price);
            if t >= window.start {
                revenue += r.sales * price.unwrap_or(0.0);
            }
        }
        revenue_totals.insert(key, revenue);
        rejected.insert(key.clone(), reasons);
    }
    for (key, rank) in ranks(&sales_totals) {
        if rank > criteria.top_n_sales {
            rejected
                .get_mut(&key)
                .expect("known key")
                .push(Rejection::SalesRank { rank });
        }
    }
    if revenue_checked {
        for (key, rank) in ranks(&revenue_totals) {
            if rank > criteria.top_n_revenue {
                rejected
                    .get_mut(&key)
                    .expect("known key")
                    .push(Rejection::RevenueRank { rank });
            }
        }
    }
    let selected: Vec<SeriesKey> = rejected
        .iter()
        .filter(|(_, r)| r.is_empty())
        .map(|(k, _)| k.clone())
        .collect();
    rejected.retain(|_, r| !r.is_empty());
    if selected.is_empty() {
        log::warn!("series selection kept no series");
    }
    Ok(SelectionReport {
        selected,
        rejected,
        revenue_checked,
    })
}
