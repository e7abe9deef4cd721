//! Demand generator with known additive effects, and scoring of recovered
//! decompositions against them.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use hnam_tensor::SeedTree;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::features::{relative_price, HOLIDAY, PROMOTION, RELATIVE_PRICE, WEEKDAY};
use crate::data::records::date_at;
use crate::data::{DailyRecord, Dataset, Fields, SeriesKey};
use crate::error::{CoreError, Result};
use crate::model::ComposedForecast;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    Additive,
    /// Effects scale the running total; the emitted decomposition
    /// attributes each factor's increment in hierarchy order.
    Multiplicative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_series: usize,
    pub n_days: usize,
    pub start: NaiveDate,
    /// Base levels are log-uniform in this range.
    pub base_range: (f64, f64),
    /// Nonzero weekday effects, as fractions of base, before sign and
    /// permutation; Monday is the reference with effect 0.
    pub weekday_magnitudes: [f64; 3],
    pub promo_probability: f64,
    /// Per-weekday promotion effects, fractions of base, drawn once for
    /// all series.
    pub promo_range: (f64, f64),
    pub holiday_probability: f64,
    /// Holiday effect without / with a concurrent promotion, fractions of
    /// base.
    pub holiday_effect: [f64; 2],
    pub price_elasticity: f64,
    pub base_price_range: (f64, f64),
    pub price_episode_probability: f64,
    pub price_change_range: (f64, f64),
    pub price_episode_days: (usize, usize),
    /// Noise std as a fraction of base.
    pub noise: f64,
    pub composition: Composition,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_series: 20,
            n_days: 900,
            start: NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date"),
            base_range: (10.0, 100.0),
            weekday_magnitudes: [0.1, 0.2, 0.3],
            promo_probability: 0.1,
            promo_range: (0.2, 0.6),
            holiday_probability: 0.03,
            holiday_effect: [0.5, 0.2],
            price_elasticity: -2.0,
            base_price_range: (1.0, 10.0),
            price_episode_probability: 0.05,
            price_change_range: (-0.25, 0.15),
            price_episode_days: (3, 10),
            noise: 0.1,
            composition: Composition::Additive,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let ok = self.n_series > 0
            && self.n_days > 0
            && self.base_range.0 > 0.0
            && self.base_range.0 <= self.base_range.1
            && prob(self.promo_probability)
            && prob(self.holiday_probability)
            && prob(self.price_episode_probability)
            && self.promo_range.0 <= self.promo_range.1
            && self.price_elasticity < 0.0
            && self.base_price_range.0 > 0.0
            && self.base_price_range.0 <= self.base_price_range.1
            && self.price_change_range.0 > -1.0
            && self.price_change_range.0 < self.price_change_range.1
            && 1 <= self.price_episode_days.0
            && self.price_episode_days.0 <= self.price_episode_days.1
            && self.noise >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(CoreError::Config("invalid synthetic spec".into()))
        }
    }
}

/// Exact components of one generated day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthDay {
    pub level: f64,
    pub weekday: f64,
    pub price: f64,
    pub promotion: f64,
    pub holiday: f64,
    pub noise: f64,
    pub relative_price: f64,
    pub promotion_active: bool,
    pub holiday_active: bool,
}

impl TruthDay {
    /// Level plus effects, summed in hierarchy order.
    pub fn clean(&self) -> f64 {
        self.level + self.weekday + self.price + self.promotion + self.holiday
    }

    /// Sales before truncation at zero.
    pub fn pre_truncation(&self) -> f64 {
        self.clean() + self.noise
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTruth {
    pub key: SeriesKey,
    pub base: f64,
    /// Indexed by weekday (Monday = 0).
    pub weekday_effect: [f64; 7],
    /// Additive promotion effect by weekday.
    pub promo_effect: [f64; 7],
    pub days: Vec<TruthDay>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub start: NaiveDate,
    pub series: BTreeMap<SeriesKey, SeriesTruth>,
}

pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        (rng.random_range(lo.ln()..hi.ln())).exp()
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn price_path<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> Vec<f64> {
    let base = uniform(rng, spec.base_price_range);
    let mut out = Vec::with_capacity(spec.n_days);
    let (mut remaining, mut factor) = (0usize, 0.0);
    for _ in 0..spec.n_days {
        if remaining == 0 && rng.random_bool(spec.price_episode_probability) {
            remaining = rng.random_range(spec.price_episode_days.0..=spec.price_episode_days.1);
            factor = uniform(rng, spec.price_change_range);
        }
        if remaining > 0 {
            out.push(base * (1.0 + factor));
            remaining -= 1;
        } else {
            out.push(base);
        }
    }
    out
}

/// Generates the dataset and the per-day decomposition behind it.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let seeds = SeedTree::new(spec.seed);
    let mut global = seeds.rng("global");
    let promo_fraction: [f64; 7] = std::array::from_fn(|_| uniform(&mut global, spec.promo_range));
    let holidays: Vec<bool> = (0..spec.n_days)
        .map(|_| global.random_bool(spec.holiday_probability))
        .collect();
    let mut records = Vec::new();
    let mut truth = BTreeMap::new();
    let mut zero_days = 0usize;
    for s in 0..spec.n_series {
        let mut rng = seeds.indexed("series", s as u64);
        let key = SeriesKey::new(format!("item_{s:03}"), format!("store_{}", s % 3));
        let base = log_uniform(&mut rng, spec.base_range);
        let mut fractions: Vec<f64> = spec
            .weekday_magnitudes
            .iter()
            .flat_map(|&m| [m, -m])
            .collect();
        fractions.shuffle(&mut rng);
        let mut weekday_effect = [0.0; 7];
        for (w, f) in fractions.iter().enumerate() {
            weekday_effect[w + 1] = f * base;
        }
        let promo_effect = promo_fraction.map(|f| f * base);
        let prices = price_path(spec, &mut rng);
        let (rel, _) = relative_price(&prices.iter().map(|&p| Some(p)).collect::<Vec<_>>());
        let noise =
            Normal::new(0.0, spec.noise * base).map_err(|e| CoreError::Config(e.to_string()))?;
        let mut days = Vec::with_capacity(spec.n_days);
        for t in 0..spec.n_days {
            let date = date_at(spec.start, t);
            let wd = crate::data::weekday_index(date) as usize;
            let promo = rng.random_bool(spec.promo_probability);
            let holiday = holidays[t];
            let hol_frac = spec.holiday_effect[promo as usize];
            let day = match spec.composition {
                Composition::Additive => TruthDay {
                    level: base,
                    weekday: weekday_effect[wd],
                    price: spec.price_elasticity * rel[t] * base,
                    promotion: if promo { promo_effect[wd] } else { 0.0 },
                    holiday: if holiday { hol_frac * base } else { 0.0 },
                    noise: 0.0,
                    relative_price: rel[t],
                    promotion_active: promo,
                    holiday_active: holiday,
                },
                Composition::Multiplicative => {
                    let weekday = weekday_effect[wd];
                    let after_wd = base + weekday;
                    let price = after_wd * spec.price_elasticity * rel[t];
                    let after_price = after_wd + price;
                    let promotion = if promo {
                        after_price * promo_fraction[wd]
                    } else {
                        0.0
                    };
                    let after_promo = after_price + promotion;
                    TruthDay {
                        level: base,
                        weekday,
                        price,
                        promotion,
                        holiday: if holiday { after_promo * hol_frac } else { 0.0 },
                        noise: 0.0,
                        relative_price: rel[t],
                        promotion_active: promo,
                        holiday_active: holiday,
                    }
                }
            };
            let day = TruthDay {
                noise: noise.sample(&mut rng),
                ..day
            };
            let sales = day.pre_truncation().max(0.0);
            zero_days += usize::from(sales == 0.0);
            let mut rec = DailyRecord::new(date, sales);
            rec.price = Some(prices[t]);
            rec.promotion = Some(if promo { "1" } else { "0" }.to_string());
            rec.holiday = holiday.then(|| "holiday".to_string());
            records.push((key.clone(), rec));
            days.push(day);
        }
        truth.insert(
            key.clone(),
            SeriesTruth {
                key,
                base,
                weekday_effect,
                promo_effect,
                days,
            },
        );
    }
    if zero_days * 2 > spec.n_series * spec.n_days {
        log::warn!("synthetic spec truncates {zero_days} days to zero sales");
    }
    let fields = Fields {
        price: true,
        promotion: true,
        holiday: true,
        snap: false,
    };
    Ok(SyntheticData {
        dataset: Dataset::align(records, fields, None)?,
        truth: GroundTruth {
            start: spec.start,
            series: truth,
        },
    })
}

impl GroundTruth {
    pub fn day(&self, key: &SeriesKey, date: NaiveDate) -> Option<&TruthDay> {
        let i = (date - self.start).num_days();
        if i < 0 {
            return None;
        }
        self.series.get(key)?.days.get(i as usize)
    }

    /// The exact decomposition over a horizon, in forecast form.
    pub fn oracle_forecast(
        &self,
        key: &SeriesKey,
        origin: NaiveDate,
        horizon: usize,
    ) -> Result<ComposedForecast> {
        let mut level = Vec::new();
        let mut effects = vec![Vec::new(); 4];
        let mut raw = vec![Vec::new(); 4];
        for h in 0..horizon {
            let d = self
                .day(key, origin + chrono::Days::new(h as u64))
                .ok_or_else(|| CoreError::SeriesNotFound(format!("{key} at {origin}+{h}")))?;
            level.push(d.level);
            for (i, (e, r)) in [
                (
                    d.weekday,
                    crate::data::weekday_index(origin + chrono::Days::new(h as u64)) as f64,
                ),
                (d.price, d.relative_price),
                (d.promotion, d.promotion_active as u8 as f64),
                (d.holiday, d.holiday_active as u8 as f64),
            ]
            .into_iter()
            .enumerate()
            {
                effects[i].push(e);
                raw[i].push(r);
            }
        }
        let mut fc = ComposedForecast {
            covariates: [WEEKDAY, RELATIVE_PRICE, PROMOTION, HOLIDAY]
                .map(String::from)
                .to_vec(),
            level,
            effects,
            coefficients: Vec::new(),
            values: Vec::new(),
            raw_values: raw,
            prediction: Vec::new(),
            truncated_prediction: Vec::new(),
        };
        fc.recompose();
        Ok(fc)
    }

    /// Long-format table of every component per series and day.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "product_id",
            "store_id",
            "date",
            "level",
            "weekday",
            "price",
            "promotion",
            "holiday",
            "noise",
            "relative_price",
            "promotion_active",
            "holiday_active",
        ])?;
        for s in self.series.values() {
            for (t, d) in s.days.iter().enumerate() {
                w.write_record([
                    s.key.product_id.clone(),
                    s.key.store_id.clone(),
                    date_at(self.start, t).to_string(),
                    d.level.to_string(),
                    d.weekday.to_string(),
                    d.price.to_string(),
                    d.promotion.to_string(),
                    d.holiday.to_string(),
                    d.noise.to_string(),
                    d.relative_price.to_string(),
                    (d.promotion_active as u8).to_string(),
                    (d.holiday_active as u8).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// How well forecast decompositions match the generator's effects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Spearman correlation of mean predicted vs true weekday effects,
    /// averaged over series; 0 where undefined.
    pub weekday_rank_correlation: f64,
    /// Mean absolute deviation of the mean predicted promotion effect per
    /// (series, weekday) from the truth.
    pub promo_mad: f64,
    /// Mean true promotion magnitude over the same cells.
    pub promo_magnitude: f64,
    pub price_sign_agreement: f64,
    pub price_cells: usize,
    /// `1 - SSE / SST` of predicted level against the true level.
    pub level_r2: f64,
    pub n_cells: usize,
}

impl RecoveryReport {
    pub fn promo_relative_mad(&self) -> f64 {
        self.promo_mad / self.promo_magnitude
    }
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for k in i..=j {
            out[order[k]] = avg;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation of average ranks; 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Price cells count when the true relative price deviates by more than
/// this.
pub const PRICE_THRESHOLD: f64 = 0.05;

/// Scores `(series, origin, forecast)` triples. Effects are looked up by
/// covariate name; absent covariates count as zero effect.
pub fn score_recovery<'a>(
    forecasts: impl IntoIterator<Item = (&'a SeriesKey, NaiveDate, &'a ComposedForecast)>,
    truth: &GroundTruth,
) -> Result<RecoveryReport> {
    let mut weekday: BTreeMap<&SeriesKey, [Mean; 7]> = BTreeMap::new();
    let mut promo: BTreeMap<(&SeriesKey, usize), (Mean, Mean)> = BTreeMap::new();
    let (mut price_agree, mut price_cells) = (0usize, 0usize);
    let mut levels: Vec<(f64, f64)> = Vec::new();
    for (key, origin, fc) in forecasts {
        let series = truth
            .series
            .get(key)
            .ok_or_else(|| CoreError::SeriesNotFound(key.to_string()))?;
        let effect = |name: &str, h: usize| fc.effect_row(name).map_or(0.0, |r| r[h]);
        for h in 0..fc.horizon() {
            let date = origin + chrono::Days::new(h as u64);
            let d = truth
                .day(key, date)
                .ok_or_else(|| CoreError::Evaluation(format!("no truth for {key} on {date}")))?;
            let wd = crate::data::weekday_index(date) as usize;
            weekday.entry(&series.key).or_default()[wd].add(effect(WEEKDAY, h));
            if d.promotion_active {
                let e = promo.entry((&series.key, wd)).or_default();
                e.0.add(effect(PROMOTION, h));
                e.1.add(d.promotion);
            }
            if d.relative_price.abs() > PRICE_THRESHOLD {
                price_cells += 1;
                let p = effect(RELATIVE_PRICE, h);
                price_agree += usize::from(p != 0.0 && p.signum() == d.price.signum());
            }
            levels.push((fc.level[h], d.level));
        }
    }
    let mut corr = Mean::default();
    for (key, means) in &weekday {
        let pairs: Vec<(f64, f64)> = (0..7)
            .filter_map(|w| {
                means[w]
                    .get()
                    .map(|m| (m, truth.series[*key].weekday_effect[w]))
            })
            .collect();
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        corr.add(if p.len() >= 2 { spearman(&p, &t) } else { 0.0 });
    }
    let (mut mad, mut mag) = (Mean::default(), Mean::default());
    for (pred, actual) in promo.values() {
        let (p, a) = (
            pred.get().expect("non-empty"),
            actual.get().expect("non-empty"),
        );
        mad.add((p - a).abs());
        mag.add(a.abs());
    }
    let mean_level = levels.iter().map(|l| l.1).sum::<f64>() / levels.len().max(1) as f64;
    let sse: f64 = levels.iter().map(|(p, t)| (p - t) * (p - t)).sum();
    let sst: f64 = levels
        .iter()
        .map(|(_, t)| (t - mean_level) * (t - mean_level))
        .sum();
    Ok(RecoveryReport {
        weekday_rank_correlation: corr.get().unwrap_or(0.0),
        promo_mad: mad.get().unwrap_or(0.0),
        promo_magnitude: mag.get().unwrap_or(0.0),
        price_sign_agreement: if price_cells == 0 {
            0.0
        } else {
            price_agree as f64 / price_cells as f64
        },
        price_cells,
        level_r2: if sst > 0.0 { 1.0 - sse / sst } else { 0.0 },
        n_cells: levels.len(),
    })
}
