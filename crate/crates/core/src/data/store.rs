use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::features::{engineer_features, FeaturePlan, SeriesFeatures};
use super::records::{Dataset, SeriesKey};
use super::windows::{make_window, origin_is_valid, WindowSample};
use crate::error::{CoreError, Result};
use crate::model::CovariateSet;

const MAGIC: &str = "HNAM-STORE";
pub const STORE_VERSION: u32 = 1;

/// Engineered features for a set of series, from which samples are cut on
/// demand by `(series, origin)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStore {
    plan: FeaturePlan,
    covariates: CovariateSet,
    series: Vec<SeriesFeatures>,
    index: BTreeMap<SeriesKey, usize>,
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    version: u32,
    plan: FeaturePlan,
    series: Vec<SeriesHeader>,
}

#[derive(Serialize, Deserialize)]
struct SeriesHeader {
    key: SeriesKey,
    len: usize,
    columns: Vec<String>,
    price_fallback: Vec<usize>,
    unseen_category_days: usize,
}

impl SampleStore {
    pub fn new(plan: FeaturePlan, series: Vec<SeriesFeatures>) -> Self {
        let covariates = plan.covariates();
        let index = series
            .iter()
            .enumerate()
            .map(|(i, s)| (s.key.clone(), i))
            .collect();
        Self {
            plan,
            covariates,
            series,
            index,
        }
    }

    /// Engineers features for `keys` of `dataset`.
    pub fn build(dataset: &Dataset, plan: FeaturePlan, keys: &[SeriesKey]) -> Result<Self> {
        let series = keys
            .iter()
            .map(|k| engineer_features(k, dataset.get(k)?, &plan))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(plan, series))
    }

    pub fn plan(&self) -> &FeaturePlan {
        &self.plan
    }

    pub fn covariates(&self) -> &CovariateSet {
        &self.covariates
    }

    pub fn series(&self) -> &[SeriesFeatures] {
        &self.series
    }

    pub fn keys(&self) -> impl Iterator<Item = &SeriesKey> {
        self.series.iter().map(|s| &s.key)
    }

    pub fn n_days(&self) -> usize {
        self.series
            .iter()
            .map(SeriesFeatures::len)
            .max()
            .unwrap_or(0)
    }

    pub fn get(&self, key: &SeriesKey) -> Result<&SeriesFeatures> {
        self.index
            .get(key)
            .map(|&i| &self.series[i])
            .ok_or_else(|| CoreError::SeriesNotFound(key.to_string()))
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let i = (date - self.plan.start).num_days();
        (i >= 0).then_some(i as usize)
    }

    /// Valid origin dates for `key`.
    pub fn origins(&self, key: &SeriesKey) -> Result<Vec<NaiveDate>> {
        let f = self.get(key)?;
        Ok((0..f.len())
            .filter(|&o| origin_is_valid(f, o, self.plan.history, self.plan.horizon))
            .map(|o| super::records::date_at(self.plan.start, o))
            .collect())
    }

    pub fn sample(&self, key: &SeriesKey, origin: NaiveDate) -> Result<WindowSample> {
        let f = self.get(key)?;
        let not_found = || CoreError::OriginNotFound {
            series: key.to_string(),
            origin: origin.to_string(),
        };
        let o = self.day_index(origin).ok_or_else(not_found)?;
        if !origin_is_valid(f, o, self.plan.history, self.plan.horizon) {
            return Err(not_found());
        }
        make_window(f, &self.covariates, &self.plan, o)
    }

    pub fn sample_at(&self, key: &SeriesKey, origin: usize) -> Result<WindowSample> {
        make_window(self.get(key)?, &self.covariates, &self.plan, origin)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let header = StoreHeader {
            version: STORE_VERSION,
            plan: self.plan.clone(),
            series: self
                .series
                .iter()
                .map(|s| SeriesHeader {
                    key: s.key.clone(),
                    len: s.len(),
                    columns: s.columns.keys().cloned().collect(),
                    price_fallback: (0..s.len()).filter(|&t| s.price_fallback[t]).collect(),
                    unseen_category_days: s.unseen_category_days,
                })
                .collect(),
        };
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for s in &self.series {
            for v in s.sales.iter().chain(s.columns.values().flatten()) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut input = std::io::BufReader::new(input);
        let mut line = String::new();
        input.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(CoreError::Store("not a sample store".into()));
        }
        line.clear();
        input.read_line(&mut line)?;
        let header: StoreHeader = serde_json::from_str(&line)?;
        if header.version != STORE_VERSION {
            return Err(CoreError::Store(format!(
                "store version {} unsupported (expected {STORE_VERSION})",
                header.version
            )));
        }
        let mut read_vec = |n: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 8];
            input
                .read_exact(&mut buf)
                .map_err(|e| CoreError::Store(format!("truncated payload: {e}")))?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        let mut series = Vec::with_capacity(header.series.len());
        for h in header.series {
            let sales = read_vec(h.len)?;
            let mut columns = BTreeMap::new();
            for name in h.columns {
                columns.insert(name, read_vec(h.len)?);
            }
            let mut price_fallback = vec![false; h.len];
            for t in h.price_fallback {
                price_fallback[t] = true;
            }
            series.push(SeriesFeatures {
                key: h.key,
                sales,
                columns,
                price_fallback,
                unseen_category_days: h.unseen_category_days,
            });
        }
        Ok(Self::new(header.plan, series))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }
}
