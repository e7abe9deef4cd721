//! Forecast computation over an immutable snapshot and sample store, plus
//! the adjustment state derived from the log.

use std::collections::BTreeMap;
use std::path::Path;

use hnam_core::data::features::MISSING;
use hnam_core::data::records::date_at;
use hnam_core::data::SampleStore;
use hnam_core::model::{load_model, ComposedForecast, HnamModel};
use sha2::{Digest, Sha256};

use crate::adjust::{apply_all, recompose, Adjustment, AdjustmentLog};
use crate::api::{ForecastResponse, MetaResponse, SeriesEntry, SeriesResponse, API_VERSION};
use crate::error::{ErrorClass, Result, ServiceError};
use crate::scenario::{apply_overrides, ForecastSource};

pub struct ForecastEngine {
    model: HnamModel,
    store: SampleStore,
    snapshot_hash: String,
}

impl ForecastEngine {
    pub fn new(model: HnamModel, store: SampleStore, snapshot_hash: String) -> Result<Self> {
        let (plan, config) = (store.plan(), model.config());
        if plan.history != config.history || plan.horizon != config.horizon {
            return Err(ServiceError::new(
                ErrorClass::SpecMismatch,
                format!(
                    "store windows {}+{} differ from model windows {}+{}",
                    plan.history, plan.horizon, config.history, config.horizon
                ),
            ));
        }
        let diff = hnam_core::train::schema_differences(&config.covariates, store.covariates());
        if !diff.is_empty() {
            return Err(ServiceError::new(ErrorClass::SpecMismatch, diff.join(", ")));
        }
        Ok(Self {
            model,
            store,
            snapshot_hash,
        })
    }

    /// Loads a snapshot file, hashing its bytes, and a store file.
    pub fn open(snapshot: &Path, store: &Path) -> Result<Self> {
        let bytes = std::fs::read(snapshot).map_err(|e| {
            ServiceError::new(ErrorClass::Io, format!("{}: {e}", snapshot.display()))
        })?;
        let hash = hex::encode(Sha256::digest(&bytes));
        let (model, _) = load_model(snapshot)?;
        Self::new(model, SampleStore::load(store)?, hash)
    }

    pub fn model(&self) -> &HnamModel {
        &self.model
    }

    pub fn store(&self) -> &SampleStore {
        &self.store
    }

    pub fn snapshot_hash(&self) -> &str {
        &self.snapshot_hash
    }

    pub fn meta(&self) -> MetaResponse {
        let plan = self.store.plan();
        let mut vocabularies = BTreeMap::new();
        vocabularies.insert("product".to_string(), plan.products.labels().to_vec());
        vocabularies.insert("store".to_string(), plan.stores.labels().to_vec());
        if let Some(v) = &plan.promotion {
            vocabularies.insert(
                hnam_core::data::features::PROMOTION.to_string(),
                v.labels().to_vec(),
            );
        }
        if let Some(v) = &plan.holiday {
            vocabularies.insert(
                hnam_core::data::features::HOLIDAY.to_string(),
                v.labels().to_vec(),
            );
        }
        let config = self.model.config().clone();
        MetaResponse {
            v: API_VERSION,
            snapshot: self.snapshot_hash.clone(),
            hierarchy: config.covariates.hierarchy(),
            covariates: config.covariates.specs().to_vec(),
            config,
            vocabularies,
            start: plan.start,
            n_days: self.store.n_days(),
        }
    }

    pub fn series(&self) -> Result<SeriesResponse> {
        let series = self
            .store
            .keys()
            .map(|k| {
                let origins = self.store.origins(k)?;
                Ok(SeriesEntry {
                    series: k.clone(),
                    first_origin: origins.first().copied(),
                    last_origin: origins.last().copied(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SeriesResponse {
            v: API_VERSION,
            series,
        })
    }

    /// The unadjusted forecast for `source`.
    pub fn compute(&self, source: &ForecastSource) -> Result<ComposedForecast> {
        let mut sample = self.store.sample(&source.series, source.origin)?;
        apply_overrides(
            &mut sample.bundle,
            self.store.covariates(),
            &source.overrides,
        )?;
        Ok(self.model.forecast(&sample.bundle)?)
    }

    pub fn id(&self, source: &ForecastSource) -> String {
        source.id(&self.snapshot_hash)
    }

    /// Response for `source` with the logged adjustments applied.
    pub fn respond(
        &self,
        source: &ForecastSource,
        log: &AdjustmentLog,
    ) -> Result<ForecastResponse> {
        let adjustments = log.for_forecast(&self.id(source)).cloned().collect();
        self.respond_with(source, adjustments)
    }

    /// Response for `source` with `adjustments` applied in order.
    pub fn respond_with(
        &self,
        source: &ForecastSource,
        adjustments: Vec<Adjustment>,
    ) -> Result<ForecastResponse> {
        let base = self.compute(source)?;
        self.assemble(self.id(source), source, base, adjustments)
    }

    fn assemble(
        &self,
        id: String,
        source: &ForecastSource,
        base: ComposedForecast,
        adjustments: Vec<Adjustment>,
    ) -> Result<ForecastResponse> {
        let forecast = apply_all(&base, &adjustments)?;
        let features = self.store.get(&source.series)?;
        let o = self
            .store
            .day_index(source.origin)
            .expect("origin validated by compute");
        let horizon = base.horizon();
        let missing = features.column(MISSING)?;
        let actuals = (o..o + horizon)
            .map(|d| (missing[d] == 0.0).then(|| features.sales[d]))
            .collect();
        Ok(ForecastResponse {
            v: API_VERSION,
            id,
            series: source.series.clone(),
            origin: source.origin,
            dates: (o..o + horizon)
                .map(|d| date_at(self.store.plan().start, d))
                .collect(),
            overrides: source.overrides.clone(),
            original: (!adjustments.is_empty()).then_some(base),
            forecast,
            adjustments,
            actuals,
        })
    }

    /// Validates `adjustment` on top of the current state, logs it and
    /// returns the new state.
    pub fn adjust(
        &self,
        source: &ForecastSource,
        adjustment: Adjustment,
        log: &mut AdjustmentLog,
    ) -> Result<ForecastResponse> {
        let id = self.id(source);
        let base = self.compute(source)?;
        let mut adjustments: Vec<Adjustment> = log.for_forecast(&id).cloned().collect();
        recompose(&apply_all(&base, &adjustments)?, &adjustment)?;
        log.append(&id, source, adjustment.clone())?;
        adjustments.push(adjustment);
        self.assemble(id, source, base, adjustments)
    }
}
