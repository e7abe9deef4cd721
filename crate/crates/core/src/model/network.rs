//! Parameter layout and forward pass of the hierarchical additive model.
//!
//! A level network attends from the horizon (static + non-causal
//! information) over the history (static + non-causal + past). One
//! coefficient network per causal covariate does the same with the causal
//! rows of rank `<= i` added to both sides and the level embedding added to
//! its queries. Effects are coefficients times transformed covariate values.

use std::sync::Arc;

use hnam_tensor::{Graph, ParamId, ParamStore, SeedTree, Tensor, Var};
use rand_chacha::ChaCha8Rng;

use super::config::HnamConfig;
use super::covariates::{CovariateBundle, CovariateKind, DType};
use super::forecast::ComposedForecast;
use super::transform::{transform_t, TransformStats};
use crate::error::{CoreError, Result};

/// Whether dropout is active; training carries the dropout stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

#[derive(Clone, Copy, Debug)]
struct LinearIds {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct NormIds {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Copy, Debug)]
enum EmbedIds {
    Table(ParamId),
    Projection(LinearIds),
}

#[derive(Clone, Copy, Debug)]
struct TemporalConvIds {
    conv: LinearIds,
    proj: LinearIds,
}

/// Everything an attention network owns apart from its output heads.
#[derive(Clone, Copy, Debug)]
struct BlockIds {
    q_norm: NormIds,
    kv_norm: NormIds,
    q: TemporalConvIds,
    k: TemporalConvIds,
    v: TemporalConvIds,
    mlp_norm: NormIds,
    fc1: LinearIds,
    fc2: LinearIds,
}

#[derive(Clone, Debug)]
struct ModelIds {
    /// Aligned with `config.covariates.specs()`.
    embeds: Vec<EmbedIds>,
    level: BlockIds,
    level_head: LinearIds,
    level_emb_head: LinearIds,
    coef: Vec<BlockIds>,
    coef_heads: Vec<LinearIds>,
}

/// Trainable model: configuration, fitted value transformation and
/// parameters.
#[derive(Clone, Debug)]
pub struct HnamModel {
    config: HnamConfig,
    stats: TransformStats,
    params: ParamStore,
    ids: ModelIds,
    root_seed: u64,
}

struct Builder<'a> {
    store: ParamStore,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<LinearIds> {
        let w = hnam_tensor::uniform_fan_in(self.rng, &[fan_in, fan_out], fan_in);
        Ok(LinearIds {
            weight: self.store.add(format!("{name}.weight"), w)?,
            bias: self
                .store
                .add(format!("{name}.bias"), Tensor::zeros(&[fan_out]))?,
        })
    }

    fn norm(&mut self, name: &str, d: usize) -> Result<NormIds> {
        Ok(NormIds {
            gamma: self
                .store
                .add(format!("{name}.gamma"), Tensor::full(&[d], 1.0))?,
            beta: self
                .store
                .add(format!("{name}.beta"), Tensor::zeros(&[d]))?,
        })
    }

    fn temporal_conv(&mut self, name: &str, d: usize, hidden: usize) -> Result<TemporalConvIds> {
        let w = hnam_tensor::uniform_fan_in(self.rng, &[3, d, hidden], 3 * d);
        let conv = LinearIds {
            weight: self.store.add(format!("{name}_conv.weight"), w)?,
            bias: self
                .store
                .add(format!("{name}_conv.bias"), Tensor::zeros(&[hidden]))?,
        };
        let proj = self.linear(&format!("{name}_proj"), hidden, d)?;
        Ok(TemporalConvIds { conv, proj })
    }

    fn block(&mut self, prefix: &str, d: usize, hidden: usize) -> Result<BlockIds> {
        Ok(BlockIds {
            q_norm: self.norm(&format!("{prefix}.q_norm"), d)?,
            kv_norm: self.norm(&format!("{prefix}.kv_norm"), d)?,
            q: self.temporal_conv(&format!("{prefix}.attn.q"), d, hidden)?,
            k: self.temporal_conv(&format!("{prefix}.attn.k"), d, hidden)?,
            v: self.temporal_conv(&format!("{prefix}.attn.v"), d, hidden)?,
            mlp_norm: self.norm(&format!("{prefix}.mlp_norm"), d)?,
            fc1: self.linear(&format!("{prefix}.mlp.fc1"), d, hidden)?,
            fc2: self.linear(&format!("{prefix}.mlp.fc2"), hidden, d)?,
        })
    }
}

/// Per-kind embedded streams, each `[batch, time, d]`.
pub struct Streams {
    pub statics: Option<Var>,
    pub non_causal: Option<Var>,
    pub past: Option<Var>,
    pub causal: Vec<Var>,
}

/// Graph outputs of a forward pass.
pub struct ForwardOutput {
    /// `[batch, horizon]`, scaled units.
    pub level: Var,
    /// `[batch, horizon, d]`.
    pub level_emb: Var,
    /// Per causal covariate, `[batch, horizon, width]`.
    pub coefficients: Vec<Var>,
    /// Per causal covariate, `[batch, horizon]`.
    pub effects: Vec<Var>,
    /// `[batch, horizon]`, scaled units.
    pub prediction: Var,
}

/// Bundles packed into row-major `[batch, time]` arrays.
pub struct Batch {
    pub size: usize,
    history: usize,
    horizon: usize,
    /// Aligned with `config.covariates.specs()`.
    rows: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
    /// Per causal covariate `[batch, horizon, width]`.
    transformed: Vec<Tensor>,
    transformed_rows: Vec<Vec<Vec<Vec<f64>>>>,
    raw_causal: Vec<Vec<Vec<f64>>>,
}

/// Attention-block parameters resolved to graph values; either one
/// network's tensors or several networks' tensors stacked on a group axis.
struct BlockVars {
    q: TcVars,
    k: TcVars,
    v: TcVars,
    mlp_norm: (Var, Var),
    fc1: (Var, Var),
    fc2: (Var, Var),
}

struct TcVars {
    conv: (Var, Var),
    proj: (Var, Var),
}

impl HnamModel {
    pub fn new(config: HnamConfig, stats: TransformStats, root_seed: u64) -> Result<Self> {
        config.validate()?;
        for spec in config.covariates.specs() {
            if !spec.is_categorical() {
                stats.get(&spec.name)?;
            }
        }
        let d = config.embedding_size;
        let hidden = config.hidden_size();
        let mut rng = SeedTree::new(root_seed).rng("init");
        let mut b = Builder {
            store: ParamStore::new(),
            rng: &mut rng,
        };
        let mut embeds = Vec::new();
        for spec in config.covariates.specs() {
            let name = format!("embed.{}", spec.name);
            embeds.push(match spec.dtype {
                DType::Categorical { cardinality } => {
                    let t = hnam_tensor::normal(b.rng, &[cardinality, d], 1.0 / (d as f64).sqrt());
                    EmbedIds::Table(b.store.add(format!("{name}.table"), t)?)
                }
                DType::Continuous => EmbedIds::Projection(b.linear(&name, 1, d)?),
            });
        }
        let level = b.block("level", d, hidden)?;
        let level_head = b.linear("level.head", d, 1)?;
        let level_emb_head = b.linear("level.emb_head", d, d)?;
        let mut coef = Vec::new();
        let mut coef_heads = Vec::new();
        for (i, spec) in config.covariates.causal().iter().enumerate() {
            coef.push(b.block(&format!("coef.{i}"), d, hidden)?);
            coef_heads.push(b.linear(
                &format!("coef.{i}.head"),
                d,
                spec.dtype.transformed_width(),
            )?);
        }
        let params = b.store;
        Ok(Self {
            config,
            stats,
            params,
            ids: ModelIds {
                embeds,
                level,
                level_head,
                level_emb_head,
                coef,
                coef_heads,
            },
            root_seed,
        })
    }

    pub fn config(&self) -> &HnamConfig {
        &self.config
    }

    pub fn stats(&self) -> &TransformStats {
        &self.stats
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn n_causal(&self) -> usize {
        self.ids.coef.len()
    }

    /// Replaces every parameter by name from `store`; names and shapes must
    /// match exactly.
    pub fn load_params(&mut self, store: &ParamStore) -> Result<()> {
        if store.len() != self.params.len() {
            return Err(CoreError::SpecMismatch(format!(
                "snapshot has {} parameters, architecture expects {}",
                store.len(),
                self.params.len()
            )));
        }
        for (_, p) in store.iter() {
            let id = self.params.id(&p.name).ok_or_else(|| {
                CoreError::SpecMismatch(format!("unexpected parameter `{}`", p.name))
            })?;
            self.params.set(id, p.value().clone())?;
        }
        Ok(())
    }

    // ---- batching -------------------------------------------------------

    pub fn batch(&self, bundles: &[&CovariateBundle]) -> Result<Batch> {
        let set = &self.config.covariates;
        let (history, horizon) = (self.config.history, self.config.horizon);
        for b in bundles {
            if b.history != history || b.horizon != horizon {
                return Err(CoreError::Config(format!(
                    "bundle window {}+{} does not match model {}+{}",
                    b.history, b.horizon, history, horizon
                )));
            }
            b.validate(set)?;
        }
        let size = bundles.len();
        let t = history + horizon;
        let mut rows = Vec::with_capacity(set.specs().len());
        for spec in set.specs() {
            let pos = set
                .of_kind(spec.kind)
                .position(|s| s.name == spec.name)
                .expect("spec of its own kind");
            let mut row = Vec::with_capacity(size * t);
            for b in bundles {
                row.extend_from_slice(&b.rows(spec.kind)[pos]);
            }
            rows.push(row);
        }
        let n_c = self.n_causal();
        let mut transformed_rows: Vec<Vec<Vec<Vec<f64>>>> = vec![Vec::with_capacity(size); n_c];
        let mut raw_causal: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(size); n_c];
        for b in bundles {
            let tv = transform_t(set, b, &self.stats)?;
            for (i, rows_i) in tv.into_iter().enumerate() {
                transformed_rows[i].push(rows_i);
                raw_causal[i].push(b.causal[i][history..].to_vec());
            }
        }
        let transformed = set
            .causal()
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let w = spec.dtype.transformed_width();
                let data: Vec<f64> = transformed_rows[i]
                    .iter()
                    .flat_map(|steps| steps.iter().flatten().copied())
                    .collect();
                Tensor::new(vec![size, horizon, w], data)
            })
            .collect::<std::result::Result<_, _>>()?;
        Ok(Batch {
            size,
            history,
            horizon,
            rows,
            scales: bundles.iter().map(|b| b.scale).collect(),
            transformed,
            transformed_rows,
            raw_causal,
        })
    }

    // ---- building blocks ------------------------------------------------

    fn p(&self, g: &Graph, id: ParamId) -> Var {
        g.param(&self.params, id)
    }

    fn lin(&self, g: &Graph, ids: LinearIds) -> (Var, Var) {
        (self.p(g, ids.weight), self.p(g, ids.bias))
    }

    fn block_vars(&self, g: &Graph, ids: &BlockIds) -> BlockVars {
        let tc = |t: &TemporalConvIds| TcVars {
            conv: self.lin(g, t.conv),
            proj: self.lin(g, t.proj),
        };
        BlockVars {
            q: tc(&ids.q),
            k: tc(&ids.k),
            v: tc(&ids.v),
            mlp_norm: (self.p(g, ids.mlp_norm.gamma), self.p(g, ids.mlp_norm.beta)),
            fc1: self.lin(g, ids.fc1),
            fc2: self.lin(g, ids.fc2),
        }
    }

    /// Stacks the same parameter of several networks on a leading axis.
    fn stacked_block_vars(&self, g: &Graph, ids: &[BlockIds]) -> Result<BlockVars> {
        let st = |f: &dyn Fn(&BlockIds) -> ParamId| -> Result<Var> {
            let vars: Vec<Var> = ids.iter().map(|b| self.p(g, f(b))).collect();
            Ok(g.stack(&vars)?)
        };
        let tc = |sel: &dyn Fn(&BlockIds) -> TemporalConvIds| -> Result<TcVars> {
            Ok(TcVars {
                conv: (st(&|b| sel(b).conv.weight)?, st(&|b| sel(b).conv.bias)?),
                proj: (st(&|b| sel(b).proj.weight)?, st(&|b| sel(b).proj.bias)?),
            })
        };
        Ok(BlockVars {
            q: tc(&|b| b.q)?,
            k: tc(&|b| b.k)?,
            v: tc(&|b| b.v)?,
            mlp_norm: (st(&|b| b.mlp_norm.gamma)?, st(&|b| b.mlp_norm.beta)?),
            fc1: (st(&|b| b.fc1.weight)?, st(&|b| b.fc1.bias)?),
            fc2: (st(&|b| b.fc2.weight)?, st(&|b| b.fc2.bias)?),
        })
    }

    /// `x @ W + b` over the trailing axis. A rank-3 `W` applies one matrix
    /// per leading group of `x`.
    fn linear(g: &Graph, x: Var, (w, b): (Var, Var)) -> Result<Var> {
        let wshape = g.shape(w);
        if wshape.len() == 2 {
            let y = g.matmul(x, w)?;
            return Ok(g.add_bias(y, b)?);
        }
        let xs = g.shape(x);
        let groups = xs[0];
        let rows: usize = xs[1..xs.len() - 1].iter().product();
        let flat = g.reshape(x, &[groups, rows, xs[xs.len() - 1]])?;
        let y = g.add_bias(g.matmul(flat, w)?, b)?;
        let mut out_shape = xs[..xs.len() - 1].to_vec();
        out_shape.push(wshape[2]);
        Ok(g.reshape(y, &out_shape)?)
    }

    fn dropout(&self, g: &Graph, x: Var, mode: &mut Mode) -> Result<Var> {
        match mode {
            Mode::Eval => Ok(x),
            Mode::Train(rng) => Ok(g.dropout(x, self.config.dropout, true, &mut **rng)?),
        }
    }

    fn temporal_conv(&self, g: &Graph, x: Var, tc: &TcVars, mode: &mut Mode) -> Result<Var> {
        let h = g.conv1d_k3(x, tc.conv.0, tc.conv.1)?;
        let h = self.dropout(g, g.gelu(h), mode)?;
        Self::linear(g, h, tc.proj)
    }

    fn mlp(&self, g: &Graph, x: Var, bv: &BlockVars, mode: &mut Mode) -> Result<Var> {
        let h = g.gelu(Self::linear(g, x, bv.fc1)?);
        let y = Self::linear(g, h, bv.fc2)?;
        self.dropout(g, y, mode)
    }

    /// Multi-head scaled dot-product attention on `[.., time, d]` inputs.
    fn attention(&self, g: &Graph, q: Var, k: Var, v: Var) -> Result<Var> {
        let heads = self.config.n_heads;
        let dk = self.config.head_dim();
        let qs = g.shape(q);
        let lead: usize = qs[..qs.len() - 2].iter().product();
        let (tq, tk) = (qs[qs.len() - 2], g.shape(k)[qs.len() - 2]);
        let split = |x: Var, t: usize| -> Result<Var> {
            let r = g.reshape(x, &[lead, t, heads, dk])?;
            Ok(g.permute(r, &[0, 2, 1, 3])?)
        };
        let (qh, kh, vh) = (split(q, tq)?, split(k, tk)?, split(v, tk)?);
        let scores = g.scale(g.matmul_bt(qh, kh)?, 1.0 / (dk as f64).sqrt());
        let weights = g.softmax_last(scores)?;
        let out = g.matmul(weights, vh)?;
        let merged = g.permute(out, &[0, 2, 1, 3])?;
        Ok(g.reshape(merged, &qs)?)
    }

    /// Attention block on normalized query/key-value streams:
    /// `Y = Attn(TC(q), TC(kv), TC(kv))`, `Y' = Y + MLP(LN(Y))`.
    fn block(
        &self,
        g: &Graph,
        q_in: Var,
        kv_in: Var,
        bv: &BlockVars,
        mode: &mut Mode,
    ) -> Result<Var> {
        let q = self.temporal_conv(g, q_in, &bv.q, mode)?;
        let k = self.temporal_conv(g, kv_in, &bv.k, mode)?;
        let v = self.temporal_conv(g, kv_in, &bv.v, mode)?;
        let y = self.attention(g, q, k, v)?;
        let normed = g.layer_norm(y, bv.mlp_norm.0, bv.mlp_norm.1, self.config.layer_norm_eps)?;
        let m = self.mlp(g, normed, bv, mode)?;
        Ok(g.add(y, m)?)
    }

    // ---- forward stages -------------------------------------------------

    /// Embeds every covariate to `[batch, time, d]` and sums the streams of
    /// each kind. Causal covariates stay separate.
    pub fn embed(&self, g: &Graph, batch: &Batch) -> Result<Streams> {
        let set = &self.config.covariates;
        let (b, t) = (batch.size, batch.history + batch.horizon);
        let d = self.config.embedding_size;
        let mut per_kind: [Vec<Var>; 3] = Default::default();
        let mut causal = Vec::new();
        for ((spec, ids), row) in set.specs().iter().zip(&self.ids.embeds).zip(&batch.rows) {
            let e = match *ids {
                EmbedIds::Table(table) => {
                    let idx: Vec<usize> = row.iter().map(|&v| v as usize).collect();
                    g.embedding(self.p(g, table), &idx, &[b, t], &spec.name)?
                }
                EmbedIds::Projection(lin) => {
                    let st = self.stats.get(&spec.name)?;
                    let vals: Vec<f64> = row.iter().map(|&v| st.apply(v)).collect();
                    let x = g.constant(Tensor::new(vec![b, t, 1], vals)?);
                    Self::linear(g, x, self.lin(g, lin))?
                }
            };
            debug_assert_eq!(g.shape(e), vec![b, t, d]);
            match spec.kind {
                CovariateKind::Static => per_kind[0].push(e),
                CovariateKind::NonCausal => per_kind[1].push(e),
                CovariateKind::Past => per_kind[2].push(e),
                CovariateKind::Causal => causal.push(e),
            }
        }
        let sum = |xs: &[Var]| -> Result<Option<Var>> {
            if xs.is_empty() {
                Ok(None)
            } else {
                Ok(Some(g.add_n(xs)?))
            }
        };
        Ok(Streams {
            statics: sum(&per_kind[0])?,
            non_causal: sum(&per_kind[1])?,
            past: sum(&per_kind[2])?,
            causal,
        })
    }

    /// Sum of the selected streams restricted to time steps `range`.
    /// Summation order is S, T, P, C_0, C_1, ... regardless of caller.
    fn information(
        &self,
        g: &Graph,
        streams: &Streams,
        batch: &Batch,
        with_past: bool,
        causal_upto: Option<usize>,
        range: (usize, usize),
    ) -> Result<Var> {
        let mut members: Vec<Var> = Vec::new();
        members.extend(streams.statics);
        members.extend(streams.non_causal);
        if with_past {
            members.extend(streams.past);
        }
        if let Some(i) = causal_upto {
            members.extend(&streams.causal[..=i]);
        }
        if members.is_empty() {
            let d = self.config.embedding_size;
            return Ok(g.constant(Tensor::zeros(&[batch.size, range.1 - range.0, d])));
        }
        let total = g.add_n(&members)?;
        Ok(g.slice(total, 1, range.0, range.1)?)
    }

    fn history_range(&self) -> (usize, usize) {
        (0, self.config.history)
    }

    fn horizon_range(&self) -> (usize, usize) {
        (
            self.config.history,
            self.config.history + self.config.horizon,
        )
    }

    /// Level network. Returns `(level [batch, horizon], level_emb [batch, horizon, d])`.
    /// Reads only static, non-causal and past streams.
    pub fn level_forward(
        &self,
        g: &Graph,
        streams: &Streams,
        batch: &Batch,
        mode: &mut Mode,
    ) -> Result<(Var, Var)> {
        let ids = &self.ids.level;
        let eps = self.config.layer_norm_eps;
        let q_raw = self.information(g, streams, batch, false, None, self.horizon_range())?;
        let kv_raw = self.information(g, streams, batch, true, None, self.history_range())?;
        let q_in = g.layer_norm(
            q_raw,
            self.p(g, ids.q_norm.gamma),
            self.p(g, ids.q_norm.beta),
            eps,
        )?;
        let kv_in = g.layer_norm(
            kv_raw,
            self.p(g, ids.kv_norm.gamma),
            self.p(g, ids.kv_norm.beta),
            eps,
        )?;
        let bv = self.block_vars(g, ids);
        let y = self.block(g, q_in, kv_in, &bv, mode)?;
        let level = Self::linear(g, y, self.lin(g, self.ids.level_head))?;
        let level = g.reshape(level, &[batch.size, self.config.horizon])?;
        let level_emb = Self::linear(g, y, self.lin(g, self.ids.level_emb_head))?;
        Ok((level, level_emb))
    }

    /// Coefficient network `i`: `[batch, horizon, width_i]`. Causal rows of
    /// rank above `i` are never read.
    pub fn coefficient_forward(
        &self,
        i: usize,
        g: &Graph,
        streams: &Streams,
        level_emb: Var,
        batch: &Batch,
        mode: &mut Mode,
    ) -> Result<Var> {
        let ids = &self.ids.coef[i];
        let eps = self.config.layer_norm_eps;
        let q_raw = self.information(g, streams, batch, false, Some(i), self.horizon_range())?;
        let kv_raw = self.information(g, streams, batch, true, Some(i), self.history_range())?;
        let q_norm = g.layer_norm(
            q_raw,
            self.p(g, ids.q_norm.gamma),
            self.p(g, ids.q_norm.beta),
            eps,
        )?;
        let q_in = g.add(q_norm, level_emb)?;
        let kv_in = g.layer_norm(
            kv_raw,
            self.p(g, ids.kv_norm.gamma),
            self.p(g, ids.kv_norm.beta),
            eps,
        )?;
        let bv = self.block_vars(g, ids);
        let y = self.block(g, q_in, kv_in, &bv, mode)?;
        Self::linear(g, y, self.lin(g, self.ids.coef_heads[i]))
    }

    /// All coefficient networks at once, stacked on a leading group axis.
    /// Parameters stay separate per network; only the execution layout is
    /// shared.
    pub fn batched_coefficient_forward(
        &self,
        g: &Graph,
        streams: &Streams,
        level_emb: Var,
        batch: &Batch,
        mode: &mut Mode,
    ) -> Result<Vec<Var>> {
        let n_c = self.n_causal();
        let eps = self.config.layer_norm_eps;
        let mut q_raw = Vec::with_capacity(n_c);
        let mut kv_raw = Vec::with_capacity(n_c);
        for i in 0..n_c {
            q_raw.push(self.information(
                g,
                streams,
                batch,
                false,
                Some(i),
                self.horizon_range(),
            )?);
            kv_raw.push(self.information(
                g,
                streams,
                batch,
                true,
                Some(i),
                self.history_range(),
            )?);
        }
        let ids = &self.ids.coef;
        let stack_ids = |f: &dyn Fn(&BlockIds) -> ParamId| -> Result<Var> {
            let vars: Vec<Var> = ids.iter().map(|b| self.p(g, f(b))).collect();
            Ok(g.stack(&vars)?)
        };
        let q_stack = g.stack(&q_raw)?;
        let kv_stack = g.stack(&kv_raw)?;
        let q_norm = g.layer_norm(
            q_stack,
            stack_ids(&|b| b.q_norm.gamma)?,
            stack_ids(&|b| b.q_norm.beta)?,
            eps,
        )?;
        let q_in = g.add(q_norm, g.stack(&vec![level_emb; n_c])?)?;
        let kv_in = g.layer_norm(
            kv_stack,
            stack_ids(&|b| b.kv_norm.gamma)?,
            stack_ids(&|b| b.kv_norm.beta)?,
            eps,
        )?;
        let bv = self.stacked_block_vars(g, ids)?;
        let y = self.block(g, q_in, kv_in, &bv, mode)?;
        (0..n_c)
            .map(|i| {
                let yi = g.select(y, i)?;
                Self::linear(g, yi, self.lin(g, self.ids.coef_heads[i]))
            })
            .collect()
    }

    /// Full forward pass in scaled units.
    pub fn forward(
        &self,
        g: &Graph,
        batch: &Batch,
        mode: &mut Mode,
        batched_coefficients: bool,
    ) -> Result<ForwardOutput> {
        let streams = self.embed(g, batch)?;
        let (level, level_emb) = self.level_forward(g, &streams, batch, mode)?;
        let coefficients = if batched_coefficients {
            self.batched_coefficient_forward(g, &streams, level_emb, batch, mode)?
        } else {
            (0..self.n_causal())
                .map(|i| self.coefficient_forward(i, g, &streams, level_emb, batch, mode))
                .collect::<Result<Vec<_>>>()?
        };
        let mut effects = Vec::with_capacity(coefficients.len());
        for (c, values) in coefficients.iter().zip(&batch.transformed) {
            let v = g.constant(values.clone());
            effects.push(g.sum_last(g.mul(*c, v)?)?);
        }
        let mut terms = vec![level];
        terms.extend(&effects);
        let prediction = g.add_n(&terms)?;
        Ok(ForwardOutput {
            level,
            level_emb,
            coefficients,
            effects,
            prediction,
        })
    }

    /// Converts graph outputs into per-sample decompositions in target units.
    pub fn compose(&self, g: &Graph, batch: &Batch, out: &ForwardOutput) -> Vec<ComposedForecast> {
        let tf = batch.horizon;
        let level = g.value(out.level);
        let coefs: Vec<Arc<Tensor>> = out.coefficients.iter().map(|&c| g.value(c)).collect();
        let names = self.config.covariates.hierarchy();
        (0..batch.size)
            .map(|b| {
                let scale = batch.scales[b];
                let lvl = level.data()[b * tf..(b + 1) * tf]
                    .iter()
                    .map(|v| v * scale)
                    .collect();
                let coefficients = coefs
                    .iter()
                    .map(|c| {
                        let w = c.last_dim();
                        (0..tf)
                            .map(|t| {
                                let off = (b * tf + t) * w;
                                c.data()[off..off + w].iter().map(|v| v * scale).collect()
                            })
                            .collect()
                    })
                    .collect();
                let values = batch
                    .transformed_rows
                    .iter()
                    .map(|r| r[b].clone())
                    .collect();
                let raw = batch.raw_causal.iter().map(|r| r[b].clone()).collect();
                ComposedForecast::from_parts(names.clone(), lvl, coefficients, values, raw)
            })
            .collect()
    }

    /// Inference on a set of bundles.
    pub fn forecast_batch(&self, bundles: &[&CovariateBundle]) -> Result<Vec<ComposedForecast>> {
        if bundles.is_empty() {
            return Ok(Vec::new());
        }
        let batch = self.batch(bundles)?;
        let g = Graph::inference();
        let out = self.forward(&g, &batch, &mut Mode::Eval, true)?;
        Ok(self.compose(&g, &batch, &out))
    }

    pub fn forecast(&self, bundle: &CovariateBundle) -> Result<ComposedForecast> {
        Ok(self.forecast_batch(&[bundle])?.remove(0))
    }
}
