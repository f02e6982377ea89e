//! Boundary scoring: focal loss, a small built-in network, and the oracle
//! and external score-file scorers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CebError, Result};
use crate::labels::BoundaryLabeling;
use crate::raster::BinaryRaster;
use crate::signature::SignatureRecord;
use crate::watershed::BoundaryKey;

pub const PROB_CLAMP: f64 = 1e-7;
pub const DEFAULT_THETA: f64 = 0.5;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `-a (1-p)^g ln p` for a positive, `-(1-a) p^g ln(1-p)` for a negative.
pub fn focal_loss(p: f64, positive: bool, gamma: f64, alpha: f64) -> f64 {
    let p = clamp_p(p);
    if positive {
        -alpha * (1.0 - p).powf(gamma) * p.ln()
    } else {
        -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
    }
}

/// Derivative of the focal loss with respect to the logit `z`, `p = sigmoid(z)`.
/// Outside the clamp range the clamped probability is used in the formula so
/// badly wrong saturated outputs keep a gradient.
pub fn focal_grad_logit(z: f64, positive: bool, gamma: f64, alpha: f64) -> f64 {
    let p = clamp_p(sigmoid(z));
    if positive {
        let q = 1.0 - p;
        alpha * (gamma * p * q.powf(gamma) * p.ln() - q.powf(gamma + 1.0))
    } else {
        let q = 1.0 - p;
        (1.0 - alpha) * (p.powf(gamma + 1.0) - gamma * p.powf(gamma) * q * q.ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorerConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub seed: u64,
    pub input_side: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            hidden: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 200,
            batch_size: 8,
            gamma: 2.0,
            alpha: 0.25,
            seed: 0,
            input_side: 32,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(CebError::Range(format!(
                "focal gamma {} must be >= 0",
                self.gamma
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CebError::Range(format!(
                "focal alpha {} must be in (0,1)",
                self.alpha
            )));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(CebError::Range(format!(
                "learning rate {} must be > 0",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CebError::Range(format!(
                "momentum {} must be in [0,1)",
                self.momentum
            )));
        }
        if self.hidden == 0 || self.input_side == 0 || self.batch_size == 0 {
            return Err(CebError::Range(
                "hidden units, input side and batch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Max-pools (or, for small canvases, samples) a square raster down to
/// `side × side` features in {0,1}.
pub fn downsample(raster: &BinaryRaster, side: usize) -> Vec<f64> {
    let s = raster.side();
    let mut out = vec![0.0; side * side];
    if s == 0 {
        return out;
    }
    let span = |i: usize| {
        let lo = i * s / side;
        let hi = ((i + 1) * s / side).max(lo + 1).min(s);
        lo..hi
    };
    for cy in 0..side {
        for cx in 0..side {
            let hit = span(cy).any(|y| span(cx).any(|x| raster.get(x, y)));
            if hit {
                out[cy * side + cx] = 1.0;
            }
        }
    }
    out
}

/// One hidden tanh layer and a sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub inputs: usize,
    pub hidden: usize,
    /// `hidden × inputs`, row per hidden unit.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Network {
    pub fn init(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let a1 = (6.0 / (inputs + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        Network {
            inputs,
            hidden,
            w1: (0..inputs * hidden)
                .map(|_| rng.gen_range(-a1..a1))
                .collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden).map(|_| rng.gen_range(-a2..a2)).collect(),
            b2: 0.0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Parameters flattened as w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend(&self.w1);
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn set_params(&mut self, v: &[f64]) {
        let (w1, rest) = v.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, rest) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
    }

    fn hidden_layer(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.inputs..(h + 1) * self.inputs];
                let mut s = self.b1[h];
                for (w, xi) in row.iter().zip(x) {
                    if *xi != 0.0 {
                        s += w * xi;
                    }
                }
                s.tanh()
            })
            .collect()
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let h = self.hidden_layer(x);
        self.b2 + h.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn loss(&self, x: &[f64], positive: bool, gamma: f64, alpha: f64) -> f64 {
        focal_loss(self.predict(x), positive, gamma, alpha)
    }

    /// Adds the gradient of the focal loss for one example into `grad`
    /// (laid out like `params`) and returns the loss.
    pub fn accumulate_grad(
        &self,
        x: &[f64],
        positive: bool,
        gamma: f64,
        alpha: f64,
        grad: &mut [f64],
    ) -> f64 {
        let h = self.hidden_layer(x);
        let z = self.b2 + h.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>();
        let dz = focal_grad_logit(z, positive, gamma, alpha);
        let (gw1, rest) = grad.split_at_mut(self.w1.len());
        let (gb1, rest) = rest.split_at_mut(self.b1.len());
        let (gw2, gb2) = rest.split_at_mut(self.w2.len());
        gb2[0] += dz;
        for k in 0..self.hidden {
            gw2[k] += dz * h[k];
            let dpre = dz * self.w2[k] * (1.0 - h[k] * h[k]);
            gb1[k] += dpre;
            let row = &mut gw1[k * self.inputs..(k + 1) * self.inputs];
            for (g, xi) in row.iter_mut().zip(x) {
                if *xi != 0.0 {
                    *g += dpre * xi;
                }
            }
        }
        focal_loss(sigmoid(z), positive, gamma, alpha)
    }

    fn to_f32(&self) -> Network {
        let r = |v: &[f64]| v.iter().map(|&w| w as f32 as f64).collect::<Vec<_>>();
        Network {
            inputs: self.inputs,
            hidden: self.hidden,
            w1: r(&self.w1),
            b1: r(&self.b1),
            w2: r(&self.w2),
            b2: self.b2 as f32 as f64,
        }
    }
}

/// Trained built-in model. Weights hold values representable as `f32`, so
/// the model file round-trips exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    pub config: ScorerConfig,
    pub network: Network,
    /// Mean training loss before training and after each epoch.
    pub loss_curve: Vec<f64>,
}

impl ScorerModel {
    pub fn score_raster(&self, raster: &BinaryRaster) -> f64 {
        self.network
            .predict(&downsample(raster, self.config.input_side))
    }
}

fn mean_loss(net: &Network, data: &[(Vec<f64>, bool)], cfg: &ScorerConfig) -> f64 {
    data.iter()
        .map(|(x, y)| net.loss(x, *y, cfg.gamma, cfg.alpha))
        .sum::<f64>()
        / data.len() as f64
}

/// Minibatch SGD with momentum on the focal loss; labels TRUE are positives.
pub fn train(records: &[SignatureRecord], cfg: &ScorerConfig) -> Result<ScorerModel> {
    cfg.validate()?;
    let data: Vec<(Vec<f64>, bool)> = records
        .iter()
        .filter_map(|r| r.label.map(|l| (downsample(&r.raster, cfg.input_side), l)))
        .collect();
    let pos = data.iter().filter(|d| d.1).count();
    if pos == 0 || pos == data.len() {
        return Err(CebError::DegenerateTraining(format!(
            "{} labeled examples, {} positive; need both classes",
            data.len(),
            pos
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::init(cfg.input_side * cfg.input_side, cfg.hidden, &mut rng);
    let mut params = net.params();
    let mut velocity = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_curve = vec![mean_loss(&net, &data, cfg)];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (x, y) = &data[i];
                net.accumulate_grad(x, *y, cfg.gamma, cfg.alpha, &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g * scale;
                *p += *v;
            }
            net.set_params(&params);
        }
        let l = mean_loss(&net, &data, cfg);
        log::debug!("epoch {}: mean focal loss {l:.6}", epoch + 1);
        loss_curve.push(l);
    }
    Ok(ScorerModel {
        config: *cfg,
        network: net.to_f32(),
        loss_curve,
    })
}

const MAGIC: &[u8; 4] = b"CEBM";
const VERSION: u32 = 1;

pub fn encode_model(m: &ScorerModel) -> Vec<u8> {
    let c = &m.config;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let u32s = [
        VERSION,
        c.input_side as u32,
        c.hidden as u32,
        c.epochs as u32,
        c.batch_size as u32,
    ];
    for v in u32s {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [c.learning_rate, c.momentum, c.gamma, c.alpha] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&(m.loss_curve.len() as u32).to_le_bytes());
    for v in &m.loss_curve {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in m.network.params() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .data
            .get(self.pos..end)
            .ok_or_else(|| CebError::Format("model file truncated".into()))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode_model(data: &[u8]) -> Result<ScorerModel> {
    if data.get(..4) != Some(MAGIC) {
        return Err(CebError::Format("missing CEBM magic".into()));
    }
    let mut c = Cursor { data, pos: 4 };
    let version = c.u32()?;
    if version != VERSION {
        return Err(CebError::Format(format!(
            "unsupported model version {version}"
        )));
    }
    let input_side = c.u32()? as usize;
    let hidden = c.u32()? as usize;
    let epochs = c.u32()? as usize;
    let batch_size = c.u32()? as usize;
    let learning_rate = c.f64()?;
    let momentum = c.f64()?;
    let gamma = c.f64()?;
    let alpha = c.f64()?;
    let seed = u64::from_le_bytes(c.take()?);
    let config = ScorerConfig {
        hidden,
        learning_rate,
        momentum,
        epochs,
        batch_size,
        gamma,
        alpha,
        seed,
        input_side,
    };
    config.validate()?;
    let n_loss = c.u32()? as usize;
    let loss_curve = (0..n_loss).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let inputs = input_side * input_side;
    let mut network = Network {
        inputs,
        hidden,
        w1: vec![0.0; inputs * hidden],
        b1: vec![0.0; hidden],
        w2: vec![0.0; hidden],
        b2: 0.0,
    };
    let params = (0..network.param_count())
        .map(|_| Ok(f32::from_le_bytes(c.take()?) as f64))
        .collect::<Result<Vec<_>>>()?;
    if c.pos != data.len() {
        return Err(CebError::Format(format!(
            "{} trailing bytes after model weights",
            data.len() - c.pos
        )));
    }
    network.set_params(&params);
    Ok(ScorerModel {
        config,
        network,
        loss_curve,
    })
}

pub fn save_model(m: &ScorerModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(m)).map_err(|e| CebError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ScorerModel> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| CebError::io(path, e))?;
    decode_model(&data).map_err(|e| match e {
        CebError::Format(m) => CebError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reads `signature_id,score` rows; a header row is optional.
pub fn read_external_scores(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != 2 {
            return Err(CebError::Format(format!(
                "{}: row {} must have 2 fields",
                path.display(),
                i + 1
            )));
        }
        let value = match row[1].parse::<f64>() {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(CebError::Format(format!(
                    "{}: bad score {:?} on row {}",
                    path.display(),
                    &row[1],
                    i + 1
                )))
            }
        };
        if !(0.0..=1.0).contains(&value) {
            return Err(CebError::Range(format!(
                "{}: score {value} for {} outside [0,1]",
                path.display(),
                &row[0]
            )));
        }
        out.insert(row[0].to_string(), value);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum Scorer {
    Builtin(Box<ScorerModel>),
    /// Ground-truth passthrough keyed by signature id: TRUE scores 1, FALSE 0.
    Oracle(BTreeMap<String, bool>),
    External(BTreeMap<String, f64>),
    Constant(f64),
}

impl Scorer {
    pub fn oracle_from(records: &[SignatureRecord]) -> Self {
        Scorer::Oracle(
            records
                .iter()
                .filter_map(|r| r.label.map(|l| (r.id.clone(), l)))
                .collect(),
        )
    }

    pub fn score(&self, rec: &SignatureRecord) -> Result<f64> {
        match self {
            Scorer::Builtin(m) => Ok(m.score_raster(&rec.raster)),
            Scorer::Oracle(labels) => labels
                .get(&rec.id)
                .map(|&l| if l { 1.0 } else { 0.0 })
                .ok_or_else(|| CebError::MissingScore(rec.id.clone())),
            Scorer::External(scores) => scores
                .get(&rec.id)
                .copied()
                .ok_or_else(|| CebError::MissingScore(rec.id.clone())),
            Scorer::Constant(v) => Ok(*v),
        }
    }

    /// Scores every record; a missing external or oracle score fails with
    /// the full list of missing ids.
    pub fn score_all(&self, records: &[SignatureRecord]) -> Result<BTreeMap<BoundaryKey, f64>> {
        let mut out = BTreeMap::new();
        let mut missing = Vec::new();
        for r in records {
            match self.score(r) {
                Ok(s) => {
                    out.insert(r.key, s);
                }
                Err(CebError::MissingScore(id)) => missing.push(id),
                Err(e) => return Err(e),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(CebError::MissingScore(missing.join(", ")))
        }
    }
}

/// TRUE iff score ≥ θ.
pub fn binarize(scores: &BTreeMap<BoundaryKey, f64>, theta: f64) -> BoundaryLabeling {
    BoundaryLabeling(scores.iter().map(|(k, &s)| (*k, s >= theta)).collect())
}
