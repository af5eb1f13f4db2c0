//! Round win-probability benchmark: samples, features, models, and metrics.
//!
//! Vector features, in order:
//!
//! | index | feature |
//! |-------|---------|
//! | 0 | seconds since the last phase change |
//! | 1, 2 | active fires, active smokes |
//! | 3, 4, 5 | bomb planted at A, at B, not planted |
//! | 6 | defuse kits among alive CT players |
//! | 7..=14 | CT: start equipment, alive, current equipment, hp, armor, helmets, grenades, in bomb zone |
//! | 15..=22 | T: same eight team features |
//! | 23 | bomb in a T player's inventory |
//!
//! Set rows repeat features 0..=5 and then describe one player: is CT,
//! position (3), velocity (3), yaw, pitch, hp, armor, equipment value,
//! grenades, alive, blinded, in bomb zone.

pub mod nn;
pub mod trees;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{ln, sigmoid};
use crate::model::{BombSite, DemoDocument, Frame, GameRound, PlayerState, Side, TeamState};
use nn::{logit_nll, Adam, DeepSets, Mlp};
use trees::{fit_tree, GrowParams, Tree};

pub const VECTOR_FEATURES: usize = 24;
pub const SET_FEATURES: usize = 22;
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const PROB_CLIP: f64 = 1e-12;

pub const VECTOR_FEATURE_NAMES: [&str; VECTOR_FEATURES] = [
    "secondsSincePhaseChange",
    "activeFires",
    "activeSmokes",
    "bombSiteA",
    "bombSiteB",
    "bombSiteNone",
    "defuseKitsAlive",
    "ctStartEqVal",
    "ctAliveCount",
    "ctCurrentEqVal",
    "ctTotalHp",
    "ctTotalArmor",
    "ctHelmets",
    "ctGrenades",
    "ctPlayersInBombZone",
    "tStartEqVal",
    "tAliveCount",
    "tCurrentEqVal",
    "tTotalHp",
    "tTotalArmor",
    "tHelmets",
    "tGrenades",
    "tPlayersInBombZone",
    "bombInTInventory",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("corpus has no rounds with frames")]
    EmptyCorpus,
    #[error("training set is empty")]
    EmptyTrain,
    #[error("test set is empty")]
    EmptyTest,
    #[error("documents mix maps {0:?} and {1:?}")]
    MixedMaps(String, String),
    #[error("feature width {found} does not match model width {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: u32 },
    #[error("split must be three percentages summing to 100, like 70/10/20")]
    InvalidSplit,
    #[error("model file format {0} is not supported")]
    UnsupportedFormat(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoundRef {
    pub source: String,
    pub round_num: u16,
    pub tick: u32,
}

/// One labeled game state. `label` is 1.0 when CT wins the round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GameStateSample {
    pub label: f64,
    pub round_ref: RoundRef,
    pub vector: Vec<f64>,
    pub set: Vec<Vec<f64>>,
}

impl GameStateSample {
    pub fn from_frame(round: &GameRound, frame: &Frame, source: &str) -> Self {
        GameStateSample {
            label: if round.winner == Side::CT { 1.0 } else { 0.0 },
            round_ref: RoundRef { source: source.into(), round_num: round.round_num, tick: frame.tick },
            vector: featurize_vector(round, frame),
            set: featurize_set(frame),
        }
    }
}

fn global_features(frame: &Frame) -> [f64; 6] {
    let site = frame.bomb.planted_site;
    [
        frame.seconds_in_phase,
        frame.fires.len() as f64,
        frame.smokes.len() as f64,
        f64::from(u8::from(site == Some(BombSite::A))),
        f64::from(u8::from(site == Some(BombSite::B))),
        f64::from(u8::from(site.is_none())),
    ]
}

fn team_features(team: &TeamState, start_eq: u32) -> [f64; 8] {
    let a = &team.aggregates;
    [
        f64::from(start_eq),
        f64::from(a.alive_count),
        f64::from(a.total_eq_val),
        f64::from(a.total_hp),
        f64::from(a.total_armor),
        f64::from(a.helmets),
        f64::from(a.grenades),
        f64::from(a.players_in_bomb_zone),
    ]
}

pub fn featurize_vector(round: &GameRound, frame: &Frame) -> Vec<f64> {
    let mut v = Vec::with_capacity(VECTOR_FEATURES);
    v.extend(global_features(frame));
    v.push(f64::from(frame.ct.aggregates.defuse_kits));
    v.extend(team_features(&frame.ct, round.ct_start_eq_val));
    v.extend(team_features(&frame.t, round.t_start_eq_val));
    let carried = frame.bomb.planted_site.is_none()
        && frame.bomb.carrier_id.is_some_and(|id| frame.t.players.iter().any(|p| p.player_id == id && p.is_alive()));
    v.push(f64::from(u8::from(carried)));
    v
}

fn player_row(global: &[f64; 6], p: &PlayerState) -> Vec<f64> {
    let alive = p.is_alive();
    let vel = if alive { p.vel } else { crate::model::Vec3::ZERO };
    let flag = |b: bool| f64::from(u8::from(b));
    let mut r = Vec::with_capacity(SET_FEATURES);
    r.extend_from_slice(global);
    r.extend([
        flag(p.side == Side::CT),
        f64::from(p.pos.x),
        f64::from(p.pos.y),
        f64::from(p.pos.z),
        f64::from(vel.x),
        f64::from(vel.y),
        f64::from(vel.z),
        f64::from(p.view_yaw),
        f64::from(p.view_pitch),
        f64::from(p.hp),
        f64::from(p.armor),
        f64::from(p.eq_val),
        f64::from(p.grenades_remaining),
        flag(alive),
        flag(alive && p.flags.blinded),
        flag(alive && p.flags.in_bomb_zone),
    ]);
    r
}

/// One row per player, CT first.
pub fn featurize_set(frame: &Frame) -> Vec<Vec<f64>> {
    let g = global_features(frame);
    frame.players().map(|p| player_row(&g, p)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Dataset {
    pub map_name: String,
    pub train: Vec<GameStateSample>,
    pub val: Vec<GameStateSample>,
    pub test: Vec<GameStateSample>,
}

/// Train/validation/test percentages summing to 100.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: u8,
    pub val: u8,
    pub test: u8,
}

impl Default for Split {
    fn default() -> Self {
        Split { train: 70, val: 10, test: 20 }
    }
}

impl Split {
    pub fn new(train: u8, val: u8, test: u8) -> Result<Self, BenchError> {
        if u16::from(train) + u16::from(val) + u16::from(test) != 100 {
            return Err(BenchError::InvalidSplit);
        }
        Ok(Split { train, val, test })
    }

    /// Train and validation sizes for `n` samples; the test set takes the rest.
    pub fn sizes(&self, n: usize) -> (usize, usize) {
        (n * usize::from(self.train) / 100, n * usize::from(self.val) / 100)
    }
}

impl core::str::FromStr for Split {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<u8> = s
            .split('/')
            .map(|p| p.trim().parse::<u8>())
            .collect::<Result<_, _>>()
            .map_err(|_| BenchError::InvalidSplit)?;
        match parts[..] {
            [a, b, c] => Split::new(a, b, c),
            _ => Err(BenchError::InvalidSplit),
        }
    }
}

/// Streams documents into a dataset one at a time so only the sampled
/// frames are kept.
pub struct DatasetBuilder {
    rng: ChaCha8Rng,
    map_name: Option<String>,
    samples: Vec<GameStateSample>,
}

impl DatasetBuilder {
    pub fn new(seed: u64) -> Self {
        DatasetBuilder { rng: ChaCha8Rng::seed_from_u64(seed), map_name: None, samples: Vec::new() }
    }

    /// Samples one frame uniformly from every round that has frames.
    pub fn add_document(&mut self, doc: &DemoDocument) -> Result<(), BenchError> {
        match &self.map_name {
            Some(m) if *m != doc.meta.map_name => {
                return Err(BenchError::MixedMaps(m.clone(), doc.meta.map_name.clone()))
            }
            Some(_) => {}
            None => self.map_name = Some(doc.meta.map_name.clone()),
        }
        for round in &doc.game_rounds {
            if round.frames.is_empty() {
                continue;
            }
            let k = self.rng.random_range(0..round.frames.len());
            self.samples.push(GameStateSample::from_frame(round, &round.frames[k], &doc.meta.source_file));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Shuffles and splits 70/10/20.
    pub fn finish(self) -> Result<Dataset, BenchError> {
        self.finish_with(Split::default())
    }

    /// Shuffles and splits `floor(train% n)` / `floor(val% n)` / rest.
    pub fn finish_with(mut self, split: Split) -> Result<Dataset, BenchError> {
        if self.samples.is_empty() {
            return Err(BenchError::EmptyCorpus);
        }
        self.samples.shuffle(&mut self.rng);
        let n = self.samples.len();
        let (n_train, n_val) = split.sizes(n);
        let test = self.samples.split_off(n_train + n_val);
        let val = self.samples.split_off(n_train);
        Ok(Dataset { map_name: self.map_name.unwrap_or_default(), train: self.samples, val, test })
    }
}

pub fn build_dataset(docs: &[DemoDocument], seed: u64) -> Result<Dataset, BenchError> {
    let mut b = DatasetBuilder::new(seed);
    for d in docs {
        b.add_document(d)?;
    }
    b.finish()
}

/// Per-column min-max scaling to [0, 1] over the fitting data. Columns with
/// no spread map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Option<Self> {
        let mut it = rows.into_iter();
        let first = it.next()?;
        let mut s = MinMaxScaler { min: first.to_vec(), max: first.to_vec() };
        for r in it {
            for (j, v) in r.iter().enumerate() {
                s.min[j] = s.min[j].min(*v);
                s.max[j] = s.max[j].max(*v);
            }
        }
        Some(s)
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }

    pub fn transform_set(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ModelKind {
    LogisticRegression,
    Mlp,
    BoostedStumps,
    DeepSets,
}

impl ModelKind {
    pub fn uses_set(self) -> bool {
        self == ModelKind::DeepSets
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "type")]
pub enum ModelParams {
    Constant { p: f64 },
    Logistic { weights: Vec<f64>, bias: f64 },
    Mlp(Mlp),
    Trees { base: f64, shrinkage: f64, trees: Vec<Tree> },
    DeepSets(DeepSets),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpochLog {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub input_width: usize,
    pub params: ModelParams,
    pub scaler: Option<MinMaxScaler>,
    pub training_log: Vec<EpochLog>,
}

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

impl TrainedModel {
    pub fn check_format(&self) -> Result<(), BenchError> {
        if self.format_version == MODEL_FORMAT_VERSION {
            Ok(())
        } else {
            Err(BenchError::UnsupportedFormat(self.format_version))
        }
    }

    fn input<'a>(&self, s: &'a GameStateSample) -> &'a [f64] {
        &s.vector
    }

    pub fn predict(&self, s: &GameStateSample) -> f64 {
        let p = match &self.params {
            ModelParams::Constant { p } => *p,
            ModelParams::Logistic { weights, bias } => {
                let x = self.scaled(self.input(s));
                sigmoid(bias + weights.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>())
            }
            ModelParams::Mlp(m) => m.predict(&self.scaled(self.input(s))),
            ModelParams::Trees { base, shrinkage, trees } => {
                sigmoid(base + shrinkage * trees.iter().map(|t| t.eval(&s.vector)).sum::<f64>())
            }
            ModelParams::DeepSets(d) => match &self.scaler {
                Some(sc) => d.predict(&sc.transform_set(&s.set)),
                None => d.predict(&s.set),
            },
        };
        clip(p)
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        match &self.scaler {
            Some(s) => s.transform(x),
            None => x.to_vec(),
        }
    }

    pub fn predict_all(&self, samples: &[GameStateSample]) -> Vec<f64> {
        samples.iter().map(|s| self.predict(s)).collect()
    }
}

/// Mean clipped log loss.
pub fn log_loss(preds: &[f64], labels: &[f64]) -> f64 {
    let n = preds.len().max(1) as f64;
    preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clip(p);
            -(y * ln(p) + (1.0 - y) * ln(1.0 - p))
        })
        .sum::<f64>()
        / n
}

fn labels(samples: &[GameStateSample]) -> Vec<f64> {
    samples.iter().map(|s| s.label).collect()
}

fn base_rate(samples: &[GameStateSample]) -> f64 {
    samples.iter().map(|s| s.label).sum::<f64>() / samples.len().max(1) as f64
}

fn degenerate(samples: &[GameStateSample]) -> bool {
    let r = base_rate(samples);
    r == 0.0 || r == 1.0
}

fn constant_model(kind: ModelKind, width: usize, train: &[GameStateSample]) -> TrainedModel {
    TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        input_width: width,
        params: ModelParams::Constant { p: clip(base_rate(train)) },
        scaler: None,
        training_log: Vec::new(),
    }
}

fn vector_width(train: &[GameStateSample]) -> Result<usize, BenchError> {
    let d = train.first().ok_or(BenchError::EmptyTrain)?.vector.len();
    for s in train {
        if s.vector.len() != d {
            return Err(BenchError::DimensionMismatch { expected: d, found: s.vector.len() });
        }
    }
    Ok(d)
}

fn set_width(train: &[GameStateSample]) -> Result<usize, BenchError> {
    let d = train.first().ok_or(BenchError::EmptyTrain)?.set.first().map_or(0, Vec::len);
    for r in train.iter().flat_map(|s| &s.set) {
        if r.len() != d {
            return Err(BenchError::DimensionMismatch { expected: d, found: r.len() });
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LogRegParams {
    pub l2: f64,
    pub lr: f64,
    pub iterations: u32,
    pub log_every: u32,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams { l2: 1e-4, lr: 0.5, iterations: 2000, log_every: 100 }
    }
}

/// L2-penalised logistic regression on min-max scaled vectors, fit by
/// full-batch gradient descent.
pub fn train_logreg(
    train: &[GameStateSample],
    val: &[GameStateSample],
    hp: &LogRegParams,
) -> Result<TrainedModel, BenchError> {
    let d = vector_width(train)?;
    if degenerate(train) {
        return Ok(constant_model(ModelKind::LogisticRegression, d, train));
    }
    let scaler = MinMaxScaler::fit(train.iter().map(|s| s.vector.as_slice())).expect("non-empty");
    let xs: Vec<Vec<f64>> = train.iter().map(|s| scaler.transform(&s.vector)).collect();
    let ys = labels(train);
    let n = xs.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut model = TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::LogisticRegression,
        input_width: d,
        params: ModelParams::Logistic { weights: w.clone(), bias: b },
        scaler: Some(scaler),
        training_log: Vec::new(),
    };
    for it in 0..=hp.iterations {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(&ys) {
            let z = b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            loss += logit_nll(z, y);
            let dz = sigmoid(z) - y;
            gb += dz;
            for (g, v) in gw.iter_mut().zip(x) {
                *g += dz * v;
            }
        }
        loss = loss / n + 0.5 * hp.l2 * w.iter().map(|v| v * v).sum::<f64>();
        if !loss.is_finite() {
            return Err(BenchError::NonFiniteLoss { epoch: it });
        }
        if it % hp.log_every.max(1) == 0 || it == hp.iterations {
            model.params = ModelParams::Logistic { weights: w.clone(), bias: b };
            let val_loss = (!val.is_empty()).then(|| log_loss(&model.predict_all(val), &labels(val)));
            model.training_log.push(EpochLog { epoch: it, train_loss: loss, val_loss });
        }
        if it == hp.iterations {
            break;
        }
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= hp.lr * (g / n + hp.l2 * *wj);
        }
        b -= hp.lr * gb / n;
    }
    model.params = ModelParams::Logistic { weights: w, bias: b };
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NeuralParams {
    pub hidden: usize,
    pub batch: usize,
    pub lr: f64,
    pub epochs: u32,
    pub patience: u32,
    pub seed: u64,
}

impl Default for NeuralParams {
    fn default() -> Self {
        NeuralParams { hidden: 128, batch: 32, lr: 1e-3, epochs: 100, patience: 10, seed: 0 }
    }
}

/// Shared Adam loop with early stopping on validation log loss. Returns the
/// best parameters seen and the per-epoch log.
fn fit_adam<F, L>(
    theta: &mut Vec<f64>,
    n: usize,
    hp: &NeuralParams,
    rng: &mut ChaCha8Rng,
    mut batch_grad: F,
    mut losses: L,
) -> Result<Vec<EpochLog>, BenchError>
where
    F: FnMut(&[f64], &[usize]) -> Vec<f64>,
    L: FnMut(&[f64]) -> (f64, Option<f64>),
{
    let mut opt = Adam::new(theta.len(), hp.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::new();
    let (train_loss, val_loss) = losses(theta);
    log.push(EpochLog { epoch: 0, train_loss, val_loss });
    let mut best = (val_loss.unwrap_or(train_loss), theta.clone());
    let mut stale = 0;
    for epoch in 1..=hp.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(hp.batch.max(1)) {
            let g = batch_grad(theta, chunk);
            opt.step(theta, &g);
        }
        let (train_loss, val_loss) = losses(theta);
        if !train_loss.is_finite() || val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(BenchError::NonFiniteLoss { epoch });
        }
        log.push(EpochLog { epoch, train_loss, val_loss });
        let score = val_loss.unwrap_or(train_loss);
        if score < best.0 {
            best = (score, theta.clone());
            stale = 0;
        } else {
            stale += 1;
            if val_loss.is_some() && stale >= hp.patience {
                break;
            }
        }
    }
    *theta = best.1;
    Ok(log)
}

pub fn train_mlp(
    train: &[GameStateSample],
    val: &[GameStateSample],
    hp: &NeuralParams,
) -> Result<TrainedModel, BenchError> {
    let d = vector_width(train)?;
    if degenerate(train) {
        return Ok(constant_model(ModelKind::Mlp, d, train));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let scaler = MinMaxScaler::fit(train.iter().map(|s| s.vector.as_slice())).expect("non-empty");
    let xs: Vec<Vec<f64>> = train.iter().map(|s| scaler.transform(&s.vector)).collect();
    let vxs: Vec<Vec<f64>> = val.iter().map(|s| scaler.transform(&s.vector)).collect();
    let (ys, vys) = (labels(train), labels(val));
    let mut net = Mlp::new(d, hp.hidden, &mut rng);
    let mut theta = core::mem::take(&mut net.theta);
    let template = net;
    let with = |theta: &[f64]| Mlp { inputs: template.inputs, hidden: template.hidden, theta: theta.to_vec() };
    let log = fit_adam(
        &mut theta,
        xs.len(),
        hp,
        &mut rng,
        |theta, idx| {
            let m = with(theta);
            let bx: Vec<&[f64]> = idx.iter().map(|&i| xs[i].as_slice()).collect();
            let by: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
            m.loss_and_grad(&bx, &by).1
        },
        |theta| {
            let m = with(theta);
            let tl = log_loss(&xs.iter().map(|x| m.predict(x)).collect::<Vec<_>>(), &ys);
            let vl = (!vxs.is_empty()).then(|| log_loss(&vxs.iter().map(|x| m.predict(x)).collect::<Vec<_>>(), &vys));
            (tl, vl)
        },
    )?;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::Mlp,
        input_width: d,
        params: ModelParams::Mlp(with(&theta)),
        scaler: Some(scaler),
        training_log: log,
    })
}

pub fn train_deepsets(
    train: &[GameStateSample],
    val: &[GameStateSample],
    hp: &NeuralParams,
) -> Result<TrainedModel, BenchError> {
    let d = set_width(train)?;
    if degenerate(train) {
        return Ok(constant_model(ModelKind::DeepSets, d, train));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let scaler =
        MinMaxScaler::fit(train.iter().flat_map(|s| s.set.iter().map(Vec::as_slice))).ok_or(BenchError::EmptyTrain)?;
    let sets: Vec<Vec<Vec<f64>>> = train.iter().map(|s| scaler.transform_set(&s.set)).collect();
    let vsets: Vec<Vec<Vec<f64>>> = val.iter().map(|s| scaler.transform_set(&s.set)).collect();
    let (ys, vys) = (labels(train), labels(val));
    let mut net = DeepSets::new(d, hp.hidden, &mut rng);
    let mut theta = core::mem::take(&mut net.theta);
    let with = |theta: &[f64]| DeepSets { inputs: d, hidden: hp.hidden, theta: theta.to_vec() };
    let log = fit_adam(
        &mut theta,
        sets.len(),
        hp,
        &mut rng,
        |theta, idx| {
            let m = with(theta);
            let bx: Vec<&[Vec<f64>]> = idx.iter().map(|&i| sets[i].as_slice()).collect();
            let by: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
            m.loss_and_grad(&bx, &by).1
        },
        |theta| {
            let m = with(theta);
            let tl = log_loss(&sets.iter().map(|x| m.predict(x)).collect::<Vec<_>>(), &ys);
            let vl =
                (!vsets.is_empty()).then(|| log_loss(&vsets.iter().map(|x| m.predict(x)).collect::<Vec<_>>(), &vys));
            (tl, vl)
        },
    )?;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::DeepSets,
        input_width: d,
        params: ModelParams::DeepSets(with(&theta)),
        scaler: Some(scaler),
        training_log: log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TreeParams {
    pub max_trees: u32,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub patience: u32,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_trees: 200, max_depth: 3, shrinkage: 0.1, lambda: 1.0, min_child_weight: 1e-3, patience: 10 }
    }
}

/// Gradient boosting with Newton leaf values on raw (unscaled) vectors.
pub fn train_boosted_stumps(
    train: &[GameStateSample],
    val: &[GameStateSample],
    hp: &TreeParams,
) -> Result<TrainedModel, BenchError> {
    let d = vector_width(train)?;
    if degenerate(train) {
        return Ok(constant_model(ModelKind::BoostedStumps, d, train));
    }
    let rate = base_rate(train);
    let base = ln(rate / (1.0 - rate));
    let xs: Vec<&[f64]> = train.iter().map(|s| s.vector.as_slice()).collect();
    let (ys, vys) = (labels(train), labels(val));
    let mut score = vec![base; xs.len()];
    let mut vscore = vec![base; val.len()];
    let grow = GrowParams { max_depth: hp.max_depth, lambda: hp.lambda, min_child_weight: hp.min_child_weight };
    let losses = |score: &[f64], vscore: &[f64]| {
        let tl = log_loss(&score.iter().map(|&z| sigmoid(z)).collect::<Vec<_>>(), &ys);
        let vl = (!val.is_empty()).then(|| log_loss(&vscore.iter().map(|&z| sigmoid(z)).collect::<Vec<_>>(), &vys));
        (tl, vl)
    };
    let (tl, vl) = losses(&score, &vscore);
    let mut log = vec![EpochLog { epoch: 0, train_loss: tl, val_loss: vl }];
    let mut trees: Vec<Tree> = Vec::new();
    let mut best = (vl.unwrap_or(tl), 0usize);
    let mut stale = 0;
    for round in 1..=hp.max_trees {
        let (g, h): (Vec<f64>, Vec<f64>) = score
            .iter()
            .zip(&ys)
            .map(|(&z, &y)| {
                let p = sigmoid(z);
                (p - y, (p * (1.0 - p)).max(1e-16))
            })
            .unzip();
        let tree = fit_tree(&xs, &g, &h, grow);
        for (s, x) in score.iter_mut().zip(&xs) {
            *s += hp.shrinkage * tree.eval(x);
        }
        for (s, x) in vscore.iter_mut().zip(val) {
            *s += hp.shrinkage * tree.eval(&x.vector);
        }
        trees.push(tree);
        let (tl, vl) = losses(&score, &vscore);
        log.push(EpochLog { epoch: round, train_loss: tl, val_loss: vl });
        let s = vl.unwrap_or(tl);
        if s < best.0 {
            best = (s, trees.len());
            stale = 0;
        } else {
            stale += 1;
            if vl.is_some() && stale >= hp.patience {
                break;
            }
        }
    }
    trees.truncate(best.1);
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::BoostedStumps,
        input_width: d,
        params: ModelParams::Trees { base, shrinkage: hp.shrinkage, trees },
        scaler: None,
        training_log: log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub size: u64,
    /// Positive rate in the bin; 0 when empty.
    pub accuracy: f64,
    /// Mean prediction in the bin; 0 when empty.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
    pub log_loss: f64,
    pub n: u64,
}

/// Bin index for `p` among `w` equal-width bins on [0, 1]: the number of
/// interior edges `k / w` that `p` reaches. The last bin includes 1.
fn bin_of(p: f64, w: usize) -> usize {
    (1..w).take_while(|&k| p >= k as f64 / w as f64).count()
}

/// Log loss and expected calibration error with `w` bins.
pub fn calibration(preds: &[f64], labels: &[f64], w: usize) -> Result<CalibrationReport, BenchError> {
    if preds.is_empty() {
        return Err(BenchError::EmptyTest);
    }
    let w = w.max(1);
    let mut size = vec![0u64; w];
    let mut pos = vec![0.0; w];
    let mut conf = vec![0.0; w];
    for (&p, &y) in preds.iter().zip(labels) {
        let b = bin_of(p, w);
        size[b] += 1;
        pos[b] += y;
        conf[b] += p;
    }
    let n = preds.len() as f64;
    let bins: Vec<CalibrationBin> = (0..w)
        .map(|b| {
            let s = size[b] as f64;
            CalibrationBin {
                lower: b as f64 / w as f64,
                upper: (b + 1) as f64 / w as f64,
                size: size[b],
                accuracy: if size[b] == 0 { 0.0 } else { pos[b] / s },
                confidence: if size[b] == 0 { 0.0 } else { conf[b] / s },
            }
        })
        .collect();
    let ece = bins.iter().map(|b| b.size as f64 / n * (b.accuracy - b.confidence).abs()).sum();
    Ok(CalibrationReport { bins, ece, log_loss: log_loss(preds, labels), n: preds.len() as u64 })
}

pub fn evaluate(model: &TrainedModel, test: &[GameStateSample], w: usize) -> Result<CalibrationReport, BenchError> {
    calibration(&model.predict_all(test), &labels(test), w)
}

/// Prediction at every frame of a round, in tick order.
pub fn win_curve(model: &TrainedModel, round: &GameRound) -> Vec<(u32, f64)> {
    round.frames.iter().map(|f| (f.tick, model.predict(&GameStateSample::from_frame(round, f, "")))).collect()
}
