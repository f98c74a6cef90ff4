//! The learner/adversary game: train, attack, retrain, compare.
//!
//! One round per label pair. The learner trains on clean data and its
//! weights are frozen; the swarm searches for the single perturbation `a*`
//! that best trades recall loss against its L2 cost; then three models are
//! scored on the test split:
//!
//! * original: trained and tested on clean data,
//! * manipulated: the original weights tested on `X_test + A`,
//! * secure: trained from scratch on `X_train + A`, tested on `X_test + A`,
//!
//! with `A = scale * a*`. The hypothesis holds when secure beats manipulated.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::adversary;
use crate::data_io::{make_pair_dataset, PairSpec, RawLabeledImages};
use crate::error::{Error, Result};
use crate::learner::{self, Cnn, Dataset, ModelWeights, TrainConfig};
use crate::rng::derive_seed;
use crate::swarm::{self, Bounds, SwarmConfig};

pub const PERTURBATION_MAGIC: &[u8; 6] = b"EXALP1";
const HEADER_LEN: usize = 16;

// Streams split off the master seed.
const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_SWARM: u64 = 3;
const STREAM_SPLIT: u64 = 4;
const STREAM_SECURE_INIT: u64 = 5;
const STREAM_SECURE_TRAIN: u64 = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub swarm: SwarmConfig,
    pub train: TrainConfig,
    /// Per-pixel search box is `[-h, h]`.
    pub bounds_halfwidth: f64,
    /// Multiplier applied to `a*` after the search.
    pub scale: f64,
    /// Master seed. The `seed` fields of `swarm` and `train` are ignored;
    /// every stream is derived from this one.
    pub seed: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            swarm: SwarmConfig::default(),
            train: TrainConfig::default(),
            bounds_halfwidth: 0.1,
            scale: 1.0,
            seed: 0,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        self.swarm.validate()?;
        self.train.validate()?;
        if !(self.bounds_halfwidth.is_finite() && self.bounds_halfwidth > 0.0) {
            return Err(Error::config(format!(
                "game.bounds_halfwidth must be positive, got {}",
                self.bounds_halfwidth
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::config(format!(
                "game.scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// Seed of the original model's initial weights.
    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, STREAM_INIT)
    }

    /// The original model's training config, shuffle seed derived.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, STREAM_TRAIN),
            ..self.train.clone()
        }
    }

    /// The secure model starts from its own initialization and shuffle order.
    pub fn secure_init_seed(&self) -> u64 {
        derive_seed(self.seed, STREAM_SECURE_INIT)
    }

    pub fn secure_train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, STREAM_SECURE_TRAIN),
            ..self.train.clone()
        }
    }

    pub fn swarm_config(&self) -> SwarmConfig {
        SwarmConfig {
            seed: derive_seed(self.seed, STREAM_SWARM),
            ..self.swarm.clone()
        }
    }

    /// Seed of the per-pair subsample and split.
    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, STREAM_SPLIT)
    }
}

/// Output of [`run_exal`].
#[derive(Clone, Debug)]
pub struct Exal {
    pub a_star: Vec<f64>,
    /// The learner's weights after clean training.
    pub weights: ModelWeights,
    /// Best payoff after each sweep.
    pub payoff_trace: Vec<f64>,
    /// Every fitness value the swarm evaluated, in sweep and particle order.
    pub evaluated: Vec<f64>,
}

fn train_fresh(data: &Dataset, init_seed: u64, train: &TrainConfig) -> Result<Cnn> {
    let mut model = Cnn::new(data.shape(), init_seed)?;
    learner::train(&mut model, data, train)?;
    Ok(model)
}

fn train_original(data: &Dataset, cfg: &GameConfig) -> Result<Cnn> {
    train_fresh(data, cfg.init_seed(), &cfg.train_config())
}

fn attack(model: &Cnn, train: &Dataset, cfg: &GameConfig) -> Result<Exal> {
    let weights = model.weights();
    let data = Arc::new(train.clone());
    let fitness = adversary::make_swarm_fitness(&weights, data, model)?;
    let bounds = Bounds::symmetric(train.m(), cfg.bounds_halfwidth)?;
    let mut evaluated = Vec::new();
    let optimum = swarm::optimize_observed(fitness, &bounds, &cfg.swarm_config(), |sweep| {
        evaluated.extend_from_slice(sweep.fitness);
        log::debug!("sweep {}: best payoff {:.6}", sweep.iteration, -sweep.gbest_fitness);
    })?;
    if optimum.nan_evaluations > 0 {
        log::warn!("{} fitness evaluations were NaN", optimum.nan_evaluations);
    }
    Ok(Exal {
        a_star: optimum.velocity,
        weights,
        payoff_trace: optimum.trace.iter().map(|f| -f).collect(),
        evaluated,
    })
}

/// Trains the learner on clean data, freezes it and searches for `a*`.
pub fn run_exal(train: &Dataset, cfg: &GameConfig) -> Result<Exal> {
    cfg.validate()?;
    let model = train_original(train, cfg)?;
    attack(&model, train, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    pub a_star: Vec<f64>,
    pub scale: f64,
    pub f1_original: f64,
    pub f1_manipulated: f64,
    pub f1_secure: f64,
    /// `f1_secure > f1_manipulated`.
    pub hypothesis_satisfied: bool,
    /// Best payoff after each sweep; empty when `a*` was supplied directly.
    pub payoff_trace: Vec<f64>,
}

impl GameResult {
    pub fn hypothesis_label(&self) -> &'static str {
        if self.hypothesis_satisfied {
            "Satisfied"
        } else {
            "Not Satisfied"
        }
    }
}

/// `scale * a`, elementwise.
pub fn applied_perturbation(a_star: &[f64], scale: f64) -> Vec<f64> {
    a_star.iter().map(|v| scale * v).collect()
}

/// Scores the three models given an already trained original.
fn score(original: &Cnn, train: &Dataset, test: &Dataset, a_star: &[f64], cfg: &GameConfig) -> Result<GameResult> {
    let applied = applied_perturbation(a_star, cfg.scale);
    let test_adv = test.perturbed(&applied)?;
    let train_adv = train.perturbed(&applied)?;

    let f1_original = learner::evaluate(original, test).f1;
    let f1_manipulated = learner::evaluate(original, &test_adv).f1;
    let secure = train_fresh(&train_adv, cfg.secure_init_seed(), &cfg.secure_train_config())?;
    let f1_secure = learner::evaluate(&secure, &test_adv).f1;

    Ok(GameResult {
        a_star: a_star.to_vec(),
        scale: cfg.scale,
        f1_original,
        f1_manipulated,
        f1_secure,
        hypothesis_satisfied: f1_secure > f1_manipulated,
        payoff_trace: Vec::new(),
    })
}

/// Trains the original model and scores all three variants for a given `a*`.
pub fn build_and_score(train: &Dataset, test: &Dataset, a_star: &[f64], cfg: &GameConfig) -> Result<GameResult> {
    cfg.validate()?;
    check_shapes(train, test, a_star)?;
    let original = train_original(train, cfg)?;
    score(&original, train, test, a_star, cfg)
}

fn check_shapes(train: &Dataset, test: &Dataset, a_star: &[f64]) -> Result<()> {
    if train.shape() != test.shape() {
        return Err(Error::config(format!(
            "train shape {:?} differs from test shape {:?}",
            train.shape(),
            test.shape()
        )));
    }
    if a_star.len() != train.m() {
        return Err(Error::DimensionMismatch {
            what: "perturbation length",
            expected: train.m(),
            found: a_star.len(),
        });
    }
    Ok(())
}

/// One full round: train, attack, retrain, score.
pub fn play(train: &Dataset, test: &Dataset, cfg: &GameConfig) -> Result<GameResult> {
    cfg.validate()?;
    if train.shape() != test.shape() {
        return Err(Error::config("train and test shapes differ"));
    }
    let original = train_original(train, cfg)?;
    let exal = attack(&original, train, cfg)?;
    let mut result = score(&original, train, test, &exal.a_star, cfg)?;
    result.payoff_trace = exal.payoff_trace;
    Ok(result)
}

/// One row of an experiment.
#[derive(Clone, Debug)]
pub struct PairResult {
    pub positive: String,
    pub negative: String,
    pub seed: u64,
    pub result: GameResult,
    pub runtime: Duration,
}

/// Plays one round per `(positive, negative)` pair. Every label is resolved
/// before any training starts.
pub fn run_experiment(
    pairs: &[(String, String)],
    raw: &RawLabeledImages,
    template: &PairSpec,
    cfg: &GameConfig,
) -> Result<Vec<PairResult>> {
    cfg.validate()?;
    let resolved = pairs
        .iter()
        .map(|(p, n)| Ok((raw.resolve_label(p)?, raw.resolve_label(n)?)))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(pairs.len());
    for ((pos_name, neg_name), (pos, neg)) in pairs.iter().zip(resolved) {
        let started = Instant::now();
        let spec = PairSpec {
            positive: pos,
            negative: neg,
            ..template.clone()
        };
        let (train, test) = make_pair_dataset(raw, &spec, cfg.split_seed())?;
        log::info!(
            "pair ({pos_name}, {neg_name}): {} train / {} test samples",
            train.len(),
            test.len()
        );
        let result = play(&train, &test, cfg)?;
        log::info!(
            "pair ({pos_name}, {neg_name}): F1 {:.4} / {:.4} / {:.4}, {}",
            result.f1_original,
            result.f1_manipulated,
            result.f1_secure,
            result.hypothesis_label()
        );
        rows.push(PairResult {
            positive: pos_name.clone(),
            negative: neg_name.clone(),
            seed: cfg.seed,
            result,
            runtime: started.elapsed(),
        });
    }
    Ok(rows)
}

pub const RESULTS_HEADER: [&str; 9] = [
    "labels_pos",
    "labels_neg",
    "scale",
    "f1_original",
    "f1_manipulated",
    "f1_secure",
    "hypothesis",
    "seed",
    "runtime_seconds",
];

#[derive(Serialize)]
struct CsvRow<'a> {
    labels_pos: &'a str,
    labels_neg: &'a str,
    scale: f64,
    f1_original: f64,
    f1_manipulated: f64,
    f1_secure: f64,
    hypothesis: &'a str,
    seed: u64,
    runtime_seconds: Option<f64>,
}

/// Writes the results table. Wall-clock time varies between runs, so the
/// `runtime_seconds` column is left empty unless `with_runtime` is set.
pub fn write_results_csv(rows: &[PairResult], with_runtime: bool, out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let csv_err = |e: csv::Error| Error::Format {
        what: "results table",
        reason: e.to_string(),
    };
    w.write_record(RESULTS_HEADER).map_err(csv_err)?;
    for row in rows {
        let r = &row.result;
        w.serialize(CsvRow {
            labels_pos: &row.positive,
            labels_neg: &row.negative,
            scale: r.scale,
            f1_original: r.f1_original,
            f1_manipulated: r.f1_manipulated,
            f1_secure: r.f1_secure,
            hypothesis: r.hypothesis_label(),
            seed: row.seed,
            runtime_seconds: with_runtime.then_some(row.runtime.as_secs_f64()),
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format {
        what: "results table",
        reason: e.to_string(),
    })
}

/// `EXALP1`, length as u32 LE, six reserved zero bytes, then f64 LE values.
pub fn encode_perturbation(a: &[f64]) -> Result<Vec<u8>> {
    let m = u32::try_from(a.len()).map_err(|_| Error::Format {
        what: "perturbation",
        reason: format!("{} values do not fit a 32-bit length", a.len()),
    })?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * a.len());
    out.extend_from_slice(PERTURBATION_MAGIC);
    out.extend_from_slice(&m.to_le_bytes());
    out.extend_from_slice(&[0; 6]);
    for v in a {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_perturbation(bytes: &[u8]) -> Result<Vec<f64>> {
    let bad = |reason: String| Error::Format {
        what: "perturbation",
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..6] != PERTURBATION_MAGIC {
        return Err(bad("missing EXALP1 magic".into()));
    }
    let m = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * m {
        return Err(bad(format!(
            "header declares {m} values but {} payload bytes follow",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_perturbation(path: &Path, a: &[f64]) -> Result<()> {
    fs::write(path, encode_perturbation(a)?).map_err(|e| Error::io(path, e))
}

pub fn load_perturbation(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_perturbation(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_layout() {
        let bytes = encode_perturbation(&[1.5, -0.25]).unwrap();
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[..6], b"EXALP1");
        assert_eq!(&bytes[6..10], &2u32.to_le_bytes());
        assert_eq!(&bytes[10..16], &[0; 6]);
        assert_eq!(&bytes[16..24], &1.5f64.to_le_bytes());
        assert_eq!(decode_perturbation(&bytes).unwrap(), vec![1.5, -0.25]);
    }

    #[test]
    fn container_rejects_damage() {
        let bytes = encode_perturbation(&[0.1; 3]).unwrap();
        assert!(decode_perturbation(&bytes[..20]).is_err());
        assert!(decode_perturbation(&bytes[..10]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_perturbation(&wrong).is_err());
    }

    #[test]
    fn scale_is_exact() {
        let a = [0.1, -0.07, 0.0];
        let s = 5.0;
        let applied = applied_perturbation(&a, s);
        for (x, y) in applied.iter().zip(a) {
            assert_eq!(*x, s * y);
        }
    }

    #[test]
    fn config_rejects_nonpositive_scale() {
        let cfg = GameConfig {
            scale: 0.0,
            ..GameConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = GameConfig {
            bounds_halfwidth: -1.0,
            ..GameConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn results_header_and_vocabulary() {
        let row = PairResult {
            positive: "2".into(),
            negative: "8".into(),
            seed: 42,
            result: GameResult {
                a_star: vec![],
                scale: 1.0,
                f1_original: 0.9,
                f1_manipulated: 0.5,
                f1_secure: 0.8,
                hypothesis_satisfied: true,
                payoff_trace: vec![],
            },
            runtime: Duration::from_millis(1500),
        };
        let mut out = Vec::new();
        write_results_csv(std::slice::from_ref(&row), false, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "labels_pos,labels_neg,scale,f1_original,f1_manipulated,f1_secure,hypothesis,seed,runtime_seconds\n\
             2,8,1.0,0.9,0.5,0.8,Satisfied,42,\n"
        );
        let mut out = Vec::new();
        write_results_csv(&[row], true, &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().ends_with(",42,1.5\n"));
    }
}
