use std::time::Instant;

use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{GraphKind, Modality, TrainConfig};
use super::features::FoldFeatures;
use super::metrics::{evaluate_metrics, positive_scores, Metrics};
use super::report::EpochRecord;
use crate::amrs::{AmrsCache, BetaCoefficients};
use crate::data::{Cohort, Fold};
use crate::encoder::GtEncoder;
use crate::error::{Error, Result};
use crate::gradcheck::{all_coordinates, check_gradients, GradCheckReport};
use crate::fusion::{contribution_weights, fuse_modalities, FusionParams};
use crate::graph::{adjacency_on_tape, dropout_rng, edge_dropout_mask};
use crate::objective::{classification_head, graph_regularization, total_objective, HeadParams, LossBreakdown, LossTerms};
use crate::params::{Adam, AdamConfig, Bound, ParamId, ParamStore};
use crate::tape::{Tape, Var};

/// Parameter layout of the full network; values live in `store`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub store: ParamStore,
    pub encoder_img: Option<GtEncoder>,
    pub encoder_non: Option<GtEncoder>,
    pub fusion: Option<FusionParams>,
    pub head: HeadParams,
    /// Attribute-weight logits, present with the reward-system graph.
    pub alpha_logits: Option<ParamId>,
}

impl Model {
    pub fn new(config: &TrainConfig, n_attributes: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let d = config.embed_dim;
        let encoder_img = config
            .modality
            .uses_imaging()
            .then(|| GtEncoder::new(&mut store, "img", d, &config.encoder_config(config.depth_imaging), rng))
            .transpose()?;
        let encoder_non = config
            .modality
            .uses_nonimaging()
            .then(|| GtEncoder::new(&mut store, "non", d, &config.encoder_config(config.depth_nonimaging), rng))
            .transpose()?;
        let fusion = (config.modality == Modality::Both).then(|| FusionParams::new(&mut store, "fusion", config.hidden_dim, rng));
        let head = HeadParams::new(&mut store, "head", config.hidden_dim, config.hidden_dim, rng);
        let alpha_logits = (config.graph == GraphKind::Amrs).then(|| store.add("amrs.alpha_logits", Array2::zeros((1, n_attributes)), false));
        Ok(Self {
            store,
            encoder_img,
            encoder_non,
            fusion,
            head,
            alpha_logits,
        })
    }
}

/// Tape handles of one forward pass.
struct Pass {
    logits: Var,
    loss: Var,
    breakdown: LossBreakdown,
    z_img: Option<Var>,
    z_non: Option<Var>,
    z: Var,
    alpha: Option<Var>,
}

/// Everything a forward pass needs besides the parameters.
struct Context<'a> {
    features: &'a FoldFeatures,
    amrs: Option<AmrsCache>,
    labels: Vec<u8>,
    train: &'a [usize],
    config: &'a TrainConfig,
}

impl<'a> Context<'a> {
    fn new(cohort: &Cohort, fold: &'a Fold, features: &'a FoldFeatures, config: &'a TrainConfig) -> Result<Self> {
        let amrs = match &features.tables {
            Some(t) => Some(AmrsCache::new(t, &BetaCoefficients::uniform(t.n_attributes(), config.beta()))?),
            None => None,
        };
        Ok(Self {
            features,
            amrs,
            labels: cohort.labels(),
            train: &fold.train,
            config,
        })
    }
}

/// One forward pass; `dropout` carries the generator of a training epoch.
fn forward(model: &Model, tape: &mut Tape, bound: &Bound, ctx: &Context, dropout: Option<&mut ChaCha8Rng>) -> Result<Pass> {
    let f = ctx.features;
    let n = f.x_img.nrows();
    let mut dropout = dropout;

    let alpha = match (&ctx.amrs, model.alpha_logits) {
        (Some(cache), Some(id)) => Some(cache.alpha(tape, bound.var(id))),
        _ => None,
    };
    let c = match (&ctx.amrs, alpha) {
        (Some(cache), Some(a)) => cache.affinity(tape, a),
        _ => tape.constant(
            f.fixed_affinity
                .clone()
                .ok_or_else(|| Error::Runtime("graph needs an affinity matrix".into()))?,
        ),
    };
    let weighted = match dropout.as_deref_mut() {
        Some(rng) if ctx.config.edge_dropout > 0.0 => &f.similarity * &edge_dropout_mask(n, ctx.config.edge_dropout, rng),
        _ => f.similarity.clone(),
    };
    let a = adjacency_on_tape(tape, &weighted, c);

    let mut encode = |enc: &Option<GtEncoder>, x: &Array2<f64>, tape: &mut Tape| -> Result<Option<Var>> {
        let Some(enc) = enc else { return Ok(None) };
        let h0 = tape.constant(x.clone());
        Ok(Some(enc.forward(tape, bound, h0, a, dropout.as_deref_mut())?.h))
    };
    let z_img = encode(&model.encoder_img, &f.x_img, tape)?;
    let z_non = encode(&model.encoder_non, &f.x_non, tape)?;

    let (z, omega) = match (z_img, z_non, &model.fusion) {
        (Some(zi), Some(zn), Some(fp)) => {
            let j = fuse_modalities(tape, bound, fp, zi, zn)?;
            let w = contribution_weights(tape, j.tau_img, j.tau_non, j.tau_sh)?;
            (j.z, w)
        }
        (Some(zi), None, _) => (zi, tape.constant(array![[1.0, 0.0]])),
        (None, Some(zn), _) => (zn, tape.constant(array![[0.0, 1.0]])),
        _ => return Err(Error::Runtime("model has no usable modality channel".into())),
    };

    let (logits, l_ce) = classification_head(tape, bound, &model.head, z, ctx.train, &ctx.labels)?;
    let a_reg = if ctx.config.graph_reg_updates_alpha {
        a
    } else {
        let fixed = tape.value(a).clone();
        tape.constant(fixed)
    };
    let smoothness = |zv: Option<Var>, tape: &mut Tape| -> Result<(Option<Var>, Option<Var>)> {
        match zv {
            Some(zv) => {
                let (s, d) = graph_regularization(tape, zv, a_reg)?;
                Ok((Some(s), Some(d)))
            }
            None => Ok((None, None)),
        }
    };
    let (l_smh_img, deg_img) = smoothness(z_img, tape)?;
    let (l_smh_non, deg_non) = smoothness(z_non, tape)?;
    let l_deg = deg_img.or(deg_non).expect("at least one channel");
    let l_r = match (&ctx.amrs, alpha) {
        (Some(cache), Some(al)) => Some(cache.reward_loss(tape, al)),
        _ => None,
    };
    let terms = LossTerms {
        l_ce,
        l_smh_img,
        l_smh_non,
        l_deg,
        l_r,
        omega,
    };
    let (loss, breakdown) = total_objective(tape, &terms, &ctx.config.loss_weights())?;
    Ok(Pass {
        logits,
        loss,
        breakdown,
        z_img,
        z_non,
        z,
        alpha,
    })
}

/// Loss and gradients (store order) of one training step.
fn loss_and_gradients(model: &Model, ctx: &Context, dropout: Option<&mut ChaCha8Rng>) -> Result<(LossBreakdown, Vec<Array2<f64>>)> {
    let mut tape = Tape::new();
    let bound = model.store.bind(&mut tape);
    let pass = forward(model, &mut tape, &bound, ctx, dropout)?;
    let mut grads = tape.backward(pass.loss);
    Ok((pass.breakdown, bound.collect(&model.store, &mut grads)))
}

/// Compares analytic gradients of the total training loss of a freshly
/// initialised model with central differences, under one fixed dropout
/// draw. Checks one random coordinate of every parameter plus `extra`
/// further random coordinates. Attribute-weight coordinates only match when
/// `graph_reg_updates_alpha` is set, since the default detaches that path.
pub fn check_model_gradients(cohort: &Cohort, fold: &Fold, features: &FoldFeatures, config: &TrainConfig, extra: usize, seed: u64) -> Result<GradCheckReport> {
    let ctx = Context::new(cohort, fold, features, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Model::new(config, cohort.schema.len(), &mut rng)?;
    let (_, grads) = loss_and_gradients(&model, &ctx, Some(&mut dropout_rng(seed, 1)))?;

    let all = all_coordinates(&model.store);
    let mut coords: Vec<(ParamId, usize)> = model
        .store
        .ids()
        .map(|id| (id, rng.random_range(0..model.store.get(id).len())))
        .collect();
    coords.extend((0..extra).map(|_| all[rng.random_range(0..all.len())]));

    let probe = Model {
        store: ParamStore::new(),
        ..model.clone()
    };
    check_gradients(&model.store, &grads, &coords, 1e-5, |store| {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let pass = forward(&probe, &mut tape, &bound, &ctx, Some(&mut dropout_rng(seed, 1)))?;
        Ok(pass.breakdown.l_total)
    })
}

struct Evaluation {
    logits: Array2<f64>,
    breakdown: LossBreakdown,
    z_img: Option<Array2<f64>>,
    z_non: Option<Array2<f64>>,
    z: Array2<f64>,
    alpha: Option<Vec<f64>>,
}

fn evaluate(model: &Model, ctx: &Context) -> Result<Evaluation> {
    let mut tape = Tape::new();
    let bound = model.store.bind_frozen(&mut tape);
    let p = forward(model, &mut tape, &bound, ctx, None)?;
    let grab = |v: Option<Var>| v.map(|v| tape.value(v).clone());
    Ok(Evaluation {
        logits: tape.value(p.logits).clone(),
        breakdown: p.breakdown,
        z_img: grab(p.z_img),
        z_non: grab(p.z_non),
        z: tape.value(p.z).clone(),
        alpha: grab(p.alpha).map(|a| a.iter().copied().collect()),
    })
}

fn accuracy(logits: &Array2<f64>, labels: &[u8], idx: &[usize]) -> f64 {
    let hits = idx.iter().filter(|&&i| u8::from(logits[[i, 1]] > logits[[i, 0]]) == labels[i]).count();
    hits as f64 / idx.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject_id: String,
    pub score: f64,
    pub predicted: u8,
    pub truth: u8,
}

/// Trained state and outputs of one fold.
#[derive(Debug, Clone)]
pub struct FoldOutput {
    pub fold: usize,
    pub model: Model,
    pub metrics: Metrics,
    /// Epoch whose parameters were restored (0 = initial state).
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_acc: f64,
    pub trace: Vec<EpochRecord>,
    pub predictions: Vec<Prediction>,
    pub embedding_img: Option<Array2<f64>>,
    pub embedding_non: Option<Array2<f64>>,
    pub embedding_joint: Array2<f64>,
    pub omega: (f64, f64),
    pub alpha: Option<Vec<f64>>,
    pub sigma: f64,
    pub wall_clock_s: f64,
}

/// Trains on one fold with early stopping on validation accuracy and
/// reports test metrics of the restored best state. The fold seed is
/// `config.seed + fold_index`.
pub fn train_fold(cohort: &Cohort, fold_index: usize, fold: &Fold, features: &FoldFeatures, config: &TrainConfig) -> Result<FoldOutput> {
    let start = Instant::now();
    let seed = config.seed.wrapping_add(fold_index as u64);
    let ctx = Context::new(cohort, fold, features, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(config, cohort.schema.len(), &mut rng)?;
    let mut opt = Adam::new(AdamConfig::new(config.lr, config.weight_decay), &model.store);

    let init = evaluate(&model, &ctx)?;
    let mut best_val = accuracy(&init.logits, &ctx.labels, &fold.val);
    let mut best_store = model.store.clone();
    let mut best_epoch = 0;
    let mut trace = Vec::new();
    let mut epochs_run = 0;

    for epoch in 1..=config.max_epochs {
        let mut drng = dropout_rng(seed, epoch as u64);
        let (breakdown, grads) = loss_and_gradients(&model, &ctx, Some(&mut drng))?;
        if let Some((k, _)) = grads.iter().enumerate().find(|(_, g)| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite {
                component: format!("gradient of {}", model.store.name(ParamId(k))),
                detail: format!("fold {fold_index}, epoch {epoch}, loss {breakdown:?}"),
            });
        }
        opt.step(&mut model.store, &grads);
        if !model.store.all_finite() {
            return Err(Error::NonFinite {
                component: "parameters".into(),
                detail: format!("fold {fold_index}, epoch {epoch} after optimiser step"),
            });
        }
        epochs_run = epoch;
        let eval = evaluate(&model, &ctx)?;
        let val_acc = accuracy(&eval.logits, &ctx.labels, &fold.val);
        trace.push(EpochRecord::new(epoch, &breakdown, val_acc, eval.alpha.clone().unwrap_or_default()));
        if val_acc >= best_val {
            best_val = val_acc;
            best_store = model.store.clone();
            best_epoch = epoch;
        }
        if epoch - best_epoch >= config.patience {
            break;
        }
    }

    model.store = best_store;
    let eval = evaluate(&model, &ctx)?;
    let metrics = evaluate_metrics(&eval.logits, &ctx.labels, &fold.test)?;
    let scores = positive_scores(&eval.logits);
    let predictions = fold
        .test
        .iter()
        .map(|&i| Prediction {
            subject_id: cohort.records[i].subject_id.clone(),
            score: scores[i],
            predicted: u8::from(eval.logits[[i, 1]] > eval.logits[[i, 0]]),
            truth: ctx.labels[i],
        })
        .collect();
    Ok(FoldOutput {
        fold: fold_index,
        metrics,
        best_epoch,
        epochs_run,
        best_val_acc: best_val,
        trace,
        predictions,
        embedding_img: eval.z_img,
        embedding_non: eval.z_non,
        embedding_joint: eval.z,
        omega: (eval.breakdown.omega_img, eval.breakdown.omega_non),
        alpha: eval.alpha,
        sigma: features.sigma,
        wall_clock_s: start.elapsed().as_secs_f64(),
        model,
    })
}
