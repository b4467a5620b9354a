//! End-to-end training orchestration.
//!
//! One run: initialize the model and (in clustering modes) the cluster
//! state from source class centers and target k-means, then loop over
//! epochs of mini-batch steps. Each step draws B source and B target
//! samples with replacement, computes the live loss terms, and applies
//! one simultaneous SGD-with-momentum update:
//!
//! - feature extractor: source task + pseudo-label task + domain loss
//!   through the GRL + clustering term,
//! - classifier: source task + pseudo-label task,
//! - discriminator: domain loss,
//! - centroids: clustering term.
//!
//! Pseudo-labels refresh at epoch end by nearest centroid. Everything is
//! sequential and seeded, so a run is a pure function of (config, data).

pub mod ablation;
pub mod mode;
pub mod report;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clustering::{
    init_cluster_state, kmeans, source_class_centers, update_pseudo_labels, ClusterState,
    KMEANS_MAX_ITERS, KMEANS_TOL,
};
use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses;
use crate::losses::AssignmentMatrix;
use crate::matrix::Matrix;
use crate::metrics::{evaluate_dataset, DEFAULT_THRESHOLD};
use crate::model::{Batch, DcdaModel};
use crate::nn::{add_grads, backward, forward, grad_reverse, zero_grads};
use crate::optim::{SgdMomentum, StackVelocity};

use mode::ModePolicy;
use report::{EpochTrace, TrainReport};

/// GRL ramp: `max_lambda * (2 / (1 + exp(-gamma * progress)) - 1)`.
///
/// Monotone non-decreasing on [0,1], zero at progress 0, bounded by
/// `max_lambda`.
pub fn lambda_schedule(progress: f64, gamma: f64, max_lambda: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&progress));
    max_lambda * (2.0 / (1.0 + (-gamma * progress).exp()) - 1.0)
}

/// Loss values produced by one step; terms not live in the current mode
/// are zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepLosses {
    pub source_cls: f64,
    pub target_cls: f64,
    pub domain: f64,
    pub cluster: f64,
    pub balance: f64,
    /// Weighted total driving the feature-extractor update.
    pub total_feature: f64,
}

/// Optimizer state for one run: velocity buffers per parameter group.
pub struct TrainerState {
    opt: SgdMomentum,
    vel_feature: StackVelocity,
    vel_classifier: StackVelocity,
    vel_discriminator: StackVelocity,
    vel_centroids: Matrix,
}

impl TrainerState {
    pub fn new(model: &DcdaModel, config: &TrainConfig) -> Result<Self> {
        Ok(TrainerState {
            opt: SgdMomentum::new(config.lr, config.momentum)?,
            vel_feature: StackVelocity::zeros(&model.feature_extractor),
            vel_classifier: StackVelocity::zeros(&model.classifier),
            vel_discriminator: StackVelocity::zeros(&model.discriminator),
            vel_centroids: Matrix::zeros(model.centroids.rows(), model.centroids.cols()),
        })
    }
}

fn finite_or_err(value: f64, term: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss {
            term: term.into(),
            value,
        })
    }
}

/// One mini-batch update. Gradients for every live term are evaluated at
/// the current parameters, then all parameter groups step together.
///
/// `target_batch` must carry the current pseudo-labels as its class
/// labels in modes that use the target classification or clustering
/// losses.
pub fn train_step(
    model: &mut DcdaModel,
    state: &mut TrainerState,
    source_batch: &Batch,
    target_batch: Option<&Batch>,
    config: &TrainConfig,
    policy: &dyn ModePolicy,
    lambda: f64,
) -> Result<StepLosses> {
    let source_labels = source_batch
        .class_labels
        .as_ref()
        .ok_or_else(|| Error::MissingLabels("source batch must be labeled".into()))?;
    let batch_rows = source_batch.features.rows();

    let mut losses_out = StepLosses::default();

    // ---- forward passes ----
    let (z_s, tape_f_s) = forward(&model.feature_extractor, &source_batch.features)?;
    let (p_s_raw, tape_c_s) = forward(&model.classifier, &z_s)?;
    let p_s = AssignmentMatrix::new(p_s_raw)?;
    losses_out.source_cls = finite_or_err(losses::task_loss(&p_s, source_labels)?, "L_y^s")?;

    let target = if policy.uses_target() {
        let batch = target_batch
            .ok_or_else(|| Error::InvalidConfig("mode requires a target batch".into()))?;
        let (z_t, tape_f_t) = forward(&model.feature_extractor, &batch.features)?;
        Some((batch, z_t, tape_f_t))
    } else {
        None
    };

    let target_cls = if policy.uses_target_cls() {
        let (batch, z_t, _) = target.as_ref().expect("target modes carry a batch");
        let pseudo = batch
            .class_labels
            .as_ref()
            .ok_or_else(|| Error::MissingLabels("target batch needs pseudo-labels".into()))?;
        let (p_t_raw, tape_c_t) = forward(&model.classifier, z_t)?;
        let p_t = AssignmentMatrix::new(p_t_raw)?;
        let (loss, top_grad) = if config.soft_target_cls {
            // soft variant: sharpen the classifier distribution, mix the
            // pseudo-labels in, use the result as a constant soft target
            let (q_raw, _) = losses::auxiliary_distribution(p_t.matrix())?;
            let q = losses::mix_pseudo(&q_raw, pseudo, config.mix_weight)?;
            (
                losses::soft_cross_entropy(&q, &p_t)?,
                losses::soft_cross_entropy_grad(&q, &p_t)?,
            )
        } else {
            (
                losses::task_loss(&p_t, pseudo)?,
                losses::task_loss_grad(&p_t, pseudo)?,
            )
        };
        losses_out.target_cls = finite_or_err(loss, "L_y~^t")?;
        Some((tape_c_t, top_grad))
    } else {
        None
    };

    let domain = if policy.uses_domain_loss() {
        let (_, z_t, _) = target.as_ref().expect("domain loss needs a target batch");
        let z_cat = z_s.concat_rows(z_t)?;
        let (d_raw, tape_d) = forward(&model.discriminator, &z_cat)?;
        let d_probs = AssignmentMatrix::new(d_raw)?;
        let mut domain_labels = vec![0usize; batch_rows];
        domain_labels.resize(batch_rows + z_t.rows(), 1);
        losses_out.domain =
            finite_or_err(losses::domain_loss(&d_probs, &domain_labels)?, "L_d")?;
        let top_grad = losses::domain_loss_grad(&d_probs, &domain_labels)?;
        Some((tape_d, top_grad))
    } else {
        None
    };

    let cluster = if policy.uses_clustering() {
        let (batch, z_t, _) = target.as_ref().expect("clustering needs a target batch");
        let pseudo = batch
            .class_labels
            .as_ref()
            .ok_or_else(|| Error::MissingLabels("target batch needs pseudo-labels".into()))?;
        let p_assign = losses::student_t_assignment(z_t, &model.centroids, config.alpha)?;
        let (q_raw, _degenerate) = losses::auxiliary_distribution(p_assign.matrix())?;
        let q = losses::mix_pseudo(&q_raw, pseudo, config.mix_weight)?;
        losses_out.cluster =
            finite_or_err(losses::clustering_loss(&q, &p_assign)?, "L_cl^t")?;
        losses_out.balance =
            finite_or_err(losses::balance_regularizer(&p_assign)?, "L_reg")?;
        // the balance term is differentiated through the model assignment,
        // so it shapes the feature extractor and the centroids
        let mut d_p = losses::clustering_loss_grad(&q, &p_assign)?;
        d_p.add_scaled_assign(&losses::balance_regularizer_grad(&p_assign)?, 1.0)?;
        Some(d_p)
    } else {
        None
    };

    losses_out.total_feature = config.w_source_cls * losses_out.source_cls
        + config.w_target_cls * losses_out.target_cls
        + config.w_domain * losses_out.domain
        + config.w_cluster * (losses_out.cluster + losses_out.balance);

    // ---- backward passes ----
    let mut f_grads = zero_grads(&model.feature_extractor);
    let mut c_grads = zero_grads(&model.classifier);

    // source task loss -> classifier + feature extractor
    let top_s = losses::task_loss_grad(&p_s, source_labels)?.scale(config.w_source_cls);
    let (c_grads_s, dz_s_cls) = backward(&model.classifier, &tape_c_s, &top_s)?;
    add_grads(&mut c_grads, &c_grads_s, 1.0);
    let mut g_source = dz_s_cls;

    let mut g_target = target
        .as_ref()
        .map(|(_, z_t, _)| Matrix::zeros(z_t.rows(), z_t.cols()));

    // pseudo-label task loss -> classifier + feature extractor
    if let Some((tape_c_t, top_grad)) = &target_cls {
        let (c_grads_t, dz_t_cls) =
            backward(&model.classifier, tape_c_t, &top_grad.scale(config.w_target_cls))?;
        add_grads(&mut c_grads, &c_grads_t, 1.0);
        g_target
            .as_mut()
            .expect("target gradient buffer exists")
            .add_scaled_assign(&dz_t_cls, 1.0)?;
    }

    // domain loss -> discriminator directly, feature extractor through GRL
    let d_grads = if let Some((tape_d, top_grad)) = &domain {
        let (d_grads, dz_cat) =
            backward(&model.discriminator, tape_d, &top_grad.scale(config.w_domain))?;
        let reversed = grad_reverse(&dz_cat, lambda);
        g_source.add_scaled_assign(&reversed.slice_rows(0, batch_rows), 1.0)?;
        g_target
            .as_mut()
            .expect("target gradient buffer exists")
            .add_scaled_assign(&reversed.slice_rows(batch_rows, reversed.rows()), 1.0)?;
        Some(d_grads)
    } else {
        None
    };

    // clustering term -> centroids directly, feature extractor via z_t
    let z_grads = if let Some(d_p) = &cluster {
        let (_, z_t, _) = target.as_ref().expect("clustering needs a target batch");
        let (dz_t, d_cent) =
            losses::student_t_backward(z_t, &model.centroids, config.alpha, d_p)?;
        g_target
            .as_mut()
            .expect("target gradient buffer exists")
            .add_scaled_assign(&dz_t, config.w_cluster)?;
        Some(d_cent.scale(config.w_cluster))
    } else {
        None
    };

    // feature extractor gathers both domains' gradients
    let (f_grads_s, _) = backward(&model.feature_extractor, &tape_f_s, &g_source)?;
    add_grads(&mut f_grads, &f_grads_s, 1.0);
    if let (Some((_, _, tape_f_t)), Some(g_t)) = (target.as_ref(), g_target.as_ref()) {
        let (f_grads_t, _) = backward(&model.feature_extractor, tape_f_t, g_t)?;
        add_grads(&mut f_grads, &f_grads_t, 1.0);
    }

    // ---- simultaneous update ----
    state.opt.step_stack(
        &mut model.feature_extractor,
        &f_grads,
        &mut state.vel_feature,
        "feature extractor total",
    )?;
    state.opt.step_stack(
        &mut model.classifier,
        &c_grads,
        &mut state.vel_classifier,
        "classifier total",
    )?;
    if let Some(d_grads) = &d_grads {
        state.opt.step_stack(
            &mut model.discriminator,
            d_grads,
            &mut state.vel_discriminator,
            "L_d",
        )?;
    }
    if let Some(z_grads) = &z_grads {
        let mut centroids = std::mem::replace(&mut model.centroids, Matrix::zeros(0, 0));
        let step = state
            .opt
            .step_matrix(&mut centroids, z_grads, &mut state.vel_centroids, "L_cl^t");
        model.centroids = centroids;
        step?;
    }
    Ok(losses_out)
}

fn draw_batch(
    dataset: &Dataset,
    labels: Option<&[usize]>,
    domain_label: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Batch {
    let n = dataset.len();
    let indices: Vec<usize> = (0..batch_size).map(|_| rng.gen_range(0..n)).collect();
    Batch {
        features: dataset.features.gather_rows(&indices),
        class_labels: labels.map(|l| indices.iter().map(|&i| l[i]).collect()),
        domain_labels: vec![domain_label; batch_size],
    }
}

fn init_clusters(
    model: &DcdaModel,
    source: &Dataset,
    source_labels: &[usize],
    target: &Dataset,
) -> Result<ClusterState> {
    let z_source = model.embed(&source.features)?;
    let z_target = model.embed(&target.features)?;
    init_cluster_state(&z_source, source_labels, &z_target)
}

/// Epoch-start re-update (the textual variant behind
/// `reinit_kmeans_each_epoch`): with model parameters fixed, recompute
/// source class centers, re-run k-means on the target embeddings seeded
/// from the current learnable centroids, and average the two. Seeding
/// from the current centroids keeps cluster identities continuous across
/// epochs.
fn reupdate_clusters(
    model: &DcdaModel,
    source: &Dataset,
    source_labels: &[usize],
    target: &Dataset,
    state: &mut ClusterState,
) -> Result<()> {
    let z_source = model.embed(&source.features)?;
    let z_target = model.embed(&target.features)?;
    let src_centers = source_class_centers(&z_source, source_labels)?;
    let km = kmeans(&z_target, &state.centroids, KMEANS_MAX_ITERS, KMEANS_TOL)?;
    state.centroids = src_centers.add(&km.centers)?.scale(0.5);
    state.pseudo_labels = km.labels;
    Ok(())
}

/// Runs the full training loop for the configured mode.
///
/// `target` may be omitted in source-only mode. Target labels, when
/// present, are never read by training; they only feed the final report
/// metrics.
pub fn train(
    config: &TrainConfig,
    source: &Dataset,
    target: Option<&Dataset>,
) -> Result<(DcdaModel, TrainReport)> {
    config.validate()?;
    source.validate()?;
    if let Some(t) = target {
        t.validate()?;
    }
    let policy = mode::mode_by_name(&config.mode)?;
    let source_labels = source
        .labels
        .clone()
        .ok_or_else(|| Error::MissingLabels("source dataset must be labeled".into()))?;
    if source.is_empty() {
        return Err(Error::EmptyBatch("source dataset".into()));
    }
    let target = if policy.uses_target() {
        let t = target.ok_or_else(|| {
            Error::InvalidConfig(format!("mode `{}` requires a target dataset", config.mode))
        })?;
        if t.is_empty() {
            return Err(Error::EmptyBatch("target dataset".into()));
        }
        if t.dim() != source.dim() {
            return Err(Error::DimensionMismatch(format!(
                "source dimension {} vs target dimension {}",
                source.dim(),
                t.dim()
            )));
        }
        Some(t)
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = DcdaModel::new(
        source.dim(),
        &config.feature_hidden,
        config.embed_dim,
        &config.disc_hidden,
        &mut rng,
    )?;
    let mut state = TrainerState::new(&model, config)?;

    let mut cluster_state = if policy.uses_clustering() {
        let t = target.expect("clustering modes require a target");
        Some(init_clusters(&model, source, &source_labels, t)?)
    } else {
        None
    };

    let iters_per_epoch = if config.iters_per_epoch > 0 {
        config.iters_per_epoch
    } else {
        let n = source.len().max(target.map_or(0, Dataset::len));
        n.div_ceil(config.batch_size)
    };
    let total_steps = (config.epochs * iters_per_epoch).max(1);

    let mut traces = Vec::with_capacity(config.epochs);
    let mut completed_steps = 0usize;
    for epoch in 0..config.epochs {
        if config.reinit_kmeans_each_epoch && epoch > 0 {
            if let Some(cs) = cluster_state.as_mut() {
                let t = target.expect("clustering modes require a target");
                reupdate_clusters(&model, source, &source_labels, t, cs)?;
                cs.last_update_epoch = epoch;
            }
        }
        let mut sums = StepLosses::default();
        for _ in 0..iters_per_epoch {
            let progress = completed_steps as f64 / total_steps as f64;
            let lambda = lambda_schedule(progress, config.gamma, config.max_lambda);
            let source_batch = draw_batch(
                source,
                Some(&source_labels),
                0,
                config.batch_size,
                &mut rng,
            );
            let target_batch = target.map(|t| {
                let pseudo = cluster_state.as_ref().map(|cs| cs.pseudo_labels.as_slice());
                draw_batch(t, pseudo, 1, config.batch_size, &mut rng)
            });
            let step = train_step(
                &mut model,
                &mut state,
                &source_batch,
                target_batch.as_ref(),
                config,
                policy,
                lambda,
            )
            .map_err(|e| match e {
                Error::NonFiniteLoss { term, value } => Error::NonFiniteLoss {
                    term: format!("{term} (epoch {epoch})"),
                    value,
                },
                Error::NonFiniteGradient { term } => Error::NonFiniteGradient {
                    term: format!("{term} (epoch {epoch})"),
                },
                other => other,
            })?;
            sums.source_cls += step.source_cls;
            sums.target_cls += step.target_cls;
            sums.domain += step.domain;
            sums.cluster += step.cluster;
            sums.balance += step.balance;
            sums.total_feature += step.total_feature;
            completed_steps += 1;
        }

        let mut flips = 0usize;
        if let Some(cs) = cluster_state.as_mut() {
            let t = target.expect("clustering modes require a target");
            let z_t = model.embed(&t.features)?;
            let fresh = update_pseudo_labels(&z_t, &cs.centroids)?;
            flips = fresh
                .iter()
                .zip(&cs.pseudo_labels)
                .filter(|(a, b)| a != b)
                .count();
            cs.pseudo_labels = fresh;
            cs.last_update_epoch = epoch;
        }

        let k = iters_per_epoch as f64;
        traces.push(EpochTrace {
            source_cls: sums.source_cls / k,
            target_cls: sums.target_cls / k,
            domain: sums.domain / k,
            cluster: sums.cluster / k,
            balance: sums.balance / k,
            total_feature: sums.total_feature / k,
            pseudo_flips: flips,
        });
    }

    let mut final_metrics = Vec::new();
    final_metrics.push((
        format!("{}/{}", source.domain.name(), source.split.name()),
        evaluate_dataset(&model, source, DEFAULT_THRESHOLD)?,
    ));
    if let Some(t) = target {
        if t.labels.is_some() {
            final_metrics.push((
                format!("{}/{}", t.domain.name(), t.split.name()),
                evaluate_dataset(&model, t, DEFAULT_THRESHOLD)?,
            ));
        }
    }

    let report = TrainReport {
        mode: config.mode.clone(),
        seed: config.seed,
        iters_per_epoch,
        epochs: traces,
        final_metrics,
        final_pseudo_labels: cluster_state.map(|cs| cs.pseudo_labels),
    };
    Ok((model, report))
}
