//! Linear stand-in for the detection head: a softmax classifier plus
//! class-specific linear regressors over fixed feature vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::error::{PoseError, Result};
use crate::labeling::{
    apply_regression, assign_label_among, classification_loss, residual_len, smooth_l1, smooth_l1_grad, ClassScores,
    LabeledBox, DEFAULT_LABEL_IOU,
};
use crate::pose::{box_around, BodyExtent, BoundingBox, Pose2D, Pose3D, DEFAULT_BOX_MARGIN};
use crate::ppi::PoseProposal;
use crate::synth::scene::{lower_body_hidden, stream_rng};
use crate::synth::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyExample {
    pub feature: Vec<f64>,
    pub label: LabeledBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub iterations: usize,
    /// Learning rate before `stage_switch`, then `lr_late`.
    pub lr_early: f64,
    pub lr_late: f64,
    pub stage_switch: usize,
    pub init_scale: f64,
    pub seed: u64,
    pub two_pass: bool,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            iterations: 300,
            lr_early: 0.1,
            lr_late: 0.01,
            stage_switch: 200,
            init_scale: 0.01,
            seed: 0,
            two_pass: false,
        }
    }
}

impl ToyConfig {
    pub fn learning_rate(&self, iter: usize) -> f64 {
        if iter < self.stage_switch {
            self.lr_early
        } else {
            self.lr_late
        }
    }

    pub fn validate(&self) -> Result<()> {
        for lr in [self.lr_early, self.lr_late, self.init_scale] {
            if !(lr >= 0.0) || !lr.is_finite() {
                return Err(PoseError::InvalidParameter("learning rates and init scale must be finite and >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Dense row-major matrix `rows x cols` applied as `x^T W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    fn random<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let weights = if scale > 0.0 {
            let n = Normal::new(0.0, scale).expect("scale validated");
            (0..rows * cols).map(|_| n.sample(rng)).collect()
        } else {
            vec![0.0; rows * cols]
        };
        Linear { rows, cols, weights, bias: vec![0.0; cols] }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (r, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        out
    }

    /// Output columns `start..start + len` only.
    fn forward_cols(&self, x: &[f64], start: usize, len: usize) -> Vec<f64> {
        let mut out = self.bias[start..start + len].to_vec();
        for (r, &xi) in x.iter().enumerate() {
            let row = &self.weights[r * self.cols + start..r * self.cols + start + len];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        out
    }

    /// Accumulates `x ⊗ g` into the gradient buffers for columns from `start`.
    fn accumulate(grad_w: &mut [f64], grad_b: &mut [f64], cols: usize, x: &[f64], g: &[f64], start: usize) {
        for (r, &xi) in x.iter().enumerate() {
            let row = &mut grad_w[r * cols + start..r * cols + start + g.len()];
            for (acc, gj) in row.iter_mut().zip(g) {
                *acc += xi * gj;
            }
        }
        for (acc, gj) in grad_b[start..start + g.len()].iter_mut().zip(g) {
            *acc += gj;
        }
    }

    fn step(&mut self, grad_w: &[f64], grad_b: &[f64], lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(grad_w) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(grad_b) {
            *b -= lr * g;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub feature_dim: usize,
    pub classes: usize,
    pub joint_count: usize,
    pub classifier: Linear,
    /// `5 J` outputs per class, background included.
    pub regressor: Linear,
    /// Second pass: consumes features, class scores and one class's first
    /// residual; outputs a correction to that residual.
    pub refiner: Option<Linear>,
    pub config: ToyConfig,
}

/// Per-iteration mean losses over the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iter: usize,
    pub loss_cls: f64,
    pub loss_reg: f64,
    pub total: f64,
}

impl ToyModel {
    /// Initial model: small Gaussian weights from the config seed, zero biases.
    pub fn init(feature_dim: usize, anchors: &AnchorSet, config: &ToyConfig) -> Result<Self> {
        config.validate()?;
        if feature_dim == 0 {
            return Err(PoseError::InvalidParameter("feature dimension must be positive".into()));
        }
        let classes = anchors.len() + 1;
        let j = anchors.spec.joint_count();
        let w = residual_len(j);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let classifier = Linear::random(feature_dim, classes, config.init_scale, &mut rng);
        let regressor = Linear::random(feature_dim, w * classes, config.init_scale, &mut rng);
        let refiner = config
            .two_pass
            .then(|| Linear::random(feature_dim + classes + w, w, config.init_scale, &mut rng));
        Ok(ToyModel { feature_dim, classes, joint_count: j, classifier, regressor, refiner, config: config.clone() })
    }

    fn check(&self, feature: &[f64]) -> Result<()> {
        if feature.len() != self.feature_dim {
            return Err(PoseError::DimensionMismatch { what: "feature vector", expected: self.feature_dim, got: feature.len() });
        }
        Ok(())
    }

    pub fn scores(&self, feature: &[f64]) -> ClassScores {
        ClassScores::from_logits(&self.classifier.forward(feature))
    }

    fn refine_input(feature: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(feature.len() + u.len() + v.len());
        x.extend_from_slice(feature);
        x.extend_from_slice(u);
        x.extend_from_slice(v);
        x
    }

    /// Residual for `class`, refined when the model has a second pass.
    pub fn residual(&self, feature: &[f64], class: usize) -> Vec<f64> {
        let w = residual_len(self.joint_count);
        let v = self.regressor.forward_cols(feature, class * w, w);
        match &self.refiner {
            None => v,
            Some(r) => {
                let u = self.scores(feature).u;
                let d = r.forward(&Self::refine_input(feature, &u, &v));
                v.iter().zip(d).map(|(a, b)| a + b).collect()
            }
        }
    }

    /// Mean classification and regression losses over a dataset.
    pub fn losses(&self, data: &[ToyExample]) -> Result<LossRecord> {
        let (mut lc, mut lr) = (0.0, 0.0);
        for ex in data {
            self.check(&ex.feature)?;
            lc += classification_loss(&self.scores(&ex.feature), ex.label.class_label)?.0;
            if let (Some(t), c) = (&ex.label.target, ex.label.class_label) {
                if c > 0 {
                    lr += self.residual(&ex.feature, c).iter().zip(t).map(|(v, t)| smooth_l1(t - v)).sum::<f64>();
                }
            }
        }
        let n = data.len().max(1) as f64;
        Ok(LossRecord { iter: 0, loss_cls: lc / n, loss_reg: lr / n, total: (lc + lr) / n })
    }

    /// Argmax class accuracy over a dataset.
    pub fn accuracy(&self, data: &[ToyExample]) -> f64 {
        let hits = data
            .iter()
            .filter(|ex| self.scores(&ex.feature).argmax() == ex.label.class_label)
            .count();
        hits as f64 / data.len().max(1) as f64
    }

    /// One proposal per anchor: score `u(k)`, pose from the class residual.
    pub fn predict(&self, feature: &[f64], bbox: &BoundingBox, anchors: &AnchorSet) -> Result<Vec<PoseProposal>> {
        self.check(feature)?;
        if anchors.len() + 1 != self.classes {
            return Err(PoseError::DimensionMismatch { what: "anchor classes", expected: self.classes, got: anchors.len() + 1 });
        }
        let u = self.scores(feature).u;
        anchors
            .anchors
            .iter()
            .map(|a| {
                let class = a.id + 1;
                let (pose2d, pose3d) = apply_regression(a, bbox, &self.residual(feature, class))?;
                Ok(PoseProposal { anchor_id: a.id, bbox: *bbox, pose2d, pose3d, score: u[class], rescored: None })
            })
            .collect()
    }
}

/// Full-batch gradient descent on mean classification plus regression loss.
/// The refiner, if any, stays at its initial value during the first pass
/// and trains afterwards on the frozen first pass.
pub fn train(data: &[ToyExample], anchors: &AnchorSet, config: &ToyConfig) -> Result<(ToyModel, Vec<LossRecord>)> {
    let dim = data.first().map(|e| e.feature.len()).ok_or(PoseError::EmptyInput("training set"))?;
    let mut model = ToyModel::init(dim, anchors, config)?;
    let w = residual_len(model.joint_count);
    for ex in data {
        model.check(&ex.feature)?;
        if ex.label.class_label >= model.classes {
            return Err(PoseError::DimensionMismatch { what: "class label", expected: model.classes, got: ex.label.class_label });
        }
        if ex.label.class_label > 0 && ex.label.target.as_ref().is_none_or(|t| t.len() != w) {
            return Err(PoseError::Malformed("foreground example without a valid target".into()));
        }
    }
    let n = data.len() as f64;
    let mut history = Vec::with_capacity(config.iterations + 1);
    let record = |m: &ToyModel, iter: usize| -> Result<LossRecord> { Ok(LossRecord { iter, ..m.losses(data)? }) };
    history.push(record(&model, 0)?);

    let first_pass_iters = config.iterations;
    for it in 0..first_pass_iters {
        let mut gcw = vec![0.0; model.classifier.weights.len()];
        let mut gcb = vec![0.0; model.classifier.bias.len()];
        let mut grw = vec![0.0; model.regressor.weights.len()];
        let mut grb = vec![0.0; model.regressor.bias.len()];
        for ex in data {
            let (_, g) = classification_loss(&model.scores(&ex.feature), ex.label.class_label)?;
            let g: Vec<f64> = g.iter().map(|v| v / n).collect();
            Linear::accumulate(&mut gcw, &mut gcb, model.classes, &ex.feature, &g, 0);
            let c = ex.label.class_label;
            if c > 0 {
                let t = ex.label.target.as_ref().expect("checked above");
                let v = model.regressor.forward_cols(&ex.feature, c * w, w);
                let g: Vec<f64> = t.iter().zip(&v).map(|(t, v)| -smooth_l1_grad(t - v) / n).collect();
                Linear::accumulate(&mut grw, &mut grb, model.regressor.cols, &ex.feature, &g, c * w);
            }
        }
        let lr = config.learning_rate(it);
        model.classifier.step(&gcw, &gcb, lr);
        model.regressor.step(&grw, &grb, lr);
        history.push(record(&model, it + 1)?);
    }

    if let Some(mut refiner) = model.refiner.take() {
        let inputs: Vec<(Vec<f64>, Vec<f64>, &Vec<f64>)> = data
            .iter()
            .filter(|ex| ex.label.class_label > 0)
            .map(|ex| {
                let c = ex.label.class_label;
                let v = model.regressor.forward_cols(&ex.feature, c * w, w);
                let u = model.scores(&ex.feature).u;
                (ToyModel::refine_input(&ex.feature, &u, &v), v, ex.label.target.as_ref().expect("checked above"))
            })
            .collect();
        for it in 0..config.iterations {
            let mut gw = vec![0.0; refiner.weights.len()];
            let mut gb = vec![0.0; refiner.bias.len()];
            for (x, v, t) in &inputs {
                let d = refiner.forward(x);
                let g: Vec<f64> = t
                    .iter()
                    .zip(v)
                    .zip(&d)
                    .map(|((t, v), d)| -smooth_l1_grad(t - v - d) / n)
                    .collect();
                Linear::accumulate(&mut gw, &mut gb, w, x, &g, 0);
            }
            refiner.step(&gw, &gb, config.learning_rate(it));
            model.refiner = Some(refiner.clone());
            history.push(record(&model, first_pass_iters + it + 1)?);
            model.refiner = None;
        }
        model.refiner = Some(refiner);
    }
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub feature_dim: usize,
    /// Jittered ground-truth boxes per person.
    pub boxes_per_person: usize,
    pub background_per_scene: usize,
    pub box_jitter_px: f64,
    /// Scale of the class indicator inside the embedded code.
    pub class_gain: f64,
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            feature_dim: 128,
            boxes_per_person: 4,
            background_per_scene: 2,
            box_jitter_px: 4.0,
            class_gain: 3.0,
            feature_noise: 0.01,
            seed: 0,
        }
    }
}

/// Labeled boxes from scenes with synthetic features: a fixed random linear
/// embedding of (class indicator, regression target) plus Gaussian noise.
pub fn synthesize_dataset(scenes: &[Scene], anchors: &AnchorSet, config: &DatasetConfig) -> Result<Vec<ToyExample>> {
    let classes = anchors.len() + 1;
    let w = residual_len(anchors.spec.joint_count());
    let code = classes + w;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let embed = Linear::random(code, config.feature_dim, 1.0 / (code as f64).sqrt(), &mut rng);
    let noise = Normal::new(0.0, config.feature_noise.max(0.0)).map_err(|e| PoseError::InvalidParameter(e.to_string()))?;
    let jitter = Normal::new(0.0, config.box_jitter_px.max(0.0)).map_err(|e| PoseError::InvalidParameter(e.to_string()))?;
    let mut out = Vec::new();
    for scene in scenes {
        let mut rng = stream_rng(config.seed, scene.index);
        let gts: Vec<(Pose2D, Pose3D)> = scene.persons.iter().map(|p| (p.pose2d.clone(), p.pose3d.clone())).collect();
        let mut boxes = Vec::new();
        for p in &scene.persons {
            let b = box_around(&p.pose2d, DEFAULT_BOX_MARGIN)?;
            let extent = (anchors.has_upper_body() && lower_body_hidden(&p.pose2d, &anchors.spec)).then_some(BodyExtent::UpperBody);
            for _ in 0..config.boxes_per_person {
                let x0 = b.x_min + jitter.sample(&mut rng);
                let y0 = b.y_min + jitter.sample(&mut rng);
                let x1 = (b.x_max + jitter.sample(&mut rng)).max(x0 + 1.0);
                let y1 = (b.y_max + jitter.sample(&mut rng)).max(y0 + 1.0);
                boxes.push((BoundingBox { x_min: x0, y_min: y0, x_max: x1, y_max: y1 }, extent.or(Some(BodyExtent::FullBody))));
            }
        }
        for _ in 0..config.background_per_scene {
            let (cw, ch) = (scene.camera.width, scene.camera.height);
            let bw = rng.random_range(0.05..=0.2) * cw;
            let bh = rng.random_range(0.2..=0.5) * ch;
            let x0 = rng.random_range(0.0..=(cw - bw));
            let y0 = rng.random_range(0.0..=(ch - bh));
            boxes.push((BoundingBox { x_min: x0, y_min: y0, x_max: x0 + bw, y_max: y0 + bh }, Some(BodyExtent::FullBody)));
        }
        for (bbox, extent) in boxes {
            let label = assign_label_among(&bbox, &gts, anchors, DEFAULT_LABEL_IOU, extent)?;
            let mut z = vec![0.0; code];
            z[label.class_label] = config.class_gain;
            if let Some(t) = &label.target {
                z[classes..].copy_from_slice(t);
            }
            let feature = embed
                .forward(&z)
                .into_iter()
                .map(|f| f + if config.feature_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 })
                .collect();
            out.push(ToyExample { feature, label });
        }
    }
    Ok(out)
}
