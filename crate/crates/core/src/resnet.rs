//! 18-layer residual network over single-channel time-frequency maps.
//!
//! Stem: 7×7/2 conv → BN → ReLU → 3×3/2 max pool. Four stages of two basic
//! blocks; the first block of stages 2–4 halves the resolution and uses a
//! 1×1 conv + BN projection on the skip path. Global average pooling and a
//! fully-connected layer produce one logit per emotion class.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    conv_out_len, join, BatchNorm2d, Conv2d, GlobalAvgPool, Linear, MaxPool2d, Mode, Module, ParamRole, Relu, Scalar,
    Tensor,
};
use crate::par::Exec;
use crate::{Emotion, Result, SerError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResNet18Config {
    pub stem_channels: usize,
    pub stage_channels: [usize; 4],
    pub blocks_per_stage: [usize; 4],
    pub input_rows: usize,
    pub input_cols: usize,
    pub n_classes: usize,
    /// Multiplies every channel count (rounded, at least 1).
    pub width_scale: f64,
}

impl ResNet18Config {
    pub fn new(input_rows: usize, width_scale: f64) -> Self {
        ResNet18Config {
            stem_channels: 64,
            stage_channels: [64, 128, 256, 512],
            blocks_per_stage: [2, 2, 2, 2],
            input_rows,
            input_cols: crate::dsp::N_FRAMES,
            n_classes: Emotion::COUNT,
            width_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_scale > 0.0) || !self.width_scale.is_finite() {
            return Err(SerError::Config(format!("width_scale must be positive, got {}", self.width_scale)));
        }
        if self.n_classes != Emotion::COUNT {
            return Err(SerError::Config(format!("n_classes must be 4, got {}", self.n_classes)));
        }
        if self.input_rows == 0 || self.input_cols == 0 {
            return Err(SerError::Config("input extents must be positive".into()));
        }
        if self.blocks_per_stage.iter().any(|&b| b == 0) {
            return Err(SerError::Config("every stage needs at least one block".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, channels: usize) -> usize {
        ((channels as f64 * self.width_scale).round() as usize).max(1)
    }

    pub fn stem_width(&self) -> usize {
        self.scaled(self.stem_channels)
    }

    pub fn stage_widths(&self) -> [usize; 4] {
        self.stage_channels.map(|c| self.scaled(c))
    }
}

/// Basic block: `y = ReLU(BN(conv(ReLU(BN(conv(x))))) + skip(x))`.
pub struct ResidualBlock<T: Scalar> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    relu1: Relu,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    pub projection: Option<(Conv2d<T>, BatchNorm2d<T>)>,
    relu_out: Relu,
}

impl<T: Scalar> ResidualBlock<T> {
    pub fn new(rng: &mut ChaCha8Rng, in_ch: usize, out_ch: usize, stride: usize) -> Result<Self> {
        let projection = if stride != 1 || in_ch != out_ch {
            Some((Conv2d::new(rng, in_ch, out_ch, 1, stride, 0)?, BatchNorm2d::new(out_ch)))
        } else {
            None
        };
        Ok(ResidualBlock {
            conv1: Conv2d::new(rng, in_ch, out_ch, 3, stride, 1)?,
            bn1: BatchNorm2d::new(out_ch),
            relu1: Relu::new(),
            conv2: Conv2d::new(rng, out_ch, out_ch, 3, 1, 1)?,
            bn2: BatchNorm2d::new(out_ch),
            projection,
            relu_out: Relu::new(),
        })
    }

    pub fn stride(&self) -> usize {
        self.conv1.stride
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mid = self.conv1.output_shape(input)?;
        self.conv2.output_shape(&mid)
    }

    fn set_exec(&mut self, exec: Exec) {
        self.conv1.exec = exec;
        self.conv2.exec = exec;
        if let Some((c, _)) = self.projection.as_mut() {
            c.exec = exec;
        }
    }
}

impl<T: Scalar> Module<T> for ResidualBlock<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.conv1.forward(x, mode)?;
        let h = self.bn1.forward(&h, mode)?;
        let h = self.relu1.forward(&h, mode)?;
        let h = self.conv2.forward(&h, mode)?;
        let f = self.bn2.forward(&h, mode)?;
        let skip = match self.projection.as_mut() {
            Some((conv, bn)) => {
                let s = conv.forward(x, mode)?;
                bn.forward(&s, mode)?
            }
            None => x.clone(),
        };
        if f.shape() != skip.shape() {
            return Err(SerError::Shape(format!(
                "residual branch {:?} does not match skip {:?}",
                f.shape(),
                skip.shape()
            )));
        }
        self.relu_out.forward(&f.add(&skip)?, mode)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.relu_out.backward(grad_out)?;
        let gf = self.bn2.backward(&g)?;
        let gf = self.conv2.backward(&gf)?;
        let gf = self.relu1.backward(&gf)?;
        let gf = self.bn1.backward(&gf)?;
        let gf = self.conv1.backward(&gf)?;
        let gs = match self.projection.as_mut() {
            Some((conv, bn)) => {
                let s = bn.backward(&g)?;
                conv.backward(&s)?
            }
            None => g,
        };
        gf.add(&gs)
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamRole)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
        if let Some((conv, bn)) = self.projection.as_mut() {
            conv.visit(&join(prefix, "proj.conv"), f);
            bn.visit(&join(prefix, "proj.bn"), f);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    BatchNorm,
    Relu,
    MaxPool,
    Add,
    GlobalAvgPool,
    FullyConnected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
    /// False for layers on a projection shortcut.
    pub main_path: bool,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

pub struct ResNet18<T: Scalar> {
    pub config: ResNet18Config,
    pub stem_conv: Conv2d<T>,
    pub stem_bn: BatchNorm2d<T>,
    stem_relu: Relu,
    stem_pool: MaxPool2d,
    pub blocks: Vec<ResidualBlock<T>>,
    pool: GlobalAvgPool,
    pub fc: Linear<T>,
}

/// Builds the network with deterministic He-normal initialization.
pub fn build_resnet18<T: Scalar>(cfg: &ResNet18Config, seed: u64) -> Result<ResNet18<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stem = cfg.stem_width();
    let widths = cfg.stage_widths();
    let stem_conv = Conv2d::new(&mut rng, 1, stem, 7, 2, 3)?;
    let mut blocks = Vec::new();
    let mut in_ch = stem;
    for (stage, (&width, &n_blocks)) in widths.iter().zip(&cfg.blocks_per_stage).enumerate() {
        for b in 0..n_blocks {
            let stride = if stage > 0 && b == 0 { 2 } else { 1 };
            blocks.push(ResidualBlock::new(&mut rng, in_ch, width, stride)?);
            in_ch = width;
        }
    }
    let fc = Linear::new(&mut rng, in_ch, cfg.n_classes)?;
    Ok(ResNet18 {
        config: cfg.clone(),
        stem_conv,
        stem_bn: BatchNorm2d::new(stem),
        stem_relu: Relu::new(),
        stem_pool: MaxPool2d::new(3, 2, 1),
        blocks,
        pool: GlobalAvgPool::new(),
        fc,
    })
}

impl<T: Scalar> ResNet18<T> {
    pub fn set_exec(&mut self, exec: Exec) {
        self.stem_conv.exec = exec;
        self.blocks.iter_mut().for_each(|b| b.set_exec(exec));
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        match *shape {
            [_, 1, r, _] if r == self.config.input_rows => Ok(()),
            _ => Err(SerError::Shape(format!(
                "model expects [N, 1, {}, T] input, got {shape:?}",
                self.config.input_rows
            ))),
        }
    }

    /// Shape-propagated layer table for an input of `[n, 1, rows, cols]`.
    pub fn summary(&self, n: usize, cols: usize) -> Result<Vec<LayerInfo>> {
        let mut out = Vec::new();
        let mut shape = vec![n, 1, self.config.input_rows, cols];
        let push = |out: &mut Vec<LayerInfo>, name: String, kind, main_path, shape: &[usize], params| {
            out.push(LayerInfo {
                name,
                kind,
                main_path,
                output_shape: shape.to_vec(),
                params,
            })
        };
        shape = self.stem_conv.output_shape(&shape)?;
        push(&mut out, "stem.conv".into(), LayerKind::Conv, true, &shape, self.stem_conv.num_params());
        push(&mut out, "stem.bn".into(), LayerKind::BatchNorm, true, &shape, self.stem_bn.num_params());
        push(&mut out, "stem.relu".into(), LayerKind::Relu, true, &shape, 0);
        shape = self.stem_pool.output_shape(&shape)?;
        push(&mut out, "stem.pool".into(), LayerKind::MaxPool, true, &shape, 0);
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("block{i}");
            let mid = b.conv1.output_shape(&shape)?;
            push(&mut out, format!("{p}.conv1"), LayerKind::Conv, true, &mid, b.conv1.num_params());
            push(&mut out, format!("{p}.bn1"), LayerKind::BatchNorm, true, &mid, b.bn1.num_params());
            push(&mut out, format!("{p}.relu1"), LayerKind::Relu, true, &mid, 0);
            let end = b.conv2.output_shape(&mid)?;
            push(&mut out, format!("{p}.conv2"), LayerKind::Conv, true, &end, b.conv2.num_params());
            push(&mut out, format!("{p}.bn2"), LayerKind::BatchNorm, true, &end, b.bn2.num_params());
            if let Some((conv, bn)) = &b.projection {
                let s = conv.output_shape(&shape)?;
                if s != end {
                    return Err(SerError::Shape(format!("{p}: projection {s:?} vs branch {end:?}")));
                }
                push(&mut out, format!("{p}.proj.conv"), LayerKind::Conv, false, &s, conv.num_params());
                push(&mut out, format!("{p}.proj.bn"), LayerKind::BatchNorm, false, &s, bn.num_params());
            } else if shape != end {
                return Err(SerError::Shape(format!("{p}: identity skip {shape:?} vs branch {end:?}")));
            }
            push(&mut out, format!("{p}.add_relu"), LayerKind::Add, true, &end, 0);
            shape = end;
        }
        shape = vec![n, shape[1]];
        push(&mut out, "pool".into(), LayerKind::GlobalAvgPool, true, &shape, 0);
        shape = vec![n, self.fc.out_features];
        push(&mut out, "fc".into(), LayerKind::FullyConnected, true, &shape, self.fc.num_params());
        Ok(out)
    }

    /// Main-path conv layers plus the FC layer.
    pub fn weighted_depth(&self) -> usize {
        let convs = 1 + self.blocks.len() * 2;
        convs + 1
    }

    pub fn summary_table(&self, n: usize, cols: usize) -> Result<String> {
        let rows = self.summary(n, cols)?;
        let mut s = String::new();
        let _ = writeln!(s, "{:<18} {:<14} {:<6} {:<20} {:>10}", "layer", "kind", "path", "output", "params");
        let mut total = 0;
        for r in &rows {
            total += r.params;
            let _ = writeln!(
                s,
                "{:<18} {:<14} {:<6} {:<20} {:>10}",
                r.name,
                format!("{:?}", r.kind),
                if r.main_path { "main" } else { "skip" },
                format!("{:?}", r.output_shape),
                r.params
            );
        }
        let convs = rows.iter().filter(|r| r.kind == LayerKind::Conv && r.main_path).count();
        let fcs = rows.iter().filter(|r| r.kind == LayerKind::FullyConnected).count();
        let _ = writeln!(s, "weighted layers: {convs} conv + {fcs} fc = {}", convs + fcs);
        let _ = writeln!(s, "trainable parameters: {total}");
        Ok(s)
    }

    /// Logits `[N, 4]` ordered Neutral, Happiness, Sadness, Anger.
    pub fn forward_logits(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(x.shape())?;
        let y = self.forward(x, mode)?;
        if !y.all_finite() {
            return Err(SerError::Numeric("non-finite logits".into()));
        }
        Ok(y)
    }
}

impl<T: Scalar> Module<T> for ResNet18<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.stem_conv.forward(x, mode)?;
        let h = self.stem_bn.forward(&h, mode)?;
        let h = self.stem_relu.forward(&h, mode)?;
        let mut h = self.stem_pool.forward(&h, mode)?;
        for b in &mut self.blocks {
            h = b.forward(&h, mode)?;
        }
        let h = self.pool.forward(&h, mode)?;
        self.fc.forward(&h, mode)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.fc.backward(grad_out)?;
        let mut g = self.pool.backward(&g)?;
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(&g)?;
        }
        let g = self.stem_pool.backward(&g)?;
        let g = self.stem_relu.backward(&g)?;
        let g = self.stem_bn.backward(&g)?;
        self.stem_conv.backward(&g)
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamRole)) {
        self.stem_conv.visit(&join(prefix, "stem.conv"), f);
        self.stem_bn.visit(&join(prefix, "stem.bn"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), f);
        }
        self.fc.visit(&join(prefix, "fc"), f);
    }
}

/// Spatial extent after the stem and each stage, for a given input extent.
pub fn stage_extents(input: usize) -> Option<[usize; 5]> {
    let stem = conv_out_len(input, 7, 2, 3)?;
    let pooled = conv_out_len(stem, 3, 2, 1)?;
    let s2 = conv_out_len(pooled, 3, 2, 1)?;
    let s3 = conv_out_len(s2, 3, 2, 1)?;
    let s4 = conv_out_len(s3, 3, 2, 1)?;
    Some([stem, pooled, s2, s3, s4])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::check_module_sampled;
    use rand::Rng;

    fn rand_input(seed: u64, shape: &[usize]) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn conv_params(cin: usize, cout: usize, k: usize) -> usize {
        cin * cout * k * k
    }

    /// Independent closed-form parameter count.
    fn param_oracle(cfg: &ResNet18Config) -> usize {
        let s = |c: usize| ((c as f64 * cfg.width_scale).round() as usize).max(1);
        let stem = s(cfg.stem_channels);
        let mut total = conv_params(1, stem, 7) + 2 * stem;
        let mut cin = stem;
        for (stage, &c) in cfg.stage_channels.iter().enumerate() {
            let c = s(c);
            for b in 0..cfg.blocks_per_stage[stage] {
                total += conv_params(cin, c, 3) + 2 * c + conv_params(c, c, 3) + 2 * c;
                if (stage > 0 && b == 0) || cin != c {
                    total += conv_params(cin, c, 1) + 2 * c;
                }
                cin = c;
            }
        }
        total + cin * cfg.n_classes + cfg.n_classes
    }

    #[test]
    fn zero_branch_block_is_relu_of_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut block = ResidualBlock::<f64>::new(&mut rng, 3, 3, 1).unwrap();
        block.conv1.weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
        block.conv2.weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
        block.bn1.gamma.set_data(&[2.0, 0.3, -1.0]).unwrap();
        block.bn2.gamma.set_data(&[0.7, 5.0, 1.0]).unwrap();
        let x = rand_input(2, &[2, 3, 5, 6]);
        for mode in [Mode::Train, Mode::Eval] {
            let y = block.forward(&x, mode).unwrap();
            for (a, b) in x.data().iter().zip(y.data()) {
                assert_eq!(*b, a.max(0.0));
            }
        }
        let pos = Tensor::from_vec(x.shape(), x.data().iter().map(|v| v.abs()).collect()).unwrap();
        assert_eq!(block.forward(&pos, Mode::Eval).unwrap(), pos);
    }

    #[test]
    fn block_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let same = ResidualBlock::<f32>::new(&mut rng, 64, 64, 1).unwrap();
        assert!(same.projection.is_none());
        assert_eq!(same.output_shape(&[1, 64, 32, 65]).unwrap(), vec![1, 64, 32, 65]);
        let down = ResidualBlock::<f32>::new(&mut rng, 64, 128, 2).unwrap();
        assert!(down.projection.is_some());
        // floor((32 + 2 - 3) / 2) + 1 = 16, floor((65 + 2 - 3) / 2) + 1 = 33
        assert_eq!(down.output_shape(&[1, 64, 32, 65]).unwrap(), vec![1, 128, 16, 33]);
    }

    #[test]
    fn small_block_parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut block = ResidualBlock::<f32>::new(&mut rng, 4, 4, 1).unwrap();
        assert_eq!(block.num_params(), 2 * (4 * 4 * 9) + 2 * (2 * 4));
        assert_eq!(block.num_params(), 304);
    }

    #[test]
    fn canonical_parameter_count_matches_oracle() {
        for (rows, ws) in [(128, 1.0), (40, 1.0), (40, 0.125), (128, 0.5)] {
            let cfg = ResNet18Config::new(rows, ws);
            let mut m = build_resnet18::<f32>(&cfg, 0).unwrap();
            assert_eq!(m.num_params(), param_oracle(&cfg));
            let table: usize = m.summary(1, 259).unwrap().iter().map(|l| l.params).sum();
            assert_eq!(table, param_oracle(&cfg));
        }
        // three-channel, 1000-class reference network minus its stem and head differences
        assert_eq!(param_oracle(&ResNet18Config::new(128, 1.0)), 11_689_512 - 3 * 64 * 49 + 64 * 49 - 512 * 1000 - 1000 + 512 * 4 + 4);
    }

    #[test]
    fn depth_audit_counts_eighteen() {
        let m = build_resnet18::<f32>(&ResNet18Config::new(128, 1.0), 0).unwrap();
        let rows = m.summary(1, 259).unwrap();
        let convs = rows.iter().filter(|r| r.kind == LayerKind::Conv && r.main_path).count();
        let fcs = rows.iter().filter(|r| r.kind == LayerKind::FullyConnected).count();
        assert_eq!((convs, fcs), (17, 1));
        assert_eq!(m.weighted_depth(), 18);
        assert!(m.summary_table(1, 259).unwrap().contains("= 18"));
    }

    #[test]
    fn shape_algebra_predicts_every_stage() {
        let m = build_resnet18::<f32>(&ResNet18Config::new(128, 1.0), 0).unwrap();
        let rows = m.summary(1, 259).unwrap();
        let [r0, r1, r2, r3, r4] = stage_extents(128).unwrap();
        let [c0, c1, c2, c3, c4] = stage_extents(259).unwrap();
        assert_eq!((r0, c0), (64, 130));
        assert_eq!((r1, c1), (32, 65));
        let find = |n: &str| rows.iter().find(|r| r.name == n).unwrap().output_shape.clone();
        assert_eq!(find("stem.pool"), vec![1, 64, r1, c1]);
        assert_eq!(find("block1.add_relu"), vec![1, 64, r1, c1]);
        assert_eq!(find("block3.add_relu"), vec![1, 128, r2, c2]);
        assert_eq!(find("block5.add_relu"), vec![1, 256, r3, c3]);
        assert_eq!(find("block7.add_relu"), vec![1, 512, r4, c4]);
        assert_eq!(find("fc"), vec![1, 4]);
    }

    #[test]
    fn config_validation() {
        assert!(build_resnet18::<f32>(&ResNet18Config::new(40, 0.0), 0).is_err());
        assert!(build_resnet18::<f32>(&ResNet18Config::new(40, -1.0), 0).is_err());
        let mut cfg = ResNet18Config::new(40, 1.0);
        cfg.n_classes = 5;
        assert!(build_resnet18::<f32>(&cfg, 0).is_err());
    }

    #[test]
    fn eval_forward_is_deterministic_and_per_sample() {
        let mut m = build_resnet18::<f32>(&ResNet18Config::new(40, 0.125), 7).unwrap();
        let one = rand_input(5, &[1, 1, 40, 64]).cast::<f32>();
        let mut two = one.data().to_vec();
        two.extend_from_slice(one.data());
        let two = Tensor::from_vec(&[2, 1, 40, 64], two).unwrap();
        let a = m.forward_logits(&one, Mode::Eval).unwrap();
        let b = m.forward_logits(&one, Mode::Eval).unwrap();
        assert_eq!(a, b);
        let c = m.forward_logits(&two, Mode::Eval).unwrap();
        assert_eq!(&c.data()[..4], &c.data()[4..]);
        assert!(a.data().iter().all(|v| v.is_finite() && v.abs() < 100.0));
    }

    #[test]
    fn eval_mode_leaves_parameters_untouched() {
        let mut m = build_resnet18::<f32>(&ResNet18Config::new(40, 0.125), 7).unwrap();
        let x = rand_input(6, &[2, 1, 40, 40]).cast::<f32>();
        let snapshot = |m: &mut ResNet18<f32>| {
            let mut v = Vec::new();
            m.visit("", &mut |_, t, _| v.extend_from_slice(t.data()));
            v
        };
        let before = snapshot(&mut m);
        m.forward_logits(&x, Mode::Eval).unwrap();
        assert_eq!(before, snapshot(&mut m));
        m.forward_logits(&x, Mode::Train).unwrap();
        let mut changed_weights = false;
        let mut before_iter = before.iter();
        m.visit("", &mut |_, t, role| {
            for v in t.data() {
                let b = before_iter.next().unwrap();
                if role == ParamRole::Weight && v != b {
                    changed_weights = true;
                }
            }
        });
        assert!(!changed_weights);
        assert_ne!(before, snapshot(&mut m));
    }

    #[test]
    fn row_mismatch_is_a_shape_error() {
        let mut m = build_resnet18::<f32>(&ResNet18Config::new(128, 0.125), 0).unwrap();
        let x = Tensor::<f32>::zeros(&[1, 1, 40, 259]);
        assert!(matches!(m.forward_logits(&x, Mode::Eval), Err(SerError::Shape(_))));
    }

    #[test]
    fn spectrogram_and_mfcc_models_differ_only_in_rows() {
        let mut a = build_resnet18::<f32>(&ResNet18Config::new(128, 0.25), 3).unwrap();
        let mut b = build_resnet18::<f32>(&ResNet18Config::new(40, 0.25), 3).unwrap();
        let names = |m: &mut ResNet18<f32>| {
            let mut v = Vec::new();
            m.visit("", &mut |n, t, _| v.push((n.to_string(), t.shape().to_vec(), t.data().to_vec())));
            v
        };
        assert_eq!(names(&mut a), names(&mut b));
    }

    #[test]
    fn end_to_end_gradient_check() {
        let cfg = ResNet18Config::new(16, 0.125);
        let mut m = build_resnet18::<f64>(&cfg, 11).unwrap();
        let x = rand_input(12, &[4, 1, 16, 17]);
        let r = check_module_sampled(&mut m, &x, Mode::Train, 1e-5, 13, Some(6)).unwrap();
        assert!(r.max() < 1e-5, "{r:?}");
    }
}
