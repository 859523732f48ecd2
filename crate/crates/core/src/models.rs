//! MLP, FCN and InceptionTime builders over `[3, L]` windows.
//!
//! Builders are pure: they return a [`GraphSpec`] whose shapes have already
//! been checked by the symbolic shape pass. Parameters are created by
//! [`GraphSpec::build`].

use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::nn::{GraphSpec, LayerSpec};
use crate::windowing::CHANNELS;

pub const NUM_CLASSES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Fcn,
    Inception,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Mlp, ModelKind::Fcn, ModelKind::Inception];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Fcn => "fcn",
            ModelKind::Inception => "inception",
        }
    }

    /// Name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "MLP",
            ModelKind::Fcn => "FCN",
            ModelKind::Inception => "InceptionTime",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(ModelKind::Mlp),
            "fcn" => Ok(ModelKind::Fcn),
            "inception" | "inceptiontime" => Ok(ModelKind::Inception),
            other => Err(Error::InvalidParameter(format!("unknown classifier {other:?} (mlp, fcn, inception)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcnConfig {
    pub filters: [usize; 3],
    pub kernels: [usize; 3],
}

impl Default for FcnConfig {
    fn default() -> Self {
        Self { filters: [128, 256, 128], kernels: [8, 5, 3] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InceptionConfig {
    pub depth: usize,
    pub filters: usize,
    pub bottleneck: usize,
    pub kernels: [usize; 3],
}

impl Default for InceptionConfig {
    fn default() -> Self {
        Self { depth: 6, filters: 32, bottleneck: 32, kernels: [40, 20, 10] }
    }
}

/// Architecture hyperparameters for all classifiers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub fcn: FcnConfig,
    pub inception: InceptionConfig,
}

fn parse_triple(kv: &KeyValues, key: &str, slot: &mut [usize; 3]) -> Result<()> {
    if let Some(raw) = kv.get_str(key) {
        let vals: Vec<usize> = raw
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("{key}: {e}")))?;
        *slot = vals.try_into().map_err(|v: Vec<usize>| Error::Config(format!("{key}: expected 3 values, got {}", v.len())))?;
    }
    Ok(())
}

impl ModelSettings {
    /// Keys: `fcn.filters`, `fcn.kernels` (comma lists of three),
    /// `inception.depth`, `inception.filters`, `inception.bottleneck`,
    /// `inception.kernels`.
    pub fn apply_kv(&mut self, kv: &KeyValues) -> Result<()> {
        parse_triple(kv, "fcn.filters", &mut self.fcn.filters)?;
        parse_triple(kv, "fcn.kernels", &mut self.fcn.kernels)?;
        kv.apply("inception.depth", &mut self.inception.depth)?;
        kv.apply("inception.filters", &mut self.inception.filters)?;
        kv.apply("inception.bottleneck", &mut self.inception.bottleneck)?;
        parse_triple(kv, "inception.kernels", &mut self.inception.kernels)?;
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let join = |v: &[usize; 3]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut kv = KeyValues::default();
        kv.insert("fcn.filters", join(&self.fcn.filters));
        kv.insert("fcn.kernels", join(&self.fcn.kernels));
        kv.insert("inception.depth", self.inception.depth.to_string());
        kv.insert("inception.filters", self.inception.filters.to_string());
        kv.insert("inception.bottleneck", self.inception.bottleneck.to_string());
        kv.insert("inception.kernels", join(&self.inception.kernels));
        kv
    }
}

fn finish(mut g: GraphSpec, features: usize, last: usize) -> Result<GraphSpec> {
    let logits = g.push("head", LayerSpec::Dense { in_features: features, out_features: NUM_CLASSES }, &[last]);
    g.push("softmax", LayerSpec::Softmax, &[logits]);
    g.shapes()?;
    Ok(g)
}

/// Dense(3L -> h) + ReLU -> Dense(h -> h) + ReLU -> Dense(h -> 2) -> Softmax,
/// `h = floor(3L / 2)`. Input is flattened channel-major.
pub fn build_mlp(window_len: usize) -> Result<GraphSpec> {
    if window_len < 2 {
        return Err(Error::WindowTooShort { len: window_len, min: 2 });
    }
    let input = CHANNELS * window_len;
    let hidden = input / 2;
    let mut g = GraphSpec::new(&[CHANNELS, window_len]);
    let mut x = GraphSpec::INPUT;
    let mut width = input;
    for i in 1..=2 {
        x = g.push(format!("dense{i}"), LayerSpec::Dense { in_features: width, out_features: hidden }, &[x]);
        x = g.push(format!("relu{i}"), LayerSpec::Relu, &[x]);
        width = hidden;
    }
    finish(g, hidden, x)
}

/// Three Conv + BatchNorm + ReLU blocks, global average pooling, Dense(2), Softmax.
pub fn build_fcn(window_len: usize, cfg: &FcnConfig) -> Result<GraphSpec> {
    let min = cfg.kernels.iter().copied().max().unwrap_or(1).max(2);
    if window_len < min {
        return Err(Error::WindowTooShort { len: window_len, min });
    }
    if cfg.filters.contains(&0) || cfg.kernels.contains(&0) {
        return Err(Error::InvalidParameter(format!("fcn filters/kernels must be positive: {cfg:?}")));
    }
    let mut g = GraphSpec::new(&[CHANNELS, window_len]);
    let mut x = GraphSpec::INPUT;
    let mut ch = CHANNELS;
    for (i, (&f, &k)) in cfg.filters.iter().zip(&cfg.kernels).enumerate() {
        let b = i + 1;
        x = g.push(format!("conv{b}"), LayerSpec::Conv1d { in_channels: ch, out_channels: f, kernel: k, bias: true }, &[x]);
        x = g.push(format!("bn{b}"), LayerSpec::batch_norm(f), &[x]);
        x = g.push(format!("relu{b}"), LayerSpec::Relu, &[x]);
        ch = f;
    }
    x = g.push("gap", LayerSpec::GlobalAvgPool1d, &[x]);
    finish(g, ch, x)
}

/// Kernel sizes actually used at this window length.
pub fn inception_kernels(window_len: usize, cfg: &InceptionConfig) -> [usize; 3] {
    cfg.kernels.map(|k| k.min(window_len - 1).max(1))
}

/// InceptionTime: `depth` modules with a residual shortcut every third
/// module, then global average pooling, Dense(2), Softmax.
///
/// Kernels longer than `L - 1` are clipped to `L - 1`.
pub fn build_inception(window_len: usize, cfg: &InceptionConfig) -> Result<GraphSpec> {
    if window_len < 2 {
        return Err(Error::WindowTooShort { len: window_len, min: 2 });
    }
    if cfg.depth == 0 || cfg.filters == 0 || cfg.bottleneck == 0 || cfg.kernels.contains(&0) {
        return Err(Error::InvalidParameter(format!("inception depth/filters/bottleneck/kernels must be positive: {cfg:?}")));
    }
    let kernels = inception_kernels(window_len, cfg);
    let f = cfg.filters;
    let out_ch = 4 * f;
    let mut g = GraphSpec::new(&[CHANNELS, window_len]);
    let mut x = GraphSpec::INPUT;
    let mut ch = CHANNELS;
    let (mut shortcut, mut shortcut_ch) = (x, ch);

    for d in 0..cfg.depth {
        let m = d + 1;
        let conv = |cin, cout, kernel| LayerSpec::Conv1d { in_channels: cin, out_channels: cout, kernel, bias: false };
        let bottleneck = g.push(format!("m{m}.bottleneck"), conv(ch, cfg.bottleneck, 1), &[x]);
        let mut branches: Vec<usize> = kernels
            .iter()
            .enumerate()
            .map(|(b, &k)| g.push(format!("m{m}.conv{}", b + 1), conv(cfg.bottleneck, f, k), &[bottleneck]))
            .collect();
        let pool = g.push(format!("m{m}.maxpool"), LayerSpec::MaxPool1d { kernel: 3 }, &[x]);
        branches.push(g.push(format!("m{m}.pool_conv"), conv(ch, f, 1), &[pool]));
        let cat = g.push(format!("m{m}.concat"), LayerSpec::Concat, &branches);
        let bn = g.push(format!("m{m}.bn"), LayerSpec::batch_norm(out_ch), &[cat]);
        x = g.push(format!("m{m}.relu"), LayerSpec::Relu, &[bn]);
        ch = out_ch;

        if m % 3 == 0 {
            let mut res = shortcut;
            if shortcut_ch != ch {
                res = g.push(format!("m{m}.shortcut_conv"), conv(shortcut_ch, ch, 1), &[shortcut]);
                res = g.push(format!("m{m}.shortcut_bn"), LayerSpec::batch_norm(ch), &[res]);
            }
            let sum = g.push(format!("m{m}.add"), LayerSpec::Add, &[res, x]);
            x = g.push(format!("m{m}.add_relu"), LayerSpec::Relu, &[sum]);
            shortcut = x;
            shortcut_ch = ch;
        }
    }
    x = g.push("gap", LayerSpec::GlobalAvgPool1d, &[x]);
    finish(g, ch, x)
}

pub fn build_model(kind: ModelKind, window_len: usize, settings: &ModelSettings) -> Result<GraphSpec> {
    match kind {
        ModelKind::Mlp => build_mlp(window_len),
        ModelKind::Fcn => build_fcn(window_len, &settings.fcn),
        ModelKind::Inception => build_inception(window_len, &settings.inception),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{label_smoothed_ce, AdamConfig, Graph, LayerKind, LossConfig, Mode, Tensor};
    use crate::seed::rng_from_seed;
    use crate::windowing::GRID_WINDOW_LENGTHS;
    use rand::Rng;

    fn dense_widths(g: &GraphSpec) -> Vec<(usize, usize)> {
        g.nodes
            .iter()
            .filter_map(|n| match n.layer {
                LayerSpec::Dense { in_features, out_features } => Some((in_features, out_features)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn mlp_widths_and_params() {
        assert_eq!(dense_widths(&build_mlp(50).unwrap()), vec![(150, 75), (75, 75), (75, 2)]);
        assert_eq!(dense_widths(&build_mlp(100).unwrap()), vec![(300, 150), (150, 150), (150, 2)]);
        assert_eq!(build_mlp(50).unwrap().param_count(), 17_177);
        assert!(matches!(build_mlp(1), Err(Error::WindowTooShort { .. })));
    }

    #[test]
    fn fcn_shapes() {
        let g = build_fcn(60, &FcnConfig::default()).unwrap();
        let shapes = g.shapes().unwrap();
        let conv_out: Vec<&Vec<usize>> = g
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.layer.kind() == LayerKind::Conv1d)
            .map(|(i, _)| &shapes[i + 1])
            .collect();
        assert_eq!(conv_out, [&vec![128, 60], &vec![256, 60], &vec![128, 60]]);
        let g = build_fcn(100, &FcnConfig::default()).unwrap();
        let gap = g.nodes.iter().position(|n| n.layer.kind() == LayerKind::GlobalAvgPool1d).unwrap();
        assert_eq!(g.shapes().unwrap()[gap + 1], vec![128]);
        assert!(matches!(build_fcn(7, &FcnConfig::default()), Err(Error::WindowTooShort { len: 7, min: 8 })));
    }

    #[test]
    fn inception_structure() {
        let cfg = InceptionConfig::default();
        let g = build_inception(90, &cfg).unwrap();
        let shapes = g.shapes().unwrap();
        for (i, n) in g.nodes.iter().enumerate() {
            if n.name.ends_with(".relu") || n.name.ends_with(".add_relu") {
                assert_eq!(shapes[i + 1], vec![128, 90], "{}", n.name);
            }
        }
        assert_eq!(g.count_kind(LayerKind::Add), 2);
        let b = &g.nodes[0];
        assert_eq!(b.layer, LayerSpec::Conv1d { in_channels: 3, out_channels: 32, kernel: 1, bias: false });

        let three = build_inception(90, &InceptionConfig { depth: 3, ..cfg.clone() }).unwrap();
        assert_eq!(three.count_kind(LayerKind::Add), 1);
        let two = build_inception(90, &InceptionConfig { depth: 2, ..cfg.clone() }).unwrap();
        assert_eq!(two.count_kind(LayerKind::Add), 0);
    }

    #[test]
    fn inception_clips_long_kernels() {
        let cfg = InceptionConfig::default();
        assert_eq!(inception_kernels(30, &cfg), [29, 20, 10]);
        assert!(build_inception(12, &cfg).is_ok());
        assert!(matches!(build_inception(1, &cfg), Err(Error::WindowTooShort { .. })));
    }

    #[test]
    fn same_padding_preserves_length() {
        for k in [8, 5, 3, 10, 20, 40] {
            let s = LayerSpec::Conv1d { in_channels: 3, out_channels: 4, kernel: k, bias: true };
            assert_eq!(s.output_shape(&[&[3, 77]]).unwrap(), vec![4, 77]);
        }
    }

    #[test]
    fn every_model_outputs_distributions_over_the_grid() {
        let settings = ModelSettings {
            fcn: FcnConfig { filters: [8, 16, 8], kernels: [8, 5, 3] },
            inception: InceptionConfig { depth: 3, filters: 4, bottleneck: 4, kernels: [40, 20, 10] },
        };
        let mut rng = rng_from_seed(11);
        for kind in ModelKind::ALL {
            for &l in &GRID_WINDOW_LENGTHS {
                let g: Graph<f64> = build_model(kind, l, &settings).unwrap().build(&mut rng).unwrap();
                let x = Tensor::from_vec(vec![4, 3, l], (0..12 * l).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
                let p = g.infer(&x).unwrap();
                assert_eq!(p.shape(), &[4, 2]);
                for row in p.data().chunks(2) {
                    assert!((row[0] + row[1] - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_window_gives_a_distribution() {
        let mut g: Graph<f64> = build_fcn(60, &FcnConfig::default()).unwrap().build(&mut rng_from_seed(1)).unwrap();
        let p = g.forward(&Tensor::zeros(&[1, 3, 60]), Mode::Eval).unwrap();
        assert!((p.data()[0] + p.data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_step_lowers_the_batch_loss() {
        let settings = ModelSettings {
            fcn: FcnConfig { filters: [16, 32, 16], kernels: [8, 5, 3] },
            inception: InceptionConfig { depth: 3, filters: 8, bottleneck: 8, kernels: [40, 20, 10] },
        };
        let loss = LossConfig::default();
        for kind in ModelKind::ALL {
            let mut failures = 0;
            for seed in 0..10 {
                let mut rng = rng_from_seed(seed);
                let mut g: Graph<f64> = build_model(kind, 50, &settings).unwrap().build(&mut rng).unwrap();
                let x = Tensor::from_vec(vec![8, 3, 50], (0..8 * 150).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
                let y: Vec<usize> = (0..8).map(|i| i % 2).collect();
                let mut opt = g.new_optimizer(AdamConfig::default());
                let before = g.train_step(&x, &y, &loss, &mut opt).unwrap();
                let after = label_smoothed_ce(&g.forward(&x, Mode::Train).unwrap(), &y, &loss).unwrap();
                if after >= before {
                    failures += 1;
                }
            }
            assert!(failures <= 1, "{kind}: {failures} failures");
        }
    }
}
