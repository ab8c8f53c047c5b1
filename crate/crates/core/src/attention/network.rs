//! Residual attention network with stacked trunk/mask modules.
//!
//! Layout for the default spec on 32x32 inputs:
//!
//! ```text
//! stem conv 3->16, residual unit                        32x32x16
//! stage 1: 1 module                                      32x32x16
//! maxpool, transition unit 16->32, stage 2: 2 modules    16x16x32
//! maxpool, transition unit 32->1,  stage 3: 3 modules     8x8x1
//! softplus, flatten, dense -> logits
//! ```
//!
//! Consecutive modules inside a stage are separated by one residual unit.
//! Each module's mask branch is maxpool, unit, maxpool, unit, two bilinear
//! 2x upsamplings, a 1x1 conv and a sigmoid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{fit, Classifier, TrainConfig, TrainLogRow};
use crate::data::DatasetSplit;
use crate::nn::{ParamId, ParamStore, Tape, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionNetworkSpec {
    /// Number of attention modules in each stage.
    pub stage_module_counts: Vec<usize>,
    /// Trunk width of the first stage; doubles at each later stage.
    pub base_channels: usize,
    /// Output channels of the last stage. Maps need exactly 1.
    pub last_stage_channels: usize,
    pub num_classes: usize,
    pub input_side: usize,
}

impl Default for AttentionNetworkSpec {
    fn default() -> Self {
        Self {
            stage_module_counts: vec![1, 2, 3],
            base_channels: 16,
            last_stage_channels: 1,
            num_classes: 2,
            input_side: 32,
        }
    }
}

impl AttentionNetworkSpec {
    pub fn new(num_classes: usize, input_side: usize) -> Self {
        Self {
            num_classes,
            input_side,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let stages = self.stage_module_counts.len();
        if stages == 0 || self.stage_module_counts.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "stage_module_counts must be non-empty with every entry >= 1, got {:?}",
                self.stage_module_counts
            )));
        }
        if self.num_classes < 2 || self.base_channels == 0 || self.last_stage_channels == 0 {
            return Err(Error::InvalidArgument(format!("invalid attention network spec {self:?}")));
        }
        // Every stage's mask branch halves the resolution twice.
        let last_side = self.input_side >> (stages - 1);
        if last_side < 4 || self.input_side % (4 << (stages - 1)) != 0 {
            return Err(Error::InvalidArgument(format!(
                "input side {} is not divisible by {} for {stages} stages",
                self.input_side,
                4 << (stages - 1)
            )));
        }
        Ok(())
    }

    /// Spatial side of the last stage's output (the native map size).
    pub fn map_side(&self) -> usize {
        self.input_side >> (self.stage_module_counts.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSource {
    /// The module output `(1 + M) * T`.
    #[default]
    Combined,
    /// The soft mask `M` alone.
    Mask,
}

const BRANCH_INIT_GAIN: f64 = 0.1;
/// Masks start near 0 so the `(1 + M)` factors do not compound across modules.
const MASK_INIT_BIAS: f64 = -4.0;

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
    pad: usize,
}

#[derive(Debug, Clone, Copy)]
struct ResidualUnit {
    first: Conv,
    second: Conv,
    shortcut: Option<Conv>,
}

#[derive(Debug, Clone, Copy)]
struct Module {
    trunk: ResidualUnit,
    mask_low: ResidualUnit,
    mask_lowest: ResidualUnit,
    mask_out: Conv,
}

#[derive(Debug, Clone)]
struct Stage {
    entry: Option<ResidualUnit>,
    modules: Vec<Module>,
    between: Vec<ResidualUnit>,
}

/// Vars recorded for one attention module during a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ModuleVars {
    pub trunk: Var,
    pub mask: Var,
    pub combined: Var,
}

pub struct ForwardVars {
    pub logits: Var,
    /// Every module in forward order; the last entry is the map tap.
    pub modules: Vec<ModuleVars>,
}

#[derive(Debug, Clone)]
pub struct AttentionNetwork {
    pub spec: AttentionNetworkSpec,
    pub class_names: Vec<String>,
    pub seed: u64,
    pub trained: bool,
    store: ParamStore,
    stem: Conv,
    pre: ResidualUnit,
    stages: Vec<Stage>,
    head: (ParamId, ParamId),
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Conv {
        self.scaled_conv(name, cin, cout, k, 1.0)
    }

    fn scaled_conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, gain: f64) -> Conv {
        let w = self.store.add_he_uniform(format!("{name}.w"), (cout, cin, k, k), cin * k * k, &mut self.rng);
        *self.store.get_mut(w) *= gain;
        let b = self.store.add_zeros(format!("{name}.b"), (cout, 1, 1, 1));
        Conv { w, b, pad: k / 2 }
    }

    fn unit(&mut self, name: &str, cin: usize, mid: usize, cout: usize) -> ResidualUnit {
        ResidualUnit {
            first: self.conv(&format!("{name}.a"), cin, mid, 3),
            // Without normalization layers the stacked residual branches
            // blow up activations at init; start each one near zero.
            second: self.scaled_conv(&format!("{name}.b"), mid, cout, 3, BRANCH_INIT_GAIN),
            shortcut: (cin != cout).then(|| self.conv(&format!("{name}.skip"), cin, cout, 1)),
        }
    }
}

impl AttentionNetwork {
    pub fn build(spec: AttentionNetworkSpec, class_names: Vec<String>, seed: u64) -> Result<Self> {
        spec.validate()?;
        if class_names.len() != spec.num_classes {
            return Err(Error::InvalidArgument(format!(
                "{} class names for a {}-class spec",
                class_names.len(),
                spec.num_classes
            )));
        }
        let mut store = ParamStore::new();
        let mut b = Builder {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let base = spec.base_channels;
        let stem = b.conv("stem", 3, base, 3);
        let pre = b.unit("pre", base, base, base);
        let n_stages = spec.stage_module_counts.len();
        let mut stages = Vec::with_capacity(n_stages);
        let mut cin = base;
        for (s, &count) in spec.stage_module_counts.iter().enumerate() {
            let width = base << s;
            let (mid, cout) = if s + 1 == n_stages {
                (width, spec.last_stage_channels)
            } else {
                (width, width)
            };
            let entry = (s > 0).then(|| b.unit(&format!("s{s}.entry"), cin, mid, cout));
            let modules = (0..count)
                .map(|m| {
                    let name = format!("s{s}.m{m}");
                    let mask_out = b.scaled_conv(&format!("{name}.mask_out"), cout, cout, 1, BRANCH_INIT_GAIN);
                    b.store.get_mut(mask_out.b).fill(MASK_INIT_BIAS);
                    Module {
                        trunk: b.unit(&format!("{name}.trunk"), cout, mid, cout),
                        mask_low: b.unit(&format!("{name}.mask1"), cout, mid, cout),
                        mask_lowest: b.unit(&format!("{name}.mask2"), cout, mid, cout),
                        mask_out,
                    }
                })
                .collect();
            let between = (1..count).map(|m| b.unit(&format!("s{s}.between{m}"), cout, mid, cout)).collect();
            stages.push(Stage { entry, modules, between });
            cin = cout;
        }
        let features = cin * spec.map_side() * spec.map_side();
        // A zero head starts at the uniform prediction; random logits would
        // otherwise be cancelled by shrinking the single-channel features.
        let hw = b.store.add_zeros("head.w", (spec.num_classes, features, 1, 1));
        let hb = b.store.add_zeros("head.b", (spec.num_classes, 1, 1, 1));
        Ok(Self {
            spec,
            class_names,
            seed,
            trained: false,
            store,
            stem,
            pre,
            stages,
            head: (hw, hb),
        })
    }

    /// Trains end to end on the classification head and marks the network trained.
    pub fn train(&mut self, split: &DatasetSplit, cfg: &TrainConfig) -> Result<Vec<TrainLogRow>> {
        let log = fit(self, &split.train, &split.test, cfg)?;
        self.trained = true;
        Ok(log)
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> ForwardVars {
        let centered = tape.offset(x, -0.5);
        let mut h = conv(tape, self.stem, centered);
        h = unit(tape, &self.pre, h);
        let mut modules = Vec::new();
        for (s, stage) in self.stages.iter().enumerate() {
            if let Some(entry) = &stage.entry {
                debug_assert!(s > 0);
                h = tape.max_pool2(h);
                h = unit(tape, entry, h);
            }
            for (m, module) in stage.modules.iter().enumerate() {
                if m > 0 {
                    h = unit(tape, &stage.between[m - 1], h);
                }
                let vars = attention_module(tape, module, h);
                h = vars.combined;
                modules.push(vars);
            }
        }
        let h = tape.softplus(h);
        let flat = tape.flatten(h);
        let (w, b) = (tape.param(self.head.0), tape.param(self.head.1));
        ForwardVars {
            logits: tape.linear(flat, w, b),
            modules,
        }
    }
}

fn conv(tape: &mut Tape<'_>, c: Conv, x: Var) -> Var {
    let (w, b) = (tape.param(c.w), tape.param(c.b));
    tape.conv2d(x, w, b, c.pad)
}

/// Pre-activation residual unit: `conv(relu(conv(relu(x)))) + shortcut(x)`.
fn unit(tape: &mut Tape<'_>, u: &ResidualUnit, x: Var) -> Var {
    let a = tape.relu(x);
    let a = conv(tape, u.first, a);
    let a = tape.relu(a);
    let a = conv(tape, u.second, a);
    let skip = match u.shortcut {
        Some(c) => conv(tape, c, x),
        None => x,
    };
    tape.add(a, skip)
}

fn attention_module(tape: &mut Tape<'_>, m: &Module, x: Var) -> ModuleVars {
    let (_, _, rows, cols) = tape.value(x).dim();
    let trunk = unit(tape, &m.trunk, x);
    let low = tape.max_pool2(x);
    let low = unit(tape, &m.mask_low, low);
    let lowest = tape.max_pool2(low);
    let lowest = unit(tape, &m.mask_lowest, lowest);
    let up = tape.resize(lowest, rows / 2, cols / 2);
    let up = tape.resize(up, rows, cols);
    let logits = conv(tape, m.mask_out, up);
    let mask = tape.sigmoid(logits);
    let combined = tape.attention_combine(trunk, mask);
    ModuleVars { trunk, mask, combined }
}

impl Classifier for AttentionNetwork {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn input_side(&self) -> usize {
        self.spec.input_side
    }

    fn logits(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        self.forward(tape, x).logits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array4, Zip};
    use rand::Rng;

    fn small_net(seed: u64) -> AttentionNetwork {
        let spec = AttentionNetworkSpec::new(3, 16);
        AttentionNetwork::build(spec, vec!["a".into(), "b".into(), "c".into()], seed).unwrap()
    }

    #[test]
    fn residual_identity_and_mask_range() {
        let net = small_net(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array4::from_shape_simple_fn((2, 3, 16, 16), || rng.gen::<f64>());
        let mut tape = Tape::new(net.params(), false);
        let xv = tape.input(x, false);
        let out = net.forward(&mut tape, xv);
        assert_eq!(out.modules.len(), 6);
        for m in &out.modules {
            let (t, mk, h) = (tape.value(m.trunk), tape.value(m.mask), tape.value(m.combined));
            assert_eq!(t.dim(), mk.dim());
            assert!(mk.iter().all(|v| (0.0..=1.0).contains(v)));
            Zip::from(t).and(mk).and(h).for_each(|&t, &m, &h| assert_eq!(h, (1.0 + m) * t));
        }
        let last = tape.value(out.modules.last().unwrap().combined);
        assert_eq!(last.dim(), (2, 1, 4, 4));
        assert_eq!(tape.value(out.logits).dim(), (2, 3, 1, 1));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = AttentionNetworkSpec::new(3, 16);
        spec.stage_module_counts = vec![];
        assert!(spec.validate().is_err());
        spec.stage_module_counts = vec![1, 0];
        assert!(spec.validate().is_err());
        let spec = AttentionNetworkSpec::new(3, 20);
        assert!(spec.validate().is_err());
        assert_eq!(AttentionNetworkSpec::new(5, 32).map_side(), 8);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = small_net(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = ndarray::Array3::from_shape_simple_fn((16, 16, 3), || rng.gen_range(0.2..0.8));
        let (_, grad) = net.loss_and_input_gradient(&img, 1).unwrap();
        let h = 1e-4;
        for _ in 0..10 {
            let idx = (rng.gen_range(0..16), rng.gen_range(0..16), rng.gen_range(0..3));
            let mut up = img.clone();
            up[idx] += h;
            let mut dn = img.clone();
            dn[idx] -= h;
            let fd = (net.loss_and_input_gradient(&up, 1).unwrap().0 - net.loss_and_input_gradient(&dn, 1).unwrap().0) / (2.0 * h);
            assert!((grad[idx] - fd).abs() / fd.abs().max(1e-4) < 1e-3, "{} vs {fd}", grad[idx]);
        }
    }
}
