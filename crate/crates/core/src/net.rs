//! Layered ReLU networks, binary masks, and the exact output-scaling
//! transform.
//!
//! A layer is either `Dense` (full matrix over the flattened input) or
//! `Shared` (one small block applied identically at every position, the
//! 1-kernel stride-1 convolution). Widths count channels; a shared net fed
//! `p` positions of `c` channels each stores only the `c_out x c_in` block.
//! Position-major layout throughout: `[pos0 ch0.., pos1 ch0.., ...]`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TicketError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Channel counts `[n_0 .. n_L]`.
    pub widths: Vec<usize>,
    pub layer_kinds: Vec<LayerKind>,
    pub output_activation: OutputActivation,
    /// Spatial multiplicity of the input fed to layer 1. Plain MLPs use 1;
    /// a shared stage applied per coordinate of a d-dimensional input uses d.
    #[serde(default = "one")]
    pub input_positions: usize,
}

fn one() -> usize {
    1
}

impl Architecture {
    /// All-dense net over single-position inputs; tickets use identity output.
    pub fn dense(widths: Vec<usize>) -> Self {
        let depth = widths.len().saturating_sub(1);
        Architecture {
            widths,
            layer_kinds: vec![LayerKind::Dense; depth],
            output_activation: OutputActivation::Identity,
            input_positions: 1,
        }
    }

    /// All-shared net applied at `positions` parallel positions.
    pub fn shared(widths: Vec<usize>, positions: usize) -> Self {
        let depth = widths.len().saturating_sub(1);
        Architecture {
            widths,
            layer_kinds: vec![LayerKind::Shared; depth],
            output_activation: OutputActivation::Identity,
            input_positions: positions,
        }
    }

    /// Number of weight layers L.
    pub fn depth(&self) -> usize {
        self.layer_kinds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth() < 1 || self.widths.len() != self.depth() + 1 {
            return Err(TicketError::BadArchitecture(format!(
                "need widths = layers + 1, got {} widths for {} layers",
                self.widths.len(),
                self.depth()
            )));
        }
        if self.widths.iter().any(|&w| w == 0) || self.input_positions == 0 {
            return Err(TicketError::BadArchitecture("zero width or position count".into()));
        }
        for (l, &kind) in self.layer_kinds.iter().enumerate() {
            if kind == LayerKind::Shared && l > 0 && self.layer_kinds[l - 1] != LayerKind::Shared {
                return Err(TicketError::BadArchitecture(format!(
                    "shared layer {l} must follow a shared layer or the input"
                )));
            }
        }
        Ok(())
    }

    /// Positions of the input seen by layer `l` (0-based).
    pub fn positions_at(&self, l: usize) -> usize {
        if self.layer_kinds[..l].iter().all(|&k| k == LayerKind::Shared) {
            self.input_positions
        } else {
            1
        }
    }

    pub fn output_positions(&self) -> usize {
        if self.layer_kinds.iter().all(|&k| k == LayerKind::Shared) {
            self.input_positions
        } else {
            1
        }
    }

    /// Stored weight-matrix shape (rows, cols) of layer `l`.
    pub fn weight_dims(&self, l: usize) -> (usize, usize) {
        match self.layer_kinds[l] {
            LayerKind::Shared => (self.widths[l + 1], self.widths[l]),
            LayerKind::Dense => (self.widths[l + 1], self.positions_at(l) * self.widths[l]),
        }
    }

    /// Stored (untied) parameter count, biases included.
    pub fn stored_params(&self) -> usize {
        (0..self.depth())
            .map(|l| {
                let (r, c) = self.weight_dims(l);
                r * c + r
            })
            .sum()
    }

    pub fn input_len(&self) -> usize {
        self.input_positions * self.widths[0]
    }

    pub fn output_len(&self) -> usize {
        self.output_positions() * self.widths[self.depth()]
    }
}

/// Randomly initialized network. Weights are row-major per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotherNet {
    pub architecture: Architecture,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// Per-layer scale the net was drawn with; λ = ∏ 2/σ_w,l.
    pub sigma_w: Vec<f64>,
}

impl MotherNet {
    /// Net with all parameters zero (useful as a construction canvas).
    pub fn zeroed(architecture: Architecture, sigma_w: Vec<f64>) -> Result<Self> {
        architecture.validate()?;
        if sigma_w.len() != architecture.depth() {
            return Err(TicketError::ShapeMismatch(format!(
                "{} sigma values for {} layers",
                sigma_w.len(),
                architecture.depth()
            )));
        }
        let weights = (0..architecture.depth())
            .map(|l| {
                let (r, c) = architecture.weight_dims(l);
                vec![0.0; r * c]
            })
            .collect();
        let biases = (0..architecture.depth())
            .map(|l| vec![0.0; architecture.widths[l + 1]])
            .collect();
        Ok(MotherNet { architecture, weights, biases, sigma_w })
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        let depth = self.architecture.depth();
        if self.weights.len() != depth || self.biases.len() != depth || self.sigma_w.len() != depth
        {
            return Err(TicketError::ShapeMismatch("layer count".into()));
        }
        for l in 0..depth {
            let (r, c) = self.architecture.weight_dims(l);
            if self.weights[l].len() != r * c || self.biases[l].len() != r {
                return Err(TicketError::ShapeMismatch(format!("layer {l} parameter block")));
            }
        }
        if self.sigma_w.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(TicketError::BadParameter("sigma_w must be finite and positive".into()));
        }
        Ok(())
    }

    pub fn weight(&self, l: usize, row: usize, col: usize) -> f64 {
        let (_, c) = self.architecture.weight_dims(l);
        self.weights[l][row * c + col]
    }

    pub fn weight_mut(&mut self, l: usize, row: usize, col: usize) -> &mut f64 {
        let (_, c) = self.architecture.weight_dims(l);
        &mut self.weights[l][row * c + col]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.propagate(x, None)
    }

    pub fn forward_masked(&self, x: &[f64], mask: &PruneMask) -> Result<Vec<f64>> {
        mask.check_shapes(&self.architecture)?;
        self.propagate(x, Some(mask))
    }

    fn propagate(&self, x: &[f64], mask: Option<&PruneMask>) -> Result<Vec<f64>> {
        if x.len() != self.architecture.input_len() {
            return Err(TicketError::ShapeMismatch(format!(
                "input length {} but net expects {}",
                x.len(),
                self.architecture.input_len()
            )));
        }
        let depth = self.architecture.depth();
        let mut cur = x.to_vec();
        for l in 0..depth {
            let positions = self.architecture.positions_at(l);
            let (rows, cols) = self.architecture.weight_dims(l);
            let out_positions = match self.architecture.layer_kinds[l] {
                LayerKind::Shared => positions,
                LayerKind::Dense => 1,
            };
            let mut next = vec![0.0; out_positions * rows];
            for p in 0..out_positions {
                let input = match self.architecture.layer_kinds[l] {
                    LayerKind::Shared => &cur[p * cols..(p + 1) * cols],
                    LayerKind::Dense => &cur[..],
                };
                for r in 0..rows {
                    let b = match mask {
                        Some(m) if !m.bias_kept(l, r) => 0.0,
                        _ => self.biases[l][r],
                    };
                    let mut acc = b;
                    for c in 0..cols {
                        let w = match mask {
                            Some(m) if !m.weight_kept(l, r, c) => 0.0,
                            _ => self.weights[l][r * cols + c],
                        };
                        acc += w * input[c];
                    }
                    next[p * rows + r] = acc;
                }
            }
            let last = l == depth - 1;
            if !last || self.architecture.output_activation == OutputActivation::Relu {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Multiply layer-l weights by `sigmas[l]` and layer-l biases by
    /// `∏_{m≤l} sigmas[m]`; the output scales by `∏ sigmas[l]` exactly
    /// (positive homogeneity of ReLU).
    pub fn scale_transform(&self, sigmas: &[f64]) -> Result<MotherNet> {
        if sigmas.len() != self.architecture.depth() {
            return Err(TicketError::ShapeMismatch("one sigma per layer".into()));
        }
        if sigmas.iter().any(|&s| !(s > 0.0)) {
            return Err(TicketError::BadParameter("scale factors must be positive".into()));
        }
        let mut out = self.clone();
        let mut prefix = 1.0;
        for (l, &s) in sigmas.iter().enumerate() {
            prefix *= s;
            for w in &mut out.weights[l] {
                *w *= s;
            }
            for b in &mut out.biases[l] {
                *b *= prefix;
            }
            out.sigma_w[l] *= s;
        }
        Ok(out)
    }

    /// A copy with every masked-out parameter physically set to zero.
    pub fn zeroed_by(&self, mask: &PruneMask) -> Result<MotherNet> {
        mask.check_shapes(&self.architecture)?;
        let mut out = self.clone();
        for l in 0..self.architecture.depth() {
            for (w, &bit) in out.weights[l].iter_mut().zip(&mask.weights[l]) {
                if bit == 0 {
                    *w = 0.0;
                }
            }
            for (b, &bit) in out.biases[l].iter_mut().zip(&mask.biases[l]) {
                if bit == 0 {
                    *b = 0.0;
                }
            }
        }
        Ok(out)
    }
}

/// One bit per stored parameter; 1 keeps the parameter, 0 prunes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneMask {
    pub weights: Vec<Vec<u8>>,
    pub biases: Vec<Vec<u8>>,
}

impl PruneMask {
    pub fn all_zero(architecture: &Architecture) -> Self {
        Self::filled(architecture, 0)
    }

    pub fn all_one(architecture: &Architecture) -> Self {
        Self::filled(architecture, 1)
    }

    fn filled(architecture: &Architecture, bit: u8) -> Self {
        let weights = (0..architecture.depth())
            .map(|l| {
                let (r, c) = architecture.weight_dims(l);
                vec![bit; r * c]
            })
            .collect();
        let biases = (0..architecture.depth())
            .map(|l| vec![bit; architecture.widths[l + 1]])
            .collect();
        PruneMask { weights, biases }
    }

    pub fn check_shapes(&self, architecture: &Architecture) -> Result<()> {
        let depth = architecture.depth();
        if self.weights.len() != depth || self.biases.len() != depth {
            return Err(TicketError::ShapeMismatch("mask layer count".into()));
        }
        for l in 0..depth {
            let (r, c) = architecture.weight_dims(l);
            if self.weights[l].len() != r * c || self.biases[l].len() != r {
                return Err(TicketError::ShapeMismatch(format!("mask layer {l}")));
            }
        }
        Ok(())
    }

    pub fn keep_weight(&mut self, arch: &Architecture, l: usize, row: usize, col: usize) {
        let (_, c) = arch.weight_dims(l);
        self.weights[l][row * c + col] = 1;
    }

    pub fn keep_bias(&mut self, l: usize, row: usize) {
        self.biases[l][row] = 1;
    }

    pub fn weight_kept(&self, l: usize, row: usize, col: usize) -> bool {
        let cols = self.weights[l].len() / self.biases[l].len();
        self.weights[l][row * cols + col] != 0
    }

    pub fn bias_kept(&self, l: usize, row: usize) -> bool {
        self.biases[l][row] != 0
    }

    pub fn kept_params(&self) -> usize {
        let w: usize = self.weights.iter().flatten().map(|&b| b as usize).sum();
        let b: usize = self.biases.iter().flatten().map(|&b| b as usize).sum();
        w + b
    }

    pub fn stored_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Kept / stored, tied parameters counted once. Bias parameters are
    /// included in both counts.
    pub fn surviving_fraction(&self) -> f64 {
        self.kept_params() as f64 / self.stored_params() as f64
    }

    /// Keep everything either mask keeps.
    pub fn union_with(&mut self, other: &PruneMask) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x |= y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x |= y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    fn single_layer(w: f64, b: f64, act: OutputActivation) -> MotherNet {
        let mut arch = Architecture::dense(vec![1, 1]);
        arch.output_activation = act;
        let mut net = MotherNet::zeroed(arch, vec![2.0]).unwrap();
        net.weights[0][0] = w;
        net.biases[0][0] = b;
        net
    }

    #[test]
    fn relu_kills_negative_preactivation() {
        let net = single_layer(1.0, 0.0, OutputActivation::Relu);
        assert_eq!(net.forward(&[-2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn affine_then_relu() {
        let net = single_layer(2.0, 1.0, OutputActivation::Relu);
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    fn random_dense(widths: Vec<usize>, seed: u64) -> MotherNet {
        let arch = Architecture::dense(widths);
        let mut net = MotherNet::zeroed(arch, vec![2.0; 3]).unwrap();
        let mut rng = substream(seed, &[99]);
        for l in 0..net.architecture.depth() {
            for w in &mut net.weights[l] {
                *w = rng.gen_range(-2.0..2.0);
            }
            for b in &mut net.biases[l] {
                *b = rng.gen_range(-1.0..1.0);
            }
        }
        net
    }

    /// Straight-line evaluator written independently of `propagate`:
    /// explicit matrices, no masking, no position logic.
    fn oracle_eval(net: &MotherNet, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        let depth = net.architecture.depth();
        for l in 0..depth {
            let rows = net.architecture.widths[l + 1];
            let cols = net.architecture.widths[l];
            let mut h = net.biases[l].clone();
            for r in 0..rows {
                for c in 0..cols {
                    h[r] += net.weights[l][r * cols + c] * v[c];
                }
            }
            if l + 1 < depth {
                for z in &mut h {
                    if *z < 0.0 {
                        *z = 0.0;
                    }
                }
            }
            v = h;
        }
        v
    }

    #[test]
    fn forward_matches_independent_oracle() {
        let net = random_dense(vec![3, 5, 4, 2], 17);
        let x = [0.3, -0.7, 1.1];
        let got = net.forward(&x).unwrap();
        let want = oracle_eval(&net, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{g} vs {w}");
        }
    }

    #[test]
    fn shared_equals_tiled_dense() {
        for d in 1..=8usize {
            let mut shared = MotherNet::zeroed(
                Architecture::shared(vec![2, 3, 2], d),
                vec![2.0, 2.0],
            )
            .unwrap();
            let mut rng = substream(5, &[d as u64]);
            for l in 0..2 {
                for w in &mut shared.weights[l] {
                    *w = rng.gen_range(-2.0..2.0);
                }
                for b in &mut shared.biases[l] {
                    *b = rng.gen_range(-1.0..1.0);
                }
            }

            // Materialize the block-diagonal dense equivalent.
            let widths = vec![2 * d, 3 * d, 2 * d];
            let mut dense = MotherNet::zeroed(Architecture::dense(widths), vec![2.0, 2.0]).unwrap();
            for l in 0..2 {
                let (r_blk, c_blk) = shared.architecture.weight_dims(l);
                let cols = dense.architecture.weight_dims(l).1;
                for p in 0..d {
                    for r in 0..r_blk {
                        for c in 0..c_blk {
                            dense.weights[l][(p * r_blk + r) * cols + (p * c_blk + c)] =
                                shared.weights[l][r * c_blk + c];
                        }
                        dense.biases[l][p * r_blk + r] = shared.biases[l][r];
                    }
                }
            }

            let x: Vec<f64> = (0..2 * d).map(|i| (i as f64) * 0.37 - 1.0).collect();
            assert_eq!(shared.forward(&x).unwrap(), dense.forward(&x).unwrap());
        }
    }

    #[test]
    fn scale_transform_hand_example() {
        let net = single_layer(1.0, 0.5, OutputActivation::Identity);
        assert_eq!(net.forward(&[1.0]).unwrap(), vec![1.5]);
        let scaled = net.scale_transform(&[2.0]).unwrap();
        assert_eq!(scaled.forward(&[1.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn scale_transform_identity_and_eighth() {
        let net = random_dense(vec![2, 6, 6, 1], 3);
        let same = net.scale_transform(&[1.0, 1.0, 1.0]).unwrap();
        let eighth = net.scale_transform(&[0.5, 0.5, 0.5]).unwrap();
        let mut rng = substream(11, &[0]);
        for _ in 0..100 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let base = net.forward(&x).unwrap()[0];
            assert_eq!(same.forward(&x).unwrap()[0], base);
            let scaled = eighth.forward(&x).unwrap()[0];
            assert!((scaled - 0.125 * base).abs() <= 1e-12 * base.abs().max(1e-30));
        }
    }

    #[test]
    fn mask_fraction_extremes() {
        let arch = Architecture::dense(vec![3, 4, 2]);
        assert_eq!(PruneMask::all_one(&arch).surviving_fraction(), 1.0);
        assert_eq!(PruneMask::all_zero(&arch).surviving_fraction(), 0.0);
        // 3*4+4 + 4*2+2 = 26 stored parameters
        assert_eq!(PruneMask::all_one(&arch).stored_params(), 26);
    }

    #[test]
    fn json_round_trip() {
        let net = random_dense(vec![2, 3, 3, 1], 8);
        let text = serde_json::to_string(&net).unwrap();
        let back: MotherNet = serde_json::from_str(&text).unwrap();
        assert_eq!(net, back);

        let mut mask = PruneMask::all_zero(&net.architecture);
        mask.keep_weight(&net.architecture, 0, 1, 1);
        mask.keep_bias(2, 0);
        let text = serde_json::to_string(&mask).unwrap();
        let back: PruneMask = serde_json::from_str(&text).unwrap();
        assert_eq!(mask, back);
    }

    #[test]
    fn shared_after_dense_rejected() {
        let arch = Architecture {
            widths: vec![1, 2, 2],
            layer_kinds: vec![LayerKind::Dense, LayerKind::Shared],
            output_activation: OutputActivation::Identity,
            input_positions: 1,
        };
        assert!(arch.validate().is_err());
    }

    proptest! {
        #[test]
        fn masked_forward_equals_zeroed_net(seed in 0u64..500, bits in proptest::collection::vec(any::<bool>(), 64)) {
            let net = random_dense(vec![2, 4, 3, 2], seed);
            let arch = &net.architecture;
            let mut mask = PruneMask::all_zero(arch);
            let mut i = 0;
            for l in 0..arch.depth() {
                for v in &mut mask.weights[l] {
                    *v = u8::from(bits[i % bits.len()]);
                    i += 1;
                }
                for v in &mut mask.biases[l] {
                    *v = u8::from(bits[i % bits.len()]);
                    i += 1;
                }
            }
            let zeroed = net.zeroed_by(&mask).unwrap();
            let x = [0.4, -1.3];
            let a = net.forward_masked(&x, &mask).unwrap();
            let b = zeroed.forward(&x).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (u, v) in a.iter().zip(&b) {
                prop_assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }
}
