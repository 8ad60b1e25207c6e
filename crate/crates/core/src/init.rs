//! Non-zero-bias initialization and the λ output correction.
//!
//! Layer-l weights are drawn at scale σ_w,l (uniform on [−σ, σ] or normal
//! with variance σ²) and layer-l biases at scale ∏_{k≤l} σ_w,k/2, so the
//! canonical σ_w,l = 2 frame has w ∼ U[−2,2] / N(0,4) and b ∼ U[−1,1] /
//! N(0,1) at every layer. Any other schedule is distributionally the
//! canonical draw pushed through `scale_transform`, with the ticket output
//! corrected by λ = ∏ 2/σ_w,l.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TicketError};
use crate::net::{Architecture, MotherNet};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitFamily {
    Uniform,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub family: InitFamily,
    pub sigma_w: Vec<f64>,
    pub seed: u64,
}

impl InitSpec {
    pub fn canonical(family: InitFamily, depth: usize, seed: u64) -> Self {
        InitSpec { family, sigma_w: vec![2.0; depth], seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_w.is_empty() || self.sigma_w.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(TicketError::BadParameter(
                "sigma_w must be non-empty and positive".into(),
            ));
        }
        Ok(())
    }

    /// Scale of layer-l biases (0-based): ∏_{k≤l} σ_w,k / 2.
    pub fn bias_scale(&self, l: usize) -> f64 {
        self.sigma_w[..=l].iter().map(|s| s / 2.0).product()
    }

    /// λ = ∏_l 2/σ_w,l; multiplies ticket outputs to undo the draw scale.
    pub fn lambda_factor(&self) -> f64 {
        self.sigma_w.iter().map(|s| 2.0 / s).product()
    }
}

/// Draw a mother net. Each layer's weights and biases get their own
/// substream of `spec.seed`, so results are independent of evaluation order.
pub fn sample(arch: &Architecture, spec: &InitSpec) -> Result<MotherNet> {
    arch.validate()?;
    spec.validate()?;
    if spec.sigma_w.len() != arch.depth() {
        return Err(TicketError::ShapeMismatch(format!(
            "{} sigma values for {} layers",
            spec.sigma_w.len(),
            arch.depth()
        )));
    }
    let mut net = MotherNet::zeroed(arch.clone(), spec.sigma_w.clone())?;
    for l in 0..arch.depth() {
        let sw = spec.sigma_w[l];
        let sb = spec.bias_scale(l);
        let mut wr = substream(spec.seed, &[1, l as u64]);
        let mut br = substream(spec.seed, &[2, l as u64]);
        match spec.family {
            InitFamily::Uniform => {
                for w in &mut net.weights[l] {
                    *w = wr.gen_range(-sw..sw);
                }
                for b in &mut net.biases[l] {
                    *b = br.gen_range(-sb..sb);
                }
            }
            InitFamily::Normal => {
                let wd = Normal::new(0.0, sw).expect("validated sigma");
                let bd = Normal::new(0.0, sb).expect("validated sigma");
                for w in &mut net.weights[l] {
                    *w = wd.sample(&mut wr);
                }
                for b in &mut net.biases[l] {
                    *b = bd.sample(&mut br);
                }
            }
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

    fn stats(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    /// Two-sided KS statistic against a CDF.
    fn ks_stat(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in samples.iter().enumerate() {
            let f = cdf(x);
            d = d.max((((i + 1) as f64) / n - f).abs()).max((f - i as f64 / n).abs());
        }
        d
    }

    #[test]
    fn lambda_values() {
        let canon = InitSpec::canonical(InitFamily::Uniform, 4, 0);
        assert_eq!(canon.lambda_factor(), 1.0);
        let s = InitSpec { family: InitFamily::Uniform, sigma_w: vec![1.0, 1.0], seed: 0 };
        assert_eq!(s.lambda_factor(), 4.0);
        let s = InitSpec { family: InitFamily::Uniform, sigma_w: vec![0.5, 2.0, 1.0], seed: 0 };
        assert_eq!(s.lambda_factor(), 8.0);
    }

    #[test]
    fn canonical_layer1_biases_fill_unit_interval() {
        let arch = Architecture::dense(vec![2, 2000, 1]);
        let spec = InitSpec::canonical(InitFamily::Uniform, 2, 11);
        let net = sample(&arch, &spec).unwrap();
        let bs = &net.biases[0];
        assert!(bs.iter().all(|b| b.abs() <= 1.0));
        assert!(bs.iter().cloned().fold(f64::MAX, f64::min) < -0.9);
        assert!(bs.iter().cloned().fold(f64::MIN, f64::max) > 0.9);
    }

    #[test]
    fn uniform_weight_variance_is_four_thirds() {
        let arch = Architecture::dense(vec![4, 250_000, 1]);
        let spec = InitSpec::canonical(InitFamily::Uniform, 2, 3);
        let net = sample(&arch, &spec).unwrap();
        let (_, var) = stats(&net.weights[0]);
        assert!((var - 4.0 / 3.0).abs() < 0.01 * (4.0 / 3.0), "var {var}");
    }

    #[test]
    fn bias_scales_compound_per_layer() {
        // sigma_w = (3, 1): bias scales 1.5 and 0.75.
        let spec = InitSpec { family: InitFamily::Normal, sigma_w: vec![3.0, 1.0], seed: 5 };
        assert_eq!(spec.bias_scale(0), 1.5);
        assert_eq!(spec.bias_scale(1), 0.75);
        let wide_first = sample(&Architecture::dense(vec![1, 100_000, 2]), &spec).unwrap();
        let wide_last = sample(&Architecture::dense(vec![1, 2, 100_000]), &spec).unwrap();
        let (_, v1) = stats(&wide_first.biases[0]);
        let (_, v2) = stats(&wide_last.biases[1]);
        assert!((v1.sqrt() - 1.5).abs() < 0.015 * 1.5, "layer-1 bias std {}", v1.sqrt());
        assert!((v2.sqrt() - 0.75).abs() < 0.015 * 0.75, "layer-2 bias std {}", v2.sqrt());
    }

    #[test]
    fn canonical_frame_biases_unit_at_every_layer() {
        // In the sigma = 2 frame the bias law is the same at every layer.
        let spec = InitSpec::canonical(InitFamily::Normal, 2, 9);
        assert_eq!(spec.bias_scale(1), 1.0);
        let arch = Architecture::dense(vec![1, 2, 100_000]);
        let net = sample(&arch, &spec).unwrap();
        let (_, var) = stats(&net.biases[1]);
        assert!((var.sqrt() - 1.0).abs() < 0.01, "layer-2 bias std {}", var.sqrt());
    }

    #[test]
    fn ks_against_reference_laws() {
        let crit = 1.628 / (100_000f64).sqrt(); // significance 0.01
        let arch = Architecture::dense(vec![1, 2, 100_000]);

        let spec = InitSpec::canonical(InitFamily::Uniform, 2, 21);
        let net = sample(&arch, &spec).unwrap();
        let mut b2 = net.biases[1].clone();
        let d = ks_stat(&mut b2, |x| ((x + 1.0) / 2.0).clamp(0.0, 1.0));
        assert!(d < crit, "uniform bias KS {d} vs {crit}");

        let spec = InitSpec { family: InitFamily::Normal, sigma_w: vec![3.0, 1.0], seed: 22 };
        let net = sample(&arch, &spec).unwrap();
        let phi = StatNormal::new(0.0, 1.0).unwrap();
        let scale = spec.bias_scale(1);
        let mut b2 = net.biases[1].clone();
        let d = ks_stat(&mut b2, |x| phi.cdf(x / scale));
        assert!(d < crit, "normal bias KS {d} vs {crit}");
    }

    #[test]
    fn scale_transform_matches_direct_draw() {
        // Canonical draw rescaled by (1.5, 0.5) vs a direct sigma = (3, 1)
        // draw: same laws. Both empirical stds must sit within 2% of the
        // common theoretical value.
        let arch = Architecture::dense(vec![50, 2000, 2000]);
        let canon = sample(&arch, &InitSpec::canonical(InitFamily::Uniform, 2, 31)).unwrap();
        let scaled = canon.scale_transform(&[1.5, 0.5]).unwrap();
        let direct_spec =
            InitSpec { family: InitFamily::Uniform, sigma_w: vec![3.0, 1.0], seed: 32 };
        let direct = sample(&arch, &direct_spec).unwrap();
        assert_eq!(scaled.sigma_w, vec![3.0, 1.0]);
        for l in 0..2 {
            // U[-a, a] has std a/sqrt(3)
            let w_std = direct_spec.sigma_w[l] / 3f64.sqrt();
            let b_std = direct_spec.bias_scale(l) / 3f64.sqrt();
            for net in [&scaled, &direct] {
                let (_, vw) = stats(&net.weights[l]);
                assert!(
                    (vw.sqrt() - w_std).abs() < 0.02 * w_std,
                    "layer {l} weight std {} vs {w_std}",
                    vw.sqrt()
                );
                let (_, vb) = stats(&net.biases[l]);
                assert!(
                    (vb.sqrt() - b_std).abs() < 0.02 * b_std,
                    "layer {l} bias std {} vs {b_std}",
                    vb.sqrt()
                );
            }
        }
    }
}
