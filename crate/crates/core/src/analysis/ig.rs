use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TokenizedInstance;
use crate::encoder::{
    encode_pair, scaled_attention_passes, AttentionCapture, HeadGrid, HeadId, ModelParams,
};
use crate::error::{Error, Result};
use crate::numkernel::Tensor;

pub const DEFAULT_IG_STEPS: usize = 20;
/// Interpolation steps evaluated together on one tape.
pub const DEFAULT_IG_CHUNK: usize = 50;

/// Per-head attribution scores, shaped like [`AttentionCapture`].
pub type AttributionTensor = HeadGrid<Tensor>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgConfig {
    /// Riemann steps `s`.
    pub steps: usize,
    /// Heads interpolated together; every head when `None`.
    pub heads: Option<Vec<HeadId>>,
    pub chunk: usize,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_IG_STEPS,
            heads: None,
            chunk: DEFAULT_IG_CHUNK,
        }
    }
}

impl IgConfig {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.chunk == 0 {
            return Err(Error::Config("IG steps and chunk must be positive".into()));
        }
        Ok(())
    }
}

/// `base ⊙ (1/s)·Σ_{i=1..s} grad(i/s)`: right Riemann sum of the path
/// integral from the zero baseline to `base`.
///
/// `grad` receives a batch of scales and returns one gradient list (same
/// layout as `base`) per scale.
pub fn riemann_integrated_gradients(
    base: &[Tensor],
    steps: usize,
    chunk: usize,
    mut grad: impl FnMut(&[f64]) -> Result<Vec<Vec<Tensor>>>,
) -> Result<Vec<Tensor>> {
    if steps == 0 || chunk == 0 {
        return Err(Error::Config("IG steps and chunk must be positive".into()));
    }
    let mut sums: Vec<Vec<f64>> = base.iter().map(|t| vec![0.0; t.len()]).collect();
    let scales: Vec<f64> = (1..=steps).map(|i| i as f64 / steps as f64).collect();
    for (c, block) in scales.chunks(chunk).enumerate() {
        let grads = grad(block)?;
        if grads.len() != block.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} scales",
                grads.len(),
                block.len()
            )));
        }
        for (k, g) in grads.iter().enumerate() {
            let step = c * chunk + k + 1;
            if g.len() != base.len() {
                return Err(Error::Shape(format!("gradient list of length {}", g.len())));
            }
            for (acc, t) in sums.iter_mut().zip(g) {
                if !t.all_finite() {
                    return Err(Error::AttributionStep { step });
                }
                acc.iter_mut().zip(t.values()).for_each(|(a, &v)| *a += v);
            }
        }
    }
    let inv = 1.0 / steps as f64;
    base.iter()
        .zip(sums)
        .map(|(b, s)| {
            Tensor::new(
                b.shape(),
                b.values().iter().zip(s).map(|(&a, g)| a * g * inv).collect(),
            )
        })
        .collect()
}

/// Attribution of one sentence's score-head output.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub attention: AttentionCapture,
    /// Zero for heads that were not interpolated.
    pub scores: AttributionTensor,
    /// `F(α)`.
    pub output: f64,
    /// `F(α′)` with every interpolated head at zero.
    pub baseline_output: f64,
    pub steps: usize,
}

impl Attribution {
    pub fn total(&self) -> f64 {
        self.scores.cells().iter().map(|t| t.sum()).sum()
    }

    /// `|Σ Atr − (F(α) − F(α′))|`.
    pub fn completeness_residual(&self) -> f64 {
        (self.total() - (self.output - self.baseline_output)).abs()
    }
}

/// Integrated gradients of the sentence's score-head output with respect
/// to the post-softmax attention of the selected heads.
pub fn integrated_gradients(
    tokens: &[u32],
    params: &ModelParams,
    cfg: &IgConfig,
) -> Result<Attribution> {
    cfg.validate()?;
    let attention = encode_pair(tokens, params)?.attention;
    let heads: Vec<HeadId> = match &cfg.heads {
        Some(h) => h.clone(),
        None => params.config.head_ids().collect(),
    };
    let base: Vec<Tensor> = heads.iter().map(|&h| attention.get(h).clone()).collect();
    let mut output = None;
    let atr = riemann_integrated_gradients(&base, cfg.steps, cfg.chunk, |scales| {
        let passes = scaled_attention_passes(tokens, params, &attention, &heads, scales, None)?;
        if let Some(last) = passes.iter().find(|p| p.scale == 1.0) {
            output = Some(last.output);
        }
        Ok(passes.into_iter().map(|p| p.gradients).collect())
    })?;
    let baseline_output =
        scaled_attention_passes(tokens, params, &attention, &heads, &[0.0], None)?[0].output;
    let mut scores = attention.map(|_, t| Tensor::zeros(t.shape()));
    for (h, a) in heads.iter().zip(atr) {
        *scores.get_mut(*h) = a;
    }
    Ok(Attribution {
        attention,
        scores,
        output: output.expect("the last scale is 1"),
        baseline_output,
        steps: cfg.steps,
    })
}

/// Attributions for all five candidate sentences, each with respect to its own logit.
pub fn attribute_instance(
    inst: &TokenizedInstance,
    params: &ModelParams,
    cfg: &IgConfig,
) -> Result<Vec<Attribution>> {
    inst.sentences
        .par_iter()
        .map(|s| integrated_gradients(s, params, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::vocab::{CLS, SEP};
    use crate::encoder::EncoderConfig;
    use crate::numkernel::Tape;

    fn tiny() -> ModelParams {
        ModelParams::init(EncoderConfig {
            num_layers: 2,
            num_heads: 2,
            model_width: 8,
            key_width: 4,
            ff_width: 16,
            vocab_size: 20,
            max_seq_len: 16,
            seed: 21,
        })
        .unwrap()
    }

    const SENT: [u32; 7] = [CLS, 5, 6, SEP, 7, 8, SEP];

    /// `F = c·Σ α²` has IG entries `c·α²` in the limit.
    #[test]
    fn quadratic_fixture_matches_closed_form() {
        let alpha = Tensor::new(&[2, 2], vec![0.3, 0.7, 0.9, 0.1]).unwrap();
        let c = 1.7;
        let grad = |scales: &[f64]| -> Result<Vec<Vec<Tensor>>> {
            scales
                .iter()
                .map(|&x| {
                    let mut tape = Tape::new();
                    let a = tape.leaf(alpha.scale(x));
                    let sq = tape.mul(a, a)?;
                    let s = tape.sum(sq)?;
                    let f = tape.scale(s, c)?;
                    Ok(vec![tape.backward(f)?.get(a)])
                })
                .collect()
        };
        let s = 100;
        let atr = riemann_integrated_gradients(&[alpha.clone()], s, 7, grad).unwrap();
        for (got, a) in atr[0].values().iter().zip(alpha.values()) {
            let limit = c * a * a;
            // The right sum of ∫ 2cxα² dx is exactly cα²·(s+1)/s.
            let discrete = limit * (s + 1) as f64 / s as f64;
            assert!((got - discrete).abs() < 1e-12, "{got} vs {discrete}");
            assert!((got - limit).abs() <= 0.01 * limit * (1.0 + 1e-9), "{got} vs {limit}");
        }
    }

    #[test]
    fn linear_in_the_output_scale() {
        let alpha = Tensor::new(&[1, 3], vec![0.2, 0.5, 0.3]).unwrap();
        let run = |c: f64| {
            riemann_integrated_gradients(&[alpha.clone()], 10, 4, |scales| {
                Ok(scales
                    .iter()
                    .map(|&x| vec![alpha.map(|a| c * 3.0 * x * a)])
                    .collect())
            })
            .unwrap()
        };
        let one = run(1.0);
        let two = run(2.5);
        for (a, b) in one[0].values().iter().zip(two[0].values()) {
            assert!((2.5 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_names_the_step() {
        let alpha = Tensor::new(&[1, 1], vec![1.0]).unwrap();
        let err = riemann_integrated_gradients(&[alpha], 4, 4, |scales| {
            Ok(scales
                .iter()
                .map(|&x| {
                    let v = if x == 0.75 { f64::NAN } else { 1.0 };
                    vec![Tensor::new(&[1, 1], vec![v]).unwrap()]
                })
                .collect())
        })
        .unwrap_err();
        assert!(matches!(err, Error::AttributionStep { step: 3 }));
    }

    #[test]
    fn encoder_attribution_is_nearly_complete() {
        let p = tiny();
        let a = integrated_gradients(&SENT, &p, &IgConfig::with_steps(200)).unwrap();
        let diff = a.output - a.baseline_output;
        assert!(a.completeness_residual() <= 0.01 * diff.abs().max(1e-9), "{a:?}");
        let plain = crate::encoder::score_sentences(&[&SENT], &p, None).unwrap()[0];
        assert_eq!(a.output.to_bits(), plain.to_bits());
        assert_eq!(a.scores.cells().len(), 4);
    }

    #[test]
    fn chunking_does_not_change_the_result() {
        let p = tiny();
        let a = integrated_gradients(&SENT, &p, &IgConfig { steps: 12, heads: None, chunk: 5 }).unwrap();
        let b = integrated_gradients(&SENT, &p, &IgConfig { steps: 12, heads: None, chunk: 50 }).unwrap();
        for (x, y) in a.scores.cells().iter().zip(b.scores.cells()) {
            assert!(x.max_abs_diff(y) < 1e-12);
        }
    }

    #[test]
    fn unselected_heads_get_zero() {
        let p = tiny();
        let cfg = IgConfig {
            steps: 5,
            heads: Some(vec![HeadId::new(1, 0)]),
            chunk: 50,
        };
        let a = integrated_gradients(&SENT, &p, &cfg).unwrap();
        assert!(a.scores.get(HeadId::new(0, 0)).values().iter().all(|&v| v == 0.0));
        assert!(a.scores.get(HeadId::new(1, 0)).values().iter().any(|&v| v != 0.0));
    }
}
