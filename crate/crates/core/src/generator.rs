//! Fusion of trend and importance vectors and the log-normal citation curve.
//!
//! ```text
//! a_g = softmax(l . h_g, l . h_c)[0]       h = a_g h_g + (1 - a_g) h_c
//! mu, sigma, eta = three small MLPs of h   (sigma = softplus + 1e-3)
//! C(t) = scale * (exp(eta * Phi((ln t - mu) / sigma)) - 1),  t = 1..L
//! ```
//!
//! `C(t)` is read as the logged cumulative count `ln(1 + citations)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat_cols, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::special::{sigmoid, std_normal_cdf};
use crate::tensor::Tensor;

pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub alpha_scale: f64,
    pub horizon: usize,
    pub mlp_hidden: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            alpha_scale: 1.0,
            horizon: 5,
            mlp_hidden: 20,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_scale > 0.0 && self.alpha_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha_scale must be positive, got {}", self.alpha_scale)));
        }
        if self.horizon == 0 || self.mlp_hidden == 0 {
            return Err(Error::InvalidConfig("horizon and MLP width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    pub mu: f64,
    pub sigma: f64,
    pub eta: f64,
}

/// Convex combination of the two vectors weighted by their `lambda` logits.
/// Returns the fused vector and the trend weight.
pub fn fuse(h_g: &[f64], h_c: &[f64], lambda: &[f64]) -> Result<(Vec<f64>, f64)> {
    if h_g.len() != h_c.len() || h_g.len() != lambda.len() {
        return Err(Error::DimensionMismatch(format!("fuse widths {}, {}, {}", h_g.len(), h_c.len(), lambda.len())));
    }
    let dot = |v: &[f64]| v.iter().zip(lambda).map(|(a, b)| a * b).sum::<f64>();
    let a_g = sigmoid(dot(h_g) - dot(h_c));
    let h = h_g.iter().zip(h_c).map(|(g, c)| a_g * g + (1.0 - a_g) * c).collect();
    Ok((h, a_g))
}

/// `C(t)` for `t >= 1` years after publication.
pub fn cumulative_citations(p: &CurveParams, alpha_scale: f64, t: i64) -> Result<f64> {
    if t < 1 {
        return Err(Error::YearOutOfRange(t));
    }
    let x = ((t as f64).ln() - p.mu) / p.sigma;
    Ok(alpha_scale * (p.eta * std_normal_cdf(x)).exp_m1())
}

pub fn predict_series(p: &CurveParams, cfg: &GeneratorConfig) -> Vec<f64> {
    (1..=cfg.horizon as i64)
        .map(|t| cumulative_citations(p, cfg.alpha_scale, t).expect("t >= 1"))
        .collect()
}

#[derive(Debug, Clone)]
struct Mlp {
    hidden: ParamId,
    hidden_bias: ParamId,
    out: ParamId,
    out_bias: ParamId,
}

impl Mlp {
    fn new(name: &str, dim: usize, width: usize, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let p = format!("mlps.{name}");
        Self {
            hidden: store.add(format!("{p}.hidden"), Tensor::xavier(dim, width, rng)),
            hidden_bias: store.add(format!("{p}.hidden_bias"), Tensor::zeros(1, width)),
            out: store.add(format!("{p}.out"), Tensor::xavier(width, 1, rng)),
            out_bias: store.add(format!("{p}.out_bias"), Tensor::zeros(1, 1)),
        }
    }

    fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Var<'t> {
        let p = |id| tape.param(store, id);
        x.matmul(p(self.hidden))
            .add_row(p(self.hidden_bias))
            .tanh()
            .matmul(p(self.out))
            .add_row(p(self.out_bias))
    }

    fn ids(&self) -> [ParamId; 4] {
        [self.hidden, self.hidden_bias, self.out, self.out_bias]
    }
}

/// Differentiable outputs of the curve head for a batch.
pub struct CurveOutput<'t> {
    pub trend_weight: Var<'t>,
    pub mu: Var<'t>,
    pub sigma: Var<'t>,
    pub eta: Var<'t>,
    /// `B x L` logged cumulative counts.
    pub series: Var<'t>,
}

#[derive(Debug, Clone)]
pub struct CurveHead {
    cfg: GeneratorConfig,
    lambda: ParamId,
    mu: Mlp,
    sigma: Mlp,
    eta: Mlp,
}

impl CurveHead {
    /// Registers `fusion.lambda` and `mlps.*`.
    pub fn new(dim: usize, cfg: GeneratorConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let w = cfg.mlp_hidden;
        Ok(Self {
            lambda: store.add("fusion.lambda", Tensor::xavier(dim, 1, rng)),
            mu: Mlp::new("mu", dim, w, store, rng),
            sigma: Mlp::new("sigma", dim, w, store, rng),
            eta: Mlp::new("eta", dim, w, store, rng),
            cfg,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn lambda(&self) -> ParamId {
        self.lambda
    }

    /// All MLP parameter ids: mu, sigma, eta; each hidden, hidden bias, out, out bias.
    pub fn mlp_params(&self) -> Vec<ParamId> {
        [&self.mu, &self.sigma, &self.eta].iter().flat_map(|m| m.ids()).collect()
    }

    pub fn curve<'t>(&self, tape: &'t Tape, store: &ParamStore, h: Var<'t>) -> (Var<'t>, Var<'t>, Var<'t>) {
        let mu = self.mu.forward(tape, store, h);
        let sigma = self.sigma.forward(tape, store, h).softplus().offset(SIGMA_FLOOR);
        let eta = self.eta.forward(tape, store, h);
        (mu, sigma, eta)
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, h_g: Var<'t>, h_c: Var<'t>) -> CurveOutput<'t> {
        let lambda = tape.param(store, self.lambda);
        let a_g = h_g.matmul(lambda).sub(h_c.matmul(lambda)).sigmoid();
        let h = h_g.mul_col(a_g).add(h_c.mul_col(a_g.one_minus()));
        let (mu, sigma, eta) = self.curve(tape, store, h);
        let inv_sigma = sigma.recip();
        let cols: Vec<Var<'t>> = (1..=self.cfg.horizon)
            .map(|t| {
                let x = mu.scale(-1.0).offset((t as f64).ln()).mul(inv_sigma);
                eta.mul(x.normal_cdf()).exp_m1().scale(self.cfg.alpha_scale)
            })
            .collect();
        CurveOutput {
            trend_weight: a_g,
            mu,
            sigma,
            eta,
            series: concat_cols(&cols),
        }
    }

    /// Forward-only curve parameters for one fused vector.
    pub fn curve_params(&self, store: &ParamStore, h: &[f64]) -> CurveParams {
        let tape = Tape::new();
        let (mu, sigma, eta) = self.curve(&tape, store, tape.constant(Tensor::row_vector(h.to_vec())));
        CurveParams {
            mu: mu.value().scalar(),
            sigma: sigma.value().scalar(),
            eta: eta.value().scalar(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fuse_equal_points_and_zero_lambda() {
        let (h, _) = fuse(&[1.0, 2.0], &[1.0, 2.0], &[5.0, -3.0]).unwrap();
        assert_eq!(h, vec![1.0, 2.0]);
        let (_, a) = fuse(&[1.0, 0.0], &[0.0, 7.0], &[0.0, 0.0]).unwrap();
        assert_eq!(a, 0.5);
    }

    #[test]
    fn zeroed_mlps_give_closed_form_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let head = CurveHead::new(4, GeneratorConfig::default(), &mut store, &mut rng).unwrap();
        for id in head.mlp_params() {
            let (r, c) = store.value(id).shape();
            *store.value_mut(id) = Tensor::zeros(r, c);
        }
        let p = head.curve_params(&store, &[0.3, -1.0, 2.0, 0.1]);
        assert_eq!(p.mu, 0.0);
        assert_eq!(p.eta, 0.0);
        assert!((p.sigma - (2f64.ln() + 1e-3)).abs() < 1e-15);
        assert_eq!(predict_series(&p, &GeneratorConfig::default()), vec![0.0; 5]);
    }

    #[test]
    fn unit_params_at_year_one() {
        let p = CurveParams { mu: 0.0, sigma: 1.0, eta: 1.0 };
        let c = cumulative_citations(&p, 1.0, 1).unwrap();
        assert!((c - (0.5f64.exp() - 1.0)).abs() < 1e-12);
        assert!(matches!(cumulative_citations(&p, 1.0, 0), Err(Error::YearOutOfRange(0))));
    }

    #[test]
    fn tape_series_matches_plain_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let cfg = GeneratorConfig::default();
        let head = CurveHead::new(3, cfg.clone(), &mut store, &mut rng).unwrap();
        let hg = vec![0.2, -0.5, 0.9];
        let hc = vec![-0.1, 0.4, 0.3];
        let tape = Tape::new();
        let out = head.forward(
            &tape,
            &store,
            tape.constant(Tensor::row_vector(hg.clone())),
            tape.constant(Tensor::row_vector(hc.clone())),
        );
        let (h, _) = fuse(&hg, &hc, store.value(head.lambda()).data()).unwrap();
        let expect = predict_series(&head.curve_params(&store, &h), &cfg);
        for (a, b) in out.series.value().data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
