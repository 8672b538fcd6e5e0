//! Conditional masked autoregressive flow `q(θ | x)`.
//!
//! Density direction (θ → z), per transform on its (permuted) input `v`:
//! `z_i = (v_i − μ_i(v_{<i}, x)) · exp(−α_i(v_{<i}, x))`, contributing
//! `−Σ α_i` to the log-determinant. Odd transforms see their input in
//! reversed coordinate order. θ and x are standardised first; the θ scaling
//! enters the density as `−Σ log sd_θ`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::made::{MadeNet, MadeOutput};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::stats::SummaryStats;
use crate::theta::ThetaVector;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowArchitecture {
    pub p: usize,
    pub context_dim: usize,
    pub num_transforms: usize,
    pub hidden_units: usize,
    pub hidden_layers: usize,
}

impl FlowArchitecture {
    /// 5 transforms of 2×50 hidden units.
    pub fn with_defaults(p: usize, context_dim: usize) -> Self {
        FlowArchitecture {
            p,
            context_dim,
            num_transforms: 5,
            hidden_units: 50,
            hidden_layers: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.num_transforms == 0 || self.hidden_units == 0 || self.hidden_layers == 0 {
            return Err(Error::invalid(format!("degenerate flow architecture {self:?}")));
        }
        Ok(())
    }
}

/// Per-coordinate affine maps to zero mean, unit sd.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardizer {
    pub theta_mean: Vec<f64>,
    pub theta_sd: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
}

impl Standardizer {
    pub fn identity(p: usize, context_dim: usize) -> Self {
        Standardizer {
            theta_mean: vec![0.0; p],
            theta_sd: vec![1.0; p],
            x_mean: vec![0.0; context_dim],
            x_sd: vec![1.0; context_dim],
        }
    }

    /// Fits on paired samples. Near-constant coordinates keep sd 1.
    pub fn fit<'a>(
        thetas: impl IntoIterator<Item = &'a [f64]>,
        xs: impl IntoIterator<Item = &'a [f64]>,
    ) -> Result<Self> {
        let (theta_mean, theta_sd) = moments(thetas)?;
        let (x_mean, x_sd) = moments(xs)?;
        Ok(Standardizer {
            theta_mean,
            theta_sd,
            x_mean,
            x_sd,
        })
    }

    fn log_theta_scale(&self) -> f64 {
        self.theta_sd.iter().map(|s| s.ln()).sum()
    }
}

fn moments<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows: Vec<&[f64]> = rows.into_iter().collect();
    let first = rows.first().ok_or_else(|| Error::Empty("standardizer fit".into()))?;
    let d = first.len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in &rows {
        Error::check_dim(d, r.len())?;
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v / n;
        }
    }
    let sd = (0..d)
        .map(|k| {
            let var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 1e-12 * mean[k].abs().max(1.0) {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Ok((mean, sd))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MafModel {
    pub(crate) arch: FlowArchitecture,
    pub(crate) transforms: Vec<MadeNet>,
    pub(crate) standardizer: Standardizer,
    pub(crate) rng_seed: u64,
}

/// Intermediate values of a density-direction pass.
struct FlowTape {
    /// Per transform: MADE tape, output `z`, `exp(−α)`.
    layers: Vec<(super::made::MadeTape, Array2<f64>, Array2<f64>)>,
    z: Array2<f64>,
    log_det: Array1<f64>,
}

impl MafModel {
    /// Masks and initial weights are a pure function of `(arch, seed)`.
    pub fn new(arch: FlowArchitecture, standardizer: Standardizer, seed: u64) -> Result<Self> {
        arch.validate()?;
        Error::check_dim(arch.p, standardizer.theta_mean.len())?;
        Error::check_dim(arch.p, standardizer.theta_sd.len())?;
        Error::check_dim(arch.context_dim, standardizer.x_mean.len())?;
        Error::check_dim(arch.context_dim, standardizer.x_sd.len())?;
        let all = || {
            standardizer
                .theta_mean
                .iter()
                .chain(&standardizer.theta_sd)
                .chain(&standardizer.x_mean)
                .chain(&standardizer.x_sd)
        };
        if all().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("standardizer".into()));
        }
        if standardizer.theta_sd.iter().chain(&standardizer.x_sd).any(|&s| s <= 0.0) {
            return Err(Error::invalid("standardizer sd must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let transforms = (0..arch.num_transforms)
            .map(|_| MadeNet::new(arch.p, arch.context_dim, arch.hidden_units, arch.hidden_layers, &mut rng))
            .collect();
        Ok(MafModel {
            arch,
            transforms,
            standardizer,
            rng_seed: seed,
        })
    }

    pub fn architecture(&self) -> &FlowArchitecture {
        &self.arch
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn transforms(&self) -> &[MadeNet] {
        &self.transforms
    }

    pub fn p(&self) -> usize {
        self.arch.p
    }

    pub fn context_dim(&self) -> usize {
        self.arch.context_dim
    }

    pub fn param_count(&self) -> usize {
        self.transforms.iter().map(MadeNet::param_count).sum()
    }

    /// All weights and biases, transform by transform, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for t in &self.transforms {
            t.write_params(&mut out);
        }
        out
    }

    /// Inverse of [`params`](Self::params); masked entries are forced to zero.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        Error::check_dim(self.param_count(), params.len())?;
        let mut off = 0;
        for t in &mut self.transforms {
            off += t.read_params(&params[off..]);
        }
        Ok(())
    }

    fn reversed(t: usize) -> bool {
        t % 2 == 1
    }

    fn permute(v: &Array2<f64>, reverse: bool) -> Array2<f64> {
        if reverse {
            v.slice(s![.., ..;-1]).to_owned()
        } else {
            v.clone()
        }
    }

    fn standardize_theta(&self, theta: ArrayView2<f64>) -> Array2<f64> {
        let st = &self.standardizer;
        let mut u = theta.to_owned();
        for (k, mut col) in u.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - st.theta_mean[k]) / st.theta_sd[k]);
        }
        u
    }

    fn standardize_x(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let st = &self.standardizer;
        let mut c = x.to_owned();
        for (k, mut col) in c.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - st.x_mean[k]) / st.x_sd[k]);
        }
        c
    }

    fn check_batch(&self, theta: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<()> {
        Error::check_dim(self.arch.p, theta.ncols())?;
        Error::check_dim(self.arch.context_dim, x.ncols())?;
        Error::check_dim(theta.nrows(), x.nrows())?;
        if theta.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow input".into()));
        }
        Ok(())
    }

    fn made_input(v: &Array2<f64>, ctx: &Array2<f64>) -> Array2<f64> {
        ndarray::concatenate(Axis(1), &[v.view(), ctx.view()]).expect("row counts agree")
    }

    fn run_forward(&self, theta: ArrayView2<f64>, x: ArrayView2<f64>, keep_tape: bool) -> FlowTape {
        let ctx = self.standardize_x(x);
        let mut u = self.standardize_theta(theta);
        let mut log_det = Array1::zeros(u.nrows());
        let mut layers = Vec::new();
        for (t, made) in self.transforms.iter().enumerate() {
            let v = Self::permute(&u, Self::reversed(t));
            let input = Self::made_input(&v, &ctx);
            let (out, tape) = if keep_tape {
                let (o, tp) = made.eval_taped(input);
                (o, Some(tp))
            } else {
                (made.eval(input.view()), None)
            };
            let inv_scale = out.alpha.mapv(|a| (-a).exp());
            let z = (&v - &out.mu) * &inv_scale;
            log_det -= &out.alpha.sum_axis(Axis(1));
            if let Some(tp) = tape {
                layers.push((tp, z.clone(), inv_scale));
            }
            u = z;
        }
        FlowTape { layers, z: u, log_det }
    }

    /// Base-space images and flow log-determinants (standardised θ units;
    /// the standardiser term is not included).
    pub fn forward_batch(&self, theta: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        self.check_batch(theta, x)?;
        let tape = self.run_forward(theta, x, false);
        Ok((tape.z, tape.log_det))
    }

    pub fn forward(&self, theta: &[f64], x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (z, ld) = self.forward_batch(row(theta).view(), row(x).view())?;
        Ok((z.row(0).to_vec(), ld[0]))
    }

    fn log_prob_from(&self, z: &Array2<f64>, log_det: &Array1<f64>) -> Array1<f64> {
        let p = self.arch.p as f64;
        let base = z.map_axis(Axis(1), |r| -0.5 * r.dot(&r) - p * HALF_LN_2PI);
        base + log_det - self.standardizer.log_theta_scale()
    }

    /// `log q(θ | x)` in raw θ units, one value per row.
    pub fn log_prob_batch(&self, theta: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let (z, ld) = self.forward_batch(theta, x)?;
        Ok(self.log_prob_from(&z, &ld))
    }

    pub fn log_prob(&self, theta: &ThetaVector, x: &SummaryStats) -> Result<f64> {
        Ok(self.log_prob_batch(row(theta).view(), row(x).view())?[0])
    }

    /// Log-probabilities plus `Σ_k w_k ∇ log q(θ_k | x_k)`.
    pub fn weighted_log_prob_grad(
        &self,
        theta: ArrayView2<f64>,
        x: ArrayView2<f64>,
        weights: &[f64],
    ) -> Result<(Array1<f64>, Vec<f64>)> {
        self.check_batch(theta, x)?;
        Error::check_dim(theta.nrows(), weights.len())?;
        let tape = self.run_forward(theta, x, true);
        let lp = self.log_prob_from(&tape.z, &tape.log_det);
        let w = Array1::from(weights.to_vec()).insert_axis(Axis(1));

        let mut grad = vec![0.0; self.param_count()];
        let offsets: Vec<usize> = self
            .transforms
            .iter()
            .scan(0, |off, t| {
                let here = *off;
                *off += t.param_count();
                Some(here)
            })
            .collect();

        // ∂/∂z of w·(−½|z|²)
        let mut d_z = -(&tape.z * &w);
        for t in (0..self.transforms.len()).rev() {
            let made = &self.transforms[t];
            let (made_tape, z_t, inv_scale) = &tape.layers[t];
            let d_v_direct = &d_z * inv_scale;
            let d_mu = -&d_v_direct;
            // z depends on α through exp(−α); log-det contributes −w per α.
            let d_alpha = -(&d_z * z_t) - &w;
            let slice = &mut grad[offsets[t]..offsets[t] + made.param_count()];
            let d_v_made = made.backward(made_tape, &d_mu, &d_alpha, slice);
            let d_v = d_v_direct + d_v_made;
            d_z = Self::permute(&d_v, Self::reversed(t));
        }
        Ok((lp, grad))
    }

    /// Inverse pass from base samples `z` to raw θ, one coordinate at a time.
    pub fn inverse_batch(&self, z: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(z, x)?;
        let p = self.arch.p;
        let ctx = self.standardize_x(x);
        let shared = ctx.rows().into_iter().all(|r| r == ctx.row(0));
        let mut out = z.to_owned();
        for (t, made) in self.transforms.iter().enumerate().rev() {
            let mut input = Self::made_input(&Array2::zeros(out.dim()), &ctx);
            for d in 0..p {
                // The first conditioner sees only the context, so one row suffices when it is shared.
                let o = if d == 0 && shared {
                    let o = made.eval(input.slice(s![..1, ..]));
                    MadeOutput {
                        mu: o.mu.broadcast(out.dim()).expect("broadcast row").to_owned(),
                        alpha: o.alpha.broadcast(out.dim()).expect("broadcast row").to_owned(),
                    }
                } else {
                    made.eval(input.view())
                };
                let col = &out.column(d) * &o.alpha.column(d).mapv(f64::exp) + o.mu.column(d);
                input.column_mut(d).assign(&col);
            }
            let v = input.slice(s![.., ..p]).to_owned();
            out = Self::permute(&v, Self::reversed(t));
        }
        let st = &self.standardizer;
        for (k, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|u| u * st.theta_sd[k] + st.theta_mean[k]);
        }
        Ok(out)
    }

    /// `count` draws from `q(· | x)`.
    pub fn sample<R: Rng + ?Sized>(&self, x: &SummaryStats, count: usize, rng: &mut R) -> Result<Vec<ThetaVector>> {
        let arr = self.sample_array(x, count, rng)?;
        arr.rows()
            .into_iter()
            .map(|r| ThetaVector::new(r.to_vec()))
            .collect()
    }

    pub fn sample_array<R: Rng + ?Sized>(&self, x: &SummaryStats, count: usize, rng: &mut R) -> Result<Array2<f64>> {
        if count == 0 {
            return Err(Error::invalid("sample count must be >= 1"));
        }
        Error::check_dim(self.arch.context_dim, x.len())?;
        let z = Array2::from_shape_fn((count, self.arch.p), |_| rng.sample(StandardNormal));
        let xs = row(x).broadcast((count, x.len())).expect("broadcast row").to_owned();
        self.inverse_batch(z.view(), xs.view())
    }
}

pub(crate) fn row(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row shape")
}

/// Stacks equal-length rows into a matrix.
pub fn stack_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>, width: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.into_iter().flat_map(|r| r.iter().copied()).collect();
    let n = flat.len() / width.max(1);
    Array2::from_shape_vec((n, width), flat).expect("rows have equal width")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::made::ALPHA_BOUND;
    use approx::assert_abs_diff_eq;

    fn tiny(p: usize, c: usize, seed: u64) -> MafModel {
        let arch = FlowArchitecture {
            p,
            context_dim: c,
            num_transforms: 3,
            hidden_units: 8,
            hidden_layers: 2,
        };
        MafModel::new(arch, Standardizer::identity(p, c), seed).unwrap()
    }

    #[test]
    fn zero_output_layers_give_identity() {
        let m = tiny(3, 2, 1);
        let (z, ld) = m.forward(&[0.3, -1.2, 2.0], &[1.0, 4.0]).unwrap();
        assert_eq!(ld, 0.0);
        // Three transforms: identity, reverse, identity ⇒ reversed order.
        assert_eq!(z, vec![2.0, -1.2, 0.3]);
    }

    #[test]
    fn constant_affine_transform() {
        let arch = FlowArchitecture {
            p: 1,
            context_dim: 1,
            num_transforms: 1,
            hidden_units: 4,
            hidden_layers: 1,
        };
        let mut m = MafModel::new(arch, Standardizer::identity(1, 1), 0).unwrap();
        let last = m.transforms[0].biases.len() - 1;
        m.transforms[0].biases[last][0] = 2.0;
        m.transforms[0].biases[last][1] = ALPHA_BOUND * (3f64.ln() / ALPHA_BOUND).atanh();
        let (z, ld) = m.forward(&[5.0], &[0.7]).unwrap();
        assert_abs_diff_eq!(z[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ld, -3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn identity_log_prob_at_origin() {
        let m = tiny(3, 3, 2);
        let lp = m
            .log_prob(&ThetaVector::zeros(3), &SummaryStats::new(vec![1.0, 2.0, 3.0]))
            .unwrap();
        assert_abs_diff_eq!(lp, -2.756815599614018, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_finite_input() {
        let m = tiny(2, 1, 0);
        assert!(m.forward(&[f64::NAN, 0.0], &[0.0]).is_err());
        assert!(m.forward(&[0.0, 0.0], &[f64::INFINITY]).is_err());
        assert!(m.forward(&[0.0], &[0.0]).is_err());
    }

    #[test]
    fn params_roundtrip() {
        let m = tiny(2, 2, 5);
        let mut other = tiny(2, 2, 5);
        let mut params = m.params();
        params.iter_mut().for_each(|v| *v += 0.5);
        other.set_params(&params).unwrap();
        // masked weights stay zero
        for t in &other.transforms {
            for (w, mk) in t.weights.iter().zip(&t.masks) {
                assert!(w.iter().zip(mk.iter()).all(|(v, k)| *k == 1.0 || *v == 0.0));
            }
        }
        assert!(other.set_params(&params[1..]).is_err());
    }

    #[test]
    fn standardizer_guards_constant_columns() {
        let thetas = [[1.0, 2.0], [3.0, 2.0]];
        let xs = [[5.0], [5.0]];
        let st = Standardizer::fit(thetas.iter().map(|r| &r[..]), xs.iter().map(|r| &r[..])).unwrap();
        assert_eq!(st.theta_mean, vec![2.0, 2.0]);
        assert_eq!(st.theta_sd, vec![1.0, 1.0]);
        assert_eq!(st.x_sd, vec![1.0]);
    }
}
