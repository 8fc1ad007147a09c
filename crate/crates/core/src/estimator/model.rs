use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{SequenceInput, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::geometry::{EulerAngles, Pose6};

pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_DIM: usize = 16;
const ALPHA_MIN: f64 = 1e-3;
const ALPHA_MAX: f64 = 1.0 - 1e-3;

/// Named blocks of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    We,
    Be,
    Wa,
    Wphi,
    Wh,
    Bh,
    Wo,
    Bo,
    Alpha,
}

impl Block {
    pub const ALL: [Block; 9] = [
        Block::We,
        Block::Be,
        Block::Wa,
        Block::Wphi,
        Block::Wh,
        Block::Bh,
        Block::Wo,
        Block::Bo,
        Block::Alpha,
    ];
}

/// Offsets of every block inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub dim: usize,
    offsets: [usize; 10],
}

impl Layout {
    pub fn new(dim: usize) -> Self {
        let d = dim;
        let sizes = [d * FEATURE_DIM, d, d * 3, d * 3, d * 3 * d, d, 6 * d, 6, 1];
        let mut offsets = [0; 10];
        for (i, s) in sizes.iter().enumerate() {
            offsets[i + 1] = offsets[i] + s;
        }
        Self { dim, offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets[9]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self, b: Block) -> std::ops::Range<usize> {
        let i = Block::ALL.iter().position(|&x| x == b).unwrap_or(0);
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Block and in-block index of a flat parameter position.
    pub fn locate(&self, flat: usize) -> (Block, usize) {
        for (i, b) in Block::ALL.iter().enumerate() {
            if flat < self.offsets[i + 1] {
                return (*b, flat - self.offsets[i]);
            }
        }
        (Block::Alpha, 0)
    }
}

/// Fixed (untrained) input scalings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputScale {
    /// Multiplies accelerations (mm/frame^2).
    pub accel: f64,
    /// Multiplies relative Euler angles (deg).
    pub euler: f64,
}

impl Default for InputScale {
    fn default() -> Self {
        Self {
            accel: 100.0,
            euler: 1.0,
        }
    }
}

/// Leaky recurrent fusion of image, acceleration and orientation cues.
///
/// Per pair `i`: `e_i = We f_i + be`, `v_0 = e_0`, `v_i = e_{i-1} + Wa A_i`,
/// `x_i = [e_i; v_i; Wphi phi_i]`, `h_i = (1 - a) h_{i-1} + a tanh(Wh x_i + bh)`,
/// `theta_i = Wo h_i + bo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub version: u32,
    pub dim: usize,
    pub seed: u64,
    pub scale: InputScale,
    pub params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) e: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    accel: Vec<[f64; 3]>,
    features: Vec<[f64; FEATURE_DIM]>,
    euler: Vec<[f64; 3]>,
}

impl ForwardCache {
    /// Image embeddings `e_i`.
    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.e
    }

    /// Recurrent states `h_i`.
    pub fn states(&self) -> &[Vec<f64>] {
        &self.h
    }
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        out[r] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, g: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let gr = g[r];
        if gr == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += a * gr;
        }
    }
}

fn outer_acc(g: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, gr) in g.iter().enumerate() {
        if *gr == 0.0 {
            continue;
        }
        for (o, xv) in out[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *o += gr * xv;
        }
    }
}

impl FusionModel {
    /// Seeded uniform `[-0.1, 0.1]` weights, zero biases, leak 0.5.
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("model dimension must be positive".into()));
        }
        let layout = Layout::new(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-0.1..=0.1)).collect();
        for b in [Block::Be, Block::Bh, Block::Bo] {
            params[layout.range(b)].fill(0.0);
        }
        params[layout.range(Block::Alpha)][0] = 0.5;
        Ok(Self {
            version: MODEL_VERSION,
            dim,
            seed,
            scale: InputScale::default(),
            params,
        })
    }

    /// All parameters zero except the leak.
    pub fn zeros(dim: usize) -> Self {
        let layout = Layout::new(dim);
        let mut params = vec![0.0; layout.len()];
        params[layout.range(Block::Alpha)][0] = 0.5;
        Self {
            version: MODEL_VERSION,
            dim,
            seed: 0,
            scale: InputScale::default(),
            params,
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.dim)
    }

    pub fn block(&self, b: Block) -> &[f64] {
        &self.params[self.layout().range(b)]
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [f64] {
        let r = self.layout().range(b);
        &mut self.params[r]
    }

    pub fn alpha(&self) -> f64 {
        self.block(Block::Alpha)[0].clamp(ALPHA_MIN, ALPHA_MAX)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {}",
                self.version
            )));
        }
        if self.params.len() != self.layout().len() {
            return Err(Error::LengthMismatch {
                what: "model parameters",
                expected: self.layout().len(),
                actual: self.params.len(),
            });
        }
        if let Some(i) = self.params.iter().position(|v| !v.is_finite()) {
            let (b, k) = self.layout().locate(i);
            return Err(Error::NonFinite(format!("model parameter {b:?}[{k}]")));
        }
        Ok(())
    }

    pub fn forward(&self, input: &SequenceInput) -> Result<Vec<Pose6>> {
        Ok(self.forward_cached(input)?.0)
    }

    pub fn forward_cached(&self, input: &SequenceInput) -> Result<(Vec<Pose6>, ForwardCache)> {
        input.validate()?;
        let d = self.dim;
        let l = self.layout();
        let p = &self.params;
        let (we, be) = (&p[l.range(Block::We)], &p[l.range(Block::Be)]);
        let wa = &p[l.range(Block::Wa)];
        let wphi = &p[l.range(Block::Wphi)];
        let (wh, bh) = (&p[l.range(Block::Wh)], &p[l.range(Block::Bh)]);
        let (wo, bo) = (&p[l.range(Block::Wo)], &p[l.range(Block::Bo)]);
        let alpha = self.alpha();
        let m = input.len();

        let accel: Vec<[f64; 3]> = input
            .accel
            .iter()
            .map(|a: &Vector3<f64>| {
                [
                    a.x * self.scale.accel,
                    a.y * self.scale.accel,
                    a.z * self.scale.accel,
                ]
            })
            .collect();
        let euler: Vec<[f64; 3]> = input
            .euler
            .iter()
            .map(|e: &EulerAngles| e.to_array().map(|v| v * self.scale.euler))
            .collect();

        let e: Vec<Vec<f64>> = input
            .features
            .iter()
            .map(|f| {
                let mut out = be.to_vec();
                matvec(we, d, FEATURE_DIM, f, &mut out);
                out
            })
            .collect();

        let mut xs = Vec::with_capacity(m);
        let mut ss = Vec::with_capacity(m);
        let mut hs: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut poses = Vec::with_capacity(m);
        let mut h_prev = vec![0.0; d];
        for i in 0..m {
            let mut x = vec![0.0; 3 * d];
            x[..d].copy_from_slice(&e[i]);
            if i == 0 {
                x[d..2 * d].copy_from_slice(&e[0]);
            } else {
                x[d..2 * d].copy_from_slice(&e[i - 1]);
                matvec(wa, d, 3, &accel[i - 1], &mut x[d..2 * d]);
            }
            matvec(wphi, d, 3, &euler[i], &mut x[2 * d..]);
            let mut z = bh.to_vec();
            matvec(wh, d, 3 * d, &x, &mut z);
            let s: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
            let h: Vec<f64> = h_prev
                .iter()
                .zip(&s)
                .map(|(hp, sv)| (1.0 - alpha) * hp + alpha * sv)
                .collect();
            let mut out = bo.to_vec();
            matvec(wo, 6, d, &h, &mut out);
            let pose = Pose6::from_array([out[0], out[1], out[2], out[3], out[4], out[5]]);
            if !pose.is_finite() {
                return Err(Error::NonFinite(format!("forward output at pair {i}")));
            }
            poses.push(pose);
            xs.push(x);
            ss.push(s);
            h_prev = h.clone();
            hs.push(h);
        }
        Ok((
            poses,
            ForwardCache {
                e,
                x: xs,
                s: ss,
                h: hs,
                accel,
                features: input.features.clone(),
                euler,
            },
        ))
    }

    /// Accumulates into `grad` the parameter gradient given the gradient of a
    /// scalar loss with respect to every output pose.
    pub fn backward(&self, cache: &ForwardCache, g_out: &[[f64; 6]], grad: &mut [f64]) -> Result<()> {
        let d = self.dim;
        let l = self.layout();
        let m = cache.h.len();
        if g_out.len() != m {
            return Err(Error::LengthMismatch {
                what: "output gradients",
                expected: m,
                actual: g_out.len(),
            });
        }
        if grad.len() != l.len() {
            return Err(Error::LengthMismatch {
                what: "gradient buffer",
                expected: l.len(),
                actual: grad.len(),
            });
        }
        let p = &self.params;
        let wo = &p[l.range(Block::Wo)];
        let wh = &p[l.range(Block::Wh)];
        let raw_alpha = p[l.range(Block::Alpha)][0];
        let alpha = self.alpha();

        let mut g_we = vec![0.0; d * FEATURE_DIM];
        let mut g_be = vec![0.0; d];
        let mut g_wa = vec![0.0; d * 3];
        let mut g_wphi = vec![0.0; d * 3];
        let mut g_wh = vec![0.0; d * 3 * d];
        let mut g_bh = vec![0.0; d];
        let mut g_wo = vec![0.0; 6 * d];
        let mut g_bo = [0.0; 6];
        let mut g_alpha = 0.0;
        let mut g_e = vec![vec![0.0; d]; m];
        let mut carry = vec![0.0; d];
        let zero = vec![0.0; d];

        for i in (0..m).rev() {
            let go = &g_out[i];
            for k in 0..6 {
                g_bo[k] += go[k];
            }
            outer_acc(go, &cache.h[i], &mut g_wo);
            let mut gh = carry.clone();
            matvec_t_acc(wo, 6, d, go, &mut gh);
            let h_prev = if i == 0 { &zero } else { &cache.h[i - 1] };
            let s = &cache.s[i];
            let mut gz = vec![0.0; d];
            for k in 0..d {
                g_alpha += gh[k] * (s[k] - h_prev[k]);
                carry[k] = (1.0 - alpha) * gh[k];
                gz[k] = alpha * gh[k] * (1.0 - s[k] * s[k]);
            }
            for k in 0..d {
                g_bh[k] += gz[k];
            }
            outer_acc(&gz, &cache.x[i], &mut g_wh);
            let mut gx = vec![0.0; 3 * d];
            matvec_t_acc(wh, d, 3 * d, &gz, &mut gx);
            let (ge_i, rest) = gx.split_at(d);
            let (gv, gu) = rest.split_at(d);
            for k in 0..d {
                g_e[i][k] += ge_i[k];
            }
            outer_acc(gu, &cache.euler[i], &mut g_wphi);
            if i == 0 {
                for k in 0..d {
                    g_e[0][k] += gv[k];
                }
            } else {
                for k in 0..d {
                    g_e[i - 1][k] += gv[k];
                }
                outer_acc(gv, &cache.accel[i - 1], &mut g_wa);
            }
        }
        for (ge, feat) in g_e.iter().zip(&cache.features).take(m) {
            for (b, g) in g_be.iter_mut().zip(ge) {
                *b += g;
            }
            outer_acc(ge, feat, &mut g_we);
        }
        if !(ALPHA_MIN..=ALPHA_MAX).contains(&raw_alpha) {
            g_alpha = 0.0;
        }
        let parts: [(Block, &[f64]); 9] = [
            (Block::We, &g_we),
            (Block::Be, &g_be),
            (Block::Wa, &g_wa),
            (Block::Wphi, &g_wphi),
            (Block::Wh, &g_wh),
            (Block::Bh, &g_bh),
            (Block::Wo, &g_wo),
            (Block::Bo, &g_bo),
            (Block::Alpha, std::slice::from_ref(&g_alpha)),
        ];
        for (b, g) in parts {
            for (dst, src) in grad[l.range(b)].iter_mut().zip(g) {
                *dst += src;
            }
        }
        if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
            let (b, k) = l.locate(i);
            return Err(Error::NonFinite(format!("gradient of {b:?}[{k}]")));
        }
        Ok(())
    }

    /// Velocity features `v_i` (exposed for inspection and testing).
    pub fn velocity_features(
        &self,
        embeddings: &[Vec<f64>],
        accel: &[Vector3<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        velocity_features(
            self.block(Block::Wa),
            self.dim,
            embeddings,
            accel,
            self.scale.accel,
        )
    }
}

/// `v_0 = e_0`, `v_i = e_{i-1} + Wa (s A_i)` for `i >= 1`, with `Wa` a row-major
/// `dim x 3` matrix.
pub fn velocity_features(
    wa: &[f64],
    dim: usize,
    embeddings: &[Vec<f64>],
    accel: &[Vector3<f64>],
    accel_scale: f64,
) -> Result<Vec<Vec<f64>>> {
    if embeddings.is_empty() {
        return Err(Error::InvalidInput("no embeddings".into()));
    }
    if accel.len() + 1 != embeddings.len() {
        return Err(Error::LengthMismatch {
            what: "accelerations",
            expected: embeddings.len() - 1,
            actual: accel.len(),
        });
    }
    if wa.len() != dim * 3 || embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::InvalidInput("embedding dimension mismatch".into()));
    }
    let mut out = vec![embeddings[0].clone()];
    for i in 1..embeddings.len() {
        let mut v = embeddings[i - 1].clone();
        let a = accel[i - 1] * accel_scale;
        matvec(wa, dim, 3, &[a.x, a.y, a.z], &mut v);
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_input(m: usize, seed: u64) -> SequenceInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SequenceInput {
            features: (0..m)
                .map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0)))
                .collect(),
            accel: (0..m - 1)
                .map(|_| Vector3::from_fn(|_, _| rng.random_range(-0.01..0.01)))
                .collect(),
            euler: (0..m)
                .map(|_| {
                    EulerAngles::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        }
    }

    fn mat(m: &FusionModel, b: Block, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, m.block(b))
    }

    /// Step-by-step recurrence written against dense matrices.
    fn oracle(m: &FusionModel, input: &SequenceInput) -> Vec<[f64; 6]> {
        let d = m.dim;
        let we = mat(m, Block::We, d, FEATURE_DIM);
        let be = DVector::from_column_slice(m.block(Block::Be));
        let wa = mat(m, Block::Wa, d, 3);
        let wphi = mat(m, Block::Wphi, d, 3);
        let wh = mat(m, Block::Wh, d, 3 * d);
        let bh = DVector::from_column_slice(m.block(Block::Bh));
        let wo = mat(m, Block::Wo, 6, d);
        let bo = DVector::from_column_slice(m.block(Block::Bo));
        let a = m.alpha();
        let e: Vec<DVector<f64>> = input
            .features
            .iter()
            .map(|f| &we * DVector::from_column_slice(f) + &be)
            .collect();
        let mut h = DVector::zeros(d);
        let mut out = Vec::new();
        for i in 0..input.len() {
            let v = if i == 0 {
                e[0].clone()
            } else {
                let acc = input.accel[i - 1] * m.scale.accel;
                &e[i - 1] + &wa * DVector::from_column_slice(acc.as_slice())
            };
            let phi = DVector::from_column_slice(&input.euler[i].to_array().map(|x| x * m.scale.euler));
            let u = &wphi * phi;
            let x = DVector::from_iterator(3 * d, e[i].iter().chain(v.iter()).chain(u.iter()).copied());
            let s = (&wh * x + &bh).map(|z| z.tanh());
            h = &h * (1.0 - a) + s * a;
            let o = &wo * &h + &bo;
            out.push(std::array::from_fn(|k| o[k]));
        }
        out
    }

    #[test]
    fn forward_matches_oracle() {
        let mut m = FusionModel::new(5, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for b in [Block::Be, Block::Bh, Block::Bo] {
            for v in m.block_mut(b) {
                *v = rng.random_range(-0.2..0.2);
            }
        }
        let input = random_input(9, 3);
        let got = m.forward(&input).unwrap();
        let want = oracle(&m, &input);
        for (g, w) in got.iter().zip(&want) {
            for (a, b) in g.to_array().iter().zip(w) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = FusionModel::zeros(4);
        let out = m.forward(&random_input(6, 1)).unwrap();
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|p| p.to_array() == [0.0; 6]));
    }

    #[test]
    fn unit_leak_is_nearly_memoryless() {
        let mut m = FusionModel::new(4, 5).unwrap();
        m.block_mut(Block::Alpha)[0] = 1.0;
        assert_eq!(m.alpha(), ALPHA_MAX);
        let (_, cache) = m.forward_cached(&random_input(5, 9)).unwrap();
        for i in 0..5 {
            for k in 0..4 {
                // h_i = 1e-3 h_{i-1} + (1 - 1e-3) s_i with |h|, |s| <= 1
                assert!((cache.h[i][k] - cache.s[i][k]).abs() <= 2e-3 + 1e-15);
            }
        }
    }

    #[test]
    fn velocity_features_recurrence_and_linearity() {
        let m = FusionModel::new(3, 4).unwrap();
        let input = random_input(5, 6);
        let (_, cache) = m.forward_cached(&input).unwrap();
        let e = cache.embeddings();
        let v = m.velocity_features(e, &input.accel).unwrap();
        assert_eq!(v[0], e[0]);
        let zero: Vec<Vector3<f64>> = vec![Vector3::zeros(); 4];
        let v0 = m.velocity_features(e, &zero).unwrap();
        for i in 1..5 {
            assert_eq!(v0[i], e[i - 1]);
        }
        let doubled: Vec<Vector3<f64>> = input.accel.iter().map(|a| a * 2.0).collect();
        let v2 = m.velocity_features(e, &doubled).unwrap();
        for i in 1..5 {
            for k in 0..3 {
                let d1 = v[i][k] - e[i - 1][k];
                let d2 = v2[i][k] - e[i - 1][k];
                assert!((d2 - 2.0 * d1).abs() < 1e-15);
            }
        }
        let single = m.velocity_features(&e[..1], &[]).unwrap();
        assert_eq!(single, vec![e[0].clone()]);
        assert!(m.velocity_features(e, &input.accel[..2]).is_err());
    }

    fn weighted_sum(m: &FusionModel, input: &SequenceInput, w: &[[f64; 6]]) -> f64 {
        m.forward(input)
            .unwrap()
            .iter()
            .zip(w)
            .map(|(p, wi)| p.to_array().iter().zip(wi).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut m = FusionModel::new(4, 21).unwrap();
        m.block_mut(Block::Alpha)[0] = 0.37;
        let input = random_input(6, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w: Vec<[f64; 6]> = (0..6)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect();
        let (_, cache) = m.forward_cached(&input).unwrap();
        let mut g = vec![0.0; m.params.len()];
        m.backward(&cache, &w, &mut g).unwrap();
        let h = 1e-5;
        for (j, &gj) in g.iter().enumerate() {
            let mut p = m.clone();
            p.params[j] += h;
            let up = weighted_sum(&p, &input, &w);
            p.params[j] -= 2.0 * h;
            let dn = weighted_sum(&p, &input, &w);
            let fd = (up - dn) / (2.0 * h);
            let err = (fd - gj).abs() / fd.abs().max(gj.abs()).max(1e-6);
            assert!(
                err < 1e-4,
                "param {:?}: fd {fd} analytic {gj}",
                m.layout().locate(j)
            );
        }
    }

    #[test]
    fn backward_accumulates_and_scales() {
        let m = FusionModel::new(3, 2).unwrap();
        let input = random_input(4, 1);
        let (_, cache) = m.forward_cached(&input).unwrap();
        let w = vec![[1.0, -0.5, 0.2, 0.3, 0.0, 1.0]; 4];
        let w2: Vec<[f64; 6]> = w.iter().map(|r| r.map(|x| 2.0 * x)).collect();
        let mut g1 = vec![0.0; m.params.len()];
        m.backward(&cache, &w, &mut g1).unwrap();
        let mut g2 = vec![0.0; m.params.len()];
        m.backward(&cache, &w2, &mut g2).unwrap();
        let mut acc = g1.clone();
        m.backward(&cache, &w, &mut acc).unwrap();
        for j in 0..g1.len() {
            assert_eq!(g2[j], 2.0 * g1[j]);
            assert_eq!(acc[j], 2.0 * g1[j]);
        }
    }

    #[test]
    fn clamped_leak_has_no_gradient() {
        let mut m = FusionModel::new(3, 2).unwrap();
        m.block_mut(Block::Alpha)[0] = 1.5;
        let input = random_input(4, 1);
        let (_, cache) = m.forward_cached(&input).unwrap();
        let mut g = vec![0.0; m.params.len()];
        m.backward(&cache, &[[1.0; 6]; 4], &mut g).unwrap();
        assert_eq!(g[m.layout().range(Block::Alpha)][0], 0.0);
    }

    #[test]
    fn init_and_validation() {
        let m = FusionModel::new(16, 3).unwrap();
        assert_eq!(m.alpha(), 0.5);
        assert!(m.block(Block::Bh).iter().all(|&v| v == 0.0));
        assert!(m.block(Block::Wh).iter().all(|v| v.abs() <= 0.1));
        assert_eq!(m, FusionModel::new(16, 3).unwrap());
        assert!(FusionModel::new(0, 1).is_err());
        let mut bad = m.clone();
        bad.params[7] = f64::NAN;
        assert!(matches!(bad.validate(), Err(Error::NonFinite(_))));
        let l = m.layout();
        assert_eq!(l.locate(l.range(Block::Wo).start + 2), (Block::Wo, 2));
    }
}
