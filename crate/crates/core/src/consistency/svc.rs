use crate::error::{Error, Result};
use crate::geometry::{compose_poses, diff::compose_poses_vjp, Pose6};

/// Interval-sampled subsequences `I^{k,s}` for `k = 1..=K`, `s = 0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsequenceSet {
    pub frames: usize,
    /// `sets[k - 1][s]` lists the frames `s, s + k, s + 2k, ...`.
    pub sets: Vec<Vec<Vec<usize>>>,
}

impl SubsequenceSet {
    pub fn k_max(&self) -> usize {
        self.sets.len()
    }

    pub fn get(&self, k: usize, s: usize) -> Option<&[usize]> {
        self.sets.get(k.checked_sub(1)?)?.get(s).map(|v| v.as_slice())
    }
}

pub fn build_subsequences(n: usize, k_max: usize) -> Result<SubsequenceSet> {
    if k_max == 0 {
        return Err(Error::InvalidInput("maximum interval must be at least 1".into()));
    }
    if n <= k_max {
        return Err(Error::InvalidInput(format!(
            "{n} frames do not support intervals up to {k_max}"
        )));
    }
    let sets = (1..=k_max)
        .map(|k| (0..k).map(|s| (s..n).step_by(k).collect()).collect())
        .collect();
    Ok(SubsequenceSet { frames: n, sets })
}

/// One composition check `theta^k_i ~ theta^{k1}_i * theta^{k-k1}_{i+k1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SvcTerm {
    pub k: usize,
    pub k1: usize,
    pub i: usize,
}

/// All terms for intervals up to `k_max` on `n` frames, grouped by `(k, k1)`.
pub fn svc_terms(n: usize, k_max: usize) -> Vec<SvcTerm> {
    let mut out = Vec::new();
    for k in 2..=k_max.min(n.saturating_sub(1)) {
        for k1 in 1..k {
            for i in 0..n - k {
                out.push(SvcTerm { k, k1, i });
            }
        }
    }
    out
}

/// Composition consistency of interval estimates. `est[k - 1]` holds
/// `theta^k_i` for `i = 0..N-k`. Each `(k, k1)` group contributes the mean
/// absolute deviation over its terms and components; groups are averaged.
/// Gradients are returned per interval, shaped like `est`.
pub fn svc_loss(est: &[Vec<Pose6>], terms: &[SvcTerm]) -> Result<(f64, Vec<Vec<[f64; 6]>>)> {
    let mut grad: Vec<Vec<[f64; 6]>> = est.iter().map(|e| vec![[0.0; 6]; e.len()]).collect();
    let mut groups: std::collections::BTreeMap<(usize, usize), usize> = Default::default();
    for t in terms {
        let need = |k: usize, i: usize| -> Result<()> {
            let ok = k >= 1 && k <= est.len() && i < est[k - 1].len();
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "missing interval estimate theta^{k}_{i}"
                )))
            }
        };
        if t.k1 == 0 || t.k1 >= t.k {
            return Err(Error::InvalidInput(format!("invalid split {} of {}", t.k1, t.k)));
        }
        need(t.k, t.i)?;
        need(t.k1, t.i)?;
        need(t.k - t.k1, t.i + t.k1)?;
        *groups.entry((t.k, t.k1)).or_default() += 1;
    }
    if groups.is_empty() {
        return Ok((0.0, grad));
    }
    let z = groups.len() as f64;
    let mut value = 0.0;
    for t in terms {
        let w = 1.0 / (z * groups[&(t.k, t.k1)] as f64 * 6.0);
        let a = &est[t.k1 - 1][t.i];
        let b = &est[t.k - t.k1 - 1][t.i + t.k1];
        let c = compose_poses(a, b).to_array();
        let target = est[t.k - 1][t.i].to_array();
        let mut gc = [0.0; 6];
        for j in 0..6 {
            let d = target[j] - c[j];
            value += w * d.abs();
            let sgn = if d == 0.0 { 0.0 } else { d.signum() };
            grad[t.k - 1][t.i][j] += w * sgn;
            gc[j] = -w * sgn;
        }
        let (ga, gb) = compose_poses_vjp(a, b, gc);
        for j in 0..6 {
            grad[t.k1 - 1][t.i][j] += ga[j];
            grad[t.k - t.k1 - 1][t.i + t.k1][j] += gb[j];
        }
    }
    Ok((value, grad))
}
