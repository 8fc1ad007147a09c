use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mss::mss_loss;
use super::pac::{
    detect_direction_changes, pac_loss, reorder_sequence, split_segments, PathTemplate, Reordering,
    Segmentation, DEFAULT_DIRECTION_THRESHOLD_DEG,
};
use super::pmc::{
    pair_content_differences, pmc_loss, InterpolatorKind, PatchGrid, DEFAULT_INTERPOLATED, DEFAULT_PATCH_GRID,
};
use super::svc::{build_subsequences, svc_loss, svc_terms, SvcTerm};
use crate::error::{Error, Result};
use crate::estimator::{sequence_input, FeatureCache, FusionModel, InputOptions, SequenceInput};
use crate::geometry::Pose6;
use crate::optim::Adam;
use crate::scan::ScanBundle;

/// Default largest subsequence interval.
pub const DEFAULT_K: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub svc: f64,
    pub pac: f64,
    pub pmc: f64,
    pub mss: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            svc: 1.0,
            pac: 1.0,
            pmc: 1.0,
            mss: 1.0,
        }
    }
}

impl LossWeights {
    pub fn only(term: &str) -> Result<Self> {
        let mut w = Self {
            svc: 0.0,
            pac: 0.0,
            pmc: 0.0,
            mss: 0.0,
        };
        match term {
            "svc" => w.svc = 1.0,
            "pac" => w.pac = 1.0,
            "pmc" => w.pmc = 1.0,
            "mss" => w.mss = 1.0,
            other => return Err(Error::InvalidInput(format!("unknown loss term {other}"))),
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub iterations: usize,
    pub lr: f64,
    pub weights: LossWeights,
    /// Largest subsequence interval.
    pub k_max: usize,
    /// Interpolated frames per pair for the content difference.
    pub interpolated: usize,
    /// Patch grid (rows, columns).
    pub patch_grid: (usize, usize),
    pub interpolator: InterpolatorKind,
    pub seed: u64,
    pub direction_threshold_deg: f64,
    /// Cap on composition checks; above it a seeded subset is used, spread
    /// evenly over the interval splits. `None` evaluates all of them.
    pub svc_budget: Option<usize>,
    /// Cap on frame pairs entering the motion-consistency term.
    pub pmc_pair_budget: Option<usize>,
    /// Draw a new reordering template every iteration instead of once.
    pub resample_template: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            iterations: 60,
            lr: 2e-6,
            weights: LossWeights::default(),
            k_max: DEFAULT_K,
            interpolated: DEFAULT_INTERPOLATED,
            patch_grid: DEFAULT_PATCH_GRID,
            interpolator: InterpolatorKind::Linear,
            seed: 1,
            direction_threshold_deg: DEFAULT_DIRECTION_THRESHOLD_DEG,
            svc_budget: Some(2048),
            pmc_pair_budget: Some(256),
            resample_template: false,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be >= 0, got {}",
                self.lr
            )));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidInput("K must be at least 1".into()));
        }
        if self.patch_grid.0 == 0 || self.patch_grid.1 == 0 {
            return Err(Error::InvalidInput("patch grid must be non-empty".into()));
        }
        let w = &self.weights;
        if [w.svc, w.pac, w.pmc, w.mss]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::InvalidInput(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Unweighted loss terms at one parameter state, plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub svc: f64,
    pub pac: f64,
    pub pmc: f64,
    pub mss: f64,
    pub total: f64,
    pub pac_skipped: bool,
    pub pmc_degenerate: bool,
    pub mss_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub model: FusionModel,
    pub poses: Vec<Pose6>,
    /// Loss before every update and after the last one.
    pub trace: Vec<LossTerms>,
    pub template: Option<PathTemplate>,
    /// Set when the run stopped early; the best model seen is returned.
    pub diagnostic: Option<String>,
}

struct SubInput {
    k: usize,
    s: usize,
    input: SequenceInput,
}

struct PacSetup {
    reorderings: Vec<(PathTemplate, Reordering, SequenceInput)>,
}

/// Precomputed per-scan state of the online objective.
pub struct RefineProblem<'a> {
    bundle: &'a ScanBundle,
    cfg: RefineConfig,
    subs: Vec<SubInput>,
    terms: Vec<SvcTerm>,
    pairs: Vec<(usize, usize)>,
    content: Vec<f64>,
    points: Vec<[nalgebra::Vector3<f64>; 5]>,
    pac: Option<PacSetup>,
    pac_reason: Option<String>,
}

impl<'a> RefineProblem<'a> {
    /// Builds subsequence inputs, samples the budgeted term subsets, computes
    /// the content differences and, for loop scans detected on the initial
    /// estimates, the reordered sequence.
    pub fn new(model: &FusionModel, bundle: &'a ScanBundle, cfg: &RefineConfig) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        bundle.validate()?;
        let n = bundle.len();
        if n < 4 {
            return Err(Error::TooShort {
                what: "frames",
                min: 4,
                actual: n,
            });
        }
        let k_max = cfg.k_max.min(n - 1);
        let set = build_subsequences(n, k_max)?;
        let mut cache = FeatureCache::new(&bundle.frames);
        let mut subs = Vec::new();
        for k in 1..=k_max {
            for s in 0..k {
                let idx = set.get(k, s).unwrap_or(&[]);
                if idx.len() < 2 {
                    continue;
                }
                let opts = InputOptions {
                    accel_factor: (k * k) as f64,
                };
                subs.push(SubInput {
                    k,
                    s,
                    input: sequence_input(&mut cache, &bundle.imu, idx, opts, &[])?,
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

        let all_terms = svc_terms(n, k_max);
        let terms = match cfg.svc_budget {
            Some(budget) if budget < all_terms.len() => {
                let splits = k_max * (k_max - 1) / 2;
                let per = budget.div_ceil(splits.max(1)).max(1);
                let mut out = Vec::new();
                for k in 2..=k_max {
                    for k1 in 1..k {
                        let avail = n - k;
                        let take = per.min(avail);
                        let mut idx: Vec<usize> = sample(&mut rng, avail, take).into_vec();
                        idx.sort_unstable();
                        out.extend(idx.into_iter().map(|i| SvcTerm { k, k1, i }));
                    }
                }
                out
            }
            _ => all_terms,
        };

        let all_pairs: Vec<(usize, usize)> = (1..=k_max)
            .flat_map(|k| (0..n - k).map(move |i| (i, i + k)))
            .collect();
        let pairs = match cfg.pmc_pair_budget {
            Some(b) if b < all_pairs.len() => {
                let mut idx: Vec<usize> = sample(&mut rng, all_pairs.len(), b).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| all_pairs[i]).collect()
            }
            _ => all_pairs,
        };
        let plane = bundle.plane();
        let grid = PatchGrid::new(plane.width, plane.height, cfg.patch_grid.0, cfg.patch_grid.1)?;
        let content = if cfg.weights.pmc > 0.0 {
            pair_content_differences(&bundle.frames, &pairs, cfg.interpolated, &grid, cfg.interpolator)?
        } else {
            Vec::new()
        };
        let points = grid.sample_points(&plane);

        let mut pac = None;
        let mut pac_reason = None;
        if cfg.weights.pac > 0.0 {
            let full = &subs[0].input;
            let initial = model.forward(full)?;
            let changes = detect_direction_changes(&initial, cfg.direction_threshold_deg)?;
            match split_segments(n, &changes) {
                Segmentation::Skip(why) => pac_reason = Some(why),
                Segmentation::Loop(segments) => {
                    let templates = PathTemplate::all();
                    let chosen: Vec<PathTemplate> = if cfg.resample_template {
                        templates
                    } else {
                        vec![templates[rng.random_range(0..templates.len())].clone()]
                    };
                    let mut reorderings = Vec::new();
                    for t in chosen {
                        let r = reorder_sequence(&segments, &t)?;
                        let input = sequence_input(
                            &mut cache,
                            &bundle.imu,
                            &r.order,
                            InputOptions::default(),
                            &r.junction_positions,
                        )?;
                        reorderings.push((t, r, input));
                    }
                    pac = Some(PacSetup { reorderings });
                }
            }
        }
        Ok(Self {
            bundle,
            cfg: cfg.clone(),
            subs,
            terms,
            pairs,
            content,
            points,
            pac,
            pac_reason,
        })
    }

    pub fn config(&self) -> &RefineConfig {
        &self.cfg
    }

    /// Why the path-level term is inactive, if it is.
    pub fn pac_skip_reason(&self) -> Option<&str> {
        self.pac_reason.as_deref()
    }

    pub fn pac_template(&self, iteration: usize) -> Option<&PathTemplate> {
        let p = self.pac.as_ref()?;
        Some(&p.reorderings[iteration % p.reorderings.len()].0)
    }

    /// Losses at `model`; when `grad` is given, the weighted parameter
    /// gradient is accumulated into it. Returns the terms and the full-scan
    /// estimates.
    pub fn evaluate(
        &self,
        model: &FusionModel,
        iteration: usize,
        grad: Option<&mut [f64]>,
    ) -> Result<(LossTerms, Vec<Pose6>)> {
        let n = self.bundle.len();
        let k_max = self.subs.iter().map(|s| s.k).max().unwrap_or(1);
        let w = self.cfg.weights;
        let mut est: Vec<Vec<Pose6>> = (1..=k_max).map(|k| vec![Pose6::ZERO; n - k]).collect();
        let mut caches = Vec::with_capacity(self.subs.len());
        for sub in &self.subs {
            let (out, cache) = model.forward_cached(&sub.input)?;
            for (j, p) in out.into_iter().enumerate() {
                est[sub.k - 1][sub.s + j * sub.k] = p;
            }
            caches.push(cache);
        }
        let mut g_est: Vec<Vec<[f64; 6]>> = est.iter().map(|e| vec![[0.0; 6]; e.len()]).collect();
        let add = |dst: &mut [f64; 6], src: &[f64; 6], s: f64| {
            for j in 0..6 {
                dst[j] += s * src[j];
            }
        };

        let mut terms = LossTerms {
            svc: 0.0,
            pac: 0.0,
            pmc: 0.0,
            mss: 0.0,
            total: 0.0,
            pac_skipped: self.pac.is_none(),
            pmc_degenerate: false,
            mss_degenerate: false,
        };

        if w.svc > 0.0 {
            let (v, g) = svc_loss(&est, &self.terms)?;
            terms.svc = v;
            for (gk, src) in g_est.iter_mut().zip(&g) {
                for (d, s) in gk.iter_mut().zip(src) {
                    add(d, s, w.svc);
                }
            }
        }
        if w.mss > 0.0 {
            let m = mss_loss(&est[0], &self.bundle.imu)?;
            terms.mss = m.total();
            terms.mss_degenerate = m.degenerate;
            for (d, s) in g_est[0].iter_mut().zip(&m.grad) {
                add(d, s, w.mss);
            }
        }
        if w.pmc > 0.0 {
            let rel: Vec<Pose6> = self.pairs.iter().map(|&(i, j)| est[j - i - 1][i]).collect();
            let (v, g, deg) = pmc_loss(&self.content, &rel, &self.points)?;
            terms.pmc = v;
            terms.pmc_degenerate = deg;
            for (&(i, j), gp) in self.pairs.iter().zip(&g) {
                add(&mut g_est[j - i - 1][i], gp, w.pmc);
            }
        }
        let mut pac_grad = None;
        if let (true, Some(pac)) = (w.pac > 0.0, &self.pac) {
            let (_, r, input) = &pac.reorderings[iteration % pac.reorderings.len()];
            let (out, cache) = model.forward_cached(input)?;
            let (v, g_re, g_orig) = pac_loss(&out, &est[0], &r.order)?;
            terms.pac = v;
            for (d, s) in g_est[0].iter_mut().zip(&g_orig) {
                add(d, s, w.pac);
            }
            let g_re: Vec<[f64; 6]> = g_re.iter().map(|g| g.map(|v| v * w.pac)).collect();
            pac_grad = Some((cache, g_re));
        }
        terms.total = w.svc * terms.svc + w.pac * terms.pac + w.pmc * terms.pmc + w.mss * terms.mss;

        if let Some(grad) = grad {
            for (sub, cache) in self.subs.iter().zip(&caches) {
                let g: Vec<[f64; 6]> = (0..sub.input.len())
                    .map(|j| g_est[sub.k - 1][sub.s + j * sub.k])
                    .collect();
                model.backward(cache, &g, grad)?;
            }
            if let Some((cache, g)) = &pac_grad {
                model.backward(cache, g, grad)?;
            }
        }
        Ok((terms, std::mem::take(&mut est[0])))
    }
}

/// Tunes the model on one scan by descending the online objective.
pub fn refine(model: &FusionModel, bundle: &ScanBundle, cfg: &RefineConfig) -> Result<RefineResult> {
    let problem = RefineProblem::new(model, bundle, cfg)?;
    if let Some(why) = problem.pac_skip_reason() {
        log::debug!("path-level term skipped: {why}");
    }
    let mut model = model.clone();
    let mut opt = Adam::new(model.params.len(), cfg.lr);
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut best: Option<(f64, FusionModel)> = None;
    let mut diagnostic = None;
    let mut last_poses = None;
    for it in 0..=cfg.iterations {
        let mut grad = vec![0.0; model.params.len()];
        let want_grad = it < cfg.iterations;
        let eval = problem.evaluate(&model, it, want_grad.then_some(grad.as_mut_slice()));
        let (terms, poses) = match eval {
            Ok(v) if v.0.total.is_finite() => v,
            Ok(v) => {
                diagnostic = Some(format!("non-finite loss {} at iteration {it}", v.0.total));
                break;
            }
            Err(e) => {
                diagnostic = Some(format!("iteration {it}: {e}"));
                break;
            }
        };
        log::debug!("iteration {it}: total {:.6}", terms.total);
        trace.push(terms);
        if best.as_ref().is_none_or(|(b, _)| terms.total < *b) {
            best = Some((terms.total, model.clone()));
        }
        last_poses = Some(poses);
        if want_grad {
            opt.step(&mut model.params, &grad);
        }
    }
    let template = problem.pac_template(0).cloned();
    if diagnostic.is_some() {
        let (_, best_model) = best.ok_or_else(|| Error::NonFinite(diagnostic.clone().unwrap_or_default()))?;
        let poses = crate::estimator::estimate(&best_model, bundle)?.poses;
        return Ok(RefineResult {
            model: best_model,
            poses,
            trace,
            template,
            diagnostic,
        });
    }
    Ok(RefineResult {
        model,
        poses: last_poses.unwrap_or_default(),
        trace,
        template,
        diagnostic,
    })
}
