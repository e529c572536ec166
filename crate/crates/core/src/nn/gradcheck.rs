use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub n_probes: usize,
    /// Central-difference step.
    pub step: f64,
    pub tol: f64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true gradient is ~0 are judged on absolute error.
    pub denom_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { n_probes: 64, step: 1e-6, tol: 1e-4, denom_floor: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Compares `analytic` with central differences of `f` on randomly chosen
/// coordinates of `params`. The relative error of a probe is
/// `|a - n| / max(|a|, |n|, denom_floor)`.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], cfg: &GradCheckConfig) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let count = cfg.n_probes.min(params.len());
    let mut indices = sample(&mut rng, params.len(), count).into_vec();
    indices.sort_unstable();
    let mut theta = params.to_vec();
    let probes: Vec<Probe> = indices
        .into_iter()
        .map(|i| {
            let orig = theta[i];
            theta[i] = orig + cfg.step;
            let up = f(&theta);
            theta[i] = orig - cfg.step;
            let down = f(&theta);
            theta[i] = orig;
            let numeric = (up - down) / (2.0 * cfg.step);
            let a = analytic[i];
            let denom = a.abs().max(numeric.abs()).max(cfg.denom_floor);
            let rel_error = if (a - numeric).abs() == 0.0 { 0.0 } else { (a - numeric).abs() / denom };
            Probe { index: i, analytic: a, numeric, rel_error }
        })
        .collect();
    let max_rel_error = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    let passed = max_rel_error.is_finite() && max_rel_error <= cfg.tol;
    GradCheckReport { probes, max_rel_error, passed }
}
