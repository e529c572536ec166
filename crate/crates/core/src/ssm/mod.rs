//! Linear-Gaussian state-space models and the synthetic constant-velocity
//! datasets with switching measurement-noise regimes.
//!
//! Stored arrays are indexed `0..T`; index `i` holds the state and the
//! measurement at time `i + 1`, the initial draw `x_0` is not stored.

mod io;

pub use io::{load_dataset, parse_dataset, save_dataset, write_dataset, DATASET_FORMAT};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_psd, psd_sqrt_lower};

/// Identifier of the per-episode random generator, recorded in dataset headers.
pub const RNG_ALGORITHM: &str = "chacha20;seed=splitmix64(master,split,k);normal=ziggurat";

/// Regime boundary of the abrupt-switch scenario (array index of the first
/// high-noise step).
pub const S1_SWITCH_INDEX: usize = 75;
pub const S1_SIGMA_LOW: f64 = 0.35;
pub const S1_SIGMA_HIGH: f64 = 1.75;
pub const S2_SIGMA_HIGH: f64 = 1.5;
pub const S2_SIGMA_LOW: f64 = 0.6;
pub const S3_SIGMA_HIGH: f64 = 1.907;
pub const S3_SIGMA_LOW: f64 = 0.1907;

/// Constants of the constant-velocity experiment.
pub const CV_DT: f64 = 1.0;
pub const CV_SIGMA_V: f64 = 0.01;

/// `x_t = F x_{t-1} + v_t`, `z_t = H x_t + w_t`, `v_t ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    f: DMatrix<f64>,
    h: DMatrix<f64>,
    q: DMatrix<f64>,
}

/// The parts of a model a learned filter is allowed to see.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(f: DMatrix<f64>, h: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        let m = f.nrows();
        if f.ncols() != m || m == 0 {
            return Err(Error::dim(format!("F is {}x{}, expected square", f.nrows(), f.ncols())));
        }
        if h.ncols() != m || h.nrows() == 0 {
            return Err(Error::dim(format!("H is {}x{}, expected nx{m}", h.nrows(), h.ncols())));
        }
        if q.shape() != (m, m) {
            return Err(Error::dim(format!("Q is {}x{}, expected {m}x{m}", q.nrows(), q.ncols())));
        }
        if f.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("F and H must be finite".into()));
        }
        check_psd(&q, "Q", 1e-12)?;
        Ok(Self { f, h, q })
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn dynamics(&self) -> Dynamics {
        Dynamics { f: self.f.clone(), h: self.h.clone() }
    }
}

/// One-dimensional constant-velocity kinematics with position measurements
/// and a velocity random walk of standard deviation `sigma_v` per step.
pub fn make_cv_model(dt: f64, sigma_v: f64) -> Result<StateSpaceModel> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(sigma_v > 0.0 && sigma_v.is_finite()) {
        return Err(Error::invalid(format!("sigma_v must be positive, got {sigma_v}")));
    }
    StateSpaceModel::new(
        DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, sigma_v * sigma_v]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    S1,
    S2a,
    S2b,
    S3a,
    S3b,
    Custom,
}

impl ScenarioId {
    pub const NAMED: [ScenarioId; 5] =
        [ScenarioId::S1, ScenarioId::S2a, ScenarioId::S2b, ScenarioId::S3a, ScenarioId::S3b];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::S1 => "s1",
            ScenarioId::S2a => "s2a",
            ScenarioId::S2b => "s2b",
            ScenarioId::S3a => "s3a",
            ScenarioId::S3b => "s3b",
            ScenarioId::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(ScenarioId::S1),
            "s2a" => Ok(ScenarioId::S2a),
            "s2b" => Ok(ScenarioId::S2b),
            "s3a" => Ok(ScenarioId::S3a),
            "s3b" => Ok(ScenarioId::S3b),
            "custom" => Ok(ScenarioId::Custom),
            other => Err(Error::invalid(format!(
                "unknown scenario id {other:?} (valid: s1, s2a, s2b, s3a, s3b, custom)"
            ))),
        }
    }
}

/// Per-step measurement-noise standard deviations, `R_t = sigma_t^2 I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigma: Vec<f64>,
    scenario: ScenarioId,
}

impl NoiseSchedule {
    /// Arbitrary schedule. Entries must be finite and non-negative; zero is
    /// accepted so that noiseless episodes can be simulated.
    pub fn custom(sigma: Vec<f64>) -> Result<Self> {
        Self::with_scenario(sigma, ScenarioId::Custom)
    }

    pub(crate) fn with_scenario(sigma: Vec<f64>, scenario: ScenarioId) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::invalid("noise schedule must not be empty"));
        }
        if let Some((t, s)) = sigma.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::invalid(format!("sigma[{t}] = {s} is not a valid standard deviation")));
        }
        Ok(Self { sigma, scenario })
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn scenario(&self) -> ScenarioId {
        self.scenario
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Measurement-noise variance at array index `t`.
    pub fn variance(&self, t: usize) -> f64 {
        self.sigma[t] * self.sigma[t]
    }
}

pub fn make_schedule(scenario: ScenarioId, len: usize) -> Result<NoiseSchedule> {
    if len == 0 {
        return Err(Error::invalid("episode length must be at least 1"));
    }
    let constant = |s: f64| vec![s; len];
    let sigma = match scenario {
        ScenarioId::S1 => (0..len)
            .map(|t| if t < S1_SWITCH_INDEX { S1_SIGMA_LOW } else { S1_SIGMA_HIGH })
            .collect(),
        ScenarioId::S2a => constant(S2_SIGMA_HIGH),
        ScenarioId::S2b => constant(S2_SIGMA_LOW),
        ScenarioId::S3a => constant(S3_SIGMA_HIGH),
        ScenarioId::S3b => constant(S3_SIGMA_LOW),
        ScenarioId::Custom => {
            return Err(Error::invalid("the custom scenario has no built-in schedule"));
        }
    };
    NoiseSchedule::with_scenario(sigma, scenario)
}

/// Gaussian law of the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialLaw {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl InitialLaw {
    /// The covariance must be symmetric positive semi-definite; a zero
    /// covariance pins the initial state to the mean.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::dim("initial covariance does not match the mean"));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("initial mean must be finite".into()));
        }
        check_psd(&cov, "initial covariance", 1e-12)?;
        Ok(Self { mean, cov })
    }

    /// `N((0, 1), diag(1, 0.01))`, the constant-velocity prior.
    pub fn cv_default() -> Self {
        Self {
            mean: DVector::from_column_slice(&[0.0, 1.0]),
            cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.01]),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub episode_id: u64,
    pub seed: u64,
    pub schedule: NoiseSchedule,
    /// True states, `T x m`.
    pub x: Vec<Vec<f64>>,
    /// Measurements, `T x n`.
    pub z: Vec<Vec<f64>>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn state(&self, t: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.x[t])
    }

    pub fn measurement(&self, t: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.z[t])
    }

    pub(crate) fn validate(&self, m: usize, n: usize) -> Result<()> {
        let len = self.x.len();
        if self.z.len() != len || self.schedule.len() != len {
            return Err(Error::Validation(format!(
                "episode {}: x, z and sigma lengths differ ({}, {}, {})",
                self.episode_id,
                len,
                self.z.len(),
                self.schedule.len()
            )));
        }
        if let Some(row) = self.x.iter().find(|r| r.len() != m) {
            return Err(Error::Validation(format!(
                "episode {}: state row of width {} (expected {m})",
                self.episode_id,
                row.len()
            )));
        }
        if let Some(row) = self.z.iter().find(|r| r.len() != n) {
            return Err(Error::Validation(format!(
                "episode {}: measurement row of width {} (expected {n})",
                self.episode_id,
                row.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::Train => 0x7472_6169_6e00_0001,
            Split::Val => 0x7661_6c00_0000_0002,
            Split::Test => 0x7465_7374_0000_0003,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub episodes: Vec<Episode>,
    pub model: StateSpaceModel,
    pub initial: InitialLaw,
    pub master_seed: u64,
    pub split: Split,
    pub scenario_mix: Vec<(ScenarioId, usize)>,
    pub rng_algorithm: String,
    /// Free-form provenance carried through save/load.
    pub provenance: Option<serde_json::Value>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Common episode length (0 for an empty dataset).
    pub fn episode_len(&self) -> usize {
        self.episodes.first().map_or(0, Episode::len)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.model.state_dim(), self.model.meas_dim());
        if self.initial.dim() != m {
            return Err(Error::Validation(format!(
                "initial law has dimension {}, model has {m}",
                self.initial.dim()
            )));
        }
        let len = self.episode_len();
        for ep in &self.episodes {
            ep.validate(m, n)?;
            if ep.len() != len {
                return Err(Error::Validation(format!(
                    "episode {} has length {} but the dataset length is {len}",
                    ep.episode_id,
                    ep.len()
                )));
            }
        }
        Ok(())
    }
}

/// Seed of episode `k`, a pure function of its coordinates so that episodes
/// can be generated in any order.
pub fn episode_seed(master_seed: u64, split: Split, k: u64) -> u64 {
    let mut s = splitmix64(master_seed ^ split.tag());
    s = splitmix64(s ^ k.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(s)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn standard_normals(rng: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Draws `x_0` from the initial law, then `T` steps of the state and
/// measurement recursions. Deterministic in `seed`.
pub fn simulate_episode(
    model: &StateSpaceModel,
    schedule: &NoiseSchedule,
    initial: &InitialLaw,
    len: usize,
    seed: u64,
) -> Result<Episode> {
    if schedule.len() != len {
        return Err(Error::dim(format!(
            "schedule has {} entries for an episode of length {len}",
            schedule.len()
        )));
    }
    let (m, n) = (model.state_dim(), model.meas_dim());
    if initial.dim() != m {
        return Err(Error::dim("initial law does not match the state dimension"));
    }
    let l0 = psd_sqrt_lower(&initial.cov, 1e-300)?;
    let lq = psd_sqrt_lower(&model.q, 1e-300)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut x = &initial.mean + &l0 * standard_normals(&mut rng, m);
    let mut xs = Vec::with_capacity(len);
    let mut zs = Vec::with_capacity(len);
    for t in 0..len {
        x = &model.f * &x + &lq * standard_normals(&mut rng, m);
        let z = &model.h * &x + standard_normals(&mut rng, n) * schedule.sigma()[t];
        xs.push(x.iter().copied().collect());
        zs.push(z.iter().copied().collect());
    }
    Ok(Episode { episode_id: 0, seed, schedule: schedule.clone(), x: xs, z: zs })
}

/// Scenario of each episode index: round-robin over the mix entries that
/// still have episodes left.
pub fn interleave_mix(mix: &[(ScenarioId, usize)]) -> Vec<ScenarioId> {
    let mut remaining: Vec<usize> = mix.iter().map(|&(_, c)| c).collect();
    let total: usize = remaining.iter().sum();
    let mut out = Vec::with_capacity(total);
    while out.len() < total {
        for (i, &(id, _)) in mix.iter().enumerate() {
            if remaining[i] > 0 {
                remaining[i] -= 1;
                out.push(id);
            }
        }
    }
    out
}

pub fn generate_dataset(
    model: &StateSpaceModel,
    scenario_mix: &[(ScenarioId, usize)],
    initial: &InitialLaw,
    len: usize,
    master_seed: u64,
    split: Split,
) -> Result<Dataset> {
    if scenario_mix.iter().map(|&(_, c)| c).sum::<usize>() == 0 {
        return Err(Error::invalid("scenario mix contains no episodes"));
    }
    let schedules = scenario_mix
        .iter()
        .map(|&(id, _)| make_schedule(id, len).map(|s| (id, s)))
        .collect::<Result<Vec<_>>>()?;
    let order = interleave_mix(scenario_mix);
    let episodes = order
        .par_iter()
        .enumerate()
        .map(|(k, id)| {
            let schedule = &schedules.iter().find(|(s, _)| s == id).expect("schedule for mix entry").1;
            let seed = episode_seed(master_seed, split, k as u64);
            let mut ep = simulate_episode(model, schedule, initial, len, seed)?;
            ep.episode_id = k as u64;
            Ok(ep)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        episodes,
        model: model.clone(),
        initial: initial.clone(),
        master_seed,
        split,
        scenario_mix: scenario_mix.to_vec(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        provenance: None,
    })
}

/// Expands a mix name: a single scenario id, or `s2`/`s3` for the two
/// constant regimes split evenly.
pub fn named_mix(name: &str, count: usize) -> Result<Vec<(ScenarioId, usize)>> {
    let half = |a, b| vec![(a, count - count / 2), (b, count / 2)];
    match name.to_ascii_lowercase().as_str() {
        "s2" => Ok(half(ScenarioId::S2a, ScenarioId::S2b)),
        "s3" => Ok(half(ScenarioId::S3a, ScenarioId::S3b)),
        other => {
            let id: ScenarioId = other.parse().map_err(|_| {
                Error::invalid(format!(
                    "unknown scenario {other:?} (valid: s1, s2, s3, s2a, s2b, s3a, s3b)"
                ))
            })?;
            if id == ScenarioId::Custom {
                return Err(Error::invalid("the custom scenario cannot be generated"));
            }
            Ok(vec![(id, count)])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cv_model_constants() {
        let m = make_cv_model(1.0, 0.01).unwrap();
        assert_eq!(m.f().as_slice(), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]).as_slice());
        assert_eq!(m.h().as_slice(), &[1.0, 0.0]);
        assert_eq!(m.q()[(1, 1)], 1e-4);
        assert_eq!(m.q()[(0, 0)], 0.0);
        assert_eq!((m.state_dim(), m.meas_dim()), (2, 1));

        let m = make_cv_model(0.5, 0.1).unwrap();
        assert_eq!(m.f()[(0, 1)], 0.5);
        assert!((m.q()[(1, 1)] - 0.01).abs() < 1e-16);
    }

    #[test]
    fn cv_model_rejects_degenerate_inputs() {
        assert!(matches!(make_cv_model(1.0, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_cv_model(0.0, 0.01), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_cv_model(-1.0, 0.01), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn model_rejects_inconsistent_dims() {
        let f = DMatrix::identity(2, 2);
        let h = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        assert!(StateSpaceModel::new(f.clone(), h, DMatrix::zeros(2, 2)).is_err());
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(StateSpaceModel::new(f, h, q).is_err());
    }

    #[test]
    fn schedules() {
        let s1 = make_schedule(ScenarioId::S1, 150).unwrap();
        assert_eq!(s1.sigma()[74], 0.35);
        assert_eq!(s1.sigma()[75], 1.75);
        assert_eq!(s1.len(), 150);
        let s2a = make_schedule(ScenarioId::S2a, 10).unwrap();
        assert!(s2a.sigma().iter().all(|&s| s == 1.5));
        assert_eq!(s2a.len(), 10);
        let a = make_schedule(ScenarioId::S3a, 2).unwrap();
        let b = make_schedule(ScenarioId::S3b, 2).unwrap();
        for t in 0..2 {
            assert!((a.sigma()[t] / b.sigma()[t] - 10.0).abs() < 1e-6);
        }
        assert!((S2_SIGMA_HIGH / S2_SIGMA_LOW - 2.5).abs() < 1e-12);
        assert!((S1_SIGMA_HIGH / S1_SIGMA_LOW - 5.0).abs() < 1e-12);
        assert!(make_schedule(ScenarioId::Custom, 3).is_err());
        assert!(make_schedule(ScenarioId::S1, 0).is_err());
        assert!("bogus".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn zero_noise_simulation_is_the_linear_recursion() {
        let model = StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let initial = InitialLaw::new(DVector::from_column_slice(&[0.0, 1.0]), DMatrix::zeros(2, 2)).unwrap();
        let schedule = NoiseSchedule::custom(vec![0.0; 3]).unwrap();
        let ep = simulate_episode(&model, &schedule, &initial, 3, 7).unwrap();
        assert_eq!(ep.x, vec![vec![1.0, 1.0], vec![2.0, 1.0], vec![3.0, 1.0]]);
        assert_eq!(ep.z, vec![vec![1.0], vec![2.0], vec![3.0]]);
    }

    #[test]
    fn simulation_is_deterministic() {
        let model = make_cv_model(CV_DT, CV_SIGMA_V).unwrap();
        let s = make_schedule(ScenarioId::S1, 150).unwrap();
        let init = InitialLaw::cv_default();
        let a = simulate_episode(&model, &s, &init, 150, 99).unwrap();
        let b = simulate_episode(&model, &s, &init, 150, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate_episode(&model, &s, &init, 150, 100).unwrap();
        assert_ne!(a.z, c.z);
        assert!(simulate_episode(&model, &s, &init, 149, 1).is_err());
    }

    #[test]
    fn mixes() {
        let model = make_cv_model(CV_DT, CV_SIGMA_V).unwrap();
        let init = InitialLaw::cv_default();
        let ds = generate_dataset(
            &model,
            &[(ScenarioId::S2a, 5), (ScenarioId::S2b, 5)],
            &init,
            4,
            1,
            Split::Train,
        )
        .unwrap();
        let ids: Vec<_> = ds.episodes.iter().map(|e| e.schedule.scenario()).collect();
        assert_eq!(ids.iter().filter(|&&s| s == ScenarioId::S2a).count(), 5);
        assert_eq!(ids[0], ScenarioId::S2a);
        assert_eq!(ids[1], ScenarioId::S2b);
        assert!(generate_dataset(&model, &[(ScenarioId::S1, 0)], &init, 4, 1, Split::Train).is_err());
        assert!(generate_dataset(&model, &[], &init, 4, 1, Split::Train).is_err());
        assert_eq!(interleave_mix(&[(ScenarioId::S1, 1), (ScenarioId::S2a, 3)]).len(), 4);
        assert_eq!(named_mix("s2", 1000).unwrap(), vec![(ScenarioId::S2a, 500), (ScenarioId::S2b, 500)]);
        assert!(named_mix("bogus", 3).is_err());
    }

    #[test]
    fn seeds_depend_on_split_and_index() {
        let a = episode_seed(42, Split::Train, 0);
        assert_ne!(a, episode_seed(42, Split::Val, 0));
        assert_ne!(a, episode_seed(42, Split::Train, 1));
        assert_ne!(a, episode_seed(43, Split::Train, 0));
        assert_eq!(a, episode_seed(42, Split::Train, 0));
    }
}
