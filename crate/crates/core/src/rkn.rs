//! Kalman-structured recurrent filter. Each step predicts with the known
//! dynamics, feeds squared features of the innovation, the previous
//! correction, the measurement matrix and the measurement increment into two
//! GRU branches, and takes from them the gain `K̂` and a Cholesky factor `Ĉ`
//! of the noise part of the corrected covariance:
//!
//! ```text
//! P_{t|t} = (I - K̂H) F P_{t-1|t-1} Fᵀ (I - K̂H)ᵀ + Ĉ Ĉᵀ
//! ```
//!
//! The filter never sees `Q`, `R` or the noise schedule.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::{FilterState, Phase};
use crate::nn::{softplus, Activation, Architecture, DenseLayer, GruCell, Init, NodeId, ParamStore, Tape};
use crate::run::{FilterRun, StepRecord};
use crate::ssm::{Dynamics, InitialLaw};

pub const DEFAULT_HIDDEN: usize = 32;
/// Added to `softplus` on the diagonal of `Ĉ`.
pub const DIAG_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RknArch {
    pub m: usize,
    pub n: usize,
    pub hidden: usize,
}

impl RknArch {
    pub fn new(m: usize, n: usize, hidden: usize) -> Result<Self> {
        if m == 0 || n == 0 || hidden == 0 {
            return Err(Error::invalid("architecture dimensions must be positive"));
        }
        Ok(Self { m, n, hidden })
    }

    /// State and measurement sizes of the constant-velocity system.
    pub fn cv() -> Self {
        Self { m: 2, n: 1, hidden: DEFAULT_HIDDEN }
    }

    /// `[ŷ; previous correction; vec(H); Δz]`
    pub fn feat_dim(&self) -> usize {
        self.n + self.m + self.n * self.m + self.n
    }

    pub fn gain_outputs(&self) -> usize {
        self.m * self.n
    }

    pub fn chol_outputs(&self) -> usize {
        self.m * (self.m + 1) / 2
    }
}

/// Input layer, GRU and output head of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub input: DenseLayer,
    pub gru: GruCell,
    pub output: DenseLayer,
}

impl Branch {
    fn register(store: &mut ParamStore, prefix: &str, feat: usize, hidden: usize, out: usize) -> Self {
        Self {
            input: DenseLayer::register(store, &format!("{prefix}.in"), feat, hidden, Activation::Relu),
            gru: GruCell::register(store, &format!("{prefix}.gru"), hidden, hidden),
            // zero heads: the untrained filter starts as pure propagation
            output: DenseLayer::register_with(
                store,
                &format!("{prefix}.out"),
                hidden,
                out,
                Activation::Identity,
                Init::Zeros,
            ),
        }
    }

    fn step(&self, tape: &mut Tape<'_>, feat: NodeId, h: NodeId) -> Result<(NodeId, NodeId)> {
        let a = self.input.forward(tape, feat)?;
        let h = self.gru.step(tape, a, h)?;
        let out = self.output.forward(tape, h)?;
        Ok((out, h))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RknLayout {
    pub gain: Branch,
    pub chol: Branch,
}

impl Architecture for RknArch {
    type Layout = RknLayout;

    fn register(&self, store: &mut ParamStore) -> RknLayout {
        RknLayout {
            gain: Branch::register(store, "gain", self.feat_dim(), self.hidden, self.gain_outputs()),
            chol: Branch::register(store, "chol", self.feat_dim(), self.hidden, self.chol_outputs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RknModel {
    pub arch: RknArch,
    pub params: ParamStore,
    pub layout: RknLayout,
    /// Seed the parameters were initialized from.
    pub seed: u64,
    /// Identifier used in filter runs, e.g. `rkn:<checkpoint hash>`.
    pub label: String,
}

impl RknModel {
    pub fn new(arch: RknArch, seed: u64) -> Self {
        let (params, layout) = crate::nn::init_params(&arch, seed);
        Self { arch, params, layout, seed, label: "rkn".into() }
    }

    fn check_dynamics(&self, dynamics: &Dynamics) -> Result<()> {
        let (m, n) = (self.arch.m, self.arch.n);
        if dynamics.f.shape() != (m, m) || dynamics.h.shape() != (n, m) {
            return Err(Error::dim(format!("model expects m = {m}, n = {n}")));
        }
        Ok(())
    }
}

/// Value-level feature vector: the concatenation squared elementwise.
pub fn build_features(y: &[f64], prev_correction: &[f64], h: &DMatrix<f64>, dz: &[f64]) -> Vec<f64> {
    y.iter()
        .chain(prev_correction)
        .copied()
        .chain(crate::linalg::flatten_row_major(h))
        .chain(dz.iter().copied())
        .map(|v| v * v)
        .collect()
}

/// Lower-triangular factor with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor(pub DMatrix<f64>);

/// Value-level version of the Cholesky head's output transform.
pub fn chol_head_to_factor(raw: &[f64]) -> Result<CholFactor> {
    let len = raw.len();
    let m = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    if m == 0 || m * (m + 1) / 2 != len {
        return Err(Error::dim(format!("{len} values do not fill a lower triangle")));
    }
    let mut c = DMatrix::zeros(m, m);
    let mut k = 0;
    for i in 0..m {
        for j in 0..=i {
            c[(i, j)] = if i == j { softplus(raw[k]) + DIAG_FLOOR } else { raw[k] };
            k += 1;
        }
    }
    Ok(CholFactor(c))
}

/// Constants recorded once per filtered sequence.
#[derive(Debug, Clone, Copy)]
pub struct StepConstants {
    pub f: NodeId,
    pub f_t: NodeId,
    pub h: NodeId,
    pub eye: NodeId,
}

impl StepConstants {
    pub fn record(tape: &mut Tape<'_>, dynamics: &Dynamics) -> Self {
        let m = dynamics.f.nrows();
        Self {
            f: tape.constant_matrix(&dynamics.f),
            f_t: tape.constant_matrix(&dynamics.f.transpose()),
            h: tape.constant_matrix(&dynamics.h),
            eye: tape.constant_matrix(&DMatrix::identity(m, m)),
        }
    }
}

/// Recurrent state carried between steps, as tape nodes.
#[derive(Debug, Clone)]
pub struct RknHidden {
    pub h_gain: NodeId,
    pub h_chol: NodeId,
    /// Previous correction increment `K̂ ŷ` (zero at the start).
    pub prev_correction: NodeId,
    /// Previous measurement (`H x̂_{0|0}` at the start).
    pub prev_z: Vec<f64>,
    /// `x̂_{t-1|t-1}`
    pub x_prev: NodeId,
    /// `P_{t-1|t-1}`
    pub p_prev: NodeId,
}

impl RknHidden {
    pub fn initial(model: &RknModel, initial: &InitialLaw, dynamics: &Dynamics, tape: &mut Tape<'_>) -> Result<Self> {
        model.check_dynamics(dynamics)?;
        let (m, hid) = (model.arch.m, model.arch.hidden);
        if initial.dim() != m {
            return Err(Error::dim("initial law does not match the model"));
        }
        let zeros = vec![0.0; hid];
        let prev_z = (&dynamics.h * &initial.mean).iter().copied().collect();
        Ok(Self {
            h_gain: tape.vector(&zeros),
            h_chol: tape.vector(&zeros),
            prev_correction: tape.vector(&vec![0.0; m]),
            prev_z,
            x_prev: tape.vector(initial.mean.as_slice()),
            p_prev: tape.constant_matrix(&initial.cov),
        })
    }
}

/// Tape nodes produced by one step.
#[derive(Debug, Clone, Copy)]
pub struct RknStep {
    pub x_pred: NodeId,
    pub innovation: NodeId,
    pub features: NodeId,
    /// `m x n`
    pub gain: NodeId,
    /// `m x m` lower triangular
    pub chol: NodeId,
    /// Propagated-covariance term `A`.
    pub a_term: NodeId,
    pub x_corr: NodeId,
    pub p_corr: NodeId,
}

pub fn rkn_step(
    model: &RknModel,
    consts: &StepConstants,
    hidden: &RknHidden,
    z: &[f64],
    tape: &mut Tape<'_>,
) -> Result<(RknStep, RknHidden)> {
    let (m, n) = (model.arch.m, model.arch.n);
    if z.len() != n {
        return Err(Error::dim(format!("measurement of size {} (expected {n})", z.len())));
    }
    let layout = &model.layout;

    let x_pred = tape.matmul(consts.f, hidden.x_prev)?;
    let hx = tape.matmul(consts.h, x_pred)?;
    let zn = tape.vector(z);
    let innovation = tape.sub(zn, hx)?;
    let dz: Vec<f64> = z.iter().zip(&hidden.prev_z).map(|(a, b)| a - b).collect();
    let dz = tape.vector(&dz);
    let raw_feat = tape.concat(&[innovation, hidden.prev_correction, consts.h, dz]);
    let features = tape.square(raw_feat);

    let (k_raw, h_gain) = layout.gain.step(tape, features, hidden.h_gain)?;
    let gain = tape.reshape(k_raw, m, n)?;
    let (c_raw, h_chol) = layout.chol.step(tape, features, hidden.h_chol)?;
    let chol = tape.lower_factor(c_raw, DIAG_FLOOR)?;

    let kh = tape.matmul(gain, consts.h)?;
    let ikh = tape.sub(consts.eye, kh)?;
    let ikh_t = tape.transpose(ikh);
    let fp = tape.matmul(consts.f, hidden.p_prev)?;
    let fpf = tape.matmul(fp, consts.f_t)?;
    let left = tape.matmul(ikh, fpf)?;
    let a_term = tape.matmul(left, ikh_t)?;
    let chol_t = tape.transpose(chol);
    let b_term = tape.matmul(chol, chol_t)?;
    let sum = tape.add(a_term, b_term)?;
    let p_corr = tape.symmetrize(sum)?;

    let correction = tape.matmul(gain, innovation)?;
    let x_corr = tape.add(x_pred, correction)?;

    let step = RknStep { x_pred, innovation, features, gain, chol, a_term, x_corr, p_corr };
    let next = RknHidden {
        h_gain,
        h_chol,
        prev_correction: correction,
        prev_z: z.to_vec(),
        x_prev: x_corr,
        p_prev: p_corr,
    };
    Ok((step, next))
}

/// Runs the filter over a measurement sequence on `tape`.
pub fn rkn_forward<'p>(
    model: &'p RknModel,
    initial: &InitialLaw,
    dynamics: &Dynamics,
    measurements: &[Vec<f64>],
    tape: &mut Tape<'p>,
) -> Result<Vec<RknStep>> {
    let consts = StepConstants::record(tape, dynamics);
    let mut hidden = RknHidden::initial(model, initial, dynamics, tape)?;
    let mut steps = Vec::with_capacity(measurements.len());
    for (t, z) in measurements.iter().enumerate() {
        let (step, next) = rkn_step(model, &consts, &hidden, z, tape).map_err(|e| e.at_step(None, t))?;
        if crate::nn::small_cholesky(tape.value(step.p_corr), model.arch.m).is_none() {
            return Err(Error::Numerical("corrected covariance is not positive definite".into()).at_step(None, t));
        }
        steps.push(step);
        hidden = next;
    }
    Ok(steps)
}

/// Extracts per-step values from a recorded forward pass.
pub fn run_from_steps(tape: &Tape<'_>, steps: &[RknStep], estimator_id: &str, episode_id: u64) -> FilterRun {
    let vec = |id: NodeId| DVector::from_column_slice(tape.value(id));
    FilterRun {
        estimator_id: estimator_id.to_string(),
        episode_id,
        steps: steps
            .iter()
            .map(|s| StepRecord {
                x_pred: vec(s.x_pred),
                x_corr: vec(s.x_corr),
                p_pred: None,
                p_corr: tape.matrix(s.p_corr),
                gain: tape.matrix(s.gain),
                innovation: vec(s.innovation),
                innovation_cov: None,
            })
            .collect(),
    }
}

/// Filters one measurement sequence. Only the measurements are passed in,
/// so the noise levels that generated them are out of reach.
pub fn rkn_filter(
    model: &RknModel,
    initial: &InitialLaw,
    dynamics: &Dynamics,
    measurements: &[Vec<f64>],
    episode_id: u64,
) -> Result<FilterRun> {
    let mut tape = Tape::new(&model.params);
    let steps = rkn_forward(model, initial, dynamics, measurements, &mut tape).map_err(|e| match e {
        Error::AtStep { context, source } => Error::AtStep {
            context: crate::error::StepContext { episode_id: Some(episode_id), ..context },
            source,
        },
        other => other,
    })?;
    Ok(run_from_steps(&tape, &steps, &model.label, episode_id))
}

/// The corrected state of a step as a [`FilterState`].
pub fn corrected_state(tape: &Tape<'_>, step: &RknStep, t: usize) -> FilterState {
    FilterState {
        x_hat: DVector::from_column_slice(tape.value(step.x_corr)),
        p: tape.matrix(step.p_corr),
        t,
        phase: Phase::Corrected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::make_cv_model;

    #[test]
    fn features_cases() {
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(build_features(&[2.0], &[1.0, -3.0], &h, &[0.5]), vec![4.0, 1.0, 9.0, 1.0, 0.0, 0.25]);
        let z = DMatrix::zeros(1, 2);
        assert!(build_features(&[0.0], &[0.0, 0.0], &z, &[0.0]).iter().all(|&v| v == 0.0));
        assert_eq!(
            build_features(&[-2.0], &[-1.0, 3.0], &(-&h), &[-0.5]),
            build_features(&[2.0], &[1.0, -3.0], &h, &[0.5])
        );
        assert_eq!(RknArch::cv().feat_dim(), 6);
    }

    #[test]
    fn chol_factor_cases() {
        let c = chol_head_to_factor(&[0.0, 0.0, 0.0]).unwrap().0;
        let d = std::f64::consts::LN_2 + 1e-6;
        assert!((c[(0, 0)] - d).abs() < 1e-15 && (c[(1, 1)] - d).abs() < 1e-15);
        assert_eq!(c[(0, 1)], 0.0);
        assert!((c[(0, 0)] - 0.693_148).abs() < 1e-6);
        let c = chol_head_to_factor(&[-30.0, 2.0, -30.0]).unwrap().0;
        assert!((c[(0, 0)] - 1e-6).abs() < 1e-12);
        assert!(c[(0, 0)] > 1e-6);
        assert!(chol_head_to_factor(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_heads_propagate_only() {
        let mut model = RknModel::new(RknArch::cv(), 1);
        for b in [&model.layout.gain.output.clone(), &model.layout.chol.output.clone()] {
            model.params.value_mut(b.w).iter_mut().for_each(|v| *v = 0.0);
            model.params.value_mut(b.b).iter_mut().for_each(|v| *v = 0.0);
        }
        let cv = make_cv_model(1.0, 0.01).unwrap();
        let init = InitialLaw::cv_default();
        let run = rkn_filter(&model, &init, &cv.dynamics(), &[vec![3.0]], 0).unwrap();
        let s = &run.steps[0];
        assert_eq!(s.x_corr.as_slice(), &[1.0, 1.0]);
        let d = std::f64::consts::LN_2 + 1e-6;
        let expect = cv.f() * &init.cov * cv.f().transpose() + DMatrix::identity(2, 2) * (d * d);
        assert!((&s.p_corr - expect).amax() < 1e-15);
        assert!(s.gain.iter().all(|&k| k == 0.0));
    }

    #[test]
    fn filter_is_deterministic_and_rejects_bad_dims() {
        let model = RknModel::new(RknArch::cv(), 9);
        let cv = make_cv_model(1.0, 0.01).unwrap();
        let z: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64 * 1.1]).collect();
        let init = InitialLaw::cv_default();
        let a = rkn_filter(&model, &init, &cv.dynamics(), &z, 3).unwrap();
        let b = rkn_filter(&model, &init, &cv.dynamics(), &z, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(rkn_filter(&model, &init, &cv.dynamics(), &[vec![1.0, 2.0]], 0).is_err());
    }
}
