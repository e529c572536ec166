//! Classical Kalman filter, gain-agnostic covariance forms and the
//! steady-state gain of the Riccati recursion.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{spd_cholesky, symmetrize};
use crate::run::{FilterRun, StepRecord};
use crate::ssm::{Episode, InitialLaw, StateSpaceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Predicted,
    Corrected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub t: usize,
    pub phase: Phase,
}

impl FilterState {
    pub fn initial(law: &InitialLaw) -> Self {
        Self { x_hat: law.mean.clone(), p: law.cov.clone(), t: 0, phase: Phase::Corrected }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Innovation {
    pub y: DVector<f64>,
    pub s: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix(pub DMatrix<f64>);

impl GainMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// How a filter models the measurement-noise covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementNoiseModel {
    /// `R_t = sigma_t^2 I` read from the episode's schedule.
    Oracle,
    /// `R_t = value * I` regardless of the data.
    Fixed(f64),
}

impl MeasurementNoiseModel {
    /// Convention for the mis-tuned baseline: unit variance.
    pub const DEFAULT_FIXED: f64 = 1.0;

    pub fn fixed(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::invalid(format!("fixed R must be positive, got {value}")));
        }
        Ok(Self::Fixed(value))
    }

    pub fn estimator_id(&self) -> String {
        match self {
            Self::Oracle => "kf:oracle".into(),
            Self::Fixed(r) => format!("kf:fixed={r}"),
        }
    }

    fn covariance(&self, episode: &Episode, t: usize, n: usize) -> DMatrix<f64> {
        let r = match self {
            Self::Oracle => episode.schedule.variance(t),
            Self::Fixed(r) => *r,
        };
        DMatrix::identity(n, n) * r
    }
}

fn expect_phase(state: &FilterState, phase: Phase) -> Result<()> {
    if state.phase != phase {
        return Err(Error::invalid(format!("expected a {phase:?} state, got {:?}", state.phase)));
    }
    Ok(())
}

fn check_shape(what: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::dim(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn kf_predict(state: &FilterState, f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<FilterState> {
    expect_phase(state, Phase::Corrected)?;
    let m = state.x_hat.len();
    check_shape("F", f, m, m)?;
    check_shape("Q", q, m, m)?;
    check_shape("P", &state.p, m, m)?;
    Ok(FilterState {
        x_hat: f * &state.x_hat,
        p: symmetrize(&(f * &state.p * f.transpose() + q)),
        t: state.t + 1,
        phase: Phase::Predicted,
    })
}

pub fn kf_innovate(
    state: &FilterState,
    z: &DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<Innovation> {
    expect_phase(state, Phase::Predicted)?;
    let (m, n) = (state.x_hat.len(), z.len());
    check_shape("H", h, n, m)?;
    check_shape("R", r, n, n)?;
    let y = z - h * &state.x_hat;
    let s = symmetrize(&(h * &state.p * h.transpose() + r));
    spd_cholesky(&s, "innovation covariance S")?;
    Ok(Innovation { y, s })
}

/// `K = P Hᵀ S⁻¹`, solved through the Cholesky factor of `S`.
pub fn kalman_gain(p_pred: &DMatrix<f64>, h: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<GainMatrix> {
    let (n, m) = h.shape();
    check_shape("P", p_pred, m, m)?;
    check_shape("S", s, n, n)?;
    let chol = spd_cholesky(s, "innovation covariance S")?;
    // S Kᵀ = H P (P and S symmetric)
    let kt = chol.solve(&(h * p_pred));
    let k = kt.transpose();
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("gain has non-finite entries".into()));
    }
    Ok(GainMatrix(k))
}

/// Standard-form correction `P = (I - K H) P_pred`, symmetrized.
pub fn kf_update(
    state: &FilterState,
    k: &GainMatrix,
    y: &DVector<f64>,
    h: &DMatrix<f64>,
) -> Result<FilterState> {
    expect_phase(state, Phase::Predicted)?;
    let (m, n) = (state.x_hat.len(), y.len());
    check_shape("K", &k.0, m, n)?;
    check_shape("H", h, n, m)?;
    let ikh = DMatrix::identity(m, m) - &k.0 * h;
    Ok(FilterState {
        x_hat: &state.x_hat + &k.0 * y,
        p: symmetrize(&(ikh * &state.p)),
        t: state.t,
        phase: Phase::Corrected,
    })
}

/// `(I - K H) P (I - K H)ᵀ + K R Kᵀ`, valid for any gain.
pub fn joseph_update(
    p_pred: &DMatrix<f64>,
    k: &GainMatrix,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (n, m) = h.shape();
    check_shape("P", p_pred, m, m)?;
    check_shape("K", &k.0, m, n)?;
    check_shape("R", r, n, n)?;
    let ikh = DMatrix::identity(m, m) - &k.0 * h;
    Ok(symmetrize(&(&ikh * p_pred * ikh.transpose() + &k.0 * r * k.0.transpose())))
}

/// Splits the corrected covariance into the part carried over from the
/// previous correction (`A`) and the part due to the noises (`B`).
pub fn covariance_split(
    p_prev: &DMatrix<f64>,
    k: &GainMatrix,
    f: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, m) = h.shape();
    check_shape("P", p_prev, m, m)?;
    check_shape("F", f, m, m)?;
    check_shape("Q", q, m, m)?;
    check_shape("K", &k.0, m, n)?;
    check_shape("R", r, n, n)?;
    let ikh = DMatrix::identity(m, m) - &k.0 * h;
    let a = &ikh * f * p_prev * f.transpose() * ikh.transpose();
    let b = &ikh * q * ikh.transpose() + &k.0 * r * k.0.transpose();
    Ok((symmetrize(&a), symmetrize(&b)))
}

/// Filters one episode from `x̂_{0|0} = mean`, `P_{0|0} = cov`.
pub fn run_kf(
    model: &StateSpaceModel,
    noise: MeasurementNoiseModel,
    initial: &InitialLaw,
    episode: &Episode,
) -> Result<FilterRun> {
    let (m, n) = (model.state_dim(), model.meas_dim());
    if initial.dim() != m {
        return Err(Error::dim("initial law does not match the model"));
    }
    episode.validate(m, n)?;
    let mut state = FilterState::initial(initial);
    let mut steps = Vec::with_capacity(episode.len());
    for t in 0..episode.len() {
        let step = || -> Result<(StepRecord, FilterState)> {
            let pred = kf_predict(&state, model.f(), model.q())?;
            let r = noise.covariance(episode, t, n);
            let inn = kf_innovate(&pred, &episode.measurement(t), model.h(), &r)?;
            let k = kalman_gain(&pred.p, model.h(), &inn.s)?;
            let corr = kf_update(&pred, &k, &inn.y, model.h())?;
            let rec = StepRecord {
                x_pred: pred.x_hat.clone(),
                x_corr: corr.x_hat.clone(),
                p_pred: Some(pred.p),
                p_corr: corr.p.clone(),
                gain: k.0,
                innovation: inn.y,
                innovation_cov: Some(inn.s),
            };
            Ok((rec, corr))
        };
        let (rec, next) = step().map_err(|e| e.at_step(Some(episode.episode_id), t))?;
        steps.push(rec);
        state = next;
    }
    Ok(FilterRun { estimator_id: noise.estimator_id(), episode_id: episode.episode_id, steps })
}

pub const RICCATI_TOL: f64 = 1e-12;
pub const RICCATI_MAX_ITER: usize = 100_000;

/// Gain at the fixed point of the predicted-covariance Riccati recursion,
/// iterated from `P = Q` until successive iterates differ by less than
/// `1e-12` in Frobenius norm.
pub fn steady_state_gain(
    f: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<GainMatrix> {
    let (n, m) = h.shape();
    check_shape("F", f, m, m)?;
    check_shape("Q", q, m, m)?;
    check_shape("R", r, n, n)?;
    let eye = DMatrix::<f64>::identity(m, m);
    let mut p = q.clone();
    for _ in 0..RICCATI_MAX_ITER {
        let s = h * &p * h.transpose() + r;
        let k = kalman_gain(&p, h, &s)?;
        let corrected = symmetrize(&((&eye - &k.0 * h) * &p));
        let next = symmetrize(&(f * corrected * f.transpose() + q));
        let delta = (&next - &p).norm();
        if !delta.is_finite() {
            return Err(Error::Numerical("Riccati iteration diverged".into()));
        }
        p = next;
        if delta < RICCATI_TOL {
            let s = h * &p * h.transpose() + r;
            return kalman_gain(&p, h, &s);
        }
    }
    Err(Error::Numerical(format!(
        "Riccati iteration did not converge in {RICCATI_MAX_ITER} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::make_cv_model;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn corrected(x: &[f64], p: DMatrix<f64>) -> FilterState {
        FilterState { x_hat: DVector::from_column_slice(x), p, t: 0, phase: Phase::Corrected }
    }

    #[test]
    fn predict_cv() {
        let model = make_cv_model(1.0, 0.01).unwrap();
        let s = corrected(&[0.0, 1.0], m(2, 2, &[1.0, 0.0, 0.0, 0.01]));
        let p = kf_predict(&s, model.f(), model.q()).unwrap();
        assert_eq!(p.x_hat.as_slice(), &[1.0, 1.0]);
        let expect = m(2, 2, &[1.01, 0.01, 0.01, 0.0101]);
        assert!((p.p - expect).amax() < 1e-15);
        assert_eq!(p.phase, Phase::Predicted);
        assert_eq!(p.t, 1);
    }

    #[test]
    fn predict_identity_is_noop() {
        let s = corrected(&[3.0, -1.0], m(2, 2, &[2.0, 0.3, 0.3, 1.0]));
        let p = kf_predict(&s, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(p.x_hat, s.x_hat);
        assert_eq!(p.p, s.p);
    }

    #[test]
    fn predict_requires_corrected_phase() {
        let mut s = corrected(&[0.0], m(1, 1, &[1.0]));
        s.phase = Phase::Predicted;
        assert!(kf_predict(&s, &m(1, 1, &[1.0]), &m(1, 1, &[0.0])).is_err());
        let s = corrected(&[0.0], m(1, 1, &[1.0]));
        assert!(matches!(kf_predict(&s, &DMatrix::identity(2, 2), &m(1, 1, &[0.0])), Err(Error::Dimension(_))));
    }

    #[test]
    fn innovate_cases() {
        let h = m(1, 2, &[1.0, 0.0]);
        let pred = FilterState {
            x_hat: DVector::from_column_slice(&[1.0, 1.0]),
            p: m(2, 2, &[1.01, 0.01, 0.01, 0.0101]),
            t: 1,
            phase: Phase::Predicted,
        };
        let inn = kf_innovate(&pred, &DVector::from_column_slice(&[1.0]), &h, &m(1, 1, &[0.35 * 0.35])).unwrap();
        assert_eq!(inn.y[0], 0.0);
        assert!((inn.s[(0, 0)] - 1.1325).abs() < 1e-15);

        let degenerate = FilterState { p: DMatrix::zeros(2, 2), ..pred };
        let err = kf_innovate(&degenerate, &DVector::from_column_slice(&[1.0]), &h, &m(1, 1, &[0.0]));
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn gain_cases() {
        let k = kalman_gain(&m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[2.0])).unwrap();
        assert!((k.0[(0, 0)] - 0.5).abs() < 1e-15);
        let k = kalman_gain(&DMatrix::zeros(2, 2), &m(1, 2, &[1.0, 0.0]), &m(1, 1, &[1.0])).unwrap();
        assert!(k.0.iter().all(|&v| v == 0.0));
        assert!(kalman_gain(&m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[0.0])).is_err());
    }

    #[test]
    fn update_cases() {
        let h = m(1, 1, &[1.0]);
        let pred = FilterState { x_hat: DVector::from_column_slice(&[0.0]), p: m(1, 1, &[1.0]), t: 1, phase: Phase::Predicted };
        let c = kf_update(&pred, &GainMatrix(m(1, 1, &[0.5])), &DVector::from_column_slice(&[2.0]), &h).unwrap();
        assert_eq!(c.x_hat[0], 1.0);
        assert_eq!(c.p[(0, 0)], 0.5);
        let c = kf_update(&pred, &GainMatrix(m(1, 1, &[0.0])), &DVector::from_column_slice(&[2.0]), &h).unwrap();
        assert_eq!(c.x_hat, pred.x_hat);
        assert_eq!(c.p, pred.p);
        assert_eq!(c.phase, Phase::Corrected);
    }

    #[test]
    fn joseph_cases() {
        let p = m(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let h = m(1, 2, &[1.0, 0.0]);
        let r = m(1, 1, &[0.3]);
        let j = joseph_update(&p, &GainMatrix(DMatrix::zeros(2, 1)), &h, &r).unwrap();
        assert!((j - &p).amax() < 1e-15);
        let j = joseph_update(&m(1, 1, &[4.0]), &GainMatrix(m(1, 1, &[1.0])), &m(1, 1, &[1.0]), &m(1, 1, &[0.7])).unwrap();
        assert!((j[(0, 0)] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn split_cases() {
        let model = make_cv_model(1.0, 0.01).unwrap();
        let p = m(2, 2, &[0.5, 0.1, 0.1, 0.2]);
        let k = GainMatrix(m(2, 1, &[0.3, 0.05]));
        let (_, b) = covariance_split(&p, &k, model.f(), model.h(), &DMatrix::zeros(2, 2), &DMatrix::zeros(1, 1)).unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
        let zero = GainMatrix(DMatrix::zeros(2, 1));
        let r = m(1, 1, &[0.2]);
        let (a, b) = covariance_split(&p, &zero, model.f(), model.h(), model.q(), &r).unwrap();
        assert!((a - symmetrize(&(model.f() * &p * model.f().transpose()))).amax() < 1e-15);
        assert!((b - model.q()).amax() < 1e-18);
    }

    #[test]
    fn steady_state_trivial() {
        let k = steady_state_gain(&m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[0.0]), &m(1, 1, &[1.0])).unwrap();
        assert_eq!(k.0[(0, 0)], 0.0);
    }

    #[test]
    fn steady_state_matches_iterated_filter() {
        let model = make_cv_model(1.0, 0.01).unwrap();
        let r = m(1, 1, &[0.35 * 0.35]);
        let kinf = steady_state_gain(model.f(), model.h(), model.q(), &r).unwrap();
        let mut state = FilterState::initial(&InitialLaw::cv_default());
        let mut k = GainMatrix(DMatrix::zeros(2, 1));
        for _ in 0..20_000 {
            let pred = kf_predict(&state, model.f(), model.q()).unwrap();
            let s = model.h() * &pred.p * model.h().transpose() + &r;
            k = kalman_gain(&pred.p, model.h(), &s).unwrap();
            state = kf_update(&pred, &k, &DVector::zeros(1), model.h()).unwrap();
        }
        assert!((k.0 - kinf.0).amax() < 1e-8);
    }
}
