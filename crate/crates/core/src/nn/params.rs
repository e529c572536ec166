use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Initialization law attached to a parameter at registration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
    GlorotUniform,
    /// Square orthogonal matrix (Q factor of a Gaussian matrix).
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub init: Init,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named row-major parameter arrays stored back to back, in registration
/// order, with a gradient buffer of the same layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    infos: Vec<ParamInfo>,
    values: Vec<f64>,
    grads: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        if init == Init::Orthogonal {
            assert_eq!(rows, cols, "orthogonal init needs a square matrix");
        }
        let offset = self.values.len();
        self.values.resize(offset + rows * cols, 0.0);
        self.grads.resize(offset + rows * cols, 0.0);
        self.infos.push(ParamInfo { name, rows, cols, offset, init });
        ParamId(self.infos.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.infos.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn infos(&self) -> &[ParamInfo] {
        &self.infos
    }

    pub fn info(&self, id: ParamId) -> &ParamInfo {
        &self.infos[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        let p = &self.infos[id.0];
        &self.values[p.offset..p.offset + p.len()]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        let p = &self.infos[id.0];
        &mut self.values[p.offset..p.offset + p.len()]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        let p = &self.infos[id.0];
        &self.grads[p.offset..p.offset + p.len()]
    }

    /// All parameter values in the deterministic flat ordering.
    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::dim(format!(
                "flat parameter vector has {} entries, store has {}",
                values.len(),
                self.values.len()
            )));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn accumulate_grad(&mut self, grads: &[f64]) {
        assert_eq!(grads.len(), self.grads.len());
        for (acc, g) in self.grads.iter_mut().zip(grads) {
            *acc += g;
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Fills every parameter according to its [`Init`], in registration
    /// order, from a single seeded stream.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for i in 0..self.infos.len() {
            let info = self.infos[i].clone();
            let dst = &mut self.values[info.offset..info.offset + info.len()];
            match info.init {
                Init::Zeros => dst.iter_mut().for_each(|v| *v = 0.0),
                Init::GlorotUniform => {
                    let a = (6.0 / (info.rows + info.cols) as f64).sqrt();
                    dst.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
                }
                Init::Orthogonal => {
                    let n = info.rows;
                    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
                    let qr = g.qr();
                    let (mut q, r) = (qr.q(), qr.r());
                    for j in 0..n {
                        if r[(j, j)] < 0.0 {
                            q.column_mut(j).neg_mut();
                        }
                    }
                    for i in 0..n {
                        for j in 0..n {
                            dst[i * n + j] = q[(i, j)];
                        }
                    }
                }
            }
        }
        self.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_registration_order() {
        let mut s = ParamStore::new();
        let a = s.register("a", 2, 3, Init::Zeros);
        let b = s.register("b", 4, 1, Init::Zeros);
        assert_eq!(s.info(a).offset, 0);
        assert_eq!(s.info(b).offset, 6);
        assert_eq!(s.len(), 10);
        assert_eq!(s.find("b"), Some(b));
        s.value_mut(b)[3] = 2.0;
        assert_eq!(s.flat()[9], 2.0);
    }

    #[test]
    fn orthogonal_init() {
        let mut s = ParamStore::new();
        let u = s.register("u", 8, 8, Init::Orthogonal);
        s.initialize(3);
        let m = DMatrix::from_row_slice(8, 8, s.value(u));
        assert!((m.transpose() * &m - DMatrix::identity(8, 8)).amax() < 1e-10);
    }
}
