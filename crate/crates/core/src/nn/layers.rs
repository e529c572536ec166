use serde::{Deserialize, Serialize};

use super::params::{Init, ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

/// Fully connected layer `a(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn register(store: &mut ParamStore, prefix: &str, in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self::register_with(store, prefix, in_dim, out_dim, activation, Init::GlorotUniform)
    }

    pub fn register_with(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        weight_init: Init,
    ) -> Self {
        let w = store.register(format!("{prefix}.w"), out_dim, in_dim, weight_init);
        let b = store.register(format!("{prefix}.b"), out_dim, 1, Init::Zeros);
        Self { w, b, in_dim, out_dim, activation }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: NodeId) -> Result<NodeId> {
        let pre = tape.affine(self.w, Some(self.b), x)?;
        Ok(match self.activation {
            Activation::Identity => pre,
            Activation::Relu => tape.relu(pre),
            Activation::Tanh => tape.tanh(pre),
        })
    }
}

pub fn dense_forward(layer: &DenseLayer, x: NodeId, tape: &mut Tape<'_>) -> Result<NodeId> {
    layer.forward(tape, x)
}

/// Gated recurrent unit with the reset gate applied to the state inside the
/// candidate's recurrent term:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 - z) ⊙ h + z ⊙ h̃
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
}

impl GruCell {
    pub fn register(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden_dim: usize) -> Self {
        let (d, h) = (input_dim, hidden_dim);
        let mut w = |n: &str, cols: usize, init| store.register(format!("{prefix}.{n}"), h, cols, init);
        let w_z = w("w_z", d, Init::GlorotUniform);
        let w_r = w("w_r", d, Init::GlorotUniform);
        let w_h = w("w_h", d, Init::GlorotUniform);
        let u_z = w("u_z", h, Init::Orthogonal);
        let u_r = w("u_r", h, Init::Orthogonal);
        let u_h = w("u_h", h, Init::Orthogonal);
        let b_z = w("b_z", 1, Init::Zeros);
        let b_r = w("b_r", 1, Init::Zeros);
        let b_h = w("b_h", 1, Init::Zeros);
        Self { input_dim, hidden_dim, w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h }
    }

    pub fn step(&self, tape: &mut Tape<'_>, x: NodeId, h: NodeId) -> Result<NodeId> {
        let z = tape.gate(self.w_z, x, self.u_z, h, self.b_z)?;
        let z = tape.sigmoid(z);
        let r = tape.gate(self.w_r, x, self.u_r, h, self.b_r)?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h)?;
        let cand = tape.gate(self.w_h, x, self.u_h, rh, self.b_h)?;
        let cand = tape.tanh(cand);
        let keep = tape.one_minus(z);
        let kept = tape.mul(keep, h)?;
        let new = tape.mul(z, cand)?;
        tape.add(kept, new)
    }
}

pub fn gru_step(cell: &GruCell, x: NodeId, h: NodeId, tape: &mut Tape<'_>) -> Result<NodeId> {
    cell.step(tape, x, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::sigmoid;

    fn store_with_dense(act: Activation, w: &[f64], b: &[f64]) -> (ParamStore, DenseLayer) {
        let mut s = ParamStore::new();
        let l = DenseLayer::register(&mut s, "d", 2, 2, act);
        s.value_mut(l.w).copy_from_slice(w);
        s.value_mut(l.b).copy_from_slice(b);
        (s, l)
    }

    #[test]
    fn dense_cases() {
        let (s, l) = store_with_dense(Activation::Identity, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]);
        let mut t = Tape::new(&s);
        let x = t.vector(&[0.3, -4.0]);
        let y = dense_forward(&l, x, &mut t).unwrap();
        assert_eq!(t.value(y), &[0.3, -4.0]);

        let (s, l) = store_with_dense(Activation::Identity, &[0.0; 4], &[2.0, -1.0]);
        let mut t = Tape::new(&s);
        let x = t.vector(&[0.3, -4.0]);
        let y = dense_forward(&l, x, &mut t).unwrap();
        assert_eq!(t.value(y), &[2.0, -1.0]);

        let (s, l) = store_with_dense(Activation::Relu, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]);
        let mut t = Tape::new(&s);
        let x = t.vector(&[-1.0, 2.0]);
        let y = dense_forward(&l, x, &mut t).unwrap();
        assert_eq!(t.value(y), &[0.0, 2.0]);

        let bad = t.vector(&[1.0, 2.0, 3.0]);
        assert!(dense_forward(&l, bad, &mut t).is_err());
    }

    #[test]
    fn gru_zero_parameters() {
        let mut s = ParamStore::new();
        let cell = GruCell::register(&mut s, "g", 1, 1);
        let mut t = Tape::new(&s);
        let x = t.vector(&[0.7]);
        let h = t.vector(&[1.0]);
        let out = gru_step(&cell, x, h, &mut t).unwrap();
        assert_eq!(t.value(out), &[0.5]);

        let x = t.vector(&[0.0]);
        let h = t.vector(&[0.0]);
        let out = gru_step(&cell, x, h, &mut t).unwrap();
        assert_eq!(t.value(out), &[0.0]);
    }

    /// Scalar re-evaluation of the GRU equations, written out loop by loop.
    fn gru_oracle(s: &ParamStore, c: &GruCell, x: &[f64], h: &[f64]) -> Vec<f64> {
        let (d, n) = (c.input_dim, c.hidden_dim);
        let lin = |w: ParamId, u: ParamId, b: ParamId, hv: &[f64], i: usize| {
            let mut acc = s.value(b)[i];
            for (wj, xj) in s.value(w)[i * d..(i + 1) * d].iter().zip(x) {
                acc += wj * xj;
            }
            for (uj, hj) in s.value(u)[i * n..(i + 1) * n].iter().zip(hv) {
                acc += uj * hj;
            }
            acc
        };
        let z: Vec<f64> = (0..n).map(|i| sigmoid(lin(c.w_z, c.u_z, c.b_z, h, i))).collect();
        let r: Vec<f64> = (0..n).map(|i| sigmoid(lin(c.w_r, c.u_r, c.b_r, h, i))).collect();
        let rh: Vec<f64> = (0..n).map(|i| r[i] * h[i]).collect();
        (0..n)
            .map(|i| {
                let cand = lin(c.w_h, c.u_h, c.b_h, &rh, i).tanh();
                (1.0 - z[i]) * h[i] + z[i] * cand
            })
            .collect()
    }

    #[test]
    fn gru_matches_scalar_oracle() {
        let mut s = ParamStore::new();
        let cell = GruCell::register(&mut s, "g", 3, 3);
        s.initialize(11);
        for (i, v) in s.flat_mut().iter_mut().enumerate() {
            *v += 0.01 * (i as f64).sin();
        }
        let (x, h) = ([0.4, -1.2, 0.9], [0.1, -0.5, 0.7]);
        let mut t = Tape::new(&s);
        let xn = t.vector(&x);
        let hn = t.vector(&h);
        let out = gru_step(&cell, xn, hn, &mut t).unwrap();
        for (a, b) in t.value(out).iter().zip(gru_oracle(&s, &cell, &x, &h)) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }
}
