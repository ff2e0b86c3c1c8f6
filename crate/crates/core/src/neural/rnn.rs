//! Recurrent cells with backpropagation through time.
//!
//! Vanilla: `h_t = tanh(U x_t + W h_{t-1} + b)`. LSTM: gates `i, f, g, o`
//! stacked in that order, `c_t = f c_{t-1} + i g`, `h_t = o tanh(c_t)`.
//! Both start from `h_0 = 0` (and `c_0 = 0`).

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    Vanilla,
    Lstm,
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" | "rnn" => Ok(CellKind::Vanilla),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::Config(format!("unknown cell type {other:?}"))),
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellKind::Vanilla => "vanilla",
            CellKind::Lstm => "lstm",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RnnCell {
    pub kind: CellKind,
    pub input: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
    hidden: usize,
}

/// Forward intermediates kept for the backward sweep.
#[derive(Clone, Debug)]
pub struct RnnCache {
    x: Array2<f64>,
    /// Rows `0..=T`, row 0 is `h_0`.
    hidden: Array2<f64>,
    /// LSTM cell states, rows `0..=T`.
    cell: Array2<f64>,
    /// LSTM activated gates, `T × 4h`.
    gates: Array2<f64>,
}

impl RnnCache {
    /// Hidden states `h_1..h_T`.
    pub fn outputs(&self) -> ArrayView2<'_, f64> {
        self.hidden.slice(s![1.., ..])
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl RnnCell {
    pub(crate) fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        kind: CellKind,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let rows = match kind {
            CellKind::Vanilla => hidden,
            CellKind::Lstm => 4 * hidden,
        };
        RnnCell {
            kind,
            input: store.weight(&format!("{name}.input"), rows, inputs, rng),
            recurrent: store.weight(&format!("{name}.recurrent"), rows, hidden, rng),
            bias: store.bias(&format!("{name}.bias"), rows),
            hidden,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn forward(&self, params: &ParamStore, x: ArrayView2<'_, f64>) -> Result<RnnCache> {
        let u = params.get(self.input);
        if x.ncols() != u.ncols() {
            return Err(Error::Dimension(format!(
                "recurrent input width {} but cell expects {}",
                x.ncols(),
                u.ncols()
            )));
        }
        let w = params.get(self.recurrent);
        let steps = x.nrows();
        let h = self.hidden;
        let mut pre = x.dot(&u.t());
        pre += &params.get(self.bias).row(0);
        let mut hidden = Array2::zeros((steps + 1, h));
        match self.kind {
            CellKind::Vanilla => {
                for t in 0..steps {
                    let mut a = pre.row(t).to_owned();
                    a += &w.dot(&hidden.row(t));
                    hidden.row_mut(t + 1).assign(&a.mapv(f64::tanh));
                }
                Ok(RnnCache {
                    x: x.to_owned(),
                    hidden,
                    cell: Array2::zeros((0, 0)),
                    gates: Array2::zeros((0, 0)),
                })
            }
            CellKind::Lstm => {
                let mut cell = Array2::<f64>::zeros((steps + 1, h));
                let mut gates = Array2::zeros((steps, 4 * h));
                for t in 0..steps {
                    let mut a = pre.row(t).to_owned();
                    a += &w.dot(&hidden.row(t));
                    for j in 0..h {
                        let i_g = sigmoid(a[j]);
                        let f_g = sigmoid(a[h + j]);
                        let g_g = a[2 * h + j].tanh();
                        let o_g = sigmoid(a[3 * h + j]);
                        let c = f_g * cell[[t, j]] + i_g * g_g;
                        cell[[t + 1, j]] = c;
                        hidden[[t + 1, j]] = o_g * c.tanh();
                        gates[[t, j]] = i_g;
                        gates[[t, h + j]] = f_g;
                        gates[[t, 2 * h + j]] = g_g;
                        gates[[t, 3 * h + j]] = o_g;
                    }
                }
                Ok(RnnCache {
                    x: x.to_owned(),
                    hidden,
                    cell,
                    gates,
                })
            }
        }
    }

    /// Backpropagation through time given `∂F/∂h_t` for every step.
    /// Returns `∂F/∂x`.
    pub fn backward(
        &self,
        params: &ParamStore,
        cache: &RnnCache,
        grad_hidden: ArrayView2<'_, f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        let u = params.get(self.input);
        let w = params.get(self.recurrent);
        let steps = cache.x.nrows();
        let h = self.hidden;
        let rows = u.nrows();
        // pre-activation gradients for every step, then batched products
        let mut grad_pre = Array2::zeros((steps, rows));
        let mut carry_h = Array1::<f64>::zeros(h);
        let mut carry_c = Array1::<f64>::zeros(h);
        for t in (0..steps).rev() {
            let dh = &grad_hidden.row(t) + &carry_h;
            match self.kind {
                CellKind::Vanilla => {
                    for j in 0..h {
                        let ht = cache.hidden[[t + 1, j]];
                        grad_pre[[t, j]] = dh[j] * (1.0 - ht * ht);
                    }
                }
                CellKind::Lstm => {
                    for j in 0..h {
                        let i_g = cache.gates[[t, j]];
                        let f_g = cache.gates[[t, h + j]];
                        let g_g = cache.gates[[t, 2 * h + j]];
                        let o_g = cache.gates[[t, 3 * h + j]];
                        let tc = cache.cell[[t + 1, j]].tanh();
                        let d_o = dh[j] * tc;
                        let dc = dh[j] * o_g * (1.0 - tc * tc) + carry_c[j];
                        grad_pre[[t, j]] = dc * g_g * i_g * (1.0 - i_g);
                        grad_pre[[t, h + j]] = dc * cache.cell[[t, j]] * f_g * (1.0 - f_g);
                        grad_pre[[t, 2 * h + j]] = dc * i_g * (1.0 - g_g * g_g);
                        grad_pre[[t, 3 * h + j]] = d_o * o_g * (1.0 - o_g);
                        carry_c[j] = dc * f_g;
                    }
                }
            }
            carry_h = grad_pre.row(t).dot(w);
        }
        let prev_hidden = cache.hidden.slice(s![..steps, ..]);
        *grads.get_mut(self.input) += &grad_pre.t().dot(&cache.x);
        *grads.get_mut(self.recurrent) += &grad_pre.t().dot(&prev_hidden);
        let mut gb = grads.get_mut(self.bias).row_mut(0);
        gb += &grad_pre.sum_axis(Axis(0));
        grad_pre.dot(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell(kind: CellKind, inputs: usize, hidden: usize) -> (ParamStore, RnnCell) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = RnnCell::new(&mut store, "rnn", kind, inputs, hidden, &mut rng);
        (store, c)
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        for kind in [CellKind::Vanilla, CellKind::Lstm] {
            let (mut store, c) = cell(kind, 2, 3);
            for v in store.values_mut() {
                v.fill(0.0);
            }
            let cache = c
                .forward(&store, array![[1.0, 2.0], [3.0, -1.0]].view())
                .unwrap();
            assert!(cache.outputs().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_step_is_tanh_of_input() {
        let (mut store, c) = cell(CellKind::Vanilla, 2, 2);
        store.values_mut()[0] = Array2::eye(2);
        store.values_mut()[1] = array![[3.0, -1.0], [0.5, 2.0]];
        let cache = c.forward(&store, array![[0.3, -0.8]].view()).unwrap();
        assert_eq!(cache.outputs(), array![[0.3f64.tanh(), (-0.8f64).tanh()]]);
    }

    #[test]
    fn two_steps_by_hand() {
        let (mut store, c) = cell(CellKind::Vanilla, 2, 2);
        store.values_mut()[0] = array![[0.5, -1.0], [2.0, 0.25]];
        store.values_mut()[1] = array![[0.1, 0.2], [-0.3, 0.4]];
        store.values_mut()[2] = array![[0.05, -0.05]];
        let x = array![[1.0, 2.0], [-1.0, 0.5]];
        let cache = c.forward(&store, x.view()).unwrap();
        let h1 = [(0.5 - 2.0 + 0.05f64).tanh(), (2.0 + 0.5 - 0.05f64).tanh()];
        let h2 = [
            (-0.5 - 0.5 + 0.05 + 0.1 * h1[0] + 0.2 * h1[1]).tanh(),
            (-2.0 + 0.125 - 0.05 - 0.3 * h1[0] + 0.4 * h1[1]).tanh(),
        ];
        let out = cache.outputs();
        for (got, want) in out.iter().zip(h1.iter().chain(&h2)) {
            assert!((got - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn input_width_is_checked() {
        let (store, c) = cell(CellKind::Lstm, 3, 2);
        assert!(c.forward(&store, Array2::zeros((2, 2)).view()).is_err());
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for kind in [CellKind::Vanilla, CellKind::Lstm] {
            let (store, c) = cell(kind, 2, 3);
            let x = array![[0.2, -0.4], [0.9, 0.1], [-0.5, 0.7], [0.3, 0.3]];
            let weights = Array2::from_shape_fn((4, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
            let objective = |store: &ParamStore, x: &Array2<f64>| -> f64 {
                (&c.forward(store, x.view()).unwrap().outputs() * &weights).sum()
            };
            let cache = c.forward(&store, x.view()).unwrap();
            let mut grads = store.zeros_like();
            let gx = c.backward(&store, &cache, weights.view(), &mut grads);
            let h = 1e-6;
            for p in 0..store.len() {
                for idx in 0..store.values()[p].len() {
                    let mut plus = store.clone();
                    plus.values_mut()[p].as_slice_mut().unwrap()[idx] += h;
                    let mut minus = store.clone();
                    minus.values_mut()[p].as_slice_mut().unwrap()[idx] -= h;
                    let fd = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                    let an = grads.blocks()[p].as_slice().unwrap()[idx];
                    assert!(
                        (fd - an).abs() < 1e-7,
                        "{kind:?} param {p}[{idx}]: {fd} vs {an}"
                    );
                }
            }
            for i in 0..x.len() {
                let mut plus = x.clone();
                plus.as_slice_mut().unwrap()[i] += h;
                let mut minus = x.clone();
                minus.as_slice_mut().unwrap()[i] -= h;
                let fd = (objective(&store, &plus) - objective(&store, &minus)) / (2.0 * h);
                assert!((fd - gx.as_slice().unwrap()[i]).abs() < 1e-7);
            }
        }
    }
}
