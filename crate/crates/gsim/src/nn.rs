//! Parameter storage, initialization, MLP / GRU building blocks, the Adam
//! optimizer, and a finite-difference gradient checker.

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;
use rand::Rng;
use std::collections::BTreeMap;

/// Named parameters together with their Adam moment estimates.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
    step: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let shape = value.shape().to_vec();
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                value,
                adam_m: Tensor::zeros(&shape),
                adam_v: Tensor::zeros(&shape),
            },
        );
    }

    pub fn insert_entry(&mut self, name: &str, entry: ParamEntry) {
        self.entries.insert(name.to_string(), entry);
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        entry.value = value;
        Ok(())
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamEntry)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.numel()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// One bias-corrected Adam update. Parameters absent from `grads` are
    /// treated as having zero gradient (moments still decay).
    pub fn adam_step(
        &mut self,
        grads: &BTreeMap<String, Tensor>,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<()> {
        for name in grads.keys() {
            if !self.entries.contains_key(name) {
                return Err(Error::UnknownParam(name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (name, entry) in self.entries.iter_mut() {
            let zero;
            let g = match grads.get(name) {
                Some(g) => {
                    if !g.same_shape(&entry.value) {
                        return Err(Error::ShapeMismatch {
                            op: "adam_step",
                            lhs: entry.value.shape().to_vec(),
                            rhs: g.shape().to_vec(),
                        });
                    }
                    if !g.all_finite() {
                        return Err(Error::NonFiniteGradient(name.clone()));
                    }
                    g
                }
                None => {
                    zero = Tensor::zeros(entry.value.shape());
                    &zero
                }
            };
            for i in 0..entry.value.numel() {
                let gi = g.data()[i];
                let m = beta1 * entry.adam_m.data()[i] + (1.0 - beta1) * gi;
                let v = beta2 * entry.adam_v.data()[i] + (1.0 - beta2) * gi * gi;
                entry.adam_m.data_mut()[i] = m;
                entry.adam_v.data_mut()[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                entry.value.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Glorot-uniform sample for a [fan_in x fan_out] weight, multiplied by
/// `scale`. Deterministic given the rng state.
pub fn glorot_scaled_init(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor {
    assert_eq!(shape.len(), 2, "glorot init expects a matrix shape");
    let (fan_in, fan_out) = (shape[0], shape[1]);
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(-limit..=limit) * scale;
    }
    t
}

/// Affine layers interleaved with ReLU; no nonlinearity after the last layer.
/// `sizes = [d_in, hidden..., d_out]`; a two-element spec is a linear layer.
#[derive(Clone, Debug)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2);
        MlpSpec {
            sizes: sizes.to_vec(),
        }
    }

    pub fn linear(d_in: usize, d_out: usize) -> Self {
        MlpSpec::new(&[d_in, d_out])
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }
}

pub fn init_mlp(
    store: &mut ParamStore,
    prefix: &str,
    spec: &MlpSpec,
    weight_scale: f64,
    rng: &mut impl Rng,
) {
    for l in 0..spec.num_layers() {
        let (d_in, d_out) = (spec.sizes[l], spec.sizes[l + 1]);
        store.insert(
            &format!("{prefix}.w{l}"),
            glorot_scaled_init(&[d_in, d_out], weight_scale, rng),
        );
        store.insert(&format!("{prefix}.b{l}"), Tensor::zeros(&[1, d_out]));
    }
}

pub fn mlp_apply(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    spec: &MlpSpec,
    x: NodeId,
) -> Result<NodeId> {
    let mut h = x;
    for l in 0..spec.num_layers() {
        let w = tape.param(store, &format!("{prefix}.w{l}"))?;
        let b = tape.param(store, &format!("{prefix}.b{l}"))?;
        let z = tape.matmul(h, w)?;
        h = tape.add_row(z, b)?;
        if l + 1 < spec.num_layers() {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

pub fn init_gru(
    store: &mut ParamStore,
    prefix: &str,
    state_dim: usize,
    input_dim: usize,
    rng: &mut impl Rng,
) {
    let d_cat = state_dim + input_dim;
    for gate in ["z", "r", "h"] {
        store.insert(
            &format!("{prefix}.w{gate}"),
            glorot_scaled_init(&[d_cat, state_dim], 1.0, rng),
        );
        store.insert(&format!("{prefix}.b{gate}"), Tensor::zeros(&[1, state_dim]));
    }
}

/// Standard GRU cell on row-batched states:
///   z = sigmoid([state, input] Wz + bz)
///   r = sigmoid([state, input] Wr + br)
///   h~ = tanh([r * state, input] Wh + bh)
///   new = (1 - z) * state + z * h~
pub fn gru_apply(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    state: NodeId,
    input: NodeId,
) -> Result<NodeId> {
    let wz = tape.param(store, &format!("{prefix}.wz"))?;
    let bz = tape.param(store, &format!("{prefix}.bz"))?;
    let wr = tape.param(store, &format!("{prefix}.wr"))?;
    let br = tape.param(store, &format!("{prefix}.br"))?;
    let wh = tape.param(store, &format!("{prefix}.wh"))?;
    let bh = tape.param(store, &format!("{prefix}.bh"))?;

    let cat = tape.concat_cols(&[state, input])?;
    let z = {
        let t = tape.matmul(cat, wz)?;
        let t = tape.add_row(t, bz)?;
        tape.sigmoid(t)
    };
    let r = {
        let t = tape.matmul(cat, wr)?;
        let t = tape.add_row(t, br)?;
        tape.sigmoid(t)
    };
    let gated_state = tape.mul(r, state)?;
    let cat_r = tape.concat_cols(&[gated_state, input])?;
    let cand = {
        let t = tape.matmul(cat_r, wh)?;
        let t = tape.add_row(t, bh)?;
        tape.tanh(t)
    };
    let neg_z = tape.scale(z, -1.0);
    let one_minus_z = tape.add_scalar(neg_z, 1.0);
    let keep = tape.mul(one_minus_z, state)?;
    let update = tape.mul(z, cand)?;
    tape.add(keep, update)
}

/// Compares an analytic gradient against central finite differences over
/// every parameter scalar; returns the max relative error. The value
/// function must be a pure function of the store.
pub fn finite_diff_gradcheck<F>(
    mut value_fn: F,
    store: &ParamStore,
    analytic: &BTreeMap<String, Tensor>,
    h: f64,
) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let mut max_rel = 0.0f64;
    let mut perturbed = store.clone();
    let names: Vec<String> = store.names().cloned().collect();
    for name in &names {
        let numel = store.value(name)?.numel();
        for i in 0..numel {
            let orig = store.value(name)?.data()[i];
            let mut t = store.value(name)?.clone();
            t.data_mut()[i] = orig + h;
            perturbed.set_value(name, t.clone())?;
            let f_plus = value_fn(&perturbed)?;
            t.data_mut()[i] = orig - h;
            perturbed.set_value(name, t.clone())?;
            let f_minus = value_fn(&perturbed)?;
            t.data_mut()[i] = orig;
            perturbed.set_value(name, t)?;

            let fd = (f_plus - f_minus) / (2.0 * h);
            let an = analytic.get(name).map_or(0.0, |g| g.data()[i]);
            // the denominator floor absorbs central-difference roundoff
            // (~eps * |f| / h) where both gradients are vanishingly small
            let rel = (fd - an).abs() / (fd.abs().max(an.abs()) + 1e-6);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
