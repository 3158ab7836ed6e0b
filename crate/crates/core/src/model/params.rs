use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    /// `out×in` weight matrix.
    Matrix,
    /// Weight vector; Glorot uses `fan_in = len`, `fan_out = 1`.
    Vector,
    /// Zero-initialized and excluded from weight decay.
    Bias,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

/// Named trainable tensors in a fixed order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    entries: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) {
        self.entries.push(Param {
            name: name.into(),
            kind,
            value,
        });
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(specs: &[(String, ParamKind, Vec<usize>)], rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        for (name, kind, shape) in specs {
            let value = match kind {
                ParamKind::Bias => Tensor::zeros(shape),
                _ => glorot_init(shape, *kind, rng),
            };
            store.push(name.clone(), *kind, value);
        }
        store
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.entries.iter().map(|p| p.value.clone()).collect()
    }

    pub fn set_tensors(&mut self, values: Vec<Tensor>) {
        for (p, v) in self.entries.iter_mut().zip(values) {
            p.value = v;
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|p| p.name.clone()).collect()
    }

    pub fn count(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    /// Places every tensor in `g`, as differentiable leaves or constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|p| if trainable { g.param(p.value.clone()) } else { g.constant(p.value.clone()) })
            .collect();
        Bound {
            names: self.entries.iter().map(|p| p.name.clone()).collect(),
            vars,
        }
    }

    /// Checks names and shapes against a layout.
    pub fn check_layout(&self, specs: &[(String, ParamKind, Vec<usize>)]) -> Result<()> {
        if specs.len() != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                self.entries.len()
            )));
        }
        for ((name, _, shape), p) in specs.iter().zip(&self.entries) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, expected {} with shape {shape:?}",
                    p.name,
                    p.value.shape(),
                    name
                )));
            }
        }
        Ok(())
    }
}

/// Graph handles of a bound [`ParamStore`], addressable by name.
pub struct Bound {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl Bound {
    /// Pairs parameter names with nodes already placed in a graph, in
    /// [`ParamStore`] order.
    pub fn new(names: Vec<String>, vars: Vec<Var>) -> Self {
        assert_eq!(names.len(), vars.len(), "one node per parameter name");
        Bound { names, vars }
    }

    pub fn var(&self, name: &str) -> Var {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("parameter {name} is not part of this model"));
        self.vars[i]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Uniform on `[−a, a]` with `a = √(6 / (fan_in + fan_out))`.
pub fn glorot_bound(shape: &[usize], kind: ParamKind) -> f64 {
    let (fan_in, fan_out) = match kind {
        ParamKind::Vector => (shape.iter().product::<usize>(), 1),
        _ => match shape {
            [n] => (*n, 1),
            [rows, cols] => (*cols, *rows),
            _ => (shape.iter().skip(1).product(), shape[0]),
        },
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn glorot_init(shape: &[usize], kind: ParamKind, rng: &mut impl Rng) -> Tensor {
    let a = glorot_bound(shape, kind);
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-a..=a)).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bound_and_range() {
        let a = glorot_bound(&[20, 10], ParamKind::Matrix);
        assert!((a - (6.0f64 / 30.0).sqrt()).abs() < 1e-15);
        assert!((a - 0.4472).abs() < 1e-4);
        let t = glorot_init(&[20, 10], ParamKind::Matrix, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(t.data().iter().all(|v| v.abs() <= a));
        assert_eq!(glorot_bound(&[1, 20], ParamKind::Vector), (6.0f64 / 21.0).sqrt());
    }

    #[test]
    fn glorot_is_seeded() {
        let a = glorot_init(&[5, 4], ParamKind::Matrix, &mut ChaCha8Rng::seed_from_u64(9));
        let b = glorot_init(&[5, 4], ParamKind::Matrix, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn glorot_mean_is_centered() {
        let n = 100_000;
        let t = glorot_init(&[n], ParamKind::Vector, &mut ChaCha8Rng::seed_from_u64(3));
        let a = glorot_bound(&[n], ParamKind::Vector);
        let mean = t.sum() / n as f64;
        // Var of U(-a, a) is a²/3.
        let sigma_mean = (a * a / 3.0 / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma_mean, "mean {mean}, 3σ {}", 3.0 * sigma_mean);
    }

    #[test]
    fn biases_start_at_zero() {
        let specs = vec![
            ("w".to_string(), ParamKind::Matrix, vec![3, 3]),
            ("b".to_string(), ParamKind::Bias, vec![1, 3]),
        ];
        let store = ParamStore::init(&specs, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(store.get("b").unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(store.count(), 12);
        store.check_layout(&specs).unwrap();
    }
}
