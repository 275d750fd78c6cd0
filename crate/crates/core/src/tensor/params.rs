use alloc::borrow::Cow;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Gradients, Real, Tape, TensorError, Var};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<T>,
}

/// One dense gradient per parameter, in store order.
pub type Grads<T> = Vec<Vec<T>>;

/// Named, ordered collection of trainable matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        values: Vec<T>,
    ) -> ParamId {
        let name = name.into();
        assert_eq!(
            values.len(),
            rows * cols,
            "parameter {name} has the wrong size"
        );
        assert!(self.by_name(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param {
            name,
            rows,
            cols,
            values,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    /// Places every parameter on `tape` as a borrowed leaf, in store order.
    pub fn bind<'p>(
        &'p self,
        tape: &mut Tape<'p, T>,
        requires_grad: bool,
    ) -> Result<Vec<Var>, TensorError> {
        self.params
            .iter()
            .map(|p| {
                tape.leaf(
                    Cow::Borrowed(p.values.as_slice()),
                    p.rows,
                    p.cols,
                    requires_grad,
                )
            })
            .collect()
    }

    /// Dense gradients for the leaves returned by [`ParamStore::bind`];
    /// parameters the loss does not touch get zeros.
    pub fn collect_grads(&self, vars: &[Var], mut grads: Gradients<T>) -> Grads<T> {
        self.params
            .iter()
            .zip(vars)
            .map(|(p, &v)| grads.take_or_zeros(v, p.values.len()))
            .collect()
    }

    /// Converts every value to another precision.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    rows: p.rows,
                    cols: p.cols,
                    values: p.values.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn bind_borrows_and_collects_in_order() {
        let mut store = ParamStore::<f64>::new();
        store.add("w", 1, 2, vec![1.0, 2.0]);
        let b = store.add("b", 1, 1, vec![0.0]);
        assert_eq!(store.by_name("b"), Some(b));
        let mut tape = Tape::new();
        let vars = store.bind(&mut tape, true).unwrap();
        let loss = tape.sum(vars[0]).unwrap();
        let grads = store.collect_grads(&vars, tape.backward(loss).unwrap());
        assert_eq!(grads, vec![vec![1.0, 1.0], vec![0.0]]);
        assert_eq!(store.scalar_count(), 3);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter")]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::<f32>::new();
        store.add("w", 1, 1, vec![0.0]);
        store.add("w", 1, 1, vec![0.0]);
    }
}
