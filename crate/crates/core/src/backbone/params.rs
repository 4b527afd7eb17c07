use crate::error::{Error, Result};
use crate::tensor::Real;

/// One named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered collection of every trainable tensor of one network instance.
/// Student, teacher, gradients and optimizer state all share this layout.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParameterVector<T> {
    tensors: Vec<ParamTensor<T>>,
}

impl<T: Real> ParameterVector<T> {
    pub fn new() -> Self {
        ParameterVector { tensors: Vec::new() }
    }

    pub fn from_tensors(tensors: Vec<ParamTensor<T>>) -> Result<Self> {
        for t in &tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Shape(format!(
                    "tensor {} has shape {:?} but {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
        }
        Ok(ParameterVector { tensors })
    }

    pub(crate) fn push(&mut self, name: String, shape: Vec<usize>, data: Vec<T>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(ParamTensor { name, shape, data });
        self.tensors.len() - 1
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn data(&self, i: usize) -> &[T] {
        &self.tensors[i].data
    }

    pub fn data_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.tensors[i].data
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        ParameterVector {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![T::zero(); t.data.len()],
                })
                .collect(),
        }
    }

    /// Same tensor count, names, shapes and order.
    pub fn same_structure(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn ensure_same_structure(&self, other: &Self) -> Result<()> {
        if self.same_structure(other) {
            Ok(())
        } else {
            Err(Error::Config(
                "parameter vectors differ in tensor count, names or shapes".into(),
            ))
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Mutable access to the `index`-th scalar in flattened order.
    pub fn scalar_mut(&mut self, mut index: usize) -> &mut T {
        for t in &mut self.tensors {
            if index < t.data.len() {
                return &mut t.data[index];
            }
            index -= t.data.len();
        }
        panic!("scalar index out of range");
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_structure(other));
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + *y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            for x in &mut t.data {
                *x = *x * factor;
            }
        }
    }

    pub fn cast<U: Real>(&self) -> ParameterVector<U> {
        ParameterVector {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
                })
                .collect(),
        }
    }

    /// Euclidean distance between two parameter vectors.
    pub fn distance(&self, other: &Self) -> f64 {
        self.tensors
            .iter()
            .zip(&other.tensors)
            .flat_map(|(a, b)| a.data.iter().zip(&b.data))
            .map(|(x, y)| (x.to_f64_lossy() - y.to_f64_lossy()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
