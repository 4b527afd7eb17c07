use serde::{Deserialize, Serialize};

use crate::tensor::{FeatureMap, Real};

const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Elu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Elu => "elu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "leaky_relu" => Some(Activation::LeakyRelu),
            "elu" => Some(Activation::Elu),
            _ => None,
        }
    }

    fn apply<T: Real>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::LeakyRelu => {
                if v > T::zero() {
                    v
                } else {
                    v * T::of(LEAKY_SLOPE)
                }
            }
            Activation::Elu => {
                if v > T::zero() {
                    v
                } else {
                    v.exp_m1()
                }
            }
        }
    }

    fn derivative<T: Real>(self, v: T) -> T {
        match self {
            Activation::Relu => {
                if v > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu => {
                if v > T::zero() {
                    T::one()
                } else {
                    T::of(LEAKY_SLOPE)
                }
            }
            Activation::Elu => {
                if v > T::zero() {
                    T::one()
                } else {
                    v.exp()
                }
            }
        }
    }

    pub fn forward<T: Real>(self, x: &FeatureMap<T>) -> FeatureMap<T> {
        let data = x.data().iter().map(|&v| self.apply(v)).collect();
        FeatureMap::from_vec(x.dims(), x.channels(), data)
    }

    /// Gradient with respect to the pre-activation `x`.
    pub fn backward<T: Real>(self, x: &FeatureMap<T>, dy: &FeatureMap<T>) -> FeatureMap<T> {
        let data = x
            .data()
            .iter()
            .zip(dy.data())
            .map(|(&v, &g)| g * self.derivative(v))
            .collect();
        FeatureMap::from_vec(x.dims(), x.channels(), data)
    }
}
