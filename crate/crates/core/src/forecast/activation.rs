use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Activation applied to the candidate and to the cell state on output.
/// Gates always use the logistic sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    /// Normalises across the hidden-unit vector.
    Softmax,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Softmax,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softmax => "softmax",
        }
    }

    /// `out = act(input)`, elementwise or across the vector for softmax.
    pub fn apply(self, input: &[f64], out: &mut [f64]) {
        match self {
            Activation::Relu => {
                for (o, x) in out.iter_mut().zip(input) {
                    *o = x.max(0.0);
                }
            }
            Activation::Sigmoid => {
                for (o, x) in out.iter_mut().zip(input) {
                    *o = sigmoid(*x);
                }
            }
            Activation::Tanh => {
                for (o, x) in out.iter_mut().zip(input) {
                    *o = x.tanh();
                }
            }
            Activation::Softmax => {
                let max = input.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (o, x) in out.iter_mut().zip(input) {
                    *o = (x - max).exp();
                    sum += *o;
                }
                for o in out.iter_mut() {
                    *o /= sum;
                }
            }
        }
    }

    /// Given `out = act(input)` and `dL/dout`, accumulates `dL/dinput` into
    /// `grad_in`.
    pub fn backward(self, out: &[f64], grad_out: &[f64], grad_in: &mut [f64]) {
        match self {
            Activation::Relu => {
                for ((gi, o), go) in grad_in.iter_mut().zip(out).zip(grad_out) {
                    if *o > 0.0 {
                        *gi += go;
                    }
                }
            }
            Activation::Sigmoid => {
                for ((gi, o), go) in grad_in.iter_mut().zip(out).zip(grad_out) {
                    *gi += go * o * (1.0 - o);
                }
            }
            Activation::Tanh => {
                for ((gi, o), go) in grad_in.iter_mut().zip(out).zip(grad_out) {
                    *gi += go * (1.0 - o * o);
                }
            }
            Activation::Softmax => {
                let dot: f64 = out.iter().zip(grad_out).map(|(o, g)| o * g).sum();
                for ((gi, o), go) in grad_in.iter_mut().zip(out).zip(grad_out) {
                    *gi += o * (go - dot);
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activation::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown activation `{s}` (relu, sigmoid, tanh, softmax)"))
    }
}
