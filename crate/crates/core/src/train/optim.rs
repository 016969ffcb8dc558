//! First-order optimizers over flat parameter vectors: plain gradient
//! descent, Adagrad, and Adam.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    GradientDescent,
    Adagrad,
    Adam,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" | "gradient_descent" | "gradient-descent" => Ok(Self::GradientDescent),
            "adagrad" => Ok(Self::Adagrad),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Config(format!(
                "unknown optimizer \"{other}\" (expected gd, adagrad or adam)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GradientDescent => "gradient_descent",
            Self::Adagrad => "adagrad",
            Self::Adam => "adam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Adam first-moment decay.
    pub beta1: f64,
    /// Adam second-moment decay.
    pub beta2: f64,
    /// Denominator guard for Adam and Adagrad.
    pub epsilon: f64,
}

impl OptimizerSpec {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn gradient_descent(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::GradientDescent, learning_rate)
    }

    pub fn adagrad(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adagrad, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-parameter accumulators owned by one training run.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    GradientDescent,
    Adagrad { accumulator: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, step: u64 },
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        match kind {
            OptimizerKind::GradientDescent => Self::GradientDescent,
            OptimizerKind::Adagrad => Self::Adagrad {
                accumulator: vec![0.0; param_count],
            },
            OptimizerKind::Adam => Self::Adam {
                m: vec![0.0; param_count],
                v: vec![0.0; param_count],
                step: 0,
            },
        }
    }
}

/// Applies one update in place.
pub fn optimizer_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    spec: &OptimizerSpec,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    let lr = spec.learning_rate;
    match state {
        OptimizerState::GradientDescent => {
            for (p, g) in params.iter_mut().zip(grads) {
                *p -= lr * g;
            }
        }
        OptimizerState::Adagrad { accumulator } => {
            if accumulator.len() != params.len() {
                return Err(Error::Shape("optimizer state size mismatch".into()));
            }
            for ((p, g), acc) in params.iter_mut().zip(grads).zip(accumulator.iter_mut()) {
                *acc += g * g;
                *p -= lr * g / (acc.sqrt() + spec.epsilon);
            }
        }
        OptimizerState::Adam { m, v, step } => {
            if m.len() != params.len() {
                return Err(Error::Shape("optimizer state size mismatch".into()));
            }
            *step += 1;
            let t = *step as i32;
            let bias1 = 1.0 - spec.beta1.powi(t);
            let bias2 = 1.0 - spec.beta2.powi(t);
            for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                m[i] = spec.beta1 * m[i] + (1.0 - spec.beta1) * g;
                v[i] = spec.beta2 * v[i] + (1.0 - spec.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + spec.epsilon);
            }
        }
    }
    Ok(())
}
