//! The parameterized neuron.
//!
//! A recurrent unit holds a 2×3 matrix. Multiplying it with the column
//! `[x, h, 1]` and squashing each entry through `tanh` gives the forward
//! output and the unit's next state. The simple variant drops the state and
//! keeps one row `[a, b]` applied to `[x, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of evolvable values in a recurrent unit.
pub const RECURRENT_LEN: usize = 6;
/// Number of evolvable values in a simple unit.
pub const SIMPLE_LEN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Recurrent,
    Simple,
}

impl UnitKind {
    pub fn param_len(self) -> usize {
        match self {
            UnitKind::Recurrent => RECURRENT_LEN,
            UnitKind::Simple => SIMPLE_LEN,
        }
    }
}

/// Squashing function applied to a unit's forward output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    #[default]
    Tanh,
    Sigmoid,
}

/// Per-neuron parameter matrix.
///
/// Recurrent rows are `[output row, state row]`; columns are
/// `[input, state, bias]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeuronParams {
    Recurrent([[f64; 3]; 2]),
    Simple([f64; 2]),
}

impl NeuronParams {
    pub fn zeros(kind: UnitKind) -> Self {
        match kind {
            UnitKind::Recurrent => NeuronParams::Recurrent([[0.0; 3]; 2]),
            UnitKind::Simple => NeuronParams::Simple([0.0; 2]),
        }
    }

    pub fn kind(&self) -> UnitKind {
        match self {
            NeuronParams::Recurrent(_) => UnitKind::Recurrent,
            NeuronParams::Simple(_) => UnitKind::Simple,
        }
    }

    /// Reads one unit from a row-major slice of exactly `kind.param_len()` values.
    pub fn from_slice(kind: UnitKind, values: &[f64]) -> Result<Self> {
        if values.len() != kind.param_len() {
            return Err(Error::LengthMismatch {
                what: "neuron parameters",
                expected: kind.param_len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("neuron parameters"));
        }
        Ok(match kind {
            UnitKind::Recurrent => NeuronParams::Recurrent([
                [values[0], values[1], values[2]],
                [values[3], values[4], values[5]],
            ]),
            UnitKind::Simple => NeuronParams::Simple([values[0], values[1]]),
        })
    }

    /// Appends the row-major values to `out`.
    pub fn write_to(&self, out: &mut Vec<f64>) {
        match self {
            NeuronParams::Recurrent(m) => {
                out.extend_from_slice(&m[0]);
                out.extend_from_slice(&m[1]);
            }
            NeuronParams::Simple(v) => out.extend_from_slice(v),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            NeuronParams::Recurrent(m) => m.iter().flatten().all(|v| v.is_finite()),
            NeuronParams::Simple(v) => v.iter().all(|v| v.is_finite()),
        }
    }

    /// True when the state never influences the output: the state column and
    /// the state row are all zero.
    pub fn is_state_decoupled(&self) -> bool {
        match self {
            NeuronParams::Recurrent(m) => m[0][1] == 0.0 && m[1] == [0.0; 3],
            NeuronParams::Simple(_) => true,
        }
    }

    /// Runs one time step. Simple units ignore and return a zero state.
    pub fn step(&self, x: f64, h: f64, kind: OutputKind) -> Result<(f64, f64)> {
        match self {
            NeuronParams::Recurrent(m) => {
                let (raw, h_new) = activate_recurrent(m, x, h)?;
                if kind == OutputKind::Tanh {
                    Ok((raw, h_new))
                } else {
                    let pre = m[0][0] * x + m[0][1] * h + m[0][2];
                    Ok((output_nonlinearity(pre, kind)?, h_new))
                }
            }
            NeuronParams::Simple(p) => {
                if kind == OutputKind::Tanh {
                    Ok((activate_simple(p, x)?, 0.0))
                } else {
                    check(x, "neuron input")?;
                    Ok((output_nonlinearity(p[0] * x + p[1], kind)?, 0.0))
                }
            }
        }
    }
}

/// State carried by one recurrent unit between time steps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NeuronState {
    pub h: f64,
}

fn check(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `(x_out, h_new) = tanh(params · [x, h, 1])`.
pub fn activate_recurrent(params: &[[f64; 3]; 2], x: f64, h: f64) -> Result<(f64, f64)> {
    check(x, "neuron input")?;
    check(h, "neuron state")?;
    if params.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("neuron parameters"));
    }
    Ok(recurrent_unchecked(params, x, h))
}

#[inline]
pub(crate) fn recurrent_unchecked(params: &[[f64; 3]; 2], x: f64, h: f64) -> (f64, f64) {
    let out = params[0][0] * x + params[0][1] * h + params[0][2];
    let state = params[1][0] * x + params[1][1] * h + params[1][2];
    (out.tanh(), state.tanh())
}

/// `tanh(a·x + b)` for `params = [a, b]`.
pub fn activate_simple(params: &[f64; 2], x: f64) -> Result<f64> {
    check(x, "neuron input")?;
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("neuron parameters"));
    }
    Ok(simple_unchecked(params, x))
}

#[inline]
pub(crate) fn simple_unchecked(params: &[f64; 2], x: f64) -> f64 {
    (params[0] * x + params[1]).tanh()
}

pub fn output_nonlinearity(raw: f64, kind: OutputKind) -> Result<f64> {
    check(raw, "output pre-activation")?;
    Ok(squash(raw, kind))
}

#[inline]
pub(crate) fn squash(raw: f64, kind: OutputKind) -> f64 {
    match kind {
        OutputKind::Tanh => raw.tanh(),
        OutputKind::Sigmoid => 1.0 / (1.0 + (-raw).exp()),
    }
}
