use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<Confusion> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut c = Confusion::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == 1, p == 1) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// F1 of the positive class; 0 when precision and recall are both 0.
pub fn f1(y_true: &[u8], y_pred: &[u8]) -> Result<f64> {
    let c = confusion(y_true, y_pred)?;
    let denom = 2 * c.tp + c.fp + c.fn_;
    if c.tp == 0 || denom == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * c.tp as f64 / denom as f64)
}
