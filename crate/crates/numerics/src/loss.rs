//! Huber regression loss.

use crate::tape::Var;

/// Piecewise Huber function: quadratic inside `|e| <= delta`, linear outside.
pub fn huber_value(e: f64, delta: f64) -> f64 {
    let a = e.abs();
    if a <= delta {
        0.5 * e * e
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Mean Huber loss over the horizon. `delta` must be positive.
pub fn huber_loss<'t>(pred: Var<'t>, target: Var<'t>, delta: f64) -> Var<'t> {
    assert!(delta > 0.0, "huber delta must be positive");
    pred.huber(target, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Tape, Tensor};

    #[test]
    fn reference_values() {
        assert_eq!(huber_value(0.0, 1.0), 0.0);
        assert_eq!(huber_value(0.5, 1.0), 0.125);
        assert_eq!(huber_value(2.0, 1.0), 1.5);
        assert_eq!(huber_value(-2.0, 1.0), 1.5);
    }

    #[test]
    fn mean_over_horizon() {
        let tape = Tape::new();
        let p = tape.leaf(Tensor::row(&[0.5, 2.0, 0.0]));
        let t = tape.constant(Tensor::row(&[0.0; 3]));
        let l = huber_loss(p, t, 1.0);
        assert_eq!(l.item(), (0.125 + 1.5) / 3.0);
        let g = tape.backward(l).unwrap();
        // clipped-linear gradient divided by the horizon
        assert_eq!(g.get(p).unwrap().data(), &[0.5 / 3.0, 1.0 / 3.0, 0.0]);
    }
}
