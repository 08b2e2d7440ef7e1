//! Shared helpers for the integration tests.

// Every integration test target compiles this module; not all of them use
// the finite-difference helper.
#![allow(dead_code)]

use tabcf_core::autodiff::{Tape, Tensor};

/// Step size for central differences. Small enough that the O(h^2)
/// truncation error sits far below the acceptance tolerance, large enough
/// that f64 roundoff in the difference quotient does not dominate.
pub const FD_STEP: f64 = 1e-5;

/// Relative-error tolerance for analytic-vs-numeric gradient agreement.
pub const FD_TOL: f64 = 1e-4;

/// Checks a scalar-valued tape program against central finite differences.
///
/// `build` must construct the loss from scratch on the tape it is given;
/// it runs once for the analytic gradient and `2 * numel` more times for
/// the numeric one. Coordinates where both gradients are below 1e-8 in
/// magnitude are compared absolutely (a relative test on two near-zero
/// numbers is noise), everything else relatively.
pub fn fd_check<F>(name: &str, shape: Vec<usize>, values: Vec<f64>, build: F)
where
    F: Fn(&mut Tape, &Tensor) -> Tensor,
{
    let param = Tensor::param(shape.clone(), values.clone()).unwrap();
    let mut tape = Tape::new();
    let loss = build(&mut tape, &param);
    assert_eq!(loss.numel(), 1, "{name}: fd_check needs a scalar loss");
    tape.backward(&loss).unwrap();
    let analytic = param.grad().unwrap_or_else(|| panic!("{name}: no gradient"));

    let eval = |vals: &[f64]| -> f64 {
        let p = Tensor::param(shape.clone(), vals.to_vec()).unwrap();
        let mut t = Tape::new();
        build(&mut t, &p).item()
    };

    for i in 0..values.len() {
        let mut plus = values.clone();
        plus[i] += FD_STEP;
        let mut minus = values.clone();
        minus[i] -= FD_STEP;
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs());
        if denom < 1e-8 {
            assert!(
                (a - numeric).abs() < 1e-8,
                "{name}[{i}]: analytic {a} vs numeric {numeric} (absolute check)"
            );
        } else {
            let rel = (a - numeric).abs() / denom;
            assert!(
                rel <= FD_TOL,
                "{name}[{i}]: analytic {a} vs numeric {numeric}, rel err {rel:.3e}"
            );
        }
    }
}
