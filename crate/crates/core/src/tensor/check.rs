//! Central finite-difference gradient checking.

use super::{Matrix, Tape, Tensor, TensorError};

/// Relative error uses max(|analytic|, |numeric|, REL_FLOOR) as denominator;
/// the floor keeps near-zero true derivatives (dead relu units, saturated
/// softmax entries) from turning rounding noise into spurious failures.
const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, row, col) of the worst element, if any were checked.
    pub worst: Option<(usize, usize, usize)>,
    pub elements: usize,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    fn empty(tol: f64) -> Self {
        GradCheckReport {
            max_rel_err: 0.0,
            worst: None,
            elements: 0,
            tol,
            passed: true,
        }
    }
}

/// Compare supplied analytic gradients against central differences
/// (f(x+h) - f(x-h)) / 2h of a scalar-valued function, element by element.
pub fn compare_to_fd<F>(
    f: F,
    inputs: &[Matrix],
    analytic: &[Matrix],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&[Matrix]) -> Result<f64, TensorError>,
{
    assert!(h > 0.0, "step size must be positive");
    assert_eq!(inputs.len(), analytic.len(), "one gradient per input");
    let mut report = GradCheckReport::empty(tol);
    let mut work: Vec<Matrix> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for r in 0..input.rows() {
            for c in 0..input.cols() {
                let x0 = input.get(r, c);
                work[k].set(r, c, x0 + h);
                let fp = f(&work)?;
                work[k].set(r, c, x0 - h);
                let fm = f(&work)?;
                work[k].set(r, c, x0);
                if !fp.is_finite() || !fm.is_finite() {
                    return Err(TensorError::NonFinite {
                        op: "grad_check",
                        input: k,
                        row: r,
                        col: c,
                    });
                }
                let numeric = (fp - fm) / (2.0 * h);
                let a = analytic[k].get(r, c);
                if !a.is_finite() {
                    return Err(TensorError::NonFinite {
                        op: "grad_check",
                        input: k,
                        row: r,
                        col: c,
                    });
                }
                let denom = a.abs().max(numeric.abs()).max(REL_FLOOR);
                let rel = (a - numeric).abs() / denom;
                report.elements += 1;
                if rel > report.max_rel_err {
                    report.max_rel_err = rel;
                    report.worst = Some((k, r, c));
                }
            }
        }
    }
    report.passed = report.max_rel_err < tol;
    Ok(report)
}

/// Check the tape's analytic gradients of a scalar-valued function against
/// central finite differences. `f` receives one leaf tensor per input and
/// must return a 1x1 output.
pub fn grad_check<F>(
    f: F,
    inputs: &[Matrix],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor, TensorError>,
{
    // Analytic pass.
    let tape = Tape::new();
    let leaves: Vec<Tensor> = inputs.iter().map(|m| tape.leaf(m)).collect();
    let out = f(&tape, &leaves)?;
    let _ = out.scalar()?;
    if !out.is_finite() {
        return Err(TensorError::NonFinite {
            op: "grad_check",
            input: 0,
            row: 0,
            col: 0,
        });
    }
    tape.backward(&out)?;
    let analytic: Vec<Matrix> = leaves.iter().map(|l| l.grad()).collect();

    compare_to_fd(
        |ms: &[Matrix]| {
            let t = Tape::new();
            let ls: Vec<Tensor> = ms.iter().map(|m| t.leaf(m)).collect();
            f(&t, &ls)?.scalar()
        },
        inputs,
        &analytic,
        h,
        tol,
    )
}
