//! Co-attention against the straight-line reference implementation, plus
//! gradient checks through the full block.

mod common;

use common::{coattn_reference, FixtureRng};
use gsn_core::coattn::{coattn_forward, Activation, CoattnBound, CoattnParams};
use gsn_core::params::Binder;
use gsn_core::tensor::{grad_check, Matrix, Tape};

fn matrix_from_rows(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

fn random_params(rng: &mut FixtureRng, d: usize, activation: Activation) -> CoattnParams {
    let mut p = CoattnParams::zeros(d, activation);
    for i in 0..3 * d {
        p.proj_i_w.set(i, 0, rng.next_f64());
    }
    p.proj_i_b.set(0, 0, rng.next_f64());
    for i in 0..4 * d {
        for j in 0..d {
            p.proj_o_w.set(i, j, rng.next_f64() * 0.5);
        }
    }
    for j in 0..d {
        p.proj_o_b.set(0, j, rng.next_f64());
    }
    p
}

fn run_library(c_rows: &[Vec<f64>], s_rows: &[Vec<f64>], p: &CoattnParams) -> Matrix {
    let tape = Tape::new();
    let mut binder = Binder::new(&tape);
    let bound = p.bind(&mut binder, "p");
    let c = tape.leaf(&matrix_from_rows(c_rows));
    let s = tape.leaf(&matrix_from_rows(s_rows));
    let (o, _) = coattn_forward(&tape, &c, &s, &bound).unwrap();
    o.value()
}

fn reference(c_rows: &[Vec<f64>], s_rows: &[Vec<f64>], p: &CoattnParams) -> Matrix {
    let d = p.dim();
    let w_i: Vec<f64> = (0..3 * d).map(|i| p.proj_i_w.get(i, 0)).collect();
    let w_o: Vec<Vec<f64>> = (0..4 * d)
        .map(|i| (0..d).map(|j| p.proj_o_w.get(i, j)).collect())
        .collect();
    let b_o: Vec<f64> = (0..d).map(|j| p.proj_o_b.get(0, j)).collect();
    let out = coattn_reference(
        c_rows,
        s_rows,
        &w_i,
        p.proj_i_b.get(0, 0),
        &w_o,
        &b_o,
        p.activation == Activation::Relu,
    );
    matrix_from_rows(&out)
}

#[test]
fn matches_reference_on_fixed_small_case() {
    let mut rng = FixtureRng::new(42);
    let p = random_params(&mut rng, 2, Activation::Identity);
    let c_rows = rng.rows(2, 2);
    let s_rows = rng.rows(3, 2);
    let lib = run_library(&c_rows, &s_rows, &p);
    let reference = reference(&c_rows, &s_rows, &p);
    assert!(
        lib.max_abs_diff(&reference) < 1e-12,
        "diff {}",
        lib.max_abs_diff(&reference)
    );
}

#[test]
fn matches_reference_on_100_random_instances() {
    let mut rng = FixtureRng::new(20_240_817);
    for case in 0..100 {
        let d = rng.next_range(1, 8);
        let t_len = rng.next_range(1, 8);
        let l_len = rng.next_range(1, 8);
        let activation = if case % 2 == 0 {
            Activation::Relu
        } else {
            Activation::Identity
        };
        let p = random_params(&mut rng, d, activation);
        let c_rows = rng.rows(t_len, d);
        let s_rows = rng.rows(l_len, d);
        let lib = run_library(&c_rows, &s_rows, &p);
        let reference = reference(&c_rows, &s_rows, &p);
        let diff = lib.max_abs_diff(&reference);
        assert!(
            diff < 1e-12,
            "case {case} (T={t_len}, L={l_len}, D={d}): diff {diff}"
        );
    }
}

#[test]
fn full_block_gradients_pass_finite_differences() {
    // D=4, T=3, L=5: gradient of a scalar of O with respect to C, S, and both
    // projections.
    let mut rng = FixtureRng::new(7);
    let d = 4;
    let p = random_params(&mut rng, d, Activation::Relu);
    let c = matrix_from_rows(&rng.rows(3, d));
    let s = matrix_from_rows(&rng.rows(5, d));
    let inputs = vec![
        c,
        s,
        p.proj_i_w.clone(),
        p.proj_i_b.clone(),
        p.proj_o_w.clone(),
        p.proj_o_b.clone(),
    ];
    let report = grad_check(
        |tape, ls| {
            let bound = CoattnBound::from_tensors(
                ls[2].clone(),
                ls[3].clone(),
                ls[4].clone(),
                ls[5].clone(),
                Activation::Relu,
            );
            let (o, _) = coattn_forward(tape, &ls[0], &ls[1], &bound)?;
            Ok(o.tanh().sum_all())
        },
        &inputs,
        1e-5,
        1e-5,
    )
    .unwrap();
    assert!(
        report.passed,
        "max rel err {} at {:?}",
        report.max_rel_err, report.worst
    );
}
