//! Central finite-difference checks for every tape primitive.

mod support;

use foraging::tensor::{Tape, Tensor, Var};
use support::fd::{check, sweep, Case, Prim, CONFIGS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn assert_sweep<R: foraging::tensor::Real>(eps: f64, tol: f64) {
    for (prim, worst) in sweep::<R>(eps, 0x5eed) {
        println!("{prim:?} {}: worst rel err {worst:.2e} over {CONFIGS} configs", R::DTYPE);
        assert!(worst <= tol, "{prim:?} ({}): rel err {worst:e} > {tol:e}", R::DTYPE);
    }
}

#[test]
fn primitives_match_finite_differences_f64() {
    assert_sweep::<f64>(1e-5, 1e-6);
}

#[test]
fn primitives_match_finite_differences_f32() {
    assert_sweep::<f32>(1e-4, 1e-3);
}

#[test]
fn lstm_sum_of_hidden_matches_finite_differences() {
    // Loss is Σh' with every weight random; ε = 1e-4 in f64.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..CONFIGS {
        let mut case = Case::random(Prim::Lstm, &mut rng);
        let hidden = case.inputs[1].shape()[1];
        let rows = case.inputs[0].shape()[0];
        case.weights = (0..rows)
            .flat_map(|_| std::iter::repeat_n(1.0, hidden).chain(std::iter::repeat_n(0.0, hidden)))
            .collect();
        let err = check::<f64>(&case, 1e-4);
        assert!(err <= 1e-3, "rel err {err:e}");
    }
}

#[test]
fn independent_tapes_accumulate_additively() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let case = Case::random(Prim::Linear, &mut rng);
    let other = Case {
        weights: case.weights.iter().map(|w| -0.5 * w + 0.25).collect(),
        ..case.clone()
    };
    let (_, g1) = case.loss_and_grads::<f64>(&case.inputs);
    let (_, g2) = other.loss_and_grads::<f64>(&case.inputs);

    let mut params: Vec<Tensor<f64>> = case.inputs.iter().map(|t| t.clone().trainable()).collect();
    for c in [&case, &other] {
        let mut tape = Tape::new();
        let frozen = params.clone();
        let vars: Vec<Var> = frozen.iter().enumerate().map(|(i, t)| tape.param(i, t)).collect();
        let out = c.apply(&mut tape, &vars);
        let (r, cols) = tape.dims(out);
        let w = tape.constant(r, cols, c.weights.clone()).unwrap();
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod);
        tape.backward(loss).unwrap().accumulate_into(&mut params).unwrap();
    }
    for (i, p) in params.iter().enumerate() {
        for (j, g) in p.grad().unwrap().iter().enumerate() {
            assert!((g - (g1[i][j] + g2[i][j])).abs() < 1e-12);
        }
    }
}
