//! Analytic CNN-GRU gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdsense_core::learn::{CnnGru, CnnGruSpec};
use std::time::Instant;

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;
/// Central differences are only meaningful away from ReLU kinks; a
/// perturbation of H moves no pre-activation by more than ~10·H here.
const MIN_MARGIN: f64 = 1e-3;

fn kink_free_batch(model: &CnnGru<f64>, spec: &CnnGruSpec) -> Vec<Vec<f64>> {
    for seed in 0..2000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..spec.input_len()).map(|_| rng.gen::<f64>()).collect())
            .collect();
        if xs.iter().all(|x| model.relu_margin(x).unwrap() > MIN_MARGIN) {
            return xs;
        }
    }
    panic!("no kink-free input found");
}

#[test]
fn every_parameter_matches_central_differences() {
    let start = Instant::now();
    let spec = CnnGruSpec::tiny();
    let mut model = CnnGru::<f64>::new(&spec, 21).unwrap();
    let xs = kink_free_batch(&model, &spec);
    let batch: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let labels = [1, 4];
    // fixed dropout mask, so the loss is a deterministic function
    let seed = 99;

    let (_, grad) = model.loss_and_grad(&batch, &labels, seed).unwrap();
    let tensors = model.tensors();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for i in 0..model.num_params() {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + H;
        let (lp, _) = model.loss_and_grad(&batch, &labels, seed).unwrap();
        model.params_mut()[i] = orig - H;
        let (lm, _) = model.loss_and_grad(&batch, &labels, seed).unwrap();
        model.params_mut()[i] = orig;
        let fd = (lp - lm) / (2.0 * H);
        let rel = (grad[i] - fd).abs() / (grad[i].abs() + 1e-8);
        worst = worst.max(rel);
        if rel > TOL {
            let name = &tensors.iter().find(|t| i >= t.1 && i < t.2).unwrap().0;
            failures.push(format!("{name}[{i}]: analytic {} fd {fd} rel {rel:.2e}", grad[i]));
        }
    }
    for (name, a, b) in &tensors {
        assert!(
            grad[*a..*b].iter().any(|g| *g != 0.0),
            "{name} has an all-zero gradient"
        );
    }
    println!(
        "checked {} parameters, worst relative error {worst:.2e}, {:.1}s",
        model.num_params(),
        start.elapsed().as_secs_f64()
    );
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
