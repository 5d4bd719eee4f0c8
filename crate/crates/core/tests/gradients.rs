//! Analytic gradients against central finite differences.

use std::collections::BTreeSet;

use pfsl_core::nn::{backward, cross_entropy, forward, init_params, LayerKind, LayerSpec, ParamSet};
use pfsl_core::rng;
use pfsl_core::Tensor;
use rand::Rng;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-4;

/// Scalar probe: a fixed random projection of the output, so the output
/// gradient is the projection itself.
fn probe(y: &Tensor, r: &[f64]) -> f64 {
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn kind_name(spec: &LayerSpec) -> &'static str {
    match spec.kind {
        LayerKind::Dense { .. } => "dense",
        LayerKind::Relu => "relu",
        LayerKind::Conv2d { .. } => "conv2d",
        LayerKind::Flatten => "flatten",
    }
}

/// Up to four layers over either an image or a vector input.
fn random_stack(r: &mut impl Rng, image: bool) -> (Vec<LayerSpec>, Vec<usize>) {
    let depth = r.random_range(1..=4);
    let input = if image {
        let size = r.random_range(3..=5);
        vec![r.random_range(1..=2), size, size]
    } else {
        vec![r.random_range(1..=6)]
    };
    let mut shape = input.clone();
    let mut specs = Vec::new();
    for i in 0..depth {
        let spec = if shape.len() == 3 {
            match r.random_range(0..3) {
                0 => {
                    let kernel = r.random_range(1..=shape[1].min(3));
                    LayerSpec::conv2d(shape[0], r.random_range(1..=3), kernel, r.random_range(1..=2), r.random_range(0..=1))
                }
                1 => LayerSpec::relu(),
                _ => LayerSpec::flatten(),
            }
        } else if r.random_bool(0.6) {
            LayerSpec::dense(shape[0], r.random_range(1..=5))
        } else {
            LayerSpec::relu()
        };
        shape = spec.output_shape(i, &shape).unwrap();
        specs.push(spec);
    }
    (specs, input)
}

fn random_tensor(r: &mut impl Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Worst relative error over every parameter and input entry.
fn check_stack(specs: &[LayerSpec], params: &ParamSet, x: &Tensor, r: &mut impl Rng) -> f64 {
    let (y, cache) = forward(specs, params, x).unwrap();
    let proj: Vec<f64> = (0..y.len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let grad_out = Tensor::new(y.shape().to_vec(), proj.clone()).unwrap();
    let (grads, grad_in) = backward(specs, params, &cache, &grad_out).unwrap();
    let f = |p: &ParamSet, x: &Tensor| probe(&forward(specs, p, x).unwrap().0, &proj);

    let mut worst: f64 = 0.0;
    for l in 0..specs.len() {
        for t in 0..params[l].len() {
            for k in 0..params[l][t].len() {
                let mut hi = params.clone();
                hi.layers_mut()[l][t].data_mut()[k] += STEP;
                let mut lo = params.clone();
                lo.layers_mut()[l][t].data_mut()[k] -= STEP;
                let numeric = (f(&hi, x) - f(&lo, x)) / (2.0 * STEP);
                worst = worst.max(rel_err(grads[l][t].data()[k], numeric));
            }
        }
    }
    for k in 0..x.len() {
        let mut hi = x.clone();
        hi.data_mut()[k] += STEP;
        let mut lo = x.clone();
        lo.data_mut()[k] -= STEP;
        let numeric = (f(params, &hi) - f(params, &lo)) / (2.0 * STEP);
        worst = worst.max(rel_err(grad_in.data()[k], numeric));
    }
    worst
}

#[test]
fn random_stacks_match_finite_differences() {
    let mut r = rng::stream(11, "grad-check", 0);
    let mut kinds = BTreeSet::new();
    for case in 0..20 {
        let (specs, input) = random_stack(&mut r, case % 2 == 0);
        kinds.extend(specs.iter().map(kind_name));
        let params = init_params(&specs, case as u64).unwrap();
        let mut shape = vec![3];
        shape.extend(&input);
        let x = random_tensor(&mut r, shape);
        let worst = check_stack(&specs, &params, &x, &mut r);
        assert!(worst < TOL, "case {case} {specs:?}: rel err {worst:e}");
    }
    assert_eq!(kinds.len(), 4, "every layer kind exercised: {kinds:?}");
}

#[test]
fn each_kind_alone_matches_finite_differences() {
    let mut r = rng::stream(12, "grad-check", 0);
    let cases: Vec<(Vec<LayerSpec>, Vec<usize>)> = vec![
        (vec![LayerSpec::dense(4, 3)], vec![4]),
        (vec![LayerSpec::relu()], vec![5]),
        (vec![LayerSpec::conv2d(2, 3, 3, 1, 1)], vec![2, 5, 5]),
        (vec![LayerSpec::conv2d(1, 2, 2, 2, 0)], vec![1, 4, 4]),
        (vec![LayerSpec::conv2d(2, 2, 3, 2, 1)], vec![2, 5, 5]),
        (vec![LayerSpec::flatten()], vec![2, 3, 3]),
    ];
    for (i, (specs, input)) in cases.iter().enumerate() {
        let params = init_params(specs, i as u64).unwrap();
        let mut shape = vec![2];
        shape.extend(input);
        let x = random_tensor(&mut r, shape);
        let worst = check_stack(specs, &params, &x, &mut r);
        assert!(worst < TOL, "{specs:?}: rel err {worst:e}");
    }
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut r = rng::stream(13, "grad-check", 0);
    let logits = random_tensor(&mut r, vec![4, 5]);
    let labels = vec![0, 4, 2, 2];
    let (_, grad) = cross_entropy(&logits, &labels).unwrap();
    for k in 0..logits.len() {
        let mut hi = logits.clone();
        hi.data_mut()[k] += STEP;
        let mut lo = logits.clone();
        lo.data_mut()[k] -= STEP;
        let numeric =
            (cross_entropy(&hi, &labels).unwrap().0 - cross_entropy(&lo, &labels).unwrap().0) / (2.0 * STEP);
        assert!(rel_err(grad.data()[k], numeric) < TOL, "logit {k}");
    }
}

#[test]
fn frozen_layers_still_pass_gradient_through() {
    let specs = vec![LayerSpec::dense(3, 4).frozen(true), LayerSpec::relu(), LayerSpec::dense(4, 2)];
    let params = init_params(&specs, 5).unwrap();
    let mut r = rng::stream(14, "grad-check", 0);
    let x = random_tensor(&mut r, vec![2, 3]);
    let (y, cache) = forward(&specs, &params, &x).unwrap();
    let (grads, grad_in) = backward(&specs, &params, &cache, &Tensor::filled(y.shape().to_vec(), 1.0)).unwrap();
    assert!(grads[0].is_empty());
    assert_eq!(grads[2].len(), 2);
    assert!(grad_in.data().iter().any(|&g| g != 0.0));
}
