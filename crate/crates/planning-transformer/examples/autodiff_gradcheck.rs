//! The tensor engine in isolation: build a small differentiable graph,
//! train a quadratic to its minimum with Adam, and verify a matmul-softmax
//! chain against central finite differences.

use planning_transformer::tensor::adam::AdamState;
use planning_transformer::tensor::gradcheck::GradCheck;
use planning_transformer::tensor::graph::Graph;
use planning_transformer::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    // d(loss)/dx for loss = sum(softmax(x W) * probe), checked numerically.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::randn(vec![3, 4], 0.8, &mut rng);
    let w = Tensor::randn(vec![4, 4], 0.8, &mut rng);
    let probe = Tensor::randn(vec![12], 1.0, &mut rng);
    let result = GradCheck::default().check(&[x, w], |g, vars| {
        let h = g.matmul(vars[0], vars[1]);
        let s = g.softmax_rows(h);
        g.weighted_sum(s, &probe)
    });
    println!("matmul->softmax gradient vs finite differences: {result:?}");
    result.expect("gradients disagree");

    // Minimize f(p) = mean((p - target)^2) with the clipped Adam step.
    let target = Tensor::from_vec(vec![1.0, -2.0, 0.5]);
    let mask = Tensor::from_vec(vec![1.0, 1.0, 1.0]);
    let mut p = Tensor::from_vec(vec![0.0, 0.0, 0.0]);
    let mut adam = AdamState::new(0.05);
    for step in 0..200 {
        let mut g = Graph::eval();
        let pv = g.leaf_from(&p);
        let loss = g.mse_masked(pv, &target, &mask);
        g.backward(loss);
        g.write_grad(pv, &mut p);
        adam.step(&mut [("p", &mut p)]).unwrap();
        if step % 50 == 0 {
            println!("step {step:3}: loss {:.6}", g.value(loss).data[0]);
        }
    }
    println!("final parameters: {:?} (target {:?})", p.data, target.data);
}
