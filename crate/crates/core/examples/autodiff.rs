//! Reverse-mode gradients on a small two-layer network, checked against
//! central finite differences, followed by a few clipped Adam steps.

use argsim::numcore::{clip_gradients, finite_diff_check, global_grad_norm, AdamState, Graph, ParamStore, Precision, Tensor};

fn loss_and_grads(store: &ParamStore, x: &Tensor) -> argsim::Result<(f64, ParamStore)> {
    let mut g = Graph::new();
    let vars = g.params(store);
    let input = g.constant(x);
    let h = g.matmul(input, vars[0])?;
    let h = g.gelu(h);
    let out = g.matmul(h, vars[1])?;
    let sq = g.mul(out, out)?;
    let loss = g.mean(sq);
    let mut graded = store.clone();
    graded.zero_grads();
    g.backward(loss)?.accumulate_into(&mut graded, &vars)?;
    Ok((g.scalar(loss)?, graded))
}

fn main() -> argsim::Result<()> {
    let mut store = ParamStore::new();
    store.push("w1", Tensor::new(vec![3, 4], (0..12).map(|i| (i as f64 * 0.37).sin()).collect())?);
    store.push("w2", Tensor::new(vec![4, 2], (0..8).map(|i| (i as f64 * 0.91).cos()).collect())?);
    let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75])?;

    let (loss, mut graded) = loss_and_grads(&store, &x)?;
    println!("loss {loss:.6}");
    let report = finite_diff_check(&mut graded, |s| Ok(loss_and_grads(s, &x)?.0), 1e-5, 1e-6)?;
    for t in &report.tensors {
        println!("{:<3} max rel err {:.2e}", t.name, t.max_rel_error);
    }
    println!("gradient check {}", if report.passed() { "passed" } else { "FAILED" });

    let mut adam = AdamState::new(store.numel(), 0.02);
    for step in 1..=5 {
        let (loss, graded) = loss_and_grads(&store, &x)?;
        store = graded;
        let mut tensors = store.tensors_mut();
        let norm = global_grad_norm(&tensors)?;
        let scale = clip_gradients(&mut tensors, 1.0)?;
        adam.step(&mut tensors, Precision::F64)?;
        println!("step {step}: loss {loss:.6}  grad norm {norm:.4}  clip scale {scale:.4}");
    }
    Ok(())
}
