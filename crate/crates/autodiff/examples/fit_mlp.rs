//! Fits a two-layer perceptron to `sin(x)` with Adam, then checks its
//! gradients against central differences.
//!
//! ```sh
//! cargo run --release -p tractoracle-autodiff --example fit_mlp
//! ```

use autodiff::{grad_check_params, Adam, AdamState, Graph, ParamStore, Result, Tensor, Var};

const HIDDEN: usize = 16;

fn forward(g: &mut Graph<f64>, p: &ParamStore<f64>, x: Var) -> Result<Var> {
    let ids: Vec<_> = p.ids().collect();
    let (w1, b1, w2, b2) = (
        g.param(p, ids[0]),
        g.param(p, ids[1]),
        g.param(p, ids[2]),
        g.param(p, ids[3]),
    );
    let h = g.affine(x, w1, b1)?;
    let h = g.tanh(h);
    g.affine(h, w2, b2)
}

fn loss(
    g: &mut Graph<f64>,
    p: &ParamStore<f64>,
    xs: &Tensor<f64>,
    ys: &Tensor<f64>,
) -> Result<Var> {
    let x = g.constant(xs.clone());
    let y = g.constant(ys.clone());
    let out = forward(g, p, x)?;
    let d = g.sub(out, y)?;
    let sq = g.mul(d, d)?;
    Ok(g.mean(sq))
}

fn main() -> Result<()> {
    let n = 64;
    let xs: Vec<f64> = (0..n)
        .map(|i| -3.0 + 6.0 * i as f64 / (n - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
    let xs = Tensor::from_vec(vec![n, 1], xs)?;
    let ys = Tensor::from_vec(vec![n, 1], ys)?;

    // deterministic, roughly Xavier-scaled start
    let wave = |k: usize, s: f64| {
        (0..k)
            .map(|i| s * ((i as f64 * 2.39996).sin()))
            .collect::<Vec<_>>()
    };
    let mut p = ParamStore::new();
    p.add("w1", Tensor::from_vec(vec![1, HIDDEN], wave(HIDDEN, 1.0))?);
    p.add("b1", Tensor::from_vec(vec![HIDDEN], wave(HIDDEN, 0.5))?);
    p.add("w2", Tensor::from_vec(vec![HIDDEN, 1], wave(HIDDEN, 0.3))?);
    p.add("b2", Tensor::zeros(&[1]));

    let adam = Adam::new(1e-2);
    let mut state = AdamState::new(&p);
    for step in 0..=2000 {
        let mut g = Graph::new();
        let l = loss(&mut g, &p, &xs, &ys)?;
        if step % 500 == 0 {
            println!("step {step:4}  mse {:.6}", g.value(l).item());
        }
        let grads = g.backward(l)?.param_grads(&p);
        adam.step(&mut p, &grads, &mut state)?;
    }

    let err = grad_check_params(|g, p| loss(g, p, &xs, &ys), &mut p, 1e-5)?;
    println!("max relative gradient error {err:.2e}");
    Ok(())
}
