//! Central finite-difference verification of reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AutogradError, Graph, Reduce, Tensor, Var};

/// Relative error with the `max(|a|, |n|, 1e-8)` denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares backward gradients of a scalar function of `x` against central
/// differences and returns the largest relative error over all entries.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, AutogradError>
where
    F: for<'g> Fn(&mut Graph<'g>, Var) -> Result<Var, AutogradError>,
{
    grad_check_many(
        |g, vars| f(g, vars[0]),
        std::slice::from_ref(x),
        eps,
    )
}

/// Multi-input form of [`grad_check`]: every entry of every input is perturbed.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64, AutogradError>
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> Result<Var, AutogradError>,
{
    if eps <= 0.0 {
        return Err(AutogradError::Argument(format!("eps must be positive, got {eps}")));
    }
    let analytic: Vec<Tensor> = {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
        let loss = f(&mut g, &vars)?;
        g.backward(loss)?;
        vars.iter().map(|&v| g.grad_dense(v)).collect()
    };

    let eval = |perturbed: &[Tensor]| -> Result<f64, AutogradError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.constant(t)).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).scalar())
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut worst = 0.0f64;
    for (ti, grad) in analytic.iter().enumerate() {
        for j in 0..inputs[ti].len() {
            let orig = inputs[ti].data()[j];
            work[ti].data_mut()[j] = orig + eps;
            let plus = eval(&work)?;
            work[ti].data_mut()[j] = orig - eps;
            let minus = eval(&work)?;
            work[ti].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(grad.data()[j], numeric));
        }
    }
    Ok(worst)
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::new(rows, cols, data).expect("shape matches data")
}

/// Reduces `out` to a scalar through fixed random weights so every output
/// entry reaches the loss with a distinct coefficient.
fn project<'g>(g: &mut Graph<'g>, out: Var, seed: u64) -> Result<Var, AutogradError> {
    let (r, c) = g.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant_owned(random(r, c, &mut rng));
    let h = g.hadamard(out, w)?;
    g.sum(h)
}

/// Finite-difference check of every differentiable op on random inputs.
/// Returns `(op name, max relative error)` pairs.
pub fn op_suite(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>, AutogradError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random(3, 4, &mut rng);
    let b = random(4, 2, &mut rng);
    let c = random(3, 4, &mut rng);
    let row = random(1, 4, &mut rng);
    let row3 = random(1, 3, &mut rng);
    let unary = |f: fn(&mut Graph<'_>, Var) -> Result<Var, AutogradError>, x: &Tensor, s: u64| {
        grad_check(
            |g, v| {
                let o = f(g, v)?;
                project(g, o, s)
            },
            x,
            eps,
        )
    };
    let binary = |f: fn(&mut Graph<'_>, Var, Var) -> Result<Var, AutogradError>, x: &Tensor, y: &Tensor, s: u64| {
        grad_check_many(
            |g, v| {
                let o = f(g, v[0], v[1])?;
                project(g, o, s)
            },
            &[x.clone(), y.clone()],
            eps,
        )
    };
    Ok(vec![
        ("matmul", binary(|g, x, y| g.matmul(x, y), &a, &b, 1)?),
        ("transpose", unary(|g, x| g.transpose(x), &a, 2)?),
        ("add", binary(|g, x, y| g.add(x, y), &a, &c, 3)?),
        ("sub", binary(|g, x, y| g.sub(x, y), &a, &c, 3)?),
        ("hadamard", binary(|g, x, y| g.hadamard(x, y), &a, &c, 3)?),
        ("scale", unary(|g, x| g.scale(x, -0.7), &a, 4)?),
        ("relu", unary(|g, x| g.relu(x), &a, 5)?),
        ("sigmoid", unary(|g, x| g.sigmoid(x), &a, 6)?),
        ("softmax", unary(|g, x| g.softmax_rows(x), &a, 7)?),
        ("concat_cols", binary(|g, x, y| g.concat_cols(&[x, y]), &row, &row3, 8)?),
        ("embedding_lookup", unary(|g, x| g.lookup(x, &[2, 0, 2]), &a, 9)?),
        ("sum", unary(|g, x| g.sum(x), &a, 10)?),
        ("mean_rows", unary(|g, x| g.mean_rows(x), &a, 10)?),
        (
            "weighted_rowsum",
            binary(
                |g, x, w| {
                    let w = g.softmax_rows(w)?;
                    g.reduce(x, Reduce::WeightedRowSum(w))
                },
                &a,
                &row3,
                11,
            )?,
        ),
        ("row_scale", binary(|g, x, w| g.row_scale(x, w), &a, &row3, 12)?),
        ("reshape", unary(|g, x| g.reshape(x, 2, 6), &a, 13)?),
        (
            "bce_with_logits",
            grad_check(
                |g, v| {
                    let z = g.sum(v)?;
                    g.bce_with_logits(z, 1.0)
                },
                &row,
                eps,
            )?,
        ),
    ])
}
