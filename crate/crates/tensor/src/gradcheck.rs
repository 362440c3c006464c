//! Central finite-difference verification of backward rules.

use crate::error::Result;
use crate::{Graph, Rng, Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
    pub checked: usize,
    /// `(input index, element index, analytic, numeric)` of the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheck {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_err <= rel_tol
    }
}

const STEP: f64 = 1e-6;
const FLOOR: f64 = 1e-3;

/// Compares backward gradients of `sum(f(inputs) * r)` against central
/// differences, where `r` is a fixed random projection. All inputs are
/// differentiated.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], seed: u64, f: F) -> Result<GradCheck>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let projection = {
        let g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&g, &vars)?;
        let shape = out.shape();
        let mut rng = Rng::with_stream(seed, 0x9c);
        Tensor::new(shape.clone(), rng.uniform_vec(shape.iter().product(), -1.0, 1.0))?
    };
    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&g, &vars)?;
        let r = g.constant(projection.clone());
        let v = out.mul(r)?.sum().value().data()[0];
        Ok(v)
    };

    let g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&g, &vars)?;
    let r = g.constant(projection.clone());
    let loss = out.mul(r)?.sum();
    let grads = g.backward(loss)?;

    let mut report = GradCheck {
        max_rel_err: 0.0,
        checked: 0,
        worst: None,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .map(|t| t.into_data())
            .unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        for e in 0..inputs[i].len() {
            let orig = work[i].data()[e];
            work[i].data_mut()[e] = orig + STEP;
            let plus = eval(&work)?;
            work[i].data_mut()[e] = orig - STEP;
            let minus = eval(&work)?;
            work[i].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic[e];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                if err >= report.max_rel_err {
                    report.worst = Some((i, e, a, numeric));
                }
            }
        }
    }
    Ok(report)
}

/// Outcome for one op on one random shape.
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub op: &'static str,
    pub shape: Vec<usize>,
    pub result: GradCheck,
}

fn rand_t(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), rng.uniform_vec(n, -1.0, 1.0)).expect("shape")
}

/// Every differentiable op, each on `cases` random shapes (dims 1..=4 per
/// axis, 64-bit).
pub fn run_op_suite(seed: u64, cases: usize) -> Result<Vec<OpCheck>> {
    let mut rng = Rng::with_stream(seed, 0x5e);
    let mut out = Vec::new();
    let dim = |rng: &mut Rng| 1 + rng.below(4);
    for case in 0..cases {
        let s = seed.wrapping_add(case as u64);
        let (a, b, c) = (dim(&mut rng), dim(&mut rng), dim(&mut rng) + 1);
        let mut push = |op: &'static str, shape: Vec<usize>, r: GradCheck| out.push(OpCheck { op, shape, result: r });

        let x = rand_t(&mut rng, &[a, c]);
        let y = rand_t(&mut rng, &[a, c]);
        push("add", vec![a, c], check_gradients(&[x.clone(), y.clone()], s, |_, v| v[0].add(v[1]))?);
        push("sub", vec![a, c], check_gradients(&[x.clone(), y.clone()], s, |_, v| v[0].sub(v[1]))?);
        push("mul", vec![a, c], check_gradients(&[x.clone(), y.clone()], s, |_, v| v[0].mul(v[1]))?);
        push("scale", vec![a, c], check_gradients(&[x.clone()], s, |_, v| Ok(v[0].scale(-1.7)))?);
        let bias = rand_t(&mut rng, &[c]);
        push("add_bias", vec![a, c], check_gradients(&[x.clone(), bias], s, |_, v| v[0].add_bias(v[1]))?);
        let w = rand_t(&mut rng, &[c, b]);
        let x3 = rand_t(&mut rng, &[b, a, c]);
        push("matmul", vec![a, c, b], check_gradients(&[x.clone(), w.clone()], s, |_, v| v[0].matmul(v[1]))?);
        push("matmul_rank3", vec![b, a, c], check_gradients(&[x3.clone(), w], s, |_, v| v[0].matmul(v[1]))?);
        push("relu", vec![a, c], check_gradients(&[x.clone()], s, |_, v| Ok(v[0].relu()))?);
        push("gelu", vec![a, c], check_gradients(&[x.clone()], s, |_, v| Ok(v[0].gelu()))?);
        let gamma = rand_t(&mut rng, &[c]);
        let beta = rand_t(&mut rng, &[c]);
        push(
            "layer_norm",
            vec![b, a, c],
            check_gradients(&[x3.clone(), gamma, beta], s, |_, v| v[0].layer_norm(v[1], v[2]))?,
        );
        let axis = case % 3;
        push("softmax", vec![b, a, c], check_gradients(&[x3.clone()], s, move |_, v| v[0].softmax(axis))?);
        let mask: Vec<bool> = (0..b * a).map(|i| (i + case) % 3 != 0).collect();
        push(
            "mean_pool_masked",
            vec![b, a, c],
            check_gradients(&[x3.clone()], s, |_, v| v[0].mean_pool(1, Some(&mask)))?,
        );
        push("mean_pool", vec![b, a, c], check_gradients(&[x3.clone()], s, move |_, v| v[0].mean_pool(axis, None))?);
        push("sum_axis", vec![b, a, c], check_gradients(&[x3.clone()], s, move |_, v| v[0].sum_axis(axis))?);
        push("sum", vec![b, a, c], check_gradients(&[x3.clone()], s, |_, v| Ok(v[0].sum()))?);
        push("mean", vec![b, a, c], check_gradients(&[x3.clone()], s, |_, v| Ok(v[0].mean()))?);
        let other = rand_t(&mut rng, &[b, 2, c]);
        push(
            "concat",
            vec![b, a + 2, c],
            check_gradients(&[x3.clone(), other], s, |_, v| Var::concat(&[v[0], v[1]], 1))?,
        );
        let table = rand_t(&mut rng, &[c + 1, a]);
        let ids: Vec<usize> = (0..b + 2).map(|i| (i * 7 + case) % (c + 1)).collect();
        push("embedding", vec![c + 1, a], check_gradients(&[table], s, |_, v| v[0].embedding(&ids))?);
        let len = 4 + rng.below(6);
        let (stride, pad, kernel) = (1 + case % 2, case % 2, 2 + case % 3);
        let xc = rand_t(&mut rng, &[a, b, len]);
        let wc = rand_t(&mut rng, &[c, b, kernel]);
        let bc = rand_t(&mut rng, &[c]);
        push(
            "conv1d",
            vec![a, b, len, c, kernel, stride, pad],
            check_gradients(&[xc.clone(), wc, bc], s, move |_, v| v[0].conv1d(v[1], Some(v[2]), stride, pad))?,
        );
        push("upsample", vec![a, b, len], check_gradients(&[xc.clone()], s, |_, v| v[0].upsample(2))?);
        push(
            "reshape",
            vec![a, b, len],
            check_gradients(&[xc.clone()], s, move |_, v| v[0].reshape(vec![a * b, len]))?,
        );
        push("swap_last2", vec![a, b, len], check_gradients(&[xc], s, |_, v| v[0].swap_last2())?);
        let heads = 1 + case % 2;
        let dm = 2 * heads;
        let l = 2 + rng.below(3);
        let q = rand_t(&mut rng, &[a, l, dm]);
        let k = rand_t(&mut rng, &[a, l, dm]);
        let vv = rand_t(&mut rng, &[a, l, dm]);
        let kmask: Vec<bool> = (0..a * l).map(|i| i % l != l - 1 || case % 2 == 0).collect();
        push(
            "attention",
            vec![a, l, dm, heads],
            check_gradients(&[q, k, vv], s, |_, v| v[0].attention(v[1], v[2], heads, Some(&kmask)))?,
        );
        push(
            "mse",
            vec![a, c],
            check_gradients(&[x.clone(), y.clone()], s, |_, v| v[0].mse(v[1]))?,
        );
        let labels: Vec<usize> = (0..a).map(|i| (i + case) % c).collect();
        let weights: Vec<f64> = (0..c).map(|i| 0.5 + i as f64).collect();
        let ignore = if case % 2 == 0 { Some(c - 1) } else { None };
        push(
            "cross_entropy",
            vec![a, c],
            check_gradients(&[x.clone()], s, |_, v| {
                v[0].cross_entropy(&labels, ignore, Some(&weights))
            })?,
        );
        push(
            "straight_through",
            vec![a, c],
            // Quantized value rides along with `pre` by a fixed offset, so the
            // numeric Jacobian is the identity the estimator claims.
            check_gradients(&[x.clone()], s, |g, v| {
                let offset = g.constant(y.clone());
                v[0].detach().add(offset)?.straight_through(v[0])
            })?,
        );
        let gate = rand_t(&mut rng, &[a, 3]);
        let e2 = rand_t(&mut rng, &[a, c]);
        push(
            "weighted_sum",
            vec![a, 3, c],
            check_gradients(&[gate, x, y, e2], s, |_, v| v[0].weighted_sum(&[v[1], v[2], v[3]]))?,
        );
    }
    Ok(out)
}
