//! Central finite-difference gradient checking in f64.
#![allow(dead_code)]

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sedge_core::kernel::{ParamStore, Shape, Tape, Tensor, Var};

pub mod grad_cases;
pub mod oracles;

pub const STEP: f64 = 1e-3;
pub const MAX_REL_ERR: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_tensor(shape: Shape, rng: &mut ChaCha8Rng, scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// One recorded evaluation: the tape, the input vars (in the order of the
/// `inputs` passed to [`check`]), backward seeds and the scalar loss.
pub struct Eval {
    pub tape: Tape<f64>,
    pub inputs: Vec<Var>,
    pub seeds: Vec<(Var, Tensor<f64>)>,
    pub loss: f64,
}

#[derive(Debug)]
pub struct Report {
    pub checked: usize,
    /// Coordinates whose perturbation flipped a ReLU unit.
    pub skipped: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl Report {
    pub fn assert_ok(&self, what: &str) {
        eprintln!(
            "{what}: {} coordinates, worst relative error {:.2e}, {} skipped at kinks",
            self.checked, self.worst, self.skipped
        );
        assert!(
            self.failures.is_empty(),
            "{what}: {} of {} coordinates above {MAX_REL_ERR} (worst {:.3e}):\n{}",
            self.failures.len(),
            self.checked,
            self.worst,
            self.failures.join("\n")
        );
    }
}

/// Compares analytic gradients of `f` against central differences at up to
/// `n` coordinates drawn uniformly over all parameter and input scalars.
///
/// Coordinates whose `±STEP` evaluations change the on/off pattern of any
/// ReLU are not differentiable there in the finite-difference sense; they are
/// counted in `skipped` and replaced by further draws.
pub fn check<F>(store: &mut ParamStore<f64>, inputs: &[Tensor<f64>], f: F, n: usize, seed: u64) -> Report
where
    F: Fn(&ParamStore<f64>, &[Tensor<f64>]) -> Eval,
{
    store.zero_grad();
    let e = f(store, inputs);
    let pattern = e.tape.relu_pattern();
    let grads = e.tape.backward(store, e.seeds).expect("backward");
    let mut coords = Vec::new();
    for (p, param) in store.iter().enumerate() {
        for i in 0..param.value.data().len() {
            coords.push((false, p, i));
        }
    }
    for (j, t) in inputs.iter().enumerate() {
        for i in 0..t.data().len() {
            coords.push((true, j, i));
        }
    }
    let mut r = rng(seed);
    let order = sample(&mut r, coords.len(), coords.len());
    let mut report = Report {
        checked: 0,
        skipped: 0,
        worst: 0.0,
        failures: Vec::new(),
    };
    for (is_input, j, i) in order.into_iter().map(|i| coords[i]) {
        if report.checked == n {
            break;
        }
        let analytic = if is_input {
            grads.get(e.inputs[j]).map_or(0.0, |g| g.data()[i])
        } else {
            store.iter().nth(j).unwrap().grad.data()[i]
        };
        let at = |delta: f64| {
            let e = if is_input {
                let mut xs = inputs.to_vec();
                xs[j].data_mut()[i] += delta;
                f(store, &xs)
            } else {
                let mut s = store.clone();
                s.iter_mut().nth(j).unwrap().value.data_mut()[i] += delta;
                f(&s, inputs)
            };
            (e.loss, e.tape.relu_pattern())
        };
        let (plus, plus_pattern) = at(STEP);
        let (minus, minus_pattern) = at(-STEP);
        let kink = plus_pattern != pattern || minus_pattern != pattern;
        let numeric = (plus - minus) / (2.0 * STEP);
        if kink {
            // the difference quotient straddles a rectifier kink
            report.skipped += 1;
            continue;
        }
        let err = rel_err(analytic, numeric);
        report.checked += 1;
        report.worst = report.worst.max(err);
        if err >= MAX_REL_ERR {
            let name = if is_input {
                format!("input{j}")
            } else {
                store.iter().nth(j).unwrap().name.clone()
            };
            report
                .failures
                .push(format!("  {name}[{i}]: analytic {analytic:.9e} numeric {numeric:.9e} rel {err:.2e}"));
        }
    }
    report
}

/// Wraps a single-output graph with the loss `sum(r * y)` for a fixed random `r`.
pub fn weighted_sum<B>(build: B, seed: u64) -> impl Fn(&ParamStore<f64>, &[Tensor<f64>]) -> Eval
where
    B: Fn(&mut Tape<f64>, &ParamStore<f64>, &[Var]) -> Var,
{
    move |store, inputs| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone()).unwrap()).collect();
        let y = build(&mut tape, store, &vars);
        let mut r = rng(seed ^ 0x5eed);
        let w = Tensor::from_fn(tape.shape(y), |_, _, _, _| r.random_range(-1.0..1.0));
        let loss = tape.value(y).data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
        Eval {
            tape,
            inputs: vars,
            seeds: vec![(y, w)],
            loss,
        }
    }
}
