//! Random (model, batch) draws checked against finite differences.

use memladder::nn::{loss_and_grads, LossSpec, ModelSpec, Params};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::fd_oracle::{fd_grads, flatten, max_rel_err, objective, Problem};

pub struct Draw {
    pub spec: ModelSpec,
    pub params: Params,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub teacher: Vec<Vec<f64>>,
}

pub fn draw(rng: &mut ChaCha8Rng, depth: usize, width: usize, batch: usize) -> Draw {
    let input_dim = rng.random_range(1..5);
    let classes = rng.random_range(2..5);
    let spec = ModelSpec::uniform(depth, width, input_dim, classes, rng.random());
    let mut params = Params::init(&spec).unwrap();
    for l in &mut params.layers {
        l.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let x = (0..batch).map(|_| (0..input_dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let teacher = (0..batch).map(|_| (0..classes).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    Draw { spec, params, x, y, teacher }
}

fn to_matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
}

/// Returns `None` when the draw sits within reach of a rectifier kink.
pub fn check(d: &Draw, loss: LossSpec, wd: f64) -> Option<f64> {
    let prob = Problem { x: &d.x, y: &d.y, teacher: Some(&d.teacher), loss, weight_decay: wd };
    let (reference, min_pre) = objective(&d.params, &prob);
    if min_pre < 1e-3 {
        return None;
    }
    let xm = to_matrix(&d.x);
    let tm = to_matrix(&d.teacher);
    let (value, grads) = loss_and_grads(&d.params, &d.spec, xm.view(), &d.y, &loss, Some(tm.view()), wd).unwrap();
    assert!((value - reference).abs() <= 1e-10 * reference.abs().max(1.0), "{value} vs {reference}");
    let numeric = fd_grads(&d.params, &prob, 1e-5);
    Some(max_rel_err(&flatten(&grads), &numeric, 1e-6))
}
