//! Analytic gradients against central finite differences.
//!
//! The oracle only calls `Cnn::loss`, the forward-only path. ReLU and
//! max-pool make the loss piecewise smooth, and a central difference with
//! step 1e-3 is only an oracle when `theta +- h` stay on the same piece as
//! `theta`. A probe is therefore asserted when the pooling routes of every
//! sample agree at all three points; probes that straddle a kink are
//! counted and reported.

use exal::learner::Cnn;
use exal::rng;
use rand::Rng;

const STEP: f64 = 1e-3;
const TOLERANCE: f64 = 1e-4;

fn batch(shape: (usize, usize), n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut r = rng::seeded(seed);
    let xs = (0..n)
        .map(|_| (0..shape.0 * shape.1).map(|_| r.random::<f64>()).collect())
        .collect();
    let ys = (0..n).map(|i| (i % 2) as u8).collect();
    (xs, ys)
}

/// `|a - n| / max(|a|, |n|)`, compared absolutely when both are below 1e-8.
fn relative_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-8 {
        (a - n).abs()
    } else {
        (a - n).abs() / scale
    }
}

struct Report {
    probed: usize,
    straddling: usize,
    worst: f64,
}

fn check_all_parameters(shape: (usize, usize), model_seed: u64, data_seed: u64) -> Report {
    let mut model = Cnn::new(shape, model_seed).unwrap();
    model.randomize(model_seed ^ 0xABCD, 0.5);
    let (xs, ys) = batch(shape, 8, data_seed);
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let (loss, grad) = model.loss_and_gradients(&refs, &ys);
    assert!((loss - model.loss(&refs, &ys)).abs() < 1e-12);

    let routes = |m: &Cnn| refs.iter().map(|x| m.pool_routes(x)).collect::<Vec<_>>();
    let base_routes = routes(&model);

    let mut report = Report {
        probed: 0,
        straddling: 0,
        worst: 0.0,
    };
    for (i, &g) in grad.iter().enumerate() {
        let mut plus = model.clone();
        plus.params_mut()[i] += STEP;
        let mut minus = model.clone();
        minus.params_mut()[i] -= STEP;
        if routes(&plus) != base_routes || routes(&minus) != base_routes {
            report.straddling += 1;
            continue;
        }
        let n = (plus.loss(&refs, &ys) - minus.loss(&refs, &ys)) / (2.0 * STEP);
        let err = relative_error(g, n);
        assert!(
            err < TOLERANCE,
            "parameter {i}: analytic {g:e}, numerical {n:e}, relative error {err:e}"
        );
        report.probed += 1;
        report.worst = report.worst.max(err);
    }
    report
}

#[test]
fn every_smooth_probe_matches_finite_differences() {
    let model = Cnn::new((12, 12), 0).unwrap();
    assert!(model.param_count() <= 5000);
    let r = check_all_parameters((12, 12), 3, 4);
    println!(
        "probed {} of {} parameters ({} straddle a kink), worst relative error {:e}",
        r.probed,
        model.param_count(),
        r.straddling,
        r.worst
    );
    // dense weights and biases never move a route; they alone are 578 probes
    assert!(r.probed >= 578, "only {} probes were smooth", r.probed);
}

#[test]
fn non_square_model_gradients() {
    let r = check_all_parameters((9, 10), 5, 6);
    assert!(r.probed > 0);
}

#[test]
fn backprop_converges_on_straddling_probes() {
    // Where h = 1e-3 straddles a kink, a smaller step still recovers the
    // analytic value.
    let mut model = Cnn::new((12, 12), 3).unwrap();
    model.randomize(3 ^ 0xABCD, 0.5);
    let (xs, ys) = batch((12, 12), 8, 4);
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let (_, grad) = model.loss_and_gradients(&refs, &ys);
    for i in 0..model.param_count() {
        let h = 1e-7;
        let mut plus = model.clone();
        plus.params_mut()[i] += h;
        let mut minus = model.clone();
        minus.params_mut()[i] -= h;
        let n = (plus.loss(&refs, &ys) - minus.loss(&refs, &ys)) / (2.0 * h);
        assert!((grad[i] - n).abs() < 1e-6, "parameter {i}: {} vs {n}", grad[i]);
    }
}

#[test]
fn duplicated_batch_keeps_the_mean_loss() {
    let model = Cnn::new((8, 8), 2).unwrap();
    let (xs, ys) = batch((8, 8), 5, 9);
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let doubled: Vec<&[f64]> = refs.iter().chain(refs.iter()).copied().collect();
    let ys2: Vec<u8> = ys.iter().chain(ys.iter()).copied().collect();
    let (a, ga) = model.loss_and_gradients(&refs, &ys);
    let (b, gb) = model.loss_and_gradients(&doubled, &ys2);
    assert!((a - b).abs() < 1e-12);
    for (x, y) in ga.iter().zip(&gb) {
        assert!((x - y).abs() < 1e-12);
    }
}
