mod common;

use common::{centred_net, random_net, random_point, rng};
use crown_core::oracles::ball_grid;
use crown_core::{
    certify_margin, falsify, output_bounds, radius_targeted, radius_untargeted, Activation, BallSpec, Method, Network,
    Norm, ReluLowerStrategy, SearchConfig,
};
use ndarray::Array1;

#[test]
fn margin_network_beats_separate_bounds() {
    let mut rng = rng(21);
    let mut better = 0;
    for _ in 0..200 {
        let net = random_net(&mut rng, Activation::Relu, &[4, 12, 12, 3], 1.5);
        let x0 = random_point(&mut rng, 4);
        let c = net.predict(&x0).unwrap();
        let t = (c + 1) % 3;
        let ball = BallSpec::new(&x0, 0.1, Norm::Linf).unwrap();
        let joint = certify_margin(&net, c, t, &ball, Method::CrownAda).unwrap();
        let (gl, gu) = output_bounds(&net, &ball, ReluLowerStrategy::Adaptive).unwrap();
        if joint >= gl[c] - gu[t] - 1e-12 {
            better += 1;
        }
    }
    assert!(better >= 190, "{better}/200");
}

#[test]
fn two_class_untargeted_equals_targeted() {
    let mut rng = rng(22);
    let net = random_net(&mut rng, Activation::Sigmoid, &[3, 8, 2], 2.0);
    let x0 = random_point(&mut rng, 3);
    let c = net.predict(&x0).unwrap();
    let cfg = SearchConfig::default();
    let u = radius_untargeted(&net, &x0, c, Norm::L2, Method::CrownGeneral, cfg).unwrap();
    let t = radius_targeted(&net, &x0, c, 1 - c, Norm::L2, Method::CrownGeneral, cfg).unwrap();
    assert_eq!(u.radius, t.radius);
    assert_eq!(u.per_target.len(), 1);
}

#[test]
fn exchangeable_targets_agree() {
    // Outputs 1 and 2 swap under x ↦ (x0, x2, x1); at x1 = x2 their radii coincide.
    let net: Network<f64> = Network::from_rows(
        Activation::Tanh,
        vec![
            (
                vec![vec![1.0, 0.5, 0.5], vec![0.2, 1.0, -0.3], vec![0.2, -0.3, 1.0]],
                vec![0.1, 0.0, 0.0],
            ),
            (vec![vec![2.0, 0.0, 0.0], vec![0.0, 1.0, -0.5], vec![0.0, -0.5, 1.0]], vec![0.0, 0.0, 0.0]),
        ],
    )
    .unwrap();
    let x0 = [1.0, 0.2, 0.2];
    let u = radius_untargeted(&net, &x0, 0, Norm::Linf, Method::CrownGeneral, SearchConfig::default()).unwrap();
    let (a, b) = (u.per_target[0].radius, u.per_target[1].radius);
    assert!(a > 0.0);
    assert!((a - b).abs() <= 1e-3 * a.max(b));
}

#[test]
fn untargeted_is_minimum_of_recomputed_targets() {
    let mut rng = rng(23);
    let net = random_net(&mut rng, Activation::Arctan, &[3, 10, 3], 1.5);
    let x0 = random_point(&mut rng, 3);
    let c = net.predict(&x0).unwrap();
    let cfg = SearchConfig::default();
    let u = radius_untargeted(&net, &x0, c, Norm::L1, Method::CrownGeneral, cfg).unwrap();
    let min = (0..3)
        .filter(|&t| t != c)
        .map(|t| radius_targeted(&net, &x0, c, t, Norm::L1, Method::CrownGeneral, cfg).unwrap().radius)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(u.radius, min);
}

/// Smallest radius at which some grid point flips `c` to `t`; the grid
/// covers a ball much larger than the certified one.
fn grid_min_distortion(net: &Network<f64>, x0: &[f64], c: usize, t: usize, norm: Norm, reach: f64) -> f64 {
    let ball = BallSpec::new(x0, reach, norm).unwrap();
    let grid = ball_grid(&ball, 1e-3).unwrap();
    let centre = Array1::from(x0.to_vec());
    let f = net.forward_batch(grid.view()).unwrap();
    grid.rows()
        .into_iter()
        .zip(f.rows())
        .filter(|(_, y)| y[c] - y[t] <= 0.0)
        .map(|(x, _)| norm.of((&x - &centre).view()))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn certified_radius_below_grid_distortion() {
    let mut rng = rng(24);
    let mut checked = 0;
    for _ in 0..6 {
        let net = random_net(&mut rng, Activation::Relu, &[2, 4, 2], 2.0);
        let x0 = random_point(&mut rng, 2);
        let c = net.predict(&x0).unwrap();
        for norm in Norm::ALL {
            for method in [Method::FastLin, Method::CrownAda] {
                let r = radius_targeted(&net, &x0, c, 1 - c, norm, method, SearchConfig::default()).unwrap();
                if r.radius == 0.0 || r.capped {
                    continue;
                }
                let reach = (3.0 * r.radius).min(0.45);
                let exact = grid_min_distortion(&net, &x0, c, 1 - c, norm, reach);
                assert!(r.radius <= exact + 1e-3, "{norm} {method}: {} > {exact}", r.radius);
                checked += 1;
            }
        }
    }
    assert!(checked > 10);
}

#[test]
fn quad_radius_is_sound_on_two_layer_nets() {
    let mut rng = rng(25);
    let points: Vec<Vec<f64>> = (0..4).map(|_| random_point(&mut rng, 8)).collect();
    let net = centred_net(&mut rng, Activation::Relu, &[8, 20, 3], &points);
    for x0 in &points {
        let c = net.predict(x0).unwrap();
        for norm in [Norm::L2, Norm::Linf] {
            for t in (0..3).filter(|&t| t != c) {
                let r = radius_targeted(&net, x0, c, t, norm, Method::CrownQuad, SearchConfig::default()).unwrap();
                if r.radius == 0.0 {
                    continue;
                }
                let ball = BallSpec::new(x0, 0.999 * r.radius, norm).unwrap();
                let rep = falsify(&net, c, t, &ball, 2000, 50, 1).unwrap();
                assert!(rep.min_margin_found > 0.0);
            }
        }
    }
}

#[test]
fn quad_rejects_l1_and_s_shaped() {
    let mut rng = rng(26);
    let net = random_net(&mut rng, Activation::Relu, &[3, 5, 2], 1.0);
    let ball = BallSpec::new(&[0.0; 3], 0.1, Norm::L1).unwrap();
    assert!(certify_margin(&net, 0, 1, &ball, Method::CrownQuad).is_err());
    let tanh = random_net(&mut rng, Activation::Tanh, &[3, 5, 2], 1.0);
    let ball = BallSpec::new(&[0.0; 3], 0.1, Norm::L2).unwrap();
    assert!(certify_margin(&tanh, 0, 1, &ball, Method::CrownQuad).is_err());
}
