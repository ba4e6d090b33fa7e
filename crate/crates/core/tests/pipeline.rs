use rsnorm_core::decomp::{block_cover, cover_average, dyadic_split};
use rsnorm_core::montecarlo::{check_contraction, estimate_expected_norm};
use rsnorm_core::patterns::{hypercube_in_torus, torus, torus_as_circulant_bands, CirculantSpec, OffsetGraphSpec, PatternSpec};
use rsnorm_core::rademacher::{estimate_rad_norm, RadNormConfig};
use rsnorm_core::{operator_norm, SparsePattern};

#[test]
fn cover_average_dominates_scaled_adjacency() {
    let spec = OffsetGraphSpec::new(40, vec![1, 3, 8]).unwrap();
    let cover = block_cover(&spec).unwrap();
    let avg = cover_average(&cover);
    let adjacency = spec.band().matrix();
    assert!(adjacency.entrywise_le(&avg, 1.0 / 32.0).unwrap());
    for k in [0, 7, 39] {
        let b = cover.matrix(k);
        assert!(b.entrywise_le(&adjacency, 1.0).unwrap());
        assert!(b.transpose() == b);
    }
}

#[test]
fn dyadic_levels_sum_to_the_circulant() {
    let band: Vec<f64> = (0..30).map(|j| if j % 4 == 1 { 0.0 } else { (-(j as f64) / 3.0).exp() * if j % 2 == 0 { 1.0 } else { -1.0 } }).collect();
    let spec = CirculantSpec::new(band).unwrap();
    let split = dyadic_split(&spec).unwrap();
    let mut sum = vec![0.0; 30 * 30];
    for k in 0..split.levels.len() {
        for e in split.level_spec(k).matrix().entries() {
            sum[e.row * 30 + e.col] += split.scale * e.weight;
        }
    }
    let direct = spec.matrix().to_dense();
    for i in 0..30 {
        for j in 0..30 {
            assert!((sum[i * 30 + j] - direct.get(i, j)).abs() <= 1e-15);
        }
    }
}

#[test]
fn torus_embeddings() {
    let emb = torus_as_circulant_bands(4, 2).unwrap();
    assert!(emb.torus_edges_contained().unwrap());
    let cube = hypercube_in_torus(4, 2).unwrap();
    let t = torus(4, 2).unwrap().adjacency();
    assert!(cube.entrywise_le(&t, 1.0).unwrap());
    let r = check_contraction(&cube, &t, 200, 5, 1e-8, None).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn rad_norm_sits_below_the_norm_of_abs() {
    for text in ["hypercube:d=3", "circulant:n=20,offsets=2,5", "random:n=10,density=0.4,seed=3"] {
        let a = text.parse::<PatternSpec>().unwrap().build().unwrap().matrix;
        let top = operator_norm(&a.abs(), 1e-12, 10_000, 0).unwrap().value;
        let cfg = RadNormConfig {
            samples: 300,
            ..RadNormConfig::default()
        };
        let e = estimate_rad_norm(&a, 3.0, &cfg).unwrap();
        assert!(e.lower <= top + 3.0 * e.lower_stderr + 1e-9, "{text}: {} vs {top}", e.lower);
    }
}

#[test]
fn expected_norm_is_a_function_of_seed_and_samples() {
    let a = SparsePattern::ones(5, 7);
    let x = estimate_expected_norm(&a, 300, 11, 1e-8, Some(1)).unwrap();
    let y = estimate_expected_norm(&a, 300, 11, 1e-8, Some(3)).unwrap();
    assert_eq!(x.mean.to_bits(), y.mean.to_bits());
    assert_eq!(x.stderr.to_bits(), y.stderr.to_bits());
    let z = estimate_expected_norm(&a, 300, 12, 1e-8, None).unwrap();
    assert_ne!(x.mean.to_bits(), z.mean.to_bits());
}
