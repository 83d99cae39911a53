use fundus_core::linalg::sym_eig;
use fundus_core::tensor::{conv2d_forward, softmax_channels, Padding};
use fundus_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

proptest! {
    #[test]
    fn conv_is_linear_in_input(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x1 = tensor(&[5, 6, 2], &mut rng);
        let x2 = tensor(&[5, 6, 2], &mut rng);
        let k = tensor(&[3, 3, 2, 3], &mut rng);
        let zero = vec![0.0; 3];
        let lhs = conv2d_forward(&x1.scale(a).add(&x2.scale(b)).unwrap(), &k, &zero, Padding::Same).unwrap();
        let rhs = conv2d_forward(&x1, &k, &zero, Padding::Same).unwrap().scale(a)
            .add(&conv2d_forward(&x2, &k, &zero, Padding::Same).unwrap().scale(b)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), scale in 0.1f64..500.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = tensor(&[3, 3, 4], &mut rng).scale(scale);
        let p = softmax_channels(&z).unwrap();
        prop_assert!(p.is_finite());
        for px in p.data().chunks(4) {
            prop_assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(px.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}

#[test]
fn softmax_matches_direct_formula_at_low_magnitude() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = tensor(&[4, 4, 3], &mut rng);
    let p = softmax_channels(&z).unwrap();
    for (zs, ps) in z.data().chunks(3).zip(p.data().chunks(3)) {
        let s: f64 = zs.iter().map(|v| v.exp()).sum();
        for (a, b) in zs.iter().zip(ps) {
            assert!((a.exp() / s - b).abs() < 1e-14);
        }
    }
}

#[test]
fn sym_eig_reconstructs_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for t in 0..1000 {
        let d = 1 + t % 64;
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let v = rng.random_range(-1.0..1.0);
                m[i * d + j] = v;
                m[j * d + i] = v;
            }
        }
        let eig = sym_eig(&m, d).unwrap();
        assert!(eig.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let r: f64 = (0..d).map(|k| eig.eigenvalues[k] * eig.eigenvectors[k][i] * eig.eigenvectors[k][j]).sum();
                worst = worst.max((r - m[i * d + j]).abs());
                let g: f64 = (0..d).map(|k| eig.eigenvectors[i][k] * eig.eigenvectors[j][k]).sum();
                worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        assert!(worst < 1e-10, "d={d}: {worst}");
    }
}

#[test]
fn sym_eig_rejects_asymmetric_input() {
    assert!(sym_eig(&[1.0, 2.0, 0.0, 1.0], 2).is_err());
}
