use proptest::prelude::*;
use selftaught_core::{Tape, Tensor};

proptest! {
    #[test]
    fn softmax_is_a_probability_vector(rows in 1usize..4, values in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let k = values.len();
        let data: Vec<f64> = (0..rows).flat_map(|r| values.iter().map(move |v| v * (r as f64 + 1.0))).collect();
        let mut t = Tape::<f64>::new();
        let z = t.constant(Tensor::new(vec![rows, k], data).unwrap()).unwrap();
        let s = t.softmax(z, 1).unwrap();
        for row in t.value(s).data().chunks(k) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn batchnorm_eval_is_affine(values in prop::collection::vec(-5.0f64..5.0, 8), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        // f(a x + b y) == a f(x) + b f(y) - (a + b - 1) f(0) for an affine f
        let eval = |x: &[f64]| {
            let mut t = Tape::<f64>::new();
            let xv = t.constant(Tensor::new(vec![1, 1, 2, 2, 2], x.to_vec()).unwrap()).unwrap();
            let g = t.constant(Tensor::from_f64(&[1], &[1.7]).unwrap()).unwrap();
            let be = t.constant(Tensor::from_f64(&[1], &[-0.3]).unwrap()).unwrap();
            let y = t.batch_norm_eval(xv, g, be, &[0.4], &[2.5], 1e-5).unwrap();
            t.value(y).data().to_vec()
        };
        let other: Vec<f64> = values.iter().map(|v| v * 0.5 - 1.0).collect();
        let combo: Vec<f64> = values.iter().zip(&other).map(|(x, y)| a * x + b * y).collect();
        let (fx, fy, f0, fc) = (eval(&values), eval(&other), eval(&[0.0; 8]), eval(&combo));
        for i in 0..8 {
            let expect = a * fx[i] + b * fy[i] - (a + b - 1.0) * f0[i];
            prop_assert!((fc[i] - expect).abs() < 1e-9);
        }
    }
}
