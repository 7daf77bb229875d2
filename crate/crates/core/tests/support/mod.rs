//! Independent oracles shared by the core integration tests and the
//! acceptance suite: naive nested-loop convolutions and a per-op
//! finite-difference gradient sweep.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selftaught_core::{gradcheck, ConvGeometry, Result, Tape, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Values bounded away from zero, for ops with a kink at the origin.
pub fn random_away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.5);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Direct definition of a strided, zero-padded 3D cross-correlation.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv3d(
    x: &[f64],
    n: usize,
    cin: usize,
    dims: [usize; 3],
    w: &[f64],
    cout: usize,
    bias: &[f64],
    g: ConvGeometry,
) -> (Vec<f64>, [usize; 3]) {
    let od: Vec<usize> = (0..3)
        .map(|a| (dims[a] + 2 * g.padding[a] - g.kernel[a]) / g.stride[a] + 1)
        .collect();
    let [k0, k1, k2] = g.kernel;
    let mut out = vec![0.0; n * cout * od[0] * od[1] * od[2]];
    for b in 0..n {
        for o in 0..cout {
            for z in 0..od[0] {
                for y in 0..od[1] {
                    for xx in 0..od[2] {
                        let mut acc = bias[o];
                        for c in 0..cin {
                            for a in 0..k0 {
                                for bb in 0..k1 {
                                    for cc in 0..k2 {
                                        let iz = (z * g.stride[0] + a) as isize - g.padding[0] as isize;
                                        let iy = (y * g.stride[1] + bb) as isize - g.padding[1] as isize;
                                        let ix = (xx * g.stride[2] + cc) as isize - g.padding[2] as isize;
                                        if iz < 0
                                            || iy < 0
                                            || ix < 0
                                            || iz >= dims[0] as isize
                                            || iy >= dims[1] as isize
                                            || ix >= dims[2] as isize
                                        {
                                            continue;
                                        }
                                        let xi = (((b * cin + c) * dims[0] + iz as usize) * dims[1]
                                            + iy as usize)
                                            * dims[2]
                                            + ix as usize;
                                        let wi = (((o * cin + c) * k0 + a) * k1 + bb) * k2 + cc;
                                        acc += x[xi] * w[wi];
                                    }
                                }
                            }
                        }
                        let oi = (((b * cout + o) * od[0] + z) * od[1] + y) * od[2] + xx;
                        out[oi] = acc;
                    }
                }
            }
        }
    }
    (out, [od[0], od[1], od[2]])
}

/// Direct scatter definition of a transposed convolution, weight `(cin, cout, k)`.
#[allow(clippy::too_many_arguments)]
pub fn naive_tconv3d(
    x: &[f64],
    n: usize,
    cin: usize,
    dims: [usize; 3],
    w: &[f64],
    cout: usize,
    bias: &[f64],
    g: ConvGeometry,
) -> (Vec<f64>, [usize; 3]) {
    let od: Vec<usize> = (0..3)
        .map(|a| (dims[a] - 1) * g.stride[a] + g.kernel[a] - 2 * g.padding[a])
        .collect();
    let [k0, k1, k2] = g.kernel;
    let ovol = od[0] * od[1] * od[2];
    let mut out = vec![0.0; n * cout * ovol];
    for b in 0..n {
        for o in 0..cout {
            for v in 0..ovol {
                out[(b * cout + o) * ovol + v] = bias[o];
            }
        }
        for c in 0..cin {
            for z in 0..dims[0] {
                for y in 0..dims[1] {
                    for xx in 0..dims[2] {
                        let xv = x[(((b * cin + c) * dims[0] + z) * dims[1] + y) * dims[2] + xx];
                        for o in 0..cout {
                            for a in 0..k0 {
                                for bb in 0..k1 {
                                    for cc in 0..k2 {
                                        let oz = (z * g.stride[0] + a) as isize - g.padding[0] as isize;
                                        let oy = (y * g.stride[1] + bb) as isize - g.padding[1] as isize;
                                        let ox = (xx * g.stride[2] + cc) as isize - g.padding[2] as isize;
                                        if oz < 0
                                            || oy < 0
                                            || ox < 0
                                            || oz >= od[0] as isize
                                            || oy >= od[1] as isize
                                            || ox >= od[2] as isize
                                        {
                                            continue;
                                        }
                                        let wi = (((c * cout + o) * k0 + a) * k1 + bb) * k2 + cc;
                                        let oi = (((b * cout + o) * od[0] + oz as usize) * od[1]
                                            + oy as usize)
                                            * od[2]
                                            + ox as usize;
                                        out[oi] += xv * w[wi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (out, [od[0], od[1], od[2]])
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random geometry with kernel 1..=3, stride 1..=2, padding 0..=1 that
/// yields a non-empty output on `dims`.
pub fn random_geometry(rng: &mut impl Rng, dims: [usize; 3]) -> ConvGeometry {
    loop {
        let k = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
        let s = [rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(1..=2)];
        let p = [rng.random_range(0..=1), rng.random_range(0..=1), rng.random_range(0..=1)];
        let g = ConvGeometry::new(k, s, p);
        if g.conv_output(dims).is_some() && p.iter().zip(&k).all(|(p, k)| p < k) {
            return g;
        }
    }
}

#[derive(Debug, Clone)]
pub struct OpReport {
    pub op: &'static str,
    pub cases: usize,
    pub max_rel_error: f64,
}

/// Weighted sum `sum(y * r)` so every output element carries a distinct
/// random adjoint.
fn project(t: &mut Tape<f64>, y: Var, r: &Tensor<f64>) -> Result<Var> {
    let r = t.constant(r.reshape(t.shape(y))?)?;
    let p = t.mul(y, r)?;
    t.reduce_sum(p)
}

fn run_case<F>(inputs: Vec<Tensor<f64>>, out_numel: usize, rng: &mut ChaCha8Rng, f: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let r = random_tensor(rng, &[out_numel], 1.0);
    let report = gradcheck::check(&inputs, 1e-4, |t, v| {
        let y = f(t, v)?;
        if t.value(y).numel() == 1 {
            // scalar outputs are used directly
            return Ok(y);
        }
        project(t, y, &r)
    })
    .expect("gradient check evaluation failed");
    report.max_rel_error
}

/// Finite-difference sweep over every differentiable tape op.
pub fn gradient_suite(cases: usize, seed: u64) -> Vec<OpReport> {
    let mut rng = rng(seed);
    let mut reports = Vec::new();
    let mut record = |op: &'static str, errs: Vec<f64>| {
        reports.push(OpReport {
            op,
            cases: errs.len(),
            max_rel_error: errs.into_iter().fold(0.0, f64::max),
        });
    };

    let small_shape = |rng: &mut ChaCha8Rng| vec![rng.random_range(1..4), rng.random_range(1..5)];

    macro_rules! sweep {
        ($name:expr, |$rng:ident| $body:expr) => {{
            let errs: Vec<f64> = (0..cases).map(|_| { let $rng = &mut rng; $body }).collect();
            record($name, errs);
        }};
    }

    sweep!("add", |r| {
        let s = small_shape(r);
        let n = s.iter().product();
        let ins = vec![random_tensor(r, &s, 1.0), random_tensor(r, &s, 1.0)];
        run_case(ins, n, r, |t, v| t.add(v[0], v[1]))
    });
    sweep!("add_scalar_broadcast", |r| {
        let s = small_shape(r);
        let n = s.iter().product();
        let ins = vec![random_tensor(r, &s, 1.0), random_tensor(r, &[1], 1.0)];
        run_case(ins, n, r, |t, v| t.add(v[0], v[1]))
    });
    sweep!("sub", |r| {
        let s = small_shape(r);
        let n = s.iter().product();
        let ins = vec![random_tensor(r, &s, 1.0), random_tensor(r, &s, 1.0)];
        run_case(ins, n, r, |t, v| t.sub(v[0], v[1]))
    });
    sweep!("mul", |r| {
        let s = small_shape(r);
        let n = s.iter().product();
        let ins = vec![random_tensor(r, &s, 1.0), random_tensor(r, &s, 1.0)];
        run_case(ins, n, r, |t, v| t.mul(v[0], v[1]))
    });
    sweep!("scale", |r| {
        let s = small_shape(r);
        let n = s.iter().product();
        let c = r.random_range(-2.0..2.0);
        run_case(vec![random_tensor(r, &s, 1.0)], n, r, move |t, v| t.scale(v[0], c))
    });
    sweep!("matmul", |r| {
        let (m, k, n) = (r.random_range(1..4), r.random_range(1..4), r.random_range(1..4));
        let ins = vec![random_tensor(r, &[m, k], 1.0), random_tensor(r, &[k, n], 1.0)];
        run_case(ins, m * n, r, |t, v| t.matmul(v[0], v[1]))
    });
    sweep!("reshape", |r| {
        let s = small_shape(r);
        let n: usize = s.iter().product();
        run_case(vec![random_tensor(r, &s, 1.0)], n, r, move |t, v| t.reshape(v[0], &[n]))
    });
    sweep!("reduce_sum", |r| {
        let s = small_shape(r);
        run_case(vec![random_tensor(r, &s, 1.0)], 1, r, |t, v| {
            let sq = t.mul(v[0], v[0])?;
            t.reduce_sum(sq)
        })
    });
    sweep!("reduce_mean", |r| {
        let s = small_shape(r);
        run_case(vec![random_tensor(r, &s, 1.0)], 1, r, |t, v| {
            let sq = t.mul(v[0], v[0])?;
            t.reduce_mean(sq)
        })
    });
    sweep!("leaky_relu", |r| {
        let s = small_shape(r);
        let n = s.iter().product();
        run_case(vec![random_away_from_zero(r, &s)], n, r, |t, v| t.leaky_relu(v[0], 0.01))
    });
    sweep!("sigmoid", |r| {
        let s = small_shape(r);
        let n = s.iter().product();
        run_case(vec![random_tensor(r, &s, 3.0)], n, r, |t, v| t.sigmoid(v[0]))
    });
    sweep!("scaled_sigmoid", |r| {
        let s = small_shape(r);
        let n = s.iter().product();
        run_case(vec![random_tensor(r, &s, 3.0)], n, r, |t, v| t.scaled_sigmoid(v[0]))
    });
    sweep!("softmax", |r| {
        let s = vec![r.random_range(1..4), r.random_range(2..5), r.random_range(1..3)];
        let axis = r.random_range(0..3);
        let n = s.iter().product();
        run_case(vec![random_tensor(r, &s, 2.0)], n, r, move |t, v| t.softmax(v[0], axis))
    });
    sweep!("linear", |r| {
        let (n, f, k) = (r.random_range(1..4), r.random_range(1..5), r.random_range(1..4));
        let ins = vec![
            random_tensor(r, &[n, f], 1.0),
            random_tensor(r, &[k, f], 1.0),
            random_tensor(r, &[k], 1.0),
        ];
        run_case(ins, n * k, r, |t, v| t.linear(v[0], v[1], Some(v[2])))
    });
    sweep!("conv3d", |r| {
        let dims = [r.random_range(2..5), r.random_range(2..5), r.random_range(2..5)];
        let g = random_geometry(r, dims);
        let (n, ci, co) = (r.random_range(1..3), r.random_range(1..3), r.random_range(1..3));
        let od = g.conv_output(dims).unwrap();
        let [k0, k1, k2] = g.kernel;
        let ins = vec![
            random_tensor(r, &[n, ci, dims[0], dims[1], dims[2]], 1.0),
            random_tensor(r, &[co, ci, k0, k1, k2], 1.0),
            random_tensor(r, &[co], 1.0),
        ];
        run_case(ins, n * co * od.iter().product::<usize>(), r, move |t, v| {
            t.conv3d(v[0], v[1], Some(v[2]), g)
        })
    });
    sweep!("tconv3d", |r| {
        let dims = [r.random_range(1..4), r.random_range(1..4), r.random_range(1..4)];
        let g = loop {
            let g = random_geometry(r, [4, 4, 4]);
            if g.tconv_output(dims).is_some() {
                break g;
            }
        };
        let (n, ci, co) = (r.random_range(1..3), r.random_range(1..3), r.random_range(1..3));
        let od = g.tconv_output(dims).unwrap();
        let [k0, k1, k2] = g.kernel;
        let ins = vec![
            random_tensor(r, &[n, ci, dims[0], dims[1], dims[2]], 1.0),
            random_tensor(r, &[ci, co, k0, k1, k2], 1.0),
            random_tensor(r, &[co], 1.0),
        ];
        run_case(ins, n * co * od.iter().product::<usize>(), r, move |t, v| {
            t.tconv3d(v[0], v[1], Some(v[2]), g)
        })
    });
    sweep!("batchnorm3d_train", |r| {
        let (n, c) = (r.random_range(2..4), r.random_range(1..3));
        let shape = [n, c, r.random_range(1..3), 2, r.random_range(1..3)];
        let numel = shape.iter().product();
        let ins = vec![
            random_tensor(r, &shape, 2.0),
            random_tensor(r, &[c], 1.5),
            random_tensor(r, &[c], 1.0),
        ];
        run_case(ins, numel, r, |t, v| Ok(t.batch_norm_train(v[0], v[1], v[2], 1e-5)?.0))
    });
    sweep!("batchnorm3d_eval", |r| {
        let (n, c) = (r.random_range(1..3), r.random_range(1..3));
        let shape = [n, c, 2, r.random_range(1..3), 2];
        let numel = shape.iter().product();
        let mean: Vec<f64> = (0..c).map(|_| r.random_range(-1.0..1.0)).collect();
        let var: Vec<f64> = (0..c).map(|_| r.random_range(0.2..2.0)).collect();
        let ins = vec![
            random_tensor(r, &shape, 2.0),
            random_tensor(r, &[c], 1.5),
            random_tensor(r, &[c], 1.0),
        ];
        run_case(ins, numel, r, move |t, v| t.batch_norm_eval(v[0], v[1], v[2], &mean, &var, 1e-5))
    });
    sweep!("mse_loss", |r| {
        let s = small_shape(r);
        let ins = vec![random_tensor(r, &s, 1.0), random_tensor(r, &s, 1.0)];
        run_case(ins, 1, r, |t, v| t.mse_loss(v[0], v[1]))
    });
    sweep!("cross_entropy", |r| {
        let (n, k) = (r.random_range(1..5), r.random_range(2..6));
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        run_case(vec![random_tensor(r, &[n, k], 3.0)], 1, r, move |t, v| {
            t.cross_entropy(v[0], &labels)
        })
    });
    reports
}
