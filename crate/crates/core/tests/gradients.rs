//! Finite-difference gradient checks for every differentiable op.
//!
//! Analytic f32 gradients are compared against central differences of the
//! independent f64 reference implementations, 20+ random seeds per op.

mod common;

use common::*;
use fgwk::Tensor;
use fgwk_refimpl as ref64;
use rand::Rng;

const SEEDS: u64 = 20;

#[test]
fn matmul_gradients() {
    let (m, k, n) = (3, 4, 2);
    for seed in 0..SEEDS {
        let mut rng = rng_for(seed, "matmul");
        let a = random_uniform(&mut rng, m * k, -1.0, 1.0);
        let b = random_uniform(&mut rng, k * n, -1.0, 1.0);
        let w = readout_weights(&mut rng, m * n);

        let bb = b.clone();
        let ww = w.clone();
        GradCheck {
            tol: 1e-4,
            ..Default::default()
        }
        .check_one(
            &a,
            &[m, k],
            |x| {
                let bt = tensor_from(&[k, n], bb.clone());
                engine_readout(&x.matmul(&bt).unwrap(), &ww)
            },
            |p| reference_readout(&ref64::matmul(p, &to_f64(&b), m, k, n), &w),
            "matmul dA",
        );

        let aa = a.clone();
        let ww = w.clone();
        GradCheck {
            tol: 1e-4,
            ..Default::default()
        }
        .check_one(
            &b,
            &[k, n],
            |x| {
                let at = tensor_from(&[m, k], aa.clone());
                engine_readout(&at.matmul(x).unwrap(), &ww)
            },
            |p| reference_readout(&ref64::matmul(&to_f64(&a), p, m, k, n), &w),
            "matmul dB",
        );
    }
}

#[test]
fn conv2d_gradients() {
    for &(c, h, wid, oc, k, stride, pad) in &[
        (3usize, 8usize, 8usize, 4usize, 3usize, 1usize, 1usize),
        (3, 8, 8, 2, 3, 2, 1),
        (2, 5, 6, 3, 2, 2, 0),
    ] {
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wid + 2 * pad - k) / stride + 1;
        for seed in 0..SEEDS {
            let mut rng = rng_for(seed, "conv2d");
            let x = random_uniform(&mut rng, c * h * wid, -1.0, 1.0);
            let wv = random_uniform(&mut rng, oc * c * k * k, -1.0, 1.0);
            let ro = readout_weights(&mut rng, oc * oh * ow);

            let wv2 = wv.clone();
            let ro2 = ro.clone();
            GradCheck::default().check_one(
                &x,
                &[c, h, wid],
                |t| {
                    let wt = tensor_from(&[oc, c, k, k], wv2.clone());
                    engine_readout(&t.conv2d(&wt, stride, pad).unwrap(), &ro2)
                },
                |p| {
                    reference_readout(
                        &ref64::conv2d(p, &to_f64(&wv), c, h, wid, oc, k, stride, pad),
                        &ro,
                    )
                },
                "conv2d dx",
            );

            let x2 = x.clone();
            let ro2 = ro.clone();
            GradCheck::default().check_one(
                &wv,
                &[oc, c, k, k],
                |t| {
                    let xt = tensor_from(&[c, h, wid], x2.clone());
                    engine_readout(&xt.conv2d(t, stride, pad).unwrap(), &ro2)
                },
                |p| {
                    reference_readout(
                        &ref64::conv2d(&to_f64(&x), p, c, h, wid, oc, k, stride, pad),
                        &ro,
                    )
                },
                "conv2d dw",
            );
        }
    }
}

#[test]
fn elementwise_gradients() {
    for seed in 0..SEEDS {
        let mut rng = rng_for(seed, "elementwise");
        let n = 17;
        let x = random_away_from_zero(&mut rng, n, 0.2, 1.5);
        let w = readout_weights(&mut rng, n);

        let ww = w.clone();
        GradCheck::default().check_one(
            &x,
            &[n],
            |t| engine_readout(&t.relu(), &ww),
            |p| reference_readout(&ref64::relu(p), &w),
            "relu",
        );

        let ww = w.clone();
        GradCheck::default().check_one(
            &x,
            &[n],
            |t| engine_readout(&t.gelu(), &ww),
            |p| reference_readout(&ref64::gelu(p), &w),
            "gelu",
        );

        let ww = w.clone();
        GradCheck::default().check_one(
            &x,
            &[n],
            |t| engine_readout(&t.scale(-1.7), &ww),
            |p| reference_readout(&p.iter().map(|v| v * -1.7).collect::<Vec<_>>(), &w),
            "scale",
        );

        let other = random_uniform(&mut rng, n, -1.0, 1.0);
        let oo = other.clone();
        let ww = w.clone();
        GradCheck::default().check_one(
            &x,
            &[n],
            |t| {
                let o = tensor_from(&[n], oo.clone());
                engine_readout(&t.add(&o).unwrap(), &ww)
            },
            |p| {
                let sum: Vec<f64> = p.iter().zip(&other).map(|(a, &b)| a + b as f64).collect();
                reference_readout(&sum, &w)
            },
            "add",
        );

        let oo = other.clone();
        let ww = w.clone();
        GradCheck::default().check_one(
            &x,
            &[n],
            |t| {
                let o = tensor_from(&[n], oo.clone());
                engine_readout(&t.mul(&o).unwrap(), &ww)
            },
            |p| {
                let prod: Vec<f64> = p.iter().zip(&other).map(|(a, &b)| a * b as f64).collect();
                reference_readout(&prod, &w)
            },
            "mul",
        );
    }
}

#[test]
fn bias_broadcast_gradients() {
    let (n, d) = (4, 3);
    for seed in 0..SEEDS {
        let mut rng = rng_for(seed, "bias");
        let x = random_uniform(&mut rng, n * d, -1.0, 1.0);
        let b = random_uniform(&mut rng, d, -0.5, 0.5);
        let w = readout_weights(&mut rng, n * d);

        let bb = b.clone();
        let ww = w.clone();
        GradCheck::default().check_one(
            &x,
            &[n, d],
            |t| {
                let bt = tensor_from(&[d], bb.clone());
                engine_readout(&t.add_row_bias(&bt).unwrap(), &ww)
            },
            |p| {
                let mut out = p.to_vec();
                for row in out.chunks_mut(d) {
                    for (o, &bv) in row.iter_mut().zip(&b) {
                        *o += bv as f64;
                    }
                }
                reference_readout(&out, &w)
            },
            "add_row_bias dx",
        );

        let xx = x.clone();
        let ww = w.clone();
        GradCheck::default().check_one(
            &b,
            &[d],
            |t| {
                let xt = tensor_from(&[n, d], xx.clone());
                engine_readout(&xt.add_row_bias(t).unwrap(), &ww)
            },
            |p| {
                let mut out = to_f64(&x);
                for row in out.chunks_mut(d) {
                    for (o, &bv) in row.iter_mut().zip(p) {
                        *o += bv;
                    }
                }
                reference_readout(&out, &w)
            },
            "add_row_bias db",
        );

        // channel bias over [C,H,W]
        let (c, hh, wwid) = (3, 2, 2);
        let xc = random_uniform(&mut rng, c * hh * wwid, -1.0, 1.0);
        let bc = random_uniform(&mut rng, c, -0.5, 0.5);
        let wc = readout_weights(&mut rng, c * hh * wwid);

        let bb = bc.clone();
        let ww = wc.clone();
        GradCheck::default().check_one(
            &xc,
            &[c, hh, wwid],
            |t| {
                let bt = tensor_from(&[c], bb.clone());
                engine_readout(&t.add_channel_bias(&bt).unwrap(), &ww)
            },
            |p| {
                let mut out = p.to_vec();
                for (ch, plane) in out.chunks_mut(hh * wwid).enumerate() {
                    for o in plane.iter_mut() {
                        *o += bc[ch] as f64;
                    }
                }
                reference_readout(&out, &wc)
            },
            "add_channel_bias dx",
        );

        let ww = wc.clone();
        let xx = xc.clone();
        GradCheck::default().check_one(
            &bc,
            &[c],
            |t| {
                let xt = tensor_from(&[c, hh, wwid], xx.clone());
                engine_readout(&xt.add_channel_bias(t).unwrap(), &ww)
            },
            |p| {
                let mut out = to_f64(&xc);
                for (ch, plane) in out.chunks_mut(hh * wwid).enumerate() {
                    for o in plane.iter_mut() {
                        *o += p[ch];
                    }
                }
                reference_readout(&out, &wc)
            },
            "add_channel_bias db",
        );
    }
}

#[test]
fn shape_op_gradients() {
    for seed in 0..SEEDS {
        let mut rng = rng_for(seed, "shape");
        let x = random_uniform(&mut rng, 12, -1.0, 1.0);
        let w = readout_weights(&mut rng, 12);

        let ww = w.clone();
        GradCheck::default().check_one(
            &x,
            &[2, 6],
            |t| engine_readout(&t.reshape(&[3, 4]).unwrap(), &ww),
            |p| reference_readout(p, &w),
            "reshape",
        );

        let ww = w.clone();
        GradCheck::default().check_one(
            &x,
            &[3, 4],
            |t| engine_readout(&t.transpose2d().unwrap(), &ww),
            |p| reference_readout(&ref64::transpose(p, 3, 4), &w),
            "transpose2d",
        );

        // gather with a repeated index exercises scatter-add accumulation.
        let xg = random_uniform(&mut rng, 6 * 3, -1.0, 1.0);
        let idx = vec![0usize, 2, 2, 5];
        let wg = readout_weights(&mut rng, idx.len() * 3);
        let ww = wg.clone();
        let ii = idx.clone();
        GradCheck::default().check_one(
            &xg,
            &[6, 3],
            |t| engine_readout(&t.gather_rows(&ii).unwrap(), &ww),
            |p| reference_readout(&ref64::gather_rows(p, 3, &idx), &wg),
            "gather_rows",
        );
    }
}

#[test]
fn concat_gradients() {
    let parts = [(2usize, 4usize), (1, 4), (3, 4)];
    for seed in 0..SEEDS {
        let mut rng = rng_for(seed, "concat");
        let datas: Vec<Vec<f32>> = parts
            .iter()
            .map(|&(r, c)| random_uniform(&mut rng, r * c, -1.0, 1.0))
            .collect();
        let total: usize = parts.iter().map(|&(r, c)| r * c).sum();
        let w = readout_weights(&mut rng, total);

        for target in 0..parts.len() {
            let datas2 = datas.clone();
            let ww = w.clone();
            GradCheck::default().check_one(
                &datas[target],
                &[parts[target].0, parts[target].1],
                |t| {
                    let built: Vec<Tensor> = datas2
                        .iter()
                        .enumerate()
                        .map(|(i, d)| {
                            if i == target {
                                t.clone()
                            } else {
                                tensor_from(&[parts[i].0, parts[i].1], d.clone())
                            }
                        })
                        .collect();
                    let refs: Vec<&Tensor> = built.iter().collect();
                    engine_readout(&Tensor::concat_rows(&refs).unwrap(), &ww)
                },
                |p| {
                    let mut out: Vec<f64> = Vec::new();
                    for (i, d) in datas.iter().enumerate() {
                        if i == target {
                            out.extend_from_slice(p);
                        } else {
                            out.extend(to_f64(d));
                        }
                    }
                    reference_readout(&out, &w)
                },
                "concat_rows",
            );
        }
    }
}

#[test]
fn reduction_gradients() {
    for seed in 0..SEEDS {
        let mut rng = rng_for(seed, "reduce");
        let (n, d) = (5, 3);
        let x = random_uniform(&mut rng, n * d, -1.0, 1.0);
        let w = readout_weights(&mut rng, d);

        let ww = w.clone();
        GradCheck::default().check_one(
            &x,
            &[n, d],
            |t| engine_readout(&t.row_mean().unwrap(), &ww),
            |p| reference_readout(&ref64::row_mean(p, n, d), &w),
            "row_mean",
        );

        let (c, hh, wid) = (3, 2, 2);
        let xs = random_uniform(&mut rng, c * hh * wid, -1.0, 1.0);
        let ws = readout_weights(&mut rng, c);
        let ww = ws.clone();
        GradCheck::default().check_one(
            &xs,
            &[c, hh, wid],
            |t| engine_readout(&t.spatial_mean().unwrap(), &ww),
            |p| reference_readout(&ref64::spatial_mean(p, c, hh * wid), &ws),
            "spatial_mean",
        );

        let xv = random_uniform(&mut rng, 7, -1.0, 1.0);
        GradCheck::default().check_one(
            &xv,
            &[7],
            |t| t.sum_all(),
            |p| p.iter().sum(),
            "sum_all",
        );
        GradCheck::default().check_one(
            &xv,
            &[7],
            |t| t.mean_all(),
            |p| p.iter().sum::<f64>() / p.len() as f64,
            "mean_all",
        );

        let xi = random_uniform(&mut rng, 9, -1.0, 1.0);
        GradCheck::default().check_one(
            &xi,
            &[9],
            |t| t.select_element(4).unwrap(),
            |p| p[4],
            "select_element",
        );
    }
}

#[test]
fn softmax_and_cross_entropy_gradients() {
    for seed in 0..SEEDS {
        let mut rng = rng_for(seed, "softmax");
        let (rows, d) = (3, 5);
        let x = random_uniform(&mut rng, rows * d, -2.0, 2.0);
        let w = readout_weights(&mut rng, rows * d);

        let ww = w.clone();
        GradCheck::default().check_one(
            &x,
            &[rows, d],
            |t| engine_readout(&t.softmax().unwrap(), &ww),
            |p| reference_readout(&ref64::softmax_rows(p, rows, d), &w),
            "softmax 2d",
        );

        let x1 = random_uniform(&mut rng, d, -2.0, 2.0);
        let w1 = readout_weights(&mut rng, d);
        let ww = w1.clone();
        GradCheck::default().check_one(
            &x1,
            &[d],
            |t| engine_readout(&t.softmax().unwrap(), &ww),
            |p| reference_readout(&ref64::softmax_row(p), &w1),
            "softmax 1d",
        );

        let (b, c) = (4, 5);
        let logits = random_uniform(&mut rng, b * c, -2.0, 2.0);
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
        let ll = labels.clone();
        GradCheck::default().check_one(
            &logits,
            &[b, c],
            |t| Tensor::cross_entropy(t, &ll).unwrap(),
            |p| ref64::cross_entropy(p, &labels, b, c),
            "cross_entropy",
        );
    }
}

/// Composite graph: conv -> relu -> matmul -> cross-entropy, checked for
/// every differentiable input.
#[test]
fn composite_graph_gradients() {
    let (c, h, wid) = (2usize, 6usize, 6usize);
    let (oc, k, stride, pad) = (3usize, 3usize, 2usize, 1usize);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wid + 2 * pad - k) / stride + 1;
    let classes = 4usize;

    for seed in 0..SEEDS {
        let mut rng = rng_for(seed, "composite");
        let x = random_uniform(&mut rng, c * h * wid, -1.0, 1.0);
        let convw = random_uniform(&mut rng, oc * c * k * k, -0.8, 0.8);
        let mat = random_uniform(&mut rng, oc * oh * ow * classes, -0.5, 0.5);
        let label = rng.random_range(0..classes);

        let engine = |xt: &Tensor, wt: &Tensor, mt: &Tensor| {
            let feat = xt.conv2d(wt, stride, pad).unwrap().relu();
            let flat = feat.reshape(&[1, oc * oh * ow]).unwrap();
            let logits = flat.matmul(mt).unwrap();
            Tensor::cross_entropy(&logits, &[label]).unwrap()
        };
        let reference = |x64: &[f64], w64: &[f64], m64: &[f64]| {
            let feat = ref64::relu(&ref64::conv2d(x64, w64, c, h, wid, oc, k, stride, pad));
            let logits = ref64::matmul(&feat, m64, 1, oc * oh * ow, classes);
            ref64::cross_entropy(&logits, &[label], 1, classes)
        };

        let (cw, mt) = (convw.clone(), mat.clone());
        GradCheck::default().check_one(
            &x,
            &[c, h, wid],
            |t| {
                engine(
                    t,
                    &tensor_from(&[oc, c, k, k], cw.clone()),
                    &tensor_from(&[oc * oh * ow, classes], mt.clone()),
                )
            },
            |p| reference(p, &to_f64(&convw), &to_f64(&mat)),
            "composite dx",
        );

        let (xx, mt) = (x.clone(), mat.clone());
        GradCheck::default().check_one(
            &convw,
            &[oc, c, k, k],
            |t| {
                engine(
                    &tensor_from(&[c, h, wid], xx.clone()),
                    t,
                    &tensor_from(&[oc * oh * ow, classes], mt.clone()),
                )
            },
            |p| reference(&to_f64(&x), p, &to_f64(&mat)),
            "composite dconv",
        );

        let (xx, cw) = (x.clone(), convw.clone());
        GradCheck::default().check_one(
            &mat,
            &[oc * oh * ow, classes],
            |t| {
                engine(
                    &tensor_from(&[c, h, wid], xx.clone()),
                    &tensor_from(&[oc, c, k, k], cw.clone()),
                    t,
                )
            },
            |p| reference(&to_f64(&x), &to_f64(&convw), p),
            "composite dmat",
        );
    }
}
