//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use mpivdr::diffcore::{finite_diff_check, Tape, Tensor, SCALE_FLOOR};
use mpivdr::losses::{
    gan_loss_with_r1, ssim_with_grad, view_consistency_loss_with_grad, GanLossConfig, GanObjective, SsimConfig,
};
use mpivdr::mpi::{
    compositing_weights, compositing_weights_vjp, composite, composite_vjp, CameraPose, Intrinsics, Mpi, PlaneColors,
    WarpPlan,
};
use mpivdr::sampling::SampleBatch;
use mpivdr::vdr::{color_representation_on, evaluate_on, prepare_batch, VdRConfig, VdRModel};
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Alphas mixing exact zeros, exact ones and interior values.
pub fn random_alphas(rng: &mut ChaCha8Rng, planes: usize, h: usize, w: usize) -> Tensor {
    let data = (0..planes * h * w)
        .map(|_| match rng.random_range(0..6) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..1.0),
        })
        .collect();
    Tensor::from_vec(&[planes, h, w], data).unwrap()
}

pub fn random_mpi(rng: &mut ChaCha8Rng, planes: usize, size: usize) -> Mpi {
    let colors = random_tensor(rng, &[planes, size, size, 3], 0.0, 1.0);
    let alphas = random_alphas(rng, planes, size, size);
    let mut depths: Vec<f64> = (0..planes).map(|_| rng.random_range(0.8..3.0)).collect();
    depths.sort_by(f64::total_cmp);
    for i in 1..planes {
        if depths[i] <= depths[i - 1] {
            depths[i] = depths[i - 1] + 1e-3;
        }
    }
    Mpi::new(PlaneColors::PerPlane(colors), alphas, depths).unwrap()
}

/// Back-to-front over-compositing, one pixel at a time.
pub fn over_composite(colors: &Tensor, alphas: &Tensor) -> Vec<f64> {
    let s = alphas.shape();
    let (l, n) = (s[0], s[1] * s[2]);
    let mut out = vec![0.0; n * 3];
    for p in 0..n {
        for ch in 0..3 {
            let mut c = 0.0;
            for i in (0..l).rev() {
                let a = alphas.data()[i * n + p];
                c = colors.data()[(i * n + p) * 3 + ch] * a + (1.0 - a) * c;
            }
            out[p * 3 + ch] = c;
        }
    }
    out
}

/// Canonical pixel coordinate hit by the ray through target pixel `(x, y)`
/// on the plane `z = depth`.
pub fn ray_plane_source(pose: &CameraPose, depth: f64, x: f64, y: f64) -> Option<(f64, f64)> {
    let k = pose.intrinsics();
    let r = pose.rotation();
    let t = pose.translation();
    let dir_cam = Vector3::new((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
    let origin = -(r.transpose() * t);
    let dir = r.transpose() * dir_cam;
    if dir.z.abs() < 1e-12 {
        return None;
    }
    let s = (depth - origin.z) / dir.z;
    if s <= 0.0 {
        return None;
    }
    let p = origin + dir * s;
    Some((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// Bilinear sample of channel `ch` at continuous coordinate `(u, v)`, with
/// pixel centers at `k + 0.5` and zero outside.
pub fn scalar_bilinear(img: &Tensor, u: f64, v: f64, ch: usize) -> f64 {
    let s = img.shape();
    let (h, w) = (s[0] as i64, s[1] as i64);
    let c = if s.len() == 3 { s[2] } else { 1 };
    let (fx, fy) = (u - 0.5, v - 0.5);
    let (x0, y0) = (fx.floor() as i64, fy.floor() as i64);
    let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
    let px = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            img.data()[((y * w + x) as usize) * c + ch]
        }
    };
    px(x0, y0) * (1.0 - ax) * (1.0 - ay)
        + px(x0 + 1, y0) * ax * (1.0 - ay)
        + px(x0, y0 + 1) * (1.0 - ax) * ay
        + px(x0 + 1, y0 + 1) * ax * ay
}

/// Plane `i` at a pixel is a candidate unless `α_i = 0` or some nearer plane
/// has `α_j = 1`.
pub fn enumerate_candidates(alphas: &Tensor) -> Vec<(usize, usize)> {
    let s = alphas.shape();
    let (l, n) = (s[0], s[1] * s[2]);
    let mut out = Vec::new();
    for i in 0..l {
        for p in 0..n {
            let a = alphas.data()[i * n + p];
            let blocked = (0..i).any(|j| alphas.data()[j * n + p] == 1.0);
            if a != 0.0 && !blocked {
                out.push((i, p));
            }
        }
    }
    out
}

pub fn batch_pairs(batch: &SampleBatch, width: usize) -> Vec<(usize, usize)> {
    batch.entries.iter().map(|e| (e.plane, e.y * width + e.x)).collect()
}

/// A random camera within `max_deg` of rotation and `max_t` of translation.
pub fn random_small_pose(rng: &mut ChaCha8Rng, size: usize, max_deg: f64, max_t: f64) -> CameraPose {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let angle = rng.random_range(-max_deg..max_deg).to_radians();
    let rot: Matrix3<f64> = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner();
    let t = Vector3::new(
        rng.random_range(-max_t..max_t),
        rng.random_range(-max_t..max_t),
        rng.random_range(-max_t..max_t),
    );
    CameraPose::new(rot, t, Intrinsics::default_for(size)).unwrap()
}

pub fn tiny_model(seed: u64, rank: usize) -> VdRModel {
    VdRModel::new(&VdRConfig {
        rank,
        w_dim: 2,
        position_hidden: 6,
        position_layers: 3,
        view_hidden: 5,
        view_layers: 2,
        near: 0.5,
        far: 4.0,
        seed,
        ..VdRConfig::default()
    })
    .unwrap()
}

/// Each coordinate is differenced at two steps and keeps the smaller error:
/// round-off dominates at the small step for entries far below the gradient's
/// scale, and a leaky-ReLU kink within reach of the large step spoils only
/// that one. A wrong derivative fails at both.
const FD_STEPS: [f64; 2] = [1e-5, 1e-7];
/// SSIM has gradient entries near 1e-8 at window corners.
const FD_STEPS_SMOOTH: [f64; 2] = [1e-4, 1e-6];

fn two_step_check<F>(mut f: F, x: &[f64], steps: [f64; 2]) -> f64
where
    F: FnMut(&[f64]) -> mpivdr::Result<(f64, Vec<f64>)>,
{
    let a = finite_diff_check(&mut f, x, steps[0]).unwrap();
    let b = finite_diff_check(&mut f, x, steps[1]).unwrap();
    let scale = a.analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())) * SCALE_FLOOR;
    let err = |an: f64, nu: f64| (an - nu).abs() / (an.abs() + nu.abs()).max(scale).max(1e-12);
    a.analytic
        .iter()
        .zip(a.numeric.iter().zip(&b.numeric))
        .map(|(&an, (&n1, &n2))| err(an, n1).min(err(an, n2)))
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest scaled relative finite-difference error of each differentiable
/// entry point for one seed.
pub fn gradient_suite(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let (l, h) = (3, 3);

    // compositing weights, projected on a random cotangent
    let alphas = random_tensor(&mut r, &[l, h, h], 0.05, 0.95);
    let cot = random_tensor(&mut r, &[l, h, h], -1.0, 1.0);
    let rep = two_step_check(
        |x| {
            let a = Tensor::from_vec(&[l, h, h], x.to_vec()).unwrap();
            let w = compositing_weights(&a).unwrap();
            let g = compositing_weights_vjp(&a, &cot);
            Ok((dot(w.tensor().data(), cot.data()), g.into_data()))
        },
        alphas.data(),
        FD_STEPS,
    );
    out.push(("compositing_weights", rep));

    // composite with respect to colors and weights jointly
    let colors = random_tensor(&mut r, &[l, h, h, 3], 0.0, 1.0);
    let weights = compositing_weights(&alphas).unwrap().into_tensor();
    let cot_img = random_tensor(&mut r, &[h, h, 3], -1.0, 1.0);
    let nc = colors.numel();
    let mut x0 = colors.data().to_vec();
    x0.extend_from_slice(weights.data());
    let rep = two_step_check(
        |x| {
            let c = Tensor::from_vec(&[l, h, h, 3], x[..nc].to_vec()).unwrap();
            let w = Tensor::from_vec(&[l, h, h], x[nc..].to_vec()).unwrap();
            let img = composite(&c, &mpivdr::mpi::AlphaWeights::from_tensor(w.clone()).unwrap()).unwrap();
            let (gc, gw) = composite_vjp(&c, &w, &cot_img);
            let mut g = gc.into_data();
            g.extend(gw.into_data());
            Ok((dot(img.data(), cot_img.data()), g))
        },
        &x0,
        FD_STEPS,
    );
    out.push(("composite", rep));

    // warp with respect to source pixels
    let s = 6;
    let pose = random_small_pose(&mut r, s, 6.0, 0.05);
    let hmat = mpivdr::mpi::plane_homography(&pose, r.random_range(1.0..2.0)).unwrap();
    let plan = WarpPlan::new(&hmat, s, s);
    let img = random_tensor(&mut r, &[s, s, 3], 0.0, 1.0);
    let cot_w = random_tensor(&mut r, &[s, s, 3], -1.0, 1.0);
    let rep = two_step_check(
        |x| {
            let src = Tensor::from_vec(&[s, s, 3], x.to_vec()).unwrap();
            let warped = plan.apply(&src).unwrap();
            Ok((dot(warped.data(), cot_w.data()), plan.vjp(&cot_w).unwrap().into_data()))
        },
        img.data(),
        FD_STEPS,
    );
    out.push(("warp_image", rep));

    // color representation through its recorded form
    let (n, rank) = (4, 3);
    let g = random_tensor(&mut r, &[n, 3 * rank], -1.0, 1.0);
    let hv = random_tensor(&mut r, &[1, rank], -1.0, 1.0);
    let g0 = random_tensor(&mut r, &[n, 3], 0.0, 1.0);
    let cot_s = random_tensor(&mut r, &[n, 3], -1.0, 1.0);
    let (ng, nh) = (g.numel(), hv.numel());
    let mut x0 = g.data().to_vec();
    x0.extend_from_slice(hv.data());
    x0.extend_from_slice(g0.data());
    let rep = two_step_check(
        |x| {
            let mut tape = Tape::new();
            let gv = tape.leaf(Tensor::from_vec(&[n, 3 * rank], x[..ng].to_vec()).unwrap());
            let hh = tape.leaf(Tensor::from_vec(&[1, rank], x[ng..ng + nh].to_vec()).unwrap());
            let b = tape.leaf(Tensor::from_vec(&[n, 3], x[ng + nh..].to_vec()).unwrap());
            let s = color_representation_on(&mut tape, gv, hh, b).unwrap();
            let c = tape.leaf(cot_s.clone());
            let prod = tape.mul(s, c).unwrap();
            let loss = tape.sum(prod);
            let value = tape.value(loss).data()[0];
            let grads = tape.backward(loss).unwrap();
            let mut gr = grads.get(gv).unwrap().data().to_vec();
            gr.extend_from_slice(grads.get(hh).unwrap().data());
            gr.extend_from_slice(grads.get(b).unwrap().data());
            Ok((value, gr))
        },
        &x0,
        FD_STEPS,
    );
    out.push(("color_representation", rep));

    // ssim and L_vc on 13×13×2 images with differences bounded away from zero
    let cfg = SsimConfig::default();
    let (sh, sc) = (13, 2);
    let a = random_tensor(&mut r, &[sh, sh, sc], 0.3, 0.7);
    let b = Tensor::from_vec(
        &[sh, sh, sc],
        a.data()
            .iter()
            .map(|&v| v + if r.random_bool(0.5) { 1.0 } else { -1.0 } * r.random_range(0.1..0.3))
            .collect(),
    )
    .unwrap();
    let na = a.numel();
    let mut x0 = a.data().to_vec();
    x0.extend_from_slice(b.data());
    let rep = two_step_check(
        |x| {
            let a = Tensor::from_vec(&[sh, sh, sc], x[..na].to_vec()).unwrap();
            let b = Tensor::from_vec(&[sh, sh, sc], x[na..].to_vec()).unwrap();
            let (v, ga, gb) = ssim_with_grad(&a, &b, &cfg).unwrap();
            let mut g = ga.into_data();
            g.extend(gb.into_data());
            Ok((v, g))
        },
        &x0,
        FD_STEPS_SMOOTH,
    );
    out.push(("ssim", rep));
    let rep = two_step_check(
        |x| {
            let a = Tensor::from_vec(&[sh, sh, sc], x[..na].to_vec()).unwrap();
            let b = Tensor::from_vec(&[sh, sh, sc], x[na..].to_vec()).unwrap();
            let (v, ga, gb) = view_consistency_loss_with_grad(&a, &b, 0.85, &cfg).unwrap();
            let mut g = ga.into_data();
            g.extend(gb.into_data());
            Ok((v, g))
        },
        &x0,
        FD_STEPS_SMOOTH,
    );
    out.push(("view_consistency_loss", rep));

    // adversarial objective, both readings
    let mut worst: f64 = 0.0;
    for objective in [GanObjective::Printed, GanObjective::NonSaturating] {
        let gcfg = GanLossConfig {
            objective,
            ..GanLossConfig::default()
        };
        let (nf, nr, gshape) = (3, 2, [2usize, 2, 3]);
        let gsz: usize = gshape.iter().product();
        let x0: Vec<f64> = (0..nf + nr + nr * gsz + 1).map(|_| r.random_range(-3.0..3.0)).collect();
        let rep = two_step_check(
            |x| {
                let grads: Vec<Tensor> = (0..nr)
                    .map(|k| Tensor::from_vec(&gshape, x[nf + nr + k * gsz..nf + nr + (k + 1) * gsz].to_vec()).unwrap())
                    .collect();
                let l = gan_loss_with_r1(&x[..nf], &x[nf..nf + nr], &grads, x[x.len() - 1], &gcfg).unwrap();
                let mut g = l.d_fake.clone();
                g.extend(&l.d_real);
                for t in &l.d_grad_real {
                    g.extend_from_slice(t.data());
                }
                g.push(l.d_lvc);
                Ok((l.value, g))
            },
            &x0,
            FD_STEPS,
        );
        worst = worst.max(rep);
    }
    out.push(("gan_loss_with_r1", worst));

    // full batch evaluation with respect to every network parameter
    let mpi = random_mpi(&mut r, 3, 5);
    let pose = random_small_pose(&mut r, 5, 4.0, 0.03);
    let view = mpivdr::mpi::TargetView::new(&mpi, &pose).unwrap();
    let batch = mpivdr::sampling::sample_pixels(view.weights(), mpi.depths(), 0.5, seed).unwrap();
    let mut model = tiny_model(seed, 2);
    let prepared = prepare_batch(&model, &batch, &view).unwrap();
    let dir = pose.view_direction();
    let w = [0.3, -0.7];
    let vin = model.view_input(&dir, &w).unwrap();
    let cot_b = random_tensor(&mut r, &[batch.len(), 3], -1.0, 1.0);
    let np = model.position_net().num_values();
    let mut x0 = model.position_net().flat_values();
    x0.extend(model.view_net().flat_values());
    let rep = two_step_check(
        |x| {
            model.position_net_mut().set_flat_values(&x[..np]).unwrap();
            model.view_net_mut().set_flat_values(&x[np..]).unwrap();
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let s = evaluate_on(&mut tape, &model, &bound, &prepared, &vin).unwrap();
            let c = tape.leaf(cot_b.clone());
            let prod = tape.mul(s, c).unwrap();
            let loss = tape.sum(prod);
            let value = tape.value(loss).data()[0];
            let grads = tape.backward(loss).unwrap();
            model.zero_grad();
            model.accumulate_grads(&bound, &grads).unwrap();
            let mut g = model.position_net().flat_grads();
            g.extend(model.view_net().flat_grads());
            Ok((value, g))
        },
        &x0,
        FD_STEPS,
    );
    out.push(("evaluate_batch", rep));
    out
}
