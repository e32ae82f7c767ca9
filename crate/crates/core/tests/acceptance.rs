//! Acceptance criteria 1 to 10. Runs without the libtest harness so every
//! criterion prints one PASS/FAIL line even when the suite succeeds.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::{E, PI};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use paver::embed::{deform_embed, deform_embed_f32, EmbedParams, Frame};
use paver::fusion::{stack_tokens, FusedFeatures, FusionParams};
use paver::geom::{
    compute_offset_table, direction, er_from_sph, patch_centers, rotation_matrix, sph_from_er, Format, GridConfig,
    OffsetTable, PixelCoord, SphereCoord,
};
use paver::io::encode_ppm;
use paver::metrics::{auc_borji, auc_judd, cc, psnr_weighted, rank_auc, ErrorChannel, FixationSet};
use paver::model::{ModelConfig, PaverModel};
use paver::nn::{grad_check, Parameters, Tensor};
use paver::objective::{
    default_epsilon, loss_and_gradients, loss_global, loss_spatial, loss_temporal, moving_average, train, LossWeights,
    SpatialNeighborhood, TrainConfig,
};
use paver::saliency::{saliency_scores, vmf_kernel, ScoreWeights};
use paver::synth::{blob_field, moving_disc_clip, render};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed < limit, format!("{what} took {elapsed:?}, limit {limit:?}"))
}

fn c1_geometry() -> Outcome {
    let start = Instant::now();
    let mut worst_ortho: f64 = 0.0;
    for i in 0..32 {
        for j in 0..16 {
            let c = SphereCoord::new(2.0 * PI * i as f64 / 32.0, -PI / 2.0 + PI * (j as f64 + 0.5) / 16.0);
            let r = rotation_matrix(c);
            for a in 0..3 {
                for b in 0..3 {
                    let dot: f64 = (0..3).map(|k| r[k][a] * r[k][b]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    worst_ortho = worst_ortho.max((dot - want).abs());
                }
            }
        }
    }
    ensure(worst_ortho < 1e-12, format!("|RᵀR − I|max = {worst_ortho:e}"))?;

    let cfg = GridConfig::new(448, 224, 16).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_rt: f64 = 0.0;
    for _ in 0..1000 {
        let p = PixelCoord::new(rng.random_range(0.0..448.0), rng.random_range(0.0..224.0));
        let s = sph_from_er(p, &cfg);
        let back = sph_from_er(er_from_sph(s, &cfg), &cfg);
        let (a, b) = (direction(s), direction(back));
        let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        let ang = (cross.iter().map(|v| v * v).sum::<f64>().sqrt()).atan2(a.iter().zip(&b).map(|(x, y)| x * y).sum());
        worst_rt = worst_rt.max(ang);
    }
    ensure(worst_rt < 1e-10, format!("ERP round trip error {worst_rt:e} rad"))?;

    let table = compute_offset_table(&cfg, Format::Erp).map_err(|e| e.to_string())?;
    let (cols, s, w) = (cfg.cols(), cfg.patch as f64, cfg.width as f64);
    let mut worst_shift: f64 = 0.0;
    for r in 0..cfg.rows() {
        for c in 0..cols {
            for k in 1..cols {
                let base = table.patch(r * cols + c);
                let moved = table.patch(r * cols + (c + k) % cols);
                for (p, q) in base.iter().zip(moved) {
                    let du = (p.u + k as f64 * s).rem_euclid(w) - q.u;
                    let du = du - w * (du / w).round();
                    worst_shift = worst_shift.max(du.abs()).max((p.v - q.v).abs());
                }
            }
        }
    }
    ensure(worst_shift < 1e-9, format!("yaw-shift equivariance error {worst_shift:e} px"))?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(5), "geometry suite")?;
    Ok(format!(
        "ortho {worst_ortho:.1e}, round trip {worst_rt:.1e} rad, yaw shift {worst_shift:.1e} px, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn c2_embedding() -> Outcome {
    let cfg = GridConfig::new(64, 32, 16).map_err(|e| e.to_string())?;
    let table = OffsetTable::regular_grid(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let params = EmbedParams::random(&mut rng, 24, 16);
    let s = 16;
    let (mut err32, mut drift, mut scale) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let data: Vec<f64> = (0..3 * 64 * 32).map(|_| rng.random_range(0.0..1.0)).collect();
        let frame = Frame::new(64, 32, Format::Erp, data).map_err(|e| e.to_string())?;
        let tokens = deform_embed(&frame, &table, &params).map_err(|e| e.to_string())?;
        let f32_tokens = deform_embed_f32(&frame.to_f32(), &table, &params).map_err(|e| e.to_string())?;
        // plain patchify: block (r, c), flattened as (channel, row, column), then x·Wᵀ + b
        for r in 0..cfg.rows() {
            for c in 0..cfg.cols() {
                let i = r * cfg.cols() + c;
                let mut flat = Vec::with_capacity(3 * s * s);
                for ch in 0..3 {
                    for y in 0..s {
                        for x in 0..s {
                            flat.push(frame.pixel(ch, c * s + x, r * s + y));
                        }
                    }
                }
                let flat32: Vec<f32> = flat.iter().map(|&v| v as f32).collect();
                for o in 0..24 {
                    let mut acc = 0.0;
                    for (wv, xv) in params.weight.row(o).iter().zip(&flat) {
                        acc += wv * xv;
                    }
                    let want = acc + params.bias.data()[o];
                    let got = tokens.row(i)[o];
                    ensure(got.to_bits() == want.to_bits(), format!("patch {i} channel {o}: {got} vs {want}"))?;
                    let mut acc32 = 0.0f32;
                    for (wv, xv) in params.weight.row(o).iter().zip(&flat32) {
                        acc32 += *wv as f32 * xv;
                    }
                    let want32 = (acc32 + params.bias.data()[o] as f32) as f64;
                    let g32 = f32_tokens[i * 24 + o] as f64;
                    err32 = err32.max((g32 - want32).abs());
                    drift = drift.max((g32 - want).abs());
                    scale = scale.max(want.abs());
                }
            }
        }
    }
    let worst32 = err32 / scale;
    let drift = drift / scale;
    ensure(worst32 < 1e-6, format!("f32 relative error {worst32:e}"))?;
    Ok(format!(
        "f64 bitwise on 10 frames; f32 vs 32-bit patchify {worst32:.1e} relative; f32 vs 64-bit reference {drift:.1e} relative"
    ))
}

fn brute_scores(global: &[Vec<f64>], local: &[Vec<Vec<f64>>], w: ScoreWeights) -> Vec<Vec<f64>> {
    let t_len = local.len();
    let n = local[0].len();
    let c = global[0].len();
    let norm2 = |a: &[f64], b: &[f64]| -> f64 { (0..a.len()).map(|k| (a[k] - b[k]).powi(2)).sum() };
    let mut out = vec![vec![0.0; n]; t_len];
    for t in 0..t_len {
        let spatial: Vec<f64> = (0..c).map(|k| local[t].iter().map(|x| x[k]).sum::<f64>() / n as f64).collect();
        for i in 0..n {
            let temporal: Vec<f64> = (0..c).map(|k| local.iter().map(|f| f[i][k]).sum::<f64>() / t_len as f64).collect();
            let x = &local[t][i];
            out[t][i] = w.alpha * norm2(x, &global[t]) + w.beta * norm2(x, &temporal) + w.gamma * norm2(x, &spatial);
        }
    }
    out
}

fn c3_scores() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = rng.random_range(1..=4);
        let n = rng.random_range(1..=16);
        let c = rng.random_range(1..=8);
        let w = ScoreWeights {
            alpha: rng.random_range(0.0..2.0),
            beta: rng.random_range(0.0..2.0),
            gamma: rng.random_range(0.0..2.0),
        };
        let global: Vec<Vec<f64>> = (0..t).map(|_| (0..c).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let local: Vec<Vec<Vec<f64>>> = (0..t)
            .map(|_| (0..n).map(|_| (0..c).map(|_| rng.random_range(-2.0..2.0)).collect()).collect())
            .collect();
        let fused = FusedFeatures::new(
            Tensor::from_rows(&global).map_err(|e| e.to_string())?,
            Tensor::from_rows(&local.concat()).map_err(|e| e.to_string())?,
            t,
            n,
        )
        .map_err(|e| e.to_string())?;
        let got = saliency_scores(&fused, w);
        let want = brute_scores(&global, &local, w);
        for tt in 0..t {
            for i in 0..n {
                worst = worst.max((got.row(tt)[i] - want[tt][i]).abs());
            }
        }
    }
    ensure(worst < 1e-10, format!("max deviation from direct norms {worst:e}"))?;
    let hand = FusedFeatures::new(
        Tensor::from_rows(&[vec![0.0]]).unwrap(),
        Tensor::from_rows(&[vec![1.0], vec![-1.0]]).unwrap(),
        1,
        2,
    )
    .map_err(|e| e.to_string())?;
    let y = saliency_scores(&hand, ScoreWeights::default());
    ensure(y.data() == [2.0, 2.0], format!("hand case gave {:?}", y.data()))?;
    Ok(format!("100 random cases within {worst:.1e}; hand case [2, 2]"))
}

fn c4_kernel() -> Outcome {
    let mut report = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for a in [0.5, 1.0, 5.0, 20.0] {
        // midpoint rule over a latitude-longitude grid, kernel centered at a random direction
        let center = direction(SphereCoord::new(rng.random_range(0.0..2.0 * PI), rng.random_range(-1.2..1.2)));
        let (nt, np) = (1600, 800);
        let (dt, dp) = (2.0 * PI / nt as f64, PI / np as f64);
        let mut integral = 0.0;
        for j in 0..np {
            let phi = -PI / 2.0 + (j as f64 + 0.5) * dp;
            let ring = phi.cos() * dt * dp;
            for i in 0..nt {
                let d = direction(SphereCoord::new((i as f64 + 0.5) * dt, phi));
                let cos_psi = (d[0] * center[0] + d[1] * center[1] + d[2] * center[2]).clamp(-1.0, 1.0);
                integral += vmf_kernel(a, cos_psi) * ring;
            }
        }
        let rel = (integral / (4.0 * PI) - 1.0).abs();
        ensure(rel < 0.005, format!("a={a}: integral {integral} is {:.3}% from 4π", 100.0 * rel))?;
        report.push(format!("a={a}: {:.4}%", 100.0 * rel));
    }
    let peak = vmf_kernel(1.0, 1.0);
    let want = E / 1f64.sinh();
    ensure((peak - want).abs() < 1e-6 && (peak - 2.31304).abs() < 1e-5, format!("peak {peak}"))?;
    Ok(format!("quadrature {}; peak {peak:.6}", report.join(", ")))
}

fn col(values: &[f64]) -> Tensor {
    Tensor::new(vec![values.len(), 1], values.to_vec()).unwrap()
}

fn c5_losses() -> Outcome {
    let cfg = GridConfig::new(64, 32, 8).map_err(|e| e.to_string())?;
    let nbhd = SpatialNeighborhood::for_grid(Format::Erp, &cfg, default_epsilon(&cfg)).map_err(|e| e.to_string())?;
    let (t, n) = (4, cfg.num_patches());
    let constant = Tensor::new(vec![t * n, 3], [0.7, -0.2, 1.5].repeat(t * n)).unwrap();
    let lt = loss_temporal(&constant, t, n).map_err(|e| e.to_string())?;
    let ls = loss_spatial(&constant, t, &nbhd).map_err(|e| e.to_string())?;
    let lg = loss_global(&Tensor::new(vec![t, 3], [0.7, -0.2, 1.5].repeat(t)).unwrap());
    ensure(lt == 0.0 && ls.abs() < 1e-24 && lg == 0.0, format!("constant fields gave {lt}, {ls}, {lg}"))?;
    let alt = loss_temporal(&col(&[1.0, -1.0, 1.0, -1.0, 1.0]), 5, 1).map_err(|e| e.to_string())?;
    ensure(alt == 4.0, format!("alternating fixture gave {alt}"))?;
    let total = LossWeights::for_grid(&cfg).combine(1.0, 1.0, 1.0);
    ensure(total == 20.6, format!("unit components gave {total}"))?;
    let mut worst: f64 = 0.0;
    for i in 0..nbhd.num_patches() {
        let s: f64 = nbhd.neighbors(i).iter().map(|nb| nb.weight).sum();
        worst = worst.max((s - 1.0).abs());
    }
    ensure(worst < 1e-12, format!("neighbor weights off by {worst:e}"))?;
    Ok(format!(
        "constant fields: L_T={lt}, L_S={ls:.1e}, L_G={lg}; alternating L_T={alt}; total={total}; weight sums within {worst:.1e}"
    ))
}

fn toy_window(
    rng: &mut ChaCha8Rng,
    cfg: &GridConfig,
    channels: usize,
    frames: usize,
) -> Result<(Tensor, Tensor), String> {
    let model = PaverModel::random(
        rng,
        cfg.patch,
        ModelConfig { channels, depth: 1, encoder_heads: 2, fusion_heads: 2 },
    )
    .map_err(|e| e.to_string())?;
    let table = compute_offset_table(cfg, Format::Erp).map_err(|e| e.to_string())?;
    let clip = moving_disc_clip(Format::Erp, cfg.width, cfg.height, frames, 0.3, 0.2, 0.4, 0.5).map_err(|e| e.to_string())?;
    let grids = model.encode_frames(&clip, &table).map_err(|e| e.to_string())?;
    stack_tokens(&grids).map_err(|e| e.to_string())
}

fn c6_gradients() -> Outcome {
    let start = Instant::now();
    let cfg = GridConfig::new(64, 32, 16).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let (x0, x) = toy_window(&mut rng, &cfg, 4, 3)?;
    let nbhd = SpatialNeighborhood::for_grid(Format::Erp, &cfg, default_epsilon(&cfg)).map_err(|e| e.to_string())?;
    let params = FusionParams::random(&mut rng, 4, 2).map_err(|e| e.to_string())?;
    let weights = LossWeights::for_grid(&cfg);
    let f = |flat: &[f64]| {
        let mut p = params.clone();
        p.set_flat(flat);
        let (loss, grads) = loss_and_gradients(&p, &x0, &x, &nbhd, &weights).expect("toy loss");
        let mut g = Vec::new();
        p.visit(&mut |name, _| g.extend_from_slice(grads[name].data()));
        (loss.total, g)
    };
    let report = grad_check(f, &params.to_flat(), 1e-5, 1e-4).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(60), "gradient check")?;
    Ok(format!(
        "{} parameters (T=3, N={}, C=4, D=1), max relative error {:.2e}, {:.2}s",
        report.coords,
        cfg.num_patches(),
        report.max_rel_error,
        elapsed.as_secs_f64()
    ))
}

fn smoke_clips(cfg: &GridConfig, model: &PaverModel) -> Result<Vec<Vec<paver::encoder::TokenGrid>>, String> {
    let table = compute_offset_table(cfg, Format::Erp).map_err(|e| e.to_string())?;
    let specs = [(0.0, 0.0, 0.25), (2.0, 0.5, -0.2), (4.0, -0.4, 0.3)];
    specs
        .iter()
        .map(|&(start, lat, step)| {
            let clip = moving_disc_clip(Format::Erp, cfg.width, cfg.height, 8, start, lat, step, 0.45).map_err(|e| e.to_string())?;
            model.encode_frames(&clip, &table).map_err(|e| e.to_string())
        })
        .collect()
}

fn c7_training() -> Outcome {
    let cfg = GridConfig::new(64, 32, 8).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let model = PaverModel::random(&mut rng, 8, ModelConfig { channels: 16, depth: 1, encoder_heads: 2, fusion_heads: 2 })
        .map_err(|e| e.to_string())?;
    let clips = smoke_clips(&cfg, &model)?;
    let nbhd = SpatialNeighborhood::for_grid(Format::Erp, &cfg, default_epsilon(&cfg)).map_err(|e| e.to_string())?;
    let mut tc = TrainConfig::for_grid(&cfg);
    tc.lr = 1e-3;
    tc.epochs = 1000;
    tc.max_steps = Some(200);
    tc.seed = 7;
    let run = || {
        let mut fusion = model.fusion.clone();
        train(&clips, &mut fusion, &nbhd, &tc).map(|r| r.losses).map_err(|e| e.to_string())
    };
    let a = run()?;
    let b = run()?;
    ensure(a.len() == 200, format!("{} steps", a.len()))?;
    ensure(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), "seeded traces differ")?;
    let ma = moving_average(&a, 20);
    let (first, last) = (ma[19], ma[199]);
    ensure(last < first, format!("20-step mean rose from {first} to {last}"))?;
    Ok(format!("20-step mean loss {first:.5} -> {last:.5}; traces identical"))
}

fn c8_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let (w, h) = (64, 32);
    let pred: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
    let self_cc = cc(&pred, &pred).map_err(|e| e.to_string())?;
    ensure((self_cc - 1.0).abs() < 1e-12, format!("cc(pred, pred) = {self_cc}"))?;

    let fix_idx: Vec<usize> = (0..40).map(|_| rng.random_range(0..w * h)).collect();
    let fix = FixationSet::from_indices(w, h, fix_idx).map_err(|e| e.to_string())?;
    let mut perfect = vec![0.1; w * h];
    for &i in fix.indices() {
        perfect[i] = 1.0;
    }
    let judd = auc_judd(&perfect, &fix).map_err(|e| e.to_string())?;
    ensure(judd == 1.0, format!("perfect AUC-Judd {judd}"))?;
    let flat = vec![0.4; w * h];
    let judd_flat = auc_judd(&flat, &fix).map_err(|e| e.to_string())?;
    let borji_flat = auc_borji(&flat, &fix, 100, 5).map_err(|e| e.to_string())?;
    ensure(judd_flat == 0.5, format!("constant AUC-Judd {judd_flat}"))?;
    ensure((borji_flat - 0.5).abs() <= 0.02, format!("constant AUC-Borji {borji_flat}"))?;

    let r = Frame::new(w, h, Format::Erp, (0..3 * w * h).map(|k| (k % 200) as f64).collect()).map_err(|e| e.to_string())?;
    let d = Frame::new(w, h, Format::Erp, r.data().iter().map(|v| v + 1.0).collect()).map_err(|e| e.to_string())?;
    let distorted = Frame::new(
        w,
        h,
        Format::Erp,
        r.data().iter().map(|v| v + rng.random_range(-3.0..3.0)).collect(),
    )
    .map_err(|e| e.to_string())?;
    let plain = psnr_weighted(std::slice::from_ref(&r), std::slice::from_ref(&distorted), None, 255.0, ErrorChannel::Luma).map_err(|e| e.to_string())?;
    let uniform = vec![vec![0.37; w * h]];
    let weighted =
        psnr_weighted(std::slice::from_ref(&r), &[distorted], Some(&uniform), 255.0, ErrorChannel::Luma).map_err(|e| e.to_string())?;
    ensure((plain.db - weighted.db).abs() < 1e-9, format!("uniform {} vs plain {}", weighted.db, plain.db))?;
    let unit = psnr_weighted(&[r], &[d], None, 255.0, ErrorChannel::Luma).map_err(|e| e.to_string())?;
    ensure((unit.db - 48.131).abs() < 1e-3, format!("unit-MSE PSNR {}", unit.db))?;

    // rank-statistic oracle over every non-fixation pixel
    let mask: std::collections::HashSet<usize> = fix.indices().iter().copied().collect();
    let pos: Vec<f64> = fix.indices().iter().map(|&i| pred[i]).collect();
    let neg: Vec<f64> = (0..w * h).filter(|i| !mask.contains(i)).map(|i| pred[i]).collect();
    let oracle = rank_auc(&pos, &neg);
    let borji = auc_borji(&pred, &fix, 1000, 21).map_err(|e| e.to_string())?;
    ensure((borji - oracle).abs() < 0.01, format!("AUC-Borji {borji} vs oracle {oracle}"))?;
    Ok(format!(
        "cc=1, Judd perfect=1, constant Judd={judd_flat}, constant Borji={borji_flat:.4}, uniform PSNR Δ={:.1e} dB, unit MSE {:.4} dB, Borji {borji:.4} vs oracle {oracle:.4}",
        (plain.db - weighted.db).abs(),
        unit.db
    ))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    cc(a, b).unwrap_or(0.0)
}

/// Bilinear interpolation of ERP patch scores at a sphere point, treating
/// the coarse grid as a small equirectangular raster.
fn erp_coarse_at(scores: &[f64], centers: &[SphereCoord], rows: usize, cols: usize, p: SphereCoord) -> f64 {
    let lon_step = 2.0 * PI / cols as f64;
    let lon0 = centers[0].theta;
    let lats: Vec<f64> = (0..rows).map(|r| centers[r * cols].phi).collect();
    let x = ((p.theta - lon0) / lon_step).rem_euclid(cols as f64);
    let c0 = x.floor() as usize % cols;
    let c1 = (c0 + 1) % cols;
    let fx = x - x.floor();
    // rows run north to south
    let (r0, r1, fy) = if p.phi >= lats[0] {
        (0, 0, 0.0)
    } else if p.phi <= lats[rows - 1] {
        (rows - 1, rows - 1, 0.0)
    } else {
        let r = (0..rows - 1).find(|&r| p.phi <= lats[r] && p.phi >= lats[r + 1]).unwrap();
        (r, r + 1, (lats[r] - p.phi) / (lats[r] - lats[r + 1]))
    };
    let at = |r: usize, c: usize| scores[r * cols + c];
    (1.0 - fy) * ((1.0 - fx) * at(r0, c0) + fx * at(r0, c1)) + fy * ((1.0 - fx) * at(r1, c0) + fx * at(r1, c1))
}

fn c9_format_independence() -> Outcome {
    let scene = blob_field(vec![
        (SphereCoord::new(0.4, 0.3), 0.35, [0.6, 0.2, 0.1]),
        (SphereCoord::new(2.3, -0.2), 0.5, [0.1, 0.5, 0.3]),
        (SphereCoord::new(4.0, 0.6), 0.3, [0.4, 0.4, 0.6]),
        (SphereCoord::new(5.3, -0.7), 0.4, [0.2, 0.1, 0.5]),
    ]);
    let erp_cfg = GridConfig::new(192, 96, 16).map_err(|e| e.to_string())?;
    let cmp_cfg = GridConfig::new(192, 128, 16).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let model = PaverModel::random(&mut rng, 16, ModelConfig { channels: 16, depth: 1, encoder_heads: 2, fusion_heads: 2 })
        .map_err(|e| e.to_string())?;
    let score = |format: Format, cfg: &GridConfig| -> Result<Vec<f64>, String> {
        let frame = render(format, cfg.width, cfg.height, &scene).map_err(|e| e.to_string())?;
        let table = compute_offset_table(cfg, format).map_err(|e| e.to_string())?;
        let grids = model.encode_frames(&[frame], &table).map_err(|e| e.to_string())?;
        let fused = model.fuse_window(&grids).map_err(|e| e.to_string())?;
        Ok(saliency_scores(&fused, ScoreWeights::default()).data().to_vec())
    };
    let erp = score(Format::Erp, &erp_cfg)?;
    let cube = score(Format::Cmp, &cmp_cfg)?;
    let erp_centers = patch_centers(Format::Erp, &erp_cfg);
    let cube_centers = patch_centers(Format::Cmp, &cmp_cfg);
    let resampled: Vec<f64> = cube_centers
        .iter()
        .map(|&p| erp_coarse_at(&erp, &erp_centers, erp_cfg.rows(), erp_cfg.cols(), p))
        .collect();
    let rho = pearson(&ranks(&cube), &ranks(&resampled));
    ensure(rho >= 0.8, format!("Spearman {rho:.4} over {} CMP patch centers", cube.len()))?;
    Ok(format!("Spearman {rho:.4} over {} CMP patch centers", cube.len()))
}

fn run_cli(bin: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("paver {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)),
    )
}

fn c10_determinism() -> Outcome {
    let bin = Path::new(env!("CARGO_BIN_EXE_paver"));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let frames = d.join("frames");
    std::fs::create_dir_all(&frames).map_err(|e| e.to_string())?;
    let clip = moving_disc_clip(Format::Erp, 64, 32, 6, 0.5, 0.1, 0.3, 0.5).map_err(|e| e.to_string())?;
    for (t, f) in clip.iter().enumerate() {
        std::fs::write(frames.join(format!("frame_{t:05}.ppm")), encode_ppm(f)).map_err(|e| e.to_string())?;
    }
    let p = |name: &str| d.join(name).to_string_lossy().into_owned();
    let frames_s = frames.to_string_lossy().into_owned();
    let model_args = ["--encoder-heads", "2", "--fusion-heads", "2"];
    for run in ["a", "b"] {
        run_cli(bin, &["offsets", "--width", "64", "--height", "32", "--patch", "8", "--out", &p(&format!("off_{run}.poff"))])?;
        run_cli(
            bin,
            &[&["init", "--patch", "8", "--channels", "8", "--depth", "1", "--seed", "3", "--out", &p(&format!("init_{run}.pavw"))][..], &model_args[..]].concat(),
        )?;
        run_cli(
            bin,
            &[
                &["saliency", "--frames", &frames_s, "--weights", &p("init_a.pavw"), "--offsets", &p("off_a.poff"), "--out", &p(&format!("sal_{run}.psal"))][..],
                &model_args[..],
            ]
            .concat(),
        )?;
        run_cli(
            bin,
            &[
                &[
                    "train", "--frames-dir", &frames_s, "--init-weights", &p("init_a.pavw"), "--out-weights",
                    &p(&format!("trained_{run}.pavw")), "--epochs", "2", "--seed", "5",
                ][..],
                &model_args[..],
            ]
            .concat(),
        )?;
    }
    for (a, b) in [
        ("off_a.poff", "off_b.poff"),
        ("init_a.pavw", "init_b.pavw"),
        ("sal_a.psal", "sal_b.psal"),
        ("trained_a.pavw", "trained_b.pavw"),
        ("trained_a.csv", "trained_b.csv"),
    ] {
        let x = std::fs::read(d.join(a)).map_err(|e| e.to_string())?;
        let y = std::fs::read(d.join(b)).map_err(|e| e.to_string())?;
        ensure(!x.is_empty() && x == y, format!("{a} and {b} differ"))?;
    }
    Ok("byte-identical reruns: offsets, init, saliency, train weights, train trace".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("geometry suite", c1_geometry),
        ("embedding equivalence", c2_embedding),
        ("saliency score oracle", c3_scores),
        ("smoothing kernel normalization", c4_kernel),
        ("loss suite", c5_losses),
        ("fusion gradient check", c6_gradients),
        ("smoke training", c7_training),
        ("metric suite", c8_metrics),
        ("format independence", c9_format_independence),
        ("CLI determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("acceptance {:>2} PASS  {name}: {detail} [{secs:.2}s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("acceptance {:>2} FAIL  {name}: {why} [{secs:.2}s]", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
