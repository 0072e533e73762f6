//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints one PASS/FAIL line, with or without `--nocapture`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use fibench_core::harness::{
    baseline_interpolate, evaluate_submission, load_dataset, time_command, validate_submission,
    write_baseline_submission, BaselineMode, DatasetIndex, EvaluationPlan, Job, MetricsReport,
    OracleAux, Payload, SubmissionMeta, TimingOptions, WorkerSpec,
};
use fibench_core::imaging::{
    read_flow_file, read_image, write_flow_file, write_image, CodedImage, FlowField, WorkingImage,
};
use fibench_core::metrics::{
    accumulate, psnr_mean_frames, psnr_star, psnr_star_sigma, se_map, spearman_rho,
    ErrorAccumulator, FrameErrors, RankTable,
};
use fibench_core::synthgen::{
    annotate, generate_dataset, generate_sequence, sample_scene, scene_from_manifest,
    sequence_seed, timestep, DatasetConfig, GeometricTransform, Layer, SceneConfig, SceneSpec,
    SequenceManifest, Sprite, SpriteSource, OWNERSHIP_ALPHA,
};
use fibench_core::Tier;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Desk {
    root: PathBuf,
    index: DatasetIndex,
    generation: Duration,
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fibench")
}

// ---------------------------------------------------------------- 1

const METHODS: [&str; 10] = [
    "ABME", "AMT-G", "CtxSyn", "DAIN", "FLDR", "M2M", "SoftSplat", "SplatSyn", "UPR-Net-L", "XVFI",
];
const VIMEO: [f64; 10] = [33.83, 34.15, 32.42, 32.49, 31.02, 33.32, 33.76, 32.86, 34.08, 30.54];
const XIPH: [f64; 10] = [34.86, 36.75, 34.54, 35.48, 32.79, 35.72, 36.82, 34.09, 37.11, 32.03];
const XTEST: [f64; 10] = [29.57, 19.93, 31.80, 28.91, 28.36, 29.92, 31.26, 32.79, 30.28, 28.22];
const OURS: [f64; 10] = [30.12, 30.53, 29.37, 27.99, 23.52, 29.09, 30.93, 28.88, 29.68, 23.41];

fn spearman_reproduction() -> Outcome {
    let start = Instant::now();
    let table = |scores: &[f64; 10]| RankTable::new(METHODS.iter().copied().zip(scores.iter().copied())).unwrap();
    let cols = [table(&VIMEO), table(&XIPH), table(&XTEST), table(&OURS)];
    let expected = [
        (0, 1, 0.830),
        (0, 2, 0.042),
        (0, 3, 0.842),
        (1, 2, 0.152),
        (1, 3, 0.770),
        (2, 3, 0.236),
    ];
    let mut worst: f64 = 0.0;
    for (a, b, want) in expected {
        let rho = spearman_rho(&cols[a], &cols[b]).map_err(|e| e.to_string())?;
        ensure!((rho - want).abs() <= 0.002, "pair ({a},{b}): rho {rho:.4} vs {want}");
        worst = worst.max((rho - want).abs());
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("max deviation {worst:.4}, {elapsed:?}"))
}

// ---------------------------------------------------------------- 2, 3

fn random_mse(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(1..=12);
    (0..n).map(|_| 10f64.powf(rng.random_range(-6.0..-0.5))).collect()
}

fn am_gm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut min_gap = f64::INFINITY;
    for _ in 0..1000 {
        let mse = random_mse(&mut rng);
        let frames = FrameErrors::new(mse.clone()).unwrap();
        // Equal frame sizes: the pooled mean is the mean of frame MSEs.
        let mut acc = ErrorAccumulator::new();
        for &m in &mse {
            acc.push(m);
        }
        let per_frame = psnr_mean_frames(&frames).unwrap();
        let pooled = psnr_star(&acc).unwrap();
        ensure!(per_frame >= pooled - 1e-12, "{per_frame} < {pooled} for {mse:?}");
        min_gap = min_gap.min(per_frame - pooled);

        let m = mse[0];
        let equal = FrameErrors::new(vec![m; mse.len()]).unwrap();
        let mut acc = ErrorAccumulator::new();
        for _ in 0..mse.len() {
            acc.push(m);
        }
        let gap = (psnr_mean_frames(&equal).unwrap() - psnr_star(&acc).unwrap()).abs();
        ensure!(gap <= 1e-9, "equal MSEs differ by {gap} dB");
    }
    Ok(format!("1000 instances, smallest gap {min_gap:.3e} dB"))
}

fn geometric_mean_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mse = random_mse(&mut rng);
        let got = psnr_mean_frames(&FrameErrors::new(mse.clone()).unwrap()).unwrap();
        let log_mean = mse.iter().map(|m| m.ln()).sum::<f64>() / mse.len() as f64;
        let want = -10.0 * log_mean.exp().log10();
        let rel = ((got - want) / want).abs();
        ensure!(rel <= 1e-9, "{got} vs {want} for {mse:?}");
        worst = worst.max(rel);
    }
    Ok(format!("1000 instances, max relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- 4

fn linearity(desk: &Desk) -> Outcome {
    let start = Instant::now();
    let index = &desk.index;
    let (mut center, mut scaled): (f64, f64) = (0.0, 0.0);
    let mut checked = 0u64;
    for entry in &index.sequences {
        for &tier in &index.tiers {
            for i in 1..=7 {
                let t = timestep(i);
                let (f0, f1) = index.flows(entry, tier, i).map_err(|e| e.to_string())?;
                for k in 0..f0.len() {
                    let (Some(a), Some(b)) = (f0.get(k), f1.get(k)) else { continue };
                    let (a, b) = ([a[0] as f64, a[1] as f64], [b[0] as f64, b[1] as f64]);
                    if i == 4 {
                        center = center.max((a[0] + b[0]).hypot(a[1] + b[1]));
                    }
                    let s = [a[0] / t + b[0] / (1.0 - t), a[1] / t + b[1] / (1.0 - t)];
                    scaled = scaled.max(s[0].hypot(s[1]));
                    checked += 1;
                }
            }
        }
    }
    let total = desk.generation + start.elapsed();
    ensure!(checked > 0, "no valid flow vectors");
    ensure!(center <= 1e-3, "center-frame residual {center:.3e} px");
    ensure!(scaled <= 1e-3, "scaled identity residual {scaled:.3e} px");
    ensure!(total < Duration::from_secs(120), "generation and check took {total:?}");
    Ok(format!(
        "{checked} vectors, t=0.5 residual {center:.2e} px, scaled residual {scaled:.2e} px, {:.1} s incl. generation",
        total.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 5

type Mat = [[f64; 3]; 3];

fn hom_apply(m: &Mat, p: [f64; 2]) -> Option<[f64; 2]> {
    let w = m[2][0] * p[0] + m[2][1] * p[1] + m[2][2];
    if w <= 1e-12 {
        return None;
    }
    Some([
        (m[0][0] * p[0] + m[0][1] * p[1] + m[0][2]) / w,
        (m[1][0] * p[0] + m[1][1] * p[1] + m[1][2]) / w,
    ])
}

fn adjugate(m: &Mat) -> Mat {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    // Projective inverse up to scale; normalise so w stays positive for
    // orientation-preserving maps.
    let det = m[0][0] * adj[0][0] + m[0][1] * adj[1][0] + m[0][2] * adj[2][0];
    adj.map(|row| row.map(|v| v / det))
}

/// Independent inversion of the linear point map: closed form at the
/// endpoints, otherwise Newton on a finite-difference Jacobian from several
/// seeds.
struct OracleLayer<'a> {
    layer: &'a Layer,
    a: Mat,
    b: Mat,
    a_inv: Mat,
    b_inv: Mat,
}

impl<'a> OracleLayer<'a> {
    fn new(layer: &'a Layer) -> Self {
        let (a, b) = (layer.start.matrix(), layer.end.matrix());
        Self {
            layer,
            a,
            b,
            a_inv: adjugate(&a),
            b_inv: adjugate(&b),
        }
    }

    fn forward(&self, t: f64, p: [f64; 2]) -> Option<[f64; 2]> {
        let (u, v) = (hom_apply(&self.a, p)?, hom_apply(&self.b, p)?);
        Some([(1.0 - t) * u[0] + t * v[0], (1.0 - t) * u[1] + t * v[1]])
    }

    fn invert(&self, t: f64, x: [f64; 2]) -> Option<[f64; 2]> {
        if t == 0.0 {
            return hom_apply(&self.a_inv, x);
        }
        if t == 1.0 {
            return hom_apply(&self.b_inv, x);
        }
        let (w, h) = (self.layer.sprite.width() as f64, self.layer.sprite.height() as f64);
        let mut seeds: Vec<[f64; 2]> = [hom_apply(&self.a_inv, x), hom_apply(&self.b_inv, x)]
            .into_iter()
            .flatten()
            .collect();
        for j in 0..=4 {
            for i in 0..=4 {
                seeds.push([w * i as f64 / 4.0, h * j as f64 / 4.0]);
            }
        }
        seeds.into_iter().find_map(|s| self.newton(t, x, s))
    }

    fn newton(&self, t: f64, x: [f64; 2], mut p: [f64; 2]) -> Option<[f64; 2]> {
        let resid = |p: [f64; 2]| self.forward(t, p).map(|y| [y[0] - x[0], y[1] - x[1]]);
        let norm = |r: [f64; 2]| r[0].hypot(r[1]);
        let mut r = resid(p)?;
        for _ in 0..80 {
            if norm(r) <= 1e-7 {
                return Some(p);
            }
            let e = 1e-5;
            let rx = resid([p[0] + e, p[1]])?;
            let ry = resid([p[0], p[1] + e])?;
            let j = [
                [(rx[0] - r[0]) / e, (ry[0] - r[0]) / e],
                [(rx[1] - r[1]) / e, (ry[1] - r[1]) / e],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-12 {
                return None;
            }
            let step = [
                (j[1][1] * r[0] - j[0][1] * r[1]) / det,
                (-j[1][0] * r[0] + j[0][0] * r[1]) / det,
            ];
            let mut lambda = 1.0;
            loop {
                let q = [p[0] - lambda * step[0], p[1] - lambda * step[1]];
                if let Some(rq) = resid(q) {
                    if norm(rq) < norm(r) {
                        p = q;
                        r = rq;
                        break;
                    }
                }
                lambda *= 0.5;
                if lambda < 1e-6 {
                    return (norm(r) <= 1e-5).then_some(p);
                }
            }
        }
        (norm(r) <= 1e-5).then_some(p)
    }

    fn owns(&self, t: f64, x: [f64; 2]) -> Option<bool> {
        let p = self.invert(t, x)?;
        Some(self.layer.sprite.alpha_at(p) >= OWNERSHIP_ALPHA)
    }
}

/// Visibility bits at pixel centre `x`, or `None` when undecidable.
fn oracle_bits(layers: &[OracleLayer<'_>], scene: &SceneSpec, t: f64, x: [f64; 2]) -> Option<u8> {
    let mut owner = None;
    for (k, l) in layers.iter().enumerate().rev() {
        if l.owns(t, x)? {
            owner = Some(k);
            break;
        }
    }
    let k = owner?;
    let p = layers[k].invert(t, x)?;
    let mut bits = 0;
    for (s, m) in [layers[k].a, layers[k].b].iter().enumerate() {
        let y = hom_apply(m, p)?;
        let inside = y[0] >= 0.0 && y[1] >= 0.0 && y[0] < scene.width as f64 && y[1] < scene.height as f64;
        if !inside {
            continue;
        }
        let mut covered = false;
        for l in &layers[k + 1..] {
            if l.owns(s as f64, y).unwrap_or(false) {
                covered = true;
                break;
            }
        }
        if !covered {
            bits |= 1 << s;
        }
    }
    Some(bits)
}

fn occlusion_oracle() -> Outcome {
    let config = SceneConfig::for_canvas(128, 64);
    let mut scenes = Vec::new();
    let mut seed = 0;
    while scenes.len() < 20 {
        if let Ok(s) = sample_scene(&config, sequence_seed(55, seed, 0)) {
            scenes.push(s);
        }
        seed += 1;
    }
    let (mut agree, mut total) = (0u64, 0u64);
    let mut classes = [0u64; 3];
    for scene in &scenes {
        let layers: Vec<OracleLayer<'_>> = scene.layers.iter().map(OracleLayer::new).collect();
        for i in [2, 4, 6] {
            let t = timestep(i);
            let ann = annotate(scene, t, 1);
            for y in 0..scene.height {
                for x in 0..scene.width {
                    let k = y * scene.width + x;
                    let Some(bits) = ann.visibility.get(k) else { continue };
                    total += 1;
                    classes[2 - bits.count_ones() as usize] += 1;
                    if oracle_bits(&layers, scene, t, [x as f64 + 0.5, y as f64 + 0.5]) == Some(bits) {
                        agree += 1;
                    }
                }
            }
        }
    }
    let rate = agree as f64 / total as f64;
    ensure!(classes[1] > 0, "no occluded pixels in the sampled scenes");
    ensure!(rate >= 0.999, "agreement {:.4}% ({agree}/{total})", rate * 100.0);
    Ok(format!(
        "agreement {:.4}% over {total} valid pixels (0/1/2-occ {:?})",
        rate * 100.0,
        classes
    ))
}

// ---------------------------------------------------------------- 6

fn evaluate_dir(index: &DatasetIndex, dir: &Path, plan: &EvaluationPlan) -> Result<MetricsReport, String> {
    let payload = Payload::from_dir(dir).map_err(|e| e.to_string())?;
    let sub = validate_submission(payload, index, plan).map_err(|e| e.to_string())?;
    evaluate_submission(&sub, index).map_err(|e| e.to_string())
}

fn baseline_report(desk: &Desk, mode: BaselineMode, scratch: &Path) -> Result<MetricsReport, String> {
    let plan = EvaluationPlan::default_for(&[Tier::Quarter]);
    let dir = scratch.join(mode.name());
    if !dir.exists() {
        write_baseline_submission(&desk.index, mode, &plan, &dir).map_err(|e| e.to_string())?;
    }
    evaluate_dir(&desk.index, &dir, &plan)
}

fn noise_sprite(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Sprite {
    let data = (0..w * h * 3).map(|_| rng.random()).collect();
    Sprite::opaque(CodedImage::from_vec(w, h, data).unwrap())
}

/// Opaque textured layers moving by multiples of 8 px so that every
/// in-between offset is a whole pixel.
fn integer_translation_scene() -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t = GeometricTransform::translation;
    let background = Layer::new(noise_sprite(&mut rng, 112, 64), SpriteSource::Custom, t(-24.0, -16.0), t(-16.0, -16.0));
    let near = Layer::new(noise_sprite(&mut rng, 16, 12), SpriteSource::Custom, t(6.0, 4.0), t(30.0, 12.0));
    let far = Layer::new(noise_sprite(&mut rng, 10, 10), SpriteSource::Custom, t(40.0, 18.0), t(16.0, 10.0));
    SceneSpec::from_layers(0, 64, 32, vec![background, far, near]).unwrap()
}

fn baseline_ordering(desk: &Desk, scratch: &Path) -> Outcome {
    let blend = baseline_report(desk, BaselineMode::Blend, scratch)?;
    let oracle = baseline_report(desk, BaselineMode::Oracle, scratch)?;
    let score = |r: &MetricsReport| r.tier(Tier::Quarter).and_then(|t| t.single_frame.psnr_star);
    let (b, o) = (score(&blend).ok_or("blend has no score")?, score(&oracle).ok_or("oracle has no score")?);
    ensure!(o - b >= 5.0, "oracle {o:.2} dB vs blend {b:.2} dB");

    let bins = &blend.tier(Tier::Quarter).unwrap().magnitude.bins;
    let occupied: Vec<(String, f64, f64)> = bins
        .iter()
        .enumerate()
        .filter_map(|(k, bin)| bin.psnr_star().map(|p| (bin.label.clone(), k as f64, p)))
        .collect();
    ensure!(occupied.len() >= 3, "only {} occupied magnitude bins", occupied.len());
    let idx = RankTable::new(occupied.iter().map(|(l, k, _)| (l.clone(), *k))).unwrap();
    let psnr = RankTable::new(occupied.iter().map(|(l, _, p)| (l.clone(), *p))).unwrap();
    let rho = spearman_rho(&idx, &psnr).map_err(|e| e.to_string())?;
    ensure!(rho <= -0.8, "blend magnitude-bin Spearman {rho:.3}");

    let scene = integer_translation_scene();
    let load = |t: f64| annotate(&scene, t, 1).image.to_coded().to_working();
    let (first, second) = (load(0.0), load(1.0));
    let (mut exact, mut zero_occ, mut occluded) = (0u64, 0u64, 0u64);
    for i in 1..=7 {
        let t = timestep(i);
        let gt = annotate(&scene, t, 1);
        let aux = OracleAux {
            flow_to_first: &gt.flow_to_first,
            flow_to_second: &gt.flow_to_second,
            visibility: &gt.visibility,
        };
        let pred = baseline_interpolate(BaselineMode::Oracle, &first, &second, t, Some(aux))
            .map_err(|e| e.to_string())?
            .to_coded();
        let want = gt.image.to_coded();
        for k in 0..scene.width * scene.height {
            let (x, y) = (k % scene.width, k / scene.width);
            match gt.visibility.get(k) {
                Some(0b11) => {
                    zero_occ += 1;
                    if pred.pixel(x, y) == want.pixel(x, y) {
                        exact += 1;
                    }
                }
                Some(_) => occluded += 1,
                None => {}
            }
        }
    }
    ensure!(occluded > 0, "integer scene has no occlusions");
    ensure!(exact == zero_occ, "oracle exact on {exact}/{zero_occ} 0-occ pixels");
    Ok(format!(
        "oracle {o:.2} dB vs blend {b:.2} dB; magnitude rho {rho:.3} over {} bins; {exact}/{zero_occ} 0-occ pixels exact",
        occupied.len()
    ))
}

// ---------------------------------------------------------------- 7

fn frame_psnrs(gt: &[WorkingImage], pred: &[WorkingImage]) -> (f64, f64) {
    let mut acc = ErrorAccumulator::new();
    for (g, p) in gt.iter().zip(pred) {
        acc = accumulate(acc, &se_map(p, g).unwrap(), None);
    }
    (psnr_star(&acc).unwrap(), psnr_star_sigma(&acc).unwrap())
}

fn with_noise(gt: &[WorkingImage], noise: &[Vec<f32>], amplitude: f32) -> Vec<WorkingImage> {
    gt.iter()
        .zip(noise)
        .map(|(g, n)| {
            let data = g.data().iter().zip(n).map(|(&v, &u)| (v + amplitude * u).clamp(0.0, 1.0)).collect();
            WorkingImage::from_vec(g.width(), g.height(), data).unwrap()
        })
        .collect()
}

fn sigma_rectangles(desk: &Desk) -> Outcome {
    let index = &desk.index;
    let entry = &index.sequences[0];
    let gt: Vec<WorkingImage> = (1..=7)
        .map(|i| index.frame(entry, Tier::Quarter, i).unwrap().to_working())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rects: Vec<WorkingImage> = gt
        .iter()
        .map(|g| {
            let mut img = g.clone();
            let (w, h) = img.dims();
            for _ in 0..3 {
                let (rw, rh) = (rng.random_range(w / 16..w / 6), rng.random_range(h / 16..h / 6));
                let (x0, y0) = (rng.random_range(0..w - rw), rng.random_range(0..h - rh));
                for y in y0..y0 + rh {
                    for x in x0..x0 + rw {
                        img.set_pixel(x, y, [1.0, 1.0, 0.0]);
                    }
                }
            }
            img
        })
        .collect();
    let (target, sigma_rect) = frame_psnrs(&gt, &rects);

    let noise: Vec<Vec<f32>> = gt
        .iter()
        .map(|g| (0..g.data().len()).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect();
    let (mut lo, mut hi) = (0.0f32, 1.0f32);
    let mut matched = None;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (p, s) = frame_psnrs(&gt, &with_noise(&gt, &noise, mid));
        if (p - target).abs() <= 0.01 {
            matched = Some((mid, p, s));
            break;
        }
        if p > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (amp, p_noise, sigma_noise) = matched.ok_or("could not match PSNR* within 0.01 dB")?;
    let gap = sigma_noise - sigma_rect;
    ensure!(gap >= 3.0, "PSNR*σ gap {gap:.2} dB at PSNR* {target:.2}");
    Ok(format!(
        "PSNR* {target:.3} (rect) vs {p_noise:.3} (noise ±{amp:.3}); PSNR*σ {sigma_noise:.2} vs {sigma_rect:.2}, gap {gap:.2} dB"
    ))
}

// ---------------------------------------------------------------- 8

fn perturbed_submission(index: &DatasetIndex, plan: &EvaluationPlan, seed: u64, out: &Path) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread: f32 = rng.random_range(0.02..0.3);
    let mut files = BTreeMap::new();
    for entry in &index.sequences {
        for &i in plan.timesteps(Tier::Quarter).unwrap() {
            let mut img = index.frame(entry, Tier::Quarter, i).map_err(|e| e.to_string())?.to_working();
            let (w, h) = img.dims();
            for y in 0..h {
                for x in 0..w {
                    // Heavy-tailed error so that trimming has something to bite on.
                    let scale = if rng.random_bool(0.05) { 4.0 } else { 1.0 };
                    let px = img.pixel(x, y).map(|v| (v + scale * spread * rng.random_range(-1.0f32..1.0)).clamp(0.0, 1.0));
                    img.set_pixel(x, y, px);
                }
            }
            let bytes = write_image(&img.to_coded()).map_err(|e| e.to_string())?;
            files.insert(format!("{}/pred_t{i}.png", entry.name), bytes);
        }
    }
    let mut payload = Payload::from_files(files);
    payload.set_metadata(SubmissionMeta::new(format!("noise-{seed}"), false));
    fs::write(out, payload.to_zip()).map_err(|e| e.to_string())
}

fn trimmed_monotonicity(desk: &Desk, scratch: &Path) -> Outcome {
    let plan = EvaluationPlan::default_for(&[Tier::Quarter]);
    let mut reports = Vec::new();
    for mode in [BaselineMode::RepeatFirst, BaselineMode::Blend, BaselineMode::Oracle] {
        reports.push(baseline_report(desk, mode, scratch)?);
    }
    for seed in 0..3 {
        let zip = scratch.join(format!("noise-{seed}.zip"));
        perturbed_submission(&desk.index, &plan, seed, &zip)?;
        let payload = Payload::from_path(&zip, u64::MAX).map_err(|e| e.to_string())?;
        let sub = validate_submission(payload, &desk.index, &plan).map_err(|e| e.to_string())?;
        reports.push(evaluate_submission(&sub, &desk.index).map_err(|e| e.to_string())?);
    }
    let mut lines = Vec::new();
    for r in &reports {
        let tier = r.tier(Tier::Quarter).ok_or("missing tier")?;
        let mut prev = tier.single_frame.psnr_star.ok_or("no center score")?;
        let base = prev;
        for &(fraction, value) in &tier.trimmed {
            let v = value.ok_or_else(|| format!("{}: no trimmed score at {fraction}", r.method))?;
            ensure!(v >= prev, "{}: trimming {fraction} gives {v} < {prev}", r.method);
            prev = v;
        }
        lines.push(format!("{} +{:.2}", r.method, prev - base));
    }
    Ok(format!("{} submissions, gain at 10%: {}", reports.len(), lines.join(", ")))
}

// ---------------------------------------------------------------- 9

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn round_trips(scratch: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in 0..100 {
        let (w, h) = (rng.random_range(1..48), rng.random_range(1..48));
        let vectors: Vec<[f32; 2]> = (0..w * h)
            .map(|_| {
                if rng.random_bool(0.05) {
                    [f32::NAN; 2]
                } else {
                    [rng.random_range(-600.0..600.0), rng.random_range(-600.0..600.0)]
                }
            })
            .collect();
        let field = FlowField::from_vectors(w, h, vectors).unwrap();
        let bytes = write_flow_file(&field);
        let back = read_flow_file(&bytes).map_err(|e| e.to_string())?;
        ensure!(back == field, "flow instance {n} changed");
        ensure!(write_flow_file(&back) == bytes, "flow instance {n} re-encodes differently");

        let data = (0..w * h * 3).map(|_| rng.random()).collect();
        let img = CodedImage::from_vec(w, h, data).unwrap();
        let png = write_image(&img).map_err(|e| e.to_string())?;
        ensure!(read_image(&png).map_err(|e| e.to_string())? == img, "image instance {n} changed");
    }

    let config = DatasetConfig {
        seed: 2024,
        sequences: 3,
        scene: SceneConfig::for_canvas(128, 64),
    };
    let (a, b) = (scratch.join("regen-a"), scratch.join("regen-b"));
    generate_dataset(&config, &a).map_err(|e| e.to_string())?;
    generate_dataset(&config, &b).map_err(|e| e.to_string())?;
    let (ta, tb) = (tree(&a), tree(&b));
    ensure!(ta == tb, "two generations from the same config differ");

    let manifest = SequenceManifest::read(&a.join("seq_0001/meta.json")).map_err(|e| e.to_string())?;
    let scene = scene_from_manifest(&manifest).map_err(|e| e.to_string())?;
    let c = scratch.join("regen-c");
    generate_sequence(&scene, &c).map_err(|e| e.to_string())?;
    ensure!(tree(&c) == tree(&a.join("seq_0001")), "rebuilding from meta.json differs");
    Ok(format!("100 flow and image instances; {} dataset files identical", ta.len()))
}

// ---------------------------------------------------------------- 10

fn timing(scratch: &Path) -> Outcome {
    let log = scratch.join("stub.log");
    let script = format!(
        r#"echo READY
while IFS= read -r line; do
  id=${{line#*\"id\":}}; id=${{id%%,*}}
  echo "$id" >> '{}'
  if [ "$id" -le 2 ]; then sleep 0.4; else sleep 0.1; fi
  echo "DONE $id"
done"#,
        log.display()
    );
    let job = Job {
        id: 0,
        inputs: [scratch.join("a.png"), scratch.join("b.png")],
        timesteps: vec![0.5],
        output: scratch.join("stub-out"),
    };
    let options = TimingOptions {
        reps: 5,
        warmup: 2,
        tier: Some(Tier::Quarter),
    };
    let result = time_command(&WorkerSpec::new(script), &[job], options).map_err(|e| e.to_string())?;
    let dispatched = fs::read_to_string(&log).map_err(|e| e.to_string())?.lines().count();
    ensure!(result.jobs_dispatched == 7 && dispatched == 7, "dispatched {} / logged {dispatched}", result.jobs_dispatched);
    ensure!(result.seconds.len() == 5, "{} measured runs", result.seconds.len());
    ensure!((0.100..=0.150).contains(&result.median), "median {:.4} s", result.median);
    ensure!(result.max < 0.4, "a 0.4 s warmup job leaked into the statistics (max {:.3})", result.max);
    Ok(format!(
        "median {:.1} ms, max {:.1} ms, {dispatched} jobs dispatched",
        result.median * 1e3,
        result.max * 1e3
    ))
}

// ---------------------------------------------------------------- 11

struct Server {
    child: Child,
    base: String,
}

impl Server {
    fn start(dataset: &Path, storage: &Path) -> Result<Self, String> {
        let mut child = Command::new(bin())
            .args(["serve", "--listen", "127.0.0.1:0", "--dataset"])
            .arg(dataset)
            .arg("--storage")
            .arg(storage)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let stdout = child.stdout.take().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines().map_while(Result::ok) {
                let _ = tx.send(line);
            }
        });
        let line = rx.recv_timeout(Duration::from_secs(60)).map_err(|_| "server did not announce its address")?;
        let base = line.strip_prefix("listening on ").ok_or(format!("unexpected line {line:?}"))?.to_string();
        Ok(Self { child, base })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn post(client: &reqwest::blocking::Client, server: &Server, zip: &[u8]) -> Result<(u16, serde_json::Value), String> {
    let part = reqwest::blocking::multipart::Part::bytes(zip.to_vec()).file_name("submission.zip");
    let form = reqwest::blocking::multipart::Form::new().part("archive", part);
    let resp = client
        .post(format!("{}/api/v1/submissions", server.base))
        .multipart(form)
        .send()
        .map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    Ok((status, resp.json().map_err(|e| e.to_string())?))
}

fn wait_done(client: &reqwest::blocking::Client, server: &Server, id: &str) -> Result<(), String> {
    let deadline = Instant::now() + Duration::from_secs(300);
    while Instant::now() < deadline {
        let rec: serde_json::Value = client
            .get(format!("{}/api/v1/submissions/{id}", server.base))
            .send()
            .and_then(|r| r.json())
            .map_err(|e| e.to_string())?;
        match rec["state"].as_str() {
            Some("done") => return Ok(()),
            Some("failed") => return Err(format!("{id} failed: {}", rec["diagnostics"])),
            _ => std::thread::sleep(Duration::from_millis(100)),
        }
    }
    Err(format!("{id} not done in time"))
}

fn get_bytes(client: &reqwest::blocking::Client, url: String) -> Result<Vec<u8>, String> {
    let resp = client.get(url).send().map_err(|e| e.to_string())?;
    ensure!(resp.status().is_success(), "GET returned {}", resp.status());
    Ok(resp.bytes().map_err(|e| e.to_string())?.to_vec())
}

fn cli_reports(desk: &Desk, zip: &Path, out: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let mut outputs = Vec::new();
    for ext in ["json", "tex"] {
        let path = out.with_extension(ext);
        let status = Command::new(bin())
            .arg("evaluate")
            .arg("--dataset")
            .arg(&desk.root)
            .arg("--submission")
            .arg(zip)
            .arg("--out")
            .arg(&path)
            .status()
            .map_err(|e| e.to_string())?;
        ensure!(status.success(), "fibench evaluate exited with {status}");
        outputs.push(fs::read(&path).map_err(|e| e.to_string())?);
    }
    let tex = outputs.pop().unwrap();
    Ok((outputs.pop().unwrap(), tex))
}

fn server_integration(desk: &Desk, scratch: &Path) -> Outcome {
    let plan = EvaluationPlan::default_for(&desk.index.tiers);
    let mut zips = Vec::new();
    for mode in [BaselineMode::Blend, BaselineMode::RepeatFirst, BaselineMode::Oracle] {
        let dir = scratch.join(format!("all-{}", mode.name()));
        write_baseline_submission(&desk.index, mode, &plan, &dir).map_err(|e| e.to_string())?;
        let zip = scratch.join(format!("all-{}.zip", mode.name()));
        fs::write(&zip, Payload::from_dir(&dir).map_err(|e| e.to_string())?.to_zip()).map_err(|e| e.to_string())?;
        zips.push(zip);
    }
    let (cli_json, cli_tex) = cli_reports(desk, &zips[0], &scratch.join("cli-blend"))?;

    let storage = scratch.join("storage");
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(120))
        .build()
        .map_err(|e| e.to_string())?;
    let server = Server::start(&desk.root, &storage)?;
    let blob = |p: &Path| fs::read(p).map_err(|e| e.to_string());

    let (status, rec) = post(&client, &server, &blob(&zips[0])?)?;
    ensure!(status == 201, "first submission returned {status}: {rec}");
    let id = rec["id"].as_str().ok_or("record without id")?.to_string();
    wait_done(&client, &server, &id)?;
    let report = get_bytes(&client, format!("{}/api/v1/submissions/{id}/report", server.base))?;
    let latex = get_bytes(&client, format!("{}/api/v1/submissions/{id}/latex", server.base))?;
    ensure!(report == cli_json, "server report differs from CLI evaluation");
    ensure!(latex == cli_tex, "server LaTeX differs from CLI output");

    let (status, again) = post(&client, &server, &blob(&zips[0])?)?;
    ensure!(status == 200 && again["id"] == rec["id"], "duplicate returned {status}: {again}");

    let (_, second) = post(&client, &server, &blob(&zips[1])?)?;
    let second_id = second["id"].as_str().ok_or("record without id")?.to_string();
    wait_done(&client, &server, &second_id)?;
    let second_report = get_bytes(&client, format!("{}/api/v1/submissions/{second_id}/report", server.base))?;
    let (status, third) = post(&client, &server, &blob(&zips[2])?)?;
    ensure!(status == 201, "third submission returned {status}");
    let third_id = third["id"].as_str().ok_or("record without id")?.to_string();
    server.kill();

    let server = Server::start(&desk.root, &storage)?;
    for (rid, want) in [(&id, &report), (&second_id, &second_report)] {
        let rec: serde_json::Value = client
            .get(format!("{}/api/v1/submissions/{rid}", server.base))
            .send()
            .and_then(|r| r.json())
            .map_err(|e| e.to_string())?;
        ensure!(rec["state"] == "done", "{rid} is {} after restart", rec["state"]);
        let got = get_bytes(&client, format!("{}/api/v1/submissions/{rid}/report", server.base))?;
        ensure!(&got == want, "report of {rid} changed across restart");
    }
    wait_done(&client, &server, &third_id)?;
    let board: serde_json::Value = client
        .get(format!("{}/api/v1/leaderboard", server.base))
        .send()
        .and_then(|r| r.json())
        .map_err(|e| e.to_string())?;
    let entries: usize = board["sections"]
        .as_array()
        .map(|s| s.iter().map(|sec| sec["entries"].as_array().map_or(0, Vec::len)).sum())
        .unwrap_or(0);
    ensure!(entries == 3, "leaderboard lists {entries} entries");
    drop(server);
    Ok(format!(
        "report JSON ({} bytes) and LaTeX match the CLI; duplicate answered 200; 2 done records survived kill -9, queued one finished after restart",
        report.len()
    ))
}

// ----------------------------------------------------------------

fn main() {
    let started = Instant::now();
    let scratch = TempDir::new().expect("temp dir");
    let desk_root = scratch.path().join("desk");
    let t = Instant::now();
    generate_dataset(&DatasetConfig::desk(), &desk_root).expect("desk dataset");
    let generation = t.elapsed();
    let desk = Desk {
        index: load_dataset(&desk_root).expect("desk dataset loads"),
        root: desk_root,
        generation,
    };
    let work = scratch.path();

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("Spearman reproduction of the cross-dataset table", Box::new(spearman_reproduction)),
        ("mean per-frame PSNR >= pooled PSNR*", Box::new(am_gm)),
        ("mean PSNR equals PSNR of the geometric mean MSE", Box::new(geometric_mean_identity)),
        ("generated motion is linear", Box::new(|| linearity(&desk))),
        ("visibility matches an independent oracle", Box::new(occlusion_oracle)),
        ("baseline ordering", Box::new(|| baseline_ordering(&desk, work))),
        ("PSNR*σ separates noise from rectangles", Box::new(|| sigma_rectangles(&desk))),
        ("trimming never lowers PSNR*", Box::new(|| trimmed_monotonicity(&desk, work))),
        ("format round trips and regeneration", Box::new(|| round_trips(work))),
        ("timing harness", Box::new(|| timing(work))),
        ("server integration", Box::new(|| server_integration(&desk, work))),
    ];

    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1} s]", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1} s]", n + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} s",
        criteria.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
