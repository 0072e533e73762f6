use fibench_core::imaging::CodedImage;
use fibench_core::metrics::{consistency_occlusion, ConsistencyThreshold};
use fibench_core::synthgen::{
    annotate, occlusion_mask, owner_at, photometric_attribute, procedural_sprite, render_frame,
    sample_scene, tier_annotations, GeometricTransform, Layer, PhotometricTransform, SceneConfig,
    SceneSpec, Sprite, SpriteSource,
};
use fibench_core::Tier;

fn flat(w: usize, h: usize, rgb: [u8; 3]) -> Sprite {
    Sprite::opaque(CodedImage::filled(w, h, rgb).unwrap())
}

fn textured(w: usize, h: usize) -> Sprite {
    let data = (0..w * h)
        .flat_map(|i| {
            let (x, y) = (i % w, i / w);
            [(x * 2 % 256) as u8, (y * 3 % 256) as u8, ((x + y) % 256) as u8]
        })
        .collect();
    Sprite::opaque(CodedImage::from_vec(w, h, data).unwrap())
}

fn shift(dx: f64, dy: f64) -> GeometricTransform {
    GeometricTransform::translation(dx, dy)
}

/// Reference renderer for pure translations: 4×4 regular samples per
/// pixel, each composited front to back with the over operator.
fn supersampled(scene: &SceneSpec, offsets: &[([f64; 2], [f64; 2])], t: f64) -> Vec<f32> {
    let mut out = Vec::with_capacity(scene.width * scene.height * 3);
    for y in 0..scene.height {
        for x in 0..scene.width {
            let mut sum = [0.0f64; 3];
            for sy in 0..4 {
                for sx in 0..4 {
                    let q = [x as f64 + (sx as f64 + 0.5) / 4.0, y as f64 + (sy as f64 + 0.5) / 4.0];
                    let mut color = [0.0f64; 3];
                    let mut trans = 1.0f64;
                    for (layer, (a, b)) in scene.layers.iter().zip(offsets).rev() {
                        let off = [(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]];
                        let p = [q[0] - off[0], q[1] - off[1]];
                        let alpha = layer.sprite.alpha_at(p) as f64;
                        let c = layer.sprite.color_at(p);
                        for k in 0..3 {
                            color[k] += trans * alpha * c[k] as f64;
                        }
                        trans *= 1.0 - alpha;
                    }
                    for k in 0..3 {
                        sum[k] += color[k] / 16.0;
                    }
                }
            }
            out.extend(sum.map(|v| v as f32));
        }
    }
    out
}

#[test]
fn renderer_matches_supersampled_reference() {
    let offsets = [([-16.0, -16.0], [-12.0, -14.0]), ([6.3, 4.1], [30.7, 9.9]), ([28.2, 2.6], [12.5, 11.4])];
    let layers = vec![
        Layer::new(textured(96, 64), SpriteSource::Custom, shift(-16.0, -16.0), shift(-12.0, -14.0)),
        Layer::new(procedural_sprite(3, 20).unwrap(), SpriteSource::Custom, shift(6.3, 4.1), shift(30.7, 9.9)),
        Layer::new(procedural_sprite(4, 16).unwrap(), SpriteSource::Custom, shift(28.2, 2.6), shift(12.5, 11.4)),
    ];
    let scene = SceneSpec::from_layers(1, 64, 32, layers).unwrap();
    for t in [0.0, 0.375, 0.5, 0.875] {
        let ours = render_frame(&scene, t);
        let reference = supersampled(&scene, &offsets, t);
        let mae = ours
            .data()
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / reference.len() as f64;
        assert!(mae <= 2.0 / 255.0, "t={t}: MAE {mae}");
    }
}

#[test]
fn quarter_tier_flow_is_block_flow_over_four() {
    let config = SceneConfig::for_canvas(256, 128);
    let mut checked = 0;
    for seed in 0..3 {
        let scene = sample_scene(&config, 100 + seed).unwrap();
        let t = 0.375;
        let full = annotate(&scene, t, 1);
        let quarter = tier_annotations(&scene, &full, Tier::Quarter);
        let (qw, qh) = quarter.flow_to_first.dims();
        for j in 0..qh {
            for i in 0..qw {
                let centre = [4.0 * i as f64 + 2.0, 4.0 * j as f64 + 2.0];
                let Some(owner) = owner_at(&scene, t, centre) else { continue };
                let block: Vec<usize> = (0..16).map(|k| (4 * j + k / 4) * scene.width + 4 * i + k % 4).collect();
                let interior = block.iter().all(|&k| {
                    let (x, y) = ((k % scene.width) as f64 + 0.5, (k / scene.width) as f64 + 0.5);
                    owner_at(&scene, t, [x, y]) == Some(owner) && full.flow_to_first.get(k).is_some()
                });
                if !interior {
                    continue;
                }
                for (tier_flow, full_flow) in [
                    (&quarter.flow_to_first, &full.flow_to_first),
                    (&quarter.flow_to_second, &full.flow_to_second),
                ] {
                    let mut mean = [0.0f64; 2];
                    for &k in &block {
                        let v = full_flow.get(k).unwrap();
                        mean[0] += v[0] as f64 / 16.0;
                        mean[1] += v[1] as f64 / 16.0;
                    }
                    let q = tier_flow.get(j * qw + i).expect("interior block is valid");
                    let err = (q[0] as f64 - mean[0] / 4.0).hypot(q[1] as f64 - mean[1] / 4.0);
                    assert!(err <= 1e-3, "seed {seed} block ({i},{j}): {err}");
                }
                checked += 1;
            }
        }
    }
    assert!(checked > 1000, "only {checked} interior blocks");
}

#[test]
fn sprite_leaving_and_sprite_arriving_make_two_occluded_background() {
    let layers = vec![
        Layer::new(textured(48, 32), SpriteSource::Custom, shift(-8.0, -8.0), shift(-8.0, -8.0)),
        // Covers x in [8, 16) at t = 0 and leaves the frame to the left.
        Layer::new(flat(8, 8, [255, 0, 0]), SpriteSource::Custom, shift(8.0, 4.0), shift(-16.0, 4.0)),
        // Enters from the right and covers x in [8, 16) at t = 1.
        Layer::new(flat(8, 8, [0, 0, 255]), SpriteSource::Custom, shift(32.0, 4.0), shift(8.0, 4.0)),
    ];
    let scene = SceneSpec::from_layers(2, 32, 16, layers).unwrap();
    let occ = occlusion_mask(&scene, 0.5);
    let at = |x: usize, y: usize| occ.get(y * 32 + x);
    // Background between the two sprites at t = 0.5.
    assert_eq!(at(12, 8), Some(2));
    // The leaving sprite at t = 0.5 covers x in [-4, 4); its source in the
    // second input lies outside the frame.
    assert_eq!(at(1, 8), Some(1));
    // Background far from both paths.
    assert_eq!(at(12, 1), Some(0));
}

#[test]
fn photometric_attribute_of_a_gain_change() {
    let gray = flat(48, 32, [128, 128, 128]);
    let c = 128.0 / 255.0;
    let start = PhotometricTransform::identity();
    let end = PhotometricTransform {
        gain: [1.2; 3],
        ..PhotometricTransform::identity()
    };
    let bg = Layer::new(gray, SpriteSource::Custom, shift(-8.0, -8.0), shift(-8.0, -8.0)).with_photometric(start, end);
    let mid = bg.photometric_at(0.5, [c; 3]);
    assert!((mid[0] - 1.1 * c).abs() < 1e-12);
    let scene = SceneSpec::from_layers(3, 32, 16, vec![bg]).unwrap();
    let attr = photometric_attribute(&scene, 0.5);
    for i in 0..attr.len() {
        assert!((attr.get(i).unwrap() - 0.2 * c).abs() < 1e-6);
    }
}

#[test]
fn motion_directions_are_uniform() {
    let config = SceneConfig::for_canvas(64, 32);
    let mut bins = [0u32; 36];
    let mut scenes = 0;
    let mut seed = 0;
    while scenes < 2000 {
        seed += 1;
        let Ok(scene) = sample_scene(&config, seed) else { continue };
        scenes += 1;
        for layer in &scene.layers[1..] {
            let anchor = [layer.sprite.width() as f64 / 2.0, layer.sprite.height() as f64 / 2.0];
            let (a, b) = (layer.start.apply(anchor).unwrap(), layer.end.apply(anchor).unwrap());
            let deg = (b[1] - a[1]).atan2(b[0] - a[0]).to_degrees().rem_euclid(360.0);
            bins[(deg / 10.0) as usize % 36] += 1;
        }
    }
    let mean = bins.iter().sum::<u32>() as f64 / 36.0;
    for (k, &n) in bins.iter().enumerate() {
        let dev = (n as f64 - mean) / mean;
        assert!(dev.abs() <= 0.2, "bin {k}: {n} vs mean {mean:.1}");
    }
}

#[test]
fn flow_consistency_approximates_exact_occlusion() {
    let config = SceneConfig::for_canvas(128, 64);
    let (mut agree, mut total) = (0u64, 0u64);
    for seed in 0..10 {
        let scene = sample_scene(&config, 500 + seed).unwrap();
        let first = annotate(&scene, 0.0, 1);
        let second = annotate(&scene, 1.0, 1);
        for t in [0.25, 0.5, 0.75] {
            let mid = annotate(&scene, t, 1);
            // Linear motion: F_{0→t} = t F_{0→1} and F_{1→t} = (1 − t) F_{1→0}.
            let estimate = consistency_occlusion(
                &mid.flow_to_first,
                &first.flow_to_second.scaled(t as f32),
                &mid.flow_to_second,
                &second.flow_to_first.scaled((1.0 - t) as f32),
                ConsistencyThreshold::default(),
            )
            .unwrap();
            let exact = mid.visibility.to_occlusion();
            for i in 0..exact.classes().len() {
                if let (Some(a), Some(b)) = (exact.get(i), estimate.get(i)) {
                    total += 1;
                    agree += (a == b) as u64;
                }
            }
        }
    }
    let share = agree as f64 / total as f64;
    assert!(share >= 0.95, "agreement {share:.4}");
}
