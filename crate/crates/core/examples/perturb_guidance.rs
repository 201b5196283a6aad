//! Guidance masks: random perturbation, CutMask, trimaps from a
//! probability map, and the input encodings the network accepts.

use mgmatte::datagen::disk_alpha;
use mgmatte::guidance::{
    binarize, cutmask_random, dilate, encode_guidance, erode, perturb_guidance_with, trimap_from_prob, GuidanceMode,
    GuidanceSource, PerturbConfig, Trimap, TrimapLabel,
};
use mgmatte::matte::RegionMask;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn show(name: &str, m: &RegionMask) {
    println!("{name} ({} px):", m.count());
    for y in (0..m.height()).step_by(3) {
        let row: String = (0..m.width())
            .step_by(2)
            .map(|x| if m.get(y, x) { '#' } else { '.' })
            .collect();
        println!("  {row}");
    }
}

fn show_trimap(t: &Trimap) {
    for y in (0..t.height()).step_by(3) {
        let row: String = (0..t.width())
            .step_by(2)
            .map(|x| match t.get(y, x) {
                TrimapLabel::Foreground => '#',
                TrimapLabel::Unknown => '?',
                TrimapLabel::Background => '.',
            })
            .collect();
        println!("  {row}");
    }
}

fn main() -> mgmatte::Result<()> {
    let alpha = disk_alpha(36, 64, 18.0, 32.0, 11.0, 4.0);
    let mask = binarize(&alpha, 0.5);
    show("binarized at 0.5", &mask);
    show("dilate 7", &dilate(&mask, 7)?);
    show("erode 7", &erode(&mask, 7)?);

    // kernels up to a third of the shape size
    let cfg = PerturbConfig {
        morph_kernel_range: (1, 8),
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2 {
        let (m, draw) = perturb_guidance_with(&alpha, &cfg, &mut rng)?;
        let name = format!(
            "threshold {:.2}, {:?}, dilate {} erode {}",
            draw.threshold, draw.order, draw.dilate_kernel, draw.erode_kernel
        );
        show(&name, &m);
    }
    let (cut, patch) = cutmask_random(&mask, &cfg, &mut rng)?;
    println!("{patch:?}");
    show("cutmask", &cut);

    let trimap = trimap_from_prob(&alpha, 0.95, 0.05, 2)?;
    println!("trimap:");
    show_trimap(&trimap);
    for mode in [GuidanceMode::Trimapfg, GuidanceMode::TrimapSoft] {
        let g = encode_guidance(GuidanceSource::Trimap(&trimap), mode)?;
        let mut levels: Vec<f64> = g.data().to_vec();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        println!("{mode:?} encodes to values {levels:?}");
    }
    Ok(())
}
