//! The level-weighted training loss on a hand-built prediction pyramid:
//! L1, composition and Laplacian terms per level, restricted to each
//! level's self-guidance mask.

use mgmatte::datagen::disk_alpha;
use mgmatte::losses::{
    composition_loss, l1_loss, laplacian_loss, laplacian_pyramid, total_loss_eval, LossWeights, Supervision,
};
use mgmatte::matte::{composite, ImagePlane, RegionMask};
use mgmatte::prn::self_guidance_from;

fn main() -> mgmatte::Result<()> {
    let gt = disk_alpha(32, 32, 16.0, 16.0, 9.0, 3.0);
    let fg = ImagePlane::from_rgb_fn(32, 32, |y, _| [0.9, y as f64 / 31.0, 0.2]);
    let bg = ImagePlane::from_rgb_fn(32, 32, |_, x| [0.1, 0.3, x as f64 / 31.0]);
    let image = composite(&gt, &fg, &bg)?;
    let coarse = disk_alpha(32, 32, 16.0, 17.0, 10.0, 6.0);
    let middle = disk_alpha(32, 32, 16.0, 16.5, 9.5, 4.0);
    let fine = disk_alpha(32, 32, 16.0, 16.0, 9.0, 3.5);
    let masks = [
        RegionMask::ones(32, 32),
        self_guidance_from(&coarse, 5)?,
        self_guidance_from(&middle, 3)?,
    ];

    for (name, m) in [
        ("l1", l1_loss(&fine, &gt, &masks[2])?),
        ("laplacian", laplacian_loss(&fine, &gt, &masks[2], 4)?),
    ] {
        println!("{name:>12}: {m:.5}");
    }
    println!(
        "{:>12}: {:.5}",
        "composition",
        composition_loss(&fine, &fg, &bg, &image, &masks[2])?
    );
    let bands = laplacian_pyramid(gt.data(), 32, 32, 4)?;
    println!(
        "pyramid: {:?}",
        bands.iter().map(|b| (b.height, b.width)).collect::<Vec<_>>()
    );

    let sup = Supervision {
        gt: &gt,
        fg: &fg,
        bg: &bg,
        image: &image,
    };
    let eval = total_loss_eval(
        [&coarse, &middle, &fine],
        [&masks[0], &masks[1], &masks[2]],
        &sup,
        &LossWeights::default(),
    )?;
    println!("per level {:?}, weighted total {:.5}", eval.per_level, eval.total);
    Ok(())
}
