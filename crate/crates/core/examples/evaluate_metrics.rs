//! SAD, MSE, Grad and Conn on a degraded copy of a ground-truth matte,
//! per region and aggregated as in a results table.

use mgmatte::datagen::disk_alpha;
use mgmatte::matte::{AlphaMatte, ImagePlane, MattingSample};
use mgmatte::metrics::{aggregate, evaluate, CorpusRow, MetricRegion, CSV_HEADER};

fn main() -> mgmatte::Result<()> {
    let mut rows = Vec::new();
    for (i, blur) in [1.0, 2.0, 4.0].into_iter().enumerate() {
        let gt = disk_alpha(48, 48, 24.0, 24.0, 12.0, 2.0);
        let pred = disk_alpha(48, 48, 24.5, 23.0, 12.0, 2.0 + blur);
        let fg = ImagePlane::filled(48, 48, 3, 0.8);
        let bg = ImagePlane::filled(48, 48, 3, 0.1);
        let sample = MattingSample {
            image: mgmatte::matte::composite(&gt, &fg, &bg)?,
            unknown_region: Some(mgmatte::datagen::unknown_region(&gt)),
            guidance: AlphaMatte::filled(48, 48, 0.0),
            alpha: gt.clone(),
            foreground: fg,
            background: bg,
            detail_region: None,
            composite_exact: true,
        };
        let reports = evaluate(&pred, &gt, &sample, &[MetricRegion::Whole, MetricRegion::Unknown])?;
        rows.extend(reports.into_iter().map(|report| CorpusRow {
            sample: format!("blur{i}"),
            report,
        }));
    }
    println!("{CSV_HEADER}");
    for r in &rows {
        let m = &r.report;
        println!(
            "{},{},{},{:.5},{:.3},{:.5},{:.5}",
            r.sample,
            m.region,
            m.pixel_count,
            m.sad,
            m.mse_scaled(),
            m.grad,
            m.conn
        );
    }
    for (region, a) in aggregate(&rows) {
        println!(
            "{region:>8}: SAD {:.4}  MSE {:.3}  Grad {:.4}  Conn {:.4}",
            a.sad, a.mse, a.grad, a.conn
        );
    }
    Ok(())
}
