//! Equal error rate, DET points and min t-DCF on Gaussian toy scores.

use sasv::metrics::{compute_eer, det_points, min_tdcf, AsvScores, CmScores, CostModel};
use sasv::rng::SeededRng;

fn draw(rng: &mut SeededRng, mean: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| mean + rng.gaussian()).collect()
}

fn main() -> sasv::Result<()> {
    let mut rng = SeededRng::new(7, 0);
    let target = draw(&mut rng, 2.0, 2000);
    let nontarget = draw(&mut rng, -2.0, 2000);

    let eer = compute_eer(&target, &nontarget)?;
    println!("EER {:.4} at threshold {:.4} (Gaussian value 0.0228)", eer.eer, eer.threshold);
    let det = det_points(&target[..5], &nontarget[..5])?;
    for p in &det {
        println!("t {:>8.3}  frr {:.2}  far {:.2}", p.threshold, p.frr, p.far);
    }

    let asv = AsvScores {
        target: target.clone(),
        nontarget,
        spoof: draw(&mut rng, 1.0, 2000),
    };
    let cm = CmScores {
        bonafide: draw(&mut rng, 1.5, 4000),
        spoof: draw(&mut rng, -1.5, 2000),
    };
    println!("min t-DCF {:.4}", min_tdcf(&cm, &asv, &CostModel::asvspoof2019_la())?);
    Ok(())
}
