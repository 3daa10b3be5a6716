//! Pilot run behind the efficacy thresholds: paired-seed two-phase vs pure
//! random search on multimodal2d, and two-phase on an 8-dimensional sphere
//! for a few box sizes.
//!
//! Usage: `pilot [trials] [seed_base]`

use hopper_cli::compare::{best_of, compare, CompareSettings};
use hopper_cli::objectives::{Builtin, Kind};

const STEPS: u64 = 300;

fn main() {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().map(|a| a.parse().expect("trials")).unwrap_or(50);
    let seed_base: u64 = args.next().map(|a| a.parse().expect("seed_base")).unwrap_or(0);

    let mm = Builtin::new(Kind::Multimodal2d, 2);
    let c = compare(
        &mm,
        CompareSettings {
            steps: STEPS,
            trials,
            seed_base,
            random_fraction: 0.25,
            baseline_random_fraction: 1.0,
        },
    )
    .expect("comparison runs");
    let strict = c.pairs.iter().filter(|p| p.score == 1.0).count();
    let gap = |v: f64| mm.optimum() - v;
    println!("multimodal2d steps={STEPS} trials={trials} seed_base={seed_base}");
    println!(
        "  strict wins {strict}/{trials} ({:.3}), win rate with ties as 0.5 {:.3}",
        strict as f64 / trials as f64,
        c.win_rate
    );
    println!(
        "  two_phase gap mean {:.3e} std {:.3e}",
        gap(c.candidate_mean),
        c.candidate_std
    );
    println!(
        "  random    gap mean {:.3e} std {:.3e}",
        gap(c.baseline_mean),
        c.baseline_std
    );

    for half in [5.12, 2.0, 1.0] {
        let mut sphere = Builtin::new(Kind::Sphere, 8);
        sphere.bounds = (-half, half);
        let mut bests: Vec<f64> = (0..trials as u64)
            .map(|t| best_of(&sphere, STEPS, seed_base + t, 0.25).expect("run"))
            .collect();
        let hits = bests.iter().filter(|&&b| b - sphere.optimum() <= 1e-2).count();
        bests.sort_by(f64::total_cmp);
        println!("sphere dims=8 bounds=[-{half}, {half}] steps={STEPS} trials={trials}");
        println!(
            "  within 1e-2 of optimum: {hits}/{trials} ({:.3})",
            hits as f64 / trials as f64
        );
        println!("  best median {:.3e} max {:.3e}", bests[trials / 2], bests[trials - 1]);
    }
}
