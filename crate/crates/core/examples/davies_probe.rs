//! Development probe for the inversion routine: accuracy and term counts.

use mtafs_core::davies::davies_survival;
use mtafs_core::quadform::topk_order_weights;
use mtafs_core::stats::{chi2_sf, gamma_sf};
use std::time::Instant;

fn main() {
    // Known value from the CompQuadForm vignette: P(Q > 1) for
    // lambda = (6,3,1), df = (1,1,1) is 0.954247.
    for acc in [1e-4, 1e-6, 1e-9] {
        let out = davies_survival(&[6.0, 3.0, 1.0], &[1.0, 1.0, 1.0], 1.0, acc, 2_000_000);
        println!("3x df1 at acc={acc:e}: {out:?}");
    }

    for acc in [1e-4, 1e-6, 1e-9] {
        for x in [0.3, 2.5, 15.0] {
            let t0 = Instant::now();
            let out = davies_survival(&[1.0], &[1.0], x, acc, 2_000_000);
            let dt = t0.elapsed();
            match out {
                Ok(o) => println!(
                    "chi2_1 x={x} acc={acc:e}: p={:.12} err={:+.2e} terms={} flag={} ({:?})",
                    o.survival,
                    o.survival - chi2_sf(x, 1.0),
                    o.terms,
                    o.round_off_uncertain,
                    dt
                ),
                Err(e) => println!("chi2_1 x={x} acc={acc:e}: {e:?} ({dt:?})"),
            }
        }
    }

    for e in [1usize, 2, 3, 5, 10, 20, 50] {
        let spec = topk_order_weights(e, e).unwrap();
        let lambda: Vec<f64> = spec.components().map(|(w, _)| w).collect();
        let dfs: Vec<f64> = spec.components().map(|(_, d)| d as f64).collect();
        for mult in [0.5, 1.0, 2.0, 4.0] {
            let x = e as f64 * mult;
            let t0 = Instant::now();
            let out = davies_survival(&lambda, &dfs, x, 1e-9, 2_000_000);
            let dt = t0.elapsed();
            match out {
                Ok(o) => println!(
                    "gamma E={e} x={x}: p={:.12} err={:+.2e} terms={} ({:?})",
                    o.survival,
                    o.survival - gamma_sf(x, e as f64),
                    o.terms,
                    dt
                ),
                Err(err) => println!("gamma E={e} x={x}: {err:?} ({dt:?})"),
            }
        }
    }

    // The hot-loop shape: E=2..50 df-2 mixtures at k < E.
    let mut total = std::time::Duration::ZERO;
    let mut calls = 0usize;
    for e in [2usize, 14, 26, 38, 50] {
        for k in 1..=e {
            let spec = topk_order_weights(e, k).unwrap();
            let lambda: Vec<f64> = spec.components().map(|(w, _)| w).collect();
            let dfs: Vec<f64> = spec.components().map(|(_, d)| d as f64).collect();
            let mean: f64 = spec.mean();
            for mult in [0.3, 1.0, 3.0] {
                let t0 = Instant::now();
                let _ = davies_survival(&lambda, &dfs, mean * mult, 1e-9, 2_000_000);
                total += t0.elapsed();
                calls += 1;
            }
        }
    }
    println!("hot-loop shape: {calls} calls in {total:?} ({:?}/call)", total / calls as u32);
}
