//! Retained activations of ViM and ViT against token count, with the
//! log-log slopes and the extrapolated transformer footprint.
//!
//! ```text
//! cargo run --release --example scaling_bench -- <n>
//! ```

use poremamba::bench::{bench_report, BenchConfig};

fn main() -> poremamba::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(256);
    let report = bench_report(&BenchConfig { n, ..BenchConfig::default() })?;
    print!("{}", report.records_csv());
    for f in &report.fits {
        println!(
            "{}: slope {:.3} ± {:.3} in tokens, {:.3} in patch size",
            f.model, f.tokens.slope, f.tokens.slope_stderr, f.patch.slope
        );
    }
    let e = &report.extrapolation;
    println!(
        "{} at patch {} ({} tokens): {:.1} GB, budget {:.0} GB",
        e.model,
        e.patch,
        e.tokens,
        e.bytes / 1e9,
        e.budget_bytes / 1e9
    );
    Ok(())
}
