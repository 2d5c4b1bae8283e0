//! Timing sweep of both fault models over pack sizes, as CSV.
//!
//! cargo run --release --example scalability -- 8

use mmdiag::bench::{sweep, to_csv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let max: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(6);
    let sizes: Vec<usize> = (1..=max).collect();
    let rows = sweep(&sizes, 1)?;
    print!("{}", to_csv(&rows));
    for pair in rows.chunks(2) {
        let [s, b] = pair else { continue };
        println!(
            "n={}: {} vs {} Boolean variables, boolean/signal time {:.1}x",
            s.n,
            s.bool_var_count,
            b.bool_var_count,
            b.wall_seconds / s.wall_seconds.max(1e-9)
        );
    }
    Ok(())
}
