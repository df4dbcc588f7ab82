//! Monte Carlo reproduction of the simulation table.
//!
//! cargo run --release --example table3_study -- [iterations] [seed]

use ambig::simulate::run_table3;

fn main() -> ambig::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map_or(Ok(100), |s| s.parse()).expect("iterations must be an integer");
    let seed = args.next().map_or(Ok(42), |s| s.parse()).expect("seed must be an integer");
    let start = std::time::Instant::now();
    let (table, _) = run_table3(iterations, seed, None)?;
    print!("{}", table.to_markdown());
    eprintln!("elapsed: {:.1?}", start.elapsed());
    Ok(())
}
